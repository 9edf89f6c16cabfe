use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use perihelion::ephemeris::{EphemerisTable, PlanetElements};
use perihelion::gr_orbit::{self, propagate_geodesic, propagate_proper_kepler, ProperKeplerOrbit};
use perihelion::integrator::StepControl;
use perihelion::io;
use perihelion::observation::{self, LightTimeMode, ObservedAdvanceConfig};
use perihelion::rcn_orbit::{
    self, advance_per_century_sun, periods_per_century, CenturyConvention, KeplerVariant, RcnOrbit, Scaling,
    WorldlineSample,
};
use perihelion::validation::{self, Options};

#[derive(Debug, Parser, Serialize)]
#[command(name = "perihelion", version, about = "Perihelion advance under the relativistic causal Newton law and GR")]
struct Cli {
    /// Ephemeris TOML file; the built-in table when absent.
    #[arg(long, global = true, env = "PERIHELION_EPHEMERIS")]
    ephemeris: Option<PathBuf>,
    /// Multiply c by this factor everywhere, holding ω and a fixed.
    #[arg(long, global = true, default_value_t = 1.0)]
    c_scale: f64,
    /// Directory for output files and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "lowercase")]
enum Command {
    /// Perihelion advance seen from the Sun.
    Precession(PrecessionArgs),
    /// Write a trajectory CSV.
    Orbit(OrbitArgs),
    /// Advance angle seen from Earth between two Mercury perihelia.
    Observe(ObserveArgs),
    /// Run the acceptance checks.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PrecessionModel {
    Rcn,
    Gr,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Convention {
    WholePeriods,
    EarthYears,
}

impl From<Convention> for CenturyConvention {
    fn from(c: Convention) -> Self {
        match c {
            Convention::WholePeriods => CenturyConvention::WholePeriods,
            Convention::EarthYears => CenturyConvention::EarthYears,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct PrecessionArgs {
    /// Body name or index.
    planet: String,
    #[arg(long, value_enum, default_value = "rcn")]
    model: PrecessionModel,
    /// How many periods make a century.
    #[arg(long, value_enum, default_value = "whole-periods")]
    convention: Convention,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum OrbitModel {
    /// Integrated relativistic Newton law.
    Rcn,
    /// Closed-form relativistic Newton orbit sampled on a uniform grid.
    RcnClosed,
    /// Integrated MTW geodesic in proper time.
    GrGeodesic,
    /// Integrated Newtonian law in proper time.
    ProperKepler,
}

#[derive(Debug, Args, Serialize)]
struct OrbitArgs {
    planet: String,
    #[arg(long, value_enum, default_value = "rcn")]
    model: OrbitModel,
    /// Length of the run in orbital periods.
    #[arg(long, default_value_t = 1.0)]
    span: f64,
    /// CSV file name inside the output directory.
    #[arg(long, default_value = "orbit.csv")]
    output: PathBuf,
    /// Relative tolerance of the integrators.
    #[arg(long, default_value_t = 1e-12)]
    rtol: f64,
    /// Grid points for rcn-closed.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Mode {
    Approx,
    Exact,
}

#[derive(Debug, Args, Serialize)]
struct ObserveArgs {
    #[arg(long = "phi1-0", default_value_t = 0.0, allow_hyphen_values = true)]
    phi1_0: f64,
    #[arg(long = "phi3-0", default_value_t = 0.0, allow_hyphen_values = true)]
    phi3_0: f64,
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    l1: i64,
    #[arg(long, default_value_t = 415, allow_hyphen_values = true)]
    l2: i64,
    #[arg(long, value_enum, default_value = "approx")]
    mode: Mode,
    /// Sweep both perihelion angles over an N×N grid and write sweep.csv.
    #[arg(long, value_name = "N")]
    sweep: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
struct ValidateArgs {
    /// Coarser grids.
    #[arg(long)]
    quick: bool,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a Command,
    config: ResolvedConfig,
    tool_version: &'static str,
    outputs: Vec<String>,
    wall_clock_s: f64,
}

#[derive(Debug, Serialize)]
struct ResolvedConfig {
    ephemeris: String,
    c_scale: f64,
    c_m_per_s: f64,
    out_dir: String,
}

enum Failure {
    Usage(anyhow::Error),
    Checks,
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow::anyhow!(msg.into()))
}

struct Outputs<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn path(&mut self, name: &Path) -> PathBuf {
        self.names.push(name.display().to_string());
        self.dir.join(name)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_table(cli: &Cli) -> Result<EphemerisTable, Failure> {
    let base = match &cli.ephemeris {
        Some(p) => EphemerisTable::load_file(p).map_err(|e| usage(format!("{}: {e}", p.display())))?,
        None => EphemerisTable::load_default(),
    };
    if !(cli.c_scale > 0.0 && cli.c_scale.is_finite()) {
        return Err(usage("--c-scale must be positive"));
    }
    Ok(if cli.c_scale == 1.0 { base } else { base.with_c_scale(cli.c_scale) })
}

fn planet<'t>(table: &'t EphemerisTable, key: &str) -> Result<&'t PlanetElements, Failure> {
    let p = table.find(key).map_err(|e| usage(e.to_string()))?;
    if p.is_sun() {
        return Err(usage(format!("{} has no orbit", p.name)));
    }
    Ok(p)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let start = Instant::now();
    let table = load_table(cli)?;
    std::fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let mut out = Outputs { dir: &cli.out_dir, names: Vec::new() };
    let verdict = match &cli.command {
        Command::Precession(a) => precession(&table, a, &mut out),
        Command::Orbit(a) => orbit(&table, a, &mut out),
        Command::Observe(a) => observe(&table, a, &mut out),
        Command::Validate(a) => validate(&table, a, &mut out),
    };
    // a failed check still leaves a complete record
    if matches!(verdict, Ok(()) | Err(Failure::Checks)) {
        let manifest = RunManifest {
            command: &cli.command,
            config: ResolvedConfig {
                ephemeris: cli.ephemeris.as_ref().map_or_else(|| "builtin".to_string(), |p| p.display().to_string()),
                c_scale: cli.c_scale,
                c_m_per_s: table.c(),
                out_dir: cli.out_dir.display().to_string(),
            },
            tool_version: env!("CARGO_PKG_VERSION"),
            outputs: out.names.clone(),
            wall_clock_s: start.elapsed().as_secs_f64(),
        };
        io::write_json(cli.out_dir.join("manifest.json"), &manifest).map_err(anyhow::Error::from)?;
    }
    verdict
}

#[derive(Serialize)]
struct PrecessionReport {
    planet: String,
    model: PrecessionModel,
    convention: Convention,
    #[serde(flatten)]
    summary: rcn_orbit::PrecessionSummary,
}

fn precession(table: &EphemerisTable, a: &PrecessionArgs, out: &mut Outputs) -> Result<(), Failure> {
    let p = planet(table, &a.planet)?;
    let c = table.c();
    let n = periods_per_century(table, p, a.convention.into()).map_err(anyhow::Error::from)?;
    let summary = match a.model {
        PrecessionModel::Rcn => {
            let o = RcnOrbit::from_elements(p, c, KeplerVariant::Elliptic).map_err(anyhow::Error::from)?;
            advance_per_century_sun(&o, n)
        }
        PrecessionModel::Gr => {
            gr_orbit::gr_precession(p, c, KeplerVariant::Classical, n).map_err(anyhow::Error::from)?
        }
    };
    println!("planet            {}", p.name);
    println!("gamma             {:.15}", summary.gamma);
    println!("1 - gamma         {:.6e}", summary.one_minus_gamma);
    println!("arcsec/period     {:.6e}", summary.arcsec_per_period);
    println!("periods/century   {}", summary.n_periods);
    println!("arcsec/century    {:.4}", summary.arcsec_per_century);
    let report = PrecessionReport { planet: p.name.clone(), model: a.model, convention: a.convention, summary };
    io::write_json(out.path(Path::new("precession.json")), &report).map_err(anyhow::Error::from)?;
    Ok(())
}

fn orbit(table: &EphemerisTable, a: &OrbitArgs, out: &mut Outputs) -> Result<(), Failure> {
    if !(a.span > 0.0 && a.span.is_finite()) {
        return Err(usage("--span must be positive"));
    }
    if !(a.rtol > 0.0) {
        return Err(usage("--rtol must be positive"));
    }
    let p = planet(table, &a.planet)?;
    let c = table.c();
    let ctrl = StepControl::with_tolerances(a.rtol, a.rtol * 1e-2);
    let samples: Vec<WorldlineSample> = match a.model {
        OrbitModel::Rcn | OrbitModel::RcnClosed => {
            let o = RcnOrbit::from_elements(p, c, KeplerVariant::Elliptic).map_err(anyhow::Error::from)?;
            let span = a.span * o.period();
            if matches!(a.model, OrbitModel::RcnClosed) {
                let n = a.samples.max(2);
                (0..n).map(|k| o.state_at_time(span * k as f64 / (n - 1) as f64)).collect()
            } else {
                let run = rcn_orbit::propagate(&o.state_at_time(0.0), Scaling::for_orbit(&o), span, &ctrl)
                    .map_err(anyhow::Error::from)?;
                run.samples()
            }
        }
        OrbitModel::GrGeodesic => {
            let o = ProperKeplerOrbit::from_elements(p, c, KeplerVariant::Classical).map_err(anyhow::Error::from)?;
            let (x, w) = o.state_at_tau(0.0);
            let start = WorldlineSample::new(0.0, x, w / o.dt_dtau(x.norm(), c));
            let run = propagate_geodesic(&start, o.mu, c, o.a, 1.0 / o.mean_motion(), a.span * o.period(), &ctrl)
                .map_err(anyhow::Error::from)?;
            (0..run.len()).map(|i| run.sample(i).1).collect()
        }
        OrbitModel::ProperKepler => {
            let o = ProperKeplerOrbit::from_elements(p, c, KeplerVariant::Classical).map_err(anyhow::Error::from)?;
            let path = propagate_proper_kepler(&o, a.span * o.period(), &ctrl).map_err(anyhow::Error::from)?;
            // coordinate time along the path, dt/dτ from the metric
            path.iter()
                .map(|(tau, x, w)| {
                    let t = o.t_of_tau(*tau, c)?;
                    Ok(WorldlineSample::new(t, *x, *w / o.dt_dtau(x.norm(), c)))
                })
                .collect::<Result<_, gr_orbit::GrError>>()
                .map_err(anyhow::Error::from)?
        }
    };
    let (rmin, rmax) = samples.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), s| (lo.min(s.radius()), hi.max(s.radius())));
    println!("planet   {}", p.name);
    println!("rows     {}", samples.len());
    println!("t_end_s  {:.6e}", samples.last().map_or(0.0, |s| s.t));
    println!("r_min_m  {rmin:.9e}");
    println!("r_max_m  {rmax:.9e}");
    io::write_trajectory_csv(out.path(&a.output), &samples).map_err(anyhow::Error::from)?;
    Ok(())
}

fn observe(table: &EphemerisTable, a: &ObserveArgs, out: &mut Outputs) -> Result<(), Failure> {
    let cfg = ObservedAdvanceConfig {
        phi1_0: a.phi1_0,
        phi3_0: a.phi3_0,
        l1: a.l1,
        l2: a.l2,
        mode: match a.mode {
            Mode::Approx => LightTimeMode::Approx,
            Mode::Exact => LightTimeMode::Exact,
        },
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    if let Some(n) = a.sweep {
        if n == 0 {
            return Err(usage("--sweep needs N > 0"));
        }
        let points = observation::sweep(table, n, &cfg).map_err(anyhow::Error::from)?;
        let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.alpha_deg), hi.max(p.alpha_deg)));
        println!("sweep {n}x{n}: alpha from {lo:.3} to {hi:.3} deg");
        io::write_sweep_csv(out.path(Path::new("sweep.csv")), &points).map_err(anyhow::Error::from)?;
        return Ok(());
    }
    let rep = observation::advance_angle(&cfg, table).map_err(anyhow::Error::from)?;
    println!("{:<6} {:>14} {:>12} {:>10} {:>8} {:>12}", "l", "t_mercury_s", "earth_xi", "r3/a3", "winding", "angle_rad");
    for ep in &rep.epochs {
        println!(
            "{:<6} {:>14.6e} {:>12.5} {:>10.5} {:>8} {:>12.5}",
            ep.l, ep.mercury_time_s, ep.earth_xi, ep.earth_radius_ratio, ep.earth_winding, ep.earth_reduced_angle_rad
        );
    }
    println!("alpha            {:.3} deg ({:.1} arcsec)", rep.alpha_deg, rep.alpha_arcsec);
    println!("alpha expanded   {:.3} deg", rep.alpha_expanded_rad.to_degrees());
    println!("centuries        {:.5}", rep.centuries);
    println!("alpha/century    {:.5} deg", rep.alpha_deg_per_century);
    println!("century window   {}", if rep.window_ok { "ok" } else { "not satisfied" });
    io::write_json(out.path(Path::new("advance.json")), &rep).map_err(anyhow::Error::from)?;
    Ok(())
}

fn validate(table: &EphemerisTable, a: &ValidateArgs, out: &mut Outputs) -> Result<(), Failure> {
    let reports = validation::run_all(table, Options { quick: a.quick });
    for r in &reports {
        print!("{r}");
    }
    let passed = reports.iter().filter(|r| r.passed()).count();
    println!("{passed}/{} criteria pass", reports.len());
    io::write_json(out.path(Path::new("validation.json")), &reports).map_err(anyhow::Error::from)?;
    if passed == reports.len() {
        Ok(())
    } else {
        Err(Failure::Checks)
    }
}
