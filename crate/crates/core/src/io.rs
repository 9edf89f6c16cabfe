//! File outputs: trajectory and sweep CSV, JSON reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::observation::SweepPoint;
use crate::rcn_orbit::WorldlineSample;
use crate::{Error, Result};

/// One trajectory row. Column names carry units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t_s: f64,
    pub x_m: f64,
    pub y_m: f64,
    pub z_m: f64,
    pub vx_m_per_s: f64,
    pub vy_m_per_s: f64,
    pub vz_m_per_s: f64,
    pub r_m: f64,
    pub phi_rad: f64,
}

impl From<&WorldlineSample> for TrajectoryRow {
    fn from(s: &WorldlineSample) -> Self {
        TrajectoryRow {
            t_s: s.t,
            x_m: s.x.x,
            y_m: s.x.y,
            z_m: s.x.z,
            vx_m_per_s: s.v.x,
            vy_m_per_s: s.v.y,
            vz_m_per_s: s.v.z,
            r_m: s.radius(),
            phi_rad: s.angle(),
        }
    }
}

impl TrajectoryRow {
    pub fn sample(&self) -> WorldlineSample {
        WorldlineSample::new(
            self.t_s,
            Vector3::new(self.x_m, self.y_m, self.z_m),
            Vector3::new(self.vx_m_per_s, self.vy_m_per_s, self.vz_m_per_s),
        )
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    Ok(BufWriter::new(f))
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    Ok(())
}

pub fn write_trajectory_csv(path: impl AsRef<Path>, samples: &[WorldlineSample]) -> Result<()> {
    write_rows(path.as_ref(), samples.iter().map(TrajectoryRow::from))
}

pub fn read_trajectory_csv(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<TrajectoryRow>, _>>()?;
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SweepRow {
    phi1_0_rad: f64,
    phi3_0_rad: f64,
    alpha_deg: f64,
}

/// Sweep grid as CSV (phi1_0_rad, phi3_0_rad, alpha_deg).
pub fn write_sweep_csv(path: impl AsRef<Path>, points: &[SweepPoint]) -> Result<()> {
    write_rows(
        path.as_ref(),
        points.iter().map(|p| SweepRow { phi1_0_rad: p.phi1_0_rad, phi3_0_rad: p.phi3_0_rad, alpha_deg: p.alpha_deg }),
    )
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|source| Error::Io { path: path.display().to_string(), source })
}
