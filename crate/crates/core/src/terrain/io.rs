//! Text formats: ASCII point clouds and normal-map CSV.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::Vector3;

use super::map::NormalMap;
use super::{PointCloud, TerrainError};

/// Parses one `x y z` triple per line. Blank lines and `#` comments are
/// skipped.
pub fn read_ascii(reader: impl BufRead) -> Result<PointCloud, TerrainError> {
    let mut points = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let parse_err = |message: String| TerrainError::Parse { line: n + 1, message };
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 values, found {}", fields.len())));
        }
        let mut xyz = [0.0; 3];
        for (v, f) in xyz.iter_mut().zip(&fields) {
            *v = f.parse::<f64>().map_err(|e| parse_err(format!("`{f}`: {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("non-finite value `{f}`")));
            }
        }
        points.push(Vector3::from(xyz));
    }
    PointCloud::new(points)
}

pub fn read_ascii_file(path: impl AsRef<Path>) -> Result<PointCloud, TerrainError> {
    let file = std::fs::File::open(path)?;
    read_ascii(std::io::BufReader::new(file))
}

pub fn write_ascii(cloud: &PointCloud, mut w: impl Write) -> std::io::Result<()> {
    for p in cloud.points() {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}

/// Writes `ix,iy,nx,ny,nz,count`, one row per cell in key order.
pub fn write_map_csv(map: &NormalMap, mut w: impl Write) -> std::io::Result<()> {
    writeln!(w, "ix,iy,nx,ny,nz,count")?;
    for ((ix, iy), c) in map.cells() {
        writeln!(w, "{ix},{iy},{},{},{},{}", c.normal.x, c.normal.y, c.normal.z, c.sample_count)?;
    }
    Ok(())
}
