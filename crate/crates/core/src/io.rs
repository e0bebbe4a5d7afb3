//! File formats: geometry and snapshot CSV, scenario TOML, result JSON.

use crate::error::{DoaError, Result};
use crate::geometry::ArrayGeometry;
use crate::poly::RootSet;
use crate::simulate::Scenario;
use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;
use std::fs;
use std::io::Write;
use std::path::Path;

/// Version of the JSON result layout.
pub const SCHEMA_VERSION: u32 = 1;

fn parse_err(path: &Path, line: usize, msg: impl std::fmt::Display) -> DoaError {
    DoaError::Parse(format!("{}:{}: {}", path.display(), line, msg))
}

/// Reads two-column numeric CSV; a non-numeric first row is taken as a header.
fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(i + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != 2 {
            return Err(parse_err(
                path,
                line,
                format!("expected 2 columns, found {}", rec.len()),
            ));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(a), Ok(b)) => out.push((a, b)),
            _ if out.is_empty() && i == 0 => continue,
            _ => {
                return Err(parse_err(
                    path,
                    line,
                    format!("non-numeric row `{},{}`", &rec[0], &rec[1]),
                ))
            }
        }
    }
    Ok(out)
}

fn with_path(path: &Path, e: std::io::Error) -> DoaError {
    DoaError::Io(std::io::Error::new(
        e.kind(),
        format!("{}: {e}", path.display()),
    ))
}

fn csv_err(path: &Path, e: csv::Error) -> DoaError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => with_path(path, io),
        other => DoaError::Parse(format!("{}: {:?}", path.display(), other)),
    }
}

/// Sensor positions as `x,y` rows in wavelengths.
pub fn read_geometry_csv(path: &Path) -> Result<ArrayGeometry> {
    let pts = read_pairs(path)?;
    if pts.is_empty() {
        return Err(parse_err(path, 0, "no sensor positions"));
    }
    ArrayGeometry::from_xy(&pts)
}

fn commented_writer(path: &Path, comment: &str) -> Result<csv::Writer<fs::File>> {
    let mut f = fs::File::create(path).map_err(|e| with_path(path, e))?;
    for line in comment.lines() {
        writeln!(f, "# {line}")?;
    }
    Ok(csv::Writer::from_writer(f))
}

/// Sensor positions as `x,y`; `comment` lines are written first, prefixed by `#`.
pub fn write_geometry_csv(path: &Path, geometry: &ArrayGeometry, comment: &str) -> Result<()> {
    let mut w = commented_writer(path, comment)?;
    w.write_record(["x", "y"]).map_err(|e| csv_err(path, e))?;
    for s in geometry.sensors() {
        let (x, y) = s.xy();
        w.serialize((x, y)).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Snapshot as `re,im` rows, one per sensor.
pub fn read_snapshot_csv(path: &Path) -> Result<DVector<Complex64>> {
    let pts = read_pairs(path)?;
    if pts.is_empty() {
        return Err(parse_err(path, 0, "empty snapshot"));
    }
    Ok(DVector::from_iterator(
        pts.len(),
        pts.into_iter().map(|(re, im)| Complex64::new(re, im)),
    ))
}

pub fn write_snapshot_csv(path: &Path, y: &DVector<Complex64>, comment: &str) -> Result<()> {
    let mut w = commented_writer(path, comment)?;
    w.write_record(["re", "im"]).map_err(|e| csv_err(path, e))?;
    for v in y.iter() {
        w.serialize((v.re, v.im)).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes serializable rows with a header taken from the field names.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T], comment: &str) -> Result<()> {
    let mut w = commented_writer(path, comment)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct RootRow {
    re: f64,
    im: f64,
    modulus: f64,
    distance_from_circle: f64,
    angle_deg: f64,
}

/// Every root with its distance from the unit circle.
pub fn write_roots_csv(path: &Path, roots: &RootSet, comment: &str) -> Result<()> {
    let rows: Vec<RootRow> = roots
        .roots
        .iter()
        .map(|&(re, im)| {
            let modulus = re.hypot(im);
            RootRow {
                re,
                im,
                modulus,
                distance_from_circle: (modulus - 1.0).abs(),
                angle_deg: im.atan2(re).to_degrees(),
            }
        })
        .collect();
    write_rows(path, &rows, comment)
}

#[derive(Debug, Serialize)]
struct ProfileRow {
    angle_deg: f64,
    magnitude: f64,
    candidate: bool,
}

/// `(angle, |x|)` for every dictionary entry; `candidate` marks root angles.
pub fn write_profile_csv(
    path: &Path,
    profile: &[(f64, f64)],
    num_candidates: usize,
    comment: &str,
) -> Result<()> {
    let rows: Vec<ProfileRow> = profile
        .iter()
        .enumerate()
        .map(|(i, &(a, m))| ProfileRow {
            angle_deg: a.to_degrees(),
            magnitude: m,
            candidate: i < num_candidates,
        })
        .collect();
    write_rows(path, &rows, comment)
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| with_path(path, e))?;
    toml::from_str(&text).map_err(|e| DoaError::Parse(format!("{}: {}", path.display(), e)))
}

pub fn write_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    let text = toml::to_string_pretty(scenario).map_err(|e| DoaError::Parse(e.to_string()))?;
    fs::write(path, text).map_err(|e| with_path(path, e))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| with_path(path, e))?;
    serde_json::to_writer_pretty(&mut f, value).map_err(|e| DoaError::Parse(e.to_string()))?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::make_uca;

    #[test]
    fn geometry_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let g = make_uca(7, 1.25).unwrap();
        write_geometry_csv(&path, &g, "config {\"m\": 7}\nsecond line").unwrap();
        assert!(fs::read_to_string(&path).unwrap().starts_with("# config"));
        let back = read_geometry_csv(&path).unwrap();
        assert_eq!(back.len(), 7);
        for (a, b) in g.sensors().iter().zip(back.sensors()) {
            assert!((a.radius() - b.radius()).abs() < 1e-12);
            assert!(crate::angle::circ_dist_rad(a.azimuth(), b.azimuth()) < 1e-12);
        }
    }

    #[test]
    fn headerless_and_commented_input() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("y.csv");
        fs::write(&path, "# snapshot\n1.0, -2.0\n\n0.5,0\n").unwrap();
        let y = read_snapshot_csv(&path).unwrap();
        assert_eq!(y.len(), 2);
        assert_eq!(y[0], Complex64::new(1.0, -2.0));
    }

    #[test]
    fn malformed_rows_are_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "x,y\n1,2\n3,abc\n").unwrap();
        assert!(matches!(read_geometry_csv(&path), Err(DoaError::Parse(_))));
        fs::write(&path, "1,2,3\n").unwrap();
        assert!(matches!(read_geometry_csv(&path), Err(DoaError::Parse(_))));
        assert!(matches!(
            read_geometry_csv(&dir.path().join("missing.csv")),
            Err(DoaError::Io(_))
        ));
    }
}
