//! File formats: normal-flow CSV, JSON documents and atomic writes.
//!
//! Flow CSV columns are `t,x_px,y_px,nx_cal,ny_cal` followed by any of
//! `inliers`, `rms` (extraction diagnostics) and `depth` (simulated ground
//! truth, required by the six-DoF solver). Columns are matched by header name.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use nalgebra::Vector2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Intrinsics, NormalFlowObs};
use crate::normal_flow::FlowSample;

/// One CSV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub t: f64,
    pub x_px: f64,
    pub y_px: f64,
    pub nx_cal: f64,
    pub ny_cal: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inliers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<f64>,
}

impl From<&FlowSample> for FlowRecord {
    fn from(s: &FlowSample) -> Self {
        Self {
            t: s.obs.t,
            x_px: s.x_px,
            y_px: s.y_px,
            nx_cal: s.obs.n.x,
            ny_cal: s.obs.n.y,
            inliers: Some(s.inliers),
            rms: Some(s.rms),
            depth: None,
        }
    }
}

/// Number formatting for CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// Shortest representation that round-trips exactly.
    Full,
    /// Rounded to nine significant digits.
    Significant9,
}

impl Precision {
    pub fn format(self, v: f64) -> String {
        match self {
            Precision::Full => v.to_string(),
            Precision::Significant9 => {
                let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
                rounded.to_string()
            }
        }
    }
}

/// Writes flow records; the optional columns present in the first record
/// decide the header.
pub fn write_flow_csv<W: Write>(w: W, records: &[FlowRecord], precision: Precision) -> Result<()> {
    let with_diag = records.first().is_some_and(|r| r.inliers.is_some());
    let with_depth = records.first().is_some_and(|r| r.depth.is_some());
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["t", "x_px", "y_px", "nx_cal", "ny_cal"];
    if with_diag {
        header.extend(["inliers", "rms"]);
    }
    if with_depth {
        header.push("depth");
    }
    let csv_err = |e: csv::Error| Error::Numerical(format!("csv write: {e}"));
    out.write_record(&header).map_err(csv_err)?;
    for r in records {
        let mut row: Vec<String> = [r.t, r.x_px, r.y_px, r.nx_cal, r.ny_cal]
            .iter()
            .map(|&v| precision.format(v))
            .collect();
        if with_diag {
            row.push(r.inliers.unwrap_or(0).to_string());
            row.push(precision.format(r.rms.unwrap_or(f64::NAN)));
        }
        if with_depth {
            row.push(precision.format(r.depth.unwrap_or(f64::NAN)));
        }
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::Numerical(format!("csv flush: {e}")))?;
    Ok(())
}

/// Reads flow records; `path` only labels errors.
pub fn read_flow_csv<R: Read>(r: R, path: &Path) -> Result<Vec<FlowRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let format = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| format(format!("header: {e}")))?
        .clone();
    for required in ["t", "x_px", "y_px", "nx_cal", "ny_cal"] {
        if !headers.iter().any(|h| h == required) {
            return Err(format(format!("missing column `{required}`")));
        }
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<FlowRecord>().enumerate() {
        // Line 1 is the header.
        let rec = row.map_err(|e| format(format!("line {}: {e}", i + 2)))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn read_flow_file(path: &Path) -> Result<Vec<FlowRecord>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_flow_csv(BufReader::new(f), path)
}

/// Converts records into calibrated observations; also returns the depth
/// column when every row has one.
pub fn records_to_observations(records: &[FlowRecord], k: &Intrinsics) -> Result<(Vec<NormalFlowObs>, Option<Vec<f64>>)> {
    let mut obs = Vec::with_capacity(records.len());
    for r in records {
        let (x, _) = k.pixel_to_calibrated(Vector2::new(r.x_px, r.y_px), Vector2::zeros())?;
        obs.push(NormalFlowObs::new(x, Vector2::new(r.nx_cal, r.ny_cal), r.t)?);
    }
    let depths: Option<Vec<f64>> = records.iter().map(|r| r.depth).collect();
    Ok((obs, depths.filter(|d| !d.is_empty())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes through a temporary file in the destination directory and renames
/// it into place, so readers never observe a partial file.
pub fn write_atomic(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        f(&mut buf)?;
        buf.flush().map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Error::Numerical(format!("json: {e}")))?;
        writeln!(w).map_err(|e| Error::io(path, e))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: usize) -> FlowRecord {
        FlowRecord {
            t: 0.1 + i as f64 * 1e-3,
            x_px: 10.0 + i as f64,
            y_px: 20.0,
            nx_cal: 0.123456789123,
            ny_cal: -1.0 / 3.0,
            inliers: None,
            rms: None,
            depth: Some(2.0 + i as f64 / 7.0),
        }
    }

    #[test]
    fn full_precision_round_trip() {
        let recs: Vec<_> = (0..5).map(record).collect();
        let mut buf = Vec::new();
        write_flow_csv(&mut buf, &recs, Precision::Full).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x_px,y_px,nx_cal,ny_cal,depth\n"));
        let back = read_flow_csv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn nine_digits() {
        assert_eq!(Precision::Significant9.format(0.123456789123), "0.123456789");
        assert_eq!(Precision::Significant9.format(120.0), "120");
        assert_eq!(Precision::Significant9.format(-1.0 / 3.0), "-0.333333333");
    }

    #[test]
    fn extraction_header() {
        let mut r = record(0);
        r.depth = None;
        r.inliers = Some(42);
        r.rms = Some(1e-7);
        let mut buf = Vec::new();
        write_flow_csv(&mut buf, &[r], Precision::Significant9).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x_px,y_px,nx_cal,ny_cal,inliers,rms\n"));
        let back = read_flow_csv(&buf[..], Path::new("mem")).unwrap();
        assert_eq!(back[0].inliers, Some(42));
        assert_eq!(back[0].depth, None);
    }

    #[test]
    fn errors_name_path_and_line() {
        let err = read_flow_csv("t,x_px,y_px,nx_cal\n".as_bytes(), Path::new("a.csv")).unwrap_err();
        assert!(err.to_string().contains("a.csv") && err.to_string().contains("ny_cal"));
        let err = read_flow_csv("t,x_px,y_px,nx_cal,ny_cal\n0,1,2,3,4\n0,1,x,3,4\n".as_bytes(), Path::new("b.csv")).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        write_json_atomic(&p, &vec![1, 2, 3]).unwrap();
        let v: Vec<i32> = read_json(&p).unwrap();
        assert_eq!(v, vec![1, 2, 3]);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
