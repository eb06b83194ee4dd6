//! Window-pair export: a long-format CSV plus a JSON manifest.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::windows::{Decimation, WindowPair};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowManifest {
    pub history_len: usize,
    pub horizon: usize,
    pub stride: usize,
    pub split: String,
    pub decimation: Option<Decimation>,
    pub n_windows: usize,
    pub channels: Vec<String>,
}

/// Writes `windows.csv` (one row per window, part and step) and
/// `manifest.json` into `dir`.
pub fn export_windows(pairs: &[WindowPair], manifest: &WindowManifest, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("windows.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| Error::data(format!("{}: {e}", csv_path.display())))?;
    let csv_err = |e: csv::Error| Error::data(format!("{}: {e}", csv_path.display()));
    let mut header = vec!["window".to_string(), "start_index".into(), "part".into(), "step".into()];
    header.extend(manifest.channels.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for (i, p) in pairs.iter().enumerate() {
        for (part, t) in [("H", &p.history), ("F", &p.future)] {
            let (rows, _) = t.dims2()?;
            for r in 0..rows {
                let mut rec = vec![i.to_string(), p.start_index.to_string(), part.to_string(), r.to_string()];
                rec.extend(t.row(r).iter().map(|v| v.to_string()));
                w.write_record(&rec).map_err(csv_err)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    let manifest_path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::data(e.to_string()))?;
    fs::write(&manifest_path, json).map_err(|e| Error::io(&manifest_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::windows::make_windows;
    use crate::numerics::RealTensor;

    #[test]
    fn export_writes_both_files() {
        let v = RealTensor::from_fn(&[10, 2], |i| i as f64);
        let pairs = make_windows(&v, 4, 2, 2).unwrap();
        let manifest = WindowManifest {
            history_len: 4,
            horizon: 2,
            stride: 2,
            split: "train".into(),
            decimation: None,
            n_windows: pairs.len(),
            channels: vec!["a".into(), "b".into()],
        };
        let dir = tempfile::tempdir().unwrap();
        export_windows(&pairs, &manifest, dir.path()).unwrap();
        let csv = fs::read_to_string(dir.path().join("windows.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1 + pairs.len() * 6);
        assert!(csv.starts_with("window,start_index,part,step,a,b"));
        let back: WindowManifest =
            serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(back, manifest);
    }
}
