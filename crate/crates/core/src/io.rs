//! Persistence of measurement datasets and small file helpers.
//!
//! JSON numbers are written in shortest round-trip form, so a dataset read
//! back is bit-identical to the one written. CSV values use 17 significant
//! digits.

use std::fs;
use std::path::Path;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward::DtnRecord;
use crate::grid::Grid;

pub const DATASET_VERSION: u32 = 1;
pub const MEASUREMENT_CONVENTION: &str = "raw nodal values of A^s u on O2 nodes, no quadrature weights";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RecordJson {
    excitation_id: usize,
    omega: f64,
    re: Vec<f64>,
    im: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct DatasetJson {
    schema_version: u32,
    fingerprint: String,
    measurement: String,
    o2_nodes: Vec<usize>,
    records: Vec<RecordJson>,
}

/// Measurements tagged with the fingerprint of the generating configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct DtnDataset {
    pub fingerprint: String,
    pub o2_nodes: Vec<usize>,
    pub records: Vec<DtnRecord>,
}

impl DtnDataset {
    pub fn new(fingerprint: impl Into<String>, grid: &Grid, records: Vec<DtnRecord>) -> Self {
        DtnDataset {
            fingerprint: fingerprint.into(),
            o2_nodes: grid.o2_nodes().to_vec(),
            records,
        }
    }

    /// Records of one excitation, sorted by frequency.
    pub fn excitation(&self, id: usize) -> Vec<DtnRecord> {
        let mut out: Vec<DtnRecord> = self
            .records
            .iter()
            .filter(|r| r.excitation_id == id)
            .cloned()
            .collect();
        out.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        out
    }

    pub fn excitation_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.records.iter().map(|r| r.excitation_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    pub fn to_json(&self) -> Result<String> {
        let json = DatasetJson {
            schema_version: DATASET_VERSION,
            fingerprint: self.fingerprint.clone(),
            measurement: MEASUREMENT_CONVENTION.into(),
            o2_nodes: self.o2_nodes.clone(),
            records: self
                .records
                .iter()
                .map(|r| RecordJson {
                    excitation_id: r.excitation_id,
                    omega: r.omega,
                    re: r.measurement.iter().map(|z| z.re).collect(),
                    im: r.measurement.iter().map(|z| z.im).collect(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&json)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let json: DatasetJson = serde_json::from_str(text)?;
        if json.schema_version != DATASET_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported dataset schema version {}",
                json.schema_version
            )));
        }
        let width = json.o2_nodes.len();
        let records = json
            .records
            .into_iter()
            .map(|r| {
                if r.re.len() != width || r.im.len() != width {
                    return Err(Error::InvalidInput(format!(
                        "record for excitation {} at omega {} has the wrong length",
                        r.excitation_id, r.omega
                    )));
                }
                Ok(DtnRecord {
                    excitation_id: r.excitation_id,
                    omega: r.omega,
                    measurement: DVector::from_iterator(
                        width,
                        r.re.iter().zip(&r.im).map(|(&a, &b)| Complex64::new(a, b)),
                    ),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DtnDataset {
            fingerprint: json.fingerprint,
            o2_nodes: json.o2_nodes,
            records,
        })
    }

    /// One row per (excitation, frequency, O2 node).
    pub fn to_csv(&self, grid: &Grid) -> String {
        let mut out = String::from("excitation_id,omega,node,x,y,re,im\n");
        for r in &self.records {
            for (k, &node) in self.o2_nodes.iter().enumerate() {
                let x = grid.node(node);
                let z = r.measurement[k];
                out.push_str(&format!(
                    "{},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e}\n",
                    r.excitation_id, r.omega, node, x[0], x[1], z.re, z.im
                ));
            }
        }
        out
    }

    pub fn write(&self, grid: &Grid, dir: &Path, stem: &str) -> Result<()> {
        write_text(&dir.join(format!("{stem}.json")), &self.to_json()?)?;
        write_text(&dir.join(format!("{stem}.csv")), &self.to_csv(grid))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json(&read_text(path)?)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{GridSpec, RegionSpec};

    #[test]
    fn dataset_round_trip_is_exact() {
        let grid = Grid::build(&GridSpec {
            dim: 1,
            box_halfwidth: 2.0,
            h: 0.25,
            omega: RegionSpec::interval(-1.0, 1.0),
            o1: RegionSpec::interval(-2.5, -1.0),
            o2: RegionSpec::interval(1.0, 2.5),
        })
        .unwrap();
        let n = grid.o2_nodes().len();
        let vals = [0.1, 1.0 / 3.0, -2.0f64.sqrt(), 1e-300, 6.02214076e23, f64::EPSILON];
        let records = (0..3)
            .map(|k| DtnRecord {
                excitation_id: k,
                omega: 0.1 * (k as f64 + 1.0) / 3.0,
                measurement: DVector::from_fn(n, |i, _| {
                    Complex64::new(vals[(i + k) % vals.len()], -vals[(i + 2 * k + 1) % vals.len()])
                }),
            })
            .collect();
        let ds = DtnDataset::new("abc", &grid, records);
        let back = DtnDataset::from_json(&ds.to_json().unwrap()).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.records.iter().zip(&ds.records) {
            for (x, y) in a.measurement.iter().zip(b.measurement.iter()) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
        let csv = ds.to_csv(&grid);
        assert_eq!(csv.lines().count(), 1 + 3 * n);
    }
}
