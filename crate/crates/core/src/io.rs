//! File formats: JSON-lines peak lists and CSV binary matrices.
//!
//! The matrix CSV has a header row `id,group,<mz_1>,...,<mz_L>` where the m/z
//! abscissas are written with 17 significant digits, followed by one row per
//! spectrum with 0/1 cells. Reading a matrix written by this module and
//! writing it again reproduces the bytes exactly.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::fmt_f64;
use crate::spectra::{BinaryDataset, PeakSpectrum, ReferenceGrid};

#[derive(Serialize, Deserialize)]
struct PeakRecord {
    id: String,
    group: String,
    peaks: Vec<f64>,
}

/// Reads spectra from a JSON-lines stream, one object per line:
/// `{"id": str, "group": str, "peaks": [float, ...]}`.
pub fn read_peaks_jsonl<R: Read>(reader: R) -> Result<Vec<PeakSpectrum>> {
    let reader = BufReader::new(reader);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PeakRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("line {}: {e}", lineno + 1)))?;
        out.push(PeakSpectrum::new(rec.id, rec.group, rec.peaks)?);
    }
    Ok(out)
}

pub fn read_peaks_file(path: impl AsRef<Path>) -> Result<Vec<PeakSpectrum>> {
    let file = std::fs::File::open(path.as_ref())?;
    read_peaks_jsonl(file)
}

/// Binary matrix holding every group of a study: one row per spectrum with
/// its id and group label, over a shared site list.
#[derive(Clone, Debug, PartialEq)]
pub struct PeakMatrix {
    pub mz: Vec<f64>,
    pub site_index: Vec<usize>,
    pub ids: Vec<String>,
    pub groups: Vec<String>,
    pub rows: Vec<Vec<u8>>,
}

impl PeakMatrix {
    /// Binarizes a set of spectra (all groups together) against a grid.
    pub fn from_spectra(grid: &ReferenceGrid, spectra: &[PeakSpectrum]) -> Self {
        PeakMatrix {
            mz: grid.sites().to_vec(),
            site_index: (0..grid.len()).collect(),
            ids: spectra.iter().map(|s| s.id.clone()).collect(),
            groups: spectra.iter().map(|s| s.group.clone()).collect(),
            rows: spectra.iter().map(|s| grid.binarize(s)).collect(),
        }
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.mz.len()
    }

    /// Distinct group labels in first-appearance order.
    pub fn group_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = Vec::new();
        for g in &self.groups {
            if !labels.contains(g) {
                labels.push(g.clone());
            }
        }
        labels
    }

    /// Extracts the rows of one group as a modeling dataset.
    pub fn select_group(&self, label: &str) -> Result<BinaryDataset> {
        let mut ids = Vec::new();
        let mut rows = Vec::new();
        for i in 0..self.rows.len() {
            if self.groups[i] == label {
                ids.push(self.ids[i].clone());
                rows.push(self.rows[i].clone());
            }
        }
        if rows.is_empty() {
            return Err(Error::domain(format!("no rows with group label `{label}`")));
        }
        BinaryDataset::new(label, ids, self.mz.clone(), self.site_index.clone(), rows)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["id".to_string(), "group".to_string()];
        header.extend(self.mz.iter().map(|&m| fmt_f64(m)));
        w.write_record(&header)
            .map_err(|e| Error::format(e.to_string()))?;
        for i in 0..self.rows.len() {
            let mut rec = vec![self.ids[i].clone(), self.groups[i].clone()];
            rec.extend(self.rows[i].iter().map(|&b| b.to_string()));
            w.write_record(&rec).map_err(|e| Error::format(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_reader(reader);
        let header = r
            .headers()
            .map_err(|e| Error::format(e.to_string()))?
            .clone();
        if header.len() < 2 || &header[0] != "id" || &header[1] != "group" {
            return Err(Error::format(
                "matrix CSV must start with columns `id,group`",
            ));
        }
        let mz: Vec<f64> = header
            .iter()
            .skip(2)
            .map(|h| {
                h.parse::<f64>()
                    .map_err(|_| Error::format(format!("invalid m/z header `{h}`")))
            })
            .collect::<Result<_>>()?;
        let d = mz.len();
        let mut ids = Vec::new();
        let mut groups = Vec::new();
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::format(e.to_string()))?;
            if rec.len() != d + 2 {
                return Err(Error::format(format!(
                    "row {}: expected {} fields, found {}",
                    i + 2,
                    d + 2,
                    rec.len()
                )));
            }
            ids.push(rec[0].to_string());
            groups.push(rec[1].to_string());
            let row: Vec<u8> = rec
                .iter()
                .skip(2)
                .map(|c| match c {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::format(format!(
                        "row {}: cell `{other}` is not 0/1",
                        i + 2
                    ))),
                })
                .collect::<Result<_>>()?;
            rows.push(row);
        }
        Ok(PeakMatrix {
            mz,
            site_index: (0..d).collect(),
            ids,
            groups,
            rows,
        })
    }

    pub fn write_csv_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path.as_ref())?;
        self.write_csv(file)
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        PeakMatrix::read_csv(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn jsonl_round_trip() {
        let text = r#"{"id":"s1","group":"A","peaks":[810.5,920.0]}
{"id":"s2","group":"B","peaks":[]}
"#;
        let specs = read_peaks_jsonl(text.as_bytes()).unwrap();
        assert_eq!(specs.len(), 2);
        assert_eq!(specs[0].id, "s1");
        assert_eq!(specs[0].peaks(), &[810.5, 920.0]);
        assert_eq!(specs[1].group, "B");
    }

    #[test]
    fn jsonl_rejects_malformed_lines() {
        assert!(read_peaks_jsonl("not json".as_bytes()).is_err());
        assert!(read_peaks_jsonl(r#"{"id":"x","group":"A","peaks":[-1]}"#.as_bytes()).is_err());
    }

    #[test]
    fn csv_rejects_non_binary_cells_and_bad_headers() {
        let bad_cell = "id,group,100\na,A,2\n";
        assert!(PeakMatrix::read_csv(bad_cell.as_bytes()).is_err());
        let bad_header = "name,group,100\na,A,1\n";
        assert!(PeakMatrix::read_csv(bad_header.as_bytes()).is_err());
    }

    #[test]
    fn select_group_partitions_rows() {
        let m = PeakMatrix {
            mz: vec![100.0, 110.0],
            site_index: vec![0, 1],
            ids: vec!["a".into(), "b".into(), "c".into()],
            groups: vec!["P".into(), "M".into(), "P".into()],
            rows: vec![vec![1, 0], vec![0, 1], vec![1, 1]],
        };
        let p = m.select_group("P").unwrap();
        assert_eq!(p.n(), 2);
        assert_eq!(p.ids(), &["a".to_string(), "c".to_string()]);
        assert!(m.select_group("X").is_err());
        assert_eq!(m.group_labels(), vec!["P".to_string(), "M".to_string()]);
    }

    proptest! {
        // write -> read -> write is byte-identical
        #[test]
        fn csv_round_trip_is_bit_exact(
            n in 1usize..6,
            d in 1usize..8,
            seed in 0u64..1000,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mz: Vec<f64> = (0..d).map(|j| 100.0 * 1.003f64.powi(j as i32)).collect();
            let m = PeakMatrix {
                mz,
                site_index: (0..d).collect(),
                ids: (0..n).map(|i| format!("sp{i}")).collect(),
                groups: (0..n).map(|i| if i % 2 == 0 { "A".into() } else { "B".into() }).collect(),
                rows: (0..n).map(|_| (0..d).map(|_| rng.random_range(0..=1u8)).collect()).collect(),
            };
            let mut buf = Vec::new();
            m.write_csv(&mut buf).unwrap();
            let back = PeakMatrix::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(&back, &m);
            let mut buf2 = Vec::new();
            back.write_csv(&mut buf2).unwrap();
            prop_assert_eq!(buf, buf2);
        }
    }
}
