//! Reference-biomarker grids and binary coding of peak lists.
//!
//! A detected peak at abscissa `A` (in Daltons) has a relative accuracy `rho`,
//! so its true m/z lies in `[A(1-rho), A(1+rho)]`. The reference grid places
//! sites at `B_s = B_1 (1+rho)^(s-1)`; a spectrum activates site `s` when one
//! of its peaks falls inside the closed window `[B_s(1-rho), B_s(1+rho)]`.

use log::debug;

use crate::error::{Error, Result};

/// A peak-list spectrum: id, group label and sorted positive m/z abscissas.
#[derive(Clone, Debug, PartialEq)]
pub struct PeakSpectrum {
    pub id: String,
    pub group: String,
    peaks: Vec<f64>,
}

impl PeakSpectrum {
    /// Validates positivity/finiteness and sorts the peaks ascending.
    /// Duplicate peaks are permitted (binarization is idempotent in peaks).
    pub fn new(id: impl Into<String>, group: impl Into<String>, mut peaks: Vec<f64>) -> Result<Self> {
        for &p in &peaks {
            if !p.is_finite() || p <= 0.0 {
                return Err(Error::format(format!("peak abscissa {p} must be a positive real")));
            }
        }
        peaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(PeakSpectrum {
            id: id.into(),
            group: group.into(),
            peaks,
        })
    }

    pub fn peaks(&self) -> &[f64] {
        &self.peaks
    }
}

/// Geometric grid of reference biomarkers `B_s = B_1 (1+rho)^(s-1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceGrid {
    b1: f64,
    rho: f64,
    sites: Vec<f64>,
}

impl ReferenceGrid {
    /// Builds the shortest grid starting at `b1` whose last site reaches
    /// `b_max`, i.e. the smallest `L` with `b1 (1+rho)^(L-1) >= b_max`.
    pub fn build(b1: f64, b_max: f64, rho: f64) -> Result<Self> {
        if !(b1 > 0.0) || !b1.is_finite() {
            return Err(Error::domain(format!("b1 must be positive, got {b1}")));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::domain(format!("rho must be positive, got {rho}")));
        }
        if !(b_max >= b1) || !b_max.is_finite() {
            return Err(Error::domain(format!(
                "b_max ({b_max}) must be at least b1 ({b1})"
            )));
        }
        let mut sites = vec![b1];
        let ratio = 1.0 + rho;
        let mut b = b1;
        while b < b_max {
            b *= ratio;
            sites.push(b);
        }
        Ok(ReferenceGrid { b1, rho, sites })
    }

    pub fn b1(&self) -> f64 {
        self.b1
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    /// Site abscissas, ascending.
    pub fn sites(&self) -> &[f64] {
        &self.sites
    }

    pub fn site_mz(&self, s: usize) -> f64 {
        self.sites[s]
    }

    /// Binary coding: coordinate `s` is 1 iff some peak lies in the closed
    /// activation window of `B_s`. Peaks outside every window (below the
    /// first or above the last) are ignored.
    pub fn binarize(&self, spectrum: &PeakSpectrum) -> Vec<u8> {
        let mut x = vec![0u8; self.sites.len()];
        let lo_bound = self.sites[0] * (1.0 - self.rho);
        let hi_bound = self.sites[self.sites.len() - 1] * (1.0 + self.rho);
        for &peak in spectrum.peaks() {
            if peak < lo_bound || peak > hi_bound {
                debug!(
                    "spectrum {}: peak {peak} outside grid range [{lo_bound}, {hi_bound}], ignored",
                    spectrum.id
                );
                continue;
            }
            // Candidate sites satisfy B_s(1-rho) <= peak <= B_s(1+rho); scan a
            // conservative index range and apply the exact window test.
            let start = self.sites.partition_point(|&b| b < peak / (1.0 + self.rho));
            let start = start.saturating_sub(1);
            for s in start..self.sites.len() {
                let b = self.sites[s];
                if b * (1.0 - self.rho) > peak {
                    break;
                }
                if peak >= b - self.rho * b && peak <= b + self.rho * b {
                    x[s] = 1;
                }
            }
        }
        x
    }
}

/// A set of binary vectors over a common site list, all from one group.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryDataset {
    group: String,
    ids: Vec<String>,
    /// m/z abscissa of each local coordinate.
    mz: Vec<f64>,
    /// Original grid site index of each local coordinate.
    site_index: Vec<usize>,
    rows: Vec<Vec<u8>>,
}

impl BinaryDataset {
    pub fn new(
        group: impl Into<String>,
        ids: Vec<String>,
        mz: Vec<f64>,
        site_index: Vec<usize>,
        rows: Vec<Vec<u8>>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::domain("dataset must contain at least one vector"));
        }
        let d = mz.len();
        if site_index.len() != d {
            return Err(Error::domain("mz and site_index lengths differ"));
        }
        if ids.len() != rows.len() {
            return Err(Error::domain("ids and rows lengths differ"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &s in &site_index {
            if !seen.insert(s) {
                return Err(Error::domain(format!("site index {s} repeated; map must be injective")));
            }
        }
        for row in &rows {
            if row.len() != d {
                return Err(Error::domain("all vectors must have the same length"));
            }
            if row.iter().any(|&b| b > 1) {
                return Err(Error::domain("binary vectors may only contain 0 or 1"));
            }
        }
        Ok(BinaryDataset {
            group: group.into(),
            ids,
            mz,
            site_index,
            rows,
        })
    }

    /// Binarizes a group of spectra against a grid.
    pub fn from_spectra(
        grid: &ReferenceGrid,
        group: impl Into<String>,
        spectra: &[PeakSpectrum],
    ) -> Result<Self> {
        let group = group.into();
        let ids = spectra.iter().map(|s| s.id.clone()).collect();
        let rows = spectra.iter().map(|s| grid.binarize(s)).collect();
        BinaryDataset::new(
            group,
            ids,
            grid.sites().to_vec(),
            (0..grid.len()).collect(),
            rows,
        )
    }

    pub fn group(&self) -> &str {
        &self.group
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn mz(&self) -> &[f64] {
        &self.mz
    }

    pub fn site_index(&self) -> &[usize] {
        &self.site_index
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    /// Number of vectors.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Number of sites (vector length).
    pub fn d(&self) -> usize {
        self.mz.len()
    }

    /// Frequency of `x_s = 1` at local coordinate `j`.
    pub fn activation_frequency(&self, j: usize) -> f64 {
        let count = self.rows.iter().filter(|r| r[j] != 0).count();
        count as f64 / self.rows.len() as f64
    }

    /// Projects every vector onto the given original site indices, in the
    /// given order.
    pub fn restrict(&self, sites: &[usize]) -> Result<BinaryDataset> {
        if sites.is_empty() {
            return Err(Error::domain("restriction site set must be nonempty"));
        }
        let local: Vec<usize> = sites
            .iter()
            .map(|&s| {
                self.site_index
                    .iter()
                    .position(|&orig| orig == s)
                    .ok_or_else(|| Error::domain(format!("unknown site index {s}")))
            })
            .collect::<Result<_>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| local.iter().map(|&j| r[j]).collect())
            .collect();
        BinaryDataset::new(
            self.group.clone(),
            self.ids.clone(),
            local.iter().map(|&j| self.mz[j]).collect(),
            sites.to_vec(),
            rows,
        )
    }

}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_single_point() {
        let g = ReferenceGrid::build(800.0, 800.0, 0.003).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.sites(), &[800.0]);
    }

    #[test]
    fn grid_length_matches_geometric_formula() {
        // oracle: L = ceil(ln(b_max/b1)/ln(1+rho)) + 1 evaluated directly
        let g = ReferenceGrid::build(100.0, 200.0, 0.1).unwrap();
        let l_oracle = ((200.0f64 / 100.0).ln() / 1.1f64.ln()).ceil() as usize + 1;
        assert_eq!(l_oracle, 9);
        assert_eq!(g.len(), 9);
        // B_9 = 100 * 1.1^8 = 214.358881... >= 200
        assert!((g.site_mz(8) - 214.358881).abs() < 1e-6);
        assert!(g.site_mz(8) >= 200.0);
        assert!(g.site_mz(7) < 200.0, "L must be minimal");
    }

    #[test]
    fn wide_mass_range_grid_has_842_sites() {
        // 842 sites at 800*(1.003)^j cover peaks up to ~9935; a maximum
        // observed peak of 9930 lands between B_841 and B_842.
        let g = ReferenceGrid::build(800.0, 9930.0, 0.003).unwrap();
        assert_eq!(g.len(), 842);
        assert_eq!(g.b1(), 800.0);
        // nominal coverage up to 10000 requires three more sites
        let g2 = ReferenceGrid::build(800.0, 10000.0, 0.003).unwrap();
        assert_eq!(g2.len(), 845);
    }

    #[test]
    fn grid_ratio_property() {
        let g = ReferenceGrid::build(800.0, 9930.0, 0.003).unwrap();
        for s in 0..g.len() - 1 {
            let ratio = g.site_mz(s + 1) / g.site_mz(s);
            assert!(
                (ratio - 1.003).abs() < 1e-12 * 1.003,
                "ratio off at {s}: {ratio}"
            );
        }
    }

    #[test]
    fn grid_rejects_bad_inputs() {
        assert!(ReferenceGrid::build(0.0, 100.0, 0.1).is_err());
        assert!(ReferenceGrid::build(100.0, 100.0, 0.0).is_err());
        assert!(ReferenceGrid::build(100.0, 50.0, 0.1).is_err());
        assert!(ReferenceGrid::build(-5.0, 100.0, 0.1).is_err());
    }

    #[test]
    fn binarize_empty_spectrum_is_all_zero() {
        let g = ReferenceGrid::build(100.0, 200.0, 0.1).unwrap();
        let sp = PeakSpectrum::new("s", "G", vec![]).unwrap();
        assert!(g.binarize(&sp).iter().all(|&b| b == 0));
    }

    #[test]
    fn binarize_exact_grid_point() {
        let g = ReferenceGrid::build(800.0, 9930.0, 0.003).unwrap();
        let sp = PeakSpectrum::new("s", "G", vec![800.0]).unwrap();
        let x = g.binarize(&sp);
        assert_eq!(x[0], 1);
        // consecutive windows overlap: B_2(1-rho) = B_1(1-rho^2) < B_1, so
        // the grid-point peak also activates site 2
        assert_eq!(x[1], 1);
        assert_eq!(x[2], 0);
    }

    #[test]
    fn binarize_peak_activating_two_overlapping_windows() {
        // B_1=100 window [90,110]; B_2=110 window [99,121]; 109.9 is in both
        let g = ReferenceGrid::build(100.0, 200.0, 0.1).unwrap();
        let sp = PeakSpectrum::new("s", "G", vec![109.9]).unwrap();
        let x = g.binarize(&sp);
        assert_eq!(x[0], 1);
        assert_eq!(x[1], 1);
        // B_3 = 121 with window [108.9, 133.1] catches it as well at this
        // coarse rho, but B_4 = 133.1 (window low 119.79) does not
        assert_eq!(x[2], 1);
        assert_eq!(x[3], 0);
    }

    #[test]
    fn binarize_ignores_out_of_range_peaks() {
        let g = ReferenceGrid::build(100.0, 200.0, 0.1).unwrap();
        let sp = PeakSpectrum::new("s", "G", vec![50.0, 5000.0]).unwrap();
        assert!(g.binarize(&sp).iter().all(|&b| b == 0));
    }

    #[test]
    fn binarize_boundary_peak_activates() {
        // closed window: a peak exactly on the upper edge activates site s
        let g = ReferenceGrid::build(100.0, 200.0, 0.1).unwrap();
        let edge = g.site_mz(0) + 0.1 * g.site_mz(0);
        let sp = PeakSpectrum::new("s", "G", vec![edge]).unwrap();
        assert_eq!(g.binarize(&sp)[0], 1);
    }

    #[test]
    fn spectrum_rejects_nonpositive_peaks() {
        assert!(PeakSpectrum::new("a", "G", vec![0.0]).is_err());
        assert!(PeakSpectrum::new("a", "G", vec![-1.0]).is_err());
        assert!(PeakSpectrum::new("a", "G", vec![f64::NAN]).is_err());
    }

    fn toy_dataset() -> BinaryDataset {
        BinaryDataset::new(
            "G",
            vec!["a".into(), "b".into()],
            vec![100.0, 110.0, 121.0, 133.1, 146.41],
            vec![0, 1, 2, 3, 4],
            vec![vec![1, 0, 1, 1, 0], vec![0, 1, 1, 0, 0]],
        )
        .unwrap()
    }

    #[test]
    fn restrict_picks_coordinates_in_order() {
        let ds = toy_dataset();
        let r = ds.restrict(&[0, 2, 3]).unwrap();
        assert_eq!(r.rows()[0], vec![1, 1, 1]);
        assert_eq!(r.rows()[1], vec![0, 1, 0]);
        assert_eq!(r.site_index(), &[0, 2, 3]);
        assert_eq!(r.mz(), &[100.0, 121.0, 133.1]);
    }

    #[test]
    fn restrict_to_all_sites_is_identity() {
        let ds = toy_dataset();
        let r = ds.restrict(&[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(r, ds);
    }

    #[test]
    fn restrict_composes() {
        let ds = toy_dataset();
        let a = ds.restrict(&[0, 2, 3]).unwrap().restrict(&[2, 3]).unwrap();
        let b = ds.restrict(&[2, 3]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn restrict_unknown_site_errors() {
        let ds = toy_dataset();
        assert!(ds.restrict(&[0, 9]).is_err());
        assert!(ds.restrict(&[]).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_peaks() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(90.0f64..240.0, 0..12)
        }

        proptest! {
            // duplicating any peak leaves the coding unchanged
            #[test]
            fn binarize_is_idempotent_in_peaks(peaks in arb_peaks(), dup in any::<prop::sample::Index>()) {
                let g = ReferenceGrid::build(100.0, 200.0, 0.05).unwrap();
                let base = PeakSpectrum::new("s", "G", peaks.clone()).unwrap();
                let mut doubled = peaks.clone();
                if !peaks.is_empty() {
                    doubled.push(peaks[dup.index(peaks.len())]);
                }
                let dup_spec = PeakSpectrum::new("s", "G", doubled).unwrap();
                prop_assert_eq!(g.binarize(&base), g.binarize(&dup_spec));
            }

            // adding a peak never flips a coordinate from 1 to 0
            #[test]
            fn binarize_is_monotone_in_peaks(peaks in arb_peaks(), extra in 90.0f64..240.0) {
                let g = ReferenceGrid::build(100.0, 200.0, 0.05).unwrap();
                let base = PeakSpectrum::new("s", "G", peaks.clone()).unwrap();
                let mut more = peaks.clone();
                more.push(extra);
                let grown = PeakSpectrum::new("s", "G", more).unwrap();
                let a = g.binarize(&base);
                let b = g.binarize(&grown);
                for (x, y) in a.iter().zip(&b) {
                    prop_assert!(y >= x);
                }
            }
        }
    }
}
