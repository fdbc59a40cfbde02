//! Goodness-of-fit quantile for a fitted model against its training data.
//!
//! The observed log-likelihood is ranked among the log-likelihoods of
//! simulated virtual datasets of the same size drawn from the model. Under a
//! correct model the rank quantile `Q` is close to 50% and `sqrt(n)(Q - 1/2)`
//! is approximately centered Gaussian.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::model::{AutologisticModel, GibbsConfig};

/// Default number of simulated virtual datasets.
pub const DEFAULT_REPLICAS: usize = 1000;

const HISTOGRAM_BINS: usize = 30;

#[derive(Clone, Debug, Serialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitQualityReport {
    pub ll_observed: f64,
    pub quantile_q: f64,
    pub z_stat: f64,
    pub histogram: Histogram,
    #[serde(skip)]
    pub ll_simulated: Vec<f64>,
}

fn dataset_ll(model: &AutologisticModel, rows: &[Vec<u8>]) -> Result<f64> {
    let mut ll = 0.0;
    for x in rows {
        ll += model.log_prob(x)?;
    }
    Ok(ll)
}

fn histogram(values: &[f64]) -> Histogram {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return Histogram {
            edges: vec![lo - 0.5, lo + 0.5],
            counts: vec![values.len()],
        };
    }
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    let edges: Vec<f64> = (0..=HISTOGRAM_BINS).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; HISTOGRAM_BINS];
    for &v in values {
        let bin = (((v - lo) / width) as usize).min(HISTOGRAM_BINS - 1);
        counts[bin] += 1;
    }
    Histogram { edges, counts }
}

/// Ranks the observed log-likelihood among `replicas` simulated datasets of
/// the same size. Replicas draw their seeds as `seed + index` and run
/// independently; `Q = (#{LL_j < LL} + 1) / R` (ties rank conservatively).
pub fn quality_of_fit(
    model: &AutologisticModel,
    rows: &[Vec<u8>],
    replicas: usize,
    gibbs: &GibbsConfig,
    seed: u64,
) -> Result<FitQualityReport> {
    if replicas == 0 {
        return Err(crate::error::Error::domain("replicas must be at least 1"));
    }
    let n = rows.len();
    let ll_observed = dataset_ll(model, rows)?;
    let ll_simulated: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|r| {
            let virtual_rows = model.sample(n, gibbs, seed.wrapping_add(r as u64));
            dataset_ll(model, &virtual_rows).expect("sampled rows match model dimension")
        })
        .collect();
    let below = ll_simulated.iter().filter(|&&v| v < ll_observed).count();
    let quantile_q = (below + 1) as f64 / replicas as f64;
    let z_stat = (n as f64).sqrt() * (quantile_q - 0.5);
    Ok(FitQualityReport {
        ll_observed,
        quantile_q,
        z_stat,
        histogram: histogram(&ll_simulated),
        ll_simulated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamVector;

    fn small_model() -> AutologisticModel {
        let mut theta = ParamVector::with_pairs(4, [(0, 1)]).unwrap();
        theta.set_single(0, 0.6).unwrap();
        theta.set_single(1, -0.4).unwrap();
        theta.set_pair(0, 1, 0.5).unwrap();
        AutologisticModel::exact(theta, 16).unwrap()
    }

    #[test]
    fn quantile_is_in_unit_interval_and_deterministic() {
        let model = small_model();
        let rows = model.sample(40, &GibbsConfig::default(), 9);
        let a = quality_of_fit(&model, &rows, 200, &GibbsConfig::default(), 7).unwrap();
        let b = quality_of_fit(&model, &rows, 200, &GibbsConfig::default(), 7).unwrap();
        assert!(a.quantile_q > 0.0 && a.quantile_q <= 1.0);
        assert_eq!(a.quantile_q, b.quantile_q);
        assert_eq!(a.ll_simulated, b.ll_simulated);
        assert_eq!(a.ll_simulated.len(), 200);
        let z = (40f64).sqrt() * (a.quantile_q - 0.5);
        assert!((a.z_stat - z).abs() < 1e-12);
    }

    #[test]
    fn rank_counts_strictly_below() {
        // all simulated equal to observed -> Q = 1/R (conservative tie rank)
        let model = AutologisticModel::exact(ParamVector::zeros(2), 16).unwrap();
        // under the uniform model every dataset of the same size has the
        // same likelihood, so every replica ties with the observation
        let rows = vec![vec![0u8, 1], vec![1u8, 0]];
        let rep = quality_of_fit(&model, &rows, 50, &GibbsConfig::default(), 3).unwrap();
        assert!((rep.quantile_q - 1.0 / 50.0).abs() < 1e-12);
    }

    #[test]
    fn histogram_counts_cover_all_replicas() {
        let model = small_model();
        let rows = model.sample(30, &GibbsConfig::default(), 11);
        let rep = quality_of_fit(&model, &rows, 120, &GibbsConfig::default(), 13).unwrap();
        assert_eq!(rep.histogram.counts.iter().sum::<usize>(), 120);
        assert_eq!(rep.histogram.edges.len(), rep.histogram.counts.len() + 1);
    }

    #[test]
    fn default_replica_count_is_one_thousand() {
        assert_eq!(DEFAULT_REPLICAS, 1000);
    }
}
