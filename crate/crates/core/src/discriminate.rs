//! Optimal and estimated separators between two autologistic models.
//!
//! The ideal rule classifies `x` into the first group when
//! `f(x) = <theta_minus - theta_plus, U(x)> + log(Z_minus/Z_plus) > 0`,
//! which is the Neyman–Pearson likelihood-ratio rule with equal weights.
//! In practice the models are fitted, so the separator is re-estimated from
//! the planar recoding `W(x) = (w_plus, w_minus)` of the training data by
//! least-squares regression of the +/-1 group indicator, which yields a
//! corrected coefficient `beta` on `w_minus` and sidesteps the partition
//! functions entirely.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::SymMat;
use crate::model::{log_partition_exact, log_partition_mc, AutologisticModel};
use crate::mple::{self, CovEstimate, MpleConfig, PlContext};
use crate::params::{Coord, ParamVector};
use crate::spectra::BinaryDataset;

/// How a separator was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparatorForm {
    /// `u = theta_minus - theta_plus`, intercept `log(Z-/Z+)`, beta = 1.
    Ideal,
    /// Regression-estimated with the w+ coefficient normalized to -1.
    Estimated,
    /// Regression produced a non-negative w+ coefficient; the raw direction
    /// is kept.
    Degenerate,
}

/// Affine decision rule on the sufficient statistics.
///
/// `score(x) = <u, U(x)> + intercept`; for the estimated form `u` already
/// folds in the correction `beta * theta_minus - theta_plus`, so the score
/// equals `beta w_minus(x) - w_plus(x) + intercept`.
#[derive(Clone, Debug, Serialize)]
pub struct Separator {
    pub u: ParamVector,
    pub beta: f64,
    pub intercept: f64,
    pub form: SeparatorForm,
}

impl Separator {
    pub fn score(&self, x: &[u8]) -> Result<f64> {
        Ok(self.u.energy(x)? + self.intercept)
    }

    pub fn score_bits(&self, bits: u64) -> f64 {
        self.u.energy_bits(bits) + self.intercept
    }

    /// `true` = first group (score > 0). A zero score classifies as the
    /// second group, which the performance counters treat as an error for
    /// both sides.
    pub fn classify(&self, x: &[u8]) -> Result<bool> {
        Ok(self.score(x)? > 0.0)
    }
}

/// Planar recoding `W(x) = (w_plus, w_minus)` of a binary vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlanarPoint {
    pub w_plus: f64,
    pub w_minus: f64,
}

/// Energies of `x` under the two fitted parameter vectors.
pub fn planar_recode(
    x: &[u8],
    theta_plus: &ParamVector,
    theta_minus: &ParamVector,
) -> Result<PlanarPoint> {
    Ok(PlanarPoint {
        w_plus: theta_plus.energy(x)?,
        w_minus: theta_minus.energy(x)?,
    })
}

/// Frequencies of correct decisions for each group.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PerformanceRecord {
    pub p_plus: f64,
    pub p_minus: f64,
    pub perf: f64,
    pub method: PerfMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerfMethod {
    Training,
    LeaveOneOut,
    Exact,
}

impl PerformanceRecord {
    fn new(p_plus: f64, p_minus: f64, method: PerfMethod, folds: Option<usize>) -> Self {
        PerformanceRecord {
            p_plus,
            p_minus,
            perf: 0.5 * (p_plus + p_minus),
            method,
            folds,
        }
    }
}

/// Partition-function policy for intercepts that need `log Z`.
#[derive(Clone, Copy, Debug)]
pub struct ZOptions {
    pub exact_cutoff: usize,
    pub mc_samples: usize,
    /// Shared seed for the two Monte Carlo estimates.
    pub seed: u64,
}

impl Default for ZOptions {
    fn default() -> Self {
        ZOptions {
            exact_cutoff: crate::model::DEFAULT_EXACT_CUTOFF,
            mc_samples: crate::model::DEFAULT_MC_SAMPLES,
            seed: 0,
        }
    }
}

fn log_z_for(theta: &ParamVector, z: &ZOptions) -> Result<f64> {
    if theta.d() <= z.exact_cutoff {
        log_partition_exact(theta, z.exact_cutoff)
    } else {
        log_partition_mc(theta, z.mc_samples, z.seed)
    }
}

/// The optimal decision rule between two known models:
/// `u = theta_minus - theta_plus`, `a = log Z_minus - log Z_plus`.
pub fn ideal_separator(plus: &AutologisticModel, minus: &AutologisticModel) -> Result<Separator> {
    if plus.d() != minus.d() {
        return Err(Error::domain(format!(
            "dimension mismatch: {} vs {}",
            plus.d(),
            minus.d()
        )));
    }
    Ok(Separator {
        u: ParamVector::combine(1.0, minus.theta(), -1.0, plus.theta())?,
        beta: 1.0,
        intercept: minus.log_z() - plus.log_z(),
        form: SeparatorForm::Ideal,
    })
}

/// Estimates the separator from labeled training rows via planar recoding
/// and least-squares regression of the +/-1 indicator on `(w+, w-, 1)`.
///
/// The fitted affine rule `c1 w+ + c2 w- + c0` is normalized so the `w+`
/// coefficient equals -1, giving `beta = -c2/c1` and `intercept = -c0/c1`.
/// A non-negative `c1` keeps the raw direction and flags the separator as
/// degenerate. Collinear planar clouds fall back to the ideal form with
/// beta = 1 and a partition-function intercept.
pub fn estimate_separator(
    rows_plus: &[Vec<u8>],
    rows_minus: &[Vec<u8>],
    theta_plus: &ParamVector,
    theta_minus: &ParamVector,
    z: &ZOptions,
) -> Result<Separator> {
    if rows_plus.is_empty() || rows_minus.is_empty() {
        return Err(Error::domain("both groups must be nonempty"));
    }
    if theta_plus.d() != theta_minus.d() {
        return Err(Error::domain(format!(
            "dimension mismatch: {} vs {}",
            theta_plus.d(),
            theta_minus.d()
        )));
    }
    // normal equations for y ~ c1 w+ + c2 w- + c0
    let mut xtx = SymMat::zeros(3);
    let mut xty = [0.0f64; 3];
    let mut accumulate = |rows: &[Vec<u8>], label: f64| -> Result<()> {
        for x in rows {
            let w = planar_recode(x, theta_plus, theta_minus)?;
            let feats = [w.w_plus, w.w_minus, 1.0];
            for i in 0..3 {
                for j in 0..3 {
                    xtx.add(i, j, feats[i] * feats[j]);
                }
                xty[i] += feats[i] * label;
            }
        }
        Ok(())
    };
    accumulate(rows_plus, 1.0)?;
    accumulate(rows_minus, -1.0)?;

    let inv = match xtx.spd_inverse(None) {
        Ok(inv) => inv,
        Err(Error::RankDeficient { .. }) => {
            log::warn!("collinear planar clouds; falling back to the ideal separator form");
            let a = log_z_for(theta_minus, z)? - log_z_for(theta_plus, z)?;
            return Ok(Separator {
                u: ParamVector::combine(1.0, theta_minus, -1.0, theta_plus)?,
                beta: 1.0,
                intercept: a,
                form: SeparatorForm::Ideal,
            });
        }
        Err(e) => return Err(e),
    };
    let c: Vec<f64> = inv.matvec(&xty);
    let (c1, c2, c0) = (c[0], c[1], c[2]);
    if c1 < 0.0 {
        let beta = -c2 / c1;
        let intercept = -c0 / c1;
        Ok(Separator {
            u: ParamVector::combine(beta, theta_minus, -1.0, theta_plus)?,
            beta,
            intercept,
            form: SeparatorForm::Estimated,
        })
    } else {
        log::warn!("regression produced w+ coefficient {c1} >= 0; keeping raw direction");
        Ok(Separator {
            u: ParamVector::combine(c2, theta_minus, c1, theta_plus)?,
            beta: c2,
            intercept: c0,
            form: SeparatorForm::Degenerate,
        })
    }
}

/// Training frequencies of correct decisions; ties (score exactly 0) count
/// as errors for both groups.
pub fn evaluate_training(
    sep: &Separator,
    rows_plus: &[Vec<u8>],
    rows_minus: &[Vec<u8>],
) -> Result<PerformanceRecord> {
    let mut plus_ok = 0usize;
    for x in rows_plus {
        if sep.score(x)? > 0.0 {
            plus_ok += 1;
        }
    }
    let mut minus_ok = 0usize;
    for x in rows_minus {
        if sep.score(x)? < 0.0 {
            minus_ok += 1;
        }
    }
    Ok(PerformanceRecord::new(
        plus_ok as f64 / rows_plus.len().max(1) as f64,
        minus_ok as f64 / rows_minus.len().max(1) as f64,
        PerfMethod::Training,
        None,
    ))
}

/// Exact decision probabilities by enumeration over all configurations.
pub fn exact_performance(
    sep: &Separator,
    plus: &AutologisticModel,
    minus: &AutologisticModel,
) -> Result<PerformanceRecord> {
    let d = plus.d();
    if d != minus.d() {
        return Err(Error::domain("dimension mismatch"));
    }
    if d >= 26 {
        return Err(Error::Capacity(format!("exact performance enumerates 2^{d} terms")));
    }
    let mut p_plus = 0.0;
    let mut p_minus = 0.0;
    for bits in 0..1u64 << d {
        let f = sep.score_bits(bits);
        if f > 0.0 {
            p_plus += plus.log_prob_bits(bits).exp();
        } else if f < 0.0 {
            p_minus += minus.log_prob_bits(bits).exp();
        }
    }
    Ok(PerformanceRecord::new(
        p_plus,
        p_minus,
        PerfMethod::Exact,
        None,
    ))
}

/// MPLE settings for leave-one-out refits.
#[derive(Clone, Copy, Debug)]
pub struct FitConfig {
    pub mple: MpleConfig,
    /// Re-run significance pruning inside each fold.
    pub prune: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            mple: MpleConfig::default(),
            prune: true,
        }
    }
}

fn fold_fit(
    rows: &[Vec<u8>],
    support: &[(usize, usize)],
    cfg: &FitConfig,
) -> Result<ParamVector> {
    let ctx = PlContext::new(rows, support.iter().copied(), [])?;
    let result = if cfg.prune {
        mple::fit_pruned(&ctx, &cfg.mple)?
    } else {
        mple::fit(&ctx, &cfg.mple)?
    };
    Ok(result.theta_hat)
}

/// Leave-one-out cross validation of the estimated separator.
///
/// Each fold removes one vector, refits the affected group's parameters on
/// the remaining data (the other group's full-data fit is reused), re-runs
/// the separator regression, and classifies the held-out vector. Site and
/// clique selection are fixed by the caller. Failed folds count as errors.
pub fn evaluate_loo(
    bg_plus: &BinaryDataset,
    bg_minus: &BinaryDataset,
    support_plus: &[(usize, usize)],
    support_minus: &[(usize, usize)],
    cfg: &FitConfig,
    z: &ZOptions,
) -> Result<PerformanceRecord> {
    if bg_plus.n() < 2 || bg_minus.n() < 2 {
        return Err(Error::domain("leave-one-out needs at least 2 vectors per group"));
    }
    let theta_plus_full = fold_fit(bg_plus.rows(), support_plus, cfg)?;
    let theta_minus_full = fold_fit(bg_minus.rows(), support_minus, cfg)?;

    let run_fold = |group_plus: bool, held: usize| -> Result<bool> {
        let (own, other_theta, own_support) = if group_plus {
            (bg_plus, &theta_minus_full, support_plus)
        } else {
            (bg_minus, &theta_plus_full, support_minus)
        };
        let mut remaining: Vec<Vec<u8>> = Vec::with_capacity(own.n() - 1);
        for (i, row) in own.rows().iter().enumerate() {
            if i != held {
                remaining.push(row.clone());
            }
        }
        let theta_refit = fold_fit(&remaining, own_support, cfg)?;
        let (tp, tm) = if group_plus {
            (&theta_refit, other_theta)
        } else {
            (other_theta, &theta_refit)
        };
        let sep = if group_plus {
            estimate_separator(&remaining, bg_minus.rows(), tp, tm, z)?
        } else {
            estimate_separator(bg_plus.rows(), &remaining, tp, tm, z)?
        };
        let score = sep.score(&own.rows()[held])?;
        Ok(if group_plus { score > 0.0 } else { score < 0.0 })
    };

    let folds: Vec<(bool, usize)> = (0..bg_plus.n())
        .map(|i| (true, i))
        .chain((0..bg_minus.n()).map(|i| (false, i)))
        .collect();
    let outcomes: Vec<(bool, bool)> = folds
        .par_iter()
        .map(|&(group_plus, held)| {
            let correct = run_fold(group_plus, held).unwrap_or_else(|e| {
                log::warn!("fold ({group_plus}, {held}) failed: {e}; counted as error");
                false
            });
            (group_plus, correct)
        })
        .collect();
    let plus_ok = outcomes.iter().filter(|&&(g, c)| g && c).count();
    let minus_ok = outcomes.iter().filter(|&&(g, c)| !g && c).count();
    Ok(PerformanceRecord {
        folds: Some(folds.len()),
        ..PerformanceRecord::new(
            plus_ok as f64 / bg_plus.n() as f64,
            minus_ok as f64 / bg_minus.n() as f64,
            PerfMethod::LeaveOneOut,
            None,
        )
    })
}

/// Diagnostics on the estimated separator: covariance of `sqrt(n)(u_hat-u)`,
/// the trace bound on `var(sqrt(n)(a_hat-a))`, and (for small `d`) the
/// perturbation radius `q` of the two-tail-mass conditions.
#[derive(Clone, Debug)]
pub struct SeparatorDiagnostics {
    /// Union of the two covariance coordinate lists.
    pub coords: Vec<Coord>,
    /// `Gamma_plus + Gamma_minus` embedded on the union coordinates.
    pub cov: SymMat,
    pub cov_trace: f64,
    /// Full parameter-space dimension `d(d+1)/2`.
    pub k: usize,
    /// `k * trace(cov)`: upper bound for the intercept error variance.
    pub var_bound: f64,
    /// Largest eigenvalue of `cov`.
    pub lambda1: f64,
    pub gamma_level: f64,
    /// Perturbation radii under each model; `None` when `d > 10`.
    pub q_plus: Option<f64>,
    pub q_minus: Option<f64>,
}

#[derive(Clone, Copy, Debug)]
pub struct DiagnosticsOptions {
    /// Tolerated performance perturbation for the radius `q`.
    pub gamma_level: f64,
    pub exact_cutoff: usize,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        DiagnosticsOptions {
            gamma_level: 0.05,
            exact_cutoff: crate::model::DEFAULT_EXACT_CUTOFF,
        }
    }
}

const Q_ENUMERATION_MAX_D: usize = 10;

/// Largest `q` such that, under `model`,
/// `P(0 < f < q) <= gamma p(f)` and `P(-q < f < 0) <= gamma (1 - p(f))`.
pub fn perturbation_radius(
    model: &AutologisticModel,
    sep: &Separator,
    gamma: f64,
) -> Result<f64> {
    let d = model.d();
    if d > Q_ENUMERATION_MAX_D {
        return Err(Error::Capacity(format!(
            "perturbation radius is enumerated only for d <= {Q_ENUMERATION_MAX_D}, got {d}"
        )));
    }
    let mut pos: Vec<(f64, f64)> = Vec::new();
    let mut neg: Vec<(f64, f64)> = Vec::new();
    let mut p_f = 0.0;
    for bits in 0..1u64 << d {
        let f = sep.score_bits(bits);
        let p = model.log_prob_bits(bits).exp();
        if f > 0.0 {
            p_f += p;
            pos.push((f, p));
        } else if f < 0.0 {
            neg.push((-f, p));
        }
    }
    let side_q = |mut vals: Vec<(f64, f64)>, budget: f64| -> f64 {
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cum = 0.0;
        for &(v, p) in &vals {
            cum += p;
            if cum > budget + 1e-15 {
                return v;
            }
        }
        f64::INFINITY
    };
    let q_pos = side_q(pos, gamma * p_f);
    let q_neg = side_q(neg, gamma * (1.0 - p_f));
    Ok(q_pos.min(q_neg))
}

/// Builds the error-propagation report for an estimated separator.
pub fn separator_error_diagnostics(
    theta_plus: &ParamVector,
    theta_minus: &ParamVector,
    gamma_plus: &CovEstimate,
    gamma_minus: &CovEstimate,
    opts: &DiagnosticsOptions,
) -> Result<SeparatorDiagnostics> {
    if theta_plus.d() != theta_minus.d() {
        return Err(Error::domain("dimension mismatch"));
    }
    let d = theta_plus.d();
    let mut coords: Vec<Coord> = gamma_plus
        .coords
        .iter()
        .chain(gamma_minus.coords.iter())
        .copied()
        .collect();
    coords.sort_unstable();
    coords.dedup();
    let m = coords.len();
    let mut cov = SymMat::zeros(m);
    for (part, est) in [gamma_plus, gamma_minus].iter().enumerate() {
        let _ = part;
        let map: Vec<usize> = est
            .coords
            .iter()
            .map(|c| coords.binary_search(c).expect("coord in union"))
            .collect();
        for i in 0..est.coords.len() {
            for j in 0..est.coords.len() {
                cov.add(map[i], map[j], est.matrix.get(i, j));
            }
        }
    }
    let k = d * (d + 1) / 2;
    let cov_trace = cov.trace();
    let (q_plus, q_minus) = if d <= Q_ENUMERATION_MAX_D {
        let plus = AutologisticModel::exact(theta_plus.clone(), Q_ENUMERATION_MAX_D)?;
        let minus = AutologisticModel::exact(theta_minus.clone(), Q_ENUMERATION_MAX_D)?;
        let f = ideal_separator(&plus, &minus)?;
        (
            Some(perturbation_radius(&plus, &f, opts.gamma_level)?),
            Some(perturbation_radius(&minus, &f, opts.gamma_level)?),
        )
    } else {
        (None, None)
    };
    Ok(SeparatorDiagnostics {
        coords,
        cov_trace,
        k,
        var_bound: k as f64 * cov_trace,
        lambda1: cov.largest_eigenvalue(),
        gamma_level: opts.gamma_level,
        q_plus,
        q_minus,
        cov,
    })
}

/// Sample size sufficient for the estimated separator to match the ideal
/// performance within the stated tolerances:
/// `N = max(50, 4 R(kappa)/q^2, 4 k lambda1 Q(kappa)/q^2)` where `R` and `Q`
/// are the standard-normal and chi-squared(k) upper percentiles.
pub fn sample_size_bound(q: f64, k: usize, lambda1: f64, kappa: f64) -> Result<u64> {
    if !(q > 0.0) {
        return Err(Error::domain(format!("q must be positive, got {q}")));
    }
    if !(0.0 < kappa && kappa < 1.0) {
        return Err(Error::domain(format!("kappa must lie in (0,1), got {kappa}")));
    }
    if k == 0 {
        return Err(Error::domain("k must be positive"));
    }
    if !(lambda1 >= 0.0) {
        return Err(Error::domain(format!("lambda1 must be nonnegative, got {lambda1}")));
    }
    let r = Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(1.0 - kappa);
    let chi = ChiSquared::new(k as f64)
        .map_err(|e| Error::domain(e.to_string()))?
        .inverse_cdf(1.0 - kappa);
    let term_a = 4.0 * r / (q * q);
    let term_b = 4.0 * k as f64 * lambda1 * chi / (q * q);
    Ok((term_a.max(term_b).ceil().max(50.0)) as u64)
}
