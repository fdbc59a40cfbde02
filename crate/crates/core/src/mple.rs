//! Maximum pseudo-likelihood estimation for autologistic models.
//!
//! The pseudo-likelihood of an observation `x` under a tentative parameter
//! `T` is the product of the single-site conditional specifications. With
//! `a_s(T) = -(T_s + sum_r T_{s,r} x_r)` the per-site log term is
//! `x_s a_s + log g(a_s)`, which is concave in `T`, so a plain gradient
//! ascent from `T = 0` finds the maximizer of the empirical mean.
//!
//! Estimation error bars come from the sandwich covariance
//! `Gamma = H^-1 Sigma H^-1` built from the empirical Hessian and the
//! empirical second moment of per-observation gradients at the optimum;
//! iterated pruning then zeroes every coordinate whose confidence interval
//! straddles zero.

use std::collections::BTreeSet;

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::linalg::SymMat;
use crate::math::{h, log_g, phi_second};
use crate::params::{Coord, ParamVector};

/// Gradient-ascent settings.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MpleConfig {
    /// Ascent step size.
    pub step: f64,
    /// Maximum number of ascent iterations.
    pub max_iter: usize,
    /// Stop once the sup-norm of the mean gradient drops below this.
    pub grad_tol: f64,
    /// Two-sided confidence level for the per-coordinate intervals.
    pub ci_level: f64,
}

impl Default for MpleConfig {
    fn default() -> Self {
        MpleConfig {
            step: 0.05,
            max_iter: 200,
            grad_tol: 1e-4,
            ci_level: 0.90,
        }
    }
}

/// Dataset plus coordinate support for pseudo-likelihood evaluation.
pub struct PlContext<'a> {
    rows: &'a [Vec<u8>],
    d: usize,
    support: Vec<(usize, usize)>,
    mask: BTreeSet<Coord>,
    active: Vec<Coord>,
    /// Active index of `Single(s)`, if unmasked.
    single_idx: Vec<Option<usize>>,
    /// Per site: (neighbor site, active index of the pair coordinate).
    nbrs: Vec<Vec<(usize, usize)>>,
}

impl<'a> PlContext<'a> {
    pub fn new(
        rows: &'a [Vec<u8>],
        support: impl IntoIterator<Item = (usize, usize)>,
        mask: impl IntoIterator<Item = Coord>,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::domain("pseudo-likelihood needs a nonempty dataset"));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::domain("all observations must have the same length"));
        }
        let mut support: Vec<(usize, usize)> = support
            .into_iter()
            .map(|(s, t)| {
                let (s, t) = if s < t { (s, t) } else { (t, s) };
                if t >= d || s == t {
                    Err(Error::domain(format!("invalid pair ({s},{t}) for d={d}")))
                } else {
                    Ok((s, t))
                }
            })
            .collect::<Result<_>>()?;
        support.sort_unstable();
        support.dedup();
        let mask: BTreeSet<Coord> = mask.into_iter().collect();

        let mut active = Vec::new();
        let mut single_idx = vec![None; d];
        for s in 0..d {
            if !mask.contains(&Coord::Single(s)) {
                single_idx[s] = Some(active.len());
                active.push(Coord::Single(s));
            }
        }
        let mut nbrs: Vec<Vec<(usize, usize)>> = vec![Vec::new(); d];
        for &(s, t) in &support {
            if !mask.contains(&Coord::Pair(s, t)) {
                let idx = active.len();
                active.push(Coord::Pair(s, t));
                nbrs[s].push((t, idx));
                nbrs[t].push((s, idx));
            }
        }
        Ok(PlContext {
            rows,
            d,
            support,
            mask,
            active,
            single_idx,
            nbrs,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        self.rows
    }

    pub fn support(&self) -> &[(usize, usize)] {
        &self.support
    }

    pub fn mask(&self) -> &BTreeSet<Coord> {
        &self.mask
    }

    /// Free coordinates, singles first then pairs, each ascending.
    pub fn active_coords(&self) -> &[Coord] {
        &self.active
    }

    fn with_mask(&self, mask: BTreeSet<Coord>) -> Result<PlContext<'a>> {
        PlContext::new(self.rows, self.support.iter().copied(), mask)
    }

    /// Packs a parameter vector into the active-coordinate layout.
    pub fn pack(&self, theta: &ParamVector) -> Result<Vec<f64>> {
        if theta.d() != self.d {
            return Err(Error::domain(format!(
                "parameter dimension {} does not match data dimension {}",
                theta.d(),
                self.d
            )));
        }
        for &c in &self.mask {
            if theta.get(c) != 0.0 {
                return Err(Error::domain(format!(
                    "parameter violates mask at coordinate {}",
                    c.label()
                )));
            }
        }
        for (s, t) in theta.support_pairs() {
            if theta.pair(s, t) != 0.0 && !self.support.contains(&(s, t)) {
                return Err(Error::domain(format!(
                    "parameter has nonzero pair ({s},{t}) outside the clique support"
                )));
            }
        }
        Ok(self.active.iter().map(|&c| theta.get(c)).collect())
    }

    /// Expands an active-coordinate vector into a parameter vector carrying
    /// the context's support and mask.
    pub fn unpack(&self, t: &[f64]) -> ParamVector {
        let mut theta = ParamVector::with_pairs(self.d, self.support.iter().copied())
            .expect("support already validated");
        for (&c, &v) in self.active.iter().zip(t) {
            theta.set(c, v).expect("active coordinates are unmasked");
        }
        for &c in &self.mask {
            theta.mask(c).expect("mask coordinates are valid");
        }
        theta
    }

    #[inline]
    fn local_field(&self, t: &[f64], x: &[u8], s: usize) -> f64 {
        let mut field = match self.single_idx[s] {
            Some(i) => t[i],
            None => 0.0,
        };
        for &(r, idx) in &self.nbrs[s] {
            if x[r] != 0 {
                field += t[idx];
            }
        }
        field
    }

    fn lpl_active(&self, t: &[f64], x: &[u8]) -> f64 {
        let mut total = 0.0;
        for s in 0..self.d {
            let a = -self.local_field(t, x, s);
            total += f64::from(x[s]) * a + log_g(a);
        }
        total
    }

    fn grad_active(&self, t: &[f64], x: &[u8], out: &mut [f64]) {
        for s in 0..self.d {
            let a = -self.local_field(t, x, s);
            let c = f64::from(x[s]) - h(a);
            // gradient of the s-th term is c * A(s,x) with A entries -1/-x_r
            if let Some(i) = self.single_idx[s] {
                out[i] -= c;
            }
            for &(r, idx) in &self.nbrs[s] {
                if x[r] != 0 {
                    out[idx] -= c;
                }
            }
        }
    }

    fn hess_active(&self, t: &[f64], x: &[u8], out: &mut SymMat, touched: &mut Vec<usize>) {
        for s in 0..self.d {
            let a = -self.local_field(t, x, s);
            let w = phi_second(a);
            touched.clear();
            if let Some(i) = self.single_idx[s] {
                touched.push(i);
            }
            for &(r, idx) in &self.nbrs[s] {
                if x[r] != 0 {
                    touched.push(idx);
                }
            }
            // every nonzero A entry is -1, so the rank-one update adds w
            for &i in touched.iter() {
                for &j in touched.iter() {
                    out.add(i, j, w);
                }
            }
        }
    }

    /// Log pseudo-likelihood of one observation.
    pub fn lpl(&self, x: &[u8], theta: &ParamVector) -> Result<f64> {
        self.check_obs(x)?;
        let t = self.pack(theta)?;
        Ok(self.lpl_active(&t, x))
    }

    /// Analytic gradient over the active coordinates.
    pub fn lpl_gradient(&self, x: &[u8], theta: &ParamVector) -> Result<Vec<f64>> {
        self.check_obs(x)?;
        let t = self.pack(theta)?;
        let mut g = vec![0.0; self.active.len()];
        self.grad_active(&t, x, &mut g);
        Ok(g)
    }

    /// Analytic Hessian over the active coordinates (negative semidefinite).
    pub fn lpl_hessian(&self, x: &[u8], theta: &ParamVector) -> Result<SymMat> {
        self.check_obs(x)?;
        let t = self.pack(theta)?;
        let mut m = SymMat::zeros(self.active.len());
        let mut touched = Vec::new();
        self.hess_active(&t, x, &mut m, &mut touched);
        Ok(m)
    }

    /// Empirical mean log pseudo-likelihood over the dataset.
    pub fn mean_lpl(&self, theta: &ParamVector) -> Result<f64> {
        let t = self.pack(theta)?;
        Ok(self.rows.iter().map(|x| self.lpl_active(&t, x)).sum::<f64>() / self.n() as f64)
    }

    fn mean_grad_active(&self, t: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for x in self.rows {
            self.grad_active(t, x, out);
        }
        let inv = 1.0 / self.n() as f64;
        out.iter_mut().for_each(|v| *v *= inv);
    }

    fn check_obs(&self, x: &[u8]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::domain(format!(
                "observation length {} does not match d={}",
                x.len(),
                self.d
            )));
        }
        Ok(())
    }
}

/// Per-coordinate estimate with its two-sided confidence interval.
#[derive(Clone, Debug, Serialize)]
pub struct CoordInterval {
    #[serde(serialize_with = "ser_coord")]
    pub coord: Coord,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

fn ser_coord<S: serde::Serializer>(c: &Coord, ser: S) -> std::result::Result<S::Ok, S::Error> {
    ser.serialize_str(&c.label())
}

/// Estimated asymptotic covariance of `sqrt(n) (theta_hat - theta)` over a
/// coordinate list.
#[derive(Clone, Debug)]
pub struct CovEstimate {
    pub coords: Vec<Coord>,
    pub matrix: SymMat,
}

impl CovEstimate {
    pub fn diag_of(&self, coord: Coord) -> Option<f64> {
        self.coords
            .iter()
            .position(|&c| c == coord)
            .map(|i| self.matrix.get(i, i))
    }
}

/// Outcome of an MPLE fit (optionally after pruning rounds).
#[derive(Clone, Debug)]
pub struct MpleResult {
    pub theta_hat: ParamVector,
    /// Ascent iterations, summed over pruning rounds.
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
    pub n_obs: usize,
    pub gamma: Option<CovEstimate>,
    pub ci: Vec<CoordInterval>,
    /// Coordinates zeroed by significance pruning.
    pub eliminated: Vec<Coord>,
    pub warning: Option<String>,
}

/// JSON summary: estimates, covariance diagonal, intervals, eliminations.
#[derive(Serialize)]
pub struct MpleSummary {
    pub theta: ParamVector,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
    pub n_obs: usize,
    pub gamma_diag: std::collections::BTreeMap<String, f64>,
    pub ci: Vec<CoordInterval>,
    pub eliminated: Vec<String>,
    pub warning: Option<String>,
}

impl MpleResult {
    pub fn summary(&self) -> MpleSummary {
        let gamma_diag = match &self.gamma {
            Some(g) => g
                .coords
                .iter()
                .enumerate()
                .map(|(i, c)| (c.label(), g.matrix.get(i, i)))
                .collect(),
            None => Default::default(),
        };
        MpleSummary {
            theta: self.theta_hat.clone(),
            iterations: self.iterations,
            final_grad_norm: self.final_grad_norm,
            converged: self.converged,
            n_obs: self.n_obs,
            gamma_diag,
            ci: self.ci.clone(),
            eliminated: self.eliminated.iter().map(|c| c.label()).collect(),
            warning: self.warning.clone(),
        }
    }
}

fn z_for_level(level: f64) -> Result<f64> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::domain(format!("confidence level {level} out of (0,1)")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

/// Gradient ascent `T(j+1) = T(j) + step * G(T(j))` from `T(0) = 0`.
fn ascend(ctx: &PlContext, cfg: &MpleConfig) -> Result<(Vec<f64>, usize, f64, bool)> {
    let k = ctx.active_coords().len();
    let mut t = vec![0.0; k];
    let mut grad = vec![0.0; k];
    let mut iterations = 0;
    let mut converged = false;
    let mut gnorm;
    loop {
        ctx.mean_grad_active(&t, &mut grad);
        gnorm = grad.iter().fold(0.0_f64, |a, g| a.max(g.abs()));
        if !gnorm.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite gradient after {iterations} iterations (sup-norm {gnorm}); \
                 the data may be separated"
            )));
        }
        if gnorm < cfg.grad_tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iter {
            break;
        }
        for (ti, gi) in t.iter_mut().zip(&grad) {
            *ti += cfg.step * gi;
        }
        iterations += 1;
    }
    Ok((t, iterations, gnorm, converged))
}

/// Sandwich covariance at `t`: `H^-1 Sigma H^-1` with the empirical Hessian
/// and the empirical mean of per-observation gradient outer products.
fn covariance_active(ctx: &PlContext, t: &[f64]) -> Result<SymMat> {
    let k = ctx.active_coords().len();
    let mut hess = SymMat::zeros(k);
    let mut sigma = SymMat::zeros(k);
    let mut g = vec![0.0; k];
    let mut touched = Vec::new();
    for x in ctx.rows() {
        ctx.hess_active(t, x, &mut hess, &mut touched);
        g.iter_mut().for_each(|v| *v = 0.0);
        ctx.grad_active(t, x, &mut g);
        let entries: Vec<(usize, f64)> = g
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        sigma.rank_one_sparse(1.0, &entries);
    }
    let inv_n = 1.0 / ctx.n() as f64;
    hess.scale(-inv_n); // -H is positive definite for concave objectives
    sigma.scale(inv_n);
    let names: Vec<String> = ctx.active_coords().iter().map(|c| c.label()).collect();
    let m_inv = hess.spd_inverse(Some(&names))?;
    Ok(m_inv.sandwich(&sigma))
}

/// Estimated asymptotic covariance `Gamma = H^-1 Sigma H^-1` at a fitted
/// parameter. Errors name the offending coordinates when the empirical
/// Hessian is rank deficient.
pub fn asymptotic_covariance(ctx: &PlContext, theta_hat: &ParamVector) -> Result<CovEstimate> {
    let t = ctx.pack(theta_hat)?;
    let matrix = covariance_active(ctx, &t)?;
    Ok(CovEstimate {
        coords: ctx.active_coords().to_vec(),
        matrix,
    })
}

fn intervals(
    ctx: &PlContext,
    t: &[f64],
    gamma: &SymMat,
    n: usize,
    level: f64,
) -> Result<Vec<CoordInterval>> {
    let z = z_for_level(level)?;
    Ok(ctx
        .active_coords()
        .iter()
        .enumerate()
        .map(|(i, &coord)| {
            let var = gamma.get(i, i).max(0.0);
            let hw = z * (var / n as f64).sqrt();
            CoordInterval {
                coord,
                estimate: t[i],
                lo: t[i] - hw,
                hi: t[i] + hw,
            }
        })
        .collect())
}

/// Maximum pseudo-likelihood fit by gradient ascent from `T = 0`.
///
/// The covariance and confidence intervals are attached when the empirical
/// Hessian is invertible; otherwise they are left empty and a warning is
/// recorded (degenerate/separated data keeps the capped estimate).
pub fn fit(ctx: &PlContext, cfg: &MpleConfig) -> Result<MpleResult> {
    let (t, iterations, gnorm, converged) = ascend(ctx, cfg)?;
    let mut result = MpleResult {
        theta_hat: ctx.unpack(&t),
        iterations,
        final_grad_norm: gnorm,
        converged,
        n_obs: ctx.n(),
        gamma: None,
        ci: Vec::new(),
        eliminated: Vec::new(),
        warning: None,
    };
    match covariance_active(ctx, &t) {
        Ok(matrix) => {
            result.ci = intervals(ctx, &t, &matrix, ctx.n(), cfg.ci_level)?;
            result.gamma = Some(CovEstimate {
                coords: ctx.active_coords().to_vec(),
                matrix,
            });
        }
        Err(Error::RankDeficient { coords }) => {
            result.warning = Some(format!(
                "covariance unavailable: rank-deficient Hessian at {coords:?}"
            ));
        }
        Err(e) => return Err(e),
    }
    if !converged {
        let w = format!(
            "no convergence after {iterations} iterations (grad sup-norm {gnorm:.3e})"
        );
        result.warning = Some(match result.warning.take() {
            Some(prev) => format!("{prev}; {w}"),
            None => w,
        });
    }
    Ok(result)
}

/// Iterated elimination of non-significant coordinates: every coordinate
/// whose confidence interval contains 0 is constrained to zero and the model
/// is refit, until all remaining coordinates are significant.
pub fn prune_insignificant(
    ctx: &PlContext,
    result: &MpleResult,
    cfg: &MpleConfig,
    level: f64,
) -> Result<MpleResult> {
    z_for_level(level)?;
    let mut current = result.clone();
    let mut mask = ctx.mask().clone();
    let mut eliminated: Vec<Coord> = result.eliminated.clone();
    let mut total_iterations = result.iterations;
    loop {
        if current.gamma.is_none() {
            return Err(Error::domain(
                "pruning requires a covariance estimate; the previous fit had none",
            ));
        }
        let level_ci = if (level - cfg.ci_level).abs() < 1e-12 {
            current.ci.clone()
        } else {
            let sub = ctx.with_mask(mask.clone())?;
            let t = sub.pack(&current.theta_hat)?;
            intervals(
                &sub,
                &t,
                &current.gamma.as_ref().unwrap().matrix,
                sub.n(),
                level,
            )?
        };
        let to_drop: Vec<Coord> = level_ci
            .iter()
            .filter(|ci| ci.lo <= 0.0 && ci.hi >= 0.0)
            .map(|ci| ci.coord)
            .collect();
        if to_drop.is_empty() {
            current.iterations = total_iterations;
            current.eliminated = eliminated;
            return Ok(current);
        }
        for c in &to_drop {
            mask.insert(*c);
        }
        eliminated.extend(to_drop.iter().copied());
        let sub = ctx.with_mask(mask.clone())?;
        if sub.active_coords().is_empty() {
            // everything was eliminated: return the all-zero model
            let mut final_result = fit(&sub, cfg)?;
            final_result.iterations += total_iterations;
            final_result.eliminated = eliminated;
            final_result.warning = Some("all coordinates eliminated; model is uniform".into());
            log::warn!("significance pruning eliminated every coordinate");
            return Ok(final_result);
        }
        current = fit(&sub, cfg)?;
        total_iterations += current.iterations;
    }
}

/// Fit followed by significance pruning at `cfg.ci_level`.
pub fn fit_pruned(ctx: &PlContext, cfg: &MpleConfig) -> Result<MpleResult> {
    let first = fit(ctx, cfg)?;
    if first.gamma.is_none() {
        // separated/degenerate data: keep the capped fit, flagged
        return Ok(first);
    }
    prune_insignificant(ctx, &first, cfg, cfg.ci_level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gibbs_sample, AutologisticModel, GibbsConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<u8>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(0..=1u8)).collect())
            .collect()
    }

    fn random_theta_for(ctx: &PlContext, seed: u64) -> ParamVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut theta = ParamVector::with_pairs(ctx.d(), ctx.support().iter().copied()).unwrap();
        for &c in ctx.active_coords() {
            theta.set(c, rng.random_range(-1.5..1.5)).unwrap();
        }
        theta
    }

    #[test]
    fn lpl_at_zero_is_d_log_half() {
        let rows = random_rows(4, 5, 1);
        let ctx = PlContext::new(&rows, [(0, 1), (2, 4)], []).unwrap();
        let theta = ParamVector::with_pairs(5, [(0, 1), (2, 4)]).unwrap();
        for x in &rows {
            let v = ctx.lpl(x, &theta).unwrap();
            assert!((v - 5.0 * 0.5f64.ln()).abs() < 1e-12);
            assert!(v <= 0.0);
        }
    }

    #[test]
    fn lpl_single_site_closed_form() {
        // d=1, x=1: LPL = -t + log g(-t) = log h(-t)
        let rows = vec![vec![1u8]];
        let ctx = PlContext::new(&rows, [], []).unwrap();
        for &t in &[-2.0, 0.3, 1.7] {
            let mut theta = ParamVector::zeros(1);
            theta.set_single(0, t).unwrap();
            let v = ctx.lpl(&rows[0], &theta).unwrap();
            assert!((v - h(-t).ln()).abs() < 1e-12);
        }
    }

    /// Oracle: conditional probabilities from the exact joint distribution.
    fn lpl_via_conditionals(x: &[u8], theta: &ParamVector) -> f64 {
        let model = AutologisticModel::exact(theta.clone(), 16).unwrap();
        let mut bits = 0u64;
        for (s, &b) in x.iter().enumerate() {
            bits |= (b as u64) << s;
        }
        let mut total = 0.0;
        for s in 0..x.len() {
            let here = model.log_prob_bits(bits).exp();
            let flipped = model.log_prob_bits(bits ^ (1 << s)).exp();
            total += (here / (here + flipped)).ln();
        }
        total
    }

    #[test]
    fn lpl_matches_conditional_probability_oracle() {
        let rows = random_rows(6, 3, 5);
        let ctx = PlContext::new(&rows, [(0, 1), (1, 2), (0, 2)], []).unwrap();
        let theta = random_theta_for(&ctx, 9);
        for x in &rows {
            let direct = ctx.lpl(x, &theta).unwrap();
            let oracle = lpl_via_conditionals(x, &theta);
            assert!((direct - oracle).abs() < 1e-12, "{direct} vs {oracle}");
        }
    }

    /// Test-side central finite differences of the LPL.
    fn fd_gradient(ctx: &PlContext, x: &[u8], theta: &ParamVector, step: f64) -> Vec<f64> {
        ctx.active_coords()
            .iter()
            .map(|&c| {
                let mut plus = theta.clone();
                plus.set(c, theta.get(c) + step).unwrap();
                let mut minus = theta.clone();
                minus.set(c, theta.get(c) - step).unwrap();
                (ctx.lpl(x, &plus).unwrap() - ctx.lpl(x, &minus).unwrap()) / (2.0 * step)
            })
            .collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let rows = random_rows(8, 6, 13);
        let ctx = PlContext::new(&rows, [(0, 3), (1, 2), (4, 5), (2, 5)], []).unwrap();
        let theta = random_theta_for(&ctx, 15);
        for x in rows.iter().take(4) {
            let analytic = ctx.lpl_gradient(x, &theta).unwrap();
            let numeric = fd_gradient(&ctx, x, &theta, 1e-5);
            let norm: f64 = numeric.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err: f64 = analytic
                .iter()
                .zip(&numeric)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            assert!(err / norm.max(1e-8) < 1e-6, "rel err {}", err / norm);
        }
    }

    #[test]
    fn gradient_at_zero_on_all_ones() {
        // coordinate s of the gradient at T=0 with x all-ones is -1 + 1/2
        let rows = vec![vec![1u8, 1, 1]];
        let ctx = PlContext::new(&rows, [], []).unwrap();
        let theta = ParamVector::zeros(3);
        let g = ctx.lpl_gradient(&rows[0], &theta).unwrap();
        for v in g {
            assert!((v + 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_gradient_is_mean_of_observation_gradients() {
        let rows = random_rows(10, 4, 23);
        let ctx = PlContext::new(&rows, [(0, 1)], []).unwrap();
        let theta = random_theta_for(&ctx, 24);
        let t = ctx.pack(&theta).unwrap();
        let mut mean = vec![0.0; ctx.active_coords().len()];
        ctx.mean_grad_active(&t, &mut mean);
        let mut acc = vec![0.0; mean.len()];
        for x in &rows {
            for (a, g) in acc.iter_mut().zip(ctx.lpl_gradient(x, &theta).unwrap()) {
                *a += g / rows.len() as f64;
            }
        }
        for (a, b) in mean.iter().zip(&acc) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hessian_is_negative_semidefinite() {
        let rows = random_rows(6, 5, 31);
        let ctx = PlContext::new(&rows, [(0, 1), (2, 3), (3, 4)], []).unwrap();
        let theta = random_theta_for(&ctx, 33);
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for x in &rows {
            let hess = ctx.lpl_hessian(x, &theta).unwrap();
            for _ in 0..100 {
                let v: Vec<f64> = (0..hess.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
                assert!(hess.quad_form(&v) <= 1e-12);
            }
        }
    }

    #[test]
    fn hessian_matches_finite_differences_of_gradient() {
        let rows = random_rows(5, 5, 41);
        let ctx = PlContext::new(&rows, [(0, 2), (1, 4)], []).unwrap();
        let theta = random_theta_for(&ctx, 43);
        let x = &rows[0];
        let hess = ctx.lpl_hessian(x, &theta).unwrap();
        let k = ctx.active_coords().len();
        let step = 1e-5;
        for (j, &c) in ctx.active_coords().iter().enumerate() {
            let mut plus = theta.clone();
            plus.set(c, theta.get(c) + step).unwrap();
            let mut minus = theta.clone();
            minus.set(c, theta.get(c) - step).unwrap();
            let gp = ctx.lpl_gradient(x, &plus).unwrap();
            let gm = ctx.lpl_gradient(x, &minus).unwrap();
            for i in 0..k {
                let fd = (gp[i] - gm[i]) / (2.0 * step);
                assert!(
                    (hess.get(i, j) - fd).abs() < 1e-5,
                    "H[{i},{j}] {} vs fd {fd}",
                    hess.get(i, j)
                );
            }
        }
    }

    #[test]
    fn hessian_single_site_closed_form() {
        let rows = vec![vec![0u8]];
        let ctx = PlContext::new(&rows, [], []).unwrap();
        let t = 0.9;
        let mut theta = ParamVector::zeros(1);
        theta.set_single(0, t).unwrap();
        let hess = ctx.lpl_hessian(&rows[0], &theta).unwrap();
        let expect = -(-t).exp() / (1.0 + (-t).exp()).powi(2);
        assert!((hess.get(0, 0) - expect).abs() < 1e-12);
    }

    #[test]
    fn default_config_matches_published_settings() {
        let cfg = MpleConfig::default();
        assert_eq!(cfg.step, 0.05);
        assert_eq!(cfg.max_iter, 200);
        assert_eq!(cfg.grad_tol, 1e-4);
        assert_eq!(cfg.ci_level, 0.90);
        // z for 90% two-sided
        assert!((z_for_level(0.90).unwrap() - 1.6449).abs() < 1e-4);
    }

    #[test]
    fn ascent_increases_the_objective() {
        let rows = random_rows(40, 4, 51);
        let ctx = PlContext::new(&rows, [(0, 1), (2, 3)], []).unwrap();
        let cfg = MpleConfig::default();
        let mut t = vec![0.0; ctx.active_coords().len()];
        let mut grad = vec![0.0; t.len()];
        let mut last = ctx.mean_lpl(&ctx.unpack(&t)).unwrap();
        for _ in 0..50 {
            ctx.mean_grad_active(&t, &mut grad);
            for (ti, gi) in t.iter_mut().zip(&grad) {
                *ti += cfg.step * gi;
            }
            let now = ctx.mean_lpl(&ctx.unpack(&t)).unwrap();
            assert!(now >= last - 1e-9, "objective decreased: {last} -> {now}");
            last = now;
        }
    }

    #[test]
    fn degenerate_all_zero_data_is_flagged() {
        let rows = vec![vec![0u8, 0]; 30];
        let ctx = PlContext::new(&rows, [], []).unwrap();
        let cfg = MpleConfig {
            max_iter: 300,
            ..Default::default()
        };
        let r = fit(&ctx, &cfg).unwrap();
        assert!(!r.converged);
        assert!(r.warning.is_some());
        // coordinates drift towards +inf (P(x=1) -> 0)
        assert!(r.theta_hat.single(0) > 1.0);
        assert!(r.theta_hat.single(1) > 1.0);
    }

    #[test]
    fn recovers_synthetic_parameters_within_error_bars() {
        // sample from a known model, refit, check 3-sigma coordinate-wise
        let d = 6;
        let mut theta = ParamVector::with_pairs(d, [(0, 1), (2, 3), (4, 5)]).unwrap();
        let vals = [0.8, -0.6, 0.4, -1.0, 0.9, -0.3];
        for (s, &v) in vals.iter().enumerate() {
            theta.set_single(s, v).unwrap();
        }
        theta.set_pair(0, 1, -0.7).unwrap();
        theta.set_pair(2, 3, 0.5).unwrap();
        theta.set_pair(4, 5, 0.6).unwrap();
        let rows = gibbs_sample(&theta, 2000, &GibbsConfig::default(), 77);
        let ctx = PlContext::new(&rows, theta.support_pairs(), []).unwrap();
        let cfg = MpleConfig {
            step: 0.2,
            max_iter: 4000,
            grad_tol: 1e-6,
            ci_level: 0.90,
        };
        let r = fit(&ctx, &cfg).unwrap();
        assert!(r.converged);
        let gamma = r.gamma.as_ref().unwrap();
        for (i, &c) in gamma.coords.iter().enumerate() {
            let sd = (gamma.matrix.get(i, i) / rows.len() as f64).sqrt();
            let err = (r.theta_hat.get(c) - theta.get(c)).abs();
            assert!(
                err < 3.0 * sd,
                "{}: err {err} vs 3 sigma {}",
                c.label(),
                3.0 * sd
            );
        }
    }

    #[test]
    fn covariance_diagonal_is_nonnegative() {
        let rows = random_rows(60, 4, 61);
        let ctx = PlContext::new(&rows, [(0, 1)], []).unwrap();
        let r = fit(&ctx, &MpleConfig::default()).unwrap();
        let gamma = r.gamma.unwrap();
        for i in 0..gamma.matrix.n() {
            assert!(gamma.matrix.get(i, i) >= 0.0);
        }
    }

    #[test]
    fn pruning_is_a_fixed_point_when_all_significant() {
        // strong singles, plenty of data: everything stays
        let d = 3;
        let mut theta = ParamVector::zeros(d);
        for s in 0..d {
            theta.set_single(s, 1.2).unwrap();
        }
        let rows = gibbs_sample(&theta, 3000, &GibbsConfig::default(), 5);
        let ctx = PlContext::new(&rows, [], []).unwrap();
        let cfg = MpleConfig {
            step: 0.2,
            max_iter: 2000,
            grad_tol: 1e-6,
            ci_level: 0.90,
        };
        let first = fit(&ctx, &cfg).unwrap();
        let pruned = prune_insignificant(&ctx, &first, &cfg, 0.90).unwrap();
        assert!(pruned.eliminated.is_empty());
        assert_eq!(pruned.theta_hat, first.theta_hat);
    }

    #[test]
    fn pruning_removes_planted_zero_coordinates() {
        // theta* has two exactly-zero coordinates; pruning should zero them
        // in at least 8 of 10 seeds
        let d = 4;
        let mut theta = ParamVector::with_pairs(d, [(0, 1)]).unwrap();
        theta.set_single(0, 1.0).unwrap();
        theta.set_single(1, -0.8).unwrap();
        // singles 2 and 3 are exactly zero
        theta.set_pair(0, 1, 0.9).unwrap();
        let cfg = MpleConfig {
            step: 0.2,
            max_iter: 3000,
            grad_tol: 1e-6,
            ci_level: 0.90,
        };
        let mut hits = 0;
        for seed in 0..10u64 {
            let rows = gibbs_sample(&theta, 3000, &GibbsConfig::default(), 1000 + seed);
            let ctx = PlContext::new(&rows, [(0, 1)], []).unwrap();
            let r = fit_pruned(&ctx, &cfg).unwrap();
            let both = r.eliminated.contains(&Coord::Single(2))
                && r.eliminated.contains(&Coord::Single(3));
            if both {
                hits += 1;
            }
        }
        assert!(hits >= 8, "planted zeros pruned in only {hits}/10 seeds");
    }

    #[test]
    fn pruning_everything_yields_uniform_model_with_warning() {
        // pure-noise coin flips, tiny n: nothing significant
        let rows = random_rows(12, 3, 71);
        let ctx = PlContext::new(&rows, [], []).unwrap();
        let cfg = MpleConfig::default();
        let first = fit(&ctx, &cfg).unwrap();
        let pruned = prune_insignificant(&ctx, &first, &cfg, 0.999999).unwrap();
        assert_eq!(pruned.eliminated.len(), 3);
        assert!(pruned.warning.as_deref().unwrap_or("").contains("eliminated"));
        for s in 0..3 {
            assert_eq!(pruned.theta_hat.single(s), 0.0);
        }
    }
}
