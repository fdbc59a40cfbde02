//! Autologistic distributions: probabilities, partition functions, Gibbs
//! sampling and Kullback–Leibler distances.
//!
//! The distribution over binary vectors `x` of length `d` is
//! `pi(x) = exp(-<theta, U(x)>) / Z(theta)` with sufficient statistics
//! `U_s(x) = x_s` and `U_{s,t}(x) = x_s x_t`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{h, log_sum_exp};
use crate::params::{Coord, ParamVector};

/// Default cutoff above which the exact partition sum is refused.
pub const DEFAULT_EXACT_CUTOFF: usize = 16;

/// Default sample count for the Monte Carlo partition function estimate.
pub const DEFAULT_MC_SAMPLES: usize = 10_000;

/// Gibbs sampler schedule: systematic site sweeps with burn-in and thinning.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GibbsConfig {
    /// Sweeps discarded before the first retained sample.
    pub burn_in: usize,
    /// Sweeps between retained samples.
    pub thin: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            burn_in: 100,
            thin: 5,
        }
    }
}

/// How a model's log partition function was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "log_z_method")]
pub enum LogZMethod {
    Exact,
    MonteCarlo { mc_samples: usize, seed: u64 },
}

/// A parameter vector together with its (exact or estimated) log partition
/// function.
///
/// Serializes flat: `{d, singles, pairs, mask, log_z, log_z_method, ...}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AutologisticModel {
    #[serde(flatten)]
    theta: ParamVector,
    log_z: f64,
    #[serde(flatten)]
    method: LogZMethod,
}

impl AutologisticModel {
    /// Builds a model with the exact partition function (capacity-limited).
    pub fn exact(theta: ParamVector, exact_cutoff: usize) -> Result<Self> {
        let log_z = log_partition_exact(&theta, exact_cutoff)?;
        Ok(AutologisticModel {
            theta,
            log_z,
            method: LogZMethod::Exact,
        })
    }

    /// Builds a model with a Monte Carlo estimate of the partition function.
    pub fn monte_carlo(theta: ParamVector, samples: usize, seed: u64) -> Result<Self> {
        let log_z = log_partition_mc(&theta, samples, seed)?;
        Ok(AutologisticModel {
            theta,
            log_z,
            method: LogZMethod::MonteCarlo {
                mc_samples: samples,
                seed,
            },
        })
    }

    /// Wraps a parameter vector with an externally supplied log Z.
    pub fn from_parts(theta: ParamVector, log_z: f64, method: LogZMethod) -> Self {
        AutologisticModel {
            theta,
            log_z,
            method,
        }
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    pub fn d(&self) -> usize {
        self.theta.d()
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn method(&self) -> LogZMethod {
        self.method
    }

    /// `log pi(x) = -<theta, U(x)> - log Z`.
    pub fn log_prob(&self, x: &[u8]) -> Result<f64> {
        Ok(-self.theta.energy(x)? - self.log_z)
    }

    pub fn log_prob_bits(&self, bits: u64) -> f64 {
        -self.theta.energy_bits(bits) - self.log_z
    }

    /// Draws `n` vectors by Gibbs sampling; deterministic in `seed`.
    pub fn sample(&self, n: usize, cfg: &GibbsConfig, seed: u64) -> Vec<Vec<u8>> {
        gibbs_sample(&self.theta, n, cfg, seed)
    }
}

/// Exact `log Z(theta)` by summation over all `2^d` configurations.
///
/// Refuses dimensions above `exact_cutoff` and points the caller at the
/// Monte Carlo variant instead.
pub fn log_partition_exact(theta: &ParamVector, exact_cutoff: usize) -> Result<f64> {
    let d = theta.d();
    if d > exact_cutoff || d >= 64 {
        return Err(Error::Capacity(format!(
            "exact partition function needs 2^{d} terms (cutoff {exact_cutoff}); \
             use the Monte Carlo estimate"
        )));
    }
    let values: Vec<f64> = (0..1u64 << d).map(|bits| -theta.energy_bits(bits)).collect();
    Ok(log_sum_exp(&values))
}

/// Monte Carlo estimate `log(2^d * mean_j exp(-<theta, U(W_j)>))` from
/// `n_samples` uniform binary vectors. Deterministic in `seed`.
///
/// The estimate is clamped below at 0 since `Z >= 1` always (the all-zero
/// configuration contributes `e^0`).
pub fn log_partition_mc(theta: &ParamVector, n_samples: usize, seed: u64) -> Result<f64> {
    if n_samples == 0 {
        return Err(Error::domain("n_samples must be at least 1"));
    }
    let d = theta.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![0u8; d];
    let mut values = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        for b in x.iter_mut() {
            *b = rng.random_range(0..=1u8);
        }
        values.push(-theta.energy_unchecked(&x));
    }
    let log_mean = log_sum_exp(&values) - (n_samples as f64).ln();
    Ok((d as f64 * std::f64::consts::LN_2 + log_mean).max(0.0))
}

/// Gibbs sampler with systematic site scan order `0..d`, the stated burn-in,
/// and `thin` sweeps between retained samples. Deterministic in `seed`.
pub fn gibbs_sample(theta: &ParamVector, n: usize, cfg: &GibbsConfig, seed: u64) -> Vec<Vec<u8>> {
    let d = theta.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // neighbor lists over the pair support
    let mut nbrs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); d];
    for (s, t) in theta.support_pairs() {
        let v = theta.pair(s, t);
        nbrs[s].push((t, v));
        nbrs[t].push((s, v));
    }
    let mut x: Vec<u8> = (0..d).map(|_| rng.random_range(0..=1u8)).collect();
    let sweep = |x: &mut Vec<u8>, rng: &mut ChaCha8Rng| {
        for s in 0..d {
            let mut field = theta.single(s);
            for &(r, v) in &nbrs[s] {
                if x[r] != 0 {
                    field += v;
                }
            }
            // P(X_s = 1 | rest) = h(a_s), a_s = -(theta_s + sum theta_{s,r} x_r)
            let p1 = h(-field);
            x[s] = u8::from(rng.random::<f64>() < p1);
        }
    };
    for _ in 0..cfg.burn_in {
        sweep(&mut x, &mut rng);
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        for _ in 0..cfg.thin.max(1) {
            sweep(&mut x, &mut rng);
        }
        out.push(x.clone());
    }
    out
}

/// Exact `E[U_c]` for the given coordinates, by enumeration.
pub fn exact_moments(theta: &ParamVector, coords: &[Coord], exact_cutoff: usize) -> Result<Vec<f64>> {
    let d = theta.d();
    if d > exact_cutoff || d >= 64 {
        return Err(Error::Capacity(format!(
            "exact moments need 2^{d} terms (cutoff {exact_cutoff})"
        )));
    }
    let log_z = log_partition_exact(theta, exact_cutoff)?;
    let mut acc = vec![0.0; coords.len()];
    for bits in 0..1u64 << d {
        let p = (-theta.energy_bits(bits) - log_z).exp();
        for (k, &c) in coords.iter().enumerate() {
            let u = match c {
                Coord::Single(s) => (bits >> s) & 1,
                Coord::Pair(s, t) => (bits >> s) & (bits >> t) & 1,
            };
            if u != 0 {
                acc[k] += p;
            }
        }
    }
    Ok(acc)
}

/// `E[U_c]` estimated from Gibbs samples.
pub fn sampled_moments(
    theta: &ParamVector,
    coords: &[Coord],
    n_samples: usize,
    cfg: &GibbsConfig,
    seed: u64,
) -> Vec<f64> {
    let samples = gibbs_sample(theta, n_samples, cfg, seed);
    let mut acc = vec![0.0; coords.len()];
    for x in &samples {
        for (k, &c) in coords.iter().enumerate() {
            let u = match c {
                Coord::Single(s) => x[s],
                Coord::Pair(s, t) => x[s] & x[t],
            };
            if u != 0 {
                acc[k] += 1.0;
            }
        }
    }
    for a in &mut acc {
        *a /= n_samples as f64;
    }
    acc
}

/// Moment source for the KL distance.
#[derive(Clone, Copy, Debug)]
pub struct KlOptions {
    pub exact_cutoff: usize,
    pub moment_samples: usize,
    pub gibbs: GibbsConfig,
    pub seed: u64,
}

impl Default for KlOptions {
    fn default() -> Self {
        KlOptions {
            exact_cutoff: DEFAULT_EXACT_CUTOFF,
            moment_samples: 10_000,
            gibbs: GibbsConfig::default(),
            seed: 0,
        }
    }
}

/// Symmetrized Kullback–Leibler distance
/// `KL(p, q) = sum_x (p(x) - q(x)) log(p(x)/q(x))`, computed as
/// `<theta_q - theta_p, E_p[U] - E_q[U]>`.
///
/// Moments come from enumeration when `d` is within the exact cutoff, and
/// from Gibbs samples otherwise.
pub fn kl_distance(p: &ParamVector, q: &ParamVector, opts: &KlOptions) -> Result<f64> {
    if p.d() != q.d() {
        return Err(Error::domain(format!(
            "dimension mismatch: {} vs {}",
            p.d(),
            q.d()
        )));
    }
    let diff = ParamVector::combine(1.0, q, -1.0, p)?;
    let coords = diff.nonzero_coords();
    if coords.is_empty() {
        return Ok(0.0);
    }
    let (mp, mq) = if p.d() <= opts.exact_cutoff {
        (
            exact_moments(p, &coords, opts.exact_cutoff)?,
            exact_moments(q, &coords, opts.exact_cutoff)?,
        )
    } else {
        (
            sampled_moments(p, &coords, opts.moment_samples, &opts.gibbs, opts.seed),
            sampled_moments(q, &coords, opts.moment_samples, &opts.gibbs, opts.seed.wrapping_add(1)),
        )
    };
    let mut kl = 0.0;
    for (k, &c) in coords.iter().enumerate() {
        kl += diff.get(c) * (mp[k] - mq[k]);
    }
    Ok(kl)
}

/// `norKL = KL / sqrt(d_plus + d_minus)`.
pub fn nor_kl(
    p: &ParamVector,
    q: &ParamVector,
    d_plus: usize,
    d_minus: usize,
    opts: &KlOptions,
) -> Result<f64> {
    if d_plus + d_minus == 0 {
        return Err(Error::domain("d_plus + d_minus must be positive"));
    }
    if d_plus + d_minus != p.d() {
        return Err(Error::domain(format!(
            "d_plus + d_minus = {} does not match d = {}",
            d_plus + d_minus,
            p.d()
        )));
    }
    Ok(kl_distance(p, q, opts)? / ((d_plus + d_minus) as f64).sqrt())
}
