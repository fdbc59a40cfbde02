//! Run configuration shared by the library pipeline and the CLI.
//!
//! Serialized as TOML for config files; every field has the documented
//! default so a partial file (or none at all) works.

use serde::{Deserialize, Serialize};

use crate::discriminate::{FitConfig, ZOptions};
use crate::model::{GibbsConfig, KlOptions};
use crate::mple::MpleConfig;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Relative accuracy of acquired m/z ratios.
    pub rho: f64,
    /// First grid abscissa; the smallest observed peak when absent.
    pub b1: Option<f64>,
    /// Minimal activation frequency for feature selection.
    pub thr: f64,
    /// Number of extreme-DP candidate sites per side.
    pub h: usize,
    /// Dependence threshold for retaining a site pair as a clique.
    pub chi2_threshold: f64,
    pub seed: u64,
    pub mple: MpleSection,
    pub gibbs: GibbsSection,
    pub mc: McSection,
    pub grid: GridSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            rho: 0.003,
            b1: None,
            thr: 0.20,
            h: 10,
            chi2_threshold: 3.84,
            seed: 0,
            mple: MpleSection::default(),
            gibbs: GibbsSection::default(),
            mc: McSection::default(),
            grid: GridSection::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct MpleSection {
    pub step: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub ci_level: f64,
    /// Skip significance pruning when false.
    pub prune: bool,
}

impl Default for MpleSection {
    fn default() -> Self {
        MpleSection {
            step: 0.05,
            max_iter: 200,
            grad_tol: 1e-4,
            ci_level: 0.90,
            prune: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsSection {
    pub burn_in: usize,
    pub thin: usize,
}

impl Default for GibbsSection {
    fn default() -> Self {
        GibbsSection {
            burn_in: 100,
            thin: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    /// Uniform samples for the Monte Carlo partition function.
    pub z_samples: usize,
    /// Largest dimension for exact partition sums.
    pub exact_cutoff: usize,
    /// Gibbs samples for moment estimates in KL distances.
    pub moment_samples: usize,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            z_samples: 10_000,
            exact_cutoff: 16,
            moment_samples: 10_000,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    /// Training-performance margin for the leave-one-out shortlist.
    pub loo_margin: f64,
    /// Upper bound on the clique counts enumerated per side.
    pub clique_cap: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            loo_margin: 0.08,
            clique_cap: 6,
        }
    }
}

impl RunConfig {
    pub fn mple_config(&self) -> MpleConfig {
        MpleConfig {
            step: self.mple.step,
            max_iter: self.mple.max_iter,
            grad_tol: self.mple.grad_tol,
            ci_level: self.mple.ci_level,
        }
    }

    pub fn gibbs_config(&self) -> GibbsConfig {
        GibbsConfig {
            burn_in: self.gibbs.burn_in,
            thin: self.gibbs.thin,
        }
    }

    pub fn z_options(&self) -> ZOptions {
        ZOptions {
            exact_cutoff: self.mc.exact_cutoff,
            mc_samples: self.mc.z_samples,
            seed: self.seed,
        }
    }

    pub fn kl_options(&self) -> KlOptions {
        KlOptions {
            exact_cutoff: self.mc.exact_cutoff,
            moment_samples: self.mc.moment_samples,
            gibbs: self.gibbs_config(),
            seed: self.seed,
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            mple: self.mple_config(),
            prune: self.mple.prune,
        }
    }

    pub fn from_toml(text: &str) -> crate::error::Result<Self> {
        toml::from_str(text).map_err(|e| crate::error::Error::Format(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}
