//! End-to-end signature discovery: feature selection by discriminating
//! power, chi-squared clique discovery, the dimension-quadruplet grid with
//! accelerated leave-one-out optimization, scores, and classification.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::discriminate::{
    estimate_separator, evaluate_loo, evaluate_training, PerfMethod, PerformanceRecord, Separator,
};
use crate::error::{Error, Result};
use crate::model::nor_kl;
use crate::mple::{self, MpleResult, PlContext};
use crate::params::{Coord, ParamVector};
use crate::spectra::{BinaryDataset, PeakSpectrum};

/// Activation statistics of one site across the two groups.
#[derive(Clone, Debug, Serialize)]
pub struct SiteStats {
    /// Original site index.
    pub site: usize,
    pub mz: f64,
    pub m_plus: f64,
    pub m_minus: f64,
    /// Discriminating power `m_plus / m_minus`; only defined when both
    /// frequencies clear the threshold.
    pub dp: Option<f64>,
}

/// Dimension quadruplet `(d+, c+; d-, c-)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 4]", into = "[usize; 4]")]
pub struct DimQuad {
    pub d_plus: usize,
    pub c_plus: usize,
    pub d_minus: usize,
    pub c_minus: usize,
}

impl DimQuad {
    pub fn new(d_plus: usize, c_plus: usize, d_minus: usize, c_minus: usize) -> Self {
        DimQuad {
            d_plus,
            c_plus,
            d_minus,
            c_minus,
        }
    }

    pub fn validate(&self, h: usize) -> Result<()> {
        if self.d_plus == 0 || self.d_minus == 0 {
            return Err(Error::domain("d+ and d- must be at least 1"));
        }
        if self.d_plus > h || self.d_minus > h {
            return Err(Error::domain(format!(
                "d+ = {} and d- = {} must not exceed H = {h}",
                self.d_plus, self.d_minus
            )));
        }
        Ok(())
    }

    pub fn d_total(&self) -> usize {
        self.d_plus + self.d_minus
    }

    pub fn c_total(&self) -> usize {
        self.c_plus + self.c_minus
    }

    /// Parses `"7,0,11,2"`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<usize> = text
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Error::format(format!("invalid quadruplet `{text}`")))
            })
            .collect::<Result<_>>()?;
        if parts.len() != 4 {
            return Err(Error::format(format!(
                "quadruplet `{text}` must have four components d+,c+,d-,c-"
            )));
        }
        Ok(DimQuad::new(parts[0], parts[1], parts[2], parts[3]))
    }
}

impl From<[usize; 4]> for DimQuad {
    fn from(v: [usize; 4]) -> Self {
        DimQuad::new(v[0], v[1], v[2], v[3])
    }
}

impl From<DimQuad> for [usize; 4] {
    fn from(d: DimQuad) -> Self {
        [d.d_plus, d.c_plus, d.d_minus, d.c_minus]
    }
}

impl std::fmt::Display for DimQuad {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({}, {}; {}, {})",
            self.d_plus, self.c_plus, self.d_minus, self.c_minus
        )
    }
}

/// Computes activation statistics for every shared site.
pub fn site_stats(
    bin_plus: &BinaryDataset,
    bin_minus: &BinaryDataset,
    thr: f64,
) -> Result<Vec<SiteStats>> {
    if bin_plus.site_index() != bin_minus.site_index() {
        return Err(Error::domain("the two groups must share the same site list"));
    }
    Ok((0..bin_plus.d())
        .map(|j| {
            let m_plus = bin_plus.activation_frequency(j);
            let m_minus = bin_minus.activation_frequency(j);
            let dp = if m_plus >= thr && m_minus >= thr {
                Some(m_plus / m_minus)
            } else {
                None
            };
            SiteStats {
                site: bin_plus.site_index()[j],
                mz: bin_plus.mz()[j],
                m_plus,
                m_minus,
                dp,
            }
        })
        .collect())
}

/// Result of selecting the `d+` highest-DP and `d-` lowest-DP sites.
#[derive(Clone, Debug)]
pub struct FeatureSelection {
    /// Selected G+ biomarkers, descending DP.
    pub plus: Vec<SiteStats>,
    /// Selected G- biomarkers, ascending DP.
    pub minus: Vec<SiteStats>,
    /// Candidate pools of up to `H` sites at each DP extreme.
    pub pool_plus: Vec<SiteStats>,
    pub pool_minus: Vec<SiteStats>,
    /// Number of sites clearing the frequency threshold.
    pub s_hat_size: usize,
    /// All candidate DP values were identical (non-discriminative data).
    pub degenerate: bool,
}

impl FeatureSelection {
    /// Selected original site indices: plus block then minus block.
    pub fn sites(&self) -> Vec<usize> {
        self.plus
            .iter()
            .chain(self.minus.iter())
            .map(|s| s.site)
            .collect()
    }
}

/// Selects `d+` G+ biomarkers (highest DP) and `d-` G- biomarkers (lowest
/// DP) among the sites whose activation frequency clears `thr` in both
/// groups.
///
/// The ranking sorts by descending DP with ascending site index as the tie
/// break; the minus block is the reversed tail of the same total order, so
/// the two selections can never overlap while `d+ + d- <= |S_hat|`.
pub fn feature_select(
    bin_plus: &BinaryDataset,
    bin_minus: &BinaryDataset,
    thr: f64,
    h: usize,
    dq: &DimQuad,
) -> Result<FeatureSelection> {
    if !(0.0 < thr && thr < 1.0) {
        return Err(Error::domain(format!("thr must lie in (0,1), got {thr}")));
    }
    dq.validate(h)?;
    let stats = site_stats(bin_plus, bin_minus, thr)?;
    let mut s_hat: Vec<SiteStats> = stats.into_iter().filter(|s| s.dp.is_some()).collect();
    if s_hat.len() < dq.d_total() {
        return Err(Error::InsufficientFeatures(format!(
            "only {} sites clear thr = {thr}, need d+ + d- = {}",
            s_hat.len(),
            dq.d_total()
        )));
    }
    s_hat.sort_by(|a, b| {
        b.dp
            .unwrap()
            .total_cmp(&a.dp.unwrap())
            .then(a.site.cmp(&b.site))
    });
    let degenerate = s_hat
        .windows(2)
        .all(|w| w[0].dp.unwrap() == w[1].dp.unwrap());
    if degenerate {
        log::warn!("all discriminating powers equal; selection is non-discriminative");
    }
    let m = s_hat.len();
    let pool_plus: Vec<SiteStats> = s_hat.iter().take(h.min(m)).cloned().collect();
    let pool_minus: Vec<SiteStats> = s_hat.iter().rev().take(h.min(m)).cloned().collect();
    let plus: Vec<SiteStats> = pool_plus.iter().take(dq.d_plus).cloned().collect();
    let minus: Vec<SiteStats> = pool_minus.iter().take(dq.d_minus).cloned().collect();
    Ok(FeatureSelection {
        plus,
        minus,
        pool_plus,
        pool_minus,
        s_hat_size: m,
        degenerate,
    })
}

/// A retained order-2 clique with its dependence statistic. Coordinates are
/// local to the restricted dataset the cliques were discovered on.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct CliqueCandidate {
    pub s: usize,
    pub t: usize,
    pub chi2: f64,
}

/// Pearson chi-squared statistic (1 dof) of a 2x2 contingency table; 0 when
/// a margin is empty.
pub fn chi2_statistic(n11: usize, n10: usize, n01: usize, n00: usize) -> f64 {
    let (a, b, c, d) = (n11 as f64, n10 as f64, n01 as f64, n00 as f64);
    let n = a + b + c + d;
    let r1 = a + b;
    let r0 = c + d;
    let c1 = a + c;
    let c0 = b + d;
    if r1 == 0.0 || r0 == 0.0 || c1 == 0.0 || c0 == 0.0 {
        return 0.0;
    }
    let det = a * d - b * c;
    n * det * det / (r1 * r0 * c1 * c0)
}

/// Computes chi-squared statistics for every pair of `group_sites` (original
/// indices) on `bg`, keeps pairs above `chi2_threshold`, and returns the `c`
/// highest. The second component is the total number of pairs above the
/// threshold; when `c` exceeds it, every retained pair is returned.
pub fn discover_cliques(
    bg: &BinaryDataset,
    group_sites: &[usize],
    c: usize,
    chi2_threshold: f64,
) -> Result<(Vec<CliqueCandidate>, usize)> {
    let locals: Vec<usize> = group_sites
        .iter()
        .map(|&s| {
            bg.site_index()
                .iter()
                .position(|&orig| orig == s)
                .ok_or_else(|| Error::domain(format!("site {s} not in dataset")))
        })
        .collect::<Result<_>>()?;
    let mut retained: Vec<CliqueCandidate> = Vec::new();
    for i in 0..locals.len() {
        for j in (i + 1)..locals.len() {
            let (s, t) = {
                let (a, b) = (locals[i], locals[j]);
                if a < b {
                    (a, b)
                } else {
                    (b, a)
                }
            };
            let mut n11 = 0;
            let mut n10 = 0;
            let mut n01 = 0;
            let mut n00 = 0;
            for row in bg.rows() {
                match (row[s], row[t]) {
                    (1, 1) => n11 += 1,
                    (1, 0) => n10 += 1,
                    (0, 1) => n01 += 1,
                    _ => n00 += 1,
                }
            }
            let chi2 = chi2_statistic(n11, n10, n01, n00);
            if chi2 > chi2_threshold {
                retained.push(CliqueCandidate { s, t, chi2 });
            }
        }
    }
    retained.sort_by(|a, b| {
        b.chi2
            .total_cmp(&a.chi2)
            .then(a.s.cmp(&b.s))
            .then(a.t.cmp(&b.t))
    });
    let ptc = retained.len();
    if c < ptc {
        retained.truncate(c);
    } else if c > ptc {
        log::info!("requested {c} cliques but only {ptc} pass the threshold");
    }
    Ok((retained, ptc))
}

/// Everything fitted for one dimension quadruplet.
#[derive(Clone, Debug)]
pub struct PairFit {
    pub dim: DimQuad,
    /// Selected original site indices, plus block then minus block.
    pub sites: Vec<usize>,
    pub selection: FeatureSelection,
    pub bg_plus: BinaryDataset,
    pub bg_minus: BinaryDataset,
    pub cliques_plus: Vec<CliqueCandidate>,
    pub cliques_minus: Vec<CliqueCandidate>,
    pub ptc_plus: usize,
    pub ptc_minus: usize,
    pub mple_plus: MpleResult,
    pub mple_minus: MpleResult,
    pub separator: Separator,
    pub training: PerformanceRecord,
}

impl PairFit {
    pub fn support_plus(&self) -> Vec<(usize, usize)> {
        self.cliques_plus.iter().map(|c| (c.s, c.t)).collect()
    }

    pub fn support_minus(&self) -> Vec<(usize, usize)> {
        self.cliques_minus.iter().map(|c| (c.s, c.t)).collect()
    }
}

/// Fits the model pair for one quadruplet: select sites, discover cliques
/// per group, estimate both parameter vectors by pruned MPLE, estimate the
/// separator, and evaluate training performance. The two models share the
/// site set; each group's cliques appear only in its own model.
pub fn fit_pair(
    bin_plus: &BinaryDataset,
    bin_minus: &BinaryDataset,
    dq: &DimQuad,
    cfg: &RunConfig,
) -> Result<PairFit> {
    let selection = feature_select(bin_plus, bin_minus, cfg.thr, cfg.h, dq)?;
    let sites = selection.sites();
    let bg_plus = bin_plus.restrict(&sites)?;
    let bg_minus = bin_minus.restrict(&sites)?;
    let plus_sites: Vec<usize> = selection.plus.iter().map(|s| s.site).collect();
    let minus_sites: Vec<usize> = selection.minus.iter().map(|s| s.site).collect();
    let (cliques_plus, ptc_plus) =
        discover_cliques(&bg_plus, &plus_sites, dq.c_plus, cfg.chi2_threshold)?;
    let (cliques_minus, ptc_minus) =
        discover_cliques(&bg_minus, &minus_sites, dq.c_minus, cfg.chi2_threshold)?;

    let ctx_plus = PlContext::new(
        bg_plus.rows(),
        cliques_plus.iter().map(|c| (c.s, c.t)),
        [],
    )?;
    let mple_plus = mple::fit_pruned(&ctx_plus, &cfg.mple_config())?;
    let ctx_minus = PlContext::new(
        bg_minus.rows(),
        cliques_minus.iter().map(|c| (c.s, c.t)),
        [],
    )?;
    let mple_minus = mple::fit_pruned(&ctx_minus, &cfg.mple_config())?;

    let separator = estimate_separator(
        bg_plus.rows(),
        bg_minus.rows(),
        &mple_plus.theta_hat,
        &mple_minus.theta_hat,
        &cfg.z_options(),
    )?;
    let training = evaluate_training(&separator, bg_plus.rows(), bg_minus.rows())?;
    Ok(PairFit {
        dim: *dq,
        sites,
        selection,
        bg_plus,
        bg_minus,
        cliques_plus,
        cliques_minus,
        ptc_plus,
        ptc_minus,
        mple_plus,
        mple_minus,
        separator,
        training,
    })
}

/// Lightweight record of one fitted quadruplet during a scan.
#[derive(Clone, Debug)]
struct DimEval {
    dim: DimQuad,
    sites: Vec<usize>,
    support_plus: Vec<(usize, usize)>,
    support_minus: Vec<(usize, usize)>,
    theta_plus: ParamVector,
    theta_minus: ParamVector,
    training: PerformanceRecord,
}

/// Fits every quadruplet of `D(H)`; infeasible or failed quadruplets are
/// reported separately. The `c` ranges enumerate `0..=min(|PTC|, cap)`.
fn evaluate_all_dims(
    bin_plus: &BinaryDataset,
    bin_minus: &BinaryDataset,
    cfg: &RunConfig,
) -> Result<(Vec<DimEval>, Vec<(DimQuad, String)>)> {
    let h = cfg.h;
    if h == 0 {
        return Err(Error::domain("H must be at least 1"));
    }
    let dpairs: Vec<(usize, usize)> = (1..=h)
        .flat_map(|dp| (1..=h).map(move |dm| (dp, dm)))
        .collect();
    let per_pair: Vec<(Vec<DimEval>, Vec<(DimQuad, String)>)> = dpairs
        .par_iter()
        .map(|&(d_plus, d_minus)| {
            let mut evals = Vec::new();
            let mut skipped = Vec::new();
            let dq0 = DimQuad::new(d_plus, 0, d_minus, 0);
            let selection = match feature_select(bin_plus, bin_minus, cfg.thr, h, &dq0) {
                Ok(s) => s,
                Err(e) => {
                    skipped.push((dq0, e.to_string()));
                    return (evals, skipped);
                }
            };
            let sites = selection.sites();
            let bg_plus = match bin_plus.restrict(&sites) {
                Ok(b) => b,
                Err(e) => {
                    skipped.push((dq0, e.to_string()));
                    return (evals, skipped);
                }
            };
            let bg_minus = match bin_minus.restrict(&sites) {
                Ok(b) => b,
                Err(e) => {
                    skipped.push((dq0, e.to_string()));
                    return (evals, skipped);
                }
            };
            let plus_sites: Vec<usize> = selection.plus.iter().map(|s| s.site).collect();
            let minus_sites: Vec<usize> = selection.minus.iter().map(|s| s.site).collect();
            let cap = cfg.grid.clique_cap;
            let (cl_plus, _) =
                discover_cliques(&bg_plus, &plus_sites, cap, cfg.chi2_threshold)
                    .expect("sites come from the dataset");
            let (cl_minus, _) =
                discover_cliques(&bg_minus, &minus_sites, cap, cfg.chi2_threshold)
                    .expect("sites come from the dataset");

            // one MPLE fit per clique count, shared across the cross product
            let fit_group = |rows: &[Vec<u8>], cliques: &[CliqueCandidate]| {
                (0..=cliques.len())
                    .map(|c| {
                        let support: Vec<(usize, usize)> =
                            cliques[..c].iter().map(|q| (q.s, q.t)).collect();
                        let ctx = PlContext::new(rows, support.iter().copied(), [])?;
                        Ok((support, mple::fit_pruned(&ctx, &cfg.mple_config())?))
                    })
                    .collect::<Vec<Result<_>>>()
            };
            let fits_plus = fit_group(bg_plus.rows(), &cl_plus);
            let fits_minus = fit_group(bg_minus.rows(), &cl_minus);

            for (c_plus, fp) in fits_plus.iter().enumerate() {
                for (c_minus, fm) in fits_minus.iter().enumerate() {
                    let dim = DimQuad::new(d_plus, c_plus, d_minus, c_minus);
                    match (fp, fm) {
                        (Ok((sup_p, rp)), Ok((sup_m, rm))) => {
                            let sep = estimate_separator(
                                bg_plus.rows(),
                                bg_minus.rows(),
                                &rp.theta_hat,
                                &rm.theta_hat,
                                &cfg.z_options(),
                            );
                            match sep.and_then(|s| {
                                evaluate_training(&s, bg_plus.rows(), bg_minus.rows())
                            }) {
                                Ok(training) => evals.push(DimEval {
                                    dim,
                                    sites: sites.clone(),
                                    support_plus: sup_p.clone(),
                                    support_minus: sup_m.clone(),
                                    theta_plus: rp.theta_hat.clone(),
                                    theta_minus: rm.theta_hat.clone(),
                                    training,
                                }),
                                Err(e) => skipped.push((dim, e.to_string())),
                            }
                        }
                        (Err(e), _) => skipped.push((dim, e.to_string())),
                        (_, Err(e)) => skipped.push((dim, e.to_string())),
                    }
                }
            }
            (evals, skipped)
        })
        .collect();
    let mut evals = Vec::new();
    let mut skipped = Vec::new();
    for (e, s) in per_pair {
        evals.extend(e);
        skipped.extend(s);
    }
    evals.sort_by_key(|e| e.dim);
    skipped.sort_by_key(|s| s.0);
    if evals.is_empty() {
        return Err(Error::domain(format!(
            "no feasible quadruplet in D({h}); first failure: {}",
            skipped
                .first()
                .map(|(d, e)| format!("{d}: {e}"))
                .unwrap_or_default()
        )));
    }
    Ok((evals, skipped))
}

/// One row of a grid scan.
#[derive(Clone, Debug, Serialize)]
pub struct ScanRow {
    pub dim: DimQuad,
    pub p_plus: f64,
    pub p_minus: f64,
    pub perf: f64,
}

/// Outcome of the accelerated grid search.
#[derive(Debug)]
pub struct GridSearchOutcome {
    pub dim_opt: DimQuad,
    pub signature: Signature,
    pub best: PairFit,
    /// Training performance for every feasible quadruplet.
    pub stage1: Vec<ScanRow>,
    /// Leave-one-out performance for the shortlisted quadruplets.
    pub stage2: Vec<ScanRow>,
    pub skipped: Vec<(DimQuad, String)>,
}

fn better_candidate(a: &(DimQuad, PerformanceRecord), b: &(DimQuad, PerformanceRecord)) -> bool {
    // higher perf, then smaller site count, then fewer cliques, then
    // lexicographic quadruplet order
    if a.1.perf != b.1.perf {
        return a.1.perf > b.1.perf;
    }
    let (da, db) = (a.0.d_total(), b.0.d_total());
    if da != db {
        return da < db;
    }
    let (ca, cb) = (a.0.c_total(), b.0.c_total());
    if ca != cb {
        return ca < cb;
    }
    a.0 < b.0
}

/// Stage 1 scores every quadruplet by training performance; stage 2 runs
/// leave-one-out only on those within `loo_margin` of the best training
/// score and returns the LOO maximizer (ties resolved towards smaller
/// signatures). With `use_loo = false` the training maximizer is returned.
pub fn grid_search(
    bin_plus: &BinaryDataset,
    bin_minus: &BinaryDataset,
    cfg: &RunConfig,
    use_loo: bool,
) -> Result<GridSearchOutcome> {
    let (evals, skipped) = evaluate_all_dims(bin_plus, bin_minus, cfg)?;
    let stage1: Vec<ScanRow> = evals
        .iter()
        .map(|e| ScanRow {
            dim: e.dim,
            p_plus: e.training.p_plus,
            p_minus: e.training.p_minus,
            perf: e.training.perf,
        })
        .collect();
    let best_training = stage1.iter().map(|r| r.perf).fold(f64::NEG_INFINITY, f64::max);

    let (dim_opt, perf_opt, stage2) = if use_loo {
        let shortlist: Vec<&DimEval> = evals
            .iter()
            .filter(|e| e.training.perf > best_training - cfg.grid.loo_margin)
            .collect();
        let loo: Vec<(DimQuad, Result<PerformanceRecord>)> = shortlist
            .par_iter()
            .map(|e| {
                let rec = (|| {
                    let bg_plus = bin_plus.restrict(&e.sites)?;
                    let bg_minus = bin_minus.restrict(&e.sites)?;
                    evaluate_loo(
                        &bg_plus,
                        &bg_minus,
                        &e.support_plus,
                        &e.support_minus,
                        &cfg.fit_config(),
                        &cfg.z_options(),
                    )
                })();
                (e.dim, rec)
            })
            .collect();
        let mut stage2 = Vec::new();
        let mut best: Option<(DimQuad, PerformanceRecord)> = None;
        for (dim, rec) in loo {
            match rec {
                Ok(r) => {
                    stage2.push(ScanRow {
                        dim,
                        p_plus: r.p_plus,
                        p_minus: r.p_minus,
                        perf: r.perf,
                    });
                    let cand = (dim, r);
                    if best.as_ref().is_none_or(|b| better_candidate(&cand, b)) {
                        best = Some(cand);
                    }
                }
                Err(e) => log::warn!("leave-one-out failed for {dim}: {e}"),
            }
        }
        let (dim_opt, perf_opt) =
            best.ok_or_else(|| Error::Numerical("every shortlisted quadruplet failed".into()))?;
        (dim_opt, perf_opt, stage2)
    } else {
        let mut best: Option<(DimQuad, PerformanceRecord)> = None;
        for e in &evals {
            let cand = (e.dim, e.training);
            if best.as_ref().is_none_or(|b| better_candidate(&cand, b)) {
                best = Some(cand);
            }
        }
        let (dim_opt, perf_opt) = best.expect("evals nonempty");
        (dim_opt, perf_opt, Vec::new())
    };

    let best_fit = fit_pair(bin_plus, bin_minus, &dim_opt, cfg)?;
    let signature = build_signature(&best_fit, perf_opt, bin_plus, Some(cfg.rho))?;
    Ok(GridSearchOutcome {
        dim_opt,
        signature,
        best: best_fit,
        stage1,
        stage2,
        skipped,
    })
}

/// Per-biomarker scores `SCO(j) = beta theta_minus_j - theta_plus_j` (and
/// the same combination for clique coordinates).
pub fn score_vector(
    theta_plus: &ParamVector,
    theta_minus: &ParamVector,
    beta: f64,
) -> Result<ParamVector> {
    ParamVector::combine(beta, theta_minus, -1.0, theta_plus)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignatureBiomarker {
    /// Original site index in the full grid.
    pub site: usize,
    pub mz: f64,
    /// "+" for G+ biomarkers, "-" for G- biomarkers.
    pub group: String,
    pub m_plus: f64,
    pub m_minus: f64,
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub ci_plus: Option<[f64; 2]>,
    pub ci_minus: Option<[f64; 2]>,
    pub score: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignatureClique {
    /// Original site indices.
    pub s: usize,
    pub t: usize,
    pub mz_s: f64,
    pub mz_t: f64,
    pub group: String,
    pub chi2: f64,
    pub theta_plus: f64,
    pub theta_minus: f64,
    pub ci_plus: Option<[f64; 2]>,
    pub ci_minus: Option<[f64; 2]>,
    pub score: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignaturePerf {
    pub p_plus: f64,
    pub p_minus: f64,
    pub perf: f64,
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub folds: Option<usize>,
}

/// The discovered signature: scored biomarkers and cliques plus the affine
/// intercept. The total score of a spectrum is the estimated separator value
/// and its sign is the classification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Signature {
    pub group_plus: String,
    pub group_minus: String,
    pub dim: DimQuad,
    pub beta: f64,
    pub intercept: f64,
    /// Length of the full grid the signature was built on.
    pub grid_len: usize,
    /// Relative accuracy; needed to classify raw peak lists.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rho: Option<f64>,
    pub biomarkers: Vec<SignatureBiomarker>,
    pub cliques: Vec<SignatureClique>,
    pub perf: SignaturePerf,
}

fn interval_of(result: &MpleResult, coord: Coord) -> Option<[f64; 2]> {
    result
        .ci
        .iter()
        .find(|ci| ci.coord == coord)
        .map(|ci| [ci.lo, ci.hi])
}

/// Assembles the signature for a fitted pair. `perf` is the performance
/// record to publish (leave-one-out when available, else training).
pub fn build_signature(
    pair: &PairFit,
    perf: PerformanceRecord,
    bin_plus: &BinaryDataset,
    rho: Option<f64>,
) -> Result<Signature> {
    let sep = &pair.separator;
    let d = pair.sites.len();
    let mut biomarkers = Vec::with_capacity(d);
    for j in 0..d {
        let stats = if j < pair.dim.d_plus {
            &pair.selection.plus[j]
        } else {
            &pair.selection.minus[j - pair.dim.d_plus]
        };
        biomarkers.push(SignatureBiomarker {
            site: pair.sites[j],
            mz: pair.bg_plus.mz()[j],
            group: if j < pair.dim.d_plus { "+" } else { "-" }.to_string(),
            m_plus: stats.m_plus,
            m_minus: stats.m_minus,
            theta_plus: pair.mple_plus.theta_hat.single(j),
            theta_minus: pair.mple_minus.theta_hat.single(j),
            ci_plus: interval_of(&pair.mple_plus, Coord::Single(j)),
            ci_minus: interval_of(&pair.mple_minus, Coord::Single(j)),
            score: sep.u.single(j),
        });
    }
    let mut cliques = Vec::new();
    for (group, list, res) in [
        ("+", &pair.cliques_plus, &pair.mple_plus),
        ("-", &pair.cliques_minus, &pair.mple_minus),
    ] {
        for cl in list.iter() {
            cliques.push(SignatureClique {
                s: pair.sites[cl.s],
                t: pair.sites[cl.t],
                mz_s: pair.bg_plus.mz()[cl.s],
                mz_t: pair.bg_plus.mz()[cl.t],
                group: group.to_string(),
                chi2: cl.chi2,
                theta_plus: pair.mple_plus.theta_hat.pair(cl.s, cl.t),
                theta_minus: pair.mple_minus.theta_hat.pair(cl.s, cl.t),
                ci_plus: interval_of(res, Coord::pair(cl.s, cl.t)).filter(|_| group == "+"),
                ci_minus: interval_of(res, Coord::pair(cl.s, cl.t)).filter(|_| group == "-"),
                score: sep.u.pair(cl.s, cl.t),
            });
        }
    }
    Ok(Signature {
        group_plus: pair.bg_plus.group().to_string(),
        group_minus: pair.bg_minus.group().to_string(),
        dim: pair.dim,
        beta: sep.beta,
        intercept: sep.intercept,
        grid_len: bin_plus.d(),
        rho,
        biomarkers,
        cliques,
        perf: SignaturePerf {
            p_plus: perf.p_plus,
            p_minus: perf.p_minus,
            perf: perf.perf,
            method: match perf.method {
                PerfMethod::Training => "training",
                PerfMethod::LeaveOneOut => "leave-one-out",
                PerfMethod::Exact => "exact",
            }
            .to_string(),
            folds: perf.folds,
        },
    })
}

impl Signature {
    /// Total score of a full-grid binary vector and the winning group label.
    pub fn classify_vector(&self, x: &[u8]) -> Result<(String, f64)> {
        if x.len() != self.grid_len {
            return Err(Error::domain(format!(
                "vector length {} does not match the signature grid length {}",
                x.len(),
                self.grid_len
            )));
        }
        let active = |site: usize| x[site] != 0;
        Ok(self.total_score(active))
    }

    /// Classifies a raw peak list; requires the signature to carry `rho`.
    pub fn classify_spectrum(&self, spectrum: &PeakSpectrum) -> Result<(String, f64)> {
        let rho = self.rho.ok_or_else(|| {
            Error::domain("signature carries no relative accuracy; cannot window raw peaks")
        })?;
        let active = |site: usize| {
            let mz = self
                .biomarkers
                .iter()
                .find(|b| b.site == site)
                .map(|b| b.mz)
                .expect("clique sites are signature biomarkers");
            spectrum
                .peaks()
                .iter()
                .any(|&p| p >= mz * (1.0 - rho) && p <= mz * (1.0 + rho))
        };
        Ok(self.total_score(active))
    }

    fn total_score(&self, active: impl Fn(usize) -> bool) -> (String, f64) {
        let mut tsco = self.intercept;
        for b in &self.biomarkers {
            if active(b.site) {
                tsco += b.score;
            }
        }
        for c in &self.cliques {
            if active(c.s) && active(c.t) {
                tsco += c.score;
            }
        }
        let label = if tsco > 0.0 {
            self.group_plus.clone()
        } else {
            self.group_minus.clone()
        };
        (label, tsco)
    }
}

/// One row of the KL scan.
#[derive(Clone, Debug, Serialize)]
pub struct KlScanRow {
    pub dim: DimQuad,
    pub perf: f64,
    pub norkl: f64,
}

#[derive(Clone, Debug)]
pub struct KlScanOutcome {
    pub rows: Vec<KlScanRow>,
    /// Spearman rank correlation between training performance and norKL.
    pub spearman: f64,
}

/// Fits every quadruplet and pairs its training performance with the
/// normalized KL distance between the two fitted models.
pub fn kl_scan(
    bin_plus: &BinaryDataset,
    bin_minus: &BinaryDataset,
    cfg: &RunConfig,
) -> Result<KlScanOutcome> {
    let (evals, _) = evaluate_all_dims(bin_plus, bin_minus, cfg)?;
    let rows: Vec<KlScanRow> = evals
        .par_iter()
        .enumerate()
        .map(|(i, e)| {
            let mut opts = cfg.kl_options();
            opts.seed = cfg.seed.wrapping_add(i as u64);
            let norkl = nor_kl(
                &e.theta_plus,
                &e.theta_minus,
                e.dim.d_plus,
                e.dim.d_minus,
                &opts,
            )
            .unwrap_or(f64::NAN);
            KlScanRow {
                dim: e.dim,
                perf: e.training.perf,
                norkl,
            }
        })
        .collect();
    let perfs: Vec<f64> = rows.iter().map(|r| r.perf).collect();
    let norkls: Vec<f64> = rows.iter().map(|r| r.norkl).collect();
    Ok(KlScanOutcome {
        spearman: spearman(&perfs, &norkls),
        rows,
    })
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}
