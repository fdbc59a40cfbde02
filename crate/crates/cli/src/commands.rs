//! Subcommand implementations.

use std::path::{Path, PathBuf};

use mrfsig::config::RunConfig;
use mrfsig::discriminate::{evaluate_loo, PerformanceRecord};
use mrfsig::fit_quality::{quality_of_fit, FitQualityReport};
use mrfsig::io::PeakMatrix;
use mrfsig::math::fmt_f64;
use mrfsig::model::AutologisticModel;
use mrfsig::mple::{self, PlContext};
use mrfsig::pipeline::{
    self, build_signature, fit_pair, grid_search, DimQuad, KlScanRow, ScanRow, Signature,
};
use mrfsig::spectra::ReferenceGrid;

use crate::output::OutputSet;
use crate::{CliError, CliResult};

fn core(e: mrfsig::Error) -> CliError {
    CliError::from_core(e)
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_matrix(path: &Path) -> CliResult<PeakMatrix> {
    let file = std::fs::File::open(path)
        .map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
    PeakMatrix::read_csv(file).map_err(core)
}

/// `binarize`: JSON-lines peak lists in, full binary matrix CSV out.
pub fn binarize(peaks_path: &Path, cfg: &RunConfig, out_dir: &Path) -> CliResult<()> {
    let spectra = {
        let file = std::fs::File::open(peaks_path)
            .map_err(|e| usage(format!("cannot open {}: {e}", peaks_path.display())))?;
        mrfsig::io::read_peaks_jsonl(file).map_err(core)?
    };
    let all_peaks: Vec<f64> = spectra.iter().flat_map(|s| s.peaks().iter().copied()).collect();
    let matrix = if all_peaks.is_empty() {
        // nothing observable: header-only matrix (plus any empty rows)
        PeakMatrix {
            mz: Vec::new(),
            site_index: Vec::new(),
            ids: spectra.iter().map(|s| s.id.clone()).collect(),
            groups: spectra.iter().map(|s| s.group.clone()).collect(),
            rows: spectra.iter().map(|_| Vec::new()).collect(),
        }
    } else {
        let b_max = all_peaks.iter().cloned().fold(f64::MIN, f64::max);
        let b_min = all_peaks.iter().cloned().fold(f64::MAX, f64::min);
        let b1 = cfg.b1.unwrap_or(b_min);
        let grid = ReferenceGrid::build(b1, b_max, cfg.rho).map_err(core)?;
        println!(
            "grid: {} sites from {} at relative accuracy {}",
            grid.len(),
            fmt_f64(grid.b1()),
            cfg.rho
        );
        PeakMatrix::from_spectra(&grid, &spectra)
    };
    let mut out = OutputSet::create(out_dir)?;
    let mut bytes = Vec::new();
    matrix.write_csv(&mut bytes).map_err(core)?;
    out.write_validated("matrix.csv", &bytes, |b| {
        PeakMatrix::read_csv(b).map(|_| ()).map_err(|e| e.to_string())
    })?;
    out.commit();
    Ok(())
}

pub struct DiscoverOptions {
    pub dim: Option<String>,
    pub kl_scan: bool,
    pub use_loo: bool,
    pub replicas: usize,
}

fn scan_csv(rows: &[ScanRow]) -> Vec<u8> {
    let mut text = String::from("d_plus,c_plus,d_minus,c_minus,p_plus,p_minus,perf\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.dim.d_plus,
            r.dim.c_plus,
            r.dim.d_minus,
            r.dim.c_minus,
            fmt_f64(r.p_plus),
            fmt_f64(r.p_minus),
            fmt_f64(r.perf)
        ));
    }
    text.into_bytes()
}

fn kl_csv(rows: &[KlScanRow]) -> Vec<u8> {
    let mut text = String::from("d_plus,c_plus,d_minus,c_minus,perf,norkl\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.dim.d_plus,
            r.dim.c_plus,
            r.dim.d_minus,
            r.dim.c_minus,
            fmt_f64(r.perf),
            fmt_f64(r.norkl)
        ));
    }
    text.into_bytes()
}

fn validate_csv_header(expect: &str) -> impl Fn(&[u8]) -> Result<(), String> + '_ {
    move |bytes| {
        let text = std::str::from_utf8(bytes).map_err(|e| e.to_string())?;
        let first = text.lines().next().unwrap_or("");
        if first == expect {
            Ok(())
        } else {
            Err(format!("unexpected header `{first}`"))
        }
    }
}

fn histogram_csv(report: &FitQualityReport) -> Vec<u8> {
    let mut text = format!("# ll_observed={}\n", fmt_f64(report.ll_observed));
    text.push_str("bin_lo,bin_hi,count\n");
    for (i, &count) in report.histogram.counts.iter().enumerate() {
        text.push_str(&format!(
            "{},{},{count}\n",
            fmt_f64(report.histogram.edges[i]),
            fmt_f64(report.histogram.edges[i + 1])
        ));
    }
    text.into_bytes()
}

/// Builds the model for a fitted parameter vector, exact when the dimension
/// allows it and Monte Carlo otherwise.
fn model_with_z(
    theta: &mrfsig::ParamVector,
    cfg: &RunConfig,
) -> CliResult<AutologisticModel> {
    if theta.d() <= cfg.mc.exact_cutoff {
        AutologisticModel::exact(theta.clone(), cfg.mc.exact_cutoff).map_err(core)
    } else {
        AutologisticModel::monte_carlo(theta.clone(), cfg.mc.z_samples, cfg.seed).map_err(core)
    }
}

/// `discover`: grid search (or pinned quadruplet), signature, performance,
/// model and fit-quality reports.
pub fn discover(
    matrix_path: &Path,
    group_plus: &str,
    group_minus: &str,
    cfg: &RunConfig,
    opts: &DiscoverOptions,
    out_dir: &Path,
) -> CliResult<()> {
    let matrix = read_matrix(matrix_path)?;
    let bin_plus = matrix.select_group(group_plus).map_err(core)?;
    let bin_minus = matrix.select_group(group_minus).map_err(core)?;
    println!(
        "groups: {} n={} vs {} n={} over {} sites",
        group_plus,
        bin_plus.n(),
        group_minus,
        bin_minus.n(),
        matrix.d()
    );

    let mut out = OutputSet::create(out_dir)?;
    let (pair, perf, stage1, stage2) = match &opts.dim {
        Some(text) => {
            let dq = DimQuad::parse(text).map_err(core)?;
            dq.validate(cfg.h).map_err(core)?;
            let pair = fit_pair(&bin_plus, &bin_minus, &dq, cfg).map_err(core)?;
            let perf = if opts.use_loo {
                evaluate_loo(
                    &pair.bg_plus,
                    &pair.bg_minus,
                    &pair.support_plus(),
                    &pair.support_minus(),
                    &cfg.fit_config(),
                    &cfg.z_options(),
                )
                .map_err(core)?
            } else {
                pair.training
            };
            (pair, perf, Vec::new(), Vec::new())
        }
        None => {
            let outcome = grid_search(&bin_plus, &bin_minus, cfg, opts.use_loo).map_err(core)?;
            println!(
                "dim_opt = {} with {} performance {:.4}",
                outcome.dim_opt, outcome.signature.perf.method, outcome.signature.perf.perf
            );
            let perf = PerformanceRecord {
                p_plus: outcome.signature.perf.p_plus,
                p_minus: outcome.signature.perf.p_minus,
                perf: outcome.signature.perf.perf,
                method: if opts.use_loo {
                    mrfsig::discriminate::PerfMethod::LeaveOneOut
                } else {
                    mrfsig::discriminate::PerfMethod::Training
                },
                folds: outcome.signature.perf.folds,
            };
            (outcome.best, perf, outcome.stage1, outcome.stage2)
        }
    };

    let signature = build_signature(&pair, perf, &bin_plus, Some(cfg.rho)).map_err(core)?;
    out.write_json("signature.json", &signature)?;
    out.write_json_report("separator.json", &pair.separator)?;
    out.write_json_report("performance.json", &perf)?;

    let model_plus = model_with_z(&pair.mple_plus.theta_hat, cfg)?;
    let model_minus = model_with_z(&pair.mple_minus.theta_hat, cfg)?;
    out.write_json("model_plus.json", &model_plus)?;
    out.write_json("model_minus.json", &model_minus)?;

    for (name, model, bg) in [
        ("fit_quality_plus", &model_plus, &pair.bg_plus),
        ("fit_quality_minus", &model_minus, &pair.bg_minus),
    ] {
        let report = quality_of_fit(
            model,
            bg.rows(),
            opts.replicas,
            &cfg.gibbs_config(),
            cfg.seed,
        )
        .map_err(core)?;
        println!(
            "{name}: Q = {:.3} (LL = {:.3})",
            report.quantile_q, report.ll_observed
        );
        out.write_json_report(&format!("{name}.json"), &report)?;
        out.write_validated(
            &format!("{name}_histogram.csv"),
            &histogram_csv(&report),
            |b| {
                if b.starts_with(b"# ll_observed=") {
                    Ok(())
                } else {
                    Err("missing observed-LL header".to_string())
                }
            },
        )?;
    }

    if !stage1.is_empty() {
        out.write_validated(
            "grid_stage1.csv",
            &scan_csv(&stage1),
            validate_csv_header("d_plus,c_plus,d_minus,c_minus,p_plus,p_minus,perf"),
        )?;
    }
    if !stage2.is_empty() {
        out.write_validated(
            "grid_loo.csv",
            &scan_csv(&stage2),
            validate_csv_header("d_plus,c_plus,d_minus,c_minus,p_plus,p_minus,perf"),
        )?;
    }
    if opts.kl_scan {
        let scan = pipeline::kl_scan(&bin_plus, &bin_minus, cfg).map_err(core)?;
        println!("kl scan: {} rows, Spearman {:.3}", scan.rows.len(), scan.spearman);
        out.write_validated(
            "kl_scan.csv",
            &kl_csv(&scan.rows),
            validate_csv_header("d_plus,c_plus,d_minus,c_minus,perf,norkl"),
        )?;
    }
    out.commit();
    Ok(())
}

/// `classify`: signature + peak lists -> per-spectrum id, total score, label.
pub fn classify(signature_path: &Path, peaks_path: &Path, out_dir: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(signature_path)
        .map_err(|e| usage(format!("cannot open {}: {e}", signature_path.display())))?;
    let signature: Signature =
        serde_json::from_str(&text).map_err(|e| usage(format!("malformed signature: {e}")))?;
    let spectra = {
        let file = std::fs::File::open(peaks_path)
            .map_err(|e| usage(format!("cannot open {}: {e}", peaks_path.display())))?;
        mrfsig::io::read_peaks_jsonl(file).map_err(core)?
    };

    let mut out = OutputSet::create(out_dir)?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["id", "tsco", "label"])
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    for sp in &spectra {
        let (label, tsco) = signature.classify_spectrum(sp).map_err(core)?;
        wtr.write_record([sp.id.as_str(), &fmt_f64(tsco), &label])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let bytes = wtr
        .into_inner()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    out.write_validated("classified.csv", &bytes, validate_csv_header("id,tsco,label"))?;
    out.commit();
    Ok(())
}

pub enum SupportSource {
    Signature { path: PathBuf, side: String },
    Explicit { sites: String, cliques: Option<String> },
}

fn parse_index_list(text: &str) -> CliResult<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("invalid site list `{text}`")))
        })
        .collect()
}

fn parse_clique_list(text: &str) -> CliResult<Vec<(usize, usize)>> {
    text.split(',')
        .map(|p| {
            let (a, b) = p
                .split_once('-')
                .ok_or_else(|| usage(format!("invalid clique `{p}`, expected s-t")))?;
            let s = a.trim().parse::<usize>().map_err(|_| usage(format!("invalid clique `{p}`")))?;
            let t = b.trim().parse::<usize>().map_err(|_| usage(format!("invalid clique `{p}`")))?;
            Ok((s, t))
        })
        .collect()
}

/// `fitcheck`: fit one group on the given sites/cliques and report the
/// goodness-of-fit quantile among simulated virtual datasets.
pub fn fitcheck(
    matrix_path: &Path,
    group: &str,
    source: SupportSource,
    replicas: usize,
    cfg: &RunConfig,
    out_dir: &Path,
) -> CliResult<()> {
    let matrix = read_matrix(matrix_path)?;
    let dataset = matrix.select_group(group).map_err(core)?;
    let (sites, cliques) = match source {
        SupportSource::Signature { path, side } => {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| usage(format!("cannot open {}: {e}", path.display())))?;
            let sig: Signature =
                serde_json::from_str(&text).map_err(|e| usage(format!("malformed signature: {e}")))?;
            let tag = match side.as_str() {
                "plus" => "+",
                "minus" => "-",
                other => return Err(usage(format!("--side must be plus or minus, got `{other}`"))),
            };
            let sites: Vec<usize> = sig.biomarkers.iter().map(|b| b.site).collect();
            let cliques: Vec<(usize, usize)> = sig
                .cliques
                .iter()
                .filter(|c| c.group == tag)
                .map(|c| (c.s, c.t))
                .collect();
            (sites, cliques)
        }
        SupportSource::Explicit { sites, cliques } => {
            let sites = parse_index_list(&sites)?;
            let cliques = match cliques {
                Some(text) => parse_clique_list(&text)?,
                None => Vec::new(),
            };
            (sites, cliques)
        }
    };
    let bg = dataset.restrict(&sites).map_err(core)?;
    // cliques arrive as original site indices; map them into the restriction
    let local_cliques: Vec<(usize, usize)> = cliques
        .iter()
        .map(|&(s, t)| {
            let find = |orig: usize| {
                sites
                    .iter()
                    .position(|&x| x == orig)
                    .ok_or_else(|| usage(format!("clique site {orig} is not a selected site")))
            };
            Ok((find(s)?, find(t)?))
        })
        .collect::<CliResult<_>>()?;

    let ctx = PlContext::new(bg.rows(), local_cliques.iter().copied(), []).map_err(core)?;
    let fit = if cfg.mple.prune {
        mple::fit_pruned(&ctx, &cfg.mple_config()).map_err(core)?
    } else {
        mple::fit(&ctx, &cfg.mple_config()).map_err(core)?
    };
    let model = model_with_z(&fit.theta_hat, cfg)?;
    let report = quality_of_fit(&model, bg.rows(), replicas, &cfg.gibbs_config(), cfg.seed)
        .map_err(core)?;
    println!(
        "fit quality of {group} on {} sites: Q = {:.3}, z = {:.3}",
        sites.len(),
        report.quantile_q,
        report.z_stat
    );

    let mut out = OutputSet::create(out_dir)?;
    out.write_json_report("fit_quality.json", &report)?;
    out.write_validated("fit_histogram.csv", &histogram_csv(&report), |b| {
        if b.starts_with(b"# ll_observed=") {
            Ok(())
        } else {
            Err("missing observed-LL header".to_string())
        }
    })?;
    out.write_json("model.json", &model)?;
    out.write_json_report("mple.json", &fit.summary())?;
    out.commit();
    Ok(())
}
