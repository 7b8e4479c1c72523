//! Corpus-level runs and the run-directory layout.
//!
//! A run directory holds `config.toml`, `meta.json` (the only file with a
//! timestamp), `metrics.csv`, `summary.json`, and per-image `plans/`,
//! `frames/` and `audit/` trees keyed by method name.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::eval::{build_masks, summarize, CorpusSummary, MetricReport};
use crate::image::save_image;
use crate::kb::{calibrate, KnowledgeBase};
use crate::scene::{ChannelState, MatchLevel};

use super::config::{AblationMode, ExperimentConfig};
use super::corpus::{calibration_crops, CorpusItem};
use super::pipeline::{run_image, Context, ImageOutcome, Method};
use super::HarnessError;

/// Recorded in every report.
pub const BUDGET_SEMANTICS: &str = "wire_budget_bytes counts post-coding bytes per image, frame and region headers included";

/// Minimum level-3 PSNR lead of PACE over UniformRegions, in dB.
pub const LEVEL3_MARGIN_DB: f64 = 1.0;

pub struct MethodResult {
    pub method: Method,
    pub outcomes: Vec<ImageOutcome>,
    pub summary: CorpusSummary,
}

impl MethodResult {
    pub fn level_psnr(&self, level: MatchLevel) -> Option<f64> {
        self.summary.levels.get(&(level as u8)).and_then(|m| m.psnr)
    }

    pub fn global_psnr(&self) -> Option<f64> {
        self.summary.global.psnr
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingCheck {
    pub name: String,
    pub lhs: Option<f64>,
    pub rhs: Option<f64>,
    pub passed: bool,
}

impl OrderingCheck {
    /// Passes when `lhs - rhs >= margin`; a missing side fails.
    fn at_least(name: &str, lhs: Option<f64>, rhs: Option<f64>, margin: f64) -> Self {
        let passed = matches!((lhs, rhs), (Some(a), Some(b)) if a - b >= margin);
        Self { name: name.into(), lhs, rhs, passed }
    }

    fn greater(name: &str, lhs: Option<f64>, rhs: Option<f64>) -> Self {
        let passed = matches!((lhs, rhs), (Some(a), Some(b)) if a > b);
        Self { name: name.into(), lhs, rhs, passed }
    }
}

impl fmt::Display for OrderingCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = |x: Option<f64>| x.map_or("n/a".to_string(), |x| format!("{x:.3}"));
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {} vs {}", self.name, v(self.lhs), v(self.rhs))
    }
}

pub struct RunReport {
    pub channel: ChannelState,
    pub results: Vec<MethodResult>,
    pub checks: Vec<OrderingCheck>,
}

impl RunReport {
    pub fn result(&self, method: Method) -> Option<&MethodResult> {
        self.results.iter().find(|r| r.method == method)
    }
}

/// Runs every method over the corpus. Images are independent and run in
/// parallel; results keep corpus order. The first failing image aborts.
pub fn run_methods(ctx: &Context, corpus: &[CorpusItem], methods: &[Method], channel: &ChannelState) -> Result<Vec<MethodResult>, HarnessError> {
    methods
        .iter()
        .map(|&method| {
            let outcomes = corpus
                .par_iter()
                .map(|item| run_image(ctx, item, method, channel))
                .collect::<Result<Vec<_>, _>>()?;
            let summary = summarize(outcomes.iter().map(|o| &o.metrics).collect::<Vec<&MetricReport>>());
            Ok(MethodResult { method, outcomes, summary })
        })
        .collect()
}

fn pace_method(ctx: &Context) -> Method {
    Method::Pace(ctx.config.ablation)
}

pub fn comparison_checks(results: &[MethodResult], pace: Method) -> Vec<OrderingCheck> {
    let get = |m: Method| results.iter().find(|r| r.method == m);
    let mut checks = Vec::new();
    if let (Some(p), Some(u)) = (get(pace), get(Method::UniformRegions)) {
        checks.push(OrderingCheck::at_least(
            &format!("{} level-3 PSNR exceeds uniform_regions by {LEVEL3_MARGIN_DB} dB", pace.name()),
            p.level_psnr(MatchLevel::High),
            u.level_psnr(MatchLevel::High),
            LEVEL3_MARGIN_DB,
        ));
    }
    if let (Some(p), Some(a)) = (get(pace), get(Method::IntentionAgnostic)) {
        checks.push(OrderingCheck::at_least(
            &format!("intention_agnostic global PSNR at least {}", pace.name()),
            a.global_psnr(),
            p.global_psnr(),
            0.0,
        ));
    }
    checks
}

/// PACE against every baseline at the configured budget.
pub fn run_comparison(ctx: &Context, corpus: &[CorpusItem]) -> Result<RunReport, HarnessError> {
    let channel = ctx.channel();
    let pace = pace_method(ctx);
    let mut methods = Method::comparison_set();
    methods[0] = pace;
    let results = run_methods(ctx, corpus, &methods, &channel)?;
    let checks = comparison_checks(&results, pace);
    Ok(RunReport { channel, results, checks })
}

pub fn ablation_checks(results: &[MethodResult]) -> Vec<OrderingCheck> {
    let get = |m: AblationMode| results.iter().find(|r| r.method == Method::Pace(m));
    let gap = |r: &MethodResult| Some(r.level_psnr(MatchLevel::High)? - r.level_psnr(MatchLevel::Low)?);
    let mut checks = Vec::new();
    let Some(normal) = get(AblationMode::Normal) else { return checks };
    if let Some(r) = get(AblationMode::NoKb) {
        checks.push(OrderingCheck::at_least(
            "normal level-3 PSNR at least no_kb",
            normal.level_psnr(MatchLevel::High),
            r.level_psnr(MatchLevel::High),
            0.0,
        ));
    }
    if let Some(r) = get(AblationMode::NoVoting) {
        checks.push(OrderingCheck::greater("level-3 minus level-1 PSNR gap larger under normal than no_voting", gap(normal), gap(r)));
    }
    checks
}

/// Normal mode against the given ablations, same corpus and seeds.
pub fn run_ablation(ctx: &Context, corpus: &[CorpusItem], modes: &[AblationMode]) -> Result<RunReport, HarnessError> {
    let channel = ctx.channel();
    let mut methods = vec![Method::Pace(AblationMode::Normal)];
    methods.extend(modes.iter().filter(|&&m| m != AblationMode::Normal).map(|&m| Method::Pace(m)));
    let results = run_methods(ctx, corpus, &methods, &channel)?;
    let checks = ablation_checks(&results);
    Ok(RunReport { channel, results, checks })
}

/// One comparison per budget, ascending.
pub fn run_sweep(ctx: &Context, corpus: &[CorpusItem], budgets: &[u64]) -> Result<Vec<RunReport>, HarnessError> {
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::Config("sweep budgets must be ascending".into()));
    }
    let pace = pace_method(ctx);
    let mut methods = Method::comparison_set();
    methods[0] = pace;
    budgets
        .iter()
        .map(|&b| {
            let channel = ctx.channel().with_budget(b);
            let results = run_methods(ctx, corpus, &methods, &channel)?;
            let checks = comparison_checks(&results, pace);
            Ok(RunReport { channel, results, checks })
        })
        .collect()
}

/// Builds the knowledge base from corpus object crops over the configured channel.
pub fn calibrate_kb(ctx: &Context, corpus: &[CorpusItem]) -> Result<KnowledgeBase, HarnessError> {
    let cfg = &ctx.config;
    let crops = calibration_crops(corpus, cfg.calibration.crops_per_category);
    calibrate(&crops, &ctx.channel(), &cfg.calibration.bit_grid, &ctx.code, cfg.channel.max_iter, cfg.seeds.calibration)
        .map_err(|e| HarnessError::Config(format!("calibration failed: {e}")))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| HarnessError::io(path, e))
}

fn json_text(v: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s
}

fn config_comment(cfg: &ExperimentConfig) -> String {
    let mut out = format!("# {BUDGET_SEMANTICS}\n");
    for line in cfg.to_toml().lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// Writes `config.toml` and `meta.json`.
fn write_provenance(dir: &Path, cfg: &ExperimentConfig, command: &str) -> Result<(), HarnessError> {
    write(&dir.join("config.toml"), cfg.to_toml())?;
    let now = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let meta = json!({
        "command": command,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "created_unix_secs": now,
    });
    write(&dir.join("meta.json"), json_text(&meta))
}

fn region_rows(report: &MetricReport) -> Vec<(String, f64, Option<f64>)> {
    let mut rows = vec![("global".to_string(), report.global.psnr, report.global.ssim)];
    rows.extend(report.levels.iter().map(|(l, m)| (format!("level{l}"), m.psnr, m.ssim)));
    rows
}

fn metrics_csv(cfg: &ExperimentConfig, reports: &[&RunReport]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| HarnessError::Config(format!("csv: {e}"));
    w.write_record([
        "method",
        "budget_bytes",
        "image_id",
        "region",
        "psnr_db",
        "ssim",
        "frame_bytes",
        "projected_wire_bytes",
        "blocks",
        "unconverged_blocks",
        "lost_regions",
    ])
    .map_err(err)?;
    for report in reports {
        for r in &report.results {
            for o in &r.outcomes {
                for (region, psnr, ssim) in region_rows(&o.metrics) {
                    w.write_record([
                        r.method.name(),
                        report.channel.wire_budget_bytes.to_string(),
                        o.image_id.clone(),
                        region,
                        format!("{psnr:.6}"),
                        ssim.map_or(String::new(), |s| format!("{s:.6}")),
                        o.frame.len().to_string(),
                        o.plan.projected_wire_bytes.to_string(),
                        o.channel.blocks.to_string(),
                        o.channel.unconverged_blocks.to_string(),
                        o.lost.join(";"),
                    ])
                    .map_err(err)?;
                }
            }
        }
    }
    let body = String::from_utf8(w.into_inner().map_err(|e| HarnessError::Config(e.to_string()))?).expect("csv is utf-8");
    Ok(config_comment(cfg) + &body)
}

fn summary_value(report: &RunReport) -> serde_json::Value {
    let methods: BTreeMap<String, &CorpusSummary> = report.results.iter().map(|r| (r.method.name(), &r.summary)).collect();
    json!({
        "budget_bytes": report.channel.wire_budget_bytes,
        "methods": methods,
        "checks": report.checks,
    })
}

/// Writes a full run directory for one report.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, report: &RunReport, command: &str) -> Result<(), HarnessError> {
    write_provenance(dir, cfg, command)?;
    write(&dir.join("metrics.csv"), metrics_csv(cfg, &[report])?)?;
    let summary = json!({
        "config": cfg,
        "budget_semantics": BUDGET_SEMANTICS,
        "result": summary_value(report),
    });
    write(&dir.join("summary.json"), json_text(&summary))?;
    for r in &report.results {
        let name = r.method.name();
        for o in &r.outcomes {
            write(&dir.join("plans").join(&name).join(format!("{}.json", o.image_id)), json_text(&o.plan))?;
            write(&dir.join("frames").join(&name).join(format!("{}.bin", o.image_id)), &o.frame)?;
            let audit = json!({
                "image_id": o.image_id,
                "method": name,
                "scores": o.scores,
                "plan": o.plan,
                "frame_bytes": o.frame.len(),
                "channel": o.channel,
                "lost": o.lost,
                "metrics": o.metrics,
            });
            write(&dir.join("audit").join(&name).join(format!("{}.json", o.image_id)), json_text(&audit))?;
        }
    }
    Ok(())
}

const SWEEP_REGIONS: [&str; 4] = ["global", "level1", "level2", "level3"];

fn summary_region(s: &CorpusSummary, region: &str) -> (Option<f64>, Option<f64>) {
    let m = match region {
        "global" => Some(&s.global),
        r => r.strip_prefix("level").and_then(|l| l.parse::<u8>().ok()).and_then(|l| s.levels.get(&l)),
    };
    m.map_or((None, None), |m| (m.psnr, m.ssim))
}

/// Long form: one row per budget, method, region and metric.
pub fn sweep_csv(reports: &[RunReport]) -> String {
    let mut out = String::from("budget_bytes,method,region,metric,value\n");
    for rep in reports {
        for r in &rep.results {
            for region in SWEEP_REGIONS {
                let (psnr, ssim) = summary_region(&r.summary, region);
                for (metric, v) in [("psnr_db", psnr), ("ssim", ssim)] {
                    let v = v.map_or(String::new(), |v| format!("{v:.6}"));
                    out.push_str(&format!("{},{},{region},{metric},{v}\n", rep.channel.wire_budget_bytes, r.method.name()));
                }
            }
        }
    }
    out
}

/// Wide form for plotting: a `metric` column, then one column per
/// budget × method × region; one row per metric.
pub fn sweep_plot_csv(reports: &[RunReport]) -> String {
    let mut header = vec!["metric".to_string()];
    let mut psnr_row = vec!["psnr_db".to_string()];
    let mut ssim_row = vec!["ssim".to_string()];
    for rep in reports {
        for r in &rep.results {
            for region in SWEEP_REGIONS {
                header.push(format!("{}_{}_{region}", rep.channel.wire_budget_bytes, r.method.name()));
                let (psnr, ssim) = summary_region(&r.summary, region);
                psnr_row.push(psnr.map_or(String::new(), |v| format!("{v:.6}")));
                ssim_row.push(ssim.map_or(String::new(), |v| format!("{v:.6}")));
            }
        }
    }
    [header, psnr_row, ssim_row].iter().map(|r| r.join(",") + "\n").collect()
}

pub fn write_sweep(dir: &Path, cfg: &ExperimentConfig, reports: &[RunReport]) -> Result<(), HarnessError> {
    write_provenance(dir, cfg, "sweep")?;
    write(&dir.join("sweep.csv"), config_comment(cfg) + &sweep_csv(reports))?;
    write(&dir.join("sweep_plot.csv"), config_comment(cfg) + &sweep_plot_csv(reports))?;
    let refs: Vec<&RunReport> = reports.iter().collect();
    write(&dir.join("metrics.csv"), metrics_csv(cfg, &refs)?)?;
    let summary = json!({
        "config": cfg,
        "budget_semantics": BUDGET_SEMANTICS,
        "budgets": reports.iter().map(summary_value).collect::<Vec<_>>(),
    });
    write(&dir.join("summary.json"), json_text(&summary))
}

/// Writes original/received PPM pairs and per-level mask PPMs for one
/// method's results, plus `manifest.csv`. Returns the manifest row count.
pub fn export_for_neural_metrics(corpus: &[CorpusItem], result: &MethodResult, out_dir: &Path) -> Result<usize, HarnessError> {
    let dir = out_dir.join(result.method.name());
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    let mut manifest = String::from("image_id,original,received,mask_level1,mask_level2,mask_level3\n");
    for (item, o) in corpus.iter().zip(&result.outcomes) {
        let id = &o.image_id;
        let save = |name: String, img: &crate::image::RasterImage| {
            save_image(img, dir.join(&name)).map_err(|e| HarnessError::stage(id, "export", e))?;
            Ok::<String, HarnessError>(name)
        };
        let mut row = vec![id.clone(), save(format!("{id}_original.ppm"), &item.image)?, save(format!("{id}_received.ppm"), &o.received)?];
        let masks = build_masks(&item.intention, &item.scene);
        for level in MatchLevel::ALL {
            let mask = masks.get(level);
            row.push(if mask.is_empty() { String::new() } else { save(format!("{id}_mask_level{}.ppm", level as u8), &mask.to_image())? });
        }
        manifest.push_str(&row.join(","));
        manifest.push('\n');
    }
    write(&dir.join("manifest.csv"), manifest)?;
    Ok(result.outcomes.len())
}
