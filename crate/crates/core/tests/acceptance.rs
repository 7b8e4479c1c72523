//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::Rng;

use pace_core::codec::{decode_region, encode_region};
use pace_core::cot::relevance;
use pace_core::eval::{psnr, ssim};
use pace_core::harness::config::AblationMode;
use pace_core::harness::corpus::synthesize_corpus;
use pace_core::harness::report::{calibrate_kb, run_ablation, run_comparison, OrderingCheck};
use pace_core::harness::synth::{texture_patch, Texture};
use pace_core::harness::{Context, ExperimentConfig};
use pace_core::image::RasterImage;
use pace_core::intent::{generate_intention, SynonymLexicon, DEFAULT_TEMPLATE};
use pace_core::kb::{calibrate, geometric_grid, ChannelKey, RdCurve};
use pace_core::matcher::MatchTriple;
use pace_core::phy::ldpc::DEFAULT_CODE_SEED;
use pace_core::phy::link::{transmit, LinkConfig};
use pace_core::phy::sim::{coded_ber, uncoded_ber};
use pace_core::phy::{shared_code, Frame, FrameRegion, RegionKind};
use pace_core::rng;
use pace_core::scene::{BBox, ChannelState, MatchLevel};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn level_value(l: MatchLevel) -> i32 {
    match l {
        MatchLevel::Low => 1,
        MatchLevel::Medium => 2,
        MatchLevel::High => 3,
    }
}

fn c1_relevance() -> Outcome {
    let start = Instant::now();
    let mut image = std::collections::BTreeSet::new();
    for c in MatchLevel::ALL {
        for g in MatchLevel::ALL {
            for o in MatchLevel::ALL {
                let got = relevance(&MatchTriple::new(c, g, o));
                let want = 2 * level_value(c) + (level_value(g) - 2) + (level_value(o) - 2);
                ensure(i32::from(got) == want, format!("({c:?},{g:?},{o:?}) -> {got}, want {want}"))?;
                image.insert(got);
            }
        }
    }
    ensure(image == (0..=8).collect(), format!("image {image:?}"))?;
    let t = start.elapsed().as_secs_f64();
    ensure(t < 1.0, format!("took {t:.3} s"))?;
    Ok(format!("27 triples exact, image 0..=8, {t:.4} s"))
}

fn random_frame(seed: u64) -> Frame {
    let mut r = rng::seeded(seed);
    let regions = r.gen_range(1..=4);
    let mut out = Vec::new();
    for i in 0..regions {
        let len = r.gen_range(1..=2500);
        let (w, h) = (r.gen_range(1..=640u32), r.gen_range(1..=480u32));
        let bbox = if i == 0 { BBox::full(640, 480) } else { BBox::new(r.gen_range(0..=640 - w), r.gen_range(0..=480 - h), w, h) };
        out.push(FrameRegion {
            kind: if i == 0 { RegionKind::Background } else { RegionKind::Object },
            category_id: if i == 0 { 0 } else { r.gen_range(1..=80) },
            bbox,
            payload: (0..len).map(|_| r.gen()).collect(),
        });
    }
    Frame { width: 640, height: 480, regions: out }
}

fn c2_error_free_link() -> Outcome {
    let code = shared_code(DEFAULT_CODE_SEED).map_err(|e| e.to_string())?;
    let link = LinkConfig::new(20.0);
    let (mut blocks, mut errors, mut mismatched) = (0u64, 0u64, 0u64);
    for i in 0..1000 {
        let frame = random_frame(rng::derive(0xF2A3E, i));
        let (rx, report) = transmit(&frame, &code, &link, rng::derive(0xA4C, i));
        blocks += report.blocks;
        errors += report.block_errors + report.unconverged_blocks;
        if !rx.header_ok || rx.to_frame() != frame {
            mismatched += 1;
        }
    }
    ensure(errors == 0 && mismatched == 0, format!("{errors} block errors, {mismatched} frames differ over {blocks} blocks"))?;
    Ok(format!("1000 frames, {blocks} LDPC blocks at Es/N0 20 dB, 0 block errors"))
}

fn c3_coding_gain() -> Outcome {
    let code = shared_code(DEFAULT_CODE_SEED).map_err(|e| e.to_string())?;
    let coded = coded_ber(&code, 6.0, 330, 50, 61);
    let uncoded = uncoded_ber(6.0, 1 << 20, 62);
    ensure(coded.bits >= 1_000_000 && uncoded.bits >= 1_000_000, "fewer than 1e6 bits")?;
    ensure(
        coded.ber() <= 0.1 * uncoded.ber(),
        format!("coded {:.3e} vs uncoded {:.3e}", coded.ber(), uncoded.ber()),
    )?;
    let sweep = [3.0, 3.5, 4.0];
    let stats: Vec<_> = sweep.iter().enumerate().map(|(i, &eb)| coded_ber(&code, eb, 200, 50, 70 + i as u64)).collect();
    for i in 0..2 {
        let (lo_prev, _) = stats[i].ci95();
        let (_, hi_next) = stats[i + 1].ci95();
        ensure(
            hi_next < lo_prev,
            format!("Eb/N0 {} dB CI upper {hi_next:.3e} not below {} dB CI lower {lo_prev:.3e}", sweep[i + 1], sweep[i]),
        )?;
    }
    let bers: Vec<String> = stats.iter().map(|s| format!("{:.2e}", s.ber())).collect();
    Ok(format!(
        "6 dB: coded {:.2e} over {} bits, uncoded {:.3e}; sweep {:?} dB -> [{}] separated at 95%",
        coded.ber(),
        coded.bits,
        uncoded.ber(),
        sweep,
        bers.join(", ")
    ))
}

fn textured_fixture() -> RasterImage {
    let mut img = RasterImage::filled(256, 256, [0, 0, 0]);
    let tiles = [
        (Texture::Noise, [150, 100, 60]),
        (Texture::Stripes, [60, 120, 200]),
        (Texture::Checker, [200, 200, 60]),
        (Texture::Blotches, [90, 160, 90]),
    ];
    for (i, (t, c)) in tiles.into_iter().enumerate() {
        let patch = texture_patch(t, 128, 128, c, &mut rng::seeded(40 + i as u64));
        img.paste(&patch, (i % 2) * 128, (i / 2) * 128);
    }
    img
}

fn c4_rate_control() -> Outcome {
    let img = textured_fixture();
    let full = BBox::full(256, 256);
    let mut last = f64::MIN;
    let mut line = Vec::new();
    for budget in [500usize, 1000, 2000, 4000, 8000] {
        let s = encode_region(&img, 8 * budget as u64).map_err(|e| e.to_string())?;
        ensure(s.bytes.len() <= budget, format!("{} bytes at budget {budget}", s.bytes.len()))?;
        let d = decode_region(&s.bytes, &full).map_err(|e| e.to_string())?;
        let p = psnr(&img, &d.image, None).map_err(|e| e.to_string())?;
        ensure(p >= last - 0.1, format!("PSNR {p:.2} at {budget} B below {last:.2}"))?;
        last = last.max(p);
        line.push(format!("{budget}B:{}B/{p:.2}dB", s.bytes.len()));
    }
    Ok(line.join(" "))
}

fn c5_intention_distribution() -> Outcome {
    let labels: Vec<String> = (0..9_999).map(|i| format!("item{i:04}")).collect();
    let lexicon = SynonymLexicon::new(labels.iter().enumerate().map(|(i, l)| (l.clone(), vec![format!("alias{i:04}")])).collect())
        .map_err(|e| e.to_string())?;
    let run = || generate_intention(&labels, &lexicon, 20_240_501, DEFAULT_TEMPLATE).map_err(|e| e.to_string());
    let (a, b) = (run()?, run()?);
    let (ja, jb) = (serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    ensure(ja == jb, "two runs differ")?;
    let mut counts: BTreeMap<MatchLevel, usize> = BTreeMap::new();
    for t in &a.intention.targets {
        *counts.entry(t.level).or_default() += 1;
    }
    let mut fracs = Vec::new();
    for level in MatchLevel::ALL {
        let f = counts.get(&level).copied().unwrap_or(0) as f64 / labels.len() as f64;
        ensure((f - 0.333).abs() <= 0.02, format!("{level:?} fraction {f:.4}"))?;
        fracs.push(format!("{level:?} {f:.4}"));
    }
    Ok(format!("9999 distinct labels: {}; runs bitwise identical", fracs.join(", ")))
}

fn c6_kb_query() -> Outcome {
    let channel = ChannelState::new(20.0, 10_000);
    let key = ChannelKey::of(&channel);
    let hand = RdCurve { category: "x".into(), key, points: vec![(1000, 30.0), (2000, 34.0)] };
    ensure(hand.bits_for(32.0) == 1500, format!("hand case gave {}", hand.bits_for(32.0)))?;

    let mut crops = BTreeMap::new();
    crops.insert("noise".to_string(), (0..2).map(|i| texture_patch(Texture::Noise, 48, 48, [120, 90, 60], &mut rng::seeded(i))).collect());
    crops.insert("waves".to_string(), (0..2).map(|i| texture_patch(Texture::Waves, 40, 56, [60, 90, 160], &mut rng::seeded(9 + i))).collect());
    let code = shared_code(DEFAULT_CODE_SEED).map_err(|e| e.to_string())?;
    let kb = calibrate(&crops, &channel, &geometric_grid(512, 65_536, 8), &code, 50, 5).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for curve in kb.curves() {
        for (i, &(bits, p)) in curve.points.iter().enumerate() {
            // On a plateau the smallest bit length reaching the value is the answer.
            let first = curve.points.iter().position(|q| q.1 == p).unwrap();
            ensure(first != i || curve.bits_for(p) == bits, format!("{}: grid {bits} b / {p:.3} dB gave {}", curve.category, curve.bits_for(p)))?;
            checked += 1;
        }
        let (lo, hi) = (curve.points[0].1 - 2.0, curve.points.last().unwrap().1 + 2.0);
        let mut prev = 0;
        for k in 0..=2000 {
            let target = lo + (hi - lo) * k as f64 / 2000.0;
            let b = curve.bits_for(target);
            ensure(b >= prev, format!("{}: bits fell from {prev} to {b} at {target:.3} dB", curve.category))?;
            prev = b;
        }
    }
    Ok(format!("hand case 1500 b; {checked} grid points exact; 2001-point sweeps monotone on {} curves", kb.len()))
}

struct Shared {
    ctx: Context,
    corpus: Vec<pace_core::harness::CorpusItem>,
}

fn shared() -> Result<Shared, String> {
    let cfg = ExperimentConfig::default();
    let lexicon = SynonymLexicon::bundled();
    let corpus = synthesize_corpus(&cfg, &lexicon).map_err(|e| e.to_string())?;
    let kb = calibrate_kb(&Context::new(cfg.clone(), None).map_err(|e| e.to_string())?, &corpus).map_err(|e| e.to_string())?;
    let ctx = Context::new(cfg, Some(kb)).map_err(|e| e.to_string())?;
    Ok(Shared { ctx, corpus })
}

fn checks_outcome(checks: &[OrderingCheck], expected: usize) -> Outcome {
    ensure(checks.len() == expected, format!("{} checks, want {expected}", checks.len()))?;
    let lines: Vec<String> = checks.iter().map(ToString::to_string).collect();
    ensure(checks.iter().all(|c| c.passed), lines.join("; "))?;
    Ok(lines.join("; "))
}

fn c7_table1_direction(s: &Shared) -> Outcome {
    let start = Instant::now();
    ensure(s.corpus.len() >= 20, "corpus under 20 images")?;
    ensure(s.ctx.config.channel.wire_budget_bytes == 10_000, "budget is not 10,000 bytes")?;
    let report = run_comparison(&s.ctx, &s.corpus).map_err(|e| e.to_string())?;
    let t = start.elapsed().as_secs_f64();
    ensure(t < 600.0, format!("took {t:.0} s"))?;
    checks_outcome(&report.checks, 2).map(|l| format!("{} images, {t:.0} s: {l}", s.corpus.len()))
}

fn c8_ablation_direction(s: &Shared) -> Outcome {
    let report = run_ablation(&s.ctx, &s.corpus, &[AblationMode::NoVoting, AblationMode::NoKb]).map_err(|e| e.to_string())?;
    checks_outcome(&report.checks, 2)
}

fn c9_metric_identities() -> Outcome {
    let mut r = rng::seeded(99);
    let a = RasterImage::new(64, 48, (0..64 * 48 * 3).map(|_| r.gen_range(1..=254)).collect()).unwrap();
    let cap = psnr(&a, &a, None).map_err(|e| e.to_string())?;
    ensure(cap == 100.0, format!("identical PSNR {cap}"))?;
    let b = RasterImage::new(64, 48, a.samples().iter().map(|v| v + 1).collect()).unwrap();
    let d1 = psnr(&a, &b, None).map_err(|e| e.to_string())?;
    ensure((d1 - 48.13).abs() <= 0.01, format!("diff-1 PSNR {d1}"))?;
    let s = ssim(&a, &a, None).map_err(|e| e.to_string())?;
    ensure((s - 1.0).abs() <= 1e-9, format!("SSIM(a,a) {s}"))?;
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let (x, y) = ssim_pair(seed);
        let got = ssim(&x, &y, None).map_err(|e| e.to_string())?;
        worst = worst.max((got - naive_ssim(&x, &y)).abs());
    }
    ensure(worst <= 1e-6, format!("SSIM off naive reference by {worst:.2e}"))?;
    Ok(format!("cap 100, diff-1 {d1:.4} dB, SSIM(a,a) {s}, naive SSIM max diff {worst:.1e} on 10 pairs"))
}

fn ssim_pair(seed: u64) -> (RasterImage, RasterImage) {
    let mut r = rng::seeded(1000 + seed);
    let (w, h) = (r.gen_range(11..40), r.gen_range(11..40));
    let a: Vec<u8> = (0..w * h * 3).map(|_| r.gen()).collect();
    let amp = r.gen_range(0..80);
    let b: Vec<u8> = a.iter().map(|&v| (i32::from(v) + r.gen_range(-amp..=amp)).clamp(0, 255) as u8).collect();
    (RasterImage::new(w, h, a).unwrap(), RasterImage::new(w, h, b).unwrap())
}

/// Direct 2-D evaluation of mean SSIM over every valid 11×11 Gaussian window.
fn naive_ssim(a: &RasterImage, b: &RasterImage) -> f64 {
    let luma = |img: &RasterImage, x: usize, y: usize| {
        let p = img.pixel(x, y);
        0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
    };
    let g: Vec<f64> = (0..11).map(|i| (-((i as f64 - 5.0).powi(2)) / (2.0 * 1.5 * 1.5)).exp()).collect();
    let gs: f64 = g.iter().sum();
    let (c1, c2) = ((0.01 * 255.0f64).powi(2), (0.03 * 255.0f64).powi(2));
    let (w, h) = (a.width(), a.height());
    let mut total = 0.0;
    let mut n = 0;
    for y0 in 0..=h - 11 {
        for x0 in 0..=w - 11 {
            let (mut ma, mut mb) = (0.0, 0.0);
            for j in 0..11 {
                for i in 0..11 {
                    let wt = g[i] * g[j] / (gs * gs);
                    ma += wt * luma(a, x0 + i, y0 + j);
                    mb += wt * luma(b, x0 + i, y0 + j);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for j in 0..11 {
                for i in 0..11 {
                    let wt = g[i] * g[j] / (gs * gs);
                    let (da, db) = (luma(a, x0 + i, y0 + j) - ma, luma(b, x0 + i, y0 + j) - mb);
                    va += wt * da * da;
                    vb += wt * db * db;
                    cov += wt * da * db;
                }
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            n += 1;
        }
    }
    total / n as f64
}

fn pace(args: &[&str], cwd: &Path) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_pace")).args(args).current_dir(cwd).output().map_err(|e| e.to_string())?;
    ensure(out.status.success(), format!("pace {args:?}: {}", String::from_utf8_lossy(&out.stderr)))
}

fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c10_reproducibility() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = "[corpus]\nimages = 3\n[calibration]\nbit_grid = [2048, 8192, 32768]\ncrops_per_category = 2\n";
    std::fs::write(tmp.path().join("exp.toml"), cfg).map_err(|e| e.to_string())?;
    for args in [
        &["--config", "exp.toml", "gen-corpus"][..],
        &["--config", "exp.toml", "calibrate"],
        &["--config", "exp.toml", "run", "--out", "a"],
        &["--config", "exp.toml", "run", "--out", "b"],
    ] {
        pace(args, tmp.path())?;
    }
    let (a, b) = (tree(&tmp.path().join("a")), tree(&tmp.path().join("b")));
    ensure(a.keys().eq(b.keys()), "run directories list different files")?;
    let differing: Vec<&String> = a.keys().filter(|k| k.as_str() != "meta.json" && a[*k] != b[*k]).collect();
    ensure(differing.is_empty(), format!("differ: {differing:?}"))?;
    let count = |prefix: &str| a.keys().filter(|k| k.starts_with(prefix)).count();
    ensure(count("frames") > 0 && count("plans") > 0 && a.contains_key("metrics.csv"), "run directory incomplete")?;
    Ok(format!(
        "{} files identical across two runs ({} frames, {} plans, metrics.csv, summary.json); only meta.json may differ",
        a.len() - 1,
        count("frames"),
        count("plans")
    ))
}

fn main() {
    // Optional criterion numbers as arguments select a subset; libtest flags are ignored.
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let selected = |n: u32| only.is_empty() || only.contains(&n);
    let (mut failures, mut ran) = (0, 0);
    let mut report = |n: u32, name: &str, f: &dyn Fn() -> Outcome| {
        if !selected(n) {
            return;
        }
        ran += 1;
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let t = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS criterion {n:>2} {name} ({t:.1} s): {detail}"),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {n:>2} {name} ({t:.1} s): {detail}");
            }
        }
    };
    report(1, "relevance scorer exactness", &c1_relevance);
    report(2, "error-free link at 20 dB", &c2_error_free_link);
    report(3, "coding gain and BER monotonicity", &c3_coding_gain);
    report(4, "codec rate control", &c4_rate_control);
    report(5, "intention level distribution", &c5_intention_distribution);
    report(6, "knowledge-base queries", &c6_kb_query);
    match if selected(7) || selected(8) { shared() } else { Err(String::new()) } {
        Ok(s) => {
            report(7, "comparison directions", &|| c7_table1_direction(&s));
            report(8, "ablation directions", &|| c8_ablation_direction(&s));
        }
        Err(e) => {
            report(7, "comparison directions", &|| Err(format!("setup: {e}")));
            report(8, "ablation directions", &|| Err(format!("setup: {e}")));
        }
    }
    report(9, "metric identities", &c9_metric_identities);
    report(10, "run reproducibility", &c10_reproducibility);
    println!("acceptance: {} of {ran} criteria passed", ran - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
