//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use depthforge::components::components4;
use depthforge::curate::{classify_image, extract_ordinal_regions, sample_ordinal_pairs, CurateConfig};
use depthforge::fitkit::{finite_diff_audit, fit_log_depth, FitConfig, Init};
use depthforge::loss::{
    data_loss, grad_loss, kink_margin, knee_offset, ord_penalty, ord_penalty_slope, softplus,
    LossConfig,
};
use depthforge::metrics::{sdr, si_rmse, standard_metrics, MetricConfig};
use depthforge::refine::{refine_pipeline, RefineConfig};
use depthforge::synth::{corrupt, preset, render, true_ordinal, DepthProfile, Layer, Preset, SceneSpec, Shape};
use depthforge::{Category, DepthMap, LogDepthMap, OrdinalPair, Relation, SemanticCategoryMask, Verdict};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{batch_inputs, code, run, tree_digest};

/// Pinned tolerances and budgets.
mod tol {
    use std::time::Duration;

    pub const SHIFT_ABS: f64 = 1e-10;
    pub const SHIFT_BUDGET: Duration = Duration::from_secs(5);
    pub const PAIRWISE_REL: f64 = 1e-10;
    pub const AUDIT_REL: f64 = 1e-5;
    pub const AUDIT_BUDGET: Duration = Duration::from_secs(10);
    /// Inputs closer than this to a non-smooth point are redrawn.
    pub const KINK_CLEARANCE: f64 = 1e-3;
    pub const KNEE_JOIN_ABS: f64 = 1e-12;
    pub const KNEE_OFFSET_EXPECTED: f64 = -0.14813;
    /// The reference value is quoted to five decimals, truncated.
    pub const KNEE_OFFSET_ABS: f64 = 1e-5;
    pub const CONTINUITY_SLACK: f64 = 1e-9;
    pub const LABEL_AGREEMENT: f64 = 0.95;
    pub const FIT_SI_RMSE: f64 = 1e-3;
    pub const FIT_STEPS: usize = 5000;
    pub const FIT_BUDGET: Duration = Duration::from_secs(30);
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_log_pair(rng: &mut ChaCha8Rng, w: usize, h: usize) -> (LogDepthMap, LogDepthMap) {
    let valid_rate = rng.random_range(0.3..1.0);
    loop {
        let mut cell = || {
            if rng.random::<f64>() < valid_rate {
                rng.random_range(-4.0..4.0)
            } else {
                f64::NAN
            }
        };
        let pred: Vec<f64> = (0..w * h).map(|_| cell()).collect();
        let gt: Vec<f64> = (0..w * h).map(|_| cell()).collect();
        if pred.iter().zip(&gt).any(|(p, g)| !p.is_nan() && !g.is_nan()) {
            return (
                LogDepthMap::new(w, h, pred).unwrap(),
                LogDepthMap::new(w, h, gt).unwrap(),
            );
        }
    }
}

fn shift_invariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let cfg = LossConfig::default();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (w, h) = (rng.random_range(4..=64), rng.random_range(4..=64));
        let (pred, gt) = random_log_pair(&mut rng, w, h);
        let shifted = pred.shifted(rng.random_range(-10.0..10.0));
        let dd = (data_loss(&pred, &gt).unwrap().value - data_loss(&shifted, &gt).unwrap().value).abs();
        let dg = (grad_loss(&pred, &gt, &cfg).unwrap().value
            - grad_loss(&shifted, &gt, &cfg).unwrap().value)
            .abs();
        worst = worst.max(dd).max(dg);
    }
    let took = start.elapsed();
    ensure(worst < tol::SHIFT_ABS, || format!("max change {worst:e}"))?;
    ensure(took < tol::SHIFT_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("max change {worst:.2e} over 100 pairs in {took:.2?}"))
}

fn pairwise_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let (w, h) = (rng.random_range(1..=32), rng.random_range(1..=32));
        let (pred, gt) = random_log_pair(&mut rng, w, h);
        let r: Vec<f64> = (0..pred.len())
            .filter_map(|i| Some(pred.get(i)? - gt.get(i)?))
            .collect();
        let n = r.len() as f64;
        let mut sum = 0.0;
        for a in &r {
            for b in &r {
                sum += (a - b) * (a - b);
            }
        }
        let oracle = sum / (2.0 * n * n);
        let value = data_loss(&pred, &gt).unwrap().value;
        let rel = if oracle == 0.0 { value.abs() } else { ((value - oracle) / oracle).abs() };
        worst = worst.max(rel);
    }
    ensure(worst < tol::PAIRWISE_REL, || format!("max relative error {worst:e}"))?;
    Ok(format!("max relative error {worst:.2e} over 50 maps"))
}

fn gradient_audit() -> Outcome {
    let cfg = LossConfig {
        alpha: 0.5,
        beta: 0.1,
        tau: 0.25,
        ..LossConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let start = Instant::now();
    let (mut worst, mut configs, mut redrawn, mut pixels) = (0.0f64, 0, 0, 0);
    while configs < 20 {
        let (w, h) = (rng.random_range(4..=16), rng.random_range(4..=16));
        let (pred, gt) = random_log_pair(&mut rng, w, h);
        let pairs: Vec<OrdinalPair> = (0..30)
            .filter_map(|_| {
                let i = (rng.random_range(0..w), rng.random_range(0..h));
                let j = (rng.random_range(0..w), rng.random_range(0..h));
                let rel = if rng.random::<bool>() { Relation::Further } else { Relation::Closer };
                OrdinalPair::new(i, j, rel).ok()
            })
            .collect();
        if kink_margin(&pred, &gt, &pairs, &cfg).unwrap() < tol::KINK_CLEARANCE {
            redrawn += 1;
            continue;
        }
        let report = finite_diff_audit(&pred, &gt, &pairs, &cfg).unwrap();
        worst = worst.max(report.max_rel_error);
        pixels += report.evaluated_pixels;
        configs += 1;
    }
    let took = start.elapsed();
    ensure(worst < tol::AUDIT_REL, || format!("max relative error {worst:e}"))?;
    ensure(took < tol::AUDIT_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "max relative error {worst:.2e} over {pixels} pixels in 20 configurations ({redrawn} redrawn) in {took:.2?}"
    ))
}

fn knee() -> Outcome {
    let tau = 0.25f64;
    // offset written out directly, independent of the library helpers
    let c = (1.0 + tau.exp()).ln() - (1.0 + tau.sqrt().exp()).ln();
    ensure((knee_offset(tau) - c).abs() < tol::KNEE_JOIN_ABS, || {
        format!("offset {} vs {c}", knee_offset(tau))
    })?;
    ensure((c - tol::KNEE_OFFSET_EXPECTED).abs() < tol::KNEE_OFFSET_ABS, || format!("offset {c}"))?;
    let join = (softplus(tau) - (softplus(tau.sqrt()) + c)).abs();
    ensure(join < tol::KNEE_JOIN_ABS, || format!("branches differ by {join:e}"))?;

    let n = 10_000;
    let (lo, hi) = (-5.0f64, 25.0f64);
    let h = (hi - lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|k| lo + k as f64 * h).collect();
    // the slope rises up to the knee and falls after it, so its supremum on
    // each grid cell sits at an end point or just right of the knee
    let lipschitz = grid
        .iter()
        .map(|&p| ord_penalty_slope(p, tau))
        .chain([ord_penalty_slope(tau * (1.0 + 1e-15), tau)])
        .fold(0.0f64, f64::max);
    let mut max_jump = 0.0f64;
    for pair in grid.windows(2) {
        max_jump = max_jump.max((ord_penalty(pair[1], tau) - ord_penalty(pair[0], tau)).abs());
    }
    let bound = lipschitz * h * (1.0 + tol::CONTINUITY_SLACK);
    ensure(max_jump <= bound, || format!("jump {max_jump:e} exceeds {bound:e}"))?;
    Ok(format!(
        "c = {c:.6}, branch gap {join:.1e}, max jump {max_jump:.3e} <= {bound:.3e}"
    ))
}

fn sdr_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let cfg = MetricConfig {
        delta: 0.1,
        ..MetricConfig::default()
    };
    let mut total_pairs = 0;
    for instance in 0..20 {
        let (w, h) = (16, 16);
        let points = rng.random_range(2..=64);
        let mut pred = vec![f32::NAN; w * h];
        let mut gt = vec![f32::NAN; w * h];
        for i in rand::seq::index::sample(&mut rng, w * h, points) {
            gt[i] = rng.random_range(1.0f32..10.0);
            // predictions near the truth so every relation class occurs
            pred[i] = gt[i] * rng.random_range(0.8f32..1.25);
        }
        let pred = DepthMap::new(w, h, pred).unwrap();
        let gt = DepthMap::new(w, h, gt).unwrap();
        let rel = |a: f32, b: f32| {
            let r = f64::from(a) / f64::from(b);
            if r > 1.1 {
                1
            } else if r < 1.0 - 0.1 {
                -1
            } else {
                0
            }
        };
        let idx: Vec<usize> = (0..w * h).filter(|&i| gt.is_valid(i)).collect();
        let (mut n, mut bad, mut n_eq, mut bad_eq) = (0usize, 0usize, 0usize, 0usize);
        for a in 0..idx.len() {
            for b in a + 1..idx.len() {
                let (i, j) = (idx[a], idx[b]);
                let g = rel(gt.get(i).unwrap(), gt.get(j).unwrap());
                let p = rel(pred.get(i).unwrap(), pred.get(j).unwrap());
                n += 1;
                bad += usize::from(p != g);
                if g == 0 {
                    n_eq += 1;
                    bad_eq += usize::from(p != g);
                }
            }
        }
        let rate = |b: usize, n: usize| if n == 0 { 0.0 } else { b as f64 / n as f64 };
        let expected = (rate(bad, n), rate(bad_eq, n_eq), rate(bad - bad_eq, n - n_eq));
        let got = sdr(&pred, &gt, &cfg).unwrap();
        ensure(got.n_pairs == n, || format!("instance {instance}: {} pairs, expected {n}", got.n_pairs))?;
        ensure((got.sdr, got.sdr_eq, got.sdr_neq) == expected, || {
            format!("instance {instance}: {got:?} vs {expected:?}")
        })?;
        total_pairs += n;
    }
    Ok(format!("exact match on 20 instances ({total_pairs} pairs)"))
}

fn refinement_recovery() -> Outcome {
    let cfg = RefineConfig::default();
    let fx = preset(Preset::Bleed);
    let (clean, mask) = render(&fx.scene).unwrap();
    let its = corrupt(&clean, &mask, &fx.noise).unwrap();
    let refined = refine_pipeline(&its, &mask, &cfg).unwrap();
    let fg: Vec<usize> = (0..clean.len()).filter(|&i| mask.get(i) == Category::Foreground).collect();
    let bled = fg.iter().filter(|&&i| its[1].get(i) != clean.get(i)).count();
    let wrong = fg.iter().filter(|&&i| refined.get(i) != clean.get(i)).count();
    ensure(bled > 0, || "bleed preset altered nothing".into())?;
    ensure(wrong == 0, || format!("{wrong} of {} foreground pixels differ", fg.len()))?;

    let fx = preset(Preset::Transient);
    let (clean, mask) = render(&fx.scene).unwrap();
    let its = corrupt(&clean, &mask, &fx.noise).unwrap();
    let refined = refine_pipeline(&its, &mask, &cfg).unwrap();
    let comps = components4(clean.width(), clean.height(), |i| mask.get(i) == Category::Foreground);
    let transient = &comps[fx.noise.transient_component.unwrap()];
    let spurious = transient.iter().filter(|&&i| its[0].is_valid(i)).count();
    let survived = transient.iter().filter(|&&i| refined.is_valid(i)).count();
    ensure(spurious > 0, || "transient preset has no spurious depth".into())?;
    ensure(survived == 0, || format!("{survived} transient depths survived"))?;
    Ok(format!(
        "bleed: {} foreground pixels exact ({bled} bled); transient: {spurious}/{} spurious depths removed",
        fg.len(),
        transient.len()
    ))
}

fn curation_threshold() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let cfg = CurateConfig::default();
    for trial in 0..1000 {
        let (w, h) = (rng.random_range(1..=40), rng.random_range(1..=40));
        let sky_rate = rng.random_range(0.0..0.6);
        let codes: Vec<Category> = (0..w * h)
            .map(|_| {
                if rng.random::<f64>() < sky_rate {
                    Category::Sky
                } else {
                    [Category::Foreground, Category::Background, Category::Unknown][rng.random_range(0..3)]
                }
            })
            .collect();
        let mask = SemanticCategoryMask::new(w, h, codes).unwrap();
        let ground: Vec<usize> = (0..w * h).filter(|&i| mask.get(i) != Category::Sky).collect();
        if ground.is_empty() {
            continue;
        }
        let n = ground.len();
        // smallest count with k / n >= 0.3, in integers
        let k_min = (3 * n).div_ceil(10);
        let order = rand::seq::index::sample(&mut rng, n, n).into_vec();
        let with_valid = |k: usize, rng: &mut ChaCha8Rng| {
            let mut data = vec![f32::NAN; w * h];
            for &o in &order[..k] {
                data[ground[o]] = 1.0;
            }
            // sky depths must not count
            for (i, d) in data.iter_mut().enumerate() {
                if mask.get(i) == Category::Sky && rng.random::<bool>() {
                    *d = 2.0;
                }
            }
            DepthMap::new(w, h, data).unwrap()
        };
        let at = classify_image(&with_valid(k_min, &mut rng), &mask, &cfg).unwrap();
        ensure(at == Verdict::Euclidean, || format!("trial {trial}: {k_min}/{n} gave {at:?}"))?;
        if k_min > 0 {
            let below = classify_image(&with_valid(k_min - 1, &mut rng), &mask, &cfg).unwrap();
            ensure(below == Verdict::Ordinal, || {
                format!("trial {trial}: {}/{n} gave {below:?}", k_min - 1)
            })?;
        }
    }
    let exact = |k: usize, n: usize| {
        let map = DepthMap::new(n, 1, (0..n).map(|i| if i < k { 1.0 } else { f32::NAN }).collect()).unwrap();
        classify_image(&map, &SemanticCategoryMask::filled(n, 1, Category::Background), &cfg).unwrap()
    };
    ensure(exact(30, 100) == Verdict::Euclidean, || "0.30 is not Euclidean".into())?;
    ensure(exact(29, 100) == Verdict::Ordinal, || "0.29 is not ordinal".into())?;
    ensure(exact(31, 100) == Verdict::Euclidean, || "0.31 is not Euclidean".into())?;
    Ok("verdict flips exactly at 0.30 on 1000 random masks".into())
}

fn labelling_accuracy() -> Outcome {
    let fx = preset(Preset::Mixed);
    let (clean, mask) = render(&fx.scene).unwrap();
    let its = corrupt(&clean, &mask, &fx.noise).unwrap();
    let refined = refine_pipeline(&its, &mask, &RefineConfig::default()).unwrap();
    let cfg = CurateConfig {
        pairs_per_image: 1000,
        ..CurateConfig::default()
    };
    let regions = extract_ordinal_regions(&refined, &mask, &cfg).unwrap();
    let pairs = sample_ordinal_pairs(&regions, "mixed", &cfg).unwrap();
    ensure(pairs.len() == 1000, || format!("{} pairs sampled", pairs.len()))?;
    let agree = pairs
        .iter()
        .filter(|p| true_ordinal(&clean, p).unwrap() == p.relation.sign())
        .count();
    let rate = agree as f64 / pairs.len() as f64;
    ensure(rate >= tol::LABEL_AGREEMENT, || format!("agreement {rate}"))?;
    Ok(format!("{agree}/1000 pairs agree with the true ordering"))
}

fn end_to_end_fit() -> Outcome {
    let spec = SceneSpec {
        width: 16,
        height: 16,
        sky_band: 2,
        seed: 0,
        layers: vec![
            Layer {
                shape: Shape::Rect { x0: 0, y0: 0, x1: 16, y1: 16 },
                category: Category::Background,
                depth: DepthProfile::Ramp { a: 30.0, b: 0.3, c: -1.2 },
            },
            Layer {
                shape: Shape::Disc { cx: 9.0, cy: 10.0, radius: 4.0 },
                category: Category::Foreground,
                depth: DepthProfile::Constant { value: 6.0 },
            },
        ],
    };
    let (clean, _) = render(&spec).unwrap();
    let cfg = FitConfig {
        steps: tol::FIT_STEPS,
        learning_rate: 120.0,
        lr_decay: 0.997,
        init: Init::Random { seed: 3, stddev: 1.0 },
        loss: LossConfig::default(),
        fd_check_every: None,
    };
    let start = Instant::now();
    let fit = fit_log_depth(&clean.to_log(), &[], &cfg).map_err(|e| e.to_string())?;
    let took = start.elapsed();
    let err = si_rmse(&fit.fitted.to_depth().unwrap(), &clean).unwrap();
    ensure(err < tol::FIT_SI_RMSE, || format!("si-RMSE {err:e}"))?;
    ensure(took < tol::FIT_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("si-RMSE {err:.2e} after {} steps in {took:.2?}", tol::FIT_STEPS))
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let manifest = batch_inputs(root, 8);
    let stage = |name: &str, args: &[&str], input: &Path, workers: &str, tag: &str| -> Result<String, String> {
        let out = root.join(format!("{name}-{tag}"));
        let mut full: Vec<String> = vec!["--workers".into(), workers.into(), "--seed".into(), "17".into()];
        full.extend(args.iter().map(|a| a.to_string()));
        full.extend(["--manifest".into(), s(input), "--out-dir".into(), s(&out)]);
        let argv: Vec<&str> = full.iter().map(String::as_str).collect();
        let o = run(&argv);
        ensure(code(&o) == 0, || {
            format!("{name} with {workers} workers exited {}: {}", code(&o), String::from_utf8_lossy(&o.stderr))
        })?;
        Ok(tree_digest(&out))
    };
    let runs = [("1", "w1"), ("4", "w4"), ("8", "w8"), ("1", "w1-again")];
    let mut input = manifest.clone();
    let mut files = 0;
    for (name, args) in [("refine", &[][..]), ("curate", &[][..]), ("label-ordinal", &["--all"][..])] {
        let cmd: Vec<&str> = std::iter::once(name).chain(args.iter().copied()).collect();
        let digests: Vec<String> = runs
            .iter()
            .map(|(workers, tag)| stage(name, &cmd, &input, workers, tag))
            .collect::<Result<_, _>>()?;
        ensure(digests.iter().all(|d| d == &digests[0]), || format!("{name} outputs differ: {digests:?}"))?;
        files += fs::read_dir(root.join(format!("{name}-w1"))).unwrap().count();
        // the next stage reads this stage's single-worker output
        input = root.join(format!("{name}-w1")).join("manifest.jsonl");
    }
    let synth_a = root.join("synth-a");
    let synth_b = root.join("synth-b");
    for out in [&synth_a, &synth_b] {
        ensure(code(&run(&["--seed", "17", "synth", "--preset", "mixed", "--out-dir", &s(out)])) == 0, || {
            "synth failed".into()
        })?;
    }
    ensure(tree_digest(&synth_a) == tree_digest(&synth_b), || "synth outputs differ".into())?;
    Ok(format!(
        "refine, curate, label-ordinal and synth identical across workers 1/4/8 and a repeat run ({files} top-level outputs)"
    ))
}

fn metrics_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let gt: Vec<f32> = (0..24 * 18).map(|_| rng.random_range(0.5f32..80.0)).collect();
    let gt = DepthMap::new(24, 18, gt).unwrap();
    let pred = gt.scaled(2.0).unwrap();
    let plain = standard_metrics(&pred, &gt, &MetricConfig::default()).unwrap();
    ensure(plain.abs_rel == 1.0, || format!("abs_rel {}", plain.abs_rel))?;
    let aligned = standard_metrics(
        &pred,
        &gt,
        &MetricConfig {
            align_scale: true,
            ..MetricConfig::default()
        },
    )
    .unwrap();
    ensure(aligned.scale == 0.5, || format!("scale {}", aligned.scale))?;
    let all = [aligned.rms, aligned.rms_log, aligned.abs_rel, aligned.sq_rel, aligned.log10];
    ensure(all.iter().all(|&v| v == 0.0), || format!("aligned metrics {aligned:?}"))?;
    Ok("abs_rel = 1 unaligned; s = 0.5 and all five metrics 0 aligned".into())
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("loss shift invariance", shift_invariance),
        ("pairwise data-term oracle", pairwise_oracle),
        ("gradient audit", gradient_audit),
        ("ordinal knee and continuity", knee),
        ("SDR exhaustive oracle", sdr_oracle),
        ("refinement recovery", refinement_recovery),
        ("curation threshold", curation_threshold),
        ("ordinal labelling accuracy", labelling_accuracy),
        ("end-to-end fit", end_to_end_fit),
        ("batch determinism", determinism),
        ("metrics sanity", metrics_sanity),
    ];
    let mut failed = 0;
    let started = Instant::now();
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let elapsed: Duration = t.elapsed();
        match outcome {
            Ok(detail) => println!("AC-{:02} PASS  {name}: {detail} [{elapsed:.2?}]", k + 1),
            Err(why) => {
                failed += 1;
                println!("AC-{:02} FAIL  {name}: {why} [{elapsed:.2?}]", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.2?}",
        criteria.len() - failed,
        started.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
