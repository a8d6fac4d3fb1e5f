//! Exit criteria, run in order on one thread so the timing budgets measure
//! the work alone. Prints one PASS/FAIL/WAIVED line per criterion and exits
//! non-zero if any criterion fails.
//!
//! Set `ONEFLOW_THYROID_CSV` to a labelled CSV (label in the last column) to
//! run the tabular F1 check; it is waived otherwise.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use oneflow::ad::{Backend, Tape, Tensor};
use oneflow::bench::{run_bench2d, BenchConfig, BenchRun};
use oneflow::boundary::{region_area_mc, BBox};
use oneflow::data::{load_csv, synth, LabelColumn, SynthName};
use oneflow::eval::{auc, evaluate, prf1_at_count, BoundingRegion, KRule, Method};
use oneflow::flow::{numeric_jacobian_logdet, FlowConfig, FlowModel, FlowVariant};
use oneflow::objective::{cost_const_det, log_unit_ball_volume, row_norms};
use oneflow::quantile::{bernstein_quantile_value, bernstein_upper_quantile, bernstein_weights};
use oneflow::training::{train, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = Result<(bool, String), String>;

struct Report {
    lines: Vec<(u32, &'static str, Option<bool>, String)>,
}

impl Report {
    fn record(&mut self, id: u32, name: &'static str, outcome: Check) {
        let (status, detail) = match outcome {
            Ok((pass, detail)) => (Some(pass), detail),
            Err(e) => (Some(false), format!("error: {e}")),
        };
        self.push(id, name, status, detail);
    }

    fn waive(&mut self, id: u32, name: &'static str, reason: String) {
        self.push(id, name, None, reason);
    }

    fn push(&mut self, id: u32, name: &'static str, status: Option<bool>, detail: String) {
        let tag = match status {
            Some(true) => "PASS",
            Some(false) => "FAIL",
            None => "WAIVED",
        };
        println!("criterion {id:>2} [{tag}] {name}: {detail}");
        self.lines.push((id, name, status, detail));
    }
}

fn gaussian(n: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::matrix(n, d, (0..n * d).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

fn random_model(d: usize, variant: FlowVariant, hidden: usize, seed: u64) -> FlowModel {
    let mut m = FlowModel::init(FlowConfig::new(d, variant).with_hidden_dim(hidden).with_seed(seed)).unwrap();
    m.perturb(0.05, seed + 1000);
    m
}

const VARIANTS: [FlowVariant; 2] = [FlowVariant::ConstDet, FlowVariant::General];

fn invertibility() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for d in [2, 3, 8, 20] {
        for v in VARIANTS {
            let m = random_model(d, v, 64, d as u64);
            let x = gaussian(1000, d, 10 + d as u64);
            let (z, _) = m.forward_eval(&x).map_err(|e| e.to_string())?;
            let (back, _) = m.inverse_eval(&z).map_err(|e| e.to_string())?;
            worst = worst.max(back.max_abs_diff(&x));
        }
    }
    let t = start.elapsed();
    Ok((
        worst < 1e-6 && t < Duration::from_secs(10),
        format!("max |f⁻¹(f(x)) − x| = {worst:.2e} (< 1e-6), {:.2}s (< 10s)", t.as_secs_f64()),
    ))
}

fn determinants() -> Check {
    let start = Instant::now();
    let mut worst_rel: f64 = 0.0;
    for d in [2, 3, 4] {
        for v in VARIANTS {
            for seed in 0..3 {
                let m = random_model(d, v, 32, 50 + seed);
                let x = gaussian(4, d, 70 + seed);
                let (_, ld) = m.forward_eval(&x).map_err(|e| e.to_string())?;
                for (i, ld) in ld.iter().enumerate() {
                    let numeric = numeric_jacobian_logdet(&m, x.row(i)).map_err(|e| e.to_string())?;
                    worst_rel = worst_rel.max((numeric - ld).abs() / ld.abs().max(1e-2));
                }
            }
        }
    }
    let m = random_model(4, FlowVariant::ConstDet, 64, 9);
    let (_, ld) = m.forward_eval(&gaussian(1000, 4, 3)).map_err(|e| e.to_string())?;
    let spread = ld.iter().map(|v| (v - ld[0]).abs()).fold(0.0, f64::max);
    let t = start.elapsed();
    Ok((
        worst_rel < 1e-4 && spread < 1e-12 && t < Duration::from_secs(30),
        format!(
            "worst relative log-det error {worst_rel:.2e} (< 1e-4), const-det spread {spread:.2e} (< 1e-12), {:.2}s (< 30s)",
            t.as_secs_f64()
        ),
    ))
}

fn bernstein() -> Check {
    let alphas = [0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];
    let mut worst_sum: f64 = 0.0;
    for n in [1, 2, 3, 10, 100, 1000, 10_000, 100_000] {
        for a in alphas {
            let w = bernstein_weights(n, a).map_err(|e| e.to_string())?;
            worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
        }
    }
    let sample: Vec<f64> = gaussian(500, 1, 4).data().iter().map(|v| v.abs()).collect();
    let grid: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
    let est: Vec<f64> = grid
        .iter()
        .map(|&a| bernstein_quantile_value(&sample, a))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let monotone = est.windows(2).all(|w| w[1] <= w[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let uniform: Vec<f64> = (0..10_000).map(|_| rng.gen::<f64>()).collect();
    let q = bernstein_quantile_value(&uniform, 0.05).map_err(|e| e.to_string())?;
    Ok((
        worst_sum < 1e-12 && monotone && (q - 0.95).abs() < 0.02,
        format!("max |Σw − 1| = {worst_sum:.1e} (< 1e-12), non-increasing in α: {monotone}, uniform 0.95-quantile {q:.4} (±0.02)"),
    ))
}

fn gradient_sparsity() -> Check {
    let (n, alpha) = (256usize, 0.05);
    let mut tape = Tape::new();
    let z = tape.param(&gaussian(n, 2, 21));
    let radii = row_norms(&mut tape, &z).map_err(|e| e.to_string())?;
    let est = bernstein_upper_quantile(&mut tape, &radii, alpha).map_err(|e| e.to_string())?;
    let grads = tape.backward(est.value).map_err(|e| e.to_string())?;
    let g = grads.wrt(radii).ok_or("no gradient reached the radii")?;
    let max = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut ranks: Vec<usize> = Vec::new();
    for (rank, &i) in est.perm.iter().enumerate() {
        if g[i].abs() > 1e-9 * max {
            ranks.push(rank);
        }
    }
    let fraction = ranks.len() as f64 / n as f64;
    let mean = n as f64 * alpha;
    let sd = (mean * (1.0 - alpha)).sqrt();
    let (lo, hi) = (mean - 4.0 * sd, mean + 4.0 * sd);
    let in_window = ranks.iter().all(|&r| (r as f64) >= lo && (r as f64) <= hi);
    let (first, last) = (ranks.first().copied().unwrap_or(0), ranks.last().copied().unwrap_or(0));
    Ok((
        (0.02..=0.25).contains(&fraction) && in_window,
        format!(
            "fraction {fraction:.4} in [0.02, 0.25]: {}; gradient ranks {first}..={last} inside [{lo:.2}, {hi:.2}]: {in_window} (Gaussian estimate 6σ/n = {:.4})",
            (0.02..=0.25).contains(&fraction),
            6.0 * sd / n as f64
        ),
    ))
}

fn scale_invariance(moons: &BenchRun) -> Check {
    let m = random_model(3, FlowVariant::ConstDet, 16, 31);
    let x = gaussian(256, 3, 32);
    let cost = |m: &FlowModel| -> Result<f64, String> {
        let mut tape = Tape::new();
        let flow = m.bind(&mut tape);
        let xv = tape.constant(x.clone());
        let c = cost_const_det(&mut tape, &flow, &xv, 0.05).map_err(|e| e.to_string())?;
        Ok(tape.value(c.total).item())
    };
    let base = cost(&m)?;
    let mut worst: f64 = 0.0;
    for shift in [0.7, -2.3, 4.0] {
        let mut scaled = m.clone();
        let s = scaled.scaling_mut().ok_or("const-det model has no scaling layer")?;
        s.log_scale.data_mut().iter_mut().for_each(|v| *v += shift);
        worst = worst.max((cost(&scaled)? - base).abs());
    }
    let region = &moons.region;
    let x = region.standardizer.apply(&synth(SynthName::TwoMoons, 2000, 0).unwrap().features).unwrap();
    let (z, _) = region.model.forward_eval(&x).map_err(|e| e.to_string())?;
    let z0 = z.row(0).to_vec();
    let far = z.data().chunks(2).map(|p| (p[0] - z0[0]).hypot(p[1] - z0[1])).fold(0.0, f64::max);
    Ok((
        worst < 1e-9 && region.radius > 1e-3 && far > 1e-3,
        format!(
            "cost change under latent rescaling {worst:.1e} (< 1e-9); two-moons radius {:.4} (> 1e-3), latent spread {far:.3} (> 1e-3)",
            region.radius
        ),
    ))
}

fn coverage_calibration(bench: &[BenchRun]) -> Check {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in SynthName::ALL {
        let data = synth(name, 2000, 0).map_err(|e| e.to_string())?;
        let reused = bench
            .iter()
            .find(|r| r.dataset == name && r.method == Method::ConstDet)
            .ok_or("benchmark run missing")?;
        let mut elapsed = reused.train_time;
        let mut covs = vec![(0.05, reused.region.coverage(&data.features).map_err(|e| e.to_string())?)];
        for alpha in [0.01, 0.10] {
            let cfg = TrainConfig { alpha, ..TrainConfig::preset_2d() };
            let start = Instant::now();
            let (region, _) = train(&data, &cfg).map_err(|e| e.to_string())?;
            elapsed += start.elapsed();
            covs.push((alpha, region.coverage(&data.features).map_err(|e| e.to_string())?));
        }
        covs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let calibrated = covs.iter().all(|&(a, c)| (c - (1.0 - a)).abs() <= 0.02 + 1e-12);
        let fast = elapsed < Duration::from_secs(180);
        ok &= calibrated && fast;
        let covs: Vec<String> = covs.iter().map(|(a, c)| format!("α={a}: {c:.4}")).collect();
        parts.push(format!("{name} [{}] {:.0}s", covs.join(", "), elapsed.as_secs_f64()));
    }
    Ok((ok, format!("{} (each within 1−α ± 0.02, < 180s per preset)", parts.join("; "))))
}

fn small_blob_rejection(bench: &[BenchRun]) -> Check {
    let run = bench
        .iter()
        .find(|r| r.dataset == SynthName::DiverseBlobs && r.method == Method::ConstDet)
        .ok_or("benchmark run missing")?;
    let data = synth(SynthName::DiverseBlobs, 2000, 0).map_err(|e| e.to_string())?;
    let small = data.rows_with_label(1).unwrap().map_err(|e| e.to_string())?;
    let large = data.rows_with_label(0).unwrap().map_err(|e| e.to_string())?;
    let outside = 1.0 - run.region.coverage(&small).map_err(|e| e.to_string())?;
    let inside = run.region.coverage(&large).map_err(|e| e.to_string())?;
    Ok((
        outside >= 0.90 && inside >= 0.95,
        format!("small blob outside {outside:.3} (≥ 0.90), large blob inside {inside:.4} (≥ 0.95)"),
    ))
}

fn boundary_direction(report: &oneflow::bench::BenchReport) -> Check {
    let rows: Vec<String> = SynthName::ALL
        .iter()
        .map(|&d| {
            let len = |m| report.rows.iter().find(|r| r.dataset == d && r.method == m).map_or(f64::NAN, |r| r.length);
            format!("{d} {:.3} vs {:.3}", len(Method::ConstDet), len(Method::LlFlow))
        })
        .collect();
    Ok((
        report.shorter_count >= 4,
        format!("volume objective shorter on {}/5 (≥ 4): {}", report.shorter_count, rows.join(", ")),
    ))
}

fn tabular_f1(path: &str) -> Check {
    let start = Instant::now();
    let data = load_csv(path, Some(&LabelColumn::Last)).map_err(|e| e.to_string())?;
    let mut f1s = Vec::new();
    for seed in 0..3 {
        let (train_set, test_set) = data.split_nominal(0.5, seed).map_err(|e| e.to_string())?;
        let cfg = TrainConfig { seed, ..TrainConfig::default() };
        let (region, _) = train(&train_set, &cfg).map_err(|e| e.to_string())?;
        let labels = test_set.labels.as_deref().unwrap();
        let m = evaluate(&region, &test_set.features, labels, KRule::TrueCount).map_err(|e| e.to_string())?;
        f1s.push(m.f1);
    }
    let mean = f1s.iter().sum::<f64>() / 3.0;
    let t = start.elapsed();
    Ok((
        mean >= 0.68 && t < Duration::from_secs(900),
        format!("F1 per seed {f1s:.4?}, mean {mean:.4} (≥ 0.68), {:.0}s (< 900s)", t.as_secs_f64()),
    ))
}

fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1 && lj == 0 {
                pairs += 1.0;
                num += if scores[i] > scores[j] {
                    1.0
                } else if scores[i] == scores[j] {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    num / pairs
}

fn metrics() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    let mut pr_equal = true;
    let mut cases = 0;
    while cases < 500 {
        let n = rng.gen_range(2..=200);
        let coarse = rng.gen_bool(0.5);
        let scores: Vec<f64> = (0..n)
            .map(|_| if coarse { f64::from(rng.gen_range(0..5)) } else { rng.gen::<f64>() })
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.gen_bool(0.3))).collect();
        if !labels.contains(&0) || !labels.contains(&1) {
            continue;
        }
        cases += 1;
        worst = worst.max((auc(&scores, &labels).map_err(|e| e.to_string())? - brute_auc(&scores, &labels)).abs());
        let k = labels.iter().filter(|&&l| l == 1).count();
        let m = prf1_at_count(&scores, &labels, k).map_err(|e| e.to_string())?;
        pr_equal &= m.precision == m.recall;
    }
    Ok((
        worst < 1e-12 && pr_equal,
        format!("{cases} instances: max |AUC − pair count| = {worst:.1e} (< 1e-12), precision == recall at k = true count: {pr_equal}"),
    ))
}

fn volumes() -> Check {
    let refs = [(1, 2f64.ln()), (2, PI.ln()), (3, (4.0 * PI / 3.0).ln())];
    let mut worst: f64 = 0.0;
    for (d, expected) in refs {
        worst = worst.max((log_unit_ball_volume(d).map_err(|e| e.to_string())? - expected).abs());
    }
    let bbox = BBox::centered(2.0).map_err(|e| e.to_string())?;
    let n = 1_000_000;
    let mut parts = Vec::new();
    let mut ok = worst < 1e-12;
    for (r, seed) in [(1.0, 1), (1.5, 2)] {
        let region = BoundingRegion::identity(2, r, 0.05).map_err(|e| e.to_string())?;
        let area = region_area_mc(&region, &bbox, n, seed).map_err(|e| e.to_string())?;
        let p = PI * r * r / bbox.area();
        let sigma = bbox.area() * (p * (1.0 - p) / n as f64).sqrt();
        ok &= (area - PI * r * r).abs() < 3.0 * sigma;
        parts.push(format!("r={r}: {area:.4} vs {:.4} (3σ = {:.4})", PI * r * r, 3.0 * sigma));
    }
    Ok((ok, format!("max ball-volume error {worst:.1e} (< 1e-12); {}", parts.join(", "))))
}

fn main() {
    // Respect name filters from `cargo test <filter>`.
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if std::env::args().any(|a| a == "--list")
        || (!filters.is_empty() && !filters.iter().any(|f| "acceptance criterion".contains(f.as_str())))
    {
        return;
    }
    let start = Instant::now();
    let mut report = Report { lines: Vec::new() };
    report.record(1, "invertibility", invertibility());
    report.record(2, "determinant correctness", determinants());
    report.record(3, "Bernstein estimator", bernstein());
    report.record(4, "gradient sparsity", gradient_sparsity());

    let bench = run_bench2d(&BenchConfig::default(), None);
    let (bench_report, runs) = match bench {
        Ok(b) => b,
        Err(e) => {
            for (id, name) in [(5, "scale invariance"), (6, "coverage calibration"), (7, "small blob rejection"), (8, "boundary length")] {
                report.record(id, name, Err(format!("2D benchmark failed: {e}")));
            }
            finish(report, start);
            return;
        }
    };
    let moons = runs
        .iter()
        .find(|r| r.dataset == SynthName::TwoMoons && r.method == Method::ConstDet)
        .expect("two-moons run");
    report.record(5, "scale invariance / no collapse", scale_invariance(moons));
    report.record(6, "coverage calibration", coverage_calibration(&runs));
    report.record(7, "small blob rejection", small_blob_rejection(&runs));
    report.record(8, "boundary length vs likelihood baseline", boundary_direction(&bench_report));
    match std::env::var("ONEFLOW_THYROID_CSV") {
        Ok(path) => report.record(9, "tabular F1", tabular_f1(&path)),
        Err(_) => report.waive(9, "tabular F1", "ONEFLOW_THYROID_CSV not set; dataset unavailable".into()),
    }
    report.record(10, "metric correctness", metrics());
    report.record(11, "volume formulas", volumes());
    finish(report, start);
}

fn finish(report: Report, start: Instant) {
    let failed: Vec<String> = report
        .lines
        .iter()
        .filter(|l| l.2 == Some(false))
        .map(|l| format!("{} ({})", l.0, l.1))
        .collect();
    let passed = report.lines.iter().filter(|l| l.2 == Some(true)).count();
    let waived = report.lines.iter().filter(|l| l.2.is_none()).count();
    println!(
        "acceptance: {passed} passed, {} failed, {waived} waived in {:.0}s",
        failed.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
