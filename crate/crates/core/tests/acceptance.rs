//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use dnaplan::diagnostics::{archetypes, classify, stepwise_gain, StabilityLabel, Thresholds};
use dnaplan::dna::{resample, stride_indices, DnaProfile, TimeGrid};
use dnaplan::flow_sim::{ErrorTable, SimScenario};
use dnaplan::oracle::enumerate_best;
use dnaplan::planner::{
    build_graph, path_cost, plan_adaptive, plan_fixed, plan_unconstrained, restrict_nodes, uniform_schedule,
};
use dnaplan::predictor::{benchmark, train, LayerWidths, RegressorParams, SyntheticTask, TrainConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_s: f64) -> bool {
    elapsed.as_secs_f64() < limit_s
}

fn random_profile(rng: &mut ChaCha8Rng, n: usize) -> DnaProfile {
    let mut interior: Vec<f64> = (0..n - 2).map(|_| rng.random_range(0.001..0.999)).collect();
    interior.sort_by(f64::total_cmp);
    interior.dedup();
    let mut grid = vec![0.0];
    grid.extend(interior);
    grid.push(1.0);
    if grid.len() < n {
        grid = TimeGrid::uniform(n).unwrap().into_points();
    }
    let zero_floor = rng.random_bool(0.5);
    let values = grid
        .iter()
        .enumerate()
        .map(|(i, _)| if i == 0 && zero_floor { 0.0 } else { rng.random_range(0.0..10.0) })
        .collect();
    DnaProfile::new(TimeGrid::new(grid).unwrap(), values).unwrap()
}

fn decaying_profile(rng: &mut ChaCha8Rng, grid: &TimeGrid) -> DnaProfile {
    let amp = rng.random_range(0.1..10.0);
    let rate = rng.random_range(0.5..12.0);
    let floor = if rng.random_bool(0.5) { 0.0 } else { rng.random_range(0.0..0.05) };
    let ripple = rng.random_range(0.0..0.02);
    let phase = rng.random_range(0.0..6.0);
    DnaProfile::from_fn(grid.clone(), |t| {
        amp * ((rate * t).exp_m1() / rate.exp_m1() * (1.0 + ripple * (25.0 * t + phase).sin()) + floor)
    })
    .unwrap()
}

fn oracle_equivalence() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for case in 0..200 {
        let dna = random_profile(&mut rng, 13);
        for (ps, pe) in [(true, true), (false, false), (true, false), (false, true)] {
            let graph = build_graph(&dna, ps, pe).unwrap();
            for k in (1..=6).map(Some).chain([None]) {
                let planned = match k {
                    Some(k) => plan_fixed(&graph, k),
                    None => plan_unconstrained(&graph),
                };
                let oracle = enumerate_best(&dna, k, ps, pe);
                let (planned, oracle) = match (planned, oracle) {
                    (Ok(p), Ok(o)) => (p, o),
                    (Err(_), Err(_)) => continue,
                    (p, o) => {
                        return verdict(false, format!("case {case} k {k:?}: planner {p:?}, oracle {o:?}"));
                    }
                };
                worst = worst.max((planned.total_cost - oracle.best_cost).abs());
                if (planned.total_cost - oracle.best_cost).abs() > 1e-9 || planned.timesteps != oracle.best_sequence {
                    return verdict(
                        false,
                        format!(
                            "case {case} k {k:?} pins ({ps},{pe}): {:?} ({}) vs {:?} ({})",
                            planned.timesteps, planned.total_cost, oracle.best_sequence, oracle.best_cost
                        ),
                    );
                }
                checked += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    verdict(
        within(elapsed, 10.0),
        format!("{checked} plans match, max |cost diff| {worst:.1e}, {:.2?}", elapsed),
    )
}

fn lever_identity() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut worst: f64 = 0.0;
    for draw in 0..1000u64 {
        let nodes = rng.random_range(2..20);
        let grid = TimeGrid::uniform(nodes).unwrap();
        let scale = 10f64.powf(rng.random_range(-2.0..1.0));
        let values = (0..nodes).map(|_| scale * rng.random::<f64>()).collect();
        let table = ErrorTable::new(grid.into_points(), values).unwrap();
        let dim = rng.random_range(1..17);
        let scenario = SimScenario::random(dim, table, draw).unwrap();
        let t: f64 = 1.0 - rng.random::<f64>();
        let k = t * rng.random::<f64>();
        worst = worst.max(scenario.verify_lever_identity(t, k).unwrap());
    }
    let elapsed = started.elapsed();
    verdict(worst <= 1e-10 && within(elapsed, 1.0), format!("max residual {worst:.1e}, {:.2?}", elapsed))
}

fn dominance_suite() -> Vec<DnaProfile> {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let grid = TimeGrid::uniform(101).unwrap();
    (0..100).map(|_| decaying_profile(&mut rng, &grid)).collect()
}

fn feasible_dominance() -> Verdict {
    let suite = dominance_suite();
    let started = Instant::now();
    let mut strict = 0;
    for (i, dna) in suite.iter().enumerate() {
        let graph = build_graph(dna, true, true).unwrap();
        let planned = plan_fixed(&graph, 10).unwrap();
        let uniform = path_cost(&graph, &uniform_schedule(&graph, 10).unwrap()).unwrap();
        let eps = 1e-12 * dna.max_value();
        if planned.total_cost > uniform + eps {
            return verdict(false, format!("profile {i}: planned {} > uniform {uniform}", planned.total_cost));
        }
        if planned.total_cost < uniform - eps {
            strict += 1;
        }
    }
    let elapsed = started.elapsed();
    verdict(strict >= 90 && within(elapsed, 2.0), format!("planned <= uniform on 100/100, strictly on {strict}, {:.2?}", elapsed))
}

/// Best pinned `n`-step cost for `n = 1..=k_max`, by a plain layered scan.
fn independent_w(dna: &DnaProfile, k_max: usize) -> Vec<f64> {
    let t = dna.times();
    let c = dna.values();
    let top = t.len() - 1;
    let mut reach = vec![f64::INFINITY; t.len()];
    reach[top] = 0.0;
    let mut w = Vec::with_capacity(k_max);
    for _ in 0..k_max {
        let mut next = vec![f64::INFINITY; t.len()];
        for (j, slot) in next.iter_mut().enumerate() {
            for i in j + 1..t.len() {
                if reach[i].is_finite() {
                    let frac = (t[i] - t[j]) / t[i];
                    *slot = slot.min(reach[i] + frac * frac * c[i]);
                }
            }
        }
        reach = next;
        w.push(reach[0] + c[0] - c[top]);
    }
    w
}

fn adaptive_endpoints() -> Verdict {
    let k_max = 50;
    let threshold = 0.99;
    let mut profiles = 0;
    for (i, dna) in dominance_suite().iter().enumerate() {
        let w = independent_w(dna, k_max);
        let (w_max, w_min) = (w[0], w[k_max - 1]);
        if w_max == w_min {
            continue;
        }
        profiles += 1;
        let rho: Vec<f64> = w.iter().map(|wn| (w_max - wn) / (w_max - w_min)).collect();
        if rho[0].abs() > 1e-9 || (rho[k_max - 1] - 1.0).abs() > 1e-9 {
            return verdict(false, format!("profile {i}: rho(1) = {}, rho(k_max) = {}", rho[0], rho[k_max - 1]));
        }
        let graph = build_graph(dna, true, true).unwrap();
        let result = plan_adaptive(&graph, threshold, k_max).unwrap();
        if (result.w_max - w_max).abs() > 1e-9 || (result.w_min - w_min).abs() > 1e-9 {
            return verdict(false, format!("profile {i}: W endpoints disagree with the scan"));
        }
        for &(n, r) in &result.rho_curve {
            if (r - rho[n - 1]).abs() > 1e-9 {
                return verdict(false, format!("profile {i}: rho({n}) = {r}, scan gives {}", rho[n - 1]));
            }
        }
        let expected = 1 + rho.iter().position(|&r| r >= threshold).unwrap();
        let ambiguous = (rho[expected - 1] - threshold).abs() < 1e-9
            || (expected > 1 && (rho[expected - 2] - threshold).abs() < 1e-9);
        if result.schedule.steps != expected && !ambiguous {
            return verdict(false, format!("profile {i}: stopped at {}, scan says {expected}", result.schedule.steps));
        }
        let full = plan_adaptive(&graph, 1.0, k_max).unwrap();
        let (n_last, r_last) = *full.rho_curve.last().unwrap();
        if full.rho_curve[0] != (1, 0.0) || (r_last - 1.0).abs() > 1e-9 || (n_last < k_max && (rho[n_last - 1] - 1.0).abs() > 1e-9)
        {
            return verdict(false, format!("profile {i}: full curve ends at ({n_last}, {r_last})"));
        }
    }
    verdict(true, format!("{profiles} profiles, k_max {k_max}, stop at the minimal crossing of {threshold}"))
}

/// Mean step count needed for each threshold over the family `C(t) = e^{rate t} - 1`.
fn mean_steps(rates: &[f64], k_max: usize, thresholds: &[f64]) -> Result<Vec<f64>, String> {
    let mut sums = vec![0.0; thresholds.len()];
    for &rate in rates {
        let dna = DnaProfile::from_fn(TimeGrid::uniform(100).unwrap(), |t| (rate * t).exp_m1()).unwrap();
        let graph = build_graph(&dna, true, true).unwrap();
        let curve = plan_adaptive(&graph, 1.0, k_max).unwrap().rho_curve;
        let mut prev = 0;
        for (slot, &th) in sums.iter_mut().zip(thresholds) {
            let n = curve.iter().find(|(_, r)| *r >= th).map_or(k_max, |(n, _)| *n);
            if n < prev {
                return Err(format!("rate {rate}: steps drop from {prev} to {n} at rho {th}"));
            }
            prev = n;
            *slot += n as f64;
        }
    }
    Ok(sums.iter().map(|s| s / rates.len() as f64).collect())
}

fn rho_curve_shape() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let rates: Vec<f64> = (0..24).map(|_| rng.random_range(6.0..14.0)).collect();
    let thresholds: Vec<f64> = (0..=40).map(|i| 0.8 + 0.005 * i as f64).collect();
    let means = match mean_steps(&rates, 50, &thresholds) {
        Ok(m) => m,
        Err(e) => return verdict(false, e),
    };
    let at = |th: f64| means[thresholds.iter().position(|&x| (x - th).abs() < 1e-12).unwrap()];
    let below = at(0.99) - at(0.985);
    let above = at(0.995) - at(0.99);
    let ratio = above / below;
    verdict(
        ratio > 2.0,
        format!(
            "mean steps {:.2} / {:.2} / {:.2} at rho 0.985 / 0.99 / 0.995, marginal ratio {ratio:.2}",
            at(0.985),
            at(0.99),
            at(0.995)
        ),
    )
}

fn gradient_check() -> Verdict {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let mut params = RegressorParams::init(LayerWidths::DESK, 5);
    for layer in &mut params.layers {
        layer.bias.iter_mut().for_each(|b| *b = 0.1 * rng.sample::<f64, _>(StandardNormal));
    }
    let e: Vec<f64> = (0..16).map(|_| rng.sample(StandardNormal)).collect();
    let target: Vec<f64> = (0..100).map(|i| (3.0 * i as f64 / 99.0).exp_m1() + 0.1).collect();
    let (_, grads) = params.backward(&e, &target).unwrap();
    let loss = |p: &RegressorParams| dnaplan::predictor::cosine_loss(&p.forward(&e).unwrap(), &target).unwrap();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for l in 0..3 {
        let n_w = params.layers[l].weights.len();
        let n_b = params.layers[l].bias.len();
        for _ in 0..100 {
            let idx = rng.random_range(0..n_w + n_b);
            let mut probe = params.clone();
            let (slot, analytic): (&mut f64, f64) = if idx < n_w {
                (&mut probe.layers[l].weights[idx], grads.layers[l].weights[idx])
            } else {
                (&mut probe.layers[l].bias[idx - n_w], grads.layers[l].bias[idx - n_w])
            };
            let base = *slot;
            *slot = base + eps;
            let plus = loss(&probe);
            let slot = if idx < n_w { &mut probe.layers[l].weights[idx] } else { &mut probe.layers[l].bias[idx - n_w] };
            *slot = base - eps;
            let minus = loss(&probe);
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(1.0));
        }
    }
    let elapsed = started.elapsed();
    verdict(worst <= 1e-4 && within(elapsed, 5.0), format!("300 parameters, max relative error {worst:.1e}, {:.2?}", elapsed))
}

fn synthetic_fit() -> Verdict {
    let started = Instant::now();
    let data = SyntheticTask::standard(0).generate(2000, 1).unwrap();
    let out = train(&data, &TrainConfig::default()).unwrap();
    let elapsed = started.elapsed();
    let mean = out.holdout_mean_cosine.unwrap();
    verdict(
        mean >= 0.95 && within(elapsed, 60.0),
        format!(
            "held-out mean cosine {mean:.4}, median {:.4}, {} pairs, {:.1?}",
            out.holdout_median_cosine.unwrap(),
            out.holdout_size,
            elapsed
        ),
    )
}

fn efficiency() -> Verdict {
    let large = LayerWidths::LARGE;
    let count = large.param_count() as f64;
    let rel = (count - 0.96e6).abs() / 0.96e6;
    let desk = benchmark(&RegressorParams::init(LayerWidths::DESK, 0), 5000);
    verdict(
        rel <= 0.01 && desk.mean_latency_ms < 1.0,
        format!(
            "{} params ({:.2}% off 0.96M), {} FLOPs, desk latency {:.4} ms",
            large.param_count(),
            100.0 * rel,
            large.flops(),
            desk.mean_latency_ms
        ),
    )
}

fn resample_restrict_equivalence() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let grid = TimeGrid::uniform(100).unwrap();
    for i in 0..50 {
        let dna = if i % 2 == 0 {
            decaying_profile(&mut rng, &grid)
        } else {
            DnaProfile::new(grid.clone(), (0..100).map(|_| rng.random_range(0.0..5.0)).collect()).unwrap()
        };
        let coarse = build_graph(&resample(&dna, 2).unwrap(), true, true).unwrap();
        let keep: BTreeSet<usize> = stride_indices(dna.len(), 2).into_iter().collect();
        let restricted = restrict_nodes(&build_graph(&dna, true, true).unwrap(), &keep).unwrap();
        let pairs = [
            (plan_fixed(&coarse, 10), plan_fixed(&restricted, 10)),
            (plan_unconstrained(&coarse), plan_unconstrained(&restricted)),
            (
                plan_adaptive(&coarse, 0.99, 30).map(|r| r.schedule),
                plan_adaptive(&restricted, 0.99, 30).map(|r| r.schedule),
            ),
        ];
        for (a, b) in pairs {
            let (a, b) = (a.unwrap(), b.unwrap());
            if a.timesteps != b.timesteps || a.total_cost != b.total_cost {
                return verdict(false, format!("profile {i}: {:?} vs {:?}", a.timesteps, b.timesteps));
            }
        }
    }
    verdict(true, "50 profiles, fixed/unconstrained/adaptive sequences identical")
}

fn diagnostics_archetypes() -> Verdict {
    let cfg = Thresholds::default();
    let label = |d: DnaProfile| classify(&stepwise_gain(&d).unwrap(), &cfg).label;
    let got = [
        label(archetypes::monotone_decay(100).unwrap()),
        label(archetypes::initial_dip(100).unwrap()),
        label(archetypes::flat_gain(100).unwrap()),
    ];
    let want = [StabilityLabel::MonotoneStable, StabilityLabel::InitialRegressive, StabilityLabel::NonConvergent];
    verdict(got == want, format!("{got:?}"))
}

fn snapshot(paths: &[PathBuf]) -> Vec<Vec<u8>> {
    paths.iter().map(|p| std::fs::read(p).unwrap()).collect()
}

fn cli_determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let embedding = p("embedding.json");
    std::fs::write(&embedding, format!("[{}]", vec!["0.25"; 16].join(","))).unwrap();
    let runs: Vec<Vec<String>> = [
        vec!["sim-extract", "--seed", "4", "--save-scenario", &p("scenario.json"), "-o", &p("dna.json")],
        vec!["sim-extract", "--seed", "5", "--points", "13", "-o", &p("small.json")],
        vec!["plan", "--dna", &p("dna.json"), "--steps", "10", "-o", &p("fixed.json")],
        vec!["plan", "--dna", &p("dna.json"), "--adaptive", "--rho", "0.99", "--max-steps", "50", "-o", &p("adaptive.json")],
        vec!["plan", "--dna", &p("dna.json"), "--restrict", "stride:2", "--no-pin-end", "-o", &p("free.json")],
        vec!["oracle", "--dna", &p("small.json"), "--steps", "4", "-o", &p("oracle.json")],
        vec!["diagnose", "--dna", &p("dna.json"), "-o", &p("report.json")],
        vec!["rollout", "--scenario", &p("scenario.json"), "--schedule", &p("fixed.json"), "-o", &p("rollout.csv")],
        vec![
            "train-predictor", "--synthetic", "120", "--epochs", "2", "--hidden", "16,16", "--seed", "3", "-o",
            &p("params.json"),
        ],
        vec!["predict", "--params", &p("params.json"), "--embedding", &embedding, "-o", &p("predicted.json")],
    ]
    .iter()
    .map(|r| r.iter().map(|s| s.to_string()).collect())
    .collect();

    for args in &runs {
        let code = dnaplan::cli::run(std::iter::once("dnaplan".to_string()).chain(args.iter().cloned()));
        if code != 0 {
            return verdict(false, format!("{} exited {code}", args[0]));
        }
        let out = PathBuf::from(&args[args.iter().position(|a| a == "-o").unwrap() + 1]);
        let manifest_path = dnaplan::cli::manifest_path(&out);
        let manifest = dnaplan::cli::RunManifest::load(&manifest_path).unwrap();
        let mut files = manifest.outputs.clone();
        files.push(manifest_path.clone());
        let before = snapshot(&files);
        let kept = dir.path().join("replay.manifest.json");
        std::fs::copy(&manifest_path, &kept).unwrap();
        files.iter().for_each(|f| std::fs::remove_file(f).unwrap());
        let replay = ["dnaplan", "replay", kept.to_str().unwrap()];
        if dnaplan::cli::run(replay) != 0 {
            return verdict(false, format!("replay of {} failed", args[0]));
        }
        if snapshot(&files) != before {
            return verdict(false, format!("replay of {} changed {:?}", args[0], files));
        }
    }
    verdict(true, format!("{} runs over 7 subcommands replayed byte-identically", runs.len()))
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 11] = [
        ("oracle equivalence", oracle_equivalence),
        ("lever identity", lever_identity),
        ("feasible dominance", feasible_dominance),
        ("adaptive endpoints", adaptive_endpoints),
        ("rho-curve shape", rho_curve_shape),
        ("predictor gradient check", gradient_check),
        ("predictor synthetic fit", synthetic_fit),
        ("predictor efficiency", efficiency),
        ("resample/restrict equivalence", resample_restrict_equivalence),
        ("diagnostics archetypes", diagnostics_archetypes),
        ("cli determinism", cli_determinism),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (name, check) in criteria {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let v = check();
        println!("{} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
