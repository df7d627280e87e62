//! Acceptance run: one PASS/FAIL line per criterion. Pass criterion numbers
//! as arguments to run a subset.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_complex::Complex64 as C;
use pe_align::baselines::channel::seeded;
use pe_align::baselines::*;
use pe_align::gnn::*;
use pe_align::rie::{verify_rie_equivalence, EquivalenceConfig};
use pe_align::tensor::grad_check;
use pe_align::{Result, Tape, Tensor, Var};
use pe_align_cli::suite;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(t: Duration, limit_s: u64) -> bool {
    t.as_secs_f64() < limit_s as f64
}

// ---- 1. re-expression equivalence ----

fn rie_equivalence() -> Outcome {
    let t = Instant::now();
    let cfg = EquivalenceConfig::default();
    let mut worst = Vec::new();
    let mut pass = true;
    for v in [Variant::Pb, Variant::Ps, Variant::Pm, Variant::Pc] {
        match verify_rie_equivalence(v, 100, 20, 1e-9, &cfg) {
            Ok(r) => {
                pass &= r.pass && r.trials.len() == 100;
                worst.push(format!("{} {:.1e}", v.tag(), r.worst_error));
            }
            Err(e) => {
                pass = false;
                worst.push(format!("{} error: {e}", v.tag()));
            }
        }
    }
    let el = t.elapsed();
    outcome(pass && within(el, 120), format!("worst {}; {:.1}s (limit 120s)", worst.join(", "), el.as_secs_f64()))
}

// ---- 2. equivariance suite ----

fn equivariance_suite() -> Outcome {
    let t = Instant::now();
    let mut bad = Vec::new();
    let mut worst: f64 = 0.0;
    for name in suite::POSITIVE_TARGETS.iter().chain(suite::NEGATIVE_TARGETS) {
        match suite::run_target(name, 50, 1e-9, 2024) {
            Ok(r) => {
                if r.pass != suite::expected_pass(name) || r.trials < 50 {
                    bad.push(format!("{name} (error {:.1e})", r.max_abs_error));
                }
                if suite::expected_pass(name) {
                    worst = worst.max(r.max_abs_error);
                }
            }
            Err(e) => bad.push(format!("{name}: {e}")),
        }
    }
    let el = t.elapsed();
    outcome(
        bad.is_empty() && within(el, 60),
        format!(
            "{} positive targets pass (worst {worst:.1e}), negatives sort and wrong_pairing fail; unexpected: [{}]; {:.1}s (limit 60s)",
            suite::POSITIVE_TARGETS.len(),
            bad.join(", "),
            el.as_secs_f64()
        ),
    )
}

// ---- 3. gradients ----

type Prim = for<'t> fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>;

fn weighted<'t>(tape: &'t Tape, y: Var<'t>, seed: u64) -> Result<Var<'t>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = tape.constant(Tensor::uniform(&y.shape(), -1.0, 1.0, &mut rng));
    y.mul(w)?.sum()
}

fn primitives() -> Vec<(&'static str, Vec<Vec<usize>>, bool, Prim)> {
    vec![
        ("add", vec![vec![2, 3], vec![2, 3]], false, |t, p| weighted(t, p[0].add(p[1])?, 1)),
        ("sub", vec![vec![2, 3], vec![2, 3]], false, |t, p| weighted(t, p[0].sub(p[1])?, 2)),
        ("mul", vec![vec![2, 3], vec![2, 3]], false, |t, p| weighted(t, p[0].mul(p[1])?, 3)),
        ("matmul", vec![vec![2, 3], vec![3, 4]], false, |t, p| weighted(t, p[0].matmul(p[1])?, 4)),
        ("bmm", vec![vec![2, 2, 3], vec![2, 3, 2]], false, |t, p| weighted(t, p[0].bmm(p[1])?, 5)),
        ("sum_axis", vec![vec![3, 4]], false, |t, p| weighted(t, p[0].sum_axis(1)?, 6)),
        ("concat", vec![vec![2, 3], vec![2, 1]], false, |t, p| weighted(t, Var::concat(&[p[0], p[1]], 1)?, 7)),
        ("relu", vec![vec![3, 3]], false, |t, p| weighted(t, p[0].relu(), 8)),
        ("exp", vec![vec![3]], false, |t, p| weighted(t, p[0].exp()?, 9)),
        ("log", vec![vec![3]], true, |t, p| weighted(t, p[0].log()?, 10)),
        ("reciprocal", vec![vec![3]], true, |t, p| weighted(t, p[0].reciprocal()?, 11)),
        ("clip", vec![vec![4]], false, |t, p| weighted(t, p[0].clip(-0.5, 0.5), 12)),
        ("softmax_axis", vec![vec![2, 4]], false, |t, p| weighted(t, p[0].softmax_axis(1)?, 13)),
        ("norm_axis", vec![vec![3, 2]], false, |t, p| weighted(t, p[0].norm_axis(0)?, 14)),
        ("div", vec![vec![3], vec![3]], true, |t, p| weighted(t, p[0].div(p[1])?, 15)),
        ("permute_axes", vec![vec![2, 3, 2]], false, |t, p| weighted(t, p[0].permute_axes(&[2, 0, 1])?, 16)),
        ("expand_axis", vec![vec![2, 1]], false, |t, p| weighted(t, p[0].expand_axis(1, 3)?, 17)),
        ("slice_axis", vec![vec![4, 2]], false, |t, p| weighted(t, p[0].slice_axis(0, 1, 2)?, 18)),
        ("add_bias", vec![vec![3, 2], vec![2]], false, |t, p| weighted(t, p[0].add_bias(p[1])?, 19)),
        ("transpose", vec![vec![2, 3, 4]], false, |t, p| weighted(t, p[0].transpose_last2()?, 20)),
    ]
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let mut worst_prim: f64 = 0.0;
    let mut bad = Vec::new();
    for seed in 0..10u64 {
        for (name, shapes, positive, f) in primitives() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let params: Vec<Tensor> = shapes
                .iter()
                .map(|s| {
                    let x = Tensor::uniform(s, -1.0, 1.0, &mut rng);
                    if positive { x.map(|v| v + 1.5) } else { x }
                })
                .collect();
            let r = grad_check(f, &params, 1e-6, 1e-5);
            worst_prim = worst_prim.max(r.max_rel_error);
            if !r.pass {
                bad.push(format!("{name}@{seed}"));
            }
        }
    }
    let cfg = GnnConfig { hidden: 8, layers: 1, attention_dim: 4, ..Default::default() };
    let (model_ok, model_err) = match build_gnn_from_problem(&ps_descriptors(), 2, 2, &cfg, 8) {
        Ok(m) => {
            let data = ps_dataset(2, &UserCount::Fixed { users: 2 }, 3, 1.0, 0.1, &ChannelModel::Rayleigh, &mut seeded(5))
                .expect("valid dataset");
            let batch: Vec<&PsInstance> = data.iter().collect();
            let params: Vec<Tensor> = m.params().iter().map(|(_, t)| t.clone()).collect();
            let r = grad_check(|_, v| ps_batch_loss(&m, v, &batch), &params, 1e-6, 1e-4);
            let has_attention = !m.plan().attention_recursions().is_empty();
            (r.pass && has_attention && r.checked == m.scalar_count(), r.max_rel_error)
        }
        Err(e) => {
            bad.push(format!("model: {e}"));
            (false, f64::NAN)
        }
    };
    let el = t.elapsed();
    outcome(
        bad.is_empty() && model_ok && within(el, 60),
        format!(
            "20 primitives x 10 seeds worst rel {worst_prim:.1e} (tol 1e-5); 1-layer PS GNN with attention rel {model_err:.1e} (tol 1e-4); failures [{}]; {:.1}s",
            bad.join(", "),
            el.as_secs_f64()
        ),
    )
}

// ---- 4. baselines ----

fn min_bandwidth(p: f64, g: f64, n0: f64, s0: f64) -> f64 {
    let rate = |b: f64| b * (1.0 + p * g / (n0 * b)).log2();
    let (mut lo, mut hi) = (1e-12, 1.0);
    while rate(hi) < s0 {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) >= s0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Least total bandwidth over a grid of power splits.
fn pb_grid(inst: &PbInstance, res: usize) -> f64 {
    let k = inst.g.len();
    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; k];
    loop {
        if idx.iter().sum::<usize>() <= res {
            let total: f64 = idx
                .iter()
                .zip(&inst.g)
                .map(|(&i, &g)| min_bandwidth(inst.p_max * i as f64 / res as f64, g, inst.n0, inst.s0))
                .sum();
            best = best.min(total);
        }
        let mut d = 0;
        loop {
            if d == k {
                return best;
            }
            idx[d] += 1;
            if idx[d] <= res {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn ps_instance(seed: u64, nb: usize, k: usize) -> PsInstance {
    let c = Constants { sigma2: 0.1, ..Constants::default() };
    let s = Sizes { users: k, bs_antennas: nb, ..Sizes::default() };
    match generate_channels(Variant::Ps, s, &ChannelModel::Rayleigh, c, seed).expect("valid sizes") {
        ProblemInstance::Ps(p) => p,
        _ => unreachable!(),
    }
}

fn unit2(theta: f64, phi: f64) -> [C; 2] {
    [C::new(theta.cos(), 0.0), C::from_polar(theta.sin(), phi)]
}

fn ps2_se(inst: &PsInstance, x: &[f64; 5]) -> f64 {
    let [a, t1, f1, t2, f2] = *x;
    let a = a.clamp(0.0, 1.0);
    let (v1, v2) = (unit2(t1, f1), unit2(t2, f2));
    let (s1, s2) = ((inst.p_max * a).sqrt(), (inst.p_max * (1.0 - a)).sqrt());
    inst.sum_se(&CMat::from_row_slice(2, 2, &[v1[0] * s1, v2[0] * s2, v1[1] * s1, v2[1] * s2]))
}

/// Best full-power two-user precoder on a grid, refined by pattern search.
fn ps2_grid(inst: &PsInstance) -> f64 {
    let pi = std::f64::consts::PI;
    let mut best = (f64::NEG_INFINITY, [0.0; 5]);
    for a in (0..=5).map(|i| i as f64 / 5.0) {
        for t1 in (0..8).map(|i| i as f64 * pi / 16.0 + pi / 32.0) {
            for f1 in (0..24).map(|i| i as f64 * pi / 12.0) {
                for t2 in (0..8).map(|i| i as f64 * pi / 16.0 + pi / 32.0) {
                    for f2 in (0..24).map(|i| i as f64 * pi / 12.0) {
                        let x = [a, t1, f1, t2, f2];
                        let v = ps2_se(inst, &x);
                        if v > best.0 {
                            best = (v, x);
                        }
                    }
                }
            }
        }
    }
    let mut step = 0.1;
    while step >= 0.05 / 64.0 {
        let mut improved = true;
        while improved {
            improved = false;
            for d in 0..5 {
                for sgn in [-1.0, 1.0] {
                    let mut x = best.1;
                    x[d] += sgn * step;
                    let v = ps2_se(inst, &x);
                    if v > best.0 {
                        best = (v, x);
                        improved = true;
                    }
                }
            }
        }
        step /= 2.0;
    }
    best.0
}

fn baselines() -> Outcome {
    let t = Instant::now();
    let gd = GdConfig::default();
    let canon = PbInstance { g: vec![1.0], n0: 1.0, s0: 1.0, p_max: 1.0 };
    let (a1, canon_detail) = match gd_pb_solve(&canon, &gd) {
        Ok(s) => (
            (s.state.p[0] - 1.0).abs() <= 1e-2 && (s.state.b[0] - 1.0).abs() <= 1e-2,
            format!("K=1 p={:.4} B={:.4}", s.state.p[0], s.state.b[0]),
        ),
        Err(e) => (false, format!("K=1 error {e}")),
    };
    let mut rng = seeded(4);
    let mut worst_gap: f64 = 0.0;
    let mut a2 = true;
    for i in 0..20 {
        let k = 1 + i % 3;
        let inst = PbInstance {
            g: (0..k).map(|_| rng.random_range(0.5..2.0)).collect(),
            n0: 1.0,
            s0: 1.0,
            p_max: 3.0,
        };
        let oracle = pb_grid(&inst, if k == 3 { 60 } else { 200 });
        match gd_pb_solve(&inst, &gd) {
            Ok(s) => {
                let gap = (inst.total_bandwidth(&s.state.b) - oracle).abs() / oracle;
                worst_gap = worst_gap.max(gap);
                a2 &= gap <= 0.01;
            }
            Err(_) => a2 = false,
        }
    }
    let mut worst_drop: f64 = 0.0;
    for i in 0..100u64 {
        let inst = ps_instance(1000 + i, 1 + (i as usize % 4), 1 + (i as usize / 4) % 3);
        let sol = wmmse_ps_solve(&inst, 60, 0.0);
        for w in sol.trace.windows(2) {
            worst_drop = worst_drop.min(w[1] - w[0]);
        }
    }
    let b1 = worst_drop >= -1e-8;
    let ratios: Vec<f64> = (0..10u64)
        .map(|s| {
            let inst = ps_instance(2000 + s, 2, 2);
            *wmmse_ps_solve(&inst, 2000, 1e-12).trace.last().expect("nonempty trace") / ps2_grid(&inst)
        })
        .collect();
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let b2 = mean_ratio >= 0.95;
    let pc = PcInstance {
        gain: pe_align::baselines::CMat::from_element(1, 1, C::new(0.0, 0.0)).map(|_| 0.8),
        beams: None,
        p_max: 1.0,
        sigma2: 0.1,
    };
    let p = wmmse_pc_solve(&pc, 1000, 1e-12).p[0];
    let c = (p - pc.p_max).abs() <= 1e-3;
    let el = t.elapsed();
    outcome(
        a1 && a2 && b1 && b2 && c && within(el, 300),
        format!(
            "(a) {canon_detail}, worst grid gap {:.3}% over 20 instances; (b) worst per-step change {worst_drop:.1e}, mean WMMSE/grid {mean_ratio:.4}; (c) K=1 p={p:.6}; {:.1}s",
            100.0 * worst_gap,
            el.as_secs_f64()
        ),
    )
}

// ---- 5. attention placement ----

fn trained_ratio(
    placement: AttentionPlacement,
    seed: u64,
    users: UserCount,
    sigma2: f64,
    test: &[PsInstance],
    reference: &[f64],
) -> Result<f64> {
    let cfg = GnnConfig { hidden: 32, layers: 3, placement, ..Default::default() };
    let mut m = build_gnn_from_problem(&ps_descriptors(), 2, 2, &cfg, seed)?;
    let mut tc = TrainConfig::new(seed);
    tc.train_samples = 1000;
    tc.epochs = 100;
    tc.sigma2 = sigma2;
    tc.users = users;
    train_unsupervised(&mut m, &tc.dataset()?, &tc)?;
    Ok(eval_se_ratio(&m, test, reference, 0)?.mean)
}

fn attention_placement() -> Outcome {
    let t = Instant::now();
    let sigma2 = 0.01;
    let test = ps_dataset(300, &UserCount::Fixed { users: 3 }, 8, 1.0, sigma2, &ChannelModel::Rayleigh, &mut seeded(999))
        .expect("valid dataset");
    let reference = wmmse_reference(&test);
    let arms = [
        ("user", AttentionPlacement::Procedure),
        ("none", AttentionPlacement::None),
        ("antenna", AttentionPlacement::Sets(vec!["AN".into()])),
    ];
    let mut means = [0.0; 3];
    let mut per_seed = Vec::new();
    for seed in 0..5u64 {
        let mut row = Vec::new();
        for (i, (_, p)) in arms.iter().enumerate() {
            match trained_ratio(p.clone(), seed, UserCount::Fixed { users: 3 }, sigma2, &test, &reference) {
                Ok(r) => {
                    means[i] += r / 5.0;
                    row.push(format!("{r:.3}"));
                }
                Err(e) => return outcome(false, format!("seed {seed} {}: {e}", arms[i].0)),
            }
        }
        per_seed.push(row.join("/"));
    }
    let gap = means[0] - means[1];
    let el = t.elapsed();
    outcome(
        gap >= 0.05 && means[0] > means[2] && within(el, 1800),
        format!(
            "mean SE ratio user {:.4}, none {:.4}, antenna {:.4}; user - none = {:.1} pp (need >= 5); per seed user/none/antenna [{}]; {:.0}s",
            means[0],
            means[1],
            means[2],
            100.0 * gap,
            per_seed.join(" "),
            el.as_secs_f64()
        ),
    )
}

// ---- 6. size generalization ----

fn generalization_at(sigma2: f64) -> Result<(f64, f64, f64)> {
    let mut tc = TrainConfig::new(0);
    tc.users = UserCount::training_mixture();
    let data = tc.dataset()?;
    let small = data.iter().filter(|d| d.users() <= 3).count() as f64 / data.len() as f64;
    let cfg = GnnConfig { hidden: 32, layers: 3, ..Default::default() };
    let mut m = build_gnn_from_problem(&ps_descriptors(), 2, 2, &cfg, 0)?;
    tc.epochs = 100;
    tc.sigma2 = sigma2;
    let data = tc.dataset()?;
    train_unsupervised(&mut m, &data, &tc)?;
    let setup = GeneralizationSetup {
        antennas: 8,
        samples_per_size: 300,
        p_max: 1.0,
        sigma2,
        channel: ChannelModel::Rayleigh,
        seed: 999,
    };
    let rows = eval_size_generalization(&m, &[3, 5], &setup)?;
    Ok((small, rows[0].mean_ratio, rows[1].mean_ratio))
}

fn size_generalization() -> Outcome {
    let t = Instant::now();
    let sigma2 = 1.0;
    let (small, r3, r5) = match generalization_at(sigma2) {
        Ok(v) => v,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let el = t.elapsed();
    let mut detail = format!(
        "sigma2 {sigma2}: {:.1}% of training samples at K<=3; ratio K=3 {r3:.4}, K=5 {r5:.4}, retained {:.1}% (need >= 90%); {:.0}s",
        100.0 * small,
        100.0 * r5 / r3,
        el.as_secs_f64()
    );
    if let Ok((_, a, b)) = generalization_at(0.1) {
        detail.push_str(&format!("; info sigma2 0.1 retains {:.1}%", 100.0 * b / a));
    }
    outcome(small >= 0.88 && r5 >= 0.9 * r3 && within(el, 1800), detail)
}

// ---- 7. complexity ----

fn complexity() -> Outcome {
    let t = Instant::now();
    let one = build_gnn_from_problem(&ps_descriptors(), 2, 2, &GnnConfig::default(), 0).expect("valid model");
    let all = build_gnn_from_problem(
        &ps_descriptors(),
        2,
        2,
        &GnnConfig { placement: AttentionPlacement::All, ..Default::default() },
        0,
    )
    .expect("valid model");
    let ks = [2usize, 4, 8, 16, 32];
    let ns = [4usize, 8, 16, 32, 64];
    let rows_k = flop_sweep(&one, &[4, 8], 0, &ks).expect("sweep");
    let rows_n = flop_sweep(&one, &[4, 8], 1, &ns).expect("sweep");
    let x = |v: &[usize]| v.iter().map(|&s| s as f64).collect::<Vec<_>>();
    let sk = loglog_slope(&x(&ks), &rows_k.iter().map(|r| r.pairwise as f64).collect::<Vec<_>>());
    let sn = loglog_slope(&x(&ns), &rows_n.iter().map(|r| r.count as f64).collect::<Vec<_>>());
    let overhead: Vec<f64> = ns
        .iter()
        .map(|&n| {
            count_flops(&all, &[4, n]).expect("count").pairwise as f64
                / count_flops(&one, &[4, n]).expect("count").pairwise as f64
        })
        .collect();
    let so = loglog_slope(&x(&ns), &overhead);
    let pass = (sk - 2.0).abs() <= 0.1 && (sn - 1.0).abs() <= 0.1;
    let el = t.elapsed();
    outcome(
        pass && within(el, 60),
        format!(
            "attention-stage slope in K {sk:.3} (2 +- 0.1), total slope in N {sn:.3} (1 +- 0.1), info: all/one attention ratio slope in N {so:.3}; {:.1}s",
            el.as_secs_f64()
        ),
    )
}

// ---- 8. reproducibility ----

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map(|it| {
            it.filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "csv"))
                .map(|p| (p.file_name().unwrap_or_default().to_string_lossy().into_owned(), std::fs::read(&p).unwrap_or_default()))
                .collect()
        })
        .unwrap_or_default();
    v.sort();
    v
}

fn reproducibility() -> Outcome {
    let t = Instant::now();
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return outcome(false, format!("tempdir: {e}")),
    };
    let cfg = "seed = 31
[output]
formats = [\"csv\", \"plotdata\"]
[model]
hidden = 8
layers = 2
attention_dim = 4
[solve]
instances = 4
[verify_rie]
trials = 20
[check_equivariance]
trials = 10
[train]
samples = 32
epochs = 2
batch_size = 8
users = \"mixture\"
[eval_generalization]
checkpoint = \"r0_train\"
test_users = [1, 3, 5]
samples_per_size = 8
";
    let path = dir.path().join("repro.toml");
    if let Err(e) = std::fs::write(&path, cfg) {
        return outcome(false, format!("writing config: {e}"));
    }
    let mut differ = Vec::new();
    let mut files = 0;
    for cmd in ["solve", "verify-rie", "check-equivariance", "train", "eval-generalization", "count-flops"] {
        let mut runs = Vec::new();
        for r in 0..2 {
            let out = dir.path().join(format!("r{r}_{}", cmd.replace('-', "_")));
            let status = Command::new(env!("CARGO_BIN_EXE_pe-align"))
                .arg(cmd)
                .arg("--config")
                .arg(&path)
                .arg("--out")
                .arg(&out)
                .output();
            match status {
                Ok(o) if o.status.success() => runs.push(csv_bytes(&out)),
                Ok(o) => return outcome(false, format!("{cmd} exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr))),
                Err(e) => return outcome(false, format!("{cmd}: {e}")),
            }
        }
        files += runs[0].len();
        if runs[0].is_empty() || runs[0] != runs[1] {
            differ.push(cmd);
        }
    }
    outcome(
        differ.is_empty(),
        format!("6 subcommands run twice, {files} CSV files compared; differing [{}]; {:.1}s", differ.join(", "), t.elapsed().as_secs_f64()),
    )
}

fn main() {
    let criteria: [(u32, &str, fn() -> Outcome); 8] = [
        (1, "re-expression equivalence", rie_equivalence),
        (2, "equivariance suite", equivariance_suite),
        (3, "gradient correctness", gradients),
        (4, "baseline correctness", baselines),
        (5, "attention placement benefit", attention_placement),
        (6, "size generalization", size_generalization),
        (7, "complexity scaling", complexity),
        (8, "reproducibility", reproducibility),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let o = f();
        println!("criterion {n} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
