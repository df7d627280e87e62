use std::path::Path;

use anyhow::{bail, Context, Result};
use pe_align::baselines::{
    evaluate_objective, gd_pb_solve, generate_channels, pm_normalize_channels, wmmse_pc_solve, wmmse_pm_solve,
    wmmse_ps_solve, GdConfig, PmFirstSumChannel, ProblemInstance, Variables, Variant,
};
use pe_align::gnn::{
    build_gnn_from_problem, eval_size_generalization, flop_sweep, from_checkpoint, loglog_slope, ps_descriptors,
    to_checkpoint, train_unsupervised, GeneralizationSetup, TrainConfig,
};
use pe_align::rie::{verify_rie_equivalence, EquivalenceConfig};
use pe_align::Error;

use crate::config::Resolved;
use crate::report::{num, Emitter, PlotData, Table};
use crate::suite;
use crate::Status;

/// Width of the PS feature and output vectors (real and imaginary parts).
const PS_WIDTH: usize = 2;

/// Largest PM channel spectral norm; the first-order iteration diverges on
/// raw unit-variance channels.
const PM_SPECTRAL_NORM: f64 = 0.5;

pub fn solve(cfg: &Resolved, out: &mut Emitter) -> Result<Status> {
    let s = &cfg.solve;
    let mut table = Table::new(&["instance", "seed", "users", "status", "objective", "iterations", "converged"]);
    let mut trace = Table::new(&["instance", "iteration", "objective"]);
    let mut plot = PlotData { points: Vec::new() };
    for i in 0..s.instances {
        let seed = cfg.seed.wrapping_add(i as u64);
        let mut inst = generate_channels(s.variant, cfg.sizes, &cfg.channel, cfg.constants, seed)
            .with_context(|| format!("generating instance {i}"))?;
        if let ProblemInstance::Pm(p) = &mut inst {
            pm_normalize_channels(p, PM_SPECTRAL_NORM);
        }
        let users = match &inst {
            ProblemInstance::Pb(p) => p.users(),
            ProblemInstance::Ps(p) => p.users(),
            ProblemInstance::Pm(p) => p.users(),
            ProblemInstance::Pc(p) => p.users(),
        };
        let (objective, iterations, converged, curve): (f64, usize, bool, Vec<f64>) = match &inst {
            ProblemInstance::Pb(p) => {
                let gd = GdConfig {
                    step: s.step,
                    max_iters: s.max_iters,
                    tol: s.tol,
                    ..GdConfig::default()
                };
                match gd_pb_solve(p, &gd) {
                    Ok(sol) => {
                        let vars = Variables::Pb {
                            p: sol.state.p.clone(),
                            b: sol.state.b.clone(),
                        };
                        let obj = evaluate_objective(&inst, &vars)?;
                        let curve = sol.trace.iter().map(|r| r.objective).collect();
                        (obj, sol.iterations, sol.converged, curve)
                    }
                    Err(Error::Infeasible(_)) => {
                        table.push(vec![i.to_string(), seed.to_string(), users.to_string(), "infeasible".into(), String::new(), "0".into(), "false".into()]);
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            ProblemInstance::Ps(p) => {
                let sol = wmmse_ps_solve(p, s.max_iters, s.tol);
                (*sol.trace.last().expect("trace starts at the initial point"), sol.iterations, sol.converged, sol.trace)
            }
            ProblemInstance::Pm(p) => {
                let sol = wmmse_pm_solve(p, s.max_iters, PmFirstSumChannel::Own)?;
                let n = sol.trace.len();
                let converged = n >= 2 && (sol.trace[n - 1] - sol.trace[n - 2]).abs() <= s.tol;
                (sol.trace[n - 1], sol.iterations, converged, sol.trace)
            }
            ProblemInstance::Pc(p) => {
                let sol = wmmse_pc_solve(p, s.max_iters, s.tol);
                (*sol.trace.last().expect("trace starts at the initial point"), sol.iterations, sol.converged, sol.trace)
            }
        };
        table.push(vec![
            i.to_string(),
            seed.to_string(),
            users.to_string(),
            "ok".into(),
            num(objective),
            iterations.to_string(),
            converged.to_string(),
        ]);
        for (it, v) in curve.iter().enumerate() {
            trace.push(vec![i.to_string(), it.to_string(), num(*v)]);
            plot.points.push((it.to_string(), num(*v), format!("instance {i}")));
        }
    }
    out.emit("solutions", &table, None)?;
    if !trace.rows.is_empty() {
        out.emit("solve_trace", &trace, Some(plot))?;
    }
    Ok(Status::Success)
}

pub fn verify_rie(cfg: &Resolved, out: &mut Emitter) -> Result<Status> {
    let v = &cfg.verify_rie;
    let eq = EquivalenceConfig {
        sizes: cfg.sizes,
        vary_users: v.vary_users,
        constants: cfg.constants,
        seed: cfg.seed,
        ..EquivalenceConfig::default()
    };
    let mut summary = Table::new(&["variant", "pass", "worst_error", "tol", "trials"]);
    let mut failed = Vec::new();
    for &variant in &v.variants {
        let rep = verify_rie_equivalence(variant, v.trials, v.iterations, v.tol, &eq)
            .with_context(|| format!("verifying the {} re-expression", variant.tag()))?;
        let mut t = Table::new(&["trial", "iteration", "max_abs_error"]);
        let mut plot = PlotData { points: Vec::new() };
        let mut worst = vec![0.0f64; v.iterations];
        for (ti, tr) in rep.trials.iter().enumerate() {
            for (it, e) in tr.errors.iter().enumerate() {
                t.push(vec![ti.to_string(), (it + 1).to_string(), num(*e)]);
                worst[it] = worst[it].max(*e);
            }
        }
        for (it, w) in worst.iter().enumerate() {
            plot.points.push(((it + 1).to_string(), num(*w), variant.tag().into()));
        }
        let tag = variant.tag().to_ascii_lowercase();
        out.emit(&format!("rie_{tag}"), &t, Some(plot))?;
        summary.push(vec![
            variant.tag().into(),
            rep.pass.to_string(),
            num(rep.worst_error),
            num(rep.tol),
            rep.trials.len().to_string(),
        ]);
        println!("{}: worst |raw - rie| = {:e} (tol {:e}) {}", variant.tag(), rep.worst_error, rep.tol, if rep.pass { "PASS" } else { "FAIL" });
        if !rep.pass {
            failed.push(variant.tag());
        }
    }
    out.emit("summary", &summary, None)?;
    Ok(if failed.is_empty() {
        Status::Success
    } else {
        Status::ChecksFailed(format!("re-expression mismatch for {}", failed.join(", ")))
    })
}

pub fn check_equivariance(cfg: &Resolved, out: &mut Emitter) -> Result<Status> {
    let e = &cfg.check_equivariance;
    let mut t = Table::new(&["target", "expected_pass", "pass", "max_abs_error", "trials"]);
    let mut failed = Vec::new();
    for name in &e.targets {
        let rep = suite::run_target(name, e.trials, e.tol, cfg.seed).with_context(|| format!("check '{name}'"))?;
        t.push(vec![
            name.clone(),
            suite::expected_pass(name).to_string(),
            rep.pass.to_string(),
            num(rep.max_abs_error),
            rep.trials.to_string(),
        ]);
        println!("{name}: max error {:e} {}", rep.max_abs_error, if rep.pass { "PASS" } else { "FAIL" });
        if !rep.pass {
            failed.push(name.as_str());
        }
    }
    out.emit("equivariance", &t, None)?;
    Ok(if failed.is_empty() {
        Status::Success
    } else {
        Status::ChecksFailed(format!("not equivariant: {}", failed.join(", ")))
    })
}

fn train_config(cfg: &Resolved) -> TrainConfig {
    let t = &cfg.train;
    TrainConfig {
        seed: cfg.seed,
        train_samples: t.samples,
        batch_size: t.batch_size,
        epochs: t.epochs,
        learning_rate: t.learning_rate,
        lr_decay: t.lr_decay,
        variant: Variant::Ps,
        users: t.users.clone(),
        antennas: t.antennas,
        p_max: cfg.constants.p_max,
        sigma2: cfg.constants.sigma2,
        channel: cfg.channel.clone(),
    }
}

pub fn train(cfg: &Resolved, out: &mut Emitter) -> Result<Status> {
    let tc = train_config(cfg);
    let mut model = build_gnn_from_problem(&ps_descriptors(), PS_WIDTH, PS_WIDTH, &cfg.model, cfg.seed)?;
    let data = tc.dataset()?;
    let rep = train_unsupervised(&mut model, &data, &tc)?;
    let (manifest, params) = to_checkpoint(&model)?;
    out.raw("manifest.json", manifest.as_bytes())?;
    out.raw("params.bin", &params)?;
    let mut t = Table::new(&["epoch", "loss"]);
    let mut plot = PlotData { points: Vec::new() };
    for (e, l) in rep.loss_curve.iter().enumerate() {
        t.push(vec![(e + 1).to_string(), num(*l)]);
        plot.points.push(((e + 1).to_string(), num(*l), "train".into()));
    }
    out.emit("loss_curve", &t, Some(plot))?;
    println!(
        "trained {} parameters for {} steps; final loss {:e}",
        model.scalar_count(),
        rep.steps,
        rep.loss_curve.last().copied().unwrap_or(f64::NAN)
    );
    Ok(Status::Success)
}

fn load_checkpoint(dir: &Path) -> Result<pe_align::gnn::GnnModel> {
    let m = std::fs::read_to_string(dir.join("manifest.json"))
        .with_context(|| format!("reading {}", dir.join("manifest.json").display()))?;
    let p = std::fs::read(dir.join("params.bin")).with_context(|| format!("reading {}", dir.join("params.bin").display()))?;
    Ok(from_checkpoint(&m, &p)?)
}

pub fn eval_generalization(cfg: &Resolved, out: &mut Emitter) -> Result<Status> {
    let g = &cfg.eval_generalization;
    let Some(dir) = &g.checkpoint else {
        bail!("invalid config: [eval_generalization] checkpoint: missing; point it at a `train` output directory");
    };
    let model = load_checkpoint(dir)?;
    let setup = GeneralizationSetup {
        antennas: g.antennas,
        samples_per_size: g.samples_per_size,
        p_max: cfg.constants.p_max,
        sigma2: cfg.constants.sigma2,
        channel: cfg.channel.clone(),
        seed: cfg.seed,
    };
    let rows = eval_size_generalization(&model, &g.test_users, &setup)?;
    let mut t = Table::new(&["K", "mean_ratio", "ci_low", "ci_high"]);
    let mut plot = PlotData { points: Vec::new() };
    for r in &rows {
        t.push(vec![r.users.to_string(), num(r.mean_ratio), num(r.ci_low), num(r.ci_high)]);
        plot.points.push((r.users.to_string(), num(r.mean_ratio), "mean_ratio".into()));
        plot.points.push((r.users.to_string(), num(r.ci_low), "ci_low".into()));
        plot.points.push((r.users.to_string(), num(r.ci_high), "ci_high".into()));
        if r.excluded > 0 {
            eprintln!("K={}: {} samples with zero reference SE excluded", r.users, r.excluded);
        }
    }
    out.emit("se_ratio", &t, Some(plot))?;
    Ok(Status::Success)
}

pub fn count_flops(cfg: &Resolved, out: &mut Emitter) -> Result<Status> {
    let f = &cfg.count_flops;
    let model = build_gnn_from_problem(&ps_descriptors(), PS_WIDTH, PS_WIDTH, &cfg.model, cfg.seed)?;
    let base = [f.users, f.antennas];
    let mut rows = flop_sweep(&model, &base, 0, &f.sweep_users)?;
    rows.extend(flop_sweep(&model, &base, 1, &f.sweep_antennas)?);
    let mut total = Table::new(&["dim", "size", "count"]);
    let mut pair = Table::new(&["dim", "size", "count"]);
    let mut plot = PlotData { points: Vec::new() };
    for r in &rows {
        total.push(vec![r.dim.clone(), r.size.to_string(), r.count.to_string()]);
        pair.push(vec![r.dim.clone(), r.size.to_string(), r.pairwise.to_string()]);
        plot.points.push((r.size.to_string(), r.count.to_string(), r.dim.clone()));
    }
    out.emit("flops", &total, Some(plot))?;
    out.emit("flops_attention", &pair, None)?;
    for dim in [model.descriptors()[0].name.as_str(), model.descriptors()[1].name.as_str()] {
        let pts: Vec<_> = rows.iter().filter(|r| r.dim == dim).collect();
        if pts.len() >= 2 {
            let x: Vec<f64> = pts.iter().map(|r| r.size as f64).collect();
            let total: Vec<f64> = pts.iter().map(|r| r.count as f64).collect();
            let pw: Vec<f64> = pts.iter().map(|r| r.pairwise.max(1) as f64).collect();
            println!(
                "{dim}: log-log slope {:.3} total, {:.3} attention",
                loglog_slope(&x, &total),
                loglog_slope(&x, &pw)
            );
        }
    }
    Ok(Status::Success)
}
