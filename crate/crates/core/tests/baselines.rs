use nalgebra::DMatrix;
use num_complex::Complex64;
use pe_align::baselines::channel::seeded;
use pe_align::baselines::gd_pb::pb_min_power;
use pe_align::baselines::*;
use pe_align::Error;
use proptest::prelude::*;
use rand::Rng;

type C = Complex64;

fn c(re: f64, im: f64) -> C {
    C::new(re, im)
}

// ---- P-B ----

/// Smallest bandwidth with `b log2(1 + p g / (n0 b)) >= s0`, by bisection.
fn min_bandwidth(p: f64, g: f64, n0: f64, s0: f64) -> f64 {
    let rate = |b: f64| b * (1.0 + p * g / (n0 * b)).log2();
    let (mut lo, mut hi) = (1e-12, 1.0);
    while rate(hi) < s0 {
        hi *= 2.0;
        if hi > 1e12 {
            return f64::INFINITY;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if rate(mid) >= s0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Grid over power splits, exact 1-D bandwidth per split.
fn pb_grid_oracle(inst: &PbInstance, res: usize) -> (Vec<f64>, f64) {
    let k = inst.g.len();
    let mut best = (vec![], f64::INFINITY);
    let mut idx = vec![0usize; k];
    loop {
        let sum: usize = idx.iter().sum();
        if sum <= res {
            let p: Vec<f64> = idx.iter().map(|&i| inst.p_max * i as f64 / res as f64).collect();
            let total: f64 = p.iter().zip(&inst.g).map(|(&p, &g)| min_bandwidth(p, g, inst.n0, inst.s0)).sum();
            if total < best.1 {
                best = (p, total);
            }
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

fn pb(g: Vec<f64>, p_max: f64) -> PbInstance {
    PbInstance {
        g,
        n0: 1.0,
        s0: 1.0,
        p_max,
    }
}

#[test]
fn pb_single_user_optimum() {
    let inst = pb(vec![1.0], 1.0);
    let (p_grid, b_grid) = pb_grid_oracle(&inst, 100);
    assert!((p_grid[0] - 1.0).abs() < 1e-2 && (b_grid - 1.0).abs() < 1e-2);
    let sol = gd_pb_solve(&inst, &GdConfig::default()).unwrap();
    assert!(sol.converged);
    assert!((sol.state.p[0] - 1.0).abs() < 1e-2, "{:?}", sol.state);
    assert!((sol.state.b[0] - 1.0).abs() < 1e-2, "{:?}", sol.state);
}

#[test]
fn pb_symmetric_users_split_evenly() {
    let inst = pb(vec![1.5, 1.5], 2.0);
    let sol = gd_pb_solve(&inst, &GdConfig::default()).unwrap();
    let s = &sol.state;
    assert!((s.p[0] - 1.0).abs() < 1e-3 && (s.p[1] - 1.0).abs() < 1e-3, "{s:?}");
    assert!((s.b[0] - s.b[1]).abs() < 1e-6);
    let b_star = min_bandwidth(1.0, 1.5, 1.0, 1.0);
    assert!((s.b[0] - b_star).abs() < 1e-3, "{} vs {b_star}", s.b[0]);
}

#[test]
fn pb_matches_grid_on_random_instances() {
    let mut rng = seeded(11);
    for _ in 0..5 {
        let g: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..2.0)).collect();
        let inst = pb(g, 3.0);
        let (_, oracle) = pb_grid_oracle(&inst, 60);
        let sol = gd_pb_solve(&inst, &GdConfig::default()).unwrap();
        let got = inst.total_bandwidth(&sol.state.b);
        assert!(got <= oracle + 1e-3, "gd {got} grid {oracle}");
        for k in 0..3 {
            assert!(inst.rate(k, sol.state.p[k], sol.state.b[k]) >= inst.s0 - 1e-4);
        }
        assert!(sol.state.p.iter().sum::<f64>() <= inst.p_max + 1e-4);
    }
}

#[test]
fn pb_complementary_slackness() {
    let mut rng = seeded(12);
    for _ in 0..4 {
        let g: Vec<f64> = (0..2).map(|_| rng.random_range(0.5..2.0)).collect();
        let inst = pb(g, 3.0);
        let sol = gd_pb_solve(&inst, &GdConfig::default()).unwrap();
        assert!(sol.converged);
        let s = sol.state;
        let total: f64 = s.p.iter().sum();
        assert!((s.lambda * (total - inst.p_max)).abs() <= 1e-4, "{s:?}");
        for k in 0..2 {
            let slack = inst.s0 - inst.rate(k, s.p[k], s.b[k]);
            assert!((s.mu[k] * slack).abs() <= 1e-4);
        }
    }
}

#[test]
fn pb_infeasible_rate_floor() {
    let inst = PbInstance {
        g: vec![1.0],
        n0: 1.0,
        s0: 1e3,
        p_max: 1e-3,
    };
    assert!(pb_min_power(&inst) > inst.p_max);
    assert!(matches!(gd_pb_solve(&inst, &GdConfig::default()), Err(Error::Infeasible(_))));
}

#[test]
fn pb_divergence_is_reported_as_infeasible() {
    let inst = pb(vec![1.0], 0.7);
    let cfg = GdConfig {
        multiplier_ceiling: 50.0,
        ..GdConfig::default()
    };
    assert!(matches!(gd_pb_solve(&inst, &cfg), Err(Error::Infeasible(_))));
}

// ---- P-S ----

fn ps_random(seed: u64, nb: usize, k: usize, sigma2: f64) -> PsInstance {
    let c = Constants {
        sigma2,
        ..Constants::default()
    };
    match generate_channels(
        Variant::Ps,
        Sizes {
            users: k,
            bs_antennas: nb,
            ..Sizes::default()
        },
        &ChannelModel::Rayleigh,
        c,
        seed,
    )
    .unwrap()
    {
        ProblemInstance::Ps(p) => p,
        _ => unreachable!(),
    }
}

fn unit2(theta: f64, phi: f64) -> [C; 2] {
    [c(theta.cos(), 0.0), C::from_polar(theta.sin(), phi)]
}

/// Sum SE for two users on two antennas, parameterized by the power split
/// and one direction per user.
fn ps2_se(inst: &PsInstance, x: &[f64; 5]) -> f64 {
    let [a, t1, f1, t2, f2] = *x;
    let a = a.clamp(0.0, 1.0);
    let v1 = unit2(t1, f1);
    let v2 = unit2(t2, f2);
    let s1 = (inst.p_max * a).sqrt();
    let s2 = (inst.p_max * (1.0 - a)).sqrt();
    let w = DMatrix::from_row_slice(2, 2, &[v1[0] * s1, v2[0] * s2, v1[1] * s1, v2[1] * s2]);
    inst.sum_se(&w)
}

fn ps2_grid_oracle(inst: &PsInstance) -> f64 {
    let pi = std::f64::consts::PI;
    let alphas: Vec<f64> = (0..=5).map(|i| i as f64 / 5.0).collect();
    let thetas: Vec<f64> = (0..8).map(|i| i as f64 * pi / 16.0 + pi / 32.0).collect();
    let phis: Vec<f64> = (0..24).map(|i| i as f64 * 2.0 * pi / 24.0).collect();
    let mut best = (f64::NEG_INFINITY, [0.0; 5]);
    for &a in &alphas {
        for &t1 in &thetas {
            for &f1 in &phis {
                for &t2 in &thetas {
                    for &f2 in &phis {
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

#[test]
fn ps_single_user_is_full_power_mrt() {
    let inst = ps_random(3, 4, 1, 0.1);
    let sol = wmmse_ps_solve(&inst, 200, 1e-12);
    let w = sol.w.column(0);
    let h = inst.h.column(0);
    let corr = w.dotc(&h).norm() / (w.norm() * h.norm());
    assert!(corr >= 1.0 - 1e-9, "{corr}");
    assert!((w.norm_squared() - inst.p_max).abs() < 1e-9);
}

#[test]
fn ps_near_grid_optimum_for_two_users() {
    for seed in [1u64, 2, 3] {
        let inst = ps_random(seed, 2, 2, 0.1);
        let oracle = ps2_grid_oracle(&inst);
        let sol = wmmse_ps_solve(&inst, 2000, 1e-12);
        let got = *sol.trace.last().unwrap();
        assert!(got >= 0.95 * oracle, "seed {seed}: wmmse {got} grid {oracle}");
    }
}

#[test]
fn ps_orthogonal_equal_gain_splits_power() {
    let inst = PsInstance {
        h: DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]),
        p_max: 1.0,
        sigma2: 0.1,
    };
    let sol = wmmse_ps_solve(&inst, 1000, 1e-12);
    for k in 0..2 {
        assert!((sol.w.column(k).norm_squared() - 0.5).abs() < 1e-3);
    }
}

#[test]
fn ps_zero_channel_gives_zero_precoder() {
    let inst = PsInstance {
        h: DMatrix::zeros(3, 2),
        p_max: 1.0,
        sigma2: 1.0,
    };
    let sol = wmmse_ps_solve(&inst, 10, 1e-12);
    assert!(sol.w.iter().all(|x| x.norm() == 0.0));
    assert_eq!(*sol.trace.last().unwrap(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ps_trace_is_monotone_and_feasible(seed in 0u64..10_000, k in 1usize..4, nb in 1usize..5) {
        let inst = ps_random(seed, nb, k, 0.1);
        let sol = wmmse_ps_solve(&inst, 60, 0.0);
        for pair in sol.trace.windows(2) {
            prop_assert!(pair[1] - pair[0] >= -1e-8, "{:?}", pair);
        }
        prop_assert!(sol.w.norm_squared() <= inst.p_max + 1e-9);
    }

    #[test]
    fn ps_solver_commutes_with_user_permutation(seed in 0u64..10_000) {
        let inst = ps_random(seed, 3, 3, 0.1);
        let perm = [2usize, 0, 1];
        let permuted = PsInstance {
            h: DMatrix::from_fn(3, 3, |n, k| inst.h[(n, perm[k])]),
            ..inst.clone()
        };
        let a = wmmse_ps_solve(&inst, 20, 0.0);
        let b = wmmse_ps_solve(&permuted, 20, 0.0);
        for n in 0..3 {
            for k in 0..3 {
                prop_assert!((b.w[(n, k)] - a.w[(n, perm[k])]).norm() <= 1e-12);
            }
        }
    }
}

// ---- P-M ----

fn pm_random(seed: u64, k: usize, nb: usize, nu: usize, m: usize, scale: f64) -> PmInstance {
    let sizes = Sizes {
        users: k,
        bs_antennas: nb,
        ue_antennas: nu,
        streams: m,
    };
    match generate_channels(Variant::Pm, sizes, &ChannelModel::Rayleigh, Constants::default(), seed).unwrap() {
        ProblemInstance::Pm(mut p) => {
            for h in &mut p.h {
                *h *= C::from(scale);
            }
            p
        }
        _ => unreachable!(),
    }
}

/// Straight-line evaluation of the two approximate updates, entry by entry.
fn pm_oracle(inst: &PmInstance, s: &PmState, as_printed: bool) -> PmState {
    let k = inst.h.len();
    let m = inst.streams;
    let nu = inst.h[0].nrows();
    let nb = inst.h[0].ncols();
    let h = |u: usize, e: usize, n: usize| inst.h[u][(e, n)];
    let hw = |r: usize, j: usize, p: usize, e: usize| -> C { (0..nb).map(|n| h(r, e, n) * s.w[j][(n, p)]).sum() };
    let hu = |r: usize, j: usize, p: usize, n: usize| -> C { (0..nu).map(|e| h(r, e, n).conj() * s.u[j][(e, p)]).sum() };
    let mut out = s.clone();
    for kk in 0..k {
        for mm in 0..m {
            for e in 0..nu {
                let mut acc = 2.0 * hw(kk, kk, mm, e);
                for j in 0..k {
                    for p in 0..m {
                        if j == kk && p == mm {
                            continue;
                        }
                        let coef: C = (0..nu).map(|f| hw(kk, j, p, f).conj() * hw(kk, kk, mm, f)).sum();
                        acc -= coef * hw(kk, j, p, e);
                    }
                }
                out.u[kk][(e, mm)] = acc;
            }
            for n in 0..nb {
                let mut acc = 2.0 * hu(kk, kk, mm, n);
                for p in 0..m {
                    if p == mm {
                        continue;
                    }
                    let chans: Vec<usize> = if as_printed { (0..k).filter(|&j| j != kk).collect() } else { vec![kk] };
                    for &jj in &chans {
                        let coef: C = (0..nu)
                            .map(|e| s.u[kk][(e, p)].conj() * (0..nb).map(|q| h(jj, e, q) * hu(kk, kk, mm, q)).sum::<C>())
                            .sum();
                        acc -= coef * hu(kk, kk, p, n);
                    }
                }
                for j in 0..k {
                    if j == kk {
                        continue;
                    }
                    for p in 0..m {
                        let coef: C = (0..nu)
                            .map(|e| s.u[j][(e, p)].conj() * (0..nb).map(|q| h(j, e, q) * hu(kk, kk, mm, q)).sum::<C>())
                            .sum();
                        acc -= coef * hu(j, j, p, n);
                    }
                }
                out.w[kk][(n, mm)] = acc;
            }
        }
    }
    out
}

#[test]
fn pm_single_stream_single_user_is_linear() {
    let inst = pm_random(5, 1, 3, 2, 1, 1.0);
    let s = PmState::initial(&inst);
    let next = wmmse_pm_step(&inst, &s, PmFirstSumChannel::Own).unwrap();
    let u = &inst.h[0] * &s.w[0] * C::from(2.0);
    let w = inst.h[0].adjoint() * &s.u[0] * C::from(2.0);
    assert!((next.u[0].clone() - u).norm() < 1e-14);
    assert!((next.w[0].clone() - w).norm() < 1e-14);
}

#[test]
fn pm_shapes() {
    let inst = pm_random(6, 3, 4, 2, 2, 1.0);
    let s = wmmse_pm_step(&inst, &PmState::initial(&inst), PmFirstSumChannel::Own).unwrap();
    assert!(s.u.iter().all(|u| u.shape() == (2, 2)));
    assert!(s.w.iter().all(|w| w.shape() == (4, 2)));
    let wrong = PmState {
        u: s.u[..2].to_vec(),
        w: s.w.clone(),
    };
    assert!(wmmse_pm_step(&inst, &wrong, PmFirstSumChannel::Own).is_err());
}

#[test]
fn pm_matches_straight_line_oracle() {
    for (seed, flag) in [(7u64, PmFirstSumChannel::Own), (8, PmFirstSumChannel::AsPrinted)] {
        let inst = pm_random(seed, 3, 4, 2, 2, 0.5);
        let mut rng = seeded(seed);
        let mut s = PmState::initial(&inst);
        for x in s.u.iter_mut().chain(s.w.iter_mut()) {
            x.iter_mut().for_each(|v| *v = c(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)));
        }
        let got = wmmse_pm_step(&inst, &s, flag).unwrap();
        let want = pm_oracle(&inst, &s, flag == PmFirstSumChannel::AsPrinted);
        assert!(got.max_abs_diff(&want) <= 1e-12, "{flag:?}: {}", got.max_abs_diff(&want));
    }
}

#[test]
fn pm_flags_differ_only_with_several_users_and_streams() {
    let inst = pm_random(9, 2, 3, 2, 2, 0.5);
    let s = PmState::initial(&inst);
    let a = wmmse_pm_step(&inst, &s, PmFirstSumChannel::Own).unwrap();
    let b = wmmse_pm_step(&inst, &s, PmFirstSumChannel::AsPrinted).unwrap();
    assert!(a.max_abs_diff(&b) > 1e-6);
    let single = pm_random(9, 2, 3, 2, 1, 0.5);
    let s = PmState::initial(&single);
    let a = wmmse_pm_step(&single, &s, PmFirstSumChannel::Own).unwrap();
    let b = wmmse_pm_step(&single, &s, PmFirstSumChannel::AsPrinted).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pm_log_det_reduces_to_miso_formula() {
    let inst = pm_random(10, 3, 4, 1, 1, 1.0);
    let ps = PsInstance {
        h: DMatrix::from_fn(4, 3, |n, k| inst.h[k][(0, n)].conj()),
        p_max: inst.p_max,
        sigma2: inst.sigma2,
    };
    let mut rng = seeded(10);
    let w: Vec<_> = (0..3)
        .map(|_| DMatrix::from_fn(4, 1, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))))
        .collect();
    let wps = DMatrix::from_fn(4, 3, |n, k| w[k][(n, 0)]);
    assert!((inst.sum_se(&w).unwrap() - ps.sum_se(&wps)).abs() < 1e-12);
}

#[test]
fn pm_solve_reports_projected_se() {
    let inst = pm_random(13, 2, 4, 2, 2, 0.3);
    let sol = wmmse_pm_solve(&inst, 5, PmFirstSumChannel::Own).unwrap();
    assert_eq!(sol.trace.len(), 6);
    assert!(sol.trace.iter().all(|v| v.is_finite() && *v >= 0.0));
}

// ---- P-C ----

fn pc_from_gain(gain: DMatrix<f64>) -> PcInstance {
    PcInstance {
        gain,
        beams: None,
        p_max: 1.0,
        sigma2: 0.1,
    }
}

fn pc_random(seed: u64, k: usize) -> PcInstance {
    let sizes = Sizes {
        users: k,
        bs_antennas: k + 1,
        ..Sizes::default()
    };
    let consts = Constants {
        sigma2: 0.1,
        ..Constants::default()
    };
    match generate_channels(Variant::Pc, sizes, &ChannelModel::Rayleigh, consts, seed).unwrap() {
        ProblemInstance::Pc(p) => p,
        _ => unreachable!(),
    }
}

#[test]
fn pc_single_user_full_power() {
    let inst = pc_from_gain(DMatrix::from_element(1, 1, 0.8));
    let sol = wmmse_pc_solve(&inst, 1000, 1e-12);
    assert!((sol.p[0] - 1.0).abs() < 1e-9, "{:?}", sol.p);
}

#[test]
fn pc_weak_interference_gives_full_power() {
    let inst = pc_from_gain(DMatrix::from_row_slice(2, 2, &[1.0, 1e-6, 1e-6, 0.7]));
    let sol = wmmse_pc_solve(&inst, 5000, 1e-12);
    assert!(sol.p.iter().all(|p| (p - 1.0).abs() < 1e-3), "{:?}", sol.p);
}

#[test]
fn pc_strong_interference_near_grid_optimum() {
    let inst = pc_from_gain(DMatrix::from_row_slice(2, 2, &[0.3, 1.5, 1.4, 0.35]));
    let mut best = 0.0_f64;
    for i in 0..=200 {
        for j in 0..=200 {
            best = best.max(inst.sum_rate(&[i as f64 / 200.0, j as f64 / 200.0]));
        }
    }
    let sol = wmmse_pc_solve(&inst, 5000, 1e-12);
    let got = inst.sum_rate(&sol.p);
    assert!(got >= 0.95 * best, "wmmse {got} grid {best}");
}

#[test]
fn pc_powers_stay_in_budget() {
    for seed in 0..10 {
        let inst = pc_random(seed, 3);
        let sol = wmmse_pc_solve(&inst, 200, 1e-12);
        for p in sol.powers.iter().flatten() {
            assert!((0.0..=inst.p_max + 1e-12).contains(p));
        }
    }
}

#[test]
fn pc_gain_and_beam_routes_agree() {
    for seed in 0..10 {
        let inst = pc_random(seed, 3);
        let a = wmmse_pc_solve(&inst, 100, 0.0);
        let b = wmmse_pc_solve_beams(&inst, 100, 0.0).unwrap();
        for (pa, pb) in a.powers.iter().zip(&b.powers) {
            for (x, y) in pa.iter().zip(pb) {
                assert!((x - y).abs() <= 1e-12);
            }
        }
    }
    assert!(wmmse_pc_solve_beams(&pc_from_gain(DMatrix::identity(2, 2)), 1, 0.0).is_err());
}

#[test]
fn pc_beam_gains_follow_decomposition() {
    let inst = pc_random(4, 3);
    let (w, h) = inst.beams.clone().unwrap();
    for k in 0..3 {
        assert!((w.column(k).norm() - 1.0).abs() < 1e-12);
        for j in 0..3 {
            assert!((inst.gain[(k, j)] - w.column(j).dotc(&h.column(k)).norm()).abs() < 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pc_solver_commutes_with_joint_permutation(seed in 0u64..10_000) {
        let inst = pc_random(seed, 3);
        let perm = [1usize, 2, 0];
        let permuted = pc_from_gain(DMatrix::from_fn(3, 3, |r, t| inst.gain[(perm[r], perm[t])]));
        let permuted = PcInstance { sigma2: inst.sigma2, ..permuted };
        let a = wmmse_pc_solve(&inst, 30, 0.0);
        let b = wmmse_pc_solve(&permuted, 30, 0.0);
        for k in 0..3 {
            prop_assert!((b.p[k] - a.p[perm[k]]).abs() <= 1e-12);
        }
    }

    #[test]
    fn pb_solver_commutes_with_user_permutation(g in prop::collection::vec(0.5f64..2.0, 3)) {
        let inst = pb(g.clone(), 3.0);
        let perm = [2usize, 0, 1];
        let permuted = pb(perm.iter().map(|&i| g[i]).collect(), 3.0);
        let cfg = GdConfig { max_iters: 2000, ..GdConfig::default() };
        let a = gd_pb_solve(&inst, &cfg).unwrap().state;
        let b = gd_pb_solve(&permuted, &cfg).unwrap().state;
        for k in 0..3 {
            prop_assert!((b.p[k] - a.p[perm[k]]).abs() <= 1e-12);
            prop_assert!((b.b[k] - a.b[perm[k]]).abs() <= 1e-12);
        }
    }
}
