//! Primal-dual gradient method for bandwidth and power allocation.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use super::instance::PbInstance;
use crate::error::{contract, Error, Result};

/// Sign convention of the primal and dual updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PbUpdateForm {
    /// Projected descent on the augmented Lagrangian in `(p, B)` and ascent
    /// in the multipliers, with the exact rate derivatives.
    #[default]
    Descent,
    /// The update signs and derivative terms exactly as commonly printed,
    /// with the step inserted on every increment and no penalty. Kept for
    /// comparison; it does not converge to the optimum in general.
    AsPrinted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GdConfig {
    pub step: f64,
    /// Augmented-Lagrangian weight on constraint violations (descent form).
    pub penalty: f64,
    /// Geometric factor applied to the step after every iteration.
    pub decay: f64,
    pub max_iters: usize,
    /// Stop once no variable moves by more than this in one iteration.
    pub tol: f64,
    /// Multipliers above this value signal an infeasible instance.
    pub multiplier_ceiling: f64,
    /// Lower bound kept on every bandwidth so rates stay defined.
    pub b_floor: f64,
    pub form: PbUpdateForm,
    /// Record every n-th iterate in the trace (the final one always).
    pub trace_stride: usize,
}

impl Default for GdConfig {
    fn default() -> Self {
        Self {
            step: 1e-2,
            penalty: 1.0,
            decay: 1.0,
            max_iters: 500_000,
            tol: 1e-10,
            multiplier_ceiling: 1e6,
            b_floor: 1e-9,
            form: PbUpdateForm::Descent,
            trace_stride: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PbState {
    pub p: Vec<f64>,
    pub b: Vec<f64>,
    pub mu: Vec<f64>,
    pub lambda: f64,
}

impl PbState {
    /// Equal power split, unit bandwidths, unit multipliers.
    pub fn initial(inst: &PbInstance) -> Self {
        let k = inst.users();
        Self {
            p: vec![inst.p_max / k as f64; k],
            b: vec![1.0; k],
            mu: vec![1.0; k],
            lambda: 1.0,
        }
    }

    pub fn max_abs_diff(&self, o: &PbState) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        d(&self.p, &o.p)
            .max(d(&self.b, &o.b))
            .max(d(&self.mu, &o.mu))
            .max((self.lambda - o.lambda).abs())
    }
}

/// Constants of one iteration: instance constants plus step parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PbStepParams {
    pub n0: f64,
    pub s0: f64,
    pub p_max: f64,
    pub step: f64,
    pub penalty: f64,
    pub b_floor: f64,
    pub form: PbUpdateForm,
}

impl PbStepParams {
    pub fn new(inst: &PbInstance, cfg: &GdConfig) -> Self {
        Self {
            n0: inst.n0,
            s0: inst.s0,
            p_max: inst.p_max,
            step: cfg.step,
            penalty: cfg.penalty,
            b_floor: cfg.b_floor,
            form: cfg.form,
        }
    }
}

/// Per-user update given the aggregated total power of all users.
/// Returns `(p, B, mu)`; `lambda` is shared and updated by [`pb_lambda_update`].
pub fn pb_user_update(p: f64, b: f64, mu: f64, lambda: f64, total_power: f64, g: f64, c: &PbStepParams) -> (f64, f64, f64) {
    let (n0, s0, step) = (c.n0, c.s0, c.step);
    let den = n0 * b + p * g;
    let rate_log = (1.0 + p * g / (n0 * b)).log2();
    let s = b * rate_log;
    match c.form {
        PbUpdateForm::Descent => {
            let lam = (lambda + c.penalty * (total_power - c.p_max)).max(0.0);
            let m = (mu + c.penalty * (s0 - s)).max(0.0);
            let dp = lam - m * g * b / (LN_2 * den);
            let db = 1.0 - m * (rate_log - p * g / (LN_2 * den));
            (
                (p - step * dp).max(0.0),
                (b - step * db).max(c.b_floor),
                (mu + step * (s0 - s)).max(0.0),
            )
        }
        PbUpdateForm::AsPrinted => (
            (p - step * mu * g / (LN_2 * den) + step * lambda).max(0.0),
            (b - step * (1.0 + mu * rate_log - mu * p * g / den)).max(c.b_floor),
            (mu + step * (s - s0)).max(0.0),
        ),
    }
}

pub fn pb_lambda_update(lambda: f64, total_power: f64, c: &PbStepParams) -> f64 {
    (lambda + c.step * (total_power - c.p_max)).max(0.0)
}

/// One simultaneous update of all primal and dual variables.
pub fn gd_pb_step(inst: &PbInstance, s: &PbState, c: &PbStepParams) -> PbState {
    let k = inst.users();
    let total: f64 = s.p.iter().sum();
    let mut next = PbState {
        p: vec![0.0; k],
        b: vec![0.0; k],
        mu: vec![0.0; k],
        lambda: pb_lambda_update(s.lambda, total, c),
    };
    for i in 0..k {
        let (p, b, mu) = pb_user_update(s.p[i], s.b[i], s.mu[i], s.lambda, total, inst.g[i], c);
        next.p[i] = p;
        next.b[i] = b;
        next.mu[i] = mu;
    }
    next
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PbTraceRow {
    pub iteration: usize,
    pub state: PbState,
    pub objective: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PbSolution {
    pub state: PbState,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<PbTraceRow>,
}

/// Rate floor times the power needed at unbounded bandwidth; the instance
/// is feasible iff this stays below the power budget.
pub fn pb_min_power(inst: &PbInstance) -> f64 {
    inst.g.iter().map(|g| inst.s0 * inst.n0 * LN_2 / g).sum()
}

pub fn gd_pb_solve(inst: &PbInstance, cfg: &GdConfig) -> Result<PbSolution> {
    if inst.g.is_empty() {
        return Err(contract("PB instance has no users"));
    }
    if !(cfg.step > 0.0) || !(cfg.penalty >= 0.0) || cfg.trace_stride == 0 {
        return Err(contract("step and trace stride must be positive, penalty nonnegative"));
    }
    if inst.g.iter().any(|&g| !(g >= 0.0)) {
        return Err(contract("PB gains must be nonnegative"));
    }
    let need = pb_min_power(inst);
    if !(need < inst.p_max) {
        return Err(Error::Infeasible(format!(
            "rate floor {} needs at least {need:.3e} W in total, budget is {:.3e} W",
            inst.s0, inst.p_max
        )));
    }
    let mut s = PbState::initial(inst);
    let mut trace = vec![PbTraceRow {
        iteration: 0,
        objective: inst.total_bandwidth(&s.b),
        state: s.clone(),
    }];
    let mut params = PbStepParams::new(inst, cfg);
    let mut converged = false;
    let mut it = 0;
    while it < cfg.max_iters {
        let next = gd_pb_step(inst, &s, &params);
        it += 1;
        let delta = next.max_abs_diff(&s);
        s = next;
        let top = s.mu.iter().copied().fold(s.lambda, f64::max);
        if !(top <= cfg.multiplier_ceiling) {
            return Err(Error::Infeasible(format!(
                "multiplier reached {top:.3e} after {it} iterations"
            )));
        }
        if it % cfg.trace_stride == 0 {
            trace.push(PbTraceRow {
                iteration: it,
                objective: inst.total_bandwidth(&s.b),
                state: s.clone(),
            });
        }
        if delta <= cfg.tol {
            converged = true;
            break;
        }
        params.step *= cfg.decay;
    }
    if trace.last().map(|r| r.iteration) != Some(it) {
        trace.push(PbTraceRow {
            iteration: it,
            objective: inst.total_bandwidth(&s.b),
            state: s.clone(),
        });
    }
    Ok(PbSolution {
        state: s,
        iterations: it,
        converged,
        trace,
    })
}
