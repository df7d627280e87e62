//! WMMSE power control on an interference channel.

use nalgebra::DMatrix;

use super::channel::CMat;
use super::instance::PcInstance;
use crate::error::{contract, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PcState {
    /// Transmit amplitudes; the power of user `k` is `v[k]^2`.
    pub v: Vec<f64>,
    pub u: Vec<f64>,
    pub z: Vec<f64>,
}

/// Gain lookup `(rx, tx) -> |g|`.
pub trait Gains {
    fn users(&self) -> usize;
    fn gain(&self, rx: usize, tx: usize) -> f64;
}

impl Gains for DMatrix<f64> {
    fn users(&self) -> usize {
        self.nrows()
    }
    fn gain(&self, rx: usize, tx: usize) -> f64 {
        self[(rx, tx)]
    }
}

/// Gains evaluated on demand from beams `w` and channels `h`.
pub struct BeamGains<'a> {
    pub w: &'a CMat,
    pub h: &'a CMat,
}

impl Gains for BeamGains<'_> {
    fn users(&self) -> usize {
        self.h.ncols()
    }
    fn gain(&self, rx: usize, tx: usize) -> f64 {
        self.w.column(tx).dotc(&self.h.column(rx)).norm()
    }
}

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

/// Receive scalar and MSE weight of user `k` for amplitudes `v`.
pub fn pc_receiver<G: Gains + ?Sized>(g: &G, sigma2: f64, v: &[f64], k: usize) -> (f64, f64) {
    let gkk = g.gain(k, k);
    let mut den = sigma2;
    for (j, vj) in v.iter().enumerate() {
        den += (vj * g.gain(k, j)).powi(2);
    }
    let u = v[k] * gkk / den;
    let z = 1.0 / (1.0 - u * v[k] * gkk);
    (u, z)
}

/// Amplitude of transmitter `k` for fixed receivers.
pub fn pc_amplitude<G: Gains + ?Sized>(g: &G, p_max: f64, u: &[f64], z: &[f64], k: usize) -> f64 {
    let mut den = 0.0;
    for j in 0..u.len() {
        den += z[j] * u[j] * u[j] * g.gain(j, k).powi(2);
    }
    safe_div(z[k] * u[k] * g.gain(k, k), den).clamp(0.0, p_max.sqrt())
}

impl PcState {
    pub fn initial<G: Gains + ?Sized>(g: &G, p_max: f64, sigma2: f64) -> Self {
        let k = g.users();
        let v = vec![p_max.sqrt() / 2.0; k];
        let (u, z) = (0..k).map(|i| pc_receiver(g, sigma2, &v, i)).unzip();
        Self { v, u, z }
    }

    pub fn powers(&self) -> Vec<f64> {
        self.v.iter().map(|v| v * v).collect()
    }

    pub fn max_abs_diff(&self, o: &PcState) -> f64 {
        self.v
            .iter()
            .chain(&self.u)
            .chain(&self.z)
            .zip(o.v.iter().chain(&o.u).chain(&o.z))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Receivers refresh from the current amplitudes while the amplitudes
/// refresh from the current receivers.
pub fn wmmse_pc_step_with<G: Gains + ?Sized>(g: &G, p_max: f64, sigma2: f64, s: &PcState) -> PcState {
    let k = g.users();
    let (u, z) = (0..k).map(|i| pc_receiver(g, sigma2, &s.v, i)).unzip();
    let v = (0..k).map(|i| pc_amplitude(g, p_max, &s.u, &s.z, i)).collect();
    PcState { v, u, z }
}

pub fn wmmse_pc_step(inst: &PcInstance, s: &PcState) -> PcState {
    wmmse_pc_step_with(&inst.gain, inst.p_max, inst.sigma2, s)
}

#[derive(Clone, Debug)]
pub struct PcSolution {
    pub p: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Sum rate after every step, starting with the initial powers.
    pub trace: Vec<f64>,
    /// Power vectors after every step, starting with the initial ones.
    pub powers: Vec<Vec<f64>>,
}

fn solve_with<G: Gains + ?Sized>(inst: &PcInstance, g: &G, max_iters: usize, tol: f64) -> PcSolution {
    let mut s = PcState::initial(g, inst.p_max, inst.sigma2);
    let mut trace = vec![inst.sum_rate(&s.powers())];
    let mut powers = vec![s.powers()];
    let mut converged = false;
    let mut it = 0;
    while it < max_iters {
        let next = wmmse_pc_step_with(g, inst.p_max, inst.sigma2, &s);
        it += 1;
        let delta = next.max_abs_diff(&s);
        s = next;
        trace.push(inst.sum_rate(&s.powers()));
        powers.push(s.powers());
        if delta <= tol {
            converged = true;
            break;
        }
    }
    PcSolution {
        p: s.powers(),
        iterations: it,
        converged,
        trace,
        powers,
    }
}

pub fn wmmse_pc_solve(inst: &PcInstance, max_iters: usize, tol: f64) -> PcSolution {
    solve_with(inst, &inst.gain, max_iters, tol)
}

/// Same iteration with every gain computed from the stored beams, as in
/// the fixed-beamformer downlink power problem.
pub fn wmmse_pc_solve_beams(inst: &PcInstance, max_iters: usize, tol: f64) -> Result<PcSolution> {
    let (w, h) = inst
        .beams
        .as_ref()
        .ok_or_else(|| contract("instance has no beam decomposition"))?;
    Ok(solve_with(inst, &BeamGains { w, h }, max_iters, tol))
}
