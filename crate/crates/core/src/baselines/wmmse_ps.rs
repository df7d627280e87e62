//! Weighted-MMSE precoding for the multi-user MISO downlink.
//!
//! Each step refreshes the receivers `(u, z)` from the current precoder
//! and, simultaneously, the precoder from the current receivers. Started
//! from consistent receivers this visits exactly the iterates of the usual
//! alternating scheme, each one twice.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::channel::CMat;
use super::instance::PsInstance;

#[derive(Clone, Debug, PartialEq)]
pub struct PsState {
    pub w: CMat,
    pub u: Vec<Complex64>,
    pub z: Vec<f64>,
}

impl PsState {
    /// Scaled channel-conjugate precoder at full power with matching receivers.
    pub fn initial(inst: &PsInstance) -> Self {
        let n = inst.h.norm();
        let w = if n > 0.0 {
            &inst.h * Complex64::from(inst.p_max.sqrt() / n)
        } else {
            CMat::zeros(inst.antennas(), inst.users())
        };
        let (u, z) = ps_receivers(inst, &w);
        Self { w, u, z }
    }

    pub fn max_abs_diff(&self, o: &PsState) -> f64 {
        let dw = self.w.iter().zip(o.w.iter()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let du = self.u.iter().zip(&o.u).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let dz = self.z.iter().zip(&o.z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        dw.max(du).max(dz)
    }
}

/// MMSE receive scalars and MSE weights for precoder `w`.
pub fn ps_receivers(inst: &PsInstance, w: &CMat) -> (Vec<Complex64>, Vec<f64>) {
    let k = inst.users();
    let mut u = Vec::with_capacity(k);
    let mut z = Vec::with_capacity(k);
    for r in 0..k {
        let own = inst.h.column(r).dotc(&w.column(r));
        let mut total = inst.sigma2;
        for i in 0..k {
            total += inst.h.column(r).dotc(&w.column(i)).norm_sqr();
        }
        let (t, ur) = receiver_from_powers(own, total);
        u.push(ur);
        z.push(t);
    }
    (u, z)
}

/// From `h^H w_k` and total received power (signal, interference, noise),
/// the weight `z` and receive scalar `u`.
pub fn receiver_from_powers(own: Complex64, total: f64) -> (f64, Complex64) {
    let u = own / total;
    let z = total / (total - own.norm_sqr());
    (z, u)
}

/// Hermitian eigendecomposition of the weighted covariance plus a dual
/// variable meeting the power budget.
#[derive(Clone, Debug)]
pub struct PowerDual {
    vectors: CMat,
    values: Vec<f64>,
    keep: Vec<bool>,
    pub mu: f64,
}

const PINV_REL: f64 = 1e-12;
const BISECTION_HALVINGS: usize = 100;

impl PowerDual {
    /// `a = sum_j z_j |u_j|^2 h_j h_j^H` and
    /// `c = sum_j z_j^2 |u_j|^2 h_j h_j^H`, whose projections on the
    /// eigenvectors of `a` give the transmit power as a function of the dual.
    pub fn new(a: &CMat, c: &CMat, p_max: f64) -> Self {
        let n = a.nrows();
        let herm = (a + a.adjoint()) * Complex64::from(0.5);
        let eig = herm.symmetric_eigen();
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let vectors = eig.eigenvectors;
        let lmax = values.iter().copied().fold(0.0, f64::max);
        let keep: Vec<bool> = values.iter().map(|&l| lmax > 0.0 && l > PINV_REL * lmax).collect();
        let proj = vectors.adjoint() * c * &vectors;
        let cdiag: Vec<f64> = (0..n).map(|i| proj[(i, i)].re.max(0.0)).collect();
        let power = |mu: f64| -> f64 {
            (0..n)
                .filter(|&i| mu > 0.0 || keep[i])
                .map(|i| cdiag[i] / (values[i].max(0.0) + mu).powi(2))
                .sum()
        };
        let mu = if power(0.0) <= p_max {
            0.0
        } else {
            let mut lo = 0.0;
            let mut hi = (cdiag.iter().sum::<f64>() / p_max).sqrt();
            for _ in 0..BISECTION_HALVINGS {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if power(mid) > p_max {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            hi
        };
        Self {
            vectors,
            values,
            keep,
            mu,
        }
    }

    /// `(a + mu I)^+ b`, pseudo-inverse when `mu = 0`.
    pub fn solve(&self, b: &DVector<Complex64>) -> DVector<Complex64> {
        let mut coef = self.vectors.adjoint() * b;
        for (i, c) in coef.iter_mut().enumerate() {
            *c = if self.mu > 0.0 {
                *c / (self.values[i].max(0.0) + self.mu)
            } else if self.keep[i] {
                *c / self.values[i]
            } else {
                Complex64::from(0.0)
            };
        }
        &self.vectors * coef
    }
}

/// Weighted covariance contributions of one user.
pub fn ps_user_covariances(h: &DVector<Complex64>, u: Complex64, z: f64) -> (CMat, CMat) {
    let outer = h * h.adjoint();
    let a = &outer * Complex64::from(z * u.norm_sqr());
    let c = &outer * Complex64::from(z * z * u.norm_sqr());
    (a, c)
}

/// Precoder minimizing the weighted MSE for fixed receivers.
pub fn ps_precoder(inst: &PsInstance, u: &[Complex64], z: &[f64]) -> CMat {
    let (n, k) = (inst.antennas(), inst.users());
    let mut a = CMat::zeros(n, n);
    let mut c = CMat::zeros(n, n);
    for j in 0..k {
        let (aj, cj) = ps_user_covariances(&inst.h.column(j).into_owned(), u[j], z[j]);
        a += aj;
        c += cj;
    }
    let dual = PowerDual::new(&a, &c, inst.p_max);
    let mut w = CMat::zeros(n, k);
    for j in 0..k {
        let b = inst.h.column(j) * (u[j] * z[j]);
        w.set_column(j, &dual.solve(&b));
    }
    w
}

pub fn wmmse_ps_step(inst: &PsInstance, s: &PsState) -> PsState {
    let (u, z) = ps_receivers(inst, &s.w);
    let w = ps_precoder(inst, &s.u, &s.z);
    PsState { w, u, z }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PsSolution {
    #[serde(skip)]
    pub w: CMat,
    pub iterations: usize,
    pub converged: bool,
    /// Sum spectral efficiency of the precoder after every step, starting
    /// with the initial one.
    pub trace: Vec<f64>,
}

pub fn wmmse_ps_solve(inst: &PsInstance, max_iters: usize, tol: f64) -> PsSolution {
    let mut s = PsState::initial(inst);
    let mut trace = vec![inst.sum_se(&s.w)];
    let mut converged = false;
    let mut it = 0;
    while it < max_iters {
        let next = wmmse_ps_step(inst, &s);
        it += 1;
        let delta = next.max_abs_diff(&s);
        s = next;
        trace.push(inst.sum_se(&s.w));
        if delta <= tol {
            converged = true;
            break;
        }
    }
    PsSolution {
        w: s.w,
        iterations: it,
        converged,
        trace,
    }
}
