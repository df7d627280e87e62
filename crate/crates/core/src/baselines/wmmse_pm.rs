//! High-SNR approximated WMMSE updates for multi-stream MU-MIMO precoding.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::channel::CMat;
use super::instance::PmInstance;
use crate::error::{contract, Result};

/// Channel used in the intra-user sum of the precoder update. `AsPrinted`
/// reads the unbound channel index as a sum over the other users.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PmFirstSumChannel {
    #[default]
    Own,
    AsPrinted,
}

/// `u[k]` is `user antennas x streams`, `w[k]` is `BS antennas x streams`.
#[derive(Clone, Debug, PartialEq)]
pub struct PmState {
    pub u: Vec<CMat>,
    pub w: Vec<CMat>,
}

impl PmState {
    /// Channel-conjugate precoders at full power; unit-norm combiners
    /// matched to them.
    pub fn initial(inst: &PmInstance) -> Self {
        let (nb, nu, m) = (inst.bs_antennas(), inst.ue_antennas(), inst.streams);
        let mut w: Vec<CMat> = inst
            .h
            .iter()
            .map(|hk| {
                let ha = hk.adjoint();
                CMat::from_fn(nb, m, |n, s| ha[(n, s % nu)])
            })
            .collect();
        let total: f64 = w.iter().map(|x| x.norm_squared()).sum();
        if total > 0.0 {
            let c = Complex64::from((inst.p_max / total).sqrt());
            for x in &mut w {
                *x *= c;
            }
        }
        let u = inst
            .h
            .iter()
            .zip(&w)
            .map(|(hk, wk)| {
                let mut uk = hk * wk;
                for mut col in uk.column_iter_mut() {
                    let n = col.norm();
                    if n > 0.0 {
                        col /= Complex64::from(n);
                    }
                }
                uk
            })
            .collect();
        Self { u, w }
    }

    pub fn max_abs_diff(&self, o: &PmState) -> f64 {
        let mut d = 0.0_f64;
        for (a, b) in self.u.iter().chain(&self.w).zip(o.u.iter().chain(&o.w)) {
            for (x, y) in a.iter().zip(b.iter()) {
                d = d.max((x - y).norm());
            }
        }
        d
    }

    fn check(&self, inst: &PmInstance) -> Result<()> {
        let (k, nb, nu, m) = (inst.users(), inst.bs_antennas(), inst.ue_antennas(), inst.streams);
        let ok = self.u.len() == k
            && self.w.len() == k
            && self.u.iter().all(|x| x.shape() == (nu, m))
            && self.w.iter().all(|x| x.shape() == (nb, m));
        if ok {
            Ok(())
        } else {
            Err(contract("PM state does not match the instance sizes"))
        }
    }
}

/// One simultaneous update of all combiners and precoders.
pub fn wmmse_pm_step(inst: &PmInstance, s: &PmState, first: PmFirstSumChannel) -> Result<PmState> {
    s.check(inst)?;
    let (k, m) = (inst.users(), inst.streams);
    let two = Complex64::from(2.0);
    // Received precoders H_k w_{p_j} and back-projected combiners H_k^H u_{p_j}.
    let hw: Vec<Vec<CMat>> = (0..k).map(|r| (0..k).map(|j| &inst.h[r] * &s.w[j]).collect()).collect();
    let hu: Vec<CMat> = (0..k).map(|j| inst.h[j].adjoint() * &s.u[j]).collect();
    let mut u_new = Vec::with_capacity(k);
    let mut w_new = Vec::with_capacity(k);
    for uk in 0..k {
        let own = &hw[uk][uk];
        let mut un = own * two;
        for mi in 0..m {
            let target = own.column(mi);
            for j in 0..k {
                for p in 0..m {
                    if j == uk && p == mi {
                        continue;
                    }
                    let col = hw[uk][j].column(p);
                    let coef = col.dotc(&target);
                    un.column_mut(mi).axpy(-coef, &col, Complex64::from(1.0));
                }
            }
        }
        u_new.push(un);

        let back = &hu[uk];
        let mut wn = back * two;
        for mi in 0..m {
            let target = back.column(mi);
            for p in 0..m {
                if p == mi {
                    continue;
                }
                let coef = match first {
                    PmFirstSumChannel::Own => hw_inner(&inst.h[uk], &s.u[uk], p, &target),
                    PmFirstSumChannel::AsPrinted => (0..k)
                        .filter(|&j| j != uk)
                        .map(|j| hw_inner(&inst.h[j], &s.u[uk], p, &target))
                        .sum(),
                };
                wn.column_mut(mi).axpy(-coef, &back.column(p), Complex64::from(1.0));
            }
            for j in 0..k {
                if j == uk {
                    continue;
                }
                for p in 0..m {
                    let coef = hw_inner(&inst.h[j], &s.u[j], p, &target);
                    wn.column_mut(mi).axpy(-coef, &hu[j].column(p), Complex64::from(1.0));
                }
            }
        }
        w_new.push(wn);
    }
    Ok(PmState { u: u_new, w: w_new })
}

/// `u[:, p]^H h x`.
fn hw_inner<S>(h: &CMat, u: &CMat, p: usize, x: &nalgebra::Matrix<Complex64, nalgebra::Dyn, nalgebra::U1, S>) -> Complex64
where
    S: nalgebra::storage::Storage<Complex64, nalgebra::Dyn, nalgebra::U1>,
{
    u.column(p).dotc(&(h * x))
}

/// Precoders scaled onto the power budget when they exceed it.
pub fn pm_project(inst: &PmInstance, w: &[CMat]) -> Vec<CMat> {
    let total: f64 = w.iter().map(|x| x.norm_squared()).sum();
    if total <= inst.p_max || total == 0.0 {
        return w.to_vec();
    }
    let c = Complex64::from((inst.p_max / total).sqrt());
    w.iter().map(|x| x * c).collect()
}

#[derive(Clone, Debug)]
pub struct PmSolution {
    pub state: PmState,
    pub iterations: usize,
    /// Sum SE of the projected precoders after every step, starting with
    /// the initial one.
    pub trace: Vec<f64>,
}

pub fn wmmse_pm_solve(inst: &PmInstance, iters: usize, first: PmFirstSumChannel) -> Result<PmSolution> {
    let mut s = PmState::initial(inst);
    let mut trace = vec![inst.sum_se(&pm_project(inst, &s.w))?];
    for _ in 0..iters {
        s = wmmse_pm_step(inst, &s, first)?;
        trace.push(inst.sum_se(&pm_project(inst, &s.w))?);
    }
    Ok(PmSolution {
        state: s,
        iterations: iters,
        trace,
    })
}

/// Scales all channels by one factor so the largest spectral norm equals
/// `target`. The approximate updates expand by roughly twice that norm per
/// step, so targets near 1/2 keep trajectories bounded.
pub fn pm_normalize_channels(inst: &mut PmInstance, target: f64) {
    let top = inst
        .h
        .iter()
        .map(|h| h.clone().svd(false, false).singular_values[0])
        .fold(0.0, f64::max);
    if top > 0.0 {
        let c = Complex64::from(target / top);
        for h in &mut inst.h {
            *h *= c;
        }
    }
}
