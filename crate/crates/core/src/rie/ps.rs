//! MU-MISO WMMSE: an APE-II template over users whose combiner and
//! attention processor are APE-I functions over antennas.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;

use super::{Grid, Layout, RepresentationState, RieStep};
use crate::baselines::wmmse_ps::{ps_user_covariances, receiver_from_powers, PowerDual};
use crate::baselines::{CMat, PsInstance, PsState};
use crate::error::{contract, Result};
use crate::pe::{OneSetTemplate, Opaque, RecursionStack, SetTensor, TemplateKind};
use crate::tensor::Tensor;

const W: usize = 7;

pub struct RiePs {
    stack: RecursionStack,
}

fn mean_over_rows(g: &Grid<'_>, rows: usize, slot: usize) -> f64 {
    (0..rows).map(|n| g.get(n, 0, slot)).sum::<f64>() / rows as f64
}

fn mean_c(g: &Grid<'_>, rows: usize, slot: usize) -> Complex64 {
    Complex64::new(mean_over_rows(g, rows, slot), mean_over_rows(g, rows, slot + 1))
}

fn column(g: &Grid<'_>, rows: usize, slot: usize) -> DVector<Complex64> {
    DVector::from_fn(rows, |n, _| g.c(n, 0, slot))
}

/// Pairwise term for user `k` from user `j`, per antenna row: the
/// interference power `|h_k^H w_j|^2` followed by the rows of user `j`'s
/// two weighted covariances.
fn q_s(x: &SetTensor) -> Result<SetTensor> {
    let n = x.set_len();
    let g = Grid::new(&x.value);
    let hk = column(&g, n, 5);
    let wj = column(&g, n, W);
    let uj = mean_c(&g, n, W + 2);
    let zj = mean_over_rows(&g, n, W + 4);
    let hj = column(&g, n, W + 5);
    let interf = hk.dotc(&wj).norm_sqr();
    let (a, c) = ps_user_covariances(&hj, uj, zj);
    let width = 1 + 4 * n;
    let mut data = Vec::with_capacity(n * width);
    for r in 0..n {
        data.push(interf);
        data.extend((0..n).map(|m| a[(r, m)].re));
        data.extend((0..n).map(|m| a[(r, m)].im));
        data.extend((0..n).map(|m| c[(r, m)].re));
        data.extend((0..n).map(|m| c[(r, m)].im));
    }
    SetTensor::new(Tensor::new(vec![n, width], data)?, x.axes.clone())
}

fn f_s(x: &SetTensor, p_max: f64, sigma2: f64) -> Result<SetTensor> {
    let n = x.set_len();
    if x.width() != W + 1 + 4 * n {
        return Err(contract("PS combiner input has the wrong width"));
    }
    let g = Grid::new(&x.value);
    let wk = column(&g, n, 0);
    let uk = mean_c(&g, n, 2);
    let zk = mean_over_rows(&g, n, 4);
    let hk = column(&g, n, 5);
    let interf = mean_over_rows(&g, n, W);
    let block = |off: usize| {
        CMat::from_fn(n, n, |r, m| {
            Complex64::new(g.get(r, 0, W + 1 + off * n + m), g.get(r, 0, W + 1 + (off + 1) * n + m))
        })
    };
    let own = hk.dotc(&wk);
    let (z_new, u_new) = receiver_from_powers(own, interf + own.norm_sqr() + sigma2);
    let (ak, ck) = ps_user_covariances(&hk, uk, zk);
    let a = block(0) + ak;
    let c = block(2) + ck;
    let dual = PowerDual::new(&a, &c, p_max);
    let w_new = dual.solve(&(&hk * (uk * zk)));
    let mut data = Vec::with_capacity(n * W);
    for r in 0..n {
        data.extend_from_slice(&[w_new[r].re, w_new[r].im, u_new.re, u_new.im, z_new, hk[r].re, hk[r].im]);
    }
    SetTensor::new(Tensor::new(vec![n, W], data)?, x.axes.clone())
}

impl RiePs {
    pub fn new(p_max: f64, sigma2: f64) -> Result<Self> {
        let q = Opaque::new("q_S", vec![TemplateKind::ApeI], Some(2 * W), None, q_s);
        let f = Opaque::new("f_S", vec![TemplateKind::ApeI], None, Some(W), move |x| {
            f_s(x, p_max, sigma2)
        });
        let t = OneSetTemplate::ape_ii(f, q)?;
        Ok(Self {
            stack: RecursionStack::new(vec![0, 1], Arc::new(t))?,
        })
    }
}

impl RieStep for RiePs {
    fn stack(&self) -> &RecursionStack {
        &self.stack
    }

    fn layout(&self) -> Layout {
        Layout::Ps
    }
}

pub fn encode_ps(inst: &PsInstance, s: &PsState) -> RepresentationState {
    let (n, k) = (inst.antennas(), inst.users());
    let mut data = Vec::with_capacity(k * n * W);
    for j in 0..k {
        for r in 0..n {
            let (w, h) = (s.w[(r, j)], inst.h[(r, j)]);
            data.extend_from_slice(&[w.re, w.im, s.u[j].re, s.u[j].im, s.z[j], h.re, h.im]);
        }
    }
    RepresentationState {
        d: SetTensor::normal(Tensor::new(vec![k, n, W], data).unwrap()).unwrap(),
        layout: Layout::Ps,
    }
}

/// Solver state and channel matrix; receivers are read from the first antenna row.
pub fn decode_ps(s: &RepresentationState) -> Result<(PsState, CMat)> {
    let sh = s.d.value.shape();
    if s.layout != Layout::Ps || sh.len() != 3 || sh[2] != W {
        return Err(contract("not a PS representation"));
    }
    let (k, n) = (sh[0], sh[1]);
    let at = |j: usize, r: usize, slot: usize| s.d.value.data()[(j * n + r) * W + slot];
    let cx = |j, r, slot| Complex64::new(at(j, r, slot), at(j, r, slot + 1));
    let w = CMat::from_fn(n, k, |r, j| cx(j, r, 0));
    let h = CMat::from_fn(n, k, |r, j| cx(j, r, 5));
    let u = (0..k).map(|j| cx(j, 0, 2)).collect();
    let z = (0..k).map(|j| at(j, 0, 4)).collect();
    Ok((PsState { w, u, z }, h))
}
