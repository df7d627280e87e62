//! Interference-channel WMMSE power control: APE-I templates over
//! transmitters and receivers with a joint output function.

use std::sync::Arc;

use nalgebra::DMatrix;

use super::{Layout, RepresentationState, RieStep};
use crate::baselines::{PcInstance, PcState};
use crate::error::{contract, Result};
use crate::pe::{OneSetTemplate, Pointwise, Pooling, PoolOp, RecursionStack, SetTensor};
use crate::tensor::Tensor;

const W: usize = 6;

fn safe_div(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

pub struct RiePc {
    stack: RecursionStack,
}

fn all_pool() -> Pooling {
    Pooling {
        op: PoolOp::Sum,
        include_self: true,
    }
}

impl RiePc {
    pub fn new(p_max: f64, sigma2: f64) -> Result<Self> {
        // q_C over receivers of one transmitter column: recover (v, u, z) by
        // pooling, then weight the squared gains of every receiver entry.
        let q_inner = Pointwise::select(W, &[0, 1, 2]);
        let q_comb = Pointwise::new("q_C.f", W + 3, 2, |x| {
            let (v, u, z) = (x[6], x[7], x[8]);
            let gin = x[4] * x[4] + x[3] * x[3];
            let gout = x[5] * x[5] + x[3] * x[3];
            Ok(vec![v * v * gin, z * u * u * gout])
        });
        let q_c = OneSetTemplate::ape_i(q_comb, q_inner)?.with_pooling(all_pool())?;

        // f_C over receivers: the diagonal entry is the only one with a
        // nonzero own gain, so gain-weighted pooling isolates it.
        let f_inner = Pointwise::new("f_C.q", W + 2, W, |x| {
            Ok(vec![x[0], x[1], x[2], x[3], x[3] * x[6], x[3] * x[7]])
        });
        let f_comb = Pointwise::new("f_C.f", W + 2 + W, W, move |x| {
            let y = &x[W + 2..];
            let (v, u, z, g) = (y[0], y[1], y[2], y[3]);
            let a = safe_div(y[4], g);
            let b = safe_div(y[5], g);
            let u_new = v * g / (a + sigma2);
            let z_new = 1.0 / (1.0 - u_new * v * g);
            let v_new = safe_div(z * u * g, b).clamp(0.0, p_max.sqrt());
            Ok(vec![v_new, u_new, z_new, g, x[4], x[5]])
        });
        let f_c = OneSetTemplate::ape_i(f_comb, f_inner)?.with_pooling(all_pool())?;

        let root = OneSetTemplate::ape_i(f_c, q_c)?.with_pooling(all_pool())?;
        let stack = RecursionStack::new(vec![0, 1], Arc::new(root))?.with_output_function(0, 1)?;
        Ok(Self { stack })
    }
}

impl RieStep for RiePc {
    fn stack(&self) -> &RecursionStack {
        &self.stack
    }

    fn layout(&self) -> Layout {
        Layout::Pc
    }
}

pub fn encode_pc(gain: &DMatrix<f64>, s: &PcState) -> RepresentationState {
    let k = gain.nrows();
    let mut data = Vec::with_capacity(k * k * W);
    for t in 0..k {
        for r in 0..k {
            if t == r {
                data.extend_from_slice(&[s.v[t], s.u[t], s.z[t], gain[(t, t)], 0.0, 0.0]);
            } else {
                data.extend_from_slice(&[0.0, 0.0, 0.0, 0.0, gain[(r, t)], gain[(t, r)]]);
            }
        }
    }
    RepresentationState {
        d: SetTensor::normal(Tensor::new(vec![k, k, W], data).unwrap()).unwrap(),
        layout: Layout::Pc,
    }
}

pub fn encode_pc_instance(inst: &PcInstance, s: &PcState) -> RepresentationState {
    encode_pc(&inst.gain, s)
}

/// Solver state and gain matrix `(rx, tx)`.
pub fn decode_pc(s: &RepresentationState) -> Result<(PcState, DMatrix<f64>)> {
    let sh = s.d.value.shape();
    if s.layout != Layout::Pc || sh.len() != 3 || sh[0] != sh[1] || sh[2] != W {
        return Err(contract("not a PC representation"));
    }
    let k = sh[0];
    let at = |t: usize, r: usize, slot: usize| s.d.value.data()[(t * k + r) * W + slot];
    let gain = DMatrix::from_fn(k, k, |r, t| if r == t { at(t, t, 3) } else { at(t, r, 4) });
    Ok((
        PcState {
            v: (0..k).map(|i| at(i, i, 0)).collect(),
            u: (0..k).map(|i| at(i, i, 1)).collect(),
            z: (0..k).map(|i| at(i, i, 2)).collect(),
        },
        gain,
    ))
}
