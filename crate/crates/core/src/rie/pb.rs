//! Bandwidth and power allocation: an APE-I template over users.

use std::sync::Arc;

use super::{Layout, RepresentationState, RieStep};
use crate::baselines::gd_pb::{pb_lambda_update, pb_user_update, PbStepParams};
use crate::baselines::{PbInstance, PbState};
use crate::error::{contract, Result};
use crate::pe::{OneSetTemplate, Pointwise, RecursionStack, SetTensor};
use crate::tensor::Tensor;

pub struct RiePb {
    stack: RecursionStack,
}

impl RiePb {
    /// `q_B` reads the power slot; `f_B` adds the user's own power back to
    /// the pooled powers of the others and applies the per-user update.
    pub fn new(params: PbStepParams) -> Result<Self> {
        let q = Pointwise::select(5, &[0]);
        let f = Pointwise::new("f_B", 6, 5, move |x| {
            let total = x[0] + x[5];
            let (p, b, mu) = pb_user_update(x[0], x[1], x[2], x[3], total, x[4], &params);
            let lambda = pb_lambda_update(x[3], total, &params);
            Ok(vec![p, b, mu, lambda, x[4]])
        });
        let t = OneSetTemplate::ape_i(f, q)?;
        Ok(Self {
            stack: RecursionStack::new(vec![0], Arc::new(t))?,
        })
    }
}

impl RieStep for RiePb {
    fn stack(&self) -> &RecursionStack {
        &self.stack
    }

    fn layout(&self) -> Layout {
        Layout::Pb
    }
}

pub fn encode_pb(inst: &PbInstance, s: &PbState) -> RepresentationState {
    let k = inst.g.len();
    let mut data = Vec::with_capacity(5 * k);
    for i in 0..k {
        data.extend_from_slice(&[s.p[i], s.b[i], s.mu[i], s.lambda, inst.g[i]]);
    }
    RepresentationState {
        d: SetTensor::normal(Tensor::new(vec![k, 5], data).unwrap()).unwrap(),
        layout: Layout::Pb,
    }
}

/// Solver state and gains; the multiplier of the power budget is read
/// from the first user.
pub fn decode_pb(s: &RepresentationState) -> Result<(PbState, Vec<f64>)> {
    if s.layout != Layout::Pb || s.d.value.shape().len() != 2 || s.d.width() != 5 {
        return Err(contract("not a PB representation"));
    }
    let x = s.d.value.data();
    let k = s.d.set_len();
    let col = |c: usize| (0..k).map(|i| x[i * 5 + c]).collect::<Vec<_>>();
    let lambda = if k > 0 { x[3] } else { 0.0 };
    Ok((
        PbState {
            p: col(0),
            b: col(1),
            mu: col(2),
            lambda,
        },
        col(4),
    ))
}
