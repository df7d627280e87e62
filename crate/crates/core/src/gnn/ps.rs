//! Multi-user MISO precoding with a GNN: features, the feasibility-scaled
//! output head and the differentiable sum spectral efficiency.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::descriptor::SetDescriptor;
use super::model::GnnModel;
use crate::baselines::{draw_channel, ChannelModel, CMat, PsInstance};
use crate::error::{contract, Result};
use crate::pe::SetAxis;
use crate::tensor::{Tape, Tensor, Var};

pub const PS_AXES: [SetAxis; 2] = [SetAxis::Normal, SetAxis::Normal];

/// Users carry interference that the channels do not expose; antennas do not.
pub fn ps_descriptors() -> Vec<SetDescriptor> {
    vec![SetDescriptor::normal("UE").interference(false), SetDescriptor::normal("AN")]
}

/// Transmitters and receivers are permuted jointly and the interference is
/// part of the gain matrix.
pub fn pc_descriptors() -> Vec<SetDescriptor> {
    vec![
        SetDescriptor::normal("Tx").joint(0).interference(true),
        SetDescriptor::normal("Rx").joint(0),
    ]
}

/// `[B, K, N, 2]` holding `(Re h_kn, Im h_kn)`; all instances must share sizes.
pub fn ps_features(batch: &[&PsInstance]) -> Result<Tensor> {
    let first = batch.first().ok_or_else(|| contract("empty batch"))?;
    let (n, k) = first.h.shape();
    let mut data = Vec::with_capacity(batch.len() * k * n * 2);
    for inst in batch {
        if inst.h.shape() != (n, k) {
            return Err(contract("instances in one batch must share sizes"));
        }
        for u in 0..k {
            for a in 0..n {
                let c = inst.h[(a, u)];
                data.push(c.re);
                data.push(c.im);
            }
        }
    }
    Tensor::new(vec![batch.len(), k, n, 2], data)
}

fn per_sample<'t>(tape: &'t Tape, values: Vec<f64>) -> Var<'t> {
    tape.constant(Tensor::from_vec(values))
}

/// Scales each sample's raw output `[B, K, N, 2]` by
/// `sqrt(P) / max(||W||_F, sqrt(P))`.
pub fn scale_to_power<'t>(raw: Var<'t>, p_max: &[f64]) -> Result<Var<'t>> {
    let s = raw.shape();
    let (b, k, n) = (s[0], s[1], s[2]);
    let root: Vec<f64> = p_max.iter().map(|p| p.sqrt()).collect();
    let norm = raw.reshape(&[b, k * n * 2])?.norm_axis(1)?;
    let floor = per_sample(raw.tape(), root.clone());
    let denom = norm.sub(floor)?.clip(0.0, f64::INFINITY).add(floor)?;
    let factor = denom.reciprocal()?.mul(floor)?;
    let factor = factor.expand_axis(1, k)?.expand_axis(2, n)?.expand_axis(3, 2)?;
    raw.mul(factor)
}

/// Per-sample sum SE `[B]` of precoders `w: [B, K, N, 2]`, in bit/s/Hz.
pub fn ps_sum_se<'t>(w: Var<'t>, batch: &[&PsInstance]) -> Result<Var<'t>> {
    let tape = w.tape();
    let s = w.shape();
    let (b, k, n) = (s[0], s[1], s[2]);
    let x = ps_features(batch)?;
    if x.shape() != s.as_slice() {
        return Err(contract(format!("precoders {s:?} do not match channels {:?}", x.shape())));
    }
    let hx = tape.constant(x);
    let part = |v: Var<'t>, i: usize| v.slice_axis(3, i, 1)?.reshape(&[b, k, n]);
    let (hr, hi) = (part(hx, 0)?, part(hx, 1)?);
    let (wr, wi) = (part(w, 0)?, part(w, 1)?);
    let (wrt, wit) = (wr.transpose_last2()?, wi.transpose_last2()?);
    // g[k][j] = h_k^H w_j
    let re = hr.bmm(wrt)?.add(hi.bmm(wit)?)?;
    let im = hr.bmm(wit)?.sub(hi.bmm(wrt)?)?;
    let power = re.square()?.add(im.square()?)?;
    let eye = Tensor::stack(&vec![Tensor::eye(k); b])?;
    let signal = power.mul(tape.constant(eye))?.sum_axis(2)?;
    let total = power.sum_axis(2)?;
    let noise: Vec<f64> = batch.iter().flat_map(|i| std::iter::repeat_n(i.sigma2, k)).collect();
    let noise = tape.constant(Tensor::new(vec![b, k], noise)?);
    let interference = total.sub(signal)?;
    let rate = total.add(noise)?.log()?.sub(interference.add(noise)?.log()?)?;
    Ok(rate.sum_axis(1)?.scale(std::f64::consts::LOG2_E))
}

/// Feasible precoders `[B, K, N, 2]` produced by `model` on a same-size batch.
pub fn ps_precoders<'t>(model: &GnnModel, params: &[Var<'t>], batch: &[&PsInstance]) -> Result<Var<'t>> {
    let tape = params
        .first()
        .map(|p| p.tape())
        .ok_or_else(|| contract("model without parameters"))?;
    let x = tape.constant(ps_features(batch)?);
    let raw = model.forward(params, x, &PS_AXES)?;
    let p: Vec<f64> = batch.iter().map(|i| i.p_max).collect();
    scale_to_power(raw, &p)
}

/// Negative sum SE summed over the batch.
pub fn ps_batch_loss<'t>(model: &GnnModel, params: &[Var<'t>], batch: &[&PsInstance]) -> Result<Var<'t>> {
    let w = ps_precoders(model, params, batch)?;
    Ok(ps_sum_se(w, batch)?.sum()?.scale(-1.0))
}

/// Converts one sample `[K, N, 2]` to an `N x K` complex precoder.
pub fn precoder_matrix(t: &Tensor) -> Result<CMat> {
    let s = t.shape();
    if s.len() != 3 || s[2] != 2 {
        return Err(contract(format!("precoder tensor {s:?}")));
    }
    let (k, n) = (s[0], s[1]);
    Ok(CMat::from_fn(n, k, |a, u| {
        Complex64::new(t.get(&[u, a, 0]), t.get(&[u, a, 1]))
    }))
}

/// Precoders for each instance, evaluated without gradients.
pub fn predict_precoders(model: &GnnModel, batch: &[&PsInstance]) -> Result<Vec<CMat>> {
    let tape = Tape::new();
    let params: Vec<Var<'_>> = model.params().iter().map(|(_, t)| tape.constant(t.clone())).collect();
    let w = ps_precoders(model, &params, batch)?;
    let w = w.value();
    (0..batch.len()).map(|i| precoder_matrix(&w.index_axis0(i))).collect()
}

/// How many users each generated sample has.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UserCount {
    Fixed { users: usize },
    /// `round(min + Exp(rate))`, shifted exponential with mean `min + 1/rate`
    /// and standard deviation `1/rate`, capped at `max`.
    ShiftedExponential { min: f64, rate: f64, max: usize },
}

impl Default for UserCount {
    fn default() -> Self {
        UserCount::Fixed { users: 3 }
    }
}

impl UserCount {
    /// Mean 2, standard deviation 1.
    pub fn training_mixture() -> Self {
        UserCount::ShiftedExponential {
            min: 1.0,
            rate: 1.0,
            max: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            UserCount::Fixed { users } if users == 0 => Err(contract("users must be positive")),
            UserCount::ShiftedExponential { min, rate, max } => {
                if !(min >= 0.5 && rate > 0.0 && rate.is_finite() && max >= 1) {
                    Err(contract("user mixture needs min >= 0.5, rate > 0 and max >= 1"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match *self {
            UserCount::Fixed { users } => users,
            UserCount::ShiftedExponential { min, rate, max } => {
                let e: f64 = Exp::new(rate).expect("validated rate").sample(rng);
                ((min + e).round() as usize).clamp(1, max)
            }
        }
    }
}

/// Random PS instances with the given antenna count.
pub fn ps_dataset<R: Rng + ?Sized>(
    count: usize,
    users: &UserCount,
    antennas: usize,
    p_max: f64,
    sigma2: f64,
    channel: &ChannelModel,
    rng: &mut R,
) -> Result<Vec<PsInstance>> {
    users.validate()?;
    if antennas == 0 || !(p_max > 0.0) || !(sigma2 > 0.0) {
        return Err(contract("antennas, p_max and sigma2 must be positive"));
    }
    Ok((0..count)
        .map(|_| {
            let k = users.sample(rng);
            PsInstance {
                h: draw_channel(antennas, k, channel, rng),
                p_max,
                sigma2,
            }
        })
        .collect())
}
