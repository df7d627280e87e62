//! Differentiable building blocks on the gradient tape.

use crate::error::{shape_err, Result};
use crate::pe::PoolOp;
use crate::tensor::Var;

/// `x W (+ b)` over the last axis; `w` is `[in, out]`.
pub fn linear<'t>(x: Var<'t>, w: Var<'t>, b: Option<Var<'t>>) -> Result<Var<'t>> {
    let shape = x.shape();
    let ws = w.shape();
    let last = *shape.last().unwrap();
    if ws.len() != 2 || ws[0] != last {
        return Err(shape_err("linear", format!("{shape:?} x {ws:?}")));
    }
    let rows = shape[..shape.len() - 1].iter().product::<usize>();
    let mut y = x.reshape(&[rows, last])?.matmul(w)?;
    if let Some(b) = b {
        y = y.add_bias(b)?;
    }
    let mut out = shape;
    *out.last_mut().unwrap() = ws[1];
    y.reshape(&out)
}

/// Pools over every other element along `axis`; an element with no
/// neighbours receives zeros.
pub fn pool_others<'t>(x: Var<'t>, axis: usize, op: PoolOp) -> Result<Var<'t>> {
    let n = x.shape()[axis];
    let all = x.sum_axis(axis)?.expand_axis(axis, n)?;
    let others = all.sub(x)?;
    Ok(match op {
        PoolOp::Mean if n > 1 => others.scale(1.0 / (n - 1) as f64),
        _ => others,
    })
}

/// Graph-convolution update `σ(V d_k + Σ_{j≠k} U d_j)` on `d: [K, F]`, with
/// `v, u: [F, O]` and σ the rectifier when `activate`.
pub fn gcn_update<'t>(d: Var<'t>, v: Var<'t>, u: Var<'t>, activate: bool) -> Result<Var<'t>> {
    let own = d.matmul(v)?;
    let others = pool_others(d, 0, PoolOp::Sum)?.matmul(u)?;
    let y = own.add(others)?;
    Ok(if activate { y.relu() } else { y })
}

/// Row-wise softmax of `scale * q k^T` for `q, k: [B, N, D]`, giving `[B, N, N]`.
pub fn attention_weights<'t>(q: Var<'t>, k: Var<'t>, scale: f64) -> Result<Var<'t>> {
    let logits = q.bmm(k.transpose_last2()?)?.scale(scale);
    let nd = logits.shape().len();
    logits.softmax_axis(nd - 1)
}

/// Transformer-encoder update on token representations `d: [K, F]`:
/// `FFN(d_k + Σ_j softmax_j((U_q d_k)^T (U_k d_j)) U_v d_j)` with the self
/// term inside the softmax. Weights are `[F, dh]`, `[F, dh]`, `[F, F]`.
pub fn attention_update<'t, F>(
    d: Var<'t>,
    uq: Var<'t>,
    uk: Var<'t>,
    uv: Var<'t>,
    ffn: F,
) -> Result<Var<'t>>
where
    F: FnOnce(Var<'t>) -> Result<Var<'t>>,
{
    let s = d.shape();
    if s.len() != 2 {
        return Err(shape_err("attention_update", format!("{s:?}")));
    }
    let as3 = |v: Var<'t>| {
        let w = v.shape()[1];
        v.reshape(&[1, s[0], w])
    };
    let q = as3(d.matmul(uq)?)?;
    let k = as3(d.matmul(uk)?)?;
    let v = as3(d.matmul(uv)?)?;
    let a = attention_weights(q, k, 1.0)?;
    let mixed = a.bmm(v)?.reshape(&[s[0], uv.shape()[1]])?;
    ffn(d.add(mixed)?)
}
