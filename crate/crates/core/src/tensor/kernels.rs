//! Forward kernels on plain tensors. The tape wraps these and adds the
//! matching vector-Jacobian products.

use super::{axis_extents, Tensor};
use crate::error::{shape_err, Error, Result};

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

fn zip_with(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("add", a, b)?;
    Ok(zip_with(a, b, |x, y| x + y))
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("sub", a, b)?;
    Ok(zip_with(a, b, |x, y| x - y))
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    same_shape("mul", a, b)?;
    Ok(zip_with(a, b, |x, y| x * y))
}

pub fn scale(a: &Tensor, c: f64) -> Tensor {
    a.map(|x| x * c)
}

pub fn add_scalar(a: &Tensor, c: f64) -> Tensor {
    a.map(|x| x + c)
}

/// Adds a bias vector along the last axis.
pub fn add_bias(a: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let last = *a.shape().last().unwrap();
    if bias.shape() != [last] {
        return Err(shape_err(
            "add_bias",
            format!("bias {:?} for input {:?}", bias.shape(), a.shape()),
        ));
    }
    let b = bias.data();
    let data = a
        .data()
        .chunks(last)
        .flat_map(|row| row.iter().zip(b).map(|(x, y)| x + y))
        .collect();
    Ok(Tensor::from_parts(a.shape().to_vec(), data))
}

/// `c (+)= op(a) * op(b)` for row-major `m x k` and `k x n` operands.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths are checked above and strides describe exactly
    // those row-major buffers.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(shape_err("matmul", format!("{:?} x {:?}", a.shape(), b.shape())));
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    gemm(m, k, n, a.data(), false, b.data(), false, &mut out, false);
    Ok(Tensor::from_parts(vec![m, n], out))
}

/// Batched matrix product `[B, m, k] x [B, k, n] -> [B, m, n]`.
pub fn bmm(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.ndim() != 3 || b.ndim() != 3 || a.shape()[0] != b.shape()[0] || a.shape()[2] != b.shape()[1]
    {
        return Err(shape_err("bmm", format!("{:?} x {:?}", a.shape(), b.shape())));
    }
    let (bt, m, k, n) = (a.shape()[0], a.shape()[1], a.shape()[2], b.shape()[2]);
    let mut out = vec![0.0; bt * m * n];
    for i in 0..bt {
        gemm(
            m,
            k,
            n,
            &a.data()[i * m * k..(i + 1) * m * k],
            false,
            &b.data()[i * k * n..(i + 1) * k * n],
            false,
            &mut out[i * m * n..(i + 1) * m * n],
            false,
        );
    }
    Ok(Tensor::from_parts(vec![bt, m, n], out))
}

/// Swaps the last two axes.
pub fn transpose_last2(a: &Tensor) -> Result<Tensor> {
    let nd = a.ndim();
    if nd < 2 {
        return Err(shape_err("transpose_last2", format!("{:?}", a.shape())));
    }
    let mut perm: Vec<usize> = (0..nd).collect();
    perm.swap(nd - 2, nd - 1);
    permute_axes(a, &perm)
}

pub fn permute_axes(a: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let nd = a.ndim();
    let mut seen = vec![false; nd];
    if perm.len() != nd || perm.iter().any(|&p| p >= nd || std::mem::replace(&mut seen[p], true)) {
        return Err(shape_err(
            "permute_axes",
            format!("{perm:?} is not a permutation of {nd} axes"),
        ));
    }
    let in_shape = a.shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let mut in_strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
    }
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = a.len();
    let mut out = Vec::with_capacity(n);
    let mut idx = vec![0usize; nd];
    let src = a.data();
    for _ in 0..n {
        let off: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.push(src[off]);
        for d in (0..nd).rev() {
            idx[d] += 1;
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
        }
    }
    Ok(Tensor::from_parts(out_shape, out))
}

fn check_axis(op: &'static str, a: &Tensor, axis: usize) -> Result<()> {
    if axis >= a.ndim() {
        return Err(shape_err(op, format!("axis {axis} out of range for {:?}", a.shape())));
    }
    Ok(())
}

fn removed_axis_shape(shape: &[usize], axis: usize) -> Vec<usize> {
    let mut out: Vec<usize> = shape.to_vec();
    out.remove(axis);
    if out.is_empty() {
        out.push(1);
    }
    out
}

/// Sums over `axis`, removing it. Reducing a rank-1 tensor yields shape `[1]`.
pub fn sum_axis(a: &Tensor, axis: usize) -> Result<Tensor> {
    check_axis("sum_axis", a, axis)?;
    let (outer, n, inner) = axis_extents(a.shape(), axis);
    let src = a.data();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for i in 0..n {
            let row = &src[(o * n + i) * inner..(o * n + i + 1) * inner];
            for (acc, &x) in out[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                *acc += x;
            }
        }
    }
    Ok(Tensor::from_parts(removed_axis_shape(a.shape(), axis), out))
}

/// Inserts a new axis of length `n` at position `axis`, repeating values.
pub fn expand_axis(a: &Tensor, axis: usize, n: usize) -> Result<Tensor> {
    if axis > a.ndim() || n == 0 {
        return Err(shape_err(
            "expand_axis",
            format!("axis {axis}, len {n} for {:?}", a.shape()),
        ));
    }
    let outer: usize = a.shape()[..axis].iter().product();
    let inner: usize = a.shape()[axis..].iter().product();
    let src = a.data();
    let mut out = Vec::with_capacity(outer * n * inner);
    for o in 0..outer {
        let row = &src[o * inner..(o + 1) * inner];
        for _ in 0..n {
            out.extend_from_slice(row);
        }
    }
    let mut shape = a.shape().to_vec();
    shape.insert(axis, n);
    Ok(Tensor::from_parts(shape, out))
}

pub fn concat_axis(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| shape_err("concat_axis", "no inputs"))?;
    check_axis("concat_axis", first, axis)?;
    for p in parts {
        let ok = p.ndim() == first.ndim()
            && p
                .shape()
                .iter()
                .zip(first.shape())
                .enumerate()
                .all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(shape_err(
                "concat_axis",
                format!("{:?} vs {:?} along axis {axis}", first.shape(), p.shape()),
            ));
        }
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let widths: Vec<usize> = parts
        .iter()
        .map(|p| p.shape()[axis..].iter().product())
        .collect();
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(outer * total);
    for o in 0..outer {
        for (p, &w) in parts.iter().zip(&widths) {
            out.extend_from_slice(&p.data()[o * w..(o + 1) * w]);
        }
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = parts.iter().map(|p| p.shape()[axis]).sum();
    Ok(Tensor::from_parts(shape, out))
}

pub fn slice_axis(a: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    check_axis("slice_axis", a, axis)?;
    let (outer, n, inner) = axis_extents(a.shape(), axis);
    if len == 0 || start + len > n {
        return Err(shape_err(
            "slice_axis",
            format!("[{start}, {}) of axis {axis} in {:?}", start + len, a.shape()),
        ));
    }
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * n + start) * inner;
        out.extend_from_slice(&a.data()[base..base + len * inner]);
    }
    let mut shape = a.shape().to_vec();
    shape[axis] = len;
    Ok(Tensor::from_parts(shape, out))
}

pub fn relu(a: &Tensor) -> Tensor {
    a.map(|x| x.max(0.0))
}

pub fn exp(a: &Tensor) -> Result<Tensor> {
    let out = a.map(f64::exp);
    if !out.all_finite() {
        return Err(Error::Domain {
            op: "exp",
            detail: "overflow to a non-finite value".into(),
        });
    }
    Ok(out)
}

pub fn log(a: &Tensor) -> Result<Tensor> {
    if let Some(x) = a.data().iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Domain {
            op: "log",
            detail: format!("argument {x} is not strictly positive"),
        });
    }
    Ok(a.map(f64::ln))
}

pub fn reciprocal(a: &Tensor) -> Result<Tensor> {
    if let Some(x) = a.data().iter().find(|&&x| x == 0.0 || !x.is_finite()) {
        return Err(Error::Domain {
            op: "reciprocal",
            detail: format!("argument {x} has no finite reciprocal"),
        });
    }
    Ok(a.map(|x| 1.0 / x))
}

/// Clamps into `[lo, hi]`; either bound may be infinite.
pub fn clip(a: &Tensor, lo: f64, hi: f64) -> Tensor {
    a.map(|x| x.clamp(lo, hi))
}

pub fn softmax_axis(a: &Tensor, axis: usize) -> Result<Tensor> {
    check_axis("softmax_axis", a, axis)?;
    let (outer, n, inner) = axis_extents(a.shape(), axis);
    let src = a.data();
    let mut out = vec![0.0; a.len()];
    for o in 0..outer {
        for r in 0..inner {
            let at = |i: usize| (o * n + i) * inner + r;
            let m = (0..n).map(|i| src[at(i)]).fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for i in 0..n {
                let e = (src[at(i)] - m).exp();
                out[at(i)] = e;
                z += e;
            }
            for i in 0..n {
                out[at(i)] /= z;
            }
        }
    }
    Ok(Tensor::from_parts(a.shape().to_vec(), out))
}

/// Euclidean norm over `axis`, removing it.
pub fn norm_axis(a: &Tensor, axis: usize) -> Result<Tensor> {
    let sq = a.map(|x| x * x);
    Ok(sum_axis(&sq, axis)?.map(f64::sqrt))
}

/// Euclidean norm of all entries.
pub fn norm(a: &Tensor) -> f64 {
    a.data().iter().map(|x| x * x).sum::<f64>().sqrt()
}
