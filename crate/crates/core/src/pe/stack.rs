use std::sync::Arc;

use super::{SetAxis, SetFunction, SetTensor, Structure};
use crate::error::{contract, shape_err, Result};
use crate::tensor::{kernels, Tensor};

/// `phi * mask + x * (1 - mask)`, elementwise.
pub fn output_function(phi: &Tensor, x: &Tensor, mask: &Tensor) -> Result<Tensor> {
    if phi.shape() != x.shape() || phi.shape() != mask.shape() {
        return Err(shape_err(
            "output_function",
            format!("{:?}, {:?}, {:?}", phi.shape(), x.shape(), mask.shape()),
        ));
    }
    let data = phi
        .data()
        .iter()
        .zip(x.data())
        .zip(mask.data())
        .map(|((p, x), m)| p * m + x * (1.0 - m))
        .collect();
    Tensor::new(phi.shape().to_vec(), data)
}

pub fn identity_mask(k: usize) -> Tensor {
    Tensor::eye(k)
}

/// Block-diagonal ones: `subsets` blocks of `rows x cols`.
pub fn block_mask(subsets: usize, rows: usize, cols: usize) -> Tensor {
    let (r, c) = (subsets * rows, subsets * cols);
    let mut data = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            if i / rows == j / cols {
                data[i * c + j] = 1.0;
            }
        }
    }
    Tensor::from_parts(vec![r, c], data)
}

/// Composition of one-set templates over every set axis, applied in
/// `order` (outermost first), with an optional joint output function
/// between two axes.
#[derive(Clone, Debug)]
pub struct RecursionStack {
    order: Vec<usize>,
    root: Arc<dyn SetFunction>,
    joint: Option<(usize, usize)>,
}

fn outer_index(axis: SetAxis, i: usize) -> usize {
    match axis {
        SetAxis::Normal => i,
        SetAxis::Nested { subset_size, .. } => i / subset_size,
    }
}

impl RecursionStack {
    /// `order[r]` is the tensor set axis handled by recursion `r`.
    pub fn new(order: Vec<usize>, root: Arc<dyn SetFunction>) -> Result<Self> {
        let n = order.len();
        let mut seen = vec![false; n];
        for &a in &order {
            if a >= n {
                return Err(contract(format!("recursion order names axis {a} of {n}")));
            }
            if std::mem::replace(&mut seen[a], true) {
                return Err(contract(format!("set axis {a} is covered twice")));
            }
        }
        if root.depth() != n {
            return Err(contract(format!(
                "stack of depth {} over {n} set axes",
                root.depth()
            )));
        }
        Ok(Self {
            order,
            root,
            joint: None,
        })
    }

    /// Attaches the output function joining set axes `a` and `b`: entries
    /// whose subset-level indices agree on both axes take the new value,
    /// all others keep the input.
    pub fn with_output_function(mut self, a: usize, b: usize) -> Result<Self> {
        let n = self.order.len();
        if a >= n || b >= n || a == b {
            return Err(contract(format!("invalid joint axes ({a}, {b})")));
        }
        if let (Some(i), Some(o)) = (self.root.in_width(), self.root.out_width()) {
            if i != o {
                return Err(contract("output function needs equal input and output widths"));
            }
        }
        self.joint = Some((a, b));
        Ok(self)
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn joint(&self) -> Option<(usize, usize)> {
        self.joint
    }

    pub fn structure(&self) -> Structure {
        self.root.structure()
    }

    pub fn params(&self) -> Vec<(String, Tensor)> {
        self.root.params()
    }

    /// Mask over the full tensor shape of `x`.
    pub fn joint_mask(&self, x: &SetTensor) -> Option<Tensor> {
        let (a, b) = self.joint?;
        let shape = x.value.shape();
        let mut data = Vec::with_capacity(x.value.len());
        let nd = shape.len();
        let mut idx = vec![0usize; nd];
        for _ in 0..x.value.len() {
            let same = outer_index(x.axes[a], idx[a]) == outer_index(x.axes[b], idx[b]);
            data.push(if same { 1.0 } else { 0.0 });
            for d in (0..nd).rev() {
                idx[d] += 1;
                if idx[d] < shape[d] {
                    break;
                }
                idx[d] = 0;
            }
        }
        Some(Tensor::from_parts(shape.to_vec(), data))
    }

    pub fn apply(&self, x: &SetTensor) -> Result<SetTensor> {
        let n = self.order.len();
        if x.depth() != n {
            return Err(contract(format!("stack over {n} sets applied to {} set axes", x.depth())));
        }
        let mut perm = self.order.clone();
        perm.push(n);
        let moved = SetTensor::new(
            kernels::permute_axes(&x.value, &perm)?,
            self.order.iter().map(|&a| x.axes[a]).collect(),
        )?;
        let y = self.root.apply(&moved)?;
        let mut inv = vec![0; n + 1];
        for (i, &p) in perm.iter().enumerate() {
            inv[p] = i;
        }
        let back = kernels::permute_axes(&y.value, &inv)?;
        let value = match self.joint_mask(x) {
            Some(mask) => output_function(&back, &x.value, &mask)?,
            None => back,
        };
        SetTensor::new(value, x.axes.clone())
    }
}
