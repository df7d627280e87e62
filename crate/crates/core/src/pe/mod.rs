//! One-set permutation-equivariant templates, their recursive composition
//! over several sets, and the joint-PE output function.
//!
//! A [`SetTensor`] stores one axis per set followed by a feature axis. Every
//! [`SetFunction`] consumes a fixed number of leading set axes (its depth)
//! and maps features to features; templates at depth `d` hold combiners and
//! processors of depth `d - 1`.

mod leaf;
mod params;
mod stack;
mod template;

pub use leaf::{Fnn, Opaque, Pointwise};
pub use params::{read_params, write_params, ParamSet};
pub use stack::{block_mask, identity_mask, output_function, RecursionStack};
pub use template::{OneSetTemplate, Pooling, PoolOp, Processor, ProcessorKind, TemplateKind};

use std::fmt::Debug;

use crate::error::{contract, Result};
use crate::tensor::{kernels, Tensor};

/// Structure of a set axis, needed by nested templates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SetAxis {
    Normal,
    Nested { subsets: usize, subset_size: usize },
}

/// A tensor shaped `[set axes..., features]` with per-axis set metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct SetTensor {
    pub value: Tensor,
    pub axes: Vec<SetAxis>,
}

impl SetTensor {
    pub fn new(value: Tensor, axes: Vec<SetAxis>) -> Result<Self> {
        if value.ndim() != axes.len() + 1 {
            return Err(contract(format!(
                "{} set axes declared for a tensor of shape {:?}",
                axes.len(),
                value.shape()
            )));
        }
        for (i, a) in axes.iter().enumerate() {
            if let SetAxis::Nested {
                subsets,
                subset_size,
            } = *a
            {
                if subsets * subset_size != value.shape()[i] {
                    return Err(contract(format!(
                        "nested axis {i} declares {subsets}x{subset_size} but has length {}",
                        value.shape()[i]
                    )));
                }
            }
        }
        Ok(Self { value, axes })
    }

    /// A tensor whose axes are all normal sets.
    pub fn normal(value: Tensor) -> Result<Self> {
        let n = value.ndim().saturating_sub(1);
        Self::new(value, vec![SetAxis::Normal; n])
    }

    pub fn depth(&self) -> usize {
        self.axes.len()
    }

    pub fn width(&self) -> usize {
        *self.value.shape().last().unwrap()
    }

    /// Length of the leading set axis.
    pub fn set_len(&self) -> usize {
        self.value.shape()[0]
    }

    /// The element at index `i` of the leading set axis.
    pub fn element(&self, i: usize) -> SetTensor {
        SetTensor {
            value: self.value.index_axis0(i),
            axes: self.axes[1..].to_vec(),
        }
    }

    /// Concatenates feature axes of equally shaped set tensors.
    pub fn concat_features(parts: &[&SetTensor]) -> Result<SetTensor> {
        let first = parts[0];
        let values: Vec<&Tensor> = parts.iter().map(|p| &p.value).collect();
        let v = kernels::concat_axis(&values, first.value.ndim() - 1)?;
        Ok(SetTensor {
            value: v,
            axes: first.axes.clone(),
        })
    }

    /// Stacks elements along a new leading set axis.
    pub fn stack(parts: &[SetTensor], axis: SetAxis) -> Result<SetTensor> {
        let values: Vec<Tensor> = parts.iter().map(|p| p.value.clone()).collect();
        let mut axes = vec![axis];
        axes.extend_from_slice(&parts[0].axes);
        SetTensor::new(Tensor::stack(&values)?, axes)
    }

    pub fn zeros_like_width(&self, width: usize) -> SetTensor {
        let mut shape = self.value.shape().to_vec();
        *shape.last_mut().unwrap() = width;
        SetTensor {
            value: Tensor::zeros(&shape),
            axes: self.axes.clone(),
        }
    }
}

/// Description of a function's composition, for structural assertions.
#[derive(Clone, Debug, PartialEq)]
pub enum Structure {
    Leaf {
        name: String,
    },
    /// A hand-written function standing in for a stack of templates of the
    /// declared kinds, outermost first.
    Opaque {
        name: String,
        kinds: Vec<TemplateKind>,
    },
    Template {
        kind: TemplateKind,
        combiner: Box<Structure>,
        processors: Vec<(ProcessorKind, Structure)>,
    },
}

impl Structure {
    /// Recursion levels (0 = outermost) of every attention processor slot.
    pub fn attention_levels(&self) -> Vec<usize> {
        let mut out = Vec::new();
        self.collect_attention(0, &mut out);
        out
    }

    fn collect_attention(&self, level: usize, out: &mut Vec<usize>) {
        match self {
            Structure::Leaf { .. } => {}
            Structure::Opaque { kinds, .. } => {
                for (i, k) in kinds.iter().enumerate() {
                    if k.has_attention() {
                        out.push(level + i);
                    }
                }
            }
            Structure::Template {
                combiner,
                processors,
                ..
            } => {
                for (pk, s) in processors {
                    if *pk == ProcessorKind::Attention {
                        out.push(level);
                    }
                    s.collect_attention(level + 1, out);
                }
                combiner.collect_attention(level + 1, out);
            }
        }
    }

    /// Template kind at the outermost level, if any.
    pub fn kind(&self) -> Option<TemplateKind> {
        match self {
            Structure::Template { kind, .. } => Some(*kind),
            Structure::Opaque { kinds, .. } => kinds.first().copied(),
            Structure::Leaf { .. } => None,
        }
    }
}

/// A permutation-equivariant map over the leading `depth()` set axes.
pub trait SetFunction: Send + Sync + Debug {
    /// Number of leading set axes consumed.
    fn depth(&self) -> usize;
    /// Required input feature width; `None` accepts any width.
    fn in_width(&self) -> Option<usize>;
    /// Produced feature width; `None` when it depends on the input sizes.
    fn out_width(&self) -> Option<usize>;
    fn apply(&self, x: &SetTensor) -> Result<SetTensor>;
    fn structure(&self) -> Structure;
    /// Named parameters in a stable order.
    fn params(&self) -> Vec<(String, Tensor)> {
        Vec::new()
    }
}

pub(crate) fn check_input(f: &dyn SetFunction, x: &SetTensor) -> Result<()> {
    if x.depth() != f.depth() {
        return Err(contract(format!(
            "function of depth {} applied to {} set axes",
            f.depth(),
            x.depth()
        )));
    }
    if let Some(w) = f.in_width() {
        if w != x.width() {
            return Err(contract(format!(
                "function expects feature width {w}, got {}",
                x.width()
            )));
        }
    }
    Ok(())
}
