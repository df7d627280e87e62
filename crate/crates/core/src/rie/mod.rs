//! Re-expressed iterative equations: each solver step written as a
//! recursion of one-set templates over the sets of its problem.

pub mod pb;
pub mod pc;
pub mod pm;
pub mod ps;
mod verify;

pub use pb::RiePb;
pub use pc::RiePc;
pub use pm::RiePm;
pub use ps::RiePs;
pub use verify::{verify_rie_equivalence, EquivalenceConfig, EquivalenceReport, TrialTrace};

use num_complex::Complex64;

use crate::error::{contract, Result};
use crate::pe::{RecursionStack, SetTensor};
use crate::tensor::Tensor;

/// Which symbols occupy the feature slots of a representation tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// `[users, 5]`: `p, B, mu, lambda, g`.
    Pb,
    /// `[users, antennas, 7]`: `Re w, Im w, Re u, Im u, z, Re h, Im h`.
    Ps,
    /// `[users*streams, users*ue_antennas, bs_antennas, 6]`:
    /// `Re u, Im u, Re w, Im w, Re h, Im h`, zero outside the user's own block.
    Pm { users: usize, streams: usize, ue_antennas: usize },
    /// `[tx, rx, 6]`: diagonal `v, u, z, g_kk, 0, 0`; off-diagonal
    /// `0, 0, 0, 0, g[rx][tx], g[tx][rx]`.
    Pc,
}

impl Layout {
    pub fn slots(&self) -> &'static [&'static str] {
        match self {
            Layout::Pb => &["p", "B", "mu", "lambda", "g"],
            Layout::Ps => &["re_w", "im_w", "re_u", "im_u", "z", "re_h", "im_h"],
            Layout::Pm { .. } => &["re_u", "im_u", "re_w", "im_w", "re_h", "im_h"],
            Layout::Pc => &["v", "u", "z", "g_self", "g_in", "g_out"],
        }
    }
}

/// A representation tensor with its layout.
#[derive(Clone, Debug, PartialEq)]
pub struct RepresentationState {
    pub d: SetTensor,
    pub layout: Layout,
}

impl RepresentationState {
    pub fn max_abs_diff(&self, o: &RepresentationState) -> Option<f64> {
        self.d.value.max_abs_diff(&o.d.value)
    }
}

/// One iteration of a solver as a recursion stack.
pub trait RieStep {
    fn stack(&self) -> &RecursionStack;
    fn layout(&self) -> Layout;

    fn check_state(&self, s: &RepresentationState) -> Result<()> {
        if s.layout != self.layout() {
            return Err(contract(format!(
                "state layout {:?} does not match step layout {:?}",
                s.layout,
                self.layout()
            )));
        }
        let w = self.layout().slots().len();
        if s.d.width() != w {
            return Err(contract(format!("state has {} feature slots, layout has {w}", s.d.width())));
        }
        Ok(())
    }

    fn step(&self, s: &RepresentationState) -> Result<RepresentationState> {
        self.check_state(s)?;
        Ok(RepresentationState {
            d: self.stack().apply(&s.d)?,
            layout: s.layout,
        })
    }
}

/// Row-major feature access on a `[rows, cols, features]` tensor.
pub(crate) struct Grid<'a> {
    data: &'a [f64],
    cols: usize,
    width: usize,
}

impl<'a> Grid<'a> {
    pub(crate) fn new(t: &'a Tensor) -> Self {
        let s = t.shape();
        let (cols, width) = match s.len() {
            2 => (1, s[1]),
            _ => (s[s.len() - 2], s[s.len() - 1]),
        };
        Self {
            data: t.data(),
            cols,
            width,
        }
    }

    pub(crate) fn get(&self, r: usize, c: usize, slot: usize) -> f64 {
        self.data[(r * self.cols + c) * self.width + slot]
    }

    pub(crate) fn c(&self, r: usize, c: usize, slot: usize) -> Complex64 {
        Complex64::new(self.get(r, c, slot), self.get(r, c, slot + 1))
    }
}
