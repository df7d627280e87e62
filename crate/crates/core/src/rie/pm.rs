//! Approximate MU-MIMO WMMSE: an NPE-II template over data streams whose
//! functions act on the nested UE-antenna set and the BS-antenna set.

use std::sync::Arc;

use num_complex::Complex64;

use super::{Grid, Layout, RepresentationState, RieStep};
use crate::baselines::{CMat, PmFirstSumChannel, PmInstance, PmState};
use crate::error::{contract, Result};
use crate::pe::{OneSetTemplate, Opaque, RecursionStack, SetAxis, SetTensor, TemplateKind};
use crate::tensor::Tensor;

const W: usize = 6;
type C = Complex64;

pub struct RiePm {
    stack: RecursionStack,
    layout: Layout,
}

/// Geometry of one stream's panel `[users*ue_antennas, bs_antennas, features]`.
#[derive(Clone, Copy)]
struct Panel {
    blocks: usize,
    per: usize,
    nb: usize,
}

impl Panel {
    fn of(x: &SetTensor) -> Result<Self> {
        let SetAxis::Nested { subsets, subset_size } = x.axes[0] else {
            return Err(contract("PM panels need a nested UE-antenna axis"));
        };
        Ok(Self {
            blocks: subsets,
            per: subset_size,
            nb: x.value.shape()[1],
        })
    }

    fn rows(&self) -> usize {
        self.blocks * self.per
    }

    /// Per-row receive value, averaged over BS antennas.
    fn u(&self, g: &Grid<'_>, slot: usize) -> Vec<C> {
        (0..self.rows())
            .map(|r| (0..self.nb).map(|n| g.c(r, n, slot)).sum::<C>() / self.nb as f64)
            .collect()
    }

    /// Per-block precoder, averaged over the block's UE antennas.
    fn w_blocks(&self, g: &Grid<'_>, slot: usize) -> Vec<Vec<C>> {
        (0..self.blocks)
            .map(|b| {
                (0..self.nb)
                    .map(|n| (0..self.per).map(|e| g.c(b * self.per + e, n, slot)).sum::<C>() / self.per as f64)
                    .collect()
            })
            .collect()
    }

    /// Sum of the per-block precoders (only one block is nonzero on a valid state).
    fn w_total(&self, g: &Grid<'_>, slot: usize) -> Vec<C> {
        let wb = self.w_blocks(g, slot);
        (0..self.nb).map(|n| wb.iter().map(|b| b[n]).sum()).collect()
    }

    fn h(&self, g: &Grid<'_>, slot: usize) -> Vec<Vec<C>> {
        (0..self.rows()).map(|r| (0..self.nb).map(|n| g.c(r, n, slot)).collect()).collect()
    }

    /// `H w` row by row.
    fn apply(h: &[Vec<C>], w: &[C]) -> Vec<C> {
        h.iter().map(|row| row.iter().zip(w).map(|(a, b)| a * b).sum()).collect()
    }

    /// `H^H u` restricted to the rows of `block`, or all rows when `None`.
    fn adjoint(&self, h: &[Vec<C>], u: &[C], block: Option<usize>) -> Vec<C> {
        let rows: Vec<usize> = match block {
            Some(b) => (b * self.per..(b + 1) * self.per).collect(),
            None => (0..self.rows()).collect(),
        };
        (0..self.nb).map(|n| rows.iter().map(|&r| h[r][n].conj() * u[r]).sum()).collect()
    }

    fn build(&self, x: &SetTensor, width: usize, mut f: impl FnMut(usize, usize, &mut Vec<f64>)) -> Result<SetTensor> {
        let mut data = Vec::with_capacity(self.rows() * self.nb * width);
        for r in 0..self.rows() {
            for n in 0..self.nb {
                let before = data.len();
                f(r, n, &mut data);
                debug_assert_eq!(data.len() - before, width);
            }
        }
        SetTensor::new(Tensor::new(vec![self.rows(), self.nb, width], data)?, x.axes.clone())
    }
}

fn dotc(a: &[C], b: &[C]) -> C {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Intra-user term between streams `m` and `p` of one user: the combiner
/// interference `c (H w_p)` per UE antenna, the outer product
/// `(H^H u_p) u_p^H` per entry, and a unit count.
fn q_m1(x: &SetTensor) -> Result<SetTensor> {
    let pn = Panel::of(x)?;
    let g = Grid::new(&x.value);
    let h = pn.h(&g, 4);
    let wm = pn.w_blocks(&g, 2);
    let wp = pn.w_blocks(&g, W + 2);
    let up = pn.u(&g, W);
    let mut hw_p = vec![C::from(0.0); pn.rows()];
    let mut coef = vec![C::from(0.0); pn.blocks];
    let mut y_p = Vec::with_capacity(pn.blocks);
    for b in 0..pn.blocks {
        let rows = b * pn.per..(b + 1) * pn.per;
        let hp = Panel::apply(&h[rows.clone()], &wp[b]);
        let hm = Panel::apply(&h[rows.clone()], &wm[b]);
        coef[b] = dotc(&hp, &hm);
        for (i, r) in rows.enumerate() {
            hw_p[r] = hp[i];
        }
        y_p.push(pn.adjoint(&h, &up, Some(b)));
    }
    pn.build(x, 5, |r, n, out| {
        let b = r / pn.per;
        let t = coef[b] * hw_p[r];
        let q = y_p[b][n] * up[r].conj();
        out.extend_from_slice(&[t.re, t.im, q.re, q.im, 1.0]);
    })
}

/// Inter-user term from stream `p` of user `j` to stream `m` of user `k`:
/// the combiner interference, the precoder interference, and user `j`'s
/// channel moved onto every block.
fn q_m3(x: &SetTensor) -> Result<SetTensor> {
    let pn = Panel::of(x)?;
    let g = Grid::new(&x.value);
    let hm = pn.h(&g, 4);
    let hp = pn.h(&g, W + 4);
    let um = pn.u(&g, 0);
    let up = pn.u(&g, W);
    let wm = pn.w_total(&g, 2);
    let wp = pn.w_total(&g, W + 2);
    let hw = Panel::apply(&hm, &wp);
    let c2 = dotc(&hw, &Panel::apply(&hm, &wm));
    let y_m = pn.adjoint(&hm, &um, None);
    let c3 = dotc(&up, &Panel::apply(&hp, &y_m));
    let y_p = pn.adjoint(&hp, &up, None);
    let shifted: Vec<Vec<C>> = (0..pn.per)
        .map(|e| (0..pn.nb).map(|n| (0..pn.blocks).map(|b| hp[b * pn.per + e][n]).sum()).collect())
        .collect();
    pn.build(x, 6, |r, n, out| {
        let t = c2 * hw[r];
        let v = c3 * y_p[n];
        let s = shifted[r % pn.per][n];
        out.extend_from_slice(&[t.re, t.im, v.re, v.im, s.re, s.im]);
    })
}

fn f_m(x: &SetTensor, first: PmFirstSumChannel) -> Result<SetTensor> {
    let pn = Panel::of(x)?;
    if x.width() != W + 5 + 6 {
        return Err(contract("PM combiner input has the wrong width"));
    }
    let g = Grid::new(&x.value);
    let h = pn.h(&g, 4);
    let u = pn.u(&g, 0);
    let wb = pn.w_blocks(&g, 2);
    let intra_u = pn.u(&g, W);
    let inter_u = pn.u(&g, W + 5);
    let inter_w = pn.w_blocks(&g, W + 7);
    let streams = 1.0 + (0..pn.rows()).map(|r| g.get(r, 0, W + 4)).sum::<f64>() / pn.rows() as f64;
    let mut u_new = vec![C::from(0.0); pn.rows()];
    let mut w_new = Vec::with_capacity(pn.blocks);
    for b in 0..pn.blocks {
        let rows = b * pn.per..(b + 1) * pn.per;
        let hw = Panel::apply(&h[rows.clone()], &wb[b]);
        for (i, r) in rows.clone().enumerate() {
            u_new[r] = hw[i] * 2.0 - intra_u[r] - inter_u[r];
        }
        let y = pn.adjoint(&h, &u, Some(b));
        let xy: Vec<C> = rows
            .clone()
            .map(|r| {
                (0..pn.nb)
                    .map(|n| {
                        let xr = match first {
                            PmFirstSumChannel::Own => h[r][n],
                            PmFirstSumChannel::AsPrinted => g.c(r, n, W + 9) / streams,
                        };
                        xr * y[n]
                    })
                    .sum()
            })
            .collect();
        let qxy: Vec<C> = (0..pn.nb)
            .map(|n| rows.clone().zip(&xy).map(|(r, v)| g.c(r, n, W + 2) * v).sum())
            .collect();
        let wn: Vec<C> = (0..pn.nb)
            .map(|n| y[n] * 2.0 - qxy[n] - inter_w[b][n])
            .collect();
        w_new.push(wn);
    }
    pn.build(x, W, |r, n, out| {
        let b = r / pn.per;
        let (uu, ww, hh) = (u_new[r], w_new[b][n], h[r][n]);
        out.extend_from_slice(&[uu.re, uu.im, ww.re, ww.im, hh.re, hh.im]);
    })
}

impl RiePm {
    pub fn new(users: usize, streams: usize, ue_antennas: usize, first: PmFirstSumChannel) -> Result<Self> {
        let kinds = vec![TemplateKind::NpeI, TemplateKind::ApeI];
        let f = Opaque::new("f_M", kinds.clone(), Some(W + 5 + 6), Some(W), move |x| f_m(x, first));
        let q1 = Opaque::new("q_M1", kinds.clone(), Some(2 * W), Some(5), q_m1);
        let q2 = Opaque::new("identity", kinds.clone(), Some(6), Some(6), |x| Ok(x.clone()));
        let q3 = Opaque::new("q_M2", kinds, Some(2 * W), Some(6), q_m3);
        let t = OneSetTemplate::npe_ii(f, q1, q2, q3)?;
        let stack = RecursionStack::new(vec![0, 1, 2], Arc::new(t))?.with_output_function(0, 1)?;
        Ok(Self {
            stack,
            layout: Layout::Pm {
                users,
                streams,
                ue_antennas,
            },
        })
    }
}

impl RieStep for RiePm {
    fn stack(&self) -> &RecursionStack {
        &self.stack
    }

    fn layout(&self) -> Layout {
        self.layout
    }

    fn step(&self, s: &RepresentationState) -> Result<RepresentationState> {
        self.check_state(s)?;
        check_blocks(s)?;
        Ok(RepresentationState {
            d: self.stack.apply(&s.d)?,
            layout: s.layout,
        })
    }
}

fn check_blocks(s: &RepresentationState) -> Result<()> {
    let Layout::Pm {
        users,
        streams,
        ue_antennas,
    } = s.layout
    else {
        return Err(contract("not a PM representation"));
    };
    let sh = s.d.value.shape();
    if sh.len() != 4 || sh[0] != users * streams || sh[1] != users * ue_antennas || sh[3] != W {
        return Err(contract(format!("PM representation has shape {sh:?}")));
    }
    let nb = sh[2];
    let x = s.d.value.data();
    for ds in 0..sh[0] {
        for ue in 0..sh[1] {
            if ds / streams == ue / ue_antennas {
                continue;
            }
            let base = (ds * sh[1] + ue) * nb * W;
            if x[base..base + nb * W].iter().any(|v| *v != 0.0) {
                return Err(contract(format!(
                    "off-block entry (stream {ds}, UE antenna {ue}) is nonzero"
                )));
            }
        }
    }
    Ok(())
}

pub fn encode_pm(inst: &PmInstance, s: &PmState) -> RepresentationState {
    let (k, m, nu, nb) = (inst.users(), inst.streams, inst.ue_antennas(), inst.bs_antennas());
    let mut data = vec![0.0; k * m * k * nu * nb * W];
    for uk in 0..k {
        for mi in 0..m {
            let ds = uk * m + mi;
            for e in 0..nu {
                let ue = uk * nu + e;
                for n in 0..nb {
                    let base = ((ds * k * nu + ue) * nb + n) * W;
                    let (u, w, h) = (s.u[uk][(e, mi)], s.w[uk][(n, mi)], inst.h[uk][(e, n)]);
                    data[base..base + W].copy_from_slice(&[u.re, u.im, w.re, w.im, h.re, h.im]);
                }
            }
        }
    }
    let axes = vec![
        SetAxis::Nested {
            subsets: k,
            subset_size: m,
        },
        SetAxis::Nested {
            subsets: k,
            subset_size: nu,
        },
        SetAxis::Normal,
    ];
    RepresentationState {
        d: SetTensor::new(Tensor::new(vec![k * m, k * nu, nb, W], data).unwrap(), axes).unwrap(),
        layout: Layout::Pm {
            users: k,
            streams: m,
            ue_antennas: nu,
        },
    }
}

/// Solver state and channels, read from the diagonal blocks.
pub fn decode_pm(s: &RepresentationState) -> Result<(PmState, Vec<CMat>)> {
    check_blocks(s)?;
    let Layout::Pm {
        users: k,
        streams: m,
        ue_antennas: nu,
    } = s.layout
    else {
        unreachable!()
    };
    let nb = s.d.value.shape()[2];
    let x = s.d.value.data();
    let at = |ds: usize, ue: usize, n: usize, slot: usize| {
        let base = ((ds * k * nu + ue) * nb + n) * W + slot;
        C::new(x[base], x[base + 1])
    };
    let u = (0..k).map(|uk| CMat::from_fn(nu, m, |e, mi| at(uk * m + mi, uk * nu + e, 0, 0))).collect();
    let w = (0..k).map(|uk| CMat::from_fn(nb, m, |n, mi| at(uk * m + mi, uk * nu, n, 2))).collect();
    let h = (0..k).map(|uk| CMat::from_fn(nu, nb, |e, n| at(uk * m, uk * nu + e, n, 4))).collect();
    Ok((PmState { u, w }, h))
}
