use serde::{Deserialize, Serialize};

use super::model::{GnnModel, MacCount};
use crate::error::{contract, Result};
use crate::pe::SetAxis;

/// Analytic multiply-add count of one forward pass; the sets are normal
/// with the given sizes in descriptor order.
pub fn count_flops(model: &GnnModel, sizes: &[usize]) -> Result<MacCount> {
    model.count_macs(&vec![SetAxis::Normal; sizes.len()], sizes)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlopRow {
    pub dim: String,
    pub size: usize,
    pub count: u64,
    pub pairwise: u64,
}

/// Counts while varying set `dim` over `values`, other sets fixed at `base`.
pub fn flop_sweep(model: &GnnModel, base: &[usize], dim: usize, values: &[usize]) -> Result<Vec<FlopRow>> {
    let name = model
        .descriptors()
        .get(dim)
        .ok_or_else(|| contract(format!("no set {dim}")))?
        .name
        .clone();
    values
        .iter()
        .map(|&v| {
            let mut sizes = base.to_vec();
            sizes[dim] = v;
            let c = count_flops(model, &sizes)?;
            Ok(FlopRow {
                dim: name.clone(),
                size: v,
                count: c.total(),
                pairwise: c.pairwise,
            })
        })
        .collect()
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    num / den
}
