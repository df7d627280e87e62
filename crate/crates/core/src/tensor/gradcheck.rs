use super::{Tape, Tensor, Var};
use crate::error::Result;

/// Outcome of comparing tape gradients with central finite differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub pass: bool,
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, 1)`.
    pub max_rel_error: f64,
    /// (parameter index, flat element index) of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    /// Set when the function itself failed to evaluate.
    pub failure: Option<String>,
}

fn eval<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&tape, &vars)?;
    let v = out.value().item()?;
    Ok(v)
}

fn analytic<F>(f: &F, params: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&tape, &vars)?;
    let grads = tape.backward(out)?;
    Ok(vars.iter().map(|v| grads.get(*v).unwrap().clone()).collect())
}

/// Checks every parameter component of a scalar function `f` against a
/// central difference with the given `step`.
pub fn grad_check<F>(f: F, params: &[Tensor], step: f64, tol: f64) -> GradCheckReport
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>>,
{
    let failed = |msg: String| GradCheckReport {
        pass: false,
        max_rel_error: f64::INFINITY,
        worst: None,
        checked: 0,
        failure: Some(msg),
    };
    if !(step > 0.0) || params.iter().any(|p| !p.all_finite()) {
        return failed("step must be positive and parameters finite".into());
    }
    let grads = match analytic(&f, params) {
        Ok(g) => g,
        Err(e) => return failed(e.to_string()),
    };
    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_rel = 0.0_f64;
    let mut worst = None;
    let mut checked = 0;
    for (pi, g) in grads.iter().enumerate() {
        for ei in 0..g.len() {
            let x0 = work[pi].data()[ei];
            work[pi].data_mut()[ei] = x0 + step;
            let up = eval(&f, &work);
            work[pi].data_mut()[ei] = x0 - step;
            let dn = eval(&f, &work);
            work[pi].data_mut()[ei] = x0;
            let (up, dn) = match (up, dn) {
                (Ok(u), Ok(d)) => (u, d),
                (Err(e), _) | (_, Err(e)) => return failed(e.to_string()),
            };
            let num = (up - dn) / (2.0 * step);
            let a = g.data()[ei];
            let rel = (a - num).abs() / a.abs().max(num.abs()).max(1.0);
            checked += 1;
            if rel > max_rel || worst.is_none() {
                max_rel = max_rel.max(rel);
                worst = Some((pi, ei));
            }
        }
    }
    GradCheckReport {
        pass: max_rel <= tol,
        max_rel_error: max_rel,
        worst,
        checked,
        failure: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_sum_is_exact() {
        let p = Tensor::from_vec(vec![0.3, -0.7, 1.1]);
        let r = grad_check(|_, v| v[0].sum(), &[p], 1e-6, 1e-9);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn squared_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = Tensor::uniform(&[8], -1.0, 1.0, &mut rng);
        let r = grad_check(|_, v| v[0].square()?.sum(), &[p], 1e-6, 1e-6);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn evaluation_failure_is_reported() {
        let p = Tensor::from_vec(vec![-1.0]);
        let r = grad_check(|_, v| v[0].log()?.sum(), &[p], 1e-6, 1e-6);
        assert!(!r.pass);
        assert!(r.failure.is_some());
    }
}
