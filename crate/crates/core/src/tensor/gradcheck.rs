//! Central-difference gradient checking.

use super::{Graph, Scalar, Tensor, Var};
use crate::error::{Error, Result};

/// Compares reverse-mode gradients of a scalar expression against central
/// differences and returns the worst relative error
/// `|analytic − numeric| / max(1, |numeric|)` over every element of every
/// parameter.
///
/// `f` receives a fresh graph and one leaf per entry of `params` and must
/// return a one-element node.
pub fn grad_check<T, F>(f: F, params: &[Tensor<T>], eps: f64) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    grad_check_with_fault(f, params, eps, |_, _| {})
}

/// Like [`grad_check`] but lets the caller corrupt the graph before
/// `backward` runs, e.g. via [`Graph::corrupt_backward`].
pub fn grad_check_with_fault<T, F, H>(f: F, params: &[Tensor<T>], eps: f64, hook: H) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
    H: Fn(&mut Graph<T>, Var),
{
    let corrupted = |g: &mut Graph<T>, vars: &[Var]| {
        let out = f(g, vars)?;
        hook(g, out);
        Ok(out)
    };
    let analytic = analytic_grads(&corrupted, params)?;
    let mut worst = 0.0f64;
    let mut probe: Vec<Tensor<T>> = params.to_vec();
    for (p, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let original = probe[p].data()[i];
            probe[p].data_mut()[i] = T::from_f64(original.as_f64() + eps);
            let plus = evaluate(&f, &probe)?;
            probe[p].data_mut()[i] = T::from_f64(original.as_f64() - eps);
            let minus = evaluate(&f, &probe)?;
            probe[p].data_mut()[i] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (a.as_f64() - numeric).abs() / numeric.abs().max(1.0);
            if err.is_nan() {
                return Err(Error::Numerical(format!("NaN in grad_check at parameter {p}[{i}]")));
            }
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn analytic_grads<T, F>(f: &F, params: &[Tensor<T>]) -> Result<Vec<Vec<T>>>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    g.backward(out)?;
    Ok(vars
        .iter()
        .map(|&v| g.take_grad(v).expect("backward populates every node"))
        .collect())
}

fn evaluate<T, F>(f: &F, params: &[Tensor<T>]) -> Result<f64>
where
    T: Scalar,
    F: Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = params.iter().map(|p| g.leaf(p.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).item().as_f64())
}
