//! Quadratic anchoring baselines: `λ Σ_k Σ_i W_{i,k} (θ_i − θ_{i,k})²`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::nn::ParamSet;
use crate::tensor::{Graph, Scalar, Tensor, Var};

/// Parameter values and importance weights saved at the end of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskAnchor<T> {
    pub anchor: Vec<Arc<[T]>>,
    pub weight: Vec<Arc<[T]>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyState<T> {
    pub lambda: f64,
    pub tasks: Vec<TaskAnchor<T>>,
}

impl<T: Scalar> PenaltyState<T> {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            tasks: Vec::new(),
        }
    }

    /// Records the current parameters as the anchor for a finished task.
    pub fn push_task(&mut self, params: &ParamSet<T>, weights: &[Vec<f64>]) -> Result<()> {
        if weights.len() != params.len() || params.tensors.iter().zip(weights).any(|(p, w)| p.len() != w.len()) {
            return Err(Error::State("importance weights do not match parameter layout".into()));
        }
        self.tasks.push(TaskAnchor {
            anchor: params.tensors.iter().map(|t| Arc::from(t.data())).collect(),
            weight: weights
                .iter()
                .map(|w| w.iter().map(|&v| T::from_f64(v)).collect::<Arc<[T]>>())
                .collect(),
        });
        Ok(())
    }

    /// Differentiable penalty over the attached parameter leaves; a constant
    /// zero when no task has finished yet.
    pub fn penalty_loss(&self, g: &mut Graph<T>, params: &[Var]) -> Result<Var> {
        let mut total: Option<Var> = None;
        for task in &self.tasks {
            if task.anchor.len() != params.len() {
                return Err(Error::State("anchor does not match parameter layout".into()));
            }
            for (i, &p) in params.iter().enumerate() {
                let term = g.weighted_sq_dist(p, task.anchor[i].clone(), task.weight[i].clone())?;
                total = Some(match total {
                    Some(acc) => g.add(acc, term)?,
                    None => term,
                });
            }
        }
        match total {
            Some(t) => g.scale(t, self.lambda),
            None => Ok(g.leaf(Tensor::scalar(T::zero()))),
        }
    }

    /// Closed-form gradient of the penalty, `2λ Σ_k W_k (θ − θ_k)`.
    pub fn penalty_grad(&self, params: &ParamSet<T>) -> Vec<Vec<T>> {
        let two_lambda = T::from_f64(2.0 * self.lambda);
        params
            .tensors
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut out = vec![T::zero(); p.len()];
                for task in &self.tasks {
                    for (((o, &v), &a), &w) in out
                        .iter_mut()
                        .zip(p.data())
                        .zip(task.anchor[i].iter())
                        .zip(task.weight[i].iter())
                    {
                        *o = *o + two_lambda * w * (v - a);
                    }
                }
                out
            })
            .collect()
    }

    /// Number of stored anchor parameter sets.
    pub fn anchor_sets(&self) -> usize {
        self.tasks.len()
    }
}

/// Diagonal Fisher information under the model's own predictive
/// distribution restricted to `classes`:
/// `W_i = mean_x Σ_y p(y|x) (∂ log p(y|x)/∂θ_i)²`.
///
/// `logits` builds a `[1, K]` logit row for sample `s` on the given graph.
pub fn ewc_importance<T, F>(params: &ParamSet<T>, samples: usize, classes: &[usize], mut logits: F) -> Result<Vec<Vec<f64>>>
where
    T: Scalar,
    F: FnMut(&mut Graph<T>, &[Var], usize) -> Result<Var>,
{
    if samples == 0 {
        return Err(Error::Data("EWC importance needs at least one sample".into()));
    }
    let mut fisher: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
    for s in 0..samples {
        let mut g = Graph::new();
        let vars = params.attach(&mut g);
        let z = logits(&mut g, &vars, s)?;
        let row: Vec<f64> = classes.iter().map(|&c| g.data(z)[c].as_f64()).collect();
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
        for (j, &c) in classes.iter().enumerate() {
            let p = (row[j] - max).exp() / denom;
            let nll = g.masked_cross_entropy(z, &[c], classes)?;
            g.backward(nll)?;
            for (acc, &v) in fisher.iter_mut().zip(&vars) {
                let grad = g.grad(v).expect("backward ran");
                for (a, &d) in acc.iter_mut().zip(grad) {
                    *a += p * d.as_f64() * d.as_f64();
                }
            }
        }
    }
    fisher.iter_mut().flatten().for_each(|v| *v /= samples as f64);
    Ok(fisher)
}

/// `W_i = mean_x |∂‖f(x)‖²/∂θ_i|`, with `output` building `f(x)` for
/// sample `s`.
pub fn mas_importance<T, F>(params: &ParamSet<T>, samples: usize, mut output: F) -> Result<Vec<Vec<f64>>>
where
    T: Scalar,
    F: FnMut(&mut Graph<T>, &[Var], usize) -> Result<Var>,
{
    if samples == 0 {
        return Err(Error::Data("MAS importance needs at least one sample".into()));
    }
    let mut weights: Vec<Vec<f64>> = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
    for s in 0..samples {
        let mut g = Graph::new();
        let vars = params.attach(&mut g);
        let f = output(&mut g, &vars, s)?;
        let sq = g.mul(f, f)?;
        let norm = g.sum(sq)?;
        g.backward(norm)?;
        for (acc, &v) in weights.iter_mut().zip(&vars) {
            let grad = g.grad(v).expect("backward ran");
            for (a, &d) in acc.iter_mut().zip(grad) {
                *a += d.as_f64().abs();
            }
        }
    }
    weights.iter_mut().flatten().for_each(|v| *v /= samples as f64);
    Ok(weights)
}

/// Path-integral importance accumulated along the optimization trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SiAccumulator {
    pub omega: Vec<Vec<f64>>,
    pub task_start: Vec<Vec<f64>>,
    pub xi: f64,
}

impl SiAccumulator {
    pub fn new<T: Scalar>(params: &ParamSet<T>, xi: f64) -> Self {
        Self {
            omega: params.tensors.iter().map(|t| vec![0.0; t.len()]).collect(),
            task_start: params.tensors.iter().map(|t| t.to_f64_vec()).collect(),
            xi,
        }
    }

    /// `ω += −g·Δθ` for one optimizer step.
    pub fn record_step<T: Scalar>(&mut self, grads: &[Vec<T>], step: &[Vec<f64>]) -> Result<()> {
        if grads.len() != self.omega.len() || step.len() != self.omega.len() {
            return Err(Error::State("SI step does not match parameter layout".into()));
        }
        for ((om, g), d) in self.omega.iter_mut().zip(grads).zip(step) {
            for ((o, &gv), &dv) in om.iter_mut().zip(g).zip(d) {
                *o -= gv.as_f64() * dv;
            }
        }
        Ok(())
    }

    /// `W = max(ω, 0) / ((θ − θ_start)² + ξ)`; then restarts the integral
    /// from the current parameters.
    pub fn fold<T: Scalar>(&mut self, params: &ParamSet<T>) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity(self.omega.len());
        for ((om, start), p) in self.omega.iter_mut().zip(&mut self.task_start).zip(&params.tensors) {
            let w: Vec<f64> = om
                .iter()
                .zip(start.iter())
                .zip(p.data())
                .map(|((&o, &s), &v)| {
                    let moved = v.as_f64() - s;
                    o.max(0.0) / (moved * moved + self.xi)
                })
                .collect();
            om.iter_mut().for_each(|o| *o = 0.0);
            *start = p.to_f64_vec();
            out.push(w);
        }
        out
    }
}
