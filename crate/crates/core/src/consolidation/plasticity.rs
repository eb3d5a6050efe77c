//! Learning-rate control: per neuron (NPC) or per connection (CPC).

use std::ops::Range;

use crate::error::{Error, Result};
use crate::importance::ImportanceState;
use crate::nn::{NeuronRegistry, ParamSet};
use crate::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpcConfig {
    pub alpha: f64,
    pub beta: f64,
    pub eta_max: f64,
}

impl Default for NpcConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta: 0.7,
            eta_max: 0.1,
        }
    }
}

impl NpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha > 0.0 && self.beta > 0.0 && self.eta_max > 0.0 {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "alpha, beta and eta_max must be positive (got {}, {}, {})",
                self.alpha, self.beta, self.eta_max
            )))
        }
    }
}

/// `η = min(η_max, α·sqrt(max(sqrt(β/C) − 1, 0)))`.
///
/// This minimizes `a₁·C·tanh(b₁η) + a₂·(1 − tanh(b₂η))` to second order in
/// `η`, with `α = 1/sqrt(b₂² − b₁²)` and `β = a₂b₂/(a₁b₁)`; neurons at or
/// above `C = β` are frozen and `C = 0` is clamped to `η_max`.
pub fn npc_learning_rate(importance: f64, cfg: &NpcConfig) -> f64 {
    if importance <= 0.0 {
        return cfg.eta_max;
    }
    let excess = ((cfg.beta / importance).sqrt() - 1.0).max(0.0);
    (cfg.alpha * excess.sqrt()).min(cfg.eta_max)
}

fn check_grads<T: Scalar>(params: &ParamSet<T>, grads: &[Vec<T>]) -> Result<()> {
    if grads.len() != params.len() || params.tensors.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::State("gradients do not match parameter layout".into()));
    }
    Ok(())
}

/// Applies `w ← w − η_i·∂L/∂w` to every incoming weight and bias of each
/// neuron `i`.
pub fn npc_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &[Vec<T>],
    registry: &NeuronRegistry,
    importance: &ImportanceState,
    cfg: &NpcConfig,
) -> Result<()> {
    check_grads(params, grads)?;
    if importance.len() != registry.neuron_count() {
        return Err(Error::State(format!(
            "importance has {} entries for {} neurons",
            importance.len(),
            registry.neuron_count()
        )));
    }
    for neuron in &registry.neurons {
        let eta = T::from_f64(npc_learning_rate(importance.c[neuron.id], cfg));
        for slice in &neuron.incoming {
            let p = params
                .tensors
                .get_mut(slice.param)
                .ok_or_else(|| Error::State("registry references a missing parameter".into()))?;
            let g = &grads[slice.param];
            if slice.start + slice.len > g.len() {
                return Err(Error::State("registry slice out of bounds".into()));
            }
            for (w, &d) in p.data_mut()[slice.range()].iter_mut().zip(&g[slice.range()]) {
                *w = *w - eta * d;
            }
        }
    }
    Ok(())
}

/// Per-connection importance: one running value per parameter element,
/// normalized over each layer's weights and biases together.
#[derive(Debug, Clone, PartialEq)]
pub struct CpcState {
    pub importance: ImportanceState,
    /// Flat element ranges, one per layer.
    pub layers: Vec<Range<usize>>,
}

impl CpcState {
    /// `layer_params[l]` lists the parameter tensor indices of layer `l`.
    pub fn new<T: Scalar>(params: &ParamSet<T>, layer_params: &[Vec<usize>], delta: f64, swap_delta: bool) -> Result<Self> {
        let mut offsets = Vec::with_capacity(params.len() + 1);
        offsets.push(0);
        for t in &params.tensors {
            offsets.push(offsets.last().unwrap() + t.len());
        }
        let mut layers = Vec::with_capacity(layer_params.len());
        for group in layer_params {
            let (first, last) = match (group.iter().min(), group.iter().max()) {
                (Some(&a), Some(&b)) if b - a + 1 == group.len() => (a, b),
                _ => return Err(Error::Config("CPC layer groups must be contiguous".into())),
            };
            layers.push(offsets[first]..offsets[last + 1]);
        }
        Ok(Self {
            importance: ImportanceState::new(params.element_count(), delta, swap_delta)?,
            layers,
        })
    }

    /// Paired with a registry: each layer's weight and bias tensors.
    pub fn for_registry<T: Scalar>(
        params: &ParamSet<T>,
        registry: &NeuronRegistry,
        delta: f64,
        swap_delta: bool,
    ) -> Result<Self> {
        let groups: Vec<Vec<usize>> = registry
            .layers
            .iter()
            .map(|l| vec![l.weight_param, l.bias_param])
            .collect();
        Self::new(params, &groups, delta, swap_delta)
    }

    /// Raw `|θ·∂L/∂θ|` per element, normalized and folded into `C`.
    pub fn update<T: Scalar>(&mut self, params: &ParamSet<T>, grads: &[Vec<T>]) -> Result<()> {
        check_grads(params, grads)?;
        let raw: Vec<f64> = params
            .tensors
            .iter()
            .zip(grads)
            .flat_map(|(p, g)| p.data().iter().zip(g).map(|(&w, &d)| (w.as_f64() * d.as_f64()).abs()))
            .collect();
        if raw.len() != self.importance.len() {
            return Err(Error::State("CPC state does not match parameter layout".into()));
        }
        self.importance.update(raw, &self.layers);
        Ok(())
    }

    /// `θ ← θ − η(C_θ)·∂L/∂θ` element by element.
    pub fn step<T: Scalar>(&self, params: &mut ParamSet<T>, grads: &[Vec<T>], cfg: &NpcConfig) -> Result<()> {
        check_grads(params, grads)?;
        let mut idx = 0;
        for (p, g) in params.tensors.iter_mut().zip(grads) {
            for (w, &d) in p.data_mut().iter_mut().zip(g) {
                let eta = T::from_f64(npc_learning_rate(self.importance.c[idx], cfg));
                *w = *w - eta * d;
                idx += 1;
            }
        }
        Ok(())
    }
}

/// Importance update followed by the per-connection update.
pub fn cpc_importance_and_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &[Vec<T>],
    state: &mut CpcState,
    cfg: &NpcConfig,
) -> Result<()> {
    state.update(params, grads)?;
    state.step(params, grads, cfg)
}

/// `θ ← θ − lr·g`.
pub fn finetune_step<T: Scalar>(params: &mut ParamSet<T>, grads: &[Vec<T>], lr: f64) -> Result<()> {
    check_grads(params, grads)?;
    let lr = T::from_f64(lr);
    for (p, g) in params.tensors.iter_mut().zip(grads) {
        for (w, &d) in p.data_mut().iter_mut().zip(g) {
            *w = *w - lr * d;
        }
    }
    Ok(())
}
