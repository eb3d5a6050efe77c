use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::data::{batch_tensor, Sample};
use crate::error::{Error, Result};
use crate::nn::{forward, ModelSpec, NeuronRegistry, ParamSet};
use crate::tensor::{Graph, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct NeuronChange {
    pub neuron_id: usize,
    /// Running importance in the earlier checkpoint.
    pub importance: f64,
    /// `|after − before|` for each probe sample.
    pub changes: Vec<f64>,
    pub mean_abs_change: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationSummary {
    pub all: f64,
    /// Mean over the most important tenth of the neurons.
    pub top: f64,
    /// Mean over the least important tenth.
    pub bottom: f64,
    pub group_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationChange {
    pub neurons: Vec<NeuronChange>,
    pub summary: ActivationSummary,
}

/// `count` distinct indices below `n`, fixed by `seed`.
pub fn probe_indices(n: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_0f_9a0be5);
    sample(&mut rng, n, count.min(n)).into_vec()
}

/// Second-top activations in evaluation mode, `[probe][unit]`; conv
/// filters are averaged over positions.
fn second_top<T: Scalar>(spec: &ModelSpec, params: &ParamSet<T>, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    let layer = spec
        .second_top_layer()
        .ok_or_else(|| Error::Config("model has no second-top layer".into()))?;
    let mut g = Graph::new();
    let vars = params.attach(&mut g);
    let x = g.constant(batch_tensor(samples, spec.input)?);
    let fwd = forward(spec, &mut g, &vars, x, false, &mut ChaCha8Rng::seed_from_u64(0))?;
    let tap = fwd.taps[layer];
    let shape = g.shape(tap).to_vec();
    let per_unit: usize = shape[2..].iter().product();
    Ok(g.data(tap)
        .chunks(shape[1] * per_unit)
        .map(|row| {
            row.chunks(per_unit)
                .map(|u| u.iter().map(|v| v.as_f64()).sum::<f64>() / per_unit as f64)
                .collect()
        })
        .collect())
}

/// Per-neuron mean `|Δactivation|` on the second-top layer between two
/// checkpoints, paired with importance from `before`.
pub fn activation_change_analysis<T: Scalar>(
    before: &Checkpoint<T>,
    after: &Checkpoint<T>,
    probes: &[Sample],
) -> Result<ActivationChange> {
    if before.spec != after.spec {
        return Err(Error::Config("checkpoints were produced by different model specs".into()));
    }
    if probes.is_empty() {
        return Err(Error::Config("activation analysis needs at least one probe sample".into()));
    }
    let spec = &before.spec;
    let registry = NeuronRegistry::new(spec);
    let layer = &registry.layers[spec.second_top_layer().expect("checked by second_top")];
    let a = second_top(spec, &before.params, probes)?;
    let b = second_top(spec, &after.params, probes)?;
    let mut neurons: Vec<NeuronChange> = layer
        .neurons
        .clone()
        .enumerate()
        .map(|(unit, id)| {
            let changes: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (y[unit] - x[unit]).abs()).collect();
            NeuronChange {
                neuron_id: id,
                importance: before.importance.c[id],
                mean_abs_change: changes.iter().sum::<f64>() / changes.len() as f64,
                changes,
            }
        })
        .collect();

    let mean = |v: &[&NeuronChange]| v.iter().map(|n| n.mean_abs_change).sum::<f64>() / v.len() as f64;
    let mut ranked: Vec<&NeuronChange> = neurons.iter().collect();
    ranked.sort_by(|x, y| y.importance.total_cmp(&x.importance).then(x.neuron_id.cmp(&y.neuron_id)));
    let group = ranked.len().div_ceil(10);
    let summary = ActivationSummary {
        all: mean(&ranked),
        top: mean(&ranked[..group]),
        bottom: mean(&ranked[ranked.len() - group..]),
        group_size: group,
    };
    neurons.sort_by_key(|n| n.neuron_id);
    Ok(ActivationChange { neurons, summary })
}
