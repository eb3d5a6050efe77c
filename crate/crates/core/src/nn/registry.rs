use std::ops::Range;

use super::{LayerKind, ModelSpec};

/// A contiguous run of elements inside one parameter tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSlice {
    pub param: usize,
    pub start: usize,
    pub len: usize,
}

impl ParamSlice {
    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len
    }
}

/// One logical neuron: a conv filter or a dense/output unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronRecord {
    pub id: usize,
    pub layer: usize,
    pub unit: usize,
    /// Kernel `[f, :, :, :]` or weight row `u`, then the bias element.
    pub incoming: [ParamSlice; 2],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerRecord {
    pub name: String,
    pub kind: LayerKind,
    pub neurons: Range<usize>,
    pub weight_param: usize,
    pub bias_param: usize,
    /// Index into [`super::Forward::taps`] holding this layer's activations.
    pub tap: usize,
}

/// Maps every neuron to its incoming parameter slices. The slices of all
/// neurons partition the full parameter set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeuronRegistry {
    pub layers: Vec<LayerRecord>,
    pub neurons: Vec<NeuronRecord>,
}

impl NeuronRegistry {
    pub fn new(spec: &ModelSpec) -> Self {
        let mut layers = Vec::new();
        let mut neurons = Vec::new();
        for (l, info) in spec.layers().into_iter().enumerate() {
            let first = neurons.len();
            let row: usize = info.weight_shape[1..].iter().product();
            for unit in 0..info.units {
                neurons.push(NeuronRecord {
                    id: neurons.len(),
                    layer: l,
                    unit,
                    incoming: [
                        ParamSlice {
                            param: 2 * l,
                            start: unit * row,
                            len: row,
                        },
                        ParamSlice {
                            param: 2 * l + 1,
                            start: unit,
                            len: 1,
                        },
                    ],
                });
            }
            layers.push(LayerRecord {
                name: info.name,
                kind: info.kind,
                neurons: first..neurons.len(),
                weight_param: 2 * l,
                bias_param: 2 * l + 1,
                tap: l,
            });
        }
        Self { layers, neurons }
    }

    pub fn neuron_count(&self) -> usize {
        self.neurons.len()
    }

    pub fn layer_ranges(&self) -> Vec<Range<usize>> {
        self.layers.iter().map(|l| l.neurons.clone()).collect()
    }

    /// Checks that the incoming slices cover every element of tensors with
    /// the given lengths exactly once.
    pub fn is_partition_of(&self, param_lens: &[usize]) -> bool {
        let mut hits: Vec<Vec<u8>> = param_lens.iter().map(|&n| vec![0; n]).collect();
        for neuron in &self.neurons {
            for slice in &neuron.incoming {
                let Some(buf) = hits.get_mut(slice.param) else { return false };
                if slice.start + slice.len > buf.len() {
                    return false;
                }
                for h in &mut buf[slice.range()] {
                    *h += 1;
                }
            }
        }
        hits.iter().flatten().all(|&h| h == 1)
    }
}
