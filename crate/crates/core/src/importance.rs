//! Per-neuron importance from the first-order Taylor criterion.
//!
//! Each step computes a raw score `|n · ∂L/∂n|` averaged over the batch,
//! rescales it by the arithmetic mean of its layer, and folds it into a
//! running value `C ← δ·C + (1−δ)·c̄`.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Forward, NeuronRegistry};
use crate::tensor::{Graph, Scalar};

/// Guard in the layer-mean denominator.
pub const NORMALIZE_EPS: f64 = 1e-12;

/// Raw Taylor criterion for one layer's activations.
///
/// * `[N, U]` (dense): `c_u = mean_n |a·g|`.
/// * `[N, C, H, W]` (conv): per sample, the signed product is averaged over
///   the filter's spatial positions first, then the absolute value is taken,
///   then the batch mean.
pub fn taylor_raw<T: Scalar>(activation: &[T], grad: &[T], shape: &[usize]) -> Result<Vec<f64>> {
    if activation.len() != grad.len() || shape.iter().product::<usize>() != activation.len() {
        return Err(Error::Shape {
            op: "taylor_raw",
            left: vec![activation.len()],
            right: vec![grad.len()],
        });
    }
    let (batch, units, positions) = match shape {
        [n, u] => (*n, *u, 1),
        [n, c, h, w] => (*n, *c, h * w),
        _ => {
            return Err(Error::Shape {
                op: "taylor_raw",
                left: shape.to_vec(),
                right: vec![],
            })
        }
    };
    let mut out = vec![0.0; units];
    for n in 0..batch {
        for (u, slot) in out.iter_mut().enumerate() {
            let base = (n * units + u) * positions;
            let signed: f64 = activation[base..base + positions]
                .iter()
                .zip(&grad[base..base + positions])
                .map(|(&a, &g)| a.as_f64() * g.as_f64())
                .sum();
            *slot += (signed / positions as f64).abs();
        }
    }
    out.iter_mut().for_each(|v| *v /= batch as f64);
    Ok(out)
}

/// Raw criterion for every neuron, read from the taps of a graph on which
/// `backward` has already run.
pub fn raw_from_graph<T: Scalar>(g: &Graph<T>, fwd: &Forward, registry: &NeuronRegistry) -> Result<Vec<f64>> {
    let mut raw = Vec::with_capacity(registry.neuron_count());
    for layer in &registry.layers {
        let tap = fwd.taps[layer.tap];
        let grad = g
            .grad(tap)
            .ok_or_else(|| Error::State("backward not run before importance update".into()))?;
        let scores = taylor_raw(g.data(tap), grad, g.shape(tap))?;
        if scores.len() != layer.neurons.len() {
            return Err(Error::State(format!("tap of layer {} has wrong width", layer.name)));
        }
        raw.extend(scores);
    }
    Ok(raw)
}

/// `c̄_i = c_i / (mean of c_j over i's layer + eps)`.
pub fn layer_normalize(raw: &[f64], layers: &[Range<usize>]) -> Vec<f64> {
    let mut out = vec![0.0; raw.len()];
    for range in layers {
        let slice = &raw[range.clone()];
        let mean = slice.iter().sum::<f64>() / slice.len() as f64;
        for (o, &r) in out[range.clone()].iter_mut().zip(slice) {
            *o = r / (mean + NORMALIZE_EPS);
        }
    }
    out
}

/// Running importance of every neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceState {
    pub c: Vec<f64>,
    pub last_raw: Vec<f64>,
    pub last_normalized: Vec<f64>,
    pub delta: f64,
    /// Use `C ← (1−δ)·C + δ·c̄` instead of the literal `δ·C + (1−δ)·c̄`.
    pub swap_delta: bool,
    pub step: u64,
    pinned: bool,
}

impl ImportanceState {
    pub fn new(neurons: usize, delta: f64, swap_delta: bool) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Config(format!("delta {delta} must lie in (0, 1)")));
        }
        Ok(Self {
            c: vec![0.0; neurons],
            last_raw: vec![0.0; neurons],
            last_normalized: vec![0.0; neurons],
            delta,
            swap_delta,
            step: 0,
            pinned: false,
        })
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn is_pinned(&self) -> bool {
        self.pinned
    }

    /// Freezes every `C_i` at `value`; later updates only record the raw
    /// and normalized criteria. Used to exercise fixed-rate schedules.
    pub fn pin(&mut self, value: f64) {
        self.c.iter_mut().for_each(|c| *c = value);
        self.pinned = true;
    }

    pub fn ema_update(&mut self, normalized: &[f64]) {
        debug_assert_eq!(normalized.len(), self.c.len());
        let (keep, take) = if self.swap_delta {
            (1.0 - self.delta, self.delta)
        } else {
            (self.delta, 1.0 - self.delta)
        };
        if !self.pinned {
            for (c, &n) in self.c.iter_mut().zip(normalized) {
                *c = keep * *c + take * n;
            }
        }
        self.last_normalized.copy_from_slice(normalized);
        self.step += 1;
    }

    /// Normalizes `raw` per layer and folds it into `C`.
    pub fn update(&mut self, raw: Vec<f64>, layers: &[Range<usize>]) {
        let normalized = layer_normalize(&raw, layers);
        self.ema_update(&normalized);
        self.last_raw = raw;
    }

    pub(crate) fn restore_pinned(&mut self, pinned: bool) {
        self.pinned = pinned;
    }

    /// Writes `neuron_id,layer,C`.
    pub fn write_csv(&self, registry: &NeuronRegistry, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "neuron_id,layer,C").expect("write to Vec");
        for n in &registry.neurons {
            writeln!(out, "{},{},{}", n.id, registry.layers[n.layer].name, self.c[n.id]).expect("write to Vec");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
