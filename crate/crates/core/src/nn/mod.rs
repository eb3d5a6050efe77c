//! The convolutional classifier: conv → instance norm → ReLU → 2×2 max pool
//! blocks, followed by fully connected ReLU layers with dropout and a linear
//! output layer spanning the classes of every task.

mod registry;

use std::fmt;

use rand::Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Scalar, Tensor, Var};

pub use registry::{LayerRecord, NeuronRecord, NeuronRegistry, ParamSlice};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv,
    Dense,
    Output,
}

/// Shape of the network. Every layer's units are neurons for consolidation.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// `[channels, height, width]` of one input image.
    pub input: [usize; 3],
    pub conv_channels: Vec<usize>,
    pub kernel_size: usize,
    pub padding: usize,
    pub dense_hidden: Vec<usize>,
    pub num_classes: usize,
    pub dropout: f64,
    pub norm_eps: f64,
}

/// Static description of one layer derived from a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerInfo {
    pub name: String,
    pub kind: LayerKind,
    pub units: usize,
    pub weight_shape: Vec<usize>,
    pub fan_in: usize,
}

impl ModelSpec {
    /// Full-size network: conv (64, 256, 128), dense 512, dropout 0.2.
    pub fn paper(input: [usize; 3], num_classes: usize) -> Self {
        Self {
            input,
            conv_channels: vec![64, 256, 128],
            kernel_size: 3,
            padding: 1,
            dense_hidden: vec![512],
            num_classes,
            dropout: 0.2,
            norm_eps: 1e-5,
        }
    }

    /// Laptop-sized network: conv (16, 32, 32), dense 128.
    pub fn desk(input: [usize; 3], num_classes: usize) -> Self {
        Self {
            conv_channels: vec![16, 32, 32],
            dense_hidden: vec![128],
            ..Self::paper(input, num_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_channels.is_empty() && self.dense_hidden.is_empty() {
            return Err(Error::Config("model needs at least one hidden layer".into()));
        }
        if self.conv_channels.contains(&0) || self.dense_hidden.contains(&0) || self.num_classes == 0 {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if self.input.contains(&0) || self.kernel_size == 0 {
            return Err(Error::Config("input dims and kernel size must be positive".into()));
        }
        let (mut h, mut w) = (self.input[1], self.input[2]);
        for _ in &self.conv_channels {
            if h + 2 * self.padding < self.kernel_size || w + 2 * self.padding < self.kernel_size {
                return Err(Error::Config("input too small for the convolution stack".into()));
            }
            h = h + 2 * self.padding - self.kernel_size + 1;
            w = w + 2 * self.padding - self.kernel_size + 1;
            if h < 2 || w < 2 {
                return Err(Error::Config("input too small for the pooling stack".into()));
            }
            h /= 2;
            w /= 2;
        }
        Ok(())
    }

    /// Spatial size after the convolution stack.
    fn conv_output_hw(&self) -> (usize, usize) {
        let (mut h, mut w) = (self.input[1], self.input[2]);
        for _ in &self.conv_channels {
            h = (h + 2 * self.padding - self.kernel_size + 1) / 2;
            w = (w + 2 * self.padding - self.kernel_size + 1) / 2;
        }
        (h, w)
    }

    /// Width of the flattened conv features fed to the first dense layer.
    pub fn flat_features(&self) -> usize {
        let (h, w) = self.conv_output_hw();
        match self.conv_channels.last() {
            Some(&c) => c * h * w,
            None => self.input.iter().product(),
        }
    }

    pub fn layers(&self) -> Vec<LayerInfo> {
        let mut out = Vec::new();
        let mut in_ch = self.input[0];
        let k = self.kernel_size;
        for (i, &c) in self.conv_channels.iter().enumerate() {
            out.push(LayerInfo {
                name: format!("conv{}", i + 1),
                kind: LayerKind::Conv,
                units: c,
                weight_shape: vec![c, in_ch, k, k],
                fan_in: in_ch * k * k,
            });
            in_ch = c;
        }
        let mut fan_in = self.flat_features();
        for (i, &u) in self.dense_hidden.iter().enumerate() {
            out.push(LayerInfo {
                name: format!("dense{}", i + 1),
                kind: LayerKind::Dense,
                units: u,
                weight_shape: vec![u, fan_in],
                fan_in,
            });
            fan_in = u;
        }
        out.push(LayerInfo {
            name: "output".into(),
            kind: LayerKind::Output,
            units: self.num_classes,
            weight_shape: vec![self.num_classes, fan_in],
            fan_in,
        });
        out
    }

    /// Index of the last hidden dense layer (the "second_top" tap), if any.
    pub fn second_top_layer(&self) -> Option<usize> {
        (!self.dense_hidden.is_empty()).then(|| self.conv_channels.len() + self.dense_hidden.len() - 1)
    }

    pub fn neuron_count(&self) -> usize {
        self.layers().iter().map(|l| l.units).sum()
    }

    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| l.weight_shape.iter().product::<usize>() + l.units)
            .sum()
    }

    /// Canonical one-line encoding, also the input of [`ModelSpec::digest`].
    pub fn to_canonical(&self) -> String {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        format!(
            "input={};conv={};kernel={};padding={};dense={};classes={};dropout={};eps={}",
            join(&self.input),
            join(&self.conv_channels),
            self.kernel_size,
            self.padding,
            join(&self.dense_hidden),
            self.num_classes,
            self.dropout,
            self.norm_eps
        )
    }

    pub fn from_canonical(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("malformed model spec {s:?}"));
        let list = |v: &str| -> Result<Vec<usize>> {
            if v.is_empty() {
                return Ok(Vec::new());
            }
            v.split(',').map(|x| x.parse().map_err(|_| bad())).collect()
        };
        let mut spec = ModelSpec::desk([1, 1, 1], 1);
        let mut seen = 0;
        for part in s.split(';') {
            let (key, value) = part.split_once('=').ok_or_else(bad)?;
            match key {
                "input" => {
                    let v = list(value)?;
                    spec.input = v.try_into().map_err(|_| bad())?;
                }
                "conv" => spec.conv_channels = list(value)?,
                "kernel" => spec.kernel_size = value.parse().map_err(|_| bad())?,
                "padding" => spec.padding = value.parse().map_err(|_| bad())?,
                "dense" => spec.dense_hidden = list(value)?,
                "classes" => spec.num_classes = value.parse().map_err(|_| bad())?,
                "dropout" => spec.dropout = value.parse().map_err(|_| bad())?,
                "eps" => spec.norm_eps = value.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
            seen += 1;
        }
        if seen != 8 {
            return Err(bad());
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_canonical().as_bytes()).into()
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_canonical())
    }
}

/// Trainable tensors in layer order: `[w1, b1, w2, b2, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> ParamSet<T> {
    /// Uniform initialization on `±sqrt(1/fan_in)` for weights and biases.
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut tensors = Vec::new();
        for layer in spec.layers() {
            let bound = (1.0 / layer.fan_in as f64).sqrt();
            let mut draw = |shape: &[usize]| {
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| T::from_f64(rng.gen_range(-bound..bound))).collect();
                Tensor::new(shape, data)
            };
            tensors.push(draw(&layer.weight_shape)?);
            tensors.push(draw(&[layer.units])?);
        }
        Ok(Self { tensors })
    }

    pub fn zeros(spec: &ModelSpec) -> Self {
        let tensors = spec
            .layers()
            .iter()
            .flat_map(|l| [Tensor::zeros(&l.weight_shape), Tensor::zeros(&[l.units])])
            .collect();
        Self { tensors }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn element_count(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    /// Places every tensor on `g` as a leaf.
    pub fn attach(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.tensors.iter().map(|t| g.leaf(t.clone())).collect()
    }

    /// Flat copy of all parameter values in order.
    pub fn flatten(&self) -> Vec<T> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn check_spec(&self, spec: &ModelSpec) -> Result<()> {
        let layers = spec.layers();
        if self.tensors.len() != 2 * layers.len() {
            return Err(Error::Config(format!(
                "parameter count {} does not match spec with {} layers",
                self.tensors.len(),
                layers.len()
            )));
        }
        for (l, layer) in layers.iter().enumerate() {
            let (w, b) = (&self.tensors[2 * l], &self.tensors[2 * l + 1]);
            if w.shape() != layer.weight_shape.as_slice() || b.shape() != [layer.units] {
                return Err(Error::Shape {
                    op: "params",
                    left: w.shape().to_vec(),
                    right: layer.weight_shape.clone(),
                });
            }
        }
        Ok(())
    }
}

/// Result of a forward pass: logits plus one post-activation tap per layer.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Var,
    /// Post-ReLU activations of every hidden layer (before pooling/dropout),
    /// then the logits for the output layer; indexed like `spec.layers()`.
    pub taps: Vec<Var>,
}

impl Forward {
    pub fn second_top(&self, spec: &ModelSpec) -> Option<Var> {
        spec.second_top_layer().map(|l| self.taps[l])
    }
}

/// Builds the forward graph. Flattening between the conv and dense stacks is
/// channel-major, row-major (`[N, C, H, W] → [N, C·H·W]`).
pub fn forward<T: Scalar, R: Rng + ?Sized>(
    spec: &ModelSpec,
    g: &mut Graph<T>,
    params: &[Var],
    input: Var,
    training: bool,
    rng: &mut R,
) -> Result<Forward> {
    let layers = spec.layers();
    if params.len() != 2 * layers.len() {
        return Err(Error::Config("parameter list does not match model spec".into()));
    }
    let shape = g.shape(input).to_vec();
    if shape.len() != 4 || shape[1..] != spec.input {
        return Err(Error::Shape {
            op: "model input",
            left: shape,
            right: spec.input.to_vec(),
        });
    }
    let batch = shape[0];
    let mut taps = Vec::with_capacity(layers.len());
    let mut h = input;
    let n_conv = spec.conv_channels.len();
    for l in 0..n_conv {
        let (w, b) = (params[2 * l], params[2 * l + 1]);
        h = g.conv2d(h, w, b, 1, spec.padding)?;
        h = g.instance_norm2d(h, spec.norm_eps)?;
        h = g.relu(h)?;
        taps.push(h);
        h = g.maxpool2d(h, 2, 2)?;
    }
    h = g.reshape(h, &[batch, spec.flat_features()])?;
    for l in n_conv..layers.len() {
        let (w, b) = (params[2 * l], params[2 * l + 1]);
        h = g.linear(h, w, b)?;
        if layers[l].kind == LayerKind::Output {
            taps.push(h);
            break;
        }
        h = g.relu(h)?;
        taps.push(h);
        h = g.dropout(h, spec.dropout, training, rng)?;
    }
    Ok(Forward { logits: h, taps })
}

/// Builds the neuron registry for a materialized parameter set.
pub fn build_registry<T: Scalar>(spec: &ModelSpec, params: &ParamSet<T>) -> Result<NeuronRegistry> {
    params.check_spec(spec)?;
    Ok(NeuronRegistry::new(spec))
}
