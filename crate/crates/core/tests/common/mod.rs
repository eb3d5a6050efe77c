//! Shared fixtures and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::io::Write;
use std::path::Path;

use npc::consolidation::NpcConfig;
use npc::data::{Dataset, DatasetKind, Sample};
use npc::nn::{ModelSpec, ParamSet};
use npc::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense net 3 → 3 → 3 without dropout: six neurons in total.
pub fn toy_spec() -> ModelSpec {
    let mut spec = ModelSpec::desk([3, 1, 1], 3);
    spec.conv_channels = vec![];
    spec.dense_hidden = vec![3];
    spec.dropout = 0.0;
    spec
}

/// Plain nested-vector copy of the toy net's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub b2: Vec<f64>,
}

impl ToyNet {
    pub fn from_params(p: &ParamSet<f64>) -> Self {
        let rows = |t: &Tensor<f64>| t.data().chunks(t.shape()[1]).map(|r| r.to_vec()).collect();
        Self {
            w1: rows(&p.tensors[0]),
            b1: p.tensors[1].data().to_vec(),
            w2: rows(&p.tensors[2]),
            b2: p.tensors[3].data().to_vec(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        self.w1.iter().for_each(|r| v.extend(r));
        v.extend(&self.b1);
        self.w2.iter().for_each(|r| v.extend(r));
        v.extend(&self.b2);
        v
    }
}

/// Everything a brute-force forward and backward pass produces.
pub struct ToyPass {
    pub loss: f64,
    /// Hidden post-ReLU activations and their gradients, `[n][unit]`.
    pub h: Vec<Vec<f64>>,
    pub dh: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub dz: Vec<Vec<f64>>,
    pub grad: ToyNet,
}

/// Loop-by-loop forward, masked softmax cross-entropy and backward.
pub fn toy_pass(net: &ToyNet, x: &[Vec<f64>], labels: &[usize], classes: &[usize]) -> ToyPass {
    let n = x.len() as f64;
    let (hid, out, inp) = (net.b1.len(), net.b2.len(), x[0].len());
    let mut grad = ToyNet {
        w1: vec![vec![0.0; inp]; hid],
        b1: vec![0.0; hid],
        w2: vec![vec![0.0; hid]; out],
        b2: vec![0.0; out],
    };
    let (mut hs, mut dhs, mut zs, mut dzs) = (vec![], vec![], vec![], vec![]);
    let mut loss = 0.0;
    for (xi, &y) in x.iter().zip(labels) {
        let mut pre = vec![0.0; hid];
        let mut h = vec![0.0; hid];
        for u in 0..hid {
            pre[u] = net.b1[u];
            for j in 0..inp {
                pre[u] += net.w1[u][j] * xi[j];
            }
            h[u] = pre[u].max(0.0);
        }
        let mut z = vec![0.0; out];
        for k in 0..out {
            z[k] = net.b2[k];
            for u in 0..hid {
                z[k] += net.w2[k][u] * h[u];
            }
        }
        let max = classes.iter().map(|&c| z[c]).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = classes.iter().map(|&c| (z[c] - max).exp()).sum();
        loss += -(z[y] - max - denom.ln()) / n;
        let mut dz = vec![0.0; out];
        for &c in classes {
            let p = (z[c] - max).exp() / denom;
            dz[c] = (p - if c == y { 1.0 } else { 0.0 }) / n;
        }
        let mut dh = vec![0.0; hid];
        for k in 0..out {
            grad.b2[k] += dz[k];
            for u in 0..hid {
                grad.w2[k][u] += dz[k] * h[u];
                dh[u] += net.w2[k][u] * dz[k];
            }
        }
        for u in 0..hid {
            let dpre = if pre[u] > 0.0 { dh[u] } else { 0.0 };
            grad.b1[u] += dpre;
            for j in 0..inp {
                grad.w1[u][j] += dpre * xi[j];
            }
        }
        hs.push(h);
        dhs.push(dh);
        zs.push(z);
        dzs.push(dz);
    }
    ToyPass {
        loss,
        h: hs,
        dh: dhs,
        z: zs,
        dz: dzs,
        grad,
    }
}

/// `mean_n |a·g|` per unit.
pub fn oracle_taylor(a: &[Vec<f64>], g: &[Vec<f64>]) -> Vec<f64> {
    let units = a[0].len();
    (0..units)
        .map(|u| a.iter().zip(g).map(|(ar, gr)| (ar[u] * gr[u]).abs()).sum::<f64>() / a.len() as f64)
        .collect()
}

pub fn oracle_normalize(layer: &[f64]) -> Vec<f64> {
    let mean = layer.iter().sum::<f64>() / layer.len() as f64;
    layer.iter().map(|v| v / (mean + 1e-12)).collect()
}

pub fn oracle_rate(c: f64, cfg: &NpcConfig) -> f64 {
    if c <= 0.0 {
        return cfg.eta_max;
    }
    let inner = (cfg.beta / c).sqrt() - 1.0;
    if inner <= 0.0 {
        return 0.0;
    }
    let eta = cfg.alpha * inner.sqrt();
    if eta > cfg.eta_max {
        cfg.eta_max
    } else {
        eta
    }
}

pub fn random_batch(n: usize, width: usize, classes: &[usize], rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<usize>) {
    let x = (0..n).map(|_| (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y = (0..n).map(|_| classes[rng.gen_range(0..classes.len())]).collect();
    (x, y)
}

pub fn batch_tensor(x: &[Vec<f64>]) -> Tensor<f64> {
    let w = x[0].len();
    Tensor::from_f64(&[x.len(), w, 1, 1], &x.concat()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Separable images: class `c` lights a class-specific block on top of
/// noise.
pub fn synthetic_dataset(classes: usize, train_per_class: usize, test_per_class: usize, side: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut make = |count: usize| {
        let mut out = Vec::new();
        for i in 0..count * classes {
            let label = i % classes;
            let mut pixels: Vec<f32> = (0..side * side).map(|_| rng.gen_range(0.0..0.3)).collect();
            let row = (label * 2) % side;
            let col = (label * 3) % side;
            for dy in 0..side / 3 {
                for dx in 0..side / 3 {
                    pixels[((row + dy) % side) * side + (col + dx) % side] = 1.0;
                }
            }
            out.push(Sample { pixels, label });
        }
        out
    };
    let train = make(train_per_class);
    let test = make(test_per_class);
    Dataset {
        kind: DatasetKind::Mnist,
        shape: [1, side, side],
        num_classes: classes,
        train,
        test,
    }
}

/// Small conv model for synthetic `side × side` inputs.
pub fn small_conv_spec(side: usize, classes: usize) -> ModelSpec {
    let mut spec = ModelSpec::desk([1, side, side], classes);
    spec.conv_channels = vec![4, 6];
    spec.dense_hidden = vec![12];
    spec
}

/// Writes an IDX image/label pair (`{prefix}-images-idx3-ubyte` and
/// `{prefix}-labels-idx1-ubyte`), gzip-compressed when `gz` is set.
pub fn write_idx(dir: &Path, prefix: &str, images: &[Vec<u8>], labels: &[u8], side: usize, gz: bool) {
    let mut img = Vec::new();
    img.extend(0x0803u32.to_be_bytes());
    img.extend((images.len() as u32).to_be_bytes());
    img.extend((side as u32).to_be_bytes());
    img.extend((side as u32).to_be_bytes());
    images.iter().for_each(|i| img.extend(i));
    let mut lab = Vec::new();
    lab.extend(0x0801u32.to_be_bytes());
    lab.extend((labels.len() as u32).to_be_bytes());
    lab.extend(labels);
    for (name, bytes) in [("images-idx3-ubyte", img), ("labels-idx1-ubyte", lab)] {
        let base = dir.join(format!("{prefix}-{name}"));
        if gz {
            let f = std::fs::File::create(base.with_file_name(format!("{prefix}-{name}.gz"))).unwrap();
            let mut enc = flate2::write::GzEncoder::new(f, flate2::Compression::default());
            enc.write_all(&bytes).unwrap();
            enc.finish().unwrap();
        } else {
            std::fs::write(base, bytes).unwrap();
        }
    }
}

/// A complete MNIST-shaped directory of synthetic 28×28 digits.
pub fn write_mnist_fixture(dir: &Path, train_per_class: usize, test_per_class: usize) {
    let ds = synthetic_dataset(10, train_per_class, test_per_class, 28, 1);
    let to_bytes = |s: &[Sample]| -> (Vec<Vec<u8>>, Vec<u8>) {
        (
            s.iter().map(|x| x.pixels.iter().map(|&p| (p * 255.0).round() as u8).collect()).collect(),
            s.iter().map(|x| x.label as u8).collect(),
        )
    };
    let (img, lab) = to_bytes(&ds.train);
    write_idx(dir, "train", &img, &lab, 28, true);
    let (img, lab) = to_bytes(&ds.test);
    write_idx(dir, "t10k", &img, &lab, 28, false);
}
