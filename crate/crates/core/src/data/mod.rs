//! Dataset ingestion, class-incremental task splits, augmentation and the
//! epoch accounting used for sequential training.
//!
//! One "epoch" always processes as many samples as the full training set
//! holds, drawn from the current task only. With five equal tasks every
//! task sample is therefore seen five times per epoch.

mod formats;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

pub use formats::{load_cifar100_bin, load_mnist_idx, read_maybe_gz, CIFAR100_RECORD, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// Channel-major pixels in `[0, 1]`.
    pub pixels: Vec<f32>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Cifar100,
}

impl DatasetKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Cifar100 => "cifar100",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            DatasetKind::Mnist => 10,
            DatasetKind::Cifar100 => 100,
        }
    }

    pub fn default_tasks(self) -> usize {
        match self {
            DatasetKind::Mnist => 5,
            DatasetKind::Cifar100 => 10,
        }
    }

    pub fn augmentation(self) -> Augmentation {
        match self {
            DatasetKind::Mnist => Augmentation { pad: 4, flip: false },
            DatasetKind::Cifar100 => Augmentation { pad: 4, flip: true },
        }
    }

    /// Importance combination coefficient used for this benchmark.
    pub fn default_delta(self) -> f64 {
        match self {
            DatasetKind::Mnist => 1e-3,
            DatasetKind::Cifar100 => 5e-4,
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "cifar100" => Ok(DatasetKind::Cifar100),
            _ => Err(Error::Usage(format!("unknown dataset {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    /// `[channels, height, width]`.
    pub shape: [usize; 3],
    pub num_classes: usize,
    pub train: Vec<Sample>,
    /// The canonical test split, used for validation.
    pub test: Vec<Sample>,
}

impl Dataset {
    /// Loads the canonical files from `dir` (`train-images-idx3-ubyte`,
    /// `t10k-*` for MNIST; `train.bin`/`test.bin` for CIFAR-100), each
    /// optionally gzip-compressed.
    pub fn load(kind: DatasetKind, dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Data(format!("data directory {} does not exist", dir.display())));
        }
        let (train, test, shape) = match kind {
            DatasetKind::Mnist => {
                let (train, shape) = load_mnist_idx(
                    &formats::locate(dir, "train-images-idx3-ubyte")?,
                    &formats::locate(dir, "train-labels-idx1-ubyte")?,
                )?;
                let (test, test_shape) = load_mnist_idx(
                    &formats::locate(dir, "t10k-images-idx3-ubyte")?,
                    &formats::locate(dir, "t10k-labels-idx1-ubyte")?,
                )?;
                if shape != test_shape {
                    return Err(Error::Data("train and test image sizes differ".into()));
                }
                (train, test, shape)
            }
            DatasetKind::Cifar100 => (
                load_cifar100_bin(&formats::locate(dir, "train.bin")?)?,
                load_cifar100_bin(&formats::locate(dir, "test.bin")?)?,
                [3, 32, 32],
            ),
        };
        let num_classes = kind.num_classes();
        if let Some(s) = train.iter().chain(&test).find(|s| s.label >= num_classes) {
            return Err(Error::Data(format!("label {} out of range for {kind}", s.label)));
        }
        Ok(Self {
            kind,
            shape,
            num_classes,
            train,
            test,
        })
    }

    /// Keeps the first `train_per_class` / `test_per_class` samples of every
    /// class, preserving file order.
    pub fn subsample_per_class(&mut self, train_per_class: Option<usize>, test_per_class: Option<usize>) {
        fn keep(samples: &mut Vec<Sample>, limit: Option<usize>, classes: usize) {
            if let Some(limit) = limit {
                let mut seen = vec![0usize; classes];
                samples.retain(|s| {
                    seen[s.label] += 1;
                    seen[s.label] <= limit
                });
            }
        }
        keep(&mut self.train, train_per_class, self.num_classes);
        keep(&mut self.test, test_per_class, self.num_classes);
    }
}

/// Zero-padded random crop, plus an optional horizontal flip.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Augmentation {
    pub pad: usize,
    pub flip: bool,
}

impl Augmentation {
    pub const NONE: Augmentation = Augmentation { pad: 0, flip: false };
}

/// Crops the zero-padded image at offset `(dy, dx)` in padded coordinates;
/// `(pad, pad)` returns the original image.
pub fn crop_padded(pixels: &[f32], shape: [usize; 3], pad: usize, dy: usize, dx: usize) -> Vec<f32> {
    let [c, h, w] = shape;
    let mut out = vec![0.0; pixels.len()];
    for ch in 0..c {
        for y in 0..h {
            let sy = (y + dy) as isize - pad as isize;
            if sy < 0 || sy >= h as isize {
                continue;
            }
            for x in 0..w {
                let sx = (x + dx) as isize - pad as isize;
                if sx >= 0 && sx < w as isize {
                    out[(ch * h + y) * w + x] = pixels[(ch * h + sy as usize) * w + sx as usize];
                }
            }
        }
    }
    out
}

pub fn flip_horizontal(pixels: &[f32], shape: [usize; 3]) -> Vec<f32> {
    let w = shape[2];
    pixels.chunks(w).flat_map(|row| row.iter().rev().copied()).collect()
}

/// Draws the crop offsets `(dy, dx)`, each uniform on `0..=2·pad`.
pub fn crop_offset<R: Rng + ?Sized>(pad: usize, rng: &mut R) -> (usize, usize) {
    (rng.gen_range(0..=2 * pad), rng.gen_range(0..=2 * pad))
}

pub fn augment<R: Rng + ?Sized>(sample: &Sample, shape: [usize; 3], policy: Augmentation, rng: &mut R) -> Sample {
    let mut pixels = if policy.pad > 0 {
        let (dy, dx) = crop_offset(policy.pad, rng);
        crop_padded(&sample.pixels, shape, policy.pad, dy, dx)
    } else {
        sample.pixels.clone()
    };
    if policy.flip && rng.gen_bool(0.5) {
        pixels = flip_horizontal(&pixels, shape);
    }
    Sample {
        pixels,
        label: sample.label,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: usize,
    pub classes: Vec<usize>,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    pub shape: [usize; 3],
    pub num_classes: usize,
    pub augmentation: Augmentation,
    /// Size of the full training set, the unit of one epoch.
    pub total_train: usize,
}

/// Splits classes into `k` contiguous blocks following `class_order`
/// (ascending when `None`).
pub fn split_tasks(dataset: &Dataset, k: usize, class_order: Option<&[usize]>) -> Result<TaskStream> {
    let order: Vec<usize> = match class_order {
        Some(o) => o.to_vec(),
        None => (0..dataset.num_classes).collect(),
    };
    let mut sorted = order.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != order.len() || order.iter().any(|&c| c >= dataset.num_classes) {
        return Err(Error::Config(format!("class order {order:?} is not a set of valid classes")));
    }
    if k == 0 || order.len() % k != 0 {
        return Err(Error::Config(format!(
            "{} classes cannot be divided into {k} tasks",
            order.len()
        )));
    }
    let per = order.len() / k;
    let tasks = order
        .chunks(per)
        .enumerate()
        .map(|(id, classes)| {
            let pick = |samples: &[Sample]| samples.iter().filter(|s| classes.contains(&s.label)).cloned().collect();
            Task {
                id,
                classes: classes.to_vec(),
                train: pick(&dataset.train),
                test: pick(&dataset.test),
            }
        })
        .collect::<Vec<_>>();
    let total_train = tasks.iter().map(|t| t.train.len()).sum();
    Ok(TaskStream {
        tasks,
        shape: dataset.shape,
        num_classes: dataset.num_classes,
        augmentation: dataset.kind.augmentation(),
        total_train,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochPlan {
    pub total_train_count: usize,
    pub batch: usize,
}

impl EpochPlan {
    pub fn steps_per_epoch(&self) -> usize {
        self.total_train_count.div_ceil(self.batch)
    }
}

/// Draws indices into one task's training set: shuffled passes over the
/// subset, reshuffled whenever a pass is exhausted.
#[derive(Debug, Clone)]
pub struct TaskSampler {
    order: Vec<usize>,
    pos: usize,
}

impl TaskSampler {
    pub fn new(task_len: usize) -> Self {
        Self {
            order: (0..task_len).collect(),
            pos: task_len,
        }
    }

    fn next_index<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }

    /// Batches for one epoch: `ceil(total / batch)` batches covering exactly
    /// `total_train_count` draws.
    pub fn epoch<R: Rng + ?Sized>(&mut self, plan: &EpochPlan, rng: &mut R) -> Result<Vec<Vec<usize>>> {
        if plan.batch == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if self.order.is_empty() {
            return Err(Error::Data("task has no training samples".into()));
        }
        let mut left = plan.total_train_count;
        let mut batches = Vec::with_capacity(plan.steps_per_epoch());
        while left > 0 {
            let n = left.min(plan.batch);
            batches.push((0..n).map(|_| self.next_index(rng)).collect());
            left -= n;
        }
        Ok(batches)
    }
}

/// Stacks samples into a `[N, C, H, W]` tensor.
pub fn batch_tensor<T: Scalar>(samples: &[Sample], shape: [usize; 3]) -> Result<Tensor<T>> {
    let per: usize = shape.iter().product();
    if let Some(s) = samples.iter().find(|s| s.pixels.len() != per) {
        return Err(Error::Shape {
            op: "batch",
            left: vec![s.pixels.len()],
            right: shape.to_vec(),
        });
    }
    let data = samples
        .iter()
        .flat_map(|s| s.pixels.iter().map(|&p| T::from_f64(p as f64)))
        .collect();
    Tensor::new(&[samples.len(), shape[0], shape[1], shape[2]], data)
}
