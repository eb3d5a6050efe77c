mod common;

use std::collections::HashSet;

use common::*;
use npc::data::{
    augment, crop_offset, load_cifar100_bin, load_mnist_idx, split_tasks, Augmentation, Dataset, DatasetKind, EpochPlan,
    Sample, TaskSampler, CIFAR100_RECORD,
};
use npc::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn digits(count: usize, side: usize, seed: u64) -> (Vec<Vec<u8>>, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images = (0..count).map(|_| (0..side * side).map(|_| rng.gen()).collect()).collect();
    let labels = (0..count).map(|i| (i % 10) as u8).collect();
    (images, labels)
}

#[test]
fn idx_round_trip_plain_and_gzip() {
    for gz in [false, true] {
        let dir = tempfile::tempdir().unwrap();
        let (images, labels) = digits(7, 5, 1);
        write_idx(dir.path(), "train", &images, &labels, 5, gz);
        let suffix = if gz { ".gz" } else { "" };
        let (samples, shape) = load_mnist_idx(
            &dir.path().join(format!("train-images-idx3-ubyte{suffix}")),
            &dir.path().join(format!("train-labels-idx1-ubyte{suffix}")),
        )
        .unwrap();
        assert_eq!(shape, [1, 5, 5]);
        assert_eq!(samples.len(), 7);
        for (s, (img, &lab)) in samples.iter().zip(images.iter().zip(&labels)) {
            assert_eq!(s.label, lab as usize);
            let back: Vec<u8> = s.pixels.iter().map(|&p| (p * 255.0).round() as u8).collect();
            assert_eq!(&back, img);
            assert!(s.pixels.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }
}

#[test]
fn corrupted_magic_reports_observed_value() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = digits(3, 4, 2);
    write_idx(dir.path(), "train", &images, &labels, 4, false);
    let path = dir.path().join("train-images-idx3-ubyte");
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[2..4].copy_from_slice(&[0x0a, 0x0b]);
    std::fs::write(&path, bytes).unwrap();
    let err = load_mnist_idx(&path, &dir.path().join("train-labels-idx1-ubyte")).unwrap_err();
    match &err {
        Error::Format { path: p, observed, expected } => {
            assert_eq!(*observed, 0x0a0b);
            assert_eq!(*expected, 0x0803);
            assert_eq!(p, &path);
        }
        other => panic!("unexpected error {other:?}"),
    }
    assert!(err.to_string().contains("0x00000a0b"));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn truncated_idx_is_a_length_error() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = digits(3, 4, 3);
    write_idx(dir.path(), "train", &images, &labels, 4, false);
    let path = dir.path().join("train-images-idx3-ubyte");
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
    let err = load_mnist_idx(&path, &dir.path().join("train-labels-idx1-ubyte")).unwrap_err();
    match err {
        Error::Length { expected, found, .. } => {
            assert_eq!(expected, 16 + 3 * 16);
            assert_eq!(found, expected - 5);
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn cifar_records_parse_fine_labels() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for i in 0..4u8 {
        bytes.push(i % 20);
        bytes.push(40 + i);
        bytes.extend((0..3 * 32 * 32).map(|j| ((j + i as usize) % 256) as u8));
    }
    let path = dir.path().join("train.bin");
    std::fs::write(&path, &bytes).unwrap();
    let samples = load_cifar100_bin(&path).unwrap();
    assert_eq!(samples.len(), 4);
    for (i, s) in samples.iter().enumerate() {
        assert_eq!(s.label, 40 + i);
        assert_eq!(s.pixels.len(), 3072);
        assert_eq!(s.pixels[0], i as f32 / 255.0);
    }

    std::fs::write(&path, &bytes[..CIFAR100_RECORD + 10]).unwrap();
    assert!(matches!(
        load_cifar100_bin(&path),
        Err(Error::Length { expected, found, .. }) if expected == 2 * CIFAR100_RECORD && found == CIFAR100_RECORD + 10
    ));
}

#[test]
fn mnist_directory_loads_and_splits() {
    let dir = tempfile::tempdir().unwrap();
    write_mnist_fixture(dir.path(), 4, 2);
    let ds = Dataset::load(DatasetKind::Mnist, dir.path()).unwrap();
    assert_eq!((ds.train.len(), ds.test.len()), (40, 20));
    assert_eq!(ds.shape, [1, 28, 28]);
    let stream = split_tasks(&ds, 5, None).unwrap();
    assert_eq!(stream.total_train, 40);
    assert_eq!(stream.augmentation, Augmentation { pad: 4, flip: false });
    for (k, task) in stream.tasks.iter().enumerate() {
        assert_eq!(task.classes, vec![2 * k, 2 * k + 1]);
        assert_eq!(task.train.len(), 8);
        assert_eq!(task.test.len(), 4);
    }
}

#[test]
fn missing_directory_error_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let gone = dir.path().join("nowhere");
    let err = Dataset::load(DatasetKind::Mnist, &gone).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    assert!(err.to_string().contains("nowhere"));

    let err = Dataset::load(DatasetKind::Cifar100, dir.path()).unwrap_err();
    assert!(err.to_string().contains("train.bin"));
}

#[test]
fn tasks_never_share_classes_or_samples() {
    let ds = synthetic_dataset(10, 6, 3, 6, 9);
    let order = [3, 7, 1, 0, 9, 2, 8, 4, 6, 5];
    let stream = split_tasks(&ds, 5, Some(&order)).unwrap();
    let mut seen = HashSet::new();
    let mut total = 0;
    for task in &stream.tasks {
        for &c in &task.classes {
            assert!(seen.insert(c), "class {c} in two tasks");
        }
        let classes: HashSet<usize> = task.classes.iter().copied().collect();
        assert!(task.train.iter().chain(&task.test).all(|s| classes.contains(&s.label)));
        total += task.train.len();
    }
    assert_eq!(total, ds.train.len());
    assert_eq!(seen.len(), 10);
}

#[test]
fn one_task_epoch_is_an_ordinary_epoch() {
    let ds = synthetic_dataset(4, 5, 1, 6, 1);
    let stream = split_tasks(&ds, 1, None).unwrap();
    let task = &stream.tasks[0];
    let plan = EpochPlan {
        total_train_count: stream.total_train,
        batch: 6,
    };
    let mut sampler = TaskSampler::new(task.train.len());
    let batches = sampler.epoch(&plan, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(batches.len(), 4);
    let mut all: Vec<usize> = batches.concat();
    all.sort_unstable();
    assert_eq!(all, (0..20).collect::<Vec<_>>());
}

#[test]
fn redefined_epoch_draws_full_set_count_from_one_task() {
    let plan = EpochPlan {
        total_train_count: 8500,
        batch: 128,
    };
    assert_eq!(plan.steps_per_epoch(), 67);
    let mut sampler = TaskSampler::new(1700);
    let batches = sampler.epoch(&plan, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(batches.len(), 67);
    assert_eq!(batches.iter().map(Vec::len).sum::<usize>(), 8500);
    let mut counts = vec![0usize; 1700];
    batches.iter().flatten().for_each(|&i| counts[i] += 1);
    assert!(counts.iter().all(|&c| c == 5));
}

#[test]
fn crop_offsets_are_uniform() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let draws = 10_000;
    let mut counts = [[0usize; 9]; 9];
    for _ in 0..draws {
        let (dy, dx) = crop_offset(4, &mut rng);
        counts[dy][dx] += 1;
    }
    let expected = draws as f64 / 81.0;
    let chi2: f64 = counts
        .iter()
        .flatten()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    // 99.9th percentile of chi-square with 80 degrees of freedom.
    assert!(chi2 < 124.84, "chi-square {chi2}");
}

#[test]
fn augmentation_keeps_label_and_shape() {
    let shape = [3, 8, 8];
    let sample = Sample {
        pixels: (0..192).map(|i| i as f32 / 192.0).collect(),
        label: 42,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let out = augment(&sample, shape, Augmentation { pad: 4, flip: true }, &mut rng);
        assert_eq!(out.label, 42);
        assert_eq!(out.pixels.len(), 192);
    }
    assert_eq!(augment(&sample, shape, Augmentation::NONE, &mut rng), sample);
}

#[test]
fn subsampling_keeps_first_per_class() {
    let mut ds = synthetic_dataset(3, 5, 4, 6, 2);
    let first = ds.train[..6].to_vec();
    ds.subsample_per_class(Some(2), Some(1));
    assert_eq!(ds.train, first);
    assert_eq!(ds.test.len(), 3);
}
