use npc::tensor::gradcheck::{grad_check, grad_check_with_fault};
use npc::tensor::{Graph, Tensor, Var};
use npc::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape, data).unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    t(shape, &(0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>())
}

/// Random values bounded away from zero so ReLU/abs kinks are not straddled.
fn random_away_from_zero(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n)
        .map(|_| loop {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if v.abs() >= 1e-3 {
                break v;
            }
        })
        .collect();
    t(shape, &data)
}

/// Distinct values so every pooling window has a unique maximum.
fn random_distinct(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.37 / n as f64).collect();
    for i in (1..n).rev() {
        data.swap(i, rng.gen_range(0..=i));
    }
    t(shape, &data)
}

/// Contracts an arbitrary-shaped output with fixed random weights so the
/// checked scalar depends on every output element differently.
fn contract(g: &mut Graph<f64>, out: Var, seed: u64) -> npc::Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = g.shape(out).to_vec();
    let w = g.leaf(random(&shape, &mut rng));
    let prod = g.mul(out, w)?;
    g.sum(prod)
}

#[test]
fn matmul_examples() {
    let mut g = Graph::new();
    let eye = g.leaf(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let x = g.leaf(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let y = g.matmul(eye, x).unwrap();
    assert_eq!(g.data(y), g.data(x));

    let a = g.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let ones = g.leaf(t(&[2, 1], &[1.0, 1.0]));
    let p = g.matmul(a, ones).unwrap();
    assert_eq!(g.shape(p), &[2, 1]);
    assert_eq!(g.data(p), &[3.0, 7.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut g = Graph::<f64>::new();
    let a = g.leaf(Tensor::zeros(&[2, 3]));
    let b = g.leaf(Tensor::zeros(&[2, 3]));
    match g.matmul(a, b) {
        Err(Error::Shape { left, right, .. }) => {
            assert_eq!(left, vec![2, 3]);
            assert_eq!(right, vec![2, 3]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn matmul_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let a = random(&[3, 4], &mut rng);
        let b = random(&[4, 2], &mut rng);
        let err = grad_check(
            |g, v| {
                let p = g.matmul(v[0], v[1])?;
                g.sum(p)
            },
            &[a, b],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "matmul grad error {err}");
    }
}

#[test]
fn conv2d_examples() {
    let mut g = Graph::new();
    let input = g.leaf(t(&[1, 1, 3, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]));
    let k = g.leaf(t(&[1, 1, 1, 1], &[1.0]));
    let b = g.leaf(t(&[1], &[0.0]));
    let out = g.conv2d(input, k, b, 1, 0).unwrap();
    assert_eq!(g.data(out), g.data(input));

    let input = g.leaf(t(&[1, 1, 2, 2], &[1.0; 4]));
    let k = g.leaf(t(&[1, 1, 2, 2], &[1.0; 4]));
    let out = g.conv2d(input, k, b, 1, 0).unwrap();
    assert_eq!(g.shape(out), &[1, 1, 1, 1]);
    assert_eq!(g.data(out), &[4.0]);
}

#[test]
fn conv2d_rejects_non_integer_output() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::zeros(&[1, 1, 4, 4]));
    let k = g.leaf(Tensor::zeros(&[1, 1, 3, 3]));
    let b = g.leaf(Tensor::zeros(&[1]));
    assert!(matches!(g.conv2d(x, k, b, 2, 0), Err(Error::Config(_))));
    let big = g.leaf(Tensor::zeros(&[1, 1, 7, 7]));
    assert!(matches!(g.conv2d(x, big, b, 1, 1), Err(Error::Config(_))));
}

#[test]
fn conv2d_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for trial in 0..10 {
        let x = random(&[2, 3, 5, 5], &mut rng);
        let k = random(&[4, 3, 3, 3], &mut rng);
        let b = random(&[4], &mut rng);
        let (stride, pad) = [(1, 1), (2, 0), (2, 1)][trial % 3];
        let err = grad_check(
            |g, v| {
                let y = g.conv2d(v[0], v[1], v[2], stride, pad)?;
                contract(g, y, 99)
            },
            &[x, k, b],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "conv2d grad error {err}");
    }
}

#[test]
fn relu_examples() {
    let mut g = Graph::new();
    let x = g.leaf(t(&[3], &[-1.0, 0.0, 2.0]));
    let y = g.relu(x).unwrap();
    assert_eq!(g.data(y), &[0.0, 0.0, 2.0]);

    let x = g.leaf(t(&[2], &[-1.0, 2.0]));
    let y = g.relu(x).unwrap();
    let up = g.leaf(t(&[2], &[5.0, 5.0]));
    let prod = g.mul(y, up).unwrap();
    let s = g.sum(prod).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0, 5.0]);

    // Zero subgradient at exactly zero.
    let mut g = Graph::new();
    let x = g.leaf(t(&[1], &[0.0]));
    let y = g.relu(x).unwrap();
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0]);
}

#[test]
fn relu_gradient_matches_away_from_kink() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let x = random_away_from_zero(&[2, 3, 4], &mut rng);
        let err = grad_check(
            |g, v| {
                let y = g.relu(v[0])?;
                contract(g, y, 5)
            },
            &[x],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "relu grad error {err}");
    }
}

#[test]
fn maxpool_examples() {
    let mut g = Graph::new();
    let x = g.leaf(t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
    let y = g.maxpool2d(x, 2, 2).unwrap();
    assert_eq!(g.data(y), &[4.0]);
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[0.0, 0.0, 0.0, 1.0]);

    let mut g = Graph::new();
    let x = g.leaf(t(&[1, 1, 2, 2], &[7.0; 4]));
    let y = g.maxpool2d(x, 2, 2).unwrap();
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn maxpool_floors_odd_sizes() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::zeros(&[2, 3, 7, 7]));
    let y = g.maxpool2d(x, 2, 2).unwrap();
    assert_eq!(g.shape(y), &[2, 3, 3, 3]);
}

#[test]
fn maxpool_gradient_matches_with_unique_maxima() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..10 {
        let x = random_distinct(&[1, 1, 4, 4], &mut rng);
        let err = grad_check(
            |g, v| {
                let y = g.maxpool2d(v[0], 2, 2)?;
                contract(g, y, 6)
            },
            &[x],
            1e-7,
        )
        .unwrap();
        assert!(err < 1e-5, "maxpool grad error {err}");
    }
}

#[test]
fn reductions_and_elementwise() {
    let mut g = Graph::new();
    let x = g.leaf(t(&[2], &[2.0, 4.0]));
    let m = g.mean(x).unwrap();
    assert_eq!(g.value(m).item(), 3.0);

    let x = g.leaf(t(&[3], &[1.0, -2.0, 3.0]));
    let s = g.sum(x).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap(), &[1.0, 1.0, 1.0]);

    let mut g = Graph::new();
    let x = g.leaf(t(&[3], &[-2.0, 0.0, 3.0]));
    let a = g.abs(x).unwrap();
    let s = g.sum(a).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.data(a), &[2.0, 0.0, 3.0]);
    assert_eq!(g.grad(x).unwrap(), &[-1.0, 0.0, 1.0]);
}

#[test]
fn composite_expression_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..10 {
        let a = random_away_from_zero(&[2, 3], &mut rng);
        let b = random_away_from_zero(&[2, 3], &mut rng);
        let err = grad_check(
            |g, v| {
                let s = g.add(v[0], v[1])?;
                let d = g.sub(v[0], v[1])?;
                let p = g.mul(s, d)?;
                let q = g.abs(v[1])?;
                let r = g.scale(q, 0.5)?;
                let z = g.add(p, r)?;
                let z = g.reshape(z, &[6])?;
                let m = g.mean(z)?;
                let w = g.sum(p)?;
                g.add(m, w)
            },
            &[a, b],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "composite grad error {err}");
    }
}

#[test]
fn instance_norm_and_dropout_and_cross_entropy_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let x = random(&[2, 3, 3, 3], &mut rng);
        let err = grad_check(
            |g, v| {
                let y = g.instance_norm2d(v[0], 1e-5)?;
                contract(g, y, 8)
            },
            &[x],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-4, "instance norm grad error {err}");

        let x = random(&[3, 5], &mut rng);
        let err = grad_check(
            |g, v| {
                let mut mask_rng = ChaCha8Rng::seed_from_u64(77);
                let y = g.dropout(v[0], 0.3, true, &mut mask_rng)?;
                contract(g, y, 9)
            },
            &[x],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "dropout grad error {err}");

        let z = random(&[4, 6], &mut rng);
        let err = grad_check(|g, v| g.masked_cross_entropy(v[0], &[1, 2, 2, 4], &[1, 2, 4]), &[z], 1e-6).unwrap();
        assert!(err < 1e-5, "cross-entropy grad error {err}");

        let x = random(&[5], &mut rng);
        let anchor: std::sync::Arc<[f64]> = (0..5).map(|i| i as f64 * 0.1).collect();
        let weight: std::sync::Arc<[f64]> = (0..5).map(|i| 1.0 + i as f64).collect();
        let err = grad_check(
            |g, v| g.weighted_sq_dist(v[0], anchor.clone(), weight.clone()),
            &[x],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "weighted distance grad error {err}");
    }
}

#[test]
fn linear_gradient_matches() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let x = random(&[3, 4], &mut rng);
        let w = random(&[5, 4], &mut rng);
        let b = random(&[5], &mut rng);
        let err = grad_check(
            |g, v| {
                let y = g.linear(v[0], v[1], v[2])?;
                contract(g, y, 10)
            },
            &[x, w, b],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "linear grad error {err}");
    }
}

#[test]
fn grad_check_of_linear_function_is_exact() {
    let x = t(&[3], &[0.3, -1.2, 2.0]);
    let err = grad_check(
        |g, v| {
            let y = g.scale(v[0], 3.0)?;
            g.sum(y)
        },
        &[x],
        1e-3,
    )
    .unwrap();
    assert!(err < 1e-10, "{err}");
}

#[test]
fn grad_check_detects_corrupted_backward() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let a = random(&[3, 4], &mut rng);
    let b = random(&[4, 2], &mut rng);
    let build = |g: &mut Graph<f64>, v: &[Var]| {
        let p = g.matmul(v[0], v[1])?;
        let q = g.mul(p, p)?;
        g.sum(q)
    };
    let clean = grad_check(build, &[a.clone(), b.clone()], 1e-6).unwrap();
    assert!(clean < 1e-5);
    let corrupted = grad_check_with_fault(build, &[a, b], 1e-6, |g, out| g.corrupt_backward(out, 1.5)).unwrap();
    assert!(corrupted > 1e-2, "fault went unnoticed: {corrupted}");
}

#[test]
fn backward_is_deterministic_and_fills_unreachable_with_zeros() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut g = Graph::new();
    let x = g.leaf(random(&[2, 3, 6, 6], &mut rng));
    let k = g.leaf(random(&[4, 3, 3, 3], &mut rng));
    let b = g.leaf(random(&[4], &mut rng));
    let unused = g.leaf(random(&[3], &mut rng));
    let y = g.conv2d(x, k, b, 1, 1).unwrap();
    let y = g.instance_norm2d(y, 1e-5).unwrap();
    let y = g.relu(y).unwrap();
    let y = g.maxpool2d(y, 2, 2).unwrap();
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    let first = g.grad(k).unwrap().to_vec();
    g.backward(s).unwrap();
    let second = g.grad(k).unwrap().to_vec();
    assert_eq!(
        first.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
        second.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    );
    assert_eq!(g.grad(unused).unwrap(), &[0.0, 0.0, 0.0]);
}

#[test]
fn tensor_used_twice_accumulates_both_paths() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x0 = random(&[4], &mut rng);
    let w0 = random(&[4], &mut rng);

    // f(x) = sum(x*w) + sum(x*x) using x twice.
    let mut g = Graph::new();
    let x = g.leaf(x0.clone());
    let w = g.leaf(w0.clone());
    let a = g.mul(x, w).unwrap();
    let b = g.mul(x, x).unwrap();
    let s = g.add(a, b).unwrap();
    let s = g.sum(s).unwrap();
    g.backward(s).unwrap();
    let shared = g.grad(x).unwrap().to_vec();

    // Single-use rewrite: separate copies of x for each path.
    let mut g = Graph::new();
    let x1 = g.leaf(x0.clone());
    let x2 = g.leaf(x0.clone());
    let x3 = g.leaf(x0.clone());
    let w = g.leaf(w0);
    let a = g.mul(x1, w).unwrap();
    let b = g.mul(x2, x3).unwrap();
    let s = g.add(a, b).unwrap();
    let s = g.sum(s).unwrap();
    g.backward(s).unwrap();
    for i in 0..4 {
        let split = g.grad(x1).unwrap()[i] + g.grad(x2).unwrap()[i] + g.grad(x3).unwrap()[i];
        assert!((shared[i] - split).abs() < 1e-14);
    }
}

#[test]
fn backward_requires_scalar() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::zeros(&[2]));
    assert!(matches!(g.backward(x), Err(Error::State(_))));
}

#[test]
fn constant_inputs_get_zero_gradient_without_changing_the_rest() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let (x, k, b) = (random(&[3, 2, 6, 6], &mut rng), random(&[4, 2, 3, 3], &mut rng), random(&[4], &mut rng));
    let run = |constant: bool| {
        let mut g = Graph::new();
        let xv = if constant { g.constant(x.clone()) } else { g.leaf(x.clone()) };
        let (kv, bv) = (g.leaf(k.clone()), g.leaf(b.clone()));
        let y = g.conv2d(xv, kv, bv, 1, 1).unwrap();
        let y = g.relu(y).unwrap();
        let s = g.sum(y).unwrap();
        g.backward(s).unwrap();
        (g.grad(xv).unwrap().to_vec(), g.grad(kv).unwrap().to_vec(), g.grad(bv).unwrap().to_vec())
    };
    let (dx_leaf, dk_leaf, db_leaf) = run(false);
    let (dx_const, dk_const, db_const) = run(true);
    assert!(dx_leaf.iter().any(|&v| v != 0.0));
    assert!(dx_const.iter().all(|&v| v == 0.0));
    assert_eq!(dk_leaf, dk_const);
    assert_eq!(db_leaf, db_const);
}
