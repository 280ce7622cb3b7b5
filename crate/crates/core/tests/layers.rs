use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use simtext::tensor::{
    affine, affine_backward, conv2d, conv2d_backward, grad_check, maxpool2, maxpool2_backward, relu, relu_backward,
    Tensor, GRAD_CHECK_EPS,
};

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const TOL: f64 = 1e-4;

#[test]
fn conv_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[2, 7, 6], &mut rng);
        let k = random(&[3, 2, 3, 3], &mut rng);
        let bias: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let up = random(&[3, 5, 4], &mut rng);
        let g = conv2d_backward(&x, &k, &up).unwrap();
        let f_in = |t: &Tensor| Ok(dot(conv2d(t, &k, &bias)?.data(), up.data()));
        let f_k = |t: &Tensor| Ok(dot(conv2d(&x, t, &bias)?.data(), up.data()));
        let f_b = |t: &Tensor| Ok(dot(conv2d(&x, &k, t.data())?.data(), up.data()));
        let e_in = grad_check(f_in, &x, &g.input, GRAD_CHECK_EPS).unwrap();
        let e_k = grad_check(f_k, &k, &g.kernels, GRAD_CHECK_EPS).unwrap();
        let e_b = grad_check(f_b, &Tensor::vector(bias.clone()), &Tensor::vector(g.bias.clone()), GRAD_CHECK_EPS).unwrap();
        assert!(e_in.max(e_k).max(e_b) < TOL, "seed {seed}: {e_in} {e_k} {e_b}");
    }
}

#[test]
fn affine_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[7], &mut rng);
        let w = random(&[4, 7], &mut rng);
        let b = random(&[4], &mut rng);
        let up = random(&[4], &mut rng);
        let g = affine_backward(x.data(), &w, up.data()).unwrap();
        let e_x = grad_check(|t| Ok(dot(&affine(t.data(), &w, b.data())?, up.data())), &x, &Tensor::vector(g.input), GRAD_CHECK_EPS).unwrap();
        let e_w = grad_check(|t| Ok(dot(&affine(x.data(), t, b.data())?, up.data())), &w, &g.weights, GRAD_CHECK_EPS).unwrap();
        let e_b = grad_check(|t| Ok(dot(&affine(x.data(), &w, t.data())?, up.data())), &b, &Tensor::vector(g.bias), GRAD_CHECK_EPS).unwrap();
        assert!(e_x.max(e_w).max(e_b) < TOL, "seed {seed}");
    }
}

#[test]
fn pool_and_relu_gradients_match_finite_differences() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[2, 6, 4], &mut rng);
        let pooled = maxpool2(&x).unwrap();
        let up = random(pooled.output.shape(), &mut rng);
        let g = maxpool2_backward(x.shape(), &pooled.argmax, &up).unwrap();
        let e = grad_check(|t| Ok(dot(maxpool2(t)?.output.data(), up.data())), &x, &g, GRAD_CHECK_EPS).unwrap();
        assert!(e < TOL, "pool seed {seed}: {e}");

        let up = random(x.shape(), &mut rng);
        let g = relu_backward(&x, &up).unwrap();
        let e = grad_check(|t| Ok(dot(relu(t).data(), up.data())), &x, &g, GRAD_CHECK_EPS).unwrap();
        assert!(e < TOL, "relu seed {seed}: {e}");
    }
}

proptest! {
    #[test]
    fn conv_is_linear_in_its_input(seed in any::<u64>(), alpha in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random(&[1, 6, 6], &mut rng);
        let b = random(&[1, 6, 6], &mut rng);
        let k = random(&[2, 1, 3, 3], &mut rng);
        let zero = [0.0, 0.0];
        let mix = Tensor::new(vec![1, 6, 6], a.data().iter().zip(b.data()).map(|(x, y)| alpha * x + y).collect()).unwrap();
        let lhs = conv2d(&mix, &k, &zero).unwrap();
        let (ca, cb) = (conv2d(&a, &k, &zero).unwrap(), conv2d(&b, &k, &zero).unwrap());
        for i in 0..lhs.len() {
            prop_assert!((lhs.data()[i] - (alpha * ca.data()[i] + cb.data()[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn pool_output_is_a_window_maximum(seed in any::<u64>(), h in 1usize..5, w in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&[1, 2 * h, 2 * w], &mut rng);
        let p = maxpool2(&x).unwrap();
        for (o, &src) in p.argmax.iter().enumerate() {
            prop_assert_eq!(p.output.data()[o], x.data()[src]);
        }
        let max_in = x.data().iter().cloned().fold(f64::MIN, f64::max);
        prop_assert!(p.output.data().iter().all(|&v| v <= max_in));
    }

    #[test]
    fn relu_is_idempotent_and_nonnegative(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
        let t = Tensor::vector(v);
        let r = relu(&t);
        prop_assert!(r.data().iter().all(|&x| x >= 0.0));
        prop_assert_eq!(relu(&r), r);
    }
}
