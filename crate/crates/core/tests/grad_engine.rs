use advse::grad::{finite_diff_check, AdamConfig, AdamState, Bindings, GraphBuilder, Tensor};
use advse::Error;
use approx::assert_relative_eq;
use proptest::prelude::*;

proptest! {
    #[test]
    fn composed_mlp_gradient_matches_fd(
        x in prop::collection::vec(-1.0f64..1.0, 4),
        w in prop::collection::vec(-1.0f64..1.0, 12),
        t in prop::collection::vec(-1.0f64..1.0, 3),
    ) {
        let mut b = GraphBuilder::<f64>::new();
        let xi = b.input("x", &[1, 4]).unwrap();
        let wi = b.param("w", &[4, 3]).unwrap();
        let ti = b.input("t", &[1, 3]).unwrap();
        let h = b.matmul(xi, wi).unwrap();
        let a = b.tanh(h).unwrap();
        let s = b.sigmoid(a).unwrap();
        let root = b.mse(s, ti).unwrap();
        let g = b.finish(root).unwrap();
        let (xv, wv, tv) = (
            Tensor::new(vec![1, 4], x).unwrap(),
            Tensor::new(vec![4, 3], w).unwrap(),
            Tensor::new(vec![1, 3], t).unwrap(),
        );
        let bind = Bindings::new().with(xi, &xv).with(wi, &wv).with(ti, &tv);
        prop_assert!(finite_diff_check(&g, &bind, xi).unwrap() <= 1e-4);
        prop_assert!(finite_diff_check(&g, &bind, wi).unwrap() <= 1e-4);
    }

    #[test]
    fn gradient_of_sum_is_ones(x in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let n = x.len();
        let mut b = GraphBuilder::<f64>::new();
        let xi = b.input("x", &[n]).unwrap();
        let root = b.sum(xi).unwrap();
        let g = b.finish(root).unwrap();
        let xv = Tensor::vector(x);
        let grad = g.gradient(&Bindings::new().with(xi, &xv), xi).unwrap();
        prop_assert!(grad.data().iter().all(|&v| v == 1.0));
    }
}

#[test]
fn shape_mismatch_is_rejected_at_build_time() {
    let mut b = GraphBuilder::<f64>::new();
    let x = b.input("x", &[2, 3]).unwrap();
    let y = b.input("y", &[2, 3]).unwrap();
    assert!(matches!(b.matmul(x, y), Err(Error::Shape(_))));
    let z = b.constant(Tensor::zeros(&[3]));
    assert!(matches!(b.add(x, z), Err(Error::Shape(_))));
}

#[test]
fn unbound_input_is_reported() {
    let mut b = GraphBuilder::<f64>::new();
    let x = b.input("x", &[2]).unwrap();
    let root = b.sum(x).unwrap();
    let g = b.finish(root).unwrap();
    assert!(matches!(g.forward(&Bindings::new()), Err(Error::Binding(_))));
}

#[test]
fn wrong_binding_shape_is_reported() {
    let mut b = GraphBuilder::<f64>::new();
    let x = b.input("x", &[2]).unwrap();
    let root = b.sum(x).unwrap();
    let g = b.finish(root).unwrap();
    let bad = Tensor::vector(vec![1.0, 2.0, 3.0]);
    assert!(g.forward(&Bindings::new().with(x, &bad)).is_err());
}

#[test]
fn f32_graph_agrees_with_f64() {
    fn run<T: advse::Scalar>() -> f64 {
        let mut b = GraphBuilder::<T>::new();
        let x = b.input("x", &[3]).unwrap();
        let s = b.sigmoid(x).unwrap();
        let root = b.l2_norm(s).unwrap();
        let g = b.finish(root).unwrap();
        let xv = Tensor::vector(vec![T::lit(0.2), T::lit(-1.0), T::lit(0.7)]);
        g.forward(&Bindings::new().with(x, &xv)).unwrap().item().to_f64().unwrap()
    }
    assert_relative_eq!(run::<f32>(), run::<f64>(), epsilon = 1e-6);
}

#[test]
fn adam_minimizes_a_quadratic() {
    let mut st = AdamState::<f64>::new(2, AdamConfig::with_lr(0.05));
    let mut p = [3.0, -2.0];
    for _ in 0..2000 {
        let g = [2.0 * (p[0] - 1.0), 2.0 * (p[1] + 0.5)];
        st.step(&mut p, &g).unwrap();
    }
    assert_relative_eq!(p[0], 1.0, epsilon = 1e-3);
    assert_relative_eq!(p[1], -0.5, epsilon = 1e-3);
}
