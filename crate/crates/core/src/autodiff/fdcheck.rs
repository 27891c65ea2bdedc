//! Central finite-difference gradient checking. This is the independent
//! oracle the test and acceptance suites compare every backward rule
//! against; it never touches the reverse-mode path.

use ndarray::ArrayD;

use super::graph::{Graph, Tid};

const STEP: f64 = 1e-5;

/// Deterministic pseudo-random tensor in roughly [-0.6, 0.6].
pub fn seeded_values(shape: &[usize], seed: u64) -> ArrayD<f64> {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).max(1);
    let mut next = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    };
    ArrayD::from_shape_simple_fn(shape.to_vec(), || next() * 1.2)
}

/// Compares analytic gradients of a scalar-valued graph against central
/// finite differences for a single input tensor.
pub fn check_gradients(
    shape: &[usize],
    build: impl Fn(&mut Graph<f64>, Tid) -> Tid,
    tol_rel: f64,
    tol_abs: f64,
) {
    check_gradients_multi(&[shape], |g, xs| build(g, xs[0]), tol_rel, tol_abs);
}

/// Multi-input version of [`check_gradients`]; every input is perturbed
/// element by element.
pub fn check_gradients_multi(
    shapes: &[&[usize]],
    build: impl Fn(&mut Graph<f64>, &[Tid]) -> Tid,
    tol_rel: f64,
    tol_abs: f64,
) {
    let inputs: Vec<ArrayD<f64>> = shapes
        .iter()
        .enumerate()
        .map(|(i, s)| seeded_values(s, 17 + i as u64))
        .collect();
    let max_err = max_gradient_error(&inputs, &build, |a, n| {
        let denom = a.abs().max(n.abs());
        let err = (a - n).abs();
        if err <= tol_abs {
            0.0
        } else {
            err / denom.max(1e-300)
        }
    });
    assert!(
        max_err <= tol_rel,
        "gradient mismatch: worst relative error {max_err:.3e} above {tol_rel:.1e}"
    );
}

/// Worst-case error between analytic and numeric gradients under a custom
/// error measure. Exposed so suites can report the value they tested.
pub fn max_gradient_error(
    inputs: &[ArrayD<f64>],
    build: &impl Fn(&mut Graph<f64>, &[Tid]) -> Tid,
    error: impl Fn(f64, f64) -> f64,
) -> f64 {
    let eval = |values: &[ArrayD<f64>]| -> f64 {
        let mut g: Graph<f64> = Graph::new();
        let ids: Vec<Tid> = values.iter().map(|v| g.leaf(v.clone())).collect();
        let loss = build(&mut g, &ids);
        g.scalar(loss)
    };

    // Analytic gradients at the base point.
    let mut g: Graph<f64> = Graph::new();
    let ids: Vec<Tid> = inputs.iter().map(|v| g.leaf(v.clone())).collect();
    let loss = build(&mut g, &ids);
    let grads = g.backward(loss);

    let mut worst = 0.0f64;
    let mut perturbed: Vec<ArrayD<f64>> = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(ids[k], input.shape());
        let n_elems = input.len();
        for idx in 0..n_elems {
            let base = input.as_slice().expect("contiguous")[idx];
            perturbed[k].as_slice_mut().expect("contiguous")[idx] = base + STEP;
            let up = eval(&perturbed);
            perturbed[k].as_slice_mut().expect("contiguous")[idx] = base - STEP;
            let down = eval(&perturbed);
            perturbed[k].as_slice_mut().expect("contiguous")[idx] = base;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic.as_slice().expect("contiguous")[idx];
            worst = worst.max(error(a, numeric));
        }
    }
    worst
}
