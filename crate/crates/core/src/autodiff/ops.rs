//! Elementwise and reduction ops on the tape.

use ndarray::{ArrayD, Zip};

use super::graph::{BackwardOp, GradSink, Graph, Tid, Values};
use super::scalar::Scalar;

fn same_shape<T: Scalar>(g: &Graph<T>, a: Tid, b: Tid, what: &str) {
    assert_eq!(
        g.value(a).shape(),
        g.value(b).shape(),
        "{what}: shape mismatch"
    );
}

// ---------------------------------------------------------------- add / sub

struct AddBack {
    a: Tid,
    b: Tid,
}
impl<T: Scalar> BackwardOp<T> for AddBack {
    fn backward(&self, grad: &ArrayD<T>, _v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        sink.add(self.a, grad.clone());
        sink.add(self.b, grad.clone());
    }
}

struct SubBack {
    a: Tid,
    b: Tid,
}
impl<T: Scalar> BackwardOp<T> for SubBack {
    fn backward(&self, grad: &ArrayD<T>, _v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        sink.add(self.a, grad.clone());
        sink.add(self.b, grad.mapv(|g| -g));
    }
}

struct MulBack {
    a: Tid,
    b: Tid,
}
impl<T: Scalar> BackwardOp<T> for MulBack {
    fn backward(&self, grad: &ArrayD<T>, v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        if sink.needs(self.a) {
            sink.add(self.a, grad * v.get(self.b));
        }
        if sink.needs(self.b) {
            sink.add(self.b, grad * v.get(self.a));
        }
    }
}

// ------------------------------------------------------- unary elementwise

/// Unary op whose derivative only needs the *input* value.
struct UnaryByInput<T: Scalar> {
    x: Tid,
    dfdx: fn(T) -> T,
}
impl<T: Scalar> BackwardOp<T> for UnaryByInput<T> {
    fn backward(&self, grad: &ArrayD<T>, v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let x = v.get(self.x);
        let mut out = grad.clone();
        Zip::from(&mut out).and(x).for_each(|g, &xv| *g = *g * (self.dfdx)(xv));
        sink.add(self.x, out);
    }
}

/// Unary op whose derivative only needs the *output* value.
struct UnaryByOutput<T: Scalar> {
    x: Tid,
    y: Tid,
    dfdy: fn(T) -> T,
}
impl<T: Scalar> BackwardOp<T> for UnaryByOutput<T> {
    fn backward(&self, grad: &ArrayD<T>, v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let y = v.get(self.y);
        let mut out = grad.clone();
        Zip::from(&mut out).and(y).for_each(|g, &yv| *g = *g * (self.dfdy)(yv));
        sink.add(self.x, out);
    }
}

struct ScaleBack<T: Scalar> {
    x: Tid,
    c: T,
}
impl<T: Scalar> BackwardOp<T> for ScaleBack<T> {
    fn backward(&self, grad: &ArrayD<T>, _v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        sink.add(self.x, grad.mapv(|g| g * self.c));
    }
}

struct MulConstBack<T: Scalar> {
    x: Tid,
    c: ArrayD<T>,
}
impl<T: Scalar> BackwardOp<T> for MulConstBack<T> {
    fn backward(&self, grad: &ArrayD<T>, _v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        sink.add(self.x, grad * &self.c);
    }
}

// ------------------------------------------------------------- reductions

struct SumAllBack {
    x: Tid,
    shape: Vec<usize>,
}
impl<T: Scalar> BackwardOp<T> for SumAllBack {
    fn backward(&self, grad: &ArrayD<T>, _v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let g = *grad.iter().next().expect("scalar grad");
        sink.add(self.x, ArrayD::from_elem(self.shape.clone(), g));
    }
}

struct MeanAllBack {
    x: Tid,
    shape: Vec<usize>,
}
impl<T: Scalar> BackwardOp<T> for MeanAllBack {
    fn backward(&self, grad: &ArrayD<T>, _v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let n: usize = self.shape.iter().product();
        let g = *grad.iter().next().expect("scalar grad") / T::cast_from(n as f64);
        sink.add(self.x, ArrayD::from_elem(self.shape.clone(), g));
    }
}

struct ReshapeBack {
    x: Tid,
    shape: Vec<usize>,
}
impl<T: Scalar> BackwardOp<T> for ReshapeBack {
    fn backward(&self, grad: &ArrayD<T>, _v: &Values<'_, T>, sink: &mut GradSink<'_, T>) {
        let g = grad
            .clone()
            .into_shape_with_order(self.shape.clone())
            .expect("reshape backward");
        sink.add(self.x, g);
    }
}

impl<T: Scalar> Graph<T> {
    fn unary_by_input(&mut self, x: Tid, f: fn(T) -> T, dfdx: fn(T) -> T) -> Tid {
        let value = self.value(x).mapv(f);
        let needs = self.needs_grad(x);
        self.push(
            value,
            needs,
            needs.then(|| Box::new(UnaryByInput { x, dfdx }) as Box<dyn BackwardOp<T>>),
        )
    }

    fn unary_by_output(&mut self, x: Tid, f: fn(T) -> T, dfdy: fn(T) -> T) -> Tid {
        let value = self.value(x).mapv(f);
        let needs = self.needs_grad(x);
        let id = self.push(value, needs, None);
        if needs {
            self.nodes[id.0].back = Some(Box::new(UnaryByOutput { x, y: id, dfdy }));
        }
        id
    }

    pub fn add(&mut self, a: Tid, b: Tid) -> Tid {
        same_shape(self, a, b, "add");
        let value = self.value(a) + self.value(b);
        let needs = self.any_needs_grad(&[a, b]);
        self.push(
            value,
            needs,
            needs.then(|| Box::new(AddBack { a, b }) as Box<dyn BackwardOp<T>>),
        )
    }

    pub fn sub(&mut self, a: Tid, b: Tid) -> Tid {
        same_shape(self, a, b, "sub");
        let value = self.value(a) - self.value(b);
        let needs = self.any_needs_grad(&[a, b]);
        self.push(
            value,
            needs,
            needs.then(|| Box::new(SubBack { a, b }) as Box<dyn BackwardOp<T>>),
        )
    }

    pub fn mul(&mut self, a: Tid, b: Tid) -> Tid {
        same_shape(self, a, b, "mul");
        let value = self.value(a) * self.value(b);
        let needs = self.any_needs_grad(&[a, b]);
        self.push(
            value,
            needs,
            needs.then(|| Box::new(MulBack { a, b }) as Box<dyn BackwardOp<T>>),
        )
    }

    /// Elementwise multiplication by a same-shape constant array.
    pub fn mul_const(&mut self, x: Tid, c: ArrayD<T>) -> Tid {
        assert_eq!(self.value(x).shape(), c.shape(), "mul_const shape");
        let value = self.value(x) * &c;
        let needs = self.needs_grad(x);
        self.push(
            value,
            needs,
            needs.then(|| Box::new(MulConstBack { x, c }) as Box<dyn BackwardOp<T>>),
        )
    }

    pub fn scale(&mut self, x: Tid, c: T) -> Tid {
        let value = self.value(x).mapv(|v| v * c);
        let needs = self.needs_grad(x);
        self.push(
            value,
            needs,
            needs.then(|| Box::new(ScaleBack { x, c }) as Box<dyn BackwardOp<T>>),
        )
    }

    pub fn add_scalar(&mut self, x: Tid, c: T) -> Tid {
        let value = self.value(x).mapv(|v| v + c);
        let needs = self.needs_grad(x);
        self.push(
            value,
            needs,
            needs.then(|| Box::new(UnaryByInput { x, dfdx: |_| T::one() }) as Box<dyn BackwardOp<T>>),
        )
    }

    pub fn neg(&mut self, x: Tid) -> Tid {
        self.scale(x, -T::one())
    }

    pub fn relu(&mut self, x: Tid) -> Tid {
        self.unary_by_input(
            x,
            |v| if v > T::zero() { v } else { T::zero() },
            |v| if v > T::zero() { T::one() } else { T::zero() },
        )
    }

    pub fn leaky_relu_02(&mut self, x: Tid) -> Tid {
        self.unary_by_input(
            x,
            |v| {
                if v > T::zero() {
                    v
                } else {
                    v * T::cast_from(0.2)
                }
            },
            |v| {
                if v > T::zero() {
                    T::one()
                } else {
                    T::cast_from(0.2)
                }
            },
        )
    }

    pub fn tanh(&mut self, x: Tid) -> Tid {
        self.unary_by_output(x, |v| v.tanh(), |y| T::one() - y * y)
    }

    pub fn sigmoid(&mut self, x: Tid) -> Tid {
        self.unary_by_output(
            x,
            |v| T::one() / (T::one() + (-v).exp()),
            |y| y * (T::one() - y),
        )
    }

    /// `ln(1 + exp(x))`, evaluated stably.
    pub fn softplus(&mut self, x: Tid) -> Tid {
        self.unary_by_input(
            x,
            |v| {
                if v > T::zero() {
                    v + (-v).exp().ln_1p()
                } else {
                    v.exp().ln_1p()
                }
            },
            |v| T::one() / (T::one() + (-v).exp()),
        )
    }

    pub fn exp(&mut self, x: Tid) -> Tid {
        self.unary_by_output(x, |v| v.exp(), |y| y)
    }

    /// Natural log; inputs must be positive (a tiny floor guards the
    /// heatmap cross-entropy path).
    pub fn ln(&mut self, x: Tid) -> Tid {
        self.unary_by_input(
            x,
            |v| v.max(T::cast_from(1e-30)).ln(),
            |v| T::one() / v.max(T::cast_from(1e-30)),
        )
    }

    pub fn abs(&mut self, x: Tid) -> Tid {
        self.unary_by_input(
            x,
            |v| v.abs(),
            |v| {
                if v > T::zero() {
                    T::one()
                } else if v < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            },
        )
    }

    pub fn square(&mut self, x: Tid) -> Tid {
        self.unary_by_input(x, |v| v * v, |v| T::cast_from(2.0) * v)
    }

    pub fn sum_all(&mut self, x: Tid) -> Tid {
        let value = ArrayD::from_elem(Vec::<usize>::new(), self.value(x).sum());
        let needs = self.needs_grad(x);
        let shape = self.value(x).shape().to_vec();
        self.push(
            value,
            needs,
            needs.then(|| Box::new(SumAllBack { x, shape }) as Box<dyn BackwardOp<T>>),
        )
    }

    pub fn mean_all(&mut self, x: Tid) -> Tid {
        let n: usize = self.value(x).len();
        assert!(n > 0, "mean of empty tensor");
        let value = ArrayD::from_elem(
            Vec::<usize>::new(),
            self.value(x).sum() / T::cast_from(n as f64),
        );
        let needs = self.needs_grad(x);
        let shape = self.value(x).shape().to_vec();
        self.push(
            value,
            needs,
            needs.then(|| Box::new(MeanAllBack { x, shape }) as Box<dyn BackwardOp<T>>),
        )
    }

    pub fn reshape(&mut self, x: Tid, shape: &[usize]) -> Tid {
        let old_shape = self.value(x).shape().to_vec();
        let value = self
            .value(x)
            .clone()
            .into_shape_with_order(shape.to_vec())
            .expect("reshape: element count must match");
        let needs = self.needs_grad(x);
        self.push(
            value,
            needs,
            needs.then(|| Box::new(ReshapeBack { x, shape: old_shape }) as Box<dyn BackwardOp<T>>),
        )
    }

    /// Mean absolute difference between two same-shape tensors.
    pub fn l1_distance(&mut self, a: Tid, b: Tid) -> Tid {
        let d = self.sub(a, b);
        let d = self.abs(d);
        self.mean_all(d)
    }

    /// Mean squared difference between two same-shape tensors.
    pub fn mse_distance(&mut self, a: Tid, b: Tid) -> Tid {
        let d = self.sub(a, b);
        let d = self.square(d);
        self.mean_all(d)
    }
}

#[cfg(test)]
mod tests {
    use super::super::fdcheck::check_gradients;
    use super::*;
    use ndarray::IxDyn;

    #[test]
    fn add_mul_values() {
        let mut g: Graph<f64> = Graph::new();
        let a = g.leaf(ArrayD::from_elem(IxDyn(&[2, 2]), 3.0));
        let b = g.constant(ArrayD::from_elem(IxDyn(&[2, 2]), 4.0));
        let c = g.mul(a, b);
        let s = g.sum_all(c);
        assert_eq!(g.scalar(s), 48.0);
        let grads = g.backward(s);
        assert_eq!(grads.get(a).unwrap()[[0, 0]], 4.0);
        assert!(grads.get(b).is_none(), "constants receive no grads");
    }

    #[test]
    fn elementwise_gradients_match_finite_differences() {
        check_gradients(
            &[3, 4],
            |g, x| {
                let y = g.tanh(x);
                let y = g.square(y);
                let z = g.sigmoid(x);
                let y = g.add(y, z);
                let y = g.softplus(y);
                g.mean_all(y)
            },
            1e-6,
            1e-7,
        );
        check_gradients(
            &[5],
            |g, x| {
                let y = g.exp(x);
                let c = g.scale(y, 0.5);
                let s = g.add_scalar(c, 1.25);
                let s = g.square(s);
                g.sum_all(s)
            },
            1e-6,
            1e-7,
        );
    }

    #[test]
    fn relu_and_abs_gradients_away_from_kink() {
        // Inputs are sampled in [0.05, 1.05] offset to avoid the kink.
        check_gradients(
            &[4, 4],
            |g, x| {
                let shifted = g.add_scalar(x, 1.5); // all positive
                let y = g.relu(shifted);
                let z = g.leaky_relu_02(shifted);
                let y = g.mul(y, z);
                g.mean_all(y)
            },
            1e-6,
            1e-7,
        );
    }

    #[test]
    fn l1_and_mse_match_hand_rolled() {
        let mut g: Graph<f64> = Graph::new();
        let a = g.leaf(ndarray::arr1(&[1.0, 2.0, 3.0]).into_dyn());
        let b = g.constant(ndarray::arr1(&[1.5, 0.0, 3.0]).into_dyn());
        let l1 = g.l1_distance(a, b);
        let l2 = g.mse_distance(a, b);
        assert!((g.scalar(l1) - (0.5 + 2.0 + 0.0) / 3.0).abs() < 1e-12);
        assert!((g.scalar(l2) - (0.25 + 4.0 + 0.0) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn detach_stops_gradients() {
        let mut g: Graph<f64> = Graph::new();
        let x = g.leaf(ArrayD::from_elem(IxDyn(&[2]), 2.0));
        let d = g.detach(x);
        let y = g.square(d);
        let s = g.sum_all(y);
        let grads = g.backward(s);
        assert!(grads.get(x).is_none());
    }

    #[test]
    fn reshape_round_trips_gradients() {
        check_gradients(
            &[2, 6],
            |g, x| {
                let r = g.reshape(x, &[3, 4]);
                let y = g.square(r);
                g.sum_all(y)
            },
            1e-6,
            1e-9,
        );
    }
}
