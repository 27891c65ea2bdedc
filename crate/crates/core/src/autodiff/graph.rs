//! A small eager reverse-mode tape. Every op computes its value at
//! construction time and registers a backward closure object; `backward`
//! walks the tape in reverse creation order, which is a topological order by
//! construction.

use ndarray::{ArrayD, Zip};

use super::scalar::Scalar;

/// Handle to a tensor on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Tid(pub(crate) usize);

pub(crate) struct Node<T: Scalar> {
    pub value: ArrayD<T>,
    pub needs_grad: bool,
    pub back: Option<Box<dyn BackwardOp<T>>>,
}

/// Read-only view of all node values during the backward pass.
pub struct Values<'a, T: Scalar>(pub(crate) &'a [Node<T>]);

impl<'a, T: Scalar> Values<'a, T> {
    pub fn get(&self, id: Tid) -> &ArrayD<T> {
        &self.0[id.0].value
    }
}

/// Accumulates gradient contributions into per-node buffers.
pub struct GradSink<'a, T: Scalar> {
    grads: &'a mut [Option<ArrayD<T>>],
    needs: &'a [bool],
}

impl<'a, T: Scalar> GradSink<'a, T> {
    /// Adds `contrib` to the gradient of `id`. No-op for nodes that do not
    /// require gradients, so ops can push unconditionally.
    pub fn add(&mut self, id: Tid, contrib: ArrayD<T>) {
        if !self.needs[id.0] {
            return;
        }
        match &mut self.grads[id.0] {
            Some(g) => {
                Zip::from(g).and(&contrib).for_each(|a, &b| *a = *a + b);
            }
            slot @ None => *slot = Some(contrib),
        }
    }

    pub fn needs(&self, id: Tid) -> bool {
        self.needs[id.0]
    }
}

/// One backward rule. Implementations capture their input ids and whatever
/// forward context they need.
pub trait BackwardOp<T: Scalar> {
    fn backward(&self, grad_out: &ArrayD<T>, values: &Values<'_, T>, sink: &mut GradSink<'_, T>);
}

/// Gradients keyed by tensor id, as produced by [`Graph::backward`].
pub struct Grads<T: Scalar> {
    grads: Vec<Option<ArrayD<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, id: Tid) -> Option<&ArrayD<T>> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient of a leaf, zero-filled when nothing flowed into it.
    pub fn get_or_zeros(&self, id: Tid, shape: &[usize]) -> ArrayD<T> {
        match self.get(id) {
            Some(g) => g.clone(),
            None => ArrayD::zeros(shape.to_vec()),
        }
    }
}

pub struct Graph<T: Scalar> {
    pub(crate) nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: Tid) -> &ArrayD<T> {
        &self.nodes[id.0].value
    }

    /// Scalar value of a 0-d tensor.
    pub fn scalar(&self, id: Tid) -> T {
        let v = self.value(id);
        debug_assert_eq!(v.ndim(), 0, "scalar() on non-0-d tensor");
        *v.iter().next().expect("0-d tensor has one element")
    }

    pub fn needs_grad(&self, id: Tid) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// A tensor gradients never flow into.
    pub fn constant(&mut self, value: ArrayD<T>) -> Tid {
        self.push(value, false, None)
    }

    /// A differentiable input (parameter or image under optimization).
    pub fn leaf(&mut self, value: ArrayD<T>) -> Tid {
        self.push(value, true, None)
    }

    /// Re-enters an existing value as a constant (gradient stop).
    pub fn detach(&mut self, id: Tid) -> Tid {
        let v = self.value(id).clone();
        self.constant(v)
    }

    /// Registers a custom node: a computed value plus its backward rule.
    pub fn custom_op(
        &mut self,
        value: ArrayD<T>,
        needs_grad: bool,
        back: Option<Box<dyn BackwardOp<T>>>,
    ) -> Tid {
        self.push(value, needs_grad, back)
    }

    pub(crate) fn push(
        &mut self,
        value: ArrayD<T>,
        needs_grad: bool,
        back: Option<Box<dyn BackwardOp<T>>>,
    ) -> Tid {
        self.nodes.push(Node {
            value,
            needs_grad,
            back,
        });
        Tid(self.nodes.len() - 1)
    }

    pub(crate) fn any_needs_grad(&self, ids: &[Tid]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].needs_grad)
    }

    /// Reverse pass seeded with `d(loss_id)/d(loss_id) = 1`; `loss_id` must
    /// be 0-d. Returns gradients for every leaf reached by the sweep.
    pub fn backward(&self, loss_id: Tid) -> Grads<T> {
        self.backward_retaining(loss_id, &[])
    }

    /// Like [`Graph::backward`], additionally keeping the gradients of the
    /// listed intermediate nodes (e.g. a generated image inside the graph).
    pub fn backward_retaining(&self, loss_id: Tid, retain: &[Tid]) -> Grads<T> {
        assert_eq!(
            self.nodes[loss_id.0].value.ndim(),
            0,
            "backward seed must be a scalar node"
        );
        let needs: Vec<bool> = self.nodes.iter().map(|n| n.needs_grad).collect();
        let mut grads: Vec<Option<ArrayD<T>>> = vec![None; self.nodes.len()];
        grads[loss_id.0] = Some(ArrayD::from_elem(Vec::<usize>::new(), T::one()));

        for i in (0..=loss_id.0).rev() {
            if !needs[i] {
                continue;
            }
            let Some(grad_out) = grads[i].take() else {
                continue;
            };
            if let Some(back) = &self.nodes[i].back {
                let values = Values(&self.nodes);
                let mut sink = GradSink {
                    grads: &mut grads,
                    needs: &needs,
                };
                back.backward(&grad_out, &values, &mut sink);
            }
            // Leaf gradients are the pass's outputs; intermediate buffers
            // are dropped once consumed to keep the peak footprint low.
            if self.nodes[i].back.is_none() || retain.contains(&Tid(i)) {
                grads[i] = Some(grad_out);
            }
        }
        Grads { grads }
    }
}
