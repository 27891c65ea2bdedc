use ndarray::ArrayD;

use crate::autodiff::Scalar;
use crate::models::ParamSet;

const ADAM_EPS: f64 = 1e-8;

/// Adam moments for one network, aligned with its parameter order.
pub struct AdamState<T: Scalar> {
    m: Vec<ArrayD<T>>,
    v: Vec<ArrayD<T>>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let zeros = |i: usize| ArrayD::<T>::zeros(params.value(i).shape().to_vec());
        Self {
            m: (0..params.len()).map(zeros).collect(),
            v: (0..params.len()).map(zeros).collect(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// One update over all tensors of the network. `grads[i]` must align
    /// with parameter `i`; missing gradients (None) leave moments and the
    /// parameter untouched for that tensor.
    pub fn step(
        &mut self,
        params: &mut ParamSet<T>,
        grads: &[Option<ArrayD<T>>],
        lr: f64,
        beta1: f64,
        beta2: f64,
    ) {
        assert_eq!(grads.len(), params.len(), "gradient/parameter count");
        self.t += 1;
        let b1 = T::cast_from(beta1);
        let b2 = T::cast_from(beta2);
        let one_m_b1 = T::cast_from(1.0 - beta1);
        let one_m_b2 = T::cast_from(1.0 - beta2);
        let corr1 = T::cast_from(1.0 / (1.0 - beta1.powi(self.t as i32)));
        let corr2 = T::cast_from(1.0 / (1.0 - beta2.powi(self.t as i32)));
        let lr_t = T::cast_from(lr);
        let eps = T::cast_from(ADAM_EPS);
        for (i, grad) in grads.iter().enumerate() {
            let Some(grad) = grad else { continue };
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let p = params.value_mut(i);
            ndarray::Zip::from(p)
                .and(m)
                .and(v)
                .and(grad)
                .for_each(|p, m, v, &g| {
                    *m = b1 * *m + one_m_b1 * g;
                    *v = b2 * *v + one_m_b2 * g * g;
                    let mh = *m * corr1;
                    let vh = *v * corr2;
                    *p = *p - lr_t * mh / (vh.sqrt() + eps);
                });
        }
    }

    pub fn export(&self) -> (Vec<ArrayD<T>>, Vec<ArrayD<T>>, u64) {
        (self.m.clone(), self.v.clone(), self.t)
    }

    pub fn restore(&mut self, m: Vec<ArrayD<T>>, v: Vec<ArrayD<T>>, t: u64) {
        assert_eq!(m.len(), self.m.len());
        assert_eq!(v.len(), self.v.len());
        self.m = m;
        self.v = v;
        self.t = t;
    }
}
