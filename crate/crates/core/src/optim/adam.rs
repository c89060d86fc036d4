use crate::scalar::Scalar;

/// Adam state for one parameter group.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<T>,
    v: Vec<T>,
    step: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(len: usize, beta1: T, beta2: T, eps: T) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            step: 0,
        }
    }

    pub fn steps(&self) -> i32 {
        self.step
    }

    /// One bias-corrected update of `params` in place.
    pub fn update(&mut self, params: &mut [T], grad: &[T], lr: T) {
        self.update_with(params, grad, |_| lr);
    }

    /// Update with a separate learning rate per element.
    pub fn update_per_element(&mut self, params: &mut [T], grad: &[T], lr: &[T]) {
        assert_eq!(lr.len(), params.len(), "one rate per parameter");
        self.update_with(params, grad, |k| lr[k]);
    }

    fn update_with(&mut self, params: &mut [T], grad: &[T], lr: impl Fn(usize) -> T) {
        assert_eq!(
            params.len(),
            self.m.len(),
            "parameter length changed under Adam"
        );
        self.step += 1;
        let one = T::one();
        let bc1 = one - self.beta1.powi(self.step);
        let bc2 = one - self.beta2.powi(self.step);
        for (k, ((p, g), (m, v))) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .enumerate()
        {
            *m = self.beta1 * *m + (one - self.beta1) * *g;
            *v = self.beta2 * *v + (one - self.beta2) * *g * *g;
            let mh = *m / bc1;
            let vh = *v / bc2;
            *p -= lr(k) * mh / (vh.sqrt() + self.eps);
        }
    }
}
