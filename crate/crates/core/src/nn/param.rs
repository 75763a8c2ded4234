use rand::Rng;

use super::Scalar;

/// A trainable tensor with its accumulated gradient.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub dims: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn zeros(name: impl Into<String>, dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Self {
            name: name.into(),
            dims: dims.to_vec(),
            value: vec![T::zero(); n],
            grad: vec![T::zero(); n],
        }
    }

    pub fn filled(name: impl Into<String>, dims: &[usize], v: T) -> Self {
        let mut p = Self::zeros(name, dims);
        p.value.iter_mut().for_each(|x| *x = v);
        p
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn fan_in_uniform<R: Rng + ?Sized>(
        name: impl Into<String>,
        dims: &[usize],
        fan_in: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let mut p = Self::zeros(name, dims);
        for v in &mut p.value {
            *v = T::c(rng.random_range(-bound..bound));
        }
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// Anything owning parameters and non-trainable state buffers.
pub trait Module<T: Scalar> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>));

    /// Non-trainable state (batch-norm running statistics). Gradients stay zero.
    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&mut Param<T>)) {}

    fn zero_grad(&mut self) {
        self.visit_params(&mut |p| p.zero_grad());
    }
}
