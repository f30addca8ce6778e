use std::cell::{Ref, RefCell};
use std::rc::Rc;

use super::Tensor;

/// A trainable value with its accumulated gradient.
#[derive(Clone, Debug)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
}

/// Shared handle to a [`Parameter`].
///
/// Handles are cheap to clone and are what the tape records; gradients
/// land in the shared cell when `backward` runs.
#[derive(Clone, Debug)]
pub struct Param(Rc<RefCell<Parameter>>);

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self(Rc::new(RefCell::new(Parameter { value, grad })))
    }

    pub fn value(&self) -> Ref<'_, Tensor> {
        Ref::map(self.0.borrow(), |p| &p.value)
    }

    pub fn grad(&self) -> Ref<'_, Tensor> {
        Ref::map(self.0.borrow(), |p| &p.grad)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.0.borrow().value.shape().to_vec()
    }

    pub fn zero_grad(&self) {
        self.0.borrow_mut().grad.fill(0.0);
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.0.borrow().grad.norm_sq()
    }

    pub fn accumulate_grad(&self, g: &Tensor) {
        self.0.borrow_mut().grad.add_assign(g);
    }

    /// Overwrite the value, keeping shape. Panics on shape mismatch.
    pub fn set_value(&self, value: &Tensor) {
        let mut p = self.0.borrow_mut();
        assert_eq!(p.value.shape(), value.shape(), "parameter shape is fixed");
        p.value.data_mut().copy_from_slice(value.data());
    }

    /// Apply `f(value, grad)` in place.
    pub fn update(&self, f: impl FnOnce(&mut [f64], &[f64])) {
        let mut p = self.0.borrow_mut();
        let Parameter { value, grad } = &mut *p;
        f(value.data_mut(), grad.data());
    }

    /// A fresh, unshared parameter with the same value and a zero grad.
    pub fn deep_clone(&self) -> Self {
        Self::new(self.value().clone())
    }

    pub fn ptr_eq(&self, other: &Param) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }
}
