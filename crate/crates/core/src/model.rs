//! The length-model abstraction shared by the learned mapping and the
//! ground-truth geometry, so the Jacobian smoother and the filter can run on
//! either.

/// A joint-angle to relative-muscle-length function `l = f(θ)` (rad → mm).
pub trait LengthModel: Sync {
    fn n_joints(&self) -> usize;
    fn n_muscles(&self) -> usize;
    /// Panics if `theta.len() != self.n_joints()`; public entry points check
    /// dimensions before calling.
    fn lengths(&self, theta: &[f64]) -> Vec<f64>;
}

impl<T: LengthModel + ?Sized> LengthModel for &T {
    fn n_joints(&self) -> usize {
        (**self).n_joints()
    }
    fn n_muscles(&self) -> usize {
        (**self).n_muscles()
    }
    fn lengths(&self, theta: &[f64]) -> Vec<f64> {
        (**self).lengths(theta)
    }
}

/// Adapter turning a closure into a [`LengthModel`].
pub struct FnModel<F> {
    n: usize,
    m: usize,
    f: F,
}

impl<F> FnModel<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(n: usize, m: usize, f: F) -> Self {
        Self { n, m, f }
    }
}

impl<F> LengthModel for FnModel<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn n_joints(&self) -> usize {
        self.n
    }
    fn n_muscles(&self) -> usize {
        self.m
    }
    fn lengths(&self, theta: &[f64]) -> Vec<f64> {
        assert_eq!(theta.len(), self.n, "joint-angle dimension");
        (self.f)(theta)
    }
}
