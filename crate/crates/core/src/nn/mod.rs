//! Dense-matrix neural primitives: matrices, the exact GELU, two-layer mixing
//! MLPs, a reverse-mode tape, optimizers and a finite-difference checker.

mod gradcheck;
mod matrix;
mod mlp;
mod optim;
mod tape;

pub use gradcheck::{grad_check, GradCheck};
pub use matrix::Matrix;
pub use mlp::{MixAxis, Mlp2, Mlp2Vars};
pub use optim::{Adam, Optimizer, OptimizerKind, Sgd};
pub use tape::{Gradients, Tape, Var};

/// Dropout settings for one training forward pass.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut dyn rand::RngCore,
}

use core::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

/// Exact GELU, `x * Phi(x)`.
#[inline]
pub fn gelu(x: f64) -> f64 {
    x * normal_cdf(x)
}

/// `d/dx [x * Phi(x)] = Phi(x) + x * phi(x)`.
#[inline]
pub fn gelu_derivative(x: f64) -> f64 {
    let pdf = libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI);
    normal_cdf(x) + x * pdf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-6);
        assert!((gelu(1.0) - 0.841345).abs() < 1e-5);
    }

    #[test]
    fn gelu_derivative_matches_central_difference() {
        for &x in &[-3.0, -1.2, -0.1, 0.0, 0.4, 2.5] {
            let h = 1e-6;
            let fd = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            assert!((fd - gelu_derivative(x)).abs() < 1e-8, "x={x}");
        }
    }
}
