use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{shape_err, Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

fn check_aligned(params: &[&mut Matrix], grads: &[Matrix]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(shape_err(
            "optimizer step",
            format!("{} gradients", params.len()),
            format!("{}", grads.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(shape_err(
                "optimizer step",
                format!("gradient {i} shaped {}", p.shape_string()),
                g.shape_string(),
            ));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {i}")));
        }
    }
    Ok(())
}

/// Plain stochastic gradient descent, `p <- p - lr * g`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sgd {
    lr: f64,
}

impl Sgd {
    /// A zero rate is accepted (it freezes the parameters).
    pub fn new(lr: f64) -> Result<Self> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate {lr} must be finite and >= 0")));
        }
        Ok(Self { lr })
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    /// Nothing is written unless every gradient is finite.
    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        check_aligned(params, grads)?;
        for (p, g) in params.iter_mut().zip(grads) {
            for (pv, gv) in p.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *pv -= self.lr * gv;
            }
        }
        Ok(())
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(lr: f64) -> Result<Self> {
        Sgd::new(lr)?;
        Ok(Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        })
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        check_aligned(params, grads)?;
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(self.t));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(self.t));
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].as_mut_slice();
            let v = self.v[i].as_mut_slice();
            for (j, (pv, &gv)) in p.as_mut_slice().iter_mut().zip(g.as_slice()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gv;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gv * gv;
                let mh = m[j] / c1;
                let vh = v[j] / c2;
                *pv -= self.lr * mh / (libm::sqrt(vh) + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Sgd(Sgd),
    Adam(Adam),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        Ok(match kind {
            OptimizerKind::Sgd => Self::Sgd(Sgd::new(lr)?),
            OptimizerKind::Adam => Self::Adam(Adam::new(lr)?),
        })
    }

    pub fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix]) -> Result<()> {
        match self {
            Self::Sgd(s) => s.step(params, grads),
            Self::Adam(a) => a.step(params, grads),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn step(lr: f64, p: &[f64], g: &[f64]) -> Result<Vec<f64>> {
        let mut pm = Matrix::row_vector(p.to_vec());
        let gm = Matrix::row_vector(g.to_vec());
        Sgd::new(lr)?.step(&mut [&mut pm], &[gm])?;
        Ok(pm.into_vec())
    }

    #[test]
    fn sgd_arithmetic() {
        assert_eq!(step(0.0, &[1.0, -2.0], &[5.0, 3.0]).unwrap(), vec![1.0, -2.0]);
        let p = step(0.1, &[1.0], &[2.0]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
        assert_eq!(step(0.5, &[1.0, 1.0], &[1.0, -1.0]).unwrap(), vec![0.5, 1.5]);
    }

    #[test]
    fn non_finite_gradient_aborts_without_writing() {
        let mut p = Matrix::row_vector(vec![1.0, 2.0]);
        let g = Matrix::row_vector(vec![0.5, f64::NAN]);
        let err = Sgd::new(0.1).unwrap().step(&mut [&mut p], &[g]).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(p.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn negative_rate_rejected() {
        assert!(Sgd::new(-0.1).is_err());
        assert!(Sgd::new(f64::INFINITY).is_err());
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = Matrix::row_vector(vec![1.0, 1.0]);
        let g = Matrix::row_vector(vec![3.0, -0.2]);
        Adam::new(0.01).unwrap().step(&mut [&mut p], &[g]).unwrap();
        assert!((p.get(0, 0) - 0.99).abs() < 1e-8);
        assert!((p.get(0, 1) - 1.01).abs() < 1e-8);
    }
}
