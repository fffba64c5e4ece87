//! Reverse-mode gradient tape over the handful of primitives the forecasters
//! are built from.
//!
//! Values are recorded in execution order; [`Tape::backward`] walks the
//! record back to front, so every node's gradient is complete before it is
//! propagated to its inputs.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::{gelu, gelu_derivative, Matrix};
use crate::error::{shape_err, Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param,
    MatMul { lhs: Var, rhs: Var, rhs_transposed: bool },
    Add(Var, Var),
    AddRow(Var, Var),
    Gelu(Var),
    Transpose(Var),
    Reshape(Var),
    Dropout { src: Var, mask: Matrix },
    ConcatCols(Vec<Var>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Ordered record of primitive operations and their outputs.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<Option<Var>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant input. Its gradient is available after backward
    /// through [`Gradients::wrt`].
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Input)
    }

    /// Records trainable parameter `id`. Each id may be registered once per
    /// tape so that it receives exactly one accumulated gradient.
    pub fn param(&mut self, id: usize, value: &Matrix) -> Result<Var> {
        if self.params.len() <= id {
            self.params.resize(id + 1, None);
        }
        if self.params[id].is_some() {
            return Err(Error::InvalidArgument(format!(
                "parameter {id} registered twice on one tape"
            )));
        }
        let v = self.push(value.clone(), Op::Param);
        self.params[id] = Some(v);
        Ok(v)
    }

    /// Registers `values` as parameters `first_id..first_id + values.len()`.
    pub fn params<'a>(
        &mut self,
        first_id: usize,
        values: impl IntoIterator<Item = &'a Matrix>,
    ) -> Result<Vec<Var>> {
        values
            .into_iter()
            .enumerate()
            .map(|(i, m)| self.param(first_id + i, m))
            .collect()
    }

    pub fn matmul(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let value = self.value(lhs).matmul(self.value(rhs))?;
        Ok(self.push(
            value,
            Op::MatMul {
                lhs,
                rhs,
                rhs_transposed: false,
            },
        ))
    }

    /// `lhs * rhs^T`.
    pub fn matmul_t(&mut self, lhs: Var, rhs: Var) -> Result<Var> {
        let value = self.value(lhs).matmul_t(self.value(rhs))?;
        Ok(self.push(
            value,
            Op::MatMul {
                lhs,
                rhs,
                rhs_transposed: true,
            },
        ))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Adds the `1 x cols` matrix `row` to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        if rv.rows() != 1 || rv.cols() != xv.cols() {
            return Err(shape_err(
                "add_row",
                format!("1x{}", xv.cols()),
                rv.shape_string(),
            ));
        }
        let mut value = xv.clone();
        for r in 0..value.rows() {
            for (o, b) in value.row_mut(r).iter_mut().zip(rv.as_slice()) {
                *o += b;
            }
        }
        Ok(self.push(value, Op::AddRow(x, row)))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(gelu);
        self.push(value, Op::Gelu(x))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let rows = self.value(x).rows();
        self.transpose_blocks(x, rows)
            .expect("a full-height block always divides the row count")
    }

    /// Transposes each stacked `block_rows x cols` block of `x`.
    pub fn transpose_blocks(&mut self, x: Var, block_rows: usize) -> Result<Var> {
        let value = self.value(x).block_transpose(block_rows)?;
        Ok(self.push(value, Op::Transpose(x)))
    }

    pub fn reshape(&mut self, x: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(x).clone().reshape(rows, cols)?;
        Ok(self.push(value, Op::Reshape(x)))
    }

    /// Inverted dropout. A zero rate records nothing and returns `x`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, rate: f64, rng: &mut R) -> Result<Var> {
        if rate <= 0.0 {
            return Ok(x);
        }
        if rate >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "dropout rate {rate} must be below 1"
            )));
        }
        let keep = 1.0 / (1.0 - rate);
        let (rows, cols) = self.value(x).shape();
        let mask = Matrix::from_fn(rows, cols, |_, _| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        });
        let value = self.value(x).zip_with(&mask, |a, m| a * m)?;
        Ok(self.push(value, Op::Dropout { src: x, mask }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&v| self.value(v)).collect();
        let value = Matrix::concat_cols(&mats)?;
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    /// Propagates `seeds` (output variable, d loss / d output) back through
    /// the recorded operations in reverse order.
    pub fn backward(&self, seeds: &[(Var, Matrix)]) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape("tape is empty".to_string()));
        }
        if seeds.is_empty() {
            return Err(Error::EmptyTape("no output gradient supplied".to_string()));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        for (v, g) in seeds {
            let Some(node) = self.nodes.get(v.0) else {
                return Err(Error::EmptyTape(format!("variable {} was never recorded", v.0)));
            };
            node.value.check_same_shape("backward seed", g)?;
            accumulate(&mut grads[v.0], g.clone())?;
        }

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Input | Op::Param => {}
                Op::MatMul {
                    lhs,
                    rhs,
                    rhs_transposed,
                } => {
                    let (a, b) = (self.value(*lhs), self.value(*rhs));
                    let (da, db) = if *rhs_transposed {
                        (g.matmul(b)?, g.t_matmul(a)?)
                    } else {
                        (g.matmul_t(b)?, a.t_matmul(&g)?)
                    };
                    accumulate(&mut grads[lhs.0], da)?;
                    accumulate(&mut grads[rhs.0], db)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads[a.0], g.clone())?;
                    accumulate(&mut grads[b.0], g.clone())?;
                }
                Op::AddRow(x, row) => {
                    accumulate(&mut grads[row.0], g.sum_rows())?;
                    accumulate(&mut grads[x.0], g.clone())?;
                }
                Op::Gelu(x) => {
                    let dx = self.value(*x).zip_with(&g, |xv, gv| gv * gelu_derivative(xv))?;
                    accumulate(&mut grads[x.0], dx)?;
                }
                Op::Transpose(src) => {
                    let src_cols = self.value(*src).cols();
                    accumulate(&mut grads[src.0], g.block_transpose(src_cols)?)?;
                }
                Op::Reshape(x) => {
                    let (r, c) = self.value(*x).shape();
                    accumulate(&mut grads[x.0], g.clone().reshape(r, c)?)?;
                }
                Op::Dropout { src, mask } => {
                    accumulate(&mut grads[src.0], g.zip_with(mask, |a, m| a * m)?)?;
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let cols = self.value(*p).cols();
                        let part = Matrix::from_fn(g.rows(), cols, |r, c| g.get(r, offset + c));
                        accumulate(&mut grads[p.0], part)?;
                        offset += cols;
                    }
                }
            }
            grads[idx] = Some(g);
        }

        let params = self
            .params
            .iter()
            .map(|slot| {
                slot.map(|v| {
                    grads[v.0]
                        .clone()
                        .unwrap_or_else(|| Matrix::zeros(self.value(v).rows(), self.value(v).cols()))
                })
            })
            .collect();
        Ok(Gradients { nodes: grads, params })
    }
}

fn accumulate(slot: &mut Option<Matrix>, g: Matrix) -> Result<()> {
    match slot {
        Some(existing) => existing.add_assign(&g),
        None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Result of [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Matrix>>,
    params: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient with respect to any recorded value, if it was reached.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: usize) -> Option<&Matrix> {
        self.params.get(id).and_then(Option::as_ref)
    }

    /// Parameter gradients ordered by id. Fails if an id below the highest
    /// registered one was never registered.
    pub fn into_params(self) -> Result<Vec<Matrix>> {
        self.params
            .into_iter()
            .enumerate()
            .map(|(id, g)| g.ok_or_else(|| Error::InvalidArgument(format!("parameter {id} was not registered"))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_on_empty_tape_is_rejected() {
        let tape = Tape::new();
        let err = tape.backward(&[(Var(0), Matrix::zeros(1, 1))]).unwrap_err();
        assert!(matches!(err, Error::EmptyTape(_)));
    }

    #[test]
    fn duplicate_parameter_is_rejected() {
        let mut tape = Tape::new();
        let m = Matrix::zeros(1, 1);
        tape.param(0, &m).unwrap();
        assert!(tape.param(0, &m).is_err());
    }

    #[test]
    fn linear_layer_gradient_is_ones_times_input() {
        // y = W x, loss = sum(y): dL/dW[i][j] = x[j] for every row i.
        let mut tape = Tape::new();
        let w = Matrix::new(2, 3, vec![0.3, -0.1, 0.2, 0.5, 0.4, -0.7]).unwrap();
        let x = Matrix::new(3, 1, vec![1.0, 2.0, -3.0]).unwrap();
        let wv = tape.param(0, &w).unwrap();
        let xv = tape.input(x.clone());
        let y = tape.matmul(wv, xv).unwrap();
        let grads = tape.backward(&[(y, Matrix::filled(2, 1, 1.0))]).unwrap();
        let expected = Matrix::filled(2, 1, 1.0).matmul_t(&x).unwrap();
        assert_eq!(grads.param(0).unwrap(), &expected);
        // the input gradient is available for chaining: column sums of W
        let dx = grads.wrt(xv).unwrap();
        for (got, want) in dx.as_slice().iter().zip([0.8, 0.3, -0.5]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn reused_value_accumulates() {
        let mut tape = Tape::new();
        let p = tape.param(0, &Matrix::filled(1, 1, 3.0)).unwrap();
        let s = tape.add(p, p).unwrap();
        let grads = tape.backward(&[(s, Matrix::filled(1, 1, 1.0))]).unwrap();
        assert_eq!(grads.param(0).unwrap().as_slice(), &[2.0]);
    }

    #[test]
    fn zero_dropout_records_nothing() {
        let mut tape = Tape::new();
        let x = tape.input(Matrix::filled(2, 2, 1.0));
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let y = tape.dropout(x, 0.0, &mut rng).unwrap();
        assert_eq!(x, y);
        assert_eq!(tape.len(), 1);
    }
}
