//! Row-major `f64` tensors: the numeric substrate for desk-scale forwards.

use std::cell::Cell;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("shape error: {0}")]
pub struct ShapeError(pub String);

thread_local! {
    static ALLOCATIONS: Cell<u64> = const { Cell::new(0) };
}

/// Number of tensor buffers created on the calling thread so far.
///
/// Analysis code that promises not to materialize model state can be checked
/// by reading this before and after.
pub fn allocation_count() -> u64 {
    ALLOCATIONS.with(Cell::get)
}

fn note_allocation() {
    ALLOCATIONS.with(|c| c.set(c.get() + 1));
}

#[derive(PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Clone for Tensor {
    fn clone(&self) -> Self {
        note_allocation();
        Self {
            shape: self.shape.clone(),
            data: self.data.clone(),
        }
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, ShapeError> {
        let n: usize = shape.iter().product();
        if shape.contains(&0) {
            return Err(ShapeError(format!("zero-sized dimension in {shape:?}")));
        }
        if n != data.len() {
            return Err(ShapeError(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        note_allocation();
        Ok(Self { shape, data })
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        note_allocation();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::filled(shape, 1.0)
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        note_allocation();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// 2-D tensor from rows.
    pub fn matrix(rows: &[&[f64]]) -> Result<Self, ShapeError> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(ShapeError("ragged rows".into()));
        }
        Self::new(vec![rows.len(), cols], rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(&[n, n], |i| if i / n == i % n { 1.0 } else { 0.0 })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn last_dim(&self) -> usize {
        *self.shape.last().expect("tensors have rank >= 1")
    }

    /// Number of rows when viewed as `[numel / last_dim, last_dim]`.
    pub fn rows(&self) -> usize {
        self.numel() / self.last_dim()
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, ShapeError> {
        if shape.iter().product::<usize>() != self.data.len() || shape.contains(&0) {
            return Err(ShapeError(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        note_allocation();
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, ShapeError> {
        if self.shape != other.shape {
            return Err(ShapeError(format!(
                "elementwise op on {:?} and {:?}",
                self.shape, other.shape
            )));
        }
        note_allocation();
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor, ShapeError> {
        self.zip_with(other, |a, b| a * b)
    }

    /// `x[..., in] · w[in, out] -> [..., out]`.
    pub fn matmul(&self, w: &Tensor) -> Result<Tensor, ShapeError> {
        if w.rank() != 2 || w.shape[0] != self.last_dim() {
            return Err(ShapeError(format!(
                "cannot multiply {:?} by {:?}",
                self.shape, w.shape
            )));
        }
        let (k, n) = (w.shape[0], w.shape[1]);
        let rows = self.rows();
        let mut out = vec![0.0; rows * n];
        for r in 0..rows {
            let x = &self.data[r * k..(r + 1) * k];
            let y = &mut out[r * n..(r + 1) * n];
            for (i, &xi) in x.iter().enumerate() {
                if xi == 0.0 {
                    continue;
                }
                let wrow = &w.data[i * n..(i + 1) * n];
                for (yj, &wij) in y.iter_mut().zip(wrow) {
                    *yj += xi * wij;
                }
            }
        }
        let mut shape = self.shape.clone();
        *shape.last_mut().expect("rank >= 1") = n;
        note_allocation();
        Ok(Tensor { shape, data: out })
    }

    /// Adds `b[last]` to every row.
    pub fn add_row(&self, b: &Tensor) -> Result<Tensor, ShapeError> {
        if b.rank() != 1 || b.shape[0] != self.last_dim() {
            return Err(ShapeError(format!(
                "cannot broadcast {:?} over {:?}",
                b.shape, self.shape
            )));
        }
        let d = self.last_dim();
        note_allocation();
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .enumerate()
                .map(|(i, &v)| v + b.data[i % d])
                .collect(),
        })
    }

    /// 2-D transpose.
    pub fn transpose(&self) -> Result<Tensor, ShapeError> {
        if self.rank() != 2 {
            return Err(ShapeError(format!("transpose of rank {}", self.rank())));
        }
        let (r, c) = (self.shape[0], self.shape[1]);
        Ok(Tensor::from_fn(&[c, r], |i| self.data[(i % r) * c + i / r]))
    }

    /// Slice `index` along the leading dimension.
    pub fn select(&self, index: usize) -> Result<Tensor, ShapeError> {
        if self.rank() < 2 || index >= self.shape[0] {
            return Err(ShapeError(format!(
                "select {index} from {:?}",
                self.shape
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        Tensor::new(
            self.shape[1..].to_vec(),
            self.data[index * inner..(index + 1) * inner].to_vec(),
        )
    }

    /// Stacks equally-shaped tensors along a new leading dimension.
    pub fn stack(parts: &[Tensor]) -> Result<Tensor, ShapeError> {
        let first = parts
            .first()
            .ok_or_else(|| ShapeError("stack of nothing".into()))?;
        if parts.iter().any(|p| p.shape != first.shape) {
            return Err(ShapeError("stack of mismatched shapes".into()));
        }
        let mut shape = vec![parts.len()];
        shape.extend_from_slice(&first.shape);
        Tensor::new(
            shape,
            parts.iter().flat_map(|p| p.data.iter().copied()).collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff on mismatched shapes");
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}
