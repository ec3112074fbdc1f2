use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// Dense real symmetric `p x p` matrix.
///
/// Both triangles are stored and kept bitwise equal: every constructor either
/// checks exact symmetry or writes the mirrored entry itself.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    data: Array2<f64>,
}

impl SymmetricMatrix {
    /// Builds a matrix by evaluating `f(i, j)` on the upper triangle and mirroring.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Dimension("symmetric matrix needs dim >= 1".into()));
        }
        let mut data = Array2::zeros((dim, dim));
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[[i, j]] = v;
                data[[j, i]] = v;
            }
        }
        Ok(Self { data })
    }

    /// Wraps an array after checking it is square and exactly symmetric.
    pub fn from_array(data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c || r == 0 {
            return Err(Error::Dimension(format!("expected nonempty square matrix, got {r}x{c}")));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                let diff = (data[[i, j]] - data[[j, i]]).abs();
                if diff != 0.0 {
                    return Err(Error::NotSymmetric { row: i, col: j, diff });
                }
            }
        }
        Ok(Self { data })
    }

    /// Wraps an array, replacing it by `(A + A') / 2`.
    ///
    /// Products like `X'X` computed by blocked kernels can differ in the last
    /// bit between the two triangles; this restores exact symmetry.
    pub fn symmetrize(mut data: Array2<f64>) -> Result<Self> {
        let (r, c) = data.dim();
        if r != c || r == 0 {
            return Err(Error::Dimension(format!("expected nonempty square matrix, got {r}x{c}")));
        }
        for i in 0..r {
            for j in (i + 1)..r {
                let v = 0.5 * (data[[i, j]] + data[[j, i]]);
                data[[i, j]] = v;
                data[[j, i]] = v;
            }
        }
        Ok(Self { data })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::from_fn(dim, |_, _| 0.0)
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_fn(dim, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { 0.0 })
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[[i, j]]
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn into_array(self) -> Array2<f64> {
        self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        self.data.diag().to_vec()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { data: &self.data * c }
    }

    /// `self + c * I`.
    pub fn shifted(&self, c: f64) -> Self {
        let mut data = self.data.clone();
        data.diag_mut().mapv_inplace(|v| v + c);
        Self { data }
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self { data: &self.data - &other.data })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dim(other)?;
        Ok(Self { data: &self.data + &other.data })
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension(format!("{} vs {}", self.dim(), other.dim())));
        }
        Ok(())
    }
}
