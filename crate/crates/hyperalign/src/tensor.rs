//! A minimal dense tensor: a shape vector plus row-major `f64` storage.
//!
//! The layer implementations index into `data` by hand; this type only
//! carries the shape around and provides the handful of helpers that are
//! used everywhere (zeros, elementwise access, 2-d rows).

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.iter().product();
        Tensor {
            dims: dims.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(dims: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(
            dims.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match {} elements",
            dims,
            data.len()
        );
        Tensor {
            dims: dims.to_vec(),
            data,
        }
    }

    /// A 1-d tensor wrapping `data`.
    pub fn vector(data: Vec<f64>) -> Self {
        let n = data.len();
        Tensor {
            dims: vec![n],
            data,
        }
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Row `i` of a 2-d tensor.
    pub fn row(&self, i: usize) -> &[f64] {
        assert_eq!(self.dims.len(), 2, "row() needs a 2-d tensor");
        let cols = self.dims[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        assert_eq!(self.dims.len(), 2, "row_mut() needs a 2-d tensor");
        let cols = self.dims[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }

    /// Element of a 3-d tensor laid out as (d0, d1, d2) row-major.
    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f64 {
        self.data[(i * self.dims[1] + j) * self.dims[2] + k]
    }

    #[inline]
    pub fn at3_mut(&mut self, i: usize, j: usize, k: usize) -> &mut f64 {
        let idx = (i * self.dims[1] + j) * self.dims[2] + k;
        &mut self.data[idx]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.data.iter()
    }

    /// True if every entry is finite.
    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

// Small vector helpers shared by the numeric modules.

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Numerically shifted log(sum(exp(x_i))) over a nonempty slice.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
