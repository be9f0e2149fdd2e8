//! Dense row-major f32 tensors with shape metadata.
//!
//! This is the unit of all numeric compute in the crate. Values are stored
//! in 32-bit floats; reductions elsewhere accumulate in 64-bit.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f32) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} implies {} elements, data has {}",
                shape,
                expect,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Size of dimension `i`.
    pub fn dim(&self, i: usize) -> usize {
        self.shape[i]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Reinterpret the buffer under a new shape of equal element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let expect: usize = shape.iter().product();
        if expect != self.data.len() {
            return Err(Error::ShapeMismatch(format!(
                "cannot reshape {} elements to {:?}",
                self.data.len(),
                shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Errors with `ctx` in the message if any element is NaN or infinite.
    pub fn check_finite(&self, ctx: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(ctx.to_string()))
        }
    }

    #[inline]
    pub fn at2(&self, i: usize, j: usize) -> f32 {
        debug_assert_eq!(self.rank(), 2);
        self.data[i * self.shape[1] + j]
    }

    #[inline]
    pub fn at3(&self, i: usize, j: usize, k: usize) -> f32 {
        debug_assert_eq!(self.rank(), 3);
        self.data[(i * self.shape[1] + j) * self.shape[2] + k]
    }

    #[inline]
    pub fn set3(&mut self, i: usize, j: usize, k: usize, v: f32) {
        debug_assert_eq!(self.rank(), 3);
        let idx = (i * self.shape[1] + j) * self.shape[2] + k;
        self.data[idx] = v;
    }

    /// Contiguous row `[i, j, ..]` of a rank-3 tensor.
    #[inline]
    pub fn row3(&self, i: usize, j: usize) -> &[f32] {
        let n = self.shape[2];
        let start = (i * self.shape[1] + j) * n;
        &self.data[start..start + n]
    }

    #[inline]
    pub fn row3_mut(&mut self, i: usize, j: usize) -> &mut [f32] {
        let n = self.shape[2];
        let start = (i * self.shape[1] + j) * n;
        &mut self.data[start..start + n]
    }

    /// Contiguous row `[i, ..]` of a rank-2 tensor.
    #[inline]
    pub fn row2(&self, i: usize) -> &[f32] {
        let n = self.shape[1];
        &self.data[i * n..(i + 1) * n]
    }

    #[inline]
    pub fn row2_mut(&mut self, i: usize) -> &mut [f32] {
        let n = self.shape[1];
        &mut self.data[i * n..(i + 1) * n]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_element_count() {
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::from_vec(&[2, 3], (0..6).map(|v| v as f32).collect()).unwrap();
        let r = t.clone().reshape(&[3, 2]).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshape(&[4, 2]).is_err());
    }

    #[test]
    fn finite_check_flags_nan_and_inf() {
        let mut t = Tensor::zeros(&[4]);
        assert!(t.check_finite("x").is_ok());
        t.data_mut()[2] = f32::NAN;
        assert!(t.check_finite("x").is_err());
        t.data_mut()[2] = f32::INFINITY;
        assert!(t.check_finite("x").is_err());
    }

    #[test]
    fn row_accessors_match_indexing() {
        let t = Tensor::from_vec(&[2, 2, 3], (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(t.row3(1, 0), &[6.0, 7.0, 8.0]);
        assert_eq!(t.at3(1, 1, 2), 11.0);
    }
}
