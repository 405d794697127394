use crate::error::{Error, Result};

/// Small row-major array of `f64` with up to four axes.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub(crate) const MAX_AXES: usize = 4;

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > MAX_AXES {
        return Err(Error::shape(format!(
            "arrays have 1 to {MAX_AXES} axes, got {}",
            shape.len()
        )));
    }
    if shape.contains(&0) {
        return Err(Error::shape(format!("zero extent in shape {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl DenseArray {
    /// Panics on an invalid shape; use [`DenseArray::from_vec`] for checked construction.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = check_shape(shape).expect("invalid shape");
        DenseArray {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let mut out = Self::zeros(shape);
        out.data.fill(value);
        out
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        Ok(DenseArray {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let len = check_shape(shape).expect("invalid shape");
        DenseArray {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, value: f64) {
        self.data.fill(value);
    }

    /// Elementwise `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: f64, other: &DenseArray) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "add_scaled: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes() {
        assert!(DenseArray::from_vec(&[2, 2], vec![0.0; 3]).is_err());
        assert!(DenseArray::from_vec(&[0, 2], vec![]).is_err());
        assert!(DenseArray::from_vec(&[1, 1, 1, 1, 1], vec![0.0]).is_err());
        assert!(DenseArray::from_vec(&[], vec![]).is_err());
    }

    #[test]
    fn reshape_preserves_data() {
        let a = DenseArray::from_fn(&[2, 3], |i| i as f64);
        let b = a.clone().reshape(&[3, 2]).unwrap();
        assert_eq!(a.data(), b.data());
        assert!(b.reshape(&[4, 2]).is_err());
    }
}
