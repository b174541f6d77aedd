use crate::error::{Error, Result};

/// Dense rank-4 tensor of f64 in (n, c, h, w) order, row-major.
///
/// Vectors and matrices ride along as degenerate shapes: a per-channel
/// vector is (1, c, 1, 1), a fully-connected weight of k rows over d
/// columns is (k, d, 1, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: [usize; 4],
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(n: usize, c: usize, h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        let need = n * c * h * w;
        if data.len() != need {
            return Err(Error::dimension(format!(
                "tensor ({n},{c},{h},{w}) needs {need} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape: [n, c, h, w], data })
    }

    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Tensor { shape: [n, c, h, w], data: vec![0.0; n * c * h * w] }
    }

    pub fn full(n: usize, c: usize, h: usize, w: usize, v: f64) -> Self {
        Tensor { shape: [n, c, h, w], data: vec![v; n * c * h * w] }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor { shape: [1, 1, 1, 1], data: vec![v] }
    }

    pub fn from_fn(
        n: usize,
        c: usize,
        h: usize,
        w: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(n * c * h * w);
        for bn in 0..n {
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        data.push(f(bn, ch, y, x));
                    }
                }
            }
        }
        Tensor { shape: [n, c, h, w], data }
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize, usize, usize) {
        (self.shape[0], self.shape[1], self.shape[2], self.shape[3])
    }
    #[inline]
    pub fn n(&self) -> usize {
        self.shape[0]
    }
    #[inline]
    pub fn c(&self) -> usize {
        self.shape[1]
    }
    #[inline]
    pub fn h(&self) -> usize {
        self.shape[2]
    }
    #[inline]
    pub fn w(&self) -> usize {
        self.shape[3]
    }
    #[inline]
    pub fn numel(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn idx(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        debug_assert!(
            n < self.shape[0] && c < self.shape[1] && h < self.shape[2] && w < self.shape[3]
        );
        ((n * self.shape[1] + c) * self.shape[2] + h) * self.shape[3] + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.idx(n, c, h, w)]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, c: usize, h: usize, w: usize) -> &mut f64 {
        let i = self.idx(n, c, h, w);
        &mut self.data[i]
    }

    /// One (h, w) plane as a contiguous slice.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &self.data[start..start + hw]
    }

    #[inline]
    pub fn plane_mut(&mut self, n: usize, c: usize) -> &mut [f64] {
        let hw = self.shape[2] * self.shape[3];
        let start = (n * self.shape[1] + c) * hw;
        &mut self.data[start..start + hw]
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Reinterpret as a different shape with the same element count.
    pub fn reshaped(&self, n: usize, c: usize, h: usize, w: usize) -> Result<Tensor> {
        if n * c * h * w != self.data.len() {
            return Err(Error::dimension(format!(
                "cannot view {} elements as ({n},{c},{h},{w})",
                self.data.len()
            )));
        }
        Ok(Tensor { shape: [n, c, h, w], data: self.data.clone() })
    }

    /// Batch row view for shapes of the form (n, d, 1, 1).
    #[inline]
    pub fn row(&self, n: usize) -> &[f64] {
        let d = self.shape[1] * self.shape[2] * self.shape[3];
        &self.data[n * d..(n + 1) * d]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indexing_is_row_major() {
        let t = Tensor::from_fn(2, 3, 4, 5, |n, c, h, w| (n * 1000 + c * 100 + h * 10 + w) as f64);
        assert_eq!(t.at(0, 0, 0, 0), 0.0);
        assert_eq!(t.at(0, 0, 0, 4), 4.0);
        assert_eq!(t.at(0, 0, 1, 0), 10.0);
        assert_eq!(t.at(1, 2, 3, 4), 1234.0);
        assert_eq!(t.idx(0, 1, 0, 0), 20);
        assert_eq!(t.plane(1, 2).len(), 20);
        assert_eq!(t.plane(1, 2)[0], 1200.0);
    }

    #[test]
    fn new_rejects_wrong_length() {
        assert!(Tensor::new(1, 1, 2, 2, vec![0.0; 3]).is_err());
        assert!(Tensor::new(1, 1, 2, 2, vec![0.0; 4]).is_ok());
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::new(1, 1, 2, 3, vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let r = t.reshaped(1, 6, 1, 1).unwrap();
        assert_eq!(r.data(), t.data());
        assert!(t.reshaped(1, 1, 4, 2).is_err());
    }

    #[test]
    fn finiteness_check() {
        let mut t = Tensor::zeros(1, 1, 2, 2);
        assert!(t.all_finite());
        t.data_mut()[3] = f64::NAN;
        assert!(!t.all_finite());
    }
}
