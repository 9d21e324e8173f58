use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out += self * x`
    pub fn mul_add(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!((x.len(), out.len()), (self.cols, self.rows));
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// `out += selfᵀ * g`
    pub fn mul_t_add(&self, g: &[f64], out: &mut [f64]) {
        debug_assert_eq!((g.len(), out.len()), (self.rows, self.cols));
        for (gi, row) in g.iter().zip(self.data.chunks_exact(self.cols)) {
            if *gi == 0.0 {
                continue;
            }
            for (o, a) in out.iter_mut().zip(row) {
                *o += gi * a;
            }
        }
    }

    /// `self += g xᵀ`
    pub fn add_outer(&mut self, g: &[f64], x: &[f64]) {
        debug_assert_eq!((g.len(), x.len()), (self.rows, self.cols));
        for (gi, row) in g.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if *gi == 0.0 {
                continue;
            }
            for (a, xj) in row.iter_mut().zip(x) {
                *a += gi * xj;
            }
        }
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Mat) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn products_against_loops() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut y = vec![1.0, 1.0];
        a.mul_add(&[1.0, 0.0, -1.0], &mut y);
        assert_eq!(y, vec![-1.0, -1.0]);
        let mut z = vec![0.0; 3];
        a.mul_t_add(&[1.0, 2.0], &mut z);
        assert_eq!(z, vec![9.0, 12.0, 15.0]);
        let mut b = Mat::zeros(2, 3);
        b.add_outer(&[1.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!(b.data(), &[1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
        assert!(Mat::from_vec(2, 2, vec![1.0]).is_err());
    }

    #[test]
    fn glorot_bounds() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let m = Mat::glorot(10, 14, &mut rng);
        let limit = (6.0f64 / 24.0).sqrt();
        assert!(m.data().iter().all(|x| x.abs() <= limit));
    }
}
