//! Dense Cholesky kernels.
//!
//! Small enough to own outright: the solver only ever factors symmetric
//! positive definite matrices, and callers need the failing pivot index to
//! report conditioning problems.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Result, SblError};

/// Lower-triangular factor `L` with `A = L L'`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    pub fn factor(a: ArrayView2<'_, f64>) -> Result<Self> {
        let k = a.nrows();
        if a.ncols() != k {
            return Err(SblError::DimensionMismatch {
                what: "cholesky input (rows vs cols)",
                left: k,
                right: a.ncols(),
            });
        }
        let mut l = Array2::<f64>::zeros((k, k));
        for i in 0..k {
            for j in 0..=i {
                let dot = {
                    let li = l.row(i);
                    let lj = l.row(j);
                    let li = &li.as_slice().unwrap()[..j];
                    let lj = &lj.as_slice().unwrap()[..j];
                    li.iter().zip(lj).map(|(a, b)| a * b).sum::<f64>()
                };
                let v = a[[i, j]] - dot;
                if i == j {
                    if !(v > 0.0) || !v.is_finite() {
                        return Err(SblError::Conditioning { pivot: i });
                    }
                    l[[i, i]] = v.sqrt();
                } else {
                    l[[i, j]] = v / l[[j, j]];
                }
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn lower(&self) -> ArrayView2<'_, f64> {
        self.l.view()
    }

    /// `log det A = 2 Σ log L_ii`.
    pub fn log_det(&self) -> f64 {
        2.0 * self.l.diag().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solves `L z = b` in place.
    pub fn forward_in_place(&self, b: &mut [f64]) {
        let k = self.dim();
        for i in 0..k {
            let row = self.l.row(i);
            let row = row.as_slice().unwrap();
            let s: f64 = row[..i].iter().zip(&b[..i]).map(|(a, c)| a * c).sum();
            b[i] = (b[i] - s) / row[i];
        }
    }

    /// Solves `L' z = b` in place.
    pub fn backward_in_place(&self, b: &mut [f64]) {
        let k = self.dim();
        for i in (0..k).rev() {
            let mut s = b[i];
            for (r, br) in b.iter().enumerate().skip(i + 1) {
                s -= self.l[[r, i]] * br;
            }
            b[i] = s / self.l[[i, i]];
        }
    }

    pub fn solve(&self, b: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut z = b.to_vec();
        self.forward_in_place(&mut z);
        self.backward_in_place(&mut z);
        Array1::from(z)
    }

    /// `L^{-1} b`.
    pub fn forward(&self, b: ArrayView1<'_, f64>) -> Array1<f64> {
        let mut z = b.to_vec();
        self.forward_in_place(&mut z);
        Array1::from(z)
    }

    /// `L^{-1} B` for a matrix right-hand side, column by column.
    pub fn forward_matrix(&self, b: ArrayView2<'_, f64>) -> Array2<f64> {
        let k = self.dim();
        let m = b.ncols();
        // row-major accumulation keeps the inner loop contiguous in `out`
        let mut out = b.as_standard_layout().into_owned();
        for i in 0..k {
            let lii = self.l[[i, i]];
            for r in 0..i {
                let lir = self.l[[i, r]];
                if lir == 0.0 {
                    continue;
                }
                let (head, mut tail) = out.view_mut().split_at(ndarray::Axis(0), i);
                let src = head.row(r);
                let mut dst = tail.row_mut(0);
                dst.scaled_add(-lir, &src);
            }
            let mut row = out.row_mut(i);
            row.mapv_inplace(|v| v / lii);
        }
        debug_assert_eq!(out.ncols(), m);
        out
    }

    /// `L^{-1}`.
    pub fn lower_inverse(&self) -> Array2<f64> {
        let k = self.dim();
        self.forward_matrix(Array2::<f64>::eye(k).view())
    }

    /// Diagonal of `A^{-1}` (column sums of squares of `L^{-1}`).
    pub fn inverse_diag(&self) -> Array1<f64> {
        let linv = self.lower_inverse();
        let k = self.dim();
        let mut d = Array1::<f64>::zeros(k);
        for i in 0..k {
            for (j, v) in linv.row(i).iter().enumerate().take(i + 1) {
                d[j] += v * v;
            }
        }
        d
    }

    /// Full `A^{-1} = L^{-T} L^{-1}`.
    pub fn inverse(&self) -> Array2<f64> {
        let linv = self.lower_inverse();
        let inv = linv.t().dot(&linv);
        // symmetrize away rounding asymmetry
        let t = inv.t().to_owned();
        (inv + t) * 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn factor_and_solve_small_spd() {
        let a = array![[4.0, 2.0, 0.4], [2.0, 5.0, 1.0], [0.4, 1.0, 3.0]];
        let c = Cholesky::factor(a.view()).unwrap();
        let l = c.lower();
        let back = l.dot(&l.t());
        for (x, y) in back.iter().zip(a.iter()) {
            assert!((x - y).abs() < 1e-14);
        }
        let b = array![1.0, -2.0, 0.5];
        let x = c.solve(b.view());
        let r = a.dot(&x) - &b;
        assert!(r.iter().all(|v| v.abs() < 1e-13));

        let inv = c.inverse();
        let eye = a.dot(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((eye[[i, j]] - want).abs() < 1e-13);
            }
        }
        let d = c.inverse_diag();
        for i in 0..3 {
            assert!((d[i] - inv[[i, i]]).abs() < 1e-14);
        }
        let det: f64 = 4.0 * (5.0 * 3.0 - 1.0) - 2.0 * (2.0 * 3.0 - 0.4) + 0.4 * (2.0 - 5.0 * 0.4);
        assert!((c.log_det() - det.ln()).abs() < 1e-13);
    }

    #[test]
    fn reports_failing_pivot() {
        let a = array![[1.0, 0.0, 0.0], [0.0, 1.0, 1.0], [0.0, 1.0, 1.0]];
        match Cholesky::factor(a.view()) {
            Err(SblError::Conditioning { pivot }) => assert_eq!(pivot, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nan_is_a_conditioning_failure() {
        let a = array![[f64::NAN]];
        assert!(matches!(
            Cholesky::factor(a.view()),
            Err(SblError::Conditioning { pivot: 0 })
        ));
    }
}
