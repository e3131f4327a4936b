//! Small dense linear-algebra helpers and rigid frames.

use nalgebra::{DMatrix, DVector};

use crate::{Matrix, Vector};

/// Rigid frame `x ↦ origin + rotation · x` (rotation may be improper).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame<const N: usize> {
    pub origin: Vector<N>,
    pub rotation: Matrix<N>,
}

impl<const N: usize> Frame<N> {
    pub fn identity() -> Self {
        Frame {
            origin: Vector::zeros(),
            rotation: Matrix::identity(),
        }
    }

    pub fn to_ambient(&self, x: &Vector<N>) -> Vector<N> {
        self.origin + self.rotation * x
    }

    pub fn to_local(&self, y: &Vector<N>) -> Vector<N> {
        self.rotation.transpose() * (y - self.origin)
    }

    pub fn vec_to_ambient(&self, w: &Vector<N>) -> Vector<N> {
        self.rotation * w
    }

    pub fn vec_to_local(&self, w: &Vector<N>) -> Vector<N> {
        self.rotation.transpose() * w
    }

    /// `±1`, the orientation of the rotation.
    pub fn handedness(&self) -> f64 {
        determinant(&self.rotation).signum()
    }
}

pub fn to_dmatrix<const N: usize>(m: &Matrix<N>) -> DMatrix<f64> {
    DMatrix::from_column_slice(N, N, m.as_slice())
}

pub fn determinant<const N: usize>(m: &Matrix<N>) -> f64 {
    match N {
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
                - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)])
        }
        _ => to_dmatrix(m).determinant(),
    }
}

/// Solves `a x = b` for symmetric positive definite `a`.
pub fn solve_spd<const N: usize>(a: &Matrix<N>, b: &Vector<N>) -> Option<Vector<N>> {
    a.cholesky().map(|c| c.solve(b))
}

/// Solves a general small square system by Gaussian elimination with partial
/// pivoting.
pub fn solve<const N: usize>(a: &Matrix<N>, b: &Vector<N>) -> Option<Vector<N>> {
    let mut m = *a;
    let mut x = *b;
    for col in 0..N {
        let (piv, max) = (col..N)
            .map(|r| (r, m[(r, col)].abs()))
            .fold((col, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
        if max <= f64::EPSILON * m.amax().max(f64::MIN_POSITIVE) {
            return None;
        }
        m.swap_rows(col, piv);
        x.swap_rows(col, piv);
        for r in col + 1..N {
            let factor = m[(r, col)] / m[(col, col)];
            for c in col..N {
                m[(r, c)] -= factor * m[(col, c)];
            }
            x[r] -= factor * x[col];
        }
    }
    for col in (0..N).rev() {
        let mut acc = x[col];
        for c in col + 1..N {
            acc -= m[(col, c)] * x[c];
        }
        x[col] = acc / m[(col, col)];
    }
    Some(x)
}

/// Right singular vector of the smallest singular value, with that value.
pub fn smallest_singular(m: &DMatrix<f64>) -> (DVector<f64>, f64) {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, sigma) =
        svd.singular_values
            .iter()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, &s)| if s < acc.1 { (i, s) } else { acc },
            );
    (v_t.row(idx).transpose(), sigma)
}

/// 2-norm condition number.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let s = m.clone().singular_values();
    let max = s.max();
    let min = s.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Orthonormal basis whose last column is `dir / |dir|`.
pub fn basis_with_last<const N: usize>(dir: &Vector<N>) -> Matrix<N> {
    let last = dir.normalize();
    let mut cols: Vec<Vector<N>> = Vec::with_capacity(N);
    for k in 0..N {
        let mut e = Vector::<N>::zeros();
        e[k] = 1.0;
        let mut w = e - last * last.dot(&e);
        for c in &cols {
            w -= c * c.dot(&w);
        }
        if w.norm() > 1e-6 && cols.len() < N - 1 {
            cols.push(w.normalize());
        }
    }
    cols.push(last);
    Matrix::from_columns(&cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_solve_matches_inverse() {
        let a = Matrix::<3>::new(2.0, 1.0, 0.5, -1.0, 3.0, 0.2, 0.0, 1.0, 4.0);
        let b = Vector::<3>::new(1.0, -2.0, 0.5);
        let x = solve(&a, &b).unwrap();
        assert!((a * x - b).norm() < 1e-14);
        assert!(solve(&Matrix::<2>::zeros(), &Vector::<2>::zeros()).is_none());
    }

    #[test]
    fn determinant_small() {
        let a = Matrix::<3>::new(2.0, 1.0, 0.5, -1.0, 3.0, 0.2, 0.0, 1.0, 4.0);
        assert!((determinant(&a) - to_dmatrix(&a).determinant()).abs() < 1e-12);
    }

    #[test]
    fn basis_is_orthonormal() {
        let b = basis_with_last(&Vector::<3>::new(0.3, -1.0, 2.0));
        assert!((b.transpose() * b - Matrix::<3>::identity()).norm() < 1e-12);
        let last = b.column(2);
        assert!((last - Vector::<3>::new(0.3, -1.0, 2.0).normalize()).norm() < 1e-14);
    }
}
