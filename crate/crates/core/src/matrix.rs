//! Dense matrix kernels: a row-major [`Matrix`], a symmetric [`SymMatrix`]
//! and its Cholesky factor.
//!
//! All arithmetic is `f64`. Symmetric matrices store the full square so that
//! row access stays contiguous; every mutator writes both triangles, so
//! `a[i][j] == a[j][i]` holds bit-for-bit.

use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Dense row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch { expected: cols, found: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on zero width
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    /// Copies the listed rows into a new matrix, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Matrix { rows: indices.len(), cols: self.cols, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Symmetric `dim x dim` matrix with full row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self { dim, data: vec![0.0; dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.data[i * dim + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * diag.len() + i] = v;
        }
        m
    }

    /// Builds from a full row-major square. Off-diagonal pairs must agree
    /// to within `1e-12` of the largest entry; they are stored averaged.
    pub fn from_row_major(dim: usize, data: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be positive"));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: data.len() });
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(libm::fabs(*v))).max(1.0);
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                let (a, b) = (data[i * dim + j], data[j * dim + i]);
                if libm::fabs(a - b) > 1e-12 * scale {
                    return Err(Error::NotSymmetric);
                }
                m.set(i, j, 0.5 * (a + b));
            }
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.dim + j] = v;
        self.data[j * self.dim + i] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|v| v * v).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.data.iter_mut().for_each(|v| *v *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        m.scale(alpha);
        m
    }

    pub fn add_assign(&mut self, other: &SymMatrix) -> Result<()> {
        check_dim(self.dim, other.dim)?;
        self.data.iter_mut().zip(&other.data).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        check_dim(self.dim, other.dim)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(SymMatrix { dim: self.dim, data })
    }

    /// `self += alpha * v v^T`
    pub fn add_outer(&mut self, alpha: f64, v: &[f64]) -> Result<()> {
        check_dim(self.dim, v.len())?;
        let d = self.dim;
        for i in 0..d {
            let s = alpha * v[i];
            for j in i..d {
                let val = self.data[i * d + j] + s * v[j];
                self.data[i * d + j] = val;
                self.data[j * d + i] = val;
            }
        }
        Ok(())
    }

    pub fn add_identity(&mut self, eps: f64) {
        for i in 0..self.dim {
            self.data[i * self.dim + i] += eps;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok((0..self.dim).map(|i| dot(self.row(i), x)).collect())
    }

    /// Relative Frobenius distance `||self - other|| / max(||other||, tiny)`.
    pub fn rel_frobenius_error(&self, other: &SymMatrix) -> Result<f64> {
        let diff = self.sub(other)?.frobenius_norm();
        Ok(diff / other.frobenius_norm().max(f64::MIN_POSITIVE))
    }
}

/// Lower-triangular Cholesky factor `L` with `L L^T = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    dim: usize,
    lower: Vec<f64>,
}

impl CholFactor {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn lower(&self, i: usize, j: usize) -> f64 {
        self.lower[i * self.dim + j]
    }

    /// `ln |A| = 2 sum ln L_ii`
    pub fn logdet(&self) -> f64 {
        2.0 * (0..self.dim).map(|i| libm::log(self.lower(i, i))).sum::<f64>()
    }

    /// Solves `A y = x` by forward then backward substitution.
    pub fn solve(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let mut y = self.solve_lower(x)?;
        let d = self.dim;
        for i in (0..d).rev() {
            let mut s = y[i];
            for k in i + 1..d {
                s -= self.lower(k, i) * y[k];
            }
            y[i] = s / self.lower(i, i);
        }
        Ok(y)
    }

    /// Solves `L z = x`. `||z||^2` is the quadratic form `x^T A^-1 x`.
    pub fn solve_lower(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        let d = self.dim;
        let mut z = vec![0.0; d];
        for i in 0..d {
            let row = &self.lower[i * d..i * d + i];
            let s = x[i] - dot(row, &z[..i]);
            z[i] = s / self.lower(i, i);
        }
        Ok(z)
    }

    /// `x^T A^-1 x`
    pub fn quad_form(&self, x: &[f64]) -> Result<f64> {
        let z = self.solve_lower(x)?;
        Ok(dot(&z, &z))
    }

    /// `L z`
    pub fn mul_lower(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, z.len())?;
        let d = self.dim;
        Ok((0..d).map(|i| dot(&self.lower[i * d..i * d + i + 1], &z[..=i])).collect())
    }

    /// `L L^T`
    pub fn reconstruct(&self) -> SymMatrix {
        let d = self.dim;
        let mut m = SymMatrix::zeros(d);
        for i in 0..d {
            for j in 0..=i {
                let k = j + 1;
                m.set(i, j, dot(&self.lower[i * d..i * d + k], &self.lower[j * d..j * d + k]));
            }
        }
        m
    }

    /// `A^-1`, column by column, symmetrised by averaging.
    pub fn inverse(&self) -> SymMatrix {
        let d = self.dim;
        let mut full = vec![0.0; d * d];
        let mut e = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e).expect("dimension checked");
            for (i, c) in col.into_iter().enumerate() {
                full[i * d + j] = c;
            }
        }
        let mut inv = SymMatrix::zeros(d);
        for i in 0..d {
            for j in i..d {
                inv.set(i, j, 0.5 * (full[i * d + j] + full[j * d + i]));
            }
        }
        inv
    }

    /// `tr(A^-1 B)`, via one solve per column of `B`.
    pub fn trace_solve(&self, b: &SymMatrix) -> Result<f64> {
        check_dim(self.dim, b.dim())?;
        let mut tr = 0.0;
        for j in 0..self.dim {
            let col = self.solve(b.row(j))?;
            tr += col[j];
        }
        Ok(tr)
    }
}

/// Cholesky factorisation `A = L L^T` of a symmetric positive-definite matrix.
pub fn cholesky(a: &SymMatrix) -> Result<CholFactor> {
    let d = a.dim();
    if d == 0 {
        return Err(Error::InvalidArgument("matrix dimension must be positive"));
    }
    let mut l = vec![0.0; d * d];
    for j in 0..d {
        let s = a.get(j, j) - dot(&l[j * d..j * d + j], &l[j * d..j * d + j]);
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = libm::sqrt(s);
        l[j * d + j] = ljj;
        for i in j + 1..d {
            let s = a.get(i, j) - dot(&l[i * d..i * d + j], &l[j * d..j * d + j]);
            l[i * d + j] = s / ljj;
        }
    }
    Ok(CholFactor { dim: d, lower: l })
}

/// `ln |A|` from its Cholesky factor.
pub fn spd_logdet(f: &CholFactor) -> f64 {
    f.logdet()
}

/// Solves `A y = x` given the Cholesky factor of `A`.
pub fn spd_solve(f: &CholFactor, x: &[f64]) -> Result<Vec<f64>> {
    f.solve(x)
}

/// Returns `a + eps I` with `eps = eps_scale * max(tr(a)/dim, 1)`.
///
/// The jitter tracks the mean diagonal magnitude, with an absolute floor of
/// `eps_scale` so that an all-zero scatter still factors.
pub fn regularize_psd(a: &SymMatrix, eps_scale: f64) -> SymMatrix {
    let mean_diag = a.trace() / a.dim() as f64;
    let eps = eps_scale * mean_diag.max(1.0);
    let mut out = a.clone();
    out.add_identity(eps);
    out
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Random SPD matrix `B B^T + d I` from a flat list of entries.
    pub(crate) fn spd_from(d: usize, entries: &[f64]) -> SymMatrix {
        let mut a = SymMatrix::zeros(d);
        for i in 0..d {
            for j in 0..=i {
                let s: f64 = (0..d).map(|k| entries[i * d + k] * entries[j * d + k]).sum();
                a.set(i, j, s);
            }
        }
        a.add_identity(0.5);
        a
    }

    /// Determinant by cofactor expansion along the first row.
    fn det_cofactor(m: &[Vec<f64>]) -> f64 {
        let n = m.len();
        if n == 1 {
            return m[0][0];
        }
        let mut det = 0.0;
        for c in 0..n {
            let minor: Vec<Vec<f64>> = m[1..]
                .iter()
                .map(|row| row.iter().enumerate().filter(|(j, _)| *j != c).map(|(_, v)| *v).collect())
                .collect();
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            det += sign * m[0][c] * det_cofactor(&minor);
        }
        det
    }

    fn to_rows(a: &SymMatrix) -> Vec<Vec<f64>> {
        (0..a.dim()).map(|i| a.row(i).to_vec()).collect()
    }

    #[test]
    fn cholesky_of_identity_is_identity() {
        let f = cholesky(&SymMatrix::identity(3)).unwrap();
        assert_eq!(f.reconstruct(), SymMatrix::identity(3));
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(f.lower(i, j), if i == j { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn cholesky_two_by_two() {
        let a = SymMatrix::from_row_major(2, &[4.0, 2.0, 2.0, 3.0]).unwrap();
        let f = cholesky(&a).unwrap();
        assert!((f.lower(0, 0) - 2.0).abs() < 1e-15);
        assert_eq!(f.lower(0, 1), 0.0);
        assert!((f.lower(1, 0) - 1.0).abs() < 1e-15);
        assert!((f.lower(1, 1) - 2f64.sqrt()).abs() < 1e-15);
        assert!(f.reconstruct().rel_frobenius_error(&a).unwrap() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = SymMatrix::from_row_major(2, &[1.0, 2.0, 2.0, 1.0]).unwrap();
        assert_eq!(cholesky(&a), Err(Error::NotPositiveDefinite { pivot: 1 }));
    }

    #[test]
    fn from_row_major_rejects_asymmetry() {
        assert_eq!(SymMatrix::from_row_major(2, &[1.0, 0.5, 0.4, 1.0]), Err(Error::NotSymmetric));
    }

    #[test]
    fn logdet_examples() {
        assert_eq!(spd_logdet(&cholesky(&SymMatrix::identity(4)).unwrap()), 0.0);
        let f = cholesky(&SymMatrix::from_diag(&[2.0, 8.0])).unwrap();
        assert!((spd_logdet(&f) - 16f64.ln()).abs() < 1e-14);
        let f = cholesky(&SymMatrix::from_diag(&[0.5])).unwrap();
        assert!((spd_logdet(&f) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn solve_examples() {
        let f = cholesky(&SymMatrix::identity(3)).unwrap();
        assert_eq!(spd_solve(&f, &[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        let f = cholesky(&SymMatrix::from_diag(&[2.0, 4.0])).unwrap();
        let x = spd_solve(&f, &[2.0, 8.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 2.0).abs() < 1e-14);
        assert_eq!(
            spd_solve(&f, &[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        );
    }

    #[test]
    fn regularize_zero_matrix_uses_floor() {
        let r = regularize_psd(&SymMatrix::zeros(2), 1e-6);
        assert_eq!(r, SymMatrix::from_diag(&[1e-6, 1e-6]));
    }

    #[test]
    fn regularize_rank_one_scatter_factors() {
        let mut a = SymMatrix::zeros(2);
        a.add_outer(1.0, &[1.0, 1.0]).unwrap();
        assert!(cholesky(&a).is_err());
        assert!(cholesky(&regularize_psd(&a, 1e-6)).is_ok());
    }

    #[test]
    fn regularize_identity_scales_diagonal() {
        let r = regularize_psd(&SymMatrix::identity(3), 1e-6);
        for i in 0..3 {
            assert!((r.get(i, i) - (1.0 + 1e-6)).abs() < 1e-15);
        }
        assert_eq!(r.get(0, 1), 0.0);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = spd_from(3, &[0.3, -1.2, 0.7, 2.0, 0.1, -0.4, 0.9, 0.5, 1.1]);
        let inv = cholesky(&a).unwrap().inverse();
        for j in 0..3 {
            let col: Vec<f64> = (0..3).map(|i| inv.get(i, j)).collect();
            let e = a.mul_vec(&col).unwrap();
            for (i, v) in e.iter().enumerate() {
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    fn spd_strategy(max_d: usize) -> impl Strategy<Value = SymMatrix> {
        (1..=max_d).prop_flat_map(|d| {
            prop::collection::vec(-2.0f64..2.0, d * d).prop_map(move |e| spd_from(d, &e))
        })
    }

    proptest! {
        #[test]
        fn cholesky_round_trip(a in spd_strategy(8)) {
            let f = cholesky(&a).unwrap();
            prop_assert!(f.reconstruct().rel_frobenius_error(&a).unwrap() < 1e-10);
            for i in 0..a.dim() {
                prop_assert!(f.lower(i, i) > 0.0);
            }
        }

        #[test]
        fn logdet_matches_cofactor_determinant(a in spd_strategy(4)) {
            let f = cholesky(&a).unwrap();
            let det = det_cofactor(&to_rows(&a));
            prop_assert!((spd_logdet(&f) - det.ln()).abs() < 1e-8);
        }

        #[test]
        fn solve_reconstructs_rhs(
            a in spd_strategy(6),
            x in prop::collection::vec(-5.0f64..5.0, 6),
        ) {
            let x = &x[..a.dim()];
            prop_assume!(x.iter().any(|v| v.abs() > 1e-3));
            let y = spd_solve(&cholesky(&a).unwrap(), x).unwrap();
            let ay = a.mul_vec(&y).unwrap();
            let res: f64 = ay.iter().zip(x).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(res / nx < 1e-8);
        }

        #[test]
        fn regularized_psd_always_factors(
            d in 1usize..6,
            vs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 6), 0..4),
            eps_scale in 1e-8f64..1e-2,
        ) {
            // sums of outer products are PSD, often singular
            let mut a = SymMatrix::zeros(d);
            for v in &vs {
                a.add_outer(1.0, &v[..d]).unwrap();
            }
            prop_assert!(cholesky(&regularize_psd(&a, eps_scale)).is_ok());
        }
    }
}
