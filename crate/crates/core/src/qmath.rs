//! Dense complex linear algebra for small quantum systems.
//!
//! Everything here is sized for operators of dimension at most ~16: storage is
//! a flat row-major `Vec`, products are the textbook triple loop and the
//! Hermitian eigensolver is cyclic Jacobi on the real embedding.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type C64 = Complex<f64>;

/// Global assertion tolerance for quantum objects.
pub const EPS_NUM: f64 = 1e-9;

/// Off-diagonal Frobenius norm at which Jacobi sweeps stop.
pub const JACOBI_TOL: f64 = 1e-12;

const JACOBI_MAX_SWEEPS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QmathError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not Hermitian (max deviation {0:e})")]
    NotHermitian(f64),
    #[error("subsystem index {index} out of range for {count} subsystems")]
    InvalidSubsystem { index: usize, count: usize },
    #[error("partial transpose needs a bipartite operator, got {0} subsystems")]
    NotBipartite(usize),
    #[error("ket is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("invalid density operator: {0}")]
    InvalidDensity(String),
    #[error("Jacobi iteration did not converge (off-diagonal norm {0:e})")]
    NoConvergence(f64),
}

pub type Result<T> = std::result::Result<T, QmathError>;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

#[inline]
pub fn re(x: f64) -> C64 {
    Complex::new(x, 0.0)
}

#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|c| {
                    let z = self[(r, c)];
                    format!("{:+.6}{:+.6}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(QmathError::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::default(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = re(1.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |r, c| if r == c { re(diag[r]) } else { C64::default() })
    }

    /// Builds a matrix from real row slices; panics on ragged input.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == m), "ragged rows");
        Self::from_fn(n, m, |r, c| re(rows[r][c]))
    }

    /// |a⟩⟨b|
    pub fn outer(a: &Ket, b: &Ket) -> Self {
        Self::from_fn(a.dim(), b.dim(), |r, c| a.amps[r] * b.amps[c].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(
            self.cols, other.rows,
            "matmul: {}x{} times {}x{}",
            self.rows, self.cols, other.rows, other.cols
        );
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == C64::default() {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.data[k * other.cols + c];
                }
            }
        }
        out
    }

    pub fn apply(&self, ket: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, ket.len());
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self[(r, c)] * ket[c]).sum())
            .collect()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(re(s))
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)])
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Entrywise max |a - b|; panics on shape mismatch.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut dev: f64 = 0.0;
        for r in 0..self.rows {
            for c in r..self.cols {
                dev = dev.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        Self::from_fn(rows, cols, |r, c| {
            self[(r / other.rows, c / other.cols)] * other[(r % other.rows, c % other.cols)]
        })
    }

    /// Real part of Tr(self · other).
    pub fn trace_product_re(&self, other: &Self) -> f64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut acc = 0.0;
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                let b = other[(k, r)];
                acc += a.re * b.re - a.im * b.im;
            }
        }
        acc
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.cols + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

/// Kronecker product of two matrices.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kron(b)
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> ComplexMatrix {
    factors
        .into_iter()
        .fold(ComplexMatrix::identity(1), |acc, m| acc.kron(m))
}

/// max |[a, b]| entrywise.
pub fn commutator_norm(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    (&(a * b) - &(b * a)).max_abs()
}

/// A normalized state vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ket {
    amps: Vec<C64>,
}

impl Ket {
    pub fn new(amps: Vec<C64>) -> Result<Self> {
        let n2: f64 = amps.iter().map(|z| z.norm_sqr()).sum();
        if (n2 - 1.0).abs() > EPS_NUM {
            return Err(QmathError::NotNormalized(n2));
        }
        Ok(Self { amps })
    }

    /// Rescales `amps` to unit norm. Panics on the zero vector.
    pub fn normalized(amps: Vec<C64>) -> Self {
        let n = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!(n > 0.0, "cannot normalize the zero vector");
        Self {
            amps: amps.into_iter().map(|z| z / n).collect(),
        }
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![C64::default(); dim];
        amps[index] = re(1.0);
        Self { amps }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// ⟨self|other⟩
    pub fn inner(&self, other: &Ket) -> C64 {
        assert_eq!(self.dim(), other.dim());
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn kron(&self, other: &Ket) -> Ket {
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            for b in &other.amps {
                amps.push(a * b);
            }
        }
        Ket { amps }
    }

    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(self, self)
    }
}

/// Splits a flat index into per-subsystem indices (first subsystem most significant).
fn split_index(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
    out
}

fn join_index(parts: &[usize], dims: &[usize]) -> usize {
    parts.iter().zip(dims).fold(0, |acc, (&p, &d)| acc * d + p)
}

/// A density operator on a tensor product of subsystems.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityOperator {
    matrix: ComplexMatrix,
    dims: Vec<usize>,
}

impl DensityOperator {
    /// Validates squareness, subsystem dims, Hermiticity, unit trace and positivity.
    pub fn new(matrix: ComplexMatrix, dims: Vec<usize>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(QmathError::NotSquare {
                rows: matrix.rows(),
                cols: matrix.cols(),
            });
        }
        let total: usize = dims.iter().product();
        if dims.is_empty() || total != matrix.rows() {
            return Err(QmathError::DimensionMismatch(format!(
                "subsystem dims {dims:?} do not multiply to {}",
                matrix.rows()
            )));
        }
        let herm = matrix.hermitian_deviation();
        if herm > EPS_NUM {
            return Err(QmathError::NotHermitian(herm));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > EPS_NUM || tr.im.abs() > EPS_NUM {
            return Err(QmathError::InvalidDensity(format!("trace {tr}")));
        }
        let min = hermitian_eigenvalues(&matrix)?[0];
        if min < -EPS_NUM {
            return Err(QmathError::InvalidDensity(format!(
                "negative eigenvalue {min:e}"
            )));
        }
        Ok(Self { matrix, dims })
    }

    pub fn from_ket(ket: &Ket, dims: Vec<usize>) -> Result<Self> {
        Self::new(ket.projector(), dims)
    }

    /// Convex combination Σ wᵢ ρᵢ; all components must share dims.
    pub fn mixture(components: &[(f64, &DensityOperator)]) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| QmathError::InvalidDensity("empty mixture".into()))?;
        let dims = first.1.dims.clone();
        let n = first.1.dim();
        let mut acc = ComplexMatrix::zeros(n, n);
        for (w, rho) in components {
            if rho.dims != dims {
                return Err(QmathError::DimensionMismatch(format!(
                    "mixture component dims {:?} vs {dims:?}",
                    rho.dims
                )));
            }
            acc = &acc + &rho.matrix.scale_real(*w);
        }
        Self::new(acc, dims)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn kron(&self, other: &DensityOperator) -> DensityOperator {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        DensityOperator {
            matrix: self.matrix.kron(&other.matrix),
            dims,
        }
    }

    /// Re Tr(ρ O).
    pub fn expectation(&self, op: &ComplexMatrix) -> f64 {
        self.matrix.trace_product_re(op)
    }

    /// Reduced operator on subsystem `keep`, tracing out every other factor.
    pub fn partial_trace(&self, keep: usize) -> Result<DensityOperator> {
        self.reduce(&[keep])
    }

    /// Traces out a single subsystem, keeping the rest in order.
    pub fn trace_out(&self, index: usize) -> Result<DensityOperator> {
        self.check_subsystem(index)?;
        let keep: Vec<usize> = (0..self.dims.len()).filter(|&k| k != index).collect();
        if keep.is_empty() {
            return Err(QmathError::InvalidSubsystem {
                index,
                count: self.dims.len(),
            });
        }
        self.reduce(&keep)
    }

    fn check_subsystem(&self, index: usize) -> Result<()> {
        if index >= self.dims.len() {
            return Err(QmathError::InvalidSubsystem {
                index,
                count: self.dims.len(),
            });
        }
        Ok(())
    }

    fn reduce(&self, keep: &[usize]) -> Result<DensityOperator> {
        for &k in keep {
            self.check_subsystem(k)?;
        }
        let kept_dims: Vec<usize> = keep.iter().map(|&k| self.dims[k]).collect();
        let n = kept_dims.iter().product::<usize>();
        let mut out = ComplexMatrix::zeros(n, n);
        let full = self.dim();
        for r in 0..full {
            let rp = split_index(r, &self.dims);
            for c in 0..full {
                let cp = split_index(c, &self.dims);
                let traced_equal = (0..self.dims.len())
                    .filter(|k| !keep.contains(k))
                    .all(|k| rp[k] == cp[k]);
                if !traced_equal {
                    continue;
                }
                let rk: Vec<usize> = keep.iter().map(|&k| rp[k]).collect();
                let ck: Vec<usize> = keep.iter().map(|&k| cp[k]).collect();
                out[(join_index(&rk, &kept_dims), join_index(&ck, &kept_dims))] +=
                    self.matrix[(r, c)];
            }
        }
        Ok(DensityOperator {
            matrix: out,
            dims: kept_dims,
        })
    }

    /// Transpose on subsystem `on` of a bipartite operator.
    pub fn partial_transpose(&self, on: usize) -> Result<ComplexMatrix> {
        if self.dims.len() != 2 {
            return Err(QmathError::NotBipartite(self.dims.len()));
        }
        self.check_subsystem(on)?;
        let n = self.dim();
        let dims = &self.dims;
        Ok(ComplexMatrix::from_fn(n, n, |r, c| {
            let mut rp = split_index(r, dims);
            let mut cp = split_index(c, dims);
            std::mem::swap(&mut rp[on], &mut cp[on]);
            self.matrix[(join_index(&rp, dims), join_index(&cp, dims))]
        }))
    }
}

/// Ascending eigenvalues of a Hermitian matrix.
///
/// The n×n Hermitian `A + iB` is embedded as the real symmetric
/// `[[A, -B], [B, A]]`, whose spectrum is that of the original with every
/// eigenvalue doubled; cyclic Jacobi runs on the embedding and every second
/// sorted value is returned.
pub fn hermitian_eigenvalues(m: &ComplexMatrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(QmathError::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let dev = m.hermitian_deviation();
    if dev > EPS_NUM {
        return Err(QmathError::NotHermitian(dev));
    }
    let n = m.rows();
    let size = 2 * n;
    let mut a = vec![vec![0.0; size]; size];
    for r in 0..n {
        for col in 0..n {
            // symmetrize to absorb the tolerated Hermiticity defect
            let z = (m[(r, col)] + m[(col, r)].conj()) * 0.5;
            a[r][col] = z.re;
            a[r + n][col + n] = z.re;
            a[r][col + n] = -z.im;
            a[r + n][col] = z.im;
        }
    }
    let mut vals = jacobi_symmetric(&mut a)?;
    vals.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(vals.into_iter().step_by(2).collect())
}

fn off_diagonal_norm(a: &[Vec<f64>]) -> f64 {
    let mut s = 0.0;
    for (i, row) in a.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                s += v * v;
            }
        }
    }
    s.sqrt()
}

fn jacobi_symmetric(a: &mut [Vec<f64>]) -> Result<Vec<f64>> {
    let n = a.len();
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(a) <= JACOBI_TOL {
            return Ok((0..n).map(|i| a[i][i]).collect());
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let cs = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * cs;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = cs * akp - sn * akq;
                    a[k][q] = sn * akp + cs * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = cs * apk - sn * aqk;
                    a[q][k] = sn * apk + cs * aqk;
                }
            }
        }
    }
    let off = off_diagonal_norm(a);
    if off <= JACOBI_TOL {
        Ok((0..n).map(|i| a[i][i]).collect())
    } else {
        Err(QmathError::NoConvergence(off))
    }
}

/// Swap operator V|i⟩|j⟩ = |j⟩|i⟩ on ℂᵈ ⊗ ℂᵈ.
pub fn swap_operator(d: usize) -> ComplexMatrix {
    let n = d * d;
    let mut v = ComplexMatrix::zeros(n, n);
    for i in 0..d {
        for j in 0..d {
            v[(j * d + i, i * d + j)] = re(1.0);
        }
    }
    v
}

/// Projector (I − V)/2 onto the antisymmetric subspace of ℂᵈ ⊗ ℂᵈ.
pub fn antisymmetric_projector(d: usize) -> ComplexMatrix {
    let id = ComplexMatrix::identity(d * d);
    (&id - &swap_operator(d)).scale_real(0.5)
}

/// Numerical rank of a real matrix by Gaussian elimination with partial pivoting.
pub fn real_rank(rows: &[Vec<f64>], tol: f64) -> usize {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let m = a.len();
    let n = a.first().map_or(0, |r| r.len());
    let mut rank = 0;
    for col in 0..n {
        if rank == m {
            break;
        }
        let (piv, val) = (rank..m)
            .map(|r| (r, a[r][col].abs()))
            .fold((rank, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if val <= tol {
            continue;
        }
        a.swap(rank, piv);
        for r in (rank + 1)..m {
            let f = a[r][col] / a[rank][col];
            for k in col..n {
                a[r][k] -= f * a[rank][k];
            }
        }
        rank += 1;
    }
    rank
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b} (tol {tol})");
    }

    #[test]
    fn kron_identities() {
        let i2 = ComplexMatrix::identity(2);
        assert_eq!(kron(&i2, &i2), ComplexMatrix::identity(4));
        let p0 = Ket::basis(2, 0).projector();
        let m = kron(&p0, &ComplexMatrix::identity(3));
        assert_eq!(m, ComplexMatrix::from_real_diag(&[1., 1., 1., 0., 0., 0.]));
    }

    #[test]
    fn eigenvalues_of_diagonal_and_dense() {
        let d = ComplexMatrix::from_real_diag(&[3.0, 1.0, 2.0]);
        let ev = hermitian_eigenvalues(&d).unwrap();
        assert_eq!(ev.len(), 3);
        for (a, b) in ev.iter().zip([1.0, 2.0, 3.0]) {
            approx(*a, b, 1e-12);
        }
        // Pauli-Y has eigenvalues ±1 and purely imaginary entries
        let y = ComplexMatrix::new(2, 2, vec![re(0.), c(0., -1.), c(0., 1.), re(0.)]).unwrap();
        let ev = hermitian_eigenvalues(&y).unwrap();
        approx(ev[0], -1.0, 1e-12);
        approx(ev[1], 1.0, 1e-12);
    }

    #[test]
    fn eigenvalues_reject_non_hermitian() {
        let m = ComplexMatrix::from_real_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        assert!(matches!(
            hermitian_eigenvalues(&m),
            Err(QmathError::NotHermitian(_))
        ));
    }

    #[test]
    fn swap_operator_properties() {
        for d in 2..=4 {
            let v = swap_operator(d);
            assert_eq!(&v * &v, ComplexMatrix::identity(d * d));
            let pm = antisymmetric_projector(d);
            approx(pm.trace().re, (d * (d - 1) / 2) as f64, 1e-12);
        }
    }

    #[test]
    fn partial_trace_of_product() {
        let a = DensityOperator::new(ComplexMatrix::from_real_diag(&[0.25, 0.75]), vec![2]).unwrap();
        let b =
            DensityOperator::new(ComplexMatrix::from_real_diag(&[0.5, 0.3, 0.2]), vec![3]).unwrap();
        let ab = a.kron(&b);
        assert!(ab.partial_trace(0).unwrap().matrix().max_abs_diff(a.matrix()) < 1e-12);
        assert!(ab.partial_trace(1).unwrap().matrix().max_abs_diff(b.matrix()) < 1e-12);
        assert!(ab.trace_out(0).unwrap().matrix().max_abs_diff(b.matrix()) < 1e-12);
        assert!(matches!(
            ab.partial_trace(2),
            Err(QmathError::InvalidSubsystem { .. })
        ));
    }

    #[test]
    fn partial_transpose_needs_bipartite() {
        let a = DensityOperator::new(ComplexMatrix::from_real_diag(&[0.5, 0.5]), vec![2]).unwrap();
        assert!(matches!(
            a.partial_transpose(0),
            Err(QmathError::NotBipartite(1))
        ));
        let three = a.kron(&a).kron(&a);
        assert!(matches!(
            three.partial_transpose(0),
            Err(QmathError::NotBipartite(3))
        ));
    }

    #[test]
    fn separable_diag_state_is_ppt() {
        let rho = DensityOperator::new(
            ComplexMatrix::from_real_diag(&[0.1, 0.2, 0.3, 0.4]),
            vec![2, 2],
        )
        .unwrap();
        let pt = rho.partial_transpose(1).unwrap();
        assert!(hermitian_eigenvalues(&pt).unwrap()[0] >= 0.0);
    }

    #[test]
    fn density_validation() {
        let bad_trace = ComplexMatrix::from_real_diag(&[0.5, 0.4]);
        assert!(DensityOperator::new(bad_trace, vec![2]).is_err());
        let negative = ComplexMatrix::from_real_diag(&[1.5, -0.5]);
        assert!(DensityOperator::new(negative, vec![2]).is_err());
        let wrong_dims = ComplexMatrix::from_real_diag(&[0.5, 0.5]);
        assert!(DensityOperator::new(wrong_dims, vec![3]).is_err());
        assert!(Ket::new(vec![re(1.0), re(1.0)]).is_err());
    }

    #[test]
    fn rank_of_degenerate_block() {
        let r = vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![1.0, 0.0, 1.0, 0.0],
            vec![0.0, 1.0, 0.0, 1.0],
        ];
        assert_eq!(real_rank(&r, 1e-10), 3);
        assert_eq!(real_rank(&[vec![1.0, 0.0], vec![0.0, 1.0]], 1e-10), 2);
    }
}
