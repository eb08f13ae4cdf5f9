//! Small sparse/dense helpers layered over faer.
//!
//! Matrices that are only applied live in a plain CSR container; anything
//! factored is handed to faer's sparse Cholesky or LU.

use std::ops::{AddAssign, Mul};

use faer::linalg::solvers::{Solve, SolveCore};
use faer::sparse::linalg::solvers::{Llt, Lu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Side};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub use faer::c64;

use crate::error::{ReconError, Result};

pub const I: c64 = c64 { re: 0.0, im: 1.0 };
pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// Compressed sparse rows. Duplicate triplets are summed on construction.
#[derive(Debug, Clone)]
pub struct Csr<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T> Csr<T>
where
    T: Copy + AddAssign,
{
    pub fn from_triplets(nrows: usize, ncols: usize, mut entries: Vec<(usize, usize, T)>) -> Self {
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut indptr = vec![0usize; nrows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            debug_assert!(i < nrows && j < ncols);
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            indptr[i + 1] += indptr[i];
        }
        Csr { nrows, ncols, indptr, indices, values }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        (0..self.nrows).flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v))).collect()
    }

    pub fn transpose(&self) -> Csr<T> {
        let t = self.triplets().into_iter().map(|(i, j, v)| (j, i, v)).collect();
        Csr::from_triplets(self.ncols, self.nrows, t)
    }

    /// `y = A x` for any vector scalar that can absorb the matrix scalar.
    pub fn apply<X>(&self, x: &[X]) -> Vec<X>
    where
        X: Copy + Default + AddAssign + Mul<T, Output = X>,
    {
        assert_eq!(x.len(), self.ncols, "csr apply: length mismatch");
        (0..self.nrows)
            .map(|i| {
                let mut acc = X::default();
                for (j, v) in self.row(i) {
                    acc += x[j] * v;
                }
                acc
            })
            .collect()
    }

    /// Rows restricted to `rows`, columns restricted to `cols` (given as a
    /// position map `col_pos[j] = Some(k)`).
    pub fn submatrix(&self, rows: &[usize], col_pos: &[Option<usize>], ncols: usize) -> Csr<T> {
        let mut t = Vec::new();
        for (r, &i) in rows.iter().enumerate() {
            for (j, v) in self.row(i) {
                if let Some(k) = col_pos[j] {
                    t.push((r, k, v));
                }
            }
        }
        Csr::from_triplets(rows.len(), ncols, t)
    }
}

impl Csr<f64> {
    pub fn to_complex(&self) -> Csr<c64> {
        Csr {
            nrows: self.nrows,
            ncols: self.ncols,
            indptr: self.indptr.clone(),
            indices: self.indices.clone(),
            values: self.values.iter().map(|&v| c64::new(v, 0.0)).collect(),
        }
    }
}

impl<T> Csr<T>
where
    T: Copy + AddAssign + faer::traits::ComplexField,
{
    pub fn to_faer(&self) -> Result<SparseColMat<usize, T>> {
        let t: Vec<_> = self.triplets().into_iter().map(|(i, j, v)| Triplet::new(i, j, v)).collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| ReconError::Factorization(format!("{e:?}")))
    }
}

pub fn col_from(v: &[c64]) -> Mat<c64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

pub fn vec_from_col(m: &Mat<c64>, j: usize) -> Vec<c64> {
    (0..m.nrows()).map(|i| m[(i, j)]).collect()
}

/// Sparse Cholesky of a Hermitian positive definite complex matrix.
pub struct HermitianFactor {
    llt: Llt<usize, c64>,
    pub dim: usize,
}

impl HermitianFactor {
    pub fn new(a: &Csr<c64>) -> Result<Self> {
        let sp = a.to_faer()?;
        let llt = sp
            .sp_cholesky(Side::Lower)
            .map_err(|e| ReconError::Factorization(format!("cholesky: {e:?}")))?;
        Ok(HermitianFactor { llt, dim: a.nrows })
    }

    pub fn solve(&self, b: &[c64]) -> Vec<c64> {
        let mut m = col_from(b);
        self.llt.solve_in_place(m.as_mut());
        vec_from_col(&m, 0)
    }

    pub fn solve_mat(&self, b: &mut Mat<c64>) {
        self.llt.solve_in_place(b.as_mut());
    }
}

/// Sparse LU for general square systems; real matrices keep a real factor
/// and split complex right-hand sides into real and imaginary parts.
pub enum GeneralFactor {
    Real(Lu<usize, f64>),
    Complex(Lu<usize, c64>),
}

impl GeneralFactor {
    pub fn real(a: &Csr<f64>) -> Result<Self> {
        let lu = a.to_faer()?.sp_lu().map_err(|e| ReconError::Factorization(format!("lu: {e:?}")))?;
        Ok(GeneralFactor::Real(lu))
    }

    pub fn complex(a: &Csr<c64>) -> Result<Self> {
        let lu = a.to_faer()?.sp_lu().map_err(|e| ReconError::Factorization(format!("lu: {e:?}")))?;
        Ok(GeneralFactor::Complex(lu))
    }

    /// Solves `A X = B` (or `Aᴴ X = B` when `adjoint`) in place.
    pub fn solve_mat(&self, b: &mut Mat<c64>, adjoint: bool) {
        match self {
            GeneralFactor::Complex(lu) => {
                if adjoint {
                    lu.solve_transpose_in_place_with_conj(Conj::Yes, b.as_mut());
                } else {
                    lu.solve_in_place_with_conj(Conj::No, b.as_mut());
                }
            }
            GeneralFactor::Real(lu) => {
                let (n, k) = (b.nrows(), b.ncols());
                let mut split = Mat::<f64>::from_fn(n, 2 * k, |i, j| {
                    if j < k {
                        b[(i, j)].re
                    } else {
                        b[(i, j - k)].im
                    }
                });
                if adjoint {
                    lu.solve_transpose_in_place_with_conj(Conj::No, split.as_mut());
                } else {
                    lu.solve_in_place_with_conj(Conj::No, split.as_mut());
                }
                for j in 0..k {
                    for i in 0..n {
                        b[(i, j)] = c64::new(split[(i, j)], split[(i, j + k)]);
                    }
                }
            }
        }
    }

    pub fn solve(&self, b: &[c64]) -> Vec<c64> {
        let mut m = col_from(b);
        self.solve_mat(&mut m, false);
        vec_from_col(&m, 0)
    }

    pub fn solve_adjoint(&self, b: &[c64]) -> Vec<c64> {
        let mut m = col_from(b);
        self.solve_mat(&mut m, true);
        vec_from_col(&m, 0)
    }
}

/// Hager/Higham estimate of `‖A⁻¹‖₁` from solves with `A` and `Aᴴ`.
pub fn inverse_one_norm_estimate(
    n: usize,
    solve: impl Fn(&[c64]) -> Vec<c64>,
    solve_adjoint: impl Fn(&[c64]) -> Vec<c64>,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut x = vec![c64::new(1.0 / n as f64, 0.0); n];
    let mut estimate = 0.0;
    let mut last_j = usize::MAX;
    for _ in 0..6 {
        let y = solve(&x);
        let norm_y: f64 = y.iter().map(|v| v.norm()).sum();
        if !norm_y.is_finite() {
            return f64::INFINITY;
        }
        if norm_y <= estimate {
            break;
        }
        estimate = norm_y;
        let sign: Vec<c64> = y
            .iter()
            .map(|v| if v.norm() > 0.0 { v / v.norm() } else { ONE })
            .collect();
        let z = solve_adjoint(&sign);
        let (j, zmax) = z
            .iter()
            .enumerate()
            .map(|(j, v)| (j, v.norm()))
            .fold((0, -1.0), |acc, p| if p.1 > acc.1 { p } else { acc });
        let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * b).re).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        x = vec![ZERO; n];
        x[j] = ONE;
    }
    // Higham's alternating-sign safeguard.
    let alt: Vec<c64> = (0..n)
        .map(|i| {
            let s = if i % 2 == 0 { 1.0 } else { -1.0 };
            c64::new(s * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
        })
        .collect();
    let y = solve(&alt);
    let alt_est = 2.0 * y.iter().map(|v| v.norm()).sum::<f64>() / (3.0 * n as f64);
    estimate.max(alt_est)
}

pub fn one_norm(a: &Csr<c64>) -> f64 {
    let mut col = vec![0.0; a.ncols];
    for (_, j, v) in a.triplets() {
        col[j] += v.norm();
    }
    col.into_iter().fold(0.0, f64::max)
}

/// Weighted inner product `Σ w u conj(v)`.
pub fn inner(w: &[f64], u: &[c64], v: &[c64]) -> c64 {
    w.iter().zip(u.iter().zip(v)).map(|(&w, (a, b))| a * b.conj() * w).sum()
}

pub fn norm(w: &[f64], u: &[c64]) -> f64 {
    w.iter().zip(u).map(|(&w, a)| w * a.norm_sqr()).sum::<f64>().sqrt()
}

pub fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> Vec<c64> {
    (0..n).map(|_| c64::new(rng.random::<f64>() * 2.0 - 1.0, rng.random::<f64>() * 2.0 - 1.0)).collect()
}

pub fn axpy(alpha: c64, x: &[c64], y: &mut [c64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Largest singular value of `T` in the `w`-weighted norm, by Golub-Kahan
/// bidiagonalization with full reorthogonalization. `adjoint` must be the
/// `w`-adjoint of `apply`.
pub fn weighted_operator_norm(
    w: &[f64],
    apply: impl Fn(&[c64]) -> Vec<c64>,
    adjoint: impl Fn(&[c64]) -> Vec<c64>,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let n = w.len();
    let mut v = random_complex(rng, n);
    let nv = norm(w, &v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut vs: Vec<Vec<c64>> = Vec::new();
    let mut us: Vec<Vec<c64>> = Vec::new();
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut beta = 0.0;
    let mut previous = 0.0;
    let mut sigma = 0.0;
    for k in 0..steps {
        let mut u = apply(&v);
        if let Some(up) = us.last() {
            axpy(c64::new(-beta, 0.0), up, &mut u);
        }
        for up in &us {
            let c = inner(w, &u, up);
            axpy(-c, up, &mut u);
        }
        let alpha = norm(w, &u);
        if alpha == 0.0 {
            break;
        }
        u.iter_mut().for_each(|x| *x /= alpha);
        vs.push(v.clone());
        us.push(u.clone());
        alphas.push(alpha);
        let mut next = adjoint(&u);
        axpy(c64::new(-alpha, 0.0), &v, &mut next);
        for vp in &vs {
            let c = inner(w, &next, vp);
            axpy(-c, vp, &mut next);
        }
        beta = norm(w, &next);
        let m = alphas.len();
        let b = Mat::<f64>::from_fn(m, m, |i, j| {
            if i == j {
                alphas[i]
            } else if j == i + 1 {
                betas[i]
            } else {
                0.0
            }
        });
        sigma = b.singular_values().map(|s| s[0]).unwrap_or(alpha);
        if k > 2 && (sigma - previous).abs() <= 1e-10 * sigma {
            break;
        }
        previous = sigma;
        if beta <= 1e-14 * sigma {
            break;
        }
        betas.push(beta);
        v = next.into_iter().map(|x| x / beta).collect();
    }
    sigma
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Serializes a complex number as `[re, im]`.
pub mod complex_pair {
    use super::c64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &c64, s: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<c64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(d)?;
        Ok(c64::new(re, im))
    }
}
