//! Dense linear-algebra helpers on top of nalgebra.
//!
//! Generalized problems `K - λM` are only ever posed with a Hermitian
//! positive-definite `M` (mass matrices), so they are reduced to standard
//! problems through the Cholesky factor of `M`.

use alloc::format;
use alloc::vec::Vec;

use nalgebra::{Cholesky, DMatrix, Dyn, Schur, SymmetricEigen, LU};

use crate::{CMat, CVec, Error, Result, C64};

pub const EPS: f64 = f64::EPSILON;

pub fn to_complex(a: &DMatrix<f64>) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()).scale(0.5)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.norm()
}

/// Largest singular value.
pub fn norm2(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

pub fn min_singular_value(a: &CMat) -> f64 {
    if a.is_empty() {
        return f64::INFINITY;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Rank threshold `max(m, n)·ε·σ_max`.
pub fn default_rank_tolerance(rows: usize, cols: usize, sigma_max: f64) -> f64 {
    rows.max(cols) as f64 * EPS * sigma_max
}

/// Full singular value decomposition split into numerical range and
/// nullspace parts.
#[derive(Debug, Clone)]
pub struct SvdSplit {
    /// Left singular vectors, `m × m` when the input is square.
    pub u: CMat,
    /// Singular values in descending order.
    pub singular_values: Vec<f64>,
    /// Right singular vectors as columns, `n × n`.
    pub v: CMat,
    pub rank: usize,
    /// Absolute threshold used for the rank decision.
    pub threshold: f64,
}

impl SvdSplit {
    /// `relative_tol` scales `σ_max`; `None` uses [`default_rank_tolerance`].
    pub fn new(a: &CMat, relative_tol: Option<f64>) -> Self {
        let (m, n) = a.shape();
        let sigma_max_of = |s: &[f64]| s.first().copied().unwrap_or(0.0);
        // Pad short matrices with zero rows so that V is square.
        let padded;
        let work = if m < n {
            let mut p = CMat::zeros(n, n);
            p.view_mut((0, 0), (m, n)).copy_from(a);
            padded = p;
            &padded
        } else {
            a
        };
        let svd = work.clone().svd(true, true);
        let s: Vec<f64> = svd.singular_values.iter().copied().collect();
        let smax = sigma_max_of(&s);
        let threshold = match relative_tol {
            Some(t) => t * smax,
            None => default_rank_tolerance(m, n, smax),
        };
        Self::finish(
            svd.u.unwrap(),
            s,
            svd.v_t.unwrap().adjoint(),
            threshold,
            m.min(n),
        )
    }

    /// Rank decision against an absolute threshold.
    pub fn with_absolute_threshold(a: &CMat, threshold: f64) -> Self {
        let (m, n) = a.shape();
        let padded;
        let work = if m < n {
            let mut p = CMat::zeros(n, n);
            p.view_mut((0, 0), (m, n)).copy_from(a);
            padded = p;
            &padded
        } else {
            a
        };
        let svd = work.clone().svd(true, true);
        let s: Vec<f64> = svd.singular_values.iter().copied().collect();
        Self::finish(
            svd.u.unwrap(),
            s,
            svd.v_t.unwrap().adjoint(),
            threshold,
            m.min(n),
        )
    }

    fn finish(u: CMat, s: Vec<f64>, v: CMat, threshold: f64, max_rank: usize) -> Self {
        let rank = s.iter().take(max_rank).filter(|&&x| x > threshold).count();
        Self {
            u,
            singular_values: s,
            v,
            rank,
            threshold,
        }
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Orthonormal basis of the numerical nullspace (columns).
    pub fn nullspace(&self) -> CMat {
        let n = self.v.ncols();
        self.v.columns(self.rank, n - self.rank).into_owned()
    }

    /// Orthonormal basis of the orthogonal complement of the range.
    ///
    /// Only meaningful for square inputs.
    pub fn left_nullspace(&self) -> CMat {
        let m = self.u.ncols();
        self.u.columns(self.rank, m - self.rank).into_owned()
    }

    /// Minimal-norm least-squares solution of `A x = b` restricted to the
    /// numerical rank.
    pub fn solve_min_norm(&self, b: &CVec) -> CVec {
        let n = self.v.nrows();
        let mut x = CVec::zeros(n);
        for k in 0..self.rank {
            let uk = self.u.column(k);
            let coeff = uk.dotc(b) / C64::new(self.singular_values[k], 0.0);
            x += self.v.column(k) * coeff;
        }
        x
    }
}

/// Orthonormal bases of the column space of `a` and of its orthogonal
/// complement, with an absolute singular-value threshold.
pub fn range_and_complement(a: &CMat, threshold: f64) -> (CMat, CMat) {
    let m = a.nrows();
    if a.ncols() == 0 {
        return (CMat::zeros(m, 0), CMat::identity(m, m));
    }
    let gram = a * a.adjoint();
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let t2 = threshold * threshold;
    let r = order.iter().filter(|&&i| eig.eigenvalues[i] > t2).count();
    let pick =
        |idx: &[usize]| CMat::from_fn(m, idx.len(), |row, col| eig.eigenvectors[(row, idx[col])]);
    (pick(&order[..r]), pick(&order[r..]))
}

/// Eigenvalues of the Hermitian part of `a`, ascending.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(hermitian_part(a))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Inverse Cholesky factor application: returns `L⁻¹ A L⁻ᴴ` for `M = L Lᴴ`.
fn congruence(a: &CMat, chol: &Cholesky<C64, Dyn>) -> CMat {
    let l = chol.l();
    let mut x = a.clone();
    l.solve_lower_triangular_mut(&mut x);
    let mut y = x.adjoint();
    l.solve_lower_triangular_mut(&mut y);
    y.adjoint()
}

fn cholesky(m: &CMat) -> Result<Cholesky<C64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| {
        Error::Numerical(format!(
            "matrix of size {} is not positive definite",
            m.nrows()
        ))
    })
}

/// Eigenvalues of the Hermitian pencil `(Herm(H), M)`, ascending.
pub fn generalized_hermitian_eigenvalues(h: &CMat, m: &CMat) -> Result<Vec<f64>> {
    if h.is_empty() {
        return Ok(Vec::new());
    }
    let chol = cholesky(m)?;
    let c = congruence(&hermitian_part(h), &chol);
    Ok(hermitian_eigenvalues(&c))
}

/// Generalized eigenvalues of `K - λM` with `M` Hermitian positive definite,
/// sorted by real part then imaginary part.
pub fn generalized_eigenvalues(k: &CMat, m: &CMat) -> Result<Vec<C64>> {
    if k.is_empty() {
        return Ok(Vec::new());
    }
    let chol = cholesky(m)?;
    let c = congruence(k, &chol);
    let n = c.nrows();
    let schur = Schur::try_new(c, EPS, 1000 * n.max(10))
        .ok_or_else(|| Error::Numerical(format!("Schur iteration did not converge (n = {n})")))?;
    let (_, t) = schur.unpack();
    let mut ev: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();
    sort_complex(&mut ev);
    Ok(ev)
}

pub fn sort_complex(v: &mut [C64]) {
    v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
}

/// Distance from `z` to the nearest point of `points` (infinite if empty).
pub fn distance_to(points: &[C64], z: C64) -> f64 {
    points
        .iter()
        .map(|p| (p - z).norm())
        .fold(f64::INFINITY, f64::min)
}

pub fn lu(a: &CMat) -> LU<C64, Dyn, Dyn> {
    a.clone().lu()
}

pub fn select(a: &CMat, rows: &[usize], cols: &[usize]) -> CMat {
    CMat::from_fn(rows.len(), cols.len(), |i, j| a[(rows[i], cols[j])])
}

pub fn gather(v: &CVec, idx: &[usize]) -> CVec {
    CVec::from_fn(idx.len(), |i, _| v[idx[i]])
}
