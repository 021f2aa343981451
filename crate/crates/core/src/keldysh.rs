//! Jordan chains of matrix pencils and of holomorphic matrix functions.
//!
//! Both kinds of chains are solutions of a triangular system built from the
//! Taylor coefficients `c_l` of a matrix function at `λ₀`:
//!
//! ```text
//! Σ_{l=0}^{j} c_l φ_{j-l} = 0,   j = 0, …, k,   φ₀ ≠ 0.
//! ```
//!
//! For the pencil `K_B - λM` the coefficients are `c₀ = K_B - λ₀M`,
//! `c₁ = -M`; for `M(λ) = D(λ) - B` they are `c₀ = D(λ₀) - B` and
//! `c_l = D^(l)(λ₀) / l!`.
//!
//! Extraction proceeds level by level. A chain can only be continued when its
//! next right-hand side lies in the range of `c₀`; since every generalized
//! vector is free up to lower-level chain data, the extractor mixes the live
//! chains (and shifted copies of chains that already stopped) to cancel as
//! many obstructions as possible. Chains that cannot be continued in any
//! combination stop. The resulting lengths are the partial multiplicities of
//! the eigenvalue up to the maximum length. Each generalized vector is the
//! minimal-norm solution of its link equation.

use alloc::vec::Vec;

use crate::assembly::FormMatrices;
use crate::dtn::{dtn_derivatives_taylor, DtnDerivatives};
use crate::linalg::{self, SvdSplit};
use crate::realizations::{BoundaryOperator, DirichletPencil};
use crate::{CMat, CVec, Error, Result, C64};

/// Threshold on the mixing coefficients separating continuable combinations
/// from stopping ones.
const MIXING_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainOptions {
    /// Longest chain to extract.
    pub max_len: usize,
    /// Relative rank threshold for `c₀`; `None` selects `max(m, n)·ε·σ_max`.
    pub tol_rank: Option<f64>,
    /// Link residual threshold, relative to `Σ_l ‖c_l‖_F ‖φ_{j-l}‖`.
    pub tol_chain: f64,
}

impl Default for ChainOptions {
    fn default() -> Self {
        Self {
            max_len: 6,
            tol_rank: None,
            tol_chain: 1e-8,
        }
    }
}

/// How the vectors of a [`JordanChain`] were fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainNormalization {
    /// Extracted from the pencil with minimal-norm generalized vectors.
    MinimalNorm,
    /// Built by boundary value solves from prescribed boundary data.
    BoundaryData,
}

/// A Jordan chain `(K_B - λ₀M) f_j = M f_{j-1}` of the Robin pencil.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanChain {
    pub lambda0: C64,
    pub vectors: Vec<CVec>,
    /// `‖(K_B - λ₀M) f_j - M f_{j-1}‖ / (‖K_B - λ₀M‖_F ‖f_j‖ + ‖M‖_F ‖f_{j-1}‖)`.
    pub residuals: Vec<f64>,
    pub normalization: ChainNormalization,
}

impl JordanChain {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn recompute_residuals(&self, k_b: &CMat, mass: &CMat) -> Vec<f64> {
        pencil_residuals(k_b, mass, self.lambda0, &self.vectors)
    }
}

/// A Jordan chain of a holomorphic matrix function in the sense of Keldysh.
#[derive(Debug, Clone, PartialEq)]
pub struct KeldyshChain {
    pub lambda0: C64,
    pub vectors: Vec<CVec>,
    /// `‖Σ_l c_l φ_{j-l}‖ / Σ_l ‖c_l‖_F ‖φ_{j-l}‖` per level.
    pub residuals: Vec<f64>,
}

impl KeldyshChain {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Level residuals against Taylor coefficients `coeffs` (missing
    /// coefficients count as zero).
    pub fn recompute_residuals(&self, coeffs: &[CMat]) -> Vec<f64> {
        series_residuals(coeffs, &self.vectors)
    }
}

/// `Σ_{l=0}^{j} c_l v_{j-l}` for one level `j`.
fn level_sum(coeffs: &[CMat], vectors: &[CVec], j: usize, from: usize) -> CVec {
    let mut acc = CVec::zeros(coeffs[0].nrows());
    for l in from..=j.min(coeffs.len() - 1) {
        acc += &coeffs[l] * &vectors[j - l];
    }
    acc
}

fn level_scale(norms: &[f64], vectors: &[CVec], j: usize) -> f64 {
    (0..=j.min(norms.len() - 1))
        .map(|l| norms[l] * vectors[j - l].norm())
        .sum()
}

fn relative(value: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        value / scale
    } else {
        value
    }
}

/// Per-level residuals of `vectors` as a chain of the series `coeffs`.
pub fn series_residuals(coeffs: &[CMat], vectors: &[CVec]) -> Vec<f64> {
    let norms: Vec<f64> = coeffs.iter().map(linalg::frobenius).collect();
    (0..vectors.len())
        .map(|j| {
            relative(
                level_sum(coeffs, vectors, j, 0).norm(),
                level_scale(&norms, vectors, j),
            )
        })
        .collect()
}

/// Per-link residuals of `vectors` as a Jordan chain of `(K_B, M)` at `λ₀`.
pub fn pencil_residuals(k_b: &CMat, mass: &CMat, lambda0: C64, vectors: &[CVec]) -> Vec<f64> {
    let coeffs = pencil_coefficients(k_b, mass, lambda0);
    series_residuals(&coeffs, vectors)
}

fn pencil_coefficients(k_b: &CMat, mass: &CMat, lambda0: C64) -> [CMat; 2] {
    [k_b - mass.map(|m| m * lambda0), -mass]
}

struct Stopped {
    vectors: Vec<CVec>,
    /// Component of the first unsolvable right-hand side outside the range
    /// of `c₀`, if the chain stopped for that reason.
    obstruction: Option<CVec>,
}

fn combine(chains: &[Vec<CVec>], q: &[C64]) -> Vec<CVec> {
    let len = chains[0].len();
    (0..len)
        .map(|k| {
            let mut v = CVec::zeros(chains[0][k].len());
            for (chain, &qi) in chains.iter().zip(q) {
                v.axpy(qi, &chain[k], C64::new(1.0, 0.0));
            }
            v
        })
        .collect()
}

/// Chains of the matrix function with Taylor coefficients `coeffs` at `λ₀`,
/// longest first.
pub fn series_chains(coeffs: &[CMat], lambda0: C64, options: &ChainOptions) -> Vec<KeldyshChain> {
    let raw = extract(coeffs, options);
    raw.into_iter()
        .map(|vectors| KeldyshChain {
            lambda0,
            residuals: series_residuals(coeffs, &vectors),
            vectors,
        })
        .collect()
}

fn extract(coeffs: &[CMat], options: &ChainOptions) -> Vec<Vec<CVec>> {
    let c0 = &coeffs[0];
    if c0.is_empty() || options.max_len == 0 {
        return Vec::new();
    }
    let norms: Vec<f64> = coeffs.iter().map(linalg::frobenius).collect();
    let svd = SvdSplit::new(c0, options.tol_rank);
    let kernel = svd.nullspace();
    let cokernel = svd.left_nullspace();
    let one = C64::new(1.0, 0.0);

    let mut live: Vec<Vec<CVec>> = kernel
        .column_iter()
        .map(|c| alloc::vec![c.into_owned()])
        .collect();
    let mut stopped: Vec<Stopped> = Vec::new();

    for j in 1..options.max_len {
        if live.is_empty() {
            break;
        }
        let rhs: Vec<CVec> = live.iter().map(|ch| level_sum(coeffs, ch, j, 1)).collect();
        let obstructions: Vec<CVec> = rhs.iter().map(|r| cokernel.adjoint() * r).collect();
        let vec_scale: Vec<f64> = (0..j)
            .map(|k| live.iter().map(|ch| ch[k].norm()).fold(0.0, f64::max))
            .collect();
        let scale: f64 = (1..=j.min(norms.len() - 1))
            .map(|l| norms[l] * vec_scale[j - l])
            .sum::<f64>()
            + norms[0] * vec_scale[j - 1];
        let threshold = options.tol_chain * scale;

        let blocking: Vec<(usize, CVec)> = stopped
            .iter()
            .enumerate()
            .filter_map(|(t, s)| s.obstruction.clone().map(|o| (t, o)))
            .collect();
        let d = cokernel.ncols();
        let (nl, nw) = (live.len(), blocking.len());
        let mut ow = CMat::zeros(d, nl + nw);
        for (i, o) in obstructions.iter().enumerate() {
            ow.set_column(i, o);
        }
        for (t, (_, o)) in blocking.iter().enumerate() {
            ow.set_column(nl + t, o);
        }
        let null = if d == 0 {
            CMat::identity(nl + nw, nl + nw)
        } else {
            SvdSplit::with_absolute_threshold(&ow, threshold).nullspace()
        };
        let mixing = null.rows(0, nl).into_owned();
        let (extend, stop) = linalg::range_and_complement(&mixing, MIXING_THRESHOLD);

        let w = CMat::from_fn(d, nw, |r, c| blocking[c].1[r]);
        let w_svd = (nw > 0).then(|| SvdSplit::with_absolute_threshold(&w, threshold));

        let mut next_live = Vec::new();
        for q in extend.column_iter() {
            let q: Vec<C64> = q.iter().copied().collect();
            let mut chain = combine(&live, &q);
            if let Some(w_svd) = &w_svd {
                let oq = combine_vec(&obstructions, &q);
                let b = -w_svd.solve_min_norm(&oq);
                for (t, &(idx, _)) in blocking.iter().enumerate() {
                    let lower = &stopped[idx].vectors;
                    let shift = j - lower.len();
                    for (k, v) in lower.iter().enumerate() {
                        chain[k + shift].axpy(b[t], v, one);
                    }
                }
            }
            let r = level_sum(coeffs, &chain, j, 1);
            let phi = -svd.solve_min_norm(&r);
            let link = (&coeffs[0] * &phi + &r).norm();
            let link_scale = level_scale(&norms, &chain_with(&chain, &phi), j);
            if relative(link, link_scale) <= options.tol_chain {
                chain.push(phi);
                next_live.push(chain);
            } else {
                let obstruction = cokernel.adjoint() * &r;
                stopped.push(Stopped {
                    vectors: chain,
                    obstruction: Some(obstruction),
                });
            }
        }
        for q in stop.column_iter() {
            let q: Vec<C64> = q.iter().copied().collect();
            stopped.push(Stopped {
                vectors: combine(&live, &q),
                obstruction: Some(combine_vec(&obstructions, &q)),
            });
        }
        live = next_live;
    }
    stopped.extend(live.into_iter().map(|vectors| Stopped {
        vectors,
        obstruction: None,
    }));

    let mut chains: Vec<Vec<CVec>> = stopped.into_iter().map(|s| s.vectors).collect();
    chains.sort_by_key(|c| core::cmp::Reverse(c.len()));
    chains
}

fn chain_with(chain: &[CVec], phi: &CVec) -> Vec<CVec> {
    let mut out = chain.to_vec();
    out.push(phi.clone());
    out
}

fn combine_vec(vs: &[CVec], q: &[C64]) -> CVec {
    let mut acc = CVec::zeros(vs[0].len());
    for (v, &qi) in vs.iter().zip(q) {
        acc.axpy(qi, v, C64::new(1.0, 0.0));
    }
    acc
}

/// Sorted (descending) lengths of a set of chains.
pub fn length_profile<T>(chains: &[T], len: impl Fn(&T) -> usize) -> Vec<usize> {
    let mut out: Vec<usize> = chains.iter().map(len).collect();
    out.sort_unstable_by(|a, b| b.cmp(a));
    out
}

/// Jordan chains of the pencil `K_B - λM` at `λ₀`; empty when `λ₀` is not an
/// eigenvalue at the chosen rank threshold.
pub fn pencil_jordan_chains(
    k_b: &CMat,
    mass: &CMat,
    lambda0: C64,
    options: &ChainOptions,
) -> Vec<JordanChain> {
    let coeffs = pencil_coefficients(k_b, mass, lambda0);
    extract(&coeffs, options)
        .into_iter()
        .map(|vectors| JordanChain {
            lambda0,
            residuals: series_residuals(&coeffs, &vectors),
            vectors,
            normalization: ChainNormalization::MinimalNorm,
        })
        .collect()
}

/// Taylor coefficients of `M(λ) = D(λ) - B` at `derivs.lambda0`, in dual
/// coordinates.
pub fn keldysh_coefficients(
    forms: &FormMatrices,
    derivs: &DtnDerivatives,
    b: &BoundaryOperator,
) -> Vec<CMat> {
    let mut coeffs = derivs.coefficients();
    coeffs[0] -= b.dual(forms);
    coeffs
}

/// Keldysh chains of `λ ↦ D(λ) - B` at `derivs.lambda0`.
pub fn keldysh_chains(
    forms: &FormMatrices,
    derivs: &DtnDerivatives,
    b: &BoundaryOperator,
    options: &ChainOptions,
) -> Result<Vec<KeldyshChain>> {
    let needed = options.max_len.saturating_sub(1);
    if derivs.order < needed {
        return Err(Error::Order {
            requested: needed,
            limit: derivs.order,
        });
    }
    if b.dimension() != forms.num_boundary() {
        return Err(Error::Dimension {
            what: "boundary operator",
            expected: forms.num_boundary(),
            found: b.dimension(),
        });
    }
    let coeffs = keldysh_coefficients(forms, derivs, b);
    Ok(series_chains(&coeffs, derivs.lambda0, options))
}

/// [`keldysh_chains`] with derivatives from the Taylor recurrence of order
/// `max_len - 1`.
pub fn keldysh_chains_from_taylor(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    b: &BoundaryOperator,
    lambda0: C64,
    options: &ChainOptions,
) -> Result<(DtnDerivatives, Vec<KeldyshChain>)> {
    let derivs = dtn_derivatives_taylor(forms, pencil, lambda0, options.max_len.saturating_sub(1))?;
    let chains = keldysh_chains(forms, &derivs, b, options)?;
    Ok((derivs, chains))
}

/// A boundary operator for which `D(λ) - B` has a chain of length at least
/// two at `λ₀` starting at `seed`:
/// `B_dual = D(λ₀) + w vᴴ` with `w = D'(λ₀) φ₀`, `vᴴ φ₀ = 0`, `‖v‖ = 1`.
pub fn make_defective_boundary_operator(
    forms: &FormMatrices,
    pencil: &DirichletPencil,
    lambda0: C64,
    seed: &CVec,
) -> Result<BoundaryOperator> {
    let n = forms.num_boundary();
    if n < 2 {
        return Err(Error::Construction(
            "need at least two boundary nodes".into(),
        ));
    }
    if seed.len() != n {
        return Err(Error::Dimension {
            what: "seed",
            expected: n,
            found: seed.len(),
        });
    }
    let seed_norm = seed.norm();
    if seed_norm.is_nan() || seed_norm <= 0.0 {
        return Err(Error::DegenerateSeed("seed vector is zero".into()));
    }
    let derivs = dtn_derivatives_taylor(forms, pencil, lambda0, 1)?;
    let w = &derivs.matrices[1] * seed;
    if w.norm() <= 1e3 * linalg::EPS * linalg::frobenius(&derivs.matrices[1]) * seed_norm {
        return Err(Error::DegenerateSeed("D'(λ₀) annihilates the seed".into()));
    }
    let unit = seed.unscale(seed_norm);
    // Project the coordinate vector farthest from the seed direction.
    let k = (0..n)
        .min_by(|&a, &b| unit[a].norm().total_cmp(&unit[b].norm()))
        .unwrap_or(0);
    let mut v = -&unit * unit[k].conj();
    v[k] += C64::new(1.0, 0.0);
    let v = v.unscale(v.norm());
    let b_dual = &derivs.matrices[0] + &w * v.adjoint();
    BoundaryOperator::from_dual(forms, b_dual)
}
