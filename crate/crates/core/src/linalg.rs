//! Dense linear-algebra helpers for small matrices: upper-triangular
//! Gram factors, nonsymmetric eigenpairs (Schur eigenvalues refined with
//! inverse iteration), and multiset spectrum comparison.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};

use crate::{c, is_finite, Error, Real, Result};

/// Eigenvalue/eigenvector pair of a real matrix.
#[derive(Debug, Clone)]
pub struct EigenPair<T: Real> {
    pub value: Complex<T>,
    pub vector: DVector<Complex<T>>,
}

/// Upper-triangular `U` with `Uᵀ U = A` for symmetric positive definite `A`
/// (the transpose of the lower Cholesky factor).
pub fn upper_gram_factor<T: Real>(a: &DMatrix<T>, what: &'static str) -> Result<DMatrix<T>> {
    let chol = nalgebra::Cholesky::new(a.clone()).ok_or(Error::NotPositiveDefinite { what })?;
    Ok(chol.l().transpose())
}

/// Extreme eigenvalues `(λ_min, λ_max)` of a symmetric matrix.
pub fn symmetric_extremes<T: Real>(a: &DMatrix<T>) -> Result<(T, T)> {
    let scale = T::one() + a.abs().max();
    if (a - a.transpose()).abs().max() > c::<T>(1e-10) * scale {
        return Err(Error::NotSymmetric {
            what: "matrix for eigenvalue bounds",
        });
    }
    let eigs = a.clone().symmetric_eigen().eigenvalues;
    let mut min = eigs[0];
    let mut max = eigs[0];
    for &l in eigs.iter() {
        min = T::min(min, l);
        max = T::max(max, l);
    }
    Ok((min, max))
}

/// All eigenvalues of a real square matrix, via the real Schur form.
pub fn complex_eigenvalues<T: Real>(m: &DMatrix<T>) -> Result<Vec<Complex<T>>> {
    let schur = m
        .clone()
        .try_schur(T::default_epsilon(), 100_000)
        .ok_or(Error::EigenNotConverged)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

fn to_complex<T: Real>(m: &DMatrix<T>) -> DMatrix<Complex<T>> {
    m.map(|x| Complex::new(x, T::zero()))
}

fn residual_norm<T: Real>(
    m: &DMatrix<Complex<T>>,
    value: Complex<T>,
    v: &DVector<Complex<T>>,
) -> T {
    (m * v - v.map(|x| x * value)).norm()
}

/// One eigenvector by inverse iteration at a precomputed eigenvalue. Retries
/// with a slightly shifted target if the factorization degenerates.
fn eigenvector_at<T: Real>(
    mc: &DMatrix<Complex<T>>,
    value: Complex<T>,
) -> Result<DVector<Complex<T>>> {
    let n = mc.nrows();
    let start = DVector::from_fn(n, |i, _| {
        Complex::new(c::<T>(1.0 + 0.37 * i as f64), c::<T>(0.11 * (i + 1) as f64))
    });
    let scale = T::one() + value.modulus();
    let mut best: Option<(DVector<Complex<T>>, T)> = None;

    for attempt in 0..3 {
        let delta = match attempt {
            0 => T::zero(),
            1 => c::<T>(1e-12) * scale,
            _ => c::<T>(1e-8) * scale,
        };
        let shift = value + Complex::new(delta, delta * c::<T>(0.5));
        let mut a = mc.clone();
        for i in 0..n {
            a[(i, i)] -= shift;
        }
        let lu = a.lu();
        let mut v = start.normalize();
        for _ in 0..6 {
            let Some(w) = lu.solve(&v) else { break };
            let norm = w.norm();
            if !is_finite(norm) || norm.is_zero() {
                break;
            }
            v = w / Complex::new(norm, T::zero());
            let r = residual_norm(mc, value, &v);
            if best.as_ref().is_none_or(|(_, b)| r < *b) {
                best = Some((v.clone(), r));
            }
        }
        if let Some((_, r)) = &best {
            if *r <= c::<T>(1e-12) * scale {
                break;
            }
        }
    }

    best.map(|(v, _)| v).ok_or(Error::EigenNotConverged)
}

/// Eigenpairs of a real square matrix. Intended for the small dense matrices
/// that arise from setpoint linearizations.
pub fn eigenpairs<T: Real>(m: &DMatrix<T>) -> Result<Vec<EigenPair<T>>> {
    let values = complex_eigenvalues(m)?;
    let mc = to_complex(m);
    values
        .into_iter()
        .map(|value| {
            let vector = eigenvector_at(&mc, value)?;
            Ok(EigenPair { value, vector })
        })
        .collect()
}

/// Largest eigenvalue magnitude.
pub fn spectral_radius<T: Real>(spectrum: &[Complex<T>]) -> T {
    spectrum.iter().map(|l| l.modulus()).fold(T::zero(), T::max)
}

/// Greedy pairing distance between two spectra of equal length: for every
/// value of `a` the nearest unused value of `b` is consumed, and the largest
/// pairing distance is returned. Zero means identical multisets.
pub fn max_pairing_distance<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "spectra",
            expected: a.len(),
            got: b.len(),
        });
    }
    let mut used = vec![false; b.len()];
    let mut worst = T::zero();
    for &la in a {
        let mut pick = None;
        let mut dist = T::zero();
        for (j, &lb) in b.iter().enumerate() {
            if used[j] {
                continue;
            }
            let d = (la - lb).modulus();
            if pick.is_none() || d < dist {
                pick = Some(j);
                dist = d;
            }
        }
        let j = pick.expect("lengths match");
        used[j] = true;
        worst = T::max(worst, dist);
    }
    Ok(worst)
}
