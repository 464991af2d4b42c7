//! Behaviour of the compensated closed loop near the setpoint: linearized
//! dynamics, the similarity-transformed saddle-point form, its spectrum, the
//! real-spectrum tuning rule, and transient metrics extracted from simulated
//! trajectories.
//!
//! With `M⋆ = M(q⋆)`, `ℛ = D(q⋆, 0) + K_P`, and `𝒫 = K_I + μ K_Z`, the
//! linearized error dynamics are
//!
//! ```text
//! d/dt (x − x⋆) = A (x − x⋆),    A = −[ 0   −M⋆⁻¹        ]
//!                                     [ 𝒫    ℛ M⋆⁻¹      ]
//! ```
//!
//! Choosing upper-triangular factors `φ_Mᵀ φ_M = M⋆⁻¹` and `φ_Pᵀ φ_P = 𝒫`
//! turns `−A` by similarity into the saddle-point matrix
//!
//! ```text
//! N = [ φ_M ℛ φ_Mᵀ   φ_M φ_Pᵀ ]
//!     [ −φ_P φ_Mᵀ    0        ]
//! ```
//!
//! whose eigenvalues all satisfy `λ² − a λ + b = 0` with Rayleigh quotients
//! `a, b` of `φ_M ℛ φ_Mᵀ` and `φ_M 𝒫 φ_Mᵀ` at the eigenvector's first block.
//! The spectrum is real and positive whenever
//! `4 λmax(𝒫) λmax(M⋆) ≤ λmin(ℛ)²`, which removes transient oscillation near
//! the setpoint.

use nalgebra::{Complex, ComplexField, DMatrix, DVector};

use crate::control::PbcGains;
use crate::linalg::{self, EigenPair};
use crate::plant::MechanicalSystem;
use crate::sim::Trajectory;
use crate::{c, Error, Real, Result};

/// Saddle-point form of the linearized closed loop at the setpoint.
#[derive(Debug, Clone)]
pub struct SaddleDecomposition<T: Real> {
    /// Mass matrix at the setpoint, `M⋆`.
    pub mass: DMatrix<T>,
    /// Total dissipation `ℛ = D(q⋆, 0) + K_P`.
    pub dissipation: DMatrix<T>,
    /// Shaped stiffness `𝒫 = K_I + μ K_Z`.
    pub stiffness: DMatrix<T>,
    /// Upper-triangular `φ_M` with `φ_Mᵀ φ_M = M⋆⁻¹`.
    pub inv_mass_factor: DMatrix<T>,
    /// Upper-triangular `φ_P` with `φ_Pᵀ φ_P = 𝒫`.
    pub stiffness_factor: DMatrix<T>,
    /// The `2n × 2n` saddle-point matrix `N`.
    pub saddle: DMatrix<T>,
    /// Eigenpairs of `N`.
    pub spectrum: Vec<EigenPair<T>>,
}

/// Outcome of the real-spectrum tuning rule
/// `4 λmax(𝒫) λmax(M⋆) ≤ λmin(ℛ)²`.
#[derive(Debug, Clone)]
pub struct TuningReport<T: Real> {
    /// `4 λmax(𝒫) λmax(M⋆)`.
    pub lhs: T,
    /// `λmin(ℛ)²`.
    pub rhs: T,
    pub satisfied: bool,
    /// Minimal uniform scaling `α ≥ 1` such that `ℛ → α ℛ` satisfies the
    /// rule; 1 when already satisfied.
    pub rescale: T,
    /// Setpoint at which `M⋆` was evaluated.
    pub q_star: DVector<T>,
}

fn setpoint_matrices<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
) -> Result<(DMatrix<T>, DMatrix<T>, DMatrix<T>)> {
    if gains.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            what: "gains",
            expected: sys.dim(),
            got: gains.dim(),
        });
    }
    let q_star = gains.q_star();
    let mass = sys.mass_matrix(q_star);
    let damping = sys.damping_matrix(q_star, &DVector::zeros(sys.dim()));
    let dissipation = damping + gains.k_p();
    let stiffness = gains.position_stiffness();
    Ok((mass, dissipation, stiffness))
}

/// Linearization `A` of the ideal closed loop at `x⋆ = (q⋆, 0)`, such that
/// `d/dt (x − x⋆) = A (x − x⋆)`.
pub fn linearize<T: Real>(sys: &MechanicalSystem<T>, gains: &PbcGains<T>) -> Result<DMatrix<T>> {
    let (mass, dissipation, stiffness) = setpoint_matrices(sys, gains)?;
    let n = sys.dim();
    let inv_mass = nalgebra::Cholesky::new(mass)
        .ok_or(Error::NotPositiveDefinite {
            what: "mass at setpoint",
        })?
        .inverse();
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).copy_from(&inv_mass);
    a.view_mut((n, 0), (n, n)).copy_from(&(-&stiffness));
    a.view_mut((n, n), (n, n))
        .copy_from(&(-(&dissipation * &inv_mass)));
    Ok(a)
}

/// Builds the saddle-point form and its spectrum.
///
/// The factor contract is exact up to round-off: `φ_Mᵀ φ_M` reconstructs
/// `M⋆⁻¹` and `φ_Pᵀ φ_P` reconstructs `𝒫` to better than `1e-10` relative,
/// and `eig(N)` equals `eig(−A)` as multisets.
pub fn saddle_decompose<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
) -> Result<SaddleDecomposition<T>> {
    let (mass, dissipation, stiffness) = setpoint_matrices(sys, gains)?;
    saddle_from_matrices(mass, dissipation, stiffness)
}

/// Saddle-point form from an explicit symmetric positive definite triple
/// `(M⋆, ℛ, 𝒫)`.
pub fn saddle_from_matrices<T: Real>(
    mass: DMatrix<T>,
    dissipation: DMatrix<T>,
    stiffness: DMatrix<T>,
) -> Result<SaddleDecomposition<T>> {
    let n = mass.nrows();
    if dissipation.nrows() != n || stiffness.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "saddle matrices",
            expected: n,
            got: dissipation.nrows().min(stiffness.nrows()),
        });
    }
    let inv_mass = nalgebra::Cholesky::new(mass.clone())
        .ok_or(Error::NotPositiveDefinite {
            what: "mass at setpoint",
        })?
        .inverse();
    let phi_m = linalg::upper_gram_factor(&inv_mass, "inverse mass at setpoint")?;
    let phi_p = linalg::upper_gram_factor(&stiffness, "shaped stiffness")?;

    let mut saddle = DMatrix::zeros(2 * n, 2 * n);
    saddle
        .view_mut((0, 0), (n, n))
        .copy_from(&(&phi_m * &dissipation * phi_m.transpose()));
    saddle
        .view_mut((0, n), (n, n))
        .copy_from(&(&phi_m * phi_p.transpose()));
    saddle
        .view_mut((n, 0), (n, n))
        .copy_from(&(-(&phi_p * phi_m.transpose())));

    let spectrum = linalg::eigenpairs(&saddle)?;
    Ok(SaddleDecomposition {
        mass,
        dissipation,
        stiffness,
        inv_mass_factor: phi_m,
        stiffness_factor: phi_p,
        saddle,
        spectrum,
    })
}

impl<T: Real> SaddleDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.mass.nrows()
    }

    pub fn eigenvalues(&self) -> Vec<Complex<T>> {
        self.spectrum.iter().map(|p| p.value).collect()
    }

    pub fn spectral_radius(&self) -> T {
        linalg::spectral_radius(&self.eigenvalues())
    }

    /// Largest `|Im λ|` over the spectrum.
    pub fn max_imaginary(&self) -> T {
        self.spectrum
            .iter()
            .map(|p| p.value.im.abs())
            .fold(T::zero(), T::max)
    }

    /// Smallest `Re λ` over the spectrum.
    pub fn min_real(&self) -> T {
        self.spectrum
            .iter()
            .map(|p| p.value.re)
            .fold(T::max_value().unwrap(), T::min)
    }

    /// Spectrum considered real when `max |Im λ| ≤ 1e-9 · ρ(N)`.
    pub fn spectrum_is_real(&self) -> bool {
        self.max_imaginary() <= c::<T>(1e-9) * self.spectral_radius()
    }
}

/// Residual `|λ² − a λ + b|` of the eigenvalue quadratic at an eigenpair of
/// `N`, with `a` and `b` the Rayleigh quotients of `φ_M ℛ φ_Mᵀ` and
/// `φ_M 𝒫 φ_Mᵀ` at the eigenvector's first block `w₁`.
///
/// For every eigenpair of `N` the residual is at most `1e-8 (1 + |λ|²)`.
pub fn eigen_quadratic_residual<T: Real>(
    dec: &SaddleDecomposition<T>,
    value: Complex<T>,
    w1: &DVector<Complex<T>>,
) -> Result<T> {
    let n = dec.dim();
    if w1.len() != n {
        return Err(Error::DimensionMismatch {
            what: "eigenvector first block",
            expected: n,
            got: w1.len(),
        });
    }
    let norm2 = w1.norm_squared();
    if norm2 <= c::<T>(1e-24) {
        return Err(Error::DegenerateEigenvector);
    }
    let damping_form = &dec.inv_mass_factor * &dec.dissipation * dec.inv_mass_factor.transpose();
    let stiffness_form = &dec.inv_mass_factor * &dec.stiffness * dec.inv_mass_factor.transpose();
    // Hermitian quadratic forms of real symmetric matrices are real.
    let a = w1
        .dotc(&(damping_form.map(|x| Complex::new(x, T::zero())) * w1))
        .re
        / norm2;
    let b = w1
        .dotc(&(stiffness_form.map(|x| Complex::new(x, T::zero())) * w1))
        .re
        / norm2;
    let residual = value * value - value * Complex::new(a, T::zero()) + Complex::new(b, T::zero());
    Ok(residual.modulus())
}

/// Evaluates the real-spectrum tuning rule at the gains' setpoint.
pub fn tuning_check<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
) -> Result<TuningReport<T>> {
    let (mass, dissipation, stiffness) = setpoint_matrices(sys, gains)?;
    let four = c::<T>(4.0);
    let (_, max_p) = linalg::symmetric_extremes(&stiffness)?;
    let (_, max_m) = linalg::symmetric_extremes(&mass)?;
    let (min_r, _) = linalg::symmetric_extremes(&dissipation)?;
    if min_r <= T::zero() {
        return Err(Error::NotPositiveDefinite {
            what: "dissipation",
        });
    }
    let lhs = four * max_p * max_m;
    let rhs = min_r * min_r;
    let satisfied = lhs <= rhs;
    let rescale = if satisfied {
        T::one()
    } else {
        lhs.sqrt() / min_r
    };
    Ok(TuningReport {
        lhs,
        rhs,
        satisfied,
        rescale,
        q_star: gains.q_star().clone(),
    })
}

/// Per-channel transient quality extracted from a recorded trajectory.
#[derive(Debug, Clone)]
pub struct TransientMetrics<T: Real> {
    /// Peak excursion past the setpoint, as a fraction of the initial error
    /// (0 when the approach never crosses the setpoint).
    pub overshoot: Vec<T>,
    /// First time after which the error stays within 2% of the initial
    /// error magnitude; `None` when that never happens inside the horizon.
    pub settling_time: Vec<Option<T>>,
    /// Number of sign changes of the error signal.
    pub oscillations: Vec<usize>,
}

/// Computes overshoot, settling time, and oscillation count per channel.
pub fn transient_metrics<T: Real>(
    traj: &Trajectory<T>,
    q_star: &DVector<T>,
) -> Result<TransientMetrics<T>> {
    if traj.states.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let n = q_star.len();
    if traj.states[0].dim() != n {
        return Err(Error::DimensionMismatch {
            what: "setpoint",
            expected: traj.states[0].dim(),
            got: n,
        });
    }

    let mut overshoot = vec![T::zero(); n];
    let mut settling_time = vec![None; n];
    let mut oscillations = vec![0usize; n];

    for i in 0..n {
        let e0 = traj.states[0].q()[i] - q_star[i];
        let scale = e0.abs();
        if scale.is_zero() {
            settling_time[i] = Some(traj.times[0]);
            continue;
        }
        let toward = -e0.signum();
        let band = c::<T>(0.02) * scale;

        let mut peak_past = T::zero();
        let mut last_sign = e0.signum();
        let mut settle_candidate: Option<T> = None;
        for (k, state) in traj.states.iter().enumerate() {
            let e = state.q()[i] - q_star[i];
            // Excursion past the setpoint, measured along the approach direction.
            peak_past = T::max(peak_past, toward * e);
            if !e.is_zero() {
                let s = e.signum();
                if s != last_sign {
                    oscillations[i] += 1;
                    last_sign = s;
                }
            }
            if e.abs() <= band {
                if settle_candidate.is_none() {
                    settle_candidate = Some(traj.times[k]);
                }
            } else {
                settle_candidate = None;
            }
        }
        overshoot[i] = T::max(T::zero(), peak_past) / scale;
        settling_time[i] = settle_candidate;
    }

    Ok(TransientMetrics {
        overshoot,
        settling_time,
        oscillations,
    })
}
