//! Setpoint controllers built by energy shaping and damping injection.
//!
//! Two laws are provided:
//!
//! - `pi_control`: gravity compensation plus proportional position feedback
//!   and damping injection, `u = −G⁻¹(K_P q̇ + K_I (q − q⋆) − ∇U(q))`.
//! - `pidz_control`: the same law extended with a bounded smooth dead-zone
//!   compensation term, `u_dz = −G⁻¹(K_Z tanh(μ (q − q⋆)) + β)`.
//!
//! The compensated closed loop admits the energy function
//! `H_d = ½ pᵀM⁻¹p + ½ q̃ᵀK_I q̃ + Σ_i k_zi ln(cosh(μ_i q̃_i))/μ_i`, which has a
//! strict global minimum at the setpoint and decreases along trajectories; it
//! is what the simulator records and what the stability checks monitor.

use nalgebra::{DMatrix, DVector};

use crate::plant::{GeneralizedState, MechanicalSystem};
use crate::{c, is_finite, Error, Real, Result};

/// Controller gains and setpoint.
///
/// `K_P` (damping injection) must be symmetric positive semi-definite, `K_I`
/// (position stiffness) symmetric positive definite; `K_Z` and `μ` are stored
/// as the diagonals of positive diagonal matrices. `β` is the controller's
/// estimate of the actuator asymmetry — deliberately distinct from the true
/// actuator offset so that mismatched characterizations are first-class.
#[derive(Debug, Clone, PartialEq)]
pub struct PbcGains<T: Real> {
    k_p: DMatrix<T>,
    k_i: DMatrix<T>,
    k_z: DVector<T>,
    mu: DVector<T>,
    beta_comp: DVector<T>,
    q_star: DVector<T>,
}

fn check_symmetric<T: Real>(m: &DMatrix<T>, what: &'static str) -> Result<()> {
    let scale = T::one() + m.abs().max();
    if (m - m.transpose()).abs().max() > c::<T>(1e-10) * scale {
        return Err(Error::NotSymmetric { what });
    }
    Ok(())
}

impl<T: Real> PbcGains<T> {
    pub fn new(
        k_p: DMatrix<T>,
        k_i: DMatrix<T>,
        k_z: DVector<T>,
        mu: DVector<T>,
        beta_comp: DVector<T>,
        q_star: DVector<T>,
    ) -> Result<Self> {
        let n = q_star.len();
        for (len, what) in [
            (k_p.nrows(), "K_P rows"),
            (k_p.ncols(), "K_P cols"),
            (k_i.nrows(), "K_I rows"),
            (k_i.ncols(), "K_I cols"),
            (k_z.len(), "K_Z"),
            (mu.len(), "mu"),
            (beta_comp.len(), "beta"),
        ] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    got: len,
                });
            }
        }
        check_symmetric(&k_p, "K_P")?;
        check_symmetric(&k_i, "K_I")?;
        if nalgebra::Cholesky::new(k_i.clone()).is_none() {
            return Err(Error::NotPositiveDefinite { what: "K_I" });
        }
        let kp_eigs = k_p.clone().symmetric_eigen().eigenvalues;
        let floor = -c::<T>(1e-10) * (T::one() + k_p.abs().max());
        if kp_eigs.iter().any(|&l| l < floor) {
            return Err(Error::NotPositiveDefinite { what: "K_P" });
        }
        if k_z.iter().any(|&k| !(k > T::zero())) {
            return Err(Error::InvalidParameter {
                what: "K_Z",
                why: "diagonal entries must be strictly positive",
            });
        }
        if mu.iter().any(|&m| !(m > T::zero())) {
            return Err(Error::InvalidParameter {
                what: "mu",
                why: "diagonal entries must be strictly positive",
            });
        }
        if !q_star.iter().chain(beta_comp.iter()).all(|&x| is_finite(x)) {
            return Err(Error::NonFinite("gains"));
        }
        Ok(Self {
            k_p,
            k_i,
            k_z,
            mu,
            beta_comp,
            q_star,
        })
    }

    /// Diagonal gains from per-channel values.
    pub fn diagonal(
        k_p: DVector<T>,
        k_i: DVector<T>,
        k_z: DVector<T>,
        mu: DVector<T>,
        beta_comp: DVector<T>,
        q_star: DVector<T>,
    ) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&k_p),
            DMatrix::from_diagonal(&k_i),
            k_z,
            mu,
            beta_comp,
            q_star,
        )
    }

    pub fn dim(&self) -> usize {
        self.q_star.len()
    }

    pub fn k_p(&self) -> &DMatrix<T> {
        &self.k_p
    }

    pub fn k_i(&self) -> &DMatrix<T> {
        &self.k_i
    }

    /// Diagonal of `K_Z`.
    pub fn k_z(&self) -> &DVector<T> {
        &self.k_z
    }

    /// Diagonal of `μ`.
    pub fn mu(&self) -> &DVector<T> {
        &self.mu
    }

    pub fn beta_comp(&self) -> &DVector<T> {
        &self.beta_comp
    }

    pub fn q_star(&self) -> &DVector<T> {
        &self.q_star
    }

    /// Position error `q̃ = q − q⋆`.
    pub fn position_error(&self, q: &DVector<T>) -> DVector<T> {
        q - &self.q_star
    }

    /// Stiffness of the shaped energy at the setpoint, `K_I + μ K_Z`.
    pub fn position_stiffness(&self) -> DMatrix<T> {
        &self.k_i + DMatrix::from_diagonal(&self.mu.component_mul(&self.k_z))
    }

    pub fn with_q_star(mut self, q_star: DVector<T>) -> Result<Self> {
        if q_star.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "q_star",
                expected: self.dim(),
                got: q_star.len(),
            });
        }
        self.q_star = q_star;
        Ok(self)
    }

    pub fn with_mu(self, mu: DVector<T>) -> Result<Self> {
        Self::new(
            self.k_p,
            self.k_i,
            self.k_z,
            mu,
            self.beta_comp,
            self.q_star,
        )
    }

    pub fn with_k_p(self, k_p: DMatrix<T>) -> Result<Self> {
        Self::new(
            k_p,
            self.k_i,
            self.k_z,
            self.mu,
            self.beta_comp,
            self.q_star,
        )
    }

    pub fn with_k_z(self, k_z: DVector<T>) -> Result<Self> {
        Self::new(
            self.k_p,
            self.k_i,
            k_z,
            self.mu,
            self.beta_comp,
            self.q_star,
        )
    }

    pub fn with_beta_comp(self, beta_comp: DVector<T>) -> Result<Self> {
        Self::new(
            self.k_p,
            self.k_i,
            self.k_z,
            self.mu,
            beta_comp,
            self.q_star,
        )
    }
}

fn check_dims<T: Real>(sys: &MechanicalSystem<T>, gains: &PbcGains<T>) -> Result<()> {
    if gains.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            what: "gains",
            expected: sys.dim(),
            got: gains.dim(),
        });
    }
    Ok(())
}

/// `u_pi = −G⁻¹ (K_P M(q)⁻¹ p + K_I (q − q⋆) − ∇U(q))`.
pub fn pi_control<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
    x: &GeneralizedState<T>,
) -> Result<DVector<T>> {
    check_dims(sys, gains)?;
    let qdot = sys.mass_eval(x.q())?.chol.solve(x.p());
    let force = &gains.k_p * qdot + &gains.k_i * gains.position_error(x.q())
        - sys.potential_gradient(x.q());
    Ok(-sys.unapply_input(&force))
}

/// Bounded compensation term `u_dz = −G⁻¹ (K_Z tanh(μ (q − q⋆)) + β)`.
///
/// Per channel, `|(G u_dz)_i| ≤ k_zi + |β_i|` for every `q`.
pub fn dz_compensation<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
    q: &DVector<T>,
) -> Result<DVector<T>> {
    check_dims(sys, gains)?;
    if q.len() != sys.dim() {
        return Err(Error::DimensionMismatch {
            what: "position",
            expected: sys.dim(),
            got: q.len(),
        });
    }
    let err = gains.position_error(q);
    let mut force = gains.beta_comp.clone();
    for i in 0..sys.dim() {
        force[i] += gains.k_z[i] * (gains.mu[i] * err[i]).tanh();
    }
    Ok(-sys.unapply_input(&force))
}

/// Compensated law `u_pidz = u_dz + u_pi`.
pub fn pidz_control<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
    x: &GeneralizedState<T>,
) -> Result<DVector<T>> {
    Ok(pi_control(sys, gains, x)? + dz_compensation(sys, gains, x.q())?)
}

/// Numerically stable `ln(cosh(z))`; switches to
/// `|z| + ln((1 + e^{−2|z|})/2)` for `|z| > 20` to avoid `cosh` overflow.
pub(crate) fn ln_cosh<T: Real>(z: T) -> T {
    let a = z.abs();
    if a > c::<T>(20.0) {
        let two = T::one() + T::one();
        a + ((T::one() + (-two * a).exp()) * c::<T>(0.5)).ln()
    } else {
        a.cosh().ln()
    }
}

fn shaped_potential<T: Real>(gains: &PbcGains<T>, err: &DVector<T>, with_dz: bool) -> T {
    let mut total = err.dot(&(&gains.k_i * err)) * c::<T>(0.5);
    if with_dz {
        for i in 0..err.len() {
            total += gains.k_z[i] * ln_cosh(gains.mu[i] * err[i]) / gains.mu[i];
        }
    }
    total
}

fn shaped_energy<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
    x: &GeneralizedState<T>,
    with_dz: bool,
) -> Result<T> {
    check_dims(sys, gains)?;
    let eval = sys.mass_eval(x.q())?;
    let kinetic = x.p().dot(&eval.chol.solve(x.p())) * c::<T>(0.5);
    Ok(kinetic + shaped_potential(gains, &gains.position_error(x.q()), with_dz))
}

fn shaped_energy_gradient<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
    x: &GeneralizedState<T>,
    with_dz: bool,
) -> Result<(DVector<T>, DVector<T>)> {
    check_dims(sys, gains)?;
    let eval = sys.mass_eval(x.q())?;
    let dp = eval.chol.solve(x.p());
    let err = gains.position_error(x.q());
    let mut dq = sys.kinetic_position_gradient(x.q(), x.p())? + &gains.k_i * &err;
    if with_dz {
        for i in 0..err.len() {
            dq[i] += gains.k_z[i] * (gains.mu[i] * err[i]).tanh();
        }
    }
    Ok((dq, dp))
}

/// Closed-loop energy of the compensated law:
/// `H_d = ½ pᵀM⁻¹p + ½ q̃ᵀK_I q̃ + Σ_i k_zi ln(cosh(μ_i q̃_i))/μ_i`.
///
/// Nonnegative, zero exactly at `(q⋆, 0)`, radially unbounded.
pub fn desired_hamiltonian<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
    x: &GeneralizedState<T>,
) -> Result<T> {
    shaped_energy(sys, gains, x, true)
}

/// `(∇_q H_d, ∇_p H_d)` with
/// `∇_q H_d = ½ ∇_q(pᵀM⁻¹p) + K_I q̃ + K_Z tanh(μ q̃)` and `∇_p H_d = M⁻¹ p`.
pub fn desired_hamiltonian_gradient<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
    x: &GeneralizedState<T>,
) -> Result<(DVector<T>, DVector<T>)> {
    shaped_energy_gradient(sys, gains, x, true)
}

/// Closed-loop energy of the plain PI law (no dead-zone term):
/// `½ pᵀM⁻¹p + ½ q̃ᵀK_I q̃`.
pub fn pi_hamiltonian<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
    x: &GeneralizedState<T>,
) -> Result<T> {
    shaped_energy(sys, gains, x, false)
}

/// Gradient of [`pi_hamiltonian`].
pub fn pi_hamiltonian_gradient<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
    x: &GeneralizedState<T>,
) -> Result<(DVector<T>, DVector<T>)> {
    shaped_energy_gradient(sys, gains, x, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios;
    use nalgebra::{dmatrix, dvector};

    fn planar() -> MechanicalSystem<f64> {
        scenarios::planar_manipulator_2dof(None).unwrap()
    }

    fn table1_pidz(q_star: DVector<f64>) -> PbcGains<f64> {
        PbcGains::diagonal(
            dvector![1.5, 1.0],
            dvector![5.0, 3.0],
            dvector![0.13, 0.35],
            dvector![10.0, 10.0],
            dvector![0.0, 0.0],
            q_star,
        )
        .unwrap()
    }

    #[test]
    fn gains_validation() {
        // K_I must be positive definite.
        assert!(PbcGains::new(
            DMatrix::identity(2, 2),
            dmatrix![1.0, 2.0; 2.0, 1.0],
            dvector![1.0, 1.0],
            dvector![1.0, 1.0],
            dvector![0.0, 0.0],
            dvector![0.0, 0.0],
        )
        .is_err());
        // K_P may be semi-definite but not indefinite.
        assert!(PbcGains::new(
            dmatrix![0.0, 0.0; 0.0, 0.0],
            DMatrix::identity(2, 2),
            dvector![1.0, 1.0],
            dvector![1.0, 1.0],
            dvector![0.0, 0.0],
            dvector![0.0, 0.0],
        )
        .is_ok());
        assert!(PbcGains::new(
            dmatrix![-1.0, 0.0; 0.0, 1.0],
            DMatrix::identity(2, 2),
            dvector![1.0, 1.0],
            dvector![1.0, 1.0],
            dvector![0.0, 0.0],
            dvector![0.0, 0.0],
        )
        .is_err());
        // Nonsymmetric K_I rejected.
        assert!(PbcGains::new(
            DMatrix::identity(2, 2),
            dmatrix![1.0, 0.5; 0.0, 1.0],
            dvector![1.0, 1.0],
            dvector![1.0, 1.0],
            dvector![0.0, 0.0],
            dvector![0.0, 0.0],
        )
        .is_err());
        // Positive diagonals.
        assert!(PbcGains::diagonal(
            dvector![1.0],
            dvector![1.0],
            dvector![0.0],
            dvector![1.0],
            dvector![0.0],
            dvector![0.0],
        )
        .is_err());
    }

    #[test]
    fn pi_control_vanishes_at_setpoint() {
        let sys = planar();
        let gains = table1_pidz(dvector![0.6, 0.8]);
        let x = GeneralizedState::new(dvector![0.6, 0.8], dvector![0.0, 0.0]).unwrap();
        let u = pi_control(&sys, &gains, &x).unwrap();
        assert!(u.abs().max() < 1e-15);
    }

    #[test]
    fn pi_control_scalar_arithmetic() {
        // n = 1, G = 2, K_P = 0, K_I = 4, U = 0, qtilde = 0.5 -> u = -1.
        let sys = MechanicalSystem::<f64>::builder(1)
            .mass(|_| dmatrix![1.0])
            .input_gains(dvector![2.0])
            .build()
            .unwrap();
        let gains = PbcGains::diagonal(
            dvector![0.0],
            dvector![4.0],
            dvector![1.0],
            dvector![1.0],
            dvector![0.0],
            dvector![0.0],
        )
        .unwrap();
        let x = GeneralizedState::new(dvector![0.5], dvector![0.0]).unwrap();
        assert_eq!(pi_control(&sys, &gains, &x).unwrap(), dvector![-1.0]);
    }

    #[test]
    fn pi_control_table_gains() {
        // K_I qtilde = (0.5, 0.3); u = -G^-1 (0.5, 0.3) = (-0.5, -0.5).
        let sys = planar();
        let gains = table1_pidz(dvector![0.0, 0.0]);
        let x = GeneralizedState::new(dvector![0.1, 0.1], dvector![0.0, 0.0]).unwrap();
        let u = pi_control(&sys, &gains, &x).unwrap();
        assert!((u - dvector![-0.5, -0.5]).abs().max() < 1e-14);
    }

    #[test]
    fn dz_compensation_values() {
        let sys = planar();
        let gains = table1_pidz(dvector![0.2, -0.3]);
        // At the setpoint with zero beta the term vanishes.
        let u = dz_compensation(&sys, &gains, &dvector![0.2, -0.3]).unwrap();
        assert!(u.abs().max() < 1e-15);

        // Asymmetry estimate alone: -G^-1 col(-0.016, -0.2).
        let gains_iii = gains.with_beta_comp(dvector![-0.016, -0.2]).unwrap();
        let u = dz_compensation(&sys, &gains_iii, &dvector![0.2, -0.3]).unwrap();
        assert!((u[0] - 0.016).abs() < 1e-15);
        assert!((u[1] - 0.2 / 0.6).abs() < 1e-15);

        // Scalar tanh evaluation: k_z = 0.13, mu = 10, qtilde = 0.3.
        let sys1 = MechanicalSystem::<f64>::builder(1)
            .mass(|_| dmatrix![1.0])
            .build()
            .unwrap();
        let g1 = PbcGains::diagonal(
            dvector![0.0],
            dvector![1.0],
            dvector![0.13],
            dvector![10.0],
            dvector![0.0],
            dvector![0.0],
        )
        .unwrap();
        let u = dz_compensation(&sys1, &g1, &dvector![0.3]).unwrap();
        assert!((u[0] + 0.13 * 3.0_f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn dz_compensation_is_bounded() {
        let sys = planar();
        let gains = table1_pidz(dvector![0.0, 0.0])
            .with_beta_comp(dvector![-0.016, -0.2])
            .unwrap();
        let bound: Vec<f64> = (0..2)
            .map(|i| gains.k_z()[i] + gains.beta_comp()[i].abs())
            .collect();
        for s in -40..=40 {
            let q = dvector![s as f64 * 0.5, -(s as f64) * 0.35];
            let u = dz_compensation(&sys, &gains, &q).unwrap();
            let force = sys.apply_input(&u);
            for i in 0..2 {
                assert!(force[i].abs() <= bound[i] + 1e-12);
            }
        }
    }

    #[test]
    fn pidz_is_sum_of_parts() {
        let sys = planar();
        let gains = table1_pidz(dvector![0.6, 0.8])
            .with_beta_comp(dvector![-0.016, -0.2])
            .unwrap();
        let states = [
            (dvector![0.0, 0.0], dvector![0.0, 0.0]),
            (dvector![0.9, -0.4], dvector![0.2, -0.1]),
            (dvector![-2.0, 1.4], dvector![-0.6, 0.3]),
        ];
        for (q, p) in states {
            let x = GeneralizedState::new(q, p).unwrap();
            let whole = pidz_control(&sys, &gains, &x).unwrap();
            let parts = pi_control(&sys, &gains, &x).unwrap()
                + dz_compensation(&sys, &gains, x.q()).unwrap();
            assert!((whole - parts).abs().max() < 1e-15);
        }
    }

    #[test]
    fn pidz_vanishes_at_setpoint_without_offset() {
        let sys = planar();
        let gains = table1_pidz(dvector![0.6, 0.8]);
        let x = GeneralizedState::new(dvector![0.6, 0.8], dvector![0.0, 0.0]).unwrap();
        assert!(pidz_control(&sys, &gains, &x).unwrap().abs().max() < 1e-15);
    }

    #[test]
    fn pidz_case_i_against_scalar_composition() {
        // Per-channel recomputation of -G^-1 (K_I qt + K_Z tanh(10 qt)).
        let sys = planar();
        let gains = table1_pidz(dvector![0.5, 0.7]);
        let q = dvector![0.6, 0.8];
        let x = GeneralizedState::new(q.clone(), dvector![0.0, 0.0]).unwrap();
        let u = pidz_control(&sys, &gains, &x).unwrap();
        let g = [1.0, 0.6];
        let ki = [5.0, 3.0];
        let kz = [0.13, 0.35];
        for i in 0..2 {
            let qt: f64 = q[i] - gains.q_star()[i];
            let expected = -(ki[i] * qt + kz[i] * (10.0 * qt).tanh()) / g[i];
            assert!((u[i] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn desired_hamiltonian_zero_at_setpoint() {
        let sys = planar();
        let gains = table1_pidz(dvector![0.6, 0.8]);
        let x = GeneralizedState::new(dvector![0.6, 0.8], dvector![0.0, 0.0]).unwrap();
        assert_eq!(desired_hamiltonian(&sys, &gains, &x).unwrap(), 0.0);
        // Strictly positive anywhere else.
        let y = GeneralizedState::new(dvector![0.6, 0.8001], dvector![0.0, 0.0]).unwrap();
        assert!(desired_hamiltonian(&sys, &gains, &y).unwrap() > 0.0);
        let z = GeneralizedState::new(dvector![0.6, 0.8], dvector![1e-4, 0.0]).unwrap();
        assert!(desired_hamiltonian(&sys, &gains, &z).unwrap() > 0.0);
    }

    #[test]
    fn desired_hamiltonian_ln_cosh_term() {
        // Isolate the smooth term: k_z = 1, mu = 1, qtilde = 1 contributes
        // ln(cosh 1); subtract the K_I part.
        let sys = MechanicalSystem::<f64>::builder(1)
            .mass(|_| dmatrix![1.0])
            .build()
            .unwrap();
        let gains = PbcGains::diagonal(
            dvector![0.0],
            dvector![2.0],
            dvector![1.0],
            dvector![1.0],
            dvector![0.0],
            dvector![0.0],
        )
        .unwrap();
        let x = GeneralizedState::new(dvector![1.0], dvector![0.0]).unwrap();
        let hd = desired_hamiltonian(&sys, &gains, &x).unwrap();
        let term = hd - 0.5 * 2.0;
        assert!((term - 1.0_f64.cosh().ln()).abs() < 1e-15);
        assert!((term - 0.43378).abs() < 1e-5);
    }

    #[test]
    fn ln_cosh_stable_branch() {
        assert_eq!(ln_cosh(0.0), 0.0);
        // Continuity across the branch point.
        let below = ln_cosh(19.999999_f64);
        let above = ln_cosh(20.000001_f64);
        assert!((above - below - 2e-6).abs() < 1e-9);
        // Far field: ln cosh z = |z| - ln 2 without overflow.
        let z = 1000.0_f64;
        assert!((ln_cosh(z) - (z - std::f64::consts::LN_2)).abs() < 1e-12);
        assert!(ln_cosh(-z).is_finite());
    }

    #[test]
    fn desired_gradient_matches_finite_differences() {
        let sys = planar();
        let gains = table1_pidz(dvector![0.6, 0.8])
            .with_beta_comp(dvector![-0.016, -0.2])
            .unwrap();
        let q = dvector![0.3, 1.1];
        let p = dvector![0.4, -0.2];
        let x = GeneralizedState::new(q.clone(), p.clone()).unwrap();
        let (dq, dp) = desired_hamiltonian_gradient(&sys, &gains, &x).unwrap();
        for j in 0..2 {
            let h = 1e-6_f64;
            let mut hi = q.clone();
            hi[j] += h;
            let mut lo = q.clone();
            lo[j] -= h;
            let f_hi =
                desired_hamiltonian(&sys, &gains, &GeneralizedState::new(hi, p.clone()).unwrap())
                    .unwrap();
            let f_lo =
                desired_hamiltonian(&sys, &gains, &GeneralizedState::new(lo, p.clone()).unwrap())
                    .unwrap();
            let fd = (f_hi - f_lo) / (2.0 * h);
            assert!((fd - dq[j]).abs() < 1e-6 * (1.0 + dq[j].abs()));
        }
        for j in 0..2 {
            let h = 1e-6_f64;
            let mut hi = p.clone();
            hi[j] += h;
            let mut lo = p.clone();
            lo[j] -= h;
            let f_hi =
                desired_hamiltonian(&sys, &gains, &GeneralizedState::new(q.clone(), hi).unwrap())
                    .unwrap();
            let f_lo =
                desired_hamiltonian(&sys, &gains, &GeneralizedState::new(q.clone(), lo).unwrap())
                    .unwrap();
            let fd = (f_hi - f_lo) / (2.0 * h);
            assert!((fd - dp[j]).abs() < 1e-6 * (1.0 + dp[j].abs()));
        }
    }

    #[test]
    fn shaped_hessian_position_block_at_setpoint() {
        // Finite-difference Hessian of H_d at the setpoint equals K_I + mu K_Z
        // on the position block.
        let sys = planar();
        let gains = table1_pidz(dvector![0.6, 0.8]);
        let expected = gains.position_stiffness();
        let h = 1e-5_f64;
        for j in 0..2 {
            for k in 0..2 {
                let mut qpp = dvector![0.6, 0.8];
                qpp[j] += h;
                qpp[k] += h;
                let mut qpm = dvector![0.6, 0.8];
                qpm[j] += h;
                qpm[k] -= h;
                let mut qmp = dvector![0.6, 0.8];
                qmp[j] -= h;
                qmp[k] += h;
                let mut qmm = dvector![0.6, 0.8];
                qmm[j] -= h;
                qmm[k] -= h;
                let f = |q: DVector<f64>| {
                    desired_hamiltonian(
                        &sys,
                        &gains,
                        &GeneralizedState::new(q, dvector![0.0, 0.0]).unwrap(),
                    )
                    .unwrap()
                };
                let hess = (f(qpp) - f(qpm) - f(qmp) + f(qmm)) / (4.0 * h * h);
                assert!(
                    (hess - expected[(j, k)]).abs() < 1e-4 * (1.0 + expected[(j, k)].abs()),
                    "Hessian({j},{k}) = {hess}, expected {}",
                    expected[(j, k)]
                );
            }
        }
    }

    #[test]
    fn shaped_energy_grows_along_rays() {
        let sys = planar();
        let gains = table1_pidz(dvector![0.0, 0.0]);
        let dirs = [
            (dvector![1.0, 0.0], dvector![0.0, 0.0]),
            (dvector![0.0, 1.0], dvector![0.0, 0.0]),
            (dvector![0.0, 0.0], dvector![1.0, 1.0]),
            (dvector![-1.0, 1.0], dvector![0.5, -0.5]),
        ];
        for (dq, dp) in dirs {
            let mut last = -1.0;
            let mut r = 1e-2;
            while r <= 1e3 {
                let x = GeneralizedState::new(&dq * r, &dp * r).unwrap();
                let e = desired_hamiltonian(&sys, &gains, &x).unwrap();
                assert!(e > last, "energy not increasing along ray at r = {r}");
                last = e;
                r *= 10.0;
            }
        }
    }

    #[test]
    fn pi_hamiltonian_drops_smooth_term() {
        let sys = planar();
        let gains = table1_pidz(dvector![0.1, -0.2]);
        let x = GeneralizedState::new(dvector![0.4, 0.3], dvector![0.05, -0.02]).unwrap();
        let hd = desired_hamiltonian(&sys, &gains, &x).unwrap();
        let hpi = pi_hamiltonian(&sys, &gains, &x).unwrap();
        let qt = gains.position_error(x.q());
        let smooth: f64 = (0..2)
            .map(|i| gains.k_z()[i] * ln_cosh(gains.mu()[i] * qt[i]) / gains.mu()[i])
            .sum();
        assert!((hd - hpi - smooth).abs() < 1e-14);
    }
}
