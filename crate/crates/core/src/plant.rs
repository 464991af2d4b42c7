//! Open-loop model of a fully-actuated mechanical system in port-Hamiltonian
//! form:
//!
//! ```text
//! q̇ = ∇_p H,    ṗ = −∇_q H − D(q,p) ∇_p H + G u + β,    y = Gᵀ M(q)⁻¹ p
//! ```
//!
//! with total energy `H(q,p) = ½ pᵀ M(q)⁻¹ p + U(q)`. The mass matrix `M`,
//! potential `U`, and damping `D` are user-supplied maps; `G` is a diagonal
//! invertible input matrix and `β` a constant generalized force.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::{c, is_finite, Error, Real, Result};

/// Map `q → M(q)`.
pub type MassFn<T> = Arc<dyn Fn(&DVector<T>) -> DMatrix<T> + Send + Sync>;
/// Map `q → [∂M/∂q_1, …, ∂M/∂q_n]`.
pub type MassGradFn<T> = Arc<dyn Fn(&DVector<T>) -> Vec<DMatrix<T>> + Send + Sync>;
/// Map `q → U(q)`.
pub type PotentialFn<T> = Arc<dyn Fn(&DVector<T>) -> T + Send + Sync>;
/// Map `q → ∇U(q)`.
pub type PotentialGradFn<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;
/// Map `(q, p) → D(q, p)`.
pub type DampingFn<T> = Arc<dyn Fn(&DVector<T>, &DVector<T>) -> DMatrix<T> + Send + Sync>;

/// Generalized positions and momenta `(q, p)`, both of dimension `n ≥ 1`.
///
/// Entries are checked finite at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedState<T: Real> {
    q: DVector<T>,
    p: DVector<T>,
}

impl<T: Real> GeneralizedState<T> {
    pub fn new(q: DVector<T>, p: DVector<T>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidParameter {
                what: "state dimension",
                why: "must be at least 1",
            });
        }
        if q.len() != p.len() {
            return Err(Error::DimensionMismatch {
                what: "generalized state",
                expected: q.len(),
                got: p.len(),
            });
        }
        if !q.iter().chain(p.iter()).all(|&x| is_finite(x)) {
            return Err(Error::NonFinite("generalized state"));
        }
        Ok(Self { q, p })
    }

    /// Rest state `(0, 0)` of dimension `n`.
    pub fn zeros(n: usize) -> Self {
        Self {
            q: DVector::zeros(n),
            p: DVector::zeros(n),
        }
    }

    pub fn q(&self) -> &DVector<T> {
        &self.q
    }

    pub fn p(&self) -> &DVector<T> {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.q.len()
    }

    /// Stacks `(q, p)` into a single `2n` vector.
    pub fn to_stacked(&self) -> DVector<T> {
        let n = self.dim();
        let mut x = DVector::zeros(2 * n);
        x.rows_mut(0, n).copy_from(&self.q);
        x.rows_mut(n, n).copy_from(&self.p);
        x
    }

    /// Splits a stacked `2n` vector back into a state.
    pub fn from_stacked(x: &DVector<T>) -> Result<Self> {
        if !x.len().is_multiple_of(2) {
            return Err(Error::DimensionMismatch {
                what: "stacked state",
                expected: x.len() + 1,
                got: x.len(),
            });
        }
        let n = x.len() / 2;
        Self::new(x.rows(0, n).into_owned(), x.rows(n, n).into_owned())
    }
}

/// Port-Hamiltonian description of a fully-actuated mechanical system.
///
/// Immutable after construction and cheap to clone (the maps are shared), so
/// one description can back many concurrent simulation runs.
#[derive(Clone)]
pub struct MechanicalSystem<T: Real> {
    n: usize,
    mass: MassFn<T>,
    mass_grad: Option<MassGradFn<T>>,
    potential: PotentialFn<T>,
    potential_grad: PotentialGradFn<T>,
    damping: DampingFn<T>,
    input_gains: DVector<T>,
    offset: DVector<T>,
}

impl<T: Real> std::fmt::Debug for MechanicalSystem<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MechanicalSystem")
            .field("n", &self.n)
            .field("input_gains", &self.input_gains)
            .field("offset", &self.offset)
            .field("analytic_mass_grad", &self.mass_grad.is_some())
            .finish()
    }
}

/// Staged construction of a [`MechanicalSystem`]. Only the mass matrix is
/// mandatory; potential, damping, and offset default to zero, the input map
/// to the identity.
pub struct SystemBuilder<T: Real> {
    n: usize,
    mass: Option<MassFn<T>>,
    mass_grad: Option<MassGradFn<T>>,
    potential: Option<(PotentialFn<T>, PotentialGradFn<T>)>,
    damping: Option<DampingFn<T>>,
    input_gains: Option<DVector<T>>,
    offset: Option<DVector<T>>,
}

impl<T: Real> SystemBuilder<T> {
    pub fn mass(mut self, f: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static) -> Self {
        self.mass = Some(Arc::new(f));
        self
    }

    /// Analytic partial derivatives `∂M/∂q_j`, one matrix per coordinate.
    /// When absent, position gradients of the kinetic energy fall back to
    /// central finite differences on `M(q)⁻¹`.
    pub fn mass_gradient(
        mut self,
        f: impl Fn(&DVector<T>) -> Vec<DMatrix<T>> + Send + Sync + 'static,
    ) -> Self {
        self.mass_grad = Some(Arc::new(f));
        self
    }

    pub fn potential(
        mut self,
        u: impl Fn(&DVector<T>) -> T + Send + Sync + 'static,
        grad: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
    ) -> Self {
        self.potential = Some((Arc::new(u), Arc::new(grad)));
        self
    }

    pub fn damping(
        mut self,
        f: impl Fn(&DVector<T>, &DVector<T>) -> DMatrix<T> + Send + Sync + 'static,
    ) -> Self {
        self.damping = Some(Arc::new(f));
        self
    }

    /// Diagonal of the input matrix `G`; every entry must be nonzero.
    pub fn input_gains(mut self, g: DVector<T>) -> Self {
        self.input_gains = Some(g);
        self
    }

    /// Constant generalized force `β` acting on `ṗ`.
    pub fn offset(mut self, beta: DVector<T>) -> Self {
        self.offset = Some(beta);
        self
    }

    pub fn build(self) -> Result<MechanicalSystem<T>> {
        let n = self.n;
        let mass = self.mass.ok_or(Error::InvalidParameter {
            what: "mass",
            why: "a mass matrix map is required",
        })?;
        let (potential, potential_grad) = self.potential.unwrap_or_else(|| {
            (
                Arc::new(|_: &DVector<T>| T::zero()) as PotentialFn<T>,
                Arc::new(move |q: &DVector<T>| DVector::zeros(q.len())) as PotentialGradFn<T>,
            )
        });
        let damping = self.damping.unwrap_or_else(|| {
            Arc::new(move |q: &DVector<T>, _: &DVector<T>| DMatrix::zeros(q.len(), q.len()))
        });
        let input_gains = self
            .input_gains
            .unwrap_or_else(|| DVector::from_element(n, T::one()));
        let offset = self.offset.unwrap_or_else(|| DVector::zeros(n));

        if input_gains.len() != n {
            return Err(Error::DimensionMismatch {
                what: "input gains",
                expected: n,
                got: input_gains.len(),
            });
        }
        if offset.len() != n {
            return Err(Error::DimensionMismatch {
                what: "offset",
                expected: n,
                got: offset.len(),
            });
        }
        if input_gains.iter().any(|g| g.is_zero()) {
            return Err(Error::InvalidParameter {
                what: "input gains",
                why: "diagonal entries of G must be nonzero",
            });
        }

        Ok(MechanicalSystem {
            n,
            mass,
            mass_grad: self.mass_grad,
            potential,
            potential_grad,
            damping,
            input_gains,
            offset,
        })
    }
}

/// Cholesky factorization of the mass matrix at one configuration, shared by
/// the energy and field evaluations of a single step.
pub(crate) struct MassEval<T: Real> {
    pub chol: nalgebra::Cholesky<T, nalgebra::Dyn>,
}

impl<T: Real> MechanicalSystem<T> {
    pub fn builder(n: usize) -> SystemBuilder<T> {
        SystemBuilder {
            n,
            mass: None,
            mass_grad: None,
            potential: None,
            damping: None,
            input_gains: None,
            offset: None,
        }
    }

    /// Constant-coefficient system: fixed mass and damping matrices, optional
    /// quadratic potential `U(q) = ½ qᵀ K q`.
    ///
    /// Since the matrices come in as data (typically from a scenario file),
    /// symmetry and definiteness are verified here once rather than at every
    /// evaluation.
    pub fn constant(
        mass: DMatrix<T>,
        damping: DMatrix<T>,
        stiffness: Option<DMatrix<T>>,
        input_gains: DVector<T>,
        offset: DVector<T>,
    ) -> Result<Self> {
        let n = mass.nrows();
        if mass.ncols() != n || damping.nrows() != n || damping.ncols() != n {
            return Err(Error::DimensionMismatch {
                what: "constant system matrices",
                expected: n,
                got: damping.nrows(),
            });
        }
        let sym_tol = |m: &DMatrix<T>| c::<T>(1e-10) * (T::one() + m.abs().max());
        if (&mass - mass.transpose()).abs().max() > sym_tol(&mass) {
            return Err(Error::NotSymmetric {
                what: "mass matrix",
            });
        }
        if nalgebra::Cholesky::new(mass.clone()).is_none() {
            return Err(Error::NotPositiveDefinite {
                what: "mass matrix",
            });
        }
        if (&damping - damping.transpose()).abs().max() > sym_tol(&damping) {
            return Err(Error::NotSymmetric {
                what: "damping matrix",
            });
        }
        let d_floor = -c::<T>(1e-10) * (T::one() + damping.abs().max());
        if damping
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .any(|&l| l < d_floor)
        {
            return Err(Error::NotPositiveDefinite {
                what: "damping matrix",
            });
        }
        let mut builder = Self::builder(n)
            .mass(move |_| mass.clone())
            .mass_gradient(move |q| vec![DMatrix::zeros(q.len(), q.len()); q.len()])
            .damping(move |_, _| damping.clone())
            .input_gains(input_gains)
            .offset(offset);
        if let Some(k) = stiffness {
            if k.nrows() != n || k.ncols() != n {
                return Err(Error::DimensionMismatch {
                    what: "stiffness",
                    expected: n,
                    got: k.nrows(),
                });
            }
            if (&k - k.transpose()).abs().max() > sym_tol(&k) {
                return Err(Error::NotSymmetric { what: "stiffness" });
            }
            let k2 = k.clone();
            builder =
                builder.potential(move |q| (q.dot(&(&k * q))) * c::<T>(0.5), move |q| &k2 * q);
        }
        builder.build()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn mass_matrix(&self, q: &DVector<T>) -> DMatrix<T> {
        (self.mass)(q)
    }

    pub fn potential_energy(&self, q: &DVector<T>) -> T {
        (self.potential)(q)
    }

    pub fn potential_gradient(&self, q: &DVector<T>) -> DVector<T> {
        (self.potential_grad)(q)
    }

    pub fn damping_matrix(&self, q: &DVector<T>, p: &DVector<T>) -> DMatrix<T> {
        (self.damping)(q, p)
    }

    /// Diagonal of `G`.
    pub fn input_gains(&self) -> &DVector<T> {
        &self.input_gains
    }

    /// Constant force `β` of the plant equation.
    pub fn offset(&self) -> &DVector<T> {
        &self.offset
    }

    pub fn has_analytic_mass_gradient(&self) -> bool {
        self.mass_grad.is_some()
    }

    /// `G u` for a command `u`.
    pub fn apply_input(&self, u: &DVector<T>) -> DVector<T> {
        self.input_gains.component_mul(u)
    }

    /// `G⁻¹ w` for a generalized force `w`.
    pub fn unapply_input(&self, w: &DVector<T>) -> DVector<T> {
        w.component_div(&self.input_gains)
    }

    fn check_state(&self, x: &GeneralizedState<T>) -> Result<()> {
        if x.dim() != self.n {
            return Err(Error::DimensionMismatch {
                what: "state",
                expected: self.n,
                got: x.dim(),
            });
        }
        Ok(())
    }

    pub(crate) fn mass_eval(&self, q: &DVector<T>) -> Result<MassEval<T>> {
        let chol = nalgebra::Cholesky::new((self.mass)(q)).ok_or(Error::NotPositiveDefinite {
            what: "mass matrix",
        })?;
        Ok(MassEval { chol })
    }

    /// Total energy `H = ½ pᵀ M(q)⁻¹ p + U(q)`.
    pub fn hamiltonian(&self, x: &GeneralizedState<T>) -> Result<T> {
        self.check_state(x)?;
        let eval = self.mass_eval(x.q())?;
        let v = eval.chol.solve(x.p());
        Ok(x.p().dot(&v) * c::<T>(0.5) + (self.potential)(x.q()))
    }

    /// Position gradient of the kinetic energy `½ pᵀ M(q)⁻¹ p`.
    ///
    /// With the analytic mass gradient available this is
    /// `−½ vᵀ (∂M/∂q_j) v` for `v = M⁻¹ p`; otherwise central finite
    /// differences on `M(q)⁻¹` with step `h = 1e-6 · max(1, |q_j|)`.
    pub fn kinetic_position_gradient(&self, q: &DVector<T>, p: &DVector<T>) -> Result<DVector<T>> {
        let n = self.n;
        let mut grad = DVector::zeros(n);
        match &self.mass_grad {
            Some(dm) => {
                let eval = self.mass_eval(q)?;
                let v = eval.chol.solve(p);
                let partials = dm(q);
                if partials.len() != n {
                    return Err(Error::DimensionMismatch {
                        what: "mass gradient stack",
                        expected: n,
                        got: partials.len(),
                    });
                }
                for (j, dmj) in partials.iter().enumerate() {
                    grad[j] = -(v.dot(&(dmj * &v))) * c::<T>(0.5);
                }
            }
            None => {
                let half = c::<T>(0.5);
                for j in 0..n {
                    let h = c::<T>(1e-6) * T::max(T::one(), q[j].abs());
                    let mut q_hi = q.clone();
                    q_hi[j] += h;
                    let mut q_lo = q.clone();
                    q_lo[j] -= h;
                    let v_hi = self.mass_eval(&q_hi)?.chol.solve(p);
                    let v_lo = self.mass_eval(&q_lo)?.chol.solve(p);
                    let k_hi = p.dot(&v_hi) * half;
                    let k_lo = p.dot(&v_lo) * half;
                    grad[j] = (k_hi - k_lo) / (h + h);
                }
            }
        }
        Ok(grad)
    }

    /// `(∇_q H, ∇_p H)` with `∇_p H = M(q)⁻¹ p`.
    pub fn hamiltonian_gradient(
        &self,
        x: &GeneralizedState<T>,
    ) -> Result<(DVector<T>, DVector<T>)> {
        self.check_state(x)?;
        let eval = self.mass_eval(x.q())?;
        let dp = eval.chol.solve(x.p());
        let dq = self.kinetic_position_gradient(x.q(), x.p())? + (self.potential_grad)(x.q());
        Ok((dq, dp))
    }

    /// Open-loop vector field `(q̇, ṗ)` under command `u`:
    /// `q̇ = ∇_p H`, `ṗ = −∇_q H − D ∇_p H + G u + β`.
    pub fn open_loop_field(
        &self,
        x: &GeneralizedState<T>,
        u: &DVector<T>,
    ) -> Result<(DVector<T>, DVector<T>)> {
        self.check_state(x)?;
        if u.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "command",
                expected: self.n,
                got: u.len(),
            });
        }
        let (dq, dp) = self.hamiltonian_gradient(x)?;
        let damping = (self.damping)(x.q(), x.p());
        let pdot = -dq - &damping * &dp + self.apply_input(u) + &self.offset;
        Ok((dp, pdot))
    }

    /// Passive output `y = Gᵀ M(q)⁻¹ p`; zero exactly when `p = 0`.
    pub fn passive_output(&self, x: &GeneralizedState<T>) -> Result<DVector<T>> {
        self.check_state(x)?;
        let eval = self.mass_eval(x.q())?;
        let v = eval.chol.solve(x.p());
        Ok(self.input_gains.component_mul(&v))
    }

    /// Validation sweep: `M` symmetric positive definite and `D` symmetric
    /// positive semi-definite at every supplied state. Intended for model
    /// checking, not for the integration hot path.
    pub fn validate(&self, states: &[GeneralizedState<T>]) -> Result<()> {
        let tol = c::<T>(1e-10);
        for x in states {
            self.check_state(x)?;
            let m = (self.mass)(x.q());
            if (&m - m.transpose()).abs().max() > tol * (T::one() + m.abs().max()) {
                return Err(Error::NotSymmetric {
                    what: "mass matrix",
                });
            }
            let sym_eig = m.symmetric_eigen();
            if sym_eig.eigenvalues.iter().any(|&l| l <= T::zero()) {
                return Err(Error::NotPositiveDefinite {
                    what: "mass matrix",
                });
            }
            let d = (self.damping)(x.q(), x.p());
            if (&d - d.transpose()).abs().max() > tol * (T::one() + d.abs().max()) {
                return Err(Error::NotSymmetric {
                    what: "damping matrix",
                });
            }
            let floor = -c::<T>(1e-10) * (T::one() + d.abs().max());
            let d_eig = d.symmetric_eigen();
            if d_eig.eigenvalues.iter().any(|&l| l < floor) {
                return Err(Error::NotPositiveDefinite {
                    what: "damping matrix",
                });
            }
        }
        Ok(())
    }
}
