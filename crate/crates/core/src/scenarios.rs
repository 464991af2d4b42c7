//! Built-in systems and ready-to-run experiment definitions.
//!
//! The reference plant is a 2-DoF planar manipulator with
//!
//! ```text
//! M(q₂) = [a₁+a₂+2b·cos q₂   a₂+b·cos q₂]      a₁ = 0.1547
//!         [a₂+b·cos q₂       a₂         ]      a₂ = 0.0111,  b = 0.0168
//! ```
//!
//! zero potential, `G = diag{1, 0.6}`, and `D = diag{1.5964, 0.6971}`. The
//! experiment suite pairs it with an asymmetric dead-zone of half widths
//! `(0.13, 0.35)` and output offset `(−0.016, −0.2)` — the geometry that the
//! case-III gains compensate exactly.

use nalgebra::{DMatrix, DVector};

use crate::actuator::DeadZone;
use crate::control::PbcGains;
use crate::plant::MechanicalSystem;
use crate::sim::{self, ControllerKind, SimConfig, Trajectory, Wiring};
use crate::{c, Error, Real, Result};

/// Serializable description of a system, resolvable to a
/// [`MechanicalSystem`].
#[derive(Debug, Clone, PartialEq)]
pub enum SystemSpec<T: Real> {
    /// The built-in 2-DoF planar manipulator, with an optional plant-level
    /// constant force offset.
    Planar2Dof { offset: DVector<T> },
    /// Constant-coefficient system with an optional quadratic potential.
    ConstantMass {
        mass: DMatrix<T>,
        damping: DMatrix<T>,
        stiffness: Option<DMatrix<T>>,
        input_gains: DVector<T>,
        offset: DVector<T>,
    },
}

impl<T: Real> SystemSpec<T> {
    pub fn dim(&self) -> usize {
        match self {
            SystemSpec::Planar2Dof { .. } => 2,
            SystemSpec::ConstantMass { mass, .. } => mass.nrows(),
        }
    }

    pub fn build(&self) -> Result<MechanicalSystem<T>> {
        match self {
            SystemSpec::Planar2Dof { offset } => planar_manipulator_2dof(Some(offset.clone())),
            SystemSpec::ConstantMass {
                mass,
                damping,
                stiffness,
                input_gains,
                offset,
            } => MechanicalSystem::constant(
                mass.clone(),
                damping.clone(),
                stiffness.clone(),
                input_gains.clone(),
                offset.clone(),
            ),
        }
    }
}

fn planar_mass<T: Real>(q: &DVector<T>) -> DMatrix<T> {
    let (a1, a2, b) = (c::<T>(0.1547), c::<T>(0.0111), c::<T>(0.0168));
    let cos = q[1].cos();
    let two = c::<T>(2.0);
    let off = a2 + b * cos;
    DMatrix::from_row_slice(2, 2, &[a1 + a2 + two * b * cos, off, off, a2])
}

fn planar_builder<T: Real>(offset: Option<DVector<T>>) -> Result<MechanicalSystem<T>> {
    let beta = offset.unwrap_or_else(|| DVector::zeros(2));
    MechanicalSystem::<T>::builder(2)
        .mass(planar_mass)
        .damping(|_, _| DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.5964), c(0.6971)])))
        .input_gains(DVector::from_vec(vec![T::one(), c(0.6)]))
        .offset(beta)
        .build()
}

/// The 2-DoF planar manipulator with its analytic mass gradient (only the
/// second coordinate enters `M`).
pub fn planar_manipulator_2dof<T: Real>(offset: Option<DVector<T>>) -> Result<MechanicalSystem<T>> {
    let beta = offset.unwrap_or_else(|| DVector::zeros(2));
    MechanicalSystem::<T>::builder(2)
        .mass(planar_mass)
        .mass_gradient(|q| {
            let b = c::<T>(0.0168);
            let sin = q[1].sin();
            let two = c::<T>(2.0);
            vec![
                DMatrix::zeros(2, 2),
                DMatrix::from_row_slice(2, 2, &[-two * b * sin, -b * sin, -b * sin, T::zero()]),
            ]
        })
        .damping(|_, _| DMatrix::from_diagonal(&DVector::from_vec(vec![c(1.5964), c(0.6971)])))
        .input_gains(DVector::from_vec(vec![T::one(), c(0.6)]))
        .offset(beta)
        .build()
}

/// Same manipulator without the analytic mass gradient; kinetic position
/// gradients then go through the finite-difference fallback. Useful for
/// cross-checking the two paths.
pub fn planar_manipulator_2dof_without_mass_gradient<T: Real>(
    offset: Option<DVector<T>>,
) -> Result<MechanicalSystem<T>> {
    planar_builder(offset)
}

/// Dead-zone geometry used by the experiment suite: half widths
/// `(0.13, 0.35)`, output offset `(−0.016, −0.2)`.
pub fn reference_dead_zone<T: Real>() -> DeadZone<T> {
    DeadZone::new(
        DVector::from_vec(vec![c(0.13), c(0.35)]),
        DVector::from_vec(vec![c(-0.13), c(-0.35)]),
        DVector::from_vec(vec![c(-0.016), c(-0.2)]),
    )
    .expect("reference geometry is valid")
}

/// Baseline compensated gains: `K_P = diag{1.5, 1}`, `K_I = diag{5, 3}`,
/// `K_Z = diag{0.13, 0.35}`, `μ = 10`, `β = 0`. The same structure drives the
/// plain PI law, which ignores `K_Z`, `μ`, and `β`.
pub fn case_i_gains<T: Real>(q_star: DVector<T>) -> PbcGains<T> {
    PbcGains::diagonal(
        DVector::from_vec(vec![c(1.5), T::one()]),
        DVector::from_vec(vec![c(5.0), c(3.0)]),
        DVector::from_vec(vec![c(0.13), c(0.35)]),
        DVector::from_vec(vec![c(10.0), c(10.0)]),
        DVector::zeros(2),
        q_star,
    )
    .expect("baseline gains are valid")
}

/// Case II: the band length overestimated, `K_Z = diag{0.7, 1}`.
pub fn case_ii_gains<T: Real>(q_star: DVector<T>) -> PbcGains<T> {
    case_i_gains(q_star)
        .with_k_z(DVector::from_vec(vec![c(0.7), T::one()]))
        .expect("case II gains are valid")
}

/// Case III: the asymmetry matched, `β = col(−0.016, −0.2)`.
pub fn case_iii_gains<T: Real>(q_star: DVector<T>) -> PbcGains<T> {
    case_i_gains(q_star)
        .with_beta_comp(DVector::from_vec(vec![c(-0.016), c(-0.2)]))
        .expect("case III gains are valid")
}

/// The five setpoints of the controller comparison, keyed `a`–`e`.
pub fn setpoint_cases<T: Real>() -> Vec<(char, DVector<T>)> {
    vec![
        ('a', DVector::from_vec(vec![c(0.6), c(0.8)])),
        ('b', DVector::from_vec(vec![c(-0.6), c(-0.8)])),
        ('c', DVector::from_vec(vec![c(-0.4), c(0.7)])),
        ('d', DVector::from_vec(vec![c(0.4), c(-0.7)])),
        ('e', DVector::from_vec(vec![c(0.5), c(-0.5)])),
    ]
}

/// A runnable experiment: system description, optional dead-zone, gains, and
/// integration setup under a unique label.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T: Real> {
    pub label: String,
    pub system: SystemSpec<T>,
    pub dead_zone: Option<DeadZone<T>>,
    pub gains: PbcGains<T>,
    pub sim: SimConfig<T>,
}

impl<T: Real> Scenario<T> {
    /// Dimension consistency across system, dead-zone, gains, and initial
    /// state.
    pub fn validate(&self) -> Result<()> {
        let n = self.system.dim();
        if self.gains.dim() != n {
            return Err(Error::DimensionMismatch {
                what: "scenario gains",
                expected: n,
                got: self.gains.dim(),
            });
        }
        if let Some(dz) = &self.dead_zone {
            if dz.dim() != n {
                return Err(Error::DimensionMismatch {
                    what: "scenario dead-zone",
                    expected: n,
                    got: dz.dim(),
                });
            }
        }
        if self.sim.initial_state.dim() != n {
            return Err(Error::DimensionMismatch {
                what: "scenario initial state",
                expected: n,
                got: self.sim.initial_state.dim(),
            });
        }
        self.sim.validate()
    }

    /// Builds the system and integrates the configured loop.
    pub fn run(&self) -> Result<Trajectory<T>> {
        self.validate()?;
        let sys = self.system.build()?;
        let mut traj = sim::integrate(&sys, Some(&self.gains), self.dead_zone.as_ref(), &self.sim)?;
        traj.metadata.label = self.label.clone();
        Ok(traj)
    }
}

fn physical_scenario<T: Real>(
    label: String,
    gains: PbcGains<T>,
    controller: ControllerKind,
) -> Scenario<T> {
    Scenario {
        label,
        system: SystemSpec::Planar2Dof {
            offset: DVector::zeros(2),
        },
        dead_zone: Some(reference_dead_zone()),
        gains,
        sim: SimConfig::new(2, Wiring::Physical, controller),
    }
}

/// The full experiment matrix:
///
/// - five setpoints `a`–`e`, each simulated under the plain PI law and the
///   compensated law with the baseline gains (`setpoint_<case>_<controller>`);
/// - the three gain variations at `q⋆ = (0.6, 0.8)` (`case_i`..`case_iii`).
///
/// All scenarios use physical wiring against the reference dead-zone and
/// start from rest at the origin.
pub fn experiment_suite<T: Real>() -> Vec<Scenario<T>> {
    let mut suite = Vec::new();
    for (case, q_star) in setpoint_cases::<T>() {
        for controller in [ControllerKind::Pi, ControllerKind::Pidz] {
            suite.push(physical_scenario(
                format!("setpoint_{case}_{controller}"),
                case_i_gains(q_star.clone()),
                controller,
            ));
        }
    }
    let q_star = DVector::from_vec(vec![c(0.6), c(0.8)]);
    suite.push(physical_scenario(
        "case_i".into(),
        case_i_gains(q_star.clone()),
        ControllerKind::Pidz,
    ));
    suite.push(physical_scenario(
        "case_ii".into(),
        case_ii_gains(q_star.clone()),
        ControllerKind::Pidz,
    ));
    suite.push(physical_scenario(
        "case_iii".into(),
        case_iii_gains(q_star),
        ControllerKind::Pidz,
    ));
    suite
}

/// Looks up a suite scenario by label.
pub fn builtin_scenario<T: Real>(label: &str) -> Option<Scenario<T>> {
    experiment_suite().into_iter().find(|s| s.label == label)
}
