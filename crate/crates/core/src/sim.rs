//! Fixed-step integration of the open and closed loops, trajectory recording,
//! and steady-state metrics.
//!
//! Two wirings are simulated:
//!
//! - **ideal**: the structure-preserved target loop
//!   `ẋ = [0, I; −I, −(D+K_P)] ∇H(x)` with `H` the controller's energy
//!   function — the dead-zone (and any actuator offset) is assumed exactly
//!   cancelled;
//! - **physical**: the commanded value is routed through the dead-zone model,
//!   `ṗ = −∇_q H − D ∇_p H + G · dz(v)`. The actuator offset is applied once,
//!   inside the dead-zone output; the plant's own constant offset is ignored
//!   under this wiring so the asymmetry is never counted twice.
//!
//! Integration is classical fourth-order Runge–Kutta with a fixed step;
//! identical configurations produce bit-identical trajectories.

use std::io::Write;

use nalgebra::DVector;

use crate::actuator::DeadZone;
use crate::control::{self, PbcGains};
use crate::plant::{GeneralizedState, MechanicalSystem};
use crate::{c, is_finite, Error, Real, Result};

/// How the controller command reaches the plant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wiring {
    /// Integrate the exactly-cancelled closed loop.
    Ideal,
    /// Route the command through the dead-zone model.
    Physical,
}

impl std::fmt::Display for Wiring {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Wiring::Ideal => "ideal",
            Wiring::Physical => "physical",
        })
    }
}

impl std::str::FromStr for Wiring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(Wiring::Ideal),
            "physical" => Ok(Wiring::Physical),
            _ => Err(Error::InvalidParameter {
                what: "wiring",
                why: "expected `ideal` or `physical`",
            }),
        }
    }
}

/// Which control law drives the loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    None,
    Pi,
    Pidz,
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ControllerKind::None => "none",
            ControllerKind::Pi => "pi",
            ControllerKind::Pidz => "pidz",
        })
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ControllerKind::None),
            "pi" => Ok(ControllerKind::Pi),
            "pidz" => Ok(ControllerKind::Pidz),
            _ => Err(Error::InvalidParameter {
                what: "controller",
                why: "expected `pi`, `pidz`, or `none`",
            }),
        }
    }
}

/// Integration setup.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig<T: Real> {
    pub dt: T,
    pub horizon: T,
    pub initial_state: GeneralizedState<T>,
    pub wiring: Wiring,
    pub controller: ControllerKind,
    /// Record every `record_stride`-th step (1 records everything).
    pub record_stride: usize,
}

impl<T: Real> SimConfig<T> {
    /// Defaults matching the experiment suite: `dt = 1e-3`, 10 s horizon,
    /// rest start, recording at 100 Hz.
    pub fn new(n: usize, wiring: Wiring, controller: ControllerKind) -> Self {
        Self {
            dt: c(1e-3),
            horizon: c(10.0),
            initial_state: GeneralizedState::zeros(n),
            wiring,
            controller,
            record_stride: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !is_finite(self.dt) {
            return Err(Error::InvalidParameter {
                what: "dt",
                why: "must be positive and finite",
            });
        }
        if self.horizon < self.dt || !is_finite(self.horizon) {
            return Err(Error::InvalidParameter {
                what: "horizon",
                why: "must be at least one step",
            });
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter {
                what: "record_stride",
                why: "must be at least 1",
            });
        }
        Ok(())
    }
}

/// Provenance of a recorded trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryMeta<T: Real> {
    pub label: String,
    pub wiring: Wiring,
    pub controller: ControllerKind,
    pub gains: Option<PbcGains<T>>,
}

impl<T: Real> TrajectoryMeta<T> {
    pub fn synthetic(label: &str) -> Self {
        Self {
            label: label.to_string(),
            wiring: Wiring::Ideal,
            controller: ControllerKind::None,
            gains: None,
        }
    }
}

/// Uniformly sampled trajectory: states, commanded values, delivered torques,
/// and the controller energy, all at times `k · dt · record_stride`.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub times: Vec<T>,
    pub states: Vec<GeneralizedState<T>>,
    /// Commanded values `v` (zero under `ControllerKind::None`).
    pub commands: Vec<DVector<T>>,
    /// Delivered torques: equal to `v` under ideal wiring, `dz(v)` under
    /// physical wiring.
    pub torques: Vec<DVector<T>>,
    /// Controller energy: `H_d` for `pidz`, the PI energy for `pi`, the plant
    /// Hamiltonian for `none`.
    pub energies: Vec<T>,
    pub metadata: TrajectoryMeta<T>,
}

impl<T: Real> Trajectory<T> {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.dim())
    }

    /// Writes the trajectory as CSV with header
    /// `t,q1..qn,p1..pn,v1..vn,tau1..taun,Hd`, one row per recorded step,
    /// 17 significant digits, no locale formatting.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> std::io::Result<()> {
        let n = self.dim();
        let mut header = String::from("t");
        for prefix in ["q", "p", "v", "tau"] {
            for i in 1..=n {
                header.push_str(&format!(",{prefix}{i}"));
            }
        }
        header.push_str(",Hd");
        writeln!(out, "{header}")?;

        let fmt = |x: T| format!("{:.16e}", x.to_f64().unwrap_or(f64::NAN));
        for k in 0..self.len() {
            let mut row = fmt(self.times[k]);
            for block in [
                self.states[k].q(),
                self.states[k].p(),
                &self.commands[k],
                &self.torques[k],
            ] {
                for &x in block.iter() {
                    row.push(',');
                    row.push_str(&fmt(x));
                }
            }
            row.push(',');
            row.push_str(&fmt(self.energies[k]));
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

/// Controller command at a state.
pub fn command<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: Option<&PbcGains<T>>,
    controller: ControllerKind,
    x: &GeneralizedState<T>,
) -> Result<DVector<T>> {
    match controller {
        ControllerKind::None => Ok(DVector::zeros(sys.dim())),
        ControllerKind::Pi => {
            let gains = gains.ok_or(Error::MissingGains("pi"))?;
            control::pi_control(sys, gains, x)
        }
        ControllerKind::Pidz => {
            let gains = gains.ok_or(Error::MissingGains("pidz"))?;
            control::pidz_control(sys, gains, x)
        }
    }
}

/// The energy function recorded along trajectories and monitored by the
/// stability checks.
pub fn lyapunov_energy<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: Option<&PbcGains<T>>,
    controller: ControllerKind,
    x: &GeneralizedState<T>,
) -> Result<T> {
    match controller {
        ControllerKind::None => sys.hamiltonian(x),
        ControllerKind::Pi => {
            control::pi_hamiltonian(sys, gains.ok_or(Error::MissingGains("pi"))?, x)
        }
        ControllerKind::Pidz => {
            control::desired_hamiltonian(sys, gains.ok_or(Error::MissingGains("pidz"))?, x)
        }
    }
}

/// Closed-loop vector field `(q̇, ṗ)` under the requested wiring.
pub fn closed_loop_field<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: Option<&PbcGains<T>>,
    dz: Option<&DeadZone<T>>,
    wiring: Wiring,
    controller: ControllerKind,
    x: &GeneralizedState<T>,
) -> Result<(DVector<T>, DVector<T>)> {
    match wiring {
        Wiring::Ideal => match controller {
            ControllerKind::None => sys.open_loop_field(x, &DVector::zeros(sys.dim())),
            ControllerKind::Pi | ControllerKind::Pidz => {
                let gains = gains.ok_or(Error::MissingGains("closed loop"))?;
                let (dq, dp) = if controller == ControllerKind::Pi {
                    control::pi_hamiltonian_gradient(sys, gains, x)?
                } else {
                    control::desired_hamiltonian_gradient(sys, gains, x)?
                };
                let damping = sys.damping_matrix(x.q(), x.p());
                let pdot = -dq - (&damping + gains.k_p()) * &dp;
                Ok((dp, pdot))
            }
        },
        Wiring::Physical => {
            let dz = dz.ok_or(Error::MissingDeadZone)?;
            if dz.dim() != sys.dim() {
                return Err(Error::DimensionMismatch {
                    what: "dead-zone",
                    expected: sys.dim(),
                    got: dz.dim(),
                });
            }
            let v = command(sys, gains, controller, x)?;
            let tau = dz.apply(&v)?;
            let (dq_h, dp_h) = sys.hamiltonian_gradient(x)?;
            let damping = sys.damping_matrix(x.q(), x.p());
            // The actuator offset is inside `tau`; the plant offset is
            // deliberately not added here.
            let pdot = -dq_h - &damping * &dp_h + sys.apply_input(&tau);
            Ok((dp_h, pdot))
        }
    }
}

/// Integrates the configured loop with classical fourth-order Runge–Kutta.
///
/// Aborts with a diagnostic when the state norm exceeds `1e9` or turns
/// non-finite. The same configuration always yields a bit-identical
/// trajectory.
pub fn integrate<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: Option<&PbcGains<T>>,
    dz: Option<&DeadZone<T>>,
    config: &SimConfig<T>,
) -> Result<Trajectory<T>> {
    config.validate()?;
    if config.initial_state.dim() != sys.dim() {
        return Err(Error::DimensionMismatch {
            what: "initial state",
            expected: sys.dim(),
            got: config.initial_state.dim(),
        });
    }
    if let Some(g) = gains {
        if g.dim() != sys.dim() {
            return Err(Error::DimensionMismatch {
                what: "gains",
                expected: sys.dim(),
                got: g.dim(),
            });
        }
    }
    if config.wiring == Wiring::Physical && dz.is_none() {
        return Err(Error::MissingDeadZone);
    }

    let n = sys.dim();
    let dt = config.dt;
    let steps = (config.horizon / dt).to_f64().unwrap().round() as usize;
    let steps = steps.max(1);

    let field = |x: &DVector<T>, t: f64| -> Result<DVector<T>> {
        let state = GeneralizedState::from_stacked(x).map_err(|e| match e {
            Error::NonFinite(_) => Error::NonFiniteState { t },
            other => other,
        })?;
        let (qd, pd) = closed_loop_field(sys, gains, dz, config.wiring, config.controller, &state)?;
        let mut out = DVector::zeros(2 * n);
        out.rows_mut(0, n).copy_from(&qd);
        out.rows_mut(n, n).copy_from(&pd);
        Ok(out)
    };

    let mut x = config.initial_state.to_stacked();
    let explosion = c::<T>(1e9);

    let mut times = Vec::new();
    let mut states = Vec::new();
    let mut commands = Vec::new();
    let mut torques = Vec::new();
    let mut energies = Vec::new();

    let mut record = |k: usize, x: &DVector<T>| -> Result<()> {
        let state = GeneralizedState::from_stacked(x)?;
        let v = command(sys, gains, config.controller, &state)?;
        let tau = match config.wiring {
            Wiring::Ideal => v.clone(),
            Wiring::Physical => dz.expect("checked above").apply(&v)?,
        };
        times.push(dt * c::<T>(k as f64));
        energies.push(lyapunov_energy(sys, gains, config.controller, &state)?);
        states.push(state);
        commands.push(v);
        torques.push(tau);
        Ok(())
    };

    let half = c::<T>(0.5);
    let sixth = c::<T>(1.0 / 6.0);
    let two = c::<T>(2.0);

    for k in 0..=steps {
        if k % config.record_stride == 0 {
            record(k, &x)?;
        }
        if k == steps {
            break;
        }
        let t = (k as f64) * dt.to_f64().unwrap();
        let k1 = field(&x, t)?;
        let k2 = field(&(&x + &k1 * (dt * half)), t)?;
        let k3 = field(&(&x + &k2 * (dt * half)), t)?;
        let k4 = field(&(&x + &k3 * dt), t)?;
        x += (k1 + k2 * two + k3 * two + k4) * (dt * sixth);

        if x.iter().any(|&v| !is_finite(v)) {
            return Err(Error::NonFiniteState {
                t: t + dt.to_f64().unwrap(),
            });
        }
        if x.amax() > explosion {
            return Err(Error::StateExplosion {
                t: t + dt.to_f64().unwrap(),
            });
        }
    }

    Ok(Trajectory {
        times,
        states,
        commands,
        torques,
        energies,
        metadata: TrajectoryMeta {
            label: String::new(),
            wiring: config.wiring,
            controller: config.controller,
            gains: gains.cloned(),
        },
    })
}

/// Per-link steady-state error of a finished run.
#[derive(Debug, Clone)]
pub struct SteadyStateError<T: Real> {
    /// One entry per link: percent of `|q⋆_i|`, or absolute radians where
    /// `q⋆_i = 0` (then `absolute` is set).
    pub per_link: Vec<LinkError<T>>,
    /// Quasi-steady state reached: finite-difference `‖q̇‖∞ < 1e-4` over the
    /// trailing 10% of the recording.
    pub settled: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct LinkError<T: Real> {
    pub value: T,
    /// `true` when `value` is absolute radians instead of percent.
    pub absolute: bool,
}

/// Steady-state error per link, in percent of the setpoint magnitude.
///
/// A "not settled" run is flagged but still reported.
pub fn steady_state_error<T: Real>(
    traj: &Trajectory<T>,
    q_star: &DVector<T>,
) -> Result<SteadyStateError<T>> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    let n = traj.dim();
    if q_star.len() != n {
        return Err(Error::DimensionMismatch {
            what: "setpoint",
            expected: n,
            got: q_star.len(),
        });
    }

    let len = traj.len();
    let tail_start = (len * 9) / 10;
    let tail_start = tail_start.min(len.saturating_sub(2));
    let mut settled = len >= 2;
    for k in tail_start..len.saturating_sub(1) {
        let dt = traj.times[k + 1] - traj.times[k];
        for i in 0..n {
            let rate = (traj.states[k + 1].q()[i] - traj.states[k].q()[i]) / dt;
            if rate.abs() >= c::<T>(1e-4) {
                settled = false;
            }
        }
    }

    let final_q = traj.states[len - 1].q();
    let hundred = c::<T>(100.0);
    let per_link = (0..n)
        .map(|i| {
            let err = (final_q[i] - q_star[i]).abs();
            if q_star[i].is_zero() {
                LinkError {
                    value: err,
                    absolute: true,
                }
            } else {
                LinkError {
                    value: hundred * err / q_star[i].abs(),
                    absolute: false,
                }
            }
        })
        .collect();

    Ok(SteadyStateError { per_link, settled })
}

/// Per-channel interval of position errors at which the loop can rest.
#[derive(Debug, Clone)]
pub struct ResidualBand<T: Real> {
    /// Lower bound of the resting `q̃_i` interval.
    pub lower: DVector<T>,
    /// Upper bound of the resting `q̃_i` interval.
    pub upper: DVector<T>,
}

impl<T: Real> ResidualBand<T> {
    pub fn contains(&self, error: &DVector<T>, slack: T) -> bool {
        (0..error.len())
            .all(|i| error[i] >= self.lower[i] - slack && error[i] <= self.upper[i] + slack)
    }

    pub fn width(&self, i: usize) -> T {
        self.upper[i] - self.lower[i]
    }
}

/// Brute-force equilibrium oracle for physical wiring: the set of `q̃` where
/// the delivered torque is exactly zero, channel by channel, found by
/// bisection on the monotone command map. Requires diagonal `K_I`, diagonal
/// `G` (always true here), and a potential-free plant; every settled
/// simulation must rest inside the returned interval.
pub fn residual_band_oracle<T: Real>(
    sys: &MechanicalSystem<T>,
    gains: &PbcGains<T>,
    dz: &DeadZone<T>,
    controller: ControllerKind,
) -> Result<ResidualBand<T>> {
    let n = sys.dim();
    if gains.dim() != n || dz.dim() != n {
        return Err(Error::DimensionMismatch {
            what: "oracle inputs",
            expected: n,
            got: gains.dim().min(dz.dim()),
        });
    }
    if controller == ControllerKind::None {
        return Err(Error::InvalidParameter {
            what: "controller",
            why: "the oracle applies to the pi and pidz laws",
        });
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && !gains.k_i()[(i, j)].is_zero() {
                return Err(Error::InvalidParameter {
                    what: "K_I",
                    why: "the residual-band oracle requires diagonal K_I",
                });
            }
        }
    }
    let grad_at_star = sys.potential_gradient(gains.q_star());
    if grad_at_star.abs().max() > c::<T>(1e-12) {
        return Err(Error::InvalidParameter {
            what: "potential",
            why: "the residual-band oracle assumes a zero potential gradient",
        });
    }

    let with_dz_term = controller == ControllerKind::Pidz;
    let mut lower = DVector::zeros(n);
    let mut upper = DVector::zeros(n);

    for i in 0..n {
        let g = sys.input_gains()[i];
        let ki = gains.k_i()[(i, i)];
        let kz = if with_dz_term {
            gains.k_z()[i]
        } else {
            T::zero()
        };
        let mu = gains.mu()[i];
        let bc = if with_dz_term {
            gains.beta_comp()[i]
        } else {
            T::zero()
        };
        // Command map v(e) = -(ki e + kz tanh(mu e) + bc)/g, strictly
        // monotone in e; orientation depends on the sign of g.
        let v_of = |e: T| -(ki * e + kz * (mu * e).tanh() + bc) / g;
        let invert = |target: T| -> T {
            // Bracket by expansion, then bisect; v is strictly decreasing
            // in e for g > 0 and increasing for g < 0.
            let decreasing = g > T::zero();
            let mut span = (target.abs() * g.abs() + kz + bc.abs() + T::one()) / ki;
            let (mut lo, mut hi) = (-span, span);
            for _ in 0..200 {
                let ok = if decreasing {
                    v_of(lo) >= target && v_of(hi) <= target
                } else {
                    v_of(lo) <= target && v_of(hi) >= target
                };
                if ok {
                    break;
                }
                span *= c::<T>(2.0);
                lo = -span;
                hi = span;
            }
            for _ in 0..200 {
                let mid = (lo + hi) * c::<T>(0.5);
                let val = v_of(mid);
                let go_right = if decreasing {
                    val > target
                } else {
                    val < target
                };
                if go_right {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (lo + hi) * c::<T>(0.5)
        };

        let beta = dz.offset()[i];
        if beta.is_zero() {
            // Zero torque across the whole band.
            let a = invert(dz.right_break()[i]);
            let b = invert(dz.left_break()[i]);
            lower[i] = T::min(a, b);
            upper[i] = T::max(a, b);
        } else {
            // Unique zero-torque command on one outer branch.
            let target = if -beta > T::zero() {
                -beta + dz.right_break()[i]
            } else {
                -beta + dz.left_break()[i]
            };
            let e = invert(target);
            lower[i] = e;
            upper[i] = e;
        }
    }

    Ok(ResidualBand { lower, upper })
}
