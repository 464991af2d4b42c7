//! Scenario files: a TOML schema that resolves to a [`Scenario`].
//!
//! ```toml
//! label = "case_i"
//!
//! [system]
//! builtin = "planar2dof"        # or inline: mass/damping/input_gains/...
//!
//! [dead_zone]                   # optional
//! r_b = [0.13, 0.35]
//! l_b = [-0.13, -0.35]
//! beta = [-0.016, -0.2]         # optional, zeros when omitted
//!
//! [gains]
//! K_P = [1.5, 1.0]              # diagonal, or row-major [[..], [..]]
//! K_I = [5.0, 3.0]
//! K_Z = [0.13, 0.35]
//! mu = 10.0                     # scalar or array; 10 when omitted
//! beta_comp = [0.0, 0.0]        # optional
//! q_star = [0.6, 0.8]
//!
//! [sim]                         # every field optional
//! dt = 0.001
//! horizon = 10.0
//! x0 = [0.0, 0.0, 0.0, 0.0]     # stacked (q, p)
//! wiring = "physical"           # default "ideal"
//! controller = "pidz"           # default "pidz"
//! record_stride = 10
//! ```
//!
//! Unknown keys are rejected; array lengths are checked against the system
//! dimension; diagnostics name the offending key.

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use dzpbc::scenarios::{Scenario, SystemSpec};
use dzpbc::{DeadZone64, GeneralizedState64, PbcGains64, Scenario64, SimConfig64};

/// Matrix written either as its diagonal or as full row-major rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    fn resolve(&self, n: usize, key: &str) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::Diagonal(d) => {
                if d.len() != n {
                    bail!("{key}: expected {n} diagonal entries, got {}", d.len());
                }
                Ok(DMatrix::from_diagonal(&DVector::from_vec(d.clone())))
            }
            MatrixSpec::Full(rows) => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    bail!("{key}: expected a {n}x{n} matrix");
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                Ok(DMatrix::from_row_slice(n, n, &flat))
            }
        }
    }

    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0));
        if diagonal {
            MatrixSpec::Diagonal((0..n).map(|i| m[(i, i)]).collect())
        } else {
            MatrixSpec::Full(
                (0..n)
                    .map(|i| (0..n).map(|j| m[(i, j)]).collect())
                    .collect(),
            )
        }
    }
}

/// Scalar broadcast over channels, or one value per channel.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerChannel {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl PerChannel {
    fn resolve(&self, n: usize, key: &str) -> Result<DVector<f64>> {
        match self {
            PerChannel::Scalar(x) => Ok(DVector::from_element(n, *x)),
            PerChannel::Vector(v) => {
                if v.len() != n {
                    bail!("{key}: expected {n} entries, got {}", v.len());
                }
                Ok(DVector::from_vec(v.clone()))
            }
        }
    }
}

fn vector(v: &[f64], n: usize, key: &str) -> Result<DVector<f64>> {
    if v.len() != n {
        bail!("{key}: expected {n} entries, got {}", v.len());
    }
    Ok(DVector::from_vec(v.to_vec()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub damping: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub input_gains: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeadZoneDoc {
    pub r_b: Vec<f64>,
    pub l_b: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsDoc {
    #[serde(rename = "K_P")]
    pub k_p: MatrixSpec,
    #[serde(rename = "K_I")]
    pub k_i: MatrixSpec,
    #[serde(rename = "K_Z")]
    pub k_z: PerChannel,
    /// Sharpness of the smooth inverse; defaults to 10 per channel.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<PerChannel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta_comp: Option<Vec<f64>>,
    pub q_star: Vec<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wiring: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controller: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub record_stride: Option<usize>,
}

/// On-disk scenario description.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDocument {
    pub label: String,
    pub system: SystemDoc,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dead_zone: Option<DeadZoneDoc>,
    pub gains: GainsDoc,
    #[serde(default, skip_serializing_if = "sim_doc_is_empty")]
    pub sim: SimDoc,
}

fn sim_doc_is_empty(s: &SimDoc) -> bool {
    s.dt.is_none()
        && s.horizon.is_none()
        && s.x0.is_none()
        && s.wiring.is_none()
        && s.controller.is_none()
        && s.record_stride.is_none()
}

impl ScenarioDocument {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| anyhow!("scenario parse error: {e}"))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).context("scenario serialization failed")
    }

    fn system_spec(&self) -> Result<SystemSpec<f64>> {
        let sys = &self.system;
        match (&sys.builtin, &sys.mass) {
            (Some(name), None) => {
                if name != "planar2dof" {
                    bail!("system.builtin: unknown builtin `{name}` (expected `planar2dof`)");
                }
                for (field, present) in [
                    ("system.damping", sys.damping.is_some()),
                    ("system.stiffness", sys.stiffness.is_some()),
                    ("system.input_gains", sys.input_gains.is_some()),
                ] {
                    if present {
                        bail!("{field}: not accepted together with a builtin system");
                    }
                }
                let offset = match &sys.offset {
                    Some(v) => vector(v, 2, "system.offset")?,
                    None => DVector::zeros(2),
                };
                Ok(SystemSpec::Planar2Dof { offset })
            }
            (None, Some(mass_rows)) => {
                let n = mass_rows.len();
                if n == 0 || mass_rows.iter().any(|r| r.len() != n) {
                    bail!("system.mass: expected a square, non-empty matrix");
                }
                let mass = MatrixSpec::Full(mass_rows.clone()).resolve(n, "system.mass")?;
                let damping = match &sys.damping {
                    Some(rows) => MatrixSpec::Full(rows.clone()).resolve(n, "system.damping")?,
                    None => DMatrix::zeros(n, n),
                };
                let stiffness = sys
                    .stiffness
                    .as_ref()
                    .map(|rows| MatrixSpec::Full(rows.clone()).resolve(n, "system.stiffness"))
                    .transpose()?;
                let input_gains = match &sys.input_gains {
                    Some(v) => vector(v, n, "system.input_gains")?,
                    None => DVector::from_element(n, 1.0),
                };
                let offset = match &sys.offset {
                    Some(v) => vector(v, n, "system.offset")?,
                    None => DVector::zeros(n),
                };
                Ok(SystemSpec::ConstantMass {
                    mass,
                    damping,
                    stiffness,
                    input_gains,
                    offset,
                })
            }
            (Some(_), Some(_)) => {
                bail!("system: give either `builtin` or inline matrices, not both")
            }
            (None, None) => bail!("system: missing `builtin` or inline `mass`"),
        }
    }

    /// Resolves the document into a runnable scenario, checking every
    /// dimension and positivity requirement.
    pub fn to_scenario(&self) -> Result<Scenario64> {
        let system = self.system_spec()?;
        let n = system.dim();

        let dead_zone = self
            .dead_zone
            .as_ref()
            .map(|dz| -> Result<DeadZone64> {
                let beta = match &dz.beta {
                    Some(v) => vector(v, n, "dead_zone.beta")?,
                    None => DVector::zeros(n),
                };
                DeadZone64::new(
                    vector(&dz.r_b, n, "dead_zone.r_b")?,
                    vector(&dz.l_b, n, "dead_zone.l_b")?,
                    beta,
                )
                .map_err(|e| anyhow!("dead_zone: {e}"))
            })
            .transpose()?;

        let g = &self.gains;
        let beta_comp = match &g.beta_comp {
            Some(v) => vector(v, n, "gains.beta_comp")?,
            None => DVector::zeros(n),
        };
        let mu = match &g.mu {
            Some(spec) => spec.resolve(n, "gains.mu")?,
            None => DVector::from_element(n, 10.0),
        };
        let gains = PbcGains64::new(
            g.k_p.resolve(n, "gains.K_P")?,
            g.k_i.resolve(n, "gains.K_I")?,
            g.k_z.resolve(n, "gains.K_Z")?,
            mu,
            beta_comp,
            vector(&g.q_star, n, "gains.q_star")?,
        )
        .map_err(|e| match e {
            dzpbc::Error::NotPositiveDefinite { what } | dzpbc::Error::NotSymmetric { what } => {
                anyhow!("gains.{what}: {e}")
            }
            other => anyhow!("gains: {other}"),
        })?;

        let s = &self.sim;
        let wiring = s
            .wiring
            .as_deref()
            .unwrap_or("ideal")
            .parse()
            .map_err(|e| anyhow!("sim.wiring: {e}"))?;
        let controller = s
            .controller
            .as_deref()
            .unwrap_or("pidz")
            .parse()
            .map_err(|e| anyhow!("sim.controller: {e}"))?;
        let mut sim = SimConfig64::new(n, wiring, controller);
        if let Some(dt) = s.dt {
            sim.dt = dt;
        }
        if let Some(h) = s.horizon {
            sim.horizon = h;
        }
        if let Some(stride) = s.record_stride {
            sim.record_stride = stride;
        }
        if let Some(x0) = &s.x0 {
            let stacked = vector(x0, 2 * n, "sim.x0")?;
            sim.initial_state =
                GeneralizedState64::from_stacked(&stacked).map_err(|e| anyhow!("sim.x0: {e}"))?;
        }
        sim.validate().map_err(|e| anyhow!("sim: {e}"))?;

        let scenario = Scenario {
            label: self.label.clone(),
            system,
            dead_zone,
            gains,
            sim,
        };
        scenario.validate().map_err(|e| anyhow!("scenario: {e}"))?;
        // Resolve the model once so bad matrices surface here, with the
        // section name, rather than at integration time.
        scenario
            .system
            .build()
            .map_err(|e| anyhow!("system: {e}"))?;
        Ok(scenario)
    }

    /// Serializable view of an in-memory scenario; inverse of
    /// [`to_scenario`](Self::to_scenario).
    pub fn from_scenario(scenario: &Scenario64) -> Self {
        let system = match &scenario.system {
            SystemSpec::Planar2Dof { offset } => SystemDoc {
                builtin: Some("planar2dof".into()),
                mass: None,
                damping: None,
                stiffness: None,
                input_gains: None,
                offset: if offset.iter().all(|&x| x == 0.0) {
                    None
                } else {
                    Some(offset.iter().copied().collect())
                },
            },
            SystemSpec::ConstantMass {
                mass,
                damping,
                stiffness,
                input_gains,
                offset,
            } => {
                let rows = |m: &DMatrix<f64>| {
                    (0..m.nrows())
                        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                        .collect()
                };
                SystemDoc {
                    builtin: None,
                    mass: Some(rows(mass)),
                    damping: Some(rows(damping)),
                    stiffness: stiffness.as_ref().map(rows),
                    input_gains: Some(input_gains.iter().copied().collect()),
                    offset: Some(offset.iter().copied().collect()),
                }
            }
        };

        let dead_zone = scenario.dead_zone.as_ref().map(|dz| DeadZoneDoc {
            r_b: dz.right_break().iter().copied().collect(),
            l_b: dz.left_break().iter().copied().collect(),
            beta: Some(dz.offset().iter().copied().collect()),
        });

        let gains = GainsDoc {
            k_p: MatrixSpec::from_matrix(scenario.gains.k_p()),
            k_i: MatrixSpec::from_matrix(scenario.gains.k_i()),
            k_z: PerChannel::Vector(scenario.gains.k_z().iter().copied().collect()),
            mu: Some(PerChannel::Vector(
                scenario.gains.mu().iter().copied().collect(),
            )),
            beta_comp: Some(scenario.gains.beta_comp().iter().copied().collect()),
            q_star: scenario.gains.q_star().iter().copied().collect(),
        };

        let sim = SimDoc {
            dt: Some(scenario.sim.dt),
            horizon: Some(scenario.sim.horizon),
            x0: Some(
                scenario
                    .sim
                    .initial_state
                    .to_stacked()
                    .iter()
                    .copied()
                    .collect(),
            ),
            wiring: Some(scenario.sim.wiring.to_string()),
            controller: Some(scenario.sim.controller.to_string()),
            record_stride: Some(scenario.sim.record_stride),
        };

        ScenarioDocument {
            label: scenario.label.clone(),
            system,
            dead_zone,
            gains,
            sim,
        }
    }
}

/// Loads a scenario from a file path or a builtin suite label.
pub fn load_scenario(source: &str) -> Result<Scenario64> {
    if let Some(scenario) = dzpbc::scenarios::builtin_scenario::<f64>(source) {
        return Ok(scenario);
    }
    let path = std::path::Path::new(source);
    if !path.exists() {
        bail!(
            "`{source}` is neither a scenario file nor a builtin label \
             (builtins: {})",
            builtin_labels().join(", ")
        );
    }
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read scenario file {source}"))?;
    let doc = ScenarioDocument::parse(&text)?;
    doc.to_scenario()
}

pub fn builtin_labels() -> Vec<String> {
    dzpbc::scenarios::experiment_suite::<f64>()
        .into_iter()
        .map(|s| s.label)
        .collect()
}

/// Builds the plant described by a scenario; kept here so commands share one
/// resolution path.
pub fn build_system(scenario: &Scenario64) -> Result<dzpbc::MechanicalSystem64> {
    scenario.system.build().map_err(|e| anyhow!("system: {e}"))
}
