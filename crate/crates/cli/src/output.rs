//! Metrics files, atomic writes, and report tables.
//!
//! Every simulation run leaves a `<label>.metrics.txt` next to its CSV: a
//! flat `key = value` block carrying the steady-state errors, transient
//! metrics, and the conventions used, so that reports stay auditable without
//! re-running anything.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use dzpbc::analysis::TransientMetrics;
use dzpbc::sim::SteadyStateError;
use dzpbc::Trajectory64;

pub const NORMALIZATION_NOTE: &str =
    "percent of |q_star_i| per link; absolute radians where q_star_i = 0";

/// Writes a file through a temporary sibling and rename, so failed runs never
/// leave partial output behind.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

/// Per-run metrics, written to and parsed from `<label>.metrics.txt`.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub label: String,
    pub controller: String,
    pub wiring: String,
    pub q_star: Vec<f64>,
    pub settled: bool,
    /// Steady-state error per link with its absolute-radians flag.
    pub sse: Vec<(f64, bool)>,
    /// Overshoot per link, percent of the initial error.
    pub overshoot: Vec<f64>,
    /// Settling time per link, seconds.
    pub settling_time: Vec<Option<f64>>,
    pub oscillations: Vec<usize>,
}

impl RunMetrics {
    pub fn from_run(
        label: &str,
        traj: &Trajectory64,
        sse: &SteadyStateError<f64>,
        transient: &TransientMetrics<f64>,
        q_star: &[f64],
    ) -> Self {
        RunMetrics {
            label: label.to_string(),
            controller: traj.metadata.controller.to_string(),
            wiring: traj.metadata.wiring.to_string(),
            q_star: q_star.to_vec(),
            settled: sse.settled,
            sse: sse.per_link.iter().map(|l| (l.value, l.absolute)).collect(),
            overshoot: transient.overshoot.iter().map(|o| 100.0 * o).collect(),
            settling_time: transient.settling_time.clone(),
            oscillations: transient.oscillations.clone(),
        }
    }

    pub fn links(&self) -> usize {
        self.sse.len()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("label", self.label.clone());
        push("controller", self.controller.clone());
        push("wiring", self.wiring.clone());
        push("normalization", NORMALIZATION_NOTE.to_string());
        push(
            "q_star",
            self.q_star
                .iter()
                .map(|x| format!("{x:.16e}"))
                .collect::<Vec<_>>()
                .join(" "),
        );
        push("settled", self.settled.to_string());
        for i in 0..self.links() {
            let l = i + 1;
            push(&format!("sse_l{l}"), format!("{:.12e}", self.sse[i].0));
            push(&format!("sse_l{l}_absolute"), self.sse[i].1.to_string());
            push(
                &format!("overshoot_l{l}"),
                format!("{:.12e}", self.overshoot[i]),
            );
            push(
                &format!("settling_time_l{l}"),
                match self.settling_time[i] {
                    Some(t) => format!("{t:.6}"),
                    None => "none".to_string(),
                },
            );
            push(
                &format!("oscillations_l{l}"),
                self.oscillations[i].to_string(),
            );
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut map = BTreeMap::new();
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once(" = ") else {
                bail!("{}: malformed metrics line `{line}`", origin.display());
            };
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<String> {
            map.get(k)
                .cloned()
                .with_context(|| format!("{}: missing key `{k}`", origin.display()))
        };
        let q_star: Vec<f64> = get("q_star")?
            .split_whitespace()
            .map(|x| x.parse::<f64>().context("bad q_star entry"))
            .collect::<Result<_>>()?;
        let links = q_star.len();
        let mut sse = Vec::new();
        let mut overshoot = Vec::new();
        let mut settling = Vec::new();
        let mut oscillations = Vec::new();
        for i in 1..=links {
            sse.push((
                get(&format!("sse_l{i}"))?.parse::<f64>()?,
                get(&format!("sse_l{i}_absolute"))?.parse::<bool>()?,
            ));
            overshoot.push(get(&format!("overshoot_l{i}"))?.parse::<f64>()?);
            let s = get(&format!("settling_time_l{i}"))?;
            settling.push(if s == "none" { None } else { Some(s.parse()?) });
            oscillations.push(get(&format!("oscillations_l{i}"))?.parse::<usize>()?);
        }
        Ok(RunMetrics {
            label: get("label")?,
            controller: get("controller")?,
            wiring: get("wiring")?,
            q_star,
            settled: get("settled")?.parse()?,
            sse,
            overshoot,
            settling_time: settling,
            oscillations,
        })
    }
}

fn fmt_q_star(q: &[f64]) -> String {
    let inner = q
        .iter()
        .map(|x| format!("{x:.3}"))
        .collect::<Vec<_>>()
        .join(", ");
    format!("[{inner}]")
}

fn fmt_sse(m: &RunMetrics) -> String {
    m.sse
        .iter()
        .map(|(v, abs)| {
            if *abs {
                format!("{v:.4}rad")
            } else {
                format!("{v:.2}")
            }
        })
        .collect::<Vec<_>>()
        .join("/")
        + if m.settled { "" } else { "*" }
}

fn render_aligned(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let mut widths = vec![0usize; cols];
    for row in rows {
        for (j, cell) in row.iter().enumerate() {
            widths[j] = widths[j].max(cell.len());
        }
    }
    let mut out = String::new();
    for row in rows {
        let mut line = String::new();
        for (j, cell) in row.iter().enumerate() {
            if j > 0 {
                line.push_str("  ");
            }
            line.push_str(&format!("{:<width$}", cell, width = widths[j]));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

/// Report assembled from a directory of metrics files: an aligned text table
/// and a CSV twin.
pub struct Report {
    pub table: String,
    pub csv: String,
    pub warnings: Vec<String>,
}

/// Builds the report. When the directory pairs `<base>_pi` / `<base>_pidz`
/// runs, the table compares the two controllers per case; otherwise it lists
/// one row per run. Rows are sorted by label.
pub fn build_report(dir: &Path) -> Result<Report> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().ends_with(".metrics.txt"))
                .unwrap_or(false)
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        bail!("no metrics files in {}", dir.display());
    }

    let mut metrics = Vec::new();
    for path in &entries {
        let text = fs::read_to_string(path)?;
        metrics.push(RunMetrics::parse(&text, path)?);
    }
    metrics.sort_by(|a, b| a.label.cmp(&b.label));

    let mut warnings = Vec::new();
    let base_of = |label: &str| -> Option<(String, String)> {
        for suffix in ["_pi", "_pidz"] {
            if let Some(base) = label.strip_suffix(suffix) {
                return Some((base.to_string(), suffix[1..].to_string()));
            }
        }
        None
    };
    let paired = metrics
        .iter()
        .any(|m| matches!(base_of(&m.label), Some((_, ref c)) if c == "pidz"))
        && metrics
            .iter()
            .any(|m| matches!(base_of(&m.label), Some((_, ref c)) if c == "pi"));

    let mut table_rows: Vec<Vec<String>> = Vec::new();
    let mut csv = String::new();

    if paired {
        let mut cases: BTreeMap<String, (Option<&RunMetrics>, Option<&RunMetrics>)> =
            BTreeMap::new();
        for m in &metrics {
            let Some((base, ctrl)) = base_of(&m.label) else {
                warnings.push(format!("{}: not part of a pi/pidz pair, skipped", m.label));
                continue;
            };
            let slot = cases.entry(base).or_insert((None, None));
            if ctrl == "pi" {
                slot.0 = Some(m);
            } else {
                slot.1 = Some(m);
            }
        }
        let links = metrics.first().map(|m| m.links()).unwrap_or(2);
        let link_header = (1..=links)
            .map(|i| format!("%L{i}"))
            .collect::<Vec<_>>()
            .join("/");
        table_rows.push(vec![
            "case".into(),
            "position".into(),
            format!("u_pi ({link_header})"),
            format!("u_pidz ({link_header})"),
        ]);
        csv.push_str("case,position,");
        csv.push_str(
            &(1..=links)
                .map(|i| format!("pi_l{i}"))
                .chain((1..=links).map(|i| format!("pidz_l{i}")))
                .collect::<Vec<_>>()
                .join(","),
        );
        csv.push('\n');
        for (base, (pi, pidz)) in &cases {
            let q_star = pi.or(*pidz).map(|m| m.q_star.clone()).unwrap_or_default();
            let cell = |m: Option<&RunMetrics>| m.map(fmt_sse).unwrap_or_else(|| "—".to_string());
            if pi.is_none() || pidz.is_none() {
                warnings.push(format!("{base}: missing one controller run"));
            }
            table_rows.push(vec![
                base.clone(),
                fmt_q_star(&q_star),
                cell(*pi),
                cell(*pidz),
            ]);
            let csv_cells = |m: Option<&RunMetrics>| -> Vec<String> {
                match m {
                    Some(m) => m.sse.iter().map(|(v, _)| format!("{v:.12e}")).collect(),
                    None => vec!["".to_string(); links],
                }
            };
            csv.push_str(&format!(
                "{base},{},{}\n",
                fmt_q_star(&q_star).replace(", ", ";"),
                csv_cells(*pi)
                    .into_iter()
                    .chain(csv_cells(*pidz))
                    .collect::<Vec<_>>()
                    .join(",")
            ));
        }
    } else {
        let links = metrics.first().map(|m| m.links()).unwrap_or(2);
        let mut head = vec!["case".into(), "position".into()];
        head.extend((1..=links).map(|i| format!("%Link{i}")));
        head.push("settled".into());
        table_rows.push(head);
        csv.push_str("case,position,");
        csv.push_str(
            &(1..=links)
                .map(|i| format!("l{i}"))
                .collect::<Vec<_>>()
                .join(","),
        );
        csv.push_str(",settled\n");
        for m in &metrics {
            let mut row = vec![m.label.clone(), fmt_q_star(&m.q_star)];
            row.extend(m.sse.iter().map(|(v, abs)| {
                if *abs {
                    format!("{v:.4}rad")
                } else {
                    format!("{v:.2}")
                }
            }));
            row.push(m.settled.to_string());
            table_rows.push(row);
            csv.push_str(&format!(
                "{},{},{},{}\n",
                m.label,
                fmt_q_star(&m.q_star).replace(", ", ";"),
                m.sse
                    .iter()
                    .map(|(v, _)| format!("{v:.12e}"))
                    .collect::<Vec<_>>()
                    .join(","),
                m.settled
            ));
        }
    }

    let mut table = render_aligned(&table_rows);
    table.push_str(&format!("normalization: {NORMALIZATION_NOTE}\n"));
    if metrics.iter().any(|m| !m.settled) {
        table.push_str("*: run not settled within the horizon\n");
    }
    Ok(Report {
        table,
        csv,
        warnings,
    })
}
