//! The three subcommands: `simulate`, `analyze`, `report`.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};

use dzpbc::analysis::{
    eigen_quadratic_residual, linearize, saddle_decompose, transient_metrics, tuning_check,
};
use dzpbc::linalg::{complex_eigenvalues, max_pairing_distance};
use dzpbc::sim::{steady_state_error, ControllerKind, Wiring};
use dzpbc::Scenario64;

use crate::document::{build_system, load_scenario};
use crate::output::{build_report, write_atomic, RunMetrics, NORMALIZATION_NOTE};

#[derive(Debug, Default)]
pub struct SimulateOverrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub wiring: Option<String>,
    pub controllers: Vec<String>,
    pub seed: Option<u64>,
}

fn apply_overrides(scenario: &mut Scenario64, over: &SimulateOverrides) -> Result<()> {
    if let Some(dt) = over.dt {
        scenario.sim.dt = dt;
    }
    if let Some(h) = over.horizon {
        scenario.sim.horizon = h;
    }
    if let Some(w) = &over.wiring {
        scenario.sim.wiring = w.parse().map_err(|e| anyhow!("--wiring: {e}"))?;
    }
    if over.seed.is_some() {
        eprintln!("note: --seed is reserved; the pipeline is deterministic and ignores it");
    }
    scenario.sim.validate().map_err(|e| anyhow!("sim: {e}"))?;
    Ok(())
}

/// Runs one scenario (optionally under several controllers), writing
/// `<label>.csv` and `<label>.metrics.txt` per run.
pub fn cmd_simulate(source: &str, output_dir: &Path, over: &SimulateOverrides) -> Result<()> {
    let mut scenario = load_scenario(source)?;
    apply_overrides(&mut scenario, over)?;

    let controllers: Vec<ControllerKind> = if over.controllers.is_empty() {
        vec![scenario.sim.controller]
    } else {
        over.controllers
            .iter()
            .map(|c| c.parse().map_err(|e| anyhow!("--controller: {e}")))
            .collect::<Result<_>>()?
    };
    let multi = controllers.len() > 1;

    fs::create_dir_all(output_dir).with_context(|| format!("creating {}", output_dir.display()))?;

    let mut produced: Vec<RunMetrics> = Vec::new();
    for controller in &controllers {
        let mut run = scenario.clone();
        run.sim.controller = *controller;
        if multi {
            run.label = format!("{}_{controller}", scenario.label);
        }
        if run.sim.wiring == Wiring::Physical && run.dead_zone.is_none() {
            bail!(
                "scenario `{}`: physical wiring needs a [dead_zone] section",
                run.label
            );
        }

        let traj = run.run().map_err(|e| anyhow!("{}: {e}", run.label))?;
        let q_star = run.gains.q_star().clone();
        let sse = steady_state_error(&traj, &q_star).map_err(|e| anyhow!("{e}"))?;
        let transient = transient_metrics(&traj, &q_star).map_err(|e| anyhow!("{e}"))?;
        let metrics = RunMetrics::from_run(&run.label, &traj, &sse, &transient, q_star.as_slice());

        let mut csv = Vec::new();
        traj.write_csv(&mut csv)?;
        let csv_path = output_dir.join(format!("{}.csv", run.label));
        write_atomic(&csv_path, &csv)?;
        let metrics_path = output_dir.join(format!("{}.metrics.txt", run.label));
        write_atomic(&metrics_path, metrics.render().as_bytes())?;

        println!(
            "wrote {} ({} rows) and {}; settled = {}",
            csv_path.display(),
            traj.len(),
            metrics_path.display(),
            sse.settled
        );
        if !sse.settled {
            eprintln!("warning: {} did not settle within the horizon", run.label);
        }
        produced.push(metrics);
    }

    if produced.len() > 1 {
        println!();
        println!("{}", side_by_side(&scenario.label, &produced));
    }
    Ok(())
}

fn side_by_side(base: &str, runs: &[RunMetrics]) -> String {
    let mut header = vec!["case".to_string(), "position".to_string()];
    for m in runs {
        let links = (1..=m.links())
            .map(|i| format!("%L{i}"))
            .collect::<Vec<_>>()
            .join("/");
        header.push(format!("u_{} ({links})", m.controller));
    }
    let q_star = &runs[0].q_star;
    let mut row = vec![
        base.to_string(),
        format!(
            "[{}]",
            q_star
                .iter()
                .map(|x| format!("{x:.3}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    ];
    for m in runs {
        row.push(
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
                .join("/"),
        );
    }
    let width: Vec<usize> = header
        .iter()
        .zip(&row)
        .map(|(h, r)| h.len().max(r.len()))
        .collect();
    let fmt_row = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{:<w$}", c, w = width[i]))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    format!(
        "{}\n{}\nnormalization: {}",
        fmt_row(&header),
        fmt_row(&row),
        NORMALIZATION_NOTE
    )
}

/// Spectral analysis of the linearized loop at the scenario's setpoint:
/// tuning rule, minimal dissipation rescale, full spectrum with quadratic
/// residuals, and the similarity check against the plain linearization.
pub fn cmd_analyze(source: &str, output_dir: Option<&Path>) -> Result<()> {
    let scenario = load_scenario(source)?;
    let sys = build_system(&scenario)?;
    let gains = &scenario.gains;

    let report = tuning_check(&sys, gains).map_err(|e| anyhow!("tuning check: {e}"))?;
    let dec = saddle_decompose(&sys, gains).map_err(|e| anyhow!("saddle form: {e}"))?;
    let a = linearize(&sys, gains).map_err(|e| anyhow!("linearization: {e}"))?;
    let eig_neg_a = complex_eigenvalues(&(-a)).map_err(|e| anyhow!("{e}"))?;
    let similarity =
        max_pairing_distance(&dec.eigenvalues(), &eig_neg_a).map_err(|e| anyhow!("{e}"))?;

    let q_star_str = format!(
        "[{}]",
        gains
            .q_star()
            .iter()
            .map(|x| format!("{x}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("label = {}", scenario.label);
    println!("q_star = {q_star_str}");
    println!("mass_evaluated_at = q_star (setpoint of this scenario)");
    println!("lhs_4_lmaxP_lmaxM = {:.10e}", report.lhs);
    println!("rhs_lminR_squared = {:.10e}", report.rhs);
    println!("satisfied = {}", report.satisfied);
    println!("rescale_alpha = {:.10e}", report.rescale);
    println!("spectrum_real = {}", dec.spectrum_is_real());
    println!("max_im = {:.10e}", dec.max_imaginary());
    println!("min_re = {:.10e}", dec.min_real());
    println!("similarity_max_distance = {:.10e}", similarity);
    for (k, pair) in dec.spectrum.iter().enumerate() {
        let w1 = pair.vector.rows(0, dec.dim()).into_owned();
        let residual = eigen_quadratic_residual(&dec, pair.value, &w1)
            .map(|r| format!("{r:.3e}"))
            .unwrap_or_else(|e| format!("unavailable ({e})"));
        println!(
            "eig_{} = {:+.10e} {:+.10e}i  residual = {}",
            k + 1,
            pair.value.re,
            pair.value.im,
            residual
        );
    }
    let csv_row = format!(
        "{:.12e},{:.12e},{},{:.12e},{:.12e}",
        report.lhs,
        report.rhs,
        report.satisfied,
        dec.max_imaginary(),
        dec.min_real()
    );
    println!("csv_header = lhs,rhs,satisfied,max_im,min_re");
    println!("csv = {csv_row}");

    if let Some(dir) = output_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("{}.analysis.csv", scenario.label));
        write_atomic(
            &path,
            format!("lhs,rhs,satisfied,max_im,min_re\n{csv_row}\n").as_bytes(),
        )?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Renders the table + CSV summary of a directory of metrics files.
pub fn cmd_report(suite_dir: &Path, output_dir: Option<&Path>) -> Result<()> {
    let report = build_report(suite_dir)?;
    for warning in &report.warnings {
        eprintln!("warning: {warning}");
    }
    print!("{}", report.table);

    let out = output_dir.unwrap_or(suite_dir);
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(&out.join("report.txt"), report.table.as_bytes())?;
    write_atomic(&out.join("report.csv"), report.csv.as_bytes())?;
    println!(
        "wrote {} and {}",
        out.join("report.txt").display(),
        out.join("report.csv").display()
    );
    Ok(())
}
