use std::path::Path;

use serde::Serialize;

use bloch_pulse::costs::{self, CostReport};
use bloch_pulse::dynamics::propagate_to;
use bloch_pulse::geometry::{angle_between, rotate};
use bloch_pulse::oracle::{self, off_axis_check, Criterion, OracleVerdict, PerturbationBasis};
use bloch_pulse::pulses::{
    pulse_b1, pulse_b2, pulse_b3, pulse_constant_norm, pulse_sine, synthesize, Profile,
};
use bloch_pulse::{par, ControlSchedule, Family, PulseSpec, UnitAxis, Vec3};

use crate::config::{OutputFormat, RunConfig};
use crate::error::CliError;
use crate::output::{self, float, Document, VERSION};

/// `simulate` succeeds when the final state is this close to the target.
pub const ARRIVAL_TOLERANCE: f64 = 1e-5;

fn arr(v: Vec3) -> [f64; 3] {
    v.to_array()
}

/// Status lines go to stdout when the data goes to a file, stderr otherwise.
fn report(to_file: bool, line: &str) {
    if to_file {
        println!("{line}");
    } else {
        eprintln!("{line}");
    }
}

fn warn_all(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

#[derive(Serialize)]
struct SynthMeta<'a> {
    spec: PulseSpec,
    version: &'static str,
    seed: u64,
    warnings: &'a [String],
    s_i: [f64; 3],
    s_f: [f64; 3],
    grid_n: usize,
    effective_angle: f64,
    /// `∫ b·ŝ⊥ dt` by quadrature on the written samples.
    integral: f64,
    costs: CostReport,
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.family == Family::Custom {
        return Err(CliError::Usage(
            "custom schedules are read by `simulate`, not synthesized".into(),
        ));
    }
    let (spec, _) = PulseSpec::for_states(cfg.family, cfg.s_i, cfg.s_f)?;
    let spec = spec
        .with_branch(cfg.branch_n)
        .with_a(cfg.a)
        .with_omega(cfg.omega)
        .with_mu(cfg.mu);
    let syn = synthesize(&spec, cfg.s_i, cfg.s_f, cfg.grid_n)?;
    let mut warnings = cfg.warnings.clone();
    warnings.extend(syn.warnings.iter().cloned());
    warn_all(&warnings);

    let report_costs = costs::cost_report(
        &syn.schedule,
        &syn.trajectory,
        Some(syn.spec.axis),
        cfg.a,
        cfg.omega,
    )?;
    let samples = output::rows(syn.schedule.samples());
    let text = match cfg.output_format {
        OutputFormat::Json => output::to_json(&Document {
            meta: SynthMeta {
                spec: syn.spec,
                version: VERSION,
                seed: cfg.seed,
                warnings: &warnings,
                s_i: arr(cfg.s_i),
                s_f: arr(cfg.s_f),
                grid_n: syn.schedule.intervals(),
                effective_angle: syn.spec.effective_angle(),
                integral: report_costs.accumulated_angle,
                costs: report_costs,
            },
            samples,
        })?,
        OutputFormat::Csv => output::to_csv("t,bx,by,bz", &samples),
    };
    output::emit(cfg.output_path.as_deref(), &text)?;
    report(
        cfg.output_path.is_some(),
        &format!(
            "{} n={} angle={} integral={} fluence={} rate={}",
            syn.spec.family,
            syn.spec.branch_n,
            syn.spec.effective_angle(),
            report_costs.accumulated_angle,
            report_costs.fluence,
            report_costs.rate_cost
        ),
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulateMeta<'a> {
    spec: Option<PulseSpec>,
    version: &'static str,
    seed: u64,
    warnings: &'a [String],
    s_i: [f64; 3],
    s_f: [f64; 3],
    final_error: f64,
    norm_drift: f64,
    tolerance: f64,
}

/// States for `simulate`: command-line values win over the pulse file's.
pub struct SimulateInput<'a> {
    pub pulse: &'a Path,
    pub s_i: Option<Vec3>,
    pub s_f: Option<Vec3>,
}

pub fn simulate(cfg: &RunConfig, input: &SimulateInput) -> Result<(), CliError> {
    let file = output::read_pulse_file(input.pulse)?;
    let from_file = |v: Option<[f64; 3]>, name: &str| -> Result<Vec3, CliError> {
        let [x, y, z] = v.ok_or_else(|| {
            CliError::Usage(format!(
                "--{name} is required when the pulse file does not record it"
            ))
        })?;
        Vec3::new(x, y, z)
            .normalize()
            .ok_or_else(|| CliError::Schema(format!("{name} in pulse file is zero")))
    };
    let s_i = match input.s_i {
        Some(v) => v,
        None => from_file(file.meta.s_i, "si")?,
    };
    let s_f = match input.s_f {
        Some(v) => v,
        None => from_file(file.meta.s_f, "sf")?,
    };
    let schedule = ControlSchedule::from_samples(&file.samples).map_err(|e| match e {
        bloch_pulse::Error::InvalidSchedule(m) => CliError::Schema(m),
        other => CliError::Library(other),
    })?;
    warn_all(&cfg.warnings);

    let result = propagate_to(s_i, &schedule, s_f);
    let final_error = result.final_error.unwrap_or(0.0);
    let samples = output::rows(result.trajectory.samples());
    let text = match cfg.output_format {
        OutputFormat::Json => output::to_json(&Document {
            meta: SimulateMeta {
                spec: file.meta.spec,
                version: VERSION,
                seed: cfg.seed,
                warnings: &cfg.warnings,
                s_i: arr(s_i),
                s_f: arr(s_f),
                final_error,
                norm_drift: result.norm_drift,
                tolerance: ARRIVAL_TOLERANCE,
            },
            samples,
        })?,
        OutputFormat::Csv => output::to_csv("t,sx,sy,sz", &samples),
    };
    output::emit(cfg.output_path.as_deref(), &text)?;
    report(
        cfg.output_path.is_some(),
        &format!(
            "final_error={} norm_drift={}",
            float(final_error),
            float(result.norm_drift)
        ),
    );
    if final_error > ARRIVAL_TOLERANCE {
        return Err(CliError::Failed(format!(
            "final error {final_error:e} exceeds {ARRIVAL_TOLERANCE:e}"
        )));
    }
    Ok(())
}

#[derive(Serialize)]
struct VerifyMeta<'a> {
    spec: PulseSpec,
    version: &'static str,
    seed: u64,
    warnings: &'a [String],
    s_i: [f64; 3],
    s_f: [f64; 3],
    passed: bool,
}

#[derive(Serialize)]
struct VerifyDocument<'a> {
    meta: VerifyMeta<'a>,
    verdict: &'a OracleVerdict,
}

pub fn verify(cfg: &RunConfig, n_trials: usize, off_axis_trials: usize) -> Result<(), CliError> {
    let theta = angle_between(cfg.s_i, cfg.s_f)?;
    let (spec, _) = PulseSpec::for_states(cfg.family, cfg.s_i, cfg.s_f)?;
    let spec = spec
        .with_branch(cfg.branch_n)
        .with_a(cfg.a)
        .with_omega(cfg.omega)
        .with_mu(cfg.mu);
    let criterion = match cfg.family {
        Family::B1 => Criterion::Fluence,
        Family::B2 => Criterion::Rate,
        Family::B3 => Criterion::Mixed {
            a: cfg.a,
            omega: cfg.omega,
        },
        Family::CN | Family::Custom => {
            return Err(CliError::Usage(format!(
                "no optimality criterion for family {}",
                cfg.family
            )))
        }
    };
    warn_all(&cfg.warnings);
    let basis = PerturbationBasis::default_for(criterion, spec.effective_angle());
    let mut verdict = match criterion {
        Criterion::Fluence => {
            oracle::verify_fluence_minimum(theta, cfg.branch_n, &basis, n_trials, cfg.seed)?
        }
        Criterion::Rate => {
            oracle::verify_rate_minimum(theta, cfg.branch_n, &basis, n_trials, cfg.seed)?
        }
        Criterion::Mixed { a, omega } => {
            oracle::verify_mixed_minimum(theta, cfg.branch_n, a, omega, &basis, n_trials, cfg.seed)?
        }
    };
    if off_axis_trials > 0 {
        let base = spec.profile()?.expect("axis family");
        verdict.off_axis = Some(off_axis_check(
            criterion,
            base,
            cfg.s_i,
            cfg.s_f,
            &basis,
            off_axis_trials,
            cfg.seed,
            cfg.grid_n,
        )?);
    }
    let passed = verdict.passed();
    let text = match cfg.output_format {
        OutputFormat::Json => output::to_json(&VerifyDocument {
            meta: VerifyMeta {
                spec,
                version: VERSION,
                seed: cfg.seed,
                warnings: &cfg.warnings,
                s_i: arr(cfg.s_i),
                s_f: arr(cfg.s_f),
                passed,
            },
            verdict: &verdict,
        })?,
        OutputFormat::Csv => verdict_csv(&verdict, passed),
    };
    output::emit(cfg.output_path.as_deref(), &text)?;
    report(
        cfg.output_path.is_some(),
        &format!(
            "{} base_cost={} worst_violation={} tolerance={} {}",
            criterion_name(criterion),
            float(verdict.base_cost),
            float(verdict.worst_violation),
            float(verdict.tolerance),
            if passed { "PASS" } else { "FAIL" }
        ),
    );
    if !passed {
        return Err(CliError::Failed(format!(
            "a perturbed pulse beat the {} pulse by {:e}",
            cfg.family, verdict.worst_violation
        )));
    }
    Ok(())
}

fn criterion_name(c: Criterion) -> &'static str {
    match c {
        Criterion::Fluence => "fluence",
        Criterion::Rate => "rate",
        Criterion::Mixed { .. } => "mixed",
    }
}

fn verdict_csv(v: &OracleVerdict, passed: bool) -> String {
    let mut rows = vec![
        (
            "criterion".to_string(),
            criterion_name(v.criterion).to_string(),
        ),
        ("seed".into(), v.seed.to_string()),
        ("n_trials".into(), v.n_trials.to_string()),
        ("base_cost".into(), float(v.base_cost)),
        ("min_perturbed_cost".into(), float(v.min_perturbed_cost)),
        ("worst_violation".into(), float(v.worst_violation)),
        ("tolerance".into(), float(v.tolerance)),
    ];
    if let Some(o) = &v.off_axis {
        rows.push(("off_axis_trials".into(), o.n_trials.to_string()));
        rows.push(("off_axis_worst_violation".into(), float(o.worst_violation)));
        rows.push((
            "off_axis_max_arrival_error".into(),
            float(o.max_arrival_error),
        ));
    }
    rows.push(("passed".into(), passed.to_string()));
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

pub struct CompareGrid {
    pub thetas: Vec<f64>,
    pub branches: Vec<i64>,
    pub omegas: Vec<f64>,
    pub mus: Vec<f64>,
    pub a: f64,
    pub grid_n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub theta: f64,
    pub branch_n: i64,
    pub omega: f64,
    pub family: String,
    pub mu: Option<f64>,
    pub fluence: f64,
    pub rate: f64,
    pub mixed: f64,
    pub endpoint_jump: bool,
    pub rate_over_b2: f64,
}

/// All rows of the comparison table, in grid order.
pub fn compare_rows(grid: &CompareGrid) -> Result<Vec<Row>, CliError> {
    let mut cells = Vec::new();
    for &theta in &grid.thetas {
        for &n in &grid.branches {
            for &omega in &grid.omegas {
                cells.push((theta, n, omega));
            }
        }
    }
    let per_cell = par::map_slice(&cells, |&(theta, n, omega)| {
        cell_rows(grid, theta, n, omega)
    });
    let mut rows = Vec::new();
    for r in per_cell {
        rows.extend(r?);
    }
    Ok(rows)
}

fn cell_rows(grid: &CompareGrid, theta: f64, n: i64, omega: f64) -> Result<Vec<Row>, CliError> {
    let along = |p: Profile| ControlSchedule::from_field(p.along(UnitAxis::Y), grid.grid_n);
    let mut named: Vec<(String, Option<f64>, ControlSchedule)> = vec![
        ("b1".into(), None, along(pulse_b1(theta, n)?)?),
        ("b2".into(), None, along(pulse_b2(theta, n)?)?),
        ("b3".into(), None, along(pulse_b3(theta, n, omega)?)?),
        ("sine".into(), None, along(pulse_sine(theta, n)?)?),
    ];
    if n == 0 {
        let s_f = rotate(Vec3::Z, UnitAxis::Y, theta);
        for &mu in &grid.mus {
            let cn = pulse_constant_norm(Vec3::Z, s_f, 0, mu, grid.grid_n)?;
            named.push((
                "cn".into(),
                Some(mu),
                ControlSchedule::from_field(cn, grid.grid_n)?,
            ));
        }
    }
    let b2_rate = costs::rate_cost(&named[1].2).value;
    named
        .into_iter()
        .map(|(family, mu, sched)| {
            let rate = costs::rate_cost(&sched);
            Ok(Row {
                theta,
                branch_n: n,
                omega,
                family,
                mu,
                fluence: costs::fluence(&sched),
                rate: rate.value,
                mixed: costs::mixed_cost(&sched, grid.a, omega)?,
                endpoint_jump: rate.endpoint_jump,
                rate_over_b2: rate.value / b2_rate,
            })
        })
        .collect()
}

const COLUMNS: [&str; 10] = [
    "theta",
    "n",
    "omega",
    "family",
    "mu",
    "fluence",
    "rate",
    "mixed",
    "endpoint_jump",
    "rate_over_b2",
];

pub fn render_table(rows: &[Row], format: TableFormat) -> String {
    let cells = |r: &Row, num: &dyn Fn(f64) -> String| -> Vec<String> {
        vec![
            num(r.theta),
            r.branch_n.to_string(),
            num(r.omega),
            r.family.clone(),
            r.mu.map(num).unwrap_or_default(),
            num(r.fluence),
            num(r.rate),
            num(r.mixed),
            r.endpoint_jump.to_string(),
            num(r.rate_over_b2),
        ]
    };
    let mut out = String::new();
    match format {
        TableFormat::Csv => {
            out.push_str(&COLUMNS.join(","));
            out.push('\n');
            for r in rows {
                out.push_str(&cells(r, &float).join(","));
                out.push('\n');
            }
        }
        TableFormat::Markdown => {
            out.push_str(&format!("| {} |\n", COLUMNS.join(" | ")));
            out.push_str(&format!("|{}\n", "---|".repeat(COLUMNS.len())));
            let short = |v: f64| format!("{v:.6}");
            for r in rows {
                out.push_str(&format!("| {} |\n", cells(r, &short).join(" | ")));
            }
        }
    }
    out
}

pub fn compare(
    grid: &CompareGrid,
    format: TableFormat,
    output_path: Option<&Path>,
) -> Result<(), CliError> {
    let rows = compare_rows(grid)?;
    output::emit(output_path, &render_table(&rows, format))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn grid() -> CompareGrid {
        CompareGrid {
            thetas: vec![0.3, FRAC_PI_2],
            branches: vec![0, 1],
            omegas: vec![5.0],
            mus: vec![0.5, 1.0],
            a: 1.0,
            grid_n: 1000,
        }
    }

    #[test]
    fn compare_rows_in_grid_order() {
        let rows = compare_rows(&grid()).unwrap();
        // per θ: n=0 has four axis rows and two CN rows, n=1 has four
        assert_eq!(rows.len(), 2 * (6 + 4));
        assert_eq!(rows[0].family, "b1");
        assert_eq!(rows[4].mu, Some(0.5));
        assert!(rows.iter().all(|r| r.rate_over_b2.is_finite()));
    }

    #[test]
    fn sine_ratio_column() {
        for r in compare_rows(&grid()).unwrap() {
            if r.family == "sine" {
                assert!((r.rate_over_b2 - PI.powi(4) / 96.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn markdown_has_one_line_per_row() {
        let rows = compare_rows(&grid()).unwrap();
        let md = render_table(&rows, TableFormat::Markdown);
        assert_eq!(md.lines().count(), rows.len() + 2);
    }
}
