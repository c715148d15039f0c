//! Experiment drivers: convergence tables, spinodal decomposition and the
//! Kelvin–Helmholtz shear layer.

use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;
use tpmhd_core::diagnostics::{error_norms, rate_table, ErrorReport, RateError};
use tpmhd_core::forms::SchemeParams;
use tpmhd_core::projections::vorticity;
use tpmhd_core::scheme::{run, Pairing, ProblemCase, SchemeError, StateFields, StepRecord};
use tpmhd_core::sparse::SparseError;

use crate::config::{Case, Config, ConfigError, Experiment};
use crate::output::{fmt_f64, write_vtk, CsvSink, VtkField};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failure: {0}")]
    Solver(#[from] SchemeError),
    #[error("rate table: {0}")]
    Rate(#[from] RateError),
    #[error("vorticity projection: {0}")]
    Projection(#[from] SparseError),
    #[error("output: {0}")]
    Io(#[from] io::Error),
}

impl RunError {
    /// Process exit code: 1 for configuration problems, 2 for run failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            _ => 2,
        }
    }
}

/// Header of the per-step diagnostics CSV.
pub const STEP_HEADER: [&str; 10] = [
    "step",
    "time",
    "energy_system",
    "energy_algorithm",
    "mass",
    "diss_omega",
    "diss_u",
    "diss_curlB",
    "diss_divB",
    "newton_iters",
];

fn step_row(r: &StepRecord) -> Vec<String> {
    let e = &r.energy;
    vec![
        r.step.to_string(),
        fmt_f64(r.time),
        fmt_f64(e.energy),
        fmt_f64(e.energy),
        fmt_f64(r.mass),
        fmt_f64(e.diss_omega),
        fmt_f64(e.diss_u),
        fmt_f64(e.diss_curl_b),
        fmt_f64(e.diss_div_b),
        r.newton_iters.to_string(),
    ]
}

/// Header of the convergence CSV: `h, dt`, then error and rate per norm.
pub fn converge_header() -> Vec<String> {
    let mut h = vec!["h".to_string(), "dt".to_string()];
    for name in ErrorReport::NAMES {
        h.push(format!("err_{name}"));
        h.push(format!("rate_{name}"));
    }
    h
}

fn pairing(case: Case) -> Pairing {
    match case {
        Case::I => Pairing::Mini,
        Case::II => Pairing::TaylorHood,
    }
}

fn check_experiment(cfg: &Config, expected: Experiment) -> Result<(), ConfigError> {
    if cfg.experiment != expected {
        return Err(ConfigError::Invalid(format!(
            "config is for `{}` but `{}` was requested",
            cfg.experiment.name(),
            expected.name()
        )));
    }
    Ok(())
}

fn prepare_dir(dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir)
}

fn write_rate_csv(path: &Path, rows: &[(f64, f64, ErrorReport)]) -> Result<(), RunError> {
    let table = rate_table(rows)?;
    let header = converge_header();
    let mut csv = CsvSink::create(path, &header.iter().map(String::as_str).collect::<Vec<_>>())?;
    for row in &table.rows {
        let mut rec = vec![fmt_f64(row.h), fmt_f64(row.dt)];
        for (k, e) in row.errors.values().iter().enumerate() {
            rec.push(fmt_f64(*e));
            rec.push(row.rates.map_or_else(String::new, |r| fmt_f64(r[k])));
        }
        csv.row(&rec)?;
    }
    Ok(())
}

/// Manufactured-solution runs over `n_list`; writes `converge_case{I|II}.csv`.
/// The table is rewritten after every resolution, so a failure leaves the
/// completed rows on disk.
pub fn cmd_converge(cfg: &Config, out_dir: &Path) -> Result<PathBuf, RunError> {
    check_experiment(cfg, Experiment::Converge)?;
    prepare_dir(out_dir)?;
    let name = match cfg.case {
        Case::I => "converge_caseI.csv",
        Case::II => "converge_caseII.csv",
    };
    let path = out_dir.join(name);
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let params = cfg.params_for(n);
        let case = ProblemCase::manufactured(n, pairing(cfg.case), &params)?;
        let out = run(&case, &params, |_, _| {})?;
        let exact = case.exact.as_ref().expect("manufactured case carries its exact solution");
        rows.push((1.0 / n as f64, params.dt, error_norms(&case.spaces, &out.state, exact, out.state.t)));
        write_rate_csv(&path, &rows)?;
    }
    Ok(path)
}

fn dump_state(
    case: &ProblemCase,
    state: &StateFields,
    with_vorticity: bool,
    lin_tol: f64,
    path: &Path,
) -> Result<(), RunError> {
    let sp = &case.spaces;
    let mut fields = vec![
        VtkField { name: "phi", space: &sp.scalar, coeffs: &state.phi },
        VtkField { name: "omega", space: &sp.scalar, coeffs: &state.omega },
        VtkField { name: "u", space: &sp.velocity, coeffs: &state.u },
        VtkField { name: "p", space: &sp.pressure, coeffs: &state.p },
        VtkField { name: "B", space: &sp.magnetic, coeffs: &state.b },
    ];
    let vort;
    if with_vorticity {
        vort = vorticity(&sp.scalar, &sp.velocity, &state.u, lin_tol)?;
        fields.push(VtkField { name: "vorticity", space: &sp.scalar, coeffs: &vort });
    }
    write_vtk(sp.mesh(), &fields, &format!("step {} time {}", state.k, fmt_f64(state.t)), path)?;
    Ok(())
}

/// Run a time-dependent case writing `<stem>.csv` and, when `dump_every > 0`,
/// `<stem>_<step>.vtk` at steps divisible by `dump_every`.
fn run_with_output(
    case: &ProblemCase,
    params: &SchemeParams,
    dump_every: usize,
    with_vorticity: bool,
    out_dir: &Path,
    stem: &str,
) -> Result<PathBuf, RunError> {
    prepare_dir(out_dir)?;
    let path = out_dir.join(format!("{stem}.csv"));
    let mut csv = CsvSink::create(&path, &STEP_HEADER)?;
    let mut failure: Option<RunError> = None;
    let result = run(case, params, |state, rec| {
        if failure.is_some() {
            return;
        }
        if let Err(e) = csv.row(step_row(rec)) {
            failure = Some(e.into());
            return;
        }
        if dump_every > 0 && rec.step % dump_every == 0 {
            let file = out_dir.join(format!("{stem}_{:06}.vtk", rec.step));
            if let Err(e) = dump_state(case, state, with_vorticity, params.lin_tol, &file) {
                failure = Some(e);
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    result?;
    Ok(path)
}

/// Spinodal decomposition from seeded noise; writes `spinodal.csv`.
pub fn cmd_spinodal(cfg: &Config, out_dir: &Path) -> Result<PathBuf, RunError> {
    check_experiment(cfg, Experiment::Spinodal)?;
    let n = cfg.n_list[0];
    let params = cfg.params_for(n);
    let case = ProblemCase::spinodal(n, Pairing::Mini, params.seed)?;
    run_with_output(&case, &params, cfg.dump_every, false, out_dir, "spinodal")
}

/// Kelvin–Helmholtz shear layer; writes `kh.csv` and field dumps with vorticity.
pub fn cmd_kh(cfg: &Config, out_dir: &Path) -> Result<PathBuf, RunError> {
    check_experiment(cfg, Experiment::Kh)?;
    let n = cfg.n_list[0];
    let params = cfg.params_for(n);
    let case = ProblemCase::kelvin_helmholtz(n, Pairing::Mini, cfg.kh_mode.modes())?;
    run_with_output(&case, &params, cfg.dump_every, true, out_dir, "kh")
}
