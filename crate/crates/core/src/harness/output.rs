use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::ensemble::{EnsembleResult, Estimate};
use crate::observables::{momentum, q_tilde};
use crate::params::ModelParams;
use crate::theory;

pub const ENSEMBLE_FILE: &str = "ensemble.json";
pub const OBSERVABLES_FILE: &str = "observables.csv";
pub const CQ_FILE: &str = "cq.csv";
pub const CQ_THEORY_FILE: &str = "cq_theory.csv";
pub const THEORY_FILE: &str = "theory.csv";

const OBSERVABLE_HEADER: [&str; 14] = [
    "L",
    "gamma",
    "theta_over_pi",
    "J",
    "dt",
    "n_traj",
    "S_half",
    "S_half_err",
    "C2_half",
    "C2_half_err",
    "C4_half",
    "C4_half_err",
    "G_AB",
    "G_AB_err",
];

/// Paths written by [`emit_outputs`].
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OutputFiles {
    pub ensemble: PathBuf,
    pub observables: PathBuf,
    pub cq: PathBuf,
    pub theory: Vec<PathBuf>,
}

fn fmt(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        String::new()
    }
}

fn est_fields(e: Option<&Estimate>) -> [String; 2] {
    match e {
        Some(e) => [fmt(e.mean), e.stderr.map(fmt).unwrap_or_default()],
        None => [String::new(), String::new()],
    }
}

/// Mean free path used to scale momenta; `NaN` where undefined.
fn ell0(result: &EnsembleResult) -> f64 {
    let p = &result.params;
    theory::mean_free_path(p.hopping, p.gamma, p.theta).unwrap_or(f64::NAN)
}

/// Writes `ensemble.json`, `observables.csv` and `cq.csv` into `dir`,
/// creating it if needed. With `theory` set, also writes the `C(q)`
/// prediction and the summary table.
pub fn emit_outputs(result: &EnsembleResult, dir: &Path, theory: bool) -> Result<OutputFiles> {
    fs::create_dir_all(dir)?;
    let files = OutputFiles {
        ensemble: dir.join(ENSEMBLE_FILE),
        observables: dir.join(OBSERVABLES_FILE),
        cq: dir.join(CQ_FILE),
        theory: if theory {
            vec![dir.join(CQ_THEORY_FILE), dir.join(THEORY_FILE)]
        } else {
            Vec::new()
        },
    };
    write_ensemble_json(result, &files.ensemble)?;
    write_observables_csv(std::slice::from_ref(result), &files.observables)?;
    write_cq_csv(result, &files.cq)?;
    if theory {
        write_cq_theory_csv(&result.params, &files.theory[0])?;
        let p = &result.params;
        write_theory_csv(
            &theory::summary(p.hopping, p.gamma, p.theta)?,
            &files.theory[1],
        )?;
    }
    Ok(files)
}

pub fn write_ensemble_json(result: &EnsembleResult, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(result)?)?;
    Ok(())
}

pub fn read_ensemble_json(path: &Path) -> Result<EnsembleResult> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// One row per result, in the given order.
pub fn write_observables_csv(results: &[EnsembleResult], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_observables_rows(results, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_observables_rows<W: std::io::Write>(
    results: &[EnsembleResult],
    w: &mut csv::Writer<W>,
) -> Result<()> {
    w.write_record(OBSERVABLE_HEADER)?;
    for r in results {
        let c = &r.config;
        let mut row = vec![
            c.sites.to_string(),
            fmt(r.params.gamma),
            fmt(c.theta_over_pi),
            fmt(r.params.hopping),
            fmt(r.params.dt),
            r.trajectory_count().to_string(),
        ];
        for e in [&r.s_half, &r.c2_half, &r.c4_half, &r.g_ab] {
            row.extend(est_fields(e.as_ref()));
        }
        w.write_record(&row)?;
    }
    Ok(())
}

/// `L` rows of `q_n = 2 pi n / L` with the measured `C(q)`.
pub fn write_cq_csv(result: &EnsembleResult, path: &Path) -> Result<()> {
    let l = result.config.sites;
    let ell = ell0(result);
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["q", "q_tilde", "q_tilde_ell0", "Cq", "Cq_err"])?;
    for n in 0..l {
        let q = momentum(n, l);
        let qt = q_tilde(q);
        let [m, e] = est_fields(result.cq.get(n));
        w.write_record([fmt(q), fmt(qt), fmt(qt * ell), m, e])?;
    }
    w.flush()?;
    Ok(())
}

/// Predicted `C(q)` on the same momentum grid as [`write_cq_csv`].
pub fn write_cq_theory_csv(params: &ModelParams, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_cq_theory_rows(params, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn write_cq_theory_rows<W: std::io::Write>(
    params: &ModelParams,
    w: &mut csv::Writer<W>,
) -> Result<()> {
    let p = params;
    let l = p.sites;
    let ell = theory::mean_free_path(p.hopping, p.gamma, p.theta).unwrap_or(f64::NAN);
    w.write_record([
        "q",
        "q_tilde",
        "q_tilde_ell0",
        "Cq_theory",
        "Cq_theory_smooth",
    ])?;
    for n in 0..l {
        let q = momentum(n, l);
        let qt = q_tilde(q);
        let a = theory::cq_theory(p.hopping, p.gamma, p.theta, qt.abs())
            .map(fmt)
            .unwrap_or_default();
        let b = theory::cq_theory_smooth(p.hopping, p.gamma, p.theta, qt.abs())
            .map(fmt)
            .unwrap_or_default();
        w.write_record([fmt(q), fmt(qt), fmt(qt * ell), a, b])?;
    }
    Ok(())
}

pub fn write_theory_csv(rows: &[theory::TheoryPrediction], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    write_theory_rows(rows, &mut w)?;
    w.flush()?;
    Ok(())
}

/// Writes `quantity, formula, value` rows to any sink.
pub fn write_theory_rows<W: std::io::Write>(
    rows: &[theory::TheoryPrediction],
    w: &mut csv::Writer<W>,
) -> Result<()> {
    w.write_record(["quantity", "formula", "value"])?;
    for r in rows {
        w.write_record([
            r.quantity.as_str(),
            r.formula.as_str(),
            &r.value.map(fmt).unwrap_or_default(),
        ])?;
    }
    Ok(())
}
