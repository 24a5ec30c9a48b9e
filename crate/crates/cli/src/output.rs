use std::io::Write;

use assure_dx_core::assurance::AssuranceCurve;
use assure_dx_core::config::{OutputFormat, RunConfig};
use assure_dx_core::run::{
    CompareResult, ConflictResult, CurveResult, SampleSizeResult, SensitivityResult, VapCaseStudy,
};
use serde::Serialize;

use crate::CliError;

/// A command result with the configuration that produced it.
pub enum Report {
    SampleSize(SampleSizeResult, RunConfig),
    Curve(CurveResult, RunConfig),
    Sensitivity(SensitivityResult, RunConfig),
    Conflict(ConflictResult, RunConfig),
    Compare(CompareResult, RunConfig),
    Vap(Box<VapCaseStudy>, RunConfig),
}

impl Report {
    fn config(&self) -> &RunConfig {
        match self {
            Report::SampleSize(_, c)
            | Report::Curve(_, c)
            | Report::Sensitivity(_, c)
            | Report::Conflict(_, c)
            | Report::Compare(_, c)
            | Report::Vap(_, c) => c,
        }
    }

    fn json(&self) -> serde_json::Result<String> {
        match self {
            Report::SampleSize(r, _) => serde_json::to_string_pretty(r),
            Report::Curve(r, _) => serde_json::to_string_pretty(r),
            Report::Sensitivity(r, _) => serde_json::to_string_pretty(r),
            Report::Conflict(r, _) => serde_json::to_string_pretty(r),
            Report::Compare(r, _) => serde_json::to_string_pretty(r),
            Report::Vap(r, _) => serde_json::to_string_pretty(r),
        }
    }

    fn csv(&self) -> Result<Vec<u8>, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        match self {
            Report::SampleSize(r, _) => {
                #[derive(Serialize)]
                struct Row {
                    n_star: u64,
                    assurance_at_n_star: f64,
                    assurance_below: f64,
                    monotone_crossing: bool,
                }
                w.serialize(Row {
                    n_star: r.n_star,
                    assurance_at_n_star: r.assurance_at_n_star,
                    assurance_below: r.assurance_below,
                    monotone_crossing: r.monotone_crossing,
                })?;
            }
            Report::Curve(r, _) => write_curve(&mut w, &r.curve)?,
            Report::Vap(r, _) => match &r.sample_size.curve {
                Some(c) => write_curve(&mut w, c)?,
                None => {
                    return Err(CliError::Usage(
                        "the case study has no curve to write".into(),
                    ))
                }
            },
            Report::Sensitivity(r, _) => {
                #[derive(Serialize)]
                struct Row {
                    vary: &'static str,
                    phi: f64,
                    a: f64,
                    b: f64,
                    n_star: Option<u64>,
                    assurance: f64,
                }
                for rep in &r.reports {
                    let vary = rep.vary.as_str();
                    for p in &rep.points {
                        w.serialize(Row {
                            vary,
                            phi: p.phi,
                            a: p.params.a,
                            b: p.params.b,
                            n_star: p.n_star,
                            assurance: p.assurance,
                        })?;
                    }
                }
            }
            Report::Conflict(r, _) => {
                #[derive(Serialize)]
                struct Row {
                    parameter: &'static str,
                    y: usize,
                    pmf: f64,
                    observed: bool,
                }
                for c in &r.checks {
                    let parameter = c.parameter.as_str();
                    for (y, &pmf) in c.pmf.iter().enumerate() {
                        w.serialize(Row {
                            parameter,
                            y,
                            pmf,
                            observed: y as u64 == c.report.observed,
                        })?;
                    }
                }
            }
            Report::Compare(CompareResult::Grid(g), _) => {
                for row in &g.rows {
                    w.serialize(row)?;
                }
            }
            Report::Compare(CompareResult::Width(s), _) => {
                for row in &s.rows {
                    w.serialize(row)?;
                }
            }
        }
        w.into_inner().map_err(|e| CliError::Usage(e.to_string()))
    }
}

fn write_curve(w: &mut csv::Writer<Vec<u8>>, curve: &AssuranceCurve) -> Result<(), CliError> {
    for p in &curve.points {
        w.serialize(p)?;
    }
    Ok(())
}

pub fn emit(report: &Report) -> Result<(), CliError> {
    let output = &report.config().output;
    let bytes = match output.format {
        OutputFormat::Json => {
            let mut s = report.json().map_err(|e| CliError::Usage(e.to_string()))?;
            s.push('\n');
            s.into_bytes()
        }
        OutputFormat::Csv => report.csv()?,
    };
    match &output.path {
        Some(path) => std::fs::write(path, bytes).map_err(|source| CliError::Write {
            path: path.clone(),
            source,
        }),
        None => std::io::stdout()
            .write_all(&bytes)
            .map_err(|source| CliError::Write {
                path: "<stdout>".into(),
                source,
            }),
    }
}
