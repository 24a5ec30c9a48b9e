use std::path::PathBuf;

use assure_dx_core::config::set_path;
use assure_dx_core::par::Execution;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

/// Bayesian assurance sample sizes for diagnostic accuracy studies.
#[derive(Debug, Parser)]
#[command(name = "assure-dx", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimum sample size reaching the assurance target.
    SampleSize(Common),
    /// Assurance at every sample size from 1 to nt_max.
    Curve(Common),
    /// Sample size and assurance ranges over a prior neighbourhood.
    Sensitivity(Common),
    /// Prior predictive checks against an observed 2x2 table.
    Conflict(Common),
    /// Frequentist and assurance sizes over a scenario grid, or a width study.
    Compare(Common),
    /// Worked case studies.
    #[command(subcommand)]
    CaseStudy(CaseStudy),
}

#[derive(Debug, Subcommand)]
pub enum CaseStudy {
    /// Ventilator-associated pneumonia biomarker study.
    Vap(Common),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MeasureArg {
    Sens,
    Spec,
    Both,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SidedArg {
    Two,
    Lower,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SlotArg {
    Sens,
    Spec,
    Prev,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Grid,
    Width,
}

/// Flags accepted by every command. Each one overrides the matching key of
/// the configuration file.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON configuration with sections priors, design, study, output.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Simulation seed (study.seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; standard output when absent (output.path).
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Output format (output.format).
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Accuracy measure to size for (design.measure).
    #[arg(long, value_enum)]
    pub measure: Option<MeasureArg>,
    /// Sensitivity interval width target (design.width).
    #[arg(long)]
    pub width: Option<f64>,
    /// Specificity interval width target (design.width_spec).
    #[arg(long)]
    pub width_spec: Option<f64>,
    /// Interval level is 1 - alpha (design.alpha).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Required assurance (design.assurance).
    #[arg(long)]
    pub assurance: Option<f64>,
    /// Two-sided equal-tailed or one-sided lower interval (design.sided).
    #[arg(long, value_enum)]
    pub sided: Option<SidedArg>,
    /// Largest sample size a search visits (study.cap).
    #[arg(long)]
    pub cap: Option<u64>,
    /// Largest sample size on the assurance curve (study.nt_max).
    #[arg(long)]
    pub nt_max: Option<u64>,
    /// Prior to perturb in a sensitivity scan; repeatable (study.sensitivity.vary).
    #[arg(long, value_enum)]
    pub vary: Vec<SlotArg>,
    /// Contour distance for the sensitivity scan (study.sensitivity.epsilon).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Number of contour angles (study.sensitivity.n_angles).
    #[arg(long)]
    pub angles: Option<usize>,
    /// Comparison to run (study.compare.mode).
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Run on the calling thread only.
    #[arg(long)]
    pub sequential: bool,
}

impl Common {
    pub fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        }
    }

    /// Writes every given flag into the configuration document.
    pub fn overlay(&self, doc: &mut Value) {
        let mut set = |path: &str, v: Option<Value>| {
            if let Some(v) = v {
                set_path(doc, path, v);
            }
        };
        set("study.seed", self.seed.map(|v| json!(v)));
        set(
            "output.path",
            self.out.as_ref().map(|p| json!(p.display().to_string())),
        );
        set(
            "output.format",
            self.format.map(|f| {
                json!(match f {
                    FormatArg::Json => "json",
                    FormatArg::Csv => "csv",
                })
            }),
        );
        set(
            "design.measure",
            self.measure.map(|m| {
                json!(match m {
                    MeasureArg::Sens => "sensitivity",
                    MeasureArg::Spec => "specificity",
                    MeasureArg::Both => "both",
                })
            }),
        );
        set("design.width", self.width.map(|v| json!(v)));
        set("design.width_spec", self.width_spec.map(|v| json!(v)));
        set("design.alpha", self.alpha.map(|v| json!(v)));
        set("design.assurance", self.assurance.map(|v| json!(v)));
        set(
            "design.sided",
            self.sided.map(|s| {
                json!(match s {
                    SidedArg::Two => "two_sided",
                    SidedArg::Lower => "one_sided_lower",
                })
            }),
        );
        set("study.cap", self.cap.map(|v| json!(v)));
        set("study.nt_max", self.nt_max.map(|v| json!(v)));
        if !self.vary.is_empty() {
            let slots: Vec<&str> = self
                .vary
                .iter()
                .map(|s| match s {
                    SlotArg::Sens => "sens",
                    SlotArg::Spec => "spec",
                    SlotArg::Prev => "prev",
                })
                .collect();
            set("study.sensitivity.vary", Some(json!(slots)));
        }
        set("study.sensitivity.epsilon", self.epsilon.map(|v| json!(v)));
        set("study.sensitivity.n_angles", self.angles.map(|v| json!(v)));
        set(
            "study.compare.mode",
            self.mode.map(|m| {
                json!(match m {
                    ModeArg::Grid => "grid",
                    ModeArg::Width => "width",
                })
            }),
        );
    }
}
