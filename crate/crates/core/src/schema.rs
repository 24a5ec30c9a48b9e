//! JSON schemas for configurations, requests and results.

use schemars::schema::RootSchema;
use schemars::schema_for;

use crate::config::RunConfig;
use crate::run::{
    CompareResult, ConflictResult, CurveRequest, CurveResult, Envelope, SampleSizeResult,
    SensitivityResult, VapCaseStudy,
};

/// Health probe body.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize, schemars::JsonSchema)]
pub struct Health {
    pub status: String,
    pub engine_version: String,
}

/// Every published schema with its file stem.
pub fn all() -> Vec<(&'static str, RootSchema)> {
    vec![
        ("run-config", schema_for!(RunConfig)),
        ("curve-request", schema_for!(CurveRequest)),
        ("sample-size-result", schema_for!(SampleSizeResult)),
        ("curve-result", schema_for!(CurveResult)),
        ("sensitivity-result", schema_for!(SensitivityResult)),
        ("conflict-result", schema_for!(ConflictResult)),
        ("compare-result", schema_for!(CompareResult)),
        ("vap-case-study", schema_for!(VapCaseStudy)),
        (
            "sample-size-response",
            schema_for!(Envelope<SampleSizeResult>),
        ),
        ("curve-response", schema_for!(Envelope<CurveResult>)),
        (
            "sensitivity-response",
            schema_for!(Envelope<SensitivityResult>),
        ),
        ("conflict-response", schema_for!(Envelope<ConflictResult>)),
        ("compare-response", schema_for!(Envelope<CompareResult>)),
        ("health", schema_for!(Health)),
    ]
}

/// Pretty-printed schema text as stored in the repository.
pub fn render(schema: &RootSchema) -> String {
    let mut s = serde_json::to_string_pretty(schema).expect("schema serializes");
    s.push('\n');
    s
}
