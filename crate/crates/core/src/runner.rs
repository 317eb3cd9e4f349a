//! Declarative scenarios and their check batteries.
//!
//! A scenario file is a JSON object
//!
//! ```json
//! {"schema_version": 1, "name": "...", "kind": "integrability",
//!  "seed": 7, "tolerances": {"max_residual": 1e-12}, "payload": {...}}
//! ```
//!
//! `kind` selects the payload schema and the battery of checks that run. Each
//! check compares one number against a tolerance; a report passes when all of
//! its checks do. Reports are deterministic for a fixed scenario, seed and
//! tool version, apart from `runtime_ms`.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::multitime::{self, MultiTimeState, TimePath};
use crate::opalg::{self, projector_from_basis, Operator, Projector, StateVector};
use crate::partitions;
use crate::spectra;
use crate::tensorprod::{self, TensorDecomposition};
use crate::timefield::HamiltonianFamily;

pub const SCHEMA_VERSION: u64 = 1;
pub const TOOL_VERSION: &str = concat!("multitime ", env!("CARGO_PKG_VERSION"));

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_LOAD_ERROR: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Integrability,
    PathIndependence,
    DiagonalConsistency,
    PartitionFeshbach,
    TensorProduct,
    Spectrum,
}

impl ScenarioKind {
    /// Checks this kind can emit, with their default tolerances.
    pub fn default_tolerances(self) -> &'static [(&'static str, f64)] {
        use ScenarioKind::*;
        match self {
            Integrability => &[
                ("max_residual", 1e-12),
                ("max_residual_vs_expected", 1e-12),
                ("family_hermiticity", 1e-12),
            ],
            PathIndependence => &[
                ("path_residual", 1e-10),
                ("path_residual_vs_expected", 0.05),
                ("norm_preservation", 1e-9),
            ],
            DiagonalConsistency => &[
                ("diagonal_gap", 1e-9),
                ("diagonal_gap_vs_expected", 1e-9),
                ("diagonal_gap_nonzero", 1e-3),
            ],
            PartitionFeshbach => &[
                ("reassembly", 1e-12),
                ("block_commutator", 1e-12),
                ("eigen_consistency", 1e-8),
                ("levels_vs_expected", 1e-10),
                ("dirac_frenkel_bound", 1e-12),
                ("dirac_frenkel_vs_expected", 1e-12),
                ("bare_block_gap", 1e-3),
            ],
            TensorProduct => &[
                ("unitarity", 1e-12),
                ("entropy_bounds", 1e-12),
                ("free_residual", 1e-12),
                ("free_entropy", 1e-10),
                ("product_residual", 1e-12),
                ("first_order_law", 0.05),
                ("entropy_vs_expected", 1e-9),
            ],
            Spectrum => &[
                ("gate_verdict", 0.0),
                ("norm_conservation", 1e-10),
                ("norm_vs_expected", 1e-10),
                ("max_imag_vs_expected", 1e-12),
            ],
        }
    }

    /// Kinds that presume a unitary (Schrödinger-picture) evolution.
    pub fn requires_unitary_picture(self) -> bool {
        !matches!(self, ScenarioKind::Spectrum)
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variant");
        f.write_str(s.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone)]
pub struct IntegrabilityPayload {
    pub family: HamiltonianFamily,
    pub samples: Vec<Vec<f64>>,
    pub expected_max_residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct PathPayload {
    pub family: HamiltonianFamily,
    pub initial: StateVector,
    pub path_a: TimePath,
    pub path_b: TimePath,
    pub expected_residual: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DiagonalPayload {
    pub family: HamiltonianFamily,
    pub initial: StateVector,
    pub t: f64,
    pub steps: usize,
    pub expected_gap: Option<f64>,
    pub expect_nonzero: bool,
}

#[derive(Debug, Clone)]
pub struct PartitionPayload {
    pub hamiltonian: Operator,
    pub projector: Projector,
    pub expected_levels: Option<Vec<f64>>,
    pub dirac_frenkel_state: Option<StateVector>,
    pub expected_dirac_frenkel: Option<f64>,
    pub negative_control: bool,
}

#[derive(Debug, Clone)]
pub struct TensorPayload {
    pub decomposition: TensorDecomposition,
    pub psi_a: StateVector,
    pub psi_b: StateVector,
    pub t_grid: Vec<f64>,
    pub probe_t: f64,
    pub expected_entropies: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone)]
pub struct SpectrumPayload {
    pub hamiltonian: Operator,
    pub psi0: StateVector,
    pub t_grid: Vec<f64>,
    pub expect_hermitian: Option<bool>,
    pub expected_norms: Option<Vec<(f64, f64)>>,
    pub expected_max_imag: Option<f64>,
}

#[derive(Debug, Clone)]
pub enum Payload {
    Integrability(IntegrabilityPayload),
    PathIndependence(PathPayload),
    DiagonalConsistency(DiagonalPayload),
    PartitionFeshbach(PartitionPayload),
    TensorProduct(TensorPayload),
    Spectrum(SpectrumPayload),
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub kind: ScenarioKind,
    pub payload: Payload,
    pub tolerances: BTreeMap<String, f64>,
    pub seed: Option<u64>,
}

impl Scenario {
    /// Explicit tolerance if given, otherwise the kind's default.
    pub fn tolerance(&self, check: &str) -> f64 {
        self.tolerances.get(check).copied().unwrap_or_else(|| {
            self.kind
                .default_tolerances()
                .iter()
                .find(|(n, _)| *n == check)
                .map(|(_, t)| *t)
                .unwrap_or(0.0)
        })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    pub allow_non_hermitian: bool,
    /// Replaces the scenario's own seed.
    pub seed: Option<u64>,
}

pub fn load_scenario(path: &Path, options: LoadOptions) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path, options)
}

/// Parses and validates scenario text; `origin` only labels errors.
pub fn parse_scenario(text: &str, origin: &Path, options: LoadOptions) -> Result<Scenario> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::schema("<root>", "scenario must be a JSON object"))?;

    let version: u64 = field(obj, "schema_version", "schema_version")?;
    if version != SCHEMA_VERSION {
        return Err(Error::schema(
            "schema_version",
            format!("unsupported schema version {version}, expected {SCHEMA_VERSION}"),
        ));
    }
    let name: String = field(obj, "name", "name")?;
    let kind: ScenarioKind = field(obj, "kind", "kind")?;
    let seed: Option<u64> = optional(obj, "seed", "seed")?;
    let seed = options.seed.or(seed);
    let tolerances: BTreeMap<String, f64> = optional(obj, "tolerances", "tolerances")?.unwrap_or_default();
    for (key, value) in &tolerances {
        if !kind.default_tolerances().iter().any(|(n, _)| n == key) {
            return Err(Error::schema(
                format!("tolerances.{key}"),
                format!("no check named `{key}` for kind {kind}"),
            ));
        }
        if !(value.is_finite() && *value >= 0.0) {
            return Err(Error::schema(format!("tolerances.{key}"), "tolerance must be a non-negative number"));
        }
    }
    let payload_value = obj
        .get("payload")
        .ok_or_else(|| Error::schema("payload", "missing field"))?;
    let payload_obj = payload_value
        .as_object()
        .ok_or_else(|| Error::schema("payload", "must be an object"))?;
    let ctx = Ctx {
        seed: seed.unwrap_or(0),
    };
    let payload = match kind {
        ScenarioKind::Integrability => Payload::Integrability(parse_integrability(payload_obj)?),
        ScenarioKind::PathIndependence => Payload::PathIndependence(parse_path(payload_obj)?),
        ScenarioKind::DiagonalConsistency => Payload::DiagonalConsistency(parse_diagonal(payload_obj)?),
        ScenarioKind::PartitionFeshbach => Payload::PartitionFeshbach(parse_partition(payload_obj, &ctx)?),
        ScenarioKind::TensorProduct => Payload::TensorProduct(parse_tensor(payload_obj, &ctx)?),
        ScenarioKind::Spectrum => Payload::Spectrum(parse_spectrum(payload_obj, &ctx)?),
    };
    let scenario = Scenario {
        name,
        kind,
        payload,
        tolerances,
        seed,
    };
    if kind.requires_unitary_picture() && !options.allow_non_hermitian {
        enforce_gate(&scenario)?;
    }
    Ok(scenario)
}

type Obj = serde_json::Map<String, Value>;

struct Ctx {
    seed: u64,
}

fn convert<T: DeserializeOwned>(v: &Value, path: &str) -> Result<T> {
    T::deserialize(v).map_err(|e| Error::schema(path, e.to_string()))
}

fn field<T: DeserializeOwned>(obj: &Obj, key: &str, path: &str) -> Result<T> {
    let v = obj.get(key).ok_or_else(|| Error::schema(path, "missing field"))?;
    convert(v, path)
}

fn optional<T: DeserializeOwned>(obj: &Obj, key: &str, path: &str) -> Result<Option<T>> {
    match obj.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => convert(v, path).map(Some),
    }
}

fn reject_unknown(obj: &Obj, prefix: &str, known: &[&str]) -> Result<()> {
    match obj.keys().find(|k| !known.contains(&k.as_str())) {
        Some(k) => Err(Error::schema(format!("{prefix}.{k}"), "unknown field")),
        None => Ok(()),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RandomSpec {
    dim: usize,
    #[serde(default)]
    seed_offset: u64,
}

/// Explicit matrix, or `{"random_hermitian": {"dim": d, "seed_offset": k}}`.
fn matrix_at(v: &Value, path: &str, ctx: &Ctx) -> Result<Operator> {
    if let Some(spec) = v.get("random_hermitian") {
        let spec: RandomSpec = convert(spec, &format!("{path}.random_hermitian"))?;
        check_dim(spec.dim, path)?;
        return Ok(opalg::random_hermitian(spec.dim, ctx.seed.wrapping_add(spec.seed_offset)));
    }
    let op: Operator = convert(v, path)?;
    check_dim(op.dim(), path)?;
    Ok(op)
}

fn check_dim(dim: usize, path: &str) -> Result<()> {
    let max = opalg::max_dim();
    if dim == 0 || dim > max {
        return Err(Error::schema(path, format!("dimension {dim} outside 1..={max}")));
    }
    Ok(())
}

/// Explicit `[[re, im], …]`, or `{"random_state": {"dim": d, "seed_offset": k}}`.
fn state_at(v: &Value, path: &str, ctx: &Ctx) -> Result<StateVector> {
    if let Some(spec) = v.get("random_state") {
        let spec: RandomSpec = convert(spec, &format!("{path}.random_state"))?;
        check_dim(spec.dim, path)?;
        return Ok(opalg::random_state(spec.dim, ctx.seed.wrapping_add(spec.seed_offset)));
    }
    convert(v, path)
}

fn require<'a>(obj: &'a Obj, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .filter(|v| !v.is_null())
        .ok_or_else(|| Error::schema(format!("payload.{key}"), "missing field"))
}

fn check_state_dim(state: &StateVector, dim: usize, path: &str) -> Result<()> {
    if state.dim() != dim {
        return Err(Error::schema(
            path,
            format!("state has {} amplitudes, expected {dim}", state.dim()),
        ));
    }
    Ok(())
}

fn parse_integrability(p: &Obj) -> Result<IntegrabilityPayload> {
    reject_unknown(p, "payload", &["family", "samples", "expected_max_residual"])?;
    let family: HamiltonianFamily = field(p, "family", "payload.family")?;
    let samples: Vec<Vec<f64>> = field(p, "samples", "payload.samples")?;
    if samples.is_empty() {
        return Err(Error::schema("payload.samples", "at least one sample is required"));
    }
    if let Some((i, _)) = samples.iter().enumerate().find(|(_, s)| s.len() != family.n_times()) {
        return Err(Error::schema(
            format!("payload.samples[{i}]"),
            format!("expected {} times", family.n_times()),
        ));
    }
    Ok(IntegrabilityPayload {
        family,
        samples,
        expected_max_residual: optional(p, "expected_max_residual", "payload.expected_max_residual")?,
    })
}

fn parse_path(p: &Obj) -> Result<PathPayload> {
    reject_unknown(p, "payload", &["family", "initial", "path_a", "path_b", "expected_residual"])?;
    let family: HamiltonianFamily = field(p, "family", "payload.family")?;
    let initial: StateVector = field(p, "initial", "payload.initial")?;
    check_state_dim(&initial, family.dim(), "payload.initial")?;
    let path_a: TimePath = field(p, "path_a", "payload.path_a")?;
    let path_b: TimePath = field(p, "path_b", "payload.path_b")?;
    for (key, path) in [("path_a", &path_a), ("path_b", &path_b)] {
        if path.start().len() != family.n_times() {
            return Err(Error::schema(
                format!("payload.{key}.start"),
                format!("expected {} times", family.n_times()),
            ));
        }
    }
    Ok(PathPayload {
        family,
        initial,
        path_a,
        path_b,
        expected_residual: optional(p, "expected_residual", "payload.expected_residual")?,
    })
}

fn parse_diagonal(p: &Obj) -> Result<DiagonalPayload> {
    reject_unknown(p, "payload", &["family", "initial", "t", "steps", "expected_gap", "expect_nonzero"])?;
    let family: HamiltonianFamily = field(p, "family", "payload.family")?;
    let initial: StateVector = field(p, "initial", "payload.initial")?;
    check_state_dim(&initial, family.dim(), "payload.initial")?;
    let t: f64 = field(p, "t", "payload.t")?;
    let steps: usize = field(p, "steps", "payload.steps")?;
    if steps == 0 {
        return Err(Error::schema("payload.steps", "must be at least 1"));
    }
    Ok(DiagonalPayload {
        family,
        initial,
        t,
        steps,
        expected_gap: optional(p, "expected_gap", "payload.expected_gap")?,
        expect_nonzero: optional(p, "expect_nonzero", "payload.expect_nonzero")?.unwrap_or(false),
    })
}

fn parse_projector(v: &Value, dim: usize, ctx: &Ctx) -> Result<Projector> {
    let path = "payload.projector";
    let obj = v
        .as_object()
        .ok_or_else(|| Error::schema(path, "must be an object with `matrix`, `basis` or `random_rank`"))?;
    let projector = if let Some(m) = obj.get("matrix") {
        let op = matrix_at(m, &format!("{path}.matrix"), ctx)?;
        Projector::new(op).map_err(|e| Error::schema(format!("{path}.matrix"), e.to_string()))?
    } else if let Some(b) = obj.get("basis") {
        let cols: Vec<StateVector> = convert(b, &format!("{path}.basis"))?;
        projector_from_basis(&cols).map_err(|e| Error::schema(format!("{path}.basis"), e.to_string()))?
    } else if let Some(r) = obj.get("random_rank") {
        let rank: usize = convert(r, &format!("{path}.random_rank"))?;
        let offset: u64 = optional(obj, "seed_offset", &format!("{path}.seed_offset"))?.unwrap_or(1);
        opalg::random_projector(dim, rank, ctx.seed.wrapping_add(offset))
            .map_err(|e| Error::schema(format!("{path}.random_rank"), e.to_string()))?
    } else {
        return Err(Error::schema(path, "expected one of `matrix`, `basis`, `random_rank`"));
    };
    if projector.dim() != dim {
        return Err(Error::schema(
            path,
            format!("projector dimension {} does not match Hamiltonian dimension {dim}", projector.dim()),
        ));
    }
    Ok(projector)
}

fn parse_partition(p: &Obj, ctx: &Ctx) -> Result<PartitionPayload> {
    reject_unknown(
        p,
        "payload",
        &[
            "hamiltonian",
            "projector",
            "expected_levels",
            "dirac_frenkel_state",
            "expected_dirac_frenkel",
            "negative_control",
        ],
    )?;
    let hamiltonian = matrix_at(require(p, "hamiltonian")?, "payload.hamiltonian", ctx)?;
    let projector = parse_projector(require(p, "projector")?, hamiltonian.dim(), ctx)?;
    let dirac_frenkel_state = match p.get("dirac_frenkel_state") {
        None | Some(Value::Null) => None,
        Some(v) => {
            let s = state_at(v, "payload.dirac_frenkel_state", ctx)?;
            check_state_dim(&s, hamiltonian.dim(), "payload.dirac_frenkel_state")?;
            Some(s)
        }
    };
    Ok(PartitionPayload {
        hamiltonian,
        projector,
        expected_levels: optional(p, "expected_levels", "payload.expected_levels")?,
        dirac_frenkel_state,
        expected_dirac_frenkel: optional(p, "expected_dirac_frenkel", "payload.expected_dirac_frenkel")?,
        negative_control: optional(p, "negative_control", "payload.negative_control")?.unwrap_or(false),
    })
}

fn parse_tensor(p: &Obj, ctx: &Ctx) -> Result<TensorPayload> {
    reject_unknown(
        p,
        "payload",
        &["h_a", "h_b", "interaction", "psi_a", "psi_b", "t_grid", "probe_t", "expected_entropies"],
    )?;
    let h_a = matrix_at(require(p, "h_a")?, "payload.h_a", ctx)?;
    let h_b = matrix_at(require(p, "h_b")?, "payload.h_b", ctx)?;
    let interaction = match p.get("interaction") {
        None | Some(Value::Null) => None,
        Some(v) => Some(matrix_at(v, "payload.interaction", ctx)?),
    };
    let psi_a = state_at(require(p, "psi_a")?, "payload.psi_a", ctx)?;
    let psi_b = state_at(require(p, "psi_b")?, "payload.psi_b", ctx)?;
    check_state_dim(&psi_a, h_a.dim(), "payload.psi_a")?;
    check_state_dim(&psi_b, h_b.dim(), "payload.psi_b")?;
    let t_grid: Vec<f64> = field(p, "t_grid", "payload.t_grid")?;
    let probe_t: f64 = optional(p, "probe_t", "payload.probe_t")?.unwrap_or(1e-3);
    if !(probe_t.is_finite() && probe_t > 0.0) {
        return Err(Error::schema("payload.probe_t", "must be a positive number"));
    }
    let decomposition = TensorDecomposition::new(h_a, h_b, interaction)
        .map_err(|e| Error::schema("payload.interaction", e.to_string()))?;
    Ok(TensorPayload {
        decomposition,
        psi_a,
        psi_b,
        t_grid,
        probe_t,
        expected_entropies: optional(p, "expected_entropies", "payload.expected_entropies")?,
    })
}

fn parse_spectrum(p: &Obj, ctx: &Ctx) -> Result<SpectrumPayload> {
    reject_unknown(
        p,
        "payload",
        &["hamiltonian", "psi0", "t_grid", "expect_hermitian", "expected_norms", "expected_max_imag"],
    )?;
    let hamiltonian = matrix_at(require(p, "hamiltonian")?, "payload.hamiltonian", ctx)?;
    let psi0 = state_at(require(p, "psi0")?, "payload.psi0", ctx)?;
    check_state_dim(&psi0, hamiltonian.dim(), "payload.psi0")?;
    Ok(SpectrumPayload {
        hamiltonian,
        psi0,
        t_grid: field(p, "t_grid", "payload.t_grid")?,
        expect_hermitian: optional(p, "expect_hermitian", "payload.expect_hermitian")?,
        expected_norms: optional(p, "expected_norms", "payload.expected_norms")?,
        expected_max_imag: optional(p, "expected_max_imag", "payload.expected_max_imag")?,
    })
}

fn gate(op: &Operator, name: String) -> Result<()> {
    if spectra::passes_gate(op) {
        Ok(())
    } else {
        Err(Error::GateRefusal {
            matrix: name,
            defect: spectra::hermiticity_defect(op),
        })
    }
}

fn gate_family(family: &HamiltonianFamily) -> Result<()> {
    for (j, member) in family.members().iter().enumerate() {
        for (k, (_, op)) in member.terms().iter().enumerate() {
            gate(op, format!("payload.family.members[{j}].terms[{k}].op"))?;
        }
    }
    Ok(())
}

fn enforce_gate(s: &Scenario) -> Result<()> {
    match &s.payload {
        Payload::Integrability(p) => gate_family(&p.family),
        Payload::PathIndependence(p) => gate_family(&p.family),
        Payload::DiagonalConsistency(p) => gate_family(&p.family),
        Payload::PartitionFeshbach(p) => gate(&p.hamiltonian, "payload.hamiltonian".into()),
        Payload::TensorProduct(p) => {
            let d = &p.decomposition;
            gate(d.h_a(), "payload.h_a".into())?;
            gate(d.h_b(), "payload.h_b".into())?;
            match d.interaction() {
                Some(v) => gate(v, "payload.interaction".into()),
                None => Ok(()),
            }
        }
        Payload::Spectrum(_) => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Comparison {
    AtMost,
    Above,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// `null` in JSON when the check could not be computed.
    #[serde(serialize_with = "ser_real", deserialize_with = "de_real")]
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

fn ser_real<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_real<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl Check {
    fn compare(name: &str, value: f64, tolerance: f64, cmp: Comparison, detail: String) -> Check {
        let passed = match cmp {
            Comparison::AtMost => value <= tolerance,
            Comparison::Above => value > tolerance,
        };
        let op = match cmp {
            Comparison::AtMost => "<=",
            Comparison::Above => ">",
        };
        let detail = if detail.is_empty() {
            format!("requires value {op} tolerance")
        } else {
            format!("{detail}; requires value {op} tolerance")
        };
        Check {
            name: name.into(),
            value,
            tolerance,
            passed,
            detail,
        }
    }

    fn failed(name: &str, tolerance: f64, err: &Error) -> Check {
        Check {
            name: name.into(),
            value: f64::NAN,
            tolerance,
            passed: false,
            detail: format!("error: {err}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scenario_name: String,
    pub checks: Vec<Check>,
    pub overall_passed: bool,
    pub runtime_ms: u64,
    pub tool_version: String,
}

impl Report {
    /// JSON with `runtime_ms` zeroed, for reproducibility comparisons.
    pub fn canonical_json(&self) -> String {
        let mut r = self.clone();
        r.runtime_ms = 0;
        serde_json::to_string_pretty(&r).expect("report serializes")
    }
}

struct Battery<'a> {
    scenario: &'a Scenario,
    checks: Vec<Check>,
}

impl<'a> Battery<'a> {
    fn new(scenario: &'a Scenario) -> Self {
        Battery {
            scenario,
            checks: Vec::new(),
        }
    }

    fn at_most(&mut self, name: &str, value: f64, detail: String) {
        let tol = self.scenario.tolerance(name);
        self.checks.push(Check::compare(name, value, tol, Comparison::AtMost, detail));
    }

    fn above(&mut self, name: &str, value: f64, detail: String) {
        let tol = self.scenario.tolerance(name);
        self.checks.push(Check::compare(name, value, tol, Comparison::Above, detail));
    }

    /// Relative deviation from a nonzero expectation, absolute otherwise.
    fn matches(&mut self, name: &str, value: f64, expected: f64) {
        let dev = if expected != 0.0 {
            (value - expected).abs() / expected.abs()
        } else {
            value.abs()
        };
        let kind = if expected != 0.0 { "relative" } else { "absolute" };
        self.at_most(name, dev, format!("computed {value:e}, expected {expected:e} ({kind} deviation)"));
    }

    /// Absolute deviation.
    fn matches_abs(&mut self, name: &str, value: f64, expected: f64) {
        self.at_most(
            name,
            (value - expected).abs(),
            format!("computed {value:e}, expected {expected:e} (absolute deviation)"),
        );
    }

    fn error(&mut self, name: &str, err: &Error) {
        let tol = self.scenario.tolerance(name);
        self.checks.push(Check::failed(name, tol, err));
    }
}

/// Runs the scenario's battery. Numerical errors become failed checks.
pub fn run_scenario(s: &Scenario) -> Report {
    let start = Instant::now();
    let mut battery = Battery::new(s);
    match &s.payload {
        Payload::Integrability(p) => run_integrability(&mut battery, p),
        Payload::PathIndependence(p) => run_path(&mut battery, p),
        Payload::DiagonalConsistency(p) => run_diagonal(&mut battery, p),
        Payload::PartitionFeshbach(p) => run_partition(&mut battery, p),
        Payload::TensorProduct(p) => run_tensor(&mut battery, p),
        Payload::Spectrum(p) => run_spectrum(&mut battery, p),
    }
    let checks = battery.checks;
    Report {
        scenario_name: s.name.clone(),
        overall_passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
        checks,
        runtime_ms: start.elapsed().as_millis() as u64,
        tool_version: TOOL_VERSION.into(),
    }
}

fn run_integrability(b: &mut Battery, p: &IntegrabilityPayload) {
    if p.family.hermitian_required() {
        match p.family.max_hermitian_defect(&p.samples) {
            Ok(d) => b.at_most("family_hermiticity", d, "largest relative Hermiticity defect over samples".into()),
            Err(e) => b.error("family_hermiticity", &e),
        }
    }
    let name = if p.expected_max_residual.is_some() {
        "max_residual_vs_expected"
    } else {
        "max_residual"
    };
    match multitime::integrability_report(&p.family, &p.samples) {
        Ok(rep) => {
            let at = match &rep.argmax {
                Some(loc) => format!("at (j={}, k={}, t={:?})", loc.j, loc.k, loc.times),
                None => "no pairs to check".into(),
            };
            match p.expected_max_residual {
                Some(e) => b.matches(name, rep.max_residual, e),
                None => b.at_most(name, rep.max_residual, format!("max residual {at}")),
            }
        }
        Err(e) => b.error(name, &e),
    }
}

fn run_path(b: &mut Battery, p: &PathPayload) {
    let initial = MultiTimeState::new(p.initial.clone(), p.path_a.start().to_vec());
    let name = if p.expected_residual.is_some() {
        "path_residual_vs_expected"
    } else {
        "path_residual"
    };
    match multitime::path_dependence_residual(&p.family, &initial, &p.path_a, &p.path_b) {
        Ok(r) => match p.expected_residual {
            Some(e) => b.matches(name, r, e),
            None => b.at_most(name, r, format!("‖φ_a − φ_b‖₂ = {r:e}")),
        },
        Err(e) => b.error(name, &e),
    }
    if p.family.hermitian_required() {
        let n0 = p.initial.norm();
        let mut worst = 0.0_f64;
        for path in [&p.path_a, &p.path_b] {
            match multitime::propagate(&p.family, &initial, path) {
                Ok(out) => worst = worst.max((out.state.norm() - n0).abs() / path.length().max(1.0)),
                Err(e) => return b.error("norm_preservation", &e),
            }
        }
        b.at_most("norm_preservation", worst, "norm drift per unit path length".into());
    }
}

fn run_diagonal(b: &mut Battery, p: &DiagonalPayload) {
    let gap = match multitime::diagonal_consistency_gap(&p.family, &p.initial, p.t, p.steps) {
        Ok(g) => g,
        Err(e) => {
            let name = match (p.expected_gap, p.expect_nonzero) {
                (Some(_), _) => "diagonal_gap_vs_expected",
                (None, true) => "diagonal_gap_nonzero",
                _ => "diagonal_gap",
            };
            return b.error(name, &e);
        }
    };
    if let Some(e) = p.expected_gap {
        b.matches_abs("diagonal_gap_vs_expected", gap, e);
    }
    if p.expect_nonzero {
        b.above("diagonal_gap_nonzero", gap, format!("gap {gap:e}"));
    }
    if p.expected_gap.is_none() && !p.expect_nonzero {
        b.at_most("diagonal_gap", gap, format!("‖ψ_full − φ_multi‖₂ at t = {}", p.t));
    }
}

fn run_partition(b: &mut Battery, p: &PartitionPayload) {
    let blocks = match partitions::decompose(&p.hamiltonian, &p.projector) {
        Ok(bl) => bl,
        Err(e) => return b.error("reassembly", &e),
    };
    b.at_most("reassembly", blocks.reassembly_error(), "relative Frobenius error".into());

    let h2 = p.hamiltonian.frobenius_norm().powi(2);
    let comm = partitions::block_commutator_residual(&blocks);
    let scaled = if h2 > 0.0 { comm / h2 } else { comm };
    b.at_most("block_commutator", scaled, format!("‖[H_AA, H_BB]‖_F = {comm:e}, scaled by ‖H‖_F²"));

    match partitions::feshbach_eigenconsistency(&p.hamiltonian, &p.projector) {
        Ok(entries) => {
            let residuals: Vec<f64> = entries.iter().filter_map(|e| e.residual()).collect();
            let singular = entries.len() - residuals.len();
            let worst = residuals.iter().copied().fold(0.0, f64::max);
            b.at_most(
                "eigen_consistency",
                worst,
                format!("{} fixed points checked, {singular} at singular resolvent", residuals.len()),
            );
            if let Some(levels) = &p.expected_levels {
                let found: Vec<f64> = entries
                    .iter()
                    .filter(|e| e.residual().is_some())
                    .map(|e| e.energy)
                    .collect();
                let dev = levels
                    .iter()
                    .map(|l| found.iter().map(|f| (f - l).abs()).fold(f64::INFINITY, f64::min))
                    .fold(0.0, f64::max);
                b.at_most("levels_vs_expected", dev, format!("fixed points {found:?}"));
            }
        }
        Err(e) => b.error("eigen_consistency", &e),
    }

    if let Some(raw) = &p.dirac_frenkel_state {
        // Only the component inside the subspace is a valid trial state.
        let psi = &match p.projector.operator().apply(raw) {
            Ok(v) => v,
            Err(e) => return b.error("dirac_frenkel_bound", &e),
        };
        match partitions::dirac_frenkel_error(&p.hamiltonian, &p.projector, psi) {
            Ok(err) => match p.expected_dirac_frenkel {
                Some(e) => b.matches_abs("dirac_frenkel_vs_expected", err, e),
                None => match partitions::subspace_leakage(&p.hamiltonian, &p.projector) {
                    Ok(leak) => {
                        let excess = (err - leak * psi.norm()).max(0.0);
                        b.at_most(
                            "dirac_frenkel_bound",
                            excess,
                            format!("error {err:e} vs ‖(1−P)HP‖_F·‖ψ‖ = {:e}", leak * psi.norm()),
                        );
                    }
                    Err(e) => b.error("dirac_frenkel_bound", &e),
                },
            },
            Err(e) => {
                let name = if p.expected_dirac_frenkel.is_some() {
                    "dirac_frenkel_vs_expected"
                } else {
                    "dirac_frenkel_bound"
                };
                b.error(name, &e);
            }
        }
    }

    if p.negative_control {
        match partitions::bare_block_spectral_gap(&p.hamiltonian, &p.projector) {
            Ok(gap) => b.above("bare_block_gap", gap, "distance from spec(H_AA) to the nearest level of H".into()),
            Err(e) => b.error("bare_block_gap", &e),
        }
    }
}

fn run_tensor(b: &mut Battery, p: &TensorPayload) {
    let dec = &p.decomposition;
    match tensorprod::interaction_entanglement_sweep(dec, &p.psi_a, &p.psi_b, &p.t_grid) {
        Ok(points) => {
            let unitarity = points.iter().map(|q| (q.norm - 1.0).abs()).fold(0.0, f64::max);
            b.at_most("unitarity", unitarity, "max |‖exp(−iHt)ψ₀‖₂ − 1| over grid".into());
            let cap = (dec.d_a().min(dec.d_b()) as f64).ln();
            let violation = points
                .iter()
                .map(|q| (-q.entropy).max(q.entropy - cap).max(0.0))
                .fold(0.0, f64::max);
            b.at_most("entropy_bounds", violation, format!("0 <= S <= ln {}", dec.d_a().min(dec.d_b())));
            let interacting = dec.interaction().is_some_and(|v| v.frobenius_norm() > 0.0);
            if !interacting {
                let worst = points.iter().map(|q| q.residual).fold(0.0, f64::max);
                b.at_most("product_residual", worst, "max product-ansatz residual over grid".into());
            }
            if let Some(expected) = &p.expected_entropies {
                let mut dev = 0.0_f64;
                for &(t, s) in expected {
                    match tensorprod::interaction_entanglement_sweep(dec, &p.psi_a, &p.psi_b, &[t]) {
                        Ok(pt) => dev = dev.max((pt[0].entropy - s).abs()),
                        Err(e) => return b.error("entropy_vs_expected", &e),
                    }
                }
                b.at_most("entropy_vs_expected", dev, "max absolute entropy deviation".into());
            }
        }
        Err(e) => b.error("unitarity", &e),
    }

    match tensorprod::interaction_entanglement_sweep(&dec.without_interaction(), &p.psi_a, &p.psi_b, &p.t_grid) {
        Ok(points) => {
            let res = points.iter().map(|q| q.residual).fold(0.0, f64::max);
            let ent = points.iter().map(|q| q.entropy).fold(0.0, f64::max);
            b.at_most("free_residual", res, "interaction removed: product ansatz is exact".into());
            b.at_most("free_entropy", ent, "interaction removed: no entanglement".into());
        }
        Err(e) => b.error("free_residual", &e),
    }

    if let Some(v) = dec.interaction().filter(|v| v.frobenius_norm() > 0.0) {
        let psi0 = p.psi_a.tensor(&p.psi_b);
        let predicted = v.apply(&psi0).map(|w| w.norm());
        let measured = tensorprod::product_ansatz_residual(dec, &p.psi_a, &p.psi_b, p.probe_t);
        match (predicted, measured) {
            (Ok(pred), Ok(res)) => b.matches("first_order_law", res / p.probe_t, pred),
            (Err(e), _) | (_, Err(e)) => b.error("first_order_law", &e),
        }
    }
}

fn run_spectrum(b: &mut Battery, p: &SpectrumPayload) {
    let decision = match spectra::schroedinger_picture_gate(&p.hamiltonian) {
        Ok(d) => d,
        Err(e) => return b.error("gate_verdict", &e),
    };
    if let Some(expect) = p.expect_hermitian {
        let mismatch = if decision.admits_unitary_picture == expect { 0.0 } else { 1.0 };
        b.at_most(
            "gate_verdict",
            mismatch,
            format!(
                "defect {:e}, admits unitary picture: {}, complex spectrum: {}",
                decision.report.hermiticity_defect, decision.admits_unitary_picture, decision.complex_spectrum_detected
            ),
        );
    }
    if let Some(e) = p.expected_max_imag {
        b.matches_abs("max_imag_vs_expected", decision.report.max_imag, e);
    }
    match spectra::norm_decay_curve(&p.hamiltonian, &p.psi0, &p.t_grid) {
        Ok(curve) => {
            if decision.admits_unitary_picture {
                let drift = curve.iter().map(|(_, n)| (n - 1.0).abs()).fold(0.0, f64::max);
                b.at_most("norm_conservation", drift, "max |‖ψ(t)‖² − 1| over grid".into());
            }
            if let Some(expected) = &p.expected_norms {
                let mut dev = 0.0_f64;
                for &(t, n) in expected {
                    match spectra::norm_decay_curve(&p.hamiltonian, &p.psi0, &[t]) {
                        Ok(pt) => dev = dev.max((pt[0].1 - n).abs()),
                        Err(e) => return b.error("norm_vs_expected", &e),
                    }
                }
                b.at_most("norm_vs_expected", dev, "max absolute squared-norm deviation".into());
            }
        }
        Err(e) => b.error("norm_conservation", &e),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(format!("unknown report format `{other}` (json|csv)")),
        }
    }
}

pub fn render_report(r: &Report, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(r).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["name", "value", "tolerance", "passed"]).expect("in-memory write");
            for c in &r.checks {
                w.write_record([
                    c.name.clone(),
                    format!("{:e}", c.value),
                    format!("{:e}", c.tolerance),
                    c.passed.to_string(),
                ])
                .expect("in-memory write");
            }
            String::from_utf8(w.into_inner().expect("flush to memory")).expect("utf-8")
        }
    }
}

/// Pretty JSON array of reports, as printed by the suite command.
pub fn render_reports(reports: &[Report]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}

/// Writes the report to `destination`, or standard output when `None`.
pub fn emit_report(r: &Report, format: ReportFormat, destination: Option<&Path>) -> Result<()> {
    let text = render_report(r, format);
    match destination {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        }),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteOutcome {
    pub reports: Vec<Report>,
    pub exit_code: i32,
    pub warnings: Vec<String>,
}

enum SuiteItem {
    Ran(Report),
    LoadFailed(Report),
}

fn failure_report(name: String, check: &str, detail: String) -> Report {
    Report {
        scenario_name: name,
        checks: vec![Check {
            name: check.into(),
            value: f64::NAN,
            tolerance: 0.0,
            passed: false,
            detail,
        }],
        overall_passed: false,
        runtime_ms: 0,
        tool_version: TOOL_VERSION.into(),
    }
}

fn panic_message(p: &(dyn std::any::Any + Send)) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

fn run_file(path: &Path, options: LoadOptions) -> SuiteItem {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let scenario = match catch_unwind(|| load_scenario(path, options)) {
        Ok(Ok(s)) => s,
        Ok(Err(e)) => return SuiteItem::LoadFailed(failure_report(stem, "load", e.to_string())),
        Err(p) => return SuiteItem::LoadFailed(failure_report(stem, "load", format!("panic: {}", panic_message(&*p)))),
    };
    match catch_unwind(AssertUnwindSafe(|| run_scenario(&scenario))) {
        Ok(r) => SuiteItem::Ran(r),
        Err(p) => SuiteItem::Ran(failure_report(scenario.name, "run", format!("panic: {}", panic_message(&*p)))),
    }
}

/// Scenario files (`*.json`) directly inside `dir`, sorted by path.
pub fn scenario_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut files = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| Error::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_file() && path.extension().is_some_and(|e| e == "json") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Runs every scenario in `dir` with up to `parallelism` workers.
///
/// Exit code: 0 when every scenario passes, 1 when a check failed, 2 when a
/// file could not be loaded. Reports are ordered by scenario name.
pub fn run_suite(dir: &Path, parallelism: usize, options: LoadOptions) -> Result<SuiteOutcome> {
    if parallelism == 0 {
        return Err(Error::InvalidArgument("parallelism must be at least 1".into()));
    }
    let files = scenario_files(dir)?;
    let mut warnings = Vec::new();
    if files.is_empty() {
        let w = format!("no scenario files found in {}", dir.display());
        log::warn!("{w}");
        warnings.push(w);
    }
    let items = run_files(&files, parallelism, options);

    let mut load_error = false;
    let mut reports: Vec<Report> = items
        .into_iter()
        .map(|item| match item {
            SuiteItem::Ran(r) => r,
            SuiteItem::LoadFailed(r) => {
                load_error = true;
                r
            }
        })
        .collect();
    reports.sort_by(|a, b| a.scenario_name.cmp(&b.scenario_name));
    let exit_code = if load_error {
        EXIT_LOAD_ERROR
    } else if reports.iter().all(|r| r.overall_passed) {
        EXIT_PASS
    } else {
        EXIT_CHECK_FAILED
    };
    Ok(SuiteOutcome {
        reports,
        exit_code,
        warnings,
    })
}

#[cfg(feature = "parallel")]
fn run_files(files: &[PathBuf], parallelism: usize, options: LoadOptions) -> Vec<SuiteItem> {
    use rayon::prelude::*;
    if parallelism == 1 {
        return files.iter().map(|f| run_file(f, options)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(parallelism).build() {
        Ok(pool) => pool.install(|| files.par_iter().map(|f| run_file(f, options)).collect()),
        Err(e) => {
            log::warn!("falling back to sequential suite run: {e}");
            files.iter().map(|f| run_file(f, options)).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn run_files(files: &[PathBuf], _parallelism: usize, options: LoadOptions) -> Vec<SuiteItem> {
    files.iter().map(|f| run_file(f, options)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Scenario> {
        parse_scenario(text, Path::new("inline.json"), LoadOptions::default())
    }

    const COMMUTING: &str = r#"{
        "schema_version": 1, "name": "commuting", "kind": "integrability",
        "payload": {
            "family": {"n_times": 2, "members": [
                {"n_times": 2, "dim": 2, "terms": [{"coeff": {"kind": "constant", "params": [1.0]},
                    "op": {"dim": 2, "entries": [[[1,0],[0,0]],[[0,0],[-1,0]]]}}]},
                {"n_times": 2, "dim": 2, "terms": [{"coeff": {"kind": "sine", "var": 1, "params": [1.0, 2.0]},
                    "op": {"dim": 2, "entries": [[[2,0],[0,0]],[[0,0],[0,0]]]}}]}
            ]},
            "samples": [[0.0, 0.0], [0.3, 1.1]]
        }
    }"#;

    #[test]
    fn commuting_family_passes() {
        let s = parse(COMMUTING).unwrap();
        assert_eq!(s.kind, ScenarioKind::Integrability);
        let r = run_scenario(&s);
        assert!(r.overall_passed, "{r:#?}");
        let max = r.checks.iter().find(|c| c.name == "max_residual").unwrap();
        assert_eq!(max.value, 0.0);
    }

    #[test]
    fn parse_error_has_location() {
        let err = parse("{\n  \"schema_version\": 1,\n  oops\n}").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_and_kind_are_validated() {
        let v2 = COMMUTING.replace("\"schema_version\": 1", "\"schema_version\": 2");
        assert!(matches!(parse(&v2).unwrap_err(), Error::Schema { field, .. } if field == "schema_version"));
        let bad_kind = COMMUTING.replace("\"integrability\"", "\"teleportation\"");
        assert!(matches!(parse(&bad_kind).unwrap_err(), Error::Schema { field, .. } if field == "kind"));
    }

    #[test]
    fn unknown_tolerance_key_is_rejected() {
        let text = COMMUTING.replace("\"kind\": \"integrability\",", "\"kind\": \"integrability\", \"tolerances\": {\"unitarity\": 1.0},");
        assert!(matches!(parse(&text).unwrap_err(), Error::Schema { field, .. } if field == "tolerances.unitarity"));
    }

    #[test]
    fn non_square_matrix_is_schema_error() {
        let text = r#"{"schema_version": 1, "name": "x", "kind": "spectrum", "payload": {
            "hamiltonian": {"dim": 3, "entries": [[[1,0],[0,0]],[[0,0],[1,0]],[[0,0],[0,0]]]},
            "psi0": [[1,0],[0,0],[0,0]], "t_grid": [0.0]}}"#;
        match parse(text).unwrap_err() {
            Error::Schema { field, message } => {
                assert_eq!(field, "payload.hamiltonian");
                assert!(message.contains("entries shape"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tolerance_override_applies() {
        let text = COMMUTING.replace("\"kind\": \"integrability\",", "\"kind\": \"integrability\", \"tolerances\": {\"max_residual\": 0.5},");
        let s = parse(&text).unwrap();
        assert_eq!(s.tolerance("max_residual"), 0.5);
        assert_eq!(s.tolerance("family_hermiticity"), 1e-12);
    }

    #[test]
    fn csv_has_header_plus_one_row_per_check() {
        let r = run_scenario(&parse(COMMUTING).unwrap());
        let csv = render_report(&r, ReportFormat::Csv);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "name,value,tolerance,passed");
        assert_eq!(lines.len(), r.checks.len() + 1);
    }

    #[test]
    fn failed_check_value_serializes_as_null() {
        let r = failure_report("x".into(), "load", "boom".into());
        let text = render_report(&r, ReportFormat::Json);
        assert!(text.contains("\"value\": null"));
        let back: Report = serde_json::from_str(&text).unwrap();
        assert!(back.checks[0].value.is_nan());
    }
}
