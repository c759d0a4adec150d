//! Experiment configuration: one JSON schema shared by every subcommand.
//!
//! Subcommands are sugar — each one assembles an `ExperimentConfig` with a
//! single operation, so anything the CLI can do is also expressible as a
//! suite file. Unknown keys are rejected everywhere (externally tagged
//! enums, `deny_unknown_fields` on every struct).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub suite: String,
    #[serde(default)]
    pub seed: u64,
    /// Chart shared by operations that don't build their own; omitted means
    /// a Euclidean box [-2, 2]^n sized to each operation's field.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartDescriptor>,
    /// Named fields referencable from operations. Operation field names fall
    /// back to the built-in catalog when not declared here.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldDescriptor>,
    pub operations: Vec<OperationDescriptor>,
    /// Report path; the --report flag overrides it. Excluded from the config
    /// hash: it is output plumbing, not part of the experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    /// Worker bound knob, recorded in provenance. Every kernel in this
    /// workspace is single-threaded, so values above 1 change nothing yet.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize {
    1
}

impl ExperimentConfig {
    /// Canonical serialization for hashing: output plumbing stripped, keys
    /// sorted (serde_json maps are ordered), compact encoding.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        let value = serde_json::to_value(&c).expect("config serializes");
        serde_json::to_string(&value).expect("value serializes")
    }

    pub fn config_hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_json().as_bytes()))
    }
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartDescriptor {
    Euclidean(EuclideanChart),
    StereographicSphere(StereographicChart),
    PoincareBall(PoincareChart),
    ConformallyFlat(ConformalChart),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EuclideanChart {
    pub dimension: usize,
    /// Per-axis [lo, hi]; omitted means [-2, 2] on every axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StereographicChart {
    pub radius: f64,
    pub dimension: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoincareChart {
    pub curvature: f64,
    pub dimension: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConformalChart {
    /// Conformal factor φ as an expression in x1..xn.
    pub phi: String,
    pub dimension: usize,
    pub extent: Vec<[f64; 2]>,
    /// Finite-difference step for the factor's derivatives.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldDescriptor {
    Expr(ExprField),
    Named(NamedField),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprField {
    pub name: String,
    pub expr: String,
    /// Defaults to the chart dimension (or 3 without a chart).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedField {
    pub name: String,
    /// Built-in catalog id (example_4_2, norm_sq, ...).
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum OperationDescriptor {
    EquilibriumTest(EquilibriumTestOp),
    FibrewiseAgree(FibrewiseAgreeOp),
    Fibers(FibersOp),
    Isometry(IsometryOp),
    Arp(ArpOp),
    Fluid(FluidOp),
    StaticVacuum(StaticVacuumOp),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    #[default]
    Pass,
    Fail,
}

fn d_samples() -> usize {
    2000
}
fn d_tol() -> f64 {
    1e-6
}
fn d_eps_grad() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquilibriumTestOp {
    pub field: String,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_tol")]
    pub tol: f64,
    /// Gradient floor used when building the sample cloud.
    #[serde(default = "d_eps_grad")]
    pub eps_grad: f64,
    #[serde(default)]
    pub expect: Expectation,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FibrewiseAgreeOp {
    pub field_a: String,
    pub field_b: String,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_eps_grad")]
    pub eps_grad: f64,
    #[serde(default)]
    pub expect: Expectation,
}

fn d_grid() -> usize {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FibersOp {
    pub field: String,
    pub levels: Vec<f64>,
    #[serde(default = "d_grid")]
    pub grid: usize,
    #[serde(default)]
    pub classify: bool,
    /// Required class for every unclipped component: sphere | plane |
    /// cylinder | constant-principal-curvatures. Implies classification.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_class: Option<String>,
    /// Bound on the per-fiber curvature coefficient of variation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cv: Option<f64>,
    /// Directory for OFF meshes plus JSON sidecars, one pair per component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub export: Option<String>,
}

fn d_iso_samples() -> usize {
    800
}
fn d_iso_tol() -> f64 {
    1e-8
}
fn d_iso_eps() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IsometryOp {
    /// Generator coefficient vectors over the fixed basis: n translations
    /// ∂_1..∂_n, then rotations (i<j) in lexicographic order.
    pub generators: Vec<Vec<f64>>,
    #[serde(default = "d_dim3")]
    pub dimension: usize,
    /// Profile name: t | t^3+t | t^3 | e^t | log(t+2).
    pub profile: String,
    #[serde(default = "d_iso_samples")]
    pub samples: usize,
    #[serde(default = "d_iso_tol")]
    pub tol: f64,
    #[serde(default = "d_iso_eps")]
    pub eps_grad: f64,
    #[serde(default)]
    pub expect: Expectation,
}

fn d_dim3() -> usize {
    3
}
fn d_order() -> usize {
    8
}
fn d_half_width() -> f64 {
    0.5
}
fn d_count() -> usize {
    2001
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArpExpect {
    CandidateAnalytic,
    FlatDefect,
    FlatDefectNegative,
    FlatDefectPositive,
    Inconclusive,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArpOp {
    pub field: String,
    pub point: Vec<f64>,
    #[serde(default = "d_order")]
    pub order: usize,
    #[serde(default = "d_half_width")]
    pub half_width: f64,
    #[serde(default = "d_count")]
    pub count: usize,
    /// Without an expectation the operation passes on any definite verdict.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<ArpExpect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryKind {
    Spherical,
    Cylindrical,
    Planar,
}

impl SymmetryKind {
    pub fn q(self) -> u32 {
        match self {
            SymmetryKind::Spherical => 2,
            SymmetryKind::Cylindrical => 1,
            SymmetryKind::Planar => 0,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "spherical" => Some(Self::Spherical),
            "cylindrical" => Some(Self::Cylindrical),
            "planar" => Some(Self::Planar),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluidExpect {
    #[default]
    Pass,
    UnboundedSupport,
}

fn d_one() -> f64 {
    1.0
}
fn d_fluid_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluidOp {
    pub index: f64,
    pub symmetry: SymmetryKind,
    #[serde(default = "d_one")]
    pub rho_c: f64,
    /// EOS constant; read as the central pressure when index = 0.
    #[serde(default = "d_one", rename = "K")]
    pub k: f64,
    #[serde(default = "d_fluid_tol")]
    pub tolerance: f64,
    /// Run the full free-boundary verification on a grid.
    #[serde(default)]
    pub verify: bool,
    #[serde(default = "d_grid")]
    pub grid: usize,
    /// Chart half-width in units of the boundary radius (verify only).
    #[serde(default = "d_box_scale")]
    pub box_scale: f64,
    /// CSV export path for the (r, V, rho, p) table.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default)]
    pub expect: FluidExpect,
}

fn d_box_scale() -> f64 {
    1.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VacuumMetric {
    #[default]
    Isotropic,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VacuumExpect {
    #[default]
    Pass,
    Flag,
}

fn d_mass() -> f64 {
    0.5
}
fn d_vac_grid() -> usize {
    10
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaticVacuumOp {
    #[serde(default = "d_mass")]
    pub mass: f64,
    #[serde(default)]
    pub metric: VacuumMetric,
    /// Box per axis; omitted means [0.8, 1.6]^3 (excludes the horizon shell).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extent: Option<Vec<[f64; 2]>>,
    #[serde(default = "d_vac_grid")]
    pub grid: usize,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default)]
    pub expect: VacuumExpect,
}
