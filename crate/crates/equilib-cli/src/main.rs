//! `equilib` — command-line driver. Every subcommand assembles an
//! `ExperimentConfig` (the same schema suite files use) and runs it through
//! the shared suite runner, so CLI invocations and suite files are
//! interchangeable. Exit codes: 0 all verdicts pass, 1 verdict failure or
//! operation error, 2 configuration error.

mod config;
mod run;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Deserialize;

use config::*;
use run::{is_builtin_field, run_suite, ConfigError, SuiteRun};

const SUITE_THEOREM_6_2: &str = include_str!("../suites/theorem_6_2.json");
const SUITE_ARP_CALIBRATION: &str = include_str!("../suites/arp_calibration.json");

#[derive(Parser)]
#[command(
    name = "equilib",
    version,
    about = "Equilibrium level-set partitions: rank tests, fiber geometry, \
             isometry checks, trace diagnostics, and static fluid bodies"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Rank-based equilibrium test of one scalar field.
    Test {
        /// Field: declared-descriptor JSON file, catalog id, or expression.
        #[arg(long)]
        field: String,
        /// Chart descriptor JSON file (default: Euclidean box [-2,2]^n).
        #[arg(long)]
        chart: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        samples: usize,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Expect the field to fail the test.
        #[arg(long)]
        expect_fail: bool,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Extract level sets, optionally classify and export meshes.
    Fibers {
        #[arg(long)]
        field: String,
        #[arg(long)]
        chart: Option<PathBuf>,
        /// Comma-separated level values.
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        #[arg(long)]
        classify: bool,
        /// Require this class on every unclipped component.
        #[arg(long)]
        expect_class: Option<String>,
        /// Directory for OFF meshes and JSON sidecars.
        #[arg(long)]
        export: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Verify a generator set closes, induce its invariant field, check it.
    Isometry {
        /// JSON file: {"dimension": n, "generators": [[..], ..]} over the
        /// basis (translations 1..n, then rotations i<j lexicographic).
        #[arg(long)]
        gens: PathBuf,
        #[arg(long, default_value = "t")]
        profile: String,
        /// Run the induced-field residual check (closure always runs).
        #[arg(long)]
        check: bool,
        #[arg(long, default_value_t = 800)]
        samples: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Trace a field across a fiber and run the analyticity diagnostic.
    Arp {
        #[arg(long)]
        field: String,
        #[arg(long)]
        chart: Option<PathBuf>,
        /// Boundary point, comma-separated coordinates.
        #[arg(long, value_delimiter = ',', required = true)]
        point: Vec<f64>,
        #[arg(long, default_value_t = 8)]
        order: usize,
        #[arg(long, default_value_t = 0.5)]
        half_width: f64,
        #[arg(long, default_value_t = 2001)]
        count: usize,
        /// Expected verdict: candidate_analytic | flat_defect |
        /// flat_defect_negative | flat_defect_positive | inconclusive.
        #[arg(long)]
        expect: Option<String>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Solve the static self-gravitating fluid free-boundary problem.
    Fluid {
        /// Polytropic index m.
        #[arg(long)]
        index: f64,
        #[arg(long, value_parser = ["spherical", "cylindrical", "planar"])]
        symmetry: String,
        #[arg(long = "rho-c", default_value_t = 1.0)]
        rho_c: f64,
        /// EOS constant (central pressure when index = 0).
        #[arg(long = "K", default_value_t = 1.0)]
        k: f64,
        /// Run the full free-boundary verification.
        #[arg(long)]
        verify: bool,
        #[arg(long, default_value_t = 64)]
        grid: usize,
        /// CSV export path for the (r, V, rho, p) table.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Expect the unbounded-support error instead of a solution.
        #[arg(long)]
        expect_unbounded: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run a bundled suite (theorem_6_2, arp_calibration) or a config file.
    Suite {
        /// Bundled suite name or path to an ExperimentConfig JSON file.
        config: String,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = Cli::parse();
    let mut print_detail = false;
    let built = match cli.cmd {
        Cmd::Test { field, chart, samples, tol, expect_fail, report, seed } => {
            build_single(
                "cli:test",
                seed,
                chart.as_deref(),
                &field,
                report,
                |name| {
                    OperationDescriptor::EquilibriumTest(EquilibriumTestOp {
                        field: name,
                        samples,
                        tol,
                        eps_grad: 1e-3,
                        expect: if expect_fail { Expectation::Fail } else { Expectation::Pass },
                    })
                },
            )
        }
        Cmd::Fibers {
            field,
            chart,
            levels,
            grid,
            classify,
            expect_class,
            export,
            report,
            seed,
        } => build_single("cli:fibers", seed, chart.as_deref(), &field, report, |name| {
            OperationDescriptor::Fibers(FibersOp {
                field: name,
                levels: levels.clone(),
                grid,
                classify,
                expect_class: expect_class.clone(),
                max_cv: None,
                export: export.as_ref().map(|p| p.display().to_string()),
            })
        }),
        Cmd::Isometry { gens, profile, check, samples, tol, report, seed } => {
            build_isometry(gens, profile, check, samples, tol, report, seed)
        }
        Cmd::Arp { field, chart, point, order, half_width, count, expect, report } => {
            print_detail = true;
            let expect = match expect.as_deref() {
                None => None,
                Some("candidate_analytic") => Some(ArpExpect::CandidateAnalytic),
                Some("flat_defect") => Some(ArpExpect::FlatDefect),
                Some("flat_defect_negative") => Some(ArpExpect::FlatDefectNegative),
                Some("flat_defect_positive") => Some(ArpExpect::FlatDefectPositive),
                Some("inconclusive") => Some(ArpExpect::Inconclusive),
                Some(other) => {
                    eprintln!("config error: unknown expected verdict {other:?}");
                    return 2;
                }
            };
            build_single("cli:arp", 0, chart.as_deref(), &field, report, |name| {
                OperationDescriptor::Arp(ArpOp {
                    field: name,
                    point: point.clone(),
                    order,
                    half_width,
                    count,
                    expect,
                })
            })
        }
        Cmd::Fluid {
            index,
            symmetry,
            rho_c,
            k,
            verify,
            grid,
            csv,
            expect_unbounded,
            report,
        } => {
            let symmetry = SymmetryKind::parse(&symmetry).expect("clap-validated");
            Ok(ExperimentConfig {
                suite: "cli:fluid".into(),
                seed: 0,
                chart: None,
                fields: Vec::new(),
                operations: vec![OperationDescriptor::Fluid(FluidOp {
                    index,
                    symmetry,
                    rho_c,
                    k,
                    tolerance: 1e-10,
                    verify,
                    grid,
                    box_scale: 1.5,
                    csv: csv.as_ref().map(|p| p.display().to_string()),
                    expect: if expect_unbounded {
                        FluidExpect::UnboundedSupport
                    } else {
                        FluidExpect::Pass
                    },
                })],
                output: report.as_ref().map(|p| p.display().to_string()),
                workers: 1,
            })
        }
        Cmd::Suite { config, report, seed } => {
            let text = match bundled_suite(&config) {
                Some(text) => text.to_string(),
                None => match std::fs::read_to_string(&config) {
                    Ok(t) => t,
                    Err(e) => {
                        eprintln!("config error: cannot read {config:?}: {e}");
                        return 2;
                    }
                },
            };
            match serde_json::from_str::<ExperimentConfig>(&text) {
                Ok(mut cfg) => {
                    if let Some(s) = seed {
                        cfg.seed = s;
                    }
                    if let Some(r) = report {
                        cfg.output = Some(r.display().to_string());
                    }
                    Ok(cfg)
                }
                Err(e) => Err(ConfigError(format!("invalid suite config: {e}"))),
            }
        }
    };

    let cfg = match built {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };

    match run_suite(&cfg) {
        Ok(SuiteRun { report, exit_code, lines }) => {
            for line in &lines {
                println!("{line}");
            }
            if print_detail {
                if let Some(detail) = report
                    .pointer("/operations/0/detail")
                    .filter(|d| !d.is_null())
                {
                    println!("{}", serde_json::to_string_pretty(detail).unwrap());
                }
            }
            if let Some(path) = &cfg.output {
                let text = serde_json::to_string_pretty(&report).unwrap() + "\n";
                if let Err(e) = std::fs::write(path, text) {
                    eprintln!("config error: cannot write report {path:?}: {e}");
                    return 2;
                }
                println!("report written to {path}");
            }
            exit_code
        }
        Err(e) => {
            eprintln!("config error: {e}");
            2
        }
    }
}

fn bundled_suite(name: &str) -> Option<&'static str> {
    match name {
        "theorem_6_2" => Some(SUITE_THEOREM_6_2),
        "arp_calibration" => Some(SUITE_ARP_CALIBRATION),
        _ => None,
    }
}

/// Shared assembly for single-field subcommands: resolve the --field flag
/// (descriptor file, catalog id, or inline expression), optional --chart
/// file, one operation.
fn build_single(
    suite: &str,
    seed: u64,
    chart: Option<&Path>,
    field_flag: &str,
    report: Option<PathBuf>,
    make_op: impl FnOnce(String) -> OperationDescriptor,
) -> Result<ExperimentConfig, ConfigError> {
    let chart = chart.map(read_chart).transpose()?;
    let (fields, name) = field_from_flag(field_flag)?;
    Ok(ExperimentConfig {
        suite: suite.into(),
        seed,
        chart,
        fields,
        operations: vec![make_op(name)],
        output: report.as_ref().map(|p| p.display().to_string()),
        workers: 1,
    })
}

fn read_chart(path: &Path) -> Result<ChartDescriptor, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("cannot read chart {path:?}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| ConfigError(format!("invalid chart descriptor {path:?}: {e}")))
}

/// --field resolution order: existing file → descriptor JSON; catalog id;
/// otherwise treated as an expression in x1..xn.
fn field_from_flag(flag: &str) -> Result<(Vec<FieldDescriptor>, String), ConfigError> {
    if Path::new(flag).is_file() {
        let text = std::fs::read_to_string(flag)
            .map_err(|e| ConfigError(format!("cannot read field {flag:?}: {e}")))?;
        let d: FieldDescriptor = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("invalid field descriptor {flag:?}: {e}")))?;
        let name = match &d {
            FieldDescriptor::Expr(e) => e.name.clone(),
            FieldDescriptor::Named(n) => n.name.clone(),
        };
        return Ok((vec![d], name));
    }
    if is_builtin_field(flag) {
        return Ok((Vec::new(), flag.to_string()));
    }
    let d = FieldDescriptor::Expr(ExprField {
        name: "field".into(),
        expr: flag.to_string(),
        dimension: None,
        step: None,
    });
    Ok((vec![d], "field".into()))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GensFile {
    dimension: usize,
    generators: Vec<Vec<f64>>,
}

fn build_isometry(
    gens: PathBuf,
    profile: String,
    check: bool,
    samples: usize,
    tol: f64,
    report: Option<PathBuf>,
    seed: u64,
) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(&gens)
        .map_err(|e| ConfigError(format!("cannot read generators {gens:?}: {e}")))?;
    let parsed: GensFile = serde_json::from_str(&text)
        .map_err(|e| ConfigError(format!("invalid generator file {gens:?}: {e}")))?;
    // without --check the closure/Jacobi verification still runs but with a
    // minimal cloud, keeping the invocation fast
    let samples = if check { samples } else { 50 };
    Ok(ExperimentConfig {
        suite: "cli:isometry".into(),
        seed,
        chart: None,
        fields: Vec::new(),
        operations: vec![OperationDescriptor::Isometry(IsometryOp {
            generators: parsed.generators,
            dimension: parsed.dimension,
            profile,
            samples,
            tol,
            eps_grad: 1e-4,
            expect: Expectation::Pass,
        })],
        output: report.as_ref().map(|p| p.display().to_string()),
        workers: 1,
    })
}
