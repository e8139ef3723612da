//! Parameter sweeps.
//!
//! Spec format (paths are relative to the spec file):
//!
//! ```toml
//! scenario = "desk_default.toml"
//! output = "out/gamma"
//! seeds = [0, 1, 2]
//! architectures = [{ arch = "CW-SC" }, { arch = "CW-GC", groups = 4 }, { arch = "CW-FC" }]
//! qos_db = 6.0            # optional base overrides of the scenario
//! power_w = 10.0
//!
//! [sweep]
//! kind = "gamma"          # gamma (dB) | power (W) | groups | cells | none
//! values = [0, 6, 12]
//!
//! [solver]                # optional
//! max_iters = 200
//! rho = 0.3
//! ```
//!
//! Outputs, each CSV preceded by one `#` provenance line:
//! `points.csv` (one row per architecture, value and seed), one
//! `<kind>_<arch>.csv` per architecture with the mean over successful seeds,
//! and `results/<arch>_<kind>-<value>_seed<seed>.json` per solved point.
//! Failed points get a status column entry and never stop the sweep.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bdris_dfrc::admm::{solve, SolveStatus, SolverConfig};
use bdris_dfrc::report::ResultFile;
use bdris_dfrc::{load_scenario_file, ArchTag, Error, Scenario};
use rayon::prelude::*;
use serde::Deserialize;
use sha2::{Digest, Sha256};

/// Environment variable holding the sweep worker count.
pub const WORKERS_ENV: &str = "BDRIS_WORKERS";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Gamma,
    Power,
    Groups,
    Cells,
    None,
}

impl SweepKind {
    fn name(self) -> &'static str {
        match self {
            SweepKind::Gamma => "gamma_db",
            SweepKind::Power => "power_w",
            SweepKind::Groups => "groups",
            SweepKind::Cells => "cells",
            SweepKind::None => "point",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub kind: SweepKind,
    #[serde(default)]
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchSpec {
    pub arch: String,
    pub groups: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    pub max_iters: Option<usize>,
    pub rho: Option<f64>,
    pub tol_scnr: Option<f64>,
    pub tol_feas: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: PathBuf,
    pub output: PathBuf,
    pub seeds: Vec<u64>,
    pub architectures: Vec<ArchSpec>,
    pub qos_db: Option<f64>,
    pub power_w: Option<f64>,
    pub sweep: Sweep,
    #[serde(default)]
    pub solver: SolverOverrides,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seed list is empty");
        }
        if self.architectures.is_empty() {
            bail!("architecture list is empty");
        }
        if self.sweep.kind != SweepKind::None && self.sweep.values.is_empty() {
            bail!("sweep values are empty");
        }
        if self.sweep.values.iter().any(|v| !v.is_finite()) {
            bail!("sweep values must be finite");
        }
        if matches!(self.sweep.kind, SweepKind::Groups | SweepKind::Cells)
            && self
                .sweep
                .values
                .iter()
                .any(|v| *v < 1.0 || v.fract() != 0.0)
        {
            bail!("group and cell counts must be positive integers");
        }
        Ok(())
    }

    fn values(&self) -> Vec<f64> {
        if self.sweep.kind == SweepKind::None {
            vec![0.0]
        } else {
            self.sweep.values.clone()
        }
    }

    pub fn solver_config(&self, seed: u64) -> SolverConfig {
        let mut c = SolverConfig {
            rng_seed: seed,
            ..SolverConfig::default()
        };
        let o = &self.solver;
        c.max_iters = o.max_iters.unwrap_or(c.max_iters);
        c.penalty = o.rho.unwrap_or(c.penalty);
        c.tol_scnr = o.tol_scnr.unwrap_or(c.tol_scnr);
        c.tol_feas = o.tol_feas.unwrap_or(c.tol_feas);
        c
    }
}

/// Label such as `CW-GC4` or `RADAR-ONLY-G2`.
pub fn arch_label(a: &ArchSpec) -> String {
    match a.groups {
        Some(g) => format!(
            "{}{}{}",
            a.arch,
            if a.arch.to_ascii_uppercase().contains("GC") {
                ""
            } else {
                "-G"
            },
            g
        ),
        None => a.arch.clone(),
    }
}

/// The scenario of one sweep point.
pub fn point_scenario(
    base: &Scenario,
    arch: &ArchSpec,
    kind: SweepKind,
    value: f64,
) -> Result<Scenario> {
    let mut s = base.clone();
    let mut groups = arch.groups;
    match kind {
        SweepKind::Gamma => {
            s.qos_db = value;
            for u in &mut s.users {
                u.qos_db = None;
            }
        }
        SweepKind::Power => s.power_budget = value,
        SweepKind::Groups => groups = Some(value as usize),
        SweepKind::Cells => {
            // Group-connected entries need an explicit group count here.
            s.n_cells = value as usize;
            s.groups = s.n_cells;
        }
        SweepKind::None => {}
    }
    let tag: ArchTag = arch.arch.parse()?;
    Ok(s.with_architecture(tag, groups)?)
}

#[derive(Debug, Clone)]
struct PointOutcome {
    arch: usize,
    value: f64,
    seed: u64,
    status: String,
    min_scnr_db: Option<f64>,
    iterations: Option<usize>,
    ci_slack: Option<f64>,
}

fn run_point(
    spec: &ExperimentSpec,
    base: &Scenario,
    arch: usize,
    value: f64,
    seed: u64,
    results: &Path,
) -> PointOutcome {
    let a = &spec.architectures[arch];
    let mut out = PointOutcome {
        arch,
        value,
        seed,
        status: String::new(),
        min_scnr_db: None,
        iterations: None,
        ci_slack: None,
    };
    let outcome = point_scenario(base, a, spec.sweep.kind, value)
        .map_err(|e| e.to_string())
        .and_then(|s| {
            let r = solve(&s, &spec.solver_config(seed)).map_err(|e| match e {
                Error::QosInfeasible { .. } => "infeasible".to_string(),
                other => format!("error: {other}"),
            })?;
            Ok((s, r))
        });
    match outcome {
        Ok((s, r)) => {
            let file = ResultFile::new(&s, seed, &r);
            let name = format!(
                "{}_{}-{}_seed{}.json",
                arch_label(a),
                spec.sweep.kind.name(),
                value,
                seed
            );
            if let Err(e) = file.write(results.join(name)) {
                out.status = format!("error: {e}");
                return out;
            }
            out.status = match r.status {
                SolveStatus::Converged => "converged",
                SolveStatus::MaxIterations => "max_iterations",
            }
            .to_string();
            out.min_scnr_db = Some(file.min_scnr_db);
            out.iterations = Some(r.iterations);
            out.ci_slack = Some(r.ci_slack);
        }
        Err(status) => out.status = status,
    }
    out
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// One-line provenance record: artifact version, seeds and a hash over the
/// spec text, the scenario text and the resolved solver settings.
pub fn provenance(spec: &ExperimentSpec, spec_text: &str, scenario_text: &str) -> String {
    let mut h = Sha256::new();
    h.update(spec_text.as_bytes());
    h.update(scenario_text.as_bytes());
    h.update(format!("{:?}", spec.solver_config(0)).as_bytes());
    let seeds: Vec<String> = spec.seeds.iter().map(u64::to_string).collect();
    format!(
        "# bdris {} seeds={} config_sha256={}\n",
        env!("CARGO_PKG_VERSION"),
        seeds.join(" "),
        hex(&h.finalize())
    )
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header_line: &str, rows: Vec<Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().from_writer(header_line.as_bytes().to_vec());
    for r in rows {
        w.write_record(&r)?;
    }
    let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))?;
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|n: &usize| *n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn cmd_sweep(spec_path: &Path) -> Result<()> {
    let spec_text = std::fs::read_to_string(spec_path)
        .with_context(|| format!("reading {}", spec_path.display()))?;
    let spec: ExperimentSpec =
        toml::from_str(&spec_text).with_context(|| format!("parsing {}", spec_path.display()))?;
    spec.validate()?;
    let dir = spec_path.parent().unwrap_or(Path::new("."));
    let scenario_path = dir.join(&spec.scenario);
    let scenario_text = std::fs::read_to_string(&scenario_path)
        .with_context(|| format!("reading {}", scenario_path.display()))?;
    let mut base = load_scenario_file(&scenario_path)?;
    if let Some(q) = spec.qos_db {
        base.qos_db = q;
        for u in &mut base.users {
            u.qos_db = None;
        }
    }
    if let Some(e) = spec.power_w {
        base.power_budget = e;
    }
    let out = dir.join(&spec.output);
    let results = out.join("results");
    std::fs::create_dir_all(&results).with_context(|| format!("creating {}", results.display()))?;

    let values = spec.values();
    let mut jobs = Vec::new();
    for a in 0..spec.architectures.len() {
        for &v in &values {
            for &s in &spec.seeds {
                jobs.push((a, v, s));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers())
        .build()?;
    let outcomes: Vec<PointOutcome> = pool.install(|| {
        jobs.par_iter()
            .map(|&(a, v, s)| run_point(&spec, &base, a, v, s, &results))
            .collect()
    });

    let head = provenance(&spec, &spec_text, &scenario_text);
    let kind = spec.sweep.kind.name();
    let mut rows = vec![[
        "arch",
        kind,
        "seed",
        "status",
        "min_scnr_db",
        "iterations",
        "ci_slack",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()];
    for o in &outcomes {
        rows.push(vec![
            arch_label(&spec.architectures[o.arch]),
            o.value.to_string(),
            o.seed.to_string(),
            o.status.clone(),
            fmt_opt(o.min_scnr_db),
            fmt_opt(o.iterations),
            fmt_opt(o.ci_slack),
        ]);
    }
    write_csv(&out.join("points.csv"), &head, rows)?;

    for (a, arch) in spec.architectures.iter().enumerate() {
        let mut rows = vec![[
            kind,
            "mean_min_scnr_db",
            "seeds_ok",
            "seeds_failed",
            "status",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()];
        for &v in &values {
            let pts: Vec<&PointOutcome> = outcomes
                .iter()
                .filter(|o| o.arch == a && o.value == v)
                .collect();
            let ok: Vec<f64> = pts.iter().filter_map(|o| o.min_scnr_db).collect();
            let failed = pts.len() - ok.len();
            let status = if failed == 0 {
                "ok"
            } else if ok.is_empty() {
                "failed"
            } else {
                "partial"
            };
            let mean = if ok.is_empty() {
                String::new()
            } else {
                (ok.iter().sum::<f64>() / ok.len() as f64).to_string()
            };
            rows.push(vec![
                v.to_string(),
                mean,
                ok.len().to_string(),
                failed.to_string(),
                status.to_string(),
            ]);
        }
        write_csv(
            &out.join(format!(
                "{}_{}.csv",
                spec.sweep.kind.name(),
                arch_label(arch)
            )),
            &head,
            rows,
        )?;
    }
    let failed = outcomes.iter().filter(|o| o.min_scnr_db.is_none()).count();
    eprintln!(
        "sweep finished: {} points, {} failed, output in {}",
        outcomes.len(),
        failed,
        out.display()
    );
    Ok(())
}
