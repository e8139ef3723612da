//! Result serialization.
//!
//! Convergence CSV columns: `iteration`, `scnr_db_0 … scnr_db_{K−1}`,
//! `min_scnr_db`, `feasibility`, `objective`. Iterations start at 1.
//!
//! Result files are JSON; complex matrices are stored column-major as
//! separate real and imaginary arrays.

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::admm::{SolveResult, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::{lin_to_db, CMat};
use crate::scenario::Scenario;
use crate::state::{Instance, SymbolBlock, Waveform};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&CMat> for ComplexMatrix {
    fn from(m: &CMat) -> Self {
        ComplexMatrix {
            rows: m.nrows(),
            cols: m.ncols(),
            re: m.iter().map(|z| z.re).collect(),
            im: m.iter().map(|z| z.im).collect(),
        }
    }
}

impl ComplexMatrix {
    pub fn to_cmat(&self) -> Result<CMat> {
        let n = self.rows * self.cols;
        if self.re.len() != n || self.im.len() != n {
            return Err(Error::Dimension(format!(
                "stored {}x{} matrix has {} real and {} imaginary entries",
                self.rows,
                self.cols,
                self.re.len(),
                self.im.len()
            )));
        }
        Ok(CMat::from_iterator(
            self.rows,
            self.cols,
            self.re
                .iter()
                .zip(&self.im)
                .map(|(r, i)| Complex64::new(*r, *i)),
        ))
    }
}

/// Everything needed to re-evaluate a solution: the resolved scenario, the
/// solver seed and the returned variables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultFile {
    pub format_version: u32,
    pub scenario: Scenario,
    pub seed: u64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub final_scnr_db: Vec<f64>,
    pub min_scnr_db: f64,
    pub ci_slack: f64,
    pub unitarity_residual: f64,
    pub energy: f64,
    pub waveform: ComplexMatrix,
    pub symbols: Vec<Vec<usize>>,
    pub phi_t: ComplexMatrix,
    pub phi_r: ComplexMatrix,
    pub filters: Vec<ComplexMatrix>,
    pub scnr_history: Vec<Vec<f64>>,
    pub feasibility_history: Vec<f64>,
    pub objective_history: Vec<f64>,
}

impl ResultFile {
    pub fn new(scenario: &Scenario, seed: u64, r: &SolveResult) -> Self {
        ResultFile {
            format_version: FORMAT_VERSION,
            scenario: scenario.clone(),
            seed,
            status: r.status,
            iterations: r.iterations,
            final_scnr_db: r.final_scnr.iter().map(|x| lin_to_db(*x)).collect(),
            min_scnr_db: lin_to_db(r.min_scnr()),
            ci_slack: r.ci_slack,
            unitarity_residual: r.bdris.unitarity_residual(),
            energy: r.waveform.energy(),
            waveform: (&r.waveform.w_mat).into(),
            symbols: r.waveform.symbols.indices.clone(),
            phi_t: (&r.bdris.phi_t).into(),
            phi_r: (&r.bdris.phi_r).into(),
            filters: r.filters.filters.iter().map(ComplexMatrix::from).collect(),
            scnr_history: r.scnr_history.clone(),
            feasibility_history: r.feasibility_history.clone(),
            objective_history: r.objective_history.clone(),
        }
    }

    pub fn convergence_csv(&self) -> String {
        convergence_csv(
            &self.scnr_history,
            &self.feasibility_history,
            &self.objective_history,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: ResultFile = serde_json::from_str(text)?;
        if r.format_version != FORMAT_VERSION {
            return Err(Error::Schema(format!(
                "unsupported result format version {}",
                r.format_version
            )));
        }
        Ok(r)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    /// Rebuilt instance and stored variables.
    pub fn load(&self) -> Result<LoadedResult> {
        let inst = Instance::new(self.scenario.clone())?;
        let w_mat = self.waveform.to_cmat()?;
        let waveform = Waveform {
            w_mat,
            symbols: SymbolBlock {
                psk_order: self.scenario.psk_order,
                indices: self.symbols.clone(),
            },
        };
        Ok(LoadedResult {
            inst,
            waveform,
            phi_t: self.phi_t.to_cmat()?,
            phi_r: self.phi_r.to_cmat()?,
            filters: self
                .filters
                .iter()
                .map(ComplexMatrix::to_cmat)
                .collect::<Result<_>>()?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct LoadedResult {
    pub inst: Instance,
    pub waveform: Waveform,
    pub phi_t: CMat,
    pub phi_r: CMat,
    pub filters: Vec<CMat>,
}

pub fn convergence_csv(
    scnr_history: &[Vec<f64>],
    feasibility: &[f64],
    objective: &[f64],
) -> String {
    let k = scnr_history.first().map_or(0, Vec::len);
    let mut out = String::from("iteration");
    for t in 0..k {
        let _ = write!(out, ",scnr_db_{t}");
    }
    out.push_str(",min_scnr_db,feasibility,objective\n");
    for (i, scnr) in scnr_history.iter().enumerate() {
        let _ = write!(out, "{}", i + 1);
        for x in scnr {
            let _ = write!(out, ",{}", lin_to_db(*x));
        }
        let min = scnr.iter().copied().fold(f64::INFINITY, f64::min);
        let _ = writeln!(
            out,
            ",{},{},{}",
            lin_to_db(min),
            feasibility[i],
            objective[i]
        );
    }
    out
}
