//! Alternating optimization of receive filters, waveform and BD-RIS
//! matrices, with an augmented-Lagrangian split of the per-group
//! orthonormality constraint.

mod ci;
mod init;
mod steps;

pub use ci::{ci_rotations, ci_rows, ci_slack, user_phi, CiRow};
pub use init::{init_bdris, init_waveform};
pub use steps::{
    minorizer, principal_filter, project_theta, restore_ci, update_duals, update_filters,
    update_phases, update_waveform, PhaseUpdate, WaveformUpdate,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conic::SolverSettings;
use crate::error::{Error, Result};
use crate::linalg::polar_factor;
use crate::quadforms::scnr_all;
use crate::scenario::Scenario;
use crate::state::{BdRisState, FilterBank, Instance, SymbolBlock, Waveform};

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Augmented-Lagrangian penalty ρ.
    pub penalty: f64,
    pub max_iters: usize,
    /// Relative change of the min-SCNR, required over three consecutive
    /// iterations.
    pub tol_scnr: f64,
    /// Bound on `max_g ‖Φ_g − Θ_g‖_F`.
    pub tol_feas: f64,
    pub sca_inner_iters: usize,
    /// Seeds the BD-RIS initialization and the symbol block.
    pub rng_seed: u64,
    /// Residual-balancing update of ρ.
    pub adaptive_penalty: bool,
    /// Waveform/filter rounds after the final projection.
    pub polish_iters: usize,
    pub socp: SolverSettings,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            penalty: 1.0,
            max_iters: 200,
            tol_scnr: 1e-4,
            tol_feas: 1e-4,
            sca_inner_iters: 1,
            rng_seed: 0,
            adaptive_penalty: false,
            polish_iters: 20,
            socp: SolverSettings::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.penalty > 0.0 && self.penalty.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "penalty must be positive, got {}",
                self.penalty
            )));
        }
        if !(self.tol_scnr > 0.0 && self.tol_feas > 0.0) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if self.sca_inner_iters == 0 || self.sca_inner_iters > 5 {
            return Err(Error::InvalidArgument(
                "sca_inner_iters must be in 1..=5".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub waveform: Waveform,
    /// Projected BD-RIS matrices (exactly feasible).
    pub bdris: BdRisState,
    pub filters: FilterBank,
    /// Per-iteration, per-target SCNR (linear).
    pub scnr_history: Vec<Vec<f64>>,
    /// Per-iteration `max_g ‖Φ_g − Θ_g‖_F`.
    pub feasibility_history: Vec<f64>,
    /// Per-iteration augmented-Lagrangian objective `η − Σ_g ρ/2‖Φ_g − Θ_g + Λ_g/ρ‖²`.
    pub objective_history: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: usize,
    /// Per-target SCNR on the returned point (linear).
    pub final_scnr: Vec<f64>,
    pub ci_slack: f64,
    /// Largest common CI threshold reachable at initialization (linear).
    pub max_gamma: f64,
}

impl SolveResult {
    pub fn min_scnr(&self) -> f64 {
        self.final_scnr
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn solve(scenario: &Scenario, config: &SolverConfig) -> Result<SolveResult> {
    let inst = Instance::new(scenario.clone())?;
    solve_instance(&inst, config)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn al_objective(state: &BdRisState, eta: f64) -> f64 {
    let rho = state.penalty;
    let pen: f64 = (0..state.groups)
        .map(|g| {
            (state.phi_group(g) - &state.theta[g]
                + &state.duals[g] / num_complex::Complex64::new(rho, 0.0))
            .norm_squared()
        })
        .sum();
    eta - 0.5 * rho * pen
}

/// One ADMM trajectory.
struct Run {
    state: BdRisState,
    waveform: Waveform,
    scnr_history: Vec<Vec<f64>>,
    feasibility_history: Vec<f64>,
    objective_history: Vec<f64>,
    status: SolveStatus,
}

impl Run {
    /// Iterate until `until` iterations in total or convergence.
    fn advance(
        &mut self,
        inst: &Instance,
        config: &SolverConfig,
        enforce_ci: bool,
        until: usize,
    ) -> Result<()> {
        while self.scnr_history.len() < until && self.status != SolveStatus::Converged {
            let state = &mut self.state;
            let filters = update_filters(inst, &self.waveform.w_mat, &state.phi_t, &state.phi_r);
            self.waveform = update_waveform(
                inst,
                state,
                &filters,
                &self.waveform,
                enforce_ci,
                config.sca_inner_iters,
                &config.socp,
            )?
            .waveform;
            let phases = update_phases(
                inst,
                state,
                &self.waveform,
                &filters,
                enforce_ci,
                config.sca_inner_iters,
                &config.socp,
            )?;
            state.phi_t = phases.phi_t;
            state.phi_r = phases.phi_r;
            let old_theta = state.theta.clone();
            for g in 0..state.groups {
                state.theta[g] = project_theta(&state.duals[g], &state.phi_group(g), state.penalty);
            }
            update_duals(state);

            let scnr = scnr_all(
                inst,
                &self.waveform.w_mat,
                &state.phi_t,
                &state.phi_r,
                &filters.filters,
            )?;
            let consensus = state.consensus_residual();
            self.objective_history
                .push(al_objective(state, min_of(&scnr)));
            self.scnr_history.push(scnr);
            self.feasibility_history.push(consensus);

            if config.adaptive_penalty {
                let dual_res = state.penalty
                    * old_theta
                        .iter()
                        .zip(&state.theta)
                        .map(|(a, b)| (a - b).norm())
                        .fold(0.0, f64::max);
                if consensus > 10.0 * dual_res {
                    state.penalty *= 2.0;
                } else if dual_res > 10.0 * consensus {
                    state.penalty /= 2.0;
                }
            }

            if self.scnr_history.len() > 3 && consensus <= config.tol_feas {
                let mins: Vec<f64> = self
                    .scnr_history
                    .iter()
                    .rev()
                    .take(4)
                    .map(|v| min_of(v))
                    .collect();
                let settled = mins.windows(2).all(|w| {
                    (w[0] - w[1]).abs() <= config.tol_scnr * w[1].abs().max(f64::MIN_POSITIVE)
                });
                if settled {
                    self.status = SolveStatus::Converged;
                }
            }
        }
        Ok(())
    }
}

pub fn solve_instance(inst: &Instance, config: &SolverConfig) -> Result<SolveResult> {
    config.validate()?;
    let s = &inst.scenario;
    s.validate()?;
    if s.targets.is_empty() {
        return Err(Error::InvalidScenario(
            "at least one target is required".into(),
        ));
    }
    let enforce_ci = !s.radar_only;
    let requested = (0..s.users.len())
        .map(|u| s.qos_linear(u))
        .fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let state = init_bdris(s.groups, s.group_size(), s.arch, config.penalty, &mut rng)?;
    let symbols = SymbolBlock::random(s.users.len(), s.code_len, s.psk_order, &mut rng);
    let (waveform, max_gamma) =
        init_waveform(inst, &state.phi_t, &state.phi_r, &symbols, &config.socp)?;
    if enforce_ci && requested > max_gamma {
        return Err(Error::QosInfeasible {
            requested,
            max_gamma,
        });
    }
    let mut run = Run {
        state,
        waveform,
        scnr_history: Vec::new(),
        feasibility_history: Vec::new(),
        objective_history: Vec::new(),
        status: SolveStatus::MaxIterations,
    };
    run.advance(inst, config, enforce_ci, config.max_iters)?;
    let Run {
        mut state,
        mut waveform,
        scnr_history,
        feasibility_history,
        objective_history,
        status,
    } = run;
    let iterations = scnr_history.len();
    let mut filters: FilterBank;

    // Hard projection of every group onto orthonormal columns.
    for g in 0..state.groups {
        let block = polar_factor(&state.phi_group(g));
        state.set_phi_group(g, &block);
        state.theta[g] = block;
    }
    filters = update_filters(inst, &waveform.w_mat, &state.phi_t, &state.phi_r);
    if enforce_ci
        && ci_slack(
            inst,
            &waveform.w_mat,
            &state.phi_t,
            &state.phi_r,
            &waveform.symbols,
        ) < 0.0
    {
        waveform = match restore_ci(inst, &state.phi_t, &state.phi_r, &waveform, &config.socp) {
            Ok(w) => w,
            Err(Error::Infeasible) => {
                return Err(Error::QosInfeasible {
                    requested,
                    max_gamma,
                })
            }
            Err(e) => return Err(e),
        };
        filters = update_filters(inst, &waveform.w_mat, &state.phi_t, &state.phi_r);
    }
    let mut best = min_of(&scnr_all(
        inst,
        &waveform.w_mat,
        &state.phi_t,
        &state.phi_r,
        &filters.filters,
    )?);
    for _ in 0..config.polish_iters {
        let next = match update_waveform(
            inst,
            &state,
            &filters,
            &waveform,
            enforce_ci,
            1,
            &config.socp,
        ) {
            Ok(u) => u.waveform,
            Err(Error::Numerical(_)) | Err(Error::MaxIterations(_)) => break,
            Err(e) => return Err(e),
        };
        let next_filters = update_filters(inst, &next.w_mat, &state.phi_t, &state.phi_r);
        let value = min_of(&scnr_all(
            inst,
            &next.w_mat,
            &state.phi_t,
            &state.phi_r,
            &next_filters.filters,
        )?);
        if value < best {
            break;
        }
        waveform = next;
        filters = next_filters;
        let gain = (value - best) / best.max(f64::MIN_POSITIVE);
        best = value;
        if gain < 1e-6 {
            break;
        }
    }

    let final_scnr = scnr_all(
        inst,
        &waveform.w_mat,
        &state.phi_t,
        &state.phi_r,
        &filters.filters,
    )?;
    let slack = ci_slack(
        inst,
        &waveform.w_mat,
        &state.phi_t,
        &state.phi_r,
        &waveform.symbols,
    );
    Ok(SolveResult {
        waveform,
        bdris: state,
        filters,
        scnr_history,
        feasibility_history,
        objective_history,
        status,
        iterations,
        final_scnr,
        ci_slack: slack,
        max_gamma,
    })
}
