use num_complex::Complex64;
use rand::Rng;

use super::ci::ci_rows;
use crate::conic::{re_functional, solve_socp, unembed_vector, SocpProblem, SolverSettings};
use crate::error::{Error, Result};
use crate::linalg::{unvectorize, CMat, CVec, RVec};
use crate::scenario::Architecture;
use crate::state::{BdRisState, Instance, SymbolBlock, Waveform};

/// Random BD-RIS matrices satisfying the per-group orthonormality
/// constraint; the double-RIS layout keeps only its masked diagonals.
pub fn init_bdris<R: Rng + ?Sized>(
    groups: usize,
    group_size: usize,
    arch: Architecture,
    penalty: f64,
    rng: &mut R,
) -> Result<BdRisState> {
    if groups == 0 || group_size == 0 {
        return Err(Error::InvalidArgument(
            "need at least one group of one cell".into(),
        ));
    }
    let n = groups * group_size;
    if arch == Architecture::DoubleRis && (group_size != 1 || !n.is_multiple_of(2)) {
        return Err(Error::InvalidArgument(
            "double-RIS layout needs single-cell groups and even N_S".into(),
        ));
    }
    let mut state = BdRisState {
        arch,
        groups,
        phi_t: CMat::zeros(n, n),
        phi_r: CMat::zeros(n, n),
        theta: Vec::with_capacity(groups),
        duals: vec![CMat::zeros(2 * group_size, group_size); groups],
        penalty,
    };
    // Per-cell phases drawn independently of the grouping, so every
    // architecture starts from the same single-connected point.
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let phases: Vec<[f64; 2]> = (0..n)
        .map(|_| {
            [
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.0..std::f64::consts::TAU),
            ]
        })
        .collect();
    for g in 0..groups {
        let mut block = CMat::zeros(2 * group_size, group_size);
        if arch == Architecture::DoubleRis {
            block[(if g < n / 2 { 0 } else { 1 }, 0)] = Complex64::from_polar(1.0, phases[g][0]);
        } else {
            for j in 0..group_size {
                let [a, b] = phases[g * group_size + j];
                block[(j, j)] = Complex64::from_polar(half, a);
                block[(group_size + j, j)] = Complex64::from_polar(half, b);
            }
        }
        state.set_phi_group(g, &block);
        state.theta.push(block);
    }
    Ok(state)
}

/// Largest common CI margin `√Γ*` reachable within the power budget, and a
/// waveform attaining it.
pub fn init_waveform(
    inst: &Instance,
    phi_t: &CMat,
    phi_r: &CMat,
    symbols: &SymbolBlock,
    settings: &SolverSettings,
) -> Result<(Waveform, f64)> {
    let s = &inst.scenario;
    let (nt, l) = (s.n_tx, s.code_len);
    let nw = nt * l;
    let rows = ci_rows(inst, phi_t, phi_r, symbols);
    if s.power_budget <= 0.0 {
        return Ok((
            Waveform {
                w_mat: CMat::zeros(nt, l),
                symbols: symbols.clone(),
            },
            0.0,
        ));
    }
    if rows.is_empty() {
        // No users: any direction is admissible; spread the budget evenly.
        let w = CMat::from_element(
            nt,
            l,
            Complex64::new((s.power_budget / nw as f64).sqrt(), 0.0),
        );
        return Ok((
            Waveform {
                w_mat: w,
                symbols: symbols.clone(),
            },
            f64::INFINITY,
        ));
    }
    let omega_sin = s.ci_half_angle().sin();
    let n = 2 * nw + 1;
    let mut p = SocpProblem::new(n);
    let mut c = RVec::zeros(n);
    c[2 * nw] = -1.0;
    p.set_objective(c)?;
    for row in &rows {
        // −Re{g^H w[l]} + margin·sinΩ ≤ 0
        let mut full = CVec::zeros(nw);
        full.rows_mut(row.slot * nt, nt).copy_from(&row.coeff);
        let mut a = -re_functional(&full).resize_vertically(n, 0.0);
        a[2 * nw] = omega_sin;
        p.add_le(a, 0.0)?;
    }
    p.add_ball(0, &RVec::zeros(2 * nw), s.power_budget.sqrt())?;
    let sol = solve_socp(&p, settings)?.require_optimal()?;
    let w = unvectorize(&unembed_vector(&sol.x.rows(0, 2 * nw).into_owned()), nt, l);
    let margin = sol.x[2 * nw].max(0.0);
    Ok((
        Waveform {
            w_mat: w,
            symbols: symbols.clone(),
        },
        margin * margin,
    ))
}
