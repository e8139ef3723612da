use nalgebra::Cholesky;
use num_complex::Complex64;

use super::ci::{ci_rows, CiRow};
use crate::conic::{
    embed_matrix, embed_vector, re_functional, solve_socp, unembed_vector, SocpProblem,
    SolverSettings,
};
use crate::error::{Error, Result};
use crate::linalg::{polar_factor, unvectorize, vectorize, CMat, CVec, RMat, RVec};
use crate::quadforms::{
    build_filter_forms, build_phase_forms, build_waveform_forms, group_map, trace_functional,
    GroupMap, RankOneSum, ScnrForm,
};
use crate::scenario::Side;
use crate::state::{BdRisState, FilterBank, Instance, Waveform};

/// `2Re{w_ref^H Υ w}/γ_ref − γ·(w_ref^H Υ w_ref)/γ_ref²`, a lower bound on
/// `w^H Υ w / γ` that is tight at `(w_ref, γ_ref)`.
pub fn minorizer(
    w: &CVec,
    gamma: f64,
    w_ref: &CVec,
    gamma_ref: f64,
    ups: &RankOneSum,
) -> Result<f64> {
    if !(gamma_ref > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "reference γ must be positive, got {gamma_ref}"
        )));
    }
    let lin = ups.bilinear(w_ref, w).re;
    let quad = ups.quad(w_ref);
    Ok(2.0 * lin / gamma_ref - gamma * quad / (gamma_ref * gamma_ref))
}

/// Radar forms divided by `σ_R²` so that a unit-norm filter has unit noise.
fn normalized(form: ScnrForm, noise: f64) -> ScnrForm {
    ScnrForm {
        target: form.target,
        signal: form.signal.scaled(1.0 / noise),
        interference: form.interference.scaled(1.0 / noise),
        noise_identity: form.noise_identity / noise,
        noise_const: form.noise_const / noise,
    }
}

fn side_phi(inst: &Instance, k: usize, phi_t: &CMat, phi_r: &CMat) -> CMat {
    match inst.scenario.targets[k].side {
        Side::Transmissive => phi_t.clone(),
        Side::Reflective => phi_r.clone(),
    }
}

/// Maximizer of `u^H Ψ_T u / u^H(Ψ_C + σ²I)u` for a rank-one `Ψ_T = c·m m^H`:
/// `u ∝ (Ψ_C + σ²I)^{-1} m`, via the Woodbury identity on the factored `Ψ_C`.
pub fn principal_filter(form: &ScnrForm) -> CVec {
    let noise = form.noise_identity;
    let m = &form.signal.vectors[0];
    let u = if form.interference.is_empty() {
        m.clone()
    } else {
        let r = form.interference.factor() / Complex64::new(noise.sqrt(), 0.0);
        let k = r.nrows();
        let gram = CMat::identity(k, k) + &r * r.adjoint();
        let y = &r * m;
        let z = Cholesky::new(gram)
            .map(|c| c.solve(&y))
            .unwrap_or_else(|| CVec::zeros(k));
        m - r.adjoint() * z
    };
    let norm = u.norm();
    if norm > 0.0 && norm.is_finite() {
        u / Complex64::new(norm, 0.0)
    } else {
        let mut e = CVec::zeros(m.len());
        e[0] = Complex64::new(1.0, 0.0);
        e
    }
}

/// Generalized-eigenvector filters for every target.
pub fn update_filters(inst: &Instance, w: &CMat, phi_t: &CMat, phi_r: &CMat) -> FilterBank {
    let s = &inst.scenario;
    let filters = (0..s.targets.len())
        .map(|k| {
            let phi = side_phi(inst, k, phi_t, phi_r);
            let form = build_filter_forms(inst, w, &phi, k);
            let l_obs = s.window(s.targets[k].side).l_obs;
            unvectorize(&principal_filter(&form), s.n_rx, l_obs)
        })
        .collect();
    FilterBank { filters }
}

/// `Θ_g` maximizing `Re Tr(Θ^H(Λ_g + ρΦ_g))` over matrices with orthonormal
/// columns: the polar factor of `Λ_g + ρΦ_g`.
pub fn project_theta(lambda: &CMat, phi: &CMat, rho: f64) -> CMat {
    polar_factor(&(lambda + phi * Complex64::new(rho, 0.0)))
}

/// `Λ_g ← Λ_g + ρ(Φ_g − Θ_g)`.
pub fn update_duals(state: &mut BdRisState) {
    let rho = Complex64::new(state.penalty, 0.0);
    for g in 0..state.groups {
        let r = state.phi_group(g) - &state.theta[g];
        state.duals[g] += r * rho;
    }
}

/// Column range of one complex block inside the real variable vector.
#[derive(Clone, Copy)]
struct Block {
    offset: usize,
    len: usize,
}

impl Block {
    fn functional(&self, n: usize, v: &CVec) -> RVec {
        let mut row = RVec::zeros(n);
        row.rows_mut(self.offset, 2 * self.len)
            .copy_from(&re_functional(v));
        row
    }

    fn matrix(&self, n: usize, r: &CMat) -> RMat {
        let mut out = RMat::zeros(2 * r.nrows(), n);
        out.columns_mut(self.offset, 2 * self.len)
            .copy_from(&embed_matrix(r));
        out
    }

    fn extract(&self, x: &RVec) -> CVec {
        unembed_vector(&x.rows(self.offset, 2 * self.len).into_owned())
    }
}

/// SCA-linearized `SCNR ≥ e·γ_ref` at `x_ref`, written as
/// `x^H C x / D ≤ (2Re{x_ref^H S x}/γ_ref − e·x_ref^H S x_ref/γ_ref − noise) / D`,
/// where `D` is the current denominator (a scale factor only).
fn add_sca(
    p: &mut SocpProblem,
    block: Block,
    e_col: usize,
    form: &ScnrForm,
    x_ref: &CVec,
    gamma_ref: f64,
) -> Result<()> {
    let n = p.num_vars();
    let scale = 1.0 / form.denominator(x_ref).max(f64::MIN_POSITIVE);
    let a = form.signal.apply(x_ref);
    let c = form.signal.quad(x_ref);
    let mut e = block.functional(n, &a) * (2.0 / gamma_ref * scale);
    e[e_col] -= c / gamma_ref * scale;
    let d = -form.noise_const * scale;
    if form.interference.is_empty() {
        return p.add_le(-e, -d);
    }
    let r = form.interference.factor() * Complex64::new(scale.sqrt(), 0.0);
    let f = block.matrix(n, &r);
    p.add_quadratic_le(&f, &RVec::zeros(f.nrows()), &e, d)
}

fn add_ci_rows(p: &mut SocpProblem, rows: &[CiRow], lift: impl Fn(&CiRow) -> RVec) -> Result<()> {
    for row in rows {
        p.add_le(-lift(row), -row.rhs)?;
    }
    Ok(())
}

/// Result of one waveform block update.
#[derive(Debug, Clone)]
pub struct WaveformUpdate {
    pub waveform: Waveform,
    /// Reference `γ^n` of the last SCA round.
    pub gamma_ref: f64,
    /// Optimal `γ` of the last surrogate problem.
    pub gamma: f64,
}

/// Surrogate objective values are reported in linear SCNR units.
pub fn update_waveform(
    inst: &Instance,
    state: &BdRisState,
    filters: &FilterBank,
    current: &Waveform,
    enforce_ci: bool,
    sca_iters: usize,
    settings: &SolverSettings,
) -> Result<WaveformUpdate> {
    let s = &inst.scenario;
    let (nt, l) = (s.n_tx, s.code_len);
    let nw = nt * l;
    let forms: Vec<ScnrForm> = (0..s.targets.len())
        .map(|k| {
            let phi = side_phi(inst, k, &state.phi_t, &state.phi_r);
            normalized(
                build_waveform_forms(inst, &phi, &filters.filters[k], k),
                s.noise_radar,
            )
        })
        .collect();
    let rows = if enforce_ci {
        ci_rows(inst, &state.phi_t, &state.phi_r, &current.symbols)
    } else {
        Vec::new()
    };
    let block = Block { offset: 0, len: nw };
    let e_col = 2 * nw;
    let n = 2 * nw + 1;

    let mut w_ref = vectorize(&current.w_mat);
    let mut last = None;
    for _ in 0..sca_iters.max(1) {
        let gamma_ref = forms
            .iter()
            .map(|f| f.ratio(&w_ref))
            .fold(f64::INFINITY, f64::min);
        if !(gamma_ref > 0.0) || !gamma_ref.is_finite() {
            return Err(Error::Numerical(format!(
                "waveform update needs a positive reference SCNR, got {gamma_ref}"
            )));
        }
        let mut p = SocpProblem::new(n);
        let mut c = RVec::zeros(n);
        c[e_col] = -1.0;
        p.set_objective(c)?;
        for f in &forms {
            add_sca(&mut p, block, e_col, f, &w_ref, gamma_ref)?;
        }
        add_ci_rows(&mut p, &rows, |row| {
            let mut full = CVec::zeros(nw);
            full.rows_mut(row.slot * nt, nt).copy_from(&row.coeff);
            block.functional(n, &full)
        })?;
        p.add_ball(0, &RVec::zeros(2 * nw), s.power_budget.sqrt())?;
        let mut nonneg = RVec::zeros(n);
        nonneg[e_col] = -1.0;
        p.add_le(nonneg, 0.0)?;
        let sol = solve_socp(&p, settings)?.require_optimal()?;
        w_ref = block.extract(&sol.x);
        last = Some((gamma_ref, sol.x[e_col] * gamma_ref));
    }
    let (gamma_ref, gamma) = last.expect("at least one SCA round");
    Ok(WaveformUpdate {
        waveform: Waveform {
            w_mat: unvectorize(&w_ref, nt, l),
            symbols: current.symbols.clone(),
        },
        gamma_ref,
        gamma,
    })
}

/// Closest waveform (in Frobenius norm) meeting the CI constraints and the
/// power budget for the current BD-RIS matrices.
pub fn restore_ci(
    inst: &Instance,
    phi_t: &CMat,
    phi_r: &CMat,
    current: &Waveform,
    settings: &SolverSettings,
) -> Result<Waveform> {
    let s = &inst.scenario;
    let (nt, l) = (s.n_tx, s.code_len);
    let nw = nt * l;
    let rows = ci_rows(inst, phi_t, phi_r, &current.symbols);
    let block = Block { offset: 0, len: nw };
    let n = 2 * nw + 1;
    let mut p = SocpProblem::new(n);
    let mut c = RVec::zeros(n);
    c[2 * nw] = 1.0;
    p.set_objective(c.clone())?;
    let w0 = embed_vector(&vectorize(&current.w_mat));
    let mut f = RMat::zeros(2 * nw, n);
    for i in 0..2 * nw {
        f[(i, i)] = 1.0;
    }
    p.add_soc(&f, &(-&w0), &c, 0.0)?;
    add_ci_rows(&mut p, &rows, |row| {
        let mut full = CVec::zeros(nw);
        full.rows_mut(row.slot * nt, nt).copy_from(&row.coeff);
        block.functional(n, &full)
    })?;
    p.add_ball(0, &RVec::zeros(2 * nw), s.power_budget.sqrt())?;
    let sol = solve_socp(&p, settings)?.require_optimal()?;
    Ok(Waveform {
        w_mat: unvectorize(&block.extract(&sol.x), nt, l),
        symbols: current.symbols.clone(),
    })
}

/// Stacked-block coordinates that may be nonzero on one side.
fn free_entries(state: &BdRisState, map: &GroupMap, side: Side) -> Vec<usize> {
    let n = map.n_cells;
    (0..map.stacked_len())
        .filter(|&t| {
            let idx = map.index[t];
            state.active(side, idx % n) && state.active(side, idx / n)
        })
        .collect()
}

/// Block-diagonal `(top, bottom)` halves of a list of `2M × M` blocks.
fn split_blocks(blocks: &[CMat], m: usize) -> (CMat, CMat) {
    let n = blocks.len() * m;
    let mut top = CMat::zeros(n, n);
    let mut bottom = CMat::zeros(n, n);
    for (g, b) in blocks.iter().enumerate() {
        let o = g * m;
        top.view_mut((o, o), (m, m))
            .copy_from(&b.view((0, 0), (m, m)));
        bottom
            .view_mut((o, o), (m, m))
            .copy_from(&b.view((m, 0), (m, m)));
    }
    (top, bottom)
}

fn restrict(v: &CVec, free: &[usize]) -> CVec {
    CVec::from_iterator(free.len(), free.iter().map(|&t| v[t]))
}

/// Result of one BD-RIS block update.
#[derive(Debug, Clone)]
pub struct PhaseUpdate {
    pub phi_t: CMat,
    pub phi_r: CMat,
    pub eta_ref: f64,
    pub eta: f64,
}

pub fn update_phases(
    inst: &Instance,
    state: &BdRisState,
    waveform: &Waveform,
    filters: &FilterBank,
    enforce_ci: bool,
    sca_iters: usize,
    settings: &SolverSettings,
) -> Result<PhaseUpdate> {
    let s = &inst.scenario;
    let m = state.group_size();
    let map = group_map(state.groups, m)?;
    let rho = state.penalty;
    if !(rho > 0.0) {
        return Err(Error::InvalidArgument(
            "ADMM penalty must be positive".into(),
        ));
    }
    let free = [
        free_entries(state, &map, Side::Transmissive),
        free_entries(state, &map, Side::Reflective),
    ];
    let blocks = [
        Block {
            offset: 0,
            len: free[0].len(),
        },
        Block {
            offset: 2 * free[0].len(),
            len: free[1].len(),
        },
    ];
    let nphi = 2 * (free[0].len() + free[1].len());
    let (e_col, t_col) = (nphi, nphi + 1);
    let n = nphi + 2;

    // Stacked, de-diagonalized, masked forms per target.
    let forms: Vec<(usize, ScnrForm)> = (0..s.targets.len())
        .map(|k| {
            let side = s.targets[k].side.index();
            let full = normalized(
                build_phase_forms(inst, &waveform.w_mat, &filters.filters[k], k),
                s.noise_radar,
            );
            let sel = |v: &CVec| restrict(&map.select(v), &free[side]);
            let dim = free[side].len();
            let form = ScnrForm {
                target: k,
                signal: full.signal.map_vectors(dim, sel),
                interference: full.interference.map_vectors(dim, sel),
                noise_identity: 0.0,
                noise_const: full.noise_const,
            };
            (side, form)
        })
        .collect();

    // Proximal centre θ̃ − λ̃/ρ on the free coordinates.
    let (theta_t, theta_r) = split_blocks(&state.theta, m);
    let (dual_t, dual_r) = split_blocks(&state.duals, m);
    let inv_rho = Complex64::new(1.0 / rho, 0.0);
    let centre_t = vectorize(&map.stack(&(theta_t - dual_t * inv_rho)));
    let centre_r = vectorize(&map.stack(&(theta_r - dual_r * inv_rho)));
    let mut centre = RVec::zeros(nphi);
    centre
        .rows_mut(0, 2 * free[0].len())
        .copy_from(&embed_vector(&restrict(&centre_t, &free[0])));
    centre
        .rows_mut(2 * free[0].len(), 2 * free[1].len())
        .copy_from(&embed_vector(&restrict(&centre_r, &free[1])));

    // CI rows as functionals of the stacked blocks.
    let ci: Vec<(usize, RVec, f64)> = if enforce_ci {
        let sigma = s.noise_comm.sqrt();
        let gw = &inst.comm.g_mat * &waveform.w_mat;
        let omega = s.ci_half_angle();
        let mut out = Vec::new();
        for u in 0..s.users.len() {
            let side = s.users[u].side.index();
            let h = &inst.comm.h_users[u];
            let rhs = s.qos_linear(u).sqrt() * omega.sin();
            for l in 0..s.code_len {
                let base = gw.column(l) * h.adjoint();
                let rot = Complex64::from_polar(1.0, -waveform.symbols.phase(u, l)) / sigma;
                for alpha in super::ci::ci_rotations(omega) {
                    // Re{Tr(H̄Φ)} with H̄ = α e^{−j∠s} G w[l] h^H / σ_C.
                    let h_bar = &base * (alpha * rot);
                    let coeff = trace_functional(&map.h_tilde(&h_bar)?);
                    // Re{cᵀφ̃} = Re{(c̄)^H φ̃}.
                    let row = blocks[side]
                        .functional(n, &restrict(&coeff.map(|z| z.conj()), &free[side]));
                    out.push((side, row, rhs));
                }
            }
        }
        out
    } else {
        Vec::new()
    };

    // Columns of every Φ_g have unit norm on the feasible set; their convex
    // relaxation keeps the subproblem bounded.
    let mut columns = Vec::new();
    for g in 0..state.groups {
        for j in 0..m {
            let mut cols = Vec::new();
            for side in 0..2 {
                for i in 0..m {
                    let t = i + m * (g * m + j);
                    if let Ok(pos) = free[side].binary_search(&t) {
                        cols.push(blocks[side].offset + pos);
                        cols.push(blocks[side].offset + blocks[side].len + pos);
                    }
                }
            }
            if !cols.is_empty() {
                columns.push(cols);
            }
        }
    }

    let mut x_ref = [
        restrict(&vectorize(&map.stack(&state.phi_t)), &free[0]),
        restrict(&vectorize(&map.stack(&state.phi_r)), &free[1]),
    ];
    let mut last = None;
    for _ in 0..sca_iters.max(1) {
        let eta_ref = forms
            .iter()
            .map(|(side, f)| f.ratio(&x_ref[*side]))
            .fold(f64::INFINITY, f64::min);
        if !(eta_ref > 0.0) || !eta_ref.is_finite() {
            return Err(Error::Numerical(format!(
                "BD-RIS update needs a positive reference SCNR, got {eta_ref}"
            )));
        }
        let mut p = SocpProblem::new(n);
        let mut c = RVec::zeros(n);
        c[e_col] = -1.0;
        c[t_col] = rho / (2.0 * eta_ref);
        p.set_objective(c)?;
        for (side, f) in &forms {
            add_sca(&mut p, blocks[*side], e_col, f, &x_ref[*side], eta_ref)?;
        }
        for (_, row, rhs) in &ci {
            p.add_le(-row, -rhs)?;
        }
        let mut sel = RMat::zeros(nphi, n);
        for i in 0..nphi {
            sel[(i, i)] = 1.0;
        }
        let mut t_row = RVec::zeros(n);
        t_row[t_col] = 1.0;
        p.add_quadratic_le(&sel, &(-&centre), &t_row, 0.0)?;
        for cols in &columns {
            let mut f = RMat::zeros(cols.len(), n);
            for (r, &c) in cols.iter().enumerate() {
                f[(r, c)] = 1.0;
            }
            p.add_soc(&f, &RVec::zeros(cols.len()), &RVec::zeros(n), 1.0)?;
        }
        let mut nonneg = RVec::zeros(n);
        nonneg[e_col] = -1.0;
        p.add_le(nonneg, 0.0)?;
        let sol = solve_socp(&p, settings)?.require_optimal()?;
        x_ref = [blocks[0].extract(&sol.x), blocks[1].extract(&sol.x)];
        last = Some((eta_ref, sol.x[e_col] * eta_ref));
    }
    let (eta_ref, eta) = last.expect("at least one SCA round");

    let rebuild = |x: &CVec, free: &[usize]| {
        let mut full = CVec::zeros(map.stacked_len());
        for (i, &t) in free.iter().enumerate() {
            full[t] = x[i];
        }
        map.unstack(&unvectorize(&full, m, map.n_cells))
    };
    Ok(PhaseUpdate {
        phi_t: rebuild(&x_ref[0], &free[0]),
        phi_r: rebuild(&x_ref[1], &free[1]),
        eta_ref,
        eta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::complex_gaussian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_form(dim: usize, terms: usize, rng: &mut ChaCha8Rng) -> RankOneSum {
        let mut f = RankOneSum::new(dim);
        for _ in 0..terms {
            f.push(
                rng.random_range(0.1..2.0),
                complex_gaussian(dim, 1, rng).column(0).into_owned(),
            );
        }
        f
    }

    #[test]
    fn minorizer_is_tight_and_below() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ups = random_form(5, 3, &mut rng);
        let w0 = complex_gaussian(5, 1, &mut rng).column(0).into_owned();
        let at = minorizer(&w0, 0.7, &w0, 0.7, &ups).unwrap();
        assert!((at - ups.quad(&w0) / 0.7).abs() <= 1e-12 * at.abs());
        for _ in 0..200 {
            let w = complex_gaussian(5, 1, &mut rng).column(0).into_owned();
            let g = rng.random_range(0.05..4.0);
            assert!(ups.quad(&w) / g - minorizer(&w, g, &w0, 0.7, &ups).unwrap() >= -1e-10);
        }
        assert!(minorizer(&w0, 1.0, &w0, 0.0, &ups).is_err());
    }

    #[test]
    fn filter_without_interference_is_the_steering_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = complex_gaussian(6, 1, &mut rng).column(0).into_owned();
        let mut signal = RankOneSum::new(6);
        signal.push(2.0, m.clone());
        let form = ScnrForm {
            target: 0,
            signal,
            interference: RankOneSum::new(6),
            noise_identity: 0.5,
            noise_const: 0.0,
        };
        let u = principal_filter(&form);
        assert!((u.norm() - 1.0).abs() < 1e-14);
        assert!((u.dotc(&m).norm() - m.norm()).abs() < 1e-12);
    }

    #[test]
    fn filter_beats_random_filters() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut signal = RankOneSum::new(6);
        signal.push(1.0, complex_gaussian(6, 1, &mut rng).column(0).into_owned());
        let form = ScnrForm {
            target: 0,
            signal,
            interference: random_form(6, 4, &mut rng),
            noise_identity: 0.1,
            noise_const: 0.0,
        };
        let best = form.ratio(&principal_filter(&form));
        for _ in 0..2000 {
            let r = complex_gaussian(6, 1, &mut rng).column(0).into_owned();
            assert!(form.ratio(&r) <= best * (1.0 + 1e-12));
        }
    }

    #[test]
    fn projection_has_orthonormal_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for m in 1..5 {
            let theta = project_theta(
                &complex_gaussian(2 * m, m, &mut rng),
                &complex_gaussian(2 * m, m, &mut rng),
                0.8,
            );
            assert!((theta.adjoint() * &theta - CMat::identity(m, m)).norm() < 1e-12);
        }
    }

    #[test]
    fn projection_fixes_feasible_points_without_duals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = crate::linalg::random_stiefel(6, 3, &mut rng);
        let theta = project_theta(&CMat::zeros(6, 3), &q, 2.0);
        assert!((theta - q).norm() < 1e-12);
    }

    #[test]
    fn dual_step_accumulates_the_consensus_gap() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut state = crate::admm::init::init_bdris(
            2,
            2,
            crate::scenario::Architecture::GroupConnected,
            0.5,
            &mut rng,
        )
        .unwrap();
        let before = state.duals.clone();
        state.theta[1] = complex_gaussian(4, 2, &mut rng);
        update_duals(&mut state);
        assert_eq!(state.duals[0], before[0]);
        let expected =
            &before[1] + (state.phi_group(1) - &state.theta[1]) * Complex64::new(0.5, 0.0);
        assert!((&state.duals[1] - expected).norm() < 1e-15);
    }
}
