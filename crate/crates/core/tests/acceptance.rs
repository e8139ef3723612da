//! Acceptance suite. Runs every criterion at desk scale and prints one
//! PASS/FAIL line each. Failures are reported, not fatal, unless
//! `BDRIS_ACCEPTANCE_STRICT=1` is set, in which case the process exits 1.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::time::Instant;

use bdris_dfrc::admm::{
    minorizer, principal_filter, project_theta, solve, SolveResult, SolveStatus, SolverConfig,
};
use bdris_dfrc::conic::{solve_socp, ConeBlock, SocpProblem, SolverSettings};
use bdris_dfrc::linalg::{
    complex_gaussian, db_to_lin, lin_to_db, random_stiefel, vectorize, CMat, RMat, RVec,
};
use bdris_dfrc::metrics::{
    angle_grid, detection_probability, marcum_q1, simulate_ber, space_range_beampattern,
    space_range_power,
};
use bdris_dfrc::quadforms::{
    build_filter_forms, build_phase_forms, build_waveform_forms, group_map, scnr_trace,
    trace_functional, RankOneSum,
};
use bdris_dfrc::report::convergence_csv;
use bdris_dfrc::scenario::DESK_DEFAULT;
use bdris_dfrc::{load_scenario, ArchTag, Instance, Scenario, Side};
use nalgebra::{Cholesky, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 3] = [0, 1, 2];
const GAMMAS: [f64; 3] = [0.0, 6.0, 12.0];
const POWERS: [f64; 3] = [1.0, 10.0, 100.0];
const GROUPS: [usize; 4] = [1, 2, 4, 8];
/// QoS threshold of the power sweep; 10 dB is infeasible at 1 W on the
/// desk instance.
const POWER_SWEEP_GAMMA: f64 = 6.0;

type Outcome = Result<String, String>;
type Check = fn() -> Outcome;
type Solved = (Scenario, std::result::Result<SolveResult, String>);

fn desk() -> Scenario {
    load_scenario(DESK_DEFAULT).expect("desk scenario")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

// ---------------------------------------------------------------------------
// Solve cache

#[derive(Clone, Copy)]
struct Key {
    arch: u8,
    groups: usize,
    gamma: f64,
    power: f64,
    seed: u64,
}

fn tag_of(code: u8) -> ArchTag {
    match code {
        0 => ArchTag::Gc,
        1 => ArchTag::RadarOnly,
        _ => unreachable!(),
    }
}

struct Runs {
    cache: RefCell<BTreeMap<String, Solved>>,
    solve_time: RefCell<f64>,
}

impl Runs {
    fn get(&self, key: Key) -> Solved {
        let name = format!(
            "{}:{}:{}:{}:{}",
            key.arch, key.groups, key.gamma, key.power, key.seed
        );
        if let Some(v) = self.cache.borrow().get(&name) {
            return v.clone();
        }
        let mut s = desk();
        s.qos_db = key.gamma;
        s.power_budget = key.power;
        let s = s
            .with_architecture(tag_of(key.arch), Some(key.groups))
            .expect("architecture");
        let cfg = SolverConfig {
            rng_seed: key.seed,
            ..SolverConfig::default()
        };
        let t = Instant::now();
        let r = solve(&s, &cfg).map_err(|e| e.to_string());
        *self.solve_time.borrow_mut() += t.elapsed().as_secs_f64();
        self.cache.borrow_mut().insert(name, (s.clone(), r.clone()));
        (s, r)
    }

    fn dfrc(&self, groups: usize, gamma: f64, power: f64, seed: u64) -> Solved {
        self.get(Key {
            arch: 0,
            groups,
            gamma,
            power,
            seed,
        })
    }

    fn min_db(
        &self,
        groups: usize,
        gamma: f64,
        power: f64,
        seed: u64,
    ) -> std::result::Result<f64, String> {
        self.dfrc(groups, gamma, power, seed)
            .1
            .map(|r| lin_to_db(r.min_scnr()))
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt_db(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

// ---------------------------------------------------------------------------
// Random objects

fn random_block_diag<R: Rng>(groups: usize, m: usize, rng: &mut R) -> CMat {
    let gm = group_map(groups, m).unwrap();
    gm.unstack(&complex_gaussian(m, groups * m, rng))
}

fn random_filter<R: Rng>(inst: &Instance, k: usize, rng: &mut R) -> CMat {
    let s = &inst.scenario;
    complex_gaussian(s.n_rx, s.window(s.targets[k].side).l_obs, rng)
}

fn random_form<R: Rng>(dim: usize, terms: usize, rng: &mut R) -> RankOneSum {
    let mut f = RankOneSum::new(dim);
    for _ in 0..terms {
        f.push(
            rng.random_range(0.1..3.0),
            complex_gaussian(dim, 1, rng).column(0).into_owned(),
        );
    }
    f
}

// ---------------------------------------------------------------------------
// 1. SCNR forms agree

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let base = desk();
    let archs = [
        (ArchTag::Sc, None),
        (ArchTag::Gc, Some(2)),
        (ArchTag::Gc, Some(4)),
        (ArchTag::Fc, None),
    ];
    let mut worst = 0.0f64;
    for i in 0..50 {
        let (tag, g) = archs[i % archs.len()];
        let s = base.with_architecture(tag, g).unwrap();
        let (groups, m) = (s.groups, s.group_size());
        let inst = Instance::new(s).unwrap();
        let w = complex_gaussian(inst.scenario.n_tx, inst.scenario.code_len, &mut rng);
        let phi = random_block_diag(groups, m, &mut rng);
        for k in 0..inst.scenario.targets.len() {
            let u = random_filter(&inst, k, &mut rng);
            let trace = scnr_trace(&inst, &w, &phi, &u, k).map_err(|e| e.to_string())?;
            let f = build_filter_forms(&inst, &w, &phi, k).ratio(&vectorize(&u));
            let wf = build_waveform_forms(&inst, &phi, &u, k).ratio(&vectorize(&w));
            let pf = build_phase_forms(&inst, &w, &u, k).ratio(&vectorize(&phi));
            worst = worst
                .max(rel(f, trace))
                .max(rel(wf, trace))
                .max(rel(pf, trace));
        }
    }
    if worst <= 1e-8 {
        Ok(format!(
            "50 instances, worst relative deviation {worst:.2e}"
        ))
    } else {
        Err(format!("worst relative deviation {worst:.2e} > 1e-8"))
    }
}

// ---------------------------------------------------------------------------
// 2. Minorizer tangency and lower bound

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut tangency = 0.0f64;
    let mut slack = f64::INFINITY;
    let mut probes = 0;
    for _ in 0..10 {
        let dim = rng.random_range(2..12);
        let ups = random_form(dim, rng.random_range(1..4), &mut rng);
        let w_ref = complex_gaussian(dim, 1, &mut rng).column(0).into_owned();
        let g_ref = rng.random_range(0.05..5.0);
        let exact = ups.quad(&w_ref) / g_ref;
        let m = minorizer(&w_ref, g_ref, &w_ref, g_ref, &ups).map_err(|e| e.to_string())?;
        tangency = tangency.max(rel(m, exact));
        for _ in 0..100 {
            let w = &w_ref
                + complex_gaussian(dim, 1, &mut rng).column(0) * c(rng.random_range(0.0..2.0));
            let g = rng.random_range(0.01..10.0);
            let bound = minorizer(&w, g, &w_ref, g_ref, &ups).map_err(|e| e.to_string())?;
            slack = slack.min(ups.quad(&w) / g - bound);
            probes += 1;
        }
    }
    if tangency <= 1e-12 && slack >= -1e-10 {
        Ok(format!(
            "tangency {tangency:.1e}, {probes} probes, min slack {slack:.2e}"
        ))
    } else {
        Err(format!("tangency {tangency:.1e}, min slack {slack:.2e}"))
    }
}

// ---------------------------------------------------------------------------
// 3. Projection onto orthonormal columns

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_orth = 0.0f64;
    for _ in 0..20 {
        let m = rng.random_range(1..5);
        let lambda = complex_gaussian(2 * m, m, &mut rng);
        let phi = complex_gaussian(2 * m, m, &mut rng);
        let rho = rng.random_range(0.1..10.0);
        let theta = project_theta(&lambda, &phi, rho);
        let orth = (theta.adjoint() * &theta - CMat::identity(m, m)).norm();
        worst_orth = worst_orth.max(orth);
        let anchor = &phi + &lambda / c(rho);
        let best = (&theta - &anchor).norm();
        for _ in 0..10_000 {
            let q = random_stiefel(2 * m, m, &mut rng);
            if (&q - &anchor).norm() < best - 1e-12 {
                return Err("a random orthonormal candidate beat the projection".into());
            }
        }
    }
    if worst_orth <= 1e-12 {
        Ok(format!(
            "20 inputs x 1e4 candidates, orthonormality residual {worst_orth:.1e}"
        ))
    } else {
        Err(format!("orthonormality residual {worst_orth:.1e} > 1e-12"))
    }
}

// ---------------------------------------------------------------------------
// 4. Receive filter optimality

fn gevd_max(signal: &CMat, interference: &CMat, noise: f64) -> Option<f64> {
    let n = signal.nrows();
    let chol = Cholesky::new(interference + CMat::identity(n, n) * c(noise))?;
    let l_inv = chol.l().solve_lower_triangular(&CMat::identity(n, n))?;
    let whitened = &l_inv * signal * l_inv.adjoint();
    let herm = (&whitened + whitened.adjoint()) * c(0.5);
    Some(SymmetricEigen::new(herm).eigenvalues.max())
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let inst = Instance::new(desk().with_architecture(ArchTag::Gc, Some(4)).unwrap()).unwrap();
    let s = &inst.scenario;
    let mut worst = 0.0f64;
    let mut cases = 0;
    for _ in 0..3 {
        let w = complex_gaussian(s.n_tx, s.code_len, &mut rng);
        let phi = random_block_diag(4, 2, &mut rng);
        for k in 0..s.targets.len() {
            let form = build_filter_forms(&inst, &w, &phi, k);
            let u = principal_filter(&form);
            let value = form.ratio(&u);
            let (sig, interf) = (form.signal.to_dense(), form.interference.to_dense());
            let oracle = gevd_max(&sig, &interf, form.noise_identity)
                .ok_or("oracle factorization failed")?;
            worst = worst.max(rel(value, oracle));
            for _ in 0..10_000 {
                let r = complex_gaussian(u.len(), 1, &mut rng)
                    .column(0)
                    .into_owned();
                let r = &r / c(r.norm());
                if form.ratio(&r) > value * (1.0 + 1e-12) {
                    return Err(format!("random filter beat target {k}"));
                }
            }
            cases += 1;
        }
    }
    if worst <= 1e-8 {
        Ok(format!(
            "{cases} target cases x 1e4 random filters, oracle deviation {worst:.2e}"
        ))
    } else {
        Err(format!("oracle deviation {worst:.2e} > 1e-8"))
    }
}

// ---------------------------------------------------------------------------
// 5. Full versus stacked representations

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let inst = Instance::new(desk()).unwrap();
    let s = &inst.scenario;
    let n = s.n_cells;
    let mut worst = 0.0f64;
    for groups in [1, 2, n] {
        let gm = group_map(groups, n / groups).unwrap();
        for _ in 0..10 {
            let phi = random_block_diag(groups, n / groups, &mut rng);
            let v = vectorize(&phi);
            let x = gm.select(&v);
            let w = complex_gaussian(s.n_tx, s.code_len, &mut rng);
            for k in 0..s.targets.len() {
                let u = random_filter(&inst, k, &mut rng);
                let form = build_phase_forms(&inst, &w, &u, k);
                let full = form.signal.quad(&v) + form.interference.quad(&v);
                let reduced = gm.de_diagonalize_form(&form.signal).quad(&x)
                    + gm.de_diagonalize_form(&form.interference).quad(&x);
                let dense_xi = form.interference.to_dense();
                let dense_full = v.dotc(&(&dense_xi * &v)).re;
                let dense_red = x
                    .dotc(&(gm.de_diagonalize(&dense_xi).map_err(|e| e.to_string())? * &x))
                    .re;
                worst = worst
                    .max(rel(full, reduced))
                    .max(rel(dense_full, dense_red));
            }
            let h_bar = complex_gaussian(n, n, &mut rng);
            let t_full = (&h_bar * &phi).trace();
            let h_t = gm.h_tilde(&h_bar).map_err(|e| e.to_string())?;
            let stacked = gm.stack(&phi);
            let t_red = (&h_t * &stacked).trace();
            let t_fun = trace_functional(&h_t).transpose() * vectorize(&stacked);
            worst = worst
                .max((t_full - t_red).norm() / t_full.norm())
                .max((t_full - t_fun[0]).norm() / t_full.norm());
        }
    }
    if worst <= 1e-10 {
        Ok(format!(
            "G in {{1, 2, {n}}}, worst relative deviation {worst:.2e}"
        ))
    } else {
        Err(format!("worst relative deviation {worst:.2e} > 1e-10"))
    }
}

// ---------------------------------------------------------------------------
// 6. Cone solver contract

/// ∞-norm KKT residuals of a returned primal-dual point, including cone
/// membership of `s` and `z` and complementarity.
fn kkt_residual(p: &SocpProblem, x: &RVec, y: &RVec, z: &RVec, s: &RVec) -> f64 {
    let (a, b, g, h) = p.dense();
    let stat = (p.objective() + a.transpose() * y + g.transpose() * z).amax();
    let eq = if a.nrows() > 0 {
        (&a * x - &b).amax()
    } else {
        0.0
    };
    let ineq = (&g * x + s - &h).amax();
    let mut cone = 0.0f64;
    let mut off = 0;
    for block in p.cones() {
        let d = block.dim();
        for v in [s, z] {
            let part = v.rows(off, d);
            let viol = match block {
                ConeBlock::Nonneg(_) => (-part.min()).max(0.0),
                ConeBlock::Soc(_) => (part.rows(1, d - 1).norm() - part[0]).max(0.0),
            };
            cone = cone.max(viol);
        }
        off += d;
    }
    stat.max(eq).max(ineq).max(cone).max(s.dot(z).abs())
}

/// `min cᵀx + Σᵢ‖Aᵢx − bᵢ‖` over `‖x‖ ≤ r` by projected gradient steps with
/// backtracking; the residuals stay away from zero for overdetermined `Aᵢ`.
fn sum_of_norms_oracle(cvec: &RVec, mats: &[(RMat, RVec)], radius: f64) -> f64 {
    let f = |x: &RVec| cvec.dot(x) + mats.iter().map(|(a, b)| (a * x - b).norm()).sum::<f64>();
    let grad = |x: &RVec| {
        let mut g = cvec.clone();
        for (a, b) in mats {
            let r = a * x - b;
            let nr = r.norm();
            if nr > 0.0 {
                g += a.transpose() * (r / nr);
            }
        }
        g
    };
    let project = |x: RVec| {
        let n = x.norm();
        if n > radius {
            x * (radius / n)
        } else {
            x
        }
    };
    let mut x = RVec::zeros(cvec.len());
    let mut step = 1.0;
    let mut fx = f(&x);
    for _ in 0..200_000 {
        let g = grad(&x);
        loop {
            let cand = project(&x - &g * step);
            let fc = f(&cand);
            let d = &cand - &x;
            if fc <= fx + g.dot(&d) + d.norm_squared() / (2.0 * step) {
                let moved = d.amax();
                x = cand;
                fx = fc;
                step *= 1.2;
                if moved < 1e-15 {
                    return fx;
                }
                break;
            }
            step *= 0.5;
            if step < 1e-20 {
                return fx;
            }
        }
    }
    fx
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let settings = SolverSettings::default();
    let (mut worst_kkt, mut worst_obj, mut worst_lp) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(2..6);
        let terms = 3;
        let radius = rng.random_range(0.5..3.0);
        let cvec = RVec::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let mats: Vec<(RMat, RVec)> = (0..terms)
            .map(|_| {
                let rows = n + 2;
                (
                    RMat::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0)),
                    RVec::from_fn(rows, |_, _| rng.random_range(-1.0..1.0)),
                )
            })
            .collect();
        // Variables [x; t₁ … t_m].
        let nv = n + terms;
        let mut p = SocpProblem::new(nv);
        let mut obj = RVec::zeros(nv);
        obj.rows_mut(0, n).copy_from(&cvec);
        obj.rows_mut(n, terms).fill(1.0);
        p.set_objective(obj).unwrap();
        for (i, (a, b)) in mats.iter().enumerate() {
            let mut f = RMat::zeros(a.nrows(), nv);
            f.view_mut((0, 0), (a.nrows(), n)).copy_from(a);
            let mut e = RVec::zeros(nv);
            e[n + i] = 1.0;
            p.add_soc(&f, &(-b), &e, 0.0).unwrap();
        }
        p.add_ball(0, &RVec::zeros(n), radius).unwrap();
        let sol = solve_socp(&p, &settings).map_err(|e| e.to_string())?;
        if sol.status != bdris_dfrc::conic::SolveStatus::Optimal {
            return Err(format!("cone program ended with {:?}", sol.status));
        }
        worst_kkt = worst_kkt.max(kkt_residual(&p, &sol.x, &sol.y, &sol.z, &sol.s));
        let oracle = sum_of_norms_oracle(&cvec, &mats, radius);
        worst_obj = worst_obj.max(rel(sol.objective, oracle));
    }
    for _ in 0..20 {
        let n = rng.random_range(1..9);
        let cvec = RVec::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let centre = RVec::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let radius = rng.random_range(0.1..4.0);
        let mut p = SocpProblem::new(n);
        p.set_objective(cvec.clone()).unwrap();
        p.add_ball(0, &centre, radius).unwrap();
        let sol = solve_socp(&p, &settings).map_err(|e| e.to_string())?;
        let exact = cvec.dot(&centre) - radius * cvec.norm();
        worst_lp = worst_lp.max((sol.objective - exact).abs() / exact.abs().max(1.0));
    }
    if worst_kkt <= 1e-7 && worst_obj <= 1e-5 && worst_lp <= 1e-8 {
        Ok(format!(
            "KKT {worst_kkt:.1e}, oracle gap {worst_obj:.1e}, ball LP error {worst_lp:.1e}"
        ))
    } else {
        Err(format!("KKT {worst_kkt:.1e} (1e-7), oracle gap {worst_obj:.1e} (1e-5), ball LP error {worst_lp:.1e} (1e-8)"))
    }
}

// ---------------------------------------------------------------------------
// 7. Feasibility of returned solutions

/// Smallest margin of the constructive-interference sector, evaluated from
/// the received samples in units of the noise standard deviation:
/// `(Re ỹ − √Γσ)·tanΩ − |Im ỹ|` with `ỹ = y·e^{−j∠s}`.
fn sector_margin(s: &Scenario, inst: &Instance, r: &SolveResult) -> f64 {
    let sigma = s.noise_comm.sqrt();
    let tan = (std::f64::consts::PI / s.psk_order as f64).tan();
    let mut worst = f64::INFINITY;
    for (u, user) in s.users.iter().enumerate() {
        let phi = match user.side {
            Side::Transmissive => &r.bdris.phi_t,
            Side::Reflective => &r.bdris.phi_r,
        };
        let h = &inst.comm.h_users[u];
        let root = db_to_lin(user.qos_db.unwrap_or(s.qos_db)).sqrt();
        for l in 0..s.code_len {
            let y = (h.adjoint() * phi * &inst.comm.g_mat * r.waveform.w_mat.column(l))[0];
            let z = y * Complex64::from_polar(1.0, -r.waveform.symbols.phase(u, l));
            worst = worst.min(((z.re - root * sigma) * tan - z.im.abs()) / sigma);
        }
    }
    worst
}

fn group_residual(s: &Scenario, r: &SolveResult) -> f64 {
    let m = s.group_size();
    let mut worst = 0.0f64;
    for g in 0..s.groups {
        let rng = g * m..(g + 1) * m;
        let mut block = CMat::zeros(2 * m, m);
        for (i, a) in rng.clone().enumerate() {
            for (j, b) in rng.clone().enumerate() {
                block[(i, j)] = r.bdris.phi_t[(a, b)];
                block[(m + i, j)] = r.bdris.phi_r[(a, b)];
            }
        }
        worst = worst.max((block.adjoint() * &block - CMat::identity(m, m)).norm());
    }
    let mut off = 0.0f64;
    for a in 0..s.n_cells {
        for b in 0..s.n_cells {
            if a / m != b / m {
                off = off
                    .max(r.bdris.phi_t[(a, b)].norm())
                    .max(r.bdris.phi_r[(a, b)].norm());
            }
        }
    }
    worst.max(off)
}

fn criterion_7(runs: &Runs) -> Outcome {
    let (mut margin, mut excess, mut unit) = (f64::INFINITY, f64::NEG_INFINITY, 0.0f64);
    let mut count = 0;
    for (s, r) in runs.cache.borrow().values() {
        let Ok(r) = r else { continue };
        let inst = Instance::new(s.clone()).unwrap();
        if !s.radar_only {
            margin = margin.min(sector_margin(s, &inst, r));
        }
        excess = excess.max(r.waveform.w_mat.norm_squared() - s.power_budget);
        unit = unit.max(group_residual(s, r));
        count += 1;
    }
    let detail = format!("{count} solves, CI margin {margin:.2e} sigma, power excess {excess:.1e}, unitarity {unit:.1e}");
    if count > 0 && margin >= -1e-6 && excess <= 1e-8 && unit <= 1e-10 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 8. Fairness

fn criterion_8(runs: &Runs) -> Outcome {
    let gamma = desk().qos_db;
    let power = desk().power_budget;
    let mut spreads = Vec::new();
    for groups in [1, 4, 8] {
        for seed in SEEDS {
            let r = runs.dfrc(groups, gamma, power, seed).1?;
            let db: Vec<f64> = r.final_scnr.iter().map(|x| lin_to_db(*x)).collect();
            let spread = db.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                - db.iter().copied().fold(f64::INFINITY, f64::min);
            spreads.push(spread);
        }
    }
    let worst = spreads.iter().copied().fold(0.0, f64::max);
    if worst <= 0.5 {
        Ok(format!(
            "FC/GC4/SC x 3 seeds, largest per-target spread {worst:.3} dB"
        ))
    } else {
        Err(format!("largest per-target spread {worst:.3} dB > 0.5 dB"))
    }
}

// ---------------------------------------------------------------------------
// 9. Trends

fn seed_mean(
    runs: &Runs,
    groups: usize,
    gamma: f64,
    power: f64,
) -> std::result::Result<f64, String> {
    let v = SEEDS
        .iter()
        .map(|&s| runs.min_db(groups, gamma, power, s))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(mean(&v))
}

fn non_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0])
}

fn criterion_9(runs: &Runs) -> Vec<(String, Outcome)> {
    let power = desk().power_budget;
    let gamma_default = desk().qos_db;
    let n = desk().n_cells;
    let mut out = Vec::new();

    // (a) QoS threshold.
    let a = (|| {
        let mut lines = Vec::new();
        let mut ok = true;
        for (label, g) in [("SC", n), ("GC4", 4), ("FC", 1)] {
            let v = GAMMAS
                .iter()
                .map(|&q| seed_mean(runs, g, q, power))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            ok &= non_increasing(&v);
            lines.push(format!("{label} [{}]", fmt_db(&v)));
        }
        let detail = format!("mean min-SCNR dB over Gamma 0/6/12: {}", lines.join(", "));
        if ok {
            Ok(detail)
        } else {
            Err(detail)
        }
    })();
    out.push(("9a".to_string(), a));

    // (b) Power budget.
    let b = (|| {
        let v = POWERS
            .iter()
            .map(|&e| seed_mean(runs, 4, POWER_SWEEP_GAMMA, e))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let detail = format!(
            "GC4 at Gamma {POWER_SWEEP_GAMMA} dB, E 1/10/100 W: [{}] dB",
            fmt_db(&v)
        );
        if v.windows(2).all(|w| w[1] >= w[0]) {
            Ok(detail)
        } else {
            Err(detail)
        }
    })();
    out.push(("9b".to_string(), b));

    // (c) Group count.
    let cg = (|| {
        let v = GROUPS
            .iter()
            .map(|&g| seed_mean(runs, g, gamma_default, power))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        let detail = format!("G 1/2/4/8 at Gamma {gamma_default} dB: [{}] dB", fmt_db(&v));
        if non_increasing(&v) {
            Ok(detail)
        } else {
            Err(detail)
        }
    })();
    out.push(("9c".to_string(), cg));

    // (d) Architecture ordering at each seed.
    let d = (|| {
        let mut worst = f64::INFINITY;
        for q in GAMMAS.iter().copied().chain([gamma_default]) {
            for seed in SEEDS {
                let fc = runs.min_db(1, q, power, seed)?;
                let gc = runs.min_db(4, q, power, seed)?;
                let sc = runs.min_db(n, q, power, seed)?;
                worst = worst.min(fc - gc).min(gc - sc);
            }
        }
        let detail =
            format!("smallest FC-GC4 / GC4-SC margin {worst:.3} dB over 12 configurations");
        if worst >= -0.5 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })();
    out.push(("9d".to_string(), d));

    // (e) Radar-only bound.
    let e = (|| {
        let mut diffs = Vec::new();
        for seed in SEEDS {
            let radar = runs
                .get(Key {
                    arch: 1,
                    groups: 4,
                    gamma: gamma_default,
                    power,
                    seed,
                })
                .1?;
            let dfrc = runs.min_db(4, gamma_default, power, seed)?;
            diffs.push(lin_to_db(radar.min_scnr()) - dfrc);
        }
        let detail = format!(
            "RADAR-ONLY minus DFRC (GC4) per seed: [{}] dB",
            fmt_db(&diffs)
        );
        if diffs.iter().all(|d| *d >= 0.0) {
            Ok(detail)
        } else {
            Err(detail)
        }
    })();
    out.push(("9e".to_string(), e));

    // (f) Bit error rate.
    let f = (|| {
        let mut bers = Vec::new();
        for &q in &GAMMAS {
            let mut acc = Vec::new();
            for seed in SEEDS {
                let (s, r) = runs.dfrc(4, q, power, seed);
                let r = r?;
                let inst = Instance::new(s).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
                let est = simulate_ber(
                    &inst,
                    &r.waveform,
                    &r.bdris.phi_t,
                    &r.bdris.phi_r,
                    100_000,
                    &mut rng,
                )
                .map_err(|e| e.to_string())?;
                acc.push(est.average);
            }
            bers.push(mean(&acc));
        }
        let detail = format!(
            "GC4 mean BER at Gamma 0/6/12 dB: [{:.2e} {:.2e} {:.2e}]",
            bers[0], bers[1], bers[2]
        );
        if bers.windows(2).all(|w| w[1] < w[0]) && bers[2] < 1e-3 {
            Ok(detail)
        } else {
            Err(detail)
        }
    })();
    out.push(("9f".to_string(), f));
    out
}

// ---------------------------------------------------------------------------
// 10. Detection probability

fn marcum_bessel_oracle(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        return 1.0;
    }
    if a == 0.0 {
        return (-0.5 * b * b).exp();
    }
    let ln_fact: Vec<f64> = std::iter::once(0.0)
        .chain((1..700).scan(0.0, |acc, i| {
            *acc += (i as f64).ln();
            Some(*acc)
        }))
        .collect();
    let z = a * b;
    let base = -0.5 * (a * a + b * b);
    let (ratio, start, flip) = if a < b {
        (a / b, 0, false)
    } else {
        (b / a, 1, true)
    };
    let mut sum = 0.0;
    for k in start..300 {
        for m in 0..300 {
            let ln_t = base + k as f64 * ratio.ln() + (2 * m + k) as f64 * (0.5 * z).ln()
                - ln_fact[m]
                - ln_fact[m + k];
            sum += ln_t.exp();
        }
    }
    if flip {
        1.0 - sum
    } else {
        sum
    }
}

fn criterion_10() -> Outcome {
    for pfa in [1e-8, 1e-6, 1e-4, 1e-2, 0.3] {
        let pd = detection_probability(0.0, pfa).map_err(|e| e.to_string())?;
        if pd != pfa {
            return Err(format!("P_D(0, {pfa}) = {pd}"));
        }
    }
    let mut worst = 0.0f64;
    let mut cells = 0;
    for i in 0..=24 {
        for j in 0..=24 {
            let (a, b) = (0.4 * i as f64, 0.4 * j as f64);
            worst = worst.max((marcum_q1(a, b) - marcum_bessel_oracle(a, b)).abs());
            cells += 1;
        }
    }
    if worst <= 1e-10 {
        Ok(format!(
            "P_D(0, p_fa) = p_fa exactly; Marcum Q on {cells} grid cells, max error {worst:.1e}"
        ))
    } else {
        Err(format!("Marcum Q max error {worst:.1e} > 1e-10"))
    }
}

// ---------------------------------------------------------------------------
// 11. Space-range beampattern

fn criterion_11(runs: &Runs) -> Outcome {
    let base = desk();
    let (s, r) = runs.dfrc(1, base.qos_db, base.power_budget, 0);
    let r = r?;
    let inst = Instance::new(s.clone()).unwrap();
    let w = &r.waveform.w_mat;
    let mut worst_suppression = f64::INFINITY;
    let (mut worst_offset, mut worst_dip) = (0.0f64, 0.0f64);
    for (k, t) in s.targets.iter().enumerate() {
        let phi = match t.side {
            Side::Transmissive => &r.bdris.phi_t,
            Side::Reflective => &r.bdris.phi_r,
        };
        let u = &r.filters.filters[k];
        let grid = angle_grid(-90.0, 90.0, 361);
        let bp = space_range_beampattern(&inst, w, &r.bdris.phi_t, &r.bdris.phi_r, u, k, &grid)
            .map_err(|e| e.to_string())?;
        let (ia, ir) = bp.peak();
        let it = grid
            .iter()
            .position(|a| (a - t.azimuth).abs() < 1e-9)
            .ok_or("target angle is off the grid")?;
        // The mainlobe is the contiguous region within 3 dB of the global
        // maximum along the maximum's ring; the target cell must lie in it.
        let span = if ia <= it { ia..=it } else { it..=ia };
        let dip = span.map(|i| -bp.value(i, ir)).fold(0.0, f64::max);
        if bp.rings[ir] != t.ring || dip > 3.0 {
            return Err(format!(
                "target {}: maximum at ({:.1} deg, ring {}), target cell ({:.1} deg, ring {}) is {dip:.2} dB down",
                k + 1,
                bp.angles[ia],
                bp.rings[ir],
                t.azimuth,
                t.ring
            ));
        }
        worst_offset = worst_offset.max((bp.angles[ia] - t.azimuth).abs());
        worst_dip = worst_dip.max(-bp.value(it, ir));
        let own =
            space_range_power(&inst, w, phi, u, k, t.azimuth, t.ring).map_err(|e| e.to_string())?;
        let others = s
            .targets_on(t.side)
            .filter(|(p, _)| *p != k)
            .map(|(_, o)| (o.azimuth, o.ring))
            .chain(s.clutters_on(t.side).map(|(_, cl)| (cl.azimuth, cl.ring)));
        for (ang, ring) in others {
            let p = space_range_power(&inst, w, phi, u, k, ang, ring).map_err(|e| e.to_string())?;
            worst_suppression =
                worst_suppression.min(10.0 * (own / p.max(f64::MIN_POSITIVE)).log10());
        }
    }
    let detail = format!(
        "every mainlobe holds its target cell (maximum within {worst_offset:.1} deg and {worst_dip:.2} dB of it); weakest suppression {worst_suppression:.1} dB"
    );
    if worst_suppression >= 20.0 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------------------
// 12. Determinism

fn criterion_12() -> Outcome {
    let s = desk().with_architecture(ArchTag::Gc, Some(4)).unwrap();
    let cfg = SolverConfig {
        rng_seed: 7,
        ..SolverConfig::default()
    };
    let csv = || -> std::result::Result<String, String> {
        let r = solve(&s, &cfg).map_err(|e| e.to_string())?;
        Ok(convergence_csv(
            &r.scnr_history,
            &r.feasibility_history,
            &r.objective_history,
        ))
    };
    let (a, b) = (csv()?, csv()?);
    if a == b {
        Ok(format!("two runs, {} identical bytes", a.len()))
    } else {
        Err("convergence CSVs differ".into())
    }
}

// ---------------------------------------------------------------------------

fn report(id: &str, outcome: &Outcome, start: Instant, failures: &mut Vec<String>) {
    let secs = start.elapsed().as_secs_f64();
    match outcome {
        Ok(d) => println!("criterion {id:>3}: PASS  ({secs:.1} s) {d}"),
        Err(d) => {
            println!("criterion {id:>3}: FAIL  ({secs:.1} s) {d}");
            failures.push(id.to_string());
        }
    }
}

fn main() {
    let total = Instant::now();
    let runs = Runs {
        cache: RefCell::new(BTreeMap::new()),
        solve_time: RefCell::new(0.0),
    };
    let mut failures = Vec::new();

    let pure: [(&str, Check); 6] = [
        ("1", criterion_1),
        ("2", criterion_2),
        ("3", criterion_3),
        ("4", criterion_4),
        ("5", criterion_5),
        ("6", criterion_6),
    ];
    for (id, f) in pure {
        let t = Instant::now();
        let o = f();
        report(id, &o, t, &mut failures);
    }

    let t = Instant::now();
    let trends = criterion_9(&runs);
    let trend_time = t;
    let t = Instant::now();
    let o = criterion_8(&runs);
    report("8", &o, t, &mut failures);
    for (id, o) in &trends {
        report(id, o, trend_time, &mut failures);
    }
    for (id, f) in [
        ("7", criterion_7 as fn(&Runs) -> Outcome),
        ("11", criterion_11),
    ] {
        let t = Instant::now();
        let o = f(&runs);
        report(id, &o, t, &mut failures);
    }
    let t = Instant::now();
    report("10", &criterion_10(), t, &mut failures);
    let t = Instant::now();
    report("12", &criterion_12(), t, &mut failures);

    let statuses = runs
        .cache
        .borrow()
        .values()
        .filter_map(|(_, r)| r.as_ref().ok().map(|r| r.status))
        .fold((0, 0), |(c, m), s| {
            if s == SolveStatus::Converged {
                (c + 1, m)
            } else {
                (c, m + 1)
            }
        });
    println!(
        "{} solves ({} converged, {} at the iteration cap), {:.0} s solving, {:.0} s total",
        runs.cache.borrow().len(),
        statuses.0,
        statuses.1,
        *runs.solve_time.borrow(),
        total.elapsed().as_secs_f64()
    );
    if failures.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {}", failures.join(", "));
        if std::env::var("BDRIS_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
