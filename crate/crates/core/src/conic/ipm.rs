//! Primal-dual interior-point method on the homogeneous self-dual embedding
//! with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.

use nalgebra::Cholesky;

use super::{ConeBlock, Residuals, SocpProblem, SocpSolution, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec};

#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    /// Feasibility and duality-gap tolerance.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            tol: 1e-8,
            max_iters: 200,
        }
    }
}

const STEP_FRACTION: f64 = 0.99;
const REFINE_STEPS: usize = 3;
const STALL_FACTOR: f64 = 100.0;

/// Block layout with precomputed row offsets.
struct Layout {
    blocks: Vec<(ConeBlock, usize)>,
    degree: usize,
}

impl Layout {
    fn new(cones: &[ConeBlock]) -> Self {
        let mut off = 0;
        let mut degree = 0;
        let mut blocks = Vec::with_capacity(cones.len());
        for &c in cones {
            blocks.push((c, off));
            off += c.dim();
            degree += match c {
                ConeBlock::Nonneg(d) => d,
                ConeBlock::Soc(_) => 1,
            };
        }
        Layout { blocks, degree }
    }

    /// Identity element `e` of the cone.
    fn unit(&self, m: usize) -> RVec {
        let mut e = RVec::zeros(m);
        for &(c, o) in &self.blocks {
            match c {
                ConeBlock::Nonneg(d) => e.rows_mut(o, d).fill(1.0),
                ConeBlock::Soc(_) => e[o] = 1.0,
            }
        }
        e
    }

    /// Smallest `α` with `u + α e ∈ K` (negative when `u` is interior).
    fn interior_shift(&self, u: &RVec) -> f64 {
        let mut alpha = f64::NEG_INFINITY;
        for &(c, o) in &self.blocks {
            match c {
                ConeBlock::Nonneg(d) => {
                    for i in o..o + d {
                        alpha = alpha.max(-u[i]);
                    }
                }
                ConeBlock::Soc(d) => {
                    let tail = u.rows(o + 1, d - 1).norm();
                    alpha = alpha.max(tail - u[o]);
                }
            }
        }
        alpha
    }

    /// Jordan product `u ∘ v`.
    fn jordan(&self, u: &RVec, v: &RVec) -> RVec {
        let mut out = RVec::zeros(u.len());
        for &(c, o) in &self.blocks {
            match c {
                ConeBlock::Nonneg(d) => {
                    for i in o..o + d {
                        out[i] = u[i] * v[i];
                    }
                }
                ConeBlock::Soc(d) => {
                    out[o] = u.rows(o, d).dot(&v.rows(o, d));
                    for i in o + 1..o + d {
                        out[i] = u[o] * v[i] + v[o] * u[i];
                    }
                }
            }
        }
        out
    }

    /// Solve `λ ∘ x = d` for `x`.
    fn jordan_div(&self, lambda: &RVec, d: &RVec) -> RVec {
        let mut x = RVec::zeros(d.len());
        for &(c, o) in &self.blocks {
            match c {
                ConeBlock::Nonneg(k) => {
                    for i in o..o + k {
                        x[i] = d[i] / lambda[i];
                    }
                }
                ConeBlock::Soc(k) => {
                    let l0 = lambda[o];
                    let lt = lambda.rows(o + 1, k - 1);
                    let dt = d.rows(o + 1, k - 1);
                    let det = l0 * l0 - lt.norm_squared();
                    let x0 = (l0 * d[o] - lt.dot(&dt)) / det;
                    x[o] = x0;
                    for i in 1..k {
                        x[o + i] = (d[o + i] - x0 * lambda[o + i]) / l0;
                    }
                }
            }
        }
        x
    }

    /// Largest `α ≤ α_cap` keeping `u + α du` in the cone.
    fn max_step(&self, u: &RVec, du: &RVec, cap: f64) -> f64 {
        let mut alpha = cap;
        for &(c, o) in &self.blocks {
            match c {
                ConeBlock::Nonneg(d) => {
                    for i in o..o + d {
                        if du[i] < 0.0 {
                            alpha = alpha.min(-u[i] / du[i]);
                        }
                    }
                }
                ConeBlock::Soc(d) => {
                    alpha = alpha.min(soc_step(u.rows(o, d).as_slice(), du.rows(o, d).as_slice()));
                }
            }
        }
        alpha.max(0.0)
    }
}

/// Largest step keeping `(u₀, ū) + α(d₀, d̄)` in the second-order cone.
fn soc_step(u: &[f64], d: &[f64]) -> f64 {
    let (u0, ut) = (u[0], &u[1..]);
    let (d0, dt) = (d[0], &d[1..]);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    // f(α) = a α² + 2 b α + c, with c > 0 for an interior point.
    let a = d0 * d0 - dot(dt, dt);
    let b = u0 * d0 - dot(ut, dt);
    let c = (u0 * u0 - dot(ut, ut)).max(0.0);
    let mut alpha = f64::INFINITY;
    if d0 < 0.0 {
        alpha = -u0 / d0;
    }
    let disc = b * b - a * c;
    if a.abs() < 1e-300 {
        if b < 0.0 {
            alpha = alpha.min(-c / (2.0 * b));
        }
    } else if a < 0.0 {
        // One positive root.
        let r = (-b - disc.max(0.0).sqrt()) / a;
        if r > 0.0 {
            alpha = alpha.min(r);
        }
    } else if b < 0.0 && disc >= 0.0 {
        // Smaller positive root, written to avoid cancellation.
        let r = c / (-b + disc.sqrt());
        alpha = alpha.min(r);
    }
    alpha
}

/// Nesterov-Todd scaling `W` with `W z = W^{-1} s = λ`.
enum BlockScaling {
    Nonneg(Vec<f64>),
    Soc { eta: f64, w: Vec<f64> },
}

struct Scaling {
    blocks: Vec<(BlockScaling, usize)>,
}

impl Scaling {
    fn identity(layout: &Layout) -> Self {
        let blocks = layout
            .blocks
            .iter()
            .map(|&(c, o)| match c {
                ConeBlock::Nonneg(d) => (BlockScaling::Nonneg(vec![1.0; d]), o),
                ConeBlock::Soc(d) => {
                    let mut w = vec![0.0; d];
                    w[0] = 1.0;
                    (BlockScaling::Soc { eta: 1.0, w }, o)
                }
            })
            .collect();
        Scaling { blocks }
    }

    fn nesterov_todd(layout: &Layout, s: &RVec, z: &RVec) -> Option<Self> {
        let mut blocks = Vec::with_capacity(layout.blocks.len());
        for &(c, o) in &layout.blocks {
            match c {
                ConeBlock::Nonneg(d) => {
                    let mut w = Vec::with_capacity(d);
                    for i in o..o + d {
                        if !(s[i] > 0.0 && z[i] > 0.0) {
                            return None;
                        }
                        w.push((s[i] / z[i]).sqrt());
                    }
                    blocks.push((BlockScaling::Nonneg(w), o));
                }
                ConeBlock::Soc(d) => {
                    let sb = s.rows(o, d);
                    let zb = z.rows(o, d);
                    let s_j = sb[0] * sb[0] - sb.rows(1, d - 1).norm_squared();
                    let z_j = zb[0] * zb[0] - zb.rows(1, d - 1).norm_squared();
                    if !(s_j > 0.0 && z_j > 0.0 && sb[0] > 0.0 && zb[0] > 0.0) {
                        return None;
                    }
                    let (sn, zn) = (s_j.sqrt(), z_j.sqrt());
                    let sbar: Vec<f64> = sb.iter().map(|v| v / sn).collect();
                    let zbar: Vec<f64> = zb.iter().map(|v| v / zn).collect();
                    let sz: f64 = sbar.iter().zip(&zbar).map(|(a, b)| a * b).sum();
                    let gamma = ((1.0 + sz) / 2.0).sqrt();
                    let mut w = vec![0.0; d];
                    w[0] = (sbar[0] + zbar[0]) / (2.0 * gamma);
                    for i in 1..d {
                        w[i] = (sbar[i] - zbar[i]) / (2.0 * gamma);
                    }
                    let eta = (sn / zn).sqrt();
                    blocks.push((BlockScaling::Soc { eta, w }, o));
                }
            }
        }
        Some(Scaling { blocks })
    }

    /// `W v` (or `W^{-1} v` when `inverse`).
    fn apply(&self, v: &RVec, inverse: bool) -> RVec {
        let mut out = RVec::zeros(v.len());
        for (b, o) in &self.blocks {
            let o = *o;
            match b {
                BlockScaling::Nonneg(w) => {
                    for (i, wi) in w.iter().enumerate() {
                        out[o + i] = if inverse {
                            v[o + i] / wi
                        } else {
                            v[o + i] * wi
                        };
                    }
                }
                BlockScaling::Soc { eta, w } => {
                    let d = w.len();
                    let sign = if inverse { -1.0 } else { 1.0 };
                    let scale = if inverse { 1.0 / eta } else { *eta };
                    let v0 = v[o];
                    let wv: f64 = (1..d).map(|i| w[i] * v[o + i]).sum();
                    out[o] = scale * (w[0] * v0 + sign * wv);
                    let coef = sign * v0 + wv / (1.0 + w[0]);
                    for i in 1..d {
                        out[o + i] = scale * (v[o + i] + coef * w[i]);
                    }
                }
            }
        }
        out
    }
}

/// Reduced KKT system for `[[0, Aᵀ, Gᵀ], [−A, 0, 0], [−G, 0, W²]]`.
struct KktSolver<'a> {
    a: &'a RMat,
    g: &'a RMat,
    scaling: &'a Scaling,
    h_mat: RMat,
    chol_h: Cholesky<f64, nalgebra::Dyn>,
    /// Factor of `A H⁻¹ Aᵀ` when equalities are present.
    chol_s: Option<Cholesky<f64, nalgebra::Dyn>>,
}

impl<'a> KktSolver<'a> {
    /// `grams[b]` holds `G_bᵀG_b` for every second-order-cone block `b`.
    fn new(a: &'a RMat, g: &'a RMat, scaling: &'a Scaling, grams: &[Option<RMat>]) -> Option<Self> {
        let n = g.ncols();
        let mut h_mat = RMat::zeros(n, n);
        for ((block, o), gram) in scaling.blocks.iter().zip(grams) {
            let o = *o;
            match block {
                BlockScaling::Nonneg(w) => {
                    let mut p = g.rows(o, w.len()).into_owned();
                    for (i, wi) in w.iter().enumerate() {
                        p.row_mut(i).scale_mut(1.0 / wi);
                    }
                    h_mat += p.transpose() * p;
                }
                BlockScaling::Soc { eta, w } => {
                    // W⁻² = η⁻²(I + 2ŵŵᵀ − 2e₀e₀ᵀ) with ŵ = (w₀, −w̄).
                    let d = w.len();
                    let gb = g.rows(o, d);
                    let what = RVec::from_fn(d, |i, _| if i == 0 { w[0] } else { -w[i] });
                    let q = gb.tr_mul(&what);
                    let g0 = gb.row(0).transpose();
                    let s2 = 1.0 / (eta * eta);
                    h_mat.zip_apply(gram.as_ref().expect("gram for cone block"), |h, v| {
                        *h += s2 * v
                    });
                    h_mat.ger(2.0 * s2, &q, &q, 1.0);
                    h_mat.ger(-2.0 * s2, &g0, &g0, 1.0);
                }
            }
        }
        let diag_max = (0..n)
            .map(|i| h_mat[(i, i)])
            .fold(0.0f64, f64::max)
            .max(1.0);
        let mut reg = h_mat.clone();
        for i in 0..n {
            reg[(i, i)] += 1e-13 * diag_max;
        }
        let chol_h = Cholesky::new(reg)?;
        let chol_s = if a.nrows() > 0 {
            let hinv_at = chol_h.solve(&a.transpose());
            let mut s = a * hinv_at;
            let sd = (0..s.nrows())
                .map(|i| s[(i, i)])
                .fold(0.0f64, f64::max)
                .max(1e-300);
            for i in 0..s.nrows() {
                s[(i, i)] += 1e-13 * sd;
            }
            Some(Cholesky::new(s)?)
        } else {
            None
        };
        Some(KktSolver {
            a,
            g,
            scaling,
            h_mat,
            chol_h,
            chol_s,
        })
    }

    /// Solve `H dx + Aᵀ dy = r1`, `A dx = r2` with the regularized factors.
    fn solve_reduced_once(&self, r1: &RVec, r2: &RVec) -> (RVec, RVec) {
        match &self.chol_s {
            None => (self.chol_h.solve(r1), RVec::zeros(0)),
            Some(cs) => {
                let hr1 = self.chol_h.solve(r1);
                let dy = cs.solve(&(self.a * &hr1 - r2));
                let dx = self.chol_h.solve(&(r1 - self.a.tr_mul(&dy)));
                (dx, dy)
            }
        }
    }

    fn solve_reduced(&self, r1: &RVec, r2: &RVec) -> (RVec, RVec) {
        let (mut dx, mut dy) = self.solve_reduced_once(r1, r2);
        for _ in 0..REFINE_STEPS {
            let e1 = r1 - &self.h_mat * &dx - self.a.tr_mul(&dy);
            let e2 = r2 - self.a * &dx;
            if e1.amax().max(e2.amax()) <= 1e-15 * (1.0 + r1.amax().max(r2.amax())) {
                break;
            }
            let (cx, cy) = self.solve_reduced_once(&e1, &e2);
            dx += cx;
            dy += cy;
        }
        (dx, dy)
    }

    fn solve_once(&self, rx: &RVec, ry: &RVec, rz: &RVec) -> (RVec, RVec, RVec) {
        // dz = W⁻²(rz + G dx), so Gᵀ W⁻² G dx + Aᵀ dy = rx − Gᵀ W⁻² rz.
        let w2rz = self.scaling.apply(&self.scaling.apply(rz, true), true);
        let r1 = rx - self.g.tr_mul(&w2rz);
        let r2 = -ry;
        let (dx, dy) = self.solve_reduced(&r1, &r2);
        let gdx = self.g * &dx;
        let dz = self
            .scaling
            .apply(&self.scaling.apply(&(rz + gdx), true), true);
        (dx, dy, dz)
    }

    /// Solve `Aᵀdy + Gᵀdz = rx`, `−A dx = ry`, `−G dx + W² dz = rz`, refining
    /// against the unreduced system.
    fn solve(&self, rx: &RVec, ry: &RVec, rz: &RVec) -> (RVec, RVec, RVec) {
        let (mut dx, mut dy, mut dz) = self.solve_once(rx, ry, rz);
        let scale = 1.0 + rx.amax().max(ry.amax()).max(rz.amax());
        for _ in 0..REFINE_STEPS {
            let ex = rx - self.a.tr_mul(&dy) - self.g.tr_mul(&dz);
            let ey = ry + self.a * &dx;
            let w2dz = self.scaling.apply(&self.scaling.apply(&dz, false), false);
            let ez = rz + self.g * &dx - w2dz;
            if ex.amax().max(ey.amax()).max(ez.amax()) <= 1e-14 * scale {
                break;
            }
            let (cx, cy, cz) = self.solve_once(&ex, &ey, &ez);
            dx += cx;
            dy += cy;
            dz += cz;
        }
        (dx, dy, dz)
    }
}

struct Iterate {
    x: RVec,
    y: RVec,
    z: RVec,
    s: RVec,
    tau: f64,
    kappa: f64,
}

/// Solve a cone program. The returned status reports optimality,
/// certified infeasibility, unboundedness or the iteration cap; only
/// malformed input or numerical breakdown produce an error.
pub fn solve_socp(problem: &SocpProblem, settings: &SolverSettings) -> Result<SocpSolution> {
    if !(settings.tol > 0.0) {
        return Err(Error::InvalidArgument(
            "solver tolerance must be positive".into(),
        ));
    }
    let (a, b, g, h) = problem.dense();
    let c = problem.objective().clone();
    let m = g.nrows();
    if m == 0 {
        return Err(Error::InvalidArgument(
            "cone program has no cone constraints".into(),
        ));
    }
    let layout = Layout::new(problem.cones());
    let e = layout.unit(m);

    // Starting point from two least-squares problems with W = I.
    let ident = Scaling::identity(&layout);
    let grams: Vec<Option<RMat>> = layout
        .blocks
        .iter()
        .map(|&(c, o)| match c {
            ConeBlock::Nonneg(_) => None,
            ConeBlock::Soc(d) => {
                let gb = g.rows(o, d);
                Some(gb.transpose() * gb)
            }
        })
        .collect();
    let kkt0 = KktSolver::new(&a, &g, &ident, &grams).ok_or_else(|| {
        Error::Numerical("cone constraints do not determine all variables".into())
    })?;
    let (x0, _) = kkt0.solve_reduced(&(g.tr_mul(&h)), &b);
    let mut s = &h - &g * &x0;
    let alpha_p = layout.interior_shift(&s);
    if alpha_p >= -1e-8 {
        s += &e * (1.0 + alpha_p);
    }
    let (v, w) = kkt0.solve_reduced(&c, &RVec::zeros(a.nrows()));
    let mut z = -(&g * v);
    let alpha_d = layout.interior_shift(&z);
    if alpha_d >= -1e-8 {
        z += &e * (1.0 + alpha_d);
    }
    let mut it = Iterate {
        x: x0,
        y: -w,
        z,
        s,
        tau: 1.0,
        kappa: 1.0,
    };

    let b_scale = b.amax().max(h.amax()).max(1.0);
    let c_scale = c.amax().max(1.0);
    let tol = settings.tol;
    let mut best: Option<(SocpSolution, f64)> = None;

    for iter in 0..=settings.max_iters {
        let rx = a.tr_mul(&it.y) + g.tr_mul(&it.z) + &c * it.tau;
        let ry = -(&a * &it.x) + &b * it.tau;
        let rz = -(&g * &it.x) + &h * it.tau - &it.s;
        let rt = -c.dot(&it.x) - b.dot(&it.y) - h.dot(&it.z) - it.kappa;
        let mu = (it.s.dot(&it.z) + it.tau * it.kappa) / (layout.degree as f64 + 1.0);

        let pres = ry.amax().max(rz.amax()) / it.tau / b_scale;
        let dres = rx.amax() / it.tau / c_scale;
        let pcost = c.dot(&it.x) / it.tau;
        let dcost = -(b.dot(&it.y) + h.dot(&it.z)) / it.tau;
        let gap = it.s.dot(&it.z) / (it.tau * it.tau);
        let relgap = gap / pcost.abs().min(dcost.abs()).max(1.0);
        let residuals = Residuals {
            primal: pres,
            dual: dres,
            gap: relgap,
        };
        let make = |status, it: &Iterate| SocpSolution {
            x: &it.x / it.tau,
            y: &it.y / it.tau,
            z: &it.z / it.tau,
            s: &it.s / it.tau,
            objective: pcost,
            status,
            iterations: iter,
            residuals,
        };
        if pres <= tol && dres <= tol && (gap <= tol || relgap <= tol) {
            return Ok(make(SolveStatus::Optimal, &it));
        }
        let score = pres.max(dres).max(relgap.min(gap));
        if best.as_ref().is_none_or(|(_, s)| score < *s) {
            best = Some((make(SolveStatus::NearOptimal, &it), score));
        }

        // Infeasibility certificates.
        let hz = b.dot(&it.y) + h.dot(&it.z);
        if hz < 0.0 {
            let r = (a.tr_mul(&it.y) + g.tr_mul(&it.z)).amax() / c_scale;
            if r / -hz <= tol {
                return Ok(make(SolveStatus::Infeasible, &it));
            }
        }
        let cx = c.dot(&it.x);
        if cx < 0.0 {
            let r = (&a * &it.x).amax().max((&g * &it.x + &it.s).amax()) / b_scale;
            if r / -cx <= tol {
                return Ok(make(SolveStatus::Unbounded, &it));
            }
        }
        if iter == settings.max_iters {
            break;
        }

        let Some(scaling) = Scaling::nesterov_todd(&layout, &it.s, &it.z) else {
            break;
        };
        let lambda = scaling.apply(&it.z, false);
        let Some(kkt) = KktSolver::new(&a, &g, &scaling, &grams) else {
            break;
        };
        let (dx2, dy2, dz2) = kkt.solve(&c, &b, &h);
        let denom2 = c.dot(&dx2) + b.dot(&dy2) + h.dot(&dz2);

        let direction = |r_scale: f64, d_s: &RVec, d_tk: f64| {
            let rz_eff = &rz * -r_scale + scaling.apply(&layout.jordan_div(&lambda, d_s), false);
            let (dx1, dy1, dz1) = kkt.solve(&(&rx * -r_scale), &(&ry * -r_scale), &rz_eff);
            let num = -r_scale * rt + c.dot(&dx1) + b.dot(&dy1) + h.dot(&dz1) + d_tk / it.tau;
            let dtau = num / (denom2 + it.kappa / it.tau);
            let dx = dx1 - &dx2 * dtau;
            let dy = dy1 - &dy2 * dtau;
            let dz = dz1 - &dz2 * dtau;
            let w2dz = scaling.apply(&scaling.apply(&dz, false), false);
            let ds = scaling.apply(&layout.jordan_div(&lambda, d_s), false) - w2dz;
            let dkappa = (d_tk - it.kappa * dtau) / it.tau;
            (dx, dy, dz, ds, dtau, dkappa)
        };
        let step = |dz: &RVec, ds: &RVec, dtau: f64, dkappa: f64| {
            let mut alpha = layout.max_step(&it.s, ds, f64::INFINITY);
            alpha = layout.max_step(&it.z, dz, alpha);
            if dtau < 0.0 {
                alpha = alpha.min(-it.tau / dtau);
            }
            if dkappa < 0.0 {
                alpha = alpha.min(-it.kappa / dkappa);
            }
            alpha
        };

        // Predictor.
        let ll = layout.jordan(&lambda, &lambda);
        let (_, _, dz_a, ds_a, dtau_a, dkappa_a) = direction(1.0, &(-&ll), -it.tau * it.kappa);
        let alpha_a = step(&dz_a, &ds_a, dtau_a, dkappa_a).min(1.0);
        let sigma = (1.0 - alpha_a).powi(3).clamp(0.0, 1.0);

        // Corrector.
        let corr = layout.jordan(&scaling.apply(&ds_a, true), &scaling.apply(&dz_a, false));
        let d_s = -&ll - corr + &e * (sigma * mu);
        let d_tk = -it.tau * it.kappa - dtau_a * dkappa_a + sigma * mu;
        let (dx, dy, dz, ds, dtau, dkappa) = direction(1.0 - sigma, &d_s, d_tk);
        let alpha = (STEP_FRACTION * step(&dz, &ds, dtau, dkappa)).min(1.0);
        if !(alpha > 1e-12) || !dx.iter().all(|v| v.is_finite()) {
            break;
        }
        it.x += &dx * alpha;
        it.y += &dy * alpha;
        it.z += &dz * alpha;
        it.s += &ds * alpha;
        it.tau += dtau * alpha;
        it.kappa += dkappa * alpha;
    }

    // Stalled or out of iterations: fall back to the best iterate seen.
    match best {
        Some((sol, score)) if score <= STALL_FACTOR * tol => Ok(sol),
        Some((mut sol, _)) => {
            sol.status = SolveStatus::MaxIterations;
            Ok(sol)
        }
        None => Err(Error::Numerical(
            "interior-point method failed to start".into(),
        )),
    }
}
