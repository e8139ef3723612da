//! Second-order cone programs in the standard form
//!
//! ```text
//! minimize    cᵀx
//! subject to  A x = b
//!             G x + s = h,   s ∈ ℝ₊^l × Q^{q_1} × … × Q^{q_N}
//! ```
//!
//! together with helpers that express complex-valued constraints over the
//! real vector `[Re(w); Im(w)]`.

mod embed;
mod ipm;

use std::fmt::Write as _;

pub use embed::{embed_matrix, embed_vector, im_functional, re_functional, unembed_vector};
pub use ipm::{solve_socp, SolverSettings};

use crate::error::{Error, Result};
use crate::linalg::{RMat, RVec};

/// One block of the cone `K`, in row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeBlock {
    /// `dim` rows that must be nonnegative.
    Nonneg(usize),
    /// `(t, u)` with `‖u‖ ≤ t`, spanning `dim` rows.
    Soc(usize),
}

impl ConeBlock {
    pub fn dim(self) -> usize {
        match self {
            ConeBlock::Nonneg(d) | ConeBlock::Soc(d) => d,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SocpProblem {
    n: usize,
    c: RVec,
    eq_rows: Vec<RVec>,
    eq_rhs: Vec<f64>,
    g_rows: Vec<RVec>,
    h: Vec<f64>,
    cones: Vec<ConeBlock>,
}

impl SocpProblem {
    /// Feasibility problem in `n` variables with a zero objective.
    pub fn new(n: usize) -> Self {
        SocpProblem {
            n,
            c: RVec::zeros(n),
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            g_rows: Vec::new(),
            h: Vec::new(),
            cones: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn objective(&self) -> &RVec {
        &self.c
    }

    pub fn cones(&self) -> &[ConeBlock] {
        &self.cones
    }

    pub fn set_objective(&mut self, c: RVec) -> Result<()> {
        self.check_len(c.len())?;
        self.c = c;
        Ok(())
    }

    /// `row·x = rhs`.
    pub fn add_equality(&mut self, row: RVec, rhs: f64) -> Result<()> {
        self.check_len(row.len())?;
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
        Ok(())
    }

    /// `row·x ≤ rhs`.
    pub fn add_le(&mut self, row: RVec, rhs: f64) -> Result<()> {
        self.check_len(row.len())?;
        self.g_rows.push(row);
        self.h.push(rhs);
        match self.cones.last_mut() {
            Some(ConeBlock::Nonneg(d)) => *d += 1,
            _ => self.cones.push(ConeBlock::Nonneg(1)),
        }
        Ok(())
    }

    /// `‖F x + g‖ ≤ eᵀx + d`.
    pub fn add_soc(&mut self, f: &RMat, g: &RVec, e: &RVec, d: f64) -> Result<()> {
        self.check_len(f.ncols())?;
        self.check_len(e.len())?;
        if g.len() != f.nrows() {
            return Err(Error::Dimension(format!(
                "cone offset has {} rows, map has {}",
                g.len(),
                f.nrows()
            )));
        }
        if !f
            .iter()
            .chain(g.iter())
            .chain(e.iter())
            .all(|v| v.is_finite())
            || !d.is_finite()
        {
            return Err(Error::InvalidArgument("cone data must be finite".into()));
        }
        self.g_rows.push(-e);
        self.h.push(d);
        for i in 0..f.nrows() {
            self.g_rows.push(-f.row(i).transpose());
            self.h.push(g[i]);
        }
        self.cones.push(ConeBlock::Soc(f.nrows() + 1));
        Ok(())
    }

    /// `‖F x + f₀‖² ≤ t` with `t = eᵀx + d`, posed as
    /// `‖[2(Fx + f₀); t − 1]‖ ≤ t + 1`.
    pub fn add_quadratic_le(&mut self, f: &RMat, f0: &RVec, e: &RVec, d: f64) -> Result<()> {
        self.add_quadratic_le_scaled(f, f0, e, d, 1.0)
    }

    /// Same constraint as [`Self::add_quadratic_le`], posed as
    /// `‖[2√κ(Fx + f₀); t − κ]‖ ≤ t + κ`. Choosing `κ` near the expected
    /// size of `t` keeps the cone well conditioned when `t` is small.
    pub fn add_quadratic_le_scaled(
        &mut self,
        f: &RMat,
        f0: &RVec,
        e: &RVec,
        d: f64,
        kappa: f64,
    ) -> Result<()> {
        let r = f.nrows();
        if f0.len() != r {
            return Err(Error::Dimension(format!(
                "offset has {} rows, map has {r}",
                f0.len()
            )));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "cone scale must be positive, got {kappa}"
            )));
        }
        let k2 = 2.0 * kappa.sqrt();
        let mut map = RMat::zeros(r + 1, self.n);
        map.rows_mut(0, r).copy_from(&(f * k2));
        map.row_mut(r).copy_from(&e.transpose());
        let mut off = RVec::zeros(r + 1);
        off.rows_mut(0, r).copy_from(&(f0 * k2));
        off[r] = d - kappa;
        self.add_soc(&map, &off, e, d + kappa)
    }

    /// `‖x[range] − center‖ ≤ radius`.
    pub fn add_ball(&mut self, start: usize, center: &RVec, radius: f64) -> Result<()> {
        let k = center.len();
        if start + k > self.n {
            return Err(Error::Dimension("ball exceeds the variable vector".into()));
        }
        let mut f = RMat::zeros(k, self.n);
        for i in 0..k {
            f[(i, start + i)] = 1.0;
        }
        self.add_soc(&f, &(-center), &RVec::zeros(self.n), radius)
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::Dimension(format!(
                "row has length {len}, problem has {} variables",
                self.n
            )));
        }
        Ok(())
    }

    /// Stacked data `(A, b, G, h)` of `min cᵀx` s.t. `Ax = b`, `h − Gx ∈ K`.
    pub fn dense(&self) -> (RMat, RVec, RMat, RVec) {
        let a = stack_rows(&self.eq_rows, self.n);
        let b = RVec::from_vec(self.eq_rhs.clone());
        let g = stack_rows(&self.g_rows, self.n);
        let h = RVec::from_vec(self.h.clone());
        (a, b, g, h)
    }

    /// Plain-text dump for cross-checking with other solvers.
    ///
    /// Layout: a `socp n p m` header, then `c` on one line, `eq` lines
    /// (`coefficients… rhs`), `cone` lines (`nonneg d` / `soc d`), and `g`
    /// lines (`coefficients… h`), all whitespace separated in `{:e}`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "socp {} {} {}",
            self.n,
            self.eq_rows.len(),
            self.g_rows.len()
        );
        let join = |v: &RVec| {
            v.iter()
                .map(|x| format!("{x:e}"))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let _ = writeln!(out, "c {}", join(&self.c));
        for (r, b) in self.eq_rows.iter().zip(&self.eq_rhs) {
            let _ = writeln!(out, "eq {} {b:e}", join(r));
        }
        for cone in &self.cones {
            let _ = match cone {
                ConeBlock::Nonneg(d) => writeln!(out, "cone nonneg {d}"),
                ConeBlock::Soc(d) => writeln!(out, "cone soc {d}"),
            };
        }
        for (r, h) in self.g_rows.iter().zip(&self.h) {
            let _ = writeln!(out, "g {} {h:e}", join(r));
        }
        out
    }
}

fn stack_rows(rows: &[RVec], n: usize) -> RMat {
    let mut m = RMat::zeros(rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from(&r.transpose());
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    /// Progress stalled with residuals within 100× the requested tolerance.
    NearOptimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

#[derive(Debug, Clone)]
pub struct SocpSolution {
    pub x: RVec,
    pub y: RVec,
    pub z: RVec,
    pub s: RVec,
    pub objective: f64,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: Residuals,
}

impl SocpSolution {
    /// Accept optimal and near-optimal points, map the rest to errors.
    pub fn require_optimal(self) -> Result<SocpSolution> {
        match self.status {
            SolveStatus::Optimal | SolveStatus::NearOptimal => Ok(self),
            SolveStatus::Infeasible => Err(Error::Infeasible),
            SolveStatus::Unbounded => Err(Error::Numerical("cone program is unbounded".into())),
            SolveStatus::MaxIterations => Err(Error::MaxIterations(self.iterations)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builder_tracks_cone_layout() {
        let mut p = SocpProblem::new(2);
        p.add_le(RVec::from_vec(vec![1.0, 0.0]), 1.0).unwrap();
        p.add_le(RVec::from_vec(vec![0.0, 1.0]), 1.0).unwrap();
        p.add_ball(0, &RVec::zeros(2), 3.0).unwrap();
        p.add_le(RVec::from_vec(vec![1.0, 1.0]), 1.0).unwrap();
        assert_eq!(
            p.cones(),
            &[
                ConeBlock::Nonneg(2),
                ConeBlock::Soc(3),
                ConeBlock::Nonneg(1)
            ]
        );
        assert!(p.add_le(RVec::zeros(3), 0.0).is_err());
        let dump = p.dump();
        assert!(dump.starts_with("socp 2 0 6\n"));
        assert_eq!(dump.lines().filter(|l| l.starts_with("g ")).count(), 6);
    }

    #[test]
    fn rotated_cone_matches_quadratic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        let f = RMat::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
        let f0 = RVec::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
        let e = RVec::from_vec(vec![0.5, -0.25]);
        let mut p = SocpProblem::new(2);
        p.add_quadratic_le(&f, &f0, &e, 0.7).unwrap();
        p.add_quadratic_le_scaled(&f, &f0, &e, 0.7, 1e-3).unwrap();
        let (_, _, g, h) = p.dense();
        for _ in 0..100 {
            let x = RVec::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
            let s = &h - &g * &x;
            let quad = (&f * &x + &f0).norm_squared() <= e.dot(&x) + 0.7;
            for o in [0, 5] {
                let in_cone = s.rows(o + 1, 4).norm() <= s[o];
                assert_eq!(in_cone, quad);
            }
        }
    }

    #[test]
    fn power_budget_ball_radius() {
        let mut p = SocpProblem::new(2);
        p.add_ball(0, &RVec::zeros(2), 10f64.sqrt()).unwrap();
        let (_, _, _, h) = p.dense();
        assert!((h[0] - 10f64.sqrt()).abs() < 1e-15);
    }
}
