//! SCNR in trace form and its three quadratic-form rewrites (in the receive
//! filter, the waveform and the BD-RIS coefficients), plus the map between a
//! block-diagonal matrix and its stacked non-zero blocks.
//!
//! Every form is a weighted sum of rank-one terms `Σ c_i v_i v_i^H`, which is
//! kept in that factored shape; dense matrices are only built on request.

use num_complex::Complex64;

use crate::channel::{shift_matrix, ShiftMatrix};
use crate::error::{Error, Result};
use crate::linalg::{inner, unvectorize, vectorize, CMat, CVec};
use crate::scenario::Side;
use crate::state::Instance;

/// `Σ_i c_i v_i v_i^H` with `c_i ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneSum {
    pub dim: usize,
    pub weights: Vec<f64>,
    pub vectors: Vec<CVec>,
}

impl RankOneSum {
    pub fn new(dim: usize) -> Self {
        RankOneSum {
            dim,
            weights: Vec::new(),
            vectors: Vec::new(),
        }
    }

    pub fn push(&mut self, weight: f64, v: CVec) {
        debug_assert_eq!(v.len(), self.dim);
        debug_assert!(weight >= 0.0);
        self.weights.push(weight);
        self.vectors.push(v);
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// `x^H (Σ c_i v_i v_i^H) x`.
    pub fn quad(&self, x: &CVec) -> f64 {
        self.weights
            .iter()
            .zip(&self.vectors)
            .map(|(c, v)| c * inner(v, x).norm_sqr())
            .sum()
    }

    /// `y^H (Σ c_i v_i v_i^H) x`.
    pub fn bilinear(&self, y: &CVec, x: &CVec) -> Complex64 {
        self.weights
            .iter()
            .zip(&self.vectors)
            .map(|(c, v)| inner(y, v) * inner(v, x) * *c)
            .sum()
    }

    /// `(Σ c_i v_i v_i^H) x`.
    pub fn apply(&self, x: &CVec) -> CVec {
        let mut out = CVec::zeros(self.dim);
        for (c, v) in self.weights.iter().zip(&self.vectors) {
            out.axpy(inner(v, x) * *c, v, ONE_C);
        }
        out
    }

    pub fn to_dense(&self) -> CMat {
        let mut m = CMat::zeros(self.dim, self.dim);
        for (c, v) in self.weights.iter().zip(&self.vectors) {
            m += v * v.adjoint() * Complex64::new(*c, 0.0);
        }
        m
    }

    /// Exact factor `R` (one row `√c_i v_i^H` per term) with `R^H R` equal
    /// to the form.
    pub fn factor(&self) -> CMat {
        let mut r = CMat::zeros(self.len(), self.dim);
        for (i, (c, v)) in self.weights.iter().zip(&self.vectors).enumerate() {
            let s = c.sqrt();
            for j in 0..self.dim {
                r[(i, j)] = v[j].conj() * s;
            }
        }
        r
    }

    pub fn scaled(&self, s: f64) -> RankOneSum {
        RankOneSum {
            dim: self.dim,
            weights: self.weights.iter().map(|c| c * s).collect(),
            vectors: self.vectors.clone(),
        }
    }

    /// Apply a linear map to every term vector.
    pub fn map_vectors(&self, dim: usize, f: impl Fn(&CVec) -> CVec) -> RankOneSum {
        RankOneSum {
            dim,
            weights: self.weights.clone(),
            vectors: self.vectors.iter().map(f).collect(),
        }
    }
}

const ONE_C: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// SCNR of one target as a ratio of quadratic forms in some variable `x`:
/// `x^H S x / (x^H C x + noise_identity·‖x‖² + noise_const)`.
#[derive(Debug, Clone)]
pub struct ScnrForm {
    pub target: usize,
    pub signal: RankOneSum,
    pub interference: RankOneSum,
    pub noise_identity: f64,
    pub noise_const: f64,
}

impl ScnrForm {
    pub fn numerator(&self, x: &CVec) -> f64 {
        self.signal.quad(x)
    }

    pub fn denominator(&self, x: &CVec) -> f64 {
        self.interference.quad(x) + self.noise_identity * x.norm_squared() + self.noise_const
    }

    pub fn ratio(&self, x: &CVec) -> f64 {
        self.numerator(x) / self.denominator(x)
    }

    /// Dense `(S, C)` pair.
    pub fn dense(&self) -> (CMat, CMat) {
        (self.signal.to_dense(), self.interference.to_dense())
    }
}

/// One echo reaching the receiver: channel, expected power and range shift.
struct Echo<'a> {
    channel: &'a CMat,
    power: f64,
    shift: ShiftMatrix,
}

/// Signal echo of target `k` followed by the interfering echoes on its side.
fn echoes(inst: &Instance, k: usize) -> (Echo<'_>, Vec<Echo<'_>>) {
    let s = &inst.scenario;
    let t = &s.targets[k];
    let l_obs = s.window(t.side).l_obs;
    let signal = Echo {
        channel: &inst.radar.targets[k],
        power: t.power,
        shift: shift_matrix(t.ring, s.code_len, l_obs),
    };
    let mut rest = Vec::new();
    for (p, tp) in s.targets_on(t.side) {
        if p != k {
            rest.push(Echo {
                channel: &inst.radar.targets[p],
                power: tp.power,
                shift: shift_matrix(tp.ring, s.code_len, l_obs),
            });
        }
    }
    for (q, c) in s.clutters_on(t.side) {
        rest.push(Echo {
            channel: &inst.radar.clutters[q],
            power: c.power,
            shift: shift_matrix(c.ring, s.code_len, l_obs),
        });
    }
    (signal, rest)
}

fn check_filter(inst: &Instance, k: usize, u_k: &CMat) -> Result<()> {
    let s = &inst.scenario;
    let side = s.targets[k].side;
    let want = (s.n_rx, s.window(side).l_obs);
    if u_k.shape() != want {
        return Err(Error::Dimension(format!(
            "filter of target {k} is {:?}, expected {want:?}",
            u_k.shape()
        )));
    }
    Ok(())
}

/// `Tr(U^H A Φ G W J)`.
fn echo_response(u: &CMat, echo: &Echo<'_>, phi_g_w: &CMat) -> Complex64 {
    let y = echo.shift.right_apply(&(echo.channel * phi_g_w));
    u.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// SCNR of target `k` evaluated directly from the trace expressions.
pub fn scnr_trace(inst: &Instance, w: &CMat, phi: &CMat, u_k: &CMat, k: usize) -> Result<f64> {
    check_filter(inst, k, u_k)?;
    let noise = inst.scenario.noise_radar * u_k.norm_squared();
    if noise <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "receive filter of target {k} is zero"
        )));
    }
    let pgw = phi * &inst.comm.g_mat * w;
    let (signal, rest) = echoes(inst, k);
    let num = signal.power * echo_response(u_k, &signal, &pgw).norm_sqr();
    let den: f64 = rest
        .iter()
        .map(|e| e.power * echo_response(u_k, e, &pgw).norm_sqr())
        .sum::<f64>()
        + noise;
    Ok(num / den)
}

/// Per-target SCNR for every target, each side using its own matrix.
pub fn scnr_all(
    inst: &Instance,
    w: &CMat,
    phi_t: &CMat,
    phi_r: &CMat,
    filters: &[CMat],
) -> Result<Vec<f64>> {
    (0..inst.scenario.targets.len())
        .map(|k| {
            let phi = match inst.scenario.targets[k].side {
                Side::Transmissive => phi_t,
                Side::Reflective => phi_r,
            };
            scnr_trace(inst, w, phi, &filters[k], k)
        })
        .collect()
}

/// Forms in `u_k = vec(U_k)`: term vectors `vec(A Φ G W J)`.
pub fn build_filter_forms(inst: &Instance, w: &CMat, phi: &CMat, k: usize) -> ScnrForm {
    let (signal, rest) = echoes(inst, k);
    let pgw = phi * &inst.comm.g_mat * w;
    let term = |e: &Echo<'_>| vectorize(&e.shift.right_apply(&(e.channel * &pgw)));
    let dim = inst.scenario.n_rx * signal.shift.cols;
    let mut sig = RankOneSum::new(dim);
    sig.push(signal.power, term(&signal));
    let mut interf = RankOneSum::new(dim);
    for e in &rest {
        interf.push(e.power, term(e));
    }
    ScnrForm {
        target: k,
        signal: sig,
        interference: interf,
        noise_identity: inst.scenario.noise_radar,
        noise_const: 0.0,
    }
}

/// Forms in `w = vec(W)`: term vectors `vec(G^H Φ^H A^H U J^T)`.
pub fn build_waveform_forms(inst: &Instance, phi: &CMat, u_k: &CMat, k: usize) -> ScnrForm {
    let (signal, rest) = echoes(inst, k);
    let pg_h = (phi * &inst.comm.g_mat).adjoint();
    let term = |e: &Echo<'_>| {
        vectorize(&(&pg_h * e.channel.adjoint() * e.shift.right_apply_transpose(u_k)))
    };
    let dim = inst.scenario.n_tx * inst.scenario.code_len;
    let mut sig = RankOneSum::new(dim);
    sig.push(signal.power, term(&signal));
    let mut interf = RankOneSum::new(dim);
    for e in &rest {
        interf.push(e.power, term(e));
    }
    ScnrForm {
        target: k,
        signal: sig,
        interference: interf,
        noise_identity: 0.0,
        noise_const: inst.scenario.noise_radar * u_k.norm_squared(),
    }
}

/// Forms in `φ = vec(Φ)`: term vectors `vec(A^H U J^T W^H G^H)`.
pub fn build_phase_forms(inst: &Instance, w: &CMat, u_k: &CMat, k: usize) -> ScnrForm {
    let (signal, rest) = echoes(inst, k);
    let gw_h = (&inst.comm.g_mat * w).adjoint();
    let term = |e: &Echo<'_>| {
        vectorize(&(e.channel.adjoint() * e.shift.right_apply_transpose(u_k) * &gw_h))
    };
    let n = inst.scenario.n_cells;
    let mut sig = RankOneSum::new(n * n);
    sig.push(signal.power, term(&signal));
    let mut interf = RankOneSum::new(n * n);
    for e in &rest {
        interf.push(e.power, term(e));
    }
    ScnrForm {
        target: k,
        signal: sig,
        interference: interf,
        noise_identity: 0.0,
        noise_const: inst.scenario.noise_radar * u_k.norm_squared(),
    }
}

/// Linear map `K_G` from `vec(Φ)` (N_S²) to `vec([Φ_1 … Φ_G])` (M·N_S) for
/// block-diagonal `Φ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupMap {
    pub n_cells: usize,
    pub groups: usize,
    /// `index[t]` is the position in `vec(Φ)` of stacked entry `t`.
    pub index: Vec<usize>,
}

pub fn group_map(groups: usize, group_size: usize) -> Result<GroupMap> {
    if groups == 0 || group_size == 0 {
        return Err(Error::Dimension("group map needs G ≥ 1 and M ≥ 1".into()));
    }
    let n = groups * group_size;
    let m = group_size;
    let mut index = vec![0; m * n];
    for g in 0..groups {
        for j in 0..m {
            for i in 0..m {
                index[i + m * (g * m + j)] = (g * m + i) + n * (g * m + j);
            }
        }
    }
    Ok(GroupMap {
        n_cells: n,
        groups,
        index,
    })
}

impl GroupMap {
    pub fn group_size(&self) -> usize {
        self.n_cells / self.groups
    }

    pub fn stacked_len(&self) -> usize {
        self.index.len()
    }

    /// Dense binary `K_G`.
    pub fn matrix(&self) -> CMat {
        let mut k = CMat::zeros(self.stacked_len(), self.n_cells * self.n_cells);
        for (t, &i) in self.index.iter().enumerate() {
            k[(t, i)] = ONE_C;
        }
        k
    }

    /// `K_G v`.
    pub fn select(&self, v: &CVec) -> CVec {
        assert_eq!(
            v.len(),
            self.n_cells * self.n_cells,
            "select: expected a length-N_S² vector"
        );
        CVec::from_iterator(self.index.len(), self.index.iter().map(|&i| v[i]))
    }

    /// `K_G^H x`.
    pub fn expand(&self, x: &CVec) -> CVec {
        let mut v = CVec::zeros(self.n_cells * self.n_cells);
        for (t, &i) in self.index.iter().enumerate() {
            v[i] = x[t];
        }
        v
    }

    /// `[Φ_1 … Φ_G]` (M × N_S).
    pub fn stack(&self, phi: &CMat) -> CMat {
        unvectorize(
            &self.select(&vectorize(phi)),
            self.group_size(),
            self.n_cells,
        )
    }

    /// Block-diagonal matrix with the given stacked blocks.
    pub fn unstack(&self, stacked: &CMat) -> CMat {
        unvectorize(
            &self.expand(&vectorize(stacked)),
            self.n_cells,
            self.n_cells,
        )
    }

    /// `K_G Ξ K_G^H` for a dense form.
    pub fn de_diagonalize(&self, xi: &CMat) -> Result<CMat> {
        let n2 = self.n_cells * self.n_cells;
        if xi.shape() != (n2, n2) {
            return Err(Error::Dimension(format!(
                "form is {:?}, expected {n2}×{n2}",
                xi.shape()
            )));
        }
        let d = self.stacked_len();
        Ok(CMat::from_fn(d, d, |a, b| {
            xi[(self.index[a], self.index[b])]
        }))
    }

    /// The same reduction applied to a factored form.
    pub fn de_diagonalize_form(&self, form: &RankOneSum) -> RankOneSum {
        form.map_vectors(self.stacked_len(), |v| self.select(v))
    }

    /// `H̃ = [H̄^{11}; …; H̄^{GG}]` (N_S × M) so that `Tr(H̃ Φ̃) = Tr(H̄ Φ)`.
    pub fn h_tilde(&self, h_bar: &CMat) -> Result<CMat> {
        let n = self.n_cells;
        if h_bar.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "H̄ is {:?}, expected {n}×{n}",
                h_bar.shape()
            )));
        }
        let m = self.group_size();
        Ok(CMat::from_fn(n, m, |r, j| {
            let g = r / m;
            h_bar[(r, g * m + j)]
        }))
    }
}

/// Coefficients `c` with `Tr(H̃ Φ̃) = c^T vec(Φ̃)` (no conjugation).
pub fn trace_functional(h_tilde: &CMat) -> CVec {
    vectorize(&h_tilde.transpose())
}
