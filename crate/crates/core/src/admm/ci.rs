//! Constructive-interference constraints, in noise-normalized units.

use num_complex::Complex64;

use crate::linalg::{CMat, CVec};
use crate::scenario::Side;
use crate::state::{Instance, SymbolBlock};

/// The two rotations `sinΩ ± j·cosΩ` that turn the CI sector into a pair of
/// half-planes.
pub fn ci_rotations(half_angle: f64) -> [Complex64; 2] {
    let (s, c) = half_angle.sin_cos();
    [Complex64::new(s, c), Complex64::new(s, -c)]
}

/// One half-plane constraint `Re{α e^{−j∠s} h̃^H w[l]} / σ_C ≥ √Γ sinΩ`.
#[derive(Debug, Clone)]
pub struct CiRow {
    pub user: usize,
    pub slot: usize,
    /// `g` with `Re{g^H w[l]}` equal to the left-hand side.
    pub coeff: CVec,
    pub rhs: f64,
}

/// Matrix used by user `u`: transmissive users see `Φ_T`, reflective `Φ_R`.
pub fn user_phi<'a>(inst: &Instance, u: usize, phi_t: &'a CMat, phi_r: &'a CMat) -> &'a CMat {
    match inst.scenario.users[u].side {
        Side::Transmissive => phi_t,
        Side::Reflective => phi_r,
    }
}

/// All CI rows for a fixed BD-RIS configuration.
pub fn ci_rows(inst: &Instance, phi_t: &CMat, phi_r: &CMat, symbols: &SymbolBlock) -> Vec<CiRow> {
    let s = &inst.scenario;
    let sigma = s.noise_comm.sqrt();
    let omega = s.ci_half_angle();
    let mut rows = Vec::new();
    for u in 0..s.users.len() {
        let h = inst.effective_user_channel(u, user_phi(inst, u, phi_t, phi_r))
            / Complex64::new(sigma, 0.0);
        let rhs = s.qos_linear(u).sqrt() * omega.sin();
        for l in 0..s.code_len {
            let rot = Complex64::from_polar(1.0, symbols.phase(u, l));
            for alpha in ci_rotations(omega) {
                rows.push(CiRow {
                    user: u,
                    slot: l,
                    coeff: &h * (alpha.conj() * rot),
                    rhs,
                });
            }
        }
    }
    rows
}

/// Smallest CI margin over users and slots,
/// `(Re z − √Γ)·sinΩ − |Im z|·cosΩ` with `z = e^{−j∠s} h̃^H w[l] / σ_C`.
/// Nonnegative exactly when every received symbol lies in its CI region.
pub fn ci_slack(
    inst: &Instance,
    w: &CMat,
    phi_t: &CMat,
    phi_r: &CMat,
    symbols: &SymbolBlock,
) -> f64 {
    let s = &inst.scenario;
    let sigma = s.noise_comm.sqrt();
    let (so, co) = s.ci_half_angle().sin_cos();
    let mut worst = f64::INFINITY;
    for u in 0..s.users.len() {
        let h = inst.effective_user_channel(u, user_phi(inst, u, phi_t, phi_r));
        let root = s.qos_linear(u).sqrt();
        for l in 0..s.code_len {
            let y = h.dotc(&w.column(l));
            let z = y * Complex64::from_polar(1.0, -symbols.phase(u, l)) / sigma;
            worst = worst.min((z.re - root) * so - z.im.abs() * co.max(0.0));
        }
    }
    worst
}
