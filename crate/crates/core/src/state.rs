//! Decision variables and the fixed problem data they act on.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::channel::{generate_channels, radar_channels, CommChannels, RadarChannels};
use crate::error::Result;
use crate::linalg::{orthonormality_residual, CMat, CVec, ZERO};
use crate::scenario::{Architecture, Scenario, Side};

/// A scenario together with its generated channels.
#[derive(Debug, Clone)]
pub struct Instance {
    pub scenario: Scenario,
    pub comm: CommChannels,
    pub radar: RadarChannels,
}

impl Instance {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let comm = generate_channels(&scenario)?;
        let radar = radar_channels(&scenario)?;
        Ok(Instance {
            scenario,
            comm,
            radar,
        })
    }

    /// Equivalent user channel `h̃_u = G^H Φ^H h_u`, so that the noiseless
    /// received sample is `h̃_u^H w[l]`.
    pub fn effective_user_channel(&self, u: usize, phi: &CMat) -> CVec {
        self.comm.g_mat.adjoint() * (phi.adjoint() * &self.comm.h_users[u])
    }
}

/// `𝕄`-PSK symbol indices for every user and slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SymbolBlock {
    pub psk_order: usize,
    /// `indices[u][l]` in `0..psk_order`.
    pub indices: Vec<Vec<usize>>,
}

impl SymbolBlock {
    pub fn random<R: Rng + ?Sized>(
        n_users: usize,
        code_len: usize,
        psk_order: usize,
        rng: &mut R,
    ) -> Self {
        let indices = (0..n_users)
            .map(|_| {
                (0..code_len)
                    .map(|_| rng.random_range(0..psk_order))
                    .collect()
            })
            .collect();
        SymbolBlock { psk_order, indices }
    }

    /// Phase of constellation point `m`: `2πm/𝕄 + π/𝕄`.
    pub fn phase_of(psk_order: usize, m: usize) -> f64 {
        let w = std::f64::consts::PI / psk_order as f64;
        2.0 * w * m as f64 + w
    }

    pub fn phase(&self, u: usize, l: usize) -> f64 {
        Self::phase_of(self.psk_order, self.indices[u][l])
    }

    pub fn symbol(&self, u: usize, l: usize) -> Complex64 {
        Complex64::from_polar(1.0, self.phase(u, l))
    }
}

/// Transmit matrix `W` (N_T × L) and the symbols it encodes.
#[derive(Debug, Clone)]
pub struct Waveform {
    pub w_mat: CMat,
    pub symbols: SymbolBlock,
}

impl Waveform {
    pub fn energy(&self) -> f64 {
        self.w_mat.norm_squared()
    }
}

/// Receive filters `U_k` (N_R × L_obs of the target's side).
#[derive(Debug, Clone)]
pub struct FilterBank {
    pub filters: Vec<CMat>,
}

/// Transmissive/reflective matrices, ADMM auxiliaries and duals.
#[derive(Debug, Clone)]
pub struct BdRisState {
    pub arch: Architecture,
    pub groups: usize,
    pub phi_t: CMat,
    pub phi_r: CMat,
    /// `Θ_g` (2M × M), kept on the Stiefel manifold.
    pub theta: Vec<CMat>,
    /// `Λ_g` (2M × M).
    pub duals: Vec<CMat>,
    pub penalty: f64,
}

impl BdRisState {
    pub fn n_cells(&self) -> usize {
        self.phi_t.nrows()
    }

    pub fn group_size(&self) -> usize {
        self.n_cells() / self.groups
    }

    pub fn phi(&self, side: Side) -> &CMat {
        match side {
            Side::Transmissive => &self.phi_t,
            Side::Reflective => &self.phi_r,
        }
    }

    /// `Φ_g = [Φ_{T,g}; Φ_{R,g}]`.
    pub fn phi_group(&self, g: usize) -> CMat {
        let m = self.group_size();
        let mut out = CMat::zeros(2 * m, m);
        let o = g * m;
        out.view_mut((0, 0), (m, m))
            .copy_from(&self.phi_t.view((o, o), (m, m)));
        out.view_mut((m, 0), (m, m))
            .copy_from(&self.phi_r.view((o, o), (m, m)));
        out
    }

    /// Write `Φ_g` back into the block-diagonal matrices.
    pub fn set_phi_group(&mut self, g: usize, block: &CMat) {
        let m = self.group_size();
        let o = g * m;
        self.phi_t
            .view_mut((o, o), (m, m))
            .copy_from(&block.view((0, 0), (m, m)));
        self.phi_r
            .view_mut((o, o), (m, m))
            .copy_from(&block.view((m, 0), (m, m)));
    }

    /// Cells whose transmissive (resp. reflective) coefficient may be
    /// nonzero. Only the double-RIS benchmark restricts this.
    pub fn active(&self, side: Side, cell: usize) -> bool {
        if self.arch != Architecture::DoubleRis {
            return true;
        }
        let half = self.n_cells() / 2;
        match side {
            Side::Transmissive => cell < half,
            Side::Reflective => cell >= half,
        }
    }

    /// `max_g ‖Φ_g^H Φ_g − I_M‖_F`.
    pub fn unitarity_residual(&self) -> f64 {
        (0..self.groups)
            .map(|g| orthonormality_residual(&self.phi_group(g)))
            .fold(0.0, f64::max)
    }

    /// `max_g ‖Φ_g − Θ_g‖_F`.
    pub fn consensus_residual(&self) -> f64 {
        (0..self.groups)
            .map(|g| (self.phi_group(g) - &self.theta[g]).norm())
            .fold(0.0, f64::max)
    }

    /// Entries outside the group blocks (or outside the double-RIS masks).
    pub fn off_structure_norm(&self) -> f64 {
        let n = self.n_cells();
        let m = self.group_size();
        let mut acc = 0.0;
        for side in Side::BOTH {
            let phi = self.phi(side);
            for i in 0..n {
                for j in 0..n {
                    let inside = i / m == j / m && self.active(side, i) && self.active(side, j);
                    if !inside && phi[(i, j)] != ZERO {
                        acc += phi[(i, j)].norm_sqr();
                    }
                }
            }
        }
        acc.sqrt()
    }
}
