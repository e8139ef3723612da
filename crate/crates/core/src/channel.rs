//! Propagation objects: ULA steering vectors, effective radar channels,
//! range-shift matrices and Rician communication links.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{complex_gaussian, db_to_lin, CMat, CVec, ONE};
use crate::scenario::Scenario;

/// Unit-norm ULA response `a(φ)` with entries `e^{j2π(d/λ)i·sinφ}/√N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector {
    pub entries: CVec,
}

pub fn steering_vector(angle_deg: f64, n: usize, spacing_ratio: f64) -> Result<SteeringVector> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "steering vector needs at least one element".into(),
        ));
    }
    let scale = 1.0 / (n as f64).sqrt();
    Ok(SteeringVector {
        entries: array_response(angle_deg, n, spacing_ratio) * Complex64::new(scale, 0.0),
    })
}

/// Unnormalized ULA response (unit-modulus entries).
fn array_response(angle_deg: f64, n: usize, spacing_ratio: f64) -> CVec {
    let k = 2.0 * std::f64::consts::PI * spacing_ratio * angle_deg.to_radians().sin();
    CVec::from_fn(n, |i, _| Complex64::from_polar(1.0, k * i as f64))
}

/// Effective radar channel `A(φ) = a_R(φ) a_T(φ)^H` (N_R × N_S).
pub fn radar_channel(
    angle_deg: f64,
    n_rx: usize,
    n_cells: usize,
    spacing_ratio: f64,
) -> Result<CMat> {
    let a_r = steering_vector(angle_deg, n_rx, spacing_ratio)?.entries;
    let a_t = steering_vector(angle_deg, n_cells, spacing_ratio)?.entries;
    Ok(&a_r * a_t.adjoint())
}

/// Range-shift selector `J_r` of size `L × L_obs`: row `i` has a one in
/// column `i + r` whenever that column lies inside the observation window.
///
/// For `0 ≤ r ≤ L_obs − L` this is `[0_{L×r}, I_L, 0]`; other offsets clip
/// the rows that fall outside the window to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ShiftMatrix {
    pub offset: i64,
    pub rows: usize,
    pub cols: usize,
}

impl ShiftMatrix {
    /// Column hit by row `i`, if inside the window.
    pub fn column_of(&self, i: usize) -> Option<usize> {
        let j = i as i64 + self.offset;
        (j >= 0 && (j as usize) < self.cols).then_some(j as usize)
    }

    pub fn matrix(&self) -> CMat {
        let mut m = CMat::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            if let Some(j) = self.column_of(i) {
                m[(i, j)] = ONE;
            }
        }
        m
    }

    /// `X J_r` for `X` with `L` columns, without forming `J_r`.
    pub fn right_apply(&self, x: &CMat) -> CMat {
        assert_eq!(x.ncols(), self.rows, "right_apply: X must have L columns");
        let mut out = CMat::zeros(x.nrows(), self.cols);
        for i in 0..self.rows {
            if let Some(j) = self.column_of(i) {
                out.set_column(j, &x.column(i));
            }
        }
        out
    }

    /// `Y J_r^T` for `Y` with `L_obs` columns.
    pub fn right_apply_transpose(&self, y: &CMat) -> CMat {
        assert_eq!(
            y.ncols(),
            self.cols,
            "right_apply_transpose: Y must have L_obs columns"
        );
        let mut out = CMat::zeros(y.nrows(), self.rows);
        for i in 0..self.rows {
            if let Some(j) = self.column_of(i) {
                out.set_column(i, &y.column(j));
            }
        }
        out
    }
}

pub fn shift_matrix(offset: i64, code_len: usize, l_obs: usize) -> ShiftMatrix {
    ShiftMatrix {
        offset,
        rows: code_len,
        cols: l_obs,
    }
}

/// Rician link `√pl·(√(κ/(1+κ))·LoS + √(1/(1+κ))·NLoS)` with unit-variance
/// circular Gaussian NLoS entries. An infinite `κ` returns the scaled LoS
/// component.
pub fn rician_channel<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    k_factor_db: f64,
    los_component: &CMat,
    link_gain: f64,
    rng: &mut R,
) -> Result<CMat> {
    if los_component.shape() != (rows, cols) {
        return Err(Error::Dimension(format!(
            "LoS component is {:?}, expected ({rows}, {cols})",
            los_component.shape()
        )));
    }
    let amp = link_gain.sqrt();
    let kappa = db_to_lin(k_factor_db);
    let nlos = complex_gaussian(rows, cols, rng);
    if kappa.is_infinite() {
        return Ok(los_component * Complex64::new(amp, 0.0));
    }
    let los_w = (kappa / (1.0 + kappa)).sqrt();
    let nlos_w = (1.0 / (1.0 + kappa)).sqrt();
    Ok(
        (los_component * Complex64::new(los_w, 0.0) + nlos * Complex64::new(nlos_w, 0.0))
            * Complex64::new(amp, 0.0),
    )
}

/// Communication channels `G` (DFBS→RIS) and `h_u` (RIS→user).
#[derive(Debug, Clone)]
pub struct CommChannels {
    pub g_mat: CMat,
    pub h_users: Vec<CVec>,
    /// Azimuth (degrees) of each user as seen from the RIS.
    pub user_azimuths: Vec<f64>,
}

/// Users without a configured azimuth are placed uniformly in this sector.
pub const USER_SECTOR_DEG: f64 = 60.0;

/// Generate the communication links of a scenario; a pure function of the
/// scenario and its `rng_seed`.
pub fn generate_channels(s: &Scenario) -> Result<CommChannels> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.rng_seed);
    // DFBS at (−d_BR, 0) faces the RIS at the origin: broadside on both ends.
    let los_g = array_response(0.0, s.n_cells, s.spacing_ratio)
        * array_response(0.0, s.n_tx, s.spacing_ratio).adjoint();
    let g_gain = s.pathloss.gain(s.bs_ris_distance, s.pathloss.bs_ris)?;
    let g_mat = rician_channel(s.n_cells, s.n_tx, s.rician_k_db, &los_g, g_gain, &mut rng)?;

    let mut h_users = Vec::with_capacity(s.users.len());
    let mut user_azimuths = Vec::with_capacity(s.users.len());
    for u in &s.users {
        let az = match u.azimuth {
            Some(a) => a,
            None => rng.random_range(-USER_SECTOR_DEG..USER_SECTOR_DEG),
        };
        let los = CMat::from_column_slice(
            s.n_cells,
            1,
            array_response(az, s.n_cells, s.spacing_ratio).as_slice(),
        );
        let gain = s.pathloss.gain(u.distance, s.pathloss.ris_user)?;
        let h = rician_channel(s.n_cells, 1, s.rician_k_db, &los, gain, &mut rng)?;
        h_users.push(h.column(0).into_owned());
        user_azimuths.push(az);
    }
    Ok(CommChannels {
        g_mat,
        h_users,
        user_azimuths,
    })
}

/// Effective radar channels for every target and clutter source.
#[derive(Debug, Clone)]
pub struct RadarChannels {
    pub targets: Vec<CMat>,
    pub clutters: Vec<CMat>,
}

pub fn radar_channels(s: &Scenario) -> Result<RadarChannels> {
    let targets = s
        .targets
        .iter()
        .map(|t| radar_channel(t.azimuth, s.n_rx, s.n_cells, s.spacing_ratio))
        .collect::<Result<Vec<_>>>()?;
    let clutters = s
        .clutters
        .iter()
        .map(|c| radar_channel(c.azimuth, s.n_rx, s.n_cells, s.spacing_ratio))
        .collect::<Result<Vec<_>>>()?;
    Ok(RadarChannels { targets, clutters })
}
