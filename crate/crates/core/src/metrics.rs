//! Solution evaluation: detection probability, Monte Carlo bit error rate
//! and beampatterns.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::admm::user_phi;
use crate::channel::{radar_channel, shift_matrix, steering_vector};
use crate::error::{Error, Result};
use crate::linalg::CMat;
use crate::scenario::Side;
use crate::state::{Instance, Waveform};

/// Power assigned to zero-signal cells, in dB relative to the peak.
pub const DB_FLOOR: f64 = -120.0;

/// Generalized Marcum Q-function of order one.
///
/// Evaluated as the Poisson mixture of the noncentral χ² tail,
/// `Q₁(a,b) = Σ_j P(j; a²/2) · P(N ≤ j; b²/2)`, truncated where the
/// remaining Poisson mass of the first factor is below 1e−16.
pub fn marcum_q1(a: f64, b: f64) -> f64 {
    let a = a.max(0.0);
    let b = b.max(0.0);
    if b == 0.0 {
        return 1.0;
    }
    let mu = 0.5 * b * b;
    if a == 0.0 {
        return (-mu).exp();
    }
    let lambda = 0.5 * a * a;
    let (ln_l, ln_m) = (lambda.ln(), mu.ln());
    let last = (lambda + 40.0 * lambda.sqrt() + 60.0).ceil() as usize;
    let mut ln_pj = -lambda;
    let mut ln_qi = -mu;
    let mut cdf = ln_qi.exp();
    let mut sum = ln_pj.exp() * cdf;
    for j in 1..=last {
        let jf = j as f64;
        ln_pj += ln_l - jf.ln();
        ln_qi += ln_m - jf.ln();
        cdf = (cdf + ln_qi.exp()).min(1.0);
        sum += ln_pj.exp() * cdf;
    }
    sum.clamp(0.0, 1.0)
}

/// `P_D = Q₁(√(2·scnr), √(−2 ln p_fa))`.
pub fn detection_probability(scnr: f64, p_fa: f64) -> Result<f64> {
    if !(scnr >= 0.0 && scnr.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "SCNR must be finite and nonnegative, got {scnr}"
        )));
    }
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "false-alarm probability must be in (0, 1), got {p_fa}"
        )));
    }
    if scnr == 0.0 {
        return Ok(p_fa);
    }
    Ok(marcum_q1((2.0 * scnr).sqrt(), (-2.0 * p_fa.ln()).sqrt()))
}

/// Gray label of PSK point `m`.
pub fn gray(m: usize) -> usize {
    m ^ (m >> 1)
}

/// Index of the PSK decision sector containing `y`; point `m` sits at phase
/// `2πm/𝕄 + π/𝕄`, the centre of sector `[2πm/𝕄, 2π(m+1)/𝕄)`.
pub fn psk_decide(y: Complex64, psk_order: usize) -> usize {
    let tau = std::f64::consts::TAU;
    let arg = y.im.atan2(y.re).rem_euclid(tau);
    ((arg / tau * psk_order as f64).floor() as usize).min(psk_order - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerEstimate {
    pub per_user: Vec<f64>,
    pub average: f64,
    /// Binomial standard error of `average`.
    pub std_error: f64,
    pub bits: u64,
}

/// Monte Carlo BER of Gray-labeled PSK for noiseless received points
/// `points[u][l]` carrying symbol indices `symbols[u][l]`, under circular
/// Gaussian noise of variance `noise`.
pub fn simulate_ber_points<R: Rng + ?Sized>(
    points: &[Vec<Complex64>],
    symbols: &[Vec<usize>],
    psk_order: usize,
    noise: f64,
    n_trials: usize,
    rng: &mut R,
) -> Result<BerEstimate> {
    if n_trials == 0 {
        return Err(Error::InvalidArgument("n_trials must be positive".into()));
    }
    if psk_order < 2 || !psk_order.is_power_of_two() {
        return Err(Error::InvalidArgument(format!(
            "PSK order must be a power of two, got {psk_order}"
        )));
    }
    if points.len() != symbols.len() || points.iter().zip(symbols).any(|(p, s)| p.len() != s.len())
    {
        return Err(Error::Dimension(
            "received points and symbols differ in shape".into(),
        ));
    }
    let bits_per_symbol = psk_order.trailing_zeros() as u64;
    let sd = (0.5 * noise.max(0.0)).sqrt();
    let mut per_user = Vec::with_capacity(points.len());
    let (mut errors, mut bits) = (0u64, 0u64);
    for (pu, su) in points.iter().zip(symbols) {
        let mut user_errors = 0u64;
        for (&y0, &m) in pu.iter().zip(su) {
            let label = gray(m);
            for _ in 0..n_trials {
                let n = Complex64::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                );
                let decided = psk_decide(y0 + n * sd, psk_order);
                user_errors += (gray(decided) ^ label).count_ones() as u64;
            }
        }
        let user_bits = (pu.len() * n_trials) as u64 * bits_per_symbol;
        per_user.push(if user_bits > 0 {
            user_errors as f64 / user_bits as f64
        } else {
            0.0
        });
        errors += user_errors;
        bits += user_bits;
    }
    let average = if bits > 0 {
        errors as f64 / bits as f64
    } else {
        0.0
    };
    let std_error = if bits > 0 {
        (average * (1.0 - average) / bits as f64).sqrt()
    } else {
        0.0
    };
    Ok(BerEstimate {
        per_user,
        average,
        std_error,
        bits,
    })
}

/// BER of the solved symbol block with fresh receiver noise in every trial.
pub fn simulate_ber<R: Rng + ?Sized>(
    inst: &Instance,
    waveform: &Waveform,
    phi_t: &CMat,
    phi_r: &CMat,
    n_trials: usize,
    rng: &mut R,
) -> Result<BerEstimate> {
    let s = &inst.scenario;
    let points: Vec<Vec<Complex64>> = (0..s.users.len())
        .map(|u| {
            let h = inst.effective_user_channel(u, user_phi(inst, u, phi_t, phi_r));
            (0..s.code_len)
                .map(|l| h.dotc(&waveform.w_mat.column(l)))
                .collect()
        })
        .collect();
    simulate_ber_points(
        &points,
        &waveform.symbols.indices,
        s.psk_order,
        s.noise_comm,
        n_trials,
        rng,
    )
}

/// Beampattern in dB relative to its peak. Transmit patterns have a single
/// ring column; space-range patterns are stored row-major as
/// `values[i * rings.len() + r]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeampatternGrid {
    pub angles: Vec<f64>,
    pub rings: Vec<i64>,
    pub values: Vec<f64>,
}

impl BeampatternGrid {
    pub fn value(&self, angle_index: usize, ring_index: usize) -> f64 {
        self.values[angle_index * self.rings.len() + ring_index]
    }

    pub fn peak(&self) -> (usize, usize) {
        let i =
            self.values.iter().enumerate().fold(
                0,
                |best, (i, v)| if *v > self.values[best] { i } else { best },
            );
        (i / self.rings.len(), i % self.rings.len())
    }
}

fn check_grid(angles: &[f64]) -> Result<()> {
    if angles.is_empty() {
        return Err(Error::InvalidArgument("angle grid is empty".into()));
    }
    if angles.iter().any(|a| !a.is_finite()) || angles.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "angle grid must be finite and strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Powers to dB relative to the largest, floored at [`DB_FLOOR`].
pub fn normalize_db(powers: &[f64]) -> Vec<f64> {
    let peak = powers.iter().copied().fold(0.0, f64::max);
    powers
        .iter()
        .map(|&p| {
            if peak > 0.0 && p > 0.0 {
                (10.0 * (p / peak).log10()).max(DB_FLOOR)
            } else {
                DB_FLOOR
            }
        })
        .collect()
}

/// `P(θ) = Σ_l |a(θ)^H Φ G w[l]|²` over the RIS aperture, peak-normalized.
pub fn transmit_beampattern(
    inst: &Instance,
    w: &CMat,
    phi: &CMat,
    angles: &[f64],
) -> Result<BeampatternGrid> {
    check_grid(angles)?;
    let s = &inst.scenario;
    let x = phi * &inst.comm.g_mat * w;
    let powers = angles
        .iter()
        .map(|&a| {
            let sv = steering_vector(a, s.n_cells, s.spacing_ratio)?.entries;
            Ok((sv.adjoint() * &x).norm_squared())
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(BeampatternGrid {
        angles: angles.to_vec(),
        rings: vec![0],
        values: normalize_db(&powers),
    })
}

/// Unnormalized receive response `|Tr(U_k^H A(θ) Φ G W J_r)|²` of target
/// `k`'s filter at one (angle, ring) cell.
pub fn space_range_power(
    inst: &Instance,
    w: &CMat,
    phi: &CMat,
    u_k: &CMat,
    k: usize,
    angle: f64,
    ring: i64,
) -> Result<f64> {
    let s = &inst.scenario;
    let target = s
        .targets
        .get(k)
        .ok_or_else(|| Error::InvalidArgument(format!("no target {k}")))?;
    let l_obs = s.window(target.side).l_obs;
    if u_k.shape() != (s.n_rx, l_obs) {
        return Err(Error::Dimension(format!(
            "filter is {:?}, expected {:?}",
            u_k.shape(),
            (s.n_rx, l_obs)
        )));
    }
    let a = radar_channel(angle, s.n_rx, s.n_cells, s.spacing_ratio)?;
    let y = shift_matrix(ring, s.code_len, l_obs).right_apply(&(a * phi * &inst.comm.g_mat * w));
    let t: Complex64 = u_k.iter().zip(y.iter()).map(|(u, v)| u.conj() * v).sum();
    Ok(t.norm_sqr())
}

/// Space-range beampattern of target `k`'s filter over `angles` and the
/// rings `0..=L_obs − L` of its side, peak-normalized.
pub fn space_range_beampattern(
    inst: &Instance,
    w: &CMat,
    phi_t: &CMat,
    phi_r: &CMat,
    u_k: &CMat,
    k: usize,
    angles: &[f64],
) -> Result<BeampatternGrid> {
    check_grid(angles)?;
    let s = &inst.scenario;
    let target = s
        .targets
        .get(k)
        .ok_or_else(|| Error::InvalidArgument(format!("no target {k}")))?;
    let phi = match target.side {
        Side::Transmissive => phi_t,
        Side::Reflective => phi_r,
    };
    let last = s.window(target.side).l_obs as i64 - s.code_len as i64;
    let rings: Vec<i64> = (0..=last.max(0)).collect();
    let mut powers = Vec::with_capacity(angles.len() * rings.len());
    for &a in angles {
        for &r in &rings {
            powers.push(space_range_power(inst, w, phi, u_k, k, a, r)?);
        }
    }
    Ok(BeampatternGrid {
        angles: angles.to_vec(),
        rings,
        values: normalize_db(&powers),
    })
}

/// `n` evenly spaced angles spanning `[lo, hi]` degrees.
pub fn angle_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}
