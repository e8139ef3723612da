//! Problem instances: geometry, scatterers, users, dimensions and budgets.
//!
//! A scenario is read from a TOML document with the sections `[system]`,
//! `[pathloss]`, `[[users]]`, `[[targets]]` and `[[clutters]]`. All dB/dBm
//! quantities are converted to linear scale once, here; every numeric kernel
//! downstream works in linear units.
//!
//! Scatterer ranges and azimuths accept either a number or an interval string
//! `"[a:b]"`, which expands to `count` evenly spaced point sources (endpoints
//! included). Range rings follow the round-trip convention
//! `τ = 2·range/c` with `c = 3·10⁸ m/s`, so a 150 MHz sample rate gives a
//! 1 m range bin.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{db_to_lin, dbm_to_watts};

/// Propagation speed used for the delay/ring conversion.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Bundled scenario reproducing the published parameter tables.
pub const PAPER_DEFAULT: &str = include_str!("../scenarios/paper_default.toml");
/// Reduced instance used by tests and CI.
pub const DESK_DEFAULT: &str = include_str!("../scenarios/desk_default.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Transmissive,
    Reflective,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Transmissive, Side::Reflective];

    pub fn index(self) -> usize {
        match self {
            Side::Transmissive => 0,
            Side::Reflective => 1,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Side::Transmissive => "T",
            Side::Reflective => "R",
        }
    }
}

/// BD-RIS scattering-network topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Architecture {
    /// Diagonal transmissive/reflective matrices (`G = N_S`).
    SingleConnected,
    /// `G` fully-connected groups of `M = N_S/G` cells.
    GroupConnected,
    /// One fully-connected group (`G = 1`).
    FullyConnected,
    /// Two adjacent diagonal RISs: the first half of the cells transmit
    /// only, the second half reflect only.
    DoubleRis,
}

impl Architecture {
    /// Architecture implied by a group count.
    pub fn from_groups(groups: usize, n_cells: usize) -> Self {
        if groups == n_cells {
            Architecture::SingleConnected
        } else if groups == 1 {
            Architecture::FullyConnected
        } else {
            Architecture::GroupConnected
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::SingleConnected => "CW-SC",
            Architecture::GroupConnected => "CW-GC",
            Architecture::FullyConnected => "CW-FC",
            Architecture::DoubleRis => "DOUBLE-RIS",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Architecture tag as written in scenario files and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArchTag {
    Sc,
    Gc,
    Fc,
    DoubleRis,
    RadarOnly,
}

impl FromStr for ArchTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CW-SC" | "SC" => Ok(ArchTag::Sc),
            "CW-GC" | "GC" => Ok(ArchTag::Gc),
            "CW-FC" | "FC" => Ok(ArchTag::Fc),
            "DOUBLE-RIS" => Ok(ArchTag::DoubleRis),
            "RADAR-ONLY" => Ok(ArchTag::RadarOnly),
            other => Err(Error::UnknownArchitecture(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Target {
    pub side: Side,
    pub range: f64,
    pub azimuth: f64,
    pub rcs_db: f64,
    /// Expected echo power `ζ²` after two-way RIS↔target path-loss.
    pub power: f64,
    pub ring: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Clutter {
    pub side: Side,
    pub range: f64,
    pub azimuth: f64,
    pub rcs_db: f64,
    /// Expected return power `ξ²` after two-way RIS↔clutter path-loss.
    pub power: f64,
    /// Ring relative to the earliest same-side target; may be negative.
    pub ring: i64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct User {
    pub side: Side,
    pub distance: f64,
    /// Azimuth seen from the RIS; drawn from the seed when not configured.
    pub azimuth: Option<f64>,
    pub qos_db: Option<f64>,
}

/// Reference gain `ℵ` at `d0` and per-link exponents.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PathLoss {
    pub reference_gain: f64,
    pub reference_distance: f64,
    pub bs_ris: f64,
    pub ris_user: f64,
    pub ris_target: f64,
    pub ris_clutter: f64,
}

impl PathLoss {
    /// `ℵ·(d/d0)^(−ℓ)` in linear scale.
    pub fn gain(&self, distance: f64, exponent: f64) -> Result<f64> {
        pathloss(
            distance,
            exponent,
            self.reference_gain,
            self.reference_distance,
        )
    }
}

impl Default for PathLoss {
    fn default() -> Self {
        PathLoss {
            reference_gain: db_to_lin(-30.0),
            reference_distance: 1.0,
            bs_ris: 2.2,
            ris_user: 2.2,
            ris_target: 2.0,
            ris_clutter: 2.0,
        }
    }
}

/// Distance-dependent path-loss `ℵ·(d/d0)^(−ℓ)`.
pub fn pathloss(
    distance: f64,
    exponent: f64,
    reference_gain: f64,
    reference_distance: f64,
) -> Result<f64> {
    if !(distance > 0.0) || !distance.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "path-loss distance must be positive, got {distance}"
        )));
    }
    Ok(reference_gain * (distance / reference_distance).powf(-exponent))
}

/// Per-side observation window.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SideWindow {
    pub l_obs: usize,
    pub max_target_ring: i64,
}

/// A validated problem instance in linear units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub n_tx: usize,
    pub n_cells: usize,
    pub n_rx: usize,
    pub code_len: usize,
    pub psk_order: usize,
    /// Transmit energy budget `E` (W).
    pub power_budget: f64,
    /// Per-user noise variance `σ²_C` (W).
    pub noise_comm: f64,
    /// Radar receiver noise variance `σ²_R` (W).
    pub noise_radar: f64,
    /// Default QoS threshold `Γ` in dB.
    pub qos_db: f64,
    pub groups: usize,
    pub arch: Architecture,
    /// Drop the communication constraints entirely.
    pub radar_only: bool,
    pub users: Vec<User>,
    pub targets: Vec<Target>,
    pub clutters: Vec<Clutter>,
    pub pathloss: PathLoss,
    pub sample_rate: f64,
    pub rician_k_db: f64,
    pub spacing_ratio: f64,
    pub bs_ris_distance: f64,
    pub rng_seed: u64,
    /// Indexed by [`Side::index`].
    pub windows: [SideWindow; 2],
}

impl Scenario {
    pub fn group_size(&self) -> usize {
        self.n_cells / self.groups
    }

    pub fn window(&self, side: Side) -> SideWindow {
        self.windows[side.index()]
    }

    pub fn targets_on(&self, side: Side) -> impl Iterator<Item = (usize, &Target)> {
        self.targets
            .iter()
            .enumerate()
            .filter(move |(_, t)| t.side == side)
    }

    pub fn clutters_on(&self, side: Side) -> impl Iterator<Item = (usize, &Clutter)> {
        self.clutters
            .iter()
            .enumerate()
            .filter(move |(_, c)| c.side == side)
    }

    pub fn users_on(&self, side: Side) -> impl Iterator<Item = (usize, &User)> {
        self.users
            .iter()
            .enumerate()
            .filter(move |(_, u)| u.side == side)
    }

    /// Linear QoS threshold of user `u`.
    pub fn qos_linear(&self, u: usize) -> f64 {
        db_to_lin(self.users[u].qos_db.unwrap_or(self.qos_db))
    }

    /// Half-width `Ω = π/𝕄` of the constructive-interference sector.
    pub fn ci_half_angle(&self) -> f64 {
        std::f64::consts::PI / self.psk_order as f64
    }

    /// Sides that carry at least one target.
    pub fn radar_sides(&self) -> Vec<Side> {
        Side::BOTH
            .into_iter()
            .filter(|s| self.targets.iter().any(|t| t.side == *s))
            .collect()
    }

    /// Re-apply an architecture choice, keeping everything else.
    pub fn with_architecture(&self, tag: ArchTag, groups: Option<usize>) -> Result<Scenario> {
        let mut s = self.clone();
        let (arch, g, radar_only) = resolve_arch(tag, groups.unwrap_or(self.groups), self.n_cells)?;
        s.arch = arch;
        s.groups = g;
        s.radar_only = radar_only;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tx == 0 || self.n_cells == 0 || self.n_rx == 0 || self.code_len == 0 {
            return Err(Error::InvalidScenario(
                "array sizes and code length must be positive".into(),
            ));
        }
        if self.psk_order < 2 {
            return Err(Error::InvalidScenario(
                "PSK order must be at least 2".into(),
            ));
        }
        if self.groups == 0 || !self.n_cells.is_multiple_of(self.groups) {
            return Err(Error::InvalidScenario(format!(
                "N_S = {} is not divisible by G = {}",
                self.n_cells, self.groups
            )));
        }
        if self.arch == Architecture::DoubleRis
            && (self.groups != self.n_cells || !self.n_cells.is_multiple_of(2))
        {
            return Err(Error::InvalidScenario(
                "DOUBLE-RIS needs an even N_S and G = N_S".into(),
            ));
        }
        if !(self.power_budget >= 0.0) {
            return Err(Error::InvalidScenario(
                "power budget must be nonnegative".into(),
            ));
        }
        if !(self.noise_comm > 0.0) || !(self.noise_radar > 0.0) {
            return Err(Error::InvalidScenario(
                "noise variances must be positive".into(),
            ));
        }
        if self.targets.is_empty() {
            return Err(Error::InvalidScenario(
                "at least one target is required".into(),
            ));
        }
        if let Some(t) = self.targets.iter().find(|t| !(t.power > 0.0)) {
            return Err(Error::InvalidScenario(format!(
                "target at {} m has zero power",
                t.range
            )));
        }
        if let Some(c) = self.clutters.iter().find(|c| !(c.power > 0.0)) {
            return Err(Error::InvalidScenario(format!(
                "clutter at {} m has zero power",
                c.range
            )));
        }
        if let Some(u) = self.users.iter().find(|u| !(u.distance > 0.0)) {
            return Err(Error::InvalidScenario(format!(
                "user distance {} must be positive",
                u.distance
            )));
        }
        Ok(())
    }
}

fn resolve_arch(
    tag: ArchTag,
    groups: usize,
    n_cells: usize,
) -> Result<(Architecture, usize, bool)> {
    let (arch, g) = match tag {
        ArchTag::Sc => (Architecture::SingleConnected, n_cells),
        ArchTag::Fc => (Architecture::FullyConnected, 1),
        ArchTag::Gc => {
            if groups == 0 || !n_cells.is_multiple_of(groups) {
                return Err(Error::InvalidScenario(format!(
                    "N_S = {n_cells} is not divisible by G = {groups}"
                )));
            }
            (Architecture::from_groups(groups, n_cells), groups)
        }
        ArchTag::DoubleRis => (Architecture::DoubleRis, n_cells),
        ArchTag::RadarOnly => {
            if groups == 0 || !n_cells.is_multiple_of(groups) {
                return Err(Error::InvalidScenario(format!(
                    "N_S = {n_cells} is not divisible by G = {groups}"
                )));
            }
            return Ok((Architecture::from_groups(groups, n_cells), groups, true));
        }
    };
    Ok((arch, g, false))
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: Option<String>,
    system: RawSystem,
    #[serde(default)]
    pathloss: RawPathLoss,
    #[serde(default)]
    users: Vec<RawUser>,
    #[serde(default)]
    targets: Vec<RawScatterer>,
    #[serde(default)]
    clutters: Vec<RawScatterer>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    n_tx: usize,
    n_cells: usize,
    n_rx: usize,
    code_len: usize,
    #[serde(default = "default_psk")]
    psk_order: usize,
    power_w: f64,
    noise_comm_dbm: f64,
    noise_radar_dbm: f64,
    #[serde(default)]
    qos_db: f64,
    #[serde(default = "default_groups")]
    groups: usize,
    #[serde(default)]
    arch: Option<String>,
    sample_rate_hz: f64,
    #[serde(default = "default_rician")]
    rician_k_db: f64,
    #[serde(default = "default_spacing")]
    spacing_ratio: f64,
    #[serde(default = "default_bs_ris")]
    bs_ris_distance_m: f64,
    #[serde(default)]
    rng_seed: u64,
}

fn default_psk() -> usize {
    4
}
fn default_groups() -> usize {
    1
}
fn default_rician() -> f64 {
    3.0
}
fn default_spacing() -> f64 {
    0.5
}
fn default_bs_ris() -> f64 {
    20.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPathLoss {
    #[serde(default = "default_ref_db")]
    reference_db: f64,
    #[serde(default = "default_ref_dist")]
    reference_distance_m: f64,
    #[serde(default = "default_exp_comm")]
    bs_ris: f64,
    #[serde(default = "default_exp_comm")]
    ris_user: f64,
    #[serde(default = "default_exp_radar")]
    ris_target: f64,
    #[serde(default = "default_exp_radar")]
    ris_clutter: f64,
}

fn default_ref_db() -> f64 {
    -30.0
}
fn default_ref_dist() -> f64 {
    1.0
}
fn default_exp_comm() -> f64 {
    2.2
}
fn default_exp_radar() -> f64 {
    2.0
}

impl Default for RawPathLoss {
    fn default() -> Self {
        RawPathLoss {
            reference_db: default_ref_db(),
            reference_distance_m: default_ref_dist(),
            bs_ris: default_exp_comm(),
            ris_user: default_exp_comm(),
            ris_target: default_exp_radar(),
            ris_clutter: default_exp_radar(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawUser {
    side: Side,
    distance_m: f64,
    #[serde(default)]
    azimuth_deg: Option<f64>,
    #[serde(default)]
    qos_db: Option<f64>,
    #[serde(default = "default_count")]
    count: usize,
}

fn default_count() -> usize {
    1
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScatterer {
    side: Side,
    #[serde(default = "default_count")]
    count: usize,
    range_m: Span,
    azimuth_deg: Span,
    rcs_db: f64,
}

/// A scalar or an `"[a:b]"` interval.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum Span {
    Value(f64),
    Interval(String),
}

impl Span {
    fn expand(&self, count: usize) -> Result<Vec<f64>> {
        match self {
            Span::Value(v) => Ok(vec![*v; count]),
            Span::Interval(s) => {
                let (a, b) = parse_interval(s)?;
                if count == 1 {
                    return Ok(vec![0.5 * (a + b)]);
                }
                Ok((0..count)
                    .map(|i| a + (b - a) * i as f64 / (count - 1) as f64)
                    .collect())
            }
        }
    }
}

fn parse_interval(s: &str) -> Result<(f64, f64)> {
    let t = s.trim();
    let inner = t
        .strip_prefix('[')
        .and_then(|x| x.strip_suffix(']'))
        .ok_or_else(|| Error::Schema(format!("interval `{s}` must look like [a:b]")))?;
    let mut parts = inner.split(':');
    let a = parts.next().map(str::trim).unwrap_or("");
    let b = parts.next().map(str::trim).unwrap_or("");
    if parts.next().is_some() {
        return Err(Error::Schema(format!("interval `{s}` has too many fields")));
    }
    let pa = a
        .parse::<f64>()
        .map_err(|_| Error::Schema(format!("bad interval bound `{a}`")))?;
    let pb = b
        .parse::<f64>()
        .map_err(|_| Error::Schema(format!("bad interval bound `{b}`")))?;
    Ok((pa, pb))
}

/// Parse and validate a scenario document.
pub fn load_scenario(config_text: &str) -> Result<Scenario> {
    let raw: RawScenario = toml::from_str(config_text)?;
    build(raw)
}

pub fn load_scenario_file(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    load_scenario(&text)
}

fn build(raw: RawScenario) -> Result<Scenario> {
    let sys = raw.system;
    let pl = PathLoss {
        reference_gain: db_to_lin(raw.pathloss.reference_db),
        reference_distance: raw.pathloss.reference_distance_m,
        bs_ris: raw.pathloss.bs_ris,
        ris_user: raw.pathloss.ris_user,
        ris_target: raw.pathloss.ris_target,
        ris_clutter: raw.pathloss.ris_clutter,
    };
    if !(pl.reference_distance > 0.0) {
        return Err(Error::Schema(
            "pathloss.reference_distance_m must be positive".into(),
        ));
    }

    let tag = match &sys.arch {
        Some(a) => a.parse::<ArchTag>()?,
        None => ArchTag::Gc,
    };
    if sys.groups == 0 || !sys.n_cells.is_multiple_of(sys.groups) {
        return Err(Error::InvalidScenario(format!(
            "N_S = {} is not divisible by G = {}",
            sys.n_cells, sys.groups
        )));
    }
    let (arch, groups, radar_only) = resolve_arch(tag, sys.groups, sys.n_cells)?;

    let mut users = Vec::new();
    for u in raw.users {
        for _ in 0..u.count {
            users.push(User {
                side: u.side,
                distance: u.distance_m,
                azimuth: u.azimuth_deg,
                qos_db: u.qos_db,
            });
        }
    }

    let mut targets = Vec::new();
    for t in &raw.targets {
        for (range, az) in expand_pair(t)? {
            let power = db_to_lin(t.rcs_db) * pl.gain(range, pl.ris_target)?.powi(2);
            targets.push(Target {
                side: t.side,
                range,
                azimuth: az,
                rcs_db: t.rcs_db,
                power,
                ring: 0,
            });
        }
    }
    let mut clutters = Vec::new();
    for c in &raw.clutters {
        for (range, az) in expand_pair(c)? {
            let power = db_to_lin(c.rcs_db) * pl.gain(range, pl.ris_clutter)?.powi(2);
            clutters.push(Clutter {
                side: c.side,
                range,
                azimuth: az,
                rcs_db: c.rcs_db,
                power,
                ring: 0,
            });
        }
    }

    let mut scenario = Scenario {
        name: raw.name.unwrap_or_else(|| "scenario".to_string()),
        n_tx: sys.n_tx,
        n_cells: sys.n_cells,
        n_rx: sys.n_rx,
        code_len: sys.code_len,
        psk_order: sys.psk_order,
        power_budget: sys.power_w,
        noise_comm: dbm_to_watts(sys.noise_comm_dbm),
        noise_radar: dbm_to_watts(sys.noise_radar_dbm),
        qos_db: sys.qos_db,
        groups,
        arch,
        radar_only,
        users,
        targets,
        clutters,
        pathloss: pl,
        sample_rate: sys.sample_rate_hz,
        rician_k_db: sys.rician_k_db,
        spacing_ratio: sys.spacing_ratio,
        bs_ris_distance: sys.bs_ris_distance_m,
        rng_seed: sys.rng_seed,
        windows: [SideWindow {
            l_obs: sys.code_len,
            max_target_ring: 0,
        }; 2],
    };
    if !(scenario.sample_rate > 0.0) {
        return Err(Error::Schema(
            "system.sample_rate_hz must be positive".into(),
        ));
    }
    scenario.validate()?;
    derive_rings(&mut scenario)?;
    Ok(scenario)
}

fn expand_pair(s: &RawScatterer) -> Result<Vec<(f64, f64)>> {
    if s.count == 0 {
        return Err(Error::Schema("scatterer count must be at least 1".into()));
    }
    let ranges = s.range_m.expand(s.count)?;
    let az = s.azimuth_deg.expand(s.count)?;
    Ok(ranges.into_iter().zip(az).collect())
}

/// Round-trip delay in seconds.
pub fn round_trip_delay(range: f64) -> f64 {
    2.0 * range / SPEED_OF_LIGHT
}

/// `⌊x⌋` that absorbs the rounding noise of the delay arithmetic, so a
/// scatterer exactly one range bin away lands on ring 1 and not 0.
fn ring_floor(x: f64) -> i64 {
    (x + 1e-9).floor() as i64
}

/// Populate target/clutter rings and per-side observation windows in place.
pub fn derive_rings(s: &mut Scenario) -> Result<()> {
    for side in Side::BOTH {
        let taus: Vec<f64> = s
            .targets
            .iter()
            .filter(|t| t.side == side)
            .map(|t| round_trip_delay(t.range))
            .collect();
        if taus.is_empty() {
            if s.clutters.iter().any(|c| c.side == side) {
                return Err(Error::InvalidScenario(format!(
                    "clutter on the {side:?} side without any target to reference"
                )));
            }
            s.windows[side.index()] = SideWindow {
                l_obs: s.code_len,
                max_target_ring: 0,
            };
            continue;
        }
        let tau_min = taus.iter().cloned().fold(f64::INFINITY, f64::min);
        let fs = s.sample_rate;
        let mut max_ring = 0i64;
        for t in s.targets.iter_mut().filter(|t| t.side == side) {
            t.ring = ring_floor((round_trip_delay(t.range) - tau_min) * fs).max(0);
            max_ring = max_ring.max(t.ring);
        }
        for c in s.clutters.iter_mut().filter(|c| c.side == side) {
            c.ring = ring_floor((round_trip_delay(c.range) - tau_min) * fs);
        }
        // min target ring is 0 by construction
        s.windows[side.index()] = SideWindow {
            l_obs: s.code_len + max_ring as usize,
            max_target_ring: max_ring,
        };
    }
    Ok(())
}
