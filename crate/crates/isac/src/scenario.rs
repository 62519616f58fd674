//! Simulation world construction: node geometry, Rician fading channels with
//! distance pathloss, array steering vectors, and target reflection
//! coefficients, all driven by a declarative JSON configuration with seedable
//! randomness.
//!
//! Conventions fixed here (the literature leaves them open):
//! - BS and user arrays are half-wavelength ULAs along the global x axis.
//! - The RIS is a UPA in a local frame with azimuth axis -x, elevation axis
//!   +z, facing -y (toward the served area). With the default coordinates
//!   this places the target at azimuth +45 deg, elevation 0.
//! - Element (row i0, col i1) of a (rows, cols) grid carries the phase
//!   2*pi*spacing*(i1*sin(az)*cos(el) + i0*sin(el)); elements are enumerated
//!   row-major, so the column index i1 is the azimuth axis.

use nalgebra::Vector3;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

use crate::numerics::{complex_gaussian_matrix, CMat, CVec};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("target {0} coincides with the RIS position")]
    ZeroDistanceTarget(usize),
}

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Converts a gain in dB to linear scale.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Distance pathloss beta = beta0 * d^-alpha (linear).
pub fn pathloss(beta0: f64, distance: f64, alpha: f64) -> f64 {
    beta0 * distance.powf(-alpha)
}

/// Per-link Rician factors or pathloss exponents.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LinkValues {
    pub bs_ris: f64,
    pub bs_user: f64,
    pub ris_user: f64,
}

/// Scenario description as stored on disk: distances in meters, powers in
/// dBm, gains in dB, frequencies in Hz.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n_bs_antennas: usize,
    pub n_user_antennas: usize,
    /// RIS grid (rows, cols); `cols` lies along the azimuth axis.
    pub ris_grid: (usize, usize),
    pub n_streams: usize,
    pub n_users: usize,
    pub n_targets: usize,
    pub bs_position: [f64; 3],
    pub ris_position: [f64; 3],
    pub user_positions: Vec<[f64; 3]>,
    pub target_positions: Vec<[f64; 3]>,
    pub carrier_frequency_hz: f64,
    pub sampling_frequency_hz: f64,
    pub sensing_slot_s: f64,
    pub tx_power_dbm: f64,
    pub rician_factors: LinkValues,
    pub pathloss_reference_db: f64,
    pub pathloss_exponents: LinkValues,
    pub user_noise_dbm: f64,
    pub radar_noise_dbm: f64,
    pub p_false_alarm: f64,
    pub detection_target: f64,
    #[serde(default = "default_spacing")]
    pub ris_spacing_wavelengths: f64,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_spacing() -> f64 {
    0.5
}

impl ScenarioConfig {
    pub fn n_ris_elements(&self) -> usize {
        self.ris_grid.0 * self.ris_grid.1
    }

    /// Maximum transmit power in watts.
    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// User-side noise power in watts.
    pub fn user_noise_w(&self) -> f64 {
        dbm_to_watts(self.user_noise_dbm)
    }

    /// Radar-side noise power in watts.
    pub fn radar_noise_w(&self) -> f64 {
        dbm_to_watts(self.radar_noise_dbm)
    }

    /// Reference pathloss at 1 m, linear.
    pub fn beta0(&self) -> f64 {
        db_to_linear(self.pathloss_reference_db)
    }

    /// Carrier wavelength in meters.
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency_hz
    }

    /// Number of radar samples per sensing slot, D = T0 * fs.
    pub fn radar_samples(&self) -> u64 {
        (self.sensing_slot_s * self.sampling_frequency_hz).round() as u64
    }

    /// Checks every structural invariant, returning the first violation.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |msg: String| Err(ScenarioError::Validation(msg));
        if self.n_bs_antennas == 0 || self.n_user_antennas == 0 {
            return fail("antenna counts must be positive".into());
        }
        if self.ris_grid.0 == 0 || self.ris_grid.1 == 0 {
            return fail("ris_grid dimensions must be positive".into());
        }
        if self.n_streams == 0 {
            return fail("n_streams must be positive".into());
        }
        if self.n_streams > self.n_bs_antennas.min(self.n_user_antennas) {
            return fail(format!(
                "n_streams = {} exceeds min(n_bs_antennas, n_user_antennas) = {}",
                self.n_streams,
                self.n_bs_antennas.min(self.n_user_antennas)
            ));
        }
        if self.n_users == 0 || self.user_positions.len() != self.n_users {
            return fail(format!(
                "n_users = {} but {} user positions given",
                self.n_users,
                self.user_positions.len()
            ));
        }
        if self.n_targets == 0 || self.target_positions.len() != self.n_targets {
            return fail(format!(
                "n_targets = {} but {} target positions given",
                self.n_targets,
                self.target_positions.len()
            ));
        }
        if self.n_streams * self.n_users > self.n_bs_antennas {
            return fail(format!(
                "total streams {} exceed BS antennas {}",
                self.n_streams * self.n_users,
                self.n_bs_antennas
            ));
        }
        if !(self.carrier_frequency_hz > 0.0
            && self.sampling_frequency_hz > 0.0
            && self.sensing_slot_s > 0.0)
        {
            return fail("frequencies and sensing slot must be positive".into());
        }
        let d_exact = self.sensing_slot_s * self.sampling_frequency_hz;
        let d_round = d_exact.round();
        if d_round < 1.0 || (d_exact - d_round).abs() > 1e-6 * d_round.max(1.0) {
            return fail(format!(
                "sensing_slot_s * sampling_frequency_hz = {d_exact} is not an integer sample count >= 1"
            ));
        }
        if !(self.p_false_alarm > 0.0 && self.p_false_alarm < 1.0) {
            return fail(format!(
                "p_false_alarm = {} outside (0, 1)",
                self.p_false_alarm
            ));
        }
        if !(self.detection_target > self.p_false_alarm && self.detection_target < 1.0) {
            return fail(format!(
                "detection_target = {} must lie in (p_false_alarm, 1)",
                self.detection_target
            ));
        }
        if self.ris_spacing_wavelengths <= 0.0 {
            return fail("ris_spacing_wavelengths must be positive".into());
        }
        let kappas = [
            self.rician_factors.bs_ris,
            self.rician_factors.bs_user,
            self.rician_factors.ris_user,
        ];
        if kappas.iter().any(|k| *k < 0.0) {
            return fail("Rician factors must be nonnegative".into());
        }
        for (idx, t) in self.target_positions.iter().enumerate() {
            if displacement(&self.ris_position, t).norm() == 0.0 {
                return Err(ScenarioError::ZeroDistanceTarget(idx));
            }
        }
        Ok(())
    }
}

/// Loads and validates a scenario configuration from a JSON file.
pub fn load_config<P: AsRef<Path>>(path: P) -> Result<ScenarioConfig, ScenarioError> {
    let path_str = path.as_ref().display().to_string();
    let text = std::fs::read_to_string(path.as_ref()).map_err(|source| ScenarioError::Io {
        path: path_str.clone(),
        source,
    })?;
    let cfg: ScenarioConfig = serde_json::from_str(&text).map_err(|source| ScenarioError::Parse {
        path: path_str,
        source,
    })?;
    cfg.validate()?;
    Ok(cfg)
}

fn displacement(from: &[f64; 3], to: &[f64; 3]) -> Vector3<f64> {
    Vector3::new(to[0] - from[0], to[1] - from[1], to[2] - from[2])
}

/// Direction cosines of a displacement seen from the RIS local frame:
/// returns (sin(az)*cos(el), sin(el)).
fn ris_direction_components(d: &Vector3<f64>) -> (f64, f64) {
    let u = d.normalize();
    (-u.x, u.z)
}

/// (azimuth, elevation) in radians of a displacement in the RIS local frame.
pub fn ris_angles(from_ris: &Vector3<f64>) -> (f64, f64) {
    let (ucomp, vcomp) = ris_direction_components(from_ris);
    let elevation = vcomp.clamp(-1.0, 1.0).asin();
    let ce = elevation.cos();
    let s = if ce.abs() < 1e-12 { 0.0 } else { ucomp / ce };
    (s.clamp(-1.0, 1.0).asin(), elevation)
}

/// UPA steering vector from direction components u = sin(az)*cos(el),
/// v = sin(el). Row-major enumeration; columns along the azimuth axis.
pub fn steering_vector_upa_uv(grid: (usize, usize), u: f64, v: f64, spacing: f64) -> CVec {
    let (rows, cols) = grid;
    let k = 2.0 * std::f64::consts::PI * spacing;
    CVec::from_fn(rows * cols, |idx, _| {
        let i0 = idx / cols;
        let i1 = idx % cols;
        Complex64::from_polar(1.0, k * (i1 as f64 * u + i0 as f64 * v))
    })
}

/// UPA steering vector at the given azimuth/elevation (radians).
///
/// Every entry has unit modulus and the first entry is 1.
pub fn steering_vector_upa(
    grid: (usize, usize),
    azimuth: f64,
    elevation: f64,
    spacing: f64,
) -> CVec {
    steering_vector_upa_uv(
        grid,
        azimuth.sin() * elevation.cos(),
        elevation.sin(),
        spacing,
    )
}

/// ULA steering vector from the direction cosine along the array axis.
pub fn steering_vector_ula(n: usize, axis_cosine: f64, spacing: f64) -> CVec {
    let k = 2.0 * std::f64::consts::PI * spacing;
    CVec::from_fn(n, |i, _| Complex64::from_polar(1.0, k * i as f64 * axis_cosine))
}

/// The three channel matrices of the system plus noise covariances.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// Direct BS-to-user channels, one N_U x N_B matrix per user.
    pub h_bu: Vec<CMat>,
    /// RIS-to-user channels, one N_U x N_R matrix per user.
    pub h_ru: Vec<CMat>,
    /// BS-to-RIS propagation H_BR^H, N_R x N_B.
    pub h_br_h: CMat,
    /// User-side noise covariance, N_U x N_U.
    pub r_nc: CMat,
    /// Radar-side noise covariance, N_B x N_B.
    pub r_nr: CMat,
}

impl ChannelSet {
    /// H_BR as an N_B x N_R matrix.
    pub fn h_br(&self) -> CMat {
        self.h_br_h.adjoint()
    }

    /// Effective downlink channel H_BU,k + H_RU,k * Diag(theta) * H_BR^H.
    pub fn effective_channel(&self, user: usize, theta: &CVec) -> CMat {
        let mut cascade = self.h_br_h.clone();
        for (i, mut row) in cascade.row_iter_mut().enumerate() {
            row *= theta[i];
        }
        &self.h_bu[user] + &self.h_ru[user] * cascade
    }
}

/// Per-target geometry: angles, distance, steering vectors, reflection gain.
#[derive(Debug, Clone)]
pub struct TargetInfo {
    pub azimuth: f64,
    pub elevation: f64,
    pub distance: f64,
    /// Transmit-side RIS steering vector toward the target.
    pub a_ris_t: CVec,
    /// Receive-side RIS steering vector (same phase law, monostatic geometry).
    pub a_ris_r: CVec,
    /// Reflection coefficient rho = lambda / ((4 pi)^{3/2} d^2), unit surface.
    pub rho_tg: f64,
}

/// Geometry of all sensing targets as seen from the RIS.
#[derive(Debug, Clone)]
pub struct TargetGeometry {
    pub targets: Vec<TargetInfo>,
}

/// Builds target angles, steering vectors, and reflection coefficients.
pub fn target_geometry(cfg: &ScenarioConfig) -> Result<TargetGeometry, ScenarioError> {
    let lambda = cfg.wavelength();
    let mut targets = Vec::with_capacity(cfg.n_targets);
    for (idx, pos) in cfg.target_positions.iter().enumerate() {
        let d = displacement(&cfg.ris_position, pos);
        let dist = d.norm();
        if dist == 0.0 {
            return Err(ScenarioError::ZeroDistanceTarget(idx));
        }
        let (azimuth, elevation) = ris_angles(&d);
        let a = steering_vector_upa(cfg.ris_grid, azimuth, elevation, cfg.ris_spacing_wavelengths);
        let rho_tg = lambda / ((4.0 * std::f64::consts::PI).powf(1.5) * dist * dist);
        targets.push(TargetInfo {
            azimuth,
            elevation,
            distance: dist,
            a_ris_t: a.clone(),
            a_ris_r: a,
            rho_tg,
        });
    }
    Ok(TargetGeometry { targets })
}

/// Draws one Rician channel: H = sqrt(beta/(kappa+1)) (sqrt(kappa) H_los + H_nlos).
fn rician_channel<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    beta: f64,
    kappa: f64,
    h_los: &CMat,
) -> CMat {
    let nlos = complex_gaussian_matrix(rng, rows, cols);
    let scale = (beta / (kappa + 1.0)).sqrt();
    (h_los.scale(kappa.sqrt()) + nlos).scale(scale)
}

/// Synthesizes all channels of the scenario from one generator.
///
/// Draw order is fixed (BS-RIS, then per user BS-user and RIS-user), so an
/// identical generator state reproduces the set bitwise.
pub fn synthesize_channels<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> ChannelSet {
    let nb = cfg.n_bs_antennas;
    let nu = cfg.n_user_antennas;
    let nr = cfg.n_ris_elements();
    let spacing = cfg.ris_spacing_wavelengths;
    let beta0 = cfg.beta0();

    // BS -> RIS link.
    let d_br = displacement(&cfg.bs_position, &cfg.ris_position);
    let beta_br = pathloss(beta0, d_br.norm(), cfg.pathloss_exponents.bs_ris);
    let a_bs = steering_vector_ula(nb, d_br.normalize().x, spacing);
    let (az_rb, el_rb) = ris_angles(&(-d_br));
    let a_ris_bs = steering_vector_upa(cfg.ris_grid, az_rb, el_rb, spacing);
    // H_BR is N_B x N_R with LoS part a_bs * a_ris^H.
    let los_br = &a_bs * a_ris_bs.adjoint();
    let h_br = rician_channel(rng, nb, nr, beta_br, cfg.rician_factors.bs_ris, &los_br);

    let mut h_bu = Vec::with_capacity(cfg.n_users);
    let mut h_ru = Vec::with_capacity(cfg.n_users);
    for user_pos in &cfg.user_positions {
        let d_bu = displacement(&cfg.bs_position, user_pos);
        let beta_bu = pathloss(beta0, d_bu.norm(), cfg.pathloss_exponents.bs_user);
        let a_user_b = steering_vector_ula(nu, (-d_bu).normalize().x, spacing);
        let a_bs_u = steering_vector_ula(nb, d_bu.normalize().x, spacing);
        let los_bu = &a_user_b * a_bs_u.adjoint();
        h_bu.push(rician_channel(
            rng,
            nu,
            nb,
            beta_bu,
            cfg.rician_factors.bs_user,
            &los_bu,
        ));

        let d_ru = displacement(&cfg.ris_position, user_pos);
        let beta_ru = pathloss(beta0, d_ru.norm(), cfg.pathloss_exponents.ris_user);
        let a_user_r = steering_vector_ula(nu, (-d_ru).normalize().x, spacing);
        let (az_ru, el_ru) = ris_angles(&d_ru);
        let a_ris_u = steering_vector_upa(cfg.ris_grid, az_ru, el_ru, spacing);
        let los_ru = &a_user_r * a_ris_u.adjoint();
        h_ru.push(rician_channel(
            rng,
            nu,
            nr,
            beta_ru,
            cfg.rician_factors.ris_user,
            &los_ru,
        ));
    }

    let sigma_c = cfg.user_noise_w();
    let sigma_r = cfg.radar_noise_w();
    ChannelSet {
        h_bu,
        h_ru,
        h_br_h: h_br.adjoint(),
        r_nc: CMat::identity(nu, nu).scale(sigma_c),
        r_nr: CMat::identity(nb, nb).scale(sigma_r),
    }
}

/// RIS steering vector toward the user (used by the user-direction baseline).
pub fn ris_steering_toward_user(cfg: &ScenarioConfig, user: usize) -> CVec {
    let d = displacement(&cfg.ris_position, &cfg.user_positions[user]);
    let (az, el) = ris_angles(&d);
    steering_vector_upa(cfg.ris_grid, az, el, cfg.ris_spacing_wavelengths)
}

/// LoS component of H_BR (N_B x N_R), unit-modulus entries, used by the
/// fixed-direction RIS baselines.
pub fn h_br_los(cfg: &ScenarioConfig) -> CMat {
    let d_br = displacement(&cfg.bs_position, &cfg.ris_position);
    let a_bs = steering_vector_ula(cfg.n_bs_antennas, d_br.normalize().x, cfg.ris_spacing_wavelengths);
    let (az_rb, el_rb) = ris_angles(&(-d_br));
    let a_ris_bs = steering_vector_upa(cfg.ris_grid, az_rb, el_rb, cfg.ris_spacing_wavelengths);
    &a_bs * a_ris_bs.adjoint()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::seeded_rng;

    fn paper_config() -> ScenarioConfig {
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/paper_sust.json");
        load_config(path).expect("paper defaults config parses")
    }

    #[test]
    fn paper_defaults_convert_units() {
        let cfg = paper_config();
        assert!((cfg.tx_power_w() - 0.1).abs() < 1e-12);
        assert_eq!(cfg.radar_samples(), 50_000);
        assert!((cfg.wavelength() - 0.029_979_245_8).abs() < 1e-9);
        assert!((cfg.beta0() - 1e-3).abs() < 1e-12);
        assert!((cfg.user_noise_w() - 1e-14).abs() < 1e-26);
    }

    #[test]
    fn stream_bound_is_validated() {
        let mut cfg = paper_config();
        cfg.n_streams = 5; // exceeds N_U = 4
        assert!(matches!(cfg.validate(), Err(ScenarioError::Validation(_))));
    }

    #[test]
    fn non_integer_sample_count_rejected() {
        let mut cfg = paper_config();
        cfg.sensing_slot_s = 0.05000007;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn steering_broadside_all_ones() {
        let a = steering_vector_upa((3, 4), 0.0, 0.0, 0.5);
        for z in a.iter() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn steering_one_by_two_endfire() {
        let a = steering_vector_upa((1, 2), std::f64::consts::FRAC_PI_2, 0.0, 0.5);
        assert!((a[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!((a[1] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn steering_conjugate_symmetry() {
        for n in 2..6 {
            let az = 0.7;
            let a_pos = steering_vector_upa((1, n), az, 0.15, 0.5);
            let a_neg = steering_vector_upa((1, n), -az, 0.15, 0.5);
            // Elevation is zero only in the pure-azimuth case; test with el = 0.
            let a_pos0 = steering_vector_upa((1, n), az, 0.0, 0.5);
            let a_neg0 = steering_vector_upa((1, n), -az, 0.0, 0.5);
            for i in 0..n {
                assert!((a_neg0[i] - a_pos0[i].conj()).norm() < 1e-12);
            }
            // And unit modulus everywhere regardless of elevation.
            for v in a_pos.iter().chain(a_neg.iter()) {
                assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn target_at_paper_coordinates() {
        let cfg = paper_config();
        let geo = target_geometry(&cfg).unwrap();
        let t = &geo.targets[0];
        assert!((t.distance - 450.0f64.sqrt()).abs() < 1e-9);
        assert!((t.azimuth.to_degrees() - 45.0).abs() < 1e-9);
        assert!(t.elevation.abs() < 1e-12);
        let rho_expected = cfg.wavelength() / ((4.0 * std::f64::consts::PI).powf(1.5) * 450.0);
        assert!((t.rho_tg - rho_expected).abs() < 1e-12 * rho_expected);
        assert!((t.rho_tg - 1.495e-6).abs() < 5e-9, "rho = {}", t.rho_tg);
        for z in t.a_ris_t.iter() {
            assert!((z.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_distance_target_rejected() {
        let mut cfg = paper_config();
        cfg.target_positions[0] = cfg.ris_position;
        assert!(matches!(
            target_geometry(&cfg),
            Err(ScenarioError::ZeroDistanceTarget(0))
        ));
    }

    #[test]
    fn pathloss_doubling() {
        let alpha = 2.7;
        let b1 = pathloss(1e-3, 35.0, alpha);
        let b2 = pathloss(1e-3, 70.0, alpha);
        assert!((b2 / b1 - 2f64.powf(-alpha)).abs() < 1e-12);
    }

    #[test]
    fn rayleigh_link_energy_matches_beta() {
        let mut cfg = paper_config();
        cfg.rician_factors.bs_user = 0.0;
        let d = displacement(&cfg.bs_position, &cfg.user_positions[0]).norm();
        let beta = pathloss(cfg.beta0(), d, cfg.pathloss_exponents.bs_user);
        let mut rng = seeded_rng(11, 0);
        let mut acc = 0.0;
        let draws = 1000;
        for _ in 0..draws {
            let ch = synthesize_channels(&cfg, &mut rng);
            acc += ch.h_bu[0].norm_squared();
        }
        let per_entry = acc
            / (draws as f64 * (cfg.n_user_antennas * cfg.n_bs_antennas) as f64);
        assert!(
            (per_entry / beta - 1.0).abs() < 0.05,
            "empirical {per_entry} vs beta {beta}"
        );
    }

    #[test]
    fn large_kappa_limit_is_los() {
        let mut cfg = paper_config();
        cfg.rician_factors.bs_ris = 1e9;
        let mut rng = seeded_rng(3, 0);
        let ch = synthesize_channels(&cfg, &mut rng);
        let d = displacement(&cfg.bs_position, &cfg.ris_position).norm();
        let beta = pathloss(cfg.beta0(), d, cfg.pathloss_exponents.bs_ris);
        let los = h_br_los(&cfg);
        let rel = (ch.h_br().scale(1.0 / beta.sqrt()) - &los).norm() / los.norm();
        assert!(rel < 1e-3, "relative deviation {rel}");
    }

    #[test]
    fn synthesis_is_deterministic() {
        let cfg = paper_config();
        let a = synthesize_channels(&cfg, &mut seeded_rng(42, 7));
        let b = synthesize_channels(&cfg, &mut seeded_rng(42, 7));
        assert_eq!(a.h_br_h, b.h_br_h);
        assert_eq!(a.h_bu[0], b.h_bu[0]);
        assert_eq!(a.h_ru[0], b.h_ru[0]);
        let c = synthesize_channels(&cfg, &mut seeded_rng(42, 8));
        assert_ne!(a.h_br_h, c.h_br_h);
    }

    #[test]
    fn empirical_rician_factor() {
        let cfg = paper_config();
        let draws = 2000;
        let nb = cfg.n_bs_antennas;
        let nr = cfg.n_ris_elements();
        let mut mean = CMat::zeros(nb, nr);
        let mut power = 0.0;
        let mut rng = seeded_rng(5, 0);
        let mut all: Vec<CMat> = Vec::with_capacity(draws);
        for _ in 0..draws {
            let ch = synthesize_channels(&cfg, &mut rng);
            let h = ch.h_br();
            mean += &h;
            power += h.norm_squared();
            all.push(h);
        }
        mean /= Complex64::new(draws as f64, 0.0);
        let mut var = 0.0;
        for h in &all {
            var += (h - &mean).norm_squared();
        }
        var /= draws as f64;
        let kappa_hat = mean.norm_squared() / (var / 1.0);
        assert!(
            (kappa_hat / cfg.rician_factors.bs_ris - 1.0).abs() < 0.10,
            "empirical kappa {kappa_hat}"
        );
        let _ = power;
    }

    #[test]
    fn effective_channel_composition() {
        let cfg = paper_config();
        let ch = synthesize_channels(&cfg, &mut seeded_rng(2, 0));
        let nr = cfg.n_ris_elements();
        let theta = CVec::from_fn(nr, |i, _| Complex64::from_polar(1.0, 0.1 * i as f64));
        let hc = ch.effective_channel(0, &theta);
        let theta_mat = CMat::from_diagonal(&theta);
        let expected = &ch.h_bu[0] + &ch.h_ru[0] * &theta_mat * &ch.h_br_h;
        assert!((hc - expected).norm() < 1e-12);
    }
}
