//! Sensing-side computations: the GLRT detection probability and its inverse,
//! the effective detection threshold, the echo-energy quadratic form, the
//! optimal single-target receive beamformer, zero-forcing multi-target
//! receivers, and the minimum transmit power that sensing requires.

use thiserror::Error;

use crate::numerics::{
    bisect, hermitian_eig, q_inverse, BisectionProblem, CMat, CVec, NumericsError,
};
use crate::scenario::{ChannelSet, ScenarioConfig, TargetGeometry, TargetInfo};

#[derive(Debug, Error)]
pub enum RadarError {
    #[error("deflection must be nonnegative, got {0}")]
    NegativeDeflection(f64),
    #[error("probability {p} outside the reachable interval ({p_fa}, 1)")]
    ProbabilityDomain { p: f64, p_fa: f64 },
    #[error("cascaded channel toward the target is zero")]
    DegenerateCascade,
    #[error("interference occupies all receive dimensions")]
    NullSpaceExhausted,
    #[error("echo quadratic form is zero; sensing infeasible")]
    SensingInfeasible,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Detection requirements plus the derived GLRT constants.
///
/// The deflection convention is x = D * E / (||w||^2 sigma^2): the sample
/// count D multiplies the per-sample echo energy so that the quadratic
/// constraint and the probability function agree.
#[derive(Debug, Clone, Copy)]
pub struct DetectionSpec {
    /// Probability of false alarm, in (0, 1).
    pub p_fa: f64,
    /// Required probability of detection, in (p_fa, 1).
    pub gamma_d: f64,
    /// Samples per sensing slot.
    pub samples: u64,
    /// Radar-side noise power in watts.
    pub noise_power: f64,
    /// Cached Q^{-1}(p_fa / 2).
    glrt_offset: f64,
    /// Cached P^{-1}(gamma_d), the deflection meeting the detection target.
    deflection_target: f64,
}

impl DetectionSpec {
    pub fn new(p_fa: f64, gamma_d: f64, samples: u64, noise_power: f64) -> Result<Self, RadarError> {
        if !(p_fa > 0.0 && p_fa < 1.0) {
            return Err(RadarError::ProbabilityDomain { p: p_fa, p_fa });
        }
        if !(gamma_d > p_fa && gamma_d < 1.0) {
            return Err(RadarError::ProbabilityDomain { p: gamma_d, p_fa });
        }
        if samples == 0 || noise_power <= 0.0 {
            return Err(RadarError::Dimension(
                "samples must be >= 1 and noise power positive".into(),
            ));
        }
        let glrt_offset = q_inverse(p_fa / 2.0)?;
        let mut spec = DetectionSpec {
            p_fa,
            gamma_d,
            samples,
            noise_power,
            glrt_offset,
            deflection_target: 0.0,
        };
        spec.deflection_target = detection_inverse(gamma_d, &spec)?;
        Ok(spec)
    }

    pub fn from_scenario(cfg: &ScenarioConfig) -> Result<Self, RadarError> {
        DetectionSpec::new(
            cfg.p_false_alarm,
            cfg.detection_target,
            cfg.radar_samples(),
            cfg.radar_noise_w(),
        )
    }

    /// Q^{-1}(p_fa / 2), the offset of both Q branches.
    pub fn glrt_offset(&self) -> f64 {
        self.glrt_offset
    }

    /// P^{-1}(gamma_d): the deflection at which detection meets the target.
    pub fn deflection_target(&self) -> f64 {
        self.deflection_target
    }

    /// Returns a copy with a different detection target.
    pub fn with_gamma_d(&self, gamma_d: f64) -> Result<Self, RadarError> {
        DetectionSpec::new(self.p_fa, gamma_d, self.samples, self.noise_power)
    }
}

/// GLRT probability of detection P(x) = Q(a - sqrt(x)) + Q(a + sqrt(x)) with
/// a = Q^{-1}(p_fa / 2); strictly increasing in the deflection x >= 0.
pub fn detection_probability(x: f64, spec: &DetectionSpec) -> Result<f64, RadarError> {
    if x < 0.0 {
        return Err(RadarError::NegativeDeflection(x));
    }
    let a = spec.glrt_offset;
    let s = x.sqrt();
    Ok(crate::numerics::q_function(a - s) + crate::numerics::q_function(a + s))
}

/// Inverse of [`detection_probability`] on (p_fa, 1), found by bisection.
pub fn detection_inverse(p: f64, spec: &DetectionSpec) -> Result<f64, RadarError> {
    if !(p > spec.p_fa && p < 1.0) {
        return Err(RadarError::ProbabilityDomain { p, p_fa: spec.p_fa });
    }
    let a = spec.glrt_offset;
    // The Q(a - sqrt(x)) branch dominates: its root gives a tight bracket.
    let mut hi = (a + q_inverse(1.0 - p)?).powi(2) + 10.0;
    let mut tries = 0;
    while detection_probability(hi, spec)? < p {
        hi *= 2.0;
        tries += 1;
        if tries > 60 {
            return Err(RadarError::ProbabilityDomain { p, p_fa: spec.p_fa });
        }
    }
    let problem = BisectionProblem {
        lower: 0.0,
        upper: hi,
        tolerance: 1e-13,
    };
    let root = bisect(problem, |x| {
        detection_probability(x.max(0.0), spec).expect("x >= 0 inside bracket") - p
    })?;
    Ok(root.max(0.0))
}

/// Echo-energy quadratic form and the matching effective threshold.
#[derive(Debug, Clone)]
pub struct RadarQuadratic {
    /// Hermitian PSD matrix B with detected energy tr(F^H B F); rank 1 in
    /// the single-target case.
    pub b_matrix: CMat,
    /// Effective detection threshold for tr(F^H B F) >= threshold.
    pub threshold: f64,
}

impl RadarQuadratic {
    /// Detected echo energy tr(F^H B F) for a stacked precoder.
    pub fn energy(&self, precoder: &CMat) -> f64 {
        (precoder.adjoint() * &self.b_matrix * precoder).trace().re
    }
}

/// Effective detection threshold ||w||^2 sigma^2 P^{-1}(gamma_d) / D.
pub fn effective_threshold(spec: &DetectionSpec, w: &CVec) -> f64 {
    w.norm_squared() * spec.noise_power * spec.deflection_target / spec.samples as f64
}

/// Deflection of an echo energy under a receiver: x = D * E / (||w||^2 sigma^2).
pub fn deflection(energy: f64, spec: &DetectionSpec, w: &CVec) -> f64 {
    spec.samples as f64 * energy / (w.norm_squared() * spec.noise_power)
}

/// Receive beamformer H_BR * Diag(theta) * a toward a target.
pub fn receive_cascade(channels: &ChannelSet, theta: &CVec, a_ris_r: &CVec) -> CVec {
    let h_br = channels.h_br();
    let scaled = CVec::from_fn(theta.len(), |i, _| theta[i] * a_ris_r[i]);
    &h_br * scaled
}

/// Transmit-side cascade H_BR * Diag(theta)^H * a toward a target.
pub fn transmit_cascade(channels: &ChannelSet, theta: &CVec, a_ris_t: &CVec) -> CVec {
    let h_br = channels.h_br();
    let scaled = CVec::from_fn(theta.len(), |i, _| theta[i].conj() * a_ris_t[i]);
    &h_br * scaled
}

/// Assembles the echo covariance B for one target: with
/// v = rho * (H_BR Theta^H a_t) * (a_r^H Theta^H H_BR^H w), B = v v^H.
pub fn build_b_matrix(
    channels: &ChannelSet,
    target: &TargetInfo,
    theta: &CVec,
    w: &CVec,
    spec: &DetectionSpec,
) -> Result<RadarQuadratic, RadarError> {
    let nr = channels.h_br_h.nrows();
    if theta.len() != nr || target.a_ris_t.len() != nr {
        return Err(RadarError::Dimension(format!(
            "theta has {} entries, RIS has {} elements",
            theta.len(),
            nr
        )));
    }
    if w.len() != channels.h_br_h.ncols() {
        return Err(RadarError::Dimension(format!(
            "receiver has {} entries, BS has {} antennas",
            w.len(),
            channels.h_br_h.ncols()
        )));
    }
    let vt = transmit_cascade(channels, theta, &target.a_ris_t);
    let s = receive_cascade(channels, theta, &target.a_ris_r).adjoint() * w;
    let v = vt.scale(target.rho_tg) * s[(0, 0)].conj();
    Ok(RadarQuadratic {
        b_matrix: &v * v.adjoint(),
        threshold: effective_threshold(spec, w),
    })
}

/// A radar receive beamformer with its normalizing gain.
#[derive(Debug, Clone)]
pub struct RadarReceiver {
    pub w: CVec,
    pub normalizer: f64,
}

/// Optimal single-target receiver w = H_BR Theta a_r / ||H_BR Theta a_r||;
/// it maximizes the echo Rayleigh quotient.
pub fn optimal_receiver_sust(
    channels: &ChannelSet,
    target: &TargetInfo,
    theta: &CVec,
) -> Result<RadarReceiver, RadarError> {
    let u = receive_cascade(channels, theta, &target.a_ris_r);
    let norm = u.norm();
    if norm == 0.0 {
        return Err(RadarError::DegenerateCascade);
    }
    Ok(RadarReceiver {
        w: u.scale(1.0 / norm),
        normalizer: 1.0 / norm,
    })
}

/// Interference Gram matrix for target `k`: the echoes of all other targets
/// projected through the current precoder.
pub fn interference_gram(
    channels: &ChannelSet,
    geometry: &TargetGeometry,
    theta: &CVec,
    precoder: &CMat,
    k: usize,
) -> CMat {
    let nb = channels.h_br_h.ncols();
    let mut m = CMat::zeros(nb, precoder.ncols());
    for (j, tgt) in geometry.targets.iter().enumerate() {
        if j == k {
            continue;
        }
        let u = receive_cascade(channels, theta, &tgt.a_ris_r);
        let r = transmit_cascade(channels, theta, &tgt.a_ris_t).adjoint() * precoder;
        m += (&u * r).scale(tgt.rho_tg);
    }
    &m * m.adjoint()
}

/// Zero-forcing receivers for every target: each w_k annihilates the other
/// targets' echoes and maximizes its own echo power inside that null space.
pub fn zf_receivers_mumt(
    channels: &ChannelSet,
    geometry: &TargetGeometry,
    theta: &CVec,
    precoder: &CMat,
) -> Result<Vec<RadarReceiver>, RadarError> {
    let nb = channels.h_br_h.ncols();
    let mut receivers = Vec::with_capacity(geometry.targets.len());
    for (k, tgt) in geometry.targets.iter().enumerate() {
        let upsilon = interference_gram(channels, geometry, theta, precoder, k);
        let eig = hermitian_eig(&upsilon)?;
        let lambda_max = eig.lambda_max().max(0.0);
        let cutoff = 1e-10 * lambda_max;
        let null_cols: Vec<usize> = (0..nb)
            .filter(|&i| eig.values[i] <= cutoff)
            .collect();
        if null_cols.is_empty() {
            return Err(RadarError::NullSpaceExhausted);
        }
        let mut basis = CMat::zeros(nb, null_cols.len());
        for (dst, &src) in null_cols.iter().enumerate() {
            basis.set_column(dst, &eig.vectors.column(src));
        }
        // Desired echo matrix for this target, projected into the null basis.
        let u = receive_cascade(channels, theta, &tgt.a_ris_r);
        let r = transmit_cascade(channels, theta, &tgt.a_ris_t).adjoint() * precoder;
        let m = (&u * r).scale(tgt.rho_tg);
        let projected = basis.adjoint() * (&m * m.adjoint()) * &basis;
        let peig = hermitian_eig(&projected)?;
        let w = &basis * peig.principal_vector();
        let norm = w.norm();
        if norm == 0.0 {
            return Err(RadarError::DegenerateCascade);
        }
        receivers.push(RadarReceiver {
            w: w.scale(1.0 / norm),
            normalizer: 1.0 / norm,
        });
    }
    Ok(receivers)
}

/// Minimum transmit power meeting the detection threshold, with the rank-one
/// direction that attains it: P_min = threshold / lambda_max(B).
pub fn minimum_power(quad: &RadarQuadratic) -> Result<(f64, CVec), RadarError> {
    let eig = hermitian_eig(&quad.b_matrix)?;
    let lambda = eig.lambda_max();
    if lambda <= 0.0 || quad.b_matrix.norm() == 0.0 {
        return Err(RadarError::SensingInfeasible);
    }
    Ok((quad.threshold / lambda, eig.principal_vector()))
}
