//! Communication-side optimization: LMMSE equalizers, MSE matrices and
//! Schur-concave objectives, the weighted-MMSE reformulation machinery, the
//! detection-constrained single-user precoder (semi-closed form plus a dual
//! search on the radar multiplier), and the multi-user multi-target MM-QCQP
//! precoder.
//!
//! All precoder solves work on the power-normalized variable F_hat: the
//! noise term is scaled by tr(F_hat^H F_hat) / P_max, which embeds the
//! optimal power multiplier, and the returned precoder is rescaled so
//! tr(F F^H) = P_max exactly (maximum power allocation).

use num_complex::Complex64;
use thiserror::Error;

use crate::numerics::{hermitian_eig, kron, unvec, vec, CMat, CVec, NumericsError};
use crate::radar::{RadarError, RadarQuadratic};
use crate::scenario::ChannelSet;

#[derive(Debug, Error)]
pub enum PrecoderError {
    #[error("sensing infeasible: required power {p_min:.3e} W exceeds budget {p_max:.3e} W")]
    Infeasible { p_min: f64, p_max: f64 },
    #[error("no strictly feasible starting precoder found for the MM iteration")]
    InfeasibleStart,
    #[error("linear system is singular: {0}")]
    Singular(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Radar(#[from] RadarError),
}

/// Per-user precoder blocks F_k (N_B x N each); data symbols carry unit
/// covariance so power is tr(F F^H) over the stacked matrix.
#[derive(Debug, Clone)]
pub struct Precoder {
    pub per_user: Vec<CMat>,
}

impl Precoder {
    pub fn new(per_user: Vec<CMat>) -> Self {
        Precoder { per_user }
    }

    /// Uniform power over the first N antennas of each user block.
    pub fn isotropic(n_bs: usize, n_streams: usize, n_users: usize, p_max: f64) -> Self {
        let scale = (p_max / (n_streams * n_users) as f64).sqrt();
        let per_user = (0..n_users)
            .map(|_| {
                CMat::from_fn(n_bs, n_streams, |r, c| {
                    if r == c {
                        Complex64::new(scale, 0.0)
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                })
            })
            .collect();
        Precoder { per_user }
    }

    pub fn n_users(&self) -> usize {
        self.per_user.len()
    }

    pub fn n_streams(&self) -> usize {
        self.per_user[0].ncols()
    }

    /// Stacked matrix [F_1 ... F_K].
    pub fn stacked(&self) -> CMat {
        let nb = self.per_user[0].nrows();
        let n = self.n_streams();
        let k = self.n_users();
        let mut f = CMat::zeros(nb, n * k);
        for (i, fk) in self.per_user.iter().enumerate() {
            f.view_mut((0, i * n), (nb, n)).copy_from(fk);
        }
        f
    }

    pub fn from_stacked(stacked: &CMat, n_streams: usize) -> Self {
        let k = stacked.ncols() / n_streams;
        let per_user = (0..k)
            .map(|i| {
                stacked
                    .view((0, i * n_streams), (stacked.nrows(), n_streams))
                    .into_owned()
            })
            .collect();
        Precoder { per_user }
    }

    pub fn total_power(&self) -> f64 {
        self.per_user.iter().map(|f| f.norm_squared()).sum()
    }

    /// Rescales so tr(F F^H) = p_max exactly.
    pub fn rescale_to(&mut self, p_max: f64) {
        let p = self.total_power();
        if p > 0.0 {
            let s = (p_max / p).sqrt();
            for f in &mut self.per_user {
                *f *= Complex64::new(s, 0.0);
            }
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Precoder {
            per_user: self
                .per_user
                .iter()
                .map(|f| f.scale(factor))
                .collect(),
        }
    }
}

/// Which Schur-concave objective drives the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    Mse,
    WeightedMse,
    SumRate,
    WeightedSumRate,
}

impl ObjectiveKind {
    pub fn uses_wmmse(&self) -> bool {
        matches!(self, ObjectiveKind::SumRate | ObjectiveKind::WeightedSumRate)
    }
}

/// Weighting matrices of the unified objective; identity defaults reproduce
/// the plain MSE and capacity metrics.
#[derive(Debug, Clone)]
pub struct MetricWeights {
    pub a: Vec<CMat>,
    pub c: Vec<CMat>,
    pub phi: Vec<CMat>,
    pub objective: ObjectiveKind,
}

impl MetricWeights {
    pub fn identity(n_streams: usize, n_users: usize, objective: ObjectiveKind) -> Self {
        let id = CMat::identity(n_streams, n_streams);
        MetricWeights {
            a: vec![id.clone(); n_users],
            c: vec![id.clone(); n_users],
            phi: vec![id; n_users],
            objective,
        }
    }
}

/// Auxiliary receiver Y and weighting W_bar of the weighted-MMSE surrogate,
/// one entry per user.
#[derive(Debug, Clone)]
pub struct WmmseState {
    pub y: Vec<CMat>,
    pub w_bar: Vec<CMat>,
}

/// Effective downlink channels for a fixed RIS phase vector.
#[derive(Debug, Clone)]
pub struct EffectiveChannels {
    /// H_c,k = H_BU,k + H_RU,k Diag(theta) H_BR^H, one per user.
    pub hc: Vec<CMat>,
    pub r_nc: CMat,
}

/// Builds the per-user effective channels for the given phases.
pub fn effective_channels(channels: &ChannelSet, theta: &CVec) -> EffectiveChannels {
    let hc = (0..channels.h_bu.len())
        .map(|k| channels.effective_channel(k, theta))
        .collect();
    EffectiveChannels {
        hc,
        r_nc: channels.r_nc.clone(),
    }
}

/// Interference-plus-noise covariance seen by user k.
pub fn interference_plus_noise(eff: &EffectiveChannels, precoder: &Precoder, k: usize) -> CMat {
    let mut r = eff.r_nc.clone();
    for (l, fl) in precoder.per_user.iter().enumerate() {
        if l == k {
            continue;
        }
        let hf = &eff.hc[k] * fl;
        r += &hf * hf.adjoint();
    }
    r
}

/// MSE matrix of user k: (G H F_k - I)(G H F_k - I)^H + G R_tilde G^H.
pub fn mse_matrix(
    eff: &EffectiveChannels,
    precoder: &Precoder,
    equalizer: &CMat,
    k: usize,
) -> CMat {
    let n = precoder.n_streams();
    let e = equalizer * &eff.hc[k] * &precoder.per_user[k] - CMat::identity(n, n);
    let r = interference_plus_noise(eff, precoder, k);
    &e * e.adjoint() + equalizer * r * equalizer.adjoint()
}

/// LMMSE equalizer G_k = F_k^H H_k^H (H_k F F^H H_k^H + R_nc)^{-1}.
pub fn lmmse_equalizer(
    eff: &EffectiveChannels,
    precoder: &Precoder,
    k: usize,
) -> Result<CMat, PrecoderError> {
    let h = &eff.hc[k];
    let f = precoder.stacked();
    let hf = h * &f;
    let cov = &hf * hf.adjoint() + &eff.r_nc;
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| PrecoderError::Singular("receive covariance".into()))?;
    let rhs = h * &precoder.per_user[k];
    // G^H = cov^{-1} (H F_k)  =>  G = F_k^H H^H cov^{-1}.
    Ok(chol.solve(&rhs).adjoint())
}

/// Closed-form optimizers of the weighted-MMSE surrogate for fixed X:
/// Y = Phi^{-1} C^H X^H (Pi^{-1} + X C Phi^{-1} C^H X^H)^{-1} and
/// W_bar = Phi + C^H X^H Pi X C. `pi_inv` is Pi^{-1}.
pub fn wmmse_core(
    x: &CMat,
    pi_inv: &CMat,
    phi: &CMat,
    c: &CMat,
) -> Result<(CMat, CMat), PrecoderError> {
    let phi_chol = phi
        .clone()
        .cholesky()
        .ok_or_else(|| PrecoderError::Singular("phi must be positive definite".into()))?;
    let xc = x * c;
    let phi_inv_ch_xh = phi_chol.solve(&xc.adjoint());
    let inner = pi_inv + &xc * &phi_inv_ch_xh;
    let inner_chol = inner
        .clone()
        .cholesky()
        .ok_or_else(|| PrecoderError::Singular("wmmse inner covariance".into()))?;
    // Y = (Phi^{-1} C^H X^H) inner^{-1}; solve on the transposed side.
    let y = inner_chol.solve(&phi_inv_ch_xh.adjoint()).adjoint();
    let pi_chol = pi_inv
        .clone()
        .cholesky()
        .ok_or_else(|| PrecoderError::Singular("pi_inv must be positive definite".into()))?;
    let pi_x = pi_chol.solve(&xc); // Pi X C since Pi = (Pi^{-1})^{-1}
    let w_bar = phi + xc.adjoint() * pi_x;
    Ok((y, w_bar))
}

/// Surrogate objective of the weighted-MMSE reformulation at (X, Y, W_bar):
/// tr{W[(YXC-I)Phi^{-1}(YXC-I)^H + Y Pi^{-1} Y^H]} - log det(W).
pub fn wmmse_surrogate_value(
    x: &CMat,
    y: &CMat,
    w_bar: &CMat,
    pi_inv: &CMat,
    phi: &CMat,
    c: &CMat,
) -> Result<f64, PrecoderError> {
    let n = w_bar.nrows();
    let e = y * x * c - CMat::identity(n, n);
    let phi_chol = phi
        .clone()
        .cholesky()
        .ok_or_else(|| PrecoderError::Singular("phi".into()))?;
    let inner = &e * phi_chol.solve(&e.adjoint()) + y * pi_inv * y.adjoint();
    let trace = (w_bar * inner).trace().re;
    Ok(trace - logdet_hpd(w_bar)?)
}

/// log det of a Hermitian positive definite matrix via Cholesky.
pub fn logdet_hpd(m: &CMat) -> Result<f64, PrecoderError> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| PrecoderError::Singular("logdet of non-HPD matrix".into()))?;
    let l = chol.l();
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        acc += l[(i, i)].re.ln();
    }
    Ok(2.0 * acc)
}

/// Updates (Y_k, W_bar_k) for user k with X = H_k F_k and Pi = R_tilde^{-1}.
pub fn wmmse_update(
    eff: &EffectiveChannels,
    precoder: &Precoder,
    weights: &MetricWeights,
    k: usize,
) -> Result<(CMat, CMat), PrecoderError> {
    let x = &eff.hc[k] * &precoder.per_user[k];
    let pi_inv = interference_plus_noise(eff, precoder, k);
    wmmse_core(&x, &pi_inv, &weights.phi[k], &weights.c[k])
}

/// Updates the full WMMSE state for every user.
pub fn wmmse_state(
    eff: &EffectiveChannels,
    precoder: &Precoder,
    weights: &MetricWeights,
) -> Result<WmmseState, PrecoderError> {
    let mut y = Vec::with_capacity(precoder.n_users());
    let mut w_bar = Vec::with_capacity(precoder.n_users());
    for k in 0..precoder.n_users() {
        let (yk, wk) = wmmse_update(eff, precoder, weights, k)?;
        y.push(yk);
        w_bar.push(wk);
    }
    Ok(WmmseState { y, w_bar })
}

/// Quadratic data of the unified precoder objective with fixed receive-side
/// matrices: per user, the kernel T_k = H_k^H J_k H_k, the right weight R_k,
/// the linear target L_k, plus the total noise trace.
#[derive(Debug, Clone)]
pub struct PrecoderObjective {
    pub kernels: Vec<CMat>,
    pub right_weights: Vec<CMat>,
    pub linear: Vec<CMat>,
    pub noise_trace: f64,
    pub constant: f64,
}

/// Assembles the unified quadratic objective from either the weighted-MSE
/// weights (A_k, C_k with equalizers G_k) or the WMMSE surrogate state
/// (Y_k, W_bar_k with Phi_k, C_k).
pub fn build_precoder_objective(
    eff: &EffectiveChannels,
    weights: &MetricWeights,
    equalizers: &[CMat],
    wmmse: Option<&WmmseState>,
) -> Result<PrecoderObjective, PrecoderError> {
    let k_users = eff.hc.len();
    let mut kernels = Vec::with_capacity(k_users);
    let mut right_weights = Vec::with_capacity(k_users);
    let mut linear = Vec::with_capacity(k_users);
    let mut noise_trace = 0.0;
    let mut constant = 0.0;
    for k in 0..k_users {
        let h = &eff.hc[k];
        match wmmse {
            None => {
                let g = &equalizers[k];
                let a = &weights.a[k];
                let ag = a.adjoint() * g; // A^H G
                let j = ag.adjoint() * &ag; // G^H A A^H G
                kernels.push(h.adjoint() * j * h);
                right_weights.push(&weights.c[k] * weights.c[k].adjoint());
                linear.push(h.adjoint() * g.adjoint() * a * a.adjoint() * weights.c[k].adjoint());
                noise_trace += (&ag * &eff.r_nc * ag.adjoint()).trace().re;
                constant += (a.adjoint() * a).trace().re;
            }
            Some(state) => {
                let y = &state.y[k];
                let w = &state.w_bar[k];
                let phi_chol = weights.phi[k]
                    .clone()
                    .cholesky()
                    .ok_or_else(|| PrecoderError::Singular("phi".into()))?;
                let j = y.adjoint() * w * y;
                kernels.push(h.adjoint() * &j * h);
                let c_phi = phi_chol.solve(&weights.c[k].adjoint()); // Phi^{-1} C^H
                right_weights.push(&weights.c[k] * &c_phi);
                linear.push(h.adjoint() * y.adjoint() * w * c_phi.adjoint());
                noise_trace += (w * y * &eff.r_nc * y.adjoint()).trace().re;
                let phi_inv = phi_chol.solve(&CMat::identity(w.nrows(), w.nrows()));
                constant += (w * phi_inv).trace().re - logdet_hpd(w)?;
            }
        }
    }
    Ok(PrecoderObjective {
        kernels,
        right_weights,
        linear,
        noise_trace,
        constant,
    })
}

impl PrecoderObjective {
    /// Value of the power-normalized surrogate at an (unnormalized) F_hat.
    pub fn surrogate_value(&self, f_hat: &Precoder, p_max: f64) -> f64 {
        let k_users = self.kernels.len();
        let mut acc = self.constant + self.noise_trace * total_power(f_hat) / p_max;
        for k in 0..k_users {
            for (j, fj) in f_hat.per_user.iter().enumerate() {
                let t_f = &self.kernels[k] * fj;
                if j == k {
                    acc += (fj.adjoint() * &t_f * &self.right_weights[k]).trace().re;
                } else {
                    acc += (fj.adjoint() * &t_f).trace().re;
                }
            }
            acc -= 2.0 * (f_hat.per_user[k].adjoint() * &self.linear[k]).trace().re;
        }
        acc
    }
}

fn total_power(p: &Precoder) -> f64 {
    p.total_power()
}

/// Solver diagnostics for the precoder designs.
#[derive(Debug, Clone)]
pub struct PrecoderSolverState {
    /// Radar multiplier of the single-target design.
    pub mu: f64,
    /// Radar multipliers of the multi-target design.
    pub lambdas: Vec<f64>,
    pub iterations: usize,
    /// Surrogate objective after each outer iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// tr(F^H B_l F) - threshold_l at the returned precoder, normalized by
    /// the threshold.
    pub constraint_slack: Vec<f64>,
}

/// Pencil data for the one-constraint QCQP: system K0 + mu * (I (x) Bs) with
/// K0 = L0 L0^H; in whitened coordinates the pencil is diagonal.
struct QcqpPencil {
    l0: CMat,
    eigvecs: CMat,
    eigvals: Vec<f64>,
    z: CVec,
}

impl QcqpPencil {
    fn new(k0: &CMat, constraint: &CMat, rhs: &CVec) -> Result<Self, PrecoderError> {
        let chol = k0
            .clone()
            .cholesky()
            .ok_or_else(|| PrecoderError::Singular("precoder system base".into()))?;
        let l = chol.l();
        let n = k0.nrows();
        // M = L^{-1} C L^{-H}, Hermitian.
        let li_c = l.solve_lower_triangular(constraint).ok_or_else(|| {
            PrecoderError::Singular("triangular solve failed".into())
        })?;
        let m_t = l
            .solve_lower_triangular(&li_c.adjoint())
            .ok_or_else(|| PrecoderError::Singular("triangular solve failed".into()))?;
        let m = m_t.adjoint();
        let eig = hermitian_eig(&m)?;
        let li_rhs = l
            .solve_lower_triangular(&CMat::from_column_slice(n, 1, rhs.as_slice()))
            .ok_or_else(|| PrecoderError::Singular("triangular solve failed".into()))?;
        let z = eig.vectors.adjoint() * CVec::from_column_slice(li_rhs.as_slice());
        Ok(QcqpPencil {
            l0: l,
            eigvecs: eig.vectors,
            eigvals: eig.values.iter().copied().collect(),
            z,
        })
    }

    /// Constraint value h(mu) = sum_i lam_i |z_i|^2 / (1 + mu lam_i)^2,
    /// strictly decreasing on the positive definite interval.
    fn constraint_value(&self, mu: f64) -> f64 {
        self.eigvals
            .iter()
            .zip(self.z.iter())
            .map(|(&lam, z)| lam * z.norm_sqr() / (1.0 + mu * lam).powi(2))
            .sum()
    }

    fn solution_norm_sq(&self, mu: f64) -> f64 {
        self.eigvals
            .iter()
            .zip(self.z.iter())
            .map(|(&lam, z)| z.norm_sqr() / (1.0 + mu * lam).powi(2))
            .sum()
    }

    /// Reconstructs vec(F_hat) = L^{-H} V (I + mu Lambda)^{-1} z.
    fn solution(&self, mu: f64) -> Result<CVec, PrecoderError> {
        let y = CVec::from_fn(self.z.len(), |i, _| {
            self.z[i] / Complex64::new(1.0 + mu * self.eigvals[i], 0.0)
        });
        let vy = &self.eigvecs * y;
        let x = self
            .l0
            .adjoint()
            .solve_upper_triangular(&CMat::from_column_slice(vy.len(), 1, vy.as_slice()))
            .ok_or_else(|| PrecoderError::Singular("triangular solve failed".into()))?;
        Ok(CVec::from_column_slice(x.as_slice()))
    }

    /// Direction that blows up at the pencil boundary, in original coords.
    fn boundary_direction(&self) -> Result<(CVec, f64), PrecoderError> {
        let (idx, &lam_min) = self
            .eigvals
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .expect("nonempty");
        let e: CVec = self.eigvecs.column(idx).into_owned();
        let x = self
            .l0
            .adjoint()
            .solve_upper_triangular(&CMat::from_column_slice(e.len(), 1, e.as_slice()))
            .ok_or_else(|| PrecoderError::Singular("triangular solve failed".into()))?;
        Ok((CVec::from_column_slice(x.as_slice()), lam_min))
    }
}

/// Base Kronecker system of the single-user objective:
/// R^T (x) T + I (x) (noise/P_max) I.
fn sust_base_system(po: &PrecoderObjective, p_max: f64) -> CMat {
    let t = &po.kernels[0];
    let r = &po.right_weights[0];
    let n = r.nrows();
    let nb = t.nrows();
    let mut k0 = kron(&r.transpose(), t);
    let ridge = po.noise_trace / p_max;
    for i in 0..n * nb {
        k0[(i, i)] += Complex64::new(ridge, 0.0);
    }
    k0
}

/// Detection-constrained single-user precoder (semi-closed form).
///
/// Solves the power-normalized QCQP with the radar constraint
/// tr(F_hat^H ((threshold/P_max) I - B) F_hat) <= 0 exactly through the dual:
/// the constraint value is monotone in the multiplier on the positive
/// definite interval, so the optimal mu comes from bisection, with mu = 0 as
/// the fast path when the unconstrained solution is already radar-feasible.
pub fn precoder_sust(
    eff: &EffectiveChannels,
    quad: &RadarQuadratic,
    weights: &MetricWeights,
    equalizers: &[CMat],
    wmmse: Option<&WmmseState>,
    p_max: f64,
) -> Result<(Precoder, PrecoderSolverState), PrecoderError> {
    if eff.hc.len() != 1 {
        return Err(PrecoderError::Dimension(
            "precoder_sust expects a single user".into(),
        ));
    }
    let po = build_precoder_objective(eff, weights, equalizers, wmmse)?;
    let n = po.right_weights[0].nrows();
    let gamma_bar = quad.threshold;

    let (p_min, b_dir) = crate::radar::minimum_power(quad)?;
    if p_min > p_max * (1.0 + 1e-9) {
        return Err(PrecoderError::Infeasible { p_min, p_max });
    }
    if (p_min - p_max).abs() <= 1e-9 * p_max {
        // Boundary: the feasible set is the principal ray of B.
        let mut f = CMat::zeros(b_dir.len(), n);
        f.set_column(0, &b_dir.scale(p_max.sqrt()));
        let prec = Precoder::from_stacked(&f, n);
        let slack = quad.energy(&prec.stacked()) / gamma_bar - 1.0;
        return Ok((
            prec,
            PrecoderSolverState {
                mu: f64::INFINITY,
                lambdas: vec![],
                iterations: 0,
                trace: vec![],
                converged: true,
                constraint_slack: vec![slack],
            },
        ));
    }

    // Scaled indefinite constraint matrix: I - (P_max / threshold) B, so the
    // constraint and multiplier live at O(1) magnitudes.
    let nb = po.kernels[0].nrows();
    let mut b_scaled = CMat::identity(nb, nb);
    b_scaled -= quad.b_matrix.scale(p_max / gamma_bar);
    let constraint_kron = kron(&CMat::identity(n, n), &b_scaled);

    let k0 = sust_base_system(&po, p_max);
    let rhs = vec(&po.linear[0]);
    let pencil = QcqpPencil::new(&k0, &constraint_kron, &rhs)?;

    let finish = |vec_f: CVec,
                  mu: f64,
                  iterations: usize,
                  converged: bool|
     -> Result<(Precoder, PrecoderSolverState), PrecoderError> {
        let f_hat = unvec(&vec_f, nb, n);
        let mut prec = Precoder::from_stacked(&f_hat, n);
        let obj = po.surrogate_value(&prec, p_max);
        prec.rescale_to(p_max);
        let slack = quad.energy(&prec.stacked()) / gamma_bar - 1.0;
        Ok((
            prec,
            PrecoderSolverState {
                mu,
                lambdas: vec![],
                iterations,
                trace: vec![obj],
                converged,
                constraint_slack: vec![slack],
            },
        ))
    };

    // Fast path: unconstrained solution already feasible.
    let h0 = pencil.constraint_value(0.0);
    let scale0 = pencil.solution_norm_sq(0.0).max(f64::MIN_POSITIVE);
    if h0 <= 1e-12 * scale0 {
        return finish(pencil.solution(0.0)?, 0.0, 0, true);
    }

    // The multiplier interval where the system stays positive definite is
    // [0, -1/lambda_min); h is strictly decreasing there.
    let lam_min = pencil
        .eigvals
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if lam_min >= -1e-14 {
        // B never helps: the constraint cannot be activated.
        return Err(PrecoderError::Infeasible { p_min, p_max });
    }
    let mu_bound = -1.0 / lam_min;
    let mut mu_hi = mu_bound * (1.0 - 1e-9);
    let mut widened = 0;
    while pencil.constraint_value(mu_hi) > 0.0 && widened < 40 {
        mu_hi = mu_bound * (1.0 - (1.0 - mu_hi / mu_bound) * 0.1);
        widened += 1;
    }
    if pencil.constraint_value(mu_hi) > 0.0 {
        // Trust-region hard case: add the boundary direction.
        let f_b = pencil.solution(mu_hi)?;
        let (dir, lam) = pencil.boundary_direction()?;
        let h_b = pencil.constraint_value(mu_hi);
        let tau = (h_b / (-lam)).sqrt();
        // Pick the sign that lowers the objective's linear term.
        let gain = 2.0 * (dir.adjoint() * &rhs)[(0, 0)].re;
        let signed = if gain >= 0.0 { tau } else { -tau };
        let vec_f = &f_b + dir.scale(signed);
        return finish(vec_f, mu_hi, widened, true);
    }

    let mut lo = 0.0;
    let mut hi = mu_hi;
    let mut h_best = h0;
    let mut iterations = 0;
    let tol = 1e-12;
    for _ in 0..240 {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let h = pencil.constraint_value(mid);
        let scale = pencil.solution_norm_sq(mid).max(f64::MIN_POSITIVE);
        h_best = h;
        if h.abs() <= tol * scale {
            lo = mid;
            hi = mid;
            break;
        }
        if h > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo) <= 1e-15 * mu_bound {
            break;
        }
    }
    // Land on the feasible side of the root.
    let mu_star = if h_best <= 0.0 { 0.5 * (lo + hi) } else { hi };
    let converged = pencil.constraint_value(mu_star) <= 1e-8 * pencil.solution_norm_sq(mu_star);
    finish(pencil.solution(mu_star)?, mu_star, iterations, converged)
}

/// Radar-unconstrained precoder (used by the dedicated-communication
/// baseline and as the mu = 0 path of the constrained designs); one exact
/// block solve per user.
pub fn precoder_comm_only(
    eff: &EffectiveChannels,
    weights: &MetricWeights,
    equalizers: &[CMat],
    wmmse: Option<&WmmseState>,
    p_max: f64,
) -> Result<(Precoder, PrecoderSolverState), PrecoderError> {
    let po = build_precoder_objective(eff, weights, equalizers, wmmse)?;
    let f_hat = solve_blocks(&po, &[], &[], None, p_max)?;
    let obj = po.surrogate_value(&f_hat, p_max);
    let mut prec = f_hat;
    prec.rescale_to(p_max);
    Ok((
        prec,
        PrecoderSolverState {
            mu: 0.0,
            lambdas: vec![],
            iterations: 1,
            trace: vec![obj],
            converged: true,
            constraint_slack: vec![],
        },
    ))
}

/// Solves the per-user block systems of the multi-user quadratic for fixed
/// multipliers. `b_scaled[l]` are B_l / threshold_l; `lambdas` are the
/// matching multipliers; `anchor` is the MM linearization point.
fn solve_blocks(
    po: &PrecoderObjective,
    b_scaled: &[CMat],
    lambdas: &[f64],
    anchor: Option<&Precoder>,
    p_max: f64,
) -> Result<Precoder, PrecoderError> {
    let k_users = po.kernels.len();
    let nb = po.kernels[0].nrows();
    let n = po.right_weights[0].nrows();
    let lambda_sum: f64 = lambdas.iter().sum();
    let ridge = (po.noise_trace + lambda_sum) / p_max;
    // Cross-user kernel sum, fixed across blocks.
    let mut kernel_sum = CMat::zeros(nb, nb);
    for t in &po.kernels {
        kernel_sum += t;
    }
    let mut blocks = Vec::with_capacity(k_users);
    for j in 0..k_users {
        let other = &kernel_sum - &po.kernels[j];
        let mut base = other;
        for i in 0..nb {
            base[(i, i)] += Complex64::new(ridge, 0.0);
        }
        let sys = kron(&po.right_weights[j].transpose(), &po.kernels[j])
            + kron(&CMat::identity(n, n), &base);
        let mut rhs_mat = po.linear[j].clone();
        if let Some(prev) = anchor {
            for (l, b) in b_scaled.iter().enumerate() {
                if lambdas[l] != 0.0 {
                    rhs_mat += (b * &prev.per_user[j]).scale(lambdas[l]);
                }
            }
        }
        let rhs = CMat::from_column_slice(nb * n, 1, vec(&rhs_mat).as_slice());
        let lu = sys.lu();
        let sol = lu
            .solve(&rhs)
            .ok_or_else(|| PrecoderError::Singular("block system".into()))?;
        blocks.push(unvec(&CVec::from_column_slice(sol.as_slice()), nb, n));
    }
    Ok(Precoder::new(blocks))
}

/// Linearized radar constraint values at F_hat around the anchor, one per
/// target, normalized by the thresholds (feasible when <= 0).
fn mm_constraint_values(
    f_hat: &Precoder,
    anchor: &Precoder,
    b_scaled: &[CMat],
    p_max: f64,
) -> Vec<f64> {
    let f = f_hat.stacked();
    let ft = anchor.stacked();
    let pw = f.norm_squared() / p_max;
    b_scaled
        .iter()
        .map(|b| {
            let cross = (ft.adjoint() * b * &f).trace().re;
            let at_anchor = (ft.adjoint() * b * &ft).trace().re;
            pw - 2.0 * cross + at_anchor
        })
        .collect()
}

/// True normalized radar constraint values tr(F_hat^H B_l F_hat) scaled by
/// tr(F_hat F_hat^H)/P_max; >= 1 means feasible after the power rescale.
fn true_constraint_ratios(f_hat: &Precoder, b_scaled: &[CMat], p_max: f64) -> Vec<f64> {
    let f = f_hat.stacked();
    let pw = f.norm_squared();
    b_scaled
        .iter()
        .map(|b| (f.adjoint() * b * &f).trace().re * p_max / pw.max(f64::MIN_POSITIVE))
        .collect()
}

/// Multi-user multi-target precoder: majorization-minimization on the
/// quartic-free radar constraints with a dual ascent over the multipliers of
/// the linearized QCQP at each outer step.
pub fn precoder_mumt(
    eff: &EffectiveChannels,
    quads: &[RadarQuadratic],
    weights: &MetricWeights,
    equalizers: &[CMat],
    wmmse: Option<&WmmseState>,
    p_max: f64,
    previous: &Precoder,
) -> Result<(Precoder, PrecoderSolverState), PrecoderError> {
    let po = build_precoder_objective(eff, weights, equalizers, wmmse)?;
    let b_scaled: Vec<CMat> = quads
        .iter()
        .map(|q| q.b_matrix.scale(1.0 / q.threshold))
        .collect();

    // MM needs a strictly feasible anchor for the true constraints.
    let anchor0 = feasible_anchor(previous, &b_scaled, quads, p_max)?;
    let mut anchor = anchor0;
    let mut lambdas = vec![0.0f64; quads.len()];
    let mut trace = Vec::new();
    let mut best = anchor.clone();
    let mut best_obj = po.surrogate_value(&best, p_max);
    trace.push(best_obj);
    let mut converged = false;
    let mut total_iters = 0;

    // Tightening margin inside the dual keeps the accepted iterates strictly
    // surrogate-feasible even at finite dual tolerance.
    let margin = 1e-6 * (1.0 + anchor.total_power() / p_max);
    for _outer in 0..30 {
        // Dual projected gradient ascent with Armijo backtracking.
        let mut f_hat = solve_blocks(&po, &b_scaled, &lambdas, Some(&anchor), p_max)?;
        let margined = |raw: &[f64]| -> Vec<f64> { raw.iter().map(|c| c + margin).collect() };
        let mut g = margined(&mm_constraint_values(&f_hat, &anchor, &b_scaled, p_max));
        let dual_value = |f: &Precoder, lam: &[f64], gv: &[f64]| -> f64 {
            po.surrogate_value(f, p_max)
                + lam.iter().zip(gv.iter()).map(|(l, c)| l * c).sum::<f64>()
        };
        let mut d_cur = dual_value(&f_hat, &lambdas, &g);
        let mut step = 1.0;
        for _ in 0..200 {
            total_iters += 1;
            let viol = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let comp: f64 = lambdas.iter().zip(g.iter()).map(|(l, c)| -l * c).sum();
            if viol <= 0.0 && comp.abs() <= 1e-8 * (1.0 + d_cur.abs()) {
                break;
            }
            let proposal: Vec<f64> = lambdas
                .iter()
                .zip(g.iter())
                .map(|(l, c)| (l + step * c).max(0.0))
                .collect();
            let ascent: f64 = proposal
                .iter()
                .zip(lambdas.iter())
                .zip(g.iter())
                .map(|((p, l), c)| (p - l) * c)
                .sum();
            if ascent <= 1e-16 * (1.0 + d_cur.abs()) {
                break;
            }
            let f_try = solve_blocks(&po, &b_scaled, &proposal, Some(&anchor), p_max)?;
            let g_try = margined(&mm_constraint_values(&f_try, &anchor, &b_scaled, p_max));
            let d_try = dual_value(&f_try, &proposal, &g_try);
            if d_try >= d_cur + 1e-4 * ascent {
                lambdas = proposal;
                f_hat = f_try;
                g = g_try;
                d_cur = d_try;
                step *= 1.3;
            } else {
                step *= 0.5;
                if step < 1e-14 {
                    break;
                }
            }
        }

        // The accepted MM step must be feasible for the true constraints; if
        // the dual left a small violation, blend back toward the anchor.
        let mut candidate = f_hat;
        let mut ok = true_constraint_ratios(&candidate, &b_scaled, p_max)
            .into_iter()
            .all(|r| r >= 1.0 - 1e-12);
        if !ok {
            for blend in [0.02f64, 0.1, 0.3, 0.6, 0.9] {
                let mixed = Precoder::new(
                    candidate
                        .per_user
                        .iter()
                        .zip(anchor.per_user.iter())
                        .map(|(f, a)| f.scale(1.0 - blend) + a.scale(blend))
                        .collect(),
                );
                if true_constraint_ratios(&mixed, &b_scaled, p_max)
                    .into_iter()
                    .all(|r| r >= 1.0 - 1e-12)
                {
                    candidate = mixed;
                    ok = true;
                    break;
                }
            }
        }
        if !ok {
            break;
        }
        let obj = po.surrogate_value(&candidate, p_max);
        let rel_change = (best_obj - obj).abs() / best_obj.abs().max(1e-300);
        if obj <= best_obj {
            best = candidate.clone();
            best_obj = obj;
        }
        trace.push(obj);
        anchor = candidate;
        if rel_change < 1e-6 {
            converged = true;
            break;
        }
    }

    let ratios = true_constraint_ratios(&best, &b_scaled, p_max);
    let mut prec = best;
    prec.rescale_to(p_max);
    let slack: Vec<f64> = ratios.iter().map(|r| r - 1.0).collect();
    Ok((
        prec,
        PrecoderSolverState {
            mu: 0.0,
            lambdas,
            iterations: total_iters,
            trace,
            converged,
            constraint_slack: slack,
        },
    ))
}

/// Finds a strictly feasible anchor for the MM iteration: the previous
/// precoder if it qualifies, otherwise power reallocation toward the
/// principal direction of the threshold-normalized echo sum.
fn feasible_anchor(
    previous: &Precoder,
    b_scaled: &[CMat],
    quads: &[RadarQuadratic],
    p_max: f64,
) -> Result<Precoder, PrecoderError> {
    let margins = |p: &Precoder| -> f64 {
        true_constraint_ratios(p, b_scaled, p_max)
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    };
    // Boundary-feasible anchors are fine: the linearized constraint touches
    // the true one there and the dual restores strict feasibility.
    if margins(previous) >= 1.0 - 1e-7 {
        return Ok(previous.clone());
    }
    let nb = quads[0].b_matrix.nrows();
    let mut b_sum = CMat::zeros(nb, nb);
    for b in b_scaled {
        b_sum += b;
    }
    let eig = hermitian_eig(&b_sum)?;
    let dir = eig.principal_vector();
    let n = previous.n_streams();
    let k = previous.n_users();
    let mut sensing = Precoder::new(vec![CMat::zeros(nb, n); k]);
    for fk in &mut sensing.per_user {
        fk.set_column(0, &dir.scale((p_max / k as f64).sqrt()));
    }
    for blend in [0.5f64, 0.8, 0.95, 1.0] {
        let mut cand = Precoder::new(
            previous
                .per_user
                .iter()
                .zip(sensing.per_user.iter())
                .map(|(p, s)| p.scale((1.0 - blend).sqrt()) + s.scale(blend.sqrt()))
                .collect(),
        );
        cand.rescale_to(p_max);
        if margins(&cand) >= 1.0 + 1e-6 {
            return Ok(cand);
        }
    }
    Err(PrecoderError::InfeasibleStart)
}

/// Weighted MSE objective sum_k tr(A_k^H Phi_MSE,k A_k) at the given state.
pub fn weighted_mse_objective(
    eff: &EffectiveChannels,
    precoder: &Precoder,
    weights: &MetricWeights,
    equalizers: &[CMat],
) -> f64 {
    let mut acc = 0.0;
    for k in 0..precoder.n_users() {
        let phi = mse_matrix(eff, precoder, &equalizers[k], k);
        acc += (weights.a[k].adjoint() * phi * &weights.a[k]).trace().re;
    }
    acc
}

/// Negative weighted sum rate -sum_k log|Phi_k + C^H F^H H^H Rt^{-1} H F C|.
pub fn weighted_sum_rate_objective(
    eff: &EffectiveChannels,
    precoder: &Precoder,
    weights: &MetricWeights,
) -> Result<f64, PrecoderError> {
    let mut acc = 0.0;
    for k in 0..precoder.n_users() {
        let x = &eff.hc[k] * &precoder.per_user[k];
        let xc = x * &weights.c[k];
        let rt = interference_plus_noise(eff, precoder, k);
        let chol = rt
            .clone()
            .cholesky()
            .ok_or_else(|| PrecoderError::Singular("interference covariance".into()))?;
        let m = &weights.phi[k] + xc.adjoint() * chol.solve(&xc);
        acc -= logdet_hpd(&m)?;
    }
    Ok(acc)
}

/// The unified objective value used for block-descent traces: weighted MSE
/// for the MSE-family objectives, negative weighted sum rate otherwise.
pub fn unified_objective(
    eff: &EffectiveChannels,
    precoder: &Precoder,
    weights: &MetricWeights,
    equalizers: &[CMat],
) -> Result<f64, PrecoderError> {
    if weights.objective.uses_wmmse() {
        weighted_sum_rate_objective(eff, precoder, weights)
    } else {
        Ok(weighted_mse_objective(eff, precoder, weights, equalizers))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{complex_gaussian_matrix, seeded_rng, standard_complex_gaussian};
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn random_eff(
        rng: &mut ChaCha8Rng,
        k_users: usize,
        nu: usize,
        nb: usize,
        noise: f64,
    ) -> EffectiveChannels {
        EffectiveChannels {
            hc: (0..k_users)
                .map(|_| complex_gaussian_matrix(rng, nu, nb))
                .collect(),
            r_nc: CMat::identity(nu, nu).scale(noise),
        }
    }

    fn scalar_eff(h: f64, noise: f64) -> EffectiveChannels {
        EffectiveChannels {
            hc: vec![CMat::from_element(1, 1, Complex64::new(h, 0.0))],
            r_nc: CMat::from_element(1, 1, Complex64::new(noise, 0.0)),
        }
    }

    #[test]
    fn mse_matrix_zero_equalizer_is_identity() {
        let mut rng = seeded_rng(1, 0);
        let eff = random_eff(&mut rng, 1, 3, 4, 0.5);
        let prec = Precoder::isotropic(4, 2, 1, 1.0);
        let g = CMat::zeros(2, 3);
        let phi = mse_matrix(&eff, &prec, &g, 0);
        assert!((phi - CMat::identity(2, 2)).norm() < 1e-14);
    }

    #[test]
    fn mse_matrix_scalar_perfect_inversion() {
        let eff = scalar_eff(1.0, 0.0);
        let prec = Precoder::new(vec![CMat::from_element(1, 1, Complex64::new(1.0, 0.0))]);
        let g = CMat::from_element(1, 1, Complex64::new(1.0, 0.0));
        let phi = mse_matrix(&eff, &prec, &g, 0);
        assert!(phi[(0, 0)].norm() < 1e-14);
    }

    #[test]
    fn mse_matrix_matches_symbol_monte_carlo() {
        let mut rng = seeded_rng(7, 0);
        let (k_users, nu, nb, n) = (2, 3, 4, 2);
        let eff = random_eff(&mut rng, k_users, nu, nb, 0.3);
        let prec = Precoder::new(vec![
            complex_gaussian_matrix(&mut rng, nb, n).scale(0.7),
            complex_gaussian_matrix(&mut rng, nb, n).scale(0.7),
        ]);
        let g = lmmse_equalizer(&eff, &prec, 0).unwrap();
        let analytic = mse_matrix(&eff, &prec, &g, 0);
        // Symbol-level Monte-Carlo: s ~ CN(0, I), n ~ CN(0, r_nc).
        let draws = 100_000;
        let mut acc = CMat::zeros(n, n);
        let f = prec.stacked();
        let noise_std = 0.3f64.sqrt();
        for _ in 0..draws {
            let s = CVec::from_fn(f.ncols(), |_, _| standard_complex_gaussian(&mut rng));
            let noise =
                CVec::from_fn(nu, |_, _| standard_complex_gaussian(&mut rng) * noise_std);
            let y = &eff.hc[0] * &f * &s + noise;
            let s_hat = &g * y;
            let s_k = s.rows(0, n).into_owned();
            let err = s_hat - s_k;
            acc += &err * err.adjoint();
        }
        acc /= Complex64::new(draws as f64, 0.0);
        let rel = (&acc - &analytic).norm() / analytic.norm();
        assert!(rel < 0.02, "Monte-Carlo deviation {rel}");
    }

    #[test]
    fn lmmse_scalar_half() {
        let eff = scalar_eff(1.0, 1.0);
        let prec = Precoder::new(vec![CMat::from_element(1, 1, Complex64::new(1.0, 0.0))]);
        let g = lmmse_equalizer(&eff, &prec, 0).unwrap();
        assert!((g[(0, 0)] - Complex64::new(0.5, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn lmmse_zero_noise_inverts_channel() {
        let mut rng = seeded_rng(3, 0);
        let n = 3;
        let eff = EffectiveChannels {
            hc: vec![complex_gaussian_matrix(&mut rng, n, n)],
            r_nc: CMat::identity(n, n).scale(1e-12),
        };
        let fmat = complex_gaussian_matrix(&mut rng, n, n);
        let prec = Precoder::new(vec![fmat.clone()]);
        let g = lmmse_equalizer(&eff, &prec, 0).unwrap();
        let hf = &eff.hc[0] * &fmat;
        let inv = hf.clone().lu().try_inverse().unwrap();
        assert!((g - inv).norm() < 1e-5);
    }

    #[test]
    fn lmmse_is_stationary() {
        let mut rng = seeded_rng(4, 0);
        let eff = random_eff(&mut rng, 2, 3, 5, 0.4);
        let prec = Precoder::new(vec![
            complex_gaussian_matrix(&mut rng, 5, 2).scale(0.8),
            complex_gaussian_matrix(&mut rng, 5, 2).scale(0.8),
        ]);
        let g = lmmse_equalizer(&eff, &prec, 0).unwrap();
        let base = mse_matrix(&eff, &prec, &g, 0).trace().re;
        let eps = 1e-6;
        for _ in 0..8 {
            let delta = complex_gaussian_matrix(&mut rng, 2, 3);
            let perturbed = &g + delta.scale(eps / delta.norm());
            let val = mse_matrix(&eff, &prec, &perturbed, 0).trace().re;
            assert!(
                val >= base - 1e-6 * base.abs().max(1e-12),
                "perturbation lowered the MSE trace: {val} < {base}"
            );
        }
    }

    #[test]
    fn wmmse_core_no_signal() {
        let n = 2;
        let x = CMat::zeros(n, n);
        let id = CMat::identity(n, n);
        let (y, w) = wmmse_core(&x, &id, &id, &id).unwrap();
        assert!(y.norm() < 1e-14);
        assert!((w - id).norm() < 1e-14);
    }

    #[test]
    fn wmmse_core_scalar_closed_form() {
        let xval = 1.7f64;
        let x = CMat::from_element(1, 1, Complex64::new(xval, 0.0));
        let id = CMat::identity(1, 1);
        let (y, w) = wmmse_core(&x, &id, &id, &id).unwrap();
        assert!((w[(0, 0)].re - (1.0 + xval * xval)).abs() < 1e-12);
        let surrogate = wmmse_surrogate_value(&x, &y, &w, &id, &id, &id).unwrap();
        // Surrogate at the optimum equals 1 - log(1 + x^2): the constant 1
        // plus the negative-log-det objective.
        let expected = 1.0 - (1.0 + xval * xval).ln();
        assert!((surrogate - expected).abs() < 1e-12);
    }

    #[test]
    fn wmmse_surrogate_offset_constant_across_x() {
        let mut rng = seeded_rng(9, 0);
        let n = 2;
        let phi_half = complex_gaussian_matrix(&mut rng, n, n);
        let phi = &phi_half * phi_half.adjoint() + CMat::identity(n, n);
        let c = complex_gaussian_matrix(&mut rng, n, n);
        let pi_half = complex_gaussian_matrix(&mut rng, n, n);
        let pi_inv = &pi_half * pi_half.adjoint() + CMat::identity(n, n).scale(0.1);
        let mut offsets = Vec::new();
        for _ in 0..10 {
            let x = complex_gaussian_matrix(&mut rng, n, n);
            let (y, w) = wmmse_core(&x, &pi_inv, &phi, &c).unwrap();
            let surrogate = wmmse_surrogate_value(&x, &y, &w, &pi_inv, &phi, &c).unwrap();
            offsets.push(surrogate - (-logdet_hpd(&w).unwrap()));
        }
        for pair in offsets.windows(2) {
            assert!(
                (pair[0] - pair[1]).abs() < 1e-8,
                "offset varies: {} vs {}",
                pair[0],
                pair[1]
            );
        }
    }

    fn quad_for(b: CMat, threshold: f64) -> RadarQuadratic {
        RadarQuadratic {
            b_matrix: b,
            threshold,
        }
    }

    #[test]
    fn sust_inactive_constraint_closed_form() {
        // GH = I, C = I: the mu = 0 solution is (1 + t/P)^{-1} I up to scale.
        let n = 3;
        let t_noise = 0.6;
        let p_max = 2.0;
        let eff = EffectiveChannels {
            hc: vec![CMat::identity(n, n)],
            r_nc: CMat::identity(n, n).scale(t_noise / n as f64),
        };
        let weights = MetricWeights::identity(n, 1, ObjectiveKind::Mse);
        let equalizers = vec![CMat::identity(n, n)];
        // A tiny threshold keeps the radar constraint inactive.
        let mut b = CMat::zeros(n, n);
        b[(0, 0)] = Complex64::new(1.0, 0.0);
        let quad = quad_for(b, 1e-12 * p_max);
        let (prec, state) =
            precoder_sust(&eff, &quad, &weights, &equalizers, None, p_max).unwrap();
        assert_eq!(state.mu, 0.0);
        assert!((prec.total_power() - p_max).abs() < 1e-9 * p_max);
        // Direction is the identity; off-diagonals vanish.
        let f = prec.stacked();
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    assert!(f[(i, j)].norm() < 1e-9);
                } else {
                    assert!((f[(i, j)] - f[(0, 0)]).norm() < 1e-9);
                }
            }
        }
        // Pre-rescale closed form: (1 + t/P)^{-1} on the diagonal.
        let po = build_precoder_objective(&eff, &weights, &equalizers, None).unwrap();
        let k0 = sust_base_system(&po, p_max);
        let rhs = vec(&po.linear[0]);
        let sol = k0.lu().solve(&CMat::from_column_slice(n * n, 1, rhs.as_slice())).unwrap();
        let expected = 1.0 / (1.0 + t_noise / p_max);
        assert!((sol[(0, 0)].re - expected).abs() < 1e-10);
    }

    #[test]
    fn sust_boundary_power_uses_principal_eigenvector() {
        let mut rng = seeded_rng(12, 0);
        let nb = 4;
        let v = CVec::from_fn(nb, |_, _| standard_complex_gaussian(&mut rng));
        let p_max = 1.5;
        let lam = v.norm_squared();
        let quad = quad_for(&v * v.adjoint(), lam * p_max);
        let eff = random_eff(&mut rng, 1, 2, nb, 0.1);
        let weights = MetricWeights::identity(2, 1, ObjectiveKind::Mse);
        let prec0 = Precoder::isotropic(nb, 2, 1, p_max);
        let g = lmmse_equalizer(&eff, &prec0, 0).unwrap();
        let (prec, _state) =
            precoder_sust(&eff, &quad, &weights, &[g], None, p_max).unwrap();
        let f = prec.stacked();
        assert!((f.norm_squared() - p_max).abs() < 1e-9 * p_max);
        let energy = quad.energy(&f);
        assert!(
            (energy / quad.threshold - 1.0).abs() < 1e-6,
            "radar constraint not tight at the power boundary: {energy:e}"
        );
    }

    #[test]
    fn sust_infeasible_reports_p_min() {
        let mut rng = seeded_rng(13, 0);
        let nb = 4;
        let v = CVec::from_fn(nb, |_, _| standard_complex_gaussian(&mut rng));
        let lam = v.norm_squared();
        let p_max = 1.0;
        let quad = quad_for(&v * v.adjoint(), lam * p_max * 3.0); // needs 3x the budget
        let eff = random_eff(&mut rng, 1, 2, nb, 0.1);
        let weights = MetricWeights::identity(2, 1, ObjectiveKind::Mse);
        let prec0 = Precoder::isotropic(nb, 2, 1, p_max);
        let g = lmmse_equalizer(&eff, &prec0, 0).unwrap();
        match precoder_sust(&eff, &quad, &weights, &[g], None, p_max) {
            Err(PrecoderError::Infeasible { p_min, .. }) => {
                assert!((p_min - 3.0 * p_max).abs() < 1e-6);
            }
            other => panic!("expected Infeasible, got {other:?}"),
        }
    }

    #[test]
    fn sust_active_constraint_met_and_power_full() {
        let mut rng = seeded_rng(14, 0);
        for trial in 0..20 {
            let nb = 4;
            let nu = 2;
            let n = 2;
            let p_max = 1.0;
            let eff = random_eff(&mut rng, 1, nu, nb, 0.05);
            let v = CVec::from_fn(nb, |_, _| standard_complex_gaussian(&mut rng));
            let lam = v.norm_squared();
            // Threshold at 60% of what full power on the eigvector achieves.
            let quad = quad_for(&v * v.adjoint(), 0.6 * lam * p_max);
            let weights = MetricWeights::identity(n, 1, ObjectiveKind::Mse);
            let prec0 = Precoder::isotropic(nb, n, 1, p_max);
            let g = lmmse_equalizer(&eff, &prec0, 0).unwrap();
            let (prec, state) =
                precoder_sust(&eff, &quad, &weights, &[g.clone()], None, p_max).unwrap();
            let f = prec.stacked();
            assert!(
                (f.norm_squared() - p_max).abs() < 1e-6 * p_max,
                "power violated on trial {trial}"
            );
            let slack = quad.energy(&f) / quad.threshold - 1.0;
            assert!(slack >= -1e-8, "radar constraint violated: slack {slack}");
            // Complementary slackness: active constraint when mu > 0.
            if state.mu > 1e-9 {
                assert!(slack.abs() < 1e-5, "slack {slack} with mu {}", state.mu);
            }
        }
    }

    #[test]
    fn sust_beats_random_search() {
        let mut rng = seeded_rng(15, 0);
        let (nb, nu, n) = (4, 2, 2);
        let p_max = 1.0;
        let eff = random_eff(&mut rng, 1, nu, nb, 0.05);
        let v = CVec::from_fn(nb, |_, _| standard_complex_gaussian(&mut rng));
        let quad = quad_for(&v * v.adjoint(), 0.5 * v.norm_squared() * p_max);
        let weights = MetricWeights::identity(n, 1, ObjectiveKind::Mse);
        let prec0 = Precoder::isotropic(nb, n, 1, p_max);
        let g = lmmse_equalizer(&eff, &prec0, 0).unwrap();
        let (prec, _) = precoder_sust(&eff, &quad, &weights, &[g.clone()], None, p_max).unwrap();
        let ours = weighted_mse_objective(&eff, &prec, &weights, &[g.clone()]);
        let mut best = f64::INFINITY;
        let mut found = 0;
        while found < 20_000 {
            let mut cand = Precoder::new(vec![complex_gaussian_matrix(&mut rng, nb, n)]);
            cand.rescale_to(p_max);
            if quad.energy(&cand.stacked()) >= quad.threshold {
                found += 1;
                let obj = weighted_mse_objective(&eff, &cand, &weights, &[g.clone()]);
                if obj < best {
                    best = obj;
                }
            }
        }
        assert!(
            ours <= best * (1.0 + 0.01),
            "solver {ours} worse than random search {best}"
        );
    }

    #[test]
    fn mumt_reduces_to_sust() {
        let mut rng = seeded_rng(16, 0);
        let (nb, nu, n) = (4, 2, 2);
        let p_max = 1.0;
        let eff = random_eff(&mut rng, 1, nu, nb, 0.05);
        let v = CVec::from_fn(nb, |_, _| standard_complex_gaussian(&mut rng));
        let quad = quad_for(&v * v.adjoint(), 0.5 * v.norm_squared() * p_max);
        let weights = MetricWeights::identity(n, 1, ObjectiveKind::Mse);
        let prec0 = Precoder::isotropic(nb, n, 1, p_max);
        let g = lmmse_equalizer(&eff, &prec0, 0).unwrap();
        let (p_sust, _) =
            precoder_sust(&eff, &quad, &weights, &[g.clone()], None, p_max).unwrap();
        let (p_mumt, state) = precoder_mumt(
            &eff,
            std::slice::from_ref(&quad),
            &weights,
            &[g.clone()],
            None,
            p_max,
            &p_sust,
        )
        .unwrap();
        assert!(state.trace.len() >= 1);
        let o_sust = weighted_mse_objective(&eff, &p_sust, &weights, &[g.clone()]);
        let o_mumt = weighted_mse_objective(&eff, &p_mumt, &weights, &[g.clone()]);
        assert!(
            (o_sust - o_mumt).abs() <= 1e-4 * o_sust.abs().max(1e-12),
            "objective gap: sust {o_sust} vs mumt {o_mumt}"
        );
        let slack = quad.energy(&p_mumt.stacked()) / quad.threshold - 1.0;
        assert!(slack >= -1e-8);
    }

    #[test]
    fn mumt_all_constraints_met() {
        let mut rng = seeded_rng(17, 0);
        let (nb, nu, n, k_users) = (6, 2, 2, 2);
        let p_max = 1.0;
        let eff = random_eff(&mut rng, k_users, nu, nb, 0.05);
        let mut quads = Vec::new();
        for _ in 0..2 {
            let v = CVec::from_fn(nb, |_, _| standard_complex_gaussian(&mut rng));
            quads.push(quad_for(&v * v.adjoint(), 0.25 * v.norm_squared() * p_max));
        }
        let weights = MetricWeights::identity(n, k_users, ObjectiveKind::Mse);
        let prec0 = Precoder::isotropic(nb, n, k_users, p_max);
        let gs: Vec<CMat> = (0..k_users)
            .map(|k| lmmse_equalizer(&eff, &prec0, k).unwrap())
            .collect();
        let (prec, state) =
            precoder_mumt(&eff, &quads, &weights, &gs, None, p_max, &prec0).unwrap();
        assert!((prec.total_power() - p_max).abs() < 1e-6 * p_max);
        for (l, q) in quads.iter().enumerate() {
            let slack = q.energy(&prec.stacked()) / q.threshold - 1.0;
            assert!(slack >= -1e-8, "constraint {l} violated: {slack}");
        }
        // MM trace is non-increasing.
        for pair in state.trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-9 * pair[0].abs());
        }
    }

    #[test]
    fn mumt_infeasible_start_detected() {
        let mut rng = seeded_rng(18, 0);
        let (nb, nu, n) = (4, 2, 2);
        let p_max = 1.0;
        let eff = random_eff(&mut rng, 1, nu, nb, 0.05);
        // Zero echo matrix: no precoder can meet the threshold.
        let quad = quad_for(CMat::zeros(nb, nb), 1.0);
        let weights = MetricWeights::identity(n, 1, ObjectiveKind::Mse);
        let prec0 = Precoder::isotropic(nb, n, 1, p_max);
        let g = lmmse_equalizer(&eff, &prec0, 0).unwrap();
        let out = precoder_mumt(
            &eff,
            std::slice::from_ref(&quad),
            &weights,
            &[g],
            None,
            p_max,
            &prec0,
        );
        assert!(out.is_err());
    }

    #[test]
    fn prop2_scaling_down_hurts() {
        let mut rng = seeded_rng(19, 0);
        for _ in 0..10 {
            let (nb, nu, n) = (4, 3, 2);
            let p_max = rng.gen_range(0.5..2.0);
            let eff = random_eff(&mut rng, 1, nu, nb, 0.2);
            let v = CVec::from_fn(nb, |_, _| standard_complex_gaussian(&mut rng));
            let quad = quad_for(&v * v.adjoint(), 0.4 * v.norm_squared() * p_max);
            let weights = MetricWeights::identity(n, 1, ObjectiveKind::Mse);
            let prec0 = Precoder::isotropic(nb, n, 1, p_max);
            let g = lmmse_equalizer(&eff, &prec0, 0).unwrap();
            let (prec, _) =
                precoder_sust(&eff, &quad, &weights, &[g], None, p_max).unwrap();
            let g_star = lmmse_equalizer(&eff, &prec, 0).unwrap();
            let obj = weighted_mse_objective(&eff, &prec, &weights, &[g_star]);
            let shrunk = prec.scaled((1.0 - 0.01f64).sqrt());
            let g_shrunk = lmmse_equalizer(&eff, &shrunk, 0).unwrap();
            let obj_shrunk = weighted_mse_objective(&eff, &shrunk, &weights, &[g_shrunk]);
            assert!(
                obj_shrunk > obj,
                "shrinking power should hurt: {obj_shrunk} <= {obj}"
            );
        }
    }

    #[test]
    fn wmmse_alternation_never_decreases_sum_rate() {
        let mut rng = seeded_rng(20, 0);
        for _ in 0..10 {
            let (nb, nu, n) = (4, 3, 2);
            let p_max = 1.0;
            let eff = random_eff(&mut rng, 1, nu, nb, 0.3);
            let weights = MetricWeights::identity(n, 1, ObjectiveKind::SumRate);
            let mut prec = Precoder::isotropic(nb, n, 1, p_max);
            let mut last = f64::INFINITY;
            for _ in 0..8 {
                let state = wmmse_state(&eff, &prec, &weights).unwrap();
                let (next, _) =
                    precoder_comm_only(&eff, &weights, &[], Some(&state), p_max).unwrap();
                prec = next;
                let obj = weighted_sum_rate_objective(&eff, &prec, &weights).unwrap();
                assert!(
                    obj <= last + 1e-9 * last.abs().max(1.0),
                    "sum rate decreased: {obj} after {last}"
                );
                last = obj;
            }
        }
    }
}
