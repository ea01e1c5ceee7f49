//! The Bayesian model: priors, the three Gaussian data likelihoods, the
//! closed-form conditional for beta = (p0~, q~), and the posterior with
//! beta integrated out analytically. The MCMC target is therefore only
//! (theta, sigma_p) — its dimension does not grow with the data.

use crate::convolution::{build_matrix, RateSchedule};
use crate::laplace::InversionScheme;
use crate::reservoir::ReservoirParams;
use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, Gamma, Normal, Uniform};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WellTestData {
    pub obs_times: Vec<f64>,
    pub obs_pressures: Vec<f64>,
    pub schedule: RateSchedule,
    /// The single direct observation of initial pressure.
    pub p0: f64,
}

impl WellTestData {
    pub fn new(
        obs_times: Vec<f64>,
        obs_pressures: Vec<f64>,
        schedule: RateSchedule,
        p0: f64,
    ) -> Result<Self> {
        if obs_times.is_empty() || obs_times.len() != obs_pressures.len() {
            return Err(Error::invalid(format!(
                "need matching nonempty time/pressure series, got {} and {}",
                obs_times.len(),
                obs_pressures.len()
            )));
        }
        if obs_times.iter().any(|t| !(*t > 0.0)) {
            return Err(Error::invalid("observation times must be positive"));
        }
        if obs_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("observation times must be strictly increasing"));
        }
        if obs_pressures.iter().any(|p| !p.is_finite()) || !p0.is_finite() {
            return Err(Error::invalid("non-finite pressure observation"));
        }
        Ok(WellTestData { obs_times, obs_pressures, schedule, p0 })
    }

    pub fn m(&self) -> usize {
        self.obs_times.len()
    }

    pub fn n_rates(&self) -> usize {
        self.schedule.periods()
    }

    /// Observation count entering the information criteria: pressures,
    /// rates, and the initial-pressure observation.
    pub fn n_obs(&self) -> usize {
        self.m() + self.n_rates() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_p: f64,
    pub sigma_q: f64,
    pub sigma_p0: f64,
}

pub const SIGMA_P_MAX: f64 = 5.0;
pub const SIGMA_Q_FRACTION: f64 = 0.05;
pub const SIGMA_P0_DEFAULT: f64 = 10.0;

impl NoiseModel {
    pub fn new(sigma_p: f64, sigma_q: f64, sigma_p0: f64) -> Result<Self> {
        if !(sigma_p > 0.0 && sigma_p <= SIGMA_P_MAX) {
            return Err(Error::invalid(format!("sigma_p must be in (0, 5], got {sigma_p}")));
        }
        if !(sigma_q > 0.0 && sigma_p0 > 0.0) {
            return Err(Error::invalid("noise scales must be positive"));
        }
        Ok(NoiseModel { sigma_p, sigma_q, sigma_p0 })
    }

    /// Fixed rate and initial-pressure scales derived from the data;
    /// sigma_q = 0.05 max|q|, sigma_p0 = 10.
    pub fn for_data(data: &WellTestData, sigma_p: f64) -> Result<Self> {
        let q_max = data
            .schedule
            .rates()
            .iter()
            .fold(0.0f64, |m, q| m.max(q.abs()));
        if q_max == 0.0 {
            return Err(Error::invalid("all rates are zero; sigma_q undefined"));
        }
        NoiseModel::new(sigma_p, SIGMA_Q_FRACTION * q_max, SIGMA_P0_DEFAULT)
    }

    pub fn with_sigma_p(&self, sigma_p: f64) -> Result<Self> {
        NoiseModel::new(sigma_p, self.sigma_q, self.sigma_p0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Prior {
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, rate: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Prior {
    pub fn log_pdf(&self, x: f64) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => {
                Normal::new(mean, sd).expect("valid normal").ln_pdf(x)
            }
            Prior::Gamma { shape, rate } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    Gamma::new(shape, rate).expect("valid gamma").ln_pdf(x)
                }
            }
            Prior::Uniform { lo, hi } => {
                if x < lo || x > hi {
                    f64::NEG_INFINITY
                } else {
                    Uniform::new(lo, hi).expect("valid uniform").ln_pdf(x)
                }
            }
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => {
                mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal)
            }
            Prior::Gamma { shape, rate } => rng.sample(
                rand_distr::Gamma::new(shape, 1.0 / rate).expect("valid gamma"),
            ),
            Prior::Uniform { lo, hi } => rng.gen_range(lo..hi),
        }
    }
}

/// One prior per theta component (transition priors replicate across
/// transitions) plus the sigma_p prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub p: Prior,
    pub t: Prior,
    pub w: Prior,
    pub r: Prior,
    pub m: Prior,
    pub eta: Prior,
    pub sigma_p: Prior,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            p: Prior::Normal { mean: 1.5, sd: 0.2 },
            t: Prior::Normal { mean: 2.0, sd: 0.2 },
            w: Prior::Gamma { shape: 1.0, rate: 0.2 },
            r: Prior::Normal { mean: 2.0, sd: 1.0 },
            m: Prior::Normal { mean: 0.0, sd: 1.0 },
            eta: Prior::Normal { mean: 0.0, sd: 1.0 },
            sigma_p: Prior::Uniform { lo: 0.0, hi: SIGMA_P_MAX },
        }
    }
}

impl PriorSpec {
    /// Broad uniform boxes for everything except W (which keeps its Gamma
    /// prior), for synthetic studies where the truth is not a composite
    /// reservoir.
    pub fn vague() -> Self {
        PriorSpec {
            p: Prior::Uniform { lo: -3.0, hi: 6.0 },
            t: Prior::Uniform { lo: -3.0, hi: 6.0 },
            w: Prior::Gamma { shape: 1.0, rate: 0.2 },
            r: Prior::Uniform { lo: -2.0, hi: 5.0 },
            m: Prior::Uniform { lo: -5.0, hi: 5.0 },
            eta: Prior::Uniform { lo: -5.0, hi: 5.0 },
            sigma_p: Prior::Uniform { lo: 0.0, hi: SIGMA_P_MAX },
        }
    }

    /// Joint log prior over theta, optionally including sigma_p.
    pub fn log_prior(&self, params: &ReservoirParams, sigma_p: Option<f64>) -> f64 {
        let mut lp = self.p.log_pdf(params.p) + self.t.log_pdf(params.t) + self.w.log_pdf(params.w);
        for tr in &params.transitions {
            lp += self.r.log_pdf(tr.r) + self.m.log_pdf(tr.m) + self.eta.log_pdf(tr.eta);
        }
        if let Some(s) = sigma_p {
            lp += self.sigma_p.log_pdf(s);
        }
        lp
    }

    pub fn sample_params<R: Rng>(&self, transitions: usize, rng: &mut R) -> ReservoirParams {
        ReservoirParams {
            p: self.p.sample(rng),
            t: self.t.sample(rng),
            w: self.w.sample(rng),
            transitions: (0..transitions)
                .map(|_| crate::reservoir::Transition {
                    r: self.r.sample(rng),
                    m: self.m.sample(rng),
                    eta: self.eta.sample(rng),
                })
                .collect(),
        }
    }
}

/// The Gaussian conditional posterior over beta = (p0~, q~): mean A^{-1} b,
/// covariance A^{-1}, held in factorized form.
#[derive(Debug, Clone)]
pub struct BetaGaussian {
    pub mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    /// 1/2 b' A^{-1} b, reused by the marginal density.
    quad: f64,
    logdet_a: f64,
}

impl BetaGaussian {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    pub fn logdet_precision(&self) -> f64 {
        self.logdet_a
    }

    /// Log density of the (untruncated) Gaussian at beta.
    pub fn log_pdf(&self, beta: &DVector<f64>) -> f64 {
        let d = beta - &self.mean;
        let quad = (self.chol.l().transpose() * &d).norm_squared();
        -0.5 * quad + 0.5 * self.logdet_a
            - 0.5 * self.dim() as f64 * (2.0 * std::f64::consts::PI).ln()
    }

    /// One draw from the untruncated Gaussian: mean + L^{-T} z for A = LL'.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_iterator(
            self.dim(),
            (0..self.dim()).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
        );
        let w = self
            .chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .expect("nonsingular Cholesky factor");
        &self.mean + w
    }
}

/// Assemble the precision matrix A and offset b of the Gaussian conditional
/// from the three likelihoods, and factorize.
pub fn conditional_beta(
    c: &DMatrix<f64>,
    noise: &NoiseModel,
    data: &WellTestData,
) -> Result<BetaGaussian> {
    let m = data.m();
    let n = data.n_rates();
    if c.nrows() != m || c.ncols() != n {
        return Err(Error::invalid("convolution matrix shape mismatch"));
    }
    let lam_p = noise.sigma_p.powi(-2);
    let lam_q = noise.sigma_q.powi(-2);
    let lam_p0 = noise.sigma_p0.powi(-2);

    let col_sums: DVector<f64> = c.row_sum_tr();
    let p = DVector::from_column_slice(&data.obs_pressures);
    let q = DVector::from_column_slice(data.schedule.rates());

    let mut a = DMatrix::zeros(n + 1, n + 1);
    a[(0, 0)] = m as f64 * lam_p + lam_p0;
    for j in 0..n {
        let v = -lam_p * col_sums[j];
        a[(0, j + 1)] = v;
        a[(j + 1, 0)] = v;
    }
    let ctc = c.transpose() * c;
    for j in 0..n {
        for k in 0..n {
            a[(j + 1, k + 1)] = lam_p * ctc[(j, k)] + if j == k { lam_q } else { 0.0 };
        }
    }

    let mut b = DVector::zeros(n + 1);
    b[0] = lam_p * p.sum() + lam_p0 * data.p0;
    let ctp = c.transpose() * &p;
    for j in 0..n {
        b[j + 1] = lam_q * q[j] - lam_p * ctp[j];
    }

    let chol = Cholesky::new(a.clone()).ok_or_else(|| {
        let min_eig = a
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        Error::NotPositiveDefinite { min_eigenvalue: min_eig }
    })?;
    let mean = chol.solve(&b);
    let quad = 0.5 * b.dot(&mean);
    let logdet_a = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    Ok(BetaGaussian { mean, chol, quad, logdet_a })
}

/// Draw beta respecting the nonnegativity support: rejection sampling with
/// a bounded budget, then coordinatewise truncation at zero. Returns the
/// draw and whether the fallback fired.
pub fn sample_beta<R: Rng>(gaussian: &BetaGaussian, rng: &mut R) -> (DVector<f64>, bool) {
    const REJECTION_CAP: usize = 50;
    for _ in 0..REJECTION_CAP {
        let draw = gaussian.draw(rng);
        if draw.iter().all(|v| *v >= 0.0) {
            return (draw, false);
        }
    }
    let mut draw = gaussian.draw(rng);
    for v in draw.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    (draw, true)
}

// Shared data-dependent quadratic: -1/2 (p' L_p p + q' L_q q + p0^2 l_p0).
fn data_quadratic(noise: &NoiseModel, data: &WellTestData) -> f64 {
    let lam_p = noise.sigma_p.powi(-2);
    let lam_q = noise.sigma_q.powi(-2);
    let lam_p0 = noise.sigma_p0.powi(-2);
    let pp: f64 = data.obs_pressures.iter().map(|v| v * v).sum();
    let qq: f64 = data.schedule.rates().iter().map(|v| v * v).sum();
    -0.5 * (lam_p * pp + lam_q * qq + lam_p0 * data.p0 * data.p0)
}

fn noise_log_norm(noise: &NoiseModel, data: &WellTestData) -> f64 {
    -(data.m() as f64) * noise.sigma_p.ln()
        - (data.n_rates() as f64) * noise.sigma_q.ln()
        - noise.sigma_p0.ln()
}

/// Log of the beta-marginalized likelihood P(x | theta, sigma), with all
/// normalization constants, computed from a precomputed conditional.
pub fn marginal_log_likelihood(
    gaussian: &BetaGaussian,
    noise: &NoiseModel,
    data: &WellTestData,
) -> f64 {
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    data_quadratic(noise, data) + gaussian.quad - 0.5 * gaussian.logdet_a
        + noise_log_norm(noise, data)
        - 0.5 * data.m() as f64 * ln2pi
}

/// Log joint likelihood P(x | beta, theta, sigma) at an explicit beta.
pub fn joint_log_likelihood(
    c: &DMatrix<f64>,
    beta: &DVector<f64>,
    noise: &NoiseModel,
    data: &WellTestData,
) -> Result<f64> {
    let n = data.n_rates();
    if beta.len() != n + 1 {
        return Err(Error::invalid("beta dimension mismatch"));
    }
    let p0 = beta[0];
    let q_tilde = beta.rows(1, n).clone_owned();
    let pred = p0 * DVector::from_element(data.m(), 1.0) - c * &q_tilde;
    let lam_p = noise.sigma_p.powi(-2);
    let lam_q = noise.sigma_q.powi(-2);
    let lam_p0 = noise.sigma_p0.powi(-2);
    let mut ll = 0.0;
    for (obs, model) in data.obs_pressures.iter().zip(pred.iter()) {
        ll -= 0.5 * lam_p * (obs - model).powi(2);
    }
    for (obs, model) in data.schedule.rates().iter().zip(q_tilde.iter()) {
        ll -= 0.5 * lam_q * (obs - model).powi(2);
    }
    ll -= 0.5 * lam_p0 * (data.p0 - p0).powi(2);
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    ll += noise_log_norm(noise, data) - 0.5 * data.n_obs() as f64 * ln2pi;
    Ok(ll)
}

/// Likelihood with beta pinned at the observed values (beta inference off):
/// only the pressure series carries information.
pub fn beta_fixed_log_likelihood(
    c: &DMatrix<f64>,
    noise: &NoiseModel,
    data: &WellTestData,
) -> Result<f64> {
    let pred = crate::convolution::predict_pressure(data.p0, c, data.schedule.rates())?;
    let lam_p = noise.sigma_p.powi(-2);
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let ss: f64 = data
        .obs_pressures
        .iter()
        .zip(&pred)
        .map(|(o, m)| (o - m) * (o - m))
        .sum();
    Ok(-0.5 * lam_p * ss
        - data.m() as f64 * noise.sigma_p.ln()
        - 0.5 * data.m() as f64 * ln2pi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SigmaMode {
    /// sigma_p is the last coordinate of the MCMC state.
    Sampled,
    Fixed { value: f64 },
}

/// The MCMC target density over x = (theta, [sigma_p]), with beta either
/// marginalized analytically or pinned at the observations.
#[derive(Clone)]
pub struct MarginalTarget<'a> {
    pub data: &'a WellTestData,
    pub priors: PriorSpec,
    pub scheme: InversionScheme,
    pub transitions: usize,
    pub sigma: SigmaMode,
    pub marginalize_beta: bool,
}

impl<'a> MarginalTarget<'a> {
    pub fn new(data: &'a WellTestData, priors: PriorSpec, transitions: usize) -> Self {
        MarginalTarget {
            data,
            priors,
            scheme: InversionScheme::default(),
            transitions,
            sigma: SigmaMode::Sampled,
            marginalize_beta: true,
        }
    }

    pub fn theta_dim(&self) -> usize {
        3 + 3 * self.transitions
    }

    /// Dimension of the MCMC state vector.
    pub fn dim(&self) -> usize {
        match self.sigma {
            SigmaMode::Sampled => self.theta_dim() + 1,
            SigmaMode::Fixed { .. } => self.theta_dim(),
        }
    }

    /// Decode a state vector; None when outside the prior support.
    pub fn decode(&self, x: &[f64]) -> Option<(ReservoirParams, f64)> {
        if x.len() != self.dim() {
            return None;
        }
        let sigma_p = match self.sigma {
            SigmaMode::Sampled => x[self.theta_dim()],
            SigmaMode::Fixed { value } => value,
        };
        if !(sigma_p > 0.0 && sigma_p <= SIGMA_P_MAX) {
            return None;
        }
        let params = ReservoirParams::from_vector(&x[..self.theta_dim()]).ok()?;
        if params.validate().is_err() {
            return None;
        }
        Some((params, sigma_p))
    }

    pub fn log_prior(&self, params: &ReservoirParams, sigma_p: f64) -> f64 {
        let sig = match self.sigma {
            SigmaMode::Sampled => Some(sigma_p),
            SigmaMode::Fixed { .. } => None,
        };
        self.priors.log_prior(params, sig)
    }

    pub fn log_likelihood(&self, params: &ReservoirParams, sigma_p: f64) -> Result<f64> {
        let noise = NoiseModel::for_data(self.data, sigma_p)?;
        let c = build_matrix(params, &self.scheme, &self.data.obs_times, &self.data.schedule)?;
        if self.marginalize_beta {
            let gaussian = conditional_beta(&c, &noise, self.data)?;
            Ok(marginal_log_likelihood(&gaussian, &noise, self.data))
        } else {
            beta_fixed_log_likelihood(&c, &noise, self.data)
        }
    }

    /// Conditional beta Gaussian at a given state, for augmenting draws.
    pub fn conditional(&self, params: &ReservoirParams, sigma_p: f64) -> Result<BetaGaussian> {
        let noise = NoiseModel::for_data(self.data, sigma_p)?;
        let c = build_matrix(params, &self.scheme, &self.data.obs_times, &self.data.schedule)?;
        conditional_beta(&c, &noise, self.data)
    }

    /// Log target density; -inf outside support or on numeric failure.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let Some((params, sigma_p)) = self.decode(x) else {
            return f64::NEG_INFINITY;
        };
        let lp = self.log_prior(&params, sigma_p);
        if lp == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        match self.log_likelihood(&params, sigma_p) {
            Ok(ll) => lp + ll,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Prior draw of a full state vector.
    pub fn draw_initial<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut x = self.priors.sample_params(self.transitions, rng).to_vector();
        if let SigmaMode::Sampled = self.sigma {
            x.push(self.priors.sigma_p.sample(rng));
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reservoir::Transition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_data() -> WellTestData {
        let schedule = RateSchedule::new(vec![0.0, 4.0, 9.0], vec![40.0, 15.0]).unwrap();
        WellTestData::new(
            vec![1.0, 5.0, 8.0],
            vec![990.0, 970.0, 965.0],
            schedule,
            1000.0,
        )
        .unwrap()
    }

    fn tiny_c() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 2, &[0.4, 0.0, 0.9, 0.3, 1.1, 0.7])
    }

    #[test]
    fn decoupled_means_when_c_zero() {
        let data = tiny_data();
        let noise = NoiseModel::new(3.0, 2.0, 10.0).unwrap();
        let c = DMatrix::zeros(3, 2);
        let g = conditional_beta(&c, &noise, &data).unwrap();
        let lam_p = 1.0 / 9.0;
        let lam_p0 = 0.01;
        let want_p0 = (lam_p * (990.0 + 970.0 + 965.0) + lam_p0 * 1000.0)
            / (3.0 * lam_p + lam_p0);
        assert!((g.mean[0] - want_p0).abs() < 1e-10);
        assert!((g.mean[1] - 40.0).abs() < 1e-10);
        assert!((g.mean[2] - 15.0).abs() < 1e-10);
    }

    #[test]
    fn huge_sigma_p_recovers_observed_beta() {
        let data = tiny_data();
        // sigma_p at its upper bound with tiny rate/initial-pressure noise:
        // the pressure term is negligible relative to the direct
        // observations of q and p0.
        let noise = NoiseModel::new(5.0, 1e-6, 1e-6).unwrap();
        let g = conditional_beta(&tiny_c(), &noise, &data).unwrap();
        assert!((g.mean[0] - 1000.0).abs() < 1e-3);
        assert!((g.mean[1] - 40.0).abs() < 1e-3);
        assert!((g.mean[2] - 15.0).abs() < 1e-3);
    }

    #[test]
    fn mean_matches_weighted_normal_equations() {
        // Oracle: the three likelihoods as one weighted least-squares
        // problem y ~ X beta with W = diag(precisions).
        let data = tiny_data();
        let noise = NoiseModel::new(2.5, 1.5, 10.0).unwrap();
        let c = tiny_c();
        let (m, n) = (3usize, 2usize);
        let rows = m + n + 1;
        let mut x = DMatrix::zeros(rows, n + 1);
        let mut y = DVector::zeros(rows);
        let mut w = DMatrix::zeros(rows, rows);
        for i in 0..m {
            x[(i, 0)] = 1.0;
            for j in 0..n {
                x[(i, j + 1)] = -c[(i, j)];
            }
            y[i] = data.obs_pressures[i];
            w[(i, i)] = noise.sigma_p.powi(-2);
        }
        for j in 0..n {
            x[(m + j, j + 1)] = 1.0;
            y[m + j] = data.schedule.rates()[j];
            w[(m + j, m + j)] = noise.sigma_q.powi(-2);
        }
        x[(m + n, 0)] = 1.0;
        y[m + n] = data.p0;
        w[(m + n, m + n)] = noise.sigma_p0.powi(-2);

        let xtw = x.transpose() * &w;
        let lhs = &xtw * &x;
        let rhs = &xtw * &y;
        let oracle = lhs.lu().solve(&rhs).unwrap();

        let g = conditional_beta(&c, &noise, &data).unwrap();
        for j in 0..=n {
            assert!((g.mean[j] - oracle[j]).abs() < 1e-8, "{:?} vs {oracle:?}", g.mean);
        }
    }

    #[test]
    fn precision_pd_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = tiny_data();
        for _ in 0..100 {
            let c = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-2.0..2.0));
            let noise = NoiseModel::new(
                rng.gen_range(0.2..5.0),
                rng.gen_range(0.2..4.0),
                rng.gen_range(1.0..20.0),
            )
            .unwrap();
            let g = conditional_beta(&c, &noise, &data).unwrap();
            assert!(g.logdet_a.is_finite());
        }
    }

    #[test]
    fn marginal_is_joint_minus_conditional() {
        // Definitional factorization: log joint - log conditional(beta)
        // must not depend on beta.
        let data = tiny_data();
        let noise = NoiseModel::new(2.0, 1.5, 10.0).unwrap();
        let c = tiny_c();
        let g = conditional_beta(&c, &noise, &data).unwrap();
        let marginal = marginal_log_likelihood(&g, &noise, &data);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let beta = DVector::from_fn(3, |i, _| {
                g.mean[i] * rng.gen_range(0.5..1.5) + rng.gen_range(-2.0..2.0)
            });
            let joint = joint_log_likelihood(&c, &beta, &noise, &data).unwrap();
            let cond = g.log_pdf(&beta);
            assert!(
                (joint - cond - marginal).abs() < 1e-8,
                "{} vs {marginal}",
                joint - cond
            );
        }
    }

    #[test]
    fn marginal_matches_grid_integration() {
        // Brute-force integration of the joint over the 3-d beta grid for 5
        // theta surrogates (5 different C matrices): pairwise differences of
        // the marginal must match the grid log-integrals to 1e-4.
        let data = tiny_data();
        let noise = NoiseModel::new(2.0, 1.5, 10.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut marginals = Vec::new();
        let mut grids = Vec::new();
        for _ in 0..5 {
            let c = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(0.0..1.5));
            let g = conditional_beta(&c, &noise, &data).unwrap();
            marginals.push(marginal_log_likelihood(&g, &noise, &data));

            let cov = g.covariance();
            let half = 7.0;
            let steps = 80usize;
            let axis = |k: usize| {
                let sd = cov[(k, k)].sqrt();
                let lo = g.mean[k] - half * sd;
                let width = 2.0 * half * sd;
                (lo, width / steps as f64)
            };
            let (lo0, h0) = axis(0);
            let (lo1, h1) = axis(1);
            let (lo2, h2) = axis(2);
            // log-sum-exp over the grid, midpoint rule.
            let mut max = f64::NEG_INFINITY;
            let mut vals = Vec::with_capacity(steps.pow(3));
            for i in 0..steps {
                for j in 0..steps {
                    for k in 0..steps {
                        let beta = DVector::from_column_slice(&[
                            lo0 + (i as f64 + 0.5) * h0,
                            lo1 + (j as f64 + 0.5) * h1,
                            lo2 + (k as f64 + 0.5) * h2,
                        ]);
                        let v = joint_log_likelihood(&c, &beta, &noise, &data).unwrap();
                        max = max.max(v);
                        vals.push(v);
                    }
                }
            }
            let sum: f64 = vals.iter().map(|v| (v - max).exp()).sum();
            grids.push(max + sum.ln() + (h0 * h1 * h2).ln());
        }
        for i in 0..5 {
            for j in (i + 1)..5 {
                let dm = marginals[i] - marginals[j];
                let dg = grids[i] - grids[j];
                assert!((dm - dg).abs() < 1e-4, "pair ({i},{j}): {dm} vs {dg}");
            }
        }
    }

    #[test]
    fn sigma_p_log_norm_term() {
        // With beta pinned and a perfect fit, the likelihood depends on
        // sigma_p only through -m ln sigma_p.
        let data = tiny_data();
        let c = tiny_c();
        let pred =
            crate::convolution::predict_pressure(data.p0, &c, data.schedule.rates()).unwrap();
        let perfect = WellTestData::new(
            data.obs_times.clone(),
            pred,
            data.schedule.clone(),
            data.p0,
        )
        .unwrap();
        let ll = |s: f64| {
            let noise = NoiseModel::for_data(&perfect, s).unwrap();
            beta_fixed_log_likelihood(&c, &noise, &perfect).unwrap()
        };
        let (s1, s2) = (1.0, 2.0);
        let slope = (ll(s2) - ll(s1)) / (s2.ln() - s1.ln());
        assert!((slope + perfect.m() as f64).abs() < 1e-9, "{slope}");
    }

    #[test]
    fn corrupting_pressures_decreases_marginal() {
        let data = tiny_data();
        let noise = NoiseModel::new(2.0, 1.5, 10.0).unwrap();
        let c = tiny_c();
        let g = conditional_beta(&c, &noise, &data).unwrap();
        let base = marginal_log_likelihood(&g, &noise, &data);
        let mut worse = data.clone();
        for (i, p) in worse.obs_pressures.iter_mut().enumerate() {
            *p += 30.0 * if i % 2 == 0 { 1.0 } else { -1.0 };
        }
        let g2 = conditional_beta(&c, &noise, &worse).unwrap();
        let corrupted = marginal_log_likelihood(&g2, &noise, &worse);
        assert!(corrupted < base, "{corrupted} vs {base}");
    }

    #[test]
    fn sample_beta_moments_and_support() {
        let data = tiny_data();
        let noise = NoiseModel::new(2.0, 1.5, 10.0).unwrap();
        let g = conditional_beta(&tiny_c(), &noise, &data).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 20_000;
        let mut mean = DVector::zeros(3);
        let mut fallbacks = 0;
        for _ in 0..n {
            let (beta, fell_back) = sample_beta(&g, &mut rng);
            assert!(beta.iter().all(|v| *v >= 0.0));
            fallbacks += fell_back as usize;
            mean += beta;
        }
        mean /= n as f64;
        // Means are far from zero so truncation is immaterial here.
        assert_eq!(fallbacks, 0);
        let cov = g.covariance();
        for j in 0..3 {
            let se = (cov[(j, j)] / n as f64).sqrt();
            assert!(
                (mean[j] - g.mean[j]).abs() < 3.0 * se.max(1e-6),
                "coord {j}: {} vs {}",
                mean[j],
                g.mean[j]
            );
        }
    }

    #[test]
    fn sample_beta_fallback_respects_support() {
        let data = tiny_data();
        let noise = NoiseModel::new(2.0, 1.5, 10.0).unwrap();
        let mut g = conditional_beta(&tiny_c(), &noise, &data).unwrap();
        g.mean[1] = -500.0;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (beta, fell_back) = sample_beta(&g, &mut rng);
        assert!(fell_back);
        assert!(beta.iter().all(|v| *v >= 0.0));
        assert_eq!(beta[1], 0.0);
    }

    #[test]
    fn sample_beta_deterministic_for_fixed_seed() {
        let data = tiny_data();
        let noise = NoiseModel::new(2.0, 1.5, 10.0).unwrap();
        let g = conditional_beta(&tiny_c(), &noise, &data).unwrap();
        let a = sample_beta(&g, &mut ChaCha8Rng::seed_from_u64(4)).0;
        let b = sample_beta(&g, &mut ChaCha8Rng::seed_from_u64(4)).0;
        assert_eq!(a, b);
    }

    #[test]
    fn prior_support_and_independence() {
        let spec = PriorSpec::default();
        let at = |w: f64| {
            let params = ReservoirParams { p: 1.5, t: 2.0, w, transitions: vec![] };
            spec.log_prior(&params, Some(1.0))
        };
        assert_eq!(at(-0.1), f64::NEG_INFINITY);
        assert!(at(5.0).is_finite());
        let params1 = ReservoirParams {
            p: 1.5,
            t: 2.0,
            w: 5.0,
            transitions: vec![Transition { r: 2.0, m: 0.3, eta: -0.2 }],
        };
        let mut params2 = params1.clone();
        params2.transitions.push(Transition { r: 1.0, m: -0.4, eta: 0.6 });
        let extra = spec.r.log_pdf(1.0) + spec.m.log_pdf(-0.4) + spec.eta.log_pdf(0.6);
        let d = spec.log_prior(&params2, Some(1.0)) - spec.log_prior(&params1, Some(1.0));
        assert!((d - extra).abs() < 1e-12);
        // Sum of component densities at chosen points.
        let direct = spec.p.log_pdf(1.5)
            + spec.t.log_pdf(2.0)
            + spec.w.log_pdf(5.0)
            + spec.r.log_pdf(2.0)
            + spec.m.log_pdf(0.3)
            + spec.eta.log_pdf(-0.2)
            + spec.sigma_p.log_pdf(1.0);
        let params = ReservoirParams {
            p: 1.5,
            t: 2.0,
            w: 5.0,
            transitions: vec![Transition { r: 2.0, m: 0.3, eta: -0.2 }],
        };
        assert!((spec.log_prior(&params, Some(1.0)) - direct).abs() < 1e-12);
    }

    #[test]
    fn target_dimension_independent_of_data_size() {
        let data = tiny_data();
        let target = MarginalTarget::new(&data, PriorSpec::default(), 2);
        assert_eq!(target.dim(), 10); // 3 + 3*2 + sigma_p
        let bigger = WellTestData::new(
            (1..=50).map(|i| i as f64).collect(),
            vec![1000.0; 50],
            RateSchedule::new(vec![0.0, 20.0, 40.0, 60.0], vec![1.0, 2.0, 3.0]).unwrap(),
            1000.0,
        )
        .unwrap();
        let target2 = MarginalTarget::new(&bigger, PriorSpec::default(), 2);
        assert_eq!(target2.dim(), 10);
    }

    #[test]
    fn target_density_finite_at_prior_mean_and_neg_inf_off_support() {
        let schedule = RateSchedule::new(vec![0.0, 50.0, 120.0], vec![30.0, 10.0]).unwrap();
        let times: Vec<f64> = (1..=12).map(|i| 10.0 * i as f64).collect();
        let pressures: Vec<f64> = times.iter().map(|t| 1000.0 - 0.3 * t).collect();
        let data = WellTestData::new(times, pressures, schedule, 1000.0).unwrap();
        let target = MarginalTarget::new(&data, PriorSpec::default(), 1);
        let x = vec![1.5, 2.0, 5.0, 2.0, 0.0, 0.0, 2.0];
        assert!(target.log_density(&x).is_finite());
        let mut bad = x.clone();
        bad[2] = -0.5;
        assert_eq!(target.log_density(&bad), f64::NEG_INFINITY);
        let mut bad_sigma = x;
        bad_sigma[6] = 6.0;
        assert_eq!(target.log_density(&bad_sigma), f64::NEG_INFINITY);
    }
}
