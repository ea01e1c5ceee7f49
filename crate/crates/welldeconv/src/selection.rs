//! Model comparison across transition counts: information criteria, bridge
//! sampling for the marginal likelihood, and convergence diagnostics for
//! the chains the comparisons are computed from.

use crate::{Error, Result};
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub aic: f64,
    pub bic: f64,
    pub dic: f64,
    /// Effective parameter count entering the DIC.
    pub p_d: f64,
}

/// AIC and BIC from the maximum log likelihood over the retained draws;
/// DIC from the posterior mean deviance and the deviance at the posterior
/// mean. `k` counts sampled parameters (theta plus sigma_p), `n_obs` the
/// pressure, rate, and initial-pressure observations.
pub fn information_criteria(
    max_log_lik: f64,
    mean_deviance: f64,
    deviance_at_mean: f64,
    k: usize,
    n_obs: usize,
) -> InformationCriteria {
    let p_d = mean_deviance - deviance_at_mean;
    InformationCriteria {
        aic: 2.0 * k as f64 - 2.0 * max_log_lik,
        bic: k as f64 * (n_obs as f64).ln() - 2.0 * max_log_lik,
        dic: mean_deviance + p_d,
        p_d,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub log_marginal: f64,
    /// Monte Carlo standard error from batching the posterior draws.
    pub standard_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeConfig {
    pub n_reference: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub batches: usize,
    /// Multiplier on the moment-matched reference covariance; 1 for
    /// production, other values probe estimator robustness.
    pub reference_inflation: f64,
    pub seed: u64,
}

impl BridgeConfig {
    pub fn new(seed: u64) -> Self {
        BridgeConfig {
            n_reference: 4000,
            max_iterations: 1000,
            tolerance: 1e-10,
            batches: 10,
            reference_inflation: 1.0,
            seed,
        }
    }
}

struct GaussianReference {
    mean: DVector<f64>,
    chol: Cholesky<f64, nalgebra::Dyn>,
    log_norm: f64,
}

impl GaussianReference {
    fn fit(draws: &[&[f64]], inflation: f64) -> Result<Self> {
        let dim = draws[0].len();
        let n = draws.len() as f64;
        let mut mean = DVector::zeros(dim);
        for d in draws {
            mean += DVector::from_column_slice(d);
        }
        mean /= n;
        let mut cov = DMatrix::zeros(dim, dim);
        for d in draws {
            let c = DVector::from_column_slice(d) - &mean;
            cov += &c * c.transpose();
        }
        cov *= inflation / (n - 1.0);
        let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
            let min_eig = cov
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            Error::NotPositiveDefinite { min_eigenvalue: min_eig }
        })?;
        let logdet = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * logdet - 0.5 * dim as f64 * (2.0 * std::f64::consts::PI).ln();
        Ok(GaussianReference { mean, chol, log_norm })
    }

    fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = DVector::from_column_slice(x) - &self.mean;
        let w = self
            .chol
            .l()
            .solve_lower_triangular(&d)
            .expect("nonsingular Cholesky factor");
        self.log_norm - 0.5 * w.norm_squared()
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let dim = self.mean.len();
        let z = DVector::from_iterator(
            dim,
            (0..dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)),
        );
        (&self.mean + self.chol.l() * z).iter().cloned().collect()
    }
}

// Iterative Meng-Wong bridge estimate relative to the reference; `l1` are
// log(p*/q) at posterior draws, `l2` at reference draws. Returns the log
// normalizing constant of p*.
fn bridge_iterate(l1: &[f64], l2: &[f64], config: &BridgeConfig) -> Result<f64> {
    let n1 = l1.len() as f64;
    let n2 = l2.len() as f64;
    let s1 = n1 / (n1 + n2);
    let s2 = n2 / (n1 + n2);
    // Center on the median of l1 so the iteration works near unit scale.
    let mut sorted = l1.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite log ratios"));
    let lstar = sorted[sorted.len() / 2];

    let a: Vec<f64> = l1.iter().map(|v| v - lstar).collect();
    let b: Vec<f64> = l2.iter().map(|v| v - lstar).collect();
    let mut r = 1.0f64;
    for _ in 0..config.max_iterations {
        let num: f64 = b
            .iter()
            .map(|bi| 1.0 / (s1 + s2 * r * (-bi).exp()))
            .sum::<f64>()
            / n2;
        let den: f64 = a
            .iter()
            .map(|aj| (-aj).exp() / (s1 + s2 * r * (-aj).exp()))
            .sum::<f64>()
            / n1;
        let next = num / den;
        if !next.is_finite() || next <= 0.0 {
            return Err(Error::BridgeDiverged(format!(
                "iteration produced non-positive ratio {next}"
            )));
        }
        let rel = (next / r - 1.0).abs();
        r = next;
        if rel < config.tolerance {
            return Ok(r.ln() + lstar);
        }
    }
    Err(Error::BridgeDiverged(format!(
        "no convergence after {} iterations",
        config.max_iterations
    )))
}

/// Bridge-sampling estimate of the log marginal likelihood from retained
/// posterior draws, their (unnormalized) log posterior values, and a
/// callable log posterior for evaluating fresh reference draws.
pub fn log_marginal_likelihood<F>(
    draws: &[&[f64]],
    draw_log_posts: &[f64],
    log_post: F,
    config: &BridgeConfig,
) -> Result<Evidence>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if draws.is_empty() || draws.len() != draw_log_posts.len() {
        return Err(Error::invalid("need matching nonempty draws and log posterior values"));
    }
    let dim = draws[0].len();
    if draws.iter().any(|d| d.len() != dim) {
        return Err(Error::invalid("inconsistent draw dimensions"));
    }
    if draws.len() < 10 * config.batches.max(1) {
        return Err(Error::invalid(format!(
            "too few draws ({}) for a batched bridge estimate",
            draws.len()
        )));
    }
    let reference = GaussianReference::fit(draws, config.reference_inflation)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ref_draws: Vec<Vec<f64>> = (0..config.n_reference).map(|_| reference.draw(&mut rng)).collect();
    let l2: Vec<f64> = crate::par::map_slice(&ref_draws, |x| log_post(x) - reference.log_pdf(x));
    if l2.iter().any(|v| v.is_nan()) {
        return Err(Error::BridgeDiverged(
            "log posterior evaluated to NaN at a reference draw".into(),
        ));
    }
    let l1: Vec<f64> = draws
        .iter()
        .zip(draw_log_posts)
        .map(|(x, lp)| lp - reference.log_pdf(x))
        .collect();

    let log_marginal = bridge_iterate(&l1, &l2, config)?;

    // Batch both samples for a Monte Carlo standard error; batching the
    // reference draws too keeps their sampling noise in the estimate.
    let batches = config.batches.max(2);
    let per1 = draws.len() / batches;
    let per2 = l2.len() / batches;
    let mut estimates = Vec::with_capacity(batches);
    for i in 0..batches {
        let (lo1, lo2) = (i * per1, i * per2);
        let hi1 = if i + 1 == batches { l1.len() } else { lo1 + per1 };
        let hi2 = if i + 1 == batches { l2.len() } else { lo2 + per2 };
        estimates.push(bridge_iterate(&l1[lo1..hi1], &l2[lo2..hi2], config)?);
    }
    let mean = estimates.iter().sum::<f64>() / batches as f64;
    let var = estimates.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>()
        / (batches as f64 - 1.0);
    let standard_error = (var / batches as f64).sqrt();
    Ok(Evidence { log_marginal, standard_error })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// Split-R-hat; None when only one chain is available.
    pub rhat: Option<f64>,
    pub ess: f64,
    /// Chains with (near-)zero within-chain variance.
    pub degenerate: bool,
}

// Split each chain in half, discarding the middle element of odd-length
// chains.
fn split_chains(chains: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let half = c.len() / 2;
        out.push(c[..half].to_vec());
        out.push(c[c.len() - half..].to_vec());
    }
    out
}

fn mean_of(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn autocovariance(xs: &[f64], mean: f64, lag: usize) -> f64 {
    let n = xs.len();
    (0..n - lag)
        .map(|i| (xs[i] - mean) * (xs[i + lag] - mean))
        .sum::<f64>()
        / n as f64
}

/// Split-R-hat and effective sample size for one scalar parameter across
/// chains of equal length.
pub fn convergence(chains: &[Vec<f64>]) -> Result<Convergence> {
    if chains.is_empty() || chains.iter().any(|c| c.len() < 4) {
        return Err(Error::invalid("need chains of at least 4 draws"));
    }
    let len = chains[0].len();
    if chains.iter().any(|c| c.len() != len) {
        return Err(Error::invalid("chains must have equal length"));
    }
    let multi = chains.len() >= 2;

    let seqs = split_chains(chains);
    let n = seqs[0].len() as f64;
    let m = seqs.len() as f64;
    let means: Vec<f64> = seqs.iter().map(|s| mean_of(s)).collect();
    let grand = mean_of(&means);
    let b = n / (m - 1.0) * means.iter().map(|mu| (mu - grand) * (mu - grand)).sum::<f64>();
    let vars: Vec<f64> = seqs
        .iter()
        .zip(&means)
        .map(|(s, mu)| {
            s.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1.0)
        })
        .collect();
    let w = mean_of(&vars);
    let var_plus = (n - 1.0) / n * w + b / n;
    let degenerate = w <= 1e-300 * (1.0 + grand.abs());
    let rhat = if !multi {
        None
    } else if degenerate {
        // Constant chains: identical constants are trivially converged,
        // differing constants are maximally unconverged.
        Some(if b <= 1e-300 * (1.0 + grand.abs()) { 1.0 } else { f64::INFINITY })
    } else {
        Some((var_plus / w).sqrt())
    };

    // Geyer initial monotone positive sequence on the split chains.
    let ess = if degenerate {
        0.0
    } else {
        let max_lag = seqs[0].len() - 1;
        let mut rho = Vec::with_capacity(max_lag);
        for t in 1..=max_lag {
            let acov = seqs
                .iter()
                .zip(&means)
                .map(|(s, mu)| autocovariance(s, *mu, t))
                .sum::<f64>()
                / m;
            rho.push(1.0 - (w - acov) / var_plus);
        }
        let mut sum = 0.0;
        let mut prev_pair = f64::INFINITY;
        let mut t = 0;
        while t + 1 < rho.len() {
            let pair = rho[t] + rho[t + 1];
            if pair < 0.0 {
                break;
            }
            let pair = pair.min(prev_pair);
            prev_pair = pair;
            sum += pair;
            t += 2;
        }
        (m * n) / (1.0 + 2.0 * sum)
    };
    Ok(Convergence { rhat, ess, degenerate })
}

/// Per-dimension diagnostics for vector-valued chains.
pub fn convergence_all(chains: &[Vec<Vec<f64>>]) -> Result<Vec<Convergence>> {
    if chains.is_empty() || chains[0].is_empty() {
        return Err(Error::invalid("need nonempty chains"));
    }
    let dim = chains[0][0].len();
    (0..dim)
        .map(|j| {
            let scalar: Vec<Vec<f64>> = chains
                .iter()
                .map(|c| c.iter().map(|d| d[j]).collect())
                .collect();
            convergence(&scalar)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian_draws(rng: &mut ChaCha8Rng, n: usize, mean: &[f64], sd: &[f64]) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                mean.iter()
                    .zip(sd)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn criteria_formulas() {
        let ic = information_criteria(-100.0, 210.0, 204.0, 7, 50);
        assert!((ic.aic - (14.0 + 200.0)).abs() < 1e-12);
        assert!((ic.bic - (7.0 * 50f64.ln() + 200.0)).abs() < 1e-12);
        assert!((ic.p_d - 6.0).abs() < 1e-12);
        assert!((ic.dic - 216.0).abs() < 1e-12);
    }

    // Conjugate oracle: y_i ~ N(theta, sigma^2) with theta_k ~ N(mu0, tau^2)
    // independently per coordinate. The posterior is Gaussian and the
    // normalizing constant of the (sufficient-statistic) joint is analytic,
    // so the bridge estimate can be checked end to end with exact posterior
    // draws.
    struct ConjugateToy {
        y_bar: Vec<f64>,
        n_obs: f64,
        sigma: f64,
        mu0: f64,
        tau: f64,
        post_mean: Vec<f64>,
        post_sd: f64,
    }

    fn conjugate_toy(rng: &mut ChaCha8Rng, dim: usize) -> ConjugateToy {
        let (sigma, mu0, tau, n_obs) = (1.5, 0.5, 2.0, 20usize);
        let nf = n_obs as f64;
        let y_bar: Vec<f64> = (0..dim)
            .map(|_| {
                let truth = rng.gen_range(-2.0..2.0);
                (0..n_obs)
                    .map(|_| truth + sigma * rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .sum::<f64>()
                    / nf
            })
            .collect();
        let prec_post = nf / (sigma * sigma) + 1.0 / (tau * tau);
        let post_mean: Vec<f64> = y_bar
            .iter()
            .map(|yb| (nf * yb / (sigma * sigma) + mu0 / (tau * tau)) / prec_post)
            .collect();
        ConjugateToy {
            y_bar,
            n_obs: nf,
            sigma,
            mu0,
            tau,
            post_mean,
            post_sd: prec_post.sqrt().recip(),
        }
    }

    impl ConjugateToy {
        // Log joint in sufficient-statistic form: the theta-dependent part
        // of the likelihood plus the full Gaussian prior.
        fn log_post(&self, theta: &[f64]) -> f64 {
            let mut lp = 0.0;
            for (k, th) in theta.iter().enumerate() {
                let ss = self.n_obs * (self.y_bar[k] - th) * (self.y_bar[k] - th);
                lp += -0.5 * ss / (self.sigma * self.sigma)
                    - 0.5 * ((th - self.mu0) / self.tau).powi(2)
                    - self.tau.ln()
                    - 0.5 * (2.0 * std::f64::consts::PI).ln();
            }
            lp
        }

        // Analytic integral of exp(log_post): a product of 1-d Gaussian
        // integrals after completing the square.
        fn log_normalizer(&self) -> f64 {
            let prec = self.n_obs / (self.sigma * self.sigma) + 1.0 / (self.tau * self.tau);
            let mut total = 0.0;
            for yb in &self.y_bar {
                let lin = self.n_obs * yb / (self.sigma * self.sigma)
                    + self.mu0 / (self.tau * self.tau);
                let quad = self.n_obs * yb * yb / (self.sigma * self.sigma)
                    + self.mu0 * self.mu0 / (self.tau * self.tau);
                total += -self.tau.ln() - 0.5 * prec.ln()
                    - 0.5 * (quad - lin * lin / prec);
            }
            total
        }
    }

    #[test]
    fn bridge_matches_conjugate_evidence() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let dim = 3;
        let toy = conjugate_toy(&mut rng, dim);
        let draws: Vec<Vec<f64>> =
            gaussian_draws(&mut rng, 2000, &toy.post_mean, &vec![toy.post_sd; dim]);
        let refs: Vec<&[f64]> = draws.iter().map(|d| d.as_slice()).collect();
        let lps: Vec<f64> = refs.iter().map(|d| toy.log_post(d)).collect();
        let config = BridgeConfig::new(77);
        let ev = log_marginal_likelihood(&refs, &lps, |x| toy.log_post(x), &config).unwrap();
        let analytic = toy.log_normalizer();
        let se = ev.standard_error.max(1e-6);
        assert!(
            (ev.log_marginal - analytic).abs() < 3.0 * se,
            "{} vs {analytic} (se {se})",
            ev.log_marginal
        );
    }

    #[test]
    fn bridge_shift_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let draws = gaussian_draws(&mut rng, 1500, &[1.0, -0.5], &[0.7, 1.2]);
        let refs: Vec<&[f64]> = draws.iter().map(|d| d.as_slice()).collect();
        let lp = |x: &[f64]| {
            -0.5 * ((x[0] - 1.0) / 0.7).powi(2) - 0.5 * ((x[1] + 0.5) / 1.2).powi(2)
        };
        let c = 12.34;
        let lps: Vec<f64> = refs.iter().map(|d| lp(d)).collect();
        let lps_shift: Vec<f64> = lps.iter().map(|v| v + c).collect();
        let config = BridgeConfig::new(5);
        let base = log_marginal_likelihood(&refs, &lps, lp, &config).unwrap();
        let shifted =
            log_marginal_likelihood(&refs, &lps_shift, |x| lp(x) + c, &config).unwrap();
        assert!(
            (shifted.log_marginal - base.log_marginal - c).abs() < 1e-8,
            "{} vs {} + {c}",
            shifted.log_marginal,
            base.log_marginal
        );
    }

    #[test]
    fn bridge_robust_to_reference_inflation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let draws = gaussian_draws(&mut rng, 3000, &[0.0, 2.0, -1.0], &[1.0, 0.5, 2.0]);
        let refs: Vec<&[f64]> = draws.iter().map(|d| d.as_slice()).collect();
        let lp = |x: &[f64]| {
            -0.5 * x[0] * x[0] - 0.5 * ((x[1] - 2.0) / 0.5).powi(2)
                - 0.5 * ((x[2] + 1.0) / 2.0).powi(2)
        };
        let lps: Vec<f64> = refs.iter().map(|d| lp(d)).collect();
        let tight = log_marginal_likelihood(&refs, &lps, lp, &BridgeConfig::new(2)).unwrap();
        let mut wide_config = BridgeConfig::new(2);
        wide_config.reference_inflation = 4.0;
        let wide = log_marginal_likelihood(&refs, &lps, lp, &wide_config).unwrap();
        let analytic = 0.5f64.ln() + 2f64.ln() + 1.5 * (2.0 * std::f64::consts::PI).ln();
        let joint_se = (tight.standard_error.powi(2) + wide.standard_error.powi(2))
            .sqrt()
            .max(1e-4);
        assert!((tight.log_marginal - analytic).abs() < 3.0 * joint_se);
        assert!((wide.log_marginal - analytic).abs() < 4.0 * joint_se);
    }

    #[test]
    fn bridge_rejects_bad_inputs() {
        let draws = vec![vec![0.0, 1.0]; 30];
        let refs: Vec<&[f64]> = draws.iter().map(|d| d.as_slice()).collect();
        let lps = vec![0.0; 30];
        // Too few draws for batching.
        assert!(log_marginal_likelihood(&refs, &lps, |_| 0.0, &BridgeConfig::new(1)).is_err());
        // Degenerate draws: covariance is singular.
        let many = vec![vec![0.0, 1.0]; 200];
        let refs2: Vec<&[f64]> = many.iter().map(|d| d.as_slice()).collect();
        let lps2 = vec![0.0; 200];
        assert!(matches!(
            log_marginal_likelihood(&refs2, &lps2, |_| 0.0, &BridgeConfig::new(1)),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn rhat_near_one_for_identical_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                (0..2000)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        let c = convergence(&chains).unwrap();
        let rhat = c.rhat.unwrap();
        assert!((rhat - 1.0).abs() < 0.01, "rhat {rhat}");
        // Independent draws: ESS close to the total draw count.
        assert!(c.ess > 0.8 * 8000.0, "ess {}", c.ess);
        assert!(!c.degenerate);
    }

    #[test]
    fn rhat_flags_shifted_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(45);
        let mut chains: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                (0..500)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        for v in chains[2].iter_mut() {
            *v += 5.0;
        }
        let c = convergence(&chains).unwrap();
        assert!(c.rhat.unwrap() > 1.1, "rhat {:?}", c.rhat);
    }

    #[test]
    fn autocorrelated_chain_has_reduced_ess() {
        // AR(1) with rho = 0.95: ESS/n should approach (1-rho)/(1+rho).
        let mut rng = ChaCha8Rng::seed_from_u64(46);
        let rho = 0.95f64;
        let innovation = (1.0 - rho * rho).sqrt();
        let chains: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                let mut x = 0.0;
                (0..5000)
                    .map(|_| {
                        x = rho * x
                            + innovation * rng.sample::<f64, _>(rand_distr::StandardNormal);
                        x
                    })
                    .collect()
            })
            .collect();
        let c = convergence(&chains).unwrap();
        let n_total = 4.0 * 5000.0;
        let theory = n_total * (1.0 - rho) / (1.0 + rho);
        assert!(c.ess < 0.1 * n_total, "ess {}", c.ess);
        assert!(c.ess > 0.3 * theory && c.ess < 3.0 * theory, "ess {} vs {theory}", c.ess);
    }

    #[test]
    fn constant_chains_flagged_without_nans() {
        let chains = vec![vec![2.0; 100], vec![2.0; 100]];
        let c = convergence(&chains).unwrap();
        assert!(c.degenerate);
        assert_eq!(c.rhat, Some(1.0));
        assert_eq!(c.ess, 0.0);
        let differing = vec![vec![1.0; 100], vec![2.0; 100]];
        let c2 = convergence(&differing).unwrap();
        assert!(c2.degenerate);
        assert_eq!(c2.rhat, Some(f64::INFINITY));
    }

    #[test]
    fn single_chain_reports_ess_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let chain: Vec<f64> = (0..1000)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let c = convergence(&[chain]).unwrap();
        assert!(c.rhat.is_none());
        assert!(c.ess > 500.0);
    }

    #[test]
    fn convergence_all_per_dimension() {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        let chains: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|ci| {
                (0..800)
                    .map(|_| {
                        vec![
                            rng.sample::<f64, _>(rand_distr::StandardNormal),
                            rng.sample::<f64, _>(rand_distr::StandardNormal)
                                + if ci == 0 { 4.0 } else { 0.0 },
                        ]
                    })
                    .collect()
            })
            .collect();
        let all = convergence_all(&chains).unwrap();
        assert_eq!(all.len(), 2);
        assert!((all[0].rhat.unwrap() - 1.0).abs() < 0.02);
        assert!(all[1].rhat.unwrap() > 1.1);
    }
}
