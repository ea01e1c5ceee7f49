//! Orchestration: data ingestion, synthetic-data generation, inference
//! across candidate transition counts, and all analysis artifacts (CSV
//! tables plus one JSON manifest per run).

use crate::channel::ChannelKernel;
use crate::convolution::{build_matrix, build_matrix_with, predict_pressure, RateSchedule};
use crate::laplace::{InversionMethod, InversionScheme};
use crate::posterior::{
    sample_beta, MarginalTarget, NoiseModel, PriorSpec, SigmaMode, WellTestData,
};
use crate::reservoir::ReservoirParams;
use crate::sampler::{run_dezs, SampleOutput, SamplerConfig};
use crate::selection::{
    convergence_all, information_criteria, log_marginal_likelihood, BridgeConfig, Convergence,
    InformationCriteria,
};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

fn default_transition_counts() -> Vec<usize> {
    vec![1]
}
fn default_chains() -> usize {
    3
}
fn default_iterations() -> usize {
    50_000
}
fn default_burn_in() -> usize {
    1_000
}
fn default_thinning() -> usize {
    50
}
fn default_archive_interval() -> usize {
    10
}
fn default_sigma_mode() -> SigmaMode {
    SigmaMode::Sampled
}
fn default_sigma_q_fraction() -> f64 {
    0.05
}
fn default_sigma_p0() -> f64 {
    10.0
}
fn default_true() -> bool {
    true
}
fn default_method() -> InversionMethod {
    InversionMethod::Stehfest
}
fn default_order() -> usize {
    12
}
fn default_tau_points() -> usize {
    200
}
fn default_residual_draws() -> usize {
    300
}
fn default_bridge_reference() -> usize {
    1000
}
fn default_output() -> PathBuf {
    PathBuf::from("run")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TauGrid {
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_transition_counts")]
    pub transition_counts: Vec<usize>,
    /// None selects the standard informative priors.
    #[serde(default)]
    pub priors: Option<PriorSpec>,
    /// Broad uniform priors (Gamma kept on W) for synthetic studies;
    /// ignored when explicit priors are given.
    #[serde(default)]
    pub vague_priors: bool,
    #[serde(default = "default_sigma_mode")]
    pub sigma_p: SigmaMode,
    #[serde(default = "default_sigma_q_fraction")]
    pub sigma_q_fraction: f64,
    #[serde(default = "default_sigma_p0")]
    pub sigma_p0: f64,
    #[serde(default = "default_true")]
    pub beta_inference: bool,
    /// Fit transition counts in increasing order and seed part of each
    /// model's chains from the next-simpler model's MAP extended with a
    /// neutral transition.
    #[serde(default = "default_true")]
    pub warm_start: bool,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
    #[serde(default = "default_archive_interval")]
    pub archive_interval: usize,
    /// Mandatory for `run`; carried as Option so config files may omit it
    /// and supply it on the command line.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_method")]
    pub inversion_method: InversionMethod,
    #[serde(default = "default_order")]
    pub inversion_order: usize,
    /// None derives the grid from the data window.
    #[serde(default)]
    pub tau_grid: Option<TauGrid>,
    #[serde(default = "default_tau_points")]
    pub tau_points: usize,
    /// Retained-draw subsample size for residual and beta artifacts.
    #[serde(default = "default_residual_draws")]
    pub residual_draws: usize,
    #[serde(default = "default_bridge_reference")]
    pub bridge_reference: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let config: RunConfig = serde_json::from_str(&text)?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.transition_counts.is_empty() {
            return Err(Error::invalid("at least one transition count required"));
        }
        if self.transition_counts.iter().any(|k| *k == 0) {
            return Err(Error::invalid("transition counts must be at least 1"));
        }
        if self.seed.is_none() {
            return Err(Error::invalid("seed is mandatory"));
        }
        if self.iterations <= self.burn_in {
            return Err(Error::invalid(format!(
                "iterations ({}) must exceed burn-in ({})",
                self.iterations, self.burn_in
            )));
        }
        if self.thinning == 0 {
            return Err(Error::invalid("thinning must be at least 1"));
        }
        if let SigmaMode::Fixed { value } = self.sigma_p {
            if !(value > 0.0) {
                return Err(Error::invalid("fixed sigma_p must be positive"));
            }
        }
        self.scheme()?;
        Ok(())
    }

    pub fn scheme(&self) -> Result<InversionScheme> {
        match self.inversion_method {
            InversionMethod::Stehfest => InversionScheme::stehfest(self.inversion_order),
            InversionMethod::FixedTalbot => InversionScheme::fixed_talbot(self.inversion_order),
        }
    }

    pub fn prior_spec(&self) -> PriorSpec {
        match (&self.priors, self.vague_priors) {
            (Some(spec), _) => *spec,
            (None, true) => PriorSpec::vague(),
            (None, false) => PriorSpec::default(),
        }
    }

    /// Tau grid: 200 points spanning [ln(min spacing)/2, ln(2 duration)]
    /// unless overridden, extending past the data window for extrapolation.
    pub fn tau_grid_for(&self, data: &WellTestData) -> Vec<f64> {
        let (lo, hi, n) = match &self.tau_grid {
            Some(g) => (g.min, g.max, g.points.max(2)),
            None => {
                let min_dt = data
                    .obs_times
                    .windows(2)
                    .map(|w| w[1] - w[0])
                    .fold(f64::INFINITY, f64::min)
                    .min(data.obs_times[0]);
                let duration = data
                    .obs_times
                    .last()
                    .copied()
                    .unwrap_or(1.0)
                    .max(data.schedule.end());
                (min_dt.ln() / 2.0, (2.0 * duration).ln(), self.tau_points.max(2))
            }
        };
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_field(path: &Path, line: usize, name: &str, raw: &str) -> Result<f64> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| parse_error(path, line, format!("invalid {name} value {raw:?}")))
}

/// Load a dataset from a `time,pressure` CSV, a `start,end,rate` CSV, and
/// the directly observed initial pressure.
pub fn load_data(pressure_path: &Path, rate_path: &Path, p0: f64) -> Result<WellTestData> {
    let mut times = Vec::new();
    let mut pressures = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(pressure_path)
        .map_err(|e| parse_error(pressure_path, 1, e.to_string()))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| parse_error(pressure_path, 1, e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["time", "pressure"] {
            return Err(parse_error(pressure_path, 1, "expected header `time,pressure`"));
        }
    }
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_error(pressure_path, line, e.to_string()))?;
        if record.len() != 2 {
            return Err(parse_error(pressure_path, line, "expected 2 columns"));
        }
        let t = parse_field(pressure_path, line, "time", &record[0])?;
        let p = parse_field(pressure_path, line, "pressure", &record[1])?;
        if !(t.is_finite() && p.is_finite()) {
            return Err(parse_error(pressure_path, line, "non-finite value"));
        }
        if let Some(prev) = times.last() {
            if t <= *prev {
                return Err(parse_error(
                    pressure_path,
                    line,
                    format!("time {t} does not increase past {prev}"),
                ));
            }
        }
        times.push(t);
        pressures.push(p);
    }

    let mut breakpoints: Vec<f64> = Vec::new();
    let mut rates = Vec::new();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(rate_path)
        .map_err(|e| parse_error(rate_path, 1, e.to_string()))?;
    {
        let headers = reader
            .headers()
            .map_err(|e| parse_error(rate_path, 1, e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["start", "end", "rate"] {
            return Err(parse_error(rate_path, 1, "expected header `start,end,rate`"));
        }
    }
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| parse_error(rate_path, line, e.to_string()))?;
        if record.len() != 3 {
            return Err(parse_error(rate_path, line, "expected 3 columns"));
        }
        let start = parse_field(rate_path, line, "start", &record[0])?;
        let end = parse_field(rate_path, line, "end", &record[1])?;
        let rate = parse_field(rate_path, line, "rate", &record[2])?;
        if !(start.is_finite() && end.is_finite() && rate.is_finite()) {
            return Err(parse_error(rate_path, line, "non-finite value"));
        }
        if end <= start {
            return Err(parse_error(rate_path, line, "interval end must exceed start"));
        }
        match breakpoints.last() {
            None => breakpoints.push(start),
            Some(prev_end) if *prev_end == start => {}
            Some(prev_end) => {
                return Err(parse_error(
                    rate_path,
                    line,
                    format!("interval starts at {start}, previous ended at {prev_end}"),
                ));
            }
        }
        breakpoints.push(end);
        rates.push(rate);
    }
    if rates.is_empty() {
        return Err(parse_error(rate_path, 2, "no rate intervals"));
    }
    let schedule = RateSchedule::new(breakpoints, rates)?;
    WellTestData::new(times, pressures, schedule, p0)
}

/// Write a dataset back to the same CSV formats `load_data` reads.
pub fn write_data(dir: &Path, data: &WellTestData) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let pressure_path = dir.join("pressure.csv");
    let mut f = fs::File::create(&pressure_path)?;
    writeln!(f, "time,pressure")?;
    for (t, p) in data.obs_times.iter().zip(&data.obs_pressures) {
        writeln!(f, "{t},{p}")?;
    }
    let rate_path = dir.join("rates.csv");
    let mut f = fs::File::create(&rate_path)?;
    writeln!(f, "start,end,rate")?;
    let breaks = data.schedule.breakpoints();
    for (j, q) in data.schedule.rates().iter().enumerate() {
        writeln!(f, "{},{},{q}", breaks[j], breaks[j + 1])?;
    }
    Ok((pressure_path, rate_path))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SyntheticKind {
    Channel { d1: f64, d2: f64, eta: f64, amplitude: f64, d_well: f64 },
    Composite { params: ReservoirParams },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub kind: SyntheticKind,
    pub schedule: RateSchedule,
    pub obs_times: Vec<f64>,
    pub p0: f64,
    pub sigma_p: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub kind: SyntheticKind,
    pub noiseless_pressures: Vec<f64>,
    pub sigma_p: f64,
    pub seed: u64,
}

/// The synthetic channel design: a 320 h test with three production
/// periods, 272 evenly spaced pressure observations, and sigma_p = 5 psi
/// additive noise on a known channel kernel.
pub fn default_channel_config(seed: u64) -> SyntheticConfig {
    let n = 272;
    SyntheticConfig {
        kind: SyntheticKind::Channel {
            d1: 2.0,
            d2: 2.0,
            eta: 1.0,
            amplitude: 0.05,
            d_well: 0.002,
        },
        schedule: RateSchedule::new(vec![0.0, 100.0, 220.0, 320.0], vec![50.0, 25.0, 40.0])
            .expect("valid default schedule"),
        obs_times: (1..=n).map(|i| 320.0 * i as f64 / n as f64).collect(),
        p0: 5000.0,
        sigma_p: 5.0,
        seed,
    }
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<(WellTestData, SyntheticTruth)> {
    if config.sigma_p < 0.0 {
        return Err(Error::invalid("noise level must be nonnegative"));
    }
    let c = match &config.kind {
        SyntheticKind::Channel { d1, d2, eta, amplitude, d_well } => {
            let kernel = ChannelKernel::new(*d1, *d2, *eta, *amplitude, *d_well)?;
            build_matrix_with(|t| kernel.phi(t), &config.obs_times, &config.schedule)?
        }
        SyntheticKind::Composite { params } => {
            params.validate()?;
            let scheme = InversionScheme::default();
            build_matrix(params, &scheme, &config.obs_times, &config.schedule)?
        }
    };
    let noiseless = predict_pressure(config.p0, &c, config.schedule.rates())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let observed: Vec<f64> = noiseless
        .iter()
        .map(|p| p + config.sigma_p * rng.sample::<f64, _>(rand_distr::StandardNormal))
        .collect();
    let data = WellTestData::new(
        config.obs_times.clone(),
        observed,
        config.schedule.clone(),
        config.p0,
    )?;
    let truth = SyntheticTruth {
        kind: config.kind.clone(),
        noiseless_pressures: noiseless,
        sigma_p: config.sigma_p,
        seed: config.seed,
    };
    Ok((data, truth))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelScore {
    pub transitions: usize,
    pub max_log_lik: f64,
    pub criteria: InformationCriteria,
    pub log_marginal: Option<f64>,
    pub evidence_se: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelReport {
    pub transitions: usize,
    pub retained_draws: usize,
    pub accept_rate: f64,
    pub nan_rejects: usize,
    pub rhat_max: Option<f64>,
    pub ess_min: f64,
    pub beta_truncation_fallbacks: usize,
    pub score: ModelScore,
    pub map_state: Vec<f64>,
    pub warnings: Vec<String>,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub models: Vec<ModelReport>,
    /// False when any parameter's split-R-hat exceeds 1.1.
    pub converged: bool,
    pub output_dir: PathBuf,
}

fn parameter_names(transitions: usize, sigma_sampled: bool) -> Vec<String> {
    let mut names = vec!["P".to_string(), "T".to_string(), "W".to_string()];
    for i in 1..=transitions {
        names.push(format!("R{i}"));
        names.push(format!("M{i}"));
        names.push(format!("ETA{i}"));
    }
    if sigma_sampled {
        names.push("sigma_p".to_string());
    }
    names
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

struct SummaryStats {
    mean: f64,
    min: f64,
    max: f64,
    lo95: f64,
    hi95: f64,
    lo99: f64,
    hi99: f64,
}

fn summarize(values: &mut Vec<f64>) -> SummaryStats {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite summaries"));
    SummaryStats {
        mean: values.iter().sum::<f64>() / values.len() as f64,
        min: values[0],
        max: *values.last().expect("nonempty"),
        lo95: percentile(values, 0.025),
        hi95: percentile(values, 0.975),
        lo99: percentile(values, 0.005),
        hi99: percentile(values, 0.995),
    }
}

// Seed for model k, decorrelated from the base seed.
fn model_seed(base: u64, transitions: usize) -> u64 {
    base.wrapping_add((transitions as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn write_draws_csv(
    path: &Path,
    output: &SampleOutput,
    names: &[String],
    thinning: usize,
    burn_in: usize,
) -> Result<()> {
    let mut f = fs::File::create(path)?;
    write!(f, "chain,iteration")?;
    for name in names {
        write!(f, ",{name}")?;
    }
    writeln!(f, ",log_posterior")?;
    for (ci, chain) in output.chains.iter().enumerate() {
        for (di, draw) in chain.iter().enumerate() {
            let iteration = burn_in + (di + 1) * thinning;
            write!(f, "{ci},{iteration}")?;
            for v in draw {
                write!(f, ",{v}")?;
            }
            writeln!(f, ",{}", output.log_densities[ci][di])?;
        }
    }
    Ok(())
}

/// Extend a simpler model's state with neutral transitions (M = eta = 0
/// leaves the response unchanged), jittering the copied coordinates so
/// warm-started chains stay distinct.
fn extend_state(
    base: &[f64],
    from: usize,
    to: usize,
    sigma_sampled: bool,
    priors: &PriorSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let theta_prev = 3 + 3 * from;
    let mut state = Vec::with_capacity(3 + 3 * to + sigma_sampled as usize);
    for &v in &base[..theta_prev] {
        state.push(v + 0.01 * rng.sample::<f64, _>(StandardNormal));
    }
    for _ in from..to {
        state.push(priors.r.sample(rng));
        state.push(0.05 * rng.sample::<f64, _>(StandardNormal));
        state.push(0.05 * rng.sample::<f64, _>(StandardNormal));
    }
    if sigma_sampled {
        state.push(base[theta_prev].clamp(1e-3, crate::posterior::SIGMA_P_MAX - 1e-3));
    }
    state
}

fn run_model(
    config: &RunConfig,
    data: &WellTestData,
    truth: Option<&SyntheticTruth>,
    transitions: usize,
    warm: Option<(usize, &[f64])>,
) -> Result<ModelReport> {
    let started = std::time::Instant::now();
    let seed = model_seed(config.seed.expect("validated seed"), transitions);
    let mut warnings: Vec<String> = Vec::new();

    let mut target = MarginalTarget::new(data, config.prior_spec(), transitions);
    target.scheme = config.scheme()?;
    target.sigma = config.sigma_p;
    target.marginalize_beta = config.beta_inference;
    let sigma_sampled = matches!(config.sigma_p, SigmaMode::Sampled);
    let names = parameter_names(transitions, sigma_sampled);
    let dim = target.dim();

    let mut sampler_config =
        SamplerConfig::new(config.iterations, config.burn_in, config.thinning, seed)?;
    sampler_config.chains = config.chains;
    sampler_config.archive_interval = config.archive_interval;

    log::info!("model with {transitions} transition(s): sampling {dim}-d target");
    let warm_base: Option<(usize, Vec<f64>)> = warm
        .filter(|(prev, _)| *prev < transitions)
        .map(|(prev, state)| (prev, state.to_vec()));
    let output = run_dezs(
        |x| target.log_density(x),
        |rng| {
            if let Some((prev, base)) = &warm_base {
                if rng.gen_bool(0.5) {
                    return extend_state(
                        base,
                        *prev,
                        transitions,
                        sigma_sampled,
                        &target.priors,
                        rng,
                    );
                }
            }
            target.draw_initial(rng)
        },
        dim,
        &sampler_config,
    )?;
    log::info!(
        "model {transitions}: acceptance {:.3}, {} NaN rejects",
        output.accept_rate,
        output.nan_rejects
    );

    let model_dir = config.output_dir.join(format!("model_{transitions}"));
    fs::create_dir_all(&model_dir)?;
    write_draws_csv(
        &model_dir.join("draws.csv"),
        &output,
        &names,
        config.thinning,
        config.burn_in,
    )?;

    let flat: Vec<&[f64]> = output
        .chains
        .iter()
        .flat_map(|c| c.iter().map(|d| d.as_slice()))
        .collect();
    let flat_logpost: Vec<f64> = output.log_densities.iter().flatten().cloned().collect();
    if flat.is_empty() {
        return Err(Error::invalid("no draws retained; increase iterations"));
    }

    // Convergence across all sampled parameters.
    let diagnostics: Vec<Convergence> = convergence_all(&output.chains)?;
    let rhat_max = diagnostics
        .iter()
        .filter_map(|c| c.rhat)
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))));
    let ess_min = diagnostics.iter().map(|c| c.ess).fold(f64::INFINITY, f64::min);
    {
        let mut f = fs::File::create(model_dir.join("convergence.csv"))?;
        writeln!(f, "parameter,rhat,ess,degenerate")?;
        for (name, c) in names.iter().zip(&diagnostics) {
            let rhat = c.rhat.map_or(String::new(), |r| format!("{r}"));
            writeln!(f, "{name},{rhat},{},{}", c.ess, c.degenerate)?;
        }
    }

    // MAP = retained draw with the highest stored log posterior.
    let map_idx = (0..flat.len())
        .max_by(|a, b| {
            flat_logpost[*a]
                .partial_cmp(&flat_logpost[*b])
                .expect("finite retained log posteriors")
        })
        .expect("nonempty draws");
    let map_state: Vec<f64> = flat[map_idx].to_vec();

    // Response-curve fan: z(tau) for every retained draw, MAP flagged.
    let tau_grid = config.tau_grid_for(data);
    let scheme = config.scheme()?;
    {
        let curves: Vec<Vec<f64>> = crate::par::map_slice(&flat, |draw| {
            let params = ReservoirParams::from_vector(&draw[..target.theta_dim()])
                .expect("retained draw decodes");
            tau_grid
                .iter()
                .map(|&tau| params.z_transform(tau, &scheme).unwrap_or(f64::NAN))
                .collect()
        });
        let mut f = fs::File::create(model_dir.join("response_fan.csv"))?;
        writeln!(f, "draw,tau,z,is_map")?;
        for (di, curve) in curves.iter().enumerate() {
            let is_map = (di == map_idx) as u8;
            for (tau, z) in tau_grid.iter().zip(curve) {
                writeln!(f, "{di},{tau},{z},{is_map}")?;
            }
        }
    }

    // Scheme cross-check at the posterior mean: Stehfest vs fixed Talbot on
    // a few grid times; >0.5% disagreement is surfaced as a warning.
    let mean_state: Vec<f64> = (0..dim)
        .map(|j| flat.iter().map(|d| d[j]).sum::<f64>() / flat.len() as f64)
        .collect();
    if let Some((mean_params, _)) = target.decode(&mean_state) {
        let talbot = InversionScheme::fixed_talbot(32)?;
        let mut worst: f64 = 0.0;
        for idx in [0, tau_grid.len() / 4, tau_grid.len() / 2, 3 * tau_grid.len() / 4] {
            let t = tau_grid[idx].exp();
            if let (Ok(a), Ok(b)) = (
                mean_params.response_g(t, &scheme),
                mean_params.response_g(t, &talbot),
            ) {
                if b != 0.0 {
                    worst = worst.max(((a - b) / b).abs());
                }
            }
        }
        if worst > 0.005 {
            warnings.push(format!(
                "inversion schemes disagree by {:.2}% at the posterior mean",
                100.0 * worst
            ));
        }
    }

    // Residuals and beta summaries from an evenly spaced subsample.
    let stride = (flat.len() / config.residual_draws.max(1)).max(1);
    let subsample: Vec<usize> = (0..flat.len()).step_by(stride).collect();
    let noise_for = |sigma_p: f64| NoiseModel::for_data(data, sigma_p);
    let mut beta_rng = ChaCha8Rng::seed_from_u64(seed);
    beta_rng.set_stream(0xBE7A);
    let mut predictions: Vec<Vec<f64>> = Vec::with_capacity(subsample.len());
    let mut betas: Vec<Vec<f64>> = Vec::with_capacity(subsample.len());
    let mut beta_fallbacks = 0usize;
    for &di in &subsample {
        let (params, sigma_p) = target
            .decode(flat[di])
            .ok_or_else(|| Error::numeric("retained draw outside support"))?;
        let c = build_matrix(&params, &scheme, &data.obs_times, &data.schedule)?;
        let (p0_tilde, q_tilde) = if config.beta_inference {
            let gaussian = crate::posterior::conditional_beta(&c, &noise_for(sigma_p)?, data)?;
            let (beta, fell_back) = sample_beta(&gaussian, &mut beta_rng);
            beta_fallbacks += fell_back as usize;
            let q: Vec<f64> = beta.iter().skip(1).cloned().collect();
            betas.push(beta.iter().cloned().collect());
            (beta[0], q)
        } else {
            (data.p0, data.schedule.rates().to_vec())
        };
        predictions.push(predict_pressure(p0_tilde, &c, &q_tilde)?);
    }
    if beta_fallbacks > 0 {
        warnings.push(format!(
            "beta rejection sampling fell back to truncation {beta_fallbacks} time(s)"
        ));
    }
    {
        let mut f = fs::File::create(model_dir.join("prediction_samples.csv"))?;
        writeln!(f, "draw,time,prediction")?;
        for (si, &di) in subsample.iter().enumerate() {
            for (t, p) in data.obs_times.iter().zip(&predictions[si]) {
                writeln!(f, "{di},{t},{p}")?;
            }
        }
    }
    {
        let m = data.m();
        let post_mean: Vec<f64> = (0..m)
            .map(|i| predictions.iter().map(|p| p[i]).sum::<f64>() / predictions.len() as f64)
            .collect();
        let mut f = fs::File::create(model_dir.join("residuals.csv"))?;
        writeln!(
            f,
            "time,observed,posterior_mean_prediction,residual_observed,truth,residual_truth"
        )?;
        for i in 0..m {
            let t = data.obs_times[i];
            let obs = data.obs_pressures[i];
            let pred = post_mean[i];
            let (truth_col, resid_truth) = match truth {
                Some(tr) => {
                    let tv = tr.noiseless_pressures[i];
                    (format!("{tv}"), format!("{}", pred - tv))
                }
                None => (String::new(), String::new()),
            };
            writeln!(f, "{t},{obs},{pred},{},{truth_col},{resid_truth}", pred - obs)?;
        }
    }
    if config.beta_inference {
        let n = data.n_rates();
        let mut f = fs::File::create(model_dir.join("beta_summary.csv"))?;
        writeln!(f, "component,observed,mean,sd,q025,q975")?;
        for j in 0..=n {
            let mut vals: Vec<f64> = betas.iter().map(|b| b[j]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite betas"));
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (vals.len() as f64 - 1.0).max(1.0))
            .sqrt();
            let (name, observed) = if j == 0 {
                ("p0".to_string(), data.p0)
            } else {
                (format!("q{j}"), data.schedule.rates()[j - 1])
            };
            writeln!(
                f,
                "{name},{observed},{mean},{sd},{},{}",
                percentile(&vals, 0.025),
                percentile(&vals, 0.975)
            )?;
        }
    }

    // Step-plot series: interface positions rho_i and cumulative mobility
    // exponents m_i per retained draw.
    {
        let mut rho: Vec<Vec<f64>> = vec![Vec::with_capacity(flat.len()); transitions];
        let mut mob: Vec<Vec<f64>> = vec![Vec::with_capacity(flat.len()); transitions + 1];
        for draw in &flat {
            let params = ReservoirParams::from_vector(&draw[..target.theta_dim()])
                .expect("retained draw decodes");
            let mut radius_sum = 0.0;
            let mut prev_rho = f64::NEG_INFINITY;
            for (i, tr) in params.transitions.iter().enumerate() {
                radius_sum += 10f64.powf(tr.r);
                let r = radius_sum.log10();
                debug_assert!(r > prev_rho, "rho must increase strictly");
                prev_rho = r;
                rho[i].push(r);
            }
            let mut m_sum = 0.0;
            mob[0].push(0.0);
            for (i, tr) in params.transitions.iter().enumerate() {
                m_sum += tr.m;
                mob[i + 1].push(m_sum);
            }
        }
        let mut f = fs::File::create(model_dir.join("step_plot.csv"))?;
        writeln!(f, "quantity,index,mean,min,max,lo95,hi95,lo99,hi99")?;
        let mut write_row = |name: &str, idx: usize, values: &mut Vec<f64>| -> Result<()> {
            let s = summarize(values);
            writeln!(
                f,
                "{name},{idx},{},{},{},{},{},{},{}",
                s.mean, s.min, s.max, s.lo95, s.hi95, s.lo99, s.hi99
            )?;
            Ok(())
        };
        for (i, values) in rho.iter_mut().enumerate() {
            write_row("rho", i + 1, values)?;
        }
        for (i, values) in mob.iter_mut().enumerate() {
            write_row("m", i + 1, values)?;
        }
    }

    // Scores. Likelihoods come from stored log posteriors minus the log
    // prior, so no model re-evaluation is needed per draw.
    let log_liks: Vec<f64> = flat
        .iter()
        .zip(&flat_logpost)
        .map(|(draw, lp)| {
            let (params, sigma_p) = target.decode(draw).expect("retained draw decodes");
            lp - target.log_prior(&params, sigma_p)
        })
        .collect();
    let max_log_lik = log_liks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean_deviance =
        -2.0 * log_liks.iter().sum::<f64>() / log_liks.len() as f64;
    let deviance_at_mean = match target.decode(&mean_state) {
        Some((params, sigma_p)) => match target.log_likelihood(&params, sigma_p) {
            Ok(ll) => -2.0 * ll,
            Err(e) => {
                warnings.push(format!("likelihood at posterior mean failed: {e}"));
                -2.0 * log_liks[map_idx]
            }
        },
        None => {
            warnings.push("posterior mean outside support; DIC uses the MAP deviance".into());
            -2.0 * log_liks[map_idx]
        }
    };
    let k_params = target.theta_dim() + 1;
    let criteria =
        information_criteria(max_log_lik, mean_deviance, deviance_at_mean, k_params, data.n_obs());

    let mut bridge_config = BridgeConfig::new(seed ^ 0xB71D6E);
    bridge_config.n_reference = config.bridge_reference;
    let evidence = match log_marginal_likelihood(
        &flat,
        &flat_logpost,
        |x| target.log_density(x),
        &bridge_config,
    ) {
        Ok(ev) => Some(ev),
        Err(e) => {
            warnings.push(format!("bridge sampling failed: {e}"));
            None
        }
    };

    let score = ModelScore {
        transitions,
        max_log_lik,
        criteria,
        log_marginal: evidence.map(|e| e.log_marginal),
        evidence_se: evidence.map(|e| e.standard_error),
    };

    for w in &warnings {
        log::warn!("model {transitions}: {w}");
    }
    Ok(ModelReport {
        transitions,
        retained_draws: flat.len(),
        accept_rate: output.accept_rate,
        nan_rejects: output.nan_rejects,
        rhat_max,
        ess_min,
        beta_truncation_fallbacks: beta_fallbacks,
        score,
        map_state,
        warnings,
        elapsed_secs: started.elapsed().as_secs_f64(),
    })
}

/// Fit every requested transition count and emit all artifacts under the
/// configured output directory.
pub fn run_inference(
    config: &RunConfig,
    data: &WellTestData,
    truth: Option<&SyntheticTruth>,
) -> Result<RunReport> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    // Fit in increasing complexity so each model can warm-start from the
    // best simpler one, but report in the configured order.
    let counts = &config.transition_counts;
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by_key(|&i| counts[i]);
    let mut fitted: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut slots: Vec<Option<ModelReport>> = (0..counts.len()).map(|_| None).collect();
    for &i in &order {
        let k = counts[i];
        let warm = if config.warm_start {
            fitted
                .iter()
                .filter(|(prev, _)| *prev < k)
                .max_by_key(|(prev, _)| *prev)
                .map(|(prev, state)| (*prev, state.as_slice()))
        } else {
            None
        };
        let report = run_model(config, data, truth, k, warm)?;
        fitted.push((k, report.map_state.clone()));
        slots[i] = Some(report);
    }
    let models: Vec<ModelReport> = slots.into_iter().map(|m| m.expect("fitted")).collect();

    {
        let mut f = fs::File::create(config.output_dir.join("scores.csv"))?;
        writeln!(
            f,
            "transitions,max_log_lik,aic,bic,dic,p_d,log_marginal,evidence_se,rhat_max,ess_min"
        )?;
        for m in &models {
            let s = &m.score;
            let lm = s.log_marginal.map_or(String::new(), |v| format!("{v}"));
            let se = s.evidence_se.map_or(String::new(), |v| format!("{v}"));
            let rhat = m.rhat_max.map_or(String::new(), |v| format!("{v}"));
            writeln!(
                f,
                "{},{},{},{},{},{},{lm},{se},{rhat},{}",
                m.transitions,
                s.max_log_lik,
                s.criteria.aic,
                s.criteria.bic,
                s.criteria.dic,
                s.criteria.p_d,
                m.ess_min
            )?;
        }
    }

    let converged = models
        .iter()
        .all(|m| m.rhat_max.map_or(true, |r| r <= 1.1));
    let report = RunReport {
        models,
        converged,
        output_dir: config.output_dir.clone(),
    };

    let manifest = serde_json::json!({
        "crate_version": env!("CARGO_PKG_VERSION"),
        "config": config,
        "report": &report,
    });
    fs::write(
        config.output_dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    Ok(report)
}
