//! Differential-evolution MCMC with snooker updates and a thinned past
//! archive (DEzs). A small number of chains explores by differencing
//! archive states, so the scheme stays effective in the moderate dimensions
//! produced by marginalizing beta out of the posterior.

use crate::par::map_slice;
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    /// Probability of a snooker update instead of a parallel-direction one.
    pub snooker_prob: f64,
    /// Probability of gamma = 1 (mode-jumping) in parallel-direction moves.
    pub gamma_one_prob: f64,
    pub jitter: f64,
    /// Current states are appended to the archive every this many
    /// generations.
    pub archive_interval: usize,
    /// Disables the snooker Metropolis correction. Exists only so tests can
    /// demonstrate the bias it prevents; leave true.
    pub snooker_correction: bool,
}

impl SamplerConfig {
    pub fn new(iterations: usize, burn_in: usize, thinning: usize, seed: u64) -> Result<Self> {
        if thinning == 0 {
            return Err(Error::invalid("thinning must be at least 1"));
        }
        Ok(SamplerConfig {
            chains: 3,
            iterations,
            burn_in,
            thinning,
            seed,
            snooker_prob: 0.1,
            gamma_one_prob: 0.1,
            jitter: 1e-6,
            archive_interval: 10,
            snooker_correction: true,
        })
    }

    fn validate(&self) -> Result<()> {
        if self.chains < 2 {
            return Err(Error::invalid("need at least 2 chains"));
        }
        if self.thinning == 0 || self.archive_interval == 0 {
            return Err(Error::invalid("thinning and archive interval must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.snooker_prob)
            || !(0.0..=1.0).contains(&self.gamma_one_prob)
        {
            return Err(Error::invalid("move probabilities must lie in [0, 1]"));
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn retained_per_chain(&self) -> usize {
        (self.iterations.saturating_sub(self.burn_in)) / self.thinning
    }
}

#[derive(Debug, Clone)]
pub struct SampleOutput {
    /// Retained draws, per chain, in generation order.
    pub chains: Vec<Vec<Vec<f64>>>,
    /// Log target density of each retained draw, matching `chains`.
    pub log_densities: Vec<Vec<f64>>,
    pub accept_rate: f64,
    /// Proposals rejected because the target evaluated to NaN.
    pub nan_rejects: usize,
    /// Highest log density seen anywhere in the run (burn-in included).
    pub max_log_density: f64,
    pub map_state: Vec<f64>,
}

impl SampleOutput {
    pub fn n_retained(&self) -> usize {
        self.chains.iter().map(|c| c.len()).sum()
    }

    /// All retained draws flattened across chains.
    pub fn flat(&self) -> Vec<&[f64]> {
        self.chains
            .iter()
            .flat_map(|c| c.iter().map(|d| d.as_slice()))
            .collect()
    }
}

const INIT_REDRAW_CAP: usize = 100;

enum Proposal {
    Parallel,
    Snooker { log_correction_num: f64, log_correction_den: f64 },
}

fn distinct_pair<R: Rng>(rng: &mut R, len: usize, exclude: Option<usize>) -> (usize, usize) {
    loop {
        let a = rng.gen_range(0..len);
        let b = rng.gen_range(0..len);
        if a != b && Some(a) != exclude && Some(b) != exclude {
            return (a, b);
        }
    }
}

/// Run the sampler on an arbitrary log target density. `init` draws
/// starting points (from the prior, in the inference setting); draws whose
/// target is not finite are redrawn up to a fixed budget.
pub fn run_dezs<F, I>(target: F, init: I, dim: usize, config: &SamplerConfig) -> Result<SampleOutput>
where
    F: Fn(&[f64]) -> f64 + Sync,
    I: Fn(&mut ChaCha8Rng) -> Vec<f64>,
{
    config.validate()?;
    if dim == 0 {
        return Err(Error::invalid("target dimension must be positive"));
    }
    let k = config.chains;
    let mut rngs: Vec<ChaCha8Rng> = (0..k)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(i as u64 + 1);
            rng
        })
        .collect();

    // Initial states: prior draws with a bounded redraw budget per chain.
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut densities: Vec<f64> = Vec::with_capacity(k);
    for rng in rngs.iter_mut() {
        let mut found = None;
        for _ in 0..INIT_REDRAW_CAP {
            let x = init(rng);
            if x.len() != dim {
                return Err(Error::invalid(format!(
                    "initializer produced dimension {}, expected {dim}",
                    x.len()
                )));
            }
            let d = target(&x);
            if d.is_finite() {
                found = Some((x, d));
                break;
            }
        }
        let (x, d) = found.ok_or_else(|| {
            Error::numeric(format!(
                "no finite-density initial state found in {INIT_REDRAW_CAP} prior draws"
            ))
        })?;
        states.push(x);
        densities.push(d);
    }

    let mut archive: Vec<Vec<f64>> = states.clone();
    let retained = config.retained_per_chain();
    if config.iterations <= config.burn_in {
        log::warn!(
            "iterations ({}) do not exceed burn-in ({}); no draws retained",
            config.iterations,
            config.burn_in
        );
    }

    let mut out_chains: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(retained); k];
    let mut out_densities: Vec<Vec<f64>> = vec![Vec::with_capacity(retained); k];
    let (mut accepted, mut proposed, mut nan_rejects) = (0usize, 0usize, 0usize);
    let mut max_log_density = f64::NEG_INFINITY;
    let mut map_state = states[0].clone();
    for (s, d) in states.iter().zip(&densities) {
        if *d > max_log_density {
            max_log_density = *d;
            map_state = s.clone();
        }
    }

    let gamma_parallel = 2.38 / (2.0 * dim as f64).sqrt();
    let gamma_snooker = 2.38 / 2f64.sqrt();

    for gen in 1..=config.iterations {
        // Draw all proposals first (sequential RNG use keeps runs
        // reproducible), then evaluate the target for every chain in
        // parallel.
        let mut proposals: Vec<(Vec<f64>, Proposal)> = Vec::with_capacity(k);
        for (i, rng) in rngs.iter_mut().enumerate() {
            let x = &states[i];
            if rng.gen::<f64>() < config.snooker_prob {
                // Snooker: difference two archive states projected onto the
                // line through x and a third archive state z.
                let mut zi = rng.gen_range(0..archive.len());
                let mut tries = 0;
                while archive[zi] == *x && tries < 32 {
                    zi = rng.gen_range(0..archive.len());
                    tries += 1;
                }
                let z = &archive[zi];
                if z == x {
                    // Degenerate archive; fall back to a parallel move.
                    proposals.push(propose_parallel(
                        x,
                        &archive,
                        rng,
                        gamma_parallel,
                        config,
                    ));
                    continue;
                }
                let (i1, i2) = distinct_pair(rng, archive.len(), Some(zi));
                let diff: Vec<f64> = x.iter().zip(z).map(|(a, b)| a - b).collect();
                let norm2: f64 = diff.iter().map(|v| v * v).sum();
                let dot = |v: &[f64]| -> f64 {
                    v.iter().zip(z).zip(&diff).map(|((a, b), e)| (a - b) * e).sum::<f64>()
                        / norm2
                };
                let proj = dot(&archive[i1]) - dot(&archive[i2]);
                let y: Vec<f64> = x
                    .iter()
                    .zip(&diff)
                    .map(|(a, e)| a + gamma_snooker * proj * e)
                    .collect();
                let dist_x = norm2.sqrt();
                let dist_y = y
                    .iter()
                    .zip(z)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                proposals.push((
                    y,
                    Proposal::Snooker {
                        log_correction_num: (dim as f64 - 1.0) * dist_y.ln(),
                        log_correction_den: (dim as f64 - 1.0) * dist_x.ln(),
                    },
                ));
            } else {
                proposals.push(propose_parallel(x, &archive, rng, gamma_parallel, config));
            }
        }

        let new_densities = map_slice(&proposals, |(y, _)| target(y));

        for i in 0..k {
            proposed += 1;
            let (y, kind) = &proposals[i];
            let d_new = new_densities[i];
            if d_new.is_nan() {
                nan_rejects += 1;
                continue;
            }
            if d_new > max_log_density {
                max_log_density = d_new;
                map_state = y.clone();
            }
            let mut log_alpha = d_new - densities[i];
            if let Proposal::Snooker { log_correction_num, log_correction_den } = kind {
                if config.snooker_correction {
                    log_alpha += log_correction_num - log_correction_den;
                }
            }
            let accept = log_alpha >= 0.0 || rngs[i].gen::<f64>().ln() < log_alpha;
            if accept {
                states[i] = y.clone();
                densities[i] = d_new;
                accepted += 1;
            }
        }

        if gen % config.archive_interval == 0 {
            archive.extend(states.iter().cloned());
        }
        if gen > config.burn_in && (gen - config.burn_in) % config.thinning == 0 {
            for i in 0..k {
                out_chains[i].push(states[i].clone());
                out_densities[i].push(densities[i]);
            }
        }
    }

    Ok(SampleOutput {
        chains: out_chains,
        log_densities: out_densities,
        accept_rate: accepted as f64 / proposed.max(1) as f64,
        nan_rejects,
        max_log_density,
        map_state,
    })
}

fn propose_parallel(
    x: &[f64],
    archive: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
    gamma_parallel: f64,
    config: &SamplerConfig,
) -> (Vec<f64>, Proposal) {
    let gamma = if rng.gen::<f64>() < config.gamma_one_prob {
        1.0
    } else {
        gamma_parallel
    };
    let (i1, i2) = distinct_pair(rng, archive.len(), None);
    let y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(j, a)| {
            a + gamma * (archive[i1][j] - archive[i2][j])
                + rng.gen_range(-config.jitter..=config.jitter)
        })
        .collect();
    (y, Proposal::Parallel)
}
