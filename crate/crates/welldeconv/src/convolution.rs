//! Exact convolution of a piecewise-constant rate schedule with the
//! response kernel. Because the rate is constant on each interval, the
//! convolution integral collapses to differences of the cumulative response
//! Phi, giving the m x N matrix C with
//! C_ij = Phi(max(t_i - s_j, 0)) - Phi(max(t_i - s_{j+1}, 0)).

use crate::laplace::InversionScheme;
use crate::par::map_slice;
use crate::reservoir::ReservoirParams;
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    breakpoints: Vec<f64>,
    rates: Vec<f64>,
}

impl RateSchedule {
    pub fn new(breakpoints: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != rates.len() + 1 {
            return Err(Error::invalid(format!(
                "need one more breakpoint than rates, got {} and {}",
                breakpoints.len(),
                rates.len()
            )));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) || rates.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("non-finite schedule entry"));
        }
        if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("breakpoints must be strictly increasing"));
        }
        Ok(RateSchedule { breakpoints, rates })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn periods(&self) -> usize {
        self.rates.len()
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().expect("nonempty breakpoints")
    }
}

/// Convolution matrix for an arbitrary cumulative response. Distinct time
/// shifts are deduplicated and evaluated in parallel.
pub fn build_matrix_with<F>(
    phi: F,
    obs_times: &[f64],
    schedule: &RateSchedule,
) -> Result<DMatrix<f64>>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    if obs_times.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::invalid("observation times must be positive"));
    }
    if obs_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("observation times must be strictly increasing"));
    }
    let breaks = schedule.breakpoints();
    let mut shifts: Vec<f64> = Vec::with_capacity(obs_times.len() * breaks.len());
    for &t in obs_times {
        for &s in breaks {
            let shift = (t - s).max(0.0);
            if shift > 0.0 {
                shifts.push(shift);
            }
        }
    }
    shifts.sort_by(|a, b| a.partial_cmp(b).expect("finite shifts"));
    shifts.dedup();
    let values = map_slice(&shifts, |&shift| phi(shift));
    let mut table = HashMap::with_capacity(shifts.len() + 1);
    table.insert(0u64, 0.0);
    for (shift, value) in shifts.iter().zip(values) {
        table.insert(shift.to_bits(), value?);
    }

    let m = obs_times.len();
    let n = schedule.periods();
    let mut c = DMatrix::zeros(m, n);
    for (i, &t) in obs_times.iter().enumerate() {
        for j in 0..n {
            let lo = (t - breaks[j]).max(0.0);
            let hi = (t - breaks[j + 1]).max(0.0);
            c[(i, j)] = table[&lo.to_bits()] - table[&hi.to_bits()];
        }
    }
    Ok(c)
}

/// Convolution matrix for a reservoir model.
pub fn build_matrix(
    params: &ReservoirParams,
    scheme: &InversionScheme,
    obs_times: &[f64],
    schedule: &RateSchedule,
) -> Result<DMatrix<f64>> {
    build_matrix_with(|t| params.cumulative_phi(t, scheme), obs_times, schedule)
}

/// Noiseless model pressures p0 - C q.
pub fn predict_pressure(p0: f64, c: &DMatrix<f64>, q: &[f64]) -> Result<Vec<f64>> {
    if q.len() != c.ncols() {
        return Err(Error::invalid(format!(
            "rate vector length {} does not match {} schedule periods",
            q.len(),
            c.ncols()
        )));
    }
    let drop = c * DVector::from_column_slice(q);
    Ok(drop.iter().map(|d| p0 - d).collect())
}
