//! Method-of-images channel response: a line source between two parallel
//! no-flow boundaries. Serves as the synthetic truth generator — a channel
//! is deliberately *not* a radial composite reservoir, so fitting it probes
//! model flexibility. Late time shows the characteristic half-unit slope
//! in z.

use crate::bessel::e1;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

const REL_TRUNCATION: f64 = 1e-14;
const MAX_IMAGES: usize = 100_000;

// Accumulate sum of f(d) over the image distance set {0} ∪ {2d1 + 2kL} ∪
// {2d2 + 2kL} (k >= 0) ∪ {2kL twice, k >= 1}, with the d = 0 self term
// supplied by the caller (it differs between g and Phi).
fn image_sum<F>(d1: f64, d2: f64, self_term: f64, f: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let period = d1 + d2;
    let mut sum = self_term;
    let mut count = 0usize;
    let mut k = 0usize;
    loop {
        let shift = 2.0 * k as f64 * period;
        let mut shell = f(2.0 * d1 + shift) + f(2.0 * d2 + shift);
        if k > 0 {
            shell += 2.0 * f(shift);
        }
        sum += shell;
        count += if k > 0 { 4 } else { 2 };
        if shell <= REL_TRUNCATION * sum.abs() {
            return Ok(sum);
        }
        if count >= MAX_IMAGES {
            return Err(Error::numeric(format!(
                "channel image sum not converged after {count} images"
            )));
        }
        k += 1;
    }
}

/// Channel response g(t) with the well's own d = 0 term included.
pub fn channel_oracle(d1: f64, d2: f64, eta: f64, amplitude: f64, t: f64) -> Result<f64> {
    if !(d1 > 0.0 && d2 > 0.0 && eta > 0.0 && amplitude > 0.0 && t > 0.0) {
        return Err(Error::invalid("channel arguments must be positive"));
    }
    let c = 4.0 * eta * t;
    let sum = image_sum(d1, d2, 1.0, |d| (-d * d / c).exp())?;
    Ok(amplitude * sum / t)
}

/// A channel kernel usable for data synthesis. `Phi(t) = ∫g` diverges for a
/// true line source (the d = 0 term integrates to E1(0) = ∞), so the self
/// term is evaluated at a finite wellbore offset `d_well`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelKernel {
    pub d1: f64,
    pub d2: f64,
    pub eta: f64,
    pub amplitude: f64,
    pub d_well: f64,
}

impl ChannelKernel {
    pub fn new(d1: f64, d2: f64, eta: f64, amplitude: f64, d_well: f64) -> Result<Self> {
        if !(d1 > 0.0 && d2 > 0.0 && eta > 0.0 && amplitude > 0.0 && d_well > 0.0) {
            return Err(Error::invalid("channel kernel parameters must be positive"));
        }
        if d_well >= d1.min(d2) {
            return Err(Error::invalid("wellbore offset must be inside the channel walls"));
        }
        Ok(ChannelKernel { d1, d2, eta, amplitude, d_well })
    }

    pub fn g(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::invalid(format!("time must be positive, got {t}")));
        }
        let c = 4.0 * self.eta * t;
        let self_term = (-self.d_well * self.d_well / c).exp();
        let sum = image_sum(self.d1, self.d2, self_term, |d| (-d * d / c).exp())?;
        Ok(self.amplitude * sum / t)
    }

    /// Cumulative response; each image contributes E1(d^2 / 4 eta t).
    pub fn phi(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::invalid(format!("time must be nonnegative, got {t}")));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let c = 4.0 * self.eta * t;
        let term = |d: f64| {
            let x = d * d / c;
            // e1 underflows to 0 for large x; images far beyond the
            // diffusion front contribute nothing.
            if x > 700.0 {
                0.0
            } else {
                e1(x)
            }
        };
        let sum = image_sum(self.d1, self.d2, term(self.d_well), term)?;
        Ok(self.amplitude * sum)
    }
}
