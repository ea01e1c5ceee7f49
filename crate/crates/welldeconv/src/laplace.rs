//! Numerical inverse Laplace transforms.
//!
//! Two schemes: Gaver-Stehfest (real nodes, the default for the smooth
//! monotone transforms produced by the reservoir model) and fixed Talbot
//! (complex contour, kept as a cross-check because Stehfest degrades on
//! near-discontinuous behaviour).

use crate::{Error, Result};
use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, ToPrimitive, Zero};
use num_complex::Complex64;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionMethod {
    Stehfest,
    FixedTalbot,
}

/// A validated inversion scheme. Stehfest weights are computed once per
/// order in exact rational arithmetic and cached; the struct is immutable
/// afterwards and safe to share across evaluation threads.
#[derive(Debug, Clone)]
pub struct InversionScheme {
    method: InversionMethod,
    order: usize,
    weights: Option<Arc<[f64]>>,
}

impl InversionScheme {
    /// Stehfest scheme of even order `n`, 4 <= n <= 20.
    pub fn stehfest(n: usize) -> Result<Self> {
        if !(4..=20).contains(&n) || n % 2 != 0 {
            return Err(Error::invalid(format!(
                "Stehfest order must be even and in [4, 20], got {n}"
            )));
        }
        Ok(InversionScheme {
            method: InversionMethod::Stehfest,
            order: n,
            weights: Some(cached_weights(n)),
        })
    }

    /// Fixed-Talbot scheme with `m` contour nodes.
    pub fn fixed_talbot(m: usize) -> Result<Self> {
        if m < 4 {
            return Err(Error::invalid(format!(
                "Talbot node count must be at least 4, got {m}"
            )));
        }
        Ok(InversionScheme {
            method: InversionMethod::FixedTalbot,
            order: m,
            weights: None,
        })
    }

    pub fn method(&self) -> InversionMethod {
        self.method
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Stehfest weights of this scheme, if it is a Stehfest scheme.
    pub fn stehfest_nodes(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }
}

impl Default for InversionScheme {
    fn default() -> Self {
        InversionScheme::stehfest(12).expect("valid default order")
    }
}

fn cached_weights(n: usize) -> Arc<[f64]> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<[f64]>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("weight cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| stehfest_weights(n).expect("validated order").into())
        .clone()
}

/// Gaver-Stehfest weights `V_1..V_N` for even `N` in `[2, 20]`, computed in
/// exact rational arithmetic (the alternating sum cancels catastrophically
/// in native floating point at large `N`).
pub fn stehfest_weights(n: usize) -> Result<Vec<f64>> {
    let exact = stehfest_weights_exact(n)?;
    exact
        .iter()
        .enumerate()
        .map(|(k, w)| {
            w.to_f64().ok_or_else(|| {
                Error::numeric(format!("Stehfest weight V_{} not representable", k + 1))
            })
        })
        .collect()
}

fn stehfest_weights_exact(n: usize) -> Result<Vec<BigRational>> {
    if !(2..=20).contains(&n) || n % 2 != 0 {
        return Err(Error::invalid(format!(
            "Stehfest weight order must be even and in [2, 20], got {n}"
        )));
    }
    let half = n / 2;
    let fact = |m: usize| -> BigInt { (1..=m).map(BigInt::from).product() };
    let mut weights = Vec::with_capacity(n);
    for k in 1..=n {
        let mut sum = BigRational::zero();
        for j in k.div_ceil(2)..=k.min(half) {
            let num = BigInt::from(j).pow(half as u32) * fact(2 * j);
            let den = fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k);
            sum += BigRational::new(num, den);
        }
        if (half + k) % 2 == 1 {
            sum = -sum;
        }
        weights.push(sum);
    }
    Ok(weights)
}

/// Exact-rational check of the weight identities `sum V_k = 0` and
/// `sum V_k / k = 1`; returns the two residuals as f64. The sums are formed
/// in rational arithmetic because in f64 the cancellation noise alone
/// exceeds 1e-9 beyond N = 14.
pub fn stehfest_weight_residuals(n: usize) -> Result<(f64, f64)> {
    if !(2..=20).contains(&n) || n % 2 != 0 {
        return Err(Error::invalid("order must be even and in [2, 20]".to_string()));
    }
    let w = stehfest_weights_exact(n)?;
    let mut sum = BigRational::zero();
    let mut harm = BigRational::zero();
    for (i, r) in w.into_iter().enumerate() {
        sum += r.clone();
        harm += r / BigInt::from(i + 1);
    }
    harm -= BigRational::one();
    let to_f64 = |r: &BigRational| r.abs().to_f64().unwrap_or(f64::INFINITY);
    Ok((to_f64(&sum), to_f64(&harm)))
}

/// Invert the Laplace transform `f` at time `t > 0`.
///
/// Stehfest evaluates `f` only at real nodes `k ln2 / t`; Talbot evaluates
/// it on a complex contour. A non-finite evaluation is reported with the
/// offending node.
pub fn invert<F>(f: F, t: f64, scheme: &InversionScheme) -> Result<f64>
where
    F: Fn(Complex64) -> Complex64,
{
    if !(t > 0.0) {
        return Err(Error::invalid(format!("inversion time must be positive, got {t}")));
    }
    match scheme.method {
        InversionMethod::Stehfest => invert_stehfest(
            |s| {
                let v = f(Complex64::new(s, 0.0));
                v.re
            },
            t,
            scheme.weights.as_deref().expect("stehfest weights"),
        ),
        InversionMethod::FixedTalbot => invert_talbot(f, t, scheme.order),
    }
}

/// Stehfest with a real-valued transform: `(ln2/t) * sum_k V_k F(k ln2/t)`.
pub fn invert_stehfest<F>(f: F, t: f64, weights: &[f64]) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let ln2_t = std::f64::consts::LN_2 / t;
    let mut acc = 0.0;
    for (k, v) in weights.iter().enumerate() {
        let node = (k as f64 + 1.0) * ln2_t;
        let val = f(node);
        if !val.is_finite() {
            return Err(Error::numeric(format!(
                "transform evaluated to {val} at Stehfest node s = {node}"
            )));
        }
        acc += v * val;
    }
    Ok(ln2_t * acc)
}

/// Fixed-Talbot rule of Abate & Valko with `m` nodes.
pub fn invert_talbot<F>(f: F, t: f64, m: usize) -> Result<f64>
where
    F: Fn(Complex64) -> Complex64,
{
    let r = 2.0 * m as f64 / (5.0 * t);
    let check = |s: Complex64, v: Complex64| -> Result<Complex64> {
        if v.re.is_finite() && v.im.is_finite() {
            Ok(v)
        } else {
            Err(Error::numeric(format!(
                "transform evaluated to {v} at Talbot node s = {s}"
            )))
        }
    };
    let s0 = Complex64::new(r, 0.0);
    let mut acc = 0.5 * check(s0, f(s0))?.re * (r * t).exp();
    for k in 1..m {
        let theta = k as f64 * PI / m as f64;
        let cot = theta.cos() / theta.sin();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        let v = check(s, f(s))?;
        acc += ((s * t).exp() * v * Complex64::new(1.0, sigma)).re;
    }
    Ok(acc * r / m as f64)
}
