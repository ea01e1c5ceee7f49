//! Multi-region radial composite reservoir response.
//!
//! The model is the Laplace-domain solution of concentric annular regions
//! with piecewise-constant mobility and diffusivity around a wellbore with
//! storage; skin is absorbed into the effective wellbore radius. Parameters
//! follow the (P, T, W, {R_i, M_i, eta_i}) log10 groups: P and T set the
//! pressure and time scales, W = log10(C_D e^{2S}) the early-time shape,
//! and each transition adds a radius increment, a mobility ratio and a
//! diffusivity ratio.
//!
//! Dimensionless mapping: t* = 10^T t, region-1 diffusivity 10^W, and the
//! unit-rate drawdown is 10^{-P} p_D(10^T t). Consequently a change dP
//! shifts z(tau) down by exactly dP ln10 and dT shifts it left by dT ln10.

use crate::bessel::{i0e, i1e, ik_scaled_complex, k0k1e};
use crate::laplace::{invert, invert_stehfest, InversionMethod, InversionScheme};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub const LN10: f64 = std::f64::consts::LN_10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// log10 radius increment from the previous interface.
    pub r: f64,
    /// log10 mobility ratio (k/mu)_i / (k/mu)_{i+1}.
    pub m: f64,
    /// log10 diffusivity ratio of region 1 to region i+1.
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReservoirParams {
    /// Pressure match, log10 of the amplitude scale.
    pub p: f64,
    /// Time match, log10 of the time scale.
    pub t: f64,
    /// Wellbore storage/skin group, log10(C_D e^{2S}); nonnegative.
    pub w: f64,
    pub transitions: Vec<Transition>,
}

impl ReservoirParams {
    pub fn new(p: f64, t: f64, w: f64, transitions: Vec<Transition>) -> Result<Self> {
        let params = ReservoirParams { p, t, w, transitions };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let mut vals = vec![self.p, self.t, self.w];
        for tr in &self.transitions {
            vals.extend([tr.r, tr.m, tr.eta]);
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite reservoir parameter"));
        }
        if self.w < 0.0 {
            return Err(Error::invalid(format!("W must be nonnegative, got {}", self.w)));
        }
        Ok(())
    }

    /// Number of regions n (transitions + 1).
    pub fn regions(&self) -> usize {
        self.transitions.len() + 1
    }

    /// Total parameter dimension, 3n.
    pub fn dim(&self) -> usize {
        3 + 3 * self.transitions.len()
    }

    /// Flatten to (P, T, W, R_1, M_1, eta_1, ...) for the sampler.
    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = vec![self.p, self.t, self.w];
        for tr in &self.transitions {
            v.extend([tr.r, tr.m, tr.eta]);
        }
        v
    }

    /// Inverse of [`to_vector`]; does not validate support.
    pub fn from_vector(v: &[f64]) -> Result<Self> {
        if v.len() < 3 || (v.len() - 3) % 3 != 0 {
            return Err(Error::invalid(format!(
                "parameter vector length must be 3n, got {}",
                v.len()
            )));
        }
        let transitions = v[3..]
            .chunks(3)
            .map(|c| Transition { r: c[0], m: c[1], eta: c[2] })
            .collect();
        Ok(ReservoirParams { p: v[0], t: v[1], w: v[2], transitions })
    }

    // Per-region (dimensionless diffusivity, mobility) and interface radii
    // in units of the effective wellbore radius (wellbore at x = 1).
    fn region_table(&self) -> (Vec<(f64, f64)>, Vec<f64>) {
        let mut regions = Vec::with_capacity(self.transitions.len() + 1);
        regions.push((10f64.powf(self.w), 1.0));
        let mut lambda = 1.0;
        let mut radii = Vec::with_capacity(self.transitions.len());
        let mut x = 1.0;
        for tr in &self.transitions {
            lambda *= 10f64.powf(-tr.m);
            regions.push((10f64.powf(self.w - tr.eta), lambda));
            x += 10f64.powf(tr.r);
            radii.push(x);
        }
        (regions, radii)
    }

    /// Dimensionless stored-wellbore drawdown transform at complex `s`
    /// (right half-plane, Talbot contours included).
    pub fn laplace_drawdown(&self, s: Complex64) -> Result<Complex64> {
        let (regions, radii) = self.region_table();
        drawdown(&regions, &radii, s)
    }

    /// Same on the positive real axis (Stehfest nodes).
    pub fn laplace_drawdown_real(&self, u: f64) -> Result<f64> {
        if !(u > 0.0) {
            return Err(Error::invalid(format!("Laplace node must be positive, got {u}")));
        }
        let (regions, radii) = self.region_table();
        drawdown(&regions, &radii, u)
    }

    /// Response kernel g(t) = d/dt of the unit-rate drawdown.
    pub fn response_g(&self, time: f64, scheme: &InversionScheme) -> Result<f64> {
        if !(time > 0.0) {
            return Err(Error::invalid(format!("time must be positive, got {time}")));
        }
        let t_star = 10f64.powf(self.t) * time;
        let (regions, radii) = self.region_table();
        let talbot = |m: usize| {
            invert(
                |s| drawdown(&regions, &radii, s).map_or(Complex64::new(f64::NAN, 0.0), |d| s * d),
                t_star,
                &InversionScheme::fixed_talbot(m).expect("valid node count"),
            )
        };
        let mut v = match scheme.method() {
            InversionMethod::Stehfest => invert_stehfest(
                |u| drawdown(&regions, &radii, u).map_or(f64::NAN, |d| u * d),
                t_star,
                scheme.stehfest_nodes().expect("stehfest weights"),
            )?,
            InversionMethod::FixedTalbot => talbot(scheme.order())?,
        };
        if v <= 0.0 && scheme.method() == InversionMethod::Stehfest {
            // Strong mobility contrasts can push g through a minimum ~1e-5
            // of its scale; Stehfest's absolute error then flips the sign.
            // The contour rule resolves those dips.
            v = talbot(48)?;
        }
        Ok(10f64.powf(self.t - self.p) * v)
    }

    /// Cumulative response Phi(t) = integral of g over [0, t], i.e. the
    /// unit-rate pressure drop.
    pub fn cumulative_phi(&self, time: f64, scheme: &InversionScheme) -> Result<f64> {
        if !(time >= 0.0) {
            return Err(Error::invalid(format!("time must be nonnegative, got {time}")));
        }
        if time == 0.0 {
            return Ok(0.0);
        }
        let t_star = 10f64.powf(self.t) * time;
        let (regions, radii) = self.region_table();
        let v = match scheme.method() {
            InversionMethod::Stehfest => invert_stehfest(
                |u| drawdown(&regions, &radii, u).unwrap_or(f64::NAN),
                t_star,
                scheme.stehfest_nodes().expect("stehfest weights"),
            )?,
            InversionMethod::FixedTalbot => invert(
                |s| {
                    drawdown(&regions, &radii, s)
                        .unwrap_or(Complex64::new(f64::NAN, 0.0))
                },
                t_star,
                scheme,
            )?,
        };
        Ok(10f64.powf(-self.p) * v)
    }

    /// z(tau) = tau + ln g(e^tau), the log-log derivative plot.
    pub fn z_transform(&self, tau: f64, scheme: &InversionScheme) -> Result<f64> {
        let g = self.response_g(tau.exp(), scheme)?;
        if !(g > 0.0) {
            return Err(Error::numeric(format!("nonpositive response g = {g} at tau = {tau}")));
        }
        Ok(tau + g.ln())
    }
}

/// z(tau) for an arbitrary kernel, used for oracle curves.
pub fn z_of<F>(g: F, tau: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let v = g(tau.exp())?;
    if !(v > 0.0) {
        return Err(Error::numeric(format!("nonpositive response g = {v} at tau = {tau}")));
    }
    Ok(tau + v.ln())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalProperties {
    pub r_w: f64,
    /// Wellbore storage coefficient.
    pub c: f64,
    /// Skin (any sign).
    pub skin: f64,
    pub h: f64,
    pub c_t: f64,
    /// Per-region (permeability, viscosity, porosity), innermost first.
    pub regions: Vec<(f64, f64, f64)>,
    /// Transition radii, one fewer than regions, strictly increasing.
    pub radii: Vec<f64>,
}

/// Table 1 mapping from physical properties to the log10 parameter groups.
pub fn from_physical(props: &PhysicalProperties) -> Result<ReservoirParams> {
    let positive = [props.r_w, props.c, props.h, props.c_t];
    if positive.iter().any(|v| !(*v > 0.0)) || !props.skin.is_finite() {
        return Err(Error::invalid("physical quantities must be positive"));
    }
    if props.regions.is_empty() || props.radii.len() + 1 != props.regions.len() {
        return Err(Error::invalid("need one transition radius per region boundary"));
    }
    for (k, mu, phi) in &props.regions {
        if !(*k > 0.0 && *mu > 0.0 && *phi > 0.0) {
            return Err(Error::invalid("region properties must be positive"));
        }
    }
    let mut prev = props.r_w;
    for &r in &props.radii {
        if !(r > prev) {
            return Err(Error::invalid("transition radii must be strictly increasing"));
        }
        prev = r;
    }

    let two_pi_h = 2.0 * std::f64::consts::PI * props.h;
    let mob = |i: usize| props.regions[i].0 / props.regions[i].1;
    let diffusivity =
        |i: usize| mob(i) / (props.regions[i].2 * props.c_t);
    let r_we = props.r_w * (-props.skin).exp();

    let p = (two_pi_h * mob(0)).log10();
    let t = (two_pi_h * mob(0) / props.c).log10();
    let w = (props.c / (two_pi_h * props.regions[0].2 * props.c_t * r_we * r_we)).log10();

    let mut transitions = Vec::with_capacity(props.radii.len());
    let mut prev = props.r_w;
    for (i, &radius) in props.radii.iter().enumerate() {
        transitions.push(Transition {
            r: ((radius - prev) / r_we).log10(),
            m: (mob(i) / mob(i + 1)).log10(),
            eta: (diffusivity(0) / diffusivity(i + 1)).log10(),
        });
        prev = radius;
    }
    ReservoirParams::new(p, t, w, transitions)
}

// Scalar abstraction so the impedance recursion runs on f64 (Stehfest) and
// Complex64 (Talbot) from one definition.
pub(crate) trait ModelScalar:
    Copy
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
{
    fn from_re(x: f64) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    /// (i0e, i1e, k0e, k1e) at self (right half-plane).
    fn scaled_ik(self) -> (Self, Self, Self, Self);
    fn modulus(self) -> f64;
    fn finite(self) -> bool;
}

impl ModelScalar for f64 {
    fn from_re(x: f64) -> Self {
        x
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn scaled_ik(self) -> (Self, Self, Self, Self) {
        let (k0, k1) = k0k1e(self);
        (i0e(self), i1e(self), k0, k1)
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn finite(self) -> bool {
        self.is_finite()
    }
}

impl ModelScalar for Complex64 {
    fn from_re(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn sqrt(self) -> Self {
        Complex64::sqrt(self)
    }
    fn exp(self) -> Self {
        Complex64::exp(self)
    }
    fn scaled_ik(self) -> (Self, Self, Self, Self) {
        ik_scaled_complex(self)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

// Impedance Y = psi / (-lambda d psi/dx) propagated inward from the
// outermost (pure K0) region; Y is continuous across interfaces because
// pressure and mobility-weighted flux both are. All Bessel factors stay in
// scaled form so nothing overflows at large |s| x.
fn wellbore_impedance<T: ModelScalar>(regions: &[(f64, f64)], radii: &[f64], s: T) -> Result<T> {
    let n = regions.len();
    let (d_outer, lam_outer) = regions[n - 1];
    let sigma_outer = (s / T::from_re(d_outer)).sqrt();
    let x_outer = if n == 1 { 1.0 } else { radii[n - 2] };
    let z = sigma_outer * T::from_re(x_outer);
    let (_, _, k0, k1) = z.scaled_ik();
    let mut y = k0 / (T::from_re(lam_outer) * sigma_outer * k1);

    for i in (0..n - 1).rev() {
        let (d, lam) = regions[i];
        let sigma = (s / T::from_re(d)).sqrt();
        let x_out = radii[i];
        let x_in = if i == 0 { 1.0 } else { radii[i - 1] };

        let zo = sigma * T::from_re(x_out);
        let (i0o, i1o, k0o, k1o) = zo.scaled_ik();
        let yls = y * T::from_re(lam) * sigma;
        let denom = i0o + yls * i1o;
        let c_hat = (yls * k1o - k0o) / denom;

        let zi = sigma * T::from_re(x_in);
        let (i0i, i1i, k0i, k1i) = zi.scaled_ik();
        let decay = (T::from_re(0.0) - (sigma * T::from_re(2.0 * (x_out - x_in)))).exp();
        let cf = c_hat * decay;
        let num = k0i + cf * i0i;
        let den = T::from_re(lam) * sigma * (k1i - cf * i1i);
        y = num / den;
        if !y.finite() || den.modulus() == 0.0 {
            return Err(Error::SingularTransition { transition: i + 1 });
        }
    }
    Ok(y)
}

fn drawdown<T: ModelScalar>(regions: &[(f64, f64)], radii: &[f64], s: T) -> Result<T> {
    let z = wellbore_impedance(regions, radii, s)?;
    let one = T::from_re(1.0);
    let out = z / (s * (s * z + one));
    if !out.finite() {
        return Err(Error::numeric("non-finite drawdown transform".to_string()));
    }
    Ok(out)
}
