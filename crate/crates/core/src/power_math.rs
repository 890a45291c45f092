//! Closed-form per-link power and delay relations.
//!
//! A data link with noise power `sigma` spending power `p` has capacity
//! `c = ½ ln(1 + p/sigma)` (nats per unit time) and, carrying flow `t < c`,
//! an M/M/1 delay `h(p) = t / (c - t)`. For a node water level `lambda`
//! the delay-minimising power solves `-h'(p) = lambda`, which inverts in
//! closed form through the principal branch of the Lambert W function.

use crate::error::{Error, Result};

const LAMBERT_MAX_ITERS: usize = 50;
const LAMBERT_TOL: f64 = 1e-12;

/// Noise power and flow of one data link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub sigma: f64,
    pub t: f64,
}

impl LinkParams {
    pub fn new(sigma: f64, t: f64) -> Result<LinkParams> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::BadSigma { id: 0, sigma });
        }
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::NegativeValue {
                what: "flow",
                value: t,
            });
        }
        Ok(LinkParams { sigma, t })
    }

    /// Smallest power at which the capacity reaches the flow.
    pub fn min_power(&self) -> f64 {
        min_power(self.sigma, self.t)
    }
}

/// Per-node Lagrange multiplier of the energy constraint.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct WaterLevel(f64);

impl WaterLevel {
    pub fn new(lambda: f64) -> Result<WaterLevel> {
        if !(lambda > 0.0) || lambda.is_nan() {
            return Err(Error::BadWaterLevel(lambda));
        }
        Ok(WaterLevel(lambda))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// `sigma (e^{2t} - 1)`.
pub fn min_power(sigma: f64, t: f64) -> f64 {
    sigma * (2.0 * t).exp_m1()
}

/// Shannon capacity `½ ln(1 + p/sigma)`.
pub fn capacity(p: f64, sigma: f64) -> f64 {
    0.5 * (p / sigma).ln_1p()
}

/// Principal branch of the Lambert W function on `[0, ∞)`.
///
/// Halley iteration on `w e^w - x`, started from `x (1 - x)` below one and
/// `ln(1 + x)` above.
pub fn lambert_w0(x: f64) -> Result<f64> {
    if x.is_nan() || x < 0.0 {
        return Err(Error::NegativeArgument(x));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let mut w = if x < 1.0 { x * (1.0 - x) } else { x.ln_1p() };
    for _ in 0..LAMBERT_MAX_ITERS {
        let ew = w.exp();
        let f = w * ew - x;
        let wp1 = w + 1.0;
        let step = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1));
        w -= step;
        if step.abs() <= LAMBERT_TOL * 1e-3 * (1.0 + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// Infallible Lambert W for arguments already known to be non-negative.
pub(crate) fn w0(x: f64) -> f64 {
    lambert_w0(x).unwrap_or(f64::NAN)
}

/// `z = sqrt(t e^{-2t} / (2 lambda sigma))`.
pub(crate) fn lambert_arg(lambda: f64, sigma: f64, t: f64) -> f64 {
    (t * (-2.0 * t).exp() / (2.0 * lambda * sigma)).sqrt()
}

/// M/M/1 delay `t / (c - t)`; zero without flow, `+inf` at or past capacity.
pub fn link_delay(p: f64, lp: LinkParams) -> Result<f64> {
    if p < 0.0 || p.is_nan() {
        return Err(Error::NegativePower(p));
    }
    Ok(delay_unchecked(p, lp.sigma, lp.t))
}

pub(crate) fn delay_unchecked(p: f64, sigma: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let gap = capacity(p, sigma) - t;
    if gap <= 0.0 {
        f64::INFINITY
    } else {
        t / gap
    }
}

/// Delay-minimising power at water level `lambda`:
/// `sigma (e^{2(W(z) + t)} - 1)`.
pub fn p_of_lambda(lambda: WaterLevel, lp: LinkParams) -> Result<f64> {
    if lp.t == 0.0 {
        return Err(Error::ZeroFlow);
    }
    Ok(optimal_power(lambda.get(), lp.sigma, lp.t))
}

/// [`p_of_lambda`] with the zero-flow convention `p = 0`.
pub(crate) fn optimal_power(lambda: f64, sigma: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let w = w0(lambert_arg(lambda, sigma, t));
    sigma * (2.0 * (w + t)).exp_m1()
}

/// `d p / d ln(lambda)` of [`optimal_power`]; always `<= 0`.
pub(crate) fn optimal_power_log_slope(lambda: f64, sigma: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let w = w0(lambert_arg(lambda, sigma, t));
    -sigma * (2.0 * (w + t)).exp() * w / (1.0 + w)
}

fn gap_or_err(p: f64, lp: LinkParams) -> Result<f64> {
    let c = capacity(p, lp.sigma);
    if !(c > lp.t) {
        return Err(Error::CapacityNotExceedingFlow {
            capacity: c,
            flow: lp.t,
        });
    }
    Ok(c - lp.t)
}

/// `h'(p) = -(t / 2 sigma) (c - t)^{-2} (1 + p/sigma)^{-1}`.
pub fn dh_dp(p: f64, lp: LinkParams) -> Result<f64> {
    if lp.t == 0.0 {
        return Ok(0.0);
    }
    let gap = gap_or_err(p, lp)?;
    Ok(-lp.t / (2.0 * lp.sigma) / (gap * gap) / (1.0 + p / lp.sigma))
}

/// `dh/dt = c (c - t)^{-2}`.
pub fn dh_dt(p: f64, lp: LinkParams) -> Result<f64> {
    let gap = gap_or_err(p, lp)?;
    Ok((gap + lp.t) / (gap * gap))
}

/// `dp/dsigma = e^{2t} e^{2W(z)} / (1 + W(z)) - 1`, strictly positive.
pub fn dp_dsigma(lambda: WaterLevel, lp: LinkParams) -> Result<f64> {
    if lp.t == 0.0 {
        return Err(Error::ZeroFlow);
    }
    let w = w0(lambert_arg(lambda.get(), lp.sigma, lp.t));
    Ok((2.0 * (lp.t + w)).exp() / (1.0 + w) - 1.0)
}

/// `dp/dt = sigma (W(z) + 2t) e^{2(W(z) + t)} / (t (1 + W(z)))`, strictly positive.
pub fn dp_dt(lambda: WaterLevel, lp: LinkParams) -> Result<f64> {
    if lp.t == 0.0 {
        return Err(Error::ZeroFlow);
    }
    let w = w0(lambert_arg(lambda.get(), lp.sigma, lp.t));
    Ok(lp.sigma * (w + 2.0 * lp.t) * (2.0 * (w + lp.t)).exp() / (lp.t * (1.0 + w)))
}
