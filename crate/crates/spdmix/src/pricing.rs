//! Closed-form valuation for lognormal components and finite mixtures.
//!
//! A terminal price S_T is modeled as a mixture of lognormals: the log
//! return ln(S_T/S_t) of component j is normal with mean `mu_j` and
//! standard deviation `sigma_j` over the horizon. Component call prices,
//! the mixture density and its strike derivatives are all closed-form.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpdError};
use crate::math::{normal_ccdf, normal_cdf, normal_pdf};

/// Tolerance on the mixture weight normalization.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Economic environment of one expiry: spot, carry rates, horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketContext {
    /// Current underlying price S_t.
    pub spot: f64,
    /// Continuously compounded annual risk-free rate.
    pub rate: f64,
    /// Continuously compounded annual dividend yield.
    pub dividend_yield: f64,
    /// Time to maturity in years (ACT/365).
    pub tau: f64,
}

impl MarketContext {
    pub fn new(spot: f64, rate: f64, dividend_yield: f64, tau: f64) -> Result<Self> {
        if !(spot > 0.0) || !spot.is_finite() {
            return Err(SpdError::Domain(format!("spot must be > 0, got {spot}")));
        }
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(SpdError::Domain(format!("tau must be > 0, got {tau}")));
        }
        if !rate.is_finite() || !dividend_yield.is_finite() {
            return Err(SpdError::Domain("rate and dividend yield must be finite".into()));
        }
        Ok(Self { spot, rate, dividend_yield, tau })
    }

    /// Forward price F = S e^{(r - delta) tau}.
    pub fn forward(&self) -> f64 {
        self.spot * ((self.rate - self.dividend_yield) * self.tau).exp()
    }

    /// Discount factor e^{-r tau}.
    pub fn discount(&self) -> f64 {
        (-self.rate * self.tau).exp()
    }
}

/// One lognormal kernel, parametrized on the log-return scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    /// Mean of ln(S_T/S_t) under this component.
    pub mu: f64,
    /// Standard deviation of ln(S_T/S_t) over the horizon.
    pub sigma: f64,
}

impl MixtureComponent {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(SpdError::Domain(format!("sigma must be > 0, got {sigma}")));
        }
        if !mu.is_finite() {
            return Err(SpdError::Domain("mu must be finite".into()));
        }
        Ok(Self { mu, sigma })
    }

    /// Mean of ln S_T given the spot: the scale all closed forms use.
    pub fn mu_abs(&self, ctx: &MarketContext) -> f64 {
        ctx.spot.ln() + self.mu
    }

    /// Component matching Black-Scholes with annualized volatility `vol`:
    /// mu = (r - delta - vol^2/2) tau, sigma = vol sqrt(tau).
    pub fn black_scholes(ctx: &MarketContext, vol: f64) -> Result<Self> {
        if !(vol > 0.0) {
            return Err(SpdError::Domain(format!("vol must be > 0, got {vol}")));
        }
        Self::new(
            (ctx.rate - ctx.dividend_yield - 0.5 * vol * vol) * ctx.tau,
            vol * ctx.tau.sqrt(),
        )
    }
}

/// Fitted state price density: a discrete mixing measure over components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub components: Vec<MixtureComponent>,
    pub weights: Vec<f64>,
    pub context: MarketContext,
}

impl MixtureModel {
    pub fn new(
        components: Vec<MixtureComponent>,
        weights: Vec<f64>,
        context: MarketContext,
    ) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(SpdError::Domain(format!(
                "need matching non-empty components/weights, got {}/{}",
                components.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(SpdError::Domain("weights must be nonnegative and finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(SpdError::Domain(format!(
                "weights must sum to 1 within {WEIGHT_SUM_TOL:e}, got {total}"
            )));
        }
        Ok(Self { components, weights, context })
    }

    /// Single-component model reproducing Black-Scholes with volatility `vol`.
    pub fn black_scholes(ctx: MarketContext, vol: f64) -> Result<Self> {
        let comp = MixtureComponent::black_scholes(&ctx, vol)?;
        Self::new(vec![comp], vec![1.0], ctx)
    }

    /// Mixture call price: the weight-average of component call prices.
    pub fn call_price(&self, strike: f64) -> Result<f64> {
        check_strike(strike)?;
        Ok(self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(c, &w)| w * component_call_price_unchecked(&self.context, strike, c))
            .sum())
    }

    /// State price density at terminal price `s`.
    pub fn density(&self, s: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(SpdError::Domain(format!("density needs s > 0, got {s}")));
        }
        Ok(self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(c, &w)| w * lognormal_pdf(s, c.mu_abs(&self.context), c.sigma))
            .sum())
    }

    /// Analytic (dC/dX, d2C/dX2).
    ///
    /// The first derivative is -e^{-r tau} sum_j pi_j Phibar((ln X - mu_abs_j)/sigma_j),
    /// always in [-e^{-r tau}, 0]; the second is e^{-r tau} times the density.
    pub fn price_derivatives(&self, strike: f64) -> Result<(f64, f64)> {
        check_strike(strike)?;
        let df = self.context.discount();
        let slope: f64 = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(c, &w)| {
                w * normal_ccdf((strike.ln() - c.mu_abs(&self.context)) / c.sigma)
            })
            .sum::<f64>()
            * -df;
        let curvature = df * self.density(strike)?;
        Ok((slope, curvature))
    }

    /// Risk-neutral mean of S_T: sum_j pi_j exp(mu_abs_j + sigma_j^2/2).
    pub fn mean(&self) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, &w)| w * (c.mu_abs(&self.context) + 0.5 * c.sigma * c.sigma).exp())
            .sum()
    }
}

fn check_strike(strike: f64) -> Result<()> {
    if !(strike > 0.0) || !strike.is_finite() {
        return Err(SpdError::Domain(format!("strike must be > 0, got {strike}")));
    }
    Ok(())
}

/// Lognormal density with location `mu_abs` (mean of ln S) and scale `sigma`.
pub fn lognormal_pdf(s: f64, mu_abs: f64, sigma: f64) -> f64 {
    normal_pdf((s.ln() - mu_abs) / sigma) / (s * sigma)
}

/// Black-Scholes European call price.
pub fn bs_call_price(ctx: &MarketContext, strike: f64, vol: f64) -> Result<f64> {
    check_strike(strike)?;
    if !(vol > 0.0) || !vol.is_finite() {
        return Err(SpdError::Domain(format!("vol must be > 0, got {vol}")));
    }
    let sqrt_tau = ctx.tau.sqrt();
    let d1 = ((ctx.spot / strike).ln()
        + (ctx.rate - ctx.dividend_yield + 0.5 * vol * vol) * ctx.tau)
        / (vol * sqrt_tau);
    let d2 = d1 - vol * sqrt_tau;
    Ok(ctx.spot * (-ctx.dividend_yield * ctx.tau).exp() * normal_cdf(d1)
        - strike * ctx.discount() * normal_cdf(d2))
}

/// Closed-form call price under one lognormal component:
/// e^{-r tau + sigma^2/2 + mu_abs} Phibar((ln X - mu_abs - sigma^2)/sigma)
///   - e^{-r tau} X Phibar((ln X - mu_abs)/sigma).
pub fn component_call_price(
    ctx: &MarketContext,
    strike: f64,
    comp: &MixtureComponent,
) -> Result<f64> {
    check_strike(strike)?;
    Ok(component_call_price_unchecked(ctx, strike, comp))
}

fn component_call_price_unchecked(ctx: &MarketContext, strike: f64, comp: &MixtureComponent) -> f64 {
    let mu_abs = comp.mu_abs(ctx);
    let sig = comp.sigma;
    let ln_x = strike.ln();
    let rt = ctx.rate * ctx.tau;
    let lhs = (-rt + 0.5 * sig * sig + mu_abs).exp()
        * normal_ccdf((ln_x - mu_abs - sig * sig) / sig);
    let rhs = (-rt).exp() * strike * normal_ccdf((ln_x - mu_abs) / sig);
    // The difference is nonnegative analytically; clamp stray rounding.
    (lhs - rhs).max(0.0)
}

/// Sensitivity of the component call price to mu:
/// dC/dmu = e^{-r tau + sigma^2/2 + mu_abs} Phibar((ln X - mu_abs - sigma^2)/sigma).
///
/// The density terms from differentiating both Phibar arguments cancel via
/// e^{mu_abs + sigma^2/2} phi((ln X - mu_abs - sigma^2)/sigma) = X phi((ln X - mu_abs)/sigma).
pub fn component_price_dmu(
    ctx: &MarketContext,
    strike: f64,
    comp: &MixtureComponent,
) -> Result<f64> {
    check_strike(strike)?;
    let mu_abs = comp.mu_abs(ctx);
    let sig = comp.sigma;
    Ok((-ctx.rate * ctx.tau + 0.5 * sig * sig + mu_abs).exp()
        * normal_ccdf((strike.ln() - mu_abs - sig * sig) / sig))
}

/// Back out the dividend yield from put-call parity
/// P + S e^{-delta tau} = C + X e^{-r tau}.
pub fn implied_dividend_from_parity(
    call: f64,
    put: f64,
    spot: f64,
    rate: f64,
    tau: f64,
    strike: f64,
) -> Result<f64> {
    if !(spot > 0.0) || !(strike > 0.0) || !(tau > 0.0) {
        return Err(SpdError::Domain(
            "parity inversion needs spot, strike and tau > 0".into(),
        ));
    }
    let arg = call - put + strike * (-rate * tau).exp();
    if arg <= 0.0 {
        return Err(SpdError::InconsistentParity(arg));
    }
    Ok(-(arg / spot).ln() / tau)
}
