//! Monte Carlo reproduction of the linear-smile simulation experiment:
//! strike-linear volatility, strike-linear uniform pricing noise, seeded
//! replication and pointwise summary bands.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpdError};
use crate::estimator::{default_sigma_grid, fit, loocv_select_sigma, FitConfig, Quote};
use crate::pricing::{bs_call_price, MarketContext};

/// Synthetic market with a linear volatility smile and strike-linear
/// relative noise half-widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmileScenario {
    pub ctx: MarketContext,
    pub strike_lo: f64,
    pub strike_hi: f64,
    pub n_quotes: usize,
    pub vol_lo: f64,
    pub vol_hi: f64,
    pub noise_lo: f64,
    pub noise_hi: f64,
}

impl SmileScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.strike_lo < self.strike_hi) {
            return Err(SpdError::Domain("need strike_lo < strike_hi".into()));
        }
        if self.n_quotes < 2 {
            return Err(SpdError::Domain("need n_quotes >= 2".into()));
        }
        if !(self.vol_lo > 0.0) || !(self.vol_hi > 0.0) {
            return Err(SpdError::Domain("vols must be > 0".into()));
        }
        if self.noise_lo < 0.0 || self.noise_hi < 0.0 {
            return Err(SpdError::Domain("noise half-widths must be >= 0".into()));
        }
        Ok(())
    }

    /// Equispaced strikes, both endpoints included.
    pub fn strikes(&self) -> Vec<f64> {
        let step = (self.strike_hi - self.strike_lo) / (self.n_quotes - 1) as f64;
        (0..self.n_quotes)
            .map(|i| self.strike_lo + step * i as f64)
            .collect()
    }

    /// Annualized volatility at a strike (linear interpolation).
    pub fn vol_at(&self, strike: f64) -> f64 {
        let t = (strike - self.strike_lo) / (self.strike_hi - self.strike_lo);
        self.vol_lo + (self.vol_hi - self.vol_lo) * t
    }

    /// Relative noise half-width at a strike (linear interpolation).
    pub fn noise_at(&self, strike: f64) -> f64 {
        let t = (strike - self.strike_lo) / (self.strike_hi - self.strike_lo);
        self.noise_lo + (self.noise_hi - self.noise_lo) * t
    }

    /// Noise-free smile price at a strike.
    pub fn true_price(&self, strike: f64) -> Result<f64> {
        bs_call_price(&self.ctx, strike, self.vol_at(strike))
    }

    /// Density of the smile market via a central second difference of the
    /// exact price curve (the strike-dependent vol has no closed form).
    pub fn true_density(&self, s: f64, step: f64) -> Result<f64> {
        let growth = (self.ctx.rate * self.ctx.tau).exp();
        let c = |x: f64| self.true_price(x);
        Ok(growth * (c(s - step)? - 2.0 * c(s)? + c(s + step)?) / (step * step))
    }
}

/// The S&P-style scenario: spot 1365, rate 4.5%, dividend 2.5%, 30 days,
/// 25 strikes on [1000, 1700], vol 40% -> 20%, noise 3% -> 18%.
pub fn asd_scenario() -> SmileScenario {
    SmileScenario {
        ctx: MarketContext::new(1365.0, 0.045, 0.025, 30.0 / 365.0).unwrap(),
        strike_lo: 1000.0,
        strike_hi: 1700.0,
        n_quotes: 25,
        vol_lo: 0.40,
        vol_hi: 0.20,
        noise_lo: 0.03,
        noise_hi: 0.18,
    }
}

/// Draw one set of noisy quotes. Deterministic for a fixed seed: each
/// quote adds U ~ Uniform(-p C*, +p C*) to the smile price, floored at 0.
pub fn simulate_quotes(scenario: &SmileScenario, seed: u64) -> Result<Vec<Quote>> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    scenario
        .strikes()
        .into_iter()
        .map(|x| {
            let ideal = scenario.true_price(x)?;
            let half_width = scenario.noise_at(x) * ideal;
            let u: f64 = rng.gen_range(-1.0..1.0);
            Quote::unit(x, (ideal + u * half_width).max(0.0))
        })
        .collect()
}

/// How the component scale is chosen for each simulated fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaSelection {
    /// Use `fit_config.sigma_floor` as-is.
    FromConfig,
    /// Per run: leave-one-out cross validation over the default grid
    /// anchored on the Black-Scholes baseline fit.
    LoocvDefaultGrid,
}

/// Monte Carlo summary over all successful runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudyReport {
    pub strike_grid: Vec<f64>,
    pub density_grid: Vec<f64>,
    pub true_price: Vec<f64>,
    pub true_density: Vec<f64>,
    pub price_mean: Vec<f64>,
    pub price_lo: Vec<f64>,
    pub price_hi: Vec<f64>,
    pub density_mean: Vec<f64>,
    pub density_lo: Vec<f64>,
    pub density_hi: Vec<f64>,
    /// Per-run integrated squared price error over the strike grid.
    pub price_ise: Vec<f64>,
    /// Per-run integrated squared density error over the density grid.
    pub density_ise: Vec<f64>,
    pub seeds: Vec<u64>,
    pub failed_runs: usize,
}

struct RunOutcome {
    seed: u64,
    prices: Vec<f64>,
    densities: Vec<f64>,
    price_ise: f64,
    density_ise: f64,
}

const DENSITY_FD_STEP: f64 = 0.01;

fn trapezoid_ise(grid: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 1..grid.len() {
        let e0 = (a[i - 1] - b[i - 1]).powi(2);
        let e1 = (a[i] - b[i]).powi(2);
        acc += 0.5 * (e0 + e1) * (grid[i] - grid[i - 1]);
    }
    acc
}

/// Linear-interpolated quantile of an unsorted sample.
fn quantile(samples: &mut [f64], q: f64) -> f64 {
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = samples.len();
    if n == 1 {
        return samples[0];
    }
    let pos = q * (n - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < n {
        samples[i] * (1.0 - frac) + samples[i + 1] * frac
    } else {
        samples[n - 1]
    }
}

/// Run `n_runs` independent simulate-fit cycles with seeds
/// seed0, seed0+1, ... and aggregate pointwise statistics.
///
/// Individual run failures are excluded and counted; the study aborts
/// only when more than 10% of runs fail.
pub fn monte_carlo_study(
    scenario: &SmileScenario,
    n_runs: usize,
    fit_config: &FitConfig,
    sigma_selection: SigmaSelection,
    density_grid: &[f64],
    seed0: u64,
) -> Result<StudyReport> {
    if n_runs < 1 {
        return Err(SpdError::Domain("need n_runs >= 1".into()));
    }
    scenario.validate()?;
    if density_grid.len() < 2 {
        return Err(SpdError::Domain("density grid needs at least 2 points".into()));
    }
    let strike_grid = scenario.strikes();
    let true_price: Vec<f64> = strike_grid
        .iter()
        .map(|&x| scenario.true_price(x))
        .collect::<Result<_>>()?;
    let true_density: Vec<f64> = density_grid
        .iter()
        .map(|&s| scenario.true_density(s, DENSITY_FD_STEP))
        .collect::<Result<_>>()?;

    let outcomes: Vec<Result<RunOutcome>> = (0..n_runs)
        .into_par_iter()
        .map(|k| {
            let seed = seed0 + k as u64;
            let quotes = simulate_quotes(scenario, seed)?;
            let mut cfg = fit_config.clone();
            if sigma_selection == SigmaSelection::LoocvDefaultGrid {
                let grid = default_sigma_grid(&quotes, &scenario.ctx, cfg.weight_mode)?;
                let (sigma, _) = loocv_select_sigma(&quotes, &scenario.ctx, &cfg, &grid)?;
                cfg.sigma_floor = sigma;
            }
            let res = fit(&quotes, &scenario.ctx, &cfg)?;
            let prices: Vec<f64> = strike_grid
                .iter()
                .map(|&x| res.model.call_price(x))
                .collect::<Result<_>>()?;
            let densities: Vec<f64> = density_grid
                .iter()
                .map(|&s| res.model.density(s))
                .collect::<Result<_>>()?;
            let price_ise = trapezoid_ise(&strike_grid, &prices, &true_price);
            let density_ise = trapezoid_ise(density_grid, &densities, &true_density);
            Ok(RunOutcome { seed, prices, densities, price_ise, density_ise })
        })
        .collect();

    let mut runs = Vec::with_capacity(n_runs);
    let mut failed = 0usize;
    for o in outcomes {
        match o {
            Ok(r) => runs.push(r),
            Err(_) => failed += 1,
        }
    }
    if failed * 10 > n_runs {
        return Err(SpdError::StudyFailure { failed, total: n_runs });
    }

    let pointwise = |extract: &dyn Fn(&RunOutcome) -> &[f64], len: usize| {
        let mut mean = vec![0.0; len];
        let mut lo = vec![0.0; len];
        let mut hi = vec![0.0; len];
        for p in 0..len {
            let mut col: Vec<f64> = runs.iter().map(|r| extract(r)[p]).collect();
            mean[p] = col.iter().sum::<f64>() / col.len() as f64;
            lo[p] = quantile(&mut col, 0.025);
            hi[p] = quantile(&mut col, 0.975);
        }
        (mean, lo, hi)
    };
    let (price_mean, price_lo, price_hi) =
        pointwise(&|r: &RunOutcome| r.prices.as_slice(), strike_grid.len());
    let (density_mean, density_lo, density_hi) =
        pointwise(&|r: &RunOutcome| r.densities.as_slice(), density_grid.len());

    Ok(StudyReport {
        strike_grid,
        density_grid: density_grid.to_vec(),
        true_price,
        true_density,
        price_mean,
        price_lo,
        price_hi,
        density_mean,
        density_lo,
        density_hi,
        price_ise: runs.iter().map(|r| r.price_ise).collect(),
        density_ise: runs.iter().map(|r| r.density_ise).collect(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        failed_runs: failed,
    })
}
