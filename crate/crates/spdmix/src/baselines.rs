//! Reference estimators: the single-volatility Black-Scholes least squares
//! fit and the naive interpolate-then-differentiate density.

use crate::error::{Result, SpdError};
use crate::estimator::{effective_weights, Quote, WeightMode};
use crate::pricing::{bs_call_price, MarketContext};

/// Best single-volatility Black-Scholes fit.
#[derive(Debug, Clone, Copy)]
pub struct BsFit {
    /// Annualized implied volatility minimizing the weighted least squares.
    pub vol: f64,
    /// Weighted residual sum of squares divided by n.
    pub objective: f64,
}

/// Density estimates from divided second differences of raw quotes.
///
/// Values correspond to the interior grid points and may be negative;
/// no clipping is applied.
#[derive(Debug, Clone)]
pub struct GridDensity {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

const VOL_LO: f64 = 1e-4;
const VOL_HI: f64 = 5.0;
const SCAN_POINTS: usize = 64;

/// Fit a single Black-Scholes volatility by weighted least squares.
///
/// The objective is scanned on a coarse 64-point grid over [1e-4, 5] and
/// refined by golden-section search around the best point to |dvol| <= 1e-8.
pub fn fit_black_scholes(
    quotes: &[Quote],
    ctx: &MarketContext,
    mode: WeightMode,
) -> Result<BsFit> {
    if quotes.is_empty() {
        return Err(SpdError::EmptyQuotes);
    }
    let weights = effective_weights(quotes, mode);
    let objective = |vol: f64| -> f64 {
        let mut acc = 0.0;
        for (q, &w) in quotes.iter().zip(&weights) {
            let fitted = bs_call_price(ctx, q.strike, vol).unwrap();
            acc += w * (q.price - fitted).powi(2);
        }
        acc / quotes.len() as f64
    };

    let step = (VOL_HI - VOL_LO) / (SCAN_POINTS - 1) as f64;
    let mut best_idx = 0;
    let mut best_val = f64::INFINITY;
    for i in 0..SCAN_POINTS {
        let v = objective(VOL_LO + step * i as f64);
        if v < best_val {
            best_val = v;
            best_idx = i;
        }
    }
    let mut a = (VOL_LO + step * (best_idx as f64 - 1.0)).max(VOL_LO);
    let mut b = (VOL_LO + step * (best_idx as f64 + 1.0)).min(VOL_HI);

    // Golden-section search on [a, b].
    let inv_phi = 0.618_033_988_749_894_9;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = objective(c);
    let mut fd = objective(d);
    while b - a > 1e-8 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
    }
    let vol = 0.5 * (a + b);
    Ok(BsFit { vol, objective: objective(vol) })
}

/// Naive state price density: e^{r tau} times the three-point divided
/// second difference of the observed prices at each interior strike.
///
/// Quotes are sorted by strike; exact duplicate strikes are merged by
/// averaging their prices. Negative values are returned as-is.
pub fn naive_second_difference_spd(quotes: &[Quote], ctx: &MarketContext) -> Result<GridDensity> {
    let mut sorted: Vec<(f64, f64)> = quotes.iter().map(|q| (q.strike, q.price)).collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut grid: Vec<f64> = Vec::new();
    let mut prices: Vec<f64> = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let x = sorted[i].0;
        let mut sum = 0.0;
        let mut count = 0usize;
        while i < sorted.len() && sorted[i].0 == x {
            sum += sorted[i].1;
            count += 1;
            i += 1;
        }
        grid.push(x);
        prices.push(sum / count as f64);
    }
    if grid.len() < 3 {
        return Err(SpdError::TooFewStrikes(grid.len()));
    }

    let growth = (ctx.rate * ctx.tau).exp();
    let mut values = Vec::with_capacity(grid.len() - 2);
    for k in 1..grid.len() - 1 {
        let hl = grid[k] - grid[k - 1];
        let hr = grid[k + 1] - grid[k];
        let second = 2.0
            * ((prices[k + 1] - prices[k]) / hr - (prices[k] - prices[k - 1]) / hl)
            / (hl + hr);
        values.push(growth * second);
    }
    Ok(GridDensity { grid, values })
}
