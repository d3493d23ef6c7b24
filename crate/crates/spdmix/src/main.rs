//! Command-line interface: fit, eval, baselines, simulation and parity.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spdmix::baselines::{fit_black_scholes, naive_second_difference_spd};
use spdmix::error::{Result, SpdError};
use spdmix::estimator::{
    default_sigma_grid, fit, loocv_select_sigma, FitConfig, Quote, WeightMode,
};
use spdmix::io::{read_quotes_file, CvDiagnostics, ModelDocument};
use spdmix::pricing::{implied_dividend_from_parity, MarketContext};
use spdmix::simulation::{asd_scenario, monte_carlo_study, SigmaSelection};

#[derive(Parser)]
#[command(name = "spdmix", about = "State price density estimation from call option quotes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MarketArgs {
    /// Current underlying price.
    #[arg(long)]
    spot: f64,
    /// Continuously compounded annual risk-free rate.
    #[arg(long)]
    rate: f64,
    /// Continuously compounded annual dividend yield.
    #[arg(long, default_value_t = 0.0)]
    div: f64,
    /// Time to maturity in years (ACT/365).
    #[arg(long)]
    tau: f64,
}

impl MarketArgs {
    fn context(&self) -> Result<MarketContext> {
        MarketContext::new(self.spot, self.rate, self.div, self.tau)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightArg {
    Unit,
    InversePrice,
}

impl From<WeightArg> for WeightMode {
    fn from(w: WeightArg) -> Self {
        match w {
            WeightArg::Unit => WeightMode::Unit,
            WeightArg::InversePrice => WeightMode::InversePrice,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum XAxis {
    /// Terminal price S_T.
    Price,
    /// Excess log return ln(S_T/S_t) - r tau.
    ExcessLogReturn,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a lognormal mixture to a quote file.
    Fit {
        /// Quote CSV with columns strike,price[,weight[,put_price]].
        #[arg(long)]
        quotes: PathBuf,
        #[command(flatten)]
        market: MarketArgs,
        /// Component scale floor (log-return units over the horizon).
        #[arg(long, conflicts_with = "cv", required_unless_present = "cv")]
        sigma_floor: Option<f64>,
        /// Select the scale floor by leave-one-out cross validation.
        #[arg(long)]
        cv: bool,
        /// Enforce E[S_T] equal to this forward price (bare flag uses
        /// the context forward S e^{(r-div) tau}).
        #[arg(long, num_args = 0..=1, default_missing_value = "-1")]
        forward_constraint: Option<f64>,
        #[arg(long, value_enum, default_value = "unit")]
        weights: WeightArg,
        /// Number of mixture components (default: one more than the quote count).
        #[arg(long)]
        components: Option<usize>,
        #[arg(long, default_value_t = 1)]
        newton_iters: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a fitted model on a grid and write abscissa,value CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Price grid lo:hi:n (strikes).
        #[arg(long, conflicts_with = "density_grid", required_unless_present = "density_grid")]
        price_grid: Option<String>,
        /// Density grid lo:hi:n (lo may be negative on the return axis).
        #[arg(long, allow_hyphen_values = true)]
        density_grid: Option<String>,
        /// Abscissa units for the density grid.
        #[arg(long, value_enum, default_value = "price")]
        x_axis: XAxis,
        #[arg(long)]
        out: PathBuf,
    },
    /// Best single-volatility Black-Scholes fit.
    BaselineBs {
        #[arg(long)]
        quotes: PathBuf,
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long, value_enum, default_value = "unit")]
        weights: WeightArg,
        /// Optional JSON output file for {vol, objective}.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Naive second-difference density estimate.
    BaselineNaive {
        #[arg(long)]
        quotes: PathBuf,
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo study on the linear-smile scenario.
    Simulate {
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 25)]
        n_quotes: usize,
        /// Fix the component scale instead of per-run cross validation.
        #[arg(long)]
        sigma_floor: Option<f64>,
        #[arg(long)]
        spot: Option<f64>,
        #[arg(long)]
        rate: Option<f64>,
        #[arg(long)]
        div: Option<f64>,
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        strike_lo: Option<f64>,
        #[arg(long)]
        strike_hi: Option<f64>,
        #[arg(long)]
        vol_lo: Option<f64>,
        #[arg(long)]
        vol_hi: Option<f64>,
        #[arg(long)]
        noise_lo: Option<f64>,
        #[arg(long)]
        noise_hi: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Implied dividend yield from put-call parity.
    Parity {
        #[arg(long)]
        call: f64,
        #[arg(long)]
        put: f64,
        #[arg(long)]
        spot: f64,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        strike: f64,
    },
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let err = || SpdError::Domain(format!("grid must be lo:hi:n, got '{spec}'"));
    if parts.len() != 3 {
        return Err(err());
    }
    let lo: f64 = parts[0].parse().map_err(|_| err())?;
    let hi: f64 = parts[1].parse().map_err(|_| err())?;
    let n: usize = parts[2].parse().map_err(|_| err())?;
    if n < 2 || !(lo < hi) {
        return Err(err());
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|i| lo + step * i as f64).collect())
}

fn load_quotes(path: &PathBuf) -> Result<Vec<Quote>> {
    read_quotes_file(path)?
        .iter()
        .map(|r| r.to_quote())
        .collect()
}

fn write_grid_csv(path: &PathBuf, rows: &[(f64, f64)]) -> Result<()> {
    let mut text = String::from("abscissa,value\n");
    for (x, v) in rows {
        text.push_str(&format!("{x},{v}\n"));
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit {
            quotes,
            market,
            sigma_floor,
            cv,
            forward_constraint,
            weights,
            components,
            newton_iters,
            out,
        } => {
            let ctx = market.context()?;
            let quotes = load_quotes(&quotes)?;
            let mode: WeightMode = weights.into();

            let mut cfg = FitConfig::for_market(&ctx, sigma_floor.unwrap_or(0.1));
            cfg.weight_mode = mode;
            cfg.n_components = components;
            cfg.newton_iters = newton_iters;
            cfg.forward_constraint = forward_constraint.map(|f| {
                if f < 0.0 {
                    ctx.forward()
                } else {
                    f
                }
            });

            let cv_diag = if cv {
                let grid = default_sigma_grid(&quotes, &ctx, mode)?;
                let (selected, scores) = loocv_select_sigma(&quotes, &ctx, &cfg, &grid)?;
                cfg.sigma_floor = selected;
                Some(CvDiagnostics { sigma_grid: grid, scores, selected })
            } else {
                None
            };

            let result = fit(&quotes, &ctx, &cfg)?;
            let doc = ModelDocument::from_fit(&result, cfg.sigma_floor, cv_diag);
            std::fs::write(&out, doc.to_json()?)?;
            println!(
                "fitted {} components, objective {:.6e}, kkt {:.3e}",
                doc.components.len(),
                result.objective,
                result.kkt_residual
            );
            Ok(())
        }
        Command::Eval { model, price_grid, density_grid, x_axis, out } => {
            let text = std::fs::read_to_string(&model)?;
            let doc = ModelDocument::from_json(&text)?;
            let model = doc.to_model()?;
            let rows: Vec<(f64, f64)> = if let Some(spec) = price_grid {
                parse_grid(&spec)?
                    .into_iter()
                    .map(|x| model.call_price(x).map(|p| (x, p)))
                    .collect::<Result<_>>()?
            } else {
                let spec = density_grid.expect("clap enforces one grid");
                let grid = parse_grid(&spec)?;
                match x_axis {
                    XAxis::Price => grid
                        .into_iter()
                        .map(|s| model.density(s).map(|d| (s, d)))
                        .collect::<Result<_>>()?,
                    XAxis::ExcessLogReturn => {
                        // x = ln(S_T/S_t) - r tau; report the density of x,
                        // i.e. the terminal-price density times dS/dx = S_T.
                        let ctx = model.context;
                        grid.into_iter()
                            .map(|x| {
                                let s = ctx.spot * (x + ctx.rate * ctx.tau).exp();
                                model.density(s).map(|d| (x, d * s))
                            })
                            .collect::<Result<_>>()?
                    }
                }
            };
            write_grid_csv(&out, &rows)
        }
        Command::BaselineBs { quotes, market, weights, out } => {
            let ctx = market.context()?;
            let quotes = load_quotes(&quotes)?;
            let bs = fit_black_scholes(&quotes, &ctx, weights.into())?;
            println!("vol {} objective {}", bs.vol, bs.objective);
            if let Some(out) = out {
                let json = format!(
                    "{{\n  \"vol\": {},\n  \"objective\": {}\n}}\n",
                    serde_json::to_string(&bs.vol)?,
                    serde_json::to_string(&bs.objective)?
                );
                std::fs::write(out, json)?;
            }
            Ok(())
        }
        Command::BaselineNaive { quotes, market, out } => {
            let ctx = market.context()?;
            let quotes = load_quotes(&quotes)?;
            let spd = naive_second_difference_spd(&quotes, &ctx)?;
            let rows: Vec<(f64, f64)> = spd
                .grid[1..spd.grid.len() - 1]
                .iter()
                .zip(&spd.values)
                .map(|(&x, &v)| (x, v))
                .collect();
            write_grid_csv(&out, &rows)
        }
        Command::Simulate {
            runs,
            seed,
            n_quotes,
            sigma_floor,
            spot,
            rate,
            div,
            tau,
            strike_lo,
            strike_hi,
            vol_lo,
            vol_hi,
            noise_lo,
            noise_hi,
            out,
        } => {
            let mut scenario = asd_scenario();
            scenario.n_quotes = n_quotes;
            scenario.ctx = MarketContext::new(
                spot.unwrap_or(scenario.ctx.spot),
                rate.unwrap_or(scenario.ctx.rate),
                div.unwrap_or(scenario.ctx.dividend_yield),
                tau.unwrap_or(scenario.ctx.tau),
            )?;
            scenario.strike_lo = strike_lo.unwrap_or(scenario.strike_lo);
            scenario.strike_hi = strike_hi.unwrap_or(scenario.strike_hi);
            scenario.vol_lo = vol_lo.unwrap_or(scenario.vol_lo);
            scenario.vol_hi = vol_hi.unwrap_or(scenario.vol_hi);
            scenario.noise_lo = noise_lo.unwrap_or(scenario.noise_lo);
            scenario.noise_hi = noise_hi.unwrap_or(scenario.noise_hi);

            let (cfg, selection) = match sigma_floor {
                Some(s) => (
                    FitConfig::for_market(&scenario.ctx, s),
                    SigmaSelection::FromConfig,
                ),
                None => (
                    FitConfig::for_market(&scenario.ctx, 0.25 * scenario.ctx.tau.sqrt()),
                    SigmaSelection::LoocvDefaultGrid,
                ),
            };
            let density_grid: Vec<f64> = {
                let lo = scenario.strike_lo;
                let hi = scenario.strike_hi;
                (0..101).map(|i| lo + (hi - lo) * i as f64 / 100.0).collect()
            };
            let report =
                monte_carlo_study(&scenario, runs, &cfg, selection, &density_grid, seed)?;
            let mut json = serde_json::to_string_pretty(&report)?;
            json.push('\n');
            std::fs::write(&out, json)?;
            println!(
                "{} runs completed, {} failed, median price ISE {:.6e}",
                report.seeds.len(),
                report.failed_runs,
                median(&report.price_ise)
            );
            Ok(())
        }
        Command::Parity { call, put, spot, rate, tau, strike } => {
            let delta = implied_dividend_from_parity(call, put, spot, rate, tau, strike)?;
            println!("{delta}");
            Ok(())
        }
    }
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn main() -> ExitCode {
    // Optional override for simulate parallelism.
    if let Ok(threads) = std::env::var("THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("ERROR {}: {}", err.code(), err);
            ExitCode::FAILURE
        }
    }
}
