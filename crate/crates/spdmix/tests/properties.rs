//! Randomized property tests for the library-wide invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use spdmix::pricing::{MarketContext, MixtureComponent, MixtureModel};
use spdmix::qp::solve_weights_qp;

fn arb_context() -> impl Strategy<Value = MarketContext> {
    (
        10.0f64..5000.0,
        0.0f64..0.10,
        0.0f64..0.06,
        0.02f64..2.0,
    )
        .prop_map(|(spot, rate, div, tau)| MarketContext::new(spot, rate, div, tau).unwrap())
}

fn arb_mixture() -> impl Strategy<Value = MixtureModel> {
    (
        arb_context(),
        prop::collection::vec((-0.4f64..0.4, 0.02f64..0.6, 0.05f64..1.0), 1..6),
    )
        .prop_map(|(ctx, raw)| {
            let total: f64 = raw.iter().map(|r| r.2).sum();
            let components: Vec<MixtureComponent> = raw
                .iter()
                .map(|&(mu, sigma, _)| MixtureComponent::new(mu, sigma).unwrap())
                .collect();
            let weights: Vec<f64> = raw.iter().map(|r| r.2 / total).collect();
            MixtureModel::new(components, weights, ctx).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Call prices are nonnegative, nonincreasing and convex in strike,
    /// with slope bounded by the discount factor.
    #[test]
    fn mixture_prices_are_arbitrage_free(model in arb_mixture(), lo_frac in 0.3f64..0.9) {
        let ctx = model.context;
        let lo = lo_frac * ctx.spot;
        let hi = 2.5 * ctx.spot;
        let n = 60;
        let df = ctx.discount();
        let mut prev: Option<(f64, f64)> = None;
        let mut prev_slope = f64::NEG_INFINITY;
        for i in 0..n {
            let x = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let p = model.call_price(x).unwrap();
            prop_assert!(p >= 0.0);
            let (slope, curv) = model.price_derivatives(x).unwrap();
            prop_assert!(slope <= 1e-12 && slope >= -df - 1e-12);
            prop_assert!(curv >= 0.0);
            prop_assert!(model.density(x).unwrap() >= 0.0);
            if let Some((_, pp)) = prev {
                prop_assert!(p <= pp + 1e-9 * (1.0 + pp));
            }
            // Convexity: the analytic slope is nondecreasing in strike.
            prop_assert!(slope >= prev_slope - 1e-12);
            prev_slope = slope;
            prev = Some((x, p));
        }
    }

    /// The weight solver always returns a point on the simplex with a
    /// certified KKT residual.
    #[test]
    fn qp_solutions_live_on_the_simplex(
        n in 3usize..9,
        m in 2usize..7,
        seed in any::<u64>(),
    ) {
        use rand::prelude::*;
        use rand_chacha::ChaCha8Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, m, |_, _| rng.gen_range(0.0..1.0));
        let prices = DVector::from_fn(n, |_, _| rng.gen_range(0.0..1.0));
        let w = DVector::from_fn(n, |_, _| rng.gen_range(0.1..2.0));
        let sol = solve_weights_qp(&a, &prices, &w, None, 1e-8).unwrap();
        let total: f64 = sol.weights.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-8);
        prop_assert!(sol.weights.iter().all(|&p| p >= -1e-12));
        prop_assert!(sol.kkt.max() <= 1e-8);
    }

    /// Quote CSV text written from rows parses back to the same rows.
    #[test]
    fn quote_csv_roundtrip(
        rows in prop::collection::vec((1.0f64..5000.0, 0.0f64..2000.0, 0.0f64..10.0), 1..20)
    ) {
        let mut text = String::from("strike,price,weight\n");
        for (x, p, w) in &rows {
            text.push_str(&format!("{x},{p},{w}\n"));
        }
        let parsed = spdmix::io::parse_quotes_csv(std::io::Cursor::new(text)).unwrap();
        prop_assert_eq!(parsed.len(), rows.len());
        for (row, &(x, p, w)) in parsed.iter().zip(&rows) {
            prop_assert_eq!(row.strike, x);
            prop_assert_eq!(row.price, p);
            prop_assert_eq!(row.weight, w);
        }
    }
}
