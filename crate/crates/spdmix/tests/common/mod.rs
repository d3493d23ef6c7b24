//! Independent oracles shared by the integration test suites.

use nalgebra::{DMatrix, DVector};
use spdmix::pricing::{MarketContext, MixtureComponent};
use spdmix::qp::EqualityConstraint;

/// Recursive adaptive Simpson quadrature (Lyness error control).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, eps: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        eps: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * eps {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1)
            + recurse(f, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, m, fm, whole, eps, 60)
}

/// Price one lognormal component by numerical integration of the
/// discounted payoff against the terminal-price density, in log space.
pub fn quadrature_component_price(
    ctx: &MarketContext,
    strike: f64,
    comp: &MixtureComponent,
) -> f64 {
    let mu = comp.mu_abs(ctx);
    let sig = comp.sigma;
    let ln_x = strike.ln();
    // Integrand e^y phi decays past mu + sig^2; push the cut far into
    // the tail relative to where the mass of this integral sits.
    let z = ((ln_x - mu) / sig).max(0.0);
    let hi = mu + sig * sig + (z + 25.0) * sig;
    let integrand = |y: f64| {
        let t = (y - mu) / sig;
        ((y.exp() - strike) * (-0.5 * t * t).exp()) / (sig * (2.0 * std::f64::consts::PI).sqrt())
    };
    // Tolerance scale from a dense trapezoid pass; a 3-point estimate can
    // miss all of the mass when the integral lives in a narrow tail region.
    let n_samples = 2048;
    let h = (hi - ln_x) / n_samples as f64;
    let mut coarse = 0.0;
    for i in 0..=n_samples {
        let w = if i == 0 || i == n_samples { 0.5 } else { 1.0 };
        coarse += w * integrand(ln_x + h * i as f64);
    }
    let scale = (coarse * h).abs().max(1e-300);
    // Fixed panels keep the adaptive pass from discarding a narrow peak
    // that a handful of early probe points happen to straddle.
    let panels = 256;
    let ph = (hi - ln_x) / panels as f64;
    let mut integral = 0.0;
    for p in 0..panels {
        let a = ln_x + ph * p as f64;
        integral += adaptive_simpson(&integrand, a, a + ph, 1e-12 * scale / panels as f64);
    }
    (-ctx.rate * ctx.tau).exp() * integral
}

/// Brute-force simplex-QP oracle: enumerate every support subset, solve
/// the equality-constrained least squares on it, keep the feasible
/// minimum of the weighted objective.
pub fn enumerate_qp_oracle(
    a: &DMatrix<f64>,
    prices: &DVector<f64>,
    w: &DVector<f64>,
    equality: Option<&EqualityConstraint>,
) -> (Vec<f64>, f64) {
    let (n, m) = a.shape();
    let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|&j| mask & (1 << j) != 0).collect();
        let f = support.len();
        let k = if equality.is_some() { 2 } else { 1 };
        let dim = f + k;
        let mut asub = DMatrix::zeros(n, f);
        for i in 0..n {
            for (p, &j) in support.iter().enumerate() {
                asub[(i, p)] = sqrt_w[i] * a[(i, j)];
            }
        }
        let csub = DVector::from_fn(n, |i, _| sqrt_w[i] * prices[i]);
        let q = asub.transpose() * &asub;
        let lin = asub.transpose() * &csub;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for p in 0..f {
            for r in 0..f {
                kkt[(p, r)] = q[(p, r)];
            }
            rhs[p] = lin[p];
            kkt[(p, f)] = 1.0;
            kkt[(f, p)] = 1.0;
            if let Some(eq) = equality {
                kkt[(p, f + 1)] = eq.coeffs[support[p]];
                kkt[(f + 1, p)] = eq.coeffs[support[p]];
            }
        }
        rhs[f] = 1.0;
        if let Some(eq) = equality {
            rhs[f + 1] = eq.rhs;
        }
        let sol = match kkt.svd(true, true).solve(&rhs, 1e-12) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let mut pi = vec![0.0; m];
        let mut ok = (sol.iter().take(f).sum::<f64>() - 1.0).abs() < 1e-7;
        for (p, &j) in support.iter().enumerate() {
            if sol[p] < -1e-9 {
                ok = false;
            }
            pi[j] = sol[p].max(0.0);
        }
        if let Some(eq) = equality {
            let dot: f64 = (0..m).map(|j| eq.coeffs[j] * pi[j]).sum();
            if (dot - eq.rhs).abs() > 1e-6 * (1.0 + eq.rhs.abs()) {
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        let total: f64 = pi.iter().sum();
        for v in pi.iter_mut() {
            *v /= total;
        }
        let mut obj = 0.0;
        for i in 0..n {
            let fitted: f64 = (0..m).map(|j| a[(i, j)] * pi[j]).sum();
            obj += w[i] * (prices[i] - fitted).powi(2);
        }
        if best.as_ref().map_or(true, |(_, b)| obj < *b) {
            best = Some((pi, obj));
        }
    }
    best.expect("oracle found no feasible subset")
}
