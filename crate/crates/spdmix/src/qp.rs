//! Simplex-constrained weighted least squares.
//!
//! Solves min_pi sum_i w_i (c_i - (A pi)_i)^2 subject to pi >= 0,
//! sum pi = 1 and an optional extra equality row, with a primal
//! active-set method on the nonnegativity bounds. Every solution is
//! returned together with a KKT certificate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SpdError};

/// One extra linear equality `coeffs . pi = rhs` (the forward-price row).
#[derive(Debug, Clone)]
pub struct EqualityConstraint {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

/// KKT residuals of a returned solution, relative to the problem scale.
#[derive(Debug, Clone, Copy)]
pub struct KktResidual {
    /// Stationarity: gradient minus constraint multipliers on free
    /// coordinates, plus any dual-feasibility violation on active ones.
    pub stationarity: f64,
    /// Primal feasibility: equality violations and bound violations.
    pub feasibility: f64,
    /// Complementary slackness max |pi_i lambda_i|.
    pub complementarity: f64,
}

impl KktResidual {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub weights: Vec<f64>,
    pub kkt: KktResidual,
    pub iterations: usize,
}

/// Solve the simplex-constrained weighted least squares problem.
///
/// `a` is n x m (component prices per quote), `prices` the n observed
/// prices, `obs_weights` the n nonnegative observation weights. Residuals
/// of the certificate are measured after rescaling the problem so that
/// matrix and price entries are O(1), making `kkt_tol` scale-free.
pub fn solve_weights_qp(
    a: &DMatrix<f64>,
    prices: &DVector<f64>,
    obs_weights: &DVector<f64>,
    equality: Option<&EqualityConstraint>,
    kkt_tol: f64,
) -> Result<QpSolution> {
    let (n, m) = a.shape();
    if n == 0 || m == 0 {
        return Err(SpdError::Domain("QP needs a nonempty design matrix".into()));
    }
    if prices.len() != n || obs_weights.len() != n {
        return Err(SpdError::Domain("QP dimension mismatch".into()));
    }
    if a.iter().any(|v| !v.is_finite()) || prices.iter().any(|v| !v.is_finite()) {
        return Err(SpdError::Domain("QP inputs must be finite".into()));
    }
    if obs_weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(SpdError::Domain("QP observation weights must be >= 0".into()));
    }
    if let Some(eq) = equality {
        if eq.coeffs.len() != m {
            return Err(SpdError::Domain("equality coefficient length mismatch".into()));
        }
    }

    // Rescale so entries are O(1): divide A and c by the data magnitude,
    // observation weights by their maximum.
    let data_scale = a
        .iter()
        .chain(prices.iter())
        .fold(0.0f64, |acc, &v| acc.max(v.abs()))
        .max(1e-300);
    let w_scale = obs_weights.iter().fold(0.0f64, |acc, &w| acc.max(w)).max(1e-300);
    let sqrt_w: Vec<f64> = obs_weights.iter().map(|&w| (w / w_scale).sqrt()).collect();
    let mut a_s = a.clone() / data_scale;
    let mut c_s = prices.clone() / data_scale;
    for i in 0..n {
        for j in 0..m {
            a_s[(i, j)] *= sqrt_w[i];
        }
        c_s[i] *= sqrt_w[i];
    }

    let q_mat = a_s.transpose() * &a_s;
    let q_lin = -(a_s.transpose() * &c_s);

    // Equality rows: the simplex row plus the optional scaled extra row.
    let k = if equality.is_some() { 2 } else { 1 };
    let mut e = DMatrix::zeros(k, m);
    let mut d = DVector::zeros(k);
    for j in 0..m {
        e[(0, j)] = 1.0;
    }
    d[0] = 1.0;
    if let Some(eq) = equality {
        let c_scale = eq
            .coeffs
            .iter()
            .fold(0.0f64, |acc, &v| acc.max(v.abs()))
            .max(1e-300);
        for j in 0..m {
            e[(1, j)] = eq.coeffs[j] / c_scale;
        }
        d[1] = eq.rhs / c_scale;
    }

    // Initial feasible point.
    let mut pi = DVector::from_element(m, 1.0 / m as f64);
    if let Some(eq) = equality {
        let (mut j_lo, mut j_hi) = (0usize, 0usize);
        for j in 1..m {
            if eq.coeffs[j] < eq.coeffs[j_lo] {
                j_lo = j;
            }
            if eq.coeffs[j] > eq.coeffs[j_hi] {
                j_hi = j;
            }
        }
        let (lo, hi) = (eq.coeffs[j_lo], eq.coeffs[j_hi]);
        let slack = 1e-10 * (1.0 + eq.rhs.abs());
        if eq.rhs < lo - slack || eq.rhs > hi + slack {
            return Err(SpdError::InfeasibleConstraint { target: eq.rhs, lo, hi });
        }
        if hi - lo < slack {
            // All coefficients coincide; the uniform point already satisfies it.
        } else {
            let theta = ((eq.rhs - lo) / (hi - lo)).clamp(0.0, 1.0);
            pi.fill(0.0);
            pi[j_hi] = theta;
            pi[j_lo] += 1.0 - theta;
        }
    }

    let mut active: Vec<bool> = pi.iter().map(|&p| p == 0.0).collect();
    let objective = |x: &DVector<f64>| -> f64 {
        let r = &a_s * x - &c_s;
        0.5 * r.dot(&r)
    };

    let ridge0 = 1e-13 * (1.0 + q_mat.trace() / m as f64);
    let max_iter = 50 * m + 100;
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        let free: Vec<usize> = (0..m).filter(|&j| !active[j]).collect();
        let f = free.len();

        // Equality-constrained subproblem on the free set via the KKT system
        // [Q_FF + ridge I, E_F'; E_F, 0] [x; nu] = [-q_F; d].
        let solve_sub = |ridge: f64| -> Option<(DVector<f64>, DVector<f64>)> {
            let dim = f + k;
            let mut kkt = DMatrix::zeros(dim, dim);
            let mut rhs = DVector::zeros(dim);
            for (p, &jp) in free.iter().enumerate() {
                for (r, &jr) in free.iter().enumerate() {
                    kkt[(p, r)] = q_mat[(jp, jr)];
                }
                kkt[(p, p)] += ridge;
                for row in 0..k {
                    kkt[(p, f + row)] = e[(row, jp)];
                    kkt[(f + row, p)] = e[(row, jp)];
                }
                rhs[p] = -q_lin[jp];
            }
            for row in 0..k {
                rhs[f + row] = d[row];
            }
            let sol = kkt.clone().lu().solve(&rhs).or_else(|| {
                kkt.svd(true, true).solve(&rhs, 1e-13).ok()
            })?;
            let x = DVector::from_fn(f, |i, _| sol[i]);
            // The assembled system returns the negated equality multipliers
            // under the g = E' nu stationarity convention used below.
            let nu = DVector::from_fn(k, |i, _| -sol[f + i]);
            // Reject solves that lost the equality constraints.
            let mut viol = 0.0f64;
            for row in 0..k {
                let mut acc = 0.0;
                for (p, &jp) in free.iter().enumerate() {
                    acc += e[(row, jp)] * x[p];
                }
                viol = viol.max((acc - d[row]).abs());
            }
            if viol > 1e-7 || x.iter().any(|v| !v.is_finite()) {
                None
            } else {
                Some((x, nu))
            }
        };

        let mut ridge = ridge0;
        let mut sub = None;
        for _ in 0..6 {
            if let Some(s) = solve_sub(ridge) {
                sub = Some(s);
                break;
            }
            ridge *= 1e3;
        }
        let (x_f, nu) = match sub {
            Some(s) => s,
            None => break,
        };

        let step_norm = free
            .iter()
            .enumerate()
            .fold(0.0f64, |acc, (p, &j)| acc.max((x_f[p] - pi[j]).abs()));

        if step_norm <= 1e-12 {
            // At the subproblem optimum: check multipliers on active bounds.
            let grad = &q_mat * &pi + &q_lin;
            let mut worst = f64::INFINITY;
            let mut worst_j = None;
            for j in 0..m {
                if active[j] {
                    let mut lam = grad[j];
                    for row in 0..k {
                        lam -= e[(row, j)] * nu[row];
                    }
                    if lam < worst {
                        worst = lam;
                        worst_j = Some(j);
                    }
                }
            }
            match worst_j {
                Some(j) if worst < -kkt_tol => {
                    active[j] = false;
                    continue;
                }
                _ => {
                    let kkt = certificate(&q_mat, &q_lin, &e, &d, &pi, &active);
                    if kkt.max() <= kkt_tol {
                        return Ok(QpSolution {
                            weights: pi.iter().copied().collect(),
                            kkt,
                            iterations,
                        });
                    }
                    break;
                }
            }
        }

        // Step toward the subproblem solution, stopping at the first bound.
        let mut alpha = 1.0f64;
        let mut blocking = None;
        for (p, &j) in free.iter().enumerate() {
            let dir = x_f[p] - pi[j];
            if dir < -1e-15 {
                let limit = pi[j] / -dir;
                if limit < alpha {
                    alpha = limit;
                    blocking = Some(j);
                }
            }
        }

        let before = objective(&pi);
        let mut trial = pi.clone();
        for (p, &j) in free.iter().enumerate() {
            trial[j] = pi[j] + alpha * (x_f[p] - pi[j]);
        }
        if let Some(j) = blocking {
            trial[j] = 0.0;
        }
        // The exact subproblem step never increases the objective; a failed
        // solve could, so fall back to halving before accepting.
        let mut halved = 0;
        while objective(&trial) > before + 1e-12 * (1.0 + before) && halved < 40 {
            alpha *= 0.5;
            blocking = None;
            for (p, &j) in free.iter().enumerate() {
                trial[j] = pi[j] + alpha * (x_f[p] - pi[j]);
            }
            halved += 1;
        }
        pi = trial;
        if let Some(j) = blocking {
            active[j] = true;
        }
    }

    let kkt = certificate(&q_mat, &q_lin, &e, &d, &pi, &active);
    if kkt.max() <= kkt_tol {
        return Ok(QpSolution {
            weights: pi.iter().copied().collect(),
            kkt,
            iterations,
        });
    }
    Err(SpdError::QpNonConvergence { residual: kkt.max(), iterations })
}

/// Compute the KKT certificate at `pi`, recovering the equality
/// multipliers by least squares on the free coordinates.
fn certificate(
    q_mat: &DMatrix<f64>,
    q_lin: &DVector<f64>,
    e: &DMatrix<f64>,
    d: &DVector<f64>,
    pi: &DVector<f64>,
    active: &[bool],
) -> KktResidual {
    let m = pi.len();
    let k = e.nrows();
    let grad = q_mat * pi + q_lin;
    let g_scale = 1.0 + grad.amax();

    // nu = argmin || E_F' nu - g_F ||.
    let free: Vec<usize> = (0..m).filter(|&j| !active[j]).collect();
    let nu = if free.is_empty() {
        DVector::zeros(k)
    } else {
        let ef = DMatrix::from_fn(free.len(), k, |i, j| e[(j, free[i])]);
        let gf = DVector::from_fn(free.len(), |i, _| grad[free[i]]);
        ef.svd(true, true)
            .solve(&gf, 1e-13)
            .unwrap_or_else(|_| DVector::zeros(k))
    };

    let mut stationarity = 0.0f64;
    let mut complementarity = 0.0f64;
    for j in 0..m {
        let mut lam = grad[j];
        for row in 0..k {
            lam -= e[(row, j)] * nu[row];
        }
        if active[j] {
            // Dual feasibility on active bounds.
            stationarity = stationarity.max((-lam).max(0.0) / g_scale);
        } else {
            stationarity = stationarity.max(lam.abs() / g_scale);
        }
        complementarity = complementarity.max((pi[j] * lam).abs() / g_scale);
    }

    let mut feasibility = (-pi.min()).max(0.0);
    for row in 0..e.nrows() {
        let mut acc = 0.0;
        for j in 0..m {
            acc += e[(row, j)] * pi[j];
        }
        feasibility = feasibility.max((acc - d[row]).abs() / (1.0 + d[row].abs()));
    }

    KktResidual { stationarity, feasibility, complementarity }
}
