//! Entropy-regularized optimal transport via Sinkhorn-Knopp matrix scaling.
//!
//! For a cost matrix C and marginals (p, q), the entropic problem
//!
//! ```text
//!     min_{G in Pi(p,q)}  <G, C> - lambda * H(G),
//!     H(G) = -sum_ij G_ij (ln G_ij - 1),
//! ```
//!
//! has the unique solution `G = diag(a) K diag(b)` with `K = exp(-C/lambda)`
//! elementwise, found by alternating `a <- p ./ (K b)` and `b <- q ./ (K^T a)`
//! (Sinkhorn & Knopp 1967; Cuturi 2013). This is the inner solver invoked at
//! every outer iteration of the Gromov-Wasserstein loop.
//!
//! `K` is formed literally as `exp(-C/lambda)` — no cost shifting — so a
//! too-small `lambda` can drive an entire row or column of `K` to zero. That
//! situation is reported as [`Error::NumericalUnderflow`], which is exactly
//! the trigger for the caller's fallback-`lambda` policy. A log-domain
//! (log-sum-exp) variant is available behind [`SinkhornConfig::log_domain`]
//! for small `lambda`; it is off by default to match the plain scaling form.

use ndarray::{Array1, Array2, ArrayView2};

use crate::similarity::WeightVector;
use crate::{Error, Result};

/// Marginal tolerance baked into the [`Coupling`] type invariant.
pub const MARGINAL_TOLERANCE: f64 = 1e-6;

/// A transport plan: a non-negative `n x m` matrix whose row sums are `p`
/// and column sums are `q` (within [`MARGINAL_TOLERANCE`] when produced by
/// a converged solve).
#[derive(Debug, Clone)]
pub struct Coupling {
    values: Array2<f64>,
    row_weights: WeightVector,
    col_weights: WeightVector,
}

impl Coupling {
    /// Validating constructor: entries must be finite and non-negative and
    /// both marginals must match within [`MARGINAL_TOLERANCE`].
    pub fn new(values: Array2<f64>, p: WeightVector, q: WeightVector) -> Result<Self> {
        let plan = Self::from_parts(values, p, q)?;
        let violation = plan.marginal_violation();
        if violation > MARGINAL_TOLERANCE {
            return Err(Error::Shape(format!(
                "coupling marginals violate their weights by {violation:.3e} (tolerance {MARGINAL_TOLERANCE:.0e})"
            )));
        }
        Ok(plan)
    }

    /// Constructor without the marginal check, for solver output whose
    /// convergence flag tells the caller how feasible it is. Entries must
    /// still be finite and non-negative.
    pub(crate) fn from_parts(
        values: Array2<f64>,
        p: WeightVector,
        q: WeightVector,
    ) -> Result<Self> {
        if values.nrows() != p.len() || values.ncols() != q.len() {
            return Err(Error::Shape(format!(
                "coupling is {}x{} but weights are {} and {}",
                values.nrows(),
                values.ncols(),
                p.len(),
                q.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::DegenerateMatrix(
                "coupling contains a negative or non-finite entry".into(),
            ));
        }
        Ok(Self {
            values,
            row_weights: p,
            col_weights: q,
        })
    }

    /// The independence plan `p q^T`, always exactly feasible.
    pub fn from_independence(p: WeightVector, q: WeightVector) -> Result<Self> {
        let values = Array2::from_shape_fn((p.len(), q.len()), |(i, j)| p.get(i) * q.get(j));
        Self::from_parts(values, p, q)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn row_weights(&self) -> &WeightVector {
        &self.row_weights
    }

    pub fn col_weights(&self) -> &WeightVector {
        &self.col_weights
    }

    /// Largest absolute deviation of any row sum from `p` or column sum
    /// from `q`.
    pub fn marginal_violation(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, row) in self.values.rows().into_iter().enumerate() {
            worst = worst.max((row.sum() - self.row_weights.get(i)).abs());
        }
        for (j, col) in self.values.columns().into_iter().enumerate() {
            worst = worst.max((col.sum() - self.col_weights.get(j)).abs());
        }
        worst
    }
}

/// Parameters of one Sinkhorn solve.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SinkhornConfig {
    /// Entropy regularization strength; must be positive.
    pub lambda: f64,
    pub max_inner_iters: usize,
    /// Convergence threshold on the infinity-norm row-marginal violation,
    /// checked after each full (a, b) sweep.
    pub marginal_tol: f64,
    /// Run the log-sum-exp variant instead of plain scaling.
    pub log_domain: bool,
}

impl Default for SinkhornConfig {
    /// `lambda` defaults to the alignment solver's primary regularization.
    fn default() -> Self {
        Self {
            lambda: 5e-5,
            max_inner_iters: 1000,
            marginal_tol: 1e-6,
            log_domain: false,
        }
    }
}

impl SinkhornConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be a positive finite real, got {}",
                self.lambda
            )));
        }
        if !(self.marginal_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "marginal_tol must be positive, got {}",
                self.marginal_tol
            )));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::InvalidConfig("max_inner_iters must be positive".into()));
        }
        Ok(())
    }
}

/// A coupling plus the scaling vectors and convergence telemetry behind it.
#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub coupling: Coupling,
    /// Final row scaling `a` (so that `G = diag(a) K diag(b)`).
    pub row_scaling: Array1<f64>,
    /// Final column scaling `b`.
    pub col_scaling: Array1<f64>,
    /// Full (a, b) sweeps performed.
    pub iterations: usize,
    /// Infinity-norm row-marginal violation at the final iterate.
    pub final_violation: f64,
    /// Whether `final_violation <= marginal_tol` within the iteration budget.
    pub converged: bool,
}

/// Solves the entropic transport problem for `cost` and marginals `(p, q)`.
///
/// Non-convergence within the iteration budget is not an error: the best
/// iterate is returned with `converged = false`. Underflow that zeroes a
/// needed row or column of `K`, or otherwise drives the scaling vectors out
/// of the representable range, is [`Error::NumericalUnderflow`].
pub fn sinkhorn_solve(
    cost: ArrayView2<'_, f64>,
    p: &WeightVector,
    q: &WeightVector,
    cfg: &SinkhornConfig,
) -> Result<SinkhornSolution> {
    cfg.validate()?;
    let (n, m) = cost.dim();
    if n != p.len() || m != q.len() {
        return Err(Error::Shape(format!(
            "cost is {n}x{m} but weights are {} and {}",
            p.len(),
            q.len()
        )));
    }
    if !cost.iter().all(|v| v.is_finite()) {
        return Err(Error::DegenerateMatrix(
            "cost matrix contains a non-finite entry".into(),
        ));
    }
    if cfg.log_domain {
        solve_log_domain(cost, p, q, cfg)
    } else {
        solve_standard(cost, p, q, cfg)
    }
}

fn solve_standard(
    cost: ArrayView2<'_, f64>,
    p: &WeightVector,
    q: &WeightVector,
    cfg: &SinkhornConfig,
) -> Result<SinkhornSolution> {
    let lambda = cfg.lambda;
    let underflow = || Error::NumericalUnderflow { lambda };
    let (n, m) = cost.dim();

    let kernel = cost.mapv(|c| (-c / lambda).exp());
    if !kernel.iter().all(|v| v.is_finite()) {
        return Err(underflow());
    }
    for (i, row) in kernel.rows().into_iter().enumerate() {
        if p.get(i) > 0.0 && row.iter().all(|v| *v == 0.0) {
            return Err(underflow());
        }
    }
    for (j, col) in kernel.columns().into_iter().enumerate() {
        if q.get(j) > 0.0 && col.iter().all(|v| *v == 0.0) {
            return Err(underflow());
        }
    }

    let mut a = Array1::zeros(n);
    let mut b = Array1::ones(m);
    let mut iterations = 0usize;
    let violation;
    let mut converged = false;
    loop {
        let kb = kernel.dot(&b);
        if iterations > 0 {
            // Row sums of diag(a) K diag(b) are a .* (K b); column sums are
            // exact right after each b-update, so rows carry the violation.
            let current = row_violation(&a, &kb, p);
            if current <= cfg.marginal_tol {
                violation = current;
                converged = true;
                break;
            }
            if iterations >= cfg.max_inner_iters {
                violation = current;
                break;
            }
        }
        scale_update(&mut a, p, &kb).ok_or_else(underflow)?;
        let kta = kernel.t().dot(&a);
        scale_update(&mut b, q, &kta).ok_or_else(underflow)?;
        iterations += 1;
    }

    let mut values = kernel;
    for ((i, j), v) in values.indexed_iter_mut() {
        *v *= a[i] * b[j];
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(underflow());
    }
    Ok(SinkhornSolution {
        coupling: Coupling::from_parts(values, p.clone(), q.clone())?,
        row_scaling: a,
        col_scaling: b,
        iterations,
        final_violation: violation,
        converged,
    })
}

/// `out_i <- target_i / denom_i` (0 stays 0); `None` signals a non-finite
/// quotient, i.e. underflow of the kernel.
fn scale_update(out: &mut Array1<f64>, target: &WeightVector, denom: &Array1<f64>) -> Option<()> {
    for (i, o) in out.iter_mut().enumerate() {
        let t = target.get(i);
        if t == 0.0 {
            *o = 0.0;
            continue;
        }
        let v = t / denom[i];
        if !v.is_finite() {
            return None;
        }
        *o = v;
    }
    Some(())
}

fn row_violation(a: &Array1<f64>, kb: &Array1<f64>, p: &WeightVector) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.len() {
        worst = worst.max((a[i] * kb[i] - p.get(i)).abs());
    }
    worst
}

fn solve_log_domain(
    cost: ArrayView2<'_, f64>,
    p: &WeightVector,
    q: &WeightVector,
    cfg: &SinkhornConfig,
) -> Result<SinkhornSolution> {
    let lambda = cfg.lambda;
    let (n, m) = cost.dim();
    let log_kernel = cost.mapv(|c| -c / lambda);
    if log_kernel.iter().any(|v| *v == f64::INFINITY) {
        return Err(Error::NumericalUnderflow { lambda });
    }
    let log_p: Vec<f64> = (0..n).map(|i| p.get(i).ln()).collect();
    let log_q: Vec<f64> = (0..m).map(|j| q.get(j).ln()).collect();

    let mut log_a = vec![0.0f64; n];
    let mut log_b = vec![0.0f64; m];
    let mut lkb = vec![0.0f64; n];
    let mut iterations = 0usize;
    let violation;
    let mut converged = false;
    loop {
        for i in 0..n {
            lkb[i] = log_sum_exp(log_kernel.row(i).iter().zip(&log_b).map(|(k, lb)| k + lb));
        }
        if iterations > 0 {
            let current = (0..n)
                .map(|i| ((log_a[i] + lkb[i]).exp() - p.get(i)).abs())
                .fold(0.0f64, f64::max);
            if current <= cfg.marginal_tol {
                violation = current;
                converged = true;
                break;
            }
            if iterations >= cfg.max_inner_iters {
                violation = current;
                break;
            }
        }
        for i in 0..n {
            log_a[i] = log_p[i] - lkb[i];
        }
        for j in 0..m {
            let lkta =
                log_sum_exp(log_kernel.column(j).iter().zip(&log_a).map(|(k, la)| k + la));
            log_b[j] = log_q[j] - lkta;
        }
        iterations += 1;
    }

    let mut values = log_kernel;
    for ((i, j), v) in values.indexed_iter_mut() {
        *v = (log_a[i] + *v + log_b[j]).exp();
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericalUnderflow { lambda });
    }
    Ok(SinkhornSolution {
        coupling: Coupling::from_parts(values, p.clone(), q.clone())?,
        row_scaling: Array1::from_iter(log_a.iter().map(|v| v.exp())),
        col_scaling: Array1::from_iter(log_b.iter().map(|v| v.exp())),
        iterations,
        final_violation: violation,
        converged,
    })
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Total transport cost `<G, C> = sum_ij G_ij C_ij`.
pub fn transport_cost(coupling: &Coupling, cost: ArrayView2<'_, f64>) -> Result<f64> {
    if coupling.values().dim() != cost.dim() {
        return Err(Error::Shape(format!(
            "coupling is {:?} but cost is {:?}",
            coupling.values().dim(),
            cost.dim()
        )));
    }
    Ok(coupling
        .values()
        .iter()
        .zip(cost.iter())
        .map(|(g, c)| g * c)
        .sum())
}

/// Entropy `H(G) = -sum_ij G_ij (ln G_ij - 1)`, with `0 ln 0 := 0`.
pub fn entropy(coupling: &Coupling) -> f64 {
    coupling
        .values()
        .iter()
        .map(|&g| if g > 0.0 { -g * (g.ln() - 1.0) } else { 0.0 })
        .sum()
}

/// Writes the coupling as `row \t col \t mass` triples with 17
/// significant digits. With a threshold, entries below it are omitted
/// (sparse form); without one every entry is written.
pub fn write_coupling_tsv<W: std::io::Write>(
    mut w: W,
    coupling: &Coupling,
    threshold: Option<f64>,
) -> Result<()> {
    for ((i, j), &v) in coupling.values().indexed_iter() {
        if threshold.is_none_or(|t| v >= t) {
            writeln!(w, "{i}\t{j}\t{v:.16e}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn uniform(n: usize) -> WeightVector {
        WeightVector::uniform(n).unwrap()
    }

    /// Exact LP optimum for a 2x2 transport problem. The feasible set has
    /// one degree of freedom (G[0,0]), the objective is linear in it, so an
    /// endpoint of the feasible interval is optimal.
    fn lp_optimum_2x2(cost: &Array2<f64>, p: [f64; 2], q: [f64; 2]) -> f64 {
        let eval = |g00: f64| {
            let g01 = p[0] - g00;
            let g10 = q[0] - g00;
            let g11 = p[1] - g10;
            g00 * cost[[0, 0]] + g01 * cost[[0, 1]] + g10 * cost[[1, 0]] + g11 * cost[[1, 1]]
        };
        let lo = (p[0] - q[1]).max(0.0);
        let hi = p[0].min(q[0]);
        eval(lo).min(eval(hi))
    }

    #[test]
    fn single_atom_has_only_one_plan() {
        let sol = sinkhorn_solve(
            array![[7.25]].view(),
            &uniform(1),
            &uniform(1),
            &SinkhornConfig::new(0.3),
        )
        .unwrap();
        assert_abs_diff_eq!(sol.coupling.values()[[0, 0]], 1.0, epsilon = 1e-12);
        assert!(sol.converged);
    }

    #[test]
    fn zero_cost_yields_product_measure() {
        let sol = sinkhorn_solve(
            Array2::zeros((2, 2)).view(),
            &uniform(2),
            &uniform(2),
            &SinkhornConfig::new(1.0),
        )
        .unwrap();
        for v in sol.coupling.values().iter() {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-12);
        }
        assert!(sol.converged);
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn small_lambda_recovers_the_lp_vertex() {
        let cost = array![[0.0, 1.0], [1.0, 0.0]];
        let sol = sinkhorn_solve(
            cost.view(),
            &uniform(2),
            &uniform(2),
            &SinkhornConfig::new(0.01),
        )
        .unwrap();
        assert!(sol.converged);
        let g = sol.coupling.values();
        assert_abs_diff_eq!(g[[0, 0]], 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(g[[1, 1]], 0.5, epsilon = 1e-4);
        assert_abs_diff_eq!(g[[0, 1]], 0.0, epsilon = 1e-4);

        let optimum = lp_optimum_2x2(&cost, [0.5, 0.5], [0.5, 0.5]);
        assert_abs_diff_eq!(optimum, 0.0, epsilon = 1e-15);
        let cost_attained = transport_cost(&sol.coupling, cost.view()).unwrap();
        assert!((cost_attained - optimum).abs() < 1e-4);
    }

    #[test]
    fn decreasing_lambda_approaches_the_lp_optimum_monotonically() {
        let cost = array![[0.0, 1.0], [1.0, 0.0]];
        let mut previous = f64::INFINITY;
        for lambda in [0.1, 0.01, 0.001] {
            let sol = sinkhorn_solve(
                cost.view(),
                &uniform(2),
                &uniform(2),
                &SinkhornConfig::new(lambda),
            )
            .unwrap();
            let attained = transport_cost(&sol.coupling, cost.view()).unwrap();
            assert!(
                attained <= previous + 1e-12,
                "lambda={lambda}: {attained} > {previous}"
            );
            previous = attained;
        }
        assert!(previous >= 0.0);
    }

    #[test]
    fn returned_plan_matches_the_scaling_structure() {
        let cost = array![[0.3, 0.7, 0.1], [0.9, 0.2, 0.4]];
        let p = WeightVector::new(array![0.4, 0.6]).unwrap();
        let q = WeightVector::new(array![0.5, 0.2, 0.3]).unwrap();
        let cfg = SinkhornConfig::new(0.2);
        let sol = sinkhorn_solve(cost.view(), &p, &q, &cfg).unwrap();
        assert!(sol.converged);
        assert!(sol.coupling.marginal_violation() <= MARGINAL_TOLERANCE);
        for ((i, j), &g) in sol.coupling.values().indexed_iter() {
            let expected =
                sol.row_scaling[i] * (-cost[[i, j]] / cfg.lambda).exp() * sol.col_scaling[j];
            assert!(
                (g - expected).abs() <= 1e-10,
                "({i},{j}): {g} vs diag(a) K diag(b) = {expected}"
            );
        }
    }

    #[test]
    fn constant_cost_shift_leaves_the_plan_unchanged() {
        let cost = array![[0.3, 0.7, 0.1], [0.9, 0.2, 0.4]];
        let shifted = cost.mapv(|c| c + 2.5);
        let p = WeightVector::new(array![0.4, 0.6]).unwrap();
        let q = WeightVector::new(array![0.5, 0.2, 0.3]).unwrap();
        let cfg = SinkhornConfig::new(0.3);
        let base = sinkhorn_solve(cost.view(), &p, &q, &cfg).unwrap();
        let moved = sinkhorn_solve(shifted.view(), &p, &q, &cfg).unwrap();
        for (a, b) in base
            .coupling
            .values()
            .iter()
            .zip(moved.coupling.values().iter())
        {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn log_domain_agrees_with_standard_domain() {
        let cost = array![
            [0.31, 0.74, 0.16, 0.52],
            [0.95, 0.21, 0.47, 0.08],
            [0.12, 0.66, 0.83, 0.39]
        ];
        let p = WeightVector::new(array![0.2, 0.5, 0.3]).unwrap();
        let q = WeightVector::new(array![0.1, 0.4, 0.25, 0.25]).unwrap();
        let standard = sinkhorn_solve(cost.view(), &p, &q, &SinkhornConfig::new(0.05)).unwrap();
        let log = sinkhorn_solve(
            cost.view(),
            &p,
            &q,
            &SinkhornConfig {
                log_domain: true,
                ..SinkhornConfig::new(0.05)
            },
        )
        .unwrap();
        assert!(standard.converged && log.converged);
        for (a, b) in standard
            .coupling
            .values()
            .iter()
            .zip(log.coupling.values().iter())
        {
            assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn log_domain_survives_a_lambda_that_kills_plain_scaling() {
        // Uniformly large costs: exp(-c/lambda) is exactly 0 everywhere in
        // the plain domain, but the log domain shifts it away.
        let cost = array![[1.0, 1.0], [1.0, 1.0]];
        let cfg = SinkhornConfig::new(1e-3);
        let err = sinkhorn_solve(cost.view(), &uniform(2), &uniform(2), &cfg).unwrap_err();
        assert!(
            matches!(err, Error::NumericalUnderflow { lambda } if lambda == 1e-3),
            "{err:?}"
        );

        let sol = sinkhorn_solve(
            cost.view(),
            &uniform(2),
            &uniform(2),
            &SinkhornConfig {
                log_domain: true,
                ..cfg
            },
        )
        .unwrap();
        for v in sol.coupling.values().iter() {
            assert_abs_diff_eq!(*v, 0.25, epsilon = 1e-9);
        }
    }

    #[test]
    fn iteration_budget_exhaustion_is_not_an_error() {
        let cost = array![[0.0, 0.3], [0.2, 0.1]];
        let p = WeightVector::new(array![0.3, 0.7]).unwrap();
        let q = WeightVector::new(array![0.6, 0.4]).unwrap();
        let starved = sinkhorn_solve(
            cost.view(),
            &p,
            &q,
            &SinkhornConfig {
                max_inner_iters: 1,
                ..SinkhornConfig::new(0.2)
            },
        )
        .unwrap();
        assert!(!starved.converged);
        assert_eq!(starved.iterations, 1);
        assert!(starved.final_violation > 1e-6);

        let full = sinkhorn_solve(cost.view(), &p, &q, &SinkhornConfig::new(0.2)).unwrap();
        assert!(full.converged);
        assert!(full.iterations > 1);
        assert!(full.final_violation <= 1e-6);
    }

    #[test]
    fn transport_cost_examples_and_oracle() {
        let single = Coupling::new(array![[1.0]], uniform(1), uniform(1)).unwrap();
        assert_abs_diff_eq!(
            transport_cost(&single, array![[3.5]].view()).unwrap(),
            3.5
        );

        let flat = Coupling::new(
            Array2::from_elem((2, 2), 0.25),
            uniform(2),
            uniform(2),
        )
        .unwrap();
        assert_abs_diff_eq!(
            transport_cost(&flat, array![[0.0, 1.0], [1.0, 0.0]].view()).unwrap(),
            0.5
        );

        let mut x = 0.37f64;
        let mut next = || {
            x = (x * 9301.0 + 49297.0) % 233280.0;
            x / 233280.0
        };
        let gamma = {
            let raw = Array2::from_shape_fn((4, 4), |_| next());
            let total = raw.sum();
            raw / total
        };
        let p = WeightVector::new(Array1::from_iter(
            gamma.rows().into_iter().map(|r| r.sum()),
        ))
        .unwrap();
        let q = WeightVector::new(Array1::from_iter(
            gamma.columns().into_iter().map(|c| c.sum()),
        ))
        .unwrap();
        let cost = Array2::from_shape_fn((4, 4), |_| next());
        let plan = Coupling::new(gamma.clone(), p, q).unwrap();

        let mut oracle = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                oracle += gamma[[i, j]] * cost[[i, j]];
            }
        }
        assert!((transport_cost(&plan, cost.view()).unwrap() - oracle).abs() < 1e-12);

        let err = transport_cost(&plan, array![[1.0]].view()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn entropy_examples() {
        let single = Coupling::new(array![[1.0]], uniform(1), uniform(1)).unwrap();
        assert_abs_diff_eq!(entropy(&single), 1.0, epsilon = 1e-15);

        let flat = Coupling::new(
            Array2::from_elem((2, 2), 0.25),
            uniform(2),
            uniform(2),
        )
        .unwrap();
        assert_abs_diff_eq!(entropy(&flat), 1.0 + 4.0f64.ln(), epsilon = 1e-12);

        let sparse = Coupling::new(
            array![[0.5, 0.0], [0.0, 0.5]],
            uniform(2),
            uniform(2),
        )
        .unwrap();
        assert!(entropy(&sparse).is_finite());
        assert_abs_diff_eq!(entropy(&sparse), 1.0 + 2.0f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let p = uniform(2);
        let cost = Array2::zeros((2, 2));
        for bad in [
            SinkhornConfig::new(0.0),
            SinkhornConfig::new(-1.0),
            SinkhornConfig::new(f64::NAN),
            SinkhornConfig {
                marginal_tol: 0.0,
                ..SinkhornConfig::new(0.1)
            },
            SinkhornConfig {
                max_inner_iters: 0,
                ..SinkhornConfig::new(0.1)
            },
        ] {
            let err = sinkhorn_solve(cost.view(), &p, &p, &bad).unwrap_err();
            assert!(matches!(err, Error::InvalidConfig(_)), "{bad:?}");
        }

        let err = sinkhorn_solve(
            array![[f64::NAN, 0.0], [0.0, 0.0]].view(),
            &p,
            &p,
            &SinkhornConfig::new(0.1),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DegenerateMatrix(_)));

        let err =
            sinkhorn_solve(cost.view(), &p, &uniform(3), &SinkhornConfig::new(0.1)).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn coupling_constructor_enforces_invariants() {
        let err = Coupling::new(array![[0.9, 0.0], [0.0, 0.1]], uniform(2), uniform(2))
            .unwrap_err();
        assert!(matches!(err, Error::Shape(_)));

        let err = Coupling::new(array![[0.6, -0.1], [0.0, 0.5]], uniform(2), uniform(2))
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateMatrix(_)));

        let ok = Coupling::new(array![[0.5, 0.0], [0.0, 0.5]], uniform(2), uniform(2)).unwrap();
        assert_abs_diff_eq!(ok.marginal_violation(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn coupling_tsv_thresholds_small_entries() {
        let plan = Coupling::from_parts(
            array![[0.5, 1e-12], [0.0, 0.5]],
            WeightVector::uniform(2).unwrap(),
            WeightVector::uniform(2).unwrap(),
        )
        .unwrap();

        let mut sparse = Vec::new();
        write_coupling_tsv(&mut sparse, &plan, Some(1e-9)).unwrap();
        let sparse = String::from_utf8(sparse).unwrap();
        let lines: Vec<&str> = sparse.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("0\t0\t"));
        assert!(lines[1].starts_with("1\t1\t"));

        let mut dense = Vec::new();
        write_coupling_tsv(&mut dense, &plan, None).unwrap();
        assert_eq!(String::from_utf8(dense).unwrap().lines().count(), 4);

        let field = lines[0].split('\t').nth(2).unwrap();
        assert_eq!(field.parse::<f64>().unwrap(), 0.5);
    }

    proptest! {
        // Convergence means feasibility: random rectangular problems at
        // moderate lambda must hit both marginals within tolerance.  Small
        // lambda on near-degenerate costs mixes slowly (thousands of sweeps),
        // so the budget is generous; the claim under test is feasibility at
        // convergence, not convergence speed.
        #[test]
        fn converged_solves_are_feasible(
            seed_entries in proptest::collection::vec(0.0f64..1.0, 12),
            lambda in 0.05f64..0.5,
        ) {
            let cost = Array2::from_shape_vec((3, 4), seed_entries).unwrap();
            let p = WeightVector::new(array![0.5, 0.25, 0.25]).unwrap();
            let q = WeightVector::new(array![0.1, 0.2, 0.3, 0.4]).unwrap();
            let mut cfg = SinkhornConfig::new(lambda);
            cfg.max_inner_iters = 1_000_000;
            let sol = sinkhorn_solve(cost.view(), &p, &q, &cfg).unwrap();
            prop_assert!(sol.converged);
            prop_assert!(sol.coupling.marginal_violation() <= MARGINAL_TOLERANCE);
            prop_assert!(sol.final_violation <= 1e-6);
        }

        // The independence coupling is exactly feasible for any weights.
        #[test]
        fn independence_plan_is_feasible(
            raw_p in proptest::collection::vec(0.01f64..1.0, 2..5),
            raw_q in proptest::collection::vec(0.01f64..1.0, 2..5),
        ) {
            let p = WeightVector::new(Array1::from_vec(raw_p)).unwrap();
            let q = WeightVector::new(Array1::from_vec(raw_q)).unwrap();
            let plan = Coupling::from_independence(p, q).unwrap();
            prop_assert!(plan.marginal_violation() <= 1e-12);
        }
    }
}
