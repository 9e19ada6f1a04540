//! Entropic optimal transport on a problem small enough to read.
//!
//! Three bakeries ship bread to four cafés. The cost matrix holds the
//! per-loaf delivery cost; the marginals hold each bakery's output and
//! each café's demand (as probability mass). Sinkhorn-Knopp solves the
//! entropy-regularized problem `min <G, C> - lambda H(G)` by alternating
//! diagonal scaling (Cuturi 2013).
//!
//! The example walks a lambda ladder to show the classic trade-off:
//! large lambda converges in a handful of sweeps but blurs the plan
//! toward the independence coupling; small lambda sharpens the plan
//! toward a vertex of the transportation polytope at the price of many
//! more sweeps. At the bottom of the ladder the transport cost is
//! checked against the exactly enumerated linear-program optimum of a
//! 2x2 instance.
//!
//! Run with: cargo run --example sinkhorn_basics

use gwalign::sinkhorn::{entropy, sinkhorn_solve, transport_cost, SinkhornConfig};
use gwalign::WeightVector;
use ndarray::{array, ArrayView2};

fn print_plan(label: &str, plan: ArrayView2<'_, f64>) {
    println!("{label}");
    for row in plan.rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:7.4}")).collect();
        println!("    [{}]", cells.join(" "));
    }
}

fn main() -> Result<(), gwalign::Error> {
    let cost = array![
        [0.30, 0.90, 0.60, 0.10],
        [0.70, 0.20, 0.80, 0.40],
        [0.50, 0.60, 0.15, 0.90],
    ];
    let supply = WeightVector::new(array![0.5, 0.25, 0.25])?;
    let demand = WeightVector::new(array![0.3, 0.3, 0.2, 0.2])?;

    print_plan("delivery cost per loaf:", cost.view());
    println!();

    for lambda in [0.5, 0.1, 0.05] {
        let mut cfg = SinkhornConfig::new(lambda);
        cfg.max_inner_iters = 100_000;
        let sol = sinkhorn_solve(cost.view(), &supply, &demand, &cfg)?;
        println!(
            "lambda = {lambda:<5}  sweeps = {:<6} cost = {:.6}  entropy = {:.4}  violation = {:.2e}",
            sol.iterations,
            transport_cost(&sol.coupling, cost.view())?,
            entropy(&sol.coupling),
            sol.final_violation,
        );
        print_plan("  plan:", sol.coupling.values());
        println!();
    }

    // A 2x2 problem has a one-parameter family of feasible plans, so the
    // linear program can be solved by hand: cost is linear in the free
    // entry g11, hence minimized at an endpoint of its feasible interval.
    let cost2 = array![[0.0, 1.0], [1.0, 0.3]];
    let p = WeightVector::new(array![0.6, 0.4])?;
    let q = WeightVector::new(array![0.5, 0.5])?;
    let (lo, hi) = ((0.6f64 + 0.5 - 1.0).max(0.0), 0.6f64.min(0.5));
    let cost_at = |g11: f64| {
        let (g12, g21, g22) = (0.6 - g11, 0.5 - g11, g11 - 0.1);
        cost2[[0, 0]] * g11 + cost2[[0, 1]] * g12 + cost2[[1, 0]] * g21 + cost2[[1, 1]] * g22
    };
    let lp_optimum = cost_at(lo).min(cost_at(hi));

    // Small enough to pin the vertex, large enough that exp(-1/lambda)
    // stays above the smallest representable double.
    let mut sharp = SinkhornConfig::new(2.5e-3);
    sharp.max_inner_iters = 200_000;
    let sol = sinkhorn_solve(cost2.view(), &p, &q, &sharp)?;
    let entropic = transport_cost(&sol.coupling, cost2.view())?;
    println!("2x2 check: enumerated LP optimum = {lp_optimum:.6}");
    println!("           entropic cost at lambda=2.5e-3 = {entropic:.6} (gap {:.2e})", entropic - lp_optimum);
    assert!((entropic - lp_optimum).abs() <= 1e-4);
    Ok(())
}
