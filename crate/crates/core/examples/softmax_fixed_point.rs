//! A seeded softmax policy map, its nonexpansiveness certificate and the
//! deterministic reference fixed point.
//!
//! cargo run --example softmax_fixed_point

use bregman_skm::prelude::*;

fn main() -> Result<()> {
    let op = OperatorSpec::softmax_policy_seeded(10, 2.0, 0, MatrixScale::Auto)?;
    println!("spectral norm of A     {:.4}", op.matrix_norm().unwrap());
    println!("probe at construction  {:.4}", op.probe_value().unwrap());
    println!("fresh probe (seed 1)   {:.4}", nonexpansiveness_probe(&op, 10_000, 1));

    let fp = fixed_point_oracle(&op, 1e-12, 100_000)?;
    println!(
        "reference fixed point after {} iterations, residual {:.2e}",
        fp.iterations_used, fp.residual_norm
    );
    println!("  ζ* = {:.5?}", fp.point.as_slice());

    // Deterministic Bregman-KM from the barycentre converges to the same point.
    let cfg = IterationConfig::new(op, LegendreGeometry::neg_entropy_simplex()).n_iters(2000);
    let trace = run(&cfg, Some(&fp))?;
    for row in trace.rows.iter().filter(|r| [0, 10, 100, 1000, 1999].contains(&r.n)) {
        println!(
            "n = {:>4}  D = {:.3e}  ‖ζ - Tζ‖ = {:.3e}  ‖ζ - ζ*‖₁ = {:.3e}",
            row.n,
            row.bregman_residual,
            row.norm_residual,
            row.dist_to_ref.unwrap()
        );
    }
    Ok(())
}
