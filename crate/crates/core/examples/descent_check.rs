//! Monte-Carlo check of the one-step Bregman decrease
//! `E[D_{n+1}] + ½δ(r)α ≤ (1 + Lα²)D_n + σ²α²`.
//!
//! cargo run --release --example descent_check

use bregman_skm::prelude::*;

fn main() -> Result<()> {
    let op = OperatorSpec::softmax_policy_seeded(10, 2.0, 0, MatrixScale::Auto)?;
    for geom in [LegendreGeometry::euclidean(), LegendreGeometry::neg_entropy_simplex()] {
        let cfg = IterationConfig::new(op.clone(), geom.clone()).noise(NoiseModel::gaussian(0.1)?);
        for n in [10, 100, 1000] {
            let r = descent_check(&cfg, n, 10_000)?;
            println!(
                "{:<20} n = {:>4}  lhs {:.4e} ± {:.1e}  rhs {:.4e}  L = {:>6.2}  σ² = {:.4}  {}",
                geom.name(),
                n,
                r.lhs_mean,
                r.lhs_std_error,
                r.rhs,
                r.fitted_l,
                r.fitted_sigma2,
                if r.satisfied { "ok" } else { "VIOLATED" }
            );
        }
    }
    Ok(())
}
