//! Step sums for polynomial schedules and the fitted decay of the averaged
//! residual against `A_N`.
//!
//! cargo run --release --example rate_study

use bregman_skm::cli::rate_study;
use bregman_skm::prelude::*;

fn main() -> Result<()> {
    let n = 10_000;
    for gamma in [0.6, 0.75, 0.9] {
        let a = step_sum(&StepSchedule::polynomial(gamma)?, n);
        let approx = (n as f64).powf(1.0 - gamma) / (1.0 - gamma);
        println!("γ = {gamma:<4}  A_N = {a:>8.3}  N^(1-γ)/(1-γ) = {approx:>8.3}");
    }
    let harmonic = StepSchedule::polynomial(1.0)?;
    let big = 1_000_000;
    println!("α_n = 1/(n+1): A_N / ln N = {:.4} at N = {big}\n", step_sum(&harmonic, big) / (big as f64).ln());

    let op = OperatorSpec::softmax_policy_seeded(10, 2.0, 0, MatrixScale::Auto)?;
    let rows = rate_study(
        &LegendreGeometry::neg_entropy_simplex(),
        &op,
        &[0.6, 0.75, 0.9],
        n,
        10,
        NoiseModel::gaussian(0.1)?,
    )?;
    println!("{:>5} {:>10} {:>10} {:>8} {:>9}", "γ", "A_N", "slope", "-p", "envelope");
    for r in rows {
        println!(
            "{:>5} {:>10.3} {:>10.4} {:>8.2} {:>8.0}%",
            r.gamma,
            r.step_sum,
            r.median_slope.unwrap_or(f64::NAN),
            r.theoretical_exponent_in_a,
            100.0 * r.envelope_pass_rate
        );
    }
    Ok(())
}
