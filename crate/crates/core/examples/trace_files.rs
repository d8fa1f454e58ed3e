//! Writing a trace to CSV with its JSON sidecar, reading it back and
//! recomputing the averaged residual from the raw columns.
//!
//! cargo run --example trace_files

use bregman_skm::prelude::*;

fn main() -> std::result::Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("skm_trace_files_example");
    std::fs::create_dir_all(&dir)?;

    let op = OperatorSpec::softmax_policy_seeded(10, 2.0, 0, MatrixScale::Auto)?;
    let cfg = IterationConfig::new(op, LegendreGeometry::neg_entropy_simplex())
        .noise(NoiseModel::gaussian(0.1)?)
        .n_iters(500)
        .seed(42);
    let trace = run(&cfg, None)?;
    trace.write_csv(dir.join("trace.csv"))?;
    trace.write_metadata(dir.join("trace.json"))?;

    let back = Trace::load(dir.join("trace.csv"), dir.join("trace.json"))?;
    assert_eq!(back, trace);
    let recomputed = averaged_residual(&back, 500)?;
    println!("stored avg_residual  {:.17e}", back.final_avg_residual().unwrap());
    println!("recomputed from rows {recomputed:.17e}");
    println!("files in {}", dir.display());

    let fit = fit_rate(&back, 0.5, 0.5)?;
    println!("fitted slope {:.3} over n in {:?} (r² = {:.3})", fit.fitted_slope, fit.window, fit.r_squared);
    Ok(())
}
