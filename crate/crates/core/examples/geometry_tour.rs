//! Bregman distances, mirror maps and the three-point identity for each
//! shipped geometry.
//!
//! cargo run --example geometry_tour

use bregman_skm::prelude::*;

fn main() -> Result<()> {
    let x = Vector::new(vec![0.5, 0.3, 0.2])?;
    let y = Vector::new(vec![0.1, 0.6, 0.3])?;
    let z = Vector::new(vec![0.25, 0.25, 0.5])?;

    let geometries = [
        LegendreGeometry::euclidean(),
        LegendreGeometry::neg_entropy_simplex(),
        LegendreGeometry::p_norm(1.5)?,
        LegendreGeometry::scaled(2.0, LegendreGeometry::neg_entropy_simplex())?,
    ];

    println!("{:<32} {:>12} {:>12} {:>12} {:>6}", "geometry", "D(x,y)", "D(y,x)", "3pt defect", "p");
    for g in &geometries {
        println!(
            "{:<32} {:>12.6e} {:>12.6e} {:>12.3e} {:>6}",
            g.name(),
            g.bregman(&x, &y)?,
            g.bregman(&y, &x)?,
            g.three_point_defect(&x, &y, &z)?,
            g.rate_exponent(),
        );
    }

    // The entropy mirror map sends the simplex to log-coordinates and back
    // through softmax.
    let entropy = LegendreGeometry::neg_entropy_simplex();
    let dual = entropy.grad(&x)?;
    let back = entropy.grad_conjugate(&dual)?;
    println!("\ngrad θ(x)      = {:?}", dual.as_slice());
    println!("grad θ*(grad θ(x)) = {:?}", back.as_slice());

    // Points that fall off the simplex are pulled back by the safeguard.
    let mut p = vec![0.7, 0.4, -0.1];
    let clamped = entropy.safeguard(&mut p);
    println!("\nsafeguard clamped {clamped} coordinate(s): {p:?}");
    Ok(())
}
