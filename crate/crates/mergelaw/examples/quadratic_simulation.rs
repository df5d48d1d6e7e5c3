//! Monte-Carlo check of the second-order loss expansion on a synthetic
//! quadratic world, where the floor, tail, and variance are known in
//! closed form.

use mergelaw::sim::{
    closed_form_floor, closed_form_tail, closed_form_variance_gaussian, simulate, slope_check,
    QuadraticWorld, SampleKind,
};
use nalgebra::{DMatrix, DVector};

fn main() {
    let dim = 10;
    let world = QuadraticWorld {
        dim,
        l0: 0.0,
        g: DVector::from_element(dim, 1.0),
        h: DMatrix::identity(dim, dim),
        mu: DVector::zeros(dim),
        sigma: DMatrix::identity(dim, dim) * 0.04,
        c: 1.0,
    };

    let floor = closed_form_floor(&world);
    let tail = closed_form_tail(&world);
    println!("closed forms: floor={floor:.4}, tail={tail:.4}");

    let result = simulate(&world, &[1, 2, 4, 8, 16], 50_000, 7, SampleKind::Gaussian).unwrap();
    println!("k   mean (pred)        var (pred)");
    for r in &result.records {
        let mean_pred = floor + tail / r.k as f64;
        let var_pred = closed_form_variance_gaussian(&world, r.k);
        println!(
            "{:<3} {:.5} ({:.5})   {:.6} ({:.6})",
            r.k, r.mean_loss, mean_pred, r.variance, var_pred
        );
    }
    println!(
        "log-log variance slope: {:.3} (theory: -1 for this world)",
        slope_check(&result).unwrap()
    );
}
