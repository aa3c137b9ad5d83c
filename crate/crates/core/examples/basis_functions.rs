//! Prints B-spline and RBF responses over a sweep, and shows where the
//! evenly spaced and Gaussian control-point strategies place their points.

use kang::basis::{basis_values, init_positions, initial_gamma, BasisKind, BasisSpec, InitStrategy};

fn main() -> kang::Result<()> {
    for init in [InitStrategy::EvenlySpaced, InitStrategy::Gaussian] {
        let spec = BasisSpec {
            init,
            knots: 6,
            grid_min: -3.0,
            grid_max: 3.0,
            ..BasisSpec::default()
        };
        let p = init_positions(&spec, 0)?;
        let shown: Vec<String> = p.iter().map(|v| format!("{v:+.3}")).collect();
        println!("{init:?} positions: [{}]", shown.join(", "));
    }

    let rbf = BasisSpec {
        knots: 5,
        grid_min: -2.0,
        grid_max: 2.0,
        init: InitStrategy::EvenlySpaced,
        ..BasisSpec::default()
    };
    let bspline = BasisSpec {
        kind: BasisKind::Bspline,
        ..rbf.clone()
    };
    let centers = init_positions(&rbf, 0)?;
    let gamma = initial_gamma(&rbf, &centers);
    println!("\nrbf gamma from spacing: {gamma:.3}");
    println!("{:>6}  {:<44}  {:<52}  sum", "t", "rbf", "cubic b-spline");
    for i in 0..=8 {
        let t = -2.0 + 0.5 * i as f64;
        let r = basis_values(&rbf, t, &centers, gamma)?;
        let b = basis_values(&bspline, t, &centers, gamma)?;
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
        println!(
            "{t:>6.2}  {:<44}  {:<52}  {:.3}",
            fmt(&r),
            fmt(&b),
            b.iter().sum::<f64>()
        );
    }
    Ok(())
}
