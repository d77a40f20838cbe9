//! Binary source whose side information is independent of it: the
//! conditional rate-distortion function collapses to `h(p) - h(D)` and the
//! dispersion to `p(1-p) ln²((1-p)/p)`, the same at every distortion.

use fblcrd::crd::{solve_crd, SolverOptions};
use fblcrd::math::binary_entropy;
use fblcrd::source::binary_example;
use fblcrd::tilted::tilted_density;

fn main() -> fblcrd::error::Result<()> {
    let p = 0.2;
    let inst = binary_example(0.5, p);
    println!("{:>6} {:>12} {:>12} {:>12} {:>12}", "D", "R", "h(p)-h(D)", "V", "closed V");
    for d in [0.02, 0.05, 0.1, 0.15] {
        let sol = solve_crd(&inst, d, &SolverOptions::default())?;
        let field = tilted_density(&sol, &inst)?;
        let v = p * (1.0 - p) * ((1.0 - p) / p).ln().powi(2);
        println!(
            "{d:>6} {:>12.9} {:>12.9} {:>12.9} {:>12.9}",
            sol.rate.0,
            binary_entropy(p) - binary_entropy(d),
            field.variance,
            v
        );
    }
    Ok(())
}
