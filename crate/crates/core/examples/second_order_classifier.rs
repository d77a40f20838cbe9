//! Optimal second-order coding rate as a function of the first-order rate.

use fblcrd::crd::{solve_crd, SolverOptions};
use fblcrd::source::binary_example;
use fblcrd::tilted::{second_order_classifier, tilted_density};

fn main() -> fblcrd::error::Result<()> {
    let inst = binary_example(0.5, 0.2);
    let sol = solve_crd(&inst, 0.1, &SolverOptions::default())?;
    let v = tilted_density(&sol, &inst)?.variance;
    let r = sol.rate.0;
    for kappa in [r - 0.01, r, r + 0.01] {
        for eps in [0.01, 0.1, 0.5] {
            println!("κ = {kappa:.5}, ε = {eps}: {:?}", second_order_classifier(kappa, r, v, eps)?);
        }
    }
    Ok(())
}
