//! Finite-blocklength sandwich on the binary source: the converse and the
//! random-coding achievability rate close in on the second-order rate.

use fblcrd::bounds::{achievability_ln_m, converse_ln_m, second_order_rate, BallModel, BallOptions, DensitySum, SumOptions};
use fblcrd::crd::{solve_crd, SolverOptions};
use fblcrd::mc::DEFAULT_CHUNK;
use fblcrd::source::binary_example;
use fblcrd::tilted::tilted_density;

fn main() -> fblcrd::error::Result<()> {
    let inst = binary_example(0.5, 0.2);
    let (d, eps) = (0.1, 0.1);
    let sol = solve_crd(&inst, d, &SolverOptions::default())?;
    let field = tilted_density(&sol, &inst)?;
    println!("R = {:.5}, V = {:.5}, eps = {eps}", sol.rate.0, field.variance);
    println!("{:>6} {:>10} {:>10} {:>10}", "n", "converse", "second", "random");
    for n in [100, 200, 500, 1000, 2000] {
        let sum = DensitySum::build(&field, &inst, n, &SumOptions::default())?;
        let lower = converse_ln_m(n, eps, &sum, field.variance) / n as f64;
        let ball = BallModel::new(&sol, &field, &inst, n, d / 100.0, &BallOptions::default())?;
        let upper = achievability_ln_m(eps, &ball.sample(4000, n as u64, DEFAULT_CHUNK)?) / n as f64;
        let so = second_order_rate(n, eps, sol.rate.0, field.variance)?;
        println!("{n:>6} {lower:>10.5} {so:>10.5} {upper:>10.5}");
    }
    Ok(())
}
