//! Three-term forward bound next to the simulated random-coding error, with
//! the constant in the default parameters calibrated from a pilot sample.

use fblcrd::bounds::{
    calibrate_c, forward_bound, simulate_random_code, BallModel, BallOptions, FblQuery, ForwardBoundParams,
};
use fblcrd::crd::{solve_crd, SolverOptions};
use fblcrd::mc::DEFAULT_CHUNK;
use fblcrd::source::binary_example;
use fblcrd::tilted::tilted_density;

fn main() -> fblcrd::error::Result<()> {
    let inst = binary_example(0.5, 0.2);
    let d = 0.1;
    let sol = solve_crd(&inst, d, &SolverOptions::default())?;
    let field = tilted_density(&sol, &inst)?;
    for n in [500, 1000, 2000] {
        let q = FblQuery::at_rate(n, d, 0.1, sol.rate.0 + 0.04)?;
        let pilot = BallModel::new(&sol, &field, &inst, n, d / n as f64, &BallOptions::default())?;
        let c = calibrate_c(&pilot.sample(500, 99, DEFAULT_CHUNK)?, n);
        let params = ForwardBoundParams::defaults(&q, c)?;
        let bound = forward_bound(&q, &params, &sol, &field, &inst, 2000, 5)?;
        let sim = simulate_random_code(&q, &sol, &field, &inst, 2000, 5)?;
        let terms: Vec<String> = bound.terms.iter().map(|t| format!("{}={:.4}", t.name, t.value)).collect();
        println!(
            "n={n:>5} rate={:.4} C={c:.3}  bound {:.4} [{}]  simulated {:.4}±{:.4}",
            q.rate(),
            bound.value,
            terms.join(" "),
            sim.value,
            sim.mc_stderr.unwrap_or(0.0)
        );
    }
    Ok(())
}
