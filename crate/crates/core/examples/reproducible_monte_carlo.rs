//! Monte-Carlo runs are split into chunks with their own ChaCha streams, so
//! results depend on the seed only, never on the number of threads.

use fblcrd::bounds::simulate_random_code;
use fblcrd::bounds::FblQuery;
use fblcrd::crd::{solve_crd, SolverOptions};
use fblcrd::source::binary_example;
use fblcrd::tilted::tilted_density;

fn main() -> fblcrd::error::Result<()> {
    let inst = binary_example(0.5, 0.2);
    let sol = solve_crd(&inst, 0.1, &SolverOptions::default())?;
    let field = tilted_density(&sol, &inst)?;
    let q = FblQuery::at_rate(400, 0.1, 0.1, 0.22)?;
    for threads in [1, 2, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("pool");
        let r = pool.install(|| simulate_random_code(&q, &sol, &field, &inst, 3000, 17))?;
        println!("{threads} threads: ε = {:.17} ± {:.6}", r.value, r.mc_stderr.unwrap_or(0.0));
    }
    Ok(())
}
