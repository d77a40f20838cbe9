//! Finite-difference gradient of the rate with respect to the joint source
//! law, compared entry by entry with the tilted density.

use fblcrd::crd::{rd_gradient, solve_crd, SolverOptions};
use fblcrd::source::random_instance;
use fblcrd::tilted::tilted_density;

fn main() -> fblcrd::error::Result<()> {
    let inst = (20..)
        .map(|seed| random_instance(seed, 3))
        .find(|i| i.s_size() > 1 && i.d_zero_rate - i.d_floor > 0.1)
        .expect("some seed qualifies");
    let d = inst.d_floor + 0.4 * (inst.d_zero_rate - inst.d_floor);
    let opts = SolverOptions::default();
    let field = tilted_density(&solve_crd(&inst, d, &opts)?, &inst)?;
    let grad = rd_gradient(&inst, d, 1e-5, &opts)?;
    println!("{:>3} {:>3} {:>12} {:>12} {:>10}", "x", "s", "gradient", "j(x,s)", "gap");
    for x in 0..inst.x_size() {
        for s in 0..inst.s_size() {
            let (g, j) = (grad.get(x, s), field.j(x, s));
            println!("{x:>3} {s:>3} {g:>12.7} {j:>12.7} {:>10.1e}", (g - j).abs());
        }
    }
    Ok(())
}
