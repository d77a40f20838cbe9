//! Rate, slope and dispersion along a distortion grid for a random source,
//! with the dispersion split into its within-state and between-state parts.

use fblcrd::crd::{rd_curve, SolverOptions};
use fblcrd::source::random_instance;
use fblcrd::tilted::{dispersion_v, tilted_density};

fn main() -> fblcrd::error::Result<()> {
    let inst = (0..)
        .map(|seed| random_instance(seed, 4))
        .find(|i| i.s_size() > 1 && i.d_zero_rate - i.d_floor > 0.2)
        .expect("some seed qualifies");
    println!("|X|={} |S|={} |Y|={}", inst.x_size(), inst.s_size(), inst.y_size());
    println!("feasible above {:.4}, zero rate from {:.4}", inst.d_floor, inst.d_zero_rate);
    let grid: Vec<f64> =
        (1..10).map(|k| inst.d_floor + k as f64 / 10.0 * (inst.d_zero_rate - inst.d_floor)).collect();
    let curve = rd_curve(&inst, &grid, &SolverOptions::default())?;
    println!("{:>8} {:>10} {:>10} {:>10} {:>10} {:>10}", "D", "R", "slope", "V", "within", "between");
    for sol in &curve {
        let dv = dispersion_v(&tilted_density(sol, &inst)?, &inst);
        println!(
            "{:>8.4} {:>10.6} {:>10.4} {:>10.6} {:>10.6} {:>10.6}",
            sol.target, sol.rate.0, sol.slope, dv.v, dv.within, dv.between
        );
    }
    Ok(())
}
