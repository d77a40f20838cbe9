//! The Gaussian dispersion is ½ whatever the variances: first from the
//! moments of the tilted density, then from the growth of simulated optimal
//! codebook sizes with blocklength.

use fblcrd::gaussian::*;
use fblcrd::math::gaussian_q_inv;

fn main() -> fblcrd::error::Result<()> {
    for (vx, vz) in [(0.5, 2.0), (1.0, 1.0), (2.0, 0.5)] {
        let var = vx * vz / (vx + vz);
        let m = GaussianModel::new(vx, vz, var / 2.0)?;
        let mom = letter_moments_mc(&m, 200_000, 1)?;
        println!("σ²X={vx} σ²Z={vz}: var j = {:.4} ± {:.4}", mom.variance, mom.variance_stderr);
    }
    let model = GaussianModel::new(1.0, 1.0, 0.25)?;
    let eps = 0.1;
    let points: Vec<(usize, f64)> = (1..=10)
        .map(|k| {
            let n = 200 * k;
            let samples = gaussian_ball_samples(&model, n, 20_000, 100 + k as u64, CapFormula::Exact)?;
            Ok((n, gaussian_achievability_ln_m(eps, &samples)))
        })
        .collect::<fblcrd::error::Result<_>>()?;
    let fit = fit_second_order(&points, gaussian_crd(&model).0)?;
    println!(
        "fitted √n coefficient {:.3}, expected {:.3}",
        fit.sqrt_n,
        GAUSSIAN_DISPERSION.sqrt() * gaussian_q_inv(eps)?
    );
    Ok(())
}
