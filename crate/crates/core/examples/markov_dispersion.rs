//! Markov source with side information: the asymptotic dispersion from the
//! covariance ladder and from the spectral expansion, and the finite-n
//! dispersion approaching it.

use fblcrd::crd::SolverOptions;
use fblcrd::markov::*;
use fblcrd::source::DistortionSpec;

fn main() -> fblcrd::error::Result<()> {
    let model = MarkovModel::new(2, 1, &[vec![0.9, 0.1], vec![0.2, 0.8]], DistortionSpec::hamming(2))?;
    let t = markov_tilted_quantities(&model, 0.1, &SolverOptions::default())?;
    let s = v_inf_spectral(&model, &t.j, &t.ladder);
    println!("π = {:?}", model.pi);
    println!("rate {:.5}, var j {:.5}", t.mu.0, t.ladder.lag0);
    println!("V∞ ladder {:.9} ({} lags), spectral {:.9}", t.ladder.v_inf, t.ladder.covs.len(), s.v_inf);
    println!("eigenvalues {:?}", s.eigenvalues);
    for n in [10, 100, 1000, 10_000] {
        println!(
            "n={n:>6}  V_n = {:.6}  rate {:.5} (memoryless {:.5})",
            v_n(&t.ladder, n),
            markov_second_order_rate(&t, n, 0.1)?,
            fblcrd::bounds::second_order_rate(n, 0.1, t.mu.0, t.ladder.lag0)?
        );
    }
    Ok(())
}
