use fblcrd::bounds::DensitySum;
use fblcrd::crd::SolverOptions;
use fblcrd::markov::*;
use fblcrd::math::chi2_sf;
use fblcrd::source::DistortionSpec;

fn two_state() -> MarkovModel {
    MarkovModel::new(2, 1, &[vec![0.9, 0.1], vec![0.2, 0.8]], DistortionSpec::hamming(2)).unwrap()
}

#[test]
fn lag_covariances_match_a_long_path() {
    let m = two_state();
    let t = markov_tilted_quantities(&m, 0.1, &SolverOptions::default()).unwrap();
    let path = sample_markov(&m, 400_000, 5);
    let js: Vec<f64> = path.xs.iter().map(|&(x, s)| t.j[x * m.s_size + s]).collect();
    let mean = js.iter().sum::<f64>() / js.len() as f64;
    for lag in 0..6 {
        let pairs = js.len() - lag;
        let c = (0..pairs).map(|i| (js[i] - mean) * (js[i + lag] - mean)).sum::<f64>() / pairs as f64;
        let exact = if lag == 0 { t.ladder.lag0 } else { t.ladder.covs[lag - 1] };
        assert!((c - exact).abs() < 0.05 * t.ladder.lag0, "lag {lag}: {c} vs {exact}");
    }
}

#[test]
fn sampled_transitions_follow_the_kernel() {
    let m = random_chain(11, 5);
    let k = m.states();
    let path = sample_markov(&m, 200_000, 2);
    let states: Vec<usize> = path.xs.iter().map(|&(x, s)| x * m.s_size + s).collect();
    let mut counts = vec![0.0; k * k];
    for w in states.windows(2) {
        counts[w[0] * k + w[1]] += 1.0;
    }
    let mut stat = 0.0;
    let mut dof = 0u64;
    for u in 0..k {
        let row: f64 = (0..k).map(|v| counts[u * k + v]).sum();
        for v in 0..k {
            let e = row * m.xi(u, v);
            if e > 0.0 {
                stat += (counts[u * k + v] - e).powi(2) / e;
                dof += 1;
            }
        }
        dof -= 1;
    }
    assert!(chi2_sf(dof, stat) > 1e-4, "chi-square {stat} on {dof} dof");
}

#[test]
fn finite_n_dispersion_matches_path_variance() {
    let m = two_state();
    let t = markov_tilted_quantities(&m, 0.1, &SolverOptions::default()).unwrap();
    let n = 500;
    let DensitySum::Samples(sums) = markov_density_sum(&m, &t.j, n, 20_000, 8) else { panic!("sampled law") };
    let mean = sums.iter().sum::<f64>() / sums.len() as f64;
    let var = sums.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (sums.len() - 1) as f64;
    let vn = v_n(&t.ladder, n);
    assert!((var / n as f64 / vn - 1.0).abs() < 0.05, "{} vs {vn}", var / n as f64);
    assert!((mean / n as f64 - t.mu.0).abs() < 0.01);
}

#[test]
fn positive_memory_raises_the_penalty() {
    let m = two_state();
    let t = markov_tilted_quantities(&m, 0.1, &SolverOptions::default()).unwrap();
    assert!(t.ladder.v_inf > t.ladder.lag0);
    let lambda = 0.7f64;
    assert!((t.ladder.v_inf - t.ladder.lag0 * (1.0 + lambda) / (1.0 - lambda)).abs() < 1e-10);
    assert!((t.ladder.decay - lambda).abs() < 1e-3);
    let iid = fblcrd::bounds::second_order_rate(1000, 0.1, t.mu.0, t.ladder.lag0).unwrap();
    assert!(markov_second_order_rate(&t, 1000, 0.1).unwrap() > iid);
}

#[test]
fn alternating_chain_lowers_the_penalty() {
    let m = MarkovModel::new(2, 1, &[vec![0.3, 0.7], vec![0.9, 0.1]], DistortionSpec::hamming(2)).unwrap();
    let t = markov_tilted_quantities(&m, 0.1, &SolverOptions::default()).unwrap();
    let s = v_inf_spectral(&m, &t.j, &t.ladder);
    assert!(s.warning.is_none());
    assert!(t.ladder.v_inf < t.ladder.lag0);
    assert!((s.v_inf - t.ladder.v_inf).abs() < 1e-12);
}
