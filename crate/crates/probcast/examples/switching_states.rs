//! Fitting a switching autoregression by EM: two regimes with different
//! persistence and noise, recovered from the observations alone. The
//! forecast is a bundle of sampled trajectories that mixes over future
//! regime paths.

use probcast::arhmm::{align_states, em_fit, EM_MAX_ITERS, EM_TOL};
use probcast::forecast::Forecast;
use probcast::synth::{generate_with_states, ArRegime, GeneratorKind, GeneratorSpec};

fn main() -> Result<(), probcast::error::Error> {
    let spec = GeneratorSpec::new(
        GeneratorKind::Arhmm {
            regimes: vec![
                ArRegime {
                    coefficients: vec![0.9],
                    noise_std: 0.3,
                    intercept: 0.0,
                },
                ArRegime {
                    coefficients: vec![0.1],
                    noise_std: 1.8,
                    intercept: 2.0,
                },
            ],
            transition: vec![vec![0.97, 0.03], vec![0.04, 0.96]],
        },
        4000,
        17,
    )?;
    let (series, true_states) = generate_with_states(&spec)?;
    let train = &series.values()[..3200];

    let model = em_fit(train, 2, 1, 99, EM_MAX_ITERS, EM_TOL)?;
    println!(
        "EM converged={} after {} evaluations",
        model.converged(),
        model.loglik_trace().len()
    );
    for s in 0..model.num_states() {
        println!(
            "state {s}: intercept={:+.3} coeff={:+.3} noise sd={:.3}",
            model.intercepts()[s],
            model.coefficients()[s][0],
            model.noise_variances()[s].sqrt()
        );
    }
    println!("transition rows: {:?}", model.transition());

    // Decoded path vs truth, up to label permutation. Viterbi index t is
    // observation num_lags + t, so the reference drops the first lag steps.
    let decoded = model.viterbi(train)?;
    let reference = &true_states[model.num_lags()..3200];
    let map = align_states(reference, &decoded, 2);
    let agree = decoded
        .iter()
        .zip(reference)
        .filter(|(c, r)| map[**c] == **r)
        .count() as f64
        / decoded.len() as f64;
    println!("state recovery: {:.1}%", 100.0 * agree);

    // Trajectory forecast summarized through the common quantile grid.
    let empirical = model.sample_forecast(&train[train.len() - 300..], 35, 100, 5)?;
    let forecast = Forecast::from(empirical);
    let q = forecast.to_quantiles(&[0.1, 0.5, 0.9])?;
    println!(
        "35 steps ahead: q10={:.3} median={:.3} q90={:.3}",
        q.value_at(34, 0.1)?,
        q.value_at(34, 0.5)?,
        q.value_at(34, 0.9)?
    );
    Ok(())
}
