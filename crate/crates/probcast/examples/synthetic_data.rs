//! The synthetic generator inventory. Each generator is seeded and
//! deterministic, so any series here can be reproduced from its spec.

use probcast::synth::{generate, generate_with_states, ArRegime, GeneratorKind, GeneratorSpec};

fn describe(kind: GeneratorKind, seed: u64) -> Result<(), probcast::error::Error> {
    let spec = GeneratorSpec::new(kind, 5000, seed)?;
    let series = generate(&spec)?;
    let v = series.values();
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
    println!(
        "{:<16} len={} mean={mean:>8.3} sd={sd:>7.3} first={:>7.3} last={:>8.3}",
        series.id(),
        series.len(),
        v[0],
        v[v.len() - 1]
    );
    Ok(())
}

fn main() -> Result<(), probcast::error::Error> {
    describe(
        GeneratorKind::WhiteNoise {
            mean: 1.0,
            noise_std: 0.5,
        },
        1,
    )?;
    describe(
        GeneratorKind::Ar {
            coefficients: vec![0.9, -0.2],
            noise_std: 1.0,
            intercept: 0.0,
        },
        2,
    )?;
    describe(
        GeneratorKind::Arma {
            ar: vec![0.7],
            ma: vec![0.4],
            noise_std: 1.0,
            intercept: 0.0,
        },
        3,
    )?;
    describe(
        GeneratorKind::RandomWalk {
            noise_std: 1.0,
            drift: 0.01,
        },
        4,
    )?;
    describe(
        GeneratorKind::LinearTrend {
            intercept: 2.0,
            slope: 0.001,
            noise_std: 0.3,
        },
        5,
    )?;

    // The switching generator also returns its hidden state path.
    let spec = GeneratorSpec::new(
        GeneratorKind::Arhmm {
            regimes: vec![
                ArRegime {
                    coefficients: vec![0.95],
                    noise_std: 0.3,
                    intercept: 0.0,
                },
                ArRegime {
                    coefficients: vec![0.2],
                    noise_std: 1.5,
                    intercept: 1.0,
                },
            ],
            transition: vec![vec![0.98, 0.02], vec![0.05, 0.95]],
        },
        5000,
        6,
    )?;
    let (series, states) = generate_with_states(&spec)?;
    let occupancy = states.iter().filter(|s| **s == 0).count() as f64 / states.len() as f64;
    println!(
        "{:<16} len={} regime-0 occupancy={occupancy:.3}",
        series.id(),
        series.len()
    );
    Ok(())
}
