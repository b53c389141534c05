//! The two reference forecasters on a mean-reverting series: the naive
//! model holds the last value with a random-walk interval, the average
//! model predicts the training mean with a constant interval. Their
//! interval widths follow sqrt(h) and sqrt(1 + 1/n) respectively.

use probcast::baseline::{AverageModel, NaiveModel};
use probcast::synth::{generate, GeneratorKind, GeneratorSpec};

fn main() -> Result<(), probcast::error::Error> {
    let spec = GeneratorSpec::new(
        GeneratorKind::Ar {
            coefficients: vec![0.8],
            noise_std: 1.0,
            intercept: 0.5,
        },
        2000,
        7,
    )?;
    let series = generate(&spec)?;
    let train = &series.values()[..1600];
    let last = *train.last().unwrap();

    let naive = NaiveModel::fit(train)?;
    let average = AverageModel::fit(train)?;
    println!(
        "naive: center = last value = {last:.3}, step variance = {:.4}",
        naive.sigma2()
    );
    println!(
        "average: center = {:.3}, residual variance = {:.4}",
        average.c_hat(),
        average.sigma2()
    );

    let horizon = 16;
    let nf = naive.forecast(last, horizon)?;
    let af = average.forecast(horizon)?;
    println!("\n step  naive_sd  naive_sd/sqrt(h)  average_sd");
    for h in [1usize, 4, 9, 16] {
        let ns = nf.scale()[h - 1];
        println!(
            "{h:>5}  {ns:>8.4}  {:>16.4}  {:>10.4}",
            ns / (h as f64).sqrt(),
            af.scale()[h - 1]
        );
    }
    println!("\nnaive sd grows exactly as sqrt(h); average sd is flat.");
    Ok(())
}
