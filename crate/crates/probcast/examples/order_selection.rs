//! Two ways to pick an autoregressive order on the same data: corrected
//! information criterion over a bounded (p, q) sweep, and validation
//! quantile loss with early stopping over pure AR orders.

use probcast::arma::{select_order_aicc_bounded, select_order_valql, ArModel};
use probcast::series::{chronological_split, make_eval_windows, ForecastTask};
use probcast::synth::{generate, GeneratorKind, GeneratorSpec};

fn main() -> Result<(), probcast::error::Error> {
    // AR(2) ground truth; both procedures should land at p = 2.
    let spec = GeneratorSpec::new(
        GeneratorKind::Ar {
            coefficients: vec![0.6, 0.25],
            noise_std: 1.0,
            intercept: 0.0,
        },
        6000,
        11,
    )?;
    let series = generate(&spec)?;
    let split = chronological_split(&series, (0.6, 0.2, 0.2))?;
    let train = &series.values()[..split.train_end];

    let aicc = select_order_aicc_bounded(train, 100, 12, 2)?;
    println!(
        "aicc:  chose (p, q) = {:?} after {} fits",
        aicc.chosen,
        aicc.tried.len()
    );
    let mut best: Vec<_> = aicc.tried.clone();
    best.sort_by(|a, b| a.2.total_cmp(&b.2));
    for (p, q, value) in best.iter().take(3) {
        println!("       (p={p}, q={q}) criterion={value:.2}");
    }

    let task = ForecastTask::new(80, 35)?;
    let val_windows = make_eval_windows(&series, split.train_end, split.val_end, &task)?;
    let valql = select_order_valql(train, &val_windows, &task, 10)?;
    println!(
        "valql: chose p = {} after {} fits (patience stops the sweep)",
        valql.chosen.0,
        valql.tried.len()
    );

    let model = ArModel::fit(train, valql.chosen.0)?;
    println!("fitted coefficients: {:?}", model.coefficients());
    Ok(())
}
