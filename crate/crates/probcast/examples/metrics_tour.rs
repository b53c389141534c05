//! The evaluation stack on one batch: weighted quantile loss, scaled
//! interval score, point errors, per-sample correlation, uncertainty
//! calibration, and the paired significance test used for model ranking.

use probcast::baseline::{AverageModel, NaiveModel};
use probcast::forecast::Forecast;
use probcast::metrics::{compute_report, paired_t_one_sided, EvalBatch};
use probcast::series::{chronological_split, default_quantile_levels, make_eval_windows, ForecastTask};
use probcast::synth::{generate, GeneratorKind, GeneratorSpec};

fn main() -> Result<(), probcast::error::Error> {
    let spec = GeneratorSpec::new(
        GeneratorKind::Ar {
            coefficients: vec![0.8],
            noise_std: 1.0,
            intercept: 0.0,
        },
        4000,
        31,
    )?;
    let series = generate(&spec)?;
    let split = chronological_split(&series, (0.6, 0.2, 0.2))?;
    let train = &series.values()[..split.train_end];
    let training_std = {
        let mean = train.iter().sum::<f64>() / train.len() as f64;
        (train.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (train.len() - 1) as f64).sqrt()
    };

    let task = ForecastTask::new(1, 35)?;
    let windows = make_eval_windows(&series, split.val_end, split.test_end, &task)?;
    let naive = NaiveModel::fit(train)?;
    let average = AverageModel::fit(train)?;

    let mut naive_batch = EvalBatch::new(default_quantile_levels())?;
    let mut average_batch = EvalBatch::new(default_quantile_levels())?;
    for w in &windows {
        let last = *w.history.last().unwrap();
        naive_batch.push(
            w.target.clone(),
            &Forecast::from(naive.forecast(last, 35)?),
            Some(training_std),
        )?;
        average_batch.push(
            w.target.clone(),
            &Forecast::from(average.forecast(35)?),
            Some(training_std),
        )?;
    }

    for (name, batch) in [("naive", &naive_batch), ("average", &average_batch)] {
        let r = compute_report(batch)?;
        println!(
            "{name:<8} mwql={:.4} msis={:.4} mae={:.4} mse={:.4} median_corr={:?} crossing_rate={:.2}",
            r.mwql.unwrap(),
            r.msis.unwrap(),
            r.mae.unwrap(),
            r.mse.unwrap(),
            r.median_corr,
            r.crossing_rate
        );
        let ur = r.uncertainty_ratio_per_step.unwrap();
        println!(
            "         uncertainty ratio: step1={:.3} step18={:.3} step35={:.3} (1.0 = matches the data's spread)",
            ur[0], ur[17], ur[34]
        );
    }

    // Paired one-sided test: is a < b on per-window losses? Here we feed
    // per-step curves as paired samples for illustration.
    let a = compute_report(&naive_batch)?;
    let b = compute_report(&average_batch)?;
    let xs: Vec<f64> = a.mwql_per_step.iter().map(|v| v.unwrap()).collect();
    let ys: Vec<f64> = b.mwql_per_step.iter().map(|v| v.unwrap()).collect();
    let t = paired_t_one_sided(&xs, &ys)?;
    println!(
        "paired t (naive < average over steps): t={:.3} p={:.4} degenerate={}",
        t.t, t.p, t.degenerate
    );
    Ok(())
}
