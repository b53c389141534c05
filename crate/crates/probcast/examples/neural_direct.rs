//! Direct multi-horizon neural forecasting: a decomposition-linear model
//! trained by minibatch gradient descent with early stopping, then frozen
//! to a text checkpoint and reloaded bit for bit.

use std::io::Cursor;

use probcast::neural::{
    load_checkpoint, save_checkpoint, train_dlinear, DLinearConfig, DirectForecaster, HeadKind,
    TrainConfig,
};
use probcast::series::{chronological_split, make_eval_windows, make_training_windows, ForecastTask};
use probcast::synth::{generate, GeneratorKind, GeneratorSpec};

fn main() -> Result<(), probcast::error::Error> {
    let spec = GeneratorSpec::new(
        GeneratorKind::Ar {
            coefficients: vec![0.85],
            noise_std: 1.0,
            intercept: 0.0,
        },
        3000,
        23,
    )?;
    let series = generate(&spec)?;
    let split = chronological_split(&series, (0.6, 0.2, 0.2))?;

    let horizon = 18;
    let config = DLinearConfig {
        history_length: 36,
        horizon,
        feature_dim: 1,
        kernel_size: 9,
        head: HeadKind::StudentT,
    };
    let task = ForecastTask::new(config.history_length, horizon)?;
    let train_windows = make_training_windows(series.values(), split.train_end, &task);
    let val_windows = make_eval_windows(&series, split.train_end, split.val_end, &task)?;
    println!(
        "{} training windows, {} validation windows",
        train_windows.len(),
        val_windows.len()
    );

    let train_config = TrainConfig {
        learning_rate: 3e-3,
        batch_size: 64,
        max_epochs: 60,
        early_stop_patience: 10,
        seed: 4,
    };
    let (model, report) = train_dlinear(&config, &train_windows, &val_windows, &train_config)?;
    println!(
        "stopped after {} epochs, best epoch {}, lr halved {} times",
        report.trace.len(),
        report.best_epoch,
        report.lr_halved
    );
    for record in report.trace.iter().step_by(10) {
        println!(
            "epoch {:>3}: train loss {:.4}, val loss {:.4}",
            record.epoch, record.train_loss, record.val_loss
        );
    }

    // Checkpoint round trip through an in-memory buffer.
    let forecaster = DirectForecaster::DLinear(model);
    let mut buffer = Vec::new();
    save_checkpoint(&forecaster, &mut buffer)?;
    let restored = load_checkpoint(Cursor::new(&buffer))?;
    let history = &series.values()[split.val_end - 36..split.val_end];
    let a = forecaster.forecast(history)?;
    let b = restored.forecast(history)?;
    let qa = a.to_quantiles(&[0.5])?;
    let qb = b.to_quantiles(&[0.5])?;
    assert_eq!(qa.values(), qb.values());
    println!(
        "checkpoint is {} bytes; reloaded forecast matches exactly (median at step 1: {:.4})",
        buffer.len(),
        qa.value_at(0, 0.5)?
    );
    Ok(())
}
