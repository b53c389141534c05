//! Theta forecasting: the series is split into a linear-trend line and a
//! curvature-doubled line, each extrapolated separately. The standard
//! variant fixes the mixing weight; the optimized variant tunes the
//! smoothing against the tail of the data. Selection picks per series.

use probcast::series::{chronological_split, make_eval_windows, ForecastTask};
use probcast::synth::{generate, GeneratorKind, GeneratorSpec};
use probcast::theta::{select_theta_variant, theta_forecast, theta_line, ThetaVariant};

fn main() -> Result<(), probcast::error::Error> {
    let spec = GeneratorSpec::new(
        GeneratorKind::LinearTrend {
            intercept: 1.0,
            slope: 0.02,
            noise_std: 0.8,
        },
        3000,
        3,
    )?;
    let series = generate(&spec)?;
    let split = chronological_split(&series, (0.6, 0.2, 0.2))?;
    let history = &series.values()[split.train_end - 300..split.train_end];

    // The theta = 0 line is the fitted trend; theta = 2 doubles curvature.
    let trend = theta_line(history, 0.0)?;
    println!(
        "trend line: intercept={:.3} slope={:.4} (true slope 0.02)",
        trend.trend_intercept, trend.trend_slope
    );

    for variant in [ThetaVariant::Standard, ThetaVariant::Optimized] {
        let f = theta_forecast(history, 10, variant)?;
        println!(
            "{variant:?}: first step mean={:.3} sd={:.3}, tenth step mean={:.3}",
            f.location()[0],
            f.scale()[0],
            f.location()[9]
        );
    }

    let task = ForecastTask::new(300, 35)?;
    let val_windows = make_eval_windows(&series, split.train_end, split.val_end, &task)?;
    let chosen = select_theta_variant(&val_windows, &task)?;
    println!("selected on validation loss: {chosen:?}");
    Ok(())
}
