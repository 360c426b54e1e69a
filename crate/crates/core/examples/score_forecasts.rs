//! Proper scoring rules for quantile and distributional forecasts.

use hybridcast::aggregate::{cdf_from_quantiles, GridSpec};
use hybridcast::metrics::{crps, mpl, mws, pinball, winkler};
use hybridcast::QuantileForecast;

fn main() -> hybridcast::Result<()> {
    println!("pinball(y=10, q=8, tau=0.5)  = {}", pinball(10.0, 8.0, 0.5));
    println!("pinball(y=10, q=12, tau=0.9) = {:.1}", pinball(10.0, 12.0, 0.9));
    println!("winkler([10, 20], y=25, alpha=0.2) = {}", winkler(10.0, 20.0, 25.0, 0.2));

    let levels = [0.1, 0.5, 0.9];
    let forecasts = vec![vec![8.0, 10.0, 12.0], vec![5.0, 9.0, 14.0], vec![1.0, 2.0, 3.0]];
    let actual = [11.0, 15.0, 2.5];
    println!("MPL = {:.4}", mpl(&actual, &forecasts, &levels)?);
    let lo: Vec<f64> = forecasts.iter().map(|f| f[0]).collect();
    let hi: Vec<f64> = forecasts.iter().map(|f| f[2]).collect();
    println!("MWS = {:.4}", mws(&lo, &hi, &actual, 0.2)?);

    // CRPS needs a full distribution: interpolate the quantiles on a grid.
    let qf = QuantileForecast::new(levels.to_vec(), forecasts[0].clone())?;
    let grid = GridSpec::covering(0.0, 20.0, 0.01)?;
    let dist = cdf_from_quantiles(&qf, grid, (0.0, 20.0))?;
    println!("CRPS at y=11 = {:.4}", crps(&dist, 11.0));
    Ok(())
}
