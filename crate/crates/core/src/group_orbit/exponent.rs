use serde::{Deserialize, Serialize};
use std::io::Write;

use super::{GroupBall, OrbitError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub delta_hat: f64,
    pub window: (f64, f64),
    /// `(R, N(R))` at the fitted radii.
    pub counts: Vec<(f64, u64)>,
    pub slope_stderr: f64,
    /// `(s, c(s))` partial Poincaré sums at `s = delta_hat (1 + j/10)`, `j = 0..=5`.
    pub divergence_diag: Vec<(f64, f64)>,
}

/// `N(R) = #{γ : d(O, γO) <= R}` over the ball.
pub fn counting_function(ball: &GroupBall, r: f64) -> Result<usize, OrbitError> {
    if r > ball.r_max() {
        return Err(OrbitError::RExceedsBall { r, r_max: ball.r_max() });
    }
    Ok(ball.radii().partition_point(|&x| x <= r))
}

/// Partial Poincaré sum `Σ exp(-s d(O, γO))`, summed in ball order.
pub fn poincare_partial(ball: &GroupBall, s: f64) -> f64 {
    ball.radii().iter().map(|r| (-s * r).exp()).sum()
}

pub fn default_window(ball: &GroupBall) -> (f64, f64) {
    (0.4 * ball.r_max(), ball.r_max())
}

/// Least-squares slope of `log N(R)` against `R` on 100 evenly spaced radii.
pub fn estimate_exponent(ball: &GroupBall, window: Option<(f64, f64)>) -> Result<ExponentEstimate, OrbitError> {
    let (r0, r1) = window.unwrap_or_else(|| default_window(ball));
    if !(r0 >= 0.0 && r0 < r1 && r1 <= ball.r_max()) {
        return Err(OrbitError::InvalidArgument(format!(
            "window ({r0}, {r1}) not inside [0, {}]",
            ball.r_max()
        )));
    }
    let radii = ball.radii();
    let inside = radii.iter().filter(|&&r| r >= r0 && r <= r1);
    let mut distinct = 0usize;
    let mut last = f64::NEG_INFINITY;
    for &r in inside {
        if r - last > 1e-9 {
            distinct += 1;
            last = r;
        }
    }
    if distinct < 5 {
        return Err(OrbitError::InsufficientData(format!(
            "{distinct} distinct radii in [{r0}, {r1}], need 5"
        )));
    }

    const POINTS: usize = 100;
    let counts: Vec<(f64, u64)> = (0..POINTS)
        .map(|i| {
            let r = r0 + (r1 - r0) * i as f64 / (POINTS - 1) as f64;
            (r, radii.partition_point(|&x| x <= r) as u64)
        })
        .collect();
    let xs: Vec<f64> = counts.iter().map(|c| c.0).collect();
    let ys: Vec<f64> = counts.iter().map(|c| (c.1 as f64).ln()).collect();
    let (slope, stderr) = fit_slope(&xs, &ys);
    if !(slope > 0.0) {
        return Err(OrbitError::InsufficientData(format!("fitted slope {slope} is not positive")));
    }
    let divergence_diag = (0..=5)
        .map(|j| {
            let s = slope * (1.0 + j as f64 / 10.0);
            (s, poincare_partial(ball, s))
        })
        .collect();
    Ok(ExponentEstimate { delta_hat: slope, window: (r0, r1), counts, slope_stderr: stderr, divergence_diag })
}

/// Ordinary least squares slope and its standard error.
fn fit_slope(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - icept - slope * a).powi(2)).sum();
    let stderr = if x.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (slope, stderr)
}

/// Counting table with columns `R, N, logN` on `points` evenly spaced radii in `(0, r_max]`.
pub fn write_counting_csv<W: Write>(ball: &GroupBall, points: usize, w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["R", "N", "logN"])?;
    for i in 1..=points {
        let r = ball.r_max() * i as f64 / points as f64;
        let n = ball.radii().partition_point(|&x| x <= r);
        out.write_record([r.to_string(), n.to_string(), (n as f64).ln().to_string()])?;
    }
    out.flush()?;
    Ok(())
}
