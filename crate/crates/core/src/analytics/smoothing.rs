use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AnalyticsError, TrendSeries, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeMode {
    /// Fit over whatever part of the window exists.
    Shrink,
    /// Reflect the series about its end points.
    Mirror,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingConfig {
    pub window: usize,
    pub poly_order: usize,
    pub edge_mode: EdgeMode,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            window: 10,
            poly_order: 2,
            edge_mode: EdgeMode::Shrink,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<(), AnalyticsError> {
        if self.window <= self.poly_order {
            return Err(AnalyticsError::Config(format!(
                "window {} must exceed poly_order {}",
                self.window, self.poly_order
            )));
        }
        Ok(())
    }

    /// Points before and after the target: `floor(w/2)` left, the rest right.
    fn reach(&self) -> (usize, usize) {
        let left = self.window / 2;
        (left, self.window - 1 - left)
    }
}

/// Value at `x0` of the least-squares polynomial through `(xs, ys)`.
fn fit_at(xs: &[f64], ys: &[f64], x0: f64, order: usize) -> Result<f64, AnalyticsError> {
    let scale = xs.iter().map(|x| (x - x0).abs()).fold(0.0, f64::max).max(1.0);
    let a = DMatrix::from_fn(xs.len(), order + 1, |r, c| ((xs[r] - x0) / scale).powi(c as i32));
    let b = DVector::from_column_slice(ys);
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-13)
        .map_err(|e| AnalyticsError::InsufficientData(e.to_string()))?;
    Ok(coef[0])
}

/// Savitzky-Golay smoothing on the series' actual years, so gaps are allowed.
/// Every point becomes the value, at its own position, of the polynomial of
/// degree `poly_order` fitted over its window. Smoothed percentages are
/// clipped to `[0, 100]`.
pub fn savitzky_golay(series: &TrendSeries, config: &SmoothingConfig) -> Result<TrendSeries, AnalyticsError> {
    config.validate()?;
    let n = series.len();
    let order = config.poly_order;
    if n < order + 1 {
        return Err(AnalyticsError::InsufficientData(format!(
            "{n} point(s), need at least {} for order {order}",
            order + 1
        )));
    }
    if config.edge_mode == EdgeMode::Mirror && n < config.window {
        return Err(AnalyticsError::InsufficientData(format!(
            "mirror edges need at least {} points, got {n}",
            config.window
        )));
    }
    let xs: Vec<f64> = series.points.iter().map(|p| p.0 as f64).collect();
    let ys: Vec<f64> = series.points.iter().map(|p| p.1).collect();
    let (left, right) = config.reach();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let (wx, wy): (Vec<f64>, Vec<f64>) = match config.edge_mode {
            EdgeMode::Shrink => {
                let mut lo = i.saturating_sub(left);
                let mut hi = (i + right).min(n - 1);
                while hi - lo < order {
                    if lo > 0 {
                        lo -= 1;
                    } else {
                        hi += 1;
                    }
                }
                (xs[lo..=hi].to_vec(), ys[lo..=hi].to_vec())
            }
            EdgeMode::Mirror => (0..config.window)
                .map(|j| {
                    let k = i as isize - left as isize + j as isize;
                    let last = n as isize - 1;
                    if k < 0 {
                        (2.0 * xs[0] - xs[(-k) as usize], ys[(-k) as usize])
                    } else if k > last {
                        let m = (2 * last - k) as usize;
                        (2.0 * xs[n - 1] - xs[m], ys[m])
                    } else {
                        (xs[k as usize], ys[k as usize])
                    }
                })
                .unzip(),
        };
        let mut v = fit_at(&wx, &wy, xs[i], order)?;
        if series.kind == ValueKind::Percent {
            v = v.clamp(0.0, 100.0);
        }
        out.push((series.points[i].0, v));
    }
    Ok(TrendSeries {
        label: series.label.clone(),
        kind: series.kind,
        points: out,
    })
}
