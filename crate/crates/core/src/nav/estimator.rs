use super::NavError;
use crate::geom::Vec2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    /// Predictions used per fit, the newest included.
    pub window: usize,
    /// Below this many predictions the newest one is returned unchanged.
    pub min_samples: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            window: 8,
            min_samples: 2,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), NavError> {
        if self.window < 2 {
            return Err(NavError::Config("estimator window must be at least 2".into()));
        }
        if self.min_samples == 0 {
            return Err(NavError::Config("estimator minimum samples must be positive".into()));
        }
        Ok(())
    }
}

/// Least-squares line through `values` against their index, evaluated at the last index.
fn fit_last(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let v_mean = values.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stv = 0.0;
    for (i, v) in values.iter().enumerate() {
        let dt = i as f64 - t_mean;
        stt += dt * dt;
        stv += dt * (v - v_mean);
    }
    v_mean + stv / stt * (n - 1.0 - t_mean)
}

/// Self-position from the recent predictions, ordered oldest to newest: x and y are
/// fitted independently against step index over the last `window` predictions.
pub fn estimate_position(recent: &[Vec2], config: &EstimatorConfig) -> Result<Vec2, NavError> {
    let newest = *recent.last().ok_or(NavError::EmptyHistory)?;
    let used = &recent[recent.len().saturating_sub(config.window)..];
    if used.len() < config.min_samples.max(2) {
        return Ok(newest);
    }
    let xs: Vec<f64> = used.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.y).collect();
    Ok(Vec2::new(fit_last(&xs), fit_last(&ys)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Solve the 2x2 normal equations `[n, St; St, Stt] [a; b] = [Sv; Stv]` by Cramer's
    /// rule with raw (uncentered) sums.
    fn normal_equations(t: &[f64], v: &[f64], at: f64) -> f64 {
        let n = t.len() as f64;
        let st: f64 = t.iter().sum();
        let stt: f64 = t.iter().map(|x| x * x).sum();
        let sv: f64 = v.iter().sum();
        let stv: f64 = t.iter().zip(v).map(|(a, b)| a * b).sum();
        let det = n * stt - st * st;
        let a = (sv * stt - st * stv) / det;
        let b = (n * stv - st * sv) / det;
        a + b * at
    }

    fn cfg() -> EstimatorConfig {
        EstimatorConfig::default()
    }

    #[test]
    fn constant_predictions() {
        let pts = vec![Vec2::new(5.0, 5.0); 8];
        assert_eq!(estimate_position(&pts, &cfg()).unwrap(), Vec2::new(5.0, 5.0));
    }

    #[test]
    fn collinear_predictions() {
        let pts: Vec<Vec2> = (0..8).map(|j| Vec2::new(0.0, j as f64)).collect();
        let e = estimate_position(&pts, &cfg()).unwrap();
        assert!((e.y - 7.0).abs() < 1e-12 && e.x.abs() < 1e-12);
    }

    #[test]
    fn outlier_matches_closed_form() {
        let mut pts: Vec<Vec2> = (0..8).map(|j| Vec2::new(0.0, j as f64)).collect();
        pts[3].y = 20.0;
        let t: Vec<f64> = (0..8).map(|j| j as f64).collect();
        let v: Vec<f64> = pts.iter().map(|p| p.y).collect();
        let e = estimate_position(&pts, &cfg()).unwrap();
        assert!((e.y - normal_equations(&t, &v, 7.0)).abs() < 1e-12);
    }

    #[test]
    fn warm_up_and_window() {
        let one = [Vec2::new(1.0, 2.0)];
        assert_eq!(estimate_position(&one, &cfg()).unwrap(), one[0]);
        let two = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 4.0)];
        assert_eq!(estimate_position(&two, &cfg()).unwrap(), two[1]);
        let strict = EstimatorConfig { window: 8, min_samples: 3 };
        assert_eq!(estimate_position(&two, &strict).unwrap(), two[1]);
        // only the last window counts
        let mut pts = vec![Vec2::new(1000.0, 1000.0); 5];
        pts.extend((0..8).map(|j| Vec2::new(j as f64, 0.0)));
        assert!((estimate_position(&pts, &cfg()).unwrap().x - 7.0).abs() < 1e-12);
        assert!(matches!(estimate_position(&[], &cfg()), Err(NavError::EmptyHistory)));
    }

    #[test]
    fn invalid_window_rejected() {
        assert!(EstimatorConfig { window: 1, min_samples: 2 }.validate().is_err());
        assert!(cfg().validate().is_ok());
    }

    proptest! {
        #[test]
        fn matches_normal_equations(
            pts in prop::collection::vec((-500.0f64..500.0, -500.0f64..500.0), 2..20),
            window in 2usize..12,
        ) {
            let pts: Vec<Vec2> = pts.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
            let c = EstimatorConfig { window, min_samples: 2 };
            let used = &pts[pts.len().saturating_sub(window)..];
            let t: Vec<f64> = (0..used.len()).map(|j| j as f64).collect();
            let last = (used.len() - 1) as f64;
            let ex = normal_equations(&t, &used.iter().map(|p| p.x).collect::<Vec<_>>(), last);
            let ey = normal_equations(&t, &used.iter().map(|p| p.y).collect::<Vec<_>>(), last);
            let e = estimate_position(&pts, &c).unwrap();
            prop_assert!((e.x - ex).abs() < 1e-9 && (e.y - ey).abs() < 1e-9);
        }
    }
}
