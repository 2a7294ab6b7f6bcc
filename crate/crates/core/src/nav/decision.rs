use super::drive::TraceRecord;
use super::NavError;
use serde::{Deserialize, Serialize};

/// Along-track interval in which the turn must be initiated. `l1` is where the turning
/// protocol should start, `l2` the last point from which a safe turn is possible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachRegion {
    pub l1: f64,
    pub l2: f64,
}

impl Default for ApproachRegion {
    fn default() -> Self {
        Self { l1: -45.0, l2: -15.0 }
    }
}

impl ApproachRegion {
    pub fn validate(&self) -> Result<(), NavError> {
        if !(self.l1 < self.l2 && self.l2 <= 0.0) {
            return Err(NavError::Config(format!(
                "approach region needs l1 < l2 <= 0, got ({}, {})",
                self.l1, self.l2
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnDecision {
    Executed,
    Missed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnOutcome {
    pub decision: TurnDecision,
    pub region: ApproachRegion,
    pub true_crossing_l1: Option<usize>,
    pub est_crossing_l1: Option<usize>,
    pub true_crossing_l2: Option<usize>,
}

fn crossing(trace: &[TraceRecord], line: f64, coord: impl Fn(&TraceRecord) -> f64) -> Option<usize> {
    trace.iter().find(|r| coord(r) >= line).map(|r| r.step)
}

/// The turn happens iff the estimated position enters the region no later than the step
/// at which the true position passes `l2`.
pub fn turn_decision(trace: &[TraceRecord], region: &ApproachRegion) -> Result<TurnOutcome, NavError> {
    if trace.is_empty() {
        return Err(NavError::EmptyTrace);
    }
    region.validate()?;
    let true_crossing_l1 = crossing(trace, region.l1, |r| r.y_true_rel);
    let true_crossing_l2 = crossing(trace, region.l2, |r| r.y_true_rel);
    let est_crossing_l1 = crossing(trace, region.l1, |r| r.y_est_rel);
    let executed = match (est_crossing_l1, true_crossing_l2) {
        (Some(e), Some(t)) => e <= t,
        // the drive ended before the last turning point
        (Some(_), None) => true,
        (None, _) => false,
    };
    Ok(TurnOutcome {
        decision: if executed { TurnDecision::Executed } else { TurnDecision::Missed },
        region: *region,
        true_crossing_l1,
        est_crossing_l1,
        true_crossing_l2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Trace along -200..=0 every 5 m with estimate = true + `lag(true)`.
    fn trace(lag: impl Fn(f64) -> f64) -> Vec<TraceRecord> {
        (0..=40)
            .map(|j| {
                let y = -200.0 + 5.0 * j as f64;
                let e = y + lag(y);
                TraceRecord {
                    step: j,
                    true_x: 0.0,
                    true_y: y,
                    pred_x: 0.0,
                    pred_y: e,
                    est_x: 0.0,
                    est_y: e,
                    y_true_rel: y,
                    y_pred_rel: e,
                    y_est_rel: e,
                }
            })
            .collect()
    }

    #[test]
    fn perfect_localization_executes() {
        let o = turn_decision(&trace(|_| 0.0), &ApproachRegion::default()).unwrap();
        assert_eq!(o.decision, TurnDecision::Executed);
        assert_eq!(o.est_crossing_l1, o.true_crossing_l1);
        assert_eq!(o.true_crossing_l1, Some(31));
        assert_eq!(o.true_crossing_l2, Some(37));
    }

    #[test]
    fn constant_lag_of_forty_misses() {
        let o = turn_decision(&trace(|_| -40.0), &ApproachRegion::default()).unwrap();
        assert_eq!(o.decision, TurnDecision::Missed);
        // estimate reaches -45 when the truth is at -5
        assert_eq!(o.est_crossing_l1, Some(39));
    }

    #[test]
    fn seventeen_meter_lag_at_l1_still_outside_at_l2() {
        // lag grows from 17 m at L1 to 33 m at L2
        let lag = |y: f64| if y < -45.0 { -17.0 } else { -17.0 - (y + 45.0) * 16.0 / 30.0 };
        let t = trace(lag);
        let at_l1 = t.iter().find(|r| r.y_true_rel >= -45.0).unwrap();
        assert!((at_l1.y_true_rel - at_l1.y_est_rel - 17.0).abs() < 1e-9);
        let o = turn_decision(&t, &ApproachRegion::default()).unwrap();
        let at_l2 = &t[o.true_crossing_l2.unwrap()];
        assert!(at_l2.y_est_rel < -45.0);
        assert_eq!(o.decision, TurnDecision::Missed);
    }

    #[test]
    fn bad_regions_rejected() {
        let t = trace(|_| 0.0);
        for (l1, l2) in [(-15.0, -45.0), (-20.0, -20.0), (-20.0, 5.0)] {
            assert!(turn_decision(&t, &ApproachRegion { l1, l2 }).is_err());
        }
        assert!(matches!(turn_decision(&[], &ApproachRegion::default()), Err(NavError::EmptyTrace)));
    }

    #[test]
    fn outcome_json_round_trip() {
        let o = turn_decision(&trace(|_| -40.0), &ApproachRegion::default()).unwrap();
        let s = serde_json::to_string(&o).unwrap();
        assert!(s.contains("\"missed\""));
        assert_eq!(serde_json::from_str::<TurnOutcome>(&s).unwrap(), o);
    }

    proptest! {
        #[test]
        fn perfect_stub_always_executes(l1 in -200.0f64..-1.0, gap in 0.5f64..100.0) {
            let l2 = (l1 + gap).min(0.0);
            prop_assume!(l1 < l2);
            let o = turn_decision(&trace(|_| 0.0), &ApproachRegion { l1, l2 }).unwrap();
            prop_assert_eq!(o.decision, TurnDecision::Executed);
            prop_assert!(o.true_crossing_l1 <= o.true_crossing_l2);
        }

        #[test]
        fn large_constant_lag_flips_decision(l1 in -150.0f64..-30.0, gap in 20.0f64..30.0, extra in 0.1f64..50.0) {
            let region = ApproachRegion { l1, l2: l1 + gap };
            let base = turn_decision(&trace(|_| 0.0), &region).unwrap();
            prop_assert_eq!(base.decision, TurnDecision::Executed);
            // the true position at the L1 crossing step can sit up to one spacing past L1,
            // so the lag must exceed the crossing gap plus one step
            let steps = base.true_crossing_l2.unwrap() - base.true_crossing_l1.unwrap();
            let c = (steps + 1) as f64 * 5.0 + extra;
            let lagged = turn_decision(&trace(|_| -c), &region).unwrap();
            prop_assert_eq!(lagged.decision, TurnDecision::Missed);
        }
    }
}
