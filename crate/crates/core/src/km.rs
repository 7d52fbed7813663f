//! Kaplan–Meier product-limit estimation and step survival curves.

use crate::error::{Error, Result};
use crate::panel::CensoredObservation;

/// Right-continuous, piecewise-constant survival curve with `S(0) = 1`.
///
/// `values[j]` holds on `[jump_times[j], jump_times[j + 1])`; before the first
/// jump the curve is 1 and after the last it carries the last value forward.
#[derive(Clone, Debug, PartialEq)]
pub struct StepSurvival {
    jump_times: Vec<f64>,
    values: Vec<f64>,
}

impl StepSurvival {
    pub fn new(jump_times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if jump_times.len() != values.len() {
            return Err(Error::InvalidArgument(
                "jump_times and values must have equal length".into(),
            ));
        }
        if jump_times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidArgument("jump times must be finite and nonnegative".into()));
        }
        if jump_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("jump times must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("survival values must lie in [0, 1]".into()));
        }
        if values.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::InvalidArgument("survival values must be non-increasing".into()));
        }
        Ok(Self { jump_times, values })
    }

    /// `S ≡ 1`.
    pub fn constant_one() -> Self {
        Self {
            jump_times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        // number of jumps at or before t
        let k = self.jump_times.partition_point(|&jt| jt <= t);
        if k == 0 {
            1.0
        } else {
            self.values[k - 1]
        }
    }

    pub fn subsample_on_grid(&self, grid: &[f64]) -> Result<Vec<f64>> {
        if grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidArgument("grid must be sorted ascending".into()));
        }
        if grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::InvalidArgument("grid points must be finite and nonnegative".into()));
        }
        Ok(grid.iter().map(|&t| self.evaluate(t)).collect())
    }
}

/// Risk-set bookkeeping at one distinct event time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KmStep {
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub survival: f64,
}

/// Product-limit table. Events and censorings tied at the same time are
/// resolved events-first: the censored subjects stay in that risk set.
pub fn km_table(cell: &[CensoredObservation]) -> Result<Vec<KmStep>> {
    if cell.is_empty() {
        return Err(Error::EmptyRiskSet);
    }
    if cell.iter().any(|o| !o.time.is_finite()) {
        return Err(Error::InvalidArgument("non-finite observation time".into()));
    }
    let mut sorted: Vec<(f64, bool)> = cell.iter().map(|o| (o.time, o.event)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut steps = Vec::new();
    let mut at_risk = sorted.len();
    let mut survival = 1.0;
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut j = i;
        let mut events = 0;
        while j < sorted.len() && sorted[j].0 == t {
            events += usize::from(sorted[j].1);
            j += 1;
        }
        if events > 0 {
            survival *= (at_risk - events) as f64 / at_risk as f64;
            steps.push(KmStep {
                time: t,
                at_risk,
                events,
                survival,
            });
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(steps)
}

pub fn km_fit(cell: &[CensoredObservation]) -> Result<StepSurvival> {
    let table = km_table(cell)?;
    let (jump_times, values) = table.iter().map(|s| (s.time, s.survival.clamp(0.0, 1.0))).unzip();
    Ok(StepSurvival { jump_times, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_obs() -> Vec<CensoredObservation> {
        vec![
            CensoredObservation::event(1.0),
            CensoredObservation::censored(2.0),
            CensoredObservation::event(3.0),
        ]
    }

    #[test]
    fn single_event() {
        let s = km_fit(&[CensoredObservation::event(5.0)]).unwrap();
        assert_eq!(s.evaluate(0.0), 1.0);
        assert_eq!(s.evaluate(4.999), 1.0);
        assert_eq!(s.evaluate(5.0), 0.0);
        assert_eq!(s.evaluate(1e6), 0.0);
    }

    #[test]
    fn hand_product_limit() {
        let s = km_fit(&three_obs()).unwrap();
        assert_eq!(s.jump_times(), [1.0, 3.0]);
        assert_eq!(s.values(), [2.0 / 3.0, 0.0]);
        assert_eq!(s.evaluate(0.5), 1.0);
        assert_eq!(s.evaluate(1.0), 2.0 / 3.0);
        assert_eq!(s.evaluate(1.5), 2.0 / 3.0);
        assert_eq!(s.evaluate(3.0), 0.0);
        assert_eq!(s.subsample_on_grid(&[0.5, 1.5, 3.5]).unwrap(), vec![1.0, 2.0 / 3.0, 0.0]);
    }

    #[test]
    fn all_censored_is_flat() {
        let cell: Vec<_> = (1..=5).map(|t| CensoredObservation::censored(t as f64)).collect();
        let s = km_fit(&cell).unwrap();
        assert!(s.jump_times().is_empty());
        assert!((0..100).all(|t| s.evaluate(t as f64 * 0.1) == 1.0));
    }

    #[test]
    fn empty_cell_errors() {
        let err = km_fit(&[]).unwrap_err();
        assert_eq!(err.to_string(), "empty risk set");
    }

    #[test]
    fn carry_forward() {
        let s = StepSurvival::new(vec![2.0, 7.0], vec![0.8, 0.4]).unwrap();
        assert_eq!(s.evaluate(100.0), 0.4);
        assert_eq!(s.evaluate(0.0), 1.0);
    }

    #[test]
    fn grid_rules() {
        let s = StepSurvival::constant_one();
        assert_eq!(s.subsample_on_grid(&[0.0]).unwrap(), vec![1.0]);
        let grid: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(s.subsample_on_grid(&grid).unwrap(), vec![1.0; 100]);
        assert!(s.subsample_on_grid(&[1.0, 0.5]).is_err());
    }

    #[test]
    fn tied_event_and_censoring_events_first() {
        // at t=2: n=3 (the censored subject is still at risk), d=1
        let cell = vec![
            CensoredObservation::event(2.0),
            CensoredObservation::censored(2.0),
            CensoredObservation::event(4.0),
        ];
        let table = km_table(&cell).unwrap();
        assert_eq!(table[0].at_risk, 3);
        assert_eq!(table[0].events, 1);
        assert_eq!(table[1].at_risk, 1);
        assert_eq!(km_fit(&cell).unwrap().values(), [2.0 / 3.0, 0.0]);
    }

    #[test]
    fn tied_events_share_a_jump() {
        let cell = vec![
            CensoredObservation::event(1.0),
            CensoredObservation::event(1.0),
            CensoredObservation::event(2.0),
            CensoredObservation::censored(3.0),
        ];
        let s = km_fit(&cell).unwrap();
        assert_eq!(s.values(), [0.5, 0.25]);
    }

    #[test]
    fn rejects_malformed_steps() {
        assert!(StepSurvival::new(vec![1.0, 1.0], vec![0.5, 0.4]).is_err());
        assert!(StepSurvival::new(vec![1.0, 2.0], vec![0.4, 0.5]).is_err());
        assert!(StepSurvival::new(vec![1.0], vec![1.5]).is_err());
    }
}
