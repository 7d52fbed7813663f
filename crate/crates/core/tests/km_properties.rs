mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;

use ssc_core::km::{km_fit, km_table};
use ssc_core::panel::CensoredObservation;

fn probe_grid(cell: &[CensoredObservation]) -> Vec<f64> {
    let max = cell.iter().map(|o| o.time).fold(0.0, f64::max);
    let mut probes: Vec<f64> = (0..=400).map(|i| max * 1.1 * i as f64 / 400.0).collect();
    for o in cell {
        probes.push(o.time);
        probes.push((o.time - 1e-9).max(0.0));
    }
    probes.sort_by(f64::total_cmp);
    probes
}

#[test]
fn uncensored_cells_match_the_empirical_cdf() {
    let gap = common::km_ecdf_gap(11, 100);
    assert!(gap <= 1e-12, "{gap}");
}

#[test]
fn shuffling_leaves_the_curve_unchanged() {
    let mut rng = common::rng(5);
    for _ in 0..50 {
        let mut cell = common::tied_cell(&mut rng, 30);
        let reference = km_fit(&cell).unwrap();
        cell.shuffle(&mut rng);
        assert_eq!(km_fit(&cell).unwrap(), reference);
    }
}

proptest! {
    #[test]
    fn curve_is_non_increasing_and_in_unit_interval(
        raw in prop::collection::vec((0.0f64..50.0, any::<bool>()), 1..80)
    ) {
        let cell: Vec<_> = raw
            .iter()
            .map(|&(t, e)| if e { CensoredObservation::event(t) } else { CensoredObservation::censored(t) })
            .collect();
        let fit = km_fit(&cell).unwrap();
        let probes = probe_grid(&cell);
        let values: Vec<f64> = probes.iter().map(|&t| fit.evaluate(t)).collect();
        prop_assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(values.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn risk_sets_count_subjects_still_under_observation(
        raw in prop::collection::vec((1u8..20, any::<bool>()), 1..60)
    ) {
        let cell: Vec<_> = raw
            .iter()
            .map(|&(t, e)| {
                let t = t as f64;
                if e { CensoredObservation::event(t) } else { CensoredObservation::censored(t) }
            })
            .collect();
        for step in km_table(&cell).unwrap() {
            let at_risk = cell.iter().filter(|o| o.time >= step.time).count();
            let events = cell.iter().filter(|o| o.event && o.time == step.time).count();
            prop_assert_eq!(step.at_risk, at_risk);
            prop_assert_eq!(step.events, events);
            prop_assert!(step.events > 0 && step.events <= step.at_risk);
        }
    }
}
