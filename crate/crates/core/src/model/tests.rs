use super::*;
use crate::fixtures::{agent, block, curve, four_agent_market};

#[test]
fn four_agent_market_is_well_formed() {
    assert!(validate_market(&four_agent_market()).is_empty());
}

#[test]
fn mar_below_minimum_is_reported() {
    let m = Market::new(1, vec![agent("a", vec![block("b", 1.0, vec![1.0], 0.005)])]);
    let report = validate_market(&m);
    assert!(report.has(&ViolationKind::MarBelowMinimum));
    assert!(report.to_string().contains("MAR below 0.01"));
}

#[test]
fn increasing_buy_curve_is_reported() {
    let m = Market::new(1, vec![agent("a", vec![curve("c", 0, CurveMode::Stepwise, &[(1.0, 1.0), (2.0, 3.0)])])]);
    let report = validate_market(&m);
    assert!(report.to_string().contains("non-concave buy curve"));
    let m = Market::new(1, vec![agent("a", vec![curve("c", 0, CurveMode::Stepwise, &[(1.0, -3.0), (2.0, -1.0)])])]);
    assert!(validate_market(&m).has(&ViolationKind::NonConvexSellCurve));
}

#[test]
fn structural_errors() {
    assert!(validate_market(&Market::new(1, vec![])).has(&ViolationKind::NoAgents));
    let mut b = block("b", 1.0, vec![1.0, 2.0], 1.0);
    let m = Market::new(1, vec![agent("a", vec![b.clone()])]);
    assert!(validate_market(&m).has(&ViolationKind::DimensionMismatch));
    if let BidKind::Block(blk) = &mut b.kind {
        blk.quantity = vec![1.0];
        blk.parent = Some("ghost".into());
    }
    let m = Market::new(1, vec![agent("a", vec![b])]);
    assert!(validate_market(&m).has(&ViolationKind::UnresolvedReference));
}

#[test]
fn link_cycles_and_loops() {
    let mut b1 = block("b1", 1.0, vec![1.0], 1.0);
    let mut b2 = block("b2", 1.0, vec![1.0], 1.0);
    if let BidKind::Block(x) = &mut b1.kind {
        x.parent = Some("b2".into());
    }
    if let BidKind::Block(x) = &mut b2.kind {
        x.parent = Some("b1".into());
    }
    let m = Market::new(1, vec![agent("a", vec![b1.clone(), b2.clone()])]);
    assert!(validate_market(&m).has(&ViolationKind::LinkCycle));

    for b in [&mut b1, &mut b2] {
        if let BidKind::Block(x) = &mut b.kind {
            x.parent = None;
        }
    }
    if let BidKind::Block(x) = &mut b1.kind {
        x.loop_partner = Some("b2".into());
    }
    let m = Market::new(1, vec![agent("a", vec![b1.clone(), b2.clone()])]);
    assert!(validate_market(&m).has(&ViolationKind::UnpairedLoop));
    if let BidKind::Block(x) = &mut b2.kind {
        x.loop_partner = Some("b1".into());
    }
    let m = Market::new(1, vec![agent("a", vec![b1, b2])]);
    assert!(validate_market(&m).is_empty());
}

#[test]
fn agent_value_examples() {
    let m = four_agent_market();
    assert_eq!(agent_value(&m.agents[0], &[1.0]).unwrap(), Some(12.0));
    assert_eq!(agent_value(&m.agents[0], &[0.0]).unwrap(), Some(0.0));
    assert_eq!(agent_value(&m.agents[3], &[0.5]).unwrap(), None);
    assert!(matches!(agent_value(&m.agents[3], &[0.5, 1.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn agent_bundle_examples() {
    let a = agent("a", vec![block("b", 4.0, vec![2.0, 2.0, 0.0], 0.5)]);
    assert_eq!(agent_bundle(&a, &[0.5], 3).unwrap(), vec![1.0, 1.0, 0.0]);
    assert_eq!(agent_bundle(&a, &[0.0], 3).unwrap(), vec![0.0; 3]);
    let m = four_agent_market();
    assert_eq!(agent_bundle(&m.agents[3], &[1.0], 1).unwrap(), vec![-2.0]);
}

#[test]
fn curve_segments_follow_merit_order() {
    let buy = HourlyCurveBid {
        hour: 0,
        mode: CurveMode::Stepwise,
        points: [(10.0, 40.0), (30.0, 30.0), (50.0, 10.0)]
            .iter()
            .map(|&(price, quantity)| CurvePoint { price, quantity })
            .collect(),
    };
    let segs = buy.segments();
    assert_eq!(segs.len(), 3);
    assert_eq!((segs[0].unit_price, segs[0].quantity), (50.0, 10.0));
    assert_eq!((segs[1].unit_price, segs[1].quantity), (30.0, 20.0));
    assert_eq!((segs[2].unit_price, segs[2].quantity), (10.0, 10.0));
    assert_eq!(buy.max_volume(), 40.0);
    assert_eq!(buy.value_at(0.25), 500.0);
    assert_eq!(buy.value_at(1.0), 500.0 + 600.0 + 100.0);

    let interp = HourlyCurveBid { mode: CurveMode::Interpolated, ..buy };
    let segs = interp.segments();
    assert_eq!(segs[1].unit_price, 40.0);
    assert_eq!(segs[2].unit_price, 20.0);

    let sell = HourlyCurveBid {
        hour: 0,
        mode: CurveMode::Stepwise,
        points: [(5.0, -1.0), (8.0, -3.0)].iter().map(|&(price, quantity)| CurvePoint { price, quantity }).collect(),
    };
    let segs = sell.segments();
    assert_eq!((segs[0].unit_price, segs[0].quantity), (5.0, -1.0));
    assert_eq!((segs[1].unit_price, segs[1].quantity), (8.0, -2.0));
    assert_eq!(sell.value_at(1.0), -5.0 - 16.0);
}

#[test]
fn exclusive_group_and_links_in_feasibility() {
    let mut b1 = block("b1", 5.0, vec![1.0], 1.0);
    let mut b2 = block("b2", 5.0, vec![1.0], 0.5);
    let mut b3 = block("b3", 5.0, vec![1.0], 1.0);
    if let BidKind::Block(x) = &mut b1.kind {
        x.group = Some("g".into());
    }
    if let BidKind::Block(x) = &mut b2.kind {
        x.group = Some("g".into());
    }
    if let BidKind::Block(x) = &mut b3.kind {
        x.parent = Some("b2".into());
    }
    let a = agent("a", vec![b1, b2, b3]);
    assert!(a.is_feasible(&[1.0, 0.0, 0.0]).unwrap());
    assert!(!a.is_feasible(&[1.0, 1.0, 0.0]).unwrap());
    assert!(a.is_feasible(&[0.0, 0.6, 1.0]).unwrap());
    assert!(!a.is_feasible(&[0.0, 0.4, 0.0]).unwrap());
    assert!(!a.is_feasible(&[1.0, 0.0, 1.0]).unwrap());
}

#[test]
fn bundle_value_picks_best_realisation() {
    let m = four_agent_market();
    let v = bundle_value(&m.agents[3], &[-2.0], 1e-9).unwrap().unwrap();
    assert!((v.value + 6.0).abs() < 1e-9);
    assert!(bundle_value(&m.agents[3], &[-1.0], 1e-9).unwrap().is_none());
    let v = bundle_value(&m.agents[2], &[-1.0], 1e-9).unwrap().unwrap();
    assert!((v.value + 1.0).abs() < 1e-9);
    assert!((v.acceptances[0] - 0.5).abs() < 1e-9);
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn bundle_is_linear_in_acceptances(
            q in proptest::collection::vec(-5.0f64..5.0, 3),
            a in 0.0f64..1.0,
            b in 0.0f64..1.0,
        ) {
            let ag = agent("a", vec![
                block("x", 1.0, q.clone(), 0.01),
                curve("c", 1, CurveMode::Stepwise, &[(1.0, 2.0), (3.0, 1.0)]),
            ]);
            let x = ag.bundle(&[a, b], 3).unwrap();
            let x1 = ag.bundle(&[a, 0.0], 3).unwrap();
            let x2 = ag.bundle(&[0.0, b], 3).unwrap();
            for k in 0..3 {
                prop_assert!((x[k] - x1[k] - x2[k]).abs() < 1e-12);
                prop_assert!((x1[k] - a * q[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn validation_is_idempotent(mar in 0.0f64..1.5, price in -10.0f64..10.0) {
            let m = Market::new(1, vec![agent("a", vec![block("b", price, vec![1.0], mar)])]);
            let first = validate_market(&m);
            prop_assert_eq!(first.clone(), validate_market(&m));
            prop_assert_eq!(first.is_empty(), (0.01..=1.0).contains(&mar));
        }
    }
}
