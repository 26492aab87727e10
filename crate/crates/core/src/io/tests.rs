use super::*;
use crate::equilibrium::{convex_hull_pricing, lost_opportunity_cost};
use crate::fixtures::four_agent_market;
use crate::model::Allocation;
use crate::settings::Settings;
use std::collections::BTreeMap;

const FOUR_AGENT_CSV: &str = "\
# one commodity, four agents
market,1,EUR,MW,four-agent
block,1,b1,12,1,,,,3
curve,2,c2,0,2,1,stepwise
curve,3,c3,0,1,-2,stepwise
block,4,b4,-6,1,,,,-2
";

#[test]
fn parses_the_four_agent_file() {
    let m = parse_market(FOUR_AGENT_CSV.as_bytes()).unwrap();
    assert_eq!(m, four_agent_market());
    assert_eq!(m.agents.len(), 4);
}

#[test]
fn csv_and_json_round_trip() {
    let m = four_agent_market();
    let csv = emit_market_csv(&m);
    assert_eq!(parse_market(csv.as_bytes()).unwrap(), m);
    assert_eq!(emit_market_csv(&parse_market(csv.as_bytes()).unwrap()), csv);
    let json = emit_market_json(&m);
    assert_eq!(parse_market(json.as_bytes()).unwrap(), m);
}

#[test]
fn parse_errors() {
    let err = parse_market(b"market,1\ncurve,a,c,0,abc,1,stepwise\n").unwrap_err();
    assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    let err = parse_market(b"market,1\nblock,a,b,1,1,,ghost,,1\n").unwrap_err();
    assert!(matches!(err, Error::Reference(_)), "{err}");
    let err = parse_market(b"market,2\nblock,a,b,1,1,,,,1\n").unwrap_err();
    assert!(matches!(err, Error::DimensionMismatch { expected: 2, got: 1 }), "{err}");
    let err = parse_market(b"market,1\n").unwrap_err();
    assert!(err.to_string().contains("at least one agent"), "{err}");
    let err = parse_market(b"curve,a,c,0,1,1,stepwise\n").unwrap_err();
    assert!(matches!(err, Error::Parse { .. }));
}

#[test]
fn outcome_reports() {
    let m = four_agent_market();
    let s = Settings::default();
    let chp = convex_hull_pricing(&m, &s).unwrap();
    let r = OutcomeReport::from_allocation(&m, "chp", &chp.prices, &chp.allocation, false, &chp.loc, BTreeMap::new())
        .unwrap();
    assert!((r.totals.loc - 1.0).abs() < 1e-9);
    assert!((r.totals.welfare - 6.0).abs() < 1e-9);
    let json = r.to_json();
    assert_eq!(json, r.clone().to_json());
    assert_eq!(OutcomeReport::from_json(&json).unwrap(), r);
    assert!(r.to_csv().contains("total,loc,1\n"));

    let mut bad = r.clone();
    bad.totals.loc = 2.0;
    let err = OutcomeReport::new(
        bad.label,
        bad.mode,
        bad.prices,
        bad.equilibrium,
        bad.agents,
        bad.totals,
        bad.provenance,
    )
    .unwrap_err();
    assert!(matches!(err, Error::InconsistentReport(_)));
}

#[test]
fn zero_loc_report_and_infinite_sentinel() {
    let m = four_agent_market();
    let s = Settings::default();
    let acc = Allocation { acceptances: vec![vec![1.0], vec![0.0], vec![1.0], vec![0.5]] };
    let loc = lost_opportunity_cost(&m, &acc, &[3.0], &s).unwrap();
    let acc_ok = Allocation { acceptances: vec![vec![0.0]; 4] };
    let zero = crate::equilibrium::LocReport { total: 0.0, per_agent: vec![0.0; 4] };
    let r = OutcomeReport::from_allocation(&m, "exact", &[3.0], &acc_ok, true, &zero, BTreeMap::new()).unwrap();
    assert!(r.equilibrium && r.agents.iter().all(|a| a.loc == 0.0));
    assert!(OutcomeReport::from_allocation(&m, "x", &[3.0], &acc, false, &loc, BTreeMap::new()).is_err());
}

#[test]
fn figure_rows() {
    let m = four_agent_market();
    let mk = |eq: bool| {
        let zero = crate::equilibrium::LocReport { total: 0.0, per_agent: vec![0.0; 4] };
        let acc = Allocation { acceptances: vec![vec![0.0]; 4] };
        OutcomeReport::from_allocation(&m, "exact", &[3.0], &acc, eq, &zero, BTreeMap::new()).unwrap()
    };
    let entries: Vec<(Market, OutcomeReport)> = (0..10).map(|i| (m.clone(), mk(i < 8))).collect();
    let rows = figure_data(&entries).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].equilibrium_pct, 80.0);
    assert_eq!(rows[0].median_volume_ratio, Ratio::Finite(3.0 / 5.0));
    let entries: Vec<(Market, OutcomeReport)> = (0..281).map(|i| (m.clone(), mk(i < 231))).collect();
    let rows = figure_data(&entries).unwrap();
    assert_eq!((rows[0].instances, rows[0].equilibria), (281, 231));
    assert!((rows[0].equilibrium_pct - 82.2).abs() < 0.05);
    let convex = crate::fixtures::four_agent_convex_market();
    let rows = figure_data(&[(convex, mk(true))]).unwrap();
    assert_eq!(rows[0].median_volume_ratio, Ratio::Infinite);
    assert!(emit_figure_csv(&rows).contains(",infinite\n"));
    assert!(figure_data(&[]).is_err());
}
