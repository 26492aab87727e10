use clearing_core::convex::{dual_value, envelope_value, solve_convexified};
use clearing_core::demand::{classify_money, demand_set};
use clearing_core::equilibrium::{
    approximate_equilibria, construct_x_prime, detect_equilibrium, lost_opportunity_cost,
};
use clearing_core::exact::solve_welfare;
use clearing_core::fixtures::{agent, block};
use clearing_core::model::{agent_bundle, agent_value, Agent, BidKind};
use clearing_core::random::{gen_random_market, RandomMarketSpec};
use clearing_core::{Market, Settings};
use proptest::prelude::*;

fn market_strategy() -> impl Strategy<Value = Market> {
    (prop::sample::select(vec![1usize, 2, 4]), any::<u64>())
        .prop_map(|(k, seed)| gen_random_market(&RandomMarketSpec::new(k, 6), seed))
}

fn scaled(v: f64) -> f64 {
    1e-6 * (1.0 + v.abs())
}

/// Upper concave hull of points `(x, u)` on a line, evaluated at `x`.
fn upper_hull_at(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for &(x1, u1) in points {
        for &(x2, u2) in points {
            let v = if (x1 - x).abs() < 1e-12 {
                u1
            } else if x1 < x && x < x2 {
                u1 + (u2 - u1) * (x - x1) / (x2 - x1)
            } else {
                continue;
            };
            best = Some(best.map_or(v, |b: f64| b.max(v)));
        }
    }
    best
}

/// Corner points `(bundle, value)` of a single-commodity block agent: each
/// block's value is linear on its acceptance interval, so the corners of the
/// feasible boxes generate the hypograph hull.
fn corner_points(a: &Agent) -> Vec<(f64, f64)> {
    let choices: Vec<Vec<f64>> = a
        .bids
        .iter()
        .map(|b| match &b.kind {
            BidKind::Block(blk) => vec![0.0, blk.mar, 1.0],
            BidKind::Curve(_) => unreachable!(),
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; choices.len()];
    loop {
        let acc: Vec<f64> = idx.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
        if let Some(u) = agent_value(a, &acc).unwrap() {
            out.push((agent_bundle(a, &acc, 1).unwrap()[0], u));
        }
        let mut j = 0;
        while j < idx.len() {
            idx[j] += 1;
            if idx[j] < 3 {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == idx.len() {
            return out;
        }
    }
}

fn block_agent_strategy() -> impl Strategy<Value = Agent> {
    prop::collection::vec((-50.0..50.0f64, -5.0..5.0f64, 0.01..1.0f64), 1..=3).prop_flat_map(|specs| {
        let n = specs.len();
        (Just(specs), any::<bool>()).prop_map(move |(specs, grouped)| {
            let bids = specs
                .iter()
                .enumerate()
                .map(|(i, &(p, q, r))| {
                    let mut b = block(&format!("b{i}"), p, vec![q], r);
                    if grouped && n > 1 && i < 2 {
                        if let BidKind::Block(blk) = &mut b.kind {
                            blk.group = Some("g".into());
                        }
                    }
                    b
                })
                .collect();
            agent("a", bids)
        })
    })
}

fn scale_money(m: &Market, c: f64) -> Market {
    let mut m = m.clone();
    for a in &mut m.agents {
        for b in &mut a.bids {
            match &mut b.kind {
                BidKind::Block(blk) => blk.price *= c,
                BidKind::Curve(cv) => cv.points.iter_mut().for_each(|p| p.price *= c),
            }
        }
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn strong_duality_and_dual_dominance(m in market_strategy(), shift in prop::collection::vec(-20.0..20.0f64, 4)) {
        let s = Settings::default();
        let d = solve_convexified(&m, &s).unwrap();
        prop_assert!((d.primal_value - d.dual_value).abs() <= scaled(d.primal_value));
        let exact = solve_welfare(&m, &s).unwrap();
        prop_assert!(exact.welfare <= d.primal_value + scaled(d.primal_value));
        let lambda: Vec<f64> = d.prices.iter().zip(shift.iter().cycle()).map(|(p, s)| p + s).collect();
        let v = dual_value(&m, &lambda).unwrap();
        prop_assert!(v >= d.dual_value - scaled(d.dual_value));
    }

    #[test]
    fn vertex_allocation_violates_few_agents(m in market_strategy()) {
        let s = Settings::default();
        let xp = construct_x_prime(&m, &s).unwrap();
        prop_assert!(xp.violations.len() <= xp.nonconvex_agents.min(m.num_commodities));
    }

    #[test]
    fn envelope_matches_corner_hull(a in block_agent_strategy(), t in 0.0..1.0f64) {
        let s = Settings::default();
        let pts = corner_points(&a);
        let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        let x = lo + t * (hi - lo);
        let want = upper_hull_at(&pts, x).unwrap();
        let got = envelope_value(&a, &[x], &s).unwrap().expect("inside the hull");
        prop_assert!((got - want).abs() <= scaled(want), "cav({x}) = {got}, oracle {want}");
        prop_assert!(envelope_value(&a, &[hi + 1.0], &s).unwrap().is_none());
    }

    #[test]
    fn money_classes_are_scale_invariant(m in market_strategy(), c in prop::sample::select(vec![1e-3, 0.5, 7.0, 1e4])) {
        let s = Settings::default();
        let lambda = solve_convexified(&m, &s).unwrap().prices;
        let scaled_lambda: Vec<f64> = lambda.iter().map(|l| l * c).collect();
        let m2 = scale_money(&m, c);
        prop_assert_eq!(classify_money(&m, &lambda, s.tol), classify_money(&m2, &scaled_lambda, s.tol));
        for (a, b) in m.agents.iter().zip(&m2.agents) {
            let d1 = demand_set(a, &lambda, &s).unwrap();
            let d2 = demand_set(b, &scaled_lambda, &s).unwrap();
            prop_assert_eq!(d1.cells.len(), d2.cells.len());
        }
    }

    #[test]
    fn equilibrium_iff_zero_loc(m in market_strategy()) {
        let s = Settings::default();
        let approx = approximate_equilibria(&m, &s).unwrap();
        let candidates = [
            (&approx.x_prime.prices, &approx.x_prime.allocation),
            (&approx.x_triple_prime.prices, &approx.x_triple_prime.allocation),
        ];
        for (prices, allocation) in candidates {
            let cert = detect_equilibrium(&m, prices, allocation, &s).unwrap();
            let loc = lost_opportunity_cost(&m, allocation, prices, &s).unwrap();
            let balanced = cert.balance_residual <= scaled(0.0) * 10.0;
            prop_assert_eq!(cert.is_exact(), balanced && loc.total == 0.0);
        }
    }
}

#[test]
fn in_the_money_single_blocks_are_fully_accepted() {
    let s = Settings::default();
    let a = agent("a", vec![block("itm", 10.0, vec![1.0], 0.5), block("otm", 1.0, vec![1.0], 0.5)]);
    let d = demand_set(&a, &[4.0], &s).unwrap();
    assert_eq!(d.cells.len(), 1);
    assert_eq!(d.cells[0].acceptances, vec![1.0, 0.0]);
}
