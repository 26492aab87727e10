//! Small hand-built markets used by tests, benchmarks and documentation.

use crate::model::{Agent, Bid, BidKind, BlockBid, CurveMode, CurvePoint, HourlyCurveBid, Market};

pub fn block(id: &str, price: f64, quantity: Vec<f64>, mar: f64) -> Bid {
    Bid {
        id: id.to_string(),
        kind: BidKind::Block(BlockBid { price, quantity, mar, group: None, parent: None, loop_partner: None }),
    }
}

pub fn curve(id: &str, hour: usize, mode: CurveMode, points: &[(f64, f64)]) -> Bid {
    Bid {
        id: id.to_string(),
        kind: BidKind::Curve(HourlyCurveBid {
            hour,
            mode,
            points: points.iter().map(|&(price, quantity)| CurvePoint { price, quantity }).collect(),
        }),
    }
}

pub fn agent(id: &str, bids: Vec<Bid>) -> Agent {
    Agent { id: id.to_string(), bids }
}

/// One commodity, four agents: an all-or-nothing buyer of 3 units valued at 4
/// each, a divisible buyer of 1 unit valued at 2, a divisible seller of 2 units
/// at cost 1 and an all-or-nothing seller of 2 units at cost 3.
///
/// No Walrasian equilibrium exists; the convexified market clears at price 3.
pub fn four_agent_market() -> Market {
    Market::new(
        1,
        vec![
            agent("1", vec![block("b1", 12.0, vec![3.0], 1.0)]),
            agent("2", vec![curve("c2", 0, CurveMode::Stepwise, &[(2.0, 1.0)])]),
            agent("3", vec![curve("c3", 0, CurveMode::Stepwise, &[(1.0, -2.0)])]),
            agent("4", vec![block("b4", -6.0, vec![-2.0], 1.0)]),
        ],
    )
    .with_label("four-agent")
}

/// The same market with both blocks turned into divisible curves.
pub fn four_agent_convex_market() -> Market {
    Market::new(
        1,
        vec![
            agent("1", vec![curve("c1", 0, CurveMode::Stepwise, &[(4.0, 3.0)])]),
            agent("2", vec![curve("c2", 0, CurveMode::Stepwise, &[(2.0, 1.0)])]),
            agent("3", vec![curve("c3", 0, CurveMode::Stepwise, &[(1.0, -2.0)])]),
            agent("4", vec![curve("c4", 0, CurveMode::Stepwise, &[(3.0, -2.0)])]),
        ],
    )
    .with_label("four-agent-convex")
}
