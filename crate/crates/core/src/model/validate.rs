use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BidKind, Market, MIN_MAR};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    NoCommodities,
    NoAgents,
    DuplicateAgent,
    DuplicateBid,
    EmptyCurve,
    HourOutOfRange,
    NonFinite,
    UnorderedPrices,
    MixedSignCurve,
    NonConcaveBuyCurve,
    NonConvexSellCurve,
    DimensionMismatch,
    MarBelowMinimum,
    MarAboveOne,
    UnresolvedReference,
    CrossAgentReference,
    LinkCycle,
    UnpairedLoop,
    CrossAgentGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub agent: Option<String>,
    pub bid: Option<String>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.agent, &self.bid) {
            (_, Some(bid)) => write!(f, "bid {bid}: {}", self.detail),
            (Some(agent), None) => write!(f, "agent {agent}: {}", self.detail),
            (None, None) => write!(f, "{}", self.detail),
        }
    }
}

/// Every structural problem found in a market. Empty iff the market is well-formed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: &ViolationKind) -> bool {
        self.violations.iter().any(|v| &v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, agent: Option<&str>, bid: Option<&str>, detail: impl Into<String>) {
        self.violations.push(Violation {
            kind,
            agent: agent.map(str::to_string),
            bid: bid.map(str::to_string),
            detail: detail.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_market(market: &Market) -> ValidationReport {
    let mut report = ValidationReport::default();
    let k = market.num_commodities;
    if k == 0 {
        report.push(ViolationKind::NoCommodities, None, None, "number of commodities must be at least 1");
    }
    if market.agents.is_empty() {
        report.push(ViolationKind::NoAgents, None, None, "market needs at least one agent");
    }

    let mut agent_ids = HashSet::new();
    let mut owner: HashMap<&str, &str> = HashMap::new();
    for agent in &market.agents {
        if !agent_ids.insert(agent.id.as_str()) {
            report.push(ViolationKind::DuplicateAgent, Some(&agent.id), None, "duplicate agent id");
        }
        for bid in &agent.bids {
            if owner.insert(bid.id.as_str(), agent.id.as_str()).is_some() {
                report.push(ViolationKind::DuplicateBid, Some(&agent.id), Some(&bid.id), "duplicate bid id");
            }
        }
    }

    let mut group_owner: HashMap<&str, &str> = HashMap::new();
    for agent in &market.agents {
        let a = Some(agent.id.as_str());
        let blocks: HashMap<&str, &super::BlockBid> = agent
            .bids
            .iter()
            .filter_map(|b| b.as_block().map(|blk| (b.id.as_str(), blk)))
            .collect();
        for bid in &agent.bids {
            let b = Some(bid.id.as_str());
            match &bid.kind {
                BidKind::Curve(c) => {
                    if c.points.is_empty() {
                        report.push(ViolationKind::EmptyCurve, a, b, "curve has no points");
                        continue;
                    }
                    if c.hour >= k {
                        report.push(ViolationKind::HourOutOfRange, a, b, format!("hour {} outside 0..{k}", c.hour));
                    }
                    if c.points.iter().any(|p| !p.price.is_finite() || !p.quantity.is_finite()) {
                        report.push(ViolationKind::NonFinite, a, b, "non-finite curve point");
                        continue;
                    }
                    if c.points.windows(2).any(|w| w[1].price <= w[0].price) {
                        report.push(ViolationKind::UnorderedPrices, a, b, "curve prices must be strictly increasing");
                    }
                    let buys = c.points.iter().any(|p| p.quantity > 0.0);
                    let sells = c.points.iter().any(|p| p.quantity < 0.0);
                    if buys && sells {
                        report.push(ViolationKind::MixedSignCurve, a, b, "curve mixes buy and sell quantities");
                    } else if c.points.windows(2).any(|w| w[1].quantity > w[0].quantity) {
                        if sells {
                            report.push(ViolationKind::NonConvexSellCurve, a, b, "non-convex sell curve");
                        } else {
                            report.push(ViolationKind::NonConcaveBuyCurve, a, b, "non-concave buy curve");
                        }
                    }
                }
                BidKind::Block(blk) => {
                    if blk.quantity.len() != k {
                        report.push(
                            ViolationKind::DimensionMismatch,
                            a,
                            b,
                            format!("quantity has {} entries, expected {k}", blk.quantity.len()),
                        );
                    }
                    if !blk.price.is_finite() || blk.quantity.iter().any(|q| !q.is_finite()) || !blk.mar.is_finite() {
                        report.push(ViolationKind::NonFinite, a, b, "non-finite block field");
                    }
                    if blk.mar < MIN_MAR {
                        report.push(ViolationKind::MarBelowMinimum, a, b, format!("MAR below 0.01 ({})", blk.mar));
                    } else if blk.mar > 1.0 {
                        report.push(ViolationKind::MarAboveOne, a, b, format!("MAR above 1 ({})", blk.mar));
                    }
                    if let Some(g) = &blk.group {
                        match group_owner.get(g.as_str()) {
                            Some(&o) if o != agent.id => report.push(
                                ViolationKind::CrossAgentGroup,
                                a,
                                b,
                                format!("exclusive group {g} spans several agents"),
                            ),
                            _ => {
                                group_owner.insert(g.as_str(), agent.id.as_str());
                            }
                        }
                    }
                    for (label, target) in [("parent", &blk.parent), ("loop partner", &blk.loop_partner)] {
                        let Some(t) = target else { continue };
                        if blocks.contains_key(t.as_str()) {
                            continue;
                        }
                        if owner.contains_key(t.as_str()) {
                            report.push(
                                ViolationKind::CrossAgentReference,
                                a,
                                b,
                                format!("{label} {t} is not a block of the same agent"),
                            );
                        } else {
                            report.push(ViolationKind::UnresolvedReference, a, b, format!("{label} {t} does not exist"));
                        }
                    }
                    if let Some(l) = &blk.loop_partner {
                        if let Some(partner) = blocks.get(l.as_str()) {
                            if partner.loop_partner.as_deref() != Some(bid.id.as_str()) || l == &bid.id {
                                report.push(ViolationKind::UnpairedLoop, a, b, format!("loop partner {l} does not point back"));
                            }
                        }
                    }
                }
            }
        }
        // parent chains must terminate
        for (&id, blk) in &blocks {
            let mut seen = HashSet::from([id]);
            let mut cursor = blk.parent.as_deref();
            while let Some(p) = cursor {
                if !seen.insert(p) {
                    report.push(ViolationKind::LinkCycle, a, Some(id), "parent links form a cycle");
                    break;
                }
                cursor = blocks.get(p).and_then(|b| b.parent.as_deref());
            }
        }
    }
    report
        .violations
        .sort_by(|x, y| (&x.agent, &x.bid, &x.detail).cmp(&(&y.agent, &y.bid, &y.detail)));
    report
}
