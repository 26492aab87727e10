//! The economy: agents, bid formats, acceptance sets and valuations.
//!
//! Quantities are signed: positive volumes are bought, negative volumes sold.
//! A block bid's `price` is the money the bidder attaches to the full
//! profile, so its surplus at prices `λ` and acceptance `a` is
//! `a · (price − λ·quantity)`.

mod structure;
mod validate;
mod valuation;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub(crate) use structure::AgentStructure;
pub use validate::{validate_market, ValidationReport, Violation, ViolationKind};
pub use valuation::{bundle_value, BundleValue};

/// Acceptance ratios at or below this level count as "not accepted".
pub const ACCEPTANCE_EPS: f64 = 1e-9;

/// Smallest admissible minimum acceptance ratio.
pub const MIN_MAR: f64 = 0.01;

/// One uniform price per commodity.
pub type PriceVector = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Market {
    pub num_commodities: usize,
    pub agents: Vec<Agent>,
    #[serde(default = "default_currency")]
    pub currency_unit: String,
    #[serde(default = "default_quantity")]
    pub quantity_unit: String,
    #[serde(default)]
    pub label: String,
}

fn default_currency() -> String {
    "EUR".to_string()
}

fn default_quantity() -> String {
    "MW".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: String,
    pub bids: Vec<Bid>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub id: String,
    #[serde(flatten)]
    pub kind: BidKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BidKind {
    Curve(HourlyCurveBid),
    Block(BlockBid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    Interpolated,
    Stepwise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub price: f64,
    pub quantity: f64,
}

/// A divisible single-commodity bid curve.
///
/// Points are ordered by strictly increasing price. `quantity` is the signed
/// volume traded at that price, so both buy curves (`quantity >= 0`) and sell
/// curves (`quantity <= 0`) are nonincreasing in price.
///
/// Stepwise: a buyer takes `Q_j` for prices in `(p_{j-1}, p_j]`, a seller
/// offers `Q_j` for prices in `[p_j, p_{j+1})`. Interpolated: volume is linear
/// between breakpoints and the value is linear in volume between breakpoint
/// volumes (each slice is priced at the mean of its two breakpoint prices).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlyCurveBid {
    pub hour: usize,
    pub points: Vec<CurvePoint>,
    pub mode: CurveMode,
}

/// A divisible slice of a curve with a constant unit price.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveSegment {
    pub unit_price: f64,
    /// Signed volume of the slice.
    pub quantity: f64,
}

impl CurveSegment {
    /// Money attached to taking the whole slice (value for buys, negative cost for sells).
    pub fn money(&self) -> f64 {
        self.unit_price * self.quantity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockBid {
    pub price: f64,
    pub quantity: Vec<f64>,
    pub mar: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loop_partner: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Buyer,
    Seller,
    Mixed,
    Inactive,
}

impl HourlyCurveBid {
    pub fn is_sell(&self) -> bool {
        self.points.iter().any(|p| p.quantity < 0.0)
    }

    /// Slices in merit order: highest value first for buyers, cheapest first for sellers.
    /// Zero-volume slices are dropped.
    pub fn segments(&self) -> Vec<CurveSegment> {
        let pts = &self.points;
        let mut out = Vec::with_capacity(pts.len());
        if pts.is_empty() {
            return out;
        }
        let m = pts.len() - 1;
        let slice_price = |lo: usize, hi: usize, step_at: usize| match self.mode {
            CurveMode::Stepwise => pts[step_at].price,
            CurveMode::Interpolated => 0.5 * (pts[lo].price + pts[hi].price),
        };
        if self.is_sell() {
            out.push(CurveSegment { unit_price: pts[0].price, quantity: pts[0].quantity });
            for j in 1..=m {
                out.push(CurveSegment {
                    unit_price: slice_price(j - 1, j, j),
                    quantity: pts[j].quantity - pts[j - 1].quantity,
                });
            }
        } else {
            out.push(CurveSegment { unit_price: pts[m].price, quantity: pts[m].quantity });
            for j in (0..m).rev() {
                out.push(CurveSegment {
                    unit_price: slice_price(j, j + 1, j),
                    quantity: pts[j].quantity - pts[j + 1].quantity,
                });
            }
        }
        out.retain(|s| s.quantity != 0.0);
        out
    }

    /// Signed volume at full acceptance.
    pub fn max_volume(&self) -> f64 {
        self.segments().iter().map(|s| s.quantity).sum()
    }

    /// Value of trading `ratio` of the full volume, filled in merit order.
    pub fn value_at(&self, ratio: f64) -> f64 {
        let segments = self.segments();
        let total: f64 = segments.iter().map(|s| s.quantity.abs()).sum();
        let mut remaining = ratio * total;
        let mut value = 0.0;
        for s in &segments {
            if remaining <= 0.0 {
                break;
            }
            let take = remaining.min(s.quantity.abs());
            value += s.unit_price * take * s.quantity.signum();
            remaining -= take;
        }
        value
    }
}

impl BlockBid {
    /// Whether `ratio` lies in `{0} ∪ [mar, 1]` up to [`ACCEPTANCE_EPS`].
    pub fn admits(&self, ratio: f64) -> bool {
        ratio.abs() <= ACCEPTANCE_EPS
            || (ratio >= self.mar - ACCEPTANCE_EPS && ratio <= 1.0 + ACCEPTANCE_EPS)
    }

    /// `price − λ·quantity`.
    pub fn margin(&self, prices: &[f64]) -> f64 {
        self.price - dot(prices, &self.quantity)
    }
}

impl Bid {
    pub fn as_block(&self) -> Option<&BlockBid> {
        match &self.kind {
            BidKind::Block(b) => Some(b),
            BidKind::Curve(_) => None,
        }
    }

    pub fn as_curve(&self) -> Option<&HourlyCurveBid> {
        match &self.kind {
            BidKind::Curve(c) => Some(c),
            BidKind::Block(_) => None,
        }
    }

    /// Signed bundle at full acceptance.
    pub fn full_bundle(&self, k: usize) -> Vec<f64> {
        match &self.kind {
            BidKind::Block(b) => b.quantity.clone(),
            BidKind::Curve(c) => {
                let mut v = vec![0.0; k];
                if c.hour < k {
                    v[c.hour] = c.max_volume();
                }
                v
            }
        }
    }

    /// Total absolute volume over all commodities.
    pub fn absolute_volume(&self) -> f64 {
        match &self.kind {
            BidKind::Block(b) => b.quantity.iter().map(|q| q.abs()).sum(),
            BidKind::Curve(c) => c.segments().iter().map(|s| s.quantity.abs()).sum(),
        }
    }
}

impl Agent {
    pub fn side(&self) -> Side {
        let (mut buys, mut sells) = (false, false);
        for bid in &self.bids {
            let bundle = match &bid.kind {
                BidKind::Block(b) => b.quantity.clone(),
                BidKind::Curve(c) => c.points.iter().map(|p| p.quantity).collect(),
            };
            buys |= bundle.iter().any(|&q| q > 0.0);
            sells |= bundle.iter().any(|&q| q < 0.0);
        }
        match (buys, sells) {
            (true, true) => Side::Mixed,
            (true, false) => Side::Buyer,
            (false, true) => Side::Seller,
            (false, false) => Side::Inactive,
        }
    }

    /// True when the valuation is concave, i.e. the agent only submits curves
    /// (or blocks without volume).
    pub fn is_convex(&self) -> bool {
        self.bids.iter().all(|b| match &b.kind {
            BidKind::Curve(_) => true,
            BidKind::Block(block) => block.quantity.iter().all(|&q| q == 0.0) || block.mar <= 0.0,
        })
    }

    pub fn bid_index(&self) -> HashMap<&str, usize> {
        self.bids.iter().enumerate().map(|(i, b)| (b.id.as_str(), i)).collect()
    }

    /// Whether a vector of per-bid acceptance ratios is in the agent's feasible set.
    pub fn is_feasible(&self, acceptances: &[f64]) -> Result<bool> {
        self.check_len(acceptances)?;
        let index = self.bid_index();
        let accepted = |i: usize| acceptances[i].abs() > ACCEPTANCE_EPS;
        let mut groups: HashMap<&str, usize> = HashMap::new();
        for (i, (bid, &a)) in self.bids.iter().zip(acceptances).enumerate() {
            if !(-ACCEPTANCE_EPS..=1.0 + ACCEPTANCE_EPS).contains(&a) {
                return Ok(false);
            }
            let BidKind::Block(block) = &bid.kind else { continue };
            if !block.admits(a) {
                return Ok(false);
            }
            if let Some(g) = &block.group {
                if accepted(i) {
                    *groups.entry(g.as_str()).or_default() += 1;
                }
            }
            if let Some(p) = &block.parent {
                if let Some(&pi) = index.get(p.as_str()) {
                    if accepted(i) && !accepted(pi) {
                        return Ok(false);
                    }
                }
            }
            if let Some(l) = &block.loop_partner {
                if let Some(&li) = index.get(l.as_str()) {
                    if accepted(i) != accepted(li) {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(groups.values().all(|&n| n <= 1))
    }

    /// Valuation at the given acceptances; `None` outside the feasible set.
    pub fn value(&self, acceptances: &[f64]) -> Result<Option<f64>> {
        if !self.is_feasible(acceptances)? {
            return Ok(None);
        }
        let value = self
            .bids
            .iter()
            .zip(acceptances)
            .map(|(bid, &a)| match &bid.kind {
                BidKind::Block(b) => a * b.price,
                BidKind::Curve(c) => c.value_at(a),
            })
            .sum();
        Ok(Some(value))
    }

    /// Traded bundle `Σ_b a_b q_b`.
    pub fn bundle(&self, acceptances: &[f64], k: usize) -> Result<Vec<f64>> {
        self.check_len(acceptances)?;
        let mut x = vec![0.0; k];
        for (bid, &a) in self.bids.iter().zip(acceptances) {
            match &bid.kind {
                BidKind::Block(b) => {
                    if b.quantity.len() != k {
                        return Err(Error::DimensionMismatch { expected: k, got: b.quantity.len() });
                    }
                    for (xk, qk) in x.iter_mut().zip(&b.quantity) {
                        *xk += a * qk;
                    }
                }
                BidKind::Curve(c) => {
                    if c.hour >= k {
                        return Err(Error::DimensionMismatch { expected: k, got: c.hour + 1 });
                    }
                    x[c.hour] += a * c.max_volume();
                }
            }
        }
        Ok(x)
    }

    fn check_len(&self, acceptances: &[f64]) -> Result<()> {
        if acceptances.len() != self.bids.len() {
            return Err(Error::DimensionMismatch { expected: self.bids.len(), got: acceptances.len() });
        }
        Ok(())
    }
}

/// Valuation `u_i` of an agent at per-bid acceptance ratios; `None` marks the
/// infeasible (negative infinite) case.
pub fn agent_value(agent: &Agent, acceptances: &[f64]) -> Result<Option<f64>> {
    agent.value(acceptances)
}

pub fn agent_bundle(agent: &Agent, acceptances: &[f64], k: usize) -> Result<Vec<f64>> {
    agent.bundle(acceptances, k)
}

impl Market {
    pub fn new(num_commodities: usize, agents: Vec<Agent>) -> Self {
        Self {
            num_commodities,
            agents,
            currency_unit: default_currency(),
            quantity_unit: default_quantity(),
            label: String::new(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn num_blocks(&self) -> usize {
        self.agents
            .iter()
            .flat_map(|a| &a.bids)
            .filter(|b| b.as_block().is_some())
            .count()
    }

    /// Aggregate absolute volume of curves (convex) and blocks (nonconvex).
    pub fn volumes(&self) -> (f64, f64) {
        let mut convex = 0.0;
        let mut nonconvex = 0.0;
        for bid in self.agents.iter().flat_map(|a| &a.bids) {
            match bid.kind {
                BidKind::Curve(_) => convex += bid.absolute_volume(),
                BidKind::Block(_) => nonconvex += bid.absolute_volume(),
            }
        }
        (convex, nonconvex)
    }

    /// Largest magnitude of any money amount in the market, used to scale tolerances.
    pub fn money_scale(&self) -> f64 {
        let mut scale: f64 = 1.0;
        for bid in self.agents.iter().flat_map(|a| &a.bids) {
            match &bid.kind {
                BidKind::Block(b) => scale = scale.max(b.price.abs()),
                BidKind::Curve(c) => {
                    for s in c.segments() {
                        scale = scale.max(s.money().abs());
                    }
                }
            }
        }
        scale
    }

    pub fn validate(&self) -> ValidationReport {
        validate_market(self)
    }

    /// Fails with [`Error::InvalidMarket`] listing every violation.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidMarket(report.to_string()))
        }
    }
}

/// Per-agent, per-bid acceptance ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub acceptances: Vec<Vec<f64>>,
}

impl Allocation {
    pub fn zero(market: &Market) -> Self {
        Self { acceptances: market.agents.iter().map(|a| vec![0.0; a.bids.len()]).collect() }
    }

    pub fn bundles(&self, market: &Market) -> Result<Vec<Vec<f64>>> {
        if self.acceptances.len() != market.agents.len() {
            return Err(Error::DimensionMismatch {
                expected: market.agents.len(),
                got: self.acceptances.len(),
            });
        }
        market
            .agents
            .iter()
            .zip(&self.acceptances)
            .map(|(agent, acc)| agent.bundle(acc, market.num_commodities))
            .collect()
    }

    pub fn is_feasible(&self, market: &Market) -> Result<bool> {
        for (agent, acc) in market.agents.iter().zip(&self.acceptances) {
            if !agent.is_feasible(acc)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Sum of agent valuations, `None` if any agent is infeasible.
    pub fn welfare(&self, market: &Market) -> Result<Option<f64>> {
        let mut total = 0.0;
        for (agent, acc) in market.agents.iter().zip(&self.acceptances) {
            match agent.value(acc)? {
                Some(v) => total += v,
                None => return Ok(None),
            }
        }
        Ok(Some(total))
    }

    /// `Σ_i x_i`.
    pub fn net_position(&self, market: &Market) -> Result<Vec<f64>> {
        Ok(sum_bundles(&self.bundles(market)?, market.num_commodities))
    }
}

pub fn sum_bundles(bundles: &[Vec<f64>], k: usize) -> Vec<f64> {
    let mut total = vec![0.0; k];
    for b in bundles {
        for (t, v) in total.iter_mut().zip(b) {
            *t += v;
        }
    }
    total
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests;
