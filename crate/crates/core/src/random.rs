//! Synthetic market families and Monte Carlo estimates of how often an
//! equilibrium exists.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equilibrium::find_equilibrium;
use crate::error::{Error, Result};
use crate::fixtures::{agent, block, curve};
use crate::model::{Agent, BidKind, CurveMode, Market};
use crate::settings::Settings;

/// Fixed inelastic demand of the simple random market.
pub const SIMPLE_DEMAND: f64 = 5.0;
/// Capacity of every supplier in the synthetic families.
pub const SUPPLIER_CAPACITY: f64 = 2.0;
/// Reservation price of the inelastic buyer in the simple random market.
pub const SIMPLE_RESERVATION: f64 = 20.0;

/// `n` suppliers of capacity 2, the first `k` divisible, the rest
/// all-or-nothing, with iid uniform costs on `[cost_low, cost_high)`,
/// facing an inelastic demand of 5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimpleRandomMarketSpec {
    pub n: usize,
    pub k: usize,
    pub cost_low: f64,
    pub cost_high: f64,
    pub seed: u64,
}

impl SimpleRandomMarketSpec {
    pub fn new(n: usize, k: usize, seed: u64) -> Self {
        Self { n, k, cost_low: 0.0, cost_high: 10.0, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InvalidSpec(format!("n = {} but a demand of 5 needs at least 3 suppliers", self.n)));
        }
        if self.k > self.n {
            return Err(Error::InvalidSpec(format!("k = {} exceeds n = {}", self.k, self.n)));
        }
        if !self.cost_low.is_finite() || !self.cost_high.is_finite() || self.cost_low >= self.cost_high {
            return Err(Error::InvalidSpec(format!("empty cost range [{}, {})", self.cost_low, self.cost_high)));
        }
        if self.cost_high >= SIMPLE_RESERVATION {
            return Err(Error::InvalidSpec(format!("costs must stay below the reservation price {SIMPLE_RESERVATION}")));
        }
        Ok(())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Distinct costs, redrawing any value already taken.
fn draw_costs(rng: &mut impl Rng, n: usize, low: f64, high: f64) -> Vec<f64> {
    let mut costs: Vec<f64> = Vec::with_capacity(n);
    while costs.len() < n {
        let c = rng.gen_range(low..high);
        if !costs.contains(&c) {
            costs.push(c);
        }
    }
    costs
}

fn supplier(id: &str, cost: f64, convex: bool) -> Agent {
    if convex {
        agent(id, vec![curve(&format!("{id}-curve"), 0, CurveMode::Stepwise, &[(cost, -SUPPLIER_CAPACITY)])])
    } else {
        agent(id, vec![block(&format!("{id}-block"), -cost * SUPPLIER_CAPACITY, vec![-SUPPLIER_CAPACITY], 1.0)])
    }
}

fn simple_market_from(spec: &SimpleRandomMarketSpec, rng: &mut impl Rng) -> (Market, Vec<f64>) {
    let costs = draw_costs(rng, spec.n, spec.cost_low, spec.cost_high);
    let mut agents: Vec<Agent> =
        costs.iter().enumerate().map(|(i, &c)| supplier(&format!("s{}", i + 1), c, i < spec.k)).collect();
    agents.push(agent("demand", vec![curve("demand-curve", 0, CurveMode::Stepwise, &[(SIMPLE_RESERVATION, SIMPLE_DEMAND)])]));
    let label = format!("simple-n{}-k{}", spec.n, spec.k);
    (Market::new(1, agents).with_label(label), costs)
}

/// Builds one simple random market from the spec's seed.
pub fn gen_simple_random_market(spec: &SimpleRandomMarketSpec) -> Result<Market> {
    spec.validate()?;
    Ok(simple_market_from(spec, &mut ChaCha8Rng::seed_from_u64(spec.seed)).0)
}

/// Whether the supplier serving the last unit of demand is divisible: the
/// analytic equilibrium condition of the simple random market.
pub fn marginal_supplier_is_convex(costs: &[f64], k: usize) -> bool {
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]));
    let marginal = (SIMPLE_DEMAND / SUPPLIER_CAPACITY).floor() as usize;
    order[marginal] < k
}

/// Suppliers that all share marginal cost 5 (`num_convex` divisible,
/// `num_nonconvex` all-or-nothing) and an inelastic buyer of `demand` at 100.
pub fn gen_tied_cost_market(num_convex: usize, num_nonconvex: usize, demand: f64) -> Market {
    const COST: f64 = 5.0;
    let mut agents: Vec<Agent> = (0..num_convex).map(|i| supplier(&format!("convex{}", i + 1), COST, true)).collect();
    agents.extend((0..num_nonconvex).map(|i| supplier(&format!("block{}", i + 1), COST, false)));
    agents.push(agent("demand", vec![curve("demand-curve", 0, CurveMode::Stepwise, &[(100.0, demand)])]));
    Market::new(1, agents).with_label(format!("tied-c{num_convex}-n{num_nonconvex}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub trials: usize,
    pub equilibria: usize,
    pub estimate: f64,
    /// 95% normal-approximation interval, clipped to `[0, 1]`.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Trials where the solver verdict differs from the marginal-supplier rule.
    pub disagreements: usize,
    /// Equilibrium verdict of each trial, in trial order.
    pub verdicts: Vec<bool>,
}

/// Fraction of simple random markets with a Walrasian equilibrium. Trial `t`
/// draws from stream `t` of the spec's seed, so results do not depend on
/// scheduling.
pub fn monte_carlo_equilibrium_probability(
    spec: &SimpleRandomMarketSpec,
    trials: usize,
    settings: &Settings,
) -> Result<MonteCarloEstimate> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::InvalidSpec("at least one trial is required".into()));
    }
    let verdicts = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_for(spec.seed, t);
            let (market, costs) = simple_market_from(spec, &mut rng);
            let found = find_equilibrium(&market, settings)?.is_some();
            Ok((found, found != marginal_supplier_is_convex(&costs, spec.k)))
        })
        .collect::<Result<Vec<(bool, bool)>>>()?;
    let equilibria = verdicts.iter().filter(|v| v.0).count();
    let disagreements = verdicts.iter().filter(|v| v.1).count();
    let p = equilibria as f64 / trials as f64;
    let half = 1.96 * (p * (1.0 - p) / trials as f64).sqrt();
    Ok(MonteCarloEstimate {
        trials,
        equilibria,
        estimate: p,
        ci_low: (p - half).max(0.0),
        ci_high: (p + half).min(1.0),
        disagreements,
        verdicts: verdicts.iter().map(|v| v.0).collect(),
    })
}

/// Shape of a general random day-ahead market.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomMarketSpec {
    pub num_commodities: usize,
    pub max_blocks: usize,
    /// Probability that a block is coupled to another block of its agent.
    pub coupling: f64,
}

impl RandomMarketSpec {
    pub fn new(num_commodities: usize, max_blocks: usize) -> Self {
        Self { num_commodities, max_blocks, coupling: 0.3 }
    }
}

fn random_curve(rng: &mut impl Rng, id: String, hour: usize, sell: bool) -> crate::model::Bid {
    let n = rng.gen_range(1..=3);
    let mut prices: Vec<f64> = (0..n).map(|_| (rng.gen_range(10.0..90.0f64) * 4.0).round() / 4.0).collect();
    prices.sort_by(f64::total_cmp);
    prices.dedup();
    let mut qty: Vec<f64> = (0..prices.len()).map(|_| rng.gen_range(1..=6) as f64).collect();
    // Signed volumes must be nonincreasing in price.
    if sell {
        qty.sort_by(f64::total_cmp);
        qty.iter_mut().for_each(|q| *q = -*q);
    } else {
        qty.sort_by(|a, b| b.total_cmp(a));
    }
    let mode = if rng.gen_bool(0.5) { CurveMode::Stepwise } else { CurveMode::Interpolated };
    let points: Vec<(f64, f64)> = prices.into_iter().zip(qty).collect();
    curve(&id, hour, mode, &points)
}

/// A random market: per hour one divisible buyer and one divisible seller,
/// plus up to `max_blocks` block bids spread over a few block agents, some
/// of them in exclusive groups, parent links or loops.
pub fn gen_random_market(spec: &RandomMarketSpec, seed: u64) -> Market {
    let k = spec.num_commodities.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut agents = Vec::new();
    if k <= 4 {
        for h in 0..k {
            agents.push(agent(&format!("buy{h}"), vec![random_curve(&mut rng, format!("buy{h}-c"), h, false)]));
            agents.push(agent(&format!("sell{h}"), vec![random_curve(&mut rng, format!("sell{h}-c"), h, true)]));
        }
    } else {
        let buys = (0..k).map(|h| random_curve(&mut rng, format!("buy-h{h}"), h, false)).collect();
        let sells = (0..k).map(|h| random_curve(&mut rng, format!("sell-h{h}"), h, true)).collect();
        agents.push(agent("buyers", buys));
        agents.push(agent("sellers", sells));
    }

    let num_blocks = rng.gen_range(0..=spec.max_blocks);
    let num_block_agents = if num_blocks == 0 { 0 } else { rng.gen_range(1..=num_blocks.min(4)) };
    let mut block_agents: Vec<Agent> = (0..num_block_agents).map(|i| agent(&format!("blk{i}"), Vec::new())).collect();
    for b in 0..num_blocks {
        let owner = rng.gen_range(0..num_block_agents);
        let start = rng.gen_range(0..k);
        let len = rng.gen_range(1..=(k - start).min(4));
        let sell = rng.gen_bool(0.6);
        let volume = rng.gen_range(1..=5) as f64;
        let mut quantity = vec![0.0; k];
        for q in &mut quantity[start..start + len] {
            *q = if sell { -volume } else { volume };
        }
        let unit = (rng.gen_range(10.0..90.0f64) * 4.0).round() / 4.0;
        let price = if sell { -unit * volume * len as f64 } else { unit * volume * len as f64 };
        let mar = if rng.gen_bool(0.5) { 1.0 } else { (rng.gen_range(0.1..1.0f64) * 100.0).round() / 100.0 };
        let id = format!("blk{owner}-b{b}");
        let mut bid = block(&id, price, quantity, mar);
        let siblings: Vec<String> = block_agents[owner].bids.iter().map(|x| x.id.clone()).collect();
        if let (Some(other), true) = (siblings.choose(&mut rng).cloned(), rng.gen_bool(spec.coupling)) {
            let kind = rng.gen_range(0..3);
            let BidKind::Block(blk) = &mut bid.kind else { unreachable!() };
            match kind {
                0 => {
                    let target = block_agents[owner].bids.iter_mut().find(|x| x.id == other).expect("sibling");
                    let BidKind::Block(o) = &mut target.kind else { unreachable!() };
                    let group = o.group.get_or_insert_with(|| format!("g-{other}")).clone();
                    blk.group = Some(group);
                }
                1 => blk.parent = Some(other),
                _ => {
                    let target = block_agents[owner].bids.iter_mut().find(|x| x.id == other).expect("sibling");
                    let BidKind::Block(o) = &mut target.kind else { unreachable!() };
                    if o.loop_partner.is_none() {
                        o.loop_partner = Some(id.clone());
                        blk.loop_partner = Some(other);
                    }
                }
            }
        }
        block_agents[owner].bids.push(bid);
    }
    agents.extend(block_agents.into_iter().filter(|a| !a.bids.is_empty()));
    Market::new(k, agents).with_label(format!("random-k{k}-s{seed}"))
}

/// `count` random markets cycling through 1, 2, 4 and 24 commodities.
pub fn random_corpus(count: usize, max_blocks: usize, seed: u64) -> Vec<Market> {
    const SIZES: [usize; 4] = [1, 2, 4, 24];
    (0..count)
        .map(|i| {
            let spec = RandomMarketSpec::new(SIZES[i % SIZES.len()], max_blocks);
            gen_random_market(&spec, seed.wrapping_mul(1_000_003).wrapping_add(i as u64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_market_shape() {
        let m = gen_simple_random_market(&SimpleRandomMarketSpec::new(5, 3, 11)).unwrap();
        assert_eq!(m.agents.len(), 6);
        assert_eq!(m.agents.iter().filter(|a| a.is_convex()).count(), 4);
        assert!(m.validate().is_empty());
        assert_eq!(m, gen_simple_random_market(&SimpleRandomMarketSpec::new(5, 3, 11)).unwrap());
        assert!(gen_simple_random_market(&SimpleRandomMarketSpec::new(2, 1, 0)).is_err());
        assert!(gen_simple_random_market(&SimpleRandomMarketSpec::new(4, 5, 0)).is_err());
    }

    #[test]
    fn extreme_k_are_deterministic() {
        let s = Settings::default();
        let all = monte_carlo_equilibrium_probability(&SimpleRandomMarketSpec::new(4, 4, 3), 40, &s).unwrap();
        assert_eq!(all.estimate, 1.0);
        let none = monte_carlo_equilibrium_probability(&SimpleRandomMarketSpec::new(4, 0, 3), 40, &s).unwrap();
        assert_eq!(none.estimate, 0.0);
        assert_eq!(all.disagreements + none.disagreements, 0);
    }

    #[test]
    fn random_markets_are_valid() {
        for m in random_corpus(200, 8, 5) {
            let report = m.validate();
            assert!(report.is_empty(), "{}: {report}", m.label);
            assert!(m.num_blocks() <= 8);
        }
    }
}
