//! Welfare maximisation of the original market: branch-and-bound over block
//! indicators, plus an enumeration oracle.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::convex::{add_agent, lp_error, BidVars};
use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpError, Relation};
use crate::model::{AgentStructure, Allocation, BidKind, Market};
use crate::settings::Settings;

/// Blocks above which [`brute_force_welfare`] refuses to enumerate.
pub const BRUTE_FORCE_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub allocation: Allocation,
    pub welfare: f64,
    pub nodes: usize,
    /// Best remaining bound minus welfare; zero when the search finished.
    pub gap: f64,
}

/// Welfare LP with every block either switched off or restricted to
/// `[mar, 1]`, according to `on[agent][bid]`.
pub(crate) struct PatternProgram {
    pub lp: LinearProgram,
    pub bids: Vec<Vec<BidVars>>,
}

impl PatternProgram {
    pub fn new(market: &Market, on: &[Vec<bool>]) -> Self {
        let k = market.num_commodities;
        let mut lp = LinearProgram::new();
        for _ in 0..k {
            lp.add_constraint(Vec::new(), Relation::Eq, 0.0);
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
        let mut bids = Vec::with_capacity(market.agents.len());
        for (agent, on) in market.agents.iter().zip(on) {
            let mut vars = Vec::with_capacity(agent.bids.len());
            for (bid, &active) in agent.bids.iter().zip(on) {
                vars.push(match &bid.kind {
                    BidKind::Curve(c) => {
                        let segments = c.segments();
                        let mut vs = Vec::with_capacity(segments.len());
                        for s in &segments {
                            let v = lp.add_var(s.money(), 0.0, 1.0);
                            if c.hour < k {
                                rows[c.hour].push((v, s.quantity));
                            }
                            vs.push(v);
                        }
                        let volumes: Vec<f64> = segments.iter().map(|s| s.quantity.abs()).collect();
                        let total = volumes.iter().sum();
                        BidVars::Curve { vars: vs, volumes, total }
                    }
                    BidKind::Block(b) if active => {
                        let v = lp.add_var(b.price, b.mar, 1.0);
                        for (h, &q) in b.quantity.iter().enumerate() {
                            if q != 0.0 && h < k {
                                rows[h].push((v, q));
                            }
                        }
                        BidVars::Block { terms: vec![v] }
                    }
                    BidKind::Block(_) => BidVars::Block { terms: Vec::new() },
                });
            }
            bids.push(vars);
        }
        for (h, row) in rows.into_iter().enumerate() {
            lp.constraints[h].coeffs = row;
        }
        Self { lp, bids }
    }

    pub fn allocation(&self, x: &[f64]) -> Allocation {
        Allocation { acceptances: self.bids.iter().map(|bs| bs.iter().map(|b| b.ratio(x)).collect()).collect() }
    }
}

/// Whether an indicator assignment respects groups, links and loops.
pub(crate) fn indicators_feasible(market: &Market, on: &[Vec<bool>]) -> bool {
    market.agents.iter().zip(on).all(|(agent, z)| {
        let acc: Vec<f64> = z.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        agent.is_feasible(&acc).unwrap_or(false)
    })
}

/// Enumerates every block indicator pattern and solves the residual LP.
pub fn brute_force_welfare(market: &Market, settings: &Settings) -> Result<ExactSolution> {
    let blocks: Vec<(usize, usize)> = block_positions(market);
    if blocks.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooManyBlocks { count: blocks.len(), limit: BRUTE_FORCE_LIMIT });
    }
    let mut best: Option<(f64, Allocation)> = None;
    let mut nodes = 0;
    for mask in 0u64..(1u64 << blocks.len()) {
        let mut on: Vec<Vec<bool>> = market.agents.iter().map(|a| vec![false; a.bids.len()]).collect();
        for (j, &(i, b)) in blocks.iter().enumerate() {
            on[i][b] = mask & (1 << j) != 0;
        }
        if !indicators_feasible(market, &on) {
            continue;
        }
        nodes += 1;
        let mut program = PatternProgram::new(market, &on);
        program.lp.feasibility_tol = settings.tol;
        let sol = match program.lp.solve() {
            Ok(s) => s,
            Err(LpError::Infeasible { .. }) => continue,
            Err(e) => return Err(lp_error(e)),
        };
        if best.as_ref().is_none_or(|(v, _)| sol.objective > *v + 1e-9) {
            best = Some((sol.objective, program.allocation(&sol.x)));
        }
    }
    let (welfare, allocation) = best.unwrap_or_else(|| (0.0, Allocation::zero(market)));
    Ok(ExactSolution { allocation, welfare, nodes, gap: 0.0 })
}

fn block_positions(market: &Market) -> Vec<(usize, usize)> {
    market
        .agents
        .iter()
        .enumerate()
        .flat_map(|(i, a)| {
            a.bids.iter().enumerate().filter(|(_, b)| b.as_block().is_some()).map(move |(j, _)| (i, j))
        })
        .collect()
}

/// Relaxation with indicator variables `z_b ∈ [0, 1]`:
/// `mar·z ≤ a ≤ z`, groups `Σ z ≤ 1`, links `z_child ≤ z_parent`, loops `z_a = z_b`.
struct IndicatorProgram {
    lp: LinearProgram,
    bids: Vec<Vec<BidVars>>,
    /// Indicator variable of each block, in market block order.
    z: Vec<usize>,
}

impl IndicatorProgram {
    fn new(market: &Market) -> Result<Self> {
        let k = market.num_commodities;
        let mut lp = LinearProgram::new();
        for _ in 0..k {
            lp.add_constraint(Vec::new(), Relation::Eq, 0.0);
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
        let mut bids = Vec::with_capacity(market.agents.len());
        let mut z = Vec::new();
        for agent in &market.agents {
            let mut vars: Vec<Option<BidVars>> = vec![None; agent.bids.len()];
            // Curves only: blocks are added below with their indicators.
            let curve_vars = {
                let mut curves = agent.clone();
                curves.bids.retain(|b| b.as_curve().is_some());
                let layout = AgentStructure::new(&curves)?;
                add_agent(&mut lp, &curves, &layout, &mut rows)
            };
            let mut curve_iter = curve_vars.into_iter();
            let mut zs: HashMap<&str, usize> = HashMap::new();
            for (j, bid) in agent.bids.iter().enumerate() {
                match &bid.kind {
                    BidKind::Curve(_) => vars[j] = curve_iter.next(),
                    BidKind::Block(b) => {
                        let a = lp.add_var(b.price, 0.0, 1.0);
                        let zb = lp.add_var(0.0, 0.0, 1.0);
                        for (h, &q) in b.quantity.iter().enumerate() {
                            if q != 0.0 && h < k {
                                rows[h].push((a, q));
                            }
                        }
                        lp.add_constraint(vec![(a, 1.0), (zb, -1.0)], Relation::Le, 0.0);
                        lp.add_constraint(vec![(a, 1.0), (zb, -b.mar)], Relation::Ge, 0.0);
                        vars[j] = Some(BidVars::Block { terms: vec![a] });
                        zs.insert(bid.id.as_str(), zb);
                        z.push(zb);
                    }
                }
            }
            let mut groups: Vec<(&str, Vec<(usize, f64)>)> = Vec::new();
            for bid in &agent.bids {
                let BidKind::Block(b) = &bid.kind else { continue };
                let zb = zs[bid.id.as_str()];
                if let Some(g) = &b.group {
                    match groups.iter_mut().find(|(name, _)| name == g) {
                        Some((_, row)) => row.push((zb, 1.0)),
                        None => groups.push((g.as_str(), vec![(zb, 1.0)])),
                    }
                }
                if let Some(&zp) = b.parent.as_deref().and_then(|p| zs.get(p)) {
                    lp.add_constraint(vec![(zb, 1.0), (zp, -1.0)], Relation::Le, 0.0);
                }
                if let Some(&zl) = b.loop_partner.as_deref().and_then(|l| zs.get(l)) {
                    if bid.id.as_str() < b.loop_partner.as_deref().unwrap_or("") {
                        lp.add_constraint(vec![(zb, 1.0), (zl, -1.0)], Relation::Eq, 0.0);
                    }
                }
            }
            for (_, row) in groups {
                if row.len() > 1 {
                    lp.add_constraint(row, Relation::Le, 1.0);
                }
            }
            bids.push(vars.into_iter().map(|v| v.expect("bid variables")).collect());
        }
        for (h, row) in rows.into_iter().enumerate() {
            lp.constraints[h].coeffs = row;
        }
        Ok(Self { lp, bids, z })
    }

    fn allocation(&self, x: &[f64]) -> Allocation {
        Allocation { acceptances: self.bids.iter().map(|bs| bs.iter().map(|b| b.ratio(x)).collect()).collect() }
    }
}

struct Node {
    bound: f64,
    id: usize,
    /// Per block: `None` free, `Some(v)` fixed.
    fixed: Vec<Option<bool>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap: larger bound first, then older node.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound.total_cmp(&other.bound).then_with(|| other.id.cmp(&self.id))
    }
}

/// Exact welfare optimum by best-first branch-and-bound on block indicators.
///
/// Branches on the most fractional indicator (lowest block index on ties).
/// When the node budget runs out the incumbent is returned with a positive gap.
pub fn solve_welfare(market: &Market, settings: &Settings) -> Result<ExactSolution> {
    let program = IndicatorProgram::new(market)?;
    let nz = program.z.len();
    let mut incumbent = (0.0, Allocation::zero(market));
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::INFINITY, id: 0, fixed: vec![None; nz] });
    let mut next_id = 1;
    let mut nodes = 0;
    let eps = |v: f64| 1e-9 * (1.0 + v.abs());

    while let Some(node) = heap.pop() {
        if node.bound <= incumbent.0 + eps(incumbent.0) {
            break;
        }
        if nodes >= settings.node_budget {
            let gap = (node.bound - incumbent.0).max(0.0);
            let gap = if gap.is_finite() { gap } else { f64::MAX };
            return Ok(ExactSolution { allocation: incumbent.1, welfare: incumbent.0, nodes, gap: gap.max(f64::MIN_POSITIVE) });
        }
        nodes += 1;
        let mut lp = program.lp.clone();
        lp.feasibility_tol = settings.tol;
        for (j, f) in node.fixed.iter().enumerate() {
            if let Some(v) = f {
                let b = if *v { 1.0 } else { 0.0 };
                lp.lower[program.z[j]] = b;
                lp.upper[program.z[j]] = b;
            }
        }
        let sol = match lp.solve() {
            Ok(s) => s,
            Err(LpError::Infeasible { .. }) => continue,
            Err(e) => return Err(lp_error(e)),
        };
        if sol.objective <= incumbent.0 + eps(incumbent.0) {
            continue;
        }
        let branch = (0..nz)
            .filter(|&j| node.fixed[j].is_none())
            .map(|j| (j, sol.x[program.z[j]]))
            .filter(|&(_, v)| v > 1e-9 && v < 1.0 - 1e-9)
            .min_by(|a, b| (a.1 - 0.5).abs().total_cmp(&(b.1 - 0.5).abs()).then(a.0.cmp(&b.0)));
        match branch {
            None => {
                let mut allocation = program.allocation(&sol.x);
                snap_blocks(market, &mut allocation, &program, &sol.x);
                incumbent = (sol.objective, allocation);
            }
            Some((j, _)) => {
                for value in [true, false] {
                    let mut fixed = node.fixed.clone();
                    fixed[j] = Some(value);
                    heap.push(Node { bound: sol.objective, id: next_id, fixed });
                    next_id += 1;
                }
            }
        }
    }
    Ok(ExactSolution { allocation: incumbent.1, welfare: incumbent.0, nodes, gap: 0.0 })
}

/// Rounds block ratios whose indicator is off to exactly zero and clamps the
/// rest into `[mar, 1]`, removing solver noise.
fn snap_blocks(market: &Market, allocation: &mut Allocation, program: &IndicatorProgram, x: &[f64]) {
    let mut j = 0;
    for (agent, acc) in market.agents.iter().zip(allocation.acceptances.iter_mut()) {
        for (bid, a) in agent.bids.iter().zip(acc.iter_mut()) {
            if let Some(b) = bid.as_block() {
                *a = if x[program.z[j]] < 0.5 { 0.0 } else { a.clamp(b.mar, 1.0) };
                j += 1;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;
    use crate::model::CurveMode;

    #[test]
    fn four_agent_market_welfare_is_six() {
        let m = four_agent_market();
        for sol in [solve_welfare(&m, &Settings::default()).unwrap(), brute_force_welfare(&m, &Settings::default()).unwrap()] {
            assert!((sol.welfare - 6.0).abs() < 1e-9);
            assert_eq!(sol.gap, 0.0);
            let x: Vec<f64> = sol.allocation.bundles(&m).unwrap().iter().map(|b| b[0]).collect();
            for (a, b) in x.iter().zip([3.0, 1.0, -2.0, -2.0]) {
                assert!((a - b).abs() < 1e-9, "{x:?}");
            }
        }
    }

    #[test]
    fn exclusive_group_accepts_one() {
        let mut b1 = block("b1", 10.0, vec![1.0], 1.0);
        let mut b2 = block("b2", 9.0, vec![1.0], 1.0);
        for b in [&mut b1, &mut b2] {
            if let BidKind::Block(x) = &mut b.kind {
                x.group = Some("g".into());
            }
        }
        let m = Market::new(
            1,
            vec![agent("a", vec![b1, b2]), agent("s", vec![curve("c", 0, CurveMode::Stepwise, &[(1.0, -5.0)])])],
        );
        let s = brute_force_welfare(&m, &Settings::default()).unwrap();
        assert_eq!(s.allocation.acceptances[0], vec![1.0, 0.0]);
        assert!((s.welfare - 9.0).abs() < 1e-9);
        let t = solve_welfare(&m, &Settings::default()).unwrap();
        assert!((t.welfare - 9.0).abs() < 1e-9);
    }

    #[test]
    fn node_budget_reports_gap() {
        let m = four_agent_market();
        let settings = Settings { node_budget: 1, ..Settings::default() };
        let s = solve_welfare(&m, &settings).unwrap();
        assert!(s.gap > 0.0);
        assert!(s.allocation.is_feasible(&m).unwrap());
    }

    #[test]
    fn too_many_blocks_for_enumeration() {
        let bids = (0..21).map(|i| block(&format!("b{i}"), 1.0, vec![1.0], 1.0)).collect();
        let m = Market::new(1, vec![agent("a", bids)]);
        assert!(matches!(brute_force_welfare(&m, &Settings::default()), Err(Error::TooManyBlocks { .. })));
    }
}
