//! Rule-based clearing in the style of the European day-ahead algorithm:
//! block bids may be rejected although in the money, but never accepted out
//! of the money, and every curve slice is served according to its class.
//!
//! Every indicator pattern of the blocks is tried. For a pattern the welfare
//! LP fixes the allocation; a second LP then looks for uniform prices under
//! which every curve slice and every accepted block is a best response and no
//! accepted block loses money. The best pattern that admits such prices wins.

use crate::convex::lp_error;
use crate::error::{Error, Result};
use crate::exact::{indicators_feasible, PatternProgram};
use crate::lp::{LinearProgram, LpError, Relation};
use crate::model::{Allocation, BidKind, Market, PriceVector};
use crate::settings::Settings;

/// Largest number of blocks the enumeration accepts.
pub const EUPHEMIA_BLOCK_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct EuphemiaOutcome {
    pub prices: PriceVector,
    pub allocation: Allocation,
    pub welfare: f64,
    /// Blocks in the money at the clearing prices but rejected, as (agent, bid).
    pub paradoxically_rejected: Vec<(usize, usize)>,
}

/// `None` when no pattern admits supporting prices.
pub fn clear_euphemia_style(market: &Market, settings: &Settings) -> Result<Option<EuphemiaOutcome>> {
    let blocks: Vec<(usize, usize)> = market
        .agents
        .iter()
        .enumerate()
        .flat_map(|(i, a)| a.bids.iter().enumerate().filter(|(_, b)| b.as_block().is_some()).map(move |(j, _)| (i, j)))
        .collect();
    if blocks.len() > EUPHEMIA_BLOCK_LIMIT {
        return Err(Error::TooManyBlocks { count: blocks.len(), limit: EUPHEMIA_BLOCK_LIMIT });
    }
    let mut best: Option<(f64, PriceVector, Allocation)> = None;
    for mask in 0u64..(1u64 << blocks.len()) {
        let mut on: Vec<Vec<bool>> = market.agents.iter().map(|a| vec![false; a.bids.len()]).collect();
        for (j, &(i, b)) in blocks.iter().enumerate() {
            on[i][b] = mask & (1 << j) != 0;
        }
        if !indicators_feasible(market, &on) {
            continue;
        }
        let mut program = PatternProgram::new(market, &on);
        program.lp.feasibility_tol = settings.tol;
        let sol = match program.lp.solve() {
            Ok(s) => s,
            Err(LpError::Infeasible { .. }) => continue,
            Err(e) => return Err(lp_error(e)),
        };
        if best.as_ref().is_some_and(|(w, _, _)| sol.objective <= *w + settings.scaled(*w)) {
            continue;
        }
        if let Some(prices) = supporting_prices(market, &on, sol.objective, settings)? {
            best = Some((sol.objective, prices, program.allocation(&sol.x)));
        }
    }
    Ok(best.map(|(welfare, prices, allocation)| {
        let paradoxically_rejected = market
            .agents
            .iter()
            .enumerate()
            .flat_map(|(i, a)| a.bids.iter().enumerate().map(move |(j, b)| (i, j, b)))
            .filter_map(|(i, j, bid)| {
                let b = bid.as_block()?;
                let m = b.margin(&prices);
                (allocation.acceptances[i][j] == 0.0 && m > settings.scaled(b.price)).then_some((i, j))
            })
            .collect();
        EuphemiaOutcome { prices, allocation, welfare, paradoxically_rejected }
    }))
}

/// Prices minimising the sum of best-response surpluses over the pattern's
/// pieces, subject to nonnegative margins for accepted blocks. They support
/// the pattern's welfare optimum exactly when that minimum equals its welfare.
fn supporting_prices(market: &Market, on: &[Vec<bool>], welfare: f64, settings: &Settings) -> Result<Option<PriceVector>> {
    let k = market.num_commodities;
    let mut lp = LinearProgram::new();
    lp.feasibility_tol = settings.tol;
    let lambda: Vec<usize> = (0..k).map(|_| lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY)).collect();
    for (agent, on) in market.agents.iter().zip(on) {
        for (bid, &active) in agent.bids.iter().zip(on) {
            match &bid.kind {
                BidKind::Curve(c) => {
                    if c.hour >= k {
                        continue;
                    }
                    for s in c.segments() {
                        // t ≥ 0 and t ≥ money − λ_h·q
                        let t = lp.add_var(-1.0, 0.0, f64::INFINITY);
                        lp.add_constraint(vec![(t, 1.0), (lambda[c.hour], s.quantity)], Relation::Ge, s.money());
                    }
                }
                BidKind::Block(b) if active => {
                    let t = lp.add_var(-1.0, f64::NEG_INFINITY, f64::INFINITY);
                    let mut row: Vec<(usize, f64)> =
                        b.quantity.iter().enumerate().filter(|(_, q)| **q != 0.0).map(|(h, &q)| (lambda[h], q)).collect();
                    let mut full = row.clone();
                    full.push((t, 1.0));
                    lp.add_constraint(full, Relation::Ge, b.price);
                    let mut partial: Vec<(usize, f64)> = row.iter().map(|&(v, q)| (v, b.mar * q)).collect();
                    partial.push((t, 1.0));
                    lp.add_constraint(partial, Relation::Ge, b.mar * b.price);
                    // No paradoxical acceptance: price − λ·q ≥ 0.
                    row.retain(|(_, q)| *q != 0.0);
                    lp.add_constraint(row, Relation::Le, b.price);
                }
                BidKind::Block(_) => {}
            }
        }
    }
    let sol = match lp.solve() {
        Ok(s) => s,
        Err(LpError::Infeasible { .. }) => return Ok(None),
        Err(LpError::Unbounded) => return Ok(None),
        Err(e) => return Err(lp_error(e)),
    };
    let min_surplus = -sol.objective;
    if min_surplus > welfare + settings.scaled(welfare) {
        return Ok(None);
    }
    Ok(Some(lambda.iter().map(|&v| sol.x[v] + 0.0).collect()))
}
