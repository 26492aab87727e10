//! Walrasian equilibrium detection, approximate equilibria, lost opportunity
//! costs and rule-based clearing.

mod approx;
mod euphemia;

use serde::{Deserialize, Serialize};

use crate::convex::max_surplus;
use crate::demand::demand_set;
use crate::error::{Error, Result};
use crate::geometry::IntervalUnion;
use crate::model::{bundle_value, Allocation, Market, PriceVector};
use crate::settings::Settings;

pub use approx::{
    approximate_equilibria, check_proposition1, construct_x_double_prime, construct_x_prime, convex_hull_pricing,
    ApproxEquilibria, ConvexHullPricing, Proposition1Report, XDoublePrime, XPrime,
};
pub use euphemia::{clear_euphemia_style, EuphemiaOutcome, EUPHEMIA_BLOCK_LIMIT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquilibriumStatus {
    Exact,
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCertificate {
    pub prices: PriceVector,
    pub allocation: Allocation,
    pub status: EquilibriumStatus,
    /// Whether each agent's bundle maximises its surplus at `prices`.
    pub in_demand: Vec<bool>,
    /// Norm of `Σ_i x_i`.
    pub balance_residual: f64,
}

impl EquilibriumCertificate {
    pub fn is_exact(&self) -> bool {
        self.status == EquilibriumStatus::Exact
    }
}

/// Per-agent lost opportunity costs; infinite for infeasible bundles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocReport {
    pub total: f64,
    pub per_agent: Vec<f64>,
}

/// Tolerance for an agent-level surplus comparison.
fn surplus_tol(settings: &Settings, magnitudes: &[f64]) -> f64 {
    settings.tol * (1.0 + magnitudes.iter().map(|m| m.abs()).sum::<f64>())
}

/// `Γ_i = max_x (u_i(x) − λ·x) − (u_i(x_i) − λ·x_i)` for every agent.
pub fn lost_opportunity_cost(
    market: &Market,
    allocation: &Allocation,
    prices: &[f64],
    settings: &Settings,
) -> Result<LocReport> {
    let k = market.num_commodities;
    if prices.len() != k {
        return Err(Error::DimensionMismatch { expected: k, got: prices.len() });
    }
    if allocation.acceptances.len() != market.agents.len() {
        return Err(Error::DimensionMismatch { expected: market.agents.len(), got: allocation.acceptances.len() });
    }
    let mut per_agent = Vec::with_capacity(market.agents.len());
    for (agent, acc) in market.agents.iter().zip(&allocation.acceptances) {
        let Some(own) = agent.value(acc)? else {
            per_agent.push(f64::INFINITY);
            continue;
        };
        let x = agent.bundle(acc, k)?;
        let value = bundle_value(agent, &x, settings.tol)?.map_or(own, |b| b.value.max(own));
        let best = max_surplus(agent, prices)?;
        let realised = value - prices.iter().zip(&x).map(|(l, v)| l * v).sum::<f64>();
        let gamma = best - realised;
        per_agent.push(if gamma.abs() <= surplus_tol(settings, &[best, realised]) { 0.0 } else { gamma.max(0.0) });
    }
    Ok(LocReport { total: per_agent.iter().sum(), per_agent })
}

/// Checks both equilibrium conditions: every bundle is in its agent's
/// demand set and supply meets demand.
pub fn detect_equilibrium(
    market: &Market,
    prices: &[f64],
    allocation: &Allocation,
    settings: &Settings,
) -> Result<EquilibriumCertificate> {
    let loc = lost_opportunity_cost(market, allocation, prices, settings)?;
    let in_demand: Vec<bool> = loc.per_agent.iter().map(|&g| g == 0.0).collect();
    let bundles = allocation.bundles(market)?;
    let net = crate::model::sum_bundles(&bundles, market.num_commodities);
    let balance_residual = settings.norm.of(&net);
    let volume: f64 = bundles.iter().flatten().map(|v| v.abs()).sum();
    let balanced = balance_residual <= settings.scaled(volume);
    let status =
        if balanced && in_demand.iter().all(|&b| b) { EquilibriumStatus::Exact } else { EquilibriumStatus::None };
    Ok(EquilibriumCertificate {
        prices: prices.to_vec(),
        allocation: allocation.clone(),
        status,
        in_demand,
        balance_residual,
    })
}

/// Looks for a Walrasian equilibrium at the convexified prices: first the
/// vertex allocation, then the demand-snapped allocation, finally the welfare
/// optimum (an equilibrium exists exactly when its lost opportunity cost at
/// those prices vanishes).
pub fn find_equilibrium(market: &Market, settings: &Settings) -> Result<Option<EquilibriumCertificate>> {
    let (prices, candidates) = approx::candidate_allocations(market, settings)?;
    for allocation in &candidates {
        let cert = detect_equilibrium(market, &prices, allocation, settings)?;
        if cert.is_exact() {
            return Ok(Some(cert));
        }
    }
    let exact = crate::exact::solve_welfare(market, settings)?;
    let cert = detect_equilibrium(market, &prices, &exact.allocation, settings)?;
    Ok(cert.is_exact().then_some(cert))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corollary1Report {
    /// Every agent with a nonconvex valuation has a single demanded bundle.
    pub holds: bool,
    pub equilibrium_found: bool,
    pub certificate: Option<EquilibriumCertificate>,
}

/// Singleton-demand sufficient condition for an equilibrium.
pub fn corollary1_check(market: &Market, settings: &Settings) -> Result<Corollary1Report> {
    let xp = construct_x_prime(market, settings)?;
    let mut holds = true;
    for agent in market.agents.iter().filter(|a| !a.is_convex()) {
        if !demand_set(agent, &xp.prices, settings)?.is_singleton(settings.tol) {
            holds = false;
            break;
        }
    }
    let cert = detect_equilibrium(market, &xp.prices, &xp.allocation, settings)?;
    let found = cert.is_exact();
    if holds && !found {
        return Err(Error::Internal("singleton demand everywhere but the vertex allocation is no equilibrium".into()));
    }
    Ok(Corollary1Report { holds, equilibrium_found: found, certificate: found.then_some(cert) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corollary2Report {
    /// `Σ_i D_i(λ*)` on the single commodity.
    pub aggregate: IntervalUnion,
    /// Volumes the selling agents are willing to supply together at `λ*`.
    pub supply: IntervalUnion,
    pub convex: bool,
    pub equilibrium_found: bool,
    pub certificate: Option<EquilibriumCertificate>,
}

/// Aggregate-demand convexity check for single-commodity markets: the exact
/// Minkowski sum of the agents' demand sets, and a decomposition of zero trade
/// into demanded bundles when one exists.
pub fn corollary2_check_structured(market: &Market, settings: &Settings) -> Result<Corollary2Report> {
    if market.num_commodities != 1 {
        return Err(Error::InvalidSpec(format!(
            "unsupported market shape: aggregate demand needs one commodity, found {}",
            market.num_commodities
        )));
    }
    let xp = construct_x_prime(market, settings)?;
    let sets = market.agents.iter().map(|a| demand_set(a, &xp.prices, settings)).collect::<Result<Vec<_>>>()?;
    let pieces: Vec<IntervalUnion> = sets
        .iter()
        .map(|d| {
            IntervalUnion::new(d.cells.iter().map(|c| {
                let z = &c.zonotope;
                z.generators.iter().zip(&z.bounds).fold((z.base[0], z.base[0]), |(lo, hi), (g, &(a, b))| {
                    let (p, q) = (g[0] * a, g[0] * b);
                    (lo + p.min(q), hi + p.max(q))
                })
            }))
        })
        .collect();
    // suffix[i] = Σ_{j ≥ i} D_j
    let mut suffix = vec![IntervalUnion::point(0.0); pieces.len() + 1];
    for i in (0..pieces.len()).rev() {
        suffix[i] = pieces[i].minkowski_sum(&suffix[i + 1]);
    }
    let aggregate = suffix[0].clone();
    let supply = market
        .agents
        .iter()
        .zip(&pieces)
        .filter(|(a, _)| a.side() == crate::model::Side::Seller)
        .fold(IntervalUnion::point(0.0), |acc, (_, p)| {
            acc.minkowski_sum(&IntervalUnion::new(p.parts().iter().map(|&(lo, hi)| (-hi, -lo))))
        });
    let scale = 1.0 + aggregate.hull().map_or(0.0, |(a, b)| a.abs().max(b.abs()));
    let tol = settings.tol * scale;
    let convex = aggregate.widest_gap() <= tol;
    if !aggregate.contains(0.0, tol) {
        return Ok(Corollary2Report { aggregate, supply, convex, equilibrium_found: false, certificate: None });
    }
    let mut target = 0.0;
    let mut acceptances = Vec::with_capacity(pieces.len());
    for (i, (piece, set)) in pieces.iter().zip(&sets).enumerate() {
        // x ∈ D_i with target − x ∈ suffix[i + 1]
        let rest = &suffix[i + 1];
        let mut choice = None;
        'outer: for &(a, b) in piece.parts() {
            for &(c, d) in rest.parts() {
                let (lo, hi) = (a.max(target - d), b.min(target - c));
                if lo <= hi + tol {
                    choice = Some(lo.min(hi).max(lo));
                    break 'outer;
                }
            }
        }
        let x = choice.ok_or_else(|| Error::Internal("aggregate demand decomposition failed".into()))?;
        let (point, acc, _) = set.nearest(&[x], settings.norm);
        target -= point[0];
        acceptances.push(acc);
    }
    let allocation = Allocation { acceptances };
    let cert = detect_equilibrium(market, &xp.prices, &allocation, settings)?;
    let found = cert.is_exact();
    Ok(Corollary2Report { aggregate, supply, convex, equilibrium_found: found, certificate: found.then_some(cert) })
}

#[cfg(test)]
mod tests;
