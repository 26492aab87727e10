//! The three approximate equilibria at the convexified prices `λ*`:
//! `x′` (balanced, few agents off their demand), `x″` (everyone on demand,
//! bounded imbalance) and `x‴` (welfare optimum priced at `λ*`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{lost_opportunity_cost, LocReport};
use crate::convex::{dual_value, solve_convexified, DualSolution};
use crate::demand::{demand_set, DemandSet};
use crate::error::{Error, Result};
use crate::exact::{indicators_feasible, solve_welfare, PatternProgram};
use crate::lp::LpError;
use crate::model::{sum_bundles, Allocation, Market, PriceVector};
use crate::settings::Settings;

#[derive(Debug, Clone, PartialEq)]
pub struct XPrime {
    pub prices: PriceVector,
    pub allocation: Allocation,
    /// Agents whose bundle is not in their demand set.
    pub violations: Vec<usize>,
    /// Number of agents with `ρ_i(λ*) > 0`.
    pub nonconvex_agents: usize,
    pub primal_value: f64,
    pub dual_value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XDoublePrime {
    pub prices: PriceVector,
    pub allocation: Allocation,
    /// `Σ_i x″_i`.
    pub imbalance: Vec<f64>,
    pub imbalance_norm: f64,
    /// Sum of the `K` largest `ρ_i(λ*)`.
    pub rho_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexHullPricing {
    pub prices: PriceVector,
    pub allocation: Allocation,
    /// `v*`, the welfare of the original market.
    pub welfare: f64,
    /// `v^D`, the dual value at `λ*`.
    pub dual_value: f64,
    pub loc: LocReport,
    /// Branch-and-bound gap; the identity `Γ = v^D − v*` is checked only when zero.
    pub search_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxEquilibria {
    pub x_prime: XPrime,
    pub x_double_prime: XDoublePrime,
    pub x_triple_prime: ConvexHullPricing,
    /// `ρ_i(λ*)` per agent.
    pub rhos: Vec<f64>,
}

/// Shared analysis at `λ*`: vertex solution, demand sets and `ρ`.
struct Analysis {
    dual: DualSolution,
    sets: Vec<DemandSet>,
    rhos: Vec<f64>,
    violations: Vec<usize>,
}

fn analyse(market: &Market, settings: &Settings) -> Result<Analysis> {
    let dual = solve_convexified(market, settings)?;
    let prices = &dual.prices;
    let loc = lost_opportunity_cost(market, &dual.allocation, prices, settings)?;
    let bundles = dual.allocation.bundles(market)?;
    let mut sets = Vec::with_capacity(market.agents.len());
    let mut rhos = Vec::with_capacity(market.agents.len());
    let mut violations = Vec::new();
    for (i, agent) in market.agents.iter().enumerate() {
        let set = demand_set(agent, prices, settings)?;
        let mut rho = set.rho(settings.norm, settings.tol);
        if loc.per_agent[i] > 0.0 {
            violations.push(i);
            // x′_i lies in the hull, so its distance to the set bounds ρ_i from below.
            rho = rho.max(set.distance(&bundles[i], settings.norm));
        }
        sets.push(set);
        rhos.push(rho);
    }
    Ok(Analysis { dual, sets, rhos, violations })
}

fn x_prime_from(market: &Market, a: &Analysis) -> Result<XPrime> {
    let l = a.rhos.iter().filter(|&&r| r > 0.0).count();
    let bound = l.min(market.num_commodities);
    if a.violations.len() > bound {
        return Err(Error::Internal(format!(
            "{} agents off their demand exceeds min(L, K) = {bound}",
            a.violations.len()
        )));
    }
    Ok(XPrime {
        prices: a.dual.prices.clone(),
        allocation: a.dual.allocation.clone(),
        violations: a.violations.clone(),
        nonconvex_agents: l,
        primal_value: a.dual.primal_value,
        dual_value: a.dual.dual_value,
    })
}

fn top_k_sum(rhos: &[f64], k: usize) -> f64 {
    let mut r = rhos.to_vec();
    r.sort_by(|a, b| b.total_cmp(a));
    r.iter().take(k).sum()
}

fn x_double_prime_from(market: &Market, a: &Analysis, settings: &Settings) -> Result<XDoublePrime> {
    let k = market.num_commodities;
    let bundles = a.dual.allocation.bundles(market)?;
    let mut acceptances = a.dual.allocation.acceptances.clone();
    let mut snapped = bundles.clone();
    for &i in &a.violations {
        let (point, acc, _) = a.sets[i].nearest(&bundles[i], settings.norm);
        acceptances[i] = acc;
        snapped[i] = point;
    }
    let imbalance = sum_bundles(&snapped, k);
    let imbalance_norm = settings.norm.of(&imbalance);
    let rho_bound = top_k_sum(&a.rhos, k);
    if imbalance_norm > rho_bound + settings.scaled(rho_bound) {
        return Err(Error::Internal(format!("imbalance {imbalance_norm} exceeds the ρ bound {rho_bound}")));
    }
    Ok(XDoublePrime {
        prices: a.dual.prices.clone(),
        allocation: Allocation { acceptances },
        imbalance,
        imbalance_norm,
        rho_bound,
    })
}

fn chp_from(market: &Market, prices: &[f64], settings: &Settings) -> Result<ConvexHullPricing> {
    let exact = solve_welfare(market, settings)?;
    let dual = dual_value(market, prices)?;
    let loc = lost_opportunity_cost(market, &exact.allocation, prices, settings)?;
    if exact.gap == 0.0 {
        let gap = dual - exact.welfare;
        if (loc.total - gap).abs() > 1e-6 * (1.0 + dual.abs()) {
            return Err(Error::Internal(format!("lost opportunity cost {} differs from duality gap {gap}", loc.total)));
        }
    }
    Ok(ConvexHullPricing {
        prices: prices.to_vec(),
        allocation: exact.allocation,
        welfare: exact.welfare,
        dual_value: dual,
        loc,
        search_gap: exact.gap,
    })
}

/// `λ*` with `x′` and, when some agent is off its demand, `x″`.
pub(crate) fn candidate_allocations(market: &Market, settings: &Settings) -> Result<(PriceVector, Vec<Allocation>)> {
    let a = analyse(market, settings)?;
    let mut out = vec![a.dual.allocation.clone()];
    if !a.violations.is_empty() {
        out.push(x_double_prime_from(market, &a, settings)?.allocation);
    }
    Ok((a.dual.prices, out))
}

/// Vertex solution of the convexified market with its demand violations.
pub fn construct_x_prime(market: &Market, settings: &Settings) -> Result<XPrime> {
    x_prime_from(market, &analyse(market, settings)?)
}

/// Every agent moved to its nearest demanded bundle.
pub fn construct_x_double_prime(market: &Market, settings: &Settings) -> Result<XDoublePrime> {
    x_double_prime_from(market, &analyse(market, settings)?, settings)
}

/// Welfare-maximising allocation priced at the convexified market's prices.
pub fn convex_hull_pricing(market: &Market, settings: &Settings) -> Result<ConvexHullPricing> {
    let dual = solve_convexified(market, settings)?;
    chp_from(market, &dual.prices, settings)
}

pub fn approximate_equilibria(market: &Market, settings: &Settings) -> Result<ApproxEquilibria> {
    let a = analyse(market, settings)?;
    Ok(ApproxEquilibria {
        x_prime: x_prime_from(market, &a)?,
        x_double_prime: x_double_prime_from(market, &a, settings)?,
        x_triple_prime: chp_from(market, &a.dual.prices, settings)?,
        rhos: a.rhos,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposition1Report {
    /// `Γ(x‴, λ*)`.
    pub reference: f64,
    pub samples: usize,
    /// Sampled `(λ, x, Γ(x, λ))` with `Γ(x, λ) < Γ(x‴, λ*)`.
    pub counterexamples: Vec<(PriceVector, Allocation, f64)>,
}

impl Proposition1Report {
    pub fn holds(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// Samples balanced feasible allocations and prices and checks that none has
/// a smaller lost opportunity cost than convex hull pricing.
pub fn check_proposition1(market: &Market, trials: usize, seed: u64, settings: &Settings) -> Result<Proposition1Report> {
    let chp = convex_hull_pricing(market, settings)?;
    let reference = chp.loc.total;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks: Vec<(usize, usize)> = market
        .agents
        .iter()
        .enumerate()
        .flat_map(|(i, a)| a.bids.iter().enumerate().filter(|(_, b)| b.as_block().is_some()).map(move |(j, _)| (i, j)))
        .collect();
    let price_scale = 1.0 + chp.prices.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let mut counterexamples = Vec::new();
    let mut samples = vec![(chp.prices.clone(), chp.allocation.clone())];
    let mut attempts = 0;
    while samples.len() < trials.max(1) && attempts < 20 * trials.max(1) {
        attempts += 1;
        let mut on: Vec<Vec<bool>> = market.agents.iter().map(|a| vec![false; a.bids.len()]).collect();
        for &(i, j) in &blocks {
            on[i][j] = rng.gen_bool(0.5);
        }
        if !indicators_feasible(market, &on) {
            continue;
        }
        let mut program = PatternProgram::new(market, &on);
        for c in program.lp.objective.iter_mut() {
            *c = rng.gen_range(-1.0..1.0);
        }
        let sol = match program.lp.solve() {
            Ok(s) => s,
            Err(LpError::Infeasible { .. }) => continue,
            Err(e) => return Err(crate::convex::lp_error(e)),
        };
        let prices: Vec<f64> = chp.prices.iter().map(|p| p + rng.gen_range(-1.0..1.0) * price_scale).collect();
        samples.push((prices, program.allocation(&sol.x)));
    }
    for (prices, allocation) in &samples {
        let gamma = lost_opportunity_cost(market, allocation, prices, settings)?.total;
        if gamma < reference - 1e-6 * (1.0 + reference.abs()) {
            counterexamples.push((prices.clone(), allocation.clone(), gamma));
        }
    }
    Ok(Proposition1Report { reference, samples: samples.len(), counterexamples })
}
