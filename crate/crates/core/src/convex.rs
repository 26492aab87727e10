//! The convexified market: every agent's valuation replaced by its concave
//! envelope, solved as one linear program whose balance-row duals are
//! equilibrium prices.
//!
//! Curves are already concave. An independent block's envelope is the linear
//! extension of its value over `[0, 1]`. Blocks coupled by exclusive groups,
//! parent links or loops are convexified jointly: each feasible on/off
//! pattern of the component gets a weight `w`, the block variables of that
//! pattern live in `[mar·w, w]`, and the weights sum to at most one. This is
//! the convex hull of the component's acceptance set, so the program value is
//! `Σ_i cav(u_i)`.

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpError, LpSolution, Relation};
use crate::model::{Agent, AgentStructure, Allocation, BidKind, Market, PriceVector};
use crate::settings::Settings;

/// How one bid's acceptance ratio is read off the LP solution.
#[derive(Debug, Clone)]
pub(crate) enum BidVars {
    /// Segment variables in merit order with their absolute volumes.
    Curve { vars: Vec<usize>, volumes: Vec<f64>, total: f64 },
    /// The acceptance ratio is the sum of these variables.
    Block { terms: Vec<usize> },
}

impl BidVars {
    pub(crate) fn ratio(&self, x: &[f64]) -> f64 {
        match self {
            BidVars::Curve { vars, volumes, total } => {
                if *total <= 0.0 {
                    return 0.0;
                }
                let filled: f64 = vars.iter().zip(volumes).map(|(&v, q)| x[v] * q).sum();
                (filled / total).clamp(0.0, 1.0)
            }
            BidVars::Block { terms } => terms.iter().map(|&v| x[v]).sum::<f64>().clamp(0.0, 1.0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConvexifiedProgram {
    pub lp: LinearProgram,
    pub num_commodities: usize,
    /// Per agent, per bid.
    pub(crate) bids: Vec<Vec<BidVars>>,
}

impl ConvexifiedProgram {
    /// Relaxed block acceptance ratios that are strictly between 0 and 1.
    pub fn fractional_blocks(&self, allocation: &Allocation, market: &Market, tol: f64) -> usize {
        market
            .agents
            .iter()
            .zip(&allocation.acceptances)
            .flat_map(|(agent, acc)| agent.bids.iter().zip(acc))
            .filter(|(bid, &a)| bid.as_block().is_some() && a > tol && a < 1.0 - tol)
            .count()
    }

    /// Extra rows beyond the balance rows (one per coupled block component).
    pub fn coupling_rows(&self) -> usize {
        self.lp.constraints.len().saturating_sub(self.num_commodities)
    }

    pub fn allocation(&self, x: &[f64]) -> Allocation {
        Allocation { acceptances: self.bids.iter().map(|bs| bs.iter().map(|b| b.ratio(x)).collect()).collect() }
    }
}

/// Adds one agent's envelope variables; each variable's column entries are
/// appended to `rows[commodity]`.
pub(crate) fn add_agent(
    lp: &mut LinearProgram,
    agent: &Agent,
    structure: &AgentStructure,
    rows: &mut [Vec<(usize, f64)>],
) -> Vec<BidVars> {
    let mut out: Vec<Option<BidVars>> = vec![None; agent.bids.len()];
    for curve in &structure.curves {
        let mut vars = Vec::with_capacity(curve.segments.len());
        let mut volumes = Vec::with_capacity(curve.segments.len());
        for s in &curve.segments {
            let v = lp.add_var(s.money(), 0.0, 1.0);
            if curve.hour < rows.len() {
                rows[curve.hour].push((v, s.quantity));
            }
            vars.push(v);
            volumes.push(s.quantity.abs());
        }
        out[curve.bid] = Some(BidVars::Curve { vars, volumes, total: curve.total_abs });
    }
    for comp in &structure.components {
        if comp.is_single() {
            let i = comp.blocks[0];
            let b = agent.bids[i].as_block().expect("block");
            let v = lp.add_var(b.price, 0.0, 1.0);
            push_column(rows, v, &b.quantity);
            out[i] = Some(BidVars::Block { terms: vec![v] });
            continue;
        }
        let mut terms: Vec<Vec<usize>> = vec![Vec::new(); comp.blocks.len()];
        let mut weights = Vec::with_capacity(comp.patterns.len());
        for pattern in &comp.patterns {
            let w = lp.add_var(0.0, 0.0, 1.0);
            weights.push((w, 1.0));
            for (j, (&i, &on)) in comp.blocks.iter().zip(pattern).enumerate() {
                if !on {
                    continue;
                }
                let b = agent.bids[i].as_block().expect("block");
                let y = lp.add_var(b.price, 0.0, 1.0);
                push_column(rows, y, &b.quantity);
                lp.add_constraint(vec![(y, 1.0), (w, -1.0)], Relation::Le, 0.0);
                if b.mar > 0.0 {
                    lp.add_constraint(vec![(y, 1.0), (w, -b.mar)], Relation::Ge, 0.0);
                }
                terms[j].push(y);
            }
        }
        lp.add_constraint(weights, Relation::Le, 1.0);
        for (j, &i) in comp.blocks.iter().enumerate() {
            out[i] = Some(BidVars::Block { terms: std::mem::take(&mut terms[j]) });
        }
    }
    out.into_iter().map(|b| b.expect("every bid has variables")).collect()
}

fn push_column(rows: &mut [Vec<(usize, f64)>], var: usize, quantity: &[f64]) {
    for (h, &q) in quantity.iter().enumerate() {
        if q != 0.0 && h < rows.len() {
            rows[h].push((var, q));
        }
    }
}

/// Builds the welfare program of the convexified market. Balance rows come
/// first, one per commodity, so their duals are the prices.
pub fn build_convexified(market: &Market) -> Result<ConvexifiedProgram> {
    let k = market.num_commodities;
    let mut lp = LinearProgram::new();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    let structures = market.agents.iter().map(AgentStructure::new).collect::<Result<Vec<_>>>()?;
    // Reserve the balance rows so their indices are 0..k.
    for _ in 0..k {
        lp.add_constraint(Vec::new(), Relation::Eq, 0.0);
    }
    let bids = market
        .agents
        .iter()
        .zip(&structures)
        .map(|(agent, s)| add_agent(&mut lp, agent, s, &mut rows))
        .collect();
    for (h, row) in rows.into_iter().enumerate() {
        lp.constraints[h].coeffs = row;
    }
    Ok(ConvexifiedProgram { lp, num_commodities: k, bids })
}

/// Optimal primal vertex and dual prices of the convexified market.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub prices: PriceVector,
    /// `v^D`, the Lagrange dual objective at `prices`.
    pub dual_value: f64,
    /// `v^P`, the convexified welfare.
    pub primal_value: f64,
    pub allocation: Allocation,
}

pub(crate) fn lp_error(e: LpError) -> Error {
    match e {
        LpError::Unbounded => Error::Internal("welfare program is unbounded".into()),
        other => Error::Lp(other),
    }
}

pub(crate) fn solve_raw(program: &ConvexifiedProgram, settings: &Settings) -> Result<LpSolution> {
    let mut lp = program.lp.clone();
    lp.feasibility_tol = lp.feasibility_tol.min(settings.tol);
    lp.solve().map_err(lp_error)
}

/// Solves the convexified welfare program and checks strong duality.
pub fn solve_lp(market: &Market, program: &ConvexifiedProgram, settings: &Settings) -> Result<DualSolution> {
    let sol = solve_raw(program, settings)?;
    let prices: Vec<f64> = sol.duals[..program.num_commodities].iter().map(|&d| if d == 0.0 { 0.0 } else { d }).collect();
    let dual = dual_value(market, &prices)?;
    let gap = (sol.objective - dual).abs();
    if gap > settings.scaled(sol.objective) {
        return Err(Error::Internal(format!(
            "strong duality violated: primal {} dual {} (gap {gap:e} after {} pivots)",
            sol.objective, dual, sol.iterations
        )));
    }
    Ok(DualSolution { prices, dual_value: dual, primal_value: sol.objective, allocation: program.allocation(&sol.x) })
}

/// Builds and solves the convexified market in one step.
pub fn solve_convexified(market: &Market, settings: &Settings) -> Result<DualSolution> {
    let program = build_convexified(market)?;
    solve_lp(market, &program, settings)
}

/// `max_x cav(u_i)(x) − λ·x` for one agent.
pub fn max_surplus(agent: &Agent, prices: &[f64]) -> Result<f64> {
    let structure = AgentStructure::new(agent)?;
    Ok(surplus_with(agent, &structure, prices))
}

pub(crate) fn surplus_with(agent: &Agent, structure: &AgentStructure, prices: &[f64]) -> f64 {
    let mut total = 0.0;
    for curve in &structure.curves {
        let lambda = prices.get(curve.hour).copied().unwrap_or(0.0);
        total += curve.segments.iter().map(|s| (s.money() - lambda * s.quantity).max(0.0)).sum::<f64>();
    }
    for comp in &structure.components {
        let margins: Vec<(f64, f64)> = comp
            .blocks
            .iter()
            .map(|&i| {
                let b = agent.bids[i].as_block().expect("block");
                (b.margin(prices), b.mar)
            })
            .collect();
        let best = comp
            .patterns
            .iter()
            .map(|z| {
                z.iter()
                    .zip(&margins)
                    .filter(|(on, _)| **on)
                    .map(|(_, &(m, r))| m.max(r * m))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        total += best;
    }
    total
}

/// Lagrange dual objective `Σ_i max_x (cav(u_i)(x) − λ·x)`.
pub fn dual_value(market: &Market, prices: &[f64]) -> Result<f64> {
    if prices.len() != market.num_commodities {
        return Err(Error::DimensionMismatch { expected: market.num_commodities, got: prices.len() });
    }
    market.agents.iter().map(|a| max_surplus(a, prices)).sum()
}

/// `cav(u_i)(x)`, or `None` if `x` is outside the agent's convexified trade set.
pub fn envelope_value(agent: &Agent, x: &[f64], settings: &Settings) -> Result<Option<f64>> {
    let k = x.len();
    let structure = AgentStructure::new(agent)?;
    let mut lp = LinearProgram::new();
    lp.feasibility_tol = settings.tol;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    add_agent(&mut lp, agent, &structure, &mut rows);
    for (h, row) in rows.into_iter().enumerate() {
        lp.add_constraint(row, Relation::Eq, x[h]);
    }
    if agent.bids.iter().any(|b| matches!(&b.kind, BidKind::Block(blk) if blk.quantity.len() != k)) {
        return Err(Error::DimensionMismatch { expected: k, got: 0 });
    }
    match lp.solve() {
        Ok(sol) => Ok(Some(sol.objective)),
        Err(LpError::Infeasible { .. }) => Ok(None),
        Err(e) => Err(lp_error(e)),
    }
}

/// Reduced costs and duals below this relative size count as zero.
const FACE_TOL: f64 = 1e-9;

/// An extreme point of the envelope demand `argmax_x cav(u_i)(x) − λ·x`:
/// among surplus-maximising bundles, the one maximising `direction · x`.
pub fn envelope_demand_extreme(
    agent: &Agent,
    prices: &[f64],
    direction: &[f64],
    settings: &Settings,
) -> Result<Vec<f64>> {
    let k = prices.len();
    let structure = AgentStructure::new(agent)?;
    let mut lp = LinearProgram::new();
    lp.feasibility_tol = settings.tol;
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
    add_agent(&mut lp, agent, &structure, &mut rows);
    let x: Vec<usize> = (0..k).map(|_| lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY)).collect();
    for (h, mut row) in rows.into_iter().enumerate() {
        row.push((x[h], -1.0));
        lp.add_constraint(row, Relation::Eq, 0.0);
    }
    // Surplus objective: value minus λ·x.
    for (h, &v) in x.iter().enumerate() {
        lp.objective[v] = -prices[h];
    }
    // Restrict to the optimal face: every optimal point is complementary to
    // any optimal dual, so pin variables with nonzero reduced cost and make
    // rows with nonzero duals tight.
    let sol = lp.solve().map_err(lp_error)?;
    let mut reduced = lp.objective.clone();
    let mut scale: Vec<f64> = lp.objective.iter().map(|c| 1.0 + c.abs()).collect();
    for (row, &y) in lp.constraints.iter().zip(&sol.duals) {
        for &(j, a) in &row.coeffs {
            reduced[j] -= y * a;
            scale[j] += (y * a).abs();
        }
    }
    for j in 0..lp.num_vars() {
        if reduced[j] > FACE_TOL * scale[j] {
            lp.lower[j] = lp.upper[j];
        } else if reduced[j] < -FACE_TOL * scale[j] {
            lp.upper[j] = lp.lower[j];
        }
    }
    for (row, &y) in lp.constraints.iter_mut().zip(&sol.duals) {
        if y.abs() > FACE_TOL * (1.0 + y.abs()) {
            row.relation = Relation::Eq;
        }
    }
    lp.objective = vec![0.0; lp.num_vars()];
    for (h, &v) in x.iter().enumerate() {
        lp.objective[v] = direction[h];
    }
    let sol = lp.solve().map_err(lp_error)?;
    Ok(x.iter().map(|&v| sol.x[v]).collect())
}
