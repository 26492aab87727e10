use super::{Agent, AgentStructure, BidKind};
use crate::error::Result;
use crate::lp::{LinearProgram, LpError, Relation};

/// Best valuation of a bundle over all acceptances that produce it.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleValue {
    pub value: f64,
    pub acceptances: Vec<f64>,
}

/// `u_i(x)`: the largest value the agent can attach to bundle `x`, or `None`
/// when no feasible acceptance vector trades exactly `x` (within `tol`).
pub fn bundle_value(agent: &Agent, x: &[f64], tol: f64) -> Result<Option<BundleValue>> {
    let k = x.len();
    let structure = AgentStructure::new(agent)?;
    let mut touched = vec![false; k];
    for bid in &agent.bids {
        match &bid.kind {
            BidKind::Curve(c) if c.hour < k => touched[c.hour] = true,
            BidKind::Block(b) => {
                for (t, q) in touched.iter_mut().zip(&b.quantity) {
                    *t |= *q != 0.0;
                }
            }
            _ => {}
        }
    }
    let scale = 1.0 + x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if x.iter().zip(&touched).any(|(v, &t)| !t && v.abs() > tol * scale) {
        return Ok(None);
    }

    let mut best: Option<BundleValue> = None;
    for pattern in structure.all_patterns(agent.bids.len()) {
        let mut lp = LinearProgram::new();
        lp.feasibility_tol = tol;
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); k];
        let mut curve_vars = Vec::new();
        for curve in &structure.curves {
            let vars: Vec<usize> = curve
                .segments
                .iter()
                .map(|s| {
                    let v = lp.add_var(s.money(), 0.0, 1.0);
                    rows[curve.hour].push((v, s.quantity));
                    v
                })
                .collect();
            curve_vars.push(vars);
        }
        let mut block_vars = Vec::new();
        for (i, bid) in agent.bids.iter().enumerate() {
            let BidKind::Block(b) = &bid.kind else { continue };
            if !pattern[i] {
                continue;
            }
            let v = lp.add_var(b.price, b.mar, 1.0);
            for (h, &q) in b.quantity.iter().enumerate() {
                if q != 0.0 {
                    rows[h].push((v, q));
                }
            }
            block_vars.push((i, v));
        }
        for (h, row) in rows.into_iter().enumerate() {
            if touched[h] {
                lp.add_constraint(row, Relation::Eq, x[h]);
            }
        }
        let sol = match lp.solve() {
            Ok(s) => s,
            Err(LpError::Infeasible { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        if best.as_ref().is_some_and(|b| b.value >= sol.objective) {
            continue;
        }
        let mut acceptances = vec![0.0; agent.bids.len()];
        for (curve, vars) in structure.curves.iter().zip(&curve_vars) {
            if curve.total_abs > 0.0 {
                let filled: f64 = curve
                    .segments
                    .iter()
                    .zip(vars)
                    .map(|(s, &v)| sol.x[v] * s.quantity.abs())
                    .sum();
                acceptances[curve.bid] = (filled / curve.total_abs).clamp(0.0, 1.0);
            }
        }
        for (i, v) in block_vars {
            acceptances[i] = sol.x[v].clamp(0.0, 1.0);
        }
        best = Some(BundleValue { value: sol.objective, acceptances });
    }
    Ok(best)
}
