//! Demand sets at given prices, their convex hulls and the nonconvexity
//! measure `ρ_i(λ)`: the Hausdorff distance between a demand set and its hull.
//!
//! A demand set is kept as a finite union of cells. Each cell is a zonotope in
//! bundle space: a fixed bundle plus, for every bid whose margin is zero, a
//! segment of admissible acceptance ratios along the bid's full bundle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{orthonormal_basis, IntervalUnion, Norm, Zonotope};
use crate::lp::{LinearProgram, Relation};
use crate::model::{Agent, AgentStructure, BidKind, Market};
use crate::settings::Settings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoneyClass {
    InTheMoney,
    AtTheMoney,
    OutOfTheMoney,
}

impl MoneyClass {
    /// Classifies margin `m` given the magnitude of the amounts it was computed from.
    pub fn of(margin: f64, magnitude: f64, tol: f64) -> Self {
        if margin.abs() <= tol * magnitude {
            MoneyClass::AtTheMoney
        } else if margin > 0.0 {
            MoneyClass::InTheMoney
        } else {
            MoneyClass::OutOfTheMoney
        }
    }
}

/// One zonotope of a demand set, with the acceptances that realise it.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandCell {
    pub zonotope: Zonotope,
    /// Acceptance ratios of the bids that are fixed in this cell.
    pub acceptances: Vec<f64>,
    /// Bid behind each zonotope generator; its ratio is the generator's coefficient.
    pub generator_bids: Vec<usize>,
}

impl DemandCell {
    pub fn acceptances_at(&self, t: &[f64]) -> Vec<f64> {
        let mut acc = self.acceptances.clone();
        for (&b, &tj) in self.generator_bids.iter().zip(t) {
            acc[b] = tj;
        }
        acc
    }

    /// Nearest point of the cell with its acceptances and distance.
    pub fn nearest(&self, y: &[f64], norm: Norm) -> (Vec<f64>, Vec<f64>, f64) {
        let (x, d) = self.zonotope.nearest(y, norm);
        let t = self.coefficients(&x);
        (x, self.acceptances_at(&t), d)
    }

    /// Recovers generator coefficients of a point of the cell.
    fn coefficients(&self, x: &[f64]) -> Vec<f64> {
        let z = &self.zonotope;
        if z.generators.is_empty() {
            return Vec::new();
        }
        // Coordinate descent on the residual recovers coefficients of a point in the cell.
        let mut t: Vec<f64> = z.bounds.iter().map(|b| b.0).collect();
        let mut resid: Vec<f64> = x.iter().zip(&z.base).map(|(a, b)| a - b).collect();
        for (j, g) in z.generators.iter().enumerate() {
            for (r, gi) in resid.iter_mut().zip(g) {
                *r -= t[j] * gi;
            }
        }
        for _ in 0..10_000 {
            let mut moved = 0.0f64;
            for (j, g) in z.generators.iter().enumerate() {
                let gg: f64 = g.iter().map(|v| v * v).sum();
                if gg <= 1e-300 {
                    continue;
                }
                let (lo, hi) = z.bounds[j];
                let step = (t[j] + g.iter().zip(&resid).map(|(a, b)| a * b).sum::<f64>() / gg).clamp(lo, hi) - t[j];
                if step != 0.0 {
                    for (r, gi) in resid.iter_mut().zip(g) {
                        *r -= step * gi;
                    }
                    t[j] += step;
                    moved = moved.max(step.abs());
                }
            }
            if moved < 1e-14 {
                break;
            }
        }
        t
    }
}

/// `D_i(λ)` as a union of cells in bundle space.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSet {
    pub num_commodities: usize,
    pub cells: Vec<DemandCell>,
}

/// Vertex cap per cell; cells with more generators are not expanded to corners.
const MAX_CELL_GENERATORS: usize = 16;

impl DemandSet {
    pub fn vertices(&self, tol: f64) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = Vec::new();
        for cell in &self.cells {
            if cell.zonotope.generators.len() > MAX_CELL_GENERATORS {
                continue;
            }
            for v in cell.zonotope.vertices(tol) {
                if !out.iter().any(|w| Norm::LInf.dist(w, &v) <= tol) {
                    out.push(v);
                }
            }
        }
        out
    }

    pub fn is_singleton(&self, tol: f64) -> bool {
        let first = &self.cells[0].zonotope.base;
        self.cells.iter().all(|c| {
            let z = &c.zonotope;
            Norm::LInf.dist(&z.base, first) <= tol * (1.0 + Norm::LInf.of(first))
                && z.generators.iter().zip(&z.bounds).all(|(g, &(lo, hi))| (hi - lo) * Norm::LInf.of(g) <= tol)
        })
    }

    /// Nearest point of the set to `y`: `(point, acceptances, distance)`.
    /// Among equally near cells the one whose point has the larger norm wins.
    pub fn nearest(&self, y: &[f64], norm: Norm) -> (Vec<f64>, Vec<f64>, f64) {
        let mut best: Option<(Vec<f64>, Vec<f64>, f64)> = None;
        for cell in &self.cells {
            let cand = cell.nearest(y, norm);
            let better = match &best {
                None => true,
                Some((bx, _, bd)) => {
                    let eps = 1e-9 * (1.0 + bd.abs());
                    cand.2 < bd - eps || (cand.2 <= bd + eps && norm.of(&cand.0) > norm.of(bx) + eps)
                }
            };
            if better {
                best = Some(cand);
            }
        }
        best.expect("demand set has at least one cell")
    }

    pub fn distance(&self, y: &[f64], norm: Norm) -> f64 {
        self.cells.iter().map(|c| c.zonotope.distance(y, norm)).fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, y: &[f64], norm: Norm, tol: f64) -> bool {
        self.distance(y, norm) <= tol * (1.0 + norm.of(y))
    }

    pub fn hull(&self) -> Polytope {
        Polytope { cells: self.cells.iter().map(|c| c.zonotope.clone()).collect() }
    }

    /// Hausdorff distance between the hull and the set.
    ///
    /// Exact when the set spans a line. Otherwise the hull is searched along
    /// segments between vertex pairs, at vertex-triple centroids and by a
    /// local pattern search from the best candidate.
    pub fn rho(&self, norm: Norm, tol: f64) -> f64 {
        if self.cells.len() == 1 {
            return 0.0;
        }
        let vertices = self.vertices(tol * 1e-3);
        if vertices.len() <= 1 {
            return 0.0;
        }
        let origin = &vertices[0];
        let diffs: Vec<Vec<f64>> =
            vertices[1..].iter().map(|v| v.iter().zip(origin).map(|(a, b)| a - b).collect()).collect();
        let basis = orthonormal_basis(&diffs, 1e-9);
        let rho = match basis.len() {
            0 => 0.0,
            1 => self.rho_on_line(origin, &basis[0], norm),
            _ => self.rho_search(&vertices, norm),
        };
        let scale = vertices.iter().map(|v| norm.of(v)).fold(1.0, f64::max);
        if rho <= tol * scale {
            0.0
        } else {
            rho
        }
    }

    fn rho_on_line(&self, origin: &[f64], u: &[f64], norm: Norm) -> f64 {
        let coord = |v: &[f64]| v.iter().zip(origin).zip(u).map(|((a, b), c)| (a - b) * c).sum::<f64>();
        let parts = self.cells.iter().map(|cell| {
            let z = &cell.zonotope;
            let c = coord(&z.base);
            let (mut lo, mut hi) = (c, c);
            for (g, &(a, b)) in z.generators.iter().zip(&z.bounds) {
                let s: f64 = g.iter().zip(u).map(|(x, y)| x * y).sum();
                let (p, q) = (s * a, s * b);
                lo += p.min(q);
                hi += p.max(q);
            }
            (lo, hi)
        });
        IntervalUnion::new(parts).widest_gap() / 2.0 * norm.of(u)
    }

    fn rho_search(&self, vertices: &[Vec<f64>], norm: Norm) -> f64 {
        let f = |y: &[f64]| self.distance(y, norm);
        let lerp = |a: &[f64], b: &[f64], t: f64| a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect::<Vec<f64>>();
        let mut best = (0.0, vertices[0].clone());
        let n = vertices.len();
        const STEPS: usize = 32;
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (&vertices[i], &vertices[j]);
                let mut seg_best = (0.0, 0.0);
                for s in 1..STEPS {
                    let t = s as f64 / STEPS as f64;
                    let d = f(&lerp(a, b, t));
                    if d > seg_best.0 {
                        seg_best = (d, t);
                    }
                }
                if seg_best.0 <= 0.0 {
                    continue;
                }
                let h = 1.0 / STEPS as f64;
                let t = golden_max(|t| f(&lerp(a, b, t)), (seg_best.1 - h).max(0.0), (seg_best.1 + h).min(1.0));
                let y = lerp(a, b, t);
                let d = f(&y).max(seg_best.0);
                if d > best.0 {
                    best = (d, if f(&y) >= seg_best.0 { y } else { lerp(a, b, seg_best.1) });
                }
            }
        }
        if n <= 16 {
            for i in 0..n {
                for j in (i + 1)..n {
                    for k in (j + 1)..n {
                        let y: Vec<f64> = (0..vertices[i].len())
                            .map(|c| (vertices[i][c] + vertices[j][c] + vertices[k][c]) / 3.0)
                            .collect();
                        let d = f(&y);
                        if d > best.0 {
                            best = (d, y);
                        }
                    }
                }
            }
        }
        // Pattern search: move toward vertices while the distance grows.
        let mut step = 0.25;
        let (mut value, mut y) = best;
        while step > 1e-9 {
            let mut improved = false;
            for v in vertices {
                let cand = lerp(&y, v, step);
                let d = f(&cand);
                if d > value + 1e-15 {
                    value = d;
                    y = cand;
                    improved = true;
                }
            }
            if !improved {
                step *= 0.5;
            }
        }
        value
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a + b) / 2.0
}

/// Convex hull of a finite union of zonotopes.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub cells: Vec<Zonotope>,
}

impl Polytope {
    /// Support function `max_{y ∈ P} d·y`.
    pub fn support(&self, d: &[f64]) -> f64 {
        self.cells
            .iter()
            .map(|z| {
                let base: f64 = z.base.iter().zip(d).map(|(a, b)| a * b).sum();
                base + z
                    .generators
                    .iter()
                    .zip(&z.bounds)
                    .map(|(g, &(lo, hi))| {
                        let s: f64 = g.iter().zip(d).map(|(a, b)| a * b).sum();
                        (s * lo).max(s * hi)
                    })
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// ℓ1 distance from `y` to the hull: the cells are mixed with weights
    /// `μ_c` and each generator coefficient scaled into `[μ_c·lo, μ_c·hi]`.
    pub fn distance_l1(&self, y: &[f64]) -> Result<f64> {
        if self.cells.is_empty() {
            return Ok(f64::INFINITY);
        }
        let mut lp = LinearProgram::new();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); y.len()];
        let mut weights = Vec::with_capacity(self.cells.len());
        for z in &self.cells {
            let mu = lp.add_var(0.0, 0.0, 1.0);
            weights.push((mu, 1.0));
            for (h, &b) in z.base.iter().enumerate() {
                if b != 0.0 {
                    rows[h].push((mu, b));
                }
            }
            for (g, &(lo, hi)) in z.generators.iter().zip(&z.bounds) {
                let t = lp.add_var(0.0, f64::NEG_INFINITY, f64::INFINITY);
                lp.add_constraint(vec![(t, 1.0), (mu, -lo)], Relation::Ge, 0.0);
                lp.add_constraint(vec![(t, 1.0), (mu, -hi)], Relation::Le, 0.0);
                for (h, &gv) in g.iter().enumerate() {
                    if gv != 0.0 {
                        rows[h].push((t, gv));
                    }
                }
            }
        }
        lp.add_constraint(weights, Relation::Eq, 1.0);
        for (h, mut row) in rows.into_iter().enumerate() {
            let plus = lp.add_var(-1.0, 0.0, f64::INFINITY);
            let minus = lp.add_var(-1.0, 0.0, f64::INFINITY);
            row.push((plus, 1.0));
            row.push((minus, -1.0));
            lp.add_constraint(row, Relation::Eq, y[h]);
        }
        Ok(-lp.solve().map_err(crate::convex::lp_error)?.objective)
    }

    pub fn contains(&self, y: &[f64], tol: f64) -> Result<bool> {
        Ok(self.distance_l1(y)? <= tol * (1.0 + y.iter().map(|v| v.abs()).sum::<f64>()))
    }
}

/// Per-bid margin and the magnitude it is compared against.
fn block_margin(price: f64, quantity: &[f64], prices: &[f64]) -> (f64, f64) {
    let lq: f64 = quantity.iter().zip(prices).map(|(q, l)| q * l).sum();
    let mag = price.abs() + quantity.iter().zip(prices).map(|(q, l)| (q * l).abs()).sum::<f64>();
    (price - lq, mag)
}

/// Exact demand set of one agent at prices `λ`.
pub fn demand_set(agent: &Agent, prices: &[f64], settings: &Settings) -> Result<DemandSet> {
    let k = prices.len();
    for bid in &agent.bids {
        if let BidKind::Block(b) = &bid.kind {
            if b.quantity.len() != k {
                return Err(Error::DimensionMismatch { expected: k, got: b.quantity.len() });
            }
        }
    }
    let tol = settings.tol;
    let structure = AgentStructure::new(agent)?;
    let nb = agent.bids.len();

    let mut base = vec![0.0; k];
    let mut acceptances = vec![0.0; nb];
    let mut generators: Vec<(usize, Vec<f64>, (f64, f64))> = Vec::new();

    for curve in &structure.curves {
        let lambda = prices.get(curve.hour).copied().unwrap_or(0.0);
        if curve.total_abs <= 0.0 {
            continue;
        }
        let (mut lo, mut hi) = (0.0, 0.0);
        for s in &curve.segments {
            let m = s.money() - lambda * s.quantity;
            let mag = s.money().abs() + (lambda * s.quantity).abs();
            match MoneyClass::of(m, mag, tol) {
                MoneyClass::InTheMoney => {
                    lo += s.quantity.abs();
                    hi += s.quantity.abs();
                }
                MoneyClass::AtTheMoney => hi += s.quantity.abs(),
                MoneyClass::OutOfTheMoney => {}
            }
        }
        let (lo, hi) = (lo / curve.total_abs, hi / curve.total_abs);
        let full = agent.bids[curve.bid].full_bundle(k);
        if hi - lo > 0.0 {
            generators.push((curve.bid, full, (lo, hi)));
        } else {
            acceptances[curve.bid] = lo;
            for (b, f) in base.iter_mut().zip(&full) {
                *b += lo * f;
            }
        }
    }

    // Each component contributes a choice among its surplus-maximising patterns.
    struct Choice {
        shift: Vec<f64>,
        fixed: Vec<(usize, f64)>,
        gens: Vec<(usize, Vec<f64>, (f64, f64))>,
    }
    let mut component_choices: Vec<Vec<Choice>> = Vec::new();
    for comp in &structure.components {
        let info: Vec<(f64, f64, f64)> = comp
            .blocks
            .iter()
            .map(|&i| {
                let b = agent.bids[i].as_block().expect("block");
                let (m, mag) = block_margin(b.price, &b.quantity, prices);
                (m, mag, b.mar)
            })
            .collect();
        let pattern_surplus = |z: &[bool]| -> (f64, f64) {
            z.iter().zip(&info).filter(|(on, _)| **on).fold((0.0, 0.0), |(s, g), (_, &(m, mag, r))| {
                (s + m.max(r * m), g + mag)
            })
        };
        let mut patterns: Vec<Vec<bool>> = vec![vec![false; comp.blocks.len()]];
        patterns.extend(comp.patterns.iter().cloned());
        let scored: Vec<(f64, f64)> = patterns.iter().map(|z| pattern_surplus(z)).collect();
        let best = scored.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max);
        let scale = scored.iter().map(|s| s.1).fold(best.abs(), f64::max);
        let mut choices = Vec::new();
        for (z, &(s, _)) in patterns.iter().zip(&scored) {
            if s < best - tol * scale {
                continue;
            }
            let mut choice = Choice { shift: vec![0.0; k], fixed: Vec::new(), gens: Vec::new() };
            for ((&i, &on), &(m, mag, r)) in comp.blocks.iter().zip(z).zip(&info) {
                if !on {
                    continue;
                }
                let q = &agent.bids[i].as_block().expect("block").quantity;
                let a = match MoneyClass::of(m, mag, tol) {
                    MoneyClass::InTheMoney => 1.0,
                    MoneyClass::OutOfTheMoney => r,
                    MoneyClass::AtTheMoney if r < 1.0 => {
                        choice.gens.push((i, q.clone(), (r, 1.0)));
                        continue;
                    }
                    MoneyClass::AtTheMoney => 1.0,
                };
                choice.fixed.push((i, a));
                for (sh, qv) in choice.shift.iter_mut().zip(q) {
                    *sh += a * qv;
                }
            }
            choices.push(choice);
        }
        component_choices.push(choices);
    }

    let mut cells = vec![DemandCell {
        zonotope: Zonotope {
            base,
            generators: generators.iter().map(|g| g.1.clone()).collect(),
            bounds: generators.iter().map(|g| g.2).collect(),
        },
        acceptances,
        generator_bids: generators.iter().map(|g| g.0).collect(),
    }];
    for choices in &component_choices {
        let mut next = Vec::with_capacity(cells.len() * choices.len());
        for cell in &cells {
            for ch in choices {
                let mut c = cell.clone();
                for (b, s) in c.zonotope.base.iter_mut().zip(&ch.shift) {
                    *b += s;
                }
                for &(i, a) in &ch.fixed {
                    c.acceptances[i] = a;
                }
                for (i, dir, bounds) in &ch.gens {
                    c.zonotope.generators.push(dir.clone());
                    c.zonotope.bounds.push(*bounds);
                    c.generator_bids.push(*i);
                }
                next.push(c);
            }
        }
        cells = next;
    }
    let mut unique: Vec<DemandCell> = Vec::with_capacity(cells.len());
    for cell in cells {
        if !unique.iter().any(|u| u.zonotope == cell.zonotope) {
            unique.push(cell);
        }
    }
    let cells = unique;
    Ok(DemandSet { num_commodities: k, cells })
}

/// Convex hull of the demand set.
pub fn convexified_demand(agent: &Agent, prices: &[f64], settings: &Settings) -> Result<Polytope> {
    Ok(demand_set(agent, prices, settings)?.hull())
}

/// `ρ_i(λ)` under the configured norm.
pub fn rho(agent: &Agent, prices: &[f64], settings: &Settings) -> Result<f64> {
    Ok(demand_set(agent, prices, settings)?.rho(settings.norm, settings.tol))
}

/// Money class of every bid. A curve takes the class of its best slice.
pub fn classify_money(market: &Market, prices: &[f64], tol: f64) -> Vec<Vec<MoneyClass>> {
    market
        .agents
        .iter()
        .map(|agent| {
            agent
                .bids
                .iter()
                .map(|bid| match &bid.kind {
                    BidKind::Block(b) => {
                        let (m, mag) = block_margin(b.price, &b.quantity, prices);
                        MoneyClass::of(m, mag, tol)
                    }
                    BidKind::Curve(c) => {
                        let lambda = prices.get(c.hour).copied().unwrap_or(0.0);
                        match c.segments().first() {
                            Some(s) => {
                                let m = s.money() - lambda * s.quantity;
                                MoneyClass::of(m, s.money().abs() + (lambda * s.quantity).abs(), tol)
                            }
                            None => MoneyClass::AtTheMoney,
                        }
                    }
                })
                .collect()
        })
        .collect()
}

/// Number `L` of agents with nonconvex demand and the `K` largest `ρ_i`
/// (descending, zero-padded).
pub fn count_nonconvex_demand(market: &Market, prices: &[f64], settings: &Settings) -> Result<(usize, Vec<f64>)> {
    let mut rhos = market.agents.iter().map(|a| rho(a, prices, settings)).collect::<Result<Vec<f64>>>()?;
    let l = rhos.iter().filter(|&&r| r > 0.0).count();
    rhos.sort_by(|a, b| b.total_cmp(a));
    rhos.resize(rhos.len().max(market.num_commodities), 0.0);
    rhos.truncate(market.num_commodities);
    Ok((l, rhos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::*;

    fn points(d: &DemandSet) -> Vec<Vec<f64>> {
        let mut v = d.vertices(1e-12);
        v.sort_by(|a, b| a[0].total_cmp(&b[0]));
        v
    }

    #[test]
    fn four_agent_demand_sets() {
        let m = four_agent_market();
        let s = Settings::default();
        let sets: Vec<DemandSet> = m.agents.iter().map(|a| demand_set(a, &[3.0], &s).unwrap()).collect();
        assert_eq!(points(&sets[0]), vec![vec![3.0]]);
        assert_eq!(points(&sets[1]), vec![vec![0.0]]);
        assert_eq!(points(&sets[2]), vec![vec![-2.0]]);
        assert_eq!(points(&sets[3]), vec![vec![-2.0], vec![0.0]]);
        assert!(sets[3].cells.iter().all(|c| c.zonotope.generators.is_empty()));
        assert!((rho(&m.agents[3], &[3.0], &s).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(rho(&m.agents[0], &[3.0], &s).unwrap(), 0.0);
        let hull = convexified_demand(&m.agents[3], &[3.0], &s).unwrap();
        assert!(hull.contains(&[-1.0], 1e-9).unwrap());
        assert!(!hull.contains(&[0.5], 1e-9).unwrap());
        assert_eq!(hull.support(&[1.0]), 0.0);
        assert_eq!(hull.support(&[-1.0]), 2.0);
        assert!((hull.distance_l1(&[1.5]).unwrap() - 1.5).abs() < 1e-9);
    }

    #[test]
    fn at_the_money_block_closed_form() {
        let a = agent("a", vec![block("b", 8.0, vec![2.0, 2.0], 1.0)]);
        let r = rho(&a, &[2.0, 2.0], &Settings::default()).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
        let a = agent("a", vec![block("b", 8.0, vec![2.0, 2.0], 0.5)]);
        let d = demand_set(&a, &[2.0, 2.0], &Settings::default()).unwrap();
        assert_eq!(d.cells.len(), 2);
        let r = d.rho(Norm::L2, 1e-7);
        assert!((r - 0.25 * 8f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn money_classes() {
        let m = four_agent_market();
        let c = classify_money(&m, &[3.0], 1e-7);
        assert_eq!(c[0][0], MoneyClass::InTheMoney);
        assert_eq!(c[1][0], MoneyClass::OutOfTheMoney);
        assert_eq!(c[2][0], MoneyClass::InTheMoney);
        assert_eq!(c[3][0], MoneyClass::AtTheMoney);
    }

    #[test]
    fn nonconvex_counts() {
        let m = four_agent_market();
        let (l, top) = count_nonconvex_demand(&m, &[3.0], &Settings::default()).unwrap();
        assert_eq!(l, 1);
        assert_eq!(top, vec![1.0]);
        let two = Market::new(
            1,
            vec![agent("a", vec![block("x", 4.0, vec![2.0], 1.0)]), agent("b", vec![block("y", 8.0, vec![4.0], 1.0)])],
        );
        let (l, top) = count_nonconvex_demand(&two, &[2.0], &Settings::default()).unwrap();
        assert_eq!(l, 2);
        assert_eq!(top, vec![2.0]);
    }

    #[test]
    fn two_dimensional_rho_matches_grid() {
        // Two independent at-the-money blocks in different hours: four corner
        // points of a rectangle; the hull centre is farthest from them.
        let a = agent(
            "a",
            vec![block("x", 2.0, vec![2.0, 0.0], 1.0), block("y", 1.0, vec![0.0, 1.0], 1.0)],
        );
        let d = demand_set(&a, &[1.0, 1.0], &Settings::default()).unwrap();
        assert_eq!(d.cells.len(), 4);
        let r = d.rho(Norm::L2, 1e-7);
        let mut grid: f64 = 0.0;
        for i in 0..=200 {
            for j in 0..=200 {
                let y = [2.0 * i as f64 / 200.0, j as f64 / 200.0];
                grid = grid.max(d.distance(&y, Norm::L2));
            }
        }
        assert!((r - grid).abs() < 1e-6, "{r} vs {grid}");
        assert!((r - 1.25f64.sqrt()).abs() < 1e-9);
    }
}
