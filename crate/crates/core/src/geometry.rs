//! Norms, box-parametrised zonotopes and unions of intervals.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lp::{LinearProgram, Relation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    #[default]
    L2,
    L1,
    LInf,
}

impl Norm {
    pub fn of(self, v: &[f64]) -> f64 {
        match self {
            Norm::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::L1 => v.iter().map(|x| x.abs()).sum(),
            Norm::LInf => v.iter().fold(0.0, |m, x| m.max(x.abs())),
        }
    }

    pub fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.of(&d)
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Norm::L2 => "l2",
            Norm::L1 => "l1",
            Norm::LInf => "linf",
        })
    }
}

impl FromStr for Norm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "l2" | "2" | "euclidean" => Ok(Norm::L2),
            "l1" | "1" => Ok(Norm::L1),
            "linf" | "inf" | "max" => Ok(Norm::LInf),
            other => Err(format!("unknown norm `{other}` (expected l2, l1 or linf)")),
        }
    }
}

/// `{ base + Σ_j t_j g_j : lo_j ≤ t_j ≤ hi_j }`.
#[derive(Debug, Clone, PartialEq)]
pub struct Zonotope {
    pub base: Vec<f64>,
    pub generators: Vec<Vec<f64>>,
    pub bounds: Vec<(f64, f64)>,
}

/// Above this many generators the ℓ2 projection switches from exhaustive
/// active-set enumeration to coordinate descent.
const ENUMERATION_LIMIT: usize = 9;

impl Zonotope {
    pub fn point(base: Vec<f64>) -> Self {
        Self { base, generators: Vec::new(), bounds: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn at(&self, t: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (g, &tj) in self.generators.iter().zip(t) {
            for (xi, gi) in x.iter_mut().zip(g) {
                *xi += tj * gi;
            }
        }
        x
    }

    /// All corner points (duplicates removed up to `tol`).
    pub fn vertices(&self, tol: f64) -> Vec<Vec<f64>> {
        let g = self.generators.len();
        let mut out: Vec<Vec<f64>> = Vec::new();
        for mask in 0u64..(1u64 << g) {
            let t: Vec<f64> =
                (0..g).map(|j| if mask & (1 << j) != 0 { self.bounds[j].1 } else { self.bounds[j].0 }).collect();
            let v = self.at(&t);
            if !out.iter().any(|w| Norm::LInf.dist(w, &v) <= tol) {
                out.push(v);
            }
        }
        out
    }

    /// Nearest point of the zonotope to `y` under `norm`, with its distance.
    pub fn nearest(&self, y: &[f64], norm: Norm) -> (Vec<f64>, f64) {
        if self.generators.is_empty() {
            return (self.base.clone(), norm.dist(&self.base, y));
        }
        let t = match norm {
            Norm::L2 => self.project_l2(y),
            _ => self.project_lp(y, norm),
        };
        let x = self.at(&t);
        let d = norm.dist(&x, y);
        (x, d)
    }

    pub fn distance(&self, y: &[f64], norm: Norm) -> f64 {
        self.nearest(y, norm).1
    }

    fn residual_target(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.base).map(|(a, b)| a - b).collect()
    }

    fn project_l2(&self, y: &[f64]) -> Vec<f64> {
        let r = self.residual_target(y);
        let g = self.generators.len();
        if g > ENUMERATION_LIMIT {
            return self.coordinate_descent(&r);
        }
        let mut best: Option<(f64, Vec<f64>)> = None;
        let mut state = vec![0u8; g];
        loop {
            if let Some(t) = self.solve_state(&state, &r) {
                let x = self.at(&t);
                let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                if best.as_ref().is_none_or(|(bd, _)| d < *bd - 1e-15) {
                    best = Some((d, t));
                }
            }
            let mut j = 0;
            while j < g {
                state[j] += 1;
                if state[j] < 3 {
                    break;
                }
                state[j] = 0;
                j += 1;
            }
            if j == g {
                break;
            }
        }
        best.map(|(_, t)| t).unwrap_or_else(|| self.bounds.iter().map(|b| b.0).collect())
    }

    /// Least squares over the free coordinates with the others pinned to a
    /// bound (state 0 = lower, 1 = upper, 2 = free). Returns `None` when the
    /// free solution leaves its box.
    fn solve_state(&self, state: &[u8], r: &[f64]) -> Option<Vec<f64>> {
        let mut t: Vec<f64> = state
            .iter()
            .zip(&self.bounds)
            .map(|(&s, &(lo, hi))| if s == 1 { hi } else { lo })
            .collect();
        let free: Vec<usize> = (0..state.len()).filter(|&j| state[j] == 2).collect();
        if free.is_empty() {
            return Some(t);
        }
        for &j in &free {
            t[j] = 0.0;
        }
        let fixed = {
            let mut v = vec![0.0; r.len()];
            for (j, g) in self.generators.iter().enumerate() {
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi += t[j] * gi;
                }
            }
            v
        };
        let rhs: Vec<f64> = r.iter().zip(&fixed).map(|(a, b)| a - b).collect();
        let n = free.len();
        let mut a = vec![vec![0.0; n + 1]; n];
        for (p, &i) in free.iter().enumerate() {
            for (q, &j) in free.iter().enumerate() {
                a[p][q] = dot(&self.generators[i], &self.generators[j]);
            }
            a[p][n] = dot(&self.generators[i], &rhs);
        }
        let sol = solve_symmetric(a)?;
        for (p, &j) in free.iter().enumerate() {
            let (lo, hi) = self.bounds[j];
            if sol[p] < lo - 1e-12 || sol[p] > hi + 1e-12 {
                return None;
            }
            t[j] = sol[p].clamp(lo, hi);
        }
        Some(t)
    }

    fn coordinate_descent(&self, r: &[f64]) -> Vec<f64> {
        let mut t: Vec<f64> = self.bounds.iter().map(|&(lo, hi)| 0.0f64.clamp(lo, hi)).collect();
        let mut resid: Vec<f64> = r.to_vec();
        for (j, g) in self.generators.iter().enumerate() {
            for (ri, gi) in resid.iter_mut().zip(g) {
                *ri -= t[j] * gi;
            }
        }
        for _ in 0..20_000 {
            let mut moved = 0.0f64;
            for (j, g) in self.generators.iter().enumerate() {
                let gg = dot(g, g);
                if gg <= 1e-300 {
                    continue;
                }
                let (lo, hi) = self.bounds[j];
                let new = (t[j] + dot(g, &resid) / gg).clamp(lo, hi);
                let step = new - t[j];
                if step != 0.0 {
                    for (ri, gi) in resid.iter_mut().zip(g) {
                        *ri -= step * gi;
                    }
                    t[j] = new;
                    moved = moved.max(step.abs() * gg.sqrt());
                }
            }
            if moved < 1e-13 {
                break;
            }
        }
        t
    }

    /// ℓ1 / ℓ∞ projection as a linear program.
    fn project_lp(&self, y: &[f64], norm: Norm) -> Vec<f64> {
        let r = self.residual_target(y);
        let n = r.len();
        let mut lp = LinearProgram::new();
        let ts: Vec<usize> = self.bounds.iter().map(|&(lo, hi)| lp.add_var(0.0, lo, hi)).collect();
        let inf = f64::INFINITY;
        let (es, s) = match norm {
            Norm::L1 => ((0..n).map(|_| lp.add_var(-1.0, 0.0, inf)).collect::<Vec<_>>(), None),
            _ => (Vec::new(), Some(lp.add_var(-1.0, 0.0, inf))),
        };
        for i in 0..n {
            let e = s.unwrap_or_else(|| es[i]);
            let mut row: Vec<(usize, f64)> = ts.iter().map(|&v| (v, self.generators[v][i])).collect();
            row.push((e, -1.0));
            lp.add_constraint(row.clone(), Relation::Le, r[i]);
            let mut row: Vec<(usize, f64)> = ts.iter().map(|&v| (v, self.generators[v][i])).collect();
            row.push((e, 1.0));
            lp.add_constraint(row, Relation::Ge, r[i]);
        }
        match lp.solve() {
            Ok(sol) => ts.iter().map(|&v| sol.x[v]).collect(),
            Err(_) => self.project_l2(y),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gaussian elimination with partial pivoting on an augmented `n × (n+1)`
/// matrix. `None` if singular.
fn solve_symmetric(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    let scale = a.iter().flat_map(|r| r[..n].iter()).fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() <= 1e-12 * scale {
            return None;
        }
        a.swap(c, p);
        let pivot = a[c].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i != c {
                let f = row[c] / pivot[c];
                if f != 0.0 {
                    for (x, y) in row[c..].iter_mut().zip(&pivot[c..]) {
                        *x -= f * y;
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

/// Orthonormal basis of the span of `vectors` (Gram–Schmidt with re-orthogonalisation).
pub fn orthonormal_basis(vectors: &[Vec<f64>], tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut w = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&w, b);
                for (wi, bi) in w.iter_mut().zip(b) {
                    *wi -= c * bi;
                }
            }
        }
        let n = Norm::L2.of(&w);
        let scale = Norm::L2.of(v).max(1.0);
        if n > tol * scale {
            basis.push(w.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

/// A finite union of closed intervals, kept sorted and merged.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalUnion {
    parts: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn new(parts: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut parts: Vec<(f64, f64)> =
            parts.into_iter().map(|(a, b)| if a <= b { (a, b) } else { (b, a) }).collect();
        parts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(parts.len());
        for (a, b) in parts {
            match merged.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        Self { parts: merged }
    }

    pub fn point(x: f64) -> Self {
        Self::new([(x, x)])
    }

    pub fn parts(&self) -> &[(f64, f64)] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        self.parts.iter().any(|&(a, b)| x >= a - tol && x <= b + tol)
    }

    pub fn minkowski_sum(&self, other: &Self) -> Self {
        Self::new(self.parts.iter().flat_map(|&(a, b)| other.parts.iter().map(move |&(c, d)| (a + c, b + d))))
    }

    /// Hull minus the union: the widest hole, or 0 if convex.
    pub fn widest_gap(&self) -> f64 {
        self.parts.windows(2).map(|w| w[1].0 - w[0].1).fold(0.0, f64::max)
    }

    /// Distance from `x` to the union.
    pub fn distance(&self, x: f64) -> f64 {
        self.parts
            .iter()
            .map(|&(a, b)| if x < a { a - x } else if x > b { x - b } else { 0.0 })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn hull(&self) -> Option<(f64, f64)> {
        Some((self.parts.first()?.0, self.parts.last()?.1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> Zonotope {
        Zonotope {
            base: vec![0.0, 0.0],
            generators: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            bounds: vec![(0.0, 1.0), (0.0, 1.0)],
        }
    }

    #[test]
    fn projection_onto_unit_square() {
        let z = square();
        let (x, d) = z.nearest(&[2.0, 0.5], Norm::L2);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 0.5).abs() < 1e-12);
        assert!((d - 1.0).abs() < 1e-12);
        assert!((z.distance(&[2.0, 2.0], Norm::L2) - 2f64.sqrt()).abs() < 1e-12);
        assert!((z.distance(&[2.0, 2.0], Norm::L1) - 2.0).abs() < 1e-9);
        assert!((z.distance(&[2.0, 3.0], Norm::LInf) - 2.0).abs() < 1e-9);
        assert_eq!(z.distance(&[0.3, 0.3], Norm::L2), 0.0);
        assert_eq!(z.vertices(1e-12).len(), 4);
    }

    #[test]
    fn coordinate_descent_matches_enumeration() {
        let gens: Vec<Vec<f64>> = (0..11).map(|j| vec![(j as f64).cos(), (j as f64 * 0.7).sin()]).collect();
        let z = Zonotope { base: vec![0.5, -0.5], generators: gens.clone(), bounds: vec![(0.0, 0.3); 11] };
        let small = Zonotope { base: z.base.clone(), generators: gens[..3].to_vec(), bounds: vec![(0.0, 0.3); 3] };
        let y = [10.0, 7.0];
        let d_big = z.distance(&y, Norm::L2);
        let padded = Zonotope {
            generators: [gens[..3].to_vec(), vec![vec![0.0, 0.0]; 8]].concat(),
            bounds: vec![(0.0, 0.3); 11],
            ..small.clone()
        };
        assert!((padded.distance(&y, Norm::L2) - small.distance(&y, Norm::L2)).abs() < 1e-9);
        assert!(d_big <= small.distance(&y, Norm::L2) + 1e-9);
    }

    #[test]
    fn interval_unions() {
        let a = IntervalUnion::new([(0.0, 0.0), (2.0, 2.0)]);
        let b = IntervalUnion::new([(0.0, 1.0)]);
        let s = a.minkowski_sum(&b);
        assert_eq!(s.parts(), &[(0.0, 1.0), (2.0, 3.0)]);
        assert_eq!(s.widest_gap(), 1.0);
        assert!(s.contains(2.5, 0.0) && !s.contains(1.5, 1e-9));
        assert_eq!(s.distance(1.5), 0.5);
        assert_eq!(IntervalUnion::new([(0.0, 2.0), (1.0, 3.0)]).parts(), &[(0.0, 3.0)]);
    }

    #[test]
    fn norms_parse() {
        assert_eq!("L1".parse::<Norm>().unwrap(), Norm::L1);
        assert_eq!("linf".parse::<Norm>().unwrap(), Norm::LInf);
        assert!("l3".parse::<Norm>().is_err());
        assert_eq!(Norm::LInf.of(&[1.0, -3.0]), 3.0);
    }
}
