//! Dense bounded-variable primal simplex.
//!
//! Two phases with artificial variables, Dantzig pricing and a switch to
//! Bland's rule after a run of degenerate pivots. Row duals are read off the
//! reduced costs of each row's identity column, so they follow the usual
//! sensitivity convention `y_i = ∂ objective / ∂ rhs_i` for a maximisation.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("infeasible (phase one residual {residual:.3e})")]
    Infeasible { residual: f64 },
    #[error("unbounded")]
    Unbounded,
    #[error("iteration limit {0} reached")]
    IterationLimit(usize),
    #[error("numerically singular basis (pivot {pivot:.3e}, row {row})")]
    Singular { pivot: f64, row: usize },
    #[error("malformed program: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

/// `maximize c·x  s.t.  rows, lower ≤ x ≤ upper` (bounds may be infinite).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub constraints: Vec<Constraint>,
    /// Absolute phase-one residual accepted as feasible, scaled by `1 + max|rhs|`.
    pub feasibility_tol: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
    pub iterations: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;

impl LinearProgram {
    pub fn new() -> Self {
        Self { feasibility_tol: 1e-9, ..Self::default() }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add_var(&mut self, cost: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(cost);
        self.lower.push(lower);
        self.upper.push(upper);
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, coeffs: Vec<(usize, f64)>, relation: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint { coeffs, relation, rhs });
        self.constraints.len() - 1
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Tableau::build(self)?.run(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Lower,
    Upper,
    Basic,
}

/// How an original variable maps onto internal nonnegative columns.
#[derive(Debug, Clone, Copy)]
enum Map {
    /// x = offset + col
    Shift(usize, f64),
    /// x = offset − col
    Mirror(usize, f64),
    /// x = pos − neg
    Split(usize, usize),
}

struct Tableau {
    m: usize,
    ncols: usize,
    t: Vec<f64>,
    beta: Vec<f64>,
    rhs: Vec<f64>,
    upper: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    ident: Vec<usize>,
    flip: Vec<f64>,
    first_artificial: usize,
    maps: Vec<Map>,
    cost: Vec<f64>,
    d: Vec<f64>,
    iterations: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.ncols + j]
    }

    fn build(lp: &LinearProgram) -> Result<Self, LpError> {
        let n = lp.objective.len();
        if lp.lower.len() != n || lp.upper.len() != n {
            return Err(LpError::Malformed("bound vectors do not match objective".into()));
        }
        let mut maps = Vec::with_capacity(n);
        let mut col_upper = Vec::new();
        let mut col_cost = Vec::new();
        for j in 0..n {
            let (lo, hi, c) = (lp.lower[j], lp.upper[j], lp.objective[j]);
            if lo > hi || lo.is_nan() || hi.is_nan() || !c.is_finite() {
                return Err(LpError::Malformed(format!("variable {j} has bounds [{lo}, {hi}]")));
            }
            if lo.is_finite() {
                maps.push(Map::Shift(col_upper.len(), lo));
                col_upper.push(hi - lo);
                col_cost.push(c);
            } else if hi.is_finite() {
                maps.push(Map::Mirror(col_upper.len(), hi));
                col_upper.push(f64::INFINITY);
                col_cost.push(-c);
            } else {
                maps.push(Map::Split(col_upper.len(), col_upper.len() + 1));
                col_upper.extend([f64::INFINITY, f64::INFINITY]);
                col_cost.extend([c, -c]);
            }
        }
        let n_struct = col_upper.len();
        let m = lp.constraints.len();

        // Dense structural rows with shifted right-hand sides.
        let mut rows = vec![vec![0.0; n_struct]; m];
        let mut rhs = vec![0.0; m];
        for (i, con) in lp.constraints.iter().enumerate() {
            let mut b = con.rhs;
            for &(j, a) in &con.coeffs {
                if j >= n {
                    return Err(LpError::Malformed(format!("constraint {i} references variable {j}")));
                }
                match maps[j] {
                    Map::Shift(c, off) => {
                        rows[i][c] += a;
                        b -= a * off;
                    }
                    Map::Mirror(c, off) => {
                        rows[i][c] -= a;
                        b -= a * off;
                    }
                    Map::Split(p, q) => {
                        rows[i][p] += a;
                        rows[i][q] -= a;
                    }
                }
            }
            rhs[i] = b;
        }

        let n_slack = lp.constraints.iter().filter(|c| c.relation != Relation::Eq).count();
        let mut flip = vec![1.0; m];
        let mut slack_coef = vec![0.0; m];
        let mut needs_art = vec![false; m];
        for i in 0..m {
            slack_coef[i] = match lp.constraints[i].relation {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => 0.0,
            };
            if rhs[i] < 0.0 {
                flip[i] = -1.0;
                rhs[i] = -rhs[i];
                rows[i].iter_mut().for_each(|v| *v = -*v);
                slack_coef[i] = -slack_coef[i];
            }
            needs_art[i] = slack_coef[i] <= 0.0;
        }
        let n_art = needs_art.iter().filter(|&&a| a).count();
        let first_artificial = n_struct + n_slack;
        let ncols = first_artificial + n_art;

        let mut t = vec![0.0; m * ncols];
        let mut upper = col_upper;
        upper.extend(std::iter::repeat_n(f64::INFINITY, n_slack + n_art));
        let mut cost = col_cost;
        cost.extend(std::iter::repeat_n(0.0, n_slack + n_art));
        let mut basis = vec![0; m];
        let mut ident = vec![0; m];
        let mut state = vec![State::Lower; ncols];
        let (mut s, mut a) = (n_struct, first_artificial);
        for i in 0..m {
            t[i * ncols..i * ncols + n_struct].copy_from_slice(&rows[i]);
            if lp.constraints[i].relation != Relation::Eq {
                t[i * ncols + s] = slack_coef[i];
                if slack_coef[i] > 0.0 {
                    ident[i] = s;
                }
                s += 1;
            }
            if needs_art[i] {
                t[i * ncols + a] = 1.0;
                ident[i] = a;
                a += 1;
            }
            basis[i] = ident[i];
            state[ident[i]] = State::Basic;
        }

        Ok(Self {
            m,
            ncols,
            t,
            beta: rhs.clone(),
            rhs,
            upper,
            state,
            basis,
            ident,
            flip,
            first_artificial,
            maps,
            cost,
            d: vec![0.0; ncols],
            iterations: 0,
        })
    }

    fn price(&mut self, cost: &[f64]) {
        for j in 0..self.ncols {
            let mut z = 0.0;
            for i in 0..self.m {
                z += cost[self.basis[i]] * self.at(i, j);
            }
            self.d[j] = cost[j] - z;
        }
    }

    fn value(&self, j: usize) -> f64 {
        match self.state[j] {
            State::Lower => 0.0,
            State::Upper => self.upper[j],
            State::Basic => self.beta[self.basis.iter().position(|&b| b == j).unwrap()],
        }
    }

    fn iterate(&mut self, cost: &[f64], allow_artificial: bool, limit: usize) -> Result<(), LpError> {
        self.price(cost);
        let mut degenerate = 0usize;
        loop {
            if self.iterations >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            let bland = degenerate >= DEGENERATE_RUN;
            let mut entering = None;
            let mut best = 0.0;
            for j in 0..self.ncols {
                if !allow_artificial && j >= self.first_artificial {
                    continue;
                }
                let gain = match self.state[j] {
                    State::Lower if self.upper[j] > 0.0 => self.d[j],
                    State::Upper => -self.d[j],
                    _ => continue,
                };
                if gain > COST_TOL {
                    if bland {
                        entering = Some(j);
                        break;
                    }
                    if gain > best {
                        best = gain;
                        entering = Some(j);
                    }
                }
            }
            let Some(e) = entering else { return Ok(()) };
            let dir = if self.state[e] == State::Lower { 1.0 } else { -1.0 };

            let mut step = self.upper[e];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..self.m {
                let alpha = self.at(i, e) * dir;
                let b = self.basis[i];
                let (limit_i, to_upper) = if alpha > PIVOT_TOL {
                    (self.beta[i].max(0.0) / alpha, false)
                } else if alpha < -PIVOT_TOL && self.upper[b].is_finite() {
                    ((self.upper[b] - self.beta[i]).max(0.0) / -alpha, true)
                } else {
                    continue;
                };
                let better = match leave {
                    None => limit_i < step || (step.is_infinite() && limit_i.is_finite()),
                    Some((r, _)) => {
                        if limit_i < step - 1e-12 {
                            true
                        } else if limit_i <= step + 1e-12 {
                            if bland {
                                b < self.basis[r]
                            } else {
                                alpha.abs() > (self.at(r, e)).abs()
                            }
                        } else {
                            false
                        }
                    }
                };
                if better {
                    step = limit_i.min(step);
                    leave = Some((i, to_upper));
                }
            }
            if step.is_infinite() {
                return Err(LpError::Unbounded);
            }
            self.iterations += 1;
            if step <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for i in 0..self.m {
                let a = self.at(i, e);
                self.beta[i] -= a * dir * step;
            }
            match leave {
                None => {
                    self.state[e] = if dir > 0.0 { State::Upper } else { State::Lower };
                }
                Some((r, to_upper)) => {
                    let entering_value = if dir > 0.0 { step } else { self.upper[e] - step };
                    let l = self.basis[r];
                    self.state[l] = if to_upper { State::Upper } else { State::Lower };
                    self.pivot(r, e)?;
                    self.beta[r] = entering_value;
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, e: usize) -> Result<(), LpError> {
        let nc = self.ncols;
        let p = self.at(r, e);
        if p.abs() < PIVOT_TOL {
            return Err(LpError::Singular { pivot: p, row: r });
        }
        for j in 0..nc {
            self.t[r * nc + j] /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * nc);
        let (prow, after) = rest.split_at_mut(nc);
        for row in before.chunks_mut(nc).chain(after.chunks_mut(nc)) {
            let f = row[e];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[e] = 0.0;
            }
        }
        let f = self.d[e];
        if f != 0.0 {
            for (dj, pv) in self.d.iter_mut().zip(prow.iter()) {
                *dj -= f * pv;
            }
            self.d[e] = 0.0;
        }
        self.state[e] = State::Basic;
        self.basis[r] = e;
        Ok(())
    }

    /// Recompute basic values from `B⁻¹` (the identity columns) to shed drift.
    fn refresh(&mut self) {
        for i in 0..self.m {
            let mut v = 0.0;
            for (k, &col) in self.ident.iter().enumerate() {
                v += self.at(i, col) * self.rhs[k];
            }
            for j in 0..self.ncols {
                if self.state[j] == State::Upper {
                    v -= self.at(i, j) * self.upper[j];
                }
            }
            self.beta[i] = v;
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let limit = 50_000 + 50 * (self.m + self.ncols);
        let scale = 1.0 + self.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let tol = if lp.feasibility_tol > 0.0 { lp.feasibility_tol } else { 1e-9 };

        if self.first_artificial < self.ncols {
            let phase1: Vec<f64> = (0..self.ncols)
                .map(|j| if j >= self.first_artificial { -1.0 } else { 0.0 })
                .collect();
            self.iterate(&phase1, true, limit)?;
            self.refresh();
            let residual: f64 = (self.first_artificial..self.ncols).map(|j| self.value(j).max(0.0)).sum();
            if residual > tol * scale {
                return Err(LpError::Infeasible { residual });
            }
            // Drive remaining artificials out of the basis where possible.
            for r in 0..self.m {
                if self.basis[r] < self.first_artificial {
                    continue;
                }
                let candidate = (0..self.first_artificial)
                    .filter(|&j| self.state[j] != State::Basic)
                    .max_by(|&a, &b| self.at(r, a).abs().total_cmp(&self.at(r, b).abs()))
                    .filter(|&j| self.at(r, j).abs() > 1e-7);
                if let Some(j) = candidate {
                    let v = if self.state[j] == State::Upper { self.upper[j] } else { 0.0 };
                    let l = self.basis[r];
                    self.state[l] = State::Lower;
                    self.pivot(r, j)?;
                    self.beta[r] = v;
                } else {
                    self.beta[r] = 0.0;
                }
            }
            for j in self.first_artificial..self.ncols {
                self.upper[j] = 0.0;
            }
            self.refresh();
        }

        let cost = self.cost.clone();
        self.iterate(&cost, false, limit)?;
        self.refresh();
        self.price(&cost);

        let col_value: Vec<f64> = (0..self.first_artificial).map(|j| self.value(j)).collect();
        let x: Vec<f64> = self
            .maps
            .iter()
            .map(|m| match *m {
                Map::Shift(c, off) => off + col_value[c],
                Map::Mirror(c, off) => off - col_value[c],
                Map::Split(p, q) => col_value[p] - col_value[q],
            })
            .collect();
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        let duals = (0..self.m).map(|i| -self.d[self.ident[i]] * self.flip[i]).collect();
        Ok(LpSolution { x, objective, duals, iterations: self.iterations })
    }
}
