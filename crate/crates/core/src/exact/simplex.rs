//! Bounded-variable revised simplex with an explicit dense basis inverse.
//!
//! Rows are equalities after slack insertion; every structural variable has
//! finite bounds. Phase 1 drives artificial variables to zero, phase 2
//! optimizes the true cost. Pricing is Dantzig's rule, switching to Bland's
//! rule after a run of degenerate pivots.

use crate::ip::{IpInstance, Relation};
use std::time::Instant;

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;
const OPT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 50;
const REFACTOR_EVERY: usize = 200;
const REFACTOR_MAX_ROWS: usize = 1500;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    /// Values of the instance variables.
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Basic,
    Lower,
    Upper,
}

/// Column-oriented equality-form LP: `A x = b`, `l <= x <= u`.
struct Tableau {
    m: usize,
    cols: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    basis: Vec<usize>,
    binv: Vec<f64>,
    pivots_since_refactor: usize,
    iterations: u64,
}

enum Step {
    Optimal,
    Unbounded,
    Continue { degenerate: bool },
}

impl Tableau {
    fn price(&self, cost: &[f64], bland: bool) -> Option<(usize, f64)> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &k) in self.basis.iter().enumerate() {
            let cb = cost[k];
            if cb != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yk, &bk) in y.iter_mut().zip(row) {
                    *yk += cb * bk;
                }
            }
        }
        let scale = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs())).max(1.0);
        let tol = OPT_TOL * scale;
        let mut best: Option<(usize, f64)> = None;
        for (j, col) in self.cols.iter().enumerate() {
            let st = self.state[j];
            if st == State::Basic || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = cost[j] - col.iter().map(|&(r, a)| y[r] * a).sum::<f64>();
            let eligible = (st == State::Lower && d < -tol) || (st == State::Upper && d > tol);
            if !eligible {
                continue;
            }
            if bland {
                return Some((j, d));
            }
            if best.is_none_or(|(_, bd)| d.abs() > bd.abs()) {
                best = Some((j, d));
            }
        }
        best
    }

    fn column(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut alpha = vec![0.0; m];
        for &(k, a) in &self.cols[j] {
            for (r, al) in alpha.iter_mut().enumerate() {
                *al += self.binv[r * m + k] * a;
            }
        }
        alpha
    }

    fn step(&mut self, cost: &[f64], bland: bool) -> Step {
        let Some((j, _)) = self.price(cost, bland) else {
            return Step::Optimal;
        };
        let dir = if self.state[j] == State::Lower { 1.0 } else { -1.0 };
        let alpha = self.column(j);
        let mut theta = self.upper[j] - self.lower[j];
        let mut leave: Option<(usize, bool)> = None;
        let mut leave_mag = 0.0;
        for r in 0..self.m {
            let a = alpha[r];
            if a.abs() <= PIVOT_TOL {
                continue;
            }
            let k = self.basis[r];
            let delta = -dir * a;
            let (limit, to_upper) = if delta < 0.0 {
                ((self.x[k] - self.lower[k]).max(0.0) / -delta, false)
            } else if self.upper[k].is_finite() {
                ((self.upper[k] - self.x[k]).max(0.0) / delta, true)
            } else {
                continue;
            };
            let take = if limit < theta - 1e-12 {
                true
            } else if limit <= theta + 1e-12 {
                match leave {
                    // ties with a bound flip keep the flip
                    None => false,
                    Some((lr, _)) if bland => k < self.basis[lr],
                    Some(_) => a.abs() > leave_mag,
                }
            } else {
                false
            };
            if take {
                theta = limit;
                leave = Some((r, to_upper));
                leave_mag = a.abs();
            }
        }
        if theta.is_infinite() {
            return Step::Unbounded;
        }
        self.iterations += 1;
        self.x[j] += dir * theta;
        for r in 0..self.m {
            if alpha[r] != 0.0 {
                let k = self.basis[r];
                self.x[k] -= dir * alpha[r] * theta;
            }
        }
        match leave {
            None => {
                self.state[j] = if dir > 0.0 { State::Upper } else { State::Lower };
                self.x[j] = if dir > 0.0 { self.upper[j] } else { self.lower[j] };
            }
            Some((r, to_upper)) => {
                let k = self.basis[r];
                self.state[k] = if to_upper { State::Upper } else { State::Lower };
                self.x[k] = if to_upper { self.upper[k] } else { self.lower[k] };
                self.state[j] = State::Basic;
                self.basis[r] = j;
                self.pivot(r, &alpha);
            }
        }
        Step::Continue {
            degenerate: theta <= 1e-12,
        }
    }

    fn pivot(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let p = alpha[r];
        let (head, rest) = self.binv.split_at_mut(r * m);
        let (prow, tail) = rest.split_at_mut(m);
        for v in prow.iter_mut() {
            *v /= p;
        }
        for (q, chunk) in head.chunks_mut(m).enumerate() {
            let a = alpha[q];
            if a != 0.0 {
                for (v, &pv) in chunk.iter_mut().zip(prow.iter()) {
                    *v -= a * pv;
                }
            }
        }
        for (q, chunk) in tail.chunks_mut(m).enumerate() {
            let a = alpha[r + 1 + q];
            if a != 0.0 {
                for (v, &pv) in chunk.iter_mut().zip(prow.iter()) {
                    *v -= a * pv;
                }
            }
        }
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= REFACTOR_EVERY {
            if self.m <= REFACTOR_MAX_ROWS {
                self.refactor();
            }
            self.recompute_basics();
            self.pivots_since_refactor = 0;
        }
    }

    /// Rebuild the basis inverse by Gauss-Jordan elimination.
    fn refactor(&mut self) {
        let m = self.m;
        let mut bmat = vec![0.0; m * m];
        for (r, &k) in self.basis.iter().enumerate() {
            for &(row, a) in &self.cols[k] {
                bmat[row * m + r] = a;
            }
        }
        let mut inv = vec![0.0; m * m];
        for r in 0..m {
            inv[r * m + r] = 1.0;
        }
        for c in 0..m {
            let piv = (c..m)
                .max_by(|&a, &b| bmat[a * m + c].abs().total_cmp(&bmat[b * m + c].abs()))
                .unwrap();
            if bmat[piv * m + c].abs() < 1e-12 {
                // singular after drift: keep the updated inverse
                return;
            }
            if piv != c {
                for k in 0..m {
                    bmat.swap(piv * m + k, c * m + k);
                    inv.swap(piv * m + k, c * m + k);
                }
            }
            let p = bmat[c * m + c];
            for k in 0..m {
                bmat[c * m + k] /= p;
                inv[c * m + k] /= p;
            }
            for r in 0..m {
                if r != c {
                    let f = bmat[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            bmat[r * m + k] -= f * bmat[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        // columns of B were placed by basis position, rows of inv follow them
        self.binv = inv;
    }

    fn recompute_basics(&mut self) {
        let m = self.m;
        let mut resid = self.rhs.clone();
        for (j, col) in self.cols.iter().enumerate() {
            if self.state[j] != State::Basic && self.x[j] != 0.0 {
                for &(r, a) in col {
                    resid[r] -= a * self.x[j];
                }
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let v: f64 = row.iter().zip(&resid).map(|(a, b)| a * b).sum();
            self.x[self.basis[r]] = v;
        }
    }

    fn run(&mut self, cost: &[f64], deadline: Option<Instant>) -> Option<Step> {
        let mut degenerate_run = 0;
        loop {
            if self.iterations.is_multiple_of(16) {
                if let Some(d) = deadline {
                    if Instant::now() >= d {
                        return None;
                    }
                }
            }
            match self.step(cost, degenerate_run >= DEGENERATE_RUN) {
                Step::Continue { degenerate } => {
                    degenerate_run = if degenerate { degenerate_run + 1 } else { 0 };
                }
                done => {
                    self.recompute_basics();
                    return Some(done);
                }
            }
        }
    }
}

/// Bytes of the dense basis inverse for an instance with `rows` rows.
pub fn basis_bytes(rows: usize) -> u64 {
    (rows as u64) * (rows as u64) * 8
}

/// Solve the LP relaxation of `instance` with variable bounds replaced by
/// `lower`/`upper`.
pub fn solve_lp_bounded(instance: &IpInstance, lower: &[f64], upper: &[f64], deadline: Option<Instant>) -> LpOutcome {
    let n = instance.num_vars();
    let m = instance.num_rows();
    if lower.iter().zip(upper).any(|(l, u)| l > u) {
        return LpOutcome::Infeasible;
    }
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut rhs = vec![0.0; m];
    let mut x: Vec<f64> = lower.to_vec();
    let mut lo = lower.to_vec();
    let mut up = upper.to_vec();
    let mut state = vec![State::Lower; n];
    for (r, c) in instance.constraints.iter().enumerate() {
        let s = c.coeffs.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
        let s = if s > 0.0 { 1.0 / s } else { 1.0 };
        for &(k, a) in &c.coeffs {
            cols[k].push((r, a * s));
        }
        rhs[r] = c.rhs * s;
    }
    // residual of each row with structurals at their lower bounds
    let mut resid = rhs.clone();
    for (k, col) in cols.iter().enumerate() {
        for &(r, a) in col {
            resid[r] -= a * x[k];
        }
    }
    let mut basis = vec![usize::MAX; m];
    let mut artificial = Vec::new();
    for (r, c) in instance.constraints.iter().enumerate() {
        let slack_sign = match c.relation {
            Relation::Le => Some(1.0),
            Relation::Ge => Some(-1.0),
            Relation::Eq => None,
        };
        if let Some(sign) = slack_sign {
            let k = cols.len();
            cols.push(vec![(r, sign)]);
            lo.push(0.0);
            up.push(f64::INFINITY);
            let v = resid[r] * sign;
            if v >= 0.0 {
                x.push(v);
                state.push(State::Basic);
                basis[r] = k;
                continue;
            }
            x.push(0.0);
            state.push(State::Lower);
        }
        let k = cols.len();
        let sign = if resid[r] >= 0.0 { 1.0 } else { -1.0 };
        cols.push(vec![(r, sign)]);
        lo.push(0.0);
        up.push(f64::INFINITY);
        x.push(resid[r].abs());
        state.push(State::Basic);
        basis[r] = k;
        artificial.push(k);
    }
    let total = cols.len();
    let mut binv = vec![0.0; m * m];
    for (r, &k) in basis.iter().enumerate() {
        binv[r * m + r] = 1.0 / cols[k][0].1;
    }
    let mut tab = Tableau {
        m,
        cols,
        rhs,
        lower: lo,
        upper: up,
        x,
        state,
        basis,
        binv,
        pivots_since_refactor: 0,
        iterations: 0,
    };
    if !artificial.is_empty() {
        let mut phase1 = vec![0.0; total];
        for &k in &artificial {
            phase1[k] = 1.0;
        }
        match tab.run(&phase1, deadline) {
            None => return LpOutcome::Timeout,
            Some(Step::Unbounded) => return LpOutcome::Unbounded,
            _ => {}
        }
        let infeas: f64 = artificial.iter().map(|&k| tab.x[k]).sum();
        let scale = tab.rhs.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
        if infeas > FEAS_TOL * scale * 10.0 {
            return LpOutcome::Infeasible;
        }
        for &k in &artificial {
            tab.upper[k] = 0.0;
            if tab.state[k] != State::Basic {
                tab.x[k] = 0.0;
                tab.state[k] = State::Lower;
            }
        }
    }
    let mut cost = vec![0.0; total];
    for (k, v) in instance.variables.iter().enumerate() {
        cost[k] = v.cost;
    }
    match tab.run(&cost, deadline) {
        None => return LpOutcome::Timeout,
        Some(Step::Unbounded) => return LpOutcome::Unbounded,
        _ => {}
    }
    let xs: Vec<f64> = tab.x[..n]
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&l, &u))| v.clamp(l, u))
        .collect();
    let objective = instance.objective(&xs);
    LpOutcome::Optimal(LpSolution {
        x: xs,
        objective,
        iterations: tab.iterations,
    })
}

/// LP relaxation of `instance` over its own variable bounds.
pub fn solve_lp(instance: &IpInstance, deadline: Option<Instant>) -> LpOutcome {
    let lower: Vec<f64> = instance.variables.iter().map(|v| v.lower).collect();
    let upper: Vec<f64> = instance.variables.iter().map(|v| v.upper).collect();
    solve_lp_bounded(instance, &lower, &upper, deadline)
}
