//! Bounded-variable revised simplex with a two-phase start.
//!
//! Every row `r` gets a logical variable `s_r` so the constraints read
//! `A x − s = 0`, with the row relation carried by the bounds of `s_r`.
//! Rows whose initial activity violates those bounds receive an artificial
//! column; phase one drives the artificials to zero. The basis inverse is
//! kept in product form (eta file) on top of a diagonal of logical columns
//! and is rebuilt periodically.
//!
//! Pricing is partial Dantzig; after a degenerate pivot the solver switches
//! to Bland's smallest-index rule for both entering and leaving choices and
//! stays there until the objective strictly improves.

use super::{LinearProgram, LpError, LpSolution, LpStatus, Relation, OPTIMALITY_TOL};

const PRIMAL_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_STEP: f64 = 1e-12;
/// Phase-one artificial level above which the problem is declared infeasible.
const INFEASIBLE_TOL: f64 = 1e-6;
const REFACTOR_EVERY: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq)]
enum State {
    Basic(usize),
    AtLower,
    AtUpper,
    /// free nonbasic variable resting at zero
    Zero,
}

#[derive(Debug, Clone)]
struct Eta {
    pos: usize,
    pivot: f64,
    others: Vec<(usize, f64)>,
}

struct Simplex {
    m: usize,
    n: usize,
    // structural columns, compressed by column
    col_start: Vec<usize>,
    col_row: Vec<usize>,
    col_val: Vec<f64>,
    // artificial k ↦ (row, sign); variable index n + m + k
    art: Vec<(usize, f64)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    state: Vec<State>,
    head: Vec<usize>,
    diag: Vec<f64>,
    etas: Vec<Eta>,
    since_refactor: usize,
    bland: bool,
    iterations: usize,
    max_iterations: usize,
    price_cursor: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded(usize),
}

fn pow2_scale(max_abs: f64) -> f64 {
    if max_abs > 0.0 && max_abs.is_finite() {
        (-max_abs.log2().round()).exp2()
    } else {
        1.0
    }
}

pub(super) fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.num_vars();
    let m = lp.num_rows();

    // equilibration: rows first, then columns, both by powers of two
    let row_scale: Vec<f64> = lp
        .rows
        .iter()
        .map(|r| pow2_scale(r.coeffs.iter().fold(0.0, |a, &(_, v)| f64::max(a, v.abs()))))
        .collect();
    let mut col_max = vec![0.0f64; n];
    for (r, row) in lp.rows.iter().enumerate() {
        for &(v, a) in &row.coeffs {
            col_max[v.0] = col_max[v.0].max((a * row_scale[r]).abs());
        }
    }
    let col_scale: Vec<f64> = col_max.iter().map(|&c| pow2_scale(c)).collect();
    let cost_scale = pow2_scale(
        lp.vars
            .iter()
            .zip(&col_scale)
            .fold(0.0, |a, (v, s)| f64::max(a, (v.cost * s).abs())),
    );

    // column-compressed scaled matrix; duplicate entries are summed
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (r, row) in lp.rows.iter().enumerate() {
        for &(v, a) in &row.coeffs {
            cols[v.0].push((r, a * row_scale[r] * col_scale[v.0]));
        }
    }
    let mut col_start = Vec::with_capacity(n + 1);
    let mut col_row = Vec::new();
    let mut col_val = Vec::new();
    col_start.push(0);
    for col in &mut cols {
        col.sort_by_key(|&(r, _)| r);
        let mut k = 0;
        while k < col.len() {
            let r = col[k].0;
            let mut v = 0.0;
            while k < col.len() && col[k].0 == r {
                v += col[k].1;
                k += 1;
            }
            if v != 0.0 {
                col_row.push(r);
                col_val.push(v);
            }
        }
        col_start.push(col_row.len());
    }

    let mut lower = Vec::with_capacity(n + 2 * m);
    let mut upper = Vec::with_capacity(n + 2 * m);
    for (v, s) in lp.vars.iter().zip(&col_scale) {
        lower.push(v.lower / s);
        upper.push(v.upper / s);
    }
    for (row, rs) in lp.rows.iter().zip(&row_scale) {
        let b = row.rhs * rs;
        let (lo, up) = match row.relation {
            Relation::Le => (f64::NEG_INFINITY, b),
            Relation::Ge => (b, f64::INFINITY),
            Relation::Eq => (b, b),
        };
        lower.push(lo);
        upper.push(up);
    }

    // initial nonbasic point for structurals
    let mut x = vec![0.0; n + m];
    let mut state = vec![State::Zero; n + m];
    for j in 0..n {
        if lower[j].is_finite() {
            x[j] = lower[j];
            state[j] = State::AtLower;
        } else if upper[j].is_finite() {
            x[j] = upper[j];
            state[j] = State::AtUpper;
        }
    }
    let mut activity = vec![0.0; m];
    for j in 0..n {
        if x[j] != 0.0 {
            for k in col_start[j]..col_start[j + 1] {
                activity[col_row[k]] += col_val[k] * x[j];
            }
        }
    }

    // logical basic where the row is satisfied, artificial otherwise
    let mut head = vec![0; m];
    let mut diag = vec![0.0; m];
    let mut art = Vec::new();
    for r in 0..m {
        let s = n + r;
        let act = activity[r];
        if act >= lower[s] - PRIMAL_TOL && act <= upper[s] + PRIMAL_TOL {
            x[s] = act;
            state[s] = State::Basic(r);
            head[r] = s;
            diag[r] = -1.0;
        } else {
            let (bound, st) = if act < lower[s] {
                (lower[s], State::AtLower)
            } else {
                (upper[s], State::AtUpper)
            };
            x[s] = bound;
            state[s] = st;
            // A x − s + d·y = 0  ⇒  d·y = bound − act
            let sign = if bound - act >= 0.0 { 1.0 } else { -1.0 };
            let idx = n + m + art.len();
            art.push((r, sign));
            x.push((bound - act).abs());
            state.push(State::Basic(r));
            lower.push(0.0);
            upper.push(f64::INFINITY);
            head[r] = idx;
            diag[r] = sign;
        }
    }

    let total = n + m + art.len();
    let mut spx = Simplex {
        m,
        n,
        col_start,
        col_row,
        col_val,
        art,
        lower,
        upper,
        cost: vec![0.0; total],
        x,
        state,
        head,
        diag,
        etas: Vec::new(),
        since_refactor: 0,
        bland: false,
        iterations: 0,
        max_iterations: 50_000 + 100 * (total + m),
        price_cursor: 0,
    };

    // phase one
    let mut infeasibility = 0.0;
    if !spx.art.is_empty() {
        for k in 0..spx.art.len() {
            spx.cost[n + m + k] = 1.0;
        }
        match spx.run()? {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded(_) => unreachable!("phase one objective is bounded below"),
        }
        let worst = (0..spx.art.len())
            .map(|k| spx.x[n + m + k].abs())
            .fold(0.0, f64::max);
        infeasibility = spx
            .art
            .iter()
            .enumerate()
            .map(|(k, &(r, _))| spx.x[n + m + k].abs() / row_scale[r])
            .sum();
        if worst > INFEASIBLE_TOL {
            return Ok(spx.finish(lp, &row_scale, &col_scale, cost_scale, LpStatus::Infeasible, infeasibility, None));
        }
        for k in 0..spx.art.len() {
            let j = n + m + k;
            spx.cost[j] = 0.0;
            spx.upper[j] = 0.0;
            if !matches!(spx.state[j], State::Basic(_)) {
                spx.x[j] = 0.0;
                spx.state[j] = State::AtLower;
            }
        }
    }

    // phase two
    for j in 0..n {
        spx.cost[j] = lp.vars[j].cost * col_scale[j] * cost_scale;
    }
    spx.bland = false;
    let status = match spx.run()? {
        PhaseEnd::Optimal => (LpStatus::Optimal, None),
        PhaseEnd::Unbounded(j) => (LpStatus::Unbounded, Some(j)),
    };
    Ok(spx.finish(lp, &row_scale, &col_scale, cost_scale, status.0, infeasibility, status.1))
}

impl Simplex {
    fn total(&self) -> usize {
        self.n + self.m + self.art.len()
    }

    fn for_each_in_col(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                f(self.col_row[k], self.col_val[k]);
            }
        } else if j < self.n + self.m {
            f(j - self.n, -1.0);
        } else {
            let (r, s) = self.art[j - self.n - self.m];
            f(r, s);
        }
    }

    fn col_dot(&self, j: usize, y: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_each_in_col(j, |r, v| s += v * y[r]);
        s
    }

    /// Diagonal entry when `j` is a logical or artificial column.
    fn unit_entry(&self, j: usize) -> Option<(usize, f64)> {
        if j < self.n {
            None
        } else if j < self.n + self.m {
            Some((j - self.n, -1.0))
        } else {
            Some(self.art[j - self.n - self.m])
        }
    }

    fn ftran(&self, v: &mut [f64]) {
        for (vi, d) in v.iter_mut().zip(&self.diag) {
            *vi /= d;
        }
        for eta in &self.etas {
            let vp = v[eta.pos];
            if vp != 0.0 {
                let vp = vp / eta.pivot;
                v[eta.pos] = vp;
                for &(i, w) in &eta.others {
                    v[i] -= w * vp;
                }
            }
        }
    }

    fn btran(&self, u: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut s = u[eta.pos];
            for &(i, w) in &eta.others {
                s -= u[i] * w;
            }
            u[eta.pos] = s / eta.pivot;
        }
        for (ui, d) in u.iter_mut().zip(&self.diag) {
            *ui /= d;
        }
    }

    fn column_dense(&self, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.m];
        self.for_each_in_col(j, |r, a| v[r] += a);
        v
    }

    fn push_eta(&mut self, pos: usize, w: &[f64]) {
        let others = w
            .iter()
            .enumerate()
            .filter(|&(i, &v)| i != pos && v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        self.etas.push(Eta {
            pos,
            pivot: w[pos],
            others,
        });
    }

    fn rest_nonbasic(&mut self, j: usize) {
        if self.lower[j].is_finite() {
            self.x[j] = self.lower[j];
            self.state[j] = State::AtLower;
        } else if self.upper[j].is_finite() {
            self.x[j] = self.upper[j];
            self.state[j] = State::AtUpper;
        } else {
            self.x[j] = 0.0;
            self.state[j] = State::Zero;
        }
    }

    /// Rebuilds the eta file from the current basis heading and recomputes
    /// basic values from the nonbasic ones.
    fn refactor(&mut self) {
        loop {
            self.etas.clear();
            let mut taken = vec![false; self.m];
            let mut new_head = vec![usize::MAX; self.m];
            self.diag = vec![1.0; self.m];
            let mut structural = Vec::new();
            for &j in &self.head {
                match self.unit_entry(j) {
                    Some((r, d)) => {
                        new_head[r] = j;
                        self.diag[r] = d;
                        taken[r] = true;
                    }
                    None => structural.push(j),
                }
            }
            structural.sort_by_key(|&j| (self.col_start[j + 1] - self.col_start[j], j));
            let mut dropped = Vec::new();
            for j in structural {
                let mut w = self.column_dense(j);
                self.ftran(&mut w);
                let mut best = None;
                let mut best_abs = 0.0;
                for (p, &wp) in w.iter().enumerate() {
                    if !taken[p] && wp.abs() > best_abs {
                        best_abs = wp.abs();
                        best = Some(p);
                    }
                }
                match best {
                    Some(p) if best_abs > PIVOT_TOL => {
                        self.push_eta(p, &w);
                        new_head[p] = j;
                        taken[p] = true;
                    }
                    _ => dropped.push(j),
                }
            }
            if dropped.is_empty() {
                self.head = new_head;
                break;
            }
            // singular basis: swap the dependent columns for row logicals
            for j in dropped {
                self.rest_nonbasic(j);
            }
            for p in 0..self.m {
                if !taken[p] {
                    new_head[p] = self.n + p;
                }
            }
            for (p, &j) in new_head.iter().enumerate() {
                if j != usize::MAX {
                    self.state[j] = State::Basic(p);
                }
            }
            self.head = new_head;
        }
        for (p, &j) in self.head.iter().enumerate() {
            self.state[j] = State::Basic(p);
        }
        self.since_refactor = 0;

        // B x_B = −N x_N
        let mut rhs = vec![0.0; self.m];
        for j in 0..self.total() {
            if !matches!(self.state[j], State::Basic(_)) && self.x[j] != 0.0 {
                let xj = self.x[j];
                self.for_each_in_col(j, |r, a| rhs[r] -= a * xj);
            }
        }
        self.ftran(&mut rhs);
        for (p, &j) in self.head.iter().enumerate() {
            self.x[j] = rhs[p];
        }
    }

    fn duals(&self) -> Vec<f64> {
        let mut y: Vec<f64> = self.head.iter().map(|&j| self.cost[j]).collect();
        self.btran(&mut y);
        y
    }

    /// Entering candidate as (variable, direction ±1).
    fn price(&self, y: &[f64]) -> Option<(usize, f64)> {
        let total = self.total();
        let eligible = |j: usize| -> Option<(f64, f64)> {
            let st = self.state[j];
            if matches!(st, State::Basic(_)) || self.lower[j] == self.upper[j] {
                return None;
            }
            let d = self.cost[j] - self.col_dot(j, y);
            match st {
                State::AtLower if d < -OPTIMALITY_TOL => Some((d.abs(), 1.0)),
                State::AtUpper if d > OPTIMALITY_TOL => Some((d.abs(), -1.0)),
                State::Zero if d.abs() > OPTIMALITY_TOL => Some((d.abs(), -d.signum())),
                _ => None,
            }
        };

        if self.bland {
            return (0..total).find_map(|j| eligible(j).map(|(_, dir)| (j, dir)));
        }

        // partial pricing over rotating segments
        let segment = (total / 8).max(256).min(total.max(1));
        let segments = total.div_ceil(segment).max(1);
        for s in 0..segments {
            let seg = (self.price_cursor + s) % segments;
            let start = seg * segment;
            let end = (start + segment).min(total);
            let mut best: Option<(usize, f64, f64)> = None;
            for j in start..end {
                if let Some((score, dir)) = eligible(j) {
                    if best.is_none_or(|(_, b, _)| score > b) {
                        best = Some((j, score, dir));
                    }
                }
            }
            if let Some((j, _, dir)) = best {
                return Some((j, dir));
            }
        }
        None
    }

    fn run(&mut self) -> Result<PhaseEnd, LpError> {
        self.refactor();
        loop {
            self.iterations += 1;
            if self.iterations > self.max_iterations {
                return Err(LpError::IterationLimit(self.max_iterations));
            }
            let y = self.duals();
            let Some((q, dir)) = self.price(&y) else {
                return Ok(PhaseEnd::Optimal);
            };
            let mut alpha = self.column_dense(q);
            self.ftran(&mut alpha);

            // ratio test
            let mut theta = f64::INFINITY;
            let mut leave: Option<(usize, bool)> = None; // (position, to_upper)
            let mut leave_alpha = 0.0;
            if dir > 0.0 && self.upper[q].is_finite() {
                theta = self.upper[q] - self.x[q];
            } else if dir < 0.0 && self.lower[q].is_finite() {
                theta = self.x[q] - self.lower[q];
            }
            for (p, &a) in alpha.iter().enumerate() {
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let j = self.head[p];
                let rate = -dir * a;
                let (step, to_upper) = if rate < 0.0 {
                    if !self.lower[j].is_finite() {
                        continue;
                    }
                    ((self.x[j] - self.lower[j]) / -rate, false)
                } else {
                    if !self.upper[j].is_finite() {
                        continue;
                    }
                    ((self.upper[j] - self.x[j]) / rate, true)
                };
                let step = step.max(0.0);
                let take = if step < theta - DEGENERATE_STEP {
                    true
                } else if step <= theta + DEGENERATE_STEP {
                    // tie: an own-bound flip keeps priority
                    match leave {
                        None => false,
                        Some((lp, _)) if self.bland => j < self.head[lp],
                        Some(_) => a.abs() > leave_alpha,
                    }
                } else {
                    false
                };
                if take {
                    theta = theta.min(step);
                    leave = Some((p, to_upper));
                    leave_alpha = a.abs();
                }
            }
            if theta == f64::INFINITY {
                return Ok(PhaseEnd::Unbounded(q));
            }

            // move along the edge
            if theta > 0.0 {
                self.x[q] += dir * theta;
                for (p, &a) in alpha.iter().enumerate() {
                    if a != 0.0 {
                        let j = self.head[p];
                        self.x[j] -= dir * theta * a;
                    }
                }
            }
            self.bland = theta <= DEGENERATE_STEP;

            match leave {
                None => {
                    // bound flip of the entering variable
                    if dir > 0.0 {
                        self.x[q] = self.upper[q];
                        self.state[q] = State::AtUpper;
                    } else {
                        self.x[q] = self.lower[q];
                        self.state[q] = State::AtLower;
                    }
                }
                Some((p, to_upper)) => {
                    let out = self.head[p];
                    if to_upper {
                        self.x[out] = self.upper[out];
                        self.state[out] = State::AtUpper;
                    } else {
                        self.x[out] = self.lower[out];
                        self.state[out] = State::AtLower;
                    }
                    if out >= self.n + self.m {
                        // artificials never re-enter
                        self.upper[out] = 0.0;
                        self.x[out] = 0.0;
                        self.state[out] = State::AtLower;
                    }
                    self.head[p] = q;
                    self.state[q] = State::Basic(p);
                    self.push_eta(p, &alpha);
                    self.since_refactor += 1;
                    if self.since_refactor >= REFACTOR_EVERY {
                        self.refactor();
                    }
                }
            }
            self.price_cursor = self.price_cursor.wrapping_add(1);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &mut self,
        lp: &LinearProgram,
        row_scale: &[f64],
        col_scale: &[f64],
        cost_scale: f64,
        status: LpStatus,
        infeasibility: f64,
        ray: Option<usize>,
    ) -> LpSolution {
        let values: Vec<f64> = (0..self.n).map(|j| self.x[j] * col_scale[j]).collect();
        let duals = if status == LpStatus::Optimal {
            self.duals()
                .iter()
                .zip(row_scale)
                .map(|(y, r)| y * r / cost_scale)
                .collect()
        } else {
            Vec::new()
        };
        let objective_value = match status {
            LpStatus::Optimal => lp.objective(&values),
            LpStatus::Infeasible => f64::NAN,
            LpStatus::Unbounded => f64::NEG_INFINITY,
        };
        LpSolution {
            status,
            values,
            objective_value,
            duals,
            max_primal_residual: 0.0,
            infeasibility,
            unbounded_ray: ray,
            iterations: self.iterations,
        }
    }
}
