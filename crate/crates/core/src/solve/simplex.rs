//! Dense two-phase primal simplex with Bland's rule, for the small linear
//! programs that arise inside the search.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row<T> {
    pub coeffs: Vec<(usize, T)>,
    pub sense: Sense,
    pub rhs: T,
}

/// Maximize `objective · x` subject to `rows`, `x >= 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProgram<T> {
    pub objective: Vec<T>,
    pub rows: Vec<Row<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome<T> {
    Optimal { x: Vec<T>, value: T },
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl<T: Scalar> LinearProgram<T> {
    pub fn new(vars: usize) -> Self {
        Self { objective: vec![T::zero(); vars], rows: Vec::new() }
    }

    pub fn vars(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, coeffs: Vec<(usize, T)>, sense: Sense, rhs: T) {
        self.rows.push(Row { coeffs, sense, rhs });
    }
}

const MAX_PIVOTS: usize = 200_000;

struct Tableau<T> {
    /// `rows x (cols + 1)`, last column is the right-hand side.
    a: Vec<Vec<T>>,
    basis: Vec<usize>,
    cols: usize,
}

impl<T: Scalar> Tableau<T> {
    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.a[r][c];
        for v in self.a[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.a[r].clone();
        for (i, row) in self.a.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != T::zero() {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * *pv;
                }
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations for `cost` over the allowed columns.
    /// Returns `Some(true)` at optimum, `Some(false)` if unbounded, `None` on
    /// the iteration limit.
    fn optimize(&mut self, cost: &[T], allowed: &[bool], eps: T) -> Option<bool> {
        for _ in 0..MAX_PIVOTS {
            let entering = (0..self.cols).find(|&j| allowed[j] && self.reduced_cost(cost, j) > eps);
            let Some(c) = entering else { return Some(true) };
            let mut leave: Option<(usize, T)> = None;
            for (i, row) in self.a.iter().enumerate() {
                let aij = row[c];
                if aij > eps {
                    let ratio = row[self.cols] / aij;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - eps || (ratio <= lr + eps && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                None => return Some(false),
                Some((r, _)) => self.pivot(r, c),
            }
        }
        None
    }

    fn reduced_cost(&self, cost: &[T], j: usize) -> T {
        let mut r = cost[j];
        for (i, row) in self.a.iter().enumerate() {
            let cb = cost[self.basis[i]];
            if cb != T::zero() {
                r -= cb * row[j];
            }
        }
        r
    }

    fn value(&self, cost: &[T]) -> T {
        self.a.iter().enumerate().fold(T::zero(), |acc, (i, row)| acc + cost[self.basis[i]] * row[self.cols])
    }
}

/// Solves `lp` to optimality.
pub fn maximize<T: Scalar>(lp: &LinearProgram<T>) -> LpOutcome<T> {
    let n = lp.vars();
    let m = lp.rows.len();
    let eps = T::tolerance();

    // Rows scaled to unit max coefficient and flipped to a non-negative rhs.
    let mut norm: Vec<(Vec<(usize, T)>, Sense, T)> = Vec::with_capacity(m);
    for row in &lp.rows {
        let scale = row.coeffs.iter().fold(T::zero(), |acc, (_, v)| acc.max(v.abs()));
        if scale <= T::zero() {
            let ok = match row.sense {
                Sense::Le => row.rhs >= -eps,
                Sense::Ge => row.rhs <= eps,
                Sense::Eq => row.rhs.abs() <= eps,
            };
            if !ok {
                return LpOutcome::Infeasible;
            }
            continue;
        }
        let mut coeffs: Vec<(usize, T)> = row.coeffs.iter().map(|&(j, v)| (j, v / scale)).collect();
        let mut rhs = row.rhs / scale;
        let mut sense = row.sense;
        if rhs < T::zero() {
            for c in coeffs.iter_mut() {
                c.1 = -c.1;
            }
            rhs = -rhs;
            sense = match sense {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
        norm.push((coeffs, sense, rhs));
    }
    let m = norm.len();

    let slack_count = norm.iter().filter(|r| r.1 != Sense::Eq).count();
    let art_count = norm.iter().filter(|r| r.1 != Sense::Le).count();
    let cols = n + slack_count + art_count;
    let art_start = n + slack_count;

    let mut a = vec![vec![T::zero(); cols + 1]; m];
    let mut basis = vec![0; m];
    let mut next_slack = n;
    let mut next_art = art_start;
    for (i, (coeffs, sense, rhs)) in norm.iter().enumerate() {
        for &(j, v) in coeffs {
            a[i][j] += v;
        }
        a[i][cols] = *rhs;
        match sense {
            Sense::Le => {
                a[i][next_slack] = T::one();
                basis[i] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                a[i][next_slack] = -T::one();
                next_slack += 1;
                a[i][next_art] = T::one();
                basis[i] = next_art;
                next_art += 1;
            }
            Sense::Eq => {
                a[i][next_art] = T::one();
                basis[i] = next_art;
                next_art += 1;
            }
        }
    }
    let mut tab = Tableau { a, basis, cols };

    if art_count > 0 {
        let mut phase1 = vec![T::zero(); cols];
        for c in phase1.iter_mut().skip(art_start) {
            *c = -T::one();
        }
        let allowed = vec![true; cols];
        if tab.optimize(&phase1, &allowed, eps).is_none() { return LpOutcome::IterationLimit }
        if tab.value(&phase1) < -T::lit(1e-7) {
            return LpOutcome::Infeasible;
        }
        // Drive artificials out of the basis where possible.
        for r in 0..m {
            if tab.basis[r] >= art_start
                && let Some(c) = (0..art_start).find(|&j| tab.a[r][j].abs() > eps) {
                    tab.pivot(r, c);
                }
        }
    }

    let mut cost = vec![T::zero(); cols];
    cost[..n].copy_from_slice(&lp.objective);
    let allowed: Vec<bool> = (0..cols).map(|j| j < art_start).collect();
    match tab.optimize(&cost, &allowed, eps) {
        None => LpOutcome::IterationLimit,
        Some(false) => LpOutcome::Unbounded,
        Some(true) => {
            let mut x = vec![T::zero(); n];
            for (i, &b) in tab.basis.iter().enumerate() {
                if b < n {
                    x[b] = tab.a[i][cols].max(T::zero());
                }
            }
            let value = x.iter().zip(&lp.objective).fold(T::zero(), |acc, (xi, ci)| acc + *xi * *ci);
            LpOutcome::Optimal { x, value }
        }
    }
}
