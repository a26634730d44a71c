//! Bounded-variable revised simplex.
//!
//! Every row `i` of the model gets a logical variable `r_i` equal to its
//! activity, so the system is `A x - r = 0` with bounds on both `x` and `r`.
//! The starting basis is all logicals. Nonbasic variables sit at one of
//! their bounds (free ones at zero) and the basic values are
//! `x_B = -B^-1 N x_N`. The basis is held as sparse LU factors.
//!
//! Pricing is Dantzig's largest reduced cost with a Harris two-pass ratio
//! test. A run of degenerate pivots first perturbs the bounds of the basic
//! variables, then falls back to a lowest-index rule. Columns get power-of-two
//! geometric scaling, rows and the objective unit max-norm.

use alloc::vec;
use alloc::vec::Vec;

use super::{MilpModel, ObjectiveSense, RowSense, Solution, SolveStatus, SolverError, DEFAULT_FEAS_TOL};
use super::lu::Factor;
use crate::math;

const PIVOT_TOL: f64 = 1e-7;
/// Pivots below this trigger a refactor or reject the entering column.
const SMALL_PIVOT: f64 = 1e-5;
const OPT_TOL: f64 = 1e-9;
const STALL_LIMIT: usize = 40;
const PERTURB: f64 = 1e-6;
const REFACTOR_EVERY: usize = 100;
const MAX_ROUNDS: usize = 12;
/// Phase 2 restarts from phase 1 once drift exceeds this many feasibility
/// tolerances.
const LOST_FACTOR: f64 = 1e3;
const NONE: usize = usize::MAX;

/// Model data after bound presolve and scaling.
///
/// Column `j` is scaled by the power of two `col_scale[j]` (the solver works
/// with `x_j / col_scale[j]`); `rows` and `cost` are in scaled units while
/// `col_lo` and `col_hi` stay in model units.
#[derive(Debug, Clone)]
pub(crate) struct LpData {
    pub n: usize,
    pub rows: Vec<Vec<(usize, f64)>>,
    pub row_lo: Vec<f64>,
    pub row_hi: Vec<f64>,
    pub col_lo: Vec<f64>,
    pub col_hi: Vec<f64>,
    pub col_scale: Vec<f64>,
    /// Maximization costs in scaled units, divided by `cost_scale`.
    pub cost: Vec<f64>,
    pub cost_scale: f64,
    /// A variable's bounds crossed during presolve.
    pub infeasible: bool,
}

const SCALE_PASSES: usize = 6;

fn pow2_near(x: f64) -> f64 {
    if !(x > 0.0) || !x.is_finite() {
        return 1.0;
    }
    math::pow(2.0, math::round(math::log2(x)))
}

/// Geometric-mean row and column scale factors.
fn geometric_scales(n: usize, rows: &[Vec<(usize, f64)>]) -> (Vec<f64>, Vec<f64>) {
    let mut r = vec![1.0; rows.len()];
    let mut c = vec![1.0; n];
    for _ in 0..SCALE_PASSES {
        for (i, row) in rows.iter().enumerate() {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for &(j, a) in row {
                let v = (a * c[j]).abs();
                if v > 0.0 {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            }
            if hi > 0.0 {
                r[i] = 1.0 / math::sqrt(lo * hi);
            }
        }
        let mut lo = vec![f64::INFINITY; n];
        let mut hi = vec![0.0f64; n];
        for (i, row) in rows.iter().enumerate() {
            for &(j, a) in row {
                let v = (a * r[i]).abs();
                if v > 0.0 {
                    lo[j] = lo[j].min(v);
                    hi[j] = hi[j].max(v);
                }
            }
        }
        for j in 0..n {
            if hi[j] > 0.0 {
                c[j] = 1.0 / math::sqrt(lo[j] * hi[j]);
            }
        }
    }
    for cj in &mut c {
        *cj = pow2_near(*cj);
    }
    (r, c)
}

impl LpData {
    /// Builds the LP relaxation. Rows with a single variable become bounds;
    /// with `round_integers` the bounds of integer variables are rounded
    /// inward.
    pub fn from_model(model: &MilpModel, round_integers: bool, int_tol: f64, feas_tol: f64) -> LpData {
        let n = model.num_vars();
        let mut col_lo: Vec<f64> = model.variables.iter().map(|v| v.lower).collect();
        let mut col_hi: Vec<f64> = model.variables.iter().map(|v| v.upper).collect();
        let sign = match model.sense {
            ObjectiveSense::Maximize => 1.0,
            ObjectiveSense::Minimize => -1.0,
        };

        let mut infeasible = false;
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
        let mut row_lo = Vec::new();
        let mut row_hi = Vec::new();
        for c in &model.constraints {
            let (lo, hi) = match c.sense {
                RowSense::Le => (f64::NEG_INFINITY, c.rhs),
                RowSense::Ge => (c.rhs, f64::INFINITY),
                RowSense::Eq => (c.rhs, c.rhs),
            };
            match c.terms.len() {
                0 => {
                    if lo > feas_tol || hi < -feas_tol {
                        infeasible = true;
                    }
                }
                1 => {
                    let (v, a) = c.terms[0];
                    let (mut l, mut h) = (lo / a, hi / a);
                    if a < 0.0 {
                        core::mem::swap(&mut l, &mut h);
                    }
                    col_lo[v.0] = col_lo[v.0].max(l);
                    col_hi[v.0] = col_hi[v.0].min(h);
                }
                _ => {
                    rows.push(c.terms.iter().map(|&(v, a)| (v.0, a)).collect());
                    row_lo.push(lo);
                    row_hi.push(hi);
                }
            }
        }
        for j in 0..n {
            if round_integers && model.variables[j].integer {
                col_lo[j] = math::ceil(col_lo[j] - int_tol);
                col_hi[j] = math::floor(col_hi[j] + int_tol);
            }
            if col_lo[j] > col_hi[j] {
                if col_lo[j] - col_hi[j] <= feas_tol {
                    col_hi[j] = col_lo[j];
                } else {
                    infeasible = true;
                }
            }
        }

        let (_, col_scale) = geometric_scales(n, &rows);
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, a) in row.iter_mut() {
                *a *= col_scale[*j];
            }
            let scale = row.iter().fold(0.0f64, |m, &(_, a)| m.max(a.abs()));
            for (_, a) in row.iter_mut() {
                *a /= scale;
            }
            row_lo[i] /= scale;
            row_hi[i] /= scale;
        }
        let mut cost: Vec<f64> =
            model.variables.iter().zip(&col_scale).map(|(v, s)| sign * v.objective * s).collect();
        let cost_scale = cost.iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let cost_scale = if cost_scale > 0.0 { cost_scale } else { 1.0 };
        for c in &mut cost {
            *c /= cost_scale;
        }
        LpData { n, rows, row_lo, row_hi, col_lo, col_hi, col_scale, cost, cost_scale, infeasible }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

enum DualOutcome {
    Optimal,
    Infeasible,
    NeedPrimal,
}

#[derive(Debug, Clone)]
pub(crate) struct Simplex {
    m: usize,
    n: usize,
    nc: usize,
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<(usize, f64)>>,
    factor: Factor,
    d: Vec<f64>,
    x: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    row_of: Vec<usize>,
    col_scale: Vec<f64>,
    feas_tol: f64,
    /// Original bounds while the working bounds are perturbed.
    saved_bounds: Option<(Vec<f64>, Vec<f64>)>,
    perturbed: bool,
    may_perturb: bool,
    /// `B^-1 a_q` of the entering column.
    alpha: Vec<f64>,
    /// Row `r` of `B^-1 [A | -I]`.
    prow: Vec<f64>,
    /// Ratio test scratch: row, ratio, bound reached.
    candidates: Vec<(usize, f64, f64)>,
    pub iterations: u64,
}

impl Simplex {
    pub fn new(data: &LpData, feas_tol: f64) -> Simplex {
        let m = data.rows.len();
        let n = data.n;
        let nc = n + m;
        let mut cols = vec![Vec::new(); n];
        for (i, row) in data.rows.iter().enumerate() {
            for &(j, a) in row {
                cols[j].push((i, a));
            }
        }
        let mut lo: Vec<f64> = data.col_lo.iter().zip(&data.col_scale).map(|(l, s)| l / s).collect();
        let mut hi: Vec<f64> = data.col_hi.iter().zip(&data.col_scale).map(|(h, s)| h / s).collect();
        lo.extend_from_slice(&data.row_lo);
        hi.extend_from_slice(&data.row_hi);
        let mut cost = data.cost.clone();
        cost.resize(nc, 0.0);
        let mut x = vec![0.0; nc];
        for j in 0..n {
            x[j] = initial_value(lo[j], hi[j]);
        }
        let basis: Vec<usize> = (n..nc).collect();
        let mut row_of = vec![NONE; nc];
        for (i, &b) in basis.iter().enumerate() {
            row_of[b] = i;
        }
        let slack_cols: Vec<Vec<(usize, f64)>> = (0..m).map(|i| vec![(i, -1.0)]).collect();
        let (factor, _) = Factor::new(m, &slack_cols);
        let mut s = Simplex {
            m,
            n,
            nc,
            rows: data.rows.clone(),
            cols,
            factor,
            d: cost.clone(),
            x,
            lo,
            hi,
            cost,
            basis,
            row_of,
            col_scale: data.col_scale.clone(),
            feas_tol,
            saved_bounds: None,
            perturbed: false,
            may_perturb: true,
            alpha: vec![0.0; m],
            prow: vec![0.0; nc],
            candidates: Vec::new(),
            iterations: 0,
        };
        s.recompute_basics();
        s
    }

    /// Structural values in model units.
    pub fn values(&self) -> Vec<f64> {
        self.x[..self.n].iter().zip(&self.col_scale).map(|(x, s)| x * s).collect()
    }

    pub fn value(&self, j: usize) -> f64 {
        self.x[j] * self.col_scale[j]
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lo[j] * self.col_scale[j], self.hi[j] * self.col_scale[j])
    }

    /// Scaled maximization objective of the current point.
    pub fn objective(&self) -> f64 {
        (0..self.n).map(|j| self.cost[j] * self.x[j]).sum()
    }

    /// Changes the bounds of a structural variable. Nonbasic variables are
    /// moved onto the new bounds; call [`Simplex::reoptimize`] afterwards.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        let (lo, hi) = (lo / self.col_scale[j], hi / self.col_scale[j]);
        self.lo[j] = lo;
        self.hi[j] = hi;
        if self.row_of[j] == NONE {
            self.x[j] = self.x[j].clamp(lo, hi);
        }
    }

    fn iteration_cap(&self) -> u64 {
        (50 * (self.m + self.n) + 10_000) as u64
    }

    /// Adds `coef * column(j)` to the row-indexed vector `v`.
    fn scatter_column(&self, j: usize, coef: f64, v: &mut [f64]) {
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                v[i] += coef * a;
            }
        } else {
            v[j - self.n] -= coef;
        }
    }

    /// `out_j = y . column(j)` for every column.
    fn price(&self, y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (i, &yi) in y.iter().enumerate() {
            if yi != 0.0 {
                for &(j, a) in &self.rows[i] {
                    out[j] += yi * a;
                }
                out[self.n + i] = -yi;
            }
        }
    }

    fn load_alpha(&mut self, q: usize) {
        let mut v = core::mem::take(&mut self.alpha);
        v.iter_mut().for_each(|a| *a = 0.0);
        self.scatter_column(q, 1.0, &mut v);
        self.factor.ftran(&mut v);
        self.alpha = v;
    }

    fn load_prow(&mut self, r: usize) {
        let mut rho = vec![0.0; self.m];
        rho[r] = 1.0;
        self.factor.btran(&mut rho);
        let mut out = core::mem::take(&mut self.prow);
        self.price(&rho, &mut out);
        self.prow = out;
    }

    /// Solves from the current basis: phase 1 then phase 2 primal simplex.
    pub fn solve_primal(&mut self) -> Result<LpStatus, SolverError> {
        self.may_perturb = true;
        let result = self.solve_primal_rounds();
        self.unperturb();
        result
    }

    fn solve_primal_rounds(&mut self) -> Result<LpStatus, SolverError> {
        self.place_nonbasic();
        self.recompute_basics();
        for round in 0..MAX_ROUNDS {
            if round >= 3 {
                self.may_perturb = false;
            }
            if self.primal(true)? == LpStatus::Infeasible {
                if self.factor.num_updates() == 0 && self.saved_bounds.is_none() {
                    return Ok(LpStatus::Infeasible);
                }
                self.refactor();
                if self.primal(true)? == LpStatus::Infeasible {
                    if self.saved_bounds.is_none() {
                        return Ok(LpStatus::Infeasible);
                    }
                    self.unperturb();
                    continue;
                }
            }
            match self.primal(false)? {
                LpStatus::Unbounded => {
                    if self.saved_bounds.is_none() {
                        return Ok(LpStatus::Unbounded);
                    }
                    self.unperturb();
                    continue;
                }
                LpStatus::Infeasible => {
                    continue;
                }
                LpStatus::Optimal => {}
            }
            if self.saved_bounds.is_some() {
                self.unperturb();
                continue;
            }
            if self.verify() {
                return Ok(LpStatus::Optimal);
            }
        }
        Err(SolverError::NumericalFailure(self.iterations))
    }

    /// Widens every finite bound by a small deterministic amount so
    /// degenerate vertices split apart. Nonbasic variables follow their
    /// bound.
    fn perturb(&mut self) {
        let (mut lo, mut hi) = (self.lo.clone(), self.hi.clone());
        for j in 0..self.nc {
            let spread = |k: u64| {
                let h = (j as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_mul(0xBF58_476D_1CE4_E5B9));
                1.0 + ((h >> 11) as f64) / ((1u64 << 53) as f64)
            };
            let nonbasic = self.row_of[j] == NONE;
            if lo[j].is_finite() {
                lo[j] -= PERTURB * (1.0 + lo[j].abs()) * spread(0);
                if nonbasic && self.x[j] == self.lo[j] {
                    self.x[j] = lo[j];
                }
            }
            if hi[j].is_finite() {
                hi[j] += PERTURB * (1.0 + hi[j].abs()) * spread(1);
                if nonbasic && self.x[j] == self.hi[j] {
                    self.x[j] = hi[j];
                }
            }
        }
        let saved_lo = core::mem::replace(&mut self.lo, lo);
        let saved_hi = core::mem::replace(&mut self.hi, hi);
        if self.saved_bounds.is_none() {
            self.saved_bounds = Some((saved_lo, saved_hi));
        }
        self.perturbed = true;
        self.recompute_basics();
    }

    /// Restores the bounds saved by [`Simplex::perturb`].
    fn unperturb(&mut self) {
        self.perturbed = false;
        if let Some((lo, hi)) = self.saved_bounds.take() {
            self.lo = lo;
            self.hi = hi;
            self.place_nonbasic();
            self.recompute_basics();
        }
    }

    /// Re-solves after bound changes, using the dual simplex when the basis
    /// is still dual feasible.
    pub fn reoptimize(&mut self) -> Result<LpStatus, SolverError> {
        if !self.place_dual_feasible() {
            return self.solve_primal();
        }
        self.recompute_basics();
        for _ in 0..4 {
            match self.dual()? {
                DualOutcome::Infeasible => {
                    if self.factor.num_updates() == 0 {
                        return Ok(LpStatus::Infeasible);
                    }
                    self.refactor();
                    if !self.place_dual_feasible() {
                        return self.solve_primal();
                    }
                    self.recompute_basics();
                    continue;
                }
                DualOutcome::NeedPrimal => return self.solve_primal(),
                DualOutcome::Optimal => {}
            }
            if self.verify() {
                return Ok(LpStatus::Optimal);
            }
            if !self.place_dual_feasible() {
                return self.solve_primal();
            }
            self.recompute_basics();
        }
        self.solve_primal()
    }

    /// Refactors and checks that the point is still primal and dual feasible.
    fn verify(&mut self) -> bool {
        self.refactor();
        let primal_ok = self.primal_feasible();
        let dual_ok = (0..self.nc).all(|j| {
            if self.row_of[j] != NONE || self.lo[j] == self.hi[j] {
                return true;
            }
            let dj = self.d[j];
            (dj <= OPT_TOL * 10.0 || self.x[j] >= self.hi[j]) && (dj >= -OPT_TOL * 10.0 || self.x[j] <= self.lo[j])
        });
        primal_ok && dual_ok
    }

    fn place_nonbasic(&mut self) {
        for j in 0..self.nc {
            if self.row_of[j] == NONE {
                let (l, h) = (self.lo[j], self.hi[j]);
                let v = self.x[j];
                self.x[j] = if v <= l || v >= h || !(l.is_finite() || h.is_finite()) {
                    v.clamp(l, h)
                } else if v - l <= h - v {
                    l
                } else {
                    h
                };
                if !self.x[j].is_finite() {
                    self.x[j] = initial_value(l, h);
                }
            }
        }
    }

    /// Moves every nonbasic variable to the bound its reduced cost asks for.
    /// Returns false when some variable has no such bound.
    fn place_dual_feasible(&mut self) -> bool {
        let mut ok = true;
        for j in 0..self.nc {
            if self.row_of[j] != NONE {
                continue;
            }
            let (l, h) = (self.lo[j], self.hi[j]);
            let dj = self.d[j];
            if l == h {
                self.x[j] = l;
            } else if dj > OPT_TOL {
                if h.is_finite() {
                    self.x[j] = h;
                } else {
                    ok = false;
                }
            } else if dj < -OPT_TOL {
                if l.is_finite() {
                    self.x[j] = l;
                } else {
                    ok = false;
                }
            } else if self.x[j] != l && self.x[j] != h {
                self.x[j] = if l.is_finite() { l } else if h.is_finite() { h } else { 0.0 };
            }
        }
        if !ok {
            self.place_nonbasic();
        }
        ok
    }

    /// `x_B = -B^-1 N x_N`.
    fn recompute_basics(&mut self) {
        let mut v = vec![0.0; self.m];
        for j in 0..self.nc {
            if self.row_of[j] == NONE && self.x[j] != 0.0 {
                self.scatter_column(j, -self.x[j], &mut v);
            }
        }
        self.factor.ftran(&mut v);
        for (i, &b) in self.basis.iter().enumerate() {
            self.x[b] = v[i];
        }
    }

    /// `d = c - c_B^T B^-1 [A | -I]`.
    fn recompute_duals(&mut self) {
        let mut y: Vec<f64> = self.basis.iter().map(|&b| self.cost[b]).collect();
        self.factor.btran(&mut y);
        let mut d = core::mem::take(&mut self.d);
        self.price(&y, &mut d);
        for (dj, c) in d.iter_mut().zip(&self.cost) {
            *dj = c - *dj;
        }
        for &b in &self.basis {
            d[b] = 0.0;
        }
        self.d = d;
    }

    /// Replaces the basic variable at position `r` by `q`. `alpha` must hold
    /// the entering column; with `duals`, `prow` must hold row `r`.
    fn pivot(&mut self, r: usize, q: usize, duals: bool) {
        let leaving = self.basis[r];
        if duals {
            let f = self.d[q] / self.alpha[r];
            for j in 0..self.nc {
                let a = self.prow[j];
                if a != 0.0 && (self.row_of[j] == NONE || j == leaving) {
                    self.d[j] -= f * a;
                }
            }
        }
        self.factor.update(r, &self.alpha);
        self.row_of[leaving] = NONE;
        self.basis[r] = q;
        self.row_of[q] = r;
        if duals {
            self.d[q] = 0.0;
        }
        self.iterations += 1;
    }

    /// Factors the current basis from scratch and recomputes values and
    /// reduced costs. Dependent basic columns are swapped for logicals.
    fn refactor(&mut self) {
        let cols: Vec<Vec<(usize, f64)>> = self
            .basis
            .iter()
            .map(|&b| if b < self.n { self.cols[b].clone() } else { vec![(b - self.n, -1.0)] })
            .collect();
        let (factor, replaced) = Factor::new(self.m, &cols);
        self.factor = factor;
        for (pos, row) in replaced {
            let out = self.basis[pos];
            self.row_of[out] = NONE;
            let logical = self.n + row;
            self.basis[pos] = logical;
            self.row_of[logical] = pos;
        }
        self.place_nonbasic();
        self.recompute_duals();
        self.recompute_basics();
    }

    /// Refactors when the update file is long; returns whether it did.
    fn maybe_refactor(&mut self) -> bool {
        if self.factor.num_updates() >= REFACTOR_EVERY || self.factor.update_nonzeros() > 4 * self.m + 1000 {
            self.refactor();
            return true;
        }
        false
    }

    /// Widens the bounds of basic variables that drifted past them by at
    /// most `limit`. Returns false when some drift is larger.
    fn shift_drift(&mut self, limit: f64) -> bool {
        let tol = self.feas_tol;
        let mut shifts = Vec::new();
        for &b in &self.basis {
            let (x, l, h) = (self.x[b], self.lo[b], self.hi[b]);
            if x < l - tol || x > h + tol {
                if x < l - limit || x > h + limit {
                    return false;
                }
                shifts.push(b);
            }
        }
        if shifts.is_empty() {
            return true;
        }
        if self.saved_bounds.is_none() {
            self.saved_bounds = Some((self.lo.clone(), self.hi.clone()));
        }
        for b in shifts {
            let x = self.x[b];
            if x < self.lo[b] {
                self.lo[b] = x;
            } else {
                self.hi[b] = x;
            }
        }
        true
    }

    fn primal_feasible(&self) -> bool {
        self.primal_feasible_within(self.feas_tol)
    }

    fn primal_feasible_within(&self, tol: f64) -> bool {
        self.basis.iter().all(|&b| self.x[b] >= self.lo[b] - tol && self.x[b] <= self.hi[b] + tol)
    }

    fn can_increase(&self, j: usize) -> bool {
        self.x[j] < self.hi[j]
    }

    fn can_decrease(&self, j: usize) -> bool {
        self.x[j] > self.lo[j]
    }

    /// Primal simplex. In phase 1 the objective is the negated sum of bound
    /// violations of basic variables; it returns `Optimal` once the point is
    /// feasible and `Infeasible` when no improving column remains.
    fn primal(&mut self, phase1: bool) -> Result<LpStatus, SolverError> {
        let (m, nc) = (self.m, self.nc);
        let tol = self.feas_tol;
        let cap = self.iteration_cap();
        let mut local = 0u64;
        let mut stall = 0usize;
        let mut bland = false;
        let mut weights = vec![0.0; m];
        let mut dphase = vec![0.0; nc];
        let mut rejected = vec![false; nc];
        let mut rejected_list: Vec<usize> = Vec::new();
        if !phase1 {
            self.recompute_duals();
        }
        loop {
            if self.maybe_refactor() && !phase1 && !self.shift_drift(LOST_FACTOR * tol) {
                return Ok(LpStatus::Infeasible);
            }
            local += 1;
            if local > cap {
                return Err(SolverError::NumericalFailure(self.iterations));
            }
            if phase1 {
                let mut any = false;
                for i in 0..m {
                    let b = self.basis[i];
                    weights[i] = if self.x[b] < self.lo[b] - tol {
                        any = true;
                        -1.0
                    } else if self.x[b] > self.hi[b] + tol {
                        any = true;
                        1.0
                    } else {
                        0.0
                    };
                }
                if !any {
                    return Ok(LpStatus::Optimal);
                }
                self.factor.btran(&mut weights);
                self.price(&weights, &mut dphase);
            }
            let dref: &[f64] = if phase1 { &dphase } else { &self.d };

            let mut enter = NONE;
            let mut best = 0.0;
            for j in 0..nc {
                if self.row_of[j] != NONE || self.lo[j] == self.hi[j] || rejected[j] {
                    continue;
                }
                let dj = dref[j];
                let ok = (dj > OPT_TOL && self.can_increase(j)) || (dj < -OPT_TOL && self.can_decrease(j));
                if !ok {
                    continue;
                }
                if bland {
                    enter = j;
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    enter = j;
                }
            }
            if enter == NONE {
                return Ok(if phase1 { LpStatus::Infeasible } else { LpStatus::Optimal });
            }
            let q = enter;
            let dir = if dref[q] > 0.0 { 1.0 } else { -1.0 };
            self.load_alpha(q);

            // Ratio test. `target` is the bound a basic variable stops at.
            let limit = |i: usize, relax: f64| -> Option<(f64, f64)> {
                let a = self.alpha[i];
                if a.abs() < PIVOT_TOL {
                    return None;
                }
                let rate = -a * dir;
                let b = self.basis[i];
                let xb = self.x[b];
                if rate < 0.0 {
                    if phase1 && xb < self.lo[b] - tol {
                        return None;
                    }
                    let target = if phase1 && xb > self.hi[b] + tol { self.hi[b] } else { self.lo[b] };
                    if target == f64::NEG_INFINITY {
                        return None;
                    }
                    Some((((xb - target) + relax) / -rate, target))
                } else {
                    if phase1 && xb > self.hi[b] + tol {
                        return None;
                    }
                    let target = if phase1 && xb < self.lo[b] - tol { self.lo[b] } else { self.hi[b] };
                    if target == f64::INFINITY {
                        return None;
                    }
                    Some((((target - xb) + relax) / rate, target))
                }
            };
            let flip = self.hi[q] - self.lo[q];
            let mut leave = NONE;
            let mut leave_target = 0.0;
            let mut theta = f64::INFINITY;
            let mut theta_max = f64::INFINITY;
            let mut candidates = core::mem::take(&mut self.candidates);
            candidates.clear();
            for i in 0..m {
                if let Some((relaxed, target)) = limit(i, tol) {
                    theta_max = theta_max.min(relaxed);
                    candidates.push((i, relaxed - tol / (self.alpha[i].abs()), target));
                }
            }
            if theta_max.is_finite() {
                let mut biggest = 0.0f64;
                for &(i, ratio, _) in &candidates {
                    if ratio <= theta_max {
                        biggest = biggest.max(self.alpha[i].abs());
                    }
                }
                let mut best_b = NONE;
                for &(i, ratio, target) in &candidates {
                    if ratio > theta_max {
                        continue;
                    }
                    let a = self.alpha[i].abs();
                    let b = self.basis[i];
                    let take = if bland { a >= 0.1 * biggest && b < best_b } else { a == biggest && leave == NONE };
                    if take {
                        theta = ratio.max(0.0);
                        leave = i;
                        leave_target = target;
                        best_b = b;
                    }
                }
            }
            self.candidates = candidates;

            if leave == NONE || flip <= theta {
                if !flip.is_finite() {
                    if phase1 {
                        return Err(SolverError::NumericalFailure(self.iterations));
                    }
                    return Ok(LpStatus::Unbounded);
                }
                // Bound flip, no basis change.
                self.step(q, dir * flip);
                self.x[q] = if dir > 0.0 { self.hi[q] } else { self.lo[q] };
                self.iterations += 1;
                stall = 0;
                bland = false;
                continue;
            }

            if self.alpha[leave].abs() < SMALL_PIVOT {
                if self.factor.num_updates() > 0 {
                    self.refactor();
                    if !phase1 && !self.shift_drift(LOST_FACTOR * tol) {
                        return Ok(LpStatus::Infeasible);
                    }
                } else {
                    rejected[q] = true;
                    rejected_list.push(q);
                }
                continue;
            }
            if !phase1 {
                self.load_prow(leave);
                let a = self.alpha[leave];
                if (a - self.prow[q]).abs() > 1e-6 * (1.0 + a.abs()) && self.factor.num_updates() > 0 {
                    self.refactor();
                    if !self.shift_drift(LOST_FACTOR * tol) {
                        return Ok(LpStatus::Infeasible);
                    }
                    continue;
                }
            }
            for j in rejected_list.drain(..) {
                rejected[j] = false;
            }
            self.step(q, dir * theta);
            let b = self.basis[leave];
            self.x[b] = leave_target;
            self.pivot(leave, q, !phase1);
            if theta <= 1e-12 {
                stall += 1;
                if stall > STALL_LIMIT {
                    if self.may_perturb && !self.perturbed {
                        self.perturb();
                        stall = 0;
                        if !phase1 && !self.primal_feasible_within(LOST_FACTOR * tol) {
                            return Ok(LpStatus::Infeasible);
                        }
                    } else {
                        bland = true;
                    }
                }
            } else {
                stall = 0;
                bland = false;
            }
        }
    }

    /// Moves nonbasic `q` by `delta` and updates the basic values; `alpha`
    /// must hold column `q`.
    fn step(&mut self, q: usize, delta: f64) {
        if delta == 0.0 {
            return;
        }
        self.x[q] += delta;
        for i in 0..self.m {
            let a = self.alpha[i];
            if a != 0.0 {
                let b = self.basis[i];
                self.x[b] -= a * delta;
            }
        }
    }

    /// Dual simplex from a dual feasible basis.
    fn dual(&mut self) -> Result<DualOutcome, SolverError> {
        let (m, nc) = (self.m, self.nc);
        let tol = self.feas_tol;
        let cap = self.iteration_cap();
        let mut local = 0u64;
        let mut stall = 0usize;
        let mut bland = false;
        loop {
            self.maybe_refactor();
            local += 1;
            if local > cap {
                return Err(SolverError::NumericalFailure(self.iterations));
            }
            let mut r = NONE;
            let mut worst = tol;
            for i in 0..m {
                let b = self.basis[i];
                let viol = (self.lo[b] - self.x[b]).max(self.x[b] - self.hi[b]);
                if viol > tol {
                    if bland {
                        if r == NONE || b < self.basis[r] {
                            r = i;
                        }
                    } else if viol > worst {
                        worst = viol;
                        r = i;
                    }
                }
            }
            if r == NONE {
                return Ok(DualOutcome::Optimal);
            }
            let b = self.basis[r];
            let below = self.x[b] < self.lo[b];
            let target = if below { self.lo[b] } else { self.hi[b] };
            // x_b moves by -t_rj * dx_j; below needs it to rise.
            let want = if below { 1.0 } else { -1.0 };
            self.load_prow(r);
            let eligible = |j: usize| -> Option<(f64, f64)> {
                if self.row_of[j] != NONE || self.lo[j] == self.hi[j] {
                    return None;
                }
                let a = self.prow[j];
                if a.abs() < PIVOT_TOL {
                    return None;
                }
                // Direction x_j must move for x_b to move the wanted way.
                let dirj = if -a * want > 0.0 { 1.0 } else { -1.0 };
                if (dirj > 0.0 && !self.can_increase(j)) || (dirj < 0.0 && !self.can_decrease(j)) {
                    return None;
                }
                let dj = self.d[j];
                let slack = if dirj > 0.0 { (-dj).max(0.0) } else { dj.max(0.0) };
                Some((slack, a.abs()))
            };
            let mut enter = NONE;
            let mut bound = f64::INFINITY;
            for j in 0..nc {
                if let Some((s, a)) = eligible(j) {
                    bound = bound.min((s + OPT_TOL) / a);
                }
            }
            if bound.is_finite() {
                let mut biggest = 0.0f64;
                for j in 0..nc {
                    if let Some((s, a)) = eligible(j) {
                        if s / a <= bound {
                            biggest = biggest.max(a);
                        }
                    }
                }
                for j in 0..nc {
                    if let Some((s, a)) = eligible(j) {
                        if s / a > bound {
                            continue;
                        }
                        if (bland && a >= 0.1 * biggest) || (!bland && a == biggest) {
                            enter = j;
                            break;
                        }
                    }
                }
            }
            if enter == NONE {
                return Ok(DualOutcome::Infeasible);
            }
            let q = enter;
            self.load_alpha(q);
            let a = self.alpha[r];
            if (a - self.prow[q]).abs() > 1e-6 * (1.0 + a.abs()) && self.factor.num_updates() > 0 {
                self.refactor();
                continue;
            }
            let delta = (target - self.x[b]) / -a;
            let dq = self.d[q];
            self.step(q, delta);
            self.x[b] = target;
            self.pivot(r, q, true);
            if (dq * delta).abs() <= 1e-12 {
                stall += 1;
                if stall > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stall = 0;
                bland = false;
            }
            // A dual pivot can leave a free or one-sided nonbasic with the
            // wrong reduced-cost sign only through round-off.
            if !self.d.iter().enumerate().all(|(j, &dj)| {
                self.row_of[j] != NONE
                    || self.lo[j] == self.hi[j]
                    || (dj <= 1e-6 || self.hi[j].is_finite()) && (dj >= -1e-6 || self.lo[j].is_finite())
            }) {
                return Ok(DualOutcome::NeedPrimal);
            }
        }
    }
}

fn initial_value(lo: f64, hi: f64) -> f64 {
    if lo.is_finite() && hi.is_finite() {
        if lo.abs() <= hi.abs() {
            lo
        } else {
            hi
        }
    } else if lo.is_finite() {
        lo
    } else if hi.is_finite() {
        hi
    } else {
        0.0
    }
}

/// Solves the LP relaxation of `model` (integrality is ignored).
pub fn solve_lp(model: &MilpModel) -> Result<Solution, SolverError> {
    model.check()?;
    let data = LpData::from_model(model, false, 0.0, DEFAULT_FEAS_TOL);
    let empty = |status| Solution {
        status,
        values: Vec::new(),
        objective: f64::NAN,
        bound: f64::NAN,
        relative_gap: f64::NAN,
        nodes: 0,
        simplex_iterations: 0,
        events: Vec::new(),
    };
    if data.infeasible {
        return Ok(empty(SolveStatus::Infeasible));
    }
    let mut tab = Simplex::new(&data, DEFAULT_FEAS_TOL);
    let status = tab.solve_primal()?;
    let mut sol = empty(match status {
        LpStatus::Optimal => SolveStatus::Optimal,
        LpStatus::Infeasible => SolveStatus::Infeasible,
        LpStatus::Unbounded => SolveStatus::Unbounded,
    });
    sol.simplex_iterations = tab.iterations;
    if status == LpStatus::Optimal {
        sol.values = tab.values();
        sol.objective = model.objective_value(&sol.values);
        sol.bound = sol.objective;
        sol.relative_gap = 0.0;
    }
    Ok(sol)
}
