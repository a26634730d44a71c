//! Sparse LU factors of a basis matrix with product-form updates.
//!
//! Rows are constraint indices and columns are basis positions. Elimination
//! picks pivots by a Markowitz count with threshold partial pivoting. After
//! `k` basis changes the inverse is `E_k ... E_1 (LU)^-1` where each `E` is
//! an eta matrix differing from the identity in one column.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

const NONE: usize = usize::MAX;
const THRESHOLD: f64 = 0.1;
const SINGULAR_TOL: f64 = 1e-10;
const DROP_TOL: f64 = 1e-14;

#[derive(Debug, Clone)]
struct Eta {
    r: usize,
    pivot: f64,
    col: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub(crate) struct Factor {
    m: usize,
    prow: Vec<usize>,
    pcol: Vec<usize>,
    diag: Vec<f64>,
    lower: Vec<Vec<(usize, f64)>>,
    upper: Vec<Vec<(usize, f64)>>,
    etas: Vec<Eta>,
    eta_nnz: usize,
    work: Vec<f64>,
}

impl Factor {
    /// Factors the `m x m` matrix whose column `k` is `cols[k]`. Columns
    /// without a usable pivot are replaced by `-e_i` for a spare row `i`; the
    /// returned pairs are `(position, row)` for each replacement.
    pub fn new(m: usize, cols: &[Vec<(usize, f64)>]) -> (Factor, Vec<(usize, usize)>) {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut col_rows: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (k, col) in cols.iter().enumerate() {
            for &(i, a) in col {
                if a != 0.0 {
                    rows[i].push((k, a));
                    col_rows[k].push(i);
                }
            }
        }
        let mut f = Factor {
            m,
            prow: Vec::with_capacity(m),
            pcol: Vec::with_capacity(m),
            diag: Vec::with_capacity(m),
            lower: Vec::with_capacity(m),
            upper: Vec::with_capacity(m),
            etas: Vec::new(),
            eta_nnz: 0,
            work: vec![0.0; m],
        };
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut dropped = Vec::new();
        let mut slot = vec![NONE; m];
        // Lazy min-heap of (count, column); stale entries are skipped.
        let mut queue: BinaryHeap<Reverse<(usize, usize)>> = (0..m).map(|k| Reverse((col_rows[k].len(), k))).collect();

        for _ in 0..m {
            let c = loop {
                let Reverse((count, k)) = queue.pop().expect("a column is left");
                if !col_done[k] && count == col_rows[k].len() {
                    break k;
                }
            };
            col_done[c] = true;
            let entry = |rows: &Vec<Vec<(usize, f64)>>, i: usize| rows[i].iter().find(|e| e.0 == c).map_or(0.0, |e| e.1);
            let amax = col_rows[c].iter().fold(0.0f64, |mx, &i| mx.max(entry(&rows, i).abs()));
            if amax < SINGULAR_TOL {
                for &i in &col_rows[c] {
                    rows[i].retain(|e| e.0 != c);
                }
                col_rows[c].clear();
                dropped.push(c);
                continue;
            }
            let mut p = NONE;
            let mut best = usize::MAX;
            let mut piv = 0.0f64;
            for &i in &col_rows[c] {
                let a = entry(&rows, i);
                if a.abs() >= THRESHOLD * amax && (rows[i].len() < best || (rows[i].len() == best && a.abs() > piv.abs())) {
                    best = rows[i].len();
                    p = i;
                    piv = a;
                }
            }
            let pivot_row = core::mem::take(&mut rows[p]);
            for &(j, _) in &pivot_row {
                if let Some(pos) = col_rows[j].iter().position(|&i| i == p) {
                    col_rows[j].swap_remove(pos);
                    if !col_done[j] {
                        queue.push(Reverse((col_rows[j].len(), j)));
                    }
                }
            }
            row_done[p] = true;
            let upper: Vec<(usize, f64)> = pivot_row.into_iter().filter(|e| e.0 != c).collect();
            let mut lower = Vec::new();
            let targets = core::mem::take(&mut col_rows[c]);
            for &i in &targets {
                let pos = rows[i].iter().position(|e| e.0 == c).unwrap();
                let a = rows[i].swap_remove(pos).1;
                let l = a / piv;
                if l == 0.0 {
                    continue;
                }
                lower.push((i, l));
                for (idx, &(j, _)) in rows[i].iter().enumerate() {
                    slot[j] = idx;
                }
                for &(j, u) in &upper {
                    if slot[j] != NONE {
                        rows[i][slot[j]].1 -= l * u;
                    } else {
                        rows[i].push((j, -l * u));
                        col_rows[j].push(i);
                        queue.push(Reverse((col_rows[j].len(), j)));
                    }
                }
                for &(j, _) in &rows[i] {
                    slot[j] = NONE;
                }
            }
            f.prow.push(p);
            f.pcol.push(c);
            f.diag.push(piv);
            f.lower.push(lower);
            f.upper.push(upper);
        }

        let spare: Vec<usize> = (0..m).filter(|&i| !row_done[i]).collect();
        debug_assert_eq!(spare.len(), dropped.len());
        let replaced: Vec<(usize, usize)> = dropped.iter().copied().zip(spare).collect();
        if !replaced.is_empty() {
            let mut is_dropped = vec![false; m];
            for &(c, _) in &replaced {
                is_dropped[c] = true;
            }
            for u in &mut f.upper {
                u.retain(|e| !is_dropped[e.0]);
            }
            for &(c, i) in &replaced {
                f.prow.push(i);
                f.pcol.push(c);
                f.diag.push(-1.0);
                f.lower.push(Vec::new());
                f.upper.push(Vec::new());
            }
        }
        (f, replaced)
    }

    pub fn num_updates(&self) -> usize {
        self.etas.len()
    }

    pub fn update_nonzeros(&self) -> usize {
        self.eta_nnz
    }

    /// Solves `B x = v` in place: `v` comes in indexed by row and leaves
    /// indexed by basis position.
    pub fn ftran(&mut self, v: &mut [f64]) {
        for k in 0..self.m {
            let t = v[self.prow[k]];
            if t != 0.0 {
                for &(i, l) in &self.lower[k] {
                    v[i] -= l * t;
                }
            }
        }
        let x = &mut self.work;
        for k in (0..self.m).rev() {
            let mut s = v[self.prow[k]];
            for &(j, u) in &self.upper[k] {
                s -= u * x[j];
            }
            x[self.pcol[k]] = s / self.diag[k];
        }
        v.copy_from_slice(x);
        for eta in &self.etas {
            let t = v[eta.r];
            if t != 0.0 {
                let t = t / eta.pivot;
                v[eta.r] = t;
                for &(i, a) in &eta.col {
                    v[i] -= a * t;
                }
            }
        }
    }

    /// Solves `B^T y = v` in place: `v` comes in indexed by basis position
    /// and leaves indexed by row.
    pub fn btran(&mut self, v: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let mut s = v[eta.r];
            for &(i, a) in &eta.col {
                s -= a * v[i];
            }
            v[eta.r] = s / eta.pivot;
        }
        let z = &mut self.work;
        for k in 0..self.m {
            let zk = v[self.pcol[k]] / self.diag[k];
            z[self.prow[k]] = zk;
            if zk != 0.0 {
                for &(j, u) in &self.upper[k] {
                    v[j] -= u * zk;
                }
            }
        }
        for k in (0..self.m).rev() {
            let mut s = 0.0;
            for &(i, l) in &self.lower[k] {
                s += l * z[i];
            }
            z[self.prow[k]] -= s;
        }
        v.copy_from_slice(z);
    }

    /// Records that position `r` now holds the column whose solve
    /// `B^-1 a` was `alpha`.
    pub fn update(&mut self, r: usize, alpha: &[f64]) {
        let col: Vec<(usize, f64)> =
            alpha.iter().enumerate().filter(|&(i, a)| i != r && a.abs() > DROP_TOL).map(|(i, &a)| (i, a)).collect();
        self.eta_nnz += col.len() + 1;
        self.etas.push(Eta { r, pivot: alpha[r], col });
    }
}
