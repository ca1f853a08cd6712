//! Sparse LU factorization of simplex bases.
//!
//! Left-looking elimination with a sparse triangular solve per column and
//! threshold partial pivoting. Columns are processed sparsest-first, and
//! among acceptable pivots the row with the fewest original nonzeros wins,
//! which keeps fill low for the slack-heavy bases produced by scenario LPs.

/// Relative pivot threshold.
const PIVOT_THRESHOLD: f64 = 0.1;
/// Columns whose largest eliminated entry falls below this are singular.
const SINGULAR_TOL: f64 = 1e-11;
const DROP_TOL: f64 = 1e-14;

const NONE: usize = usize::MAX;

#[derive(Debug, Clone)]
pub(crate) struct LuFactors {
    m: usize,
    /// step -> pivot row
    pivot_row: Vec<usize>,
    /// step -> basis position of the column eliminated at that step
    col_pos: Vec<usize>,
    /// step -> multipliers `(row, l)` for rows pivoted later
    l_cols: Vec<Vec<(usize, f64)>>,
    /// step -> `(earlier step, u)` entries above the diagonal
    u_cols: Vec<Vec<(usize, f64)>>,
    u_diag: Vec<f64>,
}

/// Positions that could not be pivoted, paired with the rows left over.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub positions: Vec<usize>,
    pub rows: Vec<usize>,
}

impl LuFactors {
    /// Factorizes the `m × m` matrix whose column `k` is `cols[k]`.
    pub(crate) fn factorize(m: usize, cols: &[&[(usize, f64)]]) -> Result<Self, Singular> {
        debug_assert_eq!(cols.len(), m);
        let mut row_count = vec![0usize; m];
        for col in cols {
            for &(r, _) in col.iter() {
                row_count[r] += 1;
            }
        }
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by_key(|&k| (cols[k].len(), k));

        let mut lu = LuFactors {
            m,
            pivot_row: Vec::with_capacity(m),
            col_pos: Vec::with_capacity(m),
            l_cols: Vec::with_capacity(m),
            u_cols: Vec::with_capacity(m),
            u_diag: Vec::with_capacity(m),
        };
        let mut row_step = vec![NONE; m];
        let mut work = vec![0.0f64; m];
        let mut in_pattern = vec![false; m];
        let mut pattern: Vec<usize> = Vec::new();
        let mut visited = vec![0u32; m];
        let mut generation = 0u32;
        let mut topo: Vec<usize> = Vec::new();
        let mut stack: Vec<(usize, usize)> = Vec::new();
        let mut failed: Vec<usize> = Vec::new();

        for &pos in &order {
            let col = cols[pos];
            generation += 1;
            topo.clear();
            // Depth-first reach over already-eliminated steps.
            for &(r, _) in col.iter() {
                let s = row_step[r];
                if s == NONE || visited[s] == generation {
                    continue;
                }
                visited[s] = generation;
                stack.push((s, 0));
                while let Some(top) = stack.last_mut() {
                    let node = top.0;
                    let entries = &lu.l_cols[node];
                    let mut child = None;
                    while top.1 < entries.len() {
                        let cs = row_step[entries[top.1].0];
                        top.1 += 1;
                        if cs != NONE && visited[cs] != generation {
                            child = Some(cs);
                            break;
                        }
                    }
                    match child {
                        Some(cs) => {
                            visited[cs] = generation;
                            stack.push((cs, 0));
                        }
                        None => {
                            topo.push(node);
                            stack.pop();
                        }
                    }
                }
            }

            for &(r, v) in col.iter() {
                if !in_pattern[r] {
                    in_pattern[r] = true;
                    pattern.push(r);
                }
                work[r] += v;
            }
            for &s in topo.iter().rev() {
                let xs = work[lu.pivot_row[s]];
                if xs == 0.0 {
                    continue;
                }
                for &(r, l) in &lu.l_cols[s] {
                    if !in_pattern[r] {
                        in_pattern[r] = true;
                        pattern.push(r);
                    }
                    work[r] -= l * xs;
                }
            }

            let mut max_abs = 0.0f64;
            for &r in &pattern {
                if row_step[r] == NONE {
                    max_abs = max_abs.max(work[r].abs());
                }
            }
            if max_abs < SINGULAR_TOL {
                failed.push(pos);
            } else {
                let mut best = NONE;
                for &r in &pattern {
                    if row_step[r] != NONE {
                        continue;
                    }
                    let v = work[r].abs();
                    if v < PIVOT_THRESHOLD * max_abs {
                        continue;
                    }
                    if best == NONE {
                        best = r;
                        continue;
                    }
                    let (bc, rc) = (row_count[best], row_count[r]);
                    let bv = work[best].abs();
                    if rc < bc || (rc == bc && (v > bv || (v == bv && r < best))) {
                        best = r;
                    }
                }
                let step = lu.pivot_row.len();
                let diag = work[best];
                let mut l_col = Vec::new();
                let mut u_col = Vec::new();
                for &r in &pattern {
                    let v = work[r];
                    if r == best || v.abs() <= DROP_TOL {
                        continue;
                    }
                    if row_step[r] == NONE {
                        l_col.push((r, v / diag));
                    } else {
                        u_col.push((row_step[r], v));
                    }
                }
                l_col.sort_by_key(|&(r, _)| r);
                u_col.sort_by_key(|&(s, _)| s);
                row_step[best] = step;
                lu.pivot_row.push(best);
                lu.col_pos.push(pos);
                lu.l_cols.push(l_col);
                lu.u_cols.push(u_col);
                lu.u_diag.push(diag);
            }
            for &r in &pattern {
                work[r] = 0.0;
                in_pattern[r] = false;
            }
            pattern.clear();
        }

        if failed.is_empty() {
            Ok(lu)
        } else {
            let rows = (0..m).filter(|&r| row_step[r] == NONE).collect();
            Err(Singular {
                positions: failed,
                rows,
            })
        }
    }

    /// Solves `B x = b`. `b` is indexed by row and is overwritten; the
    /// solution is written to `out`, indexed by basis position.
    pub(crate) fn solve(&self, b: &mut [f64], out: &mut [f64]) {
        for k in 0..self.m {
            let x = b[self.pivot_row[k]];
            if x != 0.0 {
                for &(r, l) in &self.l_cols[k] {
                    b[r] -= l * x;
                }
            }
        }
        for k in (0..self.m).rev() {
            let z = b[self.pivot_row[k]] / self.u_diag[k];
            if z != 0.0 {
                for &(s, u) in &self.u_cols[k] {
                    b[self.pivot_row[s]] -= u * z;
                }
            }
            out[self.col_pos[k]] = z;
        }
    }

    /// Solves `Bᵀ y = c`. `c` is indexed by basis position; `y` by row.
    /// `scratch` must have length `m`.
    pub(crate) fn solve_transpose(&self, c: &[f64], y: &mut [f64], scratch: &mut [f64]) {
        let g = scratch;
        for k in 0..self.m {
            let mut s = c[self.col_pos[k]];
            for &(st, u) in &self.u_cols[k] {
                s -= u * g[st];
            }
            g[k] = s / self.u_diag[k];
        }
        for k in (0..self.m).rev() {
            let mut s = g[k];
            for &(r, l) in &self.l_cols[k] {
                s -= l * y[r];
            }
            y[self.pivot_row[k]] = s;
        }
    }
}
