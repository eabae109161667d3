use super::{minimum_degree, CscMatrix};
use crate::error::{Error, Result};

const NONE: usize = usize::MAX;

/// Pivot counts of a factorization `P A Pᵀ = L D Lᵀ`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

/// Ordering, elimination tree and column counts for one sparsity pattern.
///
/// The input is the upper triangle (diagonal included) of a symmetric
/// matrix. Numeric factorizations reuse this analysis as long as the
/// pattern is unchanged.
#[derive(Clone, Debug)]
pub struct LdlSymbolic {
    n: usize,
    perm: Vec<usize>,
    /// Upper triangle of `P A Pᵀ`.
    permuted: CscMatrix,
    /// Slot in `permuted.vals` for every slot of the input pattern.
    slot_map: Vec<usize>,
    etree: Vec<usize>,
    lp: Vec<usize>,
}

impl LdlSymbolic {
    pub fn new(upper: &CscMatrix) -> Result<Self> {
        if upper.nrows != upper.ncols {
            return Err(Error::Dimension("LDL needs a square matrix".into()));
        }
        let n = upper.ncols;
        if upper.iter().any(|(i, j, _)| i > j) {
            return Err(Error::InvalidArgument(
                "LDL input must be upper triangular".into(),
            ));
        }
        let perm = minimum_degree(upper);
        let mut iperm = vec![0; n];
        for (k, &p) in perm.iter().enumerate() {
            iperm[p] = k;
        }
        let (rows, cols): (Vec<usize>, Vec<usize>) = upper
            .iter()
            .map(|(i, j, _)| {
                let (a, b) = (iperm[i], iperm[j]);
                (a.min(b), a.max(b))
            })
            .unzip();
        let asm = super::PatternAssembler::new(n, n, &rows, &cols);
        // the assembler sorts positions; recover where each input slot landed
        let mut slot_map = vec![0; rows.len()];
        for (k, (&r, &c)) in rows.iter().zip(&cols).enumerate() {
            let range = asm.pattern.col_ptr[c]..asm.pattern.col_ptr[c + 1];
            let off = asm.pattern.row_idx[range.clone()]
                .binary_search(&r)
                .expect("position in pattern");
            slot_map[k] = range.start + off;
        }
        let permuted = asm.pattern;

        let mut etree = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        let mut work = vec![NONE; n];
        for j in 0..n {
            work[j] = j;
            for p in permuted.col_ptr[j]..permuted.col_ptr[j + 1] {
                let mut i = permuted.row_idx[p];
                while work[i] != j {
                    if etree[i] == NONE {
                        etree[i] = j;
                    }
                    lnz[i] += 1;
                    work[i] = j;
                    i = etree[i];
                }
            }
        }
        let mut lp = vec![0; n + 1];
        for i in 0..n {
            lp[i + 1] = lp[i] + lnz[i];
        }
        Ok(LdlSymbolic {
            n,
            perm,
            permuted,
            slot_map,
            etree,
            lp,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Nonzeros in the strictly lower factor `L`.
    pub fn factor_nnz(&self) -> usize {
        self.lp[self.n]
    }

    /// Numeric factorization. `vals` are the values of the input upper
    /// triangle, in the slot order of the pattern passed to [`LdlSymbolic::new`].
    pub fn factor(&self, vals: &[f64]) -> Result<LdlFactor> {
        let n = self.n;
        if vals.len() != self.slot_map.len() {
            return Err(Error::Dimension(format!(
                "expected {} values, got {}",
                self.slot_map.len(),
                vals.len()
            )));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("KKT matrix"));
        }
        let mut ax = vec![0.0; self.permuted.nnz()];
        for (&s, &v) in self.slot_map.iter().zip(vals) {
            ax[s] += v;
        }
        let ap = &self.permuted.col_ptr;
        let ai = &self.permuted.row_idx;

        let nnz_l = self.lp[n];
        let mut li = vec![0usize; nnz_l];
        let mut lx = vec![0.0; nnz_l];
        let mut d = vec![0.0; n];
        let mut dinv = vec![0.0; n];
        let mut next_in_col: Vec<usize> = self.lp[..n].to_vec();
        let mut y_vals = vec![0.0; n];
        let mut y_marked = vec![false; n];
        let mut y_idx: Vec<usize> = Vec::with_capacity(n);
        let mut elim: Vec<usize> = Vec::with_capacity(n);

        for k in 0..n {
            y_idx.clear();
            d[k] = 0.0;
            for p in ap[k]..ap[k + 1] {
                let b = ai[p];
                if b == k {
                    d[k] = ax[p];
                    continue;
                }
                y_vals[b] = ax[p];
                if y_marked[b] {
                    continue;
                }
                // walk the elimination tree to collect the reach of row k
                y_marked[b] = true;
                elim.clear();
                elim.push(b);
                let mut next = self.etree[b];
                while next != NONE && next < k {
                    if y_marked[next] {
                        break;
                    }
                    y_marked[next] = true;
                    elim.push(next);
                    next = self.etree[next];
                }
                y_idx.extend(elim.iter().rev());
            }
            for &c in y_idx.iter().rev() {
                let end = next_in_col[c];
                let yc = y_vals[c];
                for q in self.lp[c]..end {
                    y_vals[li[q]] -= lx[q] * yc;
                }
                li[end] = k;
                lx[end] = yc * dinv[c];
                d[k] -= yc * lx[end];
                next_in_col[c] += 1;
                y_vals[c] = 0.0;
                y_marked[c] = false;
            }
            if d[k] == 0.0 || !d[k].is_finite() {
                return Err(Error::Numerical(format!(
                    "zero or non-finite pivot at step {k}"
                )));
            }
            dinv[k] = 1.0 / d[k];
        }
        Ok(LdlFactor {
            n,
            perm: self.perm.clone(),
            lp: self.lp.clone(),
            li,
            lx,
            d,
            dinv,
        })
    }
}

#[derive(Clone, Debug)]
pub struct LdlFactor {
    n: usize,
    perm: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    d: Vec<f64>,
    dinv: Vec<f64>,
}

impl LdlFactor {
    /// Inertia from the signs of `D`; entries with magnitude at most
    /// `zero_tol` count as zero.
    pub fn inertia(&self, zero_tol: f64) -> Inertia {
        let mut out = Inertia::default();
        for &d in &self.d {
            if d.abs() <= zero_tol {
                out.zero += 1;
            } else if d > 0.0 {
                out.positive += 1;
            } else {
                out.negative += 1;
            }
        }
        out
    }

    pub fn min_abs_pivot(&self) -> f64 {
        self.d.iter().fold(f64::INFINITY, |m, d| m.min(d.abs()))
    }

    pub fn max_abs_pivot(&self) -> f64 {
        self.d.iter().fold(0.0, |m, d| m.max(d.abs()))
    }

    /// Solve `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        let mut x: Vec<f64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..self.n {
            let xi = x[i];
            for q in self.lp[i]..self.lp[i + 1] {
                x[self.li[q]] -= self.lx[q] * xi;
            }
        }
        for (xi, di) in x.iter_mut().zip(&self.dinv) {
            *xi *= di;
        }
        for i in (0..self.n).rev() {
            let mut xi = x[i];
            for q in self.lp[i]..self.lp[i + 1] {
                xi -= self.lx[q] * x[self.li[q]];
            }
            x[i] = xi;
        }
        for (k, &p) in self.perm.iter().enumerate() {
            b[p] = x[k];
        }
    }
}
