/// Real sparse matrix in compressed sparse column form. Explicit zeros are
/// kept so that a pattern assembled from the same triplet positions never
/// changes between evaluations.
#[derive(Clone, Debug, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl CscMatrix {
    /// Duplicate positions are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        rows: &[usize],
        cols: &[usize],
        vals: &[f64],
    ) -> Self {
        let asm = PatternAssembler::new(nrows, ncols, rows, cols);
        let mut m = asm.pattern.clone();
        asm.fill(vals, &mut m.vals);
        m
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        match self.row_idx[r.clone()].binary_search(&i) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    /// Iterate `(row, col, value)` in column-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |j| {
            (self.col_ptr[j]..self.col_ptr[j + 1]).map(move |p| (self.row_idx[p], j, self.vals[p]))
        })
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[p]] += self.vals[p] * xj;
            }
        }
        y
    }

    /// `y = A·x` where only the upper triangle of a symmetric `A` is stored.
    pub fn sym_upper_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for (i, j, v) in self.iter() {
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
        y
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for (i, j, v) in self.iter() {
            d[i][j] += v;
        }
        d
    }
}

/// Maps a fixed, ordered list of triplet positions onto CSC value slots.
///
/// Build once from the positions, then call [`PatternAssembler::fill`] with
/// values emitted in the same order on every evaluation.
#[derive(Clone, Debug)]
pub struct PatternAssembler {
    pub pattern: CscMatrix,
    slots: Vec<usize>,
}

impl PatternAssembler {
    pub fn new(nrows: usize, ncols: usize, rows: &[usize], cols: &[usize]) -> Self {
        assert_eq!(rows.len(), cols.len());
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by_key(|&k| (cols[k], rows[k]));
        let mut col_ptr = vec![0; ncols + 1];
        let mut row_idx = Vec::new();
        let mut slots = vec![0; rows.len()];
        let mut last: Option<(usize, usize)> = None;
        for &k in &order {
            let (i, j) = (rows[k], cols[k]);
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            if last != Some((i, j)) {
                row_idx.push(i);
                col_ptr[j + 1] += 1;
                last = Some((i, j));
            }
            slots[k] = row_idx.len() - 1;
        }
        for j in 0..ncols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let nnz = row_idx.len();
        PatternAssembler {
            pattern: CscMatrix {
                nrows,
                ncols,
                col_ptr,
                row_idx,
                vals: vec![0.0; nnz],
            },
            slots,
        }
    }

    pub fn n_triplets(&self) -> usize {
        self.slots.len()
    }

    pub fn fill(&self, vals: &[f64], out: &mut [f64]) {
        assert_eq!(vals.len(), self.slots.len());
        out.iter_mut().for_each(|v| *v = 0.0);
        for (&s, &v) in self.slots.iter().zip(vals) {
            out[s] += v;
        }
    }

    pub fn assemble(&self, vals: &[f64]) -> CscMatrix {
        let mut m = self.pattern.clone();
        self.fill(vals, &mut m.vals);
        m
    }
}
