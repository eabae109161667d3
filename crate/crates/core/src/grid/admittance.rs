use std::collections::BTreeMap;

use num_complex::Complex64;

use super::Network;
use crate::error::{Error, Result};

/// Bus admittance matrix `Y = G + jB` in compressed-row form.
///
/// Every row stores its diagonal entry, even when it is zero, and columns
/// within a row are sorted. An off-diagonal entry is present exactly when an
/// in-service branch joins the two buses.
#[derive(Clone, Debug)]
pub struct AdmittanceMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<Complex64>,
}

impl AdmittanceMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()]
            .iter()
            .copied()
            .zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.cols[self.row_ptr[i]..self.row_ptr[i + 1]]
            .binary_search(&j)
            .is_ok()
    }

    /// `Y · V` for a complex voltage vector.
    pub fn mul(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, y)| y * v[j]).sum())
            .collect()
    }
}

/// Assemble the bus admittance matrix with the standard pi branch model:
/// series admittance, half the charging at each end, and an off-nominal
/// complex tap `tap·e^{j·shift}` on the from side. Bus shunts are converted
/// from MW/MVAr at 1.0 pu to per-unit on the system base.
pub fn build_admittance(net: &Network) -> Result<AdmittanceMatrix> {
    let n = net.n_bus();
    let mut rows: Vec<BTreeMap<usize, Complex64>> = (0..n)
        .map(|i| {
            let b = &net.buses[i];
            BTreeMap::from([(i, Complex64::new(b.gs, b.bs) / net.base_mva)])
        })
        .collect();
    for (k, br) in net
        .branches
        .iter()
        .enumerate()
        .filter(|(_, b)| b.in_service)
    {
        let z = Complex64::new(br.r, br.x);
        if z.norm_sqr() == 0.0 {
            return Err(Error::Validation(format!("branch {k} has zero impedance")));
        }
        let ys = z.inv();
        let ytt = ys + Complex64::new(0.0, br.b / 2.0);
        let tap = Complex64::from_polar(br.tap, br.shift);
        let yff = ytt / (br.tap * br.tap);
        let yft = -ys / tap.conj();
        let ytf = -ys / tap;
        let (f, t) = (br.from, br.to);
        *rows[f].entry(f).or_default() += yff;
        *rows[t].entry(t).or_default() += ytt;
        *rows[f].entry(t).or_default() += yft;
        *rows[t].entry(f).or_default() += ytf;
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    row_ptr.push(0);
    for row in rows {
        for (j, y) in row {
            cols.push(j);
            vals.push(y);
        }
        row_ptr.push(cols.len());
    }
    Ok(AdmittanceMatrix {
        n,
        row_ptr,
        cols,
        vals,
    })
}
