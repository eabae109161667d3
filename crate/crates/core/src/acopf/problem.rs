//! Network-specific evaluation of the OPF functions and their derivatives.
//!
//! Sparsity patterns are fixed at construction: every evaluation emits
//! triplet values in the same order, so assembled matrices have the same
//! nonzero structure for any state.

use super::state::{DualState, StateVector, VarLayout};
use crate::error::{Error, Result};
use crate::grid::{build_admittance, Network, Scenario};
use crate::sparse::{CscMatrix, PatternAssembler};

/// One box bound written as an inequality `h_j(y) ≤ 0`:
/// `value − y[var]` for lower bounds, `y[var] − value` for upper bounds.
#[derive(Clone, Copy, Debug)]
pub struct BoxBound {
    pub var: usize,
    pub upper: bool,
    pub value: f64,
}

impl BoxBound {
    fn sign(&self) -> f64 {
        if self.upper {
            1.0
        } else {
            -1.0
        }
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.sign() * (y[self.var] - self.value)
    }
}

#[derive(Clone, Debug)]
struct BusRow {
    g_ii: f64,
    b_ii: f64,
    /// Off-diagonal `(j, G_ij, B_ij)`.
    offdiag: Vec<(usize, f64, f64)>,
}

/// First and second derivative values at one point, in the fixed triplet
/// order of the owning [`OpfProblem`].
#[derive(Clone, Debug)]
pub struct Derivatives {
    pub objective: f64,
    pub grad_f: Vec<f64>,
    /// Power mismatch `g(y)`.
    pub g: Vec<f64>,
    pub jac_vals: Vec<f64>,
    /// Hessian of `f + λᵀg` (upper triangle triplets).
    pub hess_vals: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct OpfProblem<'a> {
    pub net: &'a Network,
    pub layout: VarLayout,
    pub bounds: Vec<BoxBound>,
    rows: Vec<BusRow>,
    gen_bus: Vec<usize>,
    pd: Vec<f64>,
    qd: Vec<f64>,
    jac_rows: Vec<usize>,
    jac_cols: Vec<usize>,
    hess_rows: Vec<usize>,
    hess_cols: Vec<usize>,
}

impl<'a> OpfProblem<'a> {
    pub fn new(net: &'a Network, sc: &Scenario) -> Result<Self> {
        sc.check_dims(net)?;
        if sc.pd.iter().chain(&sc.qd).any(|d| !d.is_finite()) {
            return Err(Error::NonFinite("scenario loads"));
        }
        let ybus = build_admittance(net)?;
        let layout = VarLayout::new(net);
        let nb = net.n_bus();
        let rows: Vec<BusRow> = (0..nb)
            .map(|i| {
                let d = ybus.get(i, i);
                BusRow {
                    g_ii: d.re,
                    b_ii: d.im,
                    offdiag: ybus
                        .row(i)
                        .filter(|&(j, _)| j != i)
                        .map(|(j, y)| (j, y.re, y.im))
                        .collect(),
                }
            })
            .collect();
        let gen_bus: Vec<usize> = (0..net.n_gen()).map(|k| net.online_gen(k).bus).collect();
        let (pd, qd) = sc.bus_demand_pu(net);

        let base = net.base_mva;
        let mut bounds = Vec::with_capacity(2 * (nb + 2 * net.n_gen()));
        for upper in [false, true] {
            for (i, b) in net.buses.iter().enumerate() {
                bounds.push(BoxBound {
                    var: layout.v(i),
                    upper,
                    value: if upper { b.v_max } else { b.v_min },
                });
            }
        }
        for (slot, lo_hi) in [(0usize, 0usize), (0, 1), (1, 0), (1, 1)] {
            for k in 0..net.n_gen() {
                let g = net.online_gen(k);
                let (var, value) = match (slot, lo_hi) {
                    (0, 0) => (layout.pg(k), g.p_min),
                    (0, _) => (layout.pg(k), g.p_max),
                    (_, 0) => (layout.qg(k), g.q_min),
                    _ => (layout.qg(k), g.q_max),
                };
                bounds.push(BoxBound {
                    var,
                    upper: lo_hi == 1,
                    value: value / base,
                });
            }
        }

        let mut p = OpfProblem {
            net,
            layout,
            bounds,
            rows,
            gen_bus,
            pd,
            qd,
            jac_rows: vec![],
            jac_cols: vec![],
            hess_rows: vec![],
            hess_cols: vec![],
        };
        p.build_patterns();
        Ok(p)
    }

    pub fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    pub fn n_eq(&self) -> usize {
        2 * self.layout.nb
    }

    pub fn n_ineq(&self) -> usize {
        self.bounds.len()
    }

    fn build_patterns(&mut self) {
        let l = self.layout.clone();
        let nb = l.nb;
        let (mut jr, mut jc) = (Vec::new(), Vec::new());
        let (mut hr, mut hc) = (Vec::new(), Vec::new());
        let mut push_h = |a: Option<usize>, b: Option<usize>| {
            if let (Some(a), Some(b)) = (a, b) {
                hr.push(a.min(b));
                hc.push(a.max(b));
            }
        };
        for i in 0..nb {
            let mut cols: Vec<usize> = self.rows[i].offdiag.iter().map(|e| e.0).collect();
            cols.push(i);
            cols.sort_unstable();
            for &j in &cols {
                jr.push(i);
                jc.push(l.v(j));
                if let Some(t) = l.theta(j) {
                    jr.push(i);
                    jc.push(t);
                }
                jr.push(nb + i);
                jc.push(l.v(j));
                if let Some(t) = l.theta(j) {
                    jr.push(nb + i);
                    jc.push(t);
                }
            }
            push_h(Some(l.v(i)), Some(l.v(i)));
            for &(j, _, _) in &self.rows[i].offdiag {
                let (vi, vj, ti, tj) = (Some(l.v(i)), Some(l.v(j)), l.theta(i), l.theta(j));
                push_h(vi, vj);
                push_h(vi, ti);
                push_h(vi, tj);
                push_h(vj, ti);
                push_h(vj, tj);
                push_h(ti, ti);
                push_h(tj, tj);
                push_h(ti, tj);
            }
        }
        for (k, &bus) in self.gen_bus.iter().enumerate() {
            jr.push(bus);
            jc.push(l.pg(k));
            jr.push(nb + bus);
            jc.push(l.qg(k));
            push_h(Some(l.pg(k)), Some(l.pg(k)));
        }
        self.jac_rows = jr;
        self.jac_cols = jc;
        self.hess_rows = hr;
        self.hess_cols = hc;
    }

    /// Triplet positions of `∂g/∂y` (rows: mismatch, cols: variables).
    pub fn jacobian_pattern(&self) -> (&[usize], &[usize]) {
        (&self.jac_rows, &self.jac_cols)
    }

    /// Upper-triangle triplet positions of the Lagrangian Hessian.
    pub fn hessian_pattern(&self) -> (&[usize], &[usize]) {
        (&self.hess_rows, &self.hess_cols)
    }

    pub fn to_vars(&self, x: &StateVector) -> Vec<f64> {
        self.layout.to_vars(x)
    }

    pub fn to_state(&self, y: &[f64]) -> StateVector {
        self.layout.to_state(y)
    }

    /// Generation cost ($/h) and its gradient with respect to `y`.
    pub fn objective(&self, y: &[f64]) -> (f64, Vec<f64>) {
        let base = self.net.base_mva;
        let mut grad = vec![0.0; self.n_vars()];
        let mut f = 0.0;
        for k in 0..self.layout.ng {
            let c = self.net.online_gen(k).cost;
            let p_mw = y[self.layout.pg(k)] * base;
            f += c.eval(p_mw);
            grad[self.layout.pg(k)] = base * (2.0 * c.c2 * p_mw + c.c1);
        }
        (f, grad)
    }

    /// Power mismatch `[P_i − Pg_i + Pd_i; Q_i − Qg_i + Qd_i]` in per-unit.
    pub fn mismatch(&self, y: &[f64]) -> Vec<f64> {
        let nb = self.layout.nb;
        let (v, th) = self.voltages(y);
        let mut g = vec![0.0; 2 * nb];
        for i in 0..nb {
            let row = &self.rows[i];
            let mut p = v[i] * v[i] * row.g_ii;
            let mut q = -v[i] * v[i] * row.b_ii;
            for &(j, gij, bij) in &row.offdiag {
                let (s, c) = (th[i] - th[j]).sin_cos();
                let vv = v[i] * v[j];
                p += vv * (gij * c + bij * s);
                q += vv * (gij * s - bij * c);
            }
            g[i] = p + self.pd[i];
            g[nb + i] = q + self.qd[i];
        }
        for (k, &bus) in self.gen_bus.iter().enumerate() {
            g[bus] -= y[self.layout.pg(k)];
            g[nb + bus] -= y[self.layout.qg(k)];
        }
        g
    }

    fn voltages(&self, y: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let nb = self.layout.nb;
        let v = y[..nb].to_vec();
        let th = (0..nb)
            .map(|i| self.layout.theta(i).map_or(0.0, |k| y[k]))
            .collect();
        (v, th)
    }

    pub fn inequality(&self, y: &[f64]) -> Vec<f64> {
        self.bounds.iter().map(|b| b.eval(y)).collect()
    }

    /// Objective, mismatch, constraint Jacobian and Lagrangian Hessian
    /// (`f + λᵀg`; box bounds are linear and add no curvature).
    pub fn derivatives(&self, y: &[f64], lambda: &[f64]) -> Derivatives {
        let nb = self.layout.nb;
        let l = &self.layout;
        let (v, th) = self.voltages(y);
        let (objective, grad_f) = self.objective(y);
        let g = self.mismatch(y);
        let mut jac = Vec::with_capacity(self.jac_rows.len());
        let mut hess = Vec::with_capacity(self.hess_rows.len());
        let base = self.net.base_mva;

        let mut push_h = |a: Option<usize>, b: Option<usize>, val: f64| {
            if a.is_some() && b.is_some() {
                hess.push(val);
            }
        };
        for i in 0..nb {
            let row = &self.rows[i];
            let (lp, lq) = (lambda[i], lambda[nb + i]);
            // sums over neighbours for the diagonal Jacobian entries
            let (mut dp_dvi, mut dp_dti, mut dq_dvi, mut dq_dti) =
                (2.0 * v[i] * row.g_ii, 0.0, -2.0 * v[i] * row.b_ii, 0.0);
            let mut off: Vec<(usize, f64, f64, f64, f64)> = Vec::with_capacity(row.offdiag.len());
            for &(j, gij, bij) in &row.offdiag {
                let (s, c) = (th[i] - th[j]).sin_cos();
                let alpha = gij * c + bij * s;
                let beta = gij * s - bij * c;
                dp_dvi += v[j] * alpha;
                dq_dvi += v[j] * beta;
                dp_dti -= v[i] * v[j] * beta;
                dq_dti += v[i] * v[j] * alpha;
                off.push((
                    j,
                    v[i] * alpha,
                    v[i] * v[j] * beta,
                    v[i] * beta,
                    -v[i] * v[j] * alpha,
                ));
            }
            let mut cols: Vec<usize> = row.offdiag.iter().map(|e| e.0).collect();
            cols.push(i);
            cols.sort_unstable();
            for &j in &cols {
                let (pv, pt, qv, qt) = if j == i {
                    (dp_dvi, dp_dti, dq_dvi, dq_dti)
                } else {
                    let e = off.iter().find(|e| e.0 == j).expect("neighbour");
                    (e.1, e.2, e.3, e.4)
                };
                jac.push(pv);
                if l.theta(j).is_some() {
                    jac.push(pt);
                }
                jac.push(qv);
                if l.theta(j).is_some() {
                    jac.push(qt);
                }
            }

            push_h(Some(0), Some(0), 2.0 * (lp * row.g_ii - lq * row.b_ii));
            for &(j, gij, bij) in &row.offdiag {
                let (s, c) = (th[i] - th[j]).sin_cos();
                let alpha = gij * c + bij * s;
                let beta = gij * s - bij * c;
                let a = lp * alpha + lq * beta;
                let b = -lp * beta + lq * alpha;
                let (vi, vj) = (v[i], v[j]);
                let (ti, tj) = (l.theta(i), l.theta(j));
                let vx = Some(0);
                push_h(vx, vx, a);
                push_h(vx, ti, vj * b);
                push_h(vx, tj, -vj * b);
                push_h(vx, ti, vi * b);
                push_h(vx, tj, -vi * b);
                // (ti, ti) and (tj, tj) land on the diagonal, so the
                // symmetric storage carries the full second derivative
                push_h(ti, ti, -vi * vj * a);
                push_h(tj, tj, -vi * vj * a);
                // off-diagonal (ti, tj) counted once in the upper triangle
                push_h(ti, tj, vi * vj * a);
            }
        }
        for k in 0..self.layout.ng {
            jac.push(-1.0);
            jac.push(-1.0);
            let c2 = self.net.online_gen(k).cost.c2;
            push_h(Some(0), Some(0), 2.0 * c2 * base * base);
        }
        debug_assert_eq!(jac.len(), self.jac_rows.len());
        debug_assert_eq!(hess.len(), self.hess_rows.len());
        Derivatives {
            objective,
            grad_f,
            g,
            jac_vals: jac,
            hess_vals: hess,
        }
    }

    pub fn jacobian_matrix(&self, d: &Derivatives) -> CscMatrix {
        CscMatrix::from_triplets(
            self.n_eq(),
            self.n_vars(),
            &self.jac_rows,
            &self.jac_cols,
            &d.jac_vals,
        )
    }

    /// `Jgᵀ λ`
    pub fn jac_t_mul(&self, d: &Derivatives, lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vars()];
        for ((&r, &c), &v) in self.jac_rows.iter().zip(&self.jac_cols).zip(&d.jac_vals) {
            out[c] += v * lambda[r];
        }
        out
    }

    /// Stacked perturbed KKT residual
    /// `[∇f + Jgᵀλ + Jhᵀμ; g; h + s; s∘μ − barrier]`.
    pub fn kkt_residual(
        &self,
        d: &Derivatives,
        y: &[f64],
        dual: &DualState,
        barrier: f64,
    ) -> Vec<f64> {
        let (nx, ne, ni) = (self.n_vars(), self.n_eq(), self.n_ineq());
        let mut r = Vec::with_capacity(nx + ne + 2 * ni);
        let mut grad = self.jac_t_mul(d, &dual.lambda);
        for (gr, gf) in grad.iter_mut().zip(&d.grad_f) {
            *gr += gf;
        }
        for (b, &z) in self.bounds.iter().zip(&dual.mu) {
            grad[b.var] += b.sign() * z;
        }
        r.extend(grad);
        r.extend_from_slice(&d.g);
        r.extend(
            self.bounds
                .iter()
                .zip(&dual.slacks)
                .map(|(b, s)| b.eval(y) + s),
        );
        r.extend(
            dual.slacks
                .iter()
                .zip(&dual.mu)
                .map(|(s, z)| s * z - barrier),
        );
        r
    }

    /// Jacobian of [`OpfProblem::kkt_residual`] with respect to `(y, λ, μ, s)`.
    pub fn kkt_jacobian(&self, d: &Derivatives, dual: &DualState) -> CscMatrix {
        let (nx, ne, ni) = (self.n_vars(), self.n_eq(), self.n_ineq());
        let (ol, oz, os) = (nx, nx + ne, nx + ne + ni);
        let cap = 2 * self.hess_rows.len() + 2 * self.jac_rows.len() + 6 * ni;
        let (mut r, mut c, mut v) = (
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
            Vec::with_capacity(cap),
        );
        for ((&a, &b), &h) in self.hess_rows.iter().zip(&self.hess_cols).zip(&d.hess_vals) {
            r.push(a);
            c.push(b);
            v.push(h);
            if a != b {
                r.push(b);
                c.push(a);
                v.push(h);
            }
        }
        for ((&row, &col), &jv) in self.jac_rows.iter().zip(&self.jac_cols).zip(&d.jac_vals) {
            // Jgᵀ in the stationarity rows, Jg in the mismatch rows
            r.push(col);
            c.push(ol + row);
            v.push(jv);
            r.push(ol + row);
            c.push(col);
            v.push(jv);
        }
        for (j, b) in self.bounds.iter().enumerate() {
            r.push(b.var);
            c.push(oz + j);
            v.push(b.sign());
            r.push(oz + j);
            c.push(b.var);
            v.push(b.sign());
            r.push(oz + j);
            c.push(os + j);
            v.push(1.0);
            r.push(os + j);
            c.push(oz + j);
            v.push(dual.slacks[j]);
            r.push(os + j);
            c.push(os + j);
            v.push(dual.mu[j]);
        }
        let n = nx + ne + 2 * ni;
        CscMatrix::from_triplets(n, n, &r, &c, &v)
    }

    /// Upper-triangle positions of the condensed Newton matrix
    /// `[H + Σ + δI, Jgᵀ; Jg, −δc I]` of dimension `n_vars + n_eq`.
    /// Order: Hessian triplets, then `Jgᵀ`, then one diagonal per unknown.
    pub fn condensed_pattern(&self) -> PatternAssembler {
        let nx = self.n_vars();
        let n = nx + self.n_eq();
        let mut r: Vec<usize> = self.hess_rows.clone();
        let mut c: Vec<usize> = self.hess_cols.clone();
        r.extend_from_slice(&self.jac_cols);
        c.extend(self.jac_rows.iter().map(|&row| nx + row));
        r.extend(0..n);
        c.extend(0..n);
        PatternAssembler::new(n, n, &r, &c)
    }

    /// Triplet values matching [`OpfProblem::condensed_pattern`].
    pub fn condensed_values(
        &self,
        d: &Derivatives,
        sigma: &[f64],
        delta_x: f64,
        delta_c: f64,
    ) -> Vec<f64> {
        let nx = self.n_vars();
        let mut vals = Vec::with_capacity(d.hess_vals.len() + d.jac_vals.len() + nx + self.n_eq());
        vals.extend_from_slice(&d.hess_vals);
        vals.extend_from_slice(&d.jac_vals);
        vals.extend(sigma.iter().map(|s| s + delta_x));
        vals.extend(std::iter::repeat(-delta_c).take(self.n_eq()));
        vals
    }

    /// Diagonal `Jhᵀ (μ/s) Jh` contribution for box bounds.
    pub fn bound_curvature(&self, dual: &DualState) -> Vec<f64> {
        let mut sigma = vec![0.0; self.n_vars()];
        for ((b, &z), &s) in self.bounds.iter().zip(&dual.mu).zip(&dual.slacks) {
            sigma[b.var] += z / s;
        }
        sigma
    }

    /// `Jhᵀ w` for a vector over the inequalities.
    pub fn bounds_t_mul(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_vars()];
        for (b, &x) in self.bounds.iter().zip(w) {
            out[b.var] += b.sign() * x;
        }
        out
    }

    /// `Jh dy` for a step in the variables.
    pub fn bounds_mul(&self, dy: &[f64]) -> Vec<f64> {
        self.bounds.iter().map(|b| b.sign() * dy[b.var]).collect()
    }
}
