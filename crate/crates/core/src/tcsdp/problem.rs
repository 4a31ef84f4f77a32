use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symeig::dense_sym_eig;
use crate::tcsdp::expr::LinExpr;
use crate::tcsdp::layout::{Layout, PrimalPoint};

/// `coeffs . y = rhs` for equalities, `coeffs . y <= rhs` for inequalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
    pub label: String,
}

impl LinearRow {
    /// Row for `expr = 0` (or `expr <= 0`).
    pub fn from_expr(expr: &LinExpr, label: impl Into<String>) -> Self {
        let c = expr.compressed();
        Self {
            coeffs: c.terms,
            rhs: -c.constant,
            label: label.into(),
        }
    }

    pub fn lhs(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, a)| a * y[i]).sum()
    }

    pub fn residual(&self, y: &[f64]) -> f64 {
        self.lhs(y) - self.rhs
    }
}

/// `y' Q y + c' y` with `Q` stored as upper-triangle triplets (`i <= j`, `Q_ij = Q_ji`).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuadraticObjective {
    pub q: Vec<(usize, usize, f64)>,
    pub c: Vec<(usize, f64)>,
}

impl QuadraticObjective {
    pub fn value(&self, y: &[f64]) -> f64 {
        let mut v = 0.0;
        for &(i, j, q) in &self.q {
            v += if i == j { q * y[i] * y[i] } else { 2.0 * q * y[i] * y[j] };
        }
        v + self.c.iter().map(|&(i, c)| c * y[i]).sum::<f64>()
    }

    /// `2 Q y + c`.
    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; y.len()];
        for &(i, j, q) in &self.q {
            g[i] += 2.0 * q * y[j];
            if i != j {
                g[j] += 2.0 * q * y[i];
            }
        }
        for &(i, c) in &self.c {
            g[i] += c;
        }
        g
    }

    fn max_index(&self) -> Option<usize> {
        self.q
            .iter()
            .map(|&(_, j, _)| j)
            .chain(self.c.iter().map(|&(i, _)| i))
            .max()
    }
}

/// Sparse rows of `L` with `Q = L' L`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveFactor {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl ObjectiveFactor {
    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn apply(&self, y: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(i, a)| a * y[i]).sum())
            .collect()
    }

    pub fn apply_transpose(&self, z: &[f64], n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (r, &zk) in self.rows.iter().zip(z) {
            for &(i, a) in r {
                out[i] += a * zk;
            }
        }
        out
    }
}

/// Trace-constrained SDP: minimize `y'Qy + c'y` over PSD blocks with fixed group traces and linear rows.
///
/// `equalities` ends with one trace row per group; `num_structural` counts the rows before them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TcsdpProblem {
    pub layout: Layout,
    pub objective: QuadraticObjective,
    pub equalities: Vec<LinearRow>,
    pub inequalities: Vec<LinearRow>,
    pub num_structural: usize,
    pub factor: ObjectiveFactor,
}

impl TcsdpProblem {
    /// Validates dimensions, appends the group trace rows and factors `Q`.
    pub fn assemble(
        layout: Layout,
        objective: QuadraticObjective,
        mut equalities: Vec<LinearRow>,
        inequalities: Vec<LinearRow>,
    ) -> Result<Self> {
        let n = layout.len();
        if n == 0 {
            return Err(Error::InvalidInput("empty layout".into()));
        }
        if objective.max_index().is_some_and(|i| i >= n) {
            return Err(Error::InvalidInput("objective references index outside layout".into()));
        }
        for r in equalities.iter().chain(&inequalities) {
            if r.coeffs.iter().any(|&(i, a)| i >= n || !a.is_finite()) || !r.rhs.is_finite() {
                return Err(Error::InvalidInput(format!("row '{}' is malformed", r.label)));
            }
        }
        if objective.q.iter().any(|&(i, j, q)| i > j || !q.is_finite())
            || objective.c.iter().any(|&(_, c)| !c.is_finite())
        {
            return Err(Error::InvalidInput("objective must use finite upper-triangle triplets".into()));
        }
        let num_structural = equalities.len();
        for (g, group) in layout.groups().iter().enumerate() {
            if group.blocks.is_empty() {
                return Err(Error::InvalidInput(format!("group {g} has no blocks")));
            }
            let mut e = LinExpr::zero();
            for &b in &group.blocks {
                e += layout.trace_expr(b);
            }
            e.constant = -group.trace;
            equalities.push(LinearRow::from_expr(&e, format!("trace:{}", group.label)));
        }
        let factor = factor_objective(&objective)?;
        Ok(Self {
            layout,
            objective,
            equalities,
            inequalities,
            num_structural,
            factor,
        })
    }

    pub fn dim(&self) -> usize {
        self.layout.len()
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.value(y)
    }

    pub fn objective_at(&self, p: &PrimalPoint) -> Result<f64> {
        Ok(self.objective.value(&p.to_vec(&self.layout)?))
    }

    pub fn rhs(&self) -> Vec<f64> {
        self.equalities.iter().map(|r| r.rhs).collect()
    }

    pub fn max_equality_residual(&self, y: &[f64]) -> f64 {
        self.equalities.iter().map(|r| r.residual(y).abs()).fold(0.0, f64::max)
    }

    pub fn max_inequality_violation(&self, y: &[f64]) -> f64 {
        self.inequalities.iter().map(|r| r.residual(y).max(0.0)).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Accumulates objective terms and constraint rows against a layout.
#[derive(Debug, Clone, Default)]
pub struct ProblemBuilder {
    pub layout: Layout,
    q: BTreeMap<(usize, usize), f64>,
    c: BTreeMap<usize, f64>,
    equalities: Vec<LinearRow>,
    inequalities: Vec<LinearRow>,
}

impl ProblemBuilder {
    pub fn new(layout: Layout) -> Self {
        Self {
            layout,
            ..Default::default()
        }
    }

    /// Adds `weight * (a . y)^2`; the expression must be homogeneous.
    pub fn add_squared_residual(&mut self, expr: &LinExpr, weight: f64) -> Result<()> {
        if !expr.is_homogeneous() {
            return Err(Error::InvalidInput("squared residual must be homogeneous".into()));
        }
        if weight < 0.0 || !weight.is_finite() {
            return Err(Error::InvalidObjective { min_eig: weight });
        }
        let e = expr.compressed();
        for (a, &(i, ai)) in e.terms.iter().enumerate() {
            for &(j, aj) in &e.terms[a..] {
                let key = if i <= j { (i, j) } else { (j, i) };
                *self.q.entry(key).or_insert(0.0) += weight * ai * aj;
            }
        }
        Ok(())
    }

    pub fn add_squared_norm(&mut self, v: &[LinExpr], weight: f64) -> Result<()> {
        for e in v {
            self.add_squared_residual(e, weight)?;
        }
        Ok(())
    }

    /// Adds the linear part of `expr` to `c`; a constant offset is dropped.
    pub fn add_linear(&mut self, expr: &LinExpr) {
        for &(i, a) in &expr.terms {
            *self.c.entry(i).or_insert(0.0) += a;
        }
    }

    pub fn add_equality(&mut self, expr: &LinExpr, label: impl Into<String>) {
        self.equalities.push(LinearRow::from_expr(expr, label));
    }

    pub fn add_equalities(&mut self, rows: impl IntoIterator<Item = LinearRow>) {
        self.equalities.extend(rows);
    }

    /// `expr <= 0`.
    pub fn add_le(&mut self, expr: &LinExpr, label: impl Into<String>) {
        self.inequalities.push(LinearRow::from_expr(expr, label));
    }

    pub fn add_inequalities(&mut self, rows: impl IntoIterator<Item = LinearRow>) {
        self.inequalities.extend(rows);
    }

    pub fn num_equalities(&self) -> usize {
        self.equalities.len()
    }

    pub fn build(self) -> Result<TcsdpProblem> {
        let objective = QuadraticObjective {
            q: self
                .q
                .into_iter()
                .filter(|&(_, v)| v != 0.0)
                .map(|((i, j), v)| (i, j, v))
                .collect(),
            c: self.c.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        };
        TcsdpProblem::assemble(self.layout, objective, self.equalities, self.inequalities)
    }
}

/// Factors `Q = L'L` by eigendecomposition on each connected component of the support of `Q`.
pub fn factor_objective(obj: &QuadraticObjective) -> Result<ObjectiveFactor> {
    let mut support: Vec<usize> = obj.q.iter().flat_map(|&(i, j, _)| [i, j]).collect();
    support.sort_unstable();
    support.dedup();
    if support.is_empty() {
        return Ok(ObjectiveFactor::default());
    }
    let pos: BTreeMap<usize, usize> = support.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut parent: Vec<usize> = (0..support.len()).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(i, j, _) in &obj.q {
        let (a, b) = (find(&mut parent, pos[&i]), find(&mut parent, pos[&j]));
        if a != b {
            parent[a] = b;
        }
    }
    let mut comps: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for k in 0..support.len() {
        let r = find(&mut parent, k);
        comps.entry(r).or_default().push(k);
    }
    let qmax = obj.q.iter().map(|&(_, _, v)| v.abs()).fold(0.0, f64::max);
    let neg_tol = 1e-9 * qmax.max(1.0);
    let mut rows = Vec::new();
    for members in comps.values() {
        let local: BTreeMap<usize, usize> = members.iter().enumerate().map(|(a, &k)| (k, a)).collect();
        let d = members.len();
        let mut m = DMatrix::<f64>::zeros(d, d);
        for &(i, j, v) in &obj.q {
            if let (Some(&a), Some(&b)) = (local.get(&pos[&i]), local.get(&pos[&j])) {
                m[(a, b)] = v;
                m[(b, a)] = v;
            }
        }
        let eig = dense_sym_eig(m);
        let lmax = eig.values[0].max(0.0);
        if let Some(&min) = eig.values.as_slice().last() {
            if min < -neg_tol {
                return Err(Error::InvalidObjective { min_eig: min });
            }
        }
        let keep_tol = 1e-12 * lmax.max(1e-300);
        for (k, &lam) in eig.values.iter().enumerate() {
            if lam <= keep_tol {
                continue;
            }
            let s = lam.sqrt();
            let v: DVector<f64> = eig.vectors.column(k).into();
            let row: Vec<(usize, f64)> = v
                .iter()
                .enumerate()
                .filter(|(_, x)| x.abs() > 1e-15)
                .map(|(a, &x)| (support[members[a]], s * x))
                .collect();
            rows.push(row);
        }
    }
    Ok(ObjectiveFactor { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_layout() -> Layout {
        let mut l = Layout::new();
        l.add_single_block(2, 1.0, "a").unwrap();
        l.add_free("t");
        l
    }

    #[test]
    fn builder_accumulates_residuals() {
        let l = small_layout();
        let mut b = ProblemBuilder::new(l);
        // (y0 - 2 y4)^2
        b.add_squared_residual(&(LinExpr::var(0) - LinExpr::var(4) * 2.0), 1.0).unwrap();
        b.add_linear(&LinExpr::var(3));
        let p = b.build().unwrap();
        let y = [1.0, 0.0, 0.0, 3.0, 0.25];
        assert!((p.objective_value(&y) - (0.25 + 3.0)).abs() < 1e-14);
        let g = p.objective.gradient(&y);
        assert!((g[0] - 1.0).abs() < 1e-14 && (g[4] + 2.0).abs() < 1e-14 && (g[3] - 1.0).abs() < 1e-14);
        assert_eq!(p.equalities.len(), 1);
        assert_eq!(p.num_structural, 0);
    }

    #[test]
    fn factor_reproduces_quadratic() {
        let l = small_layout();
        let mut b = ProblemBuilder::new(l);
        b.add_squared_residual(&(LinExpr::var(0) + LinExpr::var(3)), 2.0).unwrap();
        b.add_squared_residual(&(LinExpr::var(3) - LinExpr::var(4)), 1.0).unwrap();
        b.add_squared_residual(&LinExpr::var(1), 0.5).unwrap();
        let p = b.build().unwrap();
        assert_eq!(p.factor.rank(), 3);
        let y = [0.3, -1.2, 9.0, 0.7, 2.0];
        let ly = p.factor.apply(&y);
        let via_factor: f64 = ly.iter().map(|v| v * v).sum();
        assert!((via_factor - p.objective_value(&y)).abs() < 1e-12);
    }

    #[test]
    fn rejects_indefinite_objective() {
        let obj = QuadraticObjective {
            q: vec![(0, 0, 1.0), (0, 1, 2.0), (1, 1, 1.0)],
            c: vec![],
        };
        assert!(matches!(factor_objective(&obj), Err(Error::InvalidObjective { .. })));
    }

    #[test]
    fn rejects_out_of_range_rows() {
        let l = small_layout();
        let row = LinearRow {
            coeffs: vec![(99, 1.0)],
            rhs: 0.0,
            label: "bad".into(),
        };
        assert!(TcsdpProblem::assemble(l, QuadraticObjective::default(), vec![row], vec![]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let l = small_layout();
        let mut b = ProblemBuilder::new(l);
        b.add_squared_residual(&LinExpr::var(0), 1.0).unwrap();
        b.add_equality(&(LinExpr::var(1) - LinExpr::constant(0.5)), "x");
        let p = b.build().unwrap();
        let q = TcsdpProblem::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(q.equalities, p.equalities);
        assert_eq!(q.objective, p.objective);
        assert_eq!(q.factor, p.factor);
    }
}
