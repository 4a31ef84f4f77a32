use std::collections::BTreeMap;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// Affine expression `sum_k coef_k * y[idx_k] + constant` over the stacked problem vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn var(index: usize) -> Self {
        Self {
            terms: vec![(index, 1.0)],
            constant: 0.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: value,
        }
    }

    pub fn term(index: usize, coef: f64) -> Self {
        Self {
            terms: vec![(index, coef)],
            constant: 0.0,
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        self.constant == 0.0
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms.iter().map(|&(i, _)| i).max()
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, c)| c * y[i]).sum::<f64>() + self.constant
    }

    /// Merges repeated indices and drops zero coefficients; terms end up sorted by index.
    pub fn compressed(&self) -> Self {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(i, c) in &self.terms {
            *acc.entry(i).or_insert(0.0) += c;
        }
        Self {
            terms: acc.into_iter().filter(|&(_, c)| c != 0.0).collect(),
            constant: self.constant,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn without_constant(&self) -> Self {
        Self {
            terms: self.terms.clone(),
            constant: 0.0,
        }
    }

    /// `sum_k w_k * e_k`.
    pub fn weighted_sum<'a>(items: impl IntoIterator<Item = (f64, &'a LinExpr)>) -> Self {
        let mut out = LinExpr::zero();
        for (w, e) in items {
            out += e.scaled(w);
        }
        out
    }
}

impl AddAssign<LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: LinExpr) {
        self.terms.extend(rhs.terms);
        self.constant += rhs.constant;
    }
}

impl AddAssign<&LinExpr> for LinExpr {
    fn add_assign(&mut self, rhs: &LinExpr) {
        self.terms.extend_from_slice(&rhs.terms);
        self.constant += rhs.constant;
    }
}

impl Add for LinExpr {
    type Output = LinExpr;
    fn add(mut self, rhs: LinExpr) -> LinExpr {
        self += rhs;
        self
    }
}

impl Add for &LinExpr {
    type Output = LinExpr;
    fn add(self, rhs: &LinExpr) -> LinExpr {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: LinExpr) -> LinExpr {
        self + (-rhs)
    }
}

impl Sub for &LinExpr {
    type Output = LinExpr;
    fn sub(self, rhs: &LinExpr) -> LinExpr {
        self + &(-rhs)
    }
}

impl Neg for LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Neg for &LinExpr {
    type Output = LinExpr;
    fn neg(self) -> LinExpr {
        self.scaled(-1.0)
    }
}

impl Mul<f64> for LinExpr {
    type Output = LinExpr;
    fn mul(self, s: f64) -> LinExpr {
        self.scaled(s)
    }
}

impl Mul<f64> for &LinExpr {
    type Output = LinExpr;
    fn mul(self, s: f64) -> LinExpr {
        self.scaled(s)
    }
}

/// Three affine expressions treated as a vector.
pub type LinVec3 = [LinExpr; 3];

/// Row-major 3x3 matrix of affine expressions, `m[row][col]`.
pub type LinMat3 = [[LinExpr; 3]; 3];

pub fn vec3_sub(a: &LinVec3, b: &LinVec3) -> LinVec3 {
    [&a[0] - &b[0], &a[1] - &b[1], &a[2] - &b[2]]
}

pub fn vec3_add(a: &LinVec3, b: &LinVec3) -> LinVec3 {
    [&a[0] + &b[0], &a[1] + &b[1], &a[2] + &b[2]]
}

pub fn vec3_scale(a: &LinVec3, s: f64) -> LinVec3 {
    [a[0].scaled(s), a[1].scaled(s), a[2].scaled(s)]
}

/// Constant vector times a unit expression (`k * one`), used to keep residuals homogeneous.
pub fn vec3_const(k: &nalgebra::Vector3<f64>, one: &LinExpr) -> LinVec3 {
    [one.scaled(k[0]), one.scaled(k[1]), one.scaled(k[2])]
}

/// `M * k` for an expression matrix and a constant vector.
pub fn mat3_mul_const_vec(m: &LinMat3, k: &nalgebra::Vector3<f64>) -> LinVec3 {
    std::array::from_fn(|r| LinExpr::weighted_sum((0..3).map(|c| (k[c], &m[r][c]))))
}

/// `K * M` for a constant matrix and an expression matrix.
pub fn const_mat_mul_mat3(k: &nalgebra::Matrix3<f64>, m: &LinMat3) -> LinMat3 {
    std::array::from_fn(|r| {
        std::array::from_fn(|c| LinExpr::weighted_sum((0..3).map(|j| (k[(r, j)], &m[j][c]))))
    })
}

/// `M * K` for an expression matrix and a constant matrix.
pub fn mat3_mul_const_mat(m: &LinMat3, k: &nalgebra::Matrix3<f64>) -> LinMat3 {
    std::array::from_fn(|r| {
        std::array::from_fn(|c| LinExpr::weighted_sum((0..3).map(|j| (k[(j, c)], &m[r][j]))))
    })
}

/// `K * v` for a constant matrix and an expression vector.
pub fn const_mat_mul_vec3(k: &nalgebra::Matrix3<f64>, v: &LinVec3) -> LinVec3 {
    std::array::from_fn(|r| LinExpr::weighted_sum((0..3).map(|j| (k[(r, j)], &v[j]))))
}
