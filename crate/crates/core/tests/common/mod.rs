//! Shared test fixtures: random polynomial Lagrangians on `TR^n` and an ordinary
//! Euler-Lagrange oracle that differentiates them with hyper-dual numbers.
#![allow(dead_code)]

use std::ops::{Add, Mul};
use std::sync::Arc;

use algebromech::algebroid::tangent_bundle;
use algebromech::lagrangian::LagrangianModel;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// `sum coef * z^exps` over `z = (q, q_dot)`.
#[derive(Debug, Clone)]
pub struct Polynomial {
    pub n: usize,
    pub terms: Vec<(f64, Vec<u32>)>,
}

impl Polynomial {
    /// Regular by construction: a kinetic term `q_dot^T A q_dot / 2` with `A` near the
    /// identity plus small cubic and quartic couplings and a polynomial potential.
    pub fn random<R: Rng>(rng: &mut R, n: usize) -> Self {
        let mut terms = Vec::new();
        let mono = |pairs: &[(usize, u32)]| {
            let mut e = vec![0u32; 2 * n];
            for &(i, p) in pairs {
                e[i] += p;
            }
            e
        };
        for i in 0..n {
            terms.push((0.5 + rng.random_range(0.0..0.2), mono(&[(n + i, 2)])));
            for j in i + 1..n {
                terms.push((rng.random_range(-0.05..0.05), mono(&[(n + i, 1), (n + j, 1)])));
            }
        }
        for _ in 0..(2 * n) {
            let (i, j, k) = (rng.random_range(0..n), rng.random_range(0..n), rng.random_range(0..n));
            terms.push((rng.random_range(-0.05..0.05), mono(&[(n + i, 1), (n + j, 1), (k, 1)])));
            terms.push((rng.random_range(-0.3..0.3), mono(&[(n + i, 1), (j, 1)])));
            terms.push((rng.random_range(-0.3..0.3), mono(&[(n + i, 1), (j, 1), (k, 1)])));
            terms.push((rng.random_range(-0.5..0.5), mono(&[(i, 2), (j, 1)])));
            terms.push((rng.random_range(0.0..0.1), mono(&[(i, 2), (j, 2)])));
            terms.push((rng.random_range(-0.02..0.02), mono(&[(n + i, 2), (j, 2)])));
        }
        Polynomial { n, terms }
    }

    fn eval_generic<T>(&self, z: &[T], one: T) -> T
    where
        T: Copy + Add<Output = T> + Mul<Output = T> + Mul<f64, Output = T>,
    {
        let mut acc = one * 0.0;
        for (c, e) in &self.terms {
            let mut m = one * *c;
            for (k, &p) in e.iter().enumerate() {
                for _ in 0..p {
                    m = m * z[k];
                }
            }
            acc = acc + m;
        }
        acc
    }

    pub fn eval(&self, q: &DVector<f64>, qd: &DVector<f64>) -> f64 {
        let z: Vec<f64> = q.iter().chain(qd.iter()).copied().collect();
        self.eval_generic(&z, 1.0)
    }

    /// Partial derivative of the polynomial with respect to `z_k`, term by term.
    pub fn derivative(&self, k: usize) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .filter(|(_, e)| e[k] > 0)
            .map(|(c, e)| {
                let mut e = e.clone();
                let p = e[k];
                e[k] -= 1;
                (c * p as f64, e)
            })
            .collect();
        Polynomial { n: self.n, terms }
    }

    /// Model with analytic derivatives from symbolic differentiation of the monomials.
    pub fn model(&self) -> LagrangianModel {
        let n = self.n;
        let tq = Arc::new(tangent_bundle(n).unwrap());
        let d1: Vec<Polynomial> = (0..2 * n).map(|k| self.derivative(k)).collect();
        let d2: Vec<Vec<Polynomial>> = d1
            .iter()
            .map(|d| (0..2 * n).map(|k| d.derivative(k)).collect())
            .collect();
        let (p0, d1q, d1x, d2a, d2b) = (self.clone(), d1.clone(), d1, d2.clone(), d2);
        LagrangianModel::builder("polynomial", tq, move |q, qd| p0.eval(q, qd))
            .grad_q(move |q, qd| DVector::from_fn(n, |i, _| d1q[i].eval(q, qd)))
            .grad_xi(move |q, qd| DVector::from_fn(n, |i, _| d1x[n + i].eval(q, qd)))
            .hess_xi_xi(move |q, qd| DMatrix::from_fn(n, n, |i, j| d2a[n + i][n + j].eval(q, qd)))
            .hess_xi_q(move |q, qd| DMatrix::from_fn(n, n, |i, j| d2b[n + i][j].eval(q, qd)))
            .build()
    }
}

/// `a + b e1 + c e2 + d e1 e2` with `e1^2 = e2^2 = 0`.
#[derive(Debug, Clone, Copy)]
struct HyperDual(f64, f64, f64, f64);

impl Add for HyperDual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        HyperDual(self.0 + o.0, self.1 + o.1, self.2 + o.2, self.3 + o.3)
    }
}

impl Mul for HyperDual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        HyperDual(
            self.0 * o.0,
            self.0 * o.1 + self.1 * o.0,
            self.0 * o.2 + self.2 * o.0,
            self.0 * o.3 + self.1 * o.2 + self.2 * o.1 + self.3 * o.0,
        )
    }
}

impl Mul<f64> for HyperDual {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        HyperDual(self.0 * s, self.1 * s, self.2 * s, self.3 * s)
    }
}

/// Exact `dL/dz_a` and `d^2L/dz_a dz_b` of a polynomial by hyper-dual evaluation.
fn partials(p: &Polynomial, z: &[f64], a: usize, b: usize) -> (f64, f64) {
    let hz: Vec<HyperDual> = z
        .iter()
        .enumerate()
        .map(|(k, &x)| HyperDual(x, if k == a { 1.0 } else { 0.0 }, if k == b { 1.0 } else { 0.0 }, 0.0))
        .collect();
    let r = p.eval_generic(&hz, HyperDual(1.0, 0.0, 0.0, 0.0));
    (r.1, r.3)
}

/// `q_ddot` of the ordinary Euler-Lagrange equations
/// `L_{q_dot q_dot} q_ddot = L_q - L_{q_dot q} q_dot`, solved by Gaussian elimination
/// with partial pivoting.
pub fn euler_lagrange_accel(p: &Polynomial, q: &[f64], qd: &[f64]) -> Vec<f64> {
    let n = p.n;
    let z: Vec<f64> = q.iter().chain(qd.iter()).copied().collect();
    let mut a = vec![vec![0.0; n + 1]; n];
    for i in 0..n {
        let (lq, _) = partials(p, &z, i, i);
        let mut rhs = lq;
        for j in 0..n {
            a[i][j] = partials(p, &z, n + i, n + j).1;
            rhs -= partials(p, &z, n + i, j).1 * qd[j];
        }
        a[i][n] = rhs;
    }
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap();
        a.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..=n {
                a[r][c] -= f * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][n] - s) / a[i][i];
    }
    x
}

pub fn dv(x: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(x)
}
