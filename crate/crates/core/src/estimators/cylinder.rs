//! Cylinder functionals `F(u) = Fbar(u(h_1), ..., u(h_n))` with `u(h) = <u, h>`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::torus::{Field, TorusGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OuterMap {
    /// `Sum_i a_i x_i`.
    Linear { a: Vec<f64> },
    /// `Sum_ij a_ij x_i x_j + Sum_i b_i x_i`, `a` row-major.
    Quadratic { a: Vec<f64>, b: Vec<f64> },
    /// `Sum_i w_i tanh(s_i x_i)`.
    TanhSum { w: Vec<f64>, s: Vec<f64> },
}

impl OuterMap {
    fn arity_ok(&self, n: usize) -> bool {
        match self {
            OuterMap::Linear { a } => a.len() == n,
            OuterMap::Quadratic { a, b } => a.len() == n * n && b.len() == n,
            OuterMap::TanhSum { w, s } => w.len() == n && s.len() == n,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            OuterMap::Linear { a } => a.iter().zip(x).map(|(a, x)| a * x).sum(),
            OuterMap::Quadratic { a, b } => {
                let n = x.len();
                let mut s: f64 = b.iter().zip(x).map(|(b, x)| b * x).sum();
                for i in 0..n {
                    for j in 0..n {
                        s += a[i * n + j] * x[i] * x[j];
                    }
                }
                s
            }
            OuterMap::TanhSum { w, s } => w.iter().zip(s).zip(x).map(|((w, s), x)| w * (s * x).tanh()).sum(),
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        match self {
            OuterMap::Linear { a } => a.clone(),
            OuterMap::Quadratic { a, b } => {
                let n = x.len();
                (0..n).map(|i| b[i] + (0..n).map(|j| (a[i * n + j] + a[j * n + i]) * x[j]).sum::<f64>()).collect()
            }
            OuterMap::TanhSum { w, s } => w
                .iter()
                .zip(s)
                .zip(x)
                .map(|((w, s), x)| {
                    let c = (s * x).cosh();
                    w * s / (c * c)
                })
                .collect(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            OuterMap::Linear { .. } => "linear",
            OuterMap::Quadratic { .. } => "quadratic",
            OuterMap::TanhSum { .. } => "tanh_sum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CylinderFunctional {
    pub name: String,
    pub tests: Vec<Field>,
    pub outer: OuterMap,
}

impl CylinderFunctional {
    pub fn new(name: impl Into<String>, tests: Vec<Field>, outer: OuterMap) -> Result<Self> {
        if tests.is_empty() {
            return Err(Error::param("a cylinder functional needs at least one test function"));
        }
        if !outer.arity_ok(tests.len()) {
            return Err(Error::param(format!(
                "outer map {} does not match {} test functions",
                outer.label(),
                tests.len()
            )));
        }
        let g = *tests[0].grid();
        for h in &tests {
            g.check_same(h.grid())?;
            h.check_finite()?;
        }
        Ok(Self { name: name.into(), tests, outer })
    }

    /// `F(u) = <u, h>`.
    pub fn linear(h: Field) -> Self {
        Self::new("linear", vec![h], OuterMap::Linear { a: vec![1.0] }).expect("single test function")
    }

    /// `F(u) = <u, h>^2`.
    pub fn quadratic(h: Field) -> Self {
        Self::new("quadratic", vec![h], OuterMap::Quadratic { a: vec![1.0], b: vec![0.0] })
            .expect("single test function")
    }

    /// The functionals used by the shipped experiments: linear, quadratic and a
    /// bounded tanh composition on low modes.
    pub fn shipped(grid: TorusGrid) -> Vec<Self> {
        let h1 = Field::cos_mode(grid, 1, 0, 1.0);
        let h2 = Field::sin_mode(grid, 0, 1, 1.0);
        let h3 = Field::cos_mode(grid, 1, 1, 1.0);
        vec![
            Self::linear(h1.clone()),
            Self::quadratic(h1.clone()),
            Self::new(
                "tanh_sum",
                vec![h1, h2, h3],
                OuterMap::TanhSum { w: vec![1.0, 0.5, 0.5], s: vec![2.0, 2.0, 1.0] },
            )
            .expect("three test functions"),
        ]
    }

    pub fn grid(&self) -> TorusGrid {
        *self.tests[0].grid()
    }

    pub fn projections(&self, u: &Field) -> Result<Vec<f64>> {
        self.tests.iter().map(|h| u.inner(h)).collect()
    }

    pub fn value(&self, u: &Field) -> Result<f64> {
        Ok(self.outer.value(&self.projections(u)?))
    }

    /// `DF(u) = Sum_i d_i Fbar(u(h)) h_i`.
    pub fn derivative(&self, u: &Field) -> Result<Field> {
        let d = self.outer.gradient(&self.projections(u)?);
        let mut out = Field::zeros(self.grid());
        for (di, h) in d.iter().zip(&self.tests) {
            out = out.axpy(*di, h)?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{cell_rng, Domain};
    use crate::torus::smooth_random_field;

    #[test]
    fn derivative_matches_finite_differences() {
        let g = TorusGrid::new(16, 1.0).unwrap();
        let mut fs = CylinderFunctional::shipped(g);
        fs.push(
            CylinderFunctional::new(
                "quad2",
                vec![Field::cos_mode(g, 2, 0, 1.0), Field::sin_mode(g, 1, 1, 1.0)],
                OuterMap::Quadratic { a: vec![1.0, 0.3, -0.2, 2.0], b: vec![0.5, -1.0] },
            )
            .unwrap(),
        );
        for (i, f) in fs.iter().enumerate() {
            let u = smooth_random_field(g, 3.0, &mut cell_rng(1, i as u64, Domain::Test, 0));
            let dir = smooth_random_field(g, 3.0, &mut cell_rng(1, i as u64, Domain::Test, 1));
            let df = f.derivative(&u).unwrap().inner(&dir).unwrap();
            let eps = 1e-5;
            let fd = (f.value(&u.axpy(eps, &dir).unwrap()).unwrap() - f.value(&u.axpy(-eps, &dir).unwrap()).unwrap())
                / (2.0 * eps);
            assert!((df - fd).abs() <= 1e-6 * df.abs().max(1e-3), "{}: {df} vs {fd}", f.name);
        }
    }

    #[test]
    fn linear_derivative_is_test_function() {
        let g = TorusGrid::new(8, 1.0).unwrap();
        let h = Field::cos_mode(g, 1, 2, 0.7);
        let f = CylinderFunctional::linear(h.clone());
        let u = Field::constant(g, 3.0);
        assert_eq!(f.derivative(&u).unwrap().real().as_ref(), h.real().as_ref());
        assert_eq!(f.value(&Field::zeros(g)).unwrap(), 0.0);
        assert!(CylinderFunctional::new("bad", vec![h], OuterMap::Linear { a: vec![1.0, 2.0] }).is_err());
    }
}
