//! Built-in example problems and the declarative problem description.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::field::poly_field;
use super::manifold::{Chart, ManifoldModel};
use super::problem::{CritH, CriticalSubmanifold, MorseBottProblem, Parameterization};
use super::GeometryError;
use crate::poly::{Monomial, Polynomial};

pub const REGISTRY: &[&str] = &["s2-height", "s2-z2", "t2-cos", "t2-morse", "s1-flat", "model-x1sq-x2sq", "r1-x4"];

fn var(n: usize, i: usize) -> Polynomial {
    Polynomial::var(n, i)
}

fn unit_circle_eq(n: usize, i: usize, j: usize) -> Polynomial {
    &(&var(n, i).powi(2) + &var(n, j).powi(2)) - &Polynomial::constant(n, 1.0)
}

fn e(n: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(n);
    v[i] = 1.0;
    v
}

fn pt(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

fn point_sub(name: &str, p: &[f64], ind_f: usize) -> CriticalSubmanifold {
    CriticalSubmanifold {
        name: name.into(),
        param: Parameterization::Point(pt(p)),
        ind_f,
        h: poly_field(Polynomial::zero(p.len())),
        g0_scale: 1.0,
        crit_h: vec![CritH { name: name.into(), param: vec![], ind_h: 0 }],
    }
}

fn sphere() -> ManifoldModel {
    let c = &(&(&var(3, 0).powi(2) + &var(3, 1).powi(2)) + &var(3, 2).powi(2)) - &Polynomial::constant(3, 1.0);
    ManifoldModel::new("S2", 3, vec![c])
        .expect("valid")
        .with_charts(vec![Chart::Spherical { axis: 2 }, Chart::Spherical { axis: 0 }])
        .with_compact(true)
}

fn torus() -> ManifoldModel {
    ManifoldModel::new("T2", 4, vec![unit_circle_eq(4, 0, 1), unit_circle_eq(4, 2, 3)])
        .expect("valid")
        .with_charts(vec![Chart::TorusAngles { factors: 2 }])
        .with_compact(true)
}

/// Build a registry example by name.
pub fn example(name: &str) -> Result<MorseBottProblem, GeometryError> {
    match name {
        "s2-height" => {
            let subs = vec![point_sub("N", &[0.0, 0.0, 1.0], 2), point_sub("S", &[0.0, 0.0, -1.0], 0)];
            Ok(MorseBottProblem::new(name, sphere(), poly_field(var(3, 2)), subs)?.with_euler(2))
        }
        "s2-z2" => {
            let equator = CriticalSubmanifold {
                name: "equator".into(),
                param: Parameterization::Circle { center: DVector::zeros(3), u: e(3, 0), v: e(3, 1), radius: 1.0 },
                ind_f: 0,
                h: poly_field(var(3, 0)),
                g0_scale: 1.0,
                crit_h: vec![
                    CritH { name: "s".into(), param: vec![0.0], ind_h: 1 },
                    CritH { name: "m".into(), param: vec![0.5], ind_h: 0 },
                ],
            };
            let subs = vec![point_sub("N", &[0.0, 0.0, 1.0], 2), point_sub("S", &[0.0, 0.0, -1.0], 2), equator];
            Ok(MorseBottProblem::new(name, sphere(), poly_field(var(3, 2).powi(2)), subs)?.with_euler(2))
        }
        "t2-cos" => {
            let circle = |nm: &str, x1: f64, ind_f: usize, tag: &str| CriticalSubmanifold {
                name: nm.into(),
                param: Parameterization::Circle { center: pt(&[x1, 0.0, 0.0, 0.0]), u: e(4, 2), v: e(4, 3), radius: 1.0 },
                ind_f,
                h: poly_field(var(4, 2)),
                g0_scale: 1.0,
                crit_h: vec![
                    CritH { name: format!("{tag}-max"), param: vec![0.0], ind_h: 1 },
                    CritH { name: format!("{tag}-min"), param: vec![0.5], ind_h: 0 },
                ],
            };
            let subs = vec![circle("top", 1.0, 1, "top"), circle("bottom", -1.0, 0, "bottom")];
            Ok(MorseBottProblem::new(name, torus(), poly_field(var(4, 0)), subs)?.with_euler(0))
        }
        "t2-morse" => {
            let f = &var(4, 0) + &var(4, 2).scale(0.5);
            let subs = vec![
                point_sub("max", &[1.0, 0.0, 1.0, 0.0], 2),
                point_sub("saddle-a", &[1.0, 0.0, -1.0, 0.0], 1),
                point_sub("saddle-b", &[-1.0, 0.0, 1.0, 0.0], 1),
                point_sub("min", &[-1.0, 0.0, -1.0, 0.0], 0),
            ];
            Ok(MorseBottProblem::new(name, torus(), poly_field(f), subs)?.with_euler(0))
        }
        "s1-flat" => {
            let m = ManifoldModel::new("S1", 2, vec![unit_circle_eq(2, 0, 1)])
                .expect("valid")
                .with_charts(vec![Chart::TorusAngles { factors: 1 }])
                .with_compact(true);
            let circle = CriticalSubmanifold {
                name: "circle".into(),
                param: Parameterization::Circle { center: DVector::zeros(2), u: e(2, 0), v: e(2, 1), radius: 1.0 },
                ind_f: 0,
                h: poly_field(var(2, 0)),
                g0_scale: 1.0,
                crit_h: vec![
                    CritH { name: "max".into(), param: vec![0.0], ind_h: 1 },
                    CritH { name: "min".into(), param: vec![0.5], ind_h: 0 },
                ],
            };
            Ok(MorseBottProblem::new(name, m, poly_field(Polynomial::zero(2)), vec![circle])?.with_euler(0))
        }
        "model-x1sq-x2sq" => {
            let m = ManifoldModel::euclidean("R3", 3).with_charts(vec![Chart::Box { lo: -2.0, hi: 2.0 }]);
            let f = &var(3, 1).powi(2) - &var(3, 2).powi(2);
            let axis = CriticalSubmanifold {
                name: "x0-axis".into(),
                param: Parameterization::Line { origin: DVector::zeros(3), direction: e(3, 0) },
                ind_f: 1,
                h: poly_field(var(3, 0).powi(2)),
                g0_scale: 1.0,
                crit_h: vec![CritH { name: "origin".into(), param: vec![0.0], ind_h: 0 }],
            };
            MorseBottProblem::new(name, m, poly_field(f), vec![axis])
        }
        "r1-x4" => {
            let m = ManifoldModel::euclidean("R1", 1).with_charts(vec![Chart::Box { lo: -2.0, hi: 2.0 }]);
            MorseBottProblem::new(name, m, poly_field(var(1, 0).powi(4)), vec![point_sub("0", &[0.0], 0)])
        }
        _ => Err(GeometryError::UnknownExample(name.into())),
    }
}

/// Declarative problem description (the config-file form).
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProblemSpec {
    pub name: String,
    pub ambient_dim: usize,
    #[serde(default)]
    pub constraints: Vec<Vec<Monomial>>,
    pub f: Vec<Monomial>,
    #[serde(default)]
    pub compact: bool,
    #[serde(default)]
    pub euler: Option<i64>,
    #[serde(default)]
    pub charts: Vec<Chart>,
    pub submanifolds: Vec<SubmanifoldSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SubmanifoldSpec {
    pub name: String,
    pub param: ParamSpec,
    pub ind_f: usize,
    #[serde(default)]
    pub h: Vec<Monomial>,
    #[serde(default = "one")]
    pub g0_scale: f64,
    pub crit_h: Vec<CritHSpec>,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ParamSpec {
    Point { point: Vec<f64> },
    Circle { center: Vec<f64>, u: Vec<f64>, v: Vec<f64>, radius: f64 },
    Line { origin: Vec<f64>, direction: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CritHSpec {
    pub name: String,
    #[serde(default)]
    pub param: Vec<f64>,
    pub ind_h: usize,
}

impl ProblemSpec {
    pub fn build(&self) -> Result<MorseBottProblem, GeometryError> {
        let n = self.ambient_dim;
        if n == 0 {
            return Err(GeometryError::Invalid("ambient_dim must be positive".into()));
        }
        let poly = |terms: &[Monomial]| Polynomial::from_terms(n, terms.to_vec()).map_err(|e| GeometryError::Invalid(e.to_string()));
        let constraints = self.constraints.iter().map(|c| poly(c)).collect::<Result<Vec<_>, _>>()?;
        let manifold = ManifoldModel::new(format!("{}-manifold", self.name), n, constraints)?
            .with_charts(self.charts.clone())
            .with_compact(self.compact);
        let vec_n = |v: &[f64], what: &str| -> Result<DVector<f64>, GeometryError> {
            if v.len() != n {
                return Err(GeometryError::Invalid(format!("{what} has length {}, expected {n}", v.len())));
            }
            Ok(DVector::from_column_slice(v))
        };
        let mut subs = Vec::new();
        for s in &self.submanifolds {
            let param = match &s.param {
                ParamSpec::Point { point } => Parameterization::Point(vec_n(point, "point")?),
                ParamSpec::Circle { center, u, v, radius } => {
                    let (u, v) = (vec_n(u, "u")?, vec_n(v, "v")?);
                    if (u.norm() - 1.0).abs() > 1e-12 || (v.norm() - 1.0).abs() > 1e-12 || u.dot(&v).abs() > 1e-12 {
                        return Err(GeometryError::Invalid(format!("{}: u, v must be orthonormal", s.name)));
                    }
                    Parameterization::Circle { center: vec_n(center, "center")?, u, v, radius: *radius }
                }
                ParamSpec::Line { origin, direction } => {
                    Parameterization::Line { origin: vec_n(origin, "origin")?, direction: vec_n(direction, "direction")? }
                }
            };
            let h = if s.h.is_empty() { Polynomial::zero(n) } else { poly(&s.h)? };
            subs.push(CriticalSubmanifold {
                name: s.name.clone(),
                param,
                ind_f: s.ind_f,
                h: poly_field(h),
                g0_scale: s.g0_scale,
                crit_h: s.crit_h.iter().map(|c| CritH { name: c.name.clone(), param: c.param.clone(), ind_h: c.ind_h }).collect(),
            });
        }
        let mut p = MorseBottProblem::new(self.name.clone(), manifold, poly_field(poly(&self.f)?), subs)?;
        p.euler = self.euler;
        Ok(p)
    }
}
