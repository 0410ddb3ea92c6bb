//! Model domains and their quadrature rules.
//!
//! Every domain is centered: the multiplier origin `x0` is the centroid,
//! `R` is the circumradius about it and `C_Omega = max (x - x0) . nu` over
//! the boundary has a closed form. Coordinates: the interval is `(0, L)` on
//! the first axis, the rectangle is `(0, a) x (0, b)`, the disk is centered
//! at the origin.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{composite, QuadratureRule, Support};

/// A point in the plane; the interval uses only the first coordinate.
pub type Point = [f64; 2];

pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainKind {
    Interval { length: f64 },
    Rectangle { width: f64, height: f64 },
    Disk { radius: f64 },
}

impl DomainKind {
    pub fn label(&self) -> String {
        match *self {
            DomainKind::Interval { length } => format!("interval(L={length})"),
            DomainKind::Rectangle { width, height } => format!("rectangle({width}x{height})"),
            DomainKind::Disk { radius } => format!("disk(rho={radius})"),
        }
    }
}

/// Resolution of the composite Gauss-Legendre rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    /// Gauss points per panel and direction (`q`).
    pub points_per_panel: usize,
    /// Panels per face, per radial direction, and per quarter turn.
    pub panels: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            points_per_panel: 32,
            panels: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainSpec {
    pub kind: DomainKind,
    pub center: Point,
    pub radius: f64,
    pub c_omega: f64,
    pub dimension: usize,
}

impl DomainSpec {
    pub fn new(kind: DomainKind) -> Result<Self> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        let spec = match kind {
            DomainKind::Interval { length } => {
                positive("interval length", length)?;
                DomainSpec {
                    kind,
                    center: [0.5 * length, 0.0],
                    radius: 0.5 * length,
                    c_omega: 0.5 * length,
                    dimension: 1,
                }
            }
            DomainKind::Rectangle { width, height } => {
                positive("rectangle width", width)?;
                positive("rectangle height", height)?;
                DomainSpec {
                    kind,
                    center: [0.5 * width, 0.5 * height],
                    radius: 0.5 * width.hypot(height),
                    c_omega: 0.5 * width.max(height),
                    dimension: 2,
                }
            }
            DomainKind::Disk { radius } => {
                positive("disk radius", radius)?;
                DomainSpec {
                    kind,
                    center: [0.0, 0.0],
                    radius,
                    c_omega: radius,
                    dimension: 2,
                }
            }
        };
        Ok(spec)
    }

    pub fn interval(length: f64) -> Result<Self> {
        Self::new(DomainKind::Interval { length })
    }

    pub fn rectangle(width: f64, height: f64) -> Result<Self> {
        Self::new(DomainKind::Rectangle { width, height })
    }

    pub fn disk(radius: f64) -> Result<Self> {
        Self::new(DomainKind::Disk { radius })
    }

    fn scale(&self) -> f64 {
        self.radius.max(1.0)
    }

    fn tol(&self) -> f64 {
        1e-10 * self.scale()
    }

    /// `m(x) = x - x0`.
    pub fn multiplier(&self, x: Point) -> Point {
        [x[0] - self.center[0], x[1] - self.center[1]]
    }

    /// `|Omega|`.
    pub fn measure(&self) -> f64 {
        match self.kind {
            DomainKind::Interval { length } => length,
            DomainKind::Rectangle { width, height } => width * height,
            DomainKind::Disk { radius } => PI * radius * radius,
        }
    }

    /// `|dOmega|`; the interval boundary is two points of unit mass.
    pub fn boundary_measure(&self) -> f64 {
        match self.kind {
            DomainKind::Interval { .. } => 2.0,
            DomainKind::Rectangle { width, height } => 2.0 * (width + height),
            DomainKind::Disk { radius } => 2.0 * PI * radius,
        }
    }

    pub fn contains_closure(&self, x: Point) -> bool {
        let t = self.tol();
        match self.kind {
            DomainKind::Interval { length } => {
                x[0] >= -t && x[0] <= length + t && x[1].abs() <= t
            }
            DomainKind::Rectangle { width, height } => {
                x[0] >= -t && x[0] <= width + t && x[1] >= -t && x[1] <= height + t
            }
            DomainKind::Disk { radius } => x[0].hypot(x[1]) <= radius + t,
        }
    }

    pub fn check_closure(&self, x: Point) -> Result<()> {
        if self.contains_closure(x) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "point ({}, {}) lies outside the closure of {}",
                x[0],
                x[1],
                self.kind.label()
            )))
        }
    }

    /// Outward unit normal at a boundary point.
    pub fn boundary_normal(&self, x: Point) -> Result<Point> {
        let t = self.tol();
        let off = || {
            Error::Domain(format!(
                "point ({}, {}) is not on the boundary of {}",
                x[0],
                x[1],
                self.kind.label()
            ))
        };
        match self.kind {
            DomainKind::Interval { length } => {
                if x[1].abs() > t {
                    Err(off())
                } else if x[0].abs() <= t {
                    Ok([-1.0, 0.0])
                } else if (x[0] - length).abs() <= t {
                    Ok([1.0, 0.0])
                } else {
                    Err(off())
                }
            }
            DomainKind::Rectangle { width, height } => {
                if !self.contains_closure(x) {
                    return Err(off());
                }
                let faces = [
                    (x[0].abs() <= t, [-1.0, 0.0]),
                    ((x[0] - width).abs() <= t, [1.0, 0.0]),
                    (x[1].abs() <= t, [0.0, -1.0]),
                    ((x[1] - height).abs() <= t, [0.0, 1.0]),
                ];
                let mut hits = faces.iter().filter(|(hit, _)| *hit);
                match (hits.next(), hits.next()) {
                    (Some(&(_, n)), None) => Ok(n),
                    (Some(_), Some(_)) => Err(Error::Domain(format!(
                        "normal undefined at rectangle corner ({}, {})",
                        x[0], x[1]
                    ))),
                    _ => Err(off()),
                }
            }
            DomainKind::Disk { radius } => {
                let r = x[0].hypot(x[1]);
                if (r - radius).abs() <= t {
                    Ok([x[0] / r, x[1] / r])
                } else {
                    Err(off())
                }
            }
        }
    }

    /// Composite Gauss-Legendre panels on each face or arc; the interval
    /// boundary is the exact two-point rule.
    pub fn boundary_quadrature(&self, spec: QuadratureSpec) -> Result<QuadratureRule> {
        let q = spec.points_per_panel;
        let panels = spec.panels;
        if panels == 0 {
            return Err(Error::Config("quadrature needs at least one panel".into()));
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut normals = Vec::new();
        match self.kind {
            DomainKind::Interval { length } => {
                nodes.extend([[0.0, 0.0], [length, 0.0]]);
                weights.extend([1.0, 1.0]);
                normals.extend([[-1.0, 0.0], [1.0, 0.0]]);
            }
            DomainKind::Rectangle { width, height } => {
                if q < 4 {
                    return Err(Error::Config(format!(
                        "boundary quadrature needs q >= 4, got {q}"
                    )));
                }
                let (xs, wx) = composite(0.0, width, q, panels);
                let (ys, wy) = composite(0.0, height, q, panels);
                for (y, w) in ys.iter().zip(&wy) {
                    nodes.push([0.0, *y]);
                    weights.push(*w);
                    normals.push([-1.0, 0.0]);
                }
                for (y, w) in ys.iter().zip(&wy) {
                    nodes.push([width, *y]);
                    weights.push(*w);
                    normals.push([1.0, 0.0]);
                }
                for (x, w) in xs.iter().zip(&wx) {
                    nodes.push([*x, 0.0]);
                    weights.push(*w);
                    normals.push([0.0, -1.0]);
                }
                for (x, w) in xs.iter().zip(&wx) {
                    nodes.push([*x, height]);
                    weights.push(*w);
                    normals.push([0.0, 1.0]);
                }
            }
            DomainKind::Disk { radius } => {
                if q < 4 {
                    return Err(Error::Config(format!(
                        "boundary quadrature needs q >= 4, got {q}"
                    )));
                }
                let (ts, wt) = composite(0.0, 2.0 * PI, q, 4 * panels);
                for (t, w) in ts.iter().zip(&wt) {
                    let n = [t.cos(), t.sin()];
                    nodes.push([radius * n[0], radius * n[1]]);
                    weights.push(radius * w);
                    normals.push(n);
                }
            }
        }
        Ok(QuadratureRule {
            support: Support::Boundary,
            nodes,
            weights,
            normals,
            points_per_panel: q,
            panels,
        })
    }

    /// Tensor Gauss-Legendre rule on the interval and rectangle, polar
    /// tensor rule on the disk.
    pub fn interior_quadrature(&self, spec: QuadratureSpec) -> Result<QuadratureRule> {
        let q = spec.points_per_panel;
        let panels = spec.panels;
        if q == 0 || panels == 0 {
            return Err(Error::Config("quadrature needs q >= 1 and panels >= 1".into()));
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        match self.kind {
            DomainKind::Interval { length } => {
                let (xs, ws) = composite(0.0, length, q, panels);
                nodes.extend(xs.iter().map(|&x| [x, 0.0]));
                weights = ws;
            }
            DomainKind::Rectangle { width, height } => {
                let (xs, wx) = composite(0.0, width, q, panels);
                let (ys, wy) = composite(0.0, height, q, panels);
                for (x, a) in xs.iter().zip(&wx) {
                    for (y, b) in ys.iter().zip(&wy) {
                        nodes.push([*x, *y]);
                        weights.push(a * b);
                    }
                }
            }
            DomainKind::Disk { radius } => {
                let (rs, wr) = composite(0.0, radius, q, panels);
                let (ts, wt) = composite(0.0, 2.0 * PI, q, 4 * panels);
                for (r, a) in rs.iter().zip(&wr) {
                    for (t, b) in ts.iter().zip(&wt) {
                        nodes.push([r * t.cos(), r * t.sin()]);
                        weights.push(r * a * b);
                    }
                }
            }
        }
        Ok(QuadratureRule {
            support: Support::Interior,
            nodes,
            weights,
            normals: Vec::new(),
            points_per_panel: q,
            panels,
        })
    }
}
