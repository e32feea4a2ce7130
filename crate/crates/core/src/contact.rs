//! Linear wrench feasibility for a flat rectangular foot and the support polygon.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector2, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::ContactError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FootParams {
    pub friction_coefficient: f64,
    /// Ratio |τ_z| / f_z, in metres.
    pub torsional_friction_coefficient: f64,
    pub foot_half_length: f64,
    pub foot_half_width: f64,
    pub max_normal_force: f64,
    pub pyramid_facets: usize,
}

impl Default for FootParams {
    fn default() -> Self {
        Self {
            friction_coefficient: 0.5,
            torsional_friction_coefficient: 0.01,
            foot_half_length: 0.06,
            foot_half_width: 0.04,
            max_normal_force: 2.0 * crate::model::DEFAULT_MASS * crate::model::DEFAULT_GRAVITY,
            pyramid_facets: 4,
        }
    }
}

impl FootParams {
    pub fn validate(&self) -> Result<(), ContactError> {
        let positive = |field: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ContactError::InvalidFootParams {
                    field,
                    reason: format!("must be positive, got {v}"),
                })
            }
        };
        positive("friction_coefficient", self.friction_coefficient)?;
        positive("foot_half_length", self.foot_half_length)?;
        positive("foot_half_width", self.foot_half_width)?;
        positive("max_normal_force", self.max_normal_force)?;
        if !(self.torsional_friction_coefficient >= 0.0
            && self.torsional_friction_coefficient.is_finite())
        {
            return Err(ContactError::InvalidFootParams {
                field: "torsional_friction_coefficient",
                reason: format!("must be non-negative, got {}", self.torsional_friction_coefficient),
            });
        }
        if self.pyramid_facets < 4 || !self.pyramid_facets.is_multiple_of(2) {
            return Err(ContactError::InvalidFootParams {
                field: "pyramid_facets",
                reason: format!("must be even and at least 4, got {}", self.pyramid_facets),
            });
        }
        Ok(())
    }

    /// Rows per foot per stage.
    pub fn row_count(&self) -> usize {
        self.pyramid_facets + 8
    }

    /// Index of the normal-force lower-bound row; the upper bound follows it.
    pub fn lower_bound_row(&self) -> usize {
        self.pyramid_facets + 6
    }
}

/// `a · [force; torque] ≤ b` for one foot in stance.
///
/// Row order: pyramid facets, CoP (4), torsional (2), normal lower, normal upper.
#[derive(Debug, Clone, PartialEq)]
pub struct StanceConstraintBlock {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl StanceConstraintBlock {
    pub fn is_feasible(&self, wrench: &Vector6<f64>, tol: f64) -> bool {
        self.violation(wrench) <= tol
    }

    /// Largest row violation, zero when feasible.
    pub fn violation(&self, wrench: &Vector6<f64>) -> f64 {
        let lhs = &self.a * wrench;
        lhs.iter()
            .zip(self.b.iter())
            .map(|(l, b)| (l - b).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Same rows with the normal-force bounds replaced.
    pub fn with_normal_bounds(&self, params: &FootParams, lower: f64, upper: f64) -> Self {
        let mut out = self.clone();
        let row = params.lower_bound_row();
        out.b[row] = -lower;
        out.b[row + 1] = upper;
        out
    }
}

pub fn stance_block(params: &FootParams) -> StanceConstraintBlock {
    let n = params.pyramid_facets;
    let rows = params.row_count();
    let mut a = DMatrix::zeros(rows, 6);
    let mut b = DVector::zeros(rows);

    // Facet normals sit between the x/y axes so the pyramid vertices lie on
    // them; facets are inscribed in the exact cone.
    let mu_inner = params.friction_coefficient * (PI / n as f64).cos();
    for j in 0..n {
        let theta = (2 * j + 1) as f64 * PI / n as f64;
        a[(j, 0)] = theta.cos();
        a[(j, 1)] = theta.sin();
        a[(j, 2)] = -mu_inner;
    }

    // CoP = (-τ_y / f_z, τ_x / f_z) inside the rectangle.
    let (hl, hw) = (params.foot_half_length, params.foot_half_width);
    let cop_rows = [(4, -1.0, hl), (4, 1.0, hl), (3, 1.0, hw), (3, -1.0, hw)];
    for (i, &(col, sign, half)) in cop_rows.iter().enumerate() {
        a[(n + i, col)] = sign;
        a[(n + i, 2)] = -half;
    }

    let c = params.torsional_friction_coefficient;
    a[(n + 4, 5)] = 1.0;
    a[(n + 4, 2)] = -c;
    a[(n + 5, 5)] = -1.0;
    a[(n + 5, 2)] = -c;

    a[(n + 6, 2)] = -1.0;
    b[n + 6] = 0.0;
    a[(n + 7, 2)] = 1.0;
    b[n + 7] = params.max_normal_force;

    StanceConstraintBlock { a, b }
}

/// Normal-force bounds for the swing foot at `stage`: zero until the impact stage.
pub fn normal_force_bounds(stage: usize, impact_stage: usize, params: &FootParams) -> (f64, f64) {
    if stage < impact_stage {
        (0.0, 0.0)
    } else {
        (0.0, params.max_normal_force)
    }
}

/// Convex polygon in the transverse plane, counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPolygon {
    vertices: Vec<Vector2<f64>>,
}

impl SupportPolygon {
    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    /// Area centroid.
    pub fn centroid(&self) -> Vector2<f64> {
        let n = self.vertices.len();
        let mut area = 0.0;
        let mut c = Vector2::zeros();
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let cross = p.x * q.y - q.x * p.y;
            area += cross;
            c += (p + q) * cross;
        }
        if area.abs() < 1e-15 {
            return self.vertices.iter().sum::<Vector2<f64>>() / n as f64;
        }
        c / (3.0 * area)
    }

    /// Negative inside, positive outside, Euclidean distance to the boundary.
    pub fn signed_distance(&self, point: &Vector2<f64>) -> f64 {
        let n = self.vertices.len();
        let mut inside = true;
        let mut dist = f64::INFINITY;
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let edge = q - p;
            let rel = point - p;
            if edge.x * rel.y - edge.y * rel.x < 0.0 {
                inside = false;
            }
            let t = (rel.dot(&edge) / edge.norm_squared()).clamp(0.0, 1.0);
            dist = dist.min((rel - edge * t).norm());
        }
        if inside {
            -dist
        } else {
            dist
        }
    }

    pub fn contains(&self, point: &Vector2<f64>) -> bool {
        self.signed_distance(point) <= 0.0
    }
}

/// Convex hull of the foot rectangles centred at each active foot position.
pub fn support_polygon(
    feet: &[Vector3<f64>],
    params: &FootParams,
) -> Result<SupportPolygon, ContactError> {
    if feet.is_empty() {
        return Err(ContactError::NoActiveContacts);
    }
    let (hl, hw) = (params.foot_half_length, params.foot_half_width);
    let mut points: Vec<Vector2<f64>> = feet
        .iter()
        .flat_map(|p| {
            [(-hl, -hw), (hl, -hw), (hl, hw), (-hl, hw)]
                .into_iter()
                .map(move |(dx, dy)| Vector2::new(p.x + dx, p.y + dy))
        })
        .collect();
    Ok(SupportPolygon {
        vertices: convex_hull(&mut points),
    })
}

// Andrew's monotone chain; drops collinear points.
fn convex_hull(points: &mut [Vector2<f64>]) -> Vec<Vector2<f64>> {
    points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    let cross = |o: &Vector2<f64>, a: &Vector2<f64>, b: &Vector2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut hull: Vec<Vector2<f64>> = Vec::with_capacity(points.len() * 2);
    for p in points.iter() {
        while hull.len() >= 2 && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 1e-15 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower_len = hull.len() + 1;
    for p in points.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 1e-15
        {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();
    hull
}
