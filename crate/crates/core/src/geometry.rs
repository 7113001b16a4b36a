//! Membership oracles for convex bodies, the pencil construction and query
//! accounting.
//!
//! A body knows a center `c` with `B(c, r) ⊆ K ⊆ B(c, R)`. Most bodies used
//! here are centered at the origin; boxes such as `[0,1]^n` are not, and the
//! volume pipeline translates them before building the pencil.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::GeometryError;

pub const CONDITION_CAP: f64 = 1e8;

/// Atomic membership-query counter shared by all clones of a body.
#[derive(Debug, Default)]
pub struct QueryCounter(AtomicU64);

impl QueryCounter {
    pub fn count(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }

    fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }
}

#[derive(Debug, Clone)]
pub enum Shape {
    Ball { radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// Rows of `a` (m×n) with `a x ≤ b`.
    Halfspaces { a: DMatrix<f64>, b: Vec<f64> },
    Pencil { base: Arc<ConvexBody>, two_d: f64 },
    Affine { base: Arc<ConvexBody>, s: DMatrix<f64>, s_inv: DMatrix<f64>, shift: Vec<f64> },
}

#[derive(Debug, Clone)]
pub struct ConvexBody {
    n: usize,
    r: f64,
    big_r: f64,
    center: Vec<f64>,
    shape: Shape,
    counter: Arc<QueryCounter>,
}

impl ConvexBody {
    fn build(n: usize, r: f64, big_r: f64, center: Vec<f64>, shape: Shape) -> Result<Self, GeometryError> {
        if n == 0 {
            return Err(GeometryError::InvalidBody("dimension must be positive".into()));
        }
        if !(r > 0.0 && r.is_finite()) {
            return Err(GeometryError::InvalidBody(format!("inner radius must be positive, got {r}")));
        }
        if !(big_r >= r && big_r.is_finite()) {
            return Err(GeometryError::InvalidBody(format!("outer radius {big_r} must be ≥ inner radius {r}")));
        }
        if center.len() != n || center.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::InvalidBody("center must be a finite n-vector".into()));
        }
        Ok(Self { n, r, big_r, center, shape, counter: Arc::new(QueryCounter::default()) })
    }

    /// Ball of radius `radius` around `center` (origin when `None`).
    pub fn ball(n: usize, radius: f64, center: Option<Vec<f64>>) -> Result<Self, GeometryError> {
        let center = center.unwrap_or_else(|| vec![0.0; n]);
        Self::build(n, radius, radius, center, Shape::Ball { radius })
    }

    pub fn unit_ball(n: usize) -> Self {
        Self::ball(n, 1.0, None).expect("unit ball is valid")
    }

    /// Axis-aligned box `⨉[lo_i, hi_i]`, radii taken about its midpoint.
    pub fn axis_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() {
            return Err(GeometryError::InvalidBody("lo and hi lengths differ".into()));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(GeometryError::InvalidBody("box needs lo < hi in every coordinate".into()));
        }
        let n = lo.len();
        let center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
        let r = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (h - l)).fold(f64::INFINITY, f64::min);
        let big_r = lo.iter().zip(&hi).map(|(l, h)| (0.5 * (h - l)).powi(2)).sum::<f64>().sqrt();
        Self::build(n, r, big_r, center, Shape::Box { lo, hi })
    }

    pub fn cube(n: usize, lo: f64, hi: f64) -> Result<Self, GeometryError> {
        Self::axis_box(vec![lo; n], vec![hi; n])
    }

    /// `{x : a x ≤ b}` with caller-supplied radii about `center`.
    ///
    /// The inner radius is checked against the facet distances; the outer
    /// radius cannot be verified from the inequalities alone and is trusted.
    pub fn halfspaces(
        a: DMatrix<f64>,
        b: Vec<f64>,
        r: f64,
        big_r: f64,
        center: Option<Vec<f64>>,
    ) -> Result<Self, GeometryError> {
        let n = a.ncols();
        if a.nrows() != b.len() || a.nrows() == 0 {
            return Err(GeometryError::InvalidBody("A must be m×n with m = len(b) > 0".into()));
        }
        let center = center.unwrap_or_else(|| vec![0.0; n]);
        if center.len() != n {
            return Err(GeometryError::InvalidBody("center must be a finite n-vector".into()));
        }
        for i in 0..a.nrows() {
            let row = a.row(i);
            let norm = row.norm();
            if norm == 0.0 {
                return Err(GeometryError::InvalidBody(format!("row {i} of A is zero")));
            }
            let slack = b[i] - row.iter().zip(&center).map(|(x, y)| x * y).sum::<f64>();
            if slack / norm < r * (1.0 - 1e-12) {
                return Err(GeometryError::InvalidBody(format!(
                    "inner ball of radius {r} crosses facet {i} (distance {:.6})",
                    slack / norm
                )));
            }
        }
        Self::build(n, r, big_r, center, Shape::Halfspaces { a, b })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn inner_radius(&self) -> f64 {
        self.r
    }

    pub fn outer_radius(&self) -> f64 {
        self.big_r
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    /// Queries made against this body (not counting nested bodies).
    pub fn queries(&self) -> u64 {
        self.counter.count()
    }

    pub fn counter(&self) -> Arc<QueryCounter> {
        Arc::clone(&self.counter)
    }

    /// For a pencil, the body it was built on.
    pub fn pencil_base(&self) -> Option<&ConvexBody> {
        match &self.shape {
            Shape::Pencil { base, .. } => Some(base),
            _ => None,
        }
    }

    pub fn pencil_length(&self) -> Option<f64> {
        match &self.shape {
            Shape::Pencil { two_d, .. } => Some(*two_d),
            _ => None,
        }
    }

    /// Membership test; counts one query.
    pub fn contains(&self, x: &[f64]) -> Result<bool, GeometryError> {
        if x.len() != self.n {
            return Err(GeometryError::DimensionMismatch { expected: self.n, got: x.len() });
        }
        Ok(self.contains_unchecked(x))
    }

    pub(crate) fn contains_unchecked(&self, x: &[f64]) -> bool {
        self.counter.bump();
        match &self.shape {
            Shape::Ball { radius } => {
                let d2: f64 = x.iter().zip(&self.center).map(|(a, c)| (a - c) * (a - c)).sum();
                d2 <= radius * radius
            }
            Shape::Box { lo, hi } => x.iter().zip(lo.iter().zip(hi)).all(|(v, (l, h))| *l <= *v && *v <= *h),
            Shape::Halfspaces { a, b } => (0..a.nrows()).all(|i| {
                let mut s = 0.0;
                for (j, xj) in x.iter().enumerate() {
                    s += a[(i, j)] * xj;
                }
                s <= b[i]
            }),
            Shape::Pencil { base, two_d } => {
                let x0 = x[0];
                if !(0.0..=*two_d).contains(&x0) {
                    return false;
                }
                let rest = &x[1..];
                let norm2: f64 = rest.iter().map(|v| v * v).sum();
                norm2 <= x0 * x0 && base.contains_unchecked(rest)
            }
            Shape::Affine { base, s_inv, shift, .. } => {
                let n = self.n;
                let mut pre = vec![0.0; n];
                for (i, p) in pre.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for j in 0..n {
                        acc += s_inv[(i, j)] * (x[j] - shift[j]);
                    }
                    *p = acc;
                }
                base.contains_unchecked(&pre)
            }
        }
    }
}

/// Pencil `K' = ([0, 2D] × K) ∩ {x₀ ≥ ‖(x₁..xₙ)‖}` over a base with r = 1
/// centered at the origin.
pub fn make_pencil(base: &ConvexBody, two_d: f64) -> Result<ConvexBody, GeometryError> {
    if (base.r - 1.0).abs() > 1e-12 {
        return Err(GeometryError::BaseNotNormalized(base.r));
    }
    if base.center.iter().any(|c| c.abs() > 1e-12) {
        return Err(GeometryError::InvalidBody("pencil base must be centered at the origin".into()));
    }
    if !(two_d > 0.0 && two_d.is_finite()) {
        return Err(GeometryError::InvalidBody(format!("pencil length must be positive, got {two_d}")));
    }
    let n = base.n + 1;
    let d = 0.5 * two_d;
    // [max(1, D), 2D] × B(0,1) lies inside K'.
    let lo = d.max(1.0).min(two_d);
    let mut center = vec![0.0; n];
    center[0] = 0.5 * (lo + two_d);
    let r = (0.5 * (two_d - lo)).clamp(1e-12, 1.0);
    let big_r = (center[0].powi(2) + base.big_r.powi(2)).sqrt();
    ConvexBody::build(n, r, big_r, center, Shape::Pencil { base: Arc::new(base.clone()), two_d })
}

fn singular_values(s: &DMatrix<f64>) -> (f64, f64) {
    let sv = s.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    (min, max)
}

/// Image `{S x + shift : x ∈ K}`; membership pulls back through `S⁻¹`.
pub fn apply_affine(body: &ConvexBody, s: &DMatrix<f64>, shift: &[f64]) -> Result<ConvexBody, GeometryError> {
    let n = body.n;
    if s.nrows() != n || s.ncols() != n || shift.len() != n {
        return Err(GeometryError::DimensionMismatch { expected: n, got: s.nrows().max(shift.len()) });
    }
    let (smin, smax) = singular_values(s);
    if smin <= 0.0 || !smin.is_finite() {
        return Err(GeometryError::SingularMap);
    }
    let cond = smax / smin;
    if cond > CONDITION_CAP {
        return Err(GeometryError::IllConditioned { cond, cap: CONDITION_CAP });
    }
    let s_inv = s.clone().try_inverse().ok_or(GeometryError::SingularMap)?;
    let c = DVector::from_column_slice(&body.center);
    let new_center: Vec<f64> = (s * c).iter().zip(shift).map(|(a, b)| a + b).collect();
    ConvexBody::build(
        n,
        smin * body.r,
        smax * body.big_r,
        new_center,
        Shape::Affine { base: Arc::new(body.clone()), s: s.clone(), s_inv, shift: shift.to_vec() },
    )
}

/// `|det S|` accumulated through nested affine images.
pub fn affine_determinant(body: &ConvexBody) -> f64 {
    match &body.shape {
        Shape::Affine { base, s, .. } => s.determinant().abs() * affine_determinant(base),
        _ => 1.0,
    }
}

/// Translate and scale so the body has center 0 and r = 1. Returns the new
/// body and the volume factor `r^n` mapping normalized volume back.
pub fn normalize(body: &ConvexBody) -> Result<(ConvexBody, f64), GeometryError> {
    let n = body.n;
    let scale = 1.0 / body.r;
    let s = DMatrix::from_diagonal_element(n, n, scale);
    let shift: Vec<f64> = body.center.iter().map(|c| -scale * c).collect();
    let mut out = apply_affine(body, &s, &shift)?;
    // Exact values; the SVD route would carry rounding.
    out.r = 1.0;
    out.big_r = body.big_r * scale;
    out.center = vec![0.0; n];
    Ok((out, body.r.powi(n as i32)))
}

/// Serializable description of a body.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BodySpec {
    Ball {
        n: usize,
        r: f64,
        #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
        big_r: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    Box {
        n: usize,
        lo: Vec<f64>,
        hi: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r: Option<f64>,
        #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
        big_r: Option<f64>,
    },
    Halfspaces {
        n: usize,
        r: f64,
        #[serde(rename = "R")]
        big_r: f64,
        #[serde(rename = "A")]
        a: Vec<f64>,
        b: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        center: Option<Vec<f64>>,
    },
    Pencil {
        base: std::boxed::Box<BodySpec>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        two_d: Option<f64>,
    },
    Affine {
        base: std::boxed::Box<BodySpec>,
        /// Row-major n×n.
        #[serde(rename = "S")]
        s: Vec<f64>,
        shift: Vec<f64>,
    },
}

impl BodySpec {
    pub fn to_body(&self) -> Result<ConvexBody, GeometryError> {
        let check_r = |body: &ConvexBody, r: Option<f64>, big_r: Option<f64>| -> Result<(), GeometryError> {
            if let Some(r) = r {
                if r > body.r * (1.0 + 1e-12) {
                    return Err(GeometryError::Spec(format!("declared r = {r} exceeds the true inner radius {}", body.r)));
                }
            }
            if let Some(big) = big_r {
                if big < body.big_r * (1.0 - 1e-12) {
                    return Err(GeometryError::Spec(format!("declared R = {big} is below the true outer radius {}", body.big_r)));
                }
            }
            Ok(())
        };
        match self {
            BodySpec::Ball { n, r, big_r, center } => {
                if let Some(big) = big_r {
                    if (big - r).abs() > 1e-12 * r.max(1.0) {
                        return Err(GeometryError::Spec("a ball needs R = r".into()));
                    }
                }
                ConvexBody::ball(*n, *r, center.clone())
            }
            BodySpec::Box { n, lo, hi, r, big_r } => {
                if lo.len() != *n || hi.len() != *n {
                    return Err(GeometryError::Spec("box lo/hi must have n entries".into()));
                }
                let body = ConvexBody::axis_box(lo.clone(), hi.clone())?;
                check_r(&body, *r, *big_r)?;
                Ok(body)
            }
            BodySpec::Halfspaces { n, r, big_r, a, b, center } => {
                if a.len() != b.len() * n {
                    return Err(GeometryError::Spec(format!("A must hold {}×{} entries", b.len(), n)));
                }
                let a = DMatrix::from_row_slice(b.len(), *n, a);
                ConvexBody::halfspaces(a, b.clone(), *r, *big_r, center.clone())
            }
            BodySpec::Pencil { base, two_d } => {
                let base = base.to_body()?;
                let two_d = two_d.unwrap_or(2.0 * base.big_r / base.r);
                make_pencil(&base, two_d)
            }
            BodySpec::Affine { base, s, shift } => {
                let base = base.to_body()?;
                let n = base.n;
                if s.len() != n * n {
                    return Err(GeometryError::Spec(format!("S must hold {n}×{n} entries")));
                }
                apply_affine(&base, &DMatrix::from_row_slice(n, n, s), shift)
            }
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GeometryError> {
        serde_json::from_str(text).map_err(|e| GeometryError::Spec(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contains_examples() {
        let ball = ConvexBody::unit_ball(3);
        assert!(ball.contains(&[0.0, 0.0, 0.0]).unwrap());
        let unit_square = ConvexBody::cube(2, 0.0, 1.0).unwrap();
        assert!(!unit_square.contains(&[0.5, 1.5]).unwrap());
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let h = ConvexBody::halfspaces(a, vec![1.0, 1.0, 1.0], 0.5, 3.0, None).unwrap();
        assert!(h.contains(&[0.4, 0.4]).unwrap());
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let ball = ConvexBody::unit_ball(3);
        assert_eq!(ball.contains(&[0.0, 0.0]), Err(GeometryError::DimensionMismatch { expected: 3, got: 2 }));
    }

    #[test]
    fn pencil_examples() {
        let p = make_pencil(&ConvexBody::unit_ball(2), 4.0).unwrap();
        assert!(p.contains(&[1.0, 0.5, 0.0]).unwrap());
        assert!(!p.contains(&[0.3, 0.5, 0.0]).unwrap());
        assert!(!p.contains(&[4.5, 0.0, 0.0]).unwrap());
    }

    #[test]
    fn pencil_rejects_unnormalized_base() {
        let b = ConvexBody::ball(2, 2.0, None).unwrap();
        assert_eq!(make_pencil(&b, 2.0).unwrap_err(), GeometryError::BaseNotNormalized(2.0));
    }

    #[test]
    fn affine_examples() {
        let ball = ConvexBody::unit_ball(2);
        let scaled = apply_affine(&ball, &DMatrix::from_diagonal_element(2, 2, 2.0), &[0.0, 0.0]).unwrap();
        assert!(scaled.contains(&[1.9, 0.0]).unwrap());
        assert!(!scaled.contains(&[2.1, 0.0]).unwrap());
        assert!((scaled.inner_radius() - 2.0).abs() < 1e-12);

        let sq = ConvexBody::cube(2, 0.0, 1.0).unwrap();
        let (c, s) = (std::f64::consts::FRAC_PI_4.cos(), std::f64::consts::FRAC_PI_4.sin());
        let rot = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
        let img = apply_affine(&sq, &rot, &[0.0, 0.0]).unwrap();
        let p = &rot * DVector::from_column_slice(&[0.5, 0.5]);
        assert!(img.contains(p.as_slice()).unwrap());
    }

    #[test]
    fn affine_rejects_singular_and_ill_conditioned() {
        let ball = ConvexBody::unit_ball(2);
        let sing = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(apply_affine(&ball, &sing, &[0.0, 0.0]).unwrap_err(), GeometryError::SingularMap);
        let ill = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-9]));
        assert!(matches!(apply_affine(&ball, &ill, &[0.0, 0.0]), Err(GeometryError::IllConditioned { .. })));
    }

    #[test]
    fn counter_counts_every_call() {
        let ball = ConvexBody::unit_ball(2);
        for _ in 0..17 {
            ball.contains(&[0.3, 0.1]).unwrap();
        }
        assert_eq!(ball.queries(), 17);
        let clone = ball.clone();
        clone.contains(&[2.0, 0.0]).unwrap();
        assert_eq!(ball.queries(), 18);
    }

    #[test]
    fn normalize_box() {
        let b = ConvexBody::cube(4, 0.0, 1.0).unwrap();
        let (nb, factor) = normalize(&b).unwrap();
        assert!((factor - 0.0625).abs() < 1e-15);
        assert_eq!(nb.inner_radius(), 1.0);
        assert!((nb.outer_radius() - 2.0).abs() < 1e-12);
        assert!(nb.contains(&[0.99, -0.99, 0.0, 0.5]).unwrap());
        assert!(!nb.contains(&[1.01, 0.0, 0.0, 0.0]).unwrap());
    }

    #[test]
    fn spec_roundtrip() {
        let text = r#"{"type":"halfspaces","n":2,"r":0.5,"R":3.0,"A":[1,1,-1,0,0,-1],"b":[1,1,1]}"#;
        let spec = BodySpec::from_json(text).unwrap();
        let body = spec.to_body().unwrap();
        assert!(body.contains(&[0.4, 0.4]).unwrap());
        let back: BodySpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
        assert_eq!(back, spec);
        let bad = r#"{"type":"box","n":2,"lo":[0,0],"hi":[1,1],"r":0.9}"#;
        assert!(BodySpec::from_json(bad).unwrap().to_body().is_err());
    }
}
