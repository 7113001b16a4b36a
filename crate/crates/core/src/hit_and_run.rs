//! Hit-and-run walk with target density `∝ exp(-a ⟨w, x⟩)` (by default
//! `w = e₀`, the exponential along the pencil axis).

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::WalkError;
use crate::geometry::ConvexBody;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    /// Density coefficient, `a ≥ 0`.
    pub a: f64,
    /// Chord tolerance; `None` means `1e-9·R`.
    pub tol: Option<f64>,
    pub max_bisect: usize,
    /// Density direction `w`; `None` means coordinate 0.
    pub gradient: Option<Vec<f64>>,
    /// Direction preconditioner `L`: directions are `L g / ‖L g‖`. With
    /// `L = T^{1/2}` this is exactly the walk on the rounded image
    /// `T^{-1/2}(K − X̄)`, pulled back to the original coordinates.
    pub precondition: Option<DMatrix<f64>>,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self { a: 0.0, tol: None, max_bisect: 128, gradient: None, precondition: None, seed: 0 }
    }
}

impl WalkConfig {
    pub fn with_a(a: f64) -> Self {
        Self { a, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), WalkError> {
        if !(self.a.is_finite() && self.a >= 0.0) {
            return Err(WalkError::InvalidConfig(format!("density coefficient must be finite and ≥ 0, got {}", self.a)));
        }
        if let Some(t) = self.tol {
            if !(t > 0.0) {
                return Err(WalkError::InvalidConfig(format!("tolerance must be positive, got {t}")));
            }
        }
        if self.max_bisect == 0 {
            return Err(WalkError::InvalidConfig("max_bisect must be positive".into()));
        }
        Ok(())
    }

    fn tol_for(&self, body: &ConvexBody) -> f64 {
        self.tol.unwrap_or(1e-9 * body.outer_radius())
    }

    /// Rate of the exponential density along direction `u`.
    fn rate(&self, u: &[f64]) -> f64 {
        match &self.gradient {
            None => self.a * u[0],
            Some(w) => self.a * w.iter().zip(u).map(|(a, b)| a * b).sum::<f64>(),
        }
    }

    /// Unnormalized log density at `x`.
    pub fn log_density(&self, x: &[f64]) -> f64 {
        match &self.gradient {
            None => -self.a * x[0],
            Some(w) => -self.a * w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>(),
        }
    }
}

/// Uniform direction on the sphere via a normalized Gaussian vector.
pub fn sample_direction(n: usize, rng: &mut Rng) -> Vec<f64> {
    assert!(n >= 1, "direction dimension must be positive");
    loop {
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm >= 1e-12 {
            return g.into_iter().map(|v| v / norm).collect();
        }
    }
}

fn point_on_line(p: &[f64], u: &[f64], t: f64, out: &mut [f64]) {
    for ((o, a), b) in out.iter_mut().zip(p).zip(u) {
        *o = a + t * b;
    }
}

fn boundary(body: &ConvexBody, p: &[f64], u: &[f64], sign: f64, cfg: &WalkConfig, buf: &mut [f64]) -> f64 {
    let tol = cfg.tol_for(body);
    let dist_c: f64 = p.iter().zip(body.center()).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
    let limit = dist_c + body.outer_radius();
    let mut lo = 0.0;
    let mut hi = 0.5 * body.inner_radius();
    loop {
        if hi > limit {
            // Beyond the outer ball: outside without asking the oracle.
            hi = limit + tol;
            break;
        }
        point_on_line(p, u, sign * hi, buf);
        if body.contains_unchecked(buf) {
            lo = hi;
            hi *= 2.0;
        } else {
            break;
        }
    }
    for _ in 0..cfg.max_bisect {
        if hi - lo <= tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        point_on_line(p, u, sign * mid, buf);
        if body.contains_unchecked(buf) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Chord endpoints `(t₋, t₊)` of the line `p + t u` through the body.
/// Both returned endpoints are inside; moving `tol` further is outside.
pub fn chord(body: &ConvexBody, p: &[f64], u: &[f64], cfg: &WalkConfig) -> Result<(f64, f64), WalkError> {
    if !body.contains(p)? {
        return Err(WalkError::StartOutside);
    }
    if u.len() != p.len() {
        return Err(WalkError::Geometry(crate::error::GeometryError::DimensionMismatch {
            expected: p.len(),
            got: u.len(),
        }));
    }
    let mut buf = vec![0.0; p.len()];
    Ok(chord_unchecked(body, p, u, cfg, &mut buf))
}

fn chord_unchecked(body: &ConvexBody, p: &[f64], u: &[f64], cfg: &WalkConfig, buf: &mut [f64]) -> (f64, f64) {
    let plus = boundary(body, p, u, 1.0, cfg, buf);
    let minus = boundary(body, p, u, -1.0, cfg, buf);
    (-minus, plus)
}

/// Draw `t` on `[t₋, t₊]` with density `∝ exp(-a·u0·t)` by inverse CDF.
pub fn sample_exponential_on_chord(a: f64, u0: f64, range: (f64, f64), rng: &mut Rng) -> Result<f64, WalkError> {
    let (tm, tp) = range;
    if !(tm < tp) {
        return Err(WalkError::EmptyRange(tm, tp));
    }
    Ok(sample_rate(a * u0, tm, tp, rng.random::<f64>()))
}

fn sample_rate(c: f64, tm: f64, tp: f64, u: f64) -> f64 {
    let len = tp - tm;
    let cl = c * len;
    if c == 0.0 || cl.abs() < 1e-300 {
        return tm + u * len;
    }
    // Always decay away from the starting end so expm1 cannot overflow.
    let rate = c.abs();
    let s = -(u * (-rate * len).exp_m1()).ln_1p() / rate;
    let s = s.clamp(0.0, len);
    if c > 0.0 {
        tm + s
    } else {
        tp - s
    }
}

/// One hit-and-run step from `p` (assumed inside).
pub fn step(body: &ConvexBody, p: &[f64], cfg: &WalkConfig, rng: &mut Rng) -> Result<Vec<f64>, WalkError> {
    if !body.contains(p)? {
        return Err(WalkError::StartOutside);
    }
    let mut q = p.to_vec();
    let mut buf = vec![0.0; p.len()];
    step_in_place(body, &mut q, cfg, rng, &mut buf);
    Ok(q)
}

/// Step without the membership precondition check (the caller keeps `p`
/// inside by construction). `buf` is scratch of the body's dimension.
pub(crate) fn step_in_place(body: &ConvexBody, p: &mut [f64], cfg: &WalkConfig, rng: &mut Rng, buf: &mut [f64]) {
    let u = match &cfg.precondition {
        None => sample_direction(p.len(), rng),
        Some(l) => loop {
            let g = DVector::from_vec(sample_direction(p.len(), rng));
            let v = l * g;
            let norm = v.norm();
            if norm >= 1e-300 {
                break v.iter().map(|x| x / norm).collect::<Vec<f64>>();
            }
        },
    };
    let (tm, tp) = chord_unchecked(body, p, &u, cfg, buf);
    if tp - tm <= 0.0 {
        return;
    }
    let t = sample_rate(cfg.rate(&u), tm, tp, rng.random::<f64>());
    for (x, d) in p.iter_mut().zip(&u) {
        *x += t * d;
    }
}

/// Run `steps` steps from `start`, returning every visited point.
pub fn trajectory(
    body: &ConvexBody,
    start: &[f64],
    steps: usize,
    cfg: &WalkConfig,
    rng: &mut Rng,
) -> Result<Vec<Vec<f64>>, WalkError> {
    cfg.validate()?;
    if !body.contains(start)? {
        return Err(WalkError::StartOutside);
    }
    let mut p = start.to_vec();
    let mut buf = vec![0.0; p.len()];
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        step_in_place(body, &mut p, cfg, rng, &mut buf);
        out.push(p.clone());
    }
    Ok(out)
}

/// One point per row, comma separated.
pub fn trajectory_csv(points: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for p in points {
        let row: Vec<String> = p.iter().map(|v| format!("{v}")).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

/// Exact reference sampler: uniform proposals in the outer bounding cube,
/// accepted with probability `f(x)/sup f`. Only practical for small n.
pub fn rejection_sample(body: &ConvexBody, cfg: &WalkConfig, rng: &mut Rng, max_tries: usize) -> Result<Vec<f64>, WalkError> {
    let n = body.dim();
    let c = body.center().to_vec();
    let big_r = body.outer_radius();
    // sup of exp(-a<w,x>) over the cube is at the corner minimizing <w,x>.
    let w: Vec<f64> = match &cfg.gradient {
        Some(w) => w.clone(),
        None => {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        }
    };
    let min_lin: f64 = w.iter().zip(&c).map(|(wi, ci)| wi * ci - wi.abs() * big_r).sum();
    let mut x = vec![0.0; n];
    for _ in 0..max_tries {
        for (xi, ci) in x.iter_mut().zip(&c) {
            *xi = ci + big_r * (2.0 * rng.random::<f64>() - 1.0);
        }
        let lin: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        let accept = (-cfg.a * (lin - min_lin)).exp();
        if rng.random::<f64>() <= accept && body.contains(&x)? {
            return Ok(x);
        }
    }
    Err(WalkError::RejectionCap(max_tries))
}
