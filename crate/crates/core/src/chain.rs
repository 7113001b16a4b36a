//! Finite Markov chains: two-level discretizations of hit-and-run, exact
//! stationary laws, conductance, discriminant and mixing diagnostics.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::ChainError;
use crate::geometry::{ConvexBody, Shape};
use crate::linalg::sym_eigen_desc;
use crate::rng::{stream, Rng};

pub const MAX_STATES_1D: usize = 4096;
pub const MAX_STATES_2D: usize = 1024;
pub const MAX_EXHAUSTIVE: usize = 20;
pub const REVERSIBLE_TOL: f64 = 1e-9;
/// Smallest total-variation distance treated as meaningful when comparing
/// against analytic bounds; roughly the accuracy of the stationary solve.
pub const TV_RESOLUTION: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainMeta {
    /// Coarse (jump-target) grid spacing.
    pub eps_coarse: f64,
    /// Fine (state) grid spacing.
    pub eps_fine: f64,
    /// Line discretization spacing.
    pub eps_prime: f64,
    /// Density coefficient on coordinate 0.
    pub a: f64,
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiniteChain {
    pub states: Vec<Vec<f64>>,
    pub p: DMatrix<f64>,
    pub pi: Vec<f64>,
    pub meta: ChainMeta,
}

#[derive(Serialize, Deserialize)]
struct ChainFile {
    states: Vec<Vec<f64>>,
    #[serde(rename = "P")]
    p: Vec<f64>,
    pi: Vec<f64>,
    meta: ChainMeta,
}

impl FiniteChain {
    /// Validate `P` and compute `π`.
    pub fn new(states: Vec<Vec<f64>>, p: DMatrix<f64>, meta: ChainMeta) -> Result<Self, ChainError> {
        check_stochastic(&p)?;
        if states.len() != p.nrows() {
            return Err(ChainError::Input(format!("{} states but P is {}×{}", states.len(), p.nrows(), p.ncols())));
        }
        let pi = stationary(&p)?;
        Ok(Self { states, p, pi, meta })
    }

    /// Reversible chain from a symmetric nonnegative weight matrix:
    /// `P = W / rowsum`, `π ∝ rowsum`.
    pub fn from_weights(w: &DMatrix<f64>) -> Result<Self, ChainError> {
        let d = w.nrows();
        if w.ncols() != d || d == 0 {
            return Err(ChainError::Input("weights must be square and nonempty".into()));
        }
        if w.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(ChainError::Input("weights must be finite and nonnegative".into()));
        }
        if (0..d).any(|i| (0..d).any(|j| (w[(i, j)] - w[(j, i)]).abs() > 1e-14 * w[(i, j)].abs().max(1.0))) {
            return Err(ChainError::Input("weights must be symmetric".into()));
        }
        let rows: Vec<f64> = (0..d).map(|i| w.row(i).sum()).collect();
        if let Some(i) = rows.iter().position(|r| *r <= 0.0) {
            return Err(ChainError::ZeroOutflow(i));
        }
        let total: f64 = rows.iter().sum();
        let p = DMatrix::from_fn(d, d, |i, j| w[(i, j)] / rows[i]);
        let pi = rows.iter().map(|r| r / total).collect();
        let states = (0..d).map(|i| vec![i as f64]).collect();
        Ok(Self { states, p, pi, meta: ChainMeta { kind: "weights".into(), ..ChainMeta::default() } })
    }

    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    /// `max |π_x P_xy − π_y P_yx|`.
    pub fn detailed_balance_residual(&self) -> f64 {
        let d = self.len();
        let mut worst: f64 = 0.0;
        for x in 0..d {
            for y in 0..x {
                worst = worst.max((self.pi[x] * self.p[(x, y)] - self.pi[y] * self.p[(y, x)]).abs());
            }
        }
        worst
    }

    pub fn to_json(&self) -> String {
        let d = self.len();
        let file = ChainFile {
            states: self.states.clone(),
            p: (0..d * d).map(|k| self.p[(k / d, k % d)]).collect(),
            pi: self.pi.clone(),
            meta: self.meta.clone(),
        };
        serde_json::to_string(&file).expect("chain serializes")
    }

    /// Load a chain file; `π` is recomputed and must agree with the file.
    pub fn from_json(text: &str) -> Result<Self, ChainError> {
        let f: ChainFile = serde_json::from_str(text).map_err(|e| ChainError::Input(e.to_string()))?;
        let d = f.pi.len();
        if f.p.len() != d * d {
            return Err(ChainError::Input(format!("P must hold {d}×{d} entries")));
        }
        let p = DMatrix::from_row_slice(d, d, &f.p);
        let chain = Self::new(f.states, p, f.meta)?;
        let gap = chain.pi.iter().zip(&f.pi).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > 1e-8 {
            return Err(ChainError::Input(format!("file pi disagrees with the stationary law by {gap:.3e}")));
        }
        Ok(chain)
    }
}

fn check_stochastic(p: &DMatrix<f64>) -> Result<(), ChainError> {
    let d = p.nrows();
    if p.ncols() != d || d == 0 {
        return Err(ChainError::Input("P must be square and nonempty".into()));
    }
    for i in 0..d {
        if p.row(i).iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(ChainError::Input(format!("row {i} has a negative or non-finite entry")));
        }
        let s = p.row(i).sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(ChainError::Input(format!("row {i} sums to {s}")));
        }
    }
    Ok(())
}

fn l1_residual(pi: &[f64], p: &DMatrix<f64>) -> f64 {
    let d = pi.len();
    (0..d)
        .map(|y| ((0..d).map(|x| pi[x] * p[(x, y)]).sum::<f64>() - pi[y]).abs())
        .sum()
}

/// Stationary law by power iteration on the lazy chain `(I + P)/2` to an
/// l1 residual of 1e-12, then polished until the residual stops shrinking.
/// Falls back to a direct linear solve.
pub fn stationary(p: &DMatrix<f64>) -> Result<Vec<f64>, ChainError> {
    let d = p.nrows();
    let mut pi = vec![1.0 / d as f64; d];
    let mut next = vec![0.0; d];
    let step = |pi: &[f64], next: &mut [f64]| {
        for y in 0..d {
            next[y] = 0.5 * pi[y] + 0.5 * (0..d).map(|x| pi[x] * p[(x, y)]).sum::<f64>();
        }
        let s: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= s;
        }
    };
    for _ in 0..20_000 {
        step(&pi, &mut next);
        std::mem::swap(&mut pi, &mut next);
        let mut res = l1_residual(&pi, p);
        if res <= 1e-12 {
            for _ in 0..200 {
                step(&pi, &mut next);
                let r = l1_residual(&next, p);
                if r >= res {
                    break;
                }
                res = r;
                std::mem::swap(&mut pi, &mut next);
            }
            return Ok(pi);
        }
    }
    stationary_direct(p)
}

/// Solve `π(P − I) = 0`, `Σπ = 1` by LU.
pub fn stationary_direct(p: &DMatrix<f64>) -> Result<Vec<f64>, ChainError> {
    let d = p.nrows();
    let mut a = p.transpose() - DMatrix::identity(d, d);
    for j in 0..d {
        a[(d - 1, j)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(d);
    rhs[d - 1] = 1.0;
    let sol = a.lu().solve(&rhs).ok_or(ChainError::NoConvergence)?;
    if sol.iter().any(|v| *v < -1e-10) {
        return Err(ChainError::NoConvergence);
    }
    let pi: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = pi.iter().sum();
    Ok(pi.into_iter().map(|v| v / s).collect())
}

/// Random reversible chain on `d` states from symmetric weights. A path of
/// edges keeps it connected; `density` is the chance of each other edge.
pub fn random_reversible(d: usize, density: f64, rng: &mut Rng) -> FiniteChain {
    let mut w = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let on = j + 1 == i || i == j || rng.random::<f64>() < density;
            if on {
                let v = rng.random::<f64>() + 0.05;
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
    }
    FiniteChain::from_weights(&w).expect("random weights are valid")
}

fn interval_of(body: &ConvexBody) -> Result<(f64, f64), ChainError> {
    match body.shape() {
        Shape::Box { lo, hi } if body.dim() == 1 => Ok((lo[0], hi[0])),
        Shape::Ball { radius } if body.dim() == 1 => Ok((body.center()[0] - radius, body.center()[0] + radius)),
        _ => Err(ChainError::Input("discretize_1d needs a one-dimensional box or ball".into())),
    }
}

/// Weight `x ↦ exp(-a x)`.
pub fn exponential_weight(a: f64) -> impl Fn(f64) -> f64 {
    move |x| (-a * x).exp()
}

/// `x₀`-marginal of `exp(-a x₀)` on the pencil over the unit n-ball:
/// `∝ min(x₀, 1)^n exp(-a x₀)`.
pub fn pencil_marginal_weight(n: usize, a: f64) -> impl Fn(f64) -> f64 {
    move |x: f64| x.clamp(0.0, 1.0).powi(n as i32) * (-a * x).exp()
}

/// Grid indices `k` with `k·h ∈ [lo, hi]`.
fn grid_range(lo: f64, hi: f64, h: f64) -> (i64, i64) {
    let first = (lo / h - 1e-9).ceil() as i64;
    let last = (hi / h + 1e-9).floor() as i64;
    (first, last)
}

/// Nearest coarse index with ties toward the smaller index.
fn snap(x: f64, coarse: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in coarse.iter().enumerate() {
        let d = (x - c).abs();
        if d < best_d - 1e-12 * (1.0 + d) {
            best = i;
            best_d = d;
        }
    }
    best
}

/// One-dimensional discretized hit-and-run on `interval` with density
/// `exp(-a x)`. Coarse spacing is `√ε`.
pub fn discretize_1d(interval: &ConvexBody, eps: f64, eps_prime: f64, a: f64) -> Result<FiniteChain, ChainError> {
    let (lo, hi) = interval_of(interval)?;
    let mut chain = discretize_1d_weighted(lo, hi, eps, eps_prime, exponential_weight(a))?;
    chain.meta.a = a;
    Ok(chain)
}

/// As [`discretize_1d`] for an arbitrary nonnegative weight on `[lo, hi]`.
///
/// From state `u` the line points `u + kε′` inside `K̄_ε = [x_first − ε/2,
/// x_last + ε/2]` are drawn with probability `∝ f`, snapped to the nearest
/// coarse point, and the walk lands uniformly on the fine states of that
/// coarse cell. In one dimension the line is the whole interval whichever
/// direction is drawn.
pub fn discretize_1d_weighted(
    lo: f64,
    hi: f64,
    eps: f64,
    eps_prime: f64,
    weight: impl Fn(f64) -> f64,
) -> Result<FiniteChain, ChainError> {
    if !(eps > 0.0 && eps_prime > 0.0 && lo < hi) {
        return Err(ChainError::Input("need lo < hi and positive spacings".into()));
    }
    let coarse_h = eps.sqrt();
    if eps_prime > coarse_h * (1.0 + 1e-12) {
        return Err(ChainError::Input(format!("eps_prime {eps_prime} exceeds √eps = {coarse_h}")));
    }
    let (f0, f1) = grid_range(lo, hi, eps);
    if f1 < f0 {
        return Err(ChainError::Input("interval contains no grid point".into()));
    }
    let d = (f1 - f0 + 1) as usize;
    if d > MAX_STATES_1D {
        return Err(ChainError::TooManyStates { count: d, cap: MAX_STATES_1D });
    }
    let states: Vec<f64> = (f0..=f1).map(|k| k as f64 * eps).collect();
    let (c0, c1) = grid_range(lo, hi, coarse_h);
    if c1 < c0 {
        return Err(ChainError::Input("interval contains no coarse grid point".into()));
    }
    let coarse: Vec<f64> = (c0..=c1).map(|k| k as f64 * coarse_h).collect();
    let cell_of: Vec<usize> = states.iter().map(|x| snap(*x, &coarse)).collect();
    let mut cell_size = vec![0usize; coarse.len()];
    for c in &cell_of {
        cell_size[*c] += 1;
    }
    let bar_lo = states[0] - 0.5 * eps;
    let bar_hi = states[d - 1] + 0.5 * eps;

    let mut p = DMatrix::zeros(d, d);
    for (ui, &u) in states.iter().enumerate() {
        let kmin = ((bar_lo - u) / eps_prime - 1e-9).ceil() as i64;
        let kmax = ((bar_hi - u) / eps_prime + 1e-9).floor() as i64;
        let mut mass = vec![0.0; coarse.len()];
        let mut total = 0.0;
        for k in kmin..=kmax {
            let v = u + k as f64 * eps_prime;
            let f = weight(v);
            mass[snap(v, &coarse)] += f;
            total += f;
        }
        if !(total > 0.0) {
            return Err(ChainError::ZeroOutflow(ui));
        }
        for (vi, c) in cell_of.iter().enumerate() {
            p[(ui, vi)] = mass[*c] / total / cell_size[*c] as f64;
        }
    }
    let meta = ChainMeta { eps_coarse: coarse_h, eps_fine: eps, eps_prime, a: 0.0, kind: "hit-and-run-1d".into() };
    FiniteChain::new(states.into_iter().map(|x| vec![x]).collect(), p, meta)
}

/// Two-dimensional discretized hit-and-run with Monte Carlo transition
/// estimates, symmetrized toward the grid-restricted target `π̂ ∝ exp(-a x₀)`.
///
/// The symmetrized flows `(π̂_x P̂_xy + π̂_y P̂_yx)/2` are divided by `π̂_x`
/// and by one global constant (so that no row overflows); the leftover
/// mass stays on the diagonal. `π̂` is then exactly stationary.
pub fn discretize_2d_mc(
    body: &ConvexBody,
    eps: f64,
    eps_prime: f64,
    a: f64,
    samples_per_state: usize,
    seed: u64,
) -> Result<FiniteChain, ChainError> {
    if body.dim() != 2 {
        return Err(ChainError::Input("discretize_2d_mc needs a two-dimensional body".into()));
    }
    if !(eps > 0.0 && eps_prime > 0.0) || samples_per_state == 0 {
        return Err(ChainError::Input("need positive spacings and samples".into()));
    }
    let n = 2.0f64;
    let coarse_h = eps.sqrt() * n.powf(0.25);
    if eps_prime > eps.sqrt() * n.powf(-0.75) * (1.0 + 1e-12) {
        return Err(ChainError::Input("eps_prime exceeds √eps·n^{-3/4}".into()));
    }
    let c = body.center();
    let big_r = body.outer_radius();
    let grid = |h: f64| -> Result<Vec<(i64, i64)>, ChainError> {
        let (i0, i1) = grid_range(c[0] - big_r, c[0] + big_r, h);
        let (j0, j1) = grid_range(c[1] - big_r, c[1] + big_r, h);
        let mut pts = Vec::new();
        for i in i0..=i1 {
            for j in j0..=j1 {
                if body.contains(&[i as f64 * h, j as f64 * h])? {
                    pts.push((i, j));
                }
            }
        }
        Ok(pts)
    };
    let fine = grid(eps)?;
    let coarse = grid(coarse_h)?;
    let d = fine.len();
    if d > MAX_STATES_2D {
        return Err(ChainError::TooManyStates { count: d, cap: MAX_STATES_2D });
    }
    if d == 0 || coarse.is_empty() {
        return Err(ChainError::Input("grid is empty".into()));
    }
    let index: HashMap<(i64, i64), usize> = fine.iter().enumerate().map(|(k, ij)| (*ij, k)).collect();
    let to_point = |ij: &(i64, i64), h: f64| [ij.0 as f64 * h, ij.1 as f64 * h];
    let coarse_pts: Vec<[f64; 2]> = coarse.iter().map(|ij| to_point(ij, coarse_h)).collect();
    // Coarse index is ordered lexicographically, so first-found wins ties.
    let snap2 = |x: [f64; 2]| -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, q) in coarse_pts.iter().enumerate() {
            let dd = ((x[0] - q[0]).powi(2) + (x[1] - q[1]).powi(2)).sqrt();
            if dd < best_d - 1e-12 * (1.0 + dd) {
                best = k;
                best_d = dd;
            }
        }
        best
    };
    let mut cells: Vec<Vec<usize>> = vec![Vec::new(); coarse.len()];
    for (k, ij) in fine.iter().enumerate() {
        cells[snap2(to_point(ij, eps))].push(k);
    }
    let in_bar = |x: [f64; 2]| index.contains_key(&((x[0] / eps).round() as i64, (x[1] / eps).round() as i64));
    let reach = 2.0 * big_r + eps;
    let kmax = (reach / eps_prime).ceil() as i64;

    let mut counts = DMatrix::<f64>::zeros(d, d);
    for (ui, ij) in fine.iter().enumerate() {
        let u = to_point(ij, eps);
        let mut rng = stream(seed, ui as u64);
        let mut line: Vec<([f64; 2], f64)> = Vec::new();
        for s in 0..samples_per_state {
            let theta = std::f64::consts::PI * (s as f64 + rng.random::<f64>()) / samples_per_state as f64;
            let dir = [theta.cos(), theta.sin()];
            line.clear();
            let mut total = 0.0;
            for k in -kmax..=kmax {
                let x = [u[0] + k as f64 * eps_prime * dir[0], u[1] + k as f64 * eps_prime * dir[1]];
                if in_bar(x) {
                    let f = (-a * x[0]).exp();
                    total += f;
                    line.push((x, total));
                }
            }
            let target = rng.random::<f64>() * total;
            let pick = line.iter().find(|(_, cum)| *cum >= target).unwrap_or(line.last().expect("u is on its own line")).0;
            let cell = &cells[snap2(pick)];
            if cell.is_empty() {
                continue;
            }
            let v = cell[rng.random_range(0..cell.len())];
            counts[(ui, v)] += 1.0;
        }
    }
    let p_hat = counts / samples_per_state as f64;
    let target: Vec<f64> = fine.iter().map(|ij| (-a * ij.0 as f64 * eps).exp()).collect();
    let z: f64 = target.iter().sum();
    let pi_hat: Vec<f64> = target.iter().map(|t| t / z).collect();
    let mut flow = DMatrix::zeros(d, d);
    for x in 0..d {
        for y in 0..d {
            if x != y {
                flow[(x, y)] = 0.5 * (pi_hat[x] * p_hat[(x, y)] + pi_hat[y] * p_hat[(y, x)]);
            }
        }
    }
    let mut gamma: f64 = 1.0;
    for x in 0..d {
        let out = flow.row(x).sum() / pi_hat[x];
        if out <= 0.0 {
            return Err(ChainError::ZeroOutflow(x));
        }
        gamma = gamma.max(out);
    }
    let mut p = DMatrix::zeros(d, d);
    for x in 0..d {
        let mut off = 0.0;
        for y in 0..d {
            if x != y {
                let v = flow[(x, y)] / (pi_hat[x] * gamma);
                p[(x, y)] = v;
                off += v;
            }
        }
        p[(x, x)] = 1.0 - off;
    }
    let meta = ChainMeta { eps_coarse: coarse_h, eps_fine: eps, eps_prime, a, kind: "hit-and-run-2d-mc".into() };
    let states = fine.iter().map(|ij| to_point(ij, eps).to_vec()).collect();
    FiniteChain::new(states, p, meta)
}

/// `Φ(S) = Σ_{x∈S, y∉S} π_x P_xy / min(π(S), π(Sᶜ))`.
pub fn conductance(chain: &FiniteChain, subset: &[usize]) -> Result<f64, ChainError> {
    let d = chain.len();
    let mut inside = vec![false; d];
    for &s in subset {
        if s >= d {
            return Err(ChainError::Input(format!("state {s} out of range")));
        }
        inside[s] = true;
    }
    let k = inside.iter().filter(|b| **b).count();
    if k == 0 || k == d {
        return Err(ChainError::Input("subset must be nonempty and proper".into()));
    }
    let mut flow = 0.0;
    let mut mass = 0.0;
    for x in 0..d {
        if inside[x] {
            mass += chain.pi[x];
            for y in 0..d {
                if !inside[y] {
                    flow += chain.pi[x] * chain.p[(x, y)];
                }
            }
        }
    }
    Ok(flow / mass.min(1.0 - mass))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductanceReport {
    /// Exact minimum (exhaustive) or the Cheeger lower bound `δ/2`.
    pub phi: f64,
    pub witness: Vec<usize>,
    pub exhaustive: bool,
    /// Cheeger sandwich `δ/2 ≤ Φ ≤ √(2δ)`.
    pub cheeger_lower: f64,
    pub cheeger_upper: f64,
}

/// Second-largest eigenvalue of the discriminant and `δ = 1 − λ₂`.
pub fn spectral_gap(chain: &FiniteChain) -> Result<f64, ChainError> {
    let dm = discriminant(chain)?;
    let (vals, _) = sym_eigen_desc(&dm);
    Ok(1.0 - vals.get(1).copied().unwrap_or(-1.0))
}

/// Minimum conductance: exhaustive over all proper subsets (Gray-code
/// order) when `d ≤ 20`, otherwise the Cheeger lower bound only.
pub fn min_conductance(chain: &FiniteChain) -> Result<ConductanceReport, ChainError> {
    let d = chain.len();
    if d < 2 {
        return Err(ChainError::Input("need at least two states".into()));
    }
    let delta = spectral_gap(chain)?;
    let (cl, cu) = (0.5 * delta, (2.0 * delta).max(0.0).sqrt());
    if d > MAX_EXHAUSTIVE {
        return Ok(ConductanceReport { phi: cl, witness: Vec::new(), exhaustive: false, cheeger_lower: cl, cheeger_upper: cu });
    }
    let f = DMatrix::from_fn(d, d, |x, y| chain.pi[x] * chain.p[(x, y)]);
    let mut inside = vec![false; d];
    let mut flow = 0.0;
    let mut mass = 0.0;
    let mut best = f64::INFINITY;
    let mut best_code = 0u64;
    // Subsets avoiding the last state cover every cut once.
    let bits = d - 1;
    for step in 1u64..(1u64 << bits) {
        let x = step.trailing_zeros() as usize;
        if !inside[x] {
            for y in 0..d {
                if y != x {
                    if inside[y] {
                        flow -= f[(y, x)];
                    } else {
                        flow += f[(x, y)];
                    }
                }
            }
            mass += chain.pi[x];
            inside[x] = true;
        } else {
            inside[x] = false;
            for y in 0..d {
                if y != x {
                    if inside[y] {
                        flow += f[(y, x)];
                    } else {
                        flow -= f[(x, y)];
                    }
                }
            }
            mass -= chain.pi[x];
        }
        let denom = mass.min(1.0 - mass);
        if denom > 0.0 {
            let phi = flow / denom;
            if phi < best {
                best = phi;
                best_code = step ^ (step >> 1);
            }
        }
    }
    let witness: Vec<usize> = (0..bits).filter(|b| best_code >> b & 1 == 1).collect();
    let phi = conductance(chain, &witness)?;
    Ok(ConductanceReport { phi, witness, exhaustive: true, cheeger_lower: cl, cheeger_upper: cu })
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

fn push(sigma: &[f64], p: &DMatrix<f64>) -> Vec<f64> {
    let d = sigma.len();
    (0..d).map(|y| (0..d).map(|x| sigma[x] * p[(x, y)]).sum()).collect()
}

/// `TV(σ₀Pᵏ, π)`.
pub fn mixing_tv(chain: &FiniteChain, sigma0: &[f64], k: usize) -> Result<f64, ChainError> {
    Ok(*mixing_tv_curve(chain, sigma0, k)?.last().expect("curve has k + 1 entries"))
}

/// `TV(σ₀Pʲ, π)` for `j = 0..=k`.
pub fn mixing_tv_curve(chain: &FiniteChain, sigma0: &[f64], k: usize) -> Result<Vec<f64>, ChainError> {
    if sigma0.len() != chain.len() || sigma0.iter().any(|v| *v < 0.0) || (sigma0.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(ChainError::Input("sigma0 must be a probability vector over the states".into()));
    }
    let mut sigma = sigma0.to_vec();
    let mut out = Vec::with_capacity(k + 1);
    out.push(tv(&sigma, &chain.pi));
    for _ in 0..k {
        sigma = push(&sigma, &chain.p);
        out.push(tv(&sigma, &chain.pi));
    }
    Ok(out)
}

/// `√M (1 − Φ²/2)^k`.
pub fn lovasz_simonovits_bound(m: f64, phi: f64, k: usize) -> f64 {
    m.sqrt() * (1.0 - 0.5 * phi * phi).powi(k as i32)
}

/// `D_xy = √(P_xy P_yx)`; requires detailed balance.
pub fn discriminant(chain: &FiniteChain) -> Result<DMatrix<f64>, ChainError> {
    let res = chain.detailed_balance_residual();
    if res > REVERSIBLE_TOL {
        return Err(ChainError::NotReversible(res));
    }
    let d = chain.len();
    Ok(DMatrix::from_fn(d, d, |x, y| (chain.p[(x, y)] * chain.p[(y, x)]).sqrt()))
}
