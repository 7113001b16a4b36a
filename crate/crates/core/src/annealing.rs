//! Simulated-annealing volume estimation on the pencil body.
//!
//! `Z(a) = ∫_{K'} exp(-a x₀) dx` is carried from the cone integral at
//! `a₀ = 2n` down to `a_m ≈ 0` by a telescoping product of stage ratios
//! `Z(a_{i+1})/Z(a_i)`, each estimated by the sample mean of
//! `V = exp((a_i − a_{i+1}) x₀)` under `π_i ∝ exp(-a_i x₀)`.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::AnnealingError;
use crate::geometry::{make_pencil, normalize, ConvexBody, Shape};
use crate::hit_and_run::{sample_direction, step_in_place, WalkConfig};
use crate::linalg::sym_sqrt_pair;
use crate::rng::{pairwise_sum, stream, streams, Rng};

pub const PI0_MAX_TRIES: usize = 10_000;
pub const EIGEN_FLOOR: f64 = 1e-10;
pub const ROUNDING_CAP: usize = 4096;
pub const RATIO_WARN: f64 = 8.0;
pub const XI_LOW: f64 = 0.4;
pub const XI_HIGH: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoolingSchedule {
    /// Dimension of the base body (the pencil has n + 1).
    pub n: usize,
    pub m: usize,
    pub a: Vec<f64>,
    pub epsilon: f64,
}

impl CoolingSchedule {
    pub fn decay(&self) -> f64 {
        1.0 - 1.0 / (self.n as f64).sqrt()
    }

    /// Append geometric stages until `a_m ≤ target`. Returns how many were
    /// added.
    pub fn extend_to(&mut self, target: f64) -> usize {
        let q = self.decay();
        let mut added = 0;
        while *self.a.last().expect("schedule is nonempty") > target {
            let next = self.a[self.a.len() - 1] * q;
            self.a.push(next);
            self.m += 1;
            added += 1;
        }
        added
    }
}

/// `a_i = 2n(1 − 1/√n)^i`, `m = 2⌈√n ln(n/ε)⌉`.
pub fn build_schedule(n: usize, epsilon: f64) -> Result<CoolingSchedule, AnnealingError> {
    if n < 2 {
        return Err(AnnealingError::Input(format!("schedule needs n ≥ 2 (got {n})")));
    }
    if !(epsilon > 0.0 && epsilon < 0.5) {
        return Err(AnnealingError::Input(format!("epsilon must lie in (0, 1/2), got {epsilon}")));
    }
    let nf = n as f64;
    let m = 2 * (nf.sqrt() * (nf / epsilon).ln()).ceil() as usize;
    let q = 1.0 - 1.0 / nf.sqrt();
    let mut a = Vec::with_capacity(m + 1);
    let mut cur = 2.0 * nf;
    for _ in 0..=m {
        a.push(cur);
        cur *= q;
    }
    Ok(CoolingSchedule { n, m, a, epsilon })
}

/// Per-stage sample count `(512/ε²)√n ln(n/ε)`.
pub fn default_sample_count(n: usize, epsilon: f64) -> f64 {
    let nf = n as f64;
    512.0 / (epsilon * epsilon) * nf.sqrt() * (nf / epsilon).ln()
}

/// `ln Γ(1 + k/2)` for integer k, exact sums (no series approximation).
fn ln_gamma_half(k: usize) -> f64 {
    if k % 2 == 0 {
        (1..=k / 2).map(|j| (j as f64).ln()).sum()
    } else {
        // Γ(j + 1/2 + 1) = Γ(1/2) ∏_{i=0}^{j} (i + 1/2)
        let j = k / 2;
        0.5 * std::f64::consts::PI.ln() + (0..=j).map(|i| (i as f64 + 0.5).ln()).sum::<f64>()
    }
}

/// `ln v_n` with `v_n = π^{n/2}/Γ(1 + n/2)`.
pub fn ln_unit_ball_volume(n: usize) -> f64 {
    0.5 * n as f64 * std::f64::consts::PI.ln() - ln_gamma_half(n)
}

/// Cone integral `∫_C e^{-a₀x₀} dx = n!·v_n·a₀^{-(n+1)}`, evaluated in log
/// space.
pub fn initial_mass(n: usize, a0: f64) -> f64 {
    ln_initial_mass(n, a0).exp()
}

pub fn ln_initial_mass(n: usize, a0: f64) -> f64 {
    let ln_fact: f64 = (1..=n).map(|j| (j as f64).ln()).sum();
    ln_fact + ln_unit_ball_volume(n) - (n as f64 + 1.0) * a0.ln()
}

fn uniform_in_ball(n: usize, rng: &mut Rng) -> Vec<f64> {
    let dir = sample_direction(n, rng);
    let rad = rng.random::<f64>().powf(1.0 / n as f64);
    dir.into_iter().map(|v| v * rad).collect()
}

/// Exact sample of `π₀` on the pencil by rejection from the cone law
/// (`x₀ ~ Gamma(n+1, a₀)`, cross-section uniform). Returns the point and the
/// number of proposals used.
pub fn sample_pi0_counted(pencil: &ConvexBody, a0: f64, rng: &mut Rng) -> Result<(Vec<f64>, usize), AnnealingError> {
    let n = pencil
        .pencil_base()
        .ok_or_else(|| AnnealingError::Input("sample_pi0 needs a pencil body".into()))?
        .dim();
    let gamma = Gamma::new(n as f64 + 1.0, 1.0 / a0).map_err(|e| AnnealingError::Input(e.to_string()))?;
    for tries in 1..=PI0_MAX_TRIES {
        let x0: f64 = gamma.sample(rng);
        let v = uniform_in_ball(n, rng);
        let mut x = Vec::with_capacity(n + 1);
        x.push(x0);
        x.extend(v.iter().map(|vi| x0 * vi));
        if pencil.contains(&x)? {
            return Ok((x, tries));
        }
    }
    Err(AnnealingError::Walk(crate::error::WalkError::RejectionCap(PI0_MAX_TRIES)))
}

pub fn sample_pi0(pencil: &ConvexBody, a0: f64, rng: &mut Rng) -> Result<Vec<f64>, AnnealingError> {
    sample_pi0_counted(pencil, a0, rng).map(|(x, _)| x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: usize,
    pub a_i: f64,
    pub a_next: f64,
    pub k: usize,
    /// `V̄_i`, the estimate of `Z(a_{i+1})/Z(a_i)`.
    pub ratio: f64,
    /// Empirical `E[V²]/E[V]²`.
    pub moment_ratio: f64,
    /// Membership queries to the base body during this stage.
    pub queries: u64,
}

fn stage_statistics(points: &[Vec<f64>], a_i: f64, a_next: f64) -> Result<(f64, f64), AnnealingError> {
    let d = a_i - a_next;
    let v: Vec<f64> = points.iter().map(|p| (d * p[0]).exp()).collect();
    let v2: Vec<f64> = v.iter().map(|x| x * x).collect();
    let k = points.len() as f64;
    let mean = pairwise_sum(&v) / k;
    let second = pairwise_sum(&v2) / k;
    if !mean.is_finite() || !second.is_finite() {
        return Err(AnnealingError::Numerical("stage statistic is not finite".into()));
    }
    // Identical values give exactly 1; guard the last ulp.
    let ratio = (second / (mean * mean)).max(1.0);
    Ok((mean, ratio))
}

fn base_queries(pencil: &ConvexBody) -> u64 {
    pencil.pencil_base().map(|b| b.queries()).unwrap_or_else(|| pencil.queries())
}

/// One annealing stage with a single shared RNG: advance each chain
/// `walk_steps` steps at density `exp(-a_i x₀)` and average
/// `exp((a_i − a_{i+1}) x₀)`.
pub fn run_stage(
    pencil: &ConvexBody,
    a_i: f64,
    a_next: f64,
    starts: &[Vec<f64>],
    walk_steps: usize,
    cfg: &WalkConfig,
    rng: &mut Rng,
) -> Result<(StageStats, Vec<Vec<f64>>), AnnealingError> {
    if walk_steps == 0 {
        return Err(AnnealingError::Input("walk_steps must be ≥ 1".into()));
    }
    if starts.is_empty() {
        return Err(AnnealingError::Input("no chains".into()));
    }
    let cfg = WalkConfig { a: a_i, ..cfg.clone() };
    cfg.validate()?;
    let q0 = base_queries(pencil);
    let mut buf = vec![0.0; pencil.dim()];
    let mut points = starts.to_vec();
    for p in points.iter_mut() {
        if !pencil.contains(p)? {
            return Err(AnnealingError::Walk(crate::error::WalkError::StartOutside));
        }
        for _ in 0..walk_steps {
            step_in_place(pencil, p, &cfg, rng, &mut buf);
        }
    }
    let (ratio, moment_ratio) = stage_statistics(&points, a_i, a_next)?;
    let stats = StageStats {
        stage: 0,
        a_i,
        a_next,
        k: points.len(),
        ratio,
        moment_ratio,
        queries: base_queries(pencil) - q0,
    };
    Ok((stats, points))
}

/// Empirical mean and covariance `T = (1/k)Σ(X − X̄)(X − X̄)ᵀ`.
pub fn isotropic_transform(points: &[Vec<f64>]) -> Result<(Vec<f64>, DMatrix<f64>), AnnealingError> {
    let n = points.first().map(|p| p.len()).ok_or_else(|| AnnealingError::Input("no points".into()))?;
    if points.len() < n + 1 {
        return Err(AnnealingError::Input(format!("need at least {} points, got {}", n + 1, points.len())));
    }
    let k = points.len() as f64;
    let mean: Vec<f64> = (0..n)
        .map(|j| pairwise_sum(&points.iter().map(|p| p[j]).collect::<Vec<_>>()) / k)
        .collect();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let prods: Vec<f64> = points.iter().map(|p| (p[i] - mean[i]) * (p[j] - mean[j])).collect();
            let v = pairwise_sum(&prods) / k;
            t[(i, j)] = v;
            t[(j, i)] = v;
        }
    }
    let eig = t.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(min > EIGEN_FLOOR) {
        return Err(AnnealingError::RankDeficient(min));
    }
    Ok((mean, t))
}

/// `(T^{-1/2}, T^{1/2})` for a covariance from [`isotropic_transform`].
pub fn rounding_maps(t: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>), AnnealingError> {
    sym_sqrt_pair(t, EIGEN_FLOOR).map_err(AnnealingError::RankDeficient)
}

/// Covariance sample count `min(⌈20·d·ln⁵ d⌉, 4096)` for ambient dimension
/// `d`; the constant of the isotropy lemma is not specified, 20 works at
/// desk scale.
pub fn rounding_sample_count(d: usize) -> usize {
    let df = d.max(2) as f64;
    ((20.0 * df * df.ln().powi(5)).ceil() as usize).clamp(20 * d, ROUNDING_CAP)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealConfig {
    /// Chains (samples) per stage.
    pub k: usize,
    /// Hit-and-run steps per chain per stage.
    pub walk_steps: usize,
    /// Worker threads; 0 uses the global rayon pool.
    pub threads: usize,
    pub rounding: bool,
    /// Multiply the cone integral by the measured `π₀` acceptance rate,
    /// i.e. use `Z(a₀)` instead of its cone approximation.
    pub mass_correction: bool,
    /// Uniform `[0,2D]×K` samples for `ξ̂`; `None` uses `⌈100/ε²⌉`.
    pub xi_samples: Option<usize>,
}

impl AnnealConfig {
    /// Paper sample count scaled by `k_factor`, `200·n²` steps per stage.
    pub fn scaled(n: usize, epsilon: f64, k_factor: f64) -> Self {
        let k = (default_sample_count(n, epsilon) * k_factor).ceil().max(2.0) as usize;
        Self { k, walk_steps: 200 * n * n, threads: 1, rounding: false, mass_correction: false, xi_samples: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub volume: f64,
    pub pencil_volume: f64,
    pub epsilon: f64,
    pub n: usize,
    pub two_d: f64,
    pub initial_mass: f64,
    pub pi0_acceptance: f64,
    pub xi_hat: Option<f64>,
    pub stages: Vec<StageStats>,
    /// Stages appended beyond `m` so that `a_m ≤ ε/D`.
    pub extra_stages: usize,
    /// Membership queries to the (normalized) input body.
    pub total_queries: u64,
    pub seed: u64,
    pub k: usize,
    pub walk_steps: usize,
    pub rounding: bool,
    pub warnings: Vec<String>,
    pub wall_time_s: Option<f64>,
}

impl EstimateReport {
    pub fn max_moment_ratio(&self) -> f64 {
        self.stages.iter().map(|s| s.moment_ratio).fold(1.0, f64::max)
    }

    /// `stage,a_i,ratio,moment_ratio,queries` rows.
    pub fn stage_csv(&self) -> String {
        let mut s = String::from("stage,a_i,ratio,moment_ratio,queries\n");
        for st in &self.stages {
            s.push_str(&format!("{},{},{},{},{}\n", st.stage, st.a_i, st.ratio, st.moment_ratio, st.queries));
        }
        s
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, AnnealingError> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| AnnealingError::Input(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

struct Chain {
    point: Vec<f64>,
    rng: Rng,
}

fn advance(chains: &mut [Chain], body: &ConvexBody, cfg: &WalkConfig, steps: usize, threads: usize) {
    let work = |c: &mut Chain| {
        let mut buf = vec![0.0; c.point.len()];
        for _ in 0..steps {
            step_in_place(body, &mut c.point, cfg, &mut c.rng, &mut buf);
        }
    };
    if threads == 1 {
        chains.iter_mut().for_each(work);
    } else {
        chains.par_iter_mut().for_each(work);
    }
}

fn precondition_from(points: &[Vec<f64>], l: usize) -> Result<DMatrix<f64>, AnnealingError> {
    let take = l.min(points.len());
    let (_, t) = isotropic_transform(&points[..take])?;
    let (_, sqrt) = rounding_maps(&t)?;
    Ok(sqrt)
}

/// Telescoping estimate of `vol(K')`.
pub fn estimate_pencil_volume(
    pencil: &ConvexBody,
    schedule: &CoolingSchedule,
    k: usize,
    walk_steps: usize,
    seed: u64,
) -> Result<EstimateReport, AnnealingError> {
    let cfg = AnnealConfig { k, walk_steps, threads: 1, rounding: false, mass_correction: false, xi_samples: None };
    estimate_pencil_volume_with(pencil, schedule, &cfg, seed)
}

pub fn estimate_pencil_volume_with(
    pencil: &ConvexBody,
    schedule: &CoolingSchedule,
    cfg: &AnnealConfig,
    seed: u64,
) -> Result<EstimateReport, AnnealingError> {
    let start = Instant::now();
    let base = pencil
        .pencil_base()
        .ok_or_else(|| AnnealingError::Input("estimate_pencil_volume needs a pencil body".into()))?;
    let n = base.dim();
    if schedule.n != n {
        return Err(AnnealingError::Input(format!("schedule is for n = {}, pencil base has n = {n}", schedule.n)));
    }
    if cfg.k < 2 || cfg.walk_steps == 0 {
        return Err(AnnealingError::Input("need k ≥ 2 chains and walk_steps ≥ 1".into()));
    }
    let q_start = base_queries(pencil);
    let a0 = schedule.a[0];

    let threads = cfg.threads;
    let init: Vec<Result<(Chain, usize), AnnealingError>> = with_pool(threads, || {
        let make = |j: usize| {
            let mut rng = stream(seed, streams::CHAINS + j as u64);
            let (point, tries) = sample_pi0_counted(pencil, a0, &mut rng)?;
            Ok((Chain { point, rng }, tries))
        };
        if threads == 1 {
            (0..cfg.k).map(make).collect()
        } else {
            (0..cfg.k).into_par_iter().map(make).collect()
        }
    })?;
    let mut chains = Vec::with_capacity(cfg.k);
    let mut proposals = 0usize;
    for r in init {
        let (c, t) = r?;
        proposals += t;
        chains.push(c);
    }
    let acceptance = cfg.k as f64 / proposals as f64;

    let mut ln_estimate = ln_initial_mass(n, a0);
    if cfg.mass_correction {
        ln_estimate += acceptance.ln();
    }
    let mut stages = Vec::with_capacity(schedule.m);
    let l = rounding_sample_count(n + 1).min(cfg.k);
    for i in 0..schedule.m {
        let (a_i, a_next) = (schedule.a[i], schedule.a[i + 1]);
        let mut walk = WalkConfig::with_a(a_i);
        if cfg.rounding && cfg.k > n + 1 {
            let pts: Vec<Vec<f64>> = chains.iter().map(|c| c.point.clone()).collect();
            walk.precondition = Some(precondition_from(&pts, l)?);
        }
        let q0 = base_queries(pencil);
        with_pool(threads, || advance(&mut chains, pencil, &walk, cfg.walk_steps, threads))?;
        let pts: Vec<Vec<f64>> = chains.iter().map(|c| c.point.clone()).collect();
        let (ratio, moment_ratio) = stage_statistics(&pts, a_i, a_next)?;
        if !(ratio > 0.0) {
            return Err(AnnealingError::Numerical(format!("stage {i} ratio {ratio} is not positive")));
        }
        ln_estimate += ratio.ln();
        stages.push(StageStats {
            stage: i,
            a_i,
            a_next,
            k: cfg.k,
            ratio,
            moment_ratio,
            queries: base_queries(pencil) - q0,
        });
    }
    let pencil_volume = ln_estimate.exp();
    if !pencil_volume.is_finite() {
        return Err(AnnealingError::Numerical("volume estimate is not finite".into()));
    }
    let mut warnings = Vec::new();
    for s in &stages {
        if s.moment_ratio > RATIO_WARN {
            warnings.push(format!("stage {} second-moment ratio {:.3} exceeds {RATIO_WARN}", s.stage, s.moment_ratio));
        }
    }
    Ok(EstimateReport {
        volume: pencil_volume,
        pencil_volume,
        epsilon: schedule.epsilon,
        n,
        two_d: pencil.pencil_length().unwrap_or(0.0),
        initial_mass: initial_mass(n, a0),
        pi0_acceptance: acceptance,
        xi_hat: None,
        stages,
        extra_stages: 0,
        total_queries: base_queries(pencil) - q_start,
        seed,
        k: cfg.k,
        walk_steps: cfg.walk_steps,
        rounding: cfg.rounding,
        warnings,
        wall_time_s: Some(start.elapsed().as_secs_f64()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiEstimate {
    pub xi_hat: f64,
    pub samples: usize,
    pub volume: f64,
    pub warning: Option<String>,
}

/// Chains used for the uniform `K` samples behind `ξ̂`.
const XI_CHAINS: usize = 64;

/// Estimate `ξ_K = vol(K')/(2D·vol(K))` from uniform points of `[0,2D]×K`
/// and return `vol(K) = vol(K')/(2D·ξ̂)`.
pub fn pencil_to_original(
    pencil: &ConvexBody,
    vol_pencil: f64,
    epsilon: f64,
    seed: u64,
) -> Result<XiEstimate, AnnealingError> {
    let samples = (100.0 / (epsilon * epsilon)).ceil() as usize;
    pencil_to_original_with(pencil, vol_pencil, samples, false, 1, seed)
}

pub fn pencil_to_original_with(
    pencil: &ConvexBody,
    vol_pencil: f64,
    samples: usize,
    rounding: bool,
    threads: usize,
    seed: u64,
) -> Result<XiEstimate, AnnealingError> {
    let (base, two_d) = match pencil.shape() {
        Shape::Pencil { base, two_d } => (base.as_ref(), *two_d),
        _ => return Err(AnnealingError::Input("pencil_to_original needs a pencil body".into())),
    };
    if !(vol_pencil > 0.0) {
        return Err(AnnealingError::Input(format!("pencil volume must be positive, got {vol_pencil}")));
    }
    let n = base.dim();
    let chains_n = XI_CHAINS.min(samples.max(1));
    let per_chain = samples.div_ceil(chains_n);
    let burn_in = 50 * n * n + 100;
    let thin = n.max(2);
    let mut chains: Vec<Chain> = (0..chains_n)
        .map(|j| Chain { point: vec![0.0; n], rng: stream(seed, streams::XI + j as u64) })
        .collect();
    let mut walk = WalkConfig::with_a(0.0);
    with_pool(threads, || advance(&mut chains, base, &walk, burn_in, threads))?;
    if rounding && chains_n > n + 1 {
        // Burn a second round under the chains' own covariance.
        let pts: Vec<Vec<f64>> = chains.iter().map(|c| c.point.clone()).collect();
        if let Ok(l) = precondition_from(&pts, chains_n) {
            walk.precondition = Some(l);
        }
    }
    let mut inside = 0usize;
    let mut total = 0usize;
    for _ in 0..per_chain {
        with_pool(threads, || advance(&mut chains, base, &walk, thin, threads))?;
        for c in chains.iter_mut() {
            let x0 = two_d * c.rng.random::<f64>();
            let norm = c.point.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= x0 {
                inside += 1;
            }
            total += 1;
        }
    }
    let xi_hat = inside as f64 / total as f64;
    let warning = if !(XI_LOW..=XI_HIGH).contains(&xi_hat) {
        Some(format!("xi_hat = {xi_hat:.4} outside [{XI_LOW}, {XI_HIGH}]"))
    } else {
        None
    };
    if xi_hat == 0.0 {
        return Err(AnnealingError::Numerical("no uniform sample fell in the pencil".into()));
    }
    Ok(XiEstimate { xi_hat, samples: total, volume: vol_pencil / (two_d * xi_hat), warning })
}

/// Full pipeline with the default configuration for `(n, ε)`.
pub fn estimate_volume(body: &ConvexBody, epsilon: f64, seed: u64, rounding: bool) -> Result<EstimateReport, AnnealingError> {
    let mut cfg = AnnealConfig::scaled(body.dim(), epsilon, 1.0);
    cfg.rounding = rounding;
    estimate_volume_with(body, epsilon, seed, &cfg)
}

/// Normalize to r = 1 around the body's center, build the pencil, anneal,
/// convert through `ξ̂`, and scale back by `r^n`.
pub fn estimate_volume_with(
    body: &ConvexBody,
    epsilon: f64,
    seed: u64,
    cfg: &AnnealConfig,
) -> Result<EstimateReport, AnnealingError> {
    let start = Instant::now();
    let n = body.dim();
    let mut schedule = build_schedule(n, epsilon)?;
    let (normal, factor) = normalize(body)?;
    let d = normal.outer_radius();
    let pencil = make_pencil(&normal, 2.0 * d).map_err(AnnealingError::from)?;
    let extra = schedule.extend_to(epsilon / d);
    let mut report = estimate_pencil_volume_with(&pencil, &schedule, cfg, seed)?;
    let samples = cfg.xi_samples.unwrap_or((100.0 / (epsilon * epsilon)).ceil() as usize);
    let xi = pencil_to_original_with(&pencil, report.pencil_volume, samples, cfg.rounding, cfg.threads, seed)?;
    if let Some(w) = &xi.warning {
        report.warnings.push(w.clone());
    }
    report.xi_hat = Some(xi.xi_hat);
    report.volume = xi.volume * factor;
    report.extra_stages = extra;
    report.total_queries = normal.queries();
    report.wall_time_s = Some(start.elapsed().as_secs_f64());
    if !(report.volume > 0.0 && report.volume.is_finite()) {
        return Err(AnnealingError::Numerical(format!("volume estimate {} is invalid", report.volume)));
    }
    Ok(report)
}
