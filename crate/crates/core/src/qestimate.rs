//! Statevector simulation of amplitude estimation, π/3 amplitude
//! amplification, phase-estimation reflections, BasicEst with its
//! truncated-mean payload, the Chebyshev mean search, and the
//! nondestructive compute/median/uncompute block.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;
use serde::Serialize;

use crate::error::QuantumError;
use crate::linalg::{c, normal_eigen, CMat, CVec, ONE, ZERO};
use crate::rng::{stream, Rng};

/// Largest simulated statevector.
pub const MAX_DIM: usize = 1 << 20;
/// Largest phase register used by the Chebyshev search.
pub const MAX_REGISTER: usize = 4096;

/// `ω = e^{iπ/3}`.
pub fn omega() -> Complex64 {
    Complex64::from_polar(1.0, PI / 3.0)
}

/// Unitary whose first column is `v` (a phased Householder reflection).
pub fn unitary_with_first_column(v: &CVec) -> CMat {
    let n = v.len();
    let alpha = if v[0].norm() > 0.0 { v[0] / v[0].norm() } else { ONE };
    let mut w = v.clone();
    w[0] -= alpha;
    let ww = w.norm_squared();
    let mut h = CMat::identity(n, n);
    if ww > 1e-30 {
        h -= (&w * w.adjoint()) * c(2.0 / ww);
    }
    h * alpha
}

/// Preparation unitary `U` on `d_s` dimensions with a diagonal target
/// projector `Π₁`.
#[derive(Debug, Clone)]
pub struct AmplitudeTask {
    pub prep: CMat,
    pub target: Vec<bool>,
}

impl AmplitudeTask {
    pub fn new(prep: CMat, target: Vec<bool>) -> Result<Self, QuantumError> {
        if prep.nrows() != prep.ncols() || prep.nrows() != target.len() {
            return Err(QuantumError::Input("prep must be square and match the target mask".into()));
        }
        Ok(Self { prep, target })
    }

    /// `U|0⟩ = √(1−p)|0⟩ + √p|1⟩`, `Π₁ = |1⟩⟨1|`.
    pub fn two_level(p: f64) -> Result<Self, QuantumError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(QuantumError::Input(format!("p = {p} is not a probability")));
        }
        let (a, b) = ((1.0 - p).sqrt(), p.sqrt());
        let prep = CMat::from_row_slice(2, 2, &[c(a), c(-b), c(b), c(a)]);
        Self::new(prep, vec![false, true])
    }

    pub fn dim(&self) -> usize {
        self.target.len()
    }

    /// `U|0⟩`.
    pub fn prepared(&self) -> CVec {
        self.prep.column(0).into_owned()
    }

    /// `p = ‖Π₁U|0⟩‖²`.
    pub fn amplitude(&self) -> f64 {
        self.prepared().iter().zip(&self.target).filter(|(_, t)| **t).map(|(z, _)| z.norm_sqr()).sum()
    }
}

/// `Q = −U(2|0⟩⟨0| − I)U†(2Π₁ − I)`.
pub fn grover_iterate(task: &AmplitudeTask) -> CMat {
    let n = task.dim();
    let mut s0 = -CMat::identity(n, n);
    s0[(0, 0)] = ONE;
    let s1 = CMat::from_diagonal(&CVec::from_iterator(n, task.target.iter().map(|t| if *t { ONE } else { -ONE })));
    -(&task.prep * s0 * task.prep.adjoint() * s1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AeOutcome {
    pub y: usize,
    pub theta_tilde: f64,
    pub p_tilde: f64,
}

impl AeOutcome {
    fn from_y(y: usize, m: usize) -> Self {
        let theta = PI * y as f64 / m as f64;
        let s = theta.sin();
        Self { y, theta_tilde: theta, p_tilde: s * s }
    }
}

/// `|p̃ − p| ≤ 2π√(p(1−p))/M + π²/M²`.
pub fn ae_bound(p: f64, m: usize) -> f64 {
    let m = m as f64;
    2.0 * PI * (p * (1.0 - p)).sqrt() / m + PI * PI / (m * m)
}

fn check_register(m: usize) -> Result<(), QuantumError> {
    if m < 2 || !m.is_power_of_two() {
        return Err(QuantumError::Input(format!("register size M = {m} must be a power of two ≥ 2")));
    }
    Ok(())
}

/// Joint AE block state on `|y⟩|s⟩` (layout `y·d_s + s`) for input system
/// state `input` with the phase register starting at `|0⟩`:
/// `F_M⁻¹ · Λ(Q) · F_M`.
pub fn ae_block_state(q: &CMat, input: &CVec, m: usize) -> CVec {
    let ds = input.len();
    let mut powers = Vec::with_capacity(m);
    let mut v = input.clone();
    for _ in 0..m {
        powers.push(v.clone());
        v = q * v;
    }
    let norm = 1.0 / m as f64;
    let mut out = CVec::zeros(m * ds);
    for y in 0..m {
        for (j, pj) in powers.iter().enumerate() {
            let ph = Complex64::from_polar(norm, -2.0 * PI * ((j * y) % m) as f64 / m as f64);
            for s in 0..ds {
                out[y * ds + s] += ph * pj[s];
            }
        }
    }
    out
}

/// Exact phase-register distribution of amplitude estimation.
pub fn ae_distribution(task: &AmplitudeTask, m: usize) -> Result<Vec<f64>, QuantumError> {
    check_register(m)?;
    if m * task.dim() > MAX_DIM {
        return Err(QuantumError::DimensionCap { dim: m * task.dim(), cap: MAX_DIM });
    }
    let state = ae_block_state(&grover_iterate(task), &task.prepared(), m);
    let ds = task.dim();
    Ok((0..m).map(|y| (0..ds).map(|s| state[y * ds + s].norm_sqr()).sum()).collect())
}

/// `K(δ) = sin²(πMδ) / (M² sin²(πδ))`, with `K = 1` at integer `δ`.
pub fn fejer(delta: f64, m: usize) -> f64 {
    let mf = m as f64;
    let den = (PI * delta).sin();
    if den.abs() < 1e-12 {
        return 1.0;
    }
    let num = (PI * mf * delta).sin();
    (num * num) / (mf * mf * den * den)
}

/// Closed-form AE distribution for amplitude `p`.
pub fn ae_closed_form(p: f64, m: usize) -> Vec<f64> {
    let t = p.clamp(0.0, 1.0).sqrt().asin() / PI;
    (0..m)
        .map(|y| {
            let f = y as f64 / m as f64;
            0.5 * fejer(t - f, m) + 0.5 * fejer(-t - f, m)
        })
        .collect()
}

fn sample_index(dist: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = dist.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// One amplitude-estimation run: the phase register is sampled from the
/// exact Born distribution.
pub fn amplitude_estimate(task: &AmplitudeTask, m: usize, seed: u64) -> Result<AeOutcome, QuantumError> {
    let dist = ae_distribution(task, m)?;
    let mut rng = stream(seed, 0);
    Ok(AeOutcome::from_y(sample_index(&dist, &mut rng), m))
}

/// `trials` independent runs sharing one distribution; trial `t` uses
/// stream `t` of `seed`.
pub fn amplitude_estimate_trials(task: &AmplitudeTask, m: usize, trials: usize, seed: u64) -> Result<Vec<AeOutcome>, QuantumError> {
    let dist = ae_distribution(task, m)?;
    Ok((0..trials)
        .map(|t| {
            let mut rng = stream(seed, t as u64);
            AeOutcome::from_y(sample_index(&dist, &mut rng), m)
        })
        .collect())
}

/// `R = I + (ω − 1)|v⟩⟨v|` for unit `v`.
pub fn phase_reflection(v: &CVec, w: Complex64) -> CMat {
    let n = v.len();
    CMat::identity(n, n) + (v * v.adjoint()) * (w - ONE)
}

#[derive(Debug, Clone)]
pub struct Pi3Result {
    pub state: CVec,
    /// Reflection applications (each `R` or `R†` counts once).
    pub uses: u64,
}

fn apply_um(m: u32, v: CVec, adjoint: bool, r_psi: &CMat, r_phi: &CMat, uses: &mut u64) -> CVec {
    if m == 0 {
        return v;
    }
    let step = |mat: &CMat, x: CVec, uses: &mut u64| {
        *uses += 1;
        if adjoint {
            mat.adjoint() * x
        } else {
            mat * x
        }
    };
    if !adjoint {
        // U_m = U_{m-1} R_ψ U_{m-1}† R_φ U_{m-1}
        let x = apply_um(m - 1, v, false, r_psi, r_phi, uses);
        let x = step(r_phi, x, uses);
        let x = apply_um(m - 1, x, true, r_psi, r_phi, uses);
        let x = step(r_psi, x, uses);
        apply_um(m - 1, x, false, r_psi, r_phi, uses)
    } else {
        let x = apply_um(m - 1, v, true, r_psi, r_phi, uses);
        let x = step(r_psi, x, uses);
        let x = apply_um(m - 1, x, false, r_psi, r_phi, uses);
        let x = step(r_phi, x, uses);
        apply_um(m - 1, x, true, r_psi, r_phi, uses)
    }
}

/// `U_m|ψ⟩` with `U₀ = I`, `U_{m+1} = U_m R_ψ U_m† R_φ U_m`.
pub fn pi3_amplify(psi: &CVec, r_psi: &CMat, r_phi: &CMat, m: u32) -> Result<Pi3Result, QuantumError> {
    let n = psi.len();
    if r_psi.shape() != (n, n) || r_phi.shape() != (n, n) {
        return Err(QuantumError::Input("reflections must match the state dimension".into()));
    }
    if m > 12 {
        return Err(QuantumError::Input("recursion depth above 12".into()));
    }
    let mut uses = 0;
    let state = apply_um(m, psi.clone(), false, r_psi, r_phi, &mut uses);
    Ok(Pi3Result { state, uses })
}

/// `1 − (1−p)^{3^m}`.
pub fn pi3_overlap_bound(p: f64, m: u32) -> f64 {
    1.0 - (1.0 - p).powf(3f64.powi(m as i32))
}

/// Start and target states on a real 2D subspace with `|⟨ψ|φ⟩|² = p`.
pub fn pi3_instance(p: f64) -> (CVec, CVec) {
    let psi = CVec::from_vec(vec![c(p.sqrt()), c((1.0 - p).sqrt())]);
    let phi = CVec::from_vec(vec![ONE, ZERO]);
    (psi, phi)
}

/// Phase-estimation approximation of `R = ωΠ₀ + Π₀^⊥` about the unique
/// eigenvalue-1 eigenvector of `W`, acting on `system ⊗ (2^a)^{⊗c}`.
/// Applied implicitly as `V†(I ⊗ Q_ω)V`.
#[derive(Debug, Clone)]
pub struct PeReflection {
    pub a: u32,
    pub c: u32,
    /// One phase-estimation pass `(QFT† ⊗ I) Λ(W) (H^{⊗a} ⊗ I)` on
    /// `register ⊗ system`, layout `y·n + s`.
    pass: CMat,
    pub system_dim: usize,
    pub leading: CVec,
}

impl PeReflection {
    pub fn total_dim(&self) -> usize {
        self.system_dim << (self.a * self.c)
    }

    pub fn register(&self) -> usize {
        1usize << self.a
    }

    /// Controlled-`W` invocations: `c` passes of `2^a − 1` powers, for
    /// both `V` and `V†`.
    pub fn walk_uses(&self) -> u64 {
        2 * self.c as u64 * (self.register() as u64 - 1)
    }

    /// Apply `g` to register `k` together with the system. Joint index is
    /// `s + n·Σ_k r_k 2^{a·k}`.
    fn apply_pass(&self, v: &CVec, g: &CMat, k: u32) -> CVec {
        let n = self.system_dim;
        let r = self.register();
        let stride = n << (self.a * k);
        let block = stride * r;
        let mut out = CVec::zeros(v.len());
        let mut x = CVec::zeros(r * n);
        for hi in (0..v.len()).step_by(block) {
            for lo in 0..(stride / n) {
                for rk in 0..r {
                    for s in 0..n {
                        x[rk * n + s] = v[hi + rk * stride + lo * n + s];
                    }
                }
                if x.iter().all(|z| z.norm_sqr() == 0.0) {
                    continue;
                }
                let y = g * &x;
                for rk in 0..r {
                    for s in 0..n {
                        out[hi + rk * stride + lo * n + s] = y[rk * n + s];
                    }
                }
            }
        }
        out
    }

    pub fn apply(&self, v: &CVec) -> CVec {
        let mut x = v.clone();
        for k in 0..self.c {
            x = self.apply_pass(&x, &self.pass, k);
        }
        let w = omega();
        for s in 0..self.system_dim {
            x[s] *= w;
        }
        let back = self.pass.adjoint();
        for k in (0..self.c).rev() {
            x = self.apply_pass(&x, &back, k);
        }
        x
    }

    /// `|ψ⟩ ⊗ |0…0⟩`.
    pub fn embed(&self, psi: &CVec) -> CVec {
        let mut v = CVec::zeros(self.total_dim());
        for s in 0..self.system_dim {
            v[s] = psi[s];
        }
        v
    }
}

/// `a = ⌈log₂(1/Δ)⌉` with `Δ` the phase gap in turns (`gap/2π`) and
/// `c = ⌈log₂(1/√ε₂)⌉`.
pub fn reflection_via_phase_estimation(w: &CMat, phase_gap: f64, eps2: f64) -> Result<PeReflection, QuantumError> {
    if !(phase_gap > 0.0) || !(eps2 > 0.0 && eps2 < 1.0) {
        return Err(QuantumError::Input("need a positive phase gap and 0 < eps2 < 1".into()));
    }
    let turns = phase_gap / (2.0 * PI);
    let a = (1.0 / turns).log2().ceil().max(1.0) as u32;
    let cc = (1.0 / eps2.sqrt()).log2().ceil().max(1.0) as u32;
    let n = w.nrows();
    let total = (n as u128) << (a as u128 * cc as u128).min(100);
    if a * cc > 40 || total > MAX_DIM as u128 {
        return Err(QuantumError::DimensionCap { dim: total.min(usize::MAX as u128) as usize, cap: MAX_DIM });
    }
    let (vals, vecs) = normal_eigen(w);
    let ones: Vec<usize> = (0..vals.len()).filter(|&i| (vals[i] - ONE).norm() < 1e-8).collect();
    if ones.len() != 1 {
        return Err(QuantumError::Eigen(format!("expected one eigenvalue-1 eigenvector, found {}", ones.len())));
    }
    let leading = vecs.column(ones[0]).into_owned();
    let r = 1usize << a;
    let mut pass = CMat::zeros(r * n, r * n);
    let mut wj = CMat::identity(n, n);
    let inv_r = 1.0 / r as f64;
    for j in 0..r {
        for r0 in 0..r {
            let hs = if (j & r0).count_ones() % 2 == 1 { -inv_r } else { inv_r };
            for y in 0..r {
                let ph = Complex64::from_polar(hs, -2.0 * PI * ((j * y) % r) as f64 / r as f64);
                for s in 0..n {
                    for s0 in 0..n {
                        pass[(y * n + s, r0 * n + s0)] += ph * wj[(s, s0)];
                    }
                }
            }
        }
        wj = w * wj;
    }
    Ok(PeReflection { a, c: cc, pass, system_dim: n, leading })
}

#[derive(Debug, Clone, Serialize)]
pub struct ReflectionCheck {
    pub leading_error: f64,
    /// `(eigenvalue, ‖R̃|ψ⟩|0⟩ − R|ψ⟩|0⟩‖)` for the other eigenvectors.
    pub deviations: Vec<([f64; 2], f64)>,
    pub max_deviation: f64,
    pub bound: f64,
}

/// Compare `R̃` with the exact `R` on every eigenvector of `W`.
pub fn check_reflection(w: &CMat, refl: &PeReflection, eps2: f64) -> ReflectionCheck {
    let (vals, vecs) = normal_eigen(w);
    let om = omega();
    let lead_in = refl.embed(&refl.leading);
    let leading_error = (refl.apply(&lead_in) - &lead_in * om).norm();
    let mut deviations = Vec::new();
    for (i, v) in vals.iter().enumerate() {
        if (v - ONE).norm() < 1e-8 {
            continue;
        }
        let x = refl.embed(&vecs.column(i).into_owned());
        deviations.push(([v.re, v.im], (refl.apply(&x) - &x).norm()));
    }
    let max_deviation = deviations.iter().map(|d| d.1).fold(0.0, f64::max);
    ReflectionCheck { leading_error, deviations, max_deviation, bound: 2.0 * eps2.sqrt() }
}

/// Discrete random variable used as the BasicEst sampler.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteVariable {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DiscreteVariable {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self, QuantumError> {
        if values.len() != probs.len() || values.is_empty() {
            return Err(QuantumError::Input("values and probabilities must have equal nonzero length".into()));
        }
        if values.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(QuantumError::Input("values must be finite and nonnegative".into()));
        }
        if probs.iter().any(|p| *p < 0.0) || (probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(QuantumError::Input("probabilities must be nonnegative and sum to 1".into()));
        }
        Ok(Self { values, probs })
    }

    pub fn point(v: f64) -> Self {
        Self { values: vec![v], probs: vec![1.0] }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().zip(&self.probs).map(|(v, p)| v * p).sum()
    }

    /// `E[X·1{L ≤ X ≤ b}]`.
    pub fn truncated_mean(&self, lo: f64, b: f64) -> f64 {
        self.values.iter().zip(&self.probs).filter(|(v, _)| **v >= lo && **v <= b).map(|(v, p)| v * p).sum()
    }

    /// `√(E[X²]) / E[X]`.
    pub fn moment_ratio(&self) -> f64 {
        let m2: f64 = self.values.iter().zip(&self.probs).map(|(v, p)| v * v * p).sum();
        m2.sqrt() / self.mean()
    }
}

/// Sampler followed by `R_{L,H}|x⟩|0⟩ = |x⟩(√(1−x/H)|0⟩ + √(x/H)|1⟩)`
/// (values outside `[L, H]` rotate by zero). Layout `k·2 + ancilla`.
pub fn payload_task(var: &DiscreteVariable, lo: f64, h: f64) -> Result<AmplitudeTask, QuantumError> {
    if !(h > 0.0) {
        return Err(QuantumError::Input("upper truncation must be positive".into()));
    }
    let k = var.values.len();
    let mut v = CVec::zeros(2 * k);
    for (i, (x, q)) in var.values.iter().zip(&var.probs).enumerate() {
        let f = if *x >= lo && *x <= h { x / h } else { 0.0 };
        v[2 * i] = c((q * (1.0 - f)).sqrt());
        v[2 * i + 1] = c((q * f).sqrt());
    }
    let target = (0..2 * k).map(|i| i % 2 == 1).collect();
    AmplitudeTask::new(unitary_with_first_column(&v), target)
}

/// `2⌈9 ln(1/δ)⌉ + 1`.
pub fn repetitions_for(delta: f64) -> usize {
    2 * (9.0 * (1.0 / delta).ln()).ceil().max(0.0) as usize + 1
}

/// Median of `repetitions` amplitude-estimation runs on `task`.
pub fn basic_est(task: &AmplitudeTask, m: usize, repetitions: usize, seed: u64) -> Result<f64, QuantumError> {
    if repetitions % 2 == 0 {
        return Err(QuantumError::Input("repetitions must be odd".into()));
    }
    let mut est: Vec<f64> = amplitude_estimate_trials(task, m, repetitions, seed)?.iter().map(|o| o.p_tilde).collect();
    est.sort_by(f64::total_cmp);
    Ok(est[repetitions / 2])
}

#[derive(Debug, Clone, Serialize)]
pub struct ChebyshevResult {
    pub estimate: f64,
    pub b_final: f64,
    pub m_final: usize,
    pub repetitions: usize,
    /// `(b, p̃)` for every probed truncation level.
    pub probes: Vec<(f64, f64)>,
}

/// Mean estimate from a moment bound `Δ_U ≥ √E[X²]/E[X]` and an upper
/// bound `H > μ`. Truncation levels `H/2^k` are probed until a nonzero
/// BasicEst; the final level is raised by `⌈2Δ²/ε⌉` to bound the
/// truncation bias, and the register is sized for relative error `ε/2`.
pub fn quantum_chebyshev_mean(
    var: &DiscreteVariable,
    delta_u: f64,
    h: f64,
    eps: f64,
    delta: f64,
    seed: u64,
) -> Result<ChebyshevResult, QuantumError> {
    if !(delta_u >= 1.0 && h > 0.0 && eps > 0.0 && eps < 1.0 && delta > 0.0 && delta < 1.0) {
        return Err(QuantumError::Input("need Δ ≥ 1, H > 0, 0 < ε < 1, 0 < δ < 1".into()));
    }
    let reps = repetitions_for(delta);
    let m_probe = ((8.0 * delta_u).ceil() as usize).next_power_of_two().clamp(2, MAX_REGISTER);
    let mut probes = Vec::new();
    let mut found = None;
    for level in 0..64u32 {
        let b = h / 2f64.powi(level as i32);
        let task = payload_task(var, 0.0, b)?;
        let p = basic_est(&task, m_probe, reps, seed.wrapping_add(level as u64))?;
        probes.push((b, p));
        if p > 0.0 {
            found = Some((b, p));
            break;
        }
    }
    let (b_star, p_star) = found.ok_or(QuantumError::SearchExhausted)?;
    let b_final = h.min(b_star * (2.0 * delta_u * delta_u / eps).ceil());
    let p_guess = (p_star * b_star / b_final).max(1e-12);
    let m_final = ((4.0 * PI / (eps * p_guess.sqrt())).ceil() as usize).next_power_of_two().clamp(2, MAX_REGISTER);
    let task = payload_task(var, 0.0, b_final)?;
    let p = basic_est(&task, m_final, reps, seed.wrapping_add(1000))?;
    Ok(ChebyshevResult { estimate: b_final * p, b_final, m_final, repetitions: reps, probes })
}

#[derive(Debug, Clone)]
pub struct NondestructiveResult {
    pub estimate: f64,
    /// Measured median index `k` (estimate `sin²(πk/M)`).
    pub median_k: usize,
    pub outcome_probability: f64,
    pub restored: CVec,
    pub fidelity: f64,
}

/// `min(y, M − y)`: the sin² payload index shared by `±θ̃`.
pub fn sin2_index(y: usize, m: usize) -> usize {
    y.min(m - y)
}

/// Purity of the sin² payload register after one AE block.
pub fn sin2_payload_purity(task: &AmplitudeTask, m: usize) -> Result<f64, QuantumError> {
    let dist = ae_distribution(task, m)?;
    let mut by_k = vec![0.0; m / 2 + 1];
    for (y, p) in dist.iter().enumerate() {
        by_k[sin2_index(y, m)] += p;
    }
    Ok(by_k.iter().map(|p| p * p).sum())
}

/// Apply a block matrix to tensor factor `k` of `copies` equal factors.
fn apply_factor(v: &CVec, mat: &CMat, k: usize, copies: usize) -> CVec {
    let b = mat.nrows();
    let inner = b.pow((copies - 1 - k) as u32);
    let outer = b.pow(k as u32);
    let mut out = CVec::zeros(v.len());
    for o in 0..outer {
        for i in 0..inner {
            for row in 0..b {
                let mut acc = ZERO;
                for col in 0..b {
                    let m = mat[(row, col)];
                    if m != ZERO {
                        acc += m * v[(o * b + col) * inner + i];
                    }
                }
                out[(o * b + row) * inner + i] = acc;
            }
        }
    }
    out
}

/// Dense AE block unitary on `register ⊗ system` (layout `y·d_s + s`).
pub fn ae_block_unitary(task: &AmplitudeTask, m: usize) -> CMat {
    let ds = task.dim();
    let q = grover_iterate(task);
    let mut u = CMat::zeros(m * ds, m * ds);
    // Column (r0, s0): F_M|r0⟩ = Σ_j e^{2πi j r0/M}|j⟩/√M, then Q^j, then F_M⁻¹.
    let mut powers = Vec::with_capacity(m);
    let mut p = CMat::identity(ds, ds);
    for _ in 0..m {
        powers.push(p.clone());
        p = &q * p;
    }
    let norm = 1.0 / m as f64;
    for r0 in 0..m {
        for s0 in 0..ds {
            let col = r0 * ds + s0;
            for (j, pj) in powers.iter().enumerate() {
                for y in 0..m {
                    let e = ((j * r0) % m + m - (j * y) % m) % m;
                    let ph = Complex64::from_polar(norm, 2.0 * PI * e as f64 / m as f64);
                    for s in 0..ds {
                        u[(y * ds + s, col)] += ph * pj[(s, s0)];
                    }
                }
            }
        }
    }
    u
}

/// Nondestructive estimate from `s` copies of `U|0⟩`: AE blocks, sin²
/// payload, median, measurement of the median, then uncompute. The sin²
/// and median registers are classical functions of the phase registers,
/// so after the median is measured they uncompute to `|0⟩` exactly and
/// are not stored.
pub fn nondestructive_estimate(task: &AmplitudeTask, copies: usize, m: usize, seed: u64) -> Result<NondestructiveResult, QuantumError> {
    check_register(m)?;
    if copies % 2 == 0 || copies == 0 {
        return Err(QuantumError::Input("copy count must be odd".into()));
    }
    let block = m * task.dim();
    let total = (block as u128).pow(copies as u32) * m as u128;
    if total > MAX_DIM as u128 * 16 {
        return Err(QuantumError::DimensionCap { dim: total.min(usize::MAX as u128) as usize, cap: MAX_DIM * 16 });
    }
    let ublk = ae_block_unitary(task, m);
    let mut single = CVec::zeros(block);
    for (s, a) in task.prepared().iter().enumerate() {
        single[s] = *a;
    }
    let mut input = CVec::from_element(1, ONE);
    for _ in 0..copies {
        input = input.kronecker(&single);
    }
    let mut state = input.clone();
    for k in 0..copies {
        state = apply_factor(&state, &ublk, k, copies);
    }
    let ds = task.dim();
    let median_of = |idx: usize| -> usize {
        let mut ks: Vec<usize> = (0..copies)
            .map(|k| {
                let digit = (idx / block.pow((copies - 1 - k) as u32)) % block;
                sin2_index(digit / ds, m)
            })
            .collect();
        ks.sort_unstable();
        ks[copies / 2]
    };
    let labels: Vec<usize> = (0..state.len()).map(median_of).collect();
    let mut dist = vec![0.0; m / 2 + 1];
    for (i, z) in state.iter().enumerate() {
        dist[labels[i]] += z.norm_sqr();
    }
    let mut rng = stream(seed, 0);
    let k = sample_index(&dist, &mut rng);
    let prob = dist[k];
    for (i, z) in state.iter_mut().enumerate() {
        if labels[i] != k {
            *z = ZERO;
        }
    }
    state /= c(prob.sqrt());
    let inv = ublk.adjoint();
    for f in 0..copies {
        state = apply_factor(&state, &inv, f, copies);
    }
    let overlap = input.dotc(&state);
    let s = (PI * k as f64 / m as f64).sin();
    Ok(NondestructiveResult { estimate: s * s, median_k: k, outcome_probability: prob, restored: state, fidelity: overlap.norm_sqr() })
}
