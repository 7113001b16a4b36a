//! Dense statevector construction of the walk operator `W = S(2Π − I)`
//! from a reversible finite chain, with spectral checks against the
//! discriminant.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::chain::{discriminant, FiniteChain};
use crate::error::QuantumError;
use crate::linalg::{c, multiset_mismatch, normal_eigen, sym_eigen_desc, CMat, CVec, ONE, ZERO};

/// Largest chain size simulated densely (`d² × d²` operators).
pub const MAX_STATES: usize = 64;
pub const SPECTRUM_TOL: f64 = 1e-8;

fn check_size(chain: &FiniteChain) -> Result<usize, QuantumError> {
    let d = chain.len();
    if d > MAX_STATES {
        return Err(QuantumError::DimensionCap { dim: d * d, cap: MAX_STATES * MAX_STATES });
    }
    Ok(d)
}

/// `|φ_x⟩ = |x⟩ Σ_y √P_xy |y⟩` in the `x·d + y` layout.
pub fn phi(chain: &FiniteChain, x: usize) -> CVec {
    let d = chain.len();
    let mut v = CVec::zeros(d * d);
    for y in 0..d {
        v[x * d + y] = c(chain.p[(x, y)].sqrt());
    }
    v
}

/// `U|x⟩|0⟩ = |φ_x⟩`, completed per `x`-block by Gram–Schmidt.
pub fn build_u(chain: &FiniteChain) -> Result<CMat, QuantumError> {
    let d = check_size(chain)?;
    let mut u = CMat::zeros(d * d, d * d);
    for x in 0..d {
        let mut basis: Vec<Vec<Complex64>> = vec![(0..d).map(|y| c(chain.p[(x, y)].sqrt())).collect()];
        for e in 0..d {
            if basis.len() == d {
                break;
            }
            let mut v = vec![ZERO; d];
            v[e] = ONE;
            // Two passes keep the completion orthogonal to machine precision.
            for _ in 0..2 {
                for b in &basis {
                    let dot: Complex64 = b.iter().zip(&v).map(|(bi, vi)| bi.conj() * vi).sum();
                    for (vi, bi) in v.iter_mut().zip(b) {
                        *vi -= dot * bi;
                    }
                }
            }
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 1e-6 {
                basis.push(v.into_iter().map(|z| z / norm).collect());
            }
        }
        for (k, b) in basis.iter().enumerate() {
            for y in 0..d {
                u[(x * d + y, x * d + k)] = b[y];
            }
        }
    }
    Ok(u)
}

/// Isometry `T = Σ_x |φ_x⟩⟨x|` (`d² × d`).
pub fn isometry_t(chain: &FiniteChain) -> Result<CMat, QuantumError> {
    let d = check_size(chain)?;
    let mut t = CMat::zeros(d * d, d);
    for x in 0..d {
        for y in 0..d {
            t[(x * d + y, x)] = c(chain.p[(x, y)].sqrt());
        }
    }
    Ok(t)
}

/// `Π = TT†`.
pub fn projector(chain: &FiniteChain) -> Result<CMat, QuantumError> {
    let t = isometry_t(chain)?;
    Ok(&t * t.adjoint())
}

/// Register swap `S|x⟩|y⟩ = |y⟩|x⟩`.
pub fn swap(d: usize) -> CMat {
    let mut s = CMat::zeros(d * d, d * d);
    for x in 0..d {
        for y in 0..d {
            s[(y * d + x, x * d + y)] = ONE;
        }
    }
    s
}

/// `W = S(2Π − I)`.
pub fn build_walk(chain: &FiniteChain) -> Result<CMat, QuantumError> {
    let d = check_size(chain)?;
    let pi = projector(chain)?;
    let n = d * d;
    let mut w = CMat::zeros(n, n);
    for x in 0..d {
        for y in 0..d {
            let row = x * d + y;
            let src = y * d + x;
            for col in 0..n {
                let id = if src == col { ONE } else { ZERO };
                w[(row, col)] = pi[(src, col)] * 2.0 - id;
            }
        }
    }
    Ok(w)
}

/// `|π_W⟩ = Σ_x √π_x |φ_x⟩`.
pub fn stationary_walk_state(chain: &FiniteChain) -> Result<CVec, QuantumError> {
    let d = check_size(chain)?;
    let mut v = CVec::zeros(d * d);
    for x in 0..d {
        v += phi(chain, x) * c(chain.pi[x].sqrt());
    }
    let norm = v.norm();
    Ok(v / c(norm))
}

/// `|π⟩|0⟩`.
pub fn pi_ket_zero(chain: &FiniteChain) -> CVec {
    let d = chain.len();
    let mut v = CVec::zeros(d * d);
    for x in 0..d {
        v[x * d] = c(chain.pi[x].sqrt());
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseGap {
    pub lambda2: f64,
    pub delta: f64,
    pub phase_gap: f64,
    /// `√(2δ)`.
    pub lower_bound: f64,
    pub holds: bool,
}

pub fn phase_gap_of(d_eigs: &[f64]) -> PhaseGap {
    let lambda2 = d_eigs.get(1).copied().unwrap_or(-1.0).clamp(-1.0, 1.0);
    let delta = 1.0 - lambda2;
    let phase_gap = lambda2.acos();
    let lower_bound = (2.0 * delta).sqrt();
    PhaseGap { lambda2, delta, phase_gap, lower_bound, holds: phase_gap >= lower_bound * (1.0 - 1e-12) }
}

/// `arccos λ₂` of the discriminant.
pub fn phase_gap(chain: &FiniteChain) -> Result<PhaseGap, QuantumError> {
    let dm = discriminant(chain)?;
    let (vals, _) = sym_eigen_desc(&dm);
    Ok(phase_gap_of(&vals))
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    pub eigs_w: Vec<[f64; 2]>,
    pub eigs_d: Vec<f64>,
    pub predicted: Vec<[f64; 2]>,
    /// Largest distance in the pairing of predicted values with `spec(W)`,
    /// with every unpaired eigenvalue measured against `±1`.
    pub max_mismatch: f64,
    /// Largest residual of the 2×2 block relations on `span{T|λ⟩, ST|λ⟩}`.
    pub block_residual: f64,
    pub phase_gap: PhaseGap,
    pub passed: bool,
}

/// `λ ↦ λ ± i√(1−λ²)`; `λ = ±1` gives the single value `λ`.
pub fn predicted_walk_eigs(d_eigs: &[f64]) -> Vec<Complex64> {
    let mut out = Vec::new();
    for &l in d_eigs {
        let l = l.clamp(-1.0, 1.0);
        if 1.0 - l.abs() < 1e-12 {
            out.push(c(l.signum()));
        } else {
            let s = (1.0 - l * l).sqrt();
            out.push(Complex64::new(l, s));
            out.push(Complex64::new(l, -s));
        }
    }
    out
}

fn to_pair(z: &Complex64) -> [f64; 2] {
    [z.re, z.im]
}

/// Compare `spec(W)` with the discriminant prediction; failures are
/// reported, not raised.
pub fn verify_spectrum(chain: &FiniteChain) -> Result<SpectrumReport, QuantumError> {
    let d = check_size(chain)?;
    let dm = discriminant(chain)?;
    let (d_eigs, d_vecs) = sym_eigen_desc(&dm);
    let w = build_walk(chain)?;
    let (w_eigs, _) = normal_eigen(&w);
    let predicted = predicted_walk_eigs(&d_eigs);

    // Pair predicted values first, then the leftovers must sit at ±1.
    let mut used = vec![false; w_eigs.len()];
    let mut worst: f64 = 0.0;
    let mut order: Vec<usize> = (0..predicted.len()).collect();
    order.sort_by(|&i, &j| predicted[i].arg().total_cmp(&predicted[j].arg()));
    for i in order {
        let z = predicted[i];
        let (j, dist) = w_eigs
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, e)| (j, (e - z).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("W has d² ≥ predicted eigenvalues");
        used[j] = true;
        worst = worst.max(dist);
    }
    for (j, e) in w_eigs.iter().enumerate() {
        if !used[j] {
            worst = worst.max((e - ONE).norm().min((e + ONE).norm()));
        }
    }

    let t = isometry_t(chain)?;
    let s = swap(d);
    let mut block: f64 = 0.0;
    for (k, &l) in d_eigs.iter().enumerate() {
        let v = CVec::from_iterator(d, d_vecs.column(k).iter().map(|x| c(*x)));
        let tv = &t * &v;
        let stv = &s * &tv;
        block = block.max((&w * &tv - &stv).norm());
        block = block.max((&w * &stv - (&stv * c(2.0 * l) - &tv)).norm());
    }

    let gap = phase_gap_of(&d_eigs);
    Ok(SpectrumReport {
        eigs_w: w_eigs.iter().map(to_pair).collect(),
        eigs_d: d_eigs,
        predicted: predicted.iter().map(to_pair).collect(),
        max_mismatch: worst,
        block_residual: block,
        passed: worst < SPECTRUM_TOL && block < SPECTRUM_TOL,
        phase_gap: gap,
    })
}

/// Plain multiset comparison of `spec(W)` against the prediction padded
/// with `+1`/`−1` to size `d²`, choosing the padding from `spec(W)` itself.
pub fn padded_mismatch(w_eigs: &[Complex64], d_eigs: &[f64]) -> f64 {
    let mut want = predicted_walk_eigs(d_eigs);
    let plus = w_eigs.iter().filter(|e| (*e - ONE).norm() < 1e-6).count();
    let minus = w_eigs.iter().filter(|e| (*e + ONE).norm() < 1e-6).count();
    let want_plus = want.iter().filter(|e| (*e - ONE).norm() < 1e-6).count();
    let want_minus = want.iter().filter(|e| (*e + ONE).norm() < 1e-6).count();
    want.extend(std::iter::repeat_n(ONE, plus.saturating_sub(want_plus)));
    want.extend(std::iter::repeat_n(-ONE, minus.saturating_sub(want_minus)));
    multiset_mismatch(w_eigs, &want)
}

/// Amplitudes `√p_i` by `q` levels of conditional `R_y` splits on a
/// `2^q` statevector (most significant qubit first).
pub fn grover_rudolph_prepare(p: &[f64]) -> Result<CVec, QuantumError> {
    let len = p.len();
    if len == 0 || !len.is_power_of_two() {
        return Err(QuantumError::Input("probability vector length must be a power of two".into()));
    }
    if p.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(QuantumError::Input("probabilities must be finite and nonnegative".into()));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(QuantumError::Input(format!("probabilities sum to {total}")));
    }
    let q = len.trailing_zeros() as usize;
    // Prefix masses: level l holds 2^l sums.
    let mut amp = vec![0.0f64; len];
    amp[0] = 1.0;
    for level in 0..q {
        let width = len >> level;
        let half = width / 2;
        for prefix in 0..(1usize << level) {
            let base = prefix * width;
            let m: f64 = p[base..base + width].iter().sum();
            let m0: f64 = p[base..base + half].iter().sum();
            let theta = if m > 0.0 { 2.0 * (m0 / m).clamp(0.0, 1.0).sqrt().acos() } else { 0.0 };
            let (cs, sn) = ((theta / 2.0).cos(), (theta / 2.0).sin());
            for i in base..base + half {
                let (a0, a1) = (amp[i], amp[i + half]);
                amp[i] = cs * a0 - sn * a1;
                amp[i + half] = sn * a0 + cs * a1;
            }
        }
    }
    Ok(CVec::from_iterator(len, amp.into_iter().map(c)))
}

/// `φ₁ = √(−2δ² ln ξ₁) cos 2πξ₂`, `φ₂ = √(−2δ² ln ξ₁) sin 2πξ₂`.
pub fn box_muller(xi1: f64, xi2: f64, delta: f64) -> Result<(f64, f64), QuantumError> {
    if !(xi1 > 0.0 && xi1 <= 1.0) {
        return Err(QuantumError::Input(format!("xi1 = {xi1} must lie in (0, 1]")));
    }
    let r = (-2.0 * delta * delta * xi1.ln()).sqrt();
    let t = 2.0 * std::f64::consts::PI * xi2;
    Ok((r * t.cos(), r * t.sin()))
}

/// `T†ST`, which equals the discriminant for reversible chains.
pub fn t_dagger_s_t(chain: &FiniteChain) -> Result<DMatrix<f64>, QuantumError> {
    let t = isometry_t(chain)?;
    let m = t.adjoint() * swap(chain.len()) * &t;
    Ok(m.map(|z| z.re))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ChainMeta;
    use crate::linalg::unitarity_residual;

    fn chain(p: &[f64], d: usize) -> FiniteChain {
        FiniteChain::new((0..d).map(|i| vec![i as f64]).collect(), DMatrix::from_row_slice(d, d, p), ChainMeta::default())
            .unwrap()
    }

    #[test]
    fn u_first_columns_and_unitarity() {
        let ch = chain(&[0.5, 0.5, 0.5, 0.5], 2);
        let u = build_u(&ch).unwrap();
        assert!(unitarity_residual(&u) < 1e-10);
        let h = 0.5f64.sqrt();
        assert!((u[(0, 0)].re - h).abs() < 1e-15 && (u[(1, 0)].re - h).abs() < 1e-15);
        assert_eq!(u[(2, 0)], ZERO);
    }

    #[test]
    fn deterministic_swap_walk_squares_to_identity() {
        let ch = chain(&[0.0, 1.0, 1.0, 0.0], 2);
        let w = build_walk(&ch).unwrap();
        let w2 = &w * &w;
        assert!(crate::linalg::max_abs_diff(&w2, &CMat::identity(4, 4)) < 1e-12);
    }

    #[test]
    fn uniform_two_state_stationary_state() {
        let ch = chain(&[0.5, 0.5, 0.5, 0.5], 2);
        let v = stationary_walk_state(&ch).unwrap();
        for z in v.iter() {
            assert!((z.re - 0.5).abs() < 1e-15);
        }
        let rep = verify_spectrum(&ch).unwrap();
        assert!(rep.passed, "{rep:?}");
        let eigs: Vec<Complex64> = rep.eigs_w.iter().map(|p| Complex64::new(p[0], p[1])).collect();
        for want in [ONE, Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)] {
            assert!(eigs.iter().any(|e| (e - want).norm() < 1e-10));
        }
    }

    #[test]
    fn phase_gap_examples() {
        let g = phase_gap_of(&[1.0, 0.0]);
        assert!((g.phase_gap - std::f64::consts::FRAC_PI_2).abs() < 1e-15 && g.holds);
        let g = phase_gap_of(&[1.0, 0.99]);
        assert!((g.phase_gap - 0.141_539_473_324_4).abs() < 1e-10);
        assert!(g.holds && g.phase_gap - g.lower_bound < 2e-4);
    }

    #[test]
    fn grover_rudolph_examples() {
        let v = grover_rudolph_prepare(&[0.25; 4]).unwrap();
        assert!(v.iter().all(|z| (z.re - 0.5).abs() < 1e-15));
        let v = grover_rudolph_prepare(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(v[0], ONE);
        assert!(grover_rudolph_prepare(&[-0.1, 1.1]).is_err());
        assert!(grover_rudolph_prepare(&[0.5, 0.25, 0.25]).is_err());
    }

    #[test]
    fn box_muller_examples() {
        assert_eq!(box_muller(1.0, 0.3, 2.0).unwrap(), (0.0, 0.0));
        let (a, b) = box_muller(0.5, 0.0, 1.0).unwrap();
        assert!((a - (-2.0 * 0.5f64.ln()).sqrt()).abs() < 1e-15 && b == 0.0);
        assert!(box_muller(0.0, 0.5, 1.0).is_err());
    }
}
