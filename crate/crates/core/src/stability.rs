//! Linear stability of a steady branch: drift matrix, Routh-Hurwitz
//! conditions and the eigenvalue criterion.
//!
//! The s₃ expression multiplies terms of order κ⁵ and mixes contributions
//! spanning ~15 decades, so the two verdicts are only compared outside a
//! marginal band |max Re λ| ≤ 10⁻⁶κ.

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::params::SystemParams;
use crate::steady_state::SteadyBranch;

pub const MARGINAL_BAND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    /// s₁, s₂, s₃ all positive.
    Stable,
    /// s₁ < 0 or s₂ < 0 (not all three negative).
    S12Negative,
    /// s₁, s₂ > 0 but s₃ < 0.
    S3Negative,
    AllNegative,
}

impl Region {
    pub fn classify(s1: f64, s2: f64, s3: f64) -> Self {
        let neg = |s: f64| !(s > 0.0);
        match (neg(s1), neg(s2), neg(s3)) {
            (false, false, false) => Region::Stable,
            (true, true, true) => Region::AllNegative,
            (false, false, true) => Region::S3Negative,
            _ => Region::S12Negative,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Region::Stable => "stable",
            Region::S12Negative => "s12_negative",
            Region::S3Negative => "s3_negative",
            Region::AllNegative => "all_negative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub eigenvalues: [Complex64; 4],
    pub max_re: f64,
    pub rh_stable: bool,
    pub eig_stable: bool,
    pub agreement: bool,
    /// |max_re| ≤ 10⁻⁶κ: disagreement here is expected rounding, not a bug.
    pub marginal: bool,
}

impl StabilityReport {
    pub fn region(&self) -> Region {
        Region::classify(self.s1, self.s2, self.s3)
    }
}

/// Drift matrix of u = (δQ, δP, δx, δy).
pub fn drift_matrix(params: &SystemParams, b: &SteadyBranch) -> Matrix4<f64> {
    let (wm, gm, g) = (params.omega_m, params.gamma_m, params.g);
    let sqrt2 = std::f64::consts::SQRT_2;
    let (sin, cos) = b.phi.sin_cos();
    let (kt, ut, dt) = (b.kappa_tilde, b.u_tilde, b.delta_tilde);
    #[rustfmt::skip]
    let m = Matrix4::new(
        0.0, wm, 0.0, 0.0,
        -wm, -gm, 0.0, -g * (2.0 * b.p_l).sqrt(),
        sqrt2 * g * (b.p_l.sqrt() - b.c_r), 0.0, -kt - 2.0 * ut * sin, dt + 2.0 * ut * cos,
        -sqrt2 * g * b.c_i, 0.0, -dt + 2.0 * ut * cos, -kt + 2.0 * ut * sin,
    );
    m
}

/// (s₁, s₂, s₃); the branch is stable iff all three are positive.
pub fn routh_hurwitz(params: &SystemParams, b: &SteadyBranch) -> (f64, f64, f64) {
    let (wm, gm, g) = (params.omega_m, params.gamma_m, params.g);
    let (kt, ut, dt) = (b.kappa_tilde, b.u_tilde, b.delta_tilde);
    let (sin, cos) = b.phi.sin_cos();
    let sp = b.p_l.sqrt();
    let g2 = g * g;
    let detuned = kt * kt + dt * dt - 4.0 * ut * ut;

    let s1 = 2.0 * kt * ((kt + gm).powi(2) + dt * dt - 4.0 * ut * ut)
        + 2.0 * sp * g2 * b.c_i * wm
        + gm * wm * wm;
    let s2 = 2.0 * sp * g2 * ((b.c_r - sp) * (dt - 2.0 * ut * cos) - b.c_i * (kt + 2.0 * ut * sin))
        + detuned * wm;
    let s3 = s1 * (detuned * gm + 2.0 * wm * (kt * wm - sp * g2 * b.c_i))
        - (2.0 * kt + gm).powi(2) * s2 * wm;
    (s1, s2, s3)
}

/// Eigenvalues (sorted by real then imaginary part) and the largest real part.
pub fn eigen_stability(m: &Matrix4<f64>) -> ([Complex64; 4], f64) {
    let ev = m.complex_eigenvalues();
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for (o, e) in out.iter_mut().zip(ev.iter()) {
        *o = Complex64::new(e.re, e.im);
    }
    out.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let max_re = out.iter().map(|e| e.re).fold(f64::NEG_INFINITY, f64::max);
    (out, max_re)
}

pub fn analyze(params: &SystemParams, b: &SteadyBranch) -> StabilityReport {
    let (s1, s2, s3) = routh_hurwitz(params, b);
    let (eigenvalues, max_re) = eigen_stability(&drift_matrix(params, b));
    let rh_stable = s1 > 0.0 && s2 > 0.0 && s3 > 0.0;
    let eig_stable = max_re < 0.0;
    StabilityReport {
        s1,
        s2,
        s3,
        eigenvalues,
        max_re,
        rh_stable,
        eig_stable,
        agreement: rh_stable == eig_stable,
        marginal: max_re.abs() <= MARGINAL_BAND * params.kappa,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Config, OperatingPoint};
    use crate::steady_state::solve_selfconsistent;

    fn room() -> (SystemParams, OperatingPoint) {
        Config::preset("room_temp_membrane").unwrap().normalize().unwrap()
    }

    #[test]
    fn uncoupled_linear_cavity_spectrum() {
        let (p, pt) = room();
        let p = p.with_g(0.0);
        let pt = pt.with_kerr(0.0);
        let b = solve_selfconsistent(&p, &pt).unwrap().branches[0];
        let (ev, _) = eigen_stability(&drift_matrix(&p, &b));
        let mech = Complex64::new(
            -p.gamma_m / 2.0,
            (p.omega_m.powi(2) - p.gamma_m.powi(2) / 4.0).sqrt(),
        );
        let cav = Complex64::new(-p.kappa, pt.detuning);
        for target in [mech, mech.conj(), cav, cav.conj()] {
            let best = ev
                .iter()
                .map(|e| (e - target).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6 * target.norm(), "{target} not in {ev:?}");
        }
        let (s1, s2, _) = routh_hurwitz(&p, &b);
        let k = p.kappa;
        let d = pt.detuning;
        let s1_expected =
            2.0 * k * (k + p.gamma_m).powi(2) + 2.0 * k * d * d + p.gamma_m * p.omega_m.powi(2);
        assert!((s1 / s1_expected - 1.0).abs() < 1e-12);
        assert!((s2 / ((k * k + d * d) * p.omega_m) - 1.0).abs() < 1e-12);
        assert!(analyze(&p, &b).rh_stable);
    }

    #[test]
    fn trace_identity() {
        let (p, pt) = room();
        for (uhz, det) in [(0.0, 1.0), (50.0, 3.0), (200.0, 4.87), (150.0, 0.2)] {
            let pt = pt.with_kerr(uhz * 1e-6).with_detuning(det * p.kappa);
            for b in solve_selfconsistent(&p, &pt).unwrap().branches {
                let m = drift_matrix(&p, &b);
                assert!(m.iter().all(|x| x.is_finite()));
                let expected = -p.gamma_m - 2.0 * b.kappa_tilde;
                assert!((m.trace() - expected).abs() <= 1e-12 * expected.abs());
                let (ev, _) = eigen_stability(&m);
                let sum: f64 = ev.iter().map(|e| e.re).sum();
                assert!((sum - expected).abs() <= 1e-8 * expected.abs());
            }
        }
    }

    #[test]
    fn kerr_only_cavity_block() {
        let (p, pt) = room();
        let p = p.with_g(0.0);
        let pt = pt.with_kerr(100e-6).with_detuning(2.0 * p.kappa);
        let b = solve_selfconsistent(&p, &pt).unwrap().branches[0];
        let (ev, _) = eigen_stability(&drift_matrix(&p, &b));
        let disc = Complex64::new(4.0 * b.u_tilde.powi(2) - b.delta_tilde.powi(2), 0.0).sqrt();
        for target in [-b.kappa_tilde + disc, -b.kappa_tilde - disc] {
            let best = ev
                .iter()
                .map(|e| (e - target).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-6 * p.kappa);
        }
    }

    #[test]
    fn region_partition() {
        assert_eq!(Region::classify(1.0, 1.0, 1.0), Region::Stable);
        assert_eq!(Region::classify(-1.0, 1.0, 1.0), Region::S12Negative);
        assert_eq!(Region::classify(1.0, -1.0, -1.0), Region::S12Negative);
        assert_eq!(Region::classify(1.0, 1.0, -1.0), Region::S3Negative);
        assert_eq!(Region::classify(-1.0, -1.0, -1.0), Region::AllNegative);
    }

    #[test]
    fn s3_violation_is_slow_mechanical_instability() {
        // Literal 2π·200 µHz at Δ = 4.87κ sits on the s₃ < 0 tail of the only branch.
        let (p, pt) = room();
        let pt = pt
            .with_kerr(crate::constants::TWO_PI * 200e-6)
            .with_detuning(4.87 * p.kappa);
        let s = solve_selfconsistent(&p, &pt).unwrap();
        let b = s.branches.last().unwrap();
        let r = analyze(&p, b);
        assert!(r.s1 > 0.0 && r.s2 > 0.0 && r.s3 < 0.0);
        assert!(r.max_re > 0.0 && r.max_re < 1e-3 * p.kappa);
    }
}
