//! Noise spectra, variances and cooling figures of merit.
//!
//! Mechanical spectra come from the closed-form susceptibility path; the
//! transfer-matrix path solves the linearised Langevin system directly and
//! serves both as the source of the optical quadrature spectra and as a
//! cross-check of the mechanical ones.

use nalgebra::{Matrix3, Matrix4, Matrix4x3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{HBAR, K_B, TWO_PI};
use crate::error::{Error, Result};
use crate::params::{effective_temperature, SystemParams};
use crate::quadrature::{integrate, split_at, QuadOptions, Segment};
use crate::response::{self, ResponseEval};
use crate::stability::{analyze, drift_matrix};
use crate::steady_state::SteadyBranch;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Ratio of the one-octave tail of ⟨δP²⟩ to its core integral above which
/// the cutoff is considered too small.
pub const TAIL_LIMIT: f64 = 1e-3;

/// δn_c / n_c above this flags the linearisation as suspect.
pub const LINEARIZATION_LIMIT: f64 = 0.1;

pub fn s_thermal(params: &SystemParams, omega: f64) -> f64 {
    let pre = params.gamma_m / params.omega_m;
    if params.temperature == 0.0 {
        return pre * omega.abs();
    }
    let x = HBAR * omega / (2.0 * K_B * params.temperature);
    // ω·coth(x) = (2k_BT/ħ)·x·coth(x); x·coth(x) = 1 + x²/3 − x⁴/45 + …
    let x_coth = if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 + x2 / 3.0 - x2 * x2 / 45.0
    } else {
        x / x.tanh()
    };
    pre * 2.0 * K_B * params.temperature / HBAR * x_coth
}

/// Symmetrised back-action force spectrum ½(|Λ(ω)|² + |Λ(−ω)|²).
pub fn s_backaction(r: &ResponseEval) -> f64 {
    0.5 * (r.lambda_force.norm_sqr() + r.lambda_force_neg.norm_sqr())
}

pub fn s_position(params: &SystemParams, r: &ResponseEval) -> f64 {
    r.chi_eff.norm_sqr() * (s_backaction(r) + s_thermal(params, r.omega))
}

pub fn s_momentum(params: &SystemParams, r: &ResponseEval) -> f64 {
    (r.omega / params.omega_m).powi(2) * s_position(params, r)
}

/// Thermal-dominated form |χ_eff|²(2k_BT/ħω_m + 1)γ_m.
pub fn s_position_thermal_approx(params: &SystemParams, r: &ResponseEval) -> f64 {
    r.chi_eff.norm_sqr()
        * (2.0 * K_B * params.temperature / (HBAR * params.omega_m) + 1.0)
        * params.gamma_m
}

/// Noise input matrix in the (ξ, c_in, c_in†) basis.
fn input_matrix(params: &SystemParams, b: &SteadyBranch) -> Matrix4x3<Complex64> {
    let k = params.kappa;
    let a = (k + b.kappa_tilde) / (2.0 * k).sqrt();
    let h = a / 2f64.sqrt();
    let f = params.g / (2.0 * k).sqrt();
    let z = Complex64::new(0.0, 0.0);
    let one = Complex64::new(1.0, 0.0);
    Matrix4x3::new(
        z, z, z,
        one, -I * f * b.c_bar.conj(), I * f * b.c_bar,
        z, h.into(), h.into(),
        z, -I * h, I * h,
    )
}

/// Frequency-domain transfer from the noise inputs to (δQ, δP, δx, δy).
pub struct TransferModel {
    drift: Matrix4<Complex64>,
    input: Matrix4x3<Complex64>,
    params: SystemParams,
}

impl TransferModel {
    pub fn new(params: &SystemParams, b: &SteadyBranch) -> Self {
        TransferModel {
            drift: drift_matrix(params, b).map(Complex64::from),
            input: input_matrix(params, b),
            params: *params,
        }
    }

    fn propagate(&self, omega: f64) -> Result<Matrix4x3<Complex64>> {
        let a = Matrix4::<Complex64>::identity() * (-I * omega) - self.drift;
        a.lu()
            .solve(&self.input)
            .filter(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
            .ok_or(Error::SingularTransfer { omega })
    }

    /// Symmetrised spectral matrix of (δQ, δP, δx, δy) at ω.
    pub fn spectra(&self, omega: f64) -> Result<Matrix4<f64>> {
        let cp = self.propagate(omega)?;
        let cm = self.propagate(-omega)?;
        let h = Complex64::new(0.5, 0.0);
        let z = Complex64::new(0.0, 0.0);
        let d = Matrix3::new(
            s_thermal(&self.params, omega).into(), z, z,
            z, z, h,
            z, h, z,
        );
        let s = cp * d * cm.transpose();
        let re = s.map(|z| z.re);
        Ok((re + re.transpose()) * 0.5)
    }
}

pub fn transfer_matrix_spectra(params: &SystemParams, b: &SteadyBranch, omega: f64) -> Result<Matrix4<f64>> {
    TransferModel::new(params, b).spectra(omega)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectraOptions {
    /// Core integration half-width in units of κ.
    pub omega_max_over_kappa: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for SpectraOptions {
    fn default() -> Self {
        SpectraOptions { omega_max_over_kappa: 20.0, rel_tol: 1e-6, max_intervals: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegrationDiag {
    pub omega_max: f64,
    pub rel_tol: f64,
    pub breakpoints: usize,
    pub intervals: usize,
    pub evaluations: usize,
    pub max_rel_error: f64,
    /// Contribution of |ω| > Ω_max to ⟨δx²⟩, integrated to infinity.
    pub var_x_tail: f64,
    /// One-octave extension of ⟨δP²⟩ beyond Ω_max, relative to the core.
    pub var_p_tail_ratio: f64,
    pub peak_omega: f64,
    pub peak_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectraResult {
    pub var_q: f64,
    pub var_p: f64,
    pub n_m: f64,
    /// n_m came out negative within tolerance and was clamped to zero.
    pub n_m_clamped: bool,
    pub t_eff: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov_xy: f64,
    pub delta_n_c: f64,
    pub squeezing_db: f64,
    /// Squeezing of the best rotated quadrature.
    pub rotated_squeezing_db: f64,
    pub linearization_suspect: bool,
    pub integration_diag: IntegrationDiag,
}

fn squeezing_db(var: f64) -> f64 {
    -10.0 * (var / 0.5).log10()
}

fn breakpoints(params: &SystemParams, b: &SteadyBranch, peak: f64, width: f64) -> Vec<f64> {
    let mut pts = vec![0.0, b.kappa_tilde, b.delta_tilde.abs(), params.omega_m];
    for k in [0.0, 1.0, 3.0, 10.0, 30.0, 100.0, 1e3, 1e4] {
        pts.push(peak + k * width);
        pts.push(peak - k * width);
    }
    let neg: Vec<f64> = pts.iter().map(|x| -x).collect();
    pts.extend(neg);
    pts
}

pub fn integrate_variances(params: &SystemParams, b: &SteadyBranch, opts: &SpectraOptions) -> Result<SpectraResult> {
    let report = analyze(params, b);
    if !report.eig_stable {
        return Err(Error::UnstablePoint { max_re: report.max_re });
    }
    let (peak, width) = response::mechanical_peak(params, b)?;
    let w_max = opts.omega_max_over_kappa * params.kappa;
    let model = TransferModel::new(params, b);
    let quad = QuadOptions { rel_tol: opts.rel_tol, abs_tol: 1e-12, max_intervals: opts.max_intervals };

    let mech = |w: f64| -> Result<(f64, f64)> {
        let r = response::evaluate(params, b, w)?;
        let sq = s_position(params, &r);
        Ok((sq, sq * (w / params.omega_m).powi(2)))
    };

    let pts = breakpoints(params, b, peak, width);
    let core_segments = split_at(-w_max, w_max, &pts);
    let core = integrate(
        |w| {
            let (sq, sp) = mech(w)?;
            let s = model.spectra(w)?;
            Ok([sq, sp, s[(2, 2)], s[(3, 3)], s[(2, 3)]])
        },
        &core_segments,
        &quad,
    )?;
    let tails = integrate(
        |w| {
            let (sq, _) = mech(w)?;
            let s = model.spectra(w)?;
            Ok([sq, s[(2, 2)], s[(3, 3)], s[(2, 3)]])
        },
        &[Segment::LowerTail(w_max), Segment::UpperTail(w_max)],
        &quad,
    )?;
    let octave = integrate(
        |w| Ok([mech(w)?.1]),
        &[Segment::Finite(-2.0 * w_max, -w_max), Segment::Finite(w_max, 2.0 * w_max)],
        &quad,
    )?;

    let names = ["var_q", "var_p", "var_x", "var_y", "cov_xy"];
    if !core.converged {
        let worst = (0..5)
            .max_by(|&i, &j| {
                let ri = core.error[i] / core.value[i].abs();
                let rj = core.error[j] / core.value[j].abs();
                ri.total_cmp(&rj)
            })
            .unwrap_or(0);
        return Err(Error::QuadratureNotConverged { component: names[worst], rel_error: core.max_rel_error() });
    }
    if !tails.converged {
        return Err(Error::QuadratureNotConverged { component: "tail", rel_error: tails.max_rel_error() });
    }

    let norm = 1.0 / TWO_PI;
    let var_q = (core.value[0] + tails.value[0]) * norm;
    let var_p = core.value[1] * norm;
    let var_x = (core.value[2] + tails.value[1]) * norm;
    let var_y = (core.value[3] + tails.value[2]) * norm;
    let cov_xy = (core.value[4] + tails.value[3]) * norm;

    let tail_ratio = octave.value[0] / core.value[1];
    if tail_ratio > TAIL_LIMIT {
        return Err(Error::TailNotConverged {
            component: "var_p",
            ratio: tail_ratio,
            suggested_omega_max: w_max * tail_ratio / TAIL_LIMIT,
        });
    }

    let raw_n = 0.5 * (var_q + var_p - 1.0);
    let n_m = raw_n.max(0.0);
    let delta_n_c = 0.5 * (var_x + var_y - 1.0);
    let mean = 0.5 * (var_x + var_y);
    let spread = (0.25 * (var_x - var_y).powi(2) + cov_xy * cov_xy).sqrt();

    Ok(SpectraResult {
        var_q,
        var_p,
        n_m,
        n_m_clamped: raw_n < 0.0,
        t_eff: effective_temperature(params.omega_m, n_m),
        var_x,
        var_y,
        cov_xy,
        delta_n_c,
        squeezing_db: squeezing_db(var_x.min(var_y)),
        rotated_squeezing_db: squeezing_db(mean - spread),
        linearization_suspect: delta_n_c / b.n_c > LINEARIZATION_LIMIT,
        integration_diag: IntegrationDiag {
            omega_max: w_max,
            rel_tol: opts.rel_tol,
            breakpoints: core_segments.len() - 1,
            intervals: core.intervals + tails.intervals,
            evaluations: core.evaluations + tails.evaluations + octave.evaluations,
            max_rel_error: core.max_rel_error().max(tails.max_rel_error()),
            var_x_tail: tails.value[1] * norm,
            var_p_tail_ratio: tail_ratio,
            peak_omega: peak,
            peak_width: width,
        },
    })
}

/// Thermal-dominated estimate of the phonon number,
/// (k_BTγ_m/2πħω_m)∫(1+ω²/ω_m²)|χ_eff|²dω − ½.
pub fn approx_phonon_number(params: &SystemParams, b: &SteadyBranch, opts: &SpectraOptions) -> Result<f64> {
    let (peak, width) = response::mechanical_peak(params, b)?;
    let w_max = opts.omega_max_over_kappa * params.kappa;
    let f = |w: f64| -> Result<[f64; 1]> {
        let r = response::evaluate(params, b, w)?;
        Ok([(1.0 + (w / params.omega_m).powi(2)) * r.chi_eff.norm_sqr()])
    };
    let mut segments = split_at(-w_max, w_max, &breakpoints(params, b, peak, width));
    segments.push(Segment::LowerTail(w_max));
    segments.push(Segment::UpperTail(w_max));
    let quad = QuadOptions { rel_tol: opts.rel_tol, abs_tol: 0.0, max_intervals: opts.max_intervals };
    let r = integrate(f, &segments, &quad)?;
    if !r.converged {
        return Err(Error::QuadratureNotConverged { component: "approx_phonon_number", rel_error: r.max_rel_error() });
    }
    let pre = K_B * params.temperature * params.gamma_m / (TWO_PI * HBAR * params.omega_m);
    Ok(pre * r.value[0] - 0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{thermal_occupation, Config, OperatingPoint};
    use crate::steady_state::solve_selfconsistent;

    fn preset(name: &str) -> (SystemParams, OperatingPoint) {
        Config::preset(name).unwrap().normalize().unwrap()
    }

    fn upper(p: &SystemParams, pt: &OperatingPoint) -> SteadyBranch {
        *solve_selfconsistent(p, pt).unwrap().branches.last().unwrap()
    }

    #[test]
    fn thermal_spectrum_limits() {
        let (p, _) = preset("room_temp_membrane");
        let zero = s_thermal(&p, 0.0);
        let expect = 2.0 * p.gamma_m * K_B * p.temperature / (HBAR * p.omega_m);
        assert!((zero / expect - 1.0).abs() < 1e-15);
        assert_eq!(s_thermal(&p, 1e5), s_thermal(&p, -1e5));
        let edge = s_thermal(&p, 0.2 * p.kappa);
        assert!((edge / zero - 1.0).abs() < 1e-4);
        let cold = p.with_temperature(0.0);
        assert_eq!(s_thermal(&cold, -3.0), p.gamma_m / p.omega_m * 3.0);
        // Series and closed form agree across the switch-over.
        let w = 1e-4 * 2.0 * K_B * p.temperature / HBAR;
        let closed = p.gamma_m / p.omega_m * w / (HBAR * w / (2.0 * K_B * p.temperature)).tanh();
        assert!((s_thermal(&p, w * 0.999999) / closed - 1.0).abs() < 1e-9);
    }

    #[test]
    fn transfer_path_matches_closed_form() {
        let (p, pt) = preset("room_temp_membrane");
        for (uhz, det) in [(0.0, 1.0), (50.0, 1.43), (100.0, 2.15), (200.0, 4.68)] {
            let b = upper(&p, &pt.with_kerr(uhz * 1e-6).with_detuning(det * p.kappa));
            let model = TransferModel::new(&p, &b);
            for k in -100..=100 {
                let w = k as f64 * 0.003 * p.kappa + 0.5 * p.omega_m;
                let r = response::evaluate(&p, &b, w).unwrap();
                let s = model.spectra(w).unwrap();
                let sq = s_position(&p, &r);
                assert!((s[(0, 0)] / sq - 1.0).abs() < 1e-8, "{uhz} {w}: {} vs {sq}", s[(0, 0)]);
                assert!((s[(1, 1)] / s_momentum(&p, &r) - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn vacuum_in_vacuum_out() {
        let (p, pt) = preset("room_temp_membrane");
        let p = p.with_g(0.0);
        let b = upper(&p, &pt.with_kerr(0.0));
        // Intracavity spectra are Lorentzians whose areas carry the vacuum ½.
        for w in [-1e8, -1e6, 0.0, 3e5, 5e7] {
            let s = transfer_matrix_spectra(&p, &b, w).unwrap();
            let m = transfer_matrix_spectra(&p, &b, -w).unwrap();
            assert!((s[(2, 2)] + m[(2, 2)] - s[(3, 3)] - m[(3, 3)]).abs() < 1e-12 * s[(2, 2)]);
        }
        let r = integrate_variances(&p, &b, &SpectraOptions::default()).unwrap();
        assert!((r.var_x - 0.5).abs() < 1e-6, "{}", r.var_x);
        assert!((r.var_y - 0.5).abs() < 1e-6);
        assert!(r.delta_n_c.abs() < 1e-6);
    }

    #[test]
    fn kerr_alone_squeezes_a_rotated_quadrature() {
        let (p, pt) = preset("room_temp_membrane");
        let p = p.with_g(0.0);
        // Δ = 2Ũ by construction.
        let (_, b) =
            crate::steady_state::solve_for_u_tilde(&p, pt.power, 0.6 * p.kappa, 0.3 * p.kappa).unwrap();
        let model = TransferModel::new(&p, &b);
        let min = (-200..=200)
            .map(|k| {
                let s = model.spectra(k as f64 * 0.01 * p.kappa).unwrap();
                let (a, d, c) = (s[(2, 2)], s[(3, 3)], s[(2, 3)]);
                0.5 * (a + d) - (0.25 * (a - d).powi(2) + c * c).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        assert!(min < 0.5, "{min}");
    }

    #[test]
    fn uncoupled_membrane_thermalises() {
        let (p, pt) = preset("room_temp_membrane");
        let p = p.with_g(0.0);
        let b = upper(&p, &pt);
        let r = integrate_variances(&p, &b, &SpectraOptions::default()).unwrap();
        let n_th = thermal_occupation(p.omega_m, p.temperature);
        assert!((r.n_m / n_th - 1.0).abs() < 5e-3, "{} vs {n_th}", r.n_m);
        assert!((r.t_eff / p.temperature - 1.0).abs() < 5e-3);
        let approx = approx_phonon_number(&p, &b, &SpectraOptions::default()).unwrap();
        assert!((approx / n_th - 1.0).abs() < 5e-3);
    }

    #[test]
    fn unstable_point_is_rejected() {
        let (p, pt) = preset("room_temp_membrane");
        let pt = pt.with_kerr(TWO_PI * 200e-6).with_detuning(4.87 * p.kappa);
        let b = upper(&p, &pt);
        assert!(matches!(
            integrate_variances(&p, &b, &SpectraOptions::default()),
            Err(Error::UnstablePoint { .. })
        ));
    }

    #[test]
    fn tolerance_halving_is_stable() {
        let (p, pt) = preset("room_temp_membrane");
        let b = upper(&p, &pt.with_kerr(100e-6).with_detuning(2.15 * p.kappa));
        let a = integrate_variances(&p, &b, &SpectraOptions::default()).unwrap();
        let tight = SpectraOptions { rel_tol: 0.5e-6, ..Default::default() };
        let c = integrate_variances(&p, &b, &tight).unwrap();
        assert!((a.var_q / c.var_q - 1.0).abs() < 1e-5);
        assert!(a.var_x * a.var_y >= 0.25 - 1e-6);
    }

    #[test]
    fn cryogenic_backaction_dominates_near_resonance() {
        let (p, pt) = preset("cryogenic_membrane");
        let b = upper(&p, &pt);
        let r = response::evaluate(&p, &b, p.omega_m).unwrap();
        assert!(s_backaction(&r) > s_thermal(&p, p.omega_m));
    }
}
