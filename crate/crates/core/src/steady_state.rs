//! Mean-field steady states.
//!
//! The occupation n = |c̄|² obeys
//!
//! ```text
//! 4U²n³ − 4ΔUn² + (κ̃² + Δ²)n = P_l(κ + κ̃)²,      κ̃ = κ + gQ̄,
//! ```
//!
//! where Q̄ = −2g√P_l·Im(c̄)/ω_m depends on the solution itself. The closed-form
//! cubic for fixed κ̃ is exposed for reference; the solver eliminates κ̃
//! exactly and brackets the roots of the resulting scalar equation.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{derive_drive, OperatingPoint, SystemParams};

pub const MAX_FIXED_POINT_ITERATIONS: usize = 200;
pub const FIXED_POINT_TOL: f64 = 1e-12;
/// Two converged roots closer than this (relative) are reported as one.
pub const COLLISION_TOL: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchLabel {
    Only,
    Lower,
    Middle,
    Upper,
}

impl BranchLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BranchLabel::Only => "only",
            BranchLabel::Lower => "lower",
            BranchLabel::Middle => "middle",
            BranchLabel::Upper => "upper",
        }
    }
}

/// One self-consistent mean-field solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyBranch {
    pub n_c: f64,
    pub c_bar: Complex64,
    pub c_r: f64,
    pub c_i: f64,
    pub q_bar: f64,
    pub p_bar: f64,
    pub kappa_tilde: f64,
    /// Ũ = U·n_c
    pub u_tilde: f64,
    /// Δ̃ = Δ − 4Ũ
    pub delta_tilde: f64,
    /// φ = arg(c̄²)
    pub phi: f64,
    /// ζ = √P_l − c̄
    pub zeta: Complex64,
    pub p_l: f64,
    pub branch_label: BranchLabel,
}

impl SteadyBranch {
    /// Assemble every derived field from an occupation and the linewidth used
    /// to obtain it.
    pub fn from_occupation(
        params: &SystemParams,
        point: &OperatingPoint,
        p_l: f64,
        n: f64,
        kappa_tilde: f64,
    ) -> Self {
        let c_bar = mean_amplitude(params, point, p_l, n, kappa_tilde);
        let q_bar = mean_displacement(params, p_l, c_bar);
        let n_c = c_bar.norm_sqr();
        let u_tilde = point.kerr * n_c;
        SteadyBranch {
            n_c,
            c_bar,
            c_r: c_bar.re,
            c_i: c_bar.im,
            q_bar,
            p_bar: 0.0,
            kappa_tilde: params.kappa + params.g * q_bar,
            u_tilde,
            delta_tilde: point.detuning - 4.0 * u_tilde,
            phi: (c_bar * c_bar).arg(),
            zeta: Complex64::new(p_l.sqrt(), 0.0) - c_bar,
            p_l,
            branch_label: BranchLabel::Only,
        }
    }

    /// Residual of the occupation cubic at this branch's own κ̃, normalised
    /// by P_l(κ + κ̃)².
    pub fn cubic_residual(&self, params: &SystemParams, point: &OperatingPoint) -> f64 {
        let rhs = self.p_l * (params.kappa + self.kappa_tilde).powi(2);
        if rhs == 0.0 {
            return self.n_c.abs();
        }
        let (u, d, n) = (point.kerr, point.detuning, self.n_c);
        let lhs = 4.0 * u * u * n.powi(3) - 4.0 * d * u * n * n
            + (self.kappa_tilde.powi(2) + d * d) * n;
        (lhs - rhs).abs() / rhs
    }
}

/// c̄ = (κ + κ̃)√P_l / (κ̃ + i(Δ − 2Un)).
pub fn mean_amplitude(
    params: &SystemParams,
    point: &OperatingPoint,
    p_l: f64,
    n: f64,
    kappa_tilde: f64,
) -> Complex64 {
    let num = (params.kappa + kappa_tilde) * p_l.sqrt();
    num / Complex64::new(kappa_tilde, point.detuning - 2.0 * point.kerr * n)
}

/// Q̄ = ig√P_l(c̄ − c̄*)/ω_m = −2g√P_l·Im(c̄)/ω_m.
pub fn mean_displacement(params: &SystemParams, p_l: f64, c_bar: Complex64) -> f64 {
    -2.0 * params.g * p_l.sqrt() * c_bar.im / params.omega_m
}

/// Positive real roots of the occupation cubic for a fixed κ̃, ascending.
pub fn cubic_roots(
    params: &SystemParams,
    point: &OperatingPoint,
    p_l: f64,
    kappa_tilde: f64,
) -> Vec<f64> {
    let kappa = params.kappa;
    let rhs = p_l * (kappa + kappa_tilde).powi(2);
    let lin = kappa_tilde * kappa_tilde + point.detuning * point.detuning;
    if rhs <= 0.0 {
        return Vec::new();
    }
    let u = point.kerr;
    if u == 0.0 {
        return vec![rhs / lin];
    }
    // x = U n / κ turns the cubic into 4x³ − 4δx² + ℓx − r = 0 with O(1) coefficients.
    let delta = point.detuning / kappa;
    let ell = lin / (kappa * kappa);
    let r = rhs * u / kappa.powi(3);
    let coeffs = [4.0, -4.0 * delta, ell, -r];
    let mut xs: Vec<f64> = real_cubic_roots(coeffs)
        .into_iter()
        .map(|x| newton_polish(coeffs, x))
        .filter(|&x| x > 0.0)
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.into_iter().map(|x| x * kappa / u).collect()
}

/// Real roots of a·x³ + b·x² + c·x + d with a ≠ 0 (trigonometric / Cardano).
pub(crate) fn real_cubic_roots([a, b, c, d]: [f64; 4]) -> Vec<f64> {
    let shift = b / (3.0 * a);
    let p = (3.0 * a * c - b * b) / (3.0 * a * a);
    let q = (2.0 * b.powi(3) - 9.0 * a * b * c + 27.0 * a * a * d) / (27.0 * a.powi(3));
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    if p < 0.0 && disc <= 0.0 {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = ((3.0 * q / (p * m)).clamp(-1.0, 1.0)).acos() / 3.0;
        (0..3)
            .map(|k| m * (arg - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() - shift)
            .collect()
    } else {
        let s = disc.max(0.0).sqrt();
        let t = (-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt();
        vec![t - shift]
    }
}

fn newton_polish([a, b, c, d]: [f64; 4], x: f64) -> f64 {
    let f = |x: f64| ((a * x + b) * x + c) * x + d;
    let df = (3.0 * a * x + 2.0 * b) * x + c;
    if df == 0.0 {
        return x;
    }
    let y = x - f(x) / df;
    if f(y).abs() < f(x).abs() {
        y
    } else {
        x
    }
}

/// Result of the self-consistent solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    /// Branches in ascending n_c, labelled.
    pub branches: Vec<SteadyBranch>,
    /// Set when two roots merged (a turning point within tolerance).
    pub degenerate: bool,
    /// Residual evaluations spent on root refinement.
    pub iterations: usize,
}

pub fn solve_selfconsistent(params: &SystemParams, point: &OperatingPoint) -> Result<SteadyState> {
    let p_l = derive_drive(params, point).p_l;
    if p_l == 0.0 {
        let branch = SteadyBranch::from_occupation(params, point, 0.0, 0.0, params.kappa);
        return Ok(SteadyState {
            branches: vec![branch],
            degenerate: false,
            iterations: 0,
        });
    }

    let f = Reduced::new(params, point, p_l);
    let n_max = f.domain_end();
    let mut edges = vec![0.0];
    edges.extend(f.extrema(n_max));
    edges.push(n_max);

    let mut evaluations = 0;
    let mut branches = Vec::with_capacity(3);
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (f_lo, f_hi) = (f.value(lo), f.value(hi));
        if f_lo == 0.0 && lo > 0.0 {
            branches.push(f.branch(lo));
        } else if f_lo.signum() != f_hi.signum() && f_hi != 0.0 {
            let (n, evals) = bisect(|n| f.value(n), lo, hi, f_lo);
            evaluations += evals;
            branches.push(f.branch(n));
        }
    }
    if branches.is_empty() {
        let residual = f.value(n_max) / (p_l * params.kappa * params.kappa);
        return Err(Error::NoConvergence {
            iterations: evaluations,
            last_kappa_tilde: f.kappa_tilde(n_max).unwrap_or(f64::NAN),
            residual,
        });
    }

    branches.sort_by(|a, b| a.n_c.total_cmp(&b.n_c));
    let before = branches.len();
    branches.dedup_by(|b, a| (a.n_c - b.n_c).abs() <= COLLISION_TOL * a.n_c.max(b.n_c));
    let degenerate = branches.len() != before;
    let mut state = SteadyState {
        branches,
        degenerate,
        iterations: evaluations,
    };
    classify_branches(&mut state.branches);
    Ok(state)
}

/// The self-consistency condition reduced to one unknown.
///
/// At a solution |c̄|² = n, so gQ̄ = 2g²nD/(ω_m(κ + κ̃)) with D = Δ − 2Un, and
/// κ̃ = κ + gQ̄ becomes κ̃² = κ² + 2g²nD/ω_m. Substituting into the cubic leaves
/// F(n) = n(κ̃(n)² + D²) − P_l(κ + κ̃(n))², whose positive roots are exactly
/// the self-consistent occupations.
struct Reduced<'a> {
    params: &'a SystemParams,
    point: &'a OperatingPoint,
    p_l: f64,
    a: f64,
}

impl<'a> Reduced<'a> {
    fn new(params: &'a SystemParams, point: &'a OperatingPoint, p_l: f64) -> Self {
        let a = 2.0 * params.g * params.g / params.omega_m;
        Reduced { params, point, p_l, a }
    }

    fn kappa_tilde_sq(&self, n: f64) -> f64 {
        let d = self.point.detuning - 2.0 * self.point.kerr * n;
        self.params.kappa.powi(2) + self.a * n * d
    }

    fn kappa_tilde(&self, n: f64) -> Option<f64> {
        let k2 = self.kappa_tilde_sq(n);
        (k2 > 0.0).then(|| k2.sqrt())
    }

    fn value(&self, n: f64) -> f64 {
        let k2 = self.kappa_tilde_sq(n).max(0.0);
        let d = self.point.detuning - 2.0 * self.point.kerr * n;
        n * (k2 + d * d) - self.p_l * (self.params.kappa + k2.sqrt()).powi(2)
    }

    fn slope(&self, n: f64) -> f64 {
        let u = self.point.kerr;
        let d = self.point.detuning - 2.0 * u * n;
        let k2 = self.kappa_tilde_sq(n).max(0.0);
        let kt = k2.sqrt();
        let dk2 = self.a * (d - 2.0 * u * n);
        let dkt = if kt > 0.0 { dk2 / (2.0 * kt) } else { 0.0 };
        (k2 + d * d) + n * (dk2 - 4.0 * u * d) - 2.0 * self.p_l * (self.params.kappa + kt) * dkt
    }

    /// Upper end of the search interval: the linear-cavity bound 4P_l with
    /// headroom, cut where κ̃ would fall below κ/10.
    fn domain_end(&self) -> f64 {
        let mut hi = 8.0 * self.p_l;
        let floor = 0.01 * self.params.kappa.powi(2);
        if self.kappa_tilde_sq(hi) < floor {
            let mut lo = 0.0;
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if self.kappa_tilde_sq(mid) < floor {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            hi = lo;
        }
        hi
    }

    /// Local extrema of F on (0, n_max); F′ is close to a convex parabola.
    fn extrema(&self, n_max: f64) -> Vec<f64> {
        let (mut a, mut b) = (0.0, n_max);
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let (mut fc, mut fd) = (self.slope(c), self.slope(d));
        for _ in 0..200 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = self.slope(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = self.slope(d);
            }
            if b - a <= 1e-15 * b {
                break;
            }
        }
        let vertex = 0.5 * (a + b);
        let s_v = self.slope(vertex);
        if !(s_v < 0.0) {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(2);
        for (lo, hi) in [(0.0, vertex), (vertex, n_max)] {
            let s_lo = self.slope(lo);
            if s_lo.signum() != self.slope(hi).signum() {
                out.push(bisect(|n| self.slope(n), lo, hi, s_lo).0);
            }
        }
        out
    }

    fn branch(&self, n: f64) -> SteadyBranch {
        let kt = self.kappa_tilde(n).unwrap_or(self.params.kappa);
        SteadyBranch::from_occupation(self.params, self.point, self.p_l, n, kt)
    }
}

/// Bisection to adjacent floating-point values; returns the point with the
/// smaller |f| and the number of evaluations.
fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, f_lo: f64) -> (f64, usize) {
    let mut f_lo = f_lo;
    let mut f_hi = f(hi);
    let mut evals = 1;
    for _ in 0..1100 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        evals += 1;
        if fm == 0.0 {
            return (mid, evals);
        }
        if fm.signum() == f_lo.signum() {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
            f_hi = fm;
        }
    }
    (if f_lo.abs() <= f_hi.abs() { lo } else { hi }, evals)
}

/// Label branches sorted by ascending n_c: one → only, three →
/// lower/middle/upper, two (merged at a turning point) → lower/upper.
pub fn classify_branches(branches: &mut [SteadyBranch]) {
    branches.sort_by(|a, b| a.n_c.total_cmp(&b.n_c));
    let labels: &[BranchLabel] = match branches.len() {
        1 => &[BranchLabel::Only],
        2 => &[BranchLabel::Lower, BranchLabel::Upper],
        3 => &[BranchLabel::Lower, BranchLabel::Middle, BranchLabel::Upper],
        _ => &[],
    };
    for (b, l) in branches.iter_mut().zip(labels) {
        b.branch_label = *l;
    }
}

/// Steady state on which Ũ = U·n_c takes a prescribed value, with U unknown.
///
/// For fixed Ũ the occupation is explicit, n = P_l(κ+κ̃)²/(κ̃² + (Δ−2Ũ)²), so
/// only κ̃ needs iterating. Returns the Kerr strength U and the branch
/// (labelled by re-solving at that U).
pub fn solve_for_u_tilde(
    params: &SystemParams,
    power: f64,
    detuning: f64,
    u_tilde: f64,
) -> Result<(f64, SteadyBranch)> {
    let fail = || Error::InversionFailed {
        detuning_over_kappa: detuning / params.kappa,
        u_tilde_over_kappa: u_tilde / params.kappa,
    };
    let probe = OperatingPoint {
        power,
        detuning,
        kerr: 0.0,
    };
    let p_l = derive_drive(params, &probe).p_l;
    if p_l == 0.0 || u_tilde < 0.0 {
        return Err(fail());
    }
    let kappa = params.kappa;
    let eff = detuning - 2.0 * u_tilde;
    let mut kt = kappa;
    let mut ok = false;
    for _ in 0..MAX_FIXED_POINT_ITERATIONS {
        let c_bar = (kappa + kt) * p_l.sqrt() / Complex64::new(kt, eff);
        let next = kappa + params.g * mean_displacement(params, p_l, c_bar);
        let step = next - kt;
        kt = next;
        if step.abs() / kappa < FIXED_POINT_TOL {
            ok = true;
            break;
        }
    }
    if !ok || kt <= 0.0 {
        return Err(fail());
    }
    let n = p_l * (kappa + kt).powi(2) / (kt * kt + eff * eff);
    let kerr = u_tilde / n;
    let point = OperatingPoint {
        power,
        detuning,
        kerr,
    };
    let state = solve_selfconsistent(params, &point)?;
    let found = state
        .branches
        .iter()
        .min_by(|a, b| {
            (a.u_tilde - u_tilde)
                .abs()
                .total_cmp(&(b.u_tilde - u_tilde).abs())
        })
        .copied()
        .ok_or_else(fail)?;
    if (found.u_tilde - u_tilde).abs() / kappa > 1e-8 {
        return Err(fail());
    }
    Ok((kerr, found))
}
