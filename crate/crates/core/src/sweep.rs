//! One- and two-dimensional parameter scans with branch continuation,
//! stability classification, optional cooling evaluation and CSV output.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::params::{kerr_from_uhz, Config, OperatingPoint, SystemParams};
use crate::spectra::{integrate_variances, SpectraOptions, SpectraResult};
use crate::stability::{analyze, Region, StabilityReport};
use crate::steady_state::{solve_for_u_tilde, solve_selfconsistent, SteadyBranch};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    /// Δ/κ
    Detuning,
    /// mW
    Power,
    /// µHz, interpreted with the config's Kerr convention
    Kerr,
    /// Ũ/κ, solution-dependent
    UTilde,
}

impl AxisKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "detuning" => Ok(AxisKind::Detuning),
            "power" => Ok(AxisKind::Power),
            "kerr" => Ok(AxisKind::Kerr),
            "u_tilde" | "u-tilde" => Ok(AxisKind::UTilde),
            other => Err(Error::InvalidAxis(format!(
                "unknown axis `{other}` (expected detuning, power, kerr or u_tilde)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            AxisKind::Detuning => "detuning",
            AxisKind::Power => "power",
            AxisKind::Kerr => "kerr",
            AxisKind::UTilde => "u_tilde",
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            AxisKind::Detuning => "detuning/kappa",
            AxisKind::Power => "mW",
            AxisKind::Kerr => "uHz",
            AxisKind::UTilde => "u_tilde/kappa",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub kind: AxisKind,
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    pub spacing: Spacing,
}

impl Axis {
    pub fn linear(kind: AxisKind, start: f64, stop: f64, count: usize) -> Self {
        Axis { kind, start, stop, count, spacing: Spacing::Linear }
    }

    pub fn log(kind: AxisKind, start: f64, stop: f64, count: usize) -> Self {
        Axis { kind, start, stop, count, spacing: Spacing::Log }
    }

    pub fn validate(&self) -> Result<()> {
        let name = self.kind.as_str();
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(Error::InvalidAxis(format!("{name}: range must be finite")));
        }
        if self.count == 0 {
            return Err(Error::InvalidAxis(format!("{name}: count must be at least 1")));
        }
        if self.spacing == Spacing::Log && (self.start <= 0.0 || self.stop <= 0.0) {
            return Err(Error::InvalidAxis(format!("{name}: log spacing needs a positive range")));
        }
        let lower = match self.kind {
            AxisKind::Detuning => f64::NEG_INFINITY,
            _ => 0.0,
        };
        if self.start.min(self.stop) < lower {
            return Err(Error::InvalidAxis(format!("{name}: values must be non-negative")));
        }
        Ok(())
    }

    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        let last = (self.count - 1) as f64;
        (0..self.count)
            .map(|i| {
                if i == self.count - 1 {
                    return self.stop;
                }
                let t = i as f64 / last;
                match self.spacing {
                    Spacing::Linear => self.start + t * (self.stop - self.start),
                    Spacing::Log => self.start * (self.stop / self.start).powf(t),
                }
            })
            .collect()
    }
}

/// Everything a scan needs besides the axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSetup {
    pub params: SystemParams,
    pub point: OperatingPoint,
    pub kerr_is_angular: bool,
    pub cooling: Option<SpectraOptions>,
}

impl SweepSetup {
    pub fn from_config(cfg: &Config, with_cooling: bool) -> Result<Self> {
        let (params, point) = cfg.normalize()?;
        Ok(SweepSetup {
            params,
            point,
            kerr_is_angular: cfg.kerr_is_angular(),
            cooling: with_cooling.then(SpectraOptions::default),
        })
    }

    /// Operating point with one axis set to `value` (in the axis' user units).
    pub fn point_at(&self, base: &OperatingPoint, kind: AxisKind, value: f64) -> Result<OperatingPoint> {
        match kind {
            AxisKind::Detuning => Ok(base.with_detuning(value * self.params.kappa)),
            AxisKind::Power => Ok(base.with_power(value * 1e-3)),
            AxisKind::Kerr => Ok(base.with_kerr(kerr_from_uhz(value, self.kerr_is_angular))),
            AxisKind::UTilde => Err(Error::InvalidAxis("u_tilde is not a direct operating-point parameter".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub branch: SteadyBranch,
    pub stability: StabilityReport,
    pub cooling: Option<SpectraResult>,
}

impl BranchRecord {
    pub fn region(&self) -> Region {
        self.stability.region()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub axis_value: f64,
    pub axis2_value: Option<f64>,
    /// Kerr strength U (rad/s) used at this point.
    pub kerr: f64,
    pub degenerate: bool,
    pub branches: Vec<BranchRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointError {
    pub axis_value: f64,
    pub axis2_value: Option<f64>,
    pub branch: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub axes: Vec<Axis>,
    pub points: Vec<PointRecord>,
    /// Axis locations (user units) where the branch count changes.
    pub turning_points: Vec<f64>,
    pub errors: Vec<PointError>,
    pub with_cooling: bool,
    pub kappa: f64,
}

impl SweepGrid {
    pub fn row_count(&self) -> usize {
        self.points.iter().map(|p| p.branches.len().max(1)).sum()
    }

    pub fn grid_json(&self) -> serde_json::Value {
        json!({
            "axes": self.axes.iter().map(|a| json!({
                "name": a.kind.as_str(),
                "unit": a.kind.unit(),
                "start": a.start,
                "stop": a.stop,
                "count": a.count,
                "spacing": a.spacing,
            })).collect::<Vec<_>>(),
            "rows": self.row_count(),
            "turning_points": self.turning_points,
        })
    }
}

fn cooling_allowed(report: &StabilityReport) -> bool {
    report.rh_stable && report.eig_stable
}

fn evaluate_branch(
    setup: &SweepSetup,
    b: &SteadyBranch,
    at: (f64, Option<f64>),
) -> (BranchRecord, Option<PointError>) {
    let stability = analyze(&setup.params, b);
    let mut err = None;
    let cooling = match setup.cooling {
        Some(opts) if cooling_allowed(&stability) => match integrate_variances(&setup.params, b, &opts) {
            Ok(r) => Some(r),
            Err(e) => {
                err = Some(PointError {
                    axis_value: at.0,
                    axis2_value: at.1,
                    branch: Some(b.branch_label.as_str().to_string()),
                    message: e.to_string(),
                });
                None
            }
        },
        _ => None,
    };
    (BranchRecord { branch: *b, stability, cooling }, err)
}

struct Solved {
    axis_value: f64,
    axis2_value: Option<f64>,
    kerr: f64,
    outcome: Result<(Vec<SteadyBranch>, bool)>,
}

fn finish(setup: &SweepSetup, solved: Vec<Solved>) -> (Vec<PointRecord>, Vec<PointError>) {
    let evaluated: Vec<(PointRecord, Vec<PointError>)> = solved
        .into_par_iter()
        .map(|s| {
            let at = (s.axis_value, s.axis2_value);
            match s.outcome {
                Ok((branches, degenerate)) => {
                    let mut errs = Vec::new();
                    let records = branches
                        .iter()
                        .map(|b| {
                            let (r, e) = evaluate_branch(setup, b, at);
                            errs.extend(e);
                            r
                        })
                        .collect();
                    let rec = PointRecord {
                        axis_value: s.axis_value,
                        axis2_value: s.axis2_value,
                        kerr: s.kerr,
                        degenerate,
                        branches: records,
                        error: None,
                    };
                    (rec, errs)
                }
                Err(e) => {
                    let message = e.to_string();
                    let rec = PointRecord {
                        axis_value: s.axis_value,
                        axis2_value: s.axis2_value,
                        kerr: s.kerr,
                        degenerate: false,
                        branches: Vec::new(),
                        error: Some(message.clone()),
                    };
                    let err = PointError { axis_value: s.axis_value, axis2_value: s.axis2_value, branch: None, message };
                    (rec, vec![err])
                }
            }
        })
        .collect();
    let mut points = Vec::with_capacity(evaluated.len());
    let mut errors = Vec::new();
    for (p, e) in evaluated {
        points.push(p);
        errors.extend(e);
    }
    (points, errors)
}

/// Solve along a line of operating points. Branches are matched between
/// neighbouring points by their ascending-n_c labels.
fn solve_line(
    setup: &SweepSetup,
    base: &OperatingPoint,
    kind: AxisKind,
    values: &[f64],
    axis2_value: Option<f64>,
) -> Vec<Solved> {
    values
        .par_iter()
        .map(|&v| {
            let pt = setup.point_at(base, kind, v);
            let kerr = pt.as_ref().map(|p| p.kerr).unwrap_or(base.kerr);
            let outcome = pt
                .and_then(|pt| solve_selfconsistent(&setup.params, &pt))
                .map(|s| (s.branches, s.degenerate));
            Solved { axis_value: v, axis2_value, kerr, outcome }
        })
        .collect()
}

fn branch_count(setup: &SweepSetup, base: &OperatingPoint, kind: AxisKind, v: f64) -> Option<usize> {
    let pt = setup.point_at(base, kind, v).ok()?;
    solve_selfconsistent(&setup.params, &pt).ok().map(|s| s.branches.len())
}

/// Bisect for the axis value where the branch count changes between `lo` and `hi`.
pub fn locate_turning_point(
    setup: &SweepSetup,
    base: &OperatingPoint,
    kind: AxisKind,
    mut lo: f64,
    mut hi: f64,
) -> Option<f64> {
    let n_lo = branch_count(setup, base, kind, lo)?;
    let n_hi = branch_count(setup, base, kind, hi)?;
    if n_lo == n_hi {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo.min(hi) || mid >= lo.max(hi) {
            break;
        }
        if (hi - lo).abs() <= 1e-13 * lo.abs().max(hi.abs()) {
            break;
        }
        match branch_count(setup, base, kind, mid)? {
            n if n == n_lo => lo = mid,
            _ => hi = mid,
        }
    }
    Some(0.5 * (lo + hi))
}

fn turning_points_of(setup: &SweepSetup, base: &OperatingPoint, kind: AxisKind, solved: &[Solved]) -> Vec<f64> {
    let pairs: Vec<(f64, f64)> = solved
        .windows(2)
        .filter_map(|w| match (&w[0].outcome, &w[1].outcome) {
            (Ok((a, _)), Ok((b, _))) if a.len() != b.len() => Some((w[0].axis_value, w[1].axis_value)),
            _ => None,
        })
        .collect();
    pairs
        .into_par_iter()
        .filter_map(|(lo, hi)| locate_turning_point(setup, base, kind, lo, hi))
        .collect()
}

pub fn sweep_1d(setup: &SweepSetup, axis: &Axis) -> Result<SweepGrid> {
    axis.validate()?;
    if axis.kind == AxisKind::UTilde {
        return Err(Error::InvalidAxis("u_tilde axes are only available in phase diagrams".into()));
    }
    let values = axis.values();
    let solved = solve_line(setup, &setup.point, axis.kind, &values, None);
    let turning_points = turning_points_of(setup, &setup.point, axis.kind, &solved);
    let (points, errors) = finish(setup, solved);
    Ok(SweepGrid {
        axes: vec![*axis],
        points,
        turning_points,
        errors,
        with_cooling: setup.cooling.is_some(),
        kappa: setup.params.kappa,
    })
}

/// Scan detuning against either the Kerr strength or the solution-dependent
/// Ũ/κ. In Ũ mode every cell holds the single branch carrying that Ũ.
pub fn phase_diagram(setup: &SweepSetup, delta_axis: &Axis, second: &Axis) -> Result<SweepGrid> {
    delta_axis.validate()?;
    second.validate()?;
    if delta_axis.kind != AxisKind::Detuning {
        return Err(Error::InvalidAxis("first phase-diagram axis must be detuning".into()));
    }
    let deltas = delta_axis.values();
    let seconds = second.values();
    let solved: Vec<Solved> = match second.kind {
        AxisKind::Kerr => seconds
            .par_iter()
            .map(|&u| {
                let base = setup.point.with_kerr(kerr_from_uhz(u, setup.kerr_is_angular));
                solve_line(setup, &base, AxisKind::Detuning, &deltas, Some(u))
            })
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect(),
        AxisKind::UTilde => seconds
            .iter()
            .flat_map(|&ut| deltas.iter().map(move |&d| (d, ut)))
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(d, ut)| {
                let k = setup.params.kappa;
                match solve_for_u_tilde(&setup.params, setup.point.power, d * k, ut * k) {
                    Ok((kerr, b)) => Solved { axis_value: d, axis2_value: Some(ut), kerr, outcome: Ok((vec![b], false)) },
                    Err(e) => Solved { axis_value: d, axis2_value: Some(ut), kerr: f64::NAN, outcome: Err(e) },
                }
            })
            .collect(),
        _ => return Err(Error::InvalidAxis("second phase-diagram axis must be kerr or u_tilde".into())),
    };
    let (points, errors) = finish(setup, solved);
    Ok(SweepGrid {
        axes: vec![*delta_axis, *second],
        points,
        turning_points: Vec::new(),
        errors,
        with_cooling: setup.cooling.is_some(),
        kappa: setup.params.kappa,
    })
}

/// Run `f` on a dedicated pool of `threads` workers (or the global pool).
pub fn with_threads<R, F>(threads: Option<usize>, f: F) -> Result<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidAxis("thread count must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Io(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

pub const BASE_COLUMNS: [&str; 11] = [
    "axis_value",
    "branch_label",
    "n_c",
    "u_n_c_over_kappa",
    "q_bar",
    "kappa_tilde",
    "s1",
    "s2",
    "s3",
    "stable",
    "max_re_eig",
];

pub const COOLING_COLUMNS: [&str; 7] = [
    "t_eff_k",
    "n_m",
    "var_x",
    "var_y",
    "delta_n_c",
    "squeezing_db",
    "linearization_suspect",
];

fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn header(two_d: bool, with_cooling: bool) -> Vec<&'static str> {
    let mut h: Vec<&str> = Vec::new();
    for c in BASE_COLUMNS {
        h.push(c);
        if two_d && c == "axis_value" {
            h.push("axis2_value");
        }
        if two_d && c == "max_re_eig" {
            h.push("region_label");
        }
    }
    if with_cooling {
        h.extend(COOLING_COLUMNS);
    }
    h
}

pub fn write_csv<W: Write>(grid: &SweepGrid, out: W) -> Result<()> {
    let two_d = grid.axes.len() == 2;
    let cols = header(two_d, grid.with_cooling);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&cols)?;
    for p in &grid.points {
        let lead = |label: &str| {
            let mut row = vec![num(p.axis_value)];
            if two_d {
                row.push(p.axis2_value.map(num).unwrap_or_default());
            }
            row.push(label.to_string());
            row
        };
        if p.branches.is_empty() {
            let mut row = lead("error");
            row.resize(cols.len(), String::new());
            w.write_record(&row)?;
            continue;
        }
        for r in &p.branches {
            let b = &r.branch;
            let s = &r.stability;
            let mut row = lead(b.branch_label.as_str());
            row.extend([
                num(b.n_c),
                num(b.u_tilde / grid.kappa),
                num(b.q_bar),
                num(b.kappa_tilde),
                num(s.s1),
                num(s.s2),
                num(s.s3),
                (s.rh_stable && s.eig_stable).to_string(),
                num(s.max_re),
            ]);
            if two_d {
                row.push(r.region().as_str().to_string());
            }
            if grid.with_cooling {
                match &r.cooling {
                    Some(c) => row.extend([
                        num(c.t_eff),
                        num(c.n_m),
                        num(c.var_x),
                        num(c.var_y),
                        num(c.delta_n_c),
                        num(c.squeezing_db),
                        c.linearization_suspect.to_string(),
                    ]),
                    None => row.resize(cols.len(), String::new()),
                }
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_drive;

    fn setup(cooling: bool) -> SweepSetup {
        SweepSetup::from_config(&Config::preset("room_temp_membrane").unwrap(), cooling).unwrap()
    }

    #[test]
    fn axis_values_and_validation() {
        let a = Axis::linear(AxisKind::Detuning, -1.0, 1.0, 5);
        assert_eq!(a.values(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let l = Axis::log(AxisKind::Power, 1.0, 100.0, 3);
        let v = l.values();
        assert!((v[1] - 10.0).abs() < 1e-12 && v[2] == 100.0);
        assert_eq!(Axis::linear(AxisKind::Power, 5.0, 9.0, 1).values(), vec![5.0]);
        assert!(Axis::linear(AxisKind::Power, 0.0, 1.0, 0).validate().is_err());
        assert!(Axis::log(AxisKind::Power, 0.0, 1.0, 3).validate().is_err());
        assert!(Axis::linear(AxisKind::Power, -1.0, 1.0, 3).validate().is_err());
        assert!(Axis::linear(AxisKind::Detuning, f64::NAN, 1.0, 3).validate().is_err());
        assert!(AxisKind::parse("frequency").is_err());
    }

    #[test]
    fn single_point_sweep_matches_direct_call() {
        let s = setup(false);
        let grid = sweep_1d(&s, &Axis::linear(AxisKind::Detuning, 3.0, 3.0, 1)).unwrap();
        let direct = solve_selfconsistent(&s.params, &s.point).unwrap();
        assert_eq!(grid.points.len(), 1);
        let got: Vec<SteadyBranch> = grid.points[0].branches.iter().map(|r| r.branch).collect();
        assert_eq!(got, direct.branches);
    }

    #[test]
    fn power_sweep_finds_bistable_window() {
        let s = setup(false);
        let grid = sweep_1d(&s, &Axis::log(AxisKind::Power, 1.0, 500.0, 200)).unwrap();
        assert!(grid.errors.is_empty());
        assert_eq!(grid.turning_points.len(), 2, "{:?}", grid.turning_points);
        let three = grid.points.iter().filter(|p| p.branches.len() == 3);
        for p in three {
            let middle = &p.branches[1];
            assert!(middle.stability.s1 < 0.0 || middle.stability.s2 < 0.0);
        }
    }

    #[test]
    fn lorentzian_detuning_sweep() {
        let mut s = setup(false);
        s.params = s.params.with_g(0.0);
        s.point = s.point.with_kerr(0.0);
        let grid = sweep_1d(&s, &Axis::linear(AxisKind::Detuning, -5.0, 5.0, 101)).unwrap();
        let p_l = derive_drive(&s.params, &s.point).p_l;
        let k = s.params.kappa;
        for p in &grid.points {
            let d = p.axis_value * k;
            let expect = 4.0 * k * k * p_l / (k * k + d * d);
            assert!((p.branches[0].branch.n_c / expect - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn csv_shape_and_error_rows() {
        let s = setup(false);
        let mut grid = sweep_1d(&s, &Axis::linear(AxisKind::Detuning, 2.0, 4.0, 5)).unwrap();
        grid.points[0].branches.clear();
        let mut buf = Vec::new();
        write_csv(&grid, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], BASE_COLUMNS.join(","));
        assert_eq!(lines.len(), 1 + grid.row_count());
        assert!(lines[1].starts_with("2e0,error,"));
        assert_eq!(lines[1].split(',').count(), BASE_COLUMNS.len());
    }

    #[test]
    fn u_tilde_phase_diagram_cells() {
        let s = setup(true);
        let grid = phase_diagram(
            &s,
            &Axis::linear(AxisKind::Detuning, 0.0, 6.0, 7),
            &Axis::linear(AxisKind::UTilde, 0.0, 2.0, 5),
        )
        .unwrap();
        assert_eq!(grid.points.len(), 35);
        for p in &grid.points {
            assert_eq!(p.branches.len(), 1);
            let r = &p.branches[0];
            let ut = r.branch.u_tilde / s.params.kappa;
            assert!((ut - p.axis2_value.unwrap()).abs() < 1e-8);
            assert_eq!(r.cooling.is_some(), cooling_allowed(&r.stability) && !grid.errors.iter().any(|e| e.axis_value == p.axis_value && e.axis2_value == p.axis2_value));
        }
        let mut buf = Vec::new();
        write_csv(&grid, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().next().unwrap().contains("axis2_value"));
        assert!(text.lines().next().unwrap().ends_with("linearization_suspect"));
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let s = setup(true);
        let axis = Axis::linear(AxisKind::Detuning, 0.5, 5.0, 24);
        let run = |n| {
            let g = with_threads(Some(n), || sweep_1d(&s, &axis)).unwrap().unwrap();
            let mut buf = Vec::new();
            write_csv(&g, &mut buf).unwrap();
            buf
        };
        assert_eq!(run(1), run(4));
        assert!(with_threads(Some(0), || ()).is_err());
    }
}
