//! Datasets behind the published figure panels, written as CSV files plus a
//! JSON sidecar holding everything needed to regenerate them.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::params::{kerr_from_uhz, Config};
use crate::response::{self, ResponseEval};
use crate::spectra::{s_backaction, s_position, s_thermal, SpectraOptions};
use crate::steady_state::{solve_selfconsistent, SteadyBranch};
use crate::sweep::{phase_diagram, sweep_1d, write_csv, Axis, AxisKind, PointError, SweepGrid, SweepSetup};

pub const FIGURE_IDS: [&str; 8] = ["2a", "2b", "3", "4a", "4b", "4c", "4d", "5"];

/// Kerr strengths of the four constant-U curves, µHz.
pub const KERR_CURVES_UHZ: [f64; 4] = [50.0, 100.0, 150.0, 200.0];

/// (U in µHz, Δ/κ) pairs of the response-function curves.
pub const RESPONSE_POINTS: [(f64, f64); 4] = [(50.0, 1.43), (100.0, 2.51), (150.0, 3.68), (200.0, 4.87)];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureOptions {
    pub grid_1d: usize,
    pub grid_2d: usize,
    pub response_points: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        FigureOptions { grid_1d: 400, grid_2d: 200, response_points: 1001 }
    }
}

impl FigureOptions {
    /// Options stored in a sidecar, if `text` is one.
    pub fn from_sidecar(text: &str) -> Option<Self> {
        let v: serde_json::Value = serde_json::from_str(text).ok()?;
        serde_json::from_value(v.get("options")?.clone()).ok()
    }
}

/// Preset a figure uses when no config is given.
pub fn default_preset(id: &str) -> Result<&'static str> {
    match id {
        "5" => Ok("cryogenic_membrane"),
        id if FIGURE_IDS.contains(&id) => Ok("room_temp_membrane"),
        other => Err(Error::UnknownFigure(other.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FigureOutput {
    pub files: Vec<PathBuf>,
    pub sidecar: PathBuf,
    pub errors: Vec<PointError>,
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<String>,
    grids: Vec<serde_json::Value>,
    errors: Vec<PointError>,
    notes: Vec<serde_json::Value>,
}

impl<'a> Writer<'a> {
    fn create(&mut self, name: String) -> Result<BufWriter<File>> {
        let f = File::create(self.dir.join(&name))?;
        self.files.push(name);
        Ok(BufWriter::new(f))
    }

    fn grid(&mut self, name: String, grid: &SweepGrid) -> Result<()> {
        write_csv(grid, self.create(name.clone())?)?;
        let mut g = grid.grid_json();
        g["file"] = json!(name);
        self.grids.push(g);
        self.errors.extend(grid.errors.iter().cloned());
        Ok(())
    }
}

fn uhz_tag(u: f64) -> String {
    format!("U{}", u.round() as i64)
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

pub fn figure_dataset(id: &str, cfg: &Config, out_dir: &Path, opts: &FigureOptions) -> Result<FigureOutput> {
    if !FIGURE_IDS.contains(&id) {
        return Err(Error::UnknownFigure(id.to_string()));
    }
    if opts.grid_1d == 0 || opts.grid_2d == 0 || opts.response_points == 0 {
        return Err(Error::InvalidAxis("figure grid sizes must be positive".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut w = Writer { dir: out_dir, files: Vec::new(), grids: Vec::new(), errors: Vec::new(), notes: Vec::new() };
    let mut assumptions = vec![format!(
        "Kerr strengths in uHz are {} (kerr_is_angular = {})",
        if cfg.kerr_is_angular() { "angular rates: U = value x 1e-6 rad/s" } else { "cyclic: U = 2 pi x value x 1e-6 rad/s" },
        cfg.kerr_is_angular()
    )];
    let plain = SweepSetup::from_config(cfg, false)?;
    let cooled = SweepSetup::from_config(cfg, true)?;
    let n1 = opts.grid_1d;
    let n2 = opts.grid_2d;
    let kerr = |u: f64| kerr_from_uhz(u, cfg.kerr_is_angular());
    let with_kerr = |s: &SweepSetup, u: f64| SweepSetup { point: s.point.with_kerr(kerr(u)), ..*s };
    let map_delta = Axis::linear(AxisKind::Detuning, 0.0, 6.0, n2);
    let map_u = Axis::linear(AxisKind::UTilde, 0.0, 2.5, n2);
    let curve_axis = Axis::linear(AxisKind::Detuning, -1.0, 6.0, n1);

    match id {
        "2a" => {
            for u in KERR_CURVES_UHZ {
                let g = sweep_1d(&with_kerr(&plain, u), &curve_axis)?;
                w.grid(format!("fig2a_{}.csv", uhz_tag(u)), &g)?;
            }
        }
        "2b" => {
            let axis = Axis::log(AxisKind::Power, 1.0, 500.0, n1);
            for u in KERR_CURVES_UHZ {
                let mut s = with_kerr(&plain, u);
                s.point = s.point.with_detuning(3.0 * s.params.kappa);
                let g = sweep_1d(&s, &axis)?;
                w.grid(format!("fig2b_{}.csv", uhz_tag(u)), &g)?;
            }
            assumptions.push("detuning fixed at 3 kappa for all power sweeps".into());
        }
        "3" => {
            let k = plain.params.kappa;
            let grid: Vec<f64> = Axis::linear(AxisKind::Detuning, -0.2, 0.2, opts.response_points)
                .values()
                .into_iter()
                .map(|x| x * k)
                .collect();
            for (u, d) in RESPONSE_POINTS {
                let pt = plain.point.with_kerr(kerr(u)).with_detuning(d * k);
                let state = solve_selfconsistent(&plain.params, &pt)?;
                let b = *state.branches.last().expect("solver returns at least one branch");
                let curve = response::response_curve(&plain.params, &b, &grid)?;
                write_response(w.create(format!("fig3_{}.csv", uhz_tag(u)))?, &plain, &curve)?;
                let at_m = response::evaluate(&plain.params, &b, plain.params.omega_m)?;
                w.notes.push(json!({
                    "kerr_uhz": u,
                    "detuning_over_kappa": d,
                    "branch": b.branch_label.as_str(),
                    "u_tilde_over_kappa": b.u_tilde / k,
                    "omega_eff_at_omega_m_over_omega_m": at_m.omega_eff / plain.params.omega_m,
                    "gamma_eff_at_omega_m_hz": at_m.gamma_eff / crate::constants::TWO_PI,
                }));
            }
            assumptions.push("response curves use the highest-occupation branch at each point".into());
        }
        "4a" => {
            let g = phase_diagram(&plain, &map_delta, &map_u)?;
            w.grid("fig4a.csv".into(), &g)?;
        }
        "4b" | "4c" => {
            let g = phase_diagram(&cooled, &map_delta, &map_u)?;
            w.grid(format!("fig{id}.csv"), &g)?;
            for u in KERR_CURVES_UHZ {
                let g = sweep_1d(&with_kerr(&cooled, u), &curve_axis)?;
                w.grid(format!("fig{id}_{}.csv", uhz_tag(u)), &g)?;
            }
        }
        "4d" => {
            let g = phase_diagram(&cooled, &map_delta, &map_u)?;
            w.grid("fig4d.csv".into(), &g)?;
            let inset = phase_diagram(
                &cooled,
                &Axis::linear(AxisKind::Detuning, 0.0, 6.0, n1),
                &Axis::linear(AxisKind::UTilde, 1.0, 1.0, 1),
            )?;
            w.grid("fig4d_inset.csv".into(), &inset)?;
        }
        "5" => {
            let g = phase_diagram(
                &cooled,
                &Axis::linear(AxisKind::Detuning, 0.0, 3.0, n2),
                &Axis::linear(AxisKind::UTilde, 0.0, 1.0, n2),
            )?;
            w.grid("fig5.csv".into(), &g)?;
            assumptions.push("cryogenic map spans detuning/kappa in [0, 3] and u_tilde/kappa in [0, 1]".into());
            if let Some((b, t)) = coldest(&g) {
                let k = cooled.params.kappa;
                let grid: Vec<f64> = Axis::linear(AxisKind::Detuning, -0.4, 0.4, opts.response_points)
                    .values()
                    .into_iter()
                    .map(|x| x * k)
                    .collect();
                let curve = response::response_curve(&cooled.params, &b, &grid)?;
                write_inset(w.create("fig5_inset.csv".into())?, &cooled, &curve)?;
                w.notes.push(json!({
                    "inset_detuning_over_kappa": b.delta_tilde / k + 4.0 * b.u_tilde / k,
                    "inset_u_tilde_over_kappa": b.u_tilde / k,
                    "inset_t_eff_k": t,
                }));
            }
        }
        _ => unreachable!(),
    }
    if id.starts_with('4') {
        assumptions.push("phase-diagram axes: detuning/kappa in [0, 6], u_tilde/kappa in [0, 2.5]".into());
    }

    let sidecar_name = format!("fig{id}.json");
    let sidecar = json!({
        "figure": id,
        "code_version": env!("CARGO_PKG_VERSION"),
        "config": cfg.to_json(),
        "options": opts,
        "cooling": SpectraOptions::default(),
        "grid": w.grids,
        "files": w.files,
        "assumptions": assumptions,
        "notes": w.notes,
        "errors": w.errors,
    });
    let mut f = File::create(out_dir.join(&sidecar_name))?;
    serde_json::to_writer_pretty(&mut f, &sidecar)?;
    f.write_all(b"\n")?;

    Ok(FigureOutput {
        files: w.files.iter().map(|n| out_dir.join(n)).collect(),
        sidecar: out_dir.join(sidecar_name),
        errors: w.errors,
    })
}

/// Coldest cooled cell of a map and its effective temperature.
fn coldest(g: &SweepGrid) -> Option<(SteadyBranch, f64)> {
    g.points
        .iter()
        .flat_map(|p| p.branches.iter())
        .filter_map(|r| r.cooling.as_ref().map(|c| (r.branch, c.t_eff)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

pub const RESPONSE_COLUMNS: [&str; 6] = [
    "omega_over_kappa",
    "omega_eff_over_omega_m",
    "gamma_eff_over_gamma_m",
    "chi_eff_sq",
    "s_c",
    "s_th",
];

pub fn write_response<W: Write>(out: W, setup: &SweepSetup, curve: &[ResponseEval]) -> Result<()> {
    let p = &setup.params;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESPONSE_COLUMNS)?;
    for r in curve {
        w.write_record([
            num(r.omega / p.kappa),
            num(r.omega_eff / p.omega_m),
            num(r.gamma_eff / p.gamma_m),
            num(r.chi_eff.norm_sqr()),
            num(s_backaction(r)),
            num(s_thermal(p, r.omega)),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub const INSET_COLUMNS: [&str; 5] = ["omega_over_kappa", "s_c", "s_th", "s_total", "s_q"];

fn write_inset<W: Write>(out: W, setup: &SweepSetup, curve: &[ResponseEval]) -> Result<()> {
    let p = &setup.params;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(INSET_COLUMNS)?;
    for r in curve {
        let (sc, sth) = (s_backaction(r), s_thermal(p, r.omega));
        w.write_record([num(r.omega / p.kappa), num(sc), num(sth), num(sc + sth), num(s_position(p, r))])?;
    }
    w.flush()?;
    Ok(())
}
