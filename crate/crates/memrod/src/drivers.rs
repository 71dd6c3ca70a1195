//! Experiment drivers: single runs, refinement studies, the line-tension
//! benchmark and the application sweeps.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use memrod_core::coupling::{RodCoupling, RodSample};
use memrod_core::lbfgs::{LbfgsConfig, Termination};
use memrod_core::measure::{
    asphericity, measure_sigma, mean_twist, neck_radius, non_planarity, perturbation_sigma, vertex_curvatures,
};
use memrod_core::membrane::MembraneParams;
use memrod_core::rod::{RodMaterial, RodReference, ROD_GAUSS};
use memrod_core::solver::{fix_dofs, DofSelector, EnergyBreakdown, RodSeed, SolveReport, SolverConfig, System};
use memrod_core::{ControlMesh, Vec3};
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, Format, RodPreset};
use crate::io::{write_obj, write_rod_csv, write_vtk};
use crate::presets::{self, Application};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failed: {0}")]
    Solver(#[from] memrod_core::Error),
    #[error("solver stopped without converging ({0:?})")]
    NotConverged(Termination),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl DriverError {
    pub fn exit_code(&self) -> i32 {
        match self {
            DriverError::Config(_) => 2,
            DriverError::Solver(_) | DriverError::NotConverged(_) => 3,
            DriverError::Io(_) => 4,
        }
    }
}

/// Membrane, rod and solver settings for `cfg`, with the seeded initial
/// state.
pub fn build(cfg: &ExperimentConfig) -> Result<(System, SolverConfig, Vec<f64>), DriverError> {
    let mesh = ControlMesh::icosphere(cfg.mesh_level)?;
    let params = MembraneParams { c: cfg.c, c_g: cfg.cg, c0: cfg.c0, p: cfg.p };
    let rod = match cfg.rod_preset {
        RodPreset::None => None,
        preset => {
            let base = match preset {
                RodPreset::Circular => RodReference::circular(cfg.rod_length, cfg.rod_nodes)?,
                _ => RodReference::straight(cfg.rod_length, cfg.rod_nodes)?,
            };
            let alpha = cfg.rod_alpha.map_or(base.alpha, RodReference::alpha_from);
            let reference = RodReference::new(cfg.rod_length, alpha, cfg.rod_nodes, cfg.closed())?;
            Some((reference, RodMaterial { stretch: cfg.stretch, bend: cfg.bend }))
        }
    };
    let system = System::new(mesh, params, rod)?;
    let mut solver = SolverConfig {
        lambda_g: cfg.lambda_g,
        mu1: cfg.mu1,
        mu2: cfg.mu2,
        max_iter: cfg.max_iter,
        grad_tol: cfg.grad_tol,
        pressure_ramp: cfg.pressure_ramp,
        ..SolverConfig::default()
    };
    if let Some(t1) = cfg.fix_theta1 {
        solver = fix_dofs(&solver, &system.layout(), &DofSelector::Theta1(t1)).0;
    }
    let state = system.initial_state(cfg.seed, cfg.init_noise, RodSeed::FittedCircle);
    Ok((system, solver, state))
}

/// A minimized configuration.
#[derive(Clone, Debug)]
pub struct Solution {
    pub config: ExperimentConfig,
    pub system: System,
    pub solver: SolverConfig,
    pub state: Vec<f64>,
    pub report: SolveReport,
}

pub fn solve(cfg: &ExperimentConfig) -> Result<Solution, DriverError> {
    let (mut system, solver, mut state) = build(cfg)?;
    let report = system.minimize(&mut state, &solver)?;
    Ok(Solution { config: cfg.clone(), system, solver, state, report })
}

impl Solution {
    pub fn surface(&self) -> &[f64] {
        &self.state[..self.system.layout().surface_len()]
    }

    pub fn rod_dofs(&self) -> &[f64] {
        &self.state[self.system.layout().surface_len()..]
    }

    pub fn converged(&self) -> bool {
        self.report.converged
    }

    pub fn breakdown(&self) -> EnergyBreakdown {
        self.report.breakdown
    }

    /// Rod state at its quadrature points (empty without a rod).
    pub fn rod_samples(&self) -> Result<Vec<RodSample>, DriverError> {
        match &self.system.rod {
            Some(rod) => Ok(rod.samples(&self.system.mesh, &self.system.reference, self.surface(), self.rod_dofs())?),
            None => Ok(Vec::new()),
        }
    }

    /// Rod state at the nodes and quadrature points, ordered by arclength
    /// and including both ends.
    pub fn rod_polyline(&self) -> Result<Vec<RodSample>, DriverError> {
        let Some(rod) = &self.system.rod else { return Ok(Vec::new()) };
        let s = polyline_arclengths(rod);
        Ok(rod.samples_at(&self.system.mesh, &self.system.reference, self.surface(), self.rod_dofs(), &s)?)
    }

    pub fn diagnostics(&self) -> Result<Diagnostics, DriverError> {
        let samples = self.rod_samples()?;
        let mesh = &self.system.mesh;
        let mut d = Diagnostics {
            asphericity: asphericity(mesh, self.surface()),
            ..Diagnostics::default()
        };
        if !samples.is_empty() {
            let w: f64 = samples.iter().map(|s| s.weight).sum();
            d.non_planarity = non_planarity(&samples);
            d.mean_twist = mean_twist(&samples);
            d.mean_geodesic_curvature = samples.iter().map(|s| s.weight * s.strains.kappa[0].abs()).sum::<f64>() / w;
            d.mean_stretch = samples.iter().map(|s| s.weight * s.strains.nu3).sum::<f64>() / w;
            let bend = self.config.bend;
            d.rod_bending_energy =
                samples.iter().map(|s| 0.5 * bend * s.weight * s.strains.kappa.iter().map(|k| k * k).sum::<f64>()).sum();
        }
        Ok(d)
    }
}

/// Scalar shape measures of a solution.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Diagnostics {
    pub asphericity: f64,
    pub non_planarity: f64,
    pub mean_twist: f64,
    /// Mean `|κ₁|`, the rod's in-surface curvature.
    pub mean_geodesic_curvature: f64,
    pub mean_stretch: f64,
    pub rod_bending_energy: f64,
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::GradientTolerance => "gradient_tolerance",
        Termination::MaxIterations => "max_iterations",
        Termination::Stagnation => "stagnation",
        Termination::LineSearchFailed => "line_search_failed",
        Termination::InvalidStart => "invalid_start",
        Termination::Interrupted => "interrupted",
    }
}

fn breakdown_json(b: &EnergyBreakdown) -> Value {
    json!({
        "helfrich": b.helfrich,
        "gaussian": b.gaussian,
        "pressure_volume": b.pressure_volume,
        "volume": b.volume,
        "area": b.area,
        "harmonic_map": b.harmonic,
        "mass": [b.mass[0], b.mass[1], b.mass[2]],
        "rod": b.rod,
        "gauge_penalty": b.gauge_penalty,
        "area_penalty": b.area_penalty,
        "mass_penalty": b.mass_penalty,
        "total": b.total,
    })
}

fn solver_json(s: &SolverConfig) -> Value {
    let lb = LbfgsConfig::default();
    json!({
        "lambda_g": s.lambda_g,
        "mu1": s.mu1,
        "mu2": s.mu2,
        "max_iter": s.max_iter,
        "grad_tol": s.grad_tol,
        "lbfgs_memory": s.lbfgs_memory,
        "wolfe_c1": lb.c1,
        "wolfe_c2": lb.c2,
        "max_line_search": lb.max_line_search,
        "stall_iters": lb.stall_iters,
        "stall_tol": lb.stall_tol,
        "pressure_ramp": s.pressure_ramp,
        "ramp_stages": s.ramp_stages,
        "pole_margin": s.pole_margin,
        "masked_dofs": s.mask.len(),
    })
}

fn config_json(cfg: &ExperimentConfig) -> Value {
    Value::Object(cfg.entries().into_iter().map(|(k, v)| (k.to_owned(), Value::String(v))).collect())
}

/// Machine-readable summary of a solution.
pub fn summary(sol: &Solution) -> Value {
    let r = &sol.report;
    let diag = sol.diagnostics().ok();
    json!({
        "status": if sol.converged() { "converged" } else { "failed" },
        "termination": termination_name(r.termination),
        "iterations": r.iterations,
        "evaluations": r.evaluations,
        "grad_inf": r.grad_inf,
        "rotation_fraction": r.rotation_fraction,
        "recenterings": r.recenterings,
        "restarts": r.restarts,
        "n_surface": sol.system.mesh.num_vertices(),
        "energy": breakdown_json(&r.breakdown),
        "diagnostics": diag.map(|d| json!({
            "asphericity": d.asphericity,
            "non_planarity": d.non_planarity,
            "mean_twist": d.mean_twist,
            "mean_geodesic_curvature": d.mean_geodesic_curvature,
            "mean_stretch": d.mean_stretch,
            "rod_bending_energy": d.rod_bending_energy,
        })),
        "solver": solver_json(&sol.solver),
        "config": config_json(&sol.config),
    })
}

/// Writes the limit surface and rod polyline of `state` in each of
/// `formats`.
pub fn write_geometry(system: &System, state: &[f64], formats: &[Format], dir: &Path) -> Result<(), DriverError> {
    fs::create_dir_all(dir)?;
    let mesh = &system.mesh;
    let n = system.layout().surface_len();
    let (surface, rod_dofs) = state.split_at(n);
    let points = mesh.limit_positions(surface);
    for format in formats {
        match format {
            Format::Obj => write_obj(&dir.join("surface.obj"), &points, mesh.triangles())?,
            Format::Vtk => {
                let curv = vertex_curvatures(mesh, surface)?;
                let h: Vec<f64> = curv.iter().map(|c| c.0).collect();
                let k: Vec<f64> = curv.iter().map(|c| c.1).collect();
                write_vtk(
                    &dir.join("surface.vtk"),
                    &points,
                    mesh.triangles(),
                    &[("gaussian_curvature", &k), ("mean_curvature", &h)],
                )?;
            }
            Format::Csv => {
                if let Some(rod) = &system.rod {
                    let poly = rod.samples_at(mesh, &system.reference, surface, rod_dofs, &polyline_arclengths(rod))?;
                    write_rod_csv(&dir.join("rod.csv"), &poly)?;
                }
            }
        }
    }
    Ok(())
}

fn polyline_arclengths(rod: &RodCoupling) -> Vec<f64> {
    let r = &rod.reference;
    let h = r.element_length();
    let mut s: Vec<f64> = Vec::new();
    for e in 0..r.num_elements() {
        s.push(e as f64 * h);
        s.extend(ROD_GAUSS.iter().map(|(g, _)| (e as f64 + g) * h));
    }
    s.push(r.length);
    s
}

/// Writes the deformed surface, rod polyline, energy log and summary into
/// `dir`.
pub fn write_artifacts(sol: &Solution, dir: &Path) -> Result<(), DriverError> {
    write_geometry(&sol.system, &sol.state, &sol.config.formats, dir)?;
    let b = &sol.report.breakdown;
    let log = format!(
        "helfrich {}\ngaussian {}\npressure_volume {}\nrod {}\ngauge_penalty {}\narea_penalty {}\nmass_penalty {}\ntotal {}\narea {}\nvolume {}\nharmonic_map {}\n",
        b.helfrich, b.gaussian, b.pressure_volume, b.rod, b.gauge_penalty, b.area_penalty, b.mass_penalty, b.total, b.area,
        b.volume, b.harmonic
    );
    fs::write(dir.join("energy.log"), log)?;
    let text = serde_json::to_string_pretty(&summary(sol)).map_err(io::Error::other)?;
    fs::write(dir.join("summary.json"), text + "\n")?;
    let marker = dir.join("FAILED");
    if sol.converged() {
        if marker.exists() {
            fs::remove_file(marker)?;
        }
    } else {
        fs::write(marker, format!("{}\n", termination_name(sol.report.termination)))?;
    }
    Ok(())
}

/// Solves `cfg` and writes its artifacts under `cfg.out_dir`. A run that
/// does not converge keeps its artifacts, marked with a `FAILED` file.
pub fn run(cfg: &ExperimentConfig) -> Result<Solution, DriverError> {
    let sol = match solve(cfg) {
        Ok(s) => s,
        Err(e) => {
            fs::create_dir_all(&cfg.out_dir)?;
            fs::write(cfg.out_dir.join("FAILED"), format!("{e}\n"))?;
            fs::write(cfg.out_dir.join("config.txt"), cfg.to_text())?;
            return Err(e);
        }
    };
    write_artifacts(&sol, &cfg.out_dir)?;
    if !sol.converged() {
        return Err(DriverError::NotConverged(sol.report.termination));
    }
    Ok(sol)
}

/// One mesh level of a refinement study.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub level: u32,
    pub n_surface: usize,
    /// Minimized objective (`NaN` when the level failed).
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Termination reason, or `error` when the solve did not start.
    pub termination: &'static str,
    pub grad_inf: f64,
}

/// Minimizes `base` at each mesh level. Failing levels are reported and the
/// study continues.
pub fn convergence_study(levels: &[u32], base: &ExperimentConfig) -> Vec<ConvergenceRow> {
    levels
        .iter()
        .map(|&level| {
            let cfg = ExperimentConfig { mesh_level: level, ..base.clone() };
            let n_surface = 10 * 4usize.pow(level) + 2;
            match solve(&cfg) {
                Ok(sol) => ConvergenceRow {
                    level,
                    n_surface,
                    energy: sol.report.breakdown.total,
                    converged: sol.converged(),
                    iterations: sol.report.iterations,
                    termination: termination_name(sol.report.termination),
                    grad_inf: sol.report.grad_inf,
                },
                Err(_) => ConvergenceRow {
                    level,
                    n_surface,
                    energy: f64::NAN,
                    converged: false,
                    iterations: 0,
                    termination: "error",
                    grad_inf: f64::NAN,
                },
            }
        })
        .collect()
}

pub const CONVERGENCE_HEADER: &str = "level,n_surface,energy,converged,iterations,termination,grad_inf";

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut out = format!("{CONVERGENCE_HEADER}\n");
    for r in rows {
        out += &format!(
            "{},{},{:.16e},{},{},{},{:.3e}\n",
            r.level, r.n_surface, r.energy, r.converged, r.iterations, r.termination, r.grad_inf
        );
    }
    out
}

/// One point of the line-tension benchmark.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchmarkRow {
    pub l_over_2pi: f64,
    pub r_star: f64,
    pub r_star_min: f64,
    pub r_star_max: f64,
    pub sigma_numeric: f64,
    pub sigma_perturbation: f64,
    pub relative_error: f64,
    pub nu3_bar: f64,
    pub converged: bool,
    /// `L ν̄₃ / 2π r*`; far from 1 means the band is not a round neck.
    pub length_ratio: f64,
}

impl BenchmarkRow {
    fn failed(ratio: f64) -> BenchmarkRow {
        BenchmarkRow {
            l_over_2pi: ratio,
            r_star: f64::NAN,
            r_star_min: f64::NAN,
            r_star_max: f64::NAN,
            sigma_numeric: f64::NAN,
            sigma_perturbation: f64::NAN,
            relative_error: f64::NAN,
            nu3_bar: f64::NAN,
            converged: false,
            length_ratio: f64::NAN,
        }
    }
}

/// Relative deviation of the measured line tension from the perturbative one.
pub fn relative_error(numeric: f64, perturbation: f64) -> f64 {
    (numeric - perturbation).abs() / perturbation.abs().max(1e-12)
}

/// Measures neck radius and line tension of a solved benchmark state.
pub fn benchmark_row(sol: &Solution, ratio: f64) -> Result<BenchmarkRow, DriverError> {
    let samples = sol.rod_samples()?;
    let mut centroid = Vec3::ZERO;
    for s in &samples {
        centroid += s.position;
    }
    centroid *= 1.0 / samples.len().max(1) as f64;
    let neck = neck_radius(&samples, Vec3::new(centroid[0], centroid[1], 0.0), Vec3::Z)?;
    let cfg = &sol.config;
    let (sigma, nu) = measure_sigma(&samples, cfg.stretch, cfg.p);
    let pert = perturbation_sigma(neck.mean, cfg.p)?;
    Ok(BenchmarkRow {
        l_over_2pi: ratio,
        r_star: neck.mean,
        r_star_min: neck.min,
        r_star_max: neck.max,
        sigma_numeric: sigma,
        sigma_perturbation: pert,
        relative_error: relative_error(sigma, pert),
        nu3_bar: nu,
        converged: sol.converged(),
        length_ratio: ratio * nu / neck.mean,
    })
}

/// Runs `template` (with its rod length replaced) for each `L/2π` in
/// `ratios`. `None` uses the standard benchmark parameters.
pub fn line_tension_benchmark(ratios: &[f64], template: Option<&ExperimentConfig>) -> Vec<BenchmarkRow> {
    ratios
        .iter()
        .map(|&ratio| {
            let mut cfg = template.cloned().unwrap_or_else(|| presets::line_tension(ratio));
            cfg.rod_length = 2.0 * std::f64::consts::PI * ratio;
            solve(&cfg).and_then(|sol| benchmark_row(&sol, ratio)).unwrap_or_else(|_| BenchmarkRow::failed(ratio))
        })
        .collect()
}

pub const BENCHMARK_HEADER: &str =
    "L_over_2pi,r_star,r_star_min,r_star_max,sigma_numeric,sigma_perturbation,relative_error,nu3_bar,converged,length_ratio";

pub fn benchmark_csv(rows: &[BenchmarkRow]) -> String {
    let mut out = format!("{BENCHMARK_HEADER}\n");
    for r in rows {
        out += &format!(
            "{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{},{:.10e}\n",
            r.l_over_2pi,
            r.r_star,
            r.r_star_min,
            r.r_star_max,
            r.sigma_numeric,
            r.sigma_perturbation,
            r.relative_error,
            r.nu3_bar,
            r.converged,
            r.length_ratio
        );
    }
    out
}

/// One sweep point of an application preset.
#[derive(Clone, Debug, PartialEq)]
pub struct ApplicationRow {
    pub value: f64,
    pub converged: bool,
    pub diagnostics: Diagnostics,
    pub helfrich: f64,
    pub rod_energy: f64,
}

/// Solves `app` at each sweep value. With `out`, each point's artifacts go
/// to `out/<name>_<index>`.
pub fn application_driver(app: Application, sweep: &[f64], seed: u64, out: Option<&Path>) -> Vec<ApplicationRow> {
    sweep
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            let mut cfg = app.config(value);
            cfg.seed = seed;
            let failed = ApplicationRow {
                value,
                converged: false,
                diagnostics: Diagnostics {
                    asphericity: f64::NAN,
                    non_planarity: f64::NAN,
                    mean_twist: f64::NAN,
                    mean_geodesic_curvature: f64::NAN,
                    mean_stretch: f64::NAN,
                    rod_bending_energy: f64::NAN,
                },
                helfrich: f64::NAN,
                rod_energy: f64::NAN,
            };
            let Ok(sol) = solve(&cfg) else { return failed };
            if let Some(dir) = out {
                let _ = write_artifacts(&sol, &point_dir(dir, app.name(), i));
            }
            match sol.diagnostics() {
                Ok(d) => ApplicationRow {
                    value,
                    converged: sol.converged(),
                    diagnostics: d,
                    helfrich: sol.report.breakdown.helfrich,
                    rod_energy: sol.report.breakdown.rod,
                },
                Err(_) => failed,
            }
        })
        .collect()
}

fn point_dir(root: &Path, name: &str, i: usize) -> PathBuf {
    root.join(format!("{name}_{i}"))
}

pub const APPLICATION_HEADER: &str =
    "value,converged,non_planarity,asphericity,mean_twist,mean_geodesic_curvature,mean_stretch,rod_bending_energy,helfrich,rod_energy";

pub fn application_csv(rows: &[ApplicationRow]) -> String {
    let mut out = format!("{APPLICATION_HEADER}\n");
    for r in rows {
        let d = &r.diagnostics;
        out += &format!(
            "{},{},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e}\n",
            r.value,
            r.converged,
            d.non_planarity,
            d.asphericity,
            d.mean_twist,
            d.mean_geodesic_curvature,
            d.mean_stretch,
            d.rod_bending_energy,
            r.helfrich,
            r.rod_energy
        );
    }
    out
}
