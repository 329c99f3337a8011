//! Config-driven front end: parses a scenario file, runs it, and writes CSV
//! tables, gnuplot scripts and a run manifest into the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{build_shape, discretize, hex, load_custom_curve, BoundaryMesh, Shape};
use crate::kernels::assemble_s_b11;
use crate::resonance::{resonance_set_2d, DrudeMaterial, LogBranch, ResonanceSet};
use crate::spectral::{alpha_coefficients, decay_profile, mode_coefficients, spectrum_for_mesh, NPSpectrum};
use crate::timedomain::{
    arrival_times, cached_sweep, incident_trace, misfit, modal_solution, modal_terms, quasi_normal_mode,
    reference_solution, time_grid, BoundarySolver, FrequencyGrid, ModeSelection, Pulse, Synthesis, TimeTrace,
    DEFAULT_C1, DEFAULT_SAMPLES, DEFAULT_T_END,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Spectrum,
    Resonances,
    Timedomain,
    Decay,
    QnmMap,
    Table2,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionRule {
    Leading,
    Dominant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationPoint {
    pub name: String,
    /// |X| in B-units.
    pub radius: f64,
    pub angle_deg: f64,
}

impl ObservationPoint {
    pub fn position(&self) -> [f64; 2] {
        let a = self.angle_deg.to_radians();
        [self.radius * a.cos(), self.radius * a.sin()]
    }
}

fn default_points() -> Vec<ObservationPoint> {
    [("A", 15.0, 0.0), ("B", 15.0, 45.0), ("C", 15.0, 90.0), ("D", 300.0, 45.0)]
        .into_iter()
        .map(|(n, r, a)| ObservationPoint { name: n.into(), radius: r, angle_deg: a })
        .collect()
}

/// Validated scenario configuration. Physical quantities carry their unit in
/// the key name; geometry and observation points are in B-units.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub shape: Shape,
    pub n_nodes: usize,
    pub modes_j: usize,
    pub material: DrudeMaterial,
    pub delta_m: f64,
    pub direction: [f64; 2],
    pub center_m: [f64; 2],
    pub pulse_c1_s: f64,
    pub band_eps_rad_per_s: f64,
    pub band_rho_rad_per_s: f64,
    pub band_samples: usize,
    pub observation_points: Vec<ObservationPoint>,
    pub t_end_s: f64,
    pub time_samples: usize,
    pub output_dir: PathBuf,
    pub log_branch: LogBranch,
    pub mode_counts: Vec<usize>,
    pub mode_selection: SelectionRule,
    pub cache_dir: Option<PathBuf>,
    pub decay_far_radius: f64,
    pub decay_samples: usize,
    pub qnm_mode_j: usize,
    pub qnm_extent: f64,
    pub qnm_resolution: usize,
    pub qnm_causal: bool,
}

const TOP_KEYS: &[&str] = &[
    "scenario",
    "shape",
    "shape_params",
    "custom_curve_path",
    "n_nodes",
    "modes_j",
    "omega_p_rad_per_s",
    "collision_time_s",
    "eps0_f_per_m",
    "mu0_h_per_m",
    "eps_m_f_per_m",
    "delta_m",
    "direction",
    "center_m",
    "pulse_c1_s",
    "band_eps_rad_per_s",
    "band_rho_rad_per_s",
    "band_samples",
    "observation_points",
    "t_end_s",
    "time_samples",
    "output_dir",
    "log_branch",
    "mode_counts",
    "mode_selection",
    "cache_dir",
    "decay_far_radius",
    "decay_samples",
    "qnm_mode_j",
    "qnm_extent",
    "qnm_resolution",
    "qnm_causal",
];

const POINT_KEYS: &[&str] = &["name", "radius", "angle_deg"];

fn shape_keys(kind: &str) -> &'static [&'static str] {
    match kind {
        "ellipse" => &["a", "b"],
        "diamond" => &["scale", "amp"],
        "flower" => &["base", "amp", "petals"],
        "disk" => &["radius"],
        _ => &[],
    }
}

/// Unknown-key message with the closest known keys (edit distance or shared prefix).
fn unknown_key(path: &str, key: &str, known: &[&str]) -> Error {
    let mut scored: Vec<(usize, &str)> = known
        .iter()
        .map(|k| (strsim::levenshtein(key, k), *k))
        .filter(|(d, k)| *d <= 3 || (key.len() >= 3 && k.starts_with(&key[..3])))
        .collect();
    scored.sort();
    let msg = if scored.is_empty() {
        format!("unknown key `{key}`")
    } else {
        let names: Vec<String> = scored.iter().take(4).map(|(_, k)| format!("`{k}`")).collect();
        format!("unknown key `{key}`; did you mean {}?", names.join(" or "))
    };
    Error::config(format!("{path}{key}"), msg)
}

fn check_keys(obj: &Map<String, Value>, path: &str, known: &[&str]) -> Result<()> {
    for k in obj.keys() {
        if !known.contains(&k.as_str()) {
            return Err(unknown_key(path, k, known));
        }
    }
    Ok(())
}

struct Reader<'a> {
    obj: &'a Map<String, Value>,
    path: &'a str,
}

impl Reader<'_> {
    fn err(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::config(format!("{}{key}", self.path), msg)
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.obj.get(key) {
            None => Ok(default),
            Some(v) => v.as_f64().filter(|x| x.is_finite()).ok_or_else(|| self.err(key, "expected a finite number")),
        }
    }

    fn positive(&self, key: &str, default: f64) -> Result<f64> {
        let v = self.f64_or(key, default)?;
        if !(v > 0.0) {
            return Err(self.err(key, format!("must be positive, got {v}")));
        }
        Ok(v)
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.obj.get(key) {
            None => Ok(default),
            Some(v) => v.as_u64().map(|x| x as usize).ok_or_else(|| self.err(key, "expected a non-negative integer")),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.obj.get(key) {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or_else(|| self.err(key, "expected true or false")),
        }
    }

    fn str_opt(&self, key: &str) -> Result<Option<&str>> {
        match self.obj.get(key) {
            None => Ok(None),
            Some(v) => v.as_str().map(Some).ok_or_else(|| self.err(key, "expected a string")),
        }
    }

    fn pair_or(&self, key: &str, default: [f64; 2]) -> Result<[f64; 2]> {
        match self.obj.get(key) {
            None => Ok(default),
            Some(v) => {
                let a = v.as_array().filter(|a| a.len() == 2).ok_or_else(|| self.err(key, "expected [x1, x2]"))?;
                let x = a[0].as_f64().ok_or_else(|| self.err(key, "expected numbers"))?;
                let y = a[1].as_f64().ok_or_else(|| self.err(key, "expected numbers"))?;
                Ok([x, y])
            }
        }
    }

    fn enum_or<T: for<'de> Deserialize<'de>>(&self, key: &str, default: T, choices: &str) -> Result<T> {
        match self.obj.get(key) {
            None => Ok(default),
            Some(v) => serde_json::from_value(v.clone()).map_err(|_| self.err(key, format!("expected one of {choices}"))),
        }
    }
}

/// Reads and validates a config file (strict JSON, unit-suffixed keys).
pub fn parse_config(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

/// Parses config text; relative paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<ScenarioConfig> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::config(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| Error::config("$", "top level must be an object"))?;
    check_keys(obj, "", TOP_KEYS)?;
    let r = Reader { obj, path: "" };

    let scenario: Scenario = match obj.get("scenario") {
        None => return Err(r.err("scenario", "missing required key")),
        Some(_) => r.enum_or("scenario", Scenario::Spectrum, "spectrum, resonances, timedomain, decay, qnm_map, table2, all")?,
    };
    let kind = r.str_opt("shape")?.ok_or_else(|| r.err("shape", "missing required key"))?.to_string();
    let shape = parse_shape(&r, &kind, base)?;

    let n_nodes = r.usize_or("n_nodes", 256)?;
    if n_nodes < 16 || n_nodes % 2 != 0 {
        return Err(r.err("n_nodes", format!("must be even and at least 16, got {n_nodes}")));
    }
    let modes_j = r.usize_or("modes_j", 30)?;
    if modes_j == 0 || modes_j >= n_nodes {
        return Err(r.err("modes_j", format!("must lie in 1..{n_nodes}, got {modes_j}")));
    }
    let d0 = DrudeMaterial::default();
    let material = DrudeMaterial {
        eps0: r.positive("eps0_f_per_m", d0.eps0)?,
        mu0: r.positive("mu0_h_per_m", d0.mu0)?,
        omega_p: r.positive("omega_p_rad_per_s", d0.omega_p)?,
        t_collision: r.positive("collision_time_s", d0.t_collision)?,
        eps_m: r.positive("eps_m_f_per_m", obj.get("eps0_f_per_m").and_then(Value::as_f64).unwrap_or(d0.eps_m))?,
    };
    let delta_m = r.positive("delta_m", 1e-8)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let direction = r.pair_or("direction", [s, s])?;
    if ((direction[0].hypot(direction[1])) - 1.0).abs() > 1e-9 {
        return Err(r.err("direction", "must be a unit vector"));
    }
    let center_m = r.pair_or("center_m", [0.0, 0.0])?;
    let pulse_c1_s = r.positive("pulse_c1_s", DEFAULT_C1)?;
    let band_eps_rad_per_s = r.positive("band_eps_rad_per_s", material.omega_p / 4.0)?;
    let band_rho_rad_per_s = r.positive("band_rho_rad_per_s", material.omega_p)?;
    let band_samples = r.usize_or("band_samples", 10_000)?;
    FrequencyGrid::new(band_eps_rad_per_s, band_rho_rad_per_s, band_samples, &material, delta_m)
        .map_err(|e| r.err("band_rho_rad_per_s", e.to_string()))?;

    let observation_points = match obj.get("observation_points") {
        None => default_points(),
        Some(v) => parse_points(v)?,
    };
    let t_end_s = r.positive("t_end_s", DEFAULT_T_END)?;
    let time_samples = r.usize_or("time_samples", DEFAULT_SAMPLES)?;
    if time_samples < 2 {
        return Err(r.err("time_samples", "need at least 2 samples"));
    }
    let output_dir = base.join(r.str_opt("output_dir")?.unwrap_or("plasmode-out"));
    let log_branch = r.enum_or("log_branch", LogBranch::Mirror, "mirror, principal")?;
    let mode_counts = match obj.get("mode_counts") {
        None => vec![1, modes_j],
        Some(v) => v
            .as_array()
            .and_then(|a| a.iter().map(|x| x.as_u64().map(|u| u as usize)).collect::<Option<Vec<_>>>())
            .ok_or_else(|| r.err("mode_counts", "expected an array of integers"))?,
    };
    if let Some(bad) = mode_counts.iter().find(|&&j| j > modes_j) {
        return Err(r.err("mode_counts", format!("J = {bad} exceeds modes_j = {modes_j}")));
    }
    let mode_selection = r.enum_or("mode_selection", SelectionRule::Dominant, "leading, dominant")?;
    let cache_dir = r.str_opt("cache_dir")?.map(|p| base.join(p));
    let decay_far_radius = r.positive("decay_far_radius", 300.0)?;
    let decay_samples = r.usize_or("decay_samples", 64)?.max(1);
    let qnm_mode_j = r.usize_or("qnm_mode_j", 1)?;
    if qnm_mode_j == 0 || qnm_mode_j > modes_j {
        return Err(r.err("qnm_mode_j", format!("must lie in 1..={modes_j}")));
    }
    let qnm_extent = r.positive("qnm_extent", 20.0)?;
    let qnm_resolution = r.usize_or("qnm_resolution", 81)?;
    if qnm_resolution < 2 {
        return Err(r.err("qnm_resolution", "need at least 2"));
    }
    let qnm_causal = r.bool_or("qnm_causal", true)?;
    Ok(ScenarioConfig {
        scenario,
        shape,
        n_nodes,
        modes_j,
        material,
        delta_m,
        direction,
        center_m,
        pulse_c1_s,
        band_eps_rad_per_s,
        band_rho_rad_per_s,
        band_samples,
        observation_points,
        t_end_s,
        time_samples,
        output_dir,
        log_branch,
        mode_counts,
        mode_selection,
        cache_dir,
        decay_far_radius,
        decay_samples,
        qnm_mode_j,
        qnm_extent,
        qnm_resolution,
        qnm_causal,
    })
}

fn parse_shape(r: &Reader, kind: &str, base: &Path) -> Result<Shape> {
    let empty = Map::new();
    let params = match r.obj.get("shape_params") {
        None => &empty,
        Some(v) => v.as_object().ok_or_else(|| r.err("shape_params", "expected an object"))?,
    };
    if kind != "custom" && r.obj.contains_key("custom_curve_path") {
        return Err(r.err("custom_curve_path", "only valid with shape = \"custom\""));
    }
    check_keys(params, "shape_params.", shape_keys(kind))?;
    let p = Reader { obj: params, path: "shape_params." };
    let shape = match kind {
        "ellipse" => Shape::Ellipse { a: p.positive("a", 1.0)?, b: p.positive("b", 5.0)? },
        "diamond" => Shape::Diamond { scale: p.positive("scale", 2.0)?, amp: p.f64_or("amp", 0.066)? },
        "flower" => Shape::Flower {
            base: p.positive("base", 2.0)?,
            amp: p.f64_or("amp", 0.6)?,
            petals: p.usize_or("petals", 5)? as u32,
        },
        "disk" => Shape::Disk { radius: p.positive("radius", 1.0)? },
        "custom" => {
            let file = r.str_opt("custom_curve_path")?.ok_or_else(|| r.err("custom_curve_path", "required for a custom shape"))?;
            Shape::Custom { points: load_custom_curve(&base.join(file)).map_err(|e| r.err("custom_curve_path", e.to_string()))? }
        }
        other => {
            return Err(r.err("shape", format!("unknown shape `{other}` (ellipse, diamond, flower, disk, custom)")));
        }
    };
    build_shape(shape.clone()).map_err(|e| r.err("shape", e.to_string()))?;
    Ok(shape)
}

fn parse_points(v: &Value) -> Result<Vec<ObservationPoint>> {
    let arr = v.as_array().ok_or_else(|| Error::config("observation_points", "expected an array"))?;
    if arr.is_empty() {
        return Err(Error::config("observation_points", "need at least one point"));
    }
    arr.iter()
        .enumerate()
        .map(|(i, p)| {
            let path = format!("observation_points[{i}].");
            let obj = p.as_object().ok_or_else(|| Error::config(&path, "expected an object"))?;
            check_keys(obj, &path, POINT_KEYS)?;
            let r = Reader { obj, path: &path };
            let name = r.str_opt("name")?.map(str::to_string).unwrap_or_else(|| format!("P{i}"));
            if !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(r.err("name", "use letters, digits, '_' or '-'"));
            }
            Ok(ObservationPoint { name, radius: r.positive("radius", 15.0)?, angle_deg: r.f64_or("angle_deg", 0.0)? })
        })
        .collect()
}

/// Command-line overrides applied on top of the file.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub polish_roots: bool,
    pub high_order_ift: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RunManifest {
    pub config_sha256: String,
    pub scenario: String,
    pub stages: BTreeMap<String, f64>,
    pub outputs: Vec<String>,
    pub sweep_cache_hit: Option<bool>,
}

struct Run<'a> {
    cfg: &'a ScenarioConfig,
    opts: &'a RunOptions,
    out: PathBuf,
    manifest: RunManifest,
    stage_order: usize,
}

/// Everything derived from one shape up to the resonances.
struct Prepared {
    mesh: BoundaryMesh,
    spec: NPSpectrum,
    alphas: Vec<f64>,
    res: ResonanceSet,
}

fn fmt_c(z: C64) -> String {
    format!("{:.12e}, {:.12e}", z.re, z.im)
}

impl Run<'_> {
    fn timed<T>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let v = f(self)?;
        self.stage_order += 1;
        self.manifest.stages.insert(format!("{:02}_{name}", self.stage_order), start.elapsed().as_secs_f64());
        Ok(v)
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let p = self.out.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        self.manifest.outputs.push(name.to_string());
        Ok(())
    }

    fn prepare(&mut self, shape: &Shape) -> Result<Prepared> {
        let cfg = self.cfg;
        let polish = self.opts.polish_roots;
        self.timed(&format!("prepare_{}", shape.name()), |_| {
            let mesh = discretize(&build_shape(shape.clone())?, cfg.n_nodes)?;
            let spec = spectrum_for_mesh(&mesh, cfg.modes_j)?;
            let alphas = alpha_coefficients(&spec, &assemble_s_b11(&mesh))?;
            let res = resonance_set_2d(&cfg.material, &spec.lambdas[1..], &alphas, cfg.delta_m, cfg.log_branch, polish)?;
            Ok(Prepared { mesh, spec, alphas, res })
        })
    }

    fn spectrum(&mut self, p: &Prepared) -> Result<()> {
        let coef = mode_coefficients(&p.spec, self.cfg.direction);
        let mut s = String::from("j, lambda_j, alpha_j, abs_coefficient\n");
        s.push_str(&format!("0, {:.15e}, , {:.12e}\n", p.spec.lambdas[0], coef[0].abs()));
        for j in 1..=p.spec.mode_count() {
            s.push_str(&format!("{j}, {:.15e}, {:.12e}, {:.12e}\n", p.spec.lambdas[j], p.alphas[j - 1], coef[j].abs()));
        }
        self.write("spectrum.csv", &s)?;
        self.write(
            "spectrum.gp",
            "set datafile separator ','\nset key autotitle columnhead\nset xlabel 'j'\nset multiplot layout 2,1\n\
             plot 'spectrum.csv' using 1:2 with points pt 7 title 'lambda_j'\n\
             set logscale y\nplot 'spectrum.csv' using 1:4 with linespoints title '|<d.nu, phi_j>|'\nunset multiplot\n",
        )
    }

    fn resonances(&mut self, p: &Prepared) -> Result<()> {
        let mut s = String::from(
            "j, lambda_j, alpha_j, re_omega_s_plus, im_omega_s_plus, re_omega_s_minus, im_omega_s_minus, \
             re_omega_plus, im_omega_plus, re_omega_minus, im_omega_minus, re_c_plus, im_c_plus, re_c_minus, im_c_minus\n",
        );
        for m in &p.res.modes {
            s.push_str(&format!(
                "{}, {:.15e}, {:.12e}, {}, {}, {}, {}, {}, {}\n",
                m.j,
                m.lambda,
                m.alpha,
                fmt_c(m.static_roots.plus),
                fmt_c(m.static_roots.minus),
                fmt_c(m.corrected.plus.omega),
                fmt_c(m.corrected.minus.omega),
                fmt_c(m.c_plus),
                fmt_c(m.c_minus)
            ));
        }
        self.write("resonances.csv", &s)?;
        let summary = format!(
            "radius_rad_per_s, ratio_r_delta_over_c, max_residual\n{:.12e}, {:.12e}, {:.6e}\n",
            p.res.radius, p.res.ratio, p.res.max_residual
        );
        self.write("resonance_radius.csv", &summary)?;
        self.write(
            "resonances.gp",
            "set datafile separator ','\nset xlabel 'Re Omega (rad/s)'\nset ylabel 'Im Omega (rad/s)'\n\
             plot 'resonances.csv' using 8:9 with points pt 7 title 'Omega^+', \
             '' using 10:11 with points pt 6 title 'Omega^-', \
             '' using 4:5 with points pt 2 title 'static'\n",
        )
    }

    fn decay(&mut self, p: &Prepared) -> Result<()> {
        let k = C64::new(self.cfg.material.omega_p * self.cfg.delta_m / self.cfg.material.c(), 0.0);
        let rows = decay_profile(&p.mesh, &p.spec, k, self.cfg.decay_far_radius, self.cfg.decay_samples)?;
        let mut s = String::from("j, lambda_j, mean_abs_coefficient, mean_abs_mode_field\n");
        for r in rows {
            s.push_str(&format!("{}, {:.15e}, {:.12e}, {:.12e}\n", r.j, r.lambda, r.coefficient, r.mode_field));
        }
        self.write("decay.csv", &s)?;
        self.write(
            "decay.gp",
            "set datafile separator ','\nset logscale y\nset xlabel 'j'\n\
             plot 'decay.csv' using 1:3 with linespoints title 'mean |<d.nu, phi_j>|'\n",
        )
    }

    fn qnm_map(&mut self, p: &Prepared) -> Result<()> {
        let cfg = self.cfg;
        let j = cfg.qnm_mode_j;
        let omega = p.res.modes[j - 1].corrected.plus.omega;
        let m = cfg.qnm_resolution;
        let step = 2.0 * cfg.qnm_extent / (m - 1) as f64;
        let tol = p.mesh.spacing();
        let mut pts = Vec::new();
        for iy in 0..m {
            for ix in 0..m {
                let x = [-cfg.qnm_extent + step * ix as f64, -cfg.qnm_extent + step * iy as f64];
                if !p.mesh.contains(x) && p.mesh.distance_to(x) > tol {
                    pts.push(x);
                }
            }
        }
        let vals = quasi_normal_mode(&p.mesh, &p.spec, j, omega, &cfg.material, cfg.delta_m, &pts, cfg.qnm_causal)?;
        let mut s = String::from("x1, x2, re_field, im_field, abs_field\n");
        for (x, v) in pts.iter().zip(&vals) {
            s.push_str(&format!("{:.6e}, {:.6e}, {}, {:.12e}\n", x[0], x[1], fmt_c(*v), v.norm()));
        }
        self.write("qnm_map.csv", &s)?;
        self.write(
            "qnm_map.gp",
            "set datafile separator ','\nset view map\nset size ratio -1\n\
             splot 'qnm_map.csv' using 1:2:3 with points pt 5 ps 0.5 palette title 'Re E_j'\n",
        )
    }

    fn table2(&mut self) -> Result<()> {
        let mut s = String::from("shape, radius_rad_per_s, ratio_r_delta_over_c\n");
        for shape in [Shape::diamond(), Shape::ellipse(), Shape::flower()] {
            let p = self.prepare(&shape)?;
            s.push_str(&format!("{}, {:.12e}, {:.6}\n", shape.name(), p.res.radius, p.res.ratio));
        }
        self.write("table2.csv", &s)
    }

    fn timedomain(&mut self, p: &Prepared) -> Result<()> {
        let cfg = self.cfg;
        let mat = cfg.material;
        let grid = FrequencyGrid::new(cfg.band_eps_rad_per_s, cfg.band_rho_rad_per_s, cfg.band_samples, &mat, cfg.delta_m)?;
        let pulse = Pulse::new(cfg.pulse_c1_s)?;
        let solver = BoundarySolver::new(&p.mesh, mat, cfg.delta_m, cfg.direction, cfg.center_m)?;
        let cache = cfg.cache_dir.clone();
        let (sweep, hit) = self.timed("frequency_sweep", |_| cached_sweep(&solver, &grid, None, cache.as_deref()))?;
        self.manifest.sweep_cache_hit = Some(hit);
        let points: Vec<[f64; 2]> = cfg.observation_points.iter().map(ObservationPoint::position).collect();
        let times = time_grid(cfg.t_end_s, cfg.time_samples)?;
        let rule = if self.opts.high_order_ift { Synthesis::HighOrder } else { Synthesis::Riemann };
        let fields = self.timed("fields", |_| sweep.fields(&solver, &pulse, &points))?;
        let terms = self.timed("modal_terms", |_| {
            modal_terms(&p.mesh, &p.spec, &p.res, &pulse, &mat, cfg.direction, cfg.center_m, &points)
        })?;
        let mut report = String::from("point, j_modes, selected_modes, relative_l2, reconstruction_pct, pre_arrival_ratio\n");
        for (i, op) in cfg.observation_points.iter().enumerate() {
            let arrival = arrival_times(&mat, cfg.delta_m, cfg.direction, cfg.center_m, points[i], pulse.c1());
            let reference = self.timed(&format!("reference_{}", op.name), |_| {
                reference_solution(&grid, &fields[i], &times, rule, points[i], arrival)
            })?;
            let ratio = reference.pre_arrival_ratio()?;
            self.write(&format!("trace_{}_reference.csv", op.name), &reference.to_csv())?;
            let mut plot = format!(
                "set datafile separator ','\nset xlabel 't (s)'\nset arrow from {:e}, graph 0 to {:e}, graph 1 nohead dt 2\n\
                 set arrow from {:e}, graph 0 to {:e}, graph 1 nohead dt 3\n\
                 plot 'trace_{n}_reference.csv' using 1:2 with lines lw 2 title 'reference'",
                arrival.minus, arrival.minus, arrival.plus, arrival.plus, n = op.name
            );
            for &j in &cfg.mode_counts {
                let sel = match cfg.mode_selection {
                    SelectionRule::Leading => ModeSelection::Leading(j),
                    SelectionRule::Dominant => ModeSelection::Dominant(j),
                };
                let chosen = crate::timedomain::select_modes(&terms, &sel, i, &times, arrival)?;
                let modal = modal_solution(&terms, &sel, i, points[i], &times, arrival)?;
                let m = misfit(&reference, &modal, (arrival.plus, f64::INFINITY))?;
                let name = format!("trace_{}_modal_J{j}.csv", op.name);
                self.write(&name, &modal.to_csv())?;
                plot.push_str(&format!(", '{name}' using 1:2 with lines title 'U_{j}'"));
                let listed: Vec<String> = chosen.iter().map(|j| j.to_string()).collect();
                report.push_str(&format!(
                    "{}, {j}, {}, {:.6e}, {:.4}, {:.6e}\n",
                    op.name,
                    listed.join(" "),
                    m.relative_l2,
                    m.reconstruction_pct,
                    ratio
                ));
            }
            plot.push('\n');
            self.write(&format!("trace_{}.gp", op.name), &plot)?;
        }
        self.write("misfit.csv", &report)?;
        // incident pulse 3000 nm along d, as a visual reference
        let x = [3000e-9 * cfg.direction[0], 3000e-9 * cfg.direction[1]];
        let inc: TimeTrace = incident_trace(&pulse, &mat, cfg.direction, x, &times)?;
        self.write("incident.csv", &inc.to_csv())
    }
}

fn config_hash(cfg: &ScenarioConfig) -> String {
    let json = serde_json::to_string(cfg).unwrap_or_default();
    hex(&Sha256::digest(json.as_bytes()))
}

/// Runs the configured scenario; on failure every file written so far is removed.
pub fn run(cfg: &ScenarioConfig, opts: &RunOptions) -> Result<RunManifest> {
    let out = opts.out_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut run = Run {
        cfg,
        opts,
        out: out.clone(),
        manifest: RunManifest {
            config_sha256: config_hash(cfg),
            scenario: serde_json::to_value(cfg.scenario).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            ..Default::default()
        },
        stage_order: 0,
    };
    let result = execute(&mut run);
    if let Err(e) = result {
        for f in &run.manifest.outputs {
            let _ = fs::remove_file(out.join(f));
        }
        return Err(e);
    }
    let mut manifest = run.manifest;
    manifest.outputs.push("manifest.json".into());
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Numerical(e.to_string()))?;
    let p = out.join("manifest.json");
    fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    Ok(manifest)
}

fn execute(run: &mut Run) -> Result<()> {
    let cfg = run.cfg;
    let sc = cfg.scenario;
    let all = sc == Scenario::All;
    if sc == Scenario::Table2 || all {
        run.table2()?;
    }
    if sc == Scenario::Table2 {
        return Ok(());
    }
    let p = run.prepare(&cfg.shape)?;
    if sc == Scenario::Spectrum || all {
        run.spectrum(&p)?;
    }
    if sc == Scenario::Resonances || all {
        run.resonances(&p)?;
    }
    if sc == Scenario::Decay || all {
        run.timed("decay", |r| r.decay(&p))?;
    }
    if sc == Scenario::QnmMap || all {
        run.timed("qnm_map", |r| r.qnm_map(&p))?;
    }
    if sc == Scenario::Timedomain || all {
        run.timedomain(&p)?;
    }
    Ok(())
}

/// Process exit code for an error: 2 for configuration problems, 3 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => 2,
        _ => 3,
    }
}

/// Thread count from the flag, else PLASMODE_THREADS.
pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> Result<Option<usize>> {
    if let Some(k) = flag {
        if k == 0 {
            return Err(Error::config("--threads", "must be at least 1"));
        }
        return Ok(Some(k));
    }
    match env {
        None => Ok(None),
        Some(s) => match s.trim().parse::<usize>() {
            Ok(k) if k > 0 => Ok(Some(k)),
            _ => Err(Error::config("PLASMODE_THREADS", format!("expected a positive integer, got `{s}`"))),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<ScenarioConfig> {
        parse_config_str(text, Path::new("/tmp"))
    }

    #[test]
    fn minimal_config_gets_table_defaults() {
        let c = parse(r#"{"shape": "ellipse", "scenario": "spectrum"}"#).unwrap();
        assert_eq!(c.material, DrudeMaterial::default());
        assert_eq!(c.delta_m, 1e-8);
        assert_eq!(c.shape, Shape::ellipse());
        assert_eq!(c.n_nodes, 256);
        assert_eq!(c.observation_points.len(), 4);
        assert_eq!(c.band_samples, 10_000);
        assert_eq!(c.log_branch, LogBranch::Mirror);
    }

    #[test]
    fn rejects_negative_delta() {
        let e = parse(r#"{"shape": "ellipse", "scenario": "spectrum", "delta_m": -1e-8}"#).unwrap_err();
        assert!(matches!(e, Error::Config { ref path, .. } if path == "delta_m"), "{e}");
    }

    #[test]
    fn unknown_key_gets_suggestion() {
        let e = parse(r#"{"shape": "ellipse", "scenario": "spectrum", "epsilon": 1}"#).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("epsilon") && msg.contains("did you mean"), "{msg}");
        assert!(msg.contains("eps0_f_per_m") || msg.contains("eps_m_f_per_m"), "{msg}");
        let e = parse(r#"{"shape": "ellipse", "scenario": "spectrum", "shape_params": {"c": 1}}"#).unwrap_err();
        assert!(e.to_string().contains("shape_params.c"));
    }

    #[test]
    fn syntax_errors_report_position() {
        let e = parse("{\"shape\": \"ellipse\",\n \"scenario\": }").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
        assert_eq!(exit_code(&e), 2);
    }

    #[test]
    fn shape_parameters_and_validation() {
        let c = parse(r#"{"shape": "flower", "scenario": "spectrum", "shape_params": {"amp": 0.3}}"#).unwrap();
        assert_eq!(c.shape, Shape::Flower { base: 2.0, amp: 0.3, petals: 5 });
        assert!(parse(r#"{"shape": "blob", "scenario": "spectrum"}"#).is_err());
        assert!(parse(r#"{"shape": "ellipse", "scenario": "spectrum", "n_nodes": 31}"#).is_err());
        assert!(parse(r#"{"shape": "ellipse", "scenario": "spectrum", "direction": [1, 1]}"#).is_err());
        assert!(parse(r#"{"shape": "ellipse", "scenario": "nope"}"#).is_err());
        assert!(parse(r#"{"shape": "ellipse"}"#).is_err());
    }

    #[test]
    fn threads_flag_overrides_env() {
        assert_eq!(resolve_threads(Some(3), Some("5")).unwrap(), Some(3));
        assert_eq!(resolve_threads(None, Some("5")).unwrap(), Some(5));
        assert_eq!(resolve_threads(None, None).unwrap(), None);
        assert!(resolve_threads(None, Some("x")).is_err());
    }

    #[test]
    fn spectrum_run_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let c = parse(r#"{"shape": "disk", "scenario": "spectrum", "n_nodes": 64, "modes_j": 10}"#).unwrap();
        let opts = RunOptions { out_dir: Some(dir.path().to_path_buf()), ..Default::default() };
        let m = run(&c, &opts).unwrap();
        assert!(m.outputs.contains(&"spectrum.csv".to_string()));
        let text = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
        let mut lines = text.lines().skip(1);
        let l0: f64 = lines.next().unwrap().split(',').nth(1).unwrap().trim().parse().unwrap();
        assert!((l0 - 0.5).abs() < 1e-12);
        for l in lines {
            let v: f64 = l.split(',').nth(1).unwrap().trim().parse().unwrap();
            assert!(v.abs() < 1e-10);
        }
        assert!(dir.path().join("manifest.json").exists());
    }
}
