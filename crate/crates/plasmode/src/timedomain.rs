//! Time-domain scattering: incident pulse, frequency sweep of full boundary
//! solves, Riemann-sum synthesis of the reference trace, and the finite
//! modal (residue) expansion it is compared against.
//!
//! Fourier convention: `f(omega) = int f^(t) e^{i omega t} dt`, synthesis with
//! `e^{-i omega t}`. Observation points are in B-coordinates (x = z + delta X).

use std::f64::consts::{E, PI};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use faer::linalg::solvers::Solve;
use faer::Mat;
use gauss_quad::GaussLegendre;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{hex, BoundaryMesh};
use crate::kernels::{eval_single_layer_offboundary, HelmholtzWorkspace};
use crate::resonance::{permittivity, DrudeMaterial, LogBranch, ResonanceSet};
use crate::spectral::{mode_coefficients, NPSpectrum};

pub const DEFAULT_C1: f64 = 8e-15;
pub const DEFAULT_T_END: f64 = 60e-15;
pub const DEFAULT_SAMPLES: usize = 2048;
/// Relative residual accepted from the dense 2N x 2N boundary solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

const GL_ORDER: usize = 32;

/// Bump pulse supported on [0, C1], peak value 1.
#[derive(Clone, Debug)]
pub struct Pulse {
    c1: f64,
    rule: Vec<(f64, f64)>,
}

impl Pulse {
    pub fn new(c1: f64) -> Result<Self> {
        if !(c1 > 0.0) || !c1.is_finite() {
            return Err(Error::Invalid(format!("pulse length C1 must be positive, got {c1}")));
        }
        let gl = GaussLegendre::new(GL_ORDER).map_err(|e| Error::Numerical(e.to_string()))?;
        Ok(Pulse { c1, rule: gl.as_node_weight_pairs().to_vec() })
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn value(&self, t: f64) -> f64 {
        let s = (2.0 * t - self.c1) / self.c1;
        if s.abs() >= 1.0 {
            0.0
        } else {
            E * (-1.0 / (1.0 - s * s)).exp()
        }
    }

    pub fn samples(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|&t| self.value(t)).collect()
    }

    /// f(omega) = int_0^C1 f^(t) e^{i omega t} dt by composite Gauss-Legendre;
    /// the panel count grows with |omega| C1.
    pub fn spectrum(&self, omega: C64) -> Result<C64> {
        if omega.im.abs() * self.c1 > 700.0 {
            return Err(Error::Domain(format!("|Im omega| C1 = {} overflows", omega.im.abs() * self.c1)));
        }
        let panels = 16 + (omega.norm() * self.c1 / 2.0).ceil() as usize;
        let h = self.c1 / panels as f64;
        let mut acc = C64::new(0.0, 0.0);
        for p in 0..panels {
            let mid = (p as f64 + 0.5) * h;
            for &(x, w) in &self.rule {
                let t = mid + 0.5 * h * x;
                acc += 0.5 * h * w * self.value(t) * (C64::i() * omega * t).exp();
            }
        }
        Ok(acc)
    }
}

pub fn pulse_spectrum(pulse: &Pulse, omega: C64) -> Result<C64> {
    pulse.spectrum(omega)
}

/// Positive half of the symmetric band +-[eps, rho] with L samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub eps: f64,
    pub rho: f64,
    pub l: usize,
}

impl FrequencyGrid {
    /// Checks 0 < eps < rho and the quasi-static bound rho delta / c <= 1.
    pub fn new(eps: f64, rho: f64, l: usize, mat: &DrudeMaterial, delta: f64) -> Result<Self> {
        let g = Self::wide(eps, rho, l)?;
        if g.rho * delta / mat.c() > 1.0 {
            return Err(Error::Invalid(format!(
                "rho delta / c = {} exceeds 1 (outside the quasi-static regime)",
                rho * delta / mat.c()
            )));
        }
        Ok(g)
    }

    /// Same as [`FrequencyGrid::new`] without the quasi-static bound, for
    /// wide-band robustness studies that deliberately exceed it.
    pub fn wide(eps: f64, rho: f64, l: usize) -> Result<Self> {
        if !(eps > 0.0 && eps < rho && rho.is_finite()) {
            return Err(Error::Invalid(format!("frequency band needs 0 < eps < rho, got [{eps}, {rho}]")));
        }
        if l < 2 {
            return Err(Error::Invalid(format!("frequency grid needs L >= 2, got {l}")));
        }
        Ok(FrequencyGrid { eps, rho, l })
    }

    /// [omega_p/4, omega_p] with L = 10^4.
    pub fn default_for(mat: &DrudeMaterial, delta: f64) -> Result<Self> {
        Self::new(mat.omega_p / 4.0, mat.omega_p, 10_000, mat, delta)
    }

    pub fn omegas(&self) -> Vec<f64> {
        let step = (self.rho - self.eps) / (self.l - 1) as f64;
        (0..self.l).map(|i| self.eps + step * i as f64).collect()
    }

    /// (rho - eps) / L, the uniform weight of the Riemann synthesis.
    pub fn riemann_weight(&self) -> f64 {
        (self.rho - self.eps) / self.l as f64
    }

    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.eps.to_le_bytes());
        h.update(self.rho.to_le_bytes());
        h.update((self.l as u64).to_le_bytes());
        hex(&h.finalize())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Reference,
    Modal(usize),
    Incident,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Reference => write!(f, "reference"),
            Provenance::Modal(j) => write!(f, "modal(J={j})"),
            Provenance::Incident => write!(f, "incident"),
        }
    }
}

/// Arrival markers t0^- < t0^+ bracketing the causal onset at a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Arrival {
    pub minus: f64,
    pub plus: f64,
}

/// t0^+- = (|x - z| + d.z +- 2 delta) / c +- C1, with x = z + delta X.
pub fn arrival_times(mat: &DrudeMaterial, delta: f64, d: [f64; 2], z: [f64; 2], x: [f64; 2], c1: f64) -> Arrival {
    let c = mat.c();
    let base = delta * x[0].hypot(x[1]) + d[0] * z[0] + d[1] * z[1];
    Arrival { minus: (base - 2.0 * delta) / c - c1, plus: (base + 2.0 * delta) / c + c1 }
}

#[derive(Clone, Debug)]
pub struct TimeTrace {
    pub point: [f64; 2],
    pub times: Vec<f64>,
    pub values: Vec<C64>,
    pub provenance: Provenance,
    pub arrival: Arrival,
}

impl TimeTrace {
    pub fn new(point: [f64; 2], times: Vec<f64>, values: Vec<C64>, provenance: Provenance, arrival: Arrival) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::Invalid("time grid and samples differ in length".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Invalid("time grid must be strictly increasing".into()));
        }
        if !(arrival.minus < arrival.plus) {
            return Err(Error::Invalid("arrival markers need t0^- < t0^+".into()));
        }
        Ok(TimeTrace { point, times, values, provenance, arrival })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_s, re_field, im_field, provenance\n");
        for (t, v) in self.times.iter().zip(&self.values) {
            s.push_str(&format!("{t:.9e}, {:.12e}, {:.12e}, {}\n", v.re, v.im, self.provenance));
        }
        s
    }

    /// max_{t < t0^-} |P| / max_t |P|.
    pub fn pre_arrival_ratio(&self) -> Result<f64> {
        let peak = self.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if peak == 0.0 {
            return Err(Error::Invalid("trace is identically zero".into()));
        }
        let pre = self
            .times
            .iter()
            .zip(&self.values)
            .filter(|(t, _)| **t < self.arrival.minus)
            .map(|(_, v)| v.norm())
            .fold(0.0, f64::max);
        Ok(pre / peak)
    }
}

/// Uniform grid of `samples` points on [0, t_end].
pub fn time_grid(t_end: f64, samples: usize) -> Result<Vec<f64>> {
    if !(t_end > 0.0) || samples < 2 {
        return Err(Error::Invalid(format!("bad time grid: t_end = {t_end}, samples = {samples}")));
    }
    Ok((0..samples).map(|i| t_end * i as f64 / (samples - 1) as f64).collect())
}

/// u^in(x, t) = f^(t - d.x / c) at the physical point x (metres).
pub fn incident_trace(pulse: &Pulse, mat: &DrudeMaterial, d: [f64; 2], x: [f64; 2], times: &[f64]) -> Result<TimeTrace> {
    let shift = (d[0] * x[0] + d[1] * x[1]) / mat.c();
    let values = times.iter().map(|&t| C64::new(pulse.value(t - shift), 0.0)).collect();
    let arrival = Arrival { minus: shift, plus: shift + pulse.c1() };
    TimeTrace::new(x, times.to_vec(), values, Provenance::Incident, arrival)
}

fn check_direction(d: [f64; 2]) -> Result<()> {
    if ((d[0].hypot(d[1])) - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("incidence direction ({}, {}) is not a unit vector", d[0], d[1])));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct BoundarySolution {
    pub omega: f64,
    /// Exterior density Psi~ (B-coordinates).
    pub psi: Vec<C64>,
    /// Interior density Phi~.
    pub phi: Vec<C64>,
    pub residual: f64,
}

/// Full transmission-problem solver for one particle and incidence.
#[derive(Clone, Debug)]
pub struct BoundarySolver {
    mesh: BoundaryMesh,
    ws: HelmholtzWorkspace,
    pub mat: DrudeMaterial,
    pub delta: f64,
    pub d: [f64; 2],
    pub z: [f64; 2],
}

impl BoundarySolver {
    pub fn new(mesh: &BoundaryMesh, mat: DrudeMaterial, delta: f64, d: [f64; 2], z: [f64; 2]) -> Result<Self> {
        mat.validate()?;
        check_direction(d)?;
        if !(delta > 0.0) {
            return Err(Error::Invalid(format!("delta must be positive, got {delta}")));
        }
        Ok(BoundarySolver { ws: HelmholtzWorkspace::new(mesh), mesh: mesh.clone(), mat, delta, d, z })
    }

    pub fn mesh(&self) -> &BoundaryMesh {
        &self.mesh
    }

    /// Exterior wavenumber in B-coordinates, omega delta / c.
    pub fn k_exterior(&self, omega: f64) -> f64 {
        omega * self.delta / self.mat.c()
    }

    /// Solves with the Drude permittivity at `omega` and incident amplitude f(omega).
    pub fn solve(&self, omega: f64, amplitude: C64) -> Result<BoundarySolution> {
        let ec = permittivity(&self.mat, C64::new(omega, 0.0))?;
        self.solve_with_permittivity(omega, ec, amplitude)
    }

    /// [S_m, -S_c; 1/2 + K*_m, (eps_m/eps_c)(1/2 - K*_c)] [Psi; Phi]
    ///   = [-u^in / delta; -i (omega/c) (d.nu) u^in].
    pub fn solve_with_permittivity(&self, omega: f64, eps_c: C64, amplitude: C64) -> Result<BoundarySolution> {
        if !(omega > 0.0) {
            return Err(Error::Invalid(format!("solve frequency must be positive, got {omega}")));
        }
        let n = self.mesh.n;
        let km = self.k_exterior(omega);
        let kc = C64::new(km, 0.0) * (eps_c / self.mat.eps_m).sqrt();
        let (sm, kstar_m) = self.ws.assemble(C64::new(km, 0.0))?;
        let (sc, kstar_c) = self.ws.assemble(kc)?;
        let ratio = self.mat.eps_m / eps_c;
        let a = Mat::<C64>::from_fn(2 * n, 2 * n, |i, j| match (i < n, j < n) {
            (true, true) => sm[(i, j)],
            (true, false) => -sc[(i, j - n)],
            (false, true) => kstar_m[(i - n, j)] + if i - n == j { 0.5 } else { 0.0 },
            (false, false) => {
                let (p, q) = (i - n, j - n);
                ratio * (if p == q { C64::new(0.5, 0.0) } else { C64::new(0.0, 0.0) } - kstar_c[(p, q)])
            }
        });
        let phase0 = C64::i() * omega / self.mat.c() * (self.d[0] * self.z[0] + self.d[1] * self.z[1]);
        let b = Mat::<C64>::from_fn(2 * n, 1, |i, _| {
            let p = i % n;
            let x = self.mesh.nodes[p];
            let uin = amplitude * (phase0 + C64::i() * km * (self.d[0] * x[0] + self.d[1] * x[1])).exp();
            if i < n {
                -uin / self.delta
            } else {
                let nu = self.mesh.normals[p];
                -C64::i() * (omega / self.mat.c()) * (self.d[0] * nu[0] + self.d[1] * nu[1]) * uin
            }
        });
        let x = a.partial_piv_lu().solve(&b);
        let r = &a * &x - &b;
        let bnorm = b.norm_l2();
        let residual = if bnorm > 0.0 { r.norm_l2() / bnorm } else { r.norm_l2() };
        if !residual.is_finite() || residual > SOLVE_RESIDUAL_TOL {
            return Err(Error::Numerical(format!(
                "boundary system at omega = {omega:e} is singular or ill-conditioned (residual {residual:e})"
            )));
        }
        Ok(BoundarySolution {
            omega,
            psi: (0..n).map(|i| x[(i, 0)]).collect(),
            phi: (n..2 * n).map(|i| x[(i, 0)]).collect(),
            residual,
        })
    }

    /// u^sca(X) = delta S_B^{omega delta / c}[Psi~](X) at exterior points.
    pub fn scattered_field(&self, omega: f64, psi: &[C64], points: &[[f64; 2]]) -> Result<Vec<C64>> {
        scattered_field_frequency(&self.mesh, psi, &self.mat, omega, self.delta, points)
    }
}

pub fn solve_boundary_system(
    mesh: &BoundaryMesh,
    mat: &DrudeMaterial,
    omega: f64,
    delta: f64,
    d: [f64; 2],
    z: [f64; 2],
) -> Result<BoundarySolution> {
    BoundarySolver::new(mesh, *mat, delta, d, z)?.solve(omega, C64::new(1.0, 0.0))
}

fn check_exterior(mesh: &BoundaryMesh, points: &[[f64; 2]]) -> Result<()> {
    for &p in points {
        if mesh.contains(p) {
            return Err(Error::Invalid(format!("point ({}, {}) lies inside the particle", p[0], p[1])));
        }
    }
    Ok(())
}

pub fn scattered_field_frequency(
    mesh: &BoundaryMesh,
    psi: &[C64],
    mat: &DrudeMaterial,
    omega: f64,
    delta: f64,
    points: &[[f64; 2]],
) -> Result<Vec<C64>> {
    check_exterior(mesh, points)?;
    let k = C64::new(omega * delta / mat.c(), 0.0);
    Ok(eval_single_layer_offboundary(mesh, psi, k, points)?.into_iter().map(|u| u * delta).collect())
}

/// Densities Psi~ for unit incident amplitude on every grid frequency.
#[derive(Clone, Debug)]
pub struct Sweep {
    pub grid: FrequencyGrid,
    pub n: usize,
    /// Row-major L x N.
    pub psi: Vec<C64>,
}

impl Sweep {
    pub fn density(&self, l: usize) -> &[C64] {
        &self.psi[l * self.n..(l + 1) * self.n]
    }

    /// u^sca(X, omega_l) for the pulse; result indexed [point][l].
    pub fn fields(&self, solver: &BoundarySolver, pulse: &Pulse, points: &[[f64; 2]]) -> Result<Vec<Vec<C64>>> {
        if solver.mesh.n != self.n {
            return Err(Error::Invalid("sweep was computed on a different mesh".into()));
        }
        check_exterior(&solver.mesh, points)?;
        let omegas = self.grid.omegas();
        let per_l: Vec<Vec<C64>> = omegas
            .par_iter()
            .enumerate()
            .map(|(l, &w)| {
                let f = pulse.spectrum(C64::new(w, 0.0))?;
                Ok(solver.scattered_field(w, self.density(l), points)?.into_iter().map(|u| u * f).collect())
            })
            .collect::<Result<_>>()?;
        Ok((0..points.len()).map(|p| per_l.iter().map(|row| row[p]).collect()).collect())
    }
}

fn with_threads<T: Send>(threads: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(job()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k.max(1))
                .build()
                .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(job))
        }
    }
}

/// Runs the L independent boundary solves on a worker pool.
pub fn frequency_sweep(solver: &BoundarySolver, grid: &FrequencyGrid, threads: Option<usize>) -> Result<Sweep> {
    let omegas = grid.omegas();
    let rows: Vec<Vec<C64>> = with_threads(threads, || {
        omegas
            .par_iter()
            .map(|&w| solver.solve(w, C64::new(1.0, 0.0)).map(|s| s.psi))
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(Sweep { grid: *grid, n: solver.mesh.n, psi: rows.concat() })
}

/// JSON sidecar stored next to the flat binary density file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepManifest {
    pub mesh_hash: String,
    pub material_hash: String,
    pub grid_hash: String,
    pub incidence_hash: String,
    pub n: usize,
    pub l: usize,
    pub grid: FrequencyGrid,
}

impl SweepManifest {
    pub fn for_solver(solver: &BoundarySolver, grid: &FrequencyGrid) -> Self {
        let mut m = Sha256::new();
        for v in [solver.mat.eps0, solver.mat.mu0, solver.mat.omega_p, solver.mat.t_collision, solver.mat.eps_m, solver.delta] {
            m.update(v.to_le_bytes());
        }
        let mut inc = Sha256::new();
        for v in [solver.d[0], solver.d[1], solver.z[0], solver.z[1]] {
            inc.update(v.to_le_bytes());
        }
        SweepManifest {
            mesh_hash: solver.mesh.hash().to_string(),
            material_hash: hex(&m.finalize()),
            grid_hash: grid.hash(),
            incidence_hash: hex(&inc.finalize()),
            n: solver.mesh.n,
            l: grid.l,
            grid: *grid,
        }
    }

    fn stem(&self) -> String {
        let mut h = Sha256::new();
        for s in [&self.mesh_hash, &self.material_hash, &self.grid_hash, &self.incidence_hash] {
            h.update(s.as_bytes());
        }
        format!("sweep-{}", &hex(&h.finalize())[..16])
    }
}

/// Returns the sweep and whether it came from the cache in `cache_dir`.
pub fn cached_sweep(
    solver: &BoundarySolver,
    grid: &FrequencyGrid,
    threads: Option<usize>,
    cache_dir: Option<&Path>,
) -> Result<(Sweep, bool)> {
    let Some(dir) = cache_dir else {
        return Ok((frequency_sweep(solver, grid, threads)?, false));
    };
    let manifest = SweepManifest::for_solver(solver, grid);
    let bin = dir.join(format!("{}.bin", manifest.stem()));
    let side = dir.join(format!("{}.json", manifest.stem()));
    if let Some(s) = load_sweep(&bin, &side, &manifest)? {
        return Ok((s, true));
    }
    let sweep = frequency_sweep(solver, grid, threads)?;
    store_sweep(&sweep, &bin, &side, &manifest)?;
    Ok((sweep, false))
}

fn load_sweep(bin: &Path, side: &Path, want: &SweepManifest) -> Result<Option<Sweep>> {
    let Ok(text) = fs::read_to_string(side) else { return Ok(None) };
    let Ok(have) = serde_json::from_str::<SweepManifest>(&text) else { return Ok(None) };
    if &have != want {
        return Ok(None);
    }
    let bytes = fs::read(bin).map_err(|e| Error::io(bin, e))?;
    if bytes.len() != want.n * want.l * 16 {
        return Ok(None);
    }
    let psi = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            C64::new(re, im)
        })
        .collect();
    Ok(Some(Sweep { grid: want.grid, n: want.n, psi }))
}

fn store_sweep(sweep: &Sweep, bin: &Path, side: &Path, manifest: &SweepManifest) -> Result<()> {
    if let Some(dir) = bin.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut bytes = Vec::with_capacity(sweep.psi.len() * 16);
    for v in &sweep.psi {
        bytes.extend_from_slice(&v.re.to_le_bytes());
        bytes.extend_from_slice(&v.im.to_le_bytes());
    }
    // write the payload before the sidecar so a torn write is never trusted
    write_atomic(bin, &bytes)?;
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Numerical(e.to_string()))?;
    write_atomic(side, json.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp: PathBuf = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// How the band integral is discretised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Synthesis {
    /// Uniform weights (rho - eps) / L on every sample.
    Riemann,
    /// Composite Simpson (trapezoid on a trailing odd interval).
    HighOrder,
}

fn band_weights(grid: &FrequencyGrid, rule: Synthesis) -> Vec<f64> {
    let l = grid.l;
    match rule {
        Synthesis::Riemann => vec![grid.riemann_weight(); l],
        Synthesis::HighOrder => {
            let h = (grid.rho - grid.eps) / (l - 1) as f64;
            let mut w = vec![0.0; l];
            if l < 4 {
                // too short for Simpson: trapezoid
                for i in 0..l - 1 {
                    w[i] += 0.5 * h;
                    w[i + 1] += 0.5 * h;
                }
                return w;
            }
            // Simpson 1/3 up to `end`, Simpson 3/8 on a trailing triple when the interval count is odd
            let end = if (l - 1) % 2 == 0 { l - 1 } else { l - 4 };
            for i in (0..end).step_by(2) {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
            }
            if end < l - 1 {
                for (o, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                    w[end + o] += 3.0 * h / 8.0 * c;
                }
            }
            w
        }
    }
}

/// P(X, t) = sum_l w_l (e^{-i omega_l t} u_l + e^{i omega_l t} conj(u_l)); the
/// negative half-band enters through u(-omega) = conj(u(omega)).
pub fn reference_solution(
    grid: &FrequencyGrid,
    fields: &[C64],
    times: &[f64],
    rule: Synthesis,
    point: [f64; 2],
    arrival: Arrival,
) -> Result<TimeTrace> {
    if fields.len() != grid.l {
        return Err(Error::Invalid(format!("{} field samples for a grid of L = {}", fields.len(), grid.l)));
    }
    let omegas = grid.omegas();
    let weights = band_weights(grid, rule);
    let values: Vec<C64> = times
        .par_iter()
        .map(|&t| {
            let mut acc = C64::new(0.0, 0.0);
            for ((w, u), wt) in omegas.iter().zip(fields).zip(&weights) {
                let e = C64::from_polar(1.0, -w * t);
                let v = e * u;
                acc += *wt * (v + v.conj());
            }
            acc
        })
        .collect();
    TimeTrace::new(point, times.to_vec(), values, Provenance::Reference, arrival)
}

/// Frequency-domain modal sum with J modes, the mutual oracle of the full solve:
/// u(X) = sum_j f i (omega/c) <d.nu, phi_j> delta S^{k}[phi_j](X) / (lambda(omega) - lambda_j + k^2 log(k) alpha_j).
#[allow(clippy::too_many_arguments)]
pub fn modal_frequency(
    mesh: &BoundaryMesh,
    spec: &NPSpectrum,
    alphas: &[f64],
    mat: &DrudeMaterial,
    delta: f64,
    d: [f64; 2],
    omega: f64,
    amplitude: C64,
    points: &[[f64; 2]],
    j_max: usize,
) -> Result<Vec<C64>> {
    check_direction(d)?;
    check_exterior(mesh, points)?;
    if j_max > spec.mode_count() || j_max > alphas.len() {
        return Err(Error::Invalid(format!("J = {j_max} exceeds the computed spectrum ({})", spec.mode_count())));
    }
    let k = C64::new(omega * delta / mat.c(), 0.0);
    let lam_w = crate::resonance::contrast(mat, C64::new(omega, 0.0))?;
    let coef = mode_coefficients(spec, d);
    let mut out = vec![C64::new(0.0, 0.0); points.len()];
    for j in 1..=j_max {
        let phi: Vec<C64> = spec.density(j).into_iter().map(|x| C64::new(x, 0.0)).collect();
        let s = eval_single_layer_offboundary(mesh, &phi, k, points)?;
        let den = lam_w - spec.lambdas[j] + k * k * k.ln() * alphas[j - 1];
        let pre = amplitude * C64::i() * (omega / mat.c()) * coef[j] * delta / den;
        for (o, v) in out.iter_mut().zip(s) {
            *o += pre * v;
        }
    }
    Ok(out)
}

/// Quasi-normal mode delta S_B^{Omega delta / c}[phi_j](X); with `causal` the
/// factor e^{-i Omega |x - z| / c} (|x - z| = delta |X|) removes the spatial growth.
#[allow(clippy::too_many_arguments)]
pub fn quasi_normal_mode(
    mesh: &BoundaryMesh,
    spec: &NPSpectrum,
    j: usize,
    omega: C64,
    mat: &DrudeMaterial,
    delta: f64,
    points: &[[f64; 2]],
    causal: bool,
) -> Result<Vec<C64>> {
    if j == 0 || j > spec.mode_count() {
        return Err(Error::Invalid(format!("mode {j} outside 1..={}", spec.mode_count())));
    }
    check_exterior(mesh, points)?;
    let k = omega * delta / mat.c();
    let phi: Vec<C64> = spec.density(j).into_iter().map(|x| C64::new(x, 0.0)).collect();
    let s = eval_single_layer_offboundary(mesh, &phi, k, points)?;
    Ok(s.into_iter()
        .zip(points)
        .map(|(v, p)| {
            let e = v * delta;
            if causal {
                e * (-C64::i() * k * p[0].hypot(p[1])).exp()
            } else {
                e
            }
        })
        .collect())
}

/// One family (+ or -) of one mode: T(X, t) = amplitude(X) e^{-i Omega t}.
#[derive(Clone, Debug)]
pub struct ModalTerm {
    pub j: usize,
    pub plus: bool,
    pub omega: C64,
    pub residue: C64,
    /// F~ factor at the pole (includes <d.nu, phi_j>).
    pub forcing: C64,
    /// -2 pi i C F~ e(X), one entry per observation point.
    pub amplitude: Vec<C64>,
}

impl ModalTerm {
    pub fn at(&self, p: usize, t: f64) -> C64 {
        self.amplitude[p] * (-C64::i() * self.omega * t).exp()
    }
}

/// Per-mode residue terms for modes 1..=resonances.modes.len() at `points`.
#[allow(clippy::too_many_arguments)]
pub fn modal_terms(
    mesh: &BoundaryMesh,
    spec: &NPSpectrum,
    res: &ResonanceSet,
    pulse: &Pulse,
    mat: &DrudeMaterial,
    d: [f64; 2],
    z: [f64; 2],
    points: &[[f64; 2]],
) -> Result<Vec<[ModalTerm; 2]>> {
    check_direction(d)?;
    check_exterior(mesh, points)?;
    if res.modes.len() > spec.mode_count() {
        return Err(Error::Invalid("more resonances than computed modes".into()));
    }
    let delta = res.delta;
    let c = mat.c();
    let coef = mode_coefficients(spec, d);
    let dz = d[0] * z[0] + d[1] * z[1];
    res.modes
        .par_iter()
        .map(|m| {
            let j = m.j;
            let forcing = |w: C64| -> Result<C64> {
                let ec = permittivity(mat, w)?;
                Ok(pulse.spectrum(w)?
                    * C64::i()
                    * w
                    * (delta / c)
                    * (C64::i() * w * dz / c).exp()
                    * (1.0 / ec - 1.0 / mat.eps_m)
                    / delta
                    * coef[j])
            };
            let wp = m.corrected.plus.omega;
            let wm = m.corrected.minus.omega;
            let ep = quasi_normal_mode(mesh, spec, j, wp, mat, delta, points, false)?;
            let em = match res.branch {
                LogBranch::Mirror => ep.iter().map(|v| v.conj()).collect(),
                LogBranch::Principal => quasi_normal_mode(mesh, spec, j, wm, mat, delta, points, false)?,
            };
            let make = |plus: bool, w: C64, residue: C64, e: Vec<C64>| -> Result<ModalTerm> {
                let forcing = forcing(w)?;
                let pre = -2.0 * PI * C64::i() * residue * forcing;
                Ok(ModalTerm { j, plus, omega: w, residue, forcing, amplitude: e.into_iter().map(|v| pre * v).collect() })
            };
            Ok([make(true, wp, m.c_plus, ep)?, make(false, wm, m.c_minus, em)?])
        })
        .collect()
}

/// Which modes enter U_J.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeSelection {
    /// Modes 1..=J in spectral order.
    Leading(usize),
    /// The J modes with the largest peak |T_j| on t >= t0^+.
    Dominant(usize),
    Explicit(Vec<usize>),
}

impl ModeSelection {
    pub fn count(&self) -> usize {
        match self {
            ModeSelection::Leading(j) | ModeSelection::Dominant(j) => *j,
            ModeSelection::Explicit(v) => v.len(),
        }
    }
}

fn peak_after(terms: &[ModalTerm; 2], p: usize, times: &[f64], t0: f64) -> f64 {
    times
        .iter()
        .filter(|&&t| t >= t0)
        .map(|&t| (terms[0].at(p, t) + terms[1].at(p, t)).norm())
        .fold(0.0, f64::max)
}

/// Mode numbers chosen by `sel` for point index `p`.
pub fn select_modes(terms: &[[ModalTerm; 2]], sel: &ModeSelection, p: usize, times: &[f64], arrival: Arrival) -> Result<Vec<usize>> {
    let avail = terms.len();
    if sel.count() > avail {
        return Err(Error::Invalid(format!("J = {} exceeds the {avail} available modes", sel.count())));
    }
    Ok(match sel {
        ModeSelection::Leading(j) => (1..=*j).collect(),
        ModeSelection::Explicit(v) => {
            if let Some(bad) = v.iter().find(|&&j| j == 0 || j > avail) {
                return Err(Error::Invalid(format!("mode {bad} outside 1..={avail}")));
            }
            v.clone()
        }
        ModeSelection::Dominant(j) => {
            let mut peaks: Vec<(usize, f64)> =
                terms.iter().map(|t| (t[0].j, peak_after(t, p, times, arrival.plus))).collect();
            peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut chosen: Vec<usize> = peaks.into_iter().take(*j).map(|(j, _)| j).collect();
            chosen.sort_unstable();
            chosen
        }
    })
}

/// U_J(X, t) at point index `p` (both families of each selected mode).
pub fn modal_solution(
    terms: &[[ModalTerm; 2]],
    sel: &ModeSelection,
    p: usize,
    point: [f64; 2],
    times: &[f64],
    arrival: Arrival,
) -> Result<TimeTrace> {
    if terms.first().is_some_and(|t| p >= t[0].amplitude.len()) {
        return Err(Error::Invalid(format!("point index {p} out of range")));
    }
    let modes = select_modes(terms, sel, p, times, arrival)?;
    let values = times
        .iter()
        .map(|&t| modes.iter().map(|&j| terms[j - 1][0].at(p, t) + terms[j - 1][1].at(p, t)).sum())
        .collect();
    TimeTrace::new(point, times.to_vec(), values, Provenance::Modal(sel.count()), arrival)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Misfit {
    pub relative_l2: f64,
    pub reconstruction_pct: f64,
}

/// ||Re ref - Re approx||_2 / ||Re ref||_2 over samples with t in [t_a, t_b].
pub fn misfit(reference: &TimeTrace, approx: &TimeTrace, window: (f64, f64)) -> Result<Misfit> {
    if reference.times != approx.times {
        return Err(Error::Invalid("traces live on different time grids".into()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for ((t, r), a) in reference.times.iter().zip(&reference.values).zip(&approx.values) {
        if *t >= window.0 && *t <= window.1 {
            num += (r.re - a.re).powi(2);
            den += r.re.powi(2);
        }
    }
    if den == 0.0 {
        return Err(Error::Invalid("reference trace has zero norm on the window".into()));
    }
    let relative_l2 = (num / den).sqrt();
    Ok(Misfit { relative_l2, reconstruction_pct: 100.0 * (1.0 - relative_l2) })
}

/// Least-squares slope of log|v(t)| for t >= t_start (an envelope decay rate).
pub fn decay_rate(times: &[f64], values: &[C64], t_start: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= t_start && v.norm() > 0.0)
        .map(|(t, v)| (*t, v.norm().ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::Invalid("not enough samples to fit a decay rate".into()));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(sxy / sxx)
}
