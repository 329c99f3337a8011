// Acceptance suite: one PASS/FAIL line per criterion.
//
// Runs as a plain binary (harness = false). Failing criteria are reported but
// only turn into a non-zero exit with PLASMODE_ACCEPTANCE_STRICT=1. The slow
// wide-band check (criterion 10) runs only with PLASMODE_SLOW=1. Frequency
// sweeps are cached under the cargo target tmpdir, so reruns are cheap.

use std::path::PathBuf;
use std::time::Instant;

use faer::Mat;
use num_complex::Complex64 as C64;
use plasmode::geometry::{build_shape, discretize, BoundaryMesh, Shape};
use plasmode::kernels::{
    assemble_neumann_poincare, assemble_s_b11, assemble_s_tilde, assemble_single_layer_static, equilibrium_density,
};
use plasmode::resonance::{inverse_tau_frozen, resonance_set_2d, DrudeMaterial, LogBranch, ResonanceSet};
use plasmode::spectral::{alpha_coefficients, decay_profile, spectrum_for_mesh, NPSpectrum};
use plasmode::timedomain::{
    arrival_times, cached_sweep, misfit, modal_solution, modal_terms, reference_solution, time_grid, BoundarySolver,
    FrequencyGrid, ModeSelection, Pulse, Synthesis, TimeTrace, DEFAULT_C1, DEFAULT_SAMPLES, DEFAULT_T_END,
};

const N: usize = 256;
const J: usize = 30;
const DELTA: f64 = 1e-8;
const D45: [f64; 2] = [std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::FRAC_1_SQRT_2];

// pinned tolerances
const TABLE2_REL: f64 = 0.02;
const ELLIPSE_ABS: f64 = 1e-8;
const DISK_ABS: f64 = 1e-10;
const CALDERON_REL: f64 = 1e-8;
const RESIDUE_REL: f64 = 1e-4;
const DECAY_ORDERS: f64 = 100.0;
// wide enough to hold one symmetry-allowed cluster for 4- and 5-fold shapes
const DECAY_WINDOW: usize = 8;
const CAUSAL_RATIO: f64 = 0.10;
const TD_TIGHT: f64 = 0.05;
const TD_LOOSE: f64 = 0.10;
const WIDE_BAND_REL: f64 = 0.10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn line(k: usize, name: &str, o: &Outcome) {
    println!("criterion {k:2} [{name}]: {}  {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
}

struct Case {
    shape: Shape,
    mesh: BoundaryMesh,
    spec: NPSpectrum,
    res: ResonanceSet,
    seconds: f64,
}

fn prepare(shape: Shape) -> Case {
    let start = Instant::now();
    let mat = DrudeMaterial::default();
    let mesh = discretize(&build_shape(shape.clone()).unwrap(), N).unwrap();
    let spec = spectrum_for_mesh(&mesh, J).unwrap();
    let alphas = alpha_coefficients(&spec, &assemble_s_b11(&mesh)).unwrap();
    let res = resonance_set_2d(&mat, &spec.lambdas[1..], &alphas, DELTA, LogBranch::Mirror, false).unwrap();
    Case { shape, mesh, spec, res, seconds: start.elapsed().as_secs_f64() }
}

fn obs(r: f64, deg: f64) -> [f64; 2] {
    let a = deg.to_radians();
    [r * a.cos(), r * a.sin()]
}

fn points() -> Vec<(&'static str, [f64; 2])> {
    vec![("A", obs(15.0, 0.0)), ("B", obs(15.0, 45.0)), ("C", obs(15.0, 90.0)), ("D", obs(300.0, 45.0))]
}

fn cache_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("plasmode-sweeps")
}

fn c1_table2(cases: &[Case]) -> Outcome {
    let want = [("diamond", 0.1005), ("ellipse", 0.1208), ("flower", 0.1128)];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, target) in want {
        let c = cases.iter().find(|c| c.shape.name() == name).unwrap();
        let rel = (c.res.ratio - target).abs() / target;
        let ok = rel <= TABLE2_REL && c.seconds <= 60.0;
        pass &= ok;
        parts.push(format!("{name} {:.4} vs {target} ({:.1}%, {:.1} s)", c.res.ratio, 100.0 * rel, c.seconds));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn c2_ellipse(ellipse: &Case) -> Outcome {
    let mut want: Vec<f64> = (1..=15).flat_map(|k| [0.5 * (2f64 / 3.0).powi(k), -0.5 * (2f64 / 3.0).powi(k)]).collect();
    want.truncate(J);
    let worst = want.iter().enumerate().map(|(i, w)| (ellipse.spec.lambdas[i + 1] - w).abs()).fold(0.0, f64::max);
    let dominant = (ellipse.spec.lambdas[1] - 1.0 / 3.0).abs() < 1e-3;
    Outcome {
        pass: worst <= ELLIPSE_ABS && dominant,
        detail: format!("max |lambda_j - (+-1/2)(2/3)^k| = {worst:.2e} over j <= 30; lambda_1 = {:.6}", ellipse.spec.lambdas[1]),
    }
}

fn c3_disk() -> Outcome {
    let m = discretize(&build_shape(Shape::unit_disk()).unwrap(), N).unwrap();
    let s = spectrum_for_mesh(&m, J).unwrap();
    let worst = s.lambdas[1..=J].iter().map(|l| l.abs()).fold(0.0, f64::max);
    let l0 = (s.lambdas[0] - 0.5).abs();
    Outcome { pass: worst <= DISK_ABS && l0 <= DISK_ABS, detail: format!("|lambda_0 - 1/2| = {l0:.1e}, max |lambda_j| = {worst:.1e}") }
}

fn c4_cloud(cases: &[Case]) -> Outcome {
    let wp = DrudeMaterial::default().omega_p;
    let mut pass = true;
    let mut parts = Vec::new();
    for c in cases {
        let mut ok = true;
        for m in c.res.modes.iter().take(20) {
            let (p, q) = (m.corrected.plus.omega, m.corrected.minus.omega);
            ok &= p.im < 0.0 && q.im < 0.0;
            ok &= p.re >= wp / 4.0 && p.re <= wp;
            ok &= p.norm() <= c.res.radius && q.norm() <= c.res.radius;
        }
        pass &= ok;
        parts.push(format!("{} {}", c.shape.name(), if ok { "ok" } else { "violated" }));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn fro(m: &Mat<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)] * m[(i, j)];
        }
    }
    s.sqrt()
}

fn c6_calderon(cases: &[Case]) -> Outcome {
    let mut worst: f64 = 0.0;
    for c in cases {
        let m = &c.mesh;
        let s = assemble_single_layer_static(m);
        let (phi0, _) = equilibrium_density(m, &s).unwrap();
        let st = assemble_s_tilde(m, &s, &phi0).unwrap().entries;
        let ks = assemble_neumann_poincare(m).entries;
        let kd = Mat::<f64>::from_fn(m.n, m.n, |i, j| ks[(j, i)] * m.weights[j] / m.weights[i]);
        let lhs = &kd * &st - &st * &ks;
        worst = worst.max(fro(&lhs) / fro(&st));
    }
    Outcome { pass: worst <= CALDERON_REL, detail: format!("max ||K S~ - S~ K*|| / ||S~|| = {worst:.2e}") }
}

fn c7_residue(ellipse: &Case) -> Outcome {
    let mat = DrudeMaterial::default();
    let mut worst: f64 = 0.0;
    for m in ellipse.res.modes.iter().take(5) {
        for (root, c) in [(m.corrected.plus, m.c_plus), (m.corrected.minus, m.c_minus)] {
            let (npts, rad) = (256, 1e12);
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..npts {
                let e = C64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / npts as f64);
                acc += inverse_tau_frozen(&mat, m.lambda, root.beta, root.omega + rad * e).unwrap() * rad * e;
            }
            let numeric = acc / npts as f64;
            worst = worst.max((numeric - c).norm() / c.norm());
        }
    }
    Outcome { pass: worst <= RESIDUE_REL, detail: format!("max relative residue gap (j <= 5, both families) = {worst:.2e}") }
}

fn c8_decay(cases: &[Case]) -> Outcome {
    let mat = DrudeMaterial::default();
    let k = C64::new(mat.omega_p * DELTA / mat.c(), 0.0);
    let mut pass = true;
    let mut drops = Vec::new();
    for c in cases {
        let rows = decay_profile(&c.mesh, &c.spec, k, 300.0, 64).unwrap();
        // symmetry zeroes whole clusters, so compare the envelope of the first and last windows
        let peak = |r: &[plasmode::spectral::DecayRow]| r.iter().map(|x| x.coefficient).fold(0.0, f64::max);
        let drop = peak(&rows[..DECAY_WINDOW]) / peak(&rows[J - DECAY_WINDOW..]);
        pass &= drop >= DECAY_ORDERS;
        drops.push((c.shape.name(), drop));
    }
    let slowest = drops.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
    pass &= slowest == "flower";
    let parts: Vec<String> = drops.iter().map(|(n, d)| format!("{n} x{d:.1e}")).collect();
    Outcome { pass, detail: format!("max|c| j<={DECAY_WINDOW} / max|c| j>{}: {}; slowest: {slowest}", J - DECAY_WINDOW, parts.join(", ")) }
}

struct Traces {
    shape: &'static str,
    // per point: reference trace and the modal terms' point index
    reference: Vec<(&'static str, TimeTrace)>,
    terms: Vec<[plasmode::timedomain::ModalTerm; 2]>,
    sweep_seconds: f64,
}

fn time_domain(case: &Case) -> Traces {
    let mat = DrudeMaterial::default();
    let grid = FrequencyGrid::default_for(&mat, DELTA).unwrap();
    let pulse = Pulse::new(DEFAULT_C1).unwrap();
    let solver = BoundarySolver::new(&case.mesh, mat, DELTA, D45, [0.0, 0.0]).unwrap();
    let start = Instant::now();
    let (sweep, _) = cached_sweep(&solver, &grid, None, Some(&cache_dir())).unwrap();
    let sweep_seconds = start.elapsed().as_secs_f64();
    let pts = points();
    let xs: Vec<[f64; 2]> = pts.iter().map(|p| p.1).collect();
    let fields = sweep.fields(&solver, &pulse, &xs).unwrap();
    let times = time_grid(DEFAULT_T_END, DEFAULT_SAMPLES).unwrap();
    let reference = pts
        .iter()
        .zip(&fields)
        .map(|((name, x), f)| {
            let a = arrival_times(&mat, DELTA, D45, [0.0, 0.0], *x, DEFAULT_C1);
            (*name, reference_solution(&grid, f, &times, Synthesis::Riemann, *x, a).unwrap())
        })
        .collect();
    let terms = modal_terms(&case.mesh, &case.spec, &case.res, &pulse, &mat, D45, [0.0, 0.0], &xs).unwrap();
    Traces { shape: case.shape.name(), reference, terms, sweep_seconds }
}

fn td_misfit(tr: &Traces, point: &str, sel: ModeSelection) -> (f64, Vec<usize>) {
    let p = tr.reference.iter().position(|r| r.0 == point).unwrap();
    let reference = &tr.reference[p].1;
    let a = reference.arrival;
    let chosen = plasmode::timedomain::select_modes(&tr.terms, &sel, p, &reference.times, a).unwrap();
    let u = modal_solution(&tr.terms, &sel, p, reference.point, &reference.times, a).unwrap();
    (misfit(reference, &u, (a.plus, f64::INFINITY)).unwrap().relative_l2, chosen)
}

fn c5_time_domain(all: &[Traces]) -> Outcome {
    let get = |s: &str| all.iter().find(|t| t.shape == s).unwrap();
    let checks = [
        ("ellipse", "A", ModeSelection::Dominant(1), TD_TIGHT),
        ("ellipse", "C", ModeSelection::Dominant(1), TD_TIGHT),
        ("ellipse", "B", ModeSelection::Dominant(2), TD_TIGHT),
        ("flower", "A", ModeSelection::Dominant(8), TD_TIGHT),
        ("flower", "A", ModeSelection::Dominant(5), TD_LOOSE),
        ("diamond", "D", ModeSelection::Dominant(4), TD_TIGHT),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (shape, point, sel, tol) in checks {
        let j = sel.count();
        let (m, chosen) = td_misfit(get(shape), point, sel);
        pass &= m <= tol;
        parts.push(format!("{shape} {point} J={j} {chosen:?}: {:.1}% (<= {:.0}%)", 100.0 * m, 100.0 * tol));
    }
    for t in all {
        pass &= t.sweep_seconds <= 20.0 * 60.0;
        parts.push(format!("{} sweep {:.0} s", t.shape, t.sweep_seconds));
    }
    Outcome { pass, detail: parts.join("; ") }
}

fn c9_causality(all: &[Traces]) -> Outcome {
    let mut worst = (0.0, String::new());
    for t in all {
        for (name, r) in &t.reference {
            let v = r.pre_arrival_ratio().unwrap();
            if v >= worst.0 {
                worst = (v, format!("{} {name}", t.shape));
            }
        }
    }
    Outcome { pass: worst.0 <= CAUSAL_RATIO, detail: format!("worst pre-arrival/peak = {:.3} at {}", worst.0, worst.1) }
}

fn c10_wide_band(ellipse: &Case) -> Outcome {
    let mat = DrudeMaterial::default();
    let pulse = Pulse::new(DEFAULT_C1).unwrap();
    let solver = BoundarySolver::new(&ellipse.mesh, mat, DELTA, D45, [0.0, 0.0]).unwrap();
    let r = ellipse.res.radius;
    let x = obs(300.0, 45.0);
    let times = time_grid(DEFAULT_T_END, DEFAULT_SAMPLES).unwrap();
    let a = arrival_times(&mat, DELTA, D45, [0.0, 0.0], x, DEFAULT_C1);
    let trace = |grid: FrequencyGrid| {
        let (sweep, _) = cached_sweep(&solver, &grid, None, Some(&cache_dir())).unwrap();
        let f = sweep.fields(&solver, &pulse, &[x]).unwrap();
        reference_solution(&grid, &f[0], &times, Synthesis::Riemann, x, a).unwrap()
    };
    let start = Instant::now();
    let low = trace(FrequencyGrid::new(mat.omega_p / 4.0, r, 10_000, &mat, DELTA).unwrap());
    let high = trace(FrequencyGrid::wide(mat.omega_p / 4.0, 100.0 * r, 100_000).unwrap());
    let m = misfit(&low, &high, (times[0], f64::INFINITY)).unwrap().relative_l2;
    let secs = start.elapsed().as_secs_f64();
    Outcome {
        pass: m <= WIDE_BAND_REL && secs <= 3600.0,
        detail: format!("ellipse D, rho = R vs 100 R: {:.1}% ({secs:.0} s)", 100.0 * m),
    }
}

fn main() {
    // libtest-style flags (e.g. --list) are ignored; the suite has one entry point
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let strict = std::env::var("PLASMODE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let slow = std::env::var("PLASMODE_SLOW").is_ok_and(|v| v == "1");
    let cases: Vec<Case> = [Shape::diamond(), Shape::ellipse(), Shape::flower()].into_iter().map(prepare).collect();
    let ellipse = cases.iter().find(|c| c.shape.name() == "ellipse").unwrap();
    let mut results: Vec<(usize, &str, Outcome)> = vec![
        (1, "table 2 ratios", c1_table2(&cases)),
        (2, "ellipse spectrum", c2_ellipse(ellipse)),
        (3, "disk degeneracy", c3_disk()),
        (4, "resonance cloud", c4_cloud(&cases)),
    ];
    let traces: Vec<Traces> = cases.iter().map(time_domain).collect();
    results.push((5, "time-domain agreement", c5_time_domain(&traces)));
    results.push((6, "calderon identity", c6_calderon(&cases)));
    results.push((7, "residue cross-check", c7_residue(ellipse)));
    results.push((8, "coefficient decay", c8_decay(&cases)));
    results.push((9, "causality", c9_causality(&traces)));
    results.sort_by_key(|r| r.0);
    for (k, name, o) in &results {
        line(*k, name, o);
    }
    let mut failed = results.iter().filter(|r| !r.2.pass).count();
    if slow {
        let o = c10_wide_band(ellipse);
        line(10, "wide-band robustness", &o);
        failed += usize::from(!o.pass);
    } else {
        println!("criterion 10 [wide-band robustness]: SKIP  slow suite, set PLASMODE_SLOW=1");
    }
    println!("acceptance: {failed} criteria failing");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}
