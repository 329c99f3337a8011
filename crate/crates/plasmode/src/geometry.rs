//! Parametric boundary curves and their equispaced discretisation.
//!
//! Everything here lives in the rescaled coordinates of the reference
//! particle `B`; the physical size `delta` and centre `z` only enter later.
//! Curves are traversed counterclockwise and the outward normal is the
//! tangent rotated by -pi/2.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Named reference shapes plus arbitrary sampled curves.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// `scale * (e^{it} + amp * e^{-3it})`.
    Diamond { scale: f64, amp: f64 },
    /// Semi-axis `a` along X1, `b` along X2.
    Ellipse { a: f64, b: f64 },
    /// Polar radius `base + amp * cos(petals * t)`.
    Flower { base: f64, amp: f64, petals: u32 },
    Disk { radius: f64 },
    /// Equispaced samples of a closed curve (counterclockwise).
    Custom { points: Vec<[f64; 2]> },
}

impl Shape {
    pub fn diamond() -> Self {
        Shape::Diamond { scale: 2.0, amp: 0.066 }
    }

    pub fn ellipse() -> Self {
        Shape::Ellipse { a: 1.0, b: 5.0 }
    }

    pub fn flower() -> Self {
        Shape::Flower { base: 2.0, amp: 0.6, petals: 5 }
    }

    pub fn unit_disk() -> Self {
        Shape::Disk { radius: 1.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Shape::Diamond { .. } => "diamond",
            Shape::Ellipse { .. } => "ellipse",
            Shape::Flower { .. } => "flower",
            Shape::Disk { .. } => "disk",
            Shape::Custom { .. } => "custom",
        }
    }
}

/// Position and first two theta-derivatives at one parameter value.
#[derive(Clone, Copy, Debug)]
pub struct CurvePoint {
    pub pos: [f64; 2],
    pub d1: [f64; 2],
    pub d2: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct ParametricCurve {
    shape: Shape,
    // Fourier coefficients (wavenumber, coefficient) for custom curves.
    modes: Vec<(f64, Complex64)>,
}

/// Builds a curve, validating shape parameters.
pub fn build_shape(shape: Shape) -> Result<ParametricCurve> {
    let mut modes = Vec::new();
    match &shape {
        Shape::Diamond { scale, amp } => {
            if !(*scale > 0.0) || !amp.is_finite() || amp.abs() >= 1.0 / 3.0 {
                return Err(Error::Invalid(format!(
                    "diamond needs scale > 0 and |amp| < 1/3, got scale={scale}, amp={amp}"
                )));
            }
        }
        Shape::Ellipse { a, b } => {
            if !(*a > 0.0 && *b > 0.0) || !a.is_finite() || !b.is_finite() {
                return Err(Error::Invalid(format!("degenerate ellipse a={a}, b={b}")));
            }
        }
        Shape::Flower { base, amp, petals } => {
            if !(*base > 0.0) || !amp.is_finite() || amp.abs() >= *base {
                return Err(Error::Invalid(format!(
                    "flower radius must stay positive: base={base}, amp={amp}"
                )));
            }
            if *petals == 0 {
                return Err(Error::Invalid("flower needs at least one petal".into()));
            }
        }
        Shape::Disk { radius } => {
            if !(*radius > 0.0) || !radius.is_finite() {
                return Err(Error::Invalid(format!("disk radius must be positive, got {radius}")));
            }
        }
        Shape::Custom { points } => {
            modes = fourier_modes(points)?;
        }
    }
    let curve = ParametricCurve { shape, modes };
    if matches!(curve.shape, Shape::Custom { .. }) {
        // trigonometric interpolants can still fold over; reject zero speed
        let m = 4 * curve.modes.len().max(16);
        for i in 0..m {
            let p = curve.eval(2.0 * PI * i as f64 / m as f64);
            if p.d1[0].hypot(p.d1[1]) < 1e-10 {
                return Err(Error::Invalid("custom curve has vanishing speed".into()));
            }
        }
    }
    Ok(curve)
}

fn fourier_modes(points: &[[f64; 2]]) -> Result<Vec<(f64, Complex64)>> {
    let m = points.len();
    if m < 8 {
        return Err(Error::Invalid(format!("custom curve needs at least 8 samples, got {m}")));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::Invalid("custom curve has non-finite samples".into()));
    }
    let mut buf: Vec<Complex64> = points.iter().map(|p| Complex64::new(p[0], p[1])).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    let mut modes = Vec::with_capacity(m);
    for (k, c) in buf.into_iter().enumerate() {
        let c = c / m as f64;
        if m % 2 == 0 && k == m / 2 {
            // split the Nyquist term so the interpolant stays real-symmetric
            let kk = (m / 2) as f64;
            modes.push((kk, c * 0.5));
            modes.push((-kk, c * 0.5));
        } else if k <= m / 2 {
            modes.push((k as f64, c));
        } else {
            modes.push((k as f64 - m as f64, c));
        }
    }
    Ok(modes)
}

impl ParametricCurve {
    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn position(&self, theta: f64) -> [f64; 2] {
        self.eval(theta).pos
    }

    pub fn eval(&self, t: f64) -> CurvePoint {
        let c = |z: Complex64| [z.re, z.im];
        match &self.shape {
            Shape::Diamond { scale, amp } => {
                let e1 = Complex64::from_polar(1.0, t);
                let e3 = Complex64::from_polar(1.0, -3.0 * t);
                let i = Complex64::i();
                CurvePoint {
                    pos: c((e1 + amp * e3) * scale),
                    d1: c((i * e1 - 3.0 * amp * i * e3) * scale),
                    d2: c((-e1 - 9.0 * amp * e3) * scale),
                }
            }
            Shape::Ellipse { a, b } => {
                let (s, co) = t.sin_cos();
                CurvePoint {
                    pos: [a * co, b * s],
                    d1: [-a * s, b * co],
                    d2: [-a * co, -b * s],
                }
            }
            Shape::Disk { radius } => {
                let (s, co) = t.sin_cos();
                CurvePoint {
                    pos: [radius * co, radius * s],
                    d1: [-radius * s, radius * co],
                    d2: [-radius * co, -radius * s],
                }
            }
            Shape::Flower { base, amp, petals } => {
                let p = *petals as f64;
                let (sp, cp) = (p * t).sin_cos();
                let r = base + amp * cp;
                let r1 = -amp * p * sp;
                let r2 = -amp * p * p * cp;
                let (s, co) = t.sin_cos();
                CurvePoint {
                    pos: [r * co, r * s],
                    d1: [r1 * co - r * s, r1 * s + r * co],
                    d2: [r2 * co - 2.0 * r1 * s - r * co, r2 * s + 2.0 * r1 * co - r * s],
                }
            }
            Shape::Custom { .. } => {
                let mut pos = Complex64::new(0.0, 0.0);
                let mut d1 = pos;
                let mut d2 = pos;
                for &(k, ck) in &self.modes {
                    let e = ck * Complex64::from_polar(1.0, k * t);
                    pos += e;
                    d1 += e * Complex64::new(0.0, k);
                    d2 -= e * (k * k);
                }
                CurvePoint { pos: c(pos), d1: c(d1), d2: c(d2) }
            }
        }
    }
}

/// Reads a custom curve: one `x1 x2` pair per line, equispaced in theta.
pub fn load_custom_curve(path: &Path) -> Result<Vec<[f64; 2]>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pts = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |s: Option<&str>| -> Result<f64> {
            s.and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| {
                Error::Invalid(format!("{}:{}: expected `x1 x2`", path.display(), lineno + 1))
            })
        };
        let x1 = parse(it.next())?;
        let x2 = parse(it.next())?;
        if it.next().is_some() {
            return Err(Error::Invalid(format!(
                "{}:{}: expected exactly two columns",
                path.display(),
                lineno + 1
            )));
        }
        pts.push([x1, x2]);
    }
    Ok(pts)
}

/// Quadrature-ready discretisation of a closed curve at `theta_i = 2 pi i / N`.
#[derive(Clone, Debug)]
pub struct BoundaryMesh {
    pub n: usize,
    pub theta: Vec<f64>,
    pub nodes: Vec<[f64; 2]>,
    pub normals: Vec<[f64; 2]>,
    pub tangents: Vec<[f64; 2]>,
    pub curvature: Vec<f64>,
    /// Speed |zeta'(theta_i)|.
    pub jacobian: Vec<f64>,
    /// Trapezoid weights (2 pi / N) |zeta'(theta_i)|.
    pub weights: Vec<f64>,
    hash: String,
}

pub fn discretize(curve: &ParametricCurve, n: usize) -> Result<BoundaryMesh> {
    if n < 16 || n % 2 != 0 {
        return Err(Error::Invalid(format!("mesh size must be even and >= 16, got {n}")));
    }
    let h = 2.0 * PI / n as f64;
    let mut mesh = BoundaryMesh {
        n,
        theta: Vec::with_capacity(n),
        nodes: Vec::with_capacity(n),
        normals: Vec::with_capacity(n),
        tangents: Vec::with_capacity(n),
        curvature: Vec::with_capacity(n),
        jacobian: Vec::with_capacity(n),
        weights: Vec::with_capacity(n),
        hash: String::new(),
    };
    for i in 0..n {
        let t = h * i as f64;
        let p = curve.eval(t);
        let speed = p.d1[0].hypot(p.d1[1]);
        if !(speed > 0.0) || !speed.is_finite() {
            return Err(Error::Invalid(format!("curve speed vanishes at theta={t}")));
        }
        let tau = [p.d1[0] / speed, p.d1[1] / speed];
        mesh.theta.push(t);
        mesh.nodes.push(p.pos);
        mesh.tangents.push(tau);
        mesh.normals.push([tau[1], -tau[0]]);
        mesh.curvature.push((p.d1[0] * p.d2[1] - p.d1[1] * p.d2[0]) / speed.powi(3));
        mesh.jacobian.push(speed);
        mesh.weights.push(h * speed);
    }
    if mesh.signed_area() <= 0.0 {
        return Err(Error::Invalid("curve must be counterclockwise (non-positive signed area)".into()));
    }
    let mut hasher = Sha256::new();
    hasher.update((n as u64).to_le_bytes());
    for (x, w) in mesh.nodes.iter().zip(&mesh.weights) {
        hasher.update(x[0].to_le_bytes());
        hasher.update(x[1].to_le_bytes());
        hasher.update(w.to_le_bytes());
    }
    mesh.hash = hex(&hasher.finalize());
    Ok(mesh)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl BoundaryMesh {
    pub fn perimeter(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Green's theorem area, positive for counterclockwise curves.
    pub fn signed_area(&self) -> f64 {
        let h = 2.0 * PI / self.n as f64;
        self.nodes
            .iter()
            .zip(&self.tangents)
            .zip(&self.jacobian)
            .map(|((x, t), j)| 0.5 * (x[0] * t[1] - x[1] * t[0]) * j * h)
            .sum()
    }

    /// Largest distance between consecutive nodes.
    pub fn spacing(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                let a = self.nodes[i];
                let b = self.nodes[(i + 1) % self.n];
                (a[0] - b[0]).hypot(a[1] - b[1])
            })
            .fold(0.0, f64::max)
    }

    /// Distance from a point to the nearest node.
    pub fn distance_to(&self, x: [f64; 2]) -> f64 {
        self.nodes
            .iter()
            .map(|y| (x[0] - y[0]).hypot(x[1] - y[1]))
            .fold(f64::INFINITY, f64::min)
    }

    /// Content hash of nodes and weights, used to key caches.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Diameter estimate (largest node-to-node distance).
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in &self.nodes {
            for b in &self.nodes {
                d = d.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        d
    }

    /// Winding-number test for points inside the curve.
    pub fn contains(&self, x: [f64; 2]) -> bool {
        let mut wind = 0.0;
        for i in 0..self.n {
            let a = self.nodes[i];
            let b = self.nodes[(i + 1) % self.n];
            let a0 = (a[1] - x[1]).atan2(a[0] - x[0]);
            let b0 = (b[1] - x[1]).atan2(b[0] - x[0]);
            let mut d = b0 - a0;
            if d > PI {
                d -= 2.0 * PI;
            } else if d < -PI {
                d += 2.0 * PI;
            }
            wind += d;
        }
        wind.abs() > PI
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(shape: Shape, n: usize) -> BoundaryMesh {
        discretize(&build_shape(shape).unwrap(), n).unwrap()
    }

    #[test]
    fn named_shape_positions() {
        let f = build_shape(Shape::flower()).unwrap();
        let p = f.position(0.0);
        assert!((p[0].hypot(p[1]) - 2.6).abs() < 1e-15);
        let e = build_shape(Shape::ellipse()).unwrap();
        assert_eq!(e.position(0.0), [1.0, 0.0]);
        let d = build_shape(Shape::diamond()).unwrap().position(0.0);
        assert!((d[0] - 2.132).abs() < 1e-14 && d[1].abs() < 1e-15);
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(build_shape(Shape::Ellipse { a: 0.0, b: 5.0 }).is_err());
        assert!(build_shape(Shape::Flower { base: 1.0, amp: 1.2, petals: 5 }).is_err());
        assert!(build_shape(Shape::Disk { radius: -1.0 }).is_err());
        let c = build_shape(Shape::unit_disk()).unwrap();
        assert!(discretize(&c, 17).is_err());
        assert!(discretize(&c, 8).is_err());
    }

    #[test]
    fn disk_mesh() {
        let m = mesh(Shape::unit_disk(), 256);
        assert!((m.perimeter() - 2.0 * PI).abs() < 1e-12);
        for i in 0..m.n {
            assert!((m.curvature[i] - 1.0).abs() < 1e-13);
            let x = m.nodes[i];
            assert!((m.normals[i][0] - x[0]).abs() < 1e-12);
            assert!((m.normals[i][1] - x[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn normals_orthogonal_and_weights_positive() {
        for s in [Shape::diamond(), Shape::ellipse(), Shape::flower()] {
            let m = mesh(s, 256);
            assert!(m.signed_area() > 0.0);
            for i in 0..m.n {
                let d = m.normals[i][0] * m.tangents[i][0] + m.normals[i][1] * m.tangents[i][1];
                assert!(d.abs() < 1e-12);
                assert!(m.weights[i] > 0.0);
            }
        }
    }

    #[test]
    fn perimeter_converged() {
        for s in [Shape::diamond(), Shape::ellipse(), Shape::flower()] {
            let a = mesh(s.clone(), 256).perimeter();
            let b = mesh(s, 512).perimeter();
            assert!(((a - b) / b).abs() < 1e-10);
        }
    }

    #[test]
    fn custom_curve_reproduces_ellipse() {
        let e = build_shape(Shape::ellipse()).unwrap();
        let pts: Vec<[f64; 2]> =
            (0..64).map(|i| e.position(2.0 * PI * i as f64 / 64.0)).collect();
        let c = build_shape(Shape::Custom { points: pts }).unwrap();
        let mc = discretize(&c, 128).unwrap();
        let me = discretize(&e, 128).unwrap();
        for i in 0..128 {
            assert!((mc.curvature[i] - me.curvature[i]).abs() < 1e-9);
            assert!((mc.weights[i] - me.weights[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn clockwise_custom_rejected() {
        let pts: Vec<[f64; 2]> = (0..32)
            .map(|i| {
                let t = -2.0 * PI * i as f64 / 32.0;
                [t.cos(), t.sin()]
            })
            .collect();
        let c = build_shape(Shape::Custom { points: pts }).unwrap();
        assert!(discretize(&c, 32).is_err());
    }

    #[test]
    fn containment() {
        let m = mesh(Shape::ellipse(), 128);
        assert!(m.contains([0.0, 4.0]));
        assert!(!m.contains([2.0, 0.0]));
    }
}
