//! Dense Nystrom matrices for the layer potentials on a [`BoundaryMesh`].
//!
//! Log-singular kernels use Kress' periodic splitting
//! `k(t, s) = M1(t, s) log(4 sin^2((t - s)/2)) + M2(t, s)`, with the spectral
//! weights for the log part and the trapezoid rule for the rest. Quadrature
//! weights are folded into the matrices, so applying an operator to nodal
//! density samples is a plain matrix-vector product.

use std::f64::consts::PI;

use faer::linalg::solvers::Solve;
use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::BoundaryMesh;
use crate::specfun::{bessel01_unchecked, Bessel01, SpecfunConfig, EULER_GAMMA};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OperatorKind {
    SStatic,
    STilde,
    SHelmholtz(C64),
    KStar,
    KStarHelmholtz(C64),
    SB11,
}

#[derive(Clone, Debug)]
pub struct OperatorMatrix<T> {
    pub kind: OperatorKind,
    pub entries: Mat<T>,
    pub mesh_hash: String,
}

impl<T> OperatorMatrix<T> {
    fn new(kind: OperatorKind, entries: Mat<T>, mesh: &BoundaryMesh) -> Self {
        OperatorMatrix { kind, entries, mesh_hash: mesh.hash().to_string() }
    }

    pub fn check_mesh(&self, mesh: &BoundaryMesh) -> Result<()> {
        if self.mesh_hash != mesh.hash() {
            return Err(Error::Invalid(format!("{:?} was assembled on a different mesh", self.kind)));
        }
        Ok(())
    }
}

/// Kress log-weights R((i - j) mod N) for N = 2n nodes.
pub fn kress_weights(n_nodes: usize) -> Vec<f64> {
    let n = n_nodes / 2;
    let nf = n as f64;
    (0..n_nodes)
        .map(|m| {
            let t = 2.0 * PI * m as f64 / n_nodes as f64;
            let mut s = 0.0;
            for k in 1..n {
                s += (k as f64 * t).cos() / k as f64;
            }
            -2.0 * PI / nf * s - PI / (nf * nf) * (nf * t).cos()
        })
        .collect()
}

fn log4sin2(n: usize, i: usize, j: usize) -> f64 {
    let d = PI * (i as f64 - j as f64) / n as f64;
    (4.0 * d.sin().powi(2)).ln()
}

fn diff(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn real_matrix(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> Mat<f64> {
    let rows: Vec<Vec<f64>> = (0..n).into_par_iter().map(|i| (0..n).map(|j| f(i, j)).collect()).collect();
    Mat::from_fn(n, n, |i, j| rows[i][j])
}

/// Static single layer with kernel (1/2 pi) log|x - y|.
pub fn assemble_single_layer_static(mesh: &BoundaryMesh) -> OperatorMatrix<f64> {
    let n = mesh.n;
    let r = kress_weights(n);
    let h = 2.0 * PI / n as f64;
    let m = real_matrix(n, |i, j| {
        let jac = mesh.jacobian[j];
        let m1 = jac / (4.0 * PI);
        let m2 = if i == j {
            jac.ln() * jac / (2.0 * PI)
        } else {
            let d = diff(mesh.nodes[i], mesh.nodes[j]);
            d[0].hypot(d[1]).ln() * jac / (2.0 * PI) - m1 * log4sin2(n, i, j)
        };
        r[(i + n - j) % n] * m1 + h * m2
    });
    OperatorMatrix::new(OperatorKind::SStatic, m, mesh)
}

/// Static Neumann-Poincare adjoint K* with kernel (x - y).nu(x) / (2 pi |x - y|^2).
pub fn assemble_neumann_poincare(mesh: &BoundaryMesh) -> OperatorMatrix<f64> {
    let m = real_matrix(mesh.n, |i, j| {
        if i == j {
            mesh.curvature[i] / (4.0 * PI) * mesh.weights[i]
        } else {
            let d = diff(mesh.nodes[i], mesh.nodes[j]);
            let nu = mesh.normals[i];
            (d[0] * nu[0] + d[1] * nu[1]) / (2.0 * PI * (d[0] * d[0] + d[1] * d[1])) * mesh.weights[j]
        }
    });
    OperatorMatrix::new(OperatorKind::KStar, m, mesh)
}

/// Smooth kernel -|x - y|^2 / (8 pi), the first log-order term of S^k.
pub fn assemble_s_b11(mesh: &BoundaryMesh) -> OperatorMatrix<f64> {
    let m = real_matrix(mesh.n, |i, j| {
        let d = diff(mesh.nodes[i], mesh.nodes[j]);
        -(d[0] * d[0] + d[1] * d[1]) / (8.0 * PI) * mesh.weights[j]
    });
    OperatorMatrix::new(OperatorKind::SB11, m, mesh)
}

/// Solves S[phi] = c, sum w phi = 1; returns (phi, c). `c` is the log-capacity.
pub fn equilibrium_density(mesh: &BoundaryMesh, s: &OperatorMatrix<f64>) -> Result<(Vec<f64>, f64)> {
    s.check_mesh(mesh)?;
    let n = mesh.n;
    let a = Mat::<f64>::from_fn(n + 1, n + 1, |i, j| match (i < n, j < n) {
        (true, true) => s.entries[(i, j)],
        (true, false) => -1.0,
        (false, true) => mesh.weights[j],
        (false, false) => 0.0,
    });
    let b = Mat::<f64>::from_fn(n + 1, 1, |i, _| if i == n { 1.0 } else { 0.0 });
    let x = a.partial_piv_lu().solve(&b);
    let phi: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
    let c = x[(n, 0)];
    if phi.iter().any(|v| !v.is_finite()) || !c.is_finite() {
        return Err(Error::Numerical("equilibrium density solve broke down".into()));
    }
    Ok((phi, c))
}

/// Warns when the curve's logarithmic capacity is close to 1, where S is singular.
pub fn capacity_warning(log_capacity: f64) -> Option<String> {
    if log_capacity.abs() < 1e-3 {
        Some(format!(
            "logarithmic capacity exp({log_capacity:.3e}) is ~1; the plain single layer is near-singular"
        ))
    } else {
        None
    }
}

/// S~ = S (I - phi0 w^T) - chi w^T: agrees with S on mean-free densities and
/// maps phi0 to -chi. Fails if the induced Gram form -W S~ is not positive definite.
pub fn assemble_s_tilde(
    mesh: &BoundaryMesh,
    s: &OperatorMatrix<f64>,
    phi0: &[f64],
) -> Result<OperatorMatrix<f64>> {
    s.check_mesh(mesh)?;
    let n = mesh.n;
    if phi0.len() != n {
        return Err(Error::Invalid("phi0 length differs from mesh size".into()));
    }
    let w = &mesh.weights;
    let mass: f64 = phi0.iter().zip(w).map(|(p, w)| p * w).sum();
    if (mass - 1.0).abs() > 1e-10 {
        return Err(Error::Invalid(format!("phi0 must satisfy <phi0, chi> = 1, got {mass}")));
    }
    let s_phi0: Vec<f64> = (0..n).map(|i| (0..n).map(|k| s.entries[(i, k)] * phi0[k]).sum()).collect();
    let m = Mat::<f64>::from_fn(n, n, |i, j| s.entries[(i, j)] - (s_phi0[i] + 1.0) * w[j]);
    let g = gram_from_s_tilde(mesh, &m);
    if g.llt(Side::Lower).is_err() {
        return Err(Error::Numerical("-S~ is not positive definite on this mesh".into()));
    }
    Ok(OperatorMatrix::new(OperatorKind::STilde, m, mesh))
}

/// Symmetrised H* Gram matrix G = -W S~.
pub fn gram_from_s_tilde(mesh: &BoundaryMesh, st: &Mat<f64>) -> Mat<f64> {
    let w = &mesh.weights;
    Mat::from_fn(mesh.n, mesh.n, |i, j| -0.5 * (w[i] * st[(i, j)] + w[j] * st[(j, i)]))
}

/// Pairwise geometry reused by every Helmholtz assembly on one mesh.
#[derive(Clone, Debug)]
pub struct HelmholtzWorkspace {
    n: usize,
    kress: Vec<f64>,
    dist: Vec<f64>,
    // nu_i . (x_i - y_j) / r
    cos_n: Vec<f64>,
    log4sin2: Vec<f64>,
    jac: Vec<f64>,
    curv: Vec<f64>,
    pub specfun: SpecfunConfig,
}

impl HelmholtzWorkspace {
    pub fn new(mesh: &BoundaryMesh) -> Self {
        let n = mesh.n;
        let mut dist = vec![0.0; n * n];
        let mut cos_n = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let d = diff(mesh.nodes[i], mesh.nodes[j]);
                    let r = d[0].hypot(d[1]);
                    dist[i * n + j] = r;
                    let nu = mesh.normals[i];
                    cos_n[i * n + j] = (d[0] * nu[0] + d[1] * nu[1]) / r;
                }
            }
        }
        let log4sin2 = (0..n).map(|m| if m == 0 { 0.0 } else { log4sin2(n, m, 0) }).collect();
        HelmholtzWorkspace {
            n,
            kress: kress_weights(n),
            dist,
            cos_n,
            log4sin2,
            jac: mesh.jacobian.clone(),
            curv: mesh.curvature.clone(),
            specfun: SpecfunConfig::default(),
        }
    }

    /// Helmholtz single layer S^k and adjoint double layer K^{k,*} for kernel
    /// -(i/4) H0(k|x - y|). Rows are filled in parallel.
    pub fn assemble(&self, k: C64) -> Result<(Mat<C64>, Mat<C64>)> {
        check_wavenumber(k)?;
        let n = self.n;
        let h = 2.0 * PI / n as f64;
        let i4 = C64::new(0.0, 0.25);
        let diag_const = -i4 + ((0.5 * k).ln() + EULER_GAMMA) / (2.0 * PI);
        // Bessel values depend on r only: evaluate the upper triangle once
        let upper: Vec<Vec<Bessel01>> = (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| bessel01_unchecked(k * self.dist[i * n + j], &self.specfun)).collect())
            .collect();
        let rows: Vec<(Vec<C64>, Vec<C64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut srow = vec![C64::new(0.0, 0.0); n];
                let mut krow = vec![C64::new(0.0, 0.0); n];
                for j in 0..n {
                    let jac = self.jac[j];
                    let rw = self.kress[(i + n - j) % n];
                    if i == j {
                        let m1 = jac / (4.0 * PI);
                        let m2 = (diag_const + jac.ln() / (2.0 * PI)) * jac;
                        srow[j] = rw * m1 + h * m2;
                        krow[j] = C64::new(h * self.curv[i] * jac / (4.0 * PI), 0.0);
                        continue;
                    }
                    let b = if i < j { &upper[i][j - i - 1] } else { &upper[j][i - j - 1] };
                    let lg = self.log4sin2[(i + n - j) % n];
                    let gamma = -i4 * b.h0();
                    let m1 = b.j0 * (jac / (4.0 * PI));
                    srow[j] = rw * m1 + h * (gamma * jac - m1 * lg);
                    let cn = self.cos_n[i * n + j];
                    let l = i4 * k * b.h1() * cn * jac;
                    let l1 = -k * b.j1 * (cn * jac / (4.0 * PI));
                    krow[j] = rw * l1 + h * (l - l1 * lg);
                }
                (srow, krow)
            })
            .collect();
        let s = Mat::from_fn(n, n, |i, j| rows[i].0[j]);
        let kk = Mat::from_fn(n, n, |i, j| rows[i].1[j]);
        Ok((s, kk))
    }
}

fn check_wavenumber(k: C64) -> Result<()> {
    if k.norm() == 0.0 {
        return Err(Error::Invalid("k = 0: use the static single layer".into()));
    }
    if k.im == 0.0 && k.re < 0.0 {
        return Err(Error::Domain(format!("wavenumber {k} on the branch cut")));
    }
    if !(k.re.is_finite() && k.im.is_finite()) {
        return Err(Error::Domain(format!("non-finite wavenumber {k}")));
    }
    Ok(())
}

pub fn assemble_single_layer_helmholtz(mesh: &BoundaryMesh, k: C64) -> Result<OperatorMatrix<C64>> {
    let (s, _) = HelmholtzWorkspace::new(mesh).assemble(k)?;
    Ok(OperatorMatrix::new(OperatorKind::SHelmholtz(k), s, mesh))
}

pub fn assemble_neumann_poincare_helmholtz(mesh: &BoundaryMesh, k: C64) -> Result<OperatorMatrix<C64>> {
    let (_, kk) = HelmholtzWorkspace::new(mesh).assemble(k)?;
    Ok(OperatorMatrix::new(OperatorKind::KStarHelmholtz(k), kk, mesh))
}

/// eta_k = (1/2 pi)(log k + gamma - log 2) - i/4, the constant in S^k = S + eta_k int.
pub fn eta(k: C64) -> C64 {
    (k.ln() + EULER_GAMMA - 2f64.ln()) / (2.0 * PI) - C64::new(0.0, 0.25)
}

/// Single layer potential of `density` at exterior points. `k = 0` selects
/// the static kernel. Points closer than one mesh spacing are rejected.
pub fn eval_single_layer_offboundary(
    mesh: &BoundaryMesh,
    density: &[C64],
    k: C64,
    points: &[[f64; 2]],
) -> Result<Vec<C64>> {
    if density.len() != mesh.n {
        return Err(Error::Invalid("density length differs from mesh size".into()));
    }
    let static_kernel = k.norm() == 0.0;
    if !static_kernel {
        check_wavenumber(k)?;
    }
    let tol = mesh.spacing();
    let cfg = SpecfunConfig::default();
    points
        .iter()
        .map(|&x| {
            if mesh.distance_to(x) <= tol {
                return Err(Error::Invalid(format!(
                    "point ({}, {}) is within one mesh spacing of the boundary",
                    x[0], x[1]
                )));
            }
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..mesh.n {
                let d = diff(x, mesh.nodes[j]);
                let r = d[0].hypot(d[1]);
                let g = if static_kernel {
                    C64::new(r.ln() / (2.0 * PI), 0.0)
                } else {
                    -C64::new(0.0, 0.25) * bessel01_unchecked(k * r, &cfg).h0()
                };
                acc += g * density[j] * mesh.weights[j];
            }
            Ok(acc)
        })
        .collect()
}

pub(crate) fn matvec(m: &Mat<f64>, v: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}
