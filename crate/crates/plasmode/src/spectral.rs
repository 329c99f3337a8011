//! H*-orthonormal eigenbasis of the Neumann-Poincare operator and the scalar
//! quantities derived from it (excitation coefficients, alpha_j, decay).

use faer::linalg::triangular_solve::{solve_lower_triangular_in_place, solve_upper_triangular_in_place};
use faer::{Mat, Par, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::geometry::BoundaryMesh;
use crate::kernels::{self, OperatorMatrix};

/// Eigenvalues closer than this are treated as one degenerate cluster.
pub const CLUSTER_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct NPSpectrum {
    /// lambda_0 = 1/2 first, then descending |lambda| (positive first on ties).
    pub lambdas: Vec<f64>,
    /// Column j is the H*-normalised eigendensity (nodal samples).
    pub densities: Mat<f64>,
    /// Equilibrium density with <phi0, chi> = 1.
    pub phi0: Vec<f64>,
    /// H* Gram matrix: <u, v>_{H*} = u^T G v.
    pub gram: Mat<f64>,
    pub weights: Vec<f64>,
    pub normals: Vec<[f64; 2]>,
    pub mesh_hash: String,
    /// max_j ||K* phi_j - lambda_j phi_j||_inf / ||phi_j||_inf over returned modes.
    pub residual: f64,
}

impl NPSpectrum {
    /// Number of non-static modes available (j = 1..=len).
    pub fn mode_count(&self) -> usize {
        self.lambdas.len() - 1
    }

    pub fn density(&self, j: usize) -> Vec<f64> {
        self.densities.col(j).iter().copied().collect()
    }
}

/// Bilinear H* pairing u^T G v (no conjugation).
pub fn hstar_inner(u: &[C64], v: &[C64], gram: &Mat<f64>) -> Result<C64> {
    let n = gram.nrows();
    if u.len() != n || v.len() != n {
        return Err(Error::Invalid(format!("density lengths {}/{} differ from mesh size {n}", u.len(), v.len())));
    }
    let mut acc = C64::new(0.0, 0.0);
    for j in 0..n {
        let mut gv = C64::new(0.0, 0.0);
        for i in 0..n {
            gv += u[i] * gram[(i, j)];
        }
        acc += gv * v[j];
    }
    Ok(acc)
}

pub fn hstar_inner_real(u: &[f64], v: &[f64], gram: &Mat<f64>) -> f64 {
    let n = gram.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        let mut gv = 0.0;
        for i in 0..n {
            gv += u[i] * gram[(i, j)];
        }
        acc += gv * v[j];
    }
    acc
}

/// Convenience: assembles S, K*, S~ and decomposes.
pub fn spectrum_for_mesh(mesh: &BoundaryMesh, j_max: usize) -> Result<NPSpectrum> {
    let s = kernels::assemble_single_layer_static(mesh);
    let (phi0, _) = kernels::equilibrium_density(mesh, &s)?;
    let st = kernels::assemble_s_tilde(mesh, &s, &phi0)?;
    let k = kernels::assemble_neumann_poincare(mesh);
    np_eigendecomposition(mesh, &k, &st, &phi0, j_max)
}

/// Solves the symmetric-definite pencil (G K*) v = lambda G v with G the H*
/// Gram matrix. Eigenvectors come out H*-orthonormal; degenerate clusters are
/// rotated so the first member carries all coupling to nu_1, the second the
/// remaining coupling to nu_2.
pub fn np_eigendecomposition(
    mesh: &BoundaryMesh,
    k_star: &OperatorMatrix<f64>,
    s_tilde: &OperatorMatrix<f64>,
    phi0: &[f64],
    j_max: usize,
) -> Result<NPSpectrum> {
    k_star.check_mesh(mesh)?;
    s_tilde.check_mesh(mesh)?;
    let n = mesh.n;
    if j_max > n / 4 {
        return Err(Error::Invalid(format!("J = {j_max} exceeds resolvable N/4 = {}", n / 4)));
    }
    let g = kernels::gram_from_s_tilde(mesh, &s_tilde.entries);
    let gk = &g * &k_star.entries;
    let mut asym: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            asym = asym.max((gk[(i, j)] - gk[(j, i)]).abs());
            scale = scale.max(gk[(i, j)].abs());
        }
    }
    if asym > 1e-6 * scale {
        return Err(Error::Numerical(format!(
            "K* is not H*-self-adjoint on this mesh (asymmetry {:.2e}); spectrum would be complex",
            asym / scale
        )));
    }
    let a = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (gk[(i, j)] + gk[(j, i)]));
    let llt = g
        .llt(Side::Lower)
        .map_err(|_| Error::Numerical("-S~ is not positive definite".into()))?;
    let l = llt.L().to_owned();
    // C = L^{-1} A L^{-T}
    let mut c = a;
    solve_lower_triangular_in_place(l.as_ref(), c.as_mut(), Par::Seq);
    let mut ct = c.transpose().to_owned();
    solve_lower_triangular_in_place(l.as_ref(), ct.as_mut(), Par::Seq);
    let c = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (ct[(i, j)] + ct[(j, i)]));
    let evd = c
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::Numerical("symmetric eigensolve did not converge".into()))?;
    let vals: Vec<f64> = (0..n).map(|i| evd.S()[i]).collect();
    let mut v = evd.U().to_owned();
    solve_upper_triangular_in_place(l.transpose(), v.as_mut(), Par::Seq);

    let i0 = (0..n)
        .min_by(|&a, &b| (vals[a] - 0.5).abs().total_cmp(&(vals[b] - 0.5).abs()))
        .unwrap();
    if (vals[i0] - 0.5).abs() > 1e-8 {
        return Err(Error::Numerical(format!("no eigenvalue 1/2 found (closest {})", vals[i0])));
    }
    let mut rest: Vec<usize> = (0..n).filter(|&i| i != i0).collect();
    rest.sort_by(|&a, &b| vals[b].abs().total_cmp(&vals[a].abs()));
    // within runs of equal |lambda|, positive eigenvalues first
    let mut start = 0;
    while start < rest.len() {
        let mut end = start + 1;
        while end < rest.len() && (vals[rest[end - 1]].abs() - vals[rest[end]].abs()) < CLUSTER_TOL {
            end += 1;
        }
        rest[start..end].sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        start = end;
    }

    let couple = |col: &[f64], axis: usize| -> f64 {
        let f: Vec<f64> = mesh.normals.iter().map(|nu| nu[axis]).collect();
        hstar_inner_real(&f, col, &g)
    };
    let mut cols: Vec<Vec<f64>> = rest.iter().map(|&i| v.col(i).iter().copied().collect()).collect();
    let lams: Vec<f64> = rest.iter().map(|&i| vals[i]).collect();
    let mut start = 0;
    while start < cols.len() {
        let mut end = start + 1;
        while end < cols.len() && (lams[end] - lams[start]).abs() < CLUSTER_TOL {
            end += 1;
        }
        if end - start > 1 {
            align_cluster(&mut cols[start..end], &couple);
        }
        for col in &mut cols[start..end] {
            fix_sign(col, &couple);
        }
        start = end;
    }

    let m = j_max + 1;
    let mut dens = Mat::<f64>::zeros(n, m);
    let mut lambdas = Vec::with_capacity(m);
    // phi~_0 normalised in H*
    let v0: Vec<f64> = v.col(i0).iter().copied().collect();
    let s0 = if v0.iter().zip(&mesh.weights).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    for i in 0..n {
        dens[(i, 0)] = s0 * v0[i];
    }
    lambdas.push(vals[i0]);
    for j in 1..m {
        for i in 0..n {
            dens[(i, j)] = cols[j - 1][i];
        }
        lambdas.push(lams[j - 1]);
    }

    let mut residual: f64 = 0.0;
    for j in 0..m {
        let col: Vec<f64> = dens.col(j).iter().copied().collect();
        let kv = kernels::matvec(&k_star.entries, &col);
        let norm = col.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let r = kv.iter().zip(&col).fold(0.0f64, |a, (x, y)| a.max((x - lambdas[j] * y).abs()));
        residual = residual.max(r / norm);
    }
    Ok(NPSpectrum {
        lambdas,
        densities: dens,
        phi0: phi0.to_vec(),
        gram: g,
        weights: mesh.weights.clone(),
        normals: mesh.normals.clone(),
        mesh_hash: mesh.hash().to_string(),
        residual,
    })
}

fn align_cluster(cols: &mut [Vec<f64>], couple: &dyn Fn(&[f64], usize) -> f64) {
    let m = cols.len();
    let n = cols[0].len();
    let c1: Vec<f64> = cols.iter().map(|c| couple(c, 0)).collect();
    let c2: Vec<f64> = cols.iter().map(|c| couple(c, 1)).collect();
    // orthonormal basis of R^m starting from c1, c2, completed by unit vectors
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut candidates = vec![c1, c2];
    for k in 0..m {
        let mut e = vec![0.0; m];
        e[k] = 1.0;
        candidates.push(e);
    }
    for mut cand in candidates {
        if basis.len() == m {
            break;
        }
        for _ in 0..2 {
            for b in &basis {
                let d: f64 = cand.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in cand.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
        }
        let nrm = cand.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm > 1e-8 {
            basis.push(cand.into_iter().map(|x| x / nrm).collect());
        }
    }
    let old: Vec<Vec<f64>> = cols.to_vec();
    for (k, b) in basis.iter().enumerate() {
        let mut v = vec![0.0; n];
        for (o, coef) in old.iter().zip(b) {
            for i in 0..n {
                v[i] += coef * o[i];
            }
        }
        cols[k] = v;
    }
}

fn fix_sign(col: &mut [f64], couple: &dyn Fn(&[f64], usize) -> f64) {
    let scale = col.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let (c1, c2) = (couple(col, 0), couple(col, 1));
    let key = if c1.abs() > 1e-10 * scale {
        c1
    } else if c2.abs() > 1e-10 * scale {
        c2
    } else {
        *col.iter().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap()
    };
    if key < 0.0 {
        col.iter_mut().for_each(|x| *x = -*x);
    }
}

/// <d.nu, phi~_j>_{H*} for j = 0..=J.
pub fn mode_coefficients(spec: &NPSpectrum, d: [f64; 2]) -> Vec<f64> {
    let f: Vec<f64> = spec.normals.iter().map(|nu| d[0] * nu[0] + d[1] * nu[1]).collect();
    let n = f.len();
    let gf: Vec<f64> = (0..n).map(|j| (0..n).map(|i| f[i] * spec.gram[(i, j)]).sum()).collect();
    (0..spec.lambdas.len())
        .map(|j| (0..n).map(|i| gf[i] * spec.densities[(i, j)]).sum())
        .collect()
}

pub fn mode_coefficient(spec: &NPSpectrum, d: [f64; 2], j: usize) -> Result<f64> {
    if j >= spec.lambdas.len() {
        return Err(Error::Invalid(format!("mode {j} beyond computed J = {}", spec.mode_count())));
    }
    Ok(mode_coefficients(spec, d)[j])
}

/// alpha_j = (lambda_j - 1/2) sum_i w_i (S_B11 phi_j)_i phi_j,i.
pub fn alpha_coefficient(spec: &NPSpectrum, s_b11: &OperatorMatrix<f64>, j: usize) -> Result<f64> {
    if j == 0 || j >= spec.lambdas.len() {
        return Err(Error::Invalid(format!("alpha_j needs 1 <= j <= {}, got {j}", spec.mode_count())));
    }
    if s_b11.mesh_hash != spec.mesh_hash {
        return Err(Error::Invalid("S_B11 assembled on a different mesh".into()));
    }
    let phi = spec.density(j);
    let sp = kernels::matvec(&s_b11.entries, &phi);
    let pairing: f64 = sp.iter().zip(&phi).zip(&spec.weights).map(|((a, b), w)| a * b * w).sum();
    Ok((spec.lambdas[j] - 0.5) * pairing)
}

pub fn alpha_coefficients(spec: &NPSpectrum, s_b11: &OperatorMatrix<f64>) -> Result<Vec<f64>> {
    (1..spec.lambdas.len()).map(|j| alpha_coefficient(spec, s_b11, j)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayRow {
    pub j: usize,
    pub lambda: f64,
    pub coefficient: f64,
    pub mode_field: f64,
}

/// Direction-averaged |<d.nu, phi_j>| and circle-averaged |S^k[phi_j]| at
/// `far_radius`, for j = 1..=J. Directions and points: `samples` equispaced angles.
pub fn decay_profile(
    mesh: &BoundaryMesh,
    spec: &NPSpectrum,
    k: C64,
    far_radius: f64,
    samples: usize,
) -> Result<Vec<DecayRow>> {
    if far_radius <= mesh.diameter() {
        return Err(Error::Invalid(format!("far radius {far_radius} must exceed the particle diameter")));
    }
    let angles: Vec<f64> = (0..samples).map(|i| 2.0 * std::f64::consts::PI * i as f64 / samples as f64).collect();
    let mut coef = vec![0.0; spec.lambdas.len()];
    for a in &angles {
        for (acc, c) in coef.iter_mut().zip(mode_coefficients(spec, [a.cos(), a.sin()])) {
            *acc += c.abs() / samples as f64;
        }
    }
    let pts: Vec<[f64; 2]> = angles.iter().map(|a| [far_radius * a.cos(), far_radius * a.sin()]).collect();
    let mut rows = Vec::new();
    for j in 1..spec.lambdas.len() {
        let phi: Vec<C64> = spec.density(j).into_iter().map(|x| C64::new(x, 0.0)).collect();
        let u = kernels::eval_single_layer_offboundary(mesh, &phi, k, &pts)?;
        let field = u.iter().map(|z| z.norm()).sum::<f64>() / samples as f64;
        rows.push(DecayRow { j, lambda: spec.lambdas[j], coefficient: coef[j], mode_field: field });
    }
    Ok(rows)
}
