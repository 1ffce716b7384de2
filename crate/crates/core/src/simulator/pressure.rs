use super::{Face, FluidProps, Grid, PermField, WellSpec};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PressureSolution {
    /// Cell pressures (bar), producer pinned at 0.
    pub p: Vec<f64>,
    pub iterations: usize,
    /// `‖b - A p‖ / ‖b‖` recomputed from the final iterate.
    pub rel_residual: f64,
}

fn face_coefficients(faces: &[Face], trans: &[f64], s: &[f64], fluids: &FluidProps) -> Result<Vec<f64>> {
    let lt: Vec<f64> = s.iter().map(|&v| fluids.mobility_t(v)).collect();
    if let Some(i) = lt.iter().position(|&l| !(l.is_finite() && l > 0.0)) {
        return Err(Error::Physics(format!(
            "total mobility {} at cell {i} (S = {})",
            lt[i], s[i]
        )));
    }
    Ok(faces
        .iter()
        .zip(trans)
        .map(|(f, t)| t * 0.5 * (lt[f.a] + lt[f.b]))
        .collect())
}

/// `y = A x` for the pinned Laplacian; rows and columns of `pinned` vanish.
fn apply(faces: &[Face], coef: &[f64], pinned: usize, x: &[f64], y: &mut [f64]) {
    y.iter_mut().for_each(|v| *v = 0.0);
    for (f, c) in faces.iter().zip(coef) {
        let d = c * (x[f.a] - x[f.b]);
        y[f.a] += d;
        y[f.b] -= d;
    }
    y[pinned] = 0.0;
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn solve_with(
    faces: &[Face],
    trans: &[f64],
    s: &[f64],
    fluids: &FluidProps,
    wells: &WellSpec,
    tol: f64,
    guess: Option<&[f64]>,
) -> Result<PressureSolution> {
    let n = s.len();
    if let Some(i) = s.iter().position(|v| !(-1e-9..=1.0 + 1e-9).contains(v)) {
        return Err(Error::Physics(format!("saturation {} at cell {i} outside [0, 1]", s[i])));
    }
    let coef = face_coefficients(faces, trans, s, fluids)?;
    let pin = wells.producer;
    let mut b = vec![0.0; n];
    if wells.injector != pin {
        b[wells.injector] = wells.rate;
    }
    let b_norm = dot(&b, &b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(PressureSolution {
            p: x,
            iterations: 0,
            rel_residual: 0.0,
        });
    }

    let mut diag = vec![0.0; n];
    for (f, c) in faces.iter().zip(&coef) {
        diag[f.a] += c;
        diag[f.b] += c;
    }
    let inv_diag: Vec<f64> = diag
        .iter()
        .enumerate()
        .map(|(i, &d)| if i == pin || d == 0.0 { 0.0 } else { 1.0 / d })
        .collect();

    let max_iter = 10 * n;
    let mut r = b.clone();
    if let Some(g) = guess.filter(|g| g.len() == n) {
        x.copy_from_slice(g);
        x[pin] = 0.0;
        let mut ax = vec![0.0; n];
        apply(faces, &coef, pin, &x, &mut ax);
        r.iter_mut().zip(&ax).for_each(|(ri, ai)| *ri -= ai);
        if dot(&r, &r).sqrt() <= tol * b_norm {
            return Ok(PressureSolution {
                p: x,
                iterations: 0,
                rel_residual: dot(&r, &r).sqrt() / b_norm,
            });
        }
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut dir = z.clone();
    let mut rz = dot(&r, &z);
    let mut ad = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        apply(faces, &coef, pin, &dir, &mut ad);
        let curv = dot(&dir, &ad);
        if !(curv > 0.0) {
            break;
        }
        let alpha = rz / curv;
        for i in 0..n {
            x[i] += alpha * dir[i];
            r[i] -= alpha * ad[i];
        }
        iterations += 1;
        if dot(&r, &r).sqrt() <= tol * b_norm {
            converged = true;
            break;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            dir[i] = z[i] + beta * dir[i];
        }
    }
    apply(faces, &coef, pin, &x, &mut ad);
    let res: f64 = b.iter().zip(&ad).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt() / b_norm;
    // The recurrence can drift below the true residual; allow a small slack.
    if !converged || !(res <= 100.0 * tol) {
        return Err(Error::Solver(format!(
            "pressure CG did not reach relative residual {tol:e} in {iterations} iterations (true residual {res:e})"
        )));
    }
    Ok(PressureSolution {
        p: x,
        iterations,
        rel_residual: res,
    })
}

/// Solves `-div(k λ_t(S) grad p) = q` on the 5-point stencil with no-flow
/// boundaries, harmonic transmissibilities and face mobility equal to the
/// mean of the two cell total mobilities. Jacobi-preconditioned CG, gauge fixed
/// by pinning the producer cell to 0.
pub fn solve_pressure(
    perm: &PermField,
    s: &[f64],
    fluids: &FluidProps,
    wells: &WellSpec,
    grid: &Grid,
    tol: f64,
) -> Result<PressureSolution> {
    if s.len() != grid.cells() {
        return Err(Error::dim(format!("saturation has {} cells, grid {}", s.len(), grid.cells())));
    }
    let trans = grid.transmissibilities(perm)?;
    solve_with(&grid.faces(), &trans, s, fluids, wells, tol, None)
}

/// Total volumetric flux across each face, positive from `a` to `b` (m³/day).
pub fn face_fluxes(faces: &[Face], trans: &[f64], s: &[f64], p: &[f64], fluids: &FluidProps) -> Result<Vec<f64>> {
    let coef = face_coefficients(faces, trans, s, fluids)?;
    Ok(faces
        .iter()
        .zip(&coef)
        .map(|(f, c)| c * (p[f.a] - p[f.b]))
        .collect())
}
