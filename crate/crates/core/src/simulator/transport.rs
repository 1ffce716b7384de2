use std::thread;

use super::pressure::{face_fluxes, solve_with};
use super::{Face, FluidProps, PermField, PermSampler, SimConfig, SimOutput, StepBalance, WellSpec};
use crate::error::{Error, Result};

/// Substep cap before a CFL restriction is treated as persistent.
const MAX_SUBSTEPS: usize = 1_000_000;

/// Saturation after an explicit transport step, with its water accounting.
#[derive(Clone, Debug, PartialEq)]
pub struct SaturationStep {
    pub s: Vec<f64>,
    pub substeps: usize,
    pub injected: f64,
    pub produced: f64,
    pub stored_change: f64,
}

/// Largest stable explicit step for the given face fluxes.
fn cfl_dt(faces: &[Face], flux: &[f64], wells: &WellSpec, n: usize, pore_volume: f64, slope: f64, cfl: f64) -> f64 {
    let mut out = vec![0.0; n];
    for (f, &q) in faces.iter().zip(flux) {
        if q > 0.0 {
            out[f.a] += q;
        } else {
            out[f.b] -= q;
        }
    }
    out[wells.producer] += wells.rate;
    let worst = out.iter().copied().fold(0.0, f64::max);
    if worst == 0.0 {
        f64::INFINITY
    } else {
        cfl * pore_volume / (slope * worst)
    }
}

fn upwind_step(faces: &[Face], flux: &[f64], s: &[f64], fluids: &FluidProps, wells: &WellSpec, pv: f64, dt: f64) -> (Vec<f64>, f64) {
    let fw: Vec<f64> = s.iter().map(|&v| fluids.frac_flow(v)).collect();
    let mut net = vec![0.0; s.len()];
    for (f, &q) in faces.iter().zip(flux) {
        let wf = if q >= 0.0 { fw[f.a] * q } else { fw[f.b] * q };
        net[f.a] -= wf;
        net[f.b] += wf;
    }
    let produced = fw[wells.producer] * wells.rate;
    net[wells.injector] += wells.rate;
    net[wells.producer] -= produced;
    let s_new = s.iter().zip(&net).map(|(&v, &d)| v + dt * d / pv).collect();
    (s_new, produced * dt)
}

/// Explicit upwind fractional-flow update over `dt` with fixed total face
/// fluxes. A step above the CFL limit is split into equal substeps.
pub fn update_saturation(
    faces: &[Face],
    flux: &[f64],
    s: &[f64],
    fluids: &FluidProps,
    wells: &WellSpec,
    cell_pore_volume: f64,
    dt: f64,
    cfl: f64,
) -> Result<SaturationStep> {
    if flux.len() != faces.len() {
        return Err(Error::dim(format!("{} fluxes for {} faces", flux.len(), faces.len())));
    }
    let limit = cfl_dt(faces, flux, wells, s.len(), cell_pore_volume, fluids.max_frac_flow_slope(), cfl);
    let ratio = dt / limit;
    let n = if ratio <= 1.0 + 1e-9 { 1.0 } else { ratio.ceil() };
    if !(n.is_finite() && n <= MAX_SUBSTEPS as f64) {
        return Err(Error::Solver(format!(
            "CFL restriction persists: step {dt} days against limit {limit} days"
        )));
    }
    let substeps = n as usize;
    let h = dt / n;
    let mut cur = s.to_vec();
    let mut produced = 0.0;
    for _ in 0..substeps {
        let (next, p) = upwind_step(faces, flux, &cur, fluids, wells, cell_pore_volume, h);
        cur = next;
        produced += p;
    }
    let stored_change = cell_pore_volume * cur.iter().zip(s).map(|(a, b)| a - b).sum::<f64>();
    if let Some(i) = cur.iter().position(|v| !(-1e-9..=1.0 + 1e-9).contains(v)) {
        return Err(Error::Physics(format!("saturation {} at cell {i} left [0, 1]", cur[i])));
    }
    Ok(SaturationStep {
        s: cur,
        substeps,
        injected: wells.rate * dt,
        produced,
        stored_change,
    })
}

/// IMPES loop: pressure solve on the current saturation, one CFL-limited
/// transport step, repeat. Frames are captured at `T` uniform report times
/// `k · horizon / T` (`k = 1..=T`); each frame's pressure is the solution for
/// that frame's saturation. Initial saturation is zero everywhere.
pub fn run_simulation(perm: &PermField, cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let (h, w) = (perm.h, perm.w);
    let grid = cfg.grid(h, w);
    let faces = grid.faces();
    let trans = grid.transmissibilities(perm)?;
    let wells = cfg.wells(h, w);
    let fluids = &cfg.fluids;
    let pv = fluids.porosity * grid.cell_volume();
    let slope = fluids.max_frac_flow_slope();
    let n = grid.cells();

    let mut s = vec![0.0; n];
    let mut p = solve_with(&faces, &trans, &s, fluids, &wells, cfg.cg_tol, None)?.p;
    let mut t = 0.0;
    let mut out = SimOutput {
        h,
        w,
        steps: cfg.steps,
        times: Vec::with_capacity(cfg.steps),
        saturation: Vec::with_capacity(cfg.steps * n),
        pressure: Vec::with_capacity(cfg.steps * n),
        substeps: Vec::with_capacity(cfg.steps),
        balance: Vec::new(),
    };
    let snap = 1e-9 * cfg.report_dt();
    for k in 1..=cfg.steps {
        let target = cfg.horizon * k as f64 / cfg.steps as f64;
        let mut taken = 0;
        while target - t > snap {
            let flux = face_fluxes(&faces, &trans, &s, &p, fluids)?;
            let limit = cfl_dt(&faces, &flux, &wells, n, pv, slope, cfg.cfl);
            let remaining = target - t;
            let dt = if remaining - limit <= snap { remaining } else { limit };
            let step = update_saturation(&faces, &flux, &s, fluids, &wells, pv, dt, cfg.cfl)?;
            let water_cut = if step.injected > 0.0 { step.produced / step.injected } else { 0.0 };
            let rel_error = if step.injected > 0.0 {
                (step.injected - step.produced - step.stored_change).abs() / step.injected
            } else {
                0.0
            };
            t = if dt == remaining { target } else { t + dt };
            out.balance.push(StepBalance {
                time: t,
                dt,
                injected: step.injected,
                produced: step.produced,
                stored_change: step.stored_change,
                rel_error,
                water_cut,
            });
            s = step.s;
            p = solve_with(&faces, &trans, &s, fluids, &wells, cfg.cg_tol, Some(&p))?.p;
            taken += step.substeps;
        }
        out.times.push(target);
        out.saturation.extend_from_slice(&s);
        out.pressure.extend_from_slice(&p);
        out.substeps.push(taken);
    }
    Ok(out)
}

/// Samples and simulates one realization per seed, spreading work across the
/// available cores. Output order follows `seeds`.
pub fn simulate_ensemble(sampler: &PermSampler, cfg: &SimConfig, seeds: &[u64]) -> Result<Vec<(PermField, SimOutput)>> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len().max(1));
    let run = |seed: u64| -> Result<(PermField, SimOutput)> {
        let perm = sampler.sample(seed);
        let sim = run_simulation(&perm, cfg)?;
        Ok((perm, sim))
    };
    if workers <= 1 {
        return seeds.iter().map(|&s| run(s)).collect();
    }
    let chunk = seeds.len().div_ceil(workers);
    let parts: Vec<Result<Vec<_>>> = thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(|&s| run(s)).collect::<Result<Vec<_>>>()))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(seeds.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}
