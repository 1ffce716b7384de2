//! Differentiable discrete water mass-balance residual.
//!
//! The residual mirrors the simulator's discretization exactly (two-point
//! fluxes, harmonic transmissibility, mean total mobility, upwind fractional
//! flow, explicit in time), so an exact simulator trajectory whose report
//! interval is a single transport step has a round-off-level residual:
//!
//! ```text
//! r = φ (S_{t+1} - S_t) / dt + (Σ_faces F_w(S_t, p_t) - q_w(S_t)) / V
//! ```

use std::cell::Cell;

use crate::engine::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::simulator::{Face, FluidProps, Grid, PermField, SimConfig, WellSpec};

thread_local! {
    static CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of flux / residual evaluations on the current thread.
pub fn physics_calls() -> u64 {
    CALLS.with(Cell::get)
}

fn count_call() {
    CALLS.with(|c| c.set(c.get() + 1));
}

/// Total and water face fluxes `[M, faces]`, positive from `a` to `b`.
#[derive(Clone, Copy, Debug)]
pub struct FaceFlux {
    pub total: Var,
    pub water: Var,
}

fn pow_int(tape: &mut Tape, x: Var, n: u32) -> Result<Var> {
    let mut y = x;
    for _ in 1..n {
        y = tape.mul(y, x)?;
    }
    Ok(y)
}

/// `(λ_w(S), λ_o(S))` with Corey exponents.
fn mobilities(tape: &mut Tape, s: Var, fluids: &FluidProps) -> Result<(Var, Var)> {
    let sw = pow_int(tape, s, fluids.corey_w)?;
    let lw = tape.scale(sw, 1.0 / fluids.mu_w);
    let neg = tape.scale(s, -1.0);
    let so = tape.add_scalar(neg, 1.0);
    let so = pow_int(tape, so, fluids.corey_o)?;
    let lo = tape.scale(so, 1.0 / fluids.mu_o);
    Ok((lw, lo))
}

fn frac_flow(tape: &mut Tape, s: Var, fluids: &FluidProps) -> Result<Var> {
    let (lw, lo) = mobilities(tape, s, fluids)?;
    let lt = tape.add(lw, lo)?;
    tape.div(lw, lt)
}

fn frames_shape(tape: &Tape, v: Var, what: &str) -> Result<(usize, usize, usize)> {
    match *tape.shape(v) {
        [m, h, w] => Ok((m, h, w)),
        ref s => Err(Error::dim(format!("{what} must be [M, H, W], got {s:?}"))),
    }
}

/// Two-point Darcy fluxes for `M` frames of saturation and pressure `[M, H, W]`.
/// `trans` holds per-frame face transmissibilities `[M, faces]`. The upwind
/// side is picked from the sign of the pressure drop and treated as fixed when
/// differentiating.
pub fn darcy_flux(
    tape: &mut Tape,
    faces: &[Face],
    trans: Var,
    s: Var,
    p: Var,
    fluids: &FluidProps,
) -> Result<FaceFlux> {
    count_call();
    let (m, h, w) = frames_shape(tape, s, "saturation")?;
    if frames_shape(tape, p, "pressure")? != (m, h, w) {
        return Err(Error::dim(format!(
            "pressure {:?} does not match saturation {:?}",
            tape.shape(p),
            tape.shape(s)
        )));
    }
    let nf = faces.len();
    if tape.shape(trans) != [m, nf] {
        return Err(Error::dim(format!(
            "transmissibilities {:?}, expected [{m}, {nf}]",
            tape.shape(trans)
        )));
    }
    let hw = h * w;
    if let Some(f) = faces.iter().find(|f| f.a >= hw || f.b >= hw) {
        return Err(Error::dim(format!("face {f:?} outside a {h}x{w} grid")));
    }
    let idx = |pick: fn(&Face) -> usize| -> Vec<usize> {
        (0..m).flat_map(|k| faces.iter().map(move |f| k * hw + pick(f))).collect()
    };
    let (ia, ib) = (idx(|f| f.a), idx(|f| f.b));
    let shape = [m, nf];
    let sa = tape.gather(s, ia.clone(), shape)?;
    let sb = tape.gather(s, ib.clone(), shape)?;
    let pa = tape.gather(p, ia.clone(), shape)?;
    let pb = tape.gather(p, ib.clone(), shape)?;
    let dp = tape.sub(pa, pb)?;

    let (lwa, loa) = mobilities(tape, sa, fluids)?;
    let (lwb, lob) = mobilities(tape, sb, fluids)?;
    let lta = tape.add(lwa, loa)?;
    let ltb = tape.add(lwb, lob)?;
    let lsum = tape.add(lta, ltb)?;
    let lbar = tape.scale(lsum, 0.5);
    let coef = tape.mul(trans, lbar)?;
    let total = tape.mul(coef, dp)?;

    let up: Vec<usize> = tape
        .data(dp)
        .iter()
        .zip(ia.iter().zip(&ib))
        .map(|(&d, (&a, &b))| if d >= 0.0 { a } else { b })
        .collect();
    let s_up = tape.gather(s, up, shape)?;
    let fw = frac_flow(tape, s_up, fluids)?;
    let water = tape.mul(fw, total)?;
    Ok(FaceFlux { total, water })
}

/// Fixed data of the residual: geometry, fluids, wells, report interval and
/// per-sample face transmissibilities.
#[derive(Clone, Debug)]
pub struct ResidualContext {
    pub grid: Grid,
    pub fluids: FluidProps,
    pub wells: WellSpec,
    pub dt: f64,
    faces: Vec<Face>,
    trans: Vec<Vec<f64>>,
}

impl ResidualContext {
    pub fn new(grid: Grid, fluids: FluidProps, wells: WellSpec, dt: f64, perms: &[&PermField]) -> Result<Self> {
        fluids.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::config(format!("residual time step must be positive, got {dt}")));
        }
        let trans = perms
            .iter()
            .map(|k| grid.transmissibilities(k))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            faces: grid.faces(),
            grid,
            fluids,
            wells,
            dt,
            trans,
        })
    }

    /// Context matching a simulation run with `cfg` on each permeability.
    pub fn for_simulation(cfg: &SimConfig, perms: &[&PermField]) -> Result<Self> {
        let (h, w) = perms
            .first()
            .map(|p| (p.h, p.w))
            .ok_or_else(|| Error::config("residual context needs at least one permeability field"))?;
        Self::new(cfg.grid(h, w), cfg.fluids.clone(), cfg.wells(h, w), cfg.report_dt(), perms)
    }

    pub fn batch(&self) -> usize {
        self.trans.len()
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }
}

/// Residual `[B, T-1, H, W]` of the water balance between consecutive frames
/// of `s_seq` and `p_seq` (`[B, T, H, W]`), with fluxes and well terms at the
/// earlier frame.
pub fn discrete_residual(tape: &mut Tape, ctx: &ResidualContext, s_seq: Var, p_seq: Var) -> Result<Var> {
    count_call();
    let shape = tape.shape(s_seq).to_vec();
    if tape.shape(p_seq) != shape.as_slice() {
        return Err(Error::dim(format!(
            "saturation {:?} and pressure {:?} sequences differ",
            shape,
            tape.shape(p_seq)
        )));
    }
    let (g, b) = (&ctx.grid, ctx.batch());
    if shape.len() != 4 || shape[0] != b || shape[2] != g.h || shape[3] != g.w {
        return Err(Error::dim(format!(
            "sequences must be [{b}, T, {}, {}], got {shape:?}",
            g.h, g.w
        )));
    }
    let t = shape[1];
    if t < 2 {
        return Err(Error::dim(format!("residual needs at least 2 frames, got {t}")));
    }
    let (steps, hw) = (t - 1, g.cells());
    let m = b * steps;

    let s_prev = tape.narrow(s_seq, 1, 0, steps)?;
    let s_next = tape.narrow(s_seq, 1, 1, steps)?;
    let p_now = tape.narrow(p_seq, 1, 0, steps)?;
    let s_now = tape.reshape(s_prev, [m, g.h, g.w])?;
    let p_now = tape.reshape(p_now, [m, g.h, g.w])?;

    let nf = ctx.faces.len();
    let mut trans = Vec::with_capacity(m * nf);
    for tr in &ctx.trans {
        for _ in 0..steps {
            trans.extend_from_slice(tr);
        }
    }
    let trans = tape.constant(Tensor::new([m, nf], trans)?);
    let flux = darcy_flux(tape, &ctx.faces, trans, s_now, p_now, &ctx.fluids)?;

    // Net water leaving each cell through its faces.
    let cells = [m * hw];
    let ia: Vec<usize> = (0..m).flat_map(|k| ctx.faces.iter().map(move |f| k * hw + f.a)).collect();
    let ib: Vec<usize> = (0..m).flat_map(|k| ctx.faces.iter().map(move |f| k * hw + f.b)).collect();
    let out_a = tape.scatter_add(flux.water, ia, cells)?;
    let in_b = tape.scatter_add(flux.water, ib, cells)?;
    let mut net_out = tape.sub(out_a, in_b)?;

    // Wells: water injected at the injector, f_w(S) · q produced.
    let wells = &ctx.wells;
    if wells.rate != 0.0 {
        let prod: Vec<usize> = (0..m).map(|k| k * hw + wells.producer).collect();
        let s_prod = tape.gather(s_now, prod.clone(), [m])?;
        let fw = frac_flow(tape, s_prod, &ctx.fluids)?;
        let q_prod = tape.scale(fw, wells.rate);
        let q_prod = tape.scatter_add(q_prod, prod, cells)?;
        net_out = tape.add(net_out, q_prod)?;
        let mut inj = vec![0.0; m * hw];
        for k in 0..m {
            inj[k * hw + wells.injector] -= wells.rate;
        }
        let inj = tape.constant(Tensor::new(cells, inj)?);
        net_out = tape.add(net_out, inj)?;
    }

    let ds = tape.sub(s_next, s_prev)?;
    let storage = tape.scale(ds, ctx.fluids.porosity / ctx.dt);
    let div = tape.scale(net_out, 1.0 / g.cell_volume());
    let div = tape.reshape(div, [b, steps, g.h, g.w])?;
    tape.add(storage, div)
}

/// `mean(r²) · V`.
pub fn physics_loss(tape: &mut Tape, residual: Var, cell_volume: f64) -> Var {
    let sq = tape.mul(residual, residual).expect("residual squared with itself");
    let m = tape.mean(sq);
    tape.scale(m, cell_volume)
}

/// Residual expressed as a saturation change per report interval: `r · dt / φ`.
pub fn nondimensional_residual(tape: &mut Tape, ctx: &ResidualContext, s_seq: Var, p_seq: Var) -> Result<Var> {
    let r = discrete_residual(tape, ctx, s_seq, p_seq)?;
    Ok(tape.scale(r, ctx.dt / ctx.fluids.porosity))
}
