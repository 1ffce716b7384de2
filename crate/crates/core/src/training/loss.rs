use crate::engine::{Tape, Var};
use crate::error::{Error, Result};
use crate::physics::{nondimensional_residual, physics_loss, ResidualContext};
use crate::simulator::{PermField, SimConfig};

use super::NormStats;

/// Mean of squared elementwise differences.
pub fn data_loss(tape: &mut Tape, pred: Var, truth: Var) -> Result<Var> {
    if tape.shape(pred) != tape.shape(truth) {
        return Err(Error::dim(format!(
            "prediction {:?} and target {:?} differ",
            tape.shape(pred),
            tape.shape(truth)
        )));
    }
    let d = tape.sub(pred, truth)?;
    let sq = tape.mul(d, d)?;
    Ok(tape.mean(sq))
}

/// `data + λ · physics`.
pub fn total_loss(tape: &mut Tape, data: Var, physics: Var, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!("physics weight λ must be >= 0, got {lambda}")));
    }
    let weighted = tape.scale(physics, lambda);
    tape.add(data, weighted)
}

/// Physics penalty of two-channel predictions `[B, T, 2, H, W]` (saturation,
/// normalized pressure) under the simulation settings that produced the data.
#[derive(Clone, Debug)]
pub struct PhysicsTerm {
    pub sim: SimConfig,
    pub stats: NormStats,
}

impl PhysicsTerm {
    pub fn new(sim: SimConfig, stats: NormStats) -> Result<Self> {
        sim.validate()?;
        Ok(Self { sim, stats })
    }

    pub fn loss(&self, tape: &mut Tape, pred: Var, perms: &[&PermField]) -> Result<Var> {
        let shape = tape.shape(pred).to_vec();
        if shape.len() != 5 || shape[2] != 2 || shape[0] != perms.len() {
            return Err(Error::dim(format!(
                "physics term needs [{}, T, 2, H, W] predictions, got {shape:?}",
                perms.len()
            )));
        }
        let (b, t, h, w) = (shape[0], shape[1], shape[3], shape[4]);
        if t != self.sim.steps {
            return Err(Error::dim(format!(
                "predictions have {t} frames, simulation reports {}",
                self.sim.steps
            )));
        }
        let s = tape.narrow(pred, 2, 0, 1)?;
        let s = tape.reshape(s, [b, t, h, w])?;
        let p = tape.narrow(pred, 2, 1, 1)?;
        let p = tape.reshape(p, [b, t, h, w])?;
        let p = tape.scale(p, self.stats.pressure_range());
        let p = tape.add_scalar(p, self.stats.pressure_min);
        let ctx = ResidualContext::for_simulation(&self.sim, perms)?;
        let r = nondimensional_residual(tape, &ctx, s, p)?;
        // Measured against the saturation gain the injector cell receives per
        // interval, so the penalty stays O(1) whatever the rate and grid.
        let q = ctx.wells.rate * ctx.dt / (ctx.fluids.porosity * ctx.grid.cell_volume());
        let r = if q > 0.0 { tape.scale(r, 1.0 / q) } else { r };
        Ok(physics_loss(tape, r, 1.0))
    }
}
