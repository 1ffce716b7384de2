//! Ground-truth two-phase flow: a Gaussian log-permeability sampler and an
//! incompressible oil-water IMPES finite-volume simulator on the quarter
//! five-spot (injector at cell `(0, 0)`, producer at `(H-1, W-1)`).
//!
//! Units: days, metres, bar, millidarcy, centipoise.

mod perm;
mod pressure;
mod transport;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use perm::{generate_permeability, PermSampler};
pub use pressure::{face_fluxes, solve_pressure, PressureSolution};
pub use transport::{run_simulation, simulate_ensemble, update_saturation, SaturationStep};

/// Darcy unit conversion: m³/day per (mD · m² / (cP · m) · bar).
pub const DARCY: f64 = 8.5267e-3;

/// Standard gravity (m/s²). Housed for completeness; the areal 2D model
/// neglects gravity.
pub const GRAVITY: f64 = 9.80665;

/// Absolute permeability field, row-major `[H, W]`, in millidarcy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermField {
    pub h: usize,
    pub w: usize,
    pub k: Vec<f64>,
    pub meta: PermMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PermMeta {
    pub seed: u64,
    pub corr_len: f64,
    pub log_std: f64,
    pub log_mean: f64,
}

impl PermField {
    /// Builds a field from explicit values, checking positivity.
    pub fn new(h: usize, w: usize, k: Vec<f64>) -> Result<Self> {
        let field = Self {
            h,
            w,
            k,
            meta: PermMeta {
                seed: 0,
                corr_len: 0.0,
                log_std: 0.0,
                log_mean: 0.0,
            },
        };
        field.validate()?;
        Ok(field)
    }

    pub fn homogeneous(h: usize, w: usize, k: f64) -> Result<Self> {
        let mut f = Self::new(h, w, vec![k; h * w])?;
        f.meta.log_mean = k.ln();
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 || self.k.len() != self.h * self.w {
            return Err(Error::dim(format!(
                "permeability {}x{} with {} values",
                self.h,
                self.w,
                self.k.len()
            )));
        }
        if let Some(i) = self.k.iter().position(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(Error::Physics(format!(
                "permeability at cell {i} is {}, must be positive and finite",
                self.k[i]
            )));
        }
        Ok(())
    }

    /// Same field with every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut out = self.clone();
        out.k.iter_mut().for_each(|v| *v *= c);
        out.meta.log_mean += c.ln();
        out.validate()?;
        Ok(out)
    }
}

/// Fluid and rock properties with Corey relative permeabilities
/// `k_rw = S^nw`, `k_ro = (1 - S)^no` and zero residual saturations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluidProps {
    pub rho_w: f64,
    pub rho_o: f64,
    pub mu_w: f64,
    pub mu_o: f64,
    pub corey_w: u32,
    pub corey_o: u32,
    pub porosity: f64,
}

impl Default for FluidProps {
    fn default() -> Self {
        Self {
            rho_w: 999.0,
            rho_o: 600.0,
            mu_w: 1.0,
            mu_o: 2.0,
            corey_w: 2,
            corey_o: 2,
            porosity: 1.0,
        }
    }
}

impl FluidProps {
    pub fn validate(&self) -> Result<()> {
        let vals = [self.rho_w, self.rho_o, self.mu_w, self.mu_o, self.porosity];
        if vals.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.corey_w == 0 || self.corey_o == 0 {
            return Err(Error::config(format!("fluid properties must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn mobility_w(&self, s: f64) -> f64 {
        s.powi(self.corey_w as i32) / self.mu_w
    }

    pub fn mobility_o(&self, s: f64) -> f64 {
        (1.0 - s).powi(self.corey_o as i32) / self.mu_o
    }

    pub fn mobility_t(&self, s: f64) -> f64 {
        self.mobility_w(s) + self.mobility_o(s)
    }

    /// Water fractional flow `λ_w / λ_t`.
    pub fn frac_flow(&self, s: f64) -> f64 {
        let lw = self.mobility_w(s);
        lw / (lw + self.mobility_o(s))
    }

    fn frac_flow_slope(&self, s: f64) -> f64 {
        let (nw, no) = (self.corey_w as i32, self.corey_o as i32);
        let lw = self.mobility_w(s);
        let lo = self.mobility_o(s);
        let dlw = nw as f64 * s.powi(nw - 1) / self.mu_w;
        let dlo = -(no as f64) * (1.0 - s).powi(no - 1) / self.mu_o;
        let lt = lw + lo;
        (dlw * lo - lw * dlo) / (lt * lt)
    }

    /// Upper bound on `df_w/dS` over `[0, 1]` (dense scan plus 5% margin).
    pub fn max_frac_flow_slope(&self) -> f64 {
        let n = 10_000;
        let m = (0..=n)
            .map(|i| self.frac_flow_slope(i as f64 / n as f64))
            .fold(0.0f64, f64::max);
        1.05 * m
    }
}

/// Cartesian grid geometry: `h × w` square cells of side `dx`, thickness `dz`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub h: usize,
    pub w: usize,
    pub dx: f64,
    pub dz: f64,
}

/// One interior face between cells `a` and `b` (`a < b`, flat indices).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Face {
    pub a: usize,
    pub b: usize,
}

impl Grid {
    pub fn cells(&self) -> usize {
        self.h * self.w
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx * self.dx * self.dz
    }

    /// Horizontal faces first (row-major), then vertical faces (row-major).
    pub fn faces(&self) -> Vec<Face> {
        let (h, w) = (self.h, self.w);
        let mut out = Vec::with_capacity(h * (w - 1) + (h - 1) * w);
        for y in 0..h {
            for x in 0..w - 1 {
                out.push(Face {
                    a: y * w + x,
                    b: y * w + x + 1,
                });
            }
        }
        for y in 0..h - 1 {
            for x in 0..w {
                out.push(Face {
                    a: y * w + x,
                    b: (y + 1) * w + x,
                });
            }
        }
        out
    }

    /// Two-point transmissibility per face, `DARCY · harmonic(k_a, k_b) · dz`
    /// (face area `dx · dz` over centre distance `dx`).
    pub fn transmissibilities(&self, perm: &PermField) -> Result<Vec<f64>> {
        if perm.h != self.h || perm.w != self.w {
            return Err(Error::dim(format!(
                "permeability {}x{} on a {}x{} grid",
                perm.h, perm.w, self.h, self.w
            )));
        }
        perm.validate()?;
        Ok(self
            .faces()
            .iter()
            .map(|f| {
                let (ka, kb) = (perm.k[f.a], perm.k[f.b]);
                DARCY * 2.0 * ka * kb / (ka + kb) * self.dz
            })
            .collect())
    }
}

/// Rate-specified wells: pure water injection at `injector`, total-liquid
/// production of the same rate at `producer` (m³/day).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WellSpec {
    pub injector: usize,
    pub producer: usize,
    pub rate: f64,
}

impl WellSpec {
    pub fn quarter_five_spot(h: usize, w: usize, rate: f64) -> Self {
        Self {
            injector: 0,
            producer: h * w - 1,
            rate,
        }
    }
}

/// Simulation controls. Injection rate is expressed as pore volumes injected
/// over the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Number of report frames `T`.
    pub steps: usize,
    /// Simulated time in days.
    pub horizon: f64,
    pub pvi: f64,
    pub cell_size: f64,
    pub thickness: f64,
    /// Courant number for the explicit transport substeps.
    pub cfl: f64,
    /// Relative residual target of the pressure solve.
    pub cg_tol: f64,
    pub fluids: FluidProps,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            horizon: 3650.0,
            pvi: 0.8,
            cell_size: 1.0,
            thickness: 1.0,
            cfl: 0.9,
            cg_tol: 1e-10,
            fluids: FluidProps::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.fluids.validate()?;
        if self.steps == 0 {
            return Err(Error::config("at least one report step is required"));
        }
        let pos = [self.horizon, self.cell_size, self.thickness, self.cfl, self.cg_tol];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.pvi.is_finite() && self.pvi >= 0.0) {
            return Err(Error::config(format!("invalid simulation controls: {self:?}")));
        }
        if self.cfl > 1.0 {
            return Err(Error::config(format!("CFL number {} exceeds 1", self.cfl)));
        }
        Ok(())
    }

    pub fn grid(&self, h: usize, w: usize) -> Grid {
        Grid {
            h,
            w,
            dx: self.cell_size,
            dz: self.thickness,
        }
    }

    /// Injection rate (m³/day) delivering `pvi` pore volumes over the horizon.
    pub fn rate(&self, h: usize, w: usize) -> f64 {
        let pore_volume = self.fluids.porosity * self.grid(h, w).cell_volume() * (h * w) as f64;
        self.pvi * pore_volume / self.horizon
    }

    pub fn wells(&self, h: usize, w: usize) -> WellSpec {
        WellSpec::quarter_five_spot(h, w, self.rate(h, w))
    }

    /// Spacing between report frames.
    pub fn report_dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }
}

/// Water accounting of one transport step (volumes in m³).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepBalance {
    pub time: f64,
    pub dt: f64,
    pub injected: f64,
    pub produced: f64,
    pub stored_change: f64,
    /// `|injected - produced - stored_change| / injected` (0 without injection).
    pub rel_error: f64,
    /// Producer water cut over the step.
    pub water_cut: f64,
}

/// Report frames and diagnostics of one run. Frames are row-major `[T, H, W]`;
/// pressure is in bar with the producer pinned at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub h: usize,
    pub w: usize,
    pub steps: usize,
    pub times: Vec<f64>,
    pub saturation: Vec<f64>,
    pub pressure: Vec<f64>,
    /// Transport substeps taken inside each report interval.
    pub substeps: Vec<usize>,
    pub balance: Vec<StepBalance>,
}

impl SimOutput {
    pub fn frame_len(&self) -> usize {
        self.h * self.w
    }

    pub fn saturation_frame(&self, t: usize) -> &[f64] {
        &self.saturation[t * self.frame_len()..(t + 1) * self.frame_len()]
    }

    pub fn pressure_frame(&self, t: usize) -> &[f64] {
        &self.pressure[t * self.frame_len()..(t + 1) * self.frame_len()]
    }

    pub fn max_balance_error(&self) -> f64 {
        self.balance.iter().map(|b| b.rel_error).fold(0.0, f64::max)
    }

    /// First time the producer water cut reaches `threshold`.
    pub fn breakthrough_time(&self, threshold: f64) -> Option<f64> {
        self.balance
            .iter()
            .find(|b| b.water_cut >= threshold)
            .map(|b| b.time - b.dt)
    }
}
