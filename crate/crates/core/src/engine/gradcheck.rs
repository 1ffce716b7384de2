use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::tape::{BackwardFault, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Maximum accepted relative error per entry.
    pub tolerance: f64,
    /// Entries probed per tensor; `None` probes every entry.
    pub max_entries: Option<usize>,
    /// Smallest denominator of the relative error, so gradients that are
    /// numerically zero compare on an absolute scale.
    pub floor: f64,
    pub seed: u64,
    /// Corrupts a backward rule during the analytic pass.
    pub fault: Option<BackwardFault>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-5,
            tolerance: 1e-4,
            max_entries: None,
            floor: 1e-6,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// Flat index, analytic and numeric value of the worst entry.
    pub worst: (usize, f64, f64),
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors.iter().all(|t| t.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &TensorCheck> {
        self.tensors.iter().filter(|t| !t.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }
}

/// Relative error with a denominator floor.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn evaluate<F>(f: &F, params: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.constant(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let v = tape.value(out);
    if v.numel() != 1 {
        return Err(Error::Contract(format!(
            "gradient check closure must return a scalar, got {:?}",
            v.shape()
        )));
    }
    Ok(v.item())
}

/// Compares reverse-mode gradients of `f` against central finite differences.
///
/// `f` receives a fresh tape and one leaf per parameter and must return a scalar
/// that is a deterministic function of the parameters.
pub fn grad_check<F>(f: F, params: &[(String, Tensor)], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::with_fault(opts.fault);
    let vars: Vec<Var> = params
        .iter()
        .map(|(_, t)| tape.leaf(t.detached().with_grad()))
        .collect();
    let loss = f(&mut tape, &vars)?;
    let base = tape.value(loss).item();
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_default())
        .collect();
    drop(tape);

    let mut values: Vec<Tensor> = params.iter().map(|(_, t)| t.detached()).collect();
    let again = evaluate(&f, &values)?;
    if again.to_bits() != base.to_bits() {
        return Err(Error::Contract(format!(
            "closure is not deterministic: {base} then {again}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut tensors = Vec::with_capacity(params.len());
    for (k, (name, _)) in params.iter().enumerate() {
        let n = values[k].numel();
        let entries: Vec<usize> = match opts.max_entries {
            Some(m) if m < n => {
                let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..n).collect(),
        };
        let mut worst = (0, 0.0, 0.0);
        let mut max_err = 0.0f64;
        for &i in &entries {
            let orig = values[k].data()[i];
            values[k].data_mut()[i] = orig + opts.step;
            let plus = evaluate(&f, &values)?;
            values[k].data_mut()[i] = orig - opts.step;
            let minus = evaluate(&f, &values)?;
            values[k].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic[k][i];
            let err = relative_error(a, numeric, opts.floor);
            if !(err <= max_err) {
                max_err = err;
                worst = (i, a, numeric);
            }
        }
        tensors.push(TensorCheck {
            name: name.clone(),
            checked: entries.len(),
            max_rel_error: max_err,
            worst,
            passed: max_err < opts.tolerance,
        });
    }
    Ok(GradCheckReport {
        tolerance: opts.tolerance,
        tensors,
    })
}
