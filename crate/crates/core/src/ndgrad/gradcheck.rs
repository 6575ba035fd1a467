//! Central finite-difference verification of tape gradients.

use super::{GradBuffer, NdError, ParamStore, Tape, Var};
use crate::rng::Stream;

pub const FD_STEP: f64 = 1e-5;
pub const COORDS_PER_BLOCK: usize = 50;
/// Denominator floor for the relative error, so that two near-zero
/// gradients compare on an absolute scale.
pub const REL_ERR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub block: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub coordinates: usize,
    pub tolerance: f64,
    pub worst: Option<Mismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

/// Gradient of the closure's scalar output with respect to every block.
pub fn analytic_grads<F>(model: &mut F, store: &ParamStore) -> Result<GradBuffer, NdError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, NdError>,
{
    let mut tape = Tape::new();
    let loss = model(&mut tape, store)?;
    let mut grads = store.grad_buffer();
    tape.backward(loss, &mut grads)?;
    Ok(grads)
}

fn eval<F>(model: &mut F, store: &ParamStore) -> Result<f64, NdError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, NdError>,
{
    let mut tape = Tape::new();
    let loss = model(&mut tape, store)?;
    Ok(tape.scalar(loss))
}

/// Compares `analytic` with central differences on a random sample of
/// coordinates (all of them for blocks with at most
/// [`COORDS_PER_BLOCK`] entries). `store` is restored before returning.
pub fn check_against<F>(
    model: &mut F,
    store: &mut ParamStore,
    analytic: &GradBuffer,
    tolerance: f64,
    rng: &mut Stream,
) -> Result<GradCheckReport, NdError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, NdError>,
{
    let mut report = GradCheckReport { max_rel_err: 0.0, coordinates: 0, tolerance, worst: None };
    for id in store.ids().collect::<Vec<_>>() {
        let len = store.value(id).len();
        let coords: Vec<usize> = if len <= COORDS_PER_BLOCK {
            (0..len).collect()
        } else {
            (0..COORDS_PER_BLOCK).map(|_| rng.below(len)).collect()
        };
        for k in coords {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + FD_STEP;
            let plus = eval(model, store)?;
            store.value_mut(id).data_mut()[k] = orig - FD_STEP;
            let minus = eval(model, store)?;
            store.value_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = analytic.get(id)[k];
            let err = relative_error(a, numeric);
            report.coordinates += 1;
            if report.worst.is_none() || err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst =
                    Some(Mismatch { block: store.block(id).id.clone(), index: k, analytic: a, numeric });
            }
        }
    }
    Ok(report)
}

pub fn grad_check<F>(
    mut model: F,
    store: &mut ParamStore,
    tolerance: f64,
    rng: &mut Stream,
) -> Result<GradCheckReport, NdError>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var, NdError>,
{
    let analytic = analytic_grads(&mut model, store)?;
    check_against(&mut model, store, &analytic, tolerance, rng)
}
