//! Backend over the HiGHS C API, used for the certificate programs that are
//! too large for the dense basis inverse.

use std::ffi::{c_void, CString};

use highs_sys::*;
use log::{debug, warn};

use super::{LinearProgram, LpOutcome, LpSolver, LpStatus, Sense};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default)]
pub struct HighsSolver;

struct Handle(*mut c_void);

impl Handle {
    fn new() -> Result<Self> {
        // SAFETY: Highs_create has no preconditions.
        let ptr = unsafe { Highs_create() };
        if ptr.is_null() {
            return Err(Error::numerical("highs", "could not create solver instance"));
        }
        Ok(Handle(ptr))
    }

    fn set_bool(&self, name: &str, value: bool) {
        let key = CString::new(name).expect("option names have no NUL");
        // SAFETY: handle is live and key is a valid C string.
        unsafe { Highs_setBoolOptionValue(self.0, key.as_ptr(), value as HighsInt) };
    }

    fn set_int(&self, name: &str, value: HighsInt) {
        let key = CString::new(name).expect("option names have no NUL");
        // SAFETY: as above.
        unsafe { Highs_setIntOptionValue(self.0, key.as_ptr(), value) };
    }

    fn set_double(&self, name: &str, value: f64) {
        let key = CString::new(name).expect("option names have no NUL");
        // SAFETY: as above.
        unsafe { Highs_setDoubleOptionValue(self.0, key.as_ptr(), value) };
    }

    fn set_string(&self, name: &str, value: &str) {
        let key = CString::new(name).expect("option names have no NUL");
        let val = CString::new(value).expect("option values have no NUL");
        // SAFETY: as above.
        unsafe { Highs_setStringOptionValue(self.0, key.as_ptr(), val.as_ptr()) };
    }
}

impl Drop for Handle {
    fn drop(&mut self) {
        // SAFETY: pointer came from Highs_create and is destroyed once.
        unsafe { Highs_destroy(self.0) };
    }
}

fn to_highs_inf(v: f64) -> f64 {
    if v == f64::INFINITY {
        1e30
    } else if v == f64::NEG_INFINITY {
        -1e30
    } else {
        v
    }
}

struct Model {
    cost: Vec<f64>,
    col_lower: Vec<f64>,
    col_upper: Vec<f64>,
    row_lower: Vec<f64>,
    row_upper: Vec<f64>,
    start: Vec<HighsInt>,
    index: Vec<HighsInt>,
    value: Vec<f64>,
}

impl Model {
    fn from_lp(lp: &LinearProgram) -> Result<Self> {
        let too_big = |_| Error::SizeGuard("program too large for the HiGHS index type".into());
        let flip = if lp.sense() == Sense::Max { -1.0 } else { 1.0 };
        let mut start = Vec::with_capacity(lp.num_rows() + 1);
        let mut index = Vec::with_capacity(lp.num_nonzeros());
        let mut value = Vec::with_capacity(lp.num_nonzeros());
        let mut row_lower = Vec::with_capacity(lp.num_rows());
        let mut row_upper = Vec::with_capacity(lp.num_rows());
        for c in lp.constraints() {
            start.push(HighsInt::try_from(index.len()).map_err(too_big)?);
            for &(j, a) in &c.coeffs {
                index.push(HighsInt::try_from(j).map_err(too_big)?);
                value.push(a);
            }
            let (lo, hi) = c.range();
            row_lower.push(to_highs_inf(lo));
            row_upper.push(to_highs_inf(hi));
        }
        start.push(HighsInt::try_from(index.len()).map_err(too_big)?);
        Ok(Model {
            cost: lp.objective().iter().map(|c| flip * c).collect(),
            col_lower: lp.lower().iter().map(|&v| to_highs_inf(v)).collect(),
            col_upper: lp.upper().iter().map(|&v| to_highs_inf(v)).collect(),
            row_lower,
            row_upper,
            start,
            index,
            value,
        })
    }
}

fn run_once(model: &Model, presolve: bool) -> Result<(HighsInt, Vec<f64>, Vec<f64>)> {
    let num_col = model.cost.len();
    let num_row = model.row_lower.len();
    let h = Handle::new()?;
    h.set_bool("output_flag", false);
    h.set_int("threads", 1);
    h.set_string("solver", "ipm");
    h.set_string("run_crossover", "on");
    h.set_string("presolve", if presolve { "choose" } else { "off" });
    h.set_double("primal_feasibility_tolerance", 1e-9);
    h.set_double("dual_feasibility_tolerance", 1e-9);
    let as_int = |v: usize| HighsInt::try_from(v).map_err(|_| Error::SizeGuard("program too large".into()));
    // SAFETY: every array has the length HiGHS expects for a row-wise model
    // with num_col columns, num_row rows and index.len() nonzeros.
    let status = unsafe {
        Highs_passLp(
            h.0,
            as_int(num_col)?,
            as_int(num_row)?,
            as_int(model.index.len())?,
            MATRIX_FORMAT_ROW_WISE,
            OBJECTIVE_SENSE_MINIMIZE,
            0.0,
            model.cost.as_ptr(),
            model.col_lower.as_ptr(),
            model.col_upper.as_ptr(),
            model.row_lower.as_ptr(),
            model.row_upper.as_ptr(),
            model.start.as_ptr(),
            model.index.as_ptr(),
            model.value.as_ptr(),
        )
    };
    if status == STATUS_ERROR {
        return Err(Error::numerical("highs", "model rejected"));
    }
    // SAFETY: handle holds a model.
    let run = unsafe { Highs_run(h.0) };
    if run == STATUS_ERROR {
        return Err(Error::numerical("highs", "run returned an error status"));
    }
    // SAFETY: handle is live.
    let model_status = unsafe { Highs_getModelStatus(h.0) };
    let mut col_value = vec![0.0; num_col];
    let mut col_dual = vec![0.0; num_col];
    let mut row_value = vec![0.0; num_row];
    let mut row_dual = vec![0.0; num_row];
    if model_status == MODEL_STATUS_OPTIMAL {
        // SAFETY: buffers have the model's column and row counts.
        unsafe {
            Highs_getSolution(
                h.0,
                col_value.as_mut_ptr(),
                col_dual.as_mut_ptr(),
                row_value.as_mut_ptr(),
                row_dual.as_mut_ptr(),
            )
        };
    }
    Ok((model_status, col_value, row_dual))
}

impl LpSolver for HighsSolver {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn solve_raw(&self, lp: &LinearProgram) -> Result<LpOutcome> {
        let model = Model::from_lp(lp)?;
        let (mut status, mut x, mut y) = run_once(&model, true)?;
        if status == MODEL_STATUS_UNBOUNDED_OR_INFEASIBLE || status == MODEL_STATUS_UNKNOWN {
            debug!("highs status {status} with presolve; re-solving without");
            (status, x, y) = run_once(&model, false)?;
        }
        match status {
            MODEL_STATUS_OPTIMAL => Ok(LpOutcome {
                status: LpStatus::Optimal,
                x,
                objective: f64::NAN,
                duals: Some(y),
                duality_gap: None,
            }),
            MODEL_STATUS_INFEASIBLE => Ok(LpOutcome::infeasible()),
            MODEL_STATUS_UNBOUNDED => Ok(LpOutcome::unbounded()),
            MODEL_STATUS_MODEL_EMPTY if lp.num_vars() == 0 => Ok(LpOutcome {
                status: LpStatus::Optimal,
                x: Vec::new(),
                objective: 0.0,
                duals: Some(vec![0.0; lp.num_rows()]),
                duality_gap: None,
            }),
            other => {
                warn!("highs finished with model status {other}");
                Err(Error::numerical("highs", format!("model status {other}")))
            }
        }
    }
}
