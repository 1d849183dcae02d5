//! Browser bindings for three interactive views of the stacked-pair example
//! and the oscillation witness.
//!
//! The plain-Rust functions in [`demo`] do the work; the `#[wasm_bindgen]`
//! wrappers only convert errors.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use wasm_bindgen::prelude::*;

pub mod demo {
    use somds::datasets::{projection_plan, stacked_pair};
    use somds::energy::oscillation_experiment;
    use somds::quartic::{level_set_grid, Region, TOL_VALUE};
    use somds::{compute_moments, minimize_quartic, quartic_at, MomentSet};

    pub fn stacked_moments(per_location: usize) -> Result<MomentSet, String> {
        let cloud = stacked_pair(per_location).map_err(|e| e.to_string())?;
        let plan = projection_plan(&cloud, 1).map_err(|e| e.to_string())?;
        compute_moments(&plan, &cloud).map_err(|e| e.to_string())
    }

    /// `[value, multiplicity code, y_1, ..., y_k]` with codes 0 unique,
    /// 1 finitely many, 2 continuum.
    pub fn minimizers(moments: &MomentSet, x: [f64; 2]) -> Result<Vec<f64>, String> {
        let qm = quartic_at(moments, &x).map_err(|e| e.to_string())?;
        let sol = minimize_quartic(&qm, TOL_VALUE);
        let code = match sol.multiplicity {
            somds::Multiplicity::Unique => 0.0,
            somds::Multiplicity::FiniteMultiple => 1.0,
            somds::Multiplicity::Continuum => 2.0,
        };
        let mut out = vec![sol.value, code];
        out.extend(sol.minimizers.iter().map(|y| y[0]));
        Ok(out)
    }

    /// `J(y | x)` at `samples` evenly spaced points of `[y_min, y_max]`.
    pub fn curve(moments: &MomentSet, x: [f64; 2], y_min: f64, y_max: f64, samples: usize) -> Result<Vec<f64>, String> {
        if samples < 2 || !(y_max > y_min) {
            return Err("curve needs samples >= 2 and y_max > y_min".into());
        }
        let qm = quartic_at(moments, &x).map_err(|e| e.to_string())?;
        let h = (y_max - y_min) / (samples - 1) as f64;
        Ok((0..samples).map(|k| qm.value(&[y_min + k as f64 * h])).collect())
    }

    /// Row-major `[lambda, count]` pairs over `[-h, h]^2`, first coordinate
    /// fastest.
    pub fn level_set(moments: &MomentSet, half_width: f64, resolution: usize) -> Result<Vec<f64>, String> {
        let grid = level_set_grid(moments, Region::square(half_width), resolution).map_err(|e| e.to_string())?;
        let mut nodes = grid.nodes;
        nodes.sort_by(|a, b| a.x[1].total_cmp(&b.x[1]).then(a.x[0].total_cmp(&b.x[0])));
        Ok(nodes.iter().flat_map(|n| [n.lambda, n.count as f64]).collect())
    }

    /// `[J(0), J(T_1), ..., J(T_n_max)]`.
    pub fn oscillation(resolution: usize, n_max: u32, amplitude: f64) -> Result<Vec<f64>, String> {
        let n_list: Vec<u32> = (1..=n_max).collect();
        let res = oscillation_experiment(&n_list, resolution, amplitude).map_err(|e| e.to_string())?;
        let mut out = vec![res.stress_zero];
        out.extend(res.rows.iter().map(|r| r.1));
        Ok(out)
    }
}

fn js(e: String) -> JsError {
    JsError::new(&e)
}

#[wasm_bindgen]
pub struct StackedPair {
    moments: somds::MomentSet,
}

#[wasm_bindgen]
impl StackedPair {
    #[wasm_bindgen(constructor)]
    pub fn new(per_location: usize) -> Result<StackedPair, JsError> {
        Ok(Self {
            moments: demo::stacked_moments(per_location).map_err(js)?,
        })
    }

    pub fn minimizers(&self, x1: f64, x2: f64) -> Result<Vec<f64>, JsError> {
        demo::minimizers(&self.moments, [x1, x2]).map_err(js)
    }

    pub fn curve(&self, x1: f64, x2: f64, y_min: f64, y_max: f64, samples: usize) -> Result<Vec<f64>, JsError> {
        demo::curve(&self.moments, [x1, x2], y_min, y_max, samples).map_err(js)
    }

    #[wasm_bindgen(js_name = levelSet)]
    pub fn level_set(&self, half_width: f64, resolution: usize) -> Result<Vec<f64>, JsError> {
        demo::level_set(&self.moments, half_width, resolution).map_err(js)
    }
}

#[wasm_bindgen]
pub fn oscillation(resolution: usize, n_max: u32, amplitude: f64) -> Result<Vec<f64>, JsError> {
    demo::oscillation(resolution, n_max, amplitude).map_err(js)
}
