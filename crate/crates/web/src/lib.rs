//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every operation takes and returns plain strings so the page needs no
//! glue beyond `JSON.parse`. The same functions are exposed natively in
//! [`ops`] for testing.

pub mod ops;

use wasm_bindgen::prelude::*;

fn js<T>(r: Result<T, String>) -> Result<T, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Synthetic two-group dataset as CSV text.
#[wasm_bindgen]
pub fn synth_csv(n: usize, p: usize, censoring: f64, seed: u64) -> Result<String, JsError> {
    js(ops::synth_csv(n, p, censoring, seed))
}

/// Kaplan–Meier curve per group of a CSV dataset, as JSON.
#[wasm_bindgen]
pub fn km_curves(csv: &str) -> Result<String, JsError> {
    js(ops::km_curves(csv))
}

/// RCLL and RSBS of Weibull predictions whose scale is off by a range of
/// multipliers, as JSON.
#[wasm_bindgen]
pub fn properness_curve(n: usize, seed: u64) -> Result<String, JsError> {
    js(ops::properness_curve(n, seed))
}

/// Fairness gap of one measure over a σ grid, as JSON.
#[wasm_bindgen]
pub fn bias_sweep(csv: &str, method: &str, measure: &str, trees: usize, reps: usize, seed: u64) -> Result<String, JsError> {
    js(ops::bias_sweep(csv, method, measure, trees, reps, seed))
}
