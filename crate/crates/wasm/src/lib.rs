//! wasm-bindgen bindings for the static demo page in `www/`.
//!
//! Every export has a plain-Rust twin (`*_values`) returning `String` errors
//! so it can be tested natively; the exports only convert errors to JS.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use deformed_wigner::bk::bk_density;
use deformed_wigner::ensemble::{sample_spectrum, EnsembleSpec};
use deformed_wigner::experiment::LawConfig;
use deformed_wigner::measure::AtomicMeasure;
use deformed_wigner::stieltjes::{self, linspace};
use wasm_bindgen::prelude::*;

/// Largest matrix the page will sample; keeps one click under a second or so.
pub const MAX_N: usize = 600;

fn grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, String> {
    if !(hi > lo) || !(2..=20_000).contains(&points) {
        return Err(format!("bad grid {lo}:{hi}:{points}"));
    }
    Ok(linspace(lo, hi, points))
}

pub fn density_values(atoms: &str, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, String> {
    let m: AtomicMeasure = atoms.parse().map_err(|e| format!("{e}"))?;
    let g = grid(lo, hi, points)?;
    Ok(stieltjes::density(&m, &g, 1e-6).map_err(|e| e.to_string())?.values)
}

pub fn bk_values(a: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, String> {
    grid(lo, hi, points)?.into_iter().map(|x| bk_density(x, a).map_err(|e| e.to_string())).collect()
}

/// Normalized histogram (a density on `[lo, hi]`) of one sampled spectrum.
pub fn histogram_values(
    atoms: &str,
    law: &str,
    n: usize,
    seed: u64,
    lo: f64,
    hi: f64,
    bins: usize,
) -> Result<Vec<f64>, String> {
    if n == 0 || n > MAX_N {
        return Err(format!("n must be in 1..={MAX_N}"));
    }
    if !(hi > lo) || bins == 0 {
        return Err("bad histogram range".into());
    }
    let m: AtomicMeasure = atoms.parse().map_err(|e| format!("{e}"))?;
    let law = LawConfig::new(law.parse().map_err(|e| format!("{e}"))?).distribution().map_err(|e| e.to_string())?;
    let diag = m.realize(n).map_err(|e| e.to_string())?;
    let s = sample_spectrum(&EnsembleSpec::new(n, law, seed), &diag, false).map_err(|e| e.to_string())?;
    let width = (hi - lo) / bins as f64;
    let mut h = vec![0.0; bins];
    for &l in &s.eigenvalues {
        let k = ((l - lo) / width).floor();
        if k >= 0.0 && (k as usize) < bins {
            h[k as usize] += 1.0;
        }
    }
    Ok(h.into_iter().map(|c| c / (n as f64 * width)).collect())
}

#[wasm_bindgen]
pub fn density(atoms: &str, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, JsError> {
    density_values(atoms, lo, hi, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = bkDensity)]
pub fn bk(a: f64, lo: f64, hi: f64, points: usize) -> Result<Vec<f64>, JsError> {
    bk_values(a, lo, hi, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = eigenvalueHistogram)]
pub fn histogram(
    atoms: &str,
    law: &str,
    n: usize,
    seed: u64,
    lo: f64,
    hi: f64,
    bins: usize,
) -> Result<Vec<f64>, JsError> {
    histogram_values(atoms, law, n, seed, lo, hi, bins).map_err(|e| JsError::new(&e))
}
