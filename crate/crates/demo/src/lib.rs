//! Browser bindings: render a synthetic dispersion plot, its sweep-entropy
//! profile with the selected window, and the field strengths of the
//! separation waveform.

use dmsclass::dataset::{field_strengths, InstrumentConfig};
use dmsclass::preprocess::{row_entropy, select_roi, signed_cube_root, RoiRule, RoiWindow};
use dmsclass::render::{heatmap_svg, line_svg};
use dmsclass::synth::{generate_plot, record_rng, GeneratorConfig};
use wasm_bindgen::prelude::*;

fn plot_for(chemical: usize, flow_rate: f64, noise: f64, seed: u64) -> Result<dmsclass::dataset::MeasurementRecord, String> {
    let mut config = GeneratorConfig::campaign(seed, 1, noise);
    config.peak_shift_sigma = 0.25;
    config.amplitude_sigma = 0.3;
    config.validate().map_err(|e| e.to_string())?;
    if flow_rate.is_nan() || flow_rate <= 0.0 {
        return Err(format!("flow rate must be positive, got {flow_rate}"));
    }
    let profile = config
        .profiles
        .get(chemical)
        .ok_or_else(|| format!("chemical index {chemical} outside 0..{}", config.profiles.len()))?;
    let mut rng = record_rng(seed, 0);
    Ok(generate_plot(profile, flow_rate, 0, &config, &mut rng))
}

pub fn heatmap(chemical: usize, flow_rate: f64, noise: f64, seed: u64, cube_root: bool, show_roi: bool) -> Result<String, String> {
    let r = plot_for(chemical, flow_rate, noise, seed)?;
    let plot = if cube_root { signed_cube_root(&r.plot) } else { r.plot.clone() };
    let title = format!("{} at {flow_rate} sccm{}", r.chemical, if cube_root { ", cube root" } else { "" });
    Ok(heatmap_svg(&plot, show_roi.then_some(&RoiWindow::PAPER), &title))
}

pub fn entropy(chemical: usize, flow_rate: f64, noise: f64, seed: u64, bins: usize, quantile: f64) -> Result<String, String> {
    let r = plot_for(chemical, flow_rate, noise, seed)?;
    let profile = row_entropy(&r.plot, bins).map_err(|e| e.to_string())?;
    let rule = RoiRule::Quantile {
        quantile,
        ucv_lo: RoiWindow::PAPER.ucv_lo,
        ucv_hi: RoiWindow::PAPER.ucv_hi,
    };
    let roi = select_roi(&profile, r.plot.usv_grid(), &rule).map_err(|e| e.to_string())?;
    let points: Vec<(f64, f64)> = r.plot.usv_grid().iter().copied().zip(profile.per_row_entropy).collect();
    Ok(line_svg(
        &points,
        Some((roi.usv_lo, roi.usv_hi)),
        &format!("Sweep entropy, {bins} bins, window {:.0} V to {:.0} V", roi.usv_lo, roi.usv_hi),
        "separation voltage [V]",
        "entropy [bits]",
    ))
}

pub fn fields(usv: f64, duty_cycle: f64, gap_mm: f64) -> Result<String, String> {
    let config = InstrumentConfig {
        duty_cycle,
        gap_width_mm: gap_mm,
        ..InstrumentConfig::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    let f = field_strengths(&config, usv);
    Ok(format!(
        "{{\"low_field\":{},\"high_field\":{}}}",
        f.low_field, f.high_field
    ))
}

#[wasm_bindgen]
pub fn render_heatmap(chemical: usize, flow_rate: f64, noise: f64, seed: u32, cube_root: bool, show_roi: bool) -> Result<String, JsError> {
    heatmap(chemical, flow_rate, noise, seed.into(), cube_root, show_roi).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn render_entropy(chemical: usize, flow_rate: f64, noise: f64, seed: u32, bins: usize, quantile: f64) -> Result<String, JsError> {
    entropy(chemical, flow_rate, noise, seed.into(), bins, quantile).map_err(|e| JsError::new(&e))
}

/// JSON `{"low_field": V/cm, "high_field": V/cm}`.
#[wasm_bindgen]
pub fn field_strengths_json(usv: f64, duty_cycle: f64, gap_mm: f64) -> Result<String, JsError> {
    fields(usv, duty_cycle, gap_mm).map_err(|e| JsError::new(&e))
}
