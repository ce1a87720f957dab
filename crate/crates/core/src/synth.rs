//! Synthetic dispersion plots.
//!
//! Each chemical is a set of Gaussian ridges ("alpha curves") whose peak
//! compensation voltage follows a polynomial in the separation voltage,
//! superimposed on a reactant-ion ridge, a constant baseline, a linear
//! per-record drift and white noise. None of this is a physical model; it
//! only has to look enough like a dispersion plot to exercise the pipeline.

use ndarray::Array2;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Chemical, Dataset, DispersionPlot, InstrumentConfig, MeasurementRecord};
use crate::error::{Error, Result};

/// Flow rate at which curve amplitudes equal their nominal value.
pub const REFERENCE_FLOW_SCCM: f64 = 8.0;

/// The five flow rates of the measurement campaign, in sccm.
pub const CAMPAIGN_FLOW_RATES: [f64; 5] = [8.0, 16.0, 32.0, 64.0, 128.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaCurveSpec {
    /// Polynomial coefficients, constant term first, mapping separation
    /// voltage in kilovolts to the peak compensation voltage in volts.
    pub peak_path: Vec<f64>,
    pub amplitude: f64,
    /// Gaussian sigma across the compensation-voltage axis, in volts.
    pub width: f64,
    /// Amplitude scales as `(flow / 8 sccm) ^ flow_gain`.
    pub flow_gain: f64,
}

impl AlphaCurveSpec {
    /// Curve whose peak path is the parabola `vertex + curvature * (kV - 0.2)^2`.
    pub fn parabola(vertex: f64, curvature: f64, amplitude: f64, width: f64, flow_gain: f64) -> Self {
        let x0 = 0.2;
        Self {
            peak_path: vec![vertex + curvature * x0 * x0, -2.0 * curvature * x0, curvature],
            amplitude,
            width,
            flow_gain,
        }
    }

    pub fn peak_ucv(&self, usv: f64) -> f64 {
        let kv = usv / 1000.0;
        self.peak_path.iter().rev().fold(0.0, |acc, c| acc * kv + c)
    }

    pub fn amplitude_at(&self, flow_rate: f64) -> f64 {
        self.amplitude * (flow_rate / REFERENCE_FLOW_SCCM).powf(self.flow_gain)
    }

    /// Noise-free contribution of this curve at one grid cell.
    pub fn value(&self, flow_rate: f64, usv: f64, ucv: f64) -> f64 {
        let z = (ucv - self.peak_ucv(usv)) / self.width;
        self.amplitude_at(flow_rate) * (-0.5 * z * z).exp()
    }

    fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) {
            return Err(Error::Config(format!("curve width must be positive, got {}", self.width)));
        }
        if !(self.amplitude >= 0.0) {
            return Err(Error::Config(format!(
                "curve amplitude must be non-negative, got {}",
                self.amplitude
            )));
        }
        if self.peak_path.is_empty() || self.peak_path.len() > 4 {
            return Err(Error::Config("peak_path needs 1 to 4 coefficients".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChemicalProfile {
    pub label: Chemical,
    /// Product-ion branches.
    pub curves: Vec<AlphaCurveSpec>,
    /// Fraction of the reactant-ion ridge consumed by the analyte.
    pub rip_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub profiles: Vec<ChemicalProfile>,
    pub flow_rates: Vec<f64>,
    pub days: u32,
    pub noise_sigma: f64,
    pub drift_per_record: f64,
    pub humidity_trend: f64,
    #[serde(default = "default_concentration")]
    pub concentration: f64,
    #[serde(default = "default_rip")]
    pub rip: AlphaCurveSpec,
    #[serde(default = "default_baseline")]
    pub baseline: f64,
    #[serde(default)]
    pub instrument: InstrumentConfig,
    /// Standard deviation of a per-record offset of every peak along the
    /// compensation axis, in volts.
    #[serde(default)]
    pub peak_shift_sigma: f64,
    /// Standard deviation of a per-record, per-branch log-amplitude factor.
    #[serde(default)]
    pub amplitude_sigma: f64,
}

fn default_concentration() -> f64 {
    1e-2
}

fn default_rip() -> AlphaCurveSpec {
    AlphaCurveSpec::parabola(2.0, -3.0, 1.0, 0.25, 0.0)
}

fn default_baseline() -> f64 {
    0.05
}

/// Five profiles with distinct branch geometry inside the top-left region
/// of the plot, one per analyte.
pub fn default_profiles() -> Vec<ChemicalProfile> {
    let c = AlphaCurveSpec::parabola;
    vec![
        ChemicalProfile {
            label: Chemical::Carvone,
            curves: vec![c(2.0, -9.0, 0.8, 0.18, 0.2)],
            rip_share: 0.4,
        },
        ChemicalProfile {
            label: Chemical::E2mb,
            curves: vec![c(2.2, 4.0, 0.7, 0.2, 0.2), c(2.0, -14.0, 0.25, 0.18, 0.2)],
            rip_share: 0.2,
        },
        ChemicalProfile {
            label: Chemical::Mcp,
            curves: vec![c(2.0, -5.0, 0.8, 0.18, 0.2), c(2.0, -12.0, 0.3, 0.18, 0.2)],
            rip_share: 0.35,
        },
        ChemicalProfile {
            label: Chemical::PhenylEthanol,
            curves: vec![c(2.0, -7.0, 0.6, 0.18, 0.2), c(2.0, 1.5, 0.4, 0.2, 0.2)],
            rip_share: 0.3,
        },
        ChemicalProfile {
            label: Chemical::NButanol,
            curves: vec![c(2.0, -11.0, 0.9, 0.18, 0.2)],
            rip_share: 0.45,
        },
    ]
}

impl GeneratorConfig {
    /// Campaign-shaped configuration: five analytes, five flow rates and
    /// `days` repetitions.
    pub fn campaign(seed: u64, days: u32, noise_sigma: f64) -> Self {
        Self {
            seed,
            profiles: default_profiles(),
            flow_rates: CAMPAIGN_FLOW_RATES.to_vec(),
            days,
            noise_sigma,
            drift_per_record: 2e-4,
            humidity_trend: 1e-4,
            concentration: default_concentration(),
            rip: default_rip(),
            baseline: default_baseline(),
            instrument: InstrumentConfig::default(),
            peak_shift_sigma: 0.0,
            amplitude_sigma: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.instrument.validate()?;
        if self.days < 1 {
            return Err(Error::Config("days must be at least 1".into()));
        }
        if self.profiles.is_empty() {
            return Err(Error::Config("at least one profile is required".into()));
        }
        if self.flow_rates.is_empty() || self.flow_rates.iter().any(|f| !(*f > 0.0)) {
            return Err(Error::Config("flow_rates must be non-empty and positive".into()));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("peak_shift_sigma", self.peak_shift_sigma),
            ("amplitude_sigma", self.amplitude_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        if !(self.concentration > 0.0 && self.concentration < 1.0) {
            return Err(Error::Config("concentration must lie in (0, 1)".into()));
        }
        self.rip.validate()?;
        for p in &self.profiles {
            if !(0.0..=1.0).contains(&p.rip_share) {
                return Err(Error::Config(format!("{}: rip_share must lie in [0, 1]", p.label)));
            }
            for curve in &p.curves {
                curve.validate()?;
            }
        }
        Ok(())
    }

    pub fn records_per_day(&self) -> usize {
        self.profiles.len() * self.flow_rates.len()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

impl ChemicalProfile {
    /// Baseline plus the (depleted) reactant-ion ridge.
    pub fn background(&self, config: &GeneratorConfig, usv: f64, ucv: f64) -> f64 {
        config.baseline + (1.0 - self.rip_share) * config.rip.value(REFERENCE_FLOW_SCCM, usv, ucv)
    }

    /// Noise- and drift-free intensity at one cell.
    pub fn expected_intensity(&self, config: &GeneratorConfig, flow_rate: f64, usv: f64, ucv: f64) -> f64 {
        self.background(config, usv, ucv)
            + self
                .curves
                .iter()
                .map(|c| c.value(flow_rate, usv, ucv))
                .sum::<f64>()
    }
}

/// Random stream for one record, derived from `(seed, record_index)` so
/// records can be generated in any order.
pub fn record_rng(seed: u64, record_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(record_index);
    rng
}

pub fn generate_plot(
    profile: &ChemicalProfile,
    flow_rate: f64,
    record_index: u64,
    config: &GeneratorConfig,
    rng: &mut impl RngCore,
) -> MeasurementRecord {
    let usv_grid = config.instrument.usv_grid();
    let ucv_grid = config.instrument.ucv_grid();
    let drift = record_index as f64 * config.drift_per_record;
    let shift = if config.peak_shift_sigma > 0.0 {
        Normal::new(0.0, config.peak_shift_sigma).expect("sigma validated").sample(rng)
    } else {
        0.0
    };
    let gains: Vec<f64> = if config.amplitude_sigma > 0.0 {
        let normal = Normal::new(0.0, config.amplitude_sigma).expect("sigma validated");
        profile.curves.iter().map(|_| normal.sample(rng).exp()).collect()
    } else {
        vec![1.0; profile.curves.len()]
    };
    let mut intensity = Array2::from_shape_fn((usv_grid.len(), ucv_grid.len()), |(i, j)| {
        let (usv, ucv) = (usv_grid[i], ucv_grid[j] - shift);
        profile.background(config, usv, ucv)
            + profile
                .curves
                .iter()
                .zip(&gains)
                .map(|(c, g)| g * c.value(flow_rate, usv, ucv))
                .sum::<f64>()
            + drift
    });
    if config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma).expect("sigma validated");
        intensity.mapv_inplace(|x| x + normal.sample(rng));
    }
    let humidity_noise = Normal::new(0.0, 0.005).expect("constant sigma");
    let humidity = 0.35 + config.humidity_trend * record_index as f64 + humidity_noise.sample(rng);
    let per_day = config.records_per_day().max(1) as u64;
    MeasurementRecord {
        id: format!("syn-{record_index:05}"),
        plot: DispersionPlot::new(usv_grid, ucv_grid, intensity).expect("grids follow the configuration"),
        chemical: profile.label.clone(),
        flow_rate,
        concentration: config.concentration,
        day_index: (record_index / per_day) as u32,
        seq_timestamp: record_index,
        humidity: Some(humidity),
    }
}

/// Balanced campaign: for every day, every profile, every flow rate in
/// increasing order. `seq_timestamp` is the generation index.
pub fn generate_dataset(config: &GeneratorConfig) -> Result<Dataset> {
    config.validate()?;
    let mut flows = config.flow_rates.clone();
    flows.sort_by(f64::total_cmp);
    let mut records = Vec::with_capacity(config.days as usize * config.records_per_day());
    let mut index = 0u64;
    for _day in 0..config.days {
        for profile in &config.profiles {
            for &flow in &flows {
                let mut rng = record_rng(config.seed, index);
                records.push(generate_plot(profile, flow, index, config, &mut rng));
                index += 1;
            }
        }
    }
    Dataset::new(config.instrument.clone(), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn quiet(days: u32) -> GeneratorConfig {
        GeneratorConfig {
            noise_sigma: 0.0,
            drift_per_record: 0.0,
            ..GeneratorConfig::campaign(7, days, 0.0)
        }
    }

    #[test]
    fn noiseless_curve_peak_is_amplitude_plus_background() {
        let mut config = quiet(1);
        let ucv = config.instrument.ucv_grid();
        // Constant peak path sitting exactly on grid column 120, far from the RIP.
        let profile = ChemicalProfile {
            label: Chemical::Carvone,
            curves: vec![AlphaCurveSpec {
                peak_path: vec![ucv[120]],
                amplitude: 3.0,
                width: 0.2,
                flow_gain: 0.5,
            }],
            rip_share: 0.5,
        };
        config.profiles = vec![profile.clone()];
        let r = generate_plot(&profile, REFERENCE_FLOW_SCCM, 0, &config, &mut record_rng(1, 0));
        let usv = config.instrument.usv_grid();
        for (i, row) in r.plot.intensity().rows().into_iter().enumerate() {
            let expected = 3.0 + profile.background(&config, usv[i], ucv[120]);
            assert_eq!(row[120], expected);
            let max = row.iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(max, expected);
        }
    }

    #[test]
    fn same_seed_same_plots() {
        let cfg = GeneratorConfig::campaign(11, 1, 0.1);
        let a = generate_dataset(&cfg).unwrap();
        let b = generate_dataset(&cfg).unwrap();
        assert_eq!(a, b);
        let other = generate_dataset(&GeneratorConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.records()[0].plot, other.records()[0].plot);
    }

    #[test]
    fn amplitude_grows_with_flow() {
        let curve = AlphaCurveSpec::parabola(2.0, -9.0, 0.8, 0.18, 0.3);
        assert_eq!(curve.amplitude_at(8.0), 0.8);
        assert!(curve.amplitude_at(128.0) > curve.amplitude_at(8.0));
        assert!((curve.amplitude_at(128.0) - 0.8 * 16f64.powf(0.3)).abs() < 1e-12);
    }

    #[test]
    fn parabola_coefficients_reproduce_vertex_form() {
        let curve = AlphaCurveSpec::parabola(2.0, -9.0, 1.0, 0.2, 0.0);
        for usv in [200.0, 456.41, 700.0] {
            let u = usv / 1000.0 - 0.2;
            assert!((curve.peak_ucv(usv) - (2.0 - 9.0 * u * u)).abs() < 1e-12);
        }
    }

    #[test]
    fn campaign_counts_and_balance() {
        let cfg = GeneratorConfig::campaign(3, 25, 0.0);
        let ds = generate_dataset(&cfg).unwrap();
        assert_eq!(ds.len(), 625);
        let mut counts: HashMap<(String, u64), u32> = HashMap::new();
        for r in ds.records() {
            *counts.entry((r.chemical.to_string(), r.flow_rate as u64)).or_default() += 1;
        }
        assert_eq!(counts.len(), 25);
        assert!(counts.values().all(|&c| c == 25));
        for (i, r) in ds.records().iter().enumerate() {
            assert_eq!(r.seq_timestamp, i as u64);
        }
    }

    #[test]
    fn single_record_campaign() {
        let mut cfg = GeneratorConfig::campaign(3, 1, 0.0);
        cfg.profiles.truncate(1);
        cfg.flow_rates = vec![32.0];
        assert_eq!(generate_dataset(&cfg).unwrap().len(), 1);
    }

    #[test]
    fn parallel_and_serial_streams_agree() {
        let cfg = GeneratorConfig::campaign(5, 2, 0.1);
        let ds = generate_dataset(&cfg).unwrap();
        // Regenerate record 37 alone from its derived stream.
        let profile = &cfg.profiles[(37 / 5) % 5];
        let flow = cfg.flow_rates[37 % 5];
        let r = generate_plot(profile, flow, 37, &cfg, &mut record_rng(cfg.seed, 37));
        assert_eq!(&r, &ds.records()[37]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = GeneratorConfig::campaign(1, 0, 0.0);
        assert!(generate_dataset(&cfg).is_err());
        cfg.days = 1;
        cfg.profiles[0].rip_share = 1.5;
        assert!(generate_dataset(&cfg).is_err());
        cfg.profiles[0].rip_share = 0.5;
        cfg.profiles[0].curves[0].width = 0.0;
        assert!(generate_dataset(&cfg).is_err());
    }

    #[test]
    fn missing_seed_names_field() {
        let mut v = serde_json::to_value(GeneratorConfig::campaign(1, 1, 0.0)).unwrap();
        v.as_object_mut().unwrap().remove("seed");
        let err = GeneratorConfig::from_json(&v.to_string()).unwrap_err();
        assert!(err.to_string().contains("seed"), "{err}");
    }
}
