//! Seeded synthetic port-call generator.
//!
//! Turnaround is generated as the sum over the call's operations of
//! `base + rate * tonnage + noise`, plus a local day-of-week offset and a
//! berth offset, clamped below at one hour.

use chrono::{Datelike, NaiveDate, TimeZone, Utc};
use chrono_tz::Tz;
use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::DEFAULT_TIMEZONE;
use crate::portcall::{add_hours, CargoOperation, Dataset, PortCall, Provenance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CargoTypeSpec {
    pub name: String,
    pub fiscal_type: String,
    pub base_hours: f64,
    /// Hours per metric ton.
    pub rate_per_ton: f64,
    /// Standard deviation of the additive Gaussian noise, hours.
    pub noise_sd: f64,
    pub tonnage_min: f64,
    pub tonnage_max: f64,
    /// Relative draw frequency.
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerthSpec {
    pub name: String,
    pub offset_hours: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub cargo_types: Vec<CargoTypeSpec>,
    pub first_year: i32,
    pub n_years: u32,
    pub calls_per_year: usize,
    pub unload_probability: f64,
    pub load_probability: f64,
    pub berths: Vec<BerthSpec>,
    /// Offsets for local arrival weekday, Monday first.
    pub weekday_offsets_hours: [f64; 7],
    pub vessel_pool: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("no cargo types configured")]
    NoCargoTypes,
    #[error("zero years configured")]
    NoYears,
    #[error("invalid cargo type spec {0:?}")]
    BadCargoType(String),
    #[error("operation probabilities must lie in [0, 1] and not both be zero")]
    BadProbabilities,
}

fn cargo(
    name: &str,
    fiscal: &str,
    base: f64,
    rate: f64,
    noise: f64,
    tons: (f64, f64),
    weight: f64,
) -> CargoTypeSpec {
    CargoTypeSpec {
        name: name.into(),
        fiscal_type: fiscal.into(),
        base_hours: base,
        rate_per_ton: rate,
        noise_sd: noise,
        tonnage_min: tons.0,
        tonnage_max: tons.1,
        weight,
    }
}

impl Default for SynthConfig {
    /// A port with a few low-variance liquid cargoes and noisier bulk ones.
    fn default() -> Self {
        Self {
            cargo_types: vec![
                cargo("METHANOL", "LIQUID CHEM", 14.0, 0.0015, 2.0, (2000.0, 9000.0), 1.0),
                cargo("BUTADIENE", "LIQUID GAS", 12.0, 0.0020, 2.5, (1500.0, 6000.0), 0.8),
                cargo("CONTAINERS", "GENERAL", 18.0, 0.0010, 4.0, (1000.0, 8000.0), 1.5),
                cargo("SOYA OIL", "VEG OIL", 20.0, 0.0025, 6.0, (2000.0, 10000.0), 1.0),
                cargo("BULK UREA", "FERTILIZER", 26.0, 0.0040, 12.0, (3000.0, 12000.0), 1.0),
                cargo("BULK WHEAT", "CEREALS", 24.0, 0.0035, 10.0, (5000.0, 30000.0), 1.5),
                cargo("SUNFLOWER BULK", "OILSEEDS", 30.0, 0.0060, 25.0, (3000.0, 15000.0), 0.7),
                cargo("SCRAP", "METALS", 28.0, 0.0045, 15.0, (2000.0, 20000.0), 0.8),
            ],
            first_year: 2008,
            n_years: 11,
            calls_per_year: 500,
            unload_probability: 0.7,
            load_probability: 0.5,
            berths: vec![
                BerthSpec { name: "BASSENS 1".into(), offset_hours: 0.0 },
                BerthSpec { name: "BASSENS 2".into(), offset_hours: 2.0 },
                BerthSpec { name: "AMBES".into(), offset_hours: -1.0 },
                BerthSpec { name: "BLAYE".into(), offset_hours: 4.0 },
                BerthSpec { name: "VERDON".into(), offset_hours: 6.0 },
            ],
            weekday_offsets_hours: [0.0, 0.0, 1.0, 2.0, 10.0, 14.0, 4.0],
            vessel_pool: 400,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<(), SynthError> {
        if self.cargo_types.is_empty() {
            return Err(SynthError::NoCargoTypes);
        }
        if self.n_years == 0 {
            return Err(SynthError::NoYears);
        }
        for c in &self.cargo_types {
            let ok = !c.name.trim().is_empty()
                && c.tonnage_min >= 0.0
                && c.tonnage_max >= c.tonnage_min
                && c.noise_sd >= 0.0
                && c.weight > 0.0;
            if !ok {
                return Err(SynthError::BadCargoType(c.name.clone()));
            }
        }
        let p_ok = |p: f64| (0.0..=1.0).contains(&p);
        if !p_ok(self.unload_probability)
            || !p_ok(self.load_probability)
            || self.unload_probability + self.load_probability == 0.0
        {
            return Err(SynthError::BadProbabilities);
        }
        Ok(())
    }
}

struct Draw<'a> {
    spec: &'a CargoTypeSpec,
    tonnage: f64,
    berth: Option<&'a BerthSpec>,
}

fn draw_op<'a>(config: &'a SynthConfig, weights: &WeightedIndex<f64>, rng: &mut ChaCha8Rng) -> Draw<'a> {
    let spec = &config.cargo_types[weights.sample(rng)];
    let tonnage = if spec.tonnage_max > spec.tonnage_min {
        rng.random_range(spec.tonnage_min..=spec.tonnage_max).round()
    } else {
        spec.tonnage_min
    };
    let berth = if config.berths.is_empty() {
        None
    } else {
        Some(&config.berths[rng.random_range(0..config.berths.len())])
    };
    Draw { spec, tonnage, berth }
}

/// Generates a dataset sorted by arrival. Pure function of `(config, seed)`.
pub fn synthesize_dataset(config: &SynthConfig, seed: u64) -> Result<Dataset, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = WeightedIndex::new(config.cargo_types.iter().map(|c| c.weight))
        .map_err(|_| SynthError::NoCargoTypes)?;
    let tz: Tz = DEFAULT_TIMEZONE;

    let mut drafts = Vec::with_capacity(config.calls_per_year * config.n_years as usize);
    for y in 0..config.n_years {
        let year = config.first_year + y as i32;
        let start = Utc.from_utc_datetime(
            &NaiveDate::from_ymd_opt(year, 1, 1)
                .expect("valid year")
                .and_hms_opt(0, 0, 0)
                .expect("midnight"),
        );
        let days = if NaiveDate::from_ymd_opt(year, 2, 29).is_some() { 366 } else { 365 };
        let span_minutes = days * 24 * 60;
        for _ in 0..config.calls_per_year {
            let arrival = start + chrono::Duration::minutes(rng.random_range(0..span_minutes));

            let mut has_unload = rng.random_bool(config.unload_probability);
            let mut has_load = rng.random_bool(config.load_probability);
            if !has_unload && !has_load {
                if config.unload_probability > 0.0 {
                    has_unload = true;
                } else {
                    has_load = true;
                }
            }
            let unload = has_unload.then(|| draw_op(config, &weights, &mut rng));
            let load = has_load.then(|| draw_op(config, &weights, &mut rng));

            let weekday = arrival.with_timezone(&tz).weekday().num_days_from_monday() as usize;
            let mut hours = config.weekday_offsets_hours[weekday];
            for d in unload.iter().chain(load.iter()) {
                hours += d.spec.base_hours + d.spec.rate_per_ton * d.tonnage;
                if let Some(b) = d.berth {
                    hours += b.offset_hours;
                }
                if d.spec.noise_sd > 0.0 {
                    let normal = Normal::new(0.0, d.spec.noise_sd).expect("finite sd");
                    hours += normal.sample(&mut rng);
                }
            }
            let hours = hours.max(1.0);
            let vessel = rng.random_range(0..config.vessel_pool.max(1));

            let to_op = |d: Draw<'_>| CargoOperation {
                cargo_type: Some(d.spec.name.clone()),
                fiscal_cargo_type: Some(d.spec.fiscal_type.clone()),
                tonnage: Some(d.tonnage),
                berth: d.berth.map(|b| b.name.clone()),
            };
            drafts.push(PortCall {
                call_id: String::new(),
                vessel_id: format!("IMO{:07}", 9_000_000 + vessel),
                arrival: Some(arrival),
                departure: Some(add_hours(arrival, hours)),
                unload: unload.map(to_op),
                load: load.map(to_op),
            });
        }
    }
    drafts.sort_by_key(|c| c.arrival);
    for (i, c) in drafts.iter_mut().enumerate() {
        c.call_id = format!("SYN{:06}", i + 1);
    }
    Ok(Dataset::new(
        drafts,
        Provenance {
            source: format!("synthetic(seed={seed})"),
            ingested_at: None,
        },
    )
    .expect("generator emits valid calls"))
}
