//! Synthetic trace generators: diurnal solar production per power domain
//! and background load per client.
//!
//! Solar traces follow a half-sine day curve sampled at the source
//! resolution (5 minutes) and held constant in between. Phase offsets are
//! quantized to the sample grid so the midday peak is always a sampled
//! value and `max(values) == peak_watts * timestep_minutes` holds exactly.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::trace::TraceSeries;

pub const MINUTES_PER_DAY: u32 = 24 * 60;
const SOLAR_SOURCE_MINUTES: u32 = 5;
const BASE_SUNRISE_MINUTE: f64 = 6.0 * 60.0;
const BASE_SUNSET_MINUTE: f64 = 18.0 * 60.0;
/// Day length jitter bound, in minutes, applied symmetrically around noon.
const DAYLIGHT_JITTER_MINUTES: i32 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolarScenarioKind {
    /// Diurnal peaks staggered across domains so the fleet spans timezones.
    Global,
    /// All domains share the same local time.
    CoLocated,
}

/// Generates one excess-energy trace per power domain. Values are
/// watt-minutes per timestep covering `days` simulated days.
pub fn generate_solar_traces(
    kind: SolarScenarioKind,
    num_domains: usize,
    days: u32,
    peak_watts: f64,
    timestep_minutes: u32,
    seed: u64,
) -> Vec<TraceSeries> {
    assert!(num_domains >= 1);
    assert!(days >= 1);
    assert!(peak_watts >= 0.0);
    assert!(timestep_minutes >= 1);

    // Sample stride in minutes: the 5-minute source grid when the timestep
    // divides it, otherwise one sample per timestep.
    let stride_minutes = if timestep_minutes < SOLAR_SOURCE_MINUTES
        && SOLAR_SOURCE_MINUTES % timestep_minutes == 0
    {
        SOLAR_SOURCE_MINUTES
    } else {
        timestep_minutes
    };
    let native_resolution = stride_minutes / timestep_minutes;
    let total_minutes = days * MINUTES_PER_DAY;
    let samples = (total_minutes / stride_minutes) as usize;

    (0..num_domains)
        .map(|domain| {
            let phase = match kind {
                SolarScenarioKind::CoLocated => 0,
                SolarScenarioKind::Global => {
                    let raw = domain as u32 * MINUTES_PER_DAY / num_domains as u32;
                    raw / stride_minutes * stride_minutes
                }
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (domain as u64).wrapping_mul(0x9e37));
            // Per-day symmetric sunrise/sunset jitter, quantized to the grid.
            let jitter: Vec<f64> = (0..days)
                .map(|_| {
                    let steps = DAYLIGHT_JITTER_MINUTES / stride_minutes as i32;
                    let j = rng.random_range(-steps..=steps);
                    (j * stride_minutes as i32) as f64
                })
                .collect();
            let values = (0..samples)
                .map(|i| {
                    let minute = i as u64 * stride_minutes as u64;
                    let local = (minute + phase as u64) % MINUTES_PER_DAY as u64;
                    let day = (minute / MINUTES_PER_DAY as u64) as usize % jitter.len();
                    let sunrise = BASE_SUNRISE_MINUTE + jitter[day];
                    let sunset = BASE_SUNSET_MINUTE - jitter[day];
                    let watts = solar_watts(local as f64, sunrise, sunset, peak_watts);
                    watts * timestep_minutes as f64
                })
                .collect();
            TraceSeries::new(0, values, native_resolution)
        })
        .collect()
}

fn solar_watts(local_minute: f64, sunrise: f64, sunset: f64, peak: f64) -> f64 {
    if local_minute <= sunrise || local_minute >= sunset {
        return 0.0;
    }
    let x = (local_minute - sunrise) / (sunset - sunrise);
    peak * (std::f64::consts::PI * x).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LoadKind {
    /// No background load; full capacity is spare.
    #[default]
    Idle,
    /// Hourly utilization blocks with a business-hours bump.
    Diurnal,
}

/// Generates one utilization trace per client (fractions in `[0, 1]`,
/// hourly blocks). Returns `None` entries for idle clients.
pub fn generate_load_traces(
    kind: LoadKind,
    num_clients: usize,
    days: u32,
    timestep_minutes: u32,
    seed: u64,
) -> Vec<Option<TraceSeries>> {
    match kind {
        LoadKind::Idle => vec![None; num_clients],
        LoadKind::Diurnal => (0..num_clients)
            .map(|client| {
                Some(diurnal_load(client, days, timestep_minutes, seed))
            })
            .collect(),
    }
}

fn diurnal_load(client: usize, days: u32, timestep_minutes: u32, seed: u64) -> TraceSeries {
    let stride_minutes = if timestep_minutes <= 60 && 60 % timestep_minutes == 0 {
        60
    } else {
        timestep_minutes
    };
    let native_resolution = stride_minutes / timestep_minutes;
    let samples = (days * MINUTES_PER_DAY / stride_minutes) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (client as u64).wrapping_mul(0x51eb));
    let base: f64 = rng.random_range(0.15..0.65);
    let values = (0..samples)
        .map(|i| {
            let minute = i as u64 * stride_minutes as u64 % MINUTES_PER_DAY as u64;
            let hour = minute / 60;
            // Occasional near-saturating jobs on top of the diurnal level,
            // the way shared cluster machines fill up for whole hours.
            if rng.random_range(0.0..1.0) < 0.15 {
                return rng.random_range(0.85..1.0);
            }
            let bump = if (9..17).contains(&hour) { 0.25 } else { 0.0 };
            let noise: f64 = rng.random_range(-0.15..0.15);
            (base + bump + noise).clamp(0.0, 1.0)
        })
        .collect();
    TraceSeries::new(0, values, native_resolution)
}
