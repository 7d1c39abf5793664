//! Synthetic heterogeneous fleets with labelled behaviour archetypes.
//!
//! Each turbine's wind speed is an AR(1) anomaly around an archetype mean,
//! mixing a fleet-wide weather component with a local one, plus a diurnal
//! cycle. Power follows a logistic curve scaled by capacity, is gated to zero
//! by Bernoulli shutdowns and perturbed by additive noise.

use std::f64::consts::PI;

use chrono::{NaiveDate, NaiveDateTime};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DataError, Fleet, Result, TurbineMeta, TurbineSeries, POWER_SLACK};
use crate::rng::{self, Stream};

/// Parameters of one archetype. Jitter fields are standard deviations of the
/// per-turbine perturbation of the corresponding parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchetypeParams {
    pub capacity_kw: f64,
    /// Relative standard deviation of capacity.
    pub capacity_jitter: f64,
    pub age_min: f64,
    pub age_max: f64,
    /// Mean wind speed (m/s).
    pub mean_wind: f64,
    pub wind_jitter: f64,
    /// Stationary standard deviation of the wind anomaly (m/s).
    pub wind_sd: f64,
    /// AR(1) coefficient of the hourly wind anomaly.
    pub ar_coef: f64,
    /// Amplitude of the diurnal wind cycle (m/s).
    pub diurnal_amp: f64,
    /// Wind speed at half of rated output (m/s).
    pub rated_wind: f64,
    /// Logistic steepness of the power curve (1/(m/s)).
    pub curve_slope: f64,
    /// Fraction of capacity reachable at full wind (curtailment when < 1).
    pub derate: f64,
    pub derate_jitter: f64,
    /// Per-hour probability of a shutdown (power forced to zero).
    pub shutdown_prob: f64,
    pub shutdown_jitter: f64,
    /// Standard deviation of additive power noise, as a fraction of capacity.
    pub ramp_noise: f64,
    /// Relative standard deviation of `ramp_noise` across turbines.
    pub noise_jitter: f64,
    /// Optional site centre (UTM metres); turbines scatter around it.
    pub site: Option<[f64; 2]>,
    pub site_radius: f64,
}

impl Default for ArchetypeParams {
    fn default() -> Self {
        Self {
            capacity_kw: 500.0,
            capacity_jitter: 0.05,
            age_min: 0.0,
            age_max: 20.0,
            mean_wind: 7.0,
            wind_jitter: 0.3,
            wind_sd: 2.5,
            ar_coef: 0.9,
            diurnal_amp: 1.0,
            rated_wind: 9.0,
            curve_slope: 0.8,
            derate: 1.0,
            derate_jitter: 0.0,
            shutdown_prob: 0.02,
            shutdown_jitter: 0.0,
            ramp_noise: 0.03,
            noise_jitter: 0.0,
            site: None,
            site_radius: 5_000.0,
        }
    }
}

impl ArchetypeParams {
    fn validate(&self, name: &str) -> Result<()> {
        let fail = |what: &str| Err(DataError::InvalidParams(format!("{name}: {what}")));
        let sds = [
            ("capacity_jitter", self.capacity_jitter),
            ("wind_jitter", self.wind_jitter),
            ("wind_sd", self.wind_sd),
            ("diurnal_amp", self.diurnal_amp),
            ("derate_jitter", self.derate_jitter),
            ("shutdown_jitter", self.shutdown_jitter),
            ("ramp_noise", self.ramp_noise),
            ("noise_jitter", self.noise_jitter),
            ("site_radius", self.site_radius),
        ];
        for (field, v) in sds {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(&format!("{field} must be a non-negative finite deviation, got {v}"));
            }
        }
        if !(self.capacity_kw > 0.0) {
            return fail("capacity_kw must be positive");
        }
        if !(0.0..=1.0).contains(&self.shutdown_prob) {
            return fail("shutdown_prob outside [0, 1]");
        }
        if !(self.ar_coef > -1.0 && self.ar_coef < 1.0) {
            return fail("ar_coef outside (-1, 1)");
        }
        if !(self.derate > 0.0 && self.derate <= POWER_SLACK) {
            return fail("derate outside (0, 1.2]");
        }
        if !(self.age_min >= 0.0 && self.age_min <= self.age_max) {
            return fail("age range invalid");
        }
        if !(self.curve_slope > 0.0) {
            return fail("curve_slope must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeSpec {
    pub archetype: String,
    pub count: usize,
    #[serde(default)]
    pub params: ArchetypeParams,
}

/// The `fleet.json` document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetSpec {
    pub archetypes: Vec<ArchetypeSpec>,
    pub n_steps: usize,
    pub seed: u64,
    /// First timestamp; defaults to 2021-01-01T00:00:00.
    #[serde(default)]
    pub start: Option<NaiveDateTime>,
    /// Side of the square over which site-less turbines are scattered (m).
    #[serde(default = "default_extent")]
    pub extent_m: f64,
    /// Share of wind anomaly variance common to the whole fleet.
    #[serde(default = "default_weather_share")]
    pub weather_share: f64,
}

fn default_extent() -> f64 {
    50_000.0
}

fn default_weather_share() -> f64 {
    0.8
}

impl FleetSpec {
    pub fn new(archetypes: Vec<ArchetypeSpec>, n_steps: usize, seed: u64) -> Self {
        Self {
            archetypes,
            n_steps,
            seed,
            start: None,
            extent_m: default_extent(),
            weather_share: default_weather_share(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Three separable archetypes (`high_var`, `stable`, `low_output`) in a
    /// 40/35/25 split of `n_turbines`, scattered over the whole extent.
    pub fn three_archetypes(n_turbines: usize, n_steps: usize, seed: u64) -> Self {
        let high = (n_turbines * 40 + 50) / 100;
        let stable = (n_turbines * 35 + 50) / 100;
        let low = n_turbines.saturating_sub(high + stable);
        let base = ArchetypeParams {
            capacity_jitter: 0.03,
            wind_jitter: 0.3,
            noise_jitter: 0.5,
            shutdown_jitter: 0.01,
            derate_jitter: 0.08,
            ..Default::default()
        };
        let archetypes = [
            (
                "high_var",
                high,
                ArchetypeParams {
                    mean_wind: 8.5,
                    wind_sd: 3.0,
                    ramp_noise: 0.05,
                    ..base.clone()
                },
            ),
            (
                "stable",
                stable,
                ArchetypeParams {
                    mean_wind: 6.0,
                    ramp_noise: 0.02,
                    ..base.clone()
                },
            ),
            (
                "low_output",
                low,
                ArchetypeParams {
                    derate: 0.5,
                    shutdown_prob: 0.25,
                    shutdown_jitter: 0.02,
                    ..base.clone()
                },
            ),
        ]
        .into_iter()
        .filter(|(_, count, _)| *count > 0)
        .map(|(name, count, params)| ArchetypeSpec {
            archetype: name.into(),
            count,
            params,
        })
        .collect();
        Self::new(archetypes, n_steps, seed)
    }
}

fn normal(rng: &mut Stream) -> f64 {
    rng.sample(StandardNormal)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Weather {
    anomaly: Vec<f64>,
    direction: Vec<f64>,
}

fn shared_weather(spec: &FleetSpec, phi: f64) -> Weather {
    let mut rng = rng::stream(spec.seed, &[1]);
    let n = spec.n_steps;
    let innov = (1.0 - phi * phi).sqrt();
    let mut anomaly = Vec::with_capacity(n);
    let mut direction = Vec::with_capacity(n);
    let mut z = normal(&mut rng);
    let mut dir = rng.random::<f64>() * 360.0;
    for _ in 0..n {
        anomaly.push(z);
        direction.push(dir);
        z = phi * z + innov * normal(&mut rng);
        dir = (dir + 8.0 * normal(&mut rng)).rem_euclid(360.0);
    }
    Weather { anomaly, direction }
}

fn wrap_degrees(d: f64) -> f64 {
    let d = d.rem_euclid(360.0);
    if d >= 360.0 {
        0.0
    } else {
        d
    }
}

/// Generates a fleet from `spec`. Identical specs give identical fleets.
pub fn generate_synthetic_fleet(spec: &FleetSpec) -> Result<Fleet> {
    if spec.archetypes.is_empty() {
        return Err(DataError::EmptyFleet);
    }
    if spec.n_steps < 2 {
        return Err(DataError::InvalidParams("n_steps must be at least 2".into()));
    }
    if !(0.0..=1.0).contains(&spec.weather_share) {
        return Err(DataError::InvalidParams("weather_share outside [0, 1]".into()));
    }
    if !(spec.extent_m >= 0.0) {
        return Err(DataError::InvalidParams("extent_m must be non-negative".into()));
    }
    for a in &spec.archetypes {
        if a.count == 0 {
            return Err(DataError::InvalidParams(format!("{}: count must be >= 1", a.archetype)));
        }
        a.params.validate(&a.archetype)?;
    }
    let start = spec.start.unwrap_or_else(|| {
        NaiveDate::from_ymd_opt(2021, 1, 1)
            .expect("valid date")
            .and_hms_opt(0, 0, 0)
            .expect("valid time")
    });

    // All archetypes share the weather's persistence; the first archetype's
    // coefficient sets it.
    let weather = shared_weather(spec, spec.archetypes[0].params.ar_coef);
    let mut turbines = Vec::new();
    let mut index = 0u64;
    for a in &spec.archetypes {
        for _ in 0..a.count {
            let mut rng = rng::stream(spec.seed, &[2, index]);
            let id = format!("T{index:04}");
            turbines.push(generate_turbine(spec, a, id, start, &weather, &mut rng));
            index += 1;
        }
    }
    Fleet::new(turbines)
}

fn generate_turbine(
    spec: &FleetSpec,
    a: &ArchetypeSpec,
    id: String,
    start: NaiveDateTime,
    weather: &Weather,
    rng: &mut Stream,
) -> TurbineSeries {
    let p = &a.params;
    let capacity = (p.capacity_kw * (1.0 + p.capacity_jitter * normal(rng))).max(0.1 * p.capacity_kw);
    let age = p.age_min + (p.age_max - p.age_min) * rng.random::<f64>();
    let (utm_x, utm_y) = match p.site {
        Some([cx, cy]) => (
            cx + p.site_radius * normal(rng),
            cy + p.site_radius * normal(rng),
        ),
        None => (
            spec.extent_m * rng.random::<f64>(),
            spec.extent_m * rng.random::<f64>(),
        ),
    };
    let mean_wind = p.mean_wind + p.wind_jitter * normal(rng);
    let derate = (p.derate + p.derate_jitter * normal(rng)).clamp(0.05, POWER_SLACK);
    let shutdown = (p.shutdown_prob + p.shutdown_jitter * normal(rng)).clamp(0.0, 1.0);
    let noise = (p.ramp_noise * (1.0 + p.noise_jitter * normal(rng))).max(0.0);
    let temp_offset = normal(rng);
    let dir_offset = 10.0 * normal(rng);

    let share = spec.weather_share.sqrt();
    let local_share = (1.0 - spec.weather_share).sqrt();
    let innov = (1.0 - p.ar_coef * p.ar_coef).sqrt();
    let n = spec.n_steps;
    let mut power = Vec::with_capacity(n);
    let mut wind_speed = Vec::with_capacity(n);
    let mut wind_dir = Vec::with_capacity(n);
    let mut temperature = Vec::with_capacity(n);
    let mut local = normal(rng);
    let c = p.ar_coef;
    for t in 0..n {
        let at = start + chrono::Duration::hours(t as i64);
        let hour = chrono::Timelike::hour(&at) as f64;
        let diurnal = (2.0 * PI * (hour - 9.0) / 24.0).sin();
        let season = (2.0 * PI * t as f64 / 8760.0).cos();

        let anomaly = share * weather.anomaly[t] + local_share * local;
        local = c * local + innov * normal(rng);
        let w = (mean_wind + p.wind_sd * anomaly + p.diurnal_amp * diurnal + 0.8 * season).max(0.0);

        let curve = capacity * derate * logistic(p.curve_slope * (w - p.rated_wind));
        let eps = normal(rng);
        let off = rng.random::<f64>() < shutdown;
        let pw = if off {
            0.0
        } else {
            (curve + noise * capacity * eps).clamp(0.0, capacity * POWER_SLACK)
        };

        power.push(pw);
        wind_speed.push(w);
        wind_dir.push(wrap_degrees(weather.direction[t] + dir_offset));
        temperature.push(8.0 - 9.0 * season + 3.0 * diurnal + temp_offset + 0.8 * normal(rng));
    }

    TurbineSeries {
        meta: TurbineMeta {
            id,
            capacity_kw: capacity,
            age,
            utm_x,
            utm_y,
            archetype: Some(a.archetype.clone()),
        },
        start,
        power,
        wind_speed,
        wind_dir,
        temperature,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(archetypes: Vec<ArchetypeSpec>, n: usize, seed: u64) -> FleetSpec {
        FleetSpec::new(archetypes, n, seed)
    }

    fn arch(name: &str, count: usize, params: ArchetypeParams) -> ArchetypeSpec {
        ArchetypeSpec {
            archetype: name.into(),
            count,
            params,
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let s = spec(vec![arch("a", 3, ArchetypeParams::default())], 500, 9);
        let a = generate_synthetic_fleet(&s).unwrap();
        let b = generate_synthetic_fleet(&s).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_fleet(&spec(s.archetypes.clone(), 500, 10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn faulty_zero_ratio_is_calibrated() {
        // ±0.01 is about 1.9 binomial standard deviations at p = 0.5 over one
        // year, so the mid-range probabilities use four years.
        for (p, steps) in [(0.999, 8760), (0.5, 4 * 8760), (0.3, 4 * 8760)] {
            let params = ArchetypeParams {
                shutdown_prob: p,
                mean_wind: 12.0,
                ramp_noise: 0.0,
                ..Default::default()
            };
            let f = generate_synthetic_fleet(&spec(vec![arch("faulty", 2, params)], steps, 3)).unwrap();
            for t in f.turbines() {
                let zeros = t.power.iter().filter(|&&x| x == 0.0).count() as f64 / t.len() as f64;
                assert!((zeros - p).abs() <= 0.01, "p={p} zero ratio {zeros}");
            }
        }
    }

    #[test]
    fn rejects_invalid_params() {
        let bad = ArchetypeParams {
            wind_sd: -1.0,
            ..Default::default()
        };
        assert!(matches!(
            generate_synthetic_fleet(&spec(vec![arch("x", 1, bad)], 100, 1)),
            Err(DataError::InvalidParams(_))
        ));
        let bad = ArchetypeParams {
            shutdown_prob: 1.5,
            ..Default::default()
        };
        assert!(generate_synthetic_fleet(&spec(vec![arch("x", 1, bad)], 100, 1)).is_err());
        assert!(generate_synthetic_fleet(&spec(vec![arch("x", 0, Default::default())], 100, 1)).is_err());
    }

    #[test]
    fn fleet_json_round_trip() {
        let text = r#"{"seed": 4, "n_steps": 48,
            "archetypes": [{"archetype": "stable", "count": 2, "params": {"mean_wind": 6.5}}]}"#;
        let s = FleetSpec::from_json(text).unwrap();
        assert_eq!(s.archetypes[0].params.mean_wind, 6.5);
        assert_eq!(s.archetypes[0].params.capacity_kw, 500.0);
        let f = generate_synthetic_fleet(&s).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f.n_steps(), 48);
        assert_eq!(f.turbines()[1].meta.archetype.as_deref(), Some("stable"));
    }
}
