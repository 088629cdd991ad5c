//! Seeded synthetic datasets: a seasonal target with nonlinear coupling to
//! exogenous drivers, plus noise.
//!
//! With `noise = 0` the target is exactly
//!
//! ```text
//! target = level + A·sin(2πt/P)
//!        + Bp·tanh(1.5·(pressure − 10)/2)
//!        + Bn·max((nitrite − 0.5)/0.2, 0)
//! ```
//!
//! evaluated on the column values as written.

use std::fmt::Write as _;

use chrono::{Duration, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{format_timestamp, ExoColumn, TimeSeries};
use crate::error::{Error, Result};

pub const EXOGENOUS_COLUMNS: [&str; 5] = ["temperature", "salinity", "oxygen", "nitrite", "pressure"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub length: usize,
    pub seed: u64,
    /// Season length in samples.
    pub period: f64,
    pub level: f64,
    pub season_amplitude: f64,
    pub pressure_coupling: f64,
    pub nitrite_coupling: f64,
    pub noise: f64,
    pub start_date: NaiveDate,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            length: 400,
            seed: 7,
            period: 60.0,
            level: 1.0,
            season_amplitude: 0.5,
            pressure_coupling: 0.4,
            nitrite_coupling: 0.15,
            noise: 0.1,
            start_date: NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date"),
        }
    }
}

impl SynthParams {
    /// Only the pressure column drives the target; salinity is pure noise.
    pub fn planted_driver() -> Self {
        Self {
            season_amplitude: 0.0,
            nitrite_coupling: 0.0,
            pressure_coupling: 1.0,
            noise: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::config("synthetic length must be at least 2"));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::config("period must be positive"));
        }
        let finite = [
            self.level,
            self.season_amplitude,
            self.pressure_coupling,
            self.nitrite_coupling,
            self.noise,
        ];
        if finite.iter().any(|v| !v.is_finite()) || self.noise < 0.0 {
            return Err(Error::config("synthetic amplitudes must be finite and noise non-negative"));
        }
        Ok(())
    }

    /// The noise-free target for sample `t`.
    pub fn signal(&self, t: usize, pressure: f64, nitrite: f64) -> f64 {
        let phase = 2.0 * std::f64::consts::PI * t as f64 / self.period;
        self.level
            + self.season_amplitude * phase.sin()
            + self.pressure_coupling * (1.5 * (pressure - 10.0) / 2.0).tanh()
            + self.nitrite_coupling * ((nitrite - 0.5) / 0.2).max(0.0)
    }
}

/// Unit-variance AR(1) path.
fn ar1(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let scale = (1.0 - phi * phi).sqrt();
    let mut out = Vec::with_capacity(n);
    let mut a: f64 = StandardNormal.sample(rng);
    for _ in 0..n {
        out.push(a);
        let e: f64 = StandardNormal.sample(rng);
        a = phi * a + scale * e;
    }
    out
}

fn white(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k);
    rng
}

pub fn generate(params: &SynthParams) -> Result<TimeSeries> {
    params.validate()?;
    let n = params.length;
    let seed = params.seed;
    let two_pi = 2.0 * std::f64::consts::PI;

    // separate streams so changing one amplitude leaves the other columns alone
    let temp_ar = ar1(&mut stream(seed, 1), n, 0.7);
    let sal_ar = ar1(&mut stream(seed, 2), n, 0.5);
    let oxy_w = white(&mut stream(seed, 3), n);
    let nit_ar = ar1(&mut stream(seed, 4), n, 0.9);
    let pres_ar = ar1(&mut stream(seed, 5), n, 0.8);
    let eps = white(&mut stream(seed, 6), n);

    let mut temperature = Vec::with_capacity(n);
    let mut salinity = Vec::with_capacity(n);
    let mut oxygen = Vec::with_capacity(n);
    let mut nitrite = Vec::with_capacity(n);
    let mut pressure = Vec::with_capacity(n);
    let mut target = Vec::with_capacity(n);
    for t in 0..n {
        let temp = 15.0 + 5.0 * (two_pi * t as f64 / params.period - 0.5).sin() + 0.5 * temp_ar[t];
        temperature.push(temp);
        salinity.push(33.0 + 0.3 * sal_ar[t]);
        oxygen.push(8.0 - 0.2 * (temp - 15.0) + 0.2 * oxy_w[t]);
        nitrite.push(0.5 + 0.2 * nit_ar[t]);
        pressure.push(10.0 + 2.0 * pres_ar[t]);
        let mut y = params.signal(t, pressure[t], nitrite[t]);
        if params.noise > 0.0 {
            y += params.noise * eps[t];
        }
        target.push(y);
    }

    let timestamps = (0..n)
        .map(|i| {
            params
                .start_date
                .checked_add_signed(Duration::days(i as i64))
                .map(|d| d.and_hms_opt(0, 0, 0).expect("midnight"))
                .ok_or_else(|| Error::config("date range overflows"))
        })
        .collect::<Result<Vec<_>>>()?;
    let exogenous = [temperature, salinity, oxygen, nitrite, pressure]
        .into_iter()
        .zip(EXOGENOUS_COLUMNS)
        .map(|(values, name)| ExoColumn { name: name.to_string(), values })
        .collect();
    TimeSeries::new("target", timestamps, target, exogenous)
}

/// CSV text with a `#` header documenting the parameters.
pub fn to_csv(params: &SynthParams, series: &TimeSeries) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# synthetic dataset, seed {}", params.seed);
    let _ = writeln!(
        out,
        "# target = {} + {}*sin(2*pi*t/{}) + {}*tanh(1.5*(pressure-10)/2) + {}*max((nitrite-0.5)/0.2,0) + {}*N(0,1)",
        params.level, params.season_amplitude, params.period, params.pressure_coupling, params.nitrite_coupling, params.noise
    );
    let _ = writeln!(
        out,
        "# temperature = 15 + 5*sin(2*pi*t/{} - 0.5) + 0.5*AR(0.7); salinity = 33 + 0.3*AR(0.5); \
         oxygen = 8 - 0.2*(temperature-15) + 0.2*N(0,1); nitrite = 0.5 + 0.2*AR(0.9); pressure = 10 + 2*AR(0.8)",
        params.period
    );
    let _ = writeln!(out, "# t counts rows from 0; AR(phi) is a unit-variance AR(1) process");
    out.push_str("date,target");
    for name in series.exo_names() {
        out.push(',');
        out.push_str(&name);
    }
    out.push('\n');
    let exo = series.exogenous();
    for i in 0..series.len() {
        let ts = format_timestamp(&series.timestamps()[i]);
        let _ = write!(out, "{ts},{}", series.target()[i]);
        for col in exo {
            let _ = write!(out, ",{}", col.values[i]);
        }
        out.push('\n');
    }
    out
}
