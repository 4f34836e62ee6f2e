use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Trace, TraceError};
use crate::domain::{seed, EapId, Request, ServiceSpec, SimConfig};

/// Synthetic arrival pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatternKind {
    /// Sinusoidal load on CPU-heavy services, four periods per trace.
    P1,
    /// Sinusoidal load on memory-heavy services.
    P2,
    /// Like `P1` at twice the frequency.
    P3,
    /// Stationary arrivals with random per-service rates.
    P4,
}

impl PatternKind {
    pub const ALL: [PatternKind; 4] = [Self::P1, Self::P2, Self::P3, Self::P4];
}

impl FromStr for PatternKind {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "p1" => Ok(Self::P1),
            "p2" => Ok(Self::P2),
            "p3" => Ok(Self::P3),
            "p4" => Ok(Self::P4),
            _ => Err(TraceError::UnknownPattern(s.to_string())),
        }
    }
}

impl fmt::Display for PatternKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::P1 => "p1",
            Self::P2 => "p2",
            Self::P3 => "p3",
            Self::P4 => "p4",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    /// Mean arrivals per second summed over all services.
    pub intensity: f64,
    /// Relative sinusoid amplitude, in `[0, 1]`.
    pub amplitude: f64,
    /// Deadline as a multiple of the service's mean work.
    pub deadline_factor: f64,
    /// Log-normal spread of per-request work.
    pub work_sigma: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            intensity: 6.0,
            amplitude: 0.8,
            deadline_factor: 1.5,
            work_sigma: 0.2,
        }
    }
}

/// Services whose cpu/mem ratio is at or above the median ratio.
pub fn cpu_heavy_services(services: &[ServiceSpec]) -> Vec<bool> {
    let ratios: Vec<f64> = services
        .iter()
        .map(|s| s.cpu_per_replica / s.mem_per_replica)
        .collect();
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    ratios.iter().map(|&r| r >= median).collect()
}

/// Generates `frames` frames of arrivals via Poisson thinning. Arrival
/// times and deadlines are whole milliseconds so the result survives a CSV
/// round trip unchanged.
pub fn generate_pattern(
    kind: PatternKind,
    frames: usize,
    workload: &WorkloadConfig,
    config: &SimConfig,
    seed_value: u64,
) -> Result<Trace, TraceError> {
    if frames == 0 {
        return Err(TraceError::InvalidParameter(
            "duration must be at least one frame".into(),
        ));
    }
    if !(workload.intensity.is_finite() && workload.intensity >= 0.0) {
        return Err(TraceError::InvalidParameter(format!(
            "intensity must be >= 0, got {}",
            workload.intensity
        )));
    }
    if !(0.0..=1.0).contains(&workload.amplitude) {
        return Err(TraceError::InvalidParameter(
            "amplitude must lie in [0, 1]".into(),
        ));
    }
    if !(workload.deadline_factor.is_finite() && workload.deadline_factor > 0.0) {
        return Err(TraceError::InvalidParameter(
            "deadline_factor must be > 0".into(),
        ));
    }
    let frame_seconds = config.frame_seconds();
    let duration = frames as f64 * frame_seconds;
    let services = &config.services;
    let w = services.len();
    let num_eaps = config.topology.num_eaps();
    let mut arrivals_rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, 0xA221_7A15));
    let mut attr_rng = ChaCha8Rng::seed_from_u64(seed::derive(seed_value, 0xA771_B075));

    let base = workload.intensity / w as f64;
    let heavy = cpu_heavy_services(services);
    let base_rates: Vec<f64> = match kind {
        PatternKind::P4 => {
            let draws: Vec<f64> = (0..w).map(|_| Exp1.sample(&mut arrivals_rng)).collect();
            let total: f64 = draws.iter().sum();
            draws
                .iter()
                .map(|d| workload.intensity * d / total)
                .collect()
        }
        _ => vec![base; w],
    };
    let period = duration / 4.0;
    let (fluctuates, frequency): (Vec<bool>, f64) = match kind {
        PatternKind::P1 => (heavy.clone(), 1.0 / period),
        PatternKind::P2 => (heavy.iter().map(|h| !h).collect(), 1.0 / period),
        PatternKind::P3 => (heavy.clone(), 2.0 / period),
        PatternKind::P4 => (vec![false; w], 0.0),
    };
    let amp = workload.amplitude;
    let rate = |s: usize, t: f64| {
        if fluctuates[s] {
            base_rates[s] * (1.0 + amp * (TAU * frequency * t).sin())
        } else {
            base_rates[s]
        }
    };
    let max_rates: Vec<f64> = (0..w)
        .map(|s| {
            if fluctuates[s] {
                base_rates[s] * (1.0 + amp)
            } else {
                base_rates[s]
            }
        })
        .collect();
    let total_max: f64 = max_rates.iter().sum();

    let mut requests = Vec::new();
    if total_max > 0.0 {
        let gap = Exp::new(total_max).expect("positive rate");
        let mut t = 0.0;
        loop {
            t += gap.sample(&mut arrivals_rng);
            if t >= duration {
                break;
            }
            let mut pick = arrivals_rng.random::<f64>() * total_max;
            let mut s = 0;
            while s + 1 < w && pick >= max_rates[s] {
                pick -= max_rates[s];
                s += 1;
            }
            let accept = arrivals_rng.random::<f64>() * max_rates[s];
            if accept >= rate(s, t) {
                continue;
            }
            let spec = &services[s];
            let noise: f64 = StandardNormal.sample(&mut attr_rng);
            let work = spec.work_units * (workload.work_sigma * noise).exp();
            let jitter = 1.0 + 0.1 * (2.0 * attr_rng.random::<f64>() - 1.0);
            let deadline_ms = ((workload.deadline_factor * spec.work_units * jitter) * 1000.0)
                .round()
                .max(1.0);
            let eap = EapId::from_index(attr_rng.random_range(0..num_eaps));
            requests.push(Request {
                id: requests.len() as u64,
                service: spec.id,
                arrival_time: (t * 1000.0).floor() / 1000.0,
                deadline: deadline_ms / 1000.0,
                work,
                admitting_eap: eap,
            });
        }
    }
    Ok(Trace {
        requests,
        frames,
        frame_seconds,
        boundaries: Vec::new(),
    })
}
