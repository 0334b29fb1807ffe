use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::SettingsError;

/// Inverse-time curve `t = T (k / ((I/Is)^α - 1) + L)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmtCurve {
    pub name: &'static str,
    pub standard: &'static str,
    pub k: f64,
    pub alpha: f64,
    pub l: f64,
}

macro_rules! curve {
    ($name:expr, $std:expr, $k:expr, $a:expr, $l:expr) => {
        IdmtCurve {
            name: $name,
            standard: $std,
            k: $k,
            alpha: $a,
            l: $l,
        }
    };
}

pub const AREVA_SHORT_TIME_INVERSE: IdmtCurve =
    curve!("areva_short_time_inverse", "AREVA", 0.05, 0.04, 0.0);
pub const IEC_STANDARD_INVERSE: IdmtCurve = curve!("standard_inverse", "IEC", 0.14, 0.02, 0.0);
pub const IEC_VERY_INVERSE: IdmtCurve = curve!("very_inverse", "IEC", 1.5, 1.0, 0.0);
pub const IEC_EXTREMELY_INVERSE: IdmtCurve = curve!("extremely_inverse", "IEC", 80.0, 2.0, 0.0);
pub const AREVA_LONG_TIME_INVERSE: IdmtCurve =
    curve!("areva_long_time_inverse", "AREVA", 120.0, 1.0, 0.0);
pub const CO2_SHORT_TIME_INVERSE: IdmtCurve =
    curve!("co2_short_time_inverse", "CO2", 0.023, 0.02, 0.016);
pub const IEEE_MODERATELY_INVERSE: IdmtCurve =
    curve!("ieee_moderately_inverse", "ANSI/IEEE", 0.051, 0.02, 0.011);
pub const CO2_LONG_TIME_INVERSE: IdmtCurve =
    curve!("co2_long_time_inverse", "CO2", 9.95, 2.0, 0.18);
pub const IEEE_VERY_INVERSE: IdmtCurve = curve!("ieee_very_inverse", "ANSI/IEEE", 19.61, 2.0, 0.49);
pub const IEEE_EXTREMELY_INVERSE: IdmtCurve =
    curve!("ieee_extremely_inverse", "ANSI/IEEE", 28.2, 2.0, 0.12);
pub const RECTIFIER: IdmtCurve = curve!("rectifier", "RECT", 45900.0, 5.6, 0.0);

pub const IDMT_CURVES: [IdmtCurve; 11] = [
    AREVA_SHORT_TIME_INVERSE,
    IEC_STANDARD_INVERSE,
    IEC_VERY_INVERSE,
    IEC_EXTREMELY_INVERSE,
    AREVA_LONG_TIME_INVERSE,
    CO2_SHORT_TIME_INVERSE,
    IEEE_MODERATELY_INVERSE,
    CO2_LONG_TIME_INVERSE,
    IEEE_VERY_INVERSE,
    IEEE_EXTREMELY_INVERSE,
    RECTIFIER,
];

impl IdmtCurve {
    pub fn by_name(name: &str) -> Option<IdmtCurve> {
        IDMT_CURVES.iter().copied().find(|c| c.name == name)
    }
}

pub const MIN_TIME_MULTIPLIER: f64 = 0.025;
pub const MAX_TIME_MULTIPLIER: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdmtConfig {
    pub curve: IdmtCurve,
    pub time_multiplier: f64,
    pub pickup: f64,
}

impl IdmtConfig {
    pub fn new(curve: IdmtCurve, time_multiplier: f64, pickup: f64) -> Result<Self, SettingsError> {
        if !(MIN_TIME_MULTIPLIER..=MAX_TIME_MULTIPLIER).contains(&time_multiplier) {
            return Err(SettingsError::TimeMultiplier(time_multiplier));
        }
        if !(pickup > 0.0 && pickup.is_finite()) {
            return Err(SettingsError::Pickup(pickup));
        }
        Ok(Self {
            curve,
            time_multiplier,
            pickup,
        })
    }
}

/// Operating time in seconds, or `None` when `current` does not exceed pickup.
pub fn idmt_time(config: &IdmtConfig, current: f64) -> Option<f64> {
    if !(current > config.pickup) || !current.is_finite() {
        return None;
    }
    let c = &config.curve;
    let m = current / config.pickup;
    // (m^α - 1) without cancellation near m = 1
    let denom = (c.alpha * m.ln()).exp_m1();
    if denom <= 0.0 {
        return None;
    }
    Some(config.time_multiplier * (c.k / denom + c.l))
}

/// Dynamic inverse-time element: trips once `∫ dt / t(I)` reaches one.
#[derive(Debug, Clone, PartialEq)]
pub struct IdmtAccumulator {
    config: IdmtConfig,
    integral: f64,
}

impl IdmtAccumulator {
    pub fn new(config: IdmtConfig) -> Self {
        Self {
            config,
            integral: 0.0,
        }
    }

    pub fn config(&self) -> &IdmtConfig {
        &self.config
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
    }

    fn rate(&self, current: f64) -> f64 {
        idmt_time(&self.config, current).map_or(0.0, |t| 1.0 / t)
    }

    /// Integrates over a step of `dt` seconds during which the current moves
    /// linearly from `i0` to `i1` (trapezoidal in the operate rate). Returns
    /// the offset into the step at which the integral reaches one.
    pub fn advance(&mut self, i0: f64, i1: f64, dt: f64) -> Option<f64> {
        if self.integral >= 1.0 {
            return Some(0.0);
        }
        let (r0, r1) = (self.rate(i0), self.rate(i1));
        let inc = 0.5 * (r0 + r1) * dt;
        if self.integral + inc < 1.0 {
            self.integral += inc;
            return None;
        }
        // r(s) = r0 + (r1 - r0) s / dt; solve ∫0^s r = remaining
        let need = 1.0 - self.integral;
        let a = 0.5 * (r1 - r0) / dt;
        let s = if a.abs() < 1e-300 {
            need / r0
        } else {
            let disc = (r0 * r0 + 4.0 * a * need).max(0.0);
            // numerically stable root of a s^2 + r0 s - need = 0
            2.0 * need / (r0 + disc.sqrt())
        };
        self.integral = 1.0;
        Some(s.clamp(0.0, dt))
    }
}

/// Breaker and relay timing of the coordination chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelayTimeSettings {
    #[serde(with = "duration_ms")]
    pub t_tr: Duration,
    #[serde(with = "duration_ms")]
    pub t_cb_op: Duration,
    #[serde(with = "duration_ms")]
    pub t_arc: Duration,
    #[serde(with = "duration_ms")]
    pub t_reset: Duration,
}

impl Default for RelayTimeSettings {
    fn default() -> Self {
        Self {
            t_tr: Duration::from_millis(4),
            t_cb_op: Duration::from_millis(15),
            t_arc: Duration::from_millis(5),
            t_reset: Duration::from_millis(5),
        }
    }
}

impl RelayTimeSettings {
    /// Trip command to open breaker.
    pub fn clearing_time(&self) -> Duration {
        self.t_tr + self.t_cb_op + self.t_arc
    }
}

/// Minimum grading margin between a downstream and an upstream relay.
pub fn delta_t_min(settings: &RelayTimeSettings) -> Duration {
    settings.t_tr + settings.t_cb_op + settings.t_arc + settings.t_reset
}

/// Serializes a `Duration` as floating-point milliseconds.
pub(crate) mod duration_ms {
    use std::time::Duration;

    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_nanos() as f64 / 1e6)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let ms = f64::deserialize(d)?;
        if !(ms >= 0.0 && ms.is_finite()) {
            return Err(D::Error::custom(format!(
                "duration must be >= 0 ms, got {ms}"
            )));
        }
        Ok(Duration::from_nanos((ms * 1e6).round() as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn si(t: f64, pickup: f64) -> IdmtConfig {
        IdmtConfig::new(IEC_STANDARD_INVERSE, t, pickup).unwrap()
    }

    #[test]
    fn standard_inverse_at_twice_pickup() {
        // 0.14 / (2^0.02 - 1), evaluated to 30 digits
        let t = idmt_time(&si(1.0, 100.0), 200.0).unwrap();
        assert!((t - 10.029_027_020_046_838).abs() < 1e-12, "{t}");
    }

    #[test]
    fn very_inverse_closed_form() {
        let cfg = IdmtConfig::new(IEC_VERY_INVERSE, 1.0, 50.0).unwrap();
        assert!((idmt_time(&cfg, 100.0).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn below_or_at_pickup_is_none() {
        assert_eq!(idmt_time(&si(1.0, 100.0), 100.0), None);
        assert_eq!(idmt_time(&si(1.0, 100.0), 10.0), None);
        assert_eq!(idmt_time(&si(1.0, 100.0), f64::NAN), None);
    }

    #[test]
    fn large_multiple_tends_to_zero() {
        for c in IDMT_CURVES.iter().filter(|c| c.l == 0.0) {
            let cfg = IdmtConfig::new(*c, 1.0, 1.0).unwrap();
            assert!(idmt_time(&cfg, 1e300).unwrap() < 1e-3, "{}", c.name);
        }
    }

    #[test]
    fn time_multiplier_range_enforced() {
        assert!(IdmtConfig::new(IEC_STANDARD_INVERSE, 0.02, 1.0).is_err());
        assert!(IdmtConfig::new(IEC_STANDARD_INVERSE, 1.6, 1.0).is_err());
        assert!(IdmtConfig::new(IEC_STANDARD_INVERSE, 0.5, 0.0).is_err());
    }

    #[test]
    fn curve_names_unique() {
        for (i, a) in IDMT_CURVES.iter().enumerate() {
            assert_eq!(IdmtCurve::by_name(a.name), Some(*a));
            for b in &IDMT_CURVES[i + 1..] {
                assert_ne!(a.name, b.name);
            }
        }
    }

    #[test]
    fn delta_t_min_sums() {
        assert_eq!(
            delta_t_min(&RelayTimeSettings::default()),
            Duration::from_millis(29)
        );
        let zero = RelayTimeSettings {
            t_tr: Duration::ZERO,
            t_cb_op: Duration::ZERO,
            t_arc: Duration::ZERO,
            t_reset: Duration::ZERO,
        };
        assert_eq!(delta_t_min(&zero), Duration::ZERO);
        let ms = Duration::from_millis;
        let s = RelayTimeSettings {
            t_tr: ms(1),
            t_cb_op: ms(2),
            t_arc: ms(3),
            t_reset: ms(4),
        };
        assert_eq!(delta_t_min(&s), ms(10));
    }

    #[test]
    fn accumulator_constant_current_matches_static_time() {
        let cfg = si(0.025, 100.0);
        let mut acc = IdmtAccumulator::new(cfg);
        let dt = 1e-4;
        let mut t = 0.0;
        loop {
            if let Some(s) = acc.advance(200.0, 200.0, dt) {
                t += s;
                break;
            }
            t += dt;
        }
        assert!((t - 0.250_725_675_501_171).abs() < 1e-9, "{t}");
    }

    #[test]
    fn accumulator_matches_fine_integration_on_rising_current() {
        let cfg = si(0.1, 200.0);
        let i = |t: f64| 100.0 + 900.0 * -(-t / 0.004f64).exp_m1();
        // coarse accumulator at the sampling step
        let mut acc = IdmtAccumulator::new(cfg);
        let dt = 1e-4;
        let mut t = 0.0;
        let coarse = loop {
            if let Some(s) = acc.advance(i(t), i(t + dt), dt) {
                break t + s;
            }
            t += dt;
        };
        // rectangle-rule reference at 10 µs
        let h = 1e-5;
        let mut sum = 0.0;
        let mut t = 0.0;
        while sum < 1.0 {
            sum += h / idmt_time(&cfg, i(t + 0.5 * h)).unwrap_or(f64::INFINITY);
            t += h;
        }
        assert!((coarse - t).abs() < 2e-4, "coarse {coarse} fine {t}");
    }

    #[test]
    fn accumulator_never_trips_below_pickup() {
        let mut acc = IdmtAccumulator::new(si(1.0, 100.0));
        for _ in 0..100_000 {
            assert_eq!(acc.advance(99.0, 99.9, 1e-3), None);
        }
        assert_eq!(acc.integral(), 0.0);
    }

    #[test]
    fn time_settings_toml_in_ms() {
        let s = RelayTimeSettings::default();
        let text = toml::to_string(&s).unwrap();
        assert!(text.contains("t_cb_op = 15.0"), "{text}");
        let back: RelayTimeSettings = toml::from_str(&text).unwrap();
        assert_eq!(back, s);
    }
}
