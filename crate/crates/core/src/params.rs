//! Physical parameters, the flat config format and the drive/thermal helpers.
//!
//! Every rate is stored in angular units (rad/s). The config layer is the only
//! place that knows about Hz-like inputs and multiplies them by 2π.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::constants::{C_LIGHT, HBAR, K_B, TWO_PI};
use crate::error::{Error, Result};

/// Ratio g/κ above which the weak-coupling linear-response treatment is questionable.
pub const WEAK_COUPLING_WARN_RATIO: f64 = 1e-3;

/// Fixed device constants, all rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub kappa: f64,
    /// Rescaled dissipative coupling.
    pub g: f64,
    pub omega_m: f64,
    pub gamma_m: f64,
    /// Laser wavelength in metres.
    pub wavelength: f64,
    /// Bath temperature in kelvin.
    pub temperature: f64,
}

/// The swept knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    /// Drive power in watts.
    pub power: f64,
    /// Δ = ω_c − ω_l in rad/s.
    pub detuning: f64,
    /// Kerr strength U in rad/s.
    pub kerr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveDerived {
    /// ε_l in √(photons/s).
    pub epsilon_l: f64,
    /// P_l = ε_l²/(2κ), in photons.
    pub p_l: f64,
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        positive("kappa", self.kappa)?;
        non_negative("g", self.g)?;
        positive("omega_m", self.omega_m)?;
        positive("gamma_m", self.gamma_m)?;
        finite("wavelength", self.wavelength)?;
        if !(self.wavelength > 100e-9 && self.wavelength < 10e-6) {
            return Err(out_of_range("wavelength", "must lie in (100 nm, 10 um)"));
        }
        non_negative("temperature", self.temperature)?;
        Ok(())
    }

    /// Human-readable warnings about parameters outside the model's comfort zone.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let ratio = self.g / self.kappa;
        if ratio > WEAK_COUPLING_WARN_RATIO {
            out.push(format!(
                "g/kappa = {ratio:.3e} exceeds {WEAK_COUPLING_WARN_RATIO:e}; weak dissipative coupling assumed"
            ));
        }
        out
    }

    pub fn laser_angular_frequency(&self) -> f64 {
        TWO_PI * C_LIGHT / self.wavelength
    }

    pub fn with_g(self, g: f64) -> Self {
        SystemParams { g, ..self }
    }

    pub fn with_temperature(self, temperature: f64) -> Self {
        SystemParams {
            temperature,
            ..self
        }
    }
}

impl OperatingPoint {
    pub fn validate(&self) -> Result<()> {
        non_negative("power", self.power)?;
        finite("detuning", self.detuning)?;
        non_negative("kerr", self.kerr)?;
        Ok(())
    }

    pub fn with_power(self, power: f64) -> Self {
        OperatingPoint { power, ..self }
    }

    pub fn with_detuning(self, detuning: f64) -> Self {
        OperatingPoint { detuning, ..self }
    }

    pub fn with_kerr(self, kerr: f64) -> Self {
        OperatingPoint { kerr, ..self }
    }
}

/// ε_l = √(P/ħω_l) and P_l = ε_l²/(2κ).
pub fn derive_drive(params: &SystemParams, point: &OperatingPoint) -> DriveDerived {
    let photon_energy = HBAR * params.laser_angular_frequency();
    let flux = point.power / photon_energy;
    DriveDerived {
        epsilon_l: flux.sqrt(),
        p_l: flux / (2.0 * params.kappa),
    }
}

/// Bose occupation (e^{ħω/k_BT} − 1)⁻¹, zero at T = 0.
pub fn thermal_occupation(omega_m: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    let x = HBAR * omega_m / (K_B * temperature);
    1.0 / x.exp_m1()
}

/// Temperature whose Bose occupation at `omega_m` equals `n`.
pub fn effective_temperature(omega_m: f64, n: f64) -> f64 {
    if n <= 0.0 {
        return 0.0;
    }
    HBAR * omega_m / (K_B * (1.0 / n).ln_1p())
}

fn finite(key: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(key.to_string()))
    }
}

fn positive(key: &str, v: f64) -> Result<()> {
    finite(key, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(out_of_range(key, "must be strictly positive"))
    }
}

fn non_negative(key: &str, v: f64) -> Result<()> {
    finite(key, v)?;
    if v >= 0.0 {
        Ok(())
    } else {
        Err(out_of_range(key, "must be non-negative"))
    }
}

fn out_of_range(key: &str, reason: &str) -> Error {
    Error::OutOfRange {
        key: key.to_string(),
        reason: reason.to_string(),
    }
}

// ---------------------------------------------------------------------------
// Flat config
// ---------------------------------------------------------------------------

/// Recognised numeric keys, in canonical order.
pub const NUMERIC_KEYS: [&str; 9] = [
    "kappa_mhz",
    "g_hz",
    "omega_m_khz",
    "gamma_m_hz",
    "wavelength_nm",
    "temperature_k",
    "power_mw",
    "detuning_over_kappa",
    "kerr_uhz",
];

pub const KERR_ANGULAR_KEY: &str = "kerr_is_angular";

/// When `kerr_is_angular` is absent the Kerr value is taken as an angular rate
/// (U = kerr_uhz × 10⁻⁶ rad/s, no 2π factor).
pub const DEFAULT_KERR_IS_ANGULAR: bool = true;

/// Raw config values as written in a config file, before unit conversion.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Config {
    values: BTreeMap<String, f64>,
    kerr_is_angular: Option<bool>,
}

impl Config {
    /// Parse a flat `key = value` file. JSON sidecars written by the figure
    /// command are also accepted (their `config` object is used).
    pub fn parse(text: &str) -> Result<Self> {
        if text.trim_start().starts_with('{') {
            return Self::from_sidecar_json(text);
        }
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| {
            Error::Parse(e.message().to_string())
        })?;
        let mut cfg = Config::default();
        for (key, value) in table {
            match value {
                toml::Value::Float(v) => cfg.insert(&key, v)?,
                toml::Value::Integer(v) => cfg.insert(&key, v as f64)?,
                toml::Value::Boolean(b) => cfg.insert_bool(&key, b)?,
                other => {
                    return Err(Error::Parse(format!(
                        "key `{key}` has unsupported value {other}"
                    )))
                }
            }
        }
        Ok(cfg)
    }

    fn from_sidecar_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .get("config")
            .unwrap_or(&value)
            .as_object()
            .ok_or_else(|| Error::Parse("JSON config must be an object".into()))?;
        let mut cfg = Config::default();
        for (key, v) in obj {
            if let Some(b) = v.as_bool() {
                cfg.insert_bool(key, b)?;
            } else if let Some(x) = v.as_f64() {
                cfg.insert(key, x)?;
            } else {
                return Err(Error::Parse(format!("key `{key}` has unsupported value {v}")));
            }
        }
        Ok(cfg)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let text = match name {
            "room_temp_membrane" => include_str!("../presets/room_temp_membrane.toml"),
            "cryogenic_membrane" => include_str!("../presets/cryogenic_membrane.toml"),
            other => return Err(Error::UnknownPreset(other.to_string())),
        };
        Self::parse(text)
    }

    pub fn preset_names() -> [&'static str; 2] {
        ["room_temp_membrane", "cryogenic_membrane"]
    }

    pub fn insert(&mut self, key: &str, value: f64) -> Result<()> {
        if key == KERR_ANGULAR_KEY {
            return Err(Error::Parse(format!("`{key}` expects true or false")));
        }
        if !NUMERIC_KEYS.contains(&key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value);
        Ok(())
    }

    pub fn insert_bool(&mut self, key: &str, value: bool) -> Result<()> {
        if key != KERR_ANGULAR_KEY {
            if NUMERIC_KEYS.contains(&key) {
                return Err(Error::Parse(format!("`{key}` expects a number")));
            }
            return Err(Error::UnknownKey(key.to_string()));
        }
        self.kerr_is_angular = Some(value);
        Ok(())
    }

    /// Apply a `key=value` override as given on the command line.
    pub fn set_from_str(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("override `{assignment}` is not key=value")))?;
        let key = key.trim();
        let raw = raw.trim();
        if key == KERR_ANGULAR_KEY {
            let b = raw
                .parse::<bool>()
                .map_err(|_| Error::Parse(format!("`{key}` expects true or false, got `{raw}`")))?;
            return self.insert_bool(key, b);
        }
        if !NUMERIC_KEYS.contains(&key) {
            return Err(Error::UnknownKey(key.to_string()));
        }
        let v = raw
            .parse::<f64>()
            .map_err(|_| Error::Parse(format!("`{key}` expects a number, got `{raw}`")))?;
        self.insert(key, v)
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.get(key).copied()
    }

    pub fn kerr_is_angular(&self) -> bool {
        self.kerr_is_angular.unwrap_or(DEFAULT_KERR_IS_ANGULAR)
    }

    fn require(&self, key: &str) -> Result<f64> {
        let v = self
            .values
            .get(key)
            .copied()
            .ok_or_else(|| Error::MissingKey(key.to_string()))?;
        if !v.is_finite() {
            return Err(Error::NonFinite(key.to_string()));
        }
        Ok(v)
    }

    /// Convert to validated internal records (rad/s, W, m, K).
    pub fn normalize(&self) -> Result<(SystemParams, OperatingPoint)> {
        let kappa = TWO_PI * 1e6 * self.require("kappa_mhz")?;
        let g = TWO_PI * self.require("g_hz")?;
        let omega_m = TWO_PI * 1e3 * self.require("omega_m_khz")?;
        let gamma_m = TWO_PI * self.require("gamma_m_hz")?;
        let wavelength = 1e-9 * self.require("wavelength_nm")?;
        let temperature = self.require("temperature_k")?;
        let power = 1e-3 * self.require("power_mw")?;
        let detuning = kappa * self.require("detuning_over_kappa")?;
        let kerr = kerr_from_uhz(self.require("kerr_uhz")?, self.kerr_is_angular());

        let params = SystemParams {
            kappa,
            g,
            omega_m,
            gamma_m,
            wavelength,
            temperature,
        };
        let point = OperatingPoint {
            power,
            detuning,
            kerr,
        };
        params.validate().map_err(rename_key)?;
        point.validate().map_err(rename_key)?;
        Ok((params, point))
    }

    /// Inverse of [`Config::normalize`].
    pub fn from_records(
        params: &SystemParams,
        point: &OperatingPoint,
        kerr_is_angular: bool,
    ) -> Self {
        let mut values = BTreeMap::new();
        let entries = [
            ("kappa_mhz", params.kappa / (TWO_PI * 1e6)),
            ("g_hz", params.g / TWO_PI),
            ("omega_m_khz", params.omega_m / (TWO_PI * 1e3)),
            ("gamma_m_hz", params.gamma_m / TWO_PI),
            ("wavelength_nm", params.wavelength * 1e9),
            ("temperature_k", params.temperature),
            ("power_mw", point.power * 1e3),
            ("detuning_over_kappa", point.detuning / params.kappa),
            ("kerr_uhz", kerr_to_uhz(point.kerr, kerr_is_angular)),
        ];
        for (k, v) in entries {
            values.insert(k.to_string(), v);
        }
        Config {
            values,
            kerr_is_angular: Some(kerr_is_angular),
        }
    }

    /// Flat JSON object (`key: value`) in canonical key order.
    pub fn to_json(&self) -> serde_json::Value {
        let mut map = serde_json::Map::new();
        for key in NUMERIC_KEYS {
            if let Some(v) = self.values.get(key) {
                map.insert(key.to_string(), serde_json::json!(v));
            }
        }
        map.insert(
            KERR_ANGULAR_KEY.to_string(),
            serde_json::Value::Bool(self.kerr_is_angular()),
        );
        serde_json::Value::Object(map)
    }
}

impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for key in NUMERIC_KEYS {
            if let Some(v) = self.values.get(key) {
                writeln!(f, "{key} = {v:?}")?;
            }
        }
        writeln!(f, "{KERR_ANGULAR_KEY} = {}", self.kerr_is_angular())
    }
}

/// Kerr config value (µHz) to rad/s.
pub fn kerr_from_uhz(uhz: f64, kerr_is_angular: bool) -> f64 {
    let scale = if kerr_is_angular { 1.0 } else { TWO_PI };
    scale * uhz * 1e-6
}

pub fn kerr_to_uhz(kerr: f64, kerr_is_angular: bool) -> f64 {
    let scale = if kerr_is_angular { 1.0 } else { TWO_PI };
    kerr / (scale * 1e-6)
}

// Internal validation names fields; report the config key instead.
fn rename_key(e: Error) -> Error {
    let map = |k: &str| -> String {
        match k {
            "kappa" => "kappa_mhz",
            "g" => "g_hz",
            "omega_m" => "omega_m_khz",
            "gamma_m" => "gamma_m_hz",
            "wavelength" => "wavelength_nm",
            "temperature" => "temperature_k",
            "power" => "power_mw",
            "detuning" => "detuning_over_kappa",
            "kerr" => "kerr_uhz",
            other => other,
        }
        .to_string()
    };
    match e {
        Error::OutOfRange { key, reason } => Error::OutOfRange {
            key: map(&key),
            reason,
        },
        Error::NonFinite(key) => Error::NonFinite(map(&key)),
        other => other,
    }
}
