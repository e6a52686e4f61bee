use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::{ChannelId, NUM_EMISSION_CHANNELS};

/// File name of the kernel sidecar stored next to a synthetic world.
pub const KERNEL_FILE: &str = "kernel.toml";

/// Ground-truth dispersion kernel for synthetic worlds.
///
/// A station's noiseless concentration is
///
/// `c = base + sat(Σ_k β_k Σ_cells x_k · exp(−d/λ)) + γ·geography`,
///
/// where `d` is the cell-centre distance in km, the inner sum runs over the
/// whole grid, and `sat` is the identity unless [`saturation`] is positive.
/// Geography terms are linear in the station cell's altitude, temperature
/// and precipitation. Station observations add Gaussian noise drawn from
/// [`noise_seed`], kept separate from the world seed so the same landscape
/// can be re-observed at different noise levels.
///
/// [`saturation`]: OracleKernel::saturation
/// [`noise_seed`]: OracleKernel::noise_seed
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleKernel {
    /// Source strength per emission channel, µg/m³ at distance zero per
    /// tce/yr, ordered like the emission channels (RRC, IDC, IDO, SVC, TRN).
    pub beta: [f64; NUM_EMISSION_CHANNELS],
    /// e-folding length of the exponential decay, km.
    pub lambda_km: f64,
    /// Background concentration, µg/m³.
    pub base: f64,
    /// Concentration response to station-cell altitude, µg/m³ per m.
    pub gamma_altitude: f64,
    /// Concentration response to station-cell temperature, µg/m³ per °C.
    pub gamma_temperature: f64,
    /// Concentration response to station-cell precipitation, µg/m³ per mm.
    pub gamma_precipitation: f64,
    /// Optional saturation scale `a` in µg/m³: the emission-driven term `S`
    /// becomes `a·(1 − exp(−S/a))`. Zero keeps the oracle exactly linear,
    /// which is the default; marginals then do not depend on emission
    /// levels.
    pub saturation: f64,
    /// Standard deviation of the observation noise, µg/m³.
    pub noise_std: f64,
    /// Base seed of the per-station observation noise stream.
    pub noise_seed: u64,
}

impl Default for OracleKernel {
    fn default() -> Self {
        OracleKernel {
            beta: [4.0e-4, 2.0e-5, 1.0e-4, 3.0e-4, 7.5e-5],
            lambda_km: 50.0,
            base: 12.0,
            gamma_altitude: -0.004,
            gamma_temperature: 0.15,
            gamma_precipitation: -0.004,
            saturation: 0.0,
            noise_std: 1.5,
            noise_seed: 424_242,
        }
    }
}

impl OracleKernel {
    pub fn validate(&self) -> Result<()> {
        for (k, b) in self.beta.iter().enumerate() {
            if !(b.is_finite() && *b >= 0.0) {
                let name = ChannelId::from_index(k).map(ChannelId::name).unwrap_or("?");
                return Err(CoreError::Invalid(format!(
                    "kernel beta for {name} must be finite and nonnegative, got {b}"
                )));
            }
        }
        if !(self.lambda_km.is_finite() && self.lambda_km > 0.0) {
            return Err(CoreError::Invalid(format!(
                "kernel decay length must be positive, got {}",
                self.lambda_km
            )));
        }
        for (label, v) in [
            ("base", self.base),
            ("gamma_altitude", self.gamma_altitude),
            ("gamma_temperature", self.gamma_temperature),
            ("gamma_precipitation", self.gamma_precipitation),
        ] {
            if !v.is_finite() {
                return Err(CoreError::Invalid(format!(
                    "kernel {label} must be finite, got {v}"
                )));
            }
        }
        if !(self.saturation.is_finite() && self.saturation >= 0.0) {
            return Err(CoreError::Invalid(format!(
                "kernel saturation must be zero (off) or positive, got {}",
                self.saturation
            )));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(CoreError::Invalid(format!(
                "kernel noise std must be nonnegative, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Writes the kernel sidecar into a world directory.
pub fn save_kernel(dir: &Path, kernel: &OracleKernel) -> Result<()> {
    kernel.validate()?;
    let text = toml::to_string_pretty(kernel)
        .map_err(|e| CoreError::Invalid(format!("cannot serialize kernel: {e}")))?;
    let path = dir.join(KERNEL_FILE);
    std::fs::write(&path, text).map_err(|e| CoreError::io(&path, e))
}

/// Reads the kernel sidecar from a world directory.
pub fn load_kernel(dir: &Path) -> Result<OracleKernel> {
    let path = dir.join(KERNEL_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| CoreError::io(&path, e))?;
    let kernel: OracleKernel = toml::from_str(&text)
        .map_err(|e| CoreError::Config(format!("cannot parse {}: {e}", path.display())))?;
    kernel.validate()?;
    Ok(kernel)
}
