//! Scenario files. Every physical quantity carries its unit in the key name
//! and unknown keys are rejected, so `kappa_b = 40` (Hz? MHz? rad/s?) can't
//! slip through.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub circuit: Option<CircuitSection>,
    pub modes: Option<ModesSection>,
    pub rates: Option<RatesSection>,
    pub drive: Option<DriveSection>,
    #[serde(default)]
    pub run: RunSection,
    pub wigner: Option<WignerSection>,
    pub cnot: Option<CnotSection>,
    pub transmon: Option<TransmonSection>,
    pub transmon_bound: Option<TransmonBoundSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CircuitSection {
    #[serde(rename = "E_J_GHz")]
    pub e_j_ghz: f64,
    #[serde(rename = "E_W_GHz")]
    pub e_w_ghz: f64,
    #[serde(rename = "E_C_GHz")]
    pub e_c_ghz: f64,
    /// Operating flux, used when mode rates are derived from the circuit.
    #[serde(default)]
    pub phi_ext_phi0: f64,
    #[serde(default)]
    pub sweep_start_phi0: f64,
    #[serde(default = "default_sweep_stop")]
    pub sweep_stop_phi0: f64,
    #[serde(default = "default_sweep_points")]
    pub sweep_points: usize,
    pub zpf_m: Option<f64>,
    pub zpf_b: Option<f64>,
    #[serde(rename = "omega_m_GHz")]
    pub omega_m_ghz: Option<f64>,
    #[serde(rename = "omega_b_GHz")]
    pub omega_b_ghz: Option<f64>,
}

fn default_sweep_stop() -> f64 {
    0.45
}

fn default_sweep_points() -> usize {
    46
}

/// Hamiltonian rates given directly instead of through the circuit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesSection {
    #[serde(rename = "g2_MHz")]
    pub g2_mhz: f64,
    #[serde(rename = "chi_mm_kHz", default)]
    pub chi_mm_khz: f64,
    #[serde(rename = "chi_bb_MHz", default)]
    pub chi_bb_mhz: f64,
    #[serde(rename = "chi_mb_MHz", default)]
    pub chi_mb_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesSection {
    #[serde(rename = "kappa_1_kHz", default)]
    pub kappa_1_khz: f64,
    #[serde(rename = "kappa_b_MHz", default)]
    pub kappa_b_mhz: f64,
    #[serde(rename = "kappa_phi_m_kHz", default)]
    pub kappa_phi_m_khz: f64,
    /// Defaults to 60 × the memory dephasing.
    #[serde(rename = "kappa_phi_b_kHz")]
    pub kappa_phi_b_khz: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeKind {
    #[default]
    Constant,
    Square,
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(default)]
    pub alpha_re: f64,
    #[serde(default)]
    pub alpha_im: f64,
    #[serde(rename = "epsilon_z_MHz", default)]
    pub epsilon_z_mhz: f64,
    #[serde(default)]
    pub epsilon_z_phase_rad: f64,
    /// Phase of the memory drive; at π/2 a real ε_Z rotates cats along Re β.
    #[serde(default = "default_theta")]
    pub theta_z_rad: f64,
    #[serde(rename = "delta_m_MHz", default)]
    pub delta_m_mhz: f64,
    #[serde(rename = "delta_b_MHz", default)]
    pub delta_b_mhz: f64,
    #[serde(default)]
    pub envelope: EnvelopeKind,
    #[serde(default)]
    pub duration_ns: f64,
}

fn default_theta() -> f64 {
    std::f64::consts::FRAC_PI_2
}

impl Default for DriveSection {
    fn default() -> Self {
        toml::from_str("").expect("drive defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Buffer eliminated, κ₂ = 4g₂²/κ_b.
    #[default]
    Adiabatic,
    TwoMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default)]
    pub model: ModelKind,
    /// Memory Fock dimension; 0 picks one from |α|.
    #[serde(default)]
    pub dim_m: usize,
    #[serde(default = "default_dim_b")]
    pub dim_b: usize,
    #[serde(default = "default_horizon")]
    pub horizon_us: f64,
    #[serde(default = "default_points")]
    pub n_points: usize,
    #[serde(default)]
    pub seed: u64,
    /// Gaussian noise added to synthetic data (units of the recorded signal).
    #[serde(default)]
    pub noise: f64,
    #[serde(default = "default_method")]
    pub bitflip_method: String,
    #[serde(rename = "epsilon_z_list_MHz", default)]
    pub epsilon_z_list_mhz: Vec<f64>,
    /// Initial guess for the κ₂ fit; 0 uses 1.5 × the generating value.
    #[serde(rename = "kappa_2_guess_MHz", default)]
    pub kappa_2_guess_mhz: f64,
    /// Odd-parity population of the κ₁ calibration state.
    #[serde(default = "default_p1")]
    pub p_1: f64,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    /// Also simulate the Z rotation instead of only evaluating the ideal rates.
    #[serde(default)]
    pub simulate: bool,
}

fn default_dim_b() -> usize {
    6
}

fn default_horizon() -> f64 {
    1.0
}

fn default_points() -> usize {
    40
}

fn default_method() -> String {
    "auto".into()
}

fn default_p1() -> f64 {
    1.0
}

fn default_grid_points() -> usize {
    41
}

impl Default for RunSection {
    fn default() -> Self {
        toml::from_str("").expect("run defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateKind {
    Coherent,
    CatEven,
    CatOdd,
    Fock,
    Thermal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WignerSection {
    pub state: StateKind,
    #[serde(default)]
    pub alpha_re: f64,
    #[serde(default)]
    pub alpha_im: f64,
    #[serde(default)]
    pub fock_n: usize,
    #[serde(default)]
    pub n_th: f64,
    #[serde(default = "default_wigner_dim")]
    pub dim: usize,
    /// 0 picks |α| + 3.
    #[serde(default)]
    pub half_width: f64,
    #[serde(default = "default_wigner_points")]
    pub points: usize,
}

fn default_wigner_dim() -> usize {
    40
}

fn default_wigner_points() -> usize {
    81
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CnotSection {
    pub alpha_c_re: f64,
    #[serde(default)]
    pub alpha_c_im: f64,
    /// Either the coupling directly or (g4, zero-point phases, pump ξ₀).
    #[serde(rename = "g_cnot_MHz")]
    pub g_cnot_mhz: Option<f64>,
    #[serde(rename = "g4_MHz")]
    pub g4_mhz: Option<f64>,
    #[serde(default)]
    pub phi_c: f64,
    #[serde(default)]
    pub phi_t: f64,
    #[serde(default)]
    pub xi0_re: f64,
    #[serde(default)]
    pub xi0_im: f64,
    /// Two-photon rate for re-stabilising the target; 0 skips it.
    #[serde(rename = "kappa_2_MHz", default)]
    pub kappa_2_mhz: f64,
    #[serde(default)]
    pub restabilize_us: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonSection {
    #[serde(rename = "E_C_GHz")]
    pub e_c_ghz: f64,
    #[serde(rename = "E_J_GHz")]
    pub e_j_ghz: f64,
    #[serde(default)]
    pub n_g: f64,
    #[serde(rename = "omega_m_GHz")]
    pub omega_m_ghz: f64,
    #[serde(rename = "omega_c_GHz")]
    pub omega_c_ghz: f64,
    #[serde(rename = "g_mt_MHz")]
    pub g_mt_mhz: f64,
    #[serde(rename = "g_ct_MHz")]
    pub g_ct_mhz: f64,
    #[serde(default = "default_memory_dim")]
    pub dim_m: usize,
    #[serde(default = "default_readout_dim")]
    pub dim_c: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
}

fn default_memory_dim() -> usize {
    12
}

fn default_readout_dim() -> usize {
    3
}

fn default_levels() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmonBoundSection {
    #[serde(rename = "gamma_10_kHz")]
    pub gamma_10_khz: f64,
    pub photon_axis: Vec<f64>,
    pub populations: Vec<Vec<f64>>,
    pub hybridized_mass: Vec<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Canonical text with every default spelled out.
    pub fn effective_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, ConfigError> {
        section.as_ref().ok_or_else(|| ConfigError::Invalid(format!("missing [{name}] section")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_toml("[rates]\nkappa_b = 40\n").is_err());
        assert!(ScenarioConfig::from_toml("[bogus]\n").is_err());
        let ok = ScenarioConfig::from_toml("[rates]\nkappa_b_MHz = 40\n").unwrap();
        assert_eq!(ok.rates.unwrap().kappa_b_mhz, 40.0);
    }

    #[test]
    fn effective_config_roundtrips() {
        let c = ScenarioConfig::from_toml("[drive]\nalpha_re = 2.0\n[run]\nseed = 7\n").unwrap();
        let back = ScenarioConfig::from_toml(&c.effective_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.run.n_points, 40);
    }
}
