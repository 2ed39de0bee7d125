//! Experiment configuration: one JSON document drives every command; a hash
//! of the canonical config bytes is embedded in all outputs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use fluxlab::evolution::IntegratorSettings;
use fluxlab::models::PresetOverrides;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub preset: String,
    #[serde(default)]
    pub overrides: PresetOverrides,
}

/// Filter width: an explicit value or the localization-analysis formula.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaChoice {
    Value(f64),
    Formula(String),
}

impl Default for AlphaChoice {
    fn default() -> Self {
        AlphaChoice::Value(2.0)
    }
}

fn default_mesh() -> usize {
    6
}

fn default_loops() -> usize {
    2
}

fn default_loop_rs() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}

fn default_kernel() -> usize {
    1
}

fn default_shell_term() -> usize {
    0
}

fn default_ground_space() -> usize {
    2
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub alpha: AlphaChoice,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    /// loop sizes for the Berry/overlap scan
    #[serde(default = "default_loop_rs")]
    pub loop_rs: Vec<f64>,
    /// loops per side of the Stokes decomposition
    #[serde(default = "default_loops")]
    pub n_loops: usize,
    /// flux-mesh side for Chern/bundle scans
    #[serde(default = "default_mesh")]
    pub mesh: usize,
    #[serde(default = "default_kernel")]
    pub kernel_halfwidth: usize,
    /// which interaction term seeds the locality scan
    #[serde(default = "default_shell_term")]
    pub shell_term: usize,
    /// ground-space dimension for the fractional diagnostics
    #[serde(default = "default_ground_space")]
    pub ground_space: usize,
    /// preset interpolated towards in the obstruction sweep
    #[serde(default)]
    pub obstruction_target: Option<ModelConfig>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    /// Collect every violated field instead of stopping at the first.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        const PRESETS: [&str; 7] = [
            "trivial_atomic",
            "chern_fermion_toy",
            "flux_quantum_toy",
            "hofstadter_hardcore",
            "random_gapped",
            "degenerate_pair",
            "twist_dimer_toy",
        ];
        if !PRESETS.contains(&self.model.preset.as_str()) {
            problems.push(format!(
                "model.preset: unknown preset '{}' (expected one of {})",
                self.model.preset,
                PRESETS.join(", ")
            ));
        }
        if let AlphaChoice::Value(a) = self.alpha {
            if !(a > 0.0) {
                problems.push(format!("alpha: must be positive, got {a}"));
            }
        }
        if let AlphaChoice::Formula(f) = &self.alpha {
            if f != "paper" && f != "paper-formula" {
                problems.push(format!(
                    "alpha: string form must be \"paper\" or \"paper-formula\", got '{f}'"
                ));
            }
        }
        if self.integrator.steps_per_two_pi == 0 {
            problems.push("integrator.steps_per_two_pi: must be positive".into());
        }
        if let Some(t) = self.integrator.certify {
            if !(t > 0.0) {
                problems.push(format!("integrator.certify: tolerance must be positive, got {t}"));
            }
        }
        if self.loop_rs.is_empty() || self.loop_rs.iter().any(|&r| r <= 0.0) {
            problems.push("loop_rs: need a non-empty list of positive loop sizes".into());
        }
        if self.n_loops == 0 {
            problems.push("n_loops: must be at least 1".into());
        }
        if self.mesh < 3 {
            problems.push(format!("mesh: need at least 3 points per side, got {}", self.mesh));
        }
        if 2 * self.kernel_halfwidth + 1 > self.mesh {
            problems.push(format!(
                "kernel_halfwidth: kernel {} wider than the mesh {}",
                2 * self.kernel_halfwidth + 1,
                self.mesh
            ));
        }
        if self.ground_space == 0 {
            problems.push("ground_space: must be at least 1".into());
        }
        problems
    }

    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelConfig {
                preset: "twist_dimer_toy".into(),
                overrides: PresetOverrides::default(),
            },
            alpha: AlphaChoice::default(),
            integrator: IntegratorSettings::default(),
            loop_rs: default_loop_rs(),
            n_loops: default_loops(),
            mesh: default_mesh(),
            kernel_halfwidth: default_kernel(),
            shell_term: default_shell_term(),
            ground_space: default_ground_space(),
            obstruction_target: None,
            seed: 0,
            threads: None,
        }
    }
}
