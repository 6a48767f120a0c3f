//! Command configuration schemas, the run manifest, and error/exit-code
//! classification shared by every subcommand.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use telebench_core::{EngineError, PsychError, PsychometricFunction, SimConfig, SysIdError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.toml";

/// Errors are split into two classes that map onto process exit codes:
/// configuration/usage problems exit 2, numerical/runtime failures exit 3.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        CliError::Numeric(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "{msg}"),
            CliError::Numeric(msg) => write!(f, "{msg}"),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(err: EngineError) -> Self {
        match err {
            EngineError::Diverged { .. } => CliError::Numeric(err.to_string()),
            _ => CliError::Config(err.to_string()),
        }
    }
}

impl From<SysIdError> for CliError {
    fn from(err: SysIdError) -> Self {
        CliError::Numeric(err.to_string())
    }
}

impl From<PsychError> for CliError {
    fn from(err: PsychError) -> Self {
        match err {
            PsychError::InvalidParameter { .. } => CliError::Config(err.to_string()),
            _ => CliError::Numeric(err.to_string()),
        }
    }
}

pub fn io_error(context: &str, path: &Path, err: std::io::Error) -> CliError {
    CliError::Config(format!("{context} `{}`: {err}", path.display()))
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

/// Provenance block recorded at the top of every manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInfo {
    pub command: String,
    pub config_path: String,
    pub output_dir: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    pub tool_version: String,
}

/// `manifest.toml`: the `[run]` provenance table plus the fully resolved
/// configuration under `[config]`. Feeding a manifest back as `--config`
/// replays the run it records.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub run: RunInfo,
    pub config: toml::Value,
}

/// A parsed `--config` argument: the typed configuration plus, when the file
/// was a manifest, the recorded run metadata.
pub struct LoadedConfig<T> {
    pub config: T,
    pub replay: Option<RunInfo>,
}

/// Reads `path` as either a plain configuration for `command` or a manifest
/// produced by a previous run of `command`. Manifests are recognized by the
/// presence of a top-level `run` table.
pub fn load_config<T: DeserializeOwned>(
    path: &Path,
    command: &str,
) -> Result<LoadedConfig<T>, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| io_error("cannot read config", path, e))?;
    let value: toml::Value = toml::from_str(&text).map_err(|e| {
        CliError::Config(format!("invalid TOML in `{}`: {e}", path.display()))
    })?;
    if value.get("run").is_some() {
        let manifest: RunManifest = value.try_into().map_err(|e| {
            CliError::Config(format!("invalid manifest `{}`: {e}", path.display()))
        })?;
        if manifest.run.command != command {
            return Err(CliError::Config(format!(
                "manifest `{}` records a `{}` run; expected `{command}`",
                path.display(),
                manifest.run.command
            )));
        }
        let config: T = manifest.config.clone().try_into().map_err(|e| {
            CliError::Config(format!(
                "invalid `[config]` in manifest `{}`: {e}",
                path.display()
            ))
        })?;
        Ok(LoadedConfig {
            config,
            replay: Some(manifest.run),
        })
    } else {
        // Deserialize straight from the text so syntax/field diagnostics keep
        // line information.
        let config: T = toml::from_str(&text).map_err(|e| {
            CliError::Config(format!("invalid config `{}`: {e}", path.display()))
        })?;
        Ok(LoadedConfig {
            config,
            replay: None,
        })
    }
}

/// Serializes and writes the manifest for a completed run. `config` must be
/// the fully resolved configuration (seed overrides already applied) so that
/// replaying the manifest needs no external state.
pub fn write_manifest<C: Serialize>(
    out_dir: &Path,
    command: &str,
    config_path: &str,
    seed: Option<u64>,
    config: &C,
) -> Result<(), CliError> {
    let value = toml::Value::try_from(config)
        .map_err(|e| CliError::Config(format!("cannot serialize resolved config: {e}")))?;
    let manifest = RunManifest {
        run: RunInfo {
            command: command.to_string(),
            config_path: config_path.to_string(),
            output_dir: out_dir.display().to_string(),
            seed,
            tool_version: TOOL_VERSION.to_string(),
        },
        config: value,
    };
    let text = toml::to_string_pretty(&manifest)
        .map_err(|e| CliError::Config(format!("cannot serialize manifest: {e}")))?;
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| io_error("cannot write manifest", &path, e))
}

/// Resolves the effective output directory: an explicit `--out` wins, then a
/// replayed manifest's recorded directory, otherwise an error.
pub fn resolve_out_dir(
    out_flag: Option<&str>,
    replay: Option<&RunInfo>,
) -> Result<PathBuf, CliError> {
    if let Some(out) = out_flag {
        return Ok(PathBuf::from(out));
    }
    if let Some(info) = replay {
        return Ok(PathBuf::from(&info.output_dir));
    }
    Err(CliError::Config(
        "missing --out (required unless --config is a manifest with a recorded output_dir)"
            .to_string(),
    ))
}

/// The `config_path` recorded in a new manifest: replays keep the original
/// path so that repeated replays stay byte-identical.
pub fn recorded_config_path(config_arg: &str, replay: Option<&RunInfo>) -> String {
    replay
        .map(|info| info.config_path.clone())
        .unwrap_or_else(|| config_arg.to_string())
}

// ---------------------------------------------------------------------------
// Per-command configuration schemas
// ---------------------------------------------------------------------------

/// `identify` input: which log to fit and whether to score fits in free-run
/// (simulated-output) mode.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentifyConfig {
    /// Path to a `timeseries.csv` produced by `simulate`.
    pub log: String,
    /// Score percent fit on the free-run simulation instead of one-step
    /// prediction.
    #[serde(default)]
    pub free_run: bool,
}

fn default_step_duration() -> f64 {
    2.0
}
fn default_step_dt() -> f64 {
    1e-3
}
fn default_bode_min() -> f64 {
    0.1
}
fn default_bode_max() -> f64 {
    1000.0
}
fn default_bode_points() -> usize {
    400
}

/// `figures` input: fitted model files to plot and the evaluation grids.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiguresConfig {
    /// Path to a participant-side model file from `identify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub participant_model: Option<String>,
    /// Path to an environment-side model file from `identify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub environment_model: Option<String>,
    /// Step-response length in seconds.
    #[serde(default = "default_step_duration")]
    pub step_duration: f64,
    /// Step-response sample interval in seconds.
    #[serde(default = "default_step_dt")]
    pub step_dt: f64,
    /// Lowest Bode frequency in rad/s.
    #[serde(default = "default_bode_min")]
    pub bode_min: f64,
    /// Highest Bode frequency in rad/s.
    #[serde(default = "default_bode_max")]
    pub bode_max: f64,
    /// Number of logarithmically spaced Bode frequencies.
    #[serde(default = "default_bode_points")]
    pub bode_points: usize,
}

/// Psychophysics paradigm selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    Staircase,
    ConstantStimuli,
}

fn default_termination_reversals() -> usize {
    12
}
fn default_max_trials() -> u64 {
    1000
}

/// Staircase settings for `psych` (levels are stiffness increments over the
/// reference, in N·m/rad).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaircaseTable {
    pub initial_level: f64,
    pub step_size: f64,
    /// Lowest level the staircase may reach; unbounded when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_level: Option<f64>,
    #[serde(default = "default_termination_reversals")]
    pub termination_reversals: usize,
    #[serde(default = "default_max_trials")]
    pub max_trials: u64,
}

/// Method-of-constant-stimuli settings for `psych` (levels are absolute
/// comparison stiffnesses in N·m/rad).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantStimuliTable {
    pub levels: Vec<f64>,
    pub trials_per_level: usize,
}

/// `psych` input: a simulated observer discriminates rendered stiffness
/// through the transmission configured in the embedded engine template.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsychConfig {
    pub paradigm: Paradigm,
    /// Observer RNG seed.
    pub seed: u64,
    /// Reference torsion-spring stiffness in N·m/rad.
    pub reference_stiffness: f64,
    /// Psychometric function of the simulated observer, over *effective*
    /// stiffness differences (comparison − reference).
    pub observer: PsychometricFunction,
    /// Engine template for each rendering run; the environment is replaced by
    /// the per-trial torsion spring.
    pub engine: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub staircase: Option<StaircaseTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_stimuli: Option<ConstantStimuliTable>,
}

fn default_false() -> bool {
    false
}

/// `sweep` input: runs `simulate` once per value of one dotted config
/// parameter.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Path to the base `simulate` configuration.
    pub base_config: String,
    /// Dotted path of the parameter to vary, e.g.
    /// `transmission.parasitic_damping`.
    pub parameter: String,
    /// Values substituted at `parameter`, one run per value.
    pub values: Vec<f64>,
    /// Also fit both model sides for each run and tabulate the participant
    /// parameters in `summary.csv`.
    #[serde(default = "default_false")]
    pub identify: bool,
}
