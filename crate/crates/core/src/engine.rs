//! Fixed-step closed-loop simulation of the full bench.
//!
//! Each tick advances operator → master shaft → transmission → slave shaft →
//! environment with semi-implicit (symplectic) Euler at `dt` (default 1 kHz),
//! mirroring a sampled 1 kHz controller rather than a continuous idealization.
//! Sensor models (encoder quantization, additive Gaussian torque noise,
//! saturation) produce the sensed columns of the [`TimeSeriesLog`] alongside
//! the true states; runs are bit-reproducible from `rng_seed`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::path::Path;
use thiserror::Error;

use crate::environment::{environment_torque, EnvironmentError, EnvironmentSpec};
use crate::operator::{operator_torque, OperatorError, OperatorSpec};
use crate::transmission::{
    coupling_torques, rigid_constraint, ShaftState, TransmissionError, TransmissionSpec,
};

/// Default integration step: 1 kHz control loop.
pub const DEFAULT_DT: f64 = 1e-3;
/// Default master/slave shaft inertia, kg·m².
pub const DEFAULT_INERTIA: f64 = 2e-4;
/// Default torque-sensor saturation, N·m.
pub const DEFAULT_TORQUE_SATURATION: f64 = 5.0;
/// Default torque-sensor noise standard deviation, N·m.
pub const DEFAULT_TORQUE_NOISE_STD: f64 = 1e-3;
/// Default encoder resolution after ×4 quadrature decoding, counts/rev.
pub const DEFAULT_ENCODER_COUNTS: u32 = 2000;

/// Sensor model parameters shared by both shafts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    /// Torque sensors clip at ±this value, N·m.
    #[serde(default = "default_saturation")]
    pub torque_saturation: f64,
    /// Standard deviation of white Gaussian noise added to sensed torques
    /// before saturation, N·m. Zero disables noise (and consumes no RNG).
    #[serde(default = "default_noise_std")]
    pub torque_noise_std: f64,
    /// Encoder resolution, counts per revolution.
    #[serde(default = "default_counts")]
    pub encoder_counts_per_rev: u32,
    /// When true (default), the PD transmission and the environment renderer
    /// read quantized angles and backward-difference velocities, emulating
    /// encoder-based control; when false they read true states (oracle mode).
    #[serde(default = "default_true")]
    pub angle_from_quantized: bool,
}

fn default_saturation() -> f64 {
    DEFAULT_TORQUE_SATURATION
}
fn default_noise_std() -> f64 {
    DEFAULT_TORQUE_NOISE_STD
}
fn default_counts() -> u32 {
    DEFAULT_ENCODER_COUNTS
}
fn default_true() -> bool {
    true
}

impl Default for SensorSpec {
    fn default() -> Self {
        SensorSpec {
            torque_saturation: DEFAULT_TORQUE_SATURATION,
            torque_noise_std: DEFAULT_TORQUE_NOISE_STD,
            encoder_counts_per_rev: DEFAULT_ENCODER_COUNTS,
            angle_from_quantized: true,
        }
    }
}

/// Complete description of one simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Integration step, seconds.
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Run length, seconds; the log covers t = 0 ..= duration.
    pub duration: f64,
    /// Master shaft inertia (hand fixture folded in), kg·m².
    #[serde(default = "default_inertia")]
    pub master_inertia: f64,
    /// Slave shaft inertia, kg·m².
    #[serde(default = "default_inertia")]
    pub slave_inertia: f64,
    pub transmission: TransmissionSpec,
    pub environment: EnvironmentSpec,
    pub operator: OperatorSpec,
    #[serde(default)]
    pub sensors: SensorSpec,
    /// Seed for the sensor-noise stream; equal seeds give bit-identical logs.
    #[serde(default)]
    pub rng_seed: u64,
    /// Apply the environment torque one tick late, modeling a DAQ pipeline
    /// that renders from the previous sample. Default off (ideal rendering).
    #[serde(default)]
    pub environment_delay: bool,
    #[serde(default)]
    pub initial_master: ShaftState,
    #[serde(default)]
    pub initial_slave: ShaftState,
}

fn default_dt() -> f64 {
    DEFAULT_DT
}
fn default_inertia() -> f64 {
    DEFAULT_INERTIA
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid simulation config: {field} must be {requirement} (got {value})")]
    InvalidConfig {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error(transparent)]
    Transmission(#[from] TransmissionError),
    #[error(transparent)]
    Environment(#[from] EnvironmentError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error("integration diverged (non-finite state) at tick {tick}, t = {time} s")]
    Diverged { tick: usize, time: f64 },
    #[error("CSV schema mismatch: {detail}")]
    CsvSchema { detail: String },
    #[error("CSV parse error at line {line}: {detail}")]
    CsvParse { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SensorSpec {
    pub fn validate(&self) -> Result<(), EngineError> {
        let check = |field, requirement, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(EngineError::InvalidConfig {
                    field,
                    requirement,
                    value,
                })
            }
        };
        check(
            "sensors.torque_saturation",
            "finite and > 0",
            self.torque_saturation,
            self.torque_saturation > 0.0,
        )?;
        check(
            "sensors.torque_noise_std",
            "finite and ≥ 0",
            self.torque_noise_std,
            self.torque_noise_std >= 0.0,
        )?;
        check(
            "sensors.encoder_counts_per_rev",
            "≥ 1",
            f64::from(self.encoder_counts_per_rev),
            self.encoder_counts_per_rev >= 1,
        )
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        let check = |field, requirement, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(EngineError::InvalidConfig {
                    field,
                    requirement,
                    value,
                })
            }
        };
        check("dt", "finite and > 0", self.dt, self.dt > 0.0)?;
        check(
            "duration",
            "finite and ≥ dt",
            self.duration,
            self.duration >= self.dt,
        )?;
        check(
            "master_inertia",
            "finite and > 0",
            self.master_inertia,
            self.master_inertia > 0.0,
        )?;
        check(
            "slave_inertia",
            "finite and > 0",
            self.slave_inertia,
            self.slave_inertia > 0.0,
        )?;
        for (field, state) in [
            ("initial_master", self.initial_master),
            ("initial_slave", self.initial_slave),
        ] {
            if !state.is_finite() {
                return Err(EngineError::InvalidConfig {
                    field,
                    requirement: "finite",
                    value: f64::NAN,
                });
            }
        }
        self.sensors.validate()?;
        self.transmission.validate()?;
        self.environment.validate()?;
        self.operator.validate()?;
        if matches!(self.transmission, TransmissionSpec::Rigid { .. }) {
            // The rigid variant needs coincident initial states to merge.
            rigid_constraint(self.initial_master, self.initial_slave)?;
        }
        Ok(())
    }

    /// Number of integration steps; the log holds `n_steps() + 1` rows.
    pub fn n_steps(&self) -> usize {
        // Nudge before flooring so durations that are exact multiples of dt
        // in real arithmetic (e.g. 10 / 1e-3) do not lose the last sample.
        (self.duration / self.dt + 1e-9).floor() as usize
    }
}

/// Snap an angle onto the encoder grid: floor(angle·counts/2π)·2π/counts.
///
/// Truncation is toward −∞, so the error lies in [0, 2π/counts) and angles
/// exactly on a count boundary pass through unchanged.
pub fn encoder_quantize(angle: f64, counts_per_rev: u32) -> f64 {
    let counts = f64::from(counts_per_rev);
    (angle * counts / TAU).floor() * TAU / counts
}

/// Synchronized per-tick record of one run: true states, true and sensed
/// torques, and quantized encoder angles, uniformly sampled at `dt`.
///
/// Column order (also the CSV header order) is the field order below.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeriesLog {
    pub time: Vec<f64>,
    pub master_angle: Vec<f64>,
    pub master_velocity: Vec<f64>,
    pub slave_angle: Vec<f64>,
    pub slave_velocity: Vec<f64>,
    /// True torque the operator applied to the master shaft, N·m.
    pub operator_torque: Vec<f64>,
    /// Operator torque as the master-side sensor reports it (noise then
    /// saturation applied), N·m.
    pub sensed_master_torque: Vec<f64>,
    /// Torque the environment actually applied to the slave during the tick
    /// (equals the rendered torque of the previous tick when the one-tick
    /// delay is enabled), N·m.
    pub environment_torque: Vec<f64>,
    /// Environment torque as the slave-side sensor reports it, N·m.
    pub sensed_environment_torque: Vec<f64>,
    pub master_angle_quantized: Vec<f64>,
    pub slave_angle_quantized: Vec<f64>,
}

const CSV_HEADER: &str = "time,master_angle,master_velocity,slave_angle,slave_velocity,\
operator_torque,sensed_master_torque,environment_torque,sensed_environment_torque,\
master_angle_quantized,slave_angle_quantized";

impl TimeSeriesLog {
    fn with_capacity(n: usize) -> Self {
        TimeSeriesLog {
            time: Vec::with_capacity(n),
            master_angle: Vec::with_capacity(n),
            master_velocity: Vec::with_capacity(n),
            slave_angle: Vec::with_capacity(n),
            slave_velocity: Vec::with_capacity(n),
            operator_torque: Vec::with_capacity(n),
            sensed_master_torque: Vec::with_capacity(n),
            environment_torque: Vec::with_capacity(n),
            sensed_environment_torque: Vec::with_capacity(n),
            master_angle_quantized: Vec::with_capacity(n),
            slave_angle_quantized: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    fn columns(&self) -> [&Vec<f64>; 11] {
        [
            &self.time,
            &self.master_angle,
            &self.master_velocity,
            &self.slave_angle,
            &self.slave_velocity,
            &self.operator_torque,
            &self.sensed_master_torque,
            &self.environment_torque,
            &self.sensed_environment_torque,
            &self.master_angle_quantized,
            &self.slave_angle_quantized,
        ]
    }

    fn columns_mut(&mut self) -> [&mut Vec<f64>; 11] {
        [
            &mut self.time,
            &mut self.master_angle,
            &mut self.master_velocity,
            &mut self.slave_angle,
            &mut self.slave_velocity,
            &mut self.operator_torque,
            &mut self.sensed_master_torque,
            &mut self.environment_torque,
            &mut self.sensed_environment_torque,
            &mut self.master_angle_quantized,
            &mut self.slave_angle_quantized,
        ]
    }

    /// Render the log as headered CSV with full round-trip float precision.
    pub fn to_csv_string(&self) -> String {
        use std::fmt::Write;
        let mut out = String::with_capacity(32 * 11 * (self.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        let cols = self.columns();
        for row in 0..self.len() {
            for (i, col) in cols.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write!(out, "{}", col[row]).expect("writing to String cannot fail");
            }
            out.push('\n');
        }
        out
    }

    /// Parse a CSV produced by [`TimeSeriesLog::to_csv_string`].
    pub fn from_csv_str(text: &str) -> Result<Self, EngineError> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header.trim_end() != CSV_HEADER {
            return Err(EngineError::CsvSchema {
                detail: format!("expected header \"{CSV_HEADER}\", found \"{header}\""),
            });
        }
        let mut log = TimeSeriesLog::default();
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            if line.trim().is_empty() {
                continue;
            }
            let cols = log.columns_mut();
            let mut n = 0;
            for cell in line.split(',') {
                if n >= cols.len() {
                    return Err(EngineError::CsvParse {
                        line: line_no,
                        detail: format!("expected {} columns, found more", cols.len()),
                    });
                }
                let value = cell.trim().parse::<f64>().map_err(|e| EngineError::CsvParse {
                    line: line_no,
                    detail: format!("bad float {cell:?}: {e}"),
                })?;
                cols[n].push(value);
                n += 1;
            }
            if n != cols.len() {
                return Err(EngineError::CsvParse {
                    line: line_no,
                    detail: format!("expected {} columns, found {n}", cols.len()),
                });
            }
        }
        Ok(log)
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<(), EngineError> {
        std::fs::write(path, self.to_csv_string())?;
        Ok(())
    }

    pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Self, EngineError> {
        Self::from_csv_str(&std::fs::read_to_string(path)?)
    }

    #[allow(clippy::too_many_arguments)]
    fn push_row(
        &mut self,
        time: f64,
        master: ShaftState,
        slave: ShaftState,
        operator_torque: f64,
        sensed_master_torque: f64,
        environment_torque: f64,
        sensed_environment_torque: f64,
        master_angle_quantized: f64,
        slave_angle_quantized: f64,
    ) {
        self.time.push(time);
        self.master_angle.push(master.angle);
        self.master_velocity.push(master.velocity);
        self.slave_angle.push(slave.angle);
        self.slave_velocity.push(slave.velocity);
        self.operator_torque.push(operator_torque);
        self.sensed_master_torque.push(sensed_master_torque);
        self.environment_torque.push(environment_torque);
        self.sensed_environment_torque.push(sensed_environment_torque);
        self.master_angle_quantized.push(master_angle_quantized);
        self.slave_angle_quantized.push(slave_angle_quantized);
    }
}

/// Run a simulation with the environment named in the config.
pub fn run_simulation(config: &SimConfig) -> Result<TimeSeriesLog, EngineError> {
    config.validate()?;
    let env = config.environment;
    run_simulation_with_env(config, |_t, slave| {
        // Spec validated above and states stay finite (checked every tick).
        environment_torque(slave, &env).expect("validated environment on finite state")
    })
}

/// Run a simulation with a caller-supplied environment callback.
///
/// `env_fn(t, slave)` returns the torque on the slave shaft, replacing
/// `config.environment` (which is still validated but otherwise unused);
/// `slave` is the quantized/backward-difference state when
/// `angle_from_quantized` is set, the true state otherwise. This is the
/// extension point for environments beyond the built-in variants.
pub fn run_simulation_with_env<F>(
    config: &SimConfig,
    mut env_fn: F,
) -> Result<TimeSeriesLog, EngineError>
where
    F: FnMut(f64, ShaftState) -> f64,
{
    config.validate()?;
    let dt = config.dt;
    let counts = config.sensors.encoder_counts_per_rev;
    let saturation = config.sensors.torque_saturation;
    let noise_std = config.sensors.torque_noise_std;
    let n_steps = config.n_steps();

    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let noise = if noise_std > 0.0 {
        Some(Normal::new(0.0, noise_std).expect("validated noise std"))
    } else {
        None
    };

    let rigid = match config.transmission {
        TransmissionSpec::Rigid { parasitic_damping } => Some(parasitic_damping),
        _ => None,
    };
    let merged_inertia = config.master_inertia + config.slave_inertia;

    let mut master = config.initial_master;
    let mut slave = config.initial_slave;
    let mut prev_master_q = encoder_quantize(master.angle, counts);
    let mut prev_slave_q = encoder_quantize(slave.angle, counts);
    let mut pending_env_torque = 0.0;
    let mut log = TimeSeriesLog::with_capacity(n_steps + 1);

    for tick in 0..=n_steps {
        let t = tick as f64 * dt;
        let master_q = encoder_quantize(master.angle, counts);
        let slave_q = encoder_quantize(slave.angle, counts);
        // Controller-visible states: quantized angle plus backward-difference
        // velocity when emulating encoder-based control, true states in
        // oracle mode. The first tick has no previous sample, so its
        // difference velocity is zero.
        let (master_ctrl, slave_ctrl) = if config.sensors.angle_from_quantized {
            (
                ShaftState::new(master_q, (master_q - prev_master_q) / dt),
                ShaftState::new(slave_q, (slave_q - prev_slave_q) / dt),
            )
        } else {
            (master, slave)
        };

        // The operator's hand acts on the physical shaft, not the encoder.
        let tau_operator = operator_torque(t, master, &config.operator)?;
        let rendered = env_fn(t, slave_ctrl);
        let tau_environment = if config.environment_delay {
            std::mem::replace(&mut pending_env_torque, rendered)
        } else {
            rendered
        };

        let mut draw = |value: f64| {
            let noisy = match &noise {
                Some(n) => value + rng.sample(n),
                None => value,
            };
            noisy.clamp(-saturation, saturation)
        };
        let sensed_master = draw(tau_operator);
        let sensed_environment = draw(tau_environment);

        log.push_row(
            t,
            master,
            slave,
            tau_operator,
            sensed_master,
            tau_environment,
            sensed_environment,
            master_q,
            slave_q,
        );
        prev_master_q = master_q;
        prev_slave_q = slave_q;

        if tick == n_steps {
            break;
        }
        if let Some(parasitic_damping) = rigid {
            // Merged single inertia: velocity first (semi-implicit Euler).
            let accel =
                (tau_operator + tau_environment - parasitic_damping * master.velocity)
                    / merged_inertia;
            master.velocity += dt * accel;
            master.angle += dt * master.velocity;
            slave = master;
        } else {
            // The spring-damper coupling is a physical element and always
            // sees true states; the PD controller sees controller states.
            let (tau_master, tau_slave) = match config.transmission {
                TransmissionSpec::Electromechanical { .. } => {
                    coupling_torques(master_ctrl, slave_ctrl, &config.transmission)?
                }
                _ => coupling_torques(master, slave, &config.transmission)?,
            };
            master.velocity += dt * (tau_operator + tau_master) / config.master_inertia;
            master.angle += dt * master.velocity;
            slave.velocity += dt * (tau_slave + tau_environment) / config.slave_inertia;
            slave.angle += dt * slave.velocity;
        }
        if !master.is_finite() || !slave.is_finite() {
            return Err(EngineError::Diverged {
                tick: tick + 1,
                time: (tick + 1) as f64 * dt,
            });
        }
    }
    Ok(log)
}
