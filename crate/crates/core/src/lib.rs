//! Core library for a desk-scale one-degree-of-freedom bilateral teleoperator
//! simulator: master/slave shaft dynamics under three transmission models,
//! virtual environments, scripted operator inputs, a fixed-step simulation
//! engine with sensor models, second-order system identification, and
//! psychophysics task plumbing.

pub mod engine;
pub mod environment;
pub mod operator;
pub mod psychophysics;
pub mod sysid;
pub mod transmission;

pub use engine::{
    encoder_quantize, run_simulation, run_simulation_with_env, EngineError, SensorSpec, SimConfig,
    TimeSeriesLog,
};
pub use environment::{
    deg_to_rad, environment_torque, mnm_per_deg_to_nm_per_rad, rad_to_deg, EnvironmentError,
    EnvironmentSpec,
};
pub use operator::{operator_torque, OperatorError, OperatorSpec, ReferenceProfile};
pub use psychophysics::{
    effective_stiffness, fit_psychometric, fit_psychometric_with_lapse, jnd,
    run_constant_stimuli, run_staircase, simulated_observer, staircase_threshold,
    staircase_update, stiffness_discrimination_session, PsychError, PsychometricFunction,
    StaircaseState, TrialRecord,
};
pub use sysid::{
    bode, final_prediction_error, fit_second_order, fit_second_order_with_options, percent_fit,
    step_response, step_value, FitOptions, FitReport, SecondOrderModel, SysIdError,
};
pub use transmission::{
    coupling_torques, rigid_constraint, ShaftState, TransmissionError, TransmissionSpec,
};
