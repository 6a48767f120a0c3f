//! Master/slave shaft coupling models.
//!
//! Three transmissions connect the operator-side (master) shaft to the
//! environment-side (slave) shaft: a rigid link treated as an exact kinematic
//! constraint, a torsion spring / rotary damper pair with independently
//! engageable elements, and an electromechanical position-exchange PD servo
//! with symmetric torque saturation. There is no torque or position scaling
//! in any variant: coupling torques are equal and opposite before saturation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default transmission spring stiffness, N·m/rad.
pub const DEFAULT_STIFFNESS: f64 = 0.5;
/// Default transmission damper coefficient, N·m·s/rad.
pub const DEFAULT_DAMPING: f64 = 0.01;
/// Default PD proportional gain, N·m/rad.
pub const DEFAULT_KP: f64 = 2.0;
/// Default PD derivative gain, N·m·s/rad.
pub const DEFAULT_KD: f64 = 0.02;
/// Default rigid-link parasitic damping, N·m·s/rad.
pub const DEFAULT_PARASITIC_DAMPING: f64 = 0.005;
/// Default motor torque saturation, N·m (sized to the torque-sensor range).
pub const DEFAULT_MOTOR_TORQUE_LIMIT: f64 = 5.0;

/// Instantaneous state of one rotational inertia.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShaftState {
    /// Shaft angle, rad.
    pub angle: f64,
    /// Shaft angular velocity, rad/s.
    pub velocity: f64,
}

impl ShaftState {
    /// State at the origin with zero velocity.
    pub const REST: ShaftState = ShaftState {
        angle: 0.0,
        velocity: 0.0,
    };

    pub fn new(angle: f64, velocity: f64) -> Self {
        ShaftState { angle, velocity }
    }

    /// True when both fields are finite (no NaN/Inf).
    pub fn is_finite(&self) -> bool {
        self.angle.is_finite() && self.velocity.is_finite()
    }
}

impl Default for ShaftState {
    fn default() -> Self {
        ShaftState::REST
    }
}

/// Which master-slave coupling is installed, and its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransmissionSpec {
    /// Rigid link: master and slave move as one inertia. The link's own
    /// losses act on the merged shaft velocity.
    Rigid {
        #[serde(default = "default_parasitic_damping")]
        parasitic_damping: f64,
    },
    /// Torsion spring and rotary damper in parallel, each engageable on its
    /// own. Disengaging an element zeroes its contribution.
    SpringDamper {
        #[serde(default = "default_stiffness")]
        stiffness: f64,
        #[serde(default = "default_damping")]
        damping: f64,
        #[serde(default = "default_true")]
        spring_engaged: bool,
        #[serde(default = "default_true")]
        damper_engaged: bool,
    },
    /// Position-exchange PD servo driving the slave toward the master, with
    /// an equal-and-opposite back-drivable reaction on the master. Each
    /// side's torque is clamped to ±motor_torque_limit.
    Electromechanical {
        #[serde(default = "default_kp")]
        kp: f64,
        #[serde(default = "default_kd")]
        kd: f64,
        #[serde(default = "default_motor_torque_limit")]
        motor_torque_limit: f64,
    },
}

fn default_parasitic_damping() -> f64 {
    DEFAULT_PARASITIC_DAMPING
}
fn default_stiffness() -> f64 {
    DEFAULT_STIFFNESS
}
fn default_damping() -> f64 {
    DEFAULT_DAMPING
}
fn default_kp() -> f64 {
    DEFAULT_KP
}
fn default_kd() -> f64 {
    DEFAULT_KD
}
fn default_motor_torque_limit() -> f64 {
    DEFAULT_MOTOR_TORQUE_LIMIT
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum TransmissionError {
    /// A parameter violates its documented range.
    #[error("invalid transmission spec: {field} must be {requirement} (got {value})")]
    InvalidSpec {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    /// `coupling_torques` was asked for the rigid link, which exerts a
    /// kinematic constraint rather than a finite coupling torque.
    #[error("rigid transmission exerts a constraint, not a coupling torque; use rigid_constraint")]
    RigidVariant,
    /// `rigid_constraint` was given shafts that do not coincide.
    #[error(
        "rigid constraint requires coincident shafts \
         (master angle {master_angle}, slave angle {slave_angle})"
    )]
    MismatchedStates {
        master_angle: f64,
        slave_angle: f64,
    },
}

impl TransmissionSpec {
    /// Check the parameter invariants for this variant.
    pub fn validate(&self) -> Result<(), TransmissionError> {
        let check = |field: &'static str,
                     value: f64,
                     requirement: &'static str,
                     ok: bool|
         -> Result<(), TransmissionError> {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(TransmissionError::InvalidSpec {
                    field,
                    requirement,
                    value,
                })
            }
        };
        match *self {
            TransmissionSpec::Rigid { parasitic_damping } => {
                check("parasitic_damping", parasitic_damping, "finite and ≥ 0", parasitic_damping >= 0.0)
            }
            TransmissionSpec::SpringDamper {
                stiffness, damping, ..
            } => {
                check("stiffness", stiffness, "finite and ≥ 0", stiffness >= 0.0)?;
                check("damping", damping, "finite and ≥ 0", damping >= 0.0)
            }
            TransmissionSpec::Electromechanical {
                kp,
                kd,
                motor_torque_limit,
            } => {
                check("kp", kp, "finite and ≥ 0", kp >= 0.0)?;
                check("kd", kd, "finite and ≥ 0", kd >= 0.0)?;
                check(
                    "motor_torque_limit",
                    motor_torque_limit,
                    "finite and > 0",
                    motor_torque_limit > 0.0,
                )
            }
        }
    }
}

/// Coupling torques `(on_master, on_slave)` exchanged through a compliant or
/// servo transmission, in N·m.
///
/// The spring/damper pair produces τ = k_eff·(θ_m − θ_s) + b_eff·(ω_m − ω_s)
/// on the slave and −τ on the master. The electromechanical servo computes
/// the same PD law with (kp, kd), then clamps each side independently to
/// ±motor_torque_limit. The rigid link has no finite coupling torque; callers
/// must integrate it as a merged inertia via [`rigid_constraint`].
pub fn coupling_torques(
    master: ShaftState,
    slave: ShaftState,
    spec: &TransmissionSpec,
) -> Result<(f64, f64), TransmissionError> {
    spec.validate()?;
    match *spec {
        TransmissionSpec::Rigid { .. } => Err(TransmissionError::RigidVariant),
        TransmissionSpec::SpringDamper {
            stiffness,
            damping,
            spring_engaged,
            damper_engaged,
        } => {
            let k_eff = if spring_engaged { stiffness } else { 0.0 };
            let b_eff = if damper_engaged { damping } else { 0.0 };
            let tau = k_eff * (master.angle - slave.angle)
                + b_eff * (master.velocity - slave.velocity);
            Ok((-tau, tau))
        }
        TransmissionSpec::Electromechanical {
            kp,
            kd,
            motor_torque_limit,
        } => {
            let tau = kp * (master.angle - slave.angle) + kd * (master.velocity - slave.velocity);
            let clamped = tau.clamp(-motor_torque_limit, motor_torque_limit);
            Ok((-clamped, clamped))
        }
    }
}

/// Merge two rigidly coupled shafts into the single state they share.
///
/// The engine integrates the rigid variant as one inertia (J_m + J_s) and
/// keeps master and slave identical, so by construction the inputs coincide;
/// mismatched inputs indicate a constraint violation and are rejected.
pub fn rigid_constraint(
    master: ShaftState,
    slave: ShaftState,
) -> Result<ShaftState, TransmissionError> {
    if master == slave {
        Ok(master)
    } else {
        Err(TransmissionError::MismatchedStates {
            master_angle: master.angle,
            slave_angle: slave.angle,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spring(k: f64, b: f64) -> TransmissionSpec {
        TransmissionSpec::SpringDamper {
            stiffness: k,
            damping: b,
            spring_engaged: true,
            damper_engaged: true,
        }
    }

    #[test]
    fn identical_states_produce_zero_torque() {
        let s = ShaftState::new(0.3, -1.2);
        let (tm, ts) = coupling_torques(s, s, &spring(7.0, 2.0)).unwrap();
        assert_eq!(tm, 0.0);
        assert_eq!(ts, 0.0);
    }

    #[test]
    fn spring_torque_matches_hand_value() {
        // k = 1 N·m/rad across a 0.5 rad twist: τ = 0.5 N·m on the slave.
        let master = ShaftState::new(0.5, 0.7);
        let slave = ShaftState::new(0.0, 0.7);
        let (tm, ts) = coupling_torques(master, slave, &spring(1.0, 0.0)).unwrap();
        assert_eq!(tm, -0.5);
        assert_eq!(ts, 0.5);
    }

    #[test]
    fn disengaged_elements_transmit_nothing() {
        let spec = TransmissionSpec::SpringDamper {
            stiffness: 5.0,
            damping: 3.0,
            spring_engaged: false,
            damper_engaged: false,
        };
        let master = ShaftState::new(1.0, 2.0);
        let slave = ShaftState::new(-1.0, -2.0);
        assert_eq!(coupling_torques(master, slave, &spec).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn servo_clamps_at_torque_limit() {
        // kp·Δθ = 10·0.5 = 5 N·m, clamped to the 2 N·m limit.
        let spec = TransmissionSpec::Electromechanical {
            kp: 10.0,
            kd: 0.0,
            motor_torque_limit: 2.0,
        };
        let master = ShaftState::new(0.5, 0.0);
        let slave = ShaftState::REST;
        assert_eq!(coupling_torques(master, slave, &spec).unwrap(), (-2.0, 2.0));
        // And symmetrically for the opposite twist.
        let (tm, ts) = coupling_torques(slave, master, &spec).unwrap();
        assert_eq!((tm, ts), (2.0, -2.0));
    }

    #[test]
    fn rigid_variant_has_no_coupling_torque() {
        let spec = TransmissionSpec::Rigid {
            parasitic_damping: 0.005,
        };
        let err = coupling_torques(ShaftState::REST, ShaftState::REST, &spec).unwrap_err();
        assert_eq!(err, TransmissionError::RigidVariant);
    }

    #[test]
    fn rigid_constraint_accepts_coincident_and_rejects_mismatch() {
        let s = ShaftState::new(0.1, 0.0);
        assert_eq!(rigid_constraint(s, s).unwrap(), s);
        let other = ShaftState::new(0.2, 0.0);
        assert!(matches!(
            rigid_constraint(s, other),
            Err(TransmissionError::MismatchedStates { .. })
        ));
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(matches!(
            spring(-1.0, 0.0).validate(),
            Err(TransmissionError::InvalidSpec { field: "stiffness", .. })
        ));
        assert!(matches!(
            TransmissionSpec::Rigid {
                parasitic_damping: f64::NAN
            }
            .validate(),
            Err(TransmissionError::InvalidSpec { .. })
        ));
        assert!(matches!(
            TransmissionSpec::Electromechanical {
                kp: 1.0,
                kd: 0.0,
                motor_torque_limit: 0.0,
            }
            .validate(),
            Err(TransmissionError::InvalidSpec { field: "motor_torque_limit", .. })
        ));
    }

    #[test]
    fn types_are_send_sync() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<ShaftState>();
        assert_send_sync::<TransmissionSpec>();
        assert_send_sync::<TransmissionError>();
    }

    proptest! {
        /// Newton's third law holds exactly for the compliant coupling and
        /// for the servo (saturated or not, by symmetric clamping).
        #[test]
        fn torques_are_equal_and_opposite(
            ma in -10.0f64..10.0, mv in -50.0f64..50.0,
            sa in -10.0f64..10.0, sv in -50.0f64..50.0,
            k in 0.0f64..100.0, b in 0.0f64..10.0,
            limit in 0.01f64..5.0,
        ) {
            let master = ShaftState::new(ma, mv);
            let slave = ShaftState::new(sa, sv);
            let (tm, ts) = coupling_torques(master, slave, &spring(k, b)).unwrap();
            prop_assert_eq!(tm, -ts);
            let servo = TransmissionSpec::Electromechanical { kp: k, kd: b, motor_torque_limit: limit };
            let (tm, ts) = coupling_torques(master, slave, &servo).unwrap();
            prop_assert_eq!(tm, -ts);
            prop_assert!(ts.abs() <= limit);
        }

        /// Disengaging both elements is bit-identical to zeroed coefficients.
        #[test]
        fn disengaged_equals_zero_coefficients(
            ma in -10.0f64..10.0, mv in -50.0f64..50.0,
            sa in -10.0f64..10.0, sv in -50.0f64..50.0,
            k in 0.0f64..100.0, b in 0.0f64..10.0,
        ) {
            let master = ShaftState::new(ma, mv);
            let slave = ShaftState::new(sa, sv);
            let disengaged = TransmissionSpec::SpringDamper {
                stiffness: k, damping: b,
                spring_engaged: false, damper_engaged: false,
            };
            let zeroed = spring(0.0, 0.0);
            prop_assert_eq!(
                coupling_torques(master, slave, &disengaged).unwrap(),
                coupling_torques(master, slave, &zeroed).unwrap()
            );
        }

        /// A servo whose limit is unreachable is bit-identical to the
        /// spring/damper with k = kp, b = kd.
        #[test]
        fn unsaturated_servo_equals_spring_damper(
            ma in -1.0f64..1.0, mv in -5.0f64..5.0,
            sa in -1.0f64..1.0, sv in -5.0f64..5.0,
            kp in 0.0f64..10.0, kd in 0.0f64..1.0,
        ) {
            let master = ShaftState::new(ma, mv);
            let slave = ShaftState::new(sa, sv);
            // |τ| ≤ kp·2 + kd·10 < 30 < limit, so the clamp never engages.
            let servo = TransmissionSpec::Electromechanical { kp, kd, motor_torque_limit: 1e3 };
            prop_assert_eq!(
                coupling_torques(master, slave, &servo).unwrap(),
                coupling_torques(master, slave, &spring(kp, kd)).unwrap()
            );
        }
    }
}
