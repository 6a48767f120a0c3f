//! Virtual environments rendered at the slave shaft.
//!
//! The slave's free end is loaded by either nothing (free space), a virtual
//! torsion spring, or a spring/damper combination. Torques follow the motor
//! sign convention: a positive angle past the rest angle produces a negative
//! (restoring) torque.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transmission::ShaftState;

/// What the slave shaft pushes against.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvironmentSpec {
    /// No environment rendering; the slave spins freely.
    FreeSpace,
    /// Pure virtual torsion spring about `rest_angle`.
    TorsionSpring {
        stiffness: f64,
        #[serde(default)]
        rest_angle: f64,
    },
    /// Torsion spring plus viscous damping.
    SpringDamperEnv {
        stiffness: f64,
        damping: f64,
        #[serde(default)]
        rest_angle: f64,
    },
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EnvironmentError {
    #[error("invalid environment spec: {field} must be {requirement} (got {value})")]
    InvalidSpec {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("environment torque evaluated on a non-finite slave state")]
    NonFiniteState,
}

impl EnvironmentSpec {
    /// Check the parameter invariants for this variant.
    pub fn validate(&self) -> Result<(), EnvironmentError> {
        let check = |field: &'static str,
                     value: f64,
                     requirement: &'static str,
                     ok: bool|
         -> Result<(), EnvironmentError> {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(EnvironmentError::InvalidSpec {
                    field,
                    requirement,
                    value,
                })
            }
        };
        match *self {
            EnvironmentSpec::FreeSpace => Ok(()),
            EnvironmentSpec::TorsionSpring {
                stiffness,
                rest_angle,
            } => {
                check("stiffness", stiffness, "finite and ≥ 0", stiffness >= 0.0)?;
                check("rest_angle", rest_angle, "finite", true)
            }
            EnvironmentSpec::SpringDamperEnv {
                stiffness,
                damping,
                rest_angle,
            } => {
                check("stiffness", stiffness, "finite and ≥ 0", stiffness >= 0.0)?;
                check("damping", damping, "finite and ≥ 0", damping >= 0.0)?;
                check("rest_angle", rest_angle, "finite", true)
            }
        }
    }
}

/// Torque the environment applies to the slave shaft, N·m.
pub fn environment_torque(
    slave: ShaftState,
    spec: &EnvironmentSpec,
) -> Result<f64, EnvironmentError> {
    spec.validate()?;
    if !slave.is_finite() {
        return Err(EnvironmentError::NonFiniteState);
    }
    Ok(match *spec {
        EnvironmentSpec::FreeSpace => 0.0,
        EnvironmentSpec::TorsionSpring {
            stiffness,
            rest_angle,
        } => -stiffness * (slave.angle - rest_angle),
        EnvironmentSpec::SpringDamperEnv {
            stiffness,
            damping,
            rest_angle,
        } => -stiffness * (slave.angle - rest_angle) - damping * slave.velocity,
    })
}

/// Convert a stiffness quoted in mN·m/deg to N·m/rad.
pub fn mnm_per_deg_to_nm_per_rad(value: f64) -> f64 {
    value * 1e-3 * (180.0 / std::f64::consts::PI)
}

/// Convert degrees to radians.
pub fn deg_to_rad(degrees: f64) -> f64 {
    degrees.to_radians()
}

/// Convert radians to degrees.
pub fn rad_to_deg(radians: f64) -> f64 {
    radians.to_degrees()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn free_space_renders_nothing() {
        let torque = environment_torque(ShaftState::new(2.0, -3.0), &EnvironmentSpec::FreeSpace);
        assert_eq!(torque.unwrap(), 0.0);
    }

    #[test]
    fn torsion_spring_matches_converted_catalog_stiffness() {
        // 4 mN·m/deg converts to 0.22918… N·m/rad; at 1 rad the spring pulls
        // back with that torque. Expected value computed by hand:
        // 4e-3 · 180/π = 0.72/π.
        let k = mnm_per_deg_to_nm_per_rad(4.0);
        assert_relative_eq!(k, 0.22918311805232927, max_relative = 1e-15);
        let spec = EnvironmentSpec::TorsionSpring {
            stiffness: k,
            rest_angle: 0.0,
        };
        let torque = environment_torque(ShaftState::new(1.0, 0.0), &spec).unwrap();
        assert_relative_eq!(torque, -0.22918311805232927, max_relative = 1e-15);
    }

    #[test]
    fn spring_is_slack_at_rest_angle() {
        let spec = EnvironmentSpec::TorsionSpring {
            stiffness: 3.7,
            rest_angle: 0.4,
        };
        assert_eq!(
            environment_torque(ShaftState::new(0.4, 0.0), &spec).unwrap(),
            0.0
        );
    }

    #[test]
    fn spring_damper_adds_viscous_term() {
        let spec = EnvironmentSpec::SpringDamperEnv {
            stiffness: 2.0,
            damping: 0.5,
            rest_angle: 0.0,
        };
        let torque = environment_torque(ShaftState::new(1.0, 2.0), &spec).unwrap();
        assert_eq!(torque, -2.0 - 1.0);
    }

    #[test]
    fn unit_conversion_endpoints() {
        assert_eq!(mnm_per_deg_to_nm_per_rad(0.0), 0.0);
        // π/180·1000 mN·m/deg is exactly 1 N·m/rad.
        assert_relative_eq!(
            mnm_per_deg_to_nm_per_rad(std::f64::consts::PI / 180.0 * 1000.0),
            1.0,
            max_relative = 1e-15
        );
        assert_relative_eq!(deg_to_rad(180.0), std::f64::consts::PI, max_relative = 1e-15);
        assert_relative_eq!(rad_to_deg(std::f64::consts::PI), 180.0, max_relative = 1e-15);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let bad = EnvironmentSpec::TorsionSpring {
            stiffness: -1.0,
            rest_angle: 0.0,
        };
        assert!(matches!(
            bad.validate(),
            Err(EnvironmentError::InvalidSpec { field: "stiffness", .. })
        ));
        let nan_rest = EnvironmentSpec::SpringDamperEnv {
            stiffness: 1.0,
            damping: 0.0,
            rest_angle: f64::NAN,
        };
        assert!(nan_rest.validate().is_err());
        assert!(matches!(
            environment_torque(ShaftState::new(f64::INFINITY, 0.0), &EnvironmentSpec::FreeSpace),
            Err(EnvironmentError::NonFiniteState)
        ));
    }

    proptest! {
        /// The torsion spring torque is odd about its rest angle.
        #[test]
        fn torsion_spring_is_odd_about_rest(
            k in 0.0f64..10.0,
            rest in -2.0f64..2.0,
            x in -3.0f64..3.0,
        ) {
            let spec = EnvironmentSpec::TorsionSpring { stiffness: k, rest_angle: rest };
            let plus = environment_torque(ShaftState::new(rest + x, 0.0), &spec).unwrap();
            let minus = environment_torque(ShaftState::new(rest - x, 0.0), &spec).unwrap();
            let scale = k.abs() * x.abs() + 1e-12;
            prop_assert!((plus + minus).abs() <= 1e-12 * scale.max(1.0));
        }

        /// Free space is identically zero over any state.
        #[test]
        fn free_space_zero_everywhere(a in -100.0f64..100.0, v in -100.0f64..100.0) {
            prop_assert_eq!(
                environment_torque(ShaftState::new(a, v), &EnvironmentSpec::FreeSpace).unwrap(),
                0.0
            );
        }
    }
}
