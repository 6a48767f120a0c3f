//! Psychophysics paradigms against a simulated observer.
//!
//! Implements the Method of Constant Stimuli and transformed (1-up/2-down)
//! adaptive staircases, a cumulative-Gaussian observer with a fixed lapse
//! rate, maximum-likelihood psychometric fitting, and a closed-loop session
//! in which the observer discriminates environment stiffness *through* a
//! transmission: the decision variable is the sysid-fitted participant-side
//! stiffness, so transmission dynamics directly shape the perceptual outcome.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::engine::{run_simulation, EngineError, SimConfig};
use crate::environment::EnvironmentSpec;
use crate::sysid::{fit_second_order, SysIdError};
use crate::transmission::TransmissionSpec;

/// Default observer lapse rate.
pub const DEFAULT_LAPSE_RATE: f64 = 0.02;
/// Default number of reversals at which a staircase terminates.
pub const DEFAULT_TERMINATION_REVERSALS: usize = 12;
/// Smallest slope the psychometric fit reports before declaring the data
/// degenerate (perfectly separated responses).
pub const SIGMA_MIN: f64 = 1e-6;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is well formed")
}

/// Cumulative-Gaussian psychometric function with a fixed lapse rate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsychometricFunction {
    /// Point of subjective equality μ, stimulus units.
    pub threshold_mu: f64,
    /// Slope parameter σ, stimulus units.
    pub slope_sigma: f64,
    /// Stimulus-independent error rate, applied symmetrically.
    #[serde(default = "default_lapse")]
    pub lapse_rate: f64,
}

fn default_lapse() -> f64 {
    DEFAULT_LAPSE_RATE
}

impl PsychometricFunction {
    pub fn validate(&self) -> Result<(), PsychError> {
        if !self.threshold_mu.is_finite() {
            return Err(PsychError::InvalidParameter {
                field: "threshold_mu",
                requirement: "finite",
                value: self.threshold_mu,
            });
        }
        if !self.slope_sigma.is_finite() || self.slope_sigma <= 0.0 {
            return Err(PsychError::InvalidParameter {
                field: "slope_sigma",
                requirement: "finite and > 0",
                value: self.slope_sigma,
            });
        }
        if !self.lapse_rate.is_finite() || !(0.0..0.5).contains(&self.lapse_rate) {
            return Err(PsychError::InvalidParameter {
                field: "lapse_rate",
                requirement: "in [0, 0.5)",
                value: self.lapse_rate,
            });
        }
        Ok(())
    }

    /// P(respond "comparison greater") at stimulus difference
    /// x = comparison − reference:
    /// lapse + (1 − 2·lapse)·Φ((x − μ)/σ), monotone in x.
    pub fn p_greater(&self, x: f64) -> f64 {
        self.lapse_rate
            + (1.0 - 2.0 * self.lapse_rate)
                * std_normal().cdf((x - self.threshold_mu) / self.slope_sigma)
    }
}

/// Just-noticeable difference of a fitted function: σ·Φ⁻¹(0.75).
pub fn jnd(pf: &PsychometricFunction) -> f64 {
    pf.slope_sigma * std_normal().inverse_cdf(0.75)
}

/// One presented trial with complete provenance: a logged session re-runs
/// bit-identically from its seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub reference: f64,
    pub comparison: f64,
    /// Observer judged the comparison greater than the reference.
    pub response_greater: bool,
    /// Response agrees with the sign of the true difference (a "greater"
    /// response to an equal pair counts as incorrect).
    pub correct: bool,
    /// Index of the uniform RNG draw that produced this response.
    pub rng_draw_index: u64,
}

/// Draw one response from the observer: "comparison greater" with
/// probability `pf.p_greater(comparison − reference)`.
pub fn simulated_observer<R: Rng>(
    reference: f64,
    comparison: f64,
    pf: &PsychometricFunction,
    rng: &mut R,
) -> bool {
    rng.gen::<f64>() < pf.p_greater(comparison - reference)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

/// State of a transformed up/down staircase (default rule: 1-up/2-down,
/// which converges to the 70.7%-correct level).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StaircaseState {
    /// Stimulus level presented on the next trial.
    pub current_level: f64,
    /// Additive step applied on every move.
    pub step_size: f64,
    /// Consecutive incorrect responses that trigger an up move (default 1).
    #[serde(default = "default_up_count")]
    pub up_count: u32,
    /// Consecutive correct responses that trigger a down move (default 2).
    #[serde(default = "default_down_count")]
    pub down_count: u32,
    #[serde(default)]
    pub consecutive_correct: u32,
    #[serde(default)]
    pub consecutive_incorrect: u32,
    /// Levels at which the movement direction changed.
    #[serde(default)]
    pub reversal_levels: Vec<f64>,
    #[serde(default)]
    pub trial_count: u64,
    /// Reversal count at which the staircase terminates (default 12).
    #[serde(default = "default_termination")]
    pub termination_reversals: usize,
    /// Lower bound for the level; down moves clamp here.
    #[serde(default = "default_floor")]
    pub floor_level: f64,
    #[serde(default)]
    pub last_direction: Option<Direction>,
}

fn default_up_count() -> u32 {
    1
}
fn default_down_count() -> u32 {
    2
}
fn default_termination() -> usize {
    DEFAULT_TERMINATION_REVERSALS
}
fn default_floor() -> f64 {
    f64::NEG_INFINITY
}

impl StaircaseState {
    /// A fresh 1-up/2-down staircase with 12-reversal termination and no
    /// floor.
    pub fn new(initial_level: f64, step_size: f64) -> Self {
        StaircaseState {
            current_level: initial_level,
            step_size,
            up_count: default_up_count(),
            down_count: default_down_count(),
            consecutive_correct: 0,
            consecutive_incorrect: 0,
            reversal_levels: Vec::new(),
            trial_count: 0,
            termination_reversals: DEFAULT_TERMINATION_REVERSALS,
            floor_level: default_floor(),
            last_direction: None,
        }
    }

    pub fn validate(&self) -> Result<(), PsychError> {
        let check = |field, requirement, value: f64, ok: bool| {
            if ok && value.is_finite() {
                Ok(())
            } else {
                Err(PsychError::InvalidParameter {
                    field,
                    requirement,
                    value,
                })
            }
        };
        check(
            "current_level",
            "finite",
            self.current_level,
            true,
        )?;
        check("step_size", "finite and > 0", self.step_size, self.step_size > 0.0)?;
        check(
            "up_count",
            "≥ 1",
            f64::from(self.up_count),
            self.up_count >= 1,
        )?;
        check(
            "down_count",
            "≥ 1",
            f64::from(self.down_count),
            self.down_count >= 1,
        )?;
        check(
            "termination_reversals",
            "≥ 1",
            self.termination_reversals as f64,
            self.termination_reversals >= 1,
        )?;
        if self.floor_level.is_nan() {
            return Err(PsychError::InvalidParameter {
                field: "floor_level",
                requirement: "not NaN",
                value: self.floor_level,
            });
        }
        Ok(())
    }

    pub fn is_terminated(&self) -> bool {
        self.reversal_levels.len() >= self.termination_reversals
    }
}

#[derive(Debug, Error)]
pub enum PsychError {
    #[error("invalid psychophysics parameter: {field} must be {requirement} (got {value})")]
    InvalidParameter {
        field: &'static str,
        requirement: &'static str,
        value: f64,
    },
    #[error("need at least 2 distinct stimulus levels (got {distinct_levels})")]
    InsufficientData { distinct_levels: usize },
    #[error("staircase has {reversals} reversals; threshold needs a terminated run with ≥ {required}")]
    InsufficientReversals { reversals: usize, required: usize },
    #[error(
        "responses are perfectly separated; slope clamped at {SIGMA_MIN} \
         (fitted μ = {})", .fit.threshold_mu
    )]
    Degenerate { fit: PsychometricFunction },
    #[error("fitted participant-side gain {gain} is not a usable stimulus (must be > 0)")]
    NonPositiveGain { gain: f64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    SysId(#[from] SysIdError),
}

/// Advance a staircase by one response.
///
/// 1-up/2-down semantics (generalized to `up_count`/`down_count`): after
/// `down_count` consecutive correct responses the level decreases by
/// `step_size` (counter resets); after `up_count` consecutive incorrect
/// responses it increases. A move records a reversal at the pre-move level
/// whenever its direction differs from the previous move's.
pub fn staircase_update(mut state: StaircaseState, response_correct: bool) -> StaircaseState {
    state.trial_count += 1;
    if response_correct {
        state.consecutive_correct += 1;
        state.consecutive_incorrect = 0;
        if state.consecutive_correct >= state.down_count {
            state.consecutive_correct = 0;
            apply_move(&mut state, Direction::Down);
        }
    } else {
        state.consecutive_incorrect += 1;
        state.consecutive_correct = 0;
        if state.consecutive_incorrect >= state.up_count {
            state.consecutive_incorrect = 0;
            apply_move(&mut state, Direction::Up);
        }
    }
    state
}

fn apply_move(state: &mut StaircaseState, direction: Direction) {
    if let Some(last) = state.last_direction {
        if last != direction {
            state.reversal_levels.push(state.current_level);
        }
    }
    state.last_direction = Some(direction);
    match direction {
        Direction::Up => state.current_level += state.step_size,
        Direction::Down => {
            state.current_level = (state.current_level - state.step_size).max(state.floor_level)
        }
    }
}

/// Threshold estimate of a terminated staircase: the mean of the reversal
/// levels excluding the first two (which still carry the starting point).
pub fn staircase_threshold(state: &StaircaseState) -> Result<f64, PsychError> {
    let required = state.termination_reversals.max(4);
    if !state.is_terminated() || state.reversal_levels.len() < 4 {
        return Err(PsychError::InsufficientReversals {
            reversals: state.reversal_levels.len(),
            required,
        });
    }
    let tail = &state.reversal_levels[2..];
    Ok(tail.iter().sum::<f64>() / tail.len() as f64)
}

/// Drive a staircase against a psychometric observer until it terminates (or
/// `max_trials` elapses, whichever is first). Each trial presents
/// comparison = reference + current_level; a response is correct when it
/// matches the sign of the true difference.
pub fn run_staircase(
    initial: StaircaseState,
    reference: f64,
    observer: &PsychometricFunction,
    seed: u64,
    max_trials: u64,
) -> Result<(StaircaseState, Vec<TrialRecord>), PsychError> {
    initial.validate()?;
    observer.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = initial;
    let mut records = Vec::new();
    let mut draw_index = 0;
    while !state.is_terminated() && state.trial_count < max_trials {
        let comparison = reference + state.current_level;
        let response_greater = simulated_observer(reference, comparison, observer, &mut rng);
        let correct = response_greater == (comparison > reference);
        records.push(TrialRecord {
            trial_index: records.len(),
            reference,
            comparison,
            response_greater,
            correct,
            rng_draw_index: draw_index,
        });
        draw_index += 1;
        state = staircase_update(state, correct);
    }
    Ok((state, records))
}

/// Method of Constant Stimuli: present each level `trials_per_level` times
/// in seeded-shuffled order and record the observer's responses.
///
/// Levels are absolute comparison stimuli judged against `reference`.
pub fn run_constant_stimuli(
    levels: &[f64],
    trials_per_level: usize,
    reference: f64,
    observer: &PsychometricFunction,
    seed: u64,
) -> Result<Vec<TrialRecord>, PsychError> {
    observer.validate()?;
    let mut distinct: Vec<f64> = levels.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 || levels.iter().any(|l| !l.is_finite()) {
        return Err(PsychError::InsufficientData {
            distinct_levels: distinct.len(),
        });
    }
    if trials_per_level < 1 {
        return Err(PsychError::InvalidParameter {
            field: "trials_per_level",
            requirement: "≥ 1",
            value: trials_per_level as f64,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<f64> = levels
        .iter()
        .flat_map(|&l| std::iter::repeat(l).take(trials_per_level))
        .collect();
    order.shuffle(&mut rng);
    let records = order
        .into_iter()
        .enumerate()
        .map(|(i, comparison)| {
            let response_greater = simulated_observer(reference, comparison, observer, &mut rng);
            TrialRecord {
                trial_index: i,
                reference,
                comparison,
                response_greater,
                correct: response_greater == (comparison > reference),
                rng_draw_index: i as u64,
            }
        })
        .collect();
    Ok(records)
}

/// Per-level response counts used by the psychometric fit.
struct LevelCounts {
    x: f64,
    greater: u64,
    total: u64,
}

fn group_by_level(records: &[TrialRecord]) -> Vec<LevelCounts> {
    let mut groups: Vec<LevelCounts> = Vec::new();
    for r in records {
        let x = r.comparison - r.reference;
        match groups.iter_mut().find(|g| g.x == x) {
            Some(g) => {
                g.total += 1;
                g.greater += u64::from(r.response_greater);
            }
            None => groups.push(LevelCounts {
                x,
                greater: u64::from(r.response_greater),
                total: 1,
            }),
        }
    }
    groups.sort_by(|a, b| a.x.total_cmp(&b.x));
    groups
}

/// Golden-section minimization of a unimodal function on [lo, hi].
fn golden_min<F: Fn(f64) -> f64>(mut lo: f64, mut hi: f64, f: F) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..120 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    0.5 * (lo + hi)
}

/// Maximum-likelihood cumulative-Gaussian fit with the default fixed lapse
/// rate. See [`fit_psychometric_with_lapse`].
pub fn fit_psychometric(records: &[TrialRecord]) -> Result<PsychometricFunction, PsychError> {
    fit_psychometric_with_lapse(records, DEFAULT_LAPSE_RATE)
}

/// Maximum-likelihood fit of (μ, σ) with the lapse rate held fixed, by
/// coordinate descent with golden-section line searches, iterated until the
/// negative log-likelihood improves by less than 1e-9.
///
/// Perfectly separated responses drive σ to zero; the fit is then clamped at
/// σ = [`SIGMA_MIN`] and reported as [`PsychError::Degenerate`] carrying the
/// clamped function.
pub fn fit_psychometric_with_lapse(
    records: &[TrialRecord],
    lapse_rate: f64,
) -> Result<PsychometricFunction, PsychError> {
    if !lapse_rate.is_finite() || !(0.0..0.5).contains(&lapse_rate) {
        return Err(PsychError::InvalidParameter {
            field: "lapse_rate",
            requirement: "in [0, 0.5)",
            value: lapse_rate,
        });
    }
    let groups = group_by_level(records);
    if groups.len() < 2 {
        return Err(PsychError::InsufficientData {
            distinct_levels: groups.len(),
        });
    }
    let min_x = groups.first().expect("nonempty").x;
    let max_x = groups.last().expect("nonempty").x;
    let span = max_x - min_x;

    // Perfect separation (including all-same responses) has no ML optimum:
    // report the clamped boundary fit instead of pretending convergence.
    let pure = groups
        .iter()
        .all(|g| g.greater == 0 || g.greater == g.total);
    if pure {
        let highest_never = groups
            .iter()
            .filter(|g| g.greater == 0)
            .map(|g| g.x)
            .fold(f64::NEG_INFINITY, f64::max);
        let lowest_always = groups
            .iter()
            .filter(|g| g.greater == g.total)
            .map(|g| g.x)
            .fold(f64::INFINITY, f64::min);
        if highest_never < lowest_always {
            let mu = match (
                highest_never.is_finite(),
                lowest_always.is_finite(),
            ) {
                (true, true) => 0.5 * (highest_never + lowest_always),
                (true, false) => highest_never,
                (false, true) => lowest_always,
                (false, false) => unreachable!("groups are nonempty"),
            };
            return Err(PsychError::Degenerate {
                fit: PsychometricFunction {
                    threshold_mu: mu,
                    slope_sigma: SIGMA_MIN,
                    lapse_rate,
                },
            });
        }
    }

    let nll = |mu: f64, sigma: f64| -> f64 {
        groups
            .iter()
            .map(|g| {
                let p = (lapse_rate
                    + (1.0 - 2.0 * lapse_rate) * std_normal().cdf((g.x - mu) / sigma))
                .clamp(1e-12, 1.0 - 1e-12);
                -(g.greater as f64 * p.ln()
                    + (g.total - g.greater) as f64 * (1.0 - p).ln())
            })
            .sum()
    };

    let (mu_lo, mu_hi) = (min_x - span, max_x + span);
    let (sigma_lo, sigma_hi) = (SIGMA_MIN, 10.0 * span);
    let mut mu = 0.5 * (min_x + max_x);
    let mut sigma = 0.5 * span;
    let mut best = nll(mu, sigma);
    for _ in 0..100 {
        mu = golden_min(mu_lo, mu_hi, |m| nll(m, sigma));
        sigma = golden_min(sigma_lo, sigma_hi, |s| nll(mu, s));
        let now = nll(mu, sigma);
        if (best - now).abs() < 1e-9 {
            break;
        }
        best = now;
    }
    let fit = PsychometricFunction {
        threshold_mu: mu,
        slope_sigma: sigma.max(SIGMA_MIN),
        lapse_rate,
    };
    if fit.slope_sigma <= 1.5 * SIGMA_MIN {
        return Err(PsychError::Degenerate {
            fit: PsychometricFunction {
                slope_sigma: SIGMA_MIN,
                ..fit
            },
        });
    }
    Ok(fit)
}

/// Stiffness as the observer experiences it through the transmission: run
/// the template simulation rendering a torsion spring of the given
/// stiffness, fit the participant-side admittance (sensed master torque →
/// master angle), and report 1/gain — the static stiffness the master port
/// actually presents.
pub fn effective_stiffness(
    template: &SimConfig,
    transmission: TransmissionSpec,
    stiffness: f64,
) -> Result<f64, PsychError> {
    let mut config = template.clone();
    config.transmission = transmission;
    config.environment = EnvironmentSpec::TorsionSpring {
        stiffness,
        rest_angle: 0.0,
    };
    let log = run_simulation(&config)?;
    let (model, _) = fit_second_order(&log.sensed_master_torque, &log.master_angle, config.dt)?;
    if model.gain <= 0.0 || !model.gain.is_finite() {
        return Err(PsychError::NonPositiveGain { gain: model.gain });
    }
    Ok(1.0 / model.gain)
}

/// One stiffness-discrimination trial through a transmission.
///
/// Runs two simulations from the template — one rendering
/// `reference_stiffness`, one `comparison_stiffness`, with the identical
/// probing operator input and the identical engine noise seed so the two
/// runs differ only in the rendered stiffness — fits the participant-side system
/// (sensed master torque → master angle) on each, and feeds the fitted
/// stiffness 1/gain of both runs to the observer as its effective stimuli.
/// `seed` drives only the observer's response draw.
pub fn stiffness_discrimination_session(
    template: &SimConfig,
    transmission: TransmissionSpec,
    reference_stiffness: f64,
    comparison_stiffness: f64,
    observer: &PsychometricFunction,
    seed: u64,
) -> Result<TrialRecord, PsychError> {
    observer.validate()?;
    let reference = effective_stiffness(template, transmission, reference_stiffness)?;
    let comparison = effective_stiffness(template, transmission, comparison_stiffness)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let response_greater = simulated_observer(reference, comparison, observer, &mut rng);
    Ok(TrialRecord {
        trial_index: 0,
        reference,
        comparison,
        response_greater,
        correct: response_greater == (comparison_stiffness > reference_stiffness),
        rng_draw_index: 0,
    })
}
