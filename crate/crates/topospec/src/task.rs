//! Deterministic three-rule state-transition protocol τ.
//!
//! The tracked state is a triple (Value, Parity, Level). One application of
//! [`tau`] runs three dependent rules in order:
//!
//! 1. an affine update of Value whose coefficients depend on Parity,
//! 2. a fractional-part branch that rounds Value to 2 decimals and
//!    re-thresholds Parity at 70,
//! 3. a guarded Level update clamped to `[1, 9]`.
//!
//! All arithmetic is plain `f64` in a fixed evaluation order, so trajectories
//! are bit-reproducible across runs and platforms.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Binary parity flag of the tracked state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    A,
    B,
}

impl Parity {
    /// The other parity.
    pub fn flipped(self) -> Self {
        match self {
            Parity::A => Parity::B,
            Parity::B => Parity::A,
        }
    }
}

/// The tracked task state: a float Value, a Parity flag, and a Level in `[1, 9]`.
///
/// Serializes as `{"Value": .., "Parity": "A"|"B", "Level": ..}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    #[serde(rename = "Value")]
    pub value: f64,
    #[serde(rename = "Parity")]
    pub parity: Parity,
    #[serde(rename = "Level")]
    pub level: i64,
}

/// Validation failure for an externally supplied state.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TaskError {
    #[error("level {0} outside [1, 9]")]
    LevelOutOfRange(i64),
    #[error("value is not finite")]
    NonFiniteValue,
}

impl TaskState {
    /// Builds a state, validating the invariants (finite value, level in `[1, 9]`).
    pub fn new(value: f64, parity: Parity, level: i64) -> Result<Self, TaskError> {
        if !value.is_finite() {
            return Err(TaskError::NonFiniteValue);
        }
        if !(1..=9).contains(&level) {
            return Err(TaskError::LevelOutOfRange(level));
        }
        Ok(TaskState { value, parity, level })
    }
}

/// Rounds to 2 decimals, half away from zero (`f64::round` semantics on the
/// scaled value). The deliberate fixed order `x * 100.0` then `round` is part
/// of the bit-stability contract.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Level update rule: the default `Level + 2 (max 9)` applies everywhere
/// EXCEPT when the new parity is B with the new value in `[60, 90]`
/// (then `Level − 1, min 1`), or the value fell below 60 (then a decrement
/// whose size depends on which side of 4 the level is on).
///
/// Exposed separately because aggregators re-run it when votes tie.
pub fn level_rule(level: i64, v_new: f64, p_new: Parity) -> i64 {
    if (p_new == Parity::B && (60.0..=90.0).contains(&v_new)) || (level >= 4 && v_new < 60.0) {
        (level - 1).max(1)
    } else if level < 4 && v_new < 60.0 {
        (level - 2).max(1)
    } else {
        (level + 2).min(9)
    }
}

/// Parity threshold used by rule 2: B iff the rounded value is at least 70.
pub fn parity_rule(v_new: f64) -> Parity {
    if v_new >= 70.0 {
        Parity::B
    } else {
        Parity::A
    }
}

/// One deterministic state transition.
pub fn tau(s: TaskState) -> TaskState {
    // Rule 1: affine raw value, carried unrounded into rule 2.
    let v_raw = match s.parity {
        Parity::A => (s.value * 1.25) + (s.level as f64 * 2.0),
        Parity::B => (s.value * 0.75) - (s.level as f64 * 2.0),
    };

    // Rule 2: branch on the fractional magnitude of v_raw, then round.
    // For negative v_raw the fractional part is taken in absolute value so the
    // three branches stay exhaustive and mutually exclusive over the reals.
    let d = v_raw.fract().abs();
    let v_new = if d >= 0.5 {
        round2(v_raw + 1.5)
    } else if d > 0.0 {
        round2(v_raw - 0.5)
    } else {
        round2(v_raw * 1.1)
    };
    let p_new = parity_rule(v_new);

    // Rule 3: guarded level step, clamped to [1, 9].
    let l_new = level_rule(s.level, v_new, p_new);

    TaskState { value: v_new, parity: p_new, level: l_new }
}

/// Iterates [`tau`] from `s0`, returning the `steps + 1` states including `s0`.
pub fn trajectory(s0: TaskState, steps: usize) -> Vec<TaskState> {
    assert!(steps >= 1, "trajectory needs at least one step");
    let mut out = Vec::with_capacity(steps + 1);
    out.push(s0);
    let mut s = s0;
    for _ in 0..steps {
        s = tau(s);
        out.push(s);
    }
    out
}
