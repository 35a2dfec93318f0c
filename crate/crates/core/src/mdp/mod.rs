//! Finite discounted MDP model.
//!
//! States and actions are 0-based in memory. Everything user facing (files,
//! validation messages) uses 1-based indices.

mod format;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use format::{
    load_mdp, load_policy, load_value, mdp_to_json, parse_mdp_json, parse_policy_json,
    parse_value_json, policy_to_json, save_mdp, save_policy, save_value, value_to_json,
};

/// Absolute tolerance on the sum of outgoing probabilities of one action.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-9;

/// Sentinel stored for a file target index of 0, which has no 0-based form.
pub(crate) const INVALID_TARGET: usize = usize::MAX;

/// One admissible action `u` at some state `i`: its stage cost `g(i,u)` and the
/// sparse outgoing distribution `p_ij(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionEntry {
    pub cost: f64,
    /// `(target, probability)` with 0-based targets.
    pub transitions: Vec<(usize, f64)>,
}

impl ActionEntry {
    pub fn new(cost: f64, transitions: Vec<(usize, f64)>) -> Self {
        Self { cost, transitions }
    }

    /// Deterministic move to `target`.
    pub fn deterministic(cost: f64, target: usize) -> Self {
        Self::new(cost, vec![(target, 1.0)])
    }

    #[inline]
    pub fn expected(&self, values: &[f64]) -> f64 {
        self.transitions.iter().map(|&(j, p)| p * values[j]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    pub n_states: usize,
    pub discount: f64,
    /// `actions[i]` is the admissible action list `U(i)`.
    pub actions: Vec<Vec<ActionEntry>>,
}

impl Mdp {
    pub fn new(discount: f64, actions: Vec<Vec<ActionEntry>>) -> Self {
        Self {
            n_states: actions.len(),
            discount,
            actions,
        }
    }

    pub fn with_discount(mut self, discount: f64) -> Self {
        self.discount = discount;
        self
    }

    /// Returns `self` if it has no validation violations.
    pub fn validated(self) -> Result<Self> {
        let report = validate_mdp(&self);
        if report.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidMdp(report))
        }
    }

    pub fn num_actions(&self, state: usize) -> usize {
        self.actions[state].len()
    }

    pub fn max_actions(&self) -> usize {
        self.actions.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn num_transitions(&self) -> usize {
        self.actions
            .iter()
            .flat_map(|a| a.iter())
            .map(|e| e.transitions.len())
            .sum()
    }

    pub fn check_values(&self, j: &ValueFunction) -> Result<()> {
        if j.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                expected: self.n_states,
                actual: j.len(),
            });
        }
        Ok(())
    }

    pub fn check_policy(&self, mu: &Policy) -> Result<()> {
        if mu.len() != self.n_states {
            return Err(Error::DimensionMismatch {
                expected: self.n_states,
                actual: mu.len(),
            });
        }
        for (i, &u) in mu.choices.iter().enumerate() {
            if u >= self.actions[i].len() {
                return Err(Error::InvalidPolicy(format!(
                    "state {} chooses action {} but has {} actions",
                    i + 1,
                    u.wrapping_add(1),
                    self.actions[i].len()
                )));
            }
        }
        Ok(())
    }
}

/// A real-valued function over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    pub values: Vec<f64>,
}

impl ValueFunction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    /// The unit function `e` scaled by `c`.
    pub fn constant(n: usize, c: f64) -> Self {
        Self { values: vec![c; n] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `J + c·e`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl std::ops::Index<usize> for ValueFunction {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl From<Vec<f64>> for ValueFunction {
    fn from(values: Vec<f64>) -> Self {
        Self { values }
    }
}

/// Stationary policy: `choices[i]` indexes into `Mdp::actions[i]` (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy {
    pub choices: Vec<usize>,
}

impl Policy {
    pub fn new(choices: Vec<usize>) -> Self {
        Self { choices }
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn action(&self, state: usize) -> usize {
        self.choices[state]
    }
}

/// One broken invariant. Coordinates are reported 1-based.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoStates,
    StateCountMismatch {
        declared: usize,
        listed: usize,
    },
    Discount(f64),
    NoActions {
        state: usize,
    },
    NonFiniteCost {
        state: usize,
        action: usize,
        cost: f64,
    },
    BadProbability {
        state: usize,
        action: usize,
        target: usize,
        probability: f64,
    },
    ProbabilitySum {
        state: usize,
        action: usize,
        sum: f64,
    },
    TargetOutOfRange {
        state: usize,
        action: usize,
        target: usize,
    },
    DuplicateTarget {
        state: usize,
        action: usize,
        target: usize,
    },
}

fn one_based(i: usize) -> usize {
    i.wrapping_add(1)
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::NoStates => write!(f, "n_states must be positive"),
            Violation::StateCountMismatch { declared, listed } => {
                write!(f, "n_states is {declared} but {listed} states are listed")
            }
            Violation::Discount(a) => write!(f, "discount {a} not in (0,1)"),
            Violation::NoActions { state } => {
                write!(f, "state {} has no actions", one_based(state))
            }
            Violation::NonFiniteCost {
                state,
                action,
                cost,
            } => write!(
                f,
                "cost {cost} is not finite at (state {}, action {})",
                one_based(state),
                one_based(action)
            ),
            Violation::BadProbability {
                state,
                action,
                target,
                probability,
            } => write!(
                f,
                "probability {probability} of target {} not in [0,1] at (state {}, action {})",
                one_based(target),
                one_based(state),
                one_based(action)
            ),
            Violation::ProbabilitySum { state, action, sum } => write!(
                f,
                "probabilities sum to {sum} ≠ 1 at (state {}, action {})",
                one_based(state),
                one_based(action)
            ),
            Violation::TargetOutOfRange {
                state,
                action,
                target,
            } => write!(
                f,
                "target {} out of range at (state {}, action {})",
                one_based(target),
                one_based(state),
                one_based(action)
            ),
            Violation::DuplicateTarget {
                state,
                action,
                target,
            } => write!(
                f,
                "duplicate target {} at (state {}, action {})",
                one_based(target),
                one_based(state),
                one_based(action)
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "OK");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Collects every invariant violation of `mdp`. An empty report means the
/// model is safe to hand to the operators and solvers.
pub fn validate_mdp(mdp: &Mdp) -> ValidationReport {
    let mut violations = Vec::new();
    if mdp.n_states == 0 {
        violations.push(Violation::NoStates);
    }
    if mdp.actions.len() != mdp.n_states {
        violations.push(Violation::StateCountMismatch {
            declared: mdp.n_states,
            listed: mdp.actions.len(),
        });
    }
    if !(mdp.discount > 0.0 && mdp.discount < 1.0) {
        violations.push(Violation::Discount(mdp.discount));
    }
    let mut seen: Vec<bool> = Vec::new();
    for (state, entries) in mdp.actions.iter().enumerate() {
        if entries.is_empty() {
            violations.push(Violation::NoActions { state });
        }
        for (action, entry) in entries.iter().enumerate() {
            if !entry.cost.is_finite() {
                violations.push(Violation::NonFiniteCost {
                    state,
                    action,
                    cost: entry.cost,
                });
            }
            let mut sum = 0.0;
            for &(target, probability) in &entry.transitions {
                if !(0.0..=1.0).contains(&probability) {
                    violations.push(Violation::BadProbability {
                        state,
                        action,
                        target,
                        probability,
                    });
                }
                sum += probability;
                if target >= mdp.actions.len() || target >= mdp.n_states {
                    violations.push(Violation::TargetOutOfRange {
                        state,
                        action,
                        target,
                    });
                    continue;
                }
                if seen.len() < mdp.actions.len() {
                    seen.resize(mdp.actions.len(), false);
                }
                if seen[target] {
                    violations.push(Violation::DuplicateTarget {
                        state,
                        action,
                        target,
                    });
                }
                seen[target] = true;
            }
            for &(target, _) in &entry.transitions {
                if target < seen.len() {
                    seen[target] = false;
                }
            }
            if (sum - 1.0).abs().is_nan() || (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
                violations.push(Violation::ProbabilitySum { state, action, sum });
            }
        }
    }
    ValidationReport { violations }
}

/// `g(i,u) + α·Σ_j p_ij(u)·J(j)` over the sparse transition list.
///
/// Panics if `state`, `action` or a transition target is out of range.
#[inline]
pub fn q_value(mdp: &Mdp, values: &ValueFunction, state: usize, action: usize) -> f64 {
    let entry = &mdp.actions[state][action];
    entry.cost + mdp.discount * entry.expected(&values.values)
}

/// Lowest-index minimizer of the Q-values at every state.
pub fn greedy_policy(mdp: &Mdp, values: &ValueFunction) -> Policy {
    let choices = (0..mdp.n_states)
        .map(|i| greedy_action(mdp, &values.values, i).0)
        .collect();
    Policy { choices }
}

/// `(argmin, min)` of the Q-values at `state`; ties go to the lower index.
pub(crate) fn greedy_action(mdp: &Mdp, values: &[f64], state: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (u, entry) in mdp.actions[state].iter().enumerate() {
        let q = entry.cost + mdp.discount * entry.expected(values);
        if q < best.1 {
            best = (u, q);
        }
    }
    best
}

/// `max_i |J(i) − J'(i)|`.
///
/// Panics on a length mismatch.
pub fn sup_norm_diff(a: &ValueFunction, b: &ValueFunction) -> f64 {
    assert_eq!(a.len(), b.len(), "value functions differ in length");
    a.values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(prob: f64, discount: f64) -> Mdp {
        Mdp::new(discount, vec![vec![ActionEntry::new(1.0, vec![(0, prob)])]])
    }

    fn chain() -> Mdp {
        Mdp::new(
            0.5,
            vec![
                vec![ActionEntry::deterministic(0.0, 0)],
                vec![ActionEntry::deterministic(1.0, 0)],
            ],
        )
    }

    #[test]
    fn validate_clean_single_state() {
        assert!(validate_mdp(&single_state(1.0, 0.5)).is_empty());
    }

    #[test]
    fn validate_reports_probability_sum() {
        let report = validate_mdp(&single_state(0.9, 0.5));
        assert_eq!(report.len(), 1);
        assert_eq!(
            report.violations[0].to_string(),
            "probabilities sum to 0.9 ≠ 1 at (state 1, action 1)"
        );
    }

    #[test]
    fn validate_reports_discount() {
        let report = validate_mdp(&single_state(1.0, 1.0));
        assert_eq!(report.violations, vec![Violation::Discount(1.0)]);
        assert_eq!(report.to_string(), "discount 1 not in (0,1)");
    }

    #[test]
    fn validate_structural_problems() {
        let mdp = Mdp {
            n_states: 3,
            discount: 0.9,
            actions: vec![
                vec![],
                vec![ActionEntry::new(
                    f64::NAN,
                    vec![
                        (0, 0.5),
                        (0, 0.5),
                        (INVALID_TARGET, 0.0),
                        (7, -0.1),
                        (1, 0.1),
                    ],
                )],
            ],
        };
        let report = validate_mdp(&mdp);
        let kinds: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
        assert!(kinds
            .iter()
            .any(|s| s == "n_states is 3 but 2 states are listed"));
        assert!(kinds.iter().any(|s| s == "state 1 has no actions"));
        assert!(kinds.iter().any(|s| s.starts_with("cost NaN")));
        assert!(kinds
            .iter()
            .any(|s| s == "duplicate target 1 at (state 2, action 1)"));
        assert!(kinds
            .iter()
            .any(|s| s == "target 0 out of range at (state 2, action 1)"));
        assert!(kinds
            .iter()
            .any(|s| s == "target 8 out of range at (state 2, action 1)"));
        assert!(kinds
            .iter()
            .any(|s| s.starts_with("probability -0.1 of target 8")));
        // 0.5 + 0.5 + 0 - 0.1 + 0.1
        assert!(!kinds.iter().any(|s| s.starts_with("probabilities sum")));
    }

    #[test]
    fn q_value_examples() {
        let mdp = single_state(1.0, 0.5);
        assert_eq!(q_value(&mdp, &ValueFunction::new(vec![0.0]), 0, 0), 1.0);
        assert_eq!(q_value(&mdp, &ValueFunction::new(vec![2.0]), 0, 0), 2.0);
        let mdp = chain();
        let j = ValueFunction::new(vec![4.0, 4.0]);
        let two = Mdp::new(
            0.5,
            vec![
                vec![ActionEntry::deterministic(1.0, 1)],
                vec![ActionEntry::deterministic(0.0, 1)],
            ],
        );
        assert_eq!(q_value(&two, &j, 0, 0), 3.0);
        assert_eq!(q_value(&mdp, &j, 1, 0), 3.0);
    }

    #[test]
    fn greedy_prefers_cheaper_and_lower_index() {
        let mdp = Mdp::new(
            0.9,
            vec![
                vec![
                    ActionEntry::deterministic(1.0, 1),
                    ActionEntry::deterministic(3.0, 0),
                ],
                vec![
                    ActionEntry::deterministic(2.0, 1),
                    ActionEntry::deterministic(2.0, 1),
                ],
            ],
        );
        let mu = greedy_policy(&mdp, &ValueFunction::zeros(2));
        assert_eq!(mu.choices, vec![0, 0]);
    }

    #[test]
    fn sup_norm_examples() {
        let v = |x: &[f64]| ValueFunction::new(x.to_vec());
        assert_eq!(
            sup_norm_diff(&v(&[1.0, 2.0, 3.0]), &v(&[1.0, 2.0, 3.0])),
            0.0
        );
        assert_eq!(sup_norm_diff(&v(&[0.0, 0.0]), &v(&[2.0, -3.0])), 3.0);
        assert_eq!(sup_norm_diff(&v(&[4.0, 4.0]), &v(&[0.0, 1.0])), 4.0);
    }

    #[test]
    #[should_panic]
    fn sup_norm_length_mismatch_panics() {
        sup_norm_diff(&ValueFunction::zeros(2), &ValueFunction::zeros(3));
    }

    #[test]
    fn check_policy_rejects_inadmissible() {
        let mdp = chain();
        assert!(mdp.check_policy(&Policy::new(vec![0, 0])).is_ok());
        assert!(mdp.check_policy(&Policy::new(vec![0, 1])).is_err());
        assert!(mdp.check_policy(&Policy::new(vec![0])).is_err());
    }
}
