//! JSON documents for models, value functions and policies.
//!
//! ```text
//! {"n_states": 2, "discount": 0.5,
//!  "states": [{"actions": [{"cost": 0.0, "transitions": [[1, 1.0]]}]}, ...]}
//! {"values": [0.0, 1.0]}
//! {"choices": [1, 1]}
//! ```
//!
//! State and action indices are 1-based in every document. Floats are written
//! in shortest round-trip form.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ActionEntry, Mdp, Policy, ValueFunction, INVALID_TARGET};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpDoc {
    n_states: usize,
    discount: f64,
    states: Vec<StateDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDoc {
    actions: Vec<ActionDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionDoc {
    cost: f64,
    transitions: Vec<(usize, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyDoc {
    choices: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ValueDoc {
    values: Vec<f64>,
}

fn to_zero_based(j: usize) -> usize {
    j.checked_sub(1).unwrap_or(INVALID_TARGET)
}

/// Parses an MDP document. The result is structurally typed but not
/// validated; run [`super::validate_mdp`] before solving.
pub fn parse_mdp_json(bytes: &[u8]) -> Result<Mdp> {
    let doc: MdpDoc = serde_json::from_slice(bytes)?;
    let actions = doc
        .states
        .into_iter()
        .map(|s| {
            s.actions
                .into_iter()
                .map(|a| ActionEntry {
                    cost: a.cost,
                    transitions: a
                        .transitions
                        .into_iter()
                        .map(|(j, p)| (to_zero_based(j), p))
                        .collect(),
                })
                .collect()
        })
        .collect();
    Ok(Mdp {
        n_states: doc.n_states,
        discount: doc.discount,
        actions,
    })
}

pub fn mdp_to_json(mdp: &Mdp) -> String {
    let doc = MdpDoc {
        n_states: mdp.n_states,
        discount: mdp.discount,
        states: mdp
            .actions
            .iter()
            .map(|entries| StateDoc {
                actions: entries
                    .iter()
                    .map(|e| ActionDoc {
                        cost: e.cost,
                        transitions: e
                            .transitions
                            .iter()
                            .map(|&(j, p)| (j.wrapping_add(1), p))
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string(&doc).expect("MDP document serializes");
    s.push('\n');
    s
}

pub fn parse_value_json(bytes: &[u8]) -> Result<ValueFunction> {
    let doc: ValueDoc = serde_json::from_slice(bytes)?;
    Ok(ValueFunction::new(doc.values))
}

pub fn value_to_json(values: &ValueFunction) -> String {
    let mut s = serde_json::to_string(&ValueDoc {
        values: values.values.clone(),
    })
    .expect("value document serializes");
    s.push('\n');
    s
}

/// Parses `{"choices": [...]}` with 1-based action indices.
pub fn parse_policy_json(bytes: &[u8]) -> Result<Policy> {
    let doc: PolicyDoc = serde_json::from_slice(bytes)?;
    Ok(Policy::new(
        doc.choices.into_iter().map(to_zero_based).collect(),
    ))
}

pub fn policy_to_json(policy: &Policy) -> String {
    let mut s = serde_json::to_string(&PolicyDoc {
        choices: policy.choices.iter().map(|u| u.wrapping_add(1)).collect(),
    })
    .expect("policy document serializes");
    s.push('\n');
    s
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn load_mdp(path: impl AsRef<Path>) -> Result<Mdp> {
    parse_mdp_json(&read(path.as_ref())?)
}

pub fn save_mdp(mdp: &Mdp, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &mdp_to_json(mdp))
}

pub fn load_value(path: impl AsRef<Path>) -> Result<ValueFunction> {
    parse_value_json(&read(path.as_ref())?)
}

pub fn save_value(values: &ValueFunction, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &value_to_json(values))
}

pub fn load_policy(path: impl AsRef<Path>) -> Result<Policy> {
    parse_policy_json(&read(path.as_ref())?)
}

pub fn save_policy(policy: &Policy, path: impl AsRef<Path>) -> Result<()> {
    write(path.as_ref(), &policy_to_json(policy))
}
