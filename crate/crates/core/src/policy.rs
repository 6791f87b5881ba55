use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Mdp;

/// Deterministic stationary policy: one action index per state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StationaryPolicy(pub Vec<usize>);

impl StationaryPolicy {
    pub fn action(&self, x: usize) -> usize {
        self.0[x]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks that the policy covers every state with a feasible action.
    pub fn check_feasible(&self, mdp: &Mdp) -> Result<()> {
        if self.0.len() != mdp.num_states() {
            return Err(Error::InvalidArgument(format!(
                "policy covers {} states, model has {}",
                self.0.len(),
                mdp.num_states()
            )));
        }
        for (x, &a) in self.0.iter().enumerate() {
            if a >= mdp.num_actions(x) {
                return Err(Error::InfeasibleAction {
                    state: x,
                    action: a,
                });
            }
        }
        Ok(())
    }

    /// Parses a comma-separated list of action indices or action labels.
    pub fn parse(text: &str, mdp: &Mdp) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != mdp.num_states() {
            return Err(Error::InvalidArgument(format!(
                "policy lists {} actions, model has {} states",
                parts.len(),
                mdp.num_states()
            )));
        }
        let actions = parts
            .iter()
            .enumerate()
            .map(|(x, p)| {
                p.parse::<usize>()
                    .ok()
                    .or_else(|| mdp.actions(x).iter().position(|a| a.label == *p))
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "unknown action {p:?} at state {:?}",
                            mdp.state_label(x)
                        ))
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let policy = StationaryPolicy(actions);
        policy.check_feasible(mdp)?;
        Ok(policy)
    }
}

/// Nonstationary deterministic policy over a finite horizon; `epochs[t]` is the
/// decision rule used at epoch `t`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkovPolicy {
    pub epochs: Vec<StationaryPolicy>,
}

impl MarkovPolicy {
    pub fn horizon(&self) -> usize {
        self.epochs.len()
    }
}
