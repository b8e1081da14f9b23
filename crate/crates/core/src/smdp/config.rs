//! Scenario documents.
//!
//! ```json
//! { "grid": { "width": 5, "height": 5, "initial": [5, 5],
//!             "labels": { "a": [[1, 3]], "b": [[5, 3]], "c": [[3, 1]] } },
//!   "dwell": { "map": "default" } }
//! ```
//!
//! Non-grid models replace `grid` with an `smdp` section listing states,
//! actions, labels, and transition rows.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::grid::{build_gridworld, DwellMap, GridConfig};
use super::{DwellDistribution, Smdp, SmdpBuilder, SmdpError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwellSection {
    pub map: DwellMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub from: String,
    pub action: String,
    pub to: String,
    pub prob: f64,
    pub dwell: DwellDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmdpTables {
    pub states: Vec<String>,
    pub actions: Vec<String>,
    #[serde(default)]
    pub ap: Vec<String>,
    pub initial: String,
    /// State name ↦ atoms holding there.
    #[serde(default)]
    pub labels: BTreeMap<String, Vec<String>>,
    pub transitions: Vec<TransitionEntry>,
}

impl SmdpTables {
    pub fn build(&self) -> Result<Smdp, SmdpError> {
        let find = |names: &[String], n: &str, what: &str| {
            names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| SmdpError::Config(format!("unknown {what} {n:?}")))
        };
        let mut b = SmdpBuilder::new(self.states.clone(), self.actions.clone(), self.ap.clone());
        b.initial(find(&self.states, &self.initial, "state")?)?;
        for (state, atoms) in &self.labels {
            b.label(find(&self.states, state, "state")?, atoms.iter().map(String::as_str))?;
        }
        for t in &self.transitions {
            b.transition(
                find(&self.states, &t.from, "state")?,
                find(&self.actions, &t.action, "action")?,
                find(&self.states, &t.to, "state")?,
                t.prob,
                t.dwell.clone(),
            )?;
        }
        b.build()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dwell: Option<DwellSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smdp: Option<SmdpTables>,
}

impl ScenarioConfig {
    pub fn from_grid(grid: GridConfig) -> Self {
        let dwell = Some(DwellSection { map: grid.dwell.clone() });
        ScenarioConfig { grid: Some(grid), dwell, smdp: None }
    }

    pub fn from_json(text: &str) -> Result<Self, SmdpError> {
        serde_json::from_str(text).map_err(|e| SmdpError::Config(e.to_string()))
    }

    /// The grid section with the dwell map applied, if this is a grid scenario.
    pub fn grid_config(&self) -> Option<GridConfig> {
        self.grid.clone().map(|mut g| {
            if let Some(d) = &self.dwell {
                g.dwell = d.map.clone();
            }
            g
        })
    }

    pub fn build(&self) -> Result<Smdp, SmdpError> {
        match (self.grid_config(), &self.smdp) {
            (Some(g), None) => build_gridworld(&g),
            (None, Some(t)) => t.build(),
            _ => Err(SmdpError::Config("scenario needs exactly one of `grid` and `smdp`".into())),
        }
    }
}
