//! The surveillance grid world.
//!
//! Cells are `(x, y)` with `1 ≤ x ≤ width`, `1 ≤ y ≤ height`; `y` grows
//! downwards, so "up" decreases `y` and "left" decreases `x`. Each action
//! names two directions and moves in either one with probability 0.5. A
//! direction blocked by a wall hands its mass to the other one, and a robot
//! with both directions blocked stays put.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DwellDistribution, Smdp, SmdpBuilder, SmdpError, StateId};

pub type Cell = (u32, u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridAction {
    UL,
    UR,
    DL,
    DR,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [GridAction::UL, GridAction::UR, GridAction::DL, GridAction::DR];

    pub fn name(self) -> &'static str {
        match self {
            GridAction::UL => "UL",
            GridAction::UR => "UR",
            GridAction::DL => "DL",
            GridAction::DR => "DR",
        }
    }

    /// The vertical and horizontal unit moves as `(dx, dy)`.
    fn directions(self) -> [(i64, i64); 2] {
        match self {
            GridAction::UL => [(0, -1), (-1, 0)],
            GridAction::UR => [(0, -1), (1, 0)],
            GridAction::DL => [(0, 1), (-1, 0)],
            GridAction::DR => [(0, 1), (1, 0)],
        }
    }
}

/// Dwell rate `λ(s)` as a function of the source cell.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DwellMap {
    /// `10 / (1 + Chebyshev distance to the grid center)`: slow cells, and
    /// so heavy dwell tails, near the walls.
    #[default]
    Default,
    /// The literal `10·max{x − 3, y − 3}`, floored at `1e-3`.
    Paper,
    /// Explicit rate per cell; every cell must be listed.
    Table(Vec<(Cell, f64)>),
}

pub const PAPER_RATE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub width: u32,
    pub height: u32,
    pub initial: Cell,
    /// Atomic proposition ↦ labeled cells.
    #[serde(default)]
    pub labels: BTreeMap<String, Vec<Cell>>,
    /// Carried in the scenario's separate `dwell` section.
    #[serde(skip)]
    pub dwell: DwellMap,
}

impl GridConfig {
    /// The 5×5 surveillance scenario: recharge `a` at (1,3), access point `b`
    /// at (5,3), danger `c` at (3,1), start in the corner (5,5).
    pub fn running_example() -> Self {
        GridConfig {
            width: 5,
            height: 5,
            initial: (5, 5),
            labels: BTreeMap::from([
                ("a".to_string(), vec![(1, 3)]),
                ("b".to_string(), vec![(5, 3)]),
                ("c".to_string(), vec![(3, 1)]),
            ]),
            dwell: DwellMap::Default,
        }
    }

    /// A 4×4 variant small enough for exhaustive oracle comparisons. With
    /// `G F a & G F b & G !c` and K = 5 its winning region is nonempty.
    pub fn desk() -> Self {
        GridConfig {
            width: 4,
            height: 4,
            initial: (4, 1),
            labels: BTreeMap::from([
                ("a".to_string(), vec![(2, 4)]),
                ("b".to_string(), vec![(4, 4)]),
                ("c".to_string(), vec![(2, 1)]),
            ]),
            dwell: DwellMap::Default,
        }
    }

    pub fn contains(&self, (x, y): Cell) -> bool {
        (1..=self.width).contains(&x) && (1..=self.height).contains(&y)
    }

    pub fn state_of(&self, (x, y): Cell) -> StateId {
        ((y - 1) * self.width + (x - 1)) as StateId
    }

    pub fn cell_of(&self, s: StateId) -> Cell {
        let s = s as u32;
        (s % self.width + 1, s / self.width + 1)
    }

    pub fn rate(&self, cell: Cell) -> Result<f64, SmdpError> {
        let (x, y) = (cell.0 as f64, cell.1 as f64);
        match &self.dwell {
            DwellMap::Default => {
                let cx = (self.width as f64 + 1.0) / 2.0;
                let cy = (self.height as f64 + 1.0) / 2.0;
                Ok(10.0 / (1.0 + (x - cx).abs().max((y - cy).abs())))
            }
            DwellMap::Paper => Ok((10.0 * (x - 3.0).max(y - 3.0)).max(PAPER_RATE_FLOOR)),
            DwellMap::Table(rows) => rows
                .iter()
                .find(|(c, _)| *c == cell)
                .map(|&(_, r)| r)
                .ok_or_else(|| SmdpError::Config(format!("dwell table has no rate for cell {cell:?}"))),
        }
    }
}

fn check_atom(name: &str) -> Result<(), SmdpError> {
    let mut chars = name.chars();
    let ok = chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && name != "true"
        && name != "false";
    if ok {
        Ok(())
    } else {
        Err(SmdpError::Config(format!("{name:?} is not a valid atomic proposition")))
    }
}

/// Build the grid SMDP. State ids are row-major, `(y−1)·width + (x−1)`, and
/// action ids follow `GridAction::ALL`.
pub fn build_gridworld(cfg: &GridConfig) -> Result<Smdp, SmdpError> {
    if cfg.width == 0 || cfg.height == 0 {
        return Err(SmdpError::Config("grid must have at least one cell".into()));
    }
    if !cfg.contains(cfg.initial) {
        return Err(SmdpError::Config(format!("initial cell {:?} is outside the grid", cfg.initial)));
    }
    let mut owner: BTreeMap<Cell, &str> = BTreeMap::new();
    for (atom, cells) in &cfg.labels {
        check_atom(atom)?;
        for &c in cells {
            if !cfg.contains(c) {
                return Err(SmdpError::Config(format!("label {atom} on cell {c:?} outside the grid")));
            }
            if let Some(other) = owner.insert(c, atom) {
                return Err(SmdpError::Config(format!("cell {c:?} labeled both {other} and {atom}")));
            }
        }
    }

    let n = (cfg.width * cfg.height) as usize;
    let names = (0..n)
        .map(|s| {
            let (x, y) = cfg.cell_of(s);
            format!("({x},{y})")
        })
        .collect();
    let actions = GridAction::ALL.iter().map(|a| a.name().to_string()).collect();
    let ap = cfg.labels.keys().cloned().collect();
    let mut b = SmdpBuilder::new(names, actions, ap);
    b.initial(cfg.state_of(cfg.initial))?;
    for (&cell, atom) in &owner {
        b.label(cfg.state_of(cell), [*atom])?;
    }

    for s in 0..n {
        let (x, y) = cfg.cell_of(s);
        let rate = cfg.rate((x, y))?;
        if !(rate.is_finite() && rate > 0.0) {
            return Err(SmdpError::Config(format!("dwell rate {rate} at cell {:?} must be positive", (x, y))));
        }
        let dwell = DwellDistribution::exponential(rate);
        for (a, act) in GridAction::ALL.iter().enumerate() {
            let moves: Vec<Cell> = act
                .directions()
                .iter()
                .map(|&(dx, dy)| (x as i64 + dx, y as i64 + dy))
                .filter(|&(nx, ny)| nx >= 1 && ny >= 1)
                .map(|(nx, ny)| (nx as u32, ny as u32))
                .filter(|&c| cfg.contains(c))
                .collect();
            if moves.is_empty() {
                b.transition(s, a, s, 1.0, dwell.clone())?;
            }
            for &c in &moves {
                b.transition(s, a, cfg.state_of(c), 1.0 / moves.len() as f64, dwell.clone())?;
            }
        }
    }
    b.build()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn running_example_shape() {
        let cfg = GridConfig::running_example();
        let m = build_gridworld(&cfg).unwrap();
        assert_eq!(m.num_states(), 25);
        assert_eq!(m.state_name(m.initial()), "(5,5)");
        assert_eq!(m.ap(), ["a", "b", "c"]);
        let names: Vec<&str> = m.enabled_actions(m.initial()).unwrap().iter().map(|&a| m.action_name(a)).collect();
        assert_eq!(names, ["UL", "UR", "DL", "DR"]);
        assert_eq!(m.label_atoms(cfg.state_of((1, 3))), ["a"]);
        assert_eq!(m.label_atoms(cfg.state_of((3, 1))), ["c"]);
    }

    #[test]
    fn walls_redirect_and_corners_self_loop() {
        let cfg = GridConfig::running_example();
        let m = build_gridworld(&cfg).unwrap();
        let corner = cfg.state_of((1, 1));
        let ul = GridAction::UL as usize;
        assert_eq!(m.prob(corner, ul, corner), 1.0);
        // (1,1) under UR: up is blocked, so right w.p. 1
        let ur = GridAction::UR as usize;
        assert_eq!(m.prob(corner, ur, cfg.state_of((2, 1))), 1.0);
        // interior cell splits evenly
        let mid = cfg.state_of((3, 3));
        let dr = GridAction::DR as usize;
        assert_eq!(m.prob(mid, dr, cfg.state_of((3, 4))), 0.5);
        assert_eq!(m.prob(mid, dr, cfg.state_of((4, 3))), 0.5);
    }

    #[test]
    fn single_cell_grid_is_absorbing() {
        let cfg = GridConfig { width: 1, height: 1, initial: (1, 1), labels: BTreeMap::new(), dwell: DwellMap::Default };
        let m = build_gridworld(&cfg).unwrap();
        for a in 0..4 {
            assert_eq!(m.successors(0, a).len(), 1);
            assert_eq!(m.prob(0, a, 0), 1.0);
        }
    }

    #[test]
    fn label_errors() {
        let mut cfg = GridConfig::running_example();
        cfg.labels.insert("d".into(), vec![(1, 3)]);
        assert!(matches!(build_gridworld(&cfg), Err(SmdpError::Config(_))));
        let mut cfg = GridConfig::running_example();
        cfg.labels.insert("d".into(), vec![(6, 1)]);
        assert!(matches!(build_gridworld(&cfg), Err(SmdpError::Config(_))));
        let mut cfg = GridConfig::running_example();
        cfg.labels.insert("Bad".into(), vec![(2, 2)]);
        assert!(build_gridworld(&cfg).is_err());
    }

    #[test]
    fn dwell_maps() {
        let mut cfg = GridConfig::running_example();
        assert_eq!(cfg.rate((3, 3)).unwrap(), 10.0);
        assert_eq!(cfg.rate((5, 1)).unwrap(), 10.0 / 3.0);
        cfg.dwell = DwellMap::Paper;
        assert_eq!(cfg.rate((5, 4)).unwrap(), 20.0);
        assert_eq!(cfg.rate((1, 1)).unwrap(), PAPER_RATE_FLOOR);
        cfg.dwell = DwellMap::Table(vec![((1, 1), 4.0)]);
        assert_eq!(cfg.rate((1, 1)).unwrap(), 4.0);
        assert!(build_gridworld(&cfg).is_err());
    }

    #[test]
    fn labeled_trace_through_a_and_b() {
        let cfg = GridConfig::running_example();
        let m = build_gridworld(&cfg).unwrap();
        let mut p = crate::smdp::Path::new(cfg.state_of((1, 3)));
        p.push(0, 0.1, cfg.state_of((5, 3)));
        assert_eq!(p.labels(&m), vec![vec!["a".to_string()], vec!["b".to_string()]]);
    }

    #[test]
    fn simulation_is_reproducible() {
        let m = build_gridworld(&GridConfig::running_example()).unwrap();
        use rand::Rng;
        let run = || m.simulate(200, &mut stream(9, &[1]), |_, r| r.gen_range(0..4)).unwrap();
        assert_eq!(run(), run());
    }
}
