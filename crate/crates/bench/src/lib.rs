//! Shared fixtures for the criterion benchmarks.

use smdp_synth::automata::OmegaAutomaton;
use smdp_synth::experiment::{build_product, ExperimentConfig, RUNNING_EXAMPLE_FORMULA};
use smdp_synth::ltl::{ltl_to_cba, parse_ltl};
use smdp_synth::product::ProductSmdp;

/// The running-example cBA.
pub fn running_example_cba() -> OmegaAutomaton {
    ltl_to_cba(&parse_ltl(RUNNING_EXAMPLE_FORMULA).expect("formula parses")).expect("tableau")
}

pub fn desk_product() -> ProductSmdp {
    build_product(&ExperimentConfig::desk()).expect("desk preset builds")
}
