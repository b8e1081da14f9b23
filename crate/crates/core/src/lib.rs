pub mod automata;
pub mod bayes;
pub mod experiment;
mod graph;
pub mod learner;
pub mod ltl;
pub mod planner;
pub mod product;
pub mod reach;
pub mod rng;
pub mod smdp;
