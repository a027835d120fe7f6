//! Near-optimal scheduling for LTL with discounting and propositional
//! quality operators, through quantitative alternating automata.

pub mod automata;
pub mod bench;
pub mod formula;
pub mod scheduler;
pub mod semiring;
pub mod translate;
pub mod values;
