//! Record linkage, private matching and disclosure limitation.
//!
//! * [`linkage`]: Fellegi–Sunter comparison, weighting, EM estimation,
//!   threshold selection and blocking.
//! * [`baseline`]: exact distribution of correct matches under a random
//!   permutation linkage.
//! * [`privmatch`]: commutative-encryption private set intersection as two
//!   state machines over a framed byte stream, with its known exploits.
//! * [`disclosure`]: microaggregation, noise addition, re-identification
//!   risk, utility, R-U sweeps, a selective-revelation gate and a hash-chained
//!   audit log.
//! * [`corpus`]: delimited-file ingestion and synthetic linked file pairs
//!   with controlled measurement error.
//! * [`cli`]: the `privlink` command-line entry point.

pub mod baseline;
pub mod cli;
pub mod corpus;
pub mod disclosure;
pub mod linkage;
pub mod privmatch;
