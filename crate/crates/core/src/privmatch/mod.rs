//! Private set intersection with a commutative cipher.
//!
//! The initiator holds list `A`, the responder list `B`. Each party hashes its
//! items into a prime-order group and exponentiates with a secret key; since
//! the keys commute, doubly encrypted values coincide exactly on the common
//! items. The exchange is:
//!
//! ```text
//! initiator                         responder
//!   HELLO(p, q)          ───────▶
//!   ENC_A  = E(A)        ───────▶
//!                        ◀───────   DOUBLE_ENC_A = shuffled pairs (E(a), E'(E(a)))
//!                        ◀───────   ENC_B = E'(B)
//!   RESULT (optional)    ───────▶
//! ```
//!
//! Both parties are plain state machines ([`initiator_step`],
//! [`responder_step`]) driven over any [`Transport`]. The two weaknesses of the
//! scheme are reproduced by [`demo_asymmetry`] and [`demo_inflation`].

mod group;
mod party;
mod transport;
mod wire;

use std::collections::BTreeSet;
use std::io;

use thiserror::Error;

pub use group::{
    commute_encrypt, derive_group, hash_to_group, DomainParams, GroupElement, PartyKey, MAX_BITS,
    MIN_BITS,
};
pub use party::{
    initiator_step, responder_step, PartyOptions, PartyState, Phase, Role, MAX_LIST_LEN,
};
pub use transport::{
    loopback_pair, render_transcript, run_intersection, run_intersection_over, run_party,
    Direction, FramedStream, IntersectionRun, Loopback, PartyOutcome, TranscriptEntry, Transport,
};
pub use wire::{
    decode_msg, encode_msg, read_frame, write_frame, FramingError, MsgKind, WireMessage,
    MAX_ELEMENTS, MAX_PAYLOAD,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("bad domain parameters: {0}")]
    Params(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("framing: {0}")]
    Framing(#[from] FramingError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("protocol aborted in phase {phase}: {reason}")]
    Aborted { phase: &'static str, reason: String },
    #[error("transport failure in phase {phase}: {reason}")]
    Transport { phase: &'static str, reason: String },
}

/// What each side ends up knowing after a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsymmetryReport {
    pub initiator_learned: Vec<String>,
    /// Plaintext items the responder holds at the end; empty unless the
    /// initiator chose to send `RESULT`.
    pub responder_learned: Vec<String>,
    pub result_sent: bool,
    /// `|A|` as read off the length of `ENC_A`.
    pub responder_saw_a_size: usize,
    /// `|B|` as read off the length of `ENC_B`.
    pub initiator_saw_b_size: usize,
}

impl AsymmetryReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("result_sent={}\n", self.result_sent));
        out.push_str(&format!(
            "initiator_learned={} [{}]\n",
            self.initiator_learned.len(),
            self.initiator_learned.join(",")
        ));
        out.push_str(&format!(
            "responder_learned={} [{}]\n",
            self.responder_learned.len(),
            self.responder_learned.join(",")
        ));
        out.push_str(&format!(
            "leak: responder inferred |A|={} from ENC_A\n",
            self.responder_saw_a_size
        ));
        out.push_str(&format!(
            "leak: initiator inferred |B|={} from ENC_B\n",
            self.initiator_saw_b_size
        ));
        out
    }
}

/// Runs the protocol over loopback. With `honest` false the initiator keeps
/// the intersection to itself, and the responder has no way to object.
pub fn demo_asymmetry(
    list_a: &[String],
    list_b: &[String],
    params: &DomainParams,
    seed: u64,
    honest: bool,
) -> Result<AsymmetryReport, ProtocolError> {
    let opts = PartyOptions {
        honest,
        ..PartyOptions::default()
    };
    let run = run_intersection(list_a, list_b, params, seed, opts)?;
    Ok(AsymmetryReport {
        result_sent: run.responder_learned.is_some(),
        responder_learned: run.responder_learned.unwrap_or_default(),
        initiator_learned: run.intersection,
        responder_saw_a_size: run.responder_saw_a_size,
        initiator_saw_b_size: run.initiator_saw_b_size,
    })
}

/// A curious initiator submits an entire dictionary as its list and so learns
/// every responder item that appears in it.
pub fn demo_inflation(
    dictionary: &[String],
    honest_b: &[String],
    params: &DomainParams,
    seed: u64,
) -> Result<BTreeSet<String>, ProtocolError> {
    let opts = PartyOptions {
        honest: false,
        ..PartyOptions::default()
    };
    let run = run_intersection(dictionary, honest_b, params, seed, opts)?;
    Ok(run.intersection.into_iter().collect())
}
