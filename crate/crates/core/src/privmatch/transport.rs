use std::fmt::Write as _;
use std::io::{Read, Write};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::thread;

use super::group::DomainParams;
use super::party::{initiator_step, responder_step, PartyOptions, PartyState, Phase, Role};
use super::wire::{decode_msg, encode_msg, read_frame, write_frame, MsgKind, WireMessage};
use super::ProtocolError;

/// Moves whole frames between the parties. `recv` returns `Ok(None)` once the
/// peer has closed its side.
pub trait Transport {
    /// Sends one message and returns the exact frame bytes written.
    fn send(&mut self, msg: &WireMessage) -> Result<Vec<u8>, ProtocolError>;
    fn recv(&mut self) -> Result<Option<(WireMessage, Vec<u8>)>, ProtocolError>;
}

/// Framing over any byte stream, e.g. a `TcpStream`.
#[derive(Debug)]
pub struct FramedStream<S> {
    inner: S,
}

impl<S> FramedStream<S> {
    pub fn new(inner: S) -> Self {
        FramedStream { inner }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: Read + Write> Transport for FramedStream<S> {
    fn send(&mut self, msg: &WireMessage) -> Result<Vec<u8>, ProtocolError> {
        Ok(write_frame(&mut self.inner, msg)?)
    }

    fn recv(&mut self) -> Result<Option<(WireMessage, Vec<u8>)>, ProtocolError> {
        Ok(read_frame(&mut self.inner)?)
    }
}

/// In-process transport carrying encoded frames over channels.
#[derive(Debug)]
pub struct Loopback {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

pub fn loopback_pair() -> (Loopback, Loopback) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        Loopback { tx: tx_a, rx: rx_a },
        Loopback { tx: tx_b, rx: rx_b },
    )
}

impl Transport for Loopback {
    fn send(&mut self, msg: &WireMessage) -> Result<Vec<u8>, ProtocolError> {
        let frame = encode_msg(msg)?;
        self.tx
            .send(frame.clone())
            .map_err(|_| ProtocolError::Transport {
                phase: "send",
                reason: "peer hung up".into(),
            })?;
        Ok(frame)
    }

    fn recv(&mut self) -> Result<Option<(WireMessage, Vec<u8>)>, ProtocolError> {
        match self.rx.recv() {
            Ok(frame) => Ok(Some((decode_msg(&frame)?, frame))),
            Err(_) => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub kind: MsgKind,
    pub frame: Vec<u8>,
}

impl TranscriptEntry {
    /// `send|recv KIND hexframe`
    pub fn render(&self) -> String {
        let dir = match self.direction {
            Direction::Sent => "send",
            Direction::Received => "recv",
        };
        format!("{dir} {} {}", self.kind.name(), hex::encode(&self.frame))
    }
}

pub fn render_transcript(entries: &[TranscriptEntry]) -> String {
    entries.iter().fold(String::new(), |mut out, e| {
        let _ = writeln!(out, "{}", e.render());
        out
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyOutcome {
    pub role: Role,
    /// See [`PartyState::intersection`].
    pub intersection: Option<Vec<String>>,
    pub peer_list_size: Option<usize>,
    pub transcript: Vec<TranscriptEntry>,
}

fn transport_error(phase: Phase, e: ProtocolError) -> ProtocolError {
    match e {
        ProtocolError::Transport { .. } | ProtocolError::Aborted { .. } => e,
        other => ProtocolError::Transport {
            phase: phase.name(),
            reason: other.to_string(),
        },
    }
}

/// Drives one party to completion over `transport`.
pub fn run_party<T: Transport>(
    state: PartyState,
    transport: &mut T,
) -> Result<PartyOutcome, ProtocolError> {
    let role = state.role();
    let mut transcript = Vec::new();
    let mut state = state;
    if role == Role::Initiator {
        let (s, out) = initiator_step(state, None);
        state = s;
        send_all(transport, out, state.phase(), &mut transcript)?;
    }
    while !state.is_finished() {
        let phase = state.phase();
        let (m, frame) = match transport_recv(transport, phase)? {
            Some(x) => x,
            None if state.peer_closed() => break,
            None => {
                return Err(ProtocolError::Transport {
                    phase: phase.name(),
                    reason: "peer closed the connection".into(),
                })
            }
        };
        transcript.push(TranscriptEntry {
            direction: Direction::Received,
            kind: m.kind,
            frame,
        });
        let (s, out) = match role {
            Role::Initiator => initiator_step(state, Some(m)),
            Role::Responder => responder_step(state, m),
        };
        state = s;
        send_all(transport, out, phase, &mut transcript)?;
    }
    if state.phase() == Phase::Poisoned {
        return Err(ProtocolError::Aborted {
            phase: state.abort_phase().unwrap_or(Phase::Poisoned).name(),
            reason: state.abort_reason().unwrap_or("unknown").to_string(),
        });
    }
    Ok(PartyOutcome {
        role,
        intersection: state.intersection().map(<[String]>::to_vec),
        peer_list_size: state.peer_list_size(),
        transcript,
    })
}

fn send_all<T: Transport>(
    transport: &mut T,
    out: Vec<WireMessage>,
    phase: Phase,
    transcript: &mut Vec<TranscriptEntry>,
) -> Result<(), ProtocolError> {
    for m in out {
        match transport.send(&m) {
            Ok(frame) => transcript.push(TranscriptEntry {
                direction: Direction::Sent,
                kind: m.kind,
                frame,
            }),
            // The peer may already be gone when we try to abort.
            Err(_) if m.kind == MsgKind::Abort => {}
            Err(e) => return Err(transport_error(phase, e)),
        }
    }
    Ok(())
}

fn transport_recv<T: Transport>(
    transport: &mut T,
    phase: Phase,
) -> Result<Option<(WireMessage, Vec<u8>)>, ProtocolError> {
    transport.recv().map_err(|e| transport_error(phase, e))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntersectionRun {
    /// `A ∩ B` in the initiator's list order.
    pub intersection: Vec<String>,
    /// Set only when the initiator sent `RESULT`.
    pub responder_learned: Option<Vec<String>>,
    /// The initiator's view of the exchange.
    pub transcript: Vec<TranscriptEntry>,
    pub responder_transcript: Vec<TranscriptEntry>,
    pub responder_saw_a_size: usize,
    pub initiator_saw_b_size: usize,
}

/// Runs both parties on their own threads over the given transports. Keys
/// and the responder's shuffle are derived from `seed`.
pub fn run_intersection_over<TI, TR>(
    list_a: &[String],
    list_b: &[String],
    params: &DomainParams,
    seed: u64,
    options: PartyOptions,
    mut initiator_transport: TI,
    mut responder_transport: TR,
) -> Result<IntersectionRun, ProtocolError>
where
    TI: Transport + Send,
    TR: Transport + Send,
{
    let initiator = PartyState::from_seed(Role::Initiator, list_a, params, seed, options)?;
    let responder = PartyState::from_seed(Role::Responder, list_b, params, seed, options)?;
    let (init, resp) = thread::scope(|s| {
        let handle = s.spawn(move || run_party(responder, &mut responder_transport));
        let init = run_party(initiator, &mut initiator_transport);
        drop(initiator_transport);
        (init, handle.join().expect("responder thread panicked"))
    });
    let init = init?;
    let resp = resp?;
    Ok(IntersectionRun {
        intersection: init.intersection.unwrap_or_default(),
        responder_learned: resp.intersection,
        transcript: init.transcript,
        responder_transcript: resp.transcript,
        responder_saw_a_size: resp.peer_list_size.unwrap_or(0),
        initiator_saw_b_size: init.peer_list_size.unwrap_or(0),
    })
}

/// [`run_intersection_over`] on an in-process loopback.
pub fn run_intersection(
    list_a: &[String],
    list_b: &[String],
    params: &DomainParams,
    seed: u64,
    options: PartyOptions,
) -> Result<IntersectionRun, ProtocolError> {
    let (ti, tr) = loopback_pair();
    run_intersection_over(list_a, list_b, params, seed, options, ti, tr)
}
