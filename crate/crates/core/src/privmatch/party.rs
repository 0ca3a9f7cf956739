use std::collections::{HashMap, HashSet};

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::group::{commute_encrypt, hash_to_group, DomainParams, GroupElement, PartyKey};
use super::wire::{MsgKind, WireMessage, MAX_ELEMENTS};
use super::ProtocolError;

/// Longest list either side may submit; `DOUBLE_ENC_A` carries two elements
/// per initiator item and must fit one frame.
pub const MAX_LIST_LEN: usize = MAX_ELEMENTS / 2;

const INITIATOR_STREAM: u64 = 1;
const RESPONDER_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Initiator,
    Responder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Start,
    AwaitDoubleEncA,
    AwaitEncB,
    AwaitHello,
    AwaitEncA,
    AwaitResult,
    Done,
    Poisoned,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Start => "start",
            Phase::AwaitDoubleEncA => "await-double-enc-a",
            Phase::AwaitEncB => "await-enc-b",
            Phase::AwaitHello => "await-hello",
            Phase::AwaitEncA => "await-enc-a",
            Phase::AwaitResult => "await-result",
            Phase::Done => "done",
            Phase::Poisoned => "poisoned",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PartyOptions {
    /// Initiator only: send `RESULT` back to the responder.
    pub honest: bool,
    /// Responder only: permute `DOUBLE_ENC_A` before sending.
    pub shuffle: bool,
}

impl Default for PartyOptions {
    fn default() -> Self {
        PartyOptions {
            honest: false,
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PartyState {
    role: Role,
    phase: Phase,
    params: DomainParams,
    key: PartyKey,
    own_list: Vec<String>,
    options: PartyOptions,
    shuffle_rng: ChaCha20Rng,
    enc_a: Vec<GroupElement>,
    double_index: HashMap<BigUint, usize>,
    received: Vec<GroupElement>,
    intersection: Option<Vec<String>>,
    peer_list_size: Option<usize>,
    abort_reason: Option<String>,
    abort_phase: Option<Phase>,
}

fn dedup(list: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    list.iter()
        .filter(|s| seen.insert(s.as_str()))
        .cloned()
        .collect()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

impl PartyState {
    fn build(
        role: Role,
        list: &[String],
        params: &DomainParams,
        key: PartyKey,
        seed: u64,
        options: PartyOptions,
    ) -> Result<Self, ProtocolError> {
        let own_list = dedup(list);
        if own_list.len() > MAX_LIST_LEN {
            return Err(ProtocolError::Capacity(format!(
                "{} distinct items exceed the per-party limit of {MAX_LIST_LEN}",
                own_list.len()
            )));
        }
        Ok(PartyState {
            role,
            phase: match role {
                Role::Initiator => Phase::Start,
                Role::Responder => Phase::AwaitHello,
            },
            params: params.clone(),
            key,
            own_list,
            options,
            shuffle_rng: stream_rng(seed, SHUFFLE_STREAM),
            enc_a: Vec::new(),
            double_index: HashMap::new(),
            received: Vec::new(),
            intersection: None,
            peer_list_size: None,
            abort_reason: None,
            abort_phase: None,
        })
    }

    /// A party whose key (and, for the responder, shuffle) is drawn from
    /// `seed`. Each role uses its own stream, so two processes given the same
    /// seed reproduce the same run.
    pub fn from_seed(
        role: Role,
        list: &[String],
        params: &DomainParams,
        seed: u64,
        options: PartyOptions,
    ) -> Result<Self, ProtocolError> {
        let stream = match role {
            Role::Initiator => INITIATOR_STREAM,
            Role::Responder => RESPONDER_STREAM,
        };
        let key = PartyKey::random(params, &mut stream_rng(seed, stream));
        PartyState::build(role, list, params, key, seed, options)
    }

    pub fn with_key(
        role: Role,
        list: &[String],
        params: &DomainParams,
        key: PartyKey,
        shuffle_seed: u64,
        options: PartyOptions,
    ) -> Result<Self, ProtocolError> {
        PartyState::build(role, list, params, key, shuffle_seed, options)
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn params(&self) -> &DomainParams {
        &self.params
    }

    /// The deduplicated input list, in first-occurrence order.
    pub fn own_list(&self) -> &[String] {
        &self.own_list
    }

    /// Every group element received from the peer so far.
    pub fn received(&self) -> &[GroupElement] {
        &self.received
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.phase, Phase::Done | Phase::Poisoned)
    }

    /// Plaintext intersection held by this party: always present for a
    /// finished initiator, present for a responder only if `RESULT` arrived.
    /// A poisoned party holds nothing.
    pub fn intersection(&self) -> Option<&[String]> {
        match self.phase {
            Phase::Poisoned => None,
            _ => self.intersection.as_deref(),
        }
    }

    /// Size of the peer's list as revealed by its message lengths.
    pub fn peer_list_size(&self) -> Option<usize> {
        self.peer_list_size
    }

    pub fn abort_reason(&self) -> Option<&str> {
        self.abort_reason.as_deref()
    }

    /// Handles end of stream. A responder waiting for `RESULT` finishes
    /// without one; anywhere else the close is premature and `false` is
    /// returned.
    pub fn peer_closed(&mut self) -> bool {
        match self.phase {
            Phase::AwaitResult => {
                self.phase = Phase::Done;
                true
            }
            Phase::Done => true,
            _ => false,
        }
    }

    /// Phase the party was in when it was poisoned.
    pub fn abort_phase(&self) -> Option<Phase> {
        self.abort_phase
    }

    fn poison(&mut self, reason: String) {
        self.abort_phase = Some(self.phase);
        self.phase = Phase::Poisoned;
        self.abort_reason = Some(reason);
        self.intersection = None;
    }

    fn element(&self, value: &BigUint) -> Result<GroupElement, String> {
        GroupElement::new(value.clone(), &self.params)
            .map_err(|_| "element outside the subgroup".to_string())
    }

    fn encrypt_own(&self) -> Vec<GroupElement> {
        self.own_list
            .iter()
            .map(|item| {
                commute_encrypt(
                    &self.key,
                    &hash_to_group(item.as_bytes(), &self.params),
                    &self.params,
                )
            })
            .collect()
    }

    fn initiator_start(&mut self) -> Vec<WireMessage> {
        self.enc_a = self.encrypt_own();
        self.phase = Phase::AwaitDoubleEncA;
        vec![
            WireMessage::new(
                MsgKind::Hello,
                vec![self.params.p().clone(), self.params.q().clone()],
            ),
            WireMessage::new(
                MsgKind::EncA,
                self.enc_a.iter().map(|e| e.value().clone()).collect(),
            ),
        ]
    }

    fn on_double_enc_a(&mut self, m: WireMessage) -> Result<Vec<WireMessage>, String> {
        if m.payload.len() != 2 * self.enc_a.len() {
            return Err(format!(
                "DOUBLE_ENC_A has {} elements, expected {}",
                m.payload.len(),
                2 * self.enc_a.len()
            ));
        }
        let mut position: HashMap<&BigUint, usize> = HashMap::new();
        for (i, e) in self.enc_a.iter().enumerate() {
            position.entry(e.value()).or_insert(i);
        }
        let mut index = HashMap::new();
        let mut claimed = HashSet::new();
        let mut received = Vec::with_capacity(m.payload.len());
        for pair in m.payload.chunks(2) {
            let i = *position
                .get(&pair[0])
                .ok_or("DOUBLE_ENC_A refers to an element that was never sent")?;
            if !claimed.insert(pair[0].clone()) {
                return Err("DOUBLE_ENC_A repeats an element".into());
            }
            received.push(self.element(&pair[0])?);
            let double = self.element(&pair[1])?;
            index.entry(double.value().clone()).or_insert(i);
            received.push(double);
        }
        self.received.extend(received);
        self.double_index = index;
        self.phase = Phase::AwaitEncB;
        Ok(Vec::new())
    }

    fn on_enc_b(&mut self, m: WireMessage) -> Result<Vec<WireMessage>, String> {
        if m.payload.len() > MAX_LIST_LEN {
            return Err("ENC_B exceeds the list limit".into());
        }
        let mut hits = Vec::new();
        for v in &m.payload {
            let e = self.element(v)?;
            let double = commute_encrypt(&self.key, &e, &self.params);
            if let Some(&i) = self.double_index.get(double.value()) {
                hits.push(i);
            }
            self.received.push(e);
        }
        hits.sort_unstable();
        hits.dedup();
        let items: Vec<String> = hits.into_iter().map(|i| self.own_list[i].clone()).collect();
        self.peer_list_size = Some(m.payload.len());
        self.phase = Phase::Done;
        let out = if self.options.honest {
            vec![WireMessage::new(
                MsgKind::Result,
                items.iter().map(|s| encode_item(s)).collect(),
            )]
        } else {
            Vec::new()
        };
        self.intersection = Some(items);
        Ok(out)
    }

    fn on_hello(&mut self, m: WireMessage) -> Result<Vec<WireMessage>, String> {
        if m.payload.as_slice() != [self.params.p().clone(), self.params.q().clone()] {
            return Err("HELLO parameters differ from the local domain".into());
        }
        self.phase = Phase::AwaitEncA;
        Ok(Vec::new())
    }

    fn on_enc_a(&mut self, m: WireMessage) -> Result<Vec<WireMessage>, String> {
        if m.payload.len() > MAX_LIST_LEN {
            return Err("ENC_A exceeds the list limit".into());
        }
        let mut pairs = Vec::with_capacity(m.payload.len());
        for v in &m.payload {
            let e = self.element(v)?;
            let double = commute_encrypt(&self.key, &e, &self.params);
            self.received.push(e.clone());
            pairs.push((e, double));
        }
        if self.options.shuffle {
            pairs.shuffle(&mut self.shuffle_rng);
        }
        self.peer_list_size = Some(m.payload.len());
        self.phase = Phase::AwaitResult;
        let double = pairs
            .into_iter()
            .flat_map(|(e, d)| [e.into_value(), d.into_value()])
            .collect();
        let enc_b = self
            .encrypt_own()
            .into_iter()
            .map(GroupElement::into_value)
            .collect();
        Ok(vec![
            WireMessage::new(MsgKind::DoubleEncA, double),
            WireMessage::new(MsgKind::EncB, enc_b),
        ])
    }

    fn on_result(&mut self, m: WireMessage) -> Result<Vec<WireMessage>, String> {
        let items = m
            .payload
            .iter()
            .map(decode_item)
            .collect::<Result<Vec<_>, _>>()?;
        self.intersection = Some(items);
        self.phase = Phase::Done;
        Ok(Vec::new())
    }
}

/// Items travel in `RESULT` as the integer whose big-endian bytes are
/// `0x01 || utf8`, so that empty and zero-led strings survive.
fn encode_item(item: &str) -> BigUint {
    let mut bytes = Vec::with_capacity(item.len() + 1);
    bytes.push(1);
    bytes.extend_from_slice(item.as_bytes());
    BigUint::from_bytes_be(&bytes)
}

fn decode_item(v: &BigUint) -> Result<String, String> {
    let bytes = v.to_bytes_be();
    match bytes.split_first() {
        Some((1, rest)) => {
            String::from_utf8(rest.to_vec()).map_err(|_| "RESULT item is not UTF-8".to_string())
        }
        _ => Err("RESULT item lacks its marker byte".into()),
    }
}

fn step(
    mut state: PartyState,
    role: Role,
    incoming: Option<WireMessage>,
) -> (PartyState, Vec<WireMessage>) {
    if state.role != role {
        state.poison("step called for the wrong role".into());
        return (state, vec![WireMessage::abort()]);
    }
    let Some(m) = incoming else {
        let out = if state.phase == Phase::Start {
            state.initiator_start()
        } else {
            Vec::new()
        };
        return (state, out);
    };
    if m.kind == MsgKind::Abort {
        if state.phase != Phase::Poisoned {
            state.poison(format!("peer aborted during {}", state.phase.name()));
        }
        return (state, Vec::new());
    }
    let result = match (state.phase, m.kind) {
        (Phase::Poisoned, _) => return (state, vec![WireMessage::abort()]),
        (Phase::AwaitDoubleEncA, MsgKind::DoubleEncA) => state.on_double_enc_a(m),
        (Phase::AwaitEncB, MsgKind::EncB) => state.on_enc_b(m),
        (Phase::AwaitHello, MsgKind::Hello) => state.on_hello(m),
        (Phase::AwaitEncA, MsgKind::EncA) => state.on_enc_a(m),
        (Phase::AwaitResult, MsgKind::Result) => state.on_result(m),
        (phase, kind) => Err(format!(
            "unexpected {} in phase {}",
            kind.name(),
            phase.name()
        )),
    };
    match result {
        Ok(out) => (state, out),
        Err(reason) => {
            state.poison(reason);
            (state, vec![WireMessage::abort()])
        }
    }
}

/// Advances the initiator. Call once with `None` to open the exchange.
pub fn initiator_step(
    state: PartyState,
    incoming: Option<WireMessage>,
) -> (PartyState, Vec<WireMessage>) {
    step(state, Role::Initiator, incoming)
}

/// Advances the responder by one incoming message.
pub fn responder_step(state: PartyState, incoming: WireMessage) -> (PartyState, Vec<WireMessage>) {
    step(state, Role::Responder, Some(incoming))
}
