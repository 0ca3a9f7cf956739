use std::collections::BTreeSet;

use num_bigint::BigUint;
use privlink::privmatch::{
    commute_encrypt, derive_group, hash_to_group, initiator_step, responder_step, run_intersection,
    DomainParams, GroupElement, MsgKind, PartyKey, PartyOptions, PartyState, Phase, Role,
    WireMessage,
};
use proptest::prelude::*;
use std::sync::OnceLock;

fn params() -> &'static DomainParams {
    static P: OnceLock<DomainParams> = OnceLock::new();
    P.get_or_init(|| derive_group(256, b"integration-props").unwrap())
}

/// Left-to-right square-and-multiply over the exponent's bits.
fn modpow(base: &BigUint, exp: &BigUint, m: &BigUint) -> BigUint {
    let mut acc = BigUint::from(1u32) % m;
    for i in (0..exp.bits()).rev() {
        acc = &acc * &acc % m;
        if exp.bit(i) {
            acc = acc * base % m;
        }
    }
    acc
}

fn key_from(bytes: &[u8], p: &DomainParams) -> PartyKey {
    let span = p.q() - 2u32;
    PartyKey::new(BigUint::from_bytes_be(bytes) % span + 2u32, p).unwrap()
}

fn item_list(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-e]{1,3}", 0..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn encryption_commutes(
        item in prop::collection::vec(any::<u8>(), 0..40),
        ka in prop::collection::vec(any::<u8>(), 32),
        kb in prop::collection::vec(any::<u8>(), 32),
    ) {
        let p = params();
        let e = hash_to_group(&item, p);
        let (a, b) = (key_from(&ka, p), key_from(&kb, p));
        let ab = commute_encrypt(&b, &commute_encrypt(&a, &e, p), p);
        let ba = commute_encrypt(&a, &commute_encrypt(&b, &e, p), p);
        prop_assert_eq!(&ab, &ba);
        let oracle = modpow(&modpow(e.value(), a.exponent(), p.p()), b.exponent(), p.p());
        prop_assert_eq!(ab.value(), &oracle);
        prop_assert!(p.is_member(ab.value()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn intersection_matches_plaintext(a in item_list(25), b in item_list(25), seed in any::<u64>(), honest in any::<bool>()) {
        let p = params();
        let opts = PartyOptions { honest, ..PartyOptions::default() };
        let run = run_intersection(&a, &b, p, seed, opts).unwrap();
        let bset: BTreeSet<&String> = b.iter().collect();
        let mut seen = BTreeSet::new();
        let expected: Vec<String> = a
            .iter()
            .filter(|x| bset.contains(x) && seen.insert(x.as_str()))
            .cloned()
            .collect();
        prop_assert_eq!(&run.intersection, &expected);
        if honest {
            prop_assert_eq!(run.responder_learned.as_ref(), Some(&expected));
        } else {
            prop_assert!(run.responder_learned.is_none());
        }
        for entry in run.transcript.iter().filter(|t| t.kind != MsgKind::Result && t.kind != MsgKind::Hello) {
            let m = privlink::privmatch::decode_msg(&entry.frame).unwrap();
            for v in &m.payload {
                prop_assert!(GroupElement::new(v.clone(), p).is_ok());
            }
        }
    }
}

/// Messages each party receives in an honest run, in order.
fn honest_inbox(a: &[String], b: &[String], seed: u64) -> (Vec<WireMessage>, Vec<WireMessage>) {
    let p = params();
    let opts = PartyOptions {
        honest: true,
        ..PartyOptions::default()
    };
    let mut init = PartyState::from_seed(Role::Initiator, a, p, seed, opts).unwrap();
    let mut resp = PartyState::from_seed(Role::Responder, b, p, seed, opts).unwrap();
    let (mut to_resp, mut to_init) = (Vec::new(), Vec::new());
    let (s, out) = initiator_step(init, None);
    init = s;
    for m in out {
        to_resp.push(m.clone());
        let (s, back) = responder_step(resp, m);
        resp = s;
        to_init.extend(back);
    }
    for m in to_init.clone() {
        let (s, out) = initiator_step(init, Some(m));
        init = s;
        for r in out {
            to_resp.push(r.clone());
            resp = responder_step(resp, r).0;
        }
    }
    assert_eq!(init.phase(), Phase::Done);
    assert_eq!(resp.phase(), Phase::Done);
    (to_init, to_resp)
}

fn expected_kind(phase: Phase) -> Option<MsgKind> {
    match phase {
        Phase::AwaitHello => Some(MsgKind::Hello),
        Phase::AwaitEncA => Some(MsgKind::EncA),
        Phase::AwaitDoubleEncA => Some(MsgKind::DoubleEncA),
        Phase::AwaitEncB => Some(MsgKind::EncB),
        Phase::AwaitResult => Some(MsgKind::Result),
        _ => None,
    }
}

fn arb_message() -> impl Strategy<Value = WireMessage> {
    (
        prop::sample::select(MsgKind::ALL.to_vec()),
        prop::collection::vec(any::<u64>(), 0..6),
    )
        .prop_map(|(kind, vals)| {
            WireMessage::new(kind, vals.into_iter().map(BigUint::from).collect())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn out_of_order_message_poisons(
        a in item_list(6),
        b in item_list(6),
        seed in any::<u64>(),
        initiator in any::<bool>(),
        cut in 0usize..4,
        bad_kind in prop::sample::select(MsgKind::ALL.to_vec()),
        bad_payload in prop::collection::vec(any::<u64>(), 0..4),
        later in prop::collection::vec(arb_message(), 0..6),
    ) {
        let p = params();
        let opts = PartyOptions { honest: true, ..PartyOptions::default() };
        let (to_init, to_resp) = honest_inbox(&a, &b, seed);
        let role = if initiator { Role::Initiator } else { Role::Responder };
        let list = if initiator { &a } else { &b };
        let mut state = PartyState::from_seed(role, list, p, seed, opts).unwrap();
        let feed = |s: PartyState, m: Option<WireMessage>| match role {
            Role::Initiator => initiator_step(s, m),
            Role::Responder => responder_step(s, m.expect("responder needs input")),
        };
        if initiator {
            state = feed(state, None).0;
        }
        let inbox = if initiator { &to_init } else { &to_resp };
        for m in inbox.iter().take(cut) {
            state = feed(state, Some(m.clone())).0;
        }
        prop_assume!(bad_kind != MsgKind::Abort && Some(bad_kind) != expected_kind(state.phase()));

        let bad = WireMessage::new(bad_kind, bad_payload.into_iter().map(BigUint::from).collect());
        let (s, out) = feed(state, Some(bad));
        state = s;
        prop_assert_eq!(state.phase(), Phase::Poisoned);
        prop_assert_eq!(out.iter().map(|m| m.kind).collect::<Vec<_>>(), vec![MsgKind::Abort]);
        prop_assert!(state.intersection().is_none());

        // Nothing, including the rest of the honest exchange, revives it.
        for m in later.into_iter().chain(inbox.iter().cloned()) {
            let is_abort = m.kind == MsgKind::Abort;
            let (s, out) = feed(state, Some(m));
            state = s;
            prop_assert_eq!(state.phase(), Phase::Poisoned);
            prop_assert!(state.intersection().is_none());
            let expected = if is_abort { vec![] } else { vec![MsgKind::Abort] };
            prop_assert_eq!(out.iter().map(|m| m.kind).collect::<Vec<_>>(), expected);
        }
    }
}
