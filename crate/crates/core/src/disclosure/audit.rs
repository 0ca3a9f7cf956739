//! Append-only audit log with a SHA-256 hash chain.
//!
//! Each entry is encoded canonically as
//!
//! ```text
//! seq:u64be  field(timestamp) field(actor)
//! field(query_digest) field(response_digest) field(prev_digest)
//! field(x) = len:u32be bytes[len]
//! ```
//!
//! with digests as 32 raw bytes. A log line is the lowercase hex of the
//! canonical bytes followed by their own SHA-256, so a change anywhere in a
//! line, including the last one, is caught. `prev_digest` of entry `i` is the
//! digest of entry `i - 1`; entry 0 chains to [`GENESIS_DIGEST`].
//!
//! Dropping entries from the end of a log leaves a valid shorter chain. To
//! detect that, keep the head digest somewhere else and check it with
//! [`audit_verify_anchored`].

use sha2::{Digest, Sha256};

use super::DisclosureError;

pub const GENESIS_DIGEST: &str = "0000000000000000000000000000000000000000000000000000000000000000";

pub type Digest32 = [u8; 32];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditEntry {
    pub seq: u64,
    pub timestamp: String,
    pub actor: String,
    pub query_digest: Digest32,
    pub response_digest: Digest32,
    pub prev_digest: Digest32,
}

impl AuditEntry {
    pub fn digest(&self) -> Digest32 {
        Sha256::digest(canonical_encoding(self)).into()
    }

    pub fn line(&self) -> String {
        let mut bytes = canonical_encoding(self);
        let digest: Digest32 = Sha256::digest(&bytes).into();
        bytes.extend_from_slice(&digest);
        hex::encode(bytes)
    }
}

fn field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_be_bytes());
    out.extend_from_slice(bytes);
}

pub fn canonical_encoding(e: &AuditEntry) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 5 * 4 + e.timestamp.len() + e.actor.len() + 96);
    out.extend_from_slice(&e.seq.to_be_bytes());
    field(&mut out, e.timestamp.as_bytes());
    field(&mut out, e.actor.as_bytes());
    field(&mut out, &e.query_digest);
    field(&mut out, &e.response_digest);
    field(&mut out, &e.prev_digest);
    out
}

fn read_field<'a>(buf: &mut &'a [u8]) -> Result<&'a [u8], &'static str> {
    if buf.len() < 4 {
        return Err("truncated field length");
    }
    let len = u32::from_be_bytes(buf[..4].try_into().expect("4 bytes")) as usize;
    let rest = &buf[4..];
    if rest.len() < len {
        return Err("truncated field");
    }
    let (head, tail) = rest.split_at(len);
    *buf = tail;
    Ok(head)
}

fn digest_field<'a>(buf: &mut &'a [u8]) -> Result<&'a Digest32, &'static str> {
    read_field(buf)?
        .try_into()
        .map_err(|_| "digest field is not 32 bytes")
}

fn text_field<'a>(buf: &mut &'a [u8]) -> Result<&'a str, &'static str> {
    std::str::from_utf8(read_field(buf)?).map_err(|_| "text field is not UTF-8")
}

/// An entry borrowed from a decoded line, with the line's verified digest.
struct EntryView<'a> {
    seq: u64,
    timestamp: &'a str,
    actor: &'a str,
    query_digest: &'a Digest32,
    response_digest: &'a Digest32,
    prev_digest: &'a Digest32,
    digest: &'a Digest32,
}

impl EntryView<'_> {
    fn to_entry(&self) -> AuditEntry {
        AuditEntry {
            seq: self.seq,
            timestamp: self.timestamp.to_string(),
            actor: self.actor.to_string(),
            query_digest: *self.query_digest,
            response_digest: *self.response_digest,
            prev_digest: *self.prev_digest,
        }
    }
}

/// Parses one decoded line and checks its self-digest. The fields are
/// length-prefixed and must use the whole body, so the body is the entry's
/// canonical encoding and the stored digest is the entry's digest.
fn parse_bytes(bytes: &[u8]) -> Result<EntryView<'_>, &'static str> {
    if bytes.len() < 8 + 32 {
        return Err("entry too short");
    }
    let (body, stored) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != stored {
        return Err("entry digest mismatch");
    }
    let mut buf = &body[8..];
    let view = EntryView {
        seq: u64::from_be_bytes(body[..8].try_into().expect("8 bytes")),
        timestamp: text_field(&mut buf)?,
        actor: text_field(&mut buf)?,
        query_digest: digest_field(&mut buf)?,
        response_digest: digest_field(&mut buf)?,
        prev_digest: digest_field(&mut buf)?,
        digest: stored.try_into().expect("32 bytes"),
    };
    if !buf.is_empty() {
        return Err("trailing bytes in entry");
    }
    Ok(view)
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AuditLog {
    entries: Vec<AuditEntry>,
}

impl AuditLog {
    pub fn new() -> Self {
        AuditLog::default()
    }

    pub fn entries(&self) -> &[AuditEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Digest of the last entry, or the genesis digest for an empty log.
    pub fn head(&self) -> Digest32 {
        self.entries.last().map_or([0; 32], AuditEntry::digest)
    }

    pub fn head_hex(&self) -> String {
        hex::encode(self.head())
    }

    fn tail_ok(&self) -> bool {
        let n = self.entries.len();
        match n {
            0 => true,
            1 => self.entries[0].seq == 0 && self.entries[0].prev_digest == [0; 32],
            _ => {
                let (a, b) = (&self.entries[n - 2], &self.entries[n - 1]);
                b.seq == (n - 1) as u64 && a.seq + 1 == b.seq && b.prev_digest == a.digest()
            }
        }
    }

    pub fn append(
        &mut self,
        timestamp: &str,
        actor: &str,
        query_digest: Digest32,
        response_digest: Digest32,
    ) -> Result<&AuditEntry, DisclosureError> {
        if !self.tail_ok() {
            return Err(DisclosureError::Audit(
                "log tail does not verify; append refused".into(),
            ));
        }
        let entry = AuditEntry {
            seq: self.entries.len() as u64,
            timestamp: timestamp.to_string(),
            actor: actor.to_string(),
            query_digest,
            response_digest,
            prev_digest: self.head(),
        };
        self.entries.push(entry);
        Ok(self.entries.last().expect("just pushed"))
    }

    /// One hex line per entry, each terminated by `\n`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.line());
            out.push('\n');
        }
        out
    }

    /// Parses and fully verifies a log.
    pub fn parse(text: &str) -> Result<AuditLog, DisclosureError> {
        let entries = verify_entries(text)
            .map_err(|(seq, reason)| DisclosureError::Audit(format!("entry {seq}: {reason}")))?;
        Ok(AuditLog { entries })
    }
}

/// Incremental chain verification, one line at a time.
///
/// Pushing every line of a log in order performs exactly the checks of
/// [`audit_verify`]. The state is small and cloneable, so a verified prefix
/// can be reused.
#[derive(Debug, Clone, Default)]
pub struct ChainVerifier {
    count: u64,
    head: Digest32,
    buf: Vec<u8>,
}

impl ChainVerifier {
    pub fn new() -> Self {
        ChainVerifier::default()
    }

    /// Entries accepted so far.
    pub fn count(&self) -> u64 {
        self.count
    }

    /// Digest of the last accepted entry, or all zeros.
    pub fn head(&self) -> Digest32 {
        self.head
    }

    /// Verifies the next line. On error the verifier is left unchanged.
    pub fn push_line(&mut self, line: &str) -> Result<(), String> {
        self.push_with(line, |_| {})
    }

    fn push_with(&mut self, line: &str, visit: impl FnOnce(&EntryView<'_>)) -> Result<(), String> {
        let line = line.strip_suffix('\r').unwrap_or(line).as_bytes();
        if !line.len().is_multiple_of(2) {
            return Err("bad hex: odd length".into());
        }
        self.buf.resize(line.len() / 2, 0);
        hex::decode_to_slice(line, &mut self.buf).map_err(|e| format!("bad hex: {e}"))?;
        let entry = parse_bytes(&self.buf)?;
        if entry.seq != self.count {
            return Err(format!("sequence number {} out of order", entry.seq));
        }
        if *entry.prev_digest != self.head {
            return Err("chain link does not match the previous entry".into());
        }
        visit(&entry);
        self.head = *entry.digest;
        self.count += 1;
        Ok(())
    }
}

/// Verifies every line in order, handing each verified entry to `visit`.
/// Returns the entry count and head digest, or the first failing position
/// and the reason.
fn scan(
    text: &str,
    mut visit: impl FnMut(&EntryView<'_>),
) -> Result<(usize, Digest32), (u64, String)> {
    let mut v = ChainVerifier::new();
    for line in text.lines() {
        v.push_with(line, &mut visit).map_err(|r| (v.count, r))?;
    }
    Ok((v.count as usize, v.head))
}

fn verify_entries(text: &str) -> Result<Vec<AuditEntry>, (u64, String)> {
    let mut entries = Vec::new();
    scan(text, |e| entries.push(e.to_entry()))?;
    Ok(entries)
}

pub fn audit_append(
    log: &mut AuditLog,
    timestamp: &str,
    actor: &str,
    query_digest: Digest32,
    response_digest: Digest32,
) -> Result<AuditEntry, DisclosureError> {
    log.append(timestamp, actor, query_digest, response_digest)
        .cloned()
}

/// `true` iff every line parses, carries a correct self-digest, is numbered
/// consecutively from 0 and chains to its predecessor.
pub fn audit_verify(text: &str) -> bool {
    scan(text, |_| {}).is_ok()
}

/// Like [`audit_verify`], returning the head digest on success or the first
/// failing sequence position and the reason.
pub fn audit_verify_detailed(text: &str) -> Result<(usize, String), (u64, String)> {
    let (count, head) = scan(text, |_| {})?;
    Ok((count, hex::encode(head)))
}

/// [`audit_verify`] plus a check that the chain ends at `expected_head`,
/// which also catches entries removed from the end.
pub fn audit_verify_anchored(text: &str, expected_head: &str) -> bool {
    matches!(audit_verify_detailed(text), Ok((_, head)) if head.eq_ignore_ascii_case(expected_head.trim()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(x: u8) -> Digest32 {
        [x; 32]
    }

    fn log_of(n: usize) -> AuditLog {
        let mut log = AuditLog::new();
        for i in 0..n {
            log.append(
                &format!("2024-01-01T00:00:{:02}Z", i % 60),
                "ana",
                d(i as u8),
                d(!(i as u8)),
            )
            .unwrap();
        }
        log
    }

    #[test]
    fn genesis_and_chain() {
        let log = log_of(2);
        assert_eq!(log.entries()[0].seq, 0);
        assert_eq!(hex::encode(log.entries()[0].prev_digest), GENESIS_DIGEST);
        assert_eq!(log.entries()[1].prev_digest, log.entries()[0].digest());
        assert!(audit_verify(""));
    }

    #[test]
    fn round_trip_and_verify() {
        let log = log_of(50);
        let text = log.to_text();
        assert!(audit_verify(&text));
        assert_eq!(AuditLog::parse(&text).unwrap(), log);
        assert_eq!(audit_verify_detailed(&text).unwrap(), (50, log.head_hex()));
    }

    #[test]
    fn every_byte_flip_in_small_log_is_caught() {
        let text = log_of(5).to_text();
        let lines: Vec<&str> = text.lines().collect();
        for (li, line) in lines.iter().enumerate() {
            let mut raw = hex::decode(line).unwrap();
            for b in 0..raw.len() {
                raw[b] ^= 0x01;
                let mut tampered: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
                tampered[li] = hex::encode(&raw);
                assert!(!audit_verify(&tampered.join("\n")), "line {li} byte {b}");
                raw[b] ^= 0x01;
            }
        }
    }

    #[test]
    fn deletions() {
        let log = log_of(6);
        let lines: Vec<String> = log.to_text().lines().map(String::from).collect();
        for i in 0..lines.len() {
            let mut cut = lines.clone();
            cut.remove(i);
            let text = cut.join("\n");
            if i + 1 < lines.len() {
                assert!(!audit_verify(&text));
                assert_eq!(audit_verify_detailed(&text).unwrap_err().0, i as u64);
            }
            assert!(!audit_verify_anchored(&text, &log.head_hex()));
        }
        assert!(audit_verify_anchored(&log.to_text(), &log.head_hex()));
    }

    #[test]
    fn incremental_verifier_matches_whole_log() {
        let log = log_of(8);
        let text = log.to_text();
        let mut v = ChainVerifier::new();
        for line in text.lines() {
            v.push_line(line).unwrap();
        }
        assert_eq!((v.count(), v.head()), (8, log.head()));
        let before = v.clone();
        assert!(v.push_line(text.lines().next().unwrap()).is_err());
        assert_eq!((v.count(), v.head()), (before.count(), before.head()));
    }

    #[test]
    fn append_refused_on_broken_tail() {
        let mut log = log_of(3);
        log.entries[2].prev_digest = d(9);
        assert!(log.append("t", "x", d(0), d(0)).is_err());
    }
}
