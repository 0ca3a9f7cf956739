//! Delimited-file ingestion and synthetic linked file pairs.
//!
//! [`generate_pairs`] builds two files over a shared population with a known
//! set of true matches. The copies placed in file B go through a typo model
//! ([`corrupt_value`]) and random blanking, so linkage accuracy can be studied
//! as a function of measurement error and overlap.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linkage::{FeatureSpec, FieldDef, FieldKind, Record, Schema};

const GIVEN_NAMES: &str = include_str!("../data/given_names.txt");
const SURNAMES: &str = include_str!("../data/surnames.txt");
const SYLLABLES: &str = include_str!("../data/syllables.txt");

const POSTCODES: usize = 60;
const BIRTH_YEARS: std::ops::RangeInclusive<u32> = 1930..=2005;

// Stream tags keep the sub-generators independent of each other.
const STREAM_IDENTITY: u64 = 1 << 40;
const STREAM_CORRUPT: u64 = 2 << 40;
const STREAM_SELECT: u64 = 3 << 40;
const STREAM_ORDER: u64 = 4 << 40;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line 1: header {found:?} does not match schema {expected:?}")]
    Header {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("line {line}: duplicate id `{id}`")]
    DuplicateId { line: u64, id: String },
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("invalid argument: {0}")]
    Argument(String),
}

fn pool(text: &'static str) -> Vec<&'static str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Schema of the synthetic person files.
pub fn person_schema() -> Schema {
    let f = |name: &str, kind| FieldDef {
        name: name.into(),
        kind,
    };
    Schema::new(
        vec![
            f("id", FieldKind::Text),
            f("given_name", FieldKind::Text),
            f("surname", FieldKind::Text),
            f("birth_year", FieldKind::Numeric),
            f("sex", FieldKind::Categorical),
            f("postcode", FieldKind::Categorical),
        ],
        "id",
    )
    .expect("static schema is valid")
}

/// Comparison features for [`person_schema`] files.
pub fn person_features() -> Vec<FeatureSpec> {
    vec![
        FeatureSpec::edit_distance("given_name", "given_name", vec![0.7, 0.9]),
        FeatureSpec::edit_distance("surname", "surname", vec![0.7, 0.9]),
        FeatureSpec::equality("birth_year", "birth_year"),
        FeatureSpec::equality("sex", "sex"),
        FeatureSpec::equality("postcode", "postcode"),
    ]
}

/// `n` distinct surname-like strings: the bundled surname list first, then
/// syllable compounds.
pub fn surname_dictionary(n: usize) -> Vec<String> {
    let mut out: Vec<String> = pool(SURNAMES)
        .into_iter()
        .map(String::from)
        .take(n)
        .collect();
    let mut seen: HashSet<String> = out.iter().cloned().collect();
    let sections: Vec<Vec<&str>> = SYLLABLES
        .split("# ")
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.lines().nth(1).unwrap_or("").split_whitespace().collect())
        .collect();
    let (onsets, nuclei, codas) = (&sections[0], &sections[1], &sections[2]);
    'outer: for coda in codas {
        for second in onsets {
            for nucleus in nuclei {
                for first in onsets {
                    if out.len() >= n {
                        break 'outer;
                    }
                    let word =
                        format!("{first}{nucleus}{}{coda}", second.to_lowercase()).to_uppercase();
                    if seen.insert(word.clone()) {
                        out.push(word);
                    }
                }
            }
        }
    }
    out
}

/// A single-character typo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOp {
    Substitute,
    Transpose,
    Delete,
    Insert,
}

impl EditOp {
    pub const ALL: [EditOp; 4] = [
        EditOp::Substitute,
        EditOp::Transpose,
        EditOp::Delete,
        EditOp::Insert,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorProfile {
    /// Probability a present field receives one typo.
    pub field_error_rate: f64,
    /// Probability a field is blanked.
    pub missing_rate: f64,
    pub ops: Vec<EditOp>,
}

impl ErrorProfile {
    pub fn clean() -> Self {
        ErrorProfile {
            field_error_rate: 0.0,
            missing_rate: 0.0,
            ops: EditOp::ALL.to_vec(),
        }
    }

    pub fn typos(rate: f64) -> Self {
        ErrorProfile {
            field_error_rate: rate,
            ..Self::clean()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let ok = |r: f64| (0.0..=1.0).contains(&r);
        if !ok(self.field_error_rate) || !ok(self.missing_rate) {
            return Err(CorpusError::Argument(
                "error rates must lie in [0, 1]".into(),
            ));
        }
        if self.field_error_rate > 0.0 && self.ops.is_empty() {
            return Err(CorpusError::Argument(
                "a positive error rate needs at least one op".into(),
            ));
        }
        Ok(())
    }
}

fn replacement_char(original: char, rng: &mut impl Rng) -> char {
    let alphabet: &[u8] = if original.is_ascii_digit() {
        b"0123456789"
    } else {
        b"ABCDEFGHIJKLMNOPQRSTUVWXYZ"
    };
    loop {
        let c = *alphabet.choose(rng).expect("non-empty alphabet") as char;
        if c != original {
            return c;
        }
    }
}

/// Applies `op` at character position `pos`. Out-of-range positions and
/// transposes at the last character leave the value unchanged.
pub fn apply_edit(value: &str, op: EditOp, pos: usize, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = value.chars().collect();
    match op {
        EditOp::Substitute if pos < chars.len() => chars[pos] = replacement_char(chars[pos], rng),
        EditOp::Transpose if pos + 1 < chars.len() => chars.swap(pos, pos + 1),
        EditOp::Delete if pos < chars.len() => {
            chars.remove(pos);
        }
        EditOp::Insert if pos <= chars.len() => {
            let like = chars.get(pos).or(chars.last()).copied().unwrap_or('A');
            chars.insert(pos, replacement_char(like, rng));
        }
        _ => {}
    }
    chars.into_iter().collect()
}

/// At most one typo, drawn per `profile`. Empty input is returned unchanged.
pub fn corrupt_value(value: &str, profile: &ErrorProfile, rng: &mut impl Rng) -> String {
    if value.is_empty() || profile.ops.is_empty() || !rng.random_bool(profile.field_error_rate) {
        return value.to_owned();
    }
    let op = *profile.ops.choose(rng).expect("checked non-empty");
    let len = value.chars().count();
    let pos = match op {
        EditOp::Transpose if len < 2 => return value.to_owned(),
        EditOp::Transpose => rng.random_range(0..len - 1),
        EditOp::Insert => rng.random_range(0..=len),
        _ => rng.random_range(0..len),
    };
    apply_edit(value, op, pos, rng)
}

/// [`corrupt_value`] driven by its own seeded generator.
pub fn corrupt_value_seeded(value: &str, profile: &ErrorProfile, seed: u64) -> String {
    corrupt_value(value, profile, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag | index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthSet {
    /// `(id in file A, id in file B)` for every true match.
    pub pairs: BTreeSet<(String, String)>,
    /// Fraction of file A that also appears in file B.
    pub overlap: f64,
}

impl TruthSet {
    pub fn contains(&self, id_a: &str, id_b: &str) -> bool {
        self.pairs.contains(&(id_a.to_owned(), id_b.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub file_a: Vec<Record>,
    pub file_b: Vec<Record>,
    pub truth: TruthSet,
}

struct Identity {
    given: &'static str,
    surname: &'static str,
    birth_year: u32,
    sex: &'static str,
    postcode: String,
}

impl Identity {
    fn draw(rng: &mut ChaCha8Rng, given: &[&'static str], surnames: &[&'static str]) -> Self {
        Identity {
            given: given.choose(rng).expect("pool"),
            surname: surnames.choose(rng).expect("pool"),
            birth_year: rng.random_range(BIRTH_YEARS),
            sex: if rng.random_bool(0.5) { "F" } else { "M" },
            postcode: format!("P{:03}", rng.random_range(0..POSTCODES)),
        }
    }

    fn key(&self) -> (&'static str, &'static str, u32) {
        (self.given, self.surname, self.birth_year)
    }

    fn fields(&self) -> [(&'static str, String); 5] {
        [
            ("given_name", self.given.to_owned()),
            ("surname", self.surname.to_owned()),
            ("birth_year", self.birth_year.to_string()),
            ("sex", self.sex.to_owned()),
            ("postcode", self.postcode.clone()),
        ]
    }

    fn record(&self, id: String) -> Record {
        let mut r = Record::new(id);
        for (k, v) in self.fields() {
            r = r.with(k, v);
        }
        r
    }
}

/// Draws `count` identities that are distinct on (given name, surname, birth
/// year). Identity `i` only consumes its own generator stream.
fn identities(count: usize, seed: u64) -> Vec<Identity> {
    let given = pool(GIVEN_NAMES);
    let surnames = pool(SURNAMES);
    let mut seen = HashSet::new();
    (0..count)
        .map(|i| {
            let mut rng = stream(seed, STREAM_IDENTITY, i as u64);
            loop {
                let id = Identity::draw(&mut rng, &given, &surnames);
                if seen.insert(id.key()) {
                    return id;
                }
            }
        })
        .collect()
}

/// Two files over `n` base identities with `round(overlap * n)` corrupted
/// copies in file B. Fully determined by the arguments.
pub fn generate_pairs(
    n: usize,
    overlap: f64,
    profile: &ErrorProfile,
    seed: u64,
) -> Result<SyntheticPair, CorpusError> {
    if n == 0 {
        return Err(CorpusError::Argument("n must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&overlap) {
        return Err(CorpusError::Argument("overlap must lie in [0, 1]".into()));
    }
    profile.validate()?;
    let copies = ((overlap * n as f64).round() as usize).min(n);
    let people = identities(2 * n - copies, seed);

    let file_a: Vec<Record> = people[..n]
        .iter()
        .enumerate()
        .map(|(i, p)| p.record(format!("A{i:06}")))
        .collect();

    let mut chosen: Vec<usize> = (0..n).collect();
    chosen.shuffle(&mut stream(seed, STREAM_SELECT, 0));
    chosen.truncate(copies);

    // (source index in A, record without final id)
    let mut b_rows: Vec<(Option<usize>, Record)> = Vec::with_capacity(n);
    for &src in &chosen {
        let mut rng = stream(seed, STREAM_CORRUPT, src as u64);
        let mut r = Record::new(String::new());
        for (k, v) in people[src].fields() {
            let value = if rng.random_bool(profile.missing_rate) {
                String::new()
            } else {
                corrupt_value(&v, profile, &mut rng)
            };
            // A delimited file cannot tell an empty value from a missing one.
            r = if value.is_empty() {
                r.with_missing(k)
            } else {
                r.with(k, value)
            };
        }
        b_rows.push((Some(src), r));
    }
    for p in &people[n..] {
        b_rows.push((None, p.record(String::new())));
    }
    b_rows.shuffle(&mut stream(seed, STREAM_ORDER, 0));

    let mut pairs = BTreeSet::new();
    let file_b = b_rows
        .into_iter()
        .enumerate()
        .map(|(j, (src, mut r))| {
            r.id = format!("B{j:06}");
            if let Some(i) = src {
                pairs.insert((file_a[i].id.clone(), r.id.clone()));
            }
            r
        })
        .collect();
    Ok(SyntheticPair {
        file_a,
        file_b,
        truth: TruthSet { pairs, overlap },
    })
}

/// Writes records with a header row; missing values become empty cells.
pub fn write_table<W: Write>(
    out: W,
    records: &[Record],
    schema: &Schema,
) -> Result<(), CorpusError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| CorpusError::Io {
        path: "<output>".into(),
        source: e.into(),
    };
    w.write_record(schema.fields().iter().map(|f| f.name.as_str()))
        .map_err(io)?;
    for r in records {
        let row = schema.fields().iter().map(|f| {
            if f.name == schema.id_field() {
                r.id.as_str()
            } else {
                r.get(&f.name).unwrap_or("")
            }
        });
        w.write_record(row).map_err(io)?;
    }
    w.flush().map_err(|e| CorpusError::Io {
        path: "<output>".into(),
        source: e,
    })
}

pub fn write_truth<W: Write>(mut out: W, truth: &TruthSet) -> std::io::Result<()> {
    writeln!(out, "id_a,id_b")?;
    for (a, b) in &truth.pairs {
        writeln!(out, "{a},{b}")?;
    }
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<BTreeSet<(String, String)>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut out = BTreeSet::new();
    let body = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#'))
        .skip(1);
    for (i, line) in body {
        let (a, b) = line.split_once(',').ok_or_else(|| CorpusError::Malformed {
            line: i as u64 + 1,
            reason: "expected `id_a,id_b`".into(),
        })?;
        out.insert((a.to_owned(), b.to_owned()));
    }
    Ok(out)
}

/// Reads a delimited file whose header row equals the schema's field names.
pub fn load_table(path: &Path, schema: &Schema) -> Result<Vec<Record>, CorpusError> {
    let file = std::fs::File::open(path).map_err(|e| CorpusError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    read_table(file, schema)
}

pub fn read_table<R: Read>(input: R, schema: &Schema) -> Result<Vec<Record>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut rows = rdr.records();
    let expected: Vec<String> = schema.fields().iter().map(|f| f.name.clone()).collect();
    let header = match rows.next() {
        Some(h) => h.map_err(|e| malformed(1, e))?,
        None => {
            return Err(CorpusError::Header {
                expected,
                found: vec![],
            })
        }
    };
    let found: Vec<String> = header.iter().map(String::from).collect();
    if found != expected {
        return Err(CorpusError::Header { expected, found });
    }

    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut out = Vec::new();
    for row in rows {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e)
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let mut record = Record::new(String::new());
        for (def, cell) in schema.fields().iter().zip(row.iter()) {
            if def.name == schema.id_field() {
                if cell.is_empty() {
                    return Err(CorpusError::Malformed {
                        line,
                        reason: "empty id".into(),
                    });
                }
                record.id = cell.to_owned();
            } else if cell.is_empty() {
                record = record.with_missing(def.name.clone());
            } else {
                if def.kind == FieldKind::Numeric && cell.parse::<f64>().is_err() {
                    return Err(CorpusError::Malformed {
                        line,
                        reason: format!("field `{}`: `{cell}` is not numeric", def.name),
                    });
                }
                record = record.with(def.name.clone(), cell);
            }
        }
        if seen.insert(record.id.clone(), line).is_some() {
            return Err(CorpusError::DuplicateId {
                line,
                id: record.id,
            });
        }
        out.push(record);
    }
    Ok(out)
}

fn malformed(line: u64, e: csv::Error) -> CorpusError {
    CorpusError::Malformed {
        line,
        reason: e.to_string(),
    }
}
