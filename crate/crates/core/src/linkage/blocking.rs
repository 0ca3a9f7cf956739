use std::collections::{BTreeMap, HashMap};

use super::Record;

/// Block identity. Records missing the blocking field share the overflow
/// block, which is compared against every other block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BlockKey {
    Value(String),
    Overflow,
}

impl BlockKey {
    fn of(record: &Record, field: &str) -> Self {
        match record.get(field) {
            Some(v) => BlockKey::Value(v.to_owned()),
            None => BlockKey::Overflow,
        }
    }
}

pub fn make_blocks(records: &[Record], block_field: &str) -> BTreeMap<BlockKey, Vec<Record>> {
    let mut blocks: BTreeMap<BlockKey, Vec<Record>> = BTreeMap::new();
    for r in records {
        blocks
            .entry(BlockKey::of(r, block_field))
            .or_default()
            .push(r.clone());
    }
    blocks
}

/// Pairs compared when deduplicating within one file under `blocks`.
pub fn within_block_pair_count(blocks: &BTreeMap<BlockKey, Vec<Record>>) -> usize {
    let choose2 = |k: usize| k * k.saturating_sub(1) / 2;
    let overflow = blocks.get(&BlockKey::Overflow).map_or(0, Vec::len);
    let total: usize = blocks.values().map(Vec::len).sum();
    blocks
        .iter()
        .filter(|(k, _)| **k != BlockKey::Overflow)
        .map(|(_, v)| choose2(v.len()))
        .sum::<usize>()
        + choose2(overflow)
        + overflow * (total - overflow)
}

/// Index pairs `(i, j)` into file A and file B that will be compared.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidatePairs {
    pub pairs: Vec<(usize, usize)>,
    /// Pairs of the full cross product that blocking excluded.
    pub blocked_out: usize,
}

/// Candidate pairs in `(i, j)` lexicographic order. Without a blocking field
/// this is the full cross product.
pub fn candidate_pairs(a: &[Record], b: &[Record], block_field: Option<&str>) -> CandidatePairs {
    let full = a.len() * b.len();
    let Some(field) = block_field else {
        let pairs = (0..a.len())
            .flat_map(|i| (0..b.len()).map(move |j| (i, j)))
            .collect();
        return CandidatePairs {
            pairs,
            blocked_out: 0,
        };
    };

    let mut by_key: HashMap<&str, Vec<usize>> = HashMap::new();
    let mut overflow = Vec::new();
    for (j, r) in b.iter().enumerate() {
        match r.get(field) {
            Some(v) => by_key.entry(v).or_default().push(j),
            None => overflow.push(j),
        }
    }
    let mut pairs = Vec::new();
    for (i, r) in a.iter().enumerate() {
        match r.get(field) {
            None => pairs.extend((0..b.len()).map(|j| (i, j))),
            Some(v) => {
                let mut js: Vec<usize> = by_key.get(v).cloned().unwrap_or_default();
                js.extend_from_slice(&overflow);
                js.sort_unstable();
                pairs.extend(js.into_iter().map(|j| (i, j)));
            }
        }
    }
    let blocked_out = full - pairs.len();
    CandidatePairs { pairs, blocked_out }
}
