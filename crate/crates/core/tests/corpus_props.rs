use std::collections::{BTreeSet, HashMap};

use privlink::corpus::{generate_pairs, person_schema, read_table, write_table, ErrorProfile};
use privlink::linkage::Record;
use proptest::prelude::*;

const FIELDS: [&str; 5] = ["given_name", "surname", "birth_year", "sex", "postcode"];

fn bytes(records: &[Record]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_table(&mut buf, records, &person_schema()).unwrap();
    buf
}

/// Mean Levenshtein distance per field over true pairs; a blanked field counts
/// as the length of the original value.
fn mean_field_distance(n: usize, rate: f64, seed: u64) -> f64 {
    let pair = generate_pairs(n, 1.0, &ErrorProfile::typos(rate), seed).unwrap();
    let a: HashMap<&str, &Record> = pair.file_a.iter().map(|r| (r.id.as_str(), r)).collect();
    let b: HashMap<&str, &Record> = pair.file_b.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut total = 0usize;
    let mut count = 0usize;
    for (ia, ib) in &pair.truth.pairs {
        for f in FIELDS {
            let va = a[ia.as_str()].get(f).unwrap_or("");
            let vb = b[ib.as_str()].get(f).unwrap_or("");
            total += strsim::levenshtein(va, vb);
            count += 1;
        }
    }
    total as f64 / count as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_inputs_same_bytes_and_truth_is_consistent(
        n in 1usize..80,
        overlap in 0.0f64..=1.0,
        rate in 0.0f64..=1.0,
        missing in 0.0f64..0.5,
        seed in any::<u64>(),
    ) {
        let profile = ErrorProfile { missing_rate: missing, ..ErrorProfile::typos(rate) };
        let x = generate_pairs(n, overlap, &profile, seed).unwrap();
        let y = generate_pairs(n, overlap, &profile, seed).unwrap();
        prop_assert_eq!(bytes(&x.file_a), bytes(&y.file_a));
        prop_assert_eq!(bytes(&x.file_b), bytes(&y.file_b));
        prop_assert_eq!(&x.truth, &y.truth);

        let ids_a: BTreeSet<&str> = x.file_a.iter().map(|r| r.id.as_str()).collect();
        let ids_b: BTreeSet<&str> = x.file_b.iter().map(|r| r.id.as_str()).collect();
        prop_assert_eq!(ids_a.len(), n);
        prop_assert_eq!(ids_b.len(), n);
        for (a, b) in &x.truth.pairs {
            prop_assert!(ids_a.contains(a.as_str()) && ids_b.contains(b.as_str()));
        }
        prop_assert_eq!(x.truth.pairs.len(), ((overlap * n as f64).round() as usize).min(n));

        let back = read_table(&bytes(&x.file_b)[..], &person_schema()).unwrap();
        prop_assert_eq!(back, x.file_b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn edit_distance_grows_with_error_rate(seed in any::<u64>()) {
        let d: Vec<f64> = [0.0, 0.05, 0.2, 0.4]
            .iter()
            .map(|&r| mean_field_distance(400, r, seed))
            .collect();
        prop_assert_eq!(d[0], 0.0);
        for w in d.windows(2) {
            prop_assert!(w[1] > w[0], "{:?}", d);
        }
    }
}
