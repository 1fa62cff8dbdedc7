mod common;

use common::*;
use proptest::prelude::*;
use saefire_core::actstore::{
    read_activation_file, read_earnings, write_activation_file, write_activations, write_earnings,
    ActivationStream, EarningsRecord, SaefReader, SparseRow,
};
use saefire_core::pooling::{read_pooled, write_pooled, DocumentVector};
use saefire_core::Error;

fn value() -> impl Strategy<Value = f32> {
    prop_oneof![
        Just(0.0f32),
        Just(-0.0f32),
        Just(f32::MIN_POSITIVE),
        Just(1e-45f32),
        Just(f32::MAX),
        0.0f32..1e6,
    ]
}

fn row(m: u32) -> impl Strategy<Value = SparseRow> {
    proptest::collection::btree_map(0..m, value(), 0..(m as usize).min(12))
        .prop_map(|map| SparseRow::from_pairs(map.into_iter().collect()).unwrap())
}

fn stream(m: u32) -> impl Strategy<Value = ActivationStream> {
    (
        "[a-zA-Z0-9_é-]{0,12}",
        0i64..5000,
        proptest::collection::vec(row(m), 0..8),
    )
        .prop_map(move |(id, d, rows)| {
            ActivationStream::new(id, date(2000, 1, 1) + chrono::Duration::days(d), m, rows)
                .unwrap()
        })
}

fn corpus() -> impl Strategy<Value = Vec<ActivationStream>> {
    (1u32..40).prop_flat_map(|m| proptest::collection::vec(stream(m), 1..6))
}

type StreamBits = (String, i64, Vec<Vec<(u32, u32)>>);

fn bits(streams: &[ActivationStream]) -> Vec<StreamBits> {
    streams
        .iter()
        .map(|s| {
            (
                s.doc_id.clone(),
                s.date.and_hms_opt(0, 0, 0).unwrap().and_utc().timestamp(),
                s.rows()
                    .iter()
                    .map(|r| r.iter().map(|(i, v)| (i, v.to_bits())).collect())
                    .collect(),
            )
        })
        .collect()
}

proptest! {
    #[test]
    fn saef_roundtrip_is_bit_exact(streams in corpus()) {
        let mut buf = Vec::new();
        write_activations(&streams, &mut buf).unwrap();
        let reader = SaefReader::new(&buf[..]).unwrap();
        prop_assert_eq!(reader.doc_count(), streams.len());
        let back: Vec<ActivationStream> = reader.collect::<Result<_, _>>().unwrap();
        prop_assert_eq!(bits(&back), bits(&streams));
        let mut again = Vec::new();
        write_activations(&back, &mut again).unwrap();
        prop_assert_eq!(again, buf);
    }

    #[test]
    fn truncated_saef_is_reported(streams in corpus(), cut in 0.0f64..1.0) {
        let mut buf = Vec::new();
        write_activations(&streams, &mut buf).unwrap();
        let at = ((buf.len() - 1) as f64 * cut) as usize;
        let res = SaefReader::new(&buf[..at]).and_then(|r| r.collect::<Result<Vec<_>, _>>());
        prop_assert!(res.is_err());
    }

    #[test]
    fn pooled_roundtrip_is_exact(
        m in 1usize..20,
        docs in proptest::collection::vec((any::<u64>(), proptest::option::of(0u8..2)), 0..10),
    ) {
        let docs: Vec<DocumentVector> = docs
            .iter()
            .enumerate()
            .map(|(i, &(s, label))| {
                let mut r = rng(s);
                let values = (0..m).map(|_| rand::Rng::random_range(&mut r, 0.0..1e9)).collect();
                doc(&format!("d{i}"), random_date(&mut r), values, label)
            })
            .collect();
        let mut buf = Vec::new();
        write_pooled(&docs, &mut buf).unwrap();
        prop_assert_eq!(read_pooled(&buf[..]).unwrap(), docs);
    }
}

#[test]
fn activation_file_roundtrip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.saef");
    let mut r = rng(9);
    let streams: Vec<_> = (0..5)
        .map(|i| random_stream(&mut r, &format!("doc{i}"), 30, 20))
        .collect();
    write_activation_file(&streams, &p).unwrap();
    assert_eq!(read_activation_file(&p).unwrap(), streams);

    let missing = dir.path().join("nope.saef");
    assert!(matches!(
        read_activation_file(&missing),
        Err(Error::Io { .. })
    ));

    std::fs::write(&p, b"SAEX\x01\x00").unwrap();
    let err = read_activation_file(&p).unwrap_err();
    assert!(err.to_string().contains("a.saef"), "{err}");
    assert!(matches!(err.root(), Error::Format(_)));
}

#[test]
fn earnings_csv_roundtrip() {
    let recs = vec![
        EarningsRecord {
            doc_id: "AAPL-2013Q1".into(),
            date: date(2013, 1, 23),
            reported_eps: 13.81,
            analyst_estimates: vec![13.5, 13.44, 13.9],
        },
        EarningsRecord {
            doc_id: "with,comma".into(),
            date: date(2014, 7, 1),
            reported_eps: -0.25,
            analyst_estimates: vec![-0.3, -0.2],
        },
    ];
    let mut buf = Vec::new();
    write_earnings(&recs, &mut buf).unwrap();
    assert_eq!(read_earnings(&buf[..]).unwrap(), recs);
}

#[test]
fn earnings_csv_errors_name_the_line() {
    let text =
        "doc_id,date,reported_eps,analyst_estimates\na,2013-01-01,1.0,1;2\nb,2013-01-02,abc,1;2\n";
    match read_earnings(text.as_bytes()) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    let text = "doc_id,date,reported_eps\na,2013-01-01,1.0\n";
    assert!(matches!(
        read_earnings(text.as_bytes()),
        Err(Error::Schema { .. })
    ));
}
