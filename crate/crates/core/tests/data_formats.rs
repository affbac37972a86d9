use std::path::PathBuf;

use dfa_esn::data::{
    normalize, parse_csv, parse_ts, write_csv, write_ts, CsvSchema, Dataset, LabeledSeries,
    NormMode, TsFile,
};
use dfa_esn::numerics::Matrix;
use proptest::prelude::*;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn basic_motions() -> Dataset {
    let dir = data_dir().join("BasicMotions");
    Dataset::load(
        &dir.join("BasicMotions_TRAIN.ts"),
        &dir.join("BasicMotions_TEST.ts"),
    )
    .unwrap()
}

#[test]
fn basic_motions_shape() {
    let ds = basic_motions();
    assert_eq!((ds.dims, ds.num_classes(), ds.length), (6, 4, 100));
    assert_eq!((ds.train.len(), ds.test.len()), (40, 40));
    assert_eq!(ds.vocabulary, ["Standing", "Running", "Walking", "Badminton"]);
    for c in 0..4 {
        assert_eq!(ds.train.iter().filter(|s| s.label() == c).count(), 10);
    }
}

#[test]
fn ts_and_csv_carry_identical_series() {
    let ds = basic_motions();
    let csv = write_csv(&ds.train, &ds.vocabulary).unwrap();
    let back = parse_csv(
        csv.as_bytes(),
        &CsvSchema {
            vocabulary: Some(ds.vocabulary.clone()),
        },
    )
    .unwrap();
    assert_eq!(back.series.len(), ds.train.len());
    for (a, b) in ds.train.iter().zip(&back.series) {
        assert_eq!(a.values(), b.values());
        assert_eq!(a.label(), b.label());
    }
    // The CSV path through Dataset::load agrees with the .ts path.
    let dir = tempfile::tempdir().unwrap();
    let (tr, te) = (dir.path().join("BM_TRAIN.csv"), dir.path().join("BM_TEST.csv"));
    std::fs::write(&tr, csv).unwrap();
    std::fs::write(&te, write_csv(&ds.test, &ds.vocabulary).unwrap()).unwrap();
    let from_csv = Dataset::load(&tr, &te).unwrap();
    assert_eq!(from_csv.vocabulary, ds.vocabulary);
    for (a, b) in ds.test.iter().zip(&from_csv.test) {
        assert_eq!(a.values(), b.values());
        assert_eq!(a.label(), b.label());
    }
}

#[test]
fn written_ts_parses_back() {
    let ds = basic_motions();
    let file = TsFile {
        problem_name: Some("BasicMotions".into()),
        dims: ds.dims,
        series_length: ds.length,
        class_labels: ds.vocabulary.clone(),
        series: ds.test.clone(),
    };
    let text = write_ts(&file).unwrap();
    let back = parse_ts(text.as_bytes(), "roundtrip").unwrap();
    assert_eq!(back.class_labels, file.class_labels);
    for (a, b) in file.series.iter().zip(&back.series) {
        assert_eq!(a.values(), b.values());
        assert_eq!(a.label(), b.label());
    }
}

#[test]
fn zscore_standardizes_basic_motions_train_split() {
    let (ds, spec) = normalize(&basic_motions(), NormMode::Zscore).unwrap();
    for j in 0..ds.dims {
        let vals: Vec<f64> = ds
            .train
            .iter()
            .flat_map(|s| (0..s.len()).map(move |t| s.step(t)[j]))
            .collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / vals.len() as f64).sqrt();
        assert!(m.abs() < 1e-9, "dim {j} mean {m}");
        assert!((sd - 1.0).abs() < 1e-9, "dim {j} std {sd}");
    }
    assert_eq!(spec.dims(), 6);
}

fn small_file() -> impl Strategy<Value = TsFile> {
    (1usize..4, 1usize..6, 2usize..4, 1usize..5).prop_flat_map(|(dims, len, classes, count)| {
        let series = prop::collection::vec(
            (
                prop::collection::vec(-1e6f64..1e6, dims * len),
                0..classes,
            ),
            count,
        );
        series.prop_map(move |raw| TsFile {
            problem_name: Some("Prop".into()),
            dims,
            series_length: len,
            class_labels: (0..classes).map(|c| format!("c{c}")).collect(),
            series: raw
                .into_iter()
                .enumerate()
                .map(|(i, (v, l))| {
                    LabeledSeries::new(Matrix::from_vec(len, dims, v).unwrap(), l, format!("Prop#{i}"))
                        .unwrap()
                })
                .collect(),
        })
    })
}

proptest! {
    #[test]
    fn ts_roundtrip_is_exact(file in small_file()) {
        let back = parse_ts(write_ts(&file).unwrap().as_bytes(), "prop").unwrap();
        prop_assert_eq!(back.series.len(), file.series.len());
        for (a, b) in file.series.iter().zip(&back.series) {
            prop_assert_eq!(a.values(), b.values());
            prop_assert_eq!(a.label(), b.label());
        }
    }

    #[test]
    fn csv_roundtrip_is_exact(file in small_file()) {
        let text = write_csv(&file.series, &file.class_labels).unwrap();
        let schema = CsvSchema { vocabulary: Some(file.class_labels.clone()) };
        let back = parse_csv(text.as_bytes(), &schema).unwrap();
        for (a, b) in file.series.iter().zip(&back.series) {
            prop_assert_eq!(a.values(), b.values());
            prop_assert_eq!(a.label(), b.label());
        }
    }

    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..512)) {
        let _ = parse_ts(&bytes, "fuzz");
        let _ = parse_csv(&bytes, &CsvSchema::default());
    }

    #[test]
    fn mutated_ts_never_panics(
        cut in 0usize..2000,
        flips in prop::collection::vec((0usize..2000, any::<u8>()), 0..8),
    ) {
        let base = std::fs::read(data_dir().join("BasicMotions/BasicMotions_TEST.ts")).unwrap();
        let mut bytes = base[..cut.min(base.len())].to_vec();
        bytes.extend_from_slice(&base[base.len().saturating_sub(3000)..]);
        for (i, b) in flips {
            if let Some(x) = bytes.get_mut(i) {
                *x = b;
            }
        }
        let _ = parse_ts(&bytes, "fuzz");
    }
}
