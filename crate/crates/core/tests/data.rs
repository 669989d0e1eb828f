use snapens::data::{gen_spirals, gen_two_moons, load_csv, load_idx, parse_idx, save_csv, split, normalize};
use snapens::nn::evaluate_error;
use snapens::schedule::ScheduleSpec;
use snapens::trainer;
use snapens::{Dataset, Matrix, ModelSpec, TrainConfig, TrainMode};

#[test]
fn spirals_round_trip_through_csv() {
    let d: Dataset = gen_spirals(2000, 1.5, 0.08, 17).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("spirals.csv");
    save_csv(&d, &path).unwrap();
    let back: Dataset = load_csv(&path, "label").unwrap();
    assert_eq!(back.labels(), d.labels());
    let bits = |m: &Matrix<f64>| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(back.inputs()), bits(d.inputs()));
}

/// Minimal IDX writer, independent of the reader.
fn idx_images(images: &[Vec<u8>], rows: u32, cols: u32) -> Vec<u8> {
    let mut out = vec![0, 0, 8, 3];
    for dim in [images.len() as u32, rows, cols] {
        out.extend_from_slice(&dim.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = vec![0, 0, 8, 1];
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[test]
fn idx_round_trip() {
    let images: Vec<Vec<u8>> = (0u8..5).map(|i| (0..6).map(|j| i * 40 + j * 7).collect()).collect();
    let labels = [0u8, 2, 1, 2, 0];
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = (dir.path().join("img.idx"), dir.path().join("lab.idx"));
    std::fs::write(&ip, idx_images(&images, 2, 3)).unwrap();
    std::fs::write(&lp, idx_labels(&labels)).unwrap();
    let d: Dataset = load_idx(&ip, &lp).unwrap();
    let expected: Vec<f64> = images.iter().flatten().map(|&b| b as f64 / 255.0).collect();
    assert_eq!(d.inputs().shape(), (5, 6));
    assert_eq!(d.inputs().as_slice(), expected.as_slice());
    assert_eq!(d.labels(), &[0, 2, 1, 2, 0]);

    // Writing the parsed dataset back out reproduces the original bytes.
    let pixels: Vec<Vec<u8>> = d
        .inputs()
        .iter_rows()
        .map(|r| r.iter().map(|v| (v * 255.0).round() as u8).collect())
        .collect();
    let labels_back: Vec<u8> = d.labels().iter().map(|&l| l as u8).collect();
    assert_eq!(idx_images(&pixels, 2, 3), std::fs::read(&ip).unwrap());
    assert_eq!(idx_labels(&labels_back), std::fs::read(&lp).unwrap());

    let short = idx_labels(&labels[..4]);
    assert!(parse_idx::<f64>(&idx_images(&images, 2, 3), &short).is_err());
}

#[test]
fn moons_are_learnable() {
    let d: Dataset = gen_two_moons(1000, 0.1, 21).unwrap();
    let (train, test) = split(&d, 0.5, 21).unwrap();
    let (train, test, _) = normalize(&train, &test).unwrap();
    let total = TrainConfig::total_iterations(60, 32, train.len());
    let config = TrainConfig {
        model: ModelSpec::new(vec![2, 32, 32, 2], 0.0).unwrap(),
        schedule: ScheduleSpec::step(0.1, total).unwrap(),
        mode: TrainMode::Single,
        epochs: 60,
        batch_size: 32,
        momentum: 0.9,
        weight_decay: 0.0,
        seed: 21,
        snapshot_count: None,
    };
    let run = trainer::train(&config, &train).unwrap();
    let last = run.final_snapshot();
    let err = evaluate_error(&last.spec, &last.params, &test).unwrap();
    assert!(err < 0.10, "test error {err}");
}
