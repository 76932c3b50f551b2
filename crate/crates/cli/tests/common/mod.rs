#![allow(dead_code)]

use std::path::Path;

use convsparse::datasets::{write_idx, LabeledDataset, Provenance};
use convsparse::{seeded_rng, Tensor};
use rand::Rng;

/// Three 12×12 stroke classes (row bar, column bar, diagonal) with light noise.
pub fn stroke_images(per_class: usize, seed: u64) -> LabeledDataset {
    let mut rng = seeded_rng(seed);
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for i in 0..per_class * 3 {
        let class = i % 3;
        let mut img = vec![0.0; 144];
        for t in 2..10 {
            let (r, c) = match class {
                0 => (5, t),
                1 => (t, 6),
                _ => (t, t),
            };
            img[r * 12 + c] = 0.8 + 0.2 * rng.random::<f64>();
        }
        for v in img.iter_mut() {
            *v = (*v + 0.05 * rng.random::<f64>()).min(1.0);
        }
        samples.push(Tensor::new(&[12, 12], img).unwrap());
        labels.push(class);
    }
    LabeledDataset::new(samples, labels, Provenance::default()).unwrap()
}

pub fn write_strokes(dir: &Path, per_class: usize) {
    write_idx(&stroke_images(per_class, 5), &dir.join("images"), &dir.join("labels")).unwrap();
}

/// Two-class series of length 32: a bump near the start or near the end.
pub fn write_series(dir: &Path, per_class: usize) {
    let mut rng = seeded_rng(9);
    for name in ["train.tsv", "test.tsv"] {
        let mut text = String::new();
        for i in 0..per_class * 2 {
            let class = i % 2;
            let centre = if class == 0 { 8.0 } else { 24.0 } + rng.random_range(-2.0..2.0);
            let row: Vec<String> = (0..32)
                .map(|t| {
                    let v = (-(t as f64 - centre).powi(2) / 6.0).exp() + 0.05 * rng.random::<f64>();
                    format!("{v:.5}")
                })
                .collect();
            text.push_str(&format!("{}\t{}\n", class + 1, row.join("\t")));
        }
        std::fs::write(dir.join(name), text).unwrap();
    }
}

pub const STROKE_METHODS: &str = r#"
[[methods]]
kind = "dl"
atoms = 6
dict_iters = 3

[[methods]]
kind = "pdl"
atoms = 6
patch = [5, 5]
stride = 2
dict_iters = 3

[[methods]]
kind = "cdl"
atoms = 3
patch = [5, 5]
dict_iters = 3
max_fit = 15
coding_iters = 60

[[methods]]
kind = "gfe"
gabor = { size = 7 }

[[methods]]
kind = "pca"
pca_dims = 4
"#;
