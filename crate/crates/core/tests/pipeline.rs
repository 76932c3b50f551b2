use convsparse::classifier::{accuracy, svm_fit, svm_predict, SvmParams};
use convsparse::clustering::{clustering_accuracy, kmeans, kmeans_shift_invariant, ShiftInvariantParams};
use convsparse::datasets::{load_idx, make_shifted, split_per_class, write_idx, LabeledDataset, Provenance, Selection};
use convsparse::features::{FeatureExtractor, FeatureKind, FeatureParams};
use convsparse::synth::{planted_motifs, random_unit_atom};
use convsparse::{seeded_rng, Tensor};

fn motif_dataset(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = seeded_rng(seed);
    let motifs: Vec<Tensor> = (0..3).map(|_| random_unit_atom(&[6, 6], &mut rng)).collect();
    let set = planted_motifs(&motifs, &[6, 6], n, (1.0, 2.0), false, &mut rng).unwrap();
    LabeledDataset::new(set.samples, set.labels, Provenance::default()).unwrap()
}

#[test]
fn shifted_frames_favour_shift_invariant_clustering() {
    let data = motif_dataset(60, 1);
    let shifted = make_shifted(&data, 14, 2).unwrap();
    let params = ShiftInvariantParams {
        atom_shape: vec![6, 6],
        max_iters: 30,
        ..Default::default()
    };
    let si = kmeans_shift_invariant(shifted.samples(), 3, &params, &mut seeded_rng(3)).unwrap();
    let km = kmeans(shifted.samples(), 3, 100, &mut seeded_rng(3)).unwrap();
    let acc_si = clustering_accuracy(&si.assignments, shifted.labels()).unwrap();
    let acc_km = clustering_accuracy(&km.assignments, shifted.labels()).unwrap();
    assert!(acc_si > 0.95, "{acc_si}");
    assert!(acc_si > acc_km, "{acc_si} vs {acc_km}");
}

#[test]
fn idx_round_trip_then_classify() {
    let data = make_shifted(&motif_dataset(90, 4), 10, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
    write_idx(&data, &img, &lab).unwrap();
    let back = load_idx(&img, &lab).unwrap();
    assert_eq!(back.labels(), data.labels());
    let (train, test) = split_per_class(&back, 20, 10, Selection::Random(6)).unwrap();
    for kind in [FeatureKind::Cdl, FeatureKind::Gfe] {
        let mut p = FeatureParams::new(kind);
        p.n_atoms = 4;
        p.patch_shape = vec![6, 6];
        p.dict_iters = 4;
        p.gabor.size = 5;
        let fx = FeatureExtractor::fit(&p, train.samples(), &mut seeded_rng(7)).unwrap();
        let ftr = fx.transform_batch(train.samples()).unwrap();
        let fte = fx.transform_batch(test.samples()).unwrap();
        let model = svm_fit(&ftr, train.labels(), &SvmParams::default()).unwrap();
        let acc = accuracy(&svm_predict(&model, &fte).unwrap(), test.labels());
        assert!(acc > 0.8, "{kind}: {acc}");
    }
}
