//! Experiment drivers. Each writes its result tables into an [`OutputDir`];
//! result rows never contain timings, so reruns are byte-identical.

use std::path::Path;
use std::time::Instant;

use convsparse::classifier::{accuracy, svm_fit, svm_predict};
use convsparse::clustering::{clustering_accuracy, kmeans, kmeans_shift_invariant, random_assignment, ShiftInvariantParams};
use convsparse::datasets::{
    load_csv_series, load_idx, make_shifted, split_per_class, subset_per_class, write_idx, CsvOptions, LabelColumn,
    LabeledDataset, Provenance, Selection,
};
use convsparse::distances::{euclidean_distance, shift_min_distance, xcorr_distance};
use convsparse::features::{gabor_bank, FeatureExtractor, FeatureKind, FeatureParams};
use convsparse::sparse_coding::patch_count;
use convsparse::{seeded_rng, synth, Dictionary, Tensor};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Config, DataFormat, ExperimentKind, LoadedConfig, MethodSpec, SelectionSpec, SweepSpec};
use crate::error::CliError;
use crate::output::{Manifest, OutputDir, PlotTable};

/// Runs the configured experiment and writes its outputs under `out`.
pub fn run(lc: &LoadedConfig, out: &Path) -> Result<Manifest, CliError> {
    let cfg = &lc.config;
    cfg.validate()?;
    let mut dir = OutputDir::create(out)?;
    let hash = cfg.hash();
    match cfg.experiment {
        ExperimentKind::ClusterShifted => run_cluster_shifted(lc, &hash, &mut dir)?,
        ExperimentKind::Classify => run_classify(lc, &hash, &mut dir)?,
        ExperimentKind::SweepPatch => run_sweep_patch(lc, &hash, &mut dir)?,
        ExperimentKind::Dist => run_dist(lc, &hash, &mut dir)?,
        ExperimentKind::GenShifted => run_gen_shifted(lc, &hash, &mut dir)?,
        ExperimentKind::ExportAtoms => run_export_atoms(lc, &hash, &mut dir)?,
    }
    dir.finish(cfg.experiment.name(), &hash, cfg.seed)
}

fn required<'a>(p: &'a Option<std::path::PathBuf>, what: &str) -> Result<&'a Path, CliError> {
    p.as_deref()
        .ok_or_else(|| CliError::Config(format!("data.{what} is required for this format")))
}

fn csv_options(cfg: &Config) -> Result<CsvOptions, CliError> {
    let d = &cfg.data;
    let delimiter = match d.delimiter.as_str() {
        "tab" => b'\t',
        "comma" => b',',
        s if s.len() == 1 => s.as_bytes()[0],
        s => return Err(CliError::Config(format!("delimiter must be one character, got {s:?}"))),
    };
    let label_column = match d.label_column.as_str() {
        "first" => LabelColumn::First,
        "last" => LabelColumn::Last,
        s => return Err(CliError::Config(format!("label_column must be first or last, got {s:?}"))),
    };
    Ok(CsvOptions {
        delimiter,
        label_column,
        length: None,
        shape: d.shape.clone(),
    })
}

/// The Fig.-2-style trio: a centred 9, an 8 at the same position, a shifted 9.
pub fn glyph_set() -> Result<LabeledDataset, CliError> {
    let samples = vec![
        synth::glyph('9', 28, [0, 0])?,
        synth::glyph('8', 28, [0, 0])?,
        synth::glyph('9', 28, [0, 7])?,
    ];
    let prov = Provenance {
        name: "glyphs".into(),
        source: Some("built-in stroke glyphs".into()),
        ..Default::default()
    };
    Ok(LabeledDataset::new(samples, vec![9, 8, 9], prov)?)
}

/// Training data and, for formats that ship one, the separate test set.
pub fn load_data(lc: &LoadedConfig) -> Result<(LabeledDataset, Option<LabeledDataset>), CliError> {
    let d = &lc.config.data;
    match d.format {
        DataFormat::Idx => {
            let images = lc.data_path(required(&d.images, "images")?);
            let labels = lc.data_path(required(&d.labels, "labels")?);
            Ok((load_idx(&images, &labels)?, None))
        }
        DataFormat::Ucr => {
            let opts = csv_options(&lc.config)?;
            let train = load_csv_series(&lc.data_path(required(&d.train, "train")?), &opts)?;
            let test = load_csv_series(&lc.data_path(required(&d.test, "test")?), &opts)?;
            if train.n_classes() != test.n_classes() || train.sample_shape() != test.sample_shape() {
                return Err(CliError::Data("train and test files disagree on classes or length".into()));
            }
            Ok((train, Some(test)))
        }
        DataFormat::Glyphs => Ok((glyph_set()?, None)),
    }
}

fn selection(cfg: &Config) -> Selection {
    match cfg.scale.selection {
        SelectionSpec::First => Selection::First,
        SelectionSpec::Random => Selection::Random(cfg.seed),
    }
}

fn sample_shape(data: &LabeledDataset) -> Result<Vec<usize>, CliError> {
    data.sample_shape()
        .map(<[usize]>::to_vec)
        .ok_or_else(|| CliError::Data("empty dataset".into()))
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterRow {
    pub method: String,
    pub frame: usize,
    pub mean_shift: f64,
    pub accuracy: f64,
    pub iterations: usize,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, Serialize)]
struct TimingRow {
    method: String,
    x: String,
    seconds: f64,
}

fn run_cluster_shifted(lc: &LoadedConfig, hash: &str, dir: &mut OutputDir) -> Result<(), CliError> {
    let cfg = &lc.config;
    let cl = &cfg.cluster;
    let (data, _) = load_data(lc)?;
    let sub = subset_per_class(&data, cfg.scale.per_class, selection(cfg))?;
    let base = sample_shape(&sub)?;
    let seeds = if cl.seeds.is_empty() { vec![cfg.seed] } else { cl.seeds.clone() };
    let methods: Vec<String> = ["KM", "KM_si", "RAND"].map(String::from).to_vec();
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    let mut plot = PlotTable::new("mean_shift", &methods);
    for &frame in &cl.frames {
        if frame < base[0] || base.len() != 2 {
            return Err(CliError::Config(format!("frame {frame} cannot hold samples of shape {base:?}")));
        }
        let mean_shift = (frame - base[0]) as f64 / 2.0;
        for &seed in &seeds {
            let shifted = make_shifted(&sub, frame, seed)?;
            let labels = shifted.labels();
            let t = Instant::now();
            let km = kmeans(shifted.samples(), cl.k, cl.km_iters, &mut seeded_rng(seed))?;
            let t_km = t.elapsed().as_secs_f64();
            let params = ShiftInvariantParams {
                atom_shape: cl.atom.clone(),
                max_iters: cl.si_iters,
                variant: cl.variant.into(),
            };
            let t = Instant::now();
            let si = kmeans_shift_invariant(shifted.samples(), cl.k, &params, &mut seeded_rng(seed))?;
            let t_si = t.elapsed().as_secs_f64();
            let rand = random_assignment(shifted.len(), cl.k, &mut seeded_rng(seed));
            let results = [
                ("KM", clustering_accuracy(&km.assignments, labels)?, km.iterations_run, t_km),
                ("KM_si", clustering_accuracy(&si.assignments, labels)?, si.iterations_run, t_si),
                ("RAND", clustering_accuracy(&rand, labels)?, 0, 0.0),
            ];
            for (method, acc, iterations, secs) in results {
                plot.push(mean_shift, method, acc);
                rows.push(ClusterRow {
                    method: method.into(),
                    frame,
                    mean_shift,
                    accuracy: acc,
                    iterations,
                    seed,
                    config_hash: hash.into(),
                });
                timings.push(TimingRow {
                    method: method.into(),
                    x: format!("frame={frame},seed={seed}"),
                    seconds: secs,
                });
            }
        }
    }
    dir.write_rows("results.csv", "results", &rows)?;
    dir.write_plot("plotdata/accuracy_vs_shift.csv", &plot)?;
    if seeds.len() > 1 {
        dir.note("plotdata values are means over seeds");
    }
    dir.write_rows("timings.csv", "timings", &timings)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyRow {
    pub method: String,
    pub train_size: usize,
    pub patch_size: Option<usize>,
    pub accuracy: f64,
    pub feature_dim: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// Outcome of one extractor + SVM evaluation.
pub struct Evaluation {
    pub accuracy: f64,
    pub feature_dim: usize,
    pub fit_seconds: f64,
    pub transform_seconds: f64,
    pub svm_seconds: f64,
}

/// Fits the extractor on `train`, trains the SVM on its features and scores `test`.
pub fn evaluate(
    params: &FeatureParams,
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &Config,
) -> Result<Evaluation, CliError> {
    let t = Instant::now();
    let fx = FeatureExtractor::fit(params, train.samples(), &mut seeded_rng(cfg.seed))?;
    let fit_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let f_train = fx.transform_batch(train.samples())?;
    let f_test = fx.transform_batch(test.samples())?;
    let transform_seconds = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let model = svm_fit(&f_train, train.labels(), &cfg.svm.params(cfg.seed))?;
    let predicted = svm_predict(&model, &f_test)?;
    Ok(Evaluation {
        accuracy: accuracy(&predicted, test.labels()),
        feature_dim: fx.output_dim(),
        fit_seconds,
        transform_seconds,
        svm_seconds: t.elapsed().as_secs_f64(),
    })
}

/// Training subsets (one per configured size, 0 = all) and the test set.
pub fn classification_splits(
    lc: &LoadedConfig,
    sizes: &[usize],
) -> Result<(Vec<(usize, LabeledDataset)>, LabeledDataset), CliError> {
    let cfg = &lc.config;
    let (data, test_file) = load_data(lc)?;
    let classes = data.n_classes();
    let per_class = |n: usize| -> Result<usize, CliError> {
        if n < classes {
            return Err(CliError::Config(format!("size {n} is smaller than the class count {classes}")));
        }
        Ok(n / classes)
    };
    let (pool, test) = match test_file {
        Some(test) => {
            let test = if cfg.scale.test_size > 0 {
                subset_per_class(&test, per_class(cfg.scale.test_size)?, selection(cfg))?
            } else {
                test
            };
            (data, test)
        }
        None => {
            if cfg.scale.test_size == 0 {
                return Err(CliError::Config("scale.test_size is required when data has no test file".into()));
            }
            let test_pc = per_class(cfg.scale.test_size)?;
            let smallest = (0..classes)
                .map(|c| data.labels().iter().filter(|&&l| l == c).count())
                .min()
                .unwrap_or(0);
            if smallest < test_pc {
                return Err(CliError::Data(format!("a class has only {smallest} samples")));
            }
            let mut max_pc = smallest - test_pc;
            if !sizes.contains(&0) {
                max_pc = max_pc.min(sizes.iter().map(|&n| n / classes).max().unwrap_or(0));
            }
            split_per_class(&data, max_pc, test_pc, selection(cfg))?
        }
    };
    let mut trains = Vec::new();
    for &n in sizes {
        let train = if n == 0 { pool.clone() } else { subset_per_class(&pool, per_class(n)?, Selection::First)? };
        trains.push((n, train));
    }
    Ok((trains, test))
}

fn run_classify(lc: &LoadedConfig, hash: &str, dir: &mut OutputDir) -> Result<(), CliError> {
    let cfg = &lc.config;
    let (trains, test) = classification_splits(lc, &cfg.scale.train_sizes)?;
    let labels: Vec<String> = cfg.methods.iter().map(MethodSpec::label).collect();
    let mut plot = PlotTable::new("train_size", &labels);
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for (_, train) in &trains {
        for m in &cfg.methods {
            let ev = evaluate(&m.params()?, train, &test, cfg)?;
            plot.push(train.len(), &m.label(), ev.accuracy);
            rows.push(ClassifyRow {
                method: m.label(),
                train_size: train.len(),
                patch_size: None,
                accuracy: ev.accuracy,
                feature_dim: ev.feature_dim,
                seed: cfg.seed,
                config_hash: hash.into(),
            });
            push_timings(&mut timings, &m.label(), &format!("train_size={}", train.len()), &ev);
        }
    }
    dir.write_rows("results.csv", "results", &rows)?;
    dir.write_plot("plotdata/accuracy_vs_train_size.csv", &plot)?;
    dir.write_rows("timings.csv", "timings", &timings)?;
    Ok(())
}

fn push_timings(timings: &mut Vec<TimingRow>, method: &str, x: &str, ev: &Evaluation) {
    for (stage, s) in [("fit", ev.fit_seconds), ("transform", ev.transform_seconds), ("svm", ev.svm_seconds)] {
        timings.push(TimingRow {
            method: format!("{method}/{stage}"),
            x: x.into(),
            seconds: s,
        });
    }
}

/// Extractor settings for one patch / kernel extent of a sweep.
pub fn sweep_params(m: &MethodSpec, patch: usize, shape: &[usize], sweep: &SweepSpec) -> Result<FeatureParams, CliError> {
    let mut p = m.params()?;
    if shape.iter().any(|&e| patch > e) {
        return Err(CliError::Config(format!("patch size {patch} exceeds the signal shape {shape:?}")));
    }
    p.patch_shape = vec![patch; shape.len()];
    if m.stride.is_none() {
        p.stride = ((patch as f64 * sweep.stride_fraction).round() as usize).max(1);
    }
    if let (Some(dim), FeatureKind::Pdl, None) = (sweep.match_dim, p.kind, m.atoms) {
        let positions = patch_count(shape, &p.patch_shape, p.stride)?;
        p.n_atoms = ((dim as f64 / positions as f64).round() as usize).max(1);
    }
    Ok(p)
}

fn run_sweep_patch(lc: &LoadedConfig, hash: &str, dir: &mut OutputDir) -> Result<(), CliError> {
    let cfg = &lc.config;
    let size = *cfg.scale.train_sizes.first().unwrap_or(&0);
    let (mut trains, test) = classification_splits(lc, &[size])?;
    let (_, train) = trains.pop().expect("one split");
    let shape = sample_shape(&train)?;
    let labels: Vec<String> = cfg.methods.iter().map(MethodSpec::label).collect();
    let mut plot = PlotTable::new("patch_size", &labels);
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    // Validate the whole grid before any long computation.
    for &p in &cfg.sweep.patches {
        for m in &cfg.methods {
            sweep_params(m, p, &shape, &cfg.sweep)?;
        }
    }
    let mut cached: Vec<Option<Evaluation>> = cfg.methods.iter().map(|_| None).collect();
    for &p in &cfg.sweep.patches {
        for (mi, m) in cfg.methods.iter().enumerate() {
            let kind = m.feature_kind()?;
            let patch_free = matches!(kind, FeatureKind::Dl | FeatureKind::Pca);
            let fresh;
            let ev = if patch_free {
                if cached[mi].is_none() {
                    let e = evaluate(&m.params()?, &train, &test, cfg)?;
                    push_timings(&mut timings, &m.label(), "any", &e);
                    cached[mi] = Some(e);
                }
                cached[mi].as_ref().expect("cached")
            } else {
                fresh = evaluate(&sweep_params(m, p, &shape, &cfg.sweep)?, &train, &test, cfg)?;
                push_timings(&mut timings, &m.label(), &format!("patch={p}"), &fresh);
                &fresh
            };
            plot.push(p, &m.label(), ev.accuracy);
            rows.push(ClassifyRow {
                method: m.label(),
                train_size: train.len(),
                patch_size: Some(p),
                accuracy: ev.accuracy,
                feature_dim: ev.feature_dim,
                seed: cfg.seed,
                config_hash: hash.into(),
            });
        }
    }
    dir.write_rows("results.csv", "results", &rows)?;
    dir.write_plot("plotdata/accuracy_vs_patch_size.csv", &plot)?;
    dir.write_rows("timings.csv", "timings", &timings)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct PairRow {
    pub i: usize,
    pub j: usize,
    pub label_i: usize,
    pub label_j: usize,
    pub euclidean: f64,
    pub shift_min: f64,
    pub shift_row: isize,
    pub shift_col: isize,
    /// Empty when the correlation peak is not positive.
    pub xcorr: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DistRow {
    pub distance: String,
    pub nn_accuracy: f64,
    pub samples: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// All pairwise distances between `samples` (upper triangle, row-major).
pub fn pairwise(
    samples: &[Tensor],
    labels: &[usize],
    max_shift: Option<usize>,
    normalized: bool,
) -> Result<Vec<PairRow>, CliError> {
    let n = samples.len();
    let per_i: Vec<Result<Vec<PairRow>, CliError>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .map(|j| {
                    let (a, b) = (&samples[i], &samples[j]);
                    let sm = shift_min_distance(a, b, max_shift.map(|s| [s, s]))?;
                    let xcorr = match xcorr_distance(a, b, normalized) {
                        Ok(v) => Some(v),
                        Err(convsparse::Error::UndefinedDistance { .. }) => None,
                        Err(e) => return Err(e.into()),
                    };
                    Ok(PairRow {
                        i,
                        j,
                        label_i: labels[i],
                        label_j: labels[j],
                        euclidean: euclidean_distance(a, b)?,
                        shift_min: sm.distance,
                        shift_row: sm.shift[0],
                        shift_col: sm.shift[1],
                        xcorr,
                    })
                })
                .collect()
        })
        .collect();
    let mut rows = Vec::new();
    for r in per_i {
        rows.extend(r?);
    }
    Ok(rows)
}

/// Leave-one-out nearest-neighbour accuracy for one distance column
/// (ties: lowest index; undefined distances never win).
pub fn nn_accuracy(n: usize, labels: &[usize], pairs: &[PairRow], dist: impl Fn(&PairRow) -> Option<f64>) -> f64 {
    let mut best: Vec<(f64, usize)> = vec![(f64::INFINITY, usize::MAX); n];
    for p in pairs {
        let Some(d) = dist(p) else { continue };
        for (me, other) in [(p.i, p.j), (p.j, p.i)] {
            if d < best[me].0 || (d == best[me].0 && other < best[me].1) {
                best[me] = (d, other);
            }
        }
    }
    let hits = (0..n)
        .filter(|&i| best[i].1 != usize::MAX && labels[best[i].1] == labels[i])
        .count();
    hits as f64 / n.max(1) as f64
}

fn run_dist(lc: &LoadedConfig, hash: &str, dir: &mut OutputDir) -> Result<(), CliError> {
    let cfg = &lc.config;
    let (data, _) = load_data(lc)?;
    let mut set = if cfg.data.format == DataFormat::Glyphs {
        data
    } else {
        subset_per_class(&data, cfg.scale.per_class, selection(cfg))?
    };
    if let Some(frame) = cfg.dist.frame {
        set = make_shifted(&set, frame, cfg.seed)?;
    }
    let pairs = pairwise(set.samples(), set.labels(), cfg.dist.max_shift, cfg.dist.normalized_xcorr)?;
    let n = set.len();
    let labels = set.labels();
    let rows = vec![
        ("euclidean", nn_accuracy(n, labels, &pairs, |p| Some(p.euclidean))),
        ("shift_min", nn_accuracy(n, labels, &pairs, |p| Some(p.shift_min))),
        ("xcorr", nn_accuracy(n, labels, &pairs, |p| p.xcorr)),
    ]
    .into_iter()
    .map(|(d, acc)| DistRow {
        distance: d.into(),
        nn_accuracy: acc,
        samples: n,
        seed: cfg.seed,
        config_hash: hash.into(),
    })
    .collect::<Vec<_>>();
    dir.write_rows("results.csv", "results", &rows)?;
    dir.write_rows("pairs.csv", "pairs", &pairs)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct GenRow {
    pub frame: usize,
    pub mean_shift: f64,
    pub samples: usize,
    pub file: String,
    pub seed: u64,
    pub config_hash: String,
}

fn run_gen_shifted(lc: &LoadedConfig, hash: &str, dir: &mut OutputDir) -> Result<(), CliError> {
    let cfg = &lc.config;
    let (data, _) = load_data(lc)?;
    let sub = subset_per_class(&data, cfg.scale.per_class, selection(cfg))?;
    let base = sample_shape(&sub)?;
    let mut rows = Vec::new();
    for &frame in &cfg.cluster.frames {
        if frame < base[0] || base.len() != 2 {
            return Err(CliError::Config(format!("frame {frame} cannot hold samples of shape {base:?}")));
        }
        let shifted = make_shifted(&sub, frame, cfg.seed)?;
        let name = format!("shifted_{frame}.bin");
        shifted.save(&dir.path(&name)?)?;
        dir.register(&name, "dataset", Some(shifted.len()));
        let (img, lab) = (format!("shifted_{frame}-images-idx3-ubyte"), format!("shifted_{frame}-labels-idx1-ubyte"));
        write_idx(&shifted, &dir.path(&img)?, &dir.path(&lab)?)?;
        dir.register(&img, "idx-images", Some(shifted.len()));
        dir.register(&lab, "idx-labels", Some(shifted.len()));
        rows.push(GenRow {
            frame,
            mean_shift: (frame - base[0]) as f64 / 2.0,
            samples: shifted.len(),
            file: name,
            seed: cfg.seed,
            config_hash: hash.into(),
        });
    }
    dir.write_rows("results.csv", "results", &rows)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct AtomsRow {
    pub method: String,
    pub atoms: usize,
    pub atom_shape: String,
    pub file: String,
    pub image: String,
    pub seed: u64,
    pub config_hash: String,
}

fn run_export_atoms(lc: &LoadedConfig, hash: &str, dir: &mut OutputDir) -> Result<(), CliError> {
    let cfg = &lc.config;
    let (data, _) = load_data(lc)?;
    let train = subset_per_class(&data, cfg.scale.per_class, selection(cfg))?;
    let mut rows = Vec::new();
    for m in &cfg.methods {
        let params = m.params()?;
        let dict = match params.kind {
            FeatureKind::Gfe => Dictionary::new(gabor_bank(&params.gabor)?)?,
            _ => {
                let fx = FeatureExtractor::fit(&params, train.samples(), &mut seeded_rng(cfg.seed))?;
                match fx.dictionary() {
                    Some(d) => d.clone(),
                    None => {
                        let (axes, _) = fx.principal_axes().expect("PCA extractor");
                        let shape = fx.sample_shape().to_vec();
                        let atoms = axes
                            .iter()
                            .map(|a| Tensor::new(&shape, a.clone()))
                            .collect::<Result<Vec<_>, _>>()?;
                        Dictionary::new(atoms)?
                    }
                }
            }
        };
        let label = m.label();
        let (file, image) = (format!("atoms/{label}.bin"), format!("atoms/{label}.pgm"));
        dict.save(&dir.path(&file)?)?;
        dir.register(&file, "dictionary", Some(dict.len()));
        let cols = (dict.len() as f64).sqrt().ceil() as usize;
        dict.write_pgm(&dir.path(&image)?, cols.max(1))?;
        dir.register(&image, "image", None);
        rows.push(AtomsRow {
            method: label,
            atoms: dict.len(),
            atom_shape: dict.atom_shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x"),
            file,
            image,
            seed: cfg.seed,
            config_hash: hash.into(),
        });
    }
    dir.write_rows("results.csv", "results", &rows)?;
    Ok(())
}
