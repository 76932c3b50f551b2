//! Labeled datasets: IDX and CSV/TSV ingestion, shifted-frame generation,
//! per-class subsetting and a binary cache format.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{read_tensors, write_tensors, Offset, Tensor};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CACHE_MAGIC: &[u8; 4] = b"CSKD";

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Provenance {
    pub name: String,
    pub source: Option<String>,
    /// Seed of the generator, for synthetic datasets.
    pub seed: Option<u64>,
    /// Placement offsets, for shifted datasets.
    pub offsets: Option<Vec<Offset>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    samples: Vec<Tensor>,
    labels: Vec<usize>,
    provenance: Provenance,
}

impl LabeledDataset {
    pub fn new(samples: Vec<Tensor>, labels: Vec<usize>, provenance: Provenance) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::Data(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        if let Some(first) = samples.first() {
            if let Some(i) = samples.iter().position(|s| s.shape() != first.shape()) {
                return Err(Error::Data(format!(
                    "sample {i} has shape {:?}, expected {:?}",
                    samples[i].shape(),
                    first.shape()
                )));
            }
        }
        if let Some(o) = &provenance.offsets {
            if o.len() != samples.len() {
                return Err(Error::Data("offset count differs from sample count".into()));
            }
        }
        Ok(Self {
            samples,
            labels,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Tensor] {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn name(&self) -> &str {
        &self.provenance.name
    }

    /// `max label + 1` (0 when empty).
    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn sample_shape(&self) -> Option<&[usize]> {
        self.samples.first().map(Tensor::shape)
    }

    pub fn into_parts(self) -> (Vec<Tensor>, Vec<usize>, Provenance) {
        (self.samples, self.labels, self.provenance)
    }

    /// Dataset made of the samples at `indices`, in that order.
    pub fn select(&self, indices: &[usize], name: &str) -> Result<Self> {
        let offsets = self
            .provenance
            .offsets
            .as_ref()
            .map(|o| indices.iter().map(|&i| o[i]).collect());
        Self::new(
            indices.iter().map(|&i| self.samples[i].clone()).collect(),
            indices.iter().map(|&i| self.labels[i]).collect(),
            Provenance {
                name: name.to_string(),
                offsets,
                ..self.provenance.clone()
            },
        )
    }

    /// Binary cache: magic `CSKD`, name/source/seed header, then a tensor
    /// stream of (sample shape, labels, samples as rows[, offsets]).
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CACHE_MAGIC)?;
        write_str(&mut w, &self.provenance.name)?;
        match &self.provenance.source {
            Some(s) => {
                w.write_u8(1)?;
                write_str(&mut w, s)?;
            }
            None => w.write_u8(0)?,
        }
        match self.provenance.seed {
            Some(s) => {
                w.write_u8(1)?;
                w.write_u64::<LittleEndian>(s)?;
            }
            None => w.write_u8(0)?,
        }
        w.write_u64::<LittleEndian>(self.len() as u64)?;
        if self.is_empty() {
            return Ok(());
        }
        let shape = self.samples[0].shape();
        let d = self.samples[0].len();
        let mut tensors = vec![
            Tensor::from_vec(shape.iter().map(|&v| v as f64).collect())?,
            Tensor::from_vec(self.labels.iter().map(|&v| v as f64).collect())?,
            Tensor::new(&[self.len(), d], self.samples.iter().flat_map(|s| s.data().iter().copied()).collect())?,
        ];
        if let Some(o) = &self.provenance.offsets {
            tensors.push(Tensor::new(
                &[o.len(), 2],
                o.iter().flat_map(|p| [p[0] as f64, p[1] as f64]).collect(),
            )?);
        }
        write_tensors(w, &tensors)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CACHE_MAGIC {
            return Err(Error::BadMagic {
                what: "dataset cache".into(),
                expected: u32::from_be_bytes(*CACHE_MAGIC),
                actual: u32::from_be_bytes(magic),
            });
        }
        let name = read_str(&mut r)?;
        let source = if r.read_u8()? == 1 { Some(read_str(&mut r)?) } else { None };
        let seed = if r.read_u8()? == 1 {
            Some(r.read_u64::<LittleEndian>()?)
        } else {
            None
        };
        let n = r.read_u64::<LittleEndian>()? as usize;
        let mut provenance = Provenance {
            name,
            source,
            seed,
            offsets: None,
        };
        if n == 0 {
            return Self::new(Vec::new(), Vec::new(), provenance);
        }
        let tensors = read_tensors(r)?;
        if tensors.len() < 3 {
            return Err(Error::Data("dataset cache is missing tensors".into()));
        }
        let shape: Vec<usize> = tensors[0].data().iter().map(|&v| v as usize).collect();
        let labels: Vec<usize> = tensors[1].data().iter().map(|&v| v as usize).collect();
        let d: usize = shape.iter().product();
        if tensors[2].shape() != [n, d] {
            return Err(Error::Data("dataset cache payload has the wrong shape".into()));
        }
        let samples = tensors[2]
            .data()
            .chunks(d)
            .map(|c| Tensor::new(&shape, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        if let Some(o) = tensors.get(3) {
            provenance.offsets = Some(o.data().chunks(2).map(|p| [p[0] as usize, p[1] as usize]).collect());
        }
        Self::new(samples, labels, provenance)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| Error::Data(format!("bad string in cache: {e}")))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))
}

fn idx_header(bytes: &[u8], what: &str, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let truncated = |expected: usize| Error::Truncated {
        what: format!("{what} header"),
        expected,
        actual: bytes.len(),
    };
    let mut r = bytes;
    let actual = r.read_u32::<BigEndian>().map_err(|_| truncated(4))?;
    if actual != magic {
        return Err(Error::BadMagic {
            what: what.into(),
            expected: magic,
            actual,
        });
    }
    let need = 4 + 4 * dims;
    if bytes.len() < need {
        return Err(truncated(need));
    }
    (0..dims).map(|_| Ok(r.read_u32::<BigEndian>()? as usize)).collect()
}

/// Parses IDX image bytes into `[rows, cols]` tensors scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Tensor>> {
    let dims = idx_header(bytes, "IDX images", IDX_IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let d = rows * cols;
    let payload = &bytes[16..];
    if payload.len() != n * d {
        return Err(Error::Truncated {
            what: "IDX image payload".into(),
            expected: n * d,
            actual: payload.len(),
        });
    }
    payload
        .chunks(d.max(1))
        .take(n)
        .map(|c| Tensor::new(&[rows, cols], c.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect()
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let dims = idx_header(bytes, "IDX labels", IDX_LABELS_MAGIC, 1)?;
    let payload = &bytes[8..];
    if payload.len() != dims[0] {
        return Err(Error::Truncated {
            what: "IDX label payload".into(),
            expected: dims[0],
            actual: payload.len(),
        });
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}

/// Loads an IDX image/label file pair.
pub fn load_idx(images: &Path, labels: &Path) -> Result<LabeledDataset> {
    let samples = parse_idx_images(&read_file(images)?)?;
    let labels_v = parse_idx_labels(&read_file(labels)?)?;
    if samples.len() != labels_v.len() {
        return Err(Error::Data(format!(
            "{} images but {} labels",
            samples.len(),
            labels_v.len()
        )));
    }
    let name = images
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    LabeledDataset::new(
        samples,
        labels_v,
        Provenance {
            name,
            source: Some(images.display().to_string()),
            ..Default::default()
        },
    )
}

/// Writes 2D samples with values in `[0, 1]` as an IDX pair (pixels rounded to bytes).
pub fn write_idx(data: &LabeledDataset, images: &Path, labels: &Path) -> Result<()> {
    let (rows, cols) = data
        .samples()
        .first()
        .map_or((0, 0), |s| s.dims2());
    let mut img = Vec::with_capacity(16 + data.len() * rows * cols);
    img.write_u32::<BigEndian>(IDX_IMAGES_MAGIC)?;
    for v in [data.len(), rows, cols] {
        img.write_u32::<BigEndian>(v as u32)?;
    }
    for s in data.samples() {
        img.extend(s.data().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    let mut lab = Vec::with_capacity(8 + data.len());
    lab.write_u32::<BigEndian>(IDX_LABELS_MAGIC)?;
    lab.write_u32::<BigEndian>(data.len() as u32)?;
    for &l in data.labels() {
        if l > 255 {
            return Err(Error::Data(format!("label {l} does not fit in a byte")));
        }
        lab.push(l as u8);
    }
    std::fs::write(images, img)?;
    std::fs::write(labels, lab)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelColumn {
    #[default]
    First,
    Last,
}

/// Options for [`load_csv_series`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub label_column: LabelColumn,
    /// Expected number of values per row (excluding the label); inferred from
    /// the first row when `None`.
    pub length: Option<usize>,
    /// Reshape each row, e.g. `[16, 16]` for USPS; 1D when `None`.
    pub shape: Option<Vec<usize>>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: b',',
            label_column: LabelColumn::First,
            length: None,
            shape: None,
        }
    }
}

/// Reads one sample per row plus an integer label. Labels are remapped to
/// `0..classes` in increasing order of their original values.
pub fn load_csv_series(path: &Path, opts: &CsvOptions) -> Result<LabeledDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut ds = parse_csv_series(&text, opts)?;
    ds.provenance.name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    ds.provenance.source = Some(path.display().to_string());
    Ok(ds)
}

/// [`load_csv_series`] on in-memory text.
pub fn parse_csv_series(text: &str, opts: &CsvOptions) -> Result<LabeledDataset> {
    let delim = opts.delimiter as char;
    let mut values: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<i64> = Vec::new();
    let mut expected = opts.length.map(|l| l + 1);
    for (i, line) in text.lines().enumerate() {
        let row = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(delim).map(str::trim).collect();
        let exp = *expected.get_or_insert(cells.len());
        if cells.len() != exp {
            return Err(Error::RaggedRow {
                row,
                expected: exp.saturating_sub(1),
                actual: cells.len().saturating_sub(1),
            });
        }
        if exp < 2 {
            return Err(Error::Parse {
                row,
                column: 1,
                message: "row needs a label and at least one value".into(),
            });
        }
        let parsed: Vec<f64> = cells
            .iter()
            .enumerate()
            .map(|(c, s)| {
                s.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::Parse {
                    row,
                    column: c + 1,
                    message: format!("not a number: {s:?}"),
                })
            })
            .collect::<Result<_>>()?;
        let (label, rest) = match opts.label_column {
            LabelColumn::First => (parsed[0], parsed[1..].to_vec()),
            LabelColumn::Last => (parsed[exp - 1], parsed[..exp - 1].to_vec()),
        };
        if label.fract() != 0.0 {
            let column = if opts.label_column == LabelColumn::First { 1 } else { exp };
            return Err(Error::Parse {
                row,
                column,
                message: format!("label {label} is not an integer"),
            });
        }
        raw_labels.push(label as i64);
        values.push(rest);
    }
    let mut classes = raw_labels.clone();
    classes.sort_unstable();
    classes.dedup();
    let labels = raw_labels
        .iter()
        .map(|l| classes.binary_search(l).expect("present"))
        .collect();
    let samples = values
        .into_iter()
        .map(|v| {
            let shape = opts.shape.clone().unwrap_or_else(|| vec![v.len()]);
            Tensor::new(&shape, v)
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::Data(format!("row does not fit the requested shape: {e}")))?;
    LabeledDataset::new(samples, labels, Provenance::default())
}

/// Places every sample into a zero `frame x frame` image at an offset drawn
/// uniformly and independently per axis from `[0, frame - extent]`.
pub fn make_shifted(data: &LabeledDataset, frame: usize, seed: u64) -> Result<LabeledDataset> {
    let mut rng = crate::rng::seeded_rng(seed);
    make_shifted_with(data, frame, &mut rng, Some(seed))
}

pub fn make_shifted_with(
    data: &LabeledDataset,
    frame: usize,
    rng: &mut impl Rng,
    seed: Option<u64>,
) -> Result<LabeledDataset> {
    let Some(shape) = data.sample_shape() else {
        return LabeledDataset::new(Vec::new(), Vec::new(), data.provenance.clone());
    };
    if shape.len() != 2 {
        return Err(Error::InvalidArgument("shifted frames need 2D samples".into()));
    }
    let (h, w) = (shape[0], shape[1]);
    if frame < h || frame < w {
        return Err(Error::InvalidArgument(format!(
            "frame {frame} is smaller than the sample {shape:?}"
        )));
    }
    let mut samples = Vec::with_capacity(data.len());
    let mut offsets = Vec::with_capacity(data.len());
    for s in data.samples() {
        let o = [rng.random_range(0..=frame - h), rng.random_range(0..=frame - w)];
        samples.push(s.placed_in(&[frame, frame], o)?);
        offsets.push(o);
    }
    LabeledDataset::new(
        samples,
        data.labels.clone(),
        Provenance {
            name: format!("{}-frame{frame}", data.provenance.name),
            source: data.provenance.source.clone(),
            seed,
            offsets: Some(offsets),
        },
    )
}

/// How [`subset_per_class`] picks samples within a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Selection {
    /// First occurrences in file order.
    #[default]
    First,
    /// Seeded random choice (kept in file order).
    Random(u64),
}

fn class_indices(data: &LabeledDataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); data.n_classes()];
    for (i, &l) in data.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    by_class
}

fn pick(idx: &[usize], count: usize, selection: Selection, class: usize) -> Vec<usize> {
    match selection {
        Selection::First => idx[..count].to_vec(),
        Selection::Random(seed) => {
            let mut rng = crate::rng::seeded_rng(seed ^ (class as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut v = idx.to_vec();
            v.shuffle(&mut rng);
            v.truncate(count);
            v.sort_unstable();
            v
        }
    }
}

/// `per_class` samples of every class, in file order.
pub fn subset_per_class(data: &LabeledDataset, per_class: usize, selection: Selection) -> Result<LabeledDataset> {
    let (train, _) = split_per_class(data, per_class, 0, selection)?;
    Ok(train)
}

/// Disjoint per-class train/test subsets: the first `train_pc` (selected)
/// samples of each class go to train, the next `test_pc` to test.
pub fn split_per_class(
    data: &LabeledDataset,
    train_pc: usize,
    test_pc: usize,
    selection: Selection,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let by_class = class_indices(data);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (c, idx) in by_class.iter().enumerate() {
        if idx.len() < train_pc + test_pc {
            return Err(Error::Data(format!(
                "class {c} has {} samples, {} requested",
                idx.len(),
                train_pc + test_pc
            )));
        }
        let chosen = pick(idx, train_pc + test_pc, selection, c);
        train.extend_from_slice(&chosen[..train_pc]);
        test.extend_from_slice(&chosen[train_pc..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    let name = &data.provenance.name;
    Ok((
        data.select(&train, &format!("{name}-train{train_pc}"))?,
        data.select(&test, &format!("{name}-test{test_pc}"))?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn fixture() -> LabeledDataset {
        let a = Tensor::new(&[2, 3], vec![0.0, 1.0, 2.0 / 255.0, 0.5019607843137255, 1.0, 0.0]).unwrap();
        let b = Tensor::new(&[2, 3], vec![1.0, 0.0, 0.0, 0.0, 0.0, 254.0 / 255.0]).unwrap();
        LabeledDataset::new(vec![a, b], vec![7, 3], Provenance::default()).unwrap()
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        let ds = fixture();
        write_idx(&ds, &ip, &lp).unwrap();
        assert_eq!(std::fs::metadata(&ip).unwrap().len(), 16 + 12);
        let back = load_idx(&ip, &lp).unwrap();
        assert_eq!(back.samples(), ds.samples());
        assert_eq!(back.labels(), &[7, 3]);
        let raw = std::fs::read(&ip).unwrap();
        assert_eq!(&raw[..4], &[0, 0, 8, 3]);
        assert_eq!(raw[16 + 3], 128);
    }

    #[test]
    fn idx_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("img"), dir.path().join("lab"));
        write_idx(&fixture(), &ip, &lp).unwrap();
        // Swapped files: wrong magic names both values.
        let err = load_idx(&lp, &ip).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0x00000803") && msg.contains("0x00000801"), "{msg}");
        // Truncated payload.
        let mut raw = std::fs::read(&ip).unwrap();
        raw.pop();
        std::fs::write(&ip, &raw).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Truncated { .. })));
        // Count mismatch.
        write_idx(&fixture(), &ip, &lp).unwrap();
        let one = fixture().select(&[0], "one").unwrap();
        let lp2 = dir.path().join("lab2");
        write_idx(&one, &dir.path().join("img2"), &lp2).unwrap();
        assert!(load_idx(&ip, &lp2).is_err());
        assert!(load_idx(&dir.path().join("missing"), &lp).unwrap_err().is_data_error());
    }

    #[test]
    fn csv_fixture_round_trip() {
        let text = "3,0.5,1.5,2\n1,-1,0,1e-3\n3,4,5,6\n";
        let ds = parse_csv_series(text, &CsvOptions::default()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.labels(), &[1, 0, 1]);
        assert_eq!(ds.samples()[1].data(), &[-1.0, 0.0, 1e-3]);
        assert_eq!(ds.sample_shape(), Some(&[3][..]));
        let tsv = "0.5\t1.5\t2\t3\n";
        let opts = CsvOptions {
            delimiter: b'\t',
            label_column: LabelColumn::Last,
            ..Default::default()
        };
        let ds = parse_csv_series(tsv, &opts).unwrap();
        assert_eq!(ds.samples()[0].data(), &[0.5, 1.5, 2.0]);
        let opts2d = CsvOptions {
            shape: Some(vec![2, 2]),
            ..Default::default()
        };
        let ds = parse_csv_series("1,1,2,3,4\n", &opts2d).unwrap();
        assert_eq!(ds.samples()[0].shape(), &[2, 2]);
    }

    #[test]
    fn csv_errors_name_the_row() {
        let opts = CsvOptions {
            length: Some(3),
            ..Default::default()
        };
        let err = parse_csv_series("1,1,2,3\n2,1,2\n", &opts).unwrap_err();
        assert!(matches!(err, Error::RaggedRow { row: 2, expected: 3, actual: 2 }), "{err}");
        let err = parse_csv_series("1,1,x,3\n", &opts).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, column: 3, .. }));
        assert!(parse_csv_series("1.5,1,2,3\n", &opts).is_err());
    }

    fn digits(n: usize, rng: &mut impl Rng) -> LabeledDataset {
        let samples = (0..n)
            .map(|_| Tensor::new(&[28, 28], (0..784).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap())
            .collect();
        let labels = (0..n).map(|i| i % 10).collect();
        LabeledDataset::new(samples, labels, Provenance { name: "digits".into(), ..Default::default() }).unwrap()
    }

    #[test]
    fn shifted_offsets_have_the_stated_mean() {
        let mut rng = seeded_rng(1);
        let base = digits(10, &mut rng);
        // 10000 placements: 1000 passes over 10 digits with one generator.
        let mut sum = 0usize;
        let mut rows = [0usize; 5];
        let mut cols = [0usize; 5];
        let mut gen = seeded_rng(2);
        for _ in 0..1000 {
            let s = make_shifted_with(&base, 32, &mut gen, None).unwrap();
            for o in s.provenance().offsets.as_ref().unwrap() {
                assert!(o[0] <= 4 && o[1] <= 4);
                sum += o[0] + o[1];
                rows[o[0]] += 1;
                cols[o[1]] += 1;
            }
        }
        let mean = sum as f64 / 20000.0;
        assert!((mean - 2.0).abs() < 0.1, "{mean}");
        // Chi-square, 4 degrees of freedom, 1% critical value 13.277.
        for counts in [rows, cols] {
            let chi: f64 = counts.iter().map(|&c| (c as f64 - 2000.0).powi(2) / 2000.0).sum();
            assert!(chi < 13.277, "{chi}");
        }
    }

    #[test]
    fn shifted_frames_preserve_mass_and_are_deterministic() {
        let mut rng = seeded_rng(3);
        let base = digits(20, &mut rng);
        let a = make_shifted(&base, 44, 9).unwrap();
        let b = make_shifted(&base, 44, 9).unwrap();
        assert_eq!(a, b);
        for (s, f) in base.samples().iter().zip(a.samples()) {
            assert_eq!(f.shape(), &[44, 44]);
            assert_eq!(s.sum(), f.sum());
        }
        for (i, f) in a.samples().iter().enumerate() {
            let o = a.provenance().offsets.as_ref().unwrap()[i];
            assert_eq!(&f.window(o, &[28, 28]).unwrap(), &base.samples()[i]);
        }
        let same = make_shifted(&base, 28, 1).unwrap();
        assert_eq!(same.samples(), base.samples());
        assert!(make_shifted(&base, 27, 1).is_err());
        assert_eq!(a.labels(), base.labels());
    }

    #[test]
    fn subsets() {
        let labels = vec![2, 0, 1, 0, 2, 1, 1];
        let samples: Vec<Tensor> = (0..7).map(|i| Tensor::from_vec(vec![i as f64]).unwrap()).collect();
        let ds = LabeledDataset::new(samples, labels, Provenance::default()).unwrap();
        let one = subset_per_class(&ds, 1, Selection::First).unwrap();
        let firsts: Vec<f64> = one.samples().iter().map(|s| s.data()[0]).collect();
        assert_eq!(firsts, vec![0.0, 1.0, 2.0]);
        assert!(subset_per_class(&ds, 0, Selection::First).unwrap().is_empty());
        assert!(subset_per_class(&ds, 3, Selection::First).is_err());
        let (tr, te) = split_per_class(&ds, 1, 1, Selection::First).unwrap();
        assert_eq!(tr.len(), 3);
        assert_eq!(te.len(), 3);
        let r1 = subset_per_class(&ds, 2, Selection::Random(5)).unwrap();
        let r2 = subset_per_class(&ds, 2, Selection::Random(5)).unwrap();
        assert_eq!(r1, r2);
    }

    #[test]
    fn cache_round_trip_is_exact() {
        let mut rng = seeded_rng(4);
        let base = digits(5, &mut rng);
        let shifted = make_shifted(&base, 30, 77).unwrap();
        for ds in [base, shifted] {
            let mut buf = Vec::new();
            ds.write_to(&mut buf).unwrap();
            let back = LabeledDataset::read_from(buf.as_slice()).unwrap();
            assert_eq!(back, ds);
        }
        assert!(LabeledDataset::read_from(&b"NOPE"[..]).is_err());
    }

    proptest! {
        #[test]
        fn cache_round_trip_prop(vals in proptest::collection::vec(-1e6f64..1e6, 1..60), n in 1usize..5) {
            let d = vals.len();
            let samples: Vec<Tensor> = (0..n).map(|i| Tensor::from_vec(vals.iter().map(|v| v * i as f64).collect()).unwrap()).collect();
            let ds = LabeledDataset::new(samples, (0..n).collect(), Provenance { name: format!("p{d}"), seed: Some(d as u64), ..Default::default() }).unwrap();
            let mut buf = Vec::new();
            ds.write_to(&mut buf).unwrap();
            prop_assert_eq!(LabeledDataset::read_from(buf.as_slice()).unwrap(), ds);
        }
    }
}
