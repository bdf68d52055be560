use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;
use num_complex::Complex64;
use rayon::prelude::*;

use super::{extract_features, input_dim, FeatureVector};
use crate::channel::{draw_with_noise_variance, snr_to_noise_variance, ChannelInstance, Constellation};
use crate::numerics::{qrd, substream_rng, ComplexMatrix, QrFactors};
use crate::search::{subtree_min_metrics, SearchProblem};
use crate::{Error, Result};

/// File signature of the binary dataset format.
pub const DATASET_MAGIC: &[u8; 8] = b"DPPSDSET";
const DATASET_VERSION: u32 = 1;
/// Written little-endian; reads back as this value only with matching byte order.
const ENDIAN_TAG: u32 = 0x0102_0304;
const DATASET_STREAM: u64 = 0xD5;
const MAX_REDRAWS: usize = 16;

/// Features and the `|𝕊|` sub-tree minimum distances `g_q = √(g_q²)`,
/// indexed like the constellation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub features: FeatureVector,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub n_t: usize,
    pub n_r: usize,
    pub constellation: Constellation,
    /// SNR range in dB; each sample draws its SNR uniformly from it.
    pub snr_range_db: (f64, f64),
    pub sample_count: usize,
    pub seed: u64,
    /// Replaces the SNR-derived noise variance when set (test hook).
    pub noise_variance_override: Option<f64>,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.sample_count == 0 {
            return bad("sample_count must be at least 1".into());
        }
        if self.n_t == 0 || self.n_r < self.n_t {
            return bad(format!("need n_r >= n_t >= 1, got n_t = {}, n_r = {}", self.n_t, self.n_r));
        }
        let (lo, hi) = self.snr_range_db;
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return bad(format!("snr range [{lo}, {hi}] is not a finite interval"));
        }
        Ok(())
    }
}

/// Draws `sample_count` independent examples. Sample `i` uses its own
/// random substream, so the output does not depend on thread count.
pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<TrainingExample>> {
    spec.validate()?;
    (0..spec.sample_count)
        .into_par_iter()
        .map(|i| generate_example(spec, i as u64))
        .collect()
}

fn generate_example(spec: &DatasetSpec, index: u64) -> Result<TrainingExample> {
    let (inst, qr) = draw_sample(spec, index)?;
    let z = qr.q1.conj_transpose_mul_vec(&inst.y);
    label_instance(&z, &qr.r, inst.noise_variance, &spec.constellation)
}

/// The channel instance behind sample `index` of the dataset `spec`
/// describes, redrawn on the (measure-zero) rank-deficient case.
pub fn dataset_instance(spec: &DatasetSpec, index: u64) -> Result<ChannelInstance> {
    spec.validate()?;
    draw_sample(spec, index).map(|(inst, _)| inst)
}

fn draw_sample(spec: &DatasetSpec, index: u64) -> Result<(ChannelInstance, QrFactors)> {
    let mut rng = substream_rng(spec.seed, DATASET_STREAM, index);
    let (lo, hi) = spec.snr_range_db;
    let mut last_err = None;
    for _ in 0..MAX_REDRAWS {
        let snr = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let noise_variance = spec
            .noise_variance_override
            .unwrap_or_else(|| snr_to_noise_variance(snr, spec.n_t));
        let inst = draw_with_noise_variance(spec.n_t, spec.n_r, &spec.constellation, noise_variance, &mut rng)?;
        match qrd(&inst.h) {
            Ok(qr) => return Ok((inst, qr)),
            Err(e @ Error::RankDeficient { .. }) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("redraw loop ran"))
}

/// Features and exact sub-tree targets for one reduced-domain instance.
pub fn label_instance(
    z: &[Complex64],
    r: &ComplexMatrix,
    noise_variance: f64,
    constellation: &Constellation,
) -> Result<TrainingExample> {
    let mut problem = SearchProblem::new(z, r, constellation, f64::INFINITY)?;
    let targets = subtree_min_metrics(&mut problem).into_iter().map(f64::sqrt).collect();
    let features = extract_features(z, r, noise_variance);
    Ok(TrainingExample { features, targets })
}

/// Header of a binary dataset file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetHeader {
    pub n_t: u32,
    pub n_r: u32,
    pub constellation: String,
    pub feature_len: u32,
    pub target_len: u32,
    pub count: u64,
}

/// Writes the little-endian record stream: magic, version, byte-order tag,
/// dimensions, constellation name, count, then per record the features
/// followed by the targets as `f64`.
pub fn write_dataset(path: &Path, header: &DatasetHeader, examples: &[TrainingExample]) -> Result<()> {
    if header.count != examples.len() as u64 {
        return Err(Error::InvalidArgument("header count disagrees with example count".into()));
    }
    let tmp = path.with_extension("partial");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        write_records(&mut w, header, examples)?;
        w.flush()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn write_records<W: Write>(w: &mut W, header: &DatasetHeader, examples: &[TrainingExample]) -> Result<()> {
    w.write_all(DATASET_MAGIC)?;
    w.write_u32::<LittleEndian>(DATASET_VERSION)?;
    w.write_u32::<LittleEndian>(ENDIAN_TAG)?;
    w.write_u32::<LittleEndian>(header.n_t)?;
    w.write_u32::<LittleEndian>(header.n_r)?;
    w.write_u32::<LittleEndian>(header.feature_len)?;
    w.write_u32::<LittleEndian>(header.target_len)?;
    let name = header.constellation.as_bytes();
    w.write_u16::<LittleEndian>(name.len() as u16)?;
    w.write_all(name)?;
    w.write_u64::<LittleEndian>(header.count)?;
    for ex in examples {
        if ex.features.len() != header.feature_len as usize || ex.targets.len() != header.target_len as usize {
            return Err(Error::InvalidArgument("example dimensions disagree with header".into()));
        }
        for &v in ex.features.as_slice().iter().chain(&ex.targets) {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<TrainingExample>)> {
    let mut r = BufReader::new(File::open(path)?);
    read_records(&mut r)
}

fn truncated(field: &str) -> impl FnOnce(io::Error) -> Error + '_ {
    move |e| {
        if e.kind() == io::ErrorKind::UnexpectedEof {
            Error::format(field, "file ends early")
        } else {
            Error::Io(e)
        }
    }
}

fn read_records<R: Read>(r: &mut R) -> Result<(DatasetHeader, Vec<TrainingExample>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(truncated("magic"))?;
    if &magic != DATASET_MAGIC {
        return Err(Error::format("magic", "not a dataset file"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(truncated("version"))?;
    if version != DATASET_VERSION {
        return Err(Error::format("version", format!("unsupported version {version}")));
    }
    let tag = r.read_u32::<LittleEndian>().map_err(truncated("endianness"))?;
    if tag != ENDIAN_TAG {
        return Err(Error::format("endianness", format!("unexpected tag {tag:#010x}")));
    }
    let n_t = r.read_u32::<LittleEndian>().map_err(truncated("n_t"))?;
    let n_r = r.read_u32::<LittleEndian>().map_err(truncated("n_r"))?;
    let feature_len = r.read_u32::<LittleEndian>().map_err(truncated("feature_len"))?;
    let target_len = r.read_u32::<LittleEndian>().map_err(truncated("target_len"))?;
    if n_t == 0 || n_r < n_t {
        return Err(Error::format("n_r", format!("need n_r >= n_t >= 1, got {n_t}x{n_r}")));
    }
    if feature_len as usize != input_dim(n_t as usize) {
        return Err(Error::format(
            "feature_len",
            format!("expected {} for n_t = {n_t}, found {feature_len}", input_dim(n_t as usize)),
        ));
    }
    if target_len == 0 {
        return Err(Error::format("target_len", "must be positive"));
    }
    let name_len = r.read_u16::<LittleEndian>().map_err(truncated("constellation"))?;
    let mut name = vec![0u8; name_len as usize];
    r.read_exact(&mut name).map_err(truncated("constellation"))?;
    let constellation =
        String::from_utf8(name).map_err(|_| Error::format("constellation", "name is not UTF-8"))?;
    let count = r.read_u64::<LittleEndian>().map_err(truncated("count"))?;

    let mut examples = Vec::with_capacity(count.min(1 << 20) as usize);
    for k in 0..count {
        let field = format!("record {k}");
        let mut features = vec![0.0; feature_len as usize];
        r.read_f64_into::<LittleEndian>(&mut features).map_err(truncated(&field))?;
        let mut targets = vec![0.0; target_len as usize];
        r.read_f64_into::<LittleEndian>(&mut targets).map_err(truncated(&field))?;
        examples.push(TrainingExample {
            features: FeatureVector(features),
            targets,
        });
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(Error::format("count", format!("data continues past {count} records")));
    }
    Ok((
        DatasetHeader {
            n_t,
            n_r,
            constellation,
            feature_len,
            target_len,
            count,
        },
        examples,
    ))
}

/// Plain CSV with columns `e0..e{I-1}, g0..g{S-1}`.
pub fn export_csv(path: &Path, examples: &[TrainingExample]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    if let Some(first) = examples.first() {
        let cols: Vec<String> = (0..first.features.len())
            .map(|j| format!("e{j}"))
            .chain((0..first.targets.len()).map(|q| format!("g{q}")))
            .collect();
        writeln!(w, "{}", cols.join(","))?;
    }
    for ex in examples {
        let row: Vec<String> = ex
            .features
            .as_slice()
            .iter()
            .chain(&ex.targets)
            .map(|v| v.to_string())
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}
