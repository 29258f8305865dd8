use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use super::IoError;
use crate::dr::{ChannelChart, Method, TrainingMeta};
use crate::features::{FeatureVector, NormMode};
use crate::metrics::MetricsReport;
use crate::nn::{Activation, DenseLayer, MlpModel};
use crate::sim::CsiSample;

pub const MAGIC: &[u8; 8] = b"CHRTLAB0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RecordKind {
    Csi = 1,
    Features = 2,
    Chart = 3,
    Model = 4,
    Report = 5,
}

impl RecordKind {
    fn from_u32(v: u32) -> Option<Self> {
        Some(match v {
            1 => RecordKind::Csi,
            2 => RecordKind::Features,
            3 => RecordKind::Chart,
            4 => RecordKind::Model,
            5 => RecordKind::Report,
            _ => return None,
        })
    }
}

impl fmt::Display for RecordKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordKind::Csi => "csi",
            RecordKind::Features => "features",
            RecordKind::Chart => "chart",
            RecordKind::Model => "model",
            RecordKind::Report => "report",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FileHeader {
    pub kind: RecordKind,
    pub version: u32,
    pub dims: Vec<u64>,
}

/// A simulated CSI dataset with the array shape needed to fold antennas.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiDataset {
    pub array_rows: usize,
    pub array_cols: usize,
    pub samples: Vec<CsiSample>,
}

struct Enc(Vec<u8>);

impl Enc {
    fn new(kind: RecordKind, dims: &[u64]) -> Self {
        let mut e = Enc(Vec::new());
        e.0.extend_from_slice(MAGIC);
        e.0.extend_from_slice(&(kind as u32).to_le_bytes());
        e.0.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        e.u64(dims.len() as u64);
        dims.iter().for_each(|&d| e.u64(d));
        e
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s<'a>(&mut self, v: impl IntoIterator<Item = &'a f64>) {
        v.into_iter().for_each(|&x| self.f64(x));
    }
    fn list(&mut self, v: &[f64]) {
        self.u64(v.len() as u64);
        self.f64s(v);
    }
    fn str(&mut self, s: &str) {
        self.u64(s.len() as u64);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], IoError> {
        if self.buf.len() - self.pos < n {
            return Err(IoError::corrupt(self.buf.len(), "unexpected end of data"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, IoError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    /// Reads a count and checks that `count * unit` bytes are still available,
    /// so hostile headers cannot trigger huge allocations.
    fn count(&mut self, unit: usize) -> Result<usize, IoError> {
        let at = self.pos;
        let n = self.u64()?;
        self.check(n, unit, at)
    }
    fn check(&self, n: u64, unit: usize, at: usize) -> Result<usize, IoError> {
        let remaining = (self.buf.len() - self.pos) as u64;
        match n.checked_mul(unit.max(1) as u64) {
            Some(bytes) if bytes <= remaining => Ok(n as usize),
            Some(_) => Err(IoError::corrupt(self.buf.len(), "unexpected end of data")),
            None => Err(IoError::corrupt(at, "length overflows")),
        }
    }
    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>, IoError> {
        self.check(n as u64, 8, self.pos)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn list(&mut self) -> Result<Vec<f64>, IoError> {
        let n = self.count(8)?;
        self.f64_vec(n)
    }
    fn str(&mut self) -> Result<String, IoError> {
        let at = self.pos;
        let n = self.count(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| IoError::corrupt(at, "invalid utf-8 string"))
    }
    fn finish(&self) -> Result<(), IoError> {
        if self.pos != self.buf.len() {
            return Err(IoError::corrupt(self.pos, "trailing bytes after record"));
        }
        Ok(())
    }
}

fn parse_header(buf: &[u8]) -> Result<(FileHeader, Dec<'_>), IoError> {
    let mut d = Dec { buf, pos: 0 };
    if buf.len() < 8 || &buf[..8] != MAGIC {
        return Err(IoError::BadMagic);
    }
    d.pos = 8;
    let at = d.pos;
    let raw = d.u32()?;
    let kind = RecordKind::from_u32(raw).ok_or_else(|| IoError::corrupt(at, format!("unknown record kind {raw}")))?;
    let version = d.u32()?;
    if version != FORMAT_VERSION {
        return Err(IoError::UnsupportedVersion(version));
    }
    let n = d.count(8)?;
    let dims = (0..n).map(|_| d.u64()).collect::<Result<_, _>>()?;
    Ok((FileHeader { kind, version, dims }, d))
}

/// Parses only the header of an encoded record.
pub fn read_header(buf: &[u8]) -> Result<FileHeader, IoError> {
    parse_header(buf).map(|(h, _)| h)
}

fn open(buf: &[u8], kind: RecordKind, ndims: usize) -> Result<(Vec<u64>, Dec<'_>), IoError> {
    let (h, d) = parse_header(buf)?;
    if h.kind != kind {
        return Err(IoError::WrongKind { expected: kind, found: h.kind.to_string() });
    }
    if ndims != 0 && h.dims.len() != ndims {
        return Err(IoError::corrupt(16, format!("expected {ndims} dims, found {}", h.dims.len())));
    }
    Ok((h.dims, d))
}

fn dim(dims: &[u64], i: usize) -> Result<usize, IoError> {
    usize::try_from(dims[i]).map_err(|_| IoError::corrupt(24 + 8 * i, "dimension too large"))
}

pub fn encode_dataset(ds: &CsiDataset) -> Vec<u8> {
    let (m, k) = ds.samples.first().map_or((ds.array_rows * ds.array_cols, 0), |s| s.matrix.dim());
    let mut e = Enc::new(RecordKind::Csi, &[ds.samples.len() as u64, m as u64, k as u64]);
    e.u64(ds.array_rows as u64);
    e.u64(ds.array_cols as u64);
    for s in &ds.samples {
        e.u64(s.sample_id);
        e.f64(s.timestamp);
        match s.true_position {
            Some(p) => {
                e.u64(1);
                e.f64(p[0]);
                e.f64(p[1]);
            }
            None => {
                e.u64(0);
                e.f64(0.0);
                e.f64(0.0);
            }
        }
        for z in s.matrix.iter() {
            e.f64(z.re);
            e.f64(z.im);
        }
    }
    e.0
}

pub fn decode_dataset(buf: &[u8]) -> Result<CsiDataset, IoError> {
    let (dims, mut d) = open(buf, RecordKind::Csi, 3)?;
    let (n, m, k) = (dims[0], dim(&dims, 1)?, dim(&dims, 2)?);
    let at = d.pos;
    let array_rows = d.u64()? as usize;
    let array_cols = d.u64()? as usize;
    if array_rows.checked_mul(array_cols) != Some(m) {
        return Err(IoError::corrupt(at, "array shape does not match antenna count"));
    }
    let per = m
        .checked_mul(k)
        .and_then(|mk| mk.checked_mul(16))
        .and_then(|b| b.checked_add(40))
        .ok_or_else(|| IoError::corrupt(16, "dimensions overflow"))?;
    let n = d.check(n, per, 16)?;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let sample_id = d.u64()?;
        let timestamp = d.f64()?;
        let at = d.pos;
        let flag = d.u64()?;
        let p = [d.f64()?, d.f64()?];
        let true_position = match flag {
            0 => None,
            1 => Some(p),
            _ => return Err(IoError::corrupt(at, "invalid position flag")),
        };
        let vals = d.f64_vec(2 * m * k)?;
        let matrix = Array2::from_shape_fn((m, k), |(a, b)| {
            let i = 2 * (a * k + b);
            Complex64::new(vals[i], vals[i + 1])
        });
        samples.push(CsiSample { matrix, timestamp, true_position, sample_id });
    }
    d.finish()?;
    Ok(CsiDataset { array_rows, array_cols, samples })
}

pub fn encode_features(features: &[FeatureVector]) -> Vec<u8> {
    encode_features_with_dim(features, features.first().map_or(0, |f| f.values.len()))
}

/// Like [`encode_features`] but with an explicit feature dimension, so an
/// empty set still records its width.
pub fn encode_features_with_dim(features: &[FeatureVector], dim: usize) -> Vec<u8> {
    let mut e = Enc::new(RecordKind::Features, &[features.len() as u64, dim as u64]);
    for f in features {
        let (code, beta) = f.norm_mode.code();
        e.u64(f.sample_id);
        e.f64(f.timestamp);
        e.u64(code);
        e.f64(beta);
        e.f64s(&f.values);
    }
    e.0
}

pub fn decode_features(buf: &[u8]) -> Result<Vec<FeatureVector>, IoError> {
    let (dims, mut d) = open(buf, RecordKind::Features, 2)?;
    let f = dim(&dims, 1)?;
    let per = f.checked_mul(8).and_then(|b| b.checked_add(32)).ok_or_else(|| IoError::corrupt(24, "dimensions overflow"))?;
    let n = d.check(dims[0], per, 16)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let sample_id = d.u64()?;
        let timestamp = d.f64()?;
        let at = d.pos;
        let code = d.u64()?;
        let beta = d.f64()?;
        let norm_mode = NormMode::from_code(code, beta).ok_or_else(|| IoError::corrupt(at, "unknown normalization"))?;
        let values = d.f64_vec(f)?;
        out.push(FeatureVector { values, timestamp, sample_id, norm_mode });
    }
    d.finish()?;
    Ok(out)
}

/// Encodes the chart points and training metadata. The network of a
/// parametric chart is stored separately with [`encode_model`].
pub fn encode_chart(chart: &ChannelChart) -> Vec<u8> {
    let (n, dd) = chart.coordinates.dim();
    let mut e = Enc::new(RecordKind::Chart, &[n as u64, dd as u64]);
    e.u64(chart.method.code());
    e.u64(chart.meta.seed);
    e.u64(chart.meta.hyperparameters.len() as u64);
    for (name, v) in &chart.meta.hyperparameters {
        e.str(name);
        e.f64(*v);
    }
    e.list(&chart.meta.loss_trace);
    e.list(&chart.meta.eigenvalues);
    for (i, &id) in chart.sample_ids.iter().enumerate() {
        e.u64(id);
        e.f64s(chart.coordinates.row(i));
    }
    e.0
}

pub fn decode_chart(buf: &[u8]) -> Result<ChannelChart, IoError> {
    let (dims, mut d) = open(buf, RecordKind::Chart, 2)?;
    let dd = dim(&dims, 1)?;
    let at = d.pos;
    let method = Method::from_code(d.u64()?).ok_or_else(|| IoError::corrupt(at, "unknown method"))?;
    let seed = d.u64()?;
    let nh = d.count(16)?;
    let mut hyperparameters = Vec::with_capacity(nh);
    for _ in 0..nh {
        let name = d.str()?;
        hyperparameters.push((name, d.f64()?));
    }
    let loss_trace = d.list()?;
    let eigenvalues = d.list()?;
    let per = dd.checked_mul(8).and_then(|b| b.checked_add(8)).ok_or_else(|| IoError::corrupt(24, "dimensions overflow"))?;
    let n = d.check(dims[0], per, 16)?;
    let mut ids = Vec::with_capacity(n);
    let mut coords = Vec::with_capacity(n * dd);
    for _ in 0..n {
        ids.push(d.u64()?);
        coords.extend(d.f64_vec(dd)?);
    }
    d.finish()?;
    let coordinates = Array2::from_shape_vec((n, dd), coords).expect("shape checked");
    let meta = TrainingMeta { seed, hyperparameters, loss_trace, eigenvalues };
    ChannelChart::new(coordinates, ids, method, meta).map_err(|e| IoError::corrupt(buf.len(), e.to_string()))
}

pub fn encode_model(model: &MlpModel) -> Vec<u8> {
    let widths: Vec<u64> = model.widths().into_iter().map(|w| w as u64).collect();
    let mut e = Enc::new(RecordKind::Model, &widths);
    e.u64(model.activation.code());
    e.u64(model.seed);
    e.f64s(&model.input_mean);
    e.f64s(&model.input_scale);
    for l in &model.layers {
        e.f64s(&l.weights);
        e.f64s(&l.bias);
    }
    e.0
}

pub fn decode_model(buf: &[u8]) -> Result<MlpModel, IoError> {
    let (dims, mut d) = open(buf, RecordKind::Model, 0)?;
    if dims.len() < 2 || dims.iter().any(|&w| w == 0) {
        return Err(IoError::corrupt(16, "model needs at least two non-zero layer widths"));
    }
    let widths: Vec<usize> = (0..dims.len()).map(|i| dim(&dims, i)).collect::<Result<_, _>>()?;
    let at = d.pos;
    let activation = Activation::from_code(d.u64()?).ok_or_else(|| IoError::corrupt(at, "unknown activation"))?;
    let seed = d.u64()?;
    let input_mean = Array1::from(d.f64_vec(widths[0])?);
    let input_scale = Array1::from(d.f64_vec(widths[0])?);
    let mut layers = Vec::with_capacity(widths.len() - 1);
    for w in widths.windows(2) {
        let count = w[0].checked_mul(w[1]).ok_or_else(|| IoError::corrupt(16, "dimensions overflow"))?;
        let weights = Array2::from_shape_vec((w[0], w[1]), d.f64_vec(count)?).expect("shape checked");
        let bias = Array1::from(d.f64_vec(w[1])?);
        layers.push(DenseLayer { weights, bias });
    }
    d.finish()?;
    let model = MlpModel { layers, activation, input_mean, input_scale, seed };
    model.validate().map_err(|e| IoError::corrupt(buf.len(), e.to_string()))?;
    Ok(model)
}

pub fn encode_report(report: &MetricsReport) -> Vec<u8> {
    let nk = report.k_list.len();
    let mut e = Enc::new(RecordKind::Report, &[nk as u64]);
    report.k_list.iter().for_each(|&k| e.u64(k as u64));
    report.trustworthiness.iter().for_each(|&(_, v)| e.f64(v));
    report.continuity.iter().for_each(|&(_, v)| e.f64(v));
    e.f64(report.kruskal_stress);
    match report.alignment_rmse {
        Some(r) => {
            e.u64(1);
            e.f64(r);
        }
        None => {
            e.u64(0);
            e.f64(0.0);
        }
    }
    e.0
}

pub fn decode_report(buf: &[u8]) -> Result<MetricsReport, IoError> {
    let (dims, mut d) = open(buf, RecordKind::Report, 1)?;
    let nk = d.check(dims[0], 24, 16)?;
    let k_list: Vec<usize> = (0..nk).map(|_| d.u64().map(|k| k as usize)).collect::<Result<_, _>>()?;
    let tw = d.f64_vec(nk)?;
    let ct = d.f64_vec(nk)?;
    let kruskal_stress = d.f64()?;
    let at = d.pos;
    let flag = d.u64()?;
    let r = d.f64()?;
    let alignment_rmse = match flag {
        0 => None,
        1 => Some(r),
        _ => return Err(IoError::corrupt(at, "invalid alignment flag")),
    };
    d.finish()?;
    Ok(MetricsReport {
        trustworthiness: k_list.iter().copied().zip(tw).collect(),
        continuity: k_list.iter().copied().zip(ct).collect(),
        k_list,
        kruskal_stress,
        alignment_rmse,
    })
}

macro_rules! file_io {
    ($write:ident, $read:ident, $enc:ident, $dec:ident, $t:ty, $out:ty) => {
        pub fn $write(path: impl AsRef<Path>, value: &$t) -> Result<(), IoError> {
            fs::write(path, $enc(value))?;
            Ok(())
        }

        pub fn $read(path: impl AsRef<Path>) -> Result<$out, IoError> {
            $dec(&fs::read(path)?)
        }
    };
}

file_io!(write_dataset, read_dataset, encode_dataset, decode_dataset, CsiDataset, CsiDataset);
file_io!(write_features, read_features, encode_features, decode_features, [FeatureVector], Vec<FeatureVector>);
file_io!(write_chart, read_chart, encode_chart, decode_chart, ChannelChart, ChannelChart);
file_io!(write_model, read_model, encode_model, decode_model, MlpModel, MlpModel);
file_io!(write_report, read_report, encode_report, decode_report, MetricsReport, MetricsReport);
