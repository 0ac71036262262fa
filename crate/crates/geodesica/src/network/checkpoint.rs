//! Self-describing binary checkpoint format.
//!
//! Layout (all integers and floats little-endian):
//! magic `GEODESICA-CKPT-1` (16 bytes), format version `u32`, manifold
//! block, bounds, augmentation kind, architecture, parameter array,
//! optimizer state. The loader validates every length against hard caps
//! before allocating, and refuses checkpoints whose manifold identity or
//! bounds disagree with the manifold it is being loaded against.

use std::path::Path;

use crate::eikonal::AugmentationKind;
use crate::error::{Error, Result};
use crate::manifold::{GmmComponent, Manifold, ManifoldSpec};
use crate::network::{MlpArchitecture, MlpParameters, OptimizerState};

pub const MAGIC: &[u8; 16] = b"GEODESICA-CKPT-1";
pub const VERSION: u32 = 1;

const MAX_DIM: usize = 64;
const MAX_WIDTH: usize = 8192;
const MAX_DEPTH: usize = 64;
const MAX_FOURIER: usize = 64;
const MAX_COMPONENTS: usize = 256;

/// Everything needed to rebuild a distance model and resume training.
#[derive(Debug, Clone)]
pub struct CheckpointData {
    pub spec: ManifoldSpec,
    pub bounds_low: Vec<f64>,
    pub bounds_high: Vec<f64>,
    pub augmentation: AugmentationKind,
    pub params: MlpParameters,
    pub state: Option<OptimizerState>,
}

impl CheckpointData {
    pub fn manifold(&self) -> Result<Manifold> {
        Manifold::from_spec(&self.spec, self.bounds_low.clone(), self.bounds_high.clone())
    }

    /// Error unless the checkpoint was produced for `man` (same identity and
    /// same bounds).
    pub fn validate_against(&self, man: &Manifold) -> Result<()> {
        let same_bounds = self.bounds_low == man.bounds_low() && self.bounds_high == man.bounds_high();
        if self.spec != man.spec() || !same_bounds {
            return Err(Error::ManifoldMismatch {
                found: format!(
                    "{} bounds {:?}..{:?}",
                    self.spec.describe(),
                    self.bounds_low,
                    self.bounds_high
                ),
                requested: format!(
                    "{} bounds {:?}..{:?}",
                    man.spec().describe(),
                    man.bounds_low(),
                    man.bounds_high()
                ),
            });
        }
        Ok(())
    }
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.f64(*v);
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::schema("truncated checkpoint"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(8 * n)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
    fn finished(&self) -> bool {
        self.pos == self.buf.len()
    }
}

fn encode(data: &CheckpointData) -> Vec<u8> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    match &data.spec {
        ManifoldSpec::Euclidean { n } => {
            w.u8(0);
            w.u32(*n as u32);
        }
        ManifoldSpec::Hypersphere { n } => {
            w.u8(1);
            w.u32(*n as u32);
        }
        ManifoldSpec::Peaks => {
            w.u8(2);
            w.u32(2);
        }
        ManifoldSpec::Gmm { components } => {
            w.u8(3);
            let n = components[0].mean.len();
            w.u32(n as u32);
            w.u32(components.len() as u32);
            for c in components {
                w.f64(c.alpha);
                w.f64s(&c.mean);
                w.f64s(&c.cov);
            }
        }
    }
    w.f64s(&data.bounds_low);
    w.f64s(&data.bounds_high);
    match &data.augmentation {
        AugmentationKind::SinglePoint { source } => {
            w.u8(0);
            w.f64s(source);
        }
        AugmentationKind::Global => w.u8(1),
        AugmentationKind::GlobalUpperBounded { quad_nodes } => {
            w.u8(2);
            w.u32(*quad_nodes as u32);
        }
    }
    let arch = data.params.arch;
    w.u32(arch.input_dim as u32);
    w.u32(arch.width as u32);
    w.u32(arch.depth as u32);
    w.u32(arch.fourier_features as u32);
    w.u64(data.params.len() as u64);
    w.f64s(data.params.data());
    match &data.state {
        None => w.u8(0),
        Some(st) => {
            w.u8(1);
            w.u64(st.step);
            w.f64(st.lr);
            w.f64(st.decay_factor);
            w.u64(st.decay_interval);
            w.f64s(&st.m);
            w.f64s(&st.v);
        }
    }
    w.buf
}

/// Decode a checkpoint from raw bytes. Never panics on malformed input.
pub fn decode(bytes: &[u8]) -> Result<CheckpointData> {
    let mut r = Reader::new(bytes);
    let magic = r.take(16)?;
    if magic != MAGIC {
        return Err(Error::schema("bad magic header"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::schema(format!("unsupported version {version}")));
    }
    let tag = r.u8()?;
    let dim = r.u32()? as usize;
    if dim == 0 || dim > MAX_DIM {
        return Err(Error::schema(format!("manifold dim {dim} out of range")));
    }
    let spec = match tag {
        0 => ManifoldSpec::Euclidean { n: dim },
        1 => ManifoldSpec::Hypersphere { n: dim },
        2 => {
            if dim != 2 {
                return Err(Error::schema("peaks must be two-dimensional"));
            }
            ManifoldSpec::Peaks
        }
        3 => {
            let count = r.u32()? as usize;
            if count == 0 || count > MAX_COMPONENTS {
                return Err(Error::schema("gmm component count out of range"));
            }
            let mut components = Vec::with_capacity(count);
            for _ in 0..count {
                let alpha = r.f64()?;
                let mean = r.f64s(dim)?;
                let cov = r.f64s(dim * dim)?;
                if !alpha.is_finite()
                    || mean.iter().any(|v| !v.is_finite())
                    || cov.iter().any(|v| !v.is_finite())
                {
                    return Err(Error::schema("non-finite gmm parameter"));
                }
                components.push(GmmComponent { alpha, mean, cov });
            }
            ManifoldSpec::Gmm { components }
        }
        other => return Err(Error::schema(format!("unknown manifold tag {other}"))),
    };
    let bounds_low = r.f64s(dim)?;
    let bounds_high = r.f64s(dim)?;
    if bounds_low
        .iter()
        .zip(&bounds_high)
        .any(|(l, h)| !(l.is_finite() && h.is_finite() && l < h))
    {
        return Err(Error::schema("invalid bounds"));
    }
    let augmentation = match r.u8()? {
        0 => {
            let source = r.f64s(dim)?;
            if source.iter().any(|v| !v.is_finite()) {
                return Err(Error::schema("non-finite source point"));
            }
            AugmentationKind::SinglePoint { source }
        }
        1 => AugmentationKind::Global,
        2 => {
            let quad_nodes = r.u32()? as usize;
            if quad_nodes < 3 || quad_nodes > 1 << 20 {
                return Err(Error::schema("quad_nodes out of range"));
            }
            AugmentationKind::GlobalUpperBounded { quad_nodes }
        }
        other => return Err(Error::schema(format!("unknown augmentation tag {other}"))),
    };
    let input_dim = r.u32()? as usize;
    let width = r.u32()? as usize;
    let depth = r.u32()? as usize;
    let fourier = r.u32()? as usize;
    if input_dim == 0
        || input_dim > 2 * MAX_DIM
        || width == 0
        || width > MAX_WIDTH
        || depth == 0
        || depth > MAX_DEPTH
        || fourier > MAX_FOURIER
    {
        return Err(Error::schema("architecture out of range"));
    }
    let expected_input = match &augmentation {
        AugmentationKind::SinglePoint { .. } => dim,
        _ => 2 * dim,
    };
    if input_dim != expected_input {
        return Err(Error::schema(format!(
            "input_dim {input_dim} inconsistent with augmentation (expected {expected_input})"
        )));
    }
    let arch = MlpArchitecture {
        input_dim,
        width,
        depth,
        fourier_features: fourier,
    };
    let count = r.u64()? as usize;
    if count != arch.param_count() {
        return Err(Error::schema(format!(
            "parameter count {count} does not match architecture ({})",
            arch.param_count()
        )));
    }
    let data = r.f64s(count)?;
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::schema("non-finite parameter"));
    }
    let params = MlpParameters::from_data(arch, data)
        .map_err(|e| Error::schema(format!("parameter vector rejected: {e}")))?;
    let state = match r.u8()? {
        0 => None,
        1 => {
            let step = r.u64()?;
            let lr = r.f64()?;
            let decay_factor = r.f64()?;
            let decay_interval = r.u64()?;
            let m = r.f64s(count)?;
            let v = r.f64s(count)?;
            if !lr.is_finite()
                || !decay_factor.is_finite()
                || m.iter().any(|x| !x.is_finite())
                || v.iter().any(|x| !x.is_finite())
            {
                return Err(Error::schema("non-finite optimizer state"));
            }
            Some(OptimizerState {
                step,
                m,
                v,
                lr,
                decay_factor,
                decay_interval,
            })
        }
        other => return Err(Error::schema(format!("unknown state tag {other}"))),
    };
    if !r.finished() {
        return Err(Error::schema("trailing bytes after checkpoint"));
    }
    Ok(CheckpointData {
        spec,
        bounds_low,
        bounds_high,
        augmentation,
        params,
        state,
    })
}

pub fn encode_checkpoint(data: &CheckpointData) -> Vec<u8> {
    encode(data)
}

/// Write a checkpoint file.
pub fn save_checkpoint(data: &CheckpointData, path: &Path) -> Result<()> {
    crate::io::write_file(path, encode(data))
}

/// Read a checkpoint file.
pub fn load_checkpoint(path: &Path) -> Result<CheckpointData> {
    let bytes = crate::io::read_bytes(path)?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{forward, init};

    fn sample_checkpoint() -> CheckpointData {
        let arch = MlpArchitecture::new(4, 6, 2);
        let params = init(arch, 5).unwrap();
        let state = OptimizerState::new(params.len(), 1e-3, 0.9, 2000);
        CheckpointData {
            spec: ManifoldSpec::Euclidean { n: 2 },
            bounds_low: vec![-3.0, -3.0],
            bounds_high: vec![3.0, 3.0],
            augmentation: AugmentationKind::Global,
            params,
            state: Some(state),
        }
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let data = sample_checkpoint();
        let bytes = encode(&data);
        let back = decode(&bytes).unwrap();
        assert_eq!(back.params.data(), data.params.data());
        assert_eq!(back.bounds_low, data.bounds_low);
        assert_eq!(back.state.as_ref().unwrap().m, data.state.as_ref().unwrap().m);
        // forward outputs identical bitwise
        for trial in 0..10 {
            let x = [0.1 * trial as f64, -0.05 * trial as f64, 0.2, -0.3];
            assert_eq!(
                forward(&data.params, &x).to_bits(),
                forward(&back.params, &x).to_bits()
            );
        }
    }

    #[test]
    fn corrupt_magic_is_schema_mismatch() {
        let mut bytes = encode(&sample_checkpoint());
        bytes[0] ^= 0xff;
        match decode(&bytes) {
            Err(Error::SchemaMismatch { .. }) => {}
            other => panic!("expected SchemaMismatch, got {other:?}"),
        }
    }

    #[test]
    fn truncation_and_trailing_garbage_are_rejected() {
        let bytes = encode(&sample_checkpoint());
        assert!(decode(&bytes[..bytes.len() - 4]).is_err());
        let mut extended = bytes.clone();
        extended.push(0);
        assert!(decode(&extended).is_err());
    }

    #[test]
    fn wrong_manifold_is_rejected_on_validation() {
        let data = sample_checkpoint();
        let sphere = Manifold::hypersphere(2).unwrap();
        match data.validate_against(&sphere) {
            Err(Error::ManifoldMismatch { .. }) => {}
            other => panic!("expected ManifoldMismatch, got {other:?}"),
        }
        let euclid = Manifold::euclidean(2).unwrap();
        data.validate_against(&euclid).unwrap();
        // same manifold, different bounds → mismatch
        let shrunk = Manifold::euclidean(2)
            .unwrap()
            .with_bounds(vec![-1.0, -1.0], vec![1.0, 1.0])
            .unwrap();
        assert!(data.validate_against(&shrunk).is_err());
    }

    #[test]
    fn save_and_load_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let data = sample_checkpoint();
        save_checkpoint(&data, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_eq!(back.params.data(), data.params.data());
    }
}
