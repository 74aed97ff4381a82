//! Binary checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! "NAVF" | u32 format version | u32 entry count
//! entry*: u16 name length | name (utf-8) | u8 kind | payload
//! u32 CRC-32 of every preceding byte
//! ```
//!
//! Payloads: a network is `u32 layers`, per layer `u32 in, u32 out, u8
//! activation`, then `u64 n` and `n` f64 parameters. Adam state is `lr, beta1,
//! beta2, eps` as f64, `u64 t`, `u64 n`, then both moment vectors. Arrays are
//! `u64 n` followed by the elements.

use thiserror::Error;

use super::adam::{Adam, AdamConfig};
use super::dense::{Activation, DenseNet, LayerSpec};

pub const MAGIC: &[u8; 4] = b"NAVF";
pub const FORMAT_VERSION: u32 = 1;

const KIND_NET: u8 = 1;
const KIND_ADAM: u8 = 2;
const KIND_F64: u8 = 3;
const KIND_U64: u8 = 4;
const KIND_BYTES: u8 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("checksum mismatch: stored {stored:08x}, computed {computed:08x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("missing entry `{0}`")]
    Missing(String),
    #[error("entry `{name}` has the wrong kind")]
    WrongKind { name: String },
    #[error("entry `{name}` shape mismatch: expected {expected}, found {found}")]
    Shape {
        name: String,
        expected: String,
        found: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Entry {
    Net(DenseNet),
    Adam(Adam),
    F64s(Vec<f64>),
    U64s(Vec<u64>),
    Bytes(Vec<u8>),
}

/// Ordered list of named entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    entries: Vec<(String, Entry)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, entry: Entry) {
        self.entries.push((name.into(), entry));
    }

    pub fn entries(&self) -> &[(String, Entry)] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Result<&Entry, CheckpointError> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| e)
            .ok_or_else(|| CheckpointError::Missing(name.to_string()))
    }

    pub fn net(&self, name: &str) -> Result<&DenseNet, CheckpointError> {
        match self.get(name)? {
            Entry::Net(n) => Ok(n),
            _ => Err(CheckpointError::WrongKind { name: name.into() }),
        }
    }

    /// Network entry that must match `expected`'s architecture.
    pub fn net_like(&self, name: &str, expected: &DenseNet) -> Result<DenseNet, CheckpointError> {
        let n = self.net(name)?;
        if n.layers() != expected.layers() {
            return Err(CheckpointError::Shape {
                name: name.into(),
                expected: expected.manifest(),
                found: n.manifest(),
            });
        }
        Ok(n.clone())
    }

    pub fn adam(&self, name: &str) -> Result<&Adam, CheckpointError> {
        match self.get(name)? {
            Entry::Adam(a) => Ok(a),
            _ => Err(CheckpointError::WrongKind { name: name.into() }),
        }
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64], CheckpointError> {
        match self.get(name)? {
            Entry::F64s(v) => Ok(v),
            _ => Err(CheckpointError::WrongKind { name: name.into() }),
        }
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64], CheckpointError> {
        match self.get(name)? {
            Entry::U64s(v) => Ok(v),
            _ => Err(CheckpointError::WrongKind { name: name.into() }),
        }
    }

    pub fn bytes(&self, name: &str) -> Result<&[u8], CheckpointError> {
        match self.get(name)? {
            Entry::Bytes(v) => Ok(v),
            _ => Err(CheckpointError::WrongKind { name: name.into() }),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, entry) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            match entry {
                Entry::Net(net) => {
                    out.push(KIND_NET);
                    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
                    for l in net.layers() {
                        out.extend_from_slice(&(l.n_in as u32).to_le_bytes());
                        out.extend_from_slice(&(l.n_out as u32).to_le_bytes());
                        out.push(l.activation.code());
                    }
                    put_f64s(&mut out, net.params());
                }
                Entry::Adam(a) => {
                    out.push(KIND_ADAM);
                    for v in [a.config.lr, a.config.beta1, a.config.beta2, a.config.eps] {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                    out.extend_from_slice(&a.t.to_le_bytes());
                    put_f64s(&mut out, &a.m);
                    put_f64s(&mut out, &a.v);
                }
                Entry::F64s(v) => {
                    out.push(KIND_F64);
                    put_f64s(&mut out, v);
                }
                Entry::U64s(v) => {
                    out.push(KIND_U64);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    for x in v {
                        out.extend_from_slice(&x.to_le_bytes());
                    }
                }
                Entry::Bytes(v) => {
                    out.push(KIND_BYTES);
                    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
                    out.extend_from_slice(v);
                }
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        if bytes.len() < 16 {
            return Err(CheckpointError::Truncated(bytes.len()));
        }
        let mut r = Reader {
            buf: &bytes[..bytes.len() - 4],
            pos: 4,
        };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"));
        let computed = crc32fast::hash(&bytes[..bytes.len() - 4]);
        if stored != computed {
            // a short file usually shows up here first
            return Err(CheckpointError::Checksum { stored, computed });
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = String::from_utf8(r.take(name_len)?.to_vec())
                .map_err(|_| CheckpointError::Malformed("entry name is not utf-8".into()))?;
            let entry = match r.u8()? {
                KIND_NET => {
                    let n_layers = r.u32()? as usize;
                    let mut layers = Vec::with_capacity(n_layers.min(1024));
                    for _ in 0..n_layers {
                        let n_in = r.u32()? as usize;
                        let n_out = r.u32()? as usize;
                        let code = r.u8()?;
                        let activation = Activation::from_code(code).ok_or_else(|| {
                            CheckpointError::Malformed(format!("activation code {code}"))
                        })?;
                        layers.push(LayerSpec {
                            n_in,
                            n_out,
                            activation,
                        });
                    }
                    let params = r.f64s()?;
                    Entry::Net(
                        DenseNet::from_parts(layers, params)
                            .map_err(|e| CheckpointError::Malformed(format!("{name}: {e}")))?,
                    )
                }
                KIND_ADAM => {
                    let config = AdamConfig {
                        lr: r.f64()?,
                        beta1: r.f64()?,
                        beta2: r.f64()?,
                        eps: r.f64()?,
                    };
                    let t = r.u64()?;
                    let m = r.f64s()?;
                    let v = r.f64s()?;
                    if m.len() != v.len() {
                        return Err(CheckpointError::Malformed(format!(
                            "{name}: moment lengths differ"
                        )));
                    }
                    Entry::Adam(Adam { config, m, v, t })
                }
                KIND_F64 => Entry::F64s(r.f64s()?),
                KIND_U64 => {
                    let n = r.len_prefix(8)?;
                    Entry::U64s((0..n).map(|_| r.u64()).collect::<Result<_, _>>()?)
                }
                KIND_BYTES => {
                    let n = r.len_prefix(1)?;
                    Entry::Bytes(r.take(n)?.to_vec())
                }
                k => {
                    return Err(CheckpointError::Malformed(format!(
                        "unknown entry kind {k}"
                    )))
                }
            };
            entries.push((name, entry));
        }
        if r.pos != r.buf.len() {
            return Err(CheckpointError::Malformed("trailing bytes".into()));
        }
        Ok(Self { entries })
    }
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    out.extend_from_slice(&bytes_of_f64s(v));
}

fn bytes_of_f64s(v: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * v.len());
    out.extend_from_slice(&(v.len() as u64).to_le_bytes());
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .ok_or(CheckpointError::Truncated(self.pos))?;
        if end > self.buf.len() {
            return Err(CheckpointError::Truncated(self.buf.len()));
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2")))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8")))
    }

    /// Element count whose payload must still fit in the buffer.
    fn len_prefix(&mut self, elem: usize) -> Result<usize, CheckpointError> {
        let n = self.u64()? as usize;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(CheckpointError::Truncated(self.buf.len()));
        }
        Ok(n)
    }

    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.len_prefix(8)?;
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8")))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = DenseNet::new(
            &[5, 7, 3],
            Activation::ReLU,
            Activation::Tanh,
            1.0,
            &mut rng,
        );
        let mut adam = Adam::for_net(&net, AdamConfig::default());
        let g: Vec<f64> = (0..net.param_count())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let mut p = net.params().to_vec();
        adam.step(&mut p, &g).unwrap();
        let mut c = Checkpoint::new();
        c.push("actor", Entry::Net(net));
        c.push("actor.adam", Entry::Adam(adam));
        c.push("scalars", Entry::F64s(vec![0.2, -1.5]));
        c.push("counters", Entry::U64s(vec![7, 11]));
        c.push("blob", Entry::Bytes(b"hello".to_vec()));
        c
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.to_bytes();
        assert_eq!(&bytes[..4], b"NAVF");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (a, b) = (c.net("actor").unwrap(), back.net("actor").unwrap());
        for _ in 0..100 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let x = Matrix::row_vector(&x);
            assert_eq!(a.predict(&x).unwrap(), b.predict(&x).unwrap());
        }
    }

    #[test]
    fn truncated_file_is_an_error() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 10, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                Checkpoint::from_bytes(&bytes[..cut]).is_err(),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn corruption_and_version_detected() {
        let mut bytes = sample().to_bytes();
        bytes[40] ^= 0x55;
        assert!(matches!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::Checksum { .. })
        ));
        let mut bytes = sample().to_bytes();
        bytes[4] = 9;
        assert_eq!(
            Checkpoint::from_bytes(&bytes),
            Err(CheckpointError::UnsupportedVersion(9))
        );
        assert_eq!(
            Checkpoint::from_bytes(b"PNG!aaaaaaaaaaaaaaaa"),
            Err(CheckpointError::BadMagic)
        );
    }

    #[test]
    fn shape_mismatch_names_both_manifests() {
        let c = sample();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let other = DenseNet::new(
            &[5, 8, 3],
            Activation::ReLU,
            Activation::Tanh,
            1.0,
            &mut rng,
        );
        match c.net_like("actor", &other) {
            Err(CheckpointError::Shape {
                expected, found, ..
            }) => {
                assert_eq!(expected, "5-8relu-3tanh");
                assert_eq!(found, "5-7relu-3tanh");
            }
            other => panic!("{other:?}"),
        }
    }
}
