//! Versioned binary checkpoint.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "PQRCKPT\0"
//! version      u32
//! header_len   u32, then header_len bytes of UTF-8 text, one record per line:
//!                arch <arch record>
//!                seed <u64>
//!                encoder beta=<f64> distance=<name>     (pqr head only)
//!                anchors <anchor record>                 (pqr head only)
//!                mapper <reverse-mapper record>          (pqr head only)
//! n_tensors    u32, then per tensor:
//!                name_len u32, name bytes, ndim u32, ndim x u64 dims,
//!                prod(dims) x f64 row-major
//! ```

use std::path::Path;

use super::{ArchConfig, Network};
use crate::anchors::AnchorSet;
use crate::codec::{Distance, EncoderConfig, ReverseMapper};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::record;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PQRCKPT\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained network together with what is needed to turn its outputs into
/// scores: the PQR encoder (anchors, beta) and the reverse mapper.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub encoder: Option<EncoderConfig>,
    pub mapper: Option<ReverseMapper>,
}

impl Checkpoint {
    pub fn new(
        network: Network,
        encoder: Option<EncoderConfig>,
        mapper: Option<ReverseMapper>,
    ) -> Result<Self> {
        let pqr = network.head().is_pqr();
        if pqr != encoder.is_some() || pqr != mapper.is_some() {
            return Err(Error::InvalidParameter(
                "a pqr checkpoint needs both encoder and mapper; an sqr checkpoint neither".into(),
            ));
        }
        if let (Some(e), Some(m)) = (&encoder, &mapper) {
            let want = network.head().output_len();
            if e.len() != want || m.len() != want {
                return Err(Error::InvalidParameter(format!(
                    "head has {want} outputs but encoder/mapper have {}/{}",
                    e.len(),
                    m.len()
                )));
            }
        }
        Ok(Checkpoint {
            network,
            encoder,
            mapper,
        })
    }

    fn header(&self) -> String {
        let mut h = format!(
            "arch {}\nseed {}\n",
            self.network.arch().to_record(),
            self.network.seed()
        );
        if let (Some(e), Some(m)) = (&self.encoder, &self.mapper) {
            h.push_str(&format!("encoder beta={} distance={}\n", e.beta(), e.distance()));
            h.push_str(&format!("anchors {}\n", e.anchors().to_record()));
            h.push_str(&format!("mapper {}\n", m.to_record()));
        }
        h
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = self.header();
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        let tensors = self.network.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, shape, data) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::UnsupportedFormat("not a PQR checkpoint (bad magic)".into()));
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedFormat(format!(
                "checkpoint version {version}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        let header_len = r.u32("header length")? as usize;
        let header = std::str::from_utf8(r.take(header_len, "header")?)
            .map_err(|_| Error::CorruptCheckpoint("header is not UTF-8".into()))?;
        let parsed = parse_header(header)?;

        let n_tensors = r.u32("tensor count")? as usize;
        let mut params = Vec::new();
        let mut names = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name_len = r.u32("tensor name length")? as usize;
            let name = String::from_utf8(r.take(name_len, "tensor name")?.to_vec())
                .map_err(|_| Error::CorruptCheckpoint("tensor name is not UTF-8".into()))?;
            let ndim = r.u32("tensor rank")? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64("tensor dim")? as usize);
            }
            let count: usize = shape.iter().product();
            let raw = r.take(count.checked_mul(8).ok_or_else(|| corrupt("tensor size overflows"))?, "tensor data")?;
            params.extend(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())));
            names.push((name, shape));
        }
        if r.pos != bytes.len() {
            return Err(corrupt("trailing bytes after the last tensor"));
        }

        let network = Network::from_params(parsed.arch, parsed.seed, params)?;
        let expected: Vec<(String, Vec<usize>)> = network
            .tensors()
            .into_iter()
            .map(|(n, s, _)| (n, s))
            .collect();
        if expected != names {
            return Err(corrupt("tensor names or shapes do not match the architecture"));
        }
        Checkpoint::new(network, parsed.encoder, parsed.mapper)
            .map_err(|e| Error::CorruptCheckpoint(e.to_string()))
    }
}

struct Header {
    arch: ArchConfig,
    seed: u64,
    encoder: Option<EncoderConfig>,
    mapper: Option<ReverseMapper>,
}

fn parse_header(text: &str) -> Result<Header> {
    let mut arch = None;
    let mut seed = None;
    let mut enc = None;
    let mut anchors = None;
    let mut mapper = None;
    for line in text.lines() {
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        let bad = |e: Error| Error::CorruptCheckpoint(format!("{key} record: {e}"));
        match key {
            "arch" => arch = Some(ArchConfig::from_record(rest).map_err(bad)?),
            "seed" => seed = Some(record::parse_num::<u64>(rest, "seed").map_err(bad)?),
            "encoder" => {
                let f = record::parse_fields(rest).map_err(bad)?;
                let beta: f64 = record::parse_num(record::field(&f, "beta").map_err(bad)?, "beta").map_err(bad)?;
                let distance: Distance = record::field(&f, "distance").map_err(bad)?.parse().map_err(bad)?;
                enc = Some((beta, distance));
            }
            "anchors" => anchors = Some(AnchorSet::from_record(rest).map_err(bad)?),
            "mapper" => mapper = Some(ReverseMapper::from_record(rest).map_err(bad)?),
            other => return Err(corrupt(&format!("unknown header record {other:?}"))),
        }
    }
    let encoder = match (enc, anchors) {
        (Some((beta, distance)), Some(a)) => Some(
            EncoderConfig::new(beta, a, distance).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?,
        ),
        (None, None) => None,
        _ => return Err(corrupt("encoder and anchors records must appear together")),
    };
    Ok(Header {
        arch: arch.ok_or_else(|| corrupt("missing arch record"))?,
        seed: seed.ok_or_else(|| corrupt("missing seed record"))?,
        encoder,
        mapper,
    })
}

fn corrupt(msg: &str) -> Error {
    Error::CorruptCheckpoint(msg.to_string())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::CorruptCheckpoint(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path, &ckpt.to_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anchors::{uniform_anchors, ScoreRange};
    use crate::codec::{encode_batch, fit_reverse_map};
    use crate::network::{Head, Mode};

    fn pqr_checkpoint() -> Checkpoint {
        let net = Network::build(ArchConfig::desk(Head::Pqr(5)), 11).unwrap();
        let enc = EncoderConfig::new(
            64.0,
            uniform_anchors(ScoreRange::unit(), 5).unwrap(),
            Distance::SquaredEuclidean,
        )
        .unwrap();
        let ys: Vec<f64> = (0..=40).map(|i| i as f64 / 40.0).collect();
        let mapper =
            fit_reverse_map(&encode_batch(&ys, &enc).unwrap(), &ys, ScoreRange::unit(), 1e-8).unwrap();
        Checkpoint::new(net, Some(enc), Some(mapper)).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = pqr_checkpoint();
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert!(c
            .network
            .params()
            .iter()
            .zip(back.network.params())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn file_round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let c = pqr_checkpoint();
        let x: Vec<f64> = (0..c.network.input_len() * 10)
            .map(|i| ((i * 31) % 97) as f64 / 97.0 - 0.5)
            .collect();
        let before = c.network.forward(&x, Mode::Eval).unwrap();
        save_checkpoint(&path, &c).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.network.forward(&x, Mode::Eval).unwrap(), before);
    }

    #[test]
    fn sqr_checkpoint_has_no_anchors() {
        let net = Network::build(ArchConfig::desk(Head::Sqr), 3).unwrap();
        let c = Checkpoint::new(net, None, None).unwrap();
        let bytes = c.to_bytes();
        let text = String::from_utf8_lossy(&bytes);
        assert!(!text.contains("anchors "));
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), c);
    }

    #[test]
    fn wrong_magic_and_version() {
        let mut bytes = pqr_checkpoint().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(Error::UnsupportedFormat(_))));
        bytes[8] = 9;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn truncation_is_corruption() {
        let bytes = pqr_checkpoint().to_bytes();
        for cut in [10, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(Error::CorruptCheckpoint(_))
            ));
        }
    }

    #[test]
    fn head_and_records_must_agree() {
        let net = Network::build(ArchConfig::desk(Head::Pqr(5)), 3).unwrap();
        assert!(Checkpoint::new(net, None, None).is_err());
    }
}
