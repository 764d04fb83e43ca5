use std::io::{BufReader, BufWriter, Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::numcore::{Group, ParamKind, ParamSet, Tensor};
use crate::seq2seq::ModelConfig;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"XSTC";
const VERSION: u16 = 1;

/// Provenance carried inside a checkpoint. Deliberately holds nothing
/// time-dependent so identical training runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub task: String,
    pub epochs: u64,
    pub dev_metric: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocab_fingerprint: Option<String>,
    meta: CheckpointMeta,
}

/// Header fields of a checkpoint, readable without touching the tensors.
#[derive(Debug, Clone)]
pub struct CheckpointInfo {
    pub config: ModelConfig,
    pub vocab_fingerprint: Option<String>,
    pub meta: CheckpointMeta,
}

/// A saved model: architecture config, metadata and every named tensor
/// (trainable weights and batch-norm buffers alike). Immutable after load.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub vocab_fingerprint: Option<String>,
    pub meta: CheckpointMeta,
    pub params: ParamSet<f32>,
}

/// The fingerprint travels with the vocabulary-indexed layers: a checkpoint
/// that stores decoder or output tensors must say which vocab they index, and
/// one without them must not claim a vocab at all.
fn check_fingerprint_rule(params: &ParamSet<f32>, fingerprint: Option<&str>) -> Result<()> {
    let vocab_indexed = params
        .entries
        .values()
        .any(|e| matches!(e.group, Group::Decoder | Group::Output));
    match (vocab_indexed, fingerprint) {
        (true, None) => Err(Error::Invalid(
            "checkpoint stores decoder/output tensors but carries no vocab fingerprint".into(),
        )),
        (false, Some(_)) => Err(Error::Invalid(
            "checkpoint carries a vocab fingerprint but stores no decoder/output tensors".into(),
        )),
        _ => Ok(()),
    }
}

struct HashingWriter<W: Write> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.inner.flush()
    }
}

struct HashingReader<R: Read> {
    inner: R,
    hasher: Sha256,
}

impl<R: Read> Read for HashingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

impl<R: Read> HashingReader<R> {
    fn digest_so_far(&self) -> [u8; 32] {
        self.hasher.clone().finalize().into()
    }
}

/// File layout: magic "XSTC", version u16, u32-length-prefixed JSON header
/// (config, optional vocab fingerprint, metadata), u32 tensor count, then one
/// record per tensor in name order: name, group tag, kind byte, rank and
/// dims, data as little-endian f32. A SHA-256 over everything above closes
/// the file. All integers little-endian.
pub fn save_checkpoint(
    params: &ParamSet<f32>,
    config: &ModelConfig,
    vocab_fingerprint: Option<&str>,
    meta: &CheckpointMeta,
    path: &str,
) -> Result<()> {
    check_fingerprint_rule(params, vocab_fingerprint)?;
    for (name, e) in &params.entries {
        if !e.value.all_finite() {
            return Err(Error::Invalid(format!(
                "refusing to save: tensor '{}' holds a non-finite value",
                name
            )));
        }
    }
    let header = Header {
        config: config.clone(),
        vocab_fingerprint: vocab_fingerprint.map(str::to_string),
        meta: meta.clone(),
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| Error::Invalid(format!("checkpoint header serialization: {}", e)))?;

    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = HashingWriter {
        inner: BufWriter::new(f),
        hasher: Sha256::new(),
    };
    (|| -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header_json.len() as u32).to_le_bytes())?;
        w.write_all(&header_json)?;
        w.write_all(&(params.entries.len() as u32).to_le_bytes())?;
        for (name, e) in &params.entries {
            write_str(&mut w, name)?;
            write_str(&mut w, e.group.as_str())?;
            w.write_all(&[match e.kind {
                ParamKind::Trainable => 0u8,
                ParamKind::Buffer => 1u8,
            }])?;
            w.write_all(&(e.value.shape.len() as u32).to_le_bytes())?;
            for &d in &e.value.shape {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            for &v in &e.value.data {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        let digest: [u8; 32] = w.hasher.clone().finalize().into();
        w.inner.write_all(&digest)?;
        w.inner.flush()
    })()
    .map_err(|e| Error::io(path, e))
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub fn load_checkpoint(path: &str) -> Result<Checkpoint> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = HashingReader {
        inner: BufReader::new(f),
        hasher: Sha256::new(),
    };
    let info = read_header(&mut r, path)?;

    let count = read_u32(&mut r, path, "tensor count")? as usize;
    let mut params = ParamSet::new();
    let mut last_name: Option<String> = None;
    for _ in 0..count {
        let name = read_str(&mut r, path, "tensor name")?;
        if let Some(prev) = &last_name {
            if *prev >= name {
                return Err(Error::format(
                    path,
                    format!("tensor records out of order: '{}' after '{}'", name, prev),
                ));
            }
        }
        let (group, kind, value) = read_tensor_body(&mut r, path, &name)?;
        match kind {
            ParamKind::Trainable => params.insert(&name, group, value)?,
            ParamKind::Buffer => params.insert_buffer(&name, group, value)?,
        }
        last_name = Some(name);
    }

    let computed = r.digest_so_far();
    let mut stored = [0u8; 32];
    r.inner
        .read_exact(&mut stored)
        .map_err(|_| Error::format(path, "truncated checkpoint: checksum trailer missing"))?;
    if stored != computed {
        return Err(Error::format(path, "checksum mismatch: file is corrupt"));
    }
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::format(path, "trailing bytes after checksum"));
    }

    check_fingerprint_rule(&params, info.vocab_fingerprint.as_deref())?;
    Ok(Checkpoint {
        config: info.config,
        vocab_fingerprint: info.vocab_fingerprint,
        meta: info.meta,
        params,
    })
}

/// Reads only the header: config, fingerprint and metadata. No tensor data is
/// touched, so this works on arbitrarily large files and cannot verify the
/// trailing checksum.
pub fn read_checkpoint_info(path: &str) -> Result<CheckpointInfo> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    read_header(&mut r, path)
}

fn read_header<R: Read>(r: &mut R, path: &str) -> Result<CheckpointInfo> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format(path, "truncated checkpoint: no magic"))?;
    if &magic != MAGIC {
        return Err(Error::format(
            path,
            format!("not a checkpoint file (magic {:?})", magic),
        ));
    }
    let mut vb = [0u8; 2];
    r.read_exact(&mut vb)
        .map_err(|_| Error::format(path, "truncated checkpoint: no version"))?;
    let version = u16::from_le_bytes(vb);
    if version != VERSION {
        return Err(Error::format(
            path,
            format!("unsupported checkpoint version {}, expected {}", version, VERSION),
        ));
    }
    let header_json = read_bytes(r, path, "header")?;
    let header: Header = serde_json::from_slice(&header_json)
        .map_err(|e| Error::format(path, format!("unreadable header JSON: {}", e)))?;
    Ok(CheckpointInfo {
        config: header.config,
        vocab_fingerprint: header.vocab_fingerprint,
        meta: header.meta,
    })
}

fn read_tensor_body<R: Read>(
    r: &mut R,
    path: &str,
    name: &str,
) -> Result<(Group, ParamKind, Tensor<f32>)> {
    let trunc = || Error::format(path, format!("truncated while reading tensor '{}'", name));
    let group_str = read_str(r, path, "group tag").map_err(|_| trunc())?;
    let group = Group::parse(&group_str)?;
    let mut kb = [0u8; 1];
    r.read_exact(&mut kb).map_err(|_| trunc())?;
    let kind = match kb[0] {
        0 => ParamKind::Trainable,
        1 => ParamKind::Buffer,
        other => {
            return Err(Error::format(
                path,
                format!("tensor '{}': unknown kind byte {}", name, other),
            ))
        }
    };
    let rank = read_u32(r, path, "rank").map_err(|_| trunc())? as usize;
    if rank == 0 || rank > 2 {
        return Err(Error::format(
            path,
            format!("tensor '{}': unsupported rank {}", name, rank),
        ));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut len: usize = 1;
    for _ in 0..rank {
        let d = read_u32(r, path, "dim").map_err(|_| trunc())? as usize;
        if d == 0 {
            return Err(Error::format(
                path,
                format!("tensor '{}': zero-sized dimension", name),
            ));
        }
        len = len
            .checked_mul(d)
            .filter(|&n| n <= 1 << 30)
            .ok_or_else(|| {
                Error::format(path, format!("tensor '{}': implausible element count", name))
            })?;
        shape.push(d);
    }
    let mut data = vec![0f32; len];
    let mut buf = [0u8; 4];
    for v in data.iter_mut() {
        r.read_exact(&mut buf).map_err(|_| trunc())?;
        *v = f32::from_le_bytes(buf);
    }
    Ok((group, kind, Tensor::new(shape, data)))
}

fn read_u32<R: Read>(r: &mut R, path: &str, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|_| Error::format(path, format!("truncated checkpoint: no {}", what)))?;
    Ok(u32::from_le_bytes(b))
}

fn read_bytes<R: Read>(r: &mut R, path: &str, what: &str) -> Result<Vec<u8>> {
    let len = read_u32(r, path, what)? as usize;
    if len > 1 << 20 {
        return Err(Error::format(
            path,
            format!("implausible {} length {}", what, len),
        ));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)
        .map_err(|_| Error::format(path, format!("truncated checkpoint: short {}", what)))?;
    Ok(buf)
}

fn read_str<R: Read>(r: &mut R, path: &str, what: &str) -> Result<String> {
    let buf = read_bytes(r, path, what)?;
    String::from_utf8(buf)
        .map_err(|e| Error::format(path, format!("{} is not UTF-8: {}", what, e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seq2seq::model::tiny_config;
    use crate::seq2seq::Model;

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            task: "asr-src".into(),
            epochs: 7,
            dev_metric: Some(31.25),
        }
    }

    fn save_tiny(dir: &std::path::Path, seed: u64) -> (Model<f32>, String) {
        let m: Model<f32> = Model::new(tiny_config(9), seed).unwrap();
        let path = dir.join(format!("m{}.xstc", seed));
        let path = path.to_str().unwrap().to_string();
        save_checkpoint(&m.params, &m.cfg, Some("fp-aaaa"), &meta(), &path).unwrap();
        (m, path)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let (m, path) = save_tiny(dir.path(), 3);
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.vocab_fingerprint.as_deref(), Some("fp-aaaa"));
        assert_eq!(ck.meta, meta());
        assert_eq!(
            serde_json::to_string(&ck.config).unwrap(),
            serde_json::to_string(&m.cfg).unwrap()
        );
        assert_eq!(ck.params.len(), m.params.len());
        for (name, e) in &m.params.entries {
            let le = ck.params.get(name).unwrap();
            assert_eq!(le.value.shape, e.value.shape, "{}", name);
            assert_eq!(le.group, e.group, "{}", name);
            assert_eq!(le.kind, e.kind, "{}", name);
            let a: Vec<u32> = e.value.data.iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = le.value.data.iter().map(|v| v.to_bits()).collect();
            assert_eq!(a, b, "{}", name);
        }
    }

    #[test]
    fn truncation_mid_tensor_names_the_tensor() {
        let dir = tempfile::tempdir().unwrap();
        let (_, path) = save_tiny(dir.path(), 4);
        let bytes = std::fs::read(&path).unwrap();
        // 40 bytes back from the end: past the 32-byte trailer, inside the
        // data of the last tensor record.
        for cut in [bytes.len() - 40, bytes.len() * 6 / 10] {
            std::fs::write(&path, &bytes[..cut]).unwrap();
            let err = load_checkpoint(&path).unwrap_err().to_string();
            assert!(err.contains("truncated"), "cut {}: {}", cut, err);
            assert!(err.contains("tensor '"), "cut {}: {}", cut, err);
        }
    }

    #[test]
    fn flipped_byte_fails_the_checksum() {
        let dir = tempfile::tempdir().unwrap();
        let (_, path) = save_tiny(dir.path(), 5);
        let mut bytes = std::fs::read(&path).unwrap();
        let idx = bytes.len() - 40;
        bytes[idx] ^= 0x40;
        std::fs::write(&path, &bytes).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("checksum"), "{}", err);
    }

    #[test]
    fn header_reads_without_the_tensors() {
        let dir = tempfile::tempdir().unwrap();
        let (m, path) = save_tiny(dir.path(), 6);
        let bytes = std::fs::read(&path).unwrap();
        // Keep the header plus a sliver of the first record.
        std::fs::write(&path, &bytes[..bytes.len() / 3]).unwrap();
        let info = read_checkpoint_info(&path).unwrap();
        assert_eq!(info.vocab_fingerprint.as_deref(), Some("fp-aaaa"));
        assert_eq!(info.meta.epochs, 7);
        assert_eq!(
            serde_json::to_string(&info.config).unwrap(),
            serde_json::to_string(&m.cfg).unwrap()
        );
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn bad_magic_and_version_are_distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (_, path) = save_tiny(dir.path(), 7);
        let good = std::fs::read(&path).unwrap();

        let mut bad = good.clone();
        bad[0] = b'Y';
        std::fs::write(&path, &bad).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("magic"), "{}", err);

        let mut bad = good.clone();
        bad[4] = 9;
        std::fs::write(&path, &bad).unwrap();
        let err = load_checkpoint(&path).unwrap_err().to_string();
        assert!(err.contains("version"), "{}", err);
    }

    #[test]
    fn fingerprint_presence_matches_stored_layers() {
        let dir = tempfile::tempdir().unwrap();
        let m: Model<f32> = Model::new(tiny_config(9), 8).unwrap();
        let path = dir.path().join("bad.xstc");
        let path = path.to_str().unwrap();
        // Full model without a fingerprint: rejected.
        assert!(save_checkpoint(&m.params, &m.cfg, None, &meta(), path).is_err());

        // Encoder-only set with a fingerprint: also rejected.
        let mut enc_only = ParamSet::new();
        for (name, e) in &m.params.entries {
            if matches!(e.group, Group::Cnn | Group::EncoderLstm) {
                enc_only.insert(name, e.group, e.value.clone()).unwrap();
            }
        }
        assert!(save_checkpoint(&enc_only, &m.cfg, Some("fp"), &meta(), path).is_err());
        // And accepted without one.
        save_checkpoint(&enc_only, &m.cfg, None, &meta(), path).unwrap();
        let back = load_checkpoint(path).unwrap();
        assert_eq!(back.params.len(), enc_only.len());
        assert_eq!(back.vocab_fingerprint, None);
    }

    #[test]
    fn identical_saves_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let (_, p1) = save_tiny(dir.path(), 11);
        let m: Model<f32> = Model::new(tiny_config(9), 11).unwrap();
        let p2 = dir.path().join("again.xstc");
        let p2 = p2.to_str().unwrap();
        save_checkpoint(&m.params, &m.cfg, Some("fp-aaaa"), &meta(), p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn non_finite_tensor_refused() {
        let dir = tempfile::tempdir().unwrap();
        let mut m: Model<f32> = Model::new(tiny_config(9), 12).unwrap();
        m.params.get_mut("output.bias").unwrap().value.data[0] = f32::NAN;
        let path = dir.path().join("nan.xstc");
        let err = save_checkpoint(&m.params, &m.cfg, Some("fp"), &meta(), path.to_str().unwrap())
            .unwrap_err()
            .to_string();
        assert!(err.contains("output.bias"), "{}", err);
    }
}
