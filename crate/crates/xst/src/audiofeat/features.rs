use std::io::{BufReader, BufWriter, Read, Write};

use super::{FeatureSequence, NUM_CEPS};
use crate::numcore::Tensor;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"XSTF";
const VERSION: u16 = 1;

/// Binary feature archive: per utterance, magic "XSTF", version u16, the
/// utterance and speaker ids as u32-length-prefixed UTF-8, u32 frame count,
/// u32 dims, then the frames as little-endian f32. Records are simply
/// concatenated.
pub fn write_features(path: &str, feats: &[FeatureSequence]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for fs in feats {
        fs.validate()?;
        write_record(&mut w, fs).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

fn write_record<W: Write>(w: &mut W, fs: &FeatureSequence) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_string(w, &fs.utterance_id)?;
    write_string(w, &fs.speaker_id)?;
    w.write_all(&(fs.frames.shape[0] as u32).to_le_bytes())?;
    w.write_all(&(fs.frames.shape[1] as u32).to_le_bytes())?;
    for &v in &fs.frames.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn write_string<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

pub fn read_features(path: &str) -> Result<Vec<FeatureSequence>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let mut out = Vec::new();
    loop {
        let mut magic = [0u8; 4];
        match r.read_exact(&mut magic) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(Error::io(path, e)),
        }
        if &magic != MAGIC {
            return Err(Error::format(path, format!("bad magic {:?}", magic)));
        }
        let version = read_u16(&mut r, path)?;
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {}", version)));
        }
        let utterance_id = read_string(&mut r, path)?;
        let speaker_id = read_string(&mut r, path)?;
        let t = read_u32(&mut r, path)? as usize;
        let dims = read_u32(&mut r, path)? as usize;
        if dims != NUM_CEPS {
            return Err(Error::format(
                path,
                format!("utterance {}: {} dims, expected {}", utterance_id, dims, NUM_CEPS),
            ));
        }
        let mut data = vec![0f32; t * dims];
        let mut buf = [0u8; 4];
        for v in data.iter_mut() {
            r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
            *v = f32::from_le_bytes(buf);
        }
        let fs = FeatureSequence {
            utterance_id,
            speaker_id,
            frames: Tensor::matrix(t, dims, data),
            frame_shift_ms: 10.0,
            duration_seconds: 0.025 + 0.010 * (t.saturating_sub(1)) as f64,
        };
        fs.validate()?;
        out.push(fs);
    }
    Ok(out)
}

fn read_u16<R: Read>(r: &mut R, path: &str) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R, path: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_le_bytes(b))
}

fn read_string<R: Read>(r: &mut R, path: &str) -> Result<String> {
    let len = read_u32(r, path)? as usize;
    if len > 1 << 20 {
        return Err(Error::format(path, format!("implausible string length {}", len)));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    String::from_utf8(buf).map_err(|e| Error::format(path, format!("invalid UTF-8: {}", e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(utt: &str, spk: &str, t: usize, fill: f32) -> FeatureSequence {
        FeatureSequence {
            utterance_id: utt.to_string(),
            speaker_id: spk.to_string(),
            frames: Tensor::matrix(t, NUM_CEPS, (0..t * NUM_CEPS).map(|i| fill + i as f32).collect()),
            frame_shift_ms: 10.0,
            duration_seconds: 0.025 + 0.010 * (t as f64 - 1.0),
        }
    }

    #[test]
    fn archive_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.xstf");
        let feats = vec![seq("utt-1", "spk-a", 5, 0.5), seq("utt-2", "spk-b", 9, -3.0)];
        write_features(path.to_str().unwrap(), &feats).unwrap();
        let back = read_features(path.to_str().unwrap()).unwrap();
        assert_eq!(back.len(), 2);
        for (a, b) in feats.iter().zip(back.iter()) {
            assert_eq!(a.utterance_id, b.utterance_id);
            assert_eq!(a.speaker_id, b.speaker_id);
            assert_eq!(a.frames.data, b.frames.data);
        }
    }

    #[test]
    fn corrupt_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.xstf");
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(read_features(path.to_str().unwrap()).is_err());
    }

    #[test]
    fn wrong_dims_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("feats.xstf");
        let mut bad = seq("u", "s", 2, 0.0);
        bad.frames = Tensor::matrix(2, 5, vec![0.0; 10]);
        assert!(write_features(path.to_str().unwrap(), &[bad]).is_err());
    }
}
