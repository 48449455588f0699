//! Binary checkpoint: vocabulary plus every parameter array.
//!
//! Layout (little endian): magic `SSIMCKPT`, `u32` version, `u32` dim,
//! `u32` vocab size, then each token as `u32` byte length + UTF-8, then the
//! embeddings, projection, bias, head and head bias as raw `f64` bits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{EncoderError, EncoderParams, Result, Vocab, SPECIAL_TOKENS};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SSIMCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, vocab: &Vocab, params: &EncoderParams) -> Result<()> {
    params.check_shape()?;
    if vocab.len() != params.vocab_size() {
        return Err(EncoderError::Shape(format!(
            "vocabulary of {} tokens but {} embedding rows",
            vocab.len(),
            params.vocab_size()
        )));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    for v in [CHECKPOINT_VERSION, params.dim() as u32, vocab.len() as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    for tok in vocab.tokens() {
        w.write_all(&(tok.len() as u32).to_le_bytes())?;
        w.write_all(tok.as_bytes())?;
    }
    for v in params.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64s(r: &mut impl Read, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut b = [0u8; 8];
    for _ in 0..n {
        r.read_exact(&mut b)?;
        out.push(f64::from_le_bytes(b));
    }
    Ok(out)
}

pub fn load_checkpoint(path: &Path) -> Result<(Vocab, EncoderParams)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(EncoderError::Format("not a sentsim checkpoint".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(EncoderError::Format(format!("unsupported checkpoint version {version}")));
    }
    let dim = read_u32(&mut r)? as usize;
    let vocab_size = read_u32(&mut r)? as usize;
    if dim < 2 {
        return Err(EncoderError::Dimension(dim));
    }
    let mut tokens = Vec::with_capacity(vocab_size);
    for _ in 0..vocab_size {
        let len = read_u32(&mut r)? as usize;
        let mut buf = vec![0u8; len];
        r.read_exact(&mut buf)?;
        tokens.push(String::from_utf8(buf).map_err(|e| EncoderError::Format(e.to_string()))?);
    }
    if tokens.len() < SPECIAL_TOKENS.len() || tokens[..SPECIAL_TOKENS.len()] != SPECIAL_TOKENS {
        return Err(EncoderError::Format("special tokens missing".into()));
    }
    let vocab = Vocab::from_tokens(tokens.into_iter().skip(SPECIAL_TOKENS.len()))?;

    let shape_err = |e: ndarray::ShapeError| EncoderError::Format(e.to_string());
    let embeddings = Array2::from_shape_vec((vocab_size, dim), read_f64s(&mut r, vocab_size * dim)?)
        .map_err(shape_err)?;
    let projection = Array2::from_shape_vec((dim, dim), read_f64s(&mut r, dim * dim)?).map_err(shape_err)?;
    let bias = Array1::from(read_f64s(&mut r, dim)?);
    let head = Array1::from(read_f64s(&mut r, dim)?);
    let head_bias = read_f64s(&mut r, 1)?[0];
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(EncoderError::Format(format!("{} trailing bytes", rest.len())));
    }
    Ok((
        vocab,
        EncoderParams {
            embeddings,
            projection,
            bias,
            head,
            head_bias,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let vocab = Vocab::from_tokens(["a", "plane", "ünïcode"]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = EncoderParams::init(vocab.len(), 5, &mut rng).unwrap();
        p.head.mapv_inplace(|_| rng.random::<f64>() * 1e-300);
        p.head_bias = -0.0;
        p.bias[1] = f64::MIN_POSITIVE / 3.0;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        save_checkpoint(&path, &vocab, &p).unwrap();
        let (v2, p2) = load_checkpoint(&path).unwrap();
        assert_eq!(v2, vocab);
        let bits = |q: &EncoderParams| q.values().map(f64::to_bits).collect::<Vec<_>>();
        assert_eq!(bits(&p2), bits(&p));
    }

    #[test]
    fn rejects_foreign_and_truncated_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOTACKPTxxxx").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(EncoderError::Format(_))));

        let vocab = Vocab::from_tokens(["a"]).unwrap();
        let p = EncoderParams::init(vocab.len(), 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        save_checkpoint(&path, &vocab, &p).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(load_checkpoint(&path).is_err());
        assert!(load_checkpoint(&dir.path().join("missing.ckpt")).is_err());
    }

    #[test]
    fn vocab_size_must_match() {
        let vocab = Vocab::from_tokens(["a"]).unwrap();
        let p = EncoderParams::zeros(7, 2);
        let dir = tempfile::tempdir().unwrap();
        assert!(save_checkpoint(&dir.path().join("x"), &vocab, &p).is_err());
    }
}
