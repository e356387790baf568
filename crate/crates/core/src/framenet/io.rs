//! Binary model container.
//!
//! Layout (little-endian): magic `SSNET`, u32 version, u32 d, u32 H, u32 C,
//! the network parameters as f32 in [`MultiTaskNet::params`] order, then the
//! class prior as C f64 values.

use std::fs;
use std::path::Path;

use super::{ClassPrior, FrameScorer, MultiTaskNet};
use crate::error::{Error, Result};

const MAGIC: &[u8; 5] = b"SSNET";
const VERSION: u32 = 1;

pub fn save_scorer(path: &Path, scorer: &FrameScorer) -> Result<()> {
    let net = &scorer.net;
    let mut out = Vec::with_capacity(21 + net.params().len() * 4 + scorer.prior.p.len() * 8);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, net.dim() as u32, net.hidden() as u32, net.num_classes() as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &p in net.params() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    for &p in &scorer.prior.p {
        out.extend_from_slice(&p.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_scorer(path: &Path) -> Result<FrameScorer> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::parse(path, 0, m);
    if !bytes.starts_with(MAGIC) || bytes.len() < MAGIC.len() + 16 {
        return Err(bad("not a model file (bad magic or truncated header)".into()));
    }
    let word = |i: usize| {
        let o = MAGIC.len() + 4 * i;
        u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize
    };
    if word(0) != VERSION as usize {
        return Err(bad(format!("unsupported model version {}", word(0))));
    }
    let (d, h, c) = (word(1), word(2), word(3));
    let n = MultiTaskNet::num_params(d, h, c);
    let body = &bytes[MAGIC.len() + 16..];
    if body.len() != n * 4 + c * 8 {
        return Err(bad(format!(
            "model body has {} bytes, dims d={d} H={h} C={c} need {}",
            body.len(),
            n * 4 + c * 8
        )));
    }
    let (params, prior) = body.split_at(n * 4);
    let params = params
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    let prior: Vec<f64> = prior
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if prior.iter().any(|p| !(*p > 0.0)) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(bad("class prior is not a probability vector".into()));
    }
    let net = MultiTaskNet::from_params(d, h, c, params).map_err(|e| bad(e.to_string()))?;
    let flagged = vec![false; c];
    FrameScorer::new(net, ClassPrior { p: prior, flagged }).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_rounds_to_f32() {
        let net = MultiTaskNet::new_random(3, 4, 2, 5).unwrap();
        let scorer = FrameScorer::new(net.clone(), ClassPrior::from_counts(&[3.0, 1.0]).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.bin");
        save_scorer(&p, &scorer).unwrap();
        let back = load_scorer(&p).unwrap();
        assert_eq!(back.prior.p, scorer.prior.p);
        for (a, b) in back.net.params().iter().zip(net.params()) {
            assert_eq!(*a, *b as f32 as f64);
        }
        // second save of the loaded model is byte-identical
        let q = dir.path().join("again.bin");
        save_scorer(&q, &back).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap());
    }

    #[test]
    fn corrupt_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("model.bin");
        fs::write(&p, b"SSNET\x01\x00\x00\x00garbage").unwrap();
        let err = load_scorer(&p).unwrap_err();
        assert!(err.to_string().contains("model.bin"), "{err}");
    }
}
