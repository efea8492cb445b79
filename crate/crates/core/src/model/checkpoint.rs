//! Checkpoint file: one ASCII header line
//! `TSNET v1 <in_channels> <n_params> <adam_t> <lr> <beta1> <beta2> <eps>`
//! followed by three little-endian f64 blocks of `n_params` values each:
//! parameters, Adam first moments, Adam second moments.

use std::path::Path;

use super::{AdamState, TinySegNet};
use crate::{Error, Result};

const MAGIC: &str = "TSNET";
const VERSION: &str = "v1";

pub fn encode_checkpoint(net: &TinySegNet, adam: &AdamState) -> Result<Vec<u8>> {
    let n = net.params().len();
    if adam.m.len() != n || adam.v.len() != n {
        return Err(Error::Shape(format!(
            "adam state holds {} moments, net has {n} parameters",
            adam.m.len()
        )));
    }
    let header = format!(
        "{MAGIC} {VERSION} {} {n} {} {} {} {} {}\n",
        net.in_channels(),
        adam.t,
        adam.lr,
        adam.beta1,
        adam.beta2,
        adam.eps
    );
    let mut out = Vec::with_capacity(header.len() + 24 * n);
    out.extend_from_slice(header.as_bytes());
    for block in [net.params(), &adam.m, &adam.v] {
        for v in block {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(TinySegNet, AdamState)> {
    let bad = |msg: String| Error::Format(msg);
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("missing checkpoint header".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("header is not UTF-8".into()))?;
    let tokens: Vec<&str> = header.split_ascii_whitespace().collect();
    if tokens.len() != 9 || tokens[0] != MAGIC {
        return Err(bad(format!("not a {MAGIC} header: {header:?}")));
    }
    if tokens[1] != VERSION {
        return Err(bad(format!("unsupported checkpoint version {}", tokens[1])));
    }
    let int = |s: &str| s.parse::<u64>().map_err(|_| bad(format!("bad integer {s:?}")));
    let real = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
    let in_channels = int(tokens[2])? as usize;
    let n = int(tokens[3])? as usize;
    let t = int(tokens[4])?;
    let (lr, beta1, beta2, eps) =
        (real(tokens[5])?, real(tokens[6])?, real(tokens[7])?, real(tokens[8])?);

    let payload = &bytes[nl + 1..];
    if payload.len() != 24 * n {
        return Err(bad(format!(
            "payload has {} bytes, header promises {}",
            payload.len(),
            24 * n
        )));
    }
    let mut blocks = payload
        .chunks_exact(8 * n.max(1))
        .map(|c| c.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect());
    let params: Vec<f64> = blocks.next().unwrap_or_default();
    let m = blocks.next().unwrap_or_default();
    let v = blocks.next().unwrap_or_default();
    if params.iter().any(|p| !p.is_finite()) {
        return Err(bad("non-finite parameter".into()));
    }
    let net = TinySegNet::from_params(in_channels, params).map_err(|e| bad(e.to_string()))?;
    Ok((net, AdamState { m, v, t, lr, beta1, beta2, eps }))
}

pub fn save_checkpoint(path: &Path, net: &TinySegNet, adam: &AdamState) -> Result<()> {
    std::fs::write(path, encode_checkpoint(net, adam)?)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(TinySegNet, AdamState)> {
    decode_checkpoint(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trained() -> (TinySegNet, AdamState) {
        let mut net = TinySegNet::new(1, 3).unwrap();
        let mut adam = AdamState::new(net.params().len());
        let grads = super::super::Gradients(
            (0..net.params().len()).map(|i| (i as f64 * 0.1).sin()).collect(),
        );
        net.adam_step(&mut adam, &grads).unwrap();
        (net, adam)
    }

    #[test]
    fn round_trip_is_exact() {
        let (net, adam) = trained();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        save_checkpoint(&path, &net, &adam).unwrap();
        let (net2, adam2) = load_checkpoint(&path).unwrap();
        assert_eq!(net2.params(), net.params());
        assert_eq!(adam2, adam);
    }

    #[test]
    fn rejects_corrupt_files() {
        let (net, adam) = trained();
        let bytes = encode_checkpoint(&net, &adam).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong = bytes.clone();
        wrong[0] = b'X';
        assert!(decode_checkpoint(&wrong).is_err());
        assert!(decode_checkpoint(b"TSNET v2 1 0 0 0.001 0.9 0.999 1e-8\n").is_err());
    }
}
