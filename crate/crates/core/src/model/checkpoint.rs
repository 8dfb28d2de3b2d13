//! Versioned binary parameter container: little-endian tensors with shape
//! headers. The fixed Fourier matrix travels under a reserved name.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::params::{ModelConfig, ParamStore};
use super::tensor::Tensor;

const MAGIC: &[u8; 4] = b"KPDF";
const VERSION: u32 = 1;
const FOURIER_NAME: &str = "fixed.fourier";

pub fn save_params(store: &ParamStore, path: &Path) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let count = store.names().count() as u32 + 1;
    w.write_all(&count.to_le_bytes())?;
    write_tensor(&mut w, FOURIER_NAME, &store.fourier)?;
    for (name, tensor) in store.iter() {
        write_tensor(&mut w, name, tensor)?;
    }
    w.flush()
}

fn write_tensor<W: Write>(w: &mut W, name: &str, t: &Tensor) -> io::Result<()> {
    let bytes = name.as_bytes();
    w.write_all(&(bytes.len() as u32).to_le_bytes())?;
    w.write_all(bytes)?;
    w.write_all(&(t.rows as u32).to_le_bytes())?;
    w.write_all(&(t.cols as u32).to_le_bytes())?;
    for v in &t.data {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_params(path: &Path, config: &ModelConfig) -> io::Result<ParamStore> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a parameter checkpoint"));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(bad(&format!("unsupported checkpoint version {version}")));
    }
    let count = read_u32(&mut r)? as usize;

    // seed a reference store to validate names and shapes against
    let mut store = ParamStore::init(config, 0);
    let expected: Vec<String> = store.names().cloned().collect();
    let mut seen = 0usize;
    for _ in 0..count {
        let (name, tensor) = read_tensor(&mut r)?;
        if name == FOURIER_NAME {
            if tensor.shape() != store.fourier.shape() {
                return Err(bad("fourier matrix shape mismatch"));
            }
            store.fourier = tensor;
            continue;
        }
        if !expected.contains(&name) {
            return Err(bad(&format!("unexpected tensor {name:?}")));
        }
        if store.get(&name).shape() != tensor.shape() {
            return Err(bad(&format!("shape mismatch in {name:?}")));
        }
        *store.get_mut(&name) = tensor;
        seen += 1;
    }
    if seen != expected.len() {
        return Err(bad(&format!(
            "checkpoint holds {seen} tensors, config expects {}",
            expected.len()
        )));
    }
    Ok(store)
}

fn read_tensor<R: Read>(r: &mut R) -> io::Result<(String, Tensor)> {
    let name_len = read_u32(r)? as usize;
    if name_len > 4096 {
        return Err(bad("tensor name too long"));
    }
    let mut name = vec![0u8; name_len];
    r.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| bad("tensor name not utf-8"))?;
    let rows = read_u32(r)? as usize;
    let cols = read_u32(r)? as usize;
    let mut data = vec![0.0f64; rows * cols];
    let mut buf = [0u8; 8];
    for v in data.iter_mut() {
        r.read_exact(&mut buf)?;
        *v = f64::from_le_bytes(buf);
    }
    Ok((name, Tensor::from_vec(rows, cols, data)))
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn bad(msg: &str) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_every_bit() {
        let cfg = ModelConfig::tiny();
        let store = ParamStore::init(&cfg, 42);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        save_params(&store, &path).unwrap();
        let loaded = load_params(&path, &cfg).unwrap();
        for (name, t) in store.iter() {
            let l = loaded.get(name);
            assert_eq!(t.shape(), l.shape());
            for (a, b) in t.data.iter().zip(&l.data) {
                assert_eq!(a.to_bits(), b.to_bits(), "{name}");
            }
        }
        assert_eq!(store.fourier, loaded.fourier);
    }

    #[test]
    fn wrong_config_is_rejected() {
        let store = ParamStore::init(&ModelConfig::tiny(), 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("params.bin");
        save_params(&store, &path).unwrap();
        let other = ModelConfig::default();
        assert!(load_params(&path, &other).is_err());
    }
}
