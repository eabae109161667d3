//! On-disk layout: `<name>.pairs.bin` holds the 8-byte magic, a `u32`
//! version, `u64` pair count, `u32` state dimension `n` and `u32` load-bus
//! count `N_L`, followed by little-endian `f64` rows `[x_k | x_next | loads]`.
//! `<name>.manifest.json` carries provenance and the per-scenario pair counts.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Dataset, DatasetManifest};
use crate::error::{Error, Result};

pub const PAIRS_MAGIC: &[u8; 8] = b"GNPAIRS\0";
pub const PAIRS_VERSION: u32 = 1;

pub fn write_dataset(data: &Dataset, dir: &Path, name: &str) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(format!("{name}.pairs.bin")))?);
    w.write_all(PAIRS_MAGIC)?;
    w.write_all(&PAIRS_VERSION.to_le_bytes())?;
    w.write_all(&(data.len() as u64).to_le_bytes())?;
    w.write_all(&(data.manifest.n_state as u32).to_le_bytes())?;
    w.write_all(&(data.manifest.n_loads as u32).to_le_bytes())?;
    for v in data.raw_rows() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    let mut m = serde_json::to_string_pretty(&data.manifest)?;
    m.push('\n');
    std::fs::write(dir.join(format!("{name}.manifest.json")), m)?;
    Ok(())
}

fn take<const N: usize>(r: &mut impl Read) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format("truncated pairs header".into()))?;
    Ok(buf)
}

pub fn read_dataset(dir: &Path, name: &str) -> Result<Dataset> {
    let manifest: DatasetManifest = serde_json::from_str(&std::fs::read_to_string(
        dir.join(format!("{name}.manifest.json")),
    )?)?;
    let mut r = BufReader::new(File::open(dir.join(format!("{name}.pairs.bin")))?);
    if &take::<8>(&mut r)? != PAIRS_MAGIC {
        return Err(Error::Format("not a pairs file".into()));
    }
    let version = u32::from_le_bytes(take(&mut r)?);
    if version != PAIRS_VERSION {
        return Err(Error::Format(format!(
            "unsupported pairs version {version}"
        )));
    }
    let n_pairs = u64::from_le_bytes(take(&mut r)?) as usize;
    let n = u32::from_le_bytes(take(&mut r)?) as usize;
    let n_loads = u32::from_le_bytes(take(&mut r)?) as usize;
    if n_pairs != manifest.n_pairs || n != manifest.n_state || n_loads != manifest.n_loads {
        return Err(Error::Format("pairs header disagrees with manifest".into()));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let expected = n_pairs * (2 * n + 2 * n_loads) * 8;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "pairs body has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    let rows = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Dataset::from_parts(manifest, rows)
}

/// Human-readable dump, one pair per line.
pub fn export_csv<W: Write>(data: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let n = data.n_state();
    let mut header = vec!["scenario_id".to_string(), "k".to_string()];
    header.extend((0..n).map(|j| format!("x_k{j}")));
    header.extend((0..n).map(|j| format!("x_next{j}")));
    header.extend((0..2 * data.manifest.n_loads).map(|j| format!("load{j}")));
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.len() {
        let p = data.pair(i);
        let mut rec = vec![p.scenario_id.to_string(), p.k.to_string()];
        rec.extend(
            p.x_k
                .iter()
                .chain(&p.x_next)
                .chain(&p.loads)
                .map(|v| v.to_string()),
        );
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
