//! On-disk cache of orthonormal bases.
//!
//! One file per (weight, digits, size). The format is plain text:
//!
//! ```text
//! oppq-cache 1
//! key <key>
//! sha256 <hex digest of everything after this line>
//! ordering <powers|antidiagonal>
//! rows <n>
//! <bits>:<value> <bits>:<value> ...      (one line per polynomial)
//! ```
//!
//! Values use MPFR's shortest round-trip decimal rendering together with their
//! precision, so a reload restores the identical binary numbers on any
//! platform. Entries failing the checksum are deleted with a warning.

use std::fs;
use std::path::{Path, PathBuf};

use oppq_core::precision::format_exact;
use oppq_core::weight::{BasisTable, MonomialOrdering, WeightSpec};
use oppq_core::Real;
use rug::Float;
use sha2::{Digest, Sha256};

use crate::CliError;

const MAGIC: &str = "oppq-cache 1";

pub struct BasisCache {
    dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EntryStatus {
    pub file: String,
    pub key: Option<String>,
    pub bytes: u64,
    pub valid: bool,
}

pub fn basis_key(weight: &WeightSpec, digits: u32, n_max: usize) -> String {
    format!("basis|{}|digits={digits}|n_max={n_max}", weight.id())
}

impl BasisCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        BasisCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        let digest = hex::encode(Sha256::digest(key.as_bytes()));
        self.dir.join(format!("basis-{}.txt", &digest[..24]))
    }

    pub fn load(&self, key: &str) -> Result<Option<BasisTable>, CliError> {
        let path = self.path_for(key);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(CliError::io(&path, e)),
        };
        match decode(&text) {
            Ok((k, table)) if k == key => Ok(Some(table)),
            Ok(_) => Ok(None),
            Err(why) => {
                eprintln!("warning: dropping corrupted cache entry {}: {why}", path.display());
                fs::remove_file(&path).map_err(|e| CliError::io(&path, e))?;
                Ok(None)
            }
        }
    }

    pub fn store(&self, key: &str, table: &BasisTable) -> Result<(), CliError> {
        fs::create_dir_all(&self.dir).map_err(|e| CliError::io(&self.dir, e))?;
        let path = self.path_for(key);
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, encode(key, table)).map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))
    }

    fn entries(&self) -> Result<Vec<PathBuf>, CliError> {
        let read = match fs::read_dir(&self.dir) {
            Ok(r) => r,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(CliError::io(&self.dir, e)),
        };
        let mut out = Vec::new();
        for entry in read {
            let path = entry.map_err(|e| CliError::io(&self.dir, e))?.path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
            if name.starts_with("basis-") && name.ends_with(".txt") {
                out.push(path);
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn status(&self) -> Result<Vec<EntryStatus>, CliError> {
        let mut out = Vec::new();
        for path in self.entries()? {
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
            let decoded = decode(&text);
            out.push(EntryStatus {
                file: path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
                key: decoded.as_ref().ok().map(|(k, _)| k.clone()),
                bytes: text.len() as u64,
                valid: decoded.is_ok(),
            });
        }
        Ok(out)
    }

    /// Removes every entry; returns how many were removed.
    pub fn clear(&self) -> Result<usize, CliError> {
        let entries = self.entries()?;
        for path in &entries {
            fs::remove_file(path).map_err(|e| CliError::io(path, e))?;
        }
        Ok(entries.len())
    }
}

fn encode(key: &str, table: &BasisTable) -> String {
    let mut body = String::new();
    let ordering = match table.ordering() {
        MonomialOrdering::Powers => "powers",
        MonomialOrdering::Antidiagonal => "antidiagonal",
    };
    body.push_str(&format!("ordering {ordering}\nrows {}\n", table.rows().len()));
    for row in table.rows() {
        let line: Vec<String> = row
            .iter()
            .map(|x| format!("{}:{}", x.prec(), format_exact(x)))
            .collect();
        body.push_str(&line.join(" "));
        body.push('\n');
    }
    let digest = hex::encode(Sha256::digest(body.as_bytes()));
    format!("{MAGIC}\nkey {key}\nsha256 {digest}\n{body}")
}

fn decode(text: &str) -> Result<(String, BasisTable), String> {
    let mut parts = text.splitn(4, '\n');
    if parts.next() != Some(MAGIC) {
        return Err("unknown format version".into());
    }
    let key = parts
        .next()
        .and_then(|l| l.strip_prefix("key "))
        .ok_or("missing key line")?
        .to_string();
    let digest = parts
        .next()
        .and_then(|l| l.strip_prefix("sha256 "))
        .ok_or("missing checksum line")?;
    let body = parts.next().ok_or("missing body")?;
    if hex::encode(Sha256::digest(body.as_bytes())) != digest {
        return Err("checksum mismatch".into());
    }
    let mut lines = body.lines();
    let ordering = match lines.next() {
        Some("ordering powers") => MonomialOrdering::Powers,
        Some("ordering antidiagonal") => MonomialOrdering::Antidiagonal,
        _ => return Err("bad ordering line".into()),
    };
    let rows: usize = lines
        .next()
        .and_then(|l| l.strip_prefix("rows "))
        .and_then(|n| n.parse().ok())
        .ok_or("bad row count")?;
    let mut xi = Vec::with_capacity(rows);
    for line in lines.by_ref().take(rows) {
        let row = line
            .split(' ')
            .map(parse_value)
            .collect::<Result<Vec<Real>, String>>()?;
        xi.push(row);
    }
    if xi.len() != rows || lines.next().is_some() {
        return Err("row count mismatch".into());
    }
    let table = BasisTable::from_parts(xi, ordering).map_err(|e| e.to_string())?;
    Ok((key, table))
}

fn parse_value(item: &str) -> Result<Real, String> {
    let (bits, value) = item.split_once(':').ok_or("bad value")?;
    let bits: u32 = bits.parse().map_err(|_| "bad precision")?;
    if !(rug::float::prec_min()..=rug::float::prec_max()).contains(&bits) {
        return Err("bad precision".into());
    }
    let parsed = Float::parse(value).map_err(|e| e.to_string())?;
    Ok(Float::with_val(bits, parsed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use oppq_core::weight::build_basis;
    use oppq_core::Precision;

    #[test]
    fn round_trip_is_bit_exact() {
        let p = Precision::new(40).unwrap();
        let w = WeightSpec::qzm("0.2".parse().unwrap(), "0.5".parse().unwrap());
        let table = build_basis(&w, 9, p).unwrap();
        let (key, back) = decode(&encode("k", &table)).unwrap();
        assert_eq!(key, "k");
        assert_eq!(back.rows(), table.rows());
        for (a, b) in back.rows().iter().flatten().zip(table.rows().iter().flatten()) {
            assert_eq!(a.prec(), b.prec());
        }
    }

    #[test]
    fn tampering_is_detected() {
        let p = Precision::new(40).unwrap();
        let table = build_basis(&WeightSpec::HermiteHalfline, 4, p).unwrap();
        let text = encode("k", &table);
        let i = text.rfind('1').unwrap();
        let mut bad = text.clone();
        bad.replace_range(i..i + 1, "2");
        assert!(decode(&bad).is_err());
        assert!(decode(&text.replace(MAGIC, "oppq-cache 0")).is_err());
    }
}
