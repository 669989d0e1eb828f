//! `.snap` and `.manifest` files.
//!
//! A snapshot file is a UTF-8 header of `key=value` lines, one blank line,
//! then the parameters as little-endian IEEE-754 `f64` values:
//!
//! ```text
//! format_version=1
//! layer_sizes=2,32,32,2
//! activation=relu
//! dropout_rate=0
//! cycle_index=3
//! iteration=300
//! train_loss=0.2178830917366041
//! config_digest=5f0c...(32 hex digits)
//!
//! <param_count * 8 bytes>
//! ```
//!
//! A manifest lists the snapshot files of a run in chronological order,
//! relative to the manifest's directory.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use crate::nn::{ActivationKind, ModelSpec, ParamVector};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const SNAPSHOT_EXT: &str = "snap";
pub const MANIFEST_EXT: &str = "manifest";

/// 16-byte digest of a canonical training configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ConfigDigest(pub [u8; 16]);

impl fmt::Display for ConfigDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl ConfigDigest {
    /// Digest of an ordered list of digests, for manifests assembled from several runs.
    pub fn combine(parts: &[ConfigDigest]) -> Self {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for p in parts {
            hasher.update(p.0);
        }
        let hash = hasher.finalize();
        let mut out = [0u8; 16];
        out.copy_from_slice(&hash[..16]);
        ConfigDigest(out)
    }

    pub fn parse_hex(s: &str) -> Result<Self> {
        let bytes = hex::decode(s).map_err(|e| Error::format("config_digest", e.to_string()))?;
        let arr: [u8; 16] = bytes
            .try_into()
            .map_err(|_| Error::format("config_digest", "expected 32 hex digits"))?;
        Ok(ConfigDigest(arr))
    }
}

/// One saved parameter vector with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotRecord<T> {
    pub spec: ModelSpec,
    pub params: ParamVector<T>,
    pub cycle_index: usize,
    pub iteration: usize,
    pub train_loss: f64,
    pub config_digest: ConfigDigest,
}

/// Chronological list of the snapshots of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config_digest: ConfigDigest,
    /// Snapshot file names, relative to the manifest directory.
    pub snapshots: Vec<String>,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

fn join<T: fmt::Display>(values: &[T]) -> String {
    values.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

pub fn encode_snapshot(record: &SnapshotRecord<f64>) -> Vec<u8> {
    let spec = &record.spec;
    let header = format!(
        "format_version={FORMAT_VERSION}\n\
         layer_sizes={}\n\
         activation={}\n\
         dropout_rate={}\n\
         cycle_index={}\n\
         iteration={}\n\
         train_loss={}\n\
         config_digest={}\n\n",
        join(spec.layer_sizes()),
        spec.activation().name(),
        spec.dropout_rate(),
        record.cycle_index,
        record.iteration,
        record.train_loss,
        record.config_digest,
    );
    let mut bytes = header.into_bytes();
    bytes.reserve(record.params.len() * 8);
    for v in record.params.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn write_snapshot(record: &SnapshotRecord<f64>, path: &Path) -> Result<()> {
    fs::write(path, encode_snapshot(record)).map_err(|e| Error::storage(path, e))
}

/// Parses `key=value` lines; rejects duplicates and keys outside `allowed`.
fn header_map<'a>(text: &'a str, allowed: &[&str]) -> Result<BTreeMap<&'a str, &'a str>> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format("header", format!("line `{line}` is not key=value")))?;
        if !allowed.contains(&key) {
            return Err(Error::format(key, "unknown header key"));
        }
        if map.insert(key, value).is_some() {
            return Err(Error::format(key, "duplicate header key"));
        }
    }
    Ok(map)
}

fn field<'a>(map: &BTreeMap<&str, &'a str>, key: &str) -> Result<&'a str> {
    map.get(key).copied().ok_or_else(|| Error::format(key, "missing"))
}

fn parse_field<V: std::str::FromStr>(map: &BTreeMap<&str, &str>, key: &str) -> Result<V> {
    let raw = field(map, key)?;
    raw.parse()
        .map_err(|_| Error::format(key, format!("cannot parse `{raw}`")))
}

fn check_version(map: &BTreeMap<&str, &str>) -> Result<()> {
    let version: u32 = parse_field(map, "format_version")?;
    if version != FORMAT_VERSION {
        return Err(Error::format(
            "format_version",
            format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    Ok(())
}

const SNAPSHOT_KEYS: [&str; 8] = [
    "format_version",
    "layer_sizes",
    "activation",
    "dropout_rate",
    "cycle_index",
    "iteration",
    "train_loss",
    "config_digest",
];

pub fn decode_snapshot(bytes: &[u8]) -> Result<SnapshotRecord<f64>> {
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| Error::format("header", "no blank line terminating the header"))?;
    let header = std::str::from_utf8(&bytes[..split])
        .map_err(|_| Error::format("header", "header is not UTF-8"))?;
    let payload = &bytes[split + 2..];
    let map = header_map(header, &SNAPSHOT_KEYS)?;
    check_version(&map)?;

    let layer_sizes = field(&map, "layer_sizes")?
        .split(',')
        .map(|s| s.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|_| Error::format("layer_sizes", "expected comma-separated integers"))?;
    let activation = field(&map, "activation")?;
    if ActivationKind::parse(activation).is_none() {
        return Err(Error::format("activation", format!("unknown activation `{activation}`")));
    }
    let dropout_rate: f64 = parse_field(&map, "dropout_rate")?;
    let spec = ModelSpec::new(layer_sizes, dropout_rate)
        .map_err(|e| Error::format("layer_sizes", e.to_string()))?;
    let cycle_index: usize = parse_field(&map, "cycle_index")?;
    if cycle_index == 0 {
        return Err(Error::format("cycle_index", "must be >= 1"));
    }
    let iteration: usize = parse_field(&map, "iteration")?;
    let train_loss: f64 = parse_field(&map, "train_loss")?;
    let config_digest = ConfigDigest::parse_hex(field(&map, "config_digest")?)?;

    let expected = spec.param_count() * 8;
    if payload.len() != expected {
        return Err(Error::format(
            "payload length",
            format!("expected {expected} bytes, found {}", payload.len()),
        ));
    }
    let values: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let params = ParamVector::new(&spec, values).map_err(|e| Error::format("payload", e.to_string()))?;
    Ok(SnapshotRecord {
        spec,
        params,
        cycle_index,
        iteration,
        train_loss,
        config_digest,
    })
}

pub fn read_snapshot(path: &Path) -> Result<SnapshotRecord<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::storage(path, e))?;
    decode_snapshot(&bytes)
}

/// `snap_001.snap`, `snap_002.snap`, ...
pub fn snapshot_file_name(index: usize) -> String {
    format!("snap_{index:03}.{SNAPSHOT_EXT}")
}

pub fn encode_manifest(manifest: &RunManifest) -> Result<String> {
    if manifest.snapshots.is_empty() {
        return Err(Error::format("snapshot", "a run has at least one snapshot"));
    }
    if let Some(bad) = manifest.snapshots.iter().find(|s| s.is_empty() || s.contains('\n')) {
        return Err(Error::format("snapshot", format!("invalid file name {bad:?}")));
    }
    let mut out = format!(
        "format_version={FORMAT_VERSION}\nconfig_digest={}\nepoch_losses={}\n",
        manifest.config_digest,
        join(&manifest.epoch_losses)
    );
    for s in &manifest.snapshots {
        out.push_str(&format!("snapshot={s}\n"));
    }
    Ok(out)
}

pub fn write_manifest(manifest: &RunManifest, path: &Path) -> Result<()> {
    fs::write(path, encode_manifest(manifest)?).map_err(|e| Error::storage(path, e))
}

/// Parses manifest text without touching the filesystem.
pub fn decode_manifest(text: &str) -> Result<RunManifest> {
    let mut header = String::new();
    let mut snapshots = Vec::new();
    for line in text.lines() {
        match line.strip_prefix("snapshot=") {
            Some(name) => snapshots.push(name.to_string()),
            None => {
                header.push_str(line);
                header.push('\n');
            }
        }
    }
    let map = header_map(header.trim_end(), &["format_version", "config_digest", "epoch_losses"])?;
    check_version(&map)?;
    let config_digest = ConfigDigest::parse_hex(field(&map, "config_digest")?)?;
    let raw = field(&map, "epoch_losses")?;
    let epoch_losses = if raw.is_empty() {
        Vec::new()
    } else {
        raw.split(',')
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::format("epoch_losses", "expected comma-separated floats"))?
    };
    if snapshots.is_empty() {
        return Err(Error::format("snapshot", "a run has at least one snapshot"));
    }
    Ok(RunManifest {
        config_digest,
        snapshots,
        epoch_losses,
    })
}

/// Reads a manifest and checks that every referenced snapshot file exists.
pub fn read_manifest(path: &Path) -> Result<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::storage(path, e))?;
    let manifest = decode_manifest(&text)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    for name in &manifest.snapshots {
        if !dir.join(name).is_file() {
            return Err(Error::Consistency(format!(
                "manifest {} references missing snapshot {name}",
                path.display()
            )));
        }
    }
    Ok(manifest)
}

pub fn snapshot_paths(manifest_path: &Path, manifest: &RunManifest) -> Vec<PathBuf> {
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    manifest.snapshots.iter().map(|s| dir.join(s)).collect()
}

/// Reads a manifest and all its snapshots, in chronological order.
pub fn load_run(manifest_path: &Path) -> Result<(RunManifest, Vec<SnapshotRecord<f64>>)> {
    let manifest = read_manifest(manifest_path)?;
    let records = snapshot_paths(manifest_path, &manifest)
        .iter()
        .map(|p| read_snapshot(p))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_params;

    fn record() -> SnapshotRecord<f64> {
        let spec = ModelSpec::new(vec![2, 3, 2], 0.2).unwrap();
        SnapshotRecord {
            params: init_params(&spec, 4),
            spec,
            cycle_index: 2,
            iteration: 200,
            train_loss: 0.1 + 0.2,
            config_digest: ConfigDigest([7; 16]),
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_snapshot(&record());
        let text = String::from_utf8_lossy(&bytes[..bytes.len() - 17 * 8]);
        assert!(text.starts_with(
            "format_version=1\nlayer_sizes=2,3,2\nactivation=relu\ndropout_rate=0.2\n\
             cycle_index=2\niteration=200\ntrain_loss=0.30000000000000004\n\
             config_digest=07070707070707070707070707070707\n\n"
        ));
        assert_eq!(bytes.len(), text.len() + 17 * 8);
    }

    #[test]
    fn truncated_payload() {
        let mut bytes = encode_snapshot(&record());
        bytes.truncate(bytes.len() - 8);
        let err = decode_snapshot(&bytes).unwrap_err();
        assert!(err.to_string().contains("payload length"), "{err}");
    }

    #[test]
    fn missing_layer_sizes() {
        let bytes = encode_snapshot(&record());
        let text = String::from_utf8_lossy(&bytes).replace("layer_sizes=2,3,2\n", "");
        let err = decode_snapshot(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("layer_sizes"), "{err}");
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode_snapshot(&record());
        bytes[15] = b'2';
        let err = decode_snapshot(&bytes).unwrap_err();
        assert!(err.to_string().contains("format_version"), "{err}");
    }

    #[test]
    fn manifest_needs_snapshots() {
        let m = RunManifest {
            config_digest: ConfigDigest::default(),
            snapshots: vec![],
            epoch_losses: vec![],
        };
        assert!(matches!(encode_manifest(&m), Err(Error::Format { .. })));
        let text = "format_version=1\nconfig_digest=00000000000000000000000000000000\nepoch_losses=\n";
        assert!(matches!(decode_manifest(text), Err(Error::Format { .. })));
    }

    #[test]
    fn manifest_text_round_trip() {
        let m = RunManifest {
            config_digest: ConfigDigest([0xab; 16]),
            snapshots: (1..=6).map(snapshot_file_name).collect(),
            epoch_losses: vec![0.7, 0.123456789, 1e-7],
        };
        assert_eq!(decode_manifest(&encode_manifest(&m).unwrap()).unwrap(), m);
    }
}
