//! Artifact serialization. All files are written atomically (temp file in
//! the target directory, then rename) so partial runs never leave truncated
//! CSVs behind.

use std::fs;
use std::path::Path;

use anyhow::Context;

use pdfl_core::sim::{MessageRecord, MetricsRecord};

/// Writes `bytes` to `path` via a temp file plus rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let file_name = path
        .file_name()
        .context("artifact path has no file name")?
        .to_string_lossy();
    let tmp = dir.join(format!(".{}.tmp", file_name));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    atomic_write(path, body.as_bytes())
}

/// Metrics as RFC-4180 CSV with full-precision floats.
pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from("t,client_id,split,loss,accuracy\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.t,
            r.client_id,
            r.split.as_str(),
            r.loss,
            r.accuracy
        ));
    }
    out
}

/// Parses a metrics CSV produced by [`metrics_csv`].
pub fn parse_metrics_csv(text: &str) -> anyhow::Result<Vec<MetricsRecord>> {
    use pdfl_core::sim::Split;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            anyhow::bail!("metrics line {}: expected 5 fields", i + 1);
        }
        let split = match fields[2] {
            "val" => Split::Val,
            "test" => Split::Test,
            other => anyhow::bail!("metrics line {}: unknown split '{}'", i + 1, other),
        };
        out.push(MetricsRecord {
            t: fields[0].parse()?,
            client_id: fields[1].parse()?,
            split,
            loss: fields[3].parse()?,
            accuracy: fields[4].parse()?,
        });
    }
    Ok(out)
}

/// One JSON object per transmitted message.
pub fn messages_jsonl(messages: &[MessageRecord]) -> anyhow::Result<String> {
    let mut out = String::new();
    for msg in messages {
        out.push_str(&serde_json::to_string(msg)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pdfl_core::sim::{PayloadKind, Split};

    #[test]
    fn metrics_round_trip_is_exact() {
        let records = vec![
            MetricsRecord {
                t: 5,
                client_id: 0,
                split: Split::Test,
                loss: 1.234567890123456789,
                accuracy: 0.1 + 0.2,
            },
            MetricsRecord {
                t: 5,
                client_id: 1,
                split: Split::Val,
                loss: f64::MIN_POSITIVE,
                accuracy: 1.0,
            },
        ];
        let text = metrics_csv(&records);
        let parsed = parse_metrics_csv(&text).unwrap();
        assert_eq!(records, parsed);
    }

    #[test]
    fn jsonl_encodes_payload_kind() {
        let messages = vec![MessageRecord {
            t: 10,
            from: 2,
            to: 4,
            payload_kind: PayloadKind::ModelParameters,
        }];
        let text = messages_jsonl(&messages).unwrap();
        assert!(text.contains("\"model_parameters\""));
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn atomic_write_creates_parents_and_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a/b/file.txt");
        atomic_write(&path, b"one").unwrap();
        atomic_write(&path, b"two").unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "two");
    }
}
