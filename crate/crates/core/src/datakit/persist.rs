//! Versioned JSON documents on disk.
//!
//! Every document is a JSON object with an integer `format_version` next to
//! the payload fields.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::datakit::dataset::Dataset;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Document<T> {
    format_version: u32,
    #[serde(flatten)]
    body: T,
}

/// Serializes `value` wrapped with the current format version.
pub fn to_document_string<T: Serialize>(value: &T) -> Result<String> {
    let doc = Document {
        format_version: FORMAT_VERSION,
        body: value,
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Corrupt(format!("cannot serialize: {e}")))
}

pub fn from_document_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Corrupt(e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Corrupt("missing integer `format_version`".into()))?;
    if found != u64::from(FORMAT_VERSION) {
        return Err(Error::Version {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: FORMAT_VERSION,
        });
    }
    let doc: Document<T> = serde_json::from_value(value).map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok(doc.body)
}

pub fn save_document<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut text = to_document_string(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_document<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_document_str(&text)
}

pub fn save_dataset(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    save_document(path, ds)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let ds: Dataset = load_document(path)?;
    ds.validate()?;
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datakit::FeatureMeta;

    fn ds() -> Dataset {
        Dataset::new(
            "d",
            vec!["A".into(), "B".into()],
            vec![
                FeatureMeta::continuous("x", -1.5, 0.1 + 0.2),
                FeatureMeta::categorical("s", vec!["F".into(), "M".into()]),
            ],
            vec![vec![-1.5, 0.0], vec![0.1 + 0.2, 1.0]],
            vec![0, 1],
        )
        .unwrap()
    }

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.json");
        save_dataset(&p, &ds()).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), ds());
    }

    #[test]
    fn version_mismatch_and_truncation() {
        let text = to_document_string(&ds()).unwrap();
        let bumped = text.replacen("\"format_version\": 1", "\"format_version\": 7", 1);
        assert!(matches!(
            from_document_str::<Dataset>(&bumped),
            Err(Error::Version { found: 7, expected: 1 })
        ));
        let cut = &text[..text.len() / 2];
        assert!(matches!(from_document_str::<Dataset>(cut), Err(Error::Corrupt(_))));
    }
}
