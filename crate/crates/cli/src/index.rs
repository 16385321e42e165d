//! Dataset index: a CSV table `imageId,imagePath,maskPath,pristineFlag`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const HEADER: [&str; 4] = ["imageId", "imagePath", "maskPath", "pristineFlag"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexRow {
    pub image_id: String,
    pub image_path: PathBuf,
    pub mask_path: Option<PathBuf>,
    pub pristine: bool,
}

#[derive(Deserialize, Serialize)]
struct RawRow {
    #[serde(rename = "imageId")]
    image_id: String,
    #[serde(rename = "imagePath")]
    image_path: String,
    #[serde(rename = "maskPath")]
    mask_path: String,
    #[serde(rename = "pristineFlag")]
    pristine_flag: String,
}

fn parse_flag(s: &str, line: u64) -> Result<bool, CliError> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" | "0" | "false" | "no" => Ok(false),
        "1" | "true" | "yes" => Ok(true),
        other => Err(CliError::Invalid(format!("index line {line}: pristineFlag '{other}' is not a boolean"))),
    }
}

#[derive(Clone, Debug)]
pub struct DatasetIndex {
    pub rows: Vec<IndexRow>,
    /// Raw file bytes, hashed into run identifiers.
    pub digest: String,
}

impl DatasetIndex {
    /// Reads an index; relative paths resolve against the index file's directory. Rows are
    /// returned sorted by image id.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes =
            std::fs::read(path).map_err(|e| CliError::Invalid(format!("cannot read index {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut rows = Self::parse(&bytes, &base)?;
        rows.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        Ok(DatasetIndex { rows, digest: crate::report::sha256_hex(&bytes) })
    }

    pub fn parse(bytes: &[u8], base: &Path) -> Result<Vec<IndexRow>, CliError> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let header = rdr.headers().map_err(|e| CliError::Invalid(format!("index header: {e}")))?;
        if header.iter().collect::<Vec<_>>() != HEADER {
            return Err(CliError::Invalid(format!("index header must be {}", HEADER.join(","))));
        }
        let mut seen = HashSet::new();
        let mut rows = Vec::new();
        for rec in rdr.deserialize::<RawRow>() {
            let raw = rec.map_err(|e| CliError::Invalid(format!("index: {e}")))?;
            let line = rows.len() as u64 + 2;
            if raw.image_id.is_empty() {
                return Err(CliError::Invalid(format!("index line {line}: empty imageId")));
            }
            if raw.image_id.contains(['/', '\\']) || raw.image_id.starts_with('.') {
                return Err(CliError::Invalid(format!(
                    "index line {line}: imageId '{}' is not a plain file name",
                    raw.image_id
                )));
            }
            if !seen.insert(raw.image_id.clone()) {
                return Err(CliError::Invalid(format!("index line {line}: duplicate imageId '{}'", raw.image_id)));
            }
            let pristine = parse_flag(&raw.pristine_flag, line)?;
            let mask_path = (!raw.mask_path.trim().is_empty()).then(|| base.join(raw.mask_path.trim()));
            if pristine && mask_path.is_some() {
                return Err(CliError::Invalid(format!(
                    "index line {line}: pristine row '{}' must not have a mask",
                    raw.image_id
                )));
            }
            rows.push(IndexRow {
                image_id: raw.image_id,
                image_path: base.join(raw.image_path.trim()),
                mask_path,
                pristine,
            });
        }
        if rows.is_empty() {
            return Err(CliError::Invalid("index has no rows".into()));
        }
        Ok(rows)
    }
}

/// Serializes rows with paths written as given (callers pass paths relative to the index).
pub fn write_index(rows: &[IndexRow]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(RawRow {
            image_id: r.image_id.clone(),
            image_path: r.image_path.to_string_lossy().replace('\\', "/"),
            mask_path: r.mask_path.as_ref().map(|p| p.to_string_lossy().replace('\\', "/")).unwrap_or_default(),
            pristine_flag: r.pristine.to_string(),
        })
        .map_err(|e| CliError::Invalid(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Invalid(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_resolves() {
        let csv = "imageId,imagePath,maskPath,pristineFlag\nb,img/b.png,,true\na,img/a.png,m/a.png,false\n";
        let rows = DatasetIndex::parse(csv.as_bytes(), Path::new("/data")).unwrap();
        assert_eq!(rows[0].image_path, PathBuf::from("/data/img/b.png"));
        assert!(rows[0].pristine && rows[0].mask_path.is_none());
        assert_eq!(rows[1].mask_path, Some(PathBuf::from("/data/m/a.png")));
    }

    #[test]
    fn rejects_bad_tables() {
        let dup = "imageId,imagePath,maskPath,pristineFlag\na,x.png,,false\na,y.png,,false\n";
        assert!(DatasetIndex::parse(dup.as_bytes(), Path::new(".")).is_err());
        let both = "imageId,imagePath,maskPath,pristineFlag\na,x.png,m.png,true\n";
        assert!(DatasetIndex::parse(both.as_bytes(), Path::new(".")).is_err());
        let empty = "imageId,imagePath,maskPath,pristineFlag\n";
        assert!(DatasetIndex::parse(empty.as_bytes(), Path::new(".")).is_err());
        let header = "id,path\na,b\n";
        assert!(DatasetIndex::parse(header.as_bytes(), Path::new(".")).is_err());
    }

    #[test]
    fn write_then_parse() {
        let rows = vec![
            IndexRow {
                image_id: "x".into(),
                image_path: "images/x.png".into(),
                mask_path: Some("masks/x.png".into()),
                pristine: false,
            },
            IndexRow { image_id: "y".into(), image_path: "images/y.jpg".into(), mask_path: None, pristine: true },
        ];
        let bytes = write_index(&rows).unwrap();
        assert!(bytes.starts_with(b"imageId,imagePath,maskPath,pristineFlag\n"));
        assert_eq!(DatasetIndex::parse(&bytes, Path::new("")).unwrap(), rows);
    }
}
