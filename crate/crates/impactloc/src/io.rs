//! Corpus files: BRAT standoff import and the canonical line-per-record format.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use impactloc_core::corpus::brat::{parse_annotations, BratError};
use impactloc_core::corpus::{Category, CorpusError, DisasterType, Post, Span};
use impactloc_core::{Dataset, GoldAnnotation};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of the per-document metadata file expected in a BRAT directory.
pub const BRAT_METADATA: &str = "metadata.jsonl";

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: record {record}: {message}", path.display())]
    Schema {
        path: PathBuf,
        record: usize,
        message: String,
    },
    #[error("{}: {source}", path.display())]
    Brat { path: PathBuf, source: BratError },
    #[error("{}: {source}", path.display())]
    Corpus { path: PathBuf, source: Box<CorpusError> },
    #[error("{}: no metadata record for document `{id}`", path.display())]
    MissingMetadata { path: PathBuf, id: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One line of the canonical corpus file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalRecord {
    pub post_id: String,
    pub text: String,
    pub event_id: String,
    pub disaster_type: DisasterType,
    pub country: String,
    pub category: Category,
    pub all_locations: Vec<Span>,
    pub impacted_locations: Vec<Span>,
    pub impacts: Vec<Span>,
}

impl From<&Post> for CanonicalRecord {
    fn from(p: &Post) -> Self {
        CanonicalRecord {
            post_id: p.post_id.clone(),
            text: p.text.clone(),
            event_id: p.event_id.clone(),
            disaster_type: p.disaster_type,
            country: p.country.clone(),
            category: p.category,
            all_locations: p.gold.all_locations.clone(),
            impacted_locations: p.gold.impacted_locations.clone(),
            impacts: p.gold.impacts.clone(),
        }
    }
}

impl From<CanonicalRecord> for Post {
    fn from(r: CanonicalRecord) -> Self {
        Post {
            post_id: r.post_id,
            text: r.text,
            event_id: r.event_id,
            disaster_type: r.disaster_type,
            country: r.country,
            category: r.category,
            gold: GoldAnnotation {
                all_locations: r.all_locations,
                impacted_locations: r.impacted_locations,
                impacts: r.impacts,
            },
        }
    }
}

/// Reads one JSON value per non-blank line. Record numbers in errors are 1-based.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DataError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    let mut record = 0;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        record += 1;
        let value = serde_json::from_str(&line).map_err(|e| DataError::Schema {
            path: path.to_path_buf(),
            record,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Serializes `items` one per line, each line terminated by `\n`.
pub fn jsonl_bytes<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("in-memory serialization");
        out.push(b'\n');
    }
    out
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DataError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&jsonl_bytes(items)).map_err(io_err(path))
}

fn dataset_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

/// Loads a canonical corpus file. Text and spans are NFC-normalized.
pub fn load_canonical(path: &Path) -> Result<Dataset, DataError> {
    let records: Vec<CanonicalRecord> = read_jsonl(path)?;
    let posts = records.into_iter().map(|r| Post::from(r).into_nfc()).collect();
    Dataset::new(dataset_name(path), posts).map_err(|e| DataError::Corpus {
        path: path.to_path_buf(),
        source: Box::new(e),
    })
}

pub fn save_canonical(d: &Dataset, path: &Path) -> Result<(), DataError> {
    let records: Vec<CanonicalRecord> = d.posts().iter().map(CanonicalRecord::from).collect();
    write_jsonl(path, &records)
}

/// Per-document fields a BRAT directory does not carry itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BratMetadata {
    pub post_id: String,
    pub event_id: String,
    pub disaster_type: DisasterType,
    #[serde(default)]
    pub country: String,
    pub category: Category,
}

/// Loads `<id>.txt` / `<id>.ann` pairs from `dir`, ordered by id.
///
/// Metadata comes from `metadata.jsonl` in the same directory. A missing
/// `.ann` file means no annotations. Unknown annotation kinds are logged and
/// returned as warnings.
pub fn load_brat(dir: &Path) -> Result<(Dataset, Vec<String>), DataError> {
    let meta_path = dir.join(BRAT_METADATA);
    let metadata: BTreeMap<String, BratMetadata> = read_jsonl::<BratMetadata>(&meta_path)?
        .into_iter()
        .map(|m| (m.post_id.clone(), m))
        .collect();

    let mut docs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    docs.sort();

    let mut posts = Vec::with_capacity(docs.len());
    let mut warnings = Vec::new();
    for doc_path in docs {
        let id = dataset_name(&doc_path);
        let meta = metadata.get(&id).ok_or_else(|| DataError::MissingMetadata {
            path: meta_path.clone(),
            id: id.clone(),
        })?;
        let raw = fs::read_to_string(&doc_path).map_err(io_err(&doc_path))?;
        let text = raw.trim_end_matches(['\n', '\r']);
        let ann_path = doc_path.with_extension("ann");
        let ann = match fs::read_to_string(&ann_path) {
            Ok(s) => s,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
            Err(e) => return Err(io_err(&ann_path)(e)),
        };
        let (gold, warns) = parse_annotations(text, &ann).map_err(|source| DataError::Brat {
            path: ann_path.clone(),
            source,
        })?;
        for w in warns {
            let msg = format!("{}: line {}: {}", ann_path.display(), w.line, w.message);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let post = Post {
            post_id: id,
            text: text.to_string(),
            event_id: meta.event_id.clone(),
            disaster_type: meta.disaster_type,
            country: meta.country.clone(),
            category: meta.category,
            gold,
        };
        posts.push(post.into_nfc());
    }
    let dataset = Dataset::new(dataset_name(dir), posts).map_err(|e| DataError::Corpus {
        path: dir.to_path_buf(),
        source: Box::new(e),
    })?;
    Ok((dataset, warnings))
}
