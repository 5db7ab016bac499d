//! Painting corpus: manifest parsing, the filename grammar, and year bins.
//!
//! A corpus is a list of painting records, one per manifest line. Each record
//! names the artist, style, an optional creation year, and the path of the
//! image it was loaded from. Faces cut from a painting inherit its labels, so
//! everything downstream (attribution, scoring) resolves face ids back to
//! these records.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Span of years covered by one 50-year bin.
pub const BIN_WIDTH: i32 = 50;

/// Years outside this range are rejected everywhere (manifest, filenames,
/// binning). Portraiture datasets do not reach outside it.
pub const YEAR_MIN: i32 = 1000;
/// Upper bound of the accepted year range, inclusive.
pub const YEAR_MAX: i32 = 2100;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest line {line}: {message}")]
    MalformedLine { line: usize, message: String },
    #[error("duplicate painting id {id:?}")]
    DuplicateId { id: String },
    #[error("year {year} outside supported range {YEAR_MIN}..={YEAR_MAX}")]
    YearOutOfRange { year: i32 },
    #[error("filename {path:?}: {message}")]
    BadFilename { path: String, message: String },
}

/// One painting as described by the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaintingRecord {
    pub painting_id: String,
    /// Lowercased at ingest; artist comparison is case-insensitive.
    pub artist: String,
    pub title: String,
    /// Lowercased at ingest, like `artist`.
    pub style: String,
    pub year: Option<i32>,
    pub source_path: String,
}

impl PaintingRecord {
    /// Checks the field constraints shared by every ingest path. `line` is
    /// only used to point error messages at the offending manifest line.
    fn validate(&self, line: usize) -> Result<(), CorpusError> {
        let bad = |message: String| CorpusError::MalformedLine { line, message };
        if self.painting_id.is_empty() {
            return Err(bad("empty painting id".into()));
        }
        if self.painting_id.contains(['/', '\\']) {
            // Crop files are named after the painting id, so the id must be
            // usable as a single path component.
            return Err(bad(format!(
                "painting id {:?} contains a path separator",
                self.painting_id
            )));
        }
        for (name, value) in [("artist", &self.artist), ("style", &self.style)] {
            if value.is_empty() {
                return Err(bad(format!("empty {name}")));
            }
            if value.contains(['/', '\\']) {
                return Err(bad(format!("{name} {value:?} contains a path separator")));
            }
        }
        if let Some(year) = self.year {
            if !(YEAR_MIN..=YEAR_MAX).contains(&year) {
                return Err(bad(format!(
                    "year {year} outside supported range {YEAR_MIN}..={YEAR_MAX}"
                )));
            }
        }
        Ok(())
    }
}

/// Raw manifest line. Field names are the on-disk JSON keys.
#[derive(Debug, Serialize, Deserialize)]
struct ManifestLine {
    id: String,
    artist: String,
    title: String,
    style: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    year: Option<i32>,
    path: String,
}

/// Parses a line-delimited JSON manifest into records, preserving input
/// order. Artist and style are lowercased; a missing `year` key stays absent.
/// Blank lines are skipped. Errors carry the 1-based line number, and a
/// repeated painting id is reported by id.
pub fn parse_manifest(text: &str) -> Result<Vec<PaintingRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine =
            serde_json::from_str(raw).map_err(|e| CorpusError::MalformedLine {
                line,
                message: e.to_string(),
            })?;
        let record = PaintingRecord {
            painting_id: parsed.id,
            artist: parsed.artist.to_lowercase(),
            title: parsed.title,
            style: parsed.style.to_lowercase(),
            year: parsed.year,
            source_path: parsed.path,
        };
        record.validate(line)?;
        if seen.insert(record.painting_id.clone(), line).is_some() {
            return Err(CorpusError::DuplicateId {
                id: record.painting_id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Renders records back into manifest lines (the inverse of
/// [`parse_manifest`] for already-normalized records).
pub fn render_manifest(records: &[PaintingRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let line = ManifestLine {
            id: r.painting_id.clone(),
            artist: r.artist.clone(),
            title: r.title.clone(),
            style: r.style.clone(),
            year: r.year,
            path: r.source_path.clone(),
        };
        out.push_str(&serde_json::to_string(&line).expect("manifest line serializes"));
        out.push('\n');
    }
    out
}

/// Fields recovered from a corpus filename.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedFilename {
    pub artist: String,
    pub title: String,
    pub style: String,
    pub year: Option<i32>,
}

/// Parses a path of the form `<style>/<artist>_<title>[_<year>].<ext>`.
///
/// Fields use hyphens internally and `_` only as the separator. All fields
/// are lowercased. A trailing `_<digits>` group is consumed as the year only
/// when it parses to an integer in `1000..=2100`; otherwise it is kept as
/// part of the title.
///
/// ```
/// use atelier::corpus::parse_filename;
///
/// let p = parse_filename("baroque/rembrandt_self-portrait_1659.jpg").unwrap();
/// assert_eq!((p.artist.as_str(), p.year), ("rembrandt", Some(1659)));
/// ```
pub fn parse_filename(path: &str) -> Result<ParsedFilename, CorpusError> {
    let bad = |message: &str| CorpusError::BadFilename {
        path: path.to_string(),
        message: message.to_string(),
    };
    let mut components = path.split('/').filter(|c| !c.is_empty());
    let (style, filename) = match (components.next(), components.next()) {
        (Some(style), Some(file)) => {
            // Deeper paths keep only the immediate parent as the style.
            let mut style = style;
            let mut file = file;
            for next in components {
                style = file;
                file = next;
            }
            (style, file)
        }
        _ => return Err(bad("no style directory")),
    };
    let (stem, _ext) = filename
        .rsplit_once('.')
        .ok_or_else(|| bad("no file extension"))?;
    let fields: Vec<&str> = stem.split('_').collect();
    if fields.len() < 2 {
        return Err(bad("fewer than two '_'-separated fields"));
    }
    let mut title_fields = &fields[1..];
    let mut year = None;
    if fields.len() >= 3 {
        let last = fields[fields.len() - 1];
        if (3..=4).contains(&last.len()) && last.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(y) = last.parse::<i32>() {
                if (YEAR_MIN..=YEAR_MAX).contains(&y) {
                    year = Some(y);
                    title_fields = &fields[1..fields.len() - 1];
                }
            }
        }
    }
    let parsed = ParsedFilename {
        artist: fields[0].to_lowercase(),
        title: title_fields.join("_").to_lowercase(),
        style: style.to_lowercase(),
        year,
    };
    if parsed.artist.is_empty() {
        return Err(bad("empty artist field"));
    }
    if parsed.title.is_empty() {
        return Err(bad("empty title field"));
    }
    Ok(parsed)
}

/// Half-open 50-year interval `[start, start + 50)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct YearBin {
    start: i32,
}

impl YearBin {
    pub fn start(&self) -> i32 {
        self.start
    }

    pub fn end(&self) -> i32 {
        self.start + BIN_WIDTH
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..self.end()).contains(&year)
    }

    /// Decimal rendering `start-end`, e.g. `1600-1650`.
    pub fn label(&self) -> String {
        format!("{}-{}", self.start, self.end())
    }
}

impl std::fmt::Display for YearBin {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.start, self.end())
    }
}

/// Maps a year to its 50-year bin: `start = floor(year / 50) * 50`. A year on
/// a boundary belongs to the bin it starts.
///
/// ```
/// use atelier::corpus::year_bin;
///
/// assert_eq!(year_bin(1507).unwrap().label(), "1500-1550");
/// assert_eq!(year_bin(1550).unwrap().label(), "1550-1600");
/// ```
pub fn year_bin(year: i32) -> Result<YearBin, CorpusError> {
    if !(YEAR_MIN..=YEAR_MAX).contains(&year) {
        return Err(CorpusError::YearOutOfRange { year });
    }
    Ok(YearBin {
        start: (year / BIN_WIDTH) * BIN_WIDTH,
    })
}

/// Indexed view over painting records with face-id resolution.
///
/// Face ids follow the convention `<painting_id>__<face_index>`; resolution
/// strips the final `__<digits>` group and falls back to treating the whole
/// id as a painting id.
#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<PaintingRecord>,
    by_id: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(records: Vec<PaintingRecord>) -> Result<Self, CorpusError> {
        let mut by_id = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if by_id.insert(r.painting_id.clone(), i).is_some() {
                return Err(CorpusError::DuplicateId {
                    id: r.painting_id.clone(),
                });
            }
        }
        Ok(Corpus { records, by_id })
    }

    pub fn from_manifest_text(text: &str) -> Result<Self, CorpusError> {
        Corpus::new(parse_manifest(text)?)
    }

    pub fn records(&self) -> &[PaintingRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, painting_id: &str) -> Option<&PaintingRecord> {
        self.by_id.get(painting_id).map(|&i| &self.records[i])
    }

    /// Record behind a face id, if the id resolves.
    pub fn resolve_face(&self, face_id: &str) -> Option<&PaintingRecord> {
        if let Some((head, tail)) = face_id.rsplit_once("__") {
            if !tail.is_empty() && tail.bytes().all(|b| b.is_ascii_digit()) {
                if let Some(r) = self.get(head) {
                    return Some(r);
                }
            }
        }
        self.get(face_id)
    }
}

/// Builds the face id of face number `index` within a painting.
pub fn face_id(painting_id: &str, index: u32) -> String {
    format!("{painting_id}__{index}")
}
