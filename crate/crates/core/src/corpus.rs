//! Metadata table, page store, exclusion rules and split-task assembly.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Title registered for the synthetic block appended after a volume's last
/// document.
pub const END_OF_VOLUME_TITLE: &str = "@@END_OF_VOLUME_SENTINEL@@";
/// The block actually appended to the task content.
pub const END_OF_VOLUME_BLOCK: &str = "\n@@END_OF_VOLUME_SENTINEL@@\n";

/// Separator placed between consecutive page contents.
pub const PAGE_SEPARATOR: &str = "\n";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed metadata file")]
    Csv(#[from] csv::Error),
    #[error("metadata is missing required column `{0}`")]
    MissingColumn(&'static str),
    #[error("{} invalid metadata row(s); first: {}", .0.len(), .0[0])]
    InvalidRows(Vec<RowError>),
    #[error("duplicate zbmath_internal_id {id} on line {line} (first seen on line {first_line})")]
    DuplicateId { id: i64, line: u64, first_line: u64 },
    #[error("{0} is not a directory")]
    NotADirectory(PathBuf),
    #[error("row index {0} is out of range")]
    RowOutOfRange(usize),
    #[error("document {id} was excluded: {reason}")]
    RowExcluded { id: i64, reason: String },
    #[error("page {0} is not available in the page store")]
    PageMissing(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Page identifier of the form `<volume>/<page>`, e.g. `001/005`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ScanId {
    pub volume: String,
    pub page: String,
}

impl ScanId {
    /// Ordering key of the page within its volume.
    pub fn page_key(&self) -> PageKey {
        PageKey::of(&self.page)
    }
}

impl FromStr for ScanId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (volume, page) = s
            .split_once('/')
            .ok_or_else(|| format!("scan_document_id `{s}` is not of the form volume/page"))?;
        if volume.is_empty() || page.is_empty() || page.contains('/') {
            return Err(format!("scan_document_id `{s}` is not of the form volume/page"));
        }
        Ok(ScanId {
            volume: volume.to_string(),
            page: page.to_string(),
        })
    }
}

impl fmt::Display for ScanId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.volume, self.page)
    }
}

/// Numeric page labels sort numerically and before any non-numeric label.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum PageKey {
    Numeric(u64),
    Text(String),
}

impl PageKey {
    pub fn of(page: &str) -> Self {
        if !page.is_empty() && page.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(n) = page.parse() {
                return PageKey::Numeric(n);
            }
        }
        PageKey::Text(page.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetadataRow {
    pub scan_document_id: String,
    pub zbmath_internal_id: i64,
    pub title: String,
    pub original_title: Option<String>,
    pub source: String,
}

impl MetadataRow {
    pub fn scan_id(&self) -> ScanId {
        // Validated on load; rows built by hand fall back to an empty volume.
        self.scan_document_id.parse().unwrap_or_else(|_| ScanId {
            volume: String::new(),
            page: self.scan_document_id.clone(),
        })
    }

    pub fn volume(&self) -> String {
        self.scan_id().volume
    }

    /// The title a prompt or search should prefer: the original title when
    /// recorded, otherwise the (possibly translated) title.
    pub fn preferred_title(&self) -> &str {
        self.original_title.as_deref().unwrap_or(&self.title)
    }
}

/// Ordered metadata rows plus the set of rows excluded from processing.
///
/// Excluded rows stay in the table: they still anchor their predecessor's
/// closing boundary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusTable {
    rows: Vec<MetadataRow>,
    excluded: BTreeMap<usize, String>,
}

impl CorpusTable {
    /// Builds a table from rows already in scan order.
    pub fn new(rows: Vec<MetadataRow>) -> Self {
        CorpusTable {
            rows,
            excluded: BTreeMap::new(),
        }
    }

    pub fn rows(&self) -> &[MetadataRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_excluded(&self, index: usize) -> bool {
        self.excluded.contains_key(&index)
    }

    pub fn exclusion_reason(&self, index: usize) -> Option<&str> {
        self.excluded.get(&index).map(String::as_str)
    }

    /// Indexes of rows that were not excluded, in table order.
    pub fn retained_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.rows.len()).filter(|i| !self.excluded.contains_key(i))
    }

    pub fn retained_len(&self) -> usize {
        self.rows.len() - self.excluded.len()
    }

    pub fn position_of(&self, zbmath_internal_id: i64) -> Option<usize> {
        self.rows
            .iter()
            .position(|r| r.zbmath_internal_id == zbmath_internal_id)
    }

    /// The next row in the same volume, if any.
    pub fn successor(&self, index: usize) -> Option<&MetadataRow> {
        let row = self.rows.get(index)?;
        let next = self.rows.get(index + 1)?;
        (next.volume() == row.volume()).then_some(next)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPage {
    pub scan_document_id: String,
    pub latex_content: String,
    pub confidence: Option<f64>,
}

/// On-disk page record.
#[derive(Debug, Deserialize)]
struct PageFile {
    scan_document_id: String,
    latex: String,
    #[serde(default)]
    confidence: Option<f64>,
}

/// Loaded pages keyed by scan document id, plus pages known to exist but
/// whose LaTeX is unusable.
#[derive(Debug, Clone, Default)]
pub struct PageStore {
    pages: HashMap<String, ScanPage>,
    missing: BTreeMap<String, String>,
    by_volume: BTreeMap<String, BTreeMap<PageKey, String>>,
}

impl PageStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pages(pages: impl IntoIterator<Item = ScanPage>) -> Self {
        let mut store = Self::new();
        for p in pages {
            store.insert(p);
        }
        store
    }

    pub fn insert(&mut self, page: ScanPage) {
        self.index(&page.scan_document_id);
        self.missing.remove(&page.scan_document_id);
        self.pages.insert(page.scan_document_id.clone(), page);
    }

    /// Record a page that exists in the scan but has no usable LaTeX.
    pub fn mark_missing(&mut self, id: impl Into<String>, reason: impl Into<String>) {
        let id = id.into();
        self.index(&id);
        self.pages.remove(&id);
        self.missing.insert(id, reason.into());
    }

    fn index(&mut self, id: &str) {
        if let Ok(sid) = id.parse::<ScanId>() {
            self.by_volume
                .entry(sid.volume.clone())
                .or_default()
                .insert(sid.page_key(), id.to_string());
        }
    }

    pub fn get(&self, id: &str) -> Option<&ScanPage> {
        self.pages.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.pages.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn missing(&self) -> &BTreeMap<String, String> {
        &self.missing
    }

    fn volume_pages(&self, volume: &str) -> Option<&BTreeMap<PageKey, String>> {
        self.by_volume.get(volume)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub zbmath_internal_id: i64,
    pub scan_document_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub excluded: Vec<Exclusion>,
}

impl ExclusionReport {
    pub fn is_empty(&self) -> bool {
        self.excluded.is_empty()
    }

    pub fn len(&self) -> usize {
        self.excluded.len()
    }
}

/// One document to extract: its row, the boundary row and the LaTeX to
/// search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTask {
    pub row: MetadataRow,
    pub next_row: Option<MetadataRow>,
    pub latex_content: String,
    pub page_span: Vec<String>,
    /// Character offset in `latex_content` at which each spanned page begins.
    pub page_offsets: Vec<usize>,
    pub sentinel_appended: bool,
}

impl SplitTask {
    /// Titles to try for the closing boundary, preferred first.
    pub fn next_titles(&self) -> Vec<&str> {
        match &self.next_row {
            Some(next) => title_candidates(next),
            None => vec![END_OF_VOLUME_TITLE],
        }
    }

    pub fn next_source(&self) -> &str {
        self.next_row.as_ref().map_or("", |r| r.source.as_str())
    }

    pub fn next_preferred_title(&self) -> &str {
        self.next_row
            .as_ref()
            .map_or(END_OF_VOLUME_TITLE, |r| r.preferred_title())
    }
}

/// `original_title` (when present) then `title`.
pub fn title_candidates(row: &MetadataRow) -> Vec<&str> {
    let mut out = Vec::with_capacity(2);
    if let Some(orig) = row.original_title.as_deref() {
        out.push(orig);
    }
    if out.first() != Some(&row.title.as_str()) {
        out.push(row.title.as_str());
    }
    out
}

const COL_SCAN: &str = "scan_document_id";
const COL_ID: &str = "zbmath_internal_id";
const COL_TITLE: &str = "title";
const COL_ORIGINAL: &str = "original_title";
const COL_SOURCE: &str = "source";

pub fn load_metadata(path: impl AsRef<Path>) -> Result<CorpusTable, CorpusError> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_metadata(file)
}

/// Parse tab-separated metadata. Rows keep file order; within a volume the
/// page labels must not decrease.
pub fn parse_metadata(reader: impl Read) -> Result<CorpusTable, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h.trim() == name);
    let scan_col = col(COL_SCAN).ok_or(CorpusError::MissingColumn(COL_SCAN))?;
    let id_col = col(COL_ID).ok_or(CorpusError::MissingColumn(COL_ID))?;
    let title_col = col(COL_TITLE).ok_or(CorpusError::MissingColumn(COL_TITLE))?;
    let source_col = col(COL_SOURCE).ok_or(CorpusError::MissingColumn(COL_SOURCE))?;
    let orig_col = col(COL_ORIGINAL);

    let mut rows = Vec::new();
    let mut lines = Vec::new();
    let mut errors = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let mut fail = |message: String| errors.push(RowError { line, message });

        let scan = field(scan_col);
        if let Err(e) = scan.parse::<ScanId>() {
            fail(e);
            continue;
        }
        let id = match field(id_col).parse::<i64>() {
            Ok(id) => id,
            Err(_) => {
                fail(format!("zbmath_internal_id `{}` is not an integer", field(id_col)));
                continue;
            }
        };
        let title = field(title_col);
        if title.is_empty() {
            fail("title is empty".to_string());
            continue;
        }
        let original_title = orig_col.map(field).filter(|s| !s.is_empty());
        rows.push(MetadataRow {
            scan_document_id: scan.to_string(),
            zbmath_internal_id: id,
            title: title.to_string(),
            original_title: original_title.map(str::to_string),
            source: field(source_col).to_string(),
        });
        lines.push(line);
    }

    // Page labels may not go backwards inside a volume.
    let mut last_in_volume: HashMap<String, (PageKey, usize)> = HashMap::new();
    let mut prev_volume: Option<String> = None;
    for (i, row) in rows.iter().enumerate() {
        let sid = row.scan_id();
        let key = sid.page_key();
        if let Some((prev_key, prev_idx)) = last_in_volume.get(&sid.volume) {
            if prev_volume.as_deref() != Some(sid.volume.as_str()) {
                errors.push(RowError {
                    line: lines[i],
                    message: format!(
                        "volume {} resumes after line {}; rows of a volume must be contiguous",
                        sid.volume, lines[*prev_idx]
                    ),
                });
            } else if key.cmp(prev_key) == Ordering::Less {
                errors.push(RowError {
                    line: lines[i],
                    message: format!(
                        "page {} precedes the previous row's page in volume {}",
                        sid.page, sid.volume
                    ),
                });
            }
        }
        last_in_volume.insert(sid.volume.clone(), (key, i));
        prev_volume = Some(sid.volume);
    }

    if !errors.is_empty() {
        errors.sort_by_key(|e| e.line);
        return Err(CorpusError::InvalidRows(errors));
    }

    let mut seen: HashMap<i64, u64> = HashMap::new();
    for (row, &line) in rows.iter().zip(&lines) {
        if let Some(&first_line) = seen.get(&row.zbmath_internal_id) {
            return Err(CorpusError::DuplicateId {
                id: row.zbmath_internal_id,
                line,
                first_line,
            });
        }
        seen.insert(row.zbmath_internal_id, line);
    }
    Ok(CorpusTable::new(rows))
}

/// Load every `*.json` page record in `dir`. Unreadable or invalid records
/// are kept as missing pages rather than failing the load.
pub fn load_pages(dir: impl AsRef<Path>) -> Result<PageStore, CorpusError> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(CorpusError::NotADirectory(dir.to_path_buf()));
    }
    let io_err = |source| CorpusError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();

    let mut store = PageStore::new();
    for path in paths {
        let fallback_id = id_from_file_name(&path);
        match read_page_file(&path) {
            Ok(page) => store.insert(page),
            Err(reason) => {
                log::warn!("page file {}: {reason}", path.display());
                if let Some(id) = fallback_id {
                    store.mark_missing(id, reason);
                }
            }
        }
    }
    Ok(store)
}

fn id_from_file_name(path: &Path) -> Option<String> {
    let stem = path.file_stem()?.to_str()?;
    let (volume, page) = stem.split_once('_')?;
    Some(format!("{volume}/{page}"))
}

fn read_page_file(path: &Path) -> Result<ScanPage, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("unreadable: {e}"))?;
    let rec: PageFile = serde_json::from_str(&text).map_err(|e| format!("not a page record: {e}"))?;
    if rec.scan_document_id.parse::<ScanId>().is_err() {
        return Err(format!("invalid scan_document_id `{}`", rec.scan_document_id));
    }
    if let Some(c) = rec.confidence {
        if !(0.0..=1.0).contains(&c) {
            return Err(format!("confidence {c} outside [0, 1]"));
        }
    }
    if rec.latex.is_empty() {
        return Err("empty LaTeX content (OCR failed)".to_string());
    }
    Ok(ScanPage {
        scan_document_id: rec.scan_document_id,
        latex_content: rec.latex,
        confidence: rec.confidence,
    })
}

/// Page ids a row's task covers: from the row's page through its successor's
/// page, or through the last known page of the volume for the final row.
pub fn page_span(table: &CorpusTable, store: &PageStore, index: usize) -> Vec<String> {
    let Some(row) = table.rows().get(index) else {
        return Vec::new();
    };
    let sid = row.scan_id();
    let first = sid.page_key();
    let known = store.volume_pages(&sid.volume);
    let last = match table.successor(index) {
        Some(next) => next.scan_id().page_key(),
        None => known
            .and_then(|m| m.keys().next_back().cloned())
            .filter(|k| *k > first)
            .unwrap_or_else(|| first.clone()),
    };

    let mut span: BTreeMap<PageKey, String> = BTreeMap::new();
    span.insert(first.clone(), row.scan_document_id.clone());
    if let Some(next) = table.successor(index) {
        span.insert(last.clone(), next.scan_document_id.clone());
    }
    if let Some(known) = known {
        for (k, id) in known.range(first.clone()..=last.clone()) {
            span.insert(k.clone(), id.clone());
        }
    }
    // Numeric labels: pages absent from the store still belong to the span.
    if let (PageKey::Numeric(a), PageKey::Numeric(b)) = (&first, &last) {
        let width = sid.page.len();
        for n in *a..=*b {
            span.entry(PageKey::Numeric(n))
                .or_insert_with(|| format!("{}/{:0width$}", sid.volume, n));
        }
    }
    span.into_values().collect()
}

/// Mark every row whose page span is not fully available as excluded.
pub fn exclude_incomplete(table: &CorpusTable, store: &PageStore) -> (CorpusTable, ExclusionReport) {
    let mut out = table.clone();
    let mut report = ExclusionReport::default();
    for (i, row) in table.rows().iter().enumerate() {
        if table.is_excluded(i) {
            continue;
        }
        let missing: Vec<String> = page_span(table, store, i)
            .into_iter()
            .filter(|p| !store.contains(p))
            .collect();
        if missing.is_empty() {
            continue;
        }
        let reason = if missing.len() == 1 {
            format!("missing page {}", missing[0])
        } else {
            format!("missing pages {}", missing.join(", "))
        };
        out.excluded.insert(i, reason.clone());
        report.excluded.push(Exclusion {
            zbmath_internal_id: row.zbmath_internal_id,
            scan_document_id: row.scan_document_id.clone(),
            reason,
        });
    }
    (out, report)
}

/// Concatenate the row's page span into one task.
pub fn assemble_task(
    table: &CorpusTable,
    store: &PageStore,
    index: usize,
) -> Result<SplitTask, CorpusError> {
    let row = table
        .rows()
        .get(index)
        .ok_or(CorpusError::RowOutOfRange(index))?;
    if let Some(reason) = table.exclusion_reason(index) {
        return Err(CorpusError::RowExcluded {
            id: row.zbmath_internal_id,
            reason: reason.to_string(),
        });
    }
    let span = page_span(table, store, index);
    let mut latex_content = String::new();
    let mut page_offsets = Vec::with_capacity(span.len());
    let mut offset = 0usize;
    for (i, id) in span.iter().enumerate() {
        let page = store
            .get(id)
            .ok_or_else(|| CorpusError::PageMissing(id.clone()))?;
        if i > 0 {
            latex_content.push_str(PAGE_SEPARATOR);
            offset += PAGE_SEPARATOR.chars().count();
        }
        page_offsets.push(offset);
        latex_content.push_str(&page.latex_content);
        offset += page.latex_content.chars().count();
    }
    let next_row = table.successor(index).cloned();
    let sentinel_appended = next_row.is_none();
    if sentinel_appended {
        latex_content.push_str(END_OF_VOLUME_BLOCK);
    }
    Ok(SplitTask {
        row: row.clone(),
        next_row,
        latex_content,
        page_span: span,
        page_offsets,
        sentinel_appended,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "scan_document_id\tzbmath_internal_id\ttitle\toriginal_title\tsource\n";

    fn table1() -> String {
        format!(
            "{HEADER}\
001/005\t3000000\tMethods of mathematical physics. Vol. 1. 2nd ext. ed.\tMethoden der mathematischen Physik. Bd. I. 2. verb. Aufl\tDie Grundlehren der mathematischen Wissenschaften 12. Berlin: Julius Springer. XIV, 469 S. u. 26 Abb. (1931).\n\
001/005\t3000001\tOn the construction of arithmetics\tÜber den Aufbau der Arithmetik\tJahresber. Dtsch. Math.-Ver. 40, 22-37 (1931).\n\
001/006\t3000002\tRemarks on a determinant theorem by Minkowski\tBemerkungen zu einem Determinantensatz von Minkowski\tJahresber. Dtsch. Math.-Ver. 40, 49-53 (1931).\n"
        )
    }

    fn page(id: &str, text: &str) -> ScanPage {
        ScanPage {
            scan_document_id: id.into(),
            latex_content: text.into(),
            confidence: None,
        }
    }

    #[test]
    fn parses_sample_rows_in_file_order() {
        let t = parse_metadata(table1().as_bytes()).unwrap();
        assert_eq!(t.len(), 3);
        let ids: Vec<i64> = t.rows().iter().map(|r| r.zbmath_internal_id).collect();
        assert_eq!(ids, vec![3000000, 3000001, 3000002]);
        assert_eq!(
            t.rows()[1].original_title.as_deref(),
            Some("Über den Aufbau der Arithmetik")
        );
    }

    #[test]
    fn header_only_is_empty() {
        let t = parse_metadata(HEADER.as_bytes()).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn empty_original_title_is_absent() {
        let data = format!("{HEADER}001/001\t1\tA title\t\tSrc\n");
        let t = parse_metadata(data.as_bytes()).unwrap();
        assert_eq!(t.rows()[0].original_title, None);
        assert_eq!(t.rows()[0].preferred_title(), "A title");
    }

    #[test]
    fn empty_title_rejected_with_line() {
        let data = format!("{HEADER}001/001\t1\tOk\t\tS\n001/002\t2\t\t\tS\n");
        match parse_metadata(data.as_bytes()) {
            Err(CorpusError::InvalidRows(errs)) => {
                assert_eq!(errs.len(), 1);
                assert_eq!(errs[0].line, 3);
                assert!(errs[0].message.contains("title"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_duplicates() {
        let data = "scan_document_id\ttitle\tsource\n";
        assert!(matches!(
            parse_metadata(data.as_bytes()),
            Err(CorpusError::MissingColumn("zbmath_internal_id"))
        ));
        let data = format!("{HEADER}001/001\t7\tA\t\tS\n001/002\t7\tB\t\tS\n");
        assert!(matches!(
            parse_metadata(data.as_bytes()),
            Err(CorpusError::DuplicateId { id: 7, line: 3, first_line: 2 })
        ));
    }

    #[test]
    fn decreasing_page_rejected() {
        let data = format!("{HEADER}001/005\t1\tA\t\tS\n001/004\t2\tB\t\tS\n");
        assert!(matches!(
            parse_metadata(data.as_bytes()),
            Err(CorpusError::InvalidRows(_))
        ));
    }

    #[test]
    fn missing_file_errors() {
        assert!(matches!(
            load_metadata("/nonexistent/metadata.tsv"),
            Err(CorpusError::Io { .. })
        ));
        assert!(matches!(
            load_pages("/nonexistent/pages"),
            Err(CorpusError::NotADirectory(_))
        ));
    }

    #[test]
    fn task_spans_two_pages() {
        let t = parse_metadata(table1().as_bytes()).unwrap();
        let store = PageStore::from_pages([page("001/005", "P5"), page("001/006", "P6")]);
        let task = assemble_task(&t, &store, 1).unwrap();
        assert_eq!(task.page_span, vec!["001/005", "001/006"]);
        assert_eq!(task.latex_content, "P5\nP6");
        assert_eq!(task.page_offsets, vec![0, 3]);
        assert!(!task.sentinel_appended);
    }

    #[test]
    fn same_page_span_is_single() {
        let t = parse_metadata(table1().as_bytes()).unwrap();
        let store = PageStore::from_pages([page("001/005", "P5"), page("001/006", "P6")]);
        let task = assemble_task(&t, &store, 0).unwrap();
        assert_eq!(task.page_span, vec!["001/005"]);
        assert_eq!(task.latex_content, "P5");
    }

    #[test]
    fn last_row_gets_sentinel() {
        let t = parse_metadata(table1().as_bytes()).unwrap();
        let store = PageStore::from_pages([page("001/005", "P5"), page("001/006", "P6")]);
        let task = assemble_task(&t, &store, 2).unwrap();
        assert!(task.sentinel_appended);
        assert!(task.next_row.is_none());
        assert!(task.latex_content.ends_with(END_OF_VOLUME_BLOCK));
        assert_eq!(task.next_titles(), vec![END_OF_VOLUME_TITLE]);
    }

    #[test]
    fn last_row_spans_to_end_of_volume() {
        let data = format!("{HEADER}002/001\t1\tA\t\tS\n002/002\t2\tB\t\tS\n");
        let t = parse_metadata(data.as_bytes()).unwrap();
        let store = PageStore::from_pages([
            page("002/001", "a"),
            page("002/002", "b"),
            page("002/003", "c"),
        ]);
        let task = assemble_task(&t, &store, 1).unwrap();
        assert_eq!(task.page_span, vec!["002/002", "002/003"]);
        assert_eq!(task.latex_content, format!("b\nc{END_OF_VOLUME_BLOCK}"));
    }

    #[test]
    fn volume_change_ends_task() {
        let data = format!("{HEADER}001/009\t1\tA\t\tS\n002/001\t2\tB\t\tS\n");
        let t = parse_metadata(data.as_bytes()).unwrap();
        assert!(t.successor(0).is_none());
    }

    #[test]
    fn exclusion_of_missing_page() {
        let t = parse_metadata(table1().as_bytes()).unwrap();
        let store = PageStore::from_pages([page("001/005", "P5")]);
        let (kept, report) = exclude_incomplete(&t, &store);
        // Row 1 spans 005..006, row 2 lives on 006.
        assert_eq!(kept.retained_len(), 1);
        assert_eq!(report.len(), 2);
        assert_eq!(report.excluded[0].zbmath_internal_id, 3000001);
        assert_eq!(report.excluded[0].reason, "missing page 001/006");
        assert!(matches!(
            assemble_task(&kept, &store, 1),
            Err(CorpusError::RowExcluded { id: 3000001, .. })
        ));
    }

    #[test]
    fn gap_pages_count_as_missing() {
        let data = format!("{HEADER}003/010\t1\tA\t\tS\n003/012\t2\tB\t\tS\n");
        let t = parse_metadata(data.as_bytes()).unwrap();
        let store = PageStore::from_pages([page("003/010", "x"), page("003/012", "z")]);
        assert_eq!(page_span(&t, &store, 0), vec!["003/010", "003/011", "003/012"]);
        let (_, report) = exclude_incomplete(&t, &store);
        assert_eq!(report.excluded[0].reason, "missing page 003/011");
    }

    #[test]
    fn complete_store_excludes_nothing() {
        let t = parse_metadata(table1().as_bytes()).unwrap();
        let store = PageStore::from_pages([page("001/005", "P5"), page("001/006", "P6")]);
        let (kept, report) = exclude_incomplete(&t, &store);
        assert!(report.is_empty());
        assert_eq!(kept, t);
    }
}
