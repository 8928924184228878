//! Seeded synthetic volumes with planted review bodies and known gold.
//!
//! Each page starts with its page number; each document is printed as
//! title, source line, body lines and a reviewer signature. Documents never
//! straddle a page break, so every body has exact gold offsets inside its
//! own task's content.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::corpus::{CorpusTable, MetadataRow, PageStore, ScanPage};
use crate::evaluation::{GoldAnswer, GoldLine, GoldRecord};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub documents: usize,
    pub volumes: usize,
    pub seed: u64,
    /// Fraction of documents printed without any review text.
    pub not_reviewed_fraction: f64,
    /// Probability that a document carries an original (German) title.
    pub original_title_fraction: f64,
    /// Inject OCR-style damage into printed titles.
    pub title_noise: bool,
    /// Inject doubled spaces and spaces before punctuation into bodies.
    pub body_space_noise: bool,
    /// Give pages an OCR confidence score.
    pub confidence: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            documents: 50,
            volumes: 2,
            seed: 7,
            not_reviewed_fraction: 0.1,
            original_title_fraction: 0.4,
            title_noise: false,
            body_space_noise: false,
            confidence: true,
        }
    }
}

/// Which kind of damage a printed title received.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TitleNoise {
    None,
    TildeSpaced,
    DoubledSpaces,
    UmlautsFolded,
    Substitutions(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDocument {
    pub row: MetadataRow,
    pub gold: GoldRecord,
    pub printed_title: String,
    pub noise: TitleNoise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub documents: Vec<SynthDocument>,
    pub pages: Vec<ScanPage>,
}

/// Paths written by [`SynthCorpus::write_to`].
#[derive(Debug, Clone)]
pub struct SynthPaths {
    pub metadata: PathBuf,
    pub pages_dir: PathBuf,
    pub gold: PathBuf,
}

impl SynthCorpus {
    pub fn rows(&self) -> Vec<MetadataRow> {
        self.documents.iter().map(|d| d.row.clone()).collect()
    }

    pub fn table(&self) -> CorpusTable {
        CorpusTable::new(self.rows())
    }

    pub fn store(&self) -> PageStore {
        PageStore::from_pages(self.pages.iter().cloned())
    }

    pub fn gold(&self) -> Vec<GoldRecord> {
        self.documents.iter().map(|d| d.gold.clone()).collect()
    }

    /// Metadata TSV, one JSON file per page, and gold JSON-lines.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<SynthPaths> {
        fs::create_dir_all(dir)?;
        let paths = SynthPaths {
            metadata: dir.join("metadata.tsv"),
            pages_dir: dir.join("pages"),
            gold: dir.join("gold.jsonl"),
        };
        let mut tsv = String::from("scan_document_id\tzbmath_internal_id\ttitle\toriginal_title\tsource\n");
        for d in &self.documents {
            let r = &d.row;
            tsv.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.scan_document_id,
                r.zbmath_internal_id,
                r.title,
                r.original_title.as_deref().unwrap_or(""),
                r.source
            ));
        }
        fs::write(&paths.metadata, tsv)?;

        fs::create_dir_all(&paths.pages_dir)?;
        for p in &self.pages {
            let name = format!("{}.json", p.scan_document_id.replace('/', "_"));
            let mut rec = serde_json::json!({
                "scan_document_id": p.scan_document_id,
                "latex": p.latex_content,
            });
            if let Some(c) = p.confidence {
                rec["confidence"] = serde_json::json!(c);
            }
            fs::write(paths.pages_dir.join(name), serde_json::to_string_pretty(&rec)?)?;
        }

        let mut gold = fs::File::create(&paths.gold)?;
        for d in &self.documents {
            writeln!(gold, "{}", serde_json::to_string(&GoldLine::from(&d.gold))?)?;
        }
        Ok(paths)
    }
}

const ADJECTIVES: &[&str] = &[
    "algebraic", "analytic", "asymptotic", "bounded", "compact", "complex", "convex",
    "elliptic", "finite", "general", "harmonic", "hyperbolic", "integral", "linear",
    "modular", "nonlinear", "normal", "orthogonal", "periodic", "projective", "quadratic",
    "rational", "regular", "singular", "spectral", "symmetric", "topological", "uniform",
];
const NOUNS: &[&str] = &[
    "equations", "functions", "series", "groups", "surfaces", "manifolds", "operators",
    "forms", "fields", "curves", "matrices", "polynomials", "invariants", "transformations",
    "spaces", "integrals", "numbers", "determinants", "lattices", "mappings", "residues",
];
const OPENERS: &[&str] = &[
    "On the theory of", "Remarks on", "A note on", "Contributions to the study of",
    "On a class of", "Investigations on", "The structure of", "New results on",
];
const GERMAN_OPENERS: &[&str] = &[
    "Über die Theorie der", "Bemerkungen über", "Zur Theorie der", "Untersuchungen über die",
    "Über eine Klasse von", "Beiträge zur Lehre von",
];
const GERMAN_NOUNS: &[&str] = &[
    "Gleichungen", "Funktionen", "Reihen", "Gruppen", "Flächen", "Mannigfaltigkeiten",
    "Operatoren", "Körper", "Kurven", "Matrizen", "Polynome", "Invarianten", "Räume",
    "Integrale", "Zahlen", "Determinanten", "Gitter", "Abbildungen", "Lösungen",
];
const GERMAN_ADJECTIVES: &[&str] = &[
    "algebraischen", "analytischen", "beschränkten", "kompakten", "konvexen", "elliptischen",
    "endlichen", "harmonischen", "linearen", "modulären", "normalen", "periodischen",
    "rationalen", "regulären", "singulären", "symmetrischen", "gleichmäßigen", "höheren",
];
const JOURNALS: &[&str] = &[
    "Math. Ann.", "J. Reine Angew. Math.", "Math. Z.", "Jahresber. Dtsch. Math.-Ver.",
    "Proc. Lond. Math. Soc.", "C. R. Acad. Sci., Paris", "Ann. Math.", "Acta Math.",
    "Monatsh. Math. Phys.", "Compos. Math.",
];
const BODY_WORDS: &[&str] = &[
    "the", "author", "proves", "that", "every", "solution", "is", "bounded", "and", "shows",
    "a", "new", "estimate", "for", "coefficient", "which", "extends", "earlier", "results",
    "of", "this", "kind", "method", "uses", "an", "explicit", "construction", "in", "case",
    "where", "operator", "has", "discrete", "spectrum", "further", "it", "follows", "all",
    "zeros", "lie", "on", "line", "moreover", "condition", "cannot", "be", "weakened",
];
const MATH: &[&str] = &["$x^{2}$", "$\\alpha$", "$f(z)$", "$n \\geq 2$", "$\\sum a_{n}$", "$p$"];
const SURNAMES: &[&str] = &[
    "Hasse", "Landau", "Bieberbach", "Hopf", "Noether", "Artin", "Hecke", "Schur", "Weyl",
    "Siegel", "Courant", "Blaschke", "Pólya", "Szegő",
];
const CITIES: &[&str] = &[
    "Marburg", "Berlin", "Göttingen", "Hamburg", "Zürich", "Leipzig", "Wien", "Paris", "Cambridge",
];

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn pick<'a>(rng: &mut ChaCha8Rng, xs: &[&'a str]) -> &'a str {
    xs.choose(rng).copied().expect("non-empty word list")
}

fn english_title(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {} {} of {} {}",
        pick(rng, OPENERS),
        pick(rng, ADJECTIVES),
        pick(rng, NOUNS),
        pick(rng, ADJECTIVES),
        pick(rng, NOUNS)
    )
}

fn german_title(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {} {} und {} {}",
        pick(rng, GERMAN_OPENERS),
        pick(rng, GERMAN_ADJECTIVES),
        pick(rng, GERMAN_NOUNS),
        pick(rng, GERMAN_ADJECTIVES),
        pick(rng, GERMAN_NOUNS)
    )
}

fn source(rng: &mut ChaCha8Rng) -> String {
    let first = rng.random_range(1..400);
    format!(
        "{} {}, {}-{} ({}).",
        pick(rng, JOURNALS),
        rng.random_range(10..120),
        first,
        first + rng.random_range(2..40),
        rng.random_range(1925..1940)
    )
}

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let n = rng.random_range(6..14);
    let mut words: Vec<String> = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 && rng.random_bool(0.12) {
            words.push(pick(rng, MATH).to_string());
        } else {
            words.push(pick(rng, BODY_WORDS).to_string());
        }
    }
    words[0] = capitalize(&words[0]);
    // End on a plain word so the line never looks like a signature.
    let last = pick(rng, BODY_WORDS);
    format!("{} {last}.", words.join(" "))
}

fn signature(rng: &mut ChaCha8Rng) -> String {
    let initial = (b'A' + rng.random_range(0..26u8)) as char;
    format!("{initial}. {} ({}).", pick(rng, SURNAMES), pick(rng, CITIES))
}

fn fold_umlauts(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            'ä' => 'a',
            'ö' => 'o',
            'ü' => 'u',
            'Ä' => 'A',
            'Ö' => 'O',
            'Ü' => 'U',
            'é' => 'e',
            other => other,
        })
        .collect()
}

fn tilde_spaced(s: &str) -> String {
    s.split(' ')
        .map(|w| {
            let letters: Vec<String> = w.chars().map(String::from).collect();
            format!("\\~{}", letters.join(" "))
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn substitute(rng: &mut ChaCha8Rng, s: &str, count: usize) -> String {
    let mut chars: Vec<char> = s.chars().collect();
    let letters: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_ascii_lowercase()).collect();
    for &i in letters.choose_multiple(rng, count) {
        let orig = chars[i];
        let mut c = orig;
        while c == orig {
            c = (b'a' + rng.random_range(0..26u8)) as char;
        }
        chars[i] = c;
    }
    chars.into_iter().collect()
}

fn doubled_spaces(rng: &mut ChaCha8Rng, s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 8);
    for c in s.chars() {
        out.push(c);
        if c == ' ' && rng.random_bool(0.5) {
            out.push(' ');
        }
    }
    out
}

fn space_noise_body(rng: &mut ChaCha8Rng, body: &str) -> String {
    let chars: Vec<char> = body.chars().collect();
    let mut out = String::with_capacity(body.len() + 16);
    for (i, &c) in chars.iter().enumerate() {
        let interior = i > 0 && i + 1 < chars.len();
        if interior && (c == '.' || c == ',') && rng.random_bool(0.5) {
            out.push(' ');
        }
        out.push(c);
        if interior && c == ' ' && rng.random_bool(0.15) {
            out.push(' ');
        }
    }
    out
}

fn print_title(rng: &mut ChaCha8Rng, title: &str, noisy: bool) -> (String, TitleNoise) {
    if !noisy {
        return (title.to_string(), TitleNoise::None);
    }
    let has_umlaut = fold_umlauts(title) != title;
    match rng.random_range(0..5) {
        0 => (title.to_string(), TitleNoise::None),
        1 => (tilde_spaced(&fold_umlauts(title)), TitleNoise::TildeSpaced),
        2 => (doubled_spaces(rng, title), TitleNoise::DoubledSpaces),
        3 if has_umlaut => (fold_umlauts(title), TitleNoise::UmlautsFolded),
        _ => {
            let n = rng.random_range(1..=2);
            (substitute(rng, title, n), TitleNoise::Substitutions(n))
        }
    }
}

/// Build a corpus; identical options give identical output.
pub fn generate(opts: &SynthOptions) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let volumes = opts.volumes.max(1);
    let mut documents = Vec::with_capacity(opts.documents);
    let mut pages = Vec::new();
    let mut seen_titles = HashSet::new();
    let mut next_id = 3_000_000i64;

    for v in 0..volumes {
        let in_volume = opts.documents / volumes + usize::from(v < opts.documents % volumes);
        if in_volume == 0 {
            continue;
        }
        let volume = format!("{:03}", v + 1);
        let mut page_no = 1usize;
        let mut remaining = in_volume;
        while remaining > 0 {
            let on_page = rng.random_range(1..=3usize).min(remaining);
            remaining -= on_page;
            let page_id = format!("{volume}/{page_no:03}");
            let mut text = format!("{page_no}\n");
            for _ in 0..on_page {
                let (title, original_title) = loop {
                    let english = english_title(&mut rng);
                    let original = rng
                        .random_bool(opts.original_title_fraction)
                        .then(|| german_title(&mut rng));
                    let key = original.clone().unwrap_or_else(|| english.clone());
                    if seen_titles.insert(key) && seen_titles.insert(english.clone()) {
                        break (english, original);
                    }
                };
                let src = source(&mut rng);
                let preferred = original_title.clone().unwrap_or_else(|| title.clone());
                let (printed, noise) = print_title(&mut rng, &preferred, opts.title_noise);

                text.push_str(&printed);
                text.push('\n');
                text.push_str(&src);
                text.push('\n');

                let reviewed = !rng.random_bool(opts.not_reviewed_fraction);
                let id = next_id;
                next_id += 1;
                let gold = if reviewed {
                    let lines: Vec<String> =
                        (0..rng.random_range(1..=4)).map(|_| sentence(&mut rng)).collect();
                    let body = lines.join("\n");
                    let printed_body = if opts.body_space_noise {
                        space_noise_body(&mut rng, &body)
                    } else {
                        body.clone()
                    };
                    let start = text.chars().count();
                    let end = start + printed_body.chars().count();
                    text.push_str(&printed_body);
                    text.push('\n');
                    text.push_str(&signature(&mut rng));
                    text.push('\n');
                    GoldRecord {
                        zbmath_internal_id: id,
                        gold: GoldAnswer::Text(body),
                        gold_indexes: Some((start, end)),
                    }
                } else {
                    GoldRecord {
                        zbmath_internal_id: id,
                        gold: GoldAnswer::NotReviewed,
                        gold_indexes: None,
                    }
                };
                documents.push(SynthDocument {
                    row: MetadataRow {
                        scan_document_id: page_id.clone(),
                        zbmath_internal_id: id,
                        title,
                        original_title,
                        source: src,
                    },
                    gold,
                    printed_title: printed,
                    noise,
                });
            }
            if text.ends_with('\n') {
                text.pop();
            }
            let confidence = opts
                .confidence
                .then(|| (rng.random_range(0.55..1.0f64) * 1e4).round() / 1e4);
            pages.push(ScanPage {
                scan_document_id: page_id,
                latex_content: text,
                confidence,
            });
            page_no += 1;
        }
    }
    SynthCorpus { documents, pages }
}
