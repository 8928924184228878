//! String-distance primitives and OCR-tolerant title location.
//!
//! All offsets exposed by this module are character (Unicode scalar value)
//! indexes, not byte offsets.

use once_cell::sync::OnceCell;
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

/// Maximum edit distance allowed for a fuzzy title match, as a fraction of the
/// normalized title length.
pub const DEFAULT_FUZZY_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    Exact,
    Normalized,
    Fuzzy,
}

impl MatchMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MatchMode::Exact => "exact",
            MatchMode::Normalized => "normalized",
            MatchMode::Fuzzy => "fuzzy",
        }
    }
}

/// A located title: `start..end` in characters of the searched text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub start: usize,
    pub end: usize,
    pub distance: usize,
    pub mode: MatchMode,
}

/// Levenshtein distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b)
}

pub(crate) fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, &ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Characters removed by [`strip_spaces_with_map`]. Newlines are kept.
pub fn is_strippable(c: char) -> bool {
    c == ' ' || c == '\t'
}

/// Space-stripped text with a map from each retained character back to its
/// index in the original.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexMap {
    pub stripped: String,
    pub to_original: Vec<usize>,
}

impl IndexMap {
    pub fn len(&self) -> usize {
        self.to_original.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_original.is_empty()
    }
}

pub fn strip_spaces_with_map(s: &str) -> IndexMap {
    let mut map = IndexMap::default();
    for (i, c) in s.chars().enumerate() {
        if !is_strippable(c) {
            map.stripped.push(c);
            map.to_original.push(i);
        }
    }
    map
}

pub fn strip_spaces(s: &str) -> String {
    s.chars().filter(|&c| !is_strippable(c)).collect()
}

/// One character of normalized text, remembering the range of original
/// characters it was produced from.
#[derive(Debug, Clone, Copy)]
struct NormChar {
    ch: char,
    start: usize,
    end: usize,
    /// Preceded by a tilde marker in the OCR output.
    word_start: bool,
}

impl NormChar {
    fn plain(ch: char, at: usize) -> Self {
        NormChar {
            ch,
            start: at,
            end: at + 1,
            word_start: false,
        }
    }
}

/// Normalized text plus the original character span of each normalized char.
#[derive(Debug, Clone)]
pub(crate) struct Normalized {
    pub chars: Vec<char>,
    pub spans: Vec<(usize, usize)>,
}

/// Canonical matching form of OCR text.
///
/// Rules, applied in order:
/// 1. LaTeX accent commands (`\"u`, `\'{e}`, `\~A`, ...) and tilde prefixes
///    reduce to their base letter; stray `~` is deleted.
/// 2. Diacritics fold to base letters.
/// 3. Quote look-alikes (`66`/`99` at a word edge, ``` `` ```, `''`, curly
///    quotes) become `"`.
/// 4. Whitespace runs collapse to one space.
/// 5. Runs of four or more single letters separated by single spaces are
///    rejoined into words, breaking only where a tilde marked a word start.
/// 6. `0` maps to `O` and `1` maps to `l`.
///
/// The result is only meant for comparisons; it is never emitted as output.
pub fn normalize_ocr(s: &str) -> String {
    normalize_spanned(s).chars.into_iter().collect()
}

pub(crate) fn normalize_spanned(s: &str) -> Normalized {
    let input: Vec<char> = s.chars().collect();
    let mut out = expand_accents(&input);
    out = fold_diacritics(out);
    out = unify_quotes(out);
    out = collapse_whitespace(out);
    out = rejoin_spaced_letters(out);
    for c in &mut out {
        c.ch = match c.ch {
            '0' => 'O',
            '1' => 'l',
            other => other,
        };
    }
    Normalized {
        chars: out.iter().map(|c| c.ch).collect(),
        spans: out.iter().map(|c| (c.start, c.end)).collect(),
    }
}

const ACCENT_COMMANDS: [char; 7] = ['"', '\'', '`', '^', '~', '=', '.'];

fn expand_accents(input: &[char]) -> Vec<NormChar> {
    let mut out = Vec::with_capacity(input.len());
    let mut i = 0;
    while i < input.len() {
        let c = input[i];
        if c == '\\' && i + 1 < input.len() && ACCENT_COMMANDS.contains(&input[i + 1]) {
            let accent = input[i + 1];
            let braced = input.get(i + 2) == Some(&'{')
                && input.get(i + 3).is_some_and(|ch| ch.is_alphabetic())
                && input.get(i + 4) == Some(&'}');
            if braced {
                out.push(NormChar {
                    ch: input[i + 3],
                    start: i,
                    end: i + 5,
                    word_start: accent == '~',
                });
                i += 5;
                continue;
            }
            if let Some(&letter) = input.get(i + 2).filter(|ch| ch.is_alphabetic()) {
                out.push(NormChar {
                    ch: letter,
                    start: i,
                    end: i + 3,
                    word_start: accent == '~',
                });
                i += 3;
                continue;
            }
            if accent == '~' {
                i += 2;
                continue;
            }
            out.push(NormChar::plain(c, i));
            i += 1;
            continue;
        }
        if c == '~' {
            if let Some(&letter) = input.get(i + 1).filter(|ch| ch.is_alphabetic()) {
                out.push(NormChar {
                    ch: letter,
                    start: i,
                    end: i + 2,
                    word_start: true,
                });
                i += 2;
            } else {
                i += 1;
            }
            continue;
        }
        out.push(NormChar::plain(c, i));
        i += 1;
    }
    out
}

fn fold_diacritics(input: Vec<NormChar>) -> Vec<NormChar> {
    let mut out = Vec::with_capacity(input.len());
    for nc in input {
        if nc.ch.is_ascii() {
            out.push(nc);
            continue;
        }
        let mut first = true;
        for d in std::iter::once(nc.ch).nfd() {
            if is_combining_mark(d) {
                continue;
            }
            out.push(NormChar {
                ch: d,
                word_start: nc.word_start && first,
                ..nc
            });
            first = false;
        }
    }
    out
}

fn unify_quotes(input: Vec<NormChar>) -> Vec<NormChar> {
    let at = |i: usize| input.get(i).map(|c| c.ch);
    let mut out: Vec<NormChar> = Vec::with_capacity(input.len());
    let mut i = 0;
    while i < input.len() {
        let c = input[i];
        match c.ch {
            '\u{201c}' | '\u{201d}' | '\u{201e}' | '\u{ab}' | '\u{bb}' => {
                out.push(NormChar { ch: '"', ..c });
                i += 1;
            }
            '`' | '\'' if at(i + 1) == Some(c.ch) => {
                out.push(NormChar {
                    ch: '"',
                    end: input[i + 1].end,
                    ..c
                });
                i += 2;
            }
            '6' | '9' if at(i + 1) == Some(c.ch) && is_quote_like_digits(&input, i) => {
                out.push(NormChar {
                    ch: '"',
                    end: input[i + 1].end,
                    ..c
                });
                i += 2;
            }
            _ => {
                out.push(c);
                i += 1;
            }
        }
    }
    out
}

/// `66`/`99` at `i..i+2` that sits between a word edge and a letter.
fn is_quote_like_digits(input: &[NormChar], i: usize) -> bool {
    let before = i.checked_sub(1).map(|j| input[j].ch);
    let after = input.get(i + 2).map(|c| c.ch);
    if before.is_some_and(|c| c.is_ascii_digit()) || after.is_some_and(|c| c.is_ascii_digit()) {
        return false;
    }
    let edge = |c: Option<char>| c.is_none_or(|c| !c.is_alphanumeric());
    let letter = |c: Option<char>| c.is_some_and(|c| c.is_alphabetic());
    (edge(before) && letter(after)) || (letter(before) && edge(after))
}

fn collapse_whitespace(input: Vec<NormChar>) -> Vec<NormChar> {
    let mut out: Vec<NormChar> = Vec::with_capacity(input.len());
    for nc in input {
        if nc.ch.is_whitespace() {
            match out.last_mut() {
                Some(last) if last.ch == ' ' => last.end = nc.end,
                _ => out.push(NormChar {
                    ch: ' ',
                    word_start: false,
                    ..nc
                }),
            }
        } else {
            out.push(nc);
        }
    }
    out
}

const MIN_SPACED_RUN: usize = 4;

fn rejoin_spaced_letters(input: Vec<NormChar>) -> Vec<NormChar> {
    // Token boundaries over the collapsed text: (start, end) index pairs.
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < input.len() {
        if input[i].ch == ' ' {
            i += 1;
            continue;
        }
        let start = i;
        while i < input.len() && input[i].ch != ' ' {
            i += 1;
        }
        tokens.push((start, i));
    }
    let single = |t: &(usize, usize)| t.1 - t.0 == 1 && input[t.0].ch.is_alphabetic();

    let mut drop_space = vec![false; input.len()];
    let mut t = 0;
    while t < tokens.len() {
        if !single(&tokens[t]) {
            t += 1;
            continue;
        }
        let run_start = t;
        while t + 1 < tokens.len() && single(&tokens[t + 1]) {
            t += 1;
        }
        let run = &tokens[run_start..=t];
        if run.len() >= MIN_SPACED_RUN {
            for pair in run.windows(2) {
                let (left, right) = (pair[0], pair[1]);
                if !input[right.0].word_start {
                    for flag in &mut drop_space[left.1..right.0] {
                        *flag = true;
                    }
                }
            }
        }
        t += 1;
    }
    input
        .into_iter()
        .zip(drop_space)
        .filter_map(|(c, drop)| (!drop).then_some(c))
        .collect()
}

/// Text prepared for repeated title searches. Normalization is computed on
/// first use.
#[derive(Debug)]
pub struct SearchText<'a> {
    raw: &'a str,
    chars: Vec<char>,
    normalized: OnceCell<Normalized>,
}

impl<'a> SearchText<'a> {
    pub fn new(raw: &'a str) -> Self {
        SearchText {
            raw,
            chars: raw.chars().collect(),
            normalized: OnceCell::new(),
        }
    }

    pub fn raw(&self) -> &'a str {
        self.raw
    }

    pub fn char_len(&self) -> usize {
        self.chars.len()
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    /// Characters `start..end` as a string.
    pub fn slice(&self, start: usize, end: usize) -> String {
        self.chars[start..end].iter().collect()
    }

    fn normalized(&self) -> &Normalized {
        self.normalized.get_or_init(|| normalize_spanned(self.raw))
    }
}

/// Title search with a configurable fuzzy threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TitleLocator {
    pub fuzzy_threshold: f64,
}

impl Default for TitleLocator {
    fn default() -> Self {
        TitleLocator {
            fuzzy_threshold: DEFAULT_FUZZY_THRESHOLD,
        }
    }
}

impl TitleLocator {
    pub fn new(fuzzy_threshold: f64) -> Self {
        TitleLocator { fuzzy_threshold }
    }

    /// Largest accepted edit distance for a needle of `len` characters.
    pub fn max_distance(&self, len: usize) -> usize {
        // The epsilon keeps products like 0.3 * 10 from flooring to 2.
        (self.fuzzy_threshold * len as f64 + 1e-9).floor().max(0.0) as usize
    }

    pub fn locate(&self, content: &str, title: &str, mode: MatchMode) -> Option<Match> {
        self.locate_from(&SearchText::new(content), title, mode, 0)
    }

    /// Search `text` for `title`, considering only matches that begin at or
    /// after character `from`.
    pub fn locate_from(
        &self,
        text: &SearchText<'_>,
        title: &str,
        mode: MatchMode,
        from: usize,
    ) -> Option<Match> {
        if title.is_empty() || from > text.char_len() {
            return None;
        }
        match mode {
            MatchMode::Exact => {
                let needle: Vec<char> = title.chars().collect();
                find_chars(&text.chars[from..], &needle).map(|p| Match {
                    start: from + p,
                    end: from + p + needle.len(),
                    distance: 0,
                    mode,
                })
            }
            MatchMode::Normalized => {
                let needle = normalized_needle(title);
                let norm = text.normalized();
                let offset = first_span_at_or_after(norm, from);
                find_chars(&norm.chars[offset..], &needle).map(|p| Match {
                    start: norm.spans[offset + p].0,
                    end: norm.spans[offset + p + needle.len() - 1].1,
                    distance: 0,
                    mode,
                })
            }
            MatchMode::Fuzzy => {
                let needle = normalized_needle(title);
                if needle.is_empty() {
                    return None;
                }
                let norm = text.normalized();
                let offset = first_span_at_or_after(norm, from);
                let max = self.max_distance(needle.len());
                best_window(&norm.chars[offset..], &needle, max).map(|(s, e, d)| Match {
                    start: norm.spans[offset + s].0,
                    end: norm.spans[offset + e - 1].1,
                    distance: d,
                    mode,
                })
            }
        }
    }
}

/// Locate `title` in `content` with the default fuzzy threshold.
pub fn locate_title(content: &str, title: &str, mode: MatchMode) -> Option<Match> {
    TitleLocator::default().locate(content, title, mode)
}

fn normalized_needle(title: &str) -> Vec<char> {
    let n: String = normalize_ocr(title);
    n.trim_matches(' ').chars().collect()
}

fn first_span_at_or_after(norm: &Normalized, from: usize) -> usize {
    norm.spans.partition_point(|&(s, _)| s < from)
}

fn find_chars(haystack: &[char], needle: &[char]) -> Option<usize> {
    if needle.is_empty() || needle.len() > haystack.len() {
        return None;
    }
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Leftmost, then shortest, window of `hay` with minimal edit distance to
/// `needle`, provided that distance is at most `max`. Returns
/// `(start, end, distance)`.
fn best_window(hay: &[char], needle: &[char], max: usize) -> Option<(usize, usize, usize)> {
    let m = needle.len();
    if hay.is_empty() {
        return None;
    }
    // Semi-global pass: best distance of any window ending at each position.
    let mut col: Vec<usize> = (0..=m).collect();
    let mut ends_at = vec![usize::MAX; hay.len() + 1];
    for (j, &c) in hay.iter().enumerate() {
        let mut diag = col[0];
        col[0] = 0;
        for i in 1..=m {
            let up = col[i];
            let v = (diag + usize::from(needle[i - 1] != c))
                .min(up + 1)
                .min(col[i - 1] + 1);
            diag = up;
            col[i] = v;
        }
        ends_at[j + 1] = col[m];
    }
    let best = *ends_at[1..].iter().min()?;
    if best > max {
        return None;
    }

    let mut chosen: Option<(usize, usize)> = None;
    let mut row = vec![0usize; m + 1];
    for end in 1..=hay.len() {
        if ends_at[end] != best {
            continue;
        }
        if let Some((s, _)) = chosen {
            // Later ends cannot start earlier than this by more than the
            // longest admissible window; stop once they cannot win.
            if end > s + m + best {
                break;
            }
        }
        // Backward pass: distance of hay[start..end] for every start.
        for (i, r) in row.iter_mut().enumerate() {
            *r = i;
        }
        let lowest = end.saturating_sub(m + best);
        let mut candidate = None;
        for start in (lowest..end).rev() {
            let c = hay[start];
            let mut diag = row[0];
            row[0] += 1;
            for i in 1..=m {
                let up = row[i];
                let v = (diag + usize::from(needle[m - i] != c))
                    .min(up + 1)
                    .min(row[i - 1] + 1);
                diag = up;
                row[i] = v;
            }
            if row[m] == best {
                candidate = Some(start);
            }
        }
        if let Some(start) = candidate {
            let better = match chosen {
                None => true,
                Some((s, e)) => start < s || (start == s && end - start < e - s),
            };
            if better {
                chosen = Some((start, end));
            }
        }
    }
    chosen.map(|(s, e)| (s, e, best))
}
