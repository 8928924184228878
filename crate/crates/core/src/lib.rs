//! Segment OCR-converted LaTeX volumes into catalogued documents using
//! metadata anchors, title matching or language-model extraction.

pub mod textnorm;
pub mod corpus;
pub mod extraction;
pub mod regex_splitter;
pub mod llm_splitter;
pub mod index_recovery;
pub mod evaluation;
pub mod pipeline;
pub mod synth;
pub mod mock;

pub use corpus::{CorpusTable, MetadataRow, PageStore, ScanPage, SplitTask};
pub use extraction::{ExtractionResult, ExtractionStatus, Method};
pub use index_recovery::{IndexOutcome, IndexStatus};
pub use textnorm::{MatchMode, DEFAULT_FUZZY_THRESHOLD};
