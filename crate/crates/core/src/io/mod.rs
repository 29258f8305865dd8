//! Persistence: a little-endian binary record format (one record per file)
//! and CSV export for plotting. See `docs/formats.md` for the byte layout.

mod binary;
mod csv;

pub use binary::{
    decode_chart, decode_dataset, decode_features, decode_model, decode_report, encode_chart, encode_dataset,
    encode_features, encode_features_with_dim, encode_model, encode_report, read_chart, read_dataset, read_features, read_header, read_model,
    read_report, write_chart, write_dataset, write_features, write_model, write_report, CsiDataset, FileHeader,
    RecordKind, FORMAT_VERSION, MAGIC,
};
pub use csv::{
    chart_to_csv, confusion_to_csv, parse_chart_csv, parse_truth_csv, report_to_csv, roc_to_csv, truth_to_csv,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a chartlab file (bad magic)")]
    BadMagic,
    #[error("expected a {expected} record, found {found}")]
    WrongKind { expected: RecordKind, found: String },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt data at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("csv line {line}: {reason}")]
    Csv { line: usize, reason: String },
}

impl IoError {
    pub(crate) fn corrupt(offset: usize, reason: impl Into<String>) -> Self {
        IoError::Corrupt { offset: offset as u64, reason: reason.into() }
    }
}
