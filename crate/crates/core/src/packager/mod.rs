//! Corpus storage: FLAC record files, fold layout, manifest, verification.

pub mod corpus;
pub mod flac;
pub mod metadata;
pub mod verify;

pub use corpus::{
    corpus_digest, generate_corpus, CorpusEntry, CorpusIndex, FoldLayout, GenerateOptions,
    GenerateSummary, ManifestRow, MANIFEST_NAME,
};
pub use flac::{decode_record, encode_record, read_metadata, RirRecord};
pub use metadata::SceneMetadata;
pub use verify::{verify_corpus, VerifyReport};
