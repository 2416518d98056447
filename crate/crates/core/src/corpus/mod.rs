//! Failure cases, the label taxonomy, splitting, and synthetic corpora.

mod case;
mod split;
mod synth;
mod taxonomy;

pub use case::{corpus_to_jsonl, load_corpus, read_corpus, write_corpus, FailureCase};
pub use split::{stratified_split, uniform_counts, CorpusSplit};
pub use synth::{background_pool, generate_synthetic, keyword_pool, ClassCounts, SynthSpec};
pub use taxonomy::{default_taxonomy, Taxonomy, TaxonomyEntry};
