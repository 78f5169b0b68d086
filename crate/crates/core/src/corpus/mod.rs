//! File formats: audio, labels, pronunciations, manifests and configuration.

mod cmudict;
mod config;
mod htk;
mod manifest;
mod wav;

pub use cmudict::{parse_cmudict, parse_cmudict_str, Lexicon};
pub use config::{load_config, Config};
pub use htk::{parse_htk_labels, parse_htk_str, write_htk_labels, HTK_UNITS_PER_FRAME};
pub use manifest::{load_corpus, write_manifest, Corpus, Utterance, OVERSHOOT_TOLERANCE};
pub use wav::{read_wav, write_wav};
