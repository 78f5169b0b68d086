pub mod dsp;
pub mod error;
pub mod phonoset;
pub mod neural;
pub mod corpus;
pub mod analyzer;
pub mod toy;
pub mod synthesizer;
pub mod eval;
pub mod atoms;
pub mod tts;
pub mod cli;
