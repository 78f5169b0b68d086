use std::path::PathBuf;

use phonolab::error::Error;
use phonolab::phonoset::{self, PhoneAlignment, PhoneSpan, SystemName};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) | Error::File { .. } | Error::MissingFiles(_) => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn system(name: &str) -> PyResult<phonoset::FeatureSystem> {
    let name: SystemName = name.parse().map_err(to_py)?;
    Ok(phonoset::load_system(name))
}

/// Mel cepstral distortion in dB between two cepstral vectors (c0 ignored).
#[pyfunction]
fn mcd(c1: Vec<f64>, c2: Vec<f64>) -> PyResult<f64> {
    phonolab::eval::mcd(&c1, &c2).map_err(to_py)
}

/// Word-level intelligibility in percent.
#[pyfunction]
fn intelligibility(reference: Vec<String>, hypothesis: Vec<String>) -> PyResult<f64> {
    phonolab::eval::intelligibility(&reference, &hypothesis).map_err(to_py)
}

/// LPC coefficients `a_1..a_p` to ascending line spectral frequencies.
#[pyfunction]
fn lpc_to_lsp(a: Vec<f64>) -> PyResult<Vec<f64>> {
    phonolab::dsp::lpc_to_lsp(&a).map_err(to_py)
}

#[pyfunction]
fn lsp_to_lpc(lsp: Vec<f64>) -> PyResult<Vec<f64>> {
    phonolab::dsp::lsp_to_lpc(&lsp).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (lsp, gamma = phonolab::synthesizer::DEFAULT_ENHANCEMENT))]
fn formant_enhance(lsp: Vec<f64>, gamma: f64) -> Vec<f64> {
    phonolab::synthesizer::formant_enhance(&lsp, gamma)
}

/// `(features, phonemes, rows)` of "GP", "SPE" or "eSPE".
#[pyfunction]
fn feature_table(name: &str) -> PyResult<(Vec<String>, Vec<String>, Vec<Vec<f64>>)> {
    let sys = system(name)?;
    Ok((sys.features().to_vec(), sys.phonemes().to_vec(), sys.rows().to_vec()))
}

/// Frame-level canonical posteriors for `(phone, start_frame, end_frame)` spans.
#[pyfunction]
fn canonical_posteriors(name: &str, spans: Vec<(String, usize, usize)>) -> PyResult<Vec<Vec<f64>>> {
    let sys = system(name)?;
    let spans = spans.into_iter().map(|(p, s, e)| PhoneSpan::new(p, s, e)).collect();
    let align = PhoneAlignment::new(spans).map_err(to_py)?;
    let z = phonoset::canonical_posteriors(&sys, &align).map_err(to_py)?;
    Ok(z.frames)
}

/// 16 kHz mono WAV samples scaled to [-1, 1).
#[pyfunction]
fn read_wav(path: PathBuf) -> PyResult<Vec<f64>> {
    Ok(phonolab::corpus::read_wav(&path).map_err(to_py)?.samples().to_vec())
}

#[pymodule]
fn pyphonolab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(mcd, m)?)?;
    m.add_function(wrap_pyfunction!(intelligibility, m)?)?;
    m.add_function(wrap_pyfunction!(lpc_to_lsp, m)?)?;
    m.add_function(wrap_pyfunction!(lsp_to_lpc, m)?)?;
    m.add_function(wrap_pyfunction!(formant_enhance, m)?)?;
    m.add_function(wrap_pyfunction!(feature_table, m)?)?;
    m.add_function(wrap_pyfunction!(canonical_posteriors, m)?)?;
    m.add_function(wrap_pyfunction!(read_wav, m)?)?;
    m.add("SAMPLE_RATE", phonolab::dsp::SAMPLE_RATE)?;
    Ok(())
}
