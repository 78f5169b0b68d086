//! Phonological atoms: the audio a synthesizer produces for a single active
//! feature, and their time-domain mixtures.

use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::write_wav;
use crate::dsp::{Waveform, FRAME_SHIFT_SECONDS, SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::phonoset::{FeatureSystem, PosteriorMatrix};
use crate::synthesizer::{RenderOptions, SynthModel, OUTPUT_PEAK};

pub const DEFAULT_ATOM_SECONDS: f64 = 2.0;

/// Recipes for sounds absent from the training language.
pub const GP_OE_RECIPE: [&str; 4] = ["A", "I", "U", "E"];
pub const GP_Y_RECIPE: [&str; 3] = ["I", "U", "E"];

#[derive(Debug, Clone, PartialEq)]
pub struct AtomSet {
    system: FeatureSystem,
    atoms: Vec<Waveform>,
    duration: f64,
}

impl AtomSet {
    pub fn new(system: FeatureSystem, atoms: Vec<Waveform>, duration: f64) -> Result<Self> {
        if atoms.len() != system.width() {
            return Err(Error::Dimension {
                expected: system.width(),
                got: atoms.len(),
            });
        }
        if atoms.windows(2).any(|w| w[0].len() != w[1].len()) {
            return Err(Error::contract("atoms must all have the same length"));
        }
        Ok(AtomSet {
            system,
            atoms,
            duration,
        })
    }

    pub fn system(&self) -> &FeatureSystem {
        &self.system
    }

    pub fn atoms(&self) -> &[Waveform] {
        &self.atoms
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn atom(&self, feature: &str) -> Result<&Waveform> {
        Ok(&self.atoms[self.system.feature_index(feature)?])
    }

    /// Writes `<feature>.wav` for every feature and returns the paths.
    pub fn export(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut names: Vec<String> = self.system.features().to_vec();
        // Feature names that differ only by case would overwrite each other on
        // case-insensitive filesystems.
        let folded: Vec<String> = names.iter().map(|n| n.to_lowercase()).collect();
        let clash = (0..names.len()).any(|i| folded[..i].contains(&folded[i]));
        if clash {
            names = names
                .iter()
                .enumerate()
                .map(|(k, n)| crate::analyzer::feature_file_stem(k, n))
                .collect();
        }
        let mut paths = Vec::with_capacity(names.len());
        for (name, w) in names.iter().zip(&self.atoms) {
            let p = dir.join(format!("{name}.wav"));
            write_wav(w, &p)?;
            paths.push(p);
        }
        Ok(paths)
    }
}

/// Unit posterior e_k held for `duration` seconds per feature, rendered with
/// the standard pipeline.
pub fn generate_atoms(m: &SynthModel, duration: f64, opts: &RenderOptions) -> Result<AtomSet> {
    if !(duration > 0.0) {
        return Err(Error::contract("atom duration must be positive"));
    }
    let sys = m.system();
    let frames = (duration / FRAME_SHIFT_SECONDS).round().max(1.0) as usize;
    let atoms = (0..sys.width())
        .map(|k| generate_atom(m, k, frames, opts))
        .collect::<Result<Vec<_>>>()?;
    AtomSet::new(sys.clone(), atoms, duration)
}

pub fn generate_atom(m: &SynthModel, k: usize, frames: usize, opts: &RenderOptions) -> Result<Waveform> {
    let sys = m.system();
    if k >= sys.width() {
        return Err(Error::UnknownFeature(k.to_string()));
    }
    let mut row = vec![0.0; sys.width()];
    row[k] = 1.0;
    let z = PosteriorMatrix::new(vec![row; frames], sys.name(), FRAME_SHIFT_SECONDS);
    m.render(&z, opts)
}

fn peak_normalize(mut x: Vec<f64>) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= OUTPUT_PEAK / peak);
    }
    x
}

/// `(1/S) Σ w_s · atom_s`, peak-normalized.
pub fn compose(atoms: &[&Waveform], weights: Option<&[f64]>) -> Result<Waveform> {
    let Some(first) = atoms.first() else {
        return Err(Error::contract("cannot compose an empty set of atoms"));
    };
    if atoms.iter().any(|a| a.len() != first.len()) {
        return Err(Error::contract("atoms must all have the same length"));
    }
    if let Some(w) = weights {
        if w.len() != atoms.len() {
            return Err(Error::Dimension {
                expected: atoms.len(),
                got: w.len(),
            });
        }
    }
    let s = atoms.len() as f64;
    let mut mix = vec![0.0; first.len()];
    for (i, a) in atoms.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        for (m, x) in mix.iter_mut().zip(a.samples()) {
            *m += w * x / s;
        }
    }
    Waveform::new(peak_normalize(mix), SAMPLE_RATE)
}

/// Mixes the atoms of the named features with unit weights.
pub fn compose_features(set: &AtomSet, features: &[&str]) -> Result<Waveform> {
    let atoms = features
        .iter()
        .map(|f| set.atom(f))
        .collect::<Result<Vec<_>>>()?;
    compose(&atoms, None)
}

/// Features active in a phoneme's table row.
pub fn phone_recipe<'a>(sys: &'a FeatureSystem, phoneme: &str) -> Result<Vec<&'a str>> {
    let row = sys.row(phoneme)?;
    let active: Vec<&str> = row
        .iter()
        .zip(sys.features())
        .filter(|(v, _)| **v > 0.5)
        .map(|(_, f)| f.as_str())
        .collect();
    if active.is_empty() {
        return Err(Error::Data(format!("phoneme `{phoneme}` has no active features")));
    }
    Ok(active)
}

pub fn compose_phone(set: &AtomSet, phoneme: &str) -> Result<Waveform> {
    compose_features(set, &phone_recipe(set.system(), phoneme)?)
}
