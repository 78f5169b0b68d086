//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::analyzer::{train_analyzer_bank, AnalyzerBank, AnalyzerConfig};
use crate::atoms::{compose_features, generate_atoms, phone_recipe, AtomSet, DEFAULT_ATOM_SECONDS};
use crate::corpus::{load_config, load_corpus, parse_cmudict, read_wav, write_wav, Config, Corpus};
use crate::dsp::{estimate_formants, frame_signal};
use crate::error::{Error, Result};
use crate::eval::{
    build_exemplars, diagonal_mean, distance_matrix, export_matrix, intelligibility, normalize, scale_natural,
    MatrixFormat,
};
use crate::neural::TrainConfig;
use crate::phonoset::{canonical_posteriors, load_system, FeatureSystem, PosteriorMatrix, SystemName};
use crate::synthesizer::{
    extract_targets, f0_track, train_synthesizer, vocode, PitchSource, RenderOptions, SynthConfig, SynthModel,
    DEFAULT_ENHANCEMENT,
};
use crate::toy::{make_toy_corpus, ToyConfig};
use crate::tts::{tts_synthesize, DurationTable, TtsInput};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

/// Config sections and keys understood by the tools.
pub const KNOWN_KEYS: &[(&str, &[&str])] = &[
    (
        "analyzer",
        &[
            "hidden", "learning_rate", "batch_size", "epochs", "patience", "momentum", "seed", "heldout_fraction",
            "frame_stride",
        ],
    ),
    (
        "synth",
        &[
            "hidden", "learning_rate", "batch_size", "epochs", "patience", "momentum", "seed", "heldout_fraction",
            "posteriors",
        ],
    ),
    ("render", &["enhancement", "seed"]),
    ("tts", &["vowel_frames", "consonant_frames", "silence_frames"]),
    ("toy", &["utterances", "seed"]),
];

#[derive(Parser, Debug)]
#[command(name = "phonolab", version, about = "Phonological analysis, synthesis and evaluation")]
struct Cli {
    /// INI configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for training, corpus generation or excitation noise.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads where a command can use them.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct SystemArg {
    /// Feature system: gp, spe or espe.
    #[arg(long, default_value = "gp")]
    system: SystemName,
    /// CSV feature table replacing the built-in one.
    #[arg(long)]
    system_table: Option<PathBuf>,
}

impl SystemArg {
    fn resolve(&self) -> Result<FeatureSystem> {
        match &self.system_table {
            None => Ok(load_system(self.system)),
            Some(p) => FeatureSystem::read_csv(self.system.as_str(), crate::error::open_file(p)?),
        }
    }
}

#[derive(Args, Debug, Clone)]
struct RenderArgs {
    /// LSP gap exponent for formant enhancement; 1 disables it.
    #[arg(long)]
    enhancement: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one binary classifier per phonological feature.
    TrainAnalyzer {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        system: SystemArg,
        /// Output directory for the bank.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the posterior-to-parameter regression network.
    TrainSynth {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        system: SystemArg,
        /// Analyzer bank whose posteriors become the inputs; canonical
        /// posteriors from the labels are used without it.
        #[arg(long)]
        bank: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write per-frame posteriors of a WAV file as CSV.
    Analyze {
        #[arg(long)]
        bank: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
    /// Render a posterior CSV to audio.
    Synthesize {
        #[arg(long)]
        model: PathBuf,
        /// Take F0 and voicing from this recording instead of the model.
        #[arg(long)]
        pitch_from: Option<PathBuf>,
        #[command(flatten)]
        render: RenderArgs,
        input: PathBuf,
        output: PathBuf,
    },
    /// Analyze and re-synthesize a recording.
    Vocode {
        #[command(flatten)]
        system: SystemArg,
        #[arg(long)]
        bank: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Use the input's own F0 track.
        #[arg(long)]
        original_pitch: bool,
        #[command(flatten)]
        render: RenderArgs,
        input: PathBuf,
        output: PathBuf,
    },
    /// Single-feature atoms.
    #[command(subcommand)]
    Atoms(AtomsCommand),
    /// Mix atoms into a new sound.
    Compose {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated feature names.
        #[arg(long, value_delimiter = ',', conflicts_with = "phone", required_unless_present = "phone")]
        features: Vec<String>,
        /// Compose the features active in this phoneme's table row.
        #[arg(long)]
        phone: Option<String>,
        /// Comma-separated mixing weights, one per feature.
        #[arg(long, value_delimiter = ',')]
        weights: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_ATOM_SECONDS)]
        duration: f64,
        #[command(flatten)]
        render: RenderArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Text or label file to speech.
    Tts {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, conflicts_with = "labels", required_unless_present = "labels")]
        text: Option<String>,
        /// HTK label file supplying phones and durations.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// CMUdict-format lexicon for text input.
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[command(flatten)]
        render: RenderArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Phone distance matrix of test recordings against references.
    EvalMatrix {
        /// Manifest of the vocoded or synthesized recordings.
        #[arg(long)]
        test: PathBuf,
        /// Manifest of natural recordings with the same phone inventory.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// CSV of the normalized matrix.
        #[arg(long)]
        out: PathBuf,
        /// PGM heatmap of the normalized matrix.
        #[arg(long)]
        heatmap: Option<PathBuf>,
        /// Also write the raw (unscaled) test-vs-reference matrix.
        #[arg(long)]
        raw_out: Option<PathBuf>,
        /// Also write the column-scaled reference-vs-reference matrix; `.pgm`
        /// gives a heatmap whose values span the colour map.
        #[arg(long)]
        natural_out: Option<PathBuf>,
    },
    /// Word intelligibility score of a transcript.
    EvalIntel {
        /// Text file of reference words, whitespace separated.
        #[arg(long = "ref")]
        reference: PathBuf,
        /// Text file of the words a listener reported.
        #[arg(long)]
        hyp: PathBuf,
    },
    /// Write a seeded synthetic corpus.
    MakeToyCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        utterances: Option<usize>,
    },
    /// Report configuration keys the tools do not recognise.
    LintConfig { path: PathBuf },
}

#[derive(Subcommand, Debug)]
enum AtomsCommand {
    /// Render every atom and report formant estimates.
    Generate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ATOM_SECONDS)]
        duration: f64,
        #[command(flatten)]
        render: RenderArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write `<feature>.wav` for every atom.
    Export {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ATOM_SECONDS)]
        duration: f64,
        #[command(flatten)]
        render: RenderArgs,
        dir: PathBuf,
    },
}

/// Parses `argv` (including the program name), runs the command and returns
/// the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DATA
        }
    }
}

struct Ctx {
    config: Config,
    seed: Option<u64>,
    jobs: usize,
}

impl Ctx {
    fn seed(&self, section: &str, default: u64) -> Result<u64> {
        match self.seed {
            Some(s) => Ok(s),
            None => self.config.get_u64(section, "seed", default),
        }
    }

    fn train_config(&self, section: &str, base: TrainConfig) -> Result<TrainConfig> {
        let c = &self.config;
        Ok(TrainConfig {
            learning_rate: c.get_f64(section, "learning_rate", base.learning_rate)?,
            batch_size: c.get_usize(section, "batch_size", base.batch_size)?,
            epochs: c.get_usize(section, "epochs", base.epochs)?,
            seed: self.seed(section, base.seed)?,
            early_stop_patience: c.get_usize(section, "patience", base.early_stop_patience)?,
            loss: base.loss,
            momentum: c.get_f64(section, "momentum", base.momentum)?,
        })
    }

    fn render(&self, args: &RenderArgs) -> Result<RenderOptions> {
        let enhancement = match args.enhancement {
            Some(g) => g,
            None => self.config.get_f64("render", "enhancement", DEFAULT_ENHANCEMENT)?,
        };
        if !(enhancement > 0.0) {
            return Err(Error::Data("enhancement must be positive".into()));
        }
        Ok(RenderOptions {
            enhancement,
            seed: self.seed("render", 0)?,
            pitch: PitchSource::Model,
        })
    }
}

/// Prints the settings a run actually used.
fn announce(command: &str, settings: &[(&str, String)]) {
    eprintln!("# phonolab {command}");
    for (k, v) in settings {
        eprintln!("#   {k} = {v}");
    }
}

fn train_settings(t: &TrainConfig, hidden: &[usize]) -> Vec<(&'static str, String)> {
    vec![
        ("hidden", format!("{hidden:?}")),
        ("learning_rate", t.learning_rate.to_string()),
        ("batch_size", t.batch_size.to_string()),
        ("epochs", t.epochs.to_string()),
        ("patience", t.early_stop_patience.to_string()),
        ("momentum", t.momentum.to_string()),
        ("seed", t.seed.to_string()),
    ]
}

fn render_settings(r: &RenderOptions) -> Vec<(&'static str, String)> {
    vec![("enhancement", r.enhancement.to_string()), ("seed", r.seed.to_string())]
}

fn load_corpus_logged(manifest: &Path) -> Result<Corpus> {
    let corpus = load_corpus(manifest)?;
    for w in &corpus.warnings {
        log::warn!("{w}");
    }
    if corpus.utterances.is_empty() {
        return Err(Error::Data(format!("{}: manifest lists no utterances", manifest.display())));
    }
    Ok(corpus)
}

fn run(cli: Cli) -> Result<i32> {
    let config = match &cli.config {
        Some(p) => load_config(p)?,
        None => Config::default(),
    };
    let ctx = Ctx {
        config,
        seed: cli.seed,
        jobs: cli.jobs.max(1),
    };
    if let Some(p) = &cli.config {
        eprintln!("# config file {}", p.display());
    }
    match cli.command {
        Command::TrainAnalyzer { manifest, system, out } => {
            let sys = system.resolve()?;
            let c = &ctx.config;
            let cfg = AnalyzerConfig {
                hidden: c.get_usize_list("analyzer", "hidden", &AnalyzerConfig::default().hidden)?,
                train: ctx.train_config("analyzer", TrainConfig::classifier())?,
                heldout_fraction: c.get_f64("analyzer", "heldout_fraction", 0.1)?,
                frame_stride: c.get_usize("analyzer", "frame_stride", 1)?,
                jobs: ctx.jobs,
            };
            let mut s = vec![("system", sys.name().to_string())];
            s.extend(train_settings(&cfg.train, &cfg.hidden));
            s.push(("heldout_fraction", cfg.heldout_fraction.to_string()));
            s.push(("frame_stride", cfg.frame_stride.to_string()));
            s.push(("jobs", cfg.jobs.to_string()));
            announce("train-analyzer", &s);
            let corpus = load_corpus_logged(&manifest)?;
            let pairs: Vec<_> = corpus.utterances.iter().map(|u| (&u.wav, &u.alignment)).collect();
            let (bank, table) = train_analyzer_bank(&pairs, &sys, &cfg)?;
            bank.save(&out)?;
            print!("{table}");
            fs::write(out.join("accuracy.txt"), table.to_string())?;
        }
        Command::TrainSynth { manifest, system, bank, out } => {
            let sys = system.resolve()?;
            let c = &ctx.config;
            let cfg = SynthConfig {
                hidden: c.get_usize_list("synth", "hidden", &SynthConfig::default().hidden)?,
                train: ctx.train_config("synth", TrainConfig::regressor())?,
                heldout_fraction: c.get_f64("synth", "heldout_fraction", 0.1)?,
            };
            let requested = c.get_string("synth", "posteriors", "");
            let source = match (&bank, requested.as_str()) {
                (Some(_), "" | "analyzer") => "analyzer",
                (None, "" | "canonical") => "canonical",
                (None, "analyzer") => return Err(Error::Data("[synth] posteriors = analyzer needs --bank".into())),
                (_, other) => other,
            };
            if source != "analyzer" && source != "canonical" {
                return Err(Error::Data(format!("[synth] posteriors: unknown source `{source}`")));
            }
            let mut s = vec![("system", sys.name().to_string()), ("posteriors", source.to_string())];
            s.extend(train_settings(&cfg.train, &cfg.hidden));
            s.push(("heldout_fraction", cfg.heldout_fraction.to_string()));
            announce("train-synth", &s);
            let analyzer = match (&bank, source) {
                (Some(b), "analyzer") => {
                    let bank = AnalyzerBank::load(b)?;
                    if bank.system().features() != sys.features() {
                        return Err(Error::SystemMismatch(bank.system().name().into(), sys.name().into()));
                    }
                    Some(bank)
                }
                _ => None,
            };
            let corpus = load_corpus_logged(&manifest)?;
            let data = corpus
                .utterances
                .iter()
                .map(|u| {
                    let z = match &analyzer {
                        Some(b) => b.analyze(&u.wav),
                        None => canonical_posteriors(&sys, &u.alignment)?,
                    };
                    Ok((z, extract_targets(&u.wav)))
                })
                .collect::<Result<Vec<_>>>()?;
            let (model, report) = train_synthesizer(&data, &sys, &cfg)?;
            model.save(&out)?;
            println!(
                "best epoch {} of {}",
                report.history.best_epoch,
                report.history.epochs.len()
            );
            if let (Some(m), Some(b)) = (report.heldout_mse, report.baseline_mse) {
                println!("held-out mse {m:.6} (mean predictor {b:.6})");
            }
        }
        Command::Analyze { bank, input, output } => {
            announce("analyze", &[("bank", bank.display().to_string())]);
            let bank = AnalyzerBank::load(&bank)?;
            let z = bank.analyze(&read_wav(&input)?);
            z.write_csv(bank.system(), crate::error::create_file(&output)?)?;
            println!("{} frames", z.num_frames());
        }
        Command::Synthesize { model, pitch_from, render, input, output } => {
            let mut opts = ctx.render(&render)?;
            announce("synthesize", &render_settings(&opts));
            let model = SynthModel::load(&model)?;
            let z = PosteriorMatrix::read_csv(crate::error::open_file(&input)?)?;
            if let Some(p) = pitch_from {
                let mut f0 = f0_track(&read_wav(&p)?);
                f0.resize(z.num_frames(), 0.0);
                opts.pitch = PitchSource::External(f0);
            }
            let w = model.render(&z, &opts)?;
            write_wav(&w, &output)?;
            println!("{} frames", w.num_frames());
        }
        Command::Vocode { system, bank, model, original_pitch, render, input, output } => {
            let mut opts = ctx.render(&render)?;
            let sys = system.resolve()?;
            let mut s = vec![("system", sys.name().to_string()), ("original_pitch", original_pitch.to_string())];
            s.extend(render_settings(&opts));
            announce("vocode", &s);
            let bank = AnalyzerBank::load(&bank)?;
            let model = SynthModel::load(&model)?;
            for other in [bank.system(), model.system()] {
                if other.features() != sys.features() {
                    return Err(Error::SystemMismatch(other.name().into(), sys.name().into()));
                }
            }
            let w = read_wav(&input)?;
            if original_pitch {
                opts.pitch = PitchSource::External(f0_track(&w));
            }
            write_wav(&vocode(&bank, &model, &w, &opts)?, &output)?;
        }
        Command::Atoms(AtomsCommand::Generate { model, duration, render, out }) => {
            let opts = ctx.render(&render)?;
            let mut s = vec![("duration", duration.to_string())];
            s.extend(render_settings(&opts));
            announce("atoms generate", &s);
            let set = generate_atoms(&SynthModel::load(&model)?, duration, &opts)?;
            let paths = set.export(&out)?;
            report_formants(&set, &paths);
        }
        Command::Atoms(AtomsCommand::Export { model, duration, render, dir }) => {
            let opts = ctx.render(&render)?;
            let mut s = vec![("duration", duration.to_string())];
            s.extend(render_settings(&opts));
            announce("atoms export", &s);
            let set = generate_atoms(&SynthModel::load(&model)?, duration, &opts)?;
            for p in set.export(&dir)? {
                println!("{}", p.display());
            }
        }
        Command::Compose { model, features, phone, weights, duration, render, out } => {
            let opts = ctx.render(&render)?;
            let model = SynthModel::load(&model)?;
            let recipe: Vec<String> = match &phone {
                Some(p) => phone_recipe(model.system(), p)?.into_iter().map(str::to_string).collect(),
                None => features,
            };
            let mut s = vec![("features", recipe.join(",")), ("duration", duration.to_string())];
            s.extend(render_settings(&opts));
            announce("compose", &s);
            let set = generate_atoms(&model, duration, &opts)?;
            let names: Vec<&str> = recipe.iter().map(String::as_str).collect();
            let w = if weights.is_empty() {
                compose_features(&set, &names)?
            } else {
                let atoms = names.iter().map(|f| set.atom(f)).collect::<Result<Vec<_>>>()?;
                crate::atoms::compose(&atoms, Some(&weights))?
            };
            write_wav(&w, &out)?;
        }
        Command::Tts { model, text, labels, lexicon, render, out } => {
            let opts = ctx.render(&render)?;
            let c = &ctx.config;
            let dt = DurationTable::with_classes(
                c.get_usize("tts", "vowel_frames", crate::tts::DEFAULT_VOWEL_FRAMES)?,
                c.get_usize("tts", "consonant_frames", crate::tts::DEFAULT_CONSONANT_FRAMES)?,
                c.get_usize("tts", "silence_frames", crate::tts::DEFAULT_SILENCE_FRAMES)?,
            )?;
            let mut s = vec![
                ("vowel_frames", dt.vowel.to_string()),
                ("consonant_frames", dt.consonant.to_string()),
                ("silence_frames", dt.silence.to_string()),
            ];
            s.extend(render_settings(&opts));
            announce("tts", &s);
            let model = SynthModel::load(&model)?;
            let lex = lexicon.as_deref().map(parse_cmudict).transpose()?;
            let input = match (&text, &labels) {
                (Some(t), _) => TtsInput::Text(t),
                (None, Some(l)) => TtsInput::Labels(l),
                (None, None) => unreachable!("clap requires one input"),
            };
            let sys = model.system().clone();
            let (w, align) = tts_synthesize(&input, &sys, &model, lex.as_ref(), &dt, &opts)?;
            write_wav(&w, &out)?;
            let phones: Vec<&str> = align.entries().iter().map(|s| s.phone.as_str()).collect();
            println!("{}", phones.join(" "));
        }
        Command::EvalMatrix { test, reference, out, heatmap, raw_out, natural_out } => {
            announce(
                "eval-matrix",
                &[("test", test.display().to_string()), ("ref", reference.display().to_string())],
            );
            let t = load_corpus_logged(&test)?;
            let r = load_corpus_logged(&reference)?;
            let tx = build_exemplars(&t.utterances.iter().map(|u| (&u.wav, &u.alignment)).collect::<Vec<_>>());
            let rx = build_exemplars(&r.utterances.iter().map(|u| (&u.wav, &u.alignment)).collect::<Vec<_>>());
            let natural = scale_natural(&distance_matrix(&rx, &rx)?);
            let raw = distance_matrix(&tx, &rx)?;
            let natural = natural.select(&raw.labels.iter().map(String::as_str).collect::<Vec<_>>())?;
            let d = normalize(&raw, &natural)?;
            export_matrix(&d, &out, MatrixFormat::from_path(&out))?;
            if let Some(h) = heatmap {
                export_matrix(&d, &h, MatrixFormat::Pgm)?;
            }
            if let Some(p) = raw_out {
                export_matrix(&raw, &p, MatrixFormat::from_path(&p))?;
            }
            if let Some(p) = natural_out {
                export_matrix(&natural, &p, MatrixFormat::from_path(&p))?;
            }
            let minima = d.diagonal_row_minima();
            println!("phones {}", d.size());
            println!("diagonal mean {:.4}", diagonal_mean(&d));
            println!("diagonal row minima {}/{}", minima.len(), d.size());
        }
        Command::EvalIntel { reference, hyp } => {
            announce("eval-intel", &[]);
            let words = |p: &Path| -> Result<Vec<String>> {
                Ok(crate::error::read_text(p)?
                    .split_whitespace()
                    .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '\'').to_uppercase())
                    .filter(|w| !w.is_empty())
                    .collect())
            };
            let score = intelligibility(&words(&reference)?, &words(&hyp)?)?;
            println!("{score:.2}");
        }
        Command::MakeToyCorpus { out, utterances } => {
            let base = ToyConfig::default();
            let cfg = ToyConfig {
                seed: ctx.seed("toy", base.seed)?,
                utterances: match utterances {
                    Some(n) => n,
                    None => ctx.config.get_usize("toy", "utterances", base.utterances)?,
                },
                ..base
            };
            announce(
                "make-toy-corpus",
                &[("seed", cfg.seed.to_string()), ("utterances", cfg.utterances.to_string())],
            );
            println!("{}", make_toy_corpus(&out, &cfg)?.display());
        }
        Command::LintConfig { path } => {
            let c = load_config(&path)?;
            let unknown = c.unknown_keys(KNOWN_KEYS);
            for (s, k) in &unknown {
                println!("{}: unknown key [{s}] {k}", path.display());
            }
            if !unknown.is_empty() {
                return Ok(EXIT_DATA);
            }
            println!("{}: ok", path.display());
        }
    }
    Ok(EXIT_OK)
}

/// Formant estimates at the middle of each atom; purely informational.
fn report_formants(set: &AtomSet, paths: &[PathBuf]) {
    for ((feature, w), p) in set.system().features().iter().zip(set.atoms()).zip(paths) {
        let frames = frame_signal(w);
        let mid = frames.frames.get(frames.len() / 2).cloned().unwrap_or_default();
        let f: Vec<String> = estimate_formants(&mid, 4)
            .iter()
            .map(|f| format!("{:.0}", f.freq))
            .collect();
        println!("{feature:<12} {}  formants [{}]", p.display(), f.join(", "));
    }
}
