use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{
    attribute_errors, rescore_matrix, union_runs, AttributionConfig, MatrixConfig, RescoreMatrix, System, SystemRun,
    TargetOrder, UNION,
};
use crate::error::{Error, Result, StageExt};
use crate::formats::{
    render_attribution_text, render_attribution_tsv, render_matrix_text, render_matrix_tsv, write_atomic, write_nbest,
    AttributionSummary,
};
use crate::metrics::{BleuConfig, Smoothing};
use crate::scorers::{channel_train, Alignment, ChannelConfig, Model, PerturbedScorer};
use crate::search::BeamConfig;
use crate::textcore::{ParallelCorpus, Sentence};

use super::task::{gen_split, Split, TaskSpec};

/// Written first into an output directory and removed once every artifact is
/// in place; after a failure it holds the diagnostic.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

#[derive(Debug, Clone, PartialEq)]
pub struct SystemSpec {
    pub id: String,
    /// Size of the prefix of the shared training pool this system sees.
    pub train_size: usize,
    pub order: TargetOrder,
    pub channel: ChannelConfig,
    /// Gaussian noise on step scores; 0 disables the wrapper.
    pub noise_sigma: f64,
    pub noise_seed: u64,
}

impl SystemSpec {
    pub fn new(id: impl Into<String>, train_size: usize) -> Self {
        SystemSpec {
            id: id.into(),
            train_size,
            order: TargetOrder::Natural,
            channel: ChannelConfig::default(),
            noise_sigma: 0.0,
            noise_seed: 0,
        }
    }
}

/// A complete experiment recipe.
///
/// The text form is one `key = value` per line; `#` starts a comment.
///
/// ```text
/// seed = 7
/// task.kind = cipher            # copy | reverse | cipher
/// task.source_vocab = 30
/// task.target_vocab = 30
/// task.ambiguity = 3
/// task.noise = 0.1
/// task.min_len = 5
/// task.max_len = 15
/// test_size = 500
/// system.A.train_size = 5000
/// system.B.train_size = 500
/// system.B.order = reversed     # natural | reversed
/// beam.size = 50
/// beam.nbest = 50
/// ```
///
/// Per-system keys: `train_size`, `order`, `alignment` (forward | reverse,
/// defaults to match `order`), `lm_order`, `laplace`, `mu`, `eos_early`,
/// `eos_late`, `noise_sigma`, `noise_seed`. Other keys: `beam.max_len`
/// (`auto` or a number), `beam.length_norm`, `bleu.max_order`,
/// `bleu.smoothing` (none | add_one), `attribution.epsilon`,
/// `attribution.pairs` (space separated `SCORER:OTHER`, defaulting to every
/// ordered pair of systems) and `output`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub task: TaskSpec,
    pub test_size: usize,
    pub systems: Vec<SystemSpec>,
    pub beam: BeamConfig,
    pub bleu: BleuConfig,
    pub attribution: AttributionConfig,
    /// `(scorer, other list)`: the scorer's own list is compared with the other.
    pub pairs: Vec<(String, String)>,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(task: TaskSpec, test_size: usize, systems: Vec<SystemSpec>) -> Self {
        let pairs = default_pairs(&systems);
        ExperimentSpec {
            task,
            test_size,
            systems,
            beam: BeamConfig::default(),
            bleu: BleuConfig::default(),
            attribution: AttributionConfig::default(),
            pairs,
            output: None,
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut seed = None;
        let mut task = TaskSpec::default();
        let mut test_size = 500;
        let mut systems: Vec<SystemSpec> = Vec::new();
        let mut explicit_alignment: Vec<String> = Vec::new();
        let mut beam = BeamConfig::default();
        let mut bleu = BleuConfig::default();
        let mut attribution = AttributionConfig::default();
        let mut pairs = None;
        let mut output = None;

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::parse(line_no, "expected `key = value`"))?;
            let bad = |what: &str| Error::parse(line_no, format!("{key}: expected {what}, found {value:?}"));
            let num = || value.parse::<usize>().map_err(|_| bad("a non-negative integer"));
            let real = || value.parse::<f64>().map_err(|_| bad("a number"));

            match key {
                "seed" => seed = Some(value.parse::<u64>().map_err(|_| bad("an unsigned integer"))?),
                "test_size" => test_size = num()?,
                "output" => output = Some(PathBuf::from(value)),
                "task.kind" => task.kind = value.parse().map_err(|_| bad("copy, reverse or cipher"))?,
                "task.source_vocab" => task.source_vocab = num()?,
                "task.target_vocab" => task.target_vocab = num()?,
                "task.ambiguity" => task.ambiguity = num()?,
                "task.noise" => task.noise = real()?,
                "task.min_len" => task.min_len = num()?,
                "task.max_len" => task.max_len = num()?,
                "beam.size" => beam.beam_size = num()?,
                "beam.nbest" => beam.nbest = num()?,
                "beam.max_len" => beam.max_len = if value == "auto" { None } else { Some(num()?) },
                "beam.length_norm" => beam.length_norm = real()?,
                "bleu.max_order" => bleu.max_order = num()?,
                "bleu.smoothing" => {
                    bleu.smoothing = match value {
                        "none" => Smoothing::None,
                        "add_one" => Smoothing::AddOneForNGe2,
                        _ => return Err(bad("none or add_one")),
                    }
                }
                "attribution.epsilon" => attribution.epsilon = real()?,
                "attribution.pairs" => {
                    pairs = Some(
                        value
                            .split_whitespace()
                            .map(|p| {
                                p.split_once(':')
                                    .map(|(a, b)| (a.to_owned(), b.to_owned()))
                                    .ok_or_else(|| bad("SCORER:OTHER pairs"))
                            })
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                _ => {
                    let Some((id, field)) = key.strip_prefix("system.").and_then(|k| k.rsplit_once('.')) else {
                        return Err(Error::parse(line_no, format!("unknown key {key:?}")));
                    };
                    if id.is_empty() || id == UNION || id.contains(char::is_whitespace) || id.contains(':') {
                        return Err(Error::parse(line_no, format!("invalid system id {id:?}")));
                    }
                    let pos = match systems.iter().position(|s| s.id == id) {
                        Some(p) => p,
                        None => {
                            systems.push(SystemSpec::new(id, 0));
                            systems.len() - 1
                        }
                    };
                    let sys = &mut systems[pos];
                    match field {
                        "train_size" => sys.train_size = num()?,
                        "order" => {
                            sys.order = match value {
                                "natural" => TargetOrder::Natural,
                                "reversed" => TargetOrder::Reversed,
                                _ => return Err(bad("natural or reversed")),
                            }
                        }
                        "alignment" => {
                            sys.channel.alignment = match value {
                                "forward" => Alignment::Forward,
                                "reverse" => Alignment::Reverse,
                                _ => return Err(bad("forward or reverse")),
                            };
                            explicit_alignment.push(id.to_owned());
                        }
                        "lm_order" => sys.channel.lm_order = num()?,
                        "laplace" => sys.channel.laplace = real()?,
                        "mu" => sys.channel.mu = real()?,
                        "eos_early" => sys.channel.eos.early = real()?,
                        "eos_late" => sys.channel.eos.late = real()?,
                        "noise_sigma" => sys.noise_sigma = real()?,
                        "noise_seed" => sys.noise_seed = value.parse().map_err(|_| bad("an unsigned integer"))?,
                        _ => return Err(Error::parse(line_no, format!("unknown system field {field:?}"))),
                    }
                }
            }
        }

        for sys in &mut systems {
            if sys.order == TargetOrder::Reversed && !explicit_alignment.contains(&sys.id) {
                sys.channel.alignment = Alignment::Reverse;
            }
        }
        task.seed = seed.ok_or_else(|| Error::config("experiment spec needs a `seed`"))?;
        let pairs = pairs.unwrap_or_else(|| default_pairs(&systems));
        let spec = ExperimentSpec {
            task,
            test_size,
            systems,
            beam,
            bleu,
            attribution,
            pairs,
            output,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical text form; parses back to the same spec.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let t = &self.task;
        let _ = writeln!(out, "seed = {}", t.seed);
        let _ = writeln!(out, "task.kind = {}", t.kind);
        let _ = writeln!(out, "task.source_vocab = {}", t.source_vocab);
        let _ = writeln!(out, "task.target_vocab = {}", t.target_vocab);
        let _ = writeln!(out, "task.ambiguity = {}", t.ambiguity);
        let _ = writeln!(out, "task.noise = {}", t.noise);
        let _ = writeln!(out, "task.min_len = {}", t.min_len);
        let _ = writeln!(out, "task.max_len = {}", t.max_len);
        let _ = writeln!(out, "test_size = {}", self.test_size);
        for s in &self.systems {
            let p = format!("system.{}", s.id);
            let _ = writeln!(out, "{p}.train_size = {}", s.train_size);
            let order = match s.order {
                TargetOrder::Natural => "natural",
                TargetOrder::Reversed => "reversed",
            };
            let _ = writeln!(out, "{p}.order = {order}");
            let alignment = match s.channel.alignment {
                Alignment::Forward => "forward",
                Alignment::Reverse => "reverse",
            };
            let _ = writeln!(out, "{p}.alignment = {alignment}");
            let _ = writeln!(out, "{p}.lm_order = {}", s.channel.lm_order);
            let _ = writeln!(out, "{p}.laplace = {}", s.channel.laplace);
            let _ = writeln!(out, "{p}.mu = {}", s.channel.mu);
            let _ = writeln!(out, "{p}.eos_early = {}", s.channel.eos.early);
            let _ = writeln!(out, "{p}.eos_late = {}", s.channel.eos.late);
            let _ = writeln!(out, "{p}.noise_sigma = {}", s.noise_sigma);
            let _ = writeln!(out, "{p}.noise_seed = {}", s.noise_seed);
        }
        let _ = writeln!(out, "beam.size = {}", self.beam.beam_size);
        let _ = writeln!(out, "beam.nbest = {}", self.beam.nbest);
        match self.beam.max_len {
            Some(n) => {
                let _ = writeln!(out, "beam.max_len = {n}");
            }
            None => out.push_str("beam.max_len = auto\n"),
        }
        let _ = writeln!(out, "beam.length_norm = {}", self.beam.length_norm);
        let _ = writeln!(out, "bleu.max_order = {}", self.bleu.max_order);
        let smoothing = match self.bleu.smoothing {
            Smoothing::None => "none",
            Smoothing::AddOneForNGe2 => "add_one",
        };
        let _ = writeln!(out, "bleu.smoothing = {smoothing}");
        let _ = writeln!(out, "attribution.epsilon = {}", self.attribution.epsilon);
        let pairs: Vec<String> = self.pairs.iter().map(|(a, b)| format!("{a}:{b}")).collect();
        let _ = writeln!(out, "attribution.pairs = {}", pairs.join(" "));
        if let Some(o) = &self.output {
            let _ = writeln!(out, "output = {}", o.display());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.task.validate()?;
        self.beam.validate()?;
        self.bleu.validate()?;
        if self.test_size == 0 {
            return Err(Error::config("test_size must be >= 1"));
        }
        if self.systems.is_empty() {
            return Err(Error::config("experiment needs at least one system"));
        }
        for s in &self.systems {
            if s.train_size == 0 {
                return Err(Error::config(format!("system {}: train_size must be >= 1", s.id)));
            }
            if !(s.noise_sigma >= 0.0 && s.noise_sigma.is_finite()) {
                return Err(Error::config(format!("system {}: noise_sigma must be >= 0", s.id)));
            }
        }
        let known: Vec<String> = self.systems.iter().map(|s| s.id.clone()).collect();
        for (a, b) in &self.pairs {
            if !known.contains(a) {
                return Err(Error::UnknownSystem {
                    id: a.clone(),
                    known: known.clone(),
                });
            }
            if !known.contains(b) && b != UNION {
                let mut with_union = known.clone();
                with_union.push(UNION.to_owned());
                return Err(Error::UnknownSystem {
                    id: b.clone(),
                    known: with_union,
                });
            }
        }
        Ok(())
    }

    fn pool_size(&self) -> usize {
        self.systems.iter().map(|s| s.train_size).max().unwrap_or(0)
    }
}

fn default_pairs(systems: &[SystemSpec]) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for a in systems {
        for b in systems {
            if a.id != b.id {
                pairs.push((a.id.clone(), b.id.clone()));
            }
        }
    }
    pairs
}

/// Everything an experiment produced, in memory.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub split: Split,
    /// Training subset of each system, in natural target order.
    pub training: Vec<ParallelCorpus>,
    pub systems: Vec<System>,
    pub runs: Vec<SystemRun>,
    pub union: Option<SystemRun>,
    pub matrix: RescoreMatrix,
    pub attributions: Vec<AttributionSummary>,
}

impl Experiment {
    pub fn run(&self, id: &str) -> Result<&SystemRun> {
        self.runs
            .iter()
            .chain(self.union.as_ref())
            .find(|r| r.system_id == id)
            .ok_or_else(|| Error::UnknownSystem {
                id: id.to_owned(),
                known: self.runs.iter().chain(self.union.as_ref()).map(|r| r.system_id.clone()).collect(),
            })
    }

    pub fn system(&self, id: &str) -> Result<&System> {
        self.systems.iter().find(|s| s.id == id).ok_or_else(|| Error::UnknownSystem {
            id: id.to_owned(),
            known: self.systems.iter().map(|s| s.id.clone()).collect(),
        })
    }
}

fn train_system(spec: &SystemSpec, corpus: &ParallelCorpus) -> Result<System> {
    let data = match spec.order {
        TargetOrder::Natural => corpus.clone(),
        TargetOrder::Reversed => corpus.with_reversed_targets(),
    };
    let mut model = Model::from(channel_train(&data, &spec.channel)?);
    if spec.noise_sigma > 0.0 {
        model = PerturbedScorer::new(model, spec.noise_sigma, spec.noise_seed)?.into();
    }
    let system = System::new(&spec.id, model);
    Ok(match spec.order {
        TargetOrder::Natural => system,
        TargetOrder::Reversed => system.reversed(),
    })
}

/// Runs the whole protocol in memory.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Experiment> {
    spec.validate().stage(|| "spec".to_owned())?;
    let split = gen_split(&spec.task, spec.test_size, spec.pool_size()).stage(|| "gen-data".to_owned())?;
    let sources: Vec<Sentence> = split.test.sources().cloned().collect();
    let references: Vec<Sentence> = split.test.references().cloned().collect();

    let mut training = Vec::new();
    let mut systems = Vec::new();
    for s in &spec.systems {
        let corpus = split.train.prefix(format!("train.{}", s.id), s.train_size);
        systems.push(train_system(s, &corpus).stage(|| format!("train {}", s.id))?);
        training.push(corpus);
    }
    let runs = systems
        .iter()
        .map(|sys| sys.decode(&sources, &spec.beam).stage(|| format!("decode {}", sys.id)))
        .collect::<Result<Vec<_>>>()?;
    let union = if runs.len() > 1 {
        Some(union_runs(&runs.iter().collect::<Vec<_>>()).stage(|| "union".to_owned())?)
    } else {
        None
    };
    let matrix_cfg = MatrixConfig {
        bleu: spec.bleu,
        length_norm: spec.beam.length_norm,
        ..MatrixConfig::default()
    };
    let matrix = rescore_matrix(&runs, &systems, &references, &matrix_cfg).stage(|| "matrix".to_owned())?;

    let mut exp = Experiment {
        split,
        training,
        systems,
        runs,
        union,
        matrix,
        attributions: Vec::new(),
    };
    let cfg = AttributionConfig {
        length_norm: spec.beam.length_norm,
        ..spec.attribution
    };
    for (a, b) in &spec.pairs {
        let report = (|| {
            let system = exp.system(a)?;
            attribute_errors(system, &exp.run(a)?.lists, &exp.run(b)?.lists, &cfg)
        })()
        .stage(|| format!("attribute {a}:{b}"))?;
        exp.attributions.push(AttributionSummary {
            scorer: a.clone(),
            own: a.clone(),
            other: b.clone(),
            report,
        });
    }
    Ok(exp)
}

/// Writes `corpora/`, `scorers/`, `nbest/` and `reports/` under `dir`, plus
/// the canonical spec as `experiment.txt`.
pub fn write_artifacts(exp: &Experiment, spec: &ExperimentSpec, dir: &Path) -> Result<()> {
    write_atomic(&dir.join("experiment.txt"), spec.to_text().as_bytes())?;
    let corpora = dir.join("corpora");
    exp.split
        .test
        .write(&corpora.join("test.src"), &corpora.join("test.ref"))?;
    for corpus in &exp.training {
        corpus.write(
            &corpora.join(format!("{}.src", corpus.name())),
            &corpora.join(format!("{}.ref", corpus.name())),
        )?;
    }
    for sys in &exp.systems {
        sys.scorer.write(&dir.join("scorers").join(format!("{}.scorer", sys.id)))?;
    }
    for run in exp.runs.iter().chain(exp.union.as_ref()) {
        write_nbest(&dir.join("nbest").join(format!("{}.nbest", run.system_id)), &run.lists)?;
    }
    let reports = dir.join("reports");
    let title = format!(
        "{} task, seed {}, {} test sentences, {}-best",
        spec.task.kind, spec.task.seed, spec.test_size, spec.beam.nbest
    );
    write_atomic(&reports.join("matrix.txt"), render_matrix_text(&exp.matrix, &title).as_bytes())?;
    write_atomic(&reports.join("matrix.tsv"), render_matrix_tsv(&exp.matrix).as_bytes())?;
    write_atomic(
        &reports.join("attribution.txt"),
        render_attribution_text(&exp.attributions).as_bytes(),
    )?;
    write_atomic(
        &reports.join("attribution.tsv"),
        render_attribution_tsv(&exp.attributions).as_bytes(),
    )?;
    Ok(())
}

/// Runs the experiment and writes its artifacts. While running, and after a
/// failure, `dir` holds an [`INCOMPLETE_MARKER`] file.
pub fn run_to_dir(spec: &ExperimentSpec, dir: &Path) -> Result<Experiment> {
    let marker = dir.join(INCOMPLETE_MARKER);
    write_atomic(&marker, b"running\n")?;
    let result = run_experiment(spec).and_then(|exp| {
        write_artifacts(&exp, spec, dir).stage(|| "write".to_owned())?;
        Ok(exp)
    });
    match result {
        Ok(exp) => {
            fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
            Ok(exp)
        }
        Err(e) => {
            let _ = write_atomic(&marker, format!("{e}\n").as_bytes());
            Err(e)
        }
    }
}
