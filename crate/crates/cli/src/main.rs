//! `nbest`: n-best decoding, rescoring and search-error analysis.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nbest_core::analysis::{
    attribute_errors, rescore_all, rescore_matrix, union_runs, AttributionConfig, Combination, MatrixConfig, System,
    SystemRun, UNION,
};
use nbest_core::formats::{
    parse_matrix_tsv, read_nbest, render_attribution_text, render_attribution_tsv, render_matrix_text,
    render_matrix_tsv, write_atomic, write_nbest, AttributionSummary,
};
use nbest_core::metrics::{corpus_bleu_of, oracle_corpus_bleu, oracle_selections, percent, BleuConfig, Smoothing};
use nbest_core::scorers::{channel_train, Alignment, ChannelConfig, EosSchedule, Model, PerturbedScorer};
use nbest_core::search::{BeamConfig, NBestList};
use nbest_core::synthlab::{gen_split, run_to_dir, ExperimentSpec, TaskKind, TaskSpec};
use nbest_core::textcore::{bpe_apply, bpe_train, read_sentences, write_sentences, BpeSide, ParallelCorpus, Sentence};
use nbest_core::Error;

#[derive(Parser)]
#[command(name = "nbest", version, about = "n-best list rescoring and search-error analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic test set and a disjoint, noisy training set.
    GenData(GenDataArgs),
    /// Train a channel scorer on a parallel corpus.
    Train(TrainArgs),
    /// Beam-decode sources into a Moses n-best file.
    Decode(DecodeArgs),
    /// Pick the best entry of every list under one or more scorers.
    Rescore(RescoreArgs),
    /// Oracle BLEU of an n-best file against references.
    Oracle(OracleArgs),
    /// Join sentence-aligned n-best files.
    Union(UnionArgs),
    /// Rescoring matrix of n-best files against models, with an oracle column.
    Matrix(MatrixArgs),
    /// Classify sentences as search errors, model preferences or ties.
    Attribute(AttributeArgs),
    /// Render a TSV matrix as an aligned table.
    Report(ReportArgs),
    /// Run a complete experiment spec.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Copy,
    Reverse,
    Cipher,
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Source,
    Target,
    Joint,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlignmentArg {
    Forward,
    Reverse,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_enum, default_value = "cipher")]
    task: KindArg,
    #[arg(long, default_value_t = 30)]
    source_vocab: usize,
    #[arg(long, default_value_t = 30)]
    target_vocab: usize,
    /// Target alternatives per source symbol (cipher only).
    #[arg(long, default_value_t = 3)]
    ambiguity: usize,
    /// Training target-token corruption rate.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 5)]
    min_len: usize,
    #[arg(long, default_value_t = 15)]
    max_len: usize,
    #[arg(long, default_value_t = 500)]
    test_size: usize,
    #[arg(long, default_value_t = 5000)]
    train_size: usize,
    /// Segment both corpora with this many BPE merges learned on the training data.
    #[arg(long)]
    bpe_merges: Option<usize>,
    #[arg(long, value_enum, default_value = "target")]
    bpe_side: SideArg,
    #[arg(long)]
    seed: u64,
    /// Directory receiving test.src, test.ref, train.src, train.ref (and bpe.codes).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ScorerArgs {
    /// Scorer file written by `train`.
    #[arg(long)]
    scorer: PathBuf,
    /// The scorer emits targets right to left.
    #[arg(long)]
    reversed: bool,
    /// System id used as the feature name; defaults to the scorer file stem.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Train on reversed targets (pair with `--reversed` when decoding).
    #[arg(long)]
    reverse_target: bool,
    /// Defaults to `reverse` with --reverse-target, `forward` otherwise.
    #[arg(long, value_enum)]
    alignment: Option<AlignmentArg>,
    #[arg(long, default_value_t = 2)]
    lm_order: usize,
    #[arg(long, default_value_t = 0.01)]
    laplace: f64,
    /// Emission weight against the language model.
    #[arg(long, default_value_t = 0.5)]
    mu: f64,
    #[arg(long, default_value = "1e-30")]
    eos_early: f64,
    #[arg(long, default_value_t = EosSchedule::default().late)]
    eos_late: f64,
    /// Standard deviation of seeded Gaussian noise added to step scores.
    #[arg(long, default_value_t = 0.0)]
    noise_sigma: f64,
    #[arg(long)]
    seed: u64,
}

#[derive(Args)]
struct DecodeArgs {
    #[command(flatten)]
    scorer: ScorerArgs,
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    beam: usize,
    #[arg(long, default_value_t = 50)]
    nbest: usize,
    /// Defaults to twice the source length plus five.
    #[arg(long)]
    max_len: Option<usize>,
    /// Length normalization exponent.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
}

#[derive(Args)]
struct RescoreArgs {
    /// Scorer file, or `file:reversed` for a right-to-left scorer. Several
    /// are combined by summing their scores.
    #[arg(long = "scorer", required = true)]
    scorers: Vec<String>,
    #[arg(long)]
    nbest: PathBuf,
    /// Source sentences the lists were decoded from.
    #[arg(long)]
    src: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Selected hypotheses, one per line.
    #[arg(long)]
    out: PathBuf,
    /// Also print corpus BLEU of the selection against these references.
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    nbest: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Write the oracle selections here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct UnionArgs {
    #[arg(long = "nbest", required = true)]
    nbest: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MatrixArgs {
    /// Rescoring model as `ID=scorer-file`, or `ID=scorer-file:reversed`.
    #[arg(long = "system", required = true)]
    systems: Vec<String>,
    /// Row as `ID=nbest-file`. A Union row is added when there are several.
    #[arg(long = "nbest", required = true)]
    nbest: Vec<String>,
    #[arg(long)]
    src: PathBuf,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long)]
    out_tsv: PathBuf,
    #[arg(long)]
    out_txt: Option<PathBuf>,
    #[arg(long, default_value = "")]
    title: String,
}

#[derive(Args)]
struct AttributeArgs {
    #[command(flatten)]
    scorer: ScorerArgs,
    /// The scorer's own n-best file.
    #[arg(long)]
    own: PathBuf,
    /// The n-best file to compare against.
    #[arg(long)]
    other: PathBuf,
    #[arg(long)]
    src: PathBuf,
    #[arg(long, default_value = "other")]
    other_name: String,
    #[arg(long, default_value_t = AttributionConfig::default().epsilon)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Per-sentence classes.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// TSV written by `matrix` or `run`.
    #[arg(long)]
    matrix: PathBuf,
    /// Keep only these rows (repeatable).
    #[arg(long = "row")]
    rows: Vec<String>,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    spec: PathBuf,
    /// Overrides the spec's `output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the spec's `seed`.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    let (stage, result) = match cli.command {
        Command::GenData(a) => ("gen-data", gen_data(a)),
        Command::Train(a) => ("train", train(a)),
        Command::Decode(a) => ("decode", decode(a)),
        Command::Rescore(a) => ("rescore", rescore(a)),
        Command::Oracle(a) => ("oracle", oracle(a)),
        Command::Union(a) => ("union", union(a)),
        Command::Matrix(a) => ("matrix", matrix(a)),
        Command::Attribute(a) => ("attribute", attribute(a)),
        Command::Report(a) => ("report", report(a)),
        Command::Run(a) => ("run", run(a)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {stage}: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn init_threads() -> Result<()> {
    if let Ok(value) = std::env::var("MT_NBEST_THREADS") {
        let n: usize = value
            .trim()
            .parse()
            .map_err(|_| anyhow!("MT_NBEST_THREADS must be a positive integer, found {value:?}"))?;
        if n == 0 {
            bail!("MT_NBEST_THREADS must be a positive integer");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let task = TaskSpec {
        kind: match a.task {
            KindArg::Copy => TaskKind::Copy,
            KindArg::Reverse => TaskKind::Reverse,
            KindArg::Cipher => TaskKind::Cipher,
        },
        source_vocab: a.source_vocab,
        target_vocab: a.target_vocab,
        ambiguity: a.ambiguity,
        noise: a.noise,
        min_len: a.min_len,
        max_len: a.max_len,
        seed: a.seed,
    };
    let mut split = gen_split(&task, a.test_size, a.train_size)?;
    if let Some(merges) = a.bpe_merges {
        let side = match a.bpe_side {
            SideArg::Source => BpeSide::Source,
            SideArg::Target => BpeSide::Target,
            SideArg::Joint => BpeSide::Joint,
        };
        let model = bpe_train(&split.train, merges, side);
        let segment = |c: &ParallelCorpus| -> Result<ParallelCorpus> {
            let pairs = c
                .pairs()
                .iter()
                .map(|(s, t)| {
                    let s = if matches!(side, BpeSide::Source | BpeSide::Joint) { bpe_apply(&model, s) } else { s.clone() };
                    let t = if matches!(side, BpeSide::Target | BpeSide::Joint) { bpe_apply(&model, t) } else { t.clone() };
                    (s, t)
                })
                .collect();
            Ok(ParallelCorpus::new(c.name(), pairs)?)
        };
        split.test = segment(&split.test)?;
        split.train = segment(&split.train)?;
        model.write(&a.out.join("bpe.codes"))?;
    }
    split.test.write(&a.out.join("test.src"), &a.out.join("test.ref"))?;
    split.train.write(&a.out.join("train.src"), &a.out.join("train.ref"))?;
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut corpus = ParallelCorpus::read("train", &a.src, &a.reference)?;
    if a.reverse_target {
        corpus = corpus.with_reversed_targets();
    }
    let alignment = match (a.alignment, a.reverse_target) {
        (Some(AlignmentArg::Forward), _) | (None, false) => Alignment::Forward,
        (Some(AlignmentArg::Reverse), _) | (None, true) => Alignment::Reverse,
    };
    let config = ChannelConfig {
        alignment,
        lm_order: a.lm_order,
        laplace: a.laplace,
        mu: a.mu,
        eos: EosSchedule {
            early: a.eos_early,
            late: a.eos_late,
        },
    };
    let mut model = Model::from(channel_train(&corpus, &config)?);
    if a.noise_sigma > 0.0 {
        model = PerturbedScorer::new(model, a.noise_sigma, a.seed)?.into();
    }
    model.write(&a.out)?;
    Ok(())
}

fn load_system(path: &Path, reversed: bool, name: Option<&str>) -> Result<System> {
    let model = Model::read(path)?;
    let id = match name {
        Some(n) => n.to_owned(),
        None => path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| anyhow!("cannot derive a system id from {}", path.display()))?,
    };
    let system = System::new(id, model);
    Ok(if reversed { system.reversed() } else { system })
}

fn load_lists(path: &Path) -> Result<Vec<NBestList>> {
    let parsed = read_nbest(path).with_context(|| format!("reading {}", path.display()))?;
    for w in &parsed.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(parsed.lists)
}

fn load_references(path: &Path, expected: usize) -> Result<Vec<Sentence>> {
    let refs = read_sentences(path)?;
    if refs.len() != expected {
        return Err(Error::Misaligned {
            left: expected,
            right: refs.len(),
        })
        .with_context(|| format!("{} does not line up with the source file", path.display()));
    }
    Ok(refs)
}

/// The n-best file may omit trailing sentences; pads to `n` with empty lists.
fn pad_lists(lists: &mut Vec<NBestList>, n: usize) {
    while lists.len() < n {
        lists.push(NBestList::new(lists.len(), Sentence::empty(), Vec::new()));
    }
}

/// Moses files do not carry the source; scorers need it.
fn attach_sources(lists: &mut Vec<NBestList>, sources: &[Sentence], path: &Path) -> Result<()> {
    if lists.len() > sources.len() {
        return Err(Error::Misaligned {
            left: lists.len(),
            right: sources.len(),
        })
        .with_context(|| format!("{} has more sentences than the source file", path.display()));
    }
    pad_lists(lists, sources.len());
    for (list, source) in lists.iter_mut().zip(sources) {
        list.source = source.clone();
    }
    Ok(())
}

fn decode(a: DecodeArgs) -> Result<()> {
    let system = load_system(&a.scorer.scorer, a.scorer.reversed, a.scorer.name.as_deref())?;
    let sources = read_sentences(&a.src)?;
    let cfg = BeamConfig {
        beam_size: a.beam,
        nbest: a.nbest,
        max_len: a.max_len,
        length_norm: a.alpha,
    };
    let run = system.decode(&sources, &cfg)?;
    if run.short_by > 0 {
        eprintln!("warning: {} list entries fewer than requested", run.short_by);
    }
    write_nbest(&a.out, &run.lists)?;
    Ok(())
}

fn rescore(a: RescoreArgs) -> Result<()> {
    let systems = a
        .scorers
        .iter()
        .map(|arg| {
            let (path, reversed) = split_reversed(arg);
            load_system(Path::new(path), reversed, None)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut lists = load_lists(&a.nbest)?;
    attach_sources(&mut lists, &read_sentences(&a.src)?, &a.nbest)?;
    let picks = if systems.len() == 1 {
        rescore_all(&systems[0], &lists, a.alpha)?
    } else {
        rescore_all(&Combination::uniform(&systems)?, &lists, a.alpha)?
    };
    write_sentences(&a.out, picks.iter().map(|h| &h.tokens))?;
    if let Some(path) = &a.reference {
        let refs = load_references(path, lists.len())?;
        let bleu = corpus_bleu_of(picks.iter().map(|h| &h.tokens), &refs, &BleuConfig::default())?;
        println!("BLEU {}", percent(bleu));
    }
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let mut lists = load_lists(&a.nbest)?;
    let refs = read_sentences(&a.reference)?;
    pad_lists(&mut lists, refs.len());
    let cfg = BleuConfig::default();
    let bleu = oracle_corpus_bleu(&lists, &refs, &cfg)?;
    if let Some(out) = &a.out {
        let picks = oracle_selections(&lists, &refs, &cfg.with_smoothing(Smoothing::AddOneForNGe2))?;
        write_sentences(out, picks.iter().map(|h| &h.tokens))?;
    }
    println!("oracle BLEU {}", percent(bleu));
    Ok(())
}

fn union(a: UnionArgs) -> Result<()> {
    let runs = a
        .nbest
        .iter()
        .map(|p| Ok(SystemRun::new(p.display().to_string(), load_lists(p)?)))
        .collect::<Result<Vec<_>>>()?;
    let n = runs.iter().map(|r| r.lists.len()).max().unwrap_or(0);
    let runs: Vec<SystemRun> = runs
        .into_iter()
        .map(|mut r| {
            pad_lists(&mut r.lists, n);
            r
        })
        .collect();
    let joined = union_runs(&runs.iter().collect::<Vec<_>>())?;
    write_nbest(&a.out, &joined.lists)?;
    Ok(())
}

fn split_assignment(arg: &str) -> Result<(&str, &str)> {
    arg.split_once('=')
        .filter(|(id, path)| !id.is_empty() && !path.is_empty())
        .ok_or_else(|| anyhow!("expected ID=PATH, found {arg:?}"))
}

fn split_reversed(arg: &str) -> (&str, bool) {
    match arg.strip_suffix(":reversed") {
        Some(p) => (p, true),
        None => (arg, false),
    }
}

fn matrix(a: MatrixArgs) -> Result<()> {
    let systems = a
        .systems
        .iter()
        .map(|arg| {
            let (id, rest) = split_assignment(arg)?;
            let (path, reversed) = split_reversed(rest);
            load_system(Path::new(path), reversed, Some(id))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut runs = a
        .nbest
        .iter()
        .map(|arg| {
            let (id, path) = split_assignment(arg)?;
            if id == UNION {
                bail!("row id {UNION:?} is reserved");
            }
            Ok(SystemRun::new(id, load_lists(Path::new(path))?))
        })
        .collect::<Result<Vec<_>>>()?;
    let sources = read_sentences(&a.src)?;
    let refs = load_references(&a.reference, sources.len())?;
    for (run, arg) in runs.iter_mut().zip(&a.nbest) {
        attach_sources(&mut run.lists, &sources, Path::new(arg))?;
    }
    let cfg = MatrixConfig {
        length_norm: a.alpha,
        ..MatrixConfig::default()
    };
    let m = rescore_matrix(&runs, &systems, &refs, &cfg)?;
    write_atomic(&a.out_tsv, render_matrix_tsv(&m).as_bytes())?;
    let text = render_matrix_text(&m, &a.title);
    if let Some(out) = &a.out_txt {
        write_atomic(out, text.as_bytes())?;
    }
    print!("{text}");
    Ok(())
}

fn attribute(a: AttributeArgs) -> Result<()> {
    let system = load_system(&a.scorer.scorer, a.scorer.reversed, a.scorer.name.as_deref())?;
    let sources = read_sentences(&a.src)?;
    let mut own = load_lists(&a.own)?;
    let mut other = load_lists(&a.other)?;
    attach_sources(&mut own, &sources, &a.own)?;
    attach_sources(&mut other, &sources, &a.other)?;
    let cfg = AttributionConfig {
        epsilon: a.epsilon,
        length_norm: a.alpha,
    };
    let report = attribute_errors(&system, &own, &other, &cfg)?;
    let summary = AttributionSummary {
        scorer: system.id.clone(),
        own: system.id.clone(),
        other: a.other_name,
        report,
    };
    write_atomic(&a.out, render_attribution_tsv(std::slice::from_ref(&summary)).as_bytes())?;
    print!("{}", render_attribution_text(&[summary]));
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.matrix).with_context(|| format!("reading {}", a.matrix.display()))?;
    let mut m = parse_matrix_tsv(&text).with_context(|| format!("reading {}", a.matrix.display()))?;
    if !a.rows.is_empty() {
        let keep = a.rows.iter().map(|r| m.row_index(r)).collect::<Result<Vec<_>, _>>()?;
        m.rows = keep.iter().map(|&i| m.rows[i].clone()).collect();
        m.cells = keep.iter().map(|&i| m.cells[i].clone()).collect();
        m.oracle = keep.iter().map(|&i| m.oracle[i]).collect();
        m.marked = keep.iter().map(|&i| m.marked[i].clone()).collect();
    }
    write_atomic(&a.out, render_matrix_text(&m, &a.title).as_bytes())?;
    Ok(())
}

fn run(a: RunArgs) -> Result<()> {
    let mut spec = ExperimentSpec::read(&a.spec).with_context(|| format!("reading {}", a.spec.display()))?;
    if let Some(seed) = a.seed {
        spec.task.seed = seed;
    }
    if let Some(out) = a.out {
        spec.output = Some(out);
    }
    let dir = spec
        .output
        .clone()
        .ok_or_else(|| anyhow!("no output directory: set `output` in the spec or pass --out"))?;
    let exp = run_to_dir(&spec, &dir)?;
    print!("{}", render_matrix_text(&exp.matrix, ""));
    println!();
    print!("{}", render_attribution_text(&exp.attributions));
    Ok(())
}
