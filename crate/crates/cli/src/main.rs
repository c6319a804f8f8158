mod config;
mod error;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cvf_core::agreement::{agreement_stats, Label};
use cvf_core::augment::{
    build_manifest, default_filters, edits_for_subset, filter_question_type, relative_summary, Composition,
    QuestionTypeFilter,
};
use cvf_core::coco::{build_object_index, load_annotations, CocoCorpus};
use cvf_core::consistency::{compute_report, render_table, ConsistencyReport, PredictionSet, ReportOptions};
use cvf_core::inpaint::{invoke_tool, render_jobs, JobStatus};
use cvf_core::manifest::{emit_manifest, read_manifest};
use cvf_core::select::{select_corpus, EditMode, EditRecord, Rejection, SelectionConfig};
use cvf_core::vocab::{load_vocabulary, VocabularyTable};
use cvf_core::vqa::{load_questions_and_answers, split_val, IqaTriplet};

use config::{write_json, write_jsonl, FileConfig, Provenance};
use error::CliError;

#[derive(Parser)]
#[command(name = "cvf", version, about = "Semantic-edit curation and consistency evaluation for VQA corpora")]
struct Cli {
    /// TOML file with default paths and settings; flags override it.
    #[arg(long, global = true, env = "CVF_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the annotation and question corpora and print their statistics.
    IngestStats(IngestArgs),
    /// Select invariant edits (remove objects the question does not mention).
    SelectIv(SelectArgs),
    /// Select covariant edits (remove one counted instance).
    SelectCv(SelectArgs),
    /// Write removal masks and run an external removal tool on each edit.
    Inpaint(InpaintArgs),
    /// Score original and edited predictions with the flip taxonomy.
    Consistency(ConsistencyArgs),
    /// Plan fine-tuning subsets per question type and composition.
    AugmentPlan(AugmentArgs),
    /// Compare a baseline and an augmented consistency report.
    CompareReports(CompareArgs),
    /// Choose edits for human validation.
    SampleReview(SampleArgs),
    /// Serve the human-validation API.
    ServeReview(ServeArgs),
    /// Summarize a label store as per-user, all-agree and any-user rows.
    Agreement(AgreementArgs),
    /// Copy-through removal tool for pipeline tests: copies IMAGE to OUT.
    #[command(hide = true)]
    StubInpaint { image: PathBuf, mask: PathBuf, out: PathBuf },
}

#[derive(Args, Clone, Serialize)]
struct CorpusArgs {
    /// COCO-style instance annotations.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// VQA questions file.
    #[arg(long)]
    questions: Option<PathBuf>,
    /// VQA annotations (answers) file.
    #[arg(long)]
    answers: Option<PathBuf>,
    #[arg(long)]
    answers_per_question: Option<usize>,
}

#[derive(Args, Clone, Serialize)]
struct SplitArgs {
    /// Share of images assigned to the test side.
    #[arg(long)]
    split_ratio: Option<f64>,
    #[arg(long)]
    split_seed: Option<u64>,
}

#[derive(Args, Serialize)]
struct IngestArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Write stats.json, split files and provenance here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum SplitChoice {
    All,
    Test,
    Val,
}

#[derive(Args, Serialize)]
struct SelectArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Restrict to one side of the split.
    #[arg(long, value_enum, default_value = "all")]
    split_side: SplitChoice,
    /// Vocabulary file (`name: synonym, ...` per line).
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    area_threshold: Option<f64>,
    /// Overlap threshold for the selected mode.
    #[arg(long)]
    overlap_threshold: Option<f64>,
    /// IV only: keep edits whose overlap is exactly zero.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    dilate_radius: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct InpaintArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Directory holding the source images.
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Command with {image}, {mask} and {out} placeholders.
    #[arg(long)]
    template: String,
    #[arg(long, default_value_t = 4)]
    jobs: usize,
}

#[derive(Args, Serialize)]
struct ConsistencyArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Predictions on the original records, keyed by question id.
    #[arg(long)]
    orig: PathBuf,
    /// Predictions on the edited records, keyed by edit id.
    #[arg(long)]
    edit: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    mode: EditMode,
    #[arg(long, default_value = "model")]
    model: String,
    #[arg(long)]
    answer_vocab_size: Option<u32>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct AugmentArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    iv_manifest: Option<PathBuf>,
    #[arg(long)]
    cv_manifest: Option<PathBuf>,
    /// Question-type prefix; repeat for several. Defaults to the four
    /// standard splits plus counting. `counting` selects counting questions.
    #[arg(long = "filter")]
    filters: Vec<String>,
    /// Compositions to plan; defaults to all four.
    #[arg(long = "composition")]
    compositions: Vec<String>,
    /// Keep only edits with zero overlap.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct CompareArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    aug: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize)]
struct SampleArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// `pairs.jsonl` from `consistency`; only flipped edits are kept. Repeatable.
    #[arg(long = "flips")]
    flips: Vec<PathBuf>,
    /// Most edits per question type.
    #[arg(long, default_value_t = 100)]
    cap: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Sample file from `sample-review`; all manifest edits when absent.
    #[arg(long)]
    sample: Option<PathBuf>,
    /// Output directory of `inpaint` (masks and edited images).
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, default_value = "labels.jsonl")]
    labels: PathBuf,
    /// Static UI bundle directory.
    #[arg(long)]
    ui: Option<PathBuf>,
    /// Comma-separated user ids allowed to label.
    #[arg(long, value_delimiter = ',')]
    users: Vec<String>,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
}

#[derive(Args)]
struct AgreementArgs {
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    match cli.command {
        Command::IngestStats(a) => ingest_stats(&file, a),
        Command::SelectIv(a) => select(&file, a, EditMode::Iv),
        Command::SelectCv(a) => select(&file, a, EditMode::Cv),
        Command::Inpaint(a) => inpaint(&file, a),
        Command::Consistency(a) => consistency(&file, a),
        Command::AugmentPlan(a) => augment(&file, a),
        Command::CompareReports(a) => compare(a),
        Command::SampleReview(a) => sample_review(a),
        Command::ServeReview(a) => serve_review(a),
        Command::Agreement(a) => agreement(a),
        Command::StubInpaint { image, out, .. } => {
            fs::copy(&image, &out).map_err(|e| CliError::io(&image, e))?;
            Ok(())
        }
    }
}

fn required(flag: Option<PathBuf>, file: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| CliError::usage(format!("--{name} is required (or set it in the config file)")))
}

struct Corpora {
    annotations: PathBuf,
    questions: PathBuf,
    answers: PathBuf,
    answers_per_question: usize,
}

impl Corpora {
    fn resolve(a: &CorpusArgs, file: &FileConfig) -> Result<Self, CliError> {
        Ok(Corpora {
            annotations: required(a.annotations.clone(), &file.annotations, "annotations")?,
            questions: required(a.questions.clone(), &file.questions, "questions")?,
            answers: required(a.answers.clone(), &file.answers, "answers")?,
            answers_per_question: a
                .answers_per_question
                .or(file.answers_per_question)
                .unwrap_or(cvf_core::vqa::DEFAULT_ANSWERS_PER_QUESTION),
        })
    }

    fn triplets(&self) -> Result<Vec<IqaTriplet>, CliError> {
        Ok(load_questions_and_answers(&self.questions, &self.answers, self.answers_per_question)?)
    }

    fn corpus(&self) -> Result<CocoCorpus, CliError> {
        Ok(load_annotations(&self.annotations)?)
    }
}

fn split_settings(a: &SplitArgs, file: &FileConfig) -> (f64, u64) {
    (a.split_ratio.unwrap_or(file.split.ratio), a.split_seed.unwrap_or(file.split.seed))
}

#[derive(Serialize)]
struct IngestStats {
    categories: usize,
    images: usize,
    instances: usize,
    polygon_instances: usize,
    rle_instances: usize,
    triplets: usize,
    uniform: usize,
    counting: usize,
    uniform_counting: usize,
    split_ratio: f64,
    split_seed: u64,
    test_questions: usize,
    val_questions: usize,
}

fn ingest_stats(file: &FileConfig, a: IngestArgs) -> Result<(), CliError> {
    let c = Corpora::resolve(&a.corpus, file)?;
    let corpus = c.corpus()?;
    let triplets = c.triplets()?;
    let (ratio, seed) = split_settings(&a.split, file);
    let (test, val) = split_val(&triplets, ratio, seed)?;
    let s = corpus.summary();
    let stats = IngestStats {
        categories: s.categories,
        images: s.images,
        instances: s.instances,
        polygon_instances: s.polygon_instances,
        rle_instances: s.rle_instances,
        triplets: triplets.len(),
        uniform: triplets.iter().filter(|t| t.uniform).count(),
        counting: triplets.iter().filter(|t| t.counting).count(),
        uniform_counting: triplets.iter().filter(|t| t.uniform && t.counting).count(),
        split_ratio: ratio,
        split_seed: seed,
        test_questions: test.question_ids.len(),
        val_questions: val.question_ids.len(),
    };
    println!(
        "{} categories, {} images, {} instances ({} polygon, {} run-length)",
        stats.categories, stats.images, stats.instances, stats.polygon_instances, stats.rle_instances
    );
    println!(
        "{} triplets, {} uniform, {} counting, {} uniform counting",
        stats.triplets, stats.uniform, stats.counting, stats.uniform_counting
    );
    println!(
        "split {ratio} (seed {seed}): {} test questions, {} val questions",
        stats.test_questions, stats.val_questions
    );
    if let Some(out) = &a.out {
        write_json(&out.join("stats.json"), &stats)?;
        write_json(&out.join("split_test.json"), &test)?;
        write_json(&out.join("split_val.json"), &val)?;
        Provenance::new("ingest-stats", &a)
            .input(&c.annotations)?
            .input(&c.questions)?
            .input(&c.answers)?
            .write(out)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct SelectSettings<'a> {
    mode: EditMode,
    selection: &'a SelectionConfig,
    vocab: Option<&'a Path>,
    answers_per_question: usize,
    split_side: SplitChoice,
    split_ratio: f64,
    split_seed: u64,
}

#[derive(Serialize)]
struct SelectSummary {
    mode: EditMode,
    real: usize,
    real_ne: usize,
    edit: usize,
    rejections: BTreeMap<&'static str, usize>,
}

#[derive(Serialize)]
struct RejectionLine<'a> {
    question_id: u64,
    #[serde(flatten)]
    rejection: &'a Rejection,
}

fn rejection_name(r: &Rejection) -> &'static str {
    match r {
        Rejection::AreaTooLarge { .. } => "area-too-large",
        Rejection::OverlapTooHigh { .. } => "overlap-too-high",
        Rejection::UnresolvedCategory { .. } => "unresolved-category",
        Rejection::CountMismatch { .. } => "count-mismatch",
        Rejection::ImageNotInCorpus => "image-not-in-corpus",
    }
}

fn select(file: &FileConfig, a: SelectArgs, mode: EditMode) -> Result<(), CliError> {
    let c = Corpora::resolve(&a.corpus, file)?;
    let mut cfg = file.selection.clone();
    if let Some(v) = a.area_threshold {
        cfg.area_threshold = v;
    }
    if let Some(v) = a.overlap_threshold {
        match mode {
            EditMode::Iv => cfg.iv_overlap_threshold = v,
            EditMode::Cv => cfg.cv_overlap_threshold = v,
        }
    }
    if let Some(v) = a.dilate_radius {
        cfg.dilate_radius = v;
    }
    if a.strict {
        if mode == EditMode::Cv {
            return Err(CliError::usage("--strict applies to select-iv only"));
        }
        cfg.strict_iv = true;
    }
    cfg.validate()?;

    let corpus = c.corpus()?;
    let mut triplets = c.triplets()?;
    let (ratio, seed) = split_settings(&a.split, file);
    if a.split_side != SplitChoice::All {
        let (test, val) = split_val(&triplets, ratio, seed)?;
        let keep: BTreeSet<u64> = match a.split_side {
            SplitChoice::Test => test.question_ids,
            _ => val.question_ids,
        }
        .into_iter()
        .collect();
        triplets.retain(|t| keep.contains(&t.question_id));
    }
    let vocab_path = a.vocab.clone().or_else(|| file.vocab.clone());
    let vocab = match &vocab_path {
        Some(p) => load_vocabulary(p, &corpus.categories)?,
        None => VocabularyTable::default_for(&corpus.categories)?,
    };
    let index = build_object_index(&corpus.images, &corpus.instances);
    let sel = select_corpus(mode, &triplets, &corpus, &index, &vocab, &cfg)?;

    let out = &a.out;
    emit_manifest(&sel.records, out.join("manifest.jsonl"))?;
    let mut counts = BTreeMap::new();
    let mut lines = Vec::new();
    for (qid, rs) in &sel.rejections {
        for r in rs {
            *counts.entry(rejection_name(r)).or_insert(0) += 1;
            lines.push(RejectionLine {
                question_id: *qid,
                rejection: r,
            });
        }
    }
    write_jsonl(&out.join("rejections.jsonl"), &lines)?;
    let summary = SelectSummary {
        mode,
        real: sel.summary.real,
        real_ne: sel.summary.real_ne,
        edit: sel.summary.edit,
        rejections: counts,
    };
    write_json(&out.join("summary.json"), &summary)?;
    let settings = SelectSettings {
        mode,
        selection: &cfg,
        vocab: vocab_path.as_deref(),
        answers_per_question: c.answers_per_question,
        split_side: a.split_side,
        split_ratio: ratio,
        split_seed: seed,
    };
    let command = match mode {
        EditMode::Iv => "select-iv",
        EditMode::Cv => "select-cv",
    };
    let mut prov = Provenance::new(command, &settings)
        .input(&c.annotations)?
        .input(&c.questions)?
        .input(&c.answers)?;
    if let Some(p) = &vocab_path {
        prov = prov.input(p)?;
    }
    prov.write(out)?;
    println!(
        "{mode}: {} eligible, {} without an edit, {} edits -> {}",
        summary.real,
        summary.real_ne,
        summary.edit,
        out.join("manifest.jsonl").display()
    );
    Ok(())
}

#[derive(Serialize)]
struct InpaintSummaryFile {
    jobs: usize,
    done: usize,
    failed: usize,
    resumed: usize,
    failures: BTreeMap<String, String>,
}

fn inpaint(file: &FileConfig, a: InpaintArgs) -> Result<(), CliError> {
    let annotations = required(a.annotations.clone(), &file.annotations, "annotations")?;
    let images = required(a.images.clone(), &file.images, "images")?;
    cvf_core::inpaint::parse_template(&a.template)?;
    if a.jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    let manifest = read_manifest(&a.manifest)?;
    let corpus = load_annotations(&annotations)?;
    let mut jobs = render_jobs(&manifest, &corpus.images, &images, &a.out)?;
    let ledger = a.out.join("jobs.jsonl");
    let s = invoke_tool(&mut jobs, &a.template, a.jobs, Some(&ledger))?;
    let failures: BTreeMap<String, String> = jobs
        .iter()
        .filter(|j| j.status == JobStatus::Failed)
        .map(|j| (j.edit_id.clone(), j.reason.clone().unwrap_or_default()))
        .collect();
    let done = jobs.iter().filter(|j| j.status == JobStatus::Done).count();
    write_json(
        &a.out.join("inpaint_summary.json"),
        &InpaintSummaryFile {
            jobs: jobs.len(),
            done,
            failed: failures.len(),
            resumed: s.resumed,
            failures: failures.clone(),
        },
    )?;
    Provenance::new("inpaint", &a).input(&a.manifest)?.input(&annotations)?.write(&a.out)?;
    println!(
        "{} jobs: {done} done ({} resumed), {} failed",
        jobs.len(),
        s.resumed,
        failures.len()
    );
    for (id, reason) in &failures {
        println!("  failed {id}: {reason}");
    }
    Ok(())
}

fn consistency(file: &FileConfig, a: ConsistencyArgs) -> Result<(), CliError> {
    let questions = required(a.corpus.questions.clone(), &file.questions, "questions")?;
    let answers = required(a.corpus.answers.clone(), &file.answers, "answers")?;
    let per = a
        .corpus
        .answers_per_question
        .or(file.answers_per_question)
        .unwrap_or(cvf_core::vqa::DEFAULT_ANSWERS_PER_QUESTION);
    let triplets = load_questions_and_answers(&questions, &answers, per)?;
    let manifest = read_manifest(&a.manifest)?;
    let orig = PredictionSet::load(&a.orig, a.model.clone())?;
    let edit = PredictionSet::load(&a.edit, a.model.clone())?;
    let options = ReportOptions {
        answer_vocab_size: a.answer_vocab_size.unwrap_or(file.report.answer_vocab_size),
    };
    let report = compute_report(&orig, &edit, &manifest, &triplets, a.mode, options)?;
    let table = render_table(std::slice::from_ref(&report));
    write_json(&a.out.join("report.json"), &report)?;
    fs::write(a.out.join("report.txt"), &table).map_err(|e| CliError::io(&a.out, e))?;
    write_jsonl(&a.out.join("pairs.jsonl"), &report.pairs)?;
    Provenance::new("consistency", &a)
        .input(&a.orig)?
        .input(&a.edit)?
        .input(&a.manifest)?
        .input(&questions)?
        .input(&answers)?
        .write(&a.out)?;
    print!("{table}");
    Ok(())
}

fn slug(name: &str) -> String {
    name.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|s| !s.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

fn augment(file: &FileConfig, a: AugmentArgs) -> Result<(), CliError> {
    let questions = required(a.corpus.questions.clone(), &file.questions, "questions")?;
    let answers = required(a.corpus.answers.clone(), &file.answers, "answers")?;
    let per = a
        .corpus
        .answers_per_question
        .or(file.answers_per_question)
        .unwrap_or(cvf_core::vqa::DEFAULT_ANSWERS_PER_QUESTION);
    let triplets = load_questions_and_answers(&questions, &answers, per)?;
    let filters: Vec<QuestionTypeFilter> = if a.filters.is_empty() {
        default_filters()
    } else {
        a.filters
            .iter()
            .map(|f| match f.as_str() {
                "counting" => QuestionTypeFilter::counting(),
                p => QuestionTypeFilter::prefix(p),
            })
            .collect()
    };
    let compositions: Vec<Composition> = if a.compositions.is_empty() {
        Composition::ALL.to_vec()
    } else {
        a.compositions
            .iter()
            .map(|c| c.parse().map_err(|_| CliError::usage(format!("unknown composition {c:?}"))))
            .collect::<Result<_, _>>()?
    };
    let mut edits: Vec<EditRecord> = Vec::new();
    let mut prov = Provenance::new("augment-plan", &a).input(&questions)?.input(&answers)?;
    for p in [&a.iv_manifest, &a.cv_manifest].into_iter().flatten() {
        edits.extend(read_manifest(p)?);
        prov = prov.input(p)?;
    }

    #[derive(Serialize)]
    struct PlanSummary {
        filter: String,
        composition: Composition,
        strict: bool,
        real: usize,
        edits: usize,
        dropped_by_strict: usize,
        file: String,
    }
    let mut summary = Vec::new();
    for f in &filters {
        let subset: Vec<IqaTriplet> = filter_question_type(&triplets, std::slice::from_ref(f))
            .into_iter()
            .filter(|t| t.uniform)
            .collect();
        let subset_edits = edits_for_subset(&subset, &edits);
        for &comp in &compositions {
            let name = format!("{}/{}", slug(&f.name), comp.as_str().replace('+', "-"));
            let plan = build_manifest(&name, &subset, &subset_edits, comp, a.strict)?;
            let rel = format!("{name}.jsonl");
            plan.write_jsonl(a.out.join(&rel))?;
            println!("{}", plan.summary_line());
            summary.push(PlanSummary {
                filter: f.name.clone(),
                composition: comp,
                strict: a.strict,
                real: plan.question_ids.len(),
                edits: plan.edit_ids.len(),
                dropped_by_strict: plan.dropped_by_strict,
                file: rel,
            });
        }
    }
    write_jsonl(&a.out.join("plans.jsonl"), &summary)?;
    prov.write(&a.out)?;
    Ok(())
}

fn read_report(path: &Path) -> Result<ConsistencyReport, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError {
        category: "parse",
        message: format!("{}: {e}", path.display()),
    })
}

fn compare(a: CompareArgs) -> Result<(), CliError> {
    let base = read_report(&a.base)?;
    let aug = read_report(&a.aug)?;
    let s = relative_summary(&base, &aug)?;
    print!("{}", s.render());
    if let Some(out) = &a.out {
        write_json(out, &s)?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct PairLine {
    edit_id: String,
    outcome: cvf_core::consistency::FlipOutcome,
}

fn sample_review(a: SampleArgs) -> Result<(), CliError> {
    let manifest = read_manifest(&a.manifest)?;
    let mut sources = Vec::new();
    for p in &a.flips {
        let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        let mut flipped = BTreeSet::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let pl: PairLine = serde_json::from_str(line).map_err(|e| CliError {
                category: "parse",
                message: format!("{}:{}: {e}", p.display(), i + 1),
            })?;
            if pl.outcome.is_flip() {
                flipped.insert(pl.edit_id);
            }
        }
        sources.push(flipped);
    }
    let flips = (!a.flips.is_empty()).then_some(sources.as_slice());
    let sample = cvf_review::build_sample(&manifest, flips, a.cap, a.seed);
    write_json(&a.out, &sample)?;
    println!("{} edits sampled across {} question types", sample.edit_ids.len(), sample.per_type.len());
    Ok(())
}

fn serve_review(a: ServeArgs) -> Result<(), CliError> {
    let manifest = read_manifest(&a.manifest)?;
    let sample: Vec<String> = match &a.sample {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            let s: cvf_review::ReviewSample = serde_json::from_str(&text).map_err(|e| CliError {
                category: "parse",
                message: format!("{}: {e}", p.display()),
            })?;
            s.edit_ids
        }
        None => manifest.iter().map(|r| r.edit_id.clone()).collect(),
    };
    let store = cvf_review::LabelStore::open(&a.labels)?;
    let options = cvf_review::ServerOptions {
        images_dir: a.images,
        ui_dir: a.ui,
        users: (!a.users.is_empty()).then(|| a.users.into_iter().collect()),
    };
    let app = cvf_review::router(&manifest, &sample, store, options);
    let addr = SocketAddr::new(a.host, a.port);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::io(Path::new("<runtime>"), e))?;
    println!("serving {} items on http://{addr}", sample.len());
    rt.block_on(cvf_review::serve(app, addr))
        .map_err(|e| CliError::io(Path::new(&addr.to_string()), e))
}

fn agreement(a: AgreementArgs) -> Result<(), CliError> {
    if !a.labels.is_file() {
        return Err(CliError::io(&a.labels, "no such label store"));
    }
    let store = cvf_review::LabelStore::open(&a.labels)?;
    let labels: BTreeMap<String, BTreeMap<String, Label>> = store.labels().clone();
    let report = agreement_stats(&labels);
    print!("{}", report.render());
    if let Some(out) = &a.out {
        write_json(out, &report)?;
    }
    Ok(())
}
