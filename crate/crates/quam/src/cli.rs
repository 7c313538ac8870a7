//! The `quam` command line.
//!
//! Exit status: 0 on success, 1 for usage or configuration errors, 2 for
//! data and format errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use quam_core::affinity::{
    co_relevance_histogram, mine_triples, AllPairs, CoRelevanceOracle, LexicalAffinity,
};
use quam_core::eval::{evaluate, MetricReport, Qrels, QueryMetrics};
use quam_core::graph::{build_knn_graph, prune_graph, reweight_graph, CorpusGraph};
use quam_core::relevance::{
    Bm25Index, Bm25Params, QrelsOracle, Query, Ranking, ReplayScorer, Scorer,
};
use quam_core::schedulers::{default_top_set, rerank, ScheduleConfig, Strategy, Trace};
use quam_core::setaff::{EdgeDirection, Estimator};
use quam_core::synth::{generate, SynthSpec};
use quam_core::DocIndex;

use crate::bench::{latency_bench, BenchSet};
use crate::format::{self, Corpus};
use crate::stats::paired_ttest_bonferroni;

#[derive(Debug, Parser)]
#[command(
    name = "quam",
    version,
    about = "Adaptive re-ranking over document affinity graphs"
)]
pub struct Cli {
    /// Worker threads for per-query parallelism (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic clustered dataset.
    Synth(SynthArgs),
    /// Build a kNN corpus graph.
    BuildGraph(BuildGraphArgs),
    /// Re-score the edges of a graph with an affinity function.
    ReweightGraph(ReweightArgs),
    /// Re-rank initial pools with a scheduling strategy.
    Rerank(RerankArgs),
    /// Compute nDCG@10, nDCG@c and Recall@c for run files.
    Evaluate(EvaluateArgs),
    /// Time the scheduling machinery with a stub scorer.
    Bench(BenchArgs),
    /// Mine pseudo co-relevance training triples.
    MineTriples(MineTriplesArgs),
    /// Count queries by their number of relevant documents.
    Histogram(HistogramArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SpecArgs {
    #[arg(long, default_value_t = 2000)]
    pub num_docs: usize,
    #[arg(long, default_value_t = 50)]
    pub num_queries: usize,
    #[arg(long, default_value_t = 8)]
    pub relevant_min: usize,
    #[arg(long, default_value_t = 24)]
    pub relevant_max: usize,
    /// Size range of background (unjudged) clusters.
    #[arg(long, default_value_t = 8)]
    pub cluster_min: usize,
    #[arg(long, default_value_t = 24)]
    pub cluster_max: usize,
    #[arg(long, default_value_t = 50)]
    pub pool_depth: usize,
    /// Expected fraction of relevant documents in each initial pool.
    #[arg(long, default_value_t = 0.5)]
    pub recall: f64,
    /// Retrieval-score advantage of relevant documents.
    #[arg(long, default_value_t = 1.0)]
    pub separation: f64,
    /// Probability that an edge joins co-relevant documents.
    #[arg(long, default_value_t = 0.8)]
    pub precision: f64,
    /// Per-rank decay of the edge precision.
    #[arg(long, default_value_t = 1.0)]
    pub decay: f64,
    /// Graph out-degree.
    #[arg(long, default_value_t = 16)]
    pub k: u32,
    /// Also generate token bags (corpus.tsv, queries.tsv with text).
    #[arg(long)]
    pub text: bool,
    #[arg(long, default_value_t = 24)]
    pub doc_length: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SpecArgs {
    fn spec(&self) -> SynthSpec {
        SynthSpec {
            num_docs: self.num_docs,
            num_queries: self.num_queries,
            relevant_per_query: (self.relevant_min, self.relevant_max),
            cluster_size: (self.cluster_min, self.cluster_max),
            pool_depth: self.pool_depth,
            first_stage_recall: self.recall,
            retriever_separation: self.separation,
            edge_precision: self.precision,
            precision_decay: self.decay,
            graph_depth: self.k,
            with_text: self.text,
            doc_length: self.doc_length,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimilarityKind {
    /// BM25 self-retrieval over the corpus.
    Bm25,
    /// TF-IDF cosine.
    Tfidf,
    /// Shared relevant query in the qrels.
    Oracle,
}

#[derive(Debug, Args)]
pub struct BuildGraphArgs {
    /// Corpus TSV (`docno<TAB>text`).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Document id list, one per line (oracle similarity without a corpus).
    #[arg(long)]
    pub ids: Option<PathBuf>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = SimilarityKind::Bm25)]
    pub similarity: SimilarityKind,
    #[arg(long, default_value_t = 16)]
    pub k: u32,
    /// Grade at which a judged document counts as relevant (oracle).
    #[arg(long, default_value_t = 1)]
    pub threshold: i32,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output graph; the id sidecar is written next to it with `.ids`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AffinityKind {
    Oracle,
    Tfidf,
}

#[derive(Debug, Args)]
pub struct ReweightArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long, value_enum, default_value_t = AffinityKind::Oracle)]
    pub affinity: AffinityKind,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub threshold: i32,
    /// Standard deviation of symmetric Gaussian noise on oracle affinities.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Keep only the strongest K edges per node after re-weighting.
    #[arg(long)]
    pub prune: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScorerKind {
    /// Scores replayed from a run file.
    Replay,
    /// Graded relevance plus Gaussian noise.
    Oracle,
    /// BM25 over an in-memory index.
    Bm25,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EstimatorArg {
    RankerScores,
    RetrieverScores,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DirectionArg {
    OutEdge,
    MaxOfBoth,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    /// Initial pools as a TREC run.
    #[arg(long)]
    pub run: PathBuf,
    /// Truncate each initial pool to this depth.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, value_enum, default_value_t = ScorerKind::Replay)]
    pub scorer: ScorerKind,
    /// Run file with the scores to replay.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Replay score for documents missing from `--scores`.
    #[arg(long, allow_negative_numbers = true)]
    pub missing_score: Option<f64>,
    #[arg(long)]
    pub qrels: Option<PathBuf>,
    /// Oracle scorer noise.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Queries TSV (`qid<TAB>text`); required by the BM25 scorer.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    /// Corpus graph.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Affinity-weighted graph (required by gar-laff).
    #[arg(long)]
    pub affinity_graph: Option<PathBuf>,
    #[arg(long, default_value = "quam", value_parser = parse_strategy)]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 100)]
    pub budget: usize,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    /// Top-set size (default by budget).
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long, value_enum, default_value_t = EstimatorArg::RankerScores)]
    pub estimator: EstimatorArg,
    #[arg(long, value_enum, default_value_t = DirectionArg::OutEdge)]
    pub direction: DirectionArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run tag (default: strategy name).
    #[arg(long)]
    pub tag: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON-lines trace, one record per scheduling step.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// One or more run files; the first is the baseline for `--significance`.
    #[arg(long, required = true, num_args = 1..)]
    pub run: Vec<PathBuf>,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Cutoffs c for nDCG@c and Recall@c.
    #[arg(long, value_delimiter = ',', default_value = "1000")]
    pub cutoffs: Vec<usize>,
    /// Minimum grade counted as relevant by Recall@c.
    #[arg(long, default_value_t = quam_core::eval::DEFAULT_RECALL_THRESHOLD)]
    pub threshold: i32,
    /// TSV report (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-query metrics as JSON lines.
    #[arg(long)]
    pub per_query: Option<PathBuf>,
    /// Paired t-tests of every run against the first, Bonferroni-corrected.
    #[arg(long)]
    pub significance: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub spec: SpecArgs,
    #[arg(long, value_delimiter = ',', default_value = "plain,gar,quam", value_parser = parse_strategy)]
    pub strategies: Vec<Strategy>,
    #[arg(long, value_delimiter = ',', default_value = "100")]
    pub budgets: Vec<usize>,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    /// Top-set size (default by budget).
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Oracle scorer noise behind the stub.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    /// Noise of the affinity oracle used to weight the affinity graph.
    #[arg(long, default_value_t = 0.3)]
    pub affinity_noise: f64,
    #[arg(long, default_value_t = quam_core::eval::DEFAULT_RECALL_THRESHOLD)]
    pub threshold: i32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MineTriplesArgs {
    #[arg(long)]
    pub r0: PathBuf,
    #[arg(long)]
    pub r1: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HistogramArgs {
    #[arg(long)]
    pub qrels: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threshold: i32,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse().map_err(|e: quam_core::Error| e.to_string())
}

/// Error split by exit status.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Data(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 1,
            Failure::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Data(e) => write!(f, "error: {e:#}"),
        }
    }
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn data(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Config(e.into()))
    }

    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure::Data(e.into()))
    }
}

fn config_error(msg: impl Into<String>) -> Failure {
    Failure::Config(anyhow!(msg.into()))
}

/// Parses `args` and runs the command, returning the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("quam: {f}");
            f.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<(), Failure> {
    if cli.threads == Some(0) {
        return Err(config_error("--threads must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .config()?;
    pool.install(|| match cli.command {
        Command::Synth(a) => cmd_synth(&a),
        Command::BuildGraph(a) => cmd_build_graph(&a),
        Command::ReweightGraph(a) => cmd_reweight_graph(&a),
        Command::Rerank(a) => cmd_rerank(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::MineTriples(a) => cmd_mine_triples(&a),
        Command::Histogram(a) => cmd_histogram(&a),
    })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text)
            .with_context(|| format!("writing {}", p.display()))
            .data(),
        None => std::io::stdout().write_all(text.as_bytes()).data(),
    }
}

fn cmd_synth(a: &SynthArgs) -> Result<(), Failure> {
    let spec = a.spec.spec();
    spec.validate().config()?;
    let ds = generate(&spec).data()?;
    std::fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .data()?;
    let graph_path = a.out.join("graph.bin");
    format::save_graph(&ds.graph, &graph_path).data()?;
    format::write_ids(&ds.docs, &format::sidecar_path(&graph_path)).data()?;
    format::write_qrels(&a.out.join("qrels.txt"), &ds.qrels, &ds.docs).data()?;
    format::write_run(&a.out.join("run.txt"), &ds.initial, &ds.docs, "synth").data()?;
    format::write_queries(&a.out.join("queries.tsv"), &ds.queries).data()?;
    if spec.with_text {
        format::write_corpus(&a.out.join("corpus.tsv"), &ds.docs, &ds.doc_tokens).data()?;
    }
    Ok(())
}

fn load_index_for_qrels(qrels: &Path, index: &mut DocIndex) -> Result<Qrels, Failure> {
    format::read_qrels(qrels, index).data()
}

fn cmd_build_graph(a: &BuildGraphArgs) -> Result<(), Failure> {
    if a.k == 0 {
        return Err(config_error("--k must be at least 1"));
    }
    let corpus = a
        .corpus
        .as_deref()
        .map(format::read_corpus)
        .transpose()
        .data()?;
    let (graph, index) = match a.similarity {
        SimilarityKind::Bm25 | SimilarityKind::Tfidf => {
            let Some(corpus) = &corpus else {
                return Err(config_error("--corpus is required for lexical similarity"));
            };
            let graph = if a.similarity == SimilarityKind::Bm25 {
                build_knn_graph(&Bm25Index::new(&corpus.tokens, Bm25Params::default()), a.k)
            } else {
                build_knn_graph(
                    &AllPairs {
                        affinity: LexicalAffinity::new(&corpus.tokens),
                        num_docs: corpus.tokens.len(),
                    },
                    a.k,
                )
            };
            (graph.data()?, corpus.index.clone())
        }
        SimilarityKind::Oracle => {
            let qrels_path = a
                .qrels
                .as_deref()
                .ok_or_else(|| config_error("--qrels is required for oracle similarity"))?;
            let mut index = match (&corpus, &a.ids) {
                (Some(c), _) => c.index.clone(),
                (None, Some(ids)) => format::read_ids(ids).data()?,
                (None, None) => {
                    return Err(config_error("oracle similarity needs --corpus or --ids"))
                }
            };
            let qrels = load_index_for_qrels(qrels_path, &mut index)?;
            let oracle = CoRelevanceOracle::from_qrels(&qrels, a.threshold, index.len())
                .with_noise(a.noise, a.seed);
            (build_knn_graph(&oracle, a.k).data()?, index)
        }
    };
    format::save_graph(&graph, &a.out).data()?;
    format::write_ids(&index, &format::sidecar_path(&a.out)).data()?;
    Ok(())
}

/// Loads a graph and its id sidecar.
fn load_graph_with_ids(path: &Path) -> Result<(CorpusGraph, DocIndex), Failure> {
    let graph = format::load_graph(path)
        .with_context(|| format!("loading {}", path.display()))
        .data()?;
    let ids_path = format::sidecar_path(path);
    let index = format::read_ids(&ids_path).data()?;
    if index.len() != graph.num_docs() {
        return Err(Failure::Data(anyhow!(
            "{} lists {} documents but the graph has {}",
            ids_path.display(),
            index.len(),
            graph.num_docs()
        )));
    }
    Ok((graph, index))
}

fn cmd_reweight_graph(a: &ReweightArgs) -> Result<(), Failure> {
    let (graph, graph_ids) = load_graph_with_ids(&a.graph)?;
    let mut index = graph_ids.clone();
    if let Some(k) = a.prune {
        if k == 0 || k > graph.k() {
            return Err(config_error(format!(
                "--prune must lie in 1..={}",
                graph.k()
            )));
        }
    }
    let reweighted = match a.affinity {
        AffinityKind::Oracle => {
            let path = a
                .qrels
                .as_deref()
                .ok_or_else(|| config_error("--qrels is required for oracle affinity"))?;
            let qrels = load_index_for_qrels(path, &mut index)?;
            let oracle = CoRelevanceOracle::from_qrels(&qrels, a.threshold, index.len())
                .with_noise(a.noise, a.seed);
            reweight_graph(&graph, &oracle).data()?
        }
        AffinityKind::Tfidf => {
            let path = a
                .corpus
                .as_deref()
                .ok_or_else(|| config_error("--corpus is required for tfidf affinity"))?;
            let corpus = format::read_corpus(path).data()?;
            let tokens = align_corpus(&corpus, &graph_ids)?;
            reweight_graph(&graph, &LexicalAffinity::new(&tokens)).data()?
        }
    };
    let out = match a.prune {
        Some(k) => prune_graph(&reweighted, k).data()?,
        None => reweighted,
    };
    format::save_graph(&out, &a.out).data()?;
    format::write_ids(&graph_ids, &format::sidecar_path(&a.out)).data()?;
    Ok(())
}

/// Token bags in `index` order; every indexed document must be in the corpus.
fn align_corpus(corpus: &Corpus, index: &DocIndex) -> Result<Vec<Vec<String>>, Failure> {
    index
        .names()
        .iter()
        .map(|name| {
            corpus
                .index
                .get(name)
                .map(|d| corpus.tokens[d.index()].clone())
                .ok_or_else(|| Failure::Data(anyhow!("document {name} is missing from the corpus")))
        })
        .collect()
}

fn schedule_config(a: &RerankArgs) -> Result<ScheduleConfig, Failure> {
    let mut cfg = ScheduleConfig::new(a.strategy, a.budget).with_batch(a.batch);
    cfg.top_set = a.s.unwrap_or_else(|| default_top_set(a.budget.max(1)));
    cfg.estimator = match a.estimator {
        EstimatorArg::RankerScores => Estimator::RankerScores,
        EstimatorArg::RetrieverScores => Estimator::RetrieverScores,
    };
    cfg.direction = match a.direction {
        DirectionArg::OutEdge => EdgeDirection::OutEdge,
        DirectionArg::MaxOfBoth => EdgeDirection::MaxOfBoth,
    };
    cfg.seed = a.seed;
    cfg.record_frontier = a.trace.is_some();
    cfg.validate().config()?;
    Ok(cfg)
}

fn check_same_ids(a: &DocIndex, b: &DocIndex, what: &str) -> Result<(), Failure> {
    if a.names() != b.names() {
        return Err(Failure::Data(anyhow!(
            "{what} disagrees with the graph id sidecar"
        )));
    }
    Ok(())
}

fn cmd_rerank(a: &RerankArgs) -> Result<(), Failure> {
    let cfg = schedule_config(a)?;
    let strategy = a.strategy;
    // which graph each strategy walks
    let graph_path = match strategy {
        Strategy::Plain => None,
        Strategy::Gar => Some(
            a.graph
                .as_ref()
                .ok_or_else(|| config_error("gar needs --graph"))?,
        ),
        Strategy::GarLaff => Some(a.affinity_graph.as_ref().ok_or_else(|| {
            config_error("gar-laff needs an affinity-reweighted graph (--affinity-graph)")
        })?),
        Strategy::GarSetAff | Strategy::Quam => Some(
            a.affinity_graph
                .as_ref()
                .or(a.graph.as_ref())
                .ok_or_else(|| {
                    config_error(format!("{strategy} needs --affinity-graph or --graph"))
                })?,
        ),
    };
    match a.scorer {
        ScorerKind::Replay if a.scores.is_none() => {
            return Err(config_error("the replay scorer needs --scores"))
        }
        ScorerKind::Oracle if a.qrels.is_none() => {
            return Err(config_error("the oracle scorer needs --qrels"))
        }
        ScorerKind::Bm25 if a.corpus.is_none() || a.queries.is_none() => {
            return Err(config_error("the bm25 scorer needs --corpus and --queries"))
        }
        _ => {}
    }

    let (graph, mut index) = match graph_path {
        Some(p) => {
            let (g, ix) = load_graph_with_ids(p)?;
            (Some(g), ix)
        }
        None => (None, DocIndex::new()),
    };
    let corpus = a
        .corpus
        .as_deref()
        .map(format::read_corpus)
        .transpose()
        .data()?;
    if let Some(c) = &corpus {
        if graph.is_some() {
            check_same_ids(&c.index, &index, "the corpus")?;
        } else {
            index = c.index.clone();
        }
    }
    let run = format::read_run(&a.run, &mut index).data()?;
    let initial: Vec<Ranking> = run
        .rankings
        .iter()
        .map(|r| a.depth.map_or_else(|| r.clone(), |d| r.truncated(d)))
        .collect();
    let queries: Vec<Query> = match &a.queries {
        Some(p) => {
            let texts: BTreeMap<String, Query> = format::read_queries(p)
                .data()?
                .into_iter()
                .map(|q| (q.id.clone(), q))
                .collect();
            initial
                .iter()
                .map(|r| {
                    texts
                        .get(&r.query_id)
                        .cloned()
                        .unwrap_or_else(|| Query::id_only(r.query_id.clone()))
                })
                .collect()
        }
        None => initial
            .iter()
            .map(|r| Query::id_only(r.query_id.clone()))
            .collect(),
    };

    let qrels = a
        .qrels
        .as_deref()
        .map(|p| format::read_qrels(p, &mut index))
        .transpose()
        .data()?;
    let scorer: Box<dyn Scorer + Sync + '_> = match a.scorer {
        ScorerKind::Replay => {
            let scores = format::read_run(a.scores.as_deref().unwrap(), &mut index).data()?;
            let replay = ReplayScorer::new(scores.rankings);
            Box::new(match a.missing_score {
                Some(s) => replay.with_missing_score(s),
                None => replay,
            })
        }
        ScorerKind::Oracle => Box::new(QrelsOracle::new(qrels.as_ref().unwrap(), a.noise, a.seed)),
        ScorerKind::Bm25 => Box::new(Bm25Index::new(
            &corpus.as_ref().unwrap().tokens,
            Bm25Params::default(),
        )),
    };

    let results: Vec<(Ranking, Trace)> = queries
        .par_iter()
        .zip(initial.par_iter())
        .map(|(q, r0)| {
            rerank(r0, q, scorer.as_ref(), graph.as_ref(), &cfg)
                .with_context(|| format!("query {}", q.id))
        })
        .collect::<anyhow::Result<_>>()
        .data()?;

    let rankings: Vec<Ranking> = results.iter().map(|r| r.0.clone()).collect();
    let tag = a.tag.clone().unwrap_or_else(|| strategy.name().to_string());
    format::write_run(&a.out, &rankings, &index, &tag).data()?;
    if let Some(path) = &a.trace {
        let mut text = String::new();
        for ((_, trace), q) in results.iter().zip(&queries) {
            for (i, step) in trace.steps.iter().enumerate() {
                let named = |list: &[(quam_core::DocId, f64)]| -> Vec<serde_json::Value> {
                    list.iter()
                        .map(|(d, s)| json!([index.name(*d).unwrap_or("?"), s]))
                        .collect()
                };
                let record = json!({
                    "query": q.id,
                    "step": i,
                    "pool": step.pool.name(),
                    "batch": named(&step.batch),
                    "frontier_size": step.frontier_size,
                    "initial_remaining": step.initial_remaining,
                    "frontier": step.frontier.as_deref().map(named),
                });
                writeln!(text, "{record}").unwrap();
            }
        }
        emit(Some(path), &text)?;
    }
    Ok(())
}

fn fmt_metric(x: f64) -> String {
    format!("{x:.4}")
}

fn report_rows(out: &mut String, name: &str, report: &MetricReport) {
    let ms = report
        .ms_per_query
        .map_or_else(|| "NA".to_string(), |m| format!("{m:.3}"));
    writeln!(
        out,
        "{name}\t{}\t{}\t{}\t{}\t{ms}",
        report.cutoff,
        fmt_metric(report.mean_ndcg_10),
        fmt_metric(report.mean_ndcg_c),
        fmt_metric(report.mean_recall_c)
    )
    .unwrap();
}

type MetricGetter = fn(&QueryMetrics) -> f64;

const TESTED_METRICS: [(&str, MetricGetter); 3] = [
    ("nDCG@10", |m| m.ndcg_10),
    ("nDCG@c", |m| m.ndcg_c),
    ("Recall@c", |m| m.recall_c),
];

const REPORT_HEADER: &str = "strategy\tc\tnDCG@10\tnDCG@c\tRecall@c\tms/query\n";

fn cmd_evaluate(a: &EvaluateArgs) -> Result<(), Failure> {
    if a.cutoffs.is_empty() || a.cutoffs.contains(&0) {
        return Err(config_error("cutoffs must be at least 1"));
    }
    if a.significance.is_some() && a.run.len() < 2 {
        return Err(config_error("--significance needs at least two runs"));
    }
    let mut index = DocIndex::new();
    let qrels = format::read_qrels(&a.qrels, &mut index).data()?;
    let mut named_runs = Vec::new();
    for path in &a.run {
        let run = format::read_run(path, &mut index).data()?;
        let name = if run.tag.is_empty() {
            path.file_stem()
                .map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned())
        } else {
            run.tag.clone()
        };
        named_runs.push((name, run.rankings));
    }
    let reports: Vec<Vec<MetricReport>> = named_runs
        .par_iter()
        .map(|(_, rankings)| {
            a.cutoffs
                .iter()
                .map(|&c| evaluate(rankings, &qrels, c, a.threshold))
                .collect::<quam_core::Result<Vec<_>>>()
        })
        .collect::<quam_core::Result<_>>()
        .data()?;

    let mut table = String::from(REPORT_HEADER);
    let mut per_query = String::new();
    for ((name, _), reps) in named_runs.iter().zip(&reports) {
        for rep in reps {
            report_rows(&mut table, name, rep);
            for m in &rep.per_query {
                let record = json!({
                    "strategy": name,
                    "query": m.query_id,
                    "c": rep.cutoff,
                    "ndcg@10": m.ndcg_10,
                    "ndcg@c": m.ndcg_c,
                    "recall@c": m.recall_c,
                    "no_relevant": m.no_relevant,
                });
                writeln!(per_query, "{record}").unwrap();
            }
        }
    }
    emit(a.out.as_deref(), &table)?;
    if let Some(p) = &a.per_query {
        emit(Some(p), &per_query)?;
    }
    if let Some(p) = &a.significance {
        let comparisons = (named_runs.len() - 1) * a.cutoffs.len() * 3;
        let mut text = String::from("baseline\tsystem\tmetric\tc\tt\tp\tsignificant\n");
        for (i, (name, _)) in named_runs.iter().enumerate().skip(1) {
            for (j, rep) in reports[i].iter().enumerate() {
                let base = &reports[0][j];
                for (label, get) in TESTED_METRICS {
                    let xs: Vec<f64> = rep.per_query.iter().map(get).collect();
                    let ys: Vec<f64> = base.per_query.iter().map(get).collect();
                    let t = paired_ttest_bonferroni(&xs, &ys, comparisons, a.alpha).data()?;
                    writeln!(
                        text,
                        "{}\t{name}\t{label}\t{}\t{:.4}\t{:.3e}\t{}",
                        named_runs[0].0, rep.cutoff, t.t, t.p, t.significant
                    )
                    .unwrap();
                }
            }
        }
        emit(Some(p), &text)?;
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<(), Failure> {
    let spec = a.spec.spec();
    spec.validate().config()?;
    if a.repeats == 0 {
        return Err(config_error("--repeats must be at least 1"));
    }
    let mut configs = Vec::new();
    for &budget in &a.budgets {
        for &strategy in &a.strategies {
            let mut cfg = ScheduleConfig::new(strategy, budget).with_batch(a.batch);
            cfg.top_set = a.s.unwrap_or_else(|| default_top_set(budget.max(1)));
            cfg.validate().config()?;
            configs.push(cfg);
        }
    }
    let ds = generate(&spec).data()?;
    let set = BenchSet::from_synth(&ds, a.noise, spec.seed).data()?;
    let affinity =
        reweight_graph(&ds.graph, &ds.affinity_oracle(a.affinity_noise, spec.seed)).data()?;
    let mut table = String::from(REPORT_HEADER);
    for cfg in &configs {
        let graph = match cfg.strategy {
            Strategy::Plain => None,
            Strategy::Gar => Some(&ds.graph),
            _ => Some(&affinity),
        };
        let rep = latency_bench(&set, graph, cfg, a.repeats, a.threshold).data()?;
        report_rows(&mut table, cfg.strategy.name(), &rep.metrics);
    }
    emit(a.out.as_deref(), &table)
}

fn cmd_mine_triples(a: &MineTriplesArgs) -> Result<(), Failure> {
    if a.k == 0 {
        return Err(config_error("--k must be at least 1"));
    }
    let mut index = DocIndex::new();
    let r0 = format::read_run(&a.r0, &mut index).data()?;
    let r1 = format::read_run(&a.r1, &mut index).data()?;
    let mut triples = Vec::new();
    for pool in &r0.rankings {
        let Some(reranked) = r1.get(&pool.query_id) else {
            continue;
        };
        let mined = mine_triples(pool, reranked, a.k)
            .with_context(|| format!("query {}", pool.query_id))
            .data()?;
        triples.extend(mined);
    }
    format::write_triples(&a.out, &triples, &index).data()
}

fn cmd_histogram(a: &HistogramArgs) -> Result<(), Failure> {
    let mut index = DocIndex::new();
    let qrels = format::read_qrels(&a.qrels, &mut index).data()?;
    let hist = co_relevance_histogram(&qrels, a.threshold);
    match &a.out {
        Some(p) => format::write_histogram(p, &hist).data(),
        None => {
            let mut text = String::new();
            for (b, c) in &hist {
                writeln!(text, "{b}\t{c}").unwrap();
            }
            emit(None, &text)
        }
    }
}
