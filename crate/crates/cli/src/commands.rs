//! One function per subcommand. Each reads its inputs, runs one pipeline
//! stage and writes its artifacts atomically.

use std::path::{Path, PathBuf};

use causalkg::eval::{build_queries, evaluate, type_pool, Candidates, EvalConfig, FilterMode, IndexedQuery, Task};
use causalkg::ingest::{extract_mediated_chains, parse_ceg_corpus, prune_corpus, write_networks};
use causalkg::kg::{
    build_kg, kg_stats, parse_kg, parse_kg_fragment, serialize_kg_with_generator, split_kg, ContextTriple, EntityId,
    KgSplit, Relation, SplitRatios,
};
use causalkg::models::{EdgeList, HyperConfig, IndexLink, IndexQuery, Model, ModelKind, TailScorer};
use causalkg::numeric::{grad_check, rng, GRAD_CHECK_EPS};
use causalkg::train::checkpoint::vocab_names;
use causalkg::train::{load_checkpoint, margin_loss_and_grad, save_checkpoint, train, Checkpoint, TrainData};
use causalkg::{Error, Result};
use rand::Rng;
use serde::Serialize;
use serde_json::json;

use crate::config::{Header, RunConfig};
use crate::output::{read, require_inputs, write_atomic, write_json, OutputLock};

/// Relative-error threshold above which `grad-check` fails.
pub const GRAD_CHECK_TOL: f64 = 1e-4;

const NETWORKS_FILE: &str = "networks.json";
const PARTS: [&str; 3] = ["train", "valid", "test"];

fn pick(flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| fallback.clone())
        .ok_or_else(|| Error::Validation(format!("no {what} path: pass it as a flag or set paths.{what}")))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Validation(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn part_path(dir: &Path, part: &str) -> PathBuf {
    dir.join(format!("{part}.ckg"))
}

fn load_split(dir: &Path) -> Result<KgSplit> {
    let paths: Vec<PathBuf> = PARTS.iter().map(|p| part_path(dir, p)).collect();
    require_inputs(&paths.iter().map(PathBuf::as_path).collect::<Vec<_>>())?;
    let mut parts = paths.iter().map(|p| parse_kg_fragment(&read(p)?));
    let split = KgSplit {
        train: parts.next().expect("three parts")?,
        valid: parts.next().expect("three parts")?,
        test: parts.next().expect("three parts")?,
    };
    split.check()?;
    Ok(split)
}

pub struct PreprocessArgs {
    pub input: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

/// Corpus → accepted networks (`<out>/networks.json`) and a rejection
/// summary on standard output (also written to `--report`).
pub fn preprocess(cfg: &RunConfig, args: PreprocessArgs) -> Result<()> {
    let input = pick(args.input, &cfg.paths.corpus, "corpus")?;
    let out_dir = pick(args.out, &cfg.paths.networks, "networks")?;
    require_inputs(&[&input])?;
    let corpus = parse_ceg_corpus(&read(&input)?)?;
    let (nets, summary) = prune_corpus(&corpus);
    let header = Header::new("preprocess", cfg);
    let _lock = OutputLock::acquire(&out_dir)?;
    write_atomic(&out_dir.join(NETWORKS_FILE), &write_networks(&nets, header.json())?)?;
    let report = json!({ "header": header, "summary": summary });
    if let Some(path) = args.report {
        let _report_lock = (path.parent() != Some(out_dir.as_path()))
            .then(|| OutputLock::for_file(&path))
            .transpose()?;
        write_json(&path, &report)?;
    }
    print_json(&report)
}

pub struct BuildArgs {
    pub networks: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub context: Option<PathBuf>,
}

/// Networks → causal knowledge graph in the text format.
pub fn build(cfg: &RunConfig, args: BuildArgs) -> Result<()> {
    let mut input = pick(args.networks, &cfg.paths.networks, "networks")?;
    let out = pick(args.out, &cfg.paths.kg, "kg")?;
    require_inputs(&[&input])?;
    if input.is_dir() {
        input = input.join(NETWORKS_FILE);
    }
    let (nets, _) = prune_corpus(&parse_ceg_corpus(&read(&input)?)?);
    let chains: Vec<_> = nets.iter().map(extract_mediated_chains).collect();
    let context: Option<Vec<ContextTriple>> = match &args.context {
        Some(p) => {
            require_inputs(&[p])?;
            let triples = serde_json::from_slice(&read(p)?).map_err(|e| Error::Parse {
                location: p.display().to_string(),
                message: e.to_string(),
            })?;
            Some(triples)
        }
        None => None,
    };
    let kg = build_kg(&nets, &chains, cfg.variant, cfg.mediated, context.as_deref())?;
    let header = Header::new("build-kg", cfg);
    let _lock = OutputLock::for_file(&out)?;
    write_atomic(&out, &serialize_kg_with_generator(&kg, &header.line()))?;
    print_json(&json!({ "header": header, "stats": kg_stats(&kg) }))
}

pub fn parse_ratios(text: &str) -> Result<SplitRatios> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Validation(format!("ratios {text:?}: {e}")))?;
    match parts[..] {
        [a, b, c] => SplitRatios::new(a, b, c),
        _ => Err(Error::Validation(format!("ratios {text:?}: expected three comma-separated numbers"))),
    }
}

pub struct SplitArgs {
    pub kg: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Graph → `<out>/{train,valid,test}.ckg`.
pub fn split(cfg: &RunConfig, args: SplitArgs) -> Result<()> {
    let kg_path = pick(args.kg, &cfg.paths.kg, "kg")?;
    let out = pick(args.out, &cfg.paths.splits, "splits")?;
    require_inputs(&[&kg_path])?;
    let kg = parse_kg(&read(&kg_path)?)?;
    let parts = split_kg(&kg, &cfg.ratios, cfg.seed)?;
    let header = Header::new("split", cfg);
    let _lock = OutputLock::acquire(&out)?;
    let mut sizes = serde_json::Map::new();
    for (name, part) in PARTS.iter().zip([&parts.train, &parts.valid, &parts.test]) {
        write_atomic(&part_path(&out, name), &serialize_kg_with_generator(part, &header.line()))?;
        sizes.insert(name.to_string(), json!(kg_stats(part).links));
    }
    print_json(&json!({ "header": header, "links": sizes }))
}

pub struct TrainArgs {
    pub split: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

/// Split → trained checkpoint, plus an optional JSON Lines history whose
/// first line is the header.
pub fn train_model(cfg: &RunConfig, args: TrainArgs) -> Result<()> {
    let split_dir = pick(args.split, &cfg.paths.splits, "splits")?;
    let out = pick(args.out, &cfg.paths.checkpoint, "checkpoint")?;
    let split = load_split(&split_dir)?;
    let _lock = OutputLock::for_file(&out)?;
    let data = TrainData::from_split(&split)?;
    let model = cfg.model.init(data.vocab.n_entities(), data.vocab.n_relations(), cfg.seed)?;
    let tc = cfg.train_config();
    let outcome = train(model, &data, &tc)?;
    let header = Header::new("train", cfg);
    let (entities, relations) = vocab_names(&data.vocab);
    let ckpt = Checkpoint {
        model: cfg.model,
        config_echo: cfg.to_json(),
        config_digest: header.config_digest.clone(),
        entities,
        relations,
        params: outcome.model.params().clone(),
        optim: outcome.optim.clone(),
        epoch: outcome.best_epoch as u64,
        val_mrr: outcome.best_val_mrr,
    };
    save_checkpoint(&out, &ckpt)?;
    if let Some(path) = args.history {
        let mut lines = vec![json!({ "header": header }).to_string()];
        lines.extend(outcome.history.iter().map(|r| json!(r).to_string()));
        let mut text = lines.join("\n");
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
    }
    print_json(&json!({
        "header": header,
        "model": cfg.model.kind,
        "epochs_run": outcome.history.len(),
        "best_epoch": outcome.best_epoch,
        "best_val_mrr": outcome.best_val_mrr,
        "final_loss": outcome.history.last().map(|r| r.loss),
    }))
}

struct Loaded {
    ckpt: Checkpoint,
    model: Model,
    split: KgSplit,
    data: TrainData,
}

fn load_model(checkpoint: &Path, split_dir: &Path) -> Result<Loaded> {
    require_inputs(&[checkpoint])?;
    let ckpt = load_checkpoint(checkpoint)?;
    let model = ckpt.to_model(None)?;
    let split = load_split(split_dir)?;
    let data = TrainData::with_vocab(&split, ckpt.vocab()?)?;
    Ok(Loaded { ckpt, model, split, data })
}

pub struct EvaluateArgs {
    pub checkpoint: Option<PathBuf>,
    pub kg: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub task: Task,
    pub out: Option<PathBuf>,
}

/// Ranks the test queries of one task and reports filtered MRR/Hits@K.
pub fn evaluate_model(cfg: &RunConfig, args: EvaluateArgs) -> Result<()> {
    let ckpt_path = pick(args.checkpoint, &cfg.paths.checkpoint, "checkpoint")?;
    let split_dir = pick(args.split, &cfg.paths.splits, "splits")?;
    let kg_path = args.kg.or_else(|| cfg.paths.kg.clone());
    if let Some(p) = &kg_path {
        require_inputs(&[p])?;
    }
    let loaded = load_model(&ckpt_path, &split_dir)?;
    let pool = match &kg_path {
        Some(p) => type_pool(&parse_kg(&read(p)?)?, &loaded.data.vocab),
        None => type_pool(&loaded.split.train, &loaded.data.vocab),
    };
    let queries = build_queries(&loaded.split.test, args.task)
        .iter()
        .map(|q| IndexedQuery::resolve(q, &loaded.data.vocab))
        .collect::<Result<Vec<_>>>()?;
    let scorer = loaded.model.scorer(&loaded.data.graph)?;
    let filter = loaded.data.filter();
    let report = evaluate(&scorer, args.task.name(), &queries, &filter, &cfg.eval, Some(&pool))?;
    let other_mode = match cfg.eval.filter {
        FilterMode::Standard => FilterMode::PaperLiteral,
        FilterMode::PaperLiteral => FilterMode::Standard,
    };
    let other_cfg = EvalConfig {
        filter: other_mode,
        ..cfg.eval
    };
    // The other filter mode is reported only when its ranks differ.
    let other = evaluate(&scorer, args.task.name(), &queries, &filter, &other_cfg, Some(&pool))
        .ok()
        .filter(|o| o.ranks != report.ranks);
    let header = Header::new("evaluate", cfg);
    let mut doc = json!({
        "header": header,
        "checkpoint_config_digest": loaded.ckpt.config_digest,
        "model": loaded.ckpt.kind(),
        "report": report,
    });
    if let Some(o) = other {
        doc["other_filter_mode"] = json!(o);
    }
    let out = args.out.or_else(|| cfg.paths.reports.as_ref().map(|d| d.join(format!("{}.json", args.task))));
    if let Some(path) = out {
        let _lock = OutputLock::for_file(&path)?;
        write_json(&path, &doc)?;
    }
    print_json(&doc)
}

/// Parses `rel=entity,rel=entity` into qualifier pairs.
pub fn parse_qualifiers(text: &str) -> Result<Vec<(Relation, EntityId)>> {
    text.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|pair| {
            let (r, e) = pair
                .split_once('=')
                .ok_or_else(|| Error::Validation(format!("qualifier {pair:?} is not relation=entity")))?;
            let rel: Relation = r.trim().parse()?;
            if !rel.is_qualifier() {
                return Err(Error::Validation(format!("{rel} is not a qualifier relation")));
            }
            Ok((rel, EntityId::new(e.trim())?))
        })
        .collect()
}

pub struct QueryArgs {
    pub checkpoint: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub anchor: String,
    pub qualifiers: Option<String>,
    pub n: usize,
}

#[derive(Serialize)]
struct Candidate {
    rank: usize,
    entity: String,
    score: f64,
}

/// Top-`n` tails for one query. Prediction asks for the effect type of a
/// cause, explanation for the cause type of an effect.
pub fn query(cfg: &RunConfig, task: Task, args: QueryArgs) -> Result<()> {
    let ckpt_path = pick(args.checkpoint, &cfg.paths.checkpoint, "checkpoint")?;
    let split_dir = pick(args.split, &cfg.paths.splits, "splits")?;
    let verb = match task {
        Task::Prediction => "predict",
        Task::Explanation => "explain",
    };
    let loaded = load_model(&ckpt_path, &split_dir)?;
    let vocab = &loaded.data.vocab;
    let anchor = EntityId::new(args.anchor.as_str())?;
    let relation = task.relation();
    let quals = parse_qualifiers(args.qualifiers.as_deref().unwrap_or(""))?;
    let indexed = quals
        .iter()
        .map(|(r, e)| Ok((vocab.relation(r)?, vocab.entity(e)?)))
        .collect::<Result<Vec<_>>>()?;
    let q = IndexQuery::new(vocab.entity(&anchor)?, vocab.relation(&relation)?, indexed);
    let scorer = loaded.model.scorer(&loaded.data.graph)?;
    let scores = scorer.score_tails(&q)?;
    let allowed: Vec<bool> = match cfg.eval.candidates {
        Candidates::All => vec![true; scores.len()],
        Candidates::Types => type_pool(&loaded.split.train, vocab),
    };
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| allowed[i]).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let candidates: Vec<Candidate> = order
        .iter()
        .take(args.n)
        .enumerate()
        .map(|(i, &e)| Candidate {
            rank: i + 1,
            entity: vocab.entities()[e].to_string(),
            score: scores[e],
        })
        .collect();
    print_json(&json!({
        "header": Header::new(verb, cfg),
        "model": loaded.ckpt.kind(),
        "anchor": anchor,
        "relation": relation.name(),
        "qualifiers": quals.iter().map(|(r, e)| json!({"relation": r.name(), "entity": e})).collect::<Vec<_>>(),
        "candidates": candidates,
    }))
}

/// Counts for a graph file, or for each part of a split directory.
pub fn stats(cfg: &RunConfig, path: Option<PathBuf>) -> Result<()> {
    let path = pick(path, &cfg.paths.kg, "kg")?;
    require_inputs(&[&path])?;
    let header = Header::new("stats", cfg);
    if path.is_dir() {
        let split = load_split(&path)?;
        print_json(&json!({
            "header": header,
            "train": kg_stats(&split.train),
            "valid": kg_stats(&split.valid),
            "test": kg_stats(&split.test),
        }))
    } else {
        let kg = parse_kg_fragment(&read(&path)?)?;
        print_json(&json!({ "header": header, "stats": kg_stats(&kg) }))
    }
}

/// Checks one model family's analytic gradient against central differences
/// on a small random instance. Returns the maximum relative error.
pub fn grad_check_model(kind: ModelKind, seed: u64) -> Result<f64> {
    let mut r = rng::seeded(seed);
    let (n_ent, n_rel) = (8, 4);
    match kind.base() {
        Some(_) => {
            let model = causalkg::models::ModelConfig {
                kind,
                dim: 8,
                ..Default::default()
            }
            .init(n_ent, n_rel, seed)?;
            let Model::Base(base) = model else { unreachable!("base kind builds a base model") };
            let pairs: Vec<(IndexLink, IndexLink)> = (0..6)
                .map(|_| {
                    let pos = IndexLink {
                        head: r.gen_range(0..n_ent),
                        relation: r.gen_range(0..n_rel),
                        tail: r.gen_range(0..n_ent),
                        quals: vec![],
                    };
                    let neg = IndexLink {
                        tail: (pos.tail + r.gen_range(1..n_ent)) % n_ent,
                        ..pos.clone()
                    };
                    (pos, neg)
                })
                .collect();
            // A wide margin keeps every hinge active, so the loss is smooth.
            let f = |p: &causalkg::numeric::ParamStore| margin_loss_and_grad(&base, p, &pairs, 100.0);
            grad_check(f, base.params(), GRAD_CHECK_EPS, 200, seed)
        }
        None => {
            let cfg = HyperConfig {
                dim: 6,
                layers: 2,
                attention: true,
                ..HyperConfig::default()
            };
            let model = causalkg::models::HyperModel::init(n_ent, n_rel + 2, cfg, seed)?;
            let (med, med_ty) = (n_rel, n_rel + 1);
            let mut graph = EdgeList::default();
            let mut queries = Vec::new();
            let mut targets = Vec::new();
            for _ in 0..10 {
                let (h, rel, t) = (r.gen_range(0..n_ent), r.gen_range(0..n_rel), r.gen_range(0..n_ent));
                let quals = if r.gen_bool(0.5) {
                    vec![(med, r.gen_range(0..n_ent)), (med_ty, r.gen_range(0..n_ent))]
                } else {
                    vec![]
                };
                graph.push(h, rel, t, quals.clone());
                queries.push(IndexQuery::new(h, rel, quals));
                targets.push(vec![t]);
            }
            let f = |p: &causalkg::numeric::ParamStore| model.loss_and_grad(p, &graph, &queries, &targets, 0.1);
            grad_check(f, model.params(), GRAD_CHECK_EPS, 200, seed)
        }
    }
}
