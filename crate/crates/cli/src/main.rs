mod config;
mod error;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use layerkit::dataset::{build_corpus, corpus_stats, export_corpus};
use layerkit::doc::{Document, LayerPath};
use layerkit::io::{read_doc, read_doc_dir, read_psd, write_doc, write_doc_dir, write_psd};
use layerkit::io::canonical::MANIFEST_FILE;
use layerkit::render::{composite, composite_prefix, group_backdrop};
use layerkit::rl::{advantages, group_objective, reward};
use layerkit::tools::{execute_sequence, ToolCall};
use layerkit::workflow::{run_workflow, DesignPlan, HeuristicPlanner, Planner, RemotePlanner, ReplayPlanner};
use serde::Serialize;
use serde_json::{json, Value};

use config::{CliConfig, PlannerKind};
use error::{Failure, Kind, Result};

const REPLAY_FILE: &str = "replay.json";

#[derive(Parser)]
#[command(name = "layerkit", version, about = "Layered design documents: rendering, tool calls, datasets and planning runs")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureFormat {
    Dir,
    Json,
    Psd,
}

#[derive(Subcommand)]
enum Command {
    /// Read a PSD file and write its canonical form.
    Parse {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a document, a prefix of it, or a group backdrop to PNG.
    Render {
        doc: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Composite of the first k leaves only.
        #[arg(long, conflicts_with = "group_backdrop")]
        step: Option<usize>,
        /// Everything below the group at this path, e.g. `0/2` or `[0,2]`.
        #[arg(long)]
        group_backdrop: Option<String>,
    },
    /// Execute a list of tool calls atomically.
    Apply {
        doc: PathBuf,
        calls: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the per-call trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Build training tuples from a directory of documents.
    BuildDataset {
        corpus: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; does not change the output.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Corpus statistics as JSON.
    Stats { corpus: Option<PathBuf> },
    /// Score predicted tool calls against gold calls.
    Score { pred: PathBuf, gold: PathBuf },
    /// Group-normalized advantages of a list of rewards.
    Advantages {
        rewards: PathBuf,
        /// Policy ratios, one per reward; adds the clipped objective.
        #[arg(long)]
        ratios: Option<PathBuf>,
    },
    /// Run the planning workflow over a design plan.
    Run {
        plan: Option<PathBuf>,
        #[arg(long, value_enum)]
        planner: Option<PlannerKind>,
        #[arg(long)]
        out: PathBuf,
        /// Recorded calls for the replay planner; defaults to the plan's replay.json.
        #[arg(long)]
        calls: Option<PathBuf>,
        /// Endpoint for the remote planner.
        #[arg(long)]
        endpoint: Option<String>,
    },
    /// Turn a document into a design plan plus its recorded calls.
    ExportPlan {
        doc: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the bundled synthetic fixture corpus.
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "dir")]
        format: FixtureFormat,
    },
    /// Print the effective configuration as TOML.
    PrintConfig,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(Failure::new(Kind::Usage, e.to_string().trim_end())),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(f),
    }
}

fn fail(f: Failure) -> ExitCode {
    eprintln!("{}", f.to_json());
    ExitCode::from(f.kind.code() as u8)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = CliConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Parse { input, out } => {
            let bytes = fs::read(&input).map_err(|e| Failure::io(&input, e))?;
            let (doc, report) = read_psd(&bytes)?;
            write_doc_dir(&doc, &out)?;
            write_json(&out.join("psd_report.json"), &report)?;
            print_json(&report)
        }
        Command::Render {
            doc,
            out,
            step,
            group_backdrop: group,
        } => {
            let doc = load_doc(&doc)?;
            let raster = match (step, group) {
                (Some(k), _) => {
                    if k > doc.leaf_count() {
                        return Err(Failure::new(Kind::Usage, format!("--step {k} exceeds leaf count {}", doc.leaf_count())));
                    }
                    composite_prefix(&doc, k)
                }
                (None, Some(g)) => {
                    let path = parse_path(&g)?;
                    doc.resolve_group(&path).map_err(|e| Failure::new(Kind::Usage, e.to_string()))?;
                    group_backdrop(&doc, &path)
                }
                (None, None) => composite(&doc),
            }
            .map_err(|e| Failure::new(Kind::Other, e.to_string()))?;
            write_bytes(&out, &raster.to_png()?)
        }
        Command::Apply { doc, calls, out, trace } => {
            let doc = load_doc(&doc)?;
            let calls = read_calls(&calls)?;
            let (result, steps) = execute_sequence(&doc, &calls)?;
            save_doc(&result, &out)?;
            if let Some(t) = trace {
                let mut lines = String::new();
                for s in &steps {
                    lines.push_str(&serde_json::to_string(s).expect("trace serializes"));
                    lines.push('\n');
                }
                write_bytes(&t, lines.as_bytes())?;
            }
            Ok(())
        }
        Command::BuildDataset { corpus, seed, out, jobs } => {
            let dir = corpus_arg(corpus, &cfg)?;
            let docs = load_corpus(&dir)?;
            let seed = seed.unwrap_or(cfg.seeds.dataset);
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let tuples = build_corpus(&docs, seed, &cfg.dataset, jobs)?;
            let manifest = export_corpus(&tuples, &out, Some(seed))?;
            print_json(&json!({ "tuple_count": manifest.tuple_count, "counts": manifest.counts }))
        }
        Command::Stats { corpus } => {
            let dir = corpus_arg(corpus, &cfg)?;
            let docs = load_corpus(&dir)?;
            print_json(&corpus_stats(docs.values()))
        }
        Command::Score { pred, gold } => {
            let report = reward(&read_calls(&pred)?, &read_calls(&gold)?, &cfg.reward)?;
            print_json(&report)
        }
        Command::Advantages { rewards, ratios } => {
            let rewards = read_numbers(&rewards)?;
            let adv = advantages(&rewards)?;
            match ratios {
                None => print_json(&json!({ "advantages": adv })),
                Some(p) => {
                    let objective = group_objective(&read_numbers(&p)?, &rewards, &cfg.grpo)?;
                    print_json(&json!({ "advantages": adv, "objective": objective }))
                }
            }
        }
        Command::Run {
            plan,
            planner,
            out,
            calls,
            endpoint,
        } => {
            let plan_path = plan
                .or(cfg.paths.plan.clone())
                .ok_or_else(|| Failure::new(Kind::Usage, "no plan given and none configured"))?;
            let design = DesignPlan::read(&plan_path)?;
            let mut planner: Box<dyn Planner> = match planner.unwrap_or(cfg.planner.kind) {
                PlannerKind::Replay => {
                    let path = calls.unwrap_or_else(|| plan_dir(&plan_path).join(REPLAY_FILE));
                    let bytes = fs::read(&path).map_err(|e| Failure::io(&path, e))?;
                    let replay: ReplayPlanner =
                        serde_json::from_slice(&bytes).map_err(|e| Failure::new(Kind::Format, format!("{}: {e}", path.display())))?;
                    Box::new(replay)
                }
                PlannerKind::Heuristic => Box::new(HeuristicPlanner),
                PlannerKind::Remote => {
                    let mut remote = cfg.planner.remote.clone();
                    if let Some(e) = endpoint {
                        remote.endpoint = e;
                    }
                    Box::new(RemotePlanner::new(remote))
                }
            };
            let (doc, state) = run_workflow(&design, planner.as_mut(), &cfg.workflow)?;
            save_doc(&doc, &out.join("document"))?;
            let render = composite(&doc).map_err(|e| Failure::new(Kind::Other, e.to_string()))?;
            write_bytes(&out.join("render.png"), &render.to_png()?)?;
            let mut lines = String::new();
            for t in &state.trace {
                lines.push_str(&serde_json::to_string(t).expect("trace serializes"));
                lines.push('\n');
            }
            write_bytes(&out.join("trace.jsonl"), lines.as_bytes())?;
            let skeleton: Vec<Value> = state.skeleton_calls.iter().map(ToolCall::to_json).collect();
            write_json(&out.join("skeleton.json"), &skeleton)?;
            let hash = state.trace.last().map(|t| t.render_hash.clone());
            print_json(&json!({ "steps": state.trace.len(), "render_hash": hash }))
        }
        Command::ExportPlan { doc, out } => {
            let doc = load_doc(&doc)?;
            let plan = DesignPlan::from_document(&doc);
            plan.validate()?;
            let replay = ReplayPlanner::from_document(&doc)?;
            plan.write_dir(&out)?;
            write_json(&out.join(REPLAY_FILE), &replay)
        }
        Command::GenFixtures { out, format } => {
            let corpus = layerkit::fixtures::corpus();
            fs::create_dir_all(&out).map_err(|e| Failure::io(&out, e))?;
            for (id, doc) in &corpus {
                match format {
                    FixtureFormat::Dir => write_doc_dir(doc, &out.join(id))?,
                    FixtureFormat::Json => write_bytes(&out.join(format!("{id}.json")), &write_doc(doc)?)?,
                    FixtureFormat::Psd => {
                        let (bytes, _) = write_psd(&layerkit::fixtures::psd_subset(doc));
                        write_bytes(&out.join(format!("{id}.psd")), &bytes)?
                    }
                }
            }
            print_json(&json!({ "documents": corpus.len() }))
        }
        Command::PrintConfig => {
            print!("{}", cfg.to_toml());
            Ok(())
        }
    }
}

fn corpus_arg(arg: Option<PathBuf>, cfg: &CliConfig) -> Result<PathBuf> {
    arg.or(cfg.paths.corpus.clone())
        .ok_or_else(|| Failure::new(Kind::Usage, "no corpus directory given and none configured"))
}

fn plan_dir(plan: &Path) -> PathBuf {
    if plan.is_dir() {
        plan.to_path_buf()
    } else {
        plan.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// A canonical directory, a single-file canonical document or a PSD file.
fn load_doc(path: &Path) -> Result<Document> {
    if path.is_dir() {
        return Ok(read_doc_dir(path)?);
    }
    let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
    if has_ext(path, "psd") {
        Ok(read_psd(&bytes)?.0)
    } else {
        Ok(read_doc(&bytes)?)
    }
}

/// Writes a single-file document for `*.json`, a canonical directory otherwise.
fn save_doc(doc: &Document, path: &Path) -> Result<()> {
    if has_ext(path, "json") {
        write_bytes(path, &write_doc(doc)?)
    } else {
        Ok(write_doc_dir(doc, path)?)
    }
}

fn has_ext(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

/// Documents keyed by file or directory stem, in name order.
fn load_corpus(dir: &Path) -> Result<BTreeMap<String, Document>> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).collect();
    paths.sort();
    let mut docs = BTreeMap::new();
    for p in paths {
        let doc_like = if p.is_dir() {
            p.join(MANIFEST_FILE).is_file()
        } else {
            has_ext(&p, "json") || has_ext(&p, "psd")
        };
        if !doc_like {
            continue;
        }
        let id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let doc = load_doc(&p).map_err(|f| Failure::new(f.kind, format!("{}: {}", p.display(), f.message)))?;
        if docs.insert(id.clone(), doc).is_some() {
            return Err(Failure::new(Kind::Usage, format!("duplicate document id {id:?} in {}", dir.display())));
        }
    }
    Ok(docs)
}

/// A JSON array of calls, or one call per line.
fn read_calls(path: &Path) -> Result<Vec<ToolCall>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let at = |e: String| Failure::new(Kind::Format, format!("{}: {e}", path.display()));
    if text.trim_start().starts_with('[') {
        let values: Vec<Value> = serde_json::from_str(&text).map_err(|e| at(e.to_string()))?;
        values.iter().map(|v| ToolCall::from_json(v).map_err(|e| at(e.to_string()))).collect()
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| ToolCall::parse_wire(l).map_err(|e| at(e.to_string())))
            .collect()
    }
}

/// A JSON array of numbers, or whitespace-separated numbers.
fn read_numbers(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let at = |e: String| Failure::new(Kind::Format, format!("{}: {e}", path.display()));
    if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(|e| at(e.to_string()))
    } else {
        text.split_whitespace().map(|t| t.parse::<f64>().map_err(|e| at(format!("{t:?}: {e}")))).collect()
    }
}

fn parse_path(s: &str) -> Result<LayerPath> {
    let s = s.trim();
    let bad = || Failure::new(Kind::Usage, format!("bad layer path {s:?}"));
    if s.starts_with('[') {
        return serde_json::from_str::<Vec<usize>>(s).map(LayerPath).map_err(|_| bad());
    }
    if s.is_empty() || s == "/" {
        return Ok(LayerPath::root());
    }
    s.trim_matches('/').split('/').map(|p| p.parse::<usize>().map_err(|_| bad())).collect::<Result<Vec<_>>>().map(LayerPath)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, v: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(v).expect("plain data serializes");
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

fn print_json<T: Serialize + ?Sized>(v: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    let text = serde_json::to_string_pretty(v).expect("plain data serializes");
    match writeln!(out, "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Failure::new(Kind::Io, format!("stdout: {e}"))),
        _ => Ok(()),
    }
}
