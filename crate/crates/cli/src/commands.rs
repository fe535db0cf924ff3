use std::fs;
use std::io::{self, IsTerminal, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use lifegraph::analysis::{effective_depth_stats, structure_report};
use lifegraph::bench::{
    load_vaccount_qa, match_judge, parse_qa, run_eval, Answerer, EchoAnswerer, EvalConfig, LifeGraphAnswerer,
    ScriptAnswerer,
};
use lifegraph::construction::GraphBuilder;
use lifegraph::graph::LifeGraph;
use lifegraph::media::{mime_for, DirMediaStore, MediaStore};
use lifegraph::model::{ChatModel, MediaPayload};
use lifegraph::retrieval::{Query, RetrievalConfig, Retriever};
use lifegraph::vaccount::Vaccount;
use serde::Serialize;
use tracing::info;
use tracing_subscriber::EnvFilter;

use crate::config::Config;
use crate::{Cli, Command, JudgeKind, RetrievalArgs};

impl RetrievalArgs {
    fn apply(&self, base: &RetrievalConfig) -> Result<RetrievalConfig> {
        let mut cfg = base.clone();
        if let Some(d) = self.depth {
            cfg.depth = d;
        }
        if let Some(w) = self.width {
            cfg.width = w;
        }
        if self.no_refs {
            cfg.with_refs = false;
        } else if self.with_refs {
            cfg.with_refs = true;
        }
        if let Some(m) = self.max_refs {
            cfg.max_refs = m;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn init_logging(level: &str) -> Result<()> {
    let filter = EnvFilter::try_new(level).with_context(|| format!("invalid log level {level:?}"))?;
    // A second init (tests) is harmless.
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(io::stderr)
        .with_ansi(io::stderr().is_terminal())
        .with_target(false)
        .try_init();
    Ok(())
}

fn print_json(value: &impl Serialize) -> Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_graph(path: &Path) -> Result<LifeGraph> {
    LifeGraph::load_from_path(path).with_context(|| format!("loading graph {}", path.display()))
}

fn media_store(cfg: &Config) -> Option<DirMediaStore> {
    cfg.paths.media_dir.as_ref().map(DirMediaStore::new)
}

#[derive(Serialize)]
struct BuildSummary<'a> {
    owner: &'a str,
    nodes: usize,
    edges: usize,
    batches: usize,
    rejected: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => Config::from_file(path)?,
        None => Config::default(),
    };
    cfg.apply_env(|k| std::env::var(k).ok())?;
    if let Some(m) = cli.mock {
        cfg.model.mock_script = Some(m);
    }
    if let Some(d) = cli.media_dir {
        cfg.paths.media_dir = Some(d);
    }
    if let Some(l) = cli.log_level {
        cfg.logging.level = l;
    }
    init_logging(&cfg.logging.level)?;

    match cli.command {
        Command::Build {
            vaccount,
            output,
            report,
            capacity,
        } => {
            if let Some(c) = capacity {
                cfg.construction.capacity = c;
            }
            build(&cfg, &vaccount, &output, report.as_deref())
        }
        Command::Ask {
            graph,
            question,
            image,
            json,
            retrieval,
        } => ask(&cfg, &graph, &question, &image, json, retrieval.apply(&cfg.retrieval)?),
        Command::Retrieve {
            graph,
            question,
            retrieval,
        } => {
            let rc = retrieval.apply(&cfg.retrieval)?;
            let graph = load_graph(&graph)?;
            let model = cfg.model()?;
            let store = media_store(&cfg);
            let mut r = Retriever::new(&graph, model.as_ref()).with_config(rc);
            if let Some(s) = &store {
                r = r.with_media(s);
            }
            print_json(&r.retrieve(&Query::new(question))?)
        }
        Command::Eval {
            vaccount,
            qa,
            answerer,
            graph,
            judge,
            out,
            retrieval,
        } => {
            let rc = retrieval.apply(&cfg.retrieval)?;
            let graph = graph.or_else(|| cfg.paths.graph.clone());
            eval(
                &cfg,
                &vaccount,
                qa.as_deref(),
                &answerer,
                graph.as_deref(),
                judge,
                out.as_deref(),
                rc,
            )
        }
        Command::Analyze {
            graph,
            degree_data,
            queries,
            limits,
            retrieval,
        } => {
            let rc = retrieval.apply(&cfg.retrieval)?;
            analyze(&cfg, &graph, degree_data.as_deref(), queries.as_deref(), &limits, &rc)
        }
        Command::Export { graph, dot } => {
            let graph = load_graph(&graph)?;
            match dot {
                Some(path) => {
                    let file = fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
                    let mut w = io::BufWriter::new(file);
                    graph.export_dot(&mut w)?;
                    w.flush()?;
                }
                None => graph.export_dot(io::stdout().lock())?,
            }
            Ok(())
        }
    }
}

fn build(cfg: &Config, vaccount: &Path, output: &Path, report_path: Option<&Path>) -> Result<()> {
    let (va, store) = Vaccount::load(vaccount)?;
    let model = cfg.model()?;
    let (graph, report) = GraphBuilder::new(model.as_ref())
        .with_media(&store)
        .with_config(cfg.construction_config())
        .build(&va)?;
    graph
        .save_to_path(output)
        .with_context(|| format!("writing {}", output.display()))?;
    info!(nodes = graph.node_count(), edges = graph.edge_count(), "graph written");
    if let Some(p) = report_path {
        write_json(p, &report)?;
    }
    print_json(&BuildSummary {
        owner: graph.owner(),
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        batches: report.batches.len(),
        rejected: report.rejected(),
    })
}

fn ask(cfg: &Config, graph: &Path, question: &str, images: &[PathBuf], json: bool, rc: RetrievalConfig) -> Result<()> {
    let graph = load_graph(graph)?;
    let model = cfg.model()?;
    let store = media_store(cfg);
    let mut media = Vec::new();
    for path in images {
        let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let id = path.file_name().and_then(|n| n.to_str()).unwrap_or("image").to_string();
        media.push(MediaPayload {
            mime: mime_for(&id).to_string(),
            media_id: id,
            data,
        });
    }
    let mut r = Retriever::new(&graph, model.as_ref()).with_config(rc);
    if let Some(s) = &store {
        r = r.with_media(s);
    }
    let answer = r.answer(&Query::new(question).with_media(media))?;
    if json {
        print_json(&answer)
    } else {
        println!("{}", answer.text);
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn eval(
    cfg: &Config,
    vaccount: &Path,
    qa: Option<&Path>,
    answerer: &str,
    graph_path: Option<&Path>,
    judge: JudgeKind,
    out: Option<&Path>,
    rc: RetrievalConfig,
) -> Result<()> {
    let (va, store, items) = match qa {
        Some(qa) => {
            let (va, store) = Vaccount::load(vaccount)?;
            let text = fs::read_to_string(qa).with_context(|| format!("reading {}", qa.display()))?;
            let items = parse_qa(&text, &va, &store)?;
            (va, store, items)
        }
        None => load_vaccount_qa(vaccount)?,
    };
    // The model is only needed by the lifegraph answerer or a live judge.
    let needs_model = answerer == "lifegraph" || judge == JudgeKind::Live;
    let model: Option<Box<dyn ChatModel>> = if needs_model { Some(cfg.model()?) } else { None };
    let offline_judge = match_judge();
    let judge: &dyn ChatModel = match (judge, &model) {
        (JudgeKind::Live, Some(m)) => m.as_ref(),
        _ => &offline_judge,
    };
    let graph = match (answerer, graph_path, &model) {
        ("lifegraph", Some(p), _) => Some(load_graph(p)?),
        ("lifegraph", None, Some(m)) => {
            info!("no graph given; building one from the vaccount");
            let builder = GraphBuilder::new(m.as_ref())
                .with_media(&store)
                .with_config(cfg.construction_config());
            Some(builder.build(&va)?.0)
        }
        _ => None,
    };
    let answerer: Box<dyn Answerer + '_> = match (answerer, &graph, &model) {
        ("lifegraph", Some(g), Some(m)) => Box::new(LifeGraphAnswerer {
            graph: g,
            model: m.as_ref(),
            media: Some(&store as &dyn MediaStore),
            config: rc,
        }),
        ("echo", ..) => Box::new(EchoAnswerer),
        (other, ..) => match other.strip_prefix("script:") {
            Some(path) => Box::new(ScriptAnswerer::from_path(path)?),
            None => anyhow::bail!("unknown answerer {other:?}; expected lifegraph, echo or script:<file>"),
        },
    };
    let config = EvalConfig {
        parallelism: cfg.model.parallelism.max(1),
    };
    let report = run_eval(&va.id, &items, answerer.as_ref(), judge, config);
    match out {
        Some(path) => {
            write_json(path, &report)?;
            print!("{}", report.to_table());
            Ok(())
        }
        None => print_json(&report),
    }
}

fn analyze(
    cfg: &Config,
    graph: &Path,
    degree_data: Option<&Path>,
    queries: Option<&Path>,
    limits: &[usize],
    rc: &RetrievalConfig,
) -> Result<()> {
    let graph = load_graph(graph)?;
    let mut report = structure_report(&graph);
    if let Some(path) = degree_data {
        fs::write(path, report.degree_histogram.to_gnuplot()).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = queries {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let queries: Vec<Query> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(Query::new)
            .collect();
        let model = cfg.model()?;
        let store = media_store(cfg);
        let media = store.as_ref().map(|s| s as &dyn MediaStore);
        report.effective_depth = effective_depth_stats(&graph, &queries, limits, rc, model.as_ref(), media);
    }
    print_json(&report)
}
