//! The `ldiag` command line.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path as FsPath, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::autodiff::Optimizer;
use crate::compiler::{compile, run_trials, train, Batching, CompileWarning, CompiledLoss, HistoryRow, TrainConfig};
use crate::compose::{apply_on_image, find_monomorphisms, pushout, EdgeAction, PartialAssignment, VertexAction};
use crate::demos::Demo;
use crate::graph::LearningGraph;
use crate::io::{parse_graph, read_diagram, read_span, write_diagram, LegDoc};
use crate::paths::{all_paths_up_to, parallel_pairs};
use crate::semantics::{LearningDiagram, ModelSpec};

#[derive(Parser, Debug)]
#[command(name = "ldiag", about = "Compile and train learning diagrams", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a graph (.ldg) or diagram (.ldd.json).
    Validate { file: PathBuf },
    /// List paths and admissible parallel pairs.
    Paths {
        file: PathBuf,
        #[arg(long)]
        max_len: Option<usize>,
    },
    /// Print the loss terms and trainable keys of a diagram.
    Compile { file: PathBuf },
    /// Train a diagram and write its history and trained parameters.
    Train {
        file: PathBuf,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        lr: f64,
        #[arg(long, value_enum)]
        opt: Opt,
        #[arg(long)]
        seed: u64,
        /// Mini-batch size for every dataset; full batch when absent.
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long, requires = "batch")]
        scale_to_full: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Glue the two feet of a span document.
    Compose {
        span: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Match a pattern graph into a diagram and edit every match.
    Hom {
        pattern: PathBuf,
        host: PathBuf,
        #[arg(long)]
        assign: Option<String>,
        #[arg(long, default_value = "keep")]
        action: String,
        /// Seed for parameters of swapped-in models.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Randomized contractivity trials on finite Lawvere spaces.
    Check {
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        seed: u64,
    },
    /// Build, train and save one of the built-in scenarios.
    Demo {
        #[arg(value_enum)]
        name: DemoName,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Opt {
    Sgd,
    Adam,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DemoName {
    Regression,
    Distill,
    Fewshot,
    Captionshape,
}

impl From<DemoName> for Demo {
    fn from(d: DemoName) -> Demo {
        match d {
            DemoName::Regression => Demo::Regression,
            DemoName::Distill => Demo::Distill,
            DemoName::Fewshot => Demo::Fewshot,
            DemoName::Captionshape => Demo::Captionshape,
        }
    }
}

/// Result of a command: text for stdout, or a failure message.
type Outcome = Result<String, String>;

/// Runs the command line and returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match execute(cli.command) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("LD_THREADS").ok().and_then(|s| s.parse::<usize>().ok()) {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn execute(cmd: Command) -> Outcome {
    match cmd {
        Command::Validate { file } => validate(&file),
        Command::Paths { file, max_len } => paths(&file, max_len),
        Command::Compile { file } => {
            let d = load(&file)?;
            let c = compile(&d).map_err(|e| e.to_string())?;
            Ok(term_table(&d, &c))
        }
        Command::Train {
            file,
            steps,
            lr,
            opt,
            seed,
            batch,
            scale_to_full,
            out,
        } => {
            let mut d = load(&file)?;
            if let Some(b) = batch {
                if b == 0 {
                    return Err("--batch must be positive".into());
                }
                for v in d.graph().vertex_ids().collect::<Vec<_>>() {
                    let mut space = d.space(v).clone();
                    if let Some(ds) = space.dataset.as_mut() {
                        ds.batch_size = b;
                        d.set_space(v, space).map_err(|e| e.to_string())?;
                    }
                }
            }
            let optimizer = match opt {
                Opt::Sgd => Optimizer::sgd(lr),
                Opt::Adam => Optimizer::adam(lr),
            };
            let batching = match batch {
                Some(_) => Batching::Mini { scale_to_full },
                None => Batching::Full,
            };
            let cfg = TrainConfig {
                optimizer,
                steps,
                batching,
                seed,
            };
            train_and_save(d, &cfg, &out)
        }
        Command::Compose { span, out } => {
            let span = read_span(&span).map_err(|e| e.to_string())?;
            let po = pushout(&span).map_err(|e| e.to_string())?;
            write_diagram(&out, &po.diagram).map_err(|e| e.to_string())?;
            let maps = serde_json::json!({
                "left": LegDoc::from_hom(&po.left_inclusion),
                "right": LegDoc::from_hom(&po.right_inclusion),
            });
            let inc = inclusions_path(&out);
            write_text(&inc, &(serde_json::to_string_pretty(&maps).map_err(|e| e.to_string())? + "\n"))?;
            let g = po.diagram.graph();
            Ok(format!(
                "{} vertices, {} edges, {} parameter keys\nwrote {}\nwrote {}\n",
                g.vertex_count(),
                g.edge_count(),
                po.diagram.params.keys().count(),
                out.display(),
                inc.display()
            ))
        }
        Command::Hom {
            pattern,
            host,
            assign,
            action,
            seed,
            out,
        } => hom(&pattern, &host, assign.as_deref(), &action, seed, &out),
        Command::Check { trials, seed } => {
            let s = run_trials(trials, seed).map_err(|e| e.to_string())?;
            let text = format!(
                "{} quotient trials, {} violations\n{} identity trials, max gap {:e}\n",
                s.trials, s.violations, s.identity_trials, s.identity_gap
            );
            if s.violations > 0 {
                Err(text)
            } else {
                Ok(text)
            }
        }
        Command::Demo { name, seed, out } => {
            let demo = Demo::from(name);
            let d = demo.build(seed).map_err(|e| e.to_string())?;
            std::fs::create_dir_all(&out).map_err(|e| format!("{}: {e}", out.display()))?;
            write_diagram(&out.join("initial.ldd.json"), &d).map_err(|e| e.to_string())?;
            let mut text = format!("demo {}\n", demo.name());
            text += &train_and_save(d, &demo.train_config(seed), &out)?;
            Ok(text)
        }
    }
}

fn is_graph_file(p: &FsPath) -> bool {
    p.extension().is_some_and(|e| e == "ldg")
}

fn read_text(p: &FsPath) -> Result<String, String> {
    std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))
}

fn write_text(p: &FsPath, text: &str) -> Result<(), String> {
    std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()))
}

fn load(p: &FsPath) -> Result<LearningDiagram, String> {
    if is_graph_file(p) {
        return Err(format!("{}: a bare graph has no semantics; expected a .ldd.json diagram", p.display()));
    }
    read_diagram(p).map_err(|e| e.to_string())
}

fn load_graph(p: &FsPath) -> Result<LearningGraph, String> {
    if is_graph_file(p) {
        parse_graph(&read_text(p)?).map_err(|e| format!("{}:{e}", p.display()))
    } else {
        Ok(load(p)?.graph().clone())
    }
}

fn validate(p: &FsPath) -> Outcome {
    if is_graph_file(p) {
        let g = load_graph(p)?;
        return Ok(format!("ok: graph with {} vertices, {} edges\n", g.vertex_count(), g.edge_count()));
    }
    let d = load(p)?;
    let g = d.graph();
    Ok(format!(
        "ok: diagram with {} vertices, {} edges, {} parameters\n",
        g.vertex_count(),
        g.edge_count(),
        d.params.num_scalars()
    ))
}

fn paths(p: &FsPath, max_len: Option<usize>) -> Outcome {
    let (g, finite): (LearningGraph, Option<LearningDiagram>) = if is_graph_file(p) {
        (load_graph(p)?, None)
    } else {
        let d = load(p)?;
        (d.graph().clone(), Some(d))
    };
    let mut out = String::new();
    let m = all_paths_up_to(&g, max_len);
    let mut count = 0;
    for path in m.iter_paths().filter(|p| !p.is_empty()) {
        count += 1;
        let _ = writeln!(
            out,
            "path {} -> {} : {}",
            g.vertex_label(path.src),
            g.vertex_label(path.tgt),
            g.path_label(&path)
        );
    }
    let set = parallel_pairs(&g, |v| finite.as_ref().is_none_or(|d| d.metric_finite(v)));
    for pair in &set.pairs {
        let _ = writeln!(out, "pair {}", pair.describe(&g));
    }
    for w in &set.warnings {
        let _ = writeln!(out, "warning: {}", w.describe(&g));
    }
    let _ = writeln!(out, "{count} paths, {} admissible pairs", set.pairs.len());
    Ok(out)
}

fn term_table(d: &LearningDiagram, c: &CompiledLoss) -> String {
    let g = d.graph();
    let mut out = String::new();
    for (i, t) in c.terms.iter().enumerate() {
        let _ = writeln!(
            out,
            "term_{i}  {}  metric={} dataset={} weight={}",
            t.pair.describe(g),
            t.metric.name(),
            t.dataset,
            t.weight
        );
    }
    for w in &c.warnings {
        match w {
            CompileWarning::Incomparable(p) => {
                let _ = writeln!(out, "warning: {}", p.describe(g));
            }
            CompileWarning::NoLossTerms => {
                let _ = writeln!(out, "warning: no loss terms; the loss is constant 0");
            }
        }
    }
    let keys: Vec<&str> = c.param_keys.iter().map(String::as_str).collect();
    let _ = writeln!(out, "{} loss terms", c.terms.len());
    let _ = writeln!(out, "trainable: {}", if keys.is_empty() { "-".into() } else { keys.join(", ") });
    out
}

/// History as CSV: `step,total,term_0,...`.
pub fn history_csv(history: &[HistoryRow], terms: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["step".to_string(), "total".to_string()];
    header.extend((0..terms).map(|i| format!("term_{i}")));
    w.write_record(&header).expect("in-memory write");
    for row in history {
        let mut rec = vec![row.step.to_string(), row.total.to_string()];
        rec.extend(row.per_term.iter().map(f64::to_string));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv")
}

fn train_and_save(mut d: LearningDiagram, cfg: &TrainConfig, out: &FsPath) -> Outcome {
    let c = compile(&d).map_err(|e| e.to_string())?;
    let mut text = term_table(&d, &c);
    let history = train(&c, &mut d, cfg).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(out).map_err(|e| format!("{}: {e}", out.display()))?;
    write_text(&out.join("history.csv"), &history_csv(&history, c.terms.len()))?;
    write_diagram(&out.join("trained.ldd.json"), &d).map_err(|e| e.to_string())?;
    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        let _ = writeln!(text, "step 0 total {}", first.total);
        let _ = writeln!(text, "step {} total {}", last.step, last.total);
    }
    let _ = writeln!(text, "wrote {}", out.join("history.csv").display());
    let _ = writeln!(text, "wrote {}", out.join("trained.ldd.json").display());
    Ok(text)
}

fn inclusions_path(out: &FsPath) -> PathBuf {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name
        .strip_suffix(".ldd.json")
        .or_else(|| name.strip_suffix(".json"))
        .unwrap_or(&name);
    out.with_file_name(format!("{stem}.inclusions.json"))
}

fn parse_action(s: &str, seed: u64) -> Result<EdgeAction, String> {
    match s {
        "keep" => Ok(EdgeAction::Keep),
        "freeze" => Ok(EdgeAction::Freeze),
        "unfreeze" => Ok(EdgeAction::Unfreeze),
        _ => match s.strip_prefix("swap:") {
            Some(spec) => ModelSpec::parse(spec)
                .map(|spec| EdgeAction::SwapModel { spec, seed })
                .ok_or_else(|| format!("bad model spec `{spec}`")),
            None => Err(format!("unknown action `{s}`; expected freeze, unfreeze, keep or swap:SPEC")),
        },
    }
}

fn hom(pattern: &FsPath, host: &FsPath, assign: Option<&str>, action: &str, seed: u64, out: &FsPath) -> Outcome {
    let action = parse_action(action, seed)?;
    let pattern = load_graph(pattern)?;
    let mut d = load(host)?;
    let partial = PartialAssignment::parse(assign.unwrap_or(""), &pattern, d.graph())?;
    let matches = find_monomorphisms(&pattern, d.graph(), &partial);
    if matches.is_empty() {
        return Err("no match of the pattern in the host".into());
    }
    let mut text = String::new();
    for m in &matches {
        let (vm, em) = m.to_labels();
        let _ = writeln!(text, "match {}", describe_map(&vm, &em));
    }
    // Matches are found once; edits keep vertex and edge ids, so each hom
    // is re-targeted at the current graph.
    for m in &matches {
        let mut h = m.clone();
        h.target = d.graph().clone();
        d = apply_on_image(&h, &d, &action, &VertexAction::Keep).map_err(|e| e.to_string())?;
    }
    write_diagram(out, &d).map_err(|e| e.to_string())?;
    let _ = writeln!(text, "{} matches edited\nwrote {}", matches.len(), out.display());
    Ok(text)
}

fn describe_map(v: &BTreeMap<String, String>, e: &BTreeMap<String, String>) -> String {
    v.iter()
        .chain(e.iter())
        .map(|(a, b)| format!("{a}={b}"))
        .collect::<Vec<_>>()
        .join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_layout() {
        let rows = [
            HistoryRow { step: 0, total: 1.5, per_term: vec![1.0, 0.5] },
            HistoryRow { step: 1, total: 0.25, per_term: vec![0.125, 0.125] },
        ];
        assert_eq!(history_csv(&rows, 2), "step,total,term_0,term_1\n0,1.5,1,0.5\n1,0.25,0.125,0.125\n");
    }

    #[test]
    fn inclusion_file_name() {
        assert_eq!(inclusions_path(FsPath::new("a/glued.ldd.json")), PathBuf::from("a/glued.inclusions.json"));
        assert_eq!(inclusions_path(FsPath::new("x.json")), PathBuf::from("x.inclusions.json"));
    }

    #[test]
    fn actions_parse() {
        assert_eq!(parse_action("freeze", 0), Ok(EdgeAction::Freeze));
        assert!(matches!(parse_action("swap:affine(2,3)", 1), Ok(EdgeAction::SwapModel { seed: 1, .. })));
        assert!(parse_action("swap:lstm", 0).is_err());
    }
}
