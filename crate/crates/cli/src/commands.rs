//! Command implementations. Each returns `Ok` on success and a [`CliError`]
//! carrying the process exit code otherwise.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use qpnet::experiments::{build_avoidance_qpn, build_bilevel_example, enumerate_configs, run_constellation_study};
use qpnet::experiments::avoidance::AvoidanceInstance;
use qpnet::solution_graph::local_node_graph;
use qpnet::{
    find_equilibrium, verify_equilibrium, Halfspace, LocalGraph, NetworkError, NetworkWarning, QpNetwork, RowKind,
    SearchOptions, Termination,
};

use crate::problem::{ProblemError, ProblemFile};
use crate::trace::write_jsonl;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Invalid(_) => 1,
            CliError::Solver(_) => 2,
            CliError::Io { .. } | CliError::Parse(_) | CliError::Usage(_) => 3,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn out_err(e: io::Error) -> CliError {
    CliError::Io { path: PathBuf::from("<stdout>"), source: e }
}

/// Problem file and its network; structural problems map to exit code 1.
pub fn load(path: &Path) -> Result<(ProblemFile, QpNetwork), CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file = ProblemFile::parse(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
    let net = file.to_network().map_err(|e| match e {
        ProblemError::Parse(p) => CliError::Parse(p.to_string()),
        other => CliError::Invalid(other.to_string()),
    })?;
    Ok((file, net))
}

fn describe_error(e: &NetworkError) -> String {
    match e {
        NetworkError::Cycle { witness } => {
            let w: Vec<String> = witness.iter().map(|v| (v + 1).to_string()).collect();
            format!("edges contain a cycle through nodes {}", w.join(", "))
        }
        NetworkError::BadEdge(i, j) => format!("edge [{}, {}] is invalid", i + 1, j + 1),
        NetworkError::Dimension { node, what } => format!("node {}: {what}", node + 1),
        NetworkError::NonConvex { node, min_eig } => {
            format!("node {}: cost is not convex on its controlled variables (min eigenvalue {min_eig:e})", node + 1)
        }
    }
}

fn describe_warning(w: &NetworkWarning, file: &ProblemFile) -> String {
    match w {
        NetworkWarning::RedundantEdge(i, j) => format!("edge [{}, {}] is implied by a longer path", i + 1, j + 1),
        NetworkWarning::SharedIndex { index, nodes } => format!(
            "{} is a decision of unrelated nodes {} and {}",
            file.name(*index),
            nodes.0 + 1,
            nodes.1 + 1
        ),
    }
}

/// Prints warnings and fails on validation errors.
fn check_network(net: &QpNetwork, file: &ProblemFile, err: &mut dyn Write) -> Result<(), CliError> {
    let rep = net.validate();
    for w in &rep.warnings {
        writeln!(err, "warning: {}", describe_warning(w, file)).map_err(out_err)?;
    }
    for e in &rep.errors {
        writeln!(err, "error: {}", describe_error(e)).map_err(out_err)?;
    }
    if let Some(e) = rep.errors.first() {
        return Err(CliError::Invalid(describe_error(e)));
    }
    Ok(())
}

pub fn cmd_validate(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let (file, net) = load(path)?;
    check_network(&net, &file, err)?;
    let depth = net.depth_mapping().map(|d| d.max_depth()).unwrap_or(0);
    writeln!(out, "ok: {} nodes, {} variables, depth {depth}", net.num_nodes(), net.n).map_err(out_err)?;
    Ok(())
}

pub fn parse_point(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("'{}' is not a number in point '{text}'", s.trim())))
        })
        .collect()
}

fn check_len(what: &str, v: &[f64], n: usize) -> Result<(), CliError> {
    if v.len() != n {
        return Err(CliError::Usage(format!("{what} has {} entries, expected {n}", v.len())));
    }
    Ok(())
}

/// Shortest round-trip text, in exponent form for very small or large magnitudes.
pub fn fmt_num(v: f64) -> String {
    let v = v + 0.0;
    let a = v.abs();
    if a != 0.0 && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        v.to_string()
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| fmt_num(*x)).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, Default)]
pub struct SolveArgs {
    pub init: Option<Vec<f64>>,
    pub tol: Option<f64>,
    pub max_restarts: Option<usize>,
    pub trace: Option<PathBuf>,
}

fn search_options(tol: Option<f64>, max_restarts: Option<usize>) -> SearchOptions {
    let mut o = SearchOptions::default();
    if let Some(t) = tol {
        o.tol = t;
    }
    if let Some(m) = max_restarts {
        o.max_restarts = m;
    }
    o
}

pub fn cmd_solve(path: &Path, args: &SolveArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let (file, net) = load(path)?;
    check_network(&net, &file, err)?;
    let x0 = args
        .init
        .clone()
        .or_else(|| file.init.clone())
        .unwrap_or_else(|| vec![0.0; net.n]);
    check_len("init", &x0, net.n)?;
    let opts = search_options(args.tol, args.max_restarts);
    let t = find_equilibrium(&net, &x0, &opts).map_err(|e| CliError::Invalid(e.to_string()))?;
    if let Some(p) = &args.trace {
        let f = fs::File::create(p).map_err(io_err(p))?;
        write_jsonl(&t, io::BufWriter::new(f)).map_err(io_err(p))?;
    }
    let term = format!("{:?}", t.termination);
    writeln!(out, "termination: {term}").map_err(out_err)?;
    writeln!(out, "restarts: {}", t.restarts).map_err(out_err)?;
    writeln!(out, "x_star: {}", join(&t.x)).map_err(out_err)?;
    if file.names.is_some() {
        for (j, v) in t.x.iter().enumerate() {
            writeln!(out, "  {} = {}", file.name(j), fmt_num(*v)).map_err(out_err)?;
        }
    }
    for (i, nd) in net.nodes.iter().enumerate() {
        writeln!(out, "node {} cost: {}", i + 1, fmt_num(nd.cost.value(&t.x))).map_err(out_err)?;
    }
    if t.termination != Termination::Equilibrium {
        let msg = t.message.unwrap_or_default();
        return Err(CliError::Solver(format!("search ended with {term} {msg}").trim_end().to_string()));
    }
    Ok(())
}

/// Human-readable row, scaled so its largest coefficient has magnitude one.
pub fn format_row(row: &Halfspace, file: &ProblemFile) -> String {
    let scale = row.normal.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
    let s = if scale > 0.0 { scale } else { 1.0 };
    let clean = |v: f64| {
        let r = (v * 1e12).round() / 1e12;
        r + 0.0
    };
    let mut out = String::new();
    for (j, a) in row.normal.iter().enumerate() {
        let c = clean(a / s);
        if c == 0.0 {
            continue;
        }
        let mag = c.abs();
        let term = if mag == 1.0 { file.name(j) } else { format!("{mag} {}", file.name(j)) };
        if out.is_empty() {
            out = if c < 0.0 { format!("-{term}") } else { term };
        } else {
            out.push_str(if c < 0.0 { " - " } else { " + " });
            out.push_str(&term);
        }
    }
    let b = clean(row.offset / s);
    if out.is_empty() {
        out = b.to_string();
    } else if b != 0.0 {
        out.push_str(&format!(" {} {}", if b < 0.0 { "-" } else { "+" }, b.abs()));
    }
    let rel = match row.kind {
        RowKind::NonStrict => ">=",
        RowKind::Strict => ">",
        RowKind::Equality => "=",
    };
    format!("{out} {rel} 0")
}

/// Local graphs of `node` and all its descendants at `x`, deepest first.
pub fn local_graphs(net: &QpNetwork, node: usize, x: &[f64], tol: f64) -> Result<Vec<Option<LocalGraph>>, CliError> {
    let k = net.num_nodes();
    let inv = |e: NetworkError| CliError::Invalid(describe_error(&e));
    let desc = net.descendant_sets().map_err(inv)?;
    let layers = net.depth_mapping().map_err(inv)?.layers;
    let mut wanted = desc[node].clone();
    wanted.push(node);
    let mut graphs: Vec<Option<LocalGraph>> = vec![None; k];
    for layer in layers.iter().rev() {
        for &i in layer.iter().filter(|i| wanted.contains(i)) {
            let children = net.children(i);
            let cg: Vec<&LocalGraph> = children.iter().map(|&c| graphs[c].as_ref().expect("child first")).collect();
            let controlled = net.controlled_indices(&desc, i);
            let g = local_node_graph(net, i, x, &controlled, &cg, tol).map_err(|e| {
                CliError::Invalid(format!("point is not in the solution graph of node {}: {e}", i + 1))
            })?;
            graphs[i] = Some(g);
        }
    }
    Ok(graphs)
}

pub fn cmd_graph(path: &Path, node: usize, point: &[f64], tol: Option<f64>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let (file, net) = load(path)?;
    check_network(&net, &file, err)?;
    if node == 0 || node > net.num_nodes() {
        return Err(CliError::Usage(format!("node {node} out of range 1..={}", net.num_nodes())));
    }
    check_len("point", point, net.n)?;
    let tol = tol.unwrap_or(SearchOptions::default().tol);
    let graphs = local_graphs(&net, node - 1, point, tol)?;
    let g = graphs[node - 1].as_ref().expect("built above");
    writeln!(out, "node {node}: {} piece(s)", g.pieces.pieces.len()).map_err(out_err)?;
    for (k, p) in g.pieces.pieces.iter().enumerate() {
        let p = p.canonical();
        writeln!(out, "piece {}:", k + 1).map_err(out_err)?;
        if p.rows.is_empty() {
            writeln!(out, "  (all of R^{})", net.n).map_err(out_err)?;
        }
        for r in &p.rows {
            writeln!(out, "  {}", format_row(r, &file)).map_err(out_err)?;
        }
    }
    Ok(())
}

pub fn cmd_check(path: &Path, point: &[f64], tol: Option<f64>, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let (file, net) = load(path)?;
    check_network(&net, &file, err)?;
    check_len("point", point, net.n)?;
    let tol = tol.unwrap_or(SearchOptions::default().tol);
    let rep = verify_equilibrium(&net, point, tol).map_err(|e| CliError::Invalid(e.to_string()))?;
    for (i, ok) in rep.node_ok.iter().enumerate() {
        let s = match ok {
            Some(true) => "optimal",
            Some(false) => "not optimal",
            None => "not checked",
        };
        writeln!(out, "node {}: {s}", i + 1).map_err(out_err)?;
    }
    if !rep.ok {
        return Err(CliError::Invalid("point is not an equilibrium".into()));
    }
    writeln!(out, "equilibrium").map_err(out_err)?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct StudyArgs {
    pub samples: usize,
    pub seed: u64,
    pub jobs: usize,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_restarts: Option<usize>,
}

pub fn cmd_constellation(args: &StudyArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if args.samples == 0 {
        return Err(CliError::Usage("--samples must be at least 1".into()));
    }
    let configs = enumerate_configs();
    let opts = search_options(args.tol, args.max_restarts);
    let res = run_constellation_study(args.samples, args.seed, &configs, args.jobs, &opts);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["config_id", "edges", "samples", "mean_reduction_pct", "se_pct", "ci95_pct"])
        .expect("in-memory CSV");
    for s in &res.stats {
        w.write_record([
            s.config_id.to_string(),
            s.edges.clone(),
            s.samples.to_string(),
            format!("{:.4}", s.mean_reduction_pct + 0.0),
            format!("{:.4}", s.se_pct),
            format!("{:.4}", s.ci95_pct),
        ])
        .expect("in-memory CSV");
    }
    let bytes = w.into_inner().expect("in-memory CSV");
    match &args.out {
        Some(p) => fs::write(p, &bytes).map_err(io_err(p))?,
        None => out.write_all(&bytes).map_err(out_err)?,
    }
    writeln!(err, "instances: {} used, {} dropped", res.used, res.dropped).map_err(out_err)?;
    for f in &res.failures {
        writeln!(err, "dropped instance {} (config {}): {}", f.instance, f.config_id, f.reason).map_err(out_err)?;
    }
    if res.used == 0 {
        return Err(CliError::Solver("every instance failed".into()));
    }
    Ok(())
}

pub const EXAMPLES: [&str; 2] = ["bilevel", "avoidance"];

/// Problem file for a named built-in example.
pub fn example_file(name: &str) -> Result<ProblemFile, CliError> {
    match name {
        "bilevel" => Ok(ProblemFile::from_network(&build_bilevel_example(), Some(vec![0.0, 0.0, -3.0, 4.0]))),
        "avoidance" => {
            let inst = AvoidanceInstance::planar_two_obstacles();
            let net = build_avoidance_qpn(&inst).map_err(|e| CliError::Invalid(e.to_string()))?;
            let mut f = ProblemFile::from_network(&net, Some(inst.initial_point()));
            let mut names = vec!["pe_x".to_string(), "pe_y".into(), "ue_x".into(), "ue_y".into()];
            for k in 1..=inst.obstacles.len() {
                for b in ["po", "uo", "q"] {
                    names.push(format!("{b}{k}_x"));
                    names.push(format!("{b}{k}_y"));
                }
                names.push(format!("eps{k}"));
            }
            f.names = Some(names);
            Ok(f)
        }
        other => Err(CliError::Usage(format!("unknown example '{other}', expected one of {}", EXAMPLES.join(", ")))),
    }
}

pub fn cmd_example(name: &str, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let text = example_file(name)?.to_json();
    match path {
        Some(p) => fs::write(p, text + "\n").map_err(io_err(p))?,
        None => writeln!(out, "{text}").map_err(out_err)?,
    }
    Ok(())
}
