mod verify;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gmrg_core::graph::{Graph, SpaceSpec, DEFAULT_CAP};
use gmrg_core::learn::{empirical_stats, moment_gap, sa_fit, SAConfig};
use gmrg_core::mcmc::{empirical, run_chain, tv_distance, KernelConfig};
use gmrg_core::model::{lambda_to_json, TemplateModel};
use gmrg_core::Error;
use log::info;
use serde::de::DeserializeOwned;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

const VERSION: &str = env!("CARGO_PKG_VERSION");
const PATH_KEYS: &[&str] = &["model", "spec", "templates", "data", "init", "neighborhood", "out"];

#[derive(Parser, Debug)]
#[command(name = "gmrg", version, about = "Random graph models: enumeration, sampling, learning and checks")]
struct Cli {
    /// Worker threads for inner parallelism.
    #[arg(long, global = true, env = "GMRG_THREADS")]
    threads: Option<usize>,
    /// JSON object of option defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// List the graph space, with exact probabilities when a model is given.
    Enumerate(EnumerateArgs),
    /// Run Metropolis-Hastings chains.
    Sample(SampleArgs),
    /// Fit template weights to data by stochastic approximation.
    Learn(LearnArgs),
    /// Run the built-in oracle battery.
    Verify(VerifyArgs),
    /// Score one graph under a model.
    Score(ScoreArgs),
}

#[derive(Args, Debug)]
struct ModelArgs {
    /// Model file: {"spec": ..., "templates": [...]}.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Space file, used with --templates or alone.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Template list file, combined with --spec.
    #[arg(long)]
    templates: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EnumerateArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    cap: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Initial graph file; the empty graph by default.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    /// Report total variation to the exact law in the summary.
    #[arg(long)]
    compare_exact: bool,
    #[arg(long)]
    cap: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Data file: a JSON array of graphs or one graph per line.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    step_a: Option<f64>,
    #[arg(long)]
    step_b: Option<f64>,
    #[arg(long)]
    cap: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    seed: Option<u64>,
    /// Suites whose spaces exceed this size are skipped.
    #[arg(long)]
    cap: Option<u64>,
    /// Neighborhood table to validate: {"vertices": n, "table": [[0|1, ...], ...]}.
    #[arg(long)]
    neighborhood: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ScoreArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    cap: Option<u64>,
}

/// Failure with its process exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Failure { code: 2, msg: msg.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Domain(_) | Error::Parse(_) | Error::Precondition(_) => 2,
            Error::Resource { .. } => 3,
            Error::Positivity(_) | Error::Degenerate(_) => 4,
            Error::Divergence { .. } => 5,
        };
        Failure { code, msg: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input(format!("i/o: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// Resolves options as flag > config file > default and records each value for hashing.
struct Resolver {
    file: Map<String, Value>,
    resolved: Map<String, Value>,
}

impl Resolver {
    fn new(path: Option<&Path>) -> CliResult<Self> {
        let file = match path {
            None => Map::new(),
            Some(p) => match read_json(p)? {
                Value::Object(m) => m,
                _ => return Err(Failure::input(format!("{}: config must be a JSON object", p.display()))),
            },
        };
        Ok(Resolver {
            file,
            resolved: Map::new(),
        })
    }

    fn get<T: DeserializeOwned + serde::Serialize + std::fmt::Debug>(
        &mut self,
        key: &str,
        flag: Option<T>,
        default: impl FnOnce() -> T,
    ) -> CliResult<T> {
        let (v, source) = match flag {
            Some(v) => (v, "flag"),
            None => match self.file.get(key) {
                Some(x) => (
                    serde_json::from_value(x.clone())
                        .map_err(|e| Failure::input(format!("config key '{key}': {e}")))?,
                    "config",
                ),
                None => (default(), "default"),
            },
        };
        info!("{key} = {v:?} ({source})");
        self.resolved
            .insert(key.to_string(), serde_json::to_value(&v).unwrap_or(Value::Null));
        Ok(v)
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>) -> CliResult<Option<PathBuf>> {
        let p: Option<PathBuf> = self.get(key, flag.map(Some), || None)?;
        Ok(p)
    }

    /// SHA-256 over the resolved non-path options and the bytes of every input file.
    fn hash(&self, inputs: &[&Path]) -> CliResult<String> {
        let mut h = Sha256::new();
        h.update(VERSION.as_bytes());
        let opts: Map<String, Value> = self
            .resolved
            .iter()
            .filter(|(k, _)| !PATH_KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        h.update(serde_json::to_vec(&opts).expect("resolved config"));
        for p in inputs {
            h.update(fs::read(p)?);
        }
        let digest = h.finalize();
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn read_json(p: &Path) -> CliResult<Value> {
    let s = fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
    serde_json::from_str(&s).map_err(|e| Failure::input(format!("{}: {e}", p.display())))
}

struct Loaded {
    spec: SpaceSpec,
    model: Option<TemplateModel>,
    files: Vec<PathBuf>,
}

fn ctx(p: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure {
        msg: format!("{}: {e}", p.display()),
        ..Failure::from(e)
    }
}

fn load(r: &mut Resolver, a: &ModelArgs) -> CliResult<Loaded> {
    let model_path = r.path("model", a.model.clone())?;
    let spec_path = r.path("spec", a.spec.clone())?;
    let tpl_path = r.path("templates", a.templates.clone())?;
    match (model_path, spec_path, tpl_path) {
        (Some(m), None, None) => {
            let model = TemplateModel::from_json(&read_json(&m)?).map_err(ctx(&m))?;
            Ok(Loaded {
                spec: model.spec().clone(),
                model: Some(model),
                files: vec![m],
            })
        }
        (None, Some(s), t) => {
            let spec = SpaceSpec::from_json(&read_json(&s)?).map_err(ctx(&s))?;
            let mut files = vec![s];
            let model = match t {
                Some(t) => {
                    let m = TemplateModel::from_templates_json(spec.clone(), &read_json(&t)?).map_err(ctx(&t))?;
                    files.push(t);
                    Some(m)
                }
                None => None,
            };
            Ok(Loaded { spec, model, files })
        }
        _ => Err(Failure::input("give either --model, or --spec with optional --templates")),
    }
}

fn need_model(l: Loaded) -> CliResult<(TemplateModel, Vec<PathBuf>)> {
    match l.model {
        Some(m) => Ok((m, l.files)),
        None => Err(Failure::input("this command needs a model (--model, or --spec with --templates)")),
    }
}

fn resolve_seed(r: &mut Resolver, flag: Option<u64>) -> CliResult<u64> {
    r.get("seed", flag, rand::random::<u64>)
}

fn open_out(dir: &Path, name: &str) -> CliResult<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json(dir: &Path, name: &str, v: &Value) -> CliResult<()> {
    let mut w = open_out(dir, name)?;
    serde_json::to_writer_pretty(&mut w, v).expect("json");
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn ext(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|&x| lambda_to_json(x)).collect())
}

fn header(r: &Resolver, inputs: &[PathBuf], seed: Option<u64>) -> CliResult<Value> {
    let refs: Vec<&Path> = inputs.iter().map(|p| p.as_path()).collect();
    let hash = r.hash(&refs)?;
    info!("gmrg {VERSION}; config sha256 {hash}");
    if let Some(s) = seed {
        info!("seed {s}");
    }
    Ok(json!({"version": VERSION, "config_sha256": hash, "seed": seed}))
}

fn cmd_enumerate(r: &mut Resolver, a: &EnumerateArgs) -> CliResult<()> {
    let loaded = load(r, &a.model)?;
    let cap = r.get("cap", a.cap, || DEFAULT_CAP)?;
    let out = r.get("out", a.out.clone(), || PathBuf::from("."))?;
    let head = header(r, &loaded.files, None)?;
    let mut w = open_out(&out, "support.jsonl")?;
    let count = match &loaded.model {
        None => {
            let space = loaded.spec.enumerate(cap)?;
            for g in &space {
                serde_json::to_writer(&mut w, &json!({"graph": loaded.spec.graph_to_value(g)})).expect("json");
                writeln!(w)?;
            }
            space.len()
        }
        Some(m) => {
            let norm = m.normalize(cap)?;
            for (g, p) in norm.dist.iter() {
                let rec = json!({
                    "graph": loaded.spec.graph_to_value(g),
                    "log_score": lambda_to_json(m.log_score(g)),
                    "prob": p,
                });
                serde_json::to_writer(&mut w, &rec).expect("json");
                writeln!(w)?;
            }
            info!("log Z = {}", norm.log_z);
            norm.dist.len()
        }
    };
    w.flush()?;
    info!("{count} graphs written to {}", out.join("support.jsonl").display());
    let mut summary = head;
    summary["records"] = json!(count);
    if let Some(m) = &loaded.model {
        summary["log_z"] = lambda_to_json(m.normalize(cap)?.log_z);
    }
    write_json(&out, "enumerate.json", &summary)
}

fn read_graph(spec: &SpaceSpec, p: &Path) -> CliResult<Graph> {
    spec.graph_from_json(&read_json(p)?).map_err(ctx(p))
}

fn cmd_sample(r: &mut Resolver, a: &SampleArgs) -> CliResult<()> {
    let (model, mut files) = need_model(load(r, &a.model)?)?;
    let init_path = r.path("init", a.init.clone())?;
    let seed = resolve_seed(r, a.seed)?;
    let d = KernelConfig::default();
    let cfg = KernelConfig {
        seed,
        steps: r.get("steps", a.steps, || d.steps)?,
        burn_in: r.get("burnin", a.burnin, || d.burn_in)?,
        thin: r.get("thin", a.thin, || d.thin)?,
        weights: d.weights,
    };
    let chains = r.get("chains", a.chains, || 1usize)?;
    let compare = r.get("compare_exact", a.compare_exact.then_some(true), || false)?;
    let cap = r.get("cap", a.cap, || DEFAULT_CAP)?;
    let out = r.get("out", a.out.clone(), || PathBuf::from("."))?;
    let init = match &init_path {
        Some(p) => {
            files.push(p.clone());
            read_graph(model.spec(), p)?
        }
        None => Graph::empty(),
    };
    let head = header(r, &files, Some(seed))?;
    if chains == 0 {
        return Err(Failure::input("--chains must be at least 1"));
    }
    if model.log_score(&init) == f64::NEG_INFINITY {
        return Err(Failure {
            code: 4,
            msg: "initial state has probability zero under the model".into(),
        });
    }
    let mut summaries = Vec::with_capacity(chains);
    let mut pooled = Vec::new();
    for c in 0..chains {
        let name = if chains == 1 { "chain.jsonl".to_string() } else { format!("chain-{c}.jsonl") };
        let mut w = open_out(&out, &name)?;
        let s = run_chain(&model, &cfg, &init, c as u64, |g| {
            serde_json::to_writer(&mut w, &model.spec().graph_to_value(g)).expect("json");
            writeln!(w).map_err(|e| Error::Domain(format!("write failed: {e}")))?;
            if compare {
                pooled.push(g.clone());
            }
            Ok(())
        })?;
        w.flush()?;
        info!("chain {c}: acceptance rate {:.4}", s.acceptance_rate);
        summaries.push(s);
    }
    let mut summary = head;
    summary["chains"] = serde_json::to_value(&summaries).expect("json");
    if compare {
        let exact = model.normalize(cap)?.dist;
        let tv = tv_distance(&empirical(&pooled)?, &exact);
        info!("total variation to the exact law: {tv:.6}");
        summary["tv_to_exact"] = json!(tv);
    }
    write_json(&out, "summary.json", &summary)
}

fn read_data(spec: &SpaceSpec, p: &Path) -> CliResult<Vec<Graph>> {
    let s = fs::read_to_string(p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
    let values: Vec<Value> = if s.trim_start().starts_with('[') {
        serde_json::from_str(&s).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?
    } else {
        s.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Failure::input(format!("{}:{}: {e}", p.display(), i + 1)))
            })
            .collect::<CliResult<_>>()?
    };
    if values.is_empty() {
        return Err(Failure::input(format!("{}: no data graphs", p.display())));
    }
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            spec.graph_from_json(v)
                .map_err(|e| Failure { msg: format!("{} record {}: {e}", p.display(), i + 1), ..Failure::from(e) })
        })
        .collect()
}

fn cmd_learn(r: &mut Resolver, a: &LearnArgs) -> CliResult<()> {
    let (model, mut files) = need_model(load(r, &a.model)?)?;
    let data_path = r
        .path("data", a.data.clone())?
        .ok_or_else(|| Failure::input("--data is required"))?;
    let seed = resolve_seed(r, a.seed)?;
    let d = SAConfig::default();
    let cfg = SAConfig {
        iterations: r.get("iters", a.iters, || d.iterations)?,
        chains: r.get("chains", a.chains, || d.chains)?,
        a: r.get("step_a", a.step_a, || d.a)?,
        b: r.get("step_b", a.step_b, || d.b)?,
        clip: r.get("clip", None, || d.clip)?,
        bound: r.get("bound", None, || d.bound)?,
        seed,
        ..d
    };
    let cap = r.get("cap", a.cap, || DEFAULT_CAP)?;
    let out = r.get("out", a.out.clone(), || PathBuf::from("."))?;
    let data = read_data(model.spec(), &data_path)?;
    files.push(data_path);
    let head = header(r, &files, Some(seed))?;
    let fit = sa_fit(&data, &model, &cfg)?;
    let mut w = open_out(&out, "trace.jsonl")?;
    for row in &fit.trace {
        let rec = json!({"iteration": row.iteration, "lambda": ext(&row.lambda), "mean_stats": row.mean_stats});
        serde_json::to_writer(&mut w, &rec).expect("json");
        writeln!(w)?;
    }
    w.flush()?;
    let mut report = head;
    report["lambda"] = ext(&fit.lambda);
    report["iterations"] = json!(fit.iterations);
    report["acceptance_rates"] = json!(fit.acceptance_rates);
    report["empirical_stats"] = json!(empirical_stats(&data, &model)?);
    let fitted = model.with_lambdas(fit.lambda.clone())?;
    if model.spec().size_bound() <= cap as f64 {
        let gap = moment_gap(&fitted, &empirical_stats(&data, &model)?)?;
        report["moment_gap"] = json!(gap);
    }
    info!("fitted lambda {:?}", fit.lambda);
    write_json(&out, "fit.json", &report)
}

fn cmd_score(r: &mut Resolver, a: &ScoreArgs) -> CliResult<()> {
    let (model, mut files) = need_model(load(r, &a.model)?)?;
    let cap = r.get("cap", a.cap, || DEFAULT_CAP)?;
    let g = read_graph(model.spec(), &a.graph)?;
    files.push(a.graph.clone());
    let mut rep = header(r, &files, None)?;
    let stats = model.stats(&g);
    rep["stats"] = json!(stats);
    rep["expansion"] = json!(TemplateModel::expansion(&stats));
    rep["log_score"] = lambda_to_json(model.log_score(&g));
    if model.spec().size_bound() <= cap as f64 {
        let norm = model.normalize(cap)?;
        rep["log_z"] = lambda_to_json(norm.log_z);
        rep["prob"] = json!(norm.dist.prob(&g));
    }
    println!("{}", serde_json::to_string_pretty(&rep).expect("json"));
    Ok(())
}

fn cmd_verify(r: &mut Resolver, a: &VerifyArgs) -> CliResult<()> {
    let seed = r.get("seed", a.seed, || 0)?;
    let cap = r.get("cap", a.cap, || DEFAULT_CAP)?;
    let nb = r.path("neighborhood", a.neighborhood.clone())?;
    let out = r.get("out", a.out.clone(), || PathBuf::from("."))?;
    let files: Vec<PathBuf> = nb.iter().cloned().collect();
    let mut rep = header(r, &files, Some(seed))?;
    let nb_value = nb.as_deref().map(read_json).transpose()?;
    let suites = verify::battery(seed, cap, nb_value.as_ref())?;
    let failed = suites.iter().filter(|s| s.status == verify::Status::Fail).count();
    for s in &suites {
        info!("{:<22} {:?}: {}", s.name, s.status, s.detail);
    }
    rep["suites"] = serde_json::to_value(&suites).expect("json");
    rep["failed"] = json!(failed);
    write_json(&out, "verify.json", &rep)?;
    if failed > 0 {
        return Err(Failure {
            code: 1,
            msg: format!("{failed} verification suite(s) failed"),
        });
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::input(format!("thread pool: {e}")))?;
    }
    let mut r = Resolver::new(cli.config.as_deref())?;
    match &cli.cmd {
        Cmd::Enumerate(a) => cmd_enumerate(&mut r, a),
        Cmd::Sample(a) => cmd_sample(&mut r, a),
        Cmd::Learn(a) => cmd_learn(&mut r, a),
        Cmd::Verify(a) => cmd_verify(&mut r, a),
        Cmd::Score(a) => cmd_score(&mut r, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
