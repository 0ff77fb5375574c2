use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use pacs_core::sim::{
    run_experiment, summarize, ExperimentOptions, Method, Scenario, ScenarioConfig, DEFAULT_SEED,
    PRESET_NAMES,
};
use pacs_core::{
    ipw_ate, load_csv, pacs_fit, refit_propensity, AteEstimate, Dataset, PacsConfig, PacsResult,
    SelectionRule,
};

use crate::config::{parse_list, render, ConfigFile};
use crate::report::{
    chart_for, discover, runtime_tables, summary_csv, ATE_FILE, CHART_FILE, CONFIG_FILE,
    FREQUENCY_FILE, RUNTIME_FILE, SUMMARY_FILE,
};
use crate::svg::frequency_chart;
use crate::CliError;

/// Environment variable consulted when neither a flag nor a config file
/// sets the seed.
pub const SEED_ENV: &str = "PACS_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    And,
    Or,
}

impl From<RuleArg> for SelectionRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::And => SelectionRule::And,
            RuleArg::Or => SelectionRule::Or,
        }
    }
}

/// Tuning flags shared by every command that fits PACS.
#[derive(Debug, Clone, Default, Args)]
pub struct TuningArgs {
    /// Adaptive-weight exponents, comma separated [default: 0.5,1,2]
    #[arg(long, value_name = "LIST")]
    pub gamma_grid: Option<String>,
    /// Number of log-spaced penalty values [default: 50]
    #[arg(long, value_name = "N")]
    pub lambda_grid_size: Option<usize>,
    /// Cross-validation folds [default: 5]
    #[arg(long, value_name = "K")]
    pub folds: Option<usize>,
    /// Master seed; falls back to PACS_SEED, then a fixed constant
    #[arg(long)]
    pub seed: Option<u64>,
    /// Flat key=value file mirroring the long flags
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SelectArgs {
    /// Input CSV with columns y, d and the covariates
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Keep covariates nonzero in both arms (and) or in either (or) [default: and]
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    /// Output directory [default: pacs_out]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct AteArgs {
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub rule: Option<RuleArg>,
    /// Fixed covariate names for the propensity model instead of running the selection
    #[arg(long, value_name = "LIST")]
    pub covariates: Option<String>,
    /// Also write ate.csv into this directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    /// Built-in cell name, comma-separated list, or `all`
    #[arg(long)]
    pub preset: Option<String>,
    /// Replications per cell [default: 200]
    #[arg(long)]
    pub m: Option<usize>,
    /// Worker threads for replications [default: 1]
    #[arg(long)]
    pub workers: Option<usize>,
    /// Methods to compare [default: pacs_and,pacs_or,oal,all_covariates,oracle_target]
    #[arg(long, value_name = "LIST")]
    pub methods: Option<String>,
    /// Reports directory; each cell writes into its own subdirectory [default: reports]
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ReportArgs {
    /// Reports directory written by `simulate`
    #[arg(value_name = "DIR")]
    pub dir: Option<PathBuf>,
    /// Same as DIR
    #[arg(long, value_name = "DIR", conflicts_with = "dir")]
    pub out: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    match path {
        Some(p) => ConfigFile::load(p),
        None => Ok(ConfigFile::default()),
    }
}

/// Seed precedence: flag, config file, `PACS_SEED`, [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, cfg: &ConfigFile) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Some(s) = cfg.get("seed")? {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("{SEED_ENV}={v:?}: {e}"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn flag_list<T: std::str::FromStr>(flag: &str, value: &str) -> Result<Vec<T>, CliError>
where
    T::Err: std::fmt::Display,
{
    parse_list(value).map_err(|e| CliError::Usage(format!("--{flag}: {e}")))
}

/// PACS settings from flags over the config file over the defaults.
pub fn pacs_config(
    t: &TuningArgs,
    cfg: &ConfigFile,
    rule: Option<RuleArg>,
    seed: u64,
) -> Result<PacsConfig, CliError> {
    let mut pc = PacsConfig::default();
    if let Some(g) = match &t.gamma_grid {
        Some(s) => Some(flag_list("gamma-grid", s)?),
        None => cfg.get_list("gamma-grid")?,
    } {
        pc.gamma_grid = g;
    }
    if let Some(v) = t.lambda_grid_size.map(Ok).or_else(|| cfg.get("lambda-grid-size").transpose()) {
        pc.lambda_grid_size = v?;
    }
    if let Some(v) = t.folds.map(Ok).or_else(|| cfg.get("folds").transpose()) {
        pc.cv_folds = v?;
    }
    if let Some(r) = rule {
        pc.rule = r.into();
    } else if let Some(r) = cfg.get::<SelectionRule>("rule")? {
        pc.rule = r;
    }
    if let Some(e) = cfg.get("clip-epsilon")? {
        pc.clip_epsilon = e;
    }
    if let Some(b) = cfg.get("intercept")? {
        pc.intercept_in_propensity = b;
    }
    pc.cv_seed = seed;
    pc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(pc)
}

fn data_path(flag: &Option<PathBuf>, cfg: &ConfigFile) -> Result<PathBuf, CliError> {
    flag.clone()
        .or_else(|| cfg.raw("data").map(PathBuf::from))
        .ok_or_else(|| CliError::Usage("--data is required".into()))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Per-covariate table: `name,beta_tilde_t,beta_hat_t,beta_tilde_c,beta_hat_c,selected`.
pub fn pacs_result_csv(ds: &Dataset, res: &PacsResult) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["name", "beta_tilde_t", "beta_hat_t", "beta_tilde_c", "beta_hat_c", "selected"])
        .expect("in-memory write");
    for (j, name) in ds.names().iter().enumerate() {
        let selected = if res.selected.contains(&j) { "1" } else { "0" };
        w.write_record([
            name.clone(),
            res.treatment.wls.beta_tilde[j].to_string(),
            res.treatment.fit.beta_hat[j].to_string(),
            res.control.wls.beta_tilde[j].to_string(),
            res.control.fit.beta_hat[j].to_string(),
            selected.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

fn ate_json(a: &AteEstimate) -> serde_json::Value {
    serde_json::json!({
        "value": a.value,
        "treated_mean": a.treated_mean,
        "control_mean": a.control_mean,
        "n_treated": a.n_treated,
        "n_control": a.n_control,
    })
}

pub fn selection_json(ds: &Dataset, res: &PacsResult, seed: u64) -> String {
    let names = |idx: &[usize]| -> Vec<String> { idx.iter().map(|&j| ds.names()[j].clone()).collect() };
    let arm = |a: &pacs_core::ArmFit| {
        serde_json::json!({
            "gamma": a.cv.gamma_star,
            "lambda": a.cv.lambda_star,
            "active": names(&a.fit.active_set),
        })
    };
    let v = serde_json::json!({
        "rule": res.rule.to_string(),
        "seed": seed,
        "n": ds.n(),
        "p": ds.p(),
        "selected": names(&res.selected),
        "empty_selection": res.empty_selection,
        "ate": ate_json(&res.ate),
        "treatment": arm(&res.treatment),
        "control": arm(&res.control),
        "propensity_converged": res.propensity_full.converged,
    });
    let mut s = serde_json::to_string_pretty(&v).expect("json values serialize");
    s.push('\n');
    s
}

pub fn cmd_select(args: &SelectArgs) -> Result<(), CliError> {
    let cfg = load_config(args.tuning.config.as_deref())?;
    let seed = resolve_seed(args.tuning.seed, &cfg)?;
    let pc = pacs_config(&args.tuning, &cfg, args.rule, seed)?;
    let data = data_path(&args.data, &cfg)?;
    let out = args
        .out
        .clone()
        .or_else(|| cfg.raw("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("pacs_out"));
    let ds = load_csv(&data)?;
    let res = pacs_fit(&ds, &pc)?;
    create_dir(&out)?;
    let table = out.join("pacs_result.csv");
    let report = out.join("selection.json");
    write_file(&table, &pacs_result_csv(&ds, &res))?;
    write_file(&report, &selection_json(&ds, &res, seed))?;
    let names: Vec<&str> = res.selected.iter().map(|&j| ds.names()[j].as_str()).collect();
    println!("selected ({}): {}", res.rule, names.join(","));
    println!("ate: {}", res.ate.value);
    println!("wrote {} and {}", table.display(), report.display());
    Ok(())
}

pub const ATE_HEADER: [&str; 7] = [
    "estimator",
    "covariates",
    "ate",
    "treated_mean",
    "control_mean",
    "n_treated",
    "n_control",
];

pub fn cmd_ate(args: &AteArgs) -> Result<(), CliError> {
    let cfg = load_config(args.tuning.config.as_deref())?;
    let seed = resolve_seed(args.tuning.seed, &cfg)?;
    let pc = pacs_config(&args.tuning, &cfg, args.rule, seed)?;
    let ds = load_csv(data_path(&args.data, &cfg)?)?;
    let fixed: Option<Vec<String>> = match &args.covariates {
        Some(s) => Some(flag_list("covariates", s)?),
        None => cfg.get_list("covariates")?,
    };
    let (estimator, covariates, ate) = match fixed {
        Some(list) => {
            let idx = list
                .iter()
                .map(|name| {
                    ds.names().iter().position(|n| n == name).ok_or_else(|| {
                        CliError::Usage(format!("unknown covariate `{name}`"))
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let fit = refit_propensity(&ds, &idx, &pc.logistic())?;
            ("fixed".to_string(), idx, ipw_ate(&ds, &fit.p_hat)?)
        }
        None => {
            let res = pacs_fit(&ds, &pc)?;
            (format!("pacs_{}", res.rule), res.selected, res.ate)
        }
    };
    let names: Vec<&str> = covariates.iter().map(|&j| ds.names()[j].as_str()).collect();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(ATE_HEADER).expect("in-memory write");
    w.write_record([
        estimator,
        names.join(" "),
        ate.value.to_string(),
        ate.treated_mean.to_string(),
        ate.control_mean.to_string(),
        ate.n_treated.to_string(),
        ate.n_control.to_string(),
    ])
    .expect("in-memory write");
    let text = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv");
    print!("{text}");
    if let Some(out) = args.out.clone().or_else(|| cfg.raw("out").map(PathBuf::from)) {
        create_dir(&out)?;
        write_file(&out.join("ate.csv"), &text)?;
    }
    Ok(())
}

/// Structural description of a cell, enough to rebuild its [`ScenarioConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub scenario: Scenario,
    pub strong: bool,
    /// Heterogeneity level, Scenario 1 only.
    pub level: usize,
    pub n: usize,
    pub p: usize,
}

impl CellSpec {
    pub fn from_preset(name: &str) -> Result<Self, CliError> {
        let base = ScenarioConfig::preset(name).map_err(|e| CliError::Usage(e.to_string()))?;
        let parts: Vec<&str> = name.split('-').collect();
        Ok(Self {
            scenario: base.scenario,
            strong: parts[1] == "strong",
            level: parts[2].parse().unwrap_or(0),
            n: base.n,
            p: base.p,
        })
    }

    pub fn build(&self) -> Result<ScenarioConfig, CliError> {
        let mut cfg = match self.scenario {
            Scenario::S1Heterogeneous => ScenarioConfig::s1(self.strong, self.level, self.n, self.p),
            Scenario::S2Linear => ScenarioConfig::s2(self.strong, self.n, self.p),
        }
        .map_err(|e| CliError::Usage(e.to_string()))?;
        if cfg.name.ends_with("-custom") {
            cfg.name = cfg.name.replace("-custom", &format!("-n{}p{}", self.n, self.p));
        } else if self.scenario == Scenario::S1Heterogeneous && (self.n, self.p) != (500, 20) {
            cfg.name = format!("{}-n{}p{}", cfg.name, self.n, self.p);
        }
        Ok(cfg)
    }

    fn strength(&self) -> &'static str {
        if self.strong {
            "strong"
        } else {
            "weak"
        }
    }
}

fn required<T: std::str::FromStr>(cfg: &ConfigFile, key: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    cfg.get(key)?
        .ok_or_else(|| CliError::Usage(format!("config: `{key}` is required when `scenario` is set without a preset")))
}

fn parse_strength(s: &str) -> Result<bool, String> {
    match s {
        "weak" => Ok(false),
        "strong" => Ok(true),
        other => Err(format!("expected weak|strong, got `{other}`")),
    }
}

/// A fully resolved simulation cell.
#[derive(Debug, Clone)]
pub struct Cell {
    pub spec: CellSpec,
    pub config: ScenarioConfig,
}

/// Cells requested by `--preset` and/or the config file. Explicit keys
/// override the preset values in every cell.
pub fn resolve_cells(args: &SimulateArgs, cfg: &ConfigFile, seed: u64) -> Result<Vec<Cell>, CliError> {
    let preset = args.preset.clone().or_else(|| cfg.raw("preset").map(str::to_string));
    let mut specs = match preset.as_deref() {
        Some("all") => PRESET_NAMES
            .iter()
            .map(|n| CellSpec::from_preset(n))
            .collect::<Result<Vec<_>, _>>()?,
        Some(list) => {
            let names: Vec<String> = flag_list("preset", list)?;
            if names.is_empty() {
                return Err(CliError::Usage("--preset: empty list".into()));
            }
            names.iter().map(|n| CellSpec::from_preset(n)).collect::<Result<Vec<_>, _>>()?
        }
        None => {
            let scenario: Scenario = match cfg.raw("scenario") {
                Some(_) => required(cfg, "scenario")?,
                None => {
                    return Err(CliError::Usage(
                        "simulate needs --preset or a config file with `scenario`".into(),
                    ))
                }
            };
            let strength: String = required(cfg, "strength")?;
            let level = if scenario == Scenario::S1Heterogeneous {
                required(cfg, "heterogeneity")?
            } else {
                0
            };
            vec![CellSpec {
                scenario,
                strong: parse_strength(&strength).map_err(|e| CliError::Usage(format!("config: `strength`: {e}")))?,
                level,
                n: required(cfg, "n")?,
                p: required(cfg, "p")?,
            }]
        }
    };
    for spec in &mut specs {
        if preset.is_some() {
            if let Some(s) = cfg.get::<Scenario>("scenario")? {
                spec.scenario = s;
            }
            if let Some(s) = cfg.raw("strength") {
                spec.strong = parse_strength(s)
                    .map_err(|e| CliError::Usage(format!("config: `strength`: {e}")))?;
            }
            if let Some(l) = cfg.get("heterogeneity")? {
                spec.level = l;
            }
            if let Some(n) = cfg.get("n")? {
                spec.n = n;
            }
            if let Some(p) = cfg.get("p")? {
                spec.p = p;
            }
        }
        if spec.scenario == Scenario::S1Heterogeneous && spec.level == 0 {
            return Err(CliError::Usage("config: `heterogeneity` is required for s1".into()));
        }
    }
    let m = args.m.map(Ok).or_else(|| cfg.get("m").transpose()).transpose()?;
    let mu: Option<f64> = cfg.get("mu")?;
    let noise_sd: Option<f64> = cfg.get("noise-sd")?;
    let name = cfg.raw("name");
    if name.is_some() && specs.len() > 1 {
        return Err(CliError::Usage("config: `name` needs a single cell".into()));
    }
    let mut cells = Vec::with_capacity(specs.len());
    for spec in specs {
        let mut sc = spec.build()?;
        sc.seed = seed;
        if let Some(m) = m {
            sc.m = m;
        }
        if let Some(mu) = mu {
            if sc.scenario != Scenario::S2Linear {
                return Err(CliError::Usage("config: `mu` applies to s2 only".into()));
            }
            sc.mu = mu;
        }
        if let Some(sd) = noise_sd {
            sc.noise_sd = sd;
        }
        if let Some(n) = name {
            if n.is_empty() || n.contains(['/', '\\']) || n == "." || n == ".." {
                return Err(CliError::Usage(format!("config: `name` {n:?} is not a directory name")));
            }
            sc.name = n.to_string();
        }
        sc.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        cells.push(Cell { spec, config: sc });
    }
    Ok(cells)
}

pub fn resolve_methods(flag: &Option<String>, cfg: &ConfigFile) -> Result<Vec<Method>, CliError> {
    let list: Vec<Method> = match flag {
        Some(s) => flag_list("methods", s)?,
        None => cfg.get_list("methods")?.unwrap_or_else(|| Method::ALL.to_vec()),
    };
    let mut methods = Vec::new();
    for m in list {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(CliError::Usage("--methods: empty list".into()));
    }
    Ok(methods)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

/// Resolved settings of a cell in config-file form. The worker count is
/// left out because it does not affect results.
pub fn cell_config_text(cell: &Cell, methods: &[Method], pc: &PacsConfig) -> String {
    let sc = &cell.config;
    let mut pairs: Vec<(&str, String)> = vec![
        ("name", sc.name.clone()),
        ("scenario", sc.scenario.to_string()),
        ("strength", cell.spec.strength().to_string()),
    ];
    if sc.scenario == Scenario::S1Heterogeneous {
        pairs.push(("heterogeneity", cell.spec.level.to_string()));
    }
    pairs.extend([("n", sc.n.to_string()), ("p", sc.p.to_string()), ("m", sc.m.to_string())]);
    if sc.scenario == Scenario::S2Linear {
        pairs.push(("mu", sc.mu.to_string()));
    }
    pairs.extend([
        ("noise-sd", sc.noise_sd.to_string()),
        ("seed", sc.seed.to_string()),
        ("methods", join(&methods.iter().map(|m| m.label()).collect::<Vec<_>>())),
        ("gamma-grid", join(&pc.gamma_grid)),
        ("lambda-grid-size", pc.lambda_grid_size.to_string()),
        ("folds", pc.cv_folds.to_string()),
        ("clip-epsilon", pc.clip_epsilon.to_string()),
        ("intercept", pc.intercept_in_propensity.to_string()),
    ]);
    render(&pairs)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = load_config(args.tuning.config.as_deref())?;
    let seed = resolve_seed(args.tuning.seed, &cfg)?;
    let pc = pacs_config(&args.tuning, &cfg, None, seed)?;
    let methods = resolve_methods(&args.methods, &cfg)?;
    let workers = args
        .workers
        .map(Ok)
        .or_else(|| cfg.get("workers").transpose())
        .transpose()?
        .unwrap_or(1);
    if workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.raw("out").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("reports"));
    let cells = resolve_cells(args, &cfg, seed)?;
    let opts = ExperimentOptions {
        workers,
        pacs: pc.clone(),
        ..ExperimentOptions::default()
    };
    for cell in &cells {
        let sc = &cell.config;
        let start = std::time::Instant::now();
        let reports = run_experiment(sc, &methods, &opts)?;
        let tables = summarize(&reports, sc)?;
        let dir = out.join(&sc.name);
        create_dir(&dir)?;
        write_file(&dir.join(FREQUENCY_FILE), &tables.frequency_csv())?;
        write_file(&dir.join(ATE_FILE), &tables.ate_csv())?;
        write_file(&dir.join(RUNTIME_FILE), &tables.runtime_csv())?;
        write_file(&dir.join(CONFIG_FILE), &cell_config_text(cell, &methods, &pc))?;
        write_file(
            &dir.join(CHART_FILE),
            &frequency_chart(&format!("{}: selection frequency", sc.name), &tables.frequency),
        )?;
        for r in &reports {
            for (rep, msg) in &r.failures {
                eprintln!("{}: {} replication {rep} excluded: {msg}", sc.name, r.method);
            }
        }
        eprintln!(
            "{}: {} replications of {} methods in {:.1}s",
            sc.name,
            sc.m,
            methods.len(),
            start.elapsed().as_secs_f64()
        );
        println!("{}", dir.display());
    }
    Ok(())
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let dir = args
        .dir
        .clone()
        .or_else(|| args.out.clone())
        .unwrap_or_else(|| PathBuf::from("reports"));
    let cells = discover(&dir)?;
    let summary = dir.join(SUMMARY_FILE);
    write_file(&summary, &summary_csv(&cells))?;
    println!("{}", summary.display());
    for (file, text) in runtime_tables(&cells) {
        let path = dir.join(file);
        write_file(&path, &text)?;
        println!("{}", path.display());
    }
    for cell in &cells {
        write_file(&cell.dir.join(CHART_FILE), &chart_for(cell))?;
    }
    Ok(())
}
