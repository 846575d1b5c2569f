//! The `coordlab` command-line front end.
//!
//! Every command loads a problem document, runs one library operation, and
//! writes a JSON report that embeds its [`RunManifest`]; re-running the
//! same manifest reproduces the output byte for byte. Wall-clock timing is
//! reported on stderr only, so it never perturbs the artifacts.
//!
//! Exit codes: 0 success, 1 validation error, 2 undecided search,
//! 3 infeasible.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::beliefs;
use crate::codec;
use crate::game::{self, GameOutcome};
use crate::model::{compose_aux, AuxFactors, ProblemSpec, Variant};
use crate::probcore::stream_rng;
use crate::regions::{self, MinLeakage, RatePoint, SearchConfig, Verdict};
use rand::RngCore;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_UNDECIDED: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;

/// Provenance block embedded in every output file. Identical manifests
/// produce byte-identical outputs.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub spec_path: String,
    pub spec_sha256: String,
    pub parameters: BTreeMap<String, Value>,
    pub seed: u64,
    pub tool_version: String,
}

#[derive(Parser)]
#[command(name = "coordlab", version, about = "Rate-leakage-coordination analysis toolbox")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Problem document (JSON).
    #[arg(long)]
    spec: PathBuf,
    /// RNG seed for searches and simulations.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optimizer restarts.
    #[arg(long, default_value_t = 64)]
    restarts: usize,
    /// Simplex-grid oracle step (e.g. 0.25); switches off the optimizer.
    #[arg(long)]
    grid: Option<f64>,
    /// Worker threads (0 = automatic).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Auxiliary alphabet sizes for the search.
    #[arg(long)]
    w1: Option<usize>,
    #[arg(long)]
    w2: Option<usize>,
    /// Output path for the JSON report (stdout when absent); companion
    /// CSV artifacts take the same path with a .csv extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate achievability of a rate/leakage pair.
    Region {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        leakage: f64,
    },
    /// Minimal leakage at a fixed rate.
    MinLeakage {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        variant: Variant,
        #[arg(long)]
        rate: f64,
    },
    /// Solve the state-estimation game at a rate.
    Game {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        rate: f64,
    },
    /// Run the block-Markov scheme and measure coordination and errors.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        rate: f64,
        #[arg(long)]
        leakage: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        blocks: usize,
        #[arg(long, default_value_t = 1)]
        trials: usize,
        #[arg(long, default_value_t = 0.15)]
        delta: f64,
        #[arg(long, default_value_t = 0.01)]
        epsilon: f64,
        /// Witness factors JSON; searched for when absent.
        #[arg(long)]
        aux: Option<PathBuf>,
    },
    /// Posterior-belief audits on an enumerable single-block code.
    Beliefs {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 0.0)]
        rate: f64,
        /// Mix the target toward uniform for zero cells; a bare `--mix`
        /// uses weight 1e-3.
        #[arg(long, num_args = 0..=1, default_missing_value = "1e-3")]
        mix: Option<f64>,
        #[arg(long)]
        aux: Option<PathBuf>,
    },
    /// Trace the rate/leakage polygon of a fixed auxiliary joint.
    Boundary {
        #[command(flatten)]
        common: CommonArgs,
        /// Auxiliary factors JSON (causal class).
        #[arg(long)]
        aux: PathBuf,
    },
}

struct Ctx {
    manifest: RunManifest,
    out: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Validation(String),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "{m}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

fn load_spec(path: &Path) -> Result<(ProblemSpec, String), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let spec = ProblemSpec::from_json(&text).map_err(validation)?;
    let hash = format!("{:x}", Sha256::digest(text.as_bytes()));
    Ok((spec, hash))
}

fn search_config(common: &CommonArgs) -> SearchConfig {
    SearchConfig {
        restarts: common.restarts,
        seed: common.seed,
        grid_step: common.grid,
        threads: common.threads,
        aux_w1: common.w1,
        aux_w2: common.w2,
        ..Default::default()
    }
}

fn manifest(command: &str, common: &CommonArgs, hash: String, extra: BTreeMap<String, Value>) -> RunManifest {
    let mut parameters = extra;
    parameters.insert("restarts".into(), json!(common.restarts));
    if let Some(g) = common.grid {
        parameters.insert("grid".into(), json!(g));
    }
    if let Some(w) = common.w1 {
        parameters.insert("w1".into(), json!(w));
    }
    if let Some(w) = common.w2 {
        parameters.insert("w2".into(), json!(w));
    }
    RunManifest {
        command: command.into(),
        spec_path: common.spec.display().to_string(),
        spec_sha256: hash,
        parameters,
        seed: common.seed,
        tool_version: env!("CARGO_PKG_VERSION").into(),
    }
}

impl Ctx {
    fn new(command: &str, common: &CommonArgs, hash: String, extra: BTreeMap<String, Value>) -> Self {
        Ctx {
            manifest: manifest(command, common, hash, extra),
            out: common.out.clone(),
            cache_dir: std::env::var_os("COORDLAB_CACHE_DIR").map(PathBuf::from),
        }
    }

    fn cache_key(&self) -> String {
        let bytes = serde_json::to_vec(&self.manifest).expect("manifest serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }

    fn cached(&self) -> Option<String> {
        let dir = self.cache_dir.as_ref()?;
        std::fs::read_to_string(dir.join(self.cache_key() + ".json")).ok()
    }

    fn store_cache(&self, payload: &str) {
        if let Some(dir) = &self.cache_dir {
            if std::fs::create_dir_all(dir).is_ok() {
                let _ = std::fs::write(dir.join(self.cache_key() + ".json"), payload);
            }
        }
    }

    /// Emit the wrapped report; returns the payload for reuse.
    fn emit(&self, report: Value) -> Result<(), CliError> {
        let doc = json!({ "manifest": self.manifest, "report": report });
        let mut payload = serde_json::to_string_pretty(&doc).expect("reports serialize");
        payload.push('\n');
        self.store_cache(&payload);
        match &self.out {
            Some(path) => std::fs::write(path, payload)?,
            None => {
                let mut stdout = std::io::stdout().lock();
                stdout.write_all(payload.as_bytes())?;
            }
        }
        Ok(())
    }

    fn emit_csv(&self, header: &str, rows: &[String]) -> Result<(), CliError> {
        let Some(path) = &self.out else { return Ok(()) };
        let csv_path = path.with_extension("csv");
        let manifest_line = serde_json::to_string(&self.manifest).expect("manifest serializes");
        let mut text = format!("# {manifest_line}\n{header}\n");
        for row in rows {
            text.push_str(row);
            text.push('\n');
        }
        std::fs::write(csv_path, text)?;
        Ok(())
    }
}

fn witness_json(factors: &AuxFactors) -> Value {
    serde_json::to_value(factors).expect("factors serialize")
}

fn load_aux(path: &Path, spec: &ProblemSpec) -> Result<crate::model::AuxJoint, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
    let factors: AuxFactors = serde_json::from_str(&text).map_err(validation)?;
    let factors = factors.revalidated().map_err(validation)?;
    compose_aux(factors, spec).map_err(validation)
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            EXIT_VALIDATION
        }
        Err(CliError::Io(e)) => {
            eprintln!("io error: {e}");
            EXIT_VALIDATION
        }
    }
}

fn setup_threads(threads: usize) {
    if threads > 0 {
        // Ignore failure: the global pool can only be set once.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    let started = std::time::Instant::now();
    let code = match cli.command {
        Command::Region { common, variant, rate, leakage } => {
            setup_threads(common.threads);
            let (spec, hash) = load_spec(&common.spec)?;
            let mut extra = BTreeMap::new();
            extra.insert("variant".into(), json!(variant.to_string()));
            extra.insert("rate".into(), json!(rate));
            extra.insert("leakage".into(), json!(leakage));
            let ctx = Ctx::new("region", &common, hash, extra);
            if let Some(hit) = ctx.cached() {
                print!("{hit}");
                return Ok(EXIT_OK);
            }
            let point = RatePoint::new(rate, leakage).map_err(validation)?;
            let cfg = search_config(&common);
            let res = regions::is_achievable(variant, point, &spec, &cfg).map_err(validation)?;
            let report = json!({
                "verdict": res.verdict,
                "region": res.report,
                "slacks": res.slacks,
                "marginal_gap": res.marginal_gap,
                "equality_case": res.equality_case,
                "witness": witness_json(&res.witness.factors),
            });
            ctx.emit(report)?;
            match res.verdict {
                Verdict::Achievable | Verdict::Boundary => EXIT_OK,
                Verdict::Undecided => EXIT_UNDECIDED,
                Verdict::NotAchievable => EXIT_INFEASIBLE,
            }
        }
        Command::MinLeakage { common, variant, rate } => {
            setup_threads(common.threads);
            let (spec, hash) = load_spec(&common.spec)?;
            let mut extra = BTreeMap::new();
            extra.insert("variant".into(), json!(variant.to_string()));
            extra.insert("rate".into(), json!(rate));
            let ctx = Ctx::new("min-leakage", &common, hash, extra);
            if let Some(hit) = ctx.cached() {
                print!("{hit}");
                return Ok(EXIT_OK);
            }
            let cfg = search_config(&common);
            let res = regions::min_leakage(variant, rate, &spec, &cfg).map_err(validation)?;
            match res {
                MinLeakage::Feasible { e_star, witness } => {
                    ctx.emit(json!({
                        "status": "feasible",
                        "rate": rate,
                        "e_star": e_star,
                        "witness": witness_json(&witness.factors),
                    }))?;
                    EXIT_OK
                }
                MinLeakage::InfeasibleRate { max_rate, witness } => {
                    ctx.emit(json!({
                        "status": "infeasible-rate",
                        "rate": rate,
                        "max_rate": max_rate,
                        "witness": witness_json(&witness.factors),
                    }))?;
                    EXIT_INFEASIBLE
                }
                MinLeakage::Undecided { best_e, violation } => {
                    ctx.emit(json!({
                        "status": "undecided",
                        "rate": rate,
                        "best_e": best_e,
                        "violation": violation,
                    }))?;
                    EXIT_UNDECIDED
                }
            }
        }
        Command::Game { common, rate } => {
            setup_threads(common.threads);
            let (spec, hash) = load_spec(&common.spec)?;
            let mut extra = BTreeMap::new();
            extra.insert("rate".into(), json!(rate));
            let ctx = Ctx::new("game", &common, hash, extra);
            if let Some(hit) = ctx.cached() {
                print!("{hit}");
                return Ok(EXIT_OK);
            }
            let cfg = search_config(&common);
            match game::solve_game(rate, &spec, &cfg).map_err(validation)? {
                GameOutcome::Solved(sol) => {
                    let report = game::GameReport::new(rate, &sol);
                    ctx.emit(serde_json::to_value(report).expect("report serializes"))?;
                    EXIT_OK
                }
                GameOutcome::InfeasibleRate { max_rate } => {
                    ctx.emit(json!({ "status": "infeasible-rate", "max_rate": max_rate }))?;
                    EXIT_INFEASIBLE
                }
                GameOutcome::Undecided { best } => {
                    ctx.emit(json!({ "status": "undecided", "d_star_best": best.d_star }))?;
                    EXIT_UNDECIDED
                }
            }
        }
        Command::Simulate {
            common,
            rate,
            leakage,
            n,
            blocks,
            trials,
            delta,
            epsilon,
            aux,
        } => {
            setup_threads(common.threads);
            let (spec, hash) = load_spec(&common.spec)?;
            let mut extra = BTreeMap::new();
            for (k, v) in [
                ("rate", json!(rate)),
                ("leakage", json!(leakage)),
                ("n", json!(n)),
                ("blocks", json!(blocks)),
                ("trials", json!(trials)),
                ("delta", json!(delta)),
                ("epsilon", json!(epsilon)),
            ] {
                extra.insert(k.into(), v);
            }
            if let Some(p) = &aux {
                extra.insert("aux".into(), json!(p.display().to_string()));
            }
            let ctx = Ctx::new("simulate", &common, hash, extra);
            let aux_joint = match &aux {
                Some(path) => load_aux(path, &spec)?,
                None => {
                    let point = RatePoint::new(rate, leakage).map_err(validation)?;
                    let cfg = search_config(&common);
                    let res = regions::is_achievable(Variant::Causal, point, &spec, &cfg)
                        .map_err(validation)?;
                    match res.verdict {
                        Verdict::Achievable | Verdict::Boundary => res.witness,
                        Verdict::Undecided => {
                            ctx.emit(json!({ "status": "undecided" }))?;
                            return Ok(EXIT_UNDECIDED);
                        }
                        Verdict::NotAchievable => {
                            ctx.emit(json!({
                                "status": "infeasible",
                                "slacks": res.slacks,
                            }))?;
                            return Ok(EXIT_INFEASIBLE);
                        }
                    }
                }
            };
            let params = codec::derive_params_with_delta(
                &aux_joint, leakage, rate, epsilon, delta, n, blocks,
            )
            .map_err(validation)?;
            let code = codec::build_code(common.seed, &aux_joint, &params).map_err(validation)?;
            // Trials share the codebooks read-only and run in parallel;
            // collecting by index keeps the reduction deterministic.
            use rayon::prelude::*;
            let reports: Vec<codec::SimReport> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let trial_seed = common.seed.wrapping_add(t as u64 + 1);
                    if code.single_block {
                        let mut mrng = stream_rng(trial_seed, "messages");
                        let msg = (mrng.next_u64() % params.msg_count as u64) as usize;
                        codec::run_single_block(&code, trial_seed, msg)
                    } else {
                        let mut mrng = stream_rng(trial_seed, "messages");
                        let msgs: Vec<usize> = (0..blocks - 1)
                            .map(|_| (mrng.next_u64() % params.msg_count as u64) as usize)
                            .collect();
                        codec::run_blocks(&code, trial_seed, &msgs)
                    }
                })
                .collect::<std::result::Result<_, _>>()
                .map_err(validation)?;
            let rows: Vec<String> = reports
                .iter()
                .enumerate()
                .map(|(t, rep)| {
                    let trial_seed = common.seed.wrapping_add(t as u64 + 1);
                    let leak =
                        rep.leakage_exact.map(|v| format!("{v}")).unwrap_or_default();
                    format!(
                        "{t},{trial_seed},{},{},{leak}",
                        rep.decode_error_rate, rep.tv_to_target
                    )
                })
                .collect();
            let mut errs: Vec<f64> = reports.iter().map(|r| r.decode_error_rate).collect();
            let mut tvs: Vec<f64> = reports.iter().map(|r| r.tv_to_target).collect();
            errs.sort_by(f64::total_cmp);
            tvs.sort_by(f64::total_cmp);
            let report = json!({
                "params": params,
                "trials": trials,
                "median_decode_error": errs[errs.len() / 2],
                "median_tv": tvs[tvs.len() / 2],
                "leakage_exact": reports[0].leakage_exact,
                "leakage_note": reports[0].leakage_note,
                "per_trial": reports.iter().enumerate().map(|(t, r)| json!({
                    "trial": t,
                    "decode_error": r.decode_error_rate,
                    "tv": r.tv_to_target,
                    "errors": r.error_flags,
                })).collect::<Vec<_>>(),
            });
            ctx.emit(report)?;
            ctx.emit_csv("trial,seed,decode_error,tv,leakage", &rows)?;
            EXIT_OK
        }
        Command::Beliefs { common, n, alpha, gamma, delta, rate, mix, aux } => {
            setup_threads(common.threads);
            let (spec, hash) = load_spec(&common.spec)?;
            let mut extra = BTreeMap::new();
            for (k, v) in [
                ("n", json!(n)),
                ("alpha", json!(alpha)),
                ("gamma", json!(gamma)),
                ("delta", json!(delta)),
                ("rate", json!(rate)),
            ] {
                extra.insert(k.into(), v);
            }
            if let Some(m) = mix {
                extra.insert("mix".into(), json!(m));
            }
            let ctx = Ctx::new("beliefs", &common, hash, extra);
            let aux_joint = match &aux {
                Some(path) => load_aux(path, &spec)?,
                None => {
                    // Single-auxiliary witness at the bottom of the band.
                    let cfg = search_config(&common);
                    match regions::min_leakage(Variant::NoAction, rate, &spec, &cfg)
                        .map_err(validation)?
                    {
                        MinLeakage::Feasible { witness, .. } => witness,
                        MinLeakage::InfeasibleRate { max_rate, .. } => {
                            ctx.emit(json!({
                                "status": "infeasible-rate",
                                "max_rate": max_rate,
                            }))?;
                            return Ok(EXIT_INFEASIBLE);
                        }
                        MinLeakage::Undecided { .. } => {
                            ctx.emit(json!({ "status": "undecided" }))?;
                            return Ok(EXIT_UNDECIDED);
                        }
                    }
                }
            };
            let e_lo = crate::probcore::mutual_information(
                &aux_joint.joint,
                &["S"],
                &["W1", "Y"],
                &[],
            )
            .map_err(validation)?;
            let params = codec::derive_params_with_delta(
                &aux_joint, e_lo, rate, 0.01, delta, n, 1,
            )
            .map_err(validation)?;
            let code = codec::build_code(common.seed, &aux_joint, &params).map_err(validation)?;
            let audit =
                beliefs::audit_divergence_bound(&code, &aux_joint, delta, mix).map_err(validation)?;
            let sets = beliefs::belief_sets(&code, &aux_joint, alpha, gamma, delta, mix)
                .map_err(validation)?;
            let gap = match &spec.distortion {
                Some(d) => Some(
                    beliefs::distortion_gap(&code, &aux_joint, d, alpha, gamma, delta, mix)
                        .map_err(validation)?,
                ),
                None => None,
            };
            let report = json!({
                "audit": audit,
                "belief_sets": {
                    "p_complement": sets.p_complement,
                    "bound": sets.bound,
                    "lhs": sets.lhs,
                    "holds": sets.holds,
                    "pairs": sets.pairs.len(),
                },
                "distortion_gap": gap,
            });
            ctx.emit(report)?;
            EXIT_OK
        }
        Command::Boundary { common, aux } => {
            setup_threads(common.threads);
            let (spec, hash) = load_spec(&common.spec)?;
            let mut extra = BTreeMap::new();
            extra.insert("aux".into(), json!(aux.display().to_string()));
            let ctx = Ctx::new("boundary", &common, hash, extra);
            let aux_joint = load_aux(&aux, &spec)?;
            let boundary = regions::region_boundary(&aux_joint).map_err(validation)?;
            let report = serde_json::to_value(&boundary).expect("boundary serializes");
            let rows: Vec<String> =
                boundary.points().iter().map(|p| format!("{},{}", p.r, p.e)).collect();
            ctx.emit(report)?;
            ctx.emit_csv("r,e", &rows)?;
            EXIT_OK
        }
    };
    eprintln!("elapsed: {:.3}s", started.elapsed().as_secs_f64());
    Ok(code)
}
