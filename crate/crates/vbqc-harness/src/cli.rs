//! Command-line interface. Every subcommand is seed-deterministic: the same
//! invocation produces the same output bytes. Results go to `--out` as
//! newline-delimited JSON (stdout when omitted); diagnostics go to stderr
//! with a nonzero exit code.

use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use vbqc::adversary::{exact_failure_probability, fast_path_trial, Attack};
use vbqc::bounds::{
    composable_epsilon, min_n_for_target, optimize_verifiability_bound, verifiability_bound,
    AnalysisPoint,
};
use vbqc::graph::{bipartite_colouring, greedy_colouring, validate_colouring, Colouring};
use vbqc::pattern::validate_pattern;
use vbqc::protocol::{presample_count, ProtocolParams};

use crate::blindness::blindness_test;
use crate::config::{load_pattern, ColouringSpec, ExperimentConfig};
use crate::montecarlo::{run_batch_with_jobs, trial_seed};
use crate::robustness::robustness_sweep;
use crate::transport::{run_protocol_over_socket, serve, ServeOptions};

#[derive(Debug, Parser)]
#[command(
    name = "vbqc",
    about = "Simulator and bound-validation harness for trap-based verifiable blind delegated computation",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct OutArg {
    /// Write results here as NDJSON instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn write_lines(&self, lines: &[String]) -> anyhow::Result<()> {
        let body = lines.join("\n") + "\n";
        match &self.out {
            Some(path) => std::fs::write(path, body)
                .with_context(|| format!("writing {}", path.display()))?,
            None => std::io::stdout().write_all(body.as_bytes())?,
        }
        Ok(())
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a batch of protocol executions described by a config file.
    Run {
        /// Path to an experiment config (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the config's trial count.
        #[arg(long)]
        trials: Option<u64>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's worker-thread count.
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Check that honest transcripts leak nothing: per-vertex angle
    /// uniformity, distinguisher AUCs, and the unblinded negative control.
    Blindness {
        /// `builtin:<name>` or a pattern JSON file.
        #[arg(long, default_value = "builtin:linear3-not")]
        pattern: String,
        /// Transcripts per family.
        #[arg(long, default_value_t = 10_000)]
        samples: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Family-wise significance level (Bonferroni-corrected per vertex).
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Sweep depolarizing noise against failure-rate thresholds and compare
    /// the empirical rates to the analytic floor/ceiling per regime.
    Robustness {
        #[arg(long, default_value = "builtin:five-vertex")]
        pattern: String,
        /// Total runs per execution.
        #[arg(long, default_value_t = 16)]
        n: usize,
        /// Comma-separated depolarizing rates.
        #[arg(long, value_delimiter = ',', default_value = "0.0,0.02,0.05")]
        noise: Vec<f64>,
        /// Comma-separated failure-rate thresholds.
        #[arg(long = "omega", value_delimiter = ',', default_value = "0.05,0.2")]
        omegas: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        trials: u64,
        /// Test runs per colour when measuring the failure bracket.
        #[arg(long, default_value_t = 2_000)]
        pbound_trials: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Estimate the failure probability of the one-vertex prefix attack via
    /// the classical fast path, optionally alongside the exact value.
    Attack {
        #[arg(long, default_value = "builtin:five-vertex")]
        pattern: String,
        /// Total runs per execution (half computation, half test).
        #[arg(long, default_value_t = 8)]
        n: usize,
        /// Failure-rate threshold.
        #[arg(long, default_value_t = 0.2)]
        omega: f64,
        /// Attacked prefix length (X on the target in runs 0..m).
        #[arg(long)]
        m: usize,
        /// Target vertex (defaults to the first vertex).
        #[arg(long)]
        target: Option<u32>,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Also compute the exact failure probability (n <= 16).
        #[arg(long)]
        exact: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Analytic bounds: evaluate, optimize, or plan protocol sizes.
    Bounds {
        #[command(subcommand)]
        which: BoundsCommand,
    },
    /// Print a proper colouring of a pattern's graph.
    Colour {
        #[arg(long)]
        pattern: String,
        /// greedy | bipartite
        #[arg(long, default_value = "bipartite")]
        mode: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Validate a pattern file (graph, flow, angles) or an experiment config.
    Validate {
        #[arg(long)]
        pattern: Option<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        out: OutArg,
    },
    /// Serve the protocol over TCP (simulation transport).
    Serve {
        /// Listen address, e.g. 127.0.0.1:7001.
        #[arg(long)]
        addr: String,
        #[arg(long, default_value = "builtin:five-vertex")]
        pattern: String,
        /// Server behaviour as JSON, e.g. {"kind":"depolarizing","p":0.05}.
        #[arg(long)]
        behaviour: Option<String>,
        /// Server-side redo injection rate.
        #[arg(long, default_value_t = 0.0)]
        redo_rate: f64,
        /// Seeded connection-drop rate (client recovery exercise).
        #[arg(long, default_value_t = 0.0)]
        drop_rate: f64,
        /// Exit after this many verdicts.
        #[arg(long)]
        sessions: Option<u64>,
    },
    /// Run batches against a serving address instead of in memory.
    Connect {
        #[arg(long)]
        addr: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, Subcommand)]
enum BoundsCommand {
    /// Evaluate the verifiability bound at an explicit analysis point.
    Eval {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        phi: f64,
        #[arg(long)]
        eps1: f64,
        #[arg(long)]
        eps2: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Optimize the analysis point for a fixed failure-rate threshold.
    Optimize {
        #[arg(long)]
        n: usize,
        /// Computation runs (default n/2).
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        omega: f64,
        #[command(flatten)]
        out: OutArg,
    },
    /// Smallest n meeting a target verifiability epsilon, plus derived
    /// quantities (composable epsilon, presample count).
    Plan {
        /// Target verifiability bound.
        #[arg(long)]
        target: f64,
        /// Fraction of runs used for computation.
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        #[arg(long)]
        omega: f64,
        #[arg(long)]
        k: usize,
        /// Per-qubit preparation success probability for presampling.
        #[arg(long)]
        p_succ: Option<f64>,
        #[command(flatten)]
        out: OutArg,
    },
}

fn resolve_colouring_for(pattern_ref: &str, mode: &str) -> anyhow::Result<Colouring> {
    let pattern = load_pattern(pattern_ref)?;
    match mode {
        "greedy" => Ok(greedy_colouring(pattern.graph())),
        "bipartite" => bipartite_colouring(pattern.graph())
            .ok_or_else(|| anyhow::anyhow!("graph is not bipartite; use --mode greedy")),
        other => bail!("unknown colouring mode {other:?} (greedy | bipartite)"),
    }
}

pub fn main(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config, trials, seed, jobs, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(trials) = trials {
                cfg.trials = trials;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(jobs) = jobs {
                cfg.jobs = Some(jobs);
            }
            let exp = cfg.resolve()?;
            let summary = run_batch_with_jobs(&exp)?;
            let out = OutArg { out: out.out.or(exp.out) };
            out.write_lines(&[summary.to_ndjson_line()])
        }
        Command::Blindness { pattern, samples, seed, alpha, out } => {
            let p = load_pattern(&pattern)?;
            let colouring = crate::config::builtin_colouring(&pattern)
                .or_else(|| bipartite_colouring(p.graph()))
                .unwrap_or_else(|| greedy_colouring(p.graph()));
            let report = blindness_test(&p, &colouring, &pattern, samples, seed, alpha)?;
            let passed = report.passed();
            out.write_lines(&[report.to_ndjson_line()])?;
            if !passed {
                bail!("blindness test failed (see report)");
            }
            Ok(())
        }
        Command::Robustness { pattern, n, noise, omegas, trials, pbound_trials, seed, out } => {
            let p = load_pattern(&pattern)?;
            let colouring = bipartite_colouring(p.graph())
                .unwrap_or_else(|| greedy_colouring(p.graph()));
            let inputs = vec![false; p.graph().inputs().len()];
            let rows = robustness_sweep(
                &p,
                &colouring,
                &inputs,
                n,
                &noise,
                &omegas,
                trials,
                pbound_trials,
                seed,
            )?;
            let lines: Vec<String> = rows.iter().map(|r| r.to_ndjson_line()).collect();
            out.write_lines(&lines)?;
            if rows.iter().any(|r| r.satisfied == Some(false)) {
                bail!("empirical rate violated an analytic bound (see rows)");
            }
            Ok(())
        }
        Command::Attack { pattern, n, omega, m, target, trials, seed, exact, out } => {
            let p = load_pattern(&pattern)?;
            let colouring = bipartite_colouring(p.graph())
                .unwrap_or_else(|| greedy_colouring(p.graph()));
            let params = ProtocolParams::from_ratios(n, 0.5, omega, colouring.k())?;
            let target = target.unwrap_or_else(|| p.graph().vertices()[0]);
            if !p.graph().contains(target) {
                bail!("target vertex {target} is not in the pattern");
            }
            let attack = Attack::sigma_m(m, target);
            let mut strict = 0u64;
            let mut lenient = 0u64;
            for i in 0..trials {
                let outcome =
                    fast_path_trial(&attack, &params, &colouring, trial_seed(seed, i))?;
                strict += u64::from(outcome.failure_strict());
                lenient += u64::from(outcome.failure_lenient());
            }
            let bound = optimize_verifiability_bound(params.n, params.d, params.t, params.k, omega)
                .ok()
                .map(|o| o.result.bound.value);
            let exact = if exact {
                Some(exact_failure_probability(&params, m)?)
            } else {
                None
            };
            let record = serde_json::json!({
                "schema": 1,
                "pattern": pattern,
                "n": params.n, "d": params.d, "t": params.t, "w": params.w, "k": params.k,
                "omega": omega,
                "m": m,
                "target": target,
                "trials": trials,
                "seed": seed,
                "strict_failures": strict,
                "lenient_failures": lenient,
                "strict_rate": strict as f64 / trials as f64,
                "lenient_rate": lenient as f64 / trials as f64,
                "verifiability_bound": bound,
                "exact": exact,
            });
            out.write_lines(&[record.to_string()])
        }
        Command::Bounds { which } => bounds_main(which),
        Command::Colour { pattern, mode, out } => {
            let p = load_pattern(&pattern)?;
            let colouring = resolve_colouring_for(&pattern, &mode)?;
            assert!(matches!(validate_colouring(p.graph(), &colouring), Ok(true)));
            let record = serde_json::json!({
                "schema": 1,
                "pattern": pattern,
                "mode": mode,
                "k": colouring.k(),
                "assignment": colouring.assignment(),
                "class_sizes": (0..colouring.k()).map(|c| colouring.class(c).len()).collect::<Vec<_>>(),
            });
            out.write_lines(&[record.to_string()])
        }
        Command::Validate { pattern, config, out } => {
            let mut lines = Vec::new();
            if pattern.is_none() && config.is_none() {
                bail!("nothing to validate: pass --pattern and/or --config");
            }
            if let Some(pattern) = pattern {
                // Loading already runs the structural checks; report them.
                let p = load_pattern(&pattern)?;
                let violations = validate_pattern(&p);
                lines.push(
                    serde_json::json!({
                        "schema": 1,
                        "pattern": pattern,
                        "vertices": p.graph().num_vertices(),
                        "edges": p.graph().num_edges(),
                        "inputs": p.graph().inputs(),
                        "outputs": p.graph().outputs(),
                        "violations": violations.iter().map(|v| v.to_string()).collect::<Vec<_>>(),
                    })
                    .to_string(),
                );
                if !violations.is_empty() {
                    out.write_lines(&lines)?;
                    bail!("pattern has {} violations", violations.len());
                }
            }
            if let Some(config) = config {
                let cfg = ExperimentConfig::load(&config)?;
                let exp = cfg.resolve()?;
                lines.push(
                    serde_json::json!({
                        "schema": 1,
                        "config": config.display().to_string(),
                        "n": exp.params.n, "d": exp.params.d, "t": exp.params.t,
                        "w": exp.params.w, "k": exp.params.k,
                        "omega": exp.params.omega(),
                        "security_feasible": exp.params.security_feasible(),
                    })
                    .to_string(),
                );
            }
            out.write_lines(&lines)
        }
        Command::Serve { addr, pattern, behaviour, redo_rate, drop_rate, sessions } => {
            let p = load_pattern(&pattern)?;
            let behaviour_spec: crate::config::BehaviourSpec = match behaviour {
                Some(text) => serde_json::from_str(&text).context("parsing --behaviour")?,
                None => Default::default(),
            };
            // Reuse the config resolution path for behaviour construction.
            let cfg = ExperimentConfig {
                pattern: pattern.clone(),
                colouring: ColouringSpec::Greedy,
                params: crate::config::ParamSpec { d: 1, t: 1, w: 1 },
                behaviour: behaviour_spec,
                trials: 1,
                seed: 0,
                jobs: None,
                out: None,
                inputs: vec![false; p.graph().inputs().len()],
                redo: Default::default(),
            };
            let exp = cfg.resolve()?;
            let listener = TcpListener::bind(&addr)
                .with_context(|| format!("binding {addr}"))?;
            eprintln!("serving {pattern} on {addr}");
            let opts = ServeOptions {
                behaviour: exp.behaviour,
                redo_rate,
                drop_rate,
                sessions,
                ..Default::default()
            };
            let verdicts = serve(&listener, p.graph(), &opts)?;
            eprintln!("served {verdicts} verdicts");
            Ok(())
        }
        Command::Connect { addr, config, trials, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(trials) = trials {
                cfg.trials = trials;
            }
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let exp = cfg.resolve()?;
            let mut accepts = 0u64;
            let mut lines = Vec::new();
            for i in 0..exp.trials {
                let outcome = run_protocol_over_socket(
                    &addr,
                    &exp.pattern,
                    &exp.colouring,
                    &exp.params,
                    &exp.inputs,
                    &exp.policy,
                    trial_seed(exp.seed, i),
                )?;
                accepts += u64::from(outcome.verdict.accepted());
                lines.push(serde_json::json!({
                    "schema": 1,
                    "trial": i,
                    "verdict": outcome.verdict,
                    "failures": outcome.failures,
                }).to_string());
            }
            lines.push(
                serde_json::json!({
                    "schema": 1,
                    "trials": exp.trials,
                    "accepts": accepts,
                })
                .to_string(),
            );
            out.write_lines(&lines)
        }
    }
}

fn bounds_main(which: BoundsCommand) -> anyhow::Result<()> {
    match which {
        BoundsCommand::Eval { n, d, t, k, phi, eps1, eps2, out } => {
            let result = verifiability_bound(n, d, t, k, AnalysisPoint { phi, eps1, eps2 })?;
            out.write_lines(&[serde_json::json!({
                "schema": 1,
                "n": n, "d": d, "t": t, "k": k,
                "point": {"phi": phi, "eps1": eps1, "eps2": eps2},
                "omega": result.omega,
                "bound": result.bound.value,
                "ln_bound": result.bound.ln,
                "ln_terms": result.ln_terms,
            })
            .to_string()])
        }
        BoundsCommand::Optimize { n, d, k, omega, out } => {
            let d = d.unwrap_or(n / 2);
            let t = n.checked_sub(d).filter(|&t| t > 0).ok_or_else(|| {
                anyhow::anyhow!("need d < n for at least one test run")
            })?;
            let optimized = optimize_verifiability_bound(n, d, t, k, omega)?;
            out.write_lines(&[serde_json::json!({
                "schema": 1,
                "n": n, "d": d, "t": t, "k": k,
                "omega": omega,
                "point": optimized.point,
                "bound": optimized.result.bound.value,
                "ln_bound": optimized.result.bound.ln,
            })
            .to_string()])
        }
        BoundsCommand::Plan { target, fraction, omega, k, p_succ, out } => {
            let n = min_n_for_target(target, fraction, omega, k)?;
            let params = ProtocolParams::from_ratios(n, fraction, omega, k)?;
            let optimized =
                optimize_verifiability_bound(params.n, params.d, params.t, k, omega)?;
            let presample = match p_succ {
                Some(p) => Some(presample_count(n, p)?),
                None => None,
            };
            out.write_lines(&[serde_json::json!({
                "schema": 1,
                "target": target,
                "n": params.n, "d": params.d, "t": params.t, "w": params.w, "k": k,
                "omega": omega,
                "bound": optimized.result.bound.value,
                "composable_epsilon": composable_epsilon(optimized.result.bound.value.min(1.0))?,
                "presample_per_run": presample,
            })
            .to_string()])
        }
    }
}

