use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use lvlingam::synth::{derive_seed, draw_model, sample_matrix, NoiseFamily};
use lvlingam::{Dag, GraphPreset, Roles};
use lvlingam_cli::covariates::residualize_covariates;
use lvlingam_cli::estimators::{roles_from_names, run_estimator, treatments, Estimator};
use lvlingam_cli::experiment::{run_experiment, write_results, ExperimentConfig};
use lvlingam_cli::{read_csv, sample_from_csv, split_list, write_matrix_csv};
use serde_json::json;

#[derive(Parser)]
#[command(name = "lvlingam", version, about = "Causal effects in latent-variable LiNGAM models from higher-order cumulants")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GraphArgs {
    /// Built-in graph: G1, G2, G3, PROXY_2LAT_EDGE, IV_2T_1I or IV_3T_2I.
    #[arg(long, conflicts_with = "graph_file")]
    preset: Option<String>,
    /// JSON graph: {"nodes": N, "observed": [...], "latent": [...], "edges": [[i, j], ...]}.
    #[arg(long)]
    graph_file: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a random model on a graph and write a sample as CSV plus a JSON sidecar.
    Generate {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long, default_value = "gamma")]
        noise: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of rows.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate causal effects from a CSV file.
    Estimate {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        estimator: String,
        #[arg(long)]
        input: PathBuf,
        /// Role columns: Z,T,Y for proxy estimators, I..,T1,..,Y for instrumental variables.
        #[arg(long)]
        columns: Option<String>,
        /// Latent confounder count (required without a graph; may only lower the graph's).
        #[arg(long)]
        latents: Option<usize>,
        /// Number of leading instrument columns in --columns.
        #[arg(long, default_value_t = 1)]
        instruments: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated sweep over sample sizes with relative-error summaries.
    Experiment {
        #[command(flatten)]
        graph: GraphArgs,
        #[arg(long)]
        estimator: Option<String>,
        #[arg(long, default_value = "gamma")]
        noise: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "1000,10000,100000")]
        sizes: String,
        #[arg(long, default_value_t = 100)]
        replicates: usize,
        /// Use exact population cumulants instead of samples.
        #[arg(long)]
        population: bool,
        #[arg(long)]
        latents: Option<usize>,
        #[arg(long)]
        columns: Option<String>,
        #[arg(long, default_value_t = 1)]
        instruments: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace target columns by their OLS residuals on covariate columns.
    Residualize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        covariates: String,
        /// Defaults to every non-covariate column.
        #[arg(long)]
        targets: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Config(anyhow::Error),
    Estimation(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Config(e.into())
    }
}

type Outcome = Result<(), Failure>;

struct GraphChoice {
    name: String,
    dag: Dag,
    preset: Option<GraphPreset>,
}

fn load_graph(args: &GraphArgs) -> anyhow::Result<Option<GraphChoice>> {
    match (&args.preset, &args.graph_file) {
        (Some(p), _) => {
            let preset: GraphPreset = p.parse()?;
            Ok(Some(GraphChoice {
                name: preset.name().to_string(),
                dag: preset.dag(),
                preset: Some(preset),
            }))
        }
        (None, Some(path)) => {
            let dag = Dag::from_json_file(path).with_context(|| format!("reading {}", path.display()))?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into());
            Ok(Some(GraphChoice {
                name,
                dag,
                preset: None,
            }))
        }
        (None, None) => Ok(None),
    }
}

fn require_graph(args: &GraphArgs) -> anyhow::Result<GraphChoice> {
    load_graph(args)?.ok_or_else(|| anyhow!("either --preset or --graph-file is required"))
}

fn resolve_roles(
    graph: &GraphChoice,
    estimator: Estimator,
    columns: Option<&str>,
    instruments: usize,
) -> anyhow::Result<Roles> {
    match (columns, graph.preset) {
        (Some(cols), _) => Ok(roles_from_names(&graph.dag, estimator, &split_list(cols), instruments)?),
        (None, Some(preset)) => Ok(preset.roles()),
        (None, None) => bail!("--columns is required with --graph-file"),
    }
}

/// Proxy graph used when no graph is given: `l` latents pointing into `Z`, `T` and `Y`.
fn generic_proxy_graph(names: &[String], latents: usize) -> anyhow::Result<Dag> {
    if names.len() != 3 {
        bail!("proxy estimators need three columns Z,T,Y");
    }
    let mut edges = vec![(1, 2)];
    let mut all_names = names.to_vec();
    for l in 0..latents {
        for child in 0..3 {
            edges.push((3 + l, child));
        }
        all_names.push(format!("__latent{}", l + 1));
    }
    let latent: Vec<usize> = (3..3 + latents).collect();
    Ok(Dag::new(3 + latents, &edges, &[0, 1, 2], &latent)?.with_names(&all_names)?)
}

fn generate(graph: &GraphArgs, noise: &str, seed: u64, n: usize, out: &Path) -> Outcome {
    let graph = require_graph(graph)?;
    let family: NoiseFamily = noise.parse()?;
    let model = draw_model(&graph.dag, family, seed)?;
    let data_seed = derive_seed(seed, &[n as u64]);
    let data = sample_matrix(&model, n, data_seed)?;
    let labels = model.observed_labels();
    write_matrix_csv(out, &labels, &data)?;

    let dag = model.dag();
    let edges: Vec<_> = dag
        .edges()
        .into_iter()
        .map(|(f, t)| json!({"from": dag.name(f), "to": dag.name(t), "weight": model.weight(f, t)}))
        .collect();
    let noises: Vec<_> = model
        .noise()
        .noises
        .iter()
        .enumerate()
        .map(|(c, d)| json!({"node": dag.name(dag.column_node(c)), "distribution": d}))
        .collect();
    let mut effects = Vec::new();
    for &to in dag.observed() {
        for from in dag.ancestors(to)? {
            effects.push(json!({
                "from": dag.name(from),
                "to": dag.name(to),
                "effect": model.total_effect(from, to)?,
            }));
        }
    }
    let mixing: Vec<Vec<f64>> = (0..model.mixing().nrows())
        .map(|r| model.mixing().row(r).iter().copied().collect())
        .collect();
    let columns: Vec<&str> = (0..model.mixing().ncols()).map(|c| dag.name(dag.column_node(c))).collect();
    let sidecar = json!({
        "graph": graph.name,
        "noise": family,
        "model_seed": seed,
        "data_seed": data_seed,
        "n": n,
        "observed": labels,
        "edges": edges,
        "noises": noises,
        "mixing_columns": columns,
        "mixing": mixing,
        "true_effects": effects,
    });
    let path = out.with_extension("json");
    std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
    println!("wrote {} and {}", out.display(), path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn estimate(
    graph: &GraphArgs,
    estimator: &str,
    input: &Path,
    columns: Option<&str>,
    latents: Option<usize>,
    instruments: usize,
    out: Option<&Path>,
) -> Outcome {
    let estimator: Estimator = estimator.parse()?;
    let (dag, roles) = match load_graph(graph)? {
        Some(g) => {
            let roles = resolve_roles(&g, estimator, columns, instruments)?;
            (g.dag, roles)
        }
        None => {
            if estimator.is_iv() {
                return Err(anyhow!("instrumental-variable estimators need --preset or --graph-file").into());
            }
            let l = latents.ok_or_else(|| anyhow!("--latents is required without a graph"))?;
            let names = split_list(columns.unwrap_or("Z,T,Y"));
            let dag = generic_proxy_graph(&names, l)?;
            let roles = roles_from_names(&dag, estimator, &names, instruments)?;
            (dag, roles)
        }
    };
    lvlingam_cli::estimators::resolve_latents(estimator, &roles, latents)?;
    let names: Vec<String> = dag.observed().iter().map(|&v| dag.name(v).to_string()).collect();
    let sample = sample_from_csv(input, &names)?;
    let effects = run_estimator(estimator, &sample, &dag, &roles, latents)
        .map_err(|e| Failure::Estimation(e.into()))?;
    let treatment_names: Vec<&str> = treatments(&roles).iter().map(|&t| dag.name(t)).collect();
    let report = json!({
        "estimator": estimator,
        "n": sample.n(),
        "treatments": treatment_names,
        "outcome": dag.name(lvlingam_cli::estimators::outcome(&roles)),
        "effects": effects,
    });
    let text = serde_json::to_string_pretty(&report)?;
    println!("{text}");
    if let Some(path) = out {
        std::fs::write(path, text + "\n")?;
    }
    Ok(())
}

fn parse_sizes(s: &str) -> anyhow::Result<Vec<usize>> {
    split_list(s)
        .iter()
        .map(|x| {
            x.replace('_', "")
                .parse::<f64>()
                .ok()
                .filter(|v| v.fract() == 0.0 && *v >= 1.0)
                .map(|v| v as usize)
                .ok_or_else(|| anyhow!("invalid sample size '{x}'"))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn experiment(
    graph: &GraphArgs,
    estimator: Option<&str>,
    noise: &str,
    seed: u64,
    sizes: &str,
    replicates: usize,
    population: bool,
    latents: Option<usize>,
    columns: Option<&str>,
    instruments: usize,
    out: &Path,
) -> Outcome {
    let graph = require_graph(graph)?;
    let estimator: Estimator = match (estimator, graph.preset) {
        (Some(e), _) => e.parse()?,
        (None, Some(p)) => Estimator::default_for(p),
        (None, None) => return Err(anyhow!("--estimator is required with --graph-file").into()),
    };
    let roles = resolve_roles(&graph, estimator, columns, instruments)?;
    let cfg = ExperimentConfig {
        graph_name: graph.name,
        dag: graph.dag,
        roles,
        estimator,
        noise: noise.parse()?,
        sizes: parse_sizes(sizes)?,
        replicates,
        base_seed: seed,
        latents,
        population,
    };
    let result = run_experiment(&cfg)?;
    let summary = write_results(&result, out)?;
    println!("n,replicates,failure_rate,median,q25,q75");
    for s in &result.summary {
        let f = |v: Option<f64>| v.map_or("NA".to_string(), |x| format!("{x:.6}"));
        println!(
            "{},{},{:.3},{},{},{}",
            s.n,
            s.replicates,
            s.failure_rate,
            f(s.median),
            f(s.q25),
            f(s.q75)
        );
    }
    eprintln!("wrote {} and {}", out.display(), summary.display());
    Ok(())
}

fn residualize(input: &Path, covariates: &str, targets: Option<&str>, out: &Path) -> Outcome {
    let (header, _) = read_csv(input)?;
    let cov_names = split_list(covariates);
    let target_names = match targets {
        Some(t) => split_list(t),
        None => header.iter().filter(|h| !cov_names.contains(h)).cloned().collect(),
    };
    let mut names = cov_names.clone();
    names.extend(target_names.iter().cloned());
    let sample = sample_from_csv(input, &names)?;
    let cov_idx: Vec<usize> = (0..cov_names.len()).collect();
    let target_idx: Vec<usize> = (cov_names.len()..names.len()).collect();
    let residuals = residualize_covariates(&sample, &cov_idx, &target_idx)?;
    write_matrix_csv(out, residuals.labels(), residuals.data())?;
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Generate {
            graph,
            noise,
            seed,
            n,
            out,
        } => generate(&graph, &noise, seed, n, &out),
        Command::Estimate {
            graph,
            estimator,
            input,
            columns,
            latents,
            instruments,
            out,
        } => estimate(
            &graph,
            &estimator,
            &input,
            columns.as_deref(),
            latents,
            instruments,
            out.as_deref(),
        ),
        Command::Experiment {
            graph,
            estimator,
            noise,
            seed,
            sizes,
            replicates,
            population,
            latents,
            columns,
            instruments,
            out,
        } => experiment(
            &graph,
            estimator.as_deref(),
            &noise,
            seed,
            &sizes,
            replicates,
            population,
            latents,
            columns.as_deref(),
            instruments,
            &out,
        ),
        Command::Residualize {
            input,
            covariates,
            targets,
            out,
        } => residualize(&input, &covariates, targets.as_deref(), &out),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Estimation(e)) => {
            eprintln!("estimation failed: {e:#}");
            ExitCode::from(3)
        }
    }
}
