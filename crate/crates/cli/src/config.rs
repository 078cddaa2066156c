use std::path::{Path, PathBuf};

use clap::Args;
use dysonlab::config::closed_c2_1d;
use dysonlab::dynamics::{Perturbation, SdeConfig};
use dysonlab::ensembles::{default_step_size, ChainConfig};
use dysonlab::game::Model;
use dysonlab::stats::{Estimator, IndexRule};
use dysonlab::{GameParams, PotentialSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

/// Settings shared by the config file and the command line. Every field is
/// optional; flags override file values and unset fields take the defaults
/// listed in the README.
#[derive(Debug, Default, Clone, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: dysonlab-out].
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Worker threads for replicas, chains and grid points [default: 1].
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    #[serde(default)]
    pub params: ParamsSection,
    #[command(flatten)]
    #[serde(default)]
    pub sde: SdeSection,
    #[command(flatten)]
    #[serde(default)]
    pub chain: ChainSection,
    #[command(flatten)]
    #[serde(default)]
    pub grid: GridSection,
    #[command(flatten)]
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    /// Number of players [default: 8].
    #[arg(long)]
    pub n_players: Option<usize>,
    /// Repulsion strength [default: 2].
    #[arg(long)]
    pub beta: Option<f64>,
    /// Noise level [default: 1].
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Circumcircle cost coefficient [default: from the model].
    #[arg(long)]
    pub c1: Option<f64>,
    /// Inverse-squared-gap cost coefficient [default: from the model].
    #[arg(long)]
    pub c2: Option<f64>,
    /// Quartic coefficient of the confining potential [default: 0].
    #[arg(long)]
    pub quartic: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct SdeSection {
    /// Time step [default: 1e-4].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Burn-in time [default: 50].
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Final time [default: 250].
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Maximum bridge halvings per step [default: 20].
    #[arg(long)]
    pub max_halvings: Option<u32>,
    /// Record every this many steps [default: 1000].
    #[arg(long)]
    pub record_stride: Option<usize>,
    /// Gap-contraction refinement ratio; 0 refines on ordering violations
    /// only [default: 0.5].
    #[arg(long)]
    pub gap_contraction: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    /// Initial MALA step size [default: 2 sigma / N^(7/6)].
    #[arg(long)]
    pub step_size: Option<f64>,
    /// Burn-in proposals [default: 5000].
    #[arg(long)]
    pub n_burn: Option<usize>,
    /// Kept samples per chain [default: 10000].
    #[arg(long)]
    pub n_keep: Option<usize>,
    /// Proposals per kept sample [default: 2].
    #[arg(long)]
    pub thin: Option<usize>,
    /// Target acceptance rate during burn-in [default: 0.57].
    #[arg(long)]
    pub target_acceptance: Option<f64>,
    /// Independent chains [default: 4].
    #[arg(long)]
    pub n_chains: Option<usize>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Explicit C2 grid; overrides the range settings.
    #[arg(long, value_delimiter = ',')]
    pub c2_values: Option<Vec<f64>>,
    /// Smallest C2 of the range [default: -0.1].
    #[arg(long)]
    pub c2_min: Option<f64>,
    /// Largest C2 of the range [default: 1].
    #[arg(long)]
    pub c2_max: Option<f64>,
    /// Number of C2 values in the range [default: 111].
    #[arg(long)]
    pub c2_points: Option<usize>,
    /// C2 used for the per-player cost and density panels [default: 0].
    #[arg(long)]
    pub panel_c2: Option<f64>,
    /// Finite player count for the loop comparison [default: large-N limit].
    #[arg(long)]
    pub finite_n: Option<usize>,
    /// Points per panel table [default: 201].
    #[arg(long)]
    pub panel_points: Option<usize>,
    /// Player counts for convergence tables [default: 50,100,200].
    #[arg(long, value_delimiter = ',')]
    pub n_values: Option<Vec<usize>>,
    /// Quantile level of the tracked index [default: 0.5 on the line, 0.25 in the plane].
    #[arg(long)]
    pub q: Option<f64>,
    /// Spiral phase of the tracked planar index [default: 0].
    #[arg(long)]
    pub theta: Option<f64>,
}

#[derive(Debug, Default, Clone, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// closed1d, open1d, closed2d or open2d [default: closed1d].
    #[arg(long)]
    pub model: Option<String>,
    /// Zero-based tracked player [default: ceil(N/2) - 1].
    #[arg(long)]
    pub player: Option<usize>,
    /// Deviation applied to the tracked player: additive, scale or beta_shift.
    #[arg(long)]
    pub perturbation: Option<String>,
    /// Size of the deviation [default: 0.2].
    #[arg(long)]
    pub perturbation_value: Option<f64>,
    /// Independent SDE replicas [default: 1].
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Random configurations per verification suite [default: 1000].
    #[arg(long)]
    pub configs: Option<usize>,
    /// Largest N in the identity suite [default: 25].
    #[arg(long)]
    pub max_n: Option<usize>,
    /// Sampler dimension, 1 or 2 [default: 1].
    #[arg(long)]
    pub dimension: Option<u8>,
    /// Statistic for `stats`: h2, h2_avg, h2_2d, circ_2d or const [default: h2].
    #[arg(long)]
    pub estimator: Option<String>,
    /// Snapshot times for `coulomb-relax` [default: 0,0.05,0.2,0.5,1,2].
    #[arg(long, value_delimiter = ',')]
    pub snapshot_times: Option<Vec<f64>>,
    /// Initial half-width of the square start of `coulomb-relax`, in units
    /// of the support radius [default: 0.3].
    #[arg(long)]
    pub start_width: Option<f64>,
    /// Neighbours of the tracked player used for circumcircle overlays [default: 4].
    #[arg(long)]
    pub overlay: Option<usize>,
}

fn strip_nulls(v: Value) -> Value {
    match v {
        Value::Object(map) => Value::Object(
            map.into_iter()
                .filter(|(_, v)| !v.is_null())
                .map(|(k, v)| (k, strip_nulls(v)))
                .collect(),
        ),
        other => other,
    }
}

fn overlay(base: &mut Value, top: Value) {
    match (base, top) {
        (Value::Object(b), Value::Object(t)) => {
            for (k, v) in t {
                overlay(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Read the optional TOML file and lay the command-line flags over it.
pub fn load(path: Option<&Path>, flags: &Overrides) -> Result<Overrides, CliError> {
    let file: Overrides = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", p.display())))?;
            toml::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {}", p.display(), e.message())))?
        }
        None => Overrides::default(),
    };
    let mut merged = strip_nulls(serde_json::to_value(file).map_err(CliError::internal)?);
    overlay(
        &mut merged,
        strip_nulls(serde_json::to_value(flags).map_err(CliError::internal)?),
    );
    serde_json::from_value(merged).map_err(|e| CliError::config(e.to_string()))
}

/// Fully resolved settings of one run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub command: String,
    pub seed: u64,
    pub output: PathBuf,
    pub workers: usize,
    pub params: GameParams,
    /// True when C2 was not given and was filled in from the model.
    pub c2_auto_filled: bool,
    pub model: Model,
    pub sde: SdeConfig,
    pub chain: ChainConfig,
    pub n_chains: usize,
    pub grid: Grid,
    pub run: RunOptions,
}

#[derive(Debug, Clone, Serialize)]
pub struct Grid {
    pub c2_values: Vec<f64>,
    pub panel_c2: f64,
    pub finite_n: Option<usize>,
    pub panel_points: usize,
    pub n_values: Vec<usize>,
    pub index_rule: IndexRule,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunOptions {
    pub player: usize,
    pub perturbation: Option<Perturbation>,
    pub replicas: usize,
    pub configs: usize,
    pub max_n: usize,
    pub dimension: u8,
    pub estimator: Estimator,
    pub snapshot_times: Vec<f64>,
    pub start_width: f64,
    pub overlay: usize,
}

fn positive(name: &str, v: usize) -> Result<usize, CliError> {
    if v == 0 {
        return Err(CliError::config(format!("{name} must be at least 1")));
    }
    Ok(v)
}

impl ExperimentConfig {
    pub fn resolve(command: &str, o: Overrides) -> Result<Self, CliError> {
        let p = &o.params;
        let model: Model = match &o.run.model {
            Some(m) => m.parse().map_err(CliError::from)?,
            None if command == "coulomb-relax" => Model::Closed2D,
            None => Model::Closed1D,
        };
        let (n, beta, sigma) = (
            p.n_players.unwrap_or(8),
            p.beta.unwrap_or(2.0),
            p.sigma.unwrap_or(1.0),
        );
        let mut params = match model {
            Model::Closed1D => GameParams::closed_loop_1d(n, beta, sigma),
            Model::Open1D => GameParams::open_loop_1d(n, beta, sigma),
            Model::Closed2D => GameParams::closed_loop_2d(n, beta, sigma),
            Model::Open2D => GameParams::open_loop_2d(n, beta, sigma),
        }?;
        let c2_auto_filled = p.c2.is_none();
        if command == "verify-nash" && c2_auto_filled {
            params.c2 = closed_c2_1d(beta, sigma);
        }
        if let Some(c1) = p.c1 {
            params.c1 = c1;
        }
        if let Some(c2) = p.c2 {
            params.c2 = c2;
        }
        if let Some(a) = p.quartic {
            if a != 0.0 {
                params.potential = PotentialSpec::Quartic { quartic: a };
            }
        }
        params.validate()?;

        let seed = o.seed.unwrap_or(0);
        let s = &o.sde;
        let sde = SdeConfig {
            dt: s.dt.unwrap_or(1e-4),
            max_halvings: s.max_halvings.unwrap_or(20),
            burn_in: s.burn_in.unwrap_or(50.0),
            horizon: s.horizon.unwrap_or(250.0),
            seed,
            record_stride: s.record_stride.unwrap_or(1000),
            gap_contraction: match s.gap_contraction {
                Some(0.0) => None,
                Some(r) => Some(r),
                None => Some(dysonlab::dynamics::GAP_CONTRACTION),
            },
        };
        if command != "coulomb-relax" {
            sde.validate()?;
        }

        let c = &o.chain;
        let chain = ChainConfig {
            step_size: c.step_size.unwrap_or_else(|| default_step_size(&params)),
            n_burn: c.n_burn.unwrap_or(5000),
            n_keep: c.n_keep.unwrap_or(10_000),
            thin: c.thin.unwrap_or(2),
            seed,
            target_acceptance: c.target_acceptance.unwrap_or(0.57),
        };
        chain.validate()?;
        let n_chains = positive("n_chains", c.n_chains.unwrap_or(4))?;

        let g = &o.grid;
        let c2_values = match &g.c2_values {
            Some(v) if v.is_empty() => return Err(CliError::config("c2_values must not be empty")),
            Some(v) => v.clone(),
            None => {
                let (lo, hi) = (g.c2_min.unwrap_or(-0.1), g.c2_max.unwrap_or(1.0));
                let k = positive("c2_points", g.c2_points.unwrap_or(111))?;
                if !(hi >= lo) {
                    return Err(CliError::config("c2_max must not be below c2_min"));
                }
                if k == 1 {
                    vec![lo]
                } else {
                    (0..k)
                        .map(|j| lo + (hi - lo) * j as f64 / (k - 1) as f64)
                        .collect()
                }
            }
        };
        let planar_stats = o
            .run
            .estimator
            .as_deref()
            .is_some_and(|e| e.ends_with("_2d"));
        let index_rule = if planar_stats {
            IndexRule::Spiral {
                q: g.q.unwrap_or(0.25),
                theta: g.theta.unwrap_or(0.0),
            }
        } else {
            IndexRule::Fraction {
                q: g.q.unwrap_or(0.5),
            }
        };
        index_rule.select(2)?;
        let grid = Grid {
            c2_values,
            panel_c2: g.panel_c2.unwrap_or(0.0),
            finite_n: g.finite_n,
            panel_points: positive("panel_points", g.panel_points.unwrap_or(201))?,
            n_values: g.n_values.clone().unwrap_or_else(|| vec![50, 100, 200]),
            index_rule,
        };

        let r = &o.run;
        let perturbation = match r.perturbation.as_deref() {
            None => None,
            Some(kind) => {
                let v = r.perturbation_value.unwrap_or(0.2);
                Some(match kind {
                    "additive" => Perturbation::Additive(v),
                    "scale" => Perturbation::Scale(v),
                    "beta_shift" => Perturbation::BetaShift(v),
                    other => {
                        return Err(CliError::config(format!(
                            "perturbation must be additive, scale or beta_shift, got `{other}`"
                        )))
                    }
                })
            }
        };
        let player = r.player.unwrap_or(n.div_ceil(2) - 1);
        if player >= n {
            return Err(CliError::config(format!(
                "player {player} out of range for {n} players"
            )));
        }
        let dimension = r.dimension.unwrap_or(1);
        if !matches!(dimension, 1 | 2) {
            return Err(CliError::config(format!(
                "dimension must be 1 or 2, got {dimension}"
            )));
        }
        let mut snapshot_times = r
            .snapshot_times
            .clone()
            .unwrap_or_else(|| vec![0.0, 0.05, 0.2, 0.5, 1.0, 2.0]);
        if snapshot_times.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            return Err(CliError::config(
                "snapshot_times must be finite and non-negative",
            ));
        }
        snapshot_times.sort_by(f64::total_cmp);
        snapshot_times.dedup();
        let start_width = r.start_width.unwrap_or(0.3);
        if !(start_width > 0.0 && start_width.is_finite()) {
            return Err(CliError::config("start_width must be positive"));
        }
        let max_n = r.max_n.unwrap_or(25);
        if max_n < 3 {
            return Err(CliError::config("max_n must be at least 3"));
        }
        let run = RunOptions {
            player,
            perturbation,
            replicas: positive("replicas", r.replicas.unwrap_or(1))?,
            configs: positive("configs", r.configs.unwrap_or(1000))?,
            max_n,
            dimension,
            estimator: r
                .estimator
                .as_deref()
                .unwrap_or("h2")
                .parse()
                .map_err(CliError::from)?,
            snapshot_times,
            start_width,
            overlay: r.overlay.unwrap_or(4),
        };

        let output = o
            .output
            .clone()
            .unwrap_or_else(|| PathBuf::from("dysonlab-out"));
        std::fs::create_dir_all(&output).map_err(|e| {
            CliError::config(format!(
                "output directory {} is not writable: {e}",
                output.display()
            ))
        })?;
        let probe = output.join(".write-test");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| {
                CliError::config(format!(
                    "output directory {} is not writable: {e}",
                    output.display()
                ))
            })?;

        Ok(ExperimentConfig {
            command: command.to_string(),
            seed,
            output,
            workers: positive("workers", o.workers.unwrap_or(1))?,
            params,
            c2_auto_filled,
            model,
            sde,
            chain,
            n_chains,
            grid,
            run,
        })
    }
}
