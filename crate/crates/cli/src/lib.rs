//! Command dispatch for the `cnet` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use cnet::closed_form::welfare_comparison;
use cnet::design::{build_mpec, grid_search, optimality_gap, DesignObjective, ThetaEps};
use cnet::equilibrium::{best_response_dynamics, solve_potential, Phase, SolveOptions, Verdict};
use cnet::exact::ExactTheta;
use cnet::io::{
    format_float, parse_allocation, parse_game, parse_homogeneous_instance, parse_poly_program, parse_theta,
    parse_two_node_params, to_canonical_json,
};
use cnet::model::{Allocation, GameInstance};
use cnet::poly::PolyProgram;
use cnet::regions::{classify, classify_exact, gamma_exact, transport_compact};
use cnet::sdp::SdpOptions;
use cnet::sos::{sdp_solve, sos_relaxation};
use cnet::two_node::{analytic_equilibria, r_set, r_set_exact, RSet};
use cnet::{CnetError, Result};
use serde_json::json;

/// Version tag written as the first line of every CSV file.
pub const CSV_SCHEMA: &str = "# schema=1";

#[derive(Debug, Parser)]
#[command(name = "cnet", version, about = "Networked Cournot equilibria, regions, design and SOS bounds")]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
    /// Write the artifact here instead of standard output.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct GameTheta {
    /// Game description (JSON).
    #[arg(long)]
    pub game: PathBuf,
    /// Preset (sw, cs, rsw, ms) or `c,p,m`.
    #[arg(long)]
    pub theta: String,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 1e-9)]
    pub kkt_tolerance: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub br_tolerance: f64,
}

impl SolverArgs {
    fn options(&self) -> Result<SolveOptions> {
        let opts = SolveOptions {
            kkt_tolerance: self.kkt_tolerance,
            max_active_set_iterations: None,
            br_deviation_tolerance: self.br_tolerance,
        };
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(long)]
    pub game: PathBuf,
    #[arg(long, default_value = "sw")]
    pub objective: String,
    #[arg(long, default_value_t = 0.001)]
    pub epsilon: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Equilibrium by potential maximization.
    Solve {
        #[command(flatten)]
        input: GameTheta,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Region report for one theta.
    Classify {
        #[command(flatten)]
        input: GameTheta,
    },
    /// Region flags over the barycentric grid of the simplex (CSV).
    RegionMap {
        #[arg(long)]
        game: PathBuf,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
    },
    /// Closed-form welfare comparison for a homogeneous instance.
    Compare {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        theta: String,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Equilibrium set of the two-node game.
    TwoNode {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        theta: String,
    },
    /// Equilibrium-set shape of the two-node game over the simplex (CSV).
    TwoNodeSweep {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value_t = 100)]
        resolution: usize,
    },
    /// Round-robin best-response trajectory (CSV).
    Dynamics {
        #[command(flatten)]
        input: GameTheta,
        /// Starting allocation (JSON); zero when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = 200)]
        max_rounds: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Grid search for the best theta.
    Design {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = 200)]
        resolution: usize,
        /// Per-point sweep (CSV).
        #[arg(long)]
        sweep: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Polynomial program of the design problem (JSON).
    MpecDump {
        #[command(flatten)]
        design: DesignArgs,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Sum-of-squares upper bound on the design problem.
    SosBound {
        /// Game description; the program is built from it.
        #[arg(long, conflicts_with = "program", required_unless_present = "program")]
        game: Option<PathBuf>,
        /// Polynomial program (JSON) as written by `mpec-dump`.
        #[arg(long)]
        program: Option<PathBuf>,
        #[arg(long, default_value = "sw")]
        objective: String,
        #[arg(long, default_value_t = 0.001)]
        epsilon: f64,
        #[arg(long, default_value_t = 1)]
        level: u32,
        /// Also run the grid search and report the optimality gap.
        #[arg(long, requires = "game")]
        resolution: Option<usize>,
        #[arg(long, default_value_t = 1e-8)]
        tolerance: f64,
        #[arg(long, default_value_t = 150)]
        max_iterations: usize,
        /// Write the SDP as sparse triplets to this file.
        #[arg(long)]
        dump_sdp: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

/// Exit status for an error: 2 for invalid input, 3 when theta is outside
/// the covered region, 4 for solver failures.
pub fn exit_code(err: &CnetError) -> i32 {
    match err {
        CnetError::Validation(_)
        | CnetError::Parse { .. }
        | CnetError::PreconditionViolated { .. }
        | CnetError::DegreeTooLow(_)
        | CnetError::EmptyPolytope
        | CnetError::EmptyFeasibleGrid => 2,
        CnetError::RegionNotCovered(_) | CnetError::NonConcaveObjective(_) | CnetError::BoundaryAmbiguous(_) => 3,
        CnetError::Unbounded
        | CnetError::MaxIterations(_)
        | CnetError::DegenerateBasis
        | CnetError::NoSlaterPoint(_)
        | CnetError::NotConverged { .. }
        | CnetError::NumericalFailure(_)
        | CnetError::Lp(_) => 4,
    }
}

/// Machine-readable error record for standard error.
pub fn error_json(err: &CnetError) -> String {
    let mut body = json!({
        "kind": err.kind(),
        "message": err.to_string(),
        "exit_code": exit_code(err),
    });
    if let CnetError::Parse { line, column, .. } = err {
        body["line"] = json!(line);
        body["column"] = json!(column);
    }
    to_canonical_json(&json!({ "error": body })).expect("error record serializes")
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CnetError::Validation(format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CnetError::Validation(format!("cannot write {}: {e}", path.display())))
}

fn load_game(path: &Path) -> Result<GameInstance> {
    parse_game(&read(path)?)
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    let mut buf = Vec::new();
    writeln!(buf, "{CSV_SCHEMA}").expect("writing to memory");
    csv::Writer::from_writer(buf)
}

fn csv_row<I: IntoIterator<Item = String>>(w: &mut csv::Writer<Vec<u8>>, row: I) -> Result<()> {
    w.write_record(row.into_iter().collect::<Vec<_>>())
        .map_err(|e| CnetError::Validation(e.to_string()))
}

fn csv_finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let buf = w.into_inner().map_err(|e| CnetError::Validation(e.to_string()))?;
    Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
}

fn grid(resolution: usize) -> Result<impl Iterator<Item = (usize, usize, usize)>> {
    if resolution == 0 {
        return Err(CnetError::Validation("resolution must be >= 1".into()));
    }
    let n = resolution;
    Ok((0..=n).flat_map(move |i| (0..=n - i).map(move |j| (i, j, n - i - j))))
}

fn theta_cells(i: usize, j: usize, k: usize, n: usize) -> (ExactTheta, Vec<String>) {
    let t = ExactTheta::grid(i as i64, j as i64, k as i64, n as i64);
    let p = t.to_params();
    let cells = vec![format_float(p.theta_c), format_float(p.theta_p), format_float(p.theta_m)];
    (t, cells)
}

fn design_inputs(d: &DesignArgs) -> Result<(GameInstance, DesignObjective, ThetaEps)> {
    let game = load_game(&d.game)?;
    let g = DesignObjective::from_name(&game, &d.objective)?;
    let te = ThetaEps::for_game(&game, d.epsilon)?;
    Ok((game, g, te))
}

/// Runs one command and returns the primary artifact as text.
pub fn run(config: &RunConfig) -> Result<String> {
    let mut text = match &config.command {
        Command::Solve { input, solver } => {
            let game = load_game(&input.game)?;
            let theta = parse_theta(&input.theta)?;
            to_canonical_json(&solve_potential(&game, &theta, &solver.options()?)?)?
        }
        Command::Classify { input } => {
            let game = load_game(&input.game)?;
            let theta = parse_theta(&input.theta)?;
            to_canonical_json(&classify(&game, &theta)?)?
        }
        Command::RegionMap { game, resolution } => {
            let game = load_game(game)?;
            let gamma = gamma_exact(&game);
            let compact = transport_compact(&game)?;
            let mut w = csv_writer();
            csv_row(
                &mut w,
                [
                    "theta_c",
                    "theta_p",
                    "theta_m",
                    "is_potential_game",
                    "mm_payoff_concave_in_r",
                    "existence_guaranteed",
                    "unique_via_potential",
                    "equilibria_equal_optimizers",
                    "boundary",
                ]
                .map(String::from),
            )?;
            for (i, j, k) in grid(*resolution)? {
                let (t, mut row) = theta_cells(i, j, k, *resolution);
                let rep = classify_exact(&gamma, &t, compact);
                for flag in [
                    rep.is_potential_game,
                    rep.mm_payoff_concave_in_r,
                    rep.existence_guaranteed,
                    rep.unique_via_potential,
                    rep.equilibria_equal_optimizers,
                ] {
                    row.push(u8::from(flag).to_string());
                }
                row.push(u8::from(!rep.boundary_flags.is_empty()).to_string());
                csv_row(&mut w, row)?;
            }
            csv_finish(w)?
        }
        Command::Compare {
            instance,
            theta,
            format,
        } => {
            let inst = parse_homogeneous_instance(&read(instance)?)?;
            let theta = parse_theta(theta)?;
            let cmp = welfare_comparison(&inst, &theta)?;
            match format {
                Format::Json => to_canonical_json(&cmp)?,
                Format::Csv => {
                    let value = serde_json::to_value(&cmp).map_err(|e| CnetError::Validation(e.to_string()))?;
                    let map = value.as_object().expect("comparison is a record");
                    let mut w = csv_writer();
                    csv_row(&mut w, map.keys().cloned())?;
                    csv_row(
                        &mut w,
                        map.values().map(|v| v.as_f64().map(format_float).unwrap_or_default()),
                    )?;
                    csv_finish(w)?
                }
            }
        }
        Command::TwoNode { params, theta } => {
            let params = parse_two_node_params(&read(params)?)?;
            let theta = parse_theta(theta)?;
            let (regime, set) = r_set(&params, &theta)?;
            let equilibria = analytic_equilibria(&params, &theta)?;
            to_canonical_json(&json!({
                "regime": regime,
                "r_set": set,
                "equilibria": equilibria,
            }))?
        }
        Command::TwoNodeSweep { params, resolution } => {
            let params = parse_two_node_params(&read(params)?)?;
            let mut w = csv_writer();
            csv_row(
                &mut w,
                ["theta_c", "theta_p", "theta_m", "regime", "kind", "cardinality"].map(String::from),
            )?;
            for (i, j, k) in grid(*resolution)? {
                let (t, mut row) = theta_cells(i, j, k, *resolution);
                match r_set_exact(&params, &t) {
                    Ok((regime, set)) => {
                        let kind = match set {
                            RSet::Singleton { .. } => "singleton",
                            RSet::Finite { .. } => "finite",
                            RSet::Interval { .. } => "interval",
                            RSet::Empty => "empty",
                        };
                        let card = set.cardinality().map_or("inf".to_string(), |c| c.to_string());
                        row.extend([regime.name().to_string(), kind.to_string(), card]);
                    }
                    Err(CnetError::BoundaryAmbiguous(_)) => {
                        row.extend(["boundary".to_string(), String::new(), String::new()]);
                    }
                    Err(e) => return Err(e),
                }
                csv_row(&mut w, row)?;
            }
            csv_finish(w)?
        }
        Command::Dynamics {
            input,
            init,
            max_rounds,
            solver,
        } => {
            let game = load_game(&input.game)?;
            let theta = parse_theta(&input.theta)?;
            let init = match init {
                Some(path) => parse_allocation(&read(path)?)?,
                None => Allocation {
                    q: vec![0.0; game.num_firms()],
                    r: vec![0.0; game.num_markets()],
                    multipliers: None,
                },
            };
            let dynamics = best_response_dynamics(&game, &theta, &init, *max_rounds, &solver.options()?)?;
            let mut w = csv_writer();
            let mut header = vec!["round".to_string(), "phase".to_string()];
            header.extend((0..game.num_firms()).map(|f| format!("q{f}")));
            header.extend((0..game.num_markets()).map(|m| format!("r{m}")));
            header.push("potential".to_string());
            csv_row(&mut w, header)?;
            for step in &dynamics.trajectory {
                let phase = match step.phase {
                    Phase::Firms => "firms",
                    Phase::MarketMaker => "market_maker",
                };
                let mut row = vec![step.round.to_string(), phase.to_string()];
                row.extend(step.q.iter().chain(&step.r).map(|v| format_float(*v)));
                row.push(format_float(step.potential));
                csv_row(&mut w, row)?;
            }
            let mut out = csv_finish(w)?;
            let verdict = match &dynamics.verdict {
                Verdict::Converged { rounds } => format!("converged rounds={rounds}"),
                Verdict::Cycle { period, .. } => format!("cycle period={period}"),
                Verdict::MaxRounds => "max_rounds".to_string(),
            };
            out.push_str(&format!("# verdict={verdict}\n"));
            out
        }
        Command::Design {
            design,
            resolution,
            sweep,
            solver,
        } => {
            let (game, g, te) = design_inputs(design)?;
            let res = grid_search(&game, &g, &te, *resolution, &solver.options()?)?;
            if let Some(path) = sweep {
                let mut w = csv_writer();
                csv_row(&mut w, ["theta_c", "theta_p", "theta_m", "g_value"].map(String::from))?;
                for p in &res.points {
                    csv_row(
                        &mut w,
                        [p.theta.theta_c, p.theta.theta_p, p.theta.theta_m, p.g_value].map(format_float),
                    )?;
                }
                write_file(path, &csv_finish(w)?)?;
            }
            to_canonical_json(&json!({
                "theta_max": res.theta_max,
                "g_value": res.g_value,
                "equilibrium": res.equilibrium,
                "resolution": res.resolution,
                "feasible_points": res.points.len(),
            }))?
        }
        Command::MpecDump { design, solver } => {
            let (game, g, te) = design_inputs(design)?;
            to_canonical_json(&build_mpec(&game, &g, &te, &solver.options()?)?.program)?
        }
        Command::SosBound {
            game,
            program,
            objective,
            epsilon,
            level,
            resolution,
            tolerance,
            max_iterations,
            dump_sdp,
            solver,
        } => {
            let sdp = SdpOptions {
                tolerance: *tolerance,
                max_iterations: *max_iterations,
                ..SdpOptions::default()
            };
            let opts = solver.options()?;
            let design = match game {
                Some(path) => {
                    let args = DesignArgs {
                        game: path.clone(),
                        objective: objective.clone(),
                        epsilon: *epsilon,
                    };
                    Some(design_inputs(&args)?)
                }
                None => None,
            };
            let pp: PolyProgram = match (&design, program) {
                (Some((game, g, te)), _) => build_mpec(game, g, te, &opts)?.program,
                (None, Some(path)) => parse_poly_program(&read(path)?)?,
                (None, None) => return Err(CnetError::Validation("--game or --program is required".into())),
            };
            let relax = sos_relaxation(&pp, *level)?;
            if let Some(path) = dump_sdp {
                write_file(path, &relax.sdp.to_triplets())?;
            }
            match (&design, resolution) {
                (Some((game, g, te)), Some(n)) => {
                    let search = grid_search(game, g, te, *n, &opts)?;
                    to_canonical_json(&optimality_gap(game, g, te, *level, &search, &opts, &sdp)?)?
                }
                _ => to_canonical_json(&sdp_solve(&pp, &relax, &sdp)?)?,
            }
        }
    };
    if !text.ends_with('\n') {
        text.push('\n');
    }
    Ok(text)
}

/// Runs the command and writes its artifact to `--output` or `out`.
pub fn run_to(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let text = run(config)?;
    match &config.output {
        Some(path) => write_file(path, &text),
        None => out
            .write_all(text.as_bytes())
            .map_err(|e| CnetError::Validation(format!("cannot write output: {e}"))),
    }
}
