//! Command-line front end: mode tables, boundary estimation, transient
//! stability verdicts, raw simulation and trajectory projection.

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use nmd_tsa::boundary::{first_integral_boundary, search_boundary_sim, zubov_boundary};
use nmd_tsa::boundary::{Method, SearchConfig, ZubovSweep};
use nmd_tsa::io;
use nmd_tsa::modal::eigen_decompose;
use nmd_tsa::model::DampingCheck;
use nmd_tsa::poly::BiPoly;
use nmd_tsa::sim::run_contingency;
use nmd_tsa::tsa::{build_chain, nmd_tsa_1, nmd_tsa_2, TsaOptions, Verdict};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "nmd-tsa",
    about = "Nonlinear modal decoupling based transient stability analysis",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Truncation order of the polynomial expansion.
    #[arg(long = "order", global = true, default_value_t = 3)]
    k: usize,

    /// Boundary methods: comma-separated subset of sim,fi,zubov.
    #[arg(long, global = true, default_value = "sim,fi,zubov", value_delimiter = ',')]
    method: Vec<String>,

    /// Zubov series order.
    #[arg(long = "L", global = true, default_value_t = 16)]
    zubov_order: usize,

    /// Zubov comparison function coefficients c1,c2 (phi = c1 w1^2 + c2 w2^2).
    #[arg(long, global = true, value_delimiter = ',', num_args = 2)]
    phi: Option<Vec<f64>>,

    /// Ray count for the simulation boundary search.
    #[arg(long, global = true, default_value_t = 180)]
    rays: usize,

    /// Output directory for emitted files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Proceed on non-uniform damping by forcing the inertia-weighted mean.
    #[arg(long, global = true)]
    force_uniform_damping: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Print the electromechanical mode table of a system at its equilibrium.
    Modes(ModesArgs),
    /// Estimate per-mode stability boundaries and emit polyline files.
    Boundary(BoundaryArgs),
    /// Run a full transient stability assessment on a scenario.
    Tsa(TsaArgs),
    /// Simulate a scenario and export the post-fault trajectory.
    Simulate(SimulateArgs),
    /// Project a scenario trajectory onto decoupled mode planes.
    Project(ProjectArgs),
}

#[derive(Args)]
struct ModesArgs {
    /// System file (TOML).
    model: PathBuf,
}

#[derive(Args)]
struct BoundaryArgs {
    /// System file (TOML).
    model: PathBuf,
    /// Mode selector: "all", or comma-separated indices / frequencies in Hz
    /// (nearest match).
    #[arg(long, default_value = "all")]
    modes: String,
}

#[derive(Args)]
struct TsaArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Procedure: 1, 2a or 2b.
    #[arg(long, default_value = "1")]
    procedure: String,
    /// Mode selector for 2a/2b.
    #[arg(long, default_value = "all")]
    modes: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
}

#[derive(Args)]
struct ProjectArgs {
    /// Scenario file (TOML).
    scenario: PathBuf,
    /// Mode selector.
    #[arg(long, default_value = "all")]
    modes: String,
}

fn parse_methods(specs: &[String]) -> Result<Vec<Method>> {
    let mut out = Vec::new();
    for s in specs {
        match s.trim() {
            "sim" | "sim_search" => out.push(Method::SimSearch),
            "fi" | "first_integral" => out.push(Method::FirstIntegral),
            "zubov" => out.push(Method::Zubov),
            other => return Err(anyhow!("unknown method `{other}` (use sim, fi, zubov)")),
        }
    }
    Ok(out)
}

fn options_from(cli: &Cli) -> Result<TsaOptions> {
    if cli.k < 2 {
        return Err(anyhow!("--order must be >= 2"));
    }
    if cli.zubov_order < 2 {
        return Err(anyhow!("--L must be >= 2"));
    }
    let mut opts = TsaOptions {
        k: cli.k,
        methods: parse_methods(&cli.method)?,
        zubov_order: cli.zubov_order,
        force_uniform_damping: cli.force_uniform_damping,
        ..TsaOptions::default()
    };
    opts.search = SearchConfig {
        rays: cli.rays,
        ..SearchConfig::default()
    };
    if let Some(c) = &cli.phi {
        opts.zubov_phi = BiPoly::from_terms([((2, 0), c[0]), ((0, 2), c[1])]);
    }
    Ok(opts)
}

/// Resolve a mode selector against the mode table.
fn select(selector: &str, modes: &nmd_tsa::modal::ModeSet) -> Result<Vec<usize>> {
    if selector.trim() == "all" {
        return Ok((0..modes.n_modes()).collect());
    }
    let mut out = Vec::new();
    for part in selector.split(',') {
        let part = part.trim();
        if let Ok(idx) = part.parse::<usize>() {
            if idx >= modes.n_modes() {
                return Err(anyhow!("mode index {idx} out of range"));
            }
            out.push(idx);
            continue;
        }
        let f: f64 = part
            .parse()
            .map_err(|_| anyhow!("mode selector `{part}` is neither an index nor a frequency"))?;
        let best = modes
            .modes
            .iter()
            .min_by(|a, b| {
                (a.frequency_hz - f)
                    .abs()
                    .partial_cmp(&(b.frequency_hz - f).abs())
                    .unwrap()
            })
            .ok_or_else(|| anyhow!("no modes"))?;
        out.push(best.index);
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn load_system_at(path: &Path) -> Result<(nmd_tsa::model::ClassicalSystem, Vec<f64>)> {
    let loaded = io::load_system(path).with_context(|| format!("loading {}", path.display()))?;
    let m = loaded.system.m();
    let guess = loaded.delta0.unwrap_or_else(|| vec![0.0; m]);
    Ok((loaded.system, guess))
}

fn equilibrium_modes(
    sys: &nmd_tsa::model::ClassicalSystem,
    guess: &[f64],
    force_uniform: bool,
) -> Result<(
    nmd_tsa::model::ClassicalSystem,
    Vec<f64>,
    nmd_tsa::modal::ModeSet,
)> {
    let sys = match sys.check_uniform_damping(1e-6) {
        DampingCheck::Uniform { .. } => sys.clone(),
        DampingCheck::Violation { spread, .. } => {
            if !force_uniform {
                return Err(anyhow!(
                    "damping ratio spread {spread:.3e} exceeds tolerance; rerun with --force-uniform-damping"
                ));
            }
            eprintln!("warning: forcing uniform damping (inertia-weighted mean)");
            sys.force_uniform_damping().0
        }
    };
    let eq = sys.find_equilibrium(guess)?;
    if !eq.is_stable {
        eprintln!("warning: equilibrium flagged unstable");
    }
    let ms = eigen_decompose(&sys.jacobian(&eq.delta))?;
    Ok((sys, eq.delta, ms))
}

fn cmd_modes(cli: &Cli, args: &ModesArgs) -> Result<()> {
    let (sys, guess) = load_system_at(&args.model)?;
    let (_, _, ms) = equilibrium_modes(&sys, &guess, cli.force_uniform_damping)?;
    print!("{}", ms.report());
    Ok(())
}

fn cmd_boundary(cli: &Cli, args: &BoundaryArgs) -> Result<()> {
    let opts = options_from(cli)?;
    let (sys, guess) = load_system_at(&args.model)?;
    let (sys, _, ms) = equilibrium_modes(&sys, &guess, cli.force_uniform_damping)?;
    let wanted = select(&args.modes, &ms)?;
    let (_, oscillators, _) = build_chain(&sys, Some(&wanted), &opts)?;
    std::fs::create_dir_all(&cli.out)?;
    for osc in &oscillators {
        for meth in &opts.methods {
            let est = match meth {
                Method::SimSearch => search_boundary_sim(osc, &opts.search)?,
                Method::FirstIntegral => first_integral_boundary(osc)?,
                Method::Zubov => zubov_boundary(
                    osc,
                    &opts.zubov_phi,
                    opts.zubov_order,
                    &ZubovSweep::default(),
                )?,
            };
            let path = cli.out.join(format!(
                "boundary_mode{}_{}.csv",
                osc.mode_index,
                meth.label()
            ));
            std::fs::write(&path, est.export_text())?;
            println!(
                "mode {} [{}]: critical={:?} -> {}",
                osc.mode_index,
                meth.label(),
                est.critical_value,
                path.display()
            );
        }
        let dump = cli
            .out
            .join(format!("oscillator_mode{}.txt", osc.mode_index));
        std::fs::write(&dump, osc.dump())?;
    }
    Ok(())
}

fn cmd_tsa(cli: &Cli, args: &TsaArgs) -> Result<i32> {
    let opts = options_from(cli)?;
    let scn = io::load_scenario(&args.scenario)
        .with_context(|| format!("loading {}", args.scenario.display()))?;
    let report = match args.procedure.as_str() {
        "1" => nmd_tsa_1(&scn.postfault, &scn, &opts)?,
        "2a" | "2b" => {
            let m = scn.postfault.m();
            let (sys2, _, ms) =
                equilibrium_modes(&scn.postfault, &vec![0.0; m], cli.force_uniform_damping)?;
            let wanted = select(&args.modes, &ms)?;
            nmd_tsa_2(&sys2, &scn, &wanted, &opts, args.procedure == "2b")?
        }
        other => return Err(anyhow!("unknown procedure `{other}` (use 1, 2a, 2b)")),
    };
    std::fs::create_dir_all(&cli.out)?;
    std::fs::write(cli.out.join("tsa_report.txt"), report.render_text())?;
    std::fs::write(
        cli.out.join("tsa_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    for m in &report.modes {
        for b in &m.boundaries {
            let path = cli.out.join(format!(
                "boundary_mode{}_{}.csv",
                m.mode_index,
                b.method.label()
            ));
            std::fs::write(path, b.export_text())?;
        }
        let mut traj_txt =
            String::from("# projected trajectory (w1, w2); NaN = unprojectable\nt, w1, w2\n");
        for (i, w) in m.projected.w.iter().enumerate() {
            traj_txt.push_str(&format!(
                "{:.6}, {:.9e}, {:.9e}\n",
                m.projected.times[i], w[0], w[1]
            ));
        }
        std::fs::write(
            cli.out.join(format!("projection_mode{}.csv", m.mode_index)),
            traj_txt,
        )?;
    }
    println!("{}", report.render_text());
    Ok(match report.overall {
        Verdict::Stable => 0,
        Verdict::Unstable => 2,
        Verdict::Indeterminate => 3,
    })
}

fn cmd_simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let scn = io::load_scenario(&args.scenario)?;
    let traj = run_contingency(&scn)?;
    std::fs::create_dir_all(&cli.out)?;
    let path = cli.out.join("trajectory.csv");
    std::fs::write(&path, traj.export_text())?;
    println!(
        "post-fault segment: {} samples, diverged: {}\n-> {}",
        traj.len(),
        traj.diverged(),
        path.display()
    );
    Ok(())
}

fn cmd_project(cli: &Cli, args: &ProjectArgs) -> Result<()> {
    let opts = options_from(cli)?;
    let scn = io::load_scenario(&args.scenario)?;
    let m = scn.postfault.m();
    let (sys, _, ms) = equilibrium_modes(&scn.postfault, &vec![0.0; m], cli.force_uniform_damping)?;
    let wanted = select(&args.modes, &ms)?;
    let (chain, _, _) = build_chain(&sys, Some(&wanted), &opts)?;
    let traj = run_contingency(&scn)?;
    std::fs::create_dir_all(&cli.out)?;
    for &mi in &wanted {
        let proj = nmd_tsa::nmd::project_trajectory(&chain, &traj, mi)?;
        let mut txt = String::from("# projected trajectory; NaN = unprojectable\nt, w1, w2\n");
        for (i, w) in proj.w.iter().enumerate() {
            txt.push_str(&format!("{:.6}, {:.9e}, {:.9e}\n", proj.times[i], w[0], w[1]));
        }
        let path = cli.out.join(format!("projection_mode{mi}.csv"));
        std::fs::write(&path, txt)?;
        println!("mode {mi} -> {}", path.display());
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Modes(a) => cmd_modes(&cli, a).map(|_| 0),
        Command::Boundary(a) => cmd_boundary(&cli, a).map(|_| 0),
        Command::Tsa(a) => cmd_tsa(&cli, a),
        Command::Simulate(a) => cmd_simulate(&cli, a).map(|_| 0),
        Command::Project(a) => cmd_project(&cli, a).map(|_| 0),
    };
    match code {
        Ok(c) => std::process::exit(c),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}
