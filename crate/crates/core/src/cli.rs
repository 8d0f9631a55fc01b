//! Command-line front end. Every subcommand reads files, writes its results
//! into the output directory and prints a short summary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cloop::{saturation_report, simulate_closed_loop, LoopConfigDoc, LoopDoc, PlantMatrix};
use crate::linss::{reduce_dae, transfer_at, DaeJacobians, StateSpaceModel};
use crate::lti::{TimeSeries, TransferFunction};
use crate::pairing::{
    pair_assignment, pair_sequential, rga, ria, write_labelled_csv, GainMatrix, PairingResult,
};
use crate::simc::{tune_loop, TauC, TuningReport};
use crate::sysid::{
    fit_battery, fit_sopdt, initial_guess, run_step_battery, NormalizedStep, PairFits, StepBattery,
    StepExperiment,
};
use crate::{plot, reference, Error, Result};

#[derive(Debug, Parser)]
#[command(
    name = "pyrotune",
    version,
    about = "Linearize, identify, pair, tune and simulate decentralized PI control"
)]
pub struct Cli {
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write SVG plots.
    #[arg(long, global = true)]
    pub plots: bool,
    /// Seed for measurement noise.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Project file with default paths and options.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sequential,
    Assignment,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Reduce DAE Jacobians to a state-space model and its gain matrix.
    Linearize {
        jacobians: PathBuf,
        /// Evaluate the gain at this frequency in rad/s instead of 0.
        #[arg(long)]
        frequency: Option<f64>,
    },
    /// Run relative step tests on a plant and record the responses.
    Step {
        plant: Option<PathBuf>,
        /// Experiment file; planned from the plant models when absent.
        #[arg(long)]
        experiment: Option<PathBuf>,
        /// Step only this MV.
        #[arg(long)]
        mv: Option<String>,
        /// Gaussian noise, relative to the largest normalized response.
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Fit second-order models with delay to step data. The input is a plant
    /// file (step tests are run first) or a CSV of normalized step data.
    Fit {
        input: Option<PathBuf>,
        #[arg(long)]
        experiment: Option<PathBuf>,
        /// Data column of a CSV input; the first one by default.
        #[arg(long)]
        column: Option<String>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Relative gain array, relative interaction array and pairing. The input
    /// is a gain CSV, a state-space file or a plant file.
    Rga {
        input: PathBuf,
        #[arg(long, value_enum)]
        method: Option<Method>,
        /// rad/s; only for state-space and plant inputs.
        #[arg(long)]
        frequency: Option<f64>,
        /// The CSV already holds relative gains; pair on them directly.
        #[arg(long)]
        lambda: bool,
    },
    /// PI gains for one model file or for pairs of a plant file.
    Tune {
        input: Option<PathBuf>,
        /// Seconds, or "recommended" for the effective delay.
        #[arg(long)]
        tau_c: Option<TauC>,
        /// Loop as CV/MV; repeatable. Defaults to the sequential pairing.
        #[arg(long = "pair")]
        pairs: Vec<String>,
    },
    /// Closed-loop simulation of a plant under a loop configuration.
    Simulate {
        plant: Option<PathBuf>,
        loops: Option<PathBuf>,
    },
    /// Step tests, fits, pairing, tuning and closed-loop simulation.
    Pipeline {
        plant: Option<PathBuf>,
        #[arg(long)]
        tau_c: Option<TauC>,
        #[arg(long)]
        noise: Option<f64>,
    },
}

/// Defaults shared by subcommands. Relative paths are taken from the
/// directory of the project file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub plant: Option<PathBuf>,
    #[serde(default)]
    pub loops: Option<PathBuf>,
    #[serde(default)]
    pub experiment: Option<PathBuf>,
    #[serde(default)]
    pub tau_c: Option<TauC>,
    #[serde(default)]
    pub method: Option<Method>,
    #[serde(default)]
    pub noise: Option<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: ProjectConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for (field, p) in [
            ("plant", &mut cfg.plant),
            ("loops", &mut cfg.loops),
            ("experiment", &mut cfg.experiment),
        ] {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
                if !p.exists() {
                    return Err(Error::validation(
                        field,
                        format!("{} does not exist", p.display()),
                    ));
                }
            }
        }
        if let Some(out) = &mut cfg.out {
            if out.is_relative() {
                *out = base.join(&*out);
            }
        }
        Ok(cfg)
    }
}

struct Context {
    out: PathBuf,
    plots: bool,
    seed: u64,
    project: ProjectConfig,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    fn write_series(&self, name: &str, ts: &TimeSeries) -> Result<PathBuf> {
        let mut buf = Vec::new();
        ts.write_csv(&mut buf)?;
        self.write_text(name, std::str::from_utf8(&buf).expect("csv is utf-8"))
    }

    fn required(
        &self,
        arg: Option<PathBuf>,
        from_config: &Option<PathBuf>,
        field: &str,
    ) -> Result<PathBuf> {
        arg.or_else(|| from_config.clone()).ok_or_else(|| {
            Error::validation(
                field,
                "no file given on the command line or in the project file",
            )
        })
    }

    fn noise(&self, arg: Option<f64>) -> Result<f64> {
        let v = arg.or(self.project.noise).unwrap_or(0.0);
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::validation("noise", "must be a non-negative number"));
        }
        Ok(v)
    }
}

pub fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .try_init();
}

/// Runs the parsed command line and returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let project = match &cli.config {
        Some(p) => ProjectConfig::load(p)?,
        None => ProjectConfig::default(),
    };
    let ctx = Context {
        out: cli
            .out
            .clone()
            .or_else(|| project.out.clone())
            .unwrap_or_else(|| PathBuf::from(".")),
        plots: cli.plots,
        seed: cli.seed.or(project.seed).unwrap_or(0),
        project,
    };
    fs::create_dir_all(&ctx.out).map_err(|e| Error::io(&ctx.out, e))?;
    match cli.command {
        Command::Linearize {
            jacobians,
            frequency,
        } => cmd_linearize(&ctx, &jacobians, frequency),
        Command::Step {
            plant,
            experiment,
            mv,
            noise,
        } => {
            let plant = ctx.required(plant, &ctx.project.plant, "plant")?;
            let exp = experiment.or_else(|| ctx.project.experiment.clone());
            cmd_step(
                &ctx,
                &plant,
                exp.as_deref(),
                mv.as_deref(),
                ctx.noise(noise)?,
            )
        }
        Command::Fit {
            input,
            experiment,
            column,
            noise,
        } => {
            let input = ctx.required(input, &ctx.project.plant, "input")?;
            let exp = experiment.or_else(|| ctx.project.experiment.clone());
            cmd_fit(
                &ctx,
                &input,
                exp.as_deref(),
                column.as_deref(),
                ctx.noise(noise)?,
            )
        }
        Command::Rga {
            input,
            method,
            frequency,
            lambda,
        } => {
            let method = method.or(ctx.project.method).unwrap_or(Method::Sequential);
            cmd_rga(&ctx, &input, method, frequency, lambda)
        }
        Command::Tune {
            input,
            tau_c,
            pairs,
        } => {
            let input = ctx.required(input, &ctx.project.plant, "input")?;
            let tau_c = tau_c.or(ctx.project.tau_c).unwrap_or(TauC::Recommended);
            cmd_tune(&ctx, &input, tau_c, &pairs)
        }
        Command::Simulate { plant, loops } => {
            let plant = ctx.required(plant, &ctx.project.plant, "plant")?;
            let loops = ctx.required(loops, &ctx.project.loops, "loops")?;
            cmd_simulate(&ctx, &plant, &loops)
        }
        Command::Pipeline {
            plant,
            tau_c,
            noise,
        } => {
            let plant = ctx.required(plant, &ctx.project.plant, "plant")?;
            let tau_c = tau_c.or(ctx.project.tau_c).unwrap_or(TauC::Recommended);
            cmd_pipeline(&ctx, &plant, tau_c, ctx.noise(noise)?)
        }
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn gain_file_name(omega: f64) -> &'static str {
    if omega == 0.0 {
        "dc_gain.csv"
    } else {
        "gain.csv"
    }
}

fn write_gain(ctx: &Context, name: &str, corner: &str, g: &GainMatrix) -> Result<PathBuf> {
    let mut buf = Vec::new();
    write_labelled_csv(&mut buf, corner, &g.cv_names, &g.mv_names, &g.values)?;
    ctx.write_text(name, std::str::from_utf8(&buf).expect("csv is utf-8"))
}

fn cmd_linearize(ctx: &Context, path: &Path, frequency: Option<f64>) -> Result<()> {
    let jac: DaeJacobians = read_json(path)?;
    let dims = jac.dims()?;
    if dims.inputs == 0 || dims.outputs == 0 {
        return Err(Error::validation(
            "jacobians",
            "need at least one input and one output",
        ));
    }
    let ss = reduce_dae(&jac)?;
    let omega = frequency.unwrap_or(0.0);
    let gain = GainMatrix::new(
        ss.output_names.clone(),
        ss.input_names.clone(),
        transfer_at(&ss, Complex64::new(0.0, omega))?,
        omega,
    )?;
    ctx.write_json("state_space.json", &ss)?;
    write_gain(ctx, gain_file_name(omega), "output", &gain)?;
    println!(
        "{} states, {} inputs, {} outputs; gain at {} rad/s written",
        ss.states(),
        ss.inputs(),
        ss.outputs(),
        omega
    );
    Ok(())
}

/// Step tests per MV. Without an experiment file each MV gets its own
/// planned experiment sized from the models in its column.
pub fn plan_batteries(
    plant: &PlantMatrix,
    experiment: Option<&StepExperiment>,
    mv: Option<&str>,
) -> Result<Vec<StepBattery>> {
    let mvs: Vec<usize> = match mv.or(experiment.and_then(|e| e.mv.as_deref())) {
        Some(name) => vec![plant.mv_index(name)?],
        None => (0..plant.mv_names().len()).collect(),
    };
    mvs.into_iter()
        .map(|j| {
            let mut exp = match experiment {
                Some(e) => e.clone(),
                None => StepExperiment::planned(
                    (0..plant.cv_names().len()).filter_map(|i| plant.entry(i, j)),
                ),
            };
            exp.mv = Some(plant.mv_names()[j].clone());
            run_step_battery(plant, &exp)
        })
        .collect()
}

fn add_noise(batteries: &mut [StepBattery], rel: f64, seed: u64) {
    if rel == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for b in batteries {
        for r in &mut b.steps {
            r.data = r.data.with_noise(rel, &mut rng);
        }
    }
}

fn write_batteries(ctx: &Context, plant: &PlantMatrix, batteries: &[StepBattery]) -> Result<()> {
    let (q, p) = (plant.cv_names().len(), plant.mv_names().len());
    let mut resp = nalgebra::DMatrix::from_element(q, p, Complex64::new(f64::NAN, 0.0));
    for b in batteries {
        let rel = b.responsiveness()?;
        for (j, series) in &b.raw {
            ctx.write_series(&format!("steps/{}.csv", plant.mv_names()[*j]), series)?;
            for i in 0..q {
                resp[(i, *j)] = Complex64::new(rel[i][*j], 0.0);
            }
        }
    }
    let mut buf = Vec::new();
    write_labelled_csv(&mut buf, "cv", plant.cv_names(), plant.mv_names(), &resp)?;
    ctx.write_text(
        "responsiveness.csv",
        std::str::from_utf8(&buf).expect("csv is utf-8"),
    )?;
    Ok(())
}

fn load_experiment(path: Option<&Path>) -> Result<Option<StepExperiment>> {
    path.map(read_json).transpose()
}

fn cmd_step(
    ctx: &Context,
    plant: &Path,
    experiment: Option<&Path>,
    mv: Option<&str>,
    noise: f64,
) -> Result<()> {
    let plant = PlantMatrix::load(plant)?;
    let exp = load_experiment(experiment)?;
    let batteries = plan_batteries(&plant, exp.as_ref(), mv)?;
    write_batteries(ctx, &plant, &batteries)?;
    if noise > 0.0 {
        info!("noise applies to fitting only; raw recordings are noise-free");
    }
    println!("{} MVs stepped", batteries.len());
    Ok(())
}

/// Plant of the mean fitted models with the steady state of `plant`.
fn fitted_plant(plant: &PlantMatrix, fits: &[PairFits]) -> Result<PlantMatrix> {
    let (q, p) = (plant.cv_names().len(), plant.mv_names().len());
    let mut entries: Vec<Vec<Option<TransferFunction>>> = vec![vec![None; p]; q];
    for f in fits {
        entries[plant.cv_index(&f.cv)?][plant.mv_index(&f.mv)?] = Some(f.mean.clone());
    }
    PlantMatrix::new(
        plant.cv_names().to_vec(),
        plant.mv_names().to_vec(),
        entries,
        plant.u_ss().to_vec(),
        plant.z_ss().to_vec(),
    )
}

fn fit_all(batteries: &[StepBattery]) -> Result<Vec<PairFits>> {
    let mut fits = Vec::new();
    for b in batteries {
        fits.extend(fit_battery(b, None)?);
    }
    Ok(fits)
}

fn cmd_fit(
    ctx: &Context,
    input: &Path,
    experiment: Option<&Path>,
    column: Option<&str>,
    noise: f64,
) -> Result<()> {
    if input
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        let file = fs::File::open(input).map_err(|e| Error::io(input, e))?;
        let ts = TimeSeries::read_csv(file)?;
        let name = match column {
            Some(c) => c.to_string(),
            None => ts
                .channel_names()
                .first()
                .map(|s| s.to_string())
                .ok_or_else(|| Error::validation("column", "CSV has no data column"))?,
        };
        let s = ts
            .channel(&name)
            .ok_or_else(|| Error::validation("column", format!("no column {name:?}")))?;
        let mut data = NormalizedStep::new(ts.t().to_vec(), s.to_vec())?;
        if noise > 0.0 {
            data = data.with_noise(noise, &mut ChaCha8Rng::seed_from_u64(ctx.seed));
        }
        let fit = fit_sopdt(&data, &initial_guess(&data)?)?;
        ctx.write_json("fit.json", &fit)?;
        println!(
            "k0 = {}, poles = {:?}, zeros = {:?}, delay = {} s, rms = {:e}",
            fit.model.k0(),
            fit.model.poles(),
            fit.model.zeros(),
            fit.model.delay(),
            fit.residual_norm
        );
        return Ok(());
    }
    let plant = PlantMatrix::load(input)?;
    let exp = load_experiment(experiment)?;
    let mut batteries = plan_batteries(&plant, exp.as_ref(), None)?;
    add_noise(&mut batteries, noise, ctx.seed);
    let fits = fit_all(&batteries)?;
    ctx.write_json("fits.json", &fits)?;
    ctx.write_text(
        "models.json",
        &(fitted_plant(&plant, &fits)?.to_json() + "\n"),
    )?;
    for f in &fits {
        let flag = if f.sign_flip {
            " (gain changes sign between steps)"
        } else {
            ""
        };
        println!("{}/{}: k0 = {}{}", f.cv, f.mv, f.mean.k0(), flag);
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct NamedPair<'a> {
    cv: &'a str,
    mv: &'a str,
    lambda: [f64; 2],
    phi: [Option<f64>; 2],
    negative_lambda: bool,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

fn pairing_json(g: &GainMatrix, res: &PairingResult) -> serde_json::Value {
    let pairs: Vec<NamedPair> = res
        .pairs
        .iter()
        .map(|p| NamedPair {
            cv: &g.cv_names[p.cv],
            mv: &g.mv_names[p.mv],
            lambda: [p.lambda.re, p.lambda.im],
            phi: [finite(p.phi.re), finite(p.phi.im)],
            negative_lambda: p.negative_lambda,
        })
        .collect();
    serde_json::json!({
        "method": res.method,
        "frequency": g.frequency,
        "total_interaction": res.total_interaction(),
        "pairs": pairs,
    })
}

fn load_gain(input: &Path, frequency: Option<f64>) -> Result<GainMatrix> {
    if input
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
    {
        if frequency.is_some_and(|w| w != 0.0) {
            return Err(Error::validation(
                "frequency",
                "a gain CSV is already evaluated; use a model file",
            ));
        }
        let file = fs::File::open(input).map_err(|e| Error::io(input, e))?;
        return GainMatrix::read_csv(file, 0.0);
    }
    let omega = frequency.unwrap_or(0.0);
    let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("A").is_some() {
        let ss: StateSpaceModel = serde_json::from_value(value)?;
        ss.validate()?;
        GainMatrix::from_state_space(&ss, omega)
    } else if value.get("entries").is_some() {
        GainMatrix::from_plant(&PlantMatrix::from_json(&text)?, omega)
    } else {
        Err(Error::validation(
            "input",
            "expected a gain CSV, a state-space file or a plant file",
        ))
    }
}

fn pair(phi: &nalgebra::DMatrix<Complex64>, method: Method) -> Result<PairingResult> {
    match method {
        Method::Sequential => pair_sequential(phi),
        Method::Assignment => pair_assignment(phi),
    }
}

fn rga_outputs(ctx: &Context, g: &GainMatrix, method: Method) -> Result<PairingResult> {
    pairing_outputs(ctx, g, rga(&g.values)?, method)
}

fn pairing_outputs(
    ctx: &Context,
    g: &GainMatrix,
    lambda: nalgebra::DMatrix<Complex64>,
    method: Method,
) -> Result<PairingResult> {
    let phi = ria(&lambda);
    let res = pair(&phi, method)?;
    write_gain(
        ctx,
        "lambda.csv",
        "cv",
        &GainMatrix {
            values: lambda,
            ..g.clone()
        },
    )?;
    let mut buf = Vec::new();
    write_labelled_csv(&mut buf, "cv", &g.cv_names, &g.mv_names, &phi)?;
    ctx.write_text("phi.csv", std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    ctx.write_json("pairing.json", &pairing_json(g, &res))?;
    Ok(res)
}

fn cmd_rga(
    ctx: &Context,
    input: &Path,
    method: Method,
    frequency: Option<f64>,
    given: bool,
) -> Result<()> {
    let g = load_gain(input, frequency)?;
    let res = if given {
        if !input
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
        {
            return Err(Error::validation(
                "lambda",
                "relative gains are read from a CSV",
            ));
        }
        pairing_outputs(ctx, &g, g.values.clone(), method)?
    } else {
        rga_outputs(ctx, &g, method)?
    };
    for p in &res.pairs {
        let warn = if p.negative_lambda {
            "  negative relative gain"
        } else {
            ""
        };
        println!(
            "{} <- {}  lambda = {}  phi = {}{}",
            g.cv_names[p.cv], g.mv_names[p.mv], p.lambda, p.phi, warn
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct LoopTuning {
    cv: String,
    mv: String,
    report: TuningReport,
}

fn parse_pair(plant: &PlantMatrix, spec: &str) -> Result<(usize, usize)> {
    let (cv, mv) = spec
        .split_once('/')
        .ok_or_else(|| Error::validation("pair", format!("{spec:?} is not CV/MV")))?;
    Ok((plant.cv_index(cv)?, plant.mv_index(mv)?))
}

fn tune_pairs(
    plant: &PlantMatrix,
    pairs: &[(usize, usize)],
    tau_c: TauC,
) -> Result<Vec<LoopTuning>> {
    pairs
        .iter()
        .map(|&(i, j)| {
            let (cv, mv) = (&plant.cv_names()[i], &plant.mv_names()[j]);
            let g = plant
                .entry(i, j)
                .ok_or_else(|| Error::validation("pair", format!("no model for {cv}/{mv}")))?;
            Ok(LoopTuning {
                cv: cv.clone(),
                mv: mv.clone(),
                report: tune_loop(g, tau_c)?,
            })
        })
        .collect()
}

fn write_tuning(ctx: &Context, tunings: &[LoopTuning]) -> Result<()> {
    ctx.write_json("tuning.json", &tunings)?;
    let text: String = tunings
        .iter()
        .map(|t| t.report.render(&format!("{} <- {}", t.cv, t.mv)))
        .collect::<Vec<_>>()
        .join("\n");
    ctx.write_text("tuning.txt", &text)?;
    print!("{text}");
    Ok(())
}

/// Loop file for the tuned pairs with a `+1 %` setpoint step per loop at
/// staggered times over the reference horizon.
fn loops_for(plant: &PlantMatrix, tunings: &[LoopTuning]) -> Result<LoopConfigDoc> {
    let mut setpoints = std::collections::BTreeMap::new();
    for (k, t) in tunings.iter().enumerate() {
        let z = plant.z_ss()[plant.cv_index(&t.cv)?];
        setpoints.insert(
            t.cv.clone(),
            vec![(
                reference::setpoint_time(k),
                z * (1.0 + reference::SETPOINT_STEP),
            )],
        );
    }
    Ok(LoopConfigDoc {
        dt: reference::FIXTURE_DT,
        horizon: reference::FIXTURE_HORIZON,
        record_every: reference::FIXTURE_RECORD_EVERY,
        loops: tunings
            .iter()
            .map(|t| LoopDoc {
                cv: t.cv.clone(),
                mv: t.mv.clone(),
                kp: t.report.gains.kp,
                ki: t.report.gains.ki,
                u_min: None,
                u_max: None,
            })
            .collect(),
        setpoints,
        disturbances: Default::default(),
    })
}

fn cmd_tune(ctx: &Context, input: &Path, tau_c: TauC, pair_specs: &[String]) -> Result<()> {
    let text = fs::read_to_string(input).map_err(|e| Error::io(input, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    if value.get("entries").is_none() {
        let g: TransferFunction = serde_json::from_value(value)?;
        let report = tune_loop(&g, tau_c)?;
        ctx.write_json("tuning.json", &report)?;
        let text = report.render("model");
        ctx.write_text("tuning.txt", &text)?;
        print!("{text}");
        return Ok(());
    }
    let plant = PlantMatrix::from_json(&text)?;
    let pairs: Vec<(usize, usize)> = if pair_specs.is_empty() {
        let g = GainMatrix::from_plant(&plant, 0.0)?;
        pair_sequential(&ria(&rga(&g.values)?))?
            .pairs
            .iter()
            .map(|p| (p.cv, p.mv))
            .collect()
    } else {
        pair_specs
            .iter()
            .map(|s| parse_pair(&plant, s))
            .collect::<Result<_>>()?
    };
    let tunings = tune_pairs(&plant, &pairs, tau_c)?;
    write_tuning(ctx, &tunings)?;
    ctx.write_json("loops.json", &loops_for(&plant, &tunings)?)?;
    Ok(())
}

fn simulate_outputs(ctx: &Context, plant: &PlantMatrix, doc: &LoopConfigDoc) -> Result<()> {
    let cfg = doc.resolve(plant)?;
    let trace = simulate_closed_loop(plant, &cfg)?;
    ctx.write_series("trace.csv", &trace)?;
    let report = saturation_report(&trace, plant, &cfg)?;
    ctx.write_json("saturation.json", &report)?;
    if ctx.plots {
        let cv_groups: Vec<(String, Vec<String>)> = plant
            .cv_names()
            .iter()
            .map(|cv| {
                (
                    cv.clone(),
                    vec![cv.clone(), crate::cloop::setpoint_channel(cv)],
                )
            })
            .collect();
        let mv_groups: Vec<(String, Vec<String>)> = plant
            .mv_names()
            .iter()
            .map(|mv| (mv.clone(), vec![mv.clone()]))
            .collect();
        ctx.write_text("cvs.svg", &plot::stacked_chart(&trace, &cv_groups))?;
        ctx.write_text("mvs.svg", &plot::stacked_chart(&trace, &mv_groups))?;
    }
    for l in &report {
        if !l.intervals.is_empty() {
            println!("{} at a limit in {} interval(s)", l.mv, l.intervals.len());
        }
    }
    println!("{} samples written", trace.len());
    Ok(())
}

fn cmd_simulate(ctx: &Context, plant: &Path, loops: &Path) -> Result<()> {
    let plant = PlantMatrix::load(plant)?;
    let doc = LoopConfigDoc::load(loops)?;
    simulate_outputs(ctx, &plant, &doc)
}

fn cmd_pipeline(ctx: &Context, plant_path: &Path, tau_c: TauC, noise: f64) -> Result<()> {
    let plant = PlantMatrix::load(plant_path).map_err(|e| e.in_stage("load"))?;

    let mut batteries = plan_batteries(&plant, None, None).map_err(|e| e.in_stage("step"))?;
    write_batteries(ctx, &plant, &batteries).map_err(|e| e.in_stage("step"))?;
    add_noise(&mut batteries, noise, ctx.seed);

    let fits = fit_all(&batteries).map_err(|e| e.in_stage("fit"))?;
    let fitted = fitted_plant(&plant, &fits).map_err(|e| e.in_stage("fit"))?;
    ctx.write_json("fits.json", &fits)?;
    ctx.write_text("models.json", &(fitted.to_json() + "\n"))?;

    let gain = GainMatrix::from_plant(&fitted, 0.0).map_err(|e| e.in_stage("rga"))?;
    let pairing = rga_outputs(ctx, &gain, Method::Sequential).map_err(|e| e.in_stage("rga"))?;
    let pairs: Vec<(usize, usize)> = pairing.pairs.iter().map(|p| (p.cv, p.mv)).collect();

    let tunings = tune_pairs(&fitted, &pairs, tau_c).map_err(|e| e.in_stage("tune"))?;
    write_tuning(ctx, &tunings)?;
    let loops = loops_for(&plant, &tunings).map_err(|e| e.in_stage("tune"))?;
    ctx.write_json("loops.json", &loops)?;

    simulate_outputs(ctx, &plant, &loops).map_err(|e| e.in_stage("simulate"))?;
    Ok(())
}
