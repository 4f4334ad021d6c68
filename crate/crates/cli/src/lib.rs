//! Command-line front end: spec ingestion, command dispatch, report and
//! waveform emission.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use converter_forge::cascade::{compose_with_parasitics, evaluate, measure_steady_state};
use converter_forge::circuit::{StageParameters, SwitchedCircuit};
use converter_forge::losses::stage_losses;
use converter_forge::simulator::{
    recorded_signals, run_to_steady_state, run_with_transient, write_csv_header, write_csv_row,
};
use converter_forge::sizing::design_stage;
use converter_forge::Error;

pub mod report;
pub mod spec;
pub mod sweep;
mod table;

use report::{CascadeJson, DesignReport, LossReport, SimulationReport, StageDesign, StageLosses};
use spec::SpecDocument;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) | CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

fn core_error(e: Error) -> CliError {
    match e {
        Error::Diverged { .. } => CliError::Numerical(e.to_string()),
        _ => CliError::Validation(e.to_string()),
    }
}

fn io_error(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Design, simulate and cost SEPIC and inverting buck-boost converter stages.
#[derive(Debug, Parser)]
#[command(name = "converter-forge", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Size every stage of a spec.
    Design {
        spec: PathBuf,
        /// Write the report here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print an aligned table instead of JSON.
        #[arg(long)]
        pretty: bool,
    },
    /// Run one stage to periodic steady state and measure it.
    Simulate {
        spec: PathBuf,
        /// Stage to simulate, counted from 1.
        #[arg(long, default_value_t = 1)]
        stage: usize,
        /// Write the recorded waveforms as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Number of final periods to record.
        #[arg(long, default_value_t = 1)]
        cycles: usize,
        /// Write every sample from t = 0 to the CSV, start-up included.
        #[arg(long, requires = "csv")]
        full_transient: bool,
    },
    /// Closed-form conduction losses and efficiency.
    Losses {
        spec: PathBuf,
        /// Only this stage, counted from 1.
        #[arg(long)]
        stage: Option<usize>,
    },
    /// Evaluate the whole chain: design, simulation, losses and power ratios.
    Cascade { spec: PathBuf },
    /// Simulate one stage over a range of one parameter; CSV output.
    Sweep {
        spec: PathBuf,
        /// stage.<N>.<field>, e.g. stage.3.inductance_factor or stage.1.parasitics.r_l_ohms
        #[arg(long)]
        param: String,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        /// Defaults to --from.
        #[arg(long, allow_negative_numbers = true)]
        to: Option<f64>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
        points: u64,
        /// <signal>.<mean|rms|peak_to_peak|min|max>, conduction_mode or converged; repeatable.
        #[arg(long = "metric")]
        metrics: Vec<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Whether the command's simulations all reached steady state.
pub enum Status {
    Done,
    NotConverged,
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(io_error(path)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(format!("standard output: {e}"))),
    }
}

fn cmd_design(spec: &Path, out: Option<&Path>, pretty: bool) -> Result<Status, CliError> {
    let doc = SpecDocument::load(spec)?;
    let stages = doc
        .stage_specs()?
        .iter()
        .enumerate()
        .map(|(k, (s, _))| {
            let design = design_stage(s)
                .map_err(|e| CliError::Validation(format!("stage {}: {e}", k + 1)))?;
            Ok(StageDesign {
                stage: k + 1,
                design,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let report = DesignReport { stages };
    let text = if pretty {
        table::design_table(&report)
    } else {
        report::to_json(&report)
    };
    emit(&text, out)?;
    Ok(Status::Done)
}

fn cmd_simulate(
    spec: &Path,
    stage: usize,
    csv: Option<&Path>,
    cycles: usize,
    full_transient: bool,
) -> Result<Status, CliError> {
    let doc = SpecDocument::load(spec)?;
    let (stage_spec, parasitics) = doc.stage(stage)?;
    let mut config = doc.sim_config()?;
    config.record_cycles = cycles;
    config.validate().map_err(core_error)?;
    let design = design_stage(&stage_spec).map_err(core_error)?;
    let params = StageParameters::from_design(&design, &stage_spec, parasitics);
    let circuit = SwitchedCircuit::build(&params).map_err(core_error)?;

    let steady_state = match (csv, full_transient) {
        (Some(path), true) => {
            let mut writer = BufWriter::new(File::create(path).map_err(io_error(path))?);
            let names = recorded_signals(&circuit, &config).map_err(core_error)?;
            write_csv_header(
                &mut writer,
                names.iter().map(|(n, u)| format!("{n} ({})", u.symbol())),
            )
            .map_err(io_error(path))?;
            let mut failure = None;
            let result = run_with_transient(&circuit, &config, &mut |t, values| {
                if failure.is_none() {
                    failure = write_csv_row(&mut writer, t, values).err();
                }
            });
            if let Some(e) = failure {
                return Err(io_error(path)(e));
            }
            writer.flush().map_err(io_error(path))?;
            result.map_err(core_error)?
        }
        _ => {
            let ss = run_to_steady_state(&circuit, &config).map_err(core_error)?;
            if let Some(path) = csv {
                let file = File::create(path).map_err(io_error(path))?;
                let mut writer = BufWriter::new(file);
                ss.waveforms
                    .write_csv(&mut writer)
                    .map_err(io_error(path))?;
                writer.flush().map_err(io_error(path))?;
            }
            ss
        }
    };
    let sim = measure_steady_state(steady_state).map_err(core_error)?;
    emit(&report::to_json(&SimulationReport::new(stage, &sim)), None)?;
    if sim.steady_state.converged {
        Ok(Status::Done)
    } else {
        eprintln!(
            "warning: stage {stage} did not reach steady state within {} cycles (residual {:e}); waveforms are from the last cycle run",
            config.max_cycles, sim.steady_state.residual
        );
        Ok(Status::NotConverged)
    }
}

fn cmd_losses(spec: &Path, stage: Option<usize>) -> Result<Status, CliError> {
    let doc = SpecDocument::load(spec)?;
    let numbers: Vec<usize> = match stage {
        Some(n) => vec![n],
        None => (1..=doc.stages.len()).collect(),
    };
    if numbers.is_empty() {
        return Err(CliError::Validation("spec has no stages".into()));
    }
    let mut stages = Vec::with_capacity(numbers.len());
    for n in numbers {
        let (s, parasitics) = doc.stage(n)?;
        if doc.stage_doc(n)?.parasitics.is_none() {
            eprintln!("warning: stage {n} has no parasitics block; using ideal components");
        }
        let in_stage = |e: Error| CliError::Validation(format!("stage {n}: {e}"));
        let design = design_stage(&s).map_err(in_stage)?;
        let losses = stage_losses(&s, &design, &parasitics).map_err(in_stage)?;
        stages.push(StageLosses { stage: n, losses });
    }
    emit(&report::to_json(&LossReport { stages }), None)?;
    Ok(Status::Done)
}

fn cmd_cascade(spec: &Path) -> Result<Status, CliError> {
    let doc = SpecDocument::load(spec)?;
    let stages = doc.stage_specs()?;
    let config = doc.sim_config()?;
    let cascade = compose_with_parasitics(&stages).map_err(core_error)?;
    let report = evaluate(&cascade, &config).map_err(core_error)?;
    let designs: Vec<_> = cascade.stages.iter().map(|s| s.design.clone()).collect();
    let json = CascadeJson::new(&report, &designs);
    emit(&report::to_json(&json), None)?;
    for s in &json.stages {
        if !s.power_ratio.feasible {
            eprintln!(
                "warning: stage {} specifies more output than input power (ratio {})",
                s.stage, s.power_ratio.ratio
            );
        }
        if let Some(e) = &s.simulation_error {
            eprintln!("warning: stage {}: simulation failed: {e}", s.stage);
        }
    }
    if json.converged {
        Ok(Status::Done)
    } else {
        eprintln!("warning: not every stage reached steady state");
        Ok(Status::NotConverged)
    }
}

fn cmd_sweep(
    spec: &Path,
    param: &str,
    from: f64,
    to: Option<f64>,
    points: u64,
    metrics: Vec<String>,
    out: Option<&Path>,
) -> Result<Status, CliError> {
    let doc = SpecDocument::load(spec)?;
    let metrics = if metrics.is_empty() {
        sweep::DEFAULT_METRICS.map(String::from).to_vec()
    } else {
        metrics
    };
    let values = sweep::grid(from, to.unwrap_or(from), points as usize);
    let table = sweep::run(&doc, param, &values, &metrics, sweep::thread_cap()?)?;
    emit(&table.csv, out)?;
    if table.unconverged.is_empty() {
        Ok(Status::Done)
    } else {
        eprintln!(
            "warning: no steady state at {param} = {:?}",
            table.unconverged
        );
        Ok(Status::NotConverged)
    }
}

pub fn run(cli: Cli) -> Result<Status, CliError> {
    match cli.command {
        Command::Design { spec, out, pretty } => cmd_design(&spec, out.as_deref(), pretty),
        Command::Simulate {
            spec,
            stage,
            csv,
            cycles,
            full_transient,
        } => cmd_simulate(&spec, stage, csv.as_deref(), cycles, full_transient),
        Command::Losses { spec, stage } => cmd_losses(&spec, stage),
        Command::Cascade { spec } => cmd_cascade(&spec),
        Command::Sweep {
            spec,
            param,
            from,
            to,
            points,
            metrics,
            out,
        } => cmd_sweep(&spec, &param, from, to, points, metrics, out.as_deref()),
    }
}
