//! Parameter sweeps over one stage of a spec document.

use std::str::FromStr;

use converter_forge::cascade::{simulate_stage, StageSimulation};
use converter_forge::circuit::StageParameters;
use converter_forge::numfmt::sig10;
use converter_forge::sizing::design_stage;
use converter_forge::Error;
use rayon::prelude::*;

use crate::spec::{ParasiticsDoc, SpecDocument, StageDoc};
use crate::CliError;

pub const THREADS_VAR: &str = "CONVERTER_FORGE_THREADS";

pub const DEFAULT_METRICS: [&str; 3] = ["v_out.mean", "v_out.peak_to_peak", "conduction_mode"];

/// `stage.<N>.<field>`, where `field` is a stage key, `parasitics.<key>`,
/// `inductance_factor` (multiple of each L_min) or `duty` (overrides sizing).
#[derive(Clone, Debug, PartialEq)]
pub struct ParamPath {
    pub stage: usize,
    pub field: Field,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Field {
    Stage(StageField),
    Parasitic(ParasiticField),
    InductanceFactor,
    Duty,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StageField {
    Vs,
    Vo,
    Io,
    F,
    CouplingRipple,
    OutputRipple,
    Is,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParasiticField {
    RL,
    RDs,
    RC,
    Vf,
    Rf,
    SwitchingLoss,
}

impl FromStr for ParamPath {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let unknown = || format!("unknown parameter path `{s}`");
        let mut parts = s.splitn(3, '.');
        let (Some("stage"), Some(n), Some(field)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(format!("{}; expected stage.<N>.<field>", unknown()));
        };
        let stage = n.parse().map_err(|_| unknown())?;
        let field = match field {
            "vs_volts" => Field::Stage(StageField::Vs),
            "vo_volts" => Field::Stage(StageField::Vo),
            "io_amperes" => Field::Stage(StageField::Io),
            "f_hz" => Field::Stage(StageField::F),
            "coupling_cap_ripple_frac" => Field::Stage(StageField::CouplingRipple),
            "output_ripple_frac" => Field::Stage(StageField::OutputRipple),
            "is_amperes" => Field::Stage(StageField::Is),
            "parasitics.r_l_ohms" => Field::Parasitic(ParasiticField::RL),
            "parasitics.r_ds_ohms" => Field::Parasitic(ParasiticField::RDs),
            "parasitics.r_c_ohms" => Field::Parasitic(ParasiticField::RC),
            "parasitics.v_f_volts" => Field::Parasitic(ParasiticField::Vf),
            "parasitics.r_f_ohms" => Field::Parasitic(ParasiticField::Rf),
            "parasitics.switching_loss_watts" => Field::Parasitic(ParasiticField::SwitchingLoss),
            "inductance_factor" => Field::InductanceFactor,
            "duty" => Field::Duty,
            _ => return Err(unknown()),
        };
        Ok(Self { stage, field })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Metric {
    Signal { name: String, stat: Stat },
    ConductionMode,
    Converged,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stat {
    Mean,
    Rms,
    PeakToPeak,
    Min,
    Max,
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "conduction_mode" => return Ok(Self::ConductionMode),
            "converged" => return Ok(Self::Converged),
            _ => {}
        }
        let (name, stat) = s.rsplit_once('.').ok_or_else(|| {
            format!("unknown metric `{s}`; expected <signal>.<stat>, conduction_mode or converged")
        })?;
        let stat = match stat {
            "mean" => Stat::Mean,
            "rms" => Stat::Rms,
            "peak_to_peak" | "p2p" => Stat::PeakToPeak,
            "min" => Stat::Min,
            "max" => Stat::Max,
            _ => return Err(format!("unknown statistic `{stat}` in metric `{s}`")),
        };
        Ok(Self::Signal {
            name: name.to_string(),
            stat,
        })
    }
}

/// `points` evenly spaced values from `from` to `to`, both included.
pub fn grid(from: f64, to: f64, points: usize) -> Vec<f64> {
    match points {
        0 => Vec::new(),
        1 => vec![from],
        _ => (0..points)
            .map(|k| from + (to - from) * k as f64 / (points - 1) as f64)
            .collect(),
    }
}

fn set_stage_field(doc: &mut StageDoc, field: StageField, value: f64) {
    match field {
        StageField::Vs => doc.vs_volts = value,
        StageField::Vo => doc.vo_volts = value,
        StageField::Io => doc.io_amperes = value,
        StageField::F => doc.f_hz = value,
        StageField::CouplingRipple => doc.coupling_cap_ripple_frac = Some(value),
        StageField::OutputRipple => doc.output_ripple_frac = value,
        StageField::Is => doc.is_amperes = Some(value),
    }
}

fn set_parasitic(doc: &mut StageDoc, field: ParasiticField, value: f64) {
    let p = doc.parasitics.get_or_insert_with(ParasiticsDoc::default);
    match field {
        ParasiticField::RL => p.r_l_ohms = value,
        ParasiticField::RDs => p.r_ds_ohms = value,
        ParasiticField::RC => p.r_c_ohms = value,
        ParasiticField::Vf => p.v_f_volts = value,
        ParasiticField::Rf => p.r_f_ohms = value,
        ParasiticField::SwitchingLoss => p.switching_loss_watts = value,
    }
}

/// Stage parameters of `doc` with `path` set to `value`.
pub fn point_parameters(
    doc: &SpecDocument,
    path: &ParamPath,
    value: f64,
) -> Result<StageParameters, CliError> {
    let mut doc = doc.clone();
    let n = path.stage;
    doc.stage_doc(n)?;
    let stage = &mut doc.stages[n - 1];
    match path.field {
        Field::Stage(f) => set_stage_field(stage, f, value),
        Field::Parasitic(f) => set_parasitic(stage, f, value),
        Field::InductanceFactor | Field::Duty => {}
    }
    let at = |e: Error| CliError::Validation(format!("stage {n} at {value}: {e}"));
    let (spec, parasitics) = doc
        .stage(n)
        .map_err(|e| CliError::Validation(format!("at {value}: {e}")))?;
    let design = design_stage(&spec).map_err(at)?;
    let mut params = StageParameters::from_design(&design, &spec, parasitics);
    match path.field {
        Field::InductanceFactor => {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CliError::Validation(format!(
                    "stage {n}: inductance_factor must be > 0, got {value}"
                )));
            }
            params = params.with_inductance_factor(&design, value);
        }
        Field::Duty => {
            if !(value > 0.0 && value < 1.0) {
                return Err(CliError::Validation(format!(
                    "stage {n}: duty must lie in (0, 1), got {value}"
                )));
            }
            params.duty = value;
        }
        Field::Stage(_) | Field::Parasitic(_) => {}
    }
    Ok(params)
}

fn metric_cell(sim: &StageSimulation, metric: &Metric) -> Result<String, CliError> {
    let ss = &sim.steady_state;
    Ok(match metric {
        Metric::ConductionMode => ss.conduction_mode.as_str().to_string(),
        Metric::Converged => ss.converged.to_string(),
        Metric::Signal { name, stat } => {
            let s = sim
                .signals
                .iter()
                .find(|s| &s.name == name)
                .ok_or_else(|| {
                    CliError::Validation(Error::UnknownSignal(name.clone()).to_string())
                })?
                .stats;
            sig10(match stat {
                Stat::Mean => s.mean,
                Stat::Rms => s.rms,
                Stat::PeakToPeak => s.peak_to_peak,
                Stat::Min => s.min,
                Stat::Max => s.max,
            })
        }
    })
}

pub struct SweepTable {
    pub csv: String,
    /// Parameter values whose simulation did not reach steady state.
    pub unconverged: Vec<f64>,
}

pub fn run(
    doc: &SpecDocument,
    path_text: &str,
    values: &[f64],
    metrics: &[String],
    threads: Option<usize>,
) -> Result<SweepTable, CliError> {
    let path: ParamPath = path_text.parse().map_err(CliError::Validation)?;
    let parsed = metrics
        .iter()
        .map(|m| m.parse::<Metric>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(CliError::Validation)?;
    let config = doc.sim_config()?;
    let points = values
        .iter()
        .map(|&v| point_parameters(doc, &path, v))
        .collect::<Result<Vec<_>, _>>()?;

    let evaluate = || -> Vec<_> {
        points
            .par_iter()
            .map(|params| simulate_stage(params, &config))
            .collect()
    };
    let results = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Io(format!("cannot start worker threads: {e}")))?
            .install(evaluate),
        None => evaluate(),
    };

    let mut csv = String::from(path_text);
    for m in metrics {
        csv.push(',');
        csv.push_str(m);
    }
    csv.push('\n');
    let mut unconverged = Vec::new();
    for (&value, result) in values.iter().zip(results) {
        let sim = result.map_err(|e| CliError::Numerical(format!("at {value}: {e}")))?;
        if !sim.steady_state.converged {
            unconverged.push(value);
        }
        csv.push_str(&sig10(value));
        for m in &parsed {
            csv.push(',');
            csv.push_str(&metric_cell(&sim, m)?);
        }
        csv.push('\n');
    }
    Ok(SweepTable { csv, unconverged })
}

/// Worker cap from `CONVERTER_FORGE_THREADS`, if set.
pub fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(text) => match text.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Validation(format!(
                "{THREADS_VAR} must be a positive integer, got `{text}`"
            ))),
        },
    }
}
