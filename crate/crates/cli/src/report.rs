//! JSON reports. Every float is rounded to 10 significant digits before
//! printing, and keys keep their declaration order, so identical inputs
//! give identical bytes. The same types read reports back.

use converter_forge::cascade::{
    CascadeReport, Coupling, MeasuredSignal, StageReport, StageSimulation,
};
use converter_forge::losses::{LossBreakdown, PowerRatio, StagePower};
use converter_forge::numfmt::round_significant;
use converter_forge::quantities::DesignResult;
use converter_forge::simulator::ConductionMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

const DIGITS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignReport {
    pub stages: Vec<StageDesign>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageDesign {
    pub stage: usize,
    #[serde(flatten)]
    pub design: DesignResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub stage: usize,
    pub converged: bool,
    pub cycles_run: usize,
    pub residual: f64,
    pub conduction_mode: ConductionMode,
    pub signals: Vec<MeasuredSignal>,
    pub output_power: Option<f64>,
    pub switch_power: Option<f64>,
    pub switch_power_factor: Option<f64>,
}

impl SimulationReport {
    pub fn new(stage: usize, sim: &StageSimulation) -> Self {
        let ss = &sim.steady_state;
        Self {
            stage,
            converged: ss.converged,
            cycles_run: ss.cycles_run,
            residual: ss.residual,
            conduction_mode: ss.conduction_mode,
            signals: sim.signals.clone(),
            output_power: sim.output_power,
            switch_power: sim.switch_power,
            switch_power_factor: sim.switch_power_factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub stages: Vec<StageLosses>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLosses {
    pub stage: usize,
    #[serde(flatten)]
    pub losses: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeJson {
    pub coupling: Coupling,
    pub converged: bool,
    pub stages: Vec<CascadeStageJson>,
    pub power_ratios: Vec<PowerRatio>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeStageJson {
    pub stage: usize,
    pub design: DesignResult,
    pub simulation: Option<SimulationReport>,
    /// Set when the stage could not be simulated.
    pub simulation_error: Option<String>,
    pub losses: StageLosses,
    pub specified_power: StagePower,
    pub power_ratio: PowerRatio,
}

impl CascadeJson {
    pub fn new(report: &CascadeReport, designs: &[DesignResult]) -> Self {
        let stages = report
            .stages
            .iter()
            .zip(designs)
            .map(|(s, design)| cascade_stage(s, design))
            .collect();
        Self {
            coupling: report.coupling,
            converged: report.all_converged(),
            stages,
            power_ratios: report.power_ratios(),
        }
    }
}

fn cascade_stage(s: &StageReport, design: &DesignResult) -> CascadeStageJson {
    let (simulation, simulation_error) = match &s.simulation {
        Ok(sim) => (Some(SimulationReport::new(s.stage, sim)), None),
        Err(e) => (None, Some(e.to_string())),
    };
    CascadeStageJson {
        stage: s.stage,
        design: design.clone(),
        simulation,
        simulation_error,
        losses: StageLosses {
            stage: s.stage,
            losses: s.losses,
        },
        specified_power: s.specified_power,
        power_ratio: s.power_ratio,
    }
}

fn round_floats(value: &mut Value) {
    match value {
        Value::Number(n) if n.is_f64() => {
            let x = round_significant(n.as_f64().unwrap_or(f64::NAN), DIGITS);
            *value = Number::from_f64(x).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn rounded_value<T: Serialize>(report: &T) -> Value {
    let mut value = serde_json::to_value(report).expect("report types serialize");
    round_floats(&mut value);
    value
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(report: &T) -> String {
    let mut text = serde_json::to_string_pretty(&rounded_value(report)).expect("value serializes");
    text.push('\n');
    text
}

pub fn read<T: DeserializeOwned>(text: &str) -> serde_json::Result<T> {
    serde_json::from_str(text)
}

/// The value a report holds after a write/read cycle.
pub fn rounded<T: Serialize + DeserializeOwned>(report: &T) -> T {
    serde_json::from_value(rounded_value(report)).expect("rounded report reads back")
}
