//! Multi-stage chains. Each stage is fed by an ideal source at the previous
//! stage's output voltage, so stages are designed and simulated independently.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{StageParameters, SwitchedCircuit, Unit};
use crate::error::{Error, Result};
use crate::losses::{chain_power_ratios, stage_losses, LossBreakdown, PowerRatio, StagePower};
use crate::measure::{average_power, power_factor, stats, SignalStats};
use crate::quantities::{validate_spec, DesignResult, ParasiticSet, StageSpec};
use crate::simulator::{run_to_steady_state, SimConfig, SteadyState};
use crate::sizing::design_stage;

/// Relative tolerance of the voltage-chaining check.
const CHAIN_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    IdealSource,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeStage {
    pub spec: StageSpec,
    pub design: DesignResult,
    pub parasitics: ParasiticSet,
}

impl CascadeStage {
    pub fn new(spec: StageSpec, parasitics: ParasiticSet) -> Result<Self> {
        let spec = validate_spec(spec)?;
        let parasitics = parasitics.validate()?;
        let design = design_stage(&spec)?;
        Ok(Self {
            spec,
            design,
            parasitics,
        })
    }

    pub fn parameters(&self) -> StageParameters {
        StageParameters::from_design(&self.design, &self.spec, self.parasitics)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeDesign {
    pub stages: Vec<CascadeStage>,
    pub coupling: Coupling,
}

/// Designs every stage with ideal parasitics and checks the voltage chain.
pub fn compose(specs: &[StageSpec]) -> Result<CascadeDesign> {
    let stages: Vec<_> = specs
        .iter()
        .map(|s| (s.clone(), ParasiticSet::IDEAL))
        .collect();
    compose_with_parasitics(&stages)
}

/// Errors carry the 1-based index of the offending stage.
pub fn compose_with_parasitics(stages: &[(StageSpec, ParasiticSet)]) -> Result<CascadeDesign> {
    if stages.is_empty() {
        return Err(Error::EmptyCascade);
    }
    let mut designed = Vec::with_capacity(stages.len());
    for (k, (spec, parasitics)) in stages.iter().enumerate() {
        let stage = CascadeStage::new(spec.clone(), *parasitics).map_err(|e| Error::InStage {
            stage: k + 1,
            error: Box::new(e),
        })?;
        if let Some(prev) = designed.last() {
            check_chain(k + 1, prev, &stage)?;
        }
        designed.push(stage);
    }
    Ok(CascadeDesign {
        stages: designed,
        coupling: Coupling::IdealSource,
    })
}

fn check_chain(stage: usize, prev: &CascadeStage, next: &CascadeStage) -> Result<()> {
    let upstream = prev.spec.output_voltage.abs();
    let vs = next.spec.source_voltage;
    if (vs - upstream).abs() > CHAIN_TOL * upstream.max(vs) {
        return Err(Error::ChainMismatch {
            stage,
            source_voltage: vs,
            previous_output: prev.spec.output_voltage,
        });
    }
    Ok(())
}

/// Specified power flow of each stage. The input current is the stage's
/// own source rating when given, otherwise the previous stage's output
/// current; a first stage without a rating is taken as lossless.
pub fn specified_powers(specs: &[&StageSpec]) -> Vec<StagePower> {
    specs
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let p_out = spec.output_power();
            let p_in = match (spec.source_current, k) {
                (Some(i_s), _) => spec.source_voltage * i_s,
                (None, 0) => p_out,
                (None, _) => spec.source_voltage * specs[k - 1].output_current,
            };
            StagePower { p_in, p_out }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasuredSignal {
    pub name: String,
    pub unit: Unit,
    pub stats: SignalStats,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSimulation {
    pub steady_state: SteadyState,
    /// Statistics of every recorded signal over the last period.
    pub signals: Vec<MeasuredSignal>,
    /// Mean of `v_out * i_out`, when both are recorded.
    pub output_power: Option<f64>,
    /// Mean of `v_sw * i_sw`, when both are recorded.
    pub switch_power: Option<f64>,
    pub switch_power_factor: Option<f64>,
}

/// Runs one stage to steady state and measures its last period.
pub fn simulate_stage(params: &StageParameters, config: &SimConfig) -> Result<StageSimulation> {
    let circuit = SwitchedCircuit::build(params)?;
    measure_steady_state(run_to_steady_state(&circuit, config)?)
}

/// Measures the last recorded period of a finished run.
pub fn measure_steady_state(steady_state: SteadyState) -> Result<StageSimulation> {
    let w = &steady_state.waveforms;
    let signals = w
        .signals
        .iter()
        .map(|s| {
            Ok(MeasuredSignal {
                name: s.name.clone(),
                unit: s.unit,
                stats: stats(w.last_period(s))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let pair = |v: &str, i: &str| Some((w.last_period(w.get(v)?), w.last_period(w.get(i)?)));
    let output_power = pair("v_out", "i_out")
        .map(|(v, i)| average_power(v, i))
        .transpose()?;
    let (switch_power, switch_power_factor) = match pair("v_sw", "i_sw") {
        Some((v, i)) => (Some(average_power(v, i)?), power_factor(v, i).ok()),
        None => (None, None),
    };
    Ok(StageSimulation {
        steady_state,
        signals,
        output_power,
        switch_power,
        switch_power_factor,
    })
}

#[derive(Debug, PartialEq)]
pub struct StageReport {
    /// 1-based position in the chain.
    pub stage: usize,
    pub simulation: Result<StageSimulation>,
    pub losses: LossBreakdown,
    pub specified_power: StagePower,
    pub power_ratio: PowerRatio,
}

#[derive(Debug, PartialEq)]
pub struct CascadeReport {
    pub coupling: Coupling,
    pub stages: Vec<StageReport>,
}

impl CascadeReport {
    pub fn power_ratios(&self) -> Vec<PowerRatio> {
        self.stages.iter().map(|s| s.power_ratio).collect()
    }

    pub fn all_converged(&self) -> bool {
        self.stages
            .iter()
            .all(|s| matches!(&s.simulation, Ok(sim) if sim.steady_state.converged))
    }
}

/// Simulates all stages in parallel; a failing simulation is reported on
/// its stage and does not stop the others.
pub fn evaluate(cascade: &CascadeDesign, config: &SimConfig) -> Result<CascadeReport> {
    config.validate()?;
    let specs: Vec<_> = cascade.stages.iter().map(|s| &s.spec).collect();
    let powers = specified_powers(&specs);
    let ratios = chain_power_ratios(&powers);
    let losses = cascade
        .stages
        .iter()
        .map(|s| stage_losses(&s.spec, &s.design, &s.parasitics))
        .collect::<Result<Vec<_>>>()?;
    let simulations: Vec<_> = cascade
        .stages
        .par_iter()
        .map(|s| simulate_stage(&s.parameters(), config))
        .collect();
    let stages = simulations
        .into_iter()
        .zip(losses)
        .zip(powers.into_iter().zip(ratios))
        .enumerate()
        .map(
            |(k, ((simulation, losses), (specified_power, power_ratio)))| StageReport {
                stage: k + 1,
                simulation,
                losses,
                specified_power,
                power_ratio,
            },
        )
        .collect();
    Ok(CascadeReport {
        coupling: cascade.coupling,
        stages,
    })
}
