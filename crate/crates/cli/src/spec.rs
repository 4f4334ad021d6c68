//! The JSON spec document read by every command.

use std::fs;
use std::path::Path;

use converter_forge::quantities::{validate_spec, ParasiticSet, StageSpec, Topology};
use converter_forge::simulator::SimConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecDocument {
    pub stages: Vec<StageDoc>,
    #[serde(default)]
    pub sim: SimDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageDoc {
    pub topology: Topology,
    pub vs_volts: f64,
    pub vo_volts: f64,
    pub io_amperes: f64,
    pub f_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling_cap_ripple_frac: Option<f64>,
    pub output_ripple_frac: f64,
    /// Current capability of the stage's source.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_amperes: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parasitics: Option<ParasiticsDoc>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParasiticsDoc {
    pub r_l_ohms: f64,
    pub r_ds_ohms: f64,
    pub r_c_ohms: f64,
    pub v_f_volts: f64,
    pub r_f_ohms: f64,
    pub switching_loss_watts: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps_per_period: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_cycles: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steady_state_tol: Option<f64>,
}

impl StageDoc {
    pub fn to_spec(&self) -> StageSpec {
        StageSpec {
            topology: self.topology,
            source_voltage: self.vs_volts,
            output_voltage: self.vo_volts,
            output_current: self.io_amperes,
            switching_frequency: self.f_hz,
            coupling_cap_ripple_frac: self.coupling_cap_ripple_frac,
            output_ripple_frac: self.output_ripple_frac,
            source_current: self.is_amperes,
        }
    }

    pub fn parasitic_set(&self) -> ParasiticSet {
        let p = self.parasitics.unwrap_or_default();
        ParasiticSet {
            inductor_esr: p.r_l_ohms,
            switch_on_resistance: p.r_ds_ohms,
            capacitor_esr: p.r_c_ohms,
            diode_forward_voltage: p.v_f_volts,
            diode_series_resistance: p.r_f_ohms,
            constant_switching_loss: p.switching_loss_watts,
        }
    }
}

impl SimDoc {
    pub fn to_config(&self) -> SimConfig {
        let d = SimConfig::default();
        SimConfig {
            steps_per_period: self.steps_per_period.unwrap_or(d.steps_per_period),
            max_cycles: self.max_cycles.unwrap_or(d.max_cycles),
            steady_state_tol: self.steady_state_tol.unwrap_or(d.steady_state_tol),
            ..d
        }
    }
}

impl SpecDocument {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))
    }

    /// Parse errors carry serde's `line N column M` location.
    pub fn parse(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Every stage, validated; errors name the 1-based stage.
    pub fn stage_specs(&self) -> Result<Vec<(StageSpec, ParasiticSet)>, CliError> {
        if self.stages.is_empty() {
            return Err(CliError::Validation("spec has no stages".into()));
        }
        (1..=self.stages.len()).map(|n| self.stage(n)).collect()
    }

    pub fn stage(&self, n: usize) -> Result<(StageSpec, ParasiticSet), CliError> {
        let doc = self.stage_doc(n)?;
        let in_stage = |e: converter_forge::Error| CliError::Validation(format!("stage {n}: {e}"));
        let spec = validate_spec(doc.to_spec()).map_err(in_stage)?;
        let parasitics = doc.parasitic_set().validate().map_err(in_stage)?;
        Ok((spec, parasitics))
    }

    pub fn stage_doc(&self, n: usize) -> Result<&StageDoc, CliError> {
        n.checked_sub(1)
            .and_then(|k| self.stages.get(k))
            .ok_or_else(|| {
                CliError::Validation(format!(
                    "stage {n} out of range: spec has {} stage(s), numbered from 1",
                    self.stages.len()
                ))
            })
    }

    pub fn sim_config(&self) -> Result<SimConfig, CliError> {
        let config = self.sim.to_config();
        config
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(config)
    }
}
