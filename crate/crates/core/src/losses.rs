//! Conduction-loss models and efficiency.
//!
//! The closed forms assume ripple-free inductor current: during the on-time
//! the switch carries `Io/(1-D)`, during the off-time the diode does. The
//! same waveforms describe a SEPIC's switch, diode and both capacitors, so
//! SEPIC stages reuse the formulas per element.

use serde::{Deserialize, Serialize};

use crate::error::{non_negative, positive, unit_open, Error, Result};
use crate::quantities::{DesignResult, ParasiticSet, StageSpec, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub inductor_loss: f64,
    pub switch_conduction_loss: f64,
    pub capacitor_loss: f64,
    pub diode_loss: f64,
    pub other_losses: f64,
    pub total: f64,
    pub efficiency: f64,
}

impl LossBreakdown {
    /// Sums the components and evaluates the efficiency at `output_power`.
    pub fn new(
        output_power: f64,
        inductor_loss: f64,
        switch_conduction_loss: f64,
        capacitor_loss: f64,
        diode_loss: f64,
        other_losses: f64,
    ) -> Self {
        let total =
            inductor_loss + switch_conduction_loss + capacitor_loss + diode_loss + other_losses;
        Self {
            inductor_loss,
            switch_conduction_loss,
            capacitor_loss,
            diode_loss,
            other_losses,
            total,
            efficiency: efficiency(output_power, total),
        }
    }
}

fn duty_and_current(io: f64, d: f64) -> Result<()> {
    positive("io", io)?;
    unit_open("duty", d)?;
    Ok(())
}

/// `P_L = r_L Io^2 / (1-D)^2`, the inverting buck-boost inductor carrying `Io/(1-D)`.
pub fn inductor_conduction_loss(r_l: f64, io: f64, d: f64) -> Result<f64> {
    non_negative("r_l", r_l)?;
    duty_and_current(io, d)?;
    Ok(r_l * io * io / (1.0 - d).powi(2))
}

pub fn switch_rms_current(io: f64, d: f64) -> Result<f64> {
    duty_and_current(io, d)?;
    Ok(d.sqrt() * io / (1.0 - d))
}

pub fn mosfet_conduction_loss(r_ds: f64, io: f64, d: f64) -> Result<f64> {
    non_negative("r_ds", r_ds)?;
    duty_and_current(io, d)?;
    Ok(d * r_ds * io * io / (1.0 - d).powi(2))
}

pub fn capacitor_rms_current(io: f64, d: f64) -> Result<f64> {
    duty_and_current(io, d)?;
    Ok(io * (d / (1.0 - d)).sqrt())
}

/// ESR loss of a capacitor alternating between `-Io` and `D Io/(1-D)`.
pub fn capacitor_loss(r_c: f64, io: f64, d: f64) -> Result<f64> {
    non_negative("r_c", r_c)?;
    duty_and_current(io, d)?;
    Ok(d * r_c * io * io / (1.0 - d))
}

pub fn diode_rms_current(io: f64, d: f64) -> Result<f64> {
    duty_and_current(io, d)?;
    Ok(io / (1.0 - d).sqrt())
}

/// Forward-drop plus series-resistance loss. The average diode current is `Io`.
pub fn diode_loss(v_f: f64, r_f: f64, io: f64, d: f64) -> Result<f64> {
    non_negative("v_f", v_f)?;
    non_negative("r_f", r_f)?;
    duty_and_current(io, d)?;
    Ok(v_f * io + r_f * io * io / (1.0 - d))
}

/// Capacitor ESR from an allowed ESR ripple step and the capacitor current swing.
/// Only magnitudes are used, so the result is never negative.
pub fn esr_from_ripple(delta_v_esr: f64, delta_i_c: f64) -> Result<f64> {
    if !(delta_i_c > 0.0) {
        return Err(Error::Domain {
            name: "delta_i_c",
            value: delta_i_c,
            expected: "current swing > 0",
        });
    }
    Ok(delta_v_esr.abs() / delta_i_c)
}

/// Inductor ESR from an assumed fractional voltage drop across `|Vs - Vo|`
/// at inductor current `i_l`.
pub fn inductor_esr_from_drop(vs: f64, vo: f64, drop_frac: f64, i_l: f64) -> Result<f64> {
    non_negative("drop_frac", drop_frac)?;
    positive("i_l", i_l)?;
    Ok(drop_frac * (vs - vo).abs() / i_l)
}

/// `η = P_out / (P_out + losses)`.
pub fn efficiency(output_power: f64, total_losses: f64) -> f64 {
    output_power / (output_power + total_losses)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StagePower {
    pub p_in: f64,
    pub p_out: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerRatio {
    pub ratio: f64,
    /// False when the stage claims more output than input power.
    pub feasible: bool,
}

/// Raw `P_out / P_in` per stage; never clamped.
pub fn chain_power_ratios(stage_powers: &[StagePower]) -> Vec<PowerRatio> {
    stage_powers
        .iter()
        .map(|p| {
            let ratio = p.p_out / p.p_in;
            PowerRatio {
                ratio,
                feasible: ratio <= 1.0,
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParameters {
    pub source_current: f64,
    pub load_resistance: f64,
}

/// Source current and load resistance of a stage operated at input power
/// `p_in`, assuming the stage passes that power to its load losslessly.
pub fn scenario_stage_parameters(p_in: f64, vs: f64, vo: f64) -> Result<ScenarioParameters> {
    positive("p_in", p_in)?;
    positive("vs", vs)?;
    positive("|vo|", vo.abs())?;
    Ok(ScenarioParameters {
        source_current: p_in / vs,
        load_resistance: vo * vo / p_in,
    })
}

/// Closed-form loss breakdown for one designed stage.
pub fn stage_losses(
    spec: &StageSpec,
    design: &DesignResult,
    parasitics: &ParasiticSet,
) -> Result<LossBreakdown> {
    let p = parasitics.validate()?;
    let io = spec.output_current;
    let d = design.duty;
    let capacitor_count = design.capacitances.len() as f64;

    let inductor = match spec.topology {
        Topology::InvertingBuckBoost => inductor_conduction_loss(p.inductor_esr, io, d)?,
        Topology::Sepic => {
            // L1 carries the source current, L2 the load current.
            let input_current = io * d / (1.0 - d);
            p.inductor_esr * (input_current * input_current + io * io)
        }
    };
    let switch = mosfet_conduction_loss(p.switch_on_resistance, io, d)?;
    let capacitor = capacitor_count * capacitor_loss(p.capacitor_esr, io, d)?;
    let diode = diode_loss(p.diode_forward_voltage, p.diode_series_resistance, io, d)?;

    Ok(LossBreakdown::new(
        spec.output_power(),
        inductor,
        switch,
        capacitor,
        diode,
        p.constant_switching_loss,
    ))
}
