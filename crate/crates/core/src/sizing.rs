//! Closed-form component sizing for SEPIC and inverting buck-boost stages.
//!
//! Duty cycles assume lossless conversion. Inductors are sized at the
//! continuous-conduction boundary and then enlarged by a continuity margin;
//! capacitors are sized from absolute voltage-ripple budgets.

use crate::error::{positive, unit_open, Error, Result};
use crate::quantities::{
    validate_spec, CapacitorValue, CurrentBounds, DesignResult, InductorValue, StageSpec, Topology,
};

/// Inductors are selected this much larger than the CCM minimum.
pub const DEFAULT_CONTINUITY_MARGIN: f64 = 1.25;

/// `D = Vo / (Vo + Vs)` for a non-inverting SEPIC.
pub fn sepic_duty_cycle(vs: f64, vo: f64) -> Result<f64> {
    positive("vs", vs)?;
    positive("vo", vo)?;
    Ok(vo / (vo + vs))
}

/// `D = |Vo| / (|Vo| + Vs)` for the inverting buck-boost; `vo` must be negative.
pub fn inverting_duty_cycle(vs: f64, vo: f64) -> Result<f64> {
    positive("vs", vs)?;
    if !(vo < 0.0) {
        return Err(Error::Polarity(format!(
            "inverting stage needs a negative output voltage, got {vo}"
        )));
    }
    Ok(vo.abs() / (vo.abs() + vs))
}

/// Minimum `(L1, L2)` keeping both SEPIC inductor currents continuous.
pub fn sepic_min_inductances(d: f64, r: f64, f: f64) -> Result<(f64, f64)> {
    unit_open("duty", d)?;
    positive("load_resistance", r)?;
    positive("frequency", f)?;
    let l1 = (1.0 - d).powi(2) * r / (2.0 * d * f);
    let l2 = (1.0 - d) * r / (2.0 * f);
    Ok((l1, l2))
}

/// Coupling and output capacitances from absolute ripple budgets in volts.
pub fn sepic_capacitances(
    d: f64,
    vo: f64,
    r: f64,
    coupling_ripple_abs: f64,
    output_ripple_abs: f64,
    f: f64,
) -> Result<(f64, f64)> {
    unit_open("duty", d)?;
    positive("vo", vo)?;
    positive("load_resistance", r)?;
    positive("frequency", f)?;
    if !(coupling_ripple_abs > 0.0) {
        return Err(Error::ZeroRippleBudget("coupling capacitor"));
    }
    if !(output_ripple_abs > 0.0) {
        return Err(Error::ZeroRippleBudget("output capacitor"));
    }
    let c1 = d * vo / (r * coupling_ripple_abs * f);
    let c2 = d * vo / (r * output_ripple_abs * f);
    Ok((c1, c2))
}

/// Voltage the coupling-capacitor ripple fraction is taken against.
pub fn coupling_cap_reference_voltage(vs: f64, vo: f64) -> f64 {
    (vs - vo).abs()
}

/// `L_min = (1-D)^2 R / (2f)`.
pub fn buckboost_min_inductance(d: f64, r: f64, f: f64) -> Result<f64> {
    unit_open("duty", d)?;
    positive("load_resistance", r)?;
    positive("frequency", f)?;
    Ok((1.0 - d).powi(2) * r / (2.0 * f))
}

/// `C = D / (R (ΔVo/Vo) f)`.
pub fn buckboost_capacitance(d: f64, r: f64, ripple_frac: f64, f: f64) -> Result<f64> {
    unit_open("duty", d)?;
    positive("load_resistance", r)?;
    positive("frequency", f)?;
    if !(ripple_frac > 0.0) {
        return Err(Error::ZeroRippleBudget("output capacitor"));
    }
    Ok(d / (r * ripple_frac * f))
}

pub fn apply_continuity_margin(l_min: f64, factor: f64) -> Result<f64> {
    if !(factor >= 1.0 && factor.is_finite()) {
        return Err(Error::Domain {
            name: "continuity_margin",
            value: factor,
            expected: "factor >= 1",
        });
    }
    Ok(factor * l_min)
}

/// Average, peak and trough inductor current of the inverting buck-boost.
///
/// A non-positive trough is reported through [`CurrentBounds::is_continuous`],
/// not as an error.
pub fn buckboost_current_bounds(vs: f64, d: f64, t: f64, r: f64, l: f64) -> Result<CurrentBounds> {
    positive("vs", vs)?;
    unit_open("duty", d)?;
    positive("period", t)?;
    positive("load_resistance", r)?;
    positive("inductance", l)?;
    let i_l_avg = vs * d / (r * (1.0 - d).powi(2));
    let half_ripple = vs * d * t / (2.0 * l);
    Ok(CurrentBounds {
        i_l_avg,
        i_max: i_l_avg + half_ripple,
        i_min: i_l_avg - half_ripple,
    })
}

pub fn design_stage(spec: &StageSpec) -> Result<DesignResult> {
    design_stage_with_margin(spec, DEFAULT_CONTINUITY_MARGIN)
}

pub fn design_stage_with_margin(spec: &StageSpec, margin: f64) -> Result<DesignResult> {
    let spec = validate_spec(spec.clone())?;
    let r = spec.load_resistance();
    let f = spec.switching_frequency;
    let vs = spec.source_voltage;
    let vo = spec.output_voltage;
    let period = spec.period();

    match spec.topology {
        Topology::Sepic => {
            let d = sepic_duty_cycle(vs, vo)?;
            let (l1_min, l2_min) = sepic_min_inductances(d, r, f)?;
            // validate_spec guarantees the fraction exists for SEPIC
            let coupling_frac = spec.coupling_cap_ripple_frac.unwrap_or_default();
            let coupling_abs = coupling_frac * coupling_cap_reference_voltage(vs, vo);
            let output_abs = spec.output_ripple_frac * vo.abs();
            let (c1, c2) = sepic_capacitances(d, vo, r, coupling_abs, output_abs, f)?;
            Ok(DesignResult {
                topology: spec.topology,
                duty: d,
                period,
                load_resistance: r,
                inductances: vec![
                    InductorValue {
                        name: "L1".into(),
                        l_min: l1_min,
                        l_selected: apply_continuity_margin(l1_min, margin)?,
                    },
                    InductorValue {
                        name: "L2".into(),
                        l_min: l2_min,
                        l_selected: apply_continuity_margin(l2_min, margin)?,
                    },
                ],
                capacitances: vec![
                    CapacitorValue {
                        name: "C1".into(),
                        capacitance: c1,
                        ripple_budget_abs: coupling_abs,
                    },
                    CapacitorValue {
                        name: "C2".into(),
                        capacitance: c2,
                        ripple_budget_abs: output_abs,
                    },
                ],
                current_bounds: None,
            })
        }
        Topology::InvertingBuckBoost => {
            let d = inverting_duty_cycle(vs, vo)?;
            let l_min = buckboost_min_inductance(d, r, f)?;
            let l = apply_continuity_margin(l_min, margin)?;
            let c = buckboost_capacitance(d, r, spec.output_ripple_frac, f)?;
            Ok(DesignResult {
                topology: spec.topology,
                duty: d,
                period,
                load_resistance: r,
                inductances: vec![InductorValue {
                    name: "L".into(),
                    l_min,
                    l_selected: l,
                }],
                capacitances: vec![CapacitorValue {
                    name: "C".into(),
                    capacitance: c,
                    ripple_budget_abs: spec.output_ripple_frac * vo.abs(),
                }],
                current_bounds: Some(buckboost_current_bounds(vs, d, period, r, l)?),
            })
        }
    }
}
