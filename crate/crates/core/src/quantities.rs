//! Domain types shared by every module. All values are SI base units
//! (volts, amperes, ohms, henries, farads, seconds, hertz).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Sepic,
    InvertingBuckBoost,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Sepic => "sepic",
            Topology::InvertingBuckBoost => "inverting_buck_boost",
        }
    }
}

/// Electrical requirements of one converter stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub topology: Topology,
    pub source_voltage: f64,
    /// Signed; negative only for the inverting buck-boost.
    pub output_voltage: f64,
    pub output_current: f64,
    pub switching_frequency: f64,
    /// Coupling-capacitor ripple as a fraction of its reference voltage. SEPIC only.
    pub coupling_cap_ripple_frac: Option<f64>,
    /// Output ripple as a fraction of `|output_voltage|`.
    pub output_ripple_frac: f64,
    /// Current capability of the source feeding this stage, when known.
    #[serde(default)]
    pub source_current: Option<f64>,
}

impl StageSpec {
    pub fn load_resistance(&self) -> f64 {
        load_resistance(self.output_voltage, self.output_current)
    }

    pub fn period(&self) -> f64 {
        1.0 / self.switching_frequency
    }

    pub fn output_power(&self) -> f64 {
        self.output_voltage.abs() * self.output_current
    }
}

/// `|Vo| / Io`.
pub fn load_resistance(output_voltage: f64, output_current: f64) -> f64 {
    output_voltage.abs() / output_current
}

fn check_fraction(out: &mut Vec<Violation>, field: &'static str, value: f64) {
    if !(value > 0.0 && value < 1.0) {
        out.push(Violation::new(
            field,
            format!("must lie in (0, 1), got {value}"),
        ));
    }
}

fn check_positive(out: &mut Vec<Violation>, field: &'static str, value: f64) {
    if !(value > 0.0 && value.is_finite()) {
        out.push(Violation::new(field, format!("must be > 0, got {value}")));
    }
}

/// Returns the spec unchanged when every invariant holds, otherwise all
/// violations at once.
pub fn validate_spec(spec: StageSpec) -> Result<StageSpec> {
    let mut violations = Vec::new();
    check_positive(&mut violations, "source_voltage", spec.source_voltage);
    check_positive(&mut violations, "output_current", spec.output_current);
    check_positive(
        &mut violations,
        "switching_frequency",
        spec.switching_frequency,
    );
    check_fraction(
        &mut violations,
        "output_ripple_frac",
        spec.output_ripple_frac,
    );
    if let Some(limit) = spec.source_current {
        check_positive(&mut violations, "source_current", limit);
    }

    if !spec.output_voltage.is_finite() {
        violations.push(Violation::new("output_voltage", "must be finite"));
    }
    match spec.topology {
        Topology::Sepic => {
            if !(spec.output_voltage > 0.0) {
                violations.push(Violation::new(
                    "output_voltage",
                    format!(
                        "polarity mismatch: SEPIC output must be positive, got {}",
                        spec.output_voltage
                    ),
                ));
            }
            match spec.coupling_cap_ripple_frac {
                Some(frac) => check_fraction(&mut violations, "coupling_cap_ripple_frac", frac),
                None => violations.push(Violation::new(
                    "coupling_cap_ripple_frac",
                    "required for SEPIC stages",
                )),
            }
        }
        Topology::InvertingBuckBoost => {
            if !(spec.output_voltage < 0.0) {
                violations.push(Violation::new(
                    "output_voltage",
                    format!(
                        "polarity mismatch: inverting buck-boost output must be negative, got {}",
                        spec.output_voltage
                    ),
                ));
            }
        }
    }

    if violations.is_empty() {
        Ok(spec)
    } else {
        Err(Error::InvalidSpec(violations))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InductorValue {
    pub name: String,
    pub l_min: f64,
    pub l_selected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacitorValue {
    pub name: String,
    pub capacitance: f64,
    /// Absolute ripple budget in volts used to size this capacitor.
    pub ripple_budget_abs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentBounds {
    pub i_l_avg: f64,
    pub i_max: f64,
    pub i_min: f64,
}

impl CurrentBounds {
    /// Continuous conduction requires the ripple trough to stay above zero.
    pub fn is_continuous(&self) -> bool {
        self.i_min > 0.0
    }
}

/// Sized component values for one stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub topology: Topology,
    pub duty: f64,
    pub period: f64,
    pub load_resistance: f64,
    pub inductances: Vec<InductorValue>,
    pub capacitances: Vec<CapacitorValue>,
    pub current_bounds: Option<CurrentBounds>,
}

/// Non-ideal component parameters. Inductor and capacitor ESRs apply to
/// every inductor and every capacitor of a stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParasiticSet {
    pub inductor_esr: f64,
    pub switch_on_resistance: f64,
    pub capacitor_esr: f64,
    pub diode_forward_voltage: f64,
    pub diode_series_resistance: f64,
    /// Lumped switching loss added verbatim to the loss total.
    pub constant_switching_loss: f64,
}

impl ParasiticSet {
    pub const IDEAL: ParasiticSet = ParasiticSet {
        inductor_esr: 0.0,
        switch_on_resistance: 0.0,
        capacitor_esr: 0.0,
        diode_forward_voltage: 0.0,
        diode_series_resistance: 0.0,
        constant_switching_loss: 0.0,
    };

    pub fn is_ideal(&self) -> bool {
        *self == Self::IDEAL
    }

    pub fn validate(self) -> Result<Self> {
        let mut violations = Vec::new();
        for (field, value) in [
            ("inductor_esr", self.inductor_esr),
            ("switch_on_resistance", self.switch_on_resistance),
            ("capacitor_esr", self.capacitor_esr),
            ("diode_forward_voltage", self.diode_forward_voltage),
            ("diode_series_resistance", self.diode_series_resistance),
            ("constant_switching_loss", self.constant_switching_loss),
        ] {
            if !(value >= 0.0 && value.is_finite()) {
                violations.push(Violation::new(field, format!("must be >= 0, got {value}")));
            }
        }
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidSpec(violations))
        }
    }
}
