//! Piecewise-affine state-space models of the converter stages.
//!
//! Each stage has three switch/diode configurations. In every one the
//! dynamics are `dx/dt = A x + b` with the source voltage folded into `b`.
//!
//! SEPIC state is `[i_L1, i_L2, v_C1, v_C2]`. `i_L1` flows from the source
//! into the switch node, `i_L2` flows from ground up into the diode anode
//! node, so both average positive and the diode carries `i_L1 + i_L2`.
//! Inverting buck-boost state is `[i_L, v_C]` with `i_L` flowing from the
//! switch node to ground and the output reported as a negative voltage.
//!
//! The diode is an ideal switch in series with `Vf` and `Rf`; every
//! capacitor has its ESR in series; every inductor its winding resistance.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantities::{DesignResult, ParasiticSet, StageSpec, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigId {
    GateOn,
    DiodeOn,
    /// Gate off with the diode blocking (discontinuous conduction).
    Idle,
}

impl ConfigId {
    pub const ALL: [ConfigId; 3] = [ConfigId::GateOn, ConfigId::DiodeOn, ConfigId::Idle];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Result<Self> {
        Self::ALL
            .get(index)
            .copied()
            .ok_or(Error::UnknownConfiguration(index))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    Volt,
    Ampere,
    Watt,
}

impl Unit {
    pub fn symbol(self) -> &'static str {
        match self {
            Unit::Volt => "V",
            Unit::Ampere => "A",
            Unit::Watt => "W",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    pub id: ConfigId,
    pub gate_on: bool,
    pub diode_conducting: bool,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Configuration {
    pub fn derivative(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }
}

/// `y = row · x + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub row: DVector<f64>,
    pub offset: f64,
}

impl AffineMap {
    fn new(row: &[f64], offset: f64) -> Self {
        Self {
            row: DVector::from_row_slice(row),
            offset,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        self.row.dot(x) + self.offset
    }
}

/// A named branch quantity with one affine map per configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputMap {
    pub name: String,
    pub unit: Unit,
    pub per_config: [AffineMap; 3],
}

impl OutputMap {
    pub fn eval(&self, config: ConfigId, x: &DVector<f64>) -> f64 {
        self.per_config[config.index()].eval(x)
    }
}

/// Element values a circuit is built from. Usually derived from a design
/// via [`StageParameters::from_design`], but may be edited directly to
/// simulate off-design operation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageParameters {
    pub topology: Topology,
    pub source_voltage: f64,
    pub duty: f64,
    pub period: f64,
    pub load_resistance: f64,
    pub inductances: Vec<f64>,
    pub capacitances: Vec<f64>,
    pub parasitics: ParasiticSet,
}

impl StageParameters {
    pub fn from_design(design: &DesignResult, spec: &StageSpec, parasitics: ParasiticSet) -> Self {
        Self {
            topology: spec.topology,
            source_voltage: spec.source_voltage,
            duty: design.duty,
            period: design.period,
            load_resistance: design.load_resistance,
            inductances: design.inductances.iter().map(|l| l.l_selected).collect(),
            capacitances: design.capacitances.iter().map(|c| c.capacitance).collect(),
            parasitics,
        }
    }

    /// Multiplies every inductor's CCM minimum by `factor` in place of the
    /// selected value.
    pub fn with_inductance_factor(mut self, design: &DesignResult, factor: f64) -> Self {
        self.inductances = design
            .inductances
            .iter()
            .map(|l| l.l_min * factor)
            .collect();
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchCurrents {
    pub i_sw: f64,
    pub i_d: f64,
    pub i_c_out: f64,
    pub v_out: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwitchedCircuit {
    pub topology: Topology,
    pub state_labels: Vec<String>,
    pub state_units: Vec<Unit>,
    pub configurations: Vec<Configuration>,
    pub outputs: Vec<OutputMap>,
    pub params: StageParameters,
    /// Diode current as a linear function of state when the diode conducts.
    diode_row: DVector<f64>,
    inductor_states: Vec<usize>,
    capacitor_states: Vec<usize>,
    output_capacitor: usize,
}

pub fn build_stage_circuit(
    design: &DesignResult,
    spec: &StageSpec,
    parasitics: &ParasiticSet,
) -> Result<SwitchedCircuit> {
    SwitchedCircuit::build(&StageParameters::from_design(design, spec, *parasitics))
}

impl SwitchedCircuit {
    pub fn build(params: &StageParameters) -> Result<Self> {
        let p = params.parasitics.validate()?;
        let (n_l, n_c) = match params.topology {
            Topology::Sepic => (2, 2),
            Topology::InvertingBuckBoost => (1, 1),
        };
        if params.inductances.len() != n_l || params.capacitances.len() != n_c {
            return Err(Error::Domain {
                name: "element count",
                value: (params.inductances.len() + params.capacitances.len()) as f64,
                expected: "two inductors and two capacitors (SEPIC) or one of each",
            });
        }
        for &l in &params.inductances {
            crate::error::positive("inductance", l)?;
        }
        for &c in &params.capacitances {
            crate::error::positive("capacitance", c)?;
        }
        crate::error::positive("load_resistance", params.load_resistance)?;
        crate::error::positive("period", params.period)?;
        crate::error::unit_open("duty", params.duty)?;

        let mut circuit = match params.topology {
            Topology::Sepic => sepic(params, &p),
            Topology::InvertingBuckBoost => inverting_buck_boost(params, &p),
        };
        circuit.add_element_maps();
        Ok(circuit)
    }

    pub fn dimension(&self) -> usize {
        self.state_labels.len()
    }

    pub fn configuration(&self, id: ConfigId) -> &Configuration {
        &self.configurations[id.index()]
    }

    pub fn output(&self, name: &str) -> Option<&OutputMap> {
        self.outputs.iter().find(|o| o.name == name)
    }

    fn output_by_name(&self, name: &str) -> &OutputMap {
        self.output(name).expect("built-in output map")
    }

    pub fn check_state(&self, state: &DVector<f64>) -> Result<()> {
        if state.len() == self.dimension() {
            Ok(())
        } else {
            Err(Error::StateDimension {
                expected: self.dimension(),
                got: state.len(),
            })
        }
    }

    /// Diode current if the diode were conducting at this state.
    pub fn diode_current(&self, state: &DVector<f64>) -> f64 {
        self.diode_row.dot(state)
    }

    /// Removes the diode-current component of the state, pinning the
    /// inductor currents the way a blocking diode does.
    pub fn project_idle(&self, state: &mut DVector<f64>) {
        let norm = self.diode_row.norm_squared();
        let excess = self.diode_row.dot(state) / norm;
        state.axpy(-excess, &self.diode_row, 1.0);
    }

    pub fn branch_currents(
        &self,
        state: &DVector<f64>,
        config: ConfigId,
    ) -> Result<BranchCurrents> {
        self.check_state(state)?;
        let capacitor = &self.state_labels[self.output_capacitor][2..];
        Ok(BranchCurrents {
            i_sw: self.output_by_name("i_sw").eval(config, state),
            i_d: self.output_by_name("i_D").eval(config, state),
            i_c_out: self
                .output_by_name(&format!("i_{capacitor}"))
                .eval(config, state),
            v_out: self.output_by_name("v_out").eval(config, state),
        })
    }

    /// Gate on selects the on-configuration. Gate off selects diode
    /// conduction when the diode would carry positive current, or would
    /// start to from zero; otherwise the idle configuration.
    pub fn configuration_transition(&self, state: &DVector<f64>, gate: bool) -> ConfigId {
        if gate {
            return ConfigId::GateOn;
        }
        let i_d = self.diode_current(state);
        if i_d > 0.0 {
            return ConfigId::DiodeOn;
        }
        if i_d == 0.0 {
            let rising = self
                .diode_row
                .dot(&self.configuration(ConfigId::DiodeOn).derivative(state));
            if rising > 0.0 {
                return ConfigId::DiodeOn;
            }
        }
        ConfigId::Idle
    }

    /// Magnetic plus electric energy stored in the ideal reactances.
    pub fn stored_energy(&self, state: &DVector<f64>) -> f64 {
        let magnetic: f64 = self
            .inductor_states
            .iter()
            .zip(&self.params.inductances)
            .map(|(&i, l)| 0.5 * l * state[i] * state[i])
            .sum();
        let electric: f64 = self
            .capacitor_states
            .iter()
            .zip(&self.params.capacitances)
            .map(|(&i, c)| 0.5 * c * state[i] * state[i])
            .sum();
        magnetic + electric
    }

    pub fn source_power(&self, config: ConfigId, state: &DVector<f64>) -> f64 {
        self.params.source_voltage * self.output_by_name("i_in").eval(config, state)
    }

    pub fn load_power(&self, config: ConfigId, state: &DVector<f64>) -> f64 {
        let v = self.output_by_name("v_out").eval(config, state);
        v * v / self.params.load_resistance
    }

    /// Inductor terminal voltages `L di/dt + r_L i` and capacitor currents
    /// `C dv/dt`, read off the state equations.
    fn add_element_maps(&mut self) {
        let r_l = self.params.parasitics.inductor_esr;
        let mut extra = Vec::new();
        for (k, &state) in self.inductor_states.iter().enumerate() {
            let l = self.params.inductances[k];
            let per_config = ConfigId::ALL.map(|id| {
                let cfg = self.configuration(id);
                let mut row = cfg.a.row(state).transpose() * l;
                row[state] += r_l;
                AffineMap {
                    row,
                    offset: cfg.b[state] * l,
                }
            });
            extra.push(OutputMap {
                name: format!("v_{}", &self.state_labels[state][2..]),
                unit: Unit::Volt,
                per_config,
            });
        }
        for (k, &state) in self.capacitor_states.iter().enumerate() {
            let c = self.params.capacitances[k];
            let per_config = ConfigId::ALL.map(|id| {
                let cfg = self.configuration(id);
                AffineMap {
                    row: cfg.a.row(state).transpose() * c,
                    offset: cfg.b[state] * c,
                }
            });
            extra.push(OutputMap {
                name: format!("i_{}", &self.state_labels[state][2..]),
                unit: Unit::Ampere,
                per_config,
            });
        }
        extra.append(&mut self.outputs);
        self.outputs = extra;
    }
}

fn configuration(id: ConfigId, n: usize, a: &[f64], b: &[f64]) -> Configuration {
    Configuration {
        id,
        gate_on: id == ConfigId::GateOn,
        diode_conducting: id == ConfigId::DiodeOn,
        a: DMatrix::from_row_slice(n, n, a),
        b: DVector::from_row_slice(b),
    }
}

fn output(name: &str, unit: Unit, on: AffineMap, diode: AffineMap, idle: AffineMap) -> OutputMap {
    OutputMap {
        name: name.to_string(),
        unit,
        per_config: [on, diode, idle],
    }
}

fn sepic(params: &StageParameters, p: &ParasiticSet) -> SwitchedCircuit {
    let vs = params.source_voltage;
    let (l1, l2) = (params.inductances[0], params.inductances[1]);
    let (c1, c2) = (params.capacitances[0], params.capacitances[1]);
    let r = params.load_resistance;
    let (r_l, r_c, r_ds) = (p.inductor_esr, p.capacitor_esr, p.switch_on_resistance);
    let (v_f, r_f) = (p.diode_forward_voltage, p.diode_series_resistance);
    // output node divides between the load and the capacitor ESR
    let k = r / (r + r_c);
    // resistance seen by the diode current up to the output capacitor
    let g = k * r_c + r_f;
    let l_loop = l1 + l2;
    let r_loop = 2.0 * r_l + r_c;

    #[rustfmt::skip]
    let on = configuration(ConfigId::GateOn, 4, &[
        -(r_ds + r_l) / l1, -r_ds / l1,               0.0,      0.0,
        -r_ds / l2,         -(r_ds + r_c + r_l) / l2, 1.0 / l2, 0.0,
        0.0,                -1.0 / c1,                0.0,      0.0,
        0.0,                0.0,                      0.0,      -k / (r * c2),
    ], &[vs / l1, 0.0, 0.0, 0.0]);

    #[rustfmt::skip]
    let diode = configuration(ConfigId::DiodeOn, 4, &[
        -(g + r_c + r_l) / l1, -g / l1,         -1.0 / l1, -k / l1,
        -g / l2,               -(g + r_l) / l2, 0.0,       -k / l2,
        1.0 / c1,              0.0,             0.0,       0.0,
        k / c2,                k / c2,          0.0,       -k / (r * c2),
    ], &[(vs - v_f) / l1, -v_f / l2, 0.0, 0.0]);

    // L1, C1 and L2 form a series loop carrying (i_L1 - i_L2)/2.
    let half = r_loop / (2.0 * l_loop);
    #[rustfmt::skip]
    let idle = configuration(ConfigId::Idle, 4, &[
        -half,            half,              -1.0 / l_loop, 0.0,
        half,             -half,             1.0 / l_loop,  0.0,
        0.5 / c1,         -0.5 / c1,         0.0,           0.0,
        0.0,              0.0,               0.0,           -k / (r * c2),
    ], &[vs / l_loop, -vs / l_loop, 0.0, 0.0]);

    let m = AffineMap::new;
    let outputs = vec![
        output(
            "v_out",
            Unit::Volt,
            m(&[0.0, 0.0, 0.0, k], 0.0),
            m(&[k * r_c, k * r_c, 0.0, k], 0.0),
            m(&[0.0, 0.0, 0.0, k], 0.0),
        ),
        output(
            "i_out",
            Unit::Ampere,
            m(&[0.0, 0.0, 0.0, k / r], 0.0),
            m(&[k * r_c / r, k * r_c / r, 0.0, k / r], 0.0),
            m(&[0.0, 0.0, 0.0, k / r], 0.0),
        ),
        output(
            "i_in",
            Unit::Ampere,
            m(&[1.0, 0.0, 0.0, 0.0], 0.0),
            m(&[1.0, 0.0, 0.0, 0.0], 0.0),
            m(&[0.5, -0.5, 0.0, 0.0], 0.0),
        ),
        output(
            "i_sw",
            Unit::Ampere,
            m(&[1.0, 1.0, 0.0, 0.0], 0.0),
            m(&[0.0; 4], 0.0),
            m(&[0.0; 4], 0.0),
        ),
        output(
            "v_sw",
            Unit::Volt,
            m(&[r_ds, r_ds, 0.0, 0.0], 0.0),
            m(&[g + r_c, g, 1.0, k], v_f),
            // v_A = Vs - v_L1 with v_L1 = L1 d(loop)/dt + r_L * loop
            m(
                &[
                    l1 * half - r_l * 0.5,
                    -l1 * half + r_l * 0.5,
                    l1 / l_loop,
                    0.0,
                ],
                vs - l1 * vs / l_loop,
            ),
        ),
        output(
            "i_D",
            Unit::Ampere,
            m(&[0.0; 4], 0.0),
            m(&[1.0, 1.0, 0.0, 0.0], 0.0),
            m(&[0.0; 4], 0.0),
        ),
    ];

    SwitchedCircuit {
        topology: Topology::Sepic,
        state_labels: ["i_L1", "i_L2", "v_C1", "v_C2"].map(String::from).to_vec(),
        state_units: vec![Unit::Ampere, Unit::Ampere, Unit::Volt, Unit::Volt],
        configurations: vec![on, diode, idle],
        outputs,
        params: params.clone(),
        diode_row: DVector::from_row_slice(&[1.0, 1.0, 0.0, 0.0]),
        inductor_states: vec![0, 1],
        capacitor_states: vec![2, 3],
        output_capacitor: 3,
    }
}

fn inverting_buck_boost(params: &StageParameters, p: &ParasiticSet) -> SwitchedCircuit {
    let vs = params.source_voltage;
    let l = params.inductances[0];
    let c = params.capacitances[0];
    let r = params.load_resistance;
    let (r_l, r_c, r_ds) = (p.inductor_esr, p.capacitor_esr, p.switch_on_resistance);
    let (v_f, r_f) = (p.diode_forward_voltage, p.diode_series_resistance);
    let k = r / (r + r_c);
    let g = k * r_c + r_f;

    #[rustfmt::skip]
    let on = configuration(ConfigId::GateOn, 2, &[
        -(r_ds + r_l) / l, 0.0,
        0.0,               -k / (r * c),
    ], &[vs / l, 0.0]);
    #[rustfmt::skip]
    let diode = configuration(ConfigId::DiodeOn, 2, &[
        -(g + r_l) / l, k / l,
        -k / c,         -k / (r * c),
    ], &[-v_f / l, 0.0]);
    #[rustfmt::skip]
    let idle = configuration(ConfigId::Idle, 2, &[
        0.0, 0.0,
        0.0, -k / (r * c),
    ], &[0.0, 0.0]);

    let m = AffineMap::new;
    let outputs = vec![
        output(
            "v_out",
            Unit::Volt,
            m(&[0.0, k], 0.0),
            m(&[-k * r_c, k], 0.0),
            m(&[0.0, k], 0.0),
        ),
        output(
            "i_out",
            Unit::Ampere,
            m(&[0.0, k / r], 0.0),
            m(&[-k * r_c / r, k / r], 0.0),
            m(&[0.0, k / r], 0.0),
        ),
        output(
            "i_in",
            Unit::Ampere,
            m(&[1.0, 0.0], 0.0),
            m(&[0.0, 0.0], 0.0),
            m(&[0.0, 0.0], 0.0),
        ),
        output(
            "i_sw",
            Unit::Ampere,
            m(&[1.0, 0.0], 0.0),
            m(&[0.0, 0.0], 0.0),
            m(&[0.0, 0.0], 0.0),
        ),
        output(
            "v_sw",
            Unit::Volt,
            m(&[r_ds, 0.0], 0.0),
            m(&[g, -k], vs + v_f),
            m(&[0.0, 0.0], vs),
        ),
        output(
            "i_D",
            Unit::Ampere,
            m(&[0.0, 0.0], 0.0),
            m(&[1.0, 0.0], 0.0),
            m(&[0.0, 0.0], 0.0),
        ),
    ];

    SwitchedCircuit {
        topology: Topology::InvertingBuckBoost,
        state_labels: ["i_L", "v_C"].map(String::from).to_vec(),
        state_units: vec![Unit::Ampere, Unit::Volt],
        configurations: vec![on, diode, idle],
        outputs,
        params: params.clone(),
        diode_row: DVector::from_row_slice(&[1.0, 0.0]),
        inductor_states: vec![0],
        capacitor_states: vec![1],
        output_capacitor: 1,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::sizing::design_stage;

    pub(crate) fn stage1() -> StageSpec {
        StageSpec {
            topology: Topology::Sepic,
            source_voltage: 55.0,
            output_voltage: 12.0,
            output_current: 2.0,
            switching_frequency: 1e5,
            coupling_cap_ripple_frac: Some(0.005),
            output_ripple_frac: 0.01,
            source_current: Some(10.0),
        }
    }

    pub(crate) fn stage3() -> StageSpec {
        StageSpec {
            topology: Topology::InvertingBuckBoost,
            source_voltage: 5.0,
            output_voltage: -12.0,
            output_current: 0.5,
            switching_frequency: 1e5,
            coupling_cap_ripple_frac: None,
            output_ripple_frac: 0.01,
            source_current: None,
        }
    }

    fn build(spec: &StageSpec, p: ParasiticSet) -> SwitchedCircuit {
        build_stage_circuit(&design_stage(spec).unwrap(), spec, &p).unwrap()
    }

    fn lossy() -> ParasiticSet {
        ParasiticSet {
            inductor_esr: 0.05,
            switch_on_resistance: 0.08,
            capacitor_esr: 0.03,
            diode_forward_voltage: 0.6,
            diode_series_resistance: 0.02,
            constant_switching_loss: 0.0,
        }
    }

    #[test]
    fn structure() {
        let c = build(&stage1(), ParasiticSet::IDEAL);
        assert_eq!(c.dimension(), 4);
        assert_eq!(c.configurations.len(), 3);
        assert_eq!(c.state_labels, ["i_L1", "i_L2", "v_C1", "v_C2"]);
        let c = build(&stage3(), ParasiticSet::IDEAL);
        assert_eq!(c.dimension(), 2);
        assert_eq!(c.configurations.len(), 3);
        assert_eq!(c.state_labels, ["i_L", "v_C"]);
    }

    #[test]
    fn ideal_inductor_states_have_no_self_damping() {
        for spec in [stage1(), stage3()] {
            let c = build(&spec, ParasiticSet::IDEAL);
            for cfg in &c.configurations {
                for &i in &c.inductor_states {
                    assert_eq!(cfg.a[(i, i)], 0.0, "{:?}", cfg.id);
                }
            }
        }
    }

    #[test]
    fn sepic_branch_currents() {
        let c = build(&stage1(), ParasiticSet::IDEAL);
        let x = DVector::from_row_slice(&[1.0, 0.5, 55.0, 12.0]);
        let on = c.branch_currents(&x, ConfigId::GateOn).unwrap();
        assert_eq!((on.i_sw, on.i_d), (1.5, 0.0));
        let off = c.branch_currents(&x, ConfigId::DiodeOn).unwrap();
        assert_eq!((off.i_sw, off.i_d), (0.0, 1.5));
        let idle = c.branch_currents(&x, ConfigId::Idle).unwrap();
        assert_eq!((idle.i_sw, idle.i_d), (0.0, 0.0));
        assert!(c
            .branch_currents(&DVector::zeros(2), ConfigId::GateOn)
            .is_err());
    }

    #[test]
    fn buck_boost_branch_currents() {
        let c = build(&stage3(), ParasiticSet::IDEAL);
        let x = DVector::from_row_slice(&[1.7, -12.0]);
        let off = c.branch_currents(&x, ConfigId::DiodeOn).unwrap();
        assert_eq!(off.i_d, 1.7);
        assert_eq!(off.i_sw, 0.0);
        assert_eq!(off.v_out, -12.0);
        // capacitor supplies the load and absorbs the diode current
        assert!((off.i_c_out - (-1.7 + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn unknown_configuration_index() {
        assert!(matches!(
            ConfigId::from_index(3),
            Err(Error::UnknownConfiguration(3))
        ));
        assert_eq!(ConfigId::from_index(2).unwrap(), ConfigId::Idle);
    }

    #[test]
    fn transitions() {
        let c = build(&stage1(), ParasiticSet::IDEAL);
        let conducting = DVector::from_row_slice(&[1.0, 0.5, 55.0, 12.0]);
        assert_eq!(
            c.configuration_transition(&conducting, false),
            ConfigId::DiodeOn
        );
        let blocked = DVector::from_row_slice(&[0.3, -0.3, 55.0, 12.0]);
        assert_eq!(c.configuration_transition(&blocked, false), ConfigId::Idle);
        for x in [&conducting, &blocked] {
            assert_eq!(c.configuration_transition(x, true), ConfigId::GateOn);
        }
    }

    #[test]
    fn zero_state_zero_source_is_equilibrium() {
        for spec in [stage1(), stage3()] {
            let design = design_stage(&spec).unwrap();
            let mut params = StageParameters::from_design(&design, &spec, ParasiticSet::IDEAL);
            params.source_voltage = 0.0;
            let c = SwitchedCircuit::build(&params).unwrap();
            let zero = DVector::zeros(c.dimension());
            for cfg in &c.configurations {
                assert_eq!(cfg.derivative(&zero).norm(), 0.0);
            }
        }
    }

    fn kcl_residuals(c: &SwitchedCircuit, id: ConfigId, x: &DVector<f64>) -> Vec<f64> {
        let o = |name: &str| c.output(name).unwrap().eval(id, x);
        match c.topology {
            Topology::Sepic => vec![
                // switch node, diode anode node, output node
                x[0] - o("i_C1") - o("i_sw"),
                o("i_C1") + x[1] - o("i_D"),
                o("i_D") - o("i_C2") - o("i_out"),
            ],
            Topology::InvertingBuckBoost => vec![
                o("i_sw") + o("i_D") - x[0],
                -o("i_D") - o("i_C") - o("i_out"),
            ],
        }
    }

    fn state_strategy(n: usize) -> impl Strategy<Value = DVector<f64>> {
        proptest::collection::vec(-20.0f64..20.0, n).prop_map(DVector::from_vec)
    }

    proptest! {
        #[test]
        fn kcl_holds_everywhere(x4 in state_strategy(4), x2 in state_strategy(2), ideal in any::<bool>()) {
            let p = if ideal { ParasiticSet::IDEAL } else { lossy() };
            for (spec, x) in [(stage1(), x4), (stage3(), x2)] {
                let c = build(&spec, p);
                for id in ConfigId::ALL {
                    let mut x = x.clone();
                    if id == ConfigId::Idle {
                        c.project_idle(&mut x);
                    }
                    for r in kcl_residuals(&c, id, &x) {
                        prop_assert!(r.abs() < 1e-9, "{id:?} residual {r}");
                    }
                }
            }
        }

        #[test]
        fn ideal_dynamics_conserve_energy(x4 in state_strategy(4), x2 in state_strategy(2)) {
            for (spec, x) in [(stage1(), x4), (stage3(), x2)] {
                let c = build(&spec, ParasiticSet::IDEAL);
                for id in ConfigId::ALL {
                    let mut x = x.clone();
                    if id == ConfigId::Idle {
                        c.project_idle(&mut x);
                    }
                    let dx = c.configuration(id).derivative(&x);
                    let mut de = 0.0;
                    for (k, &i) in c.inductor_states.iter().enumerate() {
                        de += c.params.inductances[k] * x[i] * dx[i];
                    }
                    for (k, &i) in c.capacitor_states.iter().enumerate() {
                        de += c.params.capacitances[k] * x[i] * dx[i];
                    }
                    let balance = c.source_power(id, &x) - c.load_power(id, &x);
                    let scale = 1.0 + balance.abs() + de.abs();
                    prop_assert!((de - balance).abs() < 1e-9 * scale, "{id:?}: {de} vs {balance}");
                }
            }
        }

        #[test]
        fn lossy_dynamics_dissipate(x4 in state_strategy(4), x2 in state_strategy(2)) {
            for (spec, x) in [(stage1(), x4), (stage3(), x2)] {
                let c = build(&spec, ParasiticSet { diode_forward_voltage: 0.0, ..lossy() });
                for id in ConfigId::ALL {
                    let mut x = x.clone();
                    if id == ConfigId::Idle {
                        c.project_idle(&mut x);
                    }
                    let dx = c.configuration(id).derivative(&x);
                    let mut de = 0.0;
                    for (k, &i) in c.inductor_states.iter().enumerate() {
                        de += c.params.inductances[k] * x[i] * dx[i];
                    }
                    for (k, &i) in c.capacitor_states.iter().enumerate() {
                        de += c.params.capacitances[k] * x[i] * dx[i];
                    }
                    let balance = c.source_power(id, &x) - c.load_power(id, &x);
                    prop_assert!(de <= balance + 1e-9 * (1.0 + balance.abs()));
                }
            }
        }
    }
}
