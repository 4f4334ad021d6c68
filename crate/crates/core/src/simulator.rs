//! Fixed-step transient simulation of a [`SwitchedCircuit`] to periodic
//! steady state.
//!
//! Every configuration is integrated with the classical fourth-order
//! Runge-Kutta method. Because each configuration is affine and autonomous,
//! a full RK4 step is the fixed linear map `x -> Φx + γ`, which is
//! precomputed once per configuration. Partial steps (at the gate-off edge
//! and around diode commutation) run the RK4 stages directly.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::circuit::{ConfigId, Configuration, SwitchedCircuit, Unit};
use crate::error::{Error, Result};
use crate::numfmt::sig10;

/// Diode zero crossings are located to `dt / 2^COMMUTATION_BISECTIONS`.
const COMMUTATION_BISECTIONS: u32 = 30;

/// Periods of plain iteration between Newton corrections of the cycle map.
const NEWTON_INTERVAL: usize = 50;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub steps_per_period: usize,
    pub max_cycles: usize,
    /// Max-norm relative change of the period-boundary state that counts as
    /// steady state.
    pub steady_state_tol: f64,
    /// Signals to record; empty records all of them.
    pub record: Vec<String>,
    /// Number of converged periods to record.
    pub record_cycles: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            steps_per_period: 2000,
            max_cycles: 20_000,
            steady_state_tol: 1e-6,
            record: Vec::new(),
            record_cycles: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_period < 100 {
            return Err(Error::InvalidSimConfig(format!(
                "steps_per_period must be >= 100, got {}",
                self.steps_per_period
            )));
        }
        if !(self.steady_state_tol > 0.0) {
            return Err(Error::InvalidSimConfig(format!(
                "steady_state_tol must be > 0, got {}",
                self.steady_state_tol
            )));
        }
        if self.max_cycles == 0 {
            return Err(Error::InvalidSimConfig("max_cycles must be >= 1".into()));
        }
        if self.record_cycles == 0 {
            return Err(Error::InvalidSimConfig("record_cycles must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConductionMode {
    #[serde(rename = "CCM")]
    Continuous,
    #[serde(rename = "DCM")]
    Discontinuous,
}

impl ConductionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ConductionMode::Continuous => "CCM",
            ConductionMode::Discontinuous => "DCM",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub name: String,
    pub unit: Unit,
    pub samples: Vec<f64>,
}

/// Uniformly sampled signals. Sample `k` sits at `t_start + k dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct WaveformSet {
    pub dt: f64,
    pub t_start: f64,
    pub signals: Vec<Signal>,
    /// Sample indices at which recorded periods start.
    pub cycle_boundaries: Vec<usize>,
}

impl WaveformSet {
    pub fn get(&self, name: &str) -> Option<&Signal> {
        self.signals.iter().find(|s| s.name == name)
    }

    pub fn len(&self) -> usize {
        self.signals.first().map_or(0, |s| s.samples.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    /// Samples of the last recorded period, both endpoints included.
    pub fn last_period<'a>(&'a self, signal: &'a Signal) -> &'a [f64] {
        let start = self.cycle_boundaries.last().copied().unwrap_or(0);
        &signal.samples[start..]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let header = self
            .signals
            .iter()
            .map(|s| format!("{} ({})", s.name, s.unit.symbol()));
        write_csv_header(&mut out, header)?;
        let mut row = Vec::with_capacity(self.signals.len());
        for k in 0..self.len() {
            row.clear();
            row.extend(self.signals.iter().map(|s| s.samples[k]));
            write_csv_row(&mut out, self.time(k), &row)?;
        }
        Ok(())
    }
}

pub fn write_csv_header<W: Write>(
    out: &mut W,
    names: impl Iterator<Item = String>,
) -> io::Result<()> {
    write!(out, "t (s)")?;
    for name in names {
        write!(out, ",{name}")?;
    }
    writeln!(out)
}

pub fn write_csv_row<W: Write>(out: &mut W, t: f64, values: &[f64]) -> io::Result<()> {
    write!(out, "{t}")?;
    for v in values {
        write!(out, ",{}", sig10(*v))?;
    }
    writeln!(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteadyState {
    pub waveforms: WaveformSet,
    pub cycles_run: usize,
    pub converged: bool,
    pub conduction_mode: ConductionMode,
    /// State at the end of the last simulated period.
    pub final_state: DVector<f64>,
    /// Max-norm relative change over the last convergence period.
    pub residual: f64,
}

/// Gate level of a fixed-duty schedule: on for `t mod T` in `[0, DT)`.
pub fn duty_schedule(duty: f64, period: f64, t: f64) -> bool {
    t.rem_euclid(period) < duty * period
}

/// One classical RK4 step of `dx/dt = A x + b`.
pub fn rk4_step(cfg: &Configuration, x: &DVector<f64>, h: f64) -> DVector<f64> {
    let k1 = cfg.derivative(x);
    let k2 = cfg.derivative(&(x + &k1 * (0.5 * h)));
    let k3 = cfg.derivative(&(x + &k2 * (0.5 * h)));
    let k4 = cfg.derivative(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// RK4 over a full step as an affine map `x -> Φx + γ`.
#[derive(Clone, Debug)]
pub struct Propagator {
    phi: DMatrix<f64>,
    gamma: DVector<f64>,
}

impl Propagator {
    pub fn new(cfg: &Configuration, h: f64) -> Self {
        let n = cfg.a.nrows();
        let ha = &cfg.a * h;
        let ha2 = &ha * &ha;
        let ha3 = &ha2 * &ha;
        let ha4 = &ha3 * &ha;
        let eye = DMatrix::<f64>::identity(n, n);
        let phi = &eye + &ha + &ha2 / 2.0 + &ha3 / 6.0 + &ha4 / 24.0;
        let series = &eye + &ha / 2.0 + &ha2 / 6.0 + &ha3 / 24.0;
        let gamma = series * &cfg.b * h;
        Self { phi, gamma }
    }

    pub fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        out.copy_from(&self.gamma);
        out.gemv(1.0, &self.phi, x, 1.0);
    }
}

#[derive(Clone, Copy, Debug)]
enum Source {
    State(usize),
    Output(usize),
    SwitchPower { v: usize, i: usize },
}

struct Probe {
    names: Vec<(String, Unit)>,
    sources: Vec<Source>,
}

impl Probe {
    fn new(circuit: &SwitchedCircuit, record: &[String]) -> Result<Self> {
        let mut all: Vec<(String, Unit, Source)> = Vec::new();
        for (i, label) in circuit.state_labels.iter().enumerate() {
            all.push((label.clone(), circuit.state_units[i], Source::State(i)));
        }
        for (i, o) in circuit.outputs.iter().enumerate() {
            all.push((o.name.clone(), o.unit, Source::Output(i)));
        }
        let index = |name: &str| circuit.outputs.iter().position(|o| o.name == name);
        if let (Some(v), Some(i)) = (index("v_sw"), index("i_sw")) {
            all.push(("p_sw".into(), Unit::Watt, Source::SwitchPower { v, i }));
        }

        let chosen: Vec<_> = if record.is_empty() {
            all
        } else {
            record
                .iter()
                .map(|name| {
                    all.iter()
                        .find(|(n, _, _)| n == name)
                        .cloned()
                        .ok_or_else(|| Error::UnknownSignal(name.clone()))
                })
                .collect::<Result<_>>()?
        };
        Ok(Self {
            names: chosen.iter().map(|(n, u, _)| (n.clone(), *u)).collect(),
            sources: chosen.into_iter().map(|(_, _, s)| s).collect(),
        })
    }

    fn eval(
        &self,
        circuit: &SwitchedCircuit,
        config: ConfigId,
        x: &DVector<f64>,
        out: &mut Vec<f64>,
    ) {
        out.clear();
        out.extend(self.sources.iter().map(|s| match *s {
            Source::State(i) => x[i],
            Source::Output(i) => circuit.outputs[i].eval(config, x),
            Source::SwitchPower { v, i } => {
                circuit.outputs[v].eval(config, x) * circuit.outputs[i].eval(config, x)
            }
        }));
    }
}

/// Result of a single fixed step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub state: DVector<f64>,
    pub config: ConfigId,
    /// The diode stopped conducting during this step.
    pub entered_idle: bool,
}

/// Advances one step of length `dt` from time `t`, the gate level held at
/// its value at `t`. `config` is the configuration active before the step.
pub fn step(
    circuit: &SwitchedCircuit,
    state: &DVector<f64>,
    config: ConfigId,
    t: f64,
    dt: f64,
) -> Result<StepOutcome> {
    circuit.check_state(state)?;
    if !(dt > 0.0) {
        return Err(Error::Domain {
            name: "dt",
            value: dt,
            expected: "dt > 0",
        });
    }
    let gate = duty_schedule(circuit.params.duty, circuit.params.period, t);
    let mut x = state.clone();
    let mut entered_idle = false;
    let config = if gate {
        x = rk4_step(circuit.configuration(ConfigId::GateOn), &x, dt);
        ConfigId::GateOn
    } else {
        let mut cfg = off_config(circuit, &x, config);
        entered_idle = off_interval(circuit, &mut x, &mut cfg, dt, dt, None);
        cfg
    };
    if x.iter().all(|v| v.is_finite()) {
        Ok(StepOutcome {
            state: x,
            config,
            entered_idle,
        })
    } else {
        Err(Error::Diverged { time: t + dt })
    }
}

/// Configuration for a gate-off step. A conducting diode keeps conducting
/// until its current crosses zero inside a step.
fn off_config(circuit: &SwitchedCircuit, x: &DVector<f64>, previous: ConfigId) -> ConfigId {
    match previous {
        ConfigId::DiodeOn => ConfigId::DiodeOn,
        _ => circuit.configuration_transition(x, false),
    }
}

/// Integrates a gate-off interval of length `h`, switching to the idle
/// configuration where the diode current crosses zero. Returns whether
/// that happened.
fn off_interval(
    circuit: &SwitchedCircuit,
    x: &mut DVector<f64>,
    config: &mut ConfigId,
    h: f64,
    dt: f64,
    full_step: Option<&[Propagator; 3]>,
) -> bool {
    let cfg = circuit.configuration(*config);
    let advance = |from: &DVector<f64>, len: f64| match full_step {
        Some(props) if len == h => {
            let mut out = DVector::zeros(from.len());
            props[cfg.id.index()].apply(from, &mut out);
            out
        }
        _ => rk4_step(cfg, from, len),
    };
    let next = advance(x, h);
    if *config != ConfigId::DiodeOn || circuit.diode_current(&next) >= 0.0 {
        *x = next;
        return false;
    }

    let (mut lo, mut hi) = (0.0, h);
    let resolution = dt / f64::from(1u32 << COMMUTATION_BISECTIONS);
    while hi - lo > resolution {
        let mid = 0.5 * (lo + hi);
        if circuit.diode_current(&rk4_step(cfg, x, mid)) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut at_zero = rk4_step(cfg, x, lo);
    circuit.project_idle(&mut at_zero);
    *config = ConfigId::Idle;
    let rest = h - lo;
    *x = if rest > 0.0 {
        rk4_step(circuit.configuration(ConfigId::Idle), &at_zero, rest)
    } else {
        at_zero
    };
    true
}

/// Integrates whole switching periods of one circuit.
pub struct PeriodIntegrator<'a> {
    circuit: &'a SwitchedCircuit,
    steps: usize,
    dt: f64,
    /// Gate-off instant in units of steps.
    edge: f64,
    props: [Propagator; 3],
}

impl<'a> PeriodIntegrator<'a> {
    pub fn new(circuit: &'a SwitchedCircuit, steps_per_period: usize) -> Self {
        let dt = circuit.params.period / steps_per_period as f64;
        let props = ConfigId::ALL.map(|id| Propagator::new(circuit.configuration(id), dt));
        Self {
            circuit,
            steps: steps_per_period,
            dt,
            edge: circuit.params.duty * steps_per_period as f64,
            props,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advances `x` by one period starting at the gate-on edge. `sample`
    /// sees the state and active configuration at the start of every step.
    /// Returns whether the idle configuration was entered.
    pub fn run_period(
        &self,
        x: &mut DVector<f64>,
        mut sample: impl FnMut(usize, ConfigId, &DVector<f64>),
    ) -> bool {
        let mut config = ConfigId::GateOn;
        let mut next = DVector::zeros(x.len());
        let mut idle = false;
        for k in 0..self.steps {
            let start = k as f64;
            if start + 1.0 <= self.edge {
                config = ConfigId::GateOn;
                sample(k, config, x);
                self.props[ConfigId::GateOn.index()].apply(x, &mut next);
                std::mem::swap(x, &mut next);
            } else if start >= self.edge {
                config = off_config(self.circuit, x, config);
                sample(k, config, x);
                idle |= off_interval(
                    self.circuit,
                    x,
                    &mut config,
                    self.dt,
                    self.dt,
                    Some(&self.props),
                );
            } else {
                sample(k, ConfigId::GateOn, x);
                let on_len = (self.edge - start) * self.dt;
                *x = rk4_step(self.circuit.configuration(ConfigId::GateOn), x, on_len);
                config = self.circuit.configuration_transition(x, false);
                let off_len = self.dt - on_len;
                idle |= off_interval(self.circuit, x, &mut config, off_len, self.dt, None);
            }
        }
        idle
    }
}

impl PeriodIntegrator<'_> {
    fn period_map(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        self.run_period(&mut y, |_, _, _| {});
        y
    }

    /// One Newton step towards the fixed point of the period map `P`,
    /// from `start` with `mapped = P(start)`. The Jacobian comes from
    /// finite differences through the full stepper, so commutation events
    /// are honoured. Returns the corrected state only when it shrinks the
    /// cycle-to-cycle change below `residual`.
    ///
    /// Plain iteration alone cannot settle modes the load never damps, such
    /// as the lossless L1-C1-L2 loop current of an ideal SEPIC.
    fn newton_candidate(
        &self,
        start: &DVector<f64>,
        mapped: &DVector<f64>,
        residual: f64,
    ) -> Option<DVector<f64>> {
        let n = start.len();
        let scale = start.amax().max(mapped.amax()).max(1e-9);
        let delta = 1e-6 * scale;
        let mut jacobian = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut probe = start.clone();
            probe[j] += delta;
            let column = (self.period_map(&probe) - mapped) / delta;
            jacobian.set_column(j, &column);
        }
        let system = jacobian - DMatrix::<f64>::identity(n, n);
        let step = system.lu().solve(&(start - mapped))?;
        let candidate = start + step;
        if !candidate.iter().all(|v| v.is_finite()) {
            return None;
        }
        let improved = relative_change(&candidate, &self.period_map(&candidate));
        (improved < residual).then_some(candidate)
    }
}

pub fn run_to_steady_state(circuit: &SwitchedCircuit, config: &SimConfig) -> Result<SteadyState> {
    simulate(circuit, config, None)
}

/// Like [`run_to_steady_state`], also streaming every sample from `t = 0`
/// to `transient` as `(t, recorded values)`.
pub fn run_with_transient(
    circuit: &SwitchedCircuit,
    config: &SimConfig,
    transient: &mut dyn FnMut(f64, &[f64]),
) -> Result<SteadyState> {
    simulate(circuit, config, Some(transient))
}

/// Names and units of the signals `config.record` resolves to.
pub fn recorded_signals(
    circuit: &SwitchedCircuit,
    config: &SimConfig,
) -> Result<Vec<(String, Unit)>> {
    Ok(Probe::new(circuit, &config.record)?.names)
}

/// Receives `(t, recorded values)` for every transient sample.
type TransientSink<'a> = dyn FnMut(f64, &[f64]) + 'a;

fn simulate(
    circuit: &SwitchedCircuit,
    config: &SimConfig,
    mut transient: Option<&mut TransientSink>,
) -> Result<SteadyState> {
    config.validate()?;
    let probe = Probe::new(circuit, &config.record)?;
    let integrator = PeriodIntegrator::new(circuit, config.steps_per_period);
    let dt = integrator.dt();
    let period = circuit.params.period;
    let n = config.steps_per_period;

    let mut x = DVector::zeros(circuit.dimension());
    let mut values = Vec::with_capacity(probe.sources.len());
    let mut cycles = 0;
    let mut converged = false;
    let mut residual = f64::INFINITY;

    while cycles < config.max_cycles {
        let start = x.clone();
        let t0 = cycles as f64 * period;
        match transient.as_deref_mut() {
            Some(sink) => {
                integrator.run_period(&mut x, |k, cfg, state| {
                    probe.eval(circuit, cfg, state, &mut values);
                    sink(t0 + k as f64 * dt, &values);
                });
            }
            None => {
                integrator.run_period(&mut x, |_, _, _| {});
            }
        }
        cycles += 1;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                time: cycles as f64 * period,
            });
        }
        residual = relative_change(&start, &x);
        if residual < config.steady_state_tol {
            converged = true;
            break;
        }
        if cycles % NEWTON_INTERVAL == 0 {
            if let Some(candidate) = integrator.newton_candidate(&start, &x, residual) {
                x = candidate;
            }
        }
    }

    let t_start = cycles as f64 * period;
    let mut samples: Vec<Vec<f64>> =
        vec![Vec::with_capacity(n * config.record_cycles + 1); probe.sources.len()];
    let mut boundaries = Vec::with_capacity(config.record_cycles);
    let mut idle_in_last = false;
    for c in 0..config.record_cycles {
        boundaries.push(c * n);
        let t0 = (cycles + c) as f64 * period;
        idle_in_last = integrator.run_period(&mut x, |k, cfg, state| {
            probe.eval(circuit, cfg, state, &mut values);
            for (column, v) in samples.iter_mut().zip(&values) {
                column.push(*v);
            }
            if let Some(sink) = transient.as_deref_mut() {
                sink(t0 + k as f64 * dt, &values);
            }
        });
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                time: (cycles + c + 1) as f64 * period,
            });
        }
    }
    let cycles_run = cycles + config.record_cycles;
    // closing sample: gate back on at the period boundary
    probe.eval(circuit, ConfigId::GateOn, &x, &mut values);
    for (column, v) in samples.iter_mut().zip(&values) {
        column.push(*v);
    }
    if let Some(sink) = transient {
        sink(cycles_run as f64 * period, &values);
    }

    let signals = probe
        .names
        .into_iter()
        .zip(samples)
        .map(|((name, unit), samples)| Signal {
            name,
            unit,
            samples,
        })
        .collect();

    Ok(SteadyState {
        waveforms: WaveformSet {
            dt,
            t_start,
            signals,
            cycle_boundaries: boundaries,
        },
        cycles_run,
        converged,
        conduction_mode: if idle_in_last {
            ConductionMode::Discontinuous
        } else {
            ConductionMode::Continuous
        },
        final_state: x,
        residual,
    })
}

/// `max|b - a| / max(|a|, |b|)`, zero when both states vanish.
pub fn relative_change(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let diff = (b - a).amax();
    let scale = a.amax().max(b.amax());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use approx::assert_relative_eq;

    use super::*;
    use crate::circuit::{build_stage_circuit, StageParameters};
    use crate::measure::stats;
    use crate::quantities::{ParasiticSet, StageSpec, Topology};
    use crate::sizing::design_stage;

    fn stage(topology: Topology, vs: f64, vo: f64, io: f64) -> StageSpec {
        StageSpec {
            topology,
            source_voltage: vs,
            output_voltage: vo,
            output_current: io,
            switching_frequency: 1e5,
            coupling_cap_ripple_frac: Some(0.005),
            output_ripple_frac: 0.01,
            source_current: None,
        }
    }

    fn stage1() -> StageSpec {
        stage(Topology::Sepic, 55.0, 12.0, 2.0)
    }

    fn stage3() -> StageSpec {
        stage(Topology::InvertingBuckBoost, 5.0, -12.0, 0.5)
    }

    fn circuit(spec: &StageSpec) -> SwitchedCircuit {
        build_stage_circuit(&design_stage(spec).unwrap(), spec, &ParasiticSet::IDEAL).unwrap()
    }

    fn mean_of(result: &SteadyState, name: &str) -> f64 {
        let w = &result.waveforms;
        stats(w.last_period(w.get(name).unwrap())).unwrap().mean
    }

    #[test]
    fn duty_schedule_edges() {
        assert!(duty_schedule(0.179, 1e-5, 0.0));
        assert!(!duty_schedule(0.179, 1e-5, 0.18e-5));
        assert!(duty_schedule(0.5, 2e-5, 0.5e-5));
        assert!(duty_schedule(0.5, 2e-5, 2e-5 + 0.1e-5));
        assert!(!duty_schedule(0.5, 2e-5, 1.5e-5));
    }

    #[test]
    fn rest_without_source_stays_at_rest() {
        let spec = stage3();
        let design = design_stage(&spec).unwrap();
        let mut params = StageParameters::from_design(&design, &spec, ParasiticSet::IDEAL);
        params.source_voltage = 0.0;
        let c = SwitchedCircuit::build(&params).unwrap();
        let mut x = DVector::zeros(2);
        let mut config = ConfigId::GateOn;
        for k in 0..400 {
            let out = step(&c, &x, config, k as f64 * 5e-9, 5e-9).unwrap();
            x = out.state;
            config = out.config;
        }
        assert_eq!(x.amax(), 0.0);
    }

    #[test]
    fn rl_charging_matches_exponential() {
        let (v, r, l) = (10.0, 2.0, 1e-3);
        let cfg = Configuration {
            id: ConfigId::GateOn,
            gate_on: true,
            diode_conducting: false,
            a: DMatrix::from_element(1, 1, -r / l),
            b: DVector::from_element(1, v / l),
        };
        let t_end = 5.0 * l / r;
        let steps = 500;
        let h = t_end / steps as f64;
        let prop = Propagator::new(&cfg, h);
        let mut x = DVector::zeros(1);
        let mut y = DVector::zeros(1);
        let mut scratch = DVector::zeros(1);
        for _ in 0..steps {
            x = rk4_step(&cfg, &x, h);
            prop.apply(&y, &mut scratch);
            std::mem::swap(&mut y, &mut scratch);
        }
        let exact = v / r * (1.0 - (-r * t_end / l).exp());
        assert_relative_eq!(x[0], exact, max_relative = 1e-6);
        assert_relative_eq!(y[0], x[0], max_relative = 1e-13);
    }

    #[test]
    fn propagator_is_rk4() {
        let c = circuit(&stage1());
        let x = DVector::from_row_slice(&[1.2, -0.4, 50.0, 11.0]);
        for cfg in &c.configurations {
            let mut out = DVector::zeros(4);
            Propagator::new(cfg, 5e-9).apply(&x, &mut out);
            let direct = rk4_step(cfg, &x, 5e-9);
            assert!((out - direct).amax() < 1e-12);
        }
    }

    #[test]
    fn halving_dt_in_ccm() {
        let c = circuit(&stage3());
        let ss = run_to_steady_state(&c, &SimConfig::default()).unwrap();
        let start = ss.final_state.clone();
        let mut coarse = start.clone();
        PeriodIntegrator::new(&c, 2000).run_period(&mut coarse, |_, _, _| {});
        let mut fine = start;
        PeriodIntegrator::new(&c, 4000).run_period(&mut fine, |_, _, _| {});
        assert!(relative_change(&coarse, &fine) < 1e-8);
    }

    #[test]
    fn ideal_stage1_output() {
        let ss = run_to_steady_state(&circuit(&stage1()), &SimConfig::default()).unwrap();
        assert!(ss.converged);
        assert_eq!(ss.conduction_mode, ConductionMode::Continuous);
        let v = mean_of(&ss, "v_out");
        assert!((v - 12.0).abs() < 0.12, "{v}");
    }

    #[test]
    fn ideal_stage3_output() {
        let ss = run_to_steady_state(&circuit(&stage3()), &SimConfig::default()).unwrap();
        assert!(ss.converged);
        let v = mean_of(&ss, "v_out");
        let i = mean_of(&ss, "i_out");
        assert!((v + 12.0).abs() < 0.12, "{v}");
        assert!((i + 0.5).abs() < 0.005, "{i}");
    }

    #[test]
    fn half_minimum_inductance_is_discontinuous() {
        let spec = stage3();
        let design = design_stage(&spec).unwrap();
        let params = StageParameters::from_design(&design, &spec, ParasiticSet::IDEAL)
            .with_inductance_factor(&design, 0.5);
        let c = SwitchedCircuit::build(&params).unwrap();
        let ss = run_to_steady_state(&c, &SimConfig::default()).unwrap();
        assert_eq!(ss.conduction_mode, ConductionMode::Discontinuous);
        let i_l = ss.waveforms.get("i_L").unwrap();
        assert!(i_l.samples.iter().all(|&i| i >= 0.0));
        assert!(i_l.samples.contains(&0.0));
    }

    #[test]
    fn continuity_boundary_flips_with_margin_sign() {
        for spec in [stage1(), stage3()] {
            let design = design_stage(&spec).unwrap();
            for (factor, mode) in [
                (0.97, ConductionMode::Discontinuous),
                (1.03, ConductionMode::Continuous),
            ] {
                let params = StageParameters::from_design(&design, &spec, ParasiticSet::IDEAL)
                    .with_inductance_factor(&design, factor);
                let c = SwitchedCircuit::build(&params).unwrap();
                let ss = run_to_steady_state(&c, &SimConfig::default()).unwrap();
                assert_eq!(ss.conduction_mode, mode, "{:?} x{factor}", spec.topology);
            }
        }
    }

    #[test]
    fn converged_cycle_is_periodic() {
        for spec in [stage1(), stage3()] {
            let c = circuit(&spec);
            let ss = run_to_steady_state(&c, &SimConfig::default()).unwrap();
            let w = &ss.waveforms;
            let scale = ss.final_state.amax();
            for label in &c.state_labels {
                let s = &w.get(label).unwrap().samples;
                let drift = (s[s.len() - 1] - s[0]).abs() / scale;
                assert!(drift < 1e-6, "{label}: {drift}");
            }
        }
    }

    #[test]
    fn waveform_shape_and_csv() {
        let cfg = SimConfig {
            steps_per_period: 200,
            record: vec!["v_out".into(), "i_L".into(), "p_sw".into()],
            ..SimConfig::default()
        };
        let ss = run_to_steady_state(&circuit(&stage3()), &cfg).unwrap();
        let w = &ss.waveforms;
        assert_eq!(w.len(), 201);
        assert_relative_eq!(w.dt * 200.0, 1e-5, max_relative = 1e-12);
        assert_eq!(w.cycle_boundaries, [0]);
        let mut csv = Vec::new();
        w.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t (s),v_out (V),i_L (A),p_sw (W)");
        assert_eq!(lines.count(), 201);
    }

    #[test]
    fn several_recorded_cycles() {
        let cfg = SimConfig {
            steps_per_period: 100,
            record_cycles: 3,
            ..SimConfig::default()
        };
        let ss = run_to_steady_state(&circuit(&stage3()), &cfg).unwrap();
        assert_eq!(ss.waveforms.len(), 301);
        assert_eq!(ss.waveforms.cycle_boundaries, [0, 100, 200]);
        assert_eq!(
            ss.waveforms.last_period(&ss.waveforms.signals[0]).len(),
            101
        );
    }

    #[test]
    fn transient_stream_starts_at_zero() {
        let cfg = SimConfig {
            steps_per_period: 100,
            record: vec!["v_out".into()],
            ..SimConfig::default()
        };
        let mut rows = Vec::new();
        let ss = run_with_transient(&circuit(&stage3()), &cfg, &mut |t, v| rows.push((t, v[0])))
            .unwrap();
        assert_eq!(rows.len(), ss.cycles_run * 100 + 1);
        assert_eq!(rows[0], (0.0, 0.0));
        assert!(rows.windows(2).all(|w| w[1].0 > w[0].0));
    }

    #[test]
    fn config_errors() {
        let c = circuit(&stage3());
        let bad = SimConfig {
            steps_per_period: 99,
            ..SimConfig::default()
        };
        assert!(matches!(
            run_to_steady_state(&c, &bad),
            Err(Error::InvalidSimConfig(_))
        ));
        let bad = SimConfig {
            record: vec!["v_nope".into()],
            ..SimConfig::default()
        };
        assert_eq!(
            run_to_steady_state(&c, &bad),
            Err(Error::UnknownSignal("v_nope".into()))
        );
    }

    #[test]
    fn non_convergence_is_flagged() {
        let cfg = SimConfig {
            max_cycles: 3,
            ..SimConfig::default()
        };
        let ss = run_to_steady_state(&circuit(&stage3()), &cfg).unwrap();
        assert!(!ss.converged);
        assert_eq!(ss.cycles_run, 4);
    }

    #[test]
    fn divergence_reports_time() {
        let mut c = circuit(&stage3());
        c.configurations[0].a[(0, 0)] = 1e12;
        let err = run_to_steady_state(&c, &SimConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Diverged { time } if time > 0.0));
    }
}
