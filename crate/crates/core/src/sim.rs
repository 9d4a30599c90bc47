//! Fixed-step simulation: one RK4 call per step over the stacked state of
//! plant, compensator and estimator, with one trace row per step.

use std::fmt;
use std::io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Compensator, ControllerError};
use crate::estimator::{regression_pair, Estimator, EstimatorError};
use crate::lti::{tf_to_statespace, StateSpaceModel};
use crate::plants::{
    linearized_tf, nonlinear_accel, plate_rates, servo_rate, servo_to_plate_angle, BallPlateParams,
    BallPlateState, PlantError,
};
use crate::scenario::{Mode, PlantModel, Scenario};
use crate::signals::{DelayBuffer, SignalError};
use crate::switching::{SwitchError, SwitchEvent, SwitchState};

/// Largest `|y|` tolerated before a run is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("divergence at t = {t}")]
    Divergence { t: f64 },
    #[error("scenario has no controller section")]
    MissingController,
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Switch(#[from] SwitchError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("invalid noise level: {0}")]
    Noise(String),
    #[error("trace I/O: {0}")]
    Io(#[from] io::Error),
    #[error("trace format: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub step: f64,
    pub duration: f64,
    pub noise_std: f64,
    pub rng_seed: u64,
    /// Require `τ` to be an integer number of steps so delayed reads land on samples.
    pub strict_delay: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { step: 1e-3, duration: 30.0, noise_std: 0.0, rng_seed: 0, strict_delay: true }
    }
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        ((self.duration / self.step).round() as usize).max(1)
    }

    pub fn violations(&self, tau: f64) -> Vec<&'static str> {
        let mut bad = Vec::new();
        if !(self.step > 0.0) {
            bad.push("step must be positive");
        }
        if !(self.duration >= self.step) {
            bad.push("duration must be at least one step");
        }
        if !(self.noise_std >= 0.0) {
            bad.push("noise_std must be non-negative");
        }
        if self.strict_delay && self.step > 0.0 {
            let r = tau / self.step;
            if (r - r.round()).abs() > 1e-9 * r.max(1.0) {
                bad.push("tau must be an integer multiple of step");
            }
        }
        bad
    }
}

/// Classical fourth-order Runge-Kutta step of `ẋ = f(t, x)`.
pub fn rk4_step<F>(mut f: F, x: &[f64], t: f64, h: f64) -> Result<Vec<f64>, SimError>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    f(t, x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4);
    let out: Vec<f64> = (0..n)
        .map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    if out.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(SimError::Divergence { t: t + h })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    Completed,
    Diverged { t: f64 },
    LeftPlate { t: f64, x: f64 },
}

impl RunOutcome {
    pub fn is_completed(&self) -> bool {
        matches!(self, RunOutcome::Completed)
    }
}

impl fmt::Display for RunOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunOutcome::Completed => write!(f, "completed"),
            RunOutcome::Diverged { t } => write!(f, "diverged at t = {t}"),
            RunOutcome::LeftPlate { t, x } => write!(f, "ball left plate at t = {t} (x = {x})"),
        }
    }
}

pub const CHANNELS: [&str; 11] =
    ["t", "y", "u", "delta", "xi1", "theta_hat", "theta_f", "w", "omega_hat", "omega_bar", "switch"];

/// Uniformly sampled run record. Unavailable quantities are stored as NaN.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceLog {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Vec<f64>,
    pub delta: Vec<f64>,
    pub xi1: Vec<f64>,
    pub theta_hat: Vec<f64>,
    pub theta_f: Vec<f64>,
    pub w: Vec<f64>,
    pub omega_hat: Vec<f64>,
    pub omega_bar: Vec<f64>,
    /// 1 on the row where the switch fires, 0 elsewhere.
    pub switch: Vec<f64>,
    pub switch_event: Option<SwitchEvent>,
    pub outcome: Option<RunOutcome>,
}

impl TraceLog {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn columns(&self) -> [&Vec<f64>; 11] {
        [
            &self.t,
            &self.y,
            &self.u,
            &self.delta,
            &self.xi1,
            &self.theta_hat,
            &self.theta_f,
            &self.w,
            &self.omega_hat,
            &self.omega_bar,
            &self.switch,
        ]
    }

    fn columns_mut(&mut self) -> [&mut Vec<f64>; 11] {
        [
            &mut self.t,
            &mut self.y,
            &mut self.u,
            &mut self.delta,
            &mut self.xi1,
            &mut self.theta_hat,
            &mut self.theta_f,
            &mut self.w,
            &mut self.omega_hat,
            &mut self.omega_bar,
            &mut self.switch,
        ]
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        CHANNELS.iter().position(|c| *c == name).map(|i| self.columns()[i].as_slice())
    }

    fn push_row(&mut self, row: [f64; 11]) {
        for (col, v) in self.columns_mut().into_iter().zip(row) {
            col.push(v);
        }
    }

    /// Header of channel names, then one row per step, 17 significant digits.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(CHANNELS).map_err(csv_err)?;
        let cols = self.columns();
        for i in 0..self.len() {
            w.write_record(cols.iter().map(|c| format!("{:.16e}", c[i]))).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads channels back from `write_csv` output. Run metadata is not stored in the CSV.
    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self, SimError> {
        let mut r = csv::Reader::from_reader(reader);
        let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        if header != CHANNELS {
            return Err(SimError::Format(format!("unexpected header {header:?}")));
        }
        let mut log = TraceLog::default();
        for rec in r.records() {
            let rec = rec.map_err(csv_err)?;
            let mut row = [0.0; 11];
            for (slot, field) in row.iter_mut().zip(rec.iter()) {
                *slot = field.parse().map_err(|e| SimError::Format(format!("{field}: {e}")))?;
            }
            log.push_row(row);
        }
        Ok(log)
    }

    /// First time after which `|y|` stays below `frac` of its peak before the
    /// switch (or over the whole run when there was none).
    pub fn settling_time(&self, frac: f64) -> Option<f64> {
        let t_ref = self.switch_event.map_or(f64::INFINITY, |e| e.time);
        let peak = self
            .t
            .iter()
            .zip(&self.y)
            .filter(|(t, _)| **t < t_ref)
            .fold(0.0_f64, |m, (_, y)| m.max(y.abs()));
        if peak == 0.0 {
            return self.t.first().copied();
        }
        let thr = frac * peak;
        match self.y.iter().rposition(|y| !(y.abs() < thr)) {
            None => self.t.first().copied(),
            Some(i) if i + 1 < self.len() => Some(self.t[i + 1]),
            Some(_) => None,
        }
    }

    pub fn summary(&self) -> Summary {
        let last_ready = self.omega_hat.iter().rposition(|w| w.is_finite());
        let omega_hat = self.switch_event.map(|e| e.omega_hat).or(last_ready.map(|i| self.omega_hat[i]));
        Summary {
            omega_hat,
            switch_time: self.switch_event.map(|e| e.time),
            settling_time: self.settling_time(0.01),
            peak_u: self.u.iter().filter(|u| u.is_finite()).fold(0.0, |m, u| m.max(u.abs())),
            final_abs_y: self.y.last().map_or(f64::NAN, |y| y.abs()),
            estimator_ready: last_ready.is_some(),
            outcome: self.outcome.clone().unwrap_or(RunOutcome::Completed),
        }
    }
}

fn csv_err(e: csv::Error) -> SimError {
    SimError::Format(e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub omega_hat: Option<f64>,
    pub switch_time: Option<f64>,
    pub settling_time: Option<f64>,
    pub peak_u: f64,
    pub final_abs_y: f64,
    pub estimator_ready: bool,
    pub outcome: RunOutcome,
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"));
        writeln!(f, "outcome = {}", self.outcome)?;
        writeln!(f, "estimator_ready = {}", self.estimator_ready)?;
        writeln!(f, "omega_hat = {}", opt(self.omega_hat))?;
        writeln!(f, "switch_time = {}", opt(self.switch_time))?;
        writeln!(f, "settling_time = {}", opt(self.settling_time))?;
        writeln!(f, "peak_abs_u = {:.6e}", self.peak_u)?;
        writeln!(f, "final_abs_y = {:.6e}", self.final_abs_y)
    }
}

/// Plant side of the stacked state.
#[derive(Debug, Clone)]
enum PlantSim {
    Linear(StateSpaceModel),
    /// State `[x, vx, Qx, y, vy, Qy]`; the controlled axis is x, the y servo is idle.
    Nonlinear(BallPlateParams),
}

impl PlantSim {
    fn from_scenario(s: &Scenario) -> Result<Self, SimError> {
        Ok(match s.plant.model {
            PlantModel::Linear => PlantSim::Linear(tf_to_statespace(&linearized_tf(&s.plant.params)?).map_err(PlantError::from)?),
            PlantModel::Nonlinear => PlantSim::Nonlinear(s.plant.params),
        })
    }

    fn len(&self) -> usize {
        match self {
            PlantSim::Linear(ss) => ss.order(),
            PlantSim::Nonlinear(_) => 6,
        }
    }

    fn output(&self, x: &[f64]) -> f64 {
        match self {
            PlantSim::Linear(ss) => ss.output(x, 0.0),
            PlantSim::Nonlinear(_) => x[0],
        }
    }

    fn rhs(&self, x: &[f64], input: f64, dx: &mut [f64]) {
        match self {
            PlantSim::Linear(ss) => ss.derivative(x, input, dx),
            PlantSim::Nonlinear(p) => {
                let s = BallPlateState {
                    x_b: x[0],
                    vx: x[1],
                    qx: x[2],
                    y_b: x[3],
                    vy: x[4],
                    qy: x[5],
                    alpha: servo_to_plate_angle(x[2], p),
                    beta: servo_to_plate_angle(x[5], p),
                };
                // a positive tilt rolls the ball towards −x, so the command is negated
                let command = (-input, 0.0);
                let (ax, ay) = nonlinear_accel(&s, plate_rates(&s, command, p), p);
                dx[0] = s.vx;
                dx[1] = ax;
                dx[2] = servo_rate(s.qx, command.0, p);
                dx[3] = s.vy;
                dx[4] = ay;
                dx[5] = servo_rate(s.qy, command.1, p);
            }
        }
    }

    fn left_plate(&self, x: &[f64]) -> Option<f64> {
        match self {
            PlantSim::Linear(_) => None,
            PlantSim::Nonlinear(p) => {
                let h = p.half_width();
                (x[0].abs() > h || x[3].abs() > h).then_some(x[0])
            }
        }
    }
}

struct Noise {
    rng: ChaCha8Rng,
    dist: Option<Normal<f64>>,
}

impl Noise {
    fn new(std: f64, seed: u64) -> Result<Self, SimError> {
        let dist = if std > 0.0 {
            Some(Normal::new(0.0, std).map_err(|e| SimError::Noise(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { rng: ChaCha8Rng::seed_from_u64(seed), dist })
    }

    fn sample(&mut self) -> f64 {
        self.dist.map_or(0.0, |d| d.sample(&mut self.rng))
    }
}

/// Pushes the measurement and reports the held regression pair when the
/// estimator may run at `t`.
fn estimator_inputs(buf: &mut DelayBuffer, est: &Estimator, t: f64, y: f64) -> Result<Option<(f64, f64)>, SimError> {
    buf.push(t, y)?;
    let cfg = est.config();
    if t + 1e-9 * buf.step() < cfg.warmup {
        return Ok(None);
    }
    match regression_pair(buf, t, cfg.tau) {
        Ok(p) => Ok(Some(p)),
        Err(SignalError::InsufficientHistory { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn finite_or_nan(v: Option<f64>) -> f64 {
    v.unwrap_or(f64::NAN)
}

/// Runs the scenario in its configured mode.
pub fn run(s: &Scenario) -> Result<TraceLog, SimError> {
    match s.mode {
        Mode::OpenLoop => run_open_loop_estimation(s),
        Mode::ClosedLoop => run_closed_loop(s),
    }
}

/// Estimator fed directly by the measured disturbance.
pub fn run_open_loop_estimation(s: &Scenario) -> Result<TraceLog, SimError> {
    let h = s.sim.step;
    let mut est = Estimator::new(s.estimator.clone())?;
    let mut buf = DelayBuffer::for_delay(s.estimator.tau, h)?;
    let mut noise = Noise::new(s.sim.noise_std, s.sim.rng_seed)?;
    let mut log = TraceLog::default();
    let n = s.sim.steps();
    for i in 0..n {
        let t = i as f64 * h;
        let delta = s.disturbance.eval(t);
        let y = delta + noise.sample();
        let inputs = estimator_inputs(&mut buf, &est, t, y)?;
        est.set_active(inputs.is_some());
        log.push_row([
            t,
            y,
            0.0,
            delta,
            f64::NAN,
            est.state().theta_hat,
            finite_or_nan(est.finite_time_estimate()),
            est.state().w,
            finite_or_nan(est.frequency_estimate().map(|f| f.omega)),
            f64::NAN,
            0.0,
        ]);
        if i + 1 < n {
            if let Some((z, phi)) = inputs {
                est.step(z, phi, h);
            }
        }
    }
    log.outcome = Some(RunOutcome::Completed);
    Ok(log)
}

/// Plant, compensator, estimator and switching integrated together.
///
/// Divergence and the ball leaving the plate end the run early; the partial
/// trace is returned with the outcome recorded.
pub fn run_closed_loop(s: &Scenario) -> Result<TraceLog, SimError> {
    let h = s.sim.step;
    let ctrl = s.controller.clone().ok_or(SimError::MissingController)?;
    let plant = PlantSim::from_scenario(s)?;
    let mut comp = Compensator::new(ctrl)?;
    let mut est = Estimator::new(s.estimator.clone())?;
    let mut buf = DelayBuffer::for_delay(s.estimator.tau, h)?;
    let mut sw = SwitchState::new();
    let mut noise = Noise::new(s.sim.noise_std, s.sim.rng_seed)?;
    let np = plant.len();
    let mut xp = vec![0.0; np];
    let mut log = TraceLog::default();
    let n = s.sim.steps();
    let mut packed = Vec::new();
    for i in 0..n {
        let t = i as f64 * h;
        let n_i = noise.sample();
        let y_meas = plant.output(&xp) + n_i;
        let inputs = estimator_inputs(&mut buf, &est, t, y_meas)?;
        est.set_active(inputs.is_some());
        let mut fired = false;
        if s.switching.enabled && sw.should_switch(&est, t, &s.switching.config) {
            let ev = sw.apply_switch(&mut comp, &est, t)?;
            log.switch_event = Some(ev);
            fired = true;
        }
        let delta = s.disturbance.eval(t);
        let u = comp.output(y_meas);
        log.push_row([
            t,
            plant.output(&xp),
            u,
            delta,
            comp.xi1(y_meas),
            est.state().theta_hat,
            finite_or_nan(est.finite_time_estimate()),
            est.state().w,
            finite_or_nan(est.frequency_estimate().map(|f| f.omega)),
            comp.internal_model_freq(),
            if fired { 1.0 } else { 0.0 },
        ]);
        if i + 1 == n {
            break;
        }

        let (z, phi) = inputs.unwrap_or((0.0, 0.0));
        packed.clear();
        packed.extend_from_slice(&xp);
        comp.pack(&mut packed);
        packed.push(est.state().theta_hat);
        packed.push(est.state().w);
        let nc = comp.state_len();
        let next = rk4_step(
            |tt, x, dx| {
                let (xs, rest) = x.split_at(np);
                let (xc, xe) = rest.split_at(nc);
                let (dxs, drest) = dx.split_at_mut(np);
                let (dxc, dxe) = drest.split_at_mut(nc);
                let y = plant.output(xs) + n_i;
                let u = comp.rhs(xc, y, dxc);
                plant.rhs(xs, u + s.disturbance.eval(tt), dxs);
                let (dth, dw) = est.rhs(xe[0], xe[1], z, phi);
                dxe[0] = dth;
                dxe[1] = dw;
            },
            &packed,
            t,
            h,
        );
        let next = match next {
            Ok(v) => v,
            Err(SimError::Divergence { t }) => {
                log.outcome = Some(RunOutcome::Diverged { t });
                return Ok(log);
            }
            Err(e) => return Err(e),
        };
        xp.copy_from_slice(&next[..np]);
        comp.unpack(&next[np..np + nc]);
        est.set(next[np + nc], next[np + nc + 1]);
        comp.end_step();

        let t_next = (i + 1) as f64 * h;
        if !(plant.output(&xp).abs() <= DIVERGENCE_LIMIT) {
            log.outcome = Some(RunOutcome::Diverged { t: t_next });
            return Ok(log);
        }
        if let Some(x) = plant.left_plate(&xp) {
            log.outcome = Some(RunOutcome::LeftPlate { t: t_next, x });
            return Ok(log);
        }
    }
    log.outcome = Some(RunOutcome::Completed);
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay_error(h: f64) -> f64 {
        let n = (1.0 / h).round() as usize;
        let mut x = vec![1.0];
        for i in 0..n {
            x = rk4_step(|_, x, d| d[0] = -x[0], &x, i as f64 * h, h).unwrap();
        }
        (x[0] - (-1.0f64).exp()).abs()
    }

    #[test]
    fn zero_field_keeps_state() {
        let x = vec![1.5, -2.0];
        assert_eq!(rk4_step(|_, _, d| d.fill(0.0), &x, 0.0, 0.1).unwrap(), x);
    }

    #[test]
    fn single_step_exponential() {
        let x = rk4_step(|_, x, d| d[0] = -x[0], &[1.0], 0.0, 0.1).unwrap();
        assert!((x[0] - (-0.1f64).exp()).abs() < 1e-7);
    }

    #[test]
    fn fourth_order_convergence() {
        let ratio = decay_error(0.1) / decay_error(0.05);
        assert!((ratio - 16.0).abs() < 1.0, "{ratio}");
    }

    #[test]
    fn non_finite_is_divergence() {
        let r = rk4_step(|_, _, d| d[0] = f64::NAN, &[0.0], 0.0, 0.1);
        assert!(matches!(r, Err(SimError::Divergence { .. })));
    }

    #[test]
    fn strict_delay_needs_integer_ratio() {
        let c = SimConfig { step: 3e-3, ..Default::default() };
        assert!(c.violations(0.1).contains(&"tau must be an integer multiple of step"));
        assert!(SimConfig::default().violations(0.1).is_empty());
    }

    #[test]
    fn settling_uses_pre_switch_peak() {
        let mut log = TraceLog::default();
        for i in 0..10 {
            let y = if i < 4 { 1.0 } else if i < 7 { 0.5 } else { 0.001 };
            log.push_row([i as f64, y, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        }
        assert_eq!(log.settling_time(0.01), Some(7.0));
        log.y[9] = 0.2;
        assert_eq!(log.settling_time(0.01), None);
    }
}
