//! Subcommand drivers. Each writes its artifacts into the output directory
//! and returns a [`RunReport`]; failures that still leave useful artifacts
//! (non-convergence, contract violations) write them first.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use spoofplan::attack_synthesis::{
    attack_tolerances, undetectable_attack_with, verify_undetectable, AttackOptions, BuiltinPolicy, Rotation,
};
use spoofplan::dynamics::{
    simulate_double_integrator, simulate_unicycle, RobotState, SampledSignal, UnicycleState, WheelInput, WheelLimits,
};
use spoofplan::optimal_attack::{solve_optimal_attack, sweep_nominal_ratio, AttackSolverConfig, BvpSolution, SweepScenario};
use spoofplan::secure_planning::{
    construct_violating_attack, is_secure_input, min_time_nominal, plan_secure, reachable_check, SecurePlan, SecurePlanConfig,
};
use spoofplan::sensing::{cancelling_spoof, detect, DetectionReport};
use spoofplan::unicycle_security::{
    construct_violating_attack_unicycle, is_secure_input_unicycle, offset_attack, verify_undetectable_unicycle, OffsetBump,
};
use spoofplan::{DiTrajectory, UnicycleTrajectory, Vec2};

use crate::config::{AttackSpec, Direction, Model, NominalInput, PolicySpec, ScenarioConfig};
use crate::io;
use crate::svg::{Plot, Series, PALETTE};
use crate::CliError;

/// Smallest excursion a counterexample attack must reach.
const MIN_COUNTEREXAMPLE_DEVIATION: f64 = 1e-3;

#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub status: String,
    pub scenario: ScenarioConfig,
    pub files: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detection: Option<Value>,
    pub metrics: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solver: Option<Value>,
    pub wall_clock_s: f64,
}

pub struct Run {
    out: PathBuf,
    cfg: ScenarioConfig,
    command: &'static str,
    files: Vec<PathBuf>,
    detection: Option<Value>,
    metrics: BTreeMap<String, Value>,
    solver: Option<Value>,
    problem: Option<Problem>,
    started: Instant,
}

/// A failure that still produces a full set of artifacts.
enum Problem {
    NotConverged(String),
    Contract(String),
}

impl Run {
    pub fn new(command: &'static str, cfg: ScenarioConfig, out: PathBuf) -> Self {
        Self {
            out,
            cfg,
            command,
            files: Vec::new(),
            detection: None,
            metrics: BTreeMap::new(),
            solver: None,
            problem: None,
            started: Instant::now(),
        }
    }

    fn emit(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out.join(name);
        io::write_atomic(&path, bytes)?;
        info!("wrote {}", path.display());
        self.files.push(path);
        Ok(())
    }

    fn metric(&mut self, key: &str, v: impl Serialize) {
        self.metrics.insert(key.to_string(), json!(v));
    }

    fn fail(&mut self, p: Problem) {
        if self.problem.is_none() {
            self.problem = Some(p);
        }
    }

    /// Writes `report.json`; a recorded problem turns into the error.
    pub fn finish(mut self, status: &str) -> Result<RunReport, CliError> {
        let path = self.out.join("report.json");
        self.files.push(path.clone());
        let status = match &self.problem {
            None => status,
            Some(Problem::NotConverged(_)) => "not_converged",
            Some(Problem::Contract(_)) => "detection_contract_violated",
        };
        let report = RunReport {
            command: self.command.to_string(),
            status: status.to_string(),
            scenario: self.cfg,
            files: self.files,
            detection: self.detection,
            metrics: self.metrics,
            solver: self.solver,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?;
        io::write_atomic(&path, text.as_bytes())?;
        match self.problem {
            None => Ok(report),
            Some(Problem::NotConverged(what)) => Err(CliError::NonConvergence { what, report: Some(Box::new(report)) }),
            Some(Problem::Contract(what)) => Err(CliError::Contract { what, report: Some(Box::new(report)) }),
        }
    }

    fn u_max(&self) -> f64 {
        self.cfg.u_max.expect("validated for the double integrator")
    }

    fn limits(&self) -> WheelLimits<f64> {
        WheelLimits { nu_max: self.cfg.nu_max.expect("validated"), omega_max: self.cfg.omega_max.expect("validated") }
    }

    fn x0(&self) -> RobotState<f64> {
        let x = &self.cfg.x0;
        RobotState::new(Vec2::new(x[0], x[1]), Vec2::new(x[2], x[3]))
    }

    fn pose0(&self) -> UnicycleState<f64> {
        let x = &self.cfg.x0;
        UnicycleState::new(Vec2::new(x[0], x[1]), x[2])
    }

    fn target(&self) -> Result<Vec2<f64>, CliError> {
        let p = self.cfg.p_f.ok_or_else(|| CliError::Config("p_F: required for this command".into()))?;
        Ok(Vec2::new(p[0], p[1]))
    }

    fn dt(&self, horizon: f64) -> f64 {
        self.cfg.dt.unwrap_or_else(|| spoofplan::dynamics::default_dt(horizon))
    }

    fn require_model(&self, m: Model) -> Result<(), CliError> {
        if self.cfg.model != m {
            return Err(CliError::Config(format!("model: `{}` needs {m:?}", self.command)));
        }
        Ok(())
    }

    /// Horizon and step for sampled inputs: the samples span the horizon
    /// when one is given, otherwise they are spaced by `dt`.
    fn sample_grid(&self, n: usize, file_dt: Option<f64>) -> Result<(f64, f64), CliError> {
        match (self.cfg.horizon, self.cfg.dt, file_dt) {
            (Some(h), _, _) => Ok((h, h / n as f64)),
            (None, Some(dt), _) | (None, None, Some(dt)) => Ok((dt * n as f64, dt)),
            (None, None, None) => Err(CliError::Config("horizon: required with inline samples unless dt is given".into())),
        }
    }

    fn secure_config(&self) -> SecurePlanConfig<f64> {
        let s = &self.cfg.solver;
        let mut c = SecurePlanConfig::default();
        if let Some(v) = s.w_time {
            c.w_time = v;
        }
        if let Some(v) = s.w_miss {
            c.w_miss = v;
        }
        if let Some(v) = s.steps {
            c.steps = v;
        }
        if let Some(v) = s.tol {
            c.tol = v;
        }
        if let Some(v) = s.max_newton {
            c.max_newton = v;
        }
        if let Some(v) = s.max_backtracks {
            c.max_backtracks = v;
        }
        if let Some(v) = s.fd_eps {
            c.fd_eps = v;
        }
        if let Some(v) = &s.eps_schedule {
            c.eps_schedule = v.clone();
        }
        c
    }

    fn attack_config(&self) -> AttackSolverConfig<f64> {
        let s = &self.cfg.solver;
        let mut c = AttackSolverConfig::default();
        if let Some(v) = s.tol {
            c.tol = v;
        }
        if let Some(v) = s.max_newton {
            c.max_newton = v;
        }
        if let Some(v) = s.max_backtracks {
            c.max_backtracks = v;
        }
        if let Some(v) = s.fd_eps {
            c.fd_eps = v;
        }
        if let Some(v) = &s.eps_schedule {
            c.eps_schedule = v.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        c.extra_seeds = (0..s.random_starts.unwrap_or(0)).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0..1.0))).collect();
        c
    }

    fn plan(&mut self) -> Result<SecurePlan<f64>, CliError> {
        let x0 = self.x0();
        let target = self.target()?;
        let verdict = reachable_check(&x0, target);
        if !verdict.passes {
            return Err(CliError::Config(format!("p_F: not reachable by a secure trajectory: {}", verdict.reason.unwrap_or_default())));
        }
        let plan = plan_secure(x0.p, x0.v, target, self.u_max(), &self.secure_config())?;
        self.solver = Some(json!({
            "planner": {
                "converged": plan.converged,
                "shooting_residual": plan.shooting_residual,
                "free_time_residual": plan.free_time_residual,
                "epsilon": plan.epsilon,
                "bang_consistent": plan.bang_consistent,
                "initial_costate": plan.initial_costate,
                "xi": plan.xi,
            }
        }));
        self.metric("secure_horizon", plan.horizon);
        self.metric("objective", plan.objective);
        self.metric("terminal_miss", plan.terminal_miss);
        self.metric("kappa_switch_times", &plan.switch_times);
        Ok(plan)
    }

    /// Double-integrator nominal described by `nominal_input`.
    fn nominal_di(&mut self) -> Result<DiTrajectory, CliError> {
        let x0 = self.x0();
        let u_max = self.u_max();
        let tr = match self.cfg.nominal_input.clone() {
            NominalInput::Constant { value } => {
                let horizon = self.cfg.require_horizon()?;
                let u = Vec2::new(value[0], value[1]);
                simulate_double_integrator(x0, &move |_t: f64| u, horizon, self.dt(horizon), u_max)?
            }
            NominalInput::Samples { values: Some(v), .. } => {
                let (horizon, dt) = self.sample_grid(v.len(), None)?;
                let sig = SampledSignal::zoh(0.0, dt, v.iter().map(|r| Vec2::new(r[0], r[1])).collect());
                simulate_double_integrator(x0, &sig, horizon, dt, u_max)?
            }
            NominalInput::Samples { path: Some(p), .. } => {
                let file = io::parse_di(&io::read_text(&p)?)?;
                let (horizon, dt) = self.sample_grid(file.steps(), Some(file.dt))?;
                let sig = SampledSignal::zoh(0.0, dt, file.controls);
                simulate_double_integrator(x0, &sig, horizon, dt, u_max)?
            }
            NominalInput::Samples { .. } => unreachable!("validated"),
            NominalInput::MinTime => {
                let horizon = self.cfg.require_horizon()?;
                min_time_nominal(x0.p, x0.v, self.target()?, u_max, horizon, self.dt(horizon))?
            }
            NominalInput::SecurePlan => {
                let plan = self.plan()?;
                if !plan.converged {
                    warn!("secure plan did not converge; using the best iterate as the nominal");
                }
                plan.trajectory
            }
        };
        Ok(tr)
    }

    fn nominal_unicycle(&self) -> Result<UnicycleTrajectory, CliError> {
        let s0 = self.pose0();
        let lim = self.limits();
        let tr = match self.cfg.nominal_input.clone() {
            NominalInput::Constant { value } => {
                let horizon = self.cfg.require_horizon()?;
                let w = WheelInput::new(value[0], value[1]);
                simulate_unicycle(s0, &move |_t: f64| w, horizon, self.dt(horizon), lim)?
            }
            NominalInput::Samples { values: Some(v), .. } => {
                let (horizon, dt) = self.sample_grid(v.len(), None)?;
                let sig = SampledSignal::zoh(0.0, dt, v.iter().map(|r| WheelInput::new(r[0], r[1])).collect());
                simulate_unicycle(s0, &sig, horizon, dt, lim)?
            }
            NominalInput::Samples { path: Some(p), .. } => {
                let file = io::parse_unicycle(&io::read_text(&p)?)?;
                let (horizon, dt) = self.sample_grid(file.steps(), Some(file.dt))?;
                let sig = SampledSignal::zoh(0.0, dt, file.controls);
                simulate_unicycle(s0, &sig, horizon, dt, lim)?
            }
            _ => unreachable!("validated"),
        };
        Ok(tr)
    }

    fn record_detection(&mut self, rep: &DetectionReport<f64>) {
        self.detection = Some(json!({
            "detected": rep.detected,
            "first_violation_time": rep.first_violation_time,
            "max_gnss_residual": rep.max_gnss_residual,
            "max_rssi_residual": rep.max_rssi_residual,
            "gnss_tolerance": rep.tolerances.gnss,
            "rssi_tolerance": rep.tolerances.rssi,
        }));
    }

    fn record_attack_solution(&mut self, sol: &BvpSolution<f64>) {
        let attack = json!({
            "converged": sol.converged,
            "shooting_residual": sol.shooting_residual,
            "reported_residual": sol.reported_residual,
            "iterations": sol.iterations,
            "epsilon": sol.epsilon,
            "bang_consistent": sol.bang_consistent,
            "initial_costate": sol.initial_costate,
            "max_range_mismatch": sol.max_range_mismatch,
        });
        match &mut self.solver {
            Some(Value::Object(m)) => {
                m.insert("attack".into(), attack);
            }
            _ => self.solver = Some(json!({ "attack": attack })),
        }
        self.metric("terminal_deviation", sol.terminal_deviation);
        self.metric("switch_times", &sol.switch_times);
    }

    fn emit_bang_profile(&mut self, nominal: &DiTrajectory, sol: &BvpSolution<f64>) -> Result<(), CliError> {
        let c = &sol.costate;
        let rows = (0..c.a_r.len().min(c.a_t.len()))
            .map(|k| vec![nominal.time(k), c.a_r[k], c.a_t[k], c.switching[k], c.nu_multiplier[k]])
            .collect::<Vec<_>>();
        self.emit("bang_profile.csv", &io::table_csv(&["t", "a_r", "a_t", "switching", "nu"], rows.iter().cloned())?)?;
        let mut p = Plot::chart("Attack input components", "t", "acceleration");
        p.push(Series::new("a_r", rows.iter().map(|r| (r[0], r[1])).collect(), PALETTE[0]));
        p.push(Series::new("a_t", rows.iter().map(|r| (r[0], r[2])).collect(), PALETTE[1]));
        self.emit("bang_profile.svg", p.render().as_bytes())
    }
}

fn path_of(tr: &DiTrajectory) -> Vec<(f64, f64)> {
    tr.states.iter().map(|s| (s.p.x, s.p.y)).collect()
}

fn path_of_unicycle(tr: &UnicycleTrajectory) -> Vec<(f64, f64)> {
    tr.states.iter().map(|s| (s.p.x, s.p.y)).collect()
}

fn max_deviation<S>(a: &[S], b: &[S], pos: impl Fn(&S) -> Vec2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (pos(x) - pos(y)).norm()).fold(0.0, f64::max)
}

fn overlay(title: &str, nominal: Vec<(f64, f64)>, attacked: Option<(&str, Vec<(f64, f64)>)>, target: Option<[f64; 2]>) -> String {
    let mut p = Plot::planar(title);
    p.push(Series::new("nominal", nominal, PALETTE[0]));
    if let Some((label, pts)) = attacked {
        p.push(Series::new(label, pts, PALETTE[1]).dashed());
    }
    if let Some(t) = target {
        p.extra_points.push(("target".into(), (t[0], t[1])));
    }
    p.render()
}

fn builtin(policy: &PolicySpec) -> BuiltinPolicy {
    let rot = |d: &Direction| match d {
        Direction::Clockwise => Rotation::Clockwise,
        Direction::CounterClockwise => Rotation::CounterClockwise,
    };
    match policy {
        PolicySpec::Zero => BuiltinPolicy::Zero,
        PolicySpec::Nominal => BuiltinPolicy::Nominal,
        PolicySpec::Fraction { fraction, direction } => BuiltinPolicy::Fraction { fraction: *fraction, direction: rot(direction) },
        PolicySpec::BangSwitch { switch_time, first } => BuiltinPolicy::BangSwitch { switch_time: *switch_time, first: rot(first) },
    }
}

pub fn simulate(mut run: Run) -> Result<RunReport, CliError> {
    match run.cfg.model {
        Model::DoubleIntegrator => simulate_di(&mut run)?,
        Model::Unicycle => simulate_unicycle_run(&mut run)?,
    }
    run.finish("ok")
}

fn simulate_di(run: &mut Run) -> Result<(), CliError> {
    let nominal = run.nominal_di()?;
    run.emit("nominal.csv", &io::di_csv(&nominal)?)?;
    run.metric("horizon", nominal.horizon());
    run.metric("steps", nominal.steps());
    match run.cfg.attack.clone() {
        AttackSpec::None => {
            let zero = vec![Vec2::zero(); nominal.states.len()];
            let rep = detect(&nominal, &nominal, &zero, spoofplan::sensing::Tolerances::new(0.0, 0.0))?;
            run.record_detection(&rep);
            run.emit("plot.svg", overlay("Nominal trajectory", path_of(&nominal), None, run.cfg.p_f).as_bytes())?;
        }
        AttackSpec::RadialLaw { policy } => {
            let pol = builtin(&policy);
            let opts = AttackOptions::new(run.u_max());
            let att = undetectable_attack_with(&nominal, &pol, &opts)?;
            let tol = attack_tolerances(&nominal, &pol, &opts)?;
            let rep = detect(&nominal, &att.attacked, &att.signal.u_gnss, tol)?;
            run.record_detection(&rep);
            run.emit("attacked.csv", &io::di_csv(&att.attacked)?)?;
            let spoof = (0..att.signal.u_gnss.len()).map(|k| {
                let g = att.signal.u_gnss[k];
                vec![nominal.time(k), g.x, g.y]
            });
            run.emit("spoof.csv", &io::table_csv(&["t", "g1", "g2"], spoof)?)?;
            run.metric("terminal_deviation", att.terminal_deviation(&nominal));
            run.metric("max_deviation", max_deviation(&nominal.states, &att.attacked.states, |s| s.p));
            let svg =
                overlay("Nominal and attacked trajectories", path_of(&nominal), Some(("attacked", path_of(&att.attacked))), run.cfg.p_f);
            run.emit("plot.svg", svg.as_bytes())?;
            if rep.detected {
                run.fail(Problem::Contract(format!(
                    "synthesized attack tripped the detector at t = {:?} (gnss {:.3e}, rssi {:.3e})",
                    rep.first_violation_time, rep.max_gnss_residual, rep.max_rssi_residual
                )));
            }
        }
        AttackSpec::Optimal => {
            return Err(CliError::Config("attack.mode: optimal attacks run through `attack-opt`".into()));
        }
        AttackSpec::Offset { .. } => unreachable!("validated"),
    }
    Ok(())
}

/// Range-identity tolerance for unicycle attacks, scaled like the one used
/// by the violating-attack construction.
fn unicycle_tolerance(nominal: &UnicycleTrajectory, nu_max: f64) -> f64 {
    let scale = nominal.states.iter().map(|s| s.p.norm()).fold(0.0, f64::max);
    1e-6 * (1.0 + scale) * (1.0 + nu_max)
}

fn simulate_unicycle_run(run: &mut Run) -> Result<(), CliError> {
    let nominal = run.nominal_unicycle()?;
    run.emit("nominal.csv", &io::unicycle_csv(&nominal)?)?;
    run.metric("horizon", nominal.horizon());
    run.metric("steps", nominal.steps());
    match run.cfg.attack.clone() {
        AttackSpec::None => {
            run.detection = Some(json!({ "detected": false }));
            run.emit("plot.svg", overlay("Nominal trajectory", path_of_unicycle(&nominal), None, run.cfg.p_f).as_bytes())?;
        }
        AttackSpec::Offset { start, width, amplitude } => {
            let nu_max = run.limits().nu_max;
            let att = offset_attack(&nominal, OffsetBump { start, width, amplitude }, nu_max)?;
            let tol = unicycle_tolerance(&nominal, nu_max);
            let chk = verify_undetectable_unicycle(&nominal, &att, tol)?;
            run.detection = Some(json!({
                "detected": !chk.undetectable,
                "max_range_residual": chk.max_range_residual,
                "max_range_rate_residual": chk.max_range_rate_residual,
                "tolerance": tol,
            }));
            run.emit("attacked.csv", &io::unicycle_csv(&att)?)?;
            let last = nominal.states.len() - 1;
            run.metric("terminal_deviation", (att.states[last].p - nominal.states[last].p).norm());
            run.metric("max_deviation", max_deviation(&nominal.states, &att.states, |s| s.p));
            let svg = overlay(
                "Nominal and attacked unicycle paths",
                path_of_unicycle(&nominal),
                Some(("attacked", path_of_unicycle(&att))),
                run.cfg.p_f,
            );
            run.emit("plot.svg", svg.as_bytes())?;
            if !chk.undetectable {
                run.fail(Problem::Contract(format!("offset attack broke the range identities (residual {:.3e})", chk.max_range_residual)));
            }
        }
        _ => unreachable!("validated"),
    }
    Ok(())
}

pub fn attack_opt(mut run: Run) -> Result<RunReport, CliError> {
    run.require_model(Model::DoubleIntegrator)?;
    if !matches!(run.cfg.attack, AttackSpec::Optimal | AttackSpec::None) {
        return Err(CliError::Config("attack.mode: `attack-opt` expects optimal (or omitted)".into()));
    }
    let nominal = run.nominal_di()?;
    run.emit("nominal.csv", &io::di_csv(&nominal)?)?;
    let sol = solve_optimal_attack(&nominal, run.u_max(), &run.attack_config())?;
    finish_attack(run, &nominal, &sol, "Worst-case undetectable attack")
}

fn finish_attack(mut run: Run, nominal: &DiTrajectory, sol: &BvpSolution<f64>, title: &str) -> Result<RunReport, CliError> {
    run.record_attack_solution(sol);
    run.emit("attacked.csv", &io::di_csv(&sol.attacked)?)?;
    run.emit_bang_profile(nominal, sol)?;
    let chk = verify_undetectable(nominal, &sol.attacked, 1e-6 * (1.0 + sol.max_range_mismatch.max(0.0)))?;
    run.metric("max_range_residual", chk.max_range_residual);
    let spoof = cancelling_spoof(nominal, &sol.attacked);
    run.metric("max_spoof_magnitude", spoof.iter().map(|g| g.norm()).fold(0.0, f64::max));
    let svg = overlay(title, path_of(nominal), Some(("attacked", path_of(&sol.attacked))), run.cfg.p_f);
    run.emit("plot.svg", svg.as_bytes())?;
    if !sol.converged {
        run.fail(Problem::NotConverged(format!("optimal attack (shooting residual {:.3e})", sol.shooting_residual)));
    }
    run.finish("ok")
}

pub fn plan_secure_cmd(mut run: Run) -> Result<RunReport, CliError> {
    run.require_model(Model::DoubleIntegrator)?;
    run.target()?;
    let plan = run.plan()?;
    run.emit("secure.csv", &io::di_csv(&plan.trajectory)?)?;
    let tr = &plan.trajectory;
    let kappa_rows = plan.kappa.samples().iter().enumerate().map(|(k, kap)| vec![tr.time(k), *kap]).collect::<Vec<_>>();
    run.emit("kappa.csv", &io::table_csv(&["t", "kappa"], kappa_rows.iter().cloned())?)?;
    let mut kp = Plot::chart("Secure input sign", "t", "kappa");
    kp.push(Series::new("kappa", kappa_rows.iter().flat_map(|r| [(r[0], r[1]), (r[0] + tr.dt, r[1])]).collect(), PALETTE[2]));
    run.emit("kappa.svg", kp.render().as_bytes())?;
    let svg = overlay("Secure trajectory", path_of(tr), None, run.cfg.p_f);
    run.emit("plot.svg", svg.as_bytes())?;
    if !plan.converged {
        run.fail(Problem::NotConverged(format!("secure plan (shooting residual {:.3e})", plan.shooting_residual)));
        return run.finish("not_converged");
    }
    match run.cfg.attack {
        AttackSpec::None => run.finish("ok"),
        AttackSpec::Optimal => {
            let sol = solve_optimal_attack(tr, run.u_max(), &run.attack_config())?;
            finish_attack(run, tr, &sol, "Worst-case attack on the secure trajectory")
        }
        _ => Err(CliError::Config("attack.mode: `plan-secure` can chain only an optimal attack".into())),
    }
}

pub fn check(mut run: Run, input: Option<&Path>) -> Result<RunReport, CliError> {
    match run.cfg.model {
        Model::DoubleIntegrator => {
            let nominal = match input {
                Some(p) => io::parse_di(&io::read_text(p)?)?,
                None => run.nominal_di()?,
            };
            let u_max = run.u_max();
            let tol = run.cfg.solver.tol.unwrap_or(1e-9);
            let verdict = is_secure_input(&nominal, u_max, tol);
            run.metric("secure", verdict.secure);
            run.metric("diagnosis", format!("{:?}", verdict.diagnosis));
            if verdict.secure {
                return run.finish("secure");
            }
            match construct_violating_attack(&nominal, u_max, tol, MIN_COUNTEREXAMPLE_DEVIATION) {
                Ok(att) => {
                    run.metric("counterexample_case", format!("{:?}", att.case));
                    run.metric("counterexample_onset", att.onset);
                    run.metric("terminal_deviation", att.terminal_deviation);
                    run.metric("max_deviation", att.max_deviation);
                    run.detection = Some(json!({
                        "detected": !att.check.undetectable,
                        "max_range_residual": att.check.max_range_residual,
                        "max_radial_velocity_residual": att.check.max_radial_velocity_residual,
                    }));
                    run.emit("counterexample.csv", &io::di_csv(&att.attacked)?)?;
                    let svg = overlay("Counterexample attack", path_of(&nominal), Some(("attacked", path_of(&att.attacked))), run.cfg.p_f);
                    run.emit("counterexample.svg", svg.as_bytes())?;
                    if !att.check.undetectable {
                        run.fail(Problem::Contract("counterexample attack broke the range identities".into()));
                    }
                }
                Err(e) => {
                    warn!("input is not secure but no counterexample was built: {e}");
                    run.metric("counterexample_error", e.to_string());
                }
            }
        }
        Model::Unicycle => {
            let nominal = match input {
                Some(p) => io::parse_unicycle(&io::read_text(p)?)?,
                None => run.nominal_unicycle()?,
            };
            let nu_max = run.limits().nu_max;
            let diag = is_secure_input_unicycle(&nominal, nu_max);
            let secure = diag.step().is_none();
            run.metric("secure", secure);
            run.metric("diagnosis", format!("{diag:?}"));
            if secure {
                return run.finish("secure");
            }
            match construct_violating_attack_unicycle(&nominal, nu_max, MIN_COUNTEREXAMPLE_DEVIATION) {
                Ok(att) => {
                    run.metric("counterexample_case", format!("{:?}", att.case));
                    run.metric("counterexample_onset", att.onset);
                    run.metric("max_deviation", att.max_deviation);
                    run.detection = Some(json!({
                        "detected": !att.check.undetectable,
                        "max_range_residual": att.check.max_range_residual,
                        "max_range_rate_residual": att.check.max_range_rate_residual,
                    }));
                    run.emit("counterexample.csv", &io::unicycle_csv(&att.attacked)?)?;
                    let svg = overlay(
                        "Counterexample attack",
                        path_of_unicycle(&nominal),
                        Some(("attacked", path_of_unicycle(&att.attacked))),
                        run.cfg.p_f,
                    );
                    run.emit("counterexample.svg", svg.as_bytes())?;
                    if !att.check.undetectable {
                        run.fail(Problem::Contract("counterexample attack broke the range identities".into()));
                    }
                }
                Err(e) => {
                    warn!("input is not secure but no counterexample was built: {e}");
                    run.metric("counterexample_error", e.to_string());
                }
            }
        }
    }
    run.finish("not_secure")
}

pub fn sweep(mut run: Run) -> Result<RunReport, CliError> {
    run.require_model(Model::DoubleIntegrator)?;
    let ratios = run.cfg.sweep.as_ref().map(|s| s.ratios.clone()).ok_or_else(|| CliError::Config("sweep: required for `sweep`".into()))?;
    let NominalInput::Constant { value } = &run.cfg.nominal_input else {
        return Err(CliError::Config("nominal_input.mode: `sweep` needs a constant input giving the direction".into()));
    };
    let direction = Vec2::new(value[0], value[1]);
    if !(direction.norm() > 0.0) {
        return Err(CliError::Config("nominal_input.value: sweep direction must be nonzero".into()));
    }
    let horizon = run.cfg.require_horizon()?;
    let x0 = run.x0();
    let base = SweepScenario { p0: x0.p, v0: x0.v, direction, u_max: run.u_max(), horizon, dt: run.dt(horizon) };
    let rows = sweep_nominal_ratio(&ratios, &base, &run.attack_config())?;
    let table = rows.iter().map(|r| vec![r.ratio, r.deviation, if r.converged { 1.0 } else { 0.0 }]);
    run.emit("sweep.csv", &io::table_csv(&["ratio", "deviation", "converged"], table)?)?;
    let mut p = Plot::chart("Worst-case deviation against nominal input magnitude", "|u_n| / u_max", "terminal deviation");
    p.push(Series::new("deviation", rows.iter().map(|r| (r.ratio, r.deviation)).collect(), PALETTE[0]));
    run.emit("sweep.svg", p.render().as_bytes())?;
    run.metric("deviations", rows.iter().map(|r| [r.ratio, r.deviation]).collect::<Vec<_>>());
    let monotone = rows.windows(2).all(|w| w[1].deviation <= w[0].deviation);
    run.metric("nonincreasing", monotone);
    if let Some(bad) = rows.iter().find(|r| !r.converged) {
        run.fail(Problem::NotConverged(format!("sweep entry at ratio {}", bad.ratio)));
    }
    run.finish("ok")
}
