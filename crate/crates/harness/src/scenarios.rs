//! The six scenarios. Each returns an [`Outcome`] holding its checks and
//! the text of every output file, so reruns can be compared in memory.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use jmm_core::jacobian::{analytic_jacobian, smoothed_jacobian, total_variation};
use jmm_core::mapping::JointMuscleMapping;
use jmm_core::par;
use jmm_core::updaters::{solve_ik, IkOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{deg_vec, to_deg, to_deg_vec};
use crate::error::Result;
use crate::experiment::Experiment;
use crate::output::{indexed, line_plot, num, Series, Table};
use crate::rig::{EventRecord, Rig, TickRecord, Updaters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    TrainInitial,
    JacobianSweep,
    AntagonismElbow,
    VisionRepair,
    CombinedQuant,
    ReachTarget,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::TrainInitial,
        Scenario::JacobianSweep,
        Scenario::AntagonismElbow,
        Scenario::VisionRepair,
        Scenario::CombinedQuant,
        Scenario::ReachTarget,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::TrainInitial => "train-initial",
            Scenario::JacobianSweep => "jacobian-sweep",
            Scenario::AntagonismElbow => "antagonism-elbow",
            Scenario::VisionRepair => "vision-repair",
            Scenario::CombinedQuant => "combined-quant",
            Scenario::ReachTarget => "reach-target",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.as_str() == s)
            .ok_or_else(|| format!("unknown scenario `{s}`; expected one of {}", Scenario::ALL.map(|s| s.as_str()).join(", ")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub op: &'static str,
    pub bound: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, measured: f64, op: &'static str, bound: f64) -> Self {
        let passed = match op {
            "<" => measured < bound,
            "<=" => measured <= bound,
            ">" => measured > bound,
            ">=" => measured >= bound,
            _ => unreachable!("comparison operator"),
        };
        Self {
            name: name.to_string(),
            measured,
            op,
            bound,
            passed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub scenario: Scenario,
    pub checks: Vec<Check>,
    /// Named scalar results.
    pub values: Vec<(String, f64)>,
    /// Reference figures from the hardware experiments (not asserted).
    pub references: Vec<String>,
    /// `(file name, contents)` of every output file.
    pub files: Vec<(String, String)>,
}

impl Outcome {
    fn new(scenario: Scenario) -> Self {
        Self {
            scenario,
            checks: Vec::new(),
            values: Vec::new(),
            references: Vec::new(),
            files: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn file(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    fn value_push(&mut self, name: &str, v: f64) {
        self.values.push((name.to_string(), v));
    }

    fn add_table(&mut self, name: &str, table: &Table) -> Result<()> {
        self.files.push((name.to_string(), table.to_csv()?));
        Ok(())
    }

    pub fn report(&self) -> String {
        let mut out = format!("scenario: {}\n", self.scenario);
        for c in &self.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            out += &format!("[{mark}] {}: {:.4} {} {:.4}\n", c.name, c.measured, c.op, c.bound);
        }
        for (name, v) in &self.values {
            out += &format!("value {name} = {v:.4}\n");
        }
        for r in &self.references {
            out += &format!("hardware reference: {r}\n");
        }
        out += &format!("result: {}\n", if self.passed() { "PASS" } else { "FAIL" });
        out
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, contents) in &self.files {
            std::fs::write(dir.join(name), contents)?;
        }
        std::fs::write(dir.join("report.txt"), self.report())?;
        Ok(())
    }
}

pub fn run(scenario: Scenario, exp: &Experiment) -> Result<Outcome> {
    log::info!("running {scenario}");
    match scenario {
        Scenario::TrainInitial => train_initial(exp),
        Scenario::JacobianSweep => jacobian_sweep(exp),
        Scenario::AntagonismElbow => antagonism_elbow(exp),
        Scenario::VisionRepair => vision_repair(exp),
        Scenario::CombinedQuant => combined_quant(exp),
        Scenario::ReachTarget => reach_target(exp),
    }
}

fn rmse(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, count) = values.into_iter().fold((0.0, 0usize), |(s, c), v| (s + v * v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        (sum / count as f64).sqrt()
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn max_of(values: &[f64]) -> f64 {
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn run_table(exp: &Experiment, ticks: &[TickRecord]) -> Table {
    let (n, m) = (exp.n_joints(), exp.n_muscles());
    let mut header = vec!["time_s".to_string(), "command".to_string()];
    header.extend(indexed("theta_true_deg", n));
    header.extend(indexed("theta_est_deg", n));
    header.extend(indexed("l_true_mm", m));
    header.extend(indexed("tension_n", m));
    header.extend(indexed("l_target_mm", m));
    let mut table = Table::new(header);
    for t in ticks {
        let mut row = vec![num(t.time), t.command.to_string()];
        row.extend(to_deg_vec(&t.theta_true).into_iter().map(num));
        row.extend(to_deg_vec(&t.theta_est).into_iter().map(num));
        row.extend(t.lengths.iter().copied().map(num));
        row.extend(t.tensions.iter().copied().map(num));
        row.extend(t.l_target.iter().copied().map(num));
        table.push(row);
    }
    table
}

fn event_table(events: &[EventRecord]) -> Table {
    let mut table = Table::new(["time_s", "command", "source", "accepted", "reason", "theta_update_deg", "l_update_mm"]);
    for e in events {
        let join = |v: Vec<f64>| v.into_iter().map(num).collect::<Vec<_>>().join(" ");
        table.push(vec![
            num(e.time),
            e.command.to_string(),
            e.source.as_str().to_string(),
            e.accepted.to_string(),
            e.reason.clone(),
            join(to_deg_vec(&e.theta)),
            join(e.lengths.clone()),
        ]);
    }
    table
}

/// Smallest `T_i − T_bias,i` over the given tension vectors (N).
fn tension_margin(exp: &Experiment, tensions: impl IntoIterator<Item = impl AsRef<[f64]>>) -> f64 {
    let bias = &exp.resolved.gains.t_bias;
    tensions
        .into_iter()
        .flat_map(|t| t.as_ref().iter().zip(bias).map(|(t, b)| t - b).collect::<Vec<_>>())
        .fold(f64::INFINITY, f64::min)
}

fn tension_floor_check(out: &mut Outcome, margin: f64) {
    out.checks.push(Check::new("tension floor: min(T - T_bias) (N)", margin, ">=", -1e-9));
}

fn rig_outputs(out: &mut Outcome, exp: &Experiment, rig: &Rig) -> Result<()> {
    out.add_table("run.csv", &run_table(exp, &rig.ticks))?;
    out.add_table("events.csv", &event_table(&rig.events))?;
    Ok(())
}

fn train_initial(exp: &Experiment) -> Result<Outcome> {
    let mut out = Outcome::new(Scenario::TrainInitial);
    let report = &exp.train_report;
    let mut table = Table::new(["epoch", "train_rmse_mm", "validation_rmse_mm"]);
    for e in &report.epochs {
        table.push(vec![e.epoch.to_string(), num(e.train_rmse), num(e.validation_rmse)]);
    }
    out.add_table("metrics.csv", &table)?;
    let series =
        |name: &str, f: fn(&jmm_core::mapping::EpochStats) -> f64| Series::new(name, report.epochs.iter().map(|e| (e.epoch as f64, f(e))).collect());
    out.files.push((
        "loss.svg".into(),
        line_plot(
            "initial training",
            "epoch",
            "RMSE (mm)",
            &[series("train", |e| e.train_rmse), series("validation", |e| e.validation_rmse)],
        ),
    ));
    let worst = report
        .epochs
        .iter()
        .map(|e| {
            if e.train_rmse > 0.0 && e.train_rmse.is_finite() && e.validation_rmse > 0.0 && e.validation_rmse.is_finite() {
                1.0
            } else {
                0.0
            }
        })
        .fold(1.0, f64::min);
    out.value_push("grid_size", exp.dataset_size as f64);
    out.value_push("train_size", report.train_size as f64);
    out.value_push("validation_size", report.validation_size as f64);
    out.checks
        .push(Check::new("final validation RMSE (mm)", report.final_validation_rmse(), "<", 1.0));
    out.checks.push(Check::new("every epoch loss positive and finite", worst, ">=", 1.0));
    out.references.push("training loss under 1 mm".into());
    Ok(out)
}

fn jacobian_sweep(exp: &Experiment) -> Result<Outcome> {
    let mut out = Outcome::new(Scenario::JacobianSweep);
    let cfg = &exp.cfg.jacobian_sweep;
    let (n, m) = (exp.n_joints(), exp.n_muscles());
    let limits = exp.chain.limits();
    let (lo, hi) = limits[cfg.joint];
    let base = deg_vec(&cfg.base_posture_deg);
    let jac_cfg = exp.resolved.ekf.jacobian;
    let postures: Vec<Vec<f64>> = jmm_core::routing::linspace(lo, hi, cfg.points)
        .into_iter()
        .map(|q| {
            let mut theta = base.clone();
            theta[cfg.joint] = q;
            theta
        })
        .collect();
    let mapping = &exp.initial;
    let results = par::map(exp.resolved.train.execution, &postures, |theta| {
        let truth = exp.nominal.true_moment_arms(&exp.chain, theta)?;
        let smooth = smoothed_jacobian(mapping, theta, &limits, &jac_cfg)?;
        let analytic = analytic_jacobian(mapping, theta)?;
        Ok::<_, jmm_core::Error>((truth, smooth, analytic))
    })
    .into_iter()
    .collect::<std::result::Result<Vec<_>, _>>()?;

    let mut table = Table::new([
        "point",
        "theta_deg",
        "muscle",
        "joint",
        "true_mm_per_rad",
        "smoothed_mm_per_rad",
        "analytic_mm_per_rad",
    ]);
    let (mut err_s, mut err_a) = (Vec::new(), Vec::new());
    for (k, (theta, (t, s, a))) in postures.iter().zip(&results).enumerate() {
        for i in 0..m {
            for j in 0..n {
                table.push(vec![
                    k.to_string(),
                    num(to_deg(theta[cfg.joint])),
                    i.to_string(),
                    j.to_string(),
                    num(t[(i, j)]),
                    num(s[(i, j)]),
                    num(a[(i, j)]),
                ]);
                err_s.push(s[(i, j)] - t[(i, j)]);
                err_a.push(a[(i, j)] - t[(i, j)]);
            }
        }
    }
    out.add_table("jacobian.csv", &table)?;

    let mut tv = Table::new(["muscle", "joint", "tv_true", "tv_smoothed", "tv_analytic"]);
    let (mut pairs, mut smoother) = (0, 0);
    for i in 0..m {
        for j in 0..n {
            if !exp.nominal.muscles()[i].spans(j) {
                continue;
            }
            let column = |pick: usize| -> Vec<f64> {
                results
                    .iter()
                    .map(|(t, s, a)| match pick {
                        0 => t[(i, j)],
                        1 => s[(i, j)],
                        _ => a[(i, j)],
                    })
                    .collect()
            };
            let (tv_t, tv_s, tv_a) = (total_variation(&column(0)), total_variation(&column(1)), total_variation(&column(2)));
            pairs += 1;
            if tv_s < tv_a {
                smoother += 1;
            }
            tv.push(vec![i.to_string(), j.to_string(), num(tv_t), num(tv_s), num(tv_a)]);
        }
    }
    out.add_table("metrics.csv", &tv)?;

    let plot_muscles = [exp.cfg.arm.agonist_pair[0], exp.cfg.arm.agonist_pair[1]];
    let mut series = Vec::new();
    for &i in &plot_muscles {
        let name = &exp.nominal.muscles()[i].name;
        let pts = |pick: usize| -> Vec<(f64, f64)> {
            postures
                .iter()
                .zip(&results)
                .map(|(theta, (t, s, a))| {
                    let g = match pick {
                        0 => t,
                        1 => s,
                        _ => a,
                    };
                    (to_deg(theta[cfg.joint]), g[(i, cfg.joint)])
                })
                .collect()
        };
        series.push(Series::new(format!("{name} true"), pts(0)));
        series.push(Series::new(format!("{name} smoothed"), pts(1)));
        series.push(Series::new(format!("{name} analytic"), pts(2)));
    }
    out.files.push((
        "jacobian.svg".into(),
        line_plot("muscle Jacobian sweep", "joint angle (deg)", "dl/dθ (mm/rad)", &series),
    ));

    let (rmse_s, rmse_a) = (rmse(err_s), rmse(err_a));
    let fraction = smoother as f64 / pairs.max(1) as f64;
    out.value_push("rmse_smoothed", rmse_s);
    out.value_push("rmse_analytic", rmse_a);
    out.value_push("spanned_pairs", pairs as f64);
    out.checks.push(Check::new(
        "smoothed RMSE - analytic RMSE vs true moment arms (mm/rad)",
        rmse_s - rmse_a,
        "<=",
        0.0,
    ));
    out.checks.push(Check::new(
        "fraction of spanned pairs with lower total variation",
        fraction,
        ">=",
        cfg.min_tv_fraction,
    ));
    Ok(out)
}

fn antagonism_elbow(exp: &Experiment) -> Result<Outcome> {
    let mut out = Outcome::new(Scenario::AntagonismElbow);
    let cfg = &exp.cfg.antagonism;
    let elbow = exp.cfg.arm.elbow_joint;
    let [a, b] = exp.cfg.arm.agonist_pair;
    let posture = |elbow_deg: f64| {
        let mut d = cfg.shoulder_deg.clone();
        d.insert(elbow, elbow_deg);
        deg_vec(&d)
    };
    let mut rig = Rig::new(
        exp,
        exp.initial.clone(),
        Updaters {
            antagonism: true,
            vision: false,
        },
        &posture(cfg.elbow_steps_deg[0]),
        11,
    )?;
    let m = exp.n_muscles();
    let mut header = vec![
        "trial".to_string(),
        "max_tension_n".to_string(),
        "agonist_gap_n".to_string(),
        "updates".to_string(),
    ];
    header.extend(indexed("final_tension_n", m));
    let mut table = Table::new(header);
    let (mut max_t, mut gaps) = (Vec::new(), Vec::new());
    for trial in 0..cfg.cycles {
        let first_tick = rig.ticks.len();
        let events_before = rig.accepted_events();
        for &step in &cfg.elbow_steps_deg {
            rig.command(&posture(step))?;
        }
        let ticks = &rig.ticks[first_tick..];
        let peak = ticks.iter().map(|t| max_of(&t.tensions)).fold(f64::NEG_INFINITY, f64::max);
        let last = &ticks[ticks.len() - 1].tensions;
        let gap = (last[a] - last[b]).abs();
        let mut row = vec![
            (trial + 1).to_string(),
            num(peak),
            num(gap),
            (rig.accepted_events() - events_before).to_string(),
        ];
        row.extend(last.iter().copied().map(num));
        table.push(row);
        max_t.push(peak);
        gaps.push(gap);
    }
    out.add_table("metrics.csv", &table)?;
    rig_outputs(&mut out, exp, &rig)?;
    let trials: Vec<f64> = (1..=cfg.cycles).map(|t| t as f64).collect();
    out.files.push((
        "tension.svg".into(),
        line_plot(
            "antagonism updater: tensions per trial",
            "trial",
            "tension (N)",
            &[
                Series::new("max tension", trials.iter().copied().zip(max_t.iter().copied()).collect()),
                Series::new("agonist gap", trials.iter().copied().zip(gaps.iter().copied()).collect()),
            ],
        ),
    ));
    let ratio = max_t[max_t.len() - 1] / max_t[0];
    out.value_push("first_max_tension", max_t[0]);
    out.value_push("final_max_tension", max_t[max_t.len() - 1]);
    out.value_push("max_tension_ratio", ratio);
    out.value_push("first_gap", gaps[0]);
    out.value_push("final_gap", gaps[gaps.len() - 1]);
    out.value_push("accepted_updates", rig.accepted_events() as f64);
    out.checks.push(Check::new("final/first max tension", ratio, "<=", 0.8));
    out.checks
        .push(Check::new("final - first agonist gap (N)", gaps[gaps.len() - 1] - gaps[0], "<", 0.0));
    tension_floor_check(&mut out, tension_margin(exp, rig.ticks.iter().map(|t| &t.tensions)));
    out.references
        .push("max tension 370 N -> 250 N over 11 trials (ratio 0.68); agonist tensions became equal".into());
    Ok(out)
}

/// Mean-square estimate-vs-vision error (deg) of the probes of one cycle.
fn probe_rmse(rig: &Rig, commands: std::ops::Range<usize>) -> f64 {
    rmse(
        rig.probes
            .iter()
            .filter(|p| commands.contains(&p.command))
            .filter_map(|p| p.theta_vision.as_ref().map(|v| (p, v)))
            .flat_map(|(p, v)| p.theta_est.iter().zip(v).map(|(e, v)| to_deg(e - v)).collect::<Vec<_>>()),
    )
}

/// Run the vision posture cycles; returns the rig and per-cycle probe RMSE.
pub fn vision_cycles<'a>(exp: &'a Experiment, updaters: Updaters) -> Result<(Rig<'a>, Vec<f64>)> {
    let cfg = &exp.cfg.vision;
    let postures: Vec<Vec<f64>> = cfg.postures_deg.iter().map(|p| deg_vec(p)).collect();
    let start = vec![0.0; exp.n_joints()];
    let mut rig = Rig::new(exp, exp.initial.clone(), updaters, &start, 22)?.with_vision_probe();
    let mut per_cycle = Vec::new();
    for _ in 0..cfg.cycles {
        let first = rig.probes.len();
        let first_command = first + 1;
        for p in &postures {
            rig.command(p)?;
        }
        per_cycle.push(probe_rmse(&rig, first_command..first_command + postures.len()));
    }
    Ok((rig, per_cycle))
}

fn vision_repair(exp: &Experiment) -> Result<Outcome> {
    let mut out = Outcome::new(Scenario::VisionRepair);
    let cfg = &exp.cfg.vision;
    let (rig, treated) = vision_cycles(
        exp,
        Updaters {
            antagonism: false,
            vision: true,
        },
    )?;
    let (control_rig, control) = vision_cycles(exp, Updaters::NONE)?;
    let n = exp.n_joints();
    let mut header = vec!["run".to_string(), "command".to_string(), "ik_ok".to_string()];
    header.extend(indexed("theta_est_deg", n));
    header.extend(indexed("theta_vision_deg", n));
    header.extend(indexed("theta_true_deg", n));
    let mut table = Table::new(header);
    for (name, r) in [("updater", &rig), ("control", &control_rig)] {
        for p in &r.probes {
            let mut row = vec![name.to_string(), p.command.to_string(), p.theta_vision.is_some().to_string()];
            row.extend(to_deg_vec(&p.theta_est).into_iter().map(num));
            match &p.theta_vision {
                Some(v) => row.extend(to_deg_vec(v).into_iter().map(num)),
                None => row.extend(std::iter::repeat_n(String::new(), n)),
            }
            row.extend(to_deg_vec(&p.theta_true).into_iter().map(num));
            table.push(row);
        }
    }
    out.add_table("metrics.csv", &table)?;
    rig_outputs(&mut out, exp, &rig)?;
    let cycles: Vec<f64> = (1..=treated.len()).map(|c| c as f64).collect();
    out.files.push((
        "rmse.svg".into(),
        line_plot(
            "estimate vs vision RMSE per cycle",
            "cycle",
            "RMSE (deg)",
            &[
                Series::new("vision updater", cycles.iter().copied().zip(treated.iter().copied()).collect()),
                Series::new("control", cycles.iter().copied().zip(control.iter().copied()).collect()),
            ],
        ),
    ));
    let ratio = treated[treated.len() - 1] / treated[0];
    let control_ratio = control[control.len() - 1] / control[0];
    out.value_push("initial_rmse_deg", treated[0]);
    out.value_push("final_rmse_deg", treated[treated.len() - 1]);
    out.value_push("control_initial_rmse_deg", control[0]);
    out.value_push("control_final_rmse_deg", control[control.len() - 1]);
    out.value_push("accepted_updates", rig.accepted_events() as f64);
    out.checks
        .push(Check::new("final/initial estimate-vs-vision RMSE", ratio, "<=", cfg.max_ratio));
    out.checks
        .push(Check::new("control run final/initial RMSE", control_ratio, ">=", cfg.control_min_ratio));
    let margin = tension_margin(exp, rig.ticks.iter().chain(&control_rig.ticks).map(|t| &t.tensions));
    tension_floor_check(&mut out, margin);
    out.references
        .push("shoulder RMSE about 16 deg at first, about 3 deg at the end (ratio 0.19)".into());
    Ok(out)
}

fn random_posture(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter().zip(hi).map(|(&a, &b)| rng.random_range(a..=b)).collect()
}

fn max_abs_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
struct Trial {
    rmse_deg: f64,
    hand_mm: f64,
    max_tension: f64,
    margin: f64,
}

/// Settle at `start` under the mapping's command, then command `target`.
fn reach_trial(exp: &Experiment, mapping: &JointMuscleMapping, start: &[f64], target: &[f64]) -> Result<Trial> {
    let plant = exp.plant();
    let (s0, _) = plant.settle(start, &mapping.evaluate(start)?)?;
    let (s1, _) = plant.settle(&s0.theta, &mapping.evaluate(target)?)?;
    let hand = (exp.chain.forward_kinematics(target)?.position - exp.chain.forward_kinematics(&s1.theta)?.position).norm();
    Ok(Trial {
        rmse_deg: rmse(s1.theta.iter().zip(target).map(|(a, b)| to_deg(a - b))),
        hand_mm: hand,
        max_tension: max_of(&s1.tensions),
        margin: tension_margin(exp, [&s0.tensions, &s1.tensions]),
    })
}

pub struct CombinedPlan {
    pub learning: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub starts: Vec<Vec<Vec<f64>>>,
}

/// Learning postures, evaluation targets and start postures (rad).
pub fn combined_plan(exp: &Experiment) -> Result<CombinedPlan> {
    let cfg = &exp.cfg.combined;
    let (lo, hi) = (deg_vec(&cfg.region_min_deg), deg_vec(&cfg.region_max_deg));
    let mut rng = ChaCha8Rng::seed_from_u64(exp.cfg.seed_for(None, 40));
    let learning: Vec<Vec<f64>> = if cfg.learning_postures_deg.is_empty() {
        (0..cfg.learning_commands).map(|_| random_posture(&mut rng, &lo, &hi)).collect()
    } else {
        cfg.learning_postures_deg.iter().map(|p| deg_vec(p)).collect()
    };
    let min_dist = cfg.min_target_distance_deg.to_radians();
    let mut targets = Vec::new();
    for _ in 0..100_000 {
        if targets.len() == cfg.targets {
            break;
        }
        let candidate = random_posture(&mut rng, &lo, &hi);
        if learning.iter().all(|l| max_abs_distance(l, &candidate) >= min_dist) {
            targets.push(candidate);
        }
    }
    if targets.len() < cfg.targets {
        return Err(crate::error::HarnessError::Config(format!(
            "could not place {} targets {} deg from every learning posture",
            cfg.targets, cfg.min_target_distance_deg
        )));
    }
    let starts = targets
        .iter()
        .map(|_| (0..cfg.starts_per_target).map(|_| random_posture(&mut rng, &lo, &hi)).collect())
        .collect();
    Ok(CombinedPlan { learning, targets, starts })
}

fn combined_quant(exp: &Experiment) -> Result<Outcome> {
    let mut out = Outcome::new(Scenario::CombinedQuant);
    let cfg = &exp.cfg.combined;
    let plan = combined_plan(exp)?;
    let start = vec![0.0; exp.n_joints()];
    let mut rig = Rig::new(exp, exp.initial.clone(), Updaters::BOTH, &start, 33)?;
    for p in &plan.learning {
        rig.command(p)?;
    }
    let learned = rig.mapping.clone();

    let jobs: Vec<(usize, usize, usize)> = (0..2)
        .flat_map(|phase| (0..plan.targets.len()).flat_map(move |t| (0..cfg.starts_per_target).map(move |s| (phase, t, s))))
        .collect();
    let trials = par::map(exp.resolved.train.execution, &jobs, |&(phase, t, s)| {
        let mapping = if phase == 0 { &exp.initial } else { &learned };
        reach_trial(exp, mapping, &plan.starts[t][s], &plan.targets[t])
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let mut table = Table::new(["phase", "target", "start", "rmse_joint_deg", "distance_hand_mm", "max_tension_n"]);
    for (&(phase, t, s), trial) in jobs.iter().zip(&trials) {
        let phase = if phase == 0 { "before" } else { "after" };
        table.push(vec![
            phase.into(),
            t.to_string(),
            s.to_string(),
            num(trial.rmse_deg),
            num(trial.hand_mm),
            num(trial.max_tension),
        ]);
    }
    let mut summary = Table::new([
        "phase",
        "target",
        "rmse_joint_mean_deg",
        "rmse_joint_std_deg",
        "distance_hand_mean_mm",
        "distance_hand_std_mm",
    ]);
    let mut means = [[0.0; 2]; 2];
    for phase in 0..2 {
        let mut all_j = Vec::new();
        let mut all_h = Vec::new();
        for t in 0..plan.targets.len() {
            let sel: Vec<&Trial> = jobs
                .iter()
                .zip(&trials)
                .filter(|((p, tt, _), _)| *p == phase && *tt == t)
                .map(|(_, tr)| tr)
                .collect();
            let j: Vec<f64> = sel.iter().map(|t| t.rmse_deg).collect();
            let h: Vec<f64> = sel.iter().map(|t| t.hand_mm).collect();
            let (jm, js) = mean_std(&j);
            let (hm, hs) = mean_std(&h);
            summary.push(vec![
                if phase == 0 { "before" } else { "after" }.into(),
                t.to_string(),
                num(jm),
                num(js),
                num(hm),
                num(hs),
            ]);
            all_j.extend(j);
            all_h.extend(h);
        }
        means[phase] = [mean_std(&all_j).0, mean_std(&all_h).0];
    }
    out.add_table("metrics.csv", &table)?;
    out.add_table("summary.csv", &summary)?;
    rig_outputs(&mut out, exp, &rig)?;

    let min_distance = plan
        .targets
        .iter()
        .flat_map(|t| plan.learning.iter().map(move |l| max_abs_distance(t, l)))
        .fold(f64::INFINITY, f64::min);
    let joint_ratio = means[1][0] / means[0][0];
    let hand_ratio = means[1][1] / means[0][1];
    out.value_push("rmse_joint_before_deg", means[0][0]);
    out.value_push("rmse_joint_after_deg", means[1][0]);
    out.value_push("distance_hand_before_mm", means[0][1]);
    out.value_push("distance_hand_after_mm", means[1][1]);
    out.value_push("accepted_updates", rig.accepted_events() as f64);
    out.checks
        .push(Check::new("after/before mean RMSE_joint", joint_ratio, "<=", cfg.max_joint_ratio));
    out.checks
        .push(Check::new("after/before mean Distance_hand", hand_ratio, "<=", cfg.max_hand_ratio));
    out.checks.push(Check::new(
        "min target-to-learning distance (deg, per-joint max)",
        to_deg(min_distance),
        ">=",
        cfg.min_target_distance_deg,
    ));
    let margin = tension_margin(exp, rig.ticks.iter().map(|t| &t.tensions)).min(trials.iter().map(|t| t.margin).fold(f64::INFINITY, f64::min));
    tension_floor_check(&mut out, margin);
    out.references.push("mean RMSE_joint 12.49 deg -> 4.99 deg (ratio 0.40)".into());
    out.references.push("mean Distance_hand 217.95 mm -> 57.53 mm (ratio 0.26)".into());
    Ok(out)
}

fn reach_target(exp: &Experiment) -> Result<Outcome> {
    let mut out = Outcome::new(Scenario::ReachTarget);
    let cfg = &exp.cfg.reach;
    let target_theta = deg_vec(&cfg.target_posture_deg);
    let target = exp.chain.forward_kinematics(&target_theta)?;
    let limits = exp.chain.limits();
    let mut rng = ChaCha8Rng::seed_from_u64(exp.cfg.seed_for(None, 50));
    let spread = cfg.exploration_spread_deg.to_radians();
    let start = vec![0.0; exp.n_joints()];
    let mut rig = Rig::new(exp, exp.initial.clone(), Updaters::BOTH, &start, 44)?;
    let mut table = Table::new(["attempt", "distance_hand_mm", "max_tension_n", "ik_converged"]);
    let (mut dist, mut tension) = (Vec::new(), Vec::new());
    for attempt in 0..cfg.attempts {
        let (theta_cmd, converged) = match solve_ik(&exp.chain, &rig.theta_est(), &target, &exp.resolved.updater.ik)? {
            IkOutcome::Converged(s) => (s.theta, true),
            IkOutcome::Failed(s) => (s.theta, false),
        };
        rig.command(&theta_cmd)?;
        let state = rig.state();
        let d = (exp.chain.forward_kinematics(&state.theta)?.position - target.position).norm();
        let t = max_of(&state.tensions);
        table.push(vec![(attempt + 1).to_string(), num(d), num(t), converged.to_string()]);
        dist.push(d);
        tension.push(t);
        for _ in 0..cfg.explorations_per_attempt {
            let p: Vec<f64> = target_theta
                .iter()
                .zip(&limits)
                .map(|(&q, &(lo, hi))| (q + rng.random_range(-spread..=spread)).clamp(lo, hi))
                .collect();
            rig.command(&p)?;
        }
    }
    out.add_table("metrics.csv", &table)?;
    rig_outputs(&mut out, exp, &rig)?;
    let attempts: Vec<f64> = (1..=dist.len()).map(|a| a as f64).collect();
    out.files.push((
        "reach.svg".into(),
        line_plot(
            "reach attempts",
            "attempt",
            "value",
            &[
                Series::new("Distance_hand (mm)", attempts.iter().copied().zip(dist.iter().copied()).collect()),
                Series::new("max tension (N)", attempts.iter().copied().zip(tension.iter().copied()).collect()),
            ],
        ),
    ));
    let last = dist.len() - 1;
    out.value_push("first_distance_mm", dist[0]);
    out.value_push("final_distance_mm", dist[last]);
    out.value_push("accepted_updates", rig.accepted_events() as f64);
    out.checks
        .push(Check::new("final/first Distance_hand", dist[last] / dist[0], "<", cfg.max_distance_ratio));
    out.checks
        .push(Check::new("final - first max tension (N)", tension[last] - tension[0], "<=", 0.0));
    tension_floor_check(&mut out, tension_margin(exp, rig.ticks.iter().map(|t| &t.tensions)));
    out.references
        .push("IK targets identical across attempts while the reached hand position improved".into());
    Ok(out)
}
