//! Helpers shared by the integration test targets: random DAGs and
//! brute-force oracles that never call into the feature module.

#![allow(dead_code)]

use std::path::PathBuf;

use capire::{Course, CurriculumGraph, ExperimentConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

pub fn shipped_config() -> ExperimentConfig {
    ExperimentConfig::from_file(&data_dir().join("capire.cfg"), None).expect("shipped config loads")
}

/// A small curriculum with its raw description kept for the oracles.
#[derive(Debug, Clone)]
pub struct RawDag {
    pub credits: Vec<u32>,
    /// (prerequisite, dependent) by index.
    pub edges: Vec<(usize, usize)>,
    pub backbone: Vec<bool>,
}

impl RawDag {
    pub fn n(&self) -> usize {
        self.credits.len()
    }

    pub fn graph(&self) -> CurriculumGraph {
        let courses = (0..self.n())
            .map(|i| Course {
                course_id: format!("C{i}"),
                name: format!("course {i}"),
                nominal_semester: 1 + (i as u32 % 10),
                credits: self.credits[i],
                backbone: self.backbone[i],
            })
            .collect();
        let edges: Vec<(String, String)> =
            self.edges.iter().map(|&(a, b)| (format!("C{a}"), format!("C{b}"))).collect();
        CurriculumGraph::new(courses, &edges, 10).expect("random DAG is valid")
    }

    fn prereqs(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.1 == c).map(|e| e.0)
    }

    fn succs(&self, c: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.0 == c).map(|e| e.1).collect()
    }
}

/// `n` courses; edges only go from a lower to a higher index, after a random relabelling.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize) -> RawDag {
    let density: f64 = rng.random_range(0.0..0.6);
    let mut label: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        label.swap(i, rng.random_range(0..=i));
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(density) {
                edges.push((label[i], label[j]));
            }
        }
    }
    RawDag {
        credits: (0..n).map(|_| rng.random_range(1..=6)).collect(),
        edges,
        backbone: (0..n).map(|_| rng.random_bool(0.4)).collect(),
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn has(mask: u32, i: usize) -> bool {
    mask & (1 << i) != 0
}

/// Credits of unapproved courses with some unapproved prerequisite.
pub fn oracle_blocked(d: &RawDag, approved: u32) -> u32 {
    (0..d.n()).filter(|&c| !has(approved, c) && d.prereqs(c).any(|p| !has(approved, p))).map(|c| d.credits[c]).sum()
}

/// Enumerates every path from `v` to a course without dependents and
/// returns the fewest unapproved courses met along one.
fn min_path(d: &RawDag, v: usize, approved: u32) -> u32 {
    let own = u32::from(!has(approved, v));
    let next = d.succs(v);
    if next.is_empty() {
        return own;
    }
    own + next.into_iter().map(|w| min_path(d, w, approved)).min().unwrap()
}

/// Shortest remaining chain over starting courses whose prerequisites are all approved.
pub fn oracle_chain(d: &RawDag, approved: u32) -> u32 {
    (0..d.n())
        .filter(|&c| d.prereqs(c).all(|p| has(approved, p)))
        .map(|c| min_path(d, c, approved))
        .min()
        .expect("a DAG always has a course without prerequisites")
}

pub fn mask_to_set(mask: u32) -> capire::CourseSet {
    capire::CourseSet::from_bits(mask as u128)
}

pub mod trajectories {
    use capire::engine::{hazard, HazardWeights, SemesterRecord};
    use capire::features::compute_snapshot;
    use capire::population::AgentState;
    use capire::{Engine, Terminal, TerminalEvent};

    /// Checks one finished trajectory; returns a description of the first violation.
    pub fn check(
        engine: &Engine<'_, f64>,
        start: &AgentState<f64>,
        end: &AgentState<f64>,
        records: &[SemesterRecord<f64>],
    ) -> Result<(), String> {
        let graph = engine.graph();
        let horizon = engine.params().horizon;
        let all = graph.all_courses();
        if records.is_empty() {
            return Err("empty trajectory".into());
        }
        let mut prev_approved = start.approved;
        let mut prev_pending = start.regular_pending;
        for (k, r) in records.iter().enumerate() {
            let last = k + 1 == records.len();
            let ctx = |m: &str| format!("agent {} semester {}: {m}", r.agent_id, r.semester);
            if r.semester != k as u32 + 1 {
                return Err(ctx("semesters are not consecutive"));
            }
            if r.terminal_event.is_terminal() != last {
                return Err(ctx("terminal event not exactly on the last record"));
            }
            if r.terminal_event == TerminalEvent::Horizon && r.semester != horizon {
                return Err(ctx("horizon event before the horizon"));
            }
            if !last && r.semester == horizon {
                return Err(ctx("trajectory continues past the horizon"));
            }
            if !prev_approved.is_subset(r.approved) {
                return Err(ctx("an approved course was lost"));
            }
            if r.n_approved_total as usize != r.approved.len() || r.n_approved_total < prev_approved.len() as u32 {
                return Err(ctx("n_approved_total not monotone or inconsistent"));
            }
            if !r.approved.intersection(r.regular_pending).is_empty() {
                return Err(ctx("course both approved and pending"));
            }
            if r.passed_coursework.union(r.failed) != r.enrolled
                || !r.passed_coursework.intersection(r.failed).is_empty()
            {
                return Err(ctx("enrolment outcomes do not partition the enrolled set"));
            }
            if !r.enrolled.intersection(prev_approved.union(prev_pending)).is_empty() {
                return Err(ctx("enrolled in a course already approved or pending"));
            }
            if r.enrolled.len() > start.max_load as usize {
                return Err(ctx("enrolment above max load"));
            }
            if !r.approved_by_exam.is_subset(prev_pending.union(r.passed_coursework)) {
                return Err(ctx("exam approval without passed coursework"));
            }
            if prev_approved.union(r.approved_by_exam) != r.approved {
                return Err(ctx("approved set does not match exam conversions"));
            }
            for (name, v) in [("stress", r.stress), ("belonging", r.belonging), ("hazard", r.hazard)] {
                if !(0.0..=1.0).contains(&v) {
                    return Err(ctx(&format!("{name}={v} outside [0, 1]")));
                }
            }
            let recomputed = compute_snapshot::<f64>(graph, r.approved).map_err(|e| ctx(&e.to_string()))?;
            if recomputed != r.snapshot {
                return Err(ctx("logged snapshot differs from the recomputed one"));
            }
            if r.terminal_event == TerminalEvent::Graduation && r.approved != all {
                return Err(ctx("graduated without every course approved"));
            }
            if matches!(r.terminal_event, TerminalEvent::None | TerminalEvent::Horizon | TerminalEvent::Dropout) {
                let mut probe = end.clone();
                probe.stress = r.stress;
                probe.belonging = r.belonging;
                let delay = engine.delay_fraction(r.semester, r.approved.len());
                let h = engine.dropout_hazard(&probe, &r.snapshot, delay);
                if h != r.hazard {
                    return Err(ctx(&format!("logged hazard {} differs from recomputed {h}", r.hazard)));
                }
                check_hazard_signs(&engine.params().hazard, &probe, &r.snapshot, delay, graph.total_credits())
                    .map_err(|m| ctx(&m))?;
            }
            prev_approved = r.approved;
            prev_pending = r.regular_pending;
        }
        let last = records.last().unwrap();
        let expected = match last.terminal_event {
            TerminalEvent::Dropout => Terminal::Dropped(last.semester),
            TerminalEvent::Graduation => Terminal::Graduated(last.semester),
            _ => Terminal::Active,
        };
        if end.terminal != expected {
            return Err(format!(
                "agent {}: final state {:?} but last event {:?}",
                end.agent_id, end.terminal, last.terminal_event
            ));
        }
        if end.approved != last.approved || end.regular_pending != last.regular_pending {
            return Err(format!("agent {}: final state differs from last record", end.agent_id));
        }
        Ok(())
    }

    const STEP: f64 = 1e-3;

    /// Finite differences of the hazard in each input: non-decreasing in
    /// delay, blocked credits, distance and stress; non-increasing in
    /// belonging and backbone completion. Strict away from saturation.
    pub fn check_hazard_signs(
        w: &HazardWeights<f64>,
        agent: &AgentState<f64>,
        snap: &capire::StructuralSnapshot,
        delay: f64,
        total_credits: u32,
    ) -> Result<(), String> {
        let h0 = hazard(w, agent, snap, delay, total_credits);
        let sens = agent.hazard_sensitivity;
        let p = if sens > 0.0 { h0 / sens } else { 0.0 };
        let interior = p > 1e-3 && p < 0.999 && h0 < 0.999;
        let judge = |name: &str, h1: f64, weight: f64, up: bool| -> Result<(), String> {
            let d = if up { h1 - h0 } else { h0 - h1 };
            if d < 0.0 {
                return Err(format!("hazard moves the wrong way in {name}: {h0} -> {h1}"));
            }
            if interior && weight > 0.05 && d == 0.0 {
                return Err(format!("hazard insensitive to {name} at h={h0}"));
            }
            Ok(())
        };
        judge("delay", hazard(w, agent, snap, delay + STEP, total_credits), w.delay, true)?;
        let mut s = *snap;
        s.blocked_credits += 1;
        judge("blocked", hazard(w, agent, &s, delay, total_credits), w.blocked, true)?;
        let mut s = *snap;
        s.distance_to_graduation += STEP;
        judge("distance", hazard(w, agent, &s, delay, total_credits), w.distance, true)?;
        let mut s = *snap;
        s.backbone_completion += STEP;
        judge("backbone", hazard(w, agent, &s, delay, total_credits), w.backbone, false)?;
        let mut a = agent.clone();
        a.stress += STEP;
        judge("stress", hazard(w, &a, snap, delay, total_credits), w.stress, true)?;
        let mut a = agent.clone();
        a.belonging += STEP;
        judge("belonging", hazard(w, &a, snap, delay, total_credits), w.belonging, false)?;
        Ok(())
    }

    pub fn is_absorbing(engine: &Engine<'_, f64>, end: &AgentState<f64>) -> bool {
        let mut probe = end.clone();
        let stream = capire::rng::AgentStream::new(0, 0, end.agent_id);
        let tag = capire::RecordTag { scenario: capire::PolicyScenario::BASELINE, replication: 0 };
        let t = (end.semester + 1).min(engine.params().horizon);
        match end.terminal {
            Terminal::Active => true,
            _ => engine.step_semester(&mut probe, &stream, tag, t).is_err() && probe == *end,
        }
    }

    pub fn run_and_check(
        engine: &Engine<'_, f64>,
        agents: &mut [AgentState<f64>],
        seed: u64,
        tag: capire::RecordTag,
    ) -> Result<usize, String> {
        for agent in agents.iter_mut() {
            let start = agent.clone();
            let stream = capire::rng::AgentStream::new(seed, tag.replication, agent.agent_id);
            let records = engine.run_trajectory(agent, &stream, tag);
            check(engine, &start, agent, &records)?;
            if !is_absorbing(engine, agent) {
                return Err(format!("agent {}: terminal state is not absorbing", agent.agent_id));
            }
        }
        Ok(agents.len())
    }
}

/// Random engine inputs over one of the shipped scenarios.
pub struct Setup {
    pub scenario: capire::PolicyScenario,
    pub effects: capire::PolicyEffects,
    pub params: capire::EngineParams,
    pub agents: Vec<capire::AgentState>,
    pub seed: u64,
}

pub fn randomise_params(rng: &mut ChaCha8Rng, p: &mut capire::EngineParams) {
    for x in p.base_pass_prob.iter_mut() {
        *x = rng.random_range(0.02..0.98);
    }
    for x in p.friction.iter_mut() {
        *x = rng.random_range(0.0..1.5);
    }
    p.exam_conversion_prob = rng.random_range(0.0..=1.0);
    let h = &mut p.hazard;
    h.intercept = rng.random_range(-8.0..1.0);
    for w in [&mut h.delay, &mut h.blocked, &mut h.distance, &mut h.stress, &mut h.belonging, &mut h.backbone] {
        *w = rng.random_range(0.0..6.0);
    }
    let l = &mut p.latent;
    for c in [
        &mut l.alpha_fail,
        &mut l.alpha_pending,
        &mut l.alpha_block,
        &mut l.alpha_recover,
        &mut l.beta_pass,
        &mut l.beta_fail,
        &mut l.beta_delay,
    ] {
        *c = rng.random_range(0.0..0.6);
    }
    p.nominal_per_semester = rng.random_range(0.5..6.0);
    p.horizon = rng.random_range(1..=12);
}

pub fn randomise_agents(rng: &mut ChaCha8Rng, agents: &mut [capire::AgentState]) {
    for a in agents {
        a.stress = rng.random_range(0.0..=1.0);
        a.belonging = rng.random_range(0.0..=1.0);
        a.pass_logit_shift = rng.random_range(-3.0..3.0);
        a.hazard_sensitivity = rng.random_range(0.0..2.0);
        a.max_load = rng.random_range(1..=8);
    }
}

pub fn random_setup(model: &capire::Model, rng: &mut ChaCha8Rng, n_agents: usize) -> Setup {
    let scenario = capire::PolicyScenario::from_index(rng.random_range(0..8));
    let effects = capire::policy::effects(scenario, &model.policy, &model.base, Some(&model.redesigned)).unwrap();
    let mut params = model.engine.clone();
    randomise_params(rng, &mut params);
    let seed = rng.random();
    let mut agents =
        capire::population::sample_cohort(&model.archetypes, n_agents, model.base.n_courses(), seed, 0).unwrap();
    randomise_agents(rng, &mut agents);
    Setup { scenario, effects, params, agents, seed }
}
