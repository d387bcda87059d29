//! The semester loop for a single agent.
//!
//! Each semester runs, in order: enrolment, coursework outcomes, final-exam
//! conversion, structural snapshot plus latent-state update, and finally the
//! dropout draw. Graduation (every course approved) pre-empts the draw.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::config::{ConfigError, KeyValues};
use crate::course_set::CourseSet;
use crate::features::{snapshot_unchecked, StructuralSnapshot};
use crate::graph::CurriculumGraph;
use crate::policy::{PolicyEffects, PolicyScenario};
use crate::population::{AgentState, Group, Terminal};
use crate::rng::{AgentStream, Phase};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("agent {0} is terminal and cannot be stepped")]
    TerminalAgent(u32),
    #[error("semester {t} outside 1..={horizon}")]
    SemesterOutOfRange { t: u32, horizon: u32 },
    #[error("engine parameter {key}: {message}")]
    InvalidParam { key: String, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Dropout hazard weights. `belonging` and `backbone` enter with a negative sign.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HazardWeights<R> {
    pub intercept: R,
    pub delay: R,
    pub blocked: R,
    pub distance: R,
    pub stress: R,
    pub belonging: R,
    pub backbone: R,
}

/// Latent-state update coefficients; all non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentCoefficients<R> {
    pub alpha_fail: R,
    pub alpha_pending: R,
    pub alpha_block: R,
    pub alpha_recover: R,
    pub beta_pass: R,
    pub beta_fail: R,
    pub beta_delay: R,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineParams<R> {
    /// Historical pass rate per course index.
    pub base_pass_prob: Vec<R>,
    /// Instructional friction per course index, subtracted on the logit scale.
    pub friction: Vec<R>,
    /// Per-semester probability that a pending final exam is passed.
    pub exam_conversion_prob: R,
    pub hazard: HazardWeights<R>,
    pub latent: LatentCoefficients<R>,
    /// Approved courses expected per semester under nominal progress.
    pub nominal_per_semester: R,
    pub horizon: u32,
}

const SCALAR_KEYS: [&str; 16] = [
    "exam_conversion_prob",
    "eta0",
    "eta1",
    "eta2",
    "eta3",
    "eta4",
    "eta5",
    "eta6",
    "alpha_fail",
    "alpha_pending",
    "alpha_block",
    "alpha_recover",
    "beta_pass",
    "beta_fail",
    "beta_delay",
    "nominal_per_semester",
];

impl<R: Real> EngineParams<R> {
    /// Uniform parameters over `n_courses`; hazard switched off.
    pub fn uniform(n_courses: usize, pass_prob: R, horizon: u32) -> Self {
        let zero = R::zero();
        EngineParams {
            base_pass_prob: vec![pass_prob; n_courses],
            friction: vec![zero; n_courses],
            exam_conversion_prob: R::one(),
            hazard: HazardWeights {
                intercept: R::lit(-60.0),
                delay: zero,
                blocked: zero,
                distance: zero,
                stress: zero,
                belonging: zero,
                backbone: zero,
            },
            latent: LatentCoefficients {
                alpha_fail: zero,
                alpha_pending: zero,
                alpha_block: zero,
                alpha_recover: zero,
                beta_pass: zero,
                beta_fail: zero,
                beta_delay: zero,
            },
            nominal_per_semester: R::from_count(n_courses as u64) / R::from_count(horizon as u64),
            horizon,
        }
    }

    /// Reads `engine_params.csv` (key,value) and `course_pass.csv`
    /// (`course_id,base_pass_prob,friction`) against `graph`.
    pub fn load(kv: &KeyValues, course_pass_csv: &str, graph: &CurriculumGraph) -> Result<Self, EngineError> {
        let horizon = kv.parsed::<u32>("horizon")?.unwrap_or(graph.plan_length());
        let mut p = Self::uniform(graph.n_courses(), R::lit(0.5), horizon);
        for (key, value) in kv.iter() {
            if key == "horizon" {
                continue;
            }
            let x: f64 = value.parse().map_err(|_| EngineError::InvalidParam {
                key: key.clone(),
                message: format!("not a number: {value:?}"),
            })?;
            if !p.set(key, x) {
                return Err(EngineError::InvalidParam { key: key.clone(), message: "unknown key".into() });
            }
        }
        #[derive(Deserialize)]
        struct Row {
            course_id: String,
            base_pass_prob: f64,
            friction: f64,
        }
        let mut seen = CourseSet::EMPTY;
        let mut rdr =
            csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(course_pass_csv.as_bytes());
        for row in rdr.deserialize::<Row>() {
            let r = row.map_err(|e| EngineError::InvalidParam { key: "course_pass".into(), message: e.to_string() })?;
            let i = graph.index_of(&r.course_id).ok_or_else(|| EngineError::InvalidParam {
                key: "course_pass".into(),
                message: format!("unknown course {:?}", r.course_id),
            })?;
            p.base_pass_prob[i] = R::lit(r.base_pass_prob);
            p.friction[i] = R::lit(r.friction);
            seen.insert(i);
        }
        if seen != graph.all_courses() {
            let missing = graph.ids(graph.all_courses().difference(seen)).join(",");
            return Err(EngineError::InvalidParam {
                key: "course_pass".into(),
                message: format!("no row for {missing}"),
            });
        }
        p.validate()?;
        Ok(p)
    }

    pub fn load_files(engine_params: &Path, course_pass: &Path, graph: &CurriculumGraph) -> Result<Self, EngineError> {
        let kv = KeyValues::read_csv(engine_params)?;
        let text = crate::config::read_to_string(course_pass)?;
        Self::load(&kv, &text, graph)
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |key: &str, message: &str| EngineError::InvalidParam { key: key.into(), message: message.into() };
        let unit = |x: R| x >= R::zero() && x <= R::one();
        if !self.base_pass_prob.iter().all(|&p| unit(p)) {
            return Err(bad("base_pass_prob", "probabilities must lie in [0,1]"));
        }
        if !self.friction.iter().all(|&f| f >= R::zero()) {
            return Err(bad("friction", "must be >= 0"));
        }
        if !unit(self.exam_conversion_prob) {
            return Err(bad("exam_conversion_prob", "must lie in [0,1]"));
        }
        for key in &SCALAR_KEYS[8..15] {
            let v = self.get(key).unwrap();
            if v.is_nan() || v < R::zero() {
                return Err(bad(key, "latent coefficients must be >= 0"));
            }
        }
        for key in &SCALAR_KEYS[1..8] {
            if !self.get(key).unwrap().is_finite() {
                return Err(bad(key, "must be finite"));
            }
        }
        if self.horizon == 0 {
            return Err(bad("horizon", "must be >= 1"));
        }
        Ok(())
    }

    fn slot(&mut self, key: &str) -> Option<&mut R> {
        Some(match key {
            "exam_conversion_prob" => &mut self.exam_conversion_prob,
            "eta0" => &mut self.hazard.intercept,
            "eta1" => &mut self.hazard.delay,
            "eta2" => &mut self.hazard.blocked,
            "eta3" => &mut self.hazard.distance,
            "eta4" => &mut self.hazard.stress,
            "eta5" => &mut self.hazard.belonging,
            "eta6" => &mut self.hazard.backbone,
            "alpha_fail" => &mut self.latent.alpha_fail,
            "alpha_pending" => &mut self.latent.alpha_pending,
            "alpha_block" => &mut self.latent.alpha_block,
            "alpha_recover" => &mut self.latent.alpha_recover,
            "beta_pass" => &mut self.latent.beta_pass,
            "beta_fail" => &mut self.latent.beta_fail,
            "beta_delay" => &mut self.latent.beta_delay,
            "nominal_per_semester" => &mut self.nominal_per_semester,
            _ => return None,
        })
    }

    /// Sets a scalar parameter by its file key; `false` if the key is unknown.
    pub fn set(&mut self, key: &str, value: f64) -> bool {
        match self.slot(key) {
            Some(s) => {
                *s = R::lit(value);
                true
            }
            None => false,
        }
    }

    pub fn get(&self, key: &str) -> Option<R> {
        self.clone().slot(key).map(|s| *s)
    }

    pub fn to_key_values(&self) -> BTreeMap<String, String> {
        let mut out: BTreeMap<String, String> =
            SCALAR_KEYS.iter().map(|k| (k.to_string(), self.get(k).unwrap().to_string())).collect();
        out.insert("horizon".into(), self.horizon.to_string());
        out
    }
}

/// How an agent's semester ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TerminalEvent {
    None,
    Dropout,
    Graduation,
    /// Still enrolled at the final semester without graduating.
    Horizon,
}

impl TerminalEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminalEvent::None => "none",
            TerminalEvent::Dropout => "dropout",
            TerminalEvent::Graduation => "graduation",
            TerminalEvent::Horizon => "horizon",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => TerminalEvent::None,
            "dropout" => TerminalEvent::Dropout,
            "graduation" => TerminalEvent::Graduation,
            "horizon" => TerminalEvent::Horizon,
            _ => return None,
        })
    }

    pub fn is_terminal(self) -> bool {
        self != TerminalEvent::None
    }
}

impl fmt::Display for TerminalEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Identifies the experiment cell a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordTag {
    pub scenario: PolicyScenario,
    pub replication: u32,
}

/// One agent-semester.
#[derive(Debug, Clone, PartialEq)]
pub struct SemesterRecord<R> {
    pub scenario: PolicyScenario,
    pub replication: u32,
    pub agent_id: u32,
    pub archetype: usize,
    pub group: Group,
    pub semester: u32,
    pub enrolled: CourseSet,
    pub passed_coursework: CourseSet,
    pub approved_by_exam: CourseSet,
    pub failed: CourseSet,
    /// Approved set at the end of the semester.
    pub approved: CourseSet,
    pub regular_pending: CourseSet,
    pub n_approved_total: u32,
    pub stress: R,
    pub belonging: R,
    pub hazard: R,
    pub snapshot: StructuralSnapshot<R>,
    pub terminal_event: TerminalEvent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CourseOutcome {
    PassCoursework,
    Fail,
}

/// Event counts feeding the latent-state update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemesterEvents<R> {
    pub n_enrolled: usize,
    pub n_pass: usize,
    pub n_fail: usize,
    pub n_pending: usize,
    pub blocked_fraction: R,
    pub delay_fraction: R,
}

/// Simulation context for one scenario: graph, resolved policy, parameters.
#[derive(Debug, Clone)]
pub struct Engine<'a, R> {
    graph: &'a CurriculumGraph,
    effects: &'a PolicyEffects<R>,
    params: &'a EngineParams<R>,
    priority: Vec<usize>,
    pass_logit: Vec<R>,
}

impl<'a, R: Real> Engine<'a, R> {
    pub fn new(graph: &'a CurriculumGraph, effects: &'a PolicyEffects<R>, params: &'a EngineParams<R>) -> Self {
        let mut priority: Vec<usize> = (0..graph.n_courses()).collect();
        priority.sort_by(|&a, &b| {
            let (ca, cb) = (graph.course(a), graph.course(b));
            cb.backbone
                .cmp(&ca.backbone)
                .then(ca.nominal_semester.cmp(&cb.nominal_semester))
                .then(graph.out_degree(b).cmp(&graph.out_degree(a)))
                .then(ca.course_id.cmp(&cb.course_id))
        });
        let pass_logit = (0..graph.n_courses())
            .map(|c| {
                params.base_pass_prob[c].logit() + effects.pass_logit_boost[c]
                    - params.friction[c] * effects.friction_scale
            })
            .collect();
        Engine { graph, effects, params, priority, pass_logit }
    }

    pub fn graph(&self) -> &CurriculumGraph {
        self.graph
    }

    pub fn params(&self) -> &EngineParams<R> {
        self.params
    }

    /// Courses per semester the agent attempts given its latent states.
    pub fn target_load(&self, agent: &AgentState<R>) -> usize {
        let half = R::lit(0.5);
        let max = R::from_count(agent.max_load as u64);
        let raw = (max * (R::one() - half * agent.stress) * (half + half * agent.belonging)).round();
        raw.to_usize().unwrap_or(1).clamp(1, agent.max_load as usize)
    }

    /// Eligible courses ranked backbone first, then by nominal semester,
    /// then by out-degree (descending), then by id; the first `target_load` are taken.
    pub fn select_enrolment(&self, agent: &AgentState<R>) -> Vec<usize> {
        let taken = agent.approved.union(agent.regular_pending);
        self.priority
            .iter()
            .copied()
            .filter(|&c| !taken.contains(c) && self.graph.prerequisites_within(c, taken))
            .take(self.target_load(agent))
            .collect()
    }

    pub fn pass_probability(&self, agent: &AgentState<R>, course: usize) -> R {
        (self.pass_logit[course] + agent.pass_logit_shift).logistic()
    }

    /// Draws the coursework outcome and updates the agent's course status.
    pub fn sample_course_outcome(
        &self,
        agent: &mut AgentState<R>,
        course: usize,
        stream: &AgentStream,
        t: u32,
    ) -> CourseOutcome {
        let p = self.pass_probability(agent, course);
        if R::lit(stream.uniform(t, Phase::Outcome, course as u32)) < p {
            agent.regular_pending.insert(course);
            CourseOutcome::PassCoursework
        } else {
            agent.fail_count[course] = agent.fail_count[course].saturating_add(1);
            CourseOutcome::Fail
        }
    }

    pub fn conversion_probability(&self) -> R {
        (self.params.exam_conversion_prob * self.effects.exam_conversion_multiplier).min(R::one())
    }

    /// Each pending course independently passes its final exam; returns the newly approved set.
    pub fn convert_pending_exams(&self, agent: &mut AgentState<R>, stream: &AgentStream, t: u32) -> CourseSet {
        let q = self.conversion_probability();
        let converted: CourseSet = agent
            .regular_pending
            .iter()
            .filter(|&c| R::lit(stream.uniform(t, Phase::Conversion, c as u32)) < q)
            .collect();
        agent.regular_pending = agent.regular_pending.difference(converted);
        agent.approved = agent.approved.union(converted);
        converted
    }

    /// Shortfall against linear nominal progress, as a fraction of the curriculum.
    pub fn delay_fraction(&self, t: u32, n_approved: usize) -> R {
        let n = R::from_count(self.graph.n_courses() as u64);
        let expected = self.params.nominal_per_semester * R::from_count(t as u64);
        (expected - R::from_count(n_approved as u64)).max(R::zero()) / n
    }

    pub fn update_latent_states(&self, agent: &AgentState<R>, ev: &SemesterEvents<R>) -> (R, R) {
        let k = &self.params.latent;
        let per = R::from_count(ev.n_enrolled.max(1) as u64);
        let fail = R::from_count(ev.n_fail as u64) / per;
        let pass = R::from_count(ev.n_pass as u64) / per;
        let pending = (R::from_count(ev.n_pending as u64) / R::lit(4.0)).min(R::one());
        let stress =
            agent.stress + k.alpha_fail * fail + k.alpha_pending * pending + k.alpha_block * ev.blocked_fraction
                - k.alpha_recover * pass
                - self.effects.stress_relief(agent.group);
        let belonging = agent.belonging + k.beta_pass * pass - k.beta_fail * fail - k.beta_delay * ev.delay_fraction
            + self.effects.belonging_gain(agent.group);
        (stress.clamp01(), belonging.clamp01())
    }

    pub fn dropout_hazard(&self, agent: &AgentState<R>, snap: &StructuralSnapshot<R>, delay_fraction: R) -> R {
        hazard(&self.params.hazard, agent, snap, delay_fraction, self.graph.total_credits())
    }

    /// Advances an active agent through semester `t`.
    pub fn step_semester(
        &self,
        agent: &mut AgentState<R>,
        stream: &AgentStream,
        tag: RecordTag,
        t: u32,
    ) -> Result<SemesterRecord<R>, EngineError> {
        if !agent.is_active() {
            return Err(EngineError::TerminalAgent(agent.agent_id));
        }
        if t < 1 || t > self.params.horizon {
            return Err(EngineError::SemesterOutOfRange { t, horizon: self.params.horizon });
        }
        agent.semester = t;
        let all = self.graph.all_courses();
        let mut enrolled = CourseSet::EMPTY;
        let mut passed = CourseSet::EMPTY;
        let mut failed = CourseSet::EMPTY;
        let mut converted = CourseSet::EMPTY;
        let mut hazard = R::zero();
        let mut event = TerminalEvent::None;

        if agent.approved == all {
            agent.terminal = Terminal::Graduated(t);
            event = TerminalEvent::Graduation;
        } else {
            for c in self.select_enrolment(agent) {
                enrolled.insert(c);
                match self.sample_course_outcome(agent, c, stream, t) {
                    CourseOutcome::PassCoursework => passed.insert(c),
                    CourseOutcome::Fail => failed.insert(c),
                }
            }
            converted = self.convert_pending_exams(agent, stream, t);
        }

        let snapshot: StructuralSnapshot<R> = snapshot_unchecked(self.graph, agent.approved);
        if event == TerminalEvent::None {
            let delay = self.delay_fraction(t, agent.n_approved());
            let events = SemesterEvents {
                n_enrolled: enrolled.len(),
                n_pass: passed.len(),
                n_fail: failed.len(),
                n_pending: agent.regular_pending.len(),
                blocked_fraction: R::ratio(snapshot.blocked_credits as u64, self.graph.total_credits() as u64),
                delay_fraction: delay,
            };
            let (stress, belonging) = self.update_latent_states(agent, &events);
            agent.stress = stress;
            agent.belonging = belonging;
            if agent.approved == all {
                agent.terminal = Terminal::Graduated(t);
                event = TerminalEvent::Graduation;
            } else {
                hazard = self.dropout_hazard(agent, &snapshot, delay);
                if R::lit(stream.uniform(t, Phase::Dropout, 0)) < hazard {
                    agent.terminal = Terminal::Dropped(t);
                    event = TerminalEvent::Dropout;
                } else if t == self.params.horizon {
                    event = TerminalEvent::Horizon;
                }
            }
        }

        Ok(SemesterRecord {
            scenario: tag.scenario,
            replication: tag.replication,
            agent_id: agent.agent_id,
            archetype: agent.archetype,
            group: agent.group,
            semester: t,
            enrolled,
            passed_coursework: passed,
            approved_by_exam: converted,
            failed,
            approved: agent.approved,
            regular_pending: agent.regular_pending,
            n_approved_total: agent.n_approved() as u32,
            stress: agent.stress,
            belonging: agent.belonging,
            hazard,
            snapshot,
            terminal_event: event,
        })
    }

    /// Runs a fresh agent until dropout, graduation or the horizon.
    pub fn run_trajectory(
        &self,
        agent: &mut AgentState<R>,
        stream: &AgentStream,
        tag: RecordTag,
    ) -> Vec<SemesterRecord<R>> {
        let mut records = Vec::with_capacity(self.params.horizon as usize);
        for t in 1..=self.params.horizon {
            let rec = self.step_semester(agent, stream, tag, t).expect("active agent within horizon");
            let done = rec.terminal_event.is_terminal();
            records.push(rec);
            if done {
                break;
            }
        }
        records
    }
}

/// `sensitivity * logistic(linear predictor)`, clamped to `[0, 1]`.
pub fn hazard<R: Real>(
    w: &HazardWeights<R>,
    agent: &AgentState<R>,
    snap: &StructuralSnapshot<R>,
    delay_fraction: R,
    total_credits: u32,
) -> R {
    let blocked = R::ratio(snap.blocked_credits as u64, total_credits as u64);
    let eta = w.intercept
        + w.delay * delay_fraction
        + w.blocked * blocked
        + w.distance * snap.distance_to_graduation
        + w.stress * agent.stress
        - w.belonging * agent.belonging
        - w.backbone * snap.backbone_completion;
    (agent.hazard_sensitivity * eta.logistic()).clamp01()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::toy;
    use crate::population::{init_agent, Archetype};

    fn archetype(max_load: u32, stress: f64, belonging: f64) -> Archetype<f64> {
        Archetype {
            archetype_id: "x".into(),
            group: Group::Stable,
            proportion: 1.0,
            pass_logit_shift: 0.0,
            hazard_sensitivity: 1.0,
            stress0_mean: stress,
            stress0_sd: 0.0,
            belonging0_mean: belonging,
            belonging0_sd: 0.0,
            max_load,
        }
    }

    fn agent(n: usize, max_load: u32, stress: f64, belonging: f64) -> AgentState<f64> {
        init_agent(0, &archetype(max_load, stress, belonging), 0, n, &AgentStream::new(1, 0, 0))
    }

    const TAG: RecordTag = RecordTag { scenario: PolicyScenario::BASELINE, replication: 0 };

    #[test]
    fn enrolment_examples_on_toy() {
        let g = toy();
        let fx = PolicyEffects::neutral(4);
        let p = EngineParams::uniform(4, 0.5, 12);
        let e = Engine::new(&g, &fx, &p);
        let mut a = agent(4, 2, 0.0, 1.0);
        assert_eq!(g.ids(e.select_enrolment(&a).into_iter().collect()), vec!["A"]);
        a.approved.insert(0);
        assert_eq!(e.select_enrolment(&a), vec![1, 2]);
        let low = agent(4, 3, 1.0, 0.0);
        assert_eq!(e.target_load(&low), 1);
    }

    #[test]
    fn pass_probability_composes_on_logit_scale() {
        let g = toy();
        let mut fx = PolicyEffects::neutral(4);
        let p = EngineParams::uniform(4, 0.5, 12);
        let mut a = agent(4, 2, 0.0, 1.0);
        assert!((Engine::new(&g, &fx, &p).pass_probability(&a, 0) - 0.5).abs() < 1e-15);
        fx.pass_logit_boost[0] = 0.8;
        a.pass_logit_shift = -0.9;
        let prob = Engine::new(&g, &fx, &p).pass_probability(&a, 0);
        let expected = 1.0 / (1.0 + 0.1f64.exp());
        assert!((prob - expected).abs() < 1e-12);
        assert!((prob - 0.475).abs() < 1e-3);
    }

    #[test]
    fn conversion_with_certainty_and_nothing_pending() {
        let g = toy();
        let fx = PolicyEffects::neutral(4);
        let p = EngineParams::uniform(4, 0.5, 12);
        let e = Engine::new(&g, &fx, &p);
        let s = AgentStream::new(1, 0, 0);
        let mut a = agent(4, 2, 0.0, 1.0);
        assert!(e.convert_pending_exams(&mut a, &s, 1).is_empty());
        a.regular_pending = [1, 2].into_iter().collect();
        assert_eq!(e.convert_pending_exams(&mut a, &s, 1).len(), 2);
        assert!(a.regular_pending.is_empty() && a.approved.len() == 2);
    }

    #[test]
    fn latent_update_fixed_point_and_clamp() {
        let g = toy();
        let fx = PolicyEffects::neutral(4);
        let mut p = EngineParams::uniform(4, 0.5, 12);
        p.latent.alpha_fail = 0.3;
        let e = Engine::new(&g, &fx, &p);
        let a = agent(4, 2, 0.4, 0.6);
        let quiet = SemesterEvents {
            n_enrolled: 0,
            n_pass: 0,
            n_fail: 0,
            n_pending: 0,
            blocked_fraction: 0.0,
            delay_fraction: 0.0,
        };
        assert_eq!(e.update_latent_states(&a, &quiet), (0.4, 0.6));
        let hot = agent(4, 2, 0.99, 0.6);
        let failing = SemesterEvents { n_enrolled: 2, n_fail: 1, ..quiet };
        assert_eq!(e.update_latent_states(&hot, &failing).0, 1.0);
    }

    #[test]
    fn hazard_limits() {
        let g = toy();
        let a = agent(4, 2, 0.5, 0.5);
        let snap: StructuralSnapshot<f64> = snapshot_unchecked(&g, CourseSet::EMPTY);
        let mut w = EngineParams::<f64>::uniform(4, 0.5, 12).hazard;
        w.intercept = -1.3;
        let h = hazard(&w, &a, &snap, 0.2, g.total_credits());
        assert!((h - 1.0 / (1.0 + 1.3f64.exp())).abs() < 1e-15);
        w.intercept = -50.0;
        assert!(hazard(&w, &a, &snap, 0.2, g.total_credits()) < 1e-20);
    }

    #[test]
    fn toy_deterministic_graduation_in_three_semesters() {
        let g = toy();
        let fx = PolicyEffects::neutral(4);
        let p = EngineParams::uniform(4, 1.0, 12);
        let e = Engine::new(&g, &fx, &p);
        let s = AgentStream::new(5, 0, 0);
        let mut a = agent(4, 2, 0.0, 1.0);
        let recs = e.run_trajectory(&mut a, &s, TAG);
        assert_eq!(recs.len(), 3);
        assert_eq!(g.ids(recs[0].approved_by_exam), vec!["A"]);
        assert_eq!(g.ids(recs[1].approved_by_exam), vec!["B", "C"]);
        assert_eq!(g.ids(recs[2].approved_by_exam), vec!["D"]);
        assert_eq!(recs[2].terminal_event, TerminalEvent::Graduation);
        assert_eq!(a.terminal, Terminal::Graduated(3));
        assert_eq!(e.step_semester(&mut a, &s, TAG, 4), Err(EngineError::TerminalAgent(0)));
    }

    #[test]
    fn fully_approved_agent_graduates_without_enrolling() {
        let g = toy();
        let fx = PolicyEffects::neutral(4);
        let p = EngineParams::uniform(4, 0.5, 12);
        let e = Engine::new(&g, &fx, &p);
        let mut a = agent(4, 2, 0.0, 1.0);
        a.approved = g.all_courses();
        let rec = e.step_semester(&mut a, &AgentStream::new(1, 0, 0), TAG, 5).unwrap();
        assert_eq!(rec.terminal_event, TerminalEvent::Graduation);
        assert!(rec.enrolled.is_empty());
    }

    #[test]
    fn certain_hazard_and_stuck_agent() {
        let g = toy();
        let fx = PolicyEffects::neutral(4);
        let mut p = EngineParams::uniform(4, 0.5, 12);
        p.hazard.intercept = 60.0;
        let s = AgentStream::new(1, 0, 0);
        let mut a = agent(4, 2, 0.0, 1.0);
        let recs = Engine::new(&g, &fx, &p).run_trajectory(&mut a, &s, TAG);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].terminal_event, TerminalEvent::Dropout);
        assert_eq!(a.terminal, Terminal::Dropped(1));

        let stuck = EngineParams::uniform(4, 0.0, 12);
        let mut b = agent(4, 2, 0.0, 1.0);
        let recs = Engine::new(&g, &fx, &stuck).run_trajectory(&mut b, &s, TAG);
        assert_eq!(recs.len(), 12);
        assert!(recs.iter().all(|r| r.n_approved_total == 0));
        assert_eq!(recs[11].terminal_event, TerminalEvent::Horizon);
        assert!(b.is_active());
    }

    #[test]
    fn params_file_round_trip() {
        let g = toy();
        let kv = KeyValues::parse_csv("key,value\neta0,-2\nalpha_fail,0.2\nexam_conversion_prob,0.35\n").unwrap();
        let pass = "course_id,base_pass_prob,friction\nA,0.4,0.1\nB,0.5,0\nC,0.6,0\nD,0.7,0.2\n";
        let p = EngineParams::<f64>::load(&kv, pass, &g).unwrap();
        assert_eq!(p.hazard.intercept, -2.0);
        assert_eq!(p.exam_conversion_prob, 0.35);
        assert_eq!(p.friction[3], 0.2);
        assert!((p.nominal_per_semester - 4.0 / 12.0).abs() < 1e-15);
        assert!(EngineParams::<f64>::load(&kv, "course_id,base_pass_prob,friction\nA,0.4,0\n", &g).is_err());
        let bad = KeyValues::parse_csv("key,value\nalpha_fail,-1\n").unwrap();
        assert!(EngineParams::<f64>::load(&bad, pass, &g).is_err());
        let unknown = KeyValues::parse_csv("key,value\nzeta,1\n").unwrap();
        assert!(EngineParams::<f64>::load(&unknown, pass, &g).is_err());
    }
}
