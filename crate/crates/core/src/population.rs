//! Student archetypes and cohort initialisation.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::Deserialize;
use thiserror::Error;

use crate::course_set::CourseSet;
use crate::rng::{AgentStream, Phase};
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PopulationError {
    #[error("archetype table is empty")]
    Empty,
    #[error("archetype proportions sum to {0}, expected 1")]
    ProportionSum(f64),
    #[error("archetype {id:?}: {message}")]
    InvalidArchetype { id: String, message: String },
    #[error("cohort size must be at least 1")]
    EmptyCohort,
    #[error("archetypes: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Vulnerable,
    Stable,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Vulnerable => "vulnerable",
            Group::Stable => "stable",
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Group {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vulnerable" => Ok(Group::Vulnerable),
            "stable" => Ok(Group::Stable),
            other => Err(format!("unknown group {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Archetype<R> {
    pub archetype_id: String,
    pub group: Group,
    pub proportion: R,
    /// Added to every course's pass log-odds.
    pub pass_logit_shift: R,
    /// Multiplies the dropout hazard outside the logistic.
    pub hazard_sensitivity: R,
    pub stress0_mean: R,
    pub stress0_sd: R,
    pub belonging0_mean: R,
    pub belonging0_sd: R,
    /// Courses per semester.
    pub max_load: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchetypeTable<R> {
    archetypes: Vec<Archetype<R>>,
}

impl<R: Real> ArchetypeTable<R> {
    pub fn new(archetypes: Vec<Archetype<R>>) -> Result<Self, PopulationError> {
        let table = ArchetypeTable { archetypes };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<(), PopulationError> {
        if self.archetypes.is_empty() {
            return Err(PopulationError::Empty);
        }
        let bad = |a: &Archetype<R>, message: &str| PopulationError::InvalidArchetype {
            id: a.archetype_id.clone(),
            message: message.to_string(),
        };
        let mut sum = 0.0;
        for a in &self.archetypes {
            let p = a.proportion.to_f64().unwrap_or(f64::NAN);
            if !(0.0..=1.0).contains(&p) {
                return Err(bad(a, "proportion outside [0,1]"));
            }
            sum += p;
            if a.hazard_sensitivity.is_nan() || a.hazard_sensitivity <= R::zero() {
                return Err(bad(a, "hazard_sensitivity must be positive"));
            }
            if a.max_load < 1 {
                return Err(bad(a, "max_load must be at least 1"));
            }
            if [a.stress0_sd, a.belonging0_sd].iter().any(|v| v.is_nan() || *v < R::zero()) {
                return Err(bad(a, "standard deviations must be non-negative"));
            }
            if !a.pass_logit_shift.is_finite() || !a.stress0_mean.is_finite() || !a.belonging0_mean.is_finite() {
                return Err(bad(a, "non-finite parameter"));
            }
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(PopulationError::ProportionSum(sum));
        }
        Ok(())
    }

    /// Parses `archetypes.csv`.
    pub fn load(text: &str) -> Result<Self, PopulationError> {
        #[derive(Deserialize)]
        struct Row {
            archetype_id: String,
            group: String,
            proportion: f64,
            pass_logit_shift: f64,
            hazard_sensitivity: f64,
            stress0_mean: f64,
            stress0_sd: f64,
            belonging0_mean: f64,
            belonging0_sd: f64,
            max_load: u32,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
        let mut archetypes = Vec::new();
        for row in rdr.deserialize::<Row>() {
            let r = row.map_err(|e| PopulationError::Parse(e.to_string()))?;
            archetypes.push(Archetype {
                group: r.group.parse().map_err(PopulationError::Parse)?,
                archetype_id: r.archetype_id,
                proportion: R::lit(r.proportion),
                pass_logit_shift: R::lit(r.pass_logit_shift),
                hazard_sensitivity: R::lit(r.hazard_sensitivity),
                stress0_mean: R::lit(r.stress0_mean),
                stress0_sd: R::lit(r.stress0_sd),
                belonging0_mean: R::lit(r.belonging0_mean),
                belonging0_sd: R::lit(r.belonging0_sd),
                max_load: r.max_load,
            });
        }
        Self::new(archetypes)
    }

    pub fn load_file(path: &Path) -> Result<Self, PopulationError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| PopulationError::Parse(format!("{}: {e}", path.display())))?;
        Self::load(&text)
    }

    pub fn archetypes(&self) -> &[Archetype<R>] {
        &self.archetypes
    }

    pub fn archetypes_mut(&mut self) -> &mut [Archetype<R>] {
        &mut self.archetypes
    }

    pub fn get(&self, i: usize) -> &Archetype<R> {
        &self.archetypes[i]
    }

    pub fn len(&self) -> usize {
        self.archetypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.archetypes.is_empty()
    }

    /// Sets `<archetype_id>.<field>`; `false` if either part is unknown.
    /// Proportions are not settable this way since they must sum to one.
    pub fn set_param(&mut self, key: &str, value: f64) -> bool {
        match self.slot(key) {
            Some(s) => {
                *s = R::lit(value);
                true
            }
            None => false,
        }
    }

    pub fn param(&self, key: &str) -> Option<R> {
        self.clone().slot(key).map(|s| *s)
    }

    fn slot(&mut self, key: &str) -> Option<&mut R> {
        let (id, field) = key.split_once('.')?;
        let a = self.archetypes.iter_mut().find(|a| a.archetype_id == id)?;
        Some(match field {
            "pass_logit_shift" => &mut a.pass_logit_shift,
            "hazard_sensitivity" => &mut a.hazard_sensitivity,
            "stress0_mean" => &mut a.stress0_mean,
            "stress0_sd" => &mut a.stress0_sd,
            "belonging0_mean" => &mut a.belonging0_mean,
            "belonging0_sd" => &mut a.belonging0_sd,
            _ => return None,
        })
    }

    /// Agents per archetype for a cohort of `n`: floors of `proportion * n`,
    /// with leftover seats going to the largest remainders (table order breaks ties).
    pub fn composition(&self, n: usize) -> Vec<usize> {
        let exact: Vec<f64> = self.archetypes.iter().map(|a| a.proportion.to_f64().unwrap() * n as f64).collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| (x + 1e-9).floor() as usize).collect();
        let assigned: usize = counts.iter().sum();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - counts[a] as f64;
            let rb = exact[b] - counts[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &i in order.iter().cycle().take(n.saturating_sub(assigned)) {
            counts[i] += 1;
        }
        counts
    }
}

/// Terminal status of an agent. Dropout and graduation are absorbing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    Active,
    Dropped(u32),
    Graduated(u32),
}

/// One simulated student.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState<R> {
    pub agent_id: u32,
    /// Index into the archetype table.
    pub archetype: usize,
    pub group: Group,
    pub pass_logit_shift: R,
    pub hazard_sensitivity: R,
    pub max_load: u32,
    pub approved: CourseSet,
    pub regular_pending: CourseSet,
    pub fail_count: Vec<u16>,
    pub stress: R,
    pub belonging: R,
    pub semester: u32,
    pub terminal: Terminal,
}

impl<R: Real> AgentState<R> {
    pub fn is_active(&self) -> bool {
        self.terminal == Terminal::Active
    }

    pub fn n_approved(&self) -> usize {
        self.approved.len()
    }

    /// Courses failed at least once.
    pub fn ever_failed(&self) -> CourseSet {
        self.fail_count.iter().enumerate().filter(|(_, &c)| c > 0).map(|(i, _)| i).collect()
    }
}

fn clamped_normal(rng: &mut rand_chacha::ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    let x = if sd > 0.0 { Normal::new(mean, sd).expect("validated sd").sample(rng) } else { mean };
    x.clamp(0.0, 1.0)
}

/// Fresh agent: nothing taken, latent states drawn around the archetype's
/// means and clamped to `[0, 1]`.
pub fn init_agent<R: Real>(
    archetype_index: usize,
    archetype: &Archetype<R>,
    agent_id: u32,
    n_courses: usize,
    stream: &AgentStream,
) -> AgentState<R> {
    let mut rng = stream.generator(0, Phase::Init);
    let f = |x: R| x.to_f64().unwrap();
    let stress = clamped_normal(&mut rng, f(archetype.stress0_mean), f(archetype.stress0_sd));
    let belonging = clamped_normal(&mut rng, f(archetype.belonging0_mean), f(archetype.belonging0_sd));
    AgentState {
        agent_id,
        archetype: archetype_index,
        group: archetype.group,
        pass_logit_shift: archetype.pass_logit_shift,
        hazard_sensitivity: archetype.hazard_sensitivity,
        max_load: archetype.max_load,
        approved: CourseSet::EMPTY,
        regular_pending: CourseSet::EMPTY,
        fail_count: vec![0; n_courses],
        stress: R::lit(stress),
        belonging: R::lit(belonging),
        semester: 0,
        terminal: Terminal::Active,
    }
}

/// Deterministic cohort: composition by largest remainder, agents laid out
/// in archetype-table order with ids `0..n`.
pub fn sample_cohort<R: Real>(
    table: &ArchetypeTable<R>,
    n_students: usize,
    n_courses: usize,
    master_seed: u64,
    replication: u32,
) -> Result<Vec<AgentState<R>>, PopulationError> {
    table.validate()?;
    if n_students == 0 {
        return Err(PopulationError::EmptyCohort);
    }
    let mut agents = Vec::with_capacity(n_students);
    for (k, count) in table.composition(n_students).into_iter().enumerate() {
        for _ in 0..count {
            let id = agents.len() as u32;
            let stream = AgentStream::new(master_seed, replication, id);
            agents.push(init_agent(k, table.get(k), id, n_courses, &stream));
        }
    }
    Ok(agents)
}
