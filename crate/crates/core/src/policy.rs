//! The 2x2x2 policy design and the numeric modifiers each cell induces.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::config::KeyValues;
use crate::graph::CurriculumGraph;
use crate::population::Group;
use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("malformed scenario id {0:?}, expected A{{0|1}}B{{0|1}}C{{0|1}}")]
    MalformedId(String),
    #[error("scenario {0} needs the redesigned curriculum but none was supplied")]
    MissingRedesign(PolicyScenario),
    #[error("policy parameter {key}: {message}")]
    InvalidParam { key: String, message: String },
    #[error("B1 target course {0:?} not in curriculum")]
    UnknownTarget(String),
}

/// One cell of the factorial design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PolicyScenario {
    /// Curriculum redesign.
    pub a: bool,
    /// Teaching and academic support.
    pub b: bool,
    /// Psychosocial and financial support.
    pub c: bool,
}

impl PolicyScenario {
    pub const BASELINE: PolicyScenario = PolicyScenario { a: false, b: false, c: false };

    pub fn new(a: bool, b: bool, c: bool) -> Self {
        PolicyScenario { a, b, c }
    }

    /// Position in the canonical order: C varies fastest, then B, then A.
    pub fn index(self) -> usize {
        (self.a as usize) << 2 | (self.b as usize) << 1 | self.c as usize
    }

    pub fn from_index(i: usize) -> Self {
        PolicyScenario { a: i & 4 != 0, b: i & 2 != 0, c: i & 1 != 0 }
    }

    pub fn id(self) -> String {
        self.to_string()
    }

    pub fn level(self, factor: Factor) -> bool {
        match factor {
            Factor::A => self.a,
            Factor::B => self.b,
            Factor::C => self.c,
        }
    }

    pub fn with(self, factor: Factor, on: bool) -> Self {
        let mut s = self;
        match factor {
            Factor::A => s.a = on,
            Factor::B => s.b = on,
            Factor::C => s.c = on,
        }
        s
    }
}

impl fmt::Display for PolicyScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "A{}B{}C{}", self.a as u8, self.b as u8, self.c as u8)
    }
}

impl FromStr for PolicyScenario {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_scenario_id(s)
    }
}

pub fn parse_scenario_id(text: &str) -> Result<PolicyScenario, PolicyError> {
    let b = text.as_bytes();
    let err = || PolicyError::MalformedId(text.to_string());
    if b.len() != 6 || b[0] != b'A' || b[2] != b'B' || b[4] != b'C' {
        return Err(err());
    }
    let bit = |c: u8| match c {
        b'0' => Ok(false),
        b'1' => Ok(true),
        _ => Err(err()),
    };
    Ok(PolicyScenario { a: bit(b[1])?, b: bit(b[3])?, c: bit(b[5])? })
}

/// All eight scenarios, `A0B0C0` first and `A1B1C1` last.
pub fn enumerate_factorial() -> Vec<PolicyScenario> {
    (0..8).map(PolicyScenario::from_index).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    A,
    B,
    C,
}

impl Factor {
    pub const ALL: [Factor; 3] = [Factor::A, Factor::B, Factor::C];

    pub fn as_str(self) -> &'static str {
        match self {
            Factor::A => "A",
            Factor::B => "B",
            Factor::C => "C",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum B1Target {
    Backbone,
    List(Vec<String>),
}

/// Policy magnitudes. Every field is a calibration input, not an observed value.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams<R> {
    pub b1_pass_logit_boost: R,
    pub b1_conversion_multiplier: R,
    /// Multiplier on instructional friction under B1 (1 = unchanged).
    pub b1_friction_scale: R,
    pub b1_stress_relief: R,
    pub b1_belonging_gain: R,
    pub c1_stress_relief: R,
    pub c1_belonging_gain: R,
    pub c1_vulnerable_multiplier: R,
    pub b1_target: B1Target,
}

impl<R: Real> Default for PolicyParams<R> {
    fn default() -> Self {
        PolicyParams {
            b1_pass_logit_boost: R::lit(0.8),
            b1_conversion_multiplier: R::lit(1.5),
            b1_friction_scale: R::lit(0.5),
            b1_stress_relief: R::lit(0.04),
            b1_belonging_gain: R::lit(0.03),
            c1_stress_relief: R::lit(0.08),
            c1_belonging_gain: R::lit(0.06),
            c1_vulnerable_multiplier: R::lit(2.0),
            b1_target: B1Target::Backbone,
        }
    }
}

impl<R: Real> PolicyParams<R> {
    pub const KEYS: [&'static str; 9] = [
        "b1_pass_logit_boost",
        "b1_conversion_multiplier",
        "b1_friction_scale",
        "b1_stress_relief",
        "b1_belonging_gain",
        "c1_stress_relief",
        "c1_belonging_gain",
        "c1_vulnerable_multiplier",
        "b1_target",
    ];

    /// Reads a `key,value` file; missing keys keep their defaults.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self, PolicyError> {
        let mut p = Self::default();
        for (key, value) in kv.iter() {
            if key == "b1_target" {
                p.b1_target = parse_target(value)?;
                continue;
            }
            let x: f64 = value.parse().map_err(|_| PolicyError::InvalidParam {
                key: key.clone(),
                message: format!("not a number: {value:?}"),
            })?;
            if !p.set(key, x) {
                return Err(PolicyError::InvalidParam { key: key.clone(), message: "unknown key".into() });
            }
        }
        p.validate()?;
        Ok(p)
    }

    /// Sets a numeric parameter by name; returns `false` for unknown names.
    pub fn set(&mut self, key: &str, value: f64) -> bool {
        let v = R::lit(value);
        let slot = match key {
            "b1_pass_logit_boost" => &mut self.b1_pass_logit_boost,
            "b1_conversion_multiplier" => &mut self.b1_conversion_multiplier,
            "b1_friction_scale" => &mut self.b1_friction_scale,
            "b1_stress_relief" => &mut self.b1_stress_relief,
            "b1_belonging_gain" => &mut self.b1_belonging_gain,
            "c1_stress_relief" => &mut self.c1_stress_relief,
            "c1_belonging_gain" => &mut self.c1_belonging_gain,
            "c1_vulnerable_multiplier" => &mut self.c1_vulnerable_multiplier,
            _ => return false,
        };
        *slot = v;
        true
    }

    pub fn get(&self, key: &str) -> Option<R> {
        Some(match key {
            "b1_pass_logit_boost" => self.b1_pass_logit_boost,
            "b1_conversion_multiplier" => self.b1_conversion_multiplier,
            "b1_friction_scale" => self.b1_friction_scale,
            "b1_stress_relief" => self.b1_stress_relief,
            "b1_belonging_gain" => self.b1_belonging_gain,
            "c1_stress_relief" => self.c1_stress_relief,
            "c1_belonging_gain" => self.c1_belonging_gain,
            "c1_vulnerable_multiplier" => self.c1_vulnerable_multiplier,
            _ => return None,
        })
    }

    /// Switching a factor on must never make any modifier less favourable.
    pub fn validate(&self) -> Result<(), PolicyError> {
        let bad = |key: &str, message: &str| PolicyError::InvalidParam { key: key.into(), message: message.into() };
        let zero = R::zero();
        let one = R::one();
        // Written so that NaN fails every check.
        let at_least = |x: R, lo: R| x >= lo;
        if !at_least(self.b1_pass_logit_boost, zero) {
            return Err(bad("b1_pass_logit_boost", "must be >= 0"));
        }
        if !at_least(self.b1_conversion_multiplier, one) {
            return Err(bad("b1_conversion_multiplier", "must be >= 1"));
        }
        if !at_least(self.b1_friction_scale, zero) || self.b1_friction_scale > one {
            return Err(bad("b1_friction_scale", "must lie in [0,1]"));
        }
        for key in ["b1_stress_relief", "b1_belonging_gain", "c1_stress_relief", "c1_belonging_gain"] {
            if !at_least(self.get(key).unwrap(), zero) {
                return Err(bad(key, "must be >= 0"));
            }
        }
        if !at_least(self.c1_vulnerable_multiplier, zero) {
            return Err(bad("c1_vulnerable_multiplier", "must be >= 0"));
        }
        Ok(())
    }

    /// Current values of every numeric parameter plus the target rule.
    pub fn to_key_values(&self) -> BTreeMap<String, String> {
        let mut out: BTreeMap<String, String> =
            Self::KEYS[..8].iter().map(|k| (k.to_string(), self.get(k).unwrap().to_string())).collect();
        let target = match &self.b1_target {
            B1Target::Backbone => "backbone".to_string(),
            B1Target::List(ids) => format!("list:{}", ids.join(";")),
        };
        out.insert("b1_target".into(), target);
        out
    }
}

fn parse_target(value: &str) -> Result<B1Target, PolicyError> {
    if value == "backbone" {
        return Ok(B1Target::Backbone);
    }
    match value.strip_prefix("list:") {
        Some(rest) => {
            Ok(B1Target::List(rest.split([';', ' ']).filter(|s| !s.is_empty()).map(str::to_string).collect()))
        }
        None => Err(PolicyError::InvalidParam {
            key: "b1_target".into(),
            message: format!("expected backbone or list:<ids>, got {value:?}"),
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphVariant {
    Base,
    Redesigned,
}

/// Resolved modifiers for one scenario, consumed by the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEffects<R> {
    pub scenario: PolicyScenario,
    pub graph_variant: GraphVariant,
    /// Additive pass log-odds per course index.
    pub pass_logit_boost: Vec<R>,
    pub exam_conversion_multiplier: R,
    pub friction_scale: R,
    stress_relief: [R; 2],
    belonging_gain: [R; 2],
}

fn group_slot(group: Group) -> usize {
    match group {
        Group::Vulnerable => 0,
        Group::Stable => 1,
    }
}

impl<R: Real> PolicyEffects<R> {
    pub fn stress_relief(&self, group: Group) -> R {
        self.stress_relief[group_slot(group)]
    }

    pub fn belonging_gain(&self, group: Group) -> R {
        self.belonging_gain[group_slot(group)]
    }

    /// Status-quo effects over `n_courses` courses.
    pub fn neutral(n_courses: usize) -> Self {
        PolicyEffects {
            scenario: PolicyScenario::BASELINE,
            graph_variant: GraphVariant::Base,
            pass_logit_boost: vec![R::zero(); n_courses],
            exam_conversion_multiplier: R::one(),
            friction_scale: R::one(),
            stress_relief: [R::zero(); 2],
            belonging_gain: [R::zero(); 2],
        }
    }

    /// Picks the curriculum this scenario runs on.
    pub fn select_graph<'g>(
        &self,
        base: &'g CurriculumGraph,
        redesigned: Option<&'g CurriculumGraph>,
    ) -> &'g CurriculumGraph {
        match self.graph_variant {
            GraphVariant::Base => base,
            GraphVariant::Redesigned => redesigned.expect("redesigned graph checked in effects()"),
        }
    }
}

/// Maps scenario bits to modifiers. B acts on pass odds, friction and exam
/// conversion and carries a smaller latent-state channel; C acts only on
/// latent states, more strongly for vulnerable archetypes.
pub fn effects<R: Real>(
    scenario: PolicyScenario,
    params: &PolicyParams<R>,
    base: &CurriculumGraph,
    a1: Option<&CurriculumGraph>,
) -> Result<PolicyEffects<R>, PolicyError> {
    let n = base.n_courses();
    let mut fx = PolicyEffects::neutral(n);
    fx.scenario = scenario;
    if scenario.a {
        if a1.is_none() {
            return Err(PolicyError::MissingRedesign(scenario));
        }
        fx.graph_variant = GraphVariant::Redesigned;
    }
    if scenario.b {
        let targets = match &params.b1_target {
            B1Target::Backbone => base.backbone(),
            B1Target::List(ids) => {
                let mut s = crate::course_set::CourseSet::EMPTY;
                for id in ids {
                    s.insert(base.index_of(id).ok_or_else(|| PolicyError::UnknownTarget(id.clone()))?);
                }
                s
            }
        };
        for c in targets.iter() {
            fx.pass_logit_boost[c] = params.b1_pass_logit_boost;
        }
        fx.exam_conversion_multiplier = params.b1_conversion_multiplier;
        fx.friction_scale = params.b1_friction_scale;
        for slot in 0..2 {
            fx.stress_relief[slot] = fx.stress_relief[slot] + params.b1_stress_relief;
            fx.belonging_gain[slot] = fx.belonging_gain[slot] + params.b1_belonging_gain;
        }
    }
    if scenario.c {
        for group in [Group::Vulnerable, Group::Stable] {
            let m = if group == Group::Vulnerable { params.c1_vulnerable_multiplier } else { R::one() };
            let slot = group_slot(group);
            fx.stress_relief[slot] = fx.stress_relief[slot] + params.c1_stress_relief * m;
            fx.belonging_gain[slot] = fx.belonging_gain[slot] + params.c1_belonging_gain * m;
        }
    }
    Ok(fx)
}
