//! Curriculum prerequisite graph.
//!
//! Courses are nodes, prerequisite relations are directed edges
//! `prereq -> course`. A virtual graduation sink ([`GRAD_NODE`]) is fed by
//! every course with no dependents; it never counts as a course.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::course_set::{CourseSet, MAX_COURSES};

pub const GRAD_NODE: &str = "GRAD";
pub const DEFAULT_PLAN_LENGTH: u32 = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("curriculum has no courses")]
    Empty,
    #[error("curriculum has {0} courses, at most {MAX_COURSES} are supported")]
    TooManyCourses(usize),
    #[error("duplicate course id {0:?}")]
    DuplicateCourse(String),
    #[error("unknown course id {0:?}")]
    UnknownCourse(String),
    #[error("course {course:?} has semester {semester} outside 1..={plan_length}")]
    SemesterOutOfRange { course: String, semester: u32, plan_length: u32 },
    #[error("course {0:?} must have at least one credit")]
    ZeroCredits(String),
    #[error("prerequisite cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("duplicate edge {0:?} -> {1:?}")]
    DuplicateEdge(String, String),
    #[error("edge {0:?} -> {1:?} does not exist")]
    MissingEdge(String, String),
    #[error("{file}: {message}")]
    Parse { file: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Course {
    pub course_id: String,
    pub name: String,
    pub nominal_semester: u32,
    pub credits: u32,
    pub backbone: bool,
}

/// Courses selected as structurally central: high in-degree or top betweenness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BottleneckRule {
    pub min_in_degree: usize,
    pub betweenness_quantile: f64,
}

impl Default for BottleneckRule {
    fn default() -> Self {
        BottleneckRule { min_in_degree: 4, betweenness_quantile: 0.1 }
    }
}

/// Status of one course in a student's record, as seen by enrolment rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CourseStatus {
    Untaken,
    /// Coursework passed, final exam outstanding.
    RegularPending,
    Approved,
    /// Most recent attempt failed; otherwise equivalent to untaken.
    FailedLast,
}

/// Validated, immutable curriculum DAG.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumGraph {
    courses: Vec<Course>,
    index: BTreeMap<String, usize>,
    edges: Vec<(usize, usize)>,
    prereqs: Vec<CourseSet>,
    succs: Vec<CourseSet>,
    plan_length: u32,
    total_credits: u32,
    backbone: CourseSet,
    bottleneck: CourseSet,
    bottleneck_rule: BottleneckRule,
    modular: CourseSet,
    topo_order: Vec<usize>,
}

impl CurriculumGraph {
    /// Builds and validates a graph from courses and `(prereq_id, course_id)` pairs.
    pub fn new(courses: Vec<Course>, edges: &[(String, String)], plan_length: u32) -> Result<Self, GraphError> {
        if courses.is_empty() {
            return Err(GraphError::Empty);
        }
        if courses.len() > MAX_COURSES {
            return Err(GraphError::TooManyCourses(courses.len()));
        }
        let mut index = BTreeMap::new();
        for (i, c) in courses.iter().enumerate() {
            if index.insert(c.course_id.clone(), i).is_some() {
                return Err(GraphError::DuplicateCourse(c.course_id.clone()));
            }
            if c.nominal_semester < 1 || c.nominal_semester > plan_length {
                return Err(GraphError::SemesterOutOfRange {
                    course: c.course_id.clone(),
                    semester: c.nominal_semester,
                    plan_length,
                });
            }
            if c.credits == 0 {
                return Err(GraphError::ZeroCredits(c.course_id.clone()));
            }
        }
        let mut idx_edges = Vec::with_capacity(edges.len());
        let mut seen = BTreeSet::new();
        for (u, v) in edges {
            let ui = *index.get(u).ok_or_else(|| GraphError::UnknownCourse(u.clone()))?;
            let vi = *index.get(v).ok_or_else(|| GraphError::UnknownCourse(v.clone()))?;
            if !seen.insert((ui, vi)) {
                return Err(GraphError::DuplicateEdge(u.clone(), v.clone()));
            }
            idx_edges.push((ui, vi));
        }
        Self::assemble(courses, index, idx_edges, plan_length, BottleneckRule::default(), CourseSet::EMPTY)
    }

    fn assemble(
        courses: Vec<Course>,
        index: BTreeMap<String, usize>,
        mut edges: Vec<(usize, usize)>,
        plan_length: u32,
        bottleneck_rule: BottleneckRule,
        modular: CourseSet,
    ) -> Result<Self, GraphError> {
        let n = courses.len();
        edges.sort_unstable();
        let mut prereqs = vec![CourseSet::EMPTY; n];
        let mut succs = vec![CourseSet::EMPTY; n];
        for &(u, v) in &edges {
            prereqs[v].insert(u);
            succs[u].insert(v);
        }
        let topo_order = topological_order(&prereqs, &succs)
            .map_err(|cycle| GraphError::Cycle(cycle.into_iter().map(|i| courses[i].course_id.clone()).collect()))?;
        let total_credits = courses.iter().map(|c| c.credits).sum();
        let backbone = courses.iter().enumerate().filter(|(_, c)| c.backbone).map(|(i, _)| i).collect();
        let mut graph = CurriculumGraph {
            courses,
            index,
            edges,
            prereqs,
            succs,
            plan_length,
            total_credits,
            backbone,
            bottleneck: CourseSet::EMPTY,
            bottleneck_rule,
            modular,
            topo_order,
        };
        graph.bottleneck = graph.bottleneck_mask(bottleneck_rule);
        Ok(graph)
    }

    /// Parses `courses.csv` and `edges.csv` content into a validated graph.
    pub fn load(courses_csv: &str, edges_csv: &str, plan_length: u32) -> Result<Self, GraphError> {
        let courses = parse_courses(courses_csv)?;
        let edges = parse_edges(edges_csv)?;
        Self::new(courses, &edges, plan_length)
    }

    pub fn load_files(courses: &Path, edges: &Path, plan_length: u32) -> Result<Self, GraphError> {
        let c = read_text(courses)?;
        let e = read_text(edges)?;
        Self::load(&c, &e, plan_length)
    }

    /// Recomputes the bottleneck set under a different rule.
    pub fn with_bottleneck_rule(mut self, rule: BottleneckRule) -> Self {
        self.bottleneck_rule = rule;
        self.bottleneck = self.bottleneck_mask(rule);
        self
    }

    pub fn n_courses(&self) -> usize {
        self.courses.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn courses(&self) -> &[Course] {
        &self.courses
    }

    pub fn course(&self, i: usize) -> &Course {
        &self.courses[i]
    }

    pub fn index_of(&self, course_id: &str) -> Option<usize> {
        self.index.get(course_id).copied()
    }

    pub fn require_index(&self, course_id: &str) -> Result<usize, GraphError> {
        self.index_of(course_id).ok_or_else(|| GraphError::UnknownCourse(course_id.to_string()))
    }

    /// Edges as `(prereq, course)` index pairs, sorted.
    pub fn edge_indices(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.edges.iter().map(|&(u, v)| (self.courses[u].course_id.as_str(), self.courses[v].course_id.as_str()))
    }

    pub fn prereqs(&self, i: usize) -> CourseSet {
        self.prereqs[i]
    }

    pub fn successors(&self, i: usize) -> CourseSet {
        self.succs[i]
    }

    pub fn in_degree(&self, i: usize) -> usize {
        self.prereqs[i].len()
    }

    /// Out-degree among courses; the graduation edge is not counted.
    pub fn out_degree(&self, i: usize) -> usize {
        self.succs[i].len()
    }

    pub fn plan_length(&self) -> u32 {
        self.plan_length
    }

    pub fn total_credits(&self) -> u32 {
        self.total_credits
    }

    pub fn all_courses(&self) -> CourseSet {
        CourseSet::full(self.courses.len())
    }

    pub fn backbone(&self) -> CourseSet {
        self.backbone
    }

    pub fn bottleneck(&self) -> CourseSet {
        self.bottleneck
    }

    pub fn bottleneck_rule(&self) -> BottleneckRule {
        self.bottleneck_rule
    }

    /// Courses flagged for modular assessment by a redesign.
    pub fn modular(&self) -> CourseSet {
        self.modular
    }

    /// Courses with an edge into the graduation node.
    pub fn grad_predecessors(&self) -> CourseSet {
        (0..self.courses.len()).filter(|&i| self.succs[i].is_empty()).collect()
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn ids(&self, set: CourseSet) -> Vec<&str> {
        set.iter().map(|i| self.courses[i].course_id.as_str()).collect()
    }

    pub fn set_of<'a, I: IntoIterator<Item = &'a str>>(&self, ids: I) -> Result<CourseSet, GraphError> {
        let mut s = CourseSet::EMPTY;
        for id in ids {
            s.insert(self.require_index(id)?);
        }
        Ok(s)
    }

    /// Every prerequisite of course `i` is inside `passed`.
    #[inline]
    pub fn prerequisites_within(&self, i: usize, passed: CourseSet) -> bool {
        self.prereqs[i].is_subset(passed)
    }

    /// Enrolment eligibility: each prerequisite is either approved or
    /// regular with the final exam pending.
    pub fn satisfied_for_enrolment(&self, status: &[CourseStatus], course_id: &str) -> Result<bool, GraphError> {
        let c = self.require_index(course_id)?;
        Ok(self.prereqs[c]
            .iter()
            .all(|p| matches!(status.get(p), Some(CourseStatus::RegularPending | CourseStatus::Approved))))
    }

    /// Returns a new graph with the redesign applied; `self` is untouched.
    pub fn apply_redesign(&self, spec: &RedesignSpec) -> Result<CurriculumGraph, GraphError> {
        let mut edges: BTreeSet<(usize, usize)> = self.edges.iter().copied().collect();
        for (u, v) in &spec.edges_removed {
            let e = (self.require_index(u)?, self.require_index(v)?);
            if !edges.remove(&e) {
                return Err(GraphError::MissingEdge(u.clone(), v.clone()));
            }
        }
        for (u, v) in &spec.edges_added {
            let e = (self.require_index(u)?, self.require_index(v)?);
            if !edges.insert(e) {
                return Err(GraphError::DuplicateEdge(u.clone(), v.clone()));
            }
        }
        let mut courses = self.courses.clone();
        for (id, &sem) in &spec.semester_reassignments {
            let i = self.require_index(id)?;
            if sem < 1 || sem > self.plan_length {
                return Err(GraphError::SemesterOutOfRange {
                    course: id.clone(),
                    semester: sem,
                    plan_length: self.plan_length,
                });
            }
            courses[i].nominal_semester = sem;
        }
        let modular = self.modular.union(self.set_of(spec.modular_assessment_flags.iter().map(String::as_str))?);
        Self::assemble(
            courses,
            self.index.clone(),
            edges.into_iter().collect(),
            self.plan_length,
            self.bottleneck_rule,
            modular,
        )
    }

    /// Directed node betweenness over course nodes (graduation node excluded),
    /// counting each ordered pair's shortest paths; unnormalised.
    pub fn betweenness(&self) -> Vec<f64> {
        let n = self.courses.len();
        let mut centrality = vec![0.0; n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![-1i64; n];
        let mut delta = vec![0.0f64; n];
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut stack = Vec::with_capacity(n);
        let mut queue = VecDeque::with_capacity(n);
        for s in 0..n {
            sigma.iter_mut().for_each(|x| *x = 0.0);
            dist.iter_mut().for_each(|x| *x = -1);
            delta.iter_mut().for_each(|x| *x = 0.0);
            preds.iter_mut().for_each(Vec::clear);
            sigma[s] = 1.0;
            dist[s] = 0;
            queue.push_back(s);
            while let Some(v) = queue.pop_front() {
                stack.push(v);
                for w in self.succs[v].iter() {
                    if dist[w] < 0 {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                    if dist[w] == dist[v] + 1 {
                        sigma[w] += sigma[v];
                        preds[w].push(v);
                    }
                }
            }
            while let Some(w) = stack.pop() {
                for &v in &preds[w] {
                    delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
                }
                if w != s {
                    centrality[w] += delta[w];
                }
            }
        }
        centrality
    }

    /// Bottleneck courses by id, sorted.
    pub fn bottleneck_set(&self, min_in_degree: usize, betweenness_quantile: f64) -> BTreeSet<String> {
        self.ids(self.bottleneck_mask(BottleneckRule { min_in_degree, betweenness_quantile }))
            .into_iter()
            .map(str::to_string)
            .collect()
    }

    fn bottleneck_mask(&self, rule: BottleneckRule) -> CourseSet {
        let n = self.courses.len();
        let mut set: CourseSet = (0..n).filter(|&i| self.in_degree(i) >= rule.min_in_degree).collect();
        let q = rule.betweenness_quantile.clamp(0.0, 1.0);
        let k = (q * n as f64 + 1e-9).floor() as usize;
        if k > 0 {
            let bc = self.betweenness();
            let mut ranked: Vec<usize> = (0..n).filter(|&i| bc[i] > 0.0).collect();
            ranked.sort_by(|&a, &b| {
                bc[b].total_cmp(&bc[a]).then_with(|| self.courses[a].course_id.cmp(&self.courses[b].course_id))
            });
            for &i in ranked.iter().take(k) {
                set.insert(i);
            }
        }
        set
    }
}

/// Kahn's algorithm, smallest index first. On failure returns one cycle
/// as a closed node sequence (first node repeated at the end).
fn topological_order(prereqs: &[CourseSet], succs: &[CourseSet]) -> Result<Vec<usize>, Vec<usize>> {
    let n = prereqs.len();
    let mut indeg: Vec<usize> = prereqs.iter().map(|p| p.len()).collect();
    let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop_first() {
        order.push(v);
        for w in succs[v].iter() {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.insert(w);
            }
        }
    }
    if order.len() == n {
        return Ok(order);
    }
    // Every leftover node keeps a leftover prerequisite; walk backwards until a repeat.
    let leftover: CourseSet = (0..n).filter(|&i| indeg[i] > 0).collect();
    let mut walk = vec![leftover.iter().next().unwrap()];
    let mut pos = BTreeMap::new();
    loop {
        let cur = *walk.last().unwrap();
        if let Some(&start) = pos.get(&cur) {
            let mut cycle: Vec<usize> = walk[start..].to_vec();
            cycle.reverse();
            return Err(cycle);
        }
        pos.insert(cur, walk.len() - 1);
        let prev = prereqs[cur].intersection(leftover).iter().next().unwrap();
        walk.push(prev);
    }
}

/// Prerequisite edits defining a curriculum redesign.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RedesignSpec {
    pub edges_removed: Vec<(String, String)>,
    pub edges_added: Vec<(String, String)>,
    pub semester_reassignments: BTreeMap<String, u32>,
    pub modular_assessment_flags: BTreeSet<String>,
}

impl RedesignSpec {
    /// Parses `redesign.csv` (`op,prereq_id,course_id`, op in add/remove/modular)
    /// and `reassign.csv` (`course_id,new_semester`).
    pub fn load(redesign_csv: &str, reassign_csv: &str) -> Result<Self, GraphError> {
        #[derive(Deserialize)]
        struct Row {
            op: String,
            prereq_id: String,
            course_id: String,
        }
        #[derive(Deserialize)]
        struct Reassign {
            course_id: String,
            new_semester: u32,
        }
        let mut spec = RedesignSpec::default();
        for row in read_rows::<Row>(redesign_csv, "redesign")? {
            match row.op.as_str() {
                "add" => spec.edges_added.push((row.prereq_id, row.course_id)),
                "remove" => spec.edges_removed.push((row.prereq_id, row.course_id)),
                "modular" => {
                    spec.modular_assessment_flags.insert(row.course_id);
                }
                other => {
                    return Err(GraphError::Parse { file: "redesign".into(), message: format!("unknown op {other:?}") })
                }
            }
        }
        for row in read_rows::<Reassign>(reassign_csv, "reassign")? {
            spec.semester_reassignments.insert(row.course_id, row.new_semester);
        }
        Ok(spec)
    }

    pub fn load_files(redesign: &Path, reassign: &Path) -> Result<Self, GraphError> {
        Self::load(&read_text(redesign)?, &read_text(reassign)?)
    }

    pub fn is_empty(&self) -> bool {
        self.edges_removed.is_empty()
            && self.edges_added.is_empty()
            && self.semester_reassignments.is_empty()
            && self.modular_assessment_flags.is_empty()
    }
}

fn read_text(path: &Path) -> Result<String, GraphError> {
    std::fs::read_to_string(path)
        .map_err(|e| GraphError::Parse { file: path.display().to_string(), message: e.to_string() })
}

fn read_rows<T: serde::de::DeserializeOwned>(text: &str, file: &str) -> Result<Vec<T>, GraphError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(text.as_bytes());
    rdr.deserialize()
        .map(|r| r.map_err(|e| GraphError::Parse { file: file.to_string(), message: e.to_string() }))
        .collect()
}

fn parse_courses(text: &str) -> Result<Vec<Course>, GraphError> {
    #[derive(Deserialize)]
    struct Row {
        course_id: String,
        name: String,
        semester: u32,
        credits: u32,
        backbone: String,
    }
    read_rows::<Row>(text, "courses")?
        .into_iter()
        .map(|r| {
            let backbone = match r.backbone.to_ascii_lowercase().as_str() {
                "1" | "true" | "yes" => true,
                "0" | "false" | "no" | "" => false,
                other => {
                    return Err(GraphError::Parse {
                        file: "courses".into(),
                        message: format!("bad backbone flag {other:?} for {}", r.course_id),
                    })
                }
            };
            Ok(Course {
                course_id: r.course_id,
                name: r.name,
                nominal_semester: r.semester,
                credits: r.credits,
                backbone,
            })
        })
        .collect()
}

fn parse_edges(text: &str) -> Result<Vec<(String, String)>, GraphError> {
    #[derive(Deserialize)]
    struct Row {
        prereq_id: String,
        course_id: String,
    }
    Ok(read_rows::<Row>(text, "edges")?.into_iter().map(|r| (r.prereq_id, r.course_id)).collect())
}
