//! Structural friction indicators for a set of approved courses.
//!
//! All functions are pure in `(graph, approved)`. Only finally approved
//! courses count; regular-pending courses are invisible here.

use thiserror::Error;

use crate::course_set::{CourseSet, MAX_COURSES};
use crate::graph::CurriculumGraph;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("approved set references course index {0} outside the curriculum")]
    UnknownCourse(usize),
    #[error("unknown course id {0:?}")]
    UnknownCourseId(String),
}

/// The seven indicators evaluated at one agent-semester.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuralSnapshot<S> {
    pub backbone_completion: S,
    pub blocked_credits: u32,
    pub distance_to_graduation: S,
    pub bottleneck_approval_ratio: S,
    pub prerequisites_met_ratio: S,
    pub mean_in_degree_approved: S,
    pub mean_out_degree_approved: S,
}

fn check(graph: &CurriculumGraph, approved: CourseSet) -> Result<(), FeatureError> {
    match approved.difference(graph.all_courses()).iter().next() {
        Some(i) => Err(FeatureError::UnknownCourse(i)),
        None => Ok(()),
    }
}

/// Resolves course ids into a set, rejecting unknown ids.
pub fn approved_from_ids<'a, I>(graph: &CurriculumGraph, ids: I) -> Result<CourseSet, FeatureError>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut set = CourseSet::EMPTY;
    for id in ids {
        set.insert(graph.index_of(id).ok_or_else(|| FeatureError::UnknownCourseId(id.to_string()))?);
    }
    Ok(set)
}

pub fn compute_snapshot<S: Scalar>(
    graph: &CurriculumGraph,
    approved: CourseSet,
) -> Result<StructuralSnapshot<S>, FeatureError> {
    check(graph, approved)?;
    Ok(snapshot_unchecked(graph, approved))
}

pub(crate) fn snapshot_unchecked<S: Scalar>(graph: &CurriculumGraph, approved: CourseSet) -> StructuralSnapshot<S> {
    let n_approved = approved.len() as u64;
    let backbone = graph.backbone();
    let bottleneck = graph.bottleneck();
    let satisfied_edges = approved.iter().map(|u| graph.out_degree(u) as u64).sum::<u64>();
    let in_sum = approved.iter().map(|u| graph.in_degree(u) as u64).sum::<u64>();
    StructuralSnapshot {
        backbone_completion: S::ratio(approved.intersection(backbone).len() as u64, backbone.len() as u64),
        blocked_credits: blocked_unchecked(graph, approved),
        distance_to_graduation: distance_unchecked(graph, approved),
        bottleneck_approval_ratio: S::ratio(approved.intersection(bottleneck).len() as u64, bottleneck.len() as u64),
        prerequisites_met_ratio: S::ratio(satisfied_edges, graph.n_edges() as u64),
        mean_in_degree_approved: S::ratio(in_sum, n_approved),
        mean_out_degree_approved: S::ratio(satisfied_edges, n_approved),
    }
}

/// Credits of unapproved courses with at least one unapproved prerequisite.
pub fn blocked_credits(graph: &CurriculumGraph, approved: CourseSet) -> Result<u32, FeatureError> {
    check(graph, approved)?;
    Ok(blocked_unchecked(graph, approved))
}

pub(crate) fn blocked_unchecked(graph: &CurriculumGraph, approved: CourseSet) -> u32 {
    graph
        .all_courses()
        .difference(approved)
        .iter()
        .filter(|&c| !graph.prerequisites_within(c, approved))
        .map(|c| graph.course(c).credits)
        .sum()
}

/// Fewest unapproved courses on any prerequisite chain to graduation that
/// starts at a course whose prerequisites are all approved.
pub fn remaining_chain_length(graph: &CurriculumGraph, approved: CourseSet) -> Result<u32, FeatureError> {
    check(graph, approved)?;
    Ok(chain_unchecked(graph, approved))
}

fn chain_unchecked(graph: &CurriculumGraph, approved: CourseSet) -> u32 {
    let mut best = [0u32; MAX_COURSES];
    let mut result = u32::MAX;
    for &v in graph.topo_order().iter().rev() {
        let own = u32::from(!approved.contains(v));
        let tail = graph.successors(v).iter().map(|w| best[w]).min().unwrap_or(0);
        best[v] = own + tail;
        if graph.prerequisites_within(v, approved) {
            result = result.min(best[v]);
        }
    }
    result
}

/// Remaining chain length normalised by its value for the empty set.
pub fn distance_to_graduation<S: Scalar>(graph: &CurriculumGraph, approved: CourseSet) -> Result<S, FeatureError> {
    check(graph, approved)?;
    Ok(distance_unchecked(graph, approved))
}

fn distance_unchecked<S: Scalar>(graph: &CurriculumGraph, approved: CourseSet) -> S {
    let baseline = chain_unchecked(graph, CourseSet::EMPTY);
    S::ratio(chain_unchecked(graph, approved) as u64, baseline as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::fixtures::{chain, toy};
    use num_rational::Ratio;

    type Q = Ratio<i64>;

    fn set(g: &CurriculumGraph, ids: &[&str]) -> CourseSet {
        approved_from_ids(g, ids.iter().copied()).unwrap()
    }

    #[test]
    fn toy_empty_set() {
        let g = toy();
        let s: StructuralSnapshot<Q> = compute_snapshot(&g, CourseSet::EMPTY).unwrap();
        assert_eq!(s.backbone_completion, Q::from(0));
        assert_eq!(s.blocked_credits, 13);
        assert_eq!(s.distance_to_graduation, Q::from(1));
        assert_eq!(s.bottleneck_approval_ratio, Q::from(0));
        assert_eq!(s.prerequisites_met_ratio, Q::from(0));
        assert_eq!(s.mean_in_degree_approved, Q::from(0));
        assert_eq!(s.mean_out_degree_approved, Q::from(0));
    }

    #[test]
    fn toy_only_a_approved() {
        let g = toy();
        let s: StructuralSnapshot<Q> = compute_snapshot(&g, set(&g, &["A"])).unwrap();
        assert_eq!(s.backbone_completion, Q::new(1, 3));
        assert_eq!(s.blocked_credits, 5);
        assert_eq!(s.distance_to_graduation, Q::new(2, 3));
        assert_eq!(s.prerequisites_met_ratio, Q::new(1, 2));
        assert_eq!(s.mean_in_degree_approved, Q::from(0));
        assert_eq!(s.mean_out_degree_approved, Q::from(2));
    }

    #[test]
    fn toy_everything_approved() {
        let g =
            toy().with_bottleneck_rule(crate::graph::BottleneckRule { min_in_degree: 2, betweenness_quantile: 0.0 });
        let s: StructuralSnapshot<f64> = compute_snapshot(&g, g.all_courses()).unwrap();
        assert_eq!(
            s,
            StructuralSnapshot {
                backbone_completion: 1.0,
                blocked_credits: 0,
                distance_to_graduation: 0.0,
                bottleneck_approval_ratio: 1.0,
                prerequisites_met_ratio: 1.0,
                mean_in_degree_approved: 1.0,
                mean_out_degree_approved: 1.0,
            }
        );
    }

    #[test]
    fn blocked_credit_examples() {
        let g = toy();
        assert_eq!(blocked_credits(&g, set(&g, &["A", "B", "C"])).unwrap(), 0);
        assert_eq!(blocked_credits(&g, set(&g, &["B"])).unwrap(), 9);
        assert_eq!(blocked_credits(&g, g.all_courses()).unwrap(), 0);
    }

    #[test]
    fn distance_examples() {
        let g = toy();
        assert_eq!(distance_to_graduation::<Q>(&g, CourseSet::EMPTY).unwrap(), Q::from(1));
        assert_eq!(distance_to_graduation::<Q>(&g, set(&g, &["A", "B", "C"])).unwrap(), Q::new(1, 3));
        assert_eq!(distance_to_graduation::<Q>(&g, g.all_courses()).unwrap(), Q::from(0));
        let c = chain(&["A", "B", "C"]);
        assert_eq!(distance_to_graduation::<Q>(&c, set(&c, &["A"])).unwrap(), Q::new(2, 3));
    }

    #[test]
    fn unknown_courses_are_rejected() {
        let g = toy();
        assert_eq!(blocked_credits(&g, CourseSet::single(7)), Err(FeatureError::UnknownCourse(7)));
        assert!(approved_from_ids(&g, ["A", "Z"]).is_err());
    }

    #[test]
    fn snapshot_matches_individual_operations() {
        let g = toy();
        for bits in 0..16u128 {
            let s = CourseSet::from_bits(bits);
            let snap: StructuralSnapshot<Q> = compute_snapshot(&g, s).unwrap();
            assert_eq!(snap.blocked_credits, blocked_credits(&g, s).unwrap());
            assert_eq!(snap.distance_to_graduation, distance_to_graduation::<Q>(&g, s).unwrap());
            assert_eq!(snap, compute_snapshot(&g, s).unwrap());
        }
    }
}
