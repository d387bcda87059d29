//! Fixed-width bit set over course indices.

use std::fmt;

/// Maximum number of courses a curriculum may hold.
pub const MAX_COURSES: usize = 128;

/// Set of course indices `0..MAX_COURSES`, stored as a single `u128`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CourseSet(u128);

impl CourseSet {
    pub const EMPTY: CourseSet = CourseSet(0);

    pub fn from_bits(bits: u128) -> Self {
        CourseSet(bits)
    }

    pub fn bits(self) -> u128 {
        self.0
    }

    /// The first `n` indices.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_COURSES);
        if n == MAX_COURSES {
            CourseSet(u128::MAX)
        } else {
            CourseSet((1u128 << n) - 1)
        }
    }

    pub fn single(i: usize) -> Self {
        CourseSet(1u128 << i)
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn insert(&mut self, i: usize) {
        self.0 |= 1u128 << i;
    }

    pub fn remove(&mut self, i: usize) {
        self.0 &= !(1u128 << i);
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: Self) -> Self {
        CourseSet(self.0 | other.0)
    }

    pub fn intersection(self, other: Self) -> Self {
        CourseSet(self.0 & other.0)
    }

    pub fn difference(self, other: Self) -> Self {
        CourseSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> Iter {
        Iter(self.0)
    }
}

impl FromIterator<usize> for CourseSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        let mut s = CourseSet::EMPTY;
        for i in iter {
            s.insert(i);
        }
        s
    }
}

impl fmt::Debug for CourseSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Ascending iterator over the members of a [`CourseSet`].
pub struct Iter(u128);

impl Iterator for Iter {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for Iter {}
