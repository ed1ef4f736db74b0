//! Sparse user-item ratings indexed both by user and by item.

use std::fmt;

use crate::error::{Error, Result};

/// How the values of a [`RatingsDataset`] are to be read.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FeedbackMode {
    /// Observed interactions are `1`; sampled negatives are `-1`.
    Implicit01,
    /// Stars polarized to `+1` (liked) / `-1` (disliked).
    ExplicitPm1,
    /// Raw star values, no polarity defined.
    RawStars,
}

impl FeedbackMode {
    pub fn name(self) -> &'static str {
        match self {
            FeedbackMode::Implicit01 => "implicit01",
            FeedbackMode::ExplicitPm1 => "explicit-pm1",
            FeedbackMode::RawStars => "raw-stars",
        }
    }

    pub fn has_polarity(self) -> bool {
        !matches!(self, FeedbackMode::RawStars)
    }
}

impl fmt::Display for FeedbackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeedbackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "implicit01" | "implicit" => Ok(FeedbackMode::Implicit01),
            "explicit-pm1" | "explicit" => Ok(FeedbackMode::ExplicitPm1),
            "raw-stars" | "raw" => Ok(FeedbackMode::RawStars),
            other => Err(Error::invalid(format!("unknown feedback mode `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

impl Rating {
    pub fn new(user: usize, item: usize, value: f64) -> Self {
        Rating { user, item, value }
    }
}

/// Ratings stored once in user-major order, with an item-major index into the
/// same entries. Gradients for user factors walk `L_i`, gradients for item
/// factors walk `Ra(j)`; both directions are built at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingsDataset {
    num_users: usize,
    num_items: usize,
    feedback: FeedbackMode,
    user_ptr: Vec<usize>,
    users: Vec<usize>,
    items: Vec<usize>,
    values: Vec<f64>,
    item_ptr: Vec<usize>,
    /// Entry indices (into `items`/`values`) grouped by item, users ascending.
    item_entries: Vec<usize>,
}

impl RatingsDataset {
    /// Builds the dataset, rejecting out-of-range indices, non-finite values
    /// and repeated `(user, item)` pairs.
    pub fn new(
        num_users: usize,
        num_items: usize,
        mut ratings: Vec<Rating>,
        feedback: FeedbackMode,
    ) -> Result<Self> {
        for r in &ratings {
            if r.user >= num_users || r.item >= num_items {
                return Err(Error::invalid(format!(
                    "rating ({}, {}) outside a {num_users}x{num_items} dataset",
                    r.user, r.item
                )));
            }
            if !r.value.is_finite() {
                return Err(Error::invalid(format!(
                    "rating ({}, {}) has non-finite value",
                    r.user, r.item
                )));
            }
        }
        ratings.sort_by_key(|r| (r.user, r.item));
        if let Some(w) = ratings
            .windows(2)
            .find(|w| w[0].user == w[1].user && w[0].item == w[1].item)
        {
            return Err(Error::invalid(format!(
                "duplicate rating for user {} item {}",
                w[0].user, w[0].item
            )));
        }

        let mut user_ptr = vec![0; num_users + 1];
        let mut item_counts = vec![0; num_items];
        for r in &ratings {
            user_ptr[r.user + 1] += 1;
            item_counts[r.item] += 1;
        }
        for u in 0..num_users {
            user_ptr[u + 1] += user_ptr[u];
        }
        let mut item_ptr = vec![0; num_items + 1];
        for j in 0..num_items {
            item_ptr[j + 1] = item_ptr[j] + item_counts[j];
        }
        let mut fill = item_ptr[..num_items].to_vec();
        let mut item_entries = vec![0; ratings.len()];
        for (e, r) in ratings.iter().enumerate() {
            item_entries[fill[r.item]] = e;
            fill[r.item] += 1;
        }

        Ok(RatingsDataset {
            num_users,
            num_items,
            feedback,
            user_ptr,
            users: ratings.iter().map(|r| r.user).collect(),
            items: ratings.iter().map(|r| r.item).collect(),
            values: ratings.iter().map(|r| r.value).collect(),
            item_ptr,
            item_entries,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn feedback(&self) -> FeedbackMode {
        self.feedback
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// All ratings in user-major, item-ascending order.
    pub fn ratings(&self) -> impl Iterator<Item = Rating> + '_ {
        (0..self.num_users).flat_map(move |u| {
            self.user_entries(u)
                .map(move |e| Rating::new(u, self.items[e], self.values[e]))
        })
    }

    /// Entry range of user `i`; entry `e` refers to `entry_item(e)`/`entry_value(e)`.
    pub fn user_entries(&self, user: usize) -> std::ops::Range<usize> {
        self.user_ptr[user]..self.user_ptr[user + 1]
    }

    /// Entry indices of the raters of item `j`, in ascending user order.
    pub fn item_entries(&self, item: usize) -> &[usize] {
        &self.item_entries[self.item_ptr[item]..self.item_ptr[item + 1]]
    }

    pub fn entry_item(&self, entry: usize) -> usize {
        self.items[entry]
    }

    pub fn entry_value(&self, entry: usize) -> f64 {
        self.values[entry]
    }

    pub fn entry_user(&self, entry: usize) -> usize {
        self.users[entry]
    }

    /// `(item, value)` pairs of `L_i`.
    pub fn user_ratings(&self, user: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.user_entries(user).map(|e| (self.items[e], self.values[e]))
    }

    /// `(user, value)` pairs of `Ra(j)`.
    pub fn item_ratings(&self, item: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.item_entries(item)
            .iter()
            .map(|&e| (self.users[e], self.values[e]))
    }

    pub fn user_count(&self, user: usize) -> usize {
        self.user_ptr[user + 1] - self.user_ptr[user]
    }

    pub fn item_count(&self, item: usize) -> usize {
        self.item_ptr[item + 1] - self.item_ptr[item]
    }

    /// `L_i⁺`: items with a positive value.
    pub fn positives(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        self.user_ratings(user)
            .filter(|&(_, v)| v > 0.0)
            .map(|(j, _)| j)
    }

    /// `L_i⁻`: items with a negative value.
    pub fn negatives(&self, user: usize) -> impl Iterator<Item = usize> + '_ {
        self.user_ratings(user)
            .filter(|&(_, v)| v < 0.0)
            .map(|(j, _)| j)
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        let range = self.user_entries(user);
        self.items[range].binary_search(&item).is_ok()
    }

    /// Same support, values rewritten by `f`.
    pub fn map_values(&self, feedback: FeedbackMode, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        out.feedback = feedback;
        for v in &mut out.values {
            *v = f(*v);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RatingsDataset {
        RatingsDataset::new(
            3,
            4,
            vec![
                Rating::new(2, 1, -1.0),
                Rating::new(0, 3, 1.0),
                Rating::new(0, 1, 1.0),
                Rating::new(1, 1, 1.0),
                Rating::new(2, 0, 1.0),
            ],
            FeedbackMode::ExplicitPm1,
        )
        .unwrap()
    }

    #[test]
    fn both_indexes_agree() {
        let d = small();
        assert_eq!(d.len(), 5);
        assert_eq!(d.user_ratings(0).collect::<Vec<_>>(), vec![(1, 1.0), (3, 1.0)]);
        assert_eq!(
            d.item_ratings(1).collect::<Vec<_>>(),
            vec![(0, 1.0), (1, 1.0), (2, -1.0)]
        );
        assert_eq!(d.item_count(2), 0);
        for j in 0..d.num_items() {
            for (u, v) in d.item_ratings(j) {
                assert!(d.user_ratings(u).any(|(jj, vv)| jj == j && vv == v));
            }
        }
    }

    #[test]
    fn polarity_partitions_user_lists() {
        let d = small();
        assert_eq!(d.positives(2).collect::<Vec<_>>(), vec![0]);
        assert_eq!(d.negatives(2).collect::<Vec<_>>(), vec![1]);
        for u in 0..3 {
            assert_eq!(
                d.positives(u).count() + d.negatives(u).count(),
                d.user_count(u)
            );
        }
    }

    #[test]
    fn rejects_duplicates_and_out_of_range() {
        let dup = vec![Rating::new(0, 0, 1.0), Rating::new(0, 0, 2.0)];
        assert!(RatingsDataset::new(1, 1, dup, FeedbackMode::RawStars).is_err());
        let oob = vec![Rating::new(0, 5, 1.0)];
        assert!(RatingsDataset::new(1, 1, oob, FeedbackMode::RawStars).is_err());
    }

    #[test]
    fn entry_user_lookup() {
        let d = small();
        for u in 0..3 {
            for e in d.user_entries(u) {
                assert_eq!(d.entry_user(e), u);
            }
        }
        assert!(d.contains(0, 3));
        assert!(!d.contains(1, 3));
    }
}
