//! Multi-library network descriptions.
//!
//! A network has `L` libraries; library `ℓ` holds `N_ℓ` files of normalized
//! size `α_ℓ` each (units of the reference size `F`), with `Σ_ℓ α_ℓ = 1`.
//! `K` users each own a cache of normalized size `M` and request exactly one
//! file from every library. Library and file indices are 1-based in all
//! serialized forms and in [`DemandVector`].

use std::fmt;

use num_bigint::BigUint;
use num_traits::{One, Signed, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{format_rational, from_usize, serde_str, Rational};

/// Default bound on the number of demand vectors an exhaustive pass may visit.
pub const DEFAULT_DEMAND_CAP: u64 = 1 << 20;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibrarySpec {
    pub num_files: usize,
    #[serde(with = "serde_str")]
    pub alpha: Rational,
}

impl LibrarySpec {
    pub fn new(num_files: usize, alpha: Rational) -> Self {
        Self { num_files, alpha }
    }

    /// `α·N`, the library's share of the total content.
    pub fn content(&self) -> Rational {
        &self.alpha * from_usize(self.num_files)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub libraries: Vec<LibrarySpec>,
    pub num_users: usize,
    #[serde(with = "serde_str")]
    pub cache_size: Rational,
}

/// One broken invariant of a [`NetworkConfig`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NoLibraries,
    NoUsers,
    EmptyLibrary { library: usize },
    NonPositiveAlpha { library: usize, alpha: Rational },
    Normalization { sum: Rational },
    NegativeCache { cache_size: Rational },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoLibraries => write!(f, "no libraries"),
            Violation::NoUsers => write!(f, "num_users = 0"),
            Violation::EmptyLibrary { library } => {
                write!(f, "library {library} has num_files = 0")
            }
            Violation::NonPositiveAlpha { library, alpha } => {
                write!(
                    f,
                    "library {library} has alpha = {} ≤ 0",
                    format_rational(alpha)
                )
            }
            Violation::Normalization { sum } => {
                write!(f, "normalization sum = {} ≠ 1", format_rational(sum))
            }
            Violation::NegativeCache { cache_size } => {
                write!(f, "cache_size = {} < 0", format_rational(cache_size))
            }
        }
    }
}

impl NetworkConfig {
    /// Validates and builds a configuration. A cache larger than the total
    /// content is clamped to it (rates are zero beyond that point).
    pub fn new(
        libraries: Vec<LibrarySpec>,
        num_users: usize,
        cache_size: Rational,
    ) -> Result<Self> {
        Self {
            libraries,
            num_users,
            cache_size,
        }
        .checked()
    }

    /// Runs [`validate`](Self::validate), failing on any violation, then clamps
    /// the cache size.
    pub fn checked(mut self) -> Result<Self> {
        let violations = self.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidConfig(violations));
        }
        let total = self.total_content();
        if self.cache_size > total {
            log::warn!(
                "cache size {} exceeds total content {}; clamping",
                format_rational(&self.cache_size),
                format_rational(&total)
            );
            self.cache_size = total;
        }
        Ok(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: NetworkConfig = serde_json::from_str(text)?;
        raw.checked()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Every violated invariant; empty when the configuration is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.libraries.is_empty() {
            out.push(Violation::NoLibraries);
        }
        if self.num_users == 0 {
            out.push(Violation::NoUsers);
        }
        for (i, lib) in self.libraries.iter().enumerate() {
            if lib.num_files == 0 {
                out.push(Violation::EmptyLibrary { library: i + 1 });
            }
            if !lib.alpha.is_positive() {
                out.push(Violation::NonPositiveAlpha {
                    library: i + 1,
                    alpha: lib.alpha.clone(),
                });
            }
        }
        if !self.libraries.is_empty() {
            let sum: Rational = self.libraries.iter().map(|l| l.alpha.clone()).sum();
            if !sum.is_one() {
                out.push(Violation::Normalization { sum });
            }
        }
        if self.cache_size.is_negative() {
            out.push(Violation::NegativeCache {
                cache_size: self.cache_size.clone(),
            });
        }
        out
    }

    pub fn num_libraries(&self) -> usize {
        self.libraries.len()
    }

    pub fn alpha(&self, library: usize) -> &Rational {
        &self.libraries[library].alpha
    }

    pub fn file_counts(&self) -> Vec<usize> {
        self.libraries.iter().map(|l| l.num_files).collect()
    }

    /// `Σ_ℓ α_ℓ·N_ℓ`.
    pub fn total_content(&self) -> Rational {
        self.libraries.iter().map(LibrarySpec::content).sum()
    }

    pub fn has_equal_file_counts(&self) -> bool {
        self.libraries
            .windows(2)
            .all(|w| w[0].num_files == w[1].num_files)
    }

    /// Same libraries and users with a different cache size (clamped).
    pub fn with_cache_size(&self, cache_size: Rational) -> Result<Self> {
        Self::new(self.libraries.clone(), self.num_users, cache_size)
    }

    /// `∏_ℓ N_ℓ^K`, the number of distinct demand vectors.
    pub fn demand_count(&self) -> BigUint {
        self.libraries
            .iter()
            .map(|l| num_traits::pow(BigUint::from(l.num_files), self.num_users))
            .product()
    }

    /// All demand vectors in lexicographic order (library-major, user-minor,
    /// last coordinate fastest). Fails if there are more than `cap`.
    pub fn enumerate_demands(&self, cap: u64) -> Result<DemandIter> {
        let count = self.demand_count();
        if count > BigUint::from(cap) {
            return Err(Error::EnumerationCap {
                count: count.to_string(),
                cap,
            });
        }
        let remaining = count.to_u64().unwrap_or(0);
        Ok(DemandIter {
            file_counts: self.file_counts(),
            num_users: self.num_users,
            next: (remaining > 0).then(|| vec![1; self.num_libraries() * self.num_users]),
            remaining,
        })
    }
}

/// Requests `d_k^{(ℓ)}` as an `L × K` array of 1-based file indices.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DemandVector {
    pub demands: Vec<Vec<usize>>,
}

impl DemandVector {
    pub fn new(demands: Vec<Vec<usize>>) -> Self {
        Self { demands }
    }

    /// File requested by `user` (0-based) from `library` (0-based), 1-based.
    pub fn file(&self, library: usize, user: usize) -> usize {
        self.demands[library][user]
    }

    pub fn library(&self, library: usize) -> &[usize] {
        &self.demands[library]
    }

    pub fn check(&self, config: &NetworkConfig) -> Result<()> {
        if self.demands.len() != config.num_libraries() {
            return Err(Error::DemandMismatch(format!(
                "{} library rows for {} libraries",
                self.demands.len(),
                config.num_libraries()
            )));
        }
        for (l, (row, lib)) in self.demands.iter().zip(&config.libraries).enumerate() {
            if row.len() != config.num_users {
                return Err(Error::DemandMismatch(format!(
                    "library {} row has {} entries for {} users",
                    l + 1,
                    row.len(),
                    config.num_users
                )));
            }
            if let Some(&bad) = row.iter().find(|&&d| d == 0 || d > lib.num_files) {
                return Err(Error::DemandMismatch(format!(
                    "library {} request {bad} outside [1, {}]",
                    l + 1,
                    lib.num_files
                )));
            }
        }
        Ok(())
    }
}

/// Odometer over demand vectors; see [`NetworkConfig::enumerate_demands`].
#[derive(Clone, Debug)]
pub struct DemandIter {
    file_counts: Vec<usize>,
    num_users: usize,
    next: Option<Vec<usize>>,
    remaining: u64,
}

impl Iterator for DemandIter {
    type Item = DemandVector;

    fn next(&mut self) -> Option<DemandVector> {
        let current = self.next.take()?;
        self.remaining -= 1;
        let mut succ = current.clone();
        let mut pos = succ.len();
        let mut carried_out = true;
        while pos > 0 {
            pos -= 1;
            let limit = self.file_counts[pos / self.num_users];
            if succ[pos] < limit {
                succ[pos] += 1;
                carried_out = false;
                break;
            }
            succ[pos] = 1;
        }
        if !carried_out {
            self.next = Some(succ);
        }
        let demands = current
            .chunks(self.num_users.max(1))
            .map(<[usize]>::to_vec)
            .collect();
        Some(DemandVector { demands })
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.remaining as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for DemandIter {}

/// Two libraries of two files each, the second library's files 1.5 times
/// larger, two users, cache `M = F₁ + F₂` (normalized: `α = (2/5, 3/5)`, `M = 1`).
pub fn two_library_example() -> NetworkConfig {
    use crate::rational::{int, rat};
    NetworkConfig::new(
        vec![
            LibrarySpec::new(2, rat(2, 5)),
            LibrarySpec::new(2, rat(3, 5)),
        ],
        2,
        int(1),
    )
    .expect("example is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn cfg(libs: &[(usize, Rational)], k: usize, m: Rational) -> NetworkConfig {
        NetworkConfig {
            libraries: libs
                .iter()
                .map(|(n, a)| LibrarySpec::new(*n, a.clone()))
                .collect(),
            num_users: k,
            cache_size: m,
        }
    }

    #[test]
    fn validate_examples() {
        assert!(two_library_example().validate().is_empty());
        assert!(cfg(&[(4, int(1))], 2, int(0)).validate().is_empty());

        let bad = cfg(&[(2, rat(1, 2)), (2, rat(1, 3))], 2, int(1));
        let v = bad.validate();
        assert_eq!(v, vec![Violation::Normalization { sum: rat(5, 6) }]);
        assert_eq!(v[0].to_string(), "normalization sum = 5/6 ≠ 1");
    }

    #[test]
    fn validate_reports_every_violation() {
        let bad = cfg(&[(0, int(0)), (3, int(-1))], 0, int(-2));
        let v = bad.validate();
        assert!(v.contains(&Violation::NoUsers));
        assert!(v.contains(&Violation::EmptyLibrary { library: 1 }));
        assert!(v.contains(&Violation::NonPositiveAlpha {
            library: 1,
            alpha: int(0)
        }));
        assert!(v.contains(&Violation::NonPositiveAlpha {
            library: 2,
            alpha: int(-1)
        }));
        assert!(v.contains(&Violation::Normalization { sum: int(-1) }));
        assert!(v.contains(&Violation::NegativeCache {
            cache_size: int(-2)
        }));
        assert_eq!(cfg(&[], 1, int(0)).validate(), vec![Violation::NoLibraries]);
    }

    #[test]
    fn total_content_examples() {
        assert_eq!(two_library_example().total_content(), int(2));
        assert_eq!(cfg(&[(5, int(1))], 1, int(0)).total_content(), int(5));
        assert_eq!(
            cfg(&[(1, rat(1, 2)), (2, rat(1, 2))], 2, int(0)).total_content(),
            rat(3, 2)
        );
    }

    #[test]
    fn cache_beyond_content_is_clamped() {
        let c = NetworkConfig::new(vec![LibrarySpec::new(3, int(1))], 2, int(7)).unwrap();
        assert_eq!(c.cache_size, int(3));
    }

    #[test]
    fn json_round_trip_and_errors() {
        let text = r#"{"libraries":[{"num_files":2,"alpha":"2/5"},{"num_files":2,"alpha":"3/5"}],"num_users":2,"cache_size":"1"}"#;
        let c = NetworkConfig::from_json(text).unwrap();
        assert_eq!(c, two_library_example());
        assert_eq!(c.to_json(), text);

        let bad = r#"{"libraries":[{"num_files":2,"alpha":"1/2"},{"num_files":2,"alpha":"1/3"}],"num_users":2,"cache_size":"1"}"#;
        assert!(matches!(
            NetworkConfig::from_json(bad),
            Err(Error::InvalidConfig(_))
        ));
        let bad_num =
            r#"{"libraries":[{"num_files":2,"alpha":"0.5"}],"num_users":2,"cache_size":"1"}"#;
        assert!(matches!(
            NetworkConfig::from_json(bad_num),
            Err(Error::Json(_))
        ));
    }

    #[test]
    fn demand_enumeration_examples() {
        let all: Vec<_> = two_library_example()
            .enumerate_demands(DEFAULT_DEMAND_CAP)
            .unwrap()
            .collect();
        assert_eq!(all.len(), 16);
        assert_eq!(all[0].demands, vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(all[1].demands, vec![vec![1, 1], vec![1, 2]]);
        assert_eq!(all[15].demands, vec![vec![2, 2], vec![2, 2]]);

        let single = cfg(&[(1, int(1))], 3, int(0));
        let v: Vec<_> = single.enumerate_demands(10).unwrap().collect();
        assert_eq!(v, vec![DemandVector::new(vec![vec![1, 1, 1]])]);

        let mixed = cfg(&[(1, rat(1, 2)), (2, rat(1, 2))], 2, int(0));
        assert_eq!(mixed.enumerate_demands(10).unwrap().count(), 4);
    }

    #[test]
    fn demand_cap_names_the_count() {
        let err = two_library_example().enumerate_demands(15).unwrap_err();
        match err {
            Error::EnumerationCap { count, cap } => {
                assert_eq!(count, "16");
                assert_eq!(cap, 15);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn demand_check() {
        let c = two_library_example();
        assert!(DemandVector::new(vec![vec![1, 2], vec![2, 2]])
            .check(&c)
            .is_ok());
        assert!(DemandVector::new(vec![vec![1, 3], vec![2, 2]])
            .check(&c)
            .is_err());
        assert!(DemandVector::new(vec![vec![1, 2]]).check(&c).is_err());
        assert!(DemandVector::new(vec![vec![1], vec![2, 2]])
            .check(&c)
            .is_err());
    }

    fn arb_config() -> impl Strategy<Value = NetworkConfig> {
        (
            prop::collection::vec((1usize..4, 1i64..7), 1..4),
            1usize..4,
            0i64..6,
        )
            .prop_map(|(libs, k, m)| {
                let weight: i64 = libs.iter().map(|(_, w)| w).sum();
                cfg(
                    &libs
                        .iter()
                        .map(|(n, w)| (*n, rat(*w, weight)))
                        .collect::<Vec<_>>(),
                    k,
                    rat(m, 2),
                )
            })
    }

    proptest! {
        #[test]
        fn renormalized_configs_validate(c in arb_config()) {
            prop_assert!(c.validate().is_empty());
            let mut broken = c.clone();
            broken.libraries[0].alpha += rat(1, 7);
            prop_assert!(!broken.validate().is_empty());
        }

        #[test]
        fn enumeration_is_complete_and_distinct(c in arb_config()) {
            let expected = c.demand_count().to_u64().unwrap();
            prop_assume!(expected <= 4096);
            let seen: HashSet<DemandVector> = c.enumerate_demands(4096).unwrap().collect();
            prop_assert_eq!(seen.len() as u64, expected);
            prop_assert!(seen.iter().all(|d| d.check(&c).is_ok()));
        }
    }
}
