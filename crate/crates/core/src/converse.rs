//! Lower bounds through file concatenation.
//!
//! With libraries sorted so that `N_1 ≤ … ≤ N_L`, file `n` of a single
//! concatenated library is `[W^{(f(n))}_n, …, W^{(L)}_n]`, where `f(n)` is the
//! first library holding at least `n` files. Any multi-library scheme serves
//! the concatenated library with the same caches and transmissions, so a lower
//! bound for the concatenated library bounds the original network.
//!
//! The concatenated library is normalized on its own reference size
//! `F' = F·Σ_ℓ α_ℓN_ℓ / N_L` (so that `(1/N_L)·Σ_n β_n = 1`). Rates and cache
//! sizes therefore convert by the factor `c = N_L / Σ_ℓ α_ℓN_ℓ`: a pair `(M, R)`
//! of the original network is `(cM, cR)` for the concatenated one. `c = 1`
//! exactly when all libraries hold the same number of files.

use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::Serialize;

use crate::allocation::{check_tradeoffs, greedy_allocate};
use crate::error::{Error, Result};
use crate::model::NetworkConfig;
use crate::rational::{from_usize, serde_str, serde_str_vec, Rational};
use crate::tradeoff::{PiecewiseLinearTradeoff, TradeoffKind};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConcatenatedLibrary {
    /// `N_L`, the largest file count.
    pub num_files: usize,
    /// `β_1 ≥ … ≥ β_{N_L}`, file sizes in units of `F'`.
    #[serde(with = "serde_str_vec")]
    pub betas: Vec<Rational>,
    /// `c = N_L / Σ_ℓ α_ℓN_ℓ`.
    #[serde(with = "serde_str")]
    pub scale: Rational,
    /// Original 1-based library indices in ascending file-count order.
    pub order: Vec<usize>,
    /// File counts in ascending order.
    pub sorted_file_counts: Vec<usize>,
    #[serde(skip)]
    pub source_config: NetworkConfig,
}

impl ConcatenatedLibrary {
    /// File sizes in units of the original reference size `F` (`β_n / c`).
    pub fn file_sizes(&self) -> Vec<Rational> {
        self.betas.iter().map(|b| b / &self.scale).collect()
    }

    /// `f(n)` for 1-based `n`, as a position in ascending order (1-based).
    pub fn level(&self, n: usize) -> Result<usize> {
        subfile_level(&self.sorted_file_counts, n)
    }
}

/// Smallest 1-based `j` with `n ≤ N_j`, for file counts sorted ascending.
pub fn subfile_level(sorted_file_counts: &[usize], n: usize) -> Result<usize> {
    if sorted_file_counts.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::UnsortedConfig);
    }
    let max = sorted_file_counts.last().copied().unwrap_or(0);
    if n == 0 || n > max {
        return Err(Error::FileIndexOutOfRange { index: n, max });
    }
    Ok(sorted_file_counts.partition_point(|&count| count < n) + 1)
}

/// Libraries reordered by ascending file count (stable), with the original
/// 1-based indices in the new order.
pub fn sorted_by_file_count(config: &NetworkConfig) -> (NetworkConfig, Vec<usize>) {
    let mut order: Vec<usize> = (0..config.num_libraries()).collect();
    order.sort_by_key(|&l| config.libraries[l].num_files);
    let sorted = NetworkConfig {
        libraries: order.iter().map(|&l| config.libraries[l].clone()).collect(),
        num_users: config.num_users,
        cache_size: config.cache_size.clone(),
    };
    (sorted, order.into_iter().map(|l| l + 1).collect())
}

/// `β_n = (Σ_{i ≥ f(n)} α_i) / (Σ_ℓ α_ℓN_ℓ) · N_L`, after sorting libraries.
pub fn concatenate(config: &NetworkConfig) -> ConcatenatedLibrary {
    let (sorted, order) = sorted_by_file_count(config);
    let counts = sorted.file_counts();
    let largest = *counts.last().expect("valid configs have libraries");
    let total = sorted.total_content();
    let scale = from_usize(largest) / &total;

    // suffix sums of α in sorted order
    let mut suffix = vec![Rational::zero(); counts.len() + 1];
    for l in (0..counts.len()).rev() {
        suffix[l] = &suffix[l + 1] + &sorted.libraries[l].alpha;
    }
    let betas = (1..=largest)
        .map(|n| {
            let level = subfile_level(&counts, n).expect("n within range");
            &suffix[level - 1] * &scale
        })
        .collect();
    ConcatenatedLibrary {
        num_files: largest,
        betas,
        scale,
        order,
        sorted_file_counts: counts,
        source_config: config.clone(),
    }
}

/// Cut-set bound for a single library with unequal file sizes, in the
/// library's own units: for `s` users and `⌊N/s⌋` transmissions that together
/// deliver the `s⌊N/s⌋` largest files,
/// `R ≥ (Σ largest sizes − s·M) / ⌊N/s⌋`.
pub fn concatenated_cut_set(
    lib: &ConcatenatedLibrary,
    num_users: usize,
    memory: &Rational,
) -> Rational {
    let mut sizes = lib.betas.clone();
    sizes.sort_by(|a, b| b.cmp(a));
    let n = lib.num_files;
    (1..=n.min(num_users))
        .map(|s| {
            let rounds = n / s;
            let content: Rational = sizes[..s * rounds].iter().cloned().sum();
            (content - from_usize(s) * memory) / from_usize(rounds)
        })
        .fold(Rational::zero(), |acc, v| if v > acc { v } else { acc })
}

/// Lower bound on the network's rate from a lower bound `single_library_bound`
/// on the concatenated library (a function of its cache size, in its own
/// units). Returns `single_library_bound(cM) / c`.
pub fn converse_bound(
    config: &NetworkConfig,
    single_library_bound: impl Fn(&Rational) -> Rational,
) -> Rational {
    let lib = concatenate(config);
    single_library_bound(&(&lib.scale * &config.cache_size)) / &lib.scale
}

/// The concatenated cut-set bound in the network's own units.
pub fn cut_set_converse(config: &NetworkConfig) -> Rational {
    let lib = concatenate(config);
    converse_bound(config, |m| concatenated_cut_set(&lib, config.num_users, m))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GapStatus {
    Tight,
    Open,
}

impl fmt::Display for GapStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GapStatus::Tight => "tight",
            GapStatus::Open => "open",
        })
    }
}

/// Which lower bound produced the converse value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ConverseKind {
    /// The exact shared single-library tradeoff (equal file counts only).
    Exact,
    /// Cut-set over the concatenated files: a bound, not an exact value.
    Cutset,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GapReport {
    #[serde(with = "serde_str")]
    pub achievable: Rational,
    #[serde(with = "serde_str")]
    pub converse: Rational,
    #[serde(with = "serde_str")]
    pub gap: Rational,
    pub status: GapStatus,
    pub converse_kind: ConverseKind,
}

impl GapReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// Compares the best memory-sharing rate with the best available lower bound.
///
/// When all libraries hold the same number of files and share one exact
/// tradeoff, that tradeoff at `M` is a valid converse; otherwise the
/// concatenated cut-set bound is used.
pub fn conjecture_gap(
    config: &NetworkConfig,
    tradeoffs: &[PiecewiseLinearTradeoff],
) -> Result<GapReport> {
    check_tradeoffs(config, tradeoffs)?;
    let achievable = greedy_allocate(config, tradeoffs)?.rate;
    let cutset = cut_set_converse(config);

    let shared_exact = config.has_equal_file_counts()
        && tradeoffs.iter().all(|t| t.kind() == TradeoffKind::Exact)
        && tradeoffs
            .windows(2)
            .all(|w| w[0].corners() == w[1].corners());
    let (converse, converse_kind) = if shared_exact {
        let lib = concatenate(config);
        debug_assert!(lib.scale.is_one());
        let exact = converse_bound(config, |m| {
            tradeoffs[0]
                .evaluate(m)
                .expect("cache sizes are non-negative")
        });
        if exact >= cutset {
            (exact, ConverseKind::Exact)
        } else {
            (cutset, ConverseKind::Cutset)
        }
    } else {
        (cutset, ConverseKind::Cutset)
    };

    let gap = &achievable - &converse;
    if gap.is_negative() {
        return Err(Error::InvalidTradeoff(format!(
            "lower bound {converse} exceeds achievable rate {achievable}; a supplied tradeoff is not achievable"
        )));
    }
    let status = if gap.is_zero() {
        GapStatus::Tight
    } else {
        GapStatus::Open
    };
    Ok(GapReport {
        achievable,
        converse,
        gap,
        status,
        converse_kind,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{two_library_example, LibrarySpec};
    use crate::rational::{int, rat};
    use crate::tradeoff::{exact_two_by_two, TradeoffSource};
    use proptest::prelude::*;

    fn unequal() -> NetworkConfig {
        NetworkConfig::new(
            vec![
                LibrarySpec::new(1, rat(1, 2)),
                LibrarySpec::new(2, rat(1, 2)),
            ],
            2,
            rat(1, 2),
        )
        .unwrap()
    }

    fn auto_tradeoffs(c: &NetworkConfig) -> Vec<PiecewiseLinearTradeoff> {
        c.libraries
            .iter()
            .map(|l| {
                TradeoffSource::Auto
                    .build(l.num_files, c.num_users)
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn subfile_level_examples() {
        assert_eq!(subfile_level(&[1, 2], 1).unwrap(), 1);
        assert_eq!(subfile_level(&[1, 2], 2).unwrap(), 2);
        assert_eq!(subfile_level(&[2, 2], 1).unwrap(), 1);
        assert_eq!(subfile_level(&[2, 2], 2).unwrap(), 1);
        assert_eq!(subfile_level(&[1, 3, 3], 3).unwrap(), 2);
        assert!(matches!(
            subfile_level(&[1, 3], 4),
            Err(Error::FileIndexOutOfRange { .. })
        ));
        assert!(matches!(
            subfile_level(&[1, 3], 0),
            Err(Error::FileIndexOutOfRange { .. })
        ));
        assert!(matches!(
            subfile_level(&[3, 1], 1),
            Err(Error::UnsortedConfig)
        ));
    }

    #[test]
    fn concatenate_examples() {
        let lib = concatenate(&unequal());
        assert_eq!(lib.betas, vec![rat(4, 3), rat(2, 3)]);
        assert_eq!(lib.scale, rat(4, 3));
        assert_eq!(lib.file_sizes(), vec![int(1), rat(1, 2)]);
        assert_eq!(
            concatenate(&two_library_example()).betas,
            vec![int(1), int(1)]
        );
    }

    #[test]
    fn concatenate_sorts_and_records_order() {
        let c = NetworkConfig::new(
            vec![
                LibrarySpec::new(3, rat(1, 4)),
                LibrarySpec::new(1, rat(1, 2)),
                LibrarySpec::new(2, rat(1, 4)),
            ],
            2,
            int(1),
        )
        .unwrap();
        let lib = concatenate(&c);
        assert_eq!(lib.order, vec![2, 3, 1]);
        assert_eq!(lib.sorted_file_counts, vec![1, 2, 3]);
        // total content 3/4 + 1/2 + 1/2 = 7/4, c = 12/7
        assert_eq!(lib.betas, vec![rat(12, 7), rat(6, 7), rat(3, 7)]);
        assert_eq!(lib.level(3).unwrap(), 3);
    }

    #[test]
    fn converse_bound_examples() {
        let c = two_library_example();
        let t = exact_two_by_two();
        assert_eq!(converse_bound(&c, |m| t.evaluate(m).unwrap()), rat(1, 2));
        let full = c.with_cache_size(int(2)).unwrap();
        assert_eq!(cut_set_converse(&full), int(0));
        assert_eq!(converse_bound(&full, |m| t.evaluate(m).unwrap()), int(0));
        // at M = 0 the largest two concatenated files must both be sent:
        // (4/3 + 2/3) in concatenated units, 3/2 in network units
        let zero = unequal().with_cache_size(int(0)).unwrap();
        let lib = concatenate(&zero);
        assert_eq!(concatenated_cut_set(&lib, 2, &int(0)), int(2));
        assert_eq!(cut_set_converse(&zero), rat(3, 2));
    }

    #[test]
    fn gap_examples() {
        let c = two_library_example();
        let g = conjecture_gap(&c, &[exact_two_by_two(), exact_two_by_two()]).unwrap();
        assert_eq!(
            g.to_json(),
            r#"{"achievable":"1/2","converse":"1/2","gap":"0","status":"tight","converse_kind":"exact"}"#
        );

        let full = c.with_cache_size(int(2)).unwrap();
        let g = conjecture_gap(&full, &[exact_two_by_two(), exact_two_by_two()]).unwrap();
        assert_eq!(
            (g.achievable, g.gap, g.status),
            (int(0), int(0), GapStatus::Tight)
        );

        let u = unequal();
        let g = conjecture_gap(&u, &auto_tradeoffs(&u)).unwrap();
        assert_eq!(g.achievable, rat(3, 4));
        assert_eq!(g.converse, rat(1, 2));
        assert_eq!(g.gap, rat(1, 4));
        assert_eq!(g.status, GapStatus::Open);
        assert_eq!(g.converse_kind, ConverseKind::Cutset);
    }

    fn arb_config(equal_n: bool) -> impl Strategy<Value = NetworkConfig> {
        (
            prop::collection::vec((1usize..5, 1i64..7), 1..5),
            1usize..5,
            1usize..5,
            0i64..=8,
        )
            .prop_map(move |(libs, k, shared_n, frac)| {
                let weight: i64 = libs.iter().map(|(_, w)| w).sum();
                let libraries: Vec<LibrarySpec> = libs
                    .iter()
                    .map(|(n, w)| {
                        LibrarySpec::new(if equal_n { shared_n } else { *n }, rat(*w, weight))
                    })
                    .collect();
                let probe = NetworkConfig::new(libraries.clone(), k, int(0)).unwrap();
                let m = probe.total_content() * rat(frac, 8);
                NetworkConfig::new(libraries, k, m).unwrap()
            })
    }

    proptest! {
        #[test]
        fn equal_n_gives_unit_betas(c in arb_config(true)) {
            let lib = concatenate(&c);
            prop_assert!(lib.betas.iter().all(|b| b.is_one()));
            prop_assert!(lib.scale.is_one());
        }

        #[test]
        fn betas_normalized_and_non_increasing(c in arb_config(false)) {
            let lib = concatenate(&c);
            let sum: Rational = lib.betas.iter().cloned().sum();
            prop_assert_eq!(sum / from_usize(lib.num_files), int(1));
            prop_assert!(lib.betas.windows(2).all(|w| w[0] >= w[1]));
        }

        #[test]
        fn converse_never_exceeds_greedy(c in arb_config(false)) {
            let t = auto_tradeoffs(&c);
            let g = conjecture_gap(&c, &t).unwrap();
            prop_assert!(g.converse <= g.achievable);
        }
    }
}
