//! Splitting a user cache across libraries.
//!
//! Under memory-sharing each library `ℓ` receives `M_ℓ` of the cache and runs
//! its own single-library scheme, giving total rate
//! `Σ_ℓ α_ℓ · R_ℓ(M_ℓ / α_ℓ)`. [`greedy_allocate`] finds the split minimizing
//! that sum by repeatedly feeding the library with the steepest right slope;
//! [`brute_force_allocate`] is the exhaustive oracle it is tested against.
//!
//! Giving `δ` more memory to library `ℓ` on segment `i` lowers
//! `α_ℓ·R_ℓ(M_ℓ/α_ℓ)` by `γ_i·δ`: the `α_ℓ` factors cancel, so the marginal
//! gain per unit of cache is the unscaled slope `γ_i`.

use num_traits::{Signed, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::NetworkConfig;
use crate::rational::{format_rational, from_usize, int, serde_str, serde_str_vec, Rational};
use crate::tradeoff::{PiecewiseLinearTradeoff, TradeoffKind};

/// Default bound on the number of candidate splits the brute-force oracle
/// evaluates.
pub const DEFAULT_BRUTE_FORCE_CAP: u64 = 2_000_000;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct Allocation {
    #[serde(with = "serde_str_vec")]
    pub per_library: Vec<Rational>,
}

impl Allocation {
    pub fn new(per_library: Vec<Rational>) -> Self {
        Self { per_library }
    }

    pub fn total(&self) -> Rational {
        self.per_library.iter().cloned().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceStep {
    /// 1-based library index.
    pub library: usize,
    /// Segment index of that library before the step.
    pub segment: usize,
    #[serde(with = "serde_str")]
    pub delta: Rational,
    /// Total allocated memory after the step.
    #[serde(with = "serde_str")]
    pub allocated: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AllocationTrace {
    pub steps: Vec<TraceStep>,
    #[serde(rename = "allocation")]
    pub final_allocation: Allocation,
    #[serde(with = "serde_str")]
    pub rate: Rational,
    #[serde(rename = "tradeoffs")]
    pub tradeoff_labels: Vec<String>,
}

impl AllocationTrace {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

pub(crate) fn check_tradeoffs(
    config: &NetworkConfig,
    tradeoffs: &[PiecewiseLinearTradeoff],
) -> Result<()> {
    if tradeoffs.len() != config.num_libraries() {
        return Err(Error::WrongLibraryCount {
            expected: config.num_libraries(),
            found: tradeoffs.len(),
        });
    }
    for (l, (lib, t)) in config.libraries.iter().zip(tradeoffs).enumerate() {
        if lib.num_files != t.num_files() {
            return Err(Error::TradeoffMismatch {
                library: l + 1,
                expected: lib.num_files,
                found: t.num_files(),
            });
        }
    }
    Ok(())
}

/// `Σ_ℓ α_ℓ · R_ℓ(M_ℓ / α_ℓ)` without checking that the split sums to `M`.
fn sharing_rate(
    config: &NetworkConfig,
    per_library: &[Rational],
    tradeoffs: &[PiecewiseLinearTradeoff],
) -> Rational {
    config
        .libraries
        .iter()
        .zip(per_library)
        .zip(tradeoffs)
        .map(|((lib, m), t)| {
            let local = t
                .evaluate(&(m / &lib.alpha))
                .expect("allocations are non-negative");
            &lib.alpha * local
        })
        .sum()
}

/// Total delivery rate of memory-sharing with the given split.
pub fn memory_sharing_rate(
    config: &NetworkConfig,
    alloc: &Allocation,
    tradeoffs: &[PiecewiseLinearTradeoff],
) -> Result<Rational> {
    check_tradeoffs(config, tradeoffs)?;
    if alloc.per_library.len() != config.num_libraries() {
        return Err(Error::AllocationMismatch(format!(
            "{} entries for {} libraries",
            alloc.per_library.len(),
            config.num_libraries()
        )));
    }
    if let Some((l, m)) = alloc
        .per_library
        .iter()
        .enumerate()
        .find(|(_, m)| m.is_negative())
    {
        return Err(Error::AllocationMismatch(format!(
            "library {} gets negative memory {}",
            l + 1,
            format_rational(m)
        )));
    }
    let total = alloc.total();
    if total != config.cache_size {
        return Err(Error::AllocationMismatch(format!(
            "split sums to {}, cache size is {}",
            format_rational(&total),
            format_rational(&config.cache_size)
        )));
    }
    Ok(sharing_rate(config, &alloc.per_library, tradeoffs))
}

/// `M_ℓ = α_ℓ·M`.
pub fn proportional_allocation(config: &NetworkConfig) -> Allocation {
    Allocation::new(
        config
            .libraries
            .iter()
            .map(|l| &l.alpha * &config.cache_size)
            .collect(),
    )
}

/// How a library's segment slope is ranked against other libraries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlopeKey {
    /// `γ_i`: rate saved per unit of cache memory. This is the key that
    /// minimizes the memory-sharing rate.
    PerUnitMemory,
    /// `γ_i/α_ℓ`. Kept so the conditions can be evaluated in this form too; it
    /// agrees with [`SlopeKey::PerUnitMemory`] only when all `α_ℓ` are equal.
    AlphaNormalized,
}

impl SlopeKey {
    fn apply(self, config: &NetworkConfig, l: usize, gamma: Rational) -> Rational {
        match self {
            SlopeKey::PerUnitMemory => gamma,
            SlopeKey::AlphaNormalized => gamma / config.alpha(l),
        }
    }
}

/// Greedy optimal split of the cache among libraries.
///
/// Each step gives memory to the library with the largest right slope
/// `γ_{i_ℓ}` (ties go to the smallest index), up to the end of its current
/// segment (`α_ℓ·(θ_{i+1} − θ_i)` of cache) or until the cache is exhausted.
/// A library holding all of its content has right slope zero.
pub fn greedy_allocate(
    config: &NetworkConfig,
    tradeoffs: &[PiecewiseLinearTradeoff],
) -> Result<AllocationTrace> {
    check_tradeoffs(config, tradeoffs)?;
    let num = config.num_libraries();
    let mut segment = vec![0usize; num];
    let mut per_library = vec![Rational::zero(); num];
    let mut allocated = Rational::zero();
    let mut steps = Vec::new();

    while allocated < config.cache_size {
        let mut best: Option<(usize, Rational)> = None;
        for l in 0..num {
            let s = tradeoffs[l].right_slope(segment[l]);
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((l, s));
            }
        }
        let (chosen, slope) = best.expect("at least one library");
        if slope.is_zero() {
            // every library is full; only reachable if M exceeds the content
            break;
        }
        let t = &tradeoffs[chosen];
        let i = segment[chosen];
        let bps = t.breakpoints();
        let full_step = config.alpha(chosen) * (&bps[i + 1] - &bps[i]);
        let remaining = &config.cache_size - &allocated;
        let delta = if full_step <= remaining {
            segment[chosen] += 1;
            full_step
        } else {
            remaining
        };
        per_library[chosen] += &delta;
        allocated += &delta;
        steps.push(TraceStep {
            library: chosen + 1,
            segment: i,
            delta,
            allocated: allocated.clone(),
        });
    }

    let rate = sharing_rate(config, &per_library, tradeoffs);
    Ok(AllocationTrace {
        steps,
        final_allocation: Allocation::new(per_library),
        rate,
        tradeoff_labels: tradeoffs.iter().map(|t| t.label().to_owned()).collect(),
    })
}

/// Position of each library's share relative to its breakpoints.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitStructure {
    /// `i_ℓ` with `θ_{i_ℓ}·α_ℓ ≤ M_ℓ < θ_{i_ℓ+1}·α_ℓ` (or `r` when full).
    pub segments: Vec<usize>,
    /// 0-based libraries strictly between two corner points.
    pub non_corner: Vec<usize>,
}

pub fn split_structure(
    config: &NetworkConfig,
    alloc: &Allocation,
    tradeoffs: &[PiecewiseLinearTradeoff],
) -> SplitStructure {
    let mut segments = Vec::with_capacity(tradeoffs.len());
    let mut non_corner = Vec::new();
    for (l, (m, t)) in alloc.per_library.iter().zip(tradeoffs).enumerate() {
        let alpha = config.alpha(l);
        let i = t.segment_index(&(m / alpha));
        let corner = &t.breakpoints()[i.min(t.num_segments())] * alpha;
        if *m != corner {
            non_corner.push(l);
        }
        segments.push(i);
    }
    SplitStructure {
        segments,
        non_corner,
    }
}

/// Checks the optimal-split structure: at most one library off a corner
/// point, every library's right slope at most every library's left slope,
/// and no right slope exceeding that of the designated partial library
/// (slopes ranked by `key`). Returns the violated conditions, empty when all
/// hold.
pub fn check_split_conditions(
    config: &NetworkConfig,
    alloc: &Allocation,
    tradeoffs: &[PiecewiseLinearTradeoff],
    key: SlopeKey,
) -> Vec<String> {
    let mut problems = Vec::new();
    let st = split_structure(config, alloc, tradeoffs);
    if st.non_corner.len() > 1 {
        problems.push(format!(
            "libraries {:?} are all strictly between corner points",
            st.non_corner.iter().map(|l| l + 1).collect::<Vec<_>>()
        ));
    }
    let right: Vec<Rational> = (0..tradeoffs.len())
        .map(|l| key.apply(config, l, tradeoffs[l].right_slope(st.segments[l])))
        .collect();
    let left: Vec<Option<Rational>> = (0..tradeoffs.len())
        .map(|l| {
            tradeoffs[l]
                .left_slope(st.segments[l])
                .map(|g| key.apply(config, l, g))
        })
        .collect();
    for (l, r) in right.iter().enumerate() {
        for (lp, lft) in left.iter().enumerate() {
            if let Some(lft) = lft {
                if r > lft {
                    problems.push(format!(
                        "right slope {} of library {} exceeds left slope {} of library {}",
                        format_rational(r),
                        l + 1,
                        format_rational(lft),
                        lp + 1
                    ));
                }
            }
        }
    }
    let hat = st.non_corner.first().copied().unwrap_or_else(|| {
        // all on corners: the steepest library plays the partial role
        (0..right.len())
            .max_by(|&a, &b| right[a].cmp(&right[b]).then(b.cmp(&a)))
            .unwrap_or(0)
    });
    for (l, r) in right.iter().enumerate() {
        if r > &right[hat] {
            problems.push(format!(
                "right slope {} of library {} exceeds that of partial library {}",
                format_rational(r),
                l + 1,
                hat + 1
            ));
        }
    }
    problems
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BruteForceResult {
    pub allocation: Allocation,
    #[serde(with = "serde_str")]
    pub rate: Rational,
    pub candidates: usize,
}

fn compositions(units: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        prefix.push(units);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in 0..=units {
        prefix.push(first);
        compositions(units - first, parts - 1, prefix, out);
        prefix.pop();
    }
}

fn grid_size(units: usize, parts: usize) -> Option<u64> {
    // C(units + parts - 1, parts - 1)
    let mut acc: u128 = 1;
    for i in 0..(parts as u128 - 1) {
        acc = acc.checked_mul(units as u128 + 1 + i)? / (i + 1);
    }
    u64::try_from(acc).ok()
}

/// Exhaustive minimization of the memory-sharing rate over the uniform grid
/// with spacing `grid_step` plus every split in which all libraries but one
/// sit on a corner point. Ties resolve to the lexicographically smallest
/// split, independent of evaluation order.
pub fn brute_force_allocate(
    config: &NetworkConfig,
    tradeoffs: &[PiecewiseLinearTradeoff],
    grid_step: &Rational,
    cap: u64,
) -> Result<BruteForceResult> {
    check_tradeoffs(config, tradeoffs)?;
    if !grid_step.is_positive() {
        return Err(Error::InvalidGridStep);
    }
    let num = config.num_libraries();
    let cache = &config.cache_size;

    let corner_values: Vec<Vec<Rational>> = (0..num)
        .map(|l| {
            tradeoffs[l]
                .breakpoints()
                .iter()
                .map(|b| b * config.alpha(l))
                .collect()
        })
        .collect();
    let corner_count: u128 = (0..num)
        .map(|free| {
            (0..num)
                .filter(|&l| l != free)
                .map(|l| corner_values[l].len() as u128)
                .product::<u128>()
        })
        .sum();

    let units = cache / grid_step;
    let grid_units = if units.is_integer() {
        Some(
            units
                .to_integer()
                .try_into()
                .map_err(|_| Error::EnumerationCap {
                    count: format_rational(&units),
                    cap,
                })?,
        )
    } else {
        None
    };
    let grid_count = match grid_units {
        Some(u) => grid_size(u, num).map(u128::from).unwrap_or(u128::MAX),
        None => 0,
    };
    let total = grid_count.saturating_add(corner_count);
    if total > cap as u128 {
        return Err(Error::EnumerationCap {
            count: total.to_string(),
            cap,
        });
    }

    let mut candidates: Vec<Vec<Rational>> = Vec::with_capacity(total as usize);
    if let Some(u) = grid_units {
        let mut raw = Vec::new();
        compositions(u, num, &mut Vec::with_capacity(num), &mut raw);
        candidates.extend(
            raw.into_iter()
                .map(|c| c.into_iter().map(|k| from_usize(k) * grid_step).collect()),
        );
    }
    for free in 0..num {
        let others: Vec<usize> = (0..num).filter(|&l| l != free).collect();
        let mut idx = vec![0usize; others.len()];
        loop {
            let mut split = vec![Rational::zero(); num];
            let mut used = Rational::zero();
            for (slot, &l) in others.iter().enumerate() {
                split[l] = corner_values[l][idx[slot]].clone();
                used += &split[l];
            }
            let rest = cache - used;
            if !rest.is_negative() {
                split[free] = rest;
                candidates.push(split);
            }
            // odometer over corner indices of the other libraries
            let mut pos = others.len();
            let mut done = true;
            while pos > 0 {
                pos -= 1;
                idx[pos] += 1;
                if idx[pos] < corner_values[others[pos]].len() {
                    done = false;
                    break;
                }
                idx[pos] = 0;
            }
            if done {
                break;
            }
        }
    }

    let count = candidates.len();
    let best = candidates
        .into_par_iter()
        .map(|split| {
            let rate = sharing_rate(config, &split, tradeoffs);
            (rate, split)
        })
        .min_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)))
        .expect("the all-in-one-library split is always a candidate");
    Ok(BruteForceResult {
        allocation: Allocation::new(best.1),
        rate: best.0,
        candidates: count,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepSample {
    #[serde(with = "serde_str")]
    pub lambda: Rational,
    #[serde(with = "serde_str")]
    pub rate: Rational,
}

/// `rate = intercept + slope·λ` on `[start, end]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SweepSegment {
    #[serde(with = "serde_str")]
    pub start: Rational,
    #[serde(with = "serde_str")]
    pub end: Rational,
    #[serde(with = "serde_str")]
    pub intercept: Rational,
    #[serde(with = "serde_str")]
    pub slope: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LambdaSweep {
    pub samples: Vec<SweepSample>,
    #[serde(with = "serde_str_vec")]
    pub breakpoints: Vec<Rational>,
    pub segments: Vec<SweepSegment>,
    pub minimum: SweepSample,
    pub tradeoffs: Vec<String>,
}

/// Rate of the two-library split `(λM, (1−λ)M)` as a function of `λ ∈ [0, 1]`.
///
/// Samples a uniform grid of `num_samples` intervals merged with every λ at
/// which either library crosses a breakpoint, and reports the composite
/// curve's segments in exact arithmetic.
pub fn lambda_sweep(
    config: &NetworkConfig,
    tradeoffs: &[PiecewiseLinearTradeoff],
    num_samples: usize,
) -> Result<LambdaSweep> {
    if config.num_libraries() != 2 {
        return Err(Error::WrongLibraryCount {
            expected: 2,
            found: config.num_libraries(),
        });
    }
    check_tradeoffs(config, tradeoffs)?;
    let cache = &config.cache_size;
    let one = int(1);
    let rate_at = |lambda: &Rational| -> Rational {
        let split = [lambda * cache, (&one - lambda) * cache];
        sharing_rate(config, &split, tradeoffs)
    };

    let mut knots: Vec<Rational> = Vec::new();
    if cache.is_positive() {
        for b in tradeoffs[0].breakpoints() {
            knots.push(b * config.alpha(0) / cache);
        }
        for b in tradeoffs[1].breakpoints() {
            knots.push(&one - b * config.alpha(1) / cache);
        }
    }
    knots.retain(|k| k.is_positive() && *k < one);
    knots.sort();
    knots.dedup();
    let breakpoints = knots.clone();

    let mut edges = Vec::with_capacity(knots.len() + 2);
    edges.push(Rational::zero());
    edges.extend(knots);
    edges.push(one.clone());

    let mut segments: Vec<SweepSegment> = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let (ra, rb) = (rate_at(a), rate_at(b));
        let slope = (&rb - &ra) / (b - a);
        let intercept = &ra - &slope * a;
        match segments.last_mut() {
            Some(prev) if prev.slope == slope && prev.intercept == intercept => {
                prev.end = b.clone();
            }
            _ => segments.push(SweepSegment {
                start: a.clone(),
                end: b.clone(),
                intercept,
                slope,
            }),
        }
    }
    // only slope changes count as breakpoints of the composite curve
    let breakpoints: Vec<Rational> = breakpoints
        .into_iter()
        .filter(|k| segments.iter().any(|s| s.start == *k))
        .collect();

    let mut lambdas: Vec<Rational> = (0..=num_samples)
        .map(|j| Rational::new(j.into(), num_samples.max(1).into()))
        .collect();
    lambdas.extend(edges.iter().cloned());
    lambdas.sort();
    lambdas.dedup();
    let samples: Vec<SweepSample> = lambdas
        .into_iter()
        .map(|lambda| {
            let rate = rate_at(&lambda);
            SweepSample { lambda, rate }
        })
        .collect();

    let minimum = edges
        .iter()
        .map(|l| SweepSample {
            lambda: l.clone(),
            rate: rate_at(l),
        })
        .min_by(|a, b| a.rate.cmp(&b.rate).then_with(|| a.lambda.cmp(&b.lambda)))
        .expect("edges are non-empty");

    Ok(LambdaSweep {
        samples,
        breakpoints,
        segments,
        minimum,
        tradeoffs: tradeoffs.iter().map(|t| t.label().to_owned()).collect(),
    })
}

/// Both sides of the equal-file-count optimality identity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EqualNCertificate {
    /// `R(M)` of the shared single-library tradeoff; the converse side.
    #[serde(with = "serde_str")]
    pub single_library_rate: Rational,
    /// Memory-sharing rate of the proportional split; the achievable side.
    #[serde(with = "serde_str")]
    pub proportional_rate: Rational,
    #[serde(with = "serde_str")]
    pub greedy_rate: Rational,
    pub tradeoff: String,
    pub holds: bool,
}

/// Certifies that, with equal file counts and an exact shared tradeoff, the
/// proportional split attains the converse `R(M)` and the greedy split
/// matches it.
pub fn certify_equal_n_optimality(
    config: &NetworkConfig,
    tradeoffs: &[PiecewiseLinearTradeoff],
) -> Result<EqualNCertificate> {
    check_tradeoffs(config, tradeoffs)?;
    if !config.has_equal_file_counts() {
        return Err(Error::UnequalFileCounts);
    }
    let first = &tradeoffs[0];
    if let Some(t) = tradeoffs.iter().find(|t| t.kind() != TradeoffKind::Exact) {
        return Err(Error::NotCertifiable(format!("{} is not exact", t.label())));
    }
    if tradeoffs.iter().any(|t| t.corners() != first.corners()) {
        return Err(Error::NotCertifiable(
            "libraries use different tradeoffs".into(),
        ));
    }
    let single_library_rate = first.evaluate(&config.cache_size)?;
    let proportional_rate =
        memory_sharing_rate(config, &proportional_allocation(config), tradeoffs)?;
    let greedy_rate = greedy_allocate(config, tradeoffs)?.rate;
    let holds = single_library_rate == proportional_rate && proportional_rate == greedy_rate;
    Ok(EqualNCertificate {
        single_library_rate,
        proportional_rate,
        greedy_rate,
        tradeoff: first.label().to_owned(),
        holds,
    })
}
