//! Single-library memory-rate tradeoffs as exact convex piecewise-linear curves.
//!
//! A tradeoff for `N` files is stored in segment form: breakpoints
//! `0 = θ_0 < θ_1 < … < θ_r = N`, positive slopes `γ_0 > … > γ_{r−1}` and
//! intercepts `ζ_i`, so that on `[θ_i, θ_{i+1})` the rate is `ζ_i − γ_i·M`.
//! The sentinel conventions `γ_{−1} = ∞` and `γ_r = 0` are expressed through
//! [`PiecewiseLinearTradeoff::left_slope`] and
//! [`PiecewiseLinearTradeoff::right_slope`].

use std::fmt;
use std::str::FromStr;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{format_rational, from_usize, int, parse_rational, rat, Rational};

/// Whether a tradeoff is known to equal the optimal curve or is only an
/// achievable upper bound on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TradeoffKind {
    Exact,
    AchievableBased,
}

impl fmt::Display for TradeoffKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TradeoffKind::Exact => "exact",
            TradeoffKind::AchievableBased => "achievable-based",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CornerPoint {
    pub memory: Rational,
    pub rate: Rational,
}

impl CornerPoint {
    pub fn new(memory: Rational, rate: Rational) -> Self {
        Self { memory, rate }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiecewiseLinearTradeoff {
    num_files: usize,
    breakpoints: Vec<Rational>,
    slopes: Vec<Rational>,
    intercepts: Vec<Rational>,
    kind: TradeoffKind,
    label: String,
}

impl PiecewiseLinearTradeoff {
    /// Builds the curve through `corners`, which must already be the vertices
    /// of a convex decreasing curve from `(0, ζ_0)` to `(N, 0)`.
    pub fn from_corners(
        num_files: usize,
        corners: &[CornerPoint],
        kind: TradeoffKind,
        label: impl Into<String>,
    ) -> Result<Self> {
        let invalid = |msg: String| Err(Error::InvalidTradeoff(msg));
        if num_files == 0 {
            return invalid("num_files must be positive".into());
        }
        if corners.len() < 2 {
            return invalid("need at least two corner points".into());
        }
        let n = from_usize(num_files);
        let first = &corners[0];
        let last = &corners[corners.len() - 1];
        if !first.memory.is_zero() {
            return invalid("first corner must have memory 0".into());
        }
        if last.memory != n || !last.rate.is_zero() {
            return invalid(format!("last corner must be ({num_files}, 0)"));
        }
        if first.rate > n {
            return invalid(format!(
                "rate at zero memory {} exceeds N = {num_files}",
                format_rational(&first.rate)
            ));
        }
        let mut slopes = Vec::with_capacity(corners.len() - 1);
        let mut intercepts = Vec::with_capacity(corners.len() - 1);
        for w in corners.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if b.memory <= a.memory {
                return invalid(format!(
                    "corner memories must strictly increase at {}",
                    format_rational(&b.memory)
                ));
            }
            let gamma = (&a.rate - &b.rate) / (&b.memory - &a.memory);
            if !gamma.is_positive() {
                return invalid(format!(
                    "segment starting at memory {} is not strictly decreasing",
                    format_rational(&a.memory)
                ));
            }
            if let Some(prev) = slopes.last() {
                if &gamma >= prev {
                    return invalid(format!(
                        "convexity fails at memory {}",
                        format_rational(&a.memory)
                    ));
                }
            }
            intercepts.push(&a.rate + &gamma * &a.memory);
            slopes.push(gamma);
        }
        Ok(Self {
            num_files,
            breakpoints: corners.iter().map(|c| c.memory.clone()).collect(),
            slopes,
            intercepts,
            kind,
            label: label.into(),
        })
    }

    pub fn num_files(&self) -> usize {
        self.num_files
    }

    /// Number of linear segments `r`.
    pub fn num_segments(&self) -> usize {
        self.slopes.len()
    }

    /// `θ_0 … θ_r`.
    pub fn breakpoints(&self) -> &[Rational] {
        &self.breakpoints
    }

    /// `γ_0 … γ_{r−1}` as positive magnitudes.
    pub fn slopes(&self) -> &[Rational] {
        &self.slopes
    }

    pub fn intercepts(&self) -> &[Rational] {
        &self.intercepts
    }

    pub fn kind(&self) -> TradeoffKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, kind: TradeoffKind, label: impl Into<String>) -> Self {
        self.kind = kind;
        self.label = label.into();
        self
    }

    /// `γ_i`, or zero for `i ≥ r`.
    pub fn right_slope(&self, segment: usize) -> Rational {
        self.slopes
            .get(segment)
            .cloned()
            .unwrap_or_else(Rational::zero)
    }

    /// `γ_{i−1}`; `None` stands for `+∞` at `i = 0`.
    pub fn left_slope(&self, segment: usize) -> Option<Rational> {
        segment.checked_sub(1).map(|i| self.right_slope(i))
    }

    /// Index `i` with `θ_i ≤ memory < θ_{i+1}`, or `r` when `memory ≥ N`.
    pub fn segment_index(&self, memory: &Rational) -> usize {
        let r = self.num_segments();
        // breakpoints[1..=r]: first one strictly greater than memory
        self.breakpoints[1..]
            .partition_point(|b| b <= memory)
            .min(r)
    }

    pub fn corners(&self) -> Vec<CornerPoint> {
        self.breakpoints
            .iter()
            .map(|m| CornerPoint::new(m.clone(), self.value_at(m)))
            .collect()
    }

    fn value_at(&self, memory: &Rational) -> Rational {
        let i = self.segment_index(memory);
        if i >= self.num_segments() {
            return Rational::zero();
        }
        &self.intercepts[i] - &self.slopes[i] * memory
    }

    /// Rate at `memory`; zero at and beyond `N`.
    pub fn evaluate(&self, memory: &Rational) -> Result<Rational> {
        if memory.is_negative() {
            return Err(Error::NegativeMemory(format_rational(memory)));
        }
        Ok(self.value_at(memory))
    }

    pub fn to_json(&self) -> String {
        let pairs: Vec<[String; 2]> = self
            .corners()
            .iter()
            .map(|c| [format_rational(&c.memory), format_rational(&c.rate)])
            .collect();
        serde_json::to_string(&pairs).expect("corner list serializes")
    }

    /// Loads a corner list `[["0","2"],["1/2","1"],…]`; the segment form is
    /// rebuilt and revalidated. `N` is the memory of the final corner.
    pub fn from_json(text: &str, kind: TradeoffKind, label: impl Into<String>) -> Result<Self> {
        let pairs: Vec<[String; 2]> = serde_json::from_str(text)?;
        let corners = pairs
            .iter()
            .map(|[m, r]| Ok(CornerPoint::new(parse_rational(m)?, parse_rational(r)?)))
            .collect::<Result<Vec<_>>>()?;
        let last = corners
            .last()
            .ok_or_else(|| Error::InvalidTradeoff("empty corner list".into()))?;
        if !last.memory.is_integer() || last.memory.is_negative() || last.memory > int(1 << 20) {
            return Err(Error::InvalidTradeoff(
                "last corner memory must be the file count N".into(),
            ));
        }
        let n: usize = last.memory.to_integer().try_into().expect("bounded above");
        Self::from_corners(n, &corners, kind, label)
    }
}

/// Lower convex envelope of `points` for a library of `num_files` files.
///
/// The point set must contain memory 0 and the point `(N, 0)`; memories must
/// be distinct and lie in `[0, N]`. Collinear interior points are dropped.
pub fn lower_convex_envelope(
    points: &[CornerPoint],
    num_files: usize,
) -> Result<PiecewiseLinearTradeoff> {
    let n = from_usize(num_files);
    let mut sorted: Vec<&CornerPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.memory.cmp(&b.memory));
    for w in sorted.windows(2) {
        if w[0].memory == w[1].memory {
            return Err(Error::InvalidTradeoff(format!(
                "duplicate memory {}",
                format_rational(&w[0].memory)
            )));
        }
    }
    if let Some(p) = sorted
        .iter()
        .find(|p| p.memory.is_negative() || p.memory > n || p.rate.is_negative())
    {
        return Err(Error::InvalidTradeoff(format!(
            "point ({}, {}) outside [0, {num_files}] × [0, ∞)",
            format_rational(&p.memory),
            format_rational(&p.rate)
        )));
    }
    if !sorted.first().is_some_and(|p| p.memory.is_zero()) {
        return Err(Error::InvalidTradeoff(
            "missing anchor point at memory 0".into(),
        ));
    }
    if !sorted
        .last()
        .is_some_and(|p| p.memory == n && p.rate.is_zero())
    {
        return Err(Error::InvalidTradeoff(format!(
            "missing anchor point ({num_files}, 0)"
        )));
    }

    let mut hull: Vec<&CornerPoint> = Vec::with_capacity(sorted.len());
    for p in sorted {
        while hull.len() >= 2 {
            let a = hull[hull.len() - 2];
            let b = hull[hull.len() - 1];
            let cross = (&b.memory - &a.memory) * (&p.rate - &a.rate)
                - (&b.rate - &a.rate) * (&p.memory - &a.memory);
            if cross.is_positive() {
                break;
            }
            hull.pop();
        }
        hull.push(p);
    }
    let corners: Vec<CornerPoint> = hull.into_iter().cloned().collect();
    PiecewiseLinearTradeoff::from_corners(
        num_files,
        &corners,
        TradeoffKind::AchievableBased,
        format!("envelope(N={num_files})"),
    )
}

/// Corner points of the centralized coded caching scheme for `N` files and
/// `K` users: `(0, min(N, K))` and `(tN/K, (K−t)/(1+t))` for `t = 1..=K`.
pub fn centralized_scheme_corners(num_files: usize, num_users: usize) -> Vec<CornerPoint> {
    let n = num_files as i64;
    let k = num_users as i64;
    let mut pts = vec![CornerPoint::new(int(0), int(n.min(k)))];
    pts.extend((1..=k).map(|t| CornerPoint::new(rat(t * n, k), rat(k - t, 1 + t))));
    pts
}

/// Envelope of [`centralized_scheme_corners`]; labeled achievable-based.
pub fn centralized_scheme(num_files: usize, num_users: usize) -> Result<PiecewiseLinearTradeoff> {
    if num_files == 0 || num_users == 0 {
        return Err(Error::InvalidTradeoff("N and K must be positive".into()));
    }
    Ok(
        lower_convex_envelope(&centralized_scheme_corners(num_files, num_users), num_files)?
            .with_label(
                TradeoffKind::AchievableBased,
                format!("centralized-scheme(N={num_files},K={num_users})"),
            ),
    )
}

/// The optimal tradeoff for two files and two users:
/// `(0,2) – (1/2,1) – (1,1/2) – (2,0)`.
pub fn exact_two_by_two() -> PiecewiseLinearTradeoff {
    let corners = [
        CornerPoint::new(int(0), int(2)),
        CornerPoint::new(rat(1, 2), int(1)),
        CornerPoint::new(int(1), rat(1, 2)),
        CornerPoint::new(int(2), int(0)),
    ];
    PiecewiseLinearTradeoff::from_corners(2, &corners, TradeoffKind::Exact, "exact(N=2,K=2)")
        .expect("hard-coded corners are convex")
}

/// `max_{s ∈ [min(N,K)]} s − s·M/⌊N/s⌋`.
pub fn cut_set_bound(num_files: usize, num_users: usize, memory: &Rational) -> Result<Rational> {
    if memory.is_negative() || *memory > from_usize(num_files) {
        return Err(Error::MemoryOutOfRange {
            memory: format_rational(memory),
            num_files,
        });
    }
    Ok((1..=num_files.min(num_users))
        .map(|s| {
            let s_q = from_usize(s);
            &s_q - &s_q * memory / from_usize(num_files / s)
        })
        .max()
        .unwrap_or_else(Rational::zero))
}

/// How the tradeoff for a library is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TradeoffSource {
    /// Centralized scheme envelope.
    Scheme,
    /// The optimal curve for `N = K = 2`.
    Exact2x2,
    /// The optimal curve when one is known (`N = K = 2`, `N = 1`, `K = 1`),
    /// otherwise the scheme envelope.
    Auto,
}

impl FromStr for TradeoffSource {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "scheme" => Ok(Self::Scheme),
            "exact2x2" => Ok(Self::Exact2x2),
            "auto" => Ok(Self::Auto),
            other => Err(format!(
                "unknown tradeoff kind {other:?} (scheme, exact2x2, auto)"
            )),
        }
    }
}

impl fmt::Display for TradeoffSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Scheme => "scheme",
            Self::Exact2x2 => "exact2x2",
            Self::Auto => "auto",
        })
    }
}

impl TradeoffSource {
    pub fn build(self, num_files: usize, num_users: usize) -> Result<PiecewiseLinearTradeoff> {
        match self {
            Self::Scheme => centralized_scheme(num_files, num_users),
            Self::Exact2x2 if num_files == 2 && num_users == 2 => Ok(exact_two_by_two()),
            Self::Exact2x2 => Err(Error::UnsupportedKind {
                kind: self.to_string(),
                num_files,
                num_users,
            }),
            Self::Auto if num_files == 2 && num_users == 2 => Ok(exact_two_by_two()),
            // a single file or a single user: the scheme meets the cut-set bound
            Self::Auto if num_files == 1 || num_users == 1 => {
                Ok(centralized_scheme(num_files, num_users)?.with_label(
                    TradeoffKind::Exact,
                    format!("exact(N={num_files},K={num_users})"),
                ))
            }
            Self::Auto => centralized_scheme(num_files, num_users),
        }
    }
}
