//! Bit-exact simulation of memory-sharing across libraries.
//!
//! Each library runs the centralized coded caching scheme inside its own cache
//! segment. At an integer `t = K·m/N` every file is cut into `C(K,t)` subfiles
//! indexed by `t`-subsets of users, user `k` stores the subfiles whose subset
//! contains `k`, and the server broadcasts one XOR per `(t+1)`-subset. A cache
//! share between two corners of the library's envelope splits every file in the
//! interpolation proportions and runs both corners side by side. User caches
//! and the broadcast are the concatenations of the per-library pieces, so
//! library `ℓ`'s bits influence only segment `ℓ` and payload `X^{(ℓ)}`.
//!
//! Decoding reads only the user's cache, the broadcast and public metadata (the
//! plan and the demand vector); [`verify_all`] compares the result with the
//! stored files for every demand vector.

use std::collections::HashMap;

use bitvec::prelude::*;
use itertools::Itertools;
use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::allocation::{memory_sharing_rate, Allocation};
use crate::converse::ConcatenatedLibrary;
use crate::error::{Error, Result};
use crate::model::{DemandVector, LibrarySpec, NetworkConfig, DEFAULT_DEMAND_CAP};
use crate::rational::{
    binomial, format_rational, from_usize, lcm_of_denominators, serde_str, Rational,
};
use crate::tradeoff::{centralized_scheme, PiecewiseLinearTradeoff};

pub type Bits = BitVec<u8, Msb0>;

/// Subsets of users are bitmasks.
pub const MAX_USERS: usize = 64;

/// Largest `F` chosen automatically.
pub const DEFAULT_MAX_BASE_SIZE: u64 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimOptions {
    /// Explicit base size `F` in bits; must be a multiple of the required size.
    pub base_size: Option<u64>,
    /// Budget for an automatically selected `F`.
    pub max_base_size: u64,
    pub demand_cap: u64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            base_size: None,
            max_base_size: DEFAULT_MAX_BASE_SIZE,
            demand_cap: DEFAULT_DEMAND_CAP,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PartSummary {
    pub t: usize,
    /// Fraction of every file run at this corner.
    #[serde(with = "serde_str")]
    pub weight: Rational,
    pub subfile_bits: u64,
}

#[derive(Clone, Debug)]
struct Part {
    t: usize,
    weight: Rational,
    subfile_bits: usize,
    /// `t`-subsets in lexicographic order; position = subfile index.
    subsets: Vec<u64>,
    subset_rank: HashMap<u64, usize>,
    /// `(t+1)`-subsets, one XOR each, when `0 < t < K`.
    multicast: Vec<u64>,
    multicast_rank: HashMap<u64, usize>,
    /// Per user: rank of a cached subset among those containing the user.
    user_rank: Vec<HashMap<u64, usize>>,
    cached_per_file: usize,
}

impl Part {
    fn new(t: usize, weight: Rational, subfile_bits: usize, num_users: usize) -> Self {
        let subsets = subsets_of_size(num_users, t);
        let multicast = if t > 0 && t < num_users {
            subsets_of_size(num_users, t + 1)
        } else {
            Vec::new()
        };
        let user_rank: Vec<HashMap<u64, usize>> = (0..num_users)
            .map(|k| {
                subsets
                    .iter()
                    .filter(|&&s| s & (1 << k) != 0)
                    .enumerate()
                    .map(|(i, &s)| (s, i))
                    .collect()
            })
            .collect();
        let cached_per_file = user_rank.first().map_or(0, HashMap::len);
        Self {
            t,
            weight,
            subfile_bits,
            subset_rank: rank_map(&subsets),
            multicast_rank: rank_map(&multicast),
            subsets,
            multicast,
            user_rank,
            cached_per_file,
        }
    }

    fn file_bits(&self) -> usize {
        self.subsets.len() * self.subfile_bits
    }

    fn cache_bits(&self, num_files: usize) -> usize {
        num_files * self.cached_per_file * self.subfile_bits
    }
}

fn subsets_of_size(n: usize, size: usize) -> Vec<u64> {
    (0..n)
        .combinations(size)
        .map(|c| c.iter().fold(0u64, |m, &u| m | (1 << u)))
        .collect()
}

fn rank_map(subsets: &[u64]) -> HashMap<u64, usize> {
    subsets.iter().enumerate().map(|(i, &s)| (s, i)).collect()
}

fn members(mask: u64) -> impl Iterator<Item = usize> {
    (0..64).filter(move |u| mask & (1 << u) != 0)
}

/// How one library's files are cut, cached and delivered.
#[derive(Clone, Debug)]
pub struct LibraryPlan {
    pub num_files: usize,
    pub file_bits: usize,
    pub allocation: Rational,
    parts: Vec<Part>,
}

impl LibraryPlan {
    pub fn parts(&self) -> Vec<PartSummary> {
        self.parts
            .iter()
            .map(|p| PartSummary {
                t: p.t,
                weight: p.weight.clone(),
                subfile_bits: p.subfile_bits as u64,
            })
            .collect()
    }

    /// Bits of this library held by each user.
    pub fn cache_bits(&self) -> usize {
        self.parts
            .iter()
            .map(|p| p.cache_bits(self.num_files))
            .sum()
    }

    fn payload_bits(&self, part: &Part, requests: &[usize]) -> usize {
        if part.t == 0 {
            distinct_sorted(requests).len() * part.subfile_bits
        } else {
            part.multicast.len() * part.subfile_bits
        }
    }
}

fn distinct_sorted(requests: &[usize]) -> Vec<usize> {
    let mut v = requests.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

#[derive(Clone, Debug)]
pub struct SimPlan {
    /// `F` in bits.
    pub base_size: u64,
    pub num_users: usize,
    pub libraries: Vec<LibraryPlan>,
}

impl SimPlan {
    pub fn cache_bits(&self) -> usize {
        self.libraries.iter().map(LibraryPlan::cache_bits).sum()
    }

    fn check_demand(&self, demand: &DemandVector) -> Result<()> {
        if demand.demands.len() != self.libraries.len() {
            return Err(Error::DemandMismatch(format!(
                "{} library rows for {} libraries",
                demand.demands.len(),
                self.libraries.len()
            )));
        }
        for (l, (row, lib)) in demand.demands.iter().zip(&self.libraries).enumerate() {
            if row.len() != self.num_users {
                return Err(Error::DemandMismatch(format!(
                    "library {} row has {} entries for {} users",
                    l + 1,
                    row.len(),
                    self.num_users
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

/// `(t, weight)` pairs realizing `m = M_ℓ/α_ℓ` on the library's scheme envelope.
fn corner_parts(
    lib: &LibrarySpec,
    num_users: usize,
    allocation: &Rational,
) -> Result<Vec<(usize, Rational)>> {
    let envelope = centralized_scheme(lib.num_files, num_users)?;
    let m = allocation / &lib.alpha;
    let t_of = |theta: &Rational| {
        let t = theta * from_usize(num_users) / from_usize(lib.num_files);
        debug_assert!(t.is_integer(), "scheme corners sit at integer t");
        t.to_integer().to_usize().expect("t ≤ K")
    };
    let corners = envelope.corners();
    if let Some(c) = corners.iter().find(|c| c.memory == m) {
        return Ok(vec![(t_of(&c.memory), Rational::one())]);
    }
    let (lo, hi) = corners
        .iter()
        .tuple_windows()
        .find(|(a, b)| a.memory < m && m < b.memory)
        .expect("allocation lies within [0, N]");
    let w = (&m - &lo.memory) / (&hi.memory - &lo.memory);
    Ok(vec![
        (t_of(&lo.memory), Rational::one() - &w),
        (t_of(&hi.memory), w),
    ])
}

fn check_allocation(config: &NetworkConfig, alloc: &Allocation) -> Result<()> {
    if alloc.per_library.len() != config.num_libraries() {
        return Err(Error::AllocationMismatch(format!(
            "{} entries for {} libraries",
            alloc.per_library.len(),
            config.num_libraries()
        )));
    }
    for (l, (m, lib)) in alloc.per_library.iter().zip(&config.libraries).enumerate() {
        if m.is_negative() {
            return Err(Error::AllocationMismatch(format!(
                "library {} gets negative memory {}",
                l + 1,
                format_rational(m)
            )));
        }
        if *m > lib.content() {
            return Err(Error::AllocationExceedsContent {
                library: l + 1,
                allocated: format_rational(m),
                content: format_rational(&lib.content()),
            });
        }
    }
    if alloc.total() != config.cache_size {
        return Err(Error::AllocationMismatch(format!(
            "split sums to {}, cache size is {}",
            format_rational(&alloc.total()),
            format_rational(&config.cache_size)
        )));
    }
    Ok(())
}

/// Smallest `F` making every file, subfile and split an integer number of bits.
pub fn required_base_size(config: &NetworkConfig, alloc: &Allocation) -> Result<BigInt> {
    check_allocation(config, alloc)?;
    let mut quantities = Vec::new();
    for (lib, m) in config.libraries.iter().zip(&alloc.per_library) {
        quantities.push(lib.alpha.clone());
        for (t, w) in corner_parts(lib, config.num_users, m)? {
            let count = Rational::from_integer(binomial(config.num_users, t));
            quantities.push(w * &lib.alpha / count);
        }
    }
    Ok(lcm_of_denominators(&quantities))
}

/// Chooses `F` and lays out subfiles for every library.
pub fn plan(config: &NetworkConfig, alloc: &Allocation, options: &SimOptions) -> Result<SimPlan> {
    if config.num_users > MAX_USERS {
        return Err(Error::TooManyUsers {
            num_users: config.num_users,
            max: MAX_USERS,
        });
    }
    let required = required_base_size(config, alloc)?;
    let base_size = match options.base_size {
        Some(f) => {
            if f == 0 || !(BigInt::from(f) % &required).is_zero() {
                return Err(Error::Divisibility {
                    required: required.to_string(),
                    reason: format!("F = {f} is not a positive multiple"),
                });
            }
            f
        }
        None => match required.to_u64().filter(|&f| f <= options.max_base_size) {
            Some(f) => f,
            None => {
                return Err(Error::Divisibility {
                    required: required.to_string(),
                    reason: format!("exceeds the bit budget of {} bits", options.max_base_size),
                })
            }
        },
    };
    let f = Rational::from_integer(BigInt::from(base_size));
    let as_bits = |q: Rational| -> usize {
        debug_assert!(q.is_integer());
        q.to_integer().to_usize().expect("bit counts fit in memory")
    };

    let mut libraries = Vec::with_capacity(config.num_libraries());
    for (lib, m) in config.libraries.iter().zip(&alloc.per_library) {
        let parts = corner_parts(lib, config.num_users, m)?
            .into_iter()
            .map(|(t, w)| {
                let count = Rational::from_integer(binomial(config.num_users, t));
                let bits = as_bits(&w * &lib.alpha * &f / count);
                Part::new(t, w, bits, config.num_users)
            })
            .collect();
        libraries.push(LibraryPlan {
            num_files: lib.num_files,
            file_bits: as_bits(&lib.alpha * &f),
            allocation: m.clone(),
            parts,
        });
    }
    Ok(SimPlan {
        base_size,
        num_users: config.num_users,
        libraries,
    })
}

/// Pseudorandom file contents `W^{(ℓ)}_n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FileStore {
    pub base_size: u64,
    pub seed: u64,
    files: Vec<Vec<Bits>>,
}

impl FileStore {
    /// Files are drawn library by library, file by file, from one ChaCha8 stream.
    pub fn generate(plan: &SimPlan, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let files = plan
            .libraries
            .iter()
            .map(|lib| {
                (0..lib.num_files)
                    .map(|_| {
                        let mut bytes = vec![0u8; lib.file_bits.div_ceil(8)];
                        rng.fill_bytes(&mut bytes);
                        let mut bits = Bits::from_vec(bytes);
                        bits.truncate(lib.file_bits);
                        bits
                    })
                    .collect()
            })
            .collect();
        Self {
            base_size: plan.base_size,
            seed,
            files,
        }
    }

    /// File `n` (1-based) of library `library` (0-based).
    pub fn file(&self, library: usize, n: usize) -> &Bits {
        &self.files[library][n - 1]
    }

    pub fn file_mut(&mut self, library: usize, n: usize) -> &mut Bits {
        &mut self.files[library][n - 1]
    }

    pub fn libraries(&self) -> &[Vec<Bits>] {
        &self.files
    }
}

/// User caches `Z_k = [φ^{(1)}_k, …, φ^{(L)}_k]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlacementState {
    caches: Vec<Vec<Bits>>,
}

impl PlacementState {
    /// Segment of `library` (0-based) in the cache of `user` (0-based).
    pub fn segment(&self, user: usize, library: usize) -> &Bits {
        &self.caches[user][library]
    }

    pub fn user_cache_bits(&self, user: usize) -> usize {
        self.caches[user].iter().map(BitVec::len).sum()
    }

    pub fn caches(&self) -> &[Vec<Bits>] {
        &self.caches
    }
}

fn subfile<'a>(
    file: &'a Bits,
    part_offset: usize,
    part: &Part,
    subset: u64,
) -> &'a BitSlice<u8, Msb0> {
    let start = part_offset + part.subset_rank[&subset] * part.subfile_bits;
    &file[start..start + part.subfile_bits]
}

pub fn place(store: &FileStore, plan: &SimPlan) -> PlacementState {
    let caches = (0..plan.num_users)
        .map(|k| {
            plan.libraries
                .iter()
                .enumerate()
                .map(|(l, lib)| {
                    let mut segment = Bits::with_capacity(lib.cache_bits());
                    let mut offset = 0;
                    for part in &lib.parts {
                        for n in 1..=lib.num_files {
                            let file = store.file(l, n);
                            for &s in part.subsets.iter().filter(|&&s| s & (1 << k) != 0) {
                                segment.extend_from_bitslice(subfile(file, offset, part, s));
                            }
                        }
                        offset += part.file_bits();
                    }
                    segment
                })
                .collect()
        })
        .collect();
    PlacementState { caches }
}

/// Broadcast `[X^{(1)}, …, X^{(L)}]` for one demand vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeliveryTranscript {
    pub demand: DemandVector,
    pub payloads: Vec<Bits>,
    pub total_bits: usize,
}

pub fn deliver(
    store: &FileStore,
    plan: &SimPlan,
    demand: &DemandVector,
) -> Result<DeliveryTranscript> {
    plan.check_demand(demand)?;
    let payloads: Vec<Bits> = plan
        .libraries
        .iter()
        .enumerate()
        .map(|(l, lib)| {
            let requests = demand.library(l);
            let mut payload = Bits::new();
            let mut offset = 0;
            for part in &lib.parts {
                if part.t == 0 {
                    for n in distinct_sorted(requests) {
                        let file = store.file(l, n);
                        payload.extend_from_bitslice(&file[offset..offset + part.subfile_bits]);
                    }
                } else {
                    for &s in &part.multicast {
                        let mut acc = bitvec![u8, Msb0; 0; part.subfile_bits];
                        for k in members(s) {
                            let file = store.file(l, requests[k]);
                            acc ^= subfile(file, offset, part, s & !(1 << k));
                        }
                        payload.extend_from_bitslice(&acc);
                    }
                }
                offset += part.file_bits();
            }
            payload
        })
        .collect();
    let total_bits = payloads.iter().map(BitVec::len).sum();
    Ok(DeliveryTranscript {
        demand: demand.clone(),
        payloads,
        total_bits,
    })
}

/// Reconstructs `Ŵ^{(library)}_{d_user}` from the user's cache and the broadcast.
pub fn decode(
    plan: &SimPlan,
    placement: &PlacementState,
    transcript: &DeliveryTranscript,
    user: usize,
    library: usize,
) -> Bits {
    let lib = &plan.libraries[library];
    let requests = transcript.demand.library(library);
    let wanted = requests[user];
    let cache = placement.segment(user, library);
    let payload = &transcript.payloads[library];
    let mut out = Bits::with_capacity(lib.file_bits);

    let mut cache_offset = 0;
    let mut payload_offset = 0;
    for part in &lib.parts {
        let s = part.subfile_bits;
        let cached = |n: usize, subset: u64, holder: usize| -> &BitSlice<u8, Msb0> {
            let rank = part.user_rank[holder][&subset];
            let start = cache_offset + ((n - 1) * part.cached_per_file + rank) * s;
            &cache[start..start + s]
        };
        if part.t == 0 {
            let slot = distinct_sorted(requests)
                .iter()
                .position(|&n| n == wanted)
                .expect("requested file is broadcast");
            let start = payload_offset + slot * s;
            out.extend_from_bitslice(&payload[start..start + s]);
        } else {
            for &subset in &part.subsets {
                if subset & (1 << user) != 0 {
                    out.extend_from_bitslice(cached(wanted, subset, user));
                    continue;
                }
                let group = subset | (1 << user);
                let start = payload_offset + part.multicast_rank[&group] * s;
                let mut acc: Bits = payload[start..start + s].to_bitvec();
                for other in members(group).filter(|&u| u != user) {
                    acc ^= cached(requests[other], group & !(1 << other), user);
                }
                out.extend_from_bitslice(&acc);
            }
        }
        cache_offset += part.cache_bits(lib.num_files);
        payload_offset += lib.payload_bits(part, requests);
    }
    out
}

/// Delivers one demand and checks every user's reconstruction of every
/// library; returns the per-library payload sizes.
pub fn verify_demand(
    store: &FileStore,
    plan: &SimPlan,
    placement: &PlacementState,
    demand_index: usize,
    demand: &DemandVector,
) -> Result<Vec<usize>> {
    let transcript = deliver(store, plan, demand)?;
    for k in 0..plan.num_users {
        for l in 0..plan.libraries.len() {
            if decode(plan, placement, &transcript, k, l) != *store.file(l, demand.file(l, k)) {
                return Err(Error::DecodeMismatch {
                    demand_index,
                    demand: demand.demands.clone(),
                    user: k + 1,
                    library: l + 1,
                });
            }
        }
    }
    Ok(transcript.payloads.iter().map(BitVec::len).collect())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LibraryReport {
    pub library: usize,
    pub file_bits: u64,
    pub cache_bits: u64,
    pub max_payload_bits: u64,
    pub parts: Vec<PartSummary>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct VerificationReport {
    pub demands_checked: u64,
    pub errors_observed: u64,
    pub base_size: u64,
    pub seed: u64,
    pub allocation: Allocation,
    pub cache_bits: u64,
    pub max_transcript_bits: u64,
    /// Worst-case transmitted bits over `F`.
    #[serde(with = "serde_str")]
    pub measured_rate: Rational,
    /// `Σ α_ℓ R_ℓ(M_ℓ/α_ℓ)` on the scheme envelopes.
    #[serde(with = "serde_str")]
    pub formula_rate: Rational,
    pub libraries: Vec<LibraryReport>,
}

impl VerificationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// The tradeoffs the simulator realizes: each library's scheme envelope.
pub fn scheme_tradeoffs(config: &NetworkConfig) -> Result<Vec<PiecewiseLinearTradeoff>> {
    config
        .libraries
        .iter()
        .map(|l| centralized_scheme(l.num_files, config.num_users))
        .collect()
}

/// Everything needed to run deliveries for one configuration and split.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub plan: SimPlan,
    pub store: FileStore,
    pub placement: PlacementState,
}

impl Simulation {
    pub fn new(
        config: &NetworkConfig,
        alloc: &Allocation,
        options: &SimOptions,
        seed: u64,
    ) -> Result<Self> {
        let plan = plan(config, alloc, options)?;
        let store = FileStore::generate(&plan, seed);
        let placement = place(&store, &plan);
        Ok(Self {
            plan,
            store,
            placement,
        })
    }

    pub fn deliver(&self, demand: &DemandVector) -> Result<DeliveryTranscript> {
        deliver(&self.store, &self.plan, demand)
    }

    pub fn decode(&self, transcript: &DeliveryTranscript, user: usize, library: usize) -> Bits {
        decode(&self.plan, &self.placement, transcript, user, library)
    }
}

/// Places, then delivers and decodes every demand vector. Demands are checked
/// in parallel; on failure the lowest-indexed failing demand is reported.
pub fn verify_all(
    config: &NetworkConfig,
    alloc: &Allocation,
    options: &SimOptions,
    seed: u64,
) -> Result<VerificationReport> {
    let formula_rate = memory_sharing_rate(config, alloc, &scheme_tradeoffs(config)?)?;
    let sim = Simulation::new(config, alloc, options, seed)?;
    let demands: Vec<DemandVector> = config.enumerate_demands(options.demand_cap)?.collect();
    let results: Vec<Result<Vec<usize>>> = demands
        .par_iter()
        .enumerate()
        .map(|(i, d)| verify_demand(&sim.store, &sim.plan, &sim.placement, i, d))
        .collect();

    let mut max_payload = vec![0usize; config.num_libraries()];
    let mut max_total = 0usize;
    for r in results {
        let sizes = r?;
        for (m, s) in max_payload.iter_mut().zip(&sizes) {
            *m = (*m).max(*s);
        }
        max_total = max_total.max(sizes.iter().sum());
    }

    let plan = &sim.plan;
    Ok(VerificationReport {
        demands_checked: demands.len() as u64,
        errors_observed: 0,
        base_size: plan.base_size,
        seed,
        allocation: alloc.clone(),
        cache_bits: plan.cache_bits() as u64,
        max_transcript_bits: max_total as u64,
        measured_rate: from_usize(max_total) / Rational::from_integer(BigInt::from(plan.base_size)),
        formula_rate,
        libraries: plan
            .libraries
            .iter()
            .zip(&max_payload)
            .enumerate()
            .map(|(l, (lib, &m))| LibraryReport {
                library: l + 1,
                file_bits: lib.file_bits as u64,
                cache_bits: lib.cache_bits() as u64,
                max_payload_bits: m as u64,
                parts: lib.parts(),
            })
            .collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReductionReport {
    pub demand_prime: Vec<usize>,
    /// `d^{(ℓ)}_k = min(d'_k, N_ℓ)`, original library order.
    pub induced_demand: Vec<Vec<usize>>,
    /// Size of each user's requested concatenated file.
    pub concatenated_file_bits: Vec<u64>,
    pub transcript_bits: u64,
    pub cache_bits: u64,
    /// Reconstructions of libraries before `f(d'_k)`, decoded and dropped.
    pub dummy_decodes_discarded: u64,
}

/// The concatenated file `[W^{(f(n))}_n, …, W^{(L)}_n]` (libraries in
/// ascending file-count order).
pub fn concatenated_file(
    store: &FileStore,
    target: &ConcatenatedLibrary,
    n: usize,
) -> Result<Bits> {
    let level = target.level(n)?;
    let mut out = Bits::new();
    for &l in &target.order[level - 1..] {
        out.extend_from_bitslice(store.file(l - 1, n));
    }
    Ok(out)
}

/// Serves a demand `d'` of the concatenated library with the multi-library
/// scheme: every user decodes all libraries for the induced demand, keeps the
/// pieces of libraries `f(d'_k), …, L` and discards the rest.
pub fn reduction_demo(
    sim: &Simulation,
    target: &ConcatenatedLibrary,
    demand_prime: &[usize],
) -> Result<ReductionReport> {
    let plan = &sim.plan;
    if target.order.len() != plan.libraries.len()
        || target
            .order
            .iter()
            .zip(&target.sorted_file_counts)
            .any(|(&l, &n)| plan.libraries[l - 1].num_files != n)
    {
        return Err(Error::DemandMismatch(
            "concatenated library was built from a different configuration".into(),
        ));
    }
    if demand_prime.len() != plan.num_users {
        return Err(Error::DemandMismatch(format!(
            "{} requests for {} users",
            demand_prime.len(),
            plan.num_users
        )));
    }
    if let Some(&bad) = demand_prime
        .iter()
        .find(|&&d| d == 0 || d > target.num_files)
    {
        return Err(Error::DemandMismatch(format!(
            "request {bad} outside [1, {}]",
            target.num_files
        )));
    }

    let induced = DemandVector::new(
        plan.libraries
            .iter()
            .map(|lib| demand_prime.iter().map(|&d| d.min(lib.num_files)).collect())
            .collect(),
    );
    let transcript = sim.deliver(&induced)?;
    let mut file_bits = Vec::with_capacity(plan.num_users);
    let mut discarded = 0u64;
    for (k, &n) in demand_prime.iter().enumerate() {
        let level = target.level(n)?;
        let mut rebuilt = Bits::new();
        for (j, &l) in target.order.iter().enumerate() {
            let piece = sim.decode(&transcript, k, l - 1);
            if j + 1 < level {
                discarded += 1;
                continue;
            }
            if piece != *sim.store.file(l - 1, n) {
                return Err(Error::DecodeMismatch {
                    demand_index: 0,
                    demand: induced.demands.clone(),
                    user: k + 1,
                    library: l,
                });
            }
            rebuilt.extend_from_bitslice(&piece);
        }
        debug_assert_eq!(rebuilt, concatenated_file(&sim.store, target, n)?);
        file_bits.push(rebuilt.len() as u64);
    }
    Ok(ReductionReport {
        demand_prime: demand_prime.to_vec(),
        induced_demand: induced.demands,
        concatenated_file_bits: file_bits,
        transcript_bits: transcript.total_bits as u64,
        cache_bits: plan.cache_bits() as u64,
        dummy_decodes_discarded: discarded,
    })
}

/// Runs [`reduction_demo`] for every `d' ∈ [N_L]^K` in lexicographic order.
pub fn reduction_verify_all(
    sim: &Simulation,
    target: &ConcatenatedLibrary,
    cap: u64,
) -> Result<Vec<ReductionReport>> {
    let k = sim.plan.num_users;
    let count = num_traits::pow(num_bigint::BigUint::from(target.num_files), k);
    if count > num_bigint::BigUint::from(cap) {
        return Err(Error::EnumerationCap {
            count: count.to_string(),
            cap,
        });
    }
    (0..k)
        .map(|_| 1..=target.num_files)
        .multi_cartesian_product()
        .map(|d| reduction_demo(sim, target, &d))
        .collect()
}

// Binary dump: "MLCD", version byte, then three sections (files, caches,
// payloads). A section is a u32 group count followed by groups; a group is a
// u32 record count followed by records; a record is a u32 byte length, a u8
// count of zero pad bits at the end, and the bytes. Integers are big-endian.

pub const DUMP_MAGIC: &[u8; 4] = b"MLCD";
pub const DUMP_VERSION: u8 = 1;

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Dump {
    /// Per library, per file.
    pub files: Vec<Vec<Bits>>,
    /// Per user, per library segment.
    pub caches: Vec<Vec<Bits>>,
    /// Per transcript, per library payload.
    pub payloads: Vec<Vec<Bits>>,
}

impl Dump {
    pub fn new(
        store: &FileStore,
        placement: &PlacementState,
        transcripts: &[DeliveryTranscript],
    ) -> Self {
        Self {
            files: store.files.clone(),
            caches: placement.caches.clone(),
            payloads: transcripts.iter().map(|t| t.payloads.clone()).collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(DUMP_MAGIC);
        out.push(DUMP_VERSION);
        for section in [&self.files, &self.caches, &self.payloads] {
            out.extend_from_slice(&len_u32(section.len()).to_be_bytes());
            for group in section {
                out.extend_from_slice(&len_u32(group.len()).to_be_bytes());
                for bits in group {
                    let mut bits = bits.clone();
                    bits.set_uninitialized(false);
                    let pad = (8 - bits.len() % 8) % 8;
                    let bytes = bits.into_vec();
                    out.extend_from_slice(&len_u32(bytes.len()).to_be_bytes());
                    out.push(pad as u8);
                    out.extend_from_slice(&bytes);
                }
            }
        }
        out
    }
}

fn len_u32(n: usize) -> u32 {
    u32::try_from(n).expect("dump records are below 4 GiB")
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Dump(format!("truncated {what} at byte {}", self.pos)))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn record(&mut self) -> Result<Bits> {
        let len = self.u32("record length")?;
        let pad = self.take(1, "pad count")?[0] as usize;
        if pad > 7 || (len == 0 && pad != 0) {
            return Err(Error::Dump(format!(
                "invalid pad count {pad} for {len} bytes"
            )));
        }
        let bytes = self.take(len, "record")?;
        if let Some(&last) = bytes.last() {
            if last & ((1u8 << pad) - 1) != 0 {
                return Err(Error::Dump("nonzero pad bits".into()));
            }
        }
        let mut bits = Bits::from_slice(bytes);
        bits.truncate(len * 8 - pad);
        Ok(bits)
    }

    fn section(&mut self) -> Result<Vec<Vec<Bits>>> {
        let groups = self.u32("group count")?;
        let mut out = Vec::new();
        for _ in 0..groups {
            let records = self.u32("record count")?;
            let mut group = Vec::new();
            for _ in 0..records {
                group.push(self.record()?);
            }
            out.push(group);
        }
        Ok(out)
    }
}

pub fn decode_dump(data: &[u8]) -> Result<Dump> {
    let mut r = Reader { data, pos: 0 };
    if r.take(4, "magic")? != DUMP_MAGIC {
        return Err(Error::Dump("bad magic".into()));
    }
    let version = r.take(1, "version")?[0];
    if version != DUMP_VERSION {
        return Err(Error::Dump(format!("unsupported version {version}")));
    }
    let dump = Dump {
        files: r.section()?,
        caches: r.section()?,
        payloads: r.section()?,
    };
    if r.pos != data.len() {
        return Err(Error::Dump(format!(
            "{} trailing bytes",
            data.len() - r.pos
        )));
    }
    Ok(dump)
}
