//! Executable model of maximal information flow through attention layers.
//!
//! A sequence of 2D+1 positions holds "pieces" indexed 0..2D. Position 0
//! starts with piece 0 alone; position i ≥ 1 starts with pieces {i−1, i}
//! (each token shares one piece with its neighbor). One layer lets every
//! position absorb the full content of any position it currently shares a
//! piece with. Because each position's knowledge stays a contiguous piece
//! interval, the whole state is a pair of staircase arrays and a step is
//! O(positions). `min_layers(D)` is the first layer count at which
//! position 0 knows the last piece — a ceiling on what any real attention
//! pattern could achieve, hence a lower bound for actual transformers.

/// Knowledge state: per position, an inclusive interval [lo, hi] of piece
/// indices. Intervals stay contiguous under `step` (checked in tests).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowState {
    pub d: usize,
    /// Layers applied so far.
    pub t: usize,
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl FlowState {
    pub fn positions(&self) -> usize {
        self.lo.len()
    }

    pub fn interval(&self, i: usize) -> (usize, usize) {
        (self.lo[i], self.hi[i])
    }

    /// Longest interval, measured in pieces (hi − lo + 1).
    pub fn max_len(&self) -> usize {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| h - l + 1)
            .max()
            .unwrap()
    }
}

/// State before any layer runs: position 0 holds piece 0; position i ≥ 1
/// holds pieces i−1 and i.
pub fn initial_state(d: usize) -> FlowState {
    assert!(d >= 1, "need at least one retrieval step");
    let n = 2 * d + 1;
    let lo = (0..n).map(|i| i.saturating_sub(1)).collect();
    let hi = (0..n).collect();
    FlowState { d, t: 0, lo, hi }
}

/// One layer of maximal flow: simultaneously for every position i, the new
/// interval is the union of all previous intervals overlapping interval i
/// (including its own).
///
/// Both `lo` and `hi` are non-decreasing across positions, and remain so:
/// the overlap set of position i is then a contiguous index range
/// [a_i, b_i] with a_i = min{j : hi_j ≥ lo_i} and b_i = max{j : lo_j ≤ hi_i},
/// and both endpoints advance monotonically with i, so two pointers suffice.
pub fn step(state: &FlowState) -> FlowState {
    let n = state.positions();
    let (lo, hi) = (&state.lo, &state.hi);
    let mut new_lo = vec![0usize; n];
    let mut new_hi = vec![0usize; n];
    let mut a = 0usize;
    let mut b = 0usize;
    for i in 0..n {
        while hi[a] < lo[i] {
            a += 1;
        }
        if b < i {
            b = i;
        }
        while b + 1 < n && lo[b + 1] <= hi[i] {
            b += 1;
        }
        new_lo[i] = lo[a];
        new_hi[i] = hi[b];
    }
    debug_assert!(new_lo.windows(2).all(|w| w[0] <= w[1]));
    debug_assert!(new_hi.windows(2).all(|w| w[0] <= w[1]));
    FlowState {
        d: state.d,
        t: state.t + 1,
        lo: new_lo,
        hi: new_hi,
    }
}

/// Smallest layer count after which position 0 knows the final piece (2D),
/// found by direct iteration.
pub fn min_layers(d: usize) -> usize {
    let target = 2 * d;
    let mut state = initial_state(d);
    while state.hi[0] < target {
        state = step(&state);
    }
    state.t
}

/// Closed form for `min_layers`: smallest t with (3^t − 1)/2 ≥ 2D.
/// Cross-validated against iteration in tests and the acceptance suite.
pub fn min_layers_closed_form(d: u64) -> u32 {
    assert!(d >= 1);
    let mut t = 0u32;
    let mut pow3: u128 = 1;
    while (pow3 - 1) / 2 < 2 * d as u128 {
        pow3 *= 3;
        t += 1;
    }
    t
}

/// Smallest integer t with t ≥ log_3(2D), computed by exact integer
/// comparison of 3^t against 2D.
pub fn theorem1_bound(d: u64) -> u32 {
    assert!(d >= 1);
    let mut t = 0u32;
    let mut pow3: u128 = 1;
    while pow3 < 2 * d as u128 {
        pow3 *= 3;
        t += 1;
    }
    t
}

/// Rows of the `flow` subcommand table.
pub fn flow_table(d_max: u64) -> Vec<(u64, u32, u32)> {
    (1..=d_max)
        .map(|d| {
            let ml = if d <= 4096 {
                min_layers(d as usize) as u32
            } else {
                min_layers_closed_form(d)
            };
            (d, ml, theorem1_bound(d))
        })
        .collect()
}
