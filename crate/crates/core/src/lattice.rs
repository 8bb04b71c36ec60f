//! The lattice of physical states `(s_C, f_C, s_D, f_D)`.
//!
//! Layer `t` holds every state whose four counts sum to `t`; it has
//! `C(t+3, 3)` members. Within a layer, states are ordered
//! lexicographically on `(s_C, f_C, s_D)` with `f_D` implied, which gives a
//! closed-form rank built from two binomial columns.
//!
//! The same ordering indexes a tetrahedron `{s_C + f_C + s_D <= side}`, and
//! that tetrahedron is exactly layer `side` (the missing `f_D` absorbs the
//! slack). The sweep engines exploit this: one array of `C(T+3, 3)` slots
//! holds any layer `t <= T` at fixed positions, so layers can be updated in
//! place.

use crate::error::{Error, Result};

/// Observed success/failure counts on both arms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct PhysicalState {
    pub s_c: u32,
    pub f_c: u32,
    pub s_d: u32,
    pub f_d: u32,
}

impl PhysicalState {
    pub const ORIGIN: PhysicalState = PhysicalState::new(0, 0, 0, 0);

    pub const fn new(s_c: u32, f_c: u32, s_d: u32, f_d: u32) -> Self {
        Self { s_c, f_c, s_d, f_d }
    }

    /// Number of subjects already allocated.
    pub fn epoch(&self) -> u32 {
        self.s_c + self.f_c + self.s_d + self.f_d
    }

    /// Total observed successes over both arms.
    pub fn successes(&self) -> u32 {
        self.s_c + self.s_d
    }

    /// The state with arms C and D exchanged.
    pub fn mirror(&self) -> Self {
        Self::new(self.s_d, self.f_d, self.s_c, self.f_c)
    }

    pub fn is_mirror_fixed(&self) -> bool {
        self.s_c == self.s_d && self.f_c == self.f_d
    }

    /// Success on C, failure on C, success on D, failure on D.
    pub fn successors_unchecked(&self) -> [PhysicalState; 4] {
        let x = *self;
        [
            PhysicalState { s_c: x.s_c + 1, ..x },
            PhysicalState { f_c: x.f_c + 1, ..x },
            PhysicalState { s_d: x.s_d + 1, ..x },
            PhysicalState { f_d: x.f_d + 1, ..x },
        ]
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.s_c, self.f_c, self.s_d, self.f_d]
    }
}

impl std::fmt::Display for PhysicalState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{},{})", self.s_c, self.f_c, self.s_d, self.f_d)
    }
}

impl std::str::FromStr for PhysicalState {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::domain(format!("state needs four comma-separated counts, got {s:?}")));
        }
        let mut v = [0u32; 4];
        for (slot, p) in v.iter_mut().zip(&parts) {
            *slot = p.parse().map_err(|_| Error::domain(format!("invalid count {p:?} in state {s:?}")))?;
        }
        Ok(PhysicalState::new(v[0], v[1], v[2], v[3]))
    }
}

/// Exact `C(n, k)` in `u64`, `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 1..=k {
        // acc * (n - k + i) / i stays integral at every step
        let num = acc.checked_mul(n - k + i)?;
        acc = num / i;
    }
    Some(acc)
}

/// Rank/unrank and traversal over the layers `0..=T` of the state lattice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerIndexer {
    horizon: u32,
    // c2[n] = C(n, 2), c3[n] = C(n, 3) for n <= T + 3
    c2: Vec<u64>,
    c3: Vec<u64>,
    total: u64,
}

impl LayerIndexer {
    pub fn new(horizon: u32) -> Result<Self> {
        let top = horizon as u64 + 3;
        let mut c2 = Vec::with_capacity(top as usize + 1);
        let mut c3 = Vec::with_capacity(top as usize + 1);
        for n in 0..=top {
            c2.push(binomial(n, 2).ok_or_else(|| Error::domain("binomial overflow"))?);
            c3.push(binomial(n, 3).ok_or_else(|| Error::domain("binomial overflow"))?);
        }
        let total = binomial(horizon as u64 + 4, 4)
            .ok_or_else(|| Error::domain(format!("state count overflows u64 at T={horizon}")))?;
        Ok(Self { horizon, c2, c3, total })
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    fn check_epoch(&self, t: u32) -> Result<()> {
        if t > self.horizon {
            return Err(Error::domain(format!("epoch {t} exceeds horizon {}", self.horizon)));
        }
        Ok(())
    }

    /// Number of states in layer `t`, `C(t+3, 3)`.
    pub fn layer_size(&self, t: u32) -> Result<u64> {
        self.check_epoch(t)?;
        Ok(self.c3[t as usize + 3])
    }

    /// Number of states over all layers `0..=T`, `C(T+4, 4)`.
    pub fn total_states(&self) -> u64 {
        self.total
    }

    /// Index of `x` within its layer.
    pub fn rank(&self, x: &PhysicalState) -> Result<u64> {
        let t = x.epoch();
        self.check_epoch(t)?;
        Ok(self.rank_in(t, x.s_c, x.f_c, x.s_d))
    }

    #[inline]
    pub(crate) fn rank_in(&self, t: u32, s_c: u32, f_c: u32, s_d: u32) -> u64 {
        let (t, a, b) = (t as usize, s_c as usize, f_c as usize);
        let m = t - a;
        (self.c3[t + 3] - self.c3[m + 3]) + (self.c2[m + 2] - self.c2[m - b + 2]) + s_d as u64
    }

    pub fn unrank(&self, t: u32, index: u64) -> Result<PhysicalState> {
        let size = self.layer_size(t)?;
        if index >= size {
            return Err(Error::domain(format!("index {index} out of range for layer {t} of size {size}")));
        }
        let tu = t as usize;
        // largest a with slab_start(a) <= index; slab_start is increasing in a
        let slab_start = |a: usize| self.c3[tu + 3] - self.c3[tu - a + 3];
        let a = partition_point(tu + 1, |a| slab_start(a) <= index) - 1;
        let rest = index - slab_start(a);
        let m = tu - a;
        let row_start = |b: usize| self.c2[m + 2] - self.c2[m - b + 2];
        let b = partition_point(m + 1, |b| row_start(b) <= rest) - 1;
        let c = (rest - row_start(b)) as u32;
        let (a, b) = (a as u32, b as u32);
        Ok(PhysicalState::new(a, b, c, t - a - b - c))
    }

    /// The four successors of `x`; refused on the terminal layer.
    pub fn successors(&self, x: &PhysicalState) -> Result<[PhysicalState; 4]> {
        let t = x.epoch();
        if t >= self.horizon {
            return Err(Error::domain(format!("state {x} at epoch {t} is terminal for horizon {}", self.horizon)));
        }
        Ok(x.successors_unchecked())
    }

    /// All states of layer `t` in rank order.
    pub fn layer(&self, t: u32) -> Result<impl Iterator<Item = PhysicalState>> {
        self.check_epoch(t)?;
        Ok(layer_states(t))
    }
}

/// States of layer `t` in rank order.
pub fn layer_states(t: u32) -> impl Iterator<Item = PhysicalState> {
    (0..=t).flat_map(move |a| {
        (0..=t - a).flat_map(move |b| (0..=t - a - b).map(move |c| PhysicalState::new(a, b, c, t - a - b - c)))
    })
}

// first index in 0..n for which pred is false, pred monotone true-then-false
fn partition_point(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0usize, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Slot geometry of the tetrahedron `{a + b + c <= side}` in lexicographic
/// order. Used both as the in-place value store (side `T`) and as the
/// rank layout of a single layer (side `t`).
#[derive(Debug, Clone)]
pub(crate) struct Tetra {
    side: usize,
    slab_start: Vec<usize>,
}

impl Tetra {
    pub(crate) fn new(side: u32) -> Self {
        let side = side as usize;
        let mut slab_start = Vec::with_capacity(side + 2);
        let mut acc = 0usize;
        for a in 0..=side {
            slab_start.push(acc);
            let m = side - a;
            acc += (m + 1) * (m + 2) / 2;
        }
        slab_start.push(acc);
        Self { side, slab_start }
    }

    pub(crate) fn len(&self) -> usize {
        self.slab_start[self.side + 1]
    }

    /// Offset of row `(a, b)`; the row holds `c = 0..=side-a-b`.
    #[inline]
    pub(crate) fn row(&self, a: usize, b: usize) -> usize {
        let m = self.side - a;
        self.slab_start[a] + b * (m + 1) - b * b.saturating_sub(1) / 2
    }

    #[inline]
    pub(crate) fn slab(&self, a: usize) -> usize {
        self.slab_start[a]
    }

    #[inline]
    pub(crate) fn index(&self, a: usize, b: usize, c: usize) -> usize {
        self.row(a, b) + c
    }
}

/// `C(n, 3)` as `usize`, panicking on overflow; sizes that large are refused
/// by the memory guard long before this is reached.
pub(crate) fn tetra_len(side: u32) -> u64 {
    binomial(side as u64 + 3, 3).expect("tetrahedron size overflow")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_layer(t: u32) -> Vec<PhysicalState> {
        let mut v = Vec::new();
        for a in 0..=t {
            for b in 0..=t {
                for c in 0..=t {
                    for d in 0..=t {
                        if a + b + c + d == t {
                            v.push(PhysicalState::new(a, b, c, d));
                        }
                    }
                }
            }
        }
        // lexicographic on (s_C, f_C, s_D) since f_D is implied
        v.sort();
        v
    }

    #[test]
    fn layer_sizes() {
        let idx = LayerIndexer::new(200).unwrap();
        assert_eq!(idx.layer_size(0).unwrap(), 1);
        assert_eq!(idx.layer_size(2).unwrap(), 10);
        assert_eq!(brute_layer(2).len(), 10);
        // 123 * 122 * 121 / 6
        assert_eq!(idx.layer_size(120).unwrap(), 302_621);
        assert!(idx.layer_size(201).is_err());
    }

    #[test]
    fn total_is_sum_of_layers() {
        for t_max in 0..=200u32 {
            let idx = LayerIndexer::new(t_max).unwrap();
            let sum: u64 = (0..=t_max).map(|t| idx.layer_size(t).unwrap()).sum();
            assert_eq!(sum, idx.total_states(), "T={t_max}");
        }
    }

    #[test]
    fn rank_examples() {
        let idx = LayerIndexer::new(5).unwrap();
        assert_eq!(idx.rank(&PhysicalState::ORIGIN).unwrap(), 0);
        assert_eq!(idx.rank(&PhysicalState::new(0, 0, 0, 2)).unwrap(), 0);
        assert_eq!(idx.unrank(0, 0).unwrap(), PhysicalState::ORIGIN);
        assert_eq!(idx.unrank(2, 9).unwrap(), PhysicalState::new(2, 0, 0, 0));
        assert!(idx.unrank(2, 10).is_err());
    }

    #[test]
    fn rank_is_bijection_on_layer_five() {
        let idx = LayerIndexer::new(5).unwrap();
        let states = brute_layer(5);
        assert_eq!(states.len() as u64, binomial(8, 3).unwrap());
        let mut seen: Vec<u64> = states.iter().map(|x| idx.rank(x).unwrap()).collect();
        // sorted enumeration must map to 0..n in order
        assert!(seen.windows(2).all(|w| w[0] + 1 == w[1]));
        seen.sort();
        assert_eq!(seen, (0..states.len() as u64).collect::<Vec<_>>());
    }

    #[test]
    fn round_trip_exhaustive() {
        let idx = LayerIndexer::new(12).unwrap();
        for t in 0..=12 {
            for (i, x) in brute_layer(t).iter().enumerate() {
                assert_eq!(idx.rank(x).unwrap(), i as u64);
                assert_eq!(idx.unrank(t, i as u64).unwrap(), *x);
            }
            let ordered: Vec<_> = idx.layer(t).unwrap().collect();
            assert_eq!(ordered, brute_layer(t));
        }
    }

    #[test]
    fn successors_examples() {
        let idx = LayerIndexer::new(10).unwrap();
        let s = idx.successors(&PhysicalState::ORIGIN).unwrap();
        assert_eq!(
            s,
            [
                PhysicalState::new(1, 0, 0, 0),
                PhysicalState::new(0, 1, 0, 0),
                PhysicalState::new(0, 0, 1, 0),
                PhysicalState::new(0, 0, 0, 1)
            ]
        );
        let x = PhysicalState::new(2, 1, 0, 3);
        let s = idx.successors(&x).unwrap();
        assert_eq!(
            s,
            [
                PhysicalState::new(3, 1, 0, 3),
                PhysicalState::new(2, 2, 0, 3),
                PhysicalState::new(2, 1, 1, 3),
                PhysicalState::new(2, 1, 0, 4)
            ]
        );
        assert!(s.iter().all(|y| y.epoch() == x.epoch() + 1));
        assert!(idx.successors(&PhysicalState::new(10, 0, 0, 0)).is_err());
    }

    #[test]
    fn successors_are_unit_steps_up() {
        let idx = LayerIndexer::new(6).unwrap();
        for t in 0..6 {
            for x in brute_layer(t) {
                let succ = idx.successors(&x).unwrap();
                let expected: Vec<_> = brute_layer(t + 1)
                    .into_iter()
                    .filter(|y| {
                        let (xa, ya) = (x.as_array(), y.as_array());
                        xa.iter().zip(&ya).all(|(p, q)| q >= p)
                            && xa.iter().zip(&ya).map(|(p, q)| q - p).sum::<u32>() == 1
                    })
                    .collect();
                let mut got = succ.to_vec();
                got.sort();
                assert_eq!(got, expected);
            }
        }
    }

    #[test]
    fn tetra_matches_layer_rank() {
        for side in 0..=9u32 {
            let g = Tetra::new(side);
            let idx = LayerIndexer::new(side).unwrap();
            assert_eq!(g.len() as u64, tetra_len(side));
            for x in brute_layer(side) {
                let slot = g.index(x.s_c as usize, x.f_c as usize, x.s_d as usize);
                assert_eq!(slot as u64, idx.rank(&x).unwrap());
            }
            for a in 0..=side as usize {
                assert_eq!(g.slab(a), g.row(a, 0));
            }
        }
    }

    #[test]
    fn parse_state() {
        let x: PhysicalState = "2, 1,0,3".parse().unwrap();
        assert_eq!(x, PhysicalState::new(2, 1, 0, 3));
        assert!("1,2,3".parse::<PhysicalState>().is_err());
        assert!("1,2,3,-1".parse::<PhysicalState>().is_err());
    }
}
