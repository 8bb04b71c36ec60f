//! In-place layer sweeps over the state lattice.
//!
//! All layers share one store laid out as the tetrahedron of side `T`:
//! slot `(a, b, c)` holds the state `(a, b, c, t - a - b - c)` of whatever
//! layer `t` is current. Moving one layer up or down rewrites the store slab
//! by slab, so at most one layer of values plus one slab of scratch is
//! resident at any time.
//!
//! Kernels are row-aware: `kernel(t, a, b)` returns a per-row closure that is
//! then called for every `c` of the row. Rows of a slab are independent and
//! run on the rayon pool under [`Exec::Parallel`].

use crate::exec::Exec;
use crate::lattice::{tetra_len, Tetra};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Number of slots in a triangle `{b + c <= side}`.
#[inline]
pub(crate) fn tri_len(side: usize) -> usize {
    (side + 1) * (side + 2) / 2
}

#[inline]
fn tri_index(side: usize, b: usize, c: usize) -> usize {
    b * (side + 1) - b * b.saturating_sub(1) / 2 + c
}

/// Splits `buf` into rows of lengths `m+1, m, ..., 1` (only as many as fit).
fn split_rows<S>(mut buf: &mut [S], m: usize, rows: usize) -> Vec<&mut [S]> {
    let mut out = Vec::with_capacity(rows);
    for b in 0..rows {
        let (head, tail) = std::mem::take(&mut buf).split_at_mut(m + 1 - b);
        out.push(head);
        buf = tail;
    }
    out
}

#[cfg(feature = "parallel")]
const PAR_MIN_ROWS: usize = 32;

fn run_rows<I, F>(exec: Exec, items: Vec<I>, f: F)
where
    I: Send,
    F: Fn(usize, I) + Sync + Send,
{
    // rows are independent, so the split never changes results
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && items.len() >= PAR_MIN_ROWS && rayon::current_num_threads() > 1 {
        items.into_par_iter().enumerate().with_min_len(PAR_MIN_ROWS / 4).for_each(|(b, item)| f(b, item));
        return;
    }
    let _ = exec;
    for (b, item) in items.into_iter().enumerate() {
        f(b, item);
    }
}

/// Rank offset of slab `a` within layer `t`.
#[inline]
pub(crate) fn layer_slab_offset(t: u32, a: u32) -> u64 {
    tetra_len(t) - tetra_len(t - a)
}

/// Packed 2-bit code byte length of layer `t`.
pub(crate) fn packed_layer_len(t: u32) -> usize {
    tetra_len(t).div_ceil(4) as usize
}

pub(crate) struct Sweep {
    horizon: u32,
    tetra: Tetra,
    exec: Exec,
}

pub(crate) struct BackwardScratch<S> {
    vals: Vec<S>,
    codes: Vec<u8>,
}

pub(crate) struct ForwardScratch {
    hi: Vec<[f64; 4]>,
    lo: Vec<[f64; 4]>,
    row_sums: Vec<f64>,
}

impl Sweep {
    pub(crate) fn new(horizon: u32, exec: Exec) -> Self {
        Self { horizon, tetra: Tetra::new(horizon), exec }
    }

    pub(crate) fn store_len(&self) -> usize {
        self.tetra.len()
    }

    /// Largest slab scratch the sweeps allocate, in slots.
    pub(crate) fn scratch_len(&self) -> usize {
        tri_len(self.horizon as usize)
    }

    pub(crate) fn backward_scratch<S: Copy + Default>(&self) -> BackwardScratch<S> {
        let n = self.scratch_len();
        BackwardScratch { vals: vec![S::default(); n], codes: vec![0; n] }
    }

    pub(crate) fn forward_scratch(&self) -> ForwardScratch {
        let n = tri_len(self.horizon as usize + 1);
        ForwardScratch { hi: vec![[0.0; 4]; n], lo: vec![[0.0; 4]; n], row_sums: vec![0.0; self.horizon as usize + 2] }
    }

    /// Fills the store with layer-`t` values `init(a, b, c)`.
    pub(crate) fn fill_layer<S: Copy>(&self, store: &mut [S], t: u32, init: impl Fn(u32, u32, u32) -> S) {
        let t = t as usize;
        for a in 0..=t {
            for b in 0..=t - a {
                let r = self.tetra.row(a, b);
                for c in 0..=t - a - b {
                    store[r + c] = init(a as u32, b as u32, c as u32);
                }
            }
        }
    }

    /// Replaces layer `t + 1` values by layer `t` values.
    ///
    /// The row closure receives `c` and the successor values in the order
    /// `[s_C + 1, f_C + 1, s_D + 1, f_D + 1]` and returns the new value and an
    /// action code. Codes are OR-ed into `packed` (2 bits per state, layer
    /// rank order) when given.
    pub(crate) fn backward_layer<S, K, R>(
        &self,
        store: &mut [S],
        t: u32,
        scratch: &mut BackwardScratch<S>,
        mut packed: Option<&mut [u8]>,
        kernel: &K,
    ) where
        S: Copy + Send + Sync,
        K: Fn(u32, u32, u32) -> R + Sync,
        R: FnMut(u32, [S; 4]) -> (S, u8),
    {
        debug_assert!(t < self.horizon);
        let tetra = &self.tetra;
        let tu = t as usize;
        for a in 0..=tu {
            let m = tu - a;
            let len = tri_len(m);
            {
                let src: &[S] = store;
                let vals = split_rows(&mut scratch.vals[..len], m, m + 1);
                let codes = split_rows(&mut scratch.codes[..len], m, m + 1);
                let rows: Vec<_> = vals.into_iter().zip(codes).collect();
                run_rows(self.exec, rows, |b, (vals, codes)| {
                    let up_a = tetra.row(a + 1, b);
                    let up_b = tetra.row(a, b + 1);
                    let own = tetra.row(a, b);
                    let mut rk = kernel(t, a as u32, b as u32);
                    for c in 0..vals.len() {
                        let succ = [src[up_a + c], src[up_b + c], src[own + c + 1], src[own + c]];
                        let (v, code) = rk(c as u32, succ);
                        vals[c] = v;
                        codes[c] = code;
                    }
                });
            }
            let mut off = 0;
            for b in 0..=m {
                let r = tetra.row(a, b);
                let n = m - b + 1;
                store[r..r + n].copy_from_slice(&scratch.vals[off..off + n]);
                off += n;
            }
            if let Some(p) = packed.as_deref_mut() {
                let base = layer_slab_offset(t, a as u32) as usize;
                for (i, &code) in scratch.codes[..len].iter().enumerate() {
                    let r = base + i;
                    p[r >> 2] |= (code & 3) << ((r & 3) * 2);
                }
            }
        }
    }

    /// Pushes the layer-`t` probability mass in the store up to layer `t + 1`
    /// and returns the new layer's total mass.
    ///
    /// The row closure receives `c` and the (nonzero) mass `P` of the state
    /// and returns the flows `[P·p_C·q_C, P·p_C·(1-q_C), P·p_D·q_D,
    /// P·p_D·(1-q_D)]` to its four successors. Every new state gathers its
    /// inflows in that fixed order.
    pub(crate) fn forward_layer<K, R>(&self, store: &mut [f64], t: u32, scratch: &mut ForwardScratch, kernel: &K) -> f64
    where
        K: Fn(u32, u32, u32) -> R + Sync,
        R: FnMut(u32, f64) -> [f64; 4],
    {
        debug_assert!(t < self.horizon);
        let tetra = &self.tetra;
        let n = t as usize + 1;
        let big = self.horizon as usize;
        // flows out of old slab `n` (empty)
        scratch.hi[0] = [0.0; 4];
        let mut total = 0.0;
        for a in (0..=n).rev() {
            let s = n - a;
            if a >= 1 {
                // flows out of old slab a-1, on a triangle of side s+1
                let ao = a - 1;
                let side = s + 1;
                let src: &[f64] = store;
                let rows = split_rows(&mut scratch.lo[..tri_len(side)], side, side + 1);
                run_rows(self.exec, rows, |b, row| {
                    let last = row.len() - 1;
                    // b + c = side lies outside the old layer
                    row[last] = [0.0; 4];
                    if last == 0 {
                        return;
                    }
                    let own = tetra.row(ao, b);
                    let mut rk = kernel(t, ao as u32, b as u32);
                    for c in 0..last {
                        let p = src[own + c];
                        row[c] = if p == 0.0 { [0.0; 4] } else { rk(c as u32, p) };
                    }
                });
            }
            let hi = &scratch.hi;
            let lo = &scratch.lo;
            let slab_start = tetra.slab(a);
            let slab = &mut store[slab_start..slab_start + tri_len(big - a)];
            let rows = split_rows(slab, big - a, s + 1);
            let rows: Vec<_> = rows.into_iter().zip(scratch.row_sums[..=s].iter_mut()).collect();
            run_rows(self.exec, rows, |b, (row, sum)| {
                let mut acc = 0.0;
                let len = s - b + 1;
                let here = &hi[tri_index(s, b, 0)..][..len];
                let below = if b >= 1 { Some(&hi[tri_index(s, b - 1, 0)..][..len]) } else { None };
                let up = if a >= 1 { Some(&lo[tri_index(s + 1, b, 0)..][..len]) } else { None };
                for c in 0..len {
                    let e1 = up.map_or(0.0, |r| r[c][0]);
                    let e2 = below.map_or(0.0, |r| r[c][1]);
                    let e3 = if c >= 1 { here[c - 1][2] } else { 0.0 };
                    let p = e1 + e2 + e3 + here[c][3];
                    row[c] = p;
                    acc += p;
                }
                *sum = acc;
            });
            total += scratch.row_sums[..=s].iter().sum::<f64>();
            std::mem::swap(&mut scratch.hi, &mut scratch.lo);
        }
        total
    }

    /// Ordered reduction of `f(a, b, c, value)` over layer `t` of the store.
    pub(crate) fn reduce_layer<S, const N: usize>(
        &self,
        store: &[S],
        t: u32,
        f: impl Fn(u32, u32, u32, &S) -> [f64; N] + Sync,
    ) -> [f64; N]
    where
        S: Sync,
    {
        let tu = t as usize;
        let tetra = &self.tetra;
        let mut total = [0.0; N];
        for a in 0..=tu {
            let m = tu - a;
            let mut sums = vec![[0.0; N]; m + 1];
            let rows: Vec<_> = sums.iter_mut().collect();
            run_rows(self.exec, rows, |b, out| {
                let own = tetra.row(a, b);
                let mut acc = [0.0; N];
                for c in 0..=m - b {
                    let v = f(a as u32, b as u32, c as u32, &store[own + c]);
                    for k in 0..N {
                        acc[k] += v[k];
                    }
                }
                *out = acc;
            });
            for s in &sums {
                for k in 0..N {
                    total[k] += s[k];
                }
            }
        }
        total
    }

    /// Value at slot `(a, b, c)` of the current layer.
    pub(crate) fn get<S: Copy>(&self, store: &[S], a: u32, b: u32, c: u32) -> S {
        store[self.tetra.index(a as usize, b as usize, c as usize)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{layer_states, LayerIndexer};

    #[test]
    fn row_split_lengths() {
        let mut v = vec![0u8; tri_len(3)];
        let rows = split_rows(&mut v, 3, 4);
        assert_eq!(rows.iter().map(|r| r.len()).collect::<Vec<_>>(), vec![4, 3, 2, 1]);
        for b in 0..4 {
            for c in 0..4 - b {
                assert!(tri_index(3, b, c) < tri_len(3));
            }
        }
        assert_eq!(tri_index(3, 1, 0), 4);
        assert_eq!(tri_index(3, 3, 0), 9);
    }

    #[test]
    fn slab_offsets_match_rank() {
        let idx = LayerIndexer::new(12).unwrap();
        for t in 0..=12 {
            for a in 0..=t {
                assert_eq!(layer_slab_offset(t, a), idx.rank_in(t, a, 0, 0));
            }
        }
    }

    // counting paths: backward with unit kernel counts successors' sums
    #[test]
    fn backward_counts_paths() {
        for exec in [Exec::Sequential, Exec::Parallel] {
            let horizon = 7;
            let sw = Sweep::new(horizon, exec);
            let mut store = vec![0u64; sw.store_len()];
            sw.fill_layer(&mut store, horizon, |_, _, _| 1);
            let mut scratch = sw.backward_scratch::<u64>();
            for t in (0..horizon).rev() {
                sw.backward_layer(&mut store, t, &mut scratch, None, &|_, _, _| {
                    |_c: u32, s: [u64; 4]| (s.iter().sum::<u64>(), 0u8)
                });
            }
            assert_eq!(store[0], 4u64.pow(horizon));
        }
    }

    #[test]
    fn backward_sees_correct_successors() {
        // value = weighted sum identifying each state; checks the successor wiring
        let horizon = 6;
        let key = |a: u32, b: u32, c: u32, d: u32| (a * 1000 + b * 100 + c * 10 + d) as f64;
        let sw = Sweep::new(horizon, Exec::Sequential);
        let mut store = vec![0.0; sw.store_len()];
        sw.fill_layer(&mut store, horizon, |a, b, c| key(a, b, c, horizon - a - b - c));
        let mut scratch = sw.backward_scratch::<f64>();
        for t in (0..horizon).rev() {
            sw.backward_layer(&mut store, t, &mut scratch, None, &|t, a, b| {
                move |c: u32, s: [f64; 4]| {
                    let x = crate::lattice::PhysicalState::new(a, b, c, t - a - b - c);
                    if t == horizon - 1 {
                        for (k, y) in x.successors_unchecked().iter().enumerate() {
                            assert_eq!(s[k], key(y.s_c, y.f_c, y.s_d, y.f_d));
                        }
                    }
                    (key(x.s_c, x.f_c, x.s_d, x.f_d), 0)
                }
            });
            for x in layer_states(t) {
                assert_eq!(sw.get(&store, x.s_c, x.f_c, x.s_d), key(x.s_c, x.f_c, x.s_d, x.f_d));
            }
        }
    }

    #[test]
    fn forward_uniform_spreading() {
        // every flow is P/4: layer-t mass of x is multinomial(t; x)/4^t
        for exec in [Exec::Sequential, Exec::Parallel] {
            let horizon = 8;
            let sw = Sweep::new(horizon, exec);
            let mut store = vec![0.0; sw.store_len()];
            store[0] = 1.0;
            let mut scratch = sw.forward_scratch();
            for t in 0..horizon {
                let mass = sw.forward_layer(&mut store, t, &mut scratch, &|_, _, _| |_c: u32, p: f64| [p / 4.0; 4]);
                assert!((mass - 1.0).abs() < 1e-14);
                let n = t + 1;
                let fact = |k: u32| (1..=k).map(|i| i as f64).product::<f64>();
                for x in layer_states(n) {
                    let expect =
                        fact(n) / (fact(x.s_c) * fact(x.f_c) * fact(x.s_d) * fact(x.f_d)) / 4f64.powi(n as i32);
                    let got = sw.get(&store, x.s_c, x.f_c, x.s_d);
                    assert!((got - expect).abs() < 1e-15, "{x}: {got} vs {expect}");
                }
            }
            let [m] = sw.reduce_layer(&store, horizon, |_, _, _, p| [*p]);
            assert!((m - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn packed_codes_in_rank_order() {
        let horizon = 5;
        let sw = Sweep::new(horizon, Exec::Parallel);
        let mut store = vec![0.0; sw.store_len()];
        let mut scratch = sw.backward_scratch::<f64>();
        let idx = LayerIndexer::new(horizon).unwrap();
        for t in (0..horizon).rev() {
            let mut packed = vec![0u8; packed_layer_len(t)];
            sw.backward_layer(&mut store, t, &mut scratch, Some(&mut packed), &|_, a, b| {
                move |c: u32, _s: [f64; 4]| (0.0, ((a + 2 * b + c) % 3 + 1) as u8)
            });
            for x in layer_states(t) {
                let r = idx.rank(&x).unwrap() as usize;
                let code = (packed[r / 4] >> ((r % 4) * 2)) & 3;
                assert_eq!(code as u32, (x.s_c + 2 * x.f_c + x.s_d) % 3 + 1);
            }
        }
    }
}
