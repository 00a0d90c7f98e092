//! A lazily refined, replayable Brownian path.
//!
//! Values are drawn on demand: beyond the last sampled time by an
//! independent Gaussian increment, between two sampled times from the
//! Brownian bridge. Both kinds of draws come from ChaCha8 keyed by the
//! master seed, on two streams per path (`j` for increments, `j | 2^63` for
//! bridge samples). Draw `n` of either kind is a fixed function of
//! `(seed, j, n)`, so paths can be simulated on any worker, and the forward
//! samples do not depend on how bridge queries are interleaved.
//!
//! Samples appended in increasing time go to a flat vector; bridge samples
//! go to small sorted buckets, one per gap of that vector. Reference schemes
//! append millions of points and coarse schemes then insert comparatively
//! few between them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

const BRIDGE_STREAM: u64 = 1 << 63;

#[derive(Debug, Clone)]
pub struct BrownianPath {
    seed: u64,
    index: u64,
    rng: ChaCha8Rng,
    bridge_rng: ChaCha8Rng,
    /// Strictly increasing times, starting at `(0, 0)`.
    tail: Vec<(f64, f64)>,
    /// Bridge samples strictly between `tail[j - 1]` and `tail[j]`, sorted,
    /// live in `buckets[slot[j] - 1]`; `slot[j] = 0` means there are none.
    slot: Vec<u32>,
    buckets: Vec<Vec<(f64, f64)>>,
    bridged: usize,
    /// Tail index found by the previous lookup; queries tend to come in
    /// increasing time.
    cursor: usize,
}

impl BrownianPath {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bridge_rng = rng.clone();
        rng.set_stream(index);
        bridge_rng.set_stream(index | BRIDGE_STREAM);
        Self {
            seed,
            index,
            rng,
            bridge_rng,
            tail: vec![(0.0, 0.0)],
            slot: Vec::new(),
            buckets: Vec::new(),
            bridged: 0,
            cursor: 0,
        }
    }

    pub fn with_capacity(seed: u64, index: u64, capacity: usize) -> Self {
        let mut path = Self::new(seed, index);
        path.tail.reserve(capacity);
        path
    }

    /// Rebuilds a path from dumped samples. New draws start at the
    /// beginning of the `(seed, index)` stream.
    pub fn from_samples(samples: &[(f64, f64)], seed: u64, index: u64) -> Result<Self> {
        validate_samples(samples)?;
        let mut path = Self::new(seed, index);
        path.tail = samples.to_vec();
        Ok(path)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Number of stored samples, including the origin.
    pub fn len(&self) -> usize {
        self.tail.len() + self.bridged
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Positions in the increment and bridge streams, in 32-bit words.
    pub fn draw_counter(&self) -> (u128, u128) {
        (self.rng.get_word_pos(), self.bridge_rng.get_word_pos())
    }

    pub fn last_time(&self) -> f64 {
        self.tail[self.tail.len() - 1].0
    }

    #[inline]
    fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// `W_t`, drawing and storing it if `t` has not been sampled yet.
    #[inline]
    pub fn sample_at(&mut self, t: f64) -> Result<f64> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::InvalidTime(t));
        }
        let t = t + 0.0; // -0.0 -> 0.0
        let &(t_last, w_last) = self.tail.last().expect("path always holds the origin");
        if t > t_last {
            let w = w_last + (t - t_last).sqrt() * self.normal();
            self.tail.push((t, w));
            return Ok(w);
        }
        if t == t_last {
            return Ok(w_last);
        }
        let j = self.locate(t);
        self.cursor = j;
        let (mut b, mut wb) = self.tail[j];
        if b == t {
            return Ok(wb);
        }
        let (mut a, mut wa) = self.tail[j - 1];
        let slot = self.slot.get(j).copied().unwrap_or(0) as usize;
        let mut at = 0;
        if slot != 0 {
            let bucket = &self.buckets[slot - 1];
            at = bucket.partition_point(|&(u, _)| u < t);
            if let Some(&(u, w)) = bucket.get(at) {
                if u == t {
                    return Ok(w);
                }
                (b, wb) = (u, w);
            }
            if at > 0 {
                (a, wa) = bucket[at - 1];
            }
        }
        let span = b - a;
        let mean = wa + (t - a) / span * (wb - wa);
        let var = (b - t) * (t - a) / span;
        let z: f64 = self.bridge_rng.sample(StandardNormal);
        let w = mean + var.max(0.0).sqrt() * z;
        if slot != 0 {
            self.buckets[slot - 1].insert(at, (t, w));
        } else {
            if self.slot.len() <= j {
                self.slot.resize(self.tail.len(), 0);
            }
            self.buckets.push(vec![(t, w)]);
            self.slot[j] = u32::try_from(self.buckets.len()).expect("fewer than 2^32 bridged gaps");
        }
        self.bridged += 1;
        Ok(w)
    }

    /// Smallest `j` with `tail[j].0 >= t`, for `t` below the last tail
    /// time, by galloping from the cursor. It is 0 only for `t = 0`.
    #[inline]
    fn locate(&self, t: f64) -> usize {
        let tail = &self.tail;
        let last = tail.len() - 1;
        let c = self.cursor.min(last);
        let (lo, hi) = if tail[c].0 >= t {
            let (mut hi, mut step) = (c, 1);
            loop {
                if step > hi {
                    break (0, hi);
                }
                let probe = hi - step;
                if tail[probe].0 < t {
                    break (probe + 1, hi);
                }
                hi = probe;
                step *= 2;
            }
        } else {
            let (mut lo, mut step) = (c + 1, 1);
            loop {
                let probe = (c + step).min(last);
                if tail[probe].0 >= t {
                    break (lo, probe);
                }
                lo = probe + 1;
                step *= 2;
            }
        };
        lo + tail[lo..=hi].partition_point(|&(s, _)| s < t)
    }

    /// `W_t - W_s`.
    #[inline]
    pub fn increment(&mut self, s: f64, t: f64) -> Result<f64> {
        if s > t {
            return Err(Error::TimeOrder { s, t });
        }
        let ws = self.sample_at(s)?;
        let wt = self.sample_at(t)?;
        Ok(wt - ws)
    }

    /// All samples in time order.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        out.push(self.tail[0]);
        for (j, &(t, w)) in self.tail.iter().enumerate().skip(1) {
            if let Some(&slot) = self.slot.get(j).filter(|&&s| s != 0) {
                out.extend_from_slice(&self.buckets[slot as usize - 1]);
            }
            out.push((t, w));
        }
        out
    }

    /// Little-endian dump: an 8-byte sample count, then `(time, value)`
    /// pairs of `f64` in increasing time.
    pub fn dump(&self) -> Vec<u8> {
        encode_samples(&self.samples())
    }
}

pub fn encode_samples(samples: &[(f64, f64)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 16 * samples.len());
    out.extend_from_slice(&(samples.len() as u64).to_le_bytes());
    for &(t, w) in samples {
        out.extend_from_slice(&t.to_le_bytes());
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

/// Parses a dump produced by [`BrownianPath::dump`].
pub fn decode_samples(bytes: &[u8]) -> Result<Vec<(f64, f64)>> {
    let (head, body) = bytes
        .split_first_chunk::<8>()
        .ok_or_else(|| Error::MalformedDump("missing count header".into()))?;
    let count = u64::from_le_bytes(*head);
    if body.len() % 16 != 0 || (body.len() / 16) as u64 != count {
        return Err(Error::MalformedDump(format!(
            "header announces {count} samples but body holds {} bytes",
            body.len()
        )));
    }
    let samples: Vec<(f64, f64)> = body
        .chunks_exact(16)
        .map(|c| {
            let t = f64::from_le_bytes(c[..8].try_into().expect("chunk of 16"));
            let w = f64::from_le_bytes(c[8..].try_into().expect("chunk of 16"));
            (t, w)
        })
        .collect();
    validate_samples(&samples)?;
    Ok(samples)
}

fn validate_samples(samples: &[(f64, f64)]) -> Result<()> {
    match samples.first() {
        Some(&(t, w)) if t == 0.0 && w == 0.0 => {}
        _ => return Err(Error::MalformedDump("first sample must be (0, 0)".into())),
    }
    if samples.iter().any(|&(t, w)| !t.is_finite() || !w.is_finite()) {
        return Err(Error::MalformedDump("non-finite sample".into()));
    }
    if !samples.windows(2).all(|p| p[0].0 < p[1].0) {
        return Err(Error::MalformedDump("times not strictly increasing".into()));
    }
    Ok(())
}
