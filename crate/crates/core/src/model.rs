//! Processor speed functions.
//!
//! A speed function maps a problem size `x` (computation units) to a speed in
//! units per second. Three kinds are provided: [`ConstantModel`], the
//! measurement-driven [`PiecewiseLinearModel`], and the analytic
//! [`SyntheticProfile`] used as ground truth by the simulator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A positive speed function of problem size.
pub trait SpeedFunction {
    /// Speed at problem size `x` in units per second.
    fn eval_speed(&self, x: f64) -> Result<f64>;

    /// Largest problem size that completes within `t` seconds, i.e.
    /// `sup { x >= 0 : x / s(x) <= t }`.
    ///
    /// Taking the supremum keeps the answer well defined for speed
    /// functions whose time curve `x / s(x)` is not monotone.
    fn max_units_within(&self, t: f64) -> Result<f64>;
}

impl<T: SpeedFunction + ?Sized> SpeedFunction for &T {
    fn eval_speed(&self, x: f64) -> Result<f64> {
        (**self).eval_speed(x)
    }
    fn max_units_within(&self, t: f64) -> Result<f64> {
        (**self).max_units_within(t)
    }
}

impl<T: SpeedFunction + ?Sized> SpeedFunction for Box<T> {
    fn eval_speed(&self, x: f64) -> Result<f64> {
        (**self).eval_speed(x)
    }
    fn max_units_within(&self, t: f64) -> Result<f64> {
        (**self).max_units_within(t)
    }
}

/// Speed derived from an observed execution time: `units / time`.
pub fn speed_from_time(units: u64, time: f64) -> Result<f64> {
    if units == 0 || !(time > 0.0) || !time.is_finite() {
        return Err(Error::NonPositiveMeasurement { units, time });
    }
    Ok(units as f64 / time)
}

/// Processor speed as a single positive number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel {
    pub s: f64,
}

impl ConstantModel {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidModel(format!("constant speed {s} is not positive")));
        }
        Ok(Self { s })
    }
}

impl SpeedFunction for ConstantModel {
    fn eval_speed(&self, _x: f64) -> Result<f64> {
        Ok(self.s)
    }

    fn max_units_within(&self, t: f64) -> Result<f64> {
        Ok((t * self.s).max(0.0))
    }
}

/// One observed point `(x, s(x))` of a speed function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedPoint {
    pub x: u64,
    pub s: f64,
    /// The run behind this point hit the benchmark time cap, so `s` only
    /// bounds the true speed from above.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub censored: bool,
}

impl SpeedPoint {
    pub fn new(x: u64, s: f64) -> Self {
        Self { x, s, censored: false }
    }

    pub fn censored(x: u64, s: f64) -> Self {
        Self { x, s, censored: true }
    }
}

/// Partial speed-function estimate built from measured points.
///
/// Between consecutive points the speed is interpolated linearly; to the
/// left of the first point and to the right of the last point it is held
/// constant. A segment whose right endpoint is censored (and whose left
/// endpoint is not) is held flat at the left endpoint's speed instead of
/// interpolating toward the censored value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearModel {
    points: Vec<SpeedPoint>,
}

/// One linear piece of a [`PiecewiseLinearModel`] on `[a, b]`.
#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    sa: f64,
    sb: f64,
}

impl PiecewiseLinearModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a model from points in any order. Later duplicates win.
    pub fn from_points(points: impl IntoIterator<Item = SpeedPoint>) -> Result<Self> {
        let mut model = Self::new();
        for p in points {
            model.insert_point(p)?;
        }
        Ok(model)
    }

    pub fn points(&self) -> &[SpeedPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Adds a measured point, replacing the segment that contains it by two
    /// connected segments. A point at an already stored `x` replaces the old
    /// speed.
    pub fn insert_point(&mut self, p: SpeedPoint) -> Result<()> {
        if p.x == 0 || !(p.s > 0.0) || !p.s.is_finite() {
            return Err(Error::InvalidMeasurement(format!(
                "speed point ({}, {}) must have x >= 1 and s > 0",
                p.x, p.s
            )));
        }
        match self.points.binary_search_by_key(&p.x, |q| q.x) {
            Ok(i) => self.points[i] = p,
            Err(i) => self.points.insert(i, p),
        }
        Ok(())
    }

    fn pieces(&self) -> Vec<Piece> {
        let pts = &self.points;
        let mut pieces = Vec::with_capacity(pts.len() + 1);
        let first = pts[0];
        pieces.push(Piece { a: 0.0, b: first.x as f64, sa: first.s, sb: first.s });
        for w in pts.windows(2) {
            let (l, r) = (w[0], w[1]);
            let sb = if r.censored && !l.censored { l.s } else { r.s };
            pieces.push(Piece { a: l.x as f64, b: r.x as f64, sa: l.s, sb });
        }
        let last = pts[pts.len() - 1];
        pieces.push(Piece { a: last.x as f64, b: f64::INFINITY, sa: last.s, sb: last.s });
        pieces
    }
}

impl SpeedFunction for PiecewiseLinearModel {
    fn eval_speed(&self, x: f64) -> Result<f64> {
        let pts = &self.points;
        let (first, last) = match (pts.first(), pts.last()) {
            (Some(f), Some(l)) => (f, l),
            _ => return Err(Error::ModelUninitialized),
        };
        if x <= first.x as f64 {
            return Ok(first.s);
        }
        if x >= last.x as f64 {
            return Ok(last.s);
        }
        // first index with point.x > x; guaranteed in 1..len
        let k = pts.partition_point(|q| q.x as f64 <= x);
        let (l, r) = (pts[k - 1], pts[k]);
        if x == l.x as f64 {
            return Ok(l.s);
        }
        if r.censored && !l.censored {
            return Ok(l.s);
        }
        let w = (x - l.x as f64) / (r.x - l.x) as f64;
        Ok(l.s + w * (r.s - l.s))
    }

    fn max_units_within(&self, t: f64) -> Result<f64> {
        if self.points.is_empty() {
            return Err(Error::ModelUninitialized);
        }
        if t <= 0.0 {
            return Ok(0.0);
        }
        // Scan right to left; the first piece with a feasible point holds the supremum.
        for piece in self.pieces().iter().rev() {
            if piece.b.is_infinite() {
                let x = t * piece.sa;
                if x >= piece.a {
                    return Ok(x);
                }
                continue;
            }
            let ga = piece.a - t * piece.sa;
            let gb = piece.b - t * piece.sb;
            if gb <= 0.0 {
                return Ok(piece.b);
            }
            if ga <= 0.0 {
                return Ok(piece.a + (piece.b - piece.a) * ga / (ga - gb));
            }
        }
        // The left tail always contains x = 0.
        Ok(0.0)
    }
}

/// On-disk form of a speed model: `{ "name": ..., "points": [[x, s], ...] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub name: String,
    pub points: Vec<(u64, f64)>,
}

impl ModelFile {
    pub fn from_model(name: impl Into<String>, model: &PiecewiseLinearModel) -> Self {
        Self { name: name.into(), points: model.points().iter().map(|p| (p.x, p.s)).collect() }
    }

    pub fn to_model(&self) -> Result<PiecewiseLinearModel> {
        if self.points.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidModel(format!(
                "model {:?}: points must have strictly ascending x",
                self.name
            )));
        }
        PiecewiseLinearModel::from_points(self.points.iter().map(|&(x, s)| SpeedPoint::new(x, s)))
    }
}

fn default_boost() -> f64 {
    1.0
}

/// Analytic ground-truth speed function with a cache plateau, a main-memory
/// plateau, and a paging collapse.
///
/// ```text
/// s(x) = peak * cache_boost                      x <= cache_size
///        peak                                    cache_size < x <= ram_size
///        peak / (1 + paging_decay * (x - ram))   x > ram_size
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub peak_speed: f64,
    #[serde(default = "default_boost")]
    pub cache_boost: f64,
    #[serde(default)]
    pub cache_size: f64,
    /// Paging onset; `None` means the processor never pages.
    #[serde(default)]
    pub ram_size: Option<f64>,
    #[serde(default)]
    pub paging_decay: f64,
    #[serde(default)]
    pub noise_rel: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticProfile {
    /// Flat profile: constant `peak_speed`, no cache, no paging, no noise.
    pub fn flat(peak_speed: f64) -> Self {
        Self {
            peak_speed,
            cache_boost: 1.0,
            cache_size: 0.0,
            ram_size: None,
            paging_decay: 0.0,
            noise_rel: 0.0,
            seed: 0,
        }
    }

    pub fn with_cache(mut self, cache_size: f64, cache_boost: f64) -> Self {
        self.cache_size = cache_size;
        self.cache_boost = cache_boost;
        self
    }

    pub fn with_paging(mut self, ram_size: f64, paging_decay: f64) -> Self {
        self.ram_size = Some(ram_size);
        self.paging_decay = paging_decay;
        self
    }

    pub fn with_noise(mut self, noise_rel: f64, seed: u64) -> Self {
        self.noise_rel = noise_rel;
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidModel(format!("synthetic profile: {what}")));
        if !(self.peak_speed > 0.0) || !self.peak_speed.is_finite() {
            return bad("peak_speed must be positive");
        }
        if !(self.cache_boost >= 1.0) || !self.cache_boost.is_finite() {
            return bad("cache_boost must be >= 1");
        }
        if !(self.cache_size >= 0.0) || !self.cache_size.is_finite() {
            return bad("cache_size must be non-negative");
        }
        if let Some(ram) = self.ram_size {
            if !(ram > 0.0) || !ram.is_finite() {
                return bad("ram_size must be positive");
            }
        }
        if !(self.paging_decay >= 0.0) || !self.paging_decay.is_finite() {
            return bad("paging_decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.noise_rel) {
            return bad("noise_rel must lie in [0, 1)");
        }
        Ok(())
    }

    /// Noise-free speed at size `x`.
    pub fn true_speed(&self, x: f64) -> f64 {
        if x <= self.cache_size {
            return self.peak_speed * self.cache_boost;
        }
        match self.ram_size {
            Some(ram) if x > ram => self.peak_speed / (1.0 + self.paging_decay * (x - ram)),
            _ => self.peak_speed,
        }
    }

    /// Noise-free execution time of `x` units.
    pub fn true_time(&self, x: f64) -> f64 {
        x / self.true_speed(x)
    }

    /// Simulated measurement of `x` units in the given round.
    ///
    /// The relative perturbation is a pure function of `(seed, x, round)` and
    /// never exceeds `noise_rel` in magnitude.
    pub fn synth_time(&self, x: u64, round: u64) -> f64 {
        let base = self.true_time(x as f64);
        if self.noise_rel == 0.0 {
            return base;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(noise_key(self.seed, x, round));
        let u: f64 = rng.gen_range(-1.0..=1.0);
        base * (1.0 + self.noise_rel * u)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn noise_key(seed: u64, x: u64, round: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ x) ^ round)
}

impl SpeedFunction for SyntheticProfile {
    fn eval_speed(&self, x: f64) -> Result<f64> {
        Ok(self.true_speed(x))
    }

    fn max_units_within(&self, t: f64) -> Result<f64> {
        if t <= 0.0 {
            return Ok(0.0);
        }
        // x / s(x) is strictly increasing, so the supremum is the crossing point.
        let boosted = self.peak_speed * self.cache_boost;
        if t * boosted <= self.cache_size {
            return Ok(t * boosted);
        }
        let plain = t * self.peak_speed;
        if plain <= self.cache_size {
            // t falls in the time jump at the cache edge
            return Ok(self.cache_size);
        }
        let ram = match self.ram_size {
            Some(ram) if plain > ram => ram.max(self.cache_size),
            _ => return Ok(plain),
        };
        if self.paging_decay == 0.0 {
            return Ok(plain);
        }
        // decay * x^2 + (1 - decay * ram) * x - t * peak = 0, positive root
        let a = self.paging_decay;
        let b = 1.0 - self.paging_decay * ram;
        let c = -plain;
        let disc = (b * b - 4.0 * a * c).sqrt();
        let root = if b >= 0.0 { -2.0 * c / (b + disc) } else { (-b + disc) / (2.0 * a) };
        Ok(root)
    }
}
