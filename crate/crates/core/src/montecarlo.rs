//! Monte Carlo simulator of the two-tier network.
//!
//! Each drop places Poisson macro-BSs, pico-BSs and users in a disc window
//! around a typical user at the origin, associates every user by biased
//! received power, counts loads, schedules one user per BS, lets each macro-BS
//! pick its IN targets among the active offloaded users in its Voronoi cell,
//! and draws fading gains.
//!
//! Randomness is counter based: drop `d` of seed `s` uses ChaCha8 stream `d`,
//! split into lanes by word offset. Points are drawn inner disc first, so a
//! larger window reproduces the inner realization exactly.
//!
//! # Realization dump
//!
//! [`write_realization`] emits a little-endian record:
//!
//! | offset | type       | field                                   |
//! |--------|------------|-----------------------------------------|
//! | 0      | `[u8; 4]`  | magic `HNRZ`                            |
//! | 4      | `u16`      | format version (currently 1)            |
//! | 6      | `u16`      | reserved, zero                          |
//! | 8      | `u64`      | drop index                              |
//! | 16     | `f64`      | window radius (m)                       |
//! | 24     | `u32`      | IN DoF                                  |
//! | 28     | `u32`      | empty-tier redraws                      |
//! | 32     | `u32` × 3  | macro, pico and user counts             |
//! | 44     | body       | see below                               |
//!
//! The body holds the macro, pico and user coordinates as `f64` pairs, then
//! one 12-byte record per user (`u8` serving tier, `u8` class, `u16` zero,
//! `u32` serving BS, `u32` nearest macro-BS), the macro and pico schedules
//! as `u32` (`u32::MAX` for none), the macro, pico and offloaded-pico loads as
//! `u32`, and per macro-BS the active offloaded list followed by the IN list,
//! each as a `u32` count and its `u32` user indices.

use std::f64::consts::{LN_2, PI};
use std::io::{self, Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{NumericsParams, Scheme, SchemeParams, SystemParams};
use crate::coverage::{LaplaceField, UserClass};
use crate::error::{domain, Error, Result};

/// Drops per work unit; partial sums are merged in unit order.
const BLOCK: u64 = 256;

/// Window of the interference-functional estimator, in exclusion radii.
const FIELD_GUARD: f64 = 40.0;

/// Upper bound on empty-tier redraws per drop.
const MAX_RESAMPLES: u32 = 1000;

const DUMP_MAGIC: [u8; 4] = *b"HNRZ";
pub const DUMP_VERSION: u16 = 1;

mod lane {
    pub const MACRO: u64 = 0;
    pub const PICO: u64 = 1;
    pub const USER: u64 = 2;
    pub const MACRO_OUTER: u64 = 3;
    pub const PICO_OUTER: u64 = 4;
    pub const USER_OUTER: u64 = 5;
    pub const SCHEDULE_MACRO: u64 = 6;
    pub const SCHEDULE_PICO: u64 = 7;
    pub const SELECT: u64 = 8;
    pub const SIGNAL: u64 = 9;
    pub const MACRO_GAIN: u64 = 10;
    pub const PICO_GAIN: u64 = 11;
    pub const FIELD: u64 = 12;
}

fn substream(seed: u64, drop: u64, lane: u64, sub: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(drop);
    rng.set_word_pos(((lane as u128) << 56) | ((sub as u128) << 24));
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Tier {
    Macro,
    Pico,
}

/// How fading gains are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ChannelPath {
    /// Gamma and exponential effective gains.
    Fast,
    /// Complex Gaussian channels with explicit zero-forcing and MRT precoders.
    Explicit,
}

/// Association of one user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UserRecord {
    pub tier: Tier,
    pub serving: u32,
    pub nearest_macro: u32,
    /// `Macro`, `PicoNonOffloaded` or `Offloaded`.
    pub class: UserClass,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NetworkRealization {
    pub drop_index: u64,
    pub window: f64,
    pub in_dof: usize,
    pub macros: Vec<[f64; 2]>,
    pub picos: Vec<[f64; 2]>,
    /// `users[0]` is the typical user at the origin.
    pub users: Vec<[f64; 2]>,
    pub records: Vec<UserRecord>,
    pub macro_schedule: Vec<Option<u32>>,
    pub pico_schedule: Vec<Option<u32>>,
    pub macro_load: Vec<u32>,
    pub pico_load: Vec<u32>,
    /// Offloaded part of `pico_load`.
    pub pico_offloaded_load: Vec<u32>,
    /// Offloaded users scheduled by their pico-BS, grouped by nearest macro-BS.
    pub active_offloaded: Vec<Vec<u32>>,
    /// Users each macro-BS nulls toward.
    pub in_assignments: Vec<Vec<u32>>,
    /// Redraws caused by an empty tier.
    pub resamples: u32,
}

impl NetworkRealization {
    pub fn typical(&self) -> &UserRecord {
        &self.records[0]
    }

    /// Whether the typical user is among the IN targets of its nearest macro-BS.
    pub fn typical_protected(&self) -> bool {
        self.in_assignments[self.records[0].nearest_macro as usize].contains(&0)
    }
}

/// Explicit precoder computed on the slow path.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfRecord {
    /// One row per served or nulled user.
    pub channels: DMatrix<Complex64>,
    /// `H^H (H H^H)^{-1}`, one column per row of `channels`.
    pub precoder: DMatrix<Complex64>,
    /// Largest leakage `|h_i w_0|² / ‖w_0‖²` over the nulled rows.
    pub leakage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDraw {
    pub signal: f64,
    pub macro_gains: Vec<f64>,
    pub pico_gains: Vec<f64>,
    pub precoder: Option<ZfRecord>,
}

/// What the typical user experiences in one drop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypicalOutcome {
    pub class: UserClass,
    pub sir: f64,
    /// Fraction of the band available to the typical user's class.
    pub share: f64,
    pub load: u32,
    /// Active offloaded users at the nearest macro-BS.
    pub nearest_active_offloaded: u32,
    pub in_dof_used: u32,
    pub signal_gain: f64,
}

impl TypicalOutcome {
    pub fn rate(&self, bandwidth: f64) -> f64 {
        self.share * bandwidth / self.load as f64 * self.sir.ln_1p() / LN_2
    }
}

/// Uniform bucket grid for nearest-point queries.
struct Grid {
    min: f64,
    cell: f64,
    n: usize,
    start: Vec<u32>,
    items: Vec<u32>,
}

impl Grid {
    fn new(points: &[[f64; 2]], half_width: f64, density: f64) -> Self {
        let target = 1.0 / density.sqrt();
        let n = ((2.0 * half_width / target).ceil() as usize).clamp(1, 1024);
        let cell = 2.0 * half_width / n as f64;
        let min = -half_width;
        let mut grid = Grid { min, cell, n, start: vec![0; n * n + 1], items: vec![0; points.len()] };
        let keys: Vec<usize> = points.iter().map(|p| grid.key(*p)).collect();
        for &k in &keys {
            grid.start[k + 1] += 1;
        }
        for i in 0..n * n {
            grid.start[i + 1] += grid.start[i];
        }
        let mut fill = grid.start.clone();
        for (i, &k) in keys.iter().enumerate() {
            grid.items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        grid
    }

    fn coord(&self, x: f64) -> usize {
        // saturating cast: negative offsets clamp to zero
        (((x - self.min) / self.cell) as usize).min(self.n - 1)
    }

    fn key(&self, p: [f64; 2]) -> usize {
        self.coord(p[1]) * self.n + self.coord(p[0])
    }

    /// Nearest point and its squared distance.
    fn nearest(&self, points: &[[f64; 2]], q: [f64; 2]) -> Option<(u32, f64)> {
        if points.is_empty() {
            return None;
        }
        let (ci, cj) = (self.coord(q[1]) as isize, self.coord(q[0]) as isize);
        let n = self.n as isize;
        // distance from q to the nearest side of its own cell
        let fx = q[0] - (self.min + cj as f64 * self.cell);
        let fy = q[1] - (self.min + ci as f64 * self.cell);
        let inset = fx.min(self.cell - fx).min(fy).min(self.cell - fy).max(0.0);
        let mut best = (u32::MAX, f64::INFINITY);
        let visit = |i: isize, j: isize, best: &mut (u32, f64)| {
            if i < 0 || j < 0 || i >= n || j >= n {
                return;
            }
            let k = (i * n + j) as usize;
            for &idx in &self.items[self.start[k] as usize..self.start[k + 1] as usize] {
                let p = points[idx as usize];
                let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                if d2 < best.1 {
                    *best = (idx, d2);
                }
            }
        };
        for k in 0..=n {
            if k == 0 {
                visit(ci, cj, &mut best);
            } else {
                for j in cj - k..=cj + k {
                    visit(ci - k, j, &mut best);
                    visit(ci + k, j, &mut best);
                }
                for i in ci - k + 1..ci + k {
                    visit(i, cj - k, &mut best);
                    visit(i, cj + k, &mut best);
                }
            }
            let reach = inset + k as f64 * self.cell;
            if best.1 <= reach * reach {
                break;
            }
        }
        Some(best)
    }
}

fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("finite positive mean");
    let v: f64 = d.sample(rng);
    v as usize
}

/// Uniform points in the annulus `inner <= |x| < outer`.
fn annulus_points(rng: &mut ChaCha8Rng, density: f64, inner: f64, outer: f64, out: &mut Vec<[f64; 2]>) {
    let (i2, o2) = (inner * inner, outer * outer);
    let count = poisson_count(rng, density * PI * (o2 - i2));
    out.reserve(count);
    let mut placed = 0;
    while placed < count {
        let x = outer * (2.0 * rng.random::<f64>() - 1.0);
        let y = outer * (2.0 * rng.random::<f64>() - 1.0);
        let r2 = x * x + y * y;
        if r2 < o2 && r2 >= i2 {
            out.push([x, y]);
            placed += 1;
        }
    }
}

fn ln_received(power_ln: f64, alpha: f64, d2: f64) -> f64 {
    power_ln - 0.5 * alpha * d2.ln()
}

fn cn_vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        })
        .collect()
}

/// Zero-forcing precoder `H^H (H H^H)^{-1}` for the rows of `channels`; the
/// first row is the served user and the rest are nulled.
pub fn zf_precoder(channels: DMatrix<Complex64>) -> Result<ZfRecord> {
    let (k, n) = channels.shape();
    if k == 0 || k > n {
        return Err(domain("zf_precoder", format!("{k} users cannot be separated with {n} antennas")));
    }
    let gram = &channels * channels.adjoint();
    let inv = gram.try_inverse().ok_or_else(|| domain("zf_precoder", "singular channel Gram matrix"))?;
    let precoder = channels.adjoint() * inv;
    let w0 = precoder.column(0);
    let norm2 = w0.norm_squared();
    let mut leakage: f64 = 0.0;
    for i in 1..k {
        let h = channels.row(i);
        let v = (h * w0)[(0, 0)].norm_sqr() / norm2;
        leakage = leakage.max(v);
    }
    Ok(ZfRecord { channels, precoder, leakage })
}

impl ZfRecord {
    /// `|h_0 w_0|² / ‖w_0‖²`, the served user's effective gain.
    pub fn signal_gain(&self) -> f64 {
        let w0 = self.precoder.column(0);
        (self.channels.row(0) * w0)[(0, 0)].norm_sqr() / w0.norm_squared()
    }

    /// Gain toward an arbitrary receive channel through the normalized first column.
    pub fn gain_toward(&self, h: &[Complex64]) -> f64 {
        let w0 = self.precoder.column(0);
        let v: Complex64 = h.iter().zip(w0.iter()).map(|(a, b)| a * b).sum();
        v.norm_sqr() / w0.norm_squared()
    }
}

/// Effective gain of a user served by zero-forcing with `nulled` extra rows.
pub fn zf_effective_gain(rng: &mut ChaCha8Rng, antennas: usize, nulled: usize) -> Result<f64> {
    let rows: Vec<Complex64> = (0..nulled + 1).flat_map(|_| cn_vector(rng, antennas)).collect();
    let h = DMatrix::from_row_slice(nulled + 1, antennas, &rows);
    Ok(zf_precoder(h)?.signal_gain())
}

fn isotropic_gain(rng: &mut ChaCha8Rng, antennas: usize) -> f64 {
    let h = cn_vector(rng, antennas);
    let w = cn_vector(rng, antennas);
    let norm2: f64 = w.iter().map(|x| x.norm_sqr()).sum();
    let v: Complex64 = h.iter().zip(&w).map(|(a, b)| a * b).sum();
    v.norm_sqr() / norm2
}

/// Drop generator bound to one parameter set.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub params: SystemParams,
    pub seed: u64,
    pub window: f64,
    /// Radius of the inner disc drawn first; `min(window, default)`.
    base_window: f64,
    pub path: ChannelPath,
}

impl Simulator {
    pub fn new(params: &SystemParams, numerics: &NumericsParams) -> Result<Self> {
        for (name, v) in [("lambda1", params.lambda1), ("lambda2", params.lambda2), ("lambda_u", params.lambda_u)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(domain("simulator", format!("{name} = {v} must be positive")));
            }
        }
        if !(params.p1 > 0.0 && params.p2 > 0.0 && params.bias >= 1.0) {
            return Err(domain("simulator", "powers must be positive and the bias at least 1"));
        }
        let window = numerics.window_radius(params);
        if !(window > 0.0 && window.is_finite()) {
            return Err(domain("simulator", format!("window radius {window} must be positive")));
        }
        let default = 6.0 / (PI * params.lambda_min()).sqrt();
        Ok(Simulator {
            params: *params,
            seed: numerics.rng_seed,
            window,
            base_window: window.min(default),
            path: ChannelPath::Fast,
        })
    }

    pub fn with_path(mut self, path: ChannelPath) -> Self {
        self.path = path;
        self
    }

    fn check_scheme(&self, scheme: &SchemeParams) -> Result<()> {
        match scheme.scheme {
            Scheme::InterferenceNulling if scheme.in_dof >= self.params.n1 => {
                Err(domain("simulator", format!("in_dof {} must be below n1 = {}", scheme.in_dof, self.params.n1)))
            }
            Scheme::Abs if !(scheme.abs_eta > 0.0 && scheme.abs_eta < 1.0) => {
                Err(domain("simulator", format!("abs_eta {} outside (0, 1)", scheme.abs_eta)))
            }
            _ => Ok(()),
        }
    }

    fn tier_points(&self, drop: u64, inner_lane: u64, outer_lane: u64, density: f64, attempt: u32) -> Vec<[f64; 2]> {
        let mut pts = Vec::new();
        let mut rng = substream(self.seed, drop, inner_lane, attempt as u64);
        annulus_points(&mut rng, density, 0.0, self.base_window, &mut pts);
        if self.window > self.base_window {
            let mut rng = substream(self.seed, drop, outer_lane, attempt as u64);
            annulus_points(&mut rng, density, self.base_window, self.window, &mut pts);
        }
        pts
    }

    /// Network drop `drop` with `in_dof` nulling DoF per macro-BS.
    pub fn realization(&self, in_dof: usize, drop: u64) -> Result<NetworkRealization> {
        let p = &self.params;
        let mut resamples = 0;
        let (macros, picos) = loop {
            let m = self.tier_points(drop, lane::MACRO, lane::MACRO_OUTER, p.lambda1, resamples);
            let q = self.tier_points(drop, lane::PICO, lane::PICO_OUTER, p.lambda2, resamples);
            if !m.is_empty() && !q.is_empty() {
                break (m, q);
            }
            resamples += 1;
            if resamples > MAX_RESAMPLES {
                return Err(domain("sample_realization", "window too small: a tier stays empty"));
            }
        };
        let mut users = vec![[0.0, 0.0]];
        users.extend(self.tier_points(drop, lane::USER, lane::USER_OUTER, p.lambda_u, 0));

        let macro_grid = Grid::new(&macros, self.window, p.lambda1);
        let pico_grid = Grid::new(&picos, self.window, p.lambda2);
        let (lp1, lp2, lb) = (p.p1.ln(), p.p2.ln(), p.bias.ln());
        let mut records = Vec::with_capacity(users.len());
        let mut macro_load = vec![0u32; macros.len()];
        let mut pico_load = vec![0u32; picos.len()];
        let mut pico_offloaded_load = vec![0u32; picos.len()];
        for &u in &users {
            let (m, dm2) = macro_grid.nearest(&macros, u).expect("macro tier is nonempty");
            let (q, dq2) = pico_grid.nearest(&picos, u).expect("pico tier is nonempty");
            let sm = ln_received(lp1, p.alpha1, dm2);
            let sq = ln_received(lp2, p.alpha2, dq2);
            let rec = if sm > sq + lb {
                macro_load[m as usize] += 1;
                UserRecord { tier: Tier::Macro, serving: m, nearest_macro: m, class: UserClass::Macro }
            } else {
                pico_load[q as usize] += 1;
                let class = if sq >= sm {
                    UserClass::PicoNonOffloaded
                } else {
                    pico_offloaded_load[q as usize] += 1;
                    UserClass::Offloaded
                };
                UserRecord { tier: Tier::Pico, serving: q, nearest_macro: m, class }
            };
            records.push(rec);
        }

        let macro_schedule =
            schedule(&records, Tier::Macro, &macro_load, substream(self.seed, drop, lane::SCHEDULE_MACRO, 0));
        let pico_schedule =
            schedule(&records, Tier::Pico, &pico_load, substream(self.seed, drop, lane::SCHEDULE_PICO, 0));

        let mut active_offloaded = vec![Vec::new(); macros.len()];
        for s in pico_schedule.iter().flatten() {
            let r = &records[*s as usize];
            if r.class == UserClass::Offloaded {
                active_offloaded[r.nearest_macro as usize].push(*s);
            }
        }
        for list in &mut active_offloaded {
            list.sort_unstable();
        }
        let in_assignments = active_offloaded
            .iter()
            .enumerate()
            .map(|(m, list)| {
                if list.len() <= in_dof {
                    list.clone()
                } else {
                    let mut rng = substream(self.seed, drop, lane::SELECT, m as u64);
                    let mut pick: Vec<u32> =
                        rand::seq::index::sample(&mut rng, list.len(), in_dof).into_iter().map(|i| list[i]).collect();
                    pick.sort_unstable();
                    pick
                }
            })
            .collect();

        Ok(NetworkRealization {
            drop_index: drop,
            window: self.window,
            in_dof,
            macros,
            picos,
            users,
            records,
            macro_schedule,
            pico_schedule,
            macro_load,
            pico_load,
            pico_offloaded_load,
            active_offloaded,
            in_assignments,
            resamples,
        })
    }

    /// Fading draw for the typical user of `real`.
    pub fn channel(&self, real: &NetworkRealization) -> Result<ChannelDraw> {
        let p = &self.params;
        let typ = real.typical();
        let drop = real.drop_index;
        let mut sig_rng = substream(self.seed, drop, lane::SIGNAL, 0);
        let mut mrng = substream(self.seed, drop, lane::MACRO_GAIN, 0);
        let mut prng = substream(self.seed, drop, lane::PICO_GAIN, 0);
        let used = real.in_assignments[typ.nearest_macro as usize].len();
        match self.path {
            ChannelPath::Fast => {
                let shape = match typ.tier {
                    Tier::Macro => p.n1 - used,
                    Tier::Pico => p.n2,
                };
                let signal =
                    Gamma::new(shape as f64, 1.0).map_err(|e| domain("channel", e.to_string()))?.sample(&mut sig_rng);
                let macro_gains = (0..real.macros.len()).map(|_| Exp1.sample(&mut mrng)).collect();
                let pico_gains = (0..real.picos.len()).map(|_| Exp1.sample(&mut prng)).collect();
                Ok(ChannelDraw { signal, macro_gains, pico_gains, precoder: None })
            }
            ChannelPath::Explicit => {
                let near = typ.nearest_macro as usize;
                let h_typ_macro = cn_vector(&mut sig_rng, p.n1);
                let mut macro_gains: Vec<f64> =
                    (0..real.macros.len()).map(|_| isotropic_gain(&mut mrng, p.n1)).collect();
                let pico_gains = (0..real.picos.len()).map(|_| isotropic_gain(&mut prng, p.n2)).collect();
                // rows at the nearest macro-BS: its served user, then its IN targets
                let targets = &real.in_assignments[near];
                let served_is_typical = typ.tier == Tier::Macro;
                let mut rows: Vec<Complex64> = Vec::new();
                let served = if served_is_typical { h_typ_macro.clone() } else { cn_vector(&mut sig_rng, p.n1) };
                rows.extend(&served);
                for &t in targets {
                    if t == 0 && !served_is_typical {
                        rows.extend(&h_typ_macro);
                    } else {
                        rows.extend(cn_vector(&mut sig_rng, p.n1));
                    }
                }
                let k = rows.len() / p.n1;
                let zf = zf_precoder(DMatrix::from_row_slice(k, p.n1, &rows))?;
                let signal = if served_is_typical {
                    zf.signal_gain()
                } else {
                    let h = cn_vector(&mut sig_rng, p.n2);
                    h.iter().map(|x| x.norm_sqr()).sum()
                };
                if !served_is_typical {
                    macro_gains[near] = zf.gain_toward(&h_typ_macro);
                }
                Ok(ChannelDraw { signal, macro_gains, pico_gains, precoder: Some(zf) })
            }
        }
    }

    /// Typical-user outcome of one realization and channel draw.
    pub fn evaluate(&self, real: &NetworkRealization, ch: &ChannelDraw, scheme: &SchemeParams) -> TypicalOutcome {
        let p = &self.params;
        let typ = *real.typical();
        let near = typ.nearest_macro as usize;
        let protected = real.typical_protected();
        let abs = scheme.scheme == Scheme::Abs;
        let class = match (typ.class, abs) {
            (UserClass::Offloaded, false) if protected => UserClass::OffloadedProtected,
            (UserClass::Offloaded, false) => UserClass::OffloadedUnprotected,
            (c, _) => c,
        };
        let macros_silent = abs && class == UserClass::Offloaded;
        let d2 = |x: [f64; 2]| x[0] * x[0] + x[1] * x[1];
        let mut interference = 0.0;
        if !macros_silent {
            for (i, &m) in real.macros.iter().enumerate() {
                let excluded = match typ.tier {
                    Tier::Macro => i == typ.serving as usize,
                    Tier::Pico => ch.precoder.is_none() && class == UserClass::OffloadedProtected && i == near,
                };
                if !excluded {
                    interference += p.p1 * ch.macro_gains[i] * d2(m).powf(-0.5 * p.alpha1);
                }
            }
        }
        for (i, &q) in real.picos.iter().enumerate() {
            if !(typ.tier == Tier::Pico && i == typ.serving as usize) {
                interference += p.p2 * ch.pico_gains[i] * d2(q).powf(-0.5 * p.alpha2);
            }
        }
        let signal = match typ.tier {
            Tier::Macro => p.p1 * ch.signal * d2(real.macros[typ.serving as usize]).powf(-0.5 * p.alpha1),
            Tier::Pico => p.p2 * ch.signal * d2(real.picos[typ.serving as usize]).powf(-0.5 * p.alpha2),
        };
        let s = typ.serving as usize;
        let (share, load) = match (class, abs) {
            (UserClass::Macro, false) => (1.0, real.macro_load[s]),
            (_, false) => (1.0, real.pico_load[s]),
            (UserClass::Macro, true) => (1.0 - scheme.abs_eta, real.macro_load[s]),
            (UserClass::PicoNonOffloaded, true) => {
                (1.0 - scheme.abs_eta, real.pico_load[s] - real.pico_offloaded_load[s])
            }
            (_, true) => (scheme.abs_eta, real.pico_offloaded_load[s]),
        };
        TypicalOutcome {
            class,
            sir: signal / interference,
            share,
            load,
            nearest_active_offloaded: real.active_offloaded[near].len() as u32,
            in_dof_used: real.in_assignments[near].len() as u32 * (typ.tier == Tier::Macro) as u32,
            signal_gain: ch.signal,
        }
    }

    pub fn outcome(&self, scheme: &SchemeParams, drop: u64) -> Result<TypicalOutcome> {
        self.check_scheme(scheme)?;
        let real = self.realization(scheme.effective_dof(), drop)?;
        let ch = self.channel(&real)?;
        Ok(self.evaluate(&real, &ch, scheme))
    }
}

/// One uniform user per BS; the typical user is always scheduled by its server.
fn schedule(records: &[UserRecord], tier: Tier, load: &[u32], mut rng: ChaCha8Rng) -> Vec<Option<u32>> {
    let draws: Vec<f64> = (0..load.len()).map(|_| rng.random::<f64>()).collect();
    let pick: Vec<u32> =
        load.iter().zip(&draws).map(|(&l, &u)| ((u * l as f64) as u32).min(l.saturating_sub(1))).collect();
    let mut seen = vec![0u32; load.len()];
    let mut out = vec![None; load.len()];
    for (i, r) in records.iter().enumerate() {
        if r.tier != tier {
            continue;
        }
        let b = r.serving as usize;
        if seen[b] == pick[b] {
            out[b] = Some(i as u32);
        }
        seen[b] += 1;
    }
    let typ = &records[0];
    if typ.tier == tier {
        out[typ.serving as usize] = Some(0);
    }
    out
}

/// Free-function form of [`Simulator::realization`].
pub fn sample_realization(
    params: &SystemParams,
    in_dof: usize,
    window: f64,
    seed: u64,
    drop: u64,
) -> Result<NetworkRealization> {
    let numerics = NumericsParams { mc_window_radius: Some(window), rng_seed: seed, ..NumericsParams::default() };
    Simulator::new(params, &numerics)?.realization(in_dof, drop)
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: u64,
}

impl Estimate {
    pub fn proportion(hits: u64, n: u64) -> Self {
        if n == 0 {
            return Estimate { value: f64::NAN, std_error: f64::NAN, samples: 0 };
        }
        let p = hits as f64 / n as f64;
        Estimate { value: p, std_error: (p * (1.0 - p) / n as f64).sqrt(), samples: n }
    }

    fn from_moments(sum: f64, sum_sq: f64, n: u64) -> Self {
        let nf = n as f64;
        let mean = sum / nf;
        let var = (sum_sq / nf - mean * mean).max(0.0);
        Estimate { value: mean, std_error: (var / nf).sqrt(), samples: n }
    }

    /// Half-width of the 95 % normal confidence interval.
    pub fn ci95(&self) -> f64 {
        1.96 * self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassEstimate {
    pub class: UserClass,
    pub fraction: Estimate,
    /// `None` when no drop produced a typical user of this class.
    pub coverage: Option<Estimate>,
}

/// Coverage estimate at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCoverage {
    pub threshold: f64,
    pub overall: Estimate,
    pub per_class: Vec<ClassEstimate>,
}

impl McCoverage {
    pub fn class(&self, class: UserClass) -> Option<&ClassEstimate> {
        self.per_class.iter().find(|c| c.class == class)
    }
}

const CLASSES: [UserClass; 5] = [
    UserClass::Macro,
    UserClass::PicoNonOffloaded,
    UserClass::OffloadedProtected,
    UserClass::OffloadedUnprotected,
    UserClass::Offloaded,
];

fn class_slot(c: UserClass) -> usize {
    CLASSES.iter().position(|&x| x == c).unwrap_or(0)
}

fn scheme_classes(scheme: Scheme) -> &'static [UserClass] {
    match scheme {
        Scheme::Abs => &[UserClass::Macro, UserClass::PicoNonOffloaded, UserClass::Offloaded],
        _ => &[
            UserClass::Macro,
            UserClass::PicoNonOffloaded,
            UserClass::OffloadedProtected,
            UserClass::OffloadedUnprotected,
        ],
    }
}

/// Runs `f` on consecutive drop ranges and returns the partial results in order.
fn run_blocks<A, F>(drops: u64, f: F) -> Result<Vec<A>>
where
    A: Send,
    F: Fn(std::ops::Range<u64>) -> Result<A> + Sync + Send,
{
    let blocks = drops.div_ceil(BLOCK);
    (0..blocks).into_par_iter().map(|b| f(b * BLOCK..((b + 1) * BLOCK).min(drops))).collect()
}

#[derive(Clone)]
struct Tally {
    n: u64,
    per_class: [u64; 5],
    hits: Vec<[u64; 5]>,
}

impl Tally {
    fn new(k: usize) -> Self {
        Tally { n: 0, per_class: [0; 5], hits: vec![[0; 5]; k] }
    }

    fn merge(&mut self, o: &Tally) {
        self.n += o.n;
        for c in 0..5 {
            self.per_class[c] += o.per_class[c];
        }
        for (a, b) in self.hits.iter_mut().zip(&o.hits) {
            for c in 0..5 {
                a[c] += b[c];
            }
        }
    }

    fn report(&self, thresholds: &[f64], classes: &[UserClass]) -> Vec<McCoverage> {
        thresholds
            .iter()
            .zip(&self.hits)
            .map(|(&t, h)| McCoverage {
                threshold: t,
                overall: Estimate::proportion(h.iter().sum(), self.n),
                per_class: classes
                    .iter()
                    .map(|&c| {
                        let s = class_slot(c);
                        ClassEstimate {
                            class: c,
                            fraction: Estimate::proportion(self.per_class[s], self.n),
                            coverage: (self.per_class[s] > 0).then(|| Estimate::proportion(h[s], self.per_class[s])),
                        }
                    })
                    .collect(),
            })
            .collect()
    }
}

fn tally_outcomes<P>(
    sim: &Simulator,
    scheme: &SchemeParams,
    thresholds: &[f64],
    drops: u64,
    covered: P,
) -> Result<Vec<McCoverage>>
where
    P: Fn(&TypicalOutcome, f64) -> bool + Sync + Send,
{
    if drops == 0 {
        return Err(domain("monte_carlo", "need at least one drop"));
    }
    sim.check_scheme(scheme)?;
    let parts = run_blocks(drops, |range| {
        let mut t = Tally::new(thresholds.len());
        for d in range {
            let o = sim.outcome(scheme, d)?;
            let s = class_slot(o.class);
            t.n += 1;
            t.per_class[s] += 1;
            for (i, &th) in thresholds.iter().enumerate() {
                if covered(&o, th) {
                    t.hits[i][s] += 1;
                }
            }
        }
        Ok(t)
    })?;
    let mut total = Tally::new(thresholds.len());
    for p in &parts {
        total.merge(p);
    }
    Ok(total.report(thresholds, scheme_classes(scheme.scheme)))
}

impl Simulator {
    /// `Pr(SIR > β)` overall and per class, one entry per threshold.
    pub fn sir_coverage(&self, scheme: &SchemeParams, betas: &[f64], drops: u64) -> Result<Vec<McCoverage>> {
        tally_outcomes(self, scheme, betas, drops, |o, b| o.sir > b)
    }

    /// `Pr(rate > τ)` overall and per class, one entry per threshold.
    pub fn rate_coverage(&self, scheme: &SchemeParams, taus: &[f64], drops: u64) -> Result<Vec<McCoverage>> {
        let bw = self.params.bandwidth;
        tally_outcomes(self, scheme, taus, drops, |o, t| o.rate(bw) > t || t == 0.0)
    }
}

pub fn estimate_sir_coverage(
    params: &SystemParams,
    numerics: &NumericsParams,
    scheme: &SchemeParams,
    betas: &[f64],
    drops: u64,
) -> Result<Vec<McCoverage>> {
    Simulator::new(params, numerics)?.sir_coverage(scheme, betas, drops)
}

pub fn estimate_rate_coverage(
    params: &SystemParams,
    numerics: &NumericsParams,
    scheme: &SchemeParams,
    taus: &[f64],
    drops: u64,
) -> Result<Vec<McCoverage>> {
    Simulator::new(params, numerics)?.rate_coverage(scheme, taus, drops)
}

/// Estimates of `E[exp(−sI)]` and `E[(sI)^m exp(−sI)]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FunctionalEstimate {
    pub window: f64,
    pub laplace: Estimate,
    /// Entry `m - 1` holds order `m`.
    pub scaled: Vec<Estimate>,
}

/// Interference of a PPP tier with unit exponential marks outside
/// `field.radius`, sampled in a disc window.
pub fn estimate_interference_functional(
    field: &LaplaceField,
    numerics: &NumericsParams,
    max_order: usize,
    drops: u64,
) -> Result<FunctionalEstimate> {
    if !(field.radius > 0.0 && field.s >= 0.0 && field.density > 0.0 && field.alpha > 2.0) {
        return Err(domain("interference_functional", "need r > 0, s >= 0, λ > 0 and α > 2"));
    }
    if drops == 0 {
        return Err(domain("interference_functional", "need at least one drop"));
    }
    let window = numerics
        .mc_window_radius
        .unwrap_or_else(|| (6.0 / (PI * field.density).sqrt()).max(FIELD_GUARD * field.radius));
    if window <= field.radius {
        return Err(domain("interference_functional", format!("window {window} inside the exclusion radius")));
    }
    let k = max_order + 1;
    let seed = numerics.rng_seed;
    let parts = run_blocks(drops, |range| {
        let mut sums = vec![(0.0, 0.0); k];
        let mut pts = Vec::new();
        for d in range {
            let mut rng = substream(seed, d, lane::FIELD, 0);
            pts.clear();
            annulus_points(&mut rng, field.density, field.radius, window, &mut pts);
            let mut i = 0.0;
            for q in &pts {
                let g: f64 = Exp1.sample(&mut rng);
                i += g * (q[0] * q[0] + q[1] * q[1]).powf(-0.5 * field.alpha);
            }
            let x = field.s * i;
            let e = (-x).exp();
            let mut v = e;
            for (m, s) in sums.iter_mut().enumerate() {
                if m > 0 {
                    v *= x;
                }
                s.0 += v;
                s.1 += v * v;
            }
        }
        Ok(sums)
    })?;
    let mut tot = vec![(0.0, 0.0); k];
    for p in &parts {
        for (a, b) in tot.iter_mut().zip(p) {
            a.0 += b.0;
            a.1 += b.1;
        }
    }
    let est: Vec<Estimate> = tot.iter().map(|&(s, q)| Estimate::from_moments(s, q, drops)).collect();
    Ok(FunctionalEstimate { window, laplace: est[0], scaled: est[1..].to_vec() })
}

/// Empirical offloading statistics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffloadPmfs {
    /// Active offloaded users at the serving macro-BS of a macro typical user.
    pub macro_side: Vec<f64>,
    pub macro_samples: u64,
    /// Active offloaded users, typical included, at the nearest macro-BS of an
    /// offloaded typical user; entry `n` is `Pr(n)` and entry 0 is zero.
    pub offloaded_side: Vec<f64>,
    pub offloaded_samples: u64,
    /// Protection probability `E[min(1, U/n)]` for `U = 0..n1`.
    pub in_probability: Vec<f64>,
    /// Active offloaded users per macro-BS, over macro-BSs within half the window.
    pub per_macro: Vec<f64>,
    pub per_macro_samples: u64,
}

pub fn estimate_offload_pmfs(params: &SystemParams, numerics: &NumericsParams, drops: u64) -> Result<OffloadPmfs> {
    if drops == 0 {
        return Err(domain("offload_pmfs", "need at least one drop"));
    }
    let sim = Simulator::new(params, numerics)?;
    let central = 0.5 * sim.window;
    let bump = |h: &mut Vec<u64>, n: usize| {
        if h.len() <= n {
            h.resize(n + 1, 0);
        }
        h[n] += 1;
    };
    let parts = run_blocks(drops, |range| {
        let mut macro_side: Vec<u64> = Vec::new();
        let mut off_side: Vec<u64> = Vec::new();
        let mut per_macro: Vec<u64> = Vec::new();
        for d in range {
            let real = sim.realization(0, d)?;
            for (m, p) in real.macros.iter().enumerate() {
                if p[0].hypot(p[1]) < central {
                    bump(&mut per_macro, real.active_offloaded[m].len());
                }
            }
            let typ = real.typical();
            let n = real.active_offloaded[typ.nearest_macro as usize].len();
            let hist = match typ.class {
                UserClass::Macro => &mut macro_side,
                UserClass::Offloaded => &mut off_side,
                _ => continue,
            };
            bump(hist, n);
        }
        Ok((macro_side, off_side, per_macro))
    })?;
    let mut macro_side: Vec<u64> = Vec::new();
    let mut off_side: Vec<u64> = Vec::new();
    let mut per_macro: Vec<u64> = Vec::new();
    for (a, b, c) in &parts {
        for (dst, src) in [(&mut macro_side, a), (&mut off_side, b), (&mut per_macro, c)] {
            if dst.len() < src.len() {
                dst.resize(src.len(), 0);
            }
            for (x, y) in dst.iter_mut().zip(src) {
                *x += y;
            }
        }
    }
    let macro_samples: u64 = macro_side.iter().sum();
    let offloaded_samples: u64 = off_side.iter().sum();
    if macro_samples == 0 {
        return Err(Error::InsufficientSamples { what: "macro typical user", got: drops });
    }
    if offloaded_samples == 0 {
        return Err(Error::InsufficientSamples { what: "offloaded typical user", got: drops });
    }
    let norm = |h: &[u64], n: u64| h.iter().map(|&c| c as f64 / n as f64).collect::<Vec<_>>();
    let offloaded_side = norm(&off_side, offloaded_samples);
    let in_probability = (0..params.n1)
        .map(|u| {
            offloaded_side
                .iter()
                .enumerate()
                .skip(1)
                .map(|(n, p)| p * (u as f64 / n as f64).min(1.0))
                .sum::<f64>()
                .min(1.0)
        })
        .collect();
    let per_macro_samples: u64 = per_macro.iter().sum();
    Ok(OffloadPmfs {
        per_macro: norm(&per_macro, per_macro_samples.max(1)),
        per_macro_samples,
        macro_side: norm(&macro_side, macro_samples),
        macro_samples,
        offloaded_side,
        offloaded_samples,
        in_probability,
    })
}

fn tier_code(t: Tier) -> u8 {
    match t {
        Tier::Macro => 1,
        Tier::Pico => 2,
    }
}

fn class_code(c: UserClass) -> u8 {
    class_slot(c) as u8
}

/// Writes `real` in the versioned little-endian dump format.
pub fn write_realization<W: Write>(real: &NetworkRealization, mut w: W) -> io::Result<()> {
    let u32s = |w: &mut W, v: u32| w.write_all(&v.to_le_bytes());
    w.write_all(&DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    w.write_all(&0u16.to_le_bytes())?;
    w.write_all(&real.drop_index.to_le_bytes())?;
    w.write_all(&real.window.to_le_bytes())?;
    u32s(&mut w, real.in_dof as u32)?;
    u32s(&mut w, real.resamples)?;
    for n in [real.macros.len(), real.picos.len(), real.users.len()] {
        u32s(&mut w, n as u32)?;
    }
    for pts in [&real.macros, &real.picos, &real.users] {
        for p in pts.iter() {
            w.write_all(&p[0].to_le_bytes())?;
            w.write_all(&p[1].to_le_bytes())?;
        }
    }
    for r in &real.records {
        w.write_all(&[tier_code(r.tier), class_code(r.class)])?;
        w.write_all(&0u16.to_le_bytes())?;
        u32s(&mut w, r.serving)?;
        u32s(&mut w, r.nearest_macro)?;
    }
    for sched in [&real.macro_schedule, &real.pico_schedule] {
        for s in sched.iter() {
            u32s(&mut w, s.unwrap_or(u32::MAX))?;
        }
    }
    for loads in [&real.macro_load, &real.pico_load, &real.pico_offloaded_load] {
        for &l in loads.iter() {
            u32s(&mut w, l)?;
        }
    }
    for m in 0..real.macros.len() {
        for list in [&real.active_offloaded[m], &real.in_assignments[m]] {
            u32s(&mut w, list.len() as u32)?;
            for &i in list.iter() {
                u32s(&mut w, i)?;
            }
        }
    }
    Ok(())
}

struct LeReader<R> {
    r: R,
}

impl<R: Read> LeReader<R> {
    fn bytes<const N: usize>(&mut self) -> io::Result<[u8; N]> {
        let mut b = [0u8; N];
        self.r.read_exact(&mut b)?;
        Ok(b)
    }
    fn u16(&mut self) -> io::Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }
    fn u32(&mut self) -> io::Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> io::Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn f64(&mut self) -> io::Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn points(&mut self, n: usize) -> io::Result<Vec<[f64; 2]>> {
        (0..n).map(|_| Ok([self.f64()?, self.f64()?])).collect()
    }
    fn u32s(&mut self, n: usize) -> io::Result<Vec<u32>> {
        (0..n).map(|_| self.u32()).collect()
    }
}

fn bad_data(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

/// Reads one record written by [`write_realization`].
pub fn read_realization<R: Read>(r: R) -> io::Result<NetworkRealization> {
    let mut r = LeReader { r };
    if r.bytes::<4>()? != DUMP_MAGIC {
        return Err(bad_data("not a realization dump"));
    }
    let version = r.u16()?;
    if version != DUMP_VERSION {
        return Err(bad_data(format!("unsupported dump version {version}")));
    }
    r.u16()?;
    let drop_index = r.u64()?;
    let window = r.f64()?;
    let in_dof = r.u32()? as usize;
    let resamples = r.u32()?;
    let (nm, np, nu) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let macros = r.points(nm)?;
    let picos = r.points(np)?;
    let users = r.points(nu)?;
    let mut records = Vec::with_capacity(nu);
    for _ in 0..nu {
        let [t, c] = r.bytes::<2>()?;
        r.u16()?;
        let tier = match t {
            1 => Tier::Macro,
            2 => Tier::Pico,
            _ => return Err(bad_data(format!("bad tier code {t}"))),
        };
        let class = *CLASSES.get(c as usize).ok_or_else(|| bad_data(format!("bad class code {c}")))?;
        records.push(UserRecord { tier, class, serving: r.u32()?, nearest_macro: r.u32()? });
    }
    let sched = |v: Vec<u32>| v.into_iter().map(|x| (x != u32::MAX).then_some(x)).collect::<Vec<_>>();
    let macro_schedule = sched(r.u32s(nm)?);
    let pico_schedule = sched(r.u32s(np)?);
    let macro_load = r.u32s(nm)?;
    let pico_load = r.u32s(np)?;
    let pico_offloaded_load = r.u32s(np)?;
    let mut active_offloaded = Vec::with_capacity(nm);
    let mut in_assignments = Vec::with_capacity(nm);
    for _ in 0..nm {
        let n = r.u32()? as usize;
        active_offloaded.push(r.u32s(n)?);
        let n = r.u32()? as usize;
        in_assignments.push(r.u32s(n)?);
    }
    Ok(NetworkRealization {
        drop_index,
        window,
        in_dof,
        macros,
        picos,
        users,
        records,
        macro_schedule,
        pico_schedule,
        macro_load,
        pico_load,
        pico_offloaded_load,
        active_offloaded,
        in_assignments,
        resamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Config;
    use proptest::prelude::*;

    fn small() -> (SystemParams, NumericsParams) {
        let cfg = Config::default();
        let params = cfg.system_params().with_lambda_u(2e-3);
        (params, cfg.numerics)
    }

    fn in_scheme(u: usize) -> SchemeParams {
        SchemeParams { scheme: Scheme::InterferenceNulling, in_dof: u, abs_eta: 0.5, tau: 0.0 }
    }

    #[test]
    fn drops_are_reproducible() {
        let (params, numerics) = small();
        let sim = Simulator::new(&params, &numerics).unwrap();
        let a = sim.realization(3, 17).unwrap();
        let b = sim.realization(3, 17).unwrap();
        assert_eq!(a, b);
        let c = sim.realization(3, 18).unwrap();
        assert_ne!(a.macros, c.macros);
        let free = sample_realization(&params, 3, sim.window, numerics.rng_seed, 17).unwrap();
        assert_eq!(a, free);
    }

    #[test]
    fn realization_invariants() {
        let (params, numerics) = small();
        let sim = Simulator::new(&params, &numerics).unwrap();
        let (lp1, lp2) = (params.p1.ln(), params.p2.ln());
        for d in 0..20 {
            let u = d as usize % params.n1;
            let r = sim.realization(u, d).unwrap();
            assert_eq!(r.users[0], [0.0, 0.0]);
            let total: u32 = r.macro_load.iter().chain(&r.pico_load).sum();
            assert_eq!(total as usize, r.users.len());
            for (i, rec) in r.records.iter().enumerate() {
                let dist2 = |p: [f64; 2]| (p[0] - r.users[i][0]).powi(2) + (p[1] - r.users[i][1]).powi(2);
                let nm = r.macros.iter().map(|&p| dist2(p)).fold(f64::INFINITY, f64::min);
                let np = r.picos.iter().map(|&p| dist2(p)).fold(f64::INFINITY, f64::min);
                assert_eq!(dist2(r.macros[rec.nearest_macro as usize]), nm);
                let sm = ln_received(lp1, params.alpha1, nm);
                let sp = ln_received(lp2, params.alpha2, np);
                let expect = if sm > sp + params.bias.ln() {
                    UserClass::Macro
                } else if sp >= sm {
                    UserClass::PicoNonOffloaded
                } else {
                    UserClass::Offloaded
                };
                assert_eq!(rec.class, expect);
                if rec.tier == Tier::Pico {
                    assert_eq!(dist2(r.picos[rec.serving as usize]), np);
                }
            }
            for (sched, tier) in [(&r.macro_schedule, Tier::Macro), (&r.pico_schedule, Tier::Pico)] {
                for (b, s) in sched.iter().enumerate() {
                    if let Some(s) = s {
                        let rec = r.records[*s as usize];
                        assert_eq!((rec.tier, rec.serving as usize), (tier, b));
                    }
                }
            }
            let typ = r.typical();
            let own = match typ.tier {
                Tier::Macro => r.macro_schedule[typ.serving as usize],
                Tier::Pico => r.pico_schedule[typ.serving as usize],
            };
            assert_eq!(own, Some(0));
            for (m, act) in r.active_offloaded.iter().enumerate() {
                assert_eq!(r.in_assignments[m].len(), act.len().min(u));
                assert!(r.in_assignments[m].iter().all(|x| act.contains(x)));
                for &a in act {
                    let rec = r.records[a as usize];
                    assert_eq!(rec.class, UserClass::Offloaded);
                    assert_eq!(rec.nearest_macro as usize, m);
                    assert_eq!(r.pico_schedule[rec.serving as usize], Some(a));
                }
            }
        }
    }

    #[test]
    fn larger_window_keeps_the_inner_drop() {
        let (params, numerics) = small();
        let sim = Simulator::new(&params, &numerics).unwrap();
        let wide =
            Simulator::new(&params, &NumericsParams { mc_window_radius: Some(2.0 * sim.window), ..numerics }).unwrap();
        let a = sim.realization(2, 5).unwrap();
        let b = wide.realization(2, 5).unwrap();
        assert!(b.macros.len() > a.macros.len());
        assert_eq!(&b.macros[..a.macros.len()], &a.macros[..]);
        assert_eq!(&b.picos[..a.picos.len()], &a.picos[..]);
        assert_eq!(&b.users[..a.users.len()], &a.users[..]);
    }

    #[test]
    fn dump_round_trips() {
        let (params, numerics) = small();
        let r = Simulator::new(&params, &numerics).unwrap().realization(4, 3).unwrap();
        let mut buf = Vec::new();
        write_realization(&r, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"HNRZ");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), DUMP_VERSION);
        let back = read_realization(&buf[..]).unwrap();
        assert_eq!(back, r);
        let mut bad = buf.clone();
        bad[4] = 9;
        assert!(read_realization(&bad[..]).is_err());
        assert!(read_realization(&buf[..buf.len() - 3]).is_err());
    }

    #[test]
    fn zero_forcing_nulls_and_has_gamma_mean() {
        let mut rng = substream(7, 0, 0, 0);
        let rows: Vec<Complex64> = (0..3).flat_map(|_| cn_vector(&mut rng, 4)).collect();
        let zf = zf_precoder(DMatrix::from_row_slice(3, 4, &rows)).unwrap();
        assert!(zf.leakage < 1e-20, "{}", zf.leakage);
        assert!(zf_precoder(DMatrix::from_row_slice(3, 1, &rows[..3])).is_err());
        let n = 20_000;
        let mean: f64 = (0..n).map(|_| zf_effective_gain(&mut rng, 4, 2).unwrap()).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.04, "{mean}");
    }

    #[test]
    fn zero_thresholds_are_always_covered() {
        let (params, numerics) = small();
        let sim = Simulator::new(&params, &numerics).unwrap();
        let s = sim.sir_coverage(&in_scheme(2), &[0.0], 300).unwrap();
        assert_eq!(s[0].overall.value, 1.0);
        let r = sim.rate_coverage(&in_scheme(2), &[0.0], 300).unwrap();
        assert_eq!(r[0].overall.value, 1.0);
    }

    #[test]
    fn rate_depends_on_threshold_over_bandwidth() {
        let (params, numerics) = small();
        let wide = SystemParams { bandwidth: 2.0 * params.bandwidth, ..params };
        let a = estimate_rate_coverage(&params, &numerics, &in_scheme(2), &[3e5, 1e6], 400).unwrap();
        let b = estimate_rate_coverage(&wide, &numerics, &in_scheme(2), &[6e5, 2e6], 400).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.overall, y.overall);
        }
    }

    #[test]
    fn dense_picos_take_over() {
        let (params, numerics) = small();
        let dense = SystemParams { lambda2: 200.0 * params.lambda2, ..params };
        let r = estimate_sir_coverage(&dense, &numerics, &in_scheme(0), &[1.0], 300).unwrap();
        let frac = r[0].class(UserClass::PicoNonOffloaded).unwrap().fraction.value;
        assert!(frac > 0.97, "{frac}");
    }

    #[test]
    fn zero_dof_never_protects() {
        let (params, numerics) = small();
        let r = estimate_sir_coverage(&params, &numerics, &in_scheme(0), &[1.0], 400).unwrap();
        assert_eq!(r[0].class(UserClass::OffloadedProtected).unwrap().fraction.value, 0.0);
        let r = estimate_sir_coverage(&params, &numerics, &in_scheme(params.n1 - 1), &[1.0], 400).unwrap();
        let p = r[0].class(UserClass::OffloadedProtected).unwrap().fraction.value;
        let q = r[0].class(UserClass::OffloadedUnprotected).unwrap().fraction.value;
        assert!(p > 5.0 * q, "{p} vs {q}");
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let (params, numerics) = small();
        assert!(estimate_sir_coverage(&params, &numerics, &in_scheme(params.n1), &[1.0], 10).is_err());
        let abs = SchemeParams { scheme: Scheme::Abs, abs_eta: 1.0, ..in_scheme(0) };
        assert!(estimate_rate_coverage(&params, &numerics, &abs, &[1.0], 10).is_err());
        assert!(estimate_sir_coverage(&params, &numerics, &in_scheme(1), &[1.0], 0).is_err());
    }

    #[test]
    fn unbiased_network_has_no_offloaded_users() {
        let (params, numerics) = small();
        let err = estimate_offload_pmfs(&params.with_bias(1.0), &numerics, 200).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { what: "offloaded typical user", .. }));
    }

    #[test]
    fn functional_at_zero_is_one() {
        let field = LaplaceField { density: 1e-4, alpha: 4.0, radius: 20.0, s: 0.0 };
        let e = estimate_interference_functional(&field, &NumericsParams::default(), 3, 50).unwrap();
        assert_eq!(e.laplace.value, 1.0);
        assert!(e.scaled.iter().all(|m| m.value == 0.0));
        assert_eq!(e.scaled.len(), 3);
    }

    #[test]
    fn estimates_ignore_thread_count() {
        let (params, numerics) = small();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                let field = LaplaceField { density: 1e-4, alpha: 4.0, radius: 20.0, s: 1e5 };
                let f = estimate_interference_functional(&field, &numerics, 2, 700).unwrap();
                let c = estimate_rate_coverage(&params, &numerics, &in_scheme(3), &[1e5, 1e6], 600).unwrap();
                (f, c)
            })
        };
        assert_eq!(run(1), run(3));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn grid_nearest_matches_brute_force(
            pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 1..60),
            qx in -100.0f64..100.0,
            qy in -100.0f64..100.0,
            density in 1e-4f64..1e-1,
        ) {
            let pts: Vec<[f64; 2]> = pts.into_iter().map(|(x, y)| [x, y]).collect();
            let grid = Grid::new(&pts, 100.0, density);
            let (_, d2) = grid.nearest(&pts, [qx, qy]).unwrap();
            let brute = pts.iter().map(|p| (p[0] - qx).powi(2) + (p[1] - qy).powi(2)).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(d2, brute);
        }
    }
}
