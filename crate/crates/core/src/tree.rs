//! Finite truncations of the group `G = ⊕_{k≥1} Z(n_k)` and its tree of balls.
//!
//! Leaves are encoded in mixed radix: `g = Σ_k x_k π_{k-1}` with digits
//! `0 ≤ x_k < n_k`. With this encoding the level-`j` ball containing `g` is
//! the coset `g + G_j`, whose index among level-`j` balls is `g / π_j`.
//!
//! Levels follow the finite-subgroup convention: level 0 is the horocycle of
//! singletons, level `j` holds the cosets of `G_j` (each of `π_j` leaves) and
//! level `L` is the root of the truncated window. Moving up in level moves
//! towards the distinguished boundary point of the infinite tree.

use std::ops::Range;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rule for the radices `n_j` with `j > L`.
///
/// Only tail formulas and the neighbourhood-selection machinery look past the
/// truncation depth; the window itself never does.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Continuation {
    /// `n_j = n` for every `j > L`.
    Constant(u64),
    /// `n_j = slope * j + intercept` for every `j > L`.
    Affine { slope: u64, intercept: u64 },
}

impl Continuation {
    fn radix(&self, j: usize) -> u64 {
        match *self {
            Continuation::Constant(n) => n,
            Continuation::Affine { slope, intercept } => slope * j as u64 + intercept,
        }
    }
}

/// The radices `n_1, …, n_L` of a truncated tree together with the rule that
/// continues them past the truncation depth.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadixSequence {
    radices: Vec<u64>,
    continuation: Continuation,
    orders: Vec<BigUint>,
}

/// A ball of the truncated tree: the `index`-th coset of `G_level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BallAddress {
    pub level: usize,
    pub index: usize,
}

impl BallAddress {
    pub fn new(level: usize, index: usize) -> Self {
        Self { level, index }
    }
}

impl RadixSequence {
    pub fn new(radices: Vec<u64>, continuation: Continuation) -> Result<Self> {
        if let Some(pos) = radices.iter().position(|&n| n < 2) {
            return Err(Error::invalid(
                "radices",
                format!(
                    "n_{} = {} but every radix must be at least 2",
                    pos + 1,
                    radices[pos]
                ),
            ));
        }
        match continuation {
            Continuation::Constant(n) if n < 2 => {
                return Err(Error::invalid(
                    "continuation",
                    "constant radix must be at least 2",
                ));
            }
            Continuation::Affine { slope, intercept } => {
                let first = slope * (radices.len() as u64 + 1) + intercept;
                if first < 2 {
                    return Err(Error::invalid(
                        "continuation",
                        "affine rule yields a radix below 2",
                    ));
                }
            }
            _ => {}
        }
        let mut orders = Vec::with_capacity(radices.len() + 1);
        let mut acc = BigUint::one();
        orders.push(acc.clone());
        for &n in &radices {
            acc *= n;
            orders.push(acc.clone());
        }
        Ok(Self {
            radices,
            continuation,
            orders,
        })
    }

    /// `n_j = p` for all `j`, truncated at depth `depth`.
    pub fn constant(p: u64, depth: usize) -> Result<Self> {
        Self::new(vec![p; depth], Continuation::Constant(p))
    }

    /// Truncation depth `L`.
    pub fn depth(&self) -> usize {
        self.radices.len()
    }

    pub fn radices(&self) -> &[u64] {
        &self.radices
    }

    pub fn continuation(&self) -> Continuation {
        self.continuation
    }

    /// `n_j` for any `j ≥ 0`, with `n_0 = 1`.
    pub fn radix(&self, j: usize) -> u64 {
        match j {
            0 => 1,
            j if j <= self.radices.len() => self.radices[j - 1],
            j => self.continuation.radix(j),
        }
    }

    /// `true` when `sup_j n_j` is finite.
    pub fn is_bounded(&self) -> bool {
        matches!(
            self.continuation,
            Continuation::Constant(_) | Continuation::Affine { slope: 0, .. }
        )
    }

    /// `m = inf_{j≥1} n_j`.
    pub fn min_radix(&self) -> u64 {
        let tail_min = self.continuation.radix(self.depth() + 1);
        self.radices
            .iter()
            .copied()
            .chain([tail_min])
            .min()
            .unwrap_or(tail_min)
    }

    /// `M = sup_{j≥1} n_j`, or `None` when unbounded.
    pub fn max_radix(&self) -> Option<u64> {
        if !self.is_bounded() {
            return None;
        }
        let tail = self.continuation.radix(self.depth() + 1);
        Some(
            self.radices
                .iter()
                .copied()
                .chain([tail])
                .max()
                .unwrap_or(tail),
        )
    }

    /// Same sequence with the continuation materialised up to `depth`.
    pub fn extended(&self, depth: usize) -> Self {
        if depth <= self.depth() {
            let radices = self.radices[..depth].to_vec();
            let mut orders = self.orders[..=depth].to_vec();
            orders.shrink_to_fit();
            return Self {
                radices,
                continuation: self.continuation,
                orders,
            };
        }
        let radices = (1..=depth).map(|j| self.radix(j)).collect();
        Self::new(radices, self.continuation).expect("continuation radices are validated")
    }

    fn check_level(&self, j: usize) -> Result<()> {
        if j > self.depth() {
            Err(Error::LevelOutOfRange {
                level: j,
                max: self.depth(),
            })
        } else {
            Ok(())
        }
    }

    /// `π_j = n_1 ⋯ n_j`, exactly.
    pub fn order(&self, j: usize) -> Result<&BigUint> {
        self.check_level(j)?;
        Ok(&self.orders[j])
    }

    /// `π_j` for any `j`, following the continuation past the truncation.
    pub fn order_unbounded(&self, j: usize) -> BigUint {
        if j <= self.depth() {
            return self.orders[j].clone();
        }
        let mut acc = self.orders[self.depth()].clone();
        for i in self.depth() + 1..=j {
            acc *= self.radix(i);
        }
        acc
    }

    /// `ln π_j` for any `j`.
    pub fn ln_order(&self, j: usize) -> f64 {
        (1..=j).map(|i| (self.radix(i) as f64).ln()).sum()
    }

    /// `π_j` as a native index, for levels whose balls are enumerated.
    pub fn order_usize(&self, j: usize) -> Result<usize> {
        self.check_level(j)?;
        self.orders[j]
            .to_usize()
            .ok_or(Error::WindowTooLarge { level: j })
    }

    /// Number of leaves `π_L` of the truncated window.
    pub fn leaf_count(&self) -> Result<usize> {
        self.order_usize(self.depth())
    }

    fn check_leaf(&self, g: usize) -> Result<usize> {
        let size = self.leaf_count()?;
        if g >= size {
            Err(Error::LeafOutOfRange { leaf: g, size })
        } else {
            Ok(size)
        }
    }

    /// Balls on the geodesic from the singleton `{g}` to the root.
    pub fn ancestors(&self, g: usize) -> Result<Vec<BallAddress>> {
        self.check_leaf(g)?;
        let mut out = Vec::with_capacity(self.depth() + 1);
        let mut index = g;
        out.push(BallAddress::new(0, index));
        for (j, &n) in self.radices.iter().enumerate() {
            index /= n as usize;
            out.push(BallAddress::new(j + 1, index));
        }
        Ok(out)
    }

    /// Smallest level at which `g` and `h` share a ball; 0 iff `g == h`.
    pub fn split_level(&self, g: usize, h: usize) -> Result<usize> {
        self.check_leaf(g)?;
        self.check_leaf(h)?;
        let (mut a, mut b) = (g, h);
        let mut level = 0;
        while a != b {
            let n = self.radices[level] as usize;
            a /= n;
            b /= n;
            level += 1;
        }
        Ok(level)
    }

    /// Group sum `g + h` in `⊕ Z(n_k)`: digitwise addition without carry.
    pub fn translate(&self, g: usize, h: usize) -> Result<usize> {
        self.check_leaf(g)?;
        self.check_leaf(h)?;
        let (mut a, mut b, mut place, mut out) = (g, h, 1usize, 0usize);
        for &n in &self.radices {
            let n = n as usize;
            out += ((a % n + b % n) % n) * place;
            a /= n;
            b /= n;
            place *= n;
        }
        Ok(out)
    }

    /// Leaves of a ball, as a half-open range.
    pub fn members(&self, ball: BallAddress) -> Result<Range<usize>> {
        let size = self.order_usize(ball.level)?;
        let count = self.leaf_count()? / size;
        if ball.index >= count {
            return Err(Error::invalid(
                "ball",
                format!(
                    "index {} exceeds the {} balls at level {}",
                    ball.index, count, ball.level
                ),
            ));
        }
        Ok(ball.index * size..(ball.index + 1) * size)
    }

    /// Number of balls at `level` inside the window, `π_L / π_level`.
    pub fn ball_count(&self, level: usize) -> Result<usize> {
        Ok(self.leaf_count()? / self.order_usize(level)?)
    }
}
