//! Sparse parameter vectors for autologistic models.
//!
//! A parameter vector over `d` sites has one coordinate per site (singleton
//! potentials) and one coordinate per retained site pair (order-2 clique
//! potentials). Pairs that are not part of the support are implicitly zero.
//! A mask records coordinates constrained to zero by significance pruning;
//! masked coordinates always hold the value 0.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single model coordinate: a site or an unordered site pair (`s < t`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coord {
    Single(usize),
    Pair(usize, usize),
}

impl Coord {
    pub fn pair(s: usize, t: usize) -> Coord {
        if s < t {
            Coord::Pair(s, t)
        } else {
            Coord::Pair(t, s)
        }
    }

    pub fn label(&self) -> String {
        match self {
            Coord::Single(s) => format!("{s}"),
            Coord::Pair(s, t) => format!("{s},{t}"),
        }
    }

    pub fn parse(text: &str) -> Result<Coord> {
        let parse_idx = |p: &str| {
            p.trim()
                .parse::<usize>()
                .map_err(|_| Error::format(format!("invalid coordinate `{text}`")))
        };
        match text.split_once(',') {
            Some((a, b)) => {
                let (s, t) = (parse_idx(a)?, parse_idx(b)?);
                if s >= t {
                    return Err(Error::format(format!("pair `{text}` must have s < t")));
                }
                Ok(Coord::Pair(s, t))
            }
            None => Ok(Coord::Single(parse_idx(text)?)),
        }
    }
}

/// Sparse autologistic parameter vector with an explicit zero mask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamVectorRepr", into = "ParamVectorRepr")]
pub struct ParamVector {
    d: usize,
    singles: Vec<f64>,
    pairs: BTreeMap<(usize, usize), f64>,
    masked: BTreeSet<Coord>,
}

impl ParamVector {
    /// All-zero vector over `d` sites with no pair support.
    pub fn zeros(d: usize) -> Self {
        ParamVector {
            d,
            singles: vec![0.0; d],
            pairs: BTreeMap::new(),
            masked: BTreeSet::new(),
        }
    }

    /// All-zero vector with the given pair support.
    pub fn with_pairs(d: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut v = ParamVector::zeros(d);
        for (s, t) in pairs {
            v.add_pair_support(s, t)?;
        }
        Ok(v)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    fn check_site(&self, s: usize) -> Result<()> {
        if s >= self.d {
            return Err(Error::domain(format!("site {s} out of range (d={})", self.d)));
        }
        Ok(())
    }

    fn norm_pair(&self, s: usize, t: usize) -> Result<(usize, usize)> {
        self.check_site(s)?;
        self.check_site(t)?;
        if s == t {
            return Err(Error::domain(format!("pair ({s},{t}) must use distinct sites")));
        }
        Ok(if s < t { (s, t) } else { (t, s) })
    }

    /// Adds a pair to the support (value 0) if not already present.
    pub fn add_pair_support(&mut self, s: usize, t: usize) -> Result<()> {
        let key = self.norm_pair(s, t)?;
        self.pairs.entry(key).or_insert(0.0);
        Ok(())
    }

    pub fn single(&self, s: usize) -> f64 {
        self.singles[s]
    }

    /// Pair coordinate value; 0 when the pair is outside the support.
    pub fn pair(&self, s: usize, t: usize) -> f64 {
        let key = if s < t { (s, t) } else { (t, s) };
        self.pairs.get(&key).copied().unwrap_or(0.0)
    }

    pub fn get(&self, coord: Coord) -> f64 {
        match coord {
            Coord::Single(s) => self.singles[s],
            Coord::Pair(s, t) => self.pair(s, t),
        }
    }

    pub fn set_single(&mut self, s: usize, v: f64) -> Result<()> {
        self.check_site(s)?;
        if self.masked.contains(&Coord::Single(s)) {
            return Err(Error::domain(format!("coordinate {s} is masked to zero")));
        }
        self.singles[s] = v;
        Ok(())
    }

    /// Sets a pair coordinate, adding it to the support if necessary.
    pub fn set_pair(&mut self, s: usize, t: usize, v: f64) -> Result<()> {
        let key = self.norm_pair(s, t)?;
        if self.masked.contains(&Coord::Pair(key.0, key.1)) {
            return Err(Error::domain(format!(
                "coordinate ({},{}) is masked to zero",
                key.0, key.1
            )));
        }
        self.pairs.insert(key, v);
        Ok(())
    }

    pub fn set(&mut self, coord: Coord, v: f64) -> Result<()> {
        match coord {
            Coord::Single(s) => self.set_single(s, v),
            Coord::Pair(s, t) => self.set_pair(s, t, v),
        }
    }

    /// Constrains a coordinate to zero. Pairs must belong to the support.
    pub fn mask(&mut self, coord: Coord) -> Result<()> {
        match coord {
            Coord::Single(s) => {
                self.check_site(s)?;
                self.singles[s] = 0.0;
            }
            Coord::Pair(s, t) => {
                let key = self.norm_pair(s, t)?;
                match self.pairs.get_mut(&key) {
                    Some(v) => *v = 0.0,
                    None => {
                        return Err(Error::domain(format!(
                            "pair ({},{}) is not in the support",
                            key.0, key.1
                        )))
                    }
                }
            }
        }
        self.masked.insert(coord);
        Ok(())
    }

    pub fn is_masked(&self, coord: Coord) -> bool {
        self.masked.contains(&coord)
    }

    pub fn masked_coords(&self) -> impl Iterator<Item = Coord> + '_ {
        self.masked.iter().copied()
    }

    /// Pair support in ascending order.
    pub fn support_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.keys().copied()
    }

    /// Unmasked coordinates: all singles in ascending site order, then all
    /// support pairs in ascending order.
    pub fn active_coords(&self) -> Vec<Coord> {
        let mut coords = Vec::with_capacity(self.d + self.pairs.len());
        for s in 0..self.d {
            let c = Coord::Single(s);
            if !self.masked.contains(&c) {
                coords.push(c);
            }
        }
        for &(s, t) in self.pairs.keys() {
            let c = Coord::Pair(s, t);
            if !self.masked.contains(&c) {
                coords.push(c);
            }
        }
        coords
    }

    /// Coordinates with a nonzero value.
    pub fn nonzero_coords(&self) -> Vec<Coord> {
        let mut coords = Vec::new();
        for (s, &v) in self.singles.iter().enumerate() {
            if v != 0.0 {
                coords.push(Coord::Single(s));
            }
        }
        for (&(s, t), &v) in &self.pairs {
            if v != 0.0 {
                coords.push(Coord::Pair(s, t));
            }
        }
        coords
    }

    /// Scalar product `<theta, U(x)>` with the sufficient statistics of `x`.
    pub fn energy(&self, x: &[u8]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::domain(format!(
                "vector length {} does not match d={}",
                x.len(),
                self.d
            )));
        }
        Ok(self.energy_unchecked(x))
    }

    pub(crate) fn energy_unchecked(&self, x: &[u8]) -> f64 {
        let mut e = 0.0;
        for (s, &v) in self.singles.iter().enumerate() {
            if x[s] != 0 {
                e += v;
            }
        }
        for (&(s, t), &v) in &self.pairs {
            if x[s] != 0 && x[t] != 0 {
                e += v;
            }
        }
        e
    }

    /// Scalar product against a configuration packed into the low `d` bits.
    pub fn energy_bits(&self, bits: u64) -> f64 {
        debug_assert!(self.d <= 64);
        let mut e = 0.0;
        for (s, &v) in self.singles.iter().enumerate() {
            if bits >> s & 1 != 0 {
                e += v;
            }
        }
        for (&(s, t), &v) in &self.pairs {
            if bits >> s & 1 != 0 && bits >> t & 1 != 0 {
                e += v;
            }
        }
        e
    }

    /// `a * p + b * q` over the union of supports. The result carries no mask.
    pub fn combine(a: f64, p: &ParamVector, b: f64, q: &ParamVector) -> Result<ParamVector> {
        if p.d != q.d {
            return Err(Error::domain(format!(
                "dimension mismatch: {} vs {}",
                p.d, q.d
            )));
        }
        let mut out = ParamVector::zeros(p.d);
        for s in 0..p.d {
            out.singles[s] = a * p.singles[s] + b * q.singles[s];
        }
        let keys: BTreeSet<(usize, usize)> =
            p.pairs.keys().chain(q.pairs.keys()).copied().collect();
        for key in keys {
            out.pairs.insert(
                key,
                a * p.pairs.get(&key).copied().unwrap_or(0.0)
                    + b * q.pairs.get(&key).copied().unwrap_or(0.0),
            );
        }
        Ok(out)
    }

    pub fn norm_inf(&self) -> f64 {
        let s = self
            .singles
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v.abs()));
        self.pairs.values().fold(s, |acc, v| acc.max(v.abs()))
    }
}

/// Serialized shape: `{d, singles: {"s": v}, pairs: {"s,t": v}, mask: [...]}`.
#[derive(Serialize, Deserialize)]
struct ParamVectorRepr {
    d: usize,
    singles: BTreeMap<String, f64>,
    pairs: BTreeMap<String, f64>,
    mask: Vec<String>,
}

impl From<ParamVector> for ParamVectorRepr {
    fn from(v: ParamVector) -> Self {
        ParamVectorRepr {
            d: v.d,
            singles: v
                .singles
                .iter()
                .enumerate()
                .map(|(s, &val)| (s.to_string(), val))
                .collect(),
            pairs: v
                .pairs
                .iter()
                .map(|(&(s, t), &val)| (format!("{s},{t}"), val))
                .collect(),
            mask: v.masked.iter().map(|c| c.label()).collect(),
        }
    }
}

impl TryFrom<ParamVectorRepr> for ParamVector {
    type Error = Error;

    fn try_from(r: ParamVectorRepr) -> Result<Self> {
        let mut v = ParamVector::zeros(r.d);
        for (key, val) in r.singles {
            let s: usize = key
                .parse()
                .map_err(|_| Error::format(format!("invalid site key `{key}`")))?;
            v.set_single(s, val)?;
        }
        for (key, val) in r.pairs {
            match Coord::parse(&key)? {
                Coord::Pair(s, t) => v.set_pair(s, t, val)?,
                _ => return Err(Error::format(format!("invalid pair key `{key}`"))),
            }
        }
        for m in r.mask {
            v.mask(Coord::parse(&m)?)?;
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_hand_sum() {
        // d=2, theta_1=1, theta_2=2, theta_{1,2}=3, x=11 -> 6
        let mut v = ParamVector::zeros(2);
        v.set_single(0, 1.0).unwrap();
        v.set_single(1, 2.0).unwrap();
        v.set_pair(0, 1, 3.0).unwrap();
        assert_eq!(v.energy(&[1, 1]).unwrap(), 6.0);
        assert_eq!(v.energy(&[1, 0]).unwrap(), 1.0);
        assert_eq!(v.energy(&[0, 0]).unwrap(), 0.0);
        assert_eq!(v.energy_bits(0b11), 6.0);
    }

    #[test]
    fn zero_parameters_give_zero_energy() {
        let v = ParamVector::zeros(4);
        assert_eq!(v.energy(&[1, 0, 1, 1]).unwrap(), 0.0);
    }

    #[test]
    fn energy_is_linear_in_theta() {
        // checked by enumeration over all 8 configurations of d=3
        let mut a = ParamVector::with_pairs(3, [(0, 1), (1, 2)]).unwrap();
        let mut b = ParamVector::with_pairs(3, [(0, 1), (0, 2)]).unwrap();
        let vals_a = [0.3, -1.2, 0.7];
        let vals_b = [-0.5, 0.1, 2.0];
        for s in 0..3 {
            a.set_single(s, vals_a[s]).unwrap();
            b.set_single(s, vals_b[s]).unwrap();
        }
        a.set_pair(0, 1, 0.9).unwrap();
        a.set_pair(1, 2, -0.4).unwrap();
        b.set_pair(0, 1, -1.1).unwrap();
        b.set_pair(0, 2, 0.6).unwrap();
        let sum = ParamVector::combine(1.0, &a, 1.0, &b).unwrap();
        for bits in 0..8u64 {
            let x: Vec<u8> = (0..3).map(|s| (bits >> s & 1) as u8).collect();
            let lhs = a.energy(&x).unwrap() + b.energy(&x).unwrap();
            let rhs = sum.energy(&x).unwrap();
            assert!((lhs - rhs).abs() < 1e-12);
            assert!((a.energy_bits(bits) - a.energy(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn mask_zeroes_and_locks_coordinates() {
        let mut v = ParamVector::with_pairs(3, [(0, 2)]).unwrap();
        v.set_single(0, 1.5).unwrap();
        v.set_pair(0, 2, -0.3).unwrap();
        v.mask(Coord::Single(0)).unwrap();
        v.mask(Coord::pair(2, 0)).unwrap();
        assert_eq!(v.single(0), 0.0);
        assert_eq!(v.pair(0, 2), 0.0);
        assert!(v.set_single(0, 1.0).is_err());
        assert!(v.set_pair(0, 2, 1.0).is_err());
        assert_eq!(v.active_coords(), vec![Coord::Single(1), Coord::Single(2)]);
    }

    #[test]
    fn length_mismatch_is_a_domain_error() {
        let v = ParamVector::zeros(3);
        assert!(v.energy(&[0, 1]).is_err());
    }

    #[test]
    fn json_round_trip_preserves_everything() {
        let mut v = ParamVector::with_pairs(4, [(0, 1), (2, 3)]).unwrap();
        v.set_single(1, -0.75).unwrap();
        v.set_pair(0, 1, 0.25).unwrap();
        v.mask(Coord::Single(3)).unwrap();
        v.mask(Coord::Pair(2, 3)).unwrap();
        let js = serde_json::to_string(&v).unwrap();
        let back: ParamVector = serde_json::from_str(&js).unwrap();
        assert_eq!(v, back);
    }
}
