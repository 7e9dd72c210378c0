//! The integer kNN datapath: quantisation, squared Euclidean distance,
//! constant-time comparison, bounded k-nearest selection and majority vote.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::EegWindow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    NonSeizure,
    Seizure,
}

impl Label {
    pub fn as_byte(self) -> u8 {
        match self {
            Label::NonSeizure => 0,
            Label::Seizure => 1,
        }
    }

    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Label::NonSeizure),
            1 => Some(Label::Seizure),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Label::NonSeizure => Label::Seizure,
            Label::Seizure => Label::NonSeizure,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::NonSeizure => "NonSeizure",
            Label::Seizure => "Seizure",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "seizure" | "s" | "1" => Ok(Label::Seizure),
            "nonseizure" | "non-seizure" | "n" | "0" => Ok(Label::NonSeizure),
            _ => Err(format!("unknown label {s:?}")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KnnError {
    #[error("sample {index} = {value} is outside the representable range")]
    OutOfRange { index: usize, value: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("q-format mismatch: {left} vs {right}")]
    FormatMismatch { left: QFormat, right: QFormat },
    #[error("invalid q-format {0}: integer and fraction bits must total 16")]
    InvalidFormat(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("training store is empty")]
    EmptyStore,
    #[error("neighbour set is empty")]
    EmptyNeighborSet,
}

pub const WORD_BITS: u8 = 16;

/// Signed 16-bit fixed-point layout; `integer_bits` includes the sign bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QFormat {
    integer_bits: u8,
    fraction_bits: u8,
}

impl QFormat {
    pub fn new(integer_bits: u8, fraction_bits: u8) -> Result<Self, KnnError> {
        if integer_bits == 0 || integer_bits as u16 + fraction_bits as u16 != WORD_BITS as u16 {
            return Err(KnnError::InvalidFormat(format!("{integer_bits}.{fraction_bits}")));
        }
        Ok(Self {
            integer_bits,
            fraction_bits,
        })
    }

    pub fn integer_bits(self) -> u8 {
        self.integer_bits
    }

    pub fn fraction_bits(self) -> u8 {
        self.fraction_bits
    }

    pub fn scale(self) -> f64 {
        (1u32 << self.fraction_bits) as f64
    }

    /// Largest representable magnitude, `2^(integer_bits - 1)`.
    pub fn max_magnitude(self) -> f64 {
        (1u32 << (self.integer_bits - 1)) as f64
    }

    /// Worst-case round-to-nearest error, half an LSB.
    pub fn resolution(self) -> f64 {
        0.5 / self.scale()
    }
}

/// 13.3: +/-4096 uV at 1/8 uV. Ictal segments reach about +/-2000 uV.
impl Default for QFormat {
    fn default() -> Self {
        Self {
            integer_bits: 13,
            fraction_bits: 3,
        }
    }
}

impl fmt::Display for QFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.integer_bits, self.fraction_bits)
    }
}

impl FromStr for QFormat {
    type Err = KnnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || KnnError::InvalidFormat(s.to_owned());
        let (i, f) = s.split_once('.').ok_or_else(bad)?;
        QFormat::new(i.trim().parse().map_err(|_| bad())?, f.trim().parse().map_err(|_| bad())?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FixedVector {
    values: Vec<i16>,
    q: QFormat,
}

impl FixedVector {
    pub fn from_codes(values: Vec<i16>, q: QFormat) -> Self {
        Self { values, q }
    }

    pub fn values(&self) -> &[i16] {
        &self.values
    }

    pub fn q_format(&self) -> QFormat {
        self.q
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dequantize(&self) -> Vec<f64> {
        let s = self.q.scale();
        self.values.iter().map(|&v| v as f64 / s).collect()
    }
}

/// Round-half-even quantisation; out-of-range samples are an error, never
/// saturated.
pub fn quantize_samples(samples: &[f64], q: QFormat) -> Result<FixedVector, KnnError> {
    let scale = q.scale();
    let values = samples
        .iter()
        .enumerate()
        .map(|(index, &x)| {
            let code = (x * scale).round_ties_even();
            if !(code >= i16::MIN as f64 && code <= i16::MAX as f64) {
                return Err(KnnError::OutOfRange { index, value: x });
            }
            Ok(code as i16)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FixedVector { values, q })
}

pub fn quantize(window: &EegWindow, q: QFormat) -> Result<FixedVector, KnnError> {
    quantize_samples(window.samples(), q)
}

/// Sum of squared code differences. Bounded by `n * 2^32`, so any window
/// shorter than 2^31 samples cannot overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SquaredDistance(pub u64);

impl SquaredDistance {
    pub fn value(self) -> u64 {
        self.0
    }
}

pub fn squared_distance(a: &FixedVector, b: &FixedVector) -> Result<SquaredDistance, KnnError> {
    if a.len() != b.len() {
        return Err(KnnError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.q != b.q {
        return Err(KnnError::FormatMismatch {
            left: a.q,
            right: b.q,
        });
    }
    Ok(SquaredDistance(squared_distance_codes(&a.values, &b.values)))
}

#[inline]
pub(crate) fn squared_distance_codes(a: &[i16], b: &[i16]) -> u64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x as i32 - y as i32).unsigned_abs() as u64;
            d * d
        })
        .sum()
}

/// Three-way comparison with a fixed instruction sequence: `a - b` is formed
/// as `a + !b + 1` (ones' complement plus carry-in) and the result is read off
/// the carry-out and the zero flag. No data-dependent branches.
#[inline]
pub fn compare_const_time(a: SquaredDistance, b: SquaredDistance) -> Ordering {
    const TABLE: [Ordering; 4] = [
        Ordering::Less,    // no carry: a < b
        Ordering::Less,    // unreachable: zero difference always carries
        Ordering::Greater, // carry, nonzero
        Ordering::Equal,   // carry, zero
    ];
    let (partial, c1) = a.0.overflowing_add(!b.0);
    let (diff, c2) = partial.overflowing_add(1);
    let carry = (c1 | c2) as usize;
    let zero = (diff == 0) as usize;
    TABLE[(carry << 1) | zero]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbor {
    pub distance: SquaredDistance,
    pub label: Label,
    pub store_index: usize,
}

impl Neighbor {
    #[inline]
    fn precedes(&self, other: &Neighbor) -> bool {
        match compare_const_time(self.distance, other.distance) {
            Ordering::Less => true,
            Ordering::Equal => self.store_index < other.store_index,
            Ordering::Greater => false,
        }
    }
}

/// Up to `k` neighbours sorted by `(distance, store_index)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborSet {
    k: usize,
    entries: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn with_capacity(k: usize) -> Self {
        Self {
            k,
            entries: Vec::with_capacity(k + 1),
        }
    }

    /// Builds a set from already-ordered entries; used by tests and oracles.
    pub fn from_sorted(k: usize, entries: Vec<Neighbor>) -> Self {
        debug_assert!(entries.len() <= k);
        debug_assert!(entries.windows(2).all(|w| w[0].precedes(&w[1])));
        Self { k, entries }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entries(&self) -> &[Neighbor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Insertion into the bounded sorted buffer: one comparison against the
    /// current worst entry, then at most `k` shift steps.
    pub fn offer(&mut self, candidate: Neighbor) {
        if self.entries.len() == self.k {
            match self.entries.last() {
                Some(worst) if candidate.precedes(worst) => {
                    self.entries.pop();
                }
                _ => return,
            }
        }
        let mut pos = self.entries.len();
        while pos > 0 && candidate.precedes(&self.entries[pos - 1]) {
            pos -= 1;
        }
        self.entries.insert(pos, candidate);
    }
}

/// Linear scan over the candidates, keeping the `k` nearest. `store_index` is
/// the candidate's position in iteration order.
pub fn select_k_nearest<'a, I>(query: &FixedVector, candidates: I, k: usize) -> Result<NeighborSet, KnnError>
where
    I: IntoIterator<Item = (&'a FixedVector, Label)>,
{
    if k == 0 {
        return Err(KnnError::InvalidK);
    }
    let mut set = NeighborSet::with_capacity(k);
    let mut seen = 0usize;
    for (store_index, (vector, label)) in candidates.into_iter().enumerate() {
        let distance = squared_distance(query, vector)?;
        set.offer(Neighbor {
            distance,
            label,
            store_index,
        });
        seen += 1;
    }
    if seen == 0 {
        return Err(KnnError::EmptyStore);
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub label: Label,
    pub votes: u32,
    pub total: u32,
}

impl Vote {
    pub fn confidence(&self) -> f64 {
        self.votes as f64 / self.total as f64
    }
}

/// Majority vote; an exact tie goes to the nearest entry's label.
pub fn vote(neighbors: &NeighborSet) -> Result<Vote, KnnError> {
    let first = neighbors.entries.first().ok_or(KnnError::EmptyNeighborSet)?;
    let total = neighbors.len() as u32;
    let seizure = neighbors
        .entries
        .iter()
        .filter(|n| n.label == Label::Seizure)
        .count() as u32;
    let non = total - seizure;
    let (label, votes) = match seizure.cmp(&non) {
        Ordering::Greater => (Label::Seizure, seizure),
        Ordering::Less => (Label::NonSeizure, non),
        Ordering::Equal => (first.label, seizure),
    };
    Ok(Vote {
        label,
        votes,
        total,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> QFormat {
        QFormat::new(10, 6).unwrap()
    }

    fn fv(v: &[i16]) -> FixedVector {
        FixedVector::from_codes(v.to_vec(), q())
    }

    fn nb(d: u64, label: Label, i: usize) -> Neighbor {
        Neighbor {
            distance: SquaredDistance(d),
            label,
            store_index: i,
        }
    }

    #[test]
    fn q_format_parsing() {
        assert_eq!("10.6".parse::<QFormat>().unwrap(), q());
        assert!("10.7".parse::<QFormat>().is_err());
        assert!("0.16".parse::<QFormat>().is_err());
        assert!("abc".parse::<QFormat>().is_err());
        assert_eq!(QFormat::default().to_string(), "13.3");
    }

    #[test]
    fn quantize_exact_points() {
        let v = quantize_samples(&[0.0, 1.0, -1.5, 0.0], q()).unwrap();
        assert_eq!(v.values(), &[0, 64, -96, 0]);
        assert_eq!(v.dequantize(), vec![0.0, 1.0, -1.5, 0.0]);
    }

    #[test]
    fn quantize_rounds_half_even() {
        // 0.5 LSB and 1.5 LSB.
        let v = quantize_samples(&[0.5 / 64.0, 1.5 / 64.0, -0.5 / 64.0], q()).unwrap();
        assert_eq!(v.values(), &[0, 2, 0]);
    }

    #[test]
    fn quantize_refuses_to_saturate() {
        let err = quantize_samples(&[0.0, 600.0], q()).unwrap_err();
        assert_eq!(
            err,
            KnnError::OutOfRange {
                index: 1,
                value: 600.0
            }
        );
        // -512 is representable, +512 is not.
        assert!(quantize_samples(&[-512.0], q()).is_ok());
        assert!(quantize_samples(&[512.0], q()).is_err());
    }

    #[test]
    fn three_four_five() {
        let d = squared_distance(&fv(&[0, 3]), &fv(&[4, 0])).unwrap();
        assert_eq!(d, SquaredDistance(25));
        assert_eq!(squared_distance(&fv(&[7, -9]), &fv(&[7, -9])).unwrap().0, 0);
    }

    #[test]
    fn distance_extremes_do_not_overflow() {
        let a = fv(&vec![i16::MAX; 178]);
        let b = fv(&vec![i16::MIN; 178]);
        assert_eq!(squared_distance(&a, &b).unwrap().0, 178 * 65535u64 * 65535);
    }

    #[test]
    fn distance_shape_errors() {
        assert!(matches!(
            squared_distance(&fv(&[1]), &fv(&[1, 2])),
            Err(KnnError::DimensionMismatch { left: 1, right: 2 })
        ));
        let other = FixedVector::from_codes(vec![1], QFormat::new(12, 4).unwrap());
        assert!(matches!(
            squared_distance(&fv(&[1]), &other),
            Err(KnnError::FormatMismatch { .. })
        ));
    }

    #[test]
    fn comparator_basics() {
        let c = |a, b| compare_const_time(SquaredDistance(a), SquaredDistance(b));
        assert_eq!(c(5, 5), Ordering::Equal);
        assert_eq!(c(0, 1), Ordering::Less);
        assert_eq!(c(1, 0), Ordering::Greater);
        assert_eq!(c(u64::MAX, 0), Ordering::Greater);
        assert_eq!(c(0, u64::MAX), Ordering::Less);
        assert_eq!(c(u64::MAX, u64::MAX), Ordering::Equal);
    }

    #[test]
    fn exact_copy_is_nearest() {
        let store = [fv(&[10, 10]), fv(&[1, 2]), fv(&[5, 5])];
        let cands = store.iter().map(|v| (v, Label::NonSeizure));
        let set = select_k_nearest(&fv(&[1, 2]), cands, 1).unwrap();
        assert_eq!(set.entries()[0].distance.0, 0);
        assert_eq!(set.entries()[0].store_index, 1);
    }

    #[test]
    fn ties_break_by_store_index() {
        let store = [fv(&[1]), fv(&[-1]), fv(&[1]), fv(&[0])];
        let cands = store.iter().map(|v| (v, Label::Seizure));
        let set = select_k_nearest(&fv(&[0]), cands, 4).unwrap();
        let idx: Vec<usize> = set.entries().iter().map(|n| n.store_index).collect();
        assert_eq!(idx, vec![3, 0, 1, 2]);
    }

    #[test]
    fn store_smaller_than_k_returns_everything() {
        let store = [fv(&[3]), fv(&[1])];
        let set = select_k_nearest(&fv(&[0]), store.iter().map(|v| (v, Label::Seizure)), 5).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.entries()[0].store_index, 1);
    }

    #[test]
    fn selection_errors() {
        let empty: [FixedVector; 0] = [];
        assert_eq!(
            select_k_nearest(&fv(&[0]), empty.iter().map(|v| (v, Label::Seizure)), 3),
            Err(KnnError::EmptyStore)
        );
        let store = [fv(&[3])];
        assert_eq!(
            select_k_nearest(&fv(&[0]), store.iter().map(|v| (v, Label::Seizure)), 0),
            Err(KnnError::InvalidK)
        );
    }

    #[test]
    fn vote_examples() {
        use Label::*;
        let set = NeighborSet::from_sorted(3, vec![nb(1, Seizure, 0), nb(2, Seizure, 1), nb(3, NonSeizure, 2)]);
        let v = vote(&set).unwrap();
        assert_eq!((v.label, v.votes, v.total), (Seizure, 2, 3));
        assert!((v.confidence() - 2.0 / 3.0).abs() < 1e-15);

        let set = NeighborSet::from_sorted(3, vec![nb(1, NonSeizure, 0), nb(2, NonSeizure, 1), nb(3, NonSeizure, 2)]);
        let v = vote(&set).unwrap();
        assert_eq!((v.label, v.confidence()), (NonSeizure, 1.0));

        // Truncated store with a tie: nearest wins.
        let set = NeighborSet::from_sorted(3, vec![nb(1, Seizure, 0), nb(2, NonSeizure, 1)]);
        let v = vote(&set).unwrap();
        assert_eq!((v.label, v.confidence()), (Seizure, 0.5));

        assert_eq!(vote(&NeighborSet::with_capacity(3)), Err(KnnError::EmptyNeighborSet));
    }
}
