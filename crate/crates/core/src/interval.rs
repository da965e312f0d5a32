//! Finite unions of real intervals with possibly infinite endpoints.

use std::fmt;

use serde::ser::{SerializeStruct, Serializer};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    /// `[lo, hi]`; infinite endpoints are stored as open.
    pub fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            hi,
            lo_closed: lo.is_finite(),
            hi_closed: hi.is_finite(),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let above = if self.lo_closed { x >= self.lo } else { x > self.lo };
        let below = if self.hi_closed { x <= self.hi } else { x < self.hi };
        above && below
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    fn is_empty(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !(self.lo_closed && self.hi_closed))
    }
}

/// Sorted, disjoint intervals.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalSet {
    intervals: Vec<Interval>,
}

impl IntervalSet {
    /// Normalizes: drops empty pieces, sorts, merges overlaps.
    pub fn new(mut pieces: Vec<Interval>) -> Self {
        pieces.retain(|i| !i.lo.is_nan() && !i.hi.is_nan() && !i.is_empty());
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo).then(b.lo_closed.cmp(&a.lo_closed)));
        let mut out: Vec<Interval> = Vec::with_capacity(pieces.len());
        for p in pieces {
            if let Some(last) = out.last_mut() {
                let touches = p.lo < last.hi || (p.lo == last.hi && (p.lo_closed || last.hi_closed));
                if touches {
                    if p.hi > last.hi || (p.hi == last.hi && p.hi_closed) {
                        last.hi = p.hi;
                        last.hi_closed = p.hi_closed;
                    }
                    continue;
                }
            }
            out.push(p);
        }
        Self { intervals: out }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn whole_line() -> Self {
        Self::new(vec![Interval::closed(f64::NEG_INFINITY, f64::INFINITY)])
    }

    pub fn closed(lo: f64, hi: f64) -> Self {
        Self::new(vec![Interval::closed(lo, hi)])
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.intervals.iter().any(|i| i.contains(x))
    }

    pub fn is_bounded(&self) -> bool {
        self.intervals.iter().all(Interval::is_bounded)
    }

    pub fn is_whole_line(&self) -> bool {
        matches!(self.intervals.as_slice(), [i] if i.lo == f64::NEG_INFINITY && i.hi == f64::INFINITY)
    }

    /// Image under `x ↦ a·x + b`.
    pub fn affine(&self, a: f64, b: f64) -> Self {
        Self::new(
            self.intervals
                .iter()
                .map(|i| {
                    let (lo, hi) = (a * i.lo + b, a * i.hi + b);
                    if a >= 0.0 {
                        Interval { lo, hi, ..*i }
                    } else {
                        Interval {
                            lo: hi,
                            hi: lo,
                            lo_closed: i.hi_closed,
                            hi_closed: i.lo_closed,
                        }
                    }
                })
                .collect(),
        )
    }
}

pub(crate) fn fmt_endpoint(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{x}")
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}, {}{}",
            if self.lo_closed { '[' } else { '(' },
            fmt_endpoint(self.lo),
            fmt_endpoint(self.hi),
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return write!(f, "∅");
        }
        for (k, i) in self.intervals.iter().enumerate() {
            if k > 0 {
                write!(f, " ∪ ")?;
            }
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

/// A finite endpoint serializes as a number, an infinite one as
/// `"inf"` / `"-inf"`.
pub(crate) struct Endpoint(pub f64);

impl Serialize for Endpoint {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&fmt_endpoint(self.0))
        }
    }
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut st = s.serialize_struct("Interval", 4)?;
        st.serialize_field("lo", &Endpoint(self.lo))?;
        st.serialize_field("hi", &Endpoint(self.hi))?;
        st.serialize_field("lo_closed", &self.lo_closed)?;
        st.serialize_field("hi_closed", &self.hi_closed)?;
        st.end()
    }
}

impl Serialize for IntervalSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.intervals.serialize(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merges_and_sorts() {
        let s = IntervalSet::new(vec![
            Interval::closed(3.0, 4.0),
            Interval::closed(0.0, 1.0),
            Interval::closed(0.5, 2.0),
        ]);
        assert_eq!(s.intervals().len(), 2);
        assert_eq!(s.intervals()[0], Interval::closed(0.0, 2.0));
        assert!(s.contains(3.5) && !s.contains(2.5));
    }

    #[test]
    fn rays_display() {
        let s = IntervalSet::new(vec![
            Interval::closed(2.0, f64::INFINITY),
            Interval::closed(f64::NEG_INFINITY, -1.0),
        ]);
        assert_eq!(s.to_string(), "(-inf, -1] ∪ [2, inf)");
        assert!(!s.is_bounded());
        assert!(IntervalSet::whole_line().is_whole_line());
    }

    #[test]
    fn negative_affine_reflects() {
        let s = IntervalSet::closed(-0.2, 0.6).affine(-1.0, 0.0);
        assert_eq!(s.intervals()[0], Interval::closed(-0.6, 0.2));
    }

    #[test]
    fn degenerate_point_kept() {
        let s = IntervalSet::closed(1.0, 1.0);
        assert!(s.contains(1.0));
        assert!(IntervalSet::new(vec![Interval { lo: 1.0, hi: 1.0, lo_closed: false, hi_closed: true }]).is_empty());
    }
}
