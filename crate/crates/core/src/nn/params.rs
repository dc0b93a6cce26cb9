use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Location of one named tensor inside a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub shape: Vec<usize>,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter store with an ordered registry of named segments.
///
/// Segments are contiguous, non-overlapping and cover `values` exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    segments: Vec<Segment>,
}

impl ParamVector {
    /// Zero-filled vector laid out by `(name, shape)` pairs in order.
    pub fn zeros_with_layout(layout: &[(String, Vec<usize>)]) -> Self {
        let mut segments = Vec::with_capacity(layout.len());
        let mut offset = 0;
        for (name, shape) in layout {
            let seg = Segment {
                name: name.clone(),
                offset,
                shape: shape.clone(),
            };
            offset += seg.len();
            segments.push(seg);
        }
        Self {
            values: vec![0.0; offset],
            segments,
        }
    }

    /// Assembles a vector from raw parts, validating the registry and finiteness.
    pub fn from_parts(segments: Vec<Segment>, values: Vec<f64>) -> Result<Self> {
        let mut expected = 0;
        for seg in &segments {
            if seg.offset != expected {
                return Err(Error::RegistryMismatch(format!(
                    "segment {} starts at {} but previous segment ends at {expected}",
                    seg.name, seg.offset
                )));
            }
            expected += seg.len();
        }
        if expected != values.len() {
            return Err(Error::RegistryMismatch(format!(
                "segments cover {expected} values but {} were given",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter values".into()));
        }
        Ok(Self { values, segments })
    }

    /// Zero vector with the same registry as `self`.
    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            segments: self.segments.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.segment(name).map(|s| &self.values[s.range()])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.segment(name)?.range();
        Some(&mut self.values[range])
    }

    pub(crate) fn seg(&self, name: &str) -> Result<&[f64]> {
        self.get(name)
            .ok_or_else(|| Error::RegistryMismatch(format!("missing segment {name}")))
    }

    pub(crate) fn seg_mut(&mut self, name: &str) -> Result<&mut [f64]> {
        self.get_mut(name)
            .ok_or_else(|| Error::RegistryMismatch(format!("missing segment {name}")))
    }

    pub fn same_registry(&self, other: &Self) -> bool {
        self.segments == other.segments
    }

    fn check_registry(&self, other: &Self) -> Result<()> {
        if self.same_registry(other) {
            Ok(())
        } else {
            Err(Error::RegistryMismatch("segment registries differ".into()))
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self + scale · other`, element-wise.
    pub fn add_scaled(&self, other: &Self, scale: f64) -> Result<Self> {
        self.check_registry(other)?;
        let mut out = self.clone();
        for (o, g) in out.values.iter_mut().zip(&other.values) {
            *o += scale * g;
        }
        Ok(out)
    }

    /// `self − other`, element-wise.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_registry(other)?;
        let mut out = self.clone();
        for (o, g) in out.values.iter_mut().zip(&other.values) {
            *o -= g;
        }
        Ok(out)
    }

    /// In-place accumulation `self += other`.
    pub fn accumulate(&mut self, other: &Self) -> Result<()> {
        self.check_registry(other)?;
        for (o, g) in self.values.iter_mut().zip(&other.values) {
            *o += g;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.values {
            *v *= s;
        }
    }

    /// Largest absolute element-wise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_registry(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Bit-level fingerprint of the values (FNV-1a over the IEEE bits).
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.values {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Bitwise equality (distinguishes `0.0` from `-0.0`).
    pub fn bitwise_eq(&self, other: &Self) -> bool {
        self.segments == other.segments
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Plain SGD update `params − lr · grad`.
pub fn sgd_step(params: &ParamVector, grad: &ParamVector, lr: f64) -> Result<ParamVector> {
    params.check_registry(grad)?;
    let mut out = params.clone();
    if lr == 0.0 {
        return Ok(out);
    }
    for (p, g) in out.values.iter_mut().zip(&grad.values) {
        if *g != 0.0 {
            *p -= lr * g;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(values: [f64; 2]) -> ParamVector {
        let mut p = ParamVector::zeros_with_layout(&[("w".into(), vec![2])]);
        p.values_mut().copy_from_slice(&values);
        p
    }

    #[test]
    fn sgd_arithmetic() {
        let out = sgd_step(&two([1.0, 2.0]), &two([0.5, -1.0]), 0.1).unwrap();
        assert_eq!(out.values(), &[0.95, 2.1]);
    }

    #[test]
    fn sgd_identities_are_bitwise() {
        let p = two([1.0 / 3.0, -0.0]);
        assert!(sgd_step(&p, &two([0.0, 0.0]), 0.7).unwrap().bitwise_eq(&p));
        assert!(sgd_step(&p, &two([0.3, 5.0]), 0.0).unwrap().bitwise_eq(&p));
    }

    #[test]
    fn sgd_rejects_registry_mismatch() {
        let other = ParamVector::zeros_with_layout(&[("v".into(), vec![2])]);
        assert!(matches!(
            sgd_step(&two([1.0, 2.0]), &other, 0.1),
            Err(Error::RegistryMismatch(_))
        ));
    }

    #[test]
    fn from_parts_validates() {
        let segs = vec![Segment {
            name: "a".into(),
            offset: 0,
            shape: vec![2],
        }];
        assert!(ParamVector::from_parts(segs.clone(), vec![1.0]).is_err());
        assert!(ParamVector::from_parts(segs.clone(), vec![1.0, f64::NAN]).is_err());
        let gap = vec![Segment {
            name: "a".into(),
            offset: 1,
            shape: vec![1],
        }];
        assert!(ParamVector::from_parts(gap, vec![1.0]).is_err());
        assert!(ParamVector::from_parts(segs, vec![1.0, 2.0]).is_ok());
    }
}
