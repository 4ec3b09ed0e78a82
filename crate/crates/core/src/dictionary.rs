//! Nearest-spectrum lookup over stored training samples.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Result};
use crate::geometry::MarkerShape;
use crate::optics::{SampleRecord, SCAN_VALUES, SHAPE_VALUES};

/// Stored (spectrum, shape) pairs in insertion order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumDictionary {
    features: Vec<f32>,
    shapes: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Match {
    pub index: usize,
    pub distance: f64,
    pub shape: MarkerShape,
}

/// Squared L2 distance with a fixed summation order, shared by every search path.
fn sq_distance(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum()
}

fn norm(a: &[f32]) -> f64 {
    a.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt()
}

pub fn build_dictionary<'a>(records: impl IntoIterator<Item = &'a SampleRecord>) -> Result<SpectrumDictionary> {
    let mut features = Vec::new();
    let mut shapes = Vec::new();
    for r in records {
        if r.scans.len() != SCAN_VALUES || r.shape.len() != SHAPE_VALUES {
            return Err(invalid("record has wrong field sizes"));
        }
        features.extend_from_slice(&r.scans);
        shapes.extend_from_slice(&r.shape);
    }
    if features.is_empty() {
        return Err(invalid("dictionary needs at least one sample"));
    }
    Ok(SpectrumDictionary { features, shapes })
}

impl SpectrumDictionary {
    pub fn len(&self) -> usize {
        self.features.len() / SCAN_VALUES
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f32] {
        &self.features[i * SCAN_VALUES..(i + 1) * SCAN_VALUES]
    }

    pub fn shape(&self, i: usize) -> MarkerShape {
        let v: Vec<f64> = self.shapes[i * SHAPE_VALUES..(i + 1) * SHAPE_VALUES].iter().map(|&x| x as f64).collect();
        MarkerShape::from_flat(&v).expect("stored shape is valid")
    }

    /// SHA-256 over the stored features, used to tie an index to its dictionary.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.features {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check_query(&self, q: &[f32]) -> Result<()> {
        if q.len() != SCAN_VALUES {
            return Err(invalid(format!("query has {} values, expected {SCAN_VALUES}", q.len())));
        }
        Ok(())
    }

    fn found(&self, index: usize, sq: f64) -> Match {
        Match { index, distance: sq.sqrt(), shape: self.shape(index) }
    }

    /// Exhaustive scan; ties go to the lowest index.
    pub fn query(&self, q: &[f32]) -> Result<Match> {
        self.check_query(q)?;
        let mut best = (f64::INFINITY, 0);
        for i in 0..self.len() {
            let d = sq_distance(q, self.feature(i));
            if d < best.0 {
                best = (d, i);
            }
        }
        Ok(self.found(best.1, best.0))
    }
}

/// Entries sorted by feature norm. Since `|‖q‖ - ‖x‖| ≤ ‖q - x‖`, a search
/// walking outward from `‖q‖` can stop once the norm gap exceeds the best
/// distance, returning exactly the exhaustive result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormIndex {
    pub fingerprint: String,
    pub order: Vec<usize>,
    pub norms: Vec<f64>,
}

impl NormIndex {
    pub fn build(dict: &SpectrumDictionary) -> Self {
        let mut entries: Vec<(f64, usize)> = (0..dict.len()).map(|i| (norm(dict.feature(i)), i)).collect();
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Self {
            fingerprint: dict.fingerprint(),
            order: entries.iter().map(|e| e.1).collect(),
            norms: entries.iter().map(|e| e.0).collect(),
        }
    }

    pub fn matches(&self, dict: &SpectrumDictionary) -> bool {
        self.order.len() == dict.len() && self.fingerprint == dict.fingerprint()
    }

    /// Same result as [`SpectrumDictionary::query`], plus the number of
    /// distances evaluated.
    pub fn query(&self, dict: &SpectrumDictionary, q: &[f32]) -> Result<(Match, usize)> {
        dict.check_query(q)?;
        if self.order.len() != dict.len() {
            return Err(invalid("index does not belong to this dictionary"));
        }
        let qn = norm(q);
        let start = self.norms.partition_point(|&n| n < qn);
        let mut best = (f64::INFINITY, usize::MAX);
        let mut evaluated = 0;
        let (mut lo, mut hi) = (start, start);
        let slack = |d: f64| d.sqrt() * (1.0 + 1e-9) + 1e-12;
        loop {
            let gap_lo = if lo > 0 { Some(qn - self.norms[lo - 1]) } else { None };
            let gap_hi = if hi < self.norms.len() { Some(self.norms[hi] - qn) } else { None };
            let take_lo = match (gap_lo, gap_hi) {
                (None, None) => break,
                (Some(a), Some(b)) => a <= b,
                (Some(_), None) => true,
                (None, Some(_)) => false,
            };
            let (pos, gap) = if take_lo { (lo - 1, gap_lo.unwrap()) } else { (hi, gap_hi.unwrap()) };
            if best.0.is_finite() && gap > slack(best.0) {
                break;
            }
            let idx = self.order[pos];
            let d = sq_distance(q, dict.feature(idx));
            evaluated += 1;
            if d < best.0 || (d == best.0 && idx < best.1) {
                best = (d, idx);
            }
            if take_lo {
                lo -= 1;
            } else {
                hi += 1;
            }
        }
        Ok((dict.found(best.1, best.0), evaluated))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{ScenarioKind, NO_GROUP, PLANE_VALUES};

    fn record(fill: f32, shape_x: f32) -> SampleRecord {
        let mut shape = vec![0.0; SHAPE_VALUES];
        shape[57] = shape_x;
        SampleRecord {
            seed: 0,
            tag: ScenarioKind::Random,
            group: NO_GROUP,
            scans: vec![fill; SCAN_VALUES],
            shape,
            planes: vec![0.0; PLANE_VALUES],
        }
    }

    #[test]
    fn build_keeps_every_entry() {
        let recs: Vec<_> = (0..10).map(|i| record(i as f32 * 0.1, i as f32)).collect();
        assert_eq!(build_dictionary(&recs).unwrap().len(), 10);
        let dup = vec![record(0.5, 1.0), record(0.5, 2.0)];
        assert_eq!(build_dictionary(&dup).unwrap().len(), 2);
        assert!(build_dictionary(&[]).is_err());
    }

    #[test]
    fn query_finds_self_and_breaks_ties_low() {
        let recs = vec![record(0.2, 1.0), record(0.5, 2.0), record(0.5, 3.0)];
        let d = build_dictionary(&recs).unwrap();
        let m = d.query(&recs[1].scans).unwrap();
        assert_eq!((m.index, m.distance), (1, 0.0));
        assert_eq!(m.shape.tip().x, 2.0);
        let idx = NormIndex::build(&d);
        assert_eq!(idx.query(&d, &recs[2].scans).unwrap().0.index, 1);
    }

    #[test]
    fn nearer_entry_wins() {
        let recs = vec![record(0.0, 1.0), record(1.0, 2.0)];
        let d = build_dictionary(&recs).unwrap();
        let q = vec![0.7f32; SCAN_VALUES];
        // brute force: |0.7 - 0|² · 570 vs |0.7 - 1|² · 570
        let m = d.query(&q).unwrap();
        assert_eq!(m.index, 1);
        assert!((m.distance - (0.09f64 * 570.0).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn norm_index_prunes_far_entries() {
        let recs: Vec<_> = (0..50).map(|i| record(i as f32 * 0.01, 0.0)).collect();
        let d = build_dictionary(&recs).unwrap();
        let idx = NormIndex::build(&d);
        assert!(idx.matches(&d));
        let (_, evaluated) = idx.query(&d, &vec![0.25f32; SCAN_VALUES]).unwrap();
        assert!(evaluated < 50);
    }

    #[test]
    fn rejects_bad_query_length() {
        let d = build_dictionary(&[record(0.1, 0.0)]).unwrap();
        assert!(d.query(&[0.0; 3]).is_err());
    }
}
