use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{SamplePoint, StateAction};

/// Retained transition samples, in insertion order, with an optional FIFO cap.
///
/// A multiset view keyed by point is kept alongside the ordered list so kernel
/// sums can run over distinct points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "DictionaryDoc", into = "DictionaryDoc")]
pub struct Dictionary {
    points: VecDeque<SamplePoint>,
    capacity: Option<usize>,
    counts: BTreeMap<SamplePoint, usize>,
}

#[derive(Serialize, Deserialize)]
struct DictionaryDoc {
    points: Vec<SamplePoint>,
    capacity: Option<usize>,
}

impl From<DictionaryDoc> for Dictionary {
    fn from(doc: DictionaryDoc) -> Self {
        let mut d = Dictionary {
            points: VecDeque::new(),
            capacity: doc.capacity.filter(|c| *c > 0),
            counts: BTreeMap::new(),
        };
        for p in doc.points {
            d.push(p);
        }
        d
    }
}

impl From<Dictionary> for DictionaryDoc {
    fn from(d: Dictionary) -> Self {
        DictionaryDoc {
            points: d.points.into_iter().collect(),
            capacity: d.capacity,
        }
    }
}

impl Dictionary {
    pub fn new(capacity: Option<usize>) -> Result<Self> {
        if capacity == Some(0) {
            return Err(Error::config(
                "agents.dict_cap",
                "capacity must be positive",
            ));
        }
        Ok(Self {
            points: VecDeque::new(),
            capacity,
            counts: BTreeMap::new(),
        })
    }

    pub fn push(&mut self, point: SamplePoint) {
        if let Some(cap) = self.capacity {
            while self.points.len() >= cap {
                if let Some(old) = self.points.pop_front() {
                    if let Some(c) = self.counts.get_mut(&old) {
                        *c -= 1;
                        if *c == 0 {
                            self.counts.remove(&old);
                        }
                    }
                }
            }
        }
        self.points.push_back(point);
        *self.counts.entry(point).or_default() += 1;
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &SamplePoint> {
        self.points.iter()
    }

    pub fn to_vec(&self) -> Vec<SamplePoint> {
        self.points.iter().copied().collect()
    }

    /// Distinct points with their multiplicities, sorted by point.
    pub fn multiset(&self) -> &BTreeMap<SamplePoint, usize> {
        &self.counts
    }

    /// Distinct points at `x` with multiplicities as weights.
    pub fn points_at(&self, x: StateAction) -> Vec<(SamplePoint, f64)> {
        let lo = SamplePoint { x, y: 0 };
        let hi = SamplePoint { x, y: usize::MAX };
        self.counts
            .range(lo..=hi)
            .map(|(p, c)| (*p, *c as f64))
            .collect()
    }
}
