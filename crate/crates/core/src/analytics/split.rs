use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SplitLabel;
use crate::error::{Error, Result};
use crate::highlight::SheetClass;

/// Seeded shuffle, then the first `ceil(n / 2)` go to the control half and
/// the rest to the treatment half. Returns `(s_hna, s_ha)`.
pub fn split_submissions(bundle_ids: &[String], seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if bundle_ids.is_empty() {
        return Err(Error::EmptySubmissions);
    }
    let mut shuffled = bundle_ids.to_vec();
    shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let treated = shuffled.split_off(bundle_ids.len().div_ceil(2));
    Ok((shuffled, treated))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationSplit {
    pub exam_id: String,
    pub seed: u64,
    pub s_hna: BTreeSet<String>,
    pub s_ha: BTreeSet<String>,
    pub s_h: BTreeSet<String>,
    pub s_nh: BTreeSet<String>,
}

impl EvaluationSplit {
    /// Splits the submissions and sorts the treatment half with `classify`.
    pub fn build(
        exam_id: &str,
        bundle_ids: &[String],
        seed: u64,
        mut classify: impl FnMut(&str) -> SheetClass,
    ) -> Result<Self> {
        let (hna, ha) = split_submissions(bundle_ids, seed)?;
        let mut split = Self {
            exam_id: exam_id.to_owned(),
            seed,
            s_hna: hna.into_iter().collect(),
            s_ha: BTreeSet::new(),
            s_h: BTreeSet::new(),
            s_nh: BTreeSet::new(),
        };
        for id in ha {
            split.set_class(&id, classify(&id));
            split.s_ha.insert(id);
        }
        Ok(split)
    }

    /// Re-files a treatment sheet after its highlights changed.
    pub fn set_class(&mut self, bundle_id: &str, class: SheetClass) {
        self.s_h.remove(bundle_id);
        self.s_nh.remove(bundle_id);
        match class {
            SheetClass::Highlighted => self.s_h.insert(bundle_id.to_owned()),
            SheetClass::NotHighlighted => self.s_nh.insert(bundle_id.to_owned()),
        };
    }

    pub fn label(&self, bundle_id: &str) -> Option<SplitLabel> {
        if self.s_hna.contains(bundle_id) {
            Some(SplitLabel::Hna)
        } else if self.s_h.contains(bundle_id) {
            Some(SplitLabel::H)
        } else if self.s_nh.contains(bundle_id) {
            Some(SplitLabel::Nh)
        } else {
            None
        }
    }

    /// Checks the partition invariants against the full submission list.
    pub fn check(&self, all: &[String]) -> std::result::Result<(), String> {
        let all: BTreeSet<&String> = all.iter().collect();
        if !self.s_hna.is_disjoint(&self.s_ha) {
            return Err("S_HNA and S_HA overlap".into());
        }
        let union: BTreeSet<&String> = self.s_hna.iter().chain(&self.s_ha).collect();
        if union != all {
            return Err("S_HNA and S_HA do not cover every submission".into());
        }
        if self.s_hna.len().abs_diff(self.s_ha.len()) > 1 {
            return Err(format!("halves differ in size: {} vs {}", self.s_hna.len(), self.s_ha.len()));
        }
        if !self.s_h.is_disjoint(&self.s_nh) {
            return Err("S_H and S_NH overlap".into());
        }
        let treated: BTreeSet<String> = self.s_h.union(&self.s_nh).cloned().collect();
        if treated != self.s_ha {
            return Err("S_H and S_NH do not partition S_HA".into());
        }
        Ok(())
    }
}
