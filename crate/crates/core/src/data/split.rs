use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Sizes of the target-training (`d1`), reference (`d2`) and test (`d3`)
/// partitions, plus the attacker's member subset of `d1` and non-member
/// subset of `d3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub d1: usize,
    pub d2: usize,
    pub d3: usize,
    pub attacker_members: usize,
    pub attacker_nonmembers: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SplitPlan {
    /// Purchase100 row of the allocation table.
    pub fn purchase100(seed: u64) -> Self {
        Self {
            d1: 20_000,
            d2: 20_000,
            d3: 20_000,
            attacker_members: 10_000,
            attacker_nonmembers: 10_000,
            seed,
        }
    }

    /// The same proportions at one tenth of the size.
    pub fn desk(seed: u64) -> Self {
        Self {
            d1: 2_000,
            d2: 2_000,
            d3: 2_000,
            attacker_members: 1_000,
            attacker_nonmembers: 1_000,
            seed,
        }
    }

    pub fn total(&self) -> usize {
        self.d1 + self.d2 + self.d3
    }
}

/// Row indices of every partition. `attacker_members` is a prefix of `d1`
/// and `attacker_nonmembers` a prefix of `d3`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub d1: Vec<usize>,
    pub d2: Vec<usize>,
    pub d3: Vec<usize>,
    pub attacker_members: Vec<usize>,
    pub attacker_nonmembers: Vec<usize>,
}

impl Splits {
    /// Members not known to the attacker: `d1 \ attacker_members`.
    pub fn eval_members(&self) -> &[usize] {
        &self.d1[self.attacker_members.len()..]
    }

    /// Non-members not known to the attacker: `d3 \ attacker_nonmembers`.
    pub fn eval_nonmembers(&self) -> &[usize] {
        &self.d3[self.attacker_nonmembers.len()..]
    }

    /// Ground-truth membership in the target's training set, `None` for
    /// rows outside `d1` and `d3`.
    pub fn is_member(&self, row: usize) -> Option<bool> {
        if self.d1.contains(&row) {
            Some(true)
        } else if self.d3.contains(&row) || self.d2.contains(&row) {
            Some(false)
        } else {
            None
        }
    }

    pub fn manifest(&self) -> BTreeMap<&'static str, &[usize]> {
        BTreeMap::from([
            ("d1", &self.d1[..]),
            ("d2", &self.d2[..]),
            ("d3", &self.d3[..]),
            ("attacker_members", &self.attacker_members[..]),
            ("attacker_nonmembers", &self.attacker_nonmembers[..]),
        ])
    }

    pub fn save_manifest(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(&self.manifest())?;
        crate::experiment::write_atomic(path, &json)
    }

    pub fn load_manifest(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

pub fn split(ds: &Dataset, plan: &SplitPlan) -> Result<Splits> {
    if plan.total() > ds.len() {
        return Err(Error::InsufficientData(format!(
            "plan needs {} rows, dataset has {}",
            plan.total(),
            ds.len()
        )));
    }
    if plan.attacker_members > plan.d1 || plan.attacker_nonmembers > plan.d3 {
        return Err(Error::Config(
            "attacker subsets must fit inside d1 and d3".into(),
        ));
    }
    let mut order = ds.all_indices();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(plan.seed));
    let d1 = order[..plan.d1].to_vec();
    let d2 = order[plan.d1..plan.d1 + plan.d2].to_vec();
    let d3 = order[plan.d1 + plan.d2..plan.total()].to_vec();
    Ok(Splits {
        attacker_members: d1[..plan.attacker_members].to_vec(),
        attacker_nonmembers: d3[..plan.attacker_nonmembers].to_vec(),
        d1,
        d2,
        d3,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize, SynthSpec};
    use std::collections::HashSet;

    #[test]
    fn purchase100_allocation() {
        let p = SplitPlan::purchase100(0);
        assert_eq!(
            (p.d1, p.d2, p.d3, p.attacker_members, p.attacker_nonmembers),
            (20_000, 20_000, 20_000, 10_000, 10_000)
        );
    }

    #[test]
    fn partitions_are_disjoint_and_nested() {
        let ds = synthesize(&SynthSpec::purchase_like(700, 1)).unwrap();
        let plan = SplitPlan {
            d1: 200,
            d2: 200,
            d3: 250,
            attacker_members: 100,
            attacker_nonmembers: 120,
            seed: 3,
        };
        let s = split(&ds, &plan).unwrap();
        let all: Vec<usize> = s.d1.iter().chain(&s.d2).chain(&s.d3).copied().collect();
        assert_eq!(all.iter().collect::<HashSet<_>>().len(), all.len());
        let d1: HashSet<_> = s.d1.iter().collect();
        let d3: HashSet<_> = s.d3.iter().collect();
        assert!(s.attacker_members.iter().all(|i| d1.contains(i)));
        assert!(s.attacker_nonmembers.iter().all(|i| d3.contains(i)));
        assert_eq!(s.eval_members().len(), 100);
        assert_eq!(s.eval_nonmembers().len(), 130);
        assert!(s
            .eval_members()
            .iter()
            .all(|&i| s.is_member(i) == Some(true)));
        assert!(s
            .eval_nonmembers()
            .iter()
            .all(|&i| s.is_member(i) == Some(false)));
        assert_eq!(s, split(&ds, &plan).unwrap());
    }

    #[test]
    fn full_attacker_subset_is_d1() {
        let ds = synthesize(&SynthSpec::purchase_like(100, 1)).unwrap();
        let plan = SplitPlan {
            d1: 30,
            d2: 30,
            d3: 30,
            attacker_members: 30,
            attacker_nonmembers: 0,
            seed: 9,
        };
        let s = split(&ds, &plan).unwrap();
        assert_eq!(s.attacker_members, s.d1);
        assert!(s.eval_members().is_empty());
    }

    #[test]
    fn insufficient_data() {
        let ds = synthesize(&SynthSpec::purchase_like(100, 1)).unwrap();
        let plan = SplitPlan {
            d1: 50,
            d2: 50,
            d3: 1,
            attacker_members: 0,
            attacker_nonmembers: 0,
            seed: 0,
        };
        assert!(matches!(split(&ds, &plan), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let ds = synthesize(&SynthSpec::purchase_like(100, 1)).unwrap();
        let s = split(
            &ds,
            &SplitPlan {
                d1: 20,
                d2: 20,
                d3: 20,
                attacker_members: 10,
                attacker_nonmembers: 10,
                seed: 4,
            },
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("splits.json");
        s.save_manifest(&path).unwrap();
        assert_eq!(Splits::load_manifest(&path).unwrap(), s);
    }
}
