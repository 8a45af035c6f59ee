//! Triads, rater judgments and unanimity filtering.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{Dataset, ManifestEntry};

#[derive(Debug, Error, PartialEq)]
pub enum TriadError {
    #[error("no lexical form has at least 3 clips")]
    InsufficientClips,
    #[error("{dataset}: requested {requested} triads but only {available} distinct triads exist")]
    NotEnoughTriads {
        dataset: Dataset,
        requested: usize,
        available: u64,
    },
    #[error("no triad could be evaluated")]
    NoEvaluableTriads,
    #[error("missing embedding stack for clip {clip_id} (model {model})")]
    MissingStack { clip_id: String, model: String },
    #[error("embedding stacks disagree on layer count: {0} vs {1}")]
    LayerCountMismatch(usize, usize),
}

/// Which two of the three clips were judged most similar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairChoice {
    AB,
    AC,
    BC,
}

impl PairChoice {
    pub const ALL: [PairChoice; 3] = [PairChoice::AB, PairChoice::AC, PairChoice::BC];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// Positions (within the triad) of the two paired clips.
    pub fn positions(self) -> (usize, usize) {
        match self {
            PairChoice::AB => (0, 1),
            PairChoice::AC => (0, 2),
            PairChoice::BC => (1, 2),
        }
    }

    /// Position of the clip left out of the pair.
    pub fn odd_one_out(self) -> usize {
        match self {
            PairChoice::AB => 2,
            PairChoice::AC => 1,
            PairChoice::BC => 0,
        }
    }

    pub fn from_positions(i: usize, j: usize) -> Option<Self> {
        match (i.min(j), i.max(j)) {
            (0, 1) => Some(PairChoice::AB),
            (0, 2) => Some(PairChoice::AC),
            (1, 2) => Some(PairChoice::BC),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PairChoice::AB => "AB",
            PairChoice::AC => "AC",
            PairChoice::BC => "BC",
        }
    }
}

impl fmt::Display for PairChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "AB" => Ok(PairChoice::AB),
            "AC" => Ok(PairChoice::AC),
            "BC" => Ok(PairChoice::BC),
            _ => Err(format!("invalid pair {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triad {
    pub triad_id: String,
    pub dataset: Dataset,
    pub lexical_form: String,
    pub clips: [String; 3],
}

impl Triad {
    pub fn has_distinct_clips(&self) -> bool {
        let [a, b, c] = &self.clips;
        a != b && a != c && b != c
    }

    /// Order-free identity used for duplicate detection.
    pub fn clip_set(&self) -> [String; 3] {
        let mut s = self.clips.clone();
        s.sort();
        s
    }

    pub fn pair(&self, p: PairChoice) -> (&str, &str) {
        let (i, j) = p.positions();
        (&self.clips[i], &self.clips[j])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub triad_id: String,
    pub rater_id: String,
    pub chosen_pair: PairChoice,
    #[serde(default)]
    pub is_attention_check: bool,
    /// Unix milliseconds.
    #[serde(default)]
    pub timestamp: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusTriad {
    pub triad: Triad,
    pub consensus_pair: PairChoice,
    pub n_raters: usize,
}

fn choose3(n: usize) -> u64 {
    let n = n as u64;
    if n < 3 {
        0
    } else {
        n * (n - 1) * (n - 2) / 6
    }
}

/// Samples `per_dataset_count` distinct triads per dataset, each made of
/// three distinct clips sharing a lexical form. Every possible same-form
/// triad is equally likely. Deterministic for a fixed seed and manifest
/// order.
pub fn sample_triads(
    entries: &[ManifestEntry],
    per_dataset_count: usize,
    seed: u64,
) -> Result<Vec<Triad>, TriadError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_dataset: BTreeMap<Dataset, BTreeMap<&str, Vec<&str>>> = BTreeMap::new();
    for e in entries {
        by_dataset
            .entry(e.dataset)
            .or_default()
            .entry(e.lexical_form.as_str())
            .or_default()
            .push(e.clip_id.as_str());
    }

    let mut out = Vec::new();
    let mut any_form = false;
    for (dataset, forms) in by_dataset {
        let forms: Vec<(&str, Vec<&str>)> = forms
            .into_iter()
            .map(|(f, mut clips)| {
                clips.dedup();
                (f, clips)
            })
            .filter(|(_, clips)| clips.len() >= 3)
            .collect();
        if forms.is_empty() {
            continue;
        }
        any_form = true;
        let available: u64 = forms.iter().map(|(_, c)| choose3(c.len())).sum();
        if per_dataset_count as u64 > available {
            return Err(TriadError::NotEnoughTriads {
                dataset,
                requested: per_dataset_count,
                available,
            });
        }

        let picks: Vec<(usize, [usize; 3])> = if per_dataset_count as u64 * 2 > available {
            // Dense request: enumerate everything and shuffle.
            let mut all = Vec::with_capacity(available as usize);
            for (fi, (_, clips)) in forms.iter().enumerate() {
                let n = clips.len();
                for i in 0..n {
                    for j in i + 1..n {
                        for k in j + 1..n {
                            all.push((fi, [i, j, k]));
                        }
                    }
                }
            }
            all.shuffle(&mut rng);
            all.truncate(per_dataset_count);
            for (_, idx) in &mut all {
                idx.shuffle(&mut rng);
            }
            all
        } else {
            let weights: Vec<f64> = forms.iter().map(|(_, c)| choose3(c.len()) as f64).collect();
            let form_dist = WeightedIndex::new(&weights).expect("positive weights");
            let mut seen: HashSet<(usize, [usize; 3])> = HashSet::new();
            let mut picks = Vec::with_capacity(per_dataset_count);
            while picks.len() < per_dataset_count {
                let fi = form_dist.sample(&mut rng);
                let sample = rand::seq::index::sample(&mut rng, forms[fi].1.len(), 3);
                let idx = [sample.index(0), sample.index(1), sample.index(2)];
                let mut key = idx;
                key.sort_unstable();
                if seen.insert((fi, key)) {
                    picks.push((fi, idx));
                }
            }
            picks
        };

        let prefix = dataset.as_str().to_ascii_lowercase();
        for (n, (fi, idx)) in picks.into_iter().enumerate() {
            let (form, clips) = &forms[fi];
            out.push(Triad {
                triad_id: format!("{prefix}-{:05}", n + 1),
                dataset,
                lexical_form: (*form).to_string(),
                clips: idx.map(|i| clips[i].to_string()),
            });
        }
    }
    if !any_form {
        return Err(TriadError::InsufficientClips);
    }
    Ok(out)
}

/// Keeps triads whose non-attention judgments number exactly `required`,
/// come from distinct raters, and all choose the same pair. Output follows
/// the order of `triads`.
///
/// With at most `required` judgments per triad (what the study service
/// produces), dropping judgments can only shrink the result.
pub fn consensus_filter(
    judgments: &[Judgment],
    triads: &[Triad],
    required: usize,
) -> Vec<ConsensusTriad> {
    let mut groups: HashMap<&str, Vec<&Judgment>> = HashMap::new();
    for j in judgments.iter().filter(|j| !j.is_attention_check) {
        groups.entry(j.triad_id.as_str()).or_default().push(j);
    }
    triads
        .iter()
        .filter_map(|t| {
            let group = groups.get(t.triad_id.as_str())?;
            if group.len() != required || required == 0 {
                return None;
            }
            let raters: HashSet<&str> = group.iter().map(|j| j.rater_id.as_str()).collect();
            if raters.len() != group.len() {
                return None;
            }
            let first = group[0].chosen_pair;
            group
                .iter()
                .all(|j| j.chosen_pair == first)
                .then(|| ConsensusTriad {
                    triad: t.clone(),
                    consensus_pair: first,
                    n_raters: required,
                })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(id: &str, dataset: Dataset, form: &str) -> ManifestEntry {
        ManifestEntry {
            clip_id: id.into(),
            dataset,
            lexical_form: form.into(),
            speaker_id: "s".into(),
            wav_path: format!("{id}.wav"),
            emb_paths: Default::default(),
        }
    }

    fn triad(id: &str) -> Triad {
        Triad {
            triad_id: id.into(),
            dataset: Dataset::FiCa,
            lexical_form: "yeah".into(),
            clips: ["a".into(), "b".into(), "c".into()],
        }
    }

    fn judgment(t: &str, r: &str, p: PairChoice) -> Judgment {
        Judgment {
            triad_id: t.into(),
            rater_id: r.into(),
            chosen_pair: p,
            is_attention_check: false,
            timestamp: 0,
        }
    }

    #[test]
    fn forced_single_triad() {
        let m = vec![
            entry("x", Dataset::FiCa, "yeah"),
            entry("y", Dataset::FiCa, "yeah"),
            entry("z", Dataset::FiCa, "yeah"),
            entry("w", Dataset::FiCa, "oh"),
        ];
        let t = sample_triads(&m, 1, 3).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].clip_set(), ["x".to_string(), "y".into(), "z".into()]);
        assert_eq!(t[0].lexical_form, "yeah");
        assert_eq!(t[0].triad_id, "fica-00001");
    }

    #[test]
    fn sampling_many_is_distinct_and_deterministic() {
        let forms = ["yeah", "oh", "no", "okay"];
        let m: Vec<_> = (0..400)
            .map(|i| entry(&format!("c{i:03}"), Dataset::FiCa, forms[i % forms.len()]))
            .collect();
        let a = sample_triads(&m, 1200, 17).unwrap();
        assert_eq!(a.len(), 1200);
        let sets: HashSet<_> = a.iter().map(Triad::clip_set).collect();
        assert_eq!(sets.len(), 1200);
        let form_of: HashMap<&str, &str> = m.iter().map(|e| (e.clip_id.as_str(), e.lexical_form.as_str())).collect();
        for t in &a {
            assert!(t.has_distinct_clips());
            assert!(t.clips.iter().all(|c| form_of[c.as_str()] == t.lexical_form));
        }
        assert_eq!(a, sample_triads(&m, 1200, 17).unwrap());
        assert_ne!(a, sample_triads(&m, 1200, 18).unwrap());
    }

    #[test]
    fn sampling_errors() {
        let m = vec![entry("x", Dataset::FiCa, "yeah"), entry("y", Dataset::FiCa, "yeah")];
        assert_eq!(sample_triads(&m, 1, 0), Err(TriadError::InsufficientClips));
        let m3 = vec![
            entry("x", Dataset::Fisher, "yeah"),
            entry("y", Dataset::Fisher, "yeah"),
            entry("z", Dataset::Fisher, "yeah"),
        ];
        assert!(matches!(
            sample_triads(&m3, 2, 0),
            Err(TriadError::NotEnoughTriads { available: 1, .. })
        ));
    }

    #[test]
    fn dense_requests_exhaust_all_triads() {
        let m: Vec<_> = (0..6).map(|i| entry(&format!("c{i}"), Dataset::Fisher, "mhm")).collect();
        let t = sample_triads(&m, 20, 5).unwrap();
        let sets: HashSet<_> = t.iter().map(Triad::clip_set).collect();
        assert_eq!(sets.len(), 20);
    }

    #[test]
    fn consensus_examples() {
        let triads = vec![triad("t1"), triad("t2"), triad("t3")];
        let js = vec![
            judgment("t1", "r1", PairChoice::AB),
            judgment("t1", "r2", PairChoice::AB),
            judgment("t1", "r3", PairChoice::AB),
            judgment("t2", "r1", PairChoice::AB),
            judgment("t2", "r2", PairChoice::AB),
            judgment("t2", "r3", PairChoice::AC),
            judgment("t3", "r1", PairChoice::BC),
            judgment("t3", "r2", PairChoice::BC),
        ];
        let c = consensus_filter(&js, &triads, 3);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].triad.triad_id, "t1");
        assert_eq!(c[0].consensus_pair, PairChoice::AB);
        assert_eq!(c[0].n_raters, 3);
    }

    #[test]
    fn attention_checks_and_repeat_raters_ignored() {
        let triads = vec![triad("t1")];
        let mut js = vec![
            judgment("t1", "r1", PairChoice::AB),
            judgment("t1", "r1", PairChoice::AB),
            judgment("t1", "r2", PairChoice::AB),
        ];
        assert!(consensus_filter(&js, &triads, 3).is_empty());
        js[1].rater_id = "r3".into();
        let mut check = judgment("t1", "r4", PairChoice::BC);
        check.is_attention_check = true;
        js.push(check);
        assert_eq!(consensus_filter(&js, &triads, 3).len(), 1);
    }

    #[test]
    fn pair_choice_helpers() {
        for p in PairChoice::ALL {
            let (i, j) = p.positions();
            assert_eq!(PairChoice::from_positions(j, i), Some(p));
            assert_eq!(i + j + p.odd_one_out(), 3);
            assert_eq!(p.as_str().parse::<PairChoice>().unwrap(), p);
        }
        assert_eq!(serde_json::to_string(&PairChoice::BC).unwrap(), "\"BC\"");
    }

    proptest! {
        #[test]
        fn removing_judgments_never_grows_output(
            choices in prop::collection::vec(prop::collection::vec(0usize..3, 0..=3), 1..12),
            drop in any::<prop::sample::Index>(),
        ) {
            let triads: Vec<Triad> = (0..choices.len()).map(|i| triad(&format!("t{i}"))).collect();
            let js: Vec<Judgment> = choices.iter().enumerate().flat_map(|(i, cs)| {
                cs.iter().enumerate().map(move |(r, &c)| judgment(&format!("t{i}"), &format!("r{r}"), PairChoice::ALL[c]))
            }).collect();
            let full = consensus_filter(&js, &triads, 3);
            prop_assert!(full.len() <= triads.len());
            if !js.is_empty() {
                let mut fewer = js.clone();
                fewer.remove(drop.index(js.len()));
                let reduced = consensus_filter(&fewer, &triads, 3);
                prop_assert!(reduced.len() <= full.len());
                for c in &reduced {
                    prop_assert!(full.contains(c));
                }
            }
        }
    }
}
