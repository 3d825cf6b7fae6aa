//! Seen/unseen node flags and the k-fold unseen-code experiment splits.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::data::EncodedRecord;
use crate::numeric::{Matrix, Rng};
use crate::ontology::OntologyGraph;
use crate::{Error, Result};

/// Leaves observed during training, `U_s`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeenSet {
    nodes: BTreeSet<usize>,
}

impl SeenSet {
    pub fn new(graph: &OntologyGraph, leaves: impl IntoIterator<Item = usize>) -> Result<Self> {
        let nodes: BTreeSet<usize> = leaves.into_iter().collect();
        if nodes.is_empty() {
            return Err(Error::Invalid("seen set is empty".into()));
        }
        if let Some(&bad) = nodes
            .iter()
            .find(|&&n| n >= graph.node_count() || !graph.node(n).is_leaf)
        {
            return Err(Error::Invalid(format!("seen node {bad} is not a leaf")));
        }
        Ok(SeenSet { nodes })
    }

    /// Every leaf appearing in `records`.
    pub fn from_records<'a>(
        graph: &OntologyGraph,
        records: impl IntoIterator<Item = &'a EncodedRecord>,
    ) -> Result<Self> {
        SeenSet::new(graph, records.into_iter().flat_map(|r| r.codes.iter().copied()))
    }

    pub fn all_leaves(graph: &OntologyGraph) -> Self {
        SeenSet {
            nodes: graph.leaves().iter().copied().collect(),
        }
    }

    pub fn contains(&self, node: usize) -> bool {
        self.nodes.contains(&node)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().copied()
    }
}

/// How internal nodes are flagged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InternalLabels {
    /// Internal nodes are never in `U_s` and always get 0.
    #[default]
    Zero,
    /// An internal node gets 1 when every leaf beneath it is seen.
    InheritAllSeen,
}

/// The appended 0/1 column, one entry per node.
pub fn label_column(graph: &OntologyGraph, seen: &SeenSet, internal: InternalLabels) -> Vec<f64> {
    (0..graph.node_count())
        .map(|u| {
            let flag = if graph.node(u).is_leaf {
                seen.contains(u)
            } else {
                match internal {
                    InternalLabels::Zero => false,
                    InternalLabels::InheritAllSeen => {
                        graph.leaves_under(u).iter().all(|&l| seen.contains(l))
                    }
                }
            };
            if flag {
                1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// `h^{0+}`: `node_init` with the seen flag appended as a final column.
pub fn augment_labels(
    graph: &OntologyGraph,
    node_init: &Matrix,
    seen: &SeenSet,
    internal: InternalLabels,
) -> Result<Matrix> {
    if node_init.rows() != graph.node_count() {
        return Err(Error::shape("augment_labels", "one row per node"));
    }
    let flags = label_column(graph, seen, internal);
    Ok(append_column(node_init, &flags))
}

/// `m` with `col` appended on the right.
pub fn append_column(m: &Matrix, col: &[f64]) -> Matrix {
    let h = m.cols();
    Matrix::from_fn(m.rows(), h + 1, |i, j| if j < h { m[(i, j)] } else { col[i] })
}

/// Shuffles `codes` and deals them into `k` folds whose sizes differ by at
/// most one. Each fold is returned ascending.
pub fn kfold_code_split(codes: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || k > codes.len() {
        return Err(Error::Invalid(format!(
            "fold count {k} outside 2..={}",
            codes.len()
        )));
    }
    let mut shuffled = codes.to_vec();
    Rng::new(seed, 0xF01D).shuffle(&mut shuffled);
    let base = shuffled.len() / k;
    let extra = shuffled.len() % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = shuffled[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(folds)
}

/// Record indices for one fold pairing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnseenExperimentSplit {
    pub dcca_train: Vec<usize>,
    pub full_train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
    pub eval_fold: usize,
    pub dcca_fold: usize,
    pub k: usize,
}

impl UnseenExperimentSplit {
    /// `U_s`: leaves appearing in the DCCA training records.
    pub fn seen_set(&self, graph: &OntologyGraph, records: &[EncodedRecord]) -> Result<SeenSet> {
        SeenSet::from_records(graph, self.dcca_train.iter().map(|&i| &records[i]))
    }
}

/// The fold `dcca_fold` used when none is given.
pub fn default_dcca_fold(eval_fold: usize, k: usize) -> usize {
    (eval_fold + 1) % k
}

/// Builds the split for evaluating on fold `eval_fold` with fold `dcca_fold`
/// withheld from the DCCA phase.
pub fn build_unseen_experiment(
    records: &[EncodedRecord],
    folds: &[Vec<usize>],
    eval_fold: usize,
    dcca_fold: usize,
    seed: u64,
) -> Result<UnseenExperimentSplit> {
    let k = folds.len();
    if eval_fold >= k || dcca_fold >= k {
        return Err(Error::Invalid(format!("fold index outside 0..{k}")));
    }
    if eval_fold == dcca_fold {
        return Err(Error::Invalid("eval fold and dcca fold must differ".into()));
    }
    let eval_codes: BTreeSet<usize> = folds[eval_fold].iter().copied().collect();
    let dcca_codes: BTreeSet<usize> = folds[dcca_fold].iter().copied().collect();
    let touches = |r: &EncodedRecord, set: &BTreeSet<usize>| r.codes.iter().any(|c| set.contains(c));

    let mut eval = Vec::new();
    let mut full_train = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if touches(r, &eval_codes) {
            eval.push(i);
        } else {
            full_train.push(i);
        }
    }
    let dcca_train: Vec<usize> = full_train
        .iter()
        .copied()
        .filter(|&i| !touches(&records[i], &dcca_codes))
        .collect();
    if eval.is_empty() {
        return Err(Error::DegenerateFold(format!(
            "no record contains a code of fold {eval_fold}"
        )));
    }
    if dcca_train.is_empty() {
        return Err(Error::DegenerateFold(format!(
            "every training record contains a code of fold {dcca_fold}"
        )));
    }
    let mut rng = Rng::new(seed, 0x5E1F ^ ((eval_fold as u64) << 16) ^ dcca_fold as u64);
    rng.shuffle(&mut eval);
    let n_valid = eval.len().div_ceil(2);
    let mut test = eval.split_off(n_valid);
    let mut valid = eval;
    valid.sort_unstable();
    test.sort_unstable();
    Ok(UnseenExperimentSplit {
        dcca_train,
        full_train,
        valid,
        test,
        eval_fold,
        dcca_fold,
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{encode_records, gen_admissions, GeneratorSpec};
    use crate::ontology::generate_codes;
    use alloc::vec;

    fn graph() -> OntologyGraph {
        OntologyGraph::build(&generate_codes(&[6, 4, 3], 1).unwrap()).unwrap()
    }

    #[test]
    fn augmentation_appends_one_flag() {
        let g = graph();
        let mut rng = Rng::new(0, 0);
        let init = rng.normal_matrix(g.node_count(), 5);
        let all = SeenSet::all_leaves(&g);
        let aug = augment_labels(&g, &init, &all, InternalLabels::Zero).unwrap();
        assert_eq!(aug.shape(), (g.node_count(), 6));
        for u in 0..g.node_count() {
            assert_eq!(&aug.row(u)[..5], init.row(u));
            let expected = if g.node(u).is_leaf { 1.0 } else { 0.0 };
            assert_eq!(aug[(u, 5)], expected);
        }
        let inherit = augment_labels(&g, &init, &all, InternalLabels::InheritAllSeen).unwrap();
        assert!((0..g.node_count()).all(|u| inherit[(u, 5)] == 1.0));
    }

    #[test]
    fn partial_seen_set() {
        let g = graph();
        let seen = SeenSet::new(&g, g.leaves()[..3].iter().copied()).unwrap();
        let col = label_column(&g, &seen, InternalLabels::Zero);
        assert_eq!(col.iter().filter(|&&v| v == 1.0).count(), 3);
        assert!(SeenSet::new(&g, [g.root()]).is_err());
        assert!(SeenSet::new(&g, []).is_err());
    }

    #[test]
    fn folds_partition_evenly() {
        let codes: Vec<usize> = (100..110).collect();
        let folds = kfold_code_split(&codes, 5, 7).unwrap();
        assert!(folds.iter().all(|f| f.len() == 2));
        let mut all: Vec<usize> = folds.concat();
        all.sort_unstable();
        assert_eq!(all, codes);
        assert_eq!(folds, kfold_code_split(&codes, 5, 7).unwrap());
        assert_ne!(folds, kfold_code_split(&codes, 5, 8).unwrap());
        let uneven = kfold_code_split(&codes, 3, 0).unwrap();
        assert_eq!(uneven.iter().map(Vec::len).collect::<Vec<_>>(), [4, 3, 3]);
        assert!(kfold_code_split(&codes, 1, 0).is_err());
        assert!(kfold_code_split(&codes, 11, 0).is_err());
        for k in [10, 20] {
            let many: Vec<usize> = (0..50).collect();
            assert_eq!(kfold_code_split(&many, k, 0).unwrap().len(), k);
        }
    }

    fn records() -> (OntologyGraph, Vec<EncodedRecord>) {
        let g = graph();
        let spec = GeneratorSpec {
            tokens_min: 5,
            tokens_max: 10,
            ..GeneratorSpec::default()
        };
        let recs = gen_admissions(&g, &spec, 600).unwrap();
        let enc = encode_records(&g, &recs, spec.vocab_size).unwrap();
        (g, enc)
    }

    #[test]
    fn split_invariants_hold_for_every_pairing() {
        let (g, recs) = records();
        let folds = kfold_code_split(g.leaves(), 5, 3).unwrap();
        for i in 0..5 {
            let j = default_dcca_fold(i, 5);
            let s = build_unseen_experiment(&recs, &folds, i, j, 11).unwrap();
            // brute-force membership scans
            let has = |r: &EncodedRecord, f: &[usize]| r.codes.iter().any(|c| f.contains(c));
            let mut eval: Vec<usize> = (0..recs.len()).filter(|&r| has(&recs[r], &folds[i])).collect();
            let mut union: Vec<usize> = s.valid.iter().chain(&s.test).copied().collect();
            union.sort_unstable();
            eval.sort_unstable();
            assert_eq!(union, eval);
            assert_eq!(s.valid.len(), s.test.len() + (eval.len() % 2));
            assert!(s.valid.iter().all(|v| !s.test.contains(v)));
            assert!(s.dcca_train.iter().all(|d| s.full_train.contains(d)));
            assert!(s.dcca_train.iter().all(|&d| !has(&recs[d], &folds[j])));
            assert!(s.full_train.iter().all(|t| !union.contains(t)));
            assert!(s.test.iter().all(|&t| has(&recs[t], &folds[i])));
            assert_eq!(s.full_train.len() + union.len(), recs.len());
            let seen = s.seen_set(&g, &recs).unwrap();
            assert!(folds[j].iter().all(|&c| !seen.contains(c)));
        }
    }

    #[test]
    fn eval_fraction_matches_independent_scan() {
        let (g, recs) = records();
        let folds = kfold_code_split(g.leaves(), 5, 9).unwrap();
        let mut split_total = 0usize;
        let mut scan_total = 0usize;
        for i in 0..5 {
            let s = build_unseen_experiment(&recs, &folds, i, default_dcca_fold(i, 5), 0).unwrap();
            split_total += s.valid.len() + s.test.len();
            let fold: BTreeSet<usize> = folds[i].iter().copied().collect();
            scan_total += recs
                .iter()
                .filter(|r| !r.codes.iter().collect::<BTreeSet<_>>().is_disjoint(&fold.iter().collect()))
                .count();
        }
        assert_eq!(split_total, scan_total);
        // each record lands in at least one eval set, and in as many as it has distinct folds
        let folds_per_record: usize = recs
            .iter()
            .map(|r| folds.iter().filter(|f| r.codes.iter().any(|c| f.contains(c))).count())
            .sum();
        assert_eq!(split_total, folds_per_record);
        assert!(split_total >= recs.len());
    }

    #[test]
    fn degenerate_pairings_are_reported() {
        let (g, recs) = records();
        let used: BTreeSet<usize> = recs.iter().flat_map(|r| r.codes.iter().copied()).collect();
        let unused: Vec<usize> = g.leaves().iter().copied().filter(|l| !used.contains(l)).collect();
        let folds = if unused.is_empty() {
            // every leaf used; a fold with no codes at all is never touched
            vec![vec![], g.leaves().to_vec()]
        } else {
            vec![unused, used.iter().copied().collect()]
        };
        let err = build_unseen_experiment(&recs, &folds, 0, 1, 0).unwrap_err();
        assert!(format!("{err}").contains("degenerate fold pairing"));
        assert!(build_unseen_experiment(&recs, &folds, 1, 1, 0).is_err());
    }
}
