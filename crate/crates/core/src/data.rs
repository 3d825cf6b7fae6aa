//! Synthetic admissions with a latent class shared by both views.
//!
//! Each record draws a class `z` uniformly. Codes come from the leaves under
//! the class's hot subtrees (or, with probability `code_noise`, from all
//! leaves); tokens come from the class topic, a Dirichlet draw over the
//! class's slice of the vocabulary (or, with probability `token_noise`,
//! uniformly from the whole vocabulary). The label is
//! `Bernoulli(sigmoid(β_z))`, so it depends on `z` alone.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::encoders::token_row;
use crate::numeric::{sigmoid, Rng};
use crate::ontology::OntologyGraph;
use crate::{Error, Result};

/// One admission: code set, token sequence and binary label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdmissionRecord {
    pub codes: Vec<String>,
    pub tokens: Vec<u32>,
    pub label: u8,
}

/// A record resolved against an ontology and vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedRecord {
    /// Leaf ids, ascending and unique.
    pub codes: Vec<usize>,
    /// Embedding rows (see [`token_row`]).
    pub rows: Vec<usize>,
    pub label: f64,
}

/// Resolves code strings to leaf ids and tokens to embedding rows.
pub fn encode_records(
    graph: &OntologyGraph,
    records: &[AdmissionRecord],
    vocab_size: usize,
) -> Result<Vec<EncodedRecord>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if r.codes.is_empty() {
                return Err(Error::Invalid(format!("record {i} has no codes")));
            }
            let mut codes = r
                .codes
                .iter()
                .map(|c| {
                    graph
                        .leaf_id(c)
                        .ok_or_else(|| Error::Invalid(format!("unknown code {c:?} in record {i}")))
                })
                .collect::<Result<Vec<_>>>()?;
            codes.sort_unstable();
            codes.dedup();
            Ok(EncodedRecord {
                codes,
                rows: r.tokens.iter().map(|&t| token_row(t, vocab_size)).collect(),
                label: f64::from(r.label),
            })
        })
        .collect()
}

/// Generator settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub classes: usize,
    pub codes_min: usize,
    pub codes_max: usize,
    /// Level (root = 1) whose nodes are dealt out to classes as hot subtrees.
    pub hot_level: usize,
    pub code_noise: f64,
    pub tokens_min: usize,
    pub tokens_max: usize,
    pub vocab_size: usize,
    /// Symmetric Dirichlet concentration of each class topic.
    pub topic_concentration: f64,
    pub token_noise: f64,
    /// `β_z`, one logit per class.
    pub label_logits: Vec<f64>,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec::with_classes(4)
    }
}

impl GeneratorSpec {
    /// Defaults with `β` evenly spaced on `[-2, 2]`.
    pub fn with_classes(classes: usize) -> Self {
        let label_logits = if classes == 1 {
            alloc::vec![0.0]
        } else {
            (0..classes)
                .map(|z| -2.0 + 4.0 * z as f64 / (classes - 1) as f64)
                .collect()
        };
        GeneratorSpec {
            classes,
            codes_min: 3,
            codes_max: 8,
            hot_level: 2,
            code_noise: 0.3,
            tokens_min: 60,
            tokens_max: 200,
            vocab_size: 2000,
            topic_concentration: 0.5,
            token_noise: 0.3,
            label_logits,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Invalid(format!("generator spec: {m}")));
        if self.classes == 0 {
            return bad("at least one class");
        }
        if self.label_logits.len() != self.classes {
            return bad("one label logit per class");
        }
        if !(0.0..1.0).contains(&self.code_noise) && self.code_noise != 1.0 {
            return bad("code noise outside [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.token_noise) {
            return bad("token noise outside [0, 1]");
        }
        if self.codes_min == 0 || self.codes_min > self.codes_max {
            return bad("code count range");
        }
        if self.tokens_min > self.tokens_max {
            return bad("token count range");
        }
        if self.vocab_size < self.classes {
            return bad("vocabulary smaller than class count");
        }
        if self.topic_concentration <= 0.0 {
            return bad("topic concentration must be positive");
        }
        Ok(())
    }

    /// Expected label base rate, the mean of `sigmoid(β_z)`.
    pub fn expected_base_rate(&self) -> f64 {
        self.label_logits.iter().map(|&b| sigmoid(b)).sum::<f64>() / self.classes as f64
    }
}

/// Class-level structure derived from the spec seed.
#[derive(Debug, Clone)]
pub struct ClassModel {
    /// Hot subtree roots per class.
    pub hot_subtrees: Vec<Vec<usize>>,
    /// Leaves under each class's hot subtrees.
    pub hot_leaves: Vec<Vec<usize>>,
    /// Cumulative topic weights over the class's vocabulary slice.
    topic_cumulative: Vec<Vec<f64>>,
    /// First token id of each class's vocabulary slice.
    topic_offset: Vec<usize>,
}

impl ClassModel {
    pub fn new(graph: &OntologyGraph, spec: &GeneratorSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = Rng::new(spec.seed, 0xC1A5);
        let mut roots = graph.nodes_at_level(spec.hot_level);
        if roots.len() < spec.classes {
            return Err(Error::Invalid(format!(
                "{} hot-subtree candidates at level {} for {} classes",
                roots.len(),
                spec.hot_level,
                spec.classes
            )));
        }
        rng.shuffle(&mut roots);
        let mut hot_subtrees = alloc::vec![Vec::new(); spec.classes];
        for (i, r) in roots.into_iter().enumerate() {
            hot_subtrees[i % spec.classes].push(r);
        }
        for h in &mut hot_subtrees {
            h.sort_unstable();
        }
        let hot_leaves = hot_subtrees
            .iter()
            .map(|roots| {
                let mut leaves: Vec<usize> =
                    roots.iter().flat_map(|&r| graph.leaves_under(r)).collect();
                leaves.sort_unstable();
                leaves
            })
            .collect();

        let slice = spec.vocab_size / spec.classes;
        let mut topic_cumulative = Vec::with_capacity(spec.classes);
        let mut topic_offset = Vec::with_capacity(spec.classes);
        for z in 0..spec.classes {
            let w = rng.dirichlet(spec.topic_concentration, slice);
            let mut acc = 0.0;
            topic_cumulative.push(
                w.iter()
                    .map(|x| {
                        acc += x;
                        acc
                    })
                    .collect(),
            );
            topic_offset.push(z * slice);
        }
        Ok(ClassModel {
            hot_subtrees,
            hot_leaves,
            topic_cumulative,
            topic_offset,
        })
    }

    /// Token id range `[start, end)` of class `z`'s topic.
    pub fn topic_range(&self, z: usize) -> (usize, usize) {
        let start = self.topic_offset[z];
        (start, start + self.topic_cumulative[z].len())
    }
}

/// A generated record together with its latent class.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedRecord {
    pub record: AdmissionRecord,
    pub class: usize,
}

/// Generates `n_records` admissions; record `i` depends only on
/// `(spec.seed, i)`.
pub fn gen_admissions(
    graph: &OntologyGraph,
    spec: &GeneratorSpec,
    n_records: usize,
) -> Result<Vec<AdmissionRecord>> {
    Ok(gen_admissions_with_classes(graph, spec, n_records)?
        .into_iter()
        .map(|g| g.record)
        .collect())
}

/// [`gen_admissions`], also returning each record's latent class.
pub fn gen_admissions_with_classes(
    graph: &OntologyGraph,
    spec: &GeneratorSpec,
    n_records: usize,
) -> Result<Vec<GeneratedRecord>> {
    if n_records < 1 {
        return Err(Error::Invalid("n_records must be at least 1".into()));
    }
    let model = ClassModel::new(graph, spec)?;
    let base = Rng::new(spec.seed, 0xDA7A);
    let leaves = graph.leaves();
    Ok((0..n_records)
        .map(|i| {
            let mut rng = base.split(i as u64);
            let z = rng.below(spec.classes);
            let m = rng.int_inclusive(spec.codes_min, spec.codes_max);
            let hot = &model.hot_leaves[z];
            let mut codes = BTreeSet::new();
            for _ in 0..m {
                let leaf = if rng.bernoulli(spec.code_noise) {
                    leaves[rng.below(leaves.len())]
                } else {
                    hot[rng.below(hot.len())]
                };
                codes.insert(leaf);
            }
            let n = rng.int_inclusive(spec.tokens_min, spec.tokens_max);
            let cumulative = &model.topic_cumulative[z];
            let tokens = (0..n)
                .map(|_| {
                    if rng.bernoulli(spec.token_noise) {
                        rng.below(spec.vocab_size) as u32
                    } else {
                        (model.topic_offset[z] + rng.categorical_cumulative(cumulative)) as u32
                    }
                })
                .collect();
            let label = u8::from(rng.bernoulli(sigmoid(spec.label_logits[z])));
            GeneratedRecord {
                record: AdmissionRecord {
                    codes: codes
                        .into_iter()
                        .map(|id| graph.node(id).prefix.clone())
                        .collect(),
                    tokens,
                    label,
                },
                class: z,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dcca::cca_oracle;
    use crate::numeric::Matrix;
    use crate::ontology::generate_codes;

    fn graph() -> OntologyGraph {
        OntologyGraph::build(&generate_codes(&[8, 4, 4], 3).unwrap()).unwrap()
    }

    #[test]
    fn noiseless_views_identify_the_class() {
        let g = graph();
        let spec = GeneratorSpec {
            code_noise: 0.0,
            token_noise: 0.0,
            label_logits: alloc::vec![2.0, -2.0],
            ..GeneratorSpec::with_classes(2)
        };
        let model = ClassModel::new(&g, &spec).unwrap();
        let recs = gen_admissions_with_classes(&g, &spec, 4000).unwrap();
        let mut correct = 0usize;
        for r in &recs {
            // Bayes rule from the code view: the class whose hot leaves hold the codes
            let ids: Vec<usize> = r.record.codes.iter().map(|c| g.leaf_id(c).unwrap()).collect();
            let zc = (0..2)
                .find(|&z| ids.iter().all(|id| model.hot_leaves[z].binary_search(id).is_ok()))
                .unwrap();
            assert_eq!(zc, r.class);
            let zt = (0..2)
                .find(|&z| {
                    let (a, b) = model.topic_range(z);
                    r.record.tokens.iter().all(|&t| (a..b).contains(&(t as usize)))
                })
                .unwrap();
            assert_eq!(zt, r.class);
            let predicted = u8::from(spec.label_logits[zc] > 0.0);
            correct += usize::from(predicted == r.record.label);
        }
        let acc = correct as f64 / 4000.0;
        let p = sigmoid(2.0);
        let se = libm::sqrt(p * (1.0 - p) / 4000.0);
        assert!((acc - p).abs() < 3.0 * se, "{acc} vs {p}");
    }

    #[test]
    fn pure_noise_views_carry_no_label_signal() {
        let g = graph();
        let spec = GeneratorSpec {
            code_noise: 1.0,
            token_noise: 1.0,
            ..GeneratorSpec::with_classes(2)
        };
        let recs = gen_admissions(&g, &spec, 4000).unwrap();
        // score = fraction of codes in the first half of the leaves
        let half = g.leaves()[g.leaves().len() / 2];
        let scores: Vec<f64> = recs
            .iter()
            .map(|r| {
                let n = r.codes.iter().filter(|c| g.leaf_id(c).unwrap() < half).count();
                n as f64 / r.codes.len() as f64
            })
            .collect();
        let labels: Vec<u8> = recs.iter().map(|r| r.label).collect();
        let auc = crate::harness::auroc(&scores, &labels).unwrap();
        assert!((auc - 0.5).abs() < 0.03, "{auc}");
    }

    #[test]
    fn base_rate_matches_logits() {
        let g = graph();
        let spec = GeneratorSpec::default();
        let recs = gen_admissions(&g, &spec, 10000).unwrap();
        let rate = recs.iter().map(|r| f64::from(r.label)).sum::<f64>() / 10000.0;
        let p = spec.expected_base_rate();
        // labels are a class mixture; the marginal Bernoulli variance bounds the SE
        let se = libm::sqrt(p * (1.0 - p) / 10000.0);
        assert!((rate - p).abs() < 3.0 * se, "{rate} vs {p}");
    }

    #[test]
    fn generation_is_deterministic_per_record() {
        let g = graph();
        let spec = GeneratorSpec::default();
        let a = gen_admissions(&g, &spec, 50).unwrap();
        let b = gen_admissions(&g, &spec, 80).unwrap();
        assert_eq!(a[..], b[..50]);
        let other = gen_admissions(&g, &GeneratorSpec { seed: 1, ..spec }, 50).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn records_respect_ranges() {
        let g = graph();
        let spec = GeneratorSpec::default();
        for r in gen_admissions(&g, &spec, 200).unwrap() {
            assert!(!r.codes.is_empty() && r.codes.len() <= spec.codes_max);
            assert!((spec.tokens_min..=spec.tokens_max).contains(&r.tokens.len()));
            assert!(r.tokens.iter().all(|&t| (t as usize) < spec.vocab_size));
            assert!(r.codes.iter().all(|c| g.leaf_id(c).is_some()));
        }
        assert!(gen_admissions(&g, &spec, 0).is_err());
    }

    /// Per-record summary features: code counts per level-2 subtree and
    /// token counts per class vocabulary slice.
    fn summary_views(g: &OntologyGraph, spec: &GeneratorSpec, recs: &[AdmissionRecord]) -> (Matrix, Matrix) {
        let level2 = g.nodes_at_level(2);
        let slice = spec.vocab_size / spec.classes;
        let code = Matrix::from_fn(recs.len(), level2.len(), |i, j| {
            recs[i]
                .codes
                .iter()
                .filter(|c| g.node(g.leaf_id(c).unwrap()).prefix.starts_with(&g.node(level2[j]).prefix))
                .count() as f64
        });
        let text = Matrix::from_fn(recs.len(), spec.classes, |i, j| {
            recs[i]
                .tokens
                .iter()
                .filter(|&&t| (t as usize) / slice == j)
                .count() as f64
                / recs[i].tokens.len() as f64
        });
        (code, text)
    }

    #[test]
    fn cross_view_correlation_falls_with_noise() {
        let g = graph();
        let mut prev = f64::INFINITY;
        for noise in [0.0, 0.3, 0.6, 0.9] {
            let spec = GeneratorSpec {
                code_noise: noise,
                token_noise: noise,
                ..GeneratorSpec::default()
            };
            let recs = gen_admissions(&g, &spec, 2000).unwrap();
            let (c, t) = summary_views(&g, &spec, &recs);
            let corr: f64 = cca_oracle(&c, &t, 1e-6).unwrap()[..3].iter().sum();
            assert!(corr < prev, "noise {noise}: {corr} >= {prev}");
            prev = corr;
        }
    }

    #[test]
    fn encoding_rejects_unknown_codes() {
        let g = graph();
        let rec = AdmissionRecord {
            codes: alloc::vec!["ZZZ".into()],
            tokens: alloc::vec![1, 5000],
            label: 1,
        };
        let err = encode_records(&g, std::slice::from_ref(&rec), 100).unwrap_err();
        assert!(format!("{err}").contains("ZZZ"));
        let ok = AdmissionRecord {
            codes: alloc::vec![g.node(g.leaves()[0]).prefix.clone()],
            ..rec
        };
        let enc = encode_records(&g, &[ok], 100).unwrap();
        assert_eq!(enc[0].rows, [3, crate::encoders::UNK_ROW]);
    }
}
