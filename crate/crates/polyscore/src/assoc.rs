//! Association tests between binary item features and a binary outcome.
//!
//! Items (say, short texts) carry a set of features (say, their root
//! verbs) and fall into one of two classes. For each feature the
//! likelihood ratio of its class-conditional frequencies measures
//! association; a Monte Carlo permutation test turns that into a p-value,
//! and Holm-Bonferroni correction controls the family-wise error rate
//! across the whole vocabulary.
//!
//! Permuting class labels while holding feature counts fixed makes the
//! feature's in-class count hypergeometric, so each permutation draw
//! samples that distribution directly instead of shuffling label vectors.
//! Every feature gets its own random stream derived from `(seed,
//! hash(feature))`, so results are independent of item order and of
//! whichever features are tested alongside.

use std::collections::{HashMap, HashSet};
use std::io::BufRead;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Hypergeometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{derived_rng, fnv1a};

/// Default Monte Carlo sample count per feature.
pub const DEFAULT_SAMPLES: usize = 100_000;

/// Which of the two outcome classes an item belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemClass {
    Less,
    More,
}

impl std::str::FromStr for ItemClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "less" | "less_ethical" | "worse" => Ok(ItemClass::Less),
            "more" | "more_ethical" | "better" => Ok(ItemClass::More),
            other => Err(Error::InvalidValue {
                what: "class",
                msg: format!("unknown class {other:?}; expected \"less\" or \"more\""),
            }),
        }
    }
}

/// A corpus of binary-featured, binary-classed items.
#[derive(Debug, Clone)]
pub struct BinaryLabeledItems {
    /// Sorted feature vocabulary.
    vocab: Vec<String>,
    /// Per feature: how many items of each class contain it.
    in_less: Vec<u64>,
    in_more: Vec<u64>,
    less_total: u64,
    more_total: u64,
    n_items: usize,
}

impl BinaryLabeledItems {
    /// Builds the corpus from `(features, class)` pairs. Repeated features
    /// within one item count once (presence, not multiplicity).
    pub fn new<S: AsRef<str>>(items: Vec<(Vec<S>, ItemClass)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::invalid("no items supplied"));
        }
        let mut counts: HashMap<&str, (u64, u64)> = HashMap::new();
        let (mut less_total, mut more_total) = (0u64, 0u64);
        for (features, class) in &items {
            match class {
                ItemClass::Less => less_total += 1,
                ItemClass::More => more_total += 1,
            }
            let mut seen: HashSet<&str> = HashSet::with_capacity(features.len());
            for f in features {
                let f = f.as_ref();
                if f.is_empty() {
                    return Err(Error::invalid("empty feature name"));
                }
                if seen.insert(f) {
                    let slot = counts.entry(f).or_insert((0, 0));
                    match class {
                        ItemClass::Less => slot.0 += 1,
                        ItemClass::More => slot.1 += 1,
                    }
                }
            }
        }
        let mut vocab: Vec<String> = counts.keys().map(|s| s.to_string()).collect();
        vocab.sort_unstable();
        let (in_less, in_more) = vocab
            .iter()
            .map(|f| counts[f.as_str()])
            .unzip();
        Ok(Self {
            vocab,
            in_less,
            in_more,
            less_total,
            more_total,
            n_items: items.len(),
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn less_total(&self) -> u64 {
        self.less_total
    }

    pub fn more_total(&self) -> u64 {
        self.more_total
    }

    /// Sorted feature vocabulary.
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    /// `(in_less, in_more)` item counts for one feature.
    pub fn feature_counts(&self, feature: &str) -> Result<(u64, u64)> {
        let idx = self
            .vocab
            .binary_search_by(|v| v.as_str().cmp(feature))
            .map_err(|_| Error::InvalidValue {
                what: "feature",
                msg: format!("feature {feature:?} does not occur in the items"),
            })?;
        Ok((self.in_less[idx], self.in_more[idx]))
    }
}

/// JSONL line shape for [`load_items`].
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ItemLine {
    id: String,
    class: String,
    features: Vec<String>,
}

/// Loads items from JSONL: `{"id":...,"class":"less|more","features":[...]}`.
/// Item ids must be unique.
pub fn load_items(path: impl AsRef<Path>) -> Result<BinaryLabeledItems> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut items = Vec::new();
    let mut seen_ids: HashMap<String, usize> = HashMap::new();
    for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ItemLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        if let Some(first) = seen_ids.insert(parsed.id.clone(), lineno + 1) {
            return Err(Error::DuplicateId {
                id: parsed.id,
                first,
                second: lineno + 1,
            });
        }
        let class: ItemClass = parsed.class.parse().map_err(|e: Error| Error::Parse {
            path: path.to_path_buf(),
            line: lineno + 1,
            msg: e.to_string(),
        })?;
        items.push((parsed.features, class));
    }
    BinaryLabeledItems::new(items)
}

/// Ratio of class-conditional feature frequencies,
/// `(in_less / less_total) / (in_more / more_total)`.
///
/// Present only in the less class gives `+inf`; present only in the more
/// class gives 0; absent from both gives 1 (no evidence either way).
pub fn likelihood_ratio(
    feature_counts: (u64, u64),
    class_totals: (u64, u64),
) -> Result<f64> {
    let (in_less, in_more) = feature_counts;
    let (less_total, more_total) = class_totals;
    if less_total == 0 || more_total == 0 {
        return Err(Error::invalid(
            "likelihood ratio needs at least one item in each class",
        ));
    }
    if in_less > less_total || in_more > more_total {
        return Err(Error::invalid(format!(
            "feature counts ({in_less}, {in_more}) exceed class totals ({less_total}, {more_total})"
        )));
    }
    Ok(match (in_less, in_more) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        (0, _) => 0.0,
        _ => {
            (in_less as f64 / less_total as f64) / (in_more as f64 / more_total as f64)
        }
    })
}

/// `|ln LR|`, the two-tailed extremity of a likelihood ratio; ratios of 0
/// and +inf are maximally extreme.
fn log_extremity(lr: f64) -> f64 {
    if lr == 0.0 || lr.is_infinite() {
        f64::INFINITY
    } else {
        lr.ln().abs()
    }
}

/// One feature's association test.
#[derive(Debug, Clone, Serialize)]
pub struct PermTestResult {
    pub feature: String,
    /// Likelihood ratio toward the less class; may be `+inf` (serialized
    /// as the string `"inf"`).
    #[serde(serialize_with = "serialize_lr")]
    pub lr: f64,
    pub p_raw: f64,
    /// Holm-Bonferroni adjusted p; set by [`test_all`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_adjusted: Option<f64>,
    /// Whether the adjusted p clears the requested level; set by
    /// [`test_all`].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rejected: Option<bool>,
    /// Items of the more class containing the feature.
    pub better_count: u64,
    /// Items of the less class containing the feature.
    pub worse_count: u64,
    /// Items containing the feature overall.
    pub total: u64,
}

fn serialize_lr<S: serde::Serializer>(lr: &f64, ser: S) -> std::result::Result<S::Ok, S::Error> {
    if lr.is_finite() {
        ser.serialize_f64(*lr)
    } else {
        ser.serialize_str("inf")
    }
}

/// How p-values are estimated from the permutation tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PValueRule {
    /// `k / n`: the plain Monte Carlo fraction, which can be exactly 0
    /// when no permutation is as extreme as the observation.
    #[default]
    Plain,
    /// `(k + 1) / (n + 1)`: never returns 0; the observation itself
    /// counts as one permutation.
    Conservative,
}

/// Two-tailed Monte Carlo permutation test for one feature.
///
/// Class labels are permuted over items with the feature's occurrence
/// count fixed, which makes the less-class count hypergeometric; `rng`
/// drives those draws. The p-value is the fraction of permutations whose
/// `|ln LR|` is at least the observed one.
pub fn permutation_test<R: Rng + ?Sized>(
    items: &BinaryLabeledItems,
    feature: &str,
    n_samples: usize,
    rng: &mut R,
) -> Result<PermTestResult> {
    permutation_test_with(items, feature, n_samples, PValueRule::Plain, rng)
}

/// [`permutation_test`] with an explicit zero-handling rule.
pub fn permutation_test_with<R: Rng + ?Sized>(
    items: &BinaryLabeledItems,
    feature: &str,
    n_samples: usize,
    rule: PValueRule,
    rng: &mut R,
) -> Result<PermTestResult> {
    if n_samples == 0 {
        return Err(Error::invalid("permutation test needs n_samples >= 1"));
    }
    let (in_less, in_more) = items.feature_counts(feature)?;
    let totals = (items.less_total(), items.more_total());
    let lr = likelihood_ratio((in_less, in_more), totals)?;
    let observed = log_extremity(lr);

    let occurrences = in_less + in_more;
    let population = totals.0 + totals.1;
    let dist = Hypergeometric::new(population, occurrences, totals.0)
        .map_err(|e| Error::invalid(format!("hypergeometric setup failed: {e}")))?;
    let mut extreme = 0usize;
    for _ in 0..n_samples {
        let k_less = dist.sample(rng);
        let perm_lr = likelihood_ratio((k_less, occurrences - k_less), totals)?;
        if log_extremity(perm_lr) >= observed {
            extreme += 1;
        }
    }
    let p_raw = match rule {
        PValueRule::Plain => extreme as f64 / n_samples as f64,
        PValueRule::Conservative => (extreme + 1) as f64 / (n_samples + 1) as f64,
    };
    Ok(PermTestResult {
        feature: feature.to_string(),
        lr,
        p_raw,
        p_adjusted: None,
        rejected: None,
        better_count: in_more,
        worse_count: in_less,
        total: occurrences,
    })
}

/// Holm-Bonferroni step-down correction.
///
/// Returns per-input rejection flags at level `alpha` and adjusted
/// p-values (running maxima of `(m - rank) * p` over the ascending order,
/// clipped to 1). A hypothesis is rejected exactly when its adjusted p is
/// at most `alpha`, and lowering `alpha` never rejects more.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Result<(Vec<bool>, Vec<f64>)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!(
            "alpha must be inside (0, 1), got {alpha}"
        )));
    }
    for &p in p_values {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("p-value {p} outside [0, 1]")));
        }
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &idx) in order.iter().enumerate() {
        let scaled = ((m - rank) as f64 * p_values[idx]).min(1.0);
        running = running.max(scaled);
        adjusted[idx] = running;
    }
    let rejected = adjusted.iter().map(|&p| p <= alpha).collect();
    Ok((rejected, adjusted))
}

/// Options for [`test_all`].
#[derive(Debug, Clone)]
pub struct TestAllOptions {
    pub alpha: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub rule: PValueRule,
}

impl Default for TestAllOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            n_samples: DEFAULT_SAMPLES,
            seed: 0,
            rule: PValueRule::Plain,
        }
    }
}

/// Tests every vocabulary feature, applies Holm-Bonferroni across the
/// family, and returns results sorted by likelihood ratio (ascending,
/// infinities last, ties by feature name).
///
/// Each feature draws from its own stream derived from `(seed,
/// hash(feature))`, so any subset run separately with the same seed
/// reproduces the same raw p-values.
pub fn test_all(items: &BinaryLabeledItems, options: &TestAllOptions) -> Result<Vec<PermTestResult>> {
    let mut results = Vec::with_capacity(items.vocab().len());
    for feature in items.vocab() {
        let mut rng = derived_rng(
            options.seed,
            &[fnv1a(b"permutation-test"), fnv1a(feature.as_bytes())],
        );
        results.push(permutation_test_with(
            items,
            feature,
            options.n_samples,
            options.rule,
            &mut rng,
        )?);
    }
    let p_raw: Vec<f64> = results.iter().map(|r| r.p_raw).collect();
    let (rejected, adjusted) = holm_bonferroni(&p_raw, options.alpha)?;
    for ((result, rej), adj) in results.iter_mut().zip(rejected).zip(adjusted) {
        result.rejected = Some(rej);
        result.p_adjusted = Some(adj);
    }
    results.sort_by(|a, b| a.lr.total_cmp(&b.lr).then_with(|| a.feature.cmp(&b.feature)));
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic_items(
        n_per_class: usize,
        feature_prob: f64,
        seed: u64,
        features: &[&str],
    ) -> BinaryLabeledItems {
        let mut rng = derived_rng(seed, &[fnv1a(b"synth")]);
        let mut items = Vec::new();
        for class in [ItemClass::Less, ItemClass::More] {
            for _ in 0..n_per_class {
                let fs: Vec<&str> = features
                    .iter()
                    .filter(|_| rng.random::<f64>() < feature_prob)
                    .copied()
                    .collect();
                items.push((fs, class));
            }
        }
        BinaryLabeledItems::new(items).unwrap()
    }

    #[test]
    fn likelihood_ratio_hand_values() {
        assert_eq!(likelihood_ratio((2, 1), (10, 10)).unwrap(), 2.0);
        assert_eq!(likelihood_ratio((3, 3), (12, 12)).unwrap(), 1.0);
        assert_eq!(likelihood_ratio((4, 2), (20, 40)).unwrap(), 4.0);
        assert_eq!(likelihood_ratio((0, 0), (5, 5)).unwrap(), 1.0);
        assert_eq!(likelihood_ratio((3, 0), (5, 5)).unwrap(), f64::INFINITY);
        assert_eq!(likelihood_ratio((0, 3), (5, 5)).unwrap(), 0.0);
        assert!(likelihood_ratio((6, 0), (5, 5)).is_err());
        assert!(likelihood_ratio((0, 0), (0, 5)).is_err());
    }

    #[test]
    fn likelihood_ratio_reciprocal_under_class_swap() {
        let mut rng = derived_rng(2, &[]);
        for _ in 0..100 {
            let less_total = rng.random_range(5..50);
            let more_total = rng.random_range(5..50);
            let in_less = rng.random_range(1..=less_total);
            let in_more = rng.random_range(1..=more_total);
            let fwd = likelihood_ratio((in_less, in_more), (less_total, more_total)).unwrap();
            let rev = likelihood_ratio((in_more, in_less), (more_total, less_total)).unwrap();
            assert!((fwd * rev - 1.0).abs() < 1e-12, "{fwd} * {rev}");
        }
    }

    #[test]
    fn corpus_counts_features_once_per_item() {
        let items = BinaryLabeledItems::new(vec![
            (vec!["stealing", "stealing", "lying"], ItemClass::Less),
            (vec!["lying"], ItemClass::More),
            (vec![], ItemClass::More),
        ])
        .unwrap();
        assert_eq!(items.n_items(), 3);
        assert_eq!(items.less_total(), 1);
        assert_eq!(items.more_total(), 2);
        assert_eq!(items.vocab(), &["lying".to_string(), "stealing".to_string()]);
        assert_eq!(items.feature_counts("stealing").unwrap(), (1, 0));
        assert_eq!(items.feature_counts("lying").unwrap(), (1, 1));
        assert!(items.feature_counts("absent").is_err());
        assert!(BinaryLabeledItems::new(Vec::<(Vec<&str>, ItemClass)>::new()).is_err());
    }

    #[test]
    fn hypergeometric_matches_label_shuffling() {
        // The sampler must agree with literally permuting labels: compare
        // the permuted-count distribution against an explicit shuffle.
        use rand::seq::SliceRandom;
        let (population, occurrences, less_total) = (40u64, 12u64, 15u64);
        let dist = Hypergeometric::new(population, occurrences, less_total).unwrap();
        let mut rng = derived_rng(8, &[1]);
        let draws = 40_000;
        let mean_hyper: f64 =
            (0..draws).map(|_| dist.sample(&mut rng) as f64).sum::<f64>() / draws as f64;

        let mut labels: Vec<bool> = (0..population).map(|i| i < occurrences).collect();
        let mut mean_shuffle = 0.0;
        for _ in 0..draws {
            labels.shuffle(&mut rng);
            mean_shuffle +=
                labels[..less_total as usize].iter().filter(|&&b| b).count() as f64;
        }
        mean_shuffle /= draws as f64;

        let expected = less_total as f64 * occurrences as f64 / population as f64;
        assert!((mean_hyper - expected).abs() < 0.05, "{mean_hyper} vs {expected}");
        assert!((mean_shuffle - expected).abs() < 0.05);
    }

    #[test]
    fn null_feature_p_values_are_calibrated() {
        // Independent feature and class: p should be uniform, so the
        // rejection rate at 0.05 lands near 0.05.
        let mut rejections = 0;
        let replicates = 200;
        for rep in 0..replicates {
            let items = synthetic_items(50, 0.3, 500 + rep, &["northbridge"]);
            let mut rng = derived_rng(9000 + rep, &[]);
            let result = permutation_test(&items, "northbridge", 400, &mut rng).unwrap();
            if result.p_raw <= 0.05 {
                rejections += 1;
            }
        }
        let rate = rejections as f64 / replicates as f64;
        assert!(
            (0.02..=0.08).contains(&rate),
            "null rejection rate {rate} should be near 0.05"
        );
    }

    #[test]
    fn perfectly_separated_feature_gets_zero_p() {
        // 30 occurrences confined to the less class among 500+500 items:
        // no permutation reproduces that extremity in 100k draws.
        let mut items: Vec<(Vec<&str>, ItemClass)> = Vec::new();
        for i in 0..500 {
            items.push((if i < 30 { vec!["gerrymander"] } else { vec![] }, ItemClass::Less));
            items.push((vec![], ItemClass::More));
        }
        let corpus = BinaryLabeledItems::new(items).unwrap();
        let mut rng = derived_rng(4, &[2]);
        let result = permutation_test(&corpus, "gerrymander", 100_000, &mut rng).unwrap();
        assert_eq!(result.lr, f64::INFINITY);
        assert_eq!(result.p_raw, 0.0);
        assert_eq!(result.worse_count, 30);
        assert_eq!(result.better_count, 0);
        assert_eq!(result.total, 30);

        // The conservative rule refuses to report zero.
        let mut rng = derived_rng(4, &[2]);
        let result = permutation_test_with(
            &corpus,
            "gerrymander",
            100_000,
            PValueRule::Conservative,
            &mut rng,
        )
        .unwrap();
        assert!(result.p_raw > 0.0);
        assert!((result.p_raw - 1.0 / 100_001.0).abs() < 1e-12);
    }

    #[test]
    fn same_seed_reproduces_p_values() {
        let items = synthetic_items(40, 0.4, 77, &["alpha", "beta"]);
        let mut r1 = derived_rng(5, &[]);
        let mut r2 = derived_rng(5, &[]);
        let a = permutation_test(&items, "alpha", 2000, &mut r1).unwrap();
        let b = permutation_test(&items, "alpha", 2000, &mut r2).unwrap();
        assert_eq!(a.p_raw.to_bits(), b.p_raw.to_bits());
        assert!(permutation_test(&items, "missing", 10, &mut r1).is_err());
        assert!(permutation_test(&items, "alpha", 0, &mut r1).is_err());
    }

    #[test]
    fn item_order_does_not_change_results() {
        let mut rng = derived_rng(3, &[9]);
        let mut items: Vec<(Vec<&str>, ItemClass)> = Vec::new();
        for i in 0..120 {
            let class = if i % 2 == 0 { ItemClass::Less } else { ItemClass::More };
            let fs = if rng.random::<f64>() < 0.35 { vec!["drumlin"] } else { vec![] };
            items.push((fs, class));
        }
        let forward = BinaryLabeledItems::new(items.clone()).unwrap();
        items.reverse();
        items.swap(3, 77);
        let backward = BinaryLabeledItems::new(items).unwrap();
        let options = TestAllOptions {
            n_samples: 1500,
            ..TestAllOptions::default()
        };
        let a = test_all(&forward, &options).unwrap();
        let b = test_all(&backward, &options).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.feature, y.feature);
            assert_eq!(x.p_raw.to_bits(), y.p_raw.to_bits());
            assert_eq!(x.lr.to_bits(), y.lr.to_bits());
        }
    }

    #[test]
    fn holm_textbook_cases() {
        let (rej, adj) = holm_bonferroni(&[0.01, 0.04], 0.05).unwrap();
        assert_eq!(rej, vec![true, true]);
        assert!((adj[0] - 0.02).abs() < 1e-12);
        assert!((adj[1] - 0.04).abs() < 1e-12);

        let (rej, adj) = holm_bonferroni(&[0.03, 0.04], 0.05).unwrap();
        assert_eq!(rej, vec![false, false]);
        assert!((adj[0] - 0.06).abs() < 1e-12);
        assert!((adj[1] - 0.06).abs() < 1e-12, "running max keeps 0.06");

        let (rej, adj) = holm_bonferroni(&[0.0, 0.2, 0.9], 0.05).unwrap();
        assert_eq!(rej, vec![true, false, false]);
        assert_eq!(adj[0], 0.0);
        assert!((adj[1] - 0.4).abs() < 1e-12);
        assert!((adj[2] - 0.9).abs() < 1e-12);

        assert!(holm_bonferroni(&[0.5], 0.0).is_err());
        assert!(holm_bonferroni(&[1.5], 0.05).is_err());
    }

    #[test]
    fn holm_rejections_shrink_with_alpha() {
        let mut rng = derived_rng(14, &[]);
        for _ in 0..50 {
            let m = rng.random_range(1..12);
            let ps: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let (strict, adj_strict) = holm_bonferroni(&ps, 0.01).unwrap();
            let (loose, adj_loose) = holm_bonferroni(&ps, 0.10).unwrap();
            for i in 0..m {
                assert!(!strict[i] || loose[i], "rejection lost when raising alpha");
                assert_eq!(adj_strict[i].to_bits(), adj_loose[i].to_bits());
                assert!(adj_strict[i] >= ps[i] - 1e-15, "adjusted below raw");
            }
        }
    }

    #[test]
    fn family_wise_error_is_controlled_on_null_data() {
        let replicates = 60;
        let mut any_rejection = 0;
        for rep in 0..replicates {
            let names: Vec<String> = (0..20).map(|i| format!("f{i}")).collect();
            let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let items = synthetic_items(30, 0.35, 3000 + rep, &name_refs);
            let options = TestAllOptions {
                n_samples: 500,
                seed: rep,
                ..TestAllOptions::default()
            };
            let results = test_all(&items, &options).unwrap();
            if results.iter().any(|r| r.rejected == Some(true)) {
                any_rejection += 1;
            }
        }
        let rate = any_rejection as f64 / replicates as f64;
        assert!(rate <= 0.134, "family-wise error rate {rate} too high");
    }

    #[test]
    fn test_all_sorts_by_ratio_and_fills_adjustments() {
        let mut items: Vec<(Vec<&str>, ItemClass)> = Vec::new();
        for i in 0..80 {
            let mut fs = Vec::new();
            if i < 40 {
                // less half
                if i < 20 {
                    fs.push("mostly_less");
                }
                if i < 4 {
                    fs.push("only_less");
                }
            } else {
                if i >= 60 {
                    fs.push("mostly_more");
                }
                fs.push("everywhere");
            }
            if i % 2 == 0 {
                fs.push("balanced");
            }
            items.push((
                fs,
                if i < 40 { ItemClass::Less } else { ItemClass::More },
            ));
        }
        let corpus = BinaryLabeledItems::new(items).unwrap();
        let options = TestAllOptions {
            n_samples: 3000,
            ..TestAllOptions::default()
        };
        let results = test_all(&corpus, &options).unwrap();
        let order: Vec<&str> = results.iter().map(|r| r.feature.as_str()).collect();
        assert_eq!(
            order,
            vec!["everywhere", "mostly_more", "balanced", "mostly_less", "only_less"]
        );
        assert_eq!(results[0].lr, 0.0);
        assert_eq!(results.last().unwrap().lr, f64::INFINITY);
        for r in &results {
            assert!(r.p_adjusted.is_some());
            assert!(r.rejected.is_some());
            assert!(r.p_adjusted.unwrap() >= r.p_raw);
            assert_eq!(r.rejected.unwrap(), r.p_adjusted.unwrap() <= options.alpha);
        }
        // The strongly separated features should be the significant ones.
        let by_name = |name: &str| results.iter().find(|r| r.feature == name).unwrap();
        assert_eq!(by_name("mostly_less").rejected, Some(true));
        assert_eq!(by_name("mostly_more").rejected, Some(true));
        assert_eq!(by_name("balanced").rejected, Some(false));
    }

    #[test]
    fn results_serialize_with_infinite_lr_as_string() {
        let result = PermTestResult {
            feature: "x".into(),
            lr: f64::INFINITY,
            p_raw: 0.0,
            p_adjusted: Some(0.0),
            rejected: Some(true),
            better_count: 0,
            worse_count: 5,
            total: 5,
        };
        let json = serde_json::to_value(&result).unwrap();
        assert_eq!(json["lr"], "inf");
        assert_eq!(json["worse_count"], 5);
        let finite = PermTestResult { lr: 2.5, ..result };
        assert_eq!(serde_json::to_value(&finite).unwrap()["lr"], 2.5);
    }

    #[test]
    fn loads_items_jsonl() {
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("items.jsonl");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, r#"{{"id":"a","class":"less","features":["x","y"]}}"#).unwrap();
        writeln!(f, r#"{{"id":"b","class":"more_ethical","features":["y"]}}"#).unwrap();
        writeln!(f).unwrap();
        writeln!(f, r#"{{"id":"c","class":"more","features":[]}}"#).unwrap();
        drop(f);
        let items = load_items(&path).unwrap();
        assert_eq!(items.n_items(), 3);
        assert_eq!(items.less_total(), 1);
        assert_eq!(items.more_total(), 2);
        assert_eq!(items.feature_counts("y").unwrap(), (1, 1));

        let bad = dir.path().join("bad.jsonl");
        std::fs::write(&bad, "{\"id\":\"a\",\"class\":\"meh\",\"features\":[]}\n").unwrap();
        assert!(matches!(load_items(&bad), Err(Error::Parse { line: 1, .. })));
        let dup = dir.path().join("dup.jsonl");
        std::fs::write(
            &dup,
            "{\"id\":\"a\",\"class\":\"less\",\"features\":[]}\n{\"id\":\"a\",\"class\":\"more\",\"features\":[]}\n",
        )
        .unwrap();
        assert!(matches!(load_items(&dup), Err(Error::DuplicateId { .. })));
    }
}
