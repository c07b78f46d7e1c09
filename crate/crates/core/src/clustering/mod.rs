//! Two-phase incremental clustering: tweets fold into per-task local clusters
//! within a document, local clusters merge at the document boundary, and the
//! result merges into the persistent global cluster set, which is pruned,
//! evicted, and scanned for growth-rate events.

mod bolts;

pub use bolts::{ClusterDetector, ClusteringBolt, VectorSpout};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::DocumentId;
use crate::preprocess::TweetVector;

/// Stable cluster identity. Ids increase monotonically in creation order and
/// a merge keeps the lower (older) id.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ClusterId(pub u64);

/// A cluster: sparse term weights (normalized to sum 1) plus the tweet-count
/// bookkeeping that drives growth-rate eventing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: ClusterId,
    pub weights: BTreeMap<String, f64>,
    pub total_tweets: u64,
    pub tweets_added_this_block: u64,
    pub created_doc: DocumentId,
    pub last_active_doc: DocumentId,
}

impl Cluster {
    pub fn from_vector(id: ClusterId, vector: &TweetVector) -> Self {
        Self {
            id,
            weights: vector.weights.clone(),
            total_tweets: 1,
            tweets_added_this_block: 1,
            created_doc: vector.doc,
            last_active_doc: vector.doc,
        }
    }

    /// Heaviest terms first; ties break on the term so output is stable.
    pub fn top_terms(&self, limit: usize) -> Vec<(String, f64)> {
        let mut terms: Vec<(String, f64)> = self
            .weights
            .iter()
            .map(|(t, w)| (t.clone(), *w))
            .collect();
        terms.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        terms.truncate(limit);
        terms
    }
}

#[derive(Debug, Clone)]
pub struct ClusterParams {
    /// Cosine similarity needed both to absorb a tweet and to merge clusters.
    pub similarity_threshold: f64,
    /// Growth rate above which an updated global cluster becomes an event.
    pub growth_threshold: f64,
    /// Local clusters below this tweet count are dropped at the document end.
    pub num_tweet_threshold: u64,
    /// Weight floor for clusters that grew past `established_size`.
    pub prune_weight_established: f64,
    /// Weight floor applied to fresh clusters entering the store.
    pub prune_weight_new: f64,
    pub established_size: u64,
    /// Global clusters untouched for this many documents are evicted.
    pub inactivity_blocks: u64,
    pub assignment: Assignment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    /// Scan clusters in creation order and take the first similar one.
    FirstFit,
    /// Scan all clusters and take the most similar qualifying one.
    BestFit,
}

impl Default for ClusterParams {
    fn default() -> Self {
        Self {
            similarity_threshold: 0.5,
            growth_threshold: 0.5,
            num_tweet_threshold: 30,
            prune_weight_established: 0.01,
            prune_weight_new: 0.05,
            established_size: 50,
            inactivity_blocks: 3,
            assignment: Assignment::FirstFit,
        }
    }
}

/// A cluster whose growth rate crossed the threshold at a document boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterEvent {
    pub cluster: ClusterId,
    pub doc: DocumentId,
    pub growth_rate: f64,
    /// At most ten heaviest terms at eventing time.
    pub top_terms: Vec<(String, f64)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ClusteringError {
    #[error("cosine similarity is undefined for a zero vector")]
    ZeroVector,
    #[error("growth rate is undefined for an empty cluster")]
    EmptyCluster,
}

/// Cosine similarity of two sparse non-negative weight maps, in [0, 1].
pub fn cosine(
    a: &BTreeMap<String, f64>,
    b: &BTreeMap<String, f64>,
) -> Result<f64, ClusteringError> {
    let norm = |m: &BTreeMap<String, f64>| m.values().map(|w| w * w).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(ClusteringError::ZeroVector);
    }
    // Walk the smaller map against the larger one.
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(t, w)| large.get(t).map(|v| w * v))
        .sum();
    Ok((dot / (na * nb)).clamp(0.0, 1.0))
}

/// Count-weighted average of two weight maps:
/// `w(t) = (nA * wA(t) + nB * wB(t)) / (nA + nB)`. Equals the centroid of all
/// member tweet vectors, so merging normalized maps stays normalized.
pub fn merge_weights(
    a: &BTreeMap<String, f64>,
    a_count: u64,
    b: &BTreeMap<String, f64>,
    b_count: u64,
) -> BTreeMap<String, f64> {
    let total = (a_count + b_count) as f64;
    let mut merged: BTreeMap<String, f64> = BTreeMap::new();
    for (t, w) in a {
        *merged.entry(t.clone()).or_insert(0.0) += w * a_count as f64 / total;
    }
    for (t, w) in b {
        *merged.entry(t.clone()).or_insert(0.0) += w * b_count as f64 / total;
    }
    merged
}

/// Which weight floor to apply when pruning a cluster's term map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PruneRule {
    /// Merge-time rule: clusters above `established_size` drop terms below
    /// `prune_weight_established`; smaller clusters are left alone.
    Established,
    /// Store-insert rule for fresh clusters: drop terms below
    /// `prune_weight_new` regardless of size.
    Fresh,
}

/// Drop underweight terms and renormalize. If pruning would empty the map the
/// single heaviest term is kept instead.
pub fn prune_weights(cluster: &mut Cluster, rule: PruneRule, params: &ClusterParams) {
    let floor = match rule {
        PruneRule::Established => {
            if cluster.total_tweets <= params.established_size {
                return;
            }
            params.prune_weight_established
        }
        PruneRule::Fresh => params.prune_weight_new,
    };
    let survives: usize = cluster.weights.values().filter(|&&w| w >= floor).count();
    if survives == cluster.weights.len() {
        return;
    }
    if survives == 0 {
        let heaviest = cluster
            .top_terms(1)
            .into_iter()
            .next()
            .map(|(t, _)| t);
        cluster.weights.retain(|t, _| Some(t) == heaviest.as_ref());
    } else {
        cluster.weights.retain(|_, w| *w >= floor);
    }
    let sum: f64 = cluster.weights.values().sum();
    if sum > 0.0 {
        for w in cluster.weights.values_mut() {
            *w /= sum;
        }
    }
}

/// Outcome of folding one tweet into a local cluster list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assigned {
    Absorbed(ClusterId),
    Created(ClusterId),
    /// The tweet had an empty vector and was skipped.
    SkippedEmpty,
}

/// Fold a tweet vector into the local cluster list. The first (or, with
/// best-fit, the most) similar cluster at or above the similarity threshold
/// absorbs the tweet; otherwise a new cluster is appended.
pub fn assign_tweet(
    vector: &TweetVector,
    locals: &mut Vec<Cluster>,
    next_id: &mut u64,
    params: &ClusterParams,
) -> Assigned {
    if vector.weights.is_empty() {
        return Assigned::SkippedEmpty;
    }
    let mut chosen: Option<(usize, f64)> = None;
    for (idx, cluster) in locals.iter().enumerate() {
        let similarity = cosine(&cluster.weights, &vector.weights)
            .expect("cluster and tweet weights are non-empty");
        if similarity < params.similarity_threshold {
            continue;
        }
        match params.assignment {
            Assignment::FirstFit => {
                chosen = Some((idx, similarity));
                break;
            }
            Assignment::BestFit => {
                if chosen.is_none() || similarity > chosen.unwrap().1 {
                    chosen = Some((idx, similarity));
                }
            }
        }
    }
    match chosen {
        Some((idx, _)) => {
            let cluster = &mut locals[idx];
            cluster.weights =
                merge_weights(&cluster.weights, cluster.total_tweets, &vector.weights, 1);
            cluster.total_tweets += 1;
            cluster.tweets_added_this_block += 1;
            cluster.last_active_doc = cluster.last_active_doc.max(vector.doc);
            Assigned::Absorbed(cluster.id)
        }
        None => {
            let id = ClusterId(*next_id);
            *next_id += 1;
            locals.push(Cluster::from_vector(id, vector));
            Assigned::Created(id)
        }
    }
}

/// Merge the per-task local cluster lists of one document into a single list:
/// greedy pairwise merge in (task, creation) order, pruning after each merge,
/// then deletion of everything below the tweet-count threshold.
pub fn local_merge(mut per_task: Vec<(usize, Vec<Cluster>)>, params: &ClusterParams) -> Vec<Cluster> {
    per_task.sort_by_key(|(task, _)| *task);
    let mut accepted: Vec<Cluster> = Vec::new();
    for (_, clusters) in per_task {
        for cluster in clusters {
            let mut absorbed = false;
            for existing in accepted.iter_mut() {
                let similarity = cosine(&existing.weights, &cluster.weights)
                    .expect("clusters have non-empty weights");
                if similarity >= params.similarity_threshold {
                    merge_into(existing, &cluster);
                    prune_weights(existing, PruneRule::Established, params);
                    absorbed = true;
                    break;
                }
            }
            if !absorbed {
                accepted.push(cluster);
            }
        }
    }
    accepted.retain(|c| c.total_tweets >= params.num_tweet_threshold);
    accepted
}

fn merge_into(target: &mut Cluster, source: &Cluster) {
    target.weights = merge_weights(
        &target.weights,
        target.total_tweets,
        &source.weights,
        source.total_tweets,
    );
    target.total_tweets += source.total_tweets;
    target.tweets_added_this_block += source.tweets_added_this_block;
    target.last_active_doc = target.last_active_doc.max(source.last_active_doc);
    // target keeps its own (older) id
}

/// Fraction of a cluster's lifetime tweets that arrived in the current block.
pub fn growth_rate(added: u64, total: u64) -> Result<f64, ClusteringError> {
    if total == 0 {
        return Err(ClusteringError::EmptyCluster);
    }
    debug_assert!(added <= total);
    Ok(added as f64 / total as f64)
}

/// Store changes produced by one global merge.
#[derive(Debug, Clone, Default)]
pub struct GlobalDelta {
    pub upserts: Vec<Cluster>,
    pub deletes: Vec<ClusterId>,
}

/// Merge a document's (already locally merged) clusters into the global set.
///
/// Globals absorb similar locals in store order; an updated global whose
/// growth rate exceeds the threshold becomes an event. Leftover locals are
/// pruned with the fresh rule and inserted. Globals untouched for
/// `inactivity_blocks` documents are evicted, and every survivor's
/// per-block counter resets to zero.
pub fn global_merge(
    globals: &mut Vec<Cluster>,
    locals: Vec<Cluster>,
    doc: DocumentId,
    next_global_id: &mut u64,
    params: &ClusterParams,
) -> (Vec<ClusterEvent>, GlobalDelta) {
    let mut events = Vec::new();
    let mut delta = GlobalDelta::default();
    let mut remaining = locals;

    for global in globals.iter_mut() {
        let mut absorbed_any = false;
        let mut idx = 0;
        while idx < remaining.len() {
            let similarity = cosine(&global.weights, &remaining[idx].weights)
                .expect("clusters have non-empty weights");
            if similarity >= params.similarity_threshold {
                let local = remaining.remove(idx);
                merge_into(global, &local);
                prune_weights(global, PruneRule::Established, params);
                absorbed_any = true;
            } else {
                idx += 1;
            }
        }
        if absorbed_any {
            global.last_active_doc = doc;
            let rate = growth_rate(global.tweets_added_this_block, global.total_tweets)
                .expect("updated cluster is non-empty");
            if rate > params.growth_threshold {
                events.push(ClusterEvent {
                    cluster: global.id,
                    doc,
                    growth_rate: rate,
                    top_terms: global.top_terms(10),
                });
            }
            delta.upserts.push(global.clone());
        }
    }

    // Unabsorbed locals enter the store as fresh globals; no event for these.
    for mut local in remaining {
        prune_weights(&mut local, PruneRule::Fresh, params);
        local.id = ClusterId(*next_global_id);
        *next_global_id += 1;
        local.last_active_doc = doc;
        globals.push(local.clone());
        delta.upserts.push(local);
    }

    // Evict globals inactive for the configured number of documents.
    let horizon = doc.0.saturating_sub(params.inactivity_blocks);
    let evict = |c: &Cluster| doc.0 >= params.inactivity_blocks && c.last_active_doc.0 <= horizon;
    for cluster in globals.iter() {
        if evict(cluster) {
            delta.deletes.push(cluster.id);
        }
    }
    globals.retain(|c| !evict(c));

    for cluster in globals.iter_mut() {
        cluster.tweets_added_this_block = 0;
    }
    for cluster in delta.upserts.iter_mut() {
        cluster.tweets_added_this_block = 0;
    }
    // An upsert for a cluster evicted in the same pass would be contradictory;
    // eviction only hits untouched clusters, which are never upserted.
    debug_assert!(delta
        .upserts
        .iter()
        .all(|u| !delta.deletes.contains(&u.id)));

    (events, delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn weights(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(t, w)| (t.to_string(), *w)).collect()
    }

    fn vector(id: &str, doc: u64, pairs: &[(&str, f64)]) -> TweetVector {
        TweetVector {
            id: id.to_string(),
            doc: DocumentId(doc),
            weights: weights(pairs),
        }
    }

    fn cluster(id: u64, doc: u64, total: u64, pairs: &[(&str, f64)]) -> Cluster {
        Cluster {
            id: ClusterId(id),
            weights: weights(pairs),
            total_tweets: total,
            tweets_added_this_block: total,
            created_doc: DocumentId(doc),
            last_active_doc: DocumentId(doc),
        }
    }

    #[test]
    fn cosine_worked_values() {
        let a = weights(&[("a", 1.0)]);
        let same = weights(&[("a", 1.0)]);
        assert!((cosine(&a, &same).unwrap() - 1.0).abs() < 1e-12);

        let disjoint = weights(&[("b", 1.0)]);
        assert_eq!(cosine(&a, &disjoint).unwrap(), 0.0);

        let mixed = weights(&[("a", 0.5), ("b", 0.5)]);
        assert!((cosine(&a, &mixed).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn cosine_rejects_zero_vectors() {
        let a = weights(&[("a", 1.0)]);
        let zero = BTreeMap::new();
        assert_eq!(cosine(&a, &zero).unwrap_err(), ClusteringError::ZeroVector);
    }

    #[test]
    fn merge_weights_examples() {
        let m = merge_weights(&weights(&[("a", 1.0)]), 1, &weights(&[("b", 1.0)]), 1);
        assert_eq!(m, weights(&[("a", 0.5), ("b", 0.5)]));

        let m = merge_weights(&weights(&[("a", 1.0)]), 3, &weights(&[("a", 1.0)]), 1);
        assert_eq!(m, weights(&[("a", 1.0)]));

        let m = merge_weights(&weights(&[("a", 1.0)]), 1, &weights(&[("b", 1.0)]), 3);
        assert_eq!(m, weights(&[("a", 0.25), ("b", 0.75)]));
    }

    #[test]
    fn prune_drops_underweight_terms_in_established_clusters() {
        let params = ClusterParams::default();
        let mut c = cluster(0, 0, 60, &[("a", 0.795), ("b", 0.2), ("junk", 0.005)]);
        prune_weights(&mut c, PruneRule::Established, &params);
        assert!(!c.weights.contains_key("junk"));
        let sum: f64 = c.weights.values().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn prune_skips_small_clusters_on_established_rule() {
        let params = ClusterParams::default();
        let mut c = cluster(0, 0, 10, &[("a", 0.995), ("junk", 0.005)]);
        prune_weights(&mut c, PruneRule::Established, &params);
        assert!(c.weights.contains_key("junk"));
    }

    #[test]
    fn fresh_rule_prunes_regardless_of_size() {
        let params = ClusterParams::default();
        let mut c = cluster(0, 0, 2, &[("a", 0.96), ("junk", 0.04)]);
        prune_weights(&mut c, PruneRule::Fresh, &params);
        assert_eq!(c.weights.len(), 1);
        assert!((c.weights["a"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prune_keeps_heaviest_term_when_all_would_drop() {
        let params = ClusterParams::default();
        let mut c = cluster(
            0,
            0,
            100,
            &[("a", 0.004), ("b", 0.003), ("c", 0.002)],
        );
        // Make the map artificially sparse: every term below the floor.
        prune_weights(&mut c, PruneRule::Established, &params);
        assert_eq!(c.weights.len(), 1);
        assert!((c.weights["a"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn assign_bootstraps_absorbs_and_appends() {
        let params = ClusterParams::default();
        let mut locals = Vec::new();
        let mut next_id = 0;

        let v = vector("t1", 0, &[("fire", 0.5), ("mall", 0.5)]);
        assert_eq!(
            assign_tweet(&v, &mut locals, &mut next_id, &params),
            Assigned::Created(ClusterId(0))
        );
        assert_eq!(locals[0].weights, v.weights);

        // Identical vector is absorbed.
        assert_eq!(
            assign_tweet(&v, &mut locals, &mut next_id, &params),
            Assigned::Absorbed(ClusterId(0))
        );
        assert_eq!(locals[0].total_tweets, 2);

        // Orthogonal vector opens a new cluster.
        let w = vector("t2", 0, &[("rain", 1.0)]);
        assert_eq!(
            assign_tweet(&w, &mut locals, &mut next_id, &params),
            Assigned::Created(ClusterId(1))
        );
        assert_eq!(locals.len(), 2);
    }

    #[test]
    fn assign_skips_empty_vectors() {
        let params = ClusterParams::default();
        let mut locals = Vec::new();
        let mut next_id = 0;
        let empty = vector("t", 0, &[]);
        assert_eq!(
            assign_tweet(&empty, &mut locals, &mut next_id, &params),
            Assigned::SkippedEmpty
        );
        assert!(locals.is_empty());
    }

    #[test]
    fn first_fit_takes_the_earlier_cluster() {
        let params = ClusterParams::default();
        let mut locals = vec![
            cluster(0, 0, 5, &[("fire", 0.6), ("mall", 0.4)]),
            cluster(1, 0, 5, &[("fire", 0.5), ("smoke", 0.5)]),
        ];
        let mut next_id = 2;
        let v = vector("t", 0, &[("fire", 0.5), ("smoke", 0.5)]);
        // Both clusters qualify; first-fit picks cluster 0 even though
        // cluster 1 matches perfectly.
        assert_eq!(
            assign_tweet(&v, &mut locals, &mut next_id, &params),
            Assigned::Absorbed(ClusterId(0))
        );

        let best = ClusterParams {
            assignment: Assignment::BestFit,
            ..ClusterParams::default()
        };
        let mut locals = vec![
            cluster(0, 0, 5, &[("fire", 0.6), ("mall", 0.4)]),
            cluster(1, 0, 5, &[("fire", 0.5), ("smoke", 0.5)]),
        ];
        assert_eq!(
            assign_tweet(&v, &mut locals, &mut next_id, &best),
            Assigned::Absorbed(ClusterId(1))
        );
    }

    #[test]
    fn local_merge_combines_across_tasks_and_applies_size_gate() {
        let params = ClusterParams::default();
        let a = cluster(0, 0, 20, &[("quake", 0.7), ("city", 0.3)]);
        let b = cluster(0, 0, 20, &[("quake", 0.7), ("city", 0.3)]);
        let merged = local_merge(vec![(0, vec![a]), (1, vec![b])], &params);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].total_tweets, 40);
    }

    #[test]
    fn local_merge_deletes_small_clusters() {
        let params = ClusterParams::default();
        let small = cluster(0, 0, 29, &[("quake", 1.0)]);
        assert!(local_merge(vec![(0, vec![small])], &params).is_empty());
        assert!(local_merge(vec![], &params).is_empty());
    }

    #[test]
    fn local_merge_conserves_tweets_modulo_deletions() {
        let params = ClusterParams::default();
        let inputs = vec![
            (0, vec![cluster(0, 0, 35, &[("a", 1.0)]), cluster(1, 0, 10, &[("b", 1.0)])]),
            (1, vec![cluster(0, 0, 25, &[("a", 1.0)])]),
        ];
        let total_in: u64 = 35 + 10 + 25;
        let merged = local_merge(inputs, &params);
        let total_out: u64 = merged.iter().map(|c| c.total_tweets).sum();
        // "a" clusters merge to 60 and survive; "b" (10) falls to the gate.
        assert_eq!(total_out, 60);
        assert_eq!(total_in - total_out, 10);
    }

    #[test]
    fn global_merge_inserts_fresh_clusters_without_events() {
        let params = ClusterParams::default();
        let mut globals = Vec::new();
        let mut next_id = 0;
        let local = cluster(0, 3, 35, &[("quake", 0.8), ("city", 0.2)]);
        let (events, delta) =
            global_merge(&mut globals, vec![local], DocumentId(3), &mut next_id, &params);
        assert!(events.is_empty());
        assert_eq!(globals.len(), 1);
        assert_eq!(globals[0].id, ClusterId(0));
        assert_eq!(delta.upserts.len(), 1);
        assert_eq!(globals[0].tweets_added_this_block, 0);
    }

    #[test]
    fn global_merge_events_on_growth() {
        let params = ClusterParams::default();
        let mut globals = vec![{
            let mut c = cluster(7, 2, 40, &[("quake", 0.8), ("city", 0.2)]);
            c.tweets_added_this_block = 0;
            c
        }];
        let mut next_id = 8;
        let local = cluster(0, 3, 60, &[("quake", 0.8), ("city", 0.2)]);
        let (events, delta) =
            global_merge(&mut globals, vec![local], DocumentId(3), &mut next_id, &params);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].cluster, ClusterId(7));
        assert!((events[0].growth_rate - 0.6).abs() < 1e-12);
        assert!(events[0].top_terms.iter().any(|(t, _)| t == "quake"));
        assert_eq!(globals[0].total_tweets, 100);
        assert_eq!(delta.upserts.len(), 1);
    }

    #[test]
    fn global_merge_evicts_inactive_clusters() {
        let params = ClusterParams::default();
        let mut globals = vec![{
            let mut c = cluster(1, 5, 100, &[("old", 1.0)]);
            c.tweets_added_this_block = 0;
            c
        }];
        let mut next_id = 2;
        // Untouched at docs 6 and 7: still present.
        for d in 6..8 {
            let (_, delta) =
                global_merge(&mut globals, vec![], DocumentId(d), &mut next_id, &params);
            assert!(delta.deletes.is_empty());
        }
        assert_eq!(globals.len(), 1);
        // Third untouched document: evicted.
        let (_, delta) = global_merge(&mut globals, vec![], DocumentId(8), &mut next_id, &params);
        assert_eq!(delta.deletes, vec![ClusterId(1)]);
        assert!(globals.is_empty());
    }

    #[test]
    fn totals_never_decrease_while_a_cluster_lives() {
        let params = ClusterParams {
            num_tweet_threshold: 1,
            ..ClusterParams::default()
        };
        let mut globals: Vec<Cluster> = Vec::new();
        let mut next_id = 0;
        let mut highwater: std::collections::HashMap<ClusterId, u64> = Default::default();
        for doc in 0..20u64 {
            let locals = vec![
                cluster(0, doc, 5 + doc % 7, &[("quake", 0.7), ("city", 0.3)]),
                cluster(1, doc, 3, &[(if doc % 2 == 0 { "rain" } else { "sun" }, 1.0)]),
            ];
            global_merge(&mut globals, locals, DocumentId(doc), &mut next_id, &params);
            for c in &globals {
                if let Some(&previous) = highwater.get(&c.id) {
                    assert!(c.total_tweets >= previous, "cluster {:?} shrank", c.id);
                }
                highwater.insert(c.id, c.total_tweets);
            }
        }
    }

    #[test]
    fn growth_rate_values() {
        assert_eq!(growth_rate(6, 10).unwrap(), 0.6);
        assert_eq!(growth_rate(0, 10).unwrap(), 0.0);
        assert_eq!(growth_rate(10, 10).unwrap(), 1.0);
        assert_eq!(growth_rate(1, 0).unwrap_err(), ClusteringError::EmptyCluster);
    }

    proptest! {
        // Random assign/merge/prune sequences keep every cluster normalized.
        #[test]
        fn weights_stay_normalized(
            ops in proptest::collection::vec(
                (0u8..3, proptest::collection::vec(("[a-e]", 0.01f64..1.0), 1..4)),
                1..60,
            )
        ) {
            let params = ClusterParams {
                num_tweet_threshold: 1,
                ..ClusterParams::default()
            };
            let mut locals: Vec<Cluster> = Vec::new();
            let mut next_id = 0u64;
            for (op, raw) in ops {
                let total: f64 = raw.iter().map(|(_, w)| w).sum();
                let mut weights = BTreeMap::new();
                for (t, w) in raw {
                    *weights.entry(t).or_insert(0.0) += w / total;
                }
                let v = TweetVector { id: "t".into(), doc: DocumentId(0), weights };
                match op {
                    0 | 1 => { assign_tweet(&v, &mut locals, &mut next_id, &params); }
                    _ => {
                        if let Some(c) = locals.last_mut() {
                            prune_weights(c, PruneRule::Fresh, &params);
                        }
                    }
                }
                for c in &locals {
                    let sum: f64 = c.weights.values().sum();
                    prop_assert!((sum - 1.0).abs() < 1e-9, "sum {} after ops", sum);
                }
            }
        }
    }
}
