//! Slow, obviously-correct reference implementations. Tests compare the
//! optimized code in `labflow-core` against these on small inputs.

use std::collections::BTreeSet;

pub mod gen;

use labflow_core::access::{Action, EdgeLabel, GraphEdge, COMMUNITY};
use labflow_core::resources::{Allocation, HostState, WorkerRequest};

/// Enumerates every assignment of workers to hosts (or to nowhere) and picks
/// the feasible one with the most workers, then the earliest set of submit
/// sequence numbers, then the smallest host ids in submission order.
///
/// Exponential: `(hosts + 1) ^ workers` candidates.
pub fn brute_force_plan(pending: &[WorkerRequest], hosts: &[HostState]) -> Vec<Allocation> {
    let mut workers: Vec<&WorkerRequest> = pending
        .iter()
        .filter(|w| w.request.cpu > 0 || w.request.gpu > 0)
        .collect();
    workers.sort_by_key(|w| w.submit_seq);
    let mut hosts: Vec<&HostState> = hosts.iter().collect();
    hosts.sort_by(|a, b| a.host_id.cmp(&b.host_id));

    let n = workers.len();
    let choices = hosts.len() + 1;
    let total = choices.checked_pow(n as u32).expect("instance too large for brute force");

    // Key: (fewer workers is worse, then seq list, then host vector).
    type Key = (usize, Vec<u64>, Vec<usize>, Vec<usize>);
    let mut best: Option<Key> = None;
    for code in 0..total {
        let mut rest = code;
        let mut assignment = Vec::with_capacity(n);
        for _ in 0..n {
            assignment.push(rest % choices);
            rest /= choices;
        }
        if !feasible(&workers, &hosts, &assignment) {
            continue;
        }
        let seqs: Vec<u64> = workers
            .iter()
            .zip(&assignment)
            .filter(|(_, &a)| a > 0)
            .map(|(w, _)| w.submit_seq)
            .collect();
        let host_vector: Vec<usize> = assignment.iter().filter(|&&a| a > 0).map(|&a| a - 1).collect();
        let better = match &best {
            None => true,
            Some((count, best_seqs, best_hosts, _)) => {
                seqs.len() > *count
                    || (seqs.len() == *count
                        && (seqs < *best_seqs || (seqs == *best_seqs && host_vector < *best_hosts)))
            }
        };
        if better {
            best = Some((seqs.len(), seqs, host_vector, assignment));
        }
    }

    let Some((_, _, _, assignment)) = best else {
        return Vec::new();
    };
    workers
        .iter()
        .zip(&assignment)
        .filter(|(_, &a)| a > 0)
        .map(|(w, &a)| Allocation {
            worker_id: w.worker_id.clone(),
            host_id: hosts[a - 1].host_id.clone(),
            request: w.request,
        })
        .collect()
}

fn feasible(workers: &[&WorkerRequest], hosts: &[&HostState], assignment: &[usize]) -> bool {
    hosts.iter().enumerate().all(|(h, host)| {
        let (cpu, gpu) = workers
            .iter()
            .zip(assignment)
            .filter(|(_, &a)| a == h + 1)
            .fold((0u64, 0u64), |(c, g), (w, _)| (c + w.request.cpu as u64, g + w.request.gpu as u64));
        cpu <= host.cpu_available as u64 && gpu <= host.gpu_available as u64
    })
}

/// Decides access by enumerating every simple path from `user` (and from the
/// community node) that ends at `resource`, then keeping the paths whose
/// label sequence is one of the authorizing shapes:
///
/// * `user -OWNS-> resource`
/// * `user -GRANTED{action}-> resource`
/// * `community -GRANTED{action}-> resource`
/// * `user -MEMBER_OF-> team -GRANTED{action}-> resource`
///
/// Returns the authorizing paths as sets of `(src, label, dst)` triples.
pub fn brute_force_access(edges: &[GraphEdge], user: &str, action: Action, resource: &str) -> BTreeSet<Vec<(String, EdgeLabel, String)>> {
    let mut paths = Vec::new();
    for start in [user, COMMUNITY] {
        let mut stack = vec![(start.to_string(), Vec::<&GraphEdge>::new())];
        while let Some((node, path)) = stack.pop() {
            if node == resource && !path.is_empty() {
                paths.push((start, path.clone()));
            }
            for edge in edges.iter().filter(|e| e.src == node) {
                let revisits = edge.dst == start || path.iter().any(|p| p.dst == edge.dst);
                if !revisits {
                    let mut next = path.clone();
                    next.push(edge);
                    stack.push((edge.dst.clone(), next));
                }
            }
        }
    }

    paths
        .into_iter()
        .filter(|(start, path)| {
            let labels: Vec<EdgeLabel> = path.iter().map(|e| e.label).collect();
            let last_grants = path.last().is_some_and(|e| e.label == EdgeLabel::Granted && e.actions.contains(&action));
            match (*start == COMMUNITY, labels.as_slice()) {
                (false, [EdgeLabel::Owns]) => true,
                (_, [EdgeLabel::Granted]) => last_grants,
                (false, [EdgeLabel::MemberOf, EdgeLabel::Granted]) => last_grants,
                _ => false,
            }
        })
        .map(|(_, path)| path.iter().map(|e| (e.src.clone(), e.label, e.dst.clone())).collect())
        .collect()
}

/// A document reduced to what search looks at.
#[derive(Debug, Clone)]
pub struct SearchDoc {
    pub content_id: String,
    pub name: String,
    pub text: String,
}

/// Scores every document by scanning its text for each distinct query word.
/// Words are maximal runs of alphanumeric characters, compared lowercased.
/// Hits are ordered by score descending, then name, then id.
pub fn naive_search(docs: &[SearchDoc], query: &str) -> Vec<(String, usize)> {
    let words = |text: &str| -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut current = String::new();
        for c in text.chars().chain(std::iter::once(' ')) {
            if c.is_alphanumeric() {
                current.push(c);
            } else if !current.is_empty() {
                out.insert(current.to_lowercase());
                current.clear();
            }
        }
        out
    };
    let query = words(query);
    let mut hits: Vec<(&SearchDoc, usize)> = docs
        .iter()
        .map(|doc| {
            let text = words(&doc.text);
            (doc, query.iter().filter(|q| text.contains(*q)).count())
        })
        .filter(|(_, score)| *score > 0)
        .collect();
    hits.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then_with(|| a.0.name.cmp(&b.0.name))
            .then_with(|| a.0.content_id.cmp(&b.0.content_id))
    });
    hits.into_iter().map(|(doc, score)| (doc.content_id.clone(), score)).collect()
}
