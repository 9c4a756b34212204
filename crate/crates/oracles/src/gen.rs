//! Random instance generators shared by property tests and the acceptance
//! suite.

use std::collections::BTreeSet;

use labflow_core::access::{Action, EdgeLabel, GraphEdge, NodeKind};
use labflow_core::resources::{HostState, ResourceRequest, WorkerRequest};
use labflow_core::workflow::{JobSpec, WorkflowSpec};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde_json::{json, Value};

/// Up to 3 hosts and 8 workers, cpu in 0..=8 and gpu in 0..=2.
pub fn scheduler_instance(rng: &mut impl Rng) -> (Vec<WorkerRequest>, Vec<HostState>) {
    let hosts = (0..rng.random_range(1..=3))
        .map(|h| HostState::new(format!("h{h}"), rng.random_range(0..=8), rng.random_range(0..=2)))
        .collect();
    let mut seqs: Vec<u64> = (1..=20).collect();
    seqs.shuffle(rng);
    let workers = (0..rng.random_range(0..=8))
        .map(|w| WorkerRequest {
            worker_id: format!("w{w}"),
            workflow_id: "wf".into(),
            request: ResourceRequest::new(rng.random_range(0..=8), rng.random_range(0..=2)),
            submit_seq: seqs[w],
        })
        .collect();
    (workers, hosts)
}

/// A workflow of 1 to `max_jobs` jobs whose dependencies only point at
/// earlier jobs, with 1 to 4 workers.
pub fn dag_workflow(rng: &mut impl Rng, max_jobs: usize) -> WorkflowSpec {
    let n = rng.random_range(1..=max_jobs);
    let mut jobs: Vec<JobSpec> = (0..n)
        .map(|i| {
            let mut job = JobSpec::new(format!("j{i}"));
            for d in 0..i {
                if rng.random_bool(0.3) {
                    job.depends_on.push(format!("j{d}"));
                }
            }
            job
        })
        .collect();
    // Submission order should not matter to validation.
    jobs.shuffle(rng);
    let workers = rng.random_range(1..=4.min(n as u32));
    WorkflowSpec::new(jobs, workers, ResourceRequest::new(1, 0))
}

/// A random access graph: node kinds and edges that respect the kind rules.
#[derive(Debug, Clone)]
pub struct RandomGraph {
    pub nodes: Vec<(String, NodeKind)>,
    pub edges: Vec<GraphEdge>,
}

impl RandomGraph {
    pub fn ids(&self, kind: NodeKind) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|(_, k)| *k == kind)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// At most `max_nodes` nodes in total, counting the community node.
pub fn access_graph(rng: &mut impl Rng, max_nodes: usize) -> RandomGraph {
    let budget = rng.random_range(3..max_nodes);
    let users = rng.random_range(1..=budget - 2);
    let teams = rng.random_range(0..=budget - 1 - users);
    let resources = (budget - users - teams).max(1);
    let mut nodes = Vec::new();
    nodes.extend((0..users).map(|i| (format!("u{i}"), NodeKind::User)));
    nodes.extend((0..teams).map(|i| (format!("team-{i}"), NodeKind::Team)));
    nodes.extend((0..resources).map(|i| (format!("r{i}"), NodeKind::Resource)));

    let user_ids: Vec<String> = (0..users).map(|i| format!("u{i}")).collect();
    let team_ids: Vec<String> = (0..teams).map(|i| format!("team-{i}")).collect();
    let resource_ids: Vec<String> = (0..resources).map(|i| format!("r{i}")).collect();
    let mut subjects: Vec<String> = user_ids.iter().chain(&team_ids).cloned().collect();
    subjects.push(labflow_core::access::COMMUNITY.into());

    let mut edges = Vec::new();
    let mut owned = BTreeSet::new();
    for _ in 0..rng.random_range(0..=3 * budget) {
        let edge = match rng.random_range(0..3) {
            0 if !team_ids.is_empty() => GraphEdge {
                src: user_ids.choose(rng).unwrap().clone(),
                dst: team_ids.choose(rng).unwrap().clone(),
                label: EdgeLabel::MemberOf,
                actions: BTreeSet::new(),
            },
            1 => {
                let dst = resource_ids.choose(rng).unwrap().clone();
                if !owned.insert(dst.clone()) {
                    continue;
                }
                GraphEdge {
                    src: user_ids.choose(rng).unwrap().clone(),
                    dst,
                    label: EdgeLabel::Owns,
                    actions: BTreeSet::new(),
                }
            }
            _ => GraphEdge {
                src: subjects.choose(rng).unwrap().clone(),
                dst: resource_ids.choose(rng).unwrap().clone(),
                label: EdgeLabel::Granted,
                actions: action_set(rng),
            },
        };
        if !edges.iter().any(|e: &GraphEdge| e.src == edge.src && e.dst == edge.dst && e.label == edge.label) {
            edges.push(edge);
        }
    }
    RandomGraph { nodes, edges }
}

/// A non-empty random subset of the four actions.
pub fn action_set(rng: &mut impl Rng) -> BTreeSet<Action> {
    loop {
        let set: BTreeSet<Action> = Action::ALL.into_iter().filter(|_| rng.random_bool(0.5)).collect();
        if !set.is_empty() {
            return set;
        }
    }
}

const WORDS: &[&str] = &[
    "label", "segment", "image", "model", "train", "test", "crystal", "beam", "x-ray", "Coach", "msdnet",
    "tomography", "scatter", "classify", "GPU", "fast", "Fast", "net", "data", "élan",
];

fn phrase(rng: &mut impl Rng, max: usize) -> String {
    let n = rng.random_range(0..=max);
    let seps = [" ", "-", ", ", "_", "/"];
    let mut out = String::new();
    for i in 0..n {
        if i > 0 {
            out.push_str(seps.choose(rng).unwrap());
        }
        out.push_str(WORDS.choose(rng).unwrap());
    }
    out
}

/// Up to 50 content documents with random names, descriptions and tags.
/// Names repeat often so duplicate detection and tie-breaks get exercised;
/// versions are unique to keep registration from failing.
pub fn corpus(rng: &mut impl Rng, max_docs: usize) -> Vec<Value> {
    let kinds = ["model", "app", "workflow", "asset"];
    (0..rng.random_range(0..=max_docs))
        .map(|i| {
            let name = match phrase(rng, 2) {
                n if n.is_empty() => "untitled".to_string(),
                n => n,
            };
            let mut doc = json!({
                "content_type": kinds.choose(rng).unwrap(),
                "name": name,
                "version": format!("{i}"),
                "uri": format!("docker://img-{i}"),
                "description": phrase(rng, 6),
                "tags": (0..rng.random_range(0..3)).map(|_| phrase(rng, 1)).collect::<Vec<_>>(),
                "public": rng.random_bool(0.5),
            });
            if doc["content_type"] == "app" {
                doc["service"] = json!({"command": ["echo", "ok"]});
            }
            doc
        })
        .collect()
}

/// A query of 1 to 3 words drawn from the corpus vocabulary, sometimes with
/// a word that never occurs.
pub fn query(rng: &mut impl Rng) -> String {
    let mut q = phrase(rng, 3);
    if q.is_empty() || rng.random_bool(0.2) {
        q.push_str(" zebra");
    }
    q
}
