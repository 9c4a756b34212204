//! Supply-constrained placement of pending workers onto hosts.
//!
//! [`plan_allocations`] solves a small constraint problem exactly: choose the
//! largest set of pending workers that can be packed onto the hosts without
//! exceeding any host's CPU or GPU availability. Ties are broken first by
//! preferring earlier submissions (the sorted `submit_seq` list of the chosen
//! set is lexicographically smallest), then by placing each chosen worker, in
//! submission order, on the smallest `host_id` that still admits a complete
//! packing.
//!
//! The search is a depth-first branch-and-bound over workers in submission
//! order with two prunings:
//!
//! * a relaxation bound: the remaining workers are packed into the pooled CPU
//!   and GPU availability one dimension at a time, smallest first, after
//!   charging any workers already forced into the selection;
//! * request symmetry: once a worker is left out, later workers with an
//!   identical request are left out as well. Swapping such a worker for the
//!   earlier one keeps the packing feasible and yields an earlier set, so no
//!   preferred solution is lost.
//!
//! Hosts with identical remaining availability are interchangeable while
//! searching for feasibility, so only the first of them is tried.
//!
//! The search visits at most [`SEARCH_BUDGET`] nodes per plan. Past that the
//! best packing found so far is returned as is, so pathological queues cost
//! bounded time at the price of optimality.

use alloc::vec;
use alloc::vec::Vec;

use crate::resources::{Allocation, HostState, ResourceRequest, WorkerRequest};

/// Maximum number of search nodes visited by one call to [`plan_allocations`].
pub const SEARCH_BUDGET: u64 = 250_000;

/// Plans which pending workers go to which hosts. Pure: neither input is
/// modified, and identical inputs give identical plans.
///
/// `pending` is expected in `submit_seq` order; it is re-sorted defensively.
/// Workers whose request is empty or fits no host are never allocated.
pub fn plan_allocations(pending: &[WorkerRequest], hosts: &[HostState]) -> Vec<Allocation> {
    let mut hosts_by_id: Vec<&HostState> = hosts.iter().collect();
    hosts_by_id.sort_by(|a, b| a.host_id.cmp(&b.host_id));

    let mut workers: Vec<&WorkerRequest> = pending
        .iter()
        .filter(|w| w.request.validate().is_ok())
        .filter(|w| hosts_by_id.iter().any(|h| h.can_fit(&w.request)))
        .collect();
    workers.sort_by_key(|w| w.submit_seq);
    if workers.is_empty() {
        return Vec::new();
    }

    let mut solver = Solver::new(
        workers.iter().map(|w| w.request).collect(),
        hosts_by_id.iter().map(|h| h.available()).collect(),
    );
    let target = solver.maximize();
    if target == 0 {
        return Vec::new();
    }
    solver.select_workers(target);
    solver.select_hosts(target);
    // On exhaustion the witness is still the last complete packing found.

    workers
        .iter()
        .zip(&solver.witness)
        .filter_map(|(worker, host)| {
            host.map(|h| Allocation {
                worker_id: worker.worker_id.clone(),
                host_id: hosts_by_id[h].host_id.clone(),
                request: worker.request,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Decision {
    Free,
    Include,
    Exclude,
}

struct Solver {
    requests: Vec<ResourceRequest>,
    available: Vec<ResourceRequest>,
    decisions: Vec<Decision>,
    /// Index one past the last forced decision.
    forced_until: usize,
    pinned: Vec<Option<usize>>,
    placed: Vec<Option<usize>>,
    left_out: Vec<ResourceRequest>,
    /// Host index per worker of the best packing found so far.
    witness: Vec<Option<usize>>,
    nodes_left: u64,
    exhausted: bool,
}

impl Solver {
    fn new(requests: Vec<ResourceRequest>, available: Vec<ResourceRequest>) -> Self {
        let n = requests.len();
        Self {
            requests,
            available,
            decisions: vec![Decision::Free; n],
            forced_until: 0,
            pinned: vec![None; n],
            placed: vec![None; n],
            left_out: Vec::new(),
            witness: vec![None; n],
            nodes_left: SEARCH_BUDGET,
            exhausted: false,
        }
    }

    fn maximize(&mut self) -> usize {
        let mut best = 0;
        self.explore(0, 0, &mut best, usize::MAX);
        best
    }

    /// Whether a packing of `target` workers exists under the current forced
    /// decisions and pins. Updates the witness on success.
    fn reachable(&mut self, target: usize) -> bool {
        debug_assert!(target > 0);
        let mut best = target - 1;
        self.left_out.clear();
        self.explore(0, 0, &mut best, target)
    }

    /// Fixes the earliest-first set of `target` workers.
    fn select_workers(&mut self, target: usize) {
        for i in 0..self.requests.len() {
            if self.exhausted {
                return;
            }
            let request = self.requests[i];
            let twin_excluded = (0..i)
                .any(|j| self.decisions[j] == Decision::Exclude && self.requests[j] == request);
            self.forced_until = i + 1;
            if twin_excluded {
                self.decisions[i] = Decision::Exclude;
                continue;
            }
            self.decisions[i] = Decision::Include;
            if self.witness[i].is_none() && !self.reachable(target) {
                self.decisions[i] = Decision::Exclude;
            }
        }
    }

    /// Pins each selected worker to the smallest host index that still admits
    /// a packing of the whole selection.
    fn select_hosts(&mut self, target: usize) {
        for i in 0..self.requests.len() {
            if self.exhausted {
                return;
            }
            if self.decisions[i] != Decision::Include {
                continue;
            }
            let current = self.witness[i].expect("selected worker has a placement");
            let request = self.requests[i];
            for h in 0..current {
                if !fits(&request, &self.available[h]) {
                    continue;
                }
                self.pinned[i] = Some(h);
                if self.reachable(target) {
                    break;
                }
                self.pinned[i] = None;
            }
            if self.pinned[i].is_none() {
                self.pinned[i] = Some(current);
            }
        }
    }

    /// Returns true once a packing of `stop_at` workers has been recorded.
    fn explore(&mut self, i: usize, count: usize, best: &mut usize, stop_at: usize) -> bool {
        if self.nodes_left == 0 {
            self.exhausted = true;
            return false;
        }
        self.nodes_left -= 1;
        if i >= self.forced_until && count > *best {
            *best = count;
            self.witness.clone_from(&self.placed);
            if *best >= stop_at {
                return true;
            }
        }
        if i == self.requests.len() {
            return false;
        }
        match self.upper_bound(i) {
            Some(bound) if count + bound > *best => {}
            _ => return false,
        }

        let request = self.requests[i];
        let decision = self.decisions[i];
        let include = match decision {
            Decision::Include => true,
            Decision::Exclude => false,
            Decision::Free => !self.left_out.contains(&request),
        };

        if include {
            for h in 0..self.available.len() {
                let room = self.available[h];
                match self.pinned[i] {
                    Some(pin) if pin != h => continue,
                    None if self.available[..h].contains(&room) => continue,
                    _ => {}
                }
                if !fits(&request, &room) {
                    continue;
                }
                self.available[h] = ResourceRequest::new(room.cpu - request.cpu, room.gpu - request.gpu);
                self.placed[i] = Some(h);
                let done = self.explore(i + 1, count + 1, best, stop_at);
                self.available[h] = room;
                self.placed[i] = None;
                if done {
                    return true;
                }
            }
        }

        if decision == Decision::Include {
            return false;
        }
        self.left_out.push(request);
        let done = self.explore(i + 1, count, best, stop_at);
        self.left_out.pop();
        done
    }

    /// Optimistic count of workers from `i` on that could still be placed,
    /// treating CPU and GPU as independent pooled knapsacks. Forced
    /// inclusions are charged first; `None` when they alone cannot fit.
    fn upper_bound(&self, i: usize) -> Option<usize> {
        let mut pooled_cpu: u64 = self.available.iter().map(|a| a.cpu as u64).sum();
        let mut pooled_gpu: u64 = self.available.iter().map(|a| a.gpu as u64).sum();

        let mut forced = 0;
        let mut cpus = Vec::new();
        let mut gpus = Vec::new();
        for j in i..self.requests.len() {
            let request = self.requests[j];
            let fits_somewhere = self.available.iter().any(|room| fits(&request, room));
            match self.decisions[j] {
                Decision::Exclude => {}
                Decision::Include => {
                    if !fits_somewhere {
                        return None;
                    }
                    forced += 1;
                    pooled_cpu = pooled_cpu.checked_sub(request.cpu as u64)?;
                    pooled_gpu = pooled_gpu.checked_sub(request.gpu as u64)?;
                }
                Decision::Free => {
                    if fits_somewhere && !self.left_out.contains(&request) {
                        cpus.push(request.cpu as u64);
                        gpus.push(request.gpu as u64);
                    }
                }
            }
        }
        Some(forced + greedy_count(&mut cpus, pooled_cpu).min(greedy_count(&mut gpus, pooled_gpu)))
    }
}

fn fits(request: &ResourceRequest, room: &ResourceRequest) -> bool {
    request.fits_within(room.cpu, room.gpu)
}

fn greedy_count(sizes: &mut [u64], budget: u64) -> usize {
    sizes.sort_unstable();
    let mut used = 0u64;
    sizes
        .iter()
        .take_while(|&&s| {
            used += s;
            used <= budget
        })
        .count()
}
