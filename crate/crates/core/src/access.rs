//! Graph-backed attribute-based access control.
//!
//! Users, teams and resources are nodes. Edges are `MEMBER_OF` (user to
//! team), `OWNS` (user to resource) and `GRANTED` (user, team or the
//! community node to resource, carrying a set of actions). A decision is
//! allowed iff the user owns the resource, holds a direct grant, belongs to a
//! team holding a grant, or the community holds a grant, for the requested
//! action. Everything else is denied.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Id of the singleton node whose grants apply to every user.
pub const COMMUNITY: &str = "community";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    User,
    Team,
    Resource,
    Community,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::User => "user",
            Self::Team => "team",
            Self::Resource => "resource",
            Self::Community => "community",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EdgeLabel {
    MemberOf,
    Owns,
    Granted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Read,
    Write,
    Delete,
    Execute,
}

impl Action {
    pub const ALL: [Action; 4] = [Self::Read, Self::Write, Self::Delete, Self::Execute];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Read => "read",
            Self::Write => "write",
            Self::Delete => "delete",
            Self::Execute => "execute",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphNode {
    pub node_id: String,
    pub kind: NodeKind,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    /// The user who created a team; only they manage its membership.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GraphEdge {
    pub src: String,
    pub dst: String,
    pub label: EdgeLabel,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub actions: BTreeSet<Action>,
}

/// `allowed` holds exactly when `trace` is non-empty. Each trace entry is
/// one path of edges satisfying a rule, shortest first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessDecision {
    pub allowed: bool,
    pub trace: Vec<Vec<GraphEdge>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AccessError {
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {0} already exists")]
    DuplicateNode(String),
    #[error("invalid node id {0:?}")]
    InvalidNodeId(String),
    #[error("{node} is a {actual}, expected {expected}")]
    KindMismatch {
        node: String,
        expected: String,
        actual: NodeKind,
    },
    #[error("{user} does not own team {team}")]
    NotTeamOwner { team: String, user: String },
    #[error("{user} does not own resource {resource}")]
    NotOwner { resource: String, user: String },
    #[error("grant needs at least one action")]
    EmptyActionSet,
}

type EdgeKey = (String, EdgeLabel, String);

#[derive(Debug, Clone)]
pub struct AccessGraph {
    nodes: BTreeMap<String, GraphNode>,
    edges: BTreeMap<EdgeKey, BTreeSet<Action>>,
    /// Teams per user, for rule (c).
    memberships: BTreeMap<String, BTreeSet<String>>,
    owner_of: BTreeMap<String, String>,
    team_counter: u64,
}

impl Default for AccessGraph {
    fn default() -> Self {
        let mut nodes = BTreeMap::new();
        nodes.insert(
            COMMUNITY.into(),
            GraphNode {
                node_id: COMMUNITY.into(),
                kind: NodeKind::Community,
                attributes: BTreeMap::new(),
                owner: None,
            },
        );
        Self {
            nodes,
            edges: BTreeMap::new(),
            memberships: BTreeMap::new(),
            owner_of: BTreeMap::new(),
            team_counter: 0,
        }
    }
}

/// Usernames share the node id space with generated ids (`team-…`, `ct-…`),
/// which always contain a hyphen, so user ids may not.
pub fn is_valid_user_id(id: &str) -> bool {
    !id.is_empty()
        && id != COMMUNITY
        && id.len() <= 64
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

impl AccessGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_user(&mut self, user_id: &str, attributes: BTreeMap<String, String>) -> Result<String, AccessError> {
        if !is_valid_user_id(user_id) {
            return Err(AccessError::InvalidNodeId(user_id.into()));
        }
        self.insert_node(user_id, NodeKind::User, attributes, None)
    }

    /// Creates a team owned (and joined) by `owner`.
    pub fn create_team(&mut self, owner: &str, attributes: BTreeMap<String, String>) -> Result<String, AccessError> {
        self.expect_kind(owner, NodeKind::User)?;
        self.team_counter += 1;
        let team_id = format!("team-{:06}", self.team_counter);
        self.insert_node(&team_id, NodeKind::Team, attributes, Some(owner.into()))?;
        self.put_edge(owner, EdgeLabel::MemberOf, &team_id, BTreeSet::new());
        Ok(team_id)
    }

    pub fn create_resource(&mut self, resource_id: &str, attributes: BTreeMap<String, String>) -> Result<String, AccessError> {
        if resource_id.is_empty() {
            return Err(AccessError::InvalidNodeId(resource_id.into()));
        }
        self.insert_node(resource_id, NodeKind::Resource, attributes, None)
    }

    /// Drops a resource and every edge touching it.
    pub fn remove_resource(&mut self, resource_id: &str) -> Result<(), AccessError> {
        self.expect_kind(resource_id, NodeKind::Resource)?;
        self.nodes.remove(resource_id);
        self.owner_of.remove(resource_id);
        self.edges.retain(|(_, _, dst), _| dst != resource_id);
        Ok(())
    }

    pub fn add_member(&mut self, caller: &str, team: &str, user: &str) -> Result<GraphEdge, AccessError> {
        self.check_team_owner(caller, team)?;
        self.expect_kind(user, NodeKind::User)?;
        self.put_edge(user, EdgeLabel::MemberOf, team, BTreeSet::new());
        Ok(self.edge(user, EdgeLabel::MemberOf, team).expect("just inserted"))
    }

    pub fn remove_member(&mut self, caller: &str, team: &str, user: &str) -> Result<(), AccessError> {
        self.check_team_owner(caller, team)?;
        self.expect_kind(user, NodeKind::User)?;
        self.drop_edge(user, EdgeLabel::MemberOf, team);
        Ok(())
    }

    /// Makes `user` the single owner of `resource`, replacing any previous one.
    pub fn set_owner(&mut self, user: &str, resource: &str) -> Result<GraphEdge, AccessError> {
        self.expect_kind(user, NodeKind::User)?;
        self.expect_kind(resource, NodeKind::Resource)?;
        if let Some(previous) = self.owner_of.get(resource).cloned() {
            self.drop_edge(&previous, EdgeLabel::Owns, resource);
        }
        self.put_edge(user, EdgeLabel::Owns, resource, BTreeSet::new());
        Ok(self.edge(user, EdgeLabel::Owns, resource).expect("just inserted"))
    }

    pub fn owner(&self, resource: &str) -> Option<&str> {
        self.owner_of.get(resource).map(String::as_str)
    }

    /// Adds `actions` to the grant from `subject` to `resource`. Only the
    /// resource owner may grant.
    pub fn grant(&mut self, caller: &str, subject: &str, actions: &BTreeSet<Action>, resource: &str) -> Result<GraphEdge, AccessError> {
        self.check_grant(caller, subject, actions, resource)?;
        let mut merged = self
            .edges
            .get(&key(subject, EdgeLabel::Granted, resource))
            .cloned()
            .unwrap_or_default();
        merged.extend(actions.iter().copied());
        self.put_edge(subject, EdgeLabel::Granted, resource, merged);
        Ok(self.edge(subject, EdgeLabel::Granted, resource).expect("just inserted"))
    }

    /// Removes `actions` from a grant; the edge disappears once empty.
    pub fn revoke(&mut self, caller: &str, subject: &str, actions: &BTreeSet<Action>, resource: &str) -> Result<(), AccessError> {
        self.check_grant(caller, subject, actions, resource)?;
        let k = key(subject, EdgeLabel::Granted, resource);
        if let Some(existing) = self.edges.get_mut(&k) {
            existing.retain(|a| !actions.contains(a));
            if existing.is_empty() {
                self.edges.remove(&k);
            }
        }
        Ok(())
    }

    pub fn check_access(&self, user: &str, action: Action, resource: &str) -> Result<AccessDecision, AccessError> {
        self.expect_kind(user, NodeKind::User)?;
        self.expect_kind(resource, NodeKind::Resource)?;

        let mut trace = Vec::new();
        if let Some(edge) = self.edge(user, EdgeLabel::Owns, resource) {
            trace.push(vec![edge]);
        }
        for subject in [user, COMMUNITY] {
            if let Some(edge) = self.granting_edge(subject, action, resource) {
                trace.push(vec![edge]);
            }
        }
        for team in self.memberships.get(user).into_iter().flatten() {
            if let Some(grant) = self.granting_edge(team, action, resource) {
                let membership = self.edge(user, EdgeLabel::MemberOf, team).expect("indexed membership");
                trace.push(vec![membership, grant]);
            }
        }
        Ok(AccessDecision {
            allowed: !trace.is_empty(),
            trace,
        })
    }

    /// Raw edge insertion with only the structural kind rules enforced. The
    /// policy operations above are built on this.
    pub fn insert_edge(&mut self, edge: GraphEdge) -> Result<(), AccessError> {
        let (src_kinds, dst_kind): (&[NodeKind], NodeKind) = match edge.label {
            EdgeLabel::MemberOf => (&[NodeKind::User], NodeKind::Team),
            EdgeLabel::Owns => (&[NodeKind::User], NodeKind::Resource),
            EdgeLabel::Granted => (&[NodeKind::User, NodeKind::Team, NodeKind::Community], NodeKind::Resource),
        };
        let src = self.node(&edge.src)?;
        if !src_kinds.contains(&src.kind) {
            return Err(AccessError::KindMismatch {
                node: edge.src,
                expected: kinds_label(src_kinds),
                actual: src.kind,
            });
        }
        self.expect_kind(&edge.dst, dst_kind)?;
        match edge.label {
            EdgeLabel::Granted if edge.actions.is_empty() => return Err(AccessError::EmptyActionSet),
            EdgeLabel::Owns => {
                if let Some(previous) = self.owner_of.get(&edge.dst).cloned() {
                    self.drop_edge(&previous, EdgeLabel::Owns, &edge.dst);
                }
            }
            _ => {}
        }
        let actions = if edge.label == EdgeLabel::Granted { edge.actions } else { BTreeSet::new() };
        self.put_edge(&edge.src, edge.label, &edge.dst, actions);
        Ok(())
    }

    /// Raw node insertion, the counterpart of [`AccessGraph::insert_edge`].
    /// Team nodes added this way start without members.
    pub fn insert_node_raw(&mut self, node: GraphNode) -> Result<(), AccessError> {
        if node.kind == NodeKind::Community {
            return Err(AccessError::DuplicateNode(node.node_id));
        }
        self.insert_node(&node.node_id, node.kind, node.attributes, node.owner).map(drop)
    }

    pub fn remove_edge(&mut self, src: &str, label: EdgeLabel, dst: &str) -> bool {
        self.drop_edge(src, label, dst)
    }

    pub fn node(&self, node_id: &str) -> Result<&GraphNode, AccessError> {
        self.nodes
            .get(node_id)
            .ok_or_else(|| AccessError::UnknownNode(node_id.into()))
    }

    pub fn nodes(&self) -> impl Iterator<Item = &GraphNode> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = GraphEdge> + '_ {
        self.edges.iter().map(|((src, label, dst), actions)| GraphEdge {
            src: src.clone(),
            dst: dst.clone(),
            label: *label,
            actions: actions.clone(),
        })
    }

    pub fn edge(&self, src: &str, label: EdgeLabel, dst: &str) -> Option<GraphEdge> {
        self.edges.get(&key(src, label, dst)).map(|actions| GraphEdge {
            src: src.into(),
            dst: dst.into(),
            label,
            actions: actions.clone(),
        })
    }

    fn granting_edge(&self, subject: &str, action: Action, resource: &str) -> Option<GraphEdge> {
        self.edge(subject, EdgeLabel::Granted, resource)
            .filter(|edge| edge.actions.contains(&action))
    }

    fn insert_node(&mut self, node_id: &str, kind: NodeKind, attributes: BTreeMap<String, String>, owner: Option<String>) -> Result<String, AccessError> {
        if self.nodes.contains_key(node_id) {
            return Err(AccessError::DuplicateNode(node_id.into()));
        }
        self.nodes.insert(
            node_id.into(),
            GraphNode {
                node_id: node_id.into(),
                kind,
                attributes,
                owner,
            },
        );
        Ok(node_id.into())
    }

    fn expect_kind(&self, node_id: &str, kind: NodeKind) -> Result<&GraphNode, AccessError> {
        let node = self.node(node_id)?;
        if node.kind != kind {
            return Err(AccessError::KindMismatch {
                node: node_id.into(),
                expected: format!("{kind}"),
                actual: node.kind,
            });
        }
        Ok(node)
    }

    fn check_team_owner(&self, caller: &str, team: &str) -> Result<(), AccessError> {
        let team_node = self.expect_kind(team, NodeKind::Team)?;
        if team_node.owner.as_deref() != Some(caller) {
            return Err(AccessError::NotTeamOwner {
                team: team.into(),
                user: caller.into(),
            });
        }
        Ok(())
    }

    fn check_grant(&self, caller: &str, subject: &str, actions: &BTreeSet<Action>, resource: &str) -> Result<(), AccessError> {
        self.expect_kind(resource, NodeKind::Resource)?;
        let subject_node = self.node(subject)?;
        if !matches!(subject_node.kind, NodeKind::User | NodeKind::Team | NodeKind::Community) {
            return Err(AccessError::KindMismatch {
                node: subject.into(),
                expected: "user, team or community".into(),
                actual: subject_node.kind,
            });
        }
        if actions.is_empty() {
            return Err(AccessError::EmptyActionSet);
        }
        if self.owner(resource) != Some(caller) {
            return Err(AccessError::NotOwner {
                resource: resource.into(),
                user: caller.into(),
            });
        }
        Ok(())
    }

    fn put_edge(&mut self, src: &str, label: EdgeLabel, dst: &str, actions: BTreeSet<Action>) {
        match label {
            EdgeLabel::MemberOf => {
                self.memberships.entry(src.into()).or_default().insert(dst.into());
            }
            EdgeLabel::Owns => {
                self.owner_of.insert(dst.into(), src.into());
            }
            EdgeLabel::Granted => {}
        }
        self.edges.insert(key(src, label, dst), actions);
    }

    fn drop_edge(&mut self, src: &str, label: EdgeLabel, dst: &str) -> bool {
        let removed = self.edges.remove(&key(src, label, dst)).is_some();
        match label {
            EdgeLabel::MemberOf => {
                if let Some(teams) = self.memberships.get_mut(src) {
                    teams.remove(dst);
                }
            }
            EdgeLabel::Owns if removed => {
                self.owner_of.remove(dst);
            }
            _ => {}
        }
        removed
    }
}

fn key(src: &str, label: EdgeLabel, dst: &str) -> EdgeKey {
    (src.into(), label, dst.into())
}

fn kinds_label(kinds: &[NodeKind]) -> String {
    kinds
        .iter()
        .map(|k| format!("{k}"))
        .collect::<Vec<_>>()
        .join(" or ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn actions(list: &[Action]) -> BTreeSet<Action> {
        list.iter().copied().collect()
    }

    /// alice owns r; bob is in alice's team; carol is a stranger.
    fn fixture() -> (AccessGraph, String) {
        let mut g = AccessGraph::new();
        for user in ["alice", "bob", "carol"] {
            g.create_user(user, BTreeMap::new()).unwrap();
        }
        let team = g.create_team("alice", BTreeMap::new()).unwrap();
        g.add_member("alice", &team, "bob").unwrap();
        g.create_resource("r", BTreeMap::new()).unwrap();
        g.set_owner("alice", "r").unwrap();
        (g, team)
    }

    fn allowed(g: &AccessGraph, user: &str, action: Action) -> bool {
        g.check_access(user, action, "r").unwrap().allowed
    }

    #[test]
    fn owner_may_delete_via_owns() {
        let (g, _) = fixture();
        let decision = g.check_access("alice", Action::Delete, "r").unwrap();
        assert!(decision.allowed);
        assert_eq!(decision.trace[0][0].label, EdgeLabel::Owns);
    }

    #[test]
    fn stranger_is_denied_with_empty_trace() {
        let (g, _) = fixture();
        let decision = g.check_access("carol", Action::Read, "r").unwrap();
        assert_eq!(decision, AccessDecision { allowed: false, trace: Vec::new() });
    }

    #[test]
    fn team_grant_gives_two_edge_trace() {
        let (mut g, team) = fixture();
        g.grant("alice", &team, &actions(&[Action::Read]), "r").unwrap();
        let decision = g.check_access("bob", Action::Read, "r").unwrap();
        assert!(decision.allowed);
        assert_eq!(decision.trace.len(), 1);
        let path = &decision.trace[0];
        assert_eq!((path[0].label, path[1].label), (EdgeLabel::MemberOf, EdgeLabel::Granted));
        assert!(!allowed(&g, "bob", Action::Write));
        assert!(!allowed(&g, "carol", Action::Read));
    }

    #[test]
    fn revoke_denies_again() {
        let (mut g, _) = fixture();
        g.grant("alice", "carol", &actions(&[Action::Read, Action::Execute]), "r").unwrap();
        assert!(allowed(&g, "carol", Action::Execute));
        g.revoke("alice", "carol", &actions(&[Action::Execute]), "r").unwrap();
        assert!(!allowed(&g, "carol", Action::Execute));
        assert!(allowed(&g, "carol", Action::Read));
        g.revoke("alice", "carol", &actions(&[Action::Read]), "r").unwrap();
        assert!(g.edge("carol", EdgeLabel::Granted, "r").is_none());
    }

    #[test]
    fn community_grant_covers_later_users() {
        let (mut g, _) = fixture();
        g.grant("alice", COMMUNITY, &actions(&[Action::Read]), "r").unwrap();
        g.create_user("dave", BTreeMap::new()).unwrap();
        assert!(allowed(&g, "dave", Action::Read));
        assert!(!allowed(&g, "dave", Action::Delete));
    }

    #[test]
    fn reassigning_owner_moves_rights() {
        let (mut g, _) = fixture();
        g.set_owner("carol", "r").unwrap();
        assert!(!allowed(&g, "alice", Action::Delete));
        assert!(allowed(&g, "carol", Action::Delete));
        assert_eq!(g.owner("r"), Some("carol"));
        assert_eq!(g.edges().filter(|e| e.label == EdgeLabel::Owns).count(), 1);
    }

    #[test]
    fn membership_rules() {
        let (mut g, team) = fixture();
        assert_eq!(
            g.add_member("bob", &team, "carol"),
            Err(AccessError::NotTeamOwner { team: team.clone(), user: "bob".into() })
        );
        g.add_member("alice", &team, "carol").unwrap();
        g.add_member("alice", &team, "carol").unwrap();
        let count = g
            .edges()
            .filter(|e| e.src == "carol" && e.label == EdgeLabel::MemberOf)
            .count();
        assert_eq!(count, 1);
        g.remove_member("alice", &team, "carol").unwrap();
        assert!(g.edge("carol", EdgeLabel::MemberOf, &team).is_none());
        assert!(matches!(
            g.add_member("alice", "bob", "carol"),
            Err(AccessError::KindMismatch { .. })
        ));
        assert!(matches!(g.add_member("alice", "team-404", "carol"), Err(AccessError::UnknownNode(_))));
    }

    #[test]
    fn grant_errors() {
        let (mut g, team) = fixture();
        assert_eq!(g.grant("alice", "bob", &BTreeSet::new(), "r"), Err(AccessError::EmptyActionSet));
        assert!(matches!(
            g.grant("bob", "carol", &actions(&[Action::Read]), "r"),
            Err(AccessError::NotOwner { .. })
        ));
        assert!(matches!(
            g.grant("alice", "ghost", &actions(&[Action::Read]), "r"),
            Err(AccessError::UnknownNode(_))
        ));
        assert!(matches!(
            g.set_owner("alice", &team),
            Err(AccessError::KindMismatch { .. })
        ));
    }

    #[test]
    fn user_ids_are_restricted() {
        let mut g = AccessGraph::new();
        assert!(matches!(g.create_user("community", BTreeMap::new()), Err(AccessError::InvalidNodeId(_))));
        assert!(matches!(g.create_user("ct-000001", BTreeMap::new()), Err(AccessError::InvalidNodeId(_))));
        g.create_user("alice", BTreeMap::new()).unwrap();
        assert_eq!(
            g.create_user("alice", BTreeMap::new()),
            Err(AccessError::DuplicateNode("alice".into()))
        );
    }

    #[test]
    fn trace_is_shortest_first() {
        let (mut g, team) = fixture();
        g.grant("alice", &team, &actions(&[Action::Read]), "r").unwrap();
        g.grant("alice", "alice", &actions(&[Action::Read]), "r").unwrap();
        g.grant("alice", COMMUNITY, &actions(&[Action::Read]), "r").unwrap();
        let trace = g.check_access("alice", Action::Read, "r").unwrap().trace;
        let lengths: Vec<_> = trace.iter().map(Vec::len).collect();
        assert_eq!(lengths, [1, 1, 1, 2]);
    }

    #[test]
    fn removing_resource_drops_edges() {
        let (mut g, team) = fixture();
        g.grant("alice", &team, &actions(&[Action::Read]), "r").unwrap();
        g.remove_resource("r").unwrap();
        assert!(g.edges().all(|e| e.dst != "r"));
        assert!(g.owner("r").is_none());
        assert!(matches!(g.check_access("alice", Action::Read, "r"), Err(AccessError::UnknownNode(_))));
    }
}
