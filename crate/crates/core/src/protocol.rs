//! The Dynamic-LoopFree-BFS node program.
//!
//! Everything here is a pure function of a [`LocalView`]: the node's own
//! registers, whether it is the root, and the registers of its neighbours
//! keyed by port label. Predicates and guards follow the published
//! definitions literally; the only added convention is that `Min` ties are
//! broken by the smallest port label.

use std::fmt;

use thiserror::Error;

use crate::graph::Port;

/// Propagation status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    /// Neutral: the node may safely pick a better parent.
    N,
    /// Propagating a new level down its subtree.
    P,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::N => "N",
            Status::P => "P",
        })
    }
}

/// The four protocol registers of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeState {
    /// Port of the parent, `None` for ⊥.
    pub parent: Option<Port>,
    pub status: Status,
    /// Hop count to the root along the current tree.
    pub level: u32,
    /// Level being pushed down during a propagation.
    pub new_level: u32,
}

impl NodeState {
    pub const ROOT: NodeState = NodeState {
        parent: None,
        status: Status::N,
        level: 0,
        new_level: 0,
    };

    pub fn new(parent: Option<Port>, status: Status, level: u32, new_level: u32) -> Self {
        NodeState {
            parent,
            status,
            level,
            new_level,
        }
    }
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.parent {
            Some(p) => write!(f, "parent={p}")?,
            None => f.write_str("parent=none")?,
        }
        write!(
            f,
            " status={} level={} newlevel={}",
            self.status, self.level, self.new_level
        )
    }
}

/// Guarded rules, listed in the default firing priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    InitRoot,
    LevelCorrect,
    SafeChangeP,
    LevelPlusPlus,
    EndPropag,
    Dynamic,
}

impl Rule {
    /// Default priority when several rules are enabled at one node.
    pub const PRIORITY: [Rule; 6] = [
        Rule::InitRoot,
        Rule::LevelCorrect,
        Rule::SafeChangeP,
        Rule::LevelPlusPlus,
        Rule::EndPropag,
        Rule::Dynamic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::InitRoot => "R_InitRoot",
            Rule::SafeChangeP => "R_SafeChangeP",
            Rule::LevelPlusPlus => "R_Level++",
            Rule::EndPropag => "R_EndPropag",
            Rule::LevelCorrect => "R_LevelCorrect",
            Rule::Dynamic => "R_Dynamic",
        }
    }

    pub fn from_name(s: &str) -> Option<Rule> {
        Rule::PRIORITY.into_iter().find(|r| r.name() == s)
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Set of enabled rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct RuleSet(u8);

impl RuleSet {
    pub const EMPTY: RuleSet = RuleSet(0);

    pub fn insert(&mut self, rule: Rule) {
        self.0 |= rule.bit();
    }

    pub fn contains(self, rule: Rule) -> bool {
        self.0 & rule.bit() != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Enabled rules in priority order.
    pub fn iter(self) -> impl Iterator<Item = Rule> {
        Rule::PRIORITY.into_iter().filter(move |r| self.contains(*r))
    }

    /// Highest-priority enabled rule.
    pub fn first(self) -> Option<Rule> {
        self.iter().next()
    }
}

impl FromIterator<Rule> for RuleSet {
    fn from_iter<I: IntoIterator<Item = Rule>>(iter: I) -> Self {
        let mut s = RuleSet::EMPTY;
        for r in iter {
            s.insert(r);
        }
        s
    }
}

/// A neighbour's readable registers as seen through one port.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NeighborRegister {
    pub port: Port,
    pub state: NodeState,
    /// The neighbour's parent pointer designates the viewing node.
    pub points_here: bool,
}

/// Which reading of `Level_up` the guards use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Guards {
    /// As published:
    /// `level_v ≠ level_p + 1 ∨ (status_p = P ∧ level_v ≠ NewLevel_p + 1)`.
    #[default]
    Literal,
    /// `level_v < NewLevel_p + 1` while the parent propagates and
    /// `level_v < level_p + 1` otherwise. A child that already holds the
    /// level being pushed waits for its parent to finish instead of
    /// re-entering `R_Level++` with nothing to change, and a child that is
    /// too deep leaves the decrease to `R_SafeChangeP` rather than taking
    /// a `NewLevel` that `R_LevelCorrect` would immediately undo.
    Repaired,
}

impl Guards {
    pub const ALL: [Guards; 2] = [Guards::Literal, Guards::Repaired];

    pub fn name(self) -> &'static str {
        match self {
            Guards::Literal => "literal",
            Guards::Repaired => "repaired",
        }
    }
}

impl fmt::Display for Guards {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Guards {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Guards::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| format!("unknown guards {s:?}, expected literal or repaired"))
    }
}

/// Everything a node may read in one atomic step.
#[derive(Debug, Clone, Copy)]
pub struct LocalView<'a> {
    pub is_root: bool,
    pub own: NodeState,
    /// Sorted by port.
    pub neighbors: &'a [NeighborRegister],
    pub guards: Guards,
}

/// `∞`-extended natural number, used for `ubl`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bound {
    Finite(u32),
    Infinite,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("non-root node has no neighbours")]
    NonRootIsolated,
    #[error("{0} is not enabled")]
    RuleNotEnabled(Rule),
}

impl<'a> LocalView<'a> {
    pub fn new(is_root: bool, own: NodeState, neighbors: &'a [NeighborRegister]) -> Self {
        LocalView {
            is_root,
            own,
            neighbors,
            guards: Guards::Literal,
        }
    }

    pub fn with_guards(mut self, guards: Guards) -> Self {
        self.guards = guards;
        self
    }

    /// Register of the neighbour behind `port`.
    pub fn through(&self, port: Port) -> Option<&NodeState> {
        self.neighbors
            .iter()
            .find(|n| n.port == port)
            .map(|n| &n.state)
    }

    /// `p_v ∈ N(v)`.
    pub fn parent_is_neighbor(&self) -> bool {
        self.own.parent.is_some_and(|p| self.through(p).is_some())
    }
}

/// `0` at the root, otherwise `min{level_u + 1 : u ∈ N(v)}`.
pub fn level_hat(view: &LocalView) -> Result<u32, ProtocolError> {
    if view.is_root {
        return Ok(0);
    }
    view.neighbors
        .iter()
        .map(|n| n.state.level.saturating_add(1))
        .min()
        .ok_or(ProtocolError::NonRootIsolated)
}

/// Smallest port whose neighbour sits at `level_hat - 1` with status `N`.
pub fn parent_hat(view: &LocalView) -> Option<Port> {
    let hat = level_hat(view).ok()?;
    view.neighbors
        .iter()
        .find(|n| n.state.level.checked_add(1) == Some(hat) && n.state.status == Status::N)
        .map(|n| n.port)
}

/// Ports of the neighbours counted as sons: they point here and sit strictly deeper.
pub fn children(view: &LocalView) -> Vec<Port> {
    children_iter(view).map(|n| n.port).collect()
}

fn children_iter<'v>(view: &'v LocalView) -> impl Iterator<Item = &'v NeighborRegister> + 'v {
    let level = view.own.level;
    view.neighbors
        .iter()
        .filter(move |n| n.points_here && n.state.level > level)
}

/// Smallest level minus one among sons, `∞` when there are none.
pub fn ubl(view: &LocalView) -> Bound {
    children_iter(view)
        .map(|n| n.state.level - 1)
        .min()
        .map_or(Bound::Infinite, Bound::Finite)
}

pub fn p_change(view: &LocalView) -> bool {
    let (Ok(hat), Some(best)) = (level_hat(view), parent_hat(view)) else {
        return false;
    };
    let level = view.own.level;
    hat < level || (level == hat && view.own.parent != Some(best))
}

/// Evaluated only when the parent is a neighbour; false otherwise.
pub fn level_up(view: &LocalView) -> bool {
    let Some(parent) = view.own.parent.and_then(|p| view.through(p)) else {
        return false;
    };
    let level = view.own.level;
    match view.guards {
        Guards::Literal => {
            level != parent.level.saturating_add(1)
                || (parent.status == Status::P && level != parent.new_level.saturating_add(1))
        }
        Guards::Repaired => {
            let target = match parent.status {
                Status::P => parent.new_level,
                Status::N => parent.level,
            };
            level <= target
        }
    }
}

pub fn propag_end(view: &LocalView) -> bool {
    children_iter(view).all(|n| n.state.status == Status::N)
}

/// Rules whose guards hold in `view`.
pub fn enabled_rules(view: &LocalView) -> RuleSet {
    let own = view.own;
    let mut set = RuleSet::EMPTY;
    if view.is_root {
        if own != NodeState::ROOT {
            set.insert(Rule::InitRoot);
        }
        return set;
    }
    let pc = p_change(view);
    let in_nbhd = view.parent_is_neighbor();
    let neutral = own.status == Status::N;
    if neutral && pc {
        set.insert(Rule::SafeChangeP);
    }
    if neutral && in_nbhd && !pc && level_up(view) {
        set.insert(Rule::LevelPlusPlus);
    }
    if own.status == Status::P && propag_end(view) && ubl(view) >= Bound::Finite(own.new_level) {
        set.insert(Rule::EndPropag);
    }
    if own.new_level < own.level {
        set.insert(Rule::LevelCorrect);
    }
    // An isolated orphan has no level to aim for and waits for a neighbour.
    if neutral && !in_nbhd && !pc && !view.neighbors.is_empty() {
        set.insert(Rule::Dynamic);
    }
    set
}

/// Executes `rule`'s assignments in their listed order.
pub fn apply(rule: Rule, view: &LocalView) -> Result<NodeState, ProtocolError> {
    if !enabled_rules(view).contains(rule) {
        return Err(ProtocolError::RuleNotEnabled(rule));
    }
    let mut s = view.own;
    match rule {
        Rule::InitRoot => s = NodeState::ROOT,
        Rule::SafeChangeP => {
            s.level = level_hat(view)?;
            s.new_level = s.level;
            s.parent = parent_hat(view);
        }
        Rule::LevelPlusPlus => {
            let parent = s
                .parent
                .and_then(|p| view.through(p))
                .ok_or(ProtocolError::RuleNotEnabled(rule))?;
            s.status = Status::P;
            s.new_level = parent.new_level.saturating_add(1);
        }
        Rule::EndPropag => {
            s.status = Status::N;
            s.level = s.new_level;
        }
        Rule::LevelCorrect => s.new_level = s.level,
        Rule::Dynamic => {
            s.status = Status::P;
            s.new_level = level_hat(view)?;
        }
    }
    Ok(s)
}

/// Fires the highest-priority enabled rule, if any.
pub fn fire(view: &LocalView) -> Option<(Rule, NodeState)> {
    let rule = enabled_rules(view).first()?;
    let next = apply(rule, view).expect("rule taken from its own enabled set");
    Some((rule, next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Status::{N, P};

    fn reg(port: u32, parent: Option<u32>, status: Status, level: u32, nl: u32, here: bool) -> NeighborRegister {
        NeighborRegister {
            port: Port(port),
            state: NodeState::new(parent.map(Port), status, level, nl),
            points_here: here,
        }
    }

    fn plain(port: u32, status: Status, level: u32) -> NeighborRegister {
        reg(port, Some(1), status, level, level, false)
    }

    #[test]
    fn level_hat_cases() {
        let nbrs = [plain(1, N, 3), plain(2, N, 5)];
        let own = NodeState::new(Some(Port(1)), N, 4, 4);
        assert_eq!(level_hat(&LocalView::new(true, own, &nbrs)), Ok(0));
        assert_eq!(level_hat(&LocalView::new(false, own, &nbrs)), Ok(4));
        assert_eq!(
            level_hat(&LocalView::new(false, own, &[])),
            Err(ProtocolError::NonRootIsolated)
        );
    }

    #[test]
    fn orphan_with_deeper_neighbours_only() {
        // v at level 3 lost its parent; every remaining neighbour is at level 4
        let nbrs = [
            reg(2, Some(1), N, 4, 4, true),
            reg(3, Some(1), N, 4, 4, true),
        ];
        let own = NodeState::new(Some(Port(1)), N, 3, 3);
        let view = LocalView::new(false, own, &nbrs);
        assert_eq!(level_hat(&view), Ok(5));
        assert!(!p_change(&view));
        assert_eq!(enabled_rules(&view), RuleSet::from_iter([Rule::Dynamic]));
        let next = apply(Rule::Dynamic, &view).unwrap();
        assert_eq!(next.status, P);
        assert_eq!(next.new_level, 5);
        assert_eq!(next.level, 3);
    }

    #[test]
    fn parent_hat_smallest_port_among_neutral_candidates() {
        let nbrs = [plain(1, N, 2), plain(2, N, 2)];
        let own = NodeState::new(None, N, 9, 9);
        let view = LocalView::new(false, own, &nbrs);
        assert_eq!(level_hat(&view), Ok(3));
        assert_eq!(parent_hat(&view), Some(Port(1)));

        let nbrs = [plain(1, P, 2), plain(4, N, 7)];
        let view = LocalView::new(false, own, &nbrs);
        assert_eq!(parent_hat(&view), None);
        assert!(!p_change(&view));
    }

    #[test]
    fn parent_hat_matches_enumeration() {
        let nbrs = [plain(5, N, 4), plain(2, N, 4), plain(3, P, 4), plain(9, N, 6)];
        let mut sorted = nbrs;
        sorted.sort_by_key(|n| n.port);
        let view = LocalView::new(false, NodeState::new(None, N, 0, 0), &sorted);
        let hat = level_hat(&view).unwrap();
        assert_eq!(hat, 5);
        let expected = nbrs
            .iter()
            .filter(|n| n.state.level + 1 == hat && n.state.status == N)
            .map(|n| n.port)
            .min();
        assert_eq!(parent_hat(&view), expected);
        assert_eq!(expected, Some(Port(2)));
    }

    #[test]
    fn children_and_ubl() {
        let own = NodeState::new(Some(Port(1)), N, 4, 4);
        let leaf = LocalView::new(false, own, &[]);
        assert!(children(&leaf).is_empty());
        assert_eq!(ubl(&leaf), Bound::Infinite);
        assert!(propag_end(&leaf));

        let nbrs = [
            reg(1, Some(1), N, 6, 6, true),
            reg(2, Some(2), N, 9, 9, true),
            reg(3, Some(3), N, 4, 4, true), // equal level: not a son
            reg(4, Some(1), P, 8, 8, false),
        ];
        let view = LocalView::new(false, own, &nbrs);
        assert_eq!(children(&view), vec![Port(1), Port(2)]);
        assert_eq!(ubl(&view), Bound::Finite(5));
        assert!(propag_end(&view));
    }

    #[test]
    fn coherent_node_has_no_parent_change() {
        let nbrs = [plain(1, N, 2), plain(2, N, 3)];
        let own = NodeState::new(Some(Port(1)), N, 3, 3);
        let view = LocalView::new(false, own, &nbrs);
        assert!(!p_change(&view));
        assert!(!level_up(&view));
        assert!(enabled_rules(&view).is_empty());
    }

    #[test]
    fn level_up_through_propagating_parent() {
        let nbrs = [reg(1, None, P, 2, 5, false)];
        let own = NodeState::new(Some(Port(1)), N, 3, 3);
        let view = LocalView::new(false, own, &nbrs);
        assert!(level_up(&view));
        assert_eq!(enabled_rules(&view), RuleSet::from_iter([Rule::LevelPlusPlus]));
        let next = apply(Rule::LevelPlusPlus, &view).unwrap();
        assert_eq!((next.status, next.new_level), (P, 6));
    }

    #[test]
    fn guard_readings_differ_on_settled_children() {
        // child already at the level being pushed, parent still propagating
        let nbrs = [reg(1, None, P, 2, 5, false)];
        let own = NodeState::new(Some(Port(1)), N, 6, 6);
        let literal = LocalView::new(false, own, &nbrs);
        let repaired = literal.with_guards(Guards::Repaired);
        assert!(level_up(&literal));
        assert!(!level_up(&repaired));
        // a child too deep under a neutral parent: only the literal guard fires
        let nbrs = [plain(1, N, 2)];
        let own = NodeState::new(Some(Port(1)), N, 7, 7);
        assert!(level_up(&LocalView::new(false, own, &nbrs)));
        assert!(!level_up(&LocalView::new(false, own, &nbrs).with_guards(Guards::Repaired)));
        // both agree where the child lags behind the parent
        let own = NodeState::new(Some(Port(1)), N, 2, 2);
        for g in Guards::ALL {
            assert!(level_up(&LocalView::new(false, own, &nbrs).with_guards(g)), "{g}");
        }
    }

    #[test]
    fn root_rules() {
        let clean = LocalView::new(true, NodeState::ROOT, &[]);
        assert!(enabled_rules(&clean).is_empty());
        let bad = LocalView::new(true, NodeState::new(None, N, 7, 0), &[]);
        assert_eq!(enabled_rules(&bad), RuleSet::from_iter([Rule::InitRoot]));
        let bad = NodeState::new(Some(Port(2)), P, 3, 1);
        let view = LocalView::new(true, bad, &[]);
        assert_eq!(apply(Rule::InitRoot, &view), Ok(NodeState::ROOT));
    }

    #[test]
    fn safe_change_uses_sequential_assignment() {
        let nbrs = [plain(1, N, 5), plain(3, N, 1)];
        let own = NodeState::new(Some(Port(1)), N, 6, 6);
        let view = LocalView::new(false, own, &nbrs);
        assert_eq!(level_hat(&view), Ok(2));
        assert_eq!(parent_hat(&view), Some(Port(3)));
        let next = apply(Rule::SafeChangeP, &view).unwrap();
        assert_eq!(next, NodeState::new(Some(Port(3)), N, 2, 2));
    }

    #[test]
    fn disabled_rule_is_rejected() {
        let view = LocalView::new(true, NodeState::ROOT, &[]);
        assert_eq!(
            apply(Rule::InitRoot, &view),
            Err(ProtocolError::RuleNotEnabled(Rule::InitRoot))
        );
    }

    #[test]
    fn end_propag_waits_for_sons() {
        let own = NodeState::new(Some(Port(1)), P, 3, 5);
        let nbrs = [reg(1, None, N, 2, 2, false), reg(2, Some(1), N, 4, 4, true)];
        let view = LocalView::new(false, own, &nbrs);
        // ubl = 3 < NewLevel = 5
        assert!(!enabled_rules(&view).contains(Rule::EndPropag));
        let nbrs = [reg(1, None, N, 2, 2, false), reg(2, Some(1), N, 6, 6, true)];
        let view = LocalView::new(false, own, &nbrs);
        assert!(enabled_rules(&view).contains(Rule::EndPropag));
        let next = apply(Rule::EndPropag, &view).unwrap();
        assert_eq!((next.status, next.level), (N, 5));
    }

    #[test]
    fn isolated_orphan_waits() {
        let view = LocalView::new(false, NodeState::new(None, N, 2, 2), &[]);
        assert!(enabled_rules(&view).is_empty());
    }
}
