//! Bipolar argument trees.
//!
//! A corpus is a tree of text components rooted at the major claim. Every
//! non-root component supports or attacks its parent. Global polarity toward
//! the major claim is derived once at load time: support keeps the parent's
//! polarity, attack flips it. The graph is immutable afterwards and can be
//! shared freely between sessions.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Handle to a component inside an [`ArgumentGraph`]; indexes follow file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Node(u32);

impl Node {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub(crate) fn from_index(i: usize) -> Self {
        Node(i as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Support,
    Attack,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Support => "support",
            Relation::Attack => "attack",
        })
    }
}

/// Stance of a component toward the major claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Pro,
    Con,
}

impl Polarity {
    pub fn opposite(self) -> Self {
        match self {
            Polarity::Pro => Polarity::Con,
            Polarity::Con => Polarity::Pro,
        }
    }

    /// Polarity of a child related to a parent of polarity `self`.
    pub fn through(self, relation: Relation) -> Self {
        match relation {
            Relation::Support => self,
            Relation::Attack => self.opposite(),
        }
    }

    pub fn sign(self) -> &'static str {
        match self {
            Polarity::Pro => "+",
            Polarity::Con => "-",
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Pro => "pro",
            Polarity::Con => "con",
        })
    }
}

/// One corpus record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Component {
    pub id: String,
    pub text: String,
    pub parent: Option<String>,
    pub relation: Option<Relation>,
}

impl Component {
    pub fn root(id: impl Into<String>, text: impl Into<String>) -> Self {
        Component {
            id: id.into(),
            text: text.into(),
            parent: None,
            relation: None,
        }
    }

    pub fn child(
        id: impl Into<String>,
        text: impl Into<String>,
        parent: impl Into<String>,
        relation: Relation,
    ) -> Self {
        Component {
            id: id.into(),
            text: text.into(),
            parent: Some(parent.into()),
            relation: Some(relation),
        }
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error("corpus contains no records")]
    Empty,
    #[error("i/o error reading corpus: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StructureError {
    #[error("duplicate component id `{0}`")]
    DuplicateId(String),
    #[error("component `{0}` has empty text")]
    EmptyText(String),
    #[error("multiple root components: `{0}` and `{1}`")]
    MultipleRoots(String, String),
    #[error("no root component (every record names a parent)")]
    NoRoot,
    #[error("root component `{0}` must not carry a relation")]
    RootWithRelation(String),
    #[error("component `{0}` has a parent but no relation")]
    MissingRelation(String),
    #[error("component `{id}` references unknown parent `{parent}`")]
    MissingParent { id: String, parent: String },
    #[error("components not reachable from the root (cycle): {0:?}")]
    Cycle(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown component id `{0}`")]
pub struct UnknownId(pub String);

/// Wire form of a corpus line. Root records carry empty `parent` and `relation`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusRecord {
    id: String,
    parent: String,
    relation: String,
    text: String,
}

#[derive(Debug, Clone)]
pub struct ArgumentGraph {
    components: Vec<Component>,
    index: HashMap<String, Node>,
    parent: Vec<Option<Node>>,
    relation: Vec<Option<Relation>>,
    children: Vec<Vec<Node>>,
    polarity: Vec<Polarity>,
    level: Vec<u32>,
    root: Node,
}

impl ArgumentGraph {
    /// Validates a component list and derives polarity and level maps.
    pub fn from_components(components: Vec<Component>) -> Result<Self, CorpusError> {
        if components.is_empty() {
            return Err(CorpusError::Empty);
        }
        let mut index = HashMap::with_capacity(components.len());
        let mut root: Option<Node> = None;
        for (i, c) in components.iter().enumerate() {
            if index.insert(c.id.clone(), Node::from_index(i)).is_some() {
                return Err(StructureError::DuplicateId(c.id.clone()).into());
            }
            if c.text.trim().is_empty() {
                return Err(StructureError::EmptyText(c.id.clone()).into());
            }
            match (&c.parent, c.relation) {
                (None, Some(_)) => return Err(StructureError::RootWithRelation(c.id.clone()).into()),
                (None, None) => {
                    if let Some(r) = root {
                        return Err(StructureError::MultipleRoots(
                            components[r.index()].id.clone(),
                            c.id.clone(),
                        )
                        .into());
                    }
                    root = Some(Node::from_index(i));
                }
                (Some(_), None) => return Err(StructureError::MissingRelation(c.id.clone()).into()),
                (Some(_), Some(_)) => {}
            }
        }
        let root = root.ok_or(StructureError::NoRoot)?;

        let n = components.len();
        let mut parent = vec![None; n];
        let mut relation = vec![None; n];
        let mut children = vec![Vec::new(); n];
        for (i, c) in components.iter().enumerate() {
            if let Some(p) = &c.parent {
                let p_node = *index.get(p).ok_or_else(|| StructureError::MissingParent {
                    id: c.id.clone(),
                    parent: p.clone(),
                })?;
                parent[i] = Some(p_node);
                relation[i] = c.relation;
                children[p_node.index()].push(Node::from_index(i));
            }
        }

        // Breadth-first from the root; anything left unreached sits on a cycle.
        let mut polarity = vec![Polarity::Pro; n];
        let mut level = vec![0u32; n];
        let mut reached = vec![false; n];
        reached[root.index()] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &c in &children[u.index()] {
                let rel = relation[c.index()].expect("non-root has relation");
                polarity[c.index()] = if u == root {
                    Polarity::Pro.through(rel)
                } else {
                    polarity[u.index()].through(rel)
                };
                level[c.index()] = level[u.index()] + 1;
                reached[c.index()] = true;
                queue.push_back(c);
            }
        }
        let unreached: Vec<String> = (0..n)
            .filter(|&i| !reached[i])
            .map(|i| components[i].id.clone())
            .collect();
        if !unreached.is_empty() {
            return Err(StructureError::Cycle(unreached).into());
        }

        Ok(ArgumentGraph {
            components,
            index,
            parent,
            relation,
            children,
            polarity,
            level,
            root,
        })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn root(&self) -> Node {
        self.root
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = Node> + '_ {
        (0..self.components.len()).map(Node::from_index)
    }

    pub fn lookup(&self, id: &str) -> Result<Node, UnknownId> {
        self.index.get(id).copied().ok_or_else(|| UnknownId(id.to_owned()))
    }

    pub fn contains(&self, node: Node) -> bool {
        node.index() < self.components.len()
    }

    pub fn component(&self, node: Node) -> &Component {
        &self.components[node.index()]
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn id(&self, node: Node) -> &str {
        &self.components[node.index()].id
    }

    pub fn text(&self, node: Node) -> &str {
        &self.components[node.index()].text
    }

    pub fn parent(&self, node: Node) -> Option<Node> {
        self.parent[node.index()]
    }

    /// Relation of `node` to its parent; `None` for the root.
    pub fn relation(&self, node: Node) -> Option<Relation> {
        self.relation[node.index()]
    }

    /// Children in file order.
    pub fn children(&self, node: Node) -> &[Node] {
        &self.children[node.index()]
    }

    pub fn is_leaf(&self, node: Node) -> bool {
        self.children[node.index()].is_empty()
    }

    /// Global polarity toward the major claim. The root itself reports `Pro`.
    pub fn polarity(&self, node: Node) -> Polarity {
        self.polarity[node.index()]
    }

    pub fn level(&self, node: Node) -> u32 {
        self.level[node.index()]
    }

    /// Preorder walk of the subtree rooted at `node`, `node` first.
    pub fn subtree(&self, node: Node) -> Vec<Node> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(u) = stack.pop() {
            out.push(u);
            stack.extend(self.children(u).iter().rev().copied());
        }
        out
    }

    pub fn is_in_subtree(&self, root: Node, node: Node) -> bool {
        let mut cur = Some(node);
        while let Some(c) = cur {
            if c == root {
                return true;
            }
            cur = self.parent(c);
        }
        false
    }

    /// Non-leaf members of the subtree rooted at `node` (including `node`).
    pub fn descendants_nonleaf(&self, node: Node) -> Vec<Node> {
        self.subtree(node).into_iter().filter(|&n| !self.is_leaf(n)).collect()
    }

    /// Same as [`Self::descendants_nonleaf`] addressed by component id.
    pub fn descendants_nonleaf_by_id(&self, id: &str) -> Result<Vec<Node>, UnknownId> {
        Ok(self.descendants_nonleaf(self.lookup(id)?))
    }

    /// Deepest level found in the subtree of `node`.
    pub fn max_level_below(&self, node: Node) -> u32 {
        self.subtree(node).into_iter().map(|n| self.level(n)).max().unwrap_or(0)
    }

    /// Unheard components whose parent has been presented, split by polarity.
    pub fn frontier(&self, visited: &Visited) -> Frontier {
        let mut frontier = Frontier::default();
        for node in self.nodes() {
            if visited.contains(node) {
                continue;
            }
            let Some(p) = self.parent(node) else { continue };
            if !visited.contains(p) {
                continue;
            }
            match self.polarity(node) {
                Polarity::Pro => frontier.pro.push(node),
                Polarity::Con => frontier.con.push(node),
            }
        }
        frontier
    }

    /// Writes the corpus back out as one JSON record per line.
    pub fn write_corpus<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for c in &self.components {
            let rec = CorpusRecord {
                id: c.id.clone(),
                parent: c.parent.clone().unwrap_or_default(),
                relation: c.relation.map(|r| r.to_string()).unwrap_or_default(),
                text: c.text.clone(),
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Parses a line-delimited JSON corpus.
pub fn load_corpus<R: BufRead>(source: R) -> Result<ArgumentGraph, CorpusError> {
    let mut components = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CorpusRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if rec.id.is_empty() {
            return Err(CorpusError::Parse {
                line: lineno,
                message: "empty `id`".into(),
            });
        }
        let relation = match rec.relation.as_str() {
            "" => None,
            "support" => Some(Relation::Support),
            "attack" => Some(Relation::Attack),
            other => {
                return Err(CorpusError::Parse {
                    line: lineno,
                    message: format!("relation must be `support`, `attack` or empty, got `{other}`"),
                })
            }
        };
        components.push(Component {
            id: rec.id,
            text: rec.text,
            parent: (!rec.parent.is_empty()).then_some(rec.parent),
            relation,
        });
    }
    ArgumentGraph::from_components(components)
}

pub fn load_corpus_str(source: &str) -> Result<ArgumentGraph, CorpusError> {
    load_corpus(source.as_bytes())
}

pub fn load_corpus_file(path: impl AsRef<std::path::Path>) -> Result<ArgumentGraph, CorpusError> {
    let file = std::fs::File::open(path)?;
    load_corpus(std::io::BufReader::new(file))
}

/// Presented components in presentation order, with O(1) membership.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Visited {
    order: Vec<Node>,
    mask: Vec<bool>,
}

impl Visited {
    pub fn new(graph: &ArgumentGraph) -> Self {
        Visited {
            order: Vec::new(),
            mask: vec![false; graph.len()],
        }
    }

    pub fn with_root(graph: &ArgumentGraph) -> Self {
        let mut v = Self::new(graph);
        v.insert(graph.root());
        v
    }

    /// Returns `false` if the node was already present.
    pub fn insert(&mut self, node: Node) -> bool {
        if self.mask[node.index()] {
            return false;
        }
        self.mask[node.index()] = true;
        self.order.push(node);
        true
    }

    pub fn contains(&self, node: Node) -> bool {
        self.mask.get(node.index()).copied().unwrap_or(false)
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Node> + '_ {
        self.order.iter().copied()
    }

    pub fn as_slice(&self) -> &[Node] {
        &self.order
    }

    /// Number of presented non-root components with polarity `side`.
    pub fn count_side(&self, graph: &ArgumentGraph, side: Polarity) -> usize {
        self.order
            .iter()
            .filter(|&&n| n != graph.root() && graph.polarity(n) == side)
            .count()
    }
}

/// Candidate components for the next presentation (`l+` and `l-`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Frontier {
    pub pro: Vec<Node>,
    pub con: Vec<Node>,
}

impl Frontier {
    pub fn side(&self, side: Polarity) -> &[Node] {
        match side {
            Polarity::Pro => &self.pro,
            Polarity::Con => &self.con,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pro.is_empty() && self.con.is_empty()
    }

    pub fn contains(&self, node: Node) -> bool {
        self.pro.contains(&node) || self.con.contains(&node)
    }
}
