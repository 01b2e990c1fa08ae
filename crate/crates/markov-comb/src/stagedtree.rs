//! Staged trees, their statistical models, tree decompositions, and the
//! Markov combination of meta-consistent staged trees.
//!
//! A staged tree is a rooted tree with labeled edges where the label sets of
//! any two florets (the outgoing edges of a vertex) are either equal or
//! disjoint. Interpreting labels as transition probabilities that sum to one
//! within each floret, every root-to-leaf path gets the product of its edge
//! labels; this defines a parametric model on the paths.
//!
//! Cutting a tree along an antichain decomposes it into a root tree and
//! subtrees hanging at the cut, factorizes every path probability into an
//! above-cut and a below-cut part, and induces a category mapping from paths
//! to cut vertices. Two decomposed trees whose above-cut factors agree are
//! meta-consistent, and their combination grafts copies of the second tree's
//! subtrees onto the leaves of the first.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use num::{One, Signed, Zero};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::category::{Category, CategoryMapping, CategorySet, CoreError};
use crate::parametric::{MetaCheck, ModelError, ParamBox, ParametricModel, DEFAULT_SAMPLE_POINTS};
use crate::rational::{format_rat, Rat};

/// Errors raised while building or combining staged trees.
#[derive(Debug, Error)]
pub enum TreeError {
    /// A category-layer precondition failed.
    #[error(transparent)]
    Core(#[from] CoreError),
    /// A model evaluation failed.
    #[error(transparent)]
    Model(#[from] ModelError),
    /// The tree has no vertices.
    #[error("tree has no vertices")]
    NoVertices,
    /// A vertex name appears twice.
    #[error("duplicate vertex {0:?}")]
    DuplicateVertex(String),
    /// An edge or cut references an unknown vertex.
    #[error("unknown vertex {0:?}")]
    UnknownVertex(String),
    /// Two edges connect the same pair of vertices.
    #[error("duplicate edge from {from:?} to {to:?}")]
    DuplicateEdge {
        /// Source vertex.
        from: String,
        /// Target vertex.
        to: String,
    },
    /// A vertex has two incoming edges.
    #[error("vertex {0:?} has more than one parent")]
    MultipleParents(String),
    /// Every vertex has a parent.
    #[error("tree has no root")]
    NoRoot,
    /// More than one vertex has no parent.
    #[error("multiple roots: {first:?} and {second:?}")]
    MultipleRoots {
        /// First parentless vertex.
        first: String,
        /// Second parentless vertex.
        second: String,
    },
    /// A vertex is not reachable from the root.
    #[error("vertex {0:?} is not reachable from the root")]
    Unreachable(String),
    /// A label is used twice within one floret.
    #[error("label {label:?} appears twice in the floret of {vertex:?}")]
    DuplicateLabelInFloret {
        /// Floret vertex.
        vertex: String,
        /// Repeated label.
        label: String,
    },
    /// Two florets overlap without being equal.
    #[error("florets of {first:?} and {second:?} overlap without being equal")]
    NotStaged {
        /// First floret vertex.
        first: String,
        /// Second floret vertex.
        second: String,
    },
    /// A vertex cut does not split every path exactly once.
    #[error("invalid cut: {0}")]
    BadCut(String),
    /// A leaf correspondence is not a bijection between the right sets.
    #[error("not a bijection: {0}")]
    NotBijection(String),
    /// The combination precondition failed.
    #[error("trees are not meta-consistent: {0}")]
    NotMetaConsistent(String),
    /// A parameter transport needs a label the other tree does not have.
    #[error("no label named {0:?}")]
    MissingLabel(String),
    /// Two trees with different path sets were compared without a bijection.
    #[error("no path bijection: {0}")]
    NoPathBijection(String),
    /// A decomposition was used with a tree it does not belong to.
    #[error("decomposition does not match this tree")]
    ForeignDecomposition,
    /// The serialized root differs from the parentless vertex.
    #[error("declared root {declared:?} but the parentless vertex is {found:?}")]
    RootMismatch {
        /// Root named in the description.
        declared: String,
        /// Actual root.
        found: String,
    },
}

/// A rooted tree with labeled edges; labels within each floret are distinct.
///
/// The stage condition (florets pairwise equal or disjoint) is checked by
/// [`StagedTree::stage_violation`], not by construction, so that invalid
/// candidates can be inspected.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct StagedTree {
    vertex_names: Vec<String>,
    root: usize,
    children: Vec<Vec<(usize, usize)>>,
    label_names: Vec<String>,
}

impl StagedTree {
    /// Builds a tree from explicit vertices and `(from, to, label)` edges.
    /// Children keep the edge order; the root is the unique parentless
    /// vertex.
    pub fn new<V, A, B, L>(
        vertices: impl IntoIterator<Item = V>,
        edges: impl IntoIterator<Item = (A, B, L)>,
    ) -> Result<Self, TreeError>
    where
        V: Into<String>,
        A: Into<String>,
        B: Into<String>,
        L: Into<String>,
    {
        let vertex_names: Vec<String> = vertices.into_iter().map(Into::into).collect();
        if vertex_names.is_empty() {
            return Err(TreeError::NoVertices);
        }
        let mut by_name: HashMap<&str, usize> = HashMap::new();
        for (t, name) in vertex_names.iter().enumerate() {
            if by_name.insert(name, t).is_some() {
                return Err(TreeError::DuplicateVertex(name.clone()));
            }
        }
        let n = vertex_names.len();
        let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        let mut parent: Vec<Option<usize>> = vec![None; n];
        let mut label_names: Vec<String> = Vec::new();
        let mut label_ids: HashMap<String, usize> = HashMap::new();
        for (from, to, label) in edges {
            let (from, to, label) = (from.into(), to.into(), label.into());
            let f = *by_name
                .get(from.as_str())
                .ok_or_else(|| TreeError::UnknownVertex(from.clone()))?;
            let t = *by_name
                .get(to.as_str())
                .ok_or_else(|| TreeError::UnknownVertex(to.clone()))?;
            if children[f].iter().any(|&(w, _)| w == t) {
                return Err(TreeError::DuplicateEdge { from, to });
            }
            if parent[t].is_some() {
                return Err(TreeError::MultipleParents(to));
            }
            parent[t] = Some(f);
            let l = *label_ids.entry(label.clone()).or_insert_with(|| {
                label_names.push(label.clone());
                label_names.len() - 1
            });
            if children[f].iter().any(|&(_, lab)| lab == l) {
                return Err(TreeError::DuplicateLabelInFloret {
                    vertex: from,
                    label,
                });
            }
            children[f].push((t, l));
        }
        let mut root = None;
        for (t, p) in parent.iter().enumerate() {
            if p.is_none() {
                match root {
                    None => root = Some(t),
                    Some(r) => {
                        return Err(TreeError::MultipleRoots {
                            first: vertex_names[r].clone(),
                            second: vertex_names[t].clone(),
                        })
                    }
                }
            }
        }
        let root = root.ok_or(TreeError::NoRoot)?;
        let tree = StagedTree {
            vertex_names,
            root,
            children,
            label_names,
        };
        let mut seen = vec![false; n];
        for v in tree.dfs_order() {
            seen[v] = true;
        }
        if let Some(t) = seen.iter().position(|s| !s) {
            return Err(TreeError::Unreachable(tree.vertex_names[t].clone()));
        }
        Ok(tree)
    }

    /// Builds a tree from `(from, to, label)` edges alone; vertices are
    /// collected in order of first appearance.
    pub fn from_edges(edges: &[(&str, &str, &str)]) -> Result<Self, TreeError> {
        let mut vertices: Vec<&str> = Vec::new();
        let mut seen: HashSet<&str> = HashSet::new();
        for &(from, to, _) in edges {
            for v in [from, to] {
                if seen.insert(v) {
                    vertices.push(v);
                }
            }
        }
        StagedTree::new(vertices, edges.iter().map(|&(a, b, l)| (a, b, l)))
    }

    /// Vertex names in declaration order.
    pub fn vertex_names(&self) -> &[String] {
        &self.vertex_names
    }

    /// The root vertex id.
    pub fn root(&self) -> usize {
        self.root
    }

    /// The vertex id of a name.
    pub fn vertex_id(&self, name: &str) -> Result<usize, TreeError> {
        self.vertex_names
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| TreeError::UnknownVertex(name.to_string()))
    }

    /// Outgoing edges of a vertex as `(child, label id)` pairs.
    pub fn children(&self, v: usize) -> &[(usize, usize)] {
        &self.children[v]
    }

    /// Whether a vertex has no outgoing edges.
    pub fn is_leaf(&self, v: usize) -> bool {
        self.children[v].is_empty()
    }

    /// Label names in interning order.
    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    fn dfs_order(&self) -> Vec<usize> {
        let mut order = Vec::with_capacity(self.vertex_names.len());
        let mut stack = vec![self.root];
        while let Some(v) = stack.pop() {
            order.push(v);
            for &(w, _) in self.children[v].iter().rev() {
                stack.push(w);
            }
        }
        order
    }

    /// Leaves in depth-first order; this is the path enumeration order.
    pub fn leaves(&self) -> Vec<usize> {
        self.dfs_order()
            .into_iter()
            .filter(|&v| self.is_leaf(v))
            .collect()
    }

    /// The index set of root-to-leaf paths, named by their leaves.
    pub fn path_index(&self) -> Result<CategorySet, TreeError> {
        Ok(CategorySet::new(
            self.leaves().iter().map(|&v| self.vertex_names[v].clone()),
        )?)
    }

    /// Per path in enumeration order: the leaf and the labels along the
    /// path.
    pub fn path_labels(&self) -> Vec<(usize, Vec<usize>)> {
        let mut out = Vec::new();
        let mut stack = vec![(self.root, Vec::new())];
        while let Some((v, labels)) = stack.pop() {
            if self.is_leaf(v) {
                out.push((v, labels));
                continue;
            }
            for &(w, l) in self.children[v].iter().rev() {
                let mut next = labels.clone();
                next.push(l);
                stack.push((w, next));
            }
        }
        out
    }

    fn floret_set(&self, v: usize) -> BTreeSet<usize> {
        self.children[v].iter().map(|&(_, l)| l).collect()
    }

    /// The first pair of vertices whose florets overlap without being
    /// equal, scanning depth-first, or `None` when the tree is staged.
    pub fn stage_violation(&self) -> Option<(String, String)> {
        let internal: Vec<usize> = self
            .dfs_order()
            .into_iter()
            .filter(|&v| !self.is_leaf(v))
            .collect();
        for (a, &v) in internal.iter().enumerate() {
            let fv = self.floret_set(v);
            for &w in &internal[a + 1..] {
                let fw = self.floret_set(w);
                if fv != fw && !fv.is_disjoint(&fw) {
                    return Some((
                        self.vertex_names[v].clone(),
                        self.vertex_names[w].clone(),
                    ));
                }
            }
        }
        None
    }

    /// Whether the stage condition holds.
    pub fn is_staged(&self) -> bool {
        self.stage_violation().is_none()
    }

    fn require_staged(&self) -> Result<(), TreeError> {
        match self.stage_violation() {
            None => Ok(()),
            Some((first, second)) => Err(TreeError::NotStaged { first, second }),
        }
    }

    /// The distinct florets in depth-first discovery order. Each stage
    /// lists its label ids in the children order of its first floret; the
    /// first label is the dependent one (one minus the sum of the others').
    pub fn stages(&self) -> Vec<Vec<usize>> {
        let mut stages: Vec<Vec<usize>> = Vec::new();
        let mut seen: HashSet<BTreeSet<usize>> = HashSet::new();
        for v in self.dfs_order() {
            if self.is_leaf(v) {
                continue;
            }
            if seen.insert(self.floret_set(v)) {
                stages.push(self.children[v].iter().map(|&(_, l)| l).collect());
            }
        }
        stages
    }

    /// The names of the free parameters, one per non-dependent label in
    /// stage order.
    pub fn free_labels(&self) -> Result<Vec<String>, TreeError> {
        self.require_staged()?;
        Ok(self
            .stages()
            .iter()
            .flat_map(|stage| stage[1..].iter().map(|&l| self.label_names[l].clone()))
            .collect())
    }

    /// Every label's value at a parameter point: free labels take their
    /// coordinate, each stage's first label takes the remainder.
    pub fn label_values(&self, theta: &[Rat]) -> Result<Vec<Rat>, TreeError> {
        self.require_staged()?;
        let stages = self.stages();
        let dim: usize = stages.iter().map(|s| s.len() - 1).sum();
        if theta.len() != dim {
            return Err(CoreError::LengthMismatch {
                expected: dim,
                found: theta.len(),
            }
            .into());
        }
        Ok(label_values_of(&stages, self.label_names.len(), theta))
    }

    /// The parametric model on root-to-leaf paths: each path gets the
    /// product of its edge labels.
    ///
    /// ```
    /// use markov_comb::rational::rat;
    /// use markov_comb::stagedtree::StagedTree;
    /// let t = StagedTree::from_edges(&[
    ///     ("r", "u", "t0"), ("r", "v", "t1"),
    ///     ("u", "a", "t2"), ("u", "b", "t3"),
    ///     ("v", "c", "t2"), ("v", "d", "t3"),
    /// ]).unwrap();
    /// let m = t.model().unwrap();
    /// let d = m.eval(&[rat(2, 3), rat(3, 4)]).unwrap();
    /// assert_eq!(d.entries(), &[rat(1, 12), rat(1, 4), rat(1, 6), rat(1, 2)]);
    /// ```
    pub fn model(&self) -> Result<ParametricModel, TreeError> {
        self.require_staged()?;
        let stages = self.stages();
        let nlabels = self.label_names.len();
        let mut blocks = Vec::new();
        let mut dim = 0;
        for stage in &stages {
            if stage.len() > 1 {
                blocks.push((dim, stage.len() - 1));
            }
            dim += stage.len() - 1;
        }
        let paths: Vec<Vec<usize>> =
            self.path_labels().into_iter().map(|(_, ls)| ls).collect();
        let index = self.path_index()?;
        let model = ParametricModel::from_fn(index, ParamBox::unit(dim), move |theta| {
            let vals = label_values_of(&stages, nlabels, theta);
            Ok(paths
                .iter()
                .map(|ls| ls.iter().fold(Rat::one(), |acc, &l| acc * &vals[l]))
                .collect())
        });
        Ok(model.with_simplex_blocks(blocks))
    }

    /// Decomposes the tree along a vertex cut: the cut vertices become the
    /// leaves of the root tree, and each hanging subtree becomes one fiber.
    /// Cut vertices are reordered depth-first.
    pub fn decompose<S: AsRef<str>>(&self, cut: &[S]) -> Result<TreeDecomposition, TreeError> {
        let mut cut_set: HashSet<usize> = HashSet::new();
        for name in cut {
            let v = self.vertex_id(name.as_ref())?;
            if !cut_set.insert(v) {
                return Err(TreeError::BadCut(format!(
                    "cut vertex {:?} listed twice",
                    name.as_ref()
                )));
            }
        }
        let mut cut_order: Vec<usize> = Vec::new();
        let mut cut_pos: HashMap<usize, usize> = HashMap::new();
        let mut s_labels: Vec<Vec<usize>> = Vec::new();
        let mut t_labels: Vec<Vec<usize>> = Vec::new();
        let mut leaf_cut: Vec<usize> = Vec::new();
        // Stack entries: vertex, labels so far, index of the crossed cut
        // vertex and the label count at the crossing.
        let mut stack = vec![(self.root, Vec::<usize>::new(), None::<(usize, usize)>)];
        while let Some((v, labels, mut crossed)) = stack.pop() {
            if cut_set.contains(&v) {
                if crossed.is_some() {
                    return Err(TreeError::BadCut(format!(
                        "a path through {:?} crosses the cut twice",
                        self.vertex_names[v]
                    )));
                }
                let pos = *cut_pos.entry(v).or_insert_with(|| {
                    cut_order.push(v);
                    s_labels.push(labels.clone());
                    cut_order.len() - 1
                });
                crossed = Some((pos, labels.len()));
            }
            if self.is_leaf(v) {
                match crossed {
                    Some((pos, mark)) => {
                        leaf_cut.push(pos);
                        t_labels.push(labels[mark..].to_vec());
                    }
                    None => {
                        return Err(TreeError::BadCut(format!(
                            "the path to leaf {:?} misses the cut",
                            self.vertex_names[v]
                        )))
                    }
                }
                continue;
            }
            for &(w, l) in self.children[v].iter().rev() {
                let mut next = labels.clone();
                next.push(l);
                stack.push((w, next, crossed));
            }
        }
        if cut_order.len() != cut_set.len() {
            return Err(TreeError::BadCut(
                "some cut vertex lies on no root-to-leaf path".into(),
            ));
        }
        let cut_index = CategorySet::new(
            cut_order.iter().map(|&v| self.vertex_names[v].clone()),
        )?;
        let path_index = self.path_index()?;
        let assignments: Vec<(Category, Category)> = path_index
            .iter()
            .zip(&leaf_cut)
            .map(|(leaf, &pos)| (leaf.clone(), cut_index.get(pos).unwrap().clone()))
            .collect();
        let mapping = CategoryMapping::with_codomain(path_index, cut_index.clone(), assignments)?;
        Ok(TreeDecomposition {
            cut: cut_order,
            cut_index,
            mapping,
            s_labels,
            t_labels,
            vertex_count: self.vertex_names.len(),
            label_count: self.label_names.len(),
        })
    }
}

fn label_values_of(stages: &[Vec<usize>], nlabels: usize, theta: &[Rat]) -> Vec<Rat> {
    let mut vals = vec![Rat::zero(); nlabels];
    let mut c = 0;
    for stage in stages {
        let mut rest = Rat::one();
        for &l in &stage[1..] {
            vals[l] = theta[c].clone();
            rest -= &theta[c];
            c += 1;
        }
        vals[stage[0]] = rest;
    }
    vals
}

/// A tree decomposition: a vertex cut, the induced mapping from paths to
/// cut vertices, and the above-cut and below-cut label factors.
#[derive(Clone, Debug)]
pub struct TreeDecomposition {
    cut: Vec<usize>,
    cut_index: CategorySet,
    mapping: CategoryMapping,
    s_labels: Vec<Vec<usize>>,
    t_labels: Vec<Vec<usize>>,
    vertex_count: usize,
    label_count: usize,
}

impl TreeDecomposition {
    /// Cut vertex ids in depth-first order.
    pub fn cut(&self) -> &[usize] {
        &self.cut
    }

    /// The index set of root-tree paths (the cut vertices).
    pub fn cut_index(&self) -> &CategorySet {
        &self.cut_index
    }

    /// The induced mapping from paths to cut vertices.
    pub fn mapping(&self) -> &CategoryMapping {
        &self.mapping
    }

    fn check_tree(&self, t: &StagedTree) -> Result<(), TreeError> {
        if t.vertex_names.len() != self.vertex_count
            || t.label_names.len() != self.label_count
            || self.cut.iter().any(|&v| v >= t.vertex_names.len())
        {
            return Err(TreeError::ForeignDecomposition);
        }
        Ok(())
    }

    /// The above-cut factors `s_k`, one per cut vertex, at a parameter
    /// point of the host tree.
    pub fn s_values(&self, t: &StagedTree, theta: &[Rat]) -> Result<Vec<Rat>, TreeError> {
        self.check_tree(t)?;
        let vals = t.label_values(theta)?;
        Ok(self
            .s_labels
            .iter()
            .map(|ls| ls.iter().fold(Rat::one(), |acc, &l| acc * &vals[l]))
            .collect())
    }

    /// The below-cut factors `t_i`, one per path, at a parameter point of
    /// the host tree.
    pub fn t_values(&self, t: &StagedTree, theta: &[Rat]) -> Result<Vec<Rat>, TreeError> {
        self.check_tree(t)?;
        let vals = t.label_values(theta)?;
        Ok(self
            .t_labels
            .iter()
            .map(|ls| ls.iter().fold(Rat::one(), |acc, &l| acc * &vals[l]))
            .collect())
    }
}

/// The per-path label factorization induced by a decomposition: each path's
/// labels split into the above-cut multiset (shared by all paths through
/// the same cut vertex) and the below-cut multiset.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct PathFactorization {
    s_factors: Vec<Vec<String>>,
    t_factors: Vec<Vec<String>>,
}

impl PathFactorization {
    /// Above-cut label names per cut vertex, in path order.
    pub fn s_factors(&self) -> &[Vec<String>] {
        &self.s_factors
    }

    /// Below-cut label names per path, in path order.
    pub fn t_factors(&self) -> &[Vec<String>] {
        &self.t_factors
    }
}

/// The label factorization of a decomposed tree.
pub fn factorize(t: &StagedTree, dec: &TreeDecomposition) -> Result<PathFactorization, TreeError> {
    dec.check_tree(t)?;
    let name = |ls: &Vec<usize>| ls.iter().map(|&l| t.label_names[l].clone()).collect();
    Ok(PathFactorization {
        s_factors: dec.s_labels.iter().map(name).collect(),
        t_factors: dec.t_labels.iter().map(name).collect(),
    })
}

fn check_bijection(
    dec: &TreeDecomposition,
    dec2: &TreeDecomposition,
    phi: &CategoryMapping,
) -> Result<Vec<usize>, TreeError> {
    if phi.domain() != dec.cut_index() || phi.codomain() != dec2.cut_index() {
        return Err(TreeError::NotBijection(
            "the correspondence must map the first cut onto the second".into(),
        ));
    }
    if dec.cut_index().len() != dec2.cut_index().len() {
        return Err(TreeError::NotBijection(format!(
            "cut sizes differ: {} vs {}",
            dec.cut_index().len(),
            dec2.cut_index().len()
        )));
    }
    Ok((0..dec.cut_index().len())
        .map(|k| phi.apply_idx(k))
        .collect())
}

/// Builds the cut-leaf bijection from explicit name pairs.
pub fn leaf_bijection<S: AsRef<str>, T: AsRef<str>>(
    dec: &TreeDecomposition,
    dec2: &TreeDecomposition,
    pairs: &[(S, T)],
) -> Result<CategoryMapping, TreeError> {
    let mapping = CategoryMapping::with_codomain(
        dec.cut_index().clone(),
        dec2.cut_index().clone(),
        pairs
            .iter()
            .map(|(a, b)| (a.as_ref().to_string(), b.as_ref().to_string())),
    )?;
    check_bijection(dec, dec2, &mapping)?;
    Ok(mapping)
}

/// Symbolic meta-consistency: every cut vertex's above-cut label multiset
/// equals that of its counterpart. Sufficient but not necessary; use
/// [`staged_meta_consistent_numeric`] for trees whose factors agree only
/// after a parameter transport.
pub fn staged_meta_consistent_symbolic(
    t: &StagedTree,
    dec: &TreeDecomposition,
    t2: &StagedTree,
    dec2: &TreeDecomposition,
    phi: &CategoryMapping,
) -> Result<bool, TreeError> {
    dec.check_tree(t)?;
    dec2.check_tree(t2)?;
    let to = check_bijection(dec, dec2, phi)?;
    for (k, &k2) in to.iter().enumerate() {
        let mut left: Vec<&str> = dec.s_labels[k]
            .iter()
            .map(|&l| t.label_names[l].as_str())
            .collect();
        let mut right: Vec<&str> = dec2.s_labels[k2]
            .iter()
            .map(|&l| t2.label_names[l].as_str())
            .collect();
        left.sort_unstable();
        right.sort_unstable();
        if left != right {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Numeric meta-consistency: the above-cut factors agree within `tol` at
/// sampled parameter points, after transporting the first tree's parameters
/// to the second tree's.
pub fn staged_meta_consistent_numeric(
    t: &StagedTree,
    dec: &TreeDecomposition,
    t2: &StagedTree,
    dec2: &TreeDecomposition,
    phi: &CategoryMapping,
    transport: impl Fn(&[Rat]) -> Result<Vec<Rat>, TreeError>,
    points: usize,
    tol: &Rat,
) -> Result<MetaCheck, TreeError> {
    dec.check_tree(t)?;
    dec2.check_tree(t2)?;
    let to = check_bijection(dec, dec2, phi)?;
    let model = t.model()?;
    let mut max_gap = Rat::zero();
    let mut worst = None;
    for theta in model.sample_points(points) {
        let theta2 = transport(&theta)?;
        let s = dec.s_values(t, &theta)?;
        let s2 = dec2.s_values(t2, &theta2)?;
        for (k, &k2) in to.iter().enumerate() {
            let gap = (&s[k] - &s2[k2]).abs();
            if gap > max_gap {
                max_gap = gap;
                worst = Some(theta.clone());
            }
        }
    }
    Ok(MetaCheck {
        consistent: max_gap <= *tol,
        worst_theta: worst,
        max_gap,
    })
}

/// The parameter transport that evaluates the first tree's labels and reads
/// off the second tree's free parameters by label name. Errors when the
/// second tree uses a label the first does not have.
pub fn transport_by_label_names(
    t: &StagedTree,
    t2: &StagedTree,
) -> Result<impl Fn(&[Rat]) -> Result<Vec<Rat>, TreeError>, TreeError> {
    t.require_staged()?;
    t2.require_staged()?;
    let sources: Vec<usize> = t2
        .free_labels()?
        .into_iter()
        .map(|name| {
            t.label_names
                .iter()
                .position(|l| *l == name)
                .ok_or(TreeError::MissingLabel(name))
        })
        .collect::<Result<_, _>>()?;
    let stages = t.stages();
    let nlabels = t.label_names.len();
    let dim: usize = stages.iter().map(|s| s.len() - 1).sum();
    Ok(move |theta: &[Rat]| {
        if theta.len() != dim {
            return Err(CoreError::LengthMismatch {
                expected: dim,
                found: theta.len(),
            }
            .into());
        }
        let vals = label_values_of(&stages, nlabels, theta);
        Ok(sources.iter().map(|&l| vals[l].clone()).collect())
    })
}

/// The result of combining two decomposed staged trees: the grafted tree,
/// the path-pair correspondence, and the label renaming applied to the
/// second tree's below-cut labels.
#[derive(Clone, Debug)]
pub struct StagedCombination {
    tree: StagedTree,
    pairs: Vec<(String, String)>,
    relabel: Vec<(String, String)>,
}

impl StagedCombination {
    /// The combined tree.
    pub fn tree(&self) -> &StagedTree {
        &self.tree
    }

    /// Per combined path, in path order: the first tree's leaf and the
    /// second tree's leaf it corresponds to.
    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    /// Below-cut labels of the second tree and their names in the combined
    /// tree. Names change only when keeping them would break the stage
    /// condition.
    pub fn relabel(&self) -> &[(String, String)] {
        &self.relabel
    }

    /// Assembles a parameter point of the combined tree from points of the
    /// two component trees, matching labels by name through the renaming.
    pub fn combined_point(
        &self,
        t: &StagedTree,
        t2: &StagedTree,
        theta: &[Rat],
        theta2: &[Rat],
    ) -> Result<Vec<Rat>, TreeError> {
        let vals = t.label_values(theta)?;
        let vals2 = t2.label_values(theta2)?;
        let back: HashMap<&str, &str> = self
            .relabel
            .iter()
            .map(|(orig, fresh)| (fresh.as_str(), orig.as_str()))
            .collect();
        self.tree
            .free_labels()?
            .into_iter()
            .map(|name| {
                if let Some(l) = t.label_names.iter().position(|n| *n == name) {
                    return Ok(vals[l].clone());
                }
                let orig = back
                    .get(name.as_str())
                    .ok_or_else(|| TreeError::MissingLabel(name.clone()))?;
                let l = t2
                    .label_names
                    .iter()
                    .position(|n| n == orig)
                    .ok_or_else(|| TreeError::MissingLabel(name.clone()))?;
                Ok(vals2[l].clone())
            })
            .collect()
    }
}

fn fresh_name(candidate: &str, used: &mut HashSet<String>) -> String {
    let mut name = candidate.to_string();
    while used.contains(&name) {
        name.push('\'');
    }
    used.insert(name.clone());
    name
}

/// Combines two meta-consistent decomposed staged trees by grafting a copy
/// of the second tree's subtree at `phi(k)` onto every leaf of the first
/// tree in fiber `k`. Copies of the same subtree share labels, so the
/// combined model keeps the component parameter count; a copied stage is
/// renamed only when it overlaps a stage of the first tree without equaling
/// it.
///
/// Meta-consistency is checked symbolically first, then numerically through
/// the name-based transport; the combination is rejected when both fail.
pub fn staged_combine(
    t: &StagedTree,
    dec: &TreeDecomposition,
    t2: &StagedTree,
    dec2: &TreeDecomposition,
    phi: &CategoryMapping,
) -> Result<StagedCombination, TreeError> {
    t.require_staged()?;
    t2.require_staged()?;
    if !staged_meta_consistent_symbolic(t, dec, t2, dec2, phi)? {
        let numeric = transport_by_label_names(t, t2).and_then(|trans| {
            staged_meta_consistent_numeric(
                t,
                dec,
                t2,
                dec2,
                phi,
                trans,
                DEFAULT_SAMPLE_POINTS,
                &Rat::zero(),
            )
        });
        match numeric {
            Ok(check) if check.consistent => {}
            Ok(check) => {
                return Err(TreeError::NotMetaConsistent(format!(
                    "largest above-cut gap {} at {:?}",
                    format_rat(&check.max_gap),
                    check
                        .worst_theta
                        .map(|p| p.iter().map(format_rat).collect::<Vec<_>>())
                        .unwrap_or_default()
                )))
            }
            Err(e) => {
                return Err(TreeError::NotMetaConsistent(format!(
                    "label multisets differ and no name transport exists ({e})"
                )))
            }
        }
    }
    graft(t, dec, t2, dec2, phi)
}

/// Like [`staged_combine`] but checks meta-consistency numerically through
/// an explicit parameter transport, for trees whose above-cut factors agree
/// without sharing label names.
pub fn staged_combine_with(
    t: &StagedTree,
    dec: &TreeDecomposition,
    t2: &StagedTree,
    dec2: &TreeDecomposition,
    phi: &CategoryMapping,
    transport: impl Fn(&[Rat]) -> Result<Vec<Rat>, TreeError>,
) -> Result<StagedCombination, TreeError> {
    t.require_staged()?;
    t2.require_staged()?;
    let check = staged_meta_consistent_numeric(
        t,
        dec,
        t2,
        dec2,
        phi,
        transport,
        DEFAULT_SAMPLE_POINTS,
        &Rat::zero(),
    )?;
    if !check.consistent {
        return Err(TreeError::NotMetaConsistent(format!(
            "largest above-cut gap {} at {:?}",
            format_rat(&check.max_gap),
            check
                .worst_theta
                .map(|p| p.iter().map(format_rat).collect::<Vec<_>>())
                .unwrap_or_default()
        )));
    }
    graft(t, dec, t2, dec2, phi)
}

fn graft(
    t: &StagedTree,
    dec: &TreeDecomposition,
    t2: &StagedTree,
    dec2: &TreeDecomposition,
    phi: &CategoryMapping,
) -> Result<StagedCombination, TreeError> {
    let to = check_bijection(dec, dec2, phi)?;

    // Collect the second tree's below-cut vertices per cut vertex, and the
    // distinct stages among their florets.
    let subtree_vertices: Vec<Vec<usize>> = dec2
        .cut
        .iter()
        .map(|&k2| {
            let mut order = Vec::new();
            let mut stack = vec![k2];
            while let Some(v) = stack.pop() {
                order.push(v);
                for &(w, _) in t2.children[v].iter().rev() {
                    stack.push(w);
                }
            }
            order
        })
        .collect();
    let t_stage_sets: HashSet<BTreeSet<String>> = t
        .stages()
        .iter()
        .map(|stage| stage.iter().map(|&l| t.label_names[l].clone()).collect())
        .collect();
    let t_label_names: HashSet<&str> = t.label_names.iter().map(String::as_str).collect();
    let mut used: HashSet<String> = t.label_names.iter().cloned().collect();
    let mut final_label: BTreeMap<usize, String> = BTreeMap::new();
    let mut seen_stages: HashSet<BTreeSet<usize>> = HashSet::new();
    for vs in &subtree_vertices {
        for &v in vs {
            if t2.is_leaf(v) || !seen_stages.insert(t2.floret_set(v)) {
                continue;
            }
            let names: BTreeSet<String> = t2.children[v]
                .iter()
                .map(|&(_, l)| t2.label_names[l].clone())
                .collect();
            let overlaps = names.iter().any(|n| t_label_names.contains(n.as_str()));
            let keep = !overlaps || t_stage_sets.contains(&names);
            for &(_, l) in &t2.children[v] {
                if final_label.contains_key(&l) {
                    continue;
                }
                let name = if keep {
                    used.insert(t2.label_names[l].clone());
                    t2.label_names[l].clone()
                } else {
                    fresh_name(&t2.label_names[l], &mut used)
                };
                final_label.insert(l, name);
            }
        }
    }

    // Graft a copy of the subtree at phi(k) onto each leaf in fiber k.
    let mut vertices: Vec<String> = t.vertex_names.clone();
    let mut used_vertices: HashSet<String> = vertices.iter().cloned().collect();
    let mut edges: Vec<(String, String, String)> = Vec::new();
    for v in t.dfs_order() {
        for &(w, l) in &t.children[v] {
            edges.push((
                t.vertex_names[v].clone(),
                t.vertex_names[w].clone(),
                t.label_names[l].clone(),
            ));
        }
    }
    let mut pairs: Vec<(String, String)> = Vec::new();
    let path_index = t.path_index()?;
    for (pos, leaf) in path_index.iter().enumerate() {
        let k = dec.mapping.apply_idx(pos);
        let k2 = to[k];
        let root2 = dec2.cut[k2];
        let mut copy: HashMap<usize, String> = HashMap::new();
        copy.insert(root2, leaf.as_str().to_string());
        for &v in &subtree_vertices[k2] {
            if t2.is_leaf(v) {
                pairs.push((
                    leaf.as_str().to_string(),
                    t2.vertex_names[v].clone(),
                ));
            }
            for &(w, l) in &t2.children[v] {
                let name = fresh_name(
                    &format!("{}.{}", leaf.as_str(), t2.vertex_names[w]),
                    &mut used_vertices,
                );
                vertices.push(name.clone());
                copy.insert(w, name.clone());
                edges.push((copy[&v].clone(), name, final_label[&l].clone()));
            }
        }
    }
    let tree = StagedTree::new(vertices, edges)?;
    if let Some((first, second)) = tree.stage_violation() {
        return Err(TreeError::NotStaged { first, second });
    }
    let relabel = final_label
        .into_iter()
        .map(|(l, name)| (t2.label_names[l].clone(), name))
        .collect();
    Ok(StagedCombination {
        tree,
        pairs,
        relabel,
    })
}

/// The induced mappings of a combination: paths of the first tree onto the
/// first cut, and paths of the second tree onto the first cut through the
/// inverse of `phi`.
pub fn induced_pair(
    dec: &TreeDecomposition,
    dec2: &TreeDecomposition,
    phi: &CategoryMapping,
) -> Result<(CategoryMapping, CategoryMapping), TreeError> {
    let to = check_bijection(dec, dec2, phi)?;
    let mut back = vec![0; to.len()];
    for (k, &k2) in to.iter().enumerate() {
        back[k2] = k;
    }
    let q = dec2.mapping();
    let assignments: Vec<(Category, Category)> = q
        .domain()
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let k = back[q.apply_idx(j)];
            (name.clone(), dec.cut_index().get(k).unwrap().clone())
        })
        .collect();
    let q_prime = CategoryMapping::with_codomain(
        q.domain().clone(),
        dec.cut_index().clone(),
        assignments,
    )?;
    Ok((dec.mapping().clone(), q_prime))
}

/// Whether two staged trees define the same statistical model, compared at
/// sampled parameter points of the first tree under a path bijection. For
/// each sample the second tree's label values are reconstructed from the
/// target path probabilities (child mass over parent mass) and accepted
/// when every edge sharing a label gets the same value within `tol`; this
/// realizes the parameter correspondence search up to label renaming.
///
/// With no explicit bijection the paths are matched by leaf name; an error
/// is raised when the leaf name sets differ.
pub fn models_equal(
    t1: &StagedTree,
    t2: &StagedTree,
    path_map: Option<&[(String, String)]>,
    samples: usize,
    tol: &Rat,
) -> Result<bool, TreeError> {
    t1.require_staged()?;
    t2.require_staged()?;
    let index1 = t1.path_index()?;
    let index2 = t2.path_index()?;
    let to: Vec<usize> = match path_map {
        Some(pairs) => {
            if pairs.len() != index1.len() || index1.len() != index2.len() {
                return Err(TreeError::NoPathBijection(format!(
                    "{} pairs for {} and {} paths",
                    pairs.len(),
                    index1.len(),
                    index2.len()
                )));
            }
            let mut to = vec![usize::MAX; index1.len()];
            let mut hit = vec![false; index2.len()];
            for (a, b) in pairs {
                let i = index1.require(&Category::new(a.clone()))?;
                let j = index2.require(&Category::new(b.clone()))?;
                if to[i] != usize::MAX || hit[j] {
                    return Err(TreeError::NoPathBijection(format!(
                        "path {a:?} or {b:?} matched twice"
                    )));
                }
                to[i] = j;
                hit[j] = true;
            }
            to
        }
        None => {
            let mut to = Vec::with_capacity(index1.len());
            for name in index1.iter() {
                to.push(index2.require(name).map_err(|_| {
                    TreeError::NoPathBijection(format!(
                        "leaf {:?} has no counterpart; supply a path bijection",
                        name.as_str()
                    ))
                })?);
            }
            to
        }
    };

    let model1 = t1.model()?;
    let leaves2 = t2.leaves();
    let nv = t2.vertex_names.len();
    for theta in model1.sample_points(samples) {
        let f1 = model1.eval(&theta)?;
        let mut target = vec![Rat::zero(); index2.len()];
        for (i, &j) in to.iter().enumerate() {
            target[j] = f1.get_idx(i).clone();
        }
        // Mass below each vertex of the second tree.
        let mut mass = vec![Rat::zero(); nv];
        for (pos, &leaf) in leaves2.iter().enumerate() {
            mass[leaf] = target[pos].clone();
        }
        for v in t2.dfs_order().into_iter().rev() {
            if !t2.is_leaf(v) {
                mass[v] = t2.children[v]
                    .iter()
                    .fold(Rat::zero(), |acc, &(w, _)| acc + &mass[w]);
            }
        }
        // Candidate label values; every edge with the same label must agree.
        let mut label_val: Vec<Option<Rat>> = vec![None; t2.label_names.len()];
        let mut ok = true;
        'outer: for v in 0..nv {
            for &(w, l) in &t2.children[v] {
                if mass[v].is_zero() {
                    continue;
                }
                let val = &mass[w] / &mass[v];
                if let Some(prev) = &label_val[l] {
                    if (prev - &val).abs() > *tol {
                        ok = false;
                        break 'outer;
                    }
                } else {
                    label_val[l] = Some(val);
                }
            }
        }
        if !ok {
            return Ok(false);
        }
        // The recovered labels must reproduce every path probability.
        for (pos, (_, labels)) in t2.path_labels().iter().enumerate() {
            let mut prob = Rat::one();
            for &l in labels {
                match &label_val[l] {
                    Some(v) => prob *= v,
                    None => {
                        prob = Rat::zero();
                        break;
                    }
                }
            }
            if (&prob - &target[pos]).abs() > *tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

#[derive(Serialize, Deserialize)]
struct RawEdge {
    from: String,
    to: String,
    label: String,
}

#[derive(Serialize, Deserialize)]
struct RawTree {
    vertices: Vec<String>,
    edges: Vec<RawEdge>,
    root: String,
}

impl Serialize for StagedTree {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let mut edges = Vec::new();
        for v in self.dfs_order() {
            for &(w, l) in &self.children[v] {
                edges.push(RawEdge {
                    from: self.vertex_names[v].clone(),
                    to: self.vertex_names[w].clone(),
                    label: self.label_names[l].clone(),
                });
            }
        }
        RawTree {
            vertices: self.vertex_names.clone(),
            edges,
            root: self.vertex_names[self.root].clone(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for StagedTree {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw = RawTree::deserialize(de)?;
        let tree = StagedTree::new(
            raw.vertices,
            raw.edges.into_iter().map(|e| (e.from, e.to, e.label)),
        )
        .map_err(D::Error::custom)?;
        if tree.vertex_names[tree.root] != raw.root {
            return Err(D::Error::custom(TreeError::RootMismatch {
                declared: raw.root,
                found: tree.vertex_names[tree.root].clone(),
            }));
        }
        Ok(tree)
    }
}
