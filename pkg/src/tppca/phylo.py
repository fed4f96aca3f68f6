"""Rooted bifurcating trees with edge lengths ("p-trees").

Nodes are integer ids ``0 .. n_nodes-1``; leaves may carry names.  The
evolutionary covariance ``C`` has entries ``C[i, j] = depth(mrca(i, j))``,
the branch length shared by the root-to-leaf paths of leaves ``i`` and ``j``.
"""

from __future__ import annotations

import csv
import warnings
from pathlib import Path

import numpy as np

from .errors import InvalidInputError, NewickError, TreeStructureError


class PTree:
    """Immutable rooted bifurcating tree.

    Parameters
    ----------
    parents : sequence of int
        ``parents[i]`` is the parent of node ``i``; exactly one entry (the
        root) is ``-1``.
    lengths : sequence of float
        Length of the edge above each node (ignored for the root).
    names : sequence of str or None, optional
    """

    def __init__(self, parents, lengths, names=None):
        parents = tuple(int(p) for p in parents)
        n = len(parents)
        lengths = np.array(lengths, dtype=float)
        if lengths.shape != (n,):
            raise InvalidInputError("need one length per node")
        names = tuple(names) if names is not None else (None,) * n
        if len(names) != n:
            raise InvalidInputError("need one name (or None) per node")

        roots = [i for i, p in enumerate(parents) if p == -1]
        if len(roots) != 1:
            raise TreeStructureError(f"tree must have exactly one root, found {len(roots)}")
        children = [[] for _ in range(n)]
        for i, p in enumerate(parents):
            if p == -1:
                continue
            if not 0 <= p < n or p == i:
                raise TreeStructureError(f"node {i} has invalid parent {p}")
            children[p].append(i)

        self._parents = parents
        self._children = tuple(tuple(c) for c in children)
        self._names = names
        self.root = roots[0]
        lengths[self.root] = 0.0
        lengths.setflags(write=False)
        self._lengths = lengths
        self._validate()

        # depth-first preorder; also proves connectivity and acyclicity
        order, stack = [], [self.root]
        while stack:
            node = stack.pop()
            order.append(node)
            stack.extend(reversed(self._children[node]))
        if len(order) != n:
            raise TreeStructureError("tree is not connected (or contains a cycle)")
        self._preorder = tuple(order)
        depth = np.zeros(n)
        for node in order[1:]:
            depth[node] = depth[parents[node]] + lengths[node]
        depth.setflags(write=False)
        self._depth = depth
        self._leaves = tuple(i for i in order if not self._children[i])
        self._name_index = {nm: i for i, nm in enumerate(names) if nm is not None}

    def _validate(self):
        for node, kids in enumerate(self._children):
            if len(kids) not in (0, 2):
                raise TreeStructureError(
                    f"node {self.label(node)} has {len(kids)} children; "
                    "a p-tree must be bifurcating")
        edge_lengths = np.delete(self._lengths, self.root)
        if np.any(~np.isfinite(edge_lengths)) or np.any(edge_lengths < 0):
            raise TreeStructureError("edge lengths must be finite and nonnegative")
        if np.any(edge_lengths == 0):
            warnings.warn("tree has zero-length edges; the covariance C may be singular",
                          stacklevel=3)
        leaf_names = [self._names[i] for i, k in enumerate(self._children)
                      if not k and self._names[i] is not None]
        if len(set(leaf_names)) != len(leaf_names):
            dup = sorted({x for x in leaf_names if leaf_names.count(x) > 1})
            raise TreeStructureError(f"duplicate leaf names: {', '.join(dup)}")

    # -- basic accessors ----------------------------------------------------

    @property
    def n_nodes(self):
        return len(self._parents)

    @property
    def leaves(self):
        """Leaf ids in left-to-right (Newick) order."""
        return self._leaves

    @property
    def n_leaves(self):
        return len(self._leaves)

    @property
    def leaf_names(self):
        return [self.label(i) for i in self._leaves]

    @property
    def preorder(self):
        return self._preorder

    def parent(self, node):
        return self._parents[node]

    def children(self, node):
        return self._children[node]

    def length(self, node):
        """Length of the edge from ``node``'s parent to ``node``."""
        return float(self._lengths[node])

    def depth(self, node):
        """Root-to-node path length ``L(r, node)``."""
        return float(self._depth[node])

    def name(self, node):
        return self._names[node]

    def label(self, node):
        """Name of the node, or its id as a string when unnamed."""
        name = self._names[node]
        return name if name is not None else str(node)

    def is_leaf(self, node):
        return not self._children[node]

    def edges(self):
        """``(parent, child, length)`` triples in preorder of the child."""
        return [(self._parents[c], c, float(self._lengths[c])) for c in self._preorder[1:]]

    def node_id(self, key):
        """Resolve a node id or node name to an id."""
        if isinstance(key, (int, np.integer)) and not isinstance(key, bool):
            if not 0 <= key < self.n_nodes:
                raise InvalidInputError(f"unknown node id {key}")
            return int(key)
        try:
            return self._name_index[key]
        except KeyError:
            raise InvalidInputError(f"unknown node {key!r}") from None

    def ancestors(self, node):
        """Path from ``node`` up to the root, inclusive."""
        path = [node]
        while self._parents[path[-1]] != -1:
            path.append(self._parents[path[-1]])
        return path

    def leaves_below(self, node):
        out, stack = [], [node]
        while stack:
            x = stack.pop()
            if not self._children[x]:
                out.append(x)
            stack.extend(self._children[x])
        return out

    def is_ultrametric(self, rtol=1e-9):
        depths = self._depth[list(self._leaves)]
        return bool(np.ptp(depths) <= rtol * max(depths.max(), 1e-300))

    def scaled(self, factor):
        """Copy with every edge length multiplied by ``factor``."""
        return PTree(self._parents, self._lengths * factor, self._names)

    def leaf_order(self, order=None):
        """Resolve an ordering of leaves (ids or names) to a list of ids.

        ``None`` means the tree's own leaf order.
        """
        if order is None:
            return list(self._leaves)
        ids = [self.node_id(x) for x in order]
        if sorted(ids) != sorted(self._leaves):
            raise InvalidInputError("leaf order must be a permutation of the tree's leaves")
        return ids

    def to_newick(self):
        def fmt(node):
            label = self._names[node] or ""
            if self._children[node]:
                label = "(" + ",".join(fmt(c) for c in self._children[node]) + ")" + label
            if node != self.root:
                label += f":{float(self._lengths[node])!r}"
            return label

        return fmt(self.root) + ";"

    def __repr__(self):
        return f"PTree(n_leaves={self.n_leaves})"


def mrca(tree, a, b):
    """Most recent common ancestor of two nodes (ids or names)."""
    a = tree.node_id(a)
    b = tree.node_id(b)
    seen = set(tree.ancestors(a))
    node = b
    while node not in seen:
        node = tree.parent(node)
    return node


def evolutionary_covariance(tree, order=None):
    """Shared-branch-length matrix ``C`` of the leaves.

    Parameters
    ----------
    tree : PTree
    order : sequence of leaf ids or names, optional
        Row/column order; defaults to ``tree.leaves``.

    Returns
    -------
    C : ndarray, shape (N, N)
    """
    ids = tree.leaf_order(order)
    pos = {leaf: i for i, leaf in enumerate(ids)}
    n = len(ids)
    C = np.zeros((n, n))
    # every edge contributes its length to all pairs of leaves below it
    for _, child, length in tree.edges():
        if length == 0:
            continue
        below = np.array([pos[x] for x in tree.leaves_below(child)])
        C[np.ix_(below, below)] += length
    return C


# -- Newick ------------------------------------------------------------------

_SPECIAL = set("(),:;[]'")


class _NewickReader:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.parents = []
        self.lengths = []
        self.names = []

    def error(self, msg):
        raise NewickError(msg, self.pos)

    def skip(self):
        text = self.text
        while self.pos < len(text):
            c = text[self.pos]
            if c.isspace():
                self.pos += 1
            elif c == "[":
                end = text.find("]", self.pos)
                if end < 0:
                    self.error("unterminated comment")
                self.pos = end + 1
            else:
                break

    def peek(self):
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, c):
        if self.peek() != c:
            got = self.peek() or "end of input"
            self.error(f"expected {c!r}, got {got!r}")
        self.pos += 1

    def label(self):
        self.skip()
        text = self.text
        if self.peek() == "'":
            end = self.pos + 1
            out = []
            while True:
                if end >= len(text):
                    self.error("unterminated quoted label")
                if text[end] == "'":
                    if end + 1 < len(text) and text[end + 1] == "'":
                        out.append("'")
                        end += 2
                        continue
                    break
                out.append(text[end])
                end += 1
            self.pos = end + 1
            return "".join(out)
        start = self.pos
        while self.pos < len(text) and text[self.pos] not in _SPECIAL and not text[self.pos].isspace():
            self.pos += 1
        return text[start:self.pos] or None

    def length(self):
        if self.peek() != ":":
            return None
        self.pos += 1
        self.skip()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos] not in _SPECIAL \
                and not self.text[self.pos].isspace():
            self.pos += 1
        token = self.text[start:self.pos]
        try:
            return float(token)
        except ValueError:
            self.pos = start
            self.error(f"invalid branch length {token!r}")

    def subtree(self, parent):
        node = len(self.parents)
        self.parents.append(parent)
        self.lengths.append(None)
        self.names.append(None)
        start = self.pos
        if self.peek() == "(":
            self.pos += 1
            self.subtree(node)
            while self.peek() == ",":
                self.pos += 1
                self.subtree(node)
            self.expect(")")
        self.names[node] = self.label()
        self.skip()
        length_pos = self.pos
        self.lengths[node] = self.length()
        if parent != -1 and self.lengths[node] is None:
            raise NewickError(
                f"missing branch length for node {self.names[node] or '(unnamed)'}",
                length_pos)
        if self.names[node] is None and self.pos == start:
            self.error("empty node")

    def parse(self):
        self.subtree(-1)
        self.expect(";")
        if self.peek():
            self.error("trailing characters after ';'")
        return self.parents, [x or 0.0 for x in self.lengths], self.names


def parse_newick(text):
    """Parse a single Newick tree with branch lengths into a :class:`PTree`.

    Every non-root node needs a branch length; a root length is accepted
    and ignored.  Labels may be quoted with single quotes; ``[...]``
    comments are skipped.

    Raises
    ------
    NewickError
        Syntax errors and missing branch lengths, with the offending position.
    TreeStructureError
        Non-bifurcating nodes, negative lengths, duplicate leaf names.
    """
    parents, lengths, names = _NewickReader(text.strip()).parse()
    return PTree(parents, lengths, names)


def read_newick(path):
    return parse_newick(Path(path).read_text(encoding="utf-8"))


def write_covariance_csv(C, names, path):
    """Write ``C`` with leaf names as header row and first column."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(names))
        for name, row in zip(names, C):
            writer.writerow([name] + [repr(float(x)) for x in row])


# -- constructors used in simulations -----------------------------------------

def four_leaf_tree(inner=1.0, leaf=1.0):
    """Balanced four-leaf tree ``((x1,x2),(x3,x4))`` with the given lengths.

    ``inner`` and ``leaf`` may be scalars or sequences (two inner edges,
    four leaf edges).
    """
    a = [float(x) for x in np.broadcast_to(np.asarray(inner, dtype=float), (2,))]
    b = [float(x) for x in np.broadcast_to(np.asarray(leaf, dtype=float), (4,))]
    return parse_newick(
        f"((x1:{b[0]!r},x2:{b[1]!r}):{a[0]!r},(x3:{b[2]!r},x4:{b[3]!r}):{a[1]!r});")


def random_tree(n_leaves, rng, min_length=0.0, max_length=1.0):
    """Random bifurcating tree by repeatedly splitting a uniformly chosen leaf.

    Edge lengths are uniform on ``[min_length, max_length)``; leaves are
    named ``t0, t1, ...``.
    """
    if n_leaves < 2:
        raise InvalidInputError("a p-tree needs at least two leaves")
    parents = [-1]
    open_leaves = [0]
    while len(open_leaves) < n_leaves:
        node = open_leaves.pop(rng.integers(len(open_leaves)))
        for _ in range(2):
            parents.append(node)
            open_leaves.append(len(parents) - 1)
    lengths = rng.uniform(min_length, max_length, size=len(parents))
    names = [None] * len(parents)
    for i, leaf in enumerate(sorted(open_leaves)):
        names[leaf] = f"t{i}"
    return PTree(parents, lengths, names)
