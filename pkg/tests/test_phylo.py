import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tppca.errors import InvalidInputError, NewickError, TreeStructureError
from tppca.phylo import (
    PTree,
    evolutionary_covariance,
    four_leaf_tree,
    mrca,
    parse_newick,
    random_tree,
    read_newick,
    write_covariance_csv,
)

FOUR = "((A:1,B:1):1,(C:1,D:1):1);"


def path_edges(tree, leaf):
    """Root-to-leaf list of (child node, length), built by walking parents."""
    path = []
    node = leaf
    while tree.parent(node) != -1:
        path.append((node, tree.length(node)))
        node = tree.parent(node)
    return path[::-1]


def shared_prefix_oracle(tree):
    """C_ij = total length of the common prefix of the two root-to-leaf paths."""
    paths = [path_edges(tree, leaf) for leaf in tree.leaves]
    n = len(paths)
    C = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            total = 0.0
            for (a, la), (b, _) in zip(paths[i], paths[j]):
                if a != b:
                    break
                total += la
            C[i, j] = total
    return C


def naive_mrca(tree, a, b):
    common = set(tree.ancestors(a)) & set(tree.ancestors(b))
    return max(common, key=lambda n: len(tree.ancestors(n)))


def test_parse_two_leaves():
    t = parse_newick("(A:1,B:1);")
    assert t.n_leaves == 2 and t.leaf_names == ["A", "B"]
    assert all(t.parent(x) == t.root for x in t.leaves)
    assert [t.length(x) for x in t.leaves] == [1.0, 1.0]


def test_parse_four_leaf_topology():
    t = parse_newick(FOUR)
    assert t.n_leaves == 4 and t.n_nodes == 7
    inner = t.children(t.root)
    assert len(inner) == 2 and all(len(t.children(c)) == 2 for c in inner)
    assert t.is_ultrametric()


def test_parse_errors():
    with pytest.raises(TreeStructureError):
        parse_newick("(A:1,B:1,C:1);")
    with pytest.raises(NewickError, match="position"):
        parse_newick("(A:1,B);")
    with pytest.raises(NewickError):
        parse_newick("(A:1,B:1)")
    with pytest.raises(NewickError):
        parse_newick("(A:1,B:x);")
    with pytest.raises(TreeStructureError):
        parse_newick("(A:1,A:1);")
    with pytest.raises(TreeStructureError):
        parse_newick("(A:-1,B:1);")
    with pytest.raises(TreeStructureError):
        parse_newick("((A:1):1,B:1);")


def test_parse_quotes_comments_and_root_length():
    t = parse_newick("('Homo sapiens':1.5[comment],B:2.5e-1)root:3;")
    assert t.leaf_names == ["Homo sapiens", "B"]
    assert t.length(t.leaves[1]) == 0.25
    assert t.name(t.root) == "root"


def test_zero_length_edge_warns():
    with pytest.warns(UserWarning, match="zero-length"):
        parse_newick("(A:0,B:1);")


def test_newick_round_trip(tmp_path):
    t = random_tree(9, np.random.default_rng(0))
    path = tmp_path / "t.nwk"
    path.write_text(t.to_newick())
    t2 = read_newick(path)
    assert t2.leaf_names == t.leaf_names
    np.testing.assert_array_equal(evolutionary_covariance(t2), evolutionary_covariance(t))


def test_mrca_examples():
    t = parse_newick(FOUR)
    a, b, c = (t.node_id(x) for x in "ABC")
    assert mrca(t, a, a) == a
    assert mrca(t, "A", "B") == t.parent(a)
    assert mrca(t, "A", "C") == t.root
    with pytest.raises(InvalidInputError):
        mrca(t, "A", "Z")


@given(st.integers(2, 40), st.integers(0, 2**32 - 1))
def test_mrca_matches_naive_oracle(n, seed):
    rng = np.random.default_rng(seed)
    t = random_tree(n, rng)
    nodes = rng.integers(0, t.n_nodes, size=(10, 2))
    for a, b in nodes:
        assert mrca(t, int(a), int(b)) == naive_mrca(t, int(a), int(b))


def test_covariance_examples():
    t = 0.7
    np.testing.assert_array_equal(
        evolutionary_covariance(parse_newick(f"(A:{t},B:{t});")), [[t, 0], [0, t]])
    C = evolutionary_covariance(parse_newick(FOUR))
    np.testing.assert_array_equal(C, [[2, 1, 0, 0], [1, 2, 0, 0], [0, 0, 2, 1], [0, 0, 1, 2]])
    np.testing.assert_array_equal(C, shared_prefix_oracle(parse_newick(FOUR)))
    np.testing.assert_allclose(evolutionary_covariance(parse_newick(FOUR).scaled(2.5)), 2.5 * C)


@given(st.integers(2, 64), st.integers(0, 2**32 - 1))
def test_covariance_matches_shared_prefix_oracle(n, seed):
    t = random_tree(n, np.random.default_rng(seed))
    np.testing.assert_array_equal(evolutionary_covariance(t), shared_prefix_oracle(t))


@given(st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_covariance_properties(n, seed):
    rng = np.random.default_rng(seed)
    t = random_tree(n, rng)
    C = evolutionary_covariance(t)
    np.testing.assert_array_equal(C, C.T)
    np.testing.assert_allclose(np.diag(C), [t.depth(x) for x in t.leaves])
    d = np.diag(C)
    assert np.all(C <= np.minimum.outer(d, d) + 1e-12)
    assert np.linalg.eigvalsh(C).min() >= -1e-10
    perm = rng.permutation(n)
    order = [t.leaves[i] for i in perm]
    np.testing.assert_array_equal(evolutionary_covariance(t, order), C[np.ix_(perm, perm)])


def test_covariance_by_leaf_names():
    t = parse_newick(FOUR)
    C = evolutionary_covariance(t, ["C", "A", "D", "B"])
    np.testing.assert_array_equal(C[0], [2, 0, 1, 0])
    with pytest.raises(InvalidInputError):
        evolutionary_covariance(t, ["A", "B", "C"])


def test_four_leaf_tree_and_covariance_csv(tmp_path):
    t = four_leaf_tree(0.2, 0.3)
    assert t.leaf_names == ["x1", "x2", "x3", "x4"]
    C = evolutionary_covariance(t)
    np.testing.assert_allclose(C[0, :2], [0.5, 0.2])
    write_covariance_csv(C, t.leaf_names, tmp_path / "C.csv")
    lines = (tmp_path / "C.csv").read_text().splitlines()
    assert lines[0] == ",x1,x2,x3,x4" and lines[1].startswith("x1,0.5,0.2")


def test_ptree_validation():
    with pytest.raises(TreeStructureError):
        PTree([-1, -1], [0, 0])
    with pytest.raises(TreeStructureError):
        PTree([-1, 0, 0, 3, 3], [0, 1, 1, 1, 1])
    t = PTree([-1, 0, 0], [0, 1, 2], [None, "a", "b"])
    assert not t.is_ultrametric() and t.leaf_names == ["a", "b"]
