import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tratopo.graph import (DatasetFormatError, Graph, NodeLabelStore, SchemaError, edge_homophily_ratio,
                           induced_subgraph, inject_label_noise, load_citation_dataset, load_csv_dataset,
                           noise_budget, row_normalize, split_nodes)

from conftest import graphs, random_graph


@given(graphs())
def test_csr_is_symmetric_sorted_and_loop_free(g_edges):
    g, edges = g_edges
    a = g.to_scipy().toarray()
    assert np.array_equal(a, a.T)
    assert np.all(np.diag(a) == 0)
    assert g.edge_count == len(edges)
    for v in range(g.node_count):
        nb = g.neighbors(v)
        assert np.all(np.diff(nb) > 0)
        assert g.degree(v) == a[v].sum()


@given(graphs(max_nodes=12))
def test_json_round_trip(g_edges):
    g, _ = g_edges
    assert Graph.from_json(g.to_json()) == g


def test_duplicates_and_reversed_pairs_collapse():
    g = Graph.from_edges(3, [(0, 1), (1, 0), (0, 1), (1, 2)])
    assert g.edge_count == 2
    assert g.edges().tolist() == [[0, 1], [1, 2]]


def test_degree_examples():
    assert Graph.empty(1).degree(0) == 0 and len(Graph.empty(1).neighbors(0)) == 0
    tri = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    assert [tri.degree(v) for v in range(3)] == [2, 2, 2]


def test_edit_operations():
    g = Graph.from_edges(4, [(0, 1), (1, 2)])
    assert g.add_edges([(1, 0)]) == g
    assert g.remove_edges([(2, 3)]) == g
    assert g.add_edges([(2, 3)]).remove_edges([(3, 2)]) == g
    with pytest.raises(ValueError):
        g.add_edges([(1, 1)])
    with pytest.raises(IndexError):
        g.neighbors(4)


def test_fingerprint_tracks_content():
    g = Graph.from_edges(4, [(0, 1)])
    assert g.fingerprint == Graph.from_edges(4, [(1, 0)]).fingerprint
    assert g.fingerprint != g.add_edges([(2, 3)]).fingerprint


def _write(tmp_path, content, cites):
    (tmp_path / "x.content").write_text(content)
    (tmp_path / "x.cites").write_text(cites)
    return tmp_path / "x.content", tmp_path / "x.cites"


def test_loader_empty_cites(tmp_path):
    ds = load_citation_dataset(*_write(tmp_path, "a\t1\t0\tA\nb\t0\t1\tB\nc\t1\t1\tA\n", ""))
    assert ds.graph.node_count == 3 and ds.graph.edge_count == 0
    assert ds.labels.true_labels.tolist() == [0, 1, 0]
    assert ds.features.shape == (3, 2)


def test_loader_drops_unknown_self_and_duplicate(tmp_path):
    ds = load_citation_dataset(*_write(tmp_path, "a\t1\tA\nb\t0\tB\n", "a\tb\nb\ta\na\ta\na\tzz\n"))
    assert ds.graph.edge_count == 1
    assert ds.dropped == {"unknown": 1, "self_loops": 1, "duplicates": 1}


def test_loader_errors(tmp_path):
    with pytest.raises(SchemaError):
        load_citation_dataset(*_write(tmp_path, "a\t1\t0\tA\nb\t1\tB\n", ""))
    with pytest.raises(DatasetFormatError) as err:
        load_citation_dataset(*_write(tmp_path, "a\t1\tA\nb\tx\tB\n", ""))
    assert err.value.lineno == 2
    with pytest.raises(DatasetFormatError):
        load_citation_dataset(*_write(tmp_path, "a\t1\tA\n", "a\n"))


def test_csv_loader(tmp_path):
    (tmp_path / "e.csv").write_text("src,dst\n0,1\n1,2\n")
    (tmp_path / "f.csv").write_text("f0,f1\n1,0\n0,1\n1,1\n")
    (tmp_path / "l.csv").write_text("label\nx\ny\nx\n")
    ds = load_csv_dataset(tmp_path / "e.csv", tmp_path / "f.csv", tmp_path / "l.csv")
    assert ds.graph.edge_count == 2 and ds.labels.true_labels.tolist() == [0, 1, 0]


def test_cora_statistics(cora):
    g = cora.graph
    assert g.node_count == 2708
    assert len(g.indices) == 10556
    assert cora.features.shape[1] == 1433
    assert cora.labels.class_count == 7
    assert edge_homophily_ratio(g, cora.labels.true_labels) == pytest.approx(0.81, abs=0.005)


def test_split_sizes_example():
    s = split_nodes(2708, (0.1, 0.2, 0.7), seed=7)
    assert len(s.train) in (270, 271) and len(s.val) in (541, 542)
    assert len(s.train) + len(s.val) + len(s.test) == 2708
    assert np.array_equal(s.roles, split_nodes(2708, (0.1, 0.2, 0.7), seed=7).roles)
    assert len(split_nodes(10, (1.0, 0.0, 0.0)).train) == 10
    with pytest.raises(ValueError):
        split_nodes(10, (0.5, 0.5, 0.5))


@given(st.integers(1, 500), st.integers(0, 100))
def test_split_partitions(n, seed):
    s = split_nodes(n, (0.1, 0.2, 0.7), seed)
    allv = np.concatenate([s.train, s.val, s.test])
    assert np.array_equal(np.sort(allv), np.arange(n))


def test_noise_examples():
    z = NodeLabelStore.from_true(np.arange(2708) % 7)
    assert np.array_equal(inject_label_noise(z, 0.0).manual_labels, z.true_labels)
    noisy = inject_label_noise(z, 0.1, seed=3)
    flipped = noisy.manual_labels != z.true_labels
    assert flipped.sum() == 270
    two = NodeLabelStore.from_true(np.array([0, 1, 1, 0, 1]))
    assert np.array_equal(inject_label_noise(two, 1.0).manual_labels, 1 - two.true_labels)


@given(st.floats(0, 1), st.integers(1, 300), st.integers(2, 6), st.integers(0, 50))
def test_noise_budget_exact(rate, n, k, seed):
    z = NodeLabelStore.from_true(np.arange(n) % k, k)
    noisy = inject_label_noise(z, rate, seed)
    assert (noisy.manual_labels != z.true_labels).sum() == noise_budget(rate, n)


def test_homophily_examples():
    g = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
    assert edge_homophily_ratio(g, [0, 0, 0, 0]) == 1.0
    assert edge_homophily_ratio(g, [0, 1, 0, 1]) == 0.0


def test_induced_subgraph_examples():
    tri = Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])
    sub, m = induced_subgraph(tri, [0, 1])
    assert sub.edges().tolist() == [[0, 1]]
    full, _ = induced_subgraph(tri, range(3))
    assert full == tri


def test_induced_subgraph_matches_edge_filter():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = random_graph(rng, 30, 0.15)
        keep = np.sort(rng.choice(30, size=rng.integers(1, 30), replace=False))
        sub, m = induced_subgraph(g, keep)
        kept = set(keep.tolist())
        expect = {(u, v) for u, v in g.edges().tolist() if u in kept and v in kept}
        got = {(int(m.to_old[a]), int(m.to_old[b])) for a, b in sub.edges().tolist()}
        assert got == expect


def test_row_normalize():
    x = np.array([[1.0, 3.0], [0.0, 0.0]])
    assert np.allclose(row_normalize(x), [[0.25, 0.75], [0, 0]])


def test_citeseer_planetoid():
    from conftest import DATA
    from tratopo.graph import load_planetoid_dataset
    d = DATA.parent / "citeseer"
    if not (d / "ind.citeseer.graph").exists():
        pytest.skip("Citeseer not present; run scripts/fetch_data.py")
    ds = load_planetoid_dataset(d, "citeseer")
    assert ds.graph.node_count == 3327 and ds.labels.class_count == 6
    assert ds.features.shape == (3327, 3703)
    assert edge_homophily_ratio(ds.graph, ds.labels.true_labels) == pytest.approx(0.736, abs=0.005)


def test_planetoid_refuses_foreign_pickles(tmp_path):
    import pickle

    from tratopo.graph import load_planetoid_dataset

    class Sneaky:
        def __reduce__(self):
            return (print, ("should never run",))

    for part in ("x", "y", "tx", "ty", "allx", "ally", "graph"):
        (tmp_path / f"ind.evil.{part}").write_bytes(pickle.dumps(Sneaky()))
    (tmp_path / "ind.evil.test.index").write_text("0\n")
    with pytest.raises(DatasetFormatError, match="refusing"):
        load_planetoid_dataset(tmp_path, "evil")
