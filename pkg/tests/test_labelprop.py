import numpy as np
import pytest

from pulseprop.labelprop import (
    LabelDistribution,
    PropagationConfig,
    build_graph,
    harden_labels,
    initial_distribution,
    propagate,
    propagate_closed_form,
    propagate_iterative,
    save_graph,
)
from pulseprop.synth import generate_three_bands


def chain_graph():
    # collinear points with k=1 produce the unit-weight path 0-1-2
    x = np.array([[0.0], [1.0], [2.0]])
    y = np.array([0, -1, 1])
    return build_graph(x, y, PropagationConfig(n_neighbors=1))


def path4_graph():
    x = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, -1, -1, 1])
    return build_graph(x, y, PropagationConfig(n_neighbors=1))


def random_knn_graph(rng, n=40, labeled=8):
    x = rng.normal(size=(n, 3))
    y = np.full(n, -1)
    chosen = rng.choice(n, size=labeled, replace=False)
    y[chosen] = rng.integers(0, 2, size=labeled)
    y[chosen[0]], y[chosen[1]] = 0, 1  # both classes present
    return build_graph(x, y, PropagationConfig(n_neighbors=5))


class TestBuildGraph:
    def test_collinear_knn_union(self):
        graph = chain_graph()
        expected = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        assert np.array_equal(graph.adjacency.toarray(), expected)
        assert np.allclose(graph.transition.toarray()[1], [0.5, 0.0, 0.5])

    def test_rows_always_stochastic(self):
        rng = np.random.default_rng(0)
        for kernel in ("knn", "rbf"):
            x = rng.normal(size=(30, 4))
            y = np.full(30, -1)
            y[0], y[1] = 0, 1
            graph = build_graph(x, y, PropagationConfig(kernel=kernel, n_neighbors=4))
            sums = np.asarray(graph.transition.sum(axis=1)).ravel()
            assert np.allclose(sums, 1.0, atol=1e-9)
            adj = graph.adjacency
            assert (adj != adj.T).nnz == 0  # symmetric

    def test_rbf_small_gamma_limit(self):
        x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        y = np.array([0, 1, -1, -1])
        graph = build_graph(x, y, PropagationConfig(kernel="rbf", rbf_gamma=1e-9))
        assert np.allclose(graph.transition.toarray()[0], [0.0, 1 / 3, 1 / 3, 1 / 3], atol=1e-6)

    def test_missing_class_rejected(self):
        x = np.random.default_rng(1).normal(size=(10, 2))
        y = np.full(10, -1)
        y[0] = 1  # class 0 has no labeled node
        with pytest.raises(ValueError, match="classes \\[0\\]"):
            build_graph(x, y, PropagationConfig(n_neighbors=2))

    def test_all_unlabeled_rejected(self):
        x = np.random.default_rng(2).normal(size=(10, 2))
        with pytest.raises(ValueError, match="labeled"):
            build_graph(x, np.full(10, -1), PropagationConfig(n_neighbors=2))

    def test_too_many_neighbors_rejected(self):
        x = np.random.default_rng(3).normal(size=(5, 2))
        y = np.array([0, 1, -1, -1, -1])
        with pytest.raises(ValueError, match="n_neighbors"):
            build_graph(x, y, PropagationConfig(n_neighbors=5))


class TestIterative:
    def test_symmetric_chain_midpoint(self):
        graph = chain_graph()
        dist, iterations, converged = propagate_iterative(
            graph, initial_distribution(graph), PropagationConfig(n_neighbors=1)
        )
        assert converged
        assert dist.probabilities[1] == pytest.approx([0.5, 0.5])
        # labeled rows stay clamped one-hot
        assert dist.probabilities[0].tolist() == [1.0, 0.0]
        assert dist.probabilities[2].tolist() == [0.0, 1.0]

    def test_zero_unlabeled_is_identity(self):
        x = np.array([[0.0], [1.0]])
        y = np.array([0, 1])
        graph = build_graph(x, y, PropagationConfig(n_neighbors=1))
        initial = initial_distribution(graph)
        dist, iterations, converged = propagate_iterative(graph, initial, PropagationConfig(n_neighbors=1))
        assert iterations == 0 and converged
        assert np.array_equal(dist.probabilities, initial.probabilities)

    def test_matches_closed_form_within_tolerance_budget(self):
        rng = np.random.default_rng(4)
        graph = random_knn_graph(rng)
        config = PropagationConfig(n_neighbors=5, tolerance=1e-3, max_iterations=1000)
        dist_it, _, converged = propagate_iterative(graph, initial_distribution(graph), config)
        dist_cf = propagate_closed_form(graph, initial_distribution(graph))
        assert converged
        assert np.max(np.abs(dist_it.probabilities - dist_cf.probabilities)) < 10 * config.tolerance

    def test_stochasticity_and_maximum_principle(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            graph = random_knn_graph(rng, n=60, labeled=10)
            dist, _, _ = propagate_iterative(
                graph, initial_distribution(graph), PropagationConfig(n_neighbors=5, tolerance=1e-8)
            )
            probs = dist.probabilities
            assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)
            assert probs.min() >= -1e-12 and probs.max() <= 1.0 + 1e-12

    def test_non_convergence_reported(self):
        rng = np.random.default_rng(6)
        graph = random_knn_graph(rng, n=100, labeled=4)
        dist, iterations, converged = propagate_iterative(
            graph, initial_distribution(graph), PropagationConfig(n_neighbors=5, tolerance=1e-15, max_iterations=3)
        )
        assert iterations == 3 and not converged


class TestClosedForm:
    def test_chain_midpoint(self):
        graph = chain_graph()
        dist = propagate_closed_form(graph, initial_distribution(graph))
        assert dist.probabilities[1] == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_path4_hand_solve(self):
        # (I - T_uu)^-1 T_ul Y_l0 for the unit path gives [2/3,1/3], [1/3,2/3]
        graph = path4_graph()
        dist = propagate_closed_form(graph, initial_distribution(graph))
        assert dist.probabilities[1] == pytest.approx([2 / 3, 1 / 3], abs=1e-12)
        assert dist.probabilities[2] == pytest.approx([1 / 3, 2 / 3], abs=1e-12)

    def test_stranded_component_gets_prior(self):
        # two unlabeled nodes joined only to each other, far from the rest
        x = np.array([[0.0, 0.0], [1.0, 0.0], [100.0, 100.0], [100.5, 100.0], [0.5, 0.5]])
        y = np.array([0, 1, -1, -1, -1])
        graph = build_graph(x, y, PropagationConfig(n_neighbors=1))
        dist = propagate_closed_form(graph, initial_distribution(graph))
        assert set(dist.stranded_nodes) == {2, 3}
        prior = [0.5, 0.5]  # one labeled node per class
        assert dist.probabilities[2] == pytest.approx(prior)
        assert dist.probabilities[3] == pytest.approx(prior)
        # the reachable unlabeled node is solved (attached evenly to both
        # labeled nodes, the linear system puts it at the midpoint)
        assert 4 not in dist.stranded_nodes
        assert dist.probabilities[4] == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(25, 3))
        y = np.full(25, -1)
        y[:4] = [0, 1, 0, 1]
        config = PropagationConfig(n_neighbors=4)
        base = propagate_closed_form(build_graph(x, y, config), initial_distribution(build_graph(x, y, config)))
        perm = rng.permutation(25)
        permuted = propagate_closed_form(
            build_graph(x[perm], y[perm], config),
            initial_distribution(build_graph(x[perm], y[perm], config)),
        )
        assert np.allclose(permuted.probabilities, base.probabilities[perm], atol=1e-9)

    def test_feature_scaling_irrelevant_for_knn(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(30, 4))
        y = np.full(30, -1)
        y[:4] = [0, 1, 0, 1]
        config = PropagationConfig(n_neighbors=5)
        g1 = build_graph(x, y, config)
        g2 = build_graph(1000.0 * x, y, config)
        h1, _ = harden_labels(propagate_closed_form(g1, initial_distribution(g1)))
        h2, _ = harden_labels(propagate_closed_form(g2, initial_distribution(g2)))
        assert np.array_equal(h1, h2)


class TestHarden:
    def test_tie_goes_to_artifact(self):
        dist = LabelDistribution(probabilities=np.array([[0.5, 0.5]]))
        labels, scores = harden_labels(dist)
        assert labels.tolist() == [1]

    def test_one_hot(self):
        dist = LabelDistribution(probabilities=np.array([[1.0, 0.0]]))
        labels, _ = harden_labels(dist)
        assert labels.tolist() == [0]

    def test_argmax_and_score(self):
        dist = LabelDistribution(probabilities=np.array([[0.2, 0.8]]))
        labels, scores = harden_labels(dist)
        assert labels.tolist() == [1]
        assert scores[0] == pytest.approx(0.8)


class TestDispatch:
    def test_auto_uses_closed_form_at_desk_scale(self):
        graph = path4_graph()
        dist, info = propagate(graph, initial_distribution(graph), PropagationConfig(n_neighbors=1))
        assert info["solver"] == "closed_form"

    def test_explicit_iterative(self):
        graph = path4_graph()
        dist, info = propagate(
            graph, initial_distribution(graph), PropagationConfig(n_neighbors=1, solver="iterative")
        )
        assert info["solver"] == "iterative" and info["converged"]


class TestThreeBands:
    def test_lp_beats_nearest_labeled(self):
        features, bands, labeled = generate_three_bands(60, seed=0)
        y = np.full(features.shape[0], -1)
        y[labeled] = bands[labeled]
        graph = build_graph(features, y, PropagationConfig())
        hard, _ = harden_labels(propagate_closed_form(graph, initial_distribution(graph)))
        lp_accuracy = float((hard == bands).mean())

        diff = features[:, None, :] - features[labeled][None, :, :]
        nearest = np.argmin(np.einsum("ijk,ijk->ij", diff, diff), axis=1)
        nn_accuracy = float((bands[labeled][nearest] == bands).mean())

        assert lp_accuracy >= 0.95
        assert nn_accuracy < 0.80


class TestGraphDump:
    def test_edge_and_node_files(self, tmp_path):
        graph = path4_graph()
        edges, nodes = tmp_path / "edges.txt", tmp_path / "nodes.txt"
        save_graph(graph, ["a", "b", "c", "d"], edges, nodes)
        edge_lines = edges.read_text().strip().splitlines()
        assert edge_lines == ["0 1 1.0", "1 2 1.0", "2 3 1.0"]
        node_lines = nodes.read_text().strip().splitlines()
        assert node_lines[0] == "0 a 0"
        assert node_lines[1] == "1 b -1"
