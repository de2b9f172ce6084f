import itertools
import json

import numpy as np
import pytest

import urbanfuse

TOY = {
    "mode": "synthetic",
    "seed": 3,
    "graph": {"grid_rows": 6, "grid_cols": 10},
    "synth": {"k_clusters": 3, "n_timesteps": 24},
    "models": {
        name: {"hidden_dim": 8, "latent_dim": 4, "epochs": 20}
        for name in ("static", "dynamic", "early", "top")
    },
    "eval": {"k": 3},
    "tsne": {"perplexity": 8, "iterations": 250},
}


def brute_dtw(a, b):
    best = np.inf
    stack = [(0, 0, 0.0)]
    while stack:
        i, j, acc = stack.pop()
        acc += abs(a[i] - b[j])
        if i == len(a) - 1 and j == len(b) - 1:
            best = min(best, acc)
            continue
        if i + 1 < len(a):
            stack.append((i + 1, j, acc))
        if j + 1 < len(b):
            stack.append((i, j + 1, acc))
        if i + 1 < len(a) and j + 1 < len(b):
            stack.append((i + 1, j + 1, acc))
    return best


def test_dtw_matches_enumeration():
    rng = np.random.default_rng(0)
    for _ in range(30):
        a = rng.normal(size=rng.integers(1, 6))
        b = rng.normal(size=rng.integers(1, 6))
        assert urbanfuse.dist_dtw(a, b) == pytest.approx(brute_dtw(a, b), rel=1e-12)


def test_kmeans_and_ari_on_blobs():
    rng = np.random.default_rng(1)
    centers = np.array([[0, 0], [10, 0], [0, 10]], dtype=float)
    truth = np.repeat(np.arange(3), 20)
    points = centers[truth] + rng.normal(scale=0.5, size=(60, 2))
    labels, found, inertia = urbanfuse.kmeans(points, 3, seed=4)
    assert found.shape == (3, 2)
    assert inertia > 0
    assert urbanfuse.adjusted_rand_index(labels, truth.tolist()) == pytest.approx(1.0)


def test_silhouette_pairs_against_numpy():
    rng = np.random.default_rng(2)
    xs = rng.normal(size=(12, 3))
    xd = rng.normal(size=(12, 5))
    labels = [0, 1, 2] * 4
    pairs = urbanfuse.silhouette_pairs(xs, xd, labels, 3)
    assert [(a, b) for a, b, _, _ in pairs] == [(0, 1), (0, 2), (1, 2)]
    members = {c: [i for i, l in enumerate(labels) if l == c] for c in range(3)}

    def cohesion(c):
        m = members[c]
        d = [np.linalg.norm(xs[i] - xs[j]) for i, j in itertools.permutations(m, 2)]
        return sum(d) / len(d)

    for a, b, s_static, _ in pairs:
        sep = min(np.linalg.norm(xs[i] - xs[j]) for i in members[a] for j in members[b])
        ak, al = cohesion(a), cohesion(b)
        expected = ((sep - ak) / max(ak, sep) + (sep - al) / max(al, sep)) / 2
        assert s_static == pytest.approx(expected, abs=1e-12)


def test_tsne_meets_perplexity():
    rng = np.random.default_rng(3)
    coords, kl, perp = urbanfuse.tsne(rng.normal(size=(40, 4)), {"perplexity": 5, "iterations": 500})
    assert coords.shape == (40, 2)
    assert kl[-1][1] < kl[0][1]
    assert max(abs(p - 5) for p in perp) < 1e-4
    with pytest.raises(ValueError):
        urbanfuse.tsne(rng.normal(size=(12, 4)), {"perplexity": 5})


def test_generate_synthetic_shapes():
    d = urbanfuse.generate_synthetic(5, 8, {"k_clusters": 3, "n_timesteps": 12})
    assert d["static"].shape[0] == 40
    assert d["dynamic"].shape == (40, 12)
    assert sorted(set(d["labels"])) == [0, 1, 2]


def test_run_all_and_report(tmp_path):
    root = urbanfuse.run_all(TOY, tmp_path)
    assert root.name == "session-" + urbanfuse.config_hash(TOY)
    rep = urbanfuse.report(root)
    assert len(rep["files"]) == 15
    header, ids, values = urbanfuse.read_matrix(root / "proj_m4.csv")
    assert header == ["node_id", "x", "y"]
    assert values.shape == (60, 2)
    again = urbanfuse.run_all(TOY, tmp_path / "again")
    assert (again / "proj_m4.csv").read_bytes() == (root / "proj_m4.csv").read_bytes()
    assert json.loads((root / "index.json").read_text())["config_hash"] == urbanfuse.config_hash(TOY)


def test_errors_surface_as_python_exceptions(tmp_path):
    with pytest.raises(urbanfuse.DataError):
        urbanfuse.load_dataset(tmp_path)
    with pytest.raises(urbanfuse.DataError):
        urbanfuse.report(tmp_path)
