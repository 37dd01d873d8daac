"""Smoke test for the nodecon_py extension.

Build and install first:  pip install ./crates/python --no-build-isolation
"""

import math
import tempfile
import os

import nodecon_py as nc


def main():
    g = nc.Graph.sbm([20, 20], 0.3, 0.02, feature_dim=6, seed=1)
    print(g)
    assert g.num_nodes == 40 and g.num_classes == 2
    assert set(g.k_hop(0, 1)) == set(g.neighbors(0)) | {0}

    tiny = nc.Graph(3, [(0, 1), (1, 0), (2, 2)], [[0.0], [1.0], [2.0]], [0, 1, 0])
    assert tiny.num_edges == 1

    pts = [[float(i), float(i % 3)] for i in range(8)]
    k = nc.kernel(pts)
    assert all(abs(k[i][i] - 1.0) < 1e-12 for i in range(8))
    picked = nc.dpp_select(pts, 3, seed=2)
    assert len(set(picked)) == 3 and picked == sorted(picked)
    assert len(nc.dpp_select(pts, 3, greedy=True)) == 3

    loss, w, grad = nc.contrastive_loss([1.0, 0.0], [1.0, 0.0], [[0.5, 0.5], [0.0, 1.0]])
    assert math.isfinite(loss) and abs(sum(w) - 2.0) < 1e-9 and len(grad) == 2

    cfg = {
        "epochs": "3",
        "hidden_dim": "16",
        "embed_dim": "16",
        "probe_runs": "2",
        "head_pool": "32",
        "pool_size": "32",
        "m_negatives": "8",
    }
    model = nc.train(g, cfg)
    assert len(model.losses) == 3 and all(math.isfinite(x) for x in model.losses)
    emb = model.embed(g)
    assert len(emb) == 40 and len(emb[0]) == 16
    mean, std, runs = nc.evaluate(emb, g, runs=2)
    assert 0.0 <= mean <= 1.0 and len(runs) == 2

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "ck.bin")
        model.save(path)
        again = nc.Model.load(path, cfg)
        assert again.embed(g) == emb

    try:
        nc.train(g, {"alpah": "0.5"})
    except ValueError as e:
        assert "alpah" in str(e)
    else:
        raise AssertionError("unknown key accepted")

    print(f"ok: losses={['%.3f' % x for x in model.losses]} accuracy={mean:.3f}")


if __name__ == "__main__":
    main()
