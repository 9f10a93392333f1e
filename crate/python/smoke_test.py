"""Smoke test for the neubm_py extension module.

Build and install first, e.g.

    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/neubm_py-*.whl
"""

import math
import tempfile

import neubm_py as nb


def main():
    g = nb.Graph.sbm(num_classes=3, total_nodes=300, rho=5.0, p_intra=0.05,
                     p_inter=0.005, feature_dim=6, class_mean_separation=2.0, seed=1)
    s = g.summary()
    assert s["nodes"] == 300 and s["classes"] == 3, s
    assert s["rho"] > 1.0

    g = g.with_split(seed=2)
    assert sum(g.mask("train")) >= 15

    model = nb.Model.train(g, hidden_dim=16, max_epochs=60, patience=20, seed=3)
    assert model.epochs_run is not None and model.best_epoch <= model.epochs_run

    neutral = nb.NeutralGraph.build(g, seed=4)
    assert neutral.num_nodes == 300
    ref = neutral.logit_vector(model)
    assert len(ref) == 3

    logits = model.logits(g)
    probs, pred = nb.calibrate(logits, ref, "subtract")
    assert all(abs(sum(row) - 1.0) < 1e-9 for row in probs)
    same_probs, same_pred = nb.calibrate(logits, ref, "scale(1)")
    assert same_pred == pred and same_probs == probs
    _, raw = nb.calibrate(logits, [0.0, 0.0, 0.0], "subtract")
    _, none = nb.calibrate(logits, ref, "none")
    assert raw == none

    truth = [l for l in g.labels]
    test = g.mask("test")
    m_none = nb.evaluate(none, truth, 3, test)
    m_sub = nb.evaluate(pred, truth, 3, test)
    assert 0.0 <= m_sub["f1_macro"] <= 1.0
    assert m_none["f1_micro"] == m_none["accuracy"]

    d = nb.mmd([[0.0]], [[1.0]], bandwidth=1 / math.sqrt(2))
    assert abs(d - math.sqrt(2 - 2 * math.exp(-1))) < 1e-9

    with tempfile.TemporaryDirectory() as tmp:
        g.save(tmp + "/data")
        back = nb.Graph.load(tmp + "/data")
        assert back.num_edges == g.num_edges
        model.save(tmp + "/model.json")
        again = nb.Model.load(tmp + "/model.json")
        assert again.logits(g) == logits

    try:
        nb.calibrate(logits, ref, "scale(-1)")
    except ValueError:
        pass
    else:
        raise AssertionError("negative lambda accepted")

    print(f"ok: F1-macro none {m_none['f1_macro']:.4f}, subtract {m_sub['f1_macro']:.4f}")


if __name__ == "__main__":
    main()
