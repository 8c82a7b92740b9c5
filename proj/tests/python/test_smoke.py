import json

import numpy as np
import pytest

import conqar


def write_corpus(path):
    lines = []
    for u in range(6):
        for v in range(6):
            r = 3 + (1 if u % 2 == 0 else -1) + (1 if v % 3 == 0 else -1)
            words = {5: "love great", 3: "okay fine"}.get(r, "terrible awful")
            lines.append(f"u{u}\ti{v}\t{r}\t{words} product here\tr{u}_{v}")
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    write_corpus(root / "reviews.tsv")
    summary = conqar.prepare(root / "reviews.tsv", root / "data", format="tsv", seed=3,
                             max_review_words=6, max_reviews=4)
    config = {"embedding_dim": 8, "n_filters": 6, "window_sizes": [1, 2], "fc_layers": 1, "fc_hidden": 8,
              "dropout": 0.0, "epochs": 10, "batch_size": 8, "learning_rate": 0.01, "seed": 1,
              "max_review_words": 6, "max_reviews": 4}
    report = conqar.train(config, root / "data", root / "out")
    return root, summary, report


def test_prepare_and_train(run):
    root, summary, report = run
    assert summary["records"] == 36
    assert summary["train"] + summary["validation"] + summary["test"] == 36
    assert report["epochs_run"] == len(report["epochs"]) >= 1
    assert np.isfinite(report["test_mae"])
    assert (root / "out" / "checkpoint.bin").stat().st_size > 0


def test_evaluate_matches_summary(run):
    root, _, report = run
    assert conqar.evaluate(root / "out" / "checkpoint.bin", "test") == pytest.approx(report["test_mae"], abs=1e-12)


def test_visualize(run):
    root, _, _ = run
    files = conqar.visualize(root / "out" / "checkpoint.bin", "u0", "i0", root / "viz", k=5)
    rho = conqar.parse_matrix_csv(open(files["user_csv"]).read())
    assert rho.shape == (6, 6)
    np.testing.assert_allclose(rho, rho.T, atol=1e-12)
    assert open(files["user_svg"]).read().count("<rect") == 36


def test_density_matrix_properties():
    rng = np.random.default_rng(0)
    states = conqar.unit_states(np.abs(rng.normal(size=(5, 9))))
    p = rng.random(9)
    p /= p.sum()
    rho = conqar.density_matrix(states, p)
    np.testing.assert_allclose(rho, states @ np.diag(p) @ states.T, atol=1e-12)
    assert np.trace(rho) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.eigvalsh(rho).min() > -1e-10
    other = conqar.density_matrix(states[:, :4], np.full(4, 0.25))
    assert conqar.mutual_trace(rho, other) == pytest.approx(np.trace(rho @ other.T), abs=1e-12)


def test_small_helpers():
    assert conqar.mean_absolute_error([4.0, 2.0], [5.0, 1.0]) == 1.0
    assert conqar.tokenize("Great, PRODUCT!") == ["great", "product"]
    top = conqar.top_k_positions([5, 6, 0, 7], [0.1, 0.5, 0.9, 0.4], 2)
    assert [pos for pos, _ in top] == [1, 3]
    m = np.arange(6.0).reshape(2, 3) / 7
    np.testing.assert_allclose(conqar.parse_matrix_csv(conqar.matrix_csv(m)), m, atol=1e-15)


def test_errors():
    with pytest.raises(ValueError):
        conqar.mean_absolute_error([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        conqar.top_k_positions([5], [1.0], 0)
