import json
import math
import os

import pytest

import oko


def test_softmax_and_losses():
    p = oko.softmax([1.0, 2.0, 3.0])
    assert math.isclose(sum(p), 1.0, abs_tol=1e-15)
    loss, grad = oko.vanilla_ce([0.0, 0.0], 1)
    assert math.isclose(loss, math.log(2.0))
    assert grad == pytest.approx([0.5, -0.5])
    hard, _ = oko.oko_hard([1.0, 0.5, -0.3], 0)
    z = [1.0, 0.5, -0.3]
    lse = math.log(sum(math.exp(v) for v in z))
    assert math.isclose(hard, lse - z[0], rel_tol=1e-12)
    soft, _ = oko.oko_soft(z, [0, 0, 2])
    assert soft > 0


def test_set_logit_sum():
    assert oko.set_logit_sum([[1.0, 2.0], [3.0, -1.0]]) == [4.0, 1.0]


def test_two_bin_ece():
    e = oko.ece([0.6, 0.7, 0.9, 0.9], [1, 0, 1, 1], bins=2, lo=0.5, hi=1.0)
    assert e == pytest.approx(0.125, abs=1e-12)


def test_rc_and_temperature():
    assert oko.rc(0, [0.5, 0.5]) == pytest.approx(0.0, abs=1e-15)
    q = oko.temperature_scale([2.0, 1.0, 0.0], 3.0)
    assert max(range(3), key=q.__getitem__) == 0


def test_evaluate_returns_report():
    r = oko.evaluate([[0.9, 0.1], [0.2, 0.8]], [0, 0], bins=5)
    assert r["n"] == 2
    assert r["accuracy"] == pytest.approx(0.5)


def test_toy_objective():
    a = [0.1, -0.4, 0.7]
    assert oko.q_epsilon(0.01, a) == pytest.approx(oko.q_epsilon_by_enumeration(0.01, a), abs=1e-12)
    a_min, value, _ = oko.minimize_q_epsilon(0.001)
    assert oko.limit_deviation(a_min) < 0.01
    assert a_min[2] == pytest.approx(math.log(2.0), abs=0.01)


def test_verify_suite_json():
    out = oko.verify(rc_samples=20000)
    names = {c["name"]: c["pass"] for c in out["checks"]}
    assert names["q_epsilon_two_path"]
    assert names["toy_minimizer_limits"]


def test_bad_input_raises():
    with pytest.raises(ValueError):
        oko.softmax([])


def test_train_and_report(tmp_path):
    cfg = {
        "dataset": {"kind": "blobs", "num_classes": 3, "dim": 4, "pool_per_class": 60},
        "methods": ["vanilla", "oko"],
        "train_sizes": [40],
        "seeds": [0],
        "optimizer": {"epochs": 2, "hidden": [8]},
        "output_dir": "out",
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    code, out, err = oko.train(str(path))
    assert code == 0, err
    assert os.path.exists(tmp_path / "out" / "oko_n40_s0.json")
    code, _, _ = oko.report(str(tmp_path / "out"))
    assert code == 0
    assert (tmp_path / "out" / "summary.csv").read_text().startswith("method,")
    assert len(oko.config_hash(json.dumps(cfg))) == 16


def test_invalid_config_exit_code(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text('{"methods": ["nope"]}')
    code, _, err = oko.train(str(path))
    assert code == 1
    assert "nope" in err
