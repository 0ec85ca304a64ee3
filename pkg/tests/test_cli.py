import json
import time
from importlib import resources

import numpy as np
import pytest

from robustmdp.cli import main
from robustmdp.core import MdpConfig, RewardSpec
from robustmdp.data import PricePanel, momentum_series, prices_from_returns, synthetic_prices, write_prices
from robustmdp.neural import init_network, save_checkpoint

FIXTURES = resources.files("robustmdp") / "fixtures"


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def write_config(path, **kw):
    path.write_text(json.dumps(kw))
    return path


SMOKE = dict(alpha=0.0, m=10, D=1, ambiguity="non_robust", epochs=2, batch=32, hidden=16,
             iter_a=3, iter_v=3, n_mc=4, n_measures=1, lr=1e-2, seed=3)


@pytest.fixture
def momentum_csv(tmp_path):
    from datetime import date, timedelta

    r = momentum_series(200, D=1)
    prices = prices_from_returns([100.0], r)
    dates = tuple(date(2019, 1, 1) + timedelta(days=i) for i in range(len(prices)))
    path = tmp_path / "prices.csv"
    write_prices(path, PricePanel(dates, prices, ("MOM",)))
    return path


def test_validate_ok_and_rejects(tmp_path, capsys):
    good = write_config(tmp_path / "good.json", alpha=0.45, epsilon=0.15, m=10, ambiguity="parametric")
    code, out, _ = run(["validate", "--config", good], capsys)
    assert code == 0 and json.loads(out)["alpha_times_c_p"] < 1
    bad = write_config(tmp_path / "bad.json", alpha=0.99, epsilon=0.15, m=10, ambiguity="parametric")
    code, _, err = run(["validate", "--config", bad], capsys)
    assert code == 2 and json.loads(err)["code"] == "DiscountTooLarge"


def test_validate_malformed(tmp_path, capsys):
    broken = tmp_path / "broken.json"
    broken.write_text("{alpha: 0.4")
    code, _, err = run(["validate", "--config", broken], capsys)
    assert code == 2 and "code" in json.loads(err)
    unknown = write_config(tmp_path / "unknown.json", alpha=0.4, gamma=1)
    assert run(["validate", "--config", unknown], capsys)[0] == 2
    assert run(["validate", "--config", tmp_path / "missing.json"], capsys)[0] == 2


def test_solve_tabular_fixtures(tmp_path, capsys):
    code, out, _ = run(["solve-tabular", "--mdp", FIXTURES / "single_state.json", "--alpha", 0.5], capsys)
    assert code == 0 and json.loads(out)["values"][0] == pytest.approx(2.0, abs=1e-9)
    expected = json.loads((FIXTURES / "two_state_expected.json").read_text())
    code, out, _ = run(["solve-tabular", "--data", FIXTURES / "two_state.json", "--alpha", expected["alpha"],
                        "--out", tmp_path], capsys)
    assert code == 0
    written = json.loads((tmp_path / "value_table.json").read_text())
    np.testing.assert_allclose(written["values"], expected["values"], atol=1e-9)
    assert written["policy"] == [0, 1]


def test_solve_tabular_bad_inputs(tmp_path, capsys):
    mdp = FIXTURES / "single_state.json"
    assert run(["solve-tabular", "--mdp", mdp, "--alpha", 0.5, "--tol", 0], capsys)[0] == 2
    assert run(["solve-tabular", "--mdp", mdp, "--alpha", 1.0], capsys)[0] == 2
    code, _, err = run(["solve-tabular", "--mdp", mdp, "--alpha", 0.99, "--max-iter", 3], capsys)
    assert code == 3 and json.loads(err)["code"] == "NoConvergence"


def test_train_twice_byte_identical(tmp_path, momentum_csv, capsys):
    cfg = write_config(tmp_path / "cfg.json", **SMOKE)
    start = time.perf_counter()
    for name in ("a", "b"):
        code, _, err = run(["train", "--config", cfg, "--data", momentum_csv,
                            "--model", tmp_path / name / "model.json"], capsys)
        assert code == 0, err
    assert time.perf_counter() - start < 10
    assert (tmp_path / "a/model.json").read_bytes() == (tmp_path / "b/model.json").read_bytes()
    assert (tmp_path / "a/split.json").exists() and (tmp_path / "a/train_report.json").exists()
    code, _, _ = run(["train", "--config", cfg, "--data", momentum_csv, "--seed", 4,
                      "--model", tmp_path / "c" / "model.json"], capsys)
    assert code == 0
    assert (tmp_path / "a/model.json").read_bytes() != (tmp_path / "c/model.json").read_bytes()


def test_train_input_errors(tmp_path, momentum_csv, capsys):
    cfg = write_config(tmp_path / "cfg.json", **SMOKE)
    empty = tmp_path / "empty.csv"
    empty.write_text("date,A\n")
    assert run(["train", "--config", cfg, "--data", empty, "--model", tmp_path / "m.json"], capsys)[0] == 2
    wide = write_config(tmp_path / "wide.json", **dict(SMOKE, D=2))
    code, _, err = run(["train", "--config", wide, "--data", momentum_csv, "--model", tmp_path / "m.json"], capsys)
    assert code == 2 and json.loads(err)["code"] == "DimensionMismatch"
    robust = write_config(tmp_path / "r.json", **dict(SMOKE, alpha=0.99, epsilon=0.15, ambiguity="parametric"))
    assert run(["train", "--config", robust, "--data", momentum_csv, "--model", tmp_path / "m.json"], capsys)[0] == 2


def zero_checkpoint(path, D=1, m=3):
    rng = np.random.default_rng(0)
    action = init_network([m * D, 4, D], rng, "tanh", 1.0)
    value = init_network([m * D, 4, 1], rng)
    for net in (action, value):
        for w in net.weights:
            w[:] = 0
        for b in net.biases:
            b[:] = 0
    cfg = MdpConfig(alpha=0.45, m=m, D=D, hidden=4)
    save_checkpoint(path, value, action, cfg, RewardSpec(0.1, np.eye(D) * 1e-4))
    return path


def test_backtest_zero_policy(tmp_path, capsys):
    csv = tmp_path / "p.csv"
    write_prices(csv, synthetic_prices(40, D=1, seed=2))
    model = zero_checkpoint(tmp_path / "zero.json")
    code, out, _ = run(["backtest", "--model", model, "--data", csv, "--out", tmp_path / "bt"], capsys)
    assert code == 0
    report = json.loads((tmp_path / "bt/period_1.json").read_text())
    for key in ("overall_profit", "average_profit", "pct_profitable", "sharpe", "sortino"):
        assert report[key] == 0
    # 39 returns, the first m only seed the window
    assert len(report["profits"]) == 36


def test_backtest_dimension_mismatch(tmp_path, capsys):
    csv = tmp_path / "p.csv"
    write_prices(csv, synthetic_prices(40, D=3, seed=2))
    model = zero_checkpoint(tmp_path / "zero.json", D=2)
    code, _, err = run(["backtest", "--model", model, "--data", csv, "--out", tmp_path / "bt"], capsys)
    assert code == 2 and json.loads(err)["code"] == "DimensionMismatch"


def test_backtest_periods_byte_stable(tmp_path, momentum_csv, capsys):
    cfg = write_config(tmp_path / "cfg.json", **SMOKE)
    periods = ["2019-04-01:2019-04-30", "2019-05-01:2019-05-31", "2019-06-01:2019-07-19"]
    flags = [x for p in periods for x in ("--period", p)]
    code, _, err = run(["train", "--config", cfg, "--data", momentum_csv, "--model", tmp_path / "m.json", *flags],
                       capsys)
    assert code == 0, err
    split = json.loads((tmp_path / "split.json").read_text())
    assert split["train"]["end"] < "2019-04-01"
    outputs = []
    for name in ("x", "y"):
        code, _, err = run(["backtest", "--model", tmp_path / "m.json", "--data", momentum_csv,
                            "--out", tmp_path / name, *flags], capsys)
        assert code == 0, err
        outputs.append(sorted(p.name for p in (tmp_path / name).iterdir()))
    assert outputs[0] == ["period_1.json", "period_1_curve.csv", "period_2.json", "period_2_curve.csv",
                          "period_3.json", "period_3_curve.csv"]
    for f in outputs[0]:
        assert (tmp_path / "x" / f).read_bytes() == (tmp_path / "y" / f).read_bytes()
    first = json.loads((tmp_path / "x/period_1.json").read_text())
    assert first["start"] == "2019-04-01" and len(first["profits"]) == 30


def test_selftest_passes(capsys):
    code, out, _ = run(["selftest"], capsys)
    assert code == 0
    assert out.count("PASS") == 4
