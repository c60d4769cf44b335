import json

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from palm.datastreams import (
    BOX_JENKINS,
    SP500,
    DatasetError,
    DatasetSpec,
    LagInput,
    REAL_WORLD,
    STANDINS,
    build_dataset,
    csv_env_var,
    gen_mackey_glass,
    gen_nonlinear_sysid,
    load_csv_stream,
    load_real_world,
    mackey_glass_series,
    read_csv_columns,
)


@pytest.fixture(scope="module")
def mg():
    return gen_mackey_glass()


@pytest.fixture(scope="module")
def sysid():
    return gen_nonlinear_sysid()


def write_csv(path, header, rows):
    path.write_text(",".join(header) + "\n" + "\n".join(",".join(map(str, r)) for r in rows) + "\n")
    return path


class TestMackeyGlass:
    def test_split_sizes(self, mg):
        assert len(mg.y_train) == 3000 and len(mg.y_test) == 500
        assert (mg.k_train[0], mg.k_train[-1], mg.k_test[0], mg.k_test[-1]) == (201, 3200, 5001, 5500)

    def test_lag_audit(self, mg, rng):
        y = mackey_glass_series(5500 + 85)
        for X, t, k in ((mg.X_train, mg.y_train, mg.k_train), (mg.X_test, mg.y_test, mg.k_test)):
            for i in rng.choice(len(k), 20, replace=False):
                assert X[i].tolist() == [y[k[i]], y[k[i] - 6], y[k[i] - 12], y[k[i] - 18]]
                assert t[i] == y[k[i] + 85]

    def test_deterministic(self, mg):
        again = gen_mackey_glass()
        assert np.array_equal(again.X_train, mg.X_train) and np.array_equal(again.y_test, mg.y_test)

    def test_undelayed_equation_matches_adaptive_integrator(self):
        a, b, h, n = 0.1, 0.2, 0.1, 1000
        y = mackey_glass_series(n, tau=0, h=h)
        ref = solve_ivp(lambda t, v: b * v / (1 + v ** 10) - a * v, (0, n * h), [1.2],
                        t_eval=np.arange(n + 1) * h, rtol=1e-12, atol=1e-12, method="DOP853")
        np.testing.assert_allclose(y, ref.y[0], atol=1e-6, rtol=0)

    def test_chaotic_regime_amplitude(self, mg):
        assert 0.2 < mg.y_train.std() < 0.25
        assert 0.2 < mg.y_train.min() and mg.y_train.max() < 1.5

    def test_tau_must_fit_grid(self):
        with pytest.raises(ValueError):
            mackey_glass_series(10, tau=17, h=0.3)


class TestNonlinearSysid:
    def test_split_sizes(self, sysid):
        assert len(sysid.y_train) == 50000 and len(sysid.y_test) == 200
        assert sysid.n_inputs == 2

    def test_unit_input_step(self, sysid):
        i = int(np.flatnonzero(sysid.k_train == 25)[0])
        y25, u25 = sysid.X_train[i]
        assert u25 == pytest.approx(1.0, abs=1e-15)
        assert sysid.y_train[i] == pytest.approx(y25 / (1 + y25 ** 2) + 1.0, abs=1e-15)

    def test_bounded(self, sysid):
        assert np.max(np.abs(np.concatenate([sysid.y_train, sysid.y_test]))) <= 2.0

    def test_full_layout(self):
        ds = gen_nonlinear_sysid(n_train=300, n_test=20, layout="full")
        assert ds.n_inputs == 12
        # consecutive samples shift the output lags by one
        np.testing.assert_array_equal(ds.X_train[1, 1:11], ds.X_train[0, 0:10])

    def test_unknown_layout(self):
        with pytest.raises(DatasetError):
            gen_nonlinear_sysid(n_train=10, n_test=5, layout="wide")


class TestCsv:
    def test_toy_lag_one(self, tmp_path):
        path = write_csv(tmp_path / "toy.csv", ["u", "y"], [[1, 10], [2, 20], [3, 30]])
        spec = DatasetSpec("toy", [LagInput("u", 1)], "y", train=1, test=1)
        ds = load_csv_stream(path, spec)
        assert ds.X_train.tolist() == [[1.0]] and ds.y_train.tolist() == [20.0]
        assert ds.X_test.tolist() == [[2.0]] and ds.y_test.tolist() == [30.0]

    def test_missing_column(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", ["u", "z"], [[1, 2]] * 5)
        with pytest.raises(DatasetError, match="'y'"):
            load_csv_stream(path, BOX_JENKINS)

    def test_non_numeric(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", ["u", "y"], [[1, 2], ["x", 3]])
        with pytest.raises(DatasetError, match="non-numeric"):
            read_csv_columns(path)

    def test_too_few_rows(self, tmp_path):
        path = write_csv(tmp_path / "a.csv", ["u", "y"], [[1, 2]] * 4)
        with pytest.raises(DatasetError, match="too few"):
            load_csv_stream(path, BOX_JENKINS)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            read_csv_columns(tmp_path / "nope.csv")

    def test_box_jenkins_protocol(self, tmp_path):
        raw = STANDINS["box-jenkins"]()
        path = write_csv(tmp_path / "bj.csv", ["u", "y"], zip(raw["u"], raw["y"]))
        ds = load_real_world("box-jenkins", path)
        assert len(ds.y_train) == 200 and len(ds.y_test) == 90
        # min-max scaling fitted on the training rows only
        assert ds.y_train.min() >= 0.0 and ds.y_train.max() <= 1.0
        lo, hi = raw["y"][:205].min(), raw["y"][:205].max()
        for i in (0, 57, 199):
            t = int(ds.k_train[i]) - 1
            assert ds.X_train[i, 1] == pytest.approx((raw["y"][t - 1] - lo) / (hi - lo), abs=1e-12)
        assert ds.feedback_slots == ((1, 1),)

    def test_path_from_environment(self, tmp_path, monkeypatch):
        raw = STANDINS["box-jenkins"]()
        path = write_csv(tmp_path / "bj.csv", ["u", "y"], zip(raw["u"], raw["y"]))
        monkeypatch.setenv(csv_env_var("box-jenkins"), str(path))
        assert len(load_real_world("box-jenkins").y_test) == 90

    def test_unavailable_without_path(self, monkeypatch):
        monkeypatch.delenv(csv_env_var("box-jenkins"), raising=False)
        with pytest.raises(DatasetError, match="PALM_BOX_JENKINS_CSV"):
            load_real_world("box-jenkins")


class TestSpecs:
    def test_json_round_trip(self, tmp_path):
        d = SP500.to_dict()
        assert DatasetSpec.from_dict(d) == SP500
        (tmp_path / "spec.json").write_text(json.dumps({**d, "path": "data.csv"}))
        spec = DatasetSpec.from_json(tmp_path / "spec.json")
        assert spec.path == str(tmp_path / "data.csv")

    def test_missing_field(self):
        with pytest.raises(DatasetError, match="inputs"):
            DatasetSpec.from_dict({"name": "x", "target": "y"})

    def test_fractional_split(self):
        series = {"y": np.arange(100.0), "u": np.arange(100.0)}
        spec = DatasetSpec("q", [LagInput("y", 6), LagInput("u", 0)], "y", train=0.6)
        ds = build_dataset(series, spec)
        assert len(ds.y_train) == round(0.6 * 94) and len(ds.y_train) + len(ds.y_test) == 94

    def test_mirror_symmetry(self):
        spec = DatasetSpec("m", [LagInput("y", 0)], "y", train=7, mirror=True)
        ds = build_dataset({"y": np.array([3.0, 1.0, 4.0, 1.5, 9.0])}, spec)
        y = np.concatenate([ds.y_train, ds.y_test])
        assert len(y) == 10 and np.array_equal(y, y[::-1])

    def test_sp500_layout(self):
        ds = load_real_world("sp500", standin=True)
        assert len(ds.y_train) == 14893
        y = np.concatenate([ds.y_train, ds.y_test])
        # targets are s[5..], s is mirror-symmetric over 29786 rows
        j = np.arange(0, 29776, 997)
        np.testing.assert_array_equal(y[j], y[29775 - j])

    @pytest.mark.parametrize("name", sorted(STANDINS))
    def test_standins_deterministic(self, name):
        a, b = load_real_world(name, standin=True), load_real_world(name, standin=True)
        assert a.name == f"{name}-standin"
        assert np.array_equal(a.X_train, b.X_train) and np.array_equal(a.y_test, b.y_test)

    @pytest.mark.parametrize("name", sorted(STANDINS))
    def test_lag_audit(self, name, rng):
        spec = REAL_WORLD[name]
        ds = load_real_world(name, standin=True)
        X = np.vstack([ds.X_train, ds.X_test])
        y = np.concatenate([ds.y_train, ds.y_test])
        t = np.concatenate([ds.k_train, ds.k_test]) - 1
        raw = STANDINS[name]()
        if spec.mirror:
            raw = {c: np.concatenate([v, v[::-1]]) for c, v in raw.items()}
        last = t[len(ds.y_train) - 1] + spec.lead
        for i in rng.choice(len(y), 100, replace=False):
            for j, inp in enumerate(spec.inputs):
                col = raw[inp.column]
                lo, hi = col[: last + 1].min(), col[: last + 1].max()
                assert X[i, j] == pytest.approx((col[t[i] - inp.lag] - lo) / (hi - lo), abs=1e-12)
            col = raw[spec.target]
            lo, hi = col[: last + 1].min(), col[: last + 1].max()
            assert y[i] == pytest.approx((col[t[i] + spec.lead] - lo) / (hi - lo), abs=1e-12)

    def test_write_csv_round_trip(self, tmp_path, mg):
        path = tmp_path / "mg.csv"
        mg.write_csv(path)
        lines = path.read_text().splitlines()
        assert len(lines) == 3501
        assert lines[0] == "k,split,y(k),y(k-6),y(k-12),y(k-18),target"
        first = lines[1].split(",")
        assert int(first[0]) == 201 and first[1] == "train"
        assert float(first[-1]) == mg.y_train[0]
