import json

import numpy as np
import pytest

from palm.engine import ConfigError, CountingStream, ModelConfig, Palm, SnapshotError, predict_stream, train_stream
from palm.inference import DimensionError, EmptyRuleBaseError, StreamSample

from .conftest import linear_stream

CONFIGS = [("type1", "local"), ("type1", "global"), ("type2", "local"), ("type2", "global")]


def _cfg(order="type1", learning="local", **kw):
    base = dict(order=order, learning=learning, gamma=75.0, b1=0.035, b2=0.01)
    base.update(kw)
    return ModelConfig(**base)


@pytest.fixture(scope="module")
def trained(request):
    from palm.datastreams import gen_mackey_glass

    ds = gen_mackey_glass(train=(201, 700), test=(5001, 5100))
    out = {}
    for order, learning in CONFIGS:
        model = Palm(_cfg(order, learning))
        out[order, learning] = (model, model.train(ds.train_stream()), ds)
    return out


class TestConfig:
    def test_gamma_range_named(self):
        with pytest.raises(ConfigError, match=r"gamma=500.0 outside \[1, 100\]"):
            Palm(_cfg(gamma=500.0))

    def test_force_overrides_range(self):
        assert Palm(_cfg(gamma=500.0), force=True).config.gamma == 500.0

    def test_recurrent_needs_slot(self):
        with pytest.raises(ConfigError, match="lagged-output"):
            Palm(_cfg(recurrent=True))

    @pytest.mark.parametrize("field,value", [("order", "type3"), ("learning", "both"), ("beta", -1.0),
                                             ("coherence", "window"), ("b2", 0.5)])
    def test_invalid_fields(self, field, value):
        with pytest.raises(ConfigError, match=field):
            Palm(_cfg(**{field: value}))

    def test_dict_round_trip(self):
        cfg = _cfg("type2", "global", recurrent=True, feedback_slots=[(1, 1)])
        assert ModelConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="unknown"):
            ModelConfig.from_dict({"gama": 3})


class TestTrace:
    @pytest.mark.parametrize("combo", CONFIGS)
    def test_events_match_rule_count_changes(self, trained, combo):
        _, trace, _ = trained[combo]
        counts = np.concatenate(([0], trace.rule_count))
        for rec, delta in zip(trace.records, np.diff(counts)):
            expected = {"init": 1, "grow": 1, "merge": -1, "none": 0}[rec.event]
            assert delta == expected
        assert trace.events.count("init") == 1 and trace.records[0].event == "init"

    @pytest.mark.parametrize("combo", CONFIGS)
    def test_length_equals_samples(self, trained, combo):
        _, trace, ds = trained[combo]
        assert len(trace) == len(ds.y_train)

    @pytest.mark.parametrize("combo", [c for c in CONFIGS if c[1] == "global"])
    def test_no_merge_in_global_mode(self, trained, combo):
        assert "merge" not in trained[combo][1].events

    def test_first_prediction_unscored(self, trained):
        _, trace, _ = trained["type1", "local"]
        assert not trace.predicted[0] and trace.predicted[1:].all()


class TestParameterLaw:
    @pytest.mark.parametrize("combo", CONFIGS)
    def test_after_every_event(self, mg_small, combo):
        model = Palm(_cfg(*combo))
        factor = 2 if combo[0] == "type2" else 1
        for s in list(mg_small.train_stream())[:300]:
            rec = model.learn_one(s)
            assert model.param_count() == factor * rec.rule_count * (model.n + 1)
        if combo[1] == "global":
            assert all(c.shape == (model.param_count() // factor,) * 2 for c in model.global_cov)


class TestDeterminismAndSinglePass:
    def test_replay_is_identical(self, mg_small):
        a = Palm(_cfg("type2", "local")).train(mg_small.train_stream())
        b = Palm(_cfg("type2", "local")).train(mg_small.train_stream())
        assert a == b

    def test_each_sample_drawn_once(self, mg_small):
        stream = CountingStream(mg_small.train_stream())
        trace = Palm(_cfg()).train(stream)
        assert stream.drawn == len(trace) == len(mg_small.y_train)

    def test_accepts_one_shot_generator(self, rng):
        gen = (s for s in linear_stream([0.1, 1.0], 50, rng))
        model, trace = train_stream(_cfg(), gen)
        assert len(trace) == 50
        assert next(gen, None) is None


class TestPredict:
    def test_empty_model(self):
        with pytest.raises(EmptyRuleBaseError):
            Palm(_cfg()).predict([StreamSample.from_inputs([1.0], 0.0)])

    def test_single_rule_returns_consequent(self, rng):
        model = Palm(_cfg(b1=0.1, b2=0.01))
        model.train(linear_stream([0.5, -0.2, 0.8], 100, rng, noise=0.01))
        assert model.n_rules == 1
        test = linear_stream([0.5, -0.2, 0.8], 10, rng)
        trace = predict_stream(model, test)
        w = model.rb.rules[0].omega
        np.testing.assert_allclose(trace.y_hat, [s.x_e @ w for s in test], rtol=1e-14)

    def test_parameters_frozen(self, trained):
        model, _, ds = trained["type2", "local"]
        before = model.snapshot()
        model.predict(ds.test_stream())
        assert model.snapshot() == before

    def test_recurrent_seeds_with_last_training_prediction(self, rng):
        cfg = _cfg(recurrent=True, feedback_slots=[(0, 1)])
        model = Palm(cfg)
        model.train(linear_stream([0.1, 0.9, 0.2], 80, rng, noise=0.05))
        first = linear_stream([0.1, 0.9, 0.2], 3, rng)
        trace = model.predict(first)
        x_e = first[0].x_e.copy()
        x_e[1] = model.last_prediction
        expected = model.predict_one(StreamSample(x_e, 0.0), y_ref=model.last_prediction)
        assert trace.y_hat[0] == expected
        # the second sample sees the first prediction in its feedback slot
        x_e = first[1].x_e.copy()
        x_e[1] = trace.y_hat[0]
        assert trace.y_hat[1] == model.predict_one(StreamSample(x_e, 0.0), y_ref=trace.y_hat[0])

    def test_dimension_mismatch(self, trained):
        model = trained["type1", "local"][0]
        with pytest.raises(DimensionError):
            model.predict([StreamSample.from_inputs([1.0, 2.0], 0.0)])


class TestSnapshot:
    @pytest.mark.parametrize("combo", CONFIGS)
    def test_idempotent_bytes(self, trained, combo):
        text = trained[combo][0].snapshot()
        assert Palm.restore(text).snapshot() == text

    @pytest.mark.parametrize("combo", CONFIGS)
    def test_continuation_bit_exact(self, mg_small, combo):
        samples = list(mg_small.train_stream())
        whole = Palm(_cfg(*combo))
        t_whole = whole.train(samples)
        part = Palm(_cfg(*combo))
        t_a = part.train(samples[:250])
        resumed = Palm.restore(part.snapshot())
        t_b = resumed.train(samples[250:])
        assert t_a.records + t_b.records == t_whole.records
        assert resumed.snapshot() == whole.snapshot()
        assert np.array_equal(whole.predict(mg_small.test_stream()).y_hat,
                              resumed.predict(mg_small.test_stream()).y_hat)

    def test_version_mismatch(self, trained):
        payload = json.loads(trained["type1", "local"][0].snapshot())
        payload["version"] = 99
        with pytest.raises(SnapshotError, match="version"):
            Palm.restore(json.dumps(payload))

    @pytest.mark.parametrize("text", ["{", "[]", '{"format": "palm-snapshot", "version": 1}'])
    def test_corrupt(self, text):
        with pytest.raises(SnapshotError):
            Palm.restore(text)

    def test_config_mismatch(self, trained):
        with pytest.raises(SnapshotError, match="type1/local"):
            Palm.restore(trained["type1", "local"][0].snapshot(), config=_cfg("type2", "global"))
