import json

import numpy as np
import pytest

from geeopt.model import ScenarioError
from geeopt.scenario_gen import (
    GenConfig,
    ScenarioFormatError,
    dbm_to_watt,
    dbw_to_watt,
    from_dict,
    generate,
    load,
    save,
    to_dict,
)


class TestUnits:
    def test_dbw(self):
        np.testing.assert_allclose(dbw_to_watt(-10.0), 0.1, rtol=1e-12)

    def test_dbm(self):
        np.testing.assert_allclose(dbm_to_watt(30.0), 1.0, rtol=1e-12)


class TestGenerate:
    def test_noise_power(self):
        s = generate(GenConfig())
        expected = 10 ** ((-173 - 30) / 10) * 10930
        np.testing.assert_allclose(s.noise, expected, rtol=1e-12)
        np.testing.assert_allclose(s.noise, 5.48e-17, rtol=1e-3)

    def test_self_interference_ratio(self):
        s = generate(GenConfig(xi_ratio=0.01))
        np.testing.assert_array_equal(s.xi, 0.01 * s.alpha)

    def test_shapes_and_defaults(self):
        s = generate(GenConfig())
        assert (s.K, s.N) == (12, 4)
        np.testing.assert_allclose(s.p_max, 0.1)
        np.testing.assert_allclose(s.p_c, 12 * 0.01)
        assert np.all(s.alpha > 0)

    def test_deterministic_in_seed(self):
        assert generate(GenConfig(seed=3)) == generate(GenConfig(seed=3))
        assert not np.array_equal(generate(GenConfig(seed=3)).alpha, generate(GenConfig(seed=4)).alpha)

    def test_same_draws_across_power_levels(self):
        a = generate(GenConfig(seed=9, p_max_dbw=-30))
        b = generate(GenConfig(seed=9, p_max_dbw=10))
        np.testing.assert_array_equal(a.alpha, b.alpha)

    def test_single_center_topology(self):
        s = generate(GenConfig(topology="single-center", K=5, N=2))
        assert (s.K, s.N) == (5, 2)

    def test_bad_config(self):
        with pytest.raises(ValueError):
            GenConfig(K=0)
        with pytest.raises(ValueError, match="unknown"):
            GenConfig.from_dict({"K": 2, "bogus": 1})


class TestSerialization:
    def test_round_trip(self, tmp_path):
        s = generate(GenConfig(K=3, N=2, seed=1))
        path = tmp_path / "s.json"
        save(s, path)
        assert load(path) == s
        assert from_dict(json.loads(json.dumps(to_dict(s)))) == s

    def test_missing_field(self):
        d = to_dict(generate(GenConfig(K=2, N=2)))
        del d["alpha"]
        with pytest.raises(ScenarioFormatError, match="missing field alpha") as exc:
            from_dict(d)
        assert exc.value.field == "alpha"

    def test_negative_gain(self):
        d = to_dict(generate(GenConfig(K=2, N=2)))
        d["alpha"][0][0] = -1.0
        with pytest.raises(ScenarioError, match="non-negative"):
            from_dict(d)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{")
        with pytest.raises(ScenarioFormatError):
            load(path)
