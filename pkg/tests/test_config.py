import json
import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from prandtl_robin.config import EXPERIMENTS, from_dict, load_config
from prandtl_robin.errors import ConfigError, GridError


def write(tmp_path, obj, name="cfg.json"):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return p


def test_defaults_filled_and_logged(tmp_path, caplog):
    with caplog.at_level(logging.INFO, logger="prandtl_robin.config"):
        cfg = load_config(write(tmp_path, {}))
    assert cfg.shear.beta == 1.0 and cfg.shear.sigma == 1.0
    assert cfg.iteration.ell == 1.0 and cfg.grid.t_max == 0.5 and cfg.grid.n_y == 400
    assert cfg.iteration.theta0 == 10.0 and cfg.iteration.epsilon == 1e-2 and cfg.iteration.k0 == 2
    assert "default grid.n_y = 400" in caplog.text


def test_theta0_below_band_is_validation_error(tmp_path):
    with pytest.raises(ConfigError, match="theta0"):
        load_config(write(tmp_path, {"iteration": {"theta0": 1}}))


def test_too_few_y_nodes_is_structural_error(tmp_path):
    with pytest.raises(GridError, match="n_y"):
        load_config(write(tmp_path, {"grid": {"n_y": 8}, "iteration": {"k0": 3}}))


@given(st.text(min_size=1, max_size=12).filter(lambda s: s not in {"grid", "shear", "iteration", "study",
                                                                     "experiment", "output_dir", "seed"}))
def test_unknown_top_level_keys_rejected(key):
    with pytest.raises(ConfigError, match="unknown"):
        from_dict({key: 1})


def test_unknown_section_key_rejected():
    with pytest.raises(ConfigError, match="grid: bogus"):
        from_dict({"grid": {"bogus": 1}})


def test_type_errors():
    with pytest.raises(ConfigError, match="expected int"):
        from_dict({"grid": {"n_y": 400.5}})
    with pytest.raises(ConfigError):
        from_dict({"shear": {"beta": "one"}})
    assert from_dict({"shear": {"beta": 2}}).shear.beta == 2.0


def test_bad_values():
    with pytest.raises(ConfigError):
        from_dict({"shear": {"beta": 0}})
    with pytest.raises(ConfigError):
        from_dict({"shear": {"family": "parabolic"}})
    with pytest.raises(ConfigError):
        from_dict({"experiment": "warp"})


def test_parse_error_reports_position(tmp_path):
    with pytest.raises(ConfigError, match="line 1, column"):
        load_config(write(tmp_path, "{\"grid\": }"))
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")


def test_family_defaults_per_experiment():
    cfg = from_dict({})
    assert cfg.shear.init("shear").family == "gaussian-deficit"
    assert cfg.shear.init("nash-moser").family == "tanh"
    assert set(EXPERIMENTS) == {"shear", "mollify", "linearized-mms", "nash-moser", "stability",
                                "dirichlet-limit", "norms-audit"}
