import json

import pytest

from pilir import config as cf


def test_defaults_per_problem():
    c = cf.resolve({"problem": "helmholtz2d"})
    assert c.model == "pilir" and c.train.lr_max == 1e-2 and c.train.n_ic == 0
    assert c.model_params["resolution"] == 16 and c.model_params["num_grids"] == 1
    assert c.problem_params == {"a": [10.0, 10.0], "k": 1.0}
    assert c.seeds == [100, 200, 300, 400, 500] and c.train.epochs == cf.DESK_EPOCHS
    ac = cf.resolve({"problem": "allen_cahn", "model": "mlp_pinn"})
    assert ac.model_params == {"hidden_layers": [128] * 6}
    h3 = cf.resolve({"problem": "helmholtz3d"})
    assert h3.train.n_interior == 50_000
    assert cf.resolve({"problem": "convection"}).model_params["num_grids"] == 16


def test_overrides_and_round_trip():
    raw = {"problem": "convection", "problem_params": {"beta": 10}, "epochs": 5, "seeds": [1, 2],
           "model_params": {"resolution": 8, "weighting": "multilinear"}, "n_interior": 123}
    c = cf.resolve(raw)
    assert c.train.n_interior == 123 and c.problem_params["beta"] == 10
    again = cf.loads(c.dumps())
    assert again.to_dict() == c.to_dict()
    assert c.build_problem().params["beta"] == 10.0
    m = c.build_model(1)
    assert m.grid.resolution == (8, 8) and m.weighting == "multilinear"


@pytest.mark.parametrize("raw", [
    {"problem": "convection", "bogus": 1},
    {"problem": "nope"},
    {"model": "pilir"},
    {"problem": "convection", "model": "transformer"},
    {"problem": "convection", "model_params": {"depth": 3}},
    {"problem": "convection", "model_params": {"weighting": "spline"}},
    {"problem": "convection", "seeds": []},
    {"problem": "convection", "lr_max": -1.0},
    {"problem": "convection", "problem_params": {"gamma": 1}},
])
def test_invalid_configs(raw):
    with pytest.raises(cf.ConfigError):
        cf.resolve(raw)


def test_load_from_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"problem": "reaction_diffusion", "model": "interp_grid"}))
    c = cf.load(p)
    assert c.model_params["num_grids"] == 16 and c.experiment == "reaction_diffusion-interp_grid"
    p.write_text("{not json")
    with pytest.raises(cf.ConfigError):
        cf.load(p)
