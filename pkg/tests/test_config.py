import json
from pathlib import Path

import pytest
import yaml
from hypothesis import given, settings, strategies as st

from discrete_langevin.config import ConfigError, load_config, parse_config, validate_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"
BASE = {
    "experiment": "IsingSample",
    "model": {"kind": "ising", "rows": 3, "cols": 3, "a": 0.1, "b": 0.2},
    "samplers": [{"kind": "dmala", "alpha": 0.4}, {"kind": "dula", "alpha": [0.1, 0.2]}],
    "seeds": [0, 1],
    "n_steps": 100,
}


def errors_of(data):
    with pytest.raises(ConfigError) as info:
        parse_config(data)
    return info.value.errors


@pytest.mark.parametrize("path", sorted(p for p in CONFIG_DIR.glob("*.yaml") if "oracle" not in p.name),
                         ids=lambda p: p.stem)
def test_bundled_configs_are_valid_and_roundtrip(path):
    cfg = load_config(path)
    again = validate_config(cfg.canonical_text())
    assert again == cfg
    assert again.canonical_text() == cfg.canonical_text()
    assert again.semantic_hash() == cfg.semantic_hash()


def test_defaults():
    cfg = parse_config(BASE)
    assert cfg.name == "IsingSample" and cfg.output_dir == "runs/IsingSample"
    assert cfg.effective_burn_in == 10 and cfg.n_chains == 1
    assert cfg.option("truth") == "auto"
    assert cfg.samplers[1].alphas == [0.1, 0.2]
    assert cfg.samplers[1].display == "dula"


def test_json_and_yaml_agree():
    assert validate_config(json.dumps(BASE)) == validate_config(yaml.safe_dump(BASE))


def test_every_error_is_reported():
    bad = {
        "experiment": "IsingSample",
        "model": {"kind": "ising", "rows": 0, "a": "x", "colour": 1},
        "samplers": [{"kind": "dmala", "alpha": 0}, {"kind": "hmc"}, {"kind": "dula"}],
        "seeds": [-1],
        "n_steps": 10,
        "burn_in": 10,
        "thin": 0,
        "extra": True,
        "options": {"truth": "guess", "nope": 1},
    }
    errs = errors_of(bad)
    expected = [
        "extra: unknown top-level key",
        "model.cols: required for model 'ising'",
        "model.b: required for model 'ising'",
        "model.colour: unknown key for model 'ising'",
        "model.a: expected a number, got 'x'",
        "model.rows: expected a positive integer, got 0",
        "samplers[0].alpha: stepsize must be positive, got 0",
        "samplers[1].kind: unknown sampler 'hmc'",
        "samplers[2].alpha: required for dula",
        "seeds: every seed must be a non-negative integer",
        "thin: expected an integer >= 1, got 0",
        "burn_in: must be smaller than n_steps",
        "options.nope: unknown option for IsingSample",
        "options.truth: expected one of auto, exact, reference",
    ]
    for e in expected:
        assert any(got.startswith(e) for got in errs), (e, errs)


def test_valid_kinds_are_listed():
    errs = errors_of({**BASE, "samplers": [{"kind": "hmc"}]})
    assert "valid kinds: dula, dmala, gibbs1, lb1, gradflip1, rbm_block_gibbs" in errs[0]


def test_experiment_specific_restrictions():
    errs = errors_of({**BASE, "experiment": "RbmSample"})
    assert any(e.startswith("model.kind: RbmSample needs one of rbm") for e in errs)
    errs = errors_of({**BASE, "samplers": [{"kind": "rbm_block_gibbs"}]})
    assert any("not usable in IsingSample" in e for e in errs)


def test_syntax_errors_carry_line_numbers():
    with pytest.raises(ConfigError) as info:
        validate_config("experiment: IsingSample\nmodel: [unclosed\n")
    assert info.value.errors[0].startswith("line ")
    with pytest.raises(ConfigError) as info:
        validate_config('{"experiment": ,}')
    assert info.value.errors[0].startswith("line 1")
    with pytest.raises(ConfigError):
        validate_config("- just\n- a list\n")


def test_hash_ignores_name_output_and_spelled_out_defaults():
    a = parse_config(BASE)
    b = parse_config({**BASE, "name": "other", "output_dir": "/elsewhere", "burn_in": 10,
                      "model": {**BASE["model"], "periodic": False, "encoding": "spin"},
                      "options": {"truth": "auto"}})
    assert a.semantic_hash() == b.semantic_hash()
    c = parse_config({**BASE, "model": {**BASE["model"], "a": 1}})
    d = parse_config({**BASE, "model": {**BASE["model"], "a": 1.0}})
    assert c.semantic_hash() == d.semantic_hash()


@settings(max_examples=30)
@given(st.integers(1, 10**6), st.lists(st.integers(0, 2**31), min_size=1, max_size=4),
       st.floats(1e-3, 10.0))
def test_hash_changes_with_results_affecting_fields(n_steps, seeds, alpha):
    data = {**BASE, "n_steps": n_steps, "seeds": seeds, "samplers": [{"kind": "dmala", "alpha": alpha}]}
    cfg = parse_config(data)
    assert validate_config(cfg.canonical_text()) == cfg
    other = parse_config({**data, "n_steps": n_steps + 1})
    assert other.semantic_hash() != cfg.semantic_hash()
