"""Tests for config parsing, validation, and serialization."""

import json

import numpy as np
import pytest

from otbary.config import (EXPERIMENT_KINDS, build_config, config_to_dict,
                           default_config, parse_config)
from otbary.errors import ConfigError


def write(tmp_path, text, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


MINIMAL = """
[experiment]
kind = gaussian-bench
"""


def test_minimal_config_parses_with_defaults(tmp_path):
    cfg = parse_config(write(tmp_path, MINIMAL))
    assert cfg.kind == "gaussian-bench"
    assert cfg.dimension == 2
    assert cfg.n_inputs == 4
    assert cfg.seed == 0
    assert cfg.train.outer_iterations == 100
    assert cfg.train.lr_decay_every == 1000


def test_all_kinds_have_a_valid_default():
    for kind in EXPERIMENT_KINDS:
        if kind == "inverse-maps":
            cfg = default_config(kind, run_dir="somewhere")
        else:
            cfg = default_config(kind)
        assert cfg.kind == kind


def test_sections_and_values_parse(tmp_path):
    cfg = parse_config(write(tmp_path, """
[experiment]
kind = uniform-bench
dimension = 8
n_inputs = 3
weights = 0.2, 0.3 0.5
seed = 17
output_dir = runs/u8
export_samples = 128

[train]
outer_iterations = 4
batch_size = 64
lr_generator = 5e-5
reset_solver_moments = yes
"""))
    assert cfg.dimension == 8
    assert cfg.weights == (0.2, 0.3, 0.5)
    assert cfg.train.batch_size == 64
    assert cfg.train.lr_generator == 5e-5
    assert cfg.train.reset_solver_moments is True


def test_inline_comments_are_stripped(tmp_path):
    cfg = parse_config(write(tmp_path, """
[experiment]
kind = gaussian-bench
dimension = 4    # benchmark dimension
seed = 9         ; run seed
"""))
    assert cfg.dimension == 4 and cfg.seed == 9


def test_unknown_section_rejected(tmp_path):
    with pytest.raises(ConfigError, match=r"unknown section \[extras\]"):
        parse_config(write(tmp_path, MINIMAL + "\n[extras]\nx = 1\n"))


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown key experiment.bogus"):
        parse_config(write(tmp_path, MINIMAL + "bogus = 1\n"))


def test_bad_value_type_rejected(tmp_path):
    with pytest.raises(ConfigError, match="bad value for experiment.dimension"):
        parse_config(write(tmp_path, "[experiment]\nkind = gaussian-bench\ndimension = two\n"))


def test_missing_kind_rejected(tmp_path):
    with pytest.raises(ConfigError, match="experiment.kind"):
        parse_config(write(tmp_path, "[experiment]\ndimension = 2\n"))


def test_unknown_kind_rejected():
    with pytest.raises(ConfigError, match="experiment.kind"):
        build_config({"kind": "mystery"})


def test_malformed_ini_rejected(tmp_path):
    with pytest.raises(ConfigError, match="malformed config"):
        parse_config(write(tmp_path, "kind = gaussian-bench\n"))


def test_missing_file_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        parse_config(tmp_path / "nope.ini")


@pytest.mark.parametrize("field,value", [
    ("dimension", "0"),
    ("seed", "-1"),
    ("export_samples", "-5"),
    ("shift_scale", "-0.1"),
])
def test_out_of_range_experiment_fields(tmp_path, field, value):
    with pytest.raises(ConfigError):
        parse_config(write(tmp_path, MINIMAL + f"{field} = {value}\n"))


def test_bad_train_section_rejected(tmp_path):
    with pytest.raises(ConfigError, match="bad .train. section"):
        parse_config(write(tmp_path, MINIMAL + "\n[train]\nbatch_size = 0\n"))


def test_default_weights_for_four_member_bench():
    cfg = default_config("gaussian-bench")
    np.testing.assert_allclose(cfg.resolved_weights(), [0.1, 0.2, 0.3, 0.4])


def test_default_weights_uniform_otherwise():
    cfg = default_config("gaussian-bench", n_inputs=5)
    np.testing.assert_allclose(cfg.resolved_weights(), np.full(5, 0.2))


def test_explicit_weights_take_precedence():
    cfg = default_config("gaussian-bench", weights=(0.5, 0.25, 0.125, 0.125))
    np.testing.assert_allclose(cfg.resolved_weights(), [0.5, 0.25, 0.125, 0.125])


def test_weights_must_sum_to_one():
    with pytest.raises(ConfigError, match="weights"):
        default_config("gaussian-bench", weights=(0.5, 0.5, 0.5, 0.5))


def test_weights_length_must_match_inputs():
    with pytest.raises(ConfigError, match="weights"):
        default_config("gaussian-bench", n_inputs=3, weights=(0.5, 0.5))


def test_toy2d_requires_dimension_two():
    with pytest.raises(ConfigError, match="dimension"):
        default_config("toy2d", dimension=3)


def test_toy2d_input_count_follows_shapes():
    cfg = default_config("toy2d", toy_shapes=("rectangle",))
    assert cfg.n_inputs == 1


def test_toy2d_unknown_shape_rejected():
    with pytest.raises(ConfigError, match="shape"):
        default_config("toy2d", toy_shapes=("blob",))


def test_congruent_kinds_derive_member_count():
    cfg = default_config("win-train", n_functions=3)
    assert cfg.n_inputs == 4


def test_congruent_kinds_reject_explicit_weights():
    with pytest.raises(ConfigError, match="weights"):
        default_config("congruent-dataset", weights=(0.5, 0.25, 0.25))


def test_congruent_family_validated():
    with pytest.raises(ConfigError, match="family"):
        default_config("congruent-dataset", family="cubic")


def test_congruent_betas_length_checked():
    with pytest.raises(ConfigError, match="betas"):
        default_config("congruent-dataset", n_functions=2, betas=(0.5,))


def test_inverse_maps_requires_run_dir():
    with pytest.raises(ConfigError, match="run_dir"):
        default_config("inverse-maps")


def test_inverse_rounds_positive():
    with pytest.raises(ConfigError, match="rounds"):
        default_config("inverse-maps", run_dir="x", rounds=0)


def test_default_config_rejects_unknown_overrides():
    with pytest.raises(ConfigError, match="unknown config keys"):
        default_config("gaussian-bench", typo_field=3)


def test_config_to_dict_round_trips():
    cfg = default_config("win-train", dimension=3, seed=5, n_functions=2,
                         family="quadratic", outer_iterations=7)
    payload = config_to_dict(cfg)
    json.dumps(payload)  # must be JSON-serializable
    rebuilt = build_config(
        {k: payload[k] for k in ("kind", "dimension", "n_inputs", "weights",
                                 "seed", "output_dir", "shift_scale",
                                 "toy_shapes", "export_samples")},
        payload["train"], payload["congruent"], payload["inverse"])
    assert rebuilt.kind == cfg.kind
    assert rebuilt.dimension == cfg.dimension
    assert rebuilt.train == cfg.train
    assert rebuilt.congruent.family == "quadratic"


def test_solver_settings_validated():
    with pytest.raises(ConfigError):
        default_config("congruent-dataset", solver_lr=-1.0)
