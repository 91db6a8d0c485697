import numpy as np
import pytest

from otbary.errors import ValidationError
from otbary.rng import as_generator, stream


def test_same_name_same_stream():
    a = stream(7, "solver", 2).standard_normal(100)
    b = stream(7, "solver", 2).standard_normal(100)
    assert np.array_equal(a, b)


def test_distinct_labels_distinct_streams():
    a = stream(7, "solver", 0).standard_normal(100)
    b = stream(7, "solver", 1).standard_normal(100)
    c = stream(7, "eval").standard_normal(100)
    assert not np.allclose(a, b)
    assert not np.allclose(a, c)


def test_distinct_seeds_distinct_streams():
    a = stream(1, "x").standard_normal(50)
    b = stream(2, "x").standard_normal(50)
    assert not np.allclose(a, b)


def test_uses_counter_based_bit_generator():
    gen = stream(0)
    assert type(gen.bit_generator).__name__ == "Philox"


def test_rejects_bad_seeds_and_labels():
    with pytest.raises(ValidationError):
        stream(-1)
    with pytest.raises(ValidationError):
        stream("seed")
    with pytest.raises(ValidationError):
        stream(0, 1.5)


def test_as_generator_passthrough_and_seed():
    gen = stream(3)
    assert as_generator(gen) is gen
    a = as_generator(5).standard_normal(10)
    b = as_generator(5).standard_normal(10)
    assert np.array_equal(a, b)
    with pytest.raises(ValidationError):
        as_generator(None)
