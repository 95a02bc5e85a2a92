"""
Tests for the logging processors and the exception hierarchy.
"""
import numpy as np
import pytest
from structlog.contextvars import clear_contextvars, get_contextvars

from src.utils.exceptions import (
    DegenerateShapeError,
    MdpError,
    MissingInputError,
    RaggedRowError,
    StateVersionMismatchError,
)
from src.utils.logger import MAX_LOGGED_ARRAY, bind_run_context, numpy_fields


class TestNumpyFields:
    def test_scalars_and_small_arrays(self):
        out = numpy_fields(None, "info", {"event": "x", "n": np.int64(3), "masses": np.array([1.5, 2.0])})
        assert out == {"event": "x", "n": 3, "masses": [1.5, 2.0]}
        assert type(out["n"]) is int

    def test_large_arrays_logged_by_shape(self):
        out = numpy_fields(None, "info", {"q": np.zeros((MAX_LOGGED_ARRAY + 1, 2))})
        assert out["q"] == f"<array shape={(MAX_LOGGED_ARRAY + 1, 2)}>"


def test_bind_run_context_replaces_fields():
    bind_run_context(command="fit-online", seed=1)
    bind_run_context(command="predict")
    assert get_contextvars() == {"command": "predict"}
    clear_contextvars()


@pytest.mark.parametrize(
    "error, bases",
    [
        (RaggedRowError("line 3"), (ValueError,)),
        (DegenerateShapeError("shape"), (ArithmeticError,)),
        (MissingInputError("input file not found: a.csv"), (FileNotFoundError, OSError)),
    ],
)
def test_errors_are_catchable_generically(error, bases):
    assert isinstance(error, MdpError)
    for base in bases:
        assert isinstance(error, base)


def test_version_mismatch_carries_versions():
    error = StateVersionMismatchError(0, 1)
    assert error.expected == 1
