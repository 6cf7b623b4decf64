"""Rank-4 tensor container: validation, constructors, views."""

import numpy as np
import pytest

from enercast.errors import EmptyTensorError
from enercast.tensor import Tensor4


def test_wraps_rank4_as_float64():
    t = Tensor4(np.arange(24).reshape(2, 3, 4, 1))
    assert t.data.dtype == np.float64
    assert t.shape == (2, 3, 4, 1)
    assert (t.height, t.width, t.channels, t.batch) == (2, 3, 4, 1)


@pytest.mark.parametrize("bad", [np.zeros(3), np.zeros((2, 2)), np.zeros((2, 2, 2)),
                                 np.zeros((2, 2, 2, 2, 2))])
def test_rejects_wrong_rank(bad):
    with pytest.raises(ValueError):
        Tensor4(bad)


def test_rejects_empty_dim():
    with pytest.raises(EmptyTensorError):
        Tensor4(np.zeros((3, 0, 1, 1)))


def test_zeros_constructor():
    t = Tensor4.zeros(48, 1, 1, 5)
    assert t.shape == (48, 1, 1, 5)
    assert not t.data.any()


def test_from_vector_makes_column():
    t = Tensor4.from_vector([1.0, 2.0, 3.0])
    assert t.shape == (3, 1, 1, 1)
    assert t.data[1, 0, 0, 0] == 2.0


def test_copy_is_independent():
    t = Tensor4.zeros(2, 2, 2, 2)
    c = t.copy()
    c.data[0, 0, 0, 0] = 9.0
    assert t.data[0, 0, 0, 0] == 0.0


def test_repr_shows_shape():
    assert repr(Tensor4.zeros(48, 1, 136, 7)) == "Tensor4(48x1x136x7)"
