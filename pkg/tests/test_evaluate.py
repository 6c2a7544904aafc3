import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from spcoclust.evaluate import cer, cer_pairwise
from spcoclust.exceptions import LengthMismatch, TooShort


def test_examples():
    assert cer([1, 1, 2, 2], [2, 2, 1, 1]) == 0
    assert cer([1, 1, 2, 2], [1, 2, 1, 2]) == pytest.approx(4 / 6, abs=1e-15)
    assert cer([5, 3, 3, 9], [5, 3, 3, 9]) == 0


def test_errors():
    with pytest.raises(LengthMismatch):
        cer([1, 2], [1, 2, 3])
    with pytest.raises(TooShort):
        cer([1], [1])


labels = st.lists(st.integers(-3, 4), min_size=2, max_size=60)


@given(labels, st.randoms())
def test_fast_matches_pairwise(a, rnd):
    b = [rnd.randint(0, 3) for _ in a]
    assert cer(a, b) == pytest.approx(cer_pairwise(a, b), abs=1e-15)
    assert cer(a, b) == pytest.approx(cer(b, a), abs=1e-15)


@given(labels)
def test_relabelling_invariance(a):
    a = np.array(a)
    assert cer(a, 10 * a + 7) == 0.0


def test_large_random_agreement():
    rng = np.random.default_rng(0)
    a, b = rng.integers(0, 4, 500), rng.integers(0, 6, 500)
    assert cer(a, b) == pytest.approx(cer_pairwise(a, b), abs=1e-15)
