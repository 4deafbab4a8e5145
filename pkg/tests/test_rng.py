"""
Tests for the reproducible random streams
"""


import numpy as np

from blackout.rng import GENERATE_STREAM, TRAIN_STREAM, substream


def test_substream_repeatable():
    """Test that the same seed and keys give the same draws"""
    first = substream(7, GENERATE_STREAM, 3).random(5)
    second = substream(7, GENERATE_STREAM, 3).random(5)
    assert np.array_equal(first, second)


def test_substream_order_independent():
    """Test that requesting other streams first does not change a stream"""
    expected = substream(7, GENERATE_STREAM, 2).integers(0, 1 << 30, size=4)
    for block in (5, 0, 1):
        substream(7, GENERATE_STREAM, block).random(10)
    actual = substream(7, GENERATE_STREAM, 2).integers(0, 1 << 30, size=4)
    assert np.array_equal(expected, actual)


def test_substreams_differ():
    """Test that different keys or seeds give different streams"""
    base = substream(7, TRAIN_STREAM).random(8)
    assert not np.array_equal(base, substream(7, GENERATE_STREAM).random(8))
    assert not np.array_equal(base, substream(8, TRAIN_STREAM).random(8))
    assert not np.array_equal(base, substream(7, TRAIN_STREAM, 0).random(8))
