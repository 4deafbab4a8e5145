"""
Test the dataset, sample, generator and model file formats
"""


import numpy as np
import pytest

import blackout.parser as parser
from blackout.exceptions import FormatError
from blackout.predictor import MlpParams
from blackout.pure_death import StateSpace
from tests.utils import birth_death, make_dataset


def test_parse_dataset():
    """Test parsing a dataset with comments, blank lines and weights"""
    input_data = """
# two items in two dimensions
BDDATA M=8 N=2

1 2
8 0 | 3
"""
    ds = parser.parse_dataset(input_data)
    assert ds.space.max_label == 8
    assert ds.space.dims == 2
    np.testing.assert_array_equal(ds.items, [[1, 2], [8, 0]])
    np.testing.assert_allclose(ds.weights, [0.25, 0.75])


def test_dump_dataset_parses_back():
    """Test that a dumped dataset parses to the same items and weights"""
    ds = make_dataset([[0, 3], [5, 5], [2, 1]], 5, weights=[0.2, 0.3, 0.5])
    parsed = parser.parse_dataset(parser.dump_dataset(ds))
    np.testing.assert_array_equal(parsed.items, ds.items)
    np.testing.assert_allclose(parsed.weights, ds.weights, rtol=1e-15)


@pytest.mark.parametrize(
    "input_data,line_no",
    [
        ("", None),
        ("BDDATA M=8\n1\n", 1),
        ("BDDATA N=1 M=8\n1\n", 1),
        ("DATA M=8 N=1\n1\n", 1),
        ("BDDATA M=0 N=1\n0\n", 1),
        ("BDDATA M=8 N=1\n", None),
        ("BDDATA M=8 N=2\n1 2\n3\n", 3),
        ("BDDATA M=8 N=1\n\n9\n", 3),
        ("BDDATA M=8 N=1\nx\n", 2),
        ("BDDATA M=8 N=1\n1 | -2\n", 2),
        ("BDDATA M=8 N=1\n1 | heavy\n", 2),
        ("BDDATA M=8 N=1\n1 | 0\n2 | 0\n", None),
    ],
)
def test_parse_dataset_errors(input_data, line_no):
    """Test that malformed datasets are rejected with their line number"""
    with pytest.raises(FormatError) as exc_info:
        parser.parse_dataset(input_data)
    assert exc_info.value.line_no == line_no
    if line_no is not None:
        assert str(exc_info.value).startswith(f"line {line_no}: ")


def test_samples_format():
    """Test writing and reading sample files"""
    space = StateSpace(8, 3)
    samples = np.array([[1, 2, 3], [8, 0, 4]])
    text = parser.dump_samples(samples, space)
    assert text.splitlines()[0] == "BDSAMPLES M=8 N=3 COUNT=2"
    assert text.splitlines()[2] == "8 0 4"

    parsed_space, parsed = parser.parse_samples(text)
    assert parsed_space.max_label == 8 and parsed_space.dims == 3
    np.testing.assert_array_equal(parsed, samples)

    with pytest.raises(FormatError):
        parser.parse_samples("BDSAMPLES M=8 N=3 COUNT=3\n1 2 3\n")
    with pytest.raises(FormatError):
        parser.parse_samples("BDSAMPLES M=8 N=3\n1 2 3\n")


def test_dump_pgm():
    """Test rendering a square sample as a plain greymap"""
    text = parser.dump_pgm([0, 1, 2, 3], 3)
    assert text == "P2\n2 2\n3\n0 1\n2 3\n"
    with pytest.raises(FormatError):
        parser.dump_pgm([0, 1, 2], 3)


def test_generator_format():
    """Test writing and reading generator files"""
    g = birth_death(4, birth=2.0, death=0.3)
    parsed = parser.parse_generator(parser.dump_generator(g))
    np.testing.assert_array_equal(parsed.rates, g.rates)

    text = """
M=2
# rates into 0, 1 and 2
-1 0 0
1 -1 0
0 1 0
"""
    chain = parser.parse_generator(text)
    np.testing.assert_array_equal(chain.rates, [[-1, 0, 0], [1, -1, 0], [0, 1, 0]])
    assert chain.max_label == 2

    with pytest.raises(FormatError) as exc_info:
        parser.parse_generator("M=2\n0 0\n")
    assert exc_info.value.line_no == 2
    with pytest.raises(FormatError):
        parser.parse_generator("M=2\n0 0 0\n0 0 0\n")
    with pytest.raises(FormatError):
        parser.parse_generator("M=2\n0 0 0\n0 0 0\n0 0 fast\n")


def test_mlp_format(tmpdir):
    """Test writing and reading MLP parameter files"""
    params = MlpParams.init([4, 6, 2], np.random.default_rng(0), scale=0.7, output_bias=1.5)
    path = str(tmpdir.join("model.mlp"))
    parser.write_mlp(path, params)
    with open(path, "rb") as f:
        assert f.readline() == b"MLP 4 6 2\n"

    loaded = parser.read_mlp(path)
    assert loaded.sizes == [4, 6, 2]
    for before, after in zip(params.arrays(), loaded.arrays()):
        np.testing.assert_array_equal(before, after)


def test_mlp_format_errors(tmpdir):
    """Test that damaged MLP files are rejected"""
    path = tmpdir.join("broken.mlp")
    path.write_binary(b"NET 2 1\n" + b"\x00" * 24)
    with pytest.raises(FormatError):
        parser.read_mlp(str(path))

    path.write_binary(b"MLP 2 1\n" + b"\x00" * 16)
    with pytest.raises(FormatError):
        parser.read_mlp(str(path))

    path.write_binary(b"MLP 2\n")
    with pytest.raises(FormatError):
        parser.read_mlp(str(path))
