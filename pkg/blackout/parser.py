"""
This module defines the parsers and writers of blackout's text and binary
file formats: datasets, sample sets, generators and MLP parameters.
"""


import re
from typing import Dict, List, Sequence, Tuple

import numpy as np

import blackout.general_ctmc as ctmc
from blackout.exceptions import FormatError
from blackout.predictor import DiscreteDataset, MlpParams
from blackout.pure_death import StateSpace

DATASET_MAGIC = "BDDATA"
SAMPLES_MAGIC = "BDSAMPLES"
MLP_MAGIC = "MLP"

_HEADER_FIELD = re.compile(r"^([A-Z]+)=(\d+)$")


def parse_header(line: str, magic: str, keys: Sequence[str], line_no: int = 1) -> Dict[str, int]:
    """Parse a ``MAGIC KEY=<int> ...`` header line

    :param str line: the header line
    :param str magic: the expected leading word (may be empty)
    :param list keys: the keys that must be present, in order
    :returns: dict of key to int
    """
    parts = line.split()
    if magic:
        if not parts or parts[0] != magic:
            raise FormatError(f"expected a {magic} header", line_no)
        parts = parts[1:]
    res = {}
    for part in parts:
        match = _HEADER_FIELD.match(part)
        if match is None:
            raise FormatError(f"malformed header field {part!r}", line_no)
        res[match.group(1)] = int(match.group(2))
    if list(res.keys()) != list(keys):
        raise FormatError(f"header must contain {' '.join(k + '=' for k in keys)} in order", line_no)
    return res


def _content_lines(input_data: str):
    """Yield ``(line_no, stripped_line)``, skipping blank and comment lines"""
    for line_no, line in enumerate(input_data.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        yield line_no, line


def _parse_ints(text: str, count: int, line_no: int) -> List[int]:
    parts = text.split()
    if len(parts) != count:
        raise FormatError(f"expected {count} labels, found {len(parts)}", line_no)
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise FormatError(f"labels must be integers: {text!r}", line_no)


def _check_labels(values: Sequence[int], max_label: int, line_no: int):
    for val in values:
        if not 0 <= val <= max_label:
            raise FormatError(f"label {val} outside 0..{max_label}", line_no)


class DatasetParser(object):
    """A parser for ``BDDATA`` dataset files"""

    def parse(self, input_data: str) -> DiscreteDataset:
        """Parse the provided input data into a DiscreteDataset

        :param str input_data: the contents of a dataset file
        :returns: DiscreteDataset
        """
        lines = _content_lines(input_data)
        try:
            line_no, header = next(lines)
        except StopIteration:
            raise FormatError("empty dataset file")
        fields = parse_header(header, DATASET_MAGIC, ["M", "N"], line_no)
        space = self.make_space(fields, line_no)

        items = []
        weights = []
        for line_no, line in lines:
            item, weight = self.parse_item(line, space, line_no)
            items.append(item)
            weights.append(weight)
        if not items:
            raise FormatError("dataset has no items")
        if not sum(weights) > 0:
            raise FormatError("dataset weights are all zero")
        return DiscreteDataset(space, np.array(items, dtype=np.int64), np.array(weights))

    def make_space(self, fields: Dict[str, int], line_no: int) -> StateSpace:
        if fields["M"] < 1 or fields["N"] < 1:
            raise FormatError("M and N must be >= 1", line_no)
        return StateSpace(fields["M"], fields["N"])

    def parse_item(self, line: str, space: StateSpace, line_no: int) -> Tuple[List[int], float]:
        """Parse one ``<labels> [| <weight>]`` item line"""
        labels, _, weight_text = line.partition("|")
        item = _parse_ints(labels, space.dims, line_no)
        _check_labels(item, space.max_label, line_no)
        weight = 1.0
        if weight_text.strip():
            try:
                weight = float(weight_text)
            except ValueError:
                raise FormatError(f"weight must be a number: {weight_text.strip()!r}", line_no)
            if not (np.isfinite(weight) and weight >= 0):
                raise FormatError(f"weight must be finite and >= 0, got {weight}", line_no)
        return item, weight


def parse_dataset(input_data: str) -> DiscreteDataset:
    return DatasetParser().parse(input_data)


def dump_dataset(ds: DiscreteDataset) -> str:
    lines = [f"{DATASET_MAGIC} M={ds.space.max_label} N={ds.space.dims}"]
    for item, weight in zip(ds.items, ds.weights):
        lines.append(" ".join(str(v) for v in item) + f" | {weight!r}")
    return "\n".join(lines) + "\n"


def dump_samples(samples: np.ndarray, space: StateSpace) -> str:
    samples = space.check_vectors(np.atleast_2d(samples), "sample")
    lines = [f"{SAMPLES_MAGIC} M={space.max_label} N={space.dims} COUNT={samples.shape[0]}"]
    lines.extend(" ".join(str(v) for v in row) for row in samples)
    return "\n".join(lines) + "\n"


def parse_samples(input_data: str) -> Tuple[StateSpace, np.ndarray]:
    """Parse a ``BDSAMPLES`` file into its state space and a (count, N)
    array.
    """
    lines = _content_lines(input_data)
    try:
        line_no, header = next(lines)
    except StopIteration:
        raise FormatError("empty samples file")
    fields = parse_header(header, SAMPLES_MAGIC, ["M", "N", "COUNT"], line_no)
    space = DatasetParser().make_space(fields, line_no)

    rows = []
    for line_no, line in lines:
        row = _parse_ints(line, space.dims, line_no)
        _check_labels(row, space.max_label, line_no)
        rows.append(row)
    if len(rows) != fields["COUNT"]:
        raise FormatError(f"expected {fields['COUNT']} samples, found {len(rows)}")
    return space, np.array(rows, dtype=np.int64).reshape(len(rows), space.dims)


def dump_pgm(sample: np.ndarray, max_label: int) -> str:
    """Render one sample as a square plain (P2) greymap"""
    sample = np.asarray(sample).ravel()
    side = int(round(np.sqrt(sample.size)))
    if side * side != sample.size:
        raise FormatError(f"{sample.size} components do not form a square image")
    lines = ["P2", f"{side} {side}", str(max_label)]
    for row in sample.reshape(side, side):
        lines.append(" ".join(str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_generator(input_data: str) -> ctmc.Generator:
    """Parse an ``M=<int>`` header followed by M+1 rows of M+1 rates.
    Entry (m, m') is the rate of the transition m' -> m.
    """
    lines = _content_lines(input_data)
    try:
        line_no, header = next(lines)
    except StopIteration:
        raise FormatError("empty generator file")
    max_label = parse_header(header, "", ["M"], line_no)["M"]
    if max_label < 1:
        raise FormatError("M must be >= 1", line_no)

    rows = []
    for line_no, line in lines:
        parts = line.split()
        if len(parts) != max_label + 1:
            raise FormatError(f"expected {max_label + 1} rates, found {len(parts)}", line_no)
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise FormatError(f"rates must be numbers: {line!r}", line_no)
    if len(rows) != max_label + 1:
        raise FormatError(f"expected {max_label + 1} rows, found {len(rows)}")
    return ctmc.Generator(np.array(rows))


def dump_generator(g: ctmc.Generator) -> str:
    lines = [f"M={g.max_label}"]
    for row in g.rates:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def write_mlp(path: str, params: MlpParams):
    """Write MLP parameters: a text header line with the layer sizes, then
    the little-endian float64 arrays layer by layer (weight then bias).
    """
    with open(path, "wb") as f:
        f.write((" ".join([MLP_MAGIC] + [str(s) for s in params.sizes]) + "\n").encode("ascii"))
        for arr in params.arrays():
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_mlp(path: str) -> MlpParams:
    with open(path, "rb") as f:
        header = f.readline().decode("ascii", errors="replace").split()
        body = f.read()
    if not header or header[0] != MLP_MAGIC:
        raise FormatError(f"expected a {MLP_MAGIC} header", 1)
    try:
        sizes = [int(s) for s in header[1:]]
    except ValueError:
        raise FormatError("layer sizes must be integers", 1)
    if len(sizes) < 2 or min(sizes) < 1:
        raise FormatError(f"invalid layer sizes {sizes}", 1)

    shapes = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        shapes.extend([(a, b), (b,)])
    expected = sum(int(np.prod(s)) for s in shapes) * 8
    if len(body) != expected:
        raise FormatError(f"expected {expected} bytes of parameters, found {len(body)}")

    values = np.frombuffer(body, dtype="<f8").astype(float)
    arrays = []
    offset = 0
    for shape in shapes:
        size = int(np.prod(shape))
        arrays.append(values[offset:offset + size].reshape(shape).copy())
        offset += size
    return MlpParams(arrays[0::2], arrays[1::2])
