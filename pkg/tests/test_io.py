import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from hardyspace import io
from hardyspace.decomposition import atomic_decompose
from hardyspace.exceptions import ConfigError, PreconditionError
from hardyspace.grid import Field, GridSpec
from hardyspace.harness import generate_corpus
from hardyspace.operator import build_operator, gaussian_symbol, kernel_matrix
from hardyspace.symbols import heat_symbol


def test_rows_roundtrip_exact(tmp_path):
    rows = [{"a": 0.1, "b": 1, "c": "x"}, {"a": 1e-300, "b": -2, "c": "y"}]
    path = io.write_rows(tmp_path / "t.csv", rows)
    assert path.read_text().splitlines()[0] == "a,b,c"
    back = io.read_rows(path)
    assert [float(r["a"]) for r in back] == [0.1, 1e-300]


@settings(max_examples=30, deadline=None)
@given(arrays(float, st.integers(1, 40), elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_raw_roundtrip_bit_exact(tmp_path_factory, a):
    path = tmp_path_factory.mktemp("raw") / "a.f64"
    io.write_raw(path, a, {"name": "x"})
    back, meta = io.read_raw(path)
    assert back.tobytes() == a.astype("<f8").tobytes()
    assert meta["name"] == "x" and meta["byteorder"] == "little"


def test_raw_is_little_endian(tmp_path):
    path = io.write_raw(tmp_path / "one.f64", np.array([1.0]))
    assert path.read_bytes() == b"\x00\x00\x00\x00\x00\x00\xf0?"


def test_raw_rejects_unknown_layout(tmp_path):
    path = io.write_raw(tmp_path / "x.f64", np.zeros(2))
    (tmp_path / "x.f64.txt").write_text("dtype = float32\nbyteorder = little\nshape = 2\n")
    with pytest.raises(PreconditionError):
        io.read_raw(path)


def test_sidecar_requires_key_value(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("just words\n")
    with pytest.raises(ConfigError):
        io.read_sidecar(p)


def test_field_csv_roundtrip(tmp_path):
    g = GridSpec(2, 4)
    f = Field(g, np.random.default_rng(0).standard_normal(16))
    back = io.read_field_csv(io.write_field_csv(tmp_path / "f.csv", f), g)
    assert np.array_equal(back.values, f.values)


def test_json_sorted_with_numpy_scalars(tmp_path):
    p = io.write_json(tmp_path / "s.json", {"schema": 1, "b": np.float64(0.5), "a": np.int64(3)})
    text = p.read_text()
    assert text.index('"a"') < text.index('"b"') < text.index('"schema"')


def test_kernel_dump_shape(tmp_path):
    op = build_operator("laplacian", GridSpec(1, 8))
    K = kernel_matrix(op, gaussian_symbol, 0.1)
    a, meta = io.read_raw(io.write_kernel(tmp_path / "k.f64", K))
    assert a.shape == (8, 8) and meta["layout"] == "real"


def test_symbol_and_eigenvalue_csv(tmp_path):
    op = build_operator("laplacian", GridSpec(1, 8))
    rows = io.read_rows(io.write_eigenvalues_csv(tmp_path / "e.csv", op))
    assert len(rows) == 8 and float(rows[0]["eigenvalue"]) == pytest.approx(0.0, abs=1e-9)
    rows = io.read_rows(io.write_symbol_csv(tmp_path / "s.csv", heat_symbol(), [0.0, 1.0]))
    assert float(rows[1]["value"]) == math.exp(-1.0)


def test_decomposition_dump_resynthesizes_bit_exact(tmp_path):
    op = build_operator("laplacian", GridSpec(1, 64))
    dec = atomic_decompose(op, generate_corpus(["bump"], op.grid)[0][1], p=1.0)
    manifest = io.write_decomposition(tmp_path / "dec", dec)
    rows = io.read_rows(manifest)
    assert list(rows[0].keys()) == io.MANIFEST_COLUMNS
    terms = io.read_decomposition(tmp_path / "dec")
    assert len(terms) == len(dec.terms)
    assert io.resynthesize(terms, op.grid).tobytes() == dec.synthesis.values.tobytes()
    residual, _ = io.read_raw(tmp_path / "dec" / "residual.f64")
    assert residual.tobytes() == dec.residual.values.tobytes()
