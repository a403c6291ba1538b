import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cbfsim.checkpoint import (
    MAGIC,
    CheckpointError,
    read_checkpoint,
    write_checkpoint,
)
from cbfsim.fields import random_hermitian_field
from cbfsim.grids import Grid


def _roundtrip(tmp_path, u, **params):
    path = tmp_path / "state.cbf"
    write_checkpoint(path, u, **params)
    return path, read_checkpoint(path)


def test_round_trip_bit_exact(tmp_path, rng):
    u = random_hermitian_field(Grid(8), rng)
    path, (back, header) = _roundtrip(
        tmp_path, u, r=3.0, mu=1.0, alpha=0.25, beta=0.5, t=0.125
    )
    assert np.array_equal(back.coeffs, u.coeffs)
    assert (header.n, header.r, header.mu) == (8, 3.0, 1.0)
    assert (header.alpha, header.beta, header.t) == (0.25, 0.5, 0.125)


def test_file_round_trip_is_byte_stable(tmp_path, rng):
    u = random_hermitian_field(Grid(4), rng)
    p1 = tmp_path / "a.cbf"
    p2 = tmp_path / "b.cbf"
    write_checkpoint(p1, u, r=3.0, mu=1.0, alpha=0.0, beta=1.0, t=0.0)
    back, header = read_checkpoint(p1)
    write_checkpoint(p2, back, r=header.r, mu=header.mu, alpha=header.alpha,
                     beta=header.beta, t=header.t)
    assert p1.read_bytes() == p2.read_bytes()


def test_header_layout(tmp_path, rng):
    u = random_hermitian_field(Grid(4), rng)
    path, _ = _roundtrip(tmp_path, u, r=2.0, mu=0.5, alpha=0.0, beta=1.0, t=1.5)
    raw = path.read_bytes()
    assert raw[:4] == MAGIC
    assert int.from_bytes(raw[4:8], "little") == 4
    assert len(raw) == 4 + 4 + 5 * 8 + 3 * 4 ** 3 * 16


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@given(r=finite, mu=finite, alpha=finite, beta=finite, t=finite)
@settings(max_examples=50, deadline=None)
def test_header_values_round_trip_exactly(tmp_path_factory, r, mu, alpha, beta, t):
    path = tmp_path_factory.mktemp("ckpt") / "h.cbf"
    u = random_hermitian_field(Grid(4), np.random.default_rng(0))
    write_checkpoint(path, u, r=r, mu=mu, alpha=alpha, beta=beta, t=t)
    _, header = read_checkpoint(path)
    assert (header.r, header.mu, header.alpha, header.beta, header.t) == (
        r, mu, alpha, beta, t,
    )


def test_bad_magic_rejected(tmp_path, rng):
    u = random_hermitian_field(Grid(4), rng)
    path, _ = _roundtrip(tmp_path, u, r=3.0, mu=1.0, alpha=0.0, beta=1.0, t=0.0)
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(CheckpointError, match="magic"):
        read_checkpoint(path)


def test_truncated_file_rejected(tmp_path, rng):
    u = random_hermitian_field(Grid(4), rng)
    path, _ = _roundtrip(tmp_path, u, r=3.0, mu=1.0, alpha=0.0, beta=1.0, t=0.0)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CheckpointError, match="expected"):
        read_checkpoint(path)
