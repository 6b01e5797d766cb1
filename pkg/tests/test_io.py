import json

import numpy as np
import pytest

from lazyneg.io import FormatError, load_mps, load_state, save_mps, save_state
from lazyneg.mps import Mps, random_mps
from lazyneg.pts import random_pure_state


def test_mps_round_trip(tmp_path):
    m = random_mps(6, 4, seed=2)
    save_mps(m, tmp_path / "m")
    back = load_mps(tmp_path / "m")
    assert back.boundary == m.boundary and back.bond_dims == m.bond_dims
    for x, y in zip(m.tensors, back.tensors):
        np.testing.assert_array_equal(x, y)


def test_mps_round_trip_periodic(tmp_path):
    rng = np.random.default_rng(0)
    ts = [rng.normal(size=(3, 2, 3)) + 1j * rng.normal(size=(3, 2, 3)) for _ in range(4)]
    m = Mps(ts, "periodic")
    back = load_mps(save_mps(m, tmp_path / "pbc") / "manifest.json")
    assert back.boundary == "periodic"
    for x, y in zip(m.tensors, back.tensors):
        np.testing.assert_array_equal(x, y)


def test_state_round_trip(tmp_path):
    psi = random_pure_state(5, seed=1)
    back = load_state(save_state(psi, tmp_path / "s"))
    assert back.L == 5 and back.p == 2
    np.testing.assert_allclose(back.vector, psi.vector, atol=1e-15)


def test_raw_layout_is_interleaved_little_endian(tmp_path):
    psi = random_pure_state(3, seed=4)
    save_state(psi, tmp_path)
    raw = np.fromfile(tmp_path / "state.bin", dtype="<f8")
    np.testing.assert_array_equal(raw[0::2], psi.vector.real)
    np.testing.assert_array_equal(raw[1::2], psi.vector.imag)


def _edit_manifest(d, **changes):
    mf = d / "manifest.json"
    data = json.loads(mf.read_text())
    data.update(changes)
    mf.write_text(json.dumps(data))


@pytest.mark.parametrize("changes", [
    {"version": 2},
    {"scalar_type": "complex64"},
    {"endianness": "big"},
    {"L": 0},
    {"boundary": "twisted"},
    {"bond_dims": [1, 2, 2]},
    {"format": "lazyneg-state"},
])
def test_bad_mps_manifest(tmp_path, changes):
    save_mps(random_mps(4, 2, seed=0), tmp_path)
    _edit_manifest(tmp_path, **changes)
    with pytest.raises(FormatError):
        load_mps(tmp_path)


def test_truncated_data_file(tmp_path):
    save_mps(random_mps(4, 2, seed=0), tmp_path)
    f = tmp_path / "site_00001.bin"
    f.write_bytes(f.read_bytes()[:-8])
    with pytest.raises(FormatError, match="bytes"):
        load_mps(tmp_path)


def test_missing_and_malformed_manifest(tmp_path):
    with pytest.raises(FormatError):
        load_state(tmp_path)
    (tmp_path / "manifest.json").write_text("{not json")
    with pytest.raises(FormatError):
        load_state(tmp_path)


def test_zero_state_rejected(tmp_path):
    save_state(random_pure_state(3, seed=0), tmp_path)
    np.zeros(16).tofile(tmp_path / "state.bin")
    with pytest.raises(FormatError, match="zero norm"):
        load_state(tmp_path)
