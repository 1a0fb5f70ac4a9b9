import json
import struct

import numpy as np
import pytest

from cnfode.archive import ArchiveError, ArchiveSchemaError, load_weights, save_weights
from cnfode.ffnn import ConstantInit
from cnfode.fragmentation import FragmentedSolution, make_fragmentation, solve_scnf
from cnfode.neural_form import MTSM, WeightMatrix
from cnfode.oracle import delta_u_fragmented
from cnfode.problems import oscillating_problem, rigid_body_problem
from cnfode.training import TrainingConfig

from conftest import random_matrix


def test_matrix_round_trip_bitwise(rng, tmp_path):
    mats = [random_matrix(rng, 3, 5, scale=1e3) for _ in range(2)]
    path = save_weights(mats, tmp_path / "w.cnfw")
    back = load_weights(path)
    assert len(back) == 2
    for a, b in zip(mats, back):
        assert a.data.tobytes() == b.data.tobytes()


def _solution():
    p = oscillating_problem()
    frag = make_fragmentation(0.0, 1.0, 4, 5)
    cfg = TrainingConfig(epochs=200, incremental=True, init=ConstantInit(0.0))
    return p, solve_scnf(p, MTSM, 2, 3, cfg, frag)


def test_solution_round_trip(tmp_path):
    p, sol = _solution()
    back = load_weights(save_weights(sol, tmp_path / "s.cnfw"))
    assert isinstance(back, FragmentedSolution)
    assert (back.variant, back.m, back.H, back.problem_name) == (MTSM, 2, 3, "oscillating")
    for name in ("weights", "handoffs", "final_costs", "u0"):
        assert getattr(back, name).tobytes() == getattr(sol, name).tobytes()
    assert np.array_equal(back.frag.grids, sol.frag.grids)
    assert delta_u_fragmented(back, p.analytic).delta_u == delta_u_fragmented(sol, p.analytic).delta_u
    for t in (0.0, 0.25, 0.6, 1.0):
        assert np.array_equal(back.evaluate(t), sol.evaluate(t))


def test_system_round_trip(tmp_path):
    p = rigid_body_problem()
    sol = solve_scnf(p, "TSM", 1, 2, TrainingConfig(epochs=20), make_fragmentation(0.0, 1.0, 2, 3))
    back = load_weights(save_weights(sol, tmp_path / "rb.cnfw"))
    assert back.dim == 3 and np.array_equal(back.evaluate(0.7), sol.evaluate(0.7))


def test_truncated_file_reports_offset(tmp_path):
    _, sol = _solution()
    data = save_weights(sol, tmp_path / "s.cnfw").read_bytes()
    for cut in (3, 8, 20, len(data) - 8):
        bad = tmp_path / f"cut{cut}.cnfw"
        bad.write_bytes(data[:cut])
        with pytest.raises(ArchiveError) as info:
            load_weights(bad)
        assert info.value.offset <= cut


def test_bad_magic_and_version(tmp_path):
    bad = tmp_path / "x.cnfw"
    bad.write_bytes(b"XXXX" + b"\0" * 20)
    with pytest.raises(ArchiveError) as info:
        load_weights(bad)
    assert info.value.offset == 0
    bad.write_bytes(struct.pack("<4sHI", b"CNFW", 99, 0))
    with pytest.raises(ArchiveError):
        load_weights(bad)


def test_malformed_header(tmp_path):
    bad = tmp_path / "x.cnfw"
    header = b"{not json"
    bad.write_bytes(struct.pack("<4sHI", b"CNFW", 1, len(header)) + header)
    with pytest.raises(ArchiveError) as info:
        load_weights(bad)
    assert info.value.offset >= 10


def test_shape_mismatch_is_schema_error(tmp_path, rng):
    path = save_weights([random_matrix(rng, 2, 3)], tmp_path / "w.cnfw")
    data = path.read_bytes()
    hlen = struct.unpack_from("<I", data, 6)[0]
    header = json.loads(data[10:10 + hlen])
    header["m"] = 3
    new = json.dumps(header).encode()
    path.write_bytes(struct.pack("<4sHI", b"CNFW", 1, len(new)) + new + data[10 + hlen:])
    with pytest.raises(ArchiveSchemaError):
        load_weights(path)
    path.write_bytes(data + b"\0" * 8)
    with pytest.raises(ArchiveSchemaError):
        load_weights(path)


def test_save_is_atomic(tmp_path, rng):
    path = tmp_path / "w.cnfw"
    save_weights([random_matrix(rng, 1, 2)], path)
    assert [p.name for p in tmp_path.iterdir()] == ["w.cnfw"]
    with pytest.raises(ValueError):
        save_weights([], path)
    with pytest.raises(ValueError):
        save_weights([WeightMatrix.zeros(1, 2), WeightMatrix.zeros(2, 2)], path)
