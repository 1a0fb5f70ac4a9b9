import numpy as np
import pytest

from cnfode.ffnn import ConstantInit, UniformInit
from cnfode.fragmentation import (fragmentation_from_edges, make_fragmentation, solve_scnf,
                                  solve_scnf_system)
from cnfode.neural_form import MTSM, TSM
from cnfode.oracle import delta_u_fragmented
from cnfode.problems import dahlquist_problem, oscillating_problem, rigid_body_problem
from cnfode.training import (ConfigError, TrainingConfig, default_specs, initial_weights, train)


def test_sixty_subdomains():
    f = make_fragmentation(0.0, 15.0, 60, 9)
    assert f.grids.shape == (60, 10)
    assert np.allclose(np.diff(f.edges), 0.25, atol=1e-14)


def test_single_subdomain_is_plain_grid():
    f = make_fragmentation(0.0, 2.0, 1, 9)
    assert np.allclose(f.grids[0], np.linspace(0, 2, 10), atol=1e-15)
    assert f.grids[0][0] == 0.0 and f.grids[0][-1] == 2.0


def test_unique_points_after_dedup():
    assert make_fragmentation(0.0, 30.0, 40, 9).unique_points().size == 361


def test_interfaces_shared_exactly():
    f = make_fragmentation(0.0, 15.0, 37, 9)
    for l in range(1, f.h):
        assert f.grids[l - 1][-1] == f.grids[l][0] == f.edges[l]
    assert f.grids[0][0] == 0.0 and f.grids[-1][-1] == 15.0
    assert np.all(np.diff(f.unique_points()) > 0)


def test_rebuild_from_edges():
    f = make_fragmentation(0.0, 3.0, 7, 4)
    g = fragmentation_from_edges(f.edges, f.n)
    assert np.array_equal(f.grids, g.grids) and (g.h, g.t0, g.t_end) == (7, 0.0, 3.0)


@pytest.mark.parametrize("args", [(1.0, 1.0, 2, 3), (2.0, 1.0, 2, 3), (0.0, 1.0, 0, 3),
                                  (0.0, 1.0, 2, 0), (0.0, float("inf"), 2, 3)])
def test_invalid_fragmentation(args):
    with pytest.raises(ConfigError):
        make_fragmentation(*args)


def _small_scnf(variant=TSM, m=2, h=4, epochs=300, **kw):
    p = oscillating_problem()
    frag = make_fragmentation(0.0, 1.0, h, 5)
    cfg = TrainingConfig(epochs=epochs, incremental=True, init=ConstantInit(0.0))
    return p, frag, solve_scnf(p, variant, m, 4, cfg, frag, **kw)


def test_anchor_chain():
    p, frag, sol = _small_scnf()
    assert sol.failed_at is None and sol.solved == frag.h
    assert np.array_equal(sol.anchors[0], p.u0_array)
    for l in range(1, frag.h):
        assert np.array_equal(sol.anchors[l], sol.handoffs[l - 1])
        assert sol.specs(l)[0].u0 == sol.handoffs[l - 1][0]


def test_tsm_continuity_at_interfaces():
    _, frag, sol = _small_scnf()
    assert sol.evaluate(0.0)[0] == -1.0
    for l in range(1, frag.h):
        left = sol.eval_in(l - 1, [frag.edges[l]])[0][0]
        right = sol.eval_in(l, [frag.edges[l]])[0][0]
        assert np.all(np.abs(left - right) < 1e-14)


def test_evaluate_locates_subdomains():
    _, frag, sol = _small_scnf()
    assert sol.locate(0.0) == 0
    assert sol.locate(frag.edges[1]) == 0  # interface belongs to the earlier subdomain
    assert sol.locate(frag.edges[1] + 1e-9) == 1
    assert sol.locate(1.0) == frag.h - 1
    with pytest.raises(ValueError):
        sol.evaluate(1.5)
    with pytest.raises(ValueError):
        sol.evaluate(-0.1)
    many = sol.evaluate_many([0.1, 0.6])
    assert np.array_equal(many[1], sol.evaluate(0.6))


def test_mtsm_handoff_is_full_form_value():
    _, frag, sol = _small_scnf(MTSM)
    for l in range(frag.h):
        assert np.array_equal(sol.handoffs[l], sol.eval_in(l, [frag.grids[l][-1]])[0][0])


def test_single_subdomain_equals_direct_training():
    p = dahlquist_problem()
    cfg = TrainingConfig(epochs=500, init=ConstantInit(-10.0))
    frag = make_fragmentation(0.0, 2.0, 1, 9)
    sol = solve_scnf(p, TSM, 2, 5, cfg, frag)
    direct = train(p, default_specs(p, TSM, 2), initial_weights(p, 2, 5, cfg.init), frag.grids[0], cfg)
    assert np.array_equal(sol.loss_traces[0], direct.loss_trace)
    assert np.array_equal(sol.weights[0, 0], direct.weights[0].data)


def test_subdomain_retraining_is_reproducible():
    p, frag, sol = _small_scnf(h=3)
    cfg = TrainingConfig(epochs=300, incremental=True, init=ConstantInit(0.0))
    l = 2
    specs = sol.specs(l)
    res = train(p, specs, initial_weights(p, 2, 4, cfg.init), frag.grids[l], cfg)
    assert np.array_equal(res.weights[0].data, sol.weights[l, 0])


def test_independent_init_differs_only_with_flag():
    p = oscillating_problem()
    frag = make_fragmentation(0.0, 0.5, 2, 3)
    cfg = TrainingConfig(epochs=0, init=UniformInit(-0.5, 0.5, seed=1))
    same = solve_scnf(p, TSM, 1, 3, cfg, frag)
    indep = solve_scnf(p, TSM, 1, 3, cfg, frag, independent_init=True)
    assert np.array_equal(same.weights[0], same.weights[1])
    assert np.array_equal(indep.weights[0], same.weights[0])
    assert not np.array_equal(indep.weights[1], indep.weights[0])


def test_system_solver_and_dim_one_degeneracy():
    p = rigid_body_problem()
    frag = make_fragmentation(0.0, 1.0, 2, 4)
    cfg = TrainingConfig(epochs=200, incremental=True, penalise_invariants=True)
    sol = solve_scnf_system(p, TSM, 2, 3, cfg, frag)
    assert sol.weights.shape == (2, 3, 2, 10) and sol.failed_at is None
    q = dahlquist_problem()
    f1 = make_fragmentation(0.0, 1.0, 2, 4)
    a = solve_scnf(q, TSM, 2, 3, TrainingConfig(epochs=50), f1)
    b = solve_scnf_system(q, TSM, 2, 3, TrainingConfig(epochs=50), f1)
    assert np.array_equal(a.weights, b.weights)


def test_domain_must_match_problem():
    p = dahlquist_problem()
    with pytest.raises(ConfigError):
        solve_scnf(p, TSM, 1, 3, TrainingConfig(epochs=1), make_fragmentation(0.0, 3.0, 2, 3))
    with pytest.raises(ConfigError):
        solve_scnf(p, "x", 1, 3, TrainingConfig(epochs=1), make_fragmentation(0.0, 1.0, 2, 3))


def test_failure_marks_subdomain():
    p = dahlquist_problem()
    cfg = TrainingConfig(epochs=50, alpha=1e300, init=ConstantInit(1e300))
    sol = solve_scnf(p, TSM, 1, 2, cfg, make_fragmentation(0.0, 1.0, 3, 3))
    assert sol.failed_at == 0 and sol.solved == 0


def test_midpoint_error_tracks_grid_error():
    p = oscillating_problem()
    frag = make_fragmentation(0.0, 3.0, 12, 9)
    cfg = TrainingConfig(epochs=20_000, incremental=True, init=ConstantInit(0.0))
    sol = solve_scnf(p, TSM, 3, 5, cfg, frag)
    rep = delta_u_fragmented(sol, p.analytic)
    for l in range(frag.h):
        g = frag.grids[l]
        mids = 0.5 * (g[:-1] + g[1:])
        err = np.abs(sol.eval_in(l, mids)[0][:, 0] - np.array([p.analytic(t)[0] for t in mids]))
        assert err.max() <= 10 * rep.pointwise.reshape(frag.h, -1)[l].max() + 1e-12
