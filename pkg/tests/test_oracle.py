import numpy as np
import pytest

from cnfode.ffnn import ConstantInit
from cnfode.fragmentation import FragmentedSolution, make_fragmentation, solve_scnf
from cnfode.neural_form import TSM
from cnfode.oracle import convergence_order, delta_u, delta_u_fragmented, rk4_solve
from cnfode.problems import dahlquist_problem, oscillating_problem
from cnfode.training import ConfigError, TrainingConfig


def test_rk4_constant_solution():
    from test_training import still_problem
    p = still_problem()
    assert np.all(rk4_solve(p, np.linspace(0, 1, 7)) == 0.3)


def test_rk4_amplification_factor():
    z = -10.0 / 9.0
    factor = 1 + z + z ** 2 / 2 + z ** 3 / 6 + z ** 4 / 24
    out = rk4_solve(dahlquist_problem(), [0.0, 2.0 / 9.0])
    assert abs(out[1, 0] - factor) < 1e-14


def test_rk4_one_step_error_context():
    # standard RK4 on ten points: first-step error is about 1.2e-2
    out = rk4_solve(dahlquist_problem(), np.linspace(0, 2, 10))
    assert abs(out[1, 0] - np.exp(-10 / 9)) == pytest.approx(1.2e-2, abs=2e-3)


def test_rk4_order():
    assert 3.8 <= convergence_order(dahlquist_problem(), 2.0, 40) <= 4.2


def test_rk4_halving_reduces_error_sixteen_fold():
    p = dahlquist_problem()
    errs = []
    for n in (20, 40):
        g = np.linspace(0, 2, n + 1)
        errs.append(np.max(np.abs(rk4_solve(p, g)[:, 0] - np.exp(-5 * g))))
    assert 12 < errs[0] / errs[1] < 20


def test_rk4_substeps_equal_fine_grid():
    p = oscillating_problem()
    a = rk4_solve(p, [0.0, 1.0], substeps=100)[-1]
    b = rk4_solve(p, np.linspace(0, 1, 101))[-1]
    assert abs(a[0] - b[0]) < 1e-12


def test_rk4_rejects_bad_grid():
    with pytest.raises(ConfigError):
        rk4_solve(dahlquist_problem(), [0.0, 1.0, 0.5])


def test_delta_u_basics(rng):
    assert delta_u([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert delta_u([1.0, 1.0], [0.0, 2.0]) == 1.0
    a, b = rng.normal(size=20), rng.normal(size=20)
    assert abs(delta_u(a + 3.0, b + 3.0) - delta_u(a, b)) < 1e-15 * 10
    with pytest.raises(ValueError):
        delta_u([1.0], [1.0, 2.0])


def test_delta_u_translation_invariant_exact():
    a = np.array([0.25, 0.5, -0.75])
    b = np.array([0.5, 0.25, 0.0])
    assert abs(delta_u(a + 1.0, b + 1.0) - delta_u(a, b)) <= 1e-15


def _exact_injected(h):
    """A fragmented solution whose TSM forms reproduce u = u0 exactly (zero weights, zero slope)."""
    frag = make_fragmentation(0.0, 1.0, h, 4)
    return FragmentedSolution(frag, TSM, 1, 2, np.array([2.0]), np.zeros((h, 1, 1, 7)),
                              np.full((h, 1), 2.0), np.zeros(h))


def test_exact_solution_gives_zero_errors():
    rep = delta_u_fragmented(_exact_injected(3), lambda t: np.array([2.0]))
    assert rep.delta_u == 0.0 and rep.interface_linf == 0.0
    assert np.all(rep.delta_u_l == 0.0) and np.all(rep.pointwise == 0.0)


def test_single_subdomain_report():
    rep = delta_u_fragmented(_exact_injected(1), lambda t: np.array([1.0 + t]))
    assert rep.delta_u_l.shape == (1,) and rep.delta_u_l[0] == rep.delta_u


def test_fragmented_mean_identity():
    p = oscillating_problem()
    frag = make_fragmentation(0.0, 1.0, 5, 6)
    sol = solve_scnf(p, TSM, 2, 3, TrainingConfig(epochs=300, incremental=True), frag)
    rep = delta_u_fragmented(sol, p.analytic)
    assert abs(rep.delta_u - rep.delta_u_l.mean()) < 1e-14
    assert np.all(rep.delta_u_l >= 0) and rep.interface_linf >= 0
    # each subdomain averages its own points, interfaces counted on both sides
    for l in range(frag.h):
        g = frag.grids[l]
        own = np.mean(np.abs(sol.eval_in(l, g)[0][:, 0] - [p.analytic(t)[0] for t in g]))
        assert rep.delta_u_l[l] == pytest.approx(own, rel=1e-14)
