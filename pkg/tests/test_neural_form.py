import numpy as np
import pytest

from cnfode.ffnn import ConstantInit, UniformInit, network_eval, network_gradients
from cnfode.neural_form import (MTSM, TSM, NeuralFormSpec, WeightMatrix, exponents, nf_eval,
                                nf_weight_grads)

from conftest import central_diff, random_matrix, rel_close


def test_weight_matrix_shape_and_networks(rng):
    P = random_matrix(rng, 3, 5)
    assert (P.m, P.H) == (3, 5)
    assert len(P.networks) == 3
    assert WeightMatrix.from_networks(P.networks) == P
    assert WeightMatrix.zeros(2, 4).data.shape == (2, 13)


def test_weight_matrix_copy_is_independent(rng):
    P = random_matrix(rng, 2, 3)
    Q = P.copy()
    Q.data[0, 0] += 1.0
    assert P != Q


def test_weight_matrix_initial_constant():
    P = WeightMatrix.initial(ConstantInit(-10.0), 4, 5)
    assert np.all(P.data == -10.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        NeuralFormSpec("other", 1, 0.0, 1.0)
    with pytest.raises(ValueError):
        NeuralFormSpec(TSM, 0, 0.0, 1.0)


def test_exponents():
    assert exponents(TSM, 3) == [1, 2, 3]
    assert exponents(MTSM, 3) == [0, 1, 2]


def test_tsm_exact_initial_value(rng):
    for _ in range(1000):
        m = int(rng.integers(1, 6))
        t0, u0 = rng.uniform(-5, 5), rng.uniform(-5, 5)
        P = random_matrix(rng, m, 5, scale=5.0)
        assert abs(nf_eval(NeuralFormSpec(TSM, m, t0, u0), P, t0)[0] - u0) < 1e-14


def test_tsm_zero_weights():
    assert nf_eval(NeuralFormSpec(TSM, 1, 0.0, 1.0), WeightMatrix.zeros(1, 5), 0.5) == (1.0, 0.0)


def test_order_one_reduction(rng):
    P = random_matrix(rng, 1, 5)
    spec = NeuralFormSpec(TSM, 1, 0.0, 0.7)
    for t in rng.uniform(0, 3, 20):
        n, dn = network_eval(P.networks[0], t)
        value, dvalue = nf_eval(spec, P, t)
        assert value == 0.7 + n * t
        assert dvalue == dn * t + n


def test_shift_consistency(rng):
    for _ in range(200):
        m = int(rng.integers(1, 6))
        P = random_matrix(rng, m, 5)
        t0, u0 = rng.uniform(-5, 5), rng.uniform(-2, 2)
        t = t0 + rng.uniform(0, 1)
        shifted = nf_eval(NeuralFormSpec(TSM, m, t0, u0), P, t)
        plain = nf_eval(NeuralFormSpec(TSM, m, 0.0, u0), P, t - t0)
        assert abs(shifted[0] - plain[0]) < 1e-14
        assert abs(shifted[1] - plain[1]) < 1e-14


@pytest.mark.parametrize("variant", [TSM, MTSM])
@pytest.mark.parametrize("m", [1, 2, 3, 4, 5])
def test_time_derivative_matches_fd(rng, variant, m):
    for _ in range(10):
        P = random_matrix(rng, m, 5)
        t0 = rng.uniform(0, 2)
        spec = NeuralFormSpec(variant, m, t0, rng.uniform(-1, 1))
        t = t0 + rng.uniform(0.05, 1.0)
        h = 1e-5
        fd = (nf_eval(spec, P, t + h)[0] - nf_eval(spec, P, t - h)[0]) / (2 * h)
        assert rel_close(nf_eval(spec, P, t)[1], fd, 1e-8, 1e-9)


def test_mtsm_derivative_example(rng):
    P = random_matrix(rng, 2, 5)
    spec = NeuralFormSpec(MTSM, 2, 0.5, 0.0)
    h = 1e-5
    fd = (nf_eval(spec, P, 0.7 + h)[0] - nf_eval(spec, P, 0.7 - h)[0]) / (2 * h)
    assert rel_close(nf_eval(spec, P, 0.7)[1], fd, 1e-8, 1e-10)


def test_mtsm_derivative_at_anchor_has_no_nan(rng):
    P = random_matrix(rng, 3, 5)
    spec = NeuralFormSpec(MTSM, 3, 1.0, 0.0)
    value, dvalue = nf_eval(spec, P, 1.0)
    n1, dn1 = network_eval(P.networks[0], 0.0)
    n2, dn2 = network_eval(P.networks[1], 0.0)
    assert value == n1
    # only N1' and the s^0 term of network 2 survive at s = 0
    assert dvalue == pytest.approx(dn1 + n2, abs=1e-15)


def _flat_fd(spec, P, t, which):
    def f(x):
        return nf_eval(spec, WeightMatrix(x.reshape(P.data.shape)), t)[which]
    return central_diff(f, P.data.ravel())


@pytest.mark.parametrize("variant", [TSM, MTSM])
@pytest.mark.parametrize("m", [1, 2, 3])
def test_weight_grads_match_fd(rng, variant, m):
    for _ in range(5):
        P = random_matrix(rng, m, 4)
        t0 = rng.uniform(0, 1)
        spec = NeuralFormSpec(variant, m, t0, rng.uniform(-1, 1))
        t = t0 + rng.uniform(0, 0.8)
        gv, gdv = nf_weight_grads(spec, P, t)
        analytic_v = np.concatenate([g.flat() for g in gv])
        analytic_dv = np.concatenate([g.flat() for g in gdv])
        assert rel_close(analytic_v, _flat_fd(spec, P, t, 0), 1e-6, 1e-9)
        assert rel_close(analytic_dv, _flat_fd(spec, P, t, 1), 1e-6, 1e-9)


def test_tsm_grads_vanish_at_anchor(rng):
    P = random_matrix(rng, 3, 5)
    gv, _ = nf_weight_grads(NeuralFormSpec(TSM, 3, 0.4, 1.0), P, 0.4)
    assert all(np.all(g.flat() == 0.0) for g in gv)


def test_mtsm_grads_at_anchor_only_first_network(rng):
    P = random_matrix(rng, 3, 5)
    for t0 in (0.0, 1.3):
        gv, _ = nf_weight_grads(NeuralFormSpec(MTSM, 3, t0, 1.0), P, t0)
        # networks see the shifted time, which is 0 at the anchor
        expected, _ = network_gradients(P.networks[0], 0.0)
        assert np.array_equal(gv[0].flat(), expected.flat())
        assert all(np.all(g.flat() == 0.0) for g in gv[1:])


def test_random_init_systematic_extension():
    mode = UniformInit(-10.5, -9.5, seed=5)
    assert np.array_equal(WeightMatrix.initial(mode, 1, 5).data[0],
                          WeightMatrix.initial(mode, 4, 5).data[0])


def test_mismatched_order_rejected(rng):
    with pytest.raises(ValueError):
        nf_eval(NeuralFormSpec(TSM, 2, 0.0, 1.0), random_matrix(rng, 3, 5), 0.1)
