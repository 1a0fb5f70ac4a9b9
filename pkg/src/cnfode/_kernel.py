"""Compiled inner loops for neural-form training.

Weights for ``d`` components, ``m`` networks each, live in one flat vector:
component-major, then network, then the per-network layout
``[nu(H), eta(H), rho(H), gamma]``. The reference (readable, numpy) path in
``neural_form`` / ``training`` is the oracle these loops are tested against.
"""
from __future__ import annotations

import math

import numba as nb
import numpy as np

FAILED_NONE = -1


@nb.njit(cache=True, inline="always")
def _sig(z):
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@nb.njit(cache=True)
def adam_update(w, g, m1, m2, step, alpha, beta1, beta2, eps):
    """Bias-corrected Adam step, in place. ``step`` is a length-1 int64 counter."""
    t = step[0] + 1
    step[0] = t
    bc1 = 1.0 - math.pow(beta1, t)
    bc2 = 1.0 - math.pow(beta2, t)
    for i in range(w.shape[0]):
        gi = g[i]
        m1[i] = beta1 * m1[i] + (1.0 - beta1) * gi
        m2[i] = beta2 * m2[i] + (1.0 - beta2) * gi * gi
        mhat = m1[i] / bc1
        vhat = m2[i] / bc2
        w[i] -= alpha * mhat / (math.sqrt(vhat) + eps)


@nb.njit(cache=True)
def _forms(W, d, m, H, tsm, anchors, s, pw, val, dval, sig, dsig):
    P = 3 * H + 1
    pw[0] = 1.0
    for e in range(1, m + 1):
        pw[e] = pw[e - 1] * s
    for c in range(d):
        v = anchors[c] if tsm else 0.0
        dv = 0.0
        for k in range(m):
            off = (c * m + k) * P
            n = 0.0
            dn = 0.0
            for j in range(H):
                nu = W[off + j]
                rho = W[off + 2 * H + j]
                sg = _sig(nu * s + W[off + H + j])
                ds = sg * (1.0 - sg)
                idx = (c * m + k) * H + j
                sig[idx] = sg
                dsig[idx] = ds
                n += rho * sg
                dn += rho * ds * nu
            n += W[off + 3 * H]
            e = k + 1 if tsm else k
            v += n * pw[e]
            dv += dn * pw[e]
            if e > 0:
                dv += e * n * pw[e - 1]
        val[c] = v
        dval[c] = dv


@nb.njit(cache=True)
def _accumulate(W, d, m, H, tsm, s, pw, alpha, beta, sig, dsig, g, scale):
    # g += scale * sum_c (alpha_c dval_c/dW + beta_c d(dval_c)/dW)
    P = 3 * H + 1
    for c in range(d):
        a = alpha[c] * scale
        b = beta[c] * scale
        for k in range(m):
            off = (c * m + k) * P
            e = k + 1 if tsm else k
            cv = a * pw[e]
            if e > 0:
                cv += b * e * pw[e - 1]
            cd = b * pw[e]
            for j in range(H):
                idx = (c * m + k) * H + j
                sg = sig[idx]
                ds = dsig[idx]
                dds = ds * (1.0 - 2.0 * sg)
                nu = W[off + j]
                rho = W[off + 2 * H + j]
                g[off + j] += cv * rho * ds * s + cd * rho * (ds + dds * nu * s)
                g[off + H + j] += cv * rho * ds + cd * rho * dds * nu
                g[off + 2 * H + j] += cv * sg + cd * ds * nu
            g[off + 3 * H] += cv



@nb.njit(cache=True)
def _point(W, d, m, H, tsm, anchors, t, s, params, residual, jacobian,
           invariants, invariants_jac, n_inv, inv_targets, penalise,
           want_grad, g, scale, pw, val, dval, sig, dsig, r, ju, jdu, q, qj,
           alpha, beta, parts):
    """Cost terms of one grid point; optionally accumulates their gradient."""
    _forms(W, d, m, H, tsm, anchors, s, pw, val, dval, sig, dsig)
    residual(t, val, dval, params, r)
    res = 0.0
    for c in range(d):
        res += r[c] * r[c]
    res *= 0.5
    inv = 0.0
    use_inv = penalise and n_inv > 0
    if use_inv:
        invariants(val, params, q)
        for j in range(n_inv):
            dq = q[j] - inv_targets[j]
            inv += dq * dq
        inv *= 0.5
    parts[0] += res
    parts[2] += inv
    if want_grad:
        jacobian(t, val, dval, params, ju, jdu)
        for cp in range(d):
            a = 0.0
            b = 0.0
            for c in range(d):
                a += r[c] * ju[c, cp]
                b += r[c] * jdu[c, cp]
            alpha[cp] = a
            beta[cp] = b
        if use_inv:
            invariants_jac(val, params, qj)
            for cp in range(d):
                a = 0.0
                for j in range(n_inv):
                    a += (q[j] - inv_targets[j]) * qj[j, cp]
                alpha[cp] += a
        _accumulate(W, d, m, H, tsm, s, pw, alpha, beta, sig, dsig, g, scale)
    return res + inv


@nb.njit(cache=True)
def _initial_condition(W, d, m, H, anchors, want_grad, g, scale, pw, val, dval,
                       sig, dsig, alpha, beta, parts):
    # mTSM penalty 0.5*|N_1(0) - anchor|^2; at s = 0 the form value is N_1(0)
    _forms(W, d, m, H, False, anchors, 0.0, pw, val, dval, sig, dsig)
    e = 0.0
    for c in range(d):
        diff = val[c] - anchors[c]
        e += diff * diff
        alpha[c] = diff
        beta[c] = 0.0
    e *= 0.5
    parts[1] += e
    if want_grad:
        _accumulate(W, d, m, H, False, 0.0, pw, alpha, beta, sig, dsig, g, scale)
    return e


@nb.njit(cache=True)
def _all_finite(x):
    for i in range(x.shape[0]):
        if not math.isfinite(x[i]):
            return False
    return True


@nb.njit(cache=True)
def cost_and_gradient(W, d, m, H, tsm, t0, anchors, grid, n_active, params,
                      residual, jacobian, invariants, invariants_jac, n_inv,
                      inv_targets, penalise, g, parts):
    """Summed cost over ``grid`` (+ mTSM penalty); gradient over the first ``n_active`` points."""
    pw = np.empty(m + 1)
    val = np.empty(d)
    dval = np.empty(d)
    sig = np.empty(d * m * H)
    dsig = np.empty(d * m * H)
    r = np.empty(d)
    ju = np.zeros((d, d))
    jdu = np.zeros((d, d))
    q = np.empty(max(n_inv, 1))
    qj = np.zeros((max(n_inv, 1), d))
    alpha = np.empty(d)
    beta = np.empty(d)
    g[:] = 0.0
    parts[:] = 0.0
    total = 0.0
    for i in range(grid.shape[0]):
        grad_here = i < n_active
        total += _point(W, d, m, H, tsm, anchors, grid[i], grid[i] - t0, params,
                        residual, jacobian, invariants, invariants_jac, n_inv,
                        inv_targets, penalise, grad_here, g, 1.0, pw, val, dval,
                        sig, dsig, r, ju, jdu, q, qj, alpha, beta, parts)
    if not tsm:
        total += _initial_condition(W, d, m, H, anchors, True, g, 1.0, pw, val, dval,
                                    sig, dsig, alpha, beta, parts)
    return total


@nb.njit(cache=True)
def evaluate_forms(W, d, m, H, tsm, t0, anchors, times, out_val, out_dval):
    pw = np.empty(m + 1)
    val = np.empty(d)
    dval = np.empty(d)
    sig = np.empty(d * m * H)
    dsig = np.empty(d * m * H)
    for i in range(times.shape[0]):
        _forms(W, d, m, H, tsm, anchors, times[i] - t0, pw, val, dval, sig, dsig)
        for c in range(d):
            out_val[i, c] = val[c]
            out_dval[i, c] = dval[c]


@nb.njit(cache=True)
def train_loop(W, d, m, H, tsm, t0, anchors, grid, n_active, epochs, single_batch,
               params, residual, jacobian, invariants, invariants_jac, n_inv,
               inv_targets, penalise, m1, m2, step, alpha_lr, beta1, beta2, eps,
               ref, record_err, trace, err_trace, offset):
    """Run ``epochs`` epochs; returns the failing epoch (relative) or -1.

    ``trace[offset + e]`` receives the full-grid cost before epoch ``e``'s
    updates and ``err_trace`` the mean absolute deviation from ``ref``.
    """
    n = grid.shape[0]
    pw = np.empty(m + 1)
    val = np.empty(d)
    dval = np.empty(d)
    sig = np.empty(d * m * H)
    dsig = np.empty(d * m * H)
    r = np.empty(d)
    ju = np.zeros((d, d))
    jdu = np.zeros((d, d))
    q = np.empty(max(n_inv, 1))
    qj = np.zeros((max(n_inv, 1), d))
    alpha = np.empty(d)
    beta = np.empty(d)
    parts = np.zeros(3)
    g = np.zeros(W.shape[0])
    inv_n = 1.0 / n_active
    for ep in range(epochs):
        total = 0.0
        err = 0.0
        fb = not single_batch
        if fb:
            g[:] = 0.0
        for i in range(n):
            grad_here = fb and i < n_active
            total += _point(W, d, m, H, tsm, anchors, grid[i], grid[i] - t0, params,
                            residual, jacobian, invariants, invariants_jac, n_inv,
                            inv_targets, penalise, grad_here, g, inv_n, pw,
                            val, dval, sig, dsig, r, ju, jdu, q, qj, alpha, beta, parts)
            if record_err:
                for c in range(d):
                    err += abs(val[c] - ref[i, c])
        if not tsm:
            total += _initial_condition(W, d, m, H, anchors, fb, g, inv_n, pw, val,
                                        dval, sig, dsig, alpha, beta, parts)
        trace[offset + ep] = total
        if record_err:
            err_trace[offset + ep] = err / (n * d)
        if not math.isfinite(total):
            return ep
        if fb:
            if not _all_finite(g):
                return ep
            adam_update(W, g, m1, m2, step, alpha_lr, beta1, beta2, eps)
        else:
            for i in range(n_active):
                g[:] = 0.0
                _point(W, d, m, H, tsm, anchors, grid[i], grid[i] - t0, params,
                       residual, jacobian, invariants, invariants_jac, n_inv,
                       inv_targets, penalise, True, g, 1.0, pw, val, dval, sig,
                       dsig, r, ju, jdu, q, qj, alpha, beta, parts)
                if i == 0 and not tsm:
                    _initial_condition(W, d, m, H, anchors, True, g, 1.0, pw, val,
                                       dval, sig, dsig, alpha, beta, parts)
                if not _all_finite(g):
                    return ep
                adam_update(W, g, m1, m2, step, alpha_lr, beta1, beta2, eps)
    return FAILED_NONE
