"""Compiled inner loops for the 3x3 Zakharov-Shabat propagation.

All kernels work in the interaction picture

    psi = diag(e^{i lam t}, e^{-i lam t}, e^{-i lam t}) phi,

where the free oscillation is removed exactly and the remaining system
``psi' = N(t) psi`` with

    N = [[0, q1 e^{2i lam t}, q2 e^{2i lam t}],
         [-q1* e^{-2i lam t}, 0, 0],
         [-q2* e^{-2i lam t}, 0, 0]]

is advanced with the trapezoidal rule

    (I - h/2 N_{n+1}) psi_{n+1} = (I + h/2 N_n) psi_n.

The 3x3 solve has a closed form because p_j r_j = -|q_j|^2 does not depend on
lambda.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _coefficients(q1, q2, t, lam):
    e = np.exp(2j * lam * t)
    ei = 1.0 / e
    p1 = q1 * e
    p2 = q2 * e
    r1 = -np.conj(q1) * ei
    r2 = -np.conj(q2) * ei
    return p1, p2, r1, r2


@njit(cache=True)
def _apply_plus(c, p1, p2, r1, r2, x1, x2, x3):
    """(I + c N) x"""
    return x1 + c * (p1 * x2 + p2 * x3), x2 + c * r1 * x1, x3 + c * r2 * x1


@njit(cache=True)
def _solve_minus(c, p1, p2, r1, r2, s, y1, y2, y3):
    """Solve (I - c N) x = y; ``s`` is |q1|^2 + |q2|^2 at the node."""
    x1 = (y1 + c * (p1 * y2 + p2 * y3)) / (1.0 + c * c * s)
    return x1, y2 + c * r1 * x1, y3 + c * r2 * x1


@njit(cache=True)
def scatter(q1, q2, t0, h, lams):
    """Scattering data (a, b1, b2) for every lambda in ``lams``."""
    n = q1.shape[0]
    m = lams.shape[0]
    a = np.empty(m, np.complex128)
    b1 = np.empty(m, np.complex128)
    b2 = np.empty(m, np.complex128)
    c = 0.5 * h
    s = np.abs(q1) ** 2 + np.abs(q2) ** 2
    qc1 = np.conj(q1)
    qc2 = np.conj(q2)
    for k in range(m):
        lam = lams[k]
        # e^{2i lam t_n} by recurrence; refreshed periodically to bound drift
        z = np.exp(2j * lam * h)
        zi = 1.0 / z
        e = np.exp(2j * lam * t0)
        ei = 1.0 / e
        x1 = 1.0 + 0j
        x2 = 0j
        x3 = 0j
        p1 = q1[0] * e
        p2 = q2[0] * e
        r1 = -qc1[0] * ei
        r2 = -qc2[0] * ei
        for i in range(n - 1):
            y1 = x1 + c * (p1 * x2 + p2 * x3)
            y2 = x2 + c * r1 * x1
            y3 = x3 + c * r2 * x1
            if (i + 1) % 256 == 0:
                e = np.exp(2j * lam * (t0 + (i + 1) * h))
                ei = 1.0 / e
            else:
                e = e * z
                ei = ei * zi
            p1 = q1[i + 1] * e
            p2 = q2[i + 1] * e
            r1 = -qc1[i + 1] * ei
            r2 = -qc2[i + 1] * ei
            x1 = (y1 + c * (p1 * y2 + p2 * y3)) / (1.0 + c * c * s[i + 1])
            x2 = y2 + c * r1 * x1
            x3 = y3 + c * r2 * x1
        a[k] = x1
        b1[k] = x2
        b2[k] = x3
    return a, b1, b2


@njit(cache=True)
def scatter_with_derivative(q1, q2, t0, h, lams):
    """Scattering data plus da/dlambda from the differentiated recursion.

    The derivative is the exact derivative of the discrete a(lambda), i.e.
    the trapezoidal rule applied to the 6-dimensional augmented system.
    """
    n = q1.shape[0]
    m = lams.shape[0]
    a = np.empty(m, np.complex128)
    b1 = np.empty(m, np.complex128)
    b2 = np.empty(m, np.complex128)
    ap = np.empty(m, np.complex128)
    c = 0.5 * h
    s = np.abs(q1) ** 2 + np.abs(q2) ** 2
    for k in range(m):
        lam = lams[k]
        x1 = 1.0 + 0j
        x2 = 0j
        x3 = 0j
        w1 = 0j
        w2 = 0j
        w3 = 0j
        tn = t0
        p1, p2, r1, r2 = _coefficients(q1[0], q2[0], tn, lam)
        for i in range(n - 1):
            # derivative of N at the current node: p' = 2it p, r' = -2it r
            dp1 = 2j * tn * p1
            dp2 = 2j * tn * p2
            dr1 = -2j * tn * r1
            dr2 = -2j * tn * r2
            y1, y2, y3 = _apply_plus(c, p1, p2, r1, r2, x1, x2, x3)
            z1, z2, z3 = _apply_plus(c, p1, p2, r1, r2, w1, w2, w3)
            z1 += c * (dp1 * x2 + dp2 * x3)
            z2 += c * dr1 * x1
            z3 += c * dr2 * x1
            tn = t0 + (i + 1) * h
            p1, p2, r1, r2 = _coefficients(q1[i + 1], q2[i + 1], tn, lam)
            x1, x2, x3 = _solve_minus(c, p1, p2, r1, r2, s[i + 1], y1, y2, y3)
            dp1 = 2j * tn * p1
            dp2 = 2j * tn * p2
            dr1 = -2j * tn * r1
            dr2 = -2j * tn * r2
            z1 += c * (dp1 * x2 + dp2 * x3)
            z2 += c * dr1 * x1
            z3 += c * dr2 * x1
            w1, w2, w3 = _solve_minus(c, p1, p2, r1, r2, s[i + 1], z1, z2, z3)
        a[k] = x1
        b1[k] = x2
        b2[k] = x3
        ap[k] = w1
    return a, b1, b2, ap


@njit(cache=True)
def left_trajectory(q1, q2, t0, h, lam):
    """Interaction-picture trajectory of the solution starting at (1,0,0)."""
    n = q1.shape[0]
    out = np.empty((n, 3), np.complex128)
    c = 0.5 * h
    s = np.abs(q1) ** 2 + np.abs(q2) ** 2
    x1 = 1.0 + 0j
    x2 = 0j
    x3 = 0j
    out[0, 0] = x1
    out[0, 1] = x2
    out[0, 2] = x3
    p1, p2, r1, r2 = _coefficients(q1[0], q2[0], t0, lam)
    for i in range(n - 1):
        y1, y2, y3 = _apply_plus(c, p1, p2, r1, r2, x1, x2, x3)
        p1, p2, r1, r2 = _coefficients(q1[i + 1], q2[i + 1], t0 + (i + 1) * h, lam)
        x1, x2, x3 = _solve_minus(c, p1, p2, r1, r2, s[i + 1], y1, y2, y3)
        out[i + 1, 0] = x1
        out[i + 1, 1] = x2
        out[i + 1, 2] = x3
    return out


@njit(cache=True)
def right_trajectory(q1, q2, t0, h, lam):
    """Interaction-picture trajectories of the two solutions ending at (0,e_j).

    Integrates backwards with the same trapezoidal rule, so the pair is
    consistent with :func:`left_trajectory`. Shape ``(n, 3, 2)``.
    """
    n = q1.shape[0]
    out = np.zeros((n, 3, 2), np.complex128)
    c = 0.5 * h
    s = np.abs(q1) ** 2 + np.abs(q2) ** 2
    for col in range(2):
        x1 = 0j
        x2 = 1.0 + 0j if col == 0 else 0j
        x3 = 0j if col == 0 else 1.0 + 0j
        out[n - 1, 0, col] = x1
        out[n - 1, 1, col] = x2
        out[n - 1, 2, col] = x3
        p1, p2, r1, r2 = _coefficients(q1[n - 1], q2[n - 1], t0 + (n - 1) * h, lam)
        for i in range(n - 1, 0, -1):
            # (I + c N_{i-1}) x_{i-1} = (I - c N_i) x_i
            y1, y2, y3 = _apply_plus(-c, p1, p2, r1, r2, x1, x2, x3)
            p1, p2, r1, r2 = _coefficients(q1[i - 1], q2[i - 1], t0 + (i - 1) * h, lam)
            x1, x2, x3 = _solve_minus(-c, p1, p2, r1, r2, s[i - 1], y1, y2, y3)
            out[i - 1, 0, col] = x1
            out[i - 1, 1, col] = x2
            out[i - 1, 2, col] = x3
    return out


@njit(cache=True)
def peel_layers(coeff, c):
    """Layer-peeling recursion on the vector polynomial ``coeff`` (3, m).

    Returns q of shape (2, m + 2) with the first and last nodes zero, or
    the index of the layer whose leading coefficient vanished as the second
    value (0 on success).
    """
    m_layers = coeff.shape[1]
    q = np.zeros((2, m_layers + 2), np.complex128)
    v = coeff.copy()
    for m in range(m_layers, 0, -1):
        l0 = v[0, m - 1]
        if l0 == 0:
            return q, m
        ra = v[1, m - 1] / l0
        rb = v[2, m - 1] / l0
        r2 = ra.real**2 + ra.imag**2 + rb.real**2 + rb.imag**2
        x = (np.sqrt(r2 + 1.0) - 1.0) ** 2 / r2 if r2 > 0 else 0.0
        qa = -np.conj(ra) * (1 - x) / (2 * c)
        qb = -np.conj(rb) * (1 - x) / (2 * c)
        q[0, m] = qa
        q[1, m] = qb
        s = qa.real**2 + qa.imag**2 + qb.real**2 + qb.imag**2
        den = 1.0 + c * c * s
        cqa = c * np.conj(qa)
        cqb = c * np.conj(qb)
        # strip the layer in place; row 0 shifts down by one coefficient
        for k in range(m):
            y0 = v[0, k] - c * (qa * v[1, k] + qb * v[2, k])
            y1 = v[1, k] + cqa * v[0, k]
            y2 = v[2, k] + cqb * v[0, k]
            x0 = (y0 - c * (qa * y1 + qb * y2)) / den
            if k > 0:
                v[0, k - 1] = x0
            v[1, k] = y1 + cqa * x0
            v[2, k] = y2 + cqb * x0
    return q, 0
