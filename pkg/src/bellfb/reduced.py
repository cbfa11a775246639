"""Scalar reduced dynamics.

Concurrence SDEs for half- and full-parity measurement under constant local
set-points, the effective single-qubit Bloch-length SDE, and the map between
them.  Each ``d*`` function returns ``(drift, diffusion)`` so that
``dC = drift dt + diffusion dW``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qcore
from .qcore import ControlTargets, DomainError
from .sde import StepSizeError

ZERO_WINDOW = 1e-12
STIFF_WINDOW = 1e-3
BOUND_TOL = 1e-6


@dataclass(frozen=True)
class BlochState:
    """Effective qubit: Bloch length ``r``, angles and measurement rate."""

    r: float
    theta_t: float = 0.0
    phi_t: float = 0.0
    gamma_t: float = 2.0

    def __post_init__(self):
        if not -BOUND_TOL <= self.r <= 1 + BOUND_TOL:
            raise DomainError(f"Bloch length r={self.r} outside [0, 1]")
        if not 0 <= self.gamma_t <= 2:
            raise DomainError(f"effective rate {self.gamma_t} outside [0, 2]")


@dataclass(frozen=True)
class ReducedState:
    C: float
    targets: ControlTargets

    def __post_init__(self):
        if abs(self.C) > 1 + 1e-9:
            raise DomainError(f"|C| = {abs(self.C)} exceeds 1")


def dC_half(C, targets: ControlTargets):
    """Concurrence increment under half-parity measurement.

    The sign of the noise coefficient follows the Schmidt chart of
    :func:`bellfb.qcore.state_from_schmidt` (checked against the full
    stochastic Schrodinger equation on shared noise).
    """
    u, v, w = targets.u, targets.v, targets.w
    if abs(C) < ZERO_WINDOW:
        return abs(v * v - u * u), 0.0
    drift = (v * v - u * u) * w - C * (v * v + u * u)
    diffusion = -2 * C * np.sqrt(max(1 - C * C, 0.0)) * u * v
    return drift, diffusion


def dC_full(C, targets: ControlTargets):
    """Concurrence increment under full-parity measurement (signed C)."""
    u, v, w = targets.u, targets.v, targets.w
    k = u * u - v * v
    if abs(C) < ZERO_WINDOW:
        return 0.0, k
    one = 1 - C * C
    return one * k * k * (1 - w * w) / (2 * C), one * k * w


def dr_bloch(b: BlochState, u_t):
    """Bloch-length increment for a monitored qubit whose Bloch vector makes
    ``cos(angle) = u_t`` with the measurement axis."""
    r, g = b.r, b.gamma_t
    if r < ZERO_WINDOW:
        if abs(u_t) != 1 and g > 0:
            raise DomainError("drift is singular at r = 0 unless u_t = +-1")
        return 0.0, (1 - r * r) * np.sqrt(g / 2) * u_t
    one = 1 - r * r
    return one * g * (1 - u_t * u_t) / (4 * r), one * np.sqrt(g / 2) * u_t


def map_two_qubit_to_bloch(targets: ControlTargets):
    """``(u_t, gamma_t)`` of the effective qubit for full-parity set-points.

    The Bloch noise is ``sgn(u^2 - v^2) dW`` in terms of the two-qubit
    measurement noise; see :func:`mapped_noise_sign`.
    """
    k = targets.u ** 2 - targets.v ** 2
    return targets.w, 2 * k * k


def mapped_noise_sign(targets: ControlTargets):
    k = targets.u ** 2 - targets.v ** 2
    return 1.0 if k >= 0 else -1.0


def _jacobs_substep(r, rate, dt):
    """Exact solution of ``dr = (1 - r^2) rate / (2 r) dt`` over ``dt``."""
    return np.sqrt(1 - (1 - r * r) * np.exp(-rate * dt))


def _fold(z):
    """Map an Euler overshoot past |C| = 1 back inside by reflection."""
    return 2.0 - z if z > 1.0 else z


def integrate_half(C0, targets, dW, dt):
    """Integration of :func:`dC_half` on a given noise path.

    The step is taken on the complex overlap ``C + dC_R + i dC_I`` and the
    concurrence is its modulus.  Away from zero this is the Euler step of
    :func:`dC_half`; at zero it reproduces the ``|v^2 - u^2| dt`` branch and
    it never produces negative concurrence for set-points with ``w < 0``.
    """
    u, v, w = targets.u, targets.v, targets.w
    k = v * v - u * u
    s2phi = np.sqrt(max(1 - w * w, 0.0))
    out = np.empty(len(dW) + 1)
    out[0] = C = float(C0)
    for i, dw in enumerate(dW):
        drift, diff = dC_half(C, targets)
        if abs(C) < ZERO_WINDOW:
            C = drift * dt
        else:
            re = C + (k * w - C * (v * v + u * u)) * dt + diff * dw
            im = np.sqrt(max(1 - C * C, 0.0)) * k * s2phi * dt
            C = _fold(np.hypot(re, im))
        out[i + 1] = C
    return out


def _modulus_or_euler(scheme):
    if scheme not in ("modulus", "euler"):
        raise DomainError(f"unknown integration scheme {scheme!r}")
    return scheme == "modulus"


def _length_recursion(x0, noise, rate, dW, dt, modulus, zero_noise=None):
    """Shared recursion for C under full parity and for the Bloch length.

    Both obey ``dx = (1 - x^2)[a dW + b^2 dt / (2x)]`` with ``a = noise`` and
    ``b^2 = rate``.  ``modulus`` advances the complex overlap
    ``|x| + (1 - x^2) a dW + i sqrt(1 - x^2) b dW`` and takes its modulus,
    which mirrors the discrete measurement step of the full state.
    Otherwise the Euler step is used, with the exact deterministic solution
    replacing the stiff 1/x drift below ``|x| = 1e-3``.  Either way the new
    value is ``sgn(x) |x + dx|``: the increment acts on the signed value and
    the old sign is kept, so a path reaching zero from one side is reflected.
    At ``x = 0`` the step is ``zero_noise * dW`` when ``zero_noise`` is given,
    which is how C changes sign.
    """
    b = np.sqrt(rate)
    out = np.empty(len(dW) + 1)
    out[0] = x = float(x0)
    for i, dw in enumerate(dW):
        mag = abs(x)
        if mag < ZERO_WINDOW and zero_noise is not None:
            x = zero_noise * dw
        else:
            sign = -1.0 if x < 0 else 1.0
            one = 1 - mag * mag
            if modulus:
                z = np.hypot(x + one * noise * dw, np.sqrt(max(one, 0.0)) * b * dw)
            elif mag < STIFF_WINDOW and rate > 0:
                z = sign * _jacobs_substep(mag, rate, dt) + one * noise * dw
            else:
                z = x + one * (rate / (2 * x) * dt + noise * dw)
            x = sign * _fold(abs(z))
        out[i + 1] = x
    return out


def integrate_full(C0, targets, dW, dt, scheme="modulus"):
    """Integrate the full-parity concurrence SDE on a noise path.

    Signed-C bookkeeping: the magnitude is advanced first and the sign
    re-attached, and a trajectory at ``C = 0`` moves by ``(u^2 - v^2) dW``,
    so C crosses zero with the noise.  ``scheme`` is ``"modulus"`` (default)
    or ``"euler"``; see :func:`_length_recursion`.
    """
    modulus = _modulus_or_euler(scheme)
    k = targets.u ** 2 - targets.v ** 2
    rate = k * k * (1 - targets.w ** 2)
    return _length_recursion(C0, k * targets.w, rate, dW, dt, modulus, zero_noise=k)


def integrate_bloch(r0, u_t, gamma_t, dW, dt, scheme="euler"):
    """Integrate :func:`dr_bloch` on a noise path.

    The default Euler scheme advances the deterministic part exactly for
    ``r < 1e-3``, which removes the 1/r stiffness of Jacobs' feedback and
    makes the ``u_t = 0`` trajectory from ``r = 0`` exact.
    """
    modulus = _modulus_or_euler(scheme)
    rate = gamma_t * (1 - u_t * u_t) / 2
    noise = np.sqrt(gamma_t / 2) * u_t
    zero = None if rate > 0 and not modulus else np.sqrt(gamma_t / 2)
    return np.abs(_length_recursion(r0, noise, rate, dW, dt, modulus, zero_noise=zero))


# ---------------------------------------------------------------------------
# effective-qubit encodings

def _op(a, b):
    return np.kron(a, b)


_I, _X, _Y, _Z = qcore.I2, qcore.SX, qcore.SY, qcore.SZ

ENCODINGS = {
    "hill": (_op(_I, _X), _op(_Z, _Y), _op(_Z, _Z)),
    "qeff1": (-_op(_X, _Z), _op(_Y, _Z), -_op(_Z, _Z)),
    "qeff2": (-_op(_Z, _X), _op(_Z, _Y), -_op(_Z, _Z)),
}


def pauli_closure(triple, tol=1e-12):
    """True if ``[s_a, s_b] = 2i eps_abc s_c`` holds for the triple."""
    sx, sy, sz = triple
    comm = lambda a, b: a @ b - b @ a
    return bool(np.allclose(comm(sx, sy), 2j * sz, atol=tol)
                and np.allclose(comm(sy, sz), 2j * sx, atol=tol)
                and np.allclose(comm(sz, sx), 2j * sy, atol=tol))


def effective_qubit_expectations(psi):
    """Encoded Bloch vectors of a pure state.

    Returns a dict keyed by encoding name (``hill``, ``qeff1``, ``qeff2``)
    with the three expectation values.  Only the ``hill`` triple obeys the
    Pauli algebra; the other two reproduce the Schmidt-angle Bloch vectors
    ``C (sin g_i sin 2phi, cos g_i sin 2phi, cos 2phi)`` on the
    ``theta = pi/2, delta_theta = 0`` slice but do not close
    (see :func:`pauli_closure`).
    """
    psi = qcore.check_pure(psi)
    return {name: np.array([np.real(np.vdot(psi, o @ psi)) for o in ops])
            for name, ops in ENCODINGS.items()}
