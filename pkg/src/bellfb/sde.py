"""Ito integration of the monitored and feedback-controlled evolution.

Pure-state steppers use the Euler-Maruyama increment followed by explicit
renormalisation.  Density-matrix steppers offer that increment
(``scheme="euler"``) and a positive ``K rho K^+`` form (``scheme="kraus"``)
that agrees with it to first order and with the pure-state step exactly at
unit efficiency.  States may carry leading batch dimensions; ``dW`` then has
the batch shape.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .qcore import DomainError, MeasurementOp, dagger, lmul, matvec, normalize


class StepSizeError(ArithmeticError):
    """The Euler increment changed the trace by more than the guard allows."""


TRACE_GUARD = 1e-6


class NoiseStream:
    """Reproducible Wiener increments for one trajectory.

    Uniform doubles come from numpy's counter-based Philox generator seeded
    with ``seed``; Gaussians are formed by the Box-Muller transform, two per
    uniform pair.  A one-value spare buffer makes the output independent of
    how the draws are chunked.
    """

    def __init__(self, seed: int, dt: float):
        if dt <= 0:
            raise DomainError("dt must be positive")
        self.seed = int(seed)
        self.dt = float(dt)
        self._gen = np.random.Generator(np.random.Philox(self.seed))
        self._spare = np.empty(0)
        self._hash = hashlib.sha256()
        self.count = 0

    def normals(self, n: int) -> np.ndarray:
        need = n - self._spare.size
        if need > 0:
            pairs = (need + 1) // 2
            u = self._gen.random(2 * pairs)
            r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
            ang = 2.0 * np.pi * u[1::2]
            z = np.empty(2 * pairs)
            z[0::2] = r * np.cos(ang)
            z[1::2] = r * np.sin(ang)
            pool = np.concatenate([self._spare, z])
        else:
            pool = self._spare
        out, self._spare = pool[:n], pool[n:]
        return out

    def increments(self, n: int) -> np.ndarray:
        """Next ``n`` increments ``dW ~ Normal(0, dt)``."""
        dw = np.sqrt(self.dt) * self.normals(n)
        self._hash.update(dw.tobytes())
        self.count += n
        return dw

    def next(self) -> float:
        return float(self.increments(1)[0])

    def checksum(self) -> str:
        """SHA-256 of every increment handed out so far."""
        return self._hash.hexdigest()


@dataclass(frozen=True)
class StepRecord:
    t: float
    dW: float
    dV: float


def _m_apply(m: MeasurementOp, x):
    if m.diagonal is not None:
        return np.sqrt(m.gamma / 2) * m.diagonal * x
    return matvec(m.lindblad, x)


def _require_pure(m):
    if m.eta != 1.0:
        raise DomainError(f"pure-state evolution requires eta = 1 (got {m.eta}); use step_sme")


def _sse_increment(psi, m, dW, dt):
    g = np.sqrt(m.gamma / 2)
    dW = np.asarray(dW)[..., None]
    if m.diagonal is not None:
        # M - <M> is real and diagonal: work with real factors per component
        delta = g * (m.diagonal - m.expect(psi)[..., None])
        return delta * psi, (delta * dW - 0.5 * delta * delta * dt) * psi
    mean = g * m.expect(psi)[..., None]
    d = _m_apply(m, psi) - mean * psi
    dd = _m_apply(m, d) - mean * d
    return d, -0.5 * dd * dt + d * dW


def step_sse(psi, m: MeasurementOp, dW, dt, renormalize=True):
    """One Euler step of the stochastic Schrodinger equation."""
    _require_pure(m)
    psi = np.asarray(psi, dtype=complex)
    _, inc = _sse_increment(psi, m, dW, dt)
    out = psi + inc
    return normalize(out) if renormalize else out


def step_wm_pure(psi, m: MeasurementOp, H_F, dW, dt, renormalize=True):
    """Euler step of the pure-state Wiseman-Milburn feedback equation.

    The feedback Hamiltonian is driven by the homodyne current,
    ``H_F dV/dt`` with ``dV = <X> dt + kappa dW`` and
    ``kappa = 1/sqrt(2 Gamma)``.  ``H_F`` may be a single 4x4 matrix or one
    per trajectory.
    """
    _require_pure(m)
    psi = np.asarray(psi, dtype=complex)
    dW = np.asarray(dW)[..., None]
    kappa = 1.0 / np.sqrt(2 * m.gamma)
    x = m.expect(psi)[..., None]
    d, inc = _sse_increment(psi, m, dW[..., 0], dt)
    hpsi = _hvec(H_F, psi)
    fb = (-1j * x * hpsi * dt
          - 1j * kappa * _hvec(H_F, d) * dt
          - 1j * kappa * hpsi * dW
          - 0.5 * kappa ** 2 * _hvec(H_F, hpsi) * dt)
    out = psi + inc + fb
    return normalize(out) if renormalize else out


def _hvec(H, psi):
    if hasattr(H, "apply"):
        return H.apply(psi, axis=-1)
    return matvec(np.asarray(H, dtype=complex), psi)


def _hrho(H, rho):
    if hasattr(H, "apply"):
        return H.apply(rho, axis=-2)
    return lmul(np.asarray(H, dtype=complex), rho)


def _check_trace(rho):
    tr = np.real(np.trace(rho, axis1=-2, axis2=-1))
    dev = np.abs(tr - 1.0)
    if not np.all(dev <= TRACE_GUARD):
        raise StepSizeError(
            f"trace off by {np.max(dev):.3g} entering the step; reduce dt")


def _finish_rho(rho, renormalize=True):
    rho = 0.5 * (rho + dagger(rho))
    tr = np.real(np.trace(rho, axis1=-2, axis2=-1))
    if not np.all(np.isfinite(tr) & (tr > 0)):
        raise StepSizeError("state lost its trace in one step; reduce dt")
    return rho / tr[..., None, None] if renormalize else rho


def _mean_m(rho, m):
    return np.sqrt(m.gamma / 2) * m.expect_rho(rho)


def _dm(m, mean, x):
    """``(M - <M>) x`` with ``x`` acted on along axis -2."""
    if m.diagonal is not None:
        md = np.sqrt(m.gamma / 2) * m.diagonal
        return (md[:, None] - mean[..., None, None]) * x
    return lmul(m.lindblad, x) - mean[..., None, None] * x


SCHEMES = ("kraus", "euler")


def _scheme(scheme):
    if scheme not in SCHEMES:
        raise DomainError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    return scheme


def _measure_terms(rho, m, mean, dW, dt, eta, scheme):
    """State after the measurement part of one step (before renormalisation)."""
    dWb = np.asarray(dW, dtype=float)[..., None, None]
    se = np.sqrt(eta)
    if m.diagonal is not None:
        d = np.sqrt(m.gamma / 2) * m.diagonal - mean[..., None]
        di, dj = d[..., :, None], d[..., None, :]
        if scheme == "euler":
            return rho * (1 + (di * dj - 0.5 * (di * di + dj * dj)) * dt
                          + se * (di + dj) * dWb)
        ki = 1 + se * di * dWb - 0.5 * di * di * dt
        kj = 1 + se * dj * dWb - 0.5 * dj * dj * dt
        return (ki * kj + (1 - eta) * dt * di * dj) * rho
    dr = _dm(m, mean, rho)
    mrm = _dm(m, mean, dagger(dr))
    if scheme == "euler":
        ddr = _dm(m, mean, dr)
        return (rho + (mrm - 0.5 * (ddr + dagger(ddr))) * dt
                + se * (dr + dagger(dr)) * dWb)

    def kraus(x):
        dx = _dm(m, mean, x)
        return x + se * dWb * dx - 0.5 * dt * _dm(m, mean, dx)

    return kraus(dagger(kraus(rho))) + (1 - eta) * dt * mrm


def step_sme(rho, m: MeasurementOp, dW, dt, renormalize=True, scheme="kraus"):
    """One step of the stochastic master equation with efficiency ``m.eta``.

    ``scheme="euler"`` adds the Euler-Maruyama increment
    ``D[M] rho dt + sqrt(eta) H[M] rho dW``.  The default ``"kraus"`` uses
    ``K rho K^+ + (1 - eta) dM rho dM dt`` with ``dM = M - <M>`` and
    ``K = 1 + sqrt(eta) dM dW - dM^2 dt/2``: the same increment to first
    order plus the zero-mean ``eta dM rho dM (dW^2 - dt)``, which keeps the
    state positive and makes the result at ``eta = 1`` exactly the projector
    of :func:`step_sse` on the same noise.  Either way the state is then
    re-Hermitised and trace-renormalised.

    Raises :class:`StepSizeError` if the incoming trace is off by more than
    1e-6 or the step destroys the state.
    """
    rho = np.asarray(rho, dtype=complex)
    _check_trace(rho)
    out = _measure_terms(rho, m, _mean_m(rho, m), dW, dt, m.eta, _scheme(scheme))
    return _finish_rho(out, renormalize)


def step_wm_mixed(rho, m: MeasurementOp, H_F, dW, dt, renormalize=True, scheme="euler"):
    """One step of the Wiseman-Milburn feedback master equation.

    On top of :func:`step_sme` (same ``scheme``) the feedback contributes
    ``-i kappa [H, rho] dW - i kappa sqrt(eta) [H, M rho + rho M] dt
    + kappa^2 D[H] rho dt``.  The default ``"euler"`` adds these terms as
    written, so a feedback law that cancels a first-order increment cancels
    it exactly on the grid.  ``"kraus"`` folds them into
    ``K = 1 + (sqrt(eta) dM - i kappa H) dW - dM^2 dt/2
    - i kappa sqrt(eta) H (dM + 2<M>) dt - kappa^2 H^2 dt/2``, which coincides
    with :func:`step_wm_pure` at ``eta = 1``.
    """
    rho = np.asarray(rho, dtype=complex)
    _check_trace(rho)
    scheme = _scheme(scheme)
    eta = m.eta
    kappa = 1.0 / np.sqrt(2 * m.gamma)
    dWb = np.asarray(dW, dtype=float)[..., None, None]
    mean = _mean_m(rho, m)
    se = np.sqrt(eta)
    if scheme == "euler":
        out = _measure_terms(rho, m, mean, dW, dt, eta, scheme)
        hr = _hrho(H_F, rho)
        s = _dm(m, mean, rho)
        s = s + dagger(s) + 2 * mean[..., None, None] * rho
        hs = _hrho(H_F, s)
        hrh = _hrho(H_F, dagger(hr))
        hhr = _hrho(H_F, hr)
        out = (out - 1j * kappa * (hr - dagger(hr)) * dWb
               - 1j * kappa * se * (hs - dagger(hs)) * dt
               + kappa ** 2 * (hrh - 0.5 * (hhr + dagger(hhr))) * dt)
        return _finish_rho(out, renormalize)

    def kraus(x):
        dx = _dm(m, mean, x)
        hx = _hrho(H_F, x)
        return (x + (se * dx - 1j * kappa * hx) * dWb
                - 0.5 * dt * _dm(m, mean, dx)
                - 1j * kappa * se * dt * (_hrho(H_F, dx) + 2 * mean[..., None, None] * hx)
                - 0.5 * kappa ** 2 * dt * _hrho(H_F, hx))

    out = kraus(dagger(kraus(rho)))
    if eta < 1:
        dr = _dm(m, mean, rho)
        out = out + (1 - eta) * dt * _dm(m, mean, dagger(dr))
    return _finish_rho(out, renormalize)


def homodyne_record(x_expect, dW, m: MeasurementOp, dt):
    """Measurement signal ``dV = <X> dt + dW / sqrt(2 eta Gamma)``."""
    if m.eta == 0:
        raise DomainError("no measurement record exists at eta = 0")
    return x_expect * dt + dW / np.sqrt(2 * m.eta * m.gamma)
