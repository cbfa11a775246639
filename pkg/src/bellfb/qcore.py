"""Two-qubit linear algebra, entanglement measures and the Schmidt chart.

Pure states are complex arrays of shape ``(..., 4)`` in the basis order
``|00>, |01>, |10>, |11>``; density matrices are ``(..., 4, 4)``.  Most
functions accept a leading batch dimension so that trajectory ensembles can
be processed without Python loops.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)

SYSY = np.kron(SY, SY)
X_HALF = (np.kron(SZ, I2) + np.kron(I2, SZ)) / 2
X_FULL = np.kron(SZ, SZ) / 2

NORM_TOL = 1e-6
RANK_TOL = 1e-14


class InvalidStateError(ValueError):
    """Input is not a normalized state / valid density matrix."""


class DomainError(ValueError):
    """Argument outside the domain of an operation."""


class NumericalError(ArithmeticError):
    """An iterative routine failed to converge."""

    def __init__(self, msg, iterations=None):
        super().__init__(msg)
        self.iterations = iterations


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True)
class SchmidtParams:
    """Canonical coordinates of a two-qubit pure state.

    ``C`` is the signed concurrence; the remaining fields are the symmetric
    and antisymmetric Euler angle combinations of the two local unitaries.
    """

    C: float
    theta: float = 0.0
    delta_theta: float = 0.0
    phi: float = 0.0
    gamma: float = 0.0
    delta_gamma: float = 0.0


@dataclass(frozen=True)
class ControlTargets:
    """Feedback set-points ``u = cos(theta)``, ``v = cos(delta_theta)``,
    ``w = cos(2 phi)`` plus the two sigma_z angles.
    """

    u: float
    v: float
    w: float
    gamma: float = 0.0
    delta_gamma: float = 0.0

    def __post_init__(self):
        for name in ("u", "v", "w"):
            val = getattr(self, name)
            if not -1.0 - 1e-12 <= val <= 1.0 + 1e-12:
                raise DomainError(f"control {name}={val} outside [-1, 1]")

    @classmethod
    def from_angles(cls, theta, delta_theta, phi, gamma=0.0, delta_gamma=0.0):
        return cls(float(np.cos(theta)), float(np.cos(delta_theta)),
                   float(np.cos(2 * phi)), gamma, delta_gamma)

    @property
    def theta(self):
        return float(np.arccos(np.clip(self.u, -1, 1)))

    @property
    def delta_theta(self):
        return float(np.arccos(np.clip(self.v, -1, 1)))

    @property
    def phi(self):
        return float(np.arccos(np.clip(self.w, -1, 1)) / 2)

    def schmidt(self, C):
        return SchmidtParams(C, self.theta, self.delta_theta, self.phi,
                             self.gamma, self.delta_gamma)


@dataclass(frozen=True)
class MeasurementOp:
    """Continuously monitored observable ``X`` with rate ``gamma`` and
    detection efficiency ``eta``.  The monitored Lindblad operator is
    ``M = sqrt(gamma/2) X``.
    """

    matrix: np.ndarray
    gamma: float = 2.0
    eta: float = 1.0
    name: str = "custom"

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (4, 4) or not np.allclose(m, m.conj().T, atol=1e-12):
            raise DomainError("measurement operator must be a 4x4 Hermitian matrix")
        if not 0.0 <= self.eta <= 1.0:
            raise DomainError(f"efficiency eta={self.eta} outside [0, 1]")
        if self.gamma < 0:
            raise DomainError("measurement rate must be non-negative")
        object.__setattr__(self, "matrix", m)
        diag = np.diag(m).real.copy() if np.count_nonzero(m - np.diag(np.diag(m))) == 0 else None
        object.__setattr__(self, "_diag", diag)

    @classmethod
    def half_parity(cls, gamma=2.0, eta=1.0):
        return cls(X_HALF, gamma, eta, "half")

    @classmethod
    def full_parity(cls, gamma=2.0, eta=1.0):
        return cls(X_FULL, gamma, eta, "full")

    @property
    def lindblad(self):
        return np.sqrt(self.gamma / 2) * self.matrix

    @property
    def diagonal(self):
        """Eigenvalues of ``X`` if it is diagonal in the computational basis, else None."""
        return self._diag

    def expect(self, psi):
        """``<X>`` for a batch of pure states."""
        psi = np.asarray(psi)
        if self._diag is not None:
            return np.sum(self._diag * (psi.real ** 2 + psi.imag ** 2), axis=-1)
        return np.real(np.sum(psi.conj() * matvec(self.matrix, psi), axis=-1))

    def expect_rho(self, rho):
        rho = np.asarray(rho)
        d = np.real(np.diagonal(rho, axis1=-2, axis2=-1))
        if self._diag is not None:
            return np.sum(self._diag * d, axis=-1)
        return np.real(np.trace(lmul(self.matrix, rho), axis1=-2, axis2=-1))


@dataclass(frozen=True)
class LocalUnitary:
    u1: np.ndarray
    u2: np.ndarray
    degenerate: bool = field(default=False, compare=False)

    def __post_init__(self):
        for u in (self.u1, self.u2):
            if not np.allclose(u.conj().T @ u, I2, atol=1e-10):
                raise DomainError("local factor is not unitary")

    @classmethod
    def identity(cls):
        return cls(I2.copy(), I2.copy())

    @property
    def matrix(self):
        return np.kron(self.u1, self.u2)


# ---------------------------------------------------------------------------
# validation helpers


def check_pure(psi, tol=NORM_TOL):
    psi = np.asarray(psi, dtype=complex)
    if psi.shape[-1] != 4:
        raise InvalidStateError(f"expected 4 amplitudes, got shape {psi.shape}")
    dev = np.abs(np.sum(np.abs(psi) ** 2, axis=-1) - 1.0)
    if np.any(dev > tol):
        raise InvalidStateError(f"state not normalized (norm^2 deviation {dev.max():.3g})")
    return psi


def check_density(rho, tol=1e-10):
    rho = np.asarray(rho, dtype=complex)
    if rho.shape[-2:] != (4, 4):
        raise InvalidStateError(f"expected 4x4 density matrix, got {rho.shape}")
    herm = np.abs(rho - np.swapaxes(rho.conj(), -1, -2)).max()
    if herm > tol:
        raise InvalidStateError(f"density matrix not Hermitian (deviation {herm:.3g})")
    tr = np.abs(np.trace(rho, axis1=-2, axis2=-1) - 1.0).max()
    if tr > tol:
        raise InvalidStateError(f"density matrix trace deviates from 1 by {tr:.3g}")
    return rho


def matvec(a, x):
    """``a @ x`` for a (batch of) 4x4 operators and state vectors.

    Written as an explicit fixed-order sum so that every trajectory's result
    is bitwise independent of how many trajectories share the batch.
    """
    n = x.shape[-1]
    out = a[..., :, 0] * x[..., 0, None]
    for j in range(1, n):
        out = out + a[..., :, j] * x[..., j, None]
    return out


def lmul(a, rho):
    """``a @ rho`` with the same fixed summation order as :func:`matvec`."""
    n = rho.shape[-1]
    out = a[..., :, 0, None] * rho[..., 0, None, :]
    for k in range(1, n):
        out = out + a[..., :, k, None] * rho[..., k, None, :]
    return out


def rmul(rho, a):
    """``rho @ a``."""
    n = rho.shape[-1]
    out = rho[..., :, 0, None] * a[..., 0, None, :]
    for k in range(1, n):
        out = out + rho[..., :, k, None] * a[..., k, None, :]
    return out


def dagger(a):
    return np.swapaxes(np.conj(a), -1, -2)


def normalize(psi):
    norm2 = np.sum(psi.real ** 2 + psi.imag ** 2, axis=-1, keepdims=True)
    return psi / np.sqrt(norm2)


def projector(psi):
    psi = np.asarray(psi, dtype=complex)
    return psi[..., :, None] * psi[..., None, :].conj()


# ---------------------------------------------------------------------------
# eigen-solver


def hermitian_eig(a, tol=1e-12, max_sweeps=100):
    """Cyclic Jacobi diagonalisation of (a batch of) Hermitian matrices.

    Returns ``(w, v)`` with eigenvalues ascending and ``a = v diag(w) v^H``.
    Raises :class:`NumericalError` if the off-diagonal Frobenius norm is not
    below ``tol`` after ``max_sweeps`` sweeps.
    """
    a = np.array(a, dtype=complex)
    shape = a.shape
    n = shape[-1]
    a = a.reshape(-1, n, n)
    a = (a + np.swapaxes(a.conj(), -1, -2)) / 2
    v = np.broadcast_to(np.eye(n, dtype=complex), a.shape).copy()
    offmask = ~np.eye(n, dtype=bool)

    sweeps = 0
    while True:
        off = np.sqrt(np.sum(np.abs(a[:, offmask]) ** 2, axis=-1))
        if off.size == 0 or off.max() < tol:
            break
        if sweeps >= max_sweeps:
            raise NumericalError(
                f"Jacobi eigen-solver did not converge after {sweeps} sweeps "
                f"(off-diagonal norm {off.max():.3g})", iterations=sweeps)
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                mag = np.abs(apq)
                active = mag > 1e-300
                safe = np.where(active, mag, 1.0)
                ph = np.where(active, apq / safe, 1.0)
                tau = (a[:, q, q].real - a[:, p, p].real) / (2 * safe)
                t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.sqrt(1 + tau * tau))
                t = np.where(active, t, 0.0)
                c = 1 / np.sqrt(1 + t * t)
                s = t * c
                eph = ph.conj()
                # columns: A <- A J, J = diag-phase * real rotation
                colp = a[:, :, p].copy()
                colq = a[:, :, q].copy()
                a[:, :, p] = c[:, None] * colp - (s * eph)[:, None] * colq
                a[:, :, q] = s[:, None] * colp + (c * eph)[:, None] * colq
                rowp = a[:, p, :].copy()
                rowq = a[:, q, :].copy()
                a[:, p, :] = c[:, None] * rowp - (s * ph)[:, None] * rowq
                a[:, q, :] = s[:, None] * rowp + (c * ph)[:, None] * rowq
                a[:, p, q] = 0.0
                a[:, q, p] = 0.0
                vp = v[:, :, p].copy()
                vq = v[:, :, q].copy()
                v[:, :, p] = c[:, None] * vp - (s * eph)[:, None] * vq
                v[:, :, q] = s[:, None] * vp + (c * eph)[:, None] * vq

    w = np.real(np.diagonal(a, axis1=-2, axis2=-1))
    order = np.argsort(w, axis=-1)
    w = np.take_along_axis(w, order, axis=-1)
    v = np.take_along_axis(v, order[:, None, :], axis=-1)
    return w.reshape(shape[:-1]), v.reshape(shape)


# ---------------------------------------------------------------------------
# entanglement measures


def concurrence_pure(psi):
    """``|<psi*| sy (x) sy |psi>| = 2 |a00 a11 - a01 a10|``."""
    psi = check_pure(psi)
    c = 2 * np.abs(psi[..., 0] * psi[..., 3] - psi[..., 1] * psi[..., 2])
    return np.minimum(c, 1.0) if np.ndim(c) else float(min(c, 1.0))


def spin_flip(rho):
    return SYSY @ np.asarray(rho).conj() @ SYSY


def concurrence_mixed(rho):
    """Wootters concurrence of a (batch of) two-qubit density matrices.

    With ``rho = sum_i w_i |v_i><v_i|`` the numbers ``lambda_i`` are the
    singular values of ``tau_ij = sqrt(w_i w_j) v_i^T (sy sy) v_j``, i.e. the
    square roots of the eigenvalues of ``sqrt(rho) rho~ sqrt(rho)``.
    Eigenvalues of ``rho`` below 1e-14 are set to zero so that the
    corresponding rows of ``tau`` vanish exactly; otherwise their rounding
    noise would enter the result through a square root (~1e-8).
    """
    rho = check_density(rho)
    w, v = hermitian_eig(rho)
    if np.any(w < -1e-8):
        raise InvalidStateError(f"density matrix has eigenvalue {w.min():.3g} < 0")
    w = np.where(w < RANK_TOL, 0.0, w)
    xi = v * np.sqrt(w)[..., None, :]
    tau = np.swapaxes(xi, -1, -2) @ SYSY @ xi
    mu, _ = hermitian_eig(np.swapaxes(tau.conj(), -1, -2) @ tau)
    lam = np.sqrt(np.clip(mu, 0, None))[..., ::-1]
    c = lam[..., 0] - lam[..., 1] - lam[..., 2] - lam[..., 3]
    c = np.maximum(c, 0.0)
    return c if np.ndim(c) else float(c)


# ---------------------------------------------------------------------------
# Schmidt parameterisation


def euler_unitary(gamma, theta, phi):
    """``exp(-i gamma sz/2) exp(-i theta sy/2) exp(-i phi sz/2)``."""
    ez = lambda x: np.diag([np.exp(-0.5j * x), np.exp(0.5j * x)])
    ry = np.array([[np.cos(theta / 2), -np.sin(theta / 2)],
                   [np.sin(theta / 2), np.cos(theta / 2)]], dtype=complex)
    return ez(gamma) @ ry @ ez(phi)


def schmidt_coefficients(C):
    e = np.sqrt(np.clip(1 - np.asarray(C, dtype=float) ** 2, 0, None))
    return np.sqrt((1 + e) / 2), np.sqrt((1 - e) / 2)


def schmidt_frame(p):
    """Local unitary ``U1 (x) U2`` of the Schmidt chart for angles in ``p``."""
    u1 = euler_unitary(p.gamma + p.delta_gamma, p.theta + p.delta_theta, p.phi)
    u2 = euler_unitary(p.gamma - p.delta_gamma, p.theta - p.delta_theta, p.phi)
    return u1, u2


def state_from_schmidt(p):
    if abs(p.C) > 1 + 1e-12:
        raise DomainError(f"|C| = {abs(p.C)} exceeds 1")
    a, b = schmidt_coefficients(min(abs(p.C), 1.0))
    u1, u2 = schmidt_frame(p)
    return np.kron(u1, u2) @ np.array([a, 0, 0, -b], dtype=complex)


def canonical_states(C, targets):
    """Vectorised :func:`state_from_schmidt` for an array of concurrences
    sharing one set of control targets."""
    a, b = schmidt_coefficients(np.minimum(np.abs(C), 1.0))
    u1, u2 = schmidt_frame(targets.schmidt(0.0))
    frame = np.kron(u1, u2)
    return a[..., None] * frame[:, 0] - b[..., None] * frame[:, 3]


def schmidt_extract(psi, targets):
    """Local unitary taking ``psi`` to the canonical state with the same
    concurrence and the angles fixed by ``targets``.

    Uses the SVD of the 2x2 amplitude matrix: ``(u1 (x) u2) psi`` has
    amplitude matrix ``u1 A u2^T``.  With ``A = Us S Vs^H`` and
    ``A_target = Ut S Vt^H`` the choice ``u1 = Ut Us^H``,
    ``u2^T = Vs Vt^H`` is exact whatever gauge the SVD picks.  When the
    Schmidt spectrum is degenerate (C within 1e-12 of 1) the solution is not
    unique; the result is then flagged ``degenerate=True``.
    """
    psi = check_pure(psi)
    C = concurrence_pure(psi)
    target = state_from_schmidt(targets.schmidt(C))
    a_src = psi.reshape(2, 2)
    a_dst = target.reshape(2, 2)
    if 1 - C < 1e-12:
        # A is sqrt(2) times a unitary: fix u1 = I and solve for u2, then
        # project onto the unitaries to remove rounding.
        w, _, vh = np.linalg.svd(np.linalg.solve(a_src, a_dst).T)
        return LocalUnitary(I2.copy(), w @ vh, degenerate=True)
    us, _, vhs = np.linalg.svd(a_src)
    ut, _, vht = np.linalg.svd(a_dst)
    u1 = ut @ us.conj().T
    u2 = (vhs.conj().T @ vht).T
    return LocalUnitary(u1, u2)


def apply_lu(L, psi):
    psi = np.asarray(psi, dtype=complex)
    amp = psi.reshape(psi.shape[:-1] + (2, 2))
    out = L.u1 @ amp @ L.u2.T
    return out.reshape(psi.shape)


# ---------------------------------------------------------------------------
# reduced states and derived quantities


def partial_trace_q2(state):
    """Reduced density matrix of qubit 1 from a pure state ``(4,)`` or a
    density matrix ``(4, 4)``."""
    state = np.asarray(state, dtype=complex)
    if state.shape == (4,):
        amp = check_pure(state).reshape(2, 2)
        return amp @ amp.conj().T
    if state.shape == (4, 4):
        rho = check_density(state).reshape(2, 2, 2, 2)
        return np.einsum("ijkj->ik", rho)
    raise InvalidStateError(f"cannot trace state of shape {state.shape}")


def reduced_q1(psi):
    """Batched qubit-1 reduced state of pure states ``(..., 4)``."""
    amp = np.asarray(psi).reshape(np.shape(psi)[:-1] + (2, 2))
    return amp @ np.swapaxes(amp.conj(), -1, -2)


def binary_entropy(p):
    p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -np.where(p > 0, p * np.log2(p), 0.0) - np.where(p < 1, (1 - p) * np.log2(1 - p), 0.0)
    return h if np.ndim(h) else float(h)


def qubit_entropy(rho1):
    """Von Neumann entropy (bits) of a batch of 2x2 density matrices."""
    rho1 = np.asarray(rho1)
    a = rho1[..., 0, 0].real
    d = rho1[..., 1, 1].real
    b = np.abs(rho1[..., 0, 1])
    tr = a + d
    disc = np.sqrt((a - d) ** 2 + 4 * b * b)
    return binary_entropy((tr + disc) / (2 * tr))


def entanglement_entropy(psi):
    psi = check_pure(psi)
    return qubit_entropy(reduced_q1(psi))


def fidelity_and_singlet_fraction(psi, target):
    """Overlap fidelity with a maximally entangled ``target`` and the
    LU-optimised fidelity ``(C + 1)/2``."""
    psi = check_pure(psi)
    target = check_pure(target)
    if abs(concurrence_pure(target) - 1) > 1e-9:
        raise DomainError("target state is not maximally entangled")
    f = float(abs(np.vdot(target, psi)) ** 2)
    return f, (concurrence_pure(psi) + 1) / 2


# ---------------------------------------------------------------------------
# single-qubit Pauli actions as index permutations (exact, batch friendly)

_PAULI_ACTION = {
    # (label, qubit) -> (source index permutation, phase per output index)
    ("x", 1): ([2, 3, 0, 1], np.array([1, 1, 1, 1], dtype=complex)),
    ("y", 1): ([2, 3, 0, 1], np.array([-1j, -1j, 1j, 1j])),
    ("z", 1): ([0, 1, 2, 3], np.array([1, 1, -1, -1], dtype=complex)),
    ("x", 2): ([1, 0, 3, 2], np.array([1, 1, 1, 1], dtype=complex)),
    ("y", 2): ([1, 0, 3, 2], np.array([-1j, 1j, -1j, 1j])),
    ("z", 2): ([0, 1, 2, 3], np.array([1, -1, 1, -1], dtype=complex)),
}


def pauli_apply(label, qubit, x, axis=-1):
    """Apply ``sigma_label`` on ``qubit`` (1 or 2) to ``x`` along ``axis``.

    ``axis=-1`` acts on state vectors; ``axis=-2`` multiplies a density
    matrix from the left.
    """
    perm, phase = _PAULI_ACTION[(label, qubit)]
    out = np.take(x, perm, axis=axis)
    shape = [1] * out.ndim
    shape[axis] = 4
    if label == "x":
        return out
    return out * phase.reshape(shape)


def rotate_x1(theta, x, density=False):
    """Apply ``exp(-i theta sigma_x1 / 2)``; ``theta`` may be per-trajectory."""
    theta = np.asarray(theta, dtype=float)
    c = np.cos(theta / 2)
    s = np.sin(theta / 2)
    if not density:
        c, s = c[..., None], s[..., None]
        return c * x - 1j * s * pauli_apply("x", 1, x)
    c, s = c[..., None, None], s[..., None, None]
    y = c * x - 1j * s * pauli_apply("x", 1, x, axis=-2)
    return c * y + 1j * s * pauli_apply("x", 1, y, axis=-1)
