"""Feedback protocols and the trajectory engine.

Two control models are supported:

``lu_reset``
    After every measurement step the controller applies the local unitary
    that returns the state to the canonical Schmidt form with the protocol's
    angles.  Concurrence is untouched by the reset.
``hamiltonian``
    Proportional feedback through a Hamiltonian driven by the homodyne
    record (Wiseman-Milburn form), with a finite pulse near C = 0.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import qcore
from .qcore import (ControlTargets, DomainError, InvalidStateError,
                    MeasurementOp, apply_lu, canonical_states, concurrence_pure,
                    pauli_apply, rotate_x1, schmidt_extract)
from .sde import (NoiseStream, homodyne_record, step_sme, step_sse,
                  step_wm_mixed, step_wm_pure)


class ConfigError(ValueError):
    """Inconsistent or unsupported simulation configuration."""


class StateFamilyError(InvalidStateError):
    """Density matrix left the one-parameter family assumed by a protocol."""


P_H_TARGETS = ControlTargets(0.0, 1.0, 1.0)
P_F_TARGETS = ControlTargets(0.0, 1.0, 0.0)


# ---------------------------------------------------------------------------
# control laws


@dataclass(frozen=True)
class ControlLaw:
    """Map ``(t, C) -> ControlTargets`` plus the control model.

    ``targets`` is set for constant laws, which the vectorised engine can
    apply to a whole batch at once.  ``law`` returns None for protocols that
    apply no feedback.
    """

    name: str
    law: Callable[[float, float], Optional[ControlTargets]]
    mode: str = "lu_reset"
    targets: Optional[ControlTargets] = None

    def __call__(self, t, C):
        return self.law(t, C)

    @classmethod
    def constant(cls, targets, name="constant", mode="lu_reset"):
        return cls(name, lambda t, C: targets, mode, targets)

    @classmethod
    def p_h(cls):
        return cls.constant(P_H_TARGETS, "p_h", "lu_reset")

    @classmethod
    def p_f(cls, mode="lu_reset"):
        return cls.constant(P_F_TARGETS, "p_f", mode)

    @classmethod
    def none(cls):
        return cls("none", lambda t, C: None, "none", None)


@dataclass(frozen=True)
class FeedbackHamiltonian:
    """``h0 I + sum_i (hx_i sx_i + hy_i sy_i + hz_i sz_i)``.

    Coefficients may be scalars or arrays with one entry per trajectory.
    """

    h0: object = 0.0
    hx1: object = 0.0
    hx2: object = 0.0
    hy1: object = 0.0
    hy2: object = 0.0
    hz1: object = 0.0
    hz2: object = 0.0

    def _terms(self):
        for name in ("x", "y", "z"):
            for q in (1, 2):
                coef = getattr(self, f"h{name}{q}")
                if np.ndim(coef) or coef != 0:
                    yield name, q, coef

    def matrix(self):
        ops = {"x": qcore.SX, "y": qcore.SY, "z": qcore.SZ}
        h = np.asarray(self.h0)[..., None, None] * np.eye(4)
        for name, q, coef in self._terms():
            single = np.kron(ops[name], qcore.I2) if q == 1 else np.kron(qcore.I2, ops[name])
            h = h + np.asarray(coef)[..., None, None] * single
        return h

    def apply(self, x, axis=-1):
        """``H @ x`` acting along ``axis`` (-1 for vectors, -2 for the left
        factor of a density matrix)."""
        extra = (1,) * (1 if axis == -1 else 2)
        bc = lambda c: np.reshape(c, np.shape(c) + extra)
        out = bc(self.h0) * x
        for name, q, coef in self._terms():
            out = out + bc(coef) * pauli_apply(name, q, x, axis=axis)
        return out


@dataclass(frozen=True)
class FinitePulse:
    """Instantaneous rotation ``exp(-i theta1 sx_1/2) exp(-i theta2 sx_2/2)``."""

    theta1: float
    theta2: float = 0.0

    def unitary(self):
        r = lambda th: np.cos(th / 2) * qcore.I2 - 1j * np.sin(th / 2) * qcore.SX
        return np.kron(r(self.theta1), r(self.theta2))

    def apply(self, psi):
        return self.unitary() @ np.asarray(psi, dtype=complex)


def default_eps(dt):
    """Concurrence below which P_F switches from proportional feedback to a
    finite pulse.  The Euler step error of the 1/|C| feedback is of order
    dt/C^2 per step, so the window must not be narrower than sqrt(dt)."""
    return max(1e-3, float(np.sqrt(dt)))


def pf_feedback_hamiltonian(C, dV, dt, split="symmetric", eps=None, exact_phase=False):
    """Feedback for P_F at (signed) concurrence ``C``.

    For ``|C| > eps`` returns the proportional Hamiltonian with
    ``hx1 + hx2 = -1/|C|``; ``split`` is ``"symmetric"`` (equal shares) or
    ``"qubit2"`` (feedback on qubit 2 only).  The identity coefficient is
    ``-(1 - C^2)/|C|`` by default; ``exact_phase=True`` uses
    ``-sqrt(1 - C^2)/|C|``, which also cancels the stochastic global phase of
    the canonical P_F family.  For ``|C| <= eps`` a finite pulse with
    ``theta1 + theta2 = -sgn(dV) pi/2`` is returned instead.
    """
    if abs(C) > 1 + 1e-12:
        raise DomainError(f"|C| = {abs(C)} exceeds 1")
    if eps is None:
        eps = default_eps(dt)
    c = min(abs(C), 1.0)
    if c <= eps:
        return FinitePulse(-np.sign(dV) * np.pi / 2, 0.0)
    hx = -1.0 / c
    h0 = -(np.sqrt(1 - c * c) if exact_phase else (1 - c * c)) / c
    if split == "symmetric":
        return FeedbackHamiltonian(h0=h0, hx1=hx / 2, hx2=hx / 2)
    if split == "qubit2":
        return FeedbackHamiltonian(h0=h0, hx2=hx)
    raise DomainError(f"unknown feedback split {split!r}")


def pf_family_state(C):
    """Deterministic P_F state at concurrence ``C``, written in the
    ``|++>, |-->`` basis: ``e^{-i pi/4} (B|++> - i A|-->)/sqrt(2)`` with
    ``A = sqrt(1 + e)``, ``B = sqrt(1 - e)``, ``e = sqrt(1 - C^2)``."""
    C = np.asarray(C, dtype=float)
    e = np.sqrt(np.clip(1 - C ** 2, 0, None))
    A, B = np.sqrt(1 + e), np.sqrt(1 - e)
    pp = np.full(4, 0.5, dtype=complex)
    mm = np.array([0.5, -0.5, -0.5, 0.5], dtype=complex)
    psi = (B[..., None] * pp - 1j * A[..., None] * mm) / np.sqrt(2)
    return np.exp(-0.25j * np.pi) * psi


def _zz_yz(state, density):
    """``<sz1 sz2>`` and ``<sy1 sz2>`` for pure or mixed batches."""
    if density:
        zz = np.real(np.einsum("...ii,i->...", state, np.array([1, -1, -1, 1])))
        yz_op = pauli_apply("y", 1, pauli_apply("z", 2, state, axis=-2), axis=-2)
        yz = np.real(np.trace(yz_op, axis1=-2, axis2=-1))
        return zz, yz
    p = state.real ** 2 + state.imag ** 2
    zz = p[..., 0] - p[..., 1] - p[..., 2] + p[..., 3]
    yz = np.real(np.sum(state.conj() * pauli_apply("y", 1, pauli_apply("z", 2, state)), axis=-1))
    return zz, yz


def zeroing_angle(state, density=False, branch=1):
    """Angle of the ``sx_1`` rotation that sets ``<sz1 sz2>`` to zero.

    A rotation by ``theta`` maps ``(<zz>, <yz>)`` to
    ``(a cos + b sin, b cos - a sin)``.  ``branch=+1`` picks the solution
    leaving ``<sy1 sz2>`` positive, which is the branch the proportional P_F
    and Hill-Ralph feedback laws continue smoothly.  At C = 0 right after a
    measurement step this is ``-sgn(dV) pi/2``.
    """
    a, b = _zz_yz(np.asarray(state), density)
    return np.arctan2(b, a) - branch * np.pi / 2


def zeroing_pulse(state, density=False, branch=1):
    return FinitePulse(float(zeroing_angle(state, density, branch)), 0.0)


def lu_reset_step(psi, law: ControlLaw, t):
    """Apply the local unitary that puts ``psi`` at the law's set-points."""
    psi = qcore.check_pure(psi)
    C = concurrence_pure(psi)
    targets = law(t, C)
    if targets is None:
        return psi
    return apply_lu(schmidt_extract(psi, targets), psi)


def lu_reset_paths(C0, targets, measurement, dW, dt):
    """Concurrence along measure-then-reset loops with constant set-points.

    ``C0`` and ``targets`` give one entry per path, ``dW`` has shape
    ``(paths, steps)``.  Before every measurement step the state is put into
    the canonical form of its set-points, which is what
    :func:`lu_reset_step` does for a constant law.  After the step the
    complex overlap ``c = C + dC_R + i dC_I`` is read off in the canonical
    frame.

    Under half parity the result is ``|c|``.  Under full parity C is signed
    and carried by the ``|11>`` amplitude: the new value is ``sgn(C) |c|``,
    and a path at ``C = 0`` is prepared and read in the frame with ``phi = 0``
    (``w = 1``) and takes the sign of ``Re c``.
    """
    m = MeasurementOp.half_parity() if measurement == "half" else MeasurementOp.full_parity()
    signed = measurement == "full"
    dW = np.atleast_2d(np.asarray(dW, dtype=float))
    C = np.atleast_1d(np.asarray(C0, dtype=float))

    def frames_of(tgs):
        f = np.array([np.kron(*qcore.schmidt_frame(tg.schmidt(0.0))) for tg in tgs])
        return f, np.conj(np.swapaxes(f, -1, -2))

    frames, inv = frames_of(targets)
    frames0, inv0 = frames_of([dataclasses.replace(tg, w=1.0) for tg in targets])
    out = np.empty((len(C), dW.shape[1] + 1))
    out[:, 0] = C
    for j in range(dW.shape[1]):
        zero = np.abs(C) < 1e-12
        f = np.where(zero[:, None, None], frames0, frames)
        a, b = qcore.schmidt_coefficients(np.abs(C))
        sign = np.where(C < 0, -1.0, 1.0)
        psi = step_sse(a[:, None] * f[:, :, 0] - (sign * b)[:, None] * f[:, :, 3], m,
                       dW[:, j], dt)
        p = np.einsum("nij,nj->ni", np.where(zero[:, None, None], inv0, inv), psi)
        c = -2 * (p[:, 0] * p[:, 3] - p[:, 1] * p[:, 2])
        if signed:
            sign = np.where(zero, np.where(c.real < 0, -1.0, 1.0), sign)
        else:
            sign = 1.0
        C = sign * np.minimum(np.abs(c), 1.0)
        out[:, j + 1] = C
    return out


# ---------------------------------------------------------------------------
# Hill-Ralph mixed-state protocol


def hadamard2():
    h = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
    return np.kron(h, h)


def hill_ralph_initial_state():
    rho0 = np.zeros((4, 4), dtype=complex)
    rho0[0, 0] = rho0[3, 3] = 0.5
    hh = hadamard2()
    return hh @ rho0 @ hh.conj().T


def hill_ralph_family(alpha):
    """Spin-flip and exchange symmetric density matrix parameterised by the
    purely imaginary coherence ``alpha``."""
    a = np.asarray(alpha, dtype=complex)[..., None, None]
    pattern_q = np.array([[0, 1, 1, 0], [-1, 0, 0, -1], [-1, 0, 0, -1], [0, 1, 1, 0]])
    pattern_c = np.array([[1, 0, 0, 1], [0, 1, 1, 0], [0, 1, 1, 0], [1, 0, 0, 1]]) / 4
    return pattern_c + a * pattern_q


def hill_ralph_gain(rho, tol=1e-4, check_family=True):
    """Feedback strength ``P = i/(2 alpha)`` with ``alpha = rho[0, 1]``."""
    rho = np.asarray(rho)
    alpha = rho[..., 0, 1]
    if np.any(np.abs(alpha.real) > tol):
        raise StateFamilyError(f"coherence alpha has real part {np.abs(alpha.real).max():.3g}")
    if check_family:
        dev = np.abs(rho - hill_ralph_family(1j * alpha.imag)).max()
        if dev > tol:
            raise StateFamilyError(f"state deviates from the Hill-Ralph family by {dev:.3g}")
    if np.any(alpha.imag == 0):
        raise DomainError("feedback gain is singular at alpha = 0")
    return np.real(1j / (2j * alpha.imag))


def hill_ralph_feedback(rho, tol=1e-4):
    return FeedbackHamiltonian(hx1=hill_ralph_gain(rho, tol) / 2)


# ---------------------------------------------------------------------------
# configuration and trajectory engine

MEASUREMENTS = ("half", "full")
PROTOCOLS = ("p_h", "p_f", "none", "hill_ralph")
MODES = ("lu_reset", "hamiltonian")


@dataclass(frozen=True)
class SimConfig:
    measurement: str = "full"
    protocol: str = "p_f"
    mode: Optional[str] = None
    dt: float = 1e-4
    t_max: float = 5.0
    c0: float = 0.0
    eta: float = 1.0
    n: int = 1
    seed: int = 0
    grid_points: int = 200
    split: str = "symmetric"
    eps: Optional[float] = None
    density_matrix: bool = False

    def resolved(self):
        """Validate and fill defaults; returns a new config."""
        if self.measurement not in MEASUREMENTS:
            raise ConfigError(f"measurement must be one of {MEASUREMENTS}, got {self.measurement!r}")
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {self.protocol!r}")
        mode = self.mode
        if mode is None:
            mode = "hamiltonian" if self.protocol == "hill_ralph" else "lu_reset"
        if mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {mode!r}")
        if not self.dt > 0:
            raise ConfigError("dt must be positive")
        if not self.t_max > self.dt:
            raise ConfigError("t_max must exceed dt")
        if int(self.n) < 1:
            raise ConfigError("n must be at least 1")
        if int(self.grid_points) < 2:
            raise ConfigError("grid_points must be at least 2")
        if not 0.0 <= self.c0 <= 1.0:
            raise ConfigError("c0 must lie in [0, 1]")
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError("eta must lie in [0, 1]")
        if self.eta < 1 and self.protocol not in ("none", "hill_ralph"):
            raise ConfigError("eta < 1 requires a density-matrix protocol (none, hill_ralph)")
        if self.eta == 0 and self.protocol == "hill_ralph":
            raise ConfigError("hill_ralph feedback needs a measurement record (eta > 0)")
        if self.protocol == "hill_ralph":
            if self.measurement != "full":
                raise ConfigError("hill_ralph requires the full-parity measurement")
            if mode != "hamiltonian":
                raise ConfigError("hill_ralph is a Hamiltonian-feedback protocol")
            if self.c0 != 0:
                raise ConfigError("hill_ralph starts from a fixed mixed state; c0 must be 0")
        if self.protocol == "p_h" and mode == "hamiltonian":
            raise ConfigError("p_h is available in lu_reset mode only")
        if self.protocol == "p_f" and mode == "hamiltonian" and self.measurement != "full":
            raise ConfigError("Hamiltonian-mode p_f requires the full-parity measurement")
        if self.density_matrix and self.protocol != "none":
            raise ConfigError("density_matrix is only available for protocol 'none'")
        if self.split not in ("symmetric", "qubit2"):
            raise ConfigError(f"unknown feedback split {self.split!r}")
        return dataclasses.replace(self, mode=mode, n=int(self.n), seed=int(self.seed),
                                   grid_points=int(self.grid_points))

    @property
    def n_steps(self):
        return int(round(self.t_max / self.dt))

    @property
    def eps_value(self):
        return default_eps(self.dt) if self.eps is None else float(self.eps)

    def measurement_op(self):
        if self.measurement == "half":
            return MeasurementOp.half_parity(eta=self.eta)
        return MeasurementOp.full_parity(eta=self.eta)

    def law(self):
        if self.protocol == "p_h":
            return ControlLaw.p_h()
        if self.protocol == "p_f":
            return ControlLaw.p_f(self.mode)
        return ControlLaw.none()

    @property
    def density(self):
        return self.protocol == "hill_ralph" or self.eta < 1 or bool(self.density_matrix)

    def grid_steps(self):
        """Step indices of the sampling grid (``grid_points`` times over
        ``[0, t_max]``)."""
        return np.unique(np.round(np.linspace(0, self.n_steps, self.grid_points)).astype(int))

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclass
class TrajectoryRecord:
    t: np.ndarray
    dW: np.ndarray
    dV: np.ndarray
    C: np.ndarray
    x: np.ndarray
    seed: int
    checksum: str
    states: Optional[np.ndarray] = None
    config: Optional[SimConfig] = None


@dataclass
class BatchResult:
    """Observables sampled on a grid for a batch of trajectories."""

    t: np.ndarray
    steps: np.ndarray
    observables: dict
    seeds: np.ndarray
    checksums: list
    x_abs_max: np.ndarray
    dW: Optional[np.ndarray] = None
    dV: Optional[np.ndarray] = None
    extra: dict = field(default_factory=dict)


def initial_state(cfg: SimConfig):
    if cfg.protocol == "hill_ralph":
        return hill_ralph_initial_state()
    if cfg.protocol == "p_f" and cfg.mode == "hamiltonian":
        psi = pf_family_state(cfg.c0)
    elif cfg.protocol == "p_f":
        psi = canonical_states(np.array(cfg.c0), P_F_TARGETS)
    else:
        psi = canonical_states(np.array(cfg.c0), P_H_TARGETS)
    return qcore.projector(psi) if cfg.density else psi


def _concurrence_rows(psi):
    return np.minimum(2 * np.abs(psi[..., 0] * psi[..., 3] - psi[..., 1] * psi[..., 2]), 1.0)


def observe(name, state, m, density):
    """Evaluate a named observable on a batch of states."""
    if name == "C":
        return qcore.concurrence_mixed(state) if density else _concurrence_rows(state)
    if name == "X":
        return m.expect_rho(state) if density else m.expect(state)
    if name == "E1":
        if density:
            r = np.asarray(state).reshape(state.shape[:-2] + (2, 2, 2, 2))
            return qcore.qubit_entropy(np.einsum("...ijkj->...ik", r))
        return qcore.qubit_entropy(qcore.reduced_q1(state))
    if name == "Fmax":
        return (observe("C", state, m, density) + 1) / 2
    if name == "state":
        return np.array(state, copy=True)
    raise DomainError(f"unknown observable {name!r}")


class _Stepper:
    """Per-step update for one protocol configuration on a batch."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.m = cfg.measurement_op()
        self.law = cfg.law()
        self.eps = cfg.eps_value
        self.frame = None
        if self.law.targets is not None and cfg.mode == "lu_reset":
            u1, u2 = qcore.schmidt_frame(self.law.targets.schmidt(0.0))
            frame = np.kron(u1, u2)
            self.col0, self.col3 = frame[:, 0], frame[:, 3]

    def expect(self, state):
        return self.m.expect_rho(state) if self.cfg.density else self.m.expect(state)

    def __call__(self, state, dW, t):
        cfg, m = self.cfg, self.m
        dt = cfg.dt
        if cfg.protocol == "hill_ralph":
            return self._hill_ralph(state, dW)
        if cfg.density:
            return step_sme(state, m, dW, dt)
        if cfg.protocol == "none":
            return step_sse(state, m, dW, dt)
        if cfg.mode == "lu_reset":
            psi = step_sse(state, m, dW, dt)
            C = _concurrence_rows(psi)
            if self.law.targets is not None:
                a, b = qcore.schmidt_coefficients(C)
                return a[:, None] * self.col0 - b[:, None] * self.col3
            return np.stack([lu_reset_step(p, self.law, t + dt) for p in psi])
        return self._pf_hamiltonian(state, dW)

    def _pf_hamiltonian(self, psi, dW):
        cfg = self.cfg
        C = _concurrence_rows(psi)
        big = C > self.eps
        safe = np.where(big, C, 1.0)
        hx = np.where(big, -1.0 / safe, 0.0)
        h0 = np.where(big, -(1 - safe ** 2) / safe, 0.0)
        if cfg.split == "symmetric":
            H = FeedbackHamiltonian(h0=h0, hx1=hx / 2, hx2=hx / 2)
        else:
            H = FeedbackHamiltonian(h0=h0, hx2=hx)
        psi = step_wm_pure(psi, self.m, H, dW, cfg.dt)
        if not np.all(big):
            theta = np.where(big, 0.0, zeroing_angle(psi))
            psi = rotate_x1(theta, psi)
        return psi

    def _hill_ralph(self, rho, dW):
        alpha = rho[:, 0, 1].imag
        big = 4 * np.abs(alpha) > self.eps
        safe = np.where(big, alpha, 1.0)
        P = np.where(big, 1.0 / (2 * safe), 0.0)
        rho = step_wm_mixed(rho, self.m, FeedbackHamiltonian(hx1=P / 2), dW, self.cfg.dt)
        if not np.all(big):
            theta = np.where(big, 0.0, zeroing_angle(rho, density=True))
            rho = rotate_x1(theta, rho, density=True)
        return rho


def simulate_batch(cfg: SimConfig, seeds, observables=("C",), steps=None,
                   record_increments=False, block=1024, thresholds=None,
                   threshold_map=None):
    """Run one trajectory per seed, vectorised over the batch.

    Observables are sampled at the step indices ``steps`` (default: the
    configuration's grid).  Each trajectory consumes its own
    :class:`NoiseStream`, so the result for a given seed does not depend on
    which other seeds share the batch.

    With ``thresholds`` the first step at which ``C >= threshold`` is
    recorded per trajectory in ``extra["hit_steps"]`` (-1 if never);
    ``threshold_map`` is an optional monotone function applied to both C and
    the thresholds.  When no observables are requested the run stops as soon
    as every trajectory has crossed every threshold.
    """
    cfg = cfg.resolved()
    seeds = np.asarray(seeds, dtype=np.int64).ravel()
    n = seeds.size
    steps = cfg.grid_steps() if steps is None else np.asarray(steps, dtype=int)
    n_steps = cfg.n_steps
    stepper = _Stepper(cfg)
    m = stepper.m
    density = cfg.density

    state0 = initial_state(cfg)
    state = np.broadcast_to(state0, (n,) + state0.shape).copy()
    streams = [NoiseStream(int(s), cfg.dt) for s in seeds]
    out = {name: [] for name in observables}
    want = np.zeros(n_steps + 1, dtype=bool)
    want[steps] = True
    x_abs_max = np.zeros(n)
    dW_all = np.empty((n, n_steps)) if record_increments else None
    dV_all = np.empty((n, n_steps)) if record_increments else None

    def sample(st):
        for name in observables:
            out[name].append(observe(name, st, m, density))

    ths = None
    if thresholds is not None:
        fmap = threshold_map if threshold_map is not None else (lambda c: c)
        ths = fmap(np.asarray(thresholds, dtype=float))
        hit = np.full((n, ths.size), -1, dtype=np.int64)

        def check(st, k):
            c = fmap(observe("C", st, m, density))
            newly = (hit < 0) & (c[:, None] >= ths[None, :])
            hit[newly] = k
            return bool(np.all(hit >= 0))

        check(state, 0)

    if want[0]:
        sample(state)
    k = 0
    while k < n_steps:
        kb = min(block, n_steps - k)
        dW_block = np.stack([s.increments(kb) for s in streams])
        for j in range(kb):
            dW = dW_block[:, j]
            if record_increments:
                x = stepper.expect(state)
                dW_all[:, k] = dW
                if cfg.eta > 0:
                    dV_all[:, k] = homodyne_record(x, dW, m, cfg.dt)
                else:
                    dV_all[:, k] = np.nan
            state = stepper(state, dW, k * cfg.dt)
            k += 1
            if cfg.protocol in ("hill_ralph", "p_f") and cfg.mode == "hamiltonian":
                np.maximum(x_abs_max, np.abs(stepper.expect(state)), out=x_abs_max)
            if want[k]:
                sample(state)
            if ths is not None and check(state, k) and not observables:
                k = n_steps
                break
    obs = {name: np.stack(vals, axis=1) for name, vals in out.items()}
    extra = {"hit_steps": hit} if ths is not None else {}
    return BatchResult(t=steps * cfg.dt, steps=steps, observables=obs, seeds=seeds,
                       checksums=[s.checksum() for s in streams], x_abs_max=x_abs_max,
                       dW=dW_all, dV=dV_all, extra=extra)


def run_protocol(config: SimConfig, keep_states=False):
    """Single trajectory with every step recorded."""
    cfg = config.resolved()
    names = ("C", "X", "state") if keep_states else ("C", "X")
    res = simulate_batch(cfg, [cfg.seed], names, steps=np.arange(cfg.n_steps + 1),
                         record_increments=True)
    return TrajectoryRecord(
        t=res.t, dW=res.dW[0], dV=res.dV[0], C=res.observables["C"][0],
        x=res.observables["X"][0], seed=cfg.seed, checksum=res.checksums[0],
        states=res.observables["state"][0] if keep_states else None, config=cfg)
