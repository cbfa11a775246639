"""Numerical checks of optimality statements.

HJB conditions are evaluated with the analytic drift and diffusion of
:mod:`bellfb.reduced` on dense grids of states and controls.  Statistical
claims (entropy bound, hitting times) run trajectory ensembles.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import qcore
from .qcore import ControlTargets, DomainError
from .reduced import dC_full, dC_half, map_two_qubit_to_bloch

HIT_CAP = 15.0
SQRT_HALF = 1 / np.sqrt(2)


@dataclass(frozen=True)
class CostToGo:
    """Cost-to-go ``c(x, t)`` with closed-form partial derivatives."""

    c: Callable
    dc_dt: Callable
    dc_dx: Callable
    d2c_dx2: Callable
    name: str = ""

    def finite_difference_check(self, xs, ts, h=1e-6, h2=1e-4):
        """Largest relative mismatch between the closed-form partials and
        central differences (steps ``h`` and ``h2``) on the grid ``xs x ts``."""
        X, Tm = np.meshgrid(np.asarray(xs, float), np.asarray(ts, float), indexing="ij")
        num_t = (self.c(X, Tm + h) - self.c(X, Tm - h)) / (2 * h)
        num_x = (self.c(X + h, Tm) - self.c(X - h, Tm)) / (2 * h)
        num_xx = (self.c(X + h2, Tm) - 2 * self.c(X, Tm) + self.c(X - h2, Tm)) / h2 ** 2
        worst = 0.0
        for exact, num in ((self.dc_dt(X, Tm), num_t), (self.dc_dx(X, Tm), num_x),
                           (self.d2c_dx2(X, Tm), num_xx)):
            scale = np.maximum(np.abs(exact), 1.0)
            worst = max(worst, float(np.max(np.abs(exact - num) / scale)))
        return worst


def max_concurrence_cost(T=1.0):
    """Expected ``1 - C(T)`` under P_H: ``(1 - C) e^{t - T}``."""
    return CostToGo(
        c=lambda C, t: (1 - C) * np.exp(t - T),
        dc_dt=lambda C, t: (1 - C) * np.exp(t - T),
        dc_dx=lambda C, t: -np.exp(t - T) + 0 * C,
        d2c_dx2=lambda C, t: 0 * C * t,
        name="max-concurrence")


def min_time_cost(C_threshold):
    """Remaining time for P_H to reach ``C_threshold``:
    ``ln((1 - C)/(1 - C_threshold))``."""
    if not 0 < C_threshold < 1:
        raise DomainError("C_threshold must lie in (0, 1)")
    lt = np.log(1 - C_threshold)
    return CostToGo(
        c=lambda C, t: np.log(1 - C) * np.ones_like(t) - lt,
        dc_dt=lambda C, t: 0 * C * t,
        dc_dx=lambda C, t: -1 / (1 - C) + 0 * t,
        d2c_dx2=lambda C, t: -1 / (1 - C) ** 2 + 0 * t,
        name="min-time")


def bloch_purity_cost(T=1.0):
    """Expected ``1 - r(T)`` under Jacobs' feedback at full rate:
    ``1 - sqrt(1 - (1 - r^2) e^{t - T})``."""
    def q(r, t):
        return 1 - (1 - r ** 2) * np.exp(t - T)

    return CostToGo(
        c=lambda r, t: 1 - np.sqrt(q(r, t)),
        dc_dt=lambda r, t: (1 - r ** 2) * np.exp(t - T) / (2 * np.sqrt(q(r, t))),
        dc_dx=lambda r, t: -r * np.exp(t - T) / np.sqrt(q(r, t)),
        d2c_dx2=lambda r, t: (-np.exp(t - T) / np.sqrt(q(r, t))
                              + r ** 2 * np.exp(2 * (t - T)) / q(r, t) ** 1.5),
        name="bloch-purity")


@dataclass
class HJBReport:
    name: str
    grid: dict
    max_G: np.ndarray
    argmax: list
    residual: np.ndarray
    passed: bool
    worst: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def max_residual(self):
        return float(np.max(self.residual))

    def summary(self):
        d = {"name": self.name, "passed": self.passed, "max_residual": self.max_residual,
             "worst": self.worst}
        d.update(self.details)
        return d


def _drift_diffusion(C, u, v, w, measurement):
    """Vectorised drift/diffusion for arrays of controls at one C."""
    if measurement == "half":
        if abs(C) < 1e-12:
            return np.abs(v * v - u * u), 0 * u
        return (v * v - u * u) * w - C * (v * v + u * u), -2 * C * np.sqrt(1 - C * C) * u * v
    if measurement == "full":
        k = u * u - v * v
        if abs(C) < 1e-12:
            return 0 * u, k
        return (1 - C * C) * k * k * (1 - w * w) / (2 * C), (1 - C * C) * k * w
    raise DomainError(f"unknown measurement {measurement!r}")


def hjb_G(C, t, targets: ControlTargets, cost: CostToGo, measurement="half"):
    """``G = -1/2 B^2 d2c/dC2 - A dc/dC`` for ``dC = A dt + B dW``."""
    A, B = (dC_half if measurement == "half" else dC_full)(C, targets)
    return -0.5 * B * B * cost.d2c_dx2(C, t) - A * cost.dc_dx(C, t)


def _control_grid(n):
    g = np.linspace(-1, 1, n)
    return np.meshgrid(g, g, g, indexing="ij")


def _max_G_over_controls(C, t, cost, measurement, U, V, W):
    A, B = _drift_diffusion(C, U, V, W, measurement)
    G = -0.5 * B * B * cost.d2c_dx2(C, t) - A * cost.dc_dx(C, t)
    return G


def verify_hjb_max_concurrence(measurement="half", n_controls=101, n_states=101,
                               times=(0.0, 0.5, 1.0), T=1.0, tol=1e-9):
    """Check that P_H's cost-to-go solves the HJB equation for maximal
    expected final concurrence, with P_H's set-points as maximiser."""
    if measurement != "half":
        raise DomainError("the max-concurrence check is defined for half parity")
    cost = max_concurrence_cost(T)
    U, V, W = _control_grid(n_controls)
    Cs = np.linspace(0, 1, n_states)
    max_G = np.empty((n_states, len(times)))
    residual = np.empty_like(max_G)
    argmax = []
    p_h_attains = True
    extra_classes = []
    for i, C in enumerate(Cs):
        for j, t in enumerate(times):
            G = _max_G_over_controls(C, t, cost, measurement, U, V, W)
            gmax = G.max()
            max_G[i, j] = gmax
            residual[i, j] = abs(cost.dc_dt(C, t) - gmax)
            g_ph = hjb_G(C, t, ControlTargets(0, 1, 1), cost, measurement)
            if gmax - g_ph > tol:
                p_h_attains = False
            if j == 0:
                idx = np.argwhere(G >= gmax - tol)
                classes = sorted({(round(float(U[tuple(k)]) ** 2, 6),
                                   round(float(V[tuple(k)]) ** 2, 6),
                                   round(float(W[tuple(k)]), 6)) for k in idx})
                argmax.append(classes)
                allowed = {(0.0, 1.0, 1.0), (1.0, 0.0, -1.0)}
                if not set(classes) <= allowed:
                    extra_classes.append((float(C), len(classes)))
    worst_i, worst_j = np.unravel_index(np.argmax(residual), residual.shape)
    passed = bool(residual.max() < tol and p_h_attains)
    degenerate = [c for c, _ in extra_classes]
    return HJBReport(
        name="hjb-max", grid={"C": Cs, "t": np.asarray(times), "controls": n_controls},
        max_G=max_G, argmax=argmax, residual=residual, passed=passed,
        worst={"C": float(Cs[worst_i]), "t": float(times[worst_j]),
               "residual": float(residual[worst_i, worst_j])},
        details={"p_h_attains_max": p_h_attains,
                 "mirror_symmetry": "(u,v,w)=(1,0,-1) attains the same maximum",
                 "degenerate_C": degenerate})


def _min_time_excess(C, cost, U, V, W, measurement):
    G = _max_G_over_controls(C, 0.0, cost, measurement, U, V, W)
    return float(G.max()) - 1.0


def verify_hjb_min_time(measurement="half", C_threshold=0.5, step=1e-3, n_controls=41,
                        tol=1e-9):
    """Find where P_H maximises G for the minimum-time goal.

    With ``c = ln((1 - C)/(1 - C_th))`` P_H has ``G = 1``; P_H is optimal at
    C when no control exceeds that.  The switch point is located on a grid of
    spacing ``step`` and refined by bisection.
    """
    if measurement != "half":
        raise DomainError("the min-time check is defined for half parity")
    cost = min_time_cost(C_threshold)
    U, V, W = _control_grid(n_controls)
    Cs = np.arange(0.0, 1.0 - step / 2, step)
    excess = np.array([_min_time_excess(C, cost, U, V, W, measurement) for C in Cs])
    optimal = excess <= tol
    bad = np.flatnonzero(~optimal)
    boundary = None
    if bad.size:
        hi_i = bad[0]
        lo, hi = Cs[hi_i - 1] if hi_i else 0.0, Cs[hi_i]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if _min_time_excess(mid, cost, U, V, W, measurement) <= tol:
                lo = mid
            else:
                hi = mid
        boundary = 0.5 * (lo + hi)
    covered = bool(np.all(optimal[Cs <= C_threshold]))
    passed = covered
    return HJBReport(
        name="hjb-min-time", grid={"C": Cs, "controls": n_controls},
        max_G=excess + 1.0, argmax=[], residual=np.maximum(excess, 0.0), passed=passed,
        worst={"C": float(Cs[np.argmax(excess)]), "excess": float(excess.max())},
        details={"boundary": boundary, "C_threshold": C_threshold,
                 "optimal_up_to": float(Cs[optimal].max()) if optimal[0] else 0.0})


def verify_bloch_hjb(T=1.0, n_r=100, n_u=101, n_gamma=41, times=(0.0, 0.5, 0.9), tol=1e-9):
    """HJB check for maximal expected Bloch length with both the angle
    ``u_t`` and the rate ``gamma_t in [0, 2]`` as controls."""
    cost = bloch_purity_cost(T)
    ut, gt = np.meshgrid(np.linspace(-1, 1, n_u), np.linspace(0, 2, n_gamma), indexing="ij")
    rs = np.linspace(1.0 / n_r, 1.0 - 1e-9, n_r)
    residual = np.empty((n_r, len(times)))
    max_G = np.empty_like(residual)
    argmax_ok = True
    for i, r in enumerate(rs):
        for j, t in enumerate(times):
            A = (1 - r * r) * gt * (1 - ut * ut) / (4 * r)
            B = (1 - r * r) * np.sqrt(gt / 2) * ut
            G = -0.5 * B * B * cost.d2c_dx2(r, t) - A * cost.dc_dx(r, t)
            k = np.unravel_index(np.argmax(G), G.shape)
            max_G[i, j] = G[k]
            residual[i, j] = abs(cost.dc_dt(r, t) - G[k])
            if r < 1 - 1e-6 and not (abs(ut[k]) < 1e-12 and abs(gt[k] - 2) < 1e-12):
                argmax_ok = False
    scale = np.maximum(1.0, np.abs(max_G))
    passed = bool(np.all(residual / scale < tol) and argmax_ok)
    return HJBReport(name="hjb-bloch", grid={"r": rs, "t": np.asarray(times)}, max_G=max_G,
                     argmax=[(0.0, 2.0)], residual=residual, passed=passed,
                     worst={"residual": float(residual.max())},
                     details={"argmax_is_jacobs": argmax_ok})


# ---------------------------------------------------------------------------
# entropy bound


def entropy_bound(t):
    """Largest entanglement entropy of qubit 1 allowed by dephasing at rate
    1/2: ``h2((1 + e^{-t/2})/2)``."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("time must be non-negative")
    return qcore.binary_entropy((1 + np.exp(-t / 2)) / 2)


BOUND_PROTOCOLS = {
    "p_f": dict(protocol="p_f", measurement="full", mode="hamiltonian"),
    "p_h": dict(protocol="p_h", measurement="half", mode="lu_reset"),
    "none-half": dict(protocol="none", measurement="half"),
    "none-full": dict(protocol="none", measurement="full"),
}


def verify_bound_saturation(protocol, T=3.0, dt=1e-4, n=None, seed=0, grid_points=61,
                            sat_tol=5e-3, margin=0.01, window=(0.5, 3.0)):
    """Compare qubit-1 entropy along simulated trajectories with
    :func:`entropy_bound`.

    P_F is expected to sit on the bound; the other protocols are expected to
    stay below it by ``margin`` inside ``window``.  Stochastic protocols are
    compared through their ensemble-mean entropy.
    """
    from .protocols import SimConfig, simulate_batch

    if protocol not in BOUND_PROTOCOLS:
        raise DomainError(f"protocol must be one of {sorted(BOUND_PROTOCOLS)}")
    stochastic = protocol.startswith("none")
    if n is None:
        n = 400 if stochastic else 1
    cfg = SimConfig(dt=dt, t_max=T, seed=seed, grid_points=grid_points, n=n,
                    **BOUND_PROTOCOLS[protocol])
    res = simulate_batch(cfg, seed + np.arange(n), ("E1",))
    e1 = res.observables["E1"]
    mean = e1.mean(axis=0)
    bound = entropy_bound(res.t)
    gap = bound - mean
    if protocol == "p_f":
        dev = np.abs(e1 - bound).max(axis=0)
        passed = bool(dev.max() < sat_tol)
        stat = float(dev.max())
    else:
        inside = (res.t >= window[0]) & (res.t <= window[1])
        passed = bool(np.all(gap[inside] > margin))
        stat = float(gap[inside].min())
    return {"protocol": protocol, "passed": passed, "t": res.t, "mean_E1": mean,
            "bound": bound, "statistic": stat, "n": n}


# ---------------------------------------------------------------------------
# hitting times


@dataclass
class HittingTimes:
    threshold: float
    mean: float
    stderr: float
    capped_fraction: float
    reliable: bool
    times: np.ndarray


def hitting_time_stats(protocol, measurement, C_threshold, N, seed, dt=1e-3,
                       mode=None, t_cap=HIT_CAP, observable=None):
    """First time ``|C| >= C_threshold`` over ``N`` trajectories.

    Trajectories that do not reach the threshold by ``t_cap`` count as
    ``t_cap``; when more than 1% are capped the statistics are flagged
    unreliable.  ``C_threshold`` may be a sequence; a list of results is
    then returned.  ``observable`` optionally applies a monotone map to C
    and the thresholds before comparison.
    """
    from .protocols import SimConfig, simulate_batch

    ths = np.atleast_1d(np.asarray(C_threshold, dtype=float))
    if np.any((ths <= 0) | (ths >= 1)):
        raise DomainError("thresholds must lie in (0, 1)")
    cfg = SimConfig(protocol=protocol, measurement=measurement, mode=mode, dt=dt,
                    t_max=t_cap, n=N, seed=seed, grid_points=2)
    res = simulate_batch(cfg, seed + np.arange(N), (), thresholds=ths,
                         threshold_map=observable)
    hits = res.extra["hit_steps"]
    out = []
    for j, th in enumerate(ths):
        steps = hits[:, j]
        capped = steps < 0
        times = np.where(capped, t_cap, steps * dt)
        frac = float(capped.mean())
        out.append(HittingTimes(float(th), float(times.mean()),
                                float(times.std(ddof=1) / np.sqrt(N)) if N > 1 else 0.0,
                                frac, frac <= 0.01, times))
    return out if np.ndim(C_threshold) else out[0]


def deterministic_hitting_time(protocol, C_threshold, C0=0.0):
    """Closed-form hitting times of the deterministic protocols."""
    if protocol == "p_h":
        return float(np.log((1 - C0) / (1 - C_threshold)))
    if protocol == "p_f":
        return float(np.log((1 - C0 ** 2) / (1 - C_threshold ** 2)))
    raise DomainError("closed form available for p_h and p_f only")


# ---------------------------------------------------------------------------
# mapping and Hill-Ralph checks


def verify_mapping(N=50, seed=0, T=3.0, dt=1e-4, grid_points=301, tol=1e-2):
    """Shared-noise comparison of Hamiltonian-mode P_F with the Jacobs-controlled
    Bloch-length SDE (``u_t = 0``, ``gamma_t = 2``)."""
    from .ensemble import ReducedConfig, run_paired
    from .protocols import P_F_TARGETS, SimConfig

    u_t, gamma_t = map_two_qubit_to_bloch(P_F_TARGETS)
    a = SimConfig(protocol="p_f", measurement="full", mode="hamiltonian", dt=dt, t_max=T,
                  grid_points=grid_points)
    b = ReducedConfig("bloch", 0.0, dt, T, grid_points=grid_points, u_t=u_t, gamma_t=gamma_t)
    run = run_paired(a, b, N, seed)
    worst = int(np.argmax(run.max_dev))
    return {"passed": bool(run.worst < tol and run.checksums_match), "max_deviation": run.worst,
            "worst_t": float(run.t[worst]), "checksums_match": run.checksums_match,
            "N": N, "u_t": float(u_t), "gamma_t": float(gamma_t)}


def hill_ralph_alpha(t):
    """Coherence of the Hill-Ralph family along the feedback trajectory."""
    return -1j * np.sqrt(1 - np.exp(-np.asarray(t, dtype=float))) / 4


def verify_hill_ralph(T=3.0, dt=1e-4, seed=0, grid_points=301, state_tol=1e-3,
                      conc_tol=5e-3, x_tol=1e-6):
    """Simulate the Hill-Ralph protocol and compare with the closed-form family."""
    from .protocols import SimConfig, hill_ralph_family, simulate_batch

    cfg = SimConfig(protocol="hill_ralph", measurement="full", dt=dt, t_max=T,
                    grid_points=grid_points, seed=seed)
    res = simulate_batch(cfg, [seed], ("state", "C"))
    rho = res.observables["state"][0]
    ref = hill_ralph_family(hill_ralph_alpha(res.t))
    state_dev = float(np.abs(rho - ref).max())
    conc_dev = float(np.abs(res.observables["C"][0] - np.sqrt(1 - np.exp(-res.t))).max())
    x_dev = float(res.x_abs_max[0])
    return {"passed": state_dev < state_tol and conc_dev < conc_tol and x_dev < x_tol,
            "state_deviation": state_dev, "concurrence_deviation": conc_dev,
            "max_abs_XF": x_dev}
