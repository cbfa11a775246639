"""Monte Carlo ensembles and shared-noise paired runs.

Trajectory ``i`` of an ensemble always uses seed ``base_seed + i``.  Results
are written to per-trajectory slots and reduced afterwards with exactly
rounded sums, so the statistics do not depend on how the trajectories were
split between workers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import reduced
from .protocols import ConfigError, SimConfig, simulate_batch
from .qcore import ControlTargets
from .sde import NoiseStream, StepSizeError

CHUNK = 4096


class EnsembleError(StepSizeError):
    """A trajectory of an ensemble failed; ``seed`` identifies it."""

    def __init__(self, msg, seed):
        super().__init__(msg)
        self.seed = seed


@dataclass
class EnsembleStats:
    t: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    stderr: np.ndarray
    N: int
    base_seed: int
    observable: str = "C"
    config: Optional[SimConfig] = None
    checksums: list = field(default_factory=list)
    values: Optional[np.ndarray] = None


def _fold(values):
    """Mean and sample standard deviation of each column, order independent."""
    n, g = values.shape
    mean = np.array([math.fsum(values[:, j]) / n for j in range(g)])
    if n == 1:
        return mean, np.zeros(g)
    dev = values - mean
    var = np.array([math.fsum(dev[:, j] * dev[:, j]) / (n - 1) for j in range(g)])
    return mean, np.sqrt(var)


def _workers(threads):
    if threads is None or threads == 0:
        return os.cpu_count() or 1
    if threads < 0:
        raise ConfigError("threads must be >= 0")
    return int(threads)


def _chunks(n, workers, chunk=None):
    size = max(1, min(CHUNK if chunk is None else chunk, -(-n // workers)))
    return [(a, min(a + size, n)) for a in range(0, n, size)]


def _failing_seed(cfg, seeds, observables):
    for s in seeds:
        try:
            simulate_batch(cfg, [s], observables)
        except StepSizeError:
            return int(s)
    return int(seeds[0])


def _run_slots(cfg, seeds, observables, threads, **kw):
    """Run ``seeds`` in chunks, filling per-trajectory slots."""
    chunks = _chunks(len(seeds), _workers(threads))
    results = [None] * len(chunks)

    def job(k):
        a, b = chunks[k]
        try:
            results[k] = simulate_batch(cfg, seeds[a:b], observables, **kw)
        except StepSizeError as exc:
            seed = _failing_seed(cfg, seeds[a:b], observables)
            raise EnsembleError(f"trajectory with seed {seed} failed: {exc}", seed) from exc

    workers = _workers(threads)
    if workers == 1 or len(chunks) == 1:
        for k in range(len(chunks)):
            job(k)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for f in [pool.submit(job, k) for k in range(len(chunks))]:
                f.result()
    return results


def run_ensemble(config: SimConfig, N=None, base_seed=None, observable="C", threads=1,
                 keep_values=False):
    """Statistics of ``observable`` over ``N`` trajectories on the config's grid.

    ``N`` and ``base_seed`` default to the config's ``n`` and ``seed``.  A
    step-size failure aborts the run with :class:`EnsembleError` naming the
    first failing seed.
    """
    cfg = config.resolved()
    N = cfg.n if N is None else int(N)
    base_seed = cfg.seed if base_seed is None else int(base_seed)
    if N < 1:
        raise ConfigError("N must be at least 1")
    cfg = SimConfig(**{**cfg.as_dict(), "n": N, "seed": base_seed}).resolved()
    seeds = base_seed + np.arange(N, dtype=np.int64)
    parts = _run_slots(cfg, seeds, (observable,), threads)
    values = np.concatenate([p.observables[observable] for p in parts], axis=0)
    checksums = [c for p in parts for c in p.checksums]
    mean, std = _fold(values)
    return EnsembleStats(t=parts[0].t, mean=mean, std=std, stderr=std / np.sqrt(N), N=N,
                         base_seed=base_seed, observable=observable, config=cfg,
                         checksums=checksums, values=values if keep_values else None)


# ---------------------------------------------------------------------------
# paired runs


@dataclass(frozen=True)
class ReducedConfig:
    """A scalar SDE leg for :func:`run_paired`.

    ``equation`` is ``"bloch"`` (uses ``u_t``, ``gamma_t``), ``"half"`` or
    ``"full"`` (use ``targets``).  The two-qubit noise is multiplied by
    ``noise_sign`` before it drives the scalar equation.
    """

    equation: str
    x0: float
    dt: float
    t_max: float
    grid_points: int = 200
    targets: Optional[ControlTargets] = None
    u_t: float = 0.0
    gamma_t: float = 2.0
    scheme: Optional[str] = None
    noise_sign: float = 1.0

    @property
    def n_steps(self):
        return int(round(self.t_max / self.dt))

    def grid_steps(self):
        return np.unique(np.round(np.linspace(0, self.n_steps, self.grid_points)).astype(int))

    def path(self, dW):
        dW = self.noise_sign * np.asarray(dW)
        if self.equation == "bloch":
            kw = {} if self.scheme is None else {"scheme": self.scheme}
            return reduced.integrate_bloch(self.x0, self.u_t, self.gamma_t, dW, self.dt, **kw)
        if self.targets is None:
            raise ConfigError("concurrence legs need control targets")
        if self.equation == "half":
            return reduced.integrate_half(self.x0, self.targets, dW, self.dt)
        if self.equation == "full":
            kw = {} if self.scheme is None else {"scheme": self.scheme}
            return reduced.integrate_full(self.x0, self.targets, dW, self.dt, **kw)
        raise ConfigError(f"unknown reduced equation {self.equation!r}")


Leg = Union[SimConfig, ReducedConfig]


@dataclass
class PairedRun:
    config_a: Leg
    config_b: Leg
    t: np.ndarray
    a: np.ndarray
    b: np.ndarray
    max_dev: np.ndarray
    checksums_a: list
    checksums_b: list

    @property
    def checksums_match(self):
        return self.checksums_a == self.checksums_b

    @property
    def worst(self):
        return float(self.max_dev.max())


def _run_leg(leg: Leg, seeds, obs, steps):
    if isinstance(leg, ReducedConfig):
        vals, sums = [], []
        for s in seeds:
            stream = NoiseStream(int(s), leg.dt)
            x = leg.path(stream.increments(leg.n_steps))
            vals.append(np.abs(x[steps]) if obs in ("C", "r") else x[steps])
            sums.append(stream.checksum())
        return np.array(vals), sums
    res = simulate_batch(leg, seeds, (obs,), steps=steps)
    return res.observables[obs], res.checksums


def run_paired(config_a: Leg, config_b: Leg, N, base_seed, obs_a="C", obs_b="C"):
    """Run two legs on identical noise and compare observables per time.

    Trajectory ``i`` of both legs draws from ``NoiseStream(base_seed + i)``;
    the stream checksums of the two legs are reported so that the sharing
    can be confirmed.
    """
    if isinstance(config_a, SimConfig):
        config_a = config_a.resolved()
    if isinstance(config_b, SimConfig):
        config_b = config_b.resolved()
    if config_a.dt != config_b.dt:
        raise ConfigError(f"legs use different dt ({config_a.dt} vs {config_b.dt})")
    if config_a.n_steps != config_b.n_steps:
        raise ConfigError("legs cover different time spans")
    if int(N) < 1:
        raise ConfigError("N must be at least 1")
    steps = config_a.grid_steps()
    seeds = int(base_seed) + np.arange(int(N), dtype=np.int64)
    a, ca = _run_leg(config_a, seeds, obs_a, steps)
    b, cb = _run_leg(config_b, seeds, obs_b, steps)
    return PairedRun(config_a, config_b, steps * config_a.dt, a, b,
                     np.abs(a - b).max(axis=0), ca, cb)


# ---------------------------------------------------------------------------
# comparison-figure series

FIG1_SERIES = {
    "p_f": dict(protocol="p_f", measurement="full", mode="hamiltonian"),
    "p_h": dict(protocol="p_h", measurement="half", mode="lu_reset"),
    "none-full": dict(protocol="none", measurement="full"),
    "none-half": dict(protocol="none", measurement="half"),
}


def analytic_curve(protocol, measurement, t, c0=0.0):
    """Closed-form mean concurrence where one exists, else None."""
    t = np.asarray(t, dtype=float)
    if protocol == "p_h" and measurement == "half":
        return 1 - (1 - c0) * np.exp(-t)
    if protocol == "p_f" and measurement == "full":
        return np.sqrt(1 - (1 - c0 ** 2) * np.exp(-t))
    if protocol == "none" and measurement == "full" and c0 == 0:
        return np.array([math.erf(math.sqrt(x / 2)) for x in t])
    return None


def fig1_series(dt=1e-4, T=5.0, N=10000, seed=0, grid_points=201, n_feedback=100,
                threads=1):
    """Mean concurrence of the four protocols of the comparison figure.

    The measurement-only series use ``N`` trajectories.  The feedback series
    are deterministic in the continuum limit and use ``min(N, n_feedback)``.
    """
    out = {}
    for name, kw in FIG1_SERIES.items():
        n = N if name.startswith("none") else min(N, n_feedback)
        cfg = SimConfig(dt=dt, t_max=T, grid_points=grid_points, n=n, seed=seed, **kw)
        out[name] = run_ensemble(cfg, threads=threads)
    return out


def check_fig1(series, n_sigma=3.0, half_target=0.5, half_tol=0.02, late=0.9):
    """Quantitative checks on :func:`fig1_series` output."""
    def geq(a, b):
        s = series[a], series[b]
        slack = n_sigma * np.hypot(s[0].stderr, s[1].stderr)
        return bool(np.all(s[0].mean - s[1].mean >= -slack - 1e-12))

    nf = series["none-full"]
    ref = analytic_curve("none", "full", nf.t)
    z = np.abs(nf.mean - ref) <= n_sigma * nf.stderr + 1e-12
    nh = series["none-half"]
    tail = nh.t >= late * nh.t[-1]
    half_long = float(nh.mean[tail].mean())
    checks = {
        "erf_within_3_stderr": bool(np.all(z)),
        "erf_worst_sigma": float(np.max(np.abs(nf.mean - ref)[1:] / nf.stderr[1:])),
        "none_half_long_time": half_long,
        "none_half_ok": abs(half_long - half_target) <= half_tol,
        "order_pf_ph": geq("p_f", "p_h"),
        "order_ph_none_half": geq("p_h", "none-half"),
        "order_pf_none_full": geq("p_f", "none-full"),
    }
    checks["passed"] = all(v for k, v in checks.items() if k.endswith(("ok", "stderr"))
                           or k.startswith("order"))
    return checks
