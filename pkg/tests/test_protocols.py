import numpy as np
import pytest

from bellfb import qcore
from bellfb.ensemble import run_ensemble, run_paired
from bellfb.protocols import (P_F_TARGETS, P_H_TARGETS, ConfigError, ControlLaw,
                              FeedbackHamiltonian, FinitePulse, SimConfig, StateFamilyError,
                              hill_ralph_family, hill_ralph_feedback, hill_ralph_gain,
                              hill_ralph_initial_state, lu_reset_paths, lu_reset_step,
                              pf_family_state, pf_feedback_hamiltonian, run_protocol,
                              simulate_batch, zeroing_angle, zeroing_pulse)
from bellfb.qcore import DomainError, MeasurementOp, concurrence_pure
from bellfb.sde import NoiseStream, step_sse, step_wm_pure

X_F = qcore.X_FULL


def random_state(rng):
    z = rng.normal(size=4) + 1j * rng.normal(size=4)
    return z / np.linalg.norm(z)


def same_ray(a, b):
    """Distance between two pure states after removing the global phase."""
    ov = np.vdot(a, b)
    return np.abs(a * ov / abs(ov) - b).max()


class TestControlLaw:
    def test_targets(self):
        for t, C in [(0.0, 0.0), (1.3, 0.4), (9.0, 1.0)]:
            assert ControlLaw.p_h()(t, C) == P_H_TARGETS
            assert ControlLaw.p_f()(t, C) == P_F_TARGETS
            assert ControlLaw.none()(t, C) is None
        assert (P_H_TARGETS.u, P_H_TARGETS.v, P_H_TARGETS.w) == (0.0, 1.0, 1.0)
        assert (P_F_TARGETS.u, P_F_TARGETS.v, P_F_TARGETS.w) == (0.0, 1.0, 0.0)

    def test_modes(self):
        assert ControlLaw.p_f("hamiltonian").mode == "hamiltonian"
        assert ControlLaw.p_h().mode == "lu_reset"


class TestFeedbackHamiltonian:
    def test_apply_matches_matrix(self):
        rng = np.random.default_rng(0)
        H = FeedbackHamiltonian(h0=0.3, hx1=-0.7, hy2=0.2, hz1=1.1)
        psi = random_state(rng)
        assert np.allclose(H.apply(psi), H.matrix() @ psi, atol=1e-14)
        rho = qcore.projector(psi)
        assert np.allclose(H.apply(rho, axis=-2), H.matrix() @ rho, atol=1e-14)

    def test_batched_coefficients(self):
        H = FeedbackHamiltonian(hx2=np.array([0.5, -1.0]))
        assert H.matrix().shape == (2, 4, 4)
        assert np.allclose(H.matrix()[1], -np.kron(qcore.I2, qcore.SX))

    def test_hermitian(self):
        H = FeedbackHamiltonian(h0=-1.5, hx1=-1.0, hx2=-1.0).matrix()
        assert np.allclose(H, H.conj().T)


class TestPFFeedback:
    def test_half_concurrence(self):
        H = pf_feedback_hamiltonian(0.5, 0.0, 1e-4)
        assert H.hx1 + H.hx2 == pytest.approx(-2.0)
        assert H.hx1 == H.hx2
        assert H.h0 == pytest.approx(-1.5)
        assert H.hy1 == H.hz1 == H.hy2 == H.hz2 == 0

    def test_unit_concurrence(self):
        H = pf_feedback_hamiltonian(1.0, 0.0, 1e-4)
        assert H.hx1 + H.hx2 == pytest.approx(-1.0)
        assert H.h0 == pytest.approx(0.0)

    def test_sign_of_C_ignored(self):
        assert pf_feedback_hamiltonian(-0.5, 0.0, 1e-4) == pf_feedback_hamiltonian(0.5, 0.0, 1e-4)

    def test_single_qubit_split(self):
        H = pf_feedback_hamiltonian(0.5, 0.0, 1e-4, split="qubit2")
        assert (H.hx1, H.hx2) == (0.0, pytest.approx(-2.0))

    def test_exact_phase_option(self):
        H = pf_feedback_hamiltonian(0.6, 0.0, 1e-4, exact_phase=True)
        assert H.h0 == pytest.approx(-0.8 / 0.6)

    def test_pulse_at_zero(self):
        up = pf_feedback_hamiltonian(0.0, 0.01, 1e-4)
        down = pf_feedback_hamiltonian(0.0, -0.01, 1e-4)
        assert isinstance(up, FinitePulse)
        assert up.theta1 + up.theta2 == pytest.approx(-np.pi / 2)
        assert down.theta1 + down.theta2 == pytest.approx(np.pi / 2)

    def test_errors(self):
        with pytest.raises(DomainError):
            pf_feedback_hamiltonian(1.2, 0.0, 1e-4)
        with pytest.raises(DomainError):
            pf_feedback_hamiltonian(0.5, 0.0, 1e-4, split="both")

    def test_pulse_unitary(self):
        u = FinitePulse(np.pi / 3, -0.4).unitary()
        assert np.allclose(u.conj().T @ u, np.eye(4))


class TestZeroingPulse:
    def test_sets_zz_to_zero(self):
        rng = np.random.default_rng(1)
        zz = np.kron(qcore.SZ, qcore.SZ)
        yz = np.kron(qcore.SY, qcore.SZ)
        for _ in range(20):
            psi = random_state(rng)
            out = zeroing_pulse(psi).apply(psi)
            assert abs(np.vdot(out, zz @ out)) < 1e-12
            assert np.vdot(out, yz @ out).real >= 0

    def test_matches_sign_rule_after_measurement(self):
        # from |++> one measurement step leaves C = O(dW^2); the pulse is -sgn(dV) pi/2
        m = MeasurementOp.full_parity()
        dt = 1e-6
        for dW in (1e-3, -1e-3):
            psi = step_sse(np.full(4, 0.5, dtype=complex), m, dW, dt)
            assert zeroing_angle(psi) == pytest.approx(-np.sign(dW) * np.pi / 2, abs=1e-2)

    def test_density_version(self):
        rng = np.random.default_rng(2)
        psi = random_state(rng)
        assert zeroing_angle(qcore.projector(psi), density=True) == pytest.approx(
            zeroing_angle(psi), abs=1e-12)


class TestPFFamily:
    @pytest.mark.parametrize("C", [0.0, 0.1, 0.5, 0.9, 1.0])
    def test_concurrence_and_parity(self, C):
        psi = pf_family_state(C)
        assert concurrence_pure(psi) == pytest.approx(C, abs=1e-12)
        assert np.vdot(psi, X_F @ psi).real == pytest.approx(0.0, abs=1e-12)
        assert np.linalg.norm(psi) == pytest.approx(1.0)

    def test_feedback_cancels_noise(self):
        dt = 1e-4
        m = MeasurementOp.full_parity()
        for C in (0.2, 0.5, 0.8):
            psi = pf_family_state(C)
            H = pf_feedback_hamiltonian(C, 0.0, dt)
            up = concurrence_pure(step_wm_pure(psi, m, H, np.sqrt(dt), dt))
            down = concurrence_pure(step_wm_pure(psi, m, H, -np.sqrt(dt), dt))
            assert abs(up - down) < 10 * dt


class TestLUReset:
    def test_canonical_state_is_fixed(self):
        psi = qcore.canonical_states(np.array(0.37), P_H_TARGETS)
        assert same_ray(lu_reset_step(psi, ControlLaw.p_h(), 0.0), psi) < 1e-10

    def test_concurrence_unchanged_and_targets_reached(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            psi = random_state(rng)
            out = lu_reset_step(psi, ControlLaw.p_f(), 0.0)
            C = concurrence_pure(psi)
            assert concurrence_pure(out) == pytest.approx(C, abs=1e-10)
            ref = qcore.canonical_states(np.array(C), P_F_TARGETS)
            assert same_ray(out, ref) < 1e-8

    def test_no_feedback_law_is_identity(self):
        psi = random_state(np.random.default_rng(4))
        assert np.array_equal(lu_reset_step(psi, ControlLaw.none(), 0.0), psi)

    def test_engine_shortcut_matches_general_path(self):
        # the batch engine's constant-target shortcut against lu_reset_step
        cfg = SimConfig(protocol="p_h", measurement="half", dt=1e-3, t_max=0.2, c0=0.2)
        m = cfg.measurement_op()
        dW = NoiseStream(9, cfg.dt).increments(cfg.n_steps)
        psi = qcore.canonical_states(np.array(0.2), P_H_TARGETS)
        for j, d in enumerate(dW):
            psi = lu_reset_step(step_sse(psi, m, d, cfg.dt), ControlLaw.p_h(), (j + 1) * cfg.dt)
        res = simulate_batch(cfg, [9], ("state",), steps=[cfg.n_steps])
        assert same_ray(res.observables["state"][0, -1], psi) < 1e-10

    def test_paths_helper_matches_engine(self):
        cfg = SimConfig(protocol="p_f", measurement="full", dt=1e-3, t_max=0.5, c0=0.3)
        res = simulate_batch(cfg, [5, 6], ("C",), steps=np.arange(cfg.n_steps + 1))
        dW = np.stack([NoiseStream(s, cfg.dt).increments(cfg.n_steps) for s in (5, 6)])
        paths = lu_reset_paths([0.3, 0.3], [P_F_TARGETS] * 2, "full", dW, cfg.dt)
        assert np.allclose(paths, res.observables["C"], atol=1e-12)


class TestHillRalph:
    def test_initial_state_in_family(self):
        assert np.allclose(hill_ralph_initial_state(), hill_ralph_family(0.0))
        assert qcore.concurrence_mixed(hill_ralph_initial_state()) == pytest.approx(0, abs=1e-10)

    def test_gain_at_long_times(self):
        # P = i/(2 alpha) at alpha = -i/4
        rho = hill_ralph_family(-0.25j)
        assert hill_ralph_gain(rho) == pytest.approx(-2.0)
        assert hill_ralph_feedback(rho).hx1 == pytest.approx(-1.0)

    def test_family_concurrence(self):
        for a in (0.05, 0.1, 0.2, 0.25):
            assert qcore.concurrence_mixed(hill_ralph_family(-1j * a)) == pytest.approx(
                4 * a, abs=1e-10)

    def test_family_violations(self):
        rho = hill_ralph_family(-0.1j)
        bad = rho.copy()
        bad[0, 1] += 1e-3
        bad[1, 0] += 1e-3
        with pytest.raises(StateFamilyError):
            hill_ralph_gain(bad)
        off = 0.9 * rho + 0.1 * np.diag([1, 0, 0, 0])
        with pytest.raises(StateFamilyError):
            hill_ralph_gain(off)
        with pytest.raises(DomainError):
            hill_ralph_gain(hill_ralph_family(0.0))

    def test_trajectory(self):
        cfg = SimConfig(protocol="hill_ralph", measurement="full", dt=1e-4, t_max=2.0,
                        grid_points=41)
        res = simulate_batch(cfg, [4], ("state", "C"))
        rho = res.observables["state"][0]
        flipped = qcore.SYSY @ rho.conj() @ qcore.SYSY
        assert np.linalg.norm(rho - flipped, axis=(-2, -1)).max() < 1e-6
        assert np.abs(res.observables["C"][0] - np.sqrt(1 - np.exp(-res.t))).max() < 5e-3
        assert res.x_abs_max[0] < 1e-6


class TestSimConfig:
    @pytest.mark.parametrize("kw", [
        dict(protocol="hill_ralph", measurement="half"),
        dict(protocol="p_h", mode="hamiltonian"),
        dict(protocol="p_f", eta=0.5),
        dict(dt=0.0),
        dict(dt=1e-3, t_max=1e-3),
        dict(c0=1.5),
        dict(n=0),
        dict(measurement="bell"),
        dict(protocol="p_x"),
        dict(split="middle"),
        dict(protocol="p_f", mode="hamiltonian", measurement="half"),
    ])
    def test_rejected(self, kw):
        with pytest.raises(ConfigError):
            SimConfig(**kw).resolved()

    def test_defaults(self):
        assert SimConfig(protocol="hill_ralph").resolved().mode == "hamiltonian"
        assert SimConfig(protocol="p_h").resolved().mode == "lu_reset"
        assert SimConfig(protocol="none", eta=0.5).resolved().density


class TestRunProtocol:
    def test_record(self):
        cfg = SimConfig(protocol="none", measurement="full", dt=1e-3, t_max=0.5, seed=8)
        rec = run_protocol(cfg)
        assert rec.C.shape == rec.x.shape == (cfg.n_steps + 1,)
        assert rec.dW.shape == rec.dV.shape == (cfg.n_steps,)
        # dV = <X> dt + dW/2 at unit efficiency and rate 2
        assert np.allclose(rec.dV, rec.x[:-1] * cfg.dt + rec.dW / 2, atol=1e-15)
        stream = NoiseStream(8, cfg.dt)
        assert np.array_equal(rec.dW, stream.increments(cfg.n_steps))
        assert rec.checksum == stream.checksum()

    def test_record_is_reproducible(self):
        cfg = SimConfig(protocol="p_f", measurement="full", mode="hamiltonian", dt=1e-3,
                        t_max=0.3, seed=2)
        a, b = run_protocol(cfg), run_protocol(cfg)
        assert np.array_equal(a.C, b.C) and a.checksum == b.checksum

    def test_no_feedback_collapses(self):
        cfg = SimConfig(protocol="none", measurement="full", dt=1e-4, t_max=6.0, seed=4)
        res = simulate_batch(cfg, [4], ("C", "X"))
        assert abs(res.observables["X"][0, -1]) == pytest.approx(0.5, abs=1e-4)
        assert res.observables["C"][0, -1] == pytest.approx(1.0, abs=1e-4)

    def test_pf_final_state_not_an_eigenstate(self):
        cfg = SimConfig(protocol="p_f", measurement="full", mode="hamiltonian", dt=1e-4,
                        t_max=8.0)
        res = simulate_batch(cfg, [1, 2], ("C", "X", "state"), steps=[cfg.n_steps])
        psi = res.observables["state"][:, -1]
        x = res.observables["X"][:, -1]
        x2 = np.einsum("ni,ij,nj->n", psi.conj(), X_F @ X_F, psi).real
        assert np.all(np.abs(x) < 1e-6)
        assert np.allclose(x2 - x ** 2, 0.25, atol=1e-6)
        assert np.all(res.observables["C"][:, -1] > 0.999)

    def test_pf_state_follows_family(self):
        dt = 1e-5
        cfg = SimConfig(protocol="p_f", measurement="full", mode="hamiltonian", dt=dt,
                        t_max=1.0, seed=6)
        res = simulate_batch(cfg, [6], ("state",), steps=[cfg.n_steps])
        psi = res.observables["state"][0, -1]
        assert same_ray(psi, pf_family_state(np.sqrt(1 - np.exp(-1.0)))) < 1e-3


class TestFeedbackProperties:
    @pytest.mark.parametrize("kw", [
        dict(protocol="p_h", measurement="half"),
        dict(protocol="p_f", measurement="full"),
        dict(protocol="p_f", measurement="full", mode="hamiltonian"),
    ])
    def test_deterministic_across_seeds(self, kw):
        stats = run_ensemble(SimConfig(dt=1e-4, t_max=3.0, grid_points=61, n=100, **kw))
        assert stats.std.max() < 1e-2

    def test_modes_agree(self):
        lu = SimConfig(protocol="p_f", measurement="full", dt=1e-4, t_max=3.0, grid_points=61)
        ham = SimConfig(protocol="p_f", measurement="full", mode="hamiltonian", dt=1e-4,
                        t_max=3.0, grid_points=61)
        assert run_paired(lu, ham, 20, 0).worst < 1e-2

    def test_lu_reset_error_shrinks_like_sqrt_dt(self):
        devs = []
        for dt in (4e-4, 1e-4):
            cfg = SimConfig(protocol="p_h", measurement="half", dt=dt, t_max=3.0,
                            grid_points=61, n=40)
            stats = run_ensemble(cfg, keep_values=True)
            devs.append(np.sqrt(np.mean((stats.values - (1 - np.exp(-stats.t))) ** 2)))
        assert devs[0] / devs[1] == pytest.approx(2.0, rel=0.3)

    def test_single_qubit_split_agrees(self):
        kw = dict(protocol="p_f", measurement="full", mode="hamiltonian", dt=1e-4,
                  t_max=2.0, grid_points=41)
        paired = run_paired(SimConfig(**kw), SimConfig(split="qubit2", **kw), 10, 0)
        assert paired.checksums_match
        assert paired.worst < 1e-2
