import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bellfb import qcore
from bellfb.qcore import (ControlTargets, DomainError, InvalidStateError, LocalUnitary,
                          MeasurementOp, NumericalError, SchmidtParams, apply_lu,
                          concurrence_mixed, concurrence_pure, entanglement_entropy,
                          fidelity_and_singlet_fraction, hermitian_eig, partial_trace_q2,
                          schmidt_extract, state_from_schmidt)

BELL_PLUS = np.array([0, 1, 1, 0], dtype=complex) / np.sqrt(2)
PHI_MINUS = np.array([1, 0, 0, -1], dtype=complex) / np.sqrt(2)
KET00 = np.array([1, 0, 0, 0], dtype=complex)

angles = st.floats(-np.pi, np.pi, allow_nan=False)


def random_state(rng):
    z = rng.normal(size=4) + 1j * rng.normal(size=4)
    return z / np.linalg.norm(z)


def random_unitary(rng):
    z = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_lu(rng):
    return LocalUnitary(random_unitary(rng), random_unitary(rng))


class TestMeasurementOp:
    def test_named_constructors(self):
        half = MeasurementOp.half_parity()
        full = MeasurementOp.full_parity()
        sz, i2 = qcore.SZ, qcore.I2
        assert np.allclose(half.matrix, (np.kron(sz, i2) + np.kron(i2, sz)) / 2)
        assert np.allclose(full.matrix, np.kron(sz, sz) / 2)
        assert half.gamma == 2.0 and full.eta == 1.0

    def test_rejects_non_hermitian(self):
        with pytest.raises(DomainError):
            MeasurementOp(np.triu(np.ones((4, 4))))

    def test_rejects_bad_efficiency(self):
        with pytest.raises(DomainError):
            MeasurementOp.full_parity(eta=1.5)

    def test_expectations_agree(self):
        rng = np.random.default_rng(3)
        psi = random_state(rng)
        for m in (MeasurementOp.half_parity(), MeasurementOp.full_parity()):
            direct = np.real(np.vdot(psi, m.matrix @ psi))
            assert m.expect(psi) == pytest.approx(direct, abs=1e-14)
            assert m.expect_rho(qcore.projector(psi)) == pytest.approx(direct, abs=1e-14)


class TestConcurrencePure:
    def test_bell_state(self):
        assert concurrence_pure(BELL_PLUS) == pytest.approx(1.0, abs=1e-12)

    def test_product_state(self):
        assert concurrence_pure(KET00) == 0.0

    def test_schmidt_state_c06(self):
        psi = state_from_schmidt(SchmidtParams(0.6))
        assert concurrence_pure(psi) == pytest.approx(0.6, abs=1e-12)

    def test_matches_spin_flip_overlap(self):
        rng = np.random.default_rng(11)
        yy = np.kron(qcore.SY, qcore.SY)
        for _ in range(20):
            psi = random_state(rng)
            assert concurrence_pure(psi) == pytest.approx(abs(psi @ yy @ psi), abs=1e-12)

    def test_unnormalised_input_rejected(self):
        with pytest.raises(InvalidStateError):
            concurrence_pure(2 * KET00)

    def test_batch(self):
        out = concurrence_pure(np.stack([KET00, BELL_PLUS]))
        assert np.allclose(out, [0, 1])


class TestConcurrenceMixed:
    def test_classical_mixture(self):
        rho = np.diag([0.5, 0, 0, 0.5]).astype(complex)
        assert concurrence_mixed(rho) == pytest.approx(0.0, abs=1e-10)

    def test_bell_projector(self):
        assert concurrence_mixed(qcore.projector(BELL_PLUS)) == pytest.approx(1.0, abs=1e-9)

    def test_hill_ralph_state_at_ln2(self):
        from bellfb.protocols import hill_ralph_family
        t = np.log(2)
        rho = hill_ralph_family(-1j * np.sqrt(1 - np.exp(-t)) / 4)
        assert concurrence_mixed(rho) == pytest.approx(np.sqrt(0.5), abs=1e-10)

    def test_werner_states(self):
        # C = max(0, (3p - 1)/2) for p|bell><bell| + (1 - p) I/4
        for p in (0.1, 1 / 3, 0.5, 0.8):
            rho = p * qcore.projector(PHI_MINUS) + (1 - p) * np.eye(4) / 4
            assert concurrence_mixed(rho) == pytest.approx(max(0, (3 * p - 1) / 2), abs=1e-9)

    def test_rank_one_equals_pure(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            psi = random_state(rng)
            assert concurrence_mixed(qcore.projector(psi)) == pytest.approx(
                concurrence_pure(psi), abs=1e-10)

    def test_non_positive_rejected(self):
        rho = np.diag([1.2, -0.2, 0, 0]).astype(complex)
        with pytest.raises(InvalidStateError):
            concurrence_mixed(rho)


class TestHermitianEig:
    def test_matches_reference(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            z = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            h = z + z.conj().T
            w, v = hermitian_eig(h)
            assert np.allclose(w, np.linalg.eigvalsh(h), atol=1e-10)
            assert np.allclose(v @ np.diag(w) @ v.conj().T, h, atol=1e-10)

    def test_non_convergence_reports_sweeps(self):
        z = np.arange(16).reshape(4, 4) * (1 + 1j)
        with pytest.raises(NumericalError) as err:
            hermitian_eig(z + z.conj().T, max_sweeps=1, tol=1e-300)
        assert err.value.iterations == 1


class TestSchmidtChart:
    def test_zero_concurrence(self):
        assert np.allclose(state_from_schmidt(SchmidtParams(0.0)), KET00)

    def test_maximal(self):
        assert np.allclose(state_from_schmidt(SchmidtParams(1.0)), PHI_MINUS)

    def test_p_h_family(self):
        t = 0.7
        psi = state_from_schmidt(ControlTargets(0, 1, 1).schmidt(1 - np.exp(-t)))
        # frozen from an independent high-precision evaluation
        assert np.allclose(np.abs(psi), [0.352344044859356725, 0.613069061405114143,
                                         0.613069061405114143, 0.352344044859356725],
                           atol=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            state_from_schmidt(SchmidtParams(1.5))

    @given(st.floats(-1, 1), angles, angles, angles, angles, angles)
    @settings(max_examples=200, deadline=None)
    def test_concurrence_is_abs_c(self, C, th, dth, ph, g, dg):
        psi = state_from_schmidt(SchmidtParams(C, th, dth, ph, g, dg))
        assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)
        assert concurrence_pure(psi) == pytest.approx(abs(C), abs=1e-9)

    def test_controls_round_trip(self):
        tg = ControlTargets.from_angles(0.3, 1.1, 0.4)
        assert (tg.theta, tg.delta_theta, tg.phi) == pytest.approx((0.3, 1.1, 0.4))

    def test_control_domain(self):
        with pytest.raises(DomainError):
            ControlTargets(1.2, 0, 0)


class TestSchmidtExtract:
    def test_already_canonical(self):
        tg = ControlTargets(0.2, -0.4, 0.7, 0.3, -0.1)
        psi = state_from_schmidt(tg.schmidt(0.45))
        L = schmidt_extract(psi, tg)
        assert np.allclose(apply_lu(L, psi), psi, atol=1e-10)

    def test_recovers_known_flip(self):
        base = state_from_schmidt(SchmidtParams(0.5))
        L0 = LocalUnitary(qcore.I2, qcore.SX)
        psi = apply_lu(L0, base)
        L = schmidt_extract(psi, ControlTargets(1, 1, 1))
        assert np.allclose(apply_lu(L, psi), base, atol=1e-12)
        # u2 undoes the sigma_x up to a phase shared with u1
        prod = np.kron(L.u1, L.u2) @ np.kron(qcore.I2, qcore.SX)
        assert np.allclose(prod[0, 0] * np.eye(4)[[0, 3]][:, [0, 3]],
                           prod[np.ix_([0, 3], [0, 3])], atol=1e-12)

    def test_random_round_trip(self):
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(1000):
            psi = random_state(rng)
            tg = ControlTargets(*rng.uniform(-1, 1, 3), *rng.uniform(-np.pi, np.pi, 2))
            L = schmidt_extract(psi, tg)
            target = state_from_schmidt(tg.schmidt(concurrence_pure(psi)))
            worst = max(worst, np.abs(apply_lu(L, psi) - target).max())
        assert worst < 1e-8

    def test_lu_perturbation_round_trip(self):
        rng = np.random.default_rng(99)
        for _ in range(1000):
            tg = ControlTargets(*rng.uniform(-1, 1, 3), *rng.uniform(-np.pi, np.pi, 2))
            canon = state_from_schmidt(tg.schmidt(rng.uniform(0, 1)))
            psi = apply_lu(random_lu(rng), canon)
            out = apply_lu(schmidt_extract(psi, tg), psi)
            assert np.abs(out - canon).max() < 1e-8

    def test_degenerate_flagged(self):
        rng = np.random.default_rng(1)
        psi = apply_lu(random_lu(rng), PHI_MINUS)
        tg = ControlTargets(0, 1, 1)
        L = schmidt_extract(psi, tg)
        assert L.degenerate
        assert np.allclose(L.u1, np.eye(2))
        assert np.allclose(apply_lu(L, psi), state_from_schmidt(tg.schmidt(1.0)), atol=1e-10)


class TestLocalUnitary:
    def test_identity(self):
        rng = np.random.default_rng(0)
        psi = random_state(rng)
        assert np.allclose(apply_lu(LocalUnitary.identity(), psi), psi)

    def test_xx_flips(self):
        assert np.allclose(apply_lu(LocalUnitary(qcore.SX, qcore.SX), KET00), [0, 0, 0, 1])

    def test_matches_kron(self):
        rng = np.random.default_rng(4)
        L = random_lu(rng)
        psi = random_state(rng)
        assert np.allclose(apply_lu(L, psi), np.kron(L.u1, L.u2) @ psi)

    def test_rejects_non_unitary(self):
        with pytest.raises(DomainError):
            LocalUnitary(2 * qcore.I2, qcore.I2)

    def test_concurrence_invariance(self):
        rng = np.random.default_rng(77)
        for _ in range(1000):
            psi = random_state(rng)
            out = apply_lu(random_lu(rng), psi)
            assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)
            assert abs(concurrence_pure(out) - concurrence_pure(psi)) < 1e-10


class TestReducedStates:
    def test_bell_trace(self):
        assert np.allclose(partial_trace_q2(BELL_PLUS), np.eye(2) / 2)

    def test_product_trace(self):
        assert np.allclose(partial_trace_q2(KET00), [[1, 0], [0, 0]])

    def test_density_and_vector_agree(self):
        rng = np.random.default_rng(6)
        psi = random_state(rng)
        assert np.allclose(partial_trace_q2(psi), partial_trace_q2(qcore.projector(psi)))

    def test_p_f_family_x_polarisation(self):
        from bellfb.protocols import pf_family_state
        for t in (0.1, 0.5, 1.0, 2.5):
            rho1 = partial_trace_q2(pf_family_state(np.sqrt(1 - np.exp(-t))))
            sx = 2 * rho1[0, 1].real
            # the magnitude is fixed; the sign depends on the local frame
            assert abs(sx) == pytest.approx(np.exp(-t / 2), abs=1e-12)

    def test_entropy_limits(self):
        assert entanglement_entropy(KET00) == pytest.approx(0.0, abs=1e-12)
        assert entanglement_entropy(BELL_PLUS) == pytest.approx(1.0, abs=1e-12)

    def test_entropy_of_p_f_state(self):
        psi = state_from_schmidt(SchmidtParams(np.sqrt(1 - np.exp(-1.0))))
        # independent high-precision value of h2((1 + e^{-1/2})/2)
        assert entanglement_entropy(psi) == pytest.approx(0.715349166710721734, abs=1e-12)

    def test_entropy_increasing_in_c(self):
        Cs = np.linspace(0, 1, 100)
        e = [entanglement_entropy(state_from_schmidt(SchmidtParams(c))) for c in Cs]
        assert np.all(np.diff(e) > 0)


class TestFidelity:
    def test_product_state(self):
        _, fmax = fidelity_and_singlet_fraction(KET00, PHI_MINUS)
        assert fmax == pytest.approx(0.5)

    def test_matching_target(self):
        assert fidelity_and_singlet_fraction(PHI_MINUS, PHI_MINUS) == pytest.approx((1, 1))

    def test_threshold_value(self):
        psi = state_from_schmidt(SchmidtParams(1 / np.sqrt(2)))
        _, fmax = fidelity_and_singlet_fraction(psi, PHI_MINUS)
        assert fmax == pytest.approx(0.853553390593273762, abs=1e-12)

    def test_fmax_bounds_overlap(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            psi = random_state(rng)
            target = apply_lu(random_lu(rng), PHI_MINUS)
            f, fmax = fidelity_and_singlet_fraction(psi, target)
            assert f <= fmax + 1e-12

    def test_fmax_monotone(self):
        Cs = np.linspace(0, 1, 50)
        f = [fidelity_and_singlet_fraction(state_from_schmidt(SchmidtParams(c)), PHI_MINUS)[1]
             for c in Cs]
        assert np.allclose(f, (Cs + 1) / 2) and np.all(np.diff(f) > 0)

    def test_non_maximal_target_rejected(self):
        with pytest.raises(DomainError):
            fidelity_and_singlet_fraction(KET00, KET00)


class TestPauliActions:
    @pytest.mark.parametrize("label", ["x", "y", "z"])
    @pytest.mark.parametrize("qubit", [1, 2])
    def test_matches_kron(self, label, qubit):
        op = {"x": qcore.SX, "y": qcore.SY, "z": qcore.SZ}[label]
        full = np.kron(op, qcore.I2) if qubit == 1 else np.kron(qcore.I2, op)
        rng = np.random.default_rng(0)
        psi = random_state(rng)
        rho = qcore.projector(psi)
        assert np.allclose(qcore.pauli_apply(label, qubit, psi), full @ psi)
        assert np.allclose(qcore.pauli_apply(label, qubit, rho, axis=-2), full @ rho)

    def test_rotation(self):
        rng = np.random.default_rng(1)
        psi = random_state(rng)
        th = 0.37
        u = np.kron(np.cos(th / 2) * qcore.I2 - 1j * np.sin(th / 2) * qcore.SX, qcore.I2)
        assert np.allclose(qcore.rotate_x1(th, psi), u @ psi)
        rho = qcore.projector(psi)
        assert np.allclose(qcore.rotate_x1(th, rho, density=True), u @ rho @ u.conj().T)
