import numpy as np
import pytest

from stableflow import ode
from stableflow.errors import InvalidInputError, NumericOverflowError


def linear_decay(dim=1):
    return ode.VectorField(dim, lambda t, x: -x)


class TestEulerStep:
    def test_linear_decay_half_step(self):
        out = ode.euler_step(linear_decay(), 0.0, np.array([1.0]), 0.5)
        assert out[0] == 0.5

    def test_oscillator_single_step(self):
        out = ode.euler_step(ode.harmonic_oscillator(), 0.0, np.array([1.0, 0.0]), 0.1)
        assert np.array_equal(out, [1.0, -0.1])

    @pytest.mark.parametrize("h", [0.1, 0.3, 0.5])
    def test_exact_energy_growth_law(self, h):
        traj = ode.integrate(ode.harmonic_oscillator(), [1.0, 0.0], 0.0, h, 200)
        energies = ode.harmonic_energy(traj.states)
        law = 0.5 * (1.0 + h * h) ** np.arange(201)
        assert np.max(np.abs(energies / law - 1.0)) <= 1e-12

    def test_nonpositive_step_rejected(self):
        with pytest.raises(InvalidInputError):
            ode.euler_step(linear_decay(), 0.0, np.array([1.0]), 0.0)


class TestSymplecticEuler:
    def test_oscillator_single_step(self):
        q, p = ode.symplectic_euler_step(lambda p: p, lambda q: q,
                                         np.array([1.0]), np.array([0.0]), 0.5)
        assert q[0] == 1.0 and p[0] == -0.5

    @pytest.mark.parametrize("h", [0.5, 1.0, 1.5])
    def test_energy_stays_in_invariant_band(self, h):
        # the update exactly conserves Q = x^2 + p^2 + h x p, and
        # |xp| <= (x^2+p^2)/2 traps the energy in [Q0/(2+h), Q0/(2-h)]
        traj = ode.integrate(ode.harmonic_oscillator(), [1.0, 0.0], 0.0, h, 1000,
                             method="symplectic")
        x, p = traj.states[:, 0], traj.states[:, 1]
        q_form = x * x + p * p + h * x * p
        assert np.max(np.abs(q_form - q_form[0])) <= 1e-9
        energies = ode.harmonic_energy(traj.states)
        assert np.all(energies >= 1.0 / (2.0 + h) - 1e-9)
        assert np.all(energies <= 1.0 / (2.0 - h) + 1e-9)

    def test_unstable_step_size_blows_up(self):
        # update-matrix eigenvalues for h=2.5 are -1/4 and -4, so the energy
        # grows without bound; 200 steps is already astronomically large
        traj = ode.integrate(ode.harmonic_oscillator(), [1.0, 0.0], 0.0, 2.5, 200,
                             method="symplectic")
        assert ode.harmonic_energy(traj.states[-1]) > 1e100

    def test_unstable_step_size_overflows_with_step_index(self):
        with np.errstate(over="ignore"), pytest.raises(NumericOverflowError) as err:
            ode.integrate(ode.harmonic_oscillator(), [1.0, 0.0], 0.0, 2.5, 10000,
                          method="symplectic")
        assert err.value.step_index is not None

    def test_quadratic_hamiltonian_update_has_unit_determinant(self, rng):
        for _ in range(5):
            m = rng.standard_normal((3, 3))
            m = m @ m.T + np.eye(3)
            n = rng.standard_normal((3, 3))
            n = n @ n.T
            h = rng.uniform(0.1, 1.9)
            jac = np.zeros((6, 6))
            base_q, base_p = np.zeros(3), np.zeros(3)
            f0 = np.concatenate(ode.symplectic_euler_step(
                lambda p: m @ p, lambda q: n @ q, base_q, base_p, h))
            for j in range(6):
                e = np.zeros(6)
                e[j] = 1.0  # linear update, exact directional difference
                fq, fp = ode.symplectic_euler_step(
                    lambda p: m @ p, lambda q: n @ q, e[:3], e[3:], h)
                jac[:, j] = np.concatenate([fq, fp]) - f0
            assert abs(np.linalg.det(jac) - 1.0) <= 1e-12


class TestExactLinearFlow:
    def test_diagonal_decay(self):
        out = ode.exact_linear_flow(-np.eye(2), np.array([1.0, 1.0]), 1.0)
        assert np.max(np.abs(out - np.exp(-1.0))) <= 1e-12

    def test_quarter_turn_rotation(self):
        a = np.array([[0.0, 1.0], [-1.0, 0.0]])
        out = ode.exact_linear_flow(a, np.array([1.0, 0.0]), np.pi / 2)
        assert np.max(np.abs(out - np.array([0.0, -1.0]))) <= 1e-10

    def test_time_zero_is_identity(self, rng):
        x0 = rng.standard_normal(4)
        out = ode.exact_linear_flow(rng.standard_normal((4, 4)), x0, 0.0)
        assert np.array_equal(out, x0)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            ode.exact_linear_flow(np.eye(3), np.ones(2), 1.0)


class TestIntegrate:
    def test_trajectory_length_and_times(self):
        traj = ode.integrate(linear_decay(2), [1.0, 2.0], 0.5, 0.1, 7)
        assert traj.states.shape == (8, 2)
        assert np.allclose(traj.times, 0.5 + 0.1 * np.arange(8))

    def test_symplectic_requires_declared_split(self):
        with pytest.raises(InvalidInputError):
            ode.integrate(linear_decay(2), [1.0, 1.0], 0.0, 0.1, 5,
                          method="symplectic")

    def test_euler_global_order_one(self):
        # halving h should roughly halve the max error against the true flow
        field = ode.harmonic_oscillator()
        errors = []
        for h in (0.1, 0.05, 0.025):
            n = round(1.0 / h)
            traj = ode.integrate(field, [1.0, 0.0], 0.0, h, n)
            exact = np.stack([np.cos(traj.times), -np.sin(traj.times)], axis=1)
            errors.append(np.max(np.linalg.norm(traj.states - exact, axis=1)))
        for coarse, fine in zip(errors, errors[1:]):
            assert 1.8 <= coarse / fine <= 2.2

    def test_csv_export(self, tmp_path):
        traj = ode.integrate(ode.harmonic_oscillator(), [1.0, 0.0], 0.0, 0.5, 2)
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "t,x1,x2"
        assert len(lines) == 4

    def test_times_must_increase(self):
        with pytest.raises(InvalidInputError):
            ode.Trajectory(times=np.array([0.0, 0.0]), states=np.zeros((2, 1)))
