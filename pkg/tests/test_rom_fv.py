import numpy as np
import pytest

from oracles import FVOracle
from romforge.core import Field, build_backstep_mesh, build_channel_mesh
from romforge.errors import DimensionMismatch
from romforge.fom_fv import FVConfig, FVOperators
from romforge.pipeline import Bundle
from romforge.reduction import ReducedBasis
from romforge.rom_fv import assemble_reduced, solve_rom_plain, solve_rom_rbf


def random_families(mesh, rng, n_phi=3, n_sup=2, n_p=2, n_nut=2):
    n = mesh.n_cells
    L = [Field(mesh, rng.normal(size=(n, 2)), np.array([1.0, 0.0])),
         Field(mesh, rng.normal(size=(n, 2)), np.array([0.0, 1.0]))]
    V = ReducedBasis("velocity", mesh, 2, rng.normal(size=(2 * n, n_phi)))
    S = ReducedBasis("supremizer", mesh, 2, rng.normal(size=(2 * n, n_sup)))
    Q = ReducedBasis("pressure", mesh, 1, rng.normal(size=(n, n_p)))
    E = ReducedBasis("eddy-viscosity", mesh, 1, rng.random(size=(n, n_nut)))
    return L, V, Q, S, E


@pytest.mark.parametrize("make", [lambda: build_channel_mesh(3, 3), lambda: build_backstep_mesh(resolution=4)])
def test_reduced_tensors_match_cell_sums(make, rng):
    m = make()
    ops = FVOperators(m, FVConfig().resolved_tau(m))
    L, V, Q, S, E = random_families(m, rng)
    R = assemble_reduced(ops, L, V, Q, S, E, 0.02)
    n = m.n_cells
    as_cells = lambda col: col.reshape(2, n).T  # noqa: E731
    trial = [(f.values, f.bc) for f in L]
    trial += [(as_cells(B.modes[:, k]), np.zeros(2)) for B in (V, S) for k in range(B.count)]
    ref = FVOracle(m).reduced(trial, [t[0] for t in trial[2:]], list(Q.modes.T), list(E.modes.T))
    for name, want in ref.items():
        got = getattr(R, name)
        assert np.max(np.abs(got - want)) <= 1e-10 * max(1.0, np.max(np.abs(want))), name


def test_zero_viscosity_modes(rng):
    m = build_channel_mesh(4, 3)
    L, V, Q, S, _ = random_families(m, rng)
    zero = ReducedBasis("eddy-viscosity", m, 1, np.zeros((m.n_cells, 2)))
    R = assemble_reduced(FVOperators(m), L, V, Q, S, zero, 0.02)
    assert np.all(R.CT1 == 0) and np.all(R.CT2 == 0)
    R = assemble_reduced(FVOperators(m), L, V, Q, S, None, 0.02)
    assert R.CT1.shape[1] == 0 and R.n_nut == 0


@pytest.fixture(scope="module")
def reduced(fv_bundle):
    return Bundle(fv_bundle).operators


MU = (0.25, 12.0)


class TestResiduals:
    def test_plain_jacobian_fd(self, reduced, rng):
        y = 0.1 * rng.normal(size=reduced.n_u + reduced.n_p)
        J = reduced.jacobian_plain(y, MU)
        h = 1e-6
        fd = np.column_stack([(reduced.residual_plain(y + h * e, MU) - reduced.residual_plain(y - h * e, MU)) / (2 * h)
                              for e in np.eye(y.size)])
        np.testing.assert_allclose(J, fd, rtol=1e-5, atol=1e-8)

    def test_rbf_jacobian_fd(self, reduced, rng):
        y = 0.1 * rng.normal(size=reduced.n_u + reduced.n_p)
        g = rng.random(reduced.n_nut) * 1e-3
        J = reduced.jacobian_rbf(y, MU, g)
        h = 1e-6
        fd = np.column_stack([(reduced.residual_rbf(y + h * e, MU, g) - reduced.residual_rbf(y - h * e, MU, g)) / (2 * h)
                              for e in np.eye(y.size)])
        np.testing.assert_allclose(J, fd, rtol=1e-5, atol=1e-8)

    def test_zero_closure_without_bt_is_plain(self, reduced, rng):
        y = rng.normal(size=reduced.n_u + reduced.n_p)
        g = np.zeros(reduced.n_nut)
        np.testing.assert_allclose(reduced.residual_rbf(y, MU, g, include_bt=False), reduced.residual_plain(y, MU),
                                   rtol=1e-13, atol=1e-15)

    def test_closure_linear_in_g(self, reduced, rng):
        y = rng.normal(size=reduced.n_u + reduced.n_p)
        g1, g2 = rng.random(reduced.n_nut), rng.random(reduced.n_nut)
        base = reduced.residual_rbf(y, MU, np.zeros(reduced.n_nut))
        d = lambda g: reduced.residual_rbf(y, MU, g) - base  # noqa: E731
        np.testing.assert_allclose(d(g1 + 2 * g2), d(g1) + 2 * d(g2), rtol=1e-10, atol=1e-13)

    def test_wrong_g_length(self, reduced):
        with pytest.raises(DimensionMismatch):
            reduced.residual_rbf(np.zeros(reduced.n_u + reduced.n_p), MU, np.zeros(reduced.n_nut + 1))

    def test_training_snapshots_satisfy_rans_system(self, reduced):
        # every training snapshot lies in the span of the stored modes here (4 snapshots, capped modes)
        for mu, y, g in zip(reduced.train_mu, reduced.train_coeffs, reduced.train_g):
            x = np.concatenate([[0.0, 0.0], y[: reduced.n_u]])
            scale = np.abs(reduced.nu * (reduced.B @ x)).max()
            assert np.abs(reduced.residual_rbf(y, mu, g)).max() <= 1e-8 * scale


class TestSolve:
    def test_no_convection_one_iteration(self, reduced):
        lin = reduced.without_convection()
        sol = solve_rom_plain(lin, MU, init=np.zeros(lin.n_u + lin.n_p), continuation=False)
        assert sol.iterations == 1

    def test_no_convection_linear_in_inlet(self, reduced):
        lin = reduced.without_convection()
        a = solve_rom_plain(lin, (0.15, 20.0), continuation=False)
        b = solve_rom_plain(lin, (0.30, 20.0), continuation=False)
        np.testing.assert_allclose(b.a, 2 * a.a, rtol=1e-9, atol=1e-12)
        np.testing.assert_allclose(b.b, 2 * a.b, rtol=1e-9, atol=1e-12)

    def test_zero_closure_matches_plain_solve(self, reduced):
        lin = reduced.without_convection()
        p = solve_rom_plain(lin, MU, continuation=False)
        r = solve_rom_rbf(lin, MU, np.zeros(lin.n_nut), include_bt=False, continuation=False)
        np.testing.assert_allclose(r.a, p.a, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(r.b, p.b, rtol=1e-12, atol=1e-14)

    def test_rbf_training_sample(self, reduced):
        mu, g = reduced.train_mu[0], reduced.train_g[0]
        sol = solve_rom_rbf(reduced, mu, g)
        assert np.abs(reduced.residual_rbf(np.concatenate([sol.a, sol.b]), mu, g)).max() <= 1e-10

    def test_select_subsets(self, reduced):
        sub = reduced.select(1, 1, 1, 1)
        assert (sub.n_u, sub.n_p, sub.n_nut) == (2, 1, 1)
        with pytest.raises(DimensionMismatch):
            reduced.select(reduced.n_phi + 1, 0, 1, 0)
