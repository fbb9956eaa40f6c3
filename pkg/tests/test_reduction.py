import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import RADON7, _triangle
from romforge.core import H1, L2, Field, build_cavity_mesh, build_channel_mesh, inner_product
from romforge.errors import DegenerateSnapshots, DegenerateSpectrum, EmptySnapshots, InvalidConfig
from romforge.fom_fe import FEDiscretization
from romforge.fom_fv import FVOperators
from romforge.pipeline import config_from_text, offline_run
from romforge.reduction import PRESSURE, cumulative_energy, gram_schmidt, pod, supremizer_fe, supremizer_fv


def scalar_fields(mesh, cols):
    return [Field(mesh, c) for c in cols.T]


class TestPOD:
    def test_two_orthonormal_snapshots(self):
        m = build_channel_mesh(4, 3)
        W = inner_product(m, L2, 1).weight.diagonal()
        a = np.zeros(12)
        b = np.zeros(12)
        a[0], b[5] = 1 / np.sqrt(W[0]), 1 / np.sqrt(W[5])
        basis = pod(scalar_fields(m, np.column_stack([a, b])), family=PRESSURE)
        np.testing.assert_allclose(basis.eigenvalues, [1.0, 1.0], atol=1e-14)
        assert cumulative_energy(basis.eigenvalues)[0] == pytest.approx(0.5)

    def test_single_snapshot(self, rng):
        m = build_channel_mesh(4, 3)
        s = rng.normal(size=12)
        ip = inner_product(m, L2, 1)
        b = pod([Field(m, s)], ip, family=PRESSURE)
        nrm = np.sqrt(s @ ip.weight @ s)
        assert b.eigenvalues[0] == pytest.approx(nrm**2, rel=1e-13)
        assert np.allclose(np.abs(b.modes[:, 0]), np.abs(s / nrm), atol=1e-13)

    @pytest.mark.parametrize("kind", [L2, H1])
    def test_weighted_svd_oracle(self, kind, rng):
        m = build_channel_mesh(4, 3)  # 12 cells
        ip = inner_product(m, kind, 1)
        S = rng.normal(size=(12, 5))
        b = pod(scalar_fields(m, S), ip, family=PRESSURE)
        R = np.linalg.cholesky(ip.weight.toarray()).T  # W = R^T R
        U, sig, _ = np.linalg.svd(R @ S, full_matrices=False)
        np.testing.assert_allclose(b.eigenvalues, sig**2, rtol=1e-10)
        ref = np.linalg.solve(R, U)
        for k in range(5):
            sgn = np.sign(ref[:, k] @ b.modes[:, k])
            np.testing.assert_allclose(b.modes[:, k], sgn * ref[:, k], atol=1e-10)

    def test_orthonormal_and_sorted(self, rng):
        m = build_cavity_mesh(4)
        ip = inner_product(m, L2, 2)
        snaps = [Field(m, rng.normal(size=(m.n_nodes, 2))) for _ in range(6)]
        b = pod(snaps, ip)
        np.testing.assert_allclose(b.gram(ip), np.eye(b.count), atol=1e-10)
        assert np.all(np.diff(b.eigenvalues) <= 0) and np.all(b.eigenvalues >= 0)

    def test_energy_threshold(self, rng):
        m = build_channel_mesh(4, 3)
        S = rng.normal(size=(12, 6)) * np.array([10, 5, 1, 0.1, 0.01, 0.001])
        b = pod(scalar_fields(m, S), energy=0.99, family=PRESSURE)
        cum = cumulative_energy(pod(scalar_fields(m, S), family=PRESSURE).eigenvalues)
        assert cum[b.count - 1] >= 0.99 and (b.count == 1 or cum[b.count - 2] < 0.99)

    def test_errors(self, rng):
        m = build_channel_mesh(4, 3)
        with pytest.raises(EmptySnapshots):
            pod([])
        with pytest.raises(DegenerateSnapshots):
            pod([Field(m, np.zeros(12))], family=PRESSURE)
        with pytest.raises(InvalidConfig):
            pod([Field(m, rng.normal(size=12))], n=2, family=PRESSURE)


class TestCumulativeEnergy:
    def test_examples(self):
        np.testing.assert_allclose(cumulative_energy([4, 4]), [0.5, 1.0])
        np.testing.assert_allclose(cumulative_energy([1]), [1.0])

    def test_reference_table_shape(self):
        col = [0.971992, 0.993017, 0.997589, 0.999196, 0.999545, 0.999828, 0.999914, 0.999952, 0.999978, 0.999986]
        assert np.all(np.diff(col) >= 0) and max(col) <= 1

    def test_rejects(self):
        with pytest.raises(DegenerateSpectrum):
            cumulative_energy([0.0, 0.0])
        with pytest.raises(DegenerateSpectrum):
            cumulative_energy([1.0, -0.5])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=30).filter(lambda v: sum(v) > 0))
    def test_monotone_to_one(self, lam):
        c = cumulative_energy(sorted(lam, reverse=True))
        assert np.all(np.diff(c) >= 0) and c[-1] == 1.0 and np.all(c <= 1.0)


class TestGramSchmidt:
    def test_orthonormal_input_unchanged(self, rng):
        m = build_cavity_mesh(4)
        ip = inner_product(m, L2, 2)
        Q = pod([Field(m, rng.normal(size=(m.n_nodes, 2))) for _ in range(4)], ip).modes
        out = gram_schmidt(Q, ip)
        np.testing.assert_allclose(out.vectors, Q, atol=1e-12)

    def test_dependent_pair(self, rng):
        m = build_channel_mesh(4, 3)
        ip = inner_product(m, L2, 1)
        v = rng.normal(size=12)
        out = gram_schmidt(np.column_stack([v, 2 * v]), ip)
        assert out.vectors.shape[1] == 1 and out.dropped == [1]

    def test_random_six(self, rng):
        m = build_cavity_mesh(4)
        ip = inner_product(m, H1, 2)
        out = gram_schmidt(rng.normal(size=(2 * m.n_nodes, 6)), ip)
        np.testing.assert_allclose(ip.gram(out.vectors), np.eye(6), atol=1e-10)

    def test_against(self, rng):
        m = build_cavity_mesh(4)
        ip = inner_product(m, L2, 2)
        A = gram_schmidt(rng.normal(size=(2 * m.n_nodes, 3)), ip).vectors
        B = gram_schmidt(rng.normal(size=(2 * m.n_nodes, 3)), ip, against=A).vectors
        np.testing.assert_allclose(ip.gram(A, B), 0, atol=1e-12)


def supremizer_oracle(mesh, q):
    """Dense (M + K) s = -(q, div v) over interior nodes, assembled by 7-point quadrature."""
    n = mesh.n_nodes
    W = np.zeros((2 * n, 2 * n))
    rhs = np.zeros(2 * n)
    for tri in mesh.cells:
        area, grads, _ = _triangle(mesh.nodes, tri)
        for lam, w in RADON7:
            lam = np.array(lam)
            wt = w * area
            qv = lam @ q[tri]
            for ia, a in enumerate(tri):
                for c in range(2):
                    rhs[c * n + a] += -wt * qv * grads[ia, c]
                    for ib, b in enumerate(tri):
                        W[c * n + a, c * n + b] += wt * (lam[ia] * lam[ib] + grads[ia] @ grads[ib])
    boundary = np.unique(mesh.bfacets)
    free = np.setdiff1d(np.arange(2 * n), np.concatenate([boundary, boundary + n]))
    s = np.zeros(2 * n)
    s[free] = np.linalg.solve(W[np.ix_(free, free)], rhs[free])
    return s


class TestSupremizer:
    def test_fe_dense_oracle(self, rng):
        # a 2-triangle patch has no interior velocity DOFs, so a 3x3 cavity is used
        mesh = build_cavity_mesh(3)
        disc = FEDiscretization(mesh)
        q = rng.normal(size=mesh.n_nodes)
        s = supremizer_fe(disc, q[:, None], H1)[:, 0]
        np.testing.assert_allclose(s, supremizer_oracle(mesh, q), atol=1e-10)

    def test_zero_and_linearity(self, rng):
        disc = FEDiscretization(build_cavity_mesh(5))
        q = rng.normal(size=(disc.n, 1))
        assert np.all(supremizer_fe(disc, np.zeros((disc.n, 1))) == 0)
        np.testing.assert_allclose(supremizer_fe(disc, 3.5 * q), 3.5 * supremizer_fe(disc, q), rtol=1e-12, atol=1e-14)
        ops = FVOperators(build_channel_mesh(5, 4))
        qf = rng.normal(size=(ops.n, 1))
        assert np.all(supremizer_fv(ops, np.zeros((ops.n, 1))) == 0)
        np.testing.assert_allclose(supremizer_fv(ops, -2 * qf), -2 * supremizer_fv(ops, qf), rtol=1e-12, atol=1e-14)


def _greedy_errors(bundle):
    with open(bundle / "greedy.csv") as fh:
        return [float(r["max_training_error"]) for r in csv.DictReader(fh)]


class TestGreedy:
    def test_single_sample(self, tmp_path):
        cfg = config_from_text("study.branch = cavity-fe\nsampling = 1\nfe.mesh_n = 6\nfe.picard_tol = 1e-12\n")
        errs = _greedy_errors(offline_run(cfg, tmp_path / "b"))
        assert len(errs) == 1 and errs[0] < 1e-8

    def test_full_training_set(self, tmp_path):
        cfg = config_from_text("study.branch = cavity-fe\nsampling = 4\nrb.n_max = 4\nfe.mesh_n = 6\n"
                               "fe.picard_tol = 1e-12\nrb.tol = 0\n")
        errs = _greedy_errors(offline_run(cfg, tmp_path / "b"))
        assert len(errs) == 4 and errs[-1] < 1e-8

    def test_five_samples_non_increasing(self, tmp_path):
        cfg = config_from_text("study.branch = cavity-fe\nsampling = 5\nrb.n_max = 5\nfe.mesh_n = 8\n"
                               "fe.picard_tol = 1e-12\nrb.tol = 0\n")
        errs = _greedy_errors(offline_run(cfg, tmp_path / "b"))
        assert np.all(np.diff(errs) <= 0), errs
