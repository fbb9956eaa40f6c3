"""Acceptance criteria 1-8.

Each test prints a single ``criterion k: PASS|FAIL`` line with the measured
quantities and the runtime, then asserts. Studies are desk scale.
"""

import json
import math
import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import two_triangle_mesh
from oracles import FVOracle, fe_reduced
from romforge import binio
from romforge.cli import main as cli
from romforge.core import (
    H1,
    L2,
    Field,
    build_backstep_mesh,
    build_cavity_mesh,
    build_channel_mesh,
    inlet_vector,
    inner_product,
)
from romforge.core.field import relative_l2_error
from romforge.fom_fe import FEDiscretization, StabilizationConfig, lifting_fe
from romforge.fom_fv import FVConfig, FVOperators
from romforge.pipeline import Bundle, config_from_text, offline_run, online_run, plan_from_text, validate
from romforge.pipeline import bundle as bd
from romforge.pipeline.study import FOMRunner
from romforge.rbf import rbf_eval, rbf_fit
from romforge.reduction import PRESSURE, ReducedBasis, gram_schmidt, pod
from romforge.rom_fe import RBOptions, project_fe, solve_rb_fe
from romforge.rom_fv import assemble_reduced, solve_rom_plain, solve_rom_rbf



def verdict(capsys, k, ok, detail, seconds, limit):
    within = seconds < limit
    line = (f"criterion {k}: {'PASS' if ok and within else 'FAIL'} | {detail} | "
            f"runtime {seconds:.1f}s (limit {limit:.0f}s)")
    with capsys.disabled():
        print("\n" + line)
    assert ok and within, line


# ---- 1 -------------------------------------------------------------------------------

def _w_orthonormal(ip, cols):
    return gram_schmidt(cols, ip).vectors


def _objective(S, Phi, W):
    """Sum of squared W-norm projection residuals of the columns of S onto span(Phi)."""
    R = S - Phi @ (Phi.T @ (W @ S))
    return float(np.einsum("ij,ij->", R, W @ R))


def test_criterion_1_pod_optimality(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_slack, worst_bookkeeping, trials = np.inf, 0.0, 0
    setups = [(build_channel_mesh(4, 3), L2, 1), (build_cavity_mesh(4), H1, 2), (build_cavity_mesh(3), L2, 1)]
    for mesh, kind, arity in setups:
        ip = inner_product(mesh, kind, arity)
        W = ip.weight
        dim = W.shape[0]
        for _ in range(4):
            S = rng.normal(size=(dim, 5)) * rng.uniform(0.1, 10, size=5)
            fields = [Field.from_flat(mesh, c, arity) for c in S.T]
            full = pod(fields, ip, family=PRESSURE if arity == 1 else "velocity")
            for r in range(1, 5):
                Phi = full.modes[:, :r]
                e_pod = _objective(S, Phi, W)
                discarded = float(np.sum(full.eigenvalues[r:]))
                worst_bookkeeping = max(worst_bookkeeping, abs(e_pod - discarded) / max(discarded, 1e-300))
                for _ in range(100):
                    e_rand = _objective(S, _w_orthonormal(ip, rng.normal(size=(dim, r))), W)
                    worst_slack = min(worst_slack, e_rand - e_pod)
                    trials += 1
    ok = worst_slack >= -1e-10 and worst_bookkeeping <= 1e-8
    verdict(capsys, 1, ok, f"{trials} random subspaces, min(random - POD) = {worst_slack:.3e} (>= -1e-10), "
            f"max rel |discarded - error| = {worst_bookkeeping:.2e} (<= 1e-8)", time.perf_counter() - t0, 5)


# ---- 2 -------------------------------------------------------------------------------

def test_criterion_2_operator_oracles(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    dev = {}
    # finite volume, 3 x 3 cells
    m = build_channel_mesh(3, 3)
    ops = FVOperators(m, FVConfig().resolved_tau(m))
    n = m.n_cells
    L = [Field(m, rng.normal(size=(n, 2)), np.array([1.0, 0.0])), Field(m, rng.normal(size=(n, 2)), np.array([0.0, 1.0]))]
    V = ReducedBasis("velocity", m, 2, rng.normal(size=(2 * n, 3)))
    Sb = ReducedBasis("supremizer", m, 2, rng.normal(size=(2 * n, 2)))
    Q = ReducedBasis("pressure", m, 1, rng.normal(size=(n, 2)))
    E = ReducedBasis("eddy-viscosity", m, 1, rng.random(size=(n, 2)))
    R = assemble_reduced(ops, L, V, Q, Sb, E, 0.02)
    trial = [(f.values, f.bc) for f in L]
    trial += [(B.modes[:, k].reshape(2, n).T, np.zeros(2)) for B in (V, Sb) for k in range(B.count)]
    ref = FVOracle(m).reduced(trial, [t[0] for t in trial[2:]], list(Q.modes.T), list(E.modes.T))
    for name, want in ref.items():
        dev[f"FV.{name}"] = float(np.max(np.abs(getattr(R, name) - want)))
    # finite element, 2 triangles
    mesh = two_triangle_mesh()
    nn = mesh.n_nodes
    Vm = gram_schmidt(rng.normal(size=(2 * nn, 3)), inner_product(mesh, L2, 2)).vectors
    Qm = gram_schmidt(rng.normal(size=(nn, 2)), inner_product(mesh, L2, 1)).vectors
    lift = Field(mesh, rng.normal(size=(nn, 2)))
    sys_ = project_fe(FEDiscretization(mesh), ReducedBasis("velocity", mesh, 2, Vm), ReducedBasis(PRESSURE, mesh, 1, Qm),
                      lift, RBOptions(), StabilizationConfig(delta=0.7))
    phis = [Vm[:, k].reshape(2, nn).T for k in range(3)]
    for name, want in fe_reduced(mesh, phis, [lift.values] + phis, list(Qm.T), 0.7).items():
        dev[f"FE.{name}"] = float(np.max(np.abs(getattr(sys_, name) - want)))
    worst = max(dev, key=dev.get)
    verdict(capsys, 2, dev[worst] <= 1e-10, f"{len(dev)} tensors, worst entry deviation {dev[worst]:.2e} ({worst}) "
            "<= 1e-10", time.perf_counter() - t0, 10)


# ---- 3 -------------------------------------------------------------------------------

def test_criterion_3_rbf_contract(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst_exact, worst_perm = 0.0, 0.0
    for _ in range(50):
        k = int(rng.integers(4, 16))
        X = rng.random((k, 2))
        Y = rng.normal(size=(3, k))
        model = rbf_fit(X, Y, ridge=0.0)
        for j in range(k):
            worst_exact = max(worst_exact, float(np.max(np.abs(rbf_eval(model, X[j], normalized=True) - Y[:, j]))))
        perm = rng.permutation(k)
        other = rbf_fit(X[perm], Y[:, perm], ridge=0.0)
        for q in rng.random((5, 2)):
            worst_perm = max(worst_perm, float(np.max(np.abs(rbf_eval(model, q, normalized=True)
                                                               - rbf_eval(other, q, normalized=True)))))
    ok = worst_exact <= 1e-8 and worst_perm <= 1e-12
    verdict(capsys, 3, ok, f"50 problems, max center residual {worst_exact:.2e} (<= 1e-8), "
            f"max permutation difference {worst_perm:.2e} (<= 1e-12)", time.perf_counter() - t0, 5)


# ---- 4 -------------------------------------------------------------------------------

def _fd_rel(res, jac, y, h=1e-6):
    J = jac(y)
    fd = np.column_stack([(res(y + h * e) - res(y - h * e)) / (2 * h) for e in np.eye(y.size)])
    return float(np.max(np.abs(J - fd)) / np.max(np.abs(J)))


def test_criterion_4_jacobians(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    mesh = build_cavity_mesh(4)
    nn = mesh.n_nodes
    Vm = gram_schmidt(rng.normal(size=(2 * nn, 4)), inner_product(mesh, L2, 2)).vectors
    Qm = gram_schmidt(rng.normal(size=(nn, 3)), inner_product(mesh, L2, 1)).vectors
    fe = project_fe(FEDiscretization(mesh), ReducedBasis("velocity", mesh, 2, Vm), ReducedBasis(PRESSURE, mesh, 1, Qm),
                    lifting_fe(mesh))
    m = build_backstep_mesh(resolution=4)
    n = m.n_cells
    L = [Field(m, rng.normal(size=(n, 2)), np.array([1.0, 0.0])), Field(m, rng.normal(size=(n, 2)), np.array([0.0, 1.0]))]
    fv = assemble_reduced(FVOperators(m, FVConfig().resolved_tau(m)), L,
                          ReducedBasis("velocity", m, 2, rng.normal(size=(2 * n, 4))),
                          ReducedBasis(PRESSURE, m, 1, rng.normal(size=(n, 3))),
                          ReducedBasis("supremizer", m, 2, rng.normal(size=(2 * n, 2))),
                          ReducedBasis("eddy-viscosity", m, 1, rng.random(size=(n, 3))), 0.02)
    worst = {"FE": 0.0, "FV plain": 0.0, "FV rbf": 0.0}
    for _ in range(20):
        mu_fe = float(rng.uniform(100, 500))
        y = rng.normal(size=fe.n_u + fe.n_p)
        worst["FE"] = max(worst["FE"], _fd_rel(lambda v: fe.residual(v, mu_fe), lambda v: fe.jacobian(v, mu_fe), y))
        mu = (float(rng.uniform(0.18, 0.3)), float(rng.uniform(0, 30)))
        g = rng.random(fv.n_nut) * 1e-2
        y = rng.normal(size=fv.n_u + fv.n_p)
        worst["FV plain"] = max(worst["FV plain"], _fd_rel(lambda v: fv.residual_plain(v, mu),
                                                           lambda v: fv.jacobian_plain(v, mu), y))
        worst["FV rbf"] = max(worst["FV rbf"], _fd_rel(lambda v: fv.residual_rbf(v, mu, g),
                                                       lambda v: fv.jacobian_rbf(v, mu, g), y))
    lin = fv.without_convection()
    z = np.zeros(fv.n_u + fv.n_p)
    iters = {
        "FE": solve_rb_fe(fe.stokes_limit(), 300.0, initial=np.zeros(fe.n_u + fe.n_p)).iterations,
        "FV plain": solve_rom_plain(lin, (0.24, 10.0), init=z, continuation=False).iterations,
        "FV rbf": solve_rom_rbf(lin, (0.24, 10.0), rng.random(fv.n_nut), init=z, continuation=False).iterations,
    }
    ok = max(worst.values()) <= 1e-6 and all(v == 1 for v in iters.values())
    detail = ", ".join(f"{k} FD rel {v:.1e}" for k, v in worst.items()) + f" (<= 1e-6); Stokes-limit iterations {iters}"
    verdict(capsys, 4, ok, detail, time.perf_counter() - t0, 10)


# ---- 5 -------------------------------------------------------------------------------

def _projection_error(field: Field, offset: Field | None, modes: np.ndarray, ip) -> float:
    """Relative error of the best W-projection of ``field`` onto offset + span(modes)."""
    target = field.flat() - (offset.flat() if offset is not None else 0.0)
    W = ip.weight
    G = modes.T @ (W @ modes)
    c = np.linalg.solve(G, modes.T @ (W @ target))
    approx = modes @ c + (offset.flat() if offset is not None else 0.0)
    approx_field = Field.from_flat(field.mesh, approx, field.arity)
    if field.bc is not None:
        approx_field.bc = field.bc
    return relative_l2_error(approx_field, field, ip)


def _consistency(bundle: Bundle, variant: str) -> list[tuple[float, float, float, float]]:
    cfg = bundle.config
    runner = FOMRunner(cfg)
    mesh = bundle.mesh
    ipu, ipp = inner_product(mesh, L2, 2), inner_product(mesh, L2, 1)
    out = []
    for s in cfg.samples():
        truth = runner.solve(s.mu)[0]
        res = online_run(bundle, s.mu, variant, truth=True, record=False, fom=lambda _m: truth)
        if cfg.branch == bd.CAVITY:
            vb = bundle.basis("velocity+sup" if variant.endswith("+sup") else "velocity")
            off = bundle.snapshots.liftings[0]
            U = vb.modes
        else:
            L = bundle.snapshots.liftings
            gv = inlet_vector(s.mu)
            off = L[0] * gv[0] + L[1] * gv[1]
            off.bc = gv
            U = np.hstack([bundle.basis("velocity").modes, bundle.basis("supremizer").modes])
        pu = _projection_error(truth.u, off, U, ipu)
        pp = _projection_error(truth.p, None, bundle.basis("pressure").modes, ipp)
        out.append((res.row["err_u"], pu, res.row["err_p"], pp))
    return out


def test_criterion_5_training_consistency(capsys, tmp_path):
    t0 = time.perf_counter()
    studies = {
        "FE": ("study.branch = cavity-fe\nsampling = 5\nrb.n_max = 5\nrb.tol = 0\nfe.mesh_n = 10\n"
               "fe.picard_tol = 1e-12\n", ["offline-online+sup", "offline-online"]),
        "FV plain": ("study.branch = backstep-fv\nsampling = 2,2\nfv.resolution = 4\nfv.closure = off\nfv.nu = 5e-2\n",
                     ["plain"]),
        "FV rbf": ("study.branch = backstep-fv\nsampling = 2,2\nfv.resolution = 4\n", ["rbf"]),
    }
    worst, parts = -np.inf, []
    for label, (text, variants) in studies.items():
        b = Bundle(offline_run(config_from_text(text), tmp_path / label.replace(" ", "_")))
        for v in variants:
            rows = _consistency(b, v)
            gap = max(max(eu - pu, ep - pp) for eu, pu, ep, pp in rows)
            worst = max(worst, gap)
            top = max(max(eu, ep) for eu, _, ep, _ in rows)
            parts.append(f"{label}/{v}: {len(rows)} samples, max ROM error {top:.1e}, max(ROM - projection) {gap:.1e}")
    verdict(capsys, 5, worst <= 1e-8, "; ".join(parts) + " (<= 1e-8)", time.perf_counter() - t0, 120)


# ---- 6 -------------------------------------------------------------------------------

CAVITY_STUDY = """
study.branch = cavity-fe
sampling = 11
rb.n_max = 5
rb.tol = 0
fe.delta = 0.1
fe.picard_tol = 1e-10
"""


def _summary(rep, variant, n):
    (s,) = [s for s in rep.summary if s["variant"] == variant and s["N"] == n]
    return s


def test_criterion_6_cavity(capsys, tmp_path):
    t0 = time.perf_counter()
    b = offline_run(config_from_text(CAVITY_STUDY), tmp_path / "cavity")
    pts = "; ".join(str(120 + 40 * k) for k in range(10))
    rep = validate(b, plan_from_text(f"plan.points = {pts}\nplan.n_values = 1,2,3,4,5\n"))
    checks, notes = {}, []

    for v in ("offline-online", "offline-online+sup"):
        ep = [_summary(rep, v, n)["mean_err_p"] for n in range(1, 6)]
        finite = all(_summary(rep, v, n)["failed"] == 0 for n in range(1, 6)) and np.all(np.isfinite(ep))
        checks[f"{v} finite+decaying"] = finite and all(np.diff(ep) <= 0)
        notes.append(f"{v} mean err_p N=1..5 " + "/".join(f"{e:.1e}" for e in ep))

    for stab, label in (("+sup", "with sup"), ("", "no sup")):
        on = _summary(rep, "offline-online" + stab, 5)
        off = _summary(rep, "offline-only" + stab, 5)
        conv = off["samples"] - off["failed"]
        if conv:
            ratio = off["mean_err_p"] / on["mean_err_p"]
            notes.append(f"offline-only/offline-online err_p ({label}) x{ratio:.0f} over {conv} converged, "
                         f"{off['failed']} Newton failures")
        else:
            ratio = math.inf
            notes.append(f"offline-only ({label}) failed to converge at all {off['samples']} holdouts")
        if stab:
            checks["offline-only >= x5 (with sup)"] = conv > 0 and ratio >= 5
    t_sup = _summary(rep, "offline-online+sup", 5)["mean_online_seconds"]
    t_nos = _summary(rep, "offline-online", 5)["mean_online_seconds"]
    checks["online time no-sup <= sup"] = t_nos <= t_sup
    notes.append(f"online {t_nos * 1e3:.2f} ms (no sup) vs {t_sup * 1e3:.2f} ms (sup)")
    p_sup = _summary(rep, "offline-online+sup", 5)["mean_err_p"]
    p_nos = _summary(rep, "offline-online", 5)["mean_err_p"]
    checks["supremizer improves err_p"] = p_sup < p_nos
    failed = [k for k, ok in checks.items() if not ok]
    detail = "; ".join(notes) + (f"; failed: {failed}" if failed else "")
    verdict(capsys, 6, not failed, detail, time.perf_counter() - t0, 600)


# ---- 7 -------------------------------------------------------------------------------

def test_criterion_7_backstep(capsys, tmp_path):
    t0 = time.perf_counter()
    text = ("study.branch = backstep-fv\nsampling = 5,4\nfv.resolution = 4\n"
            "pod.n_u = 7\npod.n_p = 7\npod.n_sup = 7\npod.n_nut = 7\n")
    b = offline_run(config_from_text(text), tmp_path / "backstep")
    rep = validate(b, plan_from_text("plan.maxmin = 6\n"))
    by = {}
    for r in rep.rows:
        by.setdefault((r["mu1"], r["mu2"]), {})[r["variant"]] = r
    both = [v for v in by.values() if v["rbf"]["status"] == "ok" and v["plain"]["status"] == "ok"]
    plain_fail = sum(v["plain"]["status"] != "ok" for v in by.values())
    rbf_fail = sum(v["rbf"]["status"] != "ok" for v in by.values())
    if both:
        mean = lambda var, k: float(np.mean([v[var][k] for v in both]))  # noqa: E731
        ru, rp = mean("plain", "err_u") / mean("rbf", "err_u"), mean("plain", "err_p") / mean("rbf", "err_p")
        err_txt = (f"rbf err_u {mean('rbf', 'err_u'):.2e} err_p {mean('rbf', 'err_p'):.2e}; plain err_u "
                   f"{mean('plain', 'err_u'):.2e} err_p {mean('plain', 'err_p'):.2e}; gap x{ru:.0f} (u) x{rp:.0f} (p)")
    else:
        ru = rp = 0.0
        err_txt = "no holdout where both variants converged"
    with open(Path(b) / "energy.csv") as fh:
        header = fh.readline().strip().split(",")
        E = np.loadtxt(fh, delimiter=",", ndmin=2)
    cols = header[1:]
    monotone = bool(np.all(np.diff(E[:, 1:], axis=0) >= 0))
    reach = {c: int(E[np.argmax(E[:, j + 1] >= 0.999), 0]) if np.any(E[:, j + 1] >= 0.999) else None
             for j, c in enumerate(cols)}
    energy_ok = monotone and all(v is not None and v <= 10 for v in reach.values())
    ok = bool(both) and ru >= 10 and rp >= 10 and rbf_fail == 0 and energy_ok
    detail = (f"{len(by)} holdouts ({plain_fail} plain / {rbf_fail} rbf Newton failures); {err_txt} (>= x10); "
              f"energy monotone={monotone}, N reaching 0.999: {reach}")
    verdict(capsys, 7, ok, detail, time.perf_counter() - t0, 900)


# ---- 8 -------------------------------------------------------------------------------

FE_TINY = "study.branch = cavity-fe\nsampling = 4\nrb.n_max = 3\nfe.mesh_n = 6\nfe.picard_tol = 1e-12\n"
FV_TINY = "study.branch = backstep-fv\nsampling = 2,2\nfv.resolution = 4\npod.n_u = 2\npod.n_p = 2\npod.n_sup = 2\npod.n_nut = 2\n"


def _roundtrip(root: Path) -> list[str]:
    """Reload every binary artifact and write it back; return names whose bytes changed."""
    b = Bundle(root)
    changed = []
    tmp = root.parent / "rt"
    tmp.mkdir(exist_ok=True)
    files = b.manifest["files"]

    def check(name, save, obj):
        if name not in files:
            return
        save(tmp / name, obj)
        if (tmp / name).read_bytes() != (root / name).read_bytes():
            changed.append(name)

    recipe = bd.mesh_recipe(b.config)
    check(bd.MESH_FILE, lambda p, m: bd.save_mesh(p, m, recipe), b.mesh)
    names = bd.FE_FILES if b.branch == bd.CAVITY else bd.FV_FILES
    for key, name in names.items():
        if name in files:
            check(name, bd.save_basis, b.basis(key))
    if b.branch == bd.CAVITY:
        for v in b.config.variants:
            check(bd.system_file(v), bd.save_system, b.system(v))
    else:
        check(bd.OPERATORS_FILE, bd.save_operators, b.operators)
        check(bd.RBF_FILE, bd.save_rbf, b.rbf)
    # generic container
    for name in files:
        if name.endswith((".romb", ".roms", ".romt", ".romr", ".romf")):
            magic = (root / name).read_bytes()[:8].rstrip(b"\0").decode()
            blocks = binio.read_blocks(root / name, magic)
            binio.write_blocks(tmp / ("g_" + name), magic, blocks)
            if (tmp / ("g_" + name)).read_bytes() != (root / name).read_bytes():
                changed.append("generic:" + name)
    return changed


def test_criterion_8_infrastructure(capsys, tmp_path):
    t0 = time.perf_counter()
    notes, ok = [], True
    for label, text in (("FE", FE_TINY), ("FV", FV_TINY)):
        a = offline_run(config_from_text(text), tmp_path / f"{label}_a")
        c = offline_run(config_from_text(text), tmp_path / f"{label}_b")
        same = json.loads((a / "manifest.json").read_text())["files"] == json.loads((c / "manifest.json").read_text())["files"]
        changed = _roundtrip(a)
        ok &= same and not changed
        notes.append(f"{label} rerun hashes equal={same}, round-trip changed={changed or 'none'}")

    fe = tmp_path / "FE_a"
    cfg_bad = tmp_path / "bad.cfg"
    cfg_bad.write_text("study.branch = cavity-fe\nsampling = 3\nno.such.key = 1\n")
    cfg_div = tmp_path / "div.cfg"
    cfg_div.write_text("study.branch = cavity-fe\nsampling = 2\nfe.mesh_n = 6\nfe.picard_max = 1\n")
    broken = tmp_path / "broken"
    shutil.copytree(fe, broken)
    (broken / "basis_pressure.romb").unlink()
    codes = {
        0: cli(["online", "--bundle", str(fe), "--mu", "250", "--variant", "offline-online+sup"]),
        2: cli(["offline", "--config", str(cfg_bad), "--output", str(tmp_path / "x")]),
        3: cli(["offline", "--config", str(cfg_div), "--output", str(tmp_path / "y")]),
        4: cli(["online", "--bundle", str(fe), "--mu", "470", "--variant", "offline-online", "--newton-max", "0"]),
        5: cli(["online", "--bundle", str(broken), "--mu", "250", "--variant", "offline-online"]),
    }
    capsys.readouterr()
    codes_ok = all(k == v for k, v in codes.items())
    ok &= codes_ok
    notes.append(f"CLI exit codes expected->got {codes}")
    verdict(capsys, 8, ok, "; ".join(notes), time.perf_counter() - t0, 120)
