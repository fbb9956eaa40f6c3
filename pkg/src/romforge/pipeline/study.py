"""Offline and online orchestration for both branches."""

from __future__ import annotations

import csv
import json
import logging
import shutil
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import H1, L2, Field, ParameterSample, inner_product, maxmin_holdout, relative_l2_error
from ..errors import FOMDiverged, InvalidConfig, RomError
from ..fom_fe import FEDiscretization, lifting_fe, solve_fom_fe
from ..fom_fv import FVOperators, homogenize, lifting_fv, solve_fom_fv
from ..rbf import ExtrapolationWarning, project_viscosity, rbf_eval, rbf_fit
from ..reduction import (
    EDDY,
    PRESSURE,
    SUPREMIZER,
    VELOCITY,
    ReducedBasis,
    cumulative_energy,
    gram_schmidt,
    greedy_rb,
    pod,
    supremizer_fe,
    supremizer_fv,
)
from ..rom_fe import RBOptions, project_fe, reconstruct, solve_rb_fe, training_coefficients
from ..rom_fv import assemble_reduced, reconstruct_fv, solve_rom_plain, solve_rom_rbf
from . import bundle as bd
from .config import BACKSTEP, CAVITY, HoldoutPlan, StudyConfig

log = logging.getLogger(__name__)


# ---- FOM helpers -----------------------------------------------------------------

def _fe_solve(args):
    cfg, mu = args
    disc = FEDiscretization(bd.build_mesh(bd.mesh_recipe(cfg)))
    t0 = time.perf_counter()
    return solve_fom_fe(disc, mu, cfg.stab, cfg.fe_solver), time.perf_counter() - t0


def _fv_solve(args):
    cfg, mu = args
    mesh = bd.build_mesh(bd.mesh_recipe(cfg))
    t0 = time.perf_counter()
    return solve_fom_fv(mesh, mu, cfg.fv), time.perf_counter() - t0


class FOMRunner:
    """Solves the full-order model at many samples, serially or in a process pool."""

    def __init__(self, cfg: StudyConfig):
        self.cfg = cfg
        self.mesh = bd.build_mesh(bd.mesh_recipe(cfg))
        if cfg.branch == CAVITY:
            self.disc = FEDiscretization(self.mesh)
        else:
            self.ops = FVOperators(self.mesh, cfg.fv.resolved_tau(self.mesh))

    def solve(self, mu):
        t0 = time.perf_counter()
        if self.cfg.branch == CAVITY:
            sol = solve_fom_fe(self.disc, mu, self.cfg.stab, self.cfg.fe_solver)
        else:
            sol = solve_fom_fv(self.mesh, mu, self.cfg.fv, self.ops)
        return sol, time.perf_counter() - t0

    def solve_many(self, samples: list[ParameterSample]):
        """Solve every sample; divergence anywhere raises with the full list of failing samples."""
        results, failed = [None] * len(samples), []
        if self.cfg.workers > 1 and len(samples) > 1:
            fn = _fe_solve if self.cfg.branch == CAVITY else _fv_solve
            with ProcessPoolExecutor(self.cfg.workers) as pool:
                futures = [pool.submit(fn, (self.cfg, s.mu)) for s in samples]
                for k, fut in enumerate(futures):
                    try:
                        sol, sec = fut.result()
                        results[k] = (_rebind(sol, self.mesh), sec)
                    except FOMDiverged as exc:
                        failed.append((samples[k].mu, str(exc)))
        else:
            for k, s in enumerate(samples):
                try:
                    results[k] = self.solve(s.mu)
                except FOMDiverged as exc:
                    failed.append((s.mu, str(exc)))
        if failed:
            raise FOMDiverged(f"FOM diverged at {len(failed)} sample(s): {[m for m, _ in failed]}",
                              failed=[list(m) for m, _ in failed])
        return [r[0] for r in results], np.array([r[1] for r in results])


def _rebind(sol, mesh):
    """Re-attach fields computed in a worker to the parent's mesh object."""
    for name in ("u", "p", "nut"):
        f = getattr(sol, name, None)
        if f is not None:
            setattr(sol, name, Field(mesh, f.values, f.bc))
    return sol


# ---- offline ---------------------------------------------------------------------

def offline_run(cfg: StudyConfig, output: str | Path | None = None) -> Path:
    """Run the offline stage and write a bundle; partial output is removed on failure."""
    out = Path(output or cfg.output or cfg.name)
    tmp = out.with_name(out.name + ".partial")
    if tmp.exists():
        shutil.rmtree(tmp)
    tmp.mkdir(parents=True)
    t0 = time.perf_counter()
    try:
        timings: dict = {"stages": {}}
        runner = FOMRunner(cfg)
        bd.save_mesh(tmp / bd.MESH_FILE, runner.mesh, bd.mesh_recipe(cfg))
        if cfg.branch == CAVITY:
            files, extra = _offline_fe(cfg, runner, tmp, timings)
        else:
            files, extra = _offline_fv(cfg, runner, tmp, timings)
        bd.write_manifest(tmp, cfg, [bd.MESH_FILE, *files], extra)
        timings["offline_total"] = time.perf_counter() - t0
        (tmp / bd.TIMINGS).write_text(json.dumps(timings, indent=2) + "\n")
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if out.exists():
        shutil.rmtree(out)
    tmp.rename(out)
    return out


def _stage(timings, name, t0):
    timings["stages"][name] = time.perf_counter() - t0


def _relative_errors(u, p, u_ref, p_ref) -> tuple[float, float]:
    return relative_l2_error(u, u_ref), relative_l2_error(p, p_ref)


def _nested_bases(Ucols: np.ndarray, Pcols: np.ndarray, sup, ipu, ipp):
    """Orthonormal pressure basis plus velocity bases with and without supremizers.

    Step ``k`` adds pressure column ``k``, velocity column ``k`` and, for the
    enriched space, the supremizer of the new pressure mode right after it,
    so truncating to the first ``k`` steps keeps both spaces nested.
    """
    nu, npr = Ucols.shape[1], Pcols.shape[1]
    Q = np.zeros((Pcols.shape[0], 0))
    V = np.zeros((Ucols.shape[0], 0))
    Vs = V.copy()
    counts, counts_s = [], []
    for k in range(max(nu, npr)):
        q = gram_schmidt(Pcols[:, k:k + 1], ipp, against=Q).vectors if k < npr else Q[:, :0]
        Q = np.hstack([Q, q])
        u = Ucols[:, k:k + 1] if k < nu else Ucols[:, :0]
        V = np.hstack([V, gram_schmidt(u, ipu, against=V).vectors])
        cols = np.hstack([u, sup(q)]) if q.shape[1] else u
        Vs = np.hstack([Vs, gram_schmidt(cols, ipu, against=Vs).vectors])
        counts.append(V.shape[1])
        counts_s.append(Vs.shape[1])
    return Q, V, counts, Vs, counts_s


def _offline_fe(cfg: StudyConfig, runner: FOMRunner, root: Path, timings: dict):
    disc, mesh = runner.disc, runner.mesh
    samples = cfg.samples()
    t = time.perf_counter()
    sols, secs = runner.solve_many(samples)
    _stage(timings, "fom", t)
    timings["fom_seconds"] = secs.tolist()
    lift = lifting_fe(disc, stab=cfg.stab)
    u_hom = [s.u - lift for s in sols]
    pres = [s.p for s in sols]
    ipu, ipp = inner_product(mesh, L2, 2), inner_product(mesh, L2, 1)
    sup = lambda Q: supremizer_fe(disc, Q, cfg.rb.supremizer_ip)  # noqa: E731

    t = time.perf_counter()
    greedy_rows = []
    if cfg.rb.method == "greedy":
        driver = RBOptions.from_name(cfg.rb.greedy_driver)
        cache = {}

        def rom_error(V: ReducedBasis, Q: ReducedBasis, k: int) -> float:
            key = (V.modes.shape[1], Q.modes.shape[1], id(V))
            if key not in cache:
                cache.clear()
                system = project_fe(disc, V, Q, lift, driver, cfg.stab)
                system.train_mu = np.array([s.mu for s in samples])
                # projected truth as the starting point: the offline error estimate should
                # not depend on Newton's basin
                system.train_coeffs = training_coefficients(V, Q, u_hom, pres)
                cache[key] = system
            system = cache[key]
            try:
                sol = solve_rb_fe(system, samples[k].mu, settings=cfg.newton)
            except RomError:
                return np.inf
            u, p = reconstruct(V, Q, sol.a, sol.b, lift)
            eu, ep = _relative_errors(u, p, sols[k].u, sols[k].p)
            return eu + ep

        g = greedy_rb(samples, lambda k: (u_hom[k], pres[k]), rom_error, cfg.rb.tol, cfg.rb.n_max,
                      sup if driver.supremizer else None, ipu, ipp)
        selected = g.selected
        for step, (k, e) in enumerate(zip(g.selected, g.max_errors), 1):
            greedy_rows.append((step, samples[k].mu[0], e))
        Ucols = np.column_stack([u_hom[k].flat() for k in selected])
        Pcols = np.column_stack([pres[k].flat() for k in selected])
    else:
        selected = list(range(len(samples)))
        n = min(cfg.rb.n_max, len(samples))
        Ucols = pod(u_hom, ipu, n=n).modes
        Pcols = pod(pres, ipp, n=n, family=PRESSURE).modes
    _stage(timings, "basis", t)

    t = time.perf_counter()
    Q, V_plain, counts_plain, V_sup, counts_sup = _nested_bases(Ucols, Pcols, sup, ipu, ipp)
    vb = {"velocity": ReducedBasis(VELOCITY, mesh, 2, V_plain), "velocity+sup": ReducedBasis(VELOCITY, mesh, 2, V_sup),
          "pressure": ReducedBasis(PRESSURE, mesh, 1, Q)}
    files = []
    for name, b in vb.items():
        bd.save_basis(root / bd.FE_FILES[name], b)
        files.append(bd.FE_FILES[name])
    sel_u = [u_hom[k] for k in selected]
    sel_p = [pres[k] for k in selected]
    for variant in cfg.rb.variants:
        opts = RBOptions.from_name(variant)
        V = vb["velocity+sup"] if opts.supremizer else vb["velocity"]
        system = project_fe(disc, V, vb["pressure"], lift, opts, cfg.stab)
        system.train_mu = np.array([samples[k].mu for k in selected])
        system.train_coeffs = training_coefficients(V, vb["pressure"], sel_u, sel_p)
        system.u_counts = counts_sup if opts.supremizer else counts_plain
        bd.save_system(root / bd.system_file(variant), system)
        files.append(bd.system_file(variant))
    _stage(timings, "projection", t)

    stored = bd.StoredSnapshots(np.array([samples[k].mu for k in selected]), [sols[k].u for k in selected],
                                sel_p, None, [lift])
    bd.save_snapshots(root / bd.SNAPSHOT_FILE, stored)
    files.append(bd.SNAPSHOT_FILE)
    eu = pod(sel_u, ipu).eigenvalues
    ep = pod(sel_p, ipp, family=PRESSURE).eigenvalues
    cu, cp = cumulative_energy(eu), cumulative_energy(ep)
    _write_csv(root / "energy.csv", ["N", "u", "p"], [[k + 1, f"{cu[k]:.12f}", f"{cp[k]:.12f}"] for k in range(len(cu))])
    files.append("energy.csv")
    if greedy_rows:
        _write_csv(root / "greedy.csv", ["step", "mu", "max_training_error"], greedy_rows)
        files.append("greedy.csv")
    extra = {"snapshots": [[float(samples[k].mu[0])] for k in selected], "n_candidates": len(samples),
             "counts": {"N": len(selected), "velocity": V_plain.shape[1], "velocity+sup": V_sup.shape[1],
                        "pressure": Q.shape[1]},
             "variants": list(cfg.rb.variants)}
    return files, extra


def _pod_count(value, ns):
    return ns if value is None else min(value, ns)


def _offline_fv(cfg: StudyConfig, runner: FOMRunner, root: Path, timings: dict):
    mesh, ops = runner.mesh, runner.ops
    samples = cfg.samples()
    ns = len(samples)
    t = time.perf_counter()
    states, secs = runner.solve_many(samples)
    _stage(timings, "fom", t)
    timings["fom_seconds"] = secs.tolist()
    if cfg.lifting == "linear":
        lifts = list(lifting_fv(mesh, cfg.fv, ops))
    else:
        lifts = [solve_fom_fv(mesh, mu, cfg.fv, ops).u for mu in ((1.0, 0.0), (1.0, 90.0))]
    u_hom = [homogenize(s.u, lifts, smp.mu) for s, smp in zip(states, samples)]
    ipu, ipp = inner_product(mesh, L2, 2), inner_product(mesh, L2, 1)

    t = time.perf_counter()
    e = cfg.pod.energy
    kw = (lambda n: {"energy": e}) if e is not None else (lambda n: {"n": _pod_count(n, ns)})
    Vb = pod(u_hom, ipu, family=VELOCITY, **kw(cfg.pod.n_u))
    Pb = pod([s.p for s in states], ipp, family=PRESSURE, **kw(cfg.pod.n_p))
    sup_raw = supremizer_fv(ops, np.column_stack([s.p.values for s in states]), cfg.raw.get("pod.supremizer_ip", H1))
    sup_fields = [Field.from_flat(mesh, sup_raw[:, k], 2, np.zeros(2)) for k in range(ns)]
    Sraw = pod(sup_fields, ipu, family=SUPREMIZER, **kw(cfg.pod.n_sup))
    Sb = ReducedBasis(SUPREMIZER, mesh, 2, gram_schmidt(Sraw.modes, ipu, against=Vb.modes).vectors,
                      Sraw.eigenvalues)
    closure = cfg.fv.closure
    Eb = pod([s.nut for s in states], ipp, family=EDDY, **kw(cfg.pod.n_nut)) if closure else None
    _stage(timings, "pod", t)

    t = time.perf_counter()
    red = assemble_reduced(ops, lifts, Vb, Pb, Sb, Eb, cfg.fv.nu, cfg.box)
    allv = np.hstack([Vb.modes, Sb.modes])
    Wu, Wp = ipu.weight, ipp.weight
    red.train_mu = np.array([s.mu for s in samples])
    red.train_coeffs = np.array([np.concatenate([allv.T @ (Wu @ u.flat()), Pb.modes.T @ (Wp @ s.p.values)])
                                 for u, s in zip(u_hom, states)])
    files = [bd.SNAPSHOT_FILE, bd.OPERATORS_FILE, bd.FV_FILES["velocity"], bd.FV_FILES["pressure"],
             bd.FV_FILES["supremizer"]]
    if closure:
        G = project_viscosity([s.nut for s in states], Eb)
        red.train_g = G.T.copy()
        model = rbf_fit(np.array([cfg.box.normalize(s.mu) for s in samples]), G, cfg.rbf.eps, cfg.rbf.ridge,
                        cfg.box, cfg.rbf.auto_ridge)
        bd.save_rbf(root / bd.RBF_FILE, model)
        bd.save_basis(root / bd.FV_FILES["eddy-viscosity"], Eb)
        files += [bd.RBF_FILE, bd.FV_FILES["eddy-viscosity"], "coefficients.csv"]
        _write_csv(root / "coefficients.csv", ["mu1", "mu2"] + [f"g{i + 1}" for i in range(G.shape[0])],
                   [[*s.mu, *G[:, j]] for j, s in enumerate(samples)])
    _stage(timings, "assembly", t)
    bd.save_operators(root / bd.OPERATORS_FILE, red)
    for name, b in (("velocity", Vb), ("pressure", Pb), ("supremizer", Sb)):
        bd.save_basis(root / bd.FV_FILES[name], b)
    stored = bd.StoredSnapshots(red.train_mu, [s.u for s in states], [s.p for s in states],
                                [s.nut for s in states] if closure else None, lifts)
    bd.save_snapshots(root / bd.SNAPSHOT_FILE, stored)

    cols = {"u": Vb.eigenvalues, "p": Pb.eigenvalues, "S": Sraw.eigenvalues}
    if closure:
        cols["nut"] = Eb.eigenvalues
    cum = {k: cumulative_energy(v) for k, v in cols.items()}
    _write_csv(root / "energy.csv", ["N", *cum], [[n + 1, *(f"{cum[k][n]:.12f}" for k in cum)] for n in range(ns)])
    files.append("energy.csv")
    extra = {"snapshots": [list(s.mu) for s in samples],
             "counts": {"velocity": Vb.count, "pressure": Pb.count, "supremizer": Sb.count,
                        "eddy-viscosity": Eb.count if closure else 0},
             "variants": list(cfg.variants)}
    return files, extra


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---- online ----------------------------------------------------------------------

@dataclass(eq=False)
class OnlineResult:
    u: Field
    p: Field
    row: dict
    g: np.ndarray | None = None


def _check_inside(cfg: StudyConfig, mu) -> ParameterSample:
    return cfg.box.sample(mu)


def _open(bundle) -> bd.Bundle:
    return bundle if isinstance(bundle, bd.Bundle) else bd.Bundle(bundle)


def online_run(bundle: bd.Bundle | str | Path, mu, variant: str, truth: bool = False, n_use: int | None = None,
               newton=None, record: bool = True, fom=None) -> OnlineResult:
    """Solve the reduced system at ``mu``; with ``truth`` also the FOM and relative errors."""
    bundle = _open(bundle)
    cfg = bundle.config
    sample = _check_inside(cfg, mu)
    bundle.require(variant)
    settings = newton or cfg.newton
    snaps = bundle.snapshots
    g = None
    if cfg.branch == CAVITY:
        opts = RBOptions.from_name(variant)
        system = bundle.system(variant)
        V = bundle.basis("velocity+sup" if opts.supremizer else "velocity")
        Q = bundle.basis("pressure")
        sol = solve_rb_fe(system, sample.mu, n_use, settings)
        u, p = reconstruct(V, Q, sol.a, sol.b, snaps.liftings[0])
        row = {"mu": sample.mu[0], "N": n_use or len(snaps.mu), "option": variant}
    else:
        red = bundle.operators
        Vb, Pb, Sb = bundle.basis("velocity"), bundle.basis("pressure"), bundle.basis("supremizer")
        if variant == "rbf":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ExtrapolationWarning)
                g = rbf_eval(bundle.rbf, sample.mu)
            sol = solve_rom_rbf(red, sample.mu, g, settings=settings, continuation=cfg.continuation)
        else:
            sol = solve_rom_plain(red, sample.mu, settings=settings, continuation=cfg.continuation)
        u, p = reconstruct_fv(snaps.liftings, Vb, Sb, Pb, sol, red.n_phi)
        row = {"mu1": sample.mu[0], "mu2": sample.mu[1], "variant": variant}
    row.update(newton_iters=sol.iterations, online_seconds=sol.seconds)
    if truth:
        ref = fom(sample.mu) if fom is not None else FOMRunner(cfg).solve(sample.mu)[0]
        row["err_u"], row["err_p"] = _relative_errors(u, p, ref.u, ref.p)
    if record:
        _append_online(bundle, row)
    return OnlineResult(u, p, row, g)


def _append_online(bundle: bd.Bundle, row: dict):
    path = bundle.reports_dir() / "online.csv"
    new = not path.exists()
    with open(path, "a", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=sorted(row), lineterminator="\n", extrasaction="ignore")
        if new:
            w.writeheader()
        w.writerow(row)
    tpath = bundle.root / bd.TIMINGS
    timings = json.loads(tpath.read_text()) if tpath.is_file() else {}
    key = row.get("option") or row.get("variant")
    timings.setdefault("online", []).append({"variant": key, "seconds": row["online_seconds"]})
    tpath.write_text(json.dumps(timings, indent=2) + "\n")


# ---- validation ------------------------------------------------------------------

@dataclass
class ValidationReport:
    branch: str
    rows: list[dict] = field(default_factory=list)
    summary: list[dict] = field(default_factory=list)
    holdouts: list[tuple[float, ...]] = field(default_factory=list)
    files: list[str] = field(default_factory=list)

    def mean(self, variant: str, key: str, n: int | None = None) -> float:
        vals = [r[key] for r in self.rows if _variant_of(r) == variant and (n is None or r.get("N") == n)]
        return float(np.mean(vals)) if vals else float("nan")


def _variant_of(row):
    return row.get("option") or row.get("variant")


def holdout_samples(bundle: bd.Bundle, plan: HoldoutPlan) -> list[ParameterSample]:
    bundle = _open(bundle)
    cfg = bundle.config
    offline = cfg.samples()
    if plan.points:
        pts = [cfg.box.sample(p) for p in plan.points]
    else:
        pts = maxmin_holdout(cfg.box, offline, plan.maxmin, plan.resolution)
    taken = {s.mu for s in offline} | {tuple(float(v) for v in m) for m in bundle.snapshots.mu}
    clash = [p.mu for p in pts if p.mu in taken]
    if clash:
        raise InvalidConfig(f"holdout samples coincide with offline samples: {clash}")
    return pts


def validate(bundle: bd.Bundle | str | Path, plan: HoldoutPlan, newton=None) -> ValidationReport:
    bundle = _open(bundle)
    cfg = bundle.config
    variants = plan.variants or cfg.variants
    for v in variants:
        if v not in cfg.variants:
            raise InvalidConfig(f"variant {v!r} not available for {cfg.branch}")
    holdouts = holdout_samples(bundle, plan)
    runner = FOMRunner(cfg)
    report = ValidationReport(cfg.branch, holdouts=[h.mu for h in holdouts])
    n_values = plan.n_values or (None,)
    for h in holdouts:
        try:
            truth = runner.solve(h.mu)[0]
        except FOMDiverged as exc:
            for v in variants:
                report.rows.append(_failed_row(cfg, h, v, None, f"truth:{exc.kind}"))
            continue
        for v in variants:
            for n in n_values:
                try:
                    res = online_run(bundle, h.mu, v, truth=True, n_use=n, newton=newton, fom=lambda _m: truth)
                    row = dict(res.row, status="ok")
                except RomError as exc:
                    row = _failed_row(cfg, h, v, n, exc.kind)
                report.rows.append(row)
    report.summary = _summarize(report.rows, cfg.branch)
    report.files = _write_validation(bundle, report)
    return report


def _failed_row(cfg, h, variant, n, status):
    if cfg.branch == CAVITY:
        row = {"mu": h.mu[0], "N": n, "option": variant}
    else:
        row = {"mu1": h.mu[0], "mu2": h.mu[1], "variant": variant}
    row.update(err_u=float("nan"), err_p=float("nan"), newton_iters=-1, online_seconds=float("nan"), status=status)
    return row


def _summarize(rows, branch):
    keys = sorted({(_variant_of(r), r.get("N")) for r in rows}, key=lambda k: (k[0], k[1] or 0))
    out = []
    for variant, n in keys:
        sel = [r for r in rows if _variant_of(r) == variant and r.get("N") == n]
        ok = [r for r in sel if r["status"] == "ok"]
        entry = {"variant": variant, "N": n, "samples": len(sel), "failed": len(sel) - len(ok)}
        for k in ("err_u", "err_p", "online_seconds", "newton_iters"):
            vals = np.array([r[k] for r in ok], dtype=float)
            entry[f"mean_{k}"] = float(np.mean(vals)) if vals.size else float("nan")
            entry[f"max_{k}"] = float(np.max(vals)) if vals.size else float("nan")
        out.append(entry)
    return out


def _write_validation(bundle: bd.Bundle, report: ValidationReport) -> list[str]:
    d = bundle.reports_dir()
    files = []
    if report.branch == CAVITY:
        cols = ["mu", "N", "err_u", "err_p", "option", "newton_iters", "online_seconds", "status"]
        _write_csv(d / "validation.csv", cols, [[r.get(c) for c in cols] for r in report.rows])
        files.append("validation.csv")
        # wide layout: one error column pair per option
        options = list(dict.fromkeys(r["option"] for r in report.rows))
        wide = {}
        for r in report.rows:
            wide.setdefault((r["mu"], r["N"]), {})[r["option"]] = r
        header = ["mu", "N"] + [f"err_{f}[{o}]" for o in options for f in ("u", "p")]
        _write_csv(d / "table.csv", header,
                   [[mu, n] + [vs.get(o, {}).get(f"err_{f}", "n/a") for o in options for f in ("u", "p")]
                    for (mu, n), vs in wide.items()])
        files.append("table.csv")
    else:
        by_mu = {}
        for r in report.rows:
            by_mu.setdefault((r["mu1"], r["mu2"]), {})[r["variant"]] = r
        cols = ["mu1", "mu2", "err_u_rbf", "err_p_rbf", "err_u_plain", "err_p_plain"]
        table = []
        for (m1, m2), vs in by_mu.items():
            row = [m1, m2]
            for v in ("rbf", "plain"):
                r = vs.get(v, {})
                row += [r.get("err_u", "n/a"), r.get("err_p", "n/a")]
            table.append(row)
        _write_csv(d / "validation.csv", cols, table)
        files.append("validation.csv")
        # error curves: one series per fixed value of the other parameter
        for fixed, free, name in ((1, 0, "curves_mu1.csv"), (0, 1, "curves_mu2.csv")):
            rows = sorted(table, key=lambda r: (r[fixed], r[free]))
            _write_csv(d / name, [f"mu{fixed + 1}_fixed", f"mu{free + 1}", *cols[2:]],
                       [[r[fixed], r[free], *r[2:]] for r in rows])
            files.append(name)
    scols = list(report.summary[0]) if report.summary else ["variant"]
    _write_csv(d / "summary.csv", scols, [[s[c] for c in scols] for s in report.summary])
    files.append("summary.csv")
    return files


# ---- timings ---------------------------------------------------------------------

def report_timings(bundle: bd.Bundle | str | Path) -> dict:
    """Offline total, mean FOM solve time and mean online time per variant."""
    t = _open(bundle).timings()
    if not t:
        return {}
    table = {}
    if "offline_total" in t:
        table["offline_total"] = t["offline_total"]
    if t.get("fom_seconds"):
        table["fom_mean"] = float(np.mean(t["fom_seconds"]))
    per = {}
    for entry in t.get("online", []):
        per.setdefault(entry["variant"], []).append(entry["seconds"])
    table["online_mean"] = {k: float(np.mean(v)) for k, v in sorted(per.items())}
    table["online_queries"] = {k: len(v) for k, v in sorted(per.items())}
    return table
