"""Artifact bundle: binary payloads plus a JSON manifest with content hashes.

Everything except ``timings.json`` and the ``reports/`` directory is a
deterministic function of the configuration, so two offline runs with the
same config produce byte-identical artifact files.
"""

from __future__ import annotations

import hashlib
import json
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..binio import read_blocks, write_blocks
from ..core import BackstepGeometry, Field, Mesh, ParameterBox, build_backstep_mesh, build_cavity_mesh
from ..errors import IncompleteBundle
from ..rbf import RBFModel
from ..reduction import ReducedBasis
from ..rom_fe import RBOptions, RBSystemFE
from ..rom_fv import ReducedOperators
from .config import BACKSTEP, CAVITY, StudyConfig, build_config

FORMAT = "romforge-bundle/1"
MANIFEST = "manifest.json"
TIMINGS = "timings.json"
REPORTS = "reports"

MESH_FILE = "mesh.romf"
SNAPSHOT_FILE = "snapshots.romf"
FE_FILES = {"velocity": "basis_velocity.romb", "velocity+sup": "basis_velocity_sup.romb",
            "pressure": "basis_pressure.romb"}
FV_FILES = {"velocity": "basis_velocity.romb", "pressure": "basis_pressure.romb",
            "supremizer": "basis_supremizer.romb", "eddy-viscosity": "basis_nut.romb"}
OPERATORS_FILE = "operators.romt"
RBF_FILE = "rbf.romr"


def system_file(variant: str) -> str:
    return "system_" + variant.replace("+", "_") + ".roms"


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---- mesh --------------------------------------------------------------------

def mesh_recipe(cfg: StudyConfig) -> dict:
    if cfg.branch == CAVITY:
        return {"builder": "cavity", "n": cfg.fe_mesh_n}
    g = cfg.geometry
    return {"builder": "backstep", "resolution": cfg.fv_resolution,
            "geometry": [g.step_height, g.inlet_height, g.upstream_length, g.downstream_length]}


def build_mesh(recipe: dict) -> Mesh:
    if recipe["builder"] == "cavity":
        return build_cavity_mesh(int(recipe["n"]))
    return build_backstep_mesh(BackstepGeometry(*recipe["geometry"]), int(recipe["resolution"]))


def save_mesh(path: Path, mesh: Mesh, recipe: dict) -> None:
    blocks = {"recipe": json.dumps(recipe, sort_keys=True), "kind": mesh.kind, "nodes": mesh.nodes,
              "cells": mesh.cells, "bfacets": mesh.bfacets, "btags": mesh.btags}
    write_blocks(path, "ROMF1", blocks)


def load_mesh(path: Path) -> Mesh:
    b = read_blocks(path, "ROMF1")
    mesh = build_mesh(json.loads(b["recipe"]))
    same = (mesh.kind == b["kind"] and np.array_equal(mesh.nodes, b["nodes"]) and np.array_equal(mesh.cells, b["cells"])
            and np.array_equal(mesh.btags, b["btags"]))
    if not same:
        raise IncompleteBundle(f"{path.name}: stored mesh does not match its recipe")
    return mesh


# ---- snapshots ---------------------------------------------------------------

@dataclass(eq=False)
class StoredSnapshots:
    mu: np.ndarray  # (Ns, d)
    velocity: list[Field]
    pressure: list[Field]
    nut: list[Field] | None
    liftings: list[Field]
    fom_seconds: np.ndarray = field(default_factory=lambda: np.zeros(0))


def save_snapshots(path: Path, snaps: StoredSnapshots) -> None:
    blocks = {
        "mu": snaps.mu,
        "u": np.stack([f.values for f in snaps.velocity]),
        "u_bc": np.stack([f.bc_or_zero() for f in snaps.velocity]),
        "p": np.stack([f.values for f in snaps.pressure]),
        "lift": np.stack([f.values for f in snaps.liftings]) if snaps.liftings else np.zeros((0,)),
        "lift_bc": np.stack([f.bc_or_zero() for f in snaps.liftings]) if snaps.liftings else np.zeros((0, 2)),
        "has_bc": np.array([snaps.velocity[0].bc is not None], dtype=np.int64),
    }
    if snaps.nut is not None:
        blocks["nut"] = np.stack([f.values for f in snaps.nut])
    write_blocks(path, "ROMF1", blocks)


def load_snapshots(path: Path, mesh: Mesh) -> StoredSnapshots:
    b = read_blocks(path, "ROMF1")
    has_bc = bool(b["has_bc"][0])
    u = [Field(mesh, v, bc if has_bc else None) for v, bc in zip(b["u"], b["u_bc"])]
    p = [Field(mesh, v) for v in b["p"]]
    nut = [Field(mesh, v) for v in b["nut"]] if "nut" in b else None
    lift = [Field(mesh, v, bc if has_bc else None) for v, bc in zip(b["lift"], b["lift_bc"])] if b["lift"].ndim == 3 else []
    return StoredSnapshots(b["mu"], u, p, nut, lift)


# ---- bases, systems, operators, RBF --------------------------------------------

def save_basis(path: Path, basis: ReducedBasis) -> None:
    write_blocks(path, "ROMB1", {"family": basis.family, "ip_kind": basis.ip_kind,
                                 "arity": np.array([basis.arity], dtype=np.int64),
                                 "count": np.array([basis.count], dtype=np.int64),
                                 "eigenvalues": basis.eigenvalues, "modes": basis.modes})


def load_basis(path: Path, mesh: Mesh) -> ReducedBasis:
    b = read_blocks(path, "ROMB1")
    return ReducedBasis(b["family"], mesh, int(b["arity"][0]), b["modes"], b["eigenvalues"], b["ip_kind"])


_FE_BLOCKS = ("A", "C", "Bt", "S4", "S3", "D", "E", "G")


def save_system(path: Path, s: RBSystemFE) -> None:
    blocks = {"options": s.options.name}
    blocks.update({k: getattr(s, k) for k in _FE_BLOCKS})
    blocks.update(train_mu=s.train_mu, train_coeffs=s.train_coeffs, u_counts=np.asarray(s.u_counts, dtype=np.int64))
    write_blocks(path, "ROMS1", blocks)


def load_system(path: Path) -> RBSystemFE:
    b = read_blocks(path, "ROMS1")
    return RBSystemFE(*(b[k] for k in _FE_BLOCKS), options=RBOptions.from_name(b["options"]), train_mu=b["train_mu"],
                      train_coeffs=b["train_coeffs"], u_counts=[int(c) for c in b["u_counts"]])


_FV_BLOCKS = ("B", "BT", "C", "H", "P", "S", "CT1", "CT2")


def _box_blocks(box: ParameterBox | None) -> dict:
    if box is None:
        return {}
    return {"box_lower": np.asarray(box.lower), "box_upper": np.asarray(box.upper)}


def _box_from(b: dict) -> ParameterBox | None:
    if "box_lower" not in b:
        return None
    return ParameterBox(tuple(float(v) for v in b["box_lower"]), tuple(float(v) for v in b["box_upper"]))


def save_operators(path: Path, ops: ReducedOperators) -> None:
    blocks = {"scalars": np.array([ops.nu, ops.tau]), "counts": np.array([ops.n_phi, ops.n_sup], dtype=np.int64)}
    blocks.update({k: getattr(ops, k) for k in _FV_BLOCKS})
    blocks.update(_box_blocks(ops.box))
    blocks.update(train_mu=ops.train_mu, train_coeffs=ops.train_coeffs, train_g=ops.train_g)
    write_blocks(path, "ROMT1", blocks)


def load_operators(path: Path) -> ReducedOperators:
    b = read_blocks(path, "ROMT1")
    nu, tau = (float(v) for v in b["scalars"])
    n_phi, n_sup = (int(v) for v in b["counts"])
    return ReducedOperators(nu, tau, *(b[k] for k in _FV_BLOCKS), n_phi, n_sup, _box_from(b),
                            b["train_mu"], b["train_coeffs"], b["train_g"])


def save_rbf(path: Path, model: RBFModel) -> None:
    blocks = {"kernel": model.kernel, "eps": model.eps, "ridge": np.array([model.ridge]), "centers": model.centers,
              "weights": model.weights}
    blocks.update(_box_blocks(model.box))
    write_blocks(path, "ROMR1", blocks)


def load_rbf(path: Path) -> RBFModel:
    b = read_blocks(path, "ROMR1")
    return RBFModel(b["centers"], b["eps"], b["weights"], float(b["ridge"][0]), b["kernel"], _box_from(b))


# ---- manifest and loaded bundle ---------------------------------------------------

def write_manifest(root: Path, cfg: StudyConfig, files: list[str], extra: dict) -> dict:
    manifest = {
        "format": FORMAT,
        "branch": cfg.branch,
        "config": cfg.raw,
        "config_hash": cfg.hash(),
        "versions": {"romforge": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "files": {name: sha256(root / name) for name in sorted(files)},
        **extra,
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


class Bundle:
    """Read access to an offline bundle; artifacts are loaded on demand."""

    def __init__(self, root: str | Path, verify: bool = True):
        self.root = Path(root)
        mpath = self.root / MANIFEST
        if not mpath.is_file():
            raise IncompleteBundle(f"{self.root} has no {MANIFEST}", path=str(self.root))
        try:
            self.manifest = json.loads(mpath.read_text())
        except json.JSONDecodeError as exc:
            raise IncompleteBundle(f"{MANIFEST} is not valid JSON: {exc}") from exc
        if self.manifest.get("format") != FORMAT:
            raise IncompleteBundle(f"unsupported bundle format {self.manifest.get('format')!r}")
        self.config = build_config(self.manifest["config"])
        if verify:
            self.verify()
        self._cache = {}

    @property
    def branch(self) -> str:
        return self.config.branch

    def verify(self, names=None) -> None:
        files = self.manifest.get("files", {})
        for name in names or files:
            p = self.root / name
            if name not in files or not p.is_file():
                raise IncompleteBundle(f"bundle is missing {name}", path=str(p))
            if sha256(p) != files[name]:
                raise IncompleteBundle(f"{name} does not match its manifest hash", path=str(p))

    def _load(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def mesh(self) -> Mesh:
        return self._load("mesh", lambda: load_mesh(self.root / MESH_FILE))

    @property
    def snapshots(self) -> StoredSnapshots:
        return self._load("snaps", lambda: load_snapshots(self.root / SNAPSHOT_FILE, self.mesh))

    def basis(self, name: str) -> ReducedBasis:
        files = FE_FILES if self.branch == CAVITY else FV_FILES
        if name not in files:
            raise IncompleteBundle(f"unknown basis {name!r}")
        return self._load(("basis", name), lambda: load_basis(self.root / files[name], self.mesh))

    def system(self, variant: str) -> RBSystemFE:
        path = self.root / system_file(variant)
        if system_file(variant) not in self.manifest.get("files", {}):
            raise IncompleteBundle(f"bundle has no reduced system for variant {variant!r}", path=str(path))
        return self._load(("system", variant), lambda: load_system(path))

    @property
    def operators(self) -> ReducedOperators:
        return self._load("ops", lambda: load_operators(self.root / OPERATORS_FILE))

    @property
    def rbf(self) -> RBFModel:
        return self._load("rbf", lambda: load_rbf(self.root / RBF_FILE))

    def required_files(self, variant: str) -> list[str]:
        if self.branch == CAVITY:
            v = FE_FILES["velocity+sup"] if variant.endswith("+sup") else FE_FILES["velocity"]
            return [MESH_FILE, SNAPSHOT_FILE, v, FE_FILES["pressure"], system_file(variant)]
        need = [MESH_FILE, SNAPSHOT_FILE, OPERATORS_FILE, FV_FILES["velocity"], FV_FILES["pressure"],
                FV_FILES["supremizer"]]
        if self.config.fv.closure:
            need.append(FV_FILES["eddy-viscosity"])
        return need + ([RBF_FILE] if variant == "rbf" else [])

    def require(self, variant: str) -> None:
        if variant not in self.config.variants:
            raise IncompleteBundle(f"variant {variant!r} is not available in this {self.branch} bundle "
                                   f"(have: {', '.join(self.config.variants)})")
        self.verify(self.required_files(variant))

    def timings(self) -> dict:
        p = self.root / TIMINGS
        return json.loads(p.read_text()) if p.is_file() else {}

    def reports_dir(self) -> Path:
        d = self.root / REPORTS
        d.mkdir(exist_ok=True)
        return d


__all__ = ["Bundle", "BACKSTEP", "CAVITY"]
