"""Flat ``key = value`` study configuration.

Keys are namespaced (``study.*``, ``fe.*``, ``fv.*``, ``rb.*``, ``pod.*``,
``rbf.*``, ``rom.*``) plus the top-level ``box`` and ``sampling``. Lines
starting with ``#`` are comments. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import H1, L2, BackstepGeometry, ParameterBox, ParameterSample
from ..errors import InvalidConfig
from ..fom_fe import FESolverConfig, StabilizationConfig
from ..fom_fv import FVConfig
from ..rom_fe import VARIANTS as FE_VARIANTS, NewtonSettings, RBOptions

CAVITY, BACKSTEP = "cavity-fe", "backstep-fv"
FV_VARIANTS = ("rbf", "plain")

DEFAULTS = {
    CAVITY: {"box": "100:500", "sampling": "51"},
    BACKSTEP: {"box": "0.18:0.3,0:30", "sampling": "5,4"},
}

_BOOL = {"1": True, "true": True, "on": True, "yes": True, "0": False, "false": False, "off": False, "no": False}

KNOWN = {
    "study.branch", "study.name", "study.output", "study.workers", "study.seed", "box", "sampling",
    "fe.delta", "fe.gamma", "fe.picard_tol", "fe.picard_max", "fe.mesh_n", "fe.relax",
    "fv.nu", "fv.resolution", "fv.relax_u", "fv.relax_p", "fv.relax_nut", "fv.tol", "fv.max_outer", "fv.blend",
    "fv.closure", "fv.workers", "fv.lifting", "fv.tau", "fv.u_ref", "fv.newton_tol",
    "fv.geometry.step_height", "fv.geometry.inlet_height", "fv.geometry.upstream_length",
    "fv.geometry.downstream_length",
    "rb.method", "rb.n_max", "rb.tol", "rb.greedy_driver", "rb.variants", "rb.supremizer_ip",
    "pod.n_u", "pod.n_p", "pod.n_sup", "pod.n_nut", "pod.energy", "pod.supremizer_ip",
    "rbf.eps", "rbf.ridge", "rbf.auto_ridge",
    "rom.newton_tol", "rom.newton_max", "rom.continuation",
}


def parse_text(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise InvalidConfig(f"line {lineno}: empty key")
        if key in out:
            raise InvalidConfig(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _num(raw: dict, key: str, default, cast=float):
    if key not in raw:
        return default
    try:
        return cast(raw[key])
    except ValueError:
        raise InvalidConfig(f"{key}: cannot parse {raw[key]!r} as {cast.__name__}") from None


def _flag(raw: dict, key: str, default: bool) -> bool:
    if key not in raw:
        return default
    v = raw[key].lower()
    if v not in _BOOL:
        raise InvalidConfig(f"{key}: expected on/off, got {raw[key]!r}")
    return _BOOL[v]


def parse_box(text: str) -> ParameterBox:
    lo, hi = [], []
    try:
        for part in text.split(","):
            a, b = part.split(":")
            lo.append(float(a))
            hi.append(float(b))
    except ValueError:
        raise InvalidConfig(f"box must look like lo:hi[,lo:hi], got {text!r}") from None
    return ParameterBox(tuple(lo), tuple(hi))


def parse_counts(text: str) -> tuple[int, ...]:
    try:
        counts = tuple(int(c) for c in text.split(","))
    except ValueError:
        raise InvalidConfig(f"sampling must be comma-separated integers, got {text!r}") from None
    if any(c < 1 for c in counts):
        raise InvalidConfig("sampling counts must be positive")
    return counts


def parse_mu(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise InvalidConfig(f"cannot parse parameter {text!r}") from None


@dataclass(frozen=True)
class PODCounts:
    n_u: int | None = 7
    n_p: int | None = 7
    n_sup: int | None = 7
    n_nut: int | None = 7
    energy: float | None = None


@dataclass(frozen=True)
class RBConfig:
    method: str = "greedy"
    n_max: int = 8
    tol: float = 1e-6
    greedy_driver: str = "offline-online+sup"
    variants: tuple[str, ...] = FE_VARIANTS
    supremizer_ip: str = H1


@dataclass(frozen=True)
class RBFConfig:
    eps: float | None = None
    ridge: float = 0.0
    auto_ridge: bool = False


@dataclass(frozen=True)
class StudyConfig:
    branch: str
    box: ParameterBox
    sampling: tuple[int, ...]
    name: str = "study"
    output: str | None = None
    workers: int = 1
    fe_mesh_n: int = 24
    stab: StabilizationConfig = StabilizationConfig()
    fe_solver: FESolverConfig = FESolverConfig()
    fv: FVConfig = FVConfig()
    fv_resolution: int = 4
    geometry: BackstepGeometry = BackstepGeometry()
    lifting: str = "linear"
    rb: RBConfig = RBConfig()
    pod: PODCounts = PODCounts()
    rbf: RBFConfig = RBFConfig()
    newton: NewtonSettings = NewtonSettings()
    continuation: bool = True
    raw: dict = field(default_factory=dict, compare=False)

    def samples(self) -> list[ParameterSample]:
        s = self.box.grid(self.sampling)
        if len({p.mu for p in s}) != len(s):
            raise InvalidConfig("sampling plan produced duplicate samples")
        return s

    @property
    def variants(self) -> tuple[str, ...]:
        if self.branch == CAVITY:
            return self.rb.variants
        return FV_VARIANTS if self.fv.closure else ("plain",)

    def canonical(self) -> str:
        return "\n".join(f"{k} = {self.raw[k]}" for k in sorted(self.raw)) + "\n"

    def hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()


def build_config(raw: dict[str, str]) -> StudyConfig:
    unknown = sorted(set(raw) - KNOWN)
    if unknown:
        raise InvalidConfig(f"unknown config keys: {', '.join(unknown)}")
    branch = raw.get("study.branch")
    if branch not in (CAVITY, BACKSTEP):
        raise InvalidConfig(f"study.branch must be {CAVITY!r} or {BACKSTEP!r}, got {branch!r}")
    box = parse_box(raw.get("box", DEFAULTS[branch]["box"]))
    sampling = parse_counts(raw.get("sampling", DEFAULTS[branch]["sampling"]))
    want_dim = 1 if branch == CAVITY else 2
    if box.dim != want_dim or len(sampling) != want_dim:
        raise InvalidConfig(f"{branch} needs a {want_dim}-dimensional box and sampling plan")

    stab = StabilizationConfig(gamma=_num(raw, "fe.gamma", 0, int), delta=_num(raw, "fe.delta", 1.0))
    fe_solver = FESolverConfig(
        picard_tol=_num(raw, "fe.picard_tol", 1e-9), picard_max=_num(raw, "fe.picard_max", 200, int),
        relax=_num(raw, "fe.relax", 1.0),
    )
    if not 0 < fe_solver.relax <= 1:
        raise InvalidConfig("fe.relax must lie in (0, 1]")
    mesh_n = _num(raw, "fe.mesh_n", 24, int)
    if mesh_n < 2:
        raise InvalidConfig("fe.mesh_n must be at least 2")

    tau = raw.get("fv.tau", "auto")
    fv = FVConfig(
        nu=_num(raw, "fv.nu", 2e-2), closure=_flag(raw, "fv.closure", True), blend=_num(raw, "fv.blend", 1.0),
        relax_u=_num(raw, "fv.relax_u", 0.7), relax_p=_num(raw, "fv.relax_p", 0.3),
        relax_nut=_num(raw, "fv.relax_nut", 0.5), tol=_num(raw, "fv.tol", 1e-6),
        max_iter=_num(raw, "fv.max_outer", 3000, int), newton_tol=_num(raw, "fv.newton_tol", 1e-12),
        tau=None if tau == "auto" else _num(raw, "fv.tau", None), u_ref=_num(raw, "fv.u_ref", 0.25),
    )
    g0 = BackstepGeometry()
    geometry = BackstepGeometry(
        step_height=_num(raw, "fv.geometry.step_height", g0.step_height),
        inlet_height=_num(raw, "fv.geometry.inlet_height", g0.inlet_height),
        upstream_length=_num(raw, "fv.geometry.upstream_length", g0.upstream_length),
        downstream_length=_num(raw, "fv.geometry.downstream_length", g0.downstream_length),
    )
    geometry.validate()
    resolution = _num(raw, "fv.resolution", 4, int)
    if resolution < 4:
        raise InvalidConfig("fv.resolution must be at least 4")
    lifting = raw.get("fv.lifting", "linear")
    if lifting not in ("linear", "steady"):
        raise InvalidConfig("fv.lifting must be 'linear' or 'steady'")

    variants = tuple(v.strip() for v in raw.get("rb.variants", ",".join(FE_VARIANTS)).split(","))
    for v in (*variants, raw.get("rb.greedy_driver", "offline-online+sup")):
        if v not in FE_VARIANTS:
            raise InvalidConfig(f"unknown RB variant {v!r}; choose from {', '.join(FE_VARIANTS)}")
    rb = RBConfig(
        method=raw.get("rb.method", "greedy"), n_max=_num(raw, "rb.n_max", 8, int), tol=_num(raw, "rb.tol", 1e-6),
        greedy_driver=raw.get("rb.greedy_driver", "offline-online+sup"), variants=variants,
        supremizer_ip=raw.get("rb.supremizer_ip", H1),
    )
    if rb.method not in ("greedy", "pod"):
        raise InvalidConfig("rb.method must be 'greedy' or 'pod'")
    if rb.n_max < 1:
        raise InvalidConfig("rb.n_max must be positive")

    def count(key):
        v = raw.get(key, "7")
        return None if v == "all" else _num(raw, key, 7, int)

    energy = _num(raw, "pod.energy", None)
    if energy is not None and not 0 < energy <= 1:
        raise InvalidConfig("pod.energy must lie in (0, 1]")
    pod = PODCounts(count("pod.n_u"), count("pod.n_p"), count("pod.n_sup"), count("pod.n_nut"), energy)
    for ip_key in ("rb.supremizer_ip", "pod.supremizer_ip"):
        if raw.get(ip_key, H1) not in (H1, L2):
            raise InvalidConfig(f"{ip_key} must be {H1!r} or {L2!r}")

    rbf_eps = raw.get("rbf.eps", "auto")
    rbf = RBFConfig(None if rbf_eps == "auto" else _num(raw, "rbf.eps", None), _num(raw, "rbf.ridge", 0.0),
                    _flag(raw, "rbf.auto_ridge", False))
    if rbf.eps is not None and rbf.eps <= 0:
        raise InvalidConfig("rbf.eps must be positive")
    newton = NewtonSettings(_num(raw, "rom.newton_tol", 1e-10), _num(raw, "rom.newton_max", 100, int))
    workers = _num(raw, "fv.workers", _num(raw, "study.workers", 1, int), int)
    if workers < 1:
        raise InvalidConfig("workers must be at least 1")

    cfg = StudyConfig(
        branch=branch, box=box, sampling=sampling, name=raw.get("study.name", "study"),
        output=raw.get("study.output"), workers=workers, fe_mesh_n=mesh_n, stab=stab, fe_solver=fe_solver, fv=fv,
        fv_resolution=resolution, geometry=geometry, lifting=lifting, rb=rb, pod=pod, rbf=rbf, newton=newton,
        continuation=_flag(raw, "rom.continuation", True), raw=dict(raw),
    )
    cfg.samples()
    return cfg


def load_config(path: str | Path) -> StudyConfig:
    p = Path(path)
    if not p.is_file():
        raise InvalidConfig(f"config file {p} not found")
    return build_config(parse_text(p.read_text()))


def config_from_text(text: str) -> StudyConfig:
    return build_config(parse_text(text))


# ---- holdout plans -----------------------------------------------------------

@dataclass(frozen=True)
class HoldoutPlan:
    points: tuple[tuple[float, ...], ...] = ()
    maxmin: int = 0
    resolution: int = 41
    n_values: tuple[int, ...] = ()
    variants: tuple[str, ...] = ()


PLAN_KEYS = {"plan.points", "plan.maxmin", "plan.resolution", "plan.n_values", "plan.variants"}


def build_plan(raw: dict[str, str]) -> HoldoutPlan:
    unknown = sorted(set(raw) - PLAN_KEYS)
    if unknown:
        raise InvalidConfig(f"unknown plan keys: {', '.join(unknown)}")
    pts = tuple(parse_mu(p.strip()) for p in raw.get("plan.points", "").split(";") if p.strip())
    n_values = tuple(int(v) for v in raw["plan.n_values"].split(",")) if "plan.n_values" in raw else ()
    variants = tuple(v.strip() for v in raw["plan.variants"].split(",")) if "plan.variants" in raw else ()
    plan = HoldoutPlan(pts, _num(raw, "plan.maxmin", 0, int), _num(raw, "plan.resolution", 41, int), n_values, variants)
    if not plan.points and plan.maxmin <= 0:
        raise InvalidConfig("holdout plan needs plan.points or plan.maxmin")
    return plan


def load_plan(path: str | Path) -> HoldoutPlan:
    p = Path(path)
    if not p.is_file():
        raise InvalidConfig(f"plan file {p} not found")
    return build_plan(parse_text(p.read_text()))


def plan_from_text(text: str) -> HoldoutPlan:
    return build_plan(parse_text(text))


def as_array(samples: list[ParameterSample]) -> np.ndarray:
    return np.array([s.mu for s in samples], dtype=float)
