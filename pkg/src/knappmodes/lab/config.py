"""Experiment configuration files.

Grammar (INI sections of ``key = value`` lines, ``#`` or ``;`` comments)::

    [manifold]
    preset = klein_bottle      # sphere | rp_n | lens | quaternion | torus | klein_bottle | custom
    n = 2                      # sphere, rp_n, torus, custom
    p = 3                      # lens
    q = 1                      # lens
    basis = 1 1; 0 1           # torus / custom flat: rows of B, ';' between rows
    kind = flat                # custom only: flat | sphere
    generator.1 = -1 0; 0 1 | 0 0.5   # custom: matrix rows | translation (flat only)
    c0 = 0.25                  # flat: bound on |x0'|

    [sweep]
    k = 50, 100, 200           # explicit list, or start:stop:step (stop inclusive)
    ell = 10:100:10            # sphere quotients: k = ell * m
    delta = log                # log | constant(x) | power(eps)
    p = 1, 2, 4
    R = 1                      # tube multipliers; 'c1' means the axis constant (flat)
    tol = 1e-6
    rho = 0.5
    certificates = window, defect

    [target.ratio]             # optional, any number of these
    x = lambda_delta
    y = norm_p2 / norm_p1
    value = 0.25
    tol = 0.05

    [output]
    dir = results
    name = sweep
"""
from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ConfigError
from ..geometry import make_flat_quotient, make_sphere_quotient, rigid_motion
from .. import presets

SPHERE_KINDS = {"sphere", "rp_n", "lens", "quaternion"}
FLAT_KINDS = {"torus", "klein_bottle"}
CERTIFICATES = {"window", "defect", "separation", "offdiag", "status"}


@dataclass(frozen=True)
class Target:
    name: str
    x: str
    y: str
    value: float
    tol: float


@dataclass(frozen=True)
class ExperimentConfig:
    manifold: dict
    ks: tuple = ()
    ells: tuple = ()
    delta: str = "log"
    ps: tuple = (1.0, 2.0, 4.0)
    radii: tuple = ()
    tol: float = 1e-6
    rho: float = 0.5
    certificates: tuple = ("window", "defect")
    targets: tuple = ()
    out_dir: str = "results"
    name: str = "sweep"
    source: str = field(default="", compare=False)

    @property
    def family(self):
        preset = self.manifold["preset"]
        if preset == "custom":
            return self.manifold["kind"]
        return "sphere" if preset in SPHERE_KINDS else "flat"

    def row_key(self, index, radius):
        """Content hash of everything that determines one output row."""
        payload = {
            "manifold": self.manifold,
            "index": index,
            "radius": radius,
            "delta": self.delta,
            "ps": list(self.ps),
            "tol": self.tol,
            "rho": self.rho,
            "version": 1,
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def parse_range(text):
    """``"a, b, c"`` or ``"start:stop:step"`` (stop inclusive) into a tuple of ints."""
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        parts = [int(v) for v in text.split(":")]
        if len(parts) == 2:
            parts.append(1)
        if len(parts) != 3 or parts[2] <= 0:
            raise ConfigError(f"bad range {text!r}")
        return tuple(range(parts[0], parts[1] + 1, parts[2]))
    return tuple(int(v) for v in re.split(r"[,\s]+", text) if v)


def parse_floats(text):
    return tuple(float(v) for v in re.split(r"[,\s]+", text.strip()) if v)


def parse_matrix(text):
    rows = [r for r in text.split(";") if r.strip()]
    try:
        M = np.array([[float(v) for v in r.split()] for r in rows])
    except ValueError as exc:
        raise ConfigError(f"bad matrix {text!r}") from exc
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ConfigError(f"matrix must be square: {text!r}")
    return M


def parse_delta(text):
    t = text.strip().lower().replace(" ", "")
    if t == "log" or re.fullmatch(r"(constant|power)\([0-9.eE+-]+\)", t):
        return t
    raise ConfigError(f"delta rule must be log, constant(x) or power(eps), got {text!r}")


def load_config(path):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    cp.read_string(text)
    return config_from_parser(cp, source=str(path))


def config_from_parser(cp, source=""):
    if not cp.has_section("manifold"):
        raise ConfigError("missing [manifold] section")
    man = {k: v.strip() for k, v in cp.items("manifold")}
    preset = man.get("preset", "")
    if preset not in SPHERE_KINDS | FLAT_KINDS | {"custom"}:
        raise ConfigError(f"unknown preset {preset!r}")
    if preset == "custom" and man.get("kind") not in ("flat", "sphere"):
        raise ConfigError("custom manifolds need kind = flat or sphere")
    sw = dict(cp.items("sweep")) if cp.has_section("sweep") else {}
    ks = parse_range(sw.get("k", ""))
    ells = parse_range(sw.get("ell", ""))
    if not ks and not ells:
        raise ConfigError("the sweep needs a nonempty k or ell range")
    if ks and ells:
        raise ConfigError("give either k or ell, not both")
    if any(v < 1 for v in ks + ells):
        raise ConfigError("k and ell must be positive")
    radii = tuple(r.strip() for r in sw.get("r", "").split(",") if r.strip())
    for r in radii:
        if r != "c1":
            try:
                float(r)
            except ValueError as exc:
                raise ConfigError(f"bad tube multiplier {r!r}") from exc
    certs = tuple(c.strip() for c in sw.get("certificates", "window, defect").split(",") if c.strip())
    unknown = set(certs) - CERTIFICATES
    if unknown:
        raise ConfigError(f"unknown certificates {sorted(unknown)}")
    targets = []
    for sec in cp.sections():
        if sec.startswith("target."):
            d = dict(cp.items(sec))
            try:
                targets.append(Target(sec.split(".", 1)[1], d["x"].strip(), d["y"].strip(),
                                      float(d["value"]), float(d.get("tol", "0.05"))))
            except KeyError as exc:
                raise ConfigError(f"[{sec}] is missing {exc}") from exc
    out = dict(cp.items("output")) if cp.has_section("output") else {}
    try:
        ps = parse_floats(sw.get("p", "1, 2, 4"))
        tol = float(sw.get("tol", "1e-6"))
        rho = float(sw.get("rho", "0.5"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return ExperimentConfig(manifold=man, ks=ks, ells=ells, delta=parse_delta(sw.get("delta", "log")),
                            ps=ps, radii=radii, tol=tol, rho=rho, certificates=certs,
                            targets=tuple(targets), out_dir=out.get("dir", "results"),
                            name=out.get("name", "sweep"), source=source)


def build_quotient(manifold):
    """Expand a ``[manifold]`` section into validated covering data."""
    preset = manifold["preset"]
    n = int(manifold.get("n", "2"))
    if preset == "sphere":
        return presets.sphere(n)
    if preset == "rp_n":
        return presets.rp_n(n)
    if preset == "lens":
        return presets.lens(int(manifold.get("p", "3")), int(manifold.get("q", "1")))
    if preset == "quaternion":
        return presets.quaternion()
    if preset == "torus":
        B = parse_matrix(manifold["basis"]) if "basis" in manifold else None
        return presets.torus(B, n=n)
    if preset == "klein_bottle":
        return presets.klein_bottle()
    gens = [manifold[k] for k in sorted(manifold) if k.startswith("generator.")]
    if manifold["kind"] == "sphere":
        return make_sphere_quotient(n, [parse_matrix(g) for g in gens], name="custom")
    B = parse_matrix(manifold["basis"])
    motions = []
    for g in gens:
        if "|" not in g:
            raise ConfigError(f"flat generator needs 'matrix | translation': {g!r}")
        m, j = g.split("|", 1)
        motions.append(rigid_motion(parse_matrix(m), parse_floats(j)))
    return make_flat_quotient(B, motions, name="custom")


def config_dict(cfg):
    d = asdict(cfg)
    d.pop("source", None)
    return d
