"""Declarative experiment configs: schema, validation, construction."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigInvalid
from .geometry import (Disk, FlatProduct, GridMode, GridSpec, Interval,
                       RadialProfile, WitschBump)

SCHEMA_VERSION = 1

KINDS = ("domain-audit", "norms", "resolvent-sweep", "spectrum", "evolve",
         "flat-dispersion", "duhamel")

_TOP_KEYS = {"schema_version", "kind", "profile", "grid", "potential",
             "seed", "tolerances", "z_grid", "sources", "window", "time",
             "weights", "sector", "thresholds", "label"}


@dataclass
class ExperimentConfig:
    kind: str
    profile: dict
    grid: dict
    seed: int = 0
    potential: dict | None = None
    z_grid: dict | None = None
    sources: dict | None = None
    window: list | None = None
    time: dict | None = None
    weights: dict | None = None
    sector: dict | None = None
    tolerances: dict = dc_field(default_factory=dict)
    thresholds: dict = dc_field(default_factory=dict)
    label: str = ""
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        out = {"schema_version": self.schema_version, "kind": self.kind,
               "profile": self.profile, "grid": self.grid, "seed": self.seed,
               "label": self.label}
        for key in ("potential", "z_grid", "sources", "window", "time",
                    "weights", "sector"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        if self.tolerances:
            out["tolerances"] = self.tolerances
        if self.thresholds:
            out["thresholds"] = self.thresholds
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _err(issues, path, msg):
    issues.append((path, msg))


def _check_keys(issues, path, data, allowed):
    for k in data:
        if k not in allowed:
            _err(issues, f"{path}.{k}" if path else k, "unknown key")


def validate_dict(raw: dict) -> tuple[ExperimentConfig | None, list]:
    """Full schema, range, and cross-field validation; returns (cfg, issues)."""
    issues: list = []
    if not isinstance(raw, dict):
        return None, [("", "config must be a JSON object")]
    _check_keys(issues, "", raw, _TOP_KEYS)
    kind = raw.get("kind")
    if kind not in KINDS:
        _err(issues, "kind", f"must be one of {', '.join(KINDS)}")
    if raw.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        _err(issues, "schema_version", f"expected {SCHEMA_VERSION}")

    grid = raw.get("grid")
    if not isinstance(grid, dict):
        _err(issues, "grid", "required object")
        grid = {}
    _check_keys(issues, "grid", grid,
                {"n", "m", "mode", "extent_x", "extent_y", "h_x", "h_y"})
    n = grid.get("n", 3)
    m = grid.get("m", 1)
    if not isinstance(n, int) or n < 3:
        _err(issues, "grid.n", "n must be >= 3")
    if not isinstance(m, int) or m < 1:
        _err(issues, "grid.m", "m must be >= 1")
    mode = grid.get("mode", "radial_x")
    if mode not in [g.value for g in GridMode]:
        _err(issues, "grid.mode", f"unknown mode {mode!r}")
    for key in ("extent_x", "extent_y", "h_x", "h_y"):
        v = grid.get(key)
        if v is None or not isinstance(v, (int, float)) or v <= 0:
            _err(issues, f"grid.{key}", "must be a positive number")

    prof = raw.get("profile")
    if not isinstance(prof, dict):
        _err(issues, "profile", "required object")
        prof = {}
    _check_keys(issues, "profile", prof,
                {"type", "cross_section", "length", "radius", "amplitude",
                 "bump_radius", "g", "flat_tail_radius", "max_scale"})
    ptype = prof.get("type")
    if ptype not in ("flat", "witsch", "expanding_step", "bulge", "tanh"):
        _err(issues, "profile.type",
             "must be one of flat, witsch, expanding_step, bulge, tanh")

    pot = raw.get("potential")
    if pot is not None:
        _check_keys(issues, "potential", pot, {"type", "c", "cutoff"})
        if pot.get("type") not in ("zero", "inverse_r"):
            _err(issues, "potential.type", "must be zero or inverse_r")
        if pot.get("c", 0.0) < 0:
            _err(issues, "potential.c", "coupling must be >= 0")

    if kind == "resolvent-sweep":
        zg = raw.get("z_grid")
        if not isinstance(zg, dict) or not zg.get("lambdas"):
            _err(issues, "z_grid", "resolvent-sweep needs a nonempty z grid")
        else:
            _check_keys(issues, "z_grid", zg, {"lambdas", "eps", "eps_floor"})
            if not zg.get("eps"):
                _err(issues, "z_grid.eps", "nonempty eps ladder required")
            elif any(e <= 0 for e in zg["eps"]):
                _err(issues, "z_grid.eps", "eps values must be positive")
    if kind in ("evolve", "duhamel", "flat-dispersion"):
        tm = raw.get("time")
        if not isinstance(tm, dict):
            _err(issues, "time", f"{kind} needs a time section")
        else:
            _check_keys(issues, "time", tm,
                        {"T", "dt", "store_every", "flow", "mu", "t_samples"})
            if tm.get("dt", 1.0) <= 0:
                _err(issues, "time.dt", "dt must be positive")
            if tm.get("T", 1.0) <= 0:
                _err(issues, "time.T", "T must be positive")
            if tm.get("flow", "schrodinger") not in ("schrodinger", "wave"):
                _err(issues, "time.flow", "flow must be schrodinger or wave")
    if kind == "spectrum" and not raw.get("window"):
        _err(issues, "window", "spectrum needs a scan window [a, b]")
    if raw.get("window") is not None:
        w = raw["window"]
        if (not isinstance(w, (list, tuple)) or len(w) != 2
                or w[0] >= w[1] or w[0] < 0):
            _err(issues, "window", "window must be [a, b] with 0 <= a < b")
    wts = raw.get("weights")
    if wts is not None:
        _check_keys(issues, "weights", wts, {"eps", "eps_check"})
        if wts.get("eps", 0.1) <= 0:
            _err(issues, "weights.eps", "weight exponent eps must be > 0")

    # cross-field: Strichartz measurements need a flat tail
    if kind in ("evolve",) and raw.get("thresholds", {}).get("strichartz"):
        if ptype == "tanh":
            _err(issues, "profile.type",
                 "Strichartz measurement requires a flat-tail profile")
    if kind == "flat-dispersion" and ptype != "flat":
        _err(issues, "profile.type", "flat-dispersion runs on the flat product")

    if not isinstance(raw.get("seed", 0), int):
        _err(issues, "seed", "seed must be an integer")

    if issues:
        return None, issues
    cfg = ExperimentConfig(
        kind=kind, profile=prof, grid=grid, seed=raw.get("seed", 0),
        potential=pot, z_grid=raw.get("z_grid"), sources=raw.get("sources"),
        window=raw.get("window"), time=raw.get("time"),
        weights=raw.get("weights"), sector=raw.get("sector"),
        tolerances=raw.get("tolerances", {}),
        thresholds=raw.get("thresholds", {}), label=raw.get("label", ""))
    return cfg, []


def validate_config(path) -> ExperimentConfig:
    """Load and validate a config file; raises ConfigInvalid with all issues."""
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigInvalid([("", f"not valid JSON: {exc}")])
    cfg, issues = validate_dict(raw)
    if issues:
        raise ConfigInvalid(issues)
    return cfg


# ---------------------------------------------------------------------------
# construction helpers shared by the experiment runners
# ---------------------------------------------------------------------------

def smoothstep():
    """C^inf monotone step: 0 below 0, exactly 1 above 1."""
    xs = np.linspace(0.0, 1.0, 4097)
    with np.errstate(divide="ignore", over="ignore"):
        phi = np.where((xs > 0) & (xs < 1),
                       np.exp(-1.0 / np.clip(xs * (1 - xs), 1e-300, None)), 0.0)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (phi[1:] + phi[:-1]))])
    cum /= cum[-1]

    def step(s):
        s = np.asarray(s, dtype=float)
        return np.interp(np.clip(s, 0.0, 1.0), xs, cum)
    return step


def profile_from_config(prof: dict):
    ptype = prof["type"]
    csdata = prof.get("cross_section", {"type": "interval", "length": math.pi})
    if csdata.get("type", "interval") == "interval":
        cs = Interval(float(csdata.get("length", math.pi)))
    else:
        cs = Disk(float(csdata.get("radius", 1.0)))
    if ptype == "flat":
        return FlatProduct(cs)
    if ptype == "witsch":
        return WitschBump(float(prof.get("amplitude", 0.5)),
                          float(prof.get("bump_radius", 2.0)), cs)
    if ptype == "bulge":
        a = float(prof.get("amplitude", 0.3))
        b = float(prof.get("bump_radius", 2.0))
        wb = WitschBump(a, b, cs)
        return RadialProfile(wb.scale, cs, dg=wb.scale_derivative,
                             declared_max_scale=1.0 + a,
                             declared_perturbation_radius=b)
    if ptype == "expanding_step":
        a = float(prof.get("amplitude", 0.3))
        b = float(prof.get("bump_radius", 4.0))
        step = smoothstep()

        def g(r):
            return 1.0 + a * step(np.asarray(r, float) / b)

        def dg(r):
            r = np.asarray(r, float)
            d = 1e-6
            return (g(r + d) - g(np.maximum(r - d, 0.0))) / (d + np.minimum(r, d))
        return RadialProfile(g, cs, dg=dg, declared_max_scale=1.0 + a,
                             declared_perturbation_radius=b)
    if ptype == "tanh":
        a = float(prof.get("amplitude", 0.5))

        def g(r):
            return 1.0 + a * np.tanh(np.asarray(r, float))
        return RadialProfile(g, cs, declared_max_scale=1.0 + a)
    raise ConfigInvalid([("profile.type", f"unknown profile {ptype!r}")])


def gridspec_from_config(grid: dict) -> GridSpec:
    return GridSpec(int(grid.get("n", 3)), int(grid.get("m", 1)),
                    GridMode(grid.get("mode", "radial_x")),
                    float(grid["extent_x"]), float(grid["extent_y"]),
                    float(grid["h_x"]), float(grid["h_y"]))
