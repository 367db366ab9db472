"""Experiment runners: config in, deterministic artifact bundle out."""
from __future__ import annotations

import json
import os
import shutil
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import reporting
from .config import (ExperimentConfig, gridspec_from_config,
                     profile_from_config, smoothstep)
from .errors import ConfigInvalid, NoFlatTail
from .fields import GridFunction, bump_source, random_field
from .geometry import (GridMode, Interval, audit_flat_tail,
                       audit_repulsivity, build_domain)
from .mcnorms import InequalityId, check_inequality
from .operators import (PotentialField, RadialPotential, assemble_hamiltonian,
                        assemble_sector, audit_potential)
from .resolvent import sweep_uniformity
from .spectral import (classify_embedded, cross_section_modes,
                       essential_threshold, scan_eigenvalues)
from .evolution import (evolve_schrodinger, evolve_wave,
                        flat_reference_propagator, smoothing_trace,
                        strichartz_norm)


@dataclass
class ResultBundle:
    path: Path
    verdicts: dict
    artifacts: list

    @property
    def passed(self) -> bool:
        return all(v.get("passed", False) for v in self.verdicts.values())


def _potential_from_config(cfg, domain):
    pot = cfg.potential or {"type": "zero"}
    if pot["type"] == "zero":
        return PotentialField.zero(domain)
    c = float(pot.get("c", 1.0))
    cutoff = pot.get("cutoff")
    if cutoff:
        step = smoothstep()

        def v(r):
            return c / np.maximum(r, 1e-12) * (1.0 - step(np.asarray(r) / cutoff))
    else:
        def v(r):
            return c / np.maximum(r, 1e-12)
    return PotentialField.from_radial(domain, RadialPotential(v, label=pot["type"]))


def _sources_from_config(cfg, domain):
    src = cfg.sources or {}
    count = int(src.get("count", 8))
    rng = np.random.default_rng(cfg.seed)
    lo, hi = src.get("center_range", (0.5, 3.0))
    wlo, whi = src.get("width_range", (0.5, 1.5))
    n_y = int(src.get("y_modes", 3))
    out = []
    for _ in range(count):
        r0 = rng.uniform(lo, hi)
        w = rng.uniform(wlo, whi)
        coeffs = rng.standard_normal(n_y)
        out.append(bump_source(domain, r0, w, y_coeffs=coeffs))
    return out


def run_experiment(config: ExperimentConfig, out_dir, jobs: int = 1,
                   extent_doubling: bool = False) -> ResultBundle:
    """Dispatch one experiment and write its bundle atomically.

    The bundle directory holds the config echo (with hash), CSV/JSON
    artifacts, SVG plots, a verdicts.json, and wall-clock metadata in a
    plain-text sidecar so the delimited artifacts stay byte-reproducible.
    """
    runner = {
        "domain-audit": _run_domain_audit,
        "norms": _run_norms,
        "resolvent-sweep": _run_sweep,
        "spectrum": _run_spectrum,
        "evolve": _run_evolve,
        "flat-dispersion": _run_flat_dispersion,
        "duhamel": _run_duhamel,
    }.get(config.kind)
    if runner is None:
        raise ConfigInvalid([("kind", f"unknown kind {config.kind!r}")])
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    tmp = Path(tempfile.mkdtemp(prefix=".bundle-", dir=out_dir.parent))
    try:
        verdicts, artifacts = runner(config, tmp, jobs, extent_doubling)
        echo = config.to_dict()
        reporting.write_json(tmp / "config.json", echo)
        reporting.write_json(tmp / "verdicts.json",
                             {"label": config.label or config.kind,
                              "config_digest": config.digest(),
                              "verdicts": verdicts})
        (tmp / "run_meta.txt").write_text(
            f"wall_clock_seconds {time.time() - t0:.3f}\n")
        if out_dir.exists():
            shutil.rmtree(out_dir)
        os.replace(tmp, out_dir)
    except Exception:
        partial = out_dir.with_name(out_dir.name + ".partial")
        shutil.rmtree(partial, ignore_errors=True)
        try:
            os.replace(tmp, partial)     # completed files stay inspectable
        except OSError:
            shutil.rmtree(tmp, ignore_errors=True)
        raise
    return ResultBundle(out_dir, verdicts, artifacts)


def _domain_of(cfg, doubled: bool = False):
    spec = gridspec_from_config(cfg.grid)
    if doubled:
        spec = spec.doubled()
    profile = profile_from_config(cfg.profile)
    return build_domain(profile, spec), profile, spec


def _verdict(value, passed, note="") -> dict:
    out = {"value": value, "passed": bool(passed)}
    if note:
        out["note"] = note
    return out


# ---------------------------------------------------------------------------

def _run_domain_audit(cfg, out, jobs, doubling):
    dom, profile, spec = _domain_of(cfg)
    rep = audit_repulsivity(dom)
    verdicts = {"repulsive": _verdict(rep.min_slack, True,
                                      f"verdict={rep.verdict}")}
    rows = [("min_slack", rep.min_slack), ("violating_fraction",
            rep.violating_fraction), ("verdict", rep.verdict),
            ("n_samples", rep.n_samples)]
    expect = cfg.thresholds.get("expect_repulsive")
    if expect is not None:
        verdicts["repulsive"] = _verdict(rep.min_slack,
                                         rep.verdict == bool(expect))
    try:
        ft = audit_flat_tail(dom)
        rows += [("flat_tail_M", ft.M), ("flat_tail_holds", ft.holds)]
        verdicts["flat_tail"] = _verdict(ft.M, True)
    except NoFlatTail as exc:
        rows += [("flat_tail_M", float("nan")), ("flat_tail_holds", False)]
        verdicts["flat_tail"] = _verdict(None,
                                         cfg.thresholds.get("expect_flat_tail") is False,
                                         note=str(exc))
    if cfg.potential:
        V = _potential_from_config(cfg, dom)
        pr = audit_potential(V, dom)
        rows += [("potential_nonneg", pr.nonneg),
                 ("potential_radial_slack", pr.min_slack)]
        verdicts["potential"] = _verdict(pr.min_slack,
                                         pr.nonneg and pr.radial_repulsive)
    reporting.write_csv(out / "audit.csv", ("quantity", "value"), rows)
    slacks = dom.boundary.slack
    reporting.write_csv(out / "boundary_slack.csv", ("r", "slack"),
                        zip(dom.boundary.point_r, slacks))
    reporting.plot_wall(profile, spec.extent_x, out / "wall.svg")
    return verdicts, ["audit.csv", "boundary_slack.csv", "wall.svg"]


def _run_norms(cfg, out, jobs, doubling):
    dom, _, _ = _domain_of(cfg)
    rng = np.random.default_rng(cfg.seed)
    trials = int((cfg.sources or {}).get("count", 200))
    margin_tol = float(cfg.tolerances.get("margin_rel", 1e-10))
    rows = []
    worst = np.inf
    for trial in range(trials):
        f = random_field(dom, rng)
        g = random_field(dom, rng)
        h = random_field(dom, rng)
        R = float(2.0 ** rng.integers(-2, 3))
        s = float(rng.uniform(0.5, 3.0))
        checks = [
            check_inequality(InequalityId.MCIN1, f, g),
            check_inequality(InequalityId.MCIN2, f, g, R=R),
            check_inequality(InequalityId.MCIN3, f, g, R=R),
            check_inequality(InequalityId.MCIN4, f, g, h),
            check_inequality(InequalityId.COMPARNORM, f),
            check_inequality(InequalityId.MC_TO_WEIGHT_GEN, f, s=s, R=R),
            check_inequality(InequalityId.MC_TO_WEIGHT_1, f, R=R),
            check_inequality(InequalityId.MC_TO_WEIGHT_3, f, R=R),
            check_inequality(InequalityId.WEIGHT_TO_MC, f, R=R),
            check_inequality(InequalityId.WEIGHT1, f, gamma=2.0, eps=0.1),
        ]
        for mr in checks:
            rel = mr.margin / mr.rhs if mr.rhs else 0.0
            worst = min(worst, rel)
            rows.append((mr.inequality, trial, mr.lhs, mr.rhs, mr.margin,
                         json.dumps(mr.params, sort_keys=True)))
    reporting.write_csv(out / "margins.csv",
                        ("id", "trial", "lhs", "rhs", "margin", "params"), rows)
    reporting.plot_margins(rows, out / "margins.svg")
    verdicts = {"norm_suite": _verdict(worst, worst >= -margin_tol,
                                       f"{trials} trials")}
    return verdicts, ["margins.csv", "margins.svg"]


def _run_sweep(cfg, out, jobs, doubling):
    dom, profile, spec = _domain_of(cfg)
    V = _potential_from_config(cfg, dom)
    sector = cfg.sector or {}
    if sector:
        op = assemble_sector(dom, int(sector.get("ell_x", 0)),
                             int(sector.get("k_y", 0)), V)
    else:
        op = assemble_hamiltonian(dom, V)
    sources = _sources_from_config(cfg, dom)
    weps = float((cfg.weights or {}).get("eps", 0.1))
    lambdas = np.asarray(cfg.z_grid["lambdas"], float)
    epses = np.asarray(cfg.z_grid["eps"], float)
    floor = cfg.z_grid.get("eps_floor")
    summary = sweep_uniformity(op, lambdas, epses, sources, weight_eps=weps,
                               eps_floor=floor, jobs=jobs)
    _write_sweep(out, summary, spec.n)
    bound = float(cfg.thresholds.get("max_ratio", 5000.0 * spec.n ** 2))
    trend_max = float(cfg.thresholds.get("trend", 3.0))
    verdicts = {
        "resolvent_uniform": _verdict(summary.max_ratio,
                                      summary.max_ratio <= bound,
                                      f"bound {bound:g}"),
        "resolvent_trend": _verdict(summary.trend, summary.trend <= trend_max,
                                    f"threshold {trend_max:g}"),
    }
    if summary.trend_reliable is not None:
        verdicts["resolvent_trend_reliable"] = _verdict(
            summary.trend_reliable, summary.trend_reliable <= trend_max,
            f"eps >= {floor:g} only")
    if doubling:
        dom2, _, _ = _domain_of(cfg, doubled=True)
        V2 = _potential_from_config(cfg, dom2)
        op2 = (assemble_sector(dom2, int(sector.get("ell_x", 0)),
                               int(sector.get("k_y", 0)), V2) if sector
               else assemble_hamiltonian(dom2, V2))
        sources2 = _sources_from_config(cfg, dom2)
        summary2 = sweep_uniformity(op2, lambdas, epses, sources2,
                                    weight_eps=weps, eps_floor=floor,
                                    jobs=jobs)
        rel = abs(summary2.max_ratio - summary.max_ratio) / summary.max_ratio
        verdicts["extent_doubling"] = _verdict(rel, rel < 0.02,
                                               "max_ratio change")
        reporting.write_csv(out / "doubling.csv",
                            ("quantity", "base", "doubled", "rel_change"),
                            [("max_ratio", summary.max_ratio,
                              summary2.max_ratio, rel),
                             ("trend", summary.trend, summary2.trend,
                              abs(summary2.trend - summary.trend)
                              / max(summary.trend, 1e-300))])
    return verdicts, ["sweep.csv", "per_z.json", "ratio_vs_eps.svg"]


def _write_sweep(out, summary, n):
    rows = [(r.lam, r.eps, r.source, r.ratio, r.x_norm_u, r.x1_norm_u,
             r.x_norm_grad, r.xstar_f, r.weighted_interp, r.weighted_grad,
             r.weighted_z, r.residual, r.iterations)
            for r in summary.records]
    reporting.write_csv(out / "sweep.csv",
                        ("lambda", "eps", "source", "ratio", "x_norm_u",
                         "x1_norm_u", "x_norm_grad", "xstar_f",
                         "weighted_interp", "weighted_grad", "weighted_z",
                         "residual", "iterations"), rows)
    reporting.write_json(out / "per_z.json",
                         [[a, b, v] for (a, b), v in sorted(summary.per_z.items())])
    reporting.plot_ratio_vs_eps(summary.per_z, n, out / "ratio_vs_eps.svg")


def _run_spectrum(cfg, out, jobs, doubling):
    dom, profile, spec = _domain_of(cfg)
    sector = cfg.sector or {}
    ell_x, k_y = int(sector.get("ell_x", 0)), int(sector.get("k_y", 0))
    op = assemble_sector(dom, ell_x, k_y) \
        if spec.mode != GridMode.FULL_TENSOR else assemble_hamiltonian(dom)
    dom2, _, _ = _domain_of(cfg, doubled=True)
    op2 = assemble_sector(dom2, ell_x, k_y) \
        if spec.mode != GridMode.FULL_TENSOR else assemble_hamiltonian(dom2)
    window = tuple(cfg.window)
    report = scan_eigenvalues(op, window, doubled=op2)
    cs = profile.cross_section
    ncs = int(round((cs.length if isinstance(cs, Interval) else cs.radius)
                    / spec.h_y))
    modes = cross_section_modes(cs, 1, ncell=ncs)
    thresh = essential_threshold(modes)
    rep = audit_repulsivity(dom)
    classify_embedded(report, thresh, repulsive=rep.verdict)
    sector_thresh = None
    if k_y:
        from .spectral import disk_sector_tridiag
        from scipy.linalg import eigh_tridiagonal
        main, off, _, _ = disk_sector_tridiag(cs.radius, ncs, k_y)
        sector_thresh = float(eigh_tridiagonal(
            main, off, select="i", select_range=(0, 0))[0][0])
    recs = [{"value": r.value, "residual": r.residual,
             "localization_radius": r.localization_radius,
             "embedded": r.embedded, "sector": list(r.sector),
             "stable": r.stable} for r in report.records]
    payload = {"window": list(window), "threshold": thresh,
               "sector_threshold": sector_thresh, "records": recs,
               "certificate": report.certificate,
               "scan_params": report.scan_params}
    reporting.write_json(out / "eigenreport.json", payload)
    reporting.write_csv(out / "eigenvalues.csv",
                        ("value", "residual", "localization_radius",
                         "embedded", "stable"),
                        [(r.value, r.residual, r.localization_radius,
                          r.embedded, r.stable) for r in report.records])
    reporting.plot_spectrum(report.records, thresh, window,
                            out / "spectrum.svg", sector_thresh)
    expect = cfg.thresholds.get("expect", "any")
    found_embedded = any(r.embedded for r in report.records)
    found_below = any(not r.embedded for r in report.records)
    if expect == "embedded":
        ok = found_embedded
        verdicts = {"embedded_eigenvalue": _verdict(
            report.records[0].value if report.records else None, ok)}
    elif expect == "bound_below":
        verdicts = {"bound_state": _verdict(
            report.records[0].value if report.records else None, found_below)}
    elif expect == "absence":
        verdicts = {"absence": _verdict(len(report.records),
                                        report.certificate is not None)}
    else:
        verdicts = {"scan": _verdict(len(report.records), True)}
    return verdicts, ["eigenreport.json", "eigenvalues.csv", "spectrum.svg"]


def _evolve_op_and_packet(cfg, doubled=False):
    dom, profile, spec = _domain_of(cfg, doubled=doubled)
    V = _potential_from_config(cfg, dom)
    op = assemble_hamiltonian(dom, V)
    src = cfg.sources or {}
    packet = bump_source(dom, float(src.get("center", 2.0)),
                         float(src.get("width", 1.5)),
                         y_coeffs=src.get("y_coeffs", [1.0]),
                         momentum=float(src.get("momentum", 2.5)))
    return dom, op, packet, V


def _run_evolve(cfg, out, jobs, doubling):
    dom, op, packet, V = _evolve_op_and_packet(cfg)
    tm = cfg.time
    flow = tm.get("flow", "schrodinger")
    store = int(tm.get("store_every", 1))
    if flow == "schrodinger":
        traj = evolve_schrodinger(op, packet, float(tm["T"]), float(tm["dt"]),
                                  store_every=store)
    else:
        traj = evolve_wave(op, float(tm.get("mu", 0.0)), packet,
                           float(tm["T"]), float(tm["dt"]), store_every=store)
    weps = float((cfg.weights or {}).get("eps", 0.1))
    trace = smoothing_trace(traj, weps)
    st = None
    if cfg.thresholds.get("strichartz"):
        st = strichartz_norm(traj, V, weps)
    rows = []
    for k, t in enumerate(trace.times):
        row = [t, trace.S1[k], trace.S2[k], trace.S3[k]]
        row.append(st["St"][k] if st else "")
        row.append(traj.mass[min(k * store, len(traj.mass) - 1)]
                   if len(traj.mass) else "")
        row.append(traj.energy[k] if len(traj.energy) > k else "")
        rows.append(row)
    reporting.write_csv(out / "trace.csv",
                        ("t", "S1", "S2", "S3", "St", "mass", "energy"), rows)
    reporting.plot_trace(trace.times,
                         {"S1": trace.S1, "S2": trace.S2, "S3": trace.S3},
                         out / "trace.svg")
    Thalf = float(tm["T"]) / 2.0
    s_half, s_full = trace.at(Thalf), trace.at(float(tm["T"]))
    plateau = (s_full - s_half) / s_half if s_half > 0 else np.inf
    verdicts = {}
    key = "smoothing_schrodinger" if flow == "schrodinger" else "smoothing_wave"
    thresh = float(cfg.thresholds.get("plateau", 0.1))
    verdicts[key] = _verdict(plateau, plateau <= thresh,
                             f"T={Thalf:g} doubling growth")
    if flow == "schrodinger":
        verdicts["mass_drift"] = _verdict(traj.mass_drift(),
                                          traj.mass_drift() <= 1e-10)
    if st:
        k1 = int(np.argmin(np.abs(trace.times - Thalf)))
        k2 = int(np.argmin(np.abs(trace.times - float(tm["T"]))))
        st_growth = (st["St"][k2] - st["St"][k1]) / max(st["St"][k1], 1e-300)
        verdicts["strichartz"] = _verdict(st_growth, st_growth <= 0.05,
                                          "ratio growth per doubling")
    if doubling:
        dom2, op2, packet2, _ = _evolve_op_and_packet(cfg, doubled=True)
        if flow == "schrodinger":
            traj2 = evolve_schrodinger(op2, packet2, float(tm["T"]),
                                       float(tm["dt"]), store_every=store)
        else:
            traj2 = evolve_wave(op2, float(tm.get("mu", 0.0)), packet2,
                                float(tm["T"]), float(tm["dt"]),
                                store_every=store)
        trace2 = smoothing_trace(traj2, weps)
        rel = abs(trace2.S1[-1] - trace.S1[-1]) / trace.S1[-1]
        verdicts["extent_doubling"] = _verdict(rel, rel < 0.02, "S1(T) change")
    return verdicts, ["trace.csv", "trace.svg"]


def _run_flat_dispersion(cfg, out, jobs, doubling):
    dom, profile, spec = _domain_of(cfg)
    tm = cfg.time or {}
    nmode = int((cfg.sources or {}).get("y_mode_count", 3))
    cs = profile.cross_section
    ncs = dom.axes[dom.y_axes[0]].size
    modes = cross_section_modes(cs, nmode, ncell=ncs)
    y = dom.axes[dom.y_axes[0]].coords[dom.cells[:, dom.y_axes[0]]]
    phi1 = np.interp(y, modes.coords, modes.vectors[:, 0])
    sigma = float((cfg.sources or {}).get("width", 1.0))
    f = GridFunction(dom, np.exp(-dom.r_cells ** 2 / (2 * sigma ** 2))
                     .astype(complex) * phi1)
    ts = np.concatenate([[0.0], np.geomspace(0.25, float(tm.get("T", 30.0)),
                                             int(tm.get("t_samples", 24)))])
    snaps, fit = flat_reference_propagator(modes, f, ts)
    sup = np.array([float(np.max(np.abs(s.values))) for s in snaps])
    reporting.write_csv(out / "decay.csv", ("t", "sup_norm"), zip(ts, sup))
    reporting.write_json(out / "decay_fit.json",
                         {"slope": fit.slope, "intercept": fit.intercept,
                          "fit_residual": fit.residual,
                          "t_range": list(fit.t_range)})
    reporting.plot_decay(ts, sup, fit, out / "decay.svg")
    lo, hi = cfg.thresholds.get("slope_range", (-1.65, -1.35))
    verdicts = {"dispersive_decay": _verdict(fit.slope, lo <= fit.slope <= hi)}
    return verdicts, ["decay.csv", "decay_fit.json", "decay.svg"]


def _run_duhamel(cfg, out, jobs, doubling):
    from .evolution import duhamel_evolve, inhomogeneous_ratio
    dom, op, packet, V = _evolve_op_and_packet(cfg)
    tm = cfg.time
    T, dt = float(tm["T"]), float(tm["dt"])
    nsteps = int(round(T / dt))
    weps = float((cfg.weights or {}).get("eps", 0.1))
    mids = []

    def F(t):
        v = packet.values * np.exp(-0.5 * t)
        mids.append(v)
        return GridFunction(dom, v)

    traj = duhamel_evolve(op, F, T, dt)
    ratio = inhomogeneous_ratio(traj, mids, weps)
    # ratio plateau under time doubling
    mids2 = []

    def F2(t):
        v = packet.values * np.exp(-0.5 * t)
        mids2.append(v)
        return GridFunction(dom, v)

    traj2 = duhamel_evolve(op, F2, 2 * T, dt)
    ratio2 = inhomogeneous_ratio(traj2, mids2, weps)
    growth = (ratio2 - ratio) / max(ratio, 1e-300)
    reporting.write_csv(out / "duhamel.csv",
                        ("T", "ratio"), [(T, ratio), (2 * T, ratio2)])
    reporting.plot_trace(np.array([T, 2 * T]), {"ratio": [ratio, ratio2]},
                         out / "duhamel.svg", ylabel="inhomogeneous ratio")
    thresh = float(cfg.thresholds.get("plateau", 0.1))
    verdicts = {"duhamel_ratio": _verdict(growth, growth <= thresh,
                                          "inhomogeneous smoothing plateau")}
    return verdicts, ["duhamel.csv", "duhamel.svg"]
