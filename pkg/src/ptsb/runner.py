"""Dispatch a resolved :class:`RunConfig` to the numerical modules and write outputs.

Every run writes ``<stem>.csv`` and ``<stem>.json`` into ``out_dir``. The
JSON sidecar echoes the fully resolved config together with solver
metadata; the CSV body depends only on the config (for ``workers=1``).
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from importlib import metadata
from pathlib import Path

from . import io
from .config import RunConfig
from .errors import IntegrationError, PtsbError
from .projection import SpectrumProblem, spectrum_sweep
from .tdvp import TrajectoryRecord, integrate
from .validate import compare_with_ed

log = logging.getLogger(__name__)

BATH_COLUMNS = ("n", "omega", "g")
SPECTRUM_COLUMNS = ("x", "re_E", "im_E", "branch", "residual", "converged")
VALIDATE_COLUMNS = ("lambda", "re_E0", "im_E0", "re_E1", "im_E1", "source")


@dataclass
class Artifacts:
    stem: str
    csv: Path
    json: Path
    summary: dict


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _paths(cfg: RunConfig):
    out = Path(cfg.out_dir)
    return out / f"{cfg.stem}.csv", out / f"{cfg.stem}.json"


def _sidecar(cfg, started, **payload):
    return {"config": cfg.as_dict(), "version": _version(),
            "elapsed_seconds": time.perf_counter() - started, **payload}


def run_bath(cfg: RunConfig) -> Artifacts:
    started = time.perf_counter()
    bath = cfg.bath_spec.build(cfg.params)
    # full double precision, 17 significant digits
    rows = [(n + 1, f"{w:.17g}", f"{g:.17g}") for n, (w, g) in enumerate(bath.modes)]
    csv_path, json_path = _paths(cfg)
    io.write_csv(csv_path, BATH_COLUMNS, rows)
    summary = {"scheme": bath.scheme, "modes": len(bath), "reorganization": bath.reorganization,
               "recurrence_time": bath.recurrence_time, "bath_meta": bath.meta}
    io.write_json(json_path, _sidecar(cfg, started, **summary))
    return Artifacts(cfg.stem, csv_path, json_path, summary)


def run_spectrum(cfg: RunConfig) -> Artifacts:
    started = time.perf_counter()
    problem = SpectrumProblem(cfg.params, cfg.bath_spec, cfg.axis, cfg.tol)
    points, ep = spectrum_sweep(problem, cfg.grid, branches=cfg.branches,
                                delta_ep=cfg.delta_ep, rel_width=cfg.ep_rel_width)
    rows = [(q.x, q.E.real, q.E.imag, q.branch, q.residual, q.converged) for q in points]
    csv_path, json_path = _paths(cfg)
    io.write_csv(csv_path, SPECTRUM_COLUMNS, rows)
    summary = {"ep": ep.as_dict(), "points": len(points),
               "unconverged": sum(not q.converged for q in points),
               "bath": cfg.bath_spec.as_dict()}
    io.write_json(json_path, _sidecar(cfg, started, **summary))
    return Artifacts(cfg.stem, csv_path, json_path, summary)


def run_dynamics(cfg: RunConfig) -> Artifacts:
    started = time.perf_counter()
    bath = cfg.bath_spec.build(cfg.params)
    traj = integrate(cfg.params, bath, t_end=cfg.t_end, rtol=cfg.rtol, atol=cfg.atol,
                     stride=cfg.stride, r_floor=cfg.r_floor)
    csv_path, json_path = _paths(cfg)
    io.write_csv(csv_path, TrajectoryRecord.COLUMNS, traj.rows())
    summary = {"integrator": "dormand-prince 5(4)", "stats": traj.stats,
               "recurrence_time": bath.recurrence_time, "r_floor": cfg.r_floor,
               "samples": len(traj), "bath": cfg.bath_spec.as_dict(),
               "cutoff": bath.meta.get("cutoff")}
    io.write_json(json_path, _sidecar(cfg, started, **summary))
    if not traj.ok:
        raise IntegrationError(traj.stats.get("message", "integration aborted"))
    return Artifacts(cfg.stem, csv_path, json_path, summary)


def run_validate(cfg: RunConfig) -> Artifacts:
    started = time.perf_counter()
    res = compare_with_ed(cfg.params, cfg.bath_spec, cfg.grid, k=2,
                          n_max=cfg.n_max or None, check_step=cfg.check_step or None,
                          check_every=cfg.check_every, conv_tol=cfg.conv_tol, tol=cfg.tol,
                          delta_ep=cfg.delta_ep, workers=cfg.workers)
    rows = []
    for i, lam in enumerate(res.grid):
        for source, vals in (("ed", res.ed[i]), ("projection", res.projection[i])):
            rows.append((lam, vals[0].real, vals[0].imag, vals[1].real, vals[1].imag, source))
    csv_path, json_path = _paths(cfg)
    io.write_csv(csv_path, VALIDATE_COLUMNS, rows)
    summary = res.summary()
    io.write_json(json_path, _sidecar(cfg, started, **summary))
    return Artifacts(cfg.stem, csv_path, json_path, summary)


RUNNERS = {"bath": run_bath, "spectrum": run_spectrum, "dynamics": run_dynamics,
           "validate": run_validate}


def run_one(cfg: RunConfig) -> Artifacts:
    try:
        return RUNNERS[cfg.mode](cfg)
    except PtsbError as exc:
        # name the failing parameter point for the caller
        exc.point = cfg.stem
        raise


def run(cfg: RunConfig) -> list[Artifacts]:
    """Run every variant of ``cfg``; variants are spread across workers."""
    runs = cfg.expand()
    if cfg.workers > 1 and len(runs) > 1:
        inner = max(1, cfg.workers // len(runs))
        runs = [replace(r, workers=inner) for r in runs]
        with ProcessPoolExecutor(min(cfg.workers, len(runs))) as pool:
            return list(pool.map(run_one, runs))
    return [run_one(r) for r in runs]
