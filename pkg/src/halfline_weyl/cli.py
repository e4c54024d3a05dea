"""Command line: ``halfline-weyl run --config cfg.toml`` and ``halfline-weyl validate``.

Exit codes: 0 success, 1 configuration error, 2 numerical non-convergence,
3 precondition failure (condition A violated where it is required).
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import _kernels
from ._parallel import pmap
from .oracle import FDProblem, OracleError, airy_eigenvalues, fd_eigenvalues
from .potential import (BranchError, ConditionError, Potential, anchor_cell, check_condition_A,
                        check_condition_B, check_theorem3, find_anchor, lambda_grid,
                        sample_N_region)
from .propagate import IntegrationError
from .serialize import dumps
from .spectrum import (BoundaryForm, NearEigenvalueError, NearZeroError, Rectangle,
                       TailTruncationError, UnwrapError, apply_resolvent, find_eigenvalues,
                       weighted_bound_report)
from .weyl import boundary_limit_trace, weyl_solution, weyl_theta

log = logging.getLogger("halfline_weyl")

TASKS = ("check-a", "check-b", "check-thm3", "region-map", "weyl", "eigs", "resolvent",
         "bounds", "oracle-compare")
EXIT_OK, EXIT_CONFIG, EXIT_NONCONV, EXIT_PRECOND = 0, 1, 2, 3


class ConfigError(ValueError):
    pass


class TaskOutcome(Exception):
    """Carries a non-zero exit status out of a task while keeping its results."""

    def __init__(self, status, results, message):
        super().__init__(message)
        self.status = status
        self.results = results


# -- configuration -------------------------------------------------------------

def _complex(v, name):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(t, (int, float)) for t in v):
        return complex(v[0], v[1])
    raise ConfigError(f"{name} must be a number or a [re, im] pair")


def _pos(v, name):
    try:
        x = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number") from None
    if not (x > 0 and math.isfinite(x)):
        raise ConfigError(f"{name} must be positive")
    return x


@dataclass
class RunConfig:
    task: str
    potential: Potential
    bc: BoundaryForm
    numerics: dict
    region: Rectangle | None
    source: dict
    base_dir: Path
    forcing: dict = field(default_factory=dict)
    out_dir: Path | None = None

    def num(self, key, default=None):
        return self.numerics.get(key, default)


NUMERIC_DEFAULTS = {
    "tol": 1e-9, "C": 0.25, "eps": 0.25, "n_grid": 2049, "x_lo": 0.0, "x_hi": 50.0,
    "x_max": None, "b_max": None, "radius_tol": 1e-8, "anchor": None, "kappa": None,
    "delta": None, "max_subdivision": 12, "contour_samples": 64, "anchor_x_max": 100.0,
    "n_re": 10, "n_im": 10, "L": None, "n_fd": 4800, "count": 3,
}
POSITIVE = ("tol", "radius_tol", "C", "eps")


def _potential(d: dict, base: Path) -> Potential:
    fam = d.get("family")
    try:
        if fam == "constant":
            return Potential.constant(_complex(d.get("c", 1.0), "potential.c"))
        if fam == "monomial-phase":
            return Potential.monomial(float(d["alpha"]), float(d.get("theta", 0.0)),
                                      _complex(d.get("coef", 1.0), "potential.coef"))
        if fam == "complex-airy":
            return Potential.complex_airy()
        if fam == "polynomial":
            coeffs = [_complex(c, "potential.coefficients") for c in d["coefficients"]]
            return Potential.polynomial(coeffs)
        if fam == "tabulated":
            path = Path(d["path"])
            if not path.is_absolute():
                path = base / path
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
            if data.shape[1] not in (2, 3):
                raise ConfigError("tabulated file needs columns x, re q[, im q]")
            q = data[:, 1] + (1j * data[:, 2] if data.shape[1] == 3 else 0)
            return Potential.tabulated(data[:, 0], q, float(d.get("x_s", 0.0)))
    except KeyError as exc:
        raise ConfigError(f"potential: missing key {exc}") from None
    except (OSError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"potential: {exc}") from None
    raise ConfigError(f"unknown potential family {fam!r}")


def parse_config(data: dict, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a table")
    task = data.get("task")
    if task not in TASKS:
        raise ConfigError(f"task must be one of {', '.join(TASKS)}")
    if "potential" not in data:
        raise ConfigError("missing [potential] table")
    pot = _potential(data["potential"], base_dir)
    b = data.get("boundary", {})
    try:
        bc = BoundaryForm(_complex(b.get("alpha0", 1.0), "boundary.alpha0"),
                          _complex(b.get("alpha1", 0.0), "boundary.alpha1"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    num = dict(NUMERIC_DEFAULTS)
    raw = data.get("numerics", {})
    unknown = set(raw) - set(NUMERIC_DEFAULTS) - {"lambda"}
    if unknown:
        raise ConfigError(f"unknown numerics keys: {', '.join(sorted(unknown))}")
    num.update(raw)
    num["lambda"] = _complex(raw.get("lambda", 0.0), "numerics.lambda")
    for k in POSITIVE:
        num[k] = _pos(num[k], f"numerics.{k}")
    for k in ("n_grid", "max_subdivision", "contour_samples", "n_re", "n_im", "n_fd", "count"):
        if not isinstance(num[k], int) or num[k] < 1:
            raise ConfigError(f"numerics.{k} must be a positive integer")
    if num["n_grid"] < 2:
        raise ConfigError("numerics.n_grid must be at least 2")
    region = None
    if "region" in data:
        r = data["region"]
        try:
            region = Rectangle(float(r["re"][0]), float(r["re"][1]),
                               float(r["im"][0]), float(r["im"][1]))
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ConfigError(f"region: {exc}") from None
    if task in ("eigs", "region-map") and region is None:
        raise ConfigError(f"task {task} needs a [region] table")
    if task == "check-thm3" and (num["kappa"] is None or num["delta"] is None):
        raise ConfigError("check-thm3 needs numerics.kappa and numerics.delta")
    forcing = data.get("forcing", {})
    if task in ("resolvent", "bounds"):
        _forcing(forcing, base_dir)  # validate early
    return RunConfig(task, pot, bc, num, region, data, base_dir, forcing)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from None
    return parse_config(data, path.parent)


def _forcing(d: dict, base: Path):
    """f from a [forcing] table: kind = exp (c x^m e^(-a x)), gaussian (c x^m e^(-a x^2)) or tabulated."""
    kind = d.get("kind", "exp")
    c = _complex(d.get("coef", 1.0), "forcing.coef")
    m = float(d.get("power", 0.0))
    a = float(d.get("rate", 1.0))
    if kind == "exp":
        return lambda x: c * np.asarray(x, float) ** m * np.exp(-a * np.asarray(x, float))
    if kind == "gaussian":
        return lambda x: c * np.asarray(x, float) ** m * np.exp(-a * np.asarray(x, float) ** 2)
    if kind == "tabulated":
        path = Path(d.get("path", ""))
        if not path.is_absolute():
            path = base / path
        try:
            data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        except OSError as exc:
            raise ConfigError(f"forcing: {exc}") from None
        fs = data[:, 1] + (1j * data[:, 2] if data.shape[1] == 3 else 0)
        return (data[:, 0], fs)
    raise ConfigError(f"unknown forcing kind {kind!r}")


# -- outputs ------------------------------------------------------------------------

def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["%.17g" % v if isinstance(v, float) else v for v in r])


def _plots(task, out: Path, payload):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        log.warning("matplotlib not installed; skipping plots")
        return
    matplotlib.rcParams["svg.hashsalt"] = "halfline-weyl"
    fig, ax = plt.subplots(figsize=(5, 4))
    if task == "eigs":
        lam = np.array([e.lam for e in payload])
        ax.plot(lam.real, lam.imag, "o")
        ax.set_xlabel("Re lambda")
        ax.set_ylabel("Im lambda")
        name = "eigenvalues.svg"
    elif task == "weyl":
        for d in payload.disks:
            ax.add_patch(plt.Circle((d.center.real, d.center.imag), d.radius, fill=False))
        ax.plot(payload.theta.real, payload.theta.imag, "k.")
        ax.set_aspect("equal")
        ax.autoscale_view()
        name = "disks.svg"
    elif task == "region-map":
        re, im, member = payload
        ax.scatter(re, im, c=member, cmap="viridis", marker="s")
        ax.set_xlabel("Re lambda")
        ax.set_ylabel("Im lambda")
        name = "region.svg"
    else:
        plt.close(fig)
        return
    fig.savefig(out / name, metadata={"Date": None})
    plt.close(fig)


# -- tasks ------------------------------------------------------------------------------

def _task_check(cfg: RunConfig, out: Path, plots: bool):
    n = cfg.num
    lam = n("lambda")
    if cfg.task == "check-a":
        rep = check_condition_A(cfg.potential, lam, n("x_lo"), n("x_hi"), n("C"), n("n_grid"))
    elif cfg.task == "check-b":
        rep = check_condition_B(cfg.potential, lam, n("x_lo"), n("x_hi"), n("C"), n("eps"),
                                n("n_grid"))
    else:
        rep = check_theorem3(cfg.potential, float(n("kappa")), float(n("delta")), n("x_lo"),
                             n("x_hi"), n("n_grid"))
    res = {"report": rep.as_dict(), "lambda": lam}
    if not rep.holds:
        raise TaskOutcome(EXIT_PRECOND, res, f"condition fails at x = {rep.first_violation}")
    return res, {}


def _task_region(cfg: RunConfig, out: Path, plots: bool):
    n = cfg.num
    r = cfg.region
    lams = lambda_grid((r.re_lo, r.re_hi), (r.im_lo, r.im_hi), n("n_re"), n("n_im"))
    x_max = n("x_max") or n("anchor_x_max")
    samples = pmap(lambda lam: sample_N_region(cfg.potential, [lam], n("C"), x_max,
                                               n("n_grid"))[0], lams)
    rows = [(float(s.lam.real), float(s.lam.imag), int(s.member),
             "" if s.anchor is None else float(s.anchor),
             "" if s.margin is None else float(s.margin)) for s in samples]
    _write_csv(out / "region.csv", ["re", "im", "member", "anchor", "margin"], rows)
    if plots:
        _plots("region-map", out, ([r[0] for r in rows], [r[1] for r in rows],
                                   [r[2] for r in rows]))
    members = sum(s.member for s in samples)
    return {"n_samples": len(samples), "n_members": members,
            "samples": [{"lambda": s.lam, "member": s.member, "anchor": s.anchor,
                         "margin": s.margin} for s in samples]}, {}


def _anchor_for(cfg: RunConfig, lam):
    a = cfg.num("anchor")
    if a is not None:
        return float(a)
    x_max = cfg.num("anchor_x_max")
    a = find_anchor(cfg.potential, lam, cfg.num("C"), x_max, cfg.num("n_grid"))
    if a is None:
        raise ConditionError(f"no anchor below x = {x_max:g} for lambda = {lam}")
    if a > cfg.potential.x_s:
        a += anchor_cell(cfg.potential, x_max, cfg.num("n_grid"))
    return a


def _task_weyl(cfg: RunConfig, out: Path, plots: bool):
    n = cfg.num
    lam = n("lambda")
    anchor = _anchor_for(cfg, lam)
    tol = min(n("tol"), 1e-10)
    res = weyl_theta(cfg.potential, lam, anchor, radius_tol=n("radius_tol"), b_max=n("b_max"),
                     tol=tol)
    _write_csv(out / "disks.csv", ["b", "center_re", "center_im", "radius"],
               [(d.b, d.center.real, d.center.imag, d.radius) for d in res.disks])
    if plots:
        _plots("weyl", out, res)
    results = {"weyl": res.as_dict(), "disks": [{"b": d.b, "center": d.center,
                                                "radius": d.radius} for d in res.disks]}
    if not res.converged:
        raise TaskOutcome(EXIT_NONCONV, results,
                          f"disks did not shrink below {n('radius_tol'):g}")
    sol = weyl_solution(cfg.potential, lam, anchor, x_max=n("x_max"), tol=tol, weyl=res)
    _write_csv(out / "eta.csv", ["x", "eta_re", "eta_im", "deta_re", "deta_im"],
               [(float(x), e.real, e.imag, d.real, d.imag)
                for x, e, d in zip(sol.x, sol.eta, sol.deta)])
    xs, h = boundary_limit_trace(sol)
    results.update({"eta0": sol.eta0, "deta0": sol.deta0, "x_max": sol.x_max,
                    "continuity_error": sol.continuity_error, "tail_norms": sol.norms,
                    "h_anchor": float(h[0]), "h_x_max": float(h[-1])})
    return results, {"anchor": anchor}


def _task_eigs(cfg: RunConfig, out: Path, plots: bool):
    n = cfg.num
    evs = find_eigenvalues(cfg.potential, cfg.bc, cfg.region, tol=n("tol"),
                           max_subdivision=n("max_subdivision"), anchor=n("anchor"),
                           n_samples=n("contour_samples"), anchor_C=n("C"),
                           anchor_x_max=n("anchor_x_max"))
    _write_csv(out / "eigenvalues.csv",
               ["re", "im", "multiplicity", "residual", "enclosure_radius", "refined"],
               [(e.lam.real, e.lam.imag, e.multiplicity, e.residual, e.enclosure_radius,
                 int(e.refined)) for e in evs])
    if plots:
        _plots("eigs", out, evs)
    results = {"eigenvalues": [e.as_dict() for e in evs], "total_winding": evs.total_winding,
               "flagged": evs.flagged}
    diag = {"anchor": evs.anchor, "regions_searched": evs.regions}
    if evs.flagged:
        raise TaskOutcome(EXIT_NONCONV, results, "subdivision cap reached")
    return results, diag


def _task_resolvent(cfg: RunConfig, out: Path, plots: bool):
    n = cfg.num
    f = _forcing(cfg.forcing, cfg.base_dir)
    r = apply_resolvent(cfg.potential, cfg.bc, n("lambda"), f, anchor=n("anchor"),
                        x_max=n("x_max"), tol=n("tol"))
    _write_csv(out / "resolvent.csv", ["x", "y_re", "y_im", "dy_re", "dy_im"],
               [(float(x), y.real, y.imag, d.real, d.imag) for x, y, d in zip(r.x, r.y, r.dy)])
    return r.as_dict(), {}


def _task_bounds(cfg: RunConfig, out: Path, plots: bool):
    n = cfg.num
    if cfg.bc.kind not in ("dirichlet", "neumann"):
        raise ConfigError("bounds needs a Dirichlet or Neumann boundary form")
    f = _forcing(cfg.forcing, cfg.base_dir)
    C = cfg.numerics.get("C") if "C" in cfg.source.get("numerics", {}) else None
    rep = weighted_bound_report(cfg.potential, cfg.bc, f, C=C, tol=n("tol"), x_max=n("x_max"))
    if not rep["holds"]:
        raise TaskOutcome(EXIT_NONCONV, rep, "weighted bounds violated")
    return rep, {}


def _task_oracle(cfg: RunConfig, out: Path, plots: bool):
    n = cfg.num
    count = n("count")
    L = n("L")
    if L is None:
        raise ConfigError("oracle-compare needs numerics.L")
    fd = fd_eigenvalues(cfg.potential, FDProblem(float(L), n("n_fd"), cfg.bc.alpha0,
                                                 cfg.bc.alpha1), count)
    results = {"oracle": [{"lambda": v, "richardson_error": e} for v, e in zip(fd, fd.errors)]}
    if cfg.potential.family == "complex-airy" and cfg.bc.kind == "dirichlet":
        results["airy"] = airy_eigenvalues(count)
    if cfg.region is not None:
        evs = find_eigenvalues(cfg.potential, cfg.bc, cfg.region, tol=n("tol"),
                               max_subdivision=n("max_subdivision"), anchor=n("anchor"),
                               anchor_C=n("C"), anchor_x_max=n("anchor_x_max"))
        pairs = []
        for v, e in zip(fd, fd.errors):
            if not evs:
                break
            best = min(evs, key=lambda ev: abs(ev.lam - v))
            pairs.append({"oracle": v, "pipeline": best.lam, "difference": abs(best.lam - v),
                          "agrees": abs(best.lam - v) <= max(1e-4, e)})
        results["pipeline"] = [e.as_dict() for e in evs]
        results["comparison"] = pairs
        if pairs and not all(p["agrees"] for p in pairs):
            raise TaskOutcome(EXIT_NONCONV, results, "pipeline and oracle disagree")
    return results, {}


DISPATCH = {"check-a": _task_check, "check-b": _task_check, "check-thm3": _task_check,
            "region-map": _task_region, "weyl": _task_weyl, "eigs": _task_eigs,
            "resolvent": _task_resolvent, "bounds": _task_bounds,
            "oracle-compare": _task_oracle}


def run(cfg: RunConfig, out_dir: Path, plots: bool = False) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    status, message = EXIT_OK, None
    diagnostics = {"jit": _kernels.USE_JIT}
    try:
        results, diag = DISPATCH[cfg.task](cfg, out_dir, plots)
        diagnostics.update(diag)
    except TaskOutcome as exc:
        status, results, message = exc.status, exc.results, str(exc)
    except (ConditionError, BranchError) as exc:
        status, results, message = EXIT_PRECOND, {}, str(exc)
        if getattr(exc, "report", None) is not None:
            results = {"report": exc.report.as_dict()}
    except (IntegrationError, NearZeroError, UnwrapError, NearEigenvalueError,
            TailTruncationError, OracleError) as exc:
        status, results, message = EXIT_NONCONV, {}, f"{type(exc).__name__}: {exc}"
    diagnostics["status"] = status
    if message:
        diagnostics["message"] = message
        log.error(message)
    doc = {"task": cfg.task, "config_echo": cfg.source, "results": results,
           "diagnostics": diagnostics, "version": __version__}
    (out_dir / "results.json").write_text(dumps(doc), encoding="utf-8")
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="halfline-weyl",
                                     description="Weyl functions and spectra of -y'' + q y on [0, inf)")
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the task described by a TOML config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--plots", action="store_true", help="also write SVG plots")
    p_run.add_argument("--out", default=None, help="output directory (default: ./out)")
    p_val = sub.add_parser("validate", help="parse and validate a config only")
    p_val.add_argument("--config", required=True)
    parser.add_argument("-v", "--verbose", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(f"ok: task {cfg.task}, potential {cfg.potential.family}")
        return EXIT_OK
    out = Path(args.out) if args.out else Path("out")
    try:
        return run(cfg, out, args.plots)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
