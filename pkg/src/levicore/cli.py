"""Command line front end: ``levicore <command> [options]``.

Commands: analyze, core, norm, df-scan, oracle, examples.  Every command writes
one JSON report (to ``--out`` or stdout).  Exit codes: 0 success, 2 the sampled
boundary is not pseudoconvex, 3 the core iteration did not stabilize, 1 bad
input.  ``--normalized`` drops wall-clock timings so that two runs with the
same configuration produce byte-identical output.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from . import calc
from . import dangelo
from . import df_index
from . import distributions as dist_mod
from . import examples as ex_mod
from . import hypersurface as hs

log = logging.getLogger("levicore")

SCHEMA_VERSION = "1"
EXIT_OK, EXIT_INPUT, EXIT_NOT_PSEUDOCONVEX, EXIT_NOT_STABLE = 0, 1, 2, 3

DEFAULT_BASIS = {"worm": "radial:32", "quartic": "poly:4"}
DEFAULT_SAMPLES = {"worm": 6000}


@dataclass
class RunConfig:
    domain: str = "ball"
    params: dict = field(default_factory=dict)
    strategy: str = ""            # empty: "param" when the domain has strata, else "random"
    samples: int = 0              # 0: per-domain default (500, the worm needs 6000)
    seed: int = 0
    basis: str = ""               # empty: per-domain default
    K: float = float("inf")
    delta_grid: list = field(default_factory=lambda: [round(0.05 * i, 10) for i in range(1, 20)])
    collar: float = 0.1
    collar_strata: int = 4
    threads: int = 0
    out: str = ""
    normalized: bool = False
    levi_rel_tol: float = 1e-6
    angle_tol_deg: float = dist_mod.ANGLE_TOL_DEG
    max_iter: int = 10
    starts: int = 2
    max_evals: int = 500
    scan_evals: int = 300
    beta: float = 1.0
    m: int = 64
    degree: int = 8

    def resolved(self, f):
        out = RunConfig(**asdict(self))
        if not out.strategy:
            out.strategy = "param" if f.strata is not None else "random"
        if out.samples <= 0:
            out.samples = DEFAULT_SAMPLES.get(self.domain, 500)
        if not out.basis:
            out.basis = DEFAULT_BASIS.get(self.domain, "none")
        if out.threads <= 0:
            out.threads = os.cpu_count() or 1
        return out

    def echo(self):
        d = asdict(self)
        d["K"] = dangelo._jnum(self.K)
        d.pop("out")
        d.pop("threads")  # does not affect results
        return d

    def optimizer(self):
        return dangelo.OptimizerConfig(starts=self.starts, max_evals=self.max_evals, seed=self.seed)


class ConfigError(ValueError):
    pass


def _parse_value(text):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def load_config(path):
    text = Path(path).read_text()
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at top level")
    return data


def build_config(args):
    """File values first, then any flag given on the command line."""
    data = load_config(args.config) if args.config else {}
    known = {f.name for f in fields(RunConfig)}
    bad = set(data) - known
    if bad:
        raise ConfigError(f"unknown config keys {sorted(bad)}")
    params = dict(data.get("params", {}))
    for item in args.param or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--param expects k=v, got {item!r}")
        params[key] = _parse_value(val)
    data["params"] = params
    for name in ("domain", "strategy", "samples", "seed", "basis", "K", "collar", "threads",
                 "out", "beta", "m", "degree", "starts", "max_evals"):
        val = getattr(args, name, None)
        if val is not None:
            data[name] = val
    if getattr(args, "delta_grid", None):
        data["delta_grid"] = [float(x) for x in args.delta_grid.split(",")]
    if getattr(args, "normalized", False):
        data["normalized"] = True
    if "K" in data:
        data["K"] = float(data["K"])
    return RunConfig(**data)


# -- report pieces -------------------------------------------------------------

def _cplx(p):
    return [[float(c.real), float(c.imag)] for c in p]


def _summary(d):
    dims = d.dims()
    support = np.flatnonzero(dims > 0)
    return {"points": int(len(dims)), "supportSize": int(len(support)),
            "fiberDims": {str(k): int(v) for k, v in zip(*np.unique(dims, return_counts=True))}}


class _Clock:
    def __init__(self):
        self.times = {}

    def run(self, key, fn, *a, **kw):
        t = time.perf_counter()
        try:
            return fn(*a, **kw)
        finally:
            self.times[key] = round(time.perf_counter() - t, 4)


def _sample(cfg, dom, clock):
    return clock.run("sample", hs.sample_boundary, dom.f, cfg.strategy, cfg.samples, cfg.seed)


def _null_and_core(cfg, dom, sample, clock):
    null = clock.run("null", dist_mod.levi_null, dom.f, sample, cfg.levi_rel_tol)
    core = clock.run("core", dist_mod.iterate_to_core, null, cfg.max_iter,
                     angle_tol_deg=cfg.angle_tol_deg)
    return null, core


def _core_json(res):
    out = _summary(res.core)
    out.update({"k": res.k, "stabilized": res.stabilized, "history": list(res.history)})
    return out


def _collar_sample(dom, sample):
    if dom.patch is None or not len(sample):
        return sample
    keep = dom.patch(sample.positions())
    return hs.BoundarySample([bp for bp, k in zip(sample, keep) if k], len(sample),
                             sample.strategy, sample.seed)


def _route_a(cfg, dom, sample, basis, warm, clock):
    grid = clock.run("collar", df_index.collar_grid, dom.f, _collar_sample(dom, sample),
                     cfg.collar, cfg.collar_strata)
    scan_cfg = dangelo.OptimizerConfig(starts=cfg.starts, max_evals=cfg.scan_evals, seed=cfg.seed)
    ra = clock.run("routeA", df_index.df_scan, dom.f, grid, cfg.delta_grid, basis, warm, scan_cfg)
    return ra, grid


# -- commands ------------------------------------------------------------------

def cmd_analyze(cfg, dom):
    clock = _Clock()
    report = {"command": "analyze"}
    sample = _sample(cfg, dom, clock)
    pc = hs.pseudoconvexity_report(dom.f, sample, cfg.levi_rel_tol)
    report["pseudoconvexity"] = pc
    if pc["violations"]:
        report["error"] = {"kind": "not-pseudoconvex", "count": len(pc["violations"])}
        return report, clock, EXIT_NOT_PSEUDOCONVEX
    null, core = _null_and_core(cfg, dom, sample, clock)
    report["null"] = _summary(null)
    report["core"] = _core_json(core)
    if not core.stabilized:
        report["error"] = {"kind": "core-not-stabilized", "history": list(core.history)}
        return report, clock, EXIT_NOT_STABLE
    basis = dangelo.make_basis(cfg.basis, dom.f)
    opt = cfg.optimizer()
    with ThreadPoolExecutor(max_workers=max(1, min(cfg.threads, 2))) as pool:
        t = time.perf_counter()
        fut_core = pool.submit(dangelo.optimize_n, dom.f, core.core, basis, cfg.K, opt, null)
        fut_null = pool.submit(dangelo.optimize_n, dom.f, null, basis, cfg.K, opt)
        est_core, est_null = fut_core.result(), fut_null.result()
        clock.times["norm"] = round(time.perf_counter() - t, 4)
    report["norm"] = {"core": est_core.to_json(), "null": est_null.to_json()}
    rb = df_index.RouteB(1.0 / (1.0 + est_core.value) if np.isfinite(est_core.value) else 0.0,
                         est_core)
    ra, grid = _route_a(cfg, dom, sample, basis, est_core.coeffs, clock)
    df = df_index.DFReport(dom.f.describe(), ra, rb, grid.spec(), {"sample": cfg.seed})
    report["df"] = df.to_json()
    a = dangelo.DAngeloForm(dom.f, basis, est_core.coeffs if basis is not None else None)
    sub = _first_support(null, 50)
    report["consistency"] = clock.run("consistency", dangelo.consistency_suite, a, sub)
    return report, clock, EXIT_OK


def _first_support(d, count):
    idx = np.flatnonzero(d.support_mask())
    if len(idx) <= count:
        return d
    pick = idx[np.linspace(0, len(idx) - 1, count).astype(int)]
    return dist_mod.SampledDistribution(d.kind, d.points[pick], [d.fibers[i] for i in pick],
                                        d.source_tol, d.iteration, dict(d.meta))


def cmd_core(cfg, dom):
    clock = _Clock()
    sample = _sample(cfg, dom, clock)
    null, core = _null_and_core(cfg, dom, sample, clock)
    report = {"command": "core", "null": _summary(null), "core": _core_json(core),
              "coreDistribution": core.core.to_json()}
    return report, clock, EXIT_OK if core.stabilized else EXIT_NOT_STABLE


def cmd_norm(cfg, dom):
    clock = _Clock()
    sample = _sample(cfg, dom, clock)
    null, core = _null_and_core(cfg, dom, sample, clock)
    basis = dangelo.make_basis(cfg.basis, dom.f)
    est = clock.run("norm", dangelo.optimize_n, dom.f, core.core, basis, cfg.K,
                    cfg.optimizer(), null)
    report = {"command": "norm", "core": _core_json(core), "norm": est.to_json()}
    return report, clock, EXIT_OK if core.stabilized else EXIT_NOT_STABLE


def cmd_df_scan(cfg, dom):
    clock = _Clock()
    sample = _sample(cfg, dom, clock)
    basis = dangelo.make_basis(cfg.basis, dom.f)
    ra, grid = _route_a(cfg, dom, sample, basis, None, clock)
    df = df_index.DFReport(dom.f.describe(), ra, None, grid.spec(), {"sample": cfg.seed})
    return {"command": "df-scan", "df": df.to_json()}, clock, EXIT_OK


def cmd_oracle(cfg, dom=None):
    clock = _Clock()
    t0 = float(cfg.params.get("t0", 1.0))
    prob = ex_mod.AnnulusProblem(np.exp(-t0 / 2), np.exp(t0 / 2), cfg.beta, cfg.m)
    res = clock.run("oracle", ex_mod.annulus_norm_oracle, prob)
    table = clock.run("convergence", ex_mod.oracle_convergence, prob)
    app = clock.run("appendix", ex_mod.appendix_norms, prob, cfg.degree)
    report = {"command": "oracle", "oracle": res.to_json(), "convergence": table,
              "appendix": app.to_json()}
    return report, clock, EXIT_OK


def cmd_examples(cfg=None, dom=None):
    return {"command": "examples", "domains": ex_mod.list_domains()}, _Clock(), EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "core": cmd_core, "norm": cmd_norm,
            "df-scan": cmd_df_scan, "oracle": cmd_oracle, "examples": cmd_examples}


ANALYSIS_REPORT_SCHEMA = {
    "type": "object",
    "required": ["schemaVersion", "toolVersion", "command", "config"],
    "properties": {
        "schemaVersion": {"const": SCHEMA_VERSION},
        "toolVersion": {"type": "string"},
        "command": {"enum": sorted(COMMANDS)},
        "config": {"type": "object", "required": ["domain", "params", "seed", "samples"]},
        "pseudoconvexity": {"type": "object", "required": ["min_eigenvalue", "violations"]},
        "null": {"type": "object", "required": ["supportSize"]},
        "core": {"type": "object", "required": ["supportSize", "k", "stabilized"]},
        "norm": {"type": "object"},
        "df": df_index.DF_REPORT_SCHEMA,
        "consistency": {"type": "object"},
        "timings": {"type": "object"},
        "error": {"type": "object", "required": ["kind"]},
    },
}


def run(cfg, command):
    """Run one command and return ``(report, exit_code)``."""
    dom = None
    if command not in ("examples", "oracle"):
        dom = ex_mod.make_domain(cfg.domain, cfg.params)
        cfg = cfg.resolved(dom.f)
    report, clock, code = COMMANDS[command](cfg, dom)
    full = {"schemaVersion": SCHEMA_VERSION, "toolVersion": __version__,
            "config": cfg.echo()}
    full.update(report)
    if not cfg.normalized:
        full["timings"] = clock.times
    return full, code


def dumps(report):
    return json.dumps(_clean(report), indent=2, sort_keys=True)


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else dangelo._jnum(x) if not np.isnan(x) else "nan"
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def make_parser():
    p = argparse.ArgumentParser(prog="levicore", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON or YAML file with RunConfig keys")
        s.add_argument("--domain")
        s.add_argument("--param", action="append", metavar="K=V")
        s.add_argument("--strategy", choices=["grid", "random", "param"])
        s.add_argument("--samples", type=int)
        s.add_argument("--seed", type=int)
        s.add_argument("--basis", help="poly:<deg>, radial:<size> or none")
        s.add_argument("--K", type=float)
        s.add_argument("--delta-grid", dest="delta_grid", help="comma separated values in (0,1)")
        s.add_argument("--collar", type=float, help="collar depth eps0")
        s.add_argument("--threads", type=int)
        s.add_argument("--starts", type=int)
        s.add_argument("--max-evals", dest="max_evals", type=int)
        s.add_argument("--beta", type=float)
        s.add_argument("--m", type=int)
        s.add_argument("--degree", type=int)
        s.add_argument("--out")
        s.add_argument("--csv", help="write the defect curve or convergence table here")
        s.add_argument("--normalized", action="store_true")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def _write_csv(path, report):
    rows = []
    if "convergence" in report:
        rows = [("m", "value", "raw")] + [(r["m"], r["value"], r["raw"])
                                          for r in report["convergence"]]
    elif report.get("df", {}).get("routeA"):
        rows = [("delta", "min_eigenvalue")] + [tuple(x) for x in
                                                 report["df"]["routeA"]["defectCurve"]]
    Path(path).write_text("\n".join(",".join(str(v) for v in r) for r in rows) + "\n")


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args)
        report, code = run(cfg, args.command)
    except (ConfigError, ex_mod.UnknownDomainError, ex_mod.BadParameterError,
            ValueError, calc.EvaluationError, OSError) as exc:
        err = {"error": {"kind": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(err, sort_keys=True), file=sys.stderr)
        return EXIT_INPUT
    text = dumps(report)
    if cfg.out:
        Path(cfg.out).write_text(text + "\n")
    else:
        print(text)
    if args.csv:
        _write_csv(args.csv, report)
    if code != EXIT_OK:
        print(json.dumps({"error": report.get("error", {"kind": "exit", "code": code})},
                         sort_keys=True), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
