"""Command line front end: analyze, margin, simulate, oracle, compare.

Reports are deterministic: the same config and seed produce byte-identical
JSON payload files.  Wall-clock numbers therefore never enter the payload;
they go to a ``<command>.timing.json`` sidecar (referenced by name from the
payload) and to stderr.

Exit codes
----------
0  success; for ``analyze``, the network is stable at the requested delay
1  ``analyze`` found the network unstable (or a margin run started unstable)
2  the solver or a bracketing search failed to converge
3  invalid input: bad flags, malformed config or graph file, bad values
4  ``simulate``: the trajectory diverged (truncated output is still written)
5  ``oracle``: the scan grid stayed too coarse after two refinements

``DELAYTK_THREADS`` caps worker parallelism for ``compare`` (default 1;
results are assembled in config order, so the cap never changes output).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BracketInvalid,
    DelaytkError,
    GridTooCoarse,
    InvalidInput,
    NonConvergence,
    UnstableAtStart,
)
from .graph import build_cycle, build_path, build_random, load_edge_list
from .oracle import SearchRegion, default_region, find_roots, rightmost_abscissa
from .simulate import HistorySpec, integrate, trajectory_summary, write_trajectory_csv
from .solver import _principal_state, _q_from_w, build_solution
from .stability import classify, margin_bisection, necessary_condition, sweep_delay
from .system import assemble, char_residual

EXIT_STABLE = 0
EXIT_UNSTABLE = 1
EXIT_NO_CONVERGENCE = 2
EXIT_BAD_INPUT = 3
EXIT_DIVERGED = 4
EXIT_GRID_TOO_COARSE = 5

_SWEEP_DEFAULTS = {"tau_start": 1e-3, "delta_tau": 1e-3, "tau_max": 8.0}
_SIM_DEFAULTS = {"t_f": 6.0, "h": None, "x0": None, "v0": None}
_ORACLE_DEFAULTS = {"re_min": -2.0, "grid_step": None, "im_max": None}
_TOP_KEYS = {"graph_path", "graph", "gamma", "tau", "sweep", "sim",
             "oracle", "seed", "topologies", "out", "format"}


def worker_cap() -> int:
    """Parallelism ceiling from DELAYTK_THREADS; 1 when unset."""
    raw = os.environ.get("DELAYTK_THREADS", "").strip()
    if not raw:
        return 1
    try:
        cap = int(raw)
    except ValueError:
        raise InvalidInput(f"DELAYTK_THREADS must be an integer, got {raw!r}") from None
    return max(1, cap)


@dataclass
class RunConfig:
    """Merged view of config file and command-line flags.

    Flags win over the file; defaults fill the rest.  ``graph`` describes a
    generated topology ({"kind": "cycle"|"path"|"random", "n": N, "p": ...});
    ``graph_path`` points at an edge-list file and wins when both are given.
    The seed feeds random-graph generation and is echoed in every report.
    """

    graph_path: str | None = None
    graph: dict | None = None
    gamma: float = 1.0
    tau: float | None = None
    sweep: dict = field(default_factory=lambda: dict(_SWEEP_DEFAULTS))
    sim: dict = field(default_factory=lambda: dict(_SIM_DEFAULTS))
    oracle: dict = field(default_factory=lambda: dict(_ORACLE_DEFAULTS))
    seed: int = 42
    topologies: list = field(default_factory=list)
    out: str = "."
    format: str = "json"

    @classmethod
    def merge(cls, args: argparse.Namespace) -> "RunConfig":
        data: dict = {}
        if args.config is not None:
            data = _load_config_file(args.config)
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise InvalidInput(f"unknown config keys: {sorted(unknown)}")
        cfg = cls()
        for key in ("graph_path", "graph", "gamma", "tau", "seed", "out", "format"):
            if key in data and data[key] is not None:
                setattr(cfg, key, data[key])
        for key in ("sweep", "sim", "oracle"):
            block = data.get(key)
            if block is None:
                continue
            if not isinstance(block, dict):
                raise InvalidInput(f"config key {key!r} must be an object")
            base = getattr(cfg, key)
            bad = set(block) - set(base)
            if bad:
                raise InvalidInput(f"unknown keys in config {key!r}: {sorted(bad)}")
            base.update(block)
        if "topologies" in data:
            if not isinstance(data["topologies"], list):
                raise InvalidInput("config key 'topologies' must be a list")
            cfg.topologies = data["topologies"]
        # flags override the file
        if args.graph is not None:
            cfg.graph_path = args.graph
        if args.gamma is not None:
            cfg.gamma = args.gamma
        if args.tau is not None:
            cfg.tau = args.tau
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out = args.out
        if args.format is not None:
            cfg.format = args.format
        cfg._validate()
        return cfg

    def _validate(self) -> None:
        if self.format not in ("json", "csv"):
            raise InvalidInput(f"format must be 'json' or 'csv', got {self.format!r}")
        if not isinstance(self.seed, int):
            raise InvalidInput(f"seed must be an integer, got {self.seed!r}")
        gamma = float(self.gamma)
        if not np.isfinite(gamma):
            raise InvalidInput(f"gamma must be finite, got {self.gamma!r}")
        self.gamma = gamma
        if self.tau is not None:
            tau = float(self.tau)
            if not (np.isfinite(tau) and tau > 0):
                raise InvalidInput(f"tau must be positive and finite, got {self.tau!r}")
            self.tau = tau
        for key in ("tau_start", "delta_tau", "tau_max"):
            v = float(self.sweep[key])
            if not (np.isfinite(v) and v > 0):
                raise InvalidInput(f"sweep.{key} must be positive, got {self.sweep[key]!r}")
            self.sweep[key] = v
        tf = float(self.sim["t_f"])
        if not (np.isfinite(tf) and tf > 0):
            raise InvalidInput(f"sim.t_f must be positive, got {self.sim['t_f']!r}")
        self.sim["t_f"] = tf
        if self.sim["h"] is not None:
            h = float(self.sim["h"])
            if not (np.isfinite(h) and h > 0):
                raise InvalidInput(f"sim.h must be positive, got {self.sim['h']!r}")
            self.sim["h"] = h

    def require_tau(self, command: str) -> float:
        if self.tau is None:
            raise InvalidInput(f"{command} needs a delay: pass --tau or set it in the config")
        return self.tau

    def echo(self) -> dict:
        """Config block reproduced inside every payload."""
        doc = {
            "gamma": self.gamma,
            "tau": self.tau,
            "seed": self.seed,
            "sweep": dict(self.sweep),
            "sim": {k: v for k, v in self.sim.items()},
            "oracle": dict(self.oracle),
        }
        if self.graph_path is not None:
            doc["graph_path"] = str(self.graph_path)
        elif self.graph is not None:
            doc["graph"] = dict(self.graph)
        if self.topologies:
            doc["topologies"] = [
                {k: v for k, v in entry.items()} for entry in self.topologies
            ]
        return doc


def _load_config_file(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidInput(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise InvalidInput(f"config {path} must hold a JSON object")
    return data


def _graph_from_spec(spec: dict, seed: int):
    if not isinstance(spec, dict):
        raise InvalidInput(f"graph spec must be an object, got {spec!r}")
    kind = spec.get("kind")
    try:
        n = int(spec["n"])
    except (KeyError, TypeError, ValueError):
        raise InvalidInput(f"graph spec needs an integer 'n': {spec!r}") from None
    if kind == "cycle":
        return build_cycle(n)
    if kind == "path":
        return build_path(n)
    if kind == "random":
        return build_random(n, seed, p=float(spec.get("p", 0.5)))
    raise InvalidInput(f"unknown graph kind {kind!r} (use cycle, path or random)")


def _resolve_graph(cfg: RunConfig, entry: dict | None = None):
    """Graph for one run; `entry` is a compare-table row when given."""
    if entry is not None:
        if entry.get("graph_path"):
            return load_edge_list(entry["graph_path"])
        if entry.get("graph"):
            return _graph_from_spec(entry["graph"], cfg.seed)
        raise InvalidInput(f"topology entry needs graph_path or graph: {entry!r}")
    if cfg.graph_path is not None:
        return load_edge_list(cfg.graph_path)
    if cfg.graph is not None:
        return _graph_from_spec(cfg.graph, cfg.seed)
    raise InvalidInput("no graph given: pass --graph or set graph_path/graph in the config")


def _default_history(n: int) -> HistorySpec:
    # mean-free position ramp, agents at rest
    ramp = np.arange(1, n + 1, dtype=float) / n
    x0 = ramp - ramp.mean()
    return HistorySpec(tuple(float(v) for v in x0), (0.0,) * n)


def _history_for(cfg: RunConfig, n: int) -> HistorySpec:
    x0, v0 = cfg.sim.get("x0"), cfg.sim.get("v0")
    if x0 is None and v0 is None:
        return _default_history(n)
    if x0 is None or v0 is None:
        raise InvalidInput("sim.x0 and sim.v0 must be given together")
    return HistorySpec(tuple(float(v) for v in x0), tuple(float(v) for v in v0))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, complex):
        return {"re": float(obj.real), "im": float(obj.imag)}
    return obj


def _write_payload(payload: dict, path: Path) -> None:
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2)
    path.write_text(text + "\n")


def _spectrum_rows(sysm, tau: float, roots) -> list:
    """Roots as report rows, residual-certified, sorted by Re descending."""
    ordered = sorted(
        (complex(s) for s in roots), key=lambda z: (-z.real, abs(z.imag), z.imag)
    )
    return [
        {
            "re": float(s.real),
            "im": float(s.imag),
            "residual": float(abs(char_residual(s, sysm, tau))),
        }
        for s in ordered
    ]


def _verdict_doc(v, cross: dict | None) -> dict:
    doc = {
        "stable": bool(v.stable),
        "ambiguous": bool(v.ambiguous),
        "eta_lead": float(v.eta_lead),
        "mu_lead": float(v.mu_lead),
        "eta": [float(x) for x in v.eta],
        "mu": [float(x) for x in v.mu],
    }
    if cross is not None:
        doc["cross_check"] = cross
    return doc


# ---------------------------------------------------------------------------
# subcommands


def cmd_analyze(cfg: RunConfig, out: Path):
    tau = cfg.require_tau("analyze")
    g = _resolve_graph(cfg)
    sysm = assemble(g, cfg.gamma)
    eq, state, q0 = _principal_state(sysm, tau)
    b21, b22 = eq.unpack(state.x)
    q = _q_from_w(eq, state.x, q0)
    sol = build_solution(sysm, tau, q, w_blocks=(b21, b22))
    verdict = classify(sol, sysm, tau)
    abscissa, scan = rightmost_abscissa(sysm, tau)
    cross = {
        "oracle_abscissa": float(abscissa),
        "agrees": bool(verdict.stable == (abscissa < 0.0)),
    }
    checks = {name: bool(ok) for name, ok in sol.checks}
    necessity = bool(necessary_condition(sol, g, cfg.gamma, tau))
    s_vals = np.linalg.eigvals(np.asarray(sol.S))
    payload = {
        "command": "analyze",
        "config": cfg.echo(),
        "verdict": _verdict_doc(verdict, cross),
        "spectrum": {
            "from_solution": _spectrum_rows(sysm, tau, s_vals),
            "oracle_root_count": int(scan.count_with_conjugates()),
        },
        "invariants": {
            "checks": checks,
            "necessary_condition": necessity,
            "all_pass": bool(all(checks.values()) and necessity),
        },
        "solver": {
            "branch": int(sol.branch),
            "ordering": sol.ordering,
            "fixed_point_residual": float(sol.residual_fixed_point),
            "master_residual": float(sol.master_residual),
        },
        "timing_file": "analyze.timing.json",
    }
    _write_payload(payload, out / "analyze.json")
    if cfg.format == "csv":
        with (out / "analyze.csv").open("w", newline="\n") as fh:
            w = csv.writer(fh)
            w.writerow(["re", "im", "residual"])
            for row in payload["spectrum"]["from_solution"]:
                w.writerow([f"{row['re']:.12g}", f"{row['im']:.12g}",
                            f"{row['residual']:.6g}"])
    word = "stable" if verdict.stable else "unstable"
    flag = " (flagged ambiguous)" if verdict.ambiguous else ""
    line = (f"{word} at tau={tau:g}: eta_lead={verdict.eta_lead:.6g}, "
            f"mu_lead={verdict.mu_lead:.6g}, oracle abscissa "
            f"{abscissa:.3e}{flag}")
    return payload, EXIT_STABLE if verdict.stable else EXIT_UNSTABLE, line, {}


def cmd_margin(cfg: RunConfig, out: Path):
    g = _resolve_graph(cfg)
    sysm = assemble(g, cfg.gamma)
    sw = cfg.sweep
    t0 = time.perf_counter()
    sweep = sweep_delay(sysm, sw["tau_start"], sw["delta_tau"], sw["tau_max"])
    t1 = time.perf_counter()
    bis = margin_bisection(sysm, sw["tau_start"], grid_step=cfg.oracle.get("grid_step"))
    t2 = time.perf_counter()
    gap = abs(sweep.tau_star - bis.tau_star)
    tail = sweep.verdict_trace[-1]
    payload = {
        "command": "margin",
        "config": cfg.echo(),
        "lambert": {
            "tau_star": float(sweep.tau_star),
            "method": sweep.method,
            "delta_tau": float(sweep.delta_tau),
            "trace_length": len(sweep.verdict_trace),
            "reseeds": [float(t) for t in sweep.reseeds],
            "gaps": [[float(a), float(b)] for a, b in sweep.gaps],
            "drift": [[float(t), bool(r)] for t, r in sweep.drift],
            "last_point": {"tau": float(tail[0]), "eta_lead": float(tail[1]),
                           "mu_lead": float(tail[2])},
        },
        "oracle": {
            "tau_star": float(bis.tau_star),
            "method": bis.method,
            "tol": float(bis.delta_tau),
            "trace_length": len(bis.verdict_trace),
        },
        "gap": float(gap),
        "timing_file": "margin.timing.json",
    }
    _write_payload(payload, out / "margin.json")
    if cfg.format == "csv":
        with (out / "margin.csv").open("w", newline="\n") as fh:
            w = csv.writer(fh)
            w.writerow(["tau", "eta_lead", "mu_lead"])
            for tau, eta, mu in sweep.verdict_trace:
                w.writerow([f"{tau:.12g}", f"{eta:.12g}", f"{mu:.12g}"])
    line = (f"tau* = {sweep.tau_star:.6g} (sweep) vs {bis.tau_star:.6g} "
            f"(bisection), gap {gap:.2e}")
    timing = {"sweep_s": t1 - t0, "bisection_s": t2 - t1}
    return payload, EXIT_STABLE, line, timing


def cmd_simulate(cfg: RunConfig, out: Path):
    tau = cfg.require_tau("simulate")
    g = _resolve_graph(cfg)
    sysm = assemble(g, cfg.gamma)
    hist = _history_for(cfg, sysm.n)
    traj = integrate(sysm, tau, hist, t_f=cfg.sim["t_f"], h=cfg.sim["h"])
    write_trajectory_csv(traj, out / "trajectory.csv")
    summary = trajectory_summary(traj, hist)
    payload = {
        "command": "simulate",
        "config": cfg.echo(),
        "summary": summary,
        "trajectory_file": "trajectory.csv",
        "timing_file": "simulate.timing.json",
    }
    _write_payload(payload, out / "simulate.json")
    if traj.divergent:
        line = (f"diverged before t_f={cfg.sim['t_f']:g} at tau={tau:g}; "
                f"truncated trajectory written ({summary['samples']} samples)")
        return payload, EXIT_DIVERGED, line, {}
    line = (f"integrated to t={summary['t_final']:g} at tau={tau:g}: "
            f"nu={summary['nu']:.6g}, final disagreement "
            f"{summary['delta_final']:.3e}")
    return payload, EXIT_STABLE, line, {}


def cmd_oracle(cfg: RunConfig, out: Path):
    tau = cfg.require_tau("oracle")
    g = _resolve_graph(cfg)
    sysm = assemble(g, cfg.gamma)
    base = default_region(sysm, tau, re_min=float(cfg.oracle["re_min"]))
    step = cfg.oracle["grid_step"]
    im_max = cfg.oracle["im_max"]
    region = SearchRegion(
        base.re_min,
        base.re_max,
        base.im_max if im_max is None else float(im_max),
        base.grid_step if step is None else float(step),
    )
    spectrum = None
    for attempt in range(3):  # the scan gets two free refinements
        try:
            spectrum = find_roots(sysm, tau, region)
            break
        except GridTooCoarse:
            if attempt == 2:
                raise
            region = SearchRegion(region.re_min, region.re_max,
                                  region.im_max, region.grid_step / 2.0)
    rows = sorted(
        zip(spectrum.roots, spectrum.residuals, spectrum.multiplicities),
        key=lambda r: (-r[0].real, abs(r[0].imag)),
    )
    with (out / "spectrum.csv").open("w", newline="\n") as fh:
        w = csv.writer(fh)
        w.writerow(["re", "im", "residual", "multiplicity"])
        for s, res, mult in rows:
            w.writerow([f"{s.real:.12g}", f"{s.imag:.12g}", f"{res:.6g}", mult])
    payload = {
        "command": "oracle",
        "config": cfg.echo(),
        "region": {
            "re_min": region.re_min, "re_max": region.re_max,
            "im_max": region.im_max, "grid_step": region.grid_step,
        },
        "roots": [
            {"re": float(s.real), "im": float(s.imag),
             "residual": float(res), "multiplicity": int(mult)}
            for s, res, mult in rows
        ],
        "count_with_conjugates": int(spectrum.count_with_conjugates()),
        "spectrum_file": "spectrum.csv",
        "timing_file": "oracle.timing.json",
    }
    if cfg.format == "json":
        _write_payload(payload, out / "oracle.json")
    line = (f"{len(rows)} roots (upper half) at tau={tau:g}; "
            f"{payload['count_with_conjugates']} counting conjugates")
    return payload, EXIT_STABLE, line, {}


def _compare_one(cfg: RunConfig, entry: dict, tau: float):
    name = entry.get("name") or entry.get("graph_path") or "topology"
    g = _resolve_graph(cfg, entry)
    sysm = assemble(g, cfg.gamma)
    sw = cfg.sweep
    t0 = time.perf_counter()
    sweep = sweep_delay(sysm, sw["tau_start"], sw["delta_tau"], sw["tau_max"])
    bis = margin_bisection(sysm, sw["tau_start"])
    hist = _default_history(sysm.n)
    traj = integrate(sysm, tau, hist, t_f=cfg.sim["t_f"], h=cfg.sim["h"])
    summary = trajectory_summary(traj)
    row = {
        "name": str(name),
        "n": int(sysm.n),
        "tau_star_lambert": float(sweep.tau_star),
        "tau_star_oracle": float(bis.tau_star),
        "margin_gap": float(abs(sweep.tau_star - bis.tau_star)),
        "nu": float(summary["nu"]),
        "divergent": bool(summary["divergent"]),
    }
    return row, time.perf_counter() - t0


def cmd_compare(cfg: RunConfig, out: Path):
    if not cfg.topologies:
        raise InvalidInput("compare needs a config with a 'topologies' list")
    tau = cfg.tau if cfg.tau is not None else 0.26
    cap = min(worker_cap(), len(cfg.topologies))
    if cap > 1:
        with ThreadPoolExecutor(max_workers=cap) as pool:
            results = list(pool.map(lambda e: _compare_one(cfg, e, tau),
                                    cfg.topologies))
    else:
        results = [_compare_one(cfg, e, tau) for e in cfg.topologies]
    rows = [r for r, _ in results]
    timing = {f"{r['name']}_s": dt for r, dt in results}
    payload = {
        "command": "compare",
        "config": cfg.echo(),
        "common": {
            "tau": float(tau),
            "gamma": cfg.gamma,
            "t_f": cfg.sim["t_f"],
            "history": "mean-free ramp x0=(1..n)/n - mean, v0=0",
        },
        "rows": rows,
        "timing_file": "compare.timing.json",
    }
    _write_payload(payload, out / "compare.json")
    if cfg.format == "csv":
        with (out / "compare.csv").open("w", newline="\n") as fh:
            w = csv.writer(fh)
            w.writerow(["name", "n", "tau_star_lambert", "tau_star_oracle",
                        "margin_gap", "nu", "divergent"])
            for row in rows:
                w.writerow([row["name"], row["n"],
                            f"{row['tau_star_lambert']:.12g}",
                            f"{row['tau_star_oracle']:.12g}",
                            f"{row['margin_gap']:.6g}",
                            f"{row['nu']:.12g}", int(row["divergent"])])
    width = max(len(row["name"]) for row in rows)
    lines = [f"tau={tau:g}, gamma={cfg.gamma:g}"]
    for row in rows:
        lines.append(
            f"  {row['name']:<{width}}  tau*(lambert)={row['tau_star_lambert']:.4f}"
            f"  tau*(oracle)={row['tau_star_oracle']:.4f}"
            f"  gap={row['margin_gap']:.2e}  nu={row['nu']:.4f}"
        )
    return payload, EXIT_STABLE, "\n".join(lines), timing


_DISPATCH = {
    "analyze": cmd_analyze,
    "margin": cmd_margin,
    "simulate": cmd_simulate,
    "oracle": cmd_oracle,
    "compare": cmd_compare,
}


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--graph", metavar="PATH",
                        help="edge-list file (first line n, then 'i j' pairs)")
    common.add_argument("--gamma", type=float, help="velocity coupling weight")
    common.add_argument("--tau", type=float, help="communication delay")
    common.add_argument("--config", metavar="PATH",
                        help="JSON config; explicit flags override it")
    common.add_argument("--out", metavar="DIR", help="report directory (default .)")
    common.add_argument("--seed", type=int,
                        help="seed for generated random topologies (default 42)")
    common.add_argument("--format", choices=("json", "csv"),
                        help="also emit a CSV rendering of the report")
    p = argparse.ArgumentParser(
        prog="delaytk",
        description="Delay margins for double-integrator consensus networks",
    )
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("analyze", parents=[common],
                   help="stability verdict at one delay")
    sub.add_parser("margin", parents=[common],
                   help="critical delay by sweep and by bisection")
    sub.add_parser("simulate", parents=[common],
                   help="integrate the delayed dynamics, write the trajectory")
    sub.add_parser("oracle", parents=[common],
                   help="scan characteristic roots, write spectrum.csv")
    sub.add_parser("compare", parents=[common],
                   help="margin and control-effort table across topologies")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = RunConfig.merge(args)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        payload, code, line, phases = _DISPATCH[args.command](cfg, out)
    except InvalidInput as exc:
        print(f"delaytk {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except UnstableAtStart as exc:
        print(f"delaytk {args.command}: {exc}", file=sys.stderr)
        return EXIT_UNSTABLE
    except GridTooCoarse as exc:
        print(f"delaytk {args.command}: {exc}", file=sys.stderr)
        return EXIT_GRID_TOO_COARSE
    except (NonConvergence, BracketInvalid) as exc:
        print(f"delaytk {args.command}: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except DelaytkError as exc:
        print(f"delaytk {args.command}: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except OSError as exc:
        print(f"delaytk {args.command}: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    wall = time.perf_counter() - t0
    timing = {"command": args.command, "wall_s": wall}
    timing.update(phases)
    _write_payload(timing, out / f"{args.command}.timing.json")
    print(line)
    print(f"[delaytk] {args.command} finished in {wall:.3f}s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
