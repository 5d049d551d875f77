"""Command-line surface: ``python3 -m fsobackhaul <command> ...``.

Commands: ``generate`` (random instance file), ``solve`` (exact or
sequential run, report / DOT / LP export), ``verify`` (independent check of
a report) and ``sweep`` (batch runs over K and added fibers).

Exit codes: 0 success, 1 verification failed, 2 usage error, 3 not
K-connectable, 4 timeout.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from pathlib import Path as FilePath
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import CostWeights, NotKConnectableError, ValidationError, iter_pairs
from .exact import build_crbnd, decode_paths, solve_exact
from .instance import (
    Instance,
    build_potential_graph,
    generate_random_instance,
    instance_hash,
    read_instance,
    write_instance,
    dumps_instance,
)
from .core import Topology
from .milp import export_model_text, read_solution_vector
from .report import build_report, dumps_report, read_report, render_dot
from .sequential import sequential_solve, write_traces
from .verify import verify_report

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_TIMEOUT = 0, 1, 2, 3, 4
SWEEP_COLUMNS = ["seed", "K", "fibers", "F", "M", "N", "norm_reliability", "objective", "time_ms"]


def _weights(args, base: CostWeights) -> CostWeights:
    vals = base.as_dict()
    for key in ("c1", "c2", "c3", "c4"):
        if getattr(args, key) is not None:
            vals[key] = getattr(args, key)
    return CostWeights(**vals)


def run_solve(
    instance: Instance, K: int, method: str, weights: CostWeights, time_limit: Optional[float] = None,
    timing: bool = True,
):
    """Solve and verify; returns (topology, report dict, verdict)."""
    graph = build_potential_graph(instance)
    start = time.perf_counter()
    if method == "exact":
        topo = solve_exact(graph, K, weights, time_limit=time_limit)
    elif method == "sequential":
        topo = sequential_solve(graph, K, weights, time_limit=time_limit)
    else:
        raise ValueError(f"unknown method {method!r}")
    elapsed = time.perf_counter() - start
    report = build_report(topo, graph, instance_hash(instance), method, elapsed if timing else None)
    verdict = verify_report(graph, report)
    report["verdict"] = verdict.as_dict()
    return topo, report, verdict


def cmd_generate(args) -> int:
    inst = generate_random_instance(
        args.fso, args.mirror if args.mirror is not None else args.fso, area_side=args.side, seed=args.seed,
        fiber_pair_fraction=args.fiber, nlos_link_fraction=args.nlos, K=args.k,
    )
    text = dumps_instance(inst)
    if args.out:
        FilePath(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _solution_topology(instance: Instance, K: int, weights: CostWeights, solution: str) -> Topology:
    graph = build_potential_graph(instance)
    model, v = build_crbnd(graph, K, weights)
    x = np.array(read_solution_vector(model, solution))
    bad = model.max_violation(x)
    if bad > 1e-6 or model.max_integrality_violation(x) > 1e-6:
        raise ValidationError(f"solution vector violates the model by {bad:.3g}")
    paths = decode_paths(graph, model, v, x)
    return Topology.from_paths(graph, paths, K, weights, status="imported", model_objective=model.evaluate(x))


def cmd_solve(args) -> int:
    instance = read_instance(args.instance)
    K = args.k if args.k is not None else instance.K
    weights = _weights(args, instance.weights)
    graph = build_potential_graph(instance)
    if args.export_lp:
        model, _ = build_crbnd(graph, K, weights)
        FilePath(args.export_lp).write_text(export_model_text(model), encoding="utf-8")
    try:
        if args.solution:
            topo = _solution_topology(instance, K, weights, args.solution)
            report = build_report(topo, graph, instance_hash(instance), "imported")
            verdict = verify_report(graph, report)
            report["verdict"] = verdict.as_dict()
        else:
            topo, report, verdict = run_solve(instance, K, args.method, weights, args.time_limit, not args.no_timing)
    except NotKConnectableError as exc:
        print(f"error: not K-connectable: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if topo.status == "timeout" and not topo.paths:
        print(f"error: timeout without incumbent (bound {topo.bound})", file=sys.stderr)
        return EXIT_TIMEOUT
    text = dumps_report(report)
    if args.out:
        FilePath(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    if args.render:
        FilePath(args.render).write_text(render_dot(topo, graph), encoding="utf-8")
    if args.trace and "traces" in topo.info:
        write_traces(topo.info["traces"], args.trace)
    if topo.status == "timeout":
        print("warning: time limit reached; report holds the incumbent", file=sys.stderr)
        return EXIT_TIMEOUT
    return EXIT_OK if verdict.ok else EXIT_VERIFY


def cmd_verify(args) -> int:
    instance = read_instance(args.instance)
    graph = build_potential_graph(instance)
    report = read_report(args.report)
    verdict = verify_report(graph, report)
    if verdict.ok:
        print("PASS")
        return EXIT_OK
    print("FAIL")
    for p in verdict.problems:
        print(f"  {p}")
    return EXIT_VERIFY


def nested_fibers(instance: Instance, seed: int, count: int):
    """The first ``count`` extra fiber pairs of a seed-fixed order (nested in ``count``)."""
    existing = set(instance.fibers)
    fso = [n.id for n in instance.nodes if n.is_fso]
    candidates = [p for p in iter_pairs(fso) if p not in existing]
    order = np.random.default_rng(seed).permutation(len(candidates))
    return [candidates[i] for i in order[:count]]


def run_sweep(
    instance: Instance, k_list: Sequence[int], fiber_list: Sequence[int], seeds: int,
    method: str = "exact", weights: Optional[CostWeights] = None, time_limit: Optional[float] = None,
) -> List[Dict[str, object]]:
    """One verified run per (seed, K, fibers); rows in (seed, K, fibers) order."""
    weights = weights or instance.weights
    rows = []
    for seed in range(seeds):
        for K in k_list:
            for f in fiber_list:
                inst = instance.with_fibers(list(instance.fibers) + nested_fibers(instance, seed, f))
                start = time.perf_counter()
                topo, report, verdict = run_solve(inst, K, method, weights, time_limit)
                rows.append({
                    "seed": seed, "K": K, "fibers": f, "F": topo.F, "M": topo.M, "N": topo.N,
                    "norm_reliability": topo.normalized_reliability, "objective": topo.objective,
                    "time_ms": round(1000 * (time.perf_counter() - start), 3), "verified": verdict.ok,
                })
    return rows


def summarize_sweep(rows: Sequence[Dict[str, object]]) -> List[Dict[str, object]]:
    cells: Dict = {}
    for r in rows:
        cells.setdefault((r["K"], r["fibers"]), []).append(r)
    out = []
    for (K, f), rs in sorted(cells.items()):
        out.append({
            "K": K, "fibers": f,
            **{f"mean_{k}": float(np.mean([r[k] for r in rs])) for k in ("F", "M", "N", "norm_reliability")},
        })
    return out


def sweep_svg(summary: Sequence[Dict[str, object]], width: int = 480, height: int = 320) -> str:
    """Mean transceivers against K, one polyline per fiber count."""
    ks = sorted({r["K"] for r in summary})
    top = max([r["mean_F"] for r in summary] + [1.0])
    pad = 40
    def px(K):
        return pad + (width - 2 * pad) * (ks.index(K) / max(1, len(ks) - 1))
    def py(F):
        return height - pad - (height - 2 * pad) * F / top
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>']
    for K in ks:
        parts.append(f'<text x="{px(K):.1f}" y="{height - pad + 16}" font-size="11">K={K}</text>')
    for i, f in enumerate(sorted({r["fibers"] for r in summary})):
        pts = [(px(r["K"]), py(r["mean_F"])) for r in summary if r["fibers"] == f]
        coords = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
        parts.append(f'<polyline fill="none" stroke-width="2" stroke="hsl({i * 110},60%,40%)" points="{coords}"/>')
        parts.append(f'<text x="{width - pad + 2}" y="{pts[-1][1]:.1f}" font-size="11">{f} fibers</text>')
    parts.append(f'<text x="{pad}" y="{pad - 10}" font-size="12">mean F</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _write_csv(rows, cols, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def cmd_sweep(args) -> int:
    instance = read_instance(args.instance)
    weights = _weights(args, instance.weights)
    try:
        rows = run_sweep(instance, args.k_list, args.fiber_list, args.seeds, args.method, weights, args.time_limit)
    except NotKConnectableError as exc:
        print(f"error: not K-connectable: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    _write_csv(rows, SWEEP_COLUMNS, args.out)
    summary = summarize_sweep(rows)
    if args.summary:
        _write_csv(summary, list(summary[0]), args.summary)
    if args.plot:
        FilePath(args.plot).write_text(sweep_svg(summary), encoding="utf-8")
    failed = [r for r in rows if not r["verified"]]
    for r in failed:
        print(f"verification failed: seed={r['seed']} K={r['K']} fibers={r['fibers']}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK


def _int_list(text: str) -> List[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _add_weights(p) -> None:
    for key in ("c1", "c2", "c3", "c4"):
        p.add_argument(f"--{key}", type=float, default=None, help=f"override weight {key}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fsobackhaul", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a random instance file")
    g.add_argument("--fso", type=int, required=True)
    g.add_argument("--mirror", type=int, default=None, help="defaults to --fso")
    g.add_argument("--side", type=float, default=3000.0)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--nlos", type=float, default=0.10)
    g.add_argument("--fiber", type=float, default=0.05)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--out")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="design a topology and write a run report")
    s.add_argument("--instance", required=True)
    s.add_argument("--k", type=int, default=None)
    s.add_argument("--method", choices=["exact", "sequential"], default="exact")
    _add_weights(s)
    s.add_argument("--time-limit", type=float, default=None)
    s.add_argument("--out")
    s.add_argument("--render", help="write a Graphviz DOT rendering")
    s.add_argument("--export-lp", help="write the exact model in LP text format")
    s.add_argument("--solution", help="decode an external solution vector of the exact model instead of solving")
    s.add_argument("--trace", help="write sequential iteration traces as CSV")
    s.add_argument("--no-timing", action="store_true", help="omit wall time so reports are byte-identical")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser(
        "verify",
        help="independently check a report",
        description="Re-checks paths, disjointness, mirror stretch lengths, device counts and the objective. "
        "Disjointness is decided pairwise; a unit-capacity max-flow witness (fibers uncapacitated) is sound "
        "but incomplete, and when it falls short an exhaustive search over the reported paths decides.",
    )
    v.add_argument("--instance", required=True)
    v.add_argument("--report", required=True)
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="batch runs over K and added fibers")
    w.add_argument("--instance", required=True)
    w.add_argument("--k-list", type=_int_list, default=[1, 2, 3])
    w.add_argument("--fiber-list", type=_int_list, default=[0, 2, 4])
    w.add_argument("--seeds", type=int, default=1)
    w.add_argument("--method", choices=["exact", "sequential"], default="exact")
    _add_weights(w)
    w.add_argument("--time-limit", type=float, default=None)
    w.add_argument("--out", required=True)
    w.add_argument("--summary", help="write per-cell means as CSV")
    w.add_argument("--plot", help="write mean F against K as SVG")
    w.set_defaults(func=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "generate" and args.fso < 2:
        parser.error("--fso must be at least 2")
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
