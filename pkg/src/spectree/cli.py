"""Command-line entry point: ``spectree <subcommand> ...``.

Exit codes: 0 success, 1 a numerical check failed (a JSON failure report
is written), 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile

import numpy as np

from . import criteria, decomposition, defect, random_trees, surgery
from .errors import BudgetExceeded, CheckFailed, NoCutFound
from .graph_core import (
    OffspringSequence,
    WeightedGraph,
    build_offspring_tree,
    complete_graph,
    parse_vertex,
    path_graph,
    read_edge_list,
    star_graph,
)
from .operators import ADJACENCY, FLAVORS, PotentialSpec, SchrodingerOperator, dense_matrix, vertex_norms

SCHEMA_VERSION = 1


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def _json_default(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (set, frozenset, tuple)):
        return list(x)
    if hasattr(x, "to_json"):
        return x.to_json()
    if hasattr(x, "value"):
        return x.value
    return str(x)


def _clean(x):
    """Replace non-finite floats so the output is strict JSON."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return None if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def dumps(obj) -> str:
    obj = json.loads(json.dumps(obj, default=_json_default))
    return json.dumps(_clean(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def write_atomic(path: str, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".spectree-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(text: str, out: str | None) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def envelope(command: str, payload: dict) -> dict:
    return {"schema_version": SCHEMA_VERSION, "command": command, **payload}


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x) -> str:
    return repr(float(x))


# ---------------------------------------------------------------------------
# argument parsing helpers
# ---------------------------------------------------------------------------


def parse_family(text: str) -> OffspringSequence:
    try:
        if os.path.isfile(text):
            with open(text) as fh:
                return OffspringSequence.from_json(json.load(fh))
        return OffspringSequence.parse(text)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"bad --family {text!r}: {exc}") from None


def parse_potential(text: str | None) -> PotentialSpec:
    """``zero``, ``const:c``, ``power:c,p``, ``sphere:v0,v1,...`` or JSON."""
    if text is None or text == "zero":
        return PotentialSpec.zero()
    try:
        if text.lstrip().startswith("{"):
            return PotentialSpec.from_json(text)
        kind, _, rest = text.partition(":")
        nums = [float(x) for x in rest.split(",") if x.strip()]
        if kind in ("const", "constant"):
            return PotentialSpec.const(nums[0])
        if kind == "power":
            return PotentialSpec.power(*nums)
        if kind == "sphere":
            return PotentialSpec.spherical(nums)
    except (ValueError, IndexError, TypeError) as exc:
        raise UsageError(f"bad --potential {text!r}: {exc}") from None
    raise UsageError(f"bad --potential {text!r}")


def parse_graph(text: str) -> WeightedGraph:
    """``complete:n``, ``path:n``, ``star:d`` or an edge-list file."""
    kind, _, rest = text.partition(":")
    try:
        if kind == "complete":
            return complete_graph(int(rest))
        if kind == "path":
            return path_graph(int(rest))
        if kind == "star":
            return star_graph(int(rest))
        path = rest if kind == "file" else text
        with open(path) as fh:
            return read_edge_list(fh)
    except (ValueError, OSError) as exc:
        raise UsageError(f"bad --graph {text!r}: {exc}") from None


def parse_eta(text: str):
    if text.lower() in ("inf", "infinity", "∞"):
        return math.inf
    try:
        v = int(text)
    except ValueError:
        raise UsageError(f"bad --eta {text!r}") from None
    if v < 0:
        raise UsageError("--eta must be >= 0")
    return v


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_decompose(args) -> int:
    b = parse_family(args.family)
    v = parse_potential(args.potential)
    try:
        rep = decomposition.verify_spectral_equivalence(b, v, args.depth, args.tol, raise_on_failure=False)
    except BudgetExceeded as exc:
        emit(dumps(envelope("decompose", {"ok": False, "error": str(exc), "partial": exc.partial})), args.out)
        return 1
    emit(dumps(envelope("decompose", {"family": b.describe(), **rep.to_json()})), args.out)
    return 0 if rep.ok else 1


def _classify_one(family, potential, flavor, reading):
    prob = criteria.Problem(family, potential, flavor, reading)
    return criteria.classify(prob)


def _key_statistic(verdict) -> str:
    ev = verdict.evidence
    if "series" in ev:
        return f"partial_sum={ev['series']['partial_sum']:.6g}"
    if "partial_l1_sum" in ev:
        return f"partial_l1_sum={ev['partial_l1_sum']:.6g}"
    if "lower_bound" in ev:
        return f"lower_bound={ev['lower_bound']}"
    if "variant" in ev:
        return f"variant={ev['variant']}"
    if "potential_growth" in ev:
        return f"potential_growth={ev['potential_growth']}"
    return ""


def cmd_classify(args) -> int:
    if args.batch:
        with open(args.batch) as fh:
            items = json.load(fh)
        rows, out = [], []
        for item in items:
            fam = item["family"]
            b = OffspringSequence.from_json(fam) if isinstance(fam, dict) else parse_family(fam)
            pot = item.get("potential")
            v = PotentialSpec.from_json(pot) if isinstance(pot, dict) else parse_potential(pot)
            verdict = _classify_one(b, v, item.get("flavor", ADJACENCY), item.get("carleman_reading", args.carleman_reading))
            rows.append([b.describe(), verdict.outcome.value, verdict.criterion, _key_statistic(verdict)])
            out.append({"family": b.describe(), **verdict.to_json()})
        if args.json:
            emit(dumps(envelope("classify", {"results": out})), args.out)
        else:
            emit(to_csv(["family", "outcome", "criterion", "statistic"], rows), args.out)
        return 0
    if not args.family:
        raise UsageError("classify needs --family or --batch")
    b = parse_family(args.family)
    v = parse_potential(args.potential)
    verdict = _classify_one(b, v, args.flavor, args.carleman_reading)
    emit(dumps(envelope("classify", {"family": b.describe(), "verdict": verdict.to_json()})), args.out)
    return 0


def cmd_defect(args) -> int:
    b = parse_family(args.family)
    v = parse_potential(args.potential)
    z = complex(args.z.replace(" ", "").replace("i", "j"))
    if args.tree:
        t = build_offspring_tree(b, args.depth)
        f, prof = defect.build_tree_defect_vector(t, z)
        vals = defect.sphere_constant_projection(t, f)
        extra = {
            "residual": prof.details["residual"],
            "sibling_constant": defect.sibling_constant(t, f),
            "sphere_norm_inequality": all(r["ok"] for r in defect.sphere_norm_inequality(t, f)),
        }
    else:
        blk = decomposition.JacobiBlock(args.block, b, v, decomposition.block_multiplicity(b, args.block))
        vals, prof = defect.jacobi_defect_solution(blk, z, args.n_max)
        extra = {}
    if args.json:
        emit(dumps(envelope("defect", {"family": b.describe(), "z": str(z), "profile": prof.to_json(), **extra})), args.out)
        return 0
    rows = []
    partial = np.cumsum(np.abs(vals) ** 2)
    for k, (u, s) in enumerate(zip(vals, partial)):
        rows.append([k, _fmt(u.real), _fmt(u.imag), _fmt(abs(u) ** 2), _fmt(s)])
    emit(to_csv(["k", "re", "im", "abs2", "partial_sum"], rows), args.out)
    return 0


def cmd_gw(args) -> int:
    try:
        dist = random_trees.OffspringDistribution.parse(args.dist)
    except (ValueError, OSError) as exc:
        raise UsageError(f"bad --dist {args.dist!r}: {exc}") from None
    m, tail = random_trees.pruning_threshold(dist) if args.threshold is None else (args.threshold, dist.tail_expectation(args.threshold))
    rows = []
    for i in range(args.samples):
        try:
            t = random_trees.sample_gw_tree(dist, args.max_depth, args.seed, i)
        except BudgetExceeded as exc:
            rows.append([i, "", "", "", "budget"])
            continue
        roots = random_trees.prune_roots(t, m)
        comps = random_trees.prune(t, m)
        censored = any(random_trees.component_reaches_cap(t, r, c, m) for r, c in zip(roots, comps))
        rows.append([i, len(comps), max(len(c) for c in comps), max(c.depth for c in comps), int(censored)])
    summary = {"distribution": dist.describe(), "threshold": m, "tail_expectation": tail}
    if tail < 1:
        stats = random_trees.supermartingale_check(dist, m, args.samples, args.horizon, args.seed, args.cap)
        summary.update(
            pruning_report=stats["report"].to_json(),
            per_generation=stats["per_generation"],
            pooled=stats["pooled"],
            passed=stats["passed"],
        )
    else:
        summary["passed"] = False
    if args.summary:
        write_atomic(args.summary, dumps(envelope("gw", summary)))
    if args.json:
        emit(dumps(envelope("gw", {"samples": [dict(zip(GW_HEADER, r)) for r in rows], "summary": summary})), args.out)
    else:
        emit(to_csv(GW_HEADER, rows), args.out)
    return 0 if summary["passed"] and summary.get("pruning_report", {}).get("censored", 0) == 0 else 1


GW_HEADER = ["sample", "components", "max_component_size", "max_depth", "censored"]


def _load_perturbation(path: str) -> surgery.EdgePerturbation:
    with open(path) as fh:
        spec = json.load(fh)
    comps = []
    for c in spec["components"]:
        verts = [parse_vertex(str(v)) if not isinstance(v, int) else v for v in c.get("vertices", [])]
        edges = []
        for e in c.get("edges", []):
            u, v = (x if isinstance(x, int) else parse_vertex(str(x)) for x in e[:2])
            edges.append((u, v, *e[2:]))
            for x in (u, v):
                if x not in verts:
                    verts.append(x)
        comps.append(WeightedGraph.from_edges(verts, edges))
    added = []
    for e in spec.get("added", []):
        a, b = e[0], e[1]
        added.append(((a[0], a[1]), (b[0], b[1]), *e[2:]))
    return surgery.EdgePerturbation.from_components(comps, added)


def cmd_surgery_check(args) -> int:
    p = _load_perturbation(args.input)
    rep = surgery.verify_difference_bound(p)
    emit(dumps(envelope("surgery-check", rep.to_json())), args.out)
    return 0 if rep.passed else 1


def cmd_split(args) -> int:
    with open(args.input) as fh:
        a = surgery.read_banded(fh)
    try:
        res = surgery.banded_block_split(a, args.bound)
    except NoCutFound as exc:
        emit(dumps(envelope("split", {"ok": False, "error": str(exc)})), args.out)
        return 1
    ok = res.residual_norm <= res.schur_estimate + 1e-12
    emit(dumps(envelope("split", {"ok": ok, **res.to_json()})), args.out)
    return 0 if ok else 1


def cmd_tensor(args) -> int:
    eta = parse_eta(args.eta)
    k = parse_graph(args.graph)
    rank = criteria.adjacency_rank(k, args.rtol)
    out = criteria.tensor_deficiency(eta, k, args.rtol)
    emit(dumps(envelope("tensor", {"eta": eta, "rank": rank, "tensor_deficiency": out})), args.out)
    return 0


def cmd_norms(args) -> int:
    g = parse_graph(args.graph)
    verts = g.vertices if args.vertex is None else [_vertex_arg(g, args.vertex)]
    a = dense_matrix(SchrodingerOperator(g))
    lap = dense_matrix(SchrodingerOperator(g, flavor="laplacian"))
    rows, ok = [], True
    for x in verts:
        na, nd = vertex_norms(g, x)
        e = np.zeros(len(g))
        e[g.idx(x)] = 1.0
        oa, od = float(np.sum((a @ e) ** 2)), float(np.sum((lap @ e) ** 2))
        good = abs(na - oa) <= 1e-12 * max(1, oa) and abs(nd - od) <= 1e-12 * max(1, od)
        ok &= good
        rows.append({"vertex": str(x), "adjacency": na, "laplacian": nd, "dense_adjacency": oa, "dense_laplacian": od, "match": good})
    emit(dumps(envelope("norms", {"rows": rows, "ok": ok})), args.out)
    return 0 if ok else 1


def _vertex_arg(g, text):
    for cand in (text, _maybe_int(text), parse_vertex(text) if "/" in text or text in ("e", "-", "ε") else None):
        if cand is not None and cand in g:
            return cand
    raise UsageError(f"vertex {text!r} not in graph")


def _maybe_int(text):
    try:
        return int(text)
    except ValueError:
        return None


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spectree", description="Deficiency-index experiments on trees and graphs.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp_):
        sp_.add_argument("--out", help="output path (written atomically); default stdout")
        sp_.add_argument("--json", action="store_true", help="emit JSON instead of CSV where applicable")
        return sp_

    s = common(sub.add_parser("decompose", help="compare tree and Jacobi-block spectra"))
    s.add_argument("--family", required=True)
    s.add_argument("--potential")
    s.add_argument("--depth", type=int, default=6)
    s.add_argument("--tol", type=float, default=1e-8)
    s.set_defaults(func=cmd_decompose)

    s = common(sub.add_parser("classify", help="self-adjointness verdict for a tree family"))
    s.add_argument("--family")
    s.add_argument("--potential")
    s.add_argument("--flavor", choices=FLAVORS, default=ADJACENCY)
    s.add_argument("--carleman-reading", choices=("vertex", "pairs"), default="vertex")
    s.add_argument("--batch", help="JSON list of {family, potential, flavor}; emits CSV")
    s.set_defaults(func=cmd_classify)

    s = common(sub.add_parser("defect", help="defect-vector candidate and its norm profile"))
    s.add_argument("--family", required=True)
    s.add_argument("--potential")
    s.add_argument("--block", type=int, default=0)
    s.add_argument("--z", default="1j")
    s.add_argument("--n-max", type=int, default=10_000)
    s.add_argument("--tree", action="store_true", help="use the tree recursion instead of the block recurrence")
    s.add_argument("--depth", type=int, default=8)
    s.set_defaults(func=cmd_defect)

    s = common(sub.add_parser("gw", help="Galton-Watson sampling and pruning statistics"))
    s.add_argument("--dist", required=True, help="poisson:LAM | geom:P | pmf:P0,P1,... | pmf:FILE")
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-depth", type=int, default=6, help="depth of the full sampled trees")
    s.add_argument("--cap", type=int, default=10_000, help="depth cap of the root-component exploration")
    s.add_argument("--horizon", type=int, default=10)
    s.add_argument("--threshold", type=int)
    s.add_argument("--summary", help="path for the JSON summary")
    s.set_defaults(func=cmd_gw)

    s = common(sub.add_parser("surgery-check", help="difference norm against the surgery bound"))
    s.add_argument("--input", required=True)
    s.set_defaults(func=cmd_surgery_check)

    s = common(sub.add_parser("split", help="block split of a banded matrix"))
    s.add_argument("--input", required=True)
    s.add_argument("--bound", type=float, required=True)
    s.set_defaults(func=cmd_split)

    s = common(sub.add_parser("tensor", help="deficiency of a tensor product with a finite graph"))
    s.add_argument("--eta", required=True)
    s.add_argument("--graph", required=True)
    s.add_argument("--rtol", type=float, default=criteria.RANK_RTOL)
    s.set_defaults(func=cmd_tensor)

    s = common(sub.add_parser("norms", help="closed-form |A 1_x|^2 and |Δ 1_x|^2 against dense oracles"))
    s.add_argument("--graph", required=True)
    s.add_argument("--vertex")
    s.set_defaults(func=cmd_norms)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"spectree: error: {exc}", file=sys.stderr)
        return 2
    except CheckFailed as exc:
        emit(dumps(envelope(args.command, {"ok": False, "error": str(exc), "report": exc.report})), getattr(args, "out", None))
        return 1


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
