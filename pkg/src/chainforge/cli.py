"""Command-line front end: `chainforge generate` runs chain generation on
a model/properties pair, `chainforge bench` runs a benchmark suite and
compares against expected results.

Exit codes: 0 success, 2 no chain found, 3 parse/sort error, 4 timeout or
solver resource limit.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import __version__
from .dsl import parse_model, parse_properties, parse_state_set
from .engine import EngineConfig, FAILED, TimeoutAbort, ChainResult, generate_chain
from .model import Model, SortError, TestChain, replay
from .oracle import OracleLimit, oracle_min_chain, random_baseline
from .sat import SolverLimit

EXIT_OK = 0
EXIT_NO_CHAIN = 2
EXIT_PARSE = 3
EXIT_TIMEOUT = 4


def _load_model(path: str):
    text = Path(path).read_text()
    model, diags = parse_model(text, filename=path)
    for d in diags:
        print(str(d), file=sys.stderr)
    return model


def _load_props(path: str, model: Model):
    text = Path(path).read_text()
    props, diags = parse_properties(text, model, filename=path)
    for d in diags:
        print(str(d), file=sys.stderr)
    if any(d.severity == "error" for d in diags):
        return None
    return props


def _parse_set(text: str, model: Model, what: str):
    expr, diags = parse_state_set(text, model, filename=f"<{what}>")
    for d in diags:
        print(str(d), file=sys.stderr)
    return expr


def _fmt_vec(vec: dict) -> str:
    return " ".join(f"{k}={_fmt_val(v)}" for k, v in vec.items())


def _fmt_val(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    return str(v)


def _chain_json(chain: TestChain) -> dict:
    return {"length": chain.length,
            "inputs": [dict(i) for i in chain.inputs],
            "trace": [dict(s) for s in chain.trace],
            "covers": dict(sorted(chain.covers.items()))}


def _result_json(model: Model, result: ChainResult, cfg_args) -> dict:
    st = result.stats
    return {
        "model": model.name,
        "status": result.status,
        "reason": result.reason,
        "summary": {"tcs": len(result.chains),
                    "len": result.total_length,
                    "status": result.status},
        "chains": [_chain_json(c) for c in result.chains],
        "stats": {"k_reached": st.k_reached,
                  "solver_calls": st.solver_calls,
                  "repair_increments": st.repair_increments,
                  "refinement_splits": st.refinement_splits,
                  "partitions": st.partitions,
                  "backend": st.backend,
                  "abstract_path": st.abstract_path,
                  "wall_time_s": round(st.wall_time_s, 6)},
        "config": {"k_max": cfg_args.k_max, "atsp": cfg_args.atsp,
                   "seed": cfg_args.seed,
                   "multi_chain": not cfg_args.single_chain},
    }


def _print_text(result: ChainResult, out) -> None:
    for ci, chain in enumerate(result.chains):
        print(f"chain {ci + 1}:", file=out)
        for k, iv in enumerate(chain.inputs):
            covered = [p for p, at in sorted(chain.covers.items()) if at == k]
            note = f"   covers {', '.join(covered)}" if covered else ""
            print(f"  step {k}: {_fmt_vec(iv)}  ->  {_fmt_vec(chain.trace[k + 1])}{note}",
                  file=out)
    st = result.stats
    print(f"tcs={len(result.chains)} len={result.total_length} "
          f"status={result.status} k={st.k_reached} "
          f"time={st.wall_time_s:.2f}s", file=out)
    if result.status == FAILED:
        print(f"failure: {result.reason}", file=out)


def cmd_generate(args) -> int:
    model = _load_model(args.model)
    if model is None:
        return EXIT_PARSE
    props = _load_props(args.props, model)
    if props is None:
        return EXIT_PARSE
    init_text = args.init
    if init_text is None:
        if model.initial_state() is None:
            print("error: --init required (model has no deterministic init)",
                  file=sys.stderr)
            return EXIT_PARSE
        init_expr = model.init_expr()
    else:
        init_expr = _parse_set(init_text, model, "init")
        if init_expr is None:
            return EXIT_PARSE
    if args.final is None:
        final_expr = init_expr
    else:
        final_expr = _parse_set(args.final, model, "final")
        if final_expr is None:
            return EXIT_PARSE

    if args.replay:
        return _do_replay(args, model, props, final_expr)

    deadline = time.monotonic() + args.timeout if args.timeout else None
    cfg = EngineConfig(k_max=args.k_max, atsp=args.atsp,
                       allow_partition=not args.single_chain, seed=args.seed,
                       exhaust_k=args.exhaust_k,
                       strengthen_invariant=args.strengthen_invariant,
                       deadline=deadline)
    try:
        result = generate_chain(model, props, init_expr, final_expr, cfg)
    except (TimeoutAbort, SolverLimit) as ex:
        print(f"aborted: {ex}", file=sys.stderr)
        return EXIT_TIMEOUT
    except SortError as ex:
        print(f"error: {ex}", file=sys.stderr)
        return EXIT_PARSE

    out = open(args.output, "w") if args.output else sys.stdout
    try:
        if args.format == "json":
            json.dump(_result_json(model, result, args), out, indent=2)
            out.write("\n")
        elif args.format == "dot":
            out.write(result.graph.to_dot() if result.graph else "digraph {}\n")
        else:
            _print_text(result, out)
    finally:
        if args.output:
            out.close()
    return EXIT_OK if result.chains else EXIT_NO_CHAIN


def _do_replay(args, model: Model, props, final_expr) -> int:
    data = json.loads(Path(args.replay).read_text())
    ok = True
    for ci, chain in enumerate(data.get("chains", [])):
        report = replay(model, props, final_expr, chain["inputs"])
        same_trace = [dict(s) for s in report.trace] == chain.get("trace")
        same_covers = report.covers == {k: v for k, v in chain.get("covers", {}).items()}
        status = "ok" if (report.ok and same_trace and same_covers) else "MISMATCH"
        if status != "ok":
            ok = False
        print(f"chain {ci + 1}: replay {status} "
              f"(covered {sorted(report.covers)}, final={'yes' if report.final_ok else 'no'})")
        for name, at in report.violations:
            print(f"  assertion of '{name}' violated at step {at}")
    return EXIT_OK if ok else EXIT_NO_CHAIN


def cmd_bench(args) -> int:
    suite = Path(args.suite)
    rows = []
    failures = 0
    for bench_dir in sorted(p for p in suite.iterdir() if p.is_dir()):
        expected = bench_dir / "expected.json"
        model_file = bench_dir / "model.rsys"
        props_file = bench_dir / "props.props"
        if not (expected.exists() and model_file.exists() and props_file.exists()):
            continue
        exp = json.loads(expected.read_text())
        model = _load_model(str(model_file))
        props = _load_props(str(props_file), model) if model else None
        if model is None or props is None:
            rows.append((bench_dir.name, "-", "-", "-", "-", "-", "parse error"))
            failures += 1
            continue
        init_expr = (_parse_set(exp["init"], model, "init")
                     if "init" in exp else model.init_expr())
        final_expr = (_parse_set(exp["final"], model, "final")
                      if "final" in exp else init_expr)
        cfg = EngineConfig(k_max=exp.get("k_max", 50), seed=args.seed)
        t0 = time.perf_counter()
        try:
            result = generate_chain(model, props, init_expr, final_expr, cfg)
        except (TimeoutAbort, SolverLimit):
            rows.append((bench_dir.name, "-", "-", "-", "-", "-", "timeout"))
            failures += 1
            continue
        dt = time.perf_counter() - t0
        tcs, ln = len(result.chains), result.total_length
        try:
            opt = oracle_min_chain(model, props, init_expr, final_expr)
        except OracleLimit:
            opt = None
        base = random_baseline(model, props, init_expr, final_expr,
                               budget=exp.get("baseline_budget", 20000),
                               seed=args.seed)
        verdict = "ok"
        if "tcs" in exp and tcs != exp["tcs"]:
            verdict = f"tcs!={exp['tcs']}"
        elif "len" in exp and ln != exp["len"]:
            verdict = f"len!={exp['len']}"
        elif "len_max" in exp and ln > exp["len_max"]:
            verdict = f"len>{exp['len_max']}"
        elif opt is not None and result.chains and len(result.chains) == 1 and ln < opt:
            verdict = "below oracle optimum"  # impossible unless buggy
        if verdict != "ok":
            failures += 1
        rows.append((bench_dir.name, tcs, ln, f"{dt:.2f}",
                     opt if opt is not None else "-",
                     f"{base.coverage * 100:.0f}%/{base.total_length}", verdict))
    header = ("benchmark", "tcs", "len", "time", "oracle", "random", "verdict")
    widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))]
    for r in [header] + rows:
        print("  ".join(str(c).ljust(w) for c, w in zip(r, widths)))
    return EXIT_NO_CHAIN if failures else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="chainforge",
                                 description="Covering test-chain generator "
                                             "for synchronous reactive models")
    ap.add_argument("--version", action="version", version=f"chainforge {__version__}")
    sub = ap.add_subparsers(dest="cmd", required=True)

    gen = sub.add_parser("generate", help="generate a covering test chain")
    gen.add_argument("model", help=".rsys model file")
    gen.add_argument("props", help=".props property file")
    gen.add_argument("--init", help="start-state predicate (default: the model's init)")
    gen.add_argument("--final", help="final-state predicate (default: same as --init)")
    gen.add_argument("--k-max", type=int, default=50, help="reachability bound")
    gen.add_argument("--atsp", choices=("auto", "exact", "heuristic"), default="auto")
    gen.add_argument("--single-chain", action="store_true",
                     help="fail instead of splitting into multiple chains")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--format", choices=("text", "json", "dot"), default="text")
    gen.add_argument("--timeout", type=float, default=0.0,
                     help="wall-clock limit in seconds (0 = none)")
    gen.add_argument("--output", help="write the report to a file")
    gen.add_argument("--exhaust-k", action="store_true",
                     help="resolve every pair weight up to k-max")
    gen.add_argument("--strengthen-invariant", action="store_true",
                     help="conjoin the exact reachable set (small models)")
    gen.add_argument("--replay", metavar="JSON",
                     help="replay chains from an emitted JSON report")
    gen.set_defaults(fn=cmd_generate)

    bench = sub.add_parser("bench", help="run a benchmark suite directory")
    bench.add_argument("suite", help="directory of benchmark subdirectories")
    bench.add_argument("--seed", type=int, default=0)
    bench.set_defaults(fn=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
