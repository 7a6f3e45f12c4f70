"""``dyadweight`` command line.

Exit codes: 0 success, 2 usage or unreadable input, 3 invalid weight,
4 a checked inequality failed, 5 an iteration did not converge.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_INPUT, EXIT_WEIGHT, EXIT_ASSERT, EXIT_NOCONV = 0, 2, 3, 4, 5


class InputError(Exception):
    pass


def fmt(v) -> str:
    """12 significant digits; integers print without a decimal point."""
    return f"{float(v):.12g}"


def fmt_value(v) -> str:
    """12 significant digits as a Python float literal (``1.0``, ``1.5625``)."""
    return repr(float(fmt(v)))


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise InputError(f"no such file: {path}")
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}")


def _load_weight(path):
    from .weights import Weight

    data = _read_json(path)
    if isinstance(data, list):
        return Weight(data)
    if not isinstance(data, dict) or "values" not in data:
        raise InputError(f"{path}: expected a list of values or an object with 'values'")
    return Weight.from_dict(data)


def _load_sigma(path, depth):
    from .martingale import SigmaPattern

    data = _read_json(path)
    values = data.get("sigma") if isinstance(data, dict) else data
    try:
        sigma = SigmaPattern(values)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}")
    if sigma.depth != depth:
        raise InputError(f"sigma depth {sigma.depth} does not match weight depth {depth}")
    return sigma


def _summary(delta, norm, c) -> tuple[str, bool]:
    bound = 1.0 + c * np.sqrt(max(delta, 0.0))
    ok = norm <= bound * (1 + 1e-12)
    return f"delta={fmt(delta)} norm={fmt(norm)} bound=1+{fmt(c)}*sqrt(delta)={fmt(bound)} {'ok' if ok else 'violated'}", ok


# -- commands -----------------------------------------------------------------------

def cmd_char(args) -> int:
    from .weights import a2d_characteristic, heat_characteristic, poisson_characteristic

    w = _load_weight(args.weight)
    if args.kind == "a2d":
        ch = a2d_characteristic(w, args.p)
    elif args.kind == "poisson":
        ch = poisson_characteristic(w)
    else:
        ch = heat_characteristic(w)
    print(fmt_value(ch.value))
    print(f"delta={fmt(ch.delta)}")
    return EXIT_OK


def cmd_mnorm(args) -> int:
    from .martingale import NonConvergenceError, weighted_norm, worst_sigma
    from .weights import a2d_characteristic

    w = _load_weight(args.weight)
    if args.sigma:
        sigma = _load_sigma(args.sigma, w.depth)
        est = weighted_norm(sigma, w, args.tol, args.method, args.seed)
        if not est.converged:
            raise NonConvergenceError(f"{est.method} stopped after {est.iterations} iterations")
    else:
        sigma, est = worst_sigma(w, args.restarts, args.seed)
    delta = a2d_characteristic(w).delta
    line, ok = _summary(delta, est.value, args.c)
    if args.out:
        Path(args.out).write_text(json.dumps({
            "delta": delta, "norm": est.value, "method": est.method, "iterations": est.iterations,
            "sigma": sigma.sigma.tolist(), "sigma_digest": sigma.digest(),
        }, indent=2, sort_keys=True) + "\n")
    print(line)
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_hnorm(args) -> int:
    from .continuum import weighted_hilbert_norm
    from .martingale import NonConvergenceError

    w = _load_weight(args.weight)
    res = weighted_hilbert_norm(w, args.n, args.half_length, args.trials, args.seed, args.tol, args.method)
    if not res.estimate.converged:
        raise NonConvergenceError("Hilbert norm iteration did not converge")
    line, ok = _summary(res.delta, res.value, args.c)
    if args.out:
        Path(args.out).write_text(json.dumps({
            "delta_H": res.delta, "norm": res.value, "n": res.n, "half_length": res.half_length,
            "characteristic": res.characteristic.meta,
        }, indent=2, sort_keys=True) + "\n")
    print(line)
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_sweep(args) -> int:
    from .experiments import ExperimentConfig, run_sweep, write_results

    try:
        cfg = ExperimentConfig.from_dict(_read_json(args.config))
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad config: {exc}")
    res = run_sweep(cfg)
    base = args.out or cfg.output or Path(args.config).with_suffix("")
    paths = write_results(res, base, svg=args.svg and res.fit is not None)
    bad = [r for r in res.ok_records() if r["norm"] < 1.0 - 1e-6]
    failed = [r for r in res.records if r.get("norm") is None]
    if res.fit is None:
        head = f"records={len(res.records)} {res.fit_note}"
        ok = not bad
    else:
        f = res.fit
        ok = not bad and all(r["norm"] <= 1 + f.c_law * np.sqrt(max(r["delta"], 0.0)) * (1 + 1e-12)
                             for r in res.ok_records())
        small = min(res.ok_records(), key=lambda r: r["delta"])
        head = (f"delta={fmt(small['delta'])} norm={fmt(small['norm'])} bound=1+{fmt(f.c_law)}*sqrt(delta) "
                f"b={fmt(f.b)} r2={fmt(f.r2)}")
    print(f"{head} failed={len(failed)} files={','.join(str(p) for p in paths)} {'ok' if ok else 'violated'}")
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_carleson(args) -> int:
    from .carleson import c_squared_bound, embedding_constants, CarlesonSequence
    from .haar import disbalanced_table

    w = _load_weight(args.weight)
    chk = c_squared_bound(w)
    emb = embedding_constants(CarlesonSequence(disbalanced_table(w).c ** 2), w, args.trials, args.seed)
    ok = chk.ok and emb.ok
    top = emb.c_embed if emb.c_embed_exact is None else max(emb.c_embed, emb.c_embed_exact)
    print(f"lhs={fmt(chk.lhs)} rhs={fmt(chk.rhs)} c_pack={fmt(emb.c_pack)} c_embed={fmt(top)} "
          f"{'ok' if ok else 'violated'}")
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_bellman_build(args) -> int:
    from .bellman import build_table

    table = build_table(args.Q, args.depth, args.n_xy, args.n_p, args.restarts, args.seed)
    table.save(args.out)
    print(f"Q={fmt(args.Q)} depth={table.depth} nodes={table.values.size} max_b={fmt(table.values.max())} ok")
    return EXIT_OK


def cmd_bellman_verify(args) -> int:
    from .bellman import BellmanTable, depth_monotone, verify_midpoint_concavity, verify_range

    try:
        table = BellmanTable.from_dict(_read_json(args.table))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad table: {exc}")
    mono = depth_monotone(table)
    rng_rep = verify_range(table, args.c)
    conc = verify_midpoint_concavity(table, args.samples, args.seed) if table.depth >= 1 else None
    ok = mono and rng_rep.ok and (conc is None or conc.ok)
    conc_txt = "n/a" if conc is None else f"{len(conc.violations)}/{conc.checked}"
    print(f"depth={table.depth} monotone={mono} range_violations={len(rng_rep.violations)}/{rng_rep.checked} "
          f"concavity_violations={conc_txt} rs1_points={rng_rep.boundary_points} {'ok' if ok else 'violated'}")
    return EXIT_OK if ok else EXIT_ASSERT


def cmd_pairing(args) -> int:
    from .continuum import GridFunction, HalfPlaneGrid, heat_pairing_identity, pairing_inequality, random_bump_pairs

    if args.phi and args.psi:
        try:
            pairs = [(GridFunction.from_csv(args.phi), GridFunction.from_csv(args.psi))]
        except FileNotFoundError as exc:
            raise InputError(str(exc))
        except (ValueError, IndexError) as exc:
            raise InputError(f"bad grid function file: {exc}")
    elif args.phi or args.psi:
        raise InputError("give both --phi and --psi, or neither (random corpus)")
    else:
        pairs = random_bump_pairs(args.count, args.seed)
    grid = HalfPlaneGrid.log_spaced(n_t=args.n_t)
    worst, fails = 0.0, 0
    for phi, psi in pairs:
        if args.kind == "heat":
            r = heat_pairing_identity(phi, psi, grid)
            bad = r.mismatch > args.slack
            worst = max(worst, r.mismatch)
        else:
            r = pairing_inequality(phi, psi, grid, slack=args.slack)
            bad = not r.ok
            worst = max(worst, r.lhs / r.rhs if r.rhs > 0 else np.inf)
        fails += bad
    label = "max_mismatch" if args.kind == "heat" else "max_ratio"
    print(f"pairs={len(pairs)} lhs={fmt(r.lhs)} rhs={fmt(r.rhs)} {label}={fmt(worst)} failures={fails} "
          f"{'ok' if not fails else 'violated'}")
    return EXIT_OK if not fails else EXIT_ASSERT


def cmd_report(args) -> int:
    from .experiments import SweepResult, render_svg

    results = []
    for path in args.inputs:
        try:
            results.append(SweepResult.from_dict(_read_json(path)))
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path}: {exc}")
    try:
        svg = render_svg(results)
    except ValueError as exc:
        raise InputError(str(exc))
    Path(args.out).write_text(svg)
    print(f"series={len(results)} out={args.out} ok")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dyadweight", description="Weighted dyadic and Hilbert transform toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("char", help="A_2-type characteristic of a weight")
    c.add_argument("--weight", required=True)
    c.add_argument("--kind", choices=("a2d", "poisson", "heat"), default="a2d")
    c.add_argument("--p", type=float, default=2.0)
    c.set_defaults(func=cmd_char)

    m = sub.add_parser("mnorm", help="weighted Martingale transform norm")
    m.add_argument("--weight", required=True)
    m.add_argument("--sigma", help="JSON list of sigma in heap order; default searches the worst sigma")
    m.add_argument("--method", choices=("auto", "dense", "power", "lanczos"), default="auto")
    m.add_argument("--tol", type=float, default=1e-8)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--restarts", type=int, default=4)
    m.add_argument("--c", type=float, default=1.0, help="constant in the bound 1 + c sqrt(delta)")
    m.add_argument("--out")
    m.set_defaults(func=cmd_mnorm)

    h = sub.add_parser("hnorm", help="weighted Hilbert transform norm on the periodic grid")
    h.add_argument("--weight", required=True)
    h.add_argument("--n", type=int, default=1 << 12)
    h.add_argument("--half-length", type=float, default=8.0)
    h.add_argument("--trials", type=int, default=8)
    h.add_argument("--method", choices=("lanczos", "power"), default="lanczos")
    h.add_argument("--tol", type=float, default=1e-8)
    h.add_argument("--seed", type=int, default=0)
    h.add_argument("--c", type=float, default=1.5)
    h.add_argument("--out")
    h.set_defaults(func=cmd_hnorm)

    s = sub.add_parser("sweep", help="run a sweep from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="output base path (default: config 'output' or the config path)")
    s.add_argument("--svg", action="store_true")
    s.set_defaults(func=cmd_sweep)

    cb = sub.add_parser("carleson", help="Carleson packing of c_I^2 and the embedding check")
    cb.add_argument("--weight", required=True)
    cb.add_argument("--trials", type=int, default=64)
    cb.add_argument("--seed", type=int, default=0)
    cb.set_defaults(func=cmd_carleson)

    b = sub.add_parser("bellman", help="build or verify a depth-limited Bellman table")
    bsub = b.add_subparsers(dest="action", required=True)
    bb = bsub.add_parser("build")
    bb.add_argument("--Q", type=float, required=True)
    bb.add_argument("--depth", type=int, default=3)
    bb.add_argument("--n-xy", type=int, default=33)
    bb.add_argument("--n-p", type=int, default=9)
    bb.add_argument("--restarts", type=int, default=64)
    bb.add_argument("--seed", type=int, default=0)
    bb.add_argument("--out", required=True)
    bb.set_defaults(func=cmd_bellman_build)
    bv = bsub.add_parser("verify")
    bv.add_argument("--table", required=True)
    bv.add_argument("--c", type=float, required=True)
    bv.add_argument("--samples", type=int, default=10_000)
    bv.add_argument("--seed", type=int, default=0)
    bv.set_defaults(func=cmd_bellman_verify)

    pr = sub.add_parser("pairing", help="half-plane pairing inequality or heat identity")
    pr.add_argument("--phi", help="CSV grid function (x,value)")
    pr.add_argument("--psi")
    pr.add_argument("--kind", choices=("inequality", "heat"), default="inequality")
    pr.add_argument("--count", type=int, default=30, help="random pairs when no files are given")
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--n-t", type=int, default=96)
    pr.add_argument("--slack", type=float, default=1e-2)
    pr.set_defaults(func=cmd_pairing)

    rp = sub.add_parser("report", help="log-log SVG of one or more sweep results")
    rp.add_argument("--in", dest="inputs", nargs="+", required=True)
    rp.add_argument("--out", required=True)
    rp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    from .martingale import NonConvergenceError
    from .weights import InvalidWeightError

    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvalidWeightError as exc:
        print(f"invalid weight: {exc}", file=sys.stderr)
        return EXIT_WEIGHT
    except NonConvergenceError as exc:
        print(f"did not converge: {exc}", file=sys.stderr)
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
