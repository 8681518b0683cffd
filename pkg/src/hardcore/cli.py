"""Command line entry point: ``hardcore <subcommand> [options]``."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from fractions import Fraction

import numpy as np

from .errors import ResourceError
from .experiments import (LwcConfig, MomentAuditConfig, OracleConfig, ReconConfig,
                          library_hash, run_lwc_experiment, run_moment_audit,
                          run_oracle_suite, run_tree_recon_scan)
from .gibbs import point_to_set_estimate
from .graphs import load_graph, sample_configuration_model
from .moments import (OverlapPoint, alpha_star, f_point, first_moment_exact, phi,
                      second_moment_total, verify_global_max)
from .params import HardcoreParams, convert_params, markov_kernel, threshold_table
from .tree import depth3_check, depth3_scan

EXIT_OK, EXIT_ARG, EXIT_RESOURCE, EXIT_ORACLE = 0, 2, 3, 4


class _ArgParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ARG, f"{self.prog}: error: {message}\n")


def _jsonable(x):
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return _jsonable(x.to_dict() if hasattr(x, "to_dict") else dataclasses.asdict(x))
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, float) and not np.isfinite(x):
        return str(x)
    return x


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        elif isinstance(v, list) and v and not isinstance(v[0], dict):
            out[key] = json.dumps(v)
        elif not isinstance(v, list):
            out[key] = v
    return out


def render(result, fmt: str) -> str:
    data = _jsonable(result)
    if fmt == "json":
        return json.dumps(data, indent=2, sort_keys=True) + "\n"
    rows = data.get("rows") or data.get("checks") if isinstance(data, dict) else None
    rows = rows or [data]
    rows = [_flatten(r) for r in rows]
    cols = list(dict.fromkeys(k for r in rows for k in r))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols)
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def _params(args) -> HardcoreParams:
    if (args.lam is None) == (args.alpha is None):
        raise ValueError("give exactly one of --lambda and --alpha")
    return convert_params(args.d, lam=args.lam, alpha=args.alpha)


def _floats(s: str):
    return tuple(float(x) for x in s.split(",") if x.strip())


def cmd_params(args, rng):
    p = _params(args)
    k, c = markov_kernel(p)
    return {"params": p.to_dict(), "lambda_internal": p.lam_internal,
            "kernel": dataclasses.asdict(k), "constants": dataclasses.asdict(c),
            "second_eigenvalue": k.second_eigenvalue()}


def cmd_thresholds(args, rng):
    return threshold_table(args.d, alpha=args.alpha, C=args.C).to_dict()


def cmd_tree_recon(args, rng):
    lams = _floats(args.lams)
    return run_tree_recon_scan(ReconConfig(d=args.d, lams=lams, depth=args.depth,
                                           samples=args.samples, method=args.method,
                                           seed=args.seed, threads=args.threads))


def cmd_depth3(args, rng):
    if args.d is not None:
        return depth3_check(HardcoreParams.from_alpha(args.d, _depth3_alpha(args)),
                            beta=args.beta)
    first, results = depth3_scan(beta=args.beta, d_start=args.d_start, d_max=args.d_max)
    return {"first_passing_d": first, "rows": [r.to_dict() for r in results]}


def _depth3_alpha(args):
    from .tree import depth3_alpha
    a = depth3_alpha(args.d, args.beta)
    if not 0 < a < 0.5:
        raise ValueError(f"alpha formula gives {a} at d={args.d}")
    return a


def cmd_moments(args, rng):
    out = {"d": args.d, "lambda": args.lam, "alpha": args.alpha,
           "phi": phi(args.alpha, args.lam, args.d),
           "f_hat": f_point(OverlapPoint.hat(args.alpha), args.lam, args.d)}
    star = alpha_star(args.lam, args.d)
    out["alpha_star"] = dataclasses.asdict(star)
    if args.n is not None:
        out["n"] = args.n
        out["first_moment_log"] = first_moment_exact(args.n, args.alpha, args.lam, args.d, log=True)
        out["second_moment_log"] = second_moment_total(args.n, args.alpha, args.lam, args.d, log=True)
    return out


def cmd_max_verify(args, rng):
    if args.audit:
        return run_moment_audit(MomentAuditConfig(d=args.d, lam=args.lam,
                                                  grid_resolution=args.grid, seed=args.seed))
    return verify_global_max(args.lam, args.d, args.grid, rng=rng)


def cmd_lwc(args, rng):
    return run_lwc_experiment(LwcConfig(d=args.d, lam=args.lam, n=args.n, r=args.r,
                                        eps=args.eps, samples=args.samples, thin=args.thin,
                                        burn_in=args.burn_in, seed=args.seed))


def cmd_point_to_set(args, rng):
    if args.graph:
        g = load_graph(args.graph)
        g = getattr(g, "graph", g)
    else:
        g = sample_configuration_model(args.n, args.d, rng).graph
    est = point_to_set_estimate(g, args.u, args.L, args.lam, samples=args.samples, rng=rng,
                                method=args.method)
    return {"u": args.u, "L": args.L, "lambda": args.lam, "estimate": est}


def cmd_oracle(args, rng):
    return run_oracle_suite(OracleConfig(seed=args.seed, glauber_sweeps=args.sweeps))


def _global_flags(defaults: bool) -> argparse.ArgumentParser:
    # the subcommand copies must not overwrite values given before the subcommand
    dflt = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    g = argparse.ArgumentParser(add_help=False)
    g.add_argument("--seed", type=int, default=dflt(0))
    g.add_argument("--out", default=dflt(None), help="write output here instead of stdout")
    g.add_argument("--format", choices=("json", "csv"), default=dflt("json"))
    g.add_argument("--threads", type=int, default=dflt(1))
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(True)
    sub_common = _global_flags(False)

    p = _ArgParser(prog="hardcore", description="Hardcore model experiments",
                   parents=[common])
    p.add_argument("--version", action="version", version=library_hash())
    sub = p.add_subparsers(dest="command", required=True, parser_class=_ArgParser)

    def add(name, fn, help):
        s = sub.add_parser(name, help=help, parents=[sub_common])
        s.set_defaults(fn=fn)
        return s

    s = add("params", cmd_params, "convert between lambda and alpha")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--lambda", dest="lam", type=float)
    s.add_argument("--alpha", type=float)

    s = add("thresholds", cmd_thresholds, "threshold table for degree d")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--alpha", type=float)
    s.add_argument("--C", type=float, default=3.01)

    s = add("tree-recon", cmd_tree_recon, "magnetization scan over lambda")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--lams", default="0.5,1,2,4", help="comma separated lambda grid")
    s.add_argument("--depth", type=int, default=8)
    s.add_argument("--samples", type=int, default=10 ** 5)
    s.add_argument("--method", choices=("mc", "exact"), default="mc")

    s = add("depth3", cmd_depth3, "depth-3 decay check or doubling scan")
    s.add_argument("--d", type=int)
    s.add_argument("--beta", type=float, default=1.2)
    s.add_argument("--d-start", type=int, default=4)
    s.add_argument("--d-max", type=int, default=10 ** 6)

    s = add("moments", cmd_moments, "first and second moment quantities")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--n", type=int)

    s = add("max-verify", cmd_max_verify, "global maximum and Hessian check")
    s.add_argument("--d", type=int, required=True)
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--grid", type=float, default=1e-3)
    s.add_argument("--audit", action="store_true", help="also run the identity suite")

    s = add("lwc", cmd_lwc, "local weak convergence experiment")
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--n", type=int, default=1024)
    s.add_argument("--r", type=int, default=1)
    s.add_argument("--eps", type=float, default=0.05)
    s.add_argument("--samples", type=int, default=10000)
    s.add_argument("--thin", type=int, default=1, help="sweeps between records")
    s.add_argument("--burn-in", type=int, default=None, help="sweeps (default 100)")

    s = add("point-to-set", cmd_point_to_set, "point-to-set correlation estimate")
    s.add_argument("--graph", help="graph file; otherwise a configuration model sample")
    s.add_argument("--n", type=int, default=1024)
    s.add_argument("--d", type=int, default=3)
    s.add_argument("--u", type=int, default=0)
    s.add_argument("--L", type=int, default=2)
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--samples", type=int, default=1000)
    s.add_argument("--method", choices=("mc", "exact"), default="mc")

    s = add("oracle", cmd_oracle, "run the oracle self-check suite")
    s.add_argument("--sweeps", type=int, default=200000)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    rng = np.random.default_rng(args.seed)
    try:
        result = args.fn(args, rng)
    except ResourceError as e:
        print(f"resource error: {e}", file=sys.stderr)
        return EXIT_RESOURCE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ARG
    text = render(result, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if args.command == "oracle" and not result["passed"]:
        return EXIT_ORACLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
