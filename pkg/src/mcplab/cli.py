"""Command-line front end.

Every output begins with a header holding the tool version, the
subcommand, the complete configuration (seed included) and a timestamp.
Passing an earlier output file to ``--config`` replays that run; explicit
flags still override it.  Only the timestamp differs between the two
outputs.

Exit statuses: 0 success, 1 invariant or dominance violation, 2 usage
error, 3 parameter-domain error, 4 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import warnings
from datetime import datetime, timezone

import numpy as np

from . import __version__
from ._random import check_seed, fresh_seed
from .errors import ParameterDomainError, PreconditionError, ResourceCapError
from .graphical import Box
from .pointproc import DEFAULT_TIME_GRID, DominanceNotGuaranteedWarning, tail_dominance_test
from .processes import (
    ProcessKind,
    estimate_survival,
    estimate_survival_paired,
    proportion_ci,
    run_coupled_replicas,
    Z95,
)
from .thresholds import (
    BromanParams,
    GenericMcpRates,
    McpParams,
    c_star,
    cpree_broman_params,
    lambda_bar_broman,
    lambda_bar_mcp,
    lambda_c_preset,
    sufficient_c_bound,
)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_RESOURCE = 4

# keys that do not influence results and are not replayed from a header
_NOT_REPLAYED = {"config", "out", "threads", "command", "func"}


def _fmt_csv(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".12g")
    if x is None:
        return ""
    return str(x)


def _json_text(obj, indent: int = 0, step: int = 2) -> str:
    """JSON with floats written to 17 significant digits."""
    pad = " " * (indent + step)
    end = " " * indent
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_json_text(v, indent + step)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + f"\n{end}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple)) for v in obj):
            return "[" + ", ".join(_json_text(v) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _json_text(v, indent + step) for v in obj) + f"\n{end}]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        s = format(x, ".17g")
        return s if any(c in s for c in ".en") else s + ".0"
    if obj is None:
        return "null"
    return json.dumps(str(obj))


def _header(args) -> dict:
    return {
        "tool": "mcplab",
        "version": __version__,
        "command": args.command,
        "config": _config_of(args),
        "seed": args.seed,
        "generated": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }


def _config_of(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in _NOT_REPLAYED}


def _emit(args, result: dict, rows: list[list] | None, columns: list[str] | None, comments=()) -> None:
    header = _header(args)
    if args.format == "json":
        text = _json_text({"header": header, "result": result}) + "\n"
    else:
        buf = io.StringIO()
        buf.write(f"# mcplab {header['version']}\n")
        buf.write(f"# command: {header['command']}\n")
        buf.write(f"# config: {json.dumps(json.loads(_json_text(header['config'])), sort_keys=True)}\n")
        buf.write(f"# seed: {header['seed']}\n")
        buf.write(f"# generated: {header['generated']}\n")
        for line in comments:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt_csv(v) for v in row])
        text = buf.getvalue()
    if args.out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _float_list(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def load_config(path: str) -> dict:
    """Read ``key=value`` lines, a JSON object, or the header of an earlier output."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    stripped = text.lstrip()
    if stripped.startswith("{"):
        obj = json.loads(stripped)
        if isinstance(obj.get("header"), dict):
            return dict(obj["header"]["config"], command=obj["header"]["command"])
        return obj
    out = {}
    for line in text.splitlines():
        line = line.strip()
        if line.startswith("# config:"):
            out.update(json.loads(line[len("# config:"):]))
        elif line.startswith("# command:"):
            out["command"] = line[len("# command:"):].strip()
        elif line and not line.startswith("#") and "=" in line:
            key, val = line.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip()
    return out


def _add_common(p: argparse.ArgumentParser, replicas: int | None) -> None:
    g = p.add_argument_group("common")
    g.add_argument("--seed", type=int, default=None, help="master seed (default: fresh, recorded in the header)")
    if replicas is not None:
        g.add_argument("--replicas", type=int, default=replicas)
    g.add_argument("--threads", type=int, default=None, help="worker threads (default: available cores)")
    g.add_argument("--out", default=None, help="output path (default: stdout)")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--config", default=None, help="key=value file, JSON object, or earlier output to replay")


def _add_mcp(p, beta=4.0, c=6.0, alpha=8.0) -> None:
    p.add_argument("--beta", type=float, default=beta)
    p.add_argument("--c", type=float, default=c)
    p.add_argument("--alpha", type=float, default=alpha)
    p.add_argument("--dim", type=int, default=1)


def _add_box(p, side: int, horizon: float) -> None:
    p.add_argument("--side", type=int, default=side, help="box side length L")
    p.add_argument("--boundary", choices=("periodic", "free"), default="periodic")
    p.add_argument("--horizon", type=float, default=horizon)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcplab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"mcplab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("thresholds", help="closed-form thresholds for one parameter point")
    _add_mcp(p)
    p.add_argument("--lambda-c", dest="lambda_c", default="upper",
                   help="lower (1/(2d-1)), upper (2/d), literature, or a number")
    _add_common(p, None)
    p.set_defaults(func=cmd_thresholds)

    p = sub.add_parser("sweep", help="lambda_bar and sufficiency over a parameter grid")
    _add_mcp(p)
    p.add_argument("--axis", action="append", default=None,
                   help="NAME:MIN:MAX:STEPS[:linear|log], NAME in {c, alpha, beta}; at most two")
    p.add_argument("--lambda-c", dest="lambda_c", default="upper")
    _add_common(p, None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dominance", help="tail dominance of the modulated point process")
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--c", type=float, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--alpha0", type=float, default=None)
    p.add_argument("--alpha1", type=float, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--p", type=float, default=None)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="Poisson rate (default: lambda_bar)")
    p.add_argument("--z", type=float, default=4.0)
    p.add_argument("--times", type=_float_list, default=list(DEFAULT_TIME_GRID))
    p.add_argument("--kmax", type=int, default=None, help="largest k (default: 99.99%% Poisson quantile)")
    _add_common(p, 100_000)
    p.set_defaults(func=cmd_dominance)

    p = sub.add_parser("couple", help="pathwise coupling invariants over many replicas")
    # optional on the command line so a replayed config can supply it
    p.add_argument("which", nargs="?", choices=("cpree-mcp", "attractive", "prop1"), default=None)
    _add_mcp(p)
    _add_box(p, 64, 20.0)
    p.add_argument("--sigma", type=float, default=None,
                   help="prop1 extra type-1 death rate (default: alpha - 1)")
    p.add_argument("--init", choices=("default", "equal"), default="default")
    p.add_argument("--checkpoints", type=_float_list, default=None)
    p.add_argument("--inject-fault", dest="inject_fault", default=None, metavar="REPLICA:EVENT",
                   help="test hook: corrupt one site after the given event")
    _add_common(p, 1000)
    p.set_defaults(func=cmd_couple)

    p = sub.add_parser("survive", help="Monte Carlo survival and origin occupancy")
    p.add_argument("--process", choices=("cp", "mcp", "cpree", "paired"), default="paired")
    _add_mcp(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None, help="CP birth rate (default: lambda_bar)")
    _add_box(p, 101, 20.0)
    p.add_argument("--init", choices=("single", "product", "all2"), default="single")
    p.add_argument("--p1", type=float, default=0.5)
    p.add_argument("--p2", type=float, default=0.5)
    p.add_argument("--checkpoints", type=_float_list, default=None)
    _add_common(p, 10_000)
    p.set_defaults(func=cmd_survive)
    return parser


def _mcp(args) -> McpParams:
    return McpParams(args.beta, args.c, args.alpha, args.dim)


def _try(fn, *a):
    try:
        return fn(*a), None
    except ParameterDomainError as exc:
        return None, str(exc)


def cmd_thresholds(args) -> int:
    p = _mcp(args)
    lam_c = lambda_c_preset(args.lambda_c, p.dim)
    lam_bar = lambda_bar_mcp(p)
    cs, cs_err = _try(c_star, p.alpha, p.beta, p.dim)
    bound, bound_err = _try(sufficient_c_bound, p.alpha, p.beta, p.dim)
    b = cpree_broman_params(p)
    result = {
        "beta": p.beta, "c": p.c, "alpha": p.alpha, "dim": p.dim,
        "lambda_bar": lam_bar,
        "lambda_c_ref": lam_c,
        "lambda_c_preset": str(args.lambda_c),
        "sufficient": lam_bar > lam_c,
        "c_star": cs, "c_star_error": cs_err,
        "sufficient_c_bound": bound, "sufficient_c_bound_error": bound_err,
        "broman_alpha0": b.alpha0, "broman_alpha1": b.alpha1, "broman_gamma": b.gamma, "broman_p": b.p,
        "lambda_bar_broman": lambda_bar_broman(b),
    }
    _emit(args, result, [[k, v] for k, v in result.items()], ["quantity", "value"])
    return EXIT_OK


def _parse_axes(spec) -> list[tuple[str, np.ndarray]]:
    if spec is None:
        spec = ["c:1:20:20"]
    axes = []
    for item in spec:
        parts = item.split(":")
        if len(parts) not in (4, 5):
            raise ParameterDomainError(f"axis spec {item!r} is not NAME:MIN:MAX:STEPS[:linear|log]")
        name, lo, hi, steps = parts[0], float(parts[1]), float(parts[2]), int(parts[3])
        scale = parts[4] if len(parts) == 5 else "linear"
        if name not in ("c", "alpha", "beta"):
            raise ParameterDomainError(f"axis name must be c, alpha or beta, got {name!r}")
        if steps < 2:
            raise ParameterDomainError(f"axis {name} needs steps >= 2, got {steps}")
        if scale not in ("linear", "log"):
            raise ParameterDomainError(f"axis scale must be linear or log, got {scale!r}")
        if scale == "log" and not (lo > 0 and hi > 0):
            raise ParameterDomainError(f"log axis {name} needs positive bounds")
        values = np.geomspace(lo, hi, steps) if scale == "log" else np.linspace(lo, hi, steps)
        axes.append((name, values))
    names = [a[0] for a in axes]
    if len(axes) > 2 or len(set(names)) != len(names):
        raise ParameterDomainError("at most two distinct sweep axes")
    return axes


def cmd_sweep(args) -> int:
    if isinstance(args.axis, str):
        args.axis = [a for a in args.axis.split(";") if a.strip()]
    axes = _parse_axes(args.axis)
    fixed = {"beta": args.beta, "c": args.c, "alpha": args.alpha}
    lam_c = lambda_c_preset(args.lambda_c, args.dim)
    columns = ["beta", "c", "alpha", "dim", "lambda_bar", "lambda_c_ref", "sufficient", "c_star"]
    rows = []
    grids = np.meshgrid(*[v for _, v in axes], indexing="ij")
    for point in zip(*[g.ravel() for g in grids]):
        vals = dict(fixed)
        vals.update({name: float(x) for (name, _), x in zip(axes, point)})
        p = McpParams(vals["beta"], vals["c"], vals["alpha"], args.dim)
        lam_bar = lambda_bar_mcp(p)
        cs, _ = _try(c_star, p.alpha, p.beta, p.dim)
        rows.append([p.beta, p.c, p.alpha, p.dim, lam_bar, lam_c, lam_bar > lam_c, cs])
    result = {"columns": columns, "rows": rows, "axes": [n for n, _ in axes]}
    _emit(args, result, rows, columns)
    return EXIT_OK


def cmd_dominance(args) -> int:
    mcp_given = any(v is not None for v in (args.beta, args.c, args.alpha))
    modulated_given = any(v is not None for v in (args.alpha0, args.alpha1, args.gamma, args.p))
    if mcp_given and modulated_given:
        raise ParameterDomainError("give either --beta/--c/--alpha or --alpha0/--alpha1/--gamma/--p, not both")
    if modulated_given:
        b = BromanParams(args.alpha0 or 0.0, args.alpha1, args.gamma, args.p)
    else:
        beta, c, alpha = (4.0 if args.beta is None else args.beta, 6.0 if args.c is None else args.c,
                          8.0 if args.alpha is None else args.alpha)
        b = cpree_broman_params(McpParams(beta, c, alpha, args.dim))
    lam = lambda_bar_broman(b) if args.lam is None else args.lam
    ks = None if args.kmax is None else np.arange(1, args.kmax + 1)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", DominanceNotGuaranteedWarning)
        rep = tail_dominance_test(b, lam, args.times, ks, args.replicas, args.seed, args.z, threads=args.threads)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    columns = ["t", "k", "empirical", "reference", "std_error", "violated"]
    comments = [f"lambda: {_fmt_csv(lam)}", f"lambda_bar: {_fmt_csv(rep.lambda_bar)}",
                f"violations: {len(rep.violations)}"] + [f"note: {n}" for n in rep.notes]
    _emit(args, rep.to_dict(), [list(r) for r in rep.rows()], columns, comments)
    # exceeding lambda_bar voids the guarantee, so violations there are findings, not failures
    return EXIT_VIOLATION if rep.violations and lam <= rep.lambda_bar else EXIT_OK


def cmd_couple(args) -> int:
    p = _mcp(args)
    box = Box(args.dim, args.side, args.boundary)
    rates = p.rates()
    sigma = None
    if args.which == "prop1":
        sigma = p.alpha - 1.0 if args.sigma is None else args.sigma
        rates = GenericMcpRates(p.beta1, sigma, p.beta2, 1.0, p.dim)
    fault = None
    if args.inject_fault:
        r, e = args.inject_fault.split(":")
        fault = (int(r), int(e))
    rep = run_coupled_replicas(args.which, rates, box, args.horizon, args.replicas, args.seed,
                               init=args.init, sigma=sigma, checkpoints=args.checkpoints,
                               fault=fault, threads=args.threads)
    result = rep.to_dict()
    result["rates"] = {"b1": rates.b1, "d1": rates.d1, "b2": rates.b2, "d2": rates.d2}
    columns = ["replica", "time", "process", "origin_state", "pop1", "pop2"]
    comments = [f"checked_events: {rep.checked_events}", f"violation_count: {rep.violation_count}"]
    comments += [f"violation: replica={v.replica} time={_fmt_csv(v.time)} site={v.site} relation={v.relation}"
                 for v in rep.violations]
    _emit(args, result, [list(r) for r in rep.occupancy_series], columns, comments)
    for v in rep.violations[:10]:
        print(f"violation: replica={v.replica} time={v.time!r} site={v.site} relation={v.relation}",
              file=sys.stderr)
    return EXIT_VIOLATION if rep.violation_count else EXIT_OK


def _init_spec(args):
    if args.init == "single":
        return "single_seed_at_origin"
    if args.init == "all2":
        return "all_2"
    return ("product_measure", args.p1, args.p2)


def cmd_survive(args) -> int:
    p = _mcp(args)
    box = Box(args.dim, args.side, args.boundary)
    lam = lambda_bar_mcp(p) if args.lam is None else args.lam
    columns = ["process", "replicas", "survive_count", "origin_count", "estimate", "half_width",
               "origin_estimate", "origin_half_width"]
    status = EXIT_OK
    if args.process == "paired":
        if args.init != "single":
            raise ParameterDomainError("paired runs start from single seeds")
        out = estimate_survival_paired(p, lam, box, args.horizon, args.replicas, args.seed,
                                       checkpoints=args.checkpoints, threads=args.threads)
        ests = {k: out[k] for k in ("cp", "cpree", "mcp")}
        coupling = out["coupling"]
        diffs = {}
        for a, b in (("cpree", "cp"), ("mcp", "cpree"), ("mcp", "cp")):
            d = ests[a].origin_estimate - ests[b].origin_estimate
            diffs[f"{a}-{b}"] = {
                "origin_difference": d,
                "summed_half_width": ests[a].origin_half_width + ests[b].origin_half_width,
            }
        # matched-seed difference CI for CP vs MCP (separate graphs, so variances add)
        n = args.replicas
        va = ests["mcp"].origin_estimate * (1 - ests["mcp"].origin_estimate)
        vb = ests["cp"].origin_estimate * (1 - ests["cp"].origin_estimate)
        diffs["mcp-cp"]["difference_half_width"] = Z95 * math.sqrt((va + vb) / n) + 1.0 / n
        result = {"lambda": lam, "estimates": {k: e.to_dict() for k, e in ests.items()}, "differences": diffs,
                  "coupling": {"checked_events": coupling.checked_events,
                               "violation_count": coupling.violation_count}}
        rows = [[k, e.replicas, e.survive_count, e.origin_occupied_count, e.estimate, e.half_width,
                 e.origin_estimate, e.origin_half_width] for k, e in ests.items()]
        comments = [f"lambda: {_fmt_csv(lam)}",
                    f"coupling_violations: {coupling.violation_count}"]
        comments += [f"difference {k}: origin={_fmt_csv(v['origin_difference'])} "
                     f"slack={_fmt_csv(v['summed_half_width'])}" for k, v in diffs.items()]
        if coupling.violation_count:
            status = EXIT_VIOLATION
    else:
        kind = {"cp": ProcessKind.CP(lam), "mcp": ProcessKind.MCP(), "cpree": ProcessKind.CPREE()}[args.process]
        est = estimate_survival(kind, p, box, args.horizon, args.replicas, args.seed, _init_spec(args),
                                checkpoints=args.checkpoints, threads=args.threads)
        result = {"lambda": lam if args.process == "cp" else None, "estimates": {args.process: est.to_dict()}}
        rows = [[args.process, est.replicas, est.survive_count, est.origin_occupied_count, est.estimate,
                 est.half_width, est.origin_estimate, est.origin_half_width]]
        comments = [f"origin_series {args.process}: " + " ".join(
            f"{_fmt_csv(t)}={_fmt_csv(v)}" for t, v in est.origin_series.items())]
    _emit(args, result, rows, columns, comments)
    return status


def _subparser(parser, name):
    return parser._subparsers._group_actions[0].choices[name]


def _apply_config(parser, argv):
    """Re-parse with config-file values as defaults so explicit flags win."""
    pre = parser.parse_args(argv)
    if not pre.config:
        return pre
    cfg = load_config(pre.config)
    cmd = cfg.pop("command", pre.command)
    if cmd != pre.command:
        raise ParameterDomainError(f"config is for '{cmd}', not '{pre.command}'")
    sub = _subparser(parser, pre.command)
    known = {a.dest for a in sub._actions}
    unknown = set(cfg) - known
    if unknown:
        raise ParameterDomainError(f"unknown config keys: {', '.join(sorted(unknown))}")
    sub.set_defaults(**{k: v for k, v in cfg.items() if k not in _NOT_REPLAYED})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
        if args.command == "couple" and args.which is None:
            _subparser(parser, "couple").error("the following arguments are required: which")
        args.seed = fresh_seed() if args.seed is None else check_seed(args.seed)
        if hasattr(args, "replicas") and args.replicas < 1:
            raise ParameterDomainError("replicas must be >= 1")
        return args.func(args)
    except (ParameterDomainError, PreconditionError, ValueError) as exc:
        print(f"mcplab: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ResourceCapError as exc:
        print(f"mcplab: resource cap: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except OSError as exc:
        print(f"mcplab: I/O error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
