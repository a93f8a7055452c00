"""Command-line front end.

    shadowperc sample   field and e1-gradient grids
    shadowperc shadow   alpha grid, optional PGM rendering
    shadowperc scan     crossing-probability table
    shadowperc certify  renormalization / bootstrap report
    shadowperc order    ordering-probability and Peierls table

Every run writes ``manifest.txt`` (flat key=value) into the output directory;
passing it back with ``--config`` reproduces the run.  Flags override the
config file.  Exit codes: 0 ok, 2 invalid configuration, 3 budget exceeded,
4 certification failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, gridio, kernel, ordering, percolation, renorm, sampler, shadow
from .sampler import BudgetError, Window

EXIT_OK, EXIT_CONFIG, EXIT_BUDGET, EXIT_FAIL = 0, 2, 3, 4


class ConfigError(ValueError):
    pass


def _float(s):
    s = str(s).strip().lower()
    if s in ("inf", "+inf", "infinity"):
        return math.inf
    if s in ("-inf", "-infinity"):
        return -math.inf
    return float(s)


def _floats(s):
    s = str(s).strip()
    return [] if not s else [_float(x) for x in s.split(",") if x.strip()]


def _ints(s):
    s = str(s).strip()
    return [] if not s else [int(x) for x in s.split(",") if x.strip()]


def _window(s):
    v = _floats(s)
    if len(v) != 4:
        raise argparse.ArgumentTypeError("window must be x0,y0,x1,y1")
    return v


def _common(p):
    p.add_argument("--config", help="key=value file; flags take precedence")
    p.add_argument("--kernel", default="bargmann-fock",
                   help="bargmann-fock, or a radius/value table file")
    p.add_argument("--kernel-beta", type=float, default=20.0, help="decay exponent of a table kernel")
    p.add_argument("--lambda1", type=float, default=1.0, help="amplitude multiplier")
    p.add_argument("--lambda2", type=float, default=1.0, help="length multiplier")
    p.add_argument("--h", type=float, default=0.25, help="noise cell / lattice spacing")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default="out")


def _grid_flags(p, window="0,0,8,8"):
    p.add_argument("--window", type=_window, default=_window(window), help="x0,y0,x1,y1")
    p.add_argument("--spacing", type=float, default=None, help="output spacing (multiple of h)")
    p.add_argument("--trunc", type=_float, default=math.inf, help="kernel truncation R")
    p.add_argument("--pad", type=float, default=0.0, help="extra right padding of the window")


def build_parser():
    ap = argparse.ArgumentParser(prog="shadowperc", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample f_R and <grad f_R, e1> on a window")
    _common(p)
    _grid_flags(p)
    p.add_argument("--csv", action="store_true", help="also write long-format CSV")

    p = sub.add_parser("shadow", help="compute alpha and render level sets")
    _common(p)
    _grid_flags(p)
    p.add_argument("--horizon", type=float, default=8.0)
    p.add_argument("--variant", choices=["continuous", "discrete"], default="continuous")
    p.add_argument("--input", default=None, help="field grid file instead of sampling")
    p.add_argument("--input-gradient", default=None, help="e1-gradient grid matching --input")
    p.add_argument("--render", type=_float, default=None, help="write alpha.pgm at this level")

    p = sub.add_parser("scan", help="Monte Carlo crossing probabilities")
    _common(p)
    p.add_argument("--variant", choices=["discrete", "continuous"], default="discrete")
    p.add_argument("--trunc", type=_float, default=math.inf, help="kernel truncation R")
    p.add_argument("--horizon", type=_float, default=None, help="default: lambda")
    p.add_argument("--ell-min", type=float, default=0.0)
    p.add_argument("--ell-max", type=float, default=3.0)
    p.add_argument("--ell-steps", type=int, default=13)
    p.add_argument("--lambdas", type=_floats, default=[20.0])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--orientation", choices=["h", "v", "both"], default="h")
    p.add_argument("--time-budget", type=_float, default=math.inf, help="seconds")

    p = sub.add_parser("certify", help="certify the renormalization arithmetic")
    _common(p)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--lambda0", type=int, default=1)
    p.add_argument("--mu", type=_ints, default=[10 ** 6], help="prefix values..., tail value")
    p.add_argument("--sigma", type=_ints, default=[100], help="prefix values..., tail value")
    p.add_argument("--levels", type=int, default=64)
    p.add_argument("--boot-a", type=float, default=None, help="bootstrap exponent a")
    p.add_argument("--boot-b", type=float, default=None, help="bootstrap exponent b")
    p.add_argument("--boot-lambda0", type=float, default=10.0)
    p.add_argument("--boot-ell", type=float, default=0.0)
    p.add_argument("--boot-ell-prime", type=float, default=1.0)
    p.add_argument("--boot-u0", type=float, default=0.5)

    p = sub.add_parser("order", help="ordering probabilities and the Peierls comparison")
    _common(p)
    p.add_argument("--sites", default="0,0;4,0;8,0",
                   help="x,y;x,y;... or a CSV file of x,y lines")
    p.add_argument("--horizon", type=int, default=None, help="R for the Peierls row")
    p.add_argument("--trials", type=int, default=100_000)
    return ap


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def read_config(path):
    cfg = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key=value")
            k, v = line.split("=", 1)
            cfg[k.strip()] = v.strip()
    return cfg


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _actions(sp):
    return {a.dest: a for a in sp._actions if a.dest not in ("help", "config")}


def parse(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.config:
        sp = ap._subparsers._group_actions[0].choices[args.command]
        acts = _actions(sp)
        defaults = {}
        for key, raw in read_config(args.config).items():
            if key in ("command", "version"):
                continue
            dest = key.replace("-", "_")
            if dest not in acts:
                raise ConfigError(f"unknown config key {key!r}")
            a = acts[dest]
            if isinstance(a, argparse._StoreTrueAction):
                defaults[dest] = raw.lower() in ("1", "true", "yes")
            elif raw == "" and a.default is None:
                defaults[dest] = None
            else:
                try:
                    defaults[dest] = a.type(raw) if a.type else raw
                except (ValueError, argparse.ArgumentTypeError) as e:
                    raise ConfigError(f"config key {key!r}: {e}") from None
        sp.set_defaults(**defaults)
        args = ap.parse_args(argv)
    return args


def write_manifest(args, outdir):
    lines = [f"# shadowperc {__version__}", f"command={args.command}"]
    for k, v in sorted(vars(args).items()):
        if k in ("command", "config"):
            continue
        lines.append(f"{k.replace('_', '-')}={_fmt(v)}")
    Path(outdir, "manifest.txt").write_text("\n".join(lines) + "\n")


def make_kernel(args):
    if args.kernel in ("bargmann-fock", "bf"):
        k = kernel.bargmann_fock()
    elif args.kernel == "iid":
        return None
    else:
        if not os.path.exists(args.kernel):
            raise ConfigError(f"kernel table {args.kernel!r} not found")
        k = kernel.load_table(args.kernel, args.kernel_beta)
    if args.lambda1 <= 0 or args.lambda2 <= 0:
        raise ConfigError("--lambda1 and --lambda2 must be positive")
    if args.lambda1 != 1.0 or args.lambda2 != 1.0:
        k = kernel.rescale(k, args.lambda1, args.lambda2)
    return k


def _window_of(args):
    x0, y0, x1, y1 = args.window
    if not (x1 >= x0 and y1 >= y0):
        raise ConfigError("window must satisfy x1 >= x0 and y1 >= y0")
    try:
        return Window.from_rect(x0, y0, x1, y1, args.h, args.spacing)
    except ValueError as e:
        raise ConfigError(str(e)) from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_sample(args, out):
    k = make_kernel(args)
    w = _window_of(args)
    if args.pad:
        w = w.pad_right(args.pad)
    f, g = sampler.sample_field(k, w, args.seed, args.stream, args.trunc, gradient=True)
    for name, grid, kind in (("field", f, "field"), ("gradient", g, "e1-gradient")):
        hdr = gridio.GridHeader(kind, grid.origin, grid.spacing, w.nx, w.ny, args.trunc,
                                math.nan, args.seed, args.stream)
        gridio.write_grid(out / f"{name}.grid", hdr, grid.values)
        if args.csv:
            gridio.write_csv_grid(out / f"{name}.csv", grid.origin, grid.spacing, grid.values)
    return EXIT_OK


def _shadow_from_input(args):
    hf, vf = gridio.read_grid(args.input)
    if args.input_gradient:
        hg, vg = gridio.read_grid(args.input_gradient)
        if (hg.nx, hg.ny, hg.spacing, hg.origin) != (hf.nx, hf.ny, hf.spacing, hf.origin):
            raise ConfigError("--input-gradient does not match --input")
    else:
        vg = np.gradient(vf, hf.spacing, axis=1)
    mk = lambda v, d: sampler.FieldGrid(hf.origin, hf.spacing, v, None, hf.R, d, hf.seed,
                                        hf.stream, hf.spacing)
    if args.variant == "discrete":
        return shadow.shadow_discrete(vf, int(args.horizon), origin=hf.origin)
    return shadow.shadow_continuous(mk(vf, None), mk(vg, "e1"), args.horizon)


def cmd_shadow(args, out):
    if args.horizon <= 0:
        raise ConfigError("--horizon must be positive")
    if args.input:
        sf = _shadow_from_input(args)
    else:
        k = make_kernel(args)
        w = _window_of(args)
        if args.variant == "discrete":
            x0, y0, x1, y1 = args.window
            if w.spacing != 1.0 or any(v != int(v) for v in (x0, y0)):
                raise ConfigError("discrete variant needs an integer window and --spacing 1")
            w = Window.from_rect(x0, y0, x1, y1, args.h, 1.0)
            padded = w.pad_right(args.horizon + args.pad)
            noise = sampler.noise_for_window(padded, k, args.seed, args.stream, args.trunc)
            X = sampler.convolve_field(noise, k, args.trunc, padded).values
            sf = shadow.shadow_discrete(X, int(args.horizon), origin=w.origin).crop(w.nx, w.ny)
        else:
            noise = shadow.noise_for_shadow(w, k, args.horizon + args.pad, args.seed,
                                            args.stream, args.trunc)
            sf = shadow.continuous_alpha(noise, k, w, args.horizon, args.trunc)
    kind = "shadow-discrete" if sf.variant == "discrete" else "shadow-continuous"
    ny, nx = sf.alpha.shape
    hdr = gridio.GridHeader(kind, sf.origin, sf.spacing, nx, ny, args.trunc, sf.horizon,
                            args.seed, args.stream)
    gridio.write_grid(out / "alpha.grid", hdr, sf.alpha)
    if args.render is not None:
        gridio.write_pgm(out / "alpha.pgm", percolation.render_mask(sf, args.render))
    return EXIT_OK


def cmd_scan(args, out):
    k = make_kernel(args)
    if args.trials < 1:
        raise ConfigError("--trials must be >= 1")
    if args.ell_steps < 1:
        raise ConfigError("--ell-steps must be >= 1")
    ells = np.linspace(args.ell_min, args.ell_max, args.ell_steps)
    orient = ("h", "v") if args.orientation == "both" else (args.orientation,)
    budget = None if math.isinf(args.time_budget) else args.time_budget
    res = percolation.crossing_scan(k, ells, args.lambdas, args.trials, args.seed,
                                    variant=args.variant, horizon=args.horizon,
                                    kernel_R=args.trunc, h=args.h, orientations=orient,
                                    kernel_name=args.kernel, time_budget=budget,
                                    workers=args.workers)
    gridio.write_table(out / "scan.csv", res.header, res.rows)
    return EXIT_OK if res.complete else EXIT_BUDGET


def cmd_certify(args, out):
    if not args.mu or not args.sigma:
        raise ConfigError("--mu and --sigma need at least one value")
    try:
        params = renorm.SchemeParams(args.d, args.lambda0, tuple(args.mu), tuple(args.sigma),
                                     args.levels)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    rep = renorm.certify(params)
    text = rep.text()
    ok = rep.passed
    if args.boot_a is not None or args.boot_b is not None:
        if args.boot_a is None or args.boot_b is None:
            raise ConfigError("--boot-a and --boot-b go together")
        try:
            bc = renorm.bootstrap_cert(args.boot_a, args.boot_b, args.boot_lambda0, args.boot_ell,
                                       args.boot_ell_prime, args.boot_u0)
        except renorm.ConditionError as e:
            text += f"bootstrap  {e}  FAIL\n"
            ok = False
        else:
            text += (f"bootstrap delta={bc.delta!r} gamma={bc.gamma!r}\n"
                     + "".join(f"bootstrap {k}  {v}\n" for k, v in bc.flags.items()))
            ok &= all(v for k, v in bc.flags.items() if isinstance(v, bool))
    (out / "certificate.txt").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if ok else EXIT_FAIL


def _parse_sites(s):
    if os.path.exists(s):
        return gridio.read_sites(s)
    try:
        return [tuple(int(v) for v in part.split(",")) for part in s.split(";") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse sites {s!r}") from None


def cmd_order(args, out):
    sites = _parse_sites(args.sites)
    if not sites:
        raise ConfigError("no sites")
    if args.trials < 1000:
        raise ConfigError("--trials must be >= 1000")
    k = make_kernel(args)
    header = ["kind", "sites", "estimate", "stderr", "lower", "upper", "verdict"]
    rows = []
    if k is None:
        cov = ordering.cov_from_matrix(np.eye(len(sites)), sorted(sites))
    else:
        cov = ordering.build_covariance(k, sites)
    delta = ordering.gershgorin_delta(cov)
    spec = ordering.OrderingSpec.identity([cov.sites])
    est = ordering.ordering_probability_mc(cov, spec, args.trials, args.seed)
    lo, hi = ordering.ordering_bounds(spec, delta)
    ok = lo - 3 * est.stderr <= est.estimate <= hi + 3 * est.stderr
    label = ";".join(f"{x},{y}" for x, y in cov.sites)
    rows.append(["ordering", label, est.estimate, est.stderr, lo, hi, "PASS" if ok else "FAIL"])
    if args.horizon is not None:
        if k is None:
            raise ConfigError("the Peierls row needs a kernel")
        pr = ordering.peierls_estimate_mc(k, sites, args.horizon, args.trials, args.seed)
        good = pr.consistent and pr.implication_violations == 0
        rows.append(["peierls", label, pr.estimate, pr.stderr, 0.0, pr.bound,
                     "PASS" if good else "FAIL"])
    gridio.write_table(out / "order.csv", header, rows)
    return EXIT_OK


COMMANDS = dict(sample=cmd_sample, shadow=cmd_shadow, scan=cmd_scan, certify=cmd_certify,
                order=cmd_order)


def main(argv=None):
    try:
        args = parse(sys.argv[1:] if argv is None else argv)
    except ConfigError as e:
        print(f"shadowperc: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    if args.h <= 0:
        print("shadowperc: --h must be positive", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_manifest(args, out)
        return COMMANDS[args.command](args, out)
    except (ConfigError, ValueError) as e:
        print(f"shadowperc: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as e:
        print(f"shadowperc: {e}", file=sys.stderr)
        return EXIT_BUDGET


if __name__ == "__main__":
    sys.exit(main())
