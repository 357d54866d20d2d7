"""Command-line front end.

Exit codes: 0 success, 2 convergence failure, 3 invalid arguments.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .continuation import StepControl, StopRules, detect_special, tangent, trace, trace_family
from .errors import CMCError, StallError
from .family import FamilyParams
from .geometry import check_embedded, is_tabulated_minimal, reconstruct, volume, yau_check
from .odecore import ToleranceSpec
from .shooting import ShootingPoint, find_seed, solve
from . import export, tabulated

log = logging.getLogger("cmcsphere")

EXIT_OK = 0
EXIT_CONVERGENCE = 2
EXIT_USAGE = 3
TABLE_TOL = 2e-3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def _family(args) -> FamilyParams:
    try:
        return FamilyParams.from_nl(args.n, args.l)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _tol(args) -> ToleranceSpec:
    return ToleranceSpec(rtol=args.tol_ode, atol=args.tol_ode, newton_tol=args.tol_newton)


def _pair_list(text: str) -> list[tuple[int, int]]:
    text = text.strip()
    if text.lower() == "all":
        return sorted(tabulated.SPECIAL_POINTS)
    pairs = [(int(n), int(l)) for n, l in re.findall(r"\(\s*(\d+)\s*,\s*(\d+)\s*\)", text)]
    leftover = re.sub(r"\(\s*\d+\s*,\s*\d+\s*\)", "", text).replace(",", "").strip()
    if leftover:
        raise UsageError(f"cannot parse pairs {text!r}; expected e.g. \"(3,1),(4,1)\"")
    return pairs


def _out(args, name: str) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out / name


# ---------------------------------------------------------------------------
# commands

def cmd_solve(args) -> int:
    params = _family(args)
    tol = _tol(args)
    manifest = export.RunManifest.start("solve", params, tol, sys.argv)
    if args.scan is not None:
        try:
            lo, hi = (float(v) for v in args.scan.split(","))
        except ValueError as exc:
            raise UsageError(f"--scan expects lo,hi, got {args.scan!r}") from exc
        manifest.seed = {"scan": [lo, hi], "H": args.H}
        point = find_seed(params, args.H, (lo, hi), tol=tol)
    elif args.a_guess is not None and args.t_guess is not None:
        manifest.seed = {"a_guess": args.a_guess, "t_guess": args.t_guess, "H": args.H}
        point = solve(ShootingPoint(args.a_guess, args.H, args.t_guess), params, frozen="H", tol=tol)
    else:
        raise UsageError("give either --scan lo,hi or both --a-guess and --t-guess")
    v = tangent(point, params)
    print(f"family (n,l)={params.label} k={params.k}")
    print(f"a = {_fmt(point.a)}")
    print(f"H = {_fmt(point.H)}")
    print(f"T = {_fmt(point.T)}")
    print(f"residuals: F1 = {point.res_f1:.3e}, Theta - pi = {point.res_theta:.3e}")
    print(f"newton iterations: {point.iterations}")
    print("grad F1    = (" + ", ".join(_fmt(x) for x in point.jac.grad_F1) + ")")
    print("grad Theta = (" + ", ".join(_fmt(x) for x in point.jac.grad_Theta) + ")")
    print("tangent    = (" + ", ".join(_fmt(x) for x in v) + ")")
    path = _out(args, f"solve_{params.n}_{params.l}.json")
    payload = {"point": point.as_dict(), "iterations": point.iterations, "tangent": v}
    export.write_json(path, payload, manifest.finish())
    print(f"wrote {path}")
    return EXIT_OK


def _trace_curve(params, args, tol):
    step = StepControl(h0=args.step, h_max=args.h_max)
    stop = StopRules(H_cap=args.H_cap, max_points=args.max_points)
    seed = find_seed(params, 0.0, (0.05, 0.6), tol=tol)
    if args.direction == 0:
        return seed, trace_family(params, seed, step, stop, tol)
    try:
        curve = trace(seed, params, args.direction, step, stop, tol)
    except StallError as exc:
        log.warning("trace stalled: %s", exc)
        curve = exc.partial
    if args.direction < 0:
        curve = curve.reversed()
    return seed, curve


def cmd_trace(args) -> int:
    params = _family(args)
    tol = _tol(args)
    manifest = export.RunManifest.start("trace", params, tol, sys.argv)
    seed, curve = _trace_curve(params, args, tol)
    manifest.seed = {"a": seed.a, "H": seed.H, "T": seed.T}
    if "stall" in curve.stop_reason:
        print(f"warning: continuation stalled ({curve.stop_reason}); writing the partial curve",
              file=sys.stderr)
    special = detect_special(curve, tol, require=())
    base = f"gamma_{params.n}_{params.l}"
    csv_path = export.write_gamma_csv(_out(args, base + ".csv"), curve)
    files = [csv_path.name]
    manifest.finish()
    if not args.no_svg:
        xyz = curve.xyz
        for suffix, (i, j), (xl, yl) in (("_TH", (2, 1), ("T", "H")), ("_aH", (0, 1), ("a", "H"))):
            svg = export.projection_svg(xyz[:, i], xyz[:, j], xl, yl,
                                        f"Gamma {params.label}: {yl} vs {xl}", manifest)
            files.append(export.write_text(_out(args, base + suffix + ".svg"), svg).name)
    json_path = _out(args, base + ".json")
    export.write_json(json_path, {"points": len(curve), "stop_reason": curve.stop_reason,
                                  "special": special.as_dict(), "files": files}, manifest)
    print(f"family (n,l)={params.label}: {len(curve)} points, stop: {curve.stop_reason}")
    for key, value in special.as_dict().items():
        print(f"  {key} = {value}")
    print(f"wrote {json_path} and {', '.join(files)}")
    return EXIT_OK


def table_row(pair, tol: ToleranceSpec = ToleranceSpec()) -> dict:
    """Special points of one family compared against the tabulated row (if any)."""
    n, l = pair
    row = {"n": n, "l": l, "error": None, "mismatch": []}
    try:
        params = FamilyParams.from_nl(n, l)
        curve = trace_family(params, tol=tol)
        sp = detect_special(curve, tol, require=())
    except (CMCError, ValueError) as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        return row
    row.update(a_Hmin=sp.a_Hmin, a_H0=sp.a_H0, a_star=list(sp.a_star_bracket), H_min=sp.H_min)
    ref = tabulated.SPECIAL_POINTS.get(pair)
    if ref is not None:
        ref_a_hmin, ref_a_h0, (lo, hi), ref_hmin = ref
        for key, got, want in (("a_Hmin", sp.a_Hmin, ref_a_hmin), ("a_H0", sp.a_H0, ref_a_h0),
                               ("H_min", sp.H_min, ref_hmin)):
            if not abs(got - want) <= TABLE_TOL:
                row["mismatch"].append(key)
        b_lo, b_hi = sp.a_star_bracket
        if not (b_lo <= hi and lo <= b_hi):
            row["mismatch"].append("a_star")
    return row


def _table_text(rows, fmt: str) -> str:
    header = ["(n,l)", "a_Hmin", "a_H0", "a_star_bracket", "H_min", "flags"]
    lines = []
    for r in rows:
        if r["error"]:
            cells = [f"({r['n']},{r['l']})", "", "", "", "", r["error"]]
        else:
            bracket = f"({r['a_star'][0]:.5f},{r['a_star'][1]:.5f})"
            flags = ("mismatch: " + " ".join(r["mismatch"])) if r["mismatch"] else "ok"
            cells = [f"({r['n']},{r['l']})", f"{r['a_Hmin']:.6f}", f"{r['a_H0']:.6f}",
                     bracket, f"{r['H_min']:.6f}", flags]
        lines.append(cells)
    if fmt == "csv":
        out = [",".join(header)] + [",".join(f'"{c}"' if "," in c else c for c in cells) for cells in lines]
    else:
        out = ["| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
        out += ["| " + " | ".join(cells) + " |" for cells in lines]
    return "\n".join(out) + "\n"


def cmd_table(args) -> int:
    tol = _tol(args)
    pairs = _pair_list(args.pairs)
    manifest = export.RunManifest.start("table", None, tol, sys.argv)
    manifest.seed = {"pairs": [list(p) for p in pairs]}
    if args.jobs > 1 and len(pairs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(table_row, pairs, [tol] * len(pairs)))
    else:
        rows = [table_row(p, tol) for p in pairs]
    text = _table_text(rows, args.format)
    sys.stdout.write(text)
    ext = "csv" if args.format == "csv" else "md"
    export.write_text(_out(args, f"table.{ext}"), text)
    export.write_json(_out(args, "table.json"), {"rows": rows}, manifest.finish())
    for r in rows:
        if r["error"]:
            print(f"warning: ({r['n']},{r['l']}) failed: {r['error']}", file=sys.stderr)
    return EXIT_OK


def minimal_example(params: FamilyParams, tol: ToleranceSpec = ToleranceSpec(), n_samples: int = 1025):
    point = find_seed(params, 0.0, (0.05, 0.6), tol=tol)
    curve = reconstruct(point, params, n_samples, tol)
    return point, curve, volume(curve)


def cmd_volume(args) -> int:
    params = _family(args)
    tol = _tol(args)
    if not is_tabulated_minimal(params) and not args.force:
        print(f"notice: no minimal example ({params.n},{params.l}) is tabulated for this family "
              f"(tabulated examples have l <= k = n - l - 1); pass --force to compute it anyway",
              file=sys.stderr)
        return EXIT_USAGE
    manifest = export.RunManifest.start("volume", params, tol, sys.argv)
    point, curve, report = minimal_example(params, tol, args.samples)
    manifest.seed = {"a": point.a, "T": point.T}
    verdict = yau_check(params, report)
    embedded = check_embedded(curve)
    print(f"family (n,l)={params.label}: minimal example a = {_fmt(point.a)}, T = {_fmt(point.T)}")
    print(f"Vol({params.n},{params.l}) = {report.vol:.6f}  (quadrature error ~ {report.quadrature_error_estimate:.1e})")
    for lp, vc in report.clifford:
        print(f"  VolC({params.n},{lp}) = {vc:.6f}   margin {report.vol - vc:+.6f}")
    print(f"  sigma_{params.n} = {verdict.sphere_volume:.6f}")
    print(f"embedded profile: {embedded.embedded}")
    print(f"yau_ok = {str(report.yau_ok).lower()}")
    path = _out(args, f"volume_{params.n}_{params.l}.json")
    export.write_json(path, {"point": point.as_dict(), "report": report.as_dict(),
                             "yau": verdict.as_dict(), "embedded": embedded.embedded},
                      manifest.finish())
    print(f"wrote {path}")
    return EXIT_OK


def cmd_profile(args) -> int:
    params = _family(args)
    tol = _tol(args)
    manifest = export.RunManifest.start("profile", params, tol, sys.argv)
    manifest.seed = {"a": args.a, "H": args.H, "t": args.t}
    point = solve(ShootingPoint(args.a, args.H, args.t), params, frozen="H", tol=tol)
    curve = reconstruct(point, params, args.samples, tol)
    base = f"profile_{params.n}_{params.l}"
    csv_path = Path(args.csv) if args.csv else _out(args, base + ".csv")
    svg_path = Path(args.svg) if args.svg else _out(args, base + ".svg")
    export.write_profile_csv(csv_path, curve)
    manifest.finish()
    export.write_text(svg_path, export.profile_svg(curve, manifest))
    json_path = csv_path.with_suffix(".json")
    export.write_json(json_path, {"point": point.as_dict(), "samples": curve.samples.shape[0],
                                  "embedded": check_embedded(curve).embedded,
                                  "files": [csv_path.name, svg_path.name]}, manifest)
    print(f"family (n,l)={params.label}: a = {_fmt(point.a)}, H = {_fmt(point.H)}, T = {_fmt(point.T)}")
    print(f"wrote {csv_path}, {svg_path}, {json_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cmcsphere", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, family=True):
        if family:
            p.add_argument("--n", type=int, required=True, help="hypersurface dimension")
            p.add_argument("--l", type=int, required=True, help="dimension of the second sphere factor")
        p.add_argument("--tol-ode", type=float, default=ToleranceSpec.rtol,
                       help="relative and absolute integrator tolerance")
        p.add_argument("--tol-newton", type=float, default=ToleranceSpec.newton_tol)
        p.add_argument("--out-dir", default=".", help="directory for output files")

    p = sub.add_parser("solve", help="solve the half-period shooting problem at fixed H")
    common(p)
    p.add_argument("--H", type=float, default=0.0)
    p.add_argument("--a-guess", type=float)
    p.add_argument("--t-guess", type=float)
    p.add_argument("--scan", help="lo,hi range of a to scan for a seed")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("trace", help="trace the solution curve from the minimal example")
    common(p)
    p.add_argument("--direction", type=int, choices=(-1, 0, 1), default=0,
                   help="+1 increasing a, -1 decreasing a, 0 both (default)")
    p.add_argument("--max-points", type=int, default=StopRules.max_points)
    p.add_argument("--step", type=float, default=StepControl.h0, help="initial continuation step")
    p.add_argument("--h-max", type=float, default=StepControl.h_max)
    p.add_argument("--H-cap", type=float, default=StopRules.H_cap)
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("table", help="special points for several families")
    common(p, family=False)
    p.add_argument("--pairs", default="", help='e.g. "(3,1),(4,1)" or "all"')
    p.add_argument("--format", choices=("md", "csv"), default="md")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_table)

    p = sub.add_parser("volume", help="volume of the minimal example and Clifford comparison")
    common(p)
    p.add_argument("--samples", type=int, default=1025, help="samples per half period (2^m + 1)")
    p.add_argument("--force", action="store_true", help="compute even when l > k")
    p.set_defaults(func=cmd_volume)

    p = sub.add_parser("profile", help="profile curve CSV and SVG for one solution")
    common(p)
    p.add_argument("--a", type=float, required=True)
    p.add_argument("--H", type=float, required=True)
    p.add_argument("--t", type=float, required=True, help="half period guess")
    p.add_argument("--samples", type=int, default=513)
    p.add_argument("--csv")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CMCError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
