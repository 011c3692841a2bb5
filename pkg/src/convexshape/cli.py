"""Command line entry point: ``convexshape {solve,verify,sample,render}``.

Exit codes: 0 success, 2 validation error, 3 solver failure,
4 verification failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__, oracle
from .gauge import GaugeVector, sample_gauge, vertices_gauge
from .geometry import polygon
from .optimizer import InfeasibleStart
from .problems import DescriptorError, load_descriptor, run_problem
from .shapes import SHAPE_KINDS, shape_from_dict
from .support import grid, sample_support

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_VERIFY = 0, 2, 3, 4


def _err(msg: str) -> None:
    print(f"convexshape: error: {msg}", file=sys.stderr)


# -- SVG ----------------------------------------------------------------------

def _path(V) -> str:
    pts = " L ".join(f"{x:.6f} {-y:.6f}" for x, y in V)
    return f"M {pts} Z"


def _heat(source, box, cells: int = 60) -> list[str]:
    (x0, y0), (x1, y1) = box
    xs = np.linspace(x0, x1, cells + 1)
    ys = np.linspace(y0, y1, cells + 1)
    cx, cy = np.meshgrid(0.5 * (xs[1:] + xs[:-1]), 0.5 * (ys[1:] + ys[:-1]))
    vals = source(np.column_stack([cx.ravel(), cy.ravel()])).reshape(cx.shape)
    lo, hi = vals.min(), vals.max()
    t = (vals - lo) / (hi - lo) if hi > lo else np.zeros_like(vals)
    dx, dy = xs[1] - xs[0], ys[1] - ys[0]
    out = []
    for j in range(cells):
        for i in range(cells):
            r, b = int(255 * t[j, i]), int(255 * (1 - t[j, i]))
            out.append(f'<rect x="{xs[i]:.5f}" y="{-ys[j + 1]:.5f}" width="{dx:.5f}" '
                       f'height="{dy:.5f}" fill="rgb({r},64,{b})" stroke="none"/>')
    return out


def render_svg(result: dict) -> str:
    """SVG of the stored shape, plus the polar polygon for Mahler runs and a
    source heat map for PDE runs."""
    desc = result["descriptor"]
    polys = [(np.asarray(result["vertices"], dtype=float), "#1f4e99")]
    if desc["parametrization"] == "polar-pair":
        Q = vertices_gauge(GaugeVector(np.asarray(result["x"], dtype=float)), check=False)
        polys.append((Q.vertices, "#b8332e"))
    allv = np.vstack([p for p, _ in polys])
    heat = []
    fn = desc["functional"]
    if fn["name"] == "pde_integral":
        from .functionals import SOURCES
        box = (allv.min(axis=0), allv.max(axis=0))
        for c in desc["constraints"]:
            if c["type"] == "inclusion" and c.get("outer"):
                h = shape_from_dict(c["outer"]).support(np.array([0, 0.5, 1, 1.5]) * np.pi)
                box = (np.array([-h[2], -h[3]]), np.array([h[0], h[1]]))
        allv = np.vstack([allv, box[0], box[1]])
        heat = _heat(SOURCES[fn.get("source", "f1")], box)
    lo, hi = allv.min(axis=0), allv.max(axis=0)
    span = float(max(hi - lo)) or 1.0
    pad = 0.05 * span
    vb = f"{lo[0] - pad:.6f} {-hi[1] - pad:.6f} {hi[0] - lo[0] + 2 * pad:.6f} {hi[1] - lo[1] + 2 * pad:.6f}"
    sw = 0.004 * span
    body = heat + [f'<path d="{_path(V)}" fill="none" stroke="{c}" stroke-width="{sw:.5f}"/>'
                   for V, c in polys]
    return ('<svg xmlns="http://www.w3.org/2000/svg" viewBox="' + vb + '">\n'
            f"<title>{desc.get('name', 'shape')}</title>\n" + "\n".join(body) + "\n</svg>\n")


# -- commands -------------------------------------------------------------------

def cmd_solve(args) -> int:
    try:
        desc = load_descriptor(args.descriptor)
        result = run_problem(desc, seed=args.seed)
    except DescriptorError as exc:
        _err(f"invalid descriptor: {exc}")
        return EXIT_VALIDATION
    except InfeasibleStart as exc:
        _err(f"constraints are infeasible ({', '.join(exc.families)}): {exc}")
        return EXIT_VALIDATION
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    d = result.to_dict()
    stem = out / desc.name
    Path(f"{stem}.json").write_text(json.dumps(d, indent=2))
    np.savetxt(f"{stem}_vertices.csv", result.vertices, delimiter=",", header="x,y",
               comments="", fmt="%.17g")
    Path(f"{stem}.svg").write_text(render_svg(d))
    m = result.metrics
    print(f"{desc.name}: status={result.report.status} objective={m['objective']:.10g} "
          f"area={m['area']:.10g} kkt={result.report.kkt:.3g} seed={result.seed}")
    return EXIT_OK if result.success else EXIT_SOLVER


def cmd_verify(args) -> int:
    report = oracle.run_suite(args.suite)
    report["version"] = __version__
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"verify_{args.suite}.json"
    path.write_text(json.dumps(report, indent=2, default=float))
    for sname, s in report["suites"].items():
        for c in s["checks"]:
            flag = "PASS" if c["passed"] else "FAIL"
            print(f"{flag} {sname}/{c['name']}: value={c['value']:.4g} bound={c['bound']:.4g} {c['detail']}")
        print(f"{'PASS' if s['passed'] else 'FAIL'} suite {sname} ({s['seconds']:.1f} s)")
    print(f"report written to {path}")
    return EXIT_OK if report["passed"] else EXIT_VERIFY


def _parse_shape(text: str):
    if text in SHAPE_KINDS:
        return shape_from_dict({"kind": text})
    p = Path(text)
    raw = p.read_text() if p.exists() else text
    return shape_from_dict(json.loads(raw))


def cmd_sample(args) -> int:
    try:
        shape = _parse_shape(args.shape)
        if args.n < 3:
            raise ValueError("n must be at least 3")
        values = (sample_support(shape, args.n) if args.kind == "support"
                  else sample_gauge(shape, args.n)).values
    except (ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        _err(f"invalid shape: {exc}")
        return EXIT_VALIDATION
    header = f"{args.kind} values of {shape.kind}, n={args.n}\ntheta,value"
    data = np.column_stack([grid(args.n), values])
    if args.out:
        np.savetxt(args.out, data, delimiter=",", header=header, fmt="%.17g")
    else:
        np.savetxt(sys.stdout, data, delimiter=",", header=header, fmt="%.17g")
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        result = json.loads(Path(args.result).read_text())
        svg = render_svg(result)
    except FileNotFoundError:
        _err(f"no such result file: {args.result}")
        return EXIT_VALIDATION
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        _err(f"unreadable result file: {exc}")
        return EXIT_VALIDATION
    Path(args.svg).write_text(svg)
    if args.mesh:
        from .fem import mesh_polygon, mesh_to_text
        P = polygon(np.asarray(result["vertices"], dtype=float))
        Path(args.mesh).write_text(mesh_to_text(mesh_polygon(P, target_h=P.diameter() / 40)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="convexshape", description="Shape optimization over convex planar bodies.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a problem descriptor (file path or bundled preset name)")
    s.add_argument("descriptor")
    s.add_argument("--out", default=".", help="output directory")
    s.add_argument("--seed", type=int, default=None, help="run this seed only")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="run oracle suites")
    v.add_argument("--suite", default="all", choices=sorted(oracle.SUITES) + ["all"])
    v.add_argument("--out", default=".")
    v.set_defaults(func=cmd_verify)

    p = sub.add_parser("sample", help="sample a fixture shape on the angle grid")
    p.add_argument("shape", help=f"one of {', '.join(SHAPE_KINDS[:-1])}, or a JSON shape (inline or file)")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--kind", choices=("support", "gauge"), default="support")
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_sample)

    r = sub.add_parser("render", help="render a result JSON to SVG")
    r.add_argument("result")
    r.add_argument("svg")
    r.add_argument("--mesh", default=None, help="also write the FEM mesh of the shape")
    r.set_defaults(func=cmd_render)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
