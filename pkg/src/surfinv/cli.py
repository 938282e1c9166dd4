"""``surfinv`` command line: build surfaces, compute invariants, run studies.

Exit codes: 0 success, 1 a numerical check failed its tolerance, 2 bad input.
"""
from __future__ import annotations

import argparse
import csv
import io
import re
import sys
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from . import __version__
from .arakelov import (GreenError, green_matrix, green_operator_apply, green_system,
                       h_identity_checks, h_square_without_green, kawazumi_ag_definition,
                       kawazumi_ag_green)
from .ceresa import ceresa_checks, harmonic_volume
from .conventions import TOLERANCE_ENV, profile_names, tolerances
from .hodge import SolverError, compute_bases, exterior_derivative
from .meshio import load_mesh, save_mesh
from .report import check, dumps, estimate, failed_checks, new_report
from .studies import FAMILIES, StudyError, convergence_study, degeneration_study
from .surface import MeshError, TriMesh, build_flat_torus, build_hyperelliptic_cover, validate_mesh

TARGETS = ("ag", "green", "periods", "harmonic-volume", "checks")

# options whose values may legitimately start with "-" (negative numbers)
_VALUE_FLAGS = {"--tau", "--branch", "--t", "--resolutions"}


class InputError(ValueError):
    """Malformed command-line input (exit code 2)."""


# -------------------------------------------------------------------- parsing

def parse_complex(text: str) -> complex:
    """Parse ``0.5+0.8i``, ``2i``, ``-1`` or ``1-2j``."""
    s = text.strip().replace(" ", "").replace("I", "i").replace("i", "j")
    if not s or not re.fullmatch(r"[0-9eE.+\-j]+", s):
        raise InputError(f"cannot parse complex number {text!r}")
    if s.endswith("j") and (len(s) == 1 or s[-2] in "+-"):
        s = s[:-1] + "1j"
    try:
        return complex(s)
    except ValueError as exc:
        raise InputError(f"cannot parse complex number {text!r}") from exc


def parse_complex_list(text: str) -> list[complex]:
    parts = [p for p in text.split(",")]
    if not parts or any(not p.strip() for p in parts):
        raise InputError(f"malformed list {text!r}: empty entry")
    return [parse_complex(p) for p in parts]


def parse_float_list(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",")]
    except ValueError as exc:
        raise InputError(f"malformed number list {text!r}") from exc


def parse_int_list(text: str) -> list[int]:
    try:
        return [int(p) for p in text.split(",")]
    except ValueError as exc:
        raise InputError(f"malformed integer list {text!r}") from exc


def _glue_values(argv: list[str]) -> list[str]:
    out, k = [], 0
    while k < len(argv):
        a = argv[k]
        if a in _VALUE_FLAGS and k + 1 < len(argv):
            out.append(f"{a}={argv[k + 1]}")
            k += 2
        else:
            out.append(a)
            k += 1
    return out


def _resolve_tolerances(args) -> dict:
    overrides = {}
    for item in args.tol or []:
        if "=" not in item:
            raise InputError(f"--tol expects KEY=VALUE, got {item!r}")
        key, val = item.split("=", 1)
        try:
            overrides[key] = float(val)
        except ValueError as exc:
            raise InputError(f"--tol {key}: {val!r} is not a number") from exc
    try:
        base = tolerances(args.profile)
    except KeyError as exc:
        raise InputError(f"{exc.args[0]}; known profiles: {', '.join(profile_names())}") from exc
    unknown = sorted(set(overrides) - set(base))
    if unknown:
        raise InputError(f"unknown tolerance key(s): {', '.join(unknown)}")
    for key in ("vertex_budget", "sample_size", "sample_seed"):
        if key in overrides:
            overrides[key] = int(overrides[key])
    return tolerances(args.profile, **overrides)


# --------------------------------------------------------------------- output

def _emit(text: str, path: str | None) -> None:
    if path and path != "-":
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    cols = list(rows[0])
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: _csv_cell(r.get(k)) for k in cols})
    return buf.getvalue()


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, list):
        return ";".join(_csv_cell(x) for x in np.ravel(np.asarray(v, dtype=object)))
    if isinstance(v, complex):
        return f"{v.real!r}{v.imag:+.17g}j"
    return v


class _Timer:
    def __init__(self):
        self.stages: dict[str, float] = {}

    @contextmanager
    def __call__(self, name: str):
        t0 = time.perf_counter()
        yield
        self.stages[name] = self.stages.get(name, 0.0) + time.perf_counter() - t0


# ------------------------------------------------------------------- commands

def cmd_surface(args) -> int:
    if args.kind == "torus":
        tau = parse_complex(args.tau)
        if tau.imag <= 0:
            raise InputError(f"tau must have positive imaginary part, got {args.tau!r}")
        mesh = build_flat_torus(tau, args.n, jitter=args.jitter, seed=args.seed)
    else:
        mesh = build_hyperelliptic_cover(parse_complex_list(args.branch), args.n)
    rep = validate_mesh(mesh)
    save_mesh(mesh, args.output)
    report = new_report("surface", mesh.descriptor, _mesh_stats(mesh, rep))
    report["mesh_file"] = str(args.output)
    _emit(dumps(report), args.report)
    return 0 if rep["valid"] else 1


def _mesh_stats(mesh: TriMesh, rep: dict | None = None) -> dict:
    rep = rep or validate_mesh(mesh)
    out = dict(rep)
    out["genus"] = mesh.genus
    return out


def compute_report(mesh: TriMesh, targets, tol: dict, threads: int = 1, timings: bool = False,
                   vertex: int | None = None, spill: str | None = None) -> dict:
    """Evaluate ``targets`` on ``mesh`` and return the report dictionary."""
    targets = list(dict.fromkeys(targets))
    for t in targets:
        if t not in TARGETS:
            raise InputError(f"unknown target {t!r}; choose from {', '.join(TARGETS)}")
    timer = _Timer()
    rep = validate_mesh(mesh)
    report = new_report("compute", mesh.descriptor, _mesh_stats(mesh, rep), {
        "tolerances": tol,
        "seeds": {"sample_seed": tol["sample_seed"], "pair_seed": tol["sample_seed"]},
        "threads": threads,
        "targets": targets,
        "version": __version__,
    })
    checks, inv = report["checks"], report["invariants"]
    checks["mesh_valid"] = check(0 if rep["valid"] else 1, 0)
    if not rep["valid"]:
        return report
    g = mesh.genus
    with timer("hodge"):
        bases = compute_bases(mesh, tol["solver_rtol"])
    need_system = any(t in targets for t in ("ag", "green", "checks"))
    system = greens = None
    if need_system:
        with timer("green_system"):
            system = green_system(bases, tol)

    def get_greens():
        nonlocal greens
        if greens is None:
            with timer("green_matrix"):
                greens = green_matrix(system, tol["vertex_budget"], tol["sample_size"],
                                      tol["sample_seed"], threads=threads)
            if spill:
                greens.save(spill)
        return greens

    if "periods" in targets:
        h = bases.harmonic
        pm = bases.periods
        inv["tau"] = estimate(pm.tau, pm.symmetry_defect)
        inv["gram"] = estimate(bases.gram, float(np.abs(bases.gram_after - np.eye(g)).max()) if g else 0.0)
        checks["tau_imag_positive_definite"] = check(pm.min_imag_eig, 0.0, passed=bool(g == 0 or pm.min_imag_eig > 0))
        checks["tau_symmetry"] = check(pm.symmetry_defect, tol["period_symmetry"])
        checks["gram_identity"] = check(float(np.abs(bases.gram_after - np.eye(g)).max()) if g else 0.0,
                                        tol["algebraic"])
        checks["harmonic_closed"] = check(h.closed_residual, tol["algebraic"])
        checks["harmonic_coclosed"] = check(h.coclosed_residual, tol["solver_rtol"] * 100)
        inv["star_defect"] = estimate(bases.star_defect, 0.0)

    if "green" in targets:
        G = get_greens()
        mu = system.mu
        checks["mu_mass"] = check(abs(float(mu.sum()) - 1.0), tol["mu_mass"])
        checks["mu_nonnegative"] = check(max(0.0, -float(mu.min())), tol["mu_negative"])
        checks["green_symmetry"] = check(G.symmetry_defect, tol["green_symmetry"])
        checks["green_normalization"] = check(G.normalization_defect(system.mu_vertex),
                                              tol["green_normalization"])
        phi_mu = green_operator_apply(system, mu)
        checks["phi_of_mu_zero"] = check(float(np.abs(phi_mu).max()), tol["green_normalization"])
        inv["green_matrix"] = {"mode": G.mode, "rows": int(len(G.rows)), "seed": G.seed,
                               "diagonal_regularized_range": estimate(
                                   [float(G.diagonal_regularized.min()), float(G.diagonal_regularized.max())],
                                   tol["solver_rtol"])}

    if "ag" in targets:
        with timer("ag_definition"):
            a_def = kawazumi_ag_definition(bases, system, tol["imag_residual"])
        G = get_greens()
        with timer("ag_green"):
            a_green, bar = kawazumi_ag_green(bases, G)
        inv["ag_definition"] = estimate(a_def, tol["imag_residual"] * max(1.0, abs(a_def)))
        inv["ag_green"] = estimate(a_green, bar)
        if g >= 2:
            gap = abs(a_def - a_green) / abs(a_def)
            inv["ag_relative_gap"] = estimate(gap, bar / abs(a_def))
            checks["ag_cross_route"] = check(gap, tol["cross_route_rel"])
            checks["ag_positive"] = check(a_def, 0.0, passed=bool(a_def > 0 and a_green > 0))
        elif g == 1:
            checks["ag_genus1_vanishing"] = check(max(abs(a_def), abs(a_green) + bar), tol["genus1_ag"])

    if "harmonic-volume" in targets:
        if g < 2:
            inv["harmonic_volume"] = {"vacuous": True,
                                      "note": "wedge^3 of a rank-2 lattice is zero; harmonic volume is empty"}
        else:
            x = bases.harmonic.homology.root if vertex is None else int(vertex)
            if not 0 <= x < mesh.n_vertices:
                raise InputError(f"vertex {x} out of range")
            with timer("harmonic_volume"):
                I = harmonic_volume(bases, x)
            inv["harmonic_volume"] = {"base": x, "triples": [list(t) for t in I.triples],
                                      "coords": estimate(I.coords, I.lift_deviation)}
            checks["harmonic_volume_lift_independence"] = check(I.lift_deviation, tol["circle"])

    if "checks" in targets:
        d0, d1 = exterior_derivative(0, mesh), exterior_derivative(1, mesh)
        checks["d_squared_zero"] = check(float(abs(d1 @ d0).max()), 0.0)
        if g >= 1:
            with timer("h_identities"):
                hc = h_identity_checks(bases)
            checks["selfinters"] = check(hc["selfinters_rel_dev"], tol["selfinters_rel"],
                                         computed=hc["selfinters"], expected=hc["selfinters_expected"])
            checks["gram_K_identity"] = check(hc["gram_K_minus_2i_identity"], tol["algebraic"])
            inv["h_identities"] = {
                "fiber_restriction_max_dev": estimate(hc["fiber_restriction_max_dev"], 0.0),
                "fiber_vertex_quadrature_dev": estimate(hc["fiber_vertex_quadrature_dev"], 0.0),
                "mixed_h_p1mu": estimate(hc["mixed_h_p1mu"], tol["algebraic"]),
                "mixed_h_p2mu": estimate(hc["mixed_h_p2mu"], tol["algebraic"]),
                "mixed_p1mu_p2mu": estimate(hc["mixed_p1mu_p2mu"], tol["mu_mass"]),
                "selfinters_written_coefficient": estimate(hc["selfinters_written_coefficient"], 0.0),
                "selfinters_written_expected": hc["selfinters_written_expected"],
                "diagonal_max_rel_dev": estimate(hc["diagonal_max_rel_dev"], 0.0),
                "diagonal_written_max_rel_dev": estimate(hc["diagonal_written_max_rel_dev"], 0.0),
                "riemann_bilinear_R": estimate(hc["riemann_bilinear_R"], 0.0),
            }
            hs = h_square_without_green(bases)
            inv["h_square_without_green"] = estimate(hs["h_square"], abs(hs["h_square"] - hs["expected"]))
        if g >= 2 and mesh.branch_vertices:
            with timer("ceresa"):
                cc = ceresa_checks(bases, 10, tol["sample_seed"], tol["circle"])
            for key in ("torsion_2I_w_max_dev", "torsion_2AJ_ww_max_dev", "contraction_identity_max_dev",
                        "difference_identity_max_dev", "lift_independence_max_dev"):
                checks["ceresa_" + key.replace("_max_dev", "")] = check(cc[key], tol["circle"])
            checks["ceresa_contraction_embedding_exact"] = check(0 if cc["contraction_embedding_exact"] else 1, 0)
            inv["ceresa"] = {"weierstrass_vertex": cc["weierstrass_vertex"], "pairs": cc["pairs"],
                             "difference_identity_reversed_max_dev": estimate(
                                 cc["difference_identity_reversed_max_dev"], 0.0)}
        elif g < 2:
            inv["ceresa"] = {"vacuous": True, "note": "genus below 2: J_1 has rank 0"}
    if timings:
        report["timings"] = timer.stages
    return report


def cmd_compute(args) -> int:
    tol = _resolve_tolerances(args)
    targets = [t.strip() for t in args.targets.split(",") if t.strip()]
    if not targets:
        raise InputError("--targets is empty")
    try:
        mesh = load_mesh(args.mesh)
    except OSError as exc:
        raise InputError(f"cannot read {args.mesh}: {exc.strerror}") from exc
    report = compute_report(mesh, targets, tol, threads=args.threads, timings=args.timings,
                            vertex=args.vertex, spill=args.spill)
    _emit(dumps(report), args.output)
    bad = failed_checks(report["checks"])
    for path in bad:
        print(f"check failed: {path}", file=sys.stderr)
    return 1 if bad else 0


def cmd_study(args) -> int:
    if args.study == "convergence":
        res = parse_int_list(args.resolutions)
        if args.surface == "torus":
            surface = {"type": "torus", "tau": parse_complex(args.tau)}
        else:
            if not args.branch:
                raise InputError("--branch is required for a hyperelliptic study")
            surface = {"type": "hyperelliptic", "branch": parse_complex_list(args.branch)}
        rows = convergence_study(surface, res, args.target)
    else:
        if args.genus != 2:
            raise InputError("the degeneration study is implemented for genus 2 only")
        rows = degeneration_study(args.family, parse_float_list(args.t), n=args.n,
                                  tol=args.slope_rel)
    _emit(rows_to_csv(rows), args.output)
    return 0


# ----------------------------------------------------------------- argparse

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="surfinv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"surfinv {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("surface", help="build and validate a mesh")
    ssub = s.add_subparsers(dest="kind", required=True)
    t = ssub.add_parser("torus", help="flat torus C / (Z + tau Z)")
    t.add_argument("--tau", required=True, help="modulus, e.g. 0.5+0.8i")
    t.add_argument("--jitter", type=float, default=0.0)
    t.add_argument("--seed", type=int, default=0)
    h = ssub.add_parser("hyperelliptic", help="double cover of the sphere")
    h.add_argument("--branch", required=True, help='comma-separated branch points, e.g. "-2,-1,0,1,2,5"')
    for q in (t, h):
        q.add_argument("--n", type=int, required=True, help="resolution")
        q.add_argument("-o", "--output", required=True, help="mesh file to write")
        q.add_argument("--report", help="write the validation report here instead of stdout")
    s.set_defaults(func=cmd_surface)

    c = sub.add_parser("compute", help="compute invariants and checks")
    c.add_argument("mesh")
    c.add_argument("--targets", default="ag", help=f"comma-separated subset of {{{', '.join(TARGETS)}}}")
    c.add_argument("-o", "--output", help="report file (default stdout)")
    c.add_argument("--threads", type=int, default=1, help="cap on the Green-matrix worker pool")
    c.add_argument("--profile", help=f"tolerance profile (default ${TOLERANCE_ENV} or 'default')")
    c.add_argument("--tol", action="append", metavar="KEY=VALUE", help="override one tolerance")
    c.add_argument("--vertex", type=int, help="base vertex for the harmonic volume")
    c.add_argument("--spill", help="also write the Green matrix to this binary file")
    c.add_argument("--timings", action="store_true", help="include wall-clock timings (not reproducible)")
    c.set_defaults(func=cmd_compute)

    st = sub.add_parser("study", help="refinement and degeneration studies (CSV output)")
    stsub = st.add_subparsers(dest="study", required=True)
    cv = stsub.add_parser("convergence")
    cv.add_argument("--surface", choices=("torus", "hyperelliptic"), required=True)
    cv.add_argument("--tau", default="0.5+0.8i")
    cv.add_argument("--branch")
    cv.add_argument("--resolutions", required=True, help="comma-separated, increasing")
    cv.add_argument("--target", choices=("ag", "green-oracle", "tau"), default="ag")
    dg = stsub.add_parser("degeneration")
    dg.add_argument("--genus", type=int, default=2)
    dg.add_argument("--family", choices=sorted(FAMILIES), default="pair")
    dg.add_argument("--t", default="0.2,0.1,0.05", help="decreasing node parameters")
    dg.add_argument("--n", type=int, default=12)
    dg.add_argument("--slope-rel", type=float, default=0.30)
    for q in (cv, dg):
        q.add_argument("-o", "--output", help="CSV file (default stdout)")
    st.set_defaults(func=cmd_study)
    return p


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_glue_values(argv))
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (InputError, MeshError, StudyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SolverError, GreenError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
