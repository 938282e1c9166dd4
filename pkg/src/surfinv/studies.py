"""Refinement and degeneration studies.

Both studies return plain row dictionaries so the CLI can write them as CSV
or embed them in a report.

Degeneration families are indexed by the node parameter ``t`` of the local
model ``uv = t``.  For two branch points at distance ``s`` the curve looks
like ``(y - x)(y + x) = -(s/2)^2`` near the collision, so ``t = (s/2)^2``.
For three branch points spaced ``s`` apart the cover of the collar is a
single annulus whose modulus grows like ``log(1/s) / 2``, so ``t = s^(1/2)``.
Only slopes between successive ``t`` are reported because the asymptotics
hold up to bounded terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .arakelov import (green_function, green_system, kawazumi_ag_definition, torus_chart,
                       torus_log_green)
from .hodge import compute_bases
from .surface import MeshError, build_flat_torus, build_hyperelliptic_cover, stereographic

# ``h`` written with a mixed coefficient of -i doubles the geometric Chern form
# (coefficient -i/2), and a_g is quadratic in that coefficient.
PHI_NORMALIZATION = 0.25


class StudyError(ValueError):
    """Bad study parameters (too few resolutions, unsorted t, ...)."""


# ------------------------------------------------------------------ convergence

def _check_resolutions(resolutions) -> list[int]:
    res = [int(r) for r in resolutions]
    if len(res) < 3:
        raise StudyError(f"a convergence study needs at least 3 resolutions, got {len(res)}")
    if any(b <= a for a, b in zip(res, res[1:])):
        raise StudyError(f"resolutions must be strictly increasing, got {res}")
    return res


def torus_distance(z: np.ndarray, tau: complex) -> np.ndarray:
    """Distance to the nearest lattice point of ``Z + tau Z``."""
    z = np.asarray(z, dtype=complex)
    t = np.round(z.imag / tau.imag)
    z = z - t * tau
    z = z - np.round(z.real)
    shifts = np.array([a + b * tau for a in (-1, 0, 1) for b in (-1, 0, 1)])
    return np.abs(z[..., None] - shifts).min(axis=-1)


def torus_green_error(tau: complex, n: int, source: int = 0, exclusion: float = 0.25) -> float:
    """Max-norm error of ``log G(source, .)`` against the theta oracle.

    Vertices within torus distance ``exclusion`` of the source are skipped:
    the point Dirac is only resolved away from the singularity.
    """
    mesh = build_flat_torus(tau, n)
    system = green_system(compute_bases(mesh))
    lg = green_function(system, source)
    z = torus_chart(mesh)
    d = z - z[source]
    far = torus_distance(d, tau) >= exclusion
    return float(np.abs(lg - torus_log_green(d, tau))[far].max())


def _orders(ns, errs) -> list[float | None]:
    out: list[float | None] = [None]
    for (n0, e0), (n1, e1) in zip(zip(ns, errs), zip(ns[1:], errs[1:])):
        if e0 > 0 and e1 > 0:
            out.append(math.log(e0 / e1) / math.log(n1 / n0))
        else:
            out.append(None)
    return out


def convergence_study(surface: dict, resolutions, target: str = "ag") -> list[dict]:
    """Target value against resolution with an empirical order column.

    ``surface`` is ``{"type": "torus", "tau": complex}`` or
    ``{"type": "hyperelliptic", "branch": [...]}``.  Targets:

    ``green-oracle``
        torus only; error against the theta oracle, order from the errors.
    ``ag``
        the invariant, with Cauchy differences and their order.
    ``tau``
        period matrix; symmetry defect and Cauchy differences.
    """
    res = _check_resolutions(resolutions)
    kind = surface.get("type")
    if target == "green-oracle":
        if kind != "torus":
            raise StudyError("the green-oracle target needs a torus")
        errs = [torus_green_error(complex(surface["tau"]), n) for n in res]
        return [{"n": n, "error": e, "order": o} for n, e, o in zip(res, errs, _orders(res, errs))]

    builder = _builder(surface)
    rows = []
    values = []
    for n in res:
        mesh = builder(n)
        bases = compute_bases(mesh)
        row = {"n": n, "V": mesh.n_vertices}
        if target == "ag":
            val = kawazumi_ag_definition(bases, green_system(bases))
            row["ag"] = val
            values.append(np.array([val]))
        elif target == "tau":
            tau = bases.periods.tau
            row["tau"] = [[complex(x) for x in r] for r in tau]
            row["symmetry_defect"] = bases.periods.symmetry_defect
            values.append(tau.ravel())
        else:
            raise StudyError(f"unknown convergence target {target!r}")
        rows.append(row)
    diffs = [None] + [float(np.abs(b - a).max()) for a, b in zip(values, values[1:])]
    for row, d in zip(rows, diffs):
        row["cauchy_diff"] = d
    for k, row in enumerate(rows):
        row["order"] = None
        if k >= 2 and diffs[k - 1] and diffs[k]:
            # differences between consecutive levels shrink like n^-p
            row["order"] = math.log(diffs[k - 1] / diffs[k]) / math.log(res[k] / res[k - 1])
    return rows


def _builder(surface: dict) -> Callable[[int], object]:
    kind = surface.get("type")
    if kind == "torus":
        tau = complex(surface["tau"])
        return lambda n: build_flat_torus(tau, n)
    if kind == "hyperelliptic":
        branch = [complex(z) for z in surface["branch"]]
        return lambda n: build_hyperelliptic_cover(branch, n)
    raise StudyError(f"unknown surface type {kind!r}")


# ----------------------------------------------------------------- degeneration

@dataclass(frozen=True)
class DegenerationFamily:
    """Genus-2 branch configurations approaching a one-node curve."""

    name: str
    expected_slope: float
    separation: Callable[[float], float]
    inverse: Callable[[float], float]
    points: Callable[[float], list[complex]]


_W = complex(math.cos(2 * math.pi / 3), math.sin(2 * math.pi / 3))

FAMILIES = {
    # irreducible one-node limit, slope (g - 1) / (6 g) at g = 2
    "pair": DegenerationFamily(
        "pair", 1.0 / 12.0,
        separation=lambda t: 2.0 * math.sqrt(t),
        inverse=lambda s: (s / 2.0) ** 2,
        points=lambda s: [-s / 2, s / 2, 2.0, 2.0j, -2.0, -2.0j]),
    # two elliptic components meeting at one node, slope 2 g1 g2 / g = 1
    "cluster": DegenerationFamily(
        "cluster", 1.0,
        separation=lambda t: t * t,
        inverse=lambda s: math.sqrt(s),
        points=lambda s: [-s, 0.0, s, 2.0, 2.0 * _W, 2.0 * _W * _W]),
}


def _min_chord(points) -> float:
    p = stereographic(np.asarray(points, dtype=complex))
    d = np.linalg.norm(p[:, None] - p[None], axis=2) + 10 * np.eye(len(p))
    return float(d.min())


def min_admissible_t(family: str, n: int) -> float:
    """Smallest node parameter whose fixture still builds at resolution ``n``."""
    fam = FAMILIES[family]
    N = max(60, 2 * n * n)
    limit = math.sqrt(4 * math.pi / N) / 64
    lo, hi = 1e-12, 1.0
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        if _min_chord(fam.points(mid)) > limit:
            hi = mid
        else:
            lo = mid
    return fam.inverse(hi)


def degeneration_study(family: str, ts, n: int = 12, tol: float = 0.30) -> list[dict]:
    """``phi = 2 pi a_g`` along a degeneration family with successive slopes.

    ``phi`` uses the geometric normalisation of ``h`` (see
    :data:`PHI_NORMALIZATION`); ``phi_definition`` is ``2 pi`` times the
    literal invariant.  Slopes are finite differences against ``-log t``
    and, for reference, against ``-log s`` with ``s`` the branch spacing.
    """
    if family not in FAMILIES:
        raise StudyError(f"unknown degeneration family {family!r}; choose from {sorted(FAMILIES)}")
    fam = FAMILIES[family]
    ts = [float(t) for t in ts]
    if len(ts) < 2:
        raise StudyError("a degeneration study needs at least two values of t")
    if any(t <= 0 for t in ts) or any(b >= a for a, b in zip(ts, ts[1:])):
        raise StudyError(f"t values must be positive and strictly decreasing, got {ts}")
    t_min = min_admissible_t(family, n)
    if ts[-1] < t_min:
        raise StudyError(f"t = {ts[-1]:g} is below the minimum admissible t = {t_min:.4g} "
                         f"for the {family} family at n={n}")
    rows = []
    for t in ts:
        s = fam.separation(t)
        try:
            mesh = build_hyperelliptic_cover(fam.points(s), n)
        except MeshError as exc:
            raise StudyError(f"t = {t:g}: {exc} (minimum admissible t = {t_min:.4g})") from exc
        bases = compute_bases(mesh)
        a = kawazumi_ag_definition(bases, green_system(bases))
        rows.append({"family": family, "t": t, "separation": s, "n": n, "V": mesh.n_vertices,
                     "ag_definition": a, "phi_definition": 2 * math.pi * a,
                     "phi": 2 * math.pi * PHI_NORMALIZATION * a})
    for k, row in enumerate(rows):
        row.update(slope=None, slope_definition=None, slope_vs_separation=None,
                   expected_slope=fam.expected_slope, within_tolerance=None)
        if k == 0:
            continue
        prev = rows[k - 1]
        dlt = math.log(prev["t"] / row["t"])
        dls = math.log(prev["separation"] / row["separation"])
        row["slope"] = (row["phi"] - prev["phi"]) / dlt
        row["slope_definition"] = (row["phi_definition"] - prev["phi_definition"]) / dlt
        row["slope_vs_separation"] = (row["phi"] - prev["phi"]) / dls
        row["within_tolerance"] = bool(abs(row["slope"] - fam.expected_slope) <= tol * fam.expected_slope)
    return rows
