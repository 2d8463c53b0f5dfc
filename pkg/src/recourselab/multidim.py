"""Single-feature recourse characterization in higher dimensions.

Under the Sparse(1) constraint, recourse directions decompose per axis into
left/right sets L^i and R^i plus the stay-put set O.  A continuous
recourse-sensitive attribution exists iff these admit a covering by pairwise
separated subsets; the construction then emits one distance-quotient
component per axis, so outputs are nonzero in at most one coordinate.

Two region representations: Exact (named analytic regions, registered for
the circle-squared classifier under the class-flip utility) and Raster
(boolean masks on a shared grid; verdicts are labeled with the resolution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from .core import RecourseProblem
from .errors import ConfigError, NeedsManualDecomposition, UnsupportedModel

_STRUCT8 = np.ones((3, 3), dtype=bool)


def _axis_names(d: int) -> list:
    out = []
    for i in range(1, d + 1):
        out += [f"L{i}", f"R{i}"]
    return out


@dataclass
class AxisRegions:
    """Per-axis recourse regions, either analytic or rasterized."""

    d: int
    delta: float
    kind: str  # "exact_circle_sq" | "raster"
    membership: Optional[dict] = None     # name -> vectorized (n, d) -> bool
    masks: Optional[dict] = None          # name -> boolean grid (raster)
    lo: Optional[np.ndarray] = None
    step: Optional[float] = None

    def names(self) -> list:
        return _axis_names(self.d)

    def member(self, name: str, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "raster":
            cells = np.floor((points - self.lo[None, :]) / self.step).astype(int)
            ok = np.all(cells >= 0, axis=1) & np.all(
                cells < np.asarray(self.masks[name].shape)[None, :], axis=1)
            out = np.zeros(points.shape[0], dtype=bool)
            if ok.any():
                out[ok] = self.masks[name][tuple(cells[ok].T)]
            return out
        return self.membership[name](points)

    def cell_center(self, idx) -> np.ndarray:
        return self.lo + (np.asarray(idx, dtype=float) + 0.5) * self.step


@dataclass
class AxisWitness:
    point: np.ndarray
    set_a: str
    set_b: str
    forced_point_a: np.ndarray
    forced_point_b: np.ndarray


@dataclass
class AxisCertificate:
    verdict: str  # "possible" | "impossible"
    mode: str     # "exact" | "raster"
    d: int
    resolution: Optional[float] = None
    witness: Optional[AxisWitness] = None
    assignment: Optional[dict] = None  # name -> boolean grid (raster possible)
    o_tilde: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {
            "verdict": self.verdict,
            "mode": self.mode,
            "dim": self.d,
            "resolution": self.resolution,
            "axes": _axis_names(self.d),
            "witness": None,
        }
        if self.witness is not None:
            w = self.witness
            out["witness"] = {
                "point": [float(v) for v in w.point],
                "sets": [w.set_a, w.set_b],
                "forced_point_a": [float(v) for v in w.forced_point_a],
                "forced_point_b": [float(v) for v in w.forced_point_b],
            }
        if self.assignment is not None:
            out["assigned_cells"] = {k: int(v.sum()) for k, v in self.assignment.items()}
        out.update(self.meta)
        return out


# ---------------------------------------------------------------------------
# Region computation
# ---------------------------------------------------------------------------

def _circle_sq_memberships(delta: float) -> dict:
    """Strip-plus-lens regions of the circle-squared classifier.

    L1 = outer strip of width delta right of the unit circle, plus the inside
    crescent not covered by the disc translated right by delta; the other
    sets follow by mirroring and coordinate swap.
    """

    def l1(P: np.ndarray) -> np.ndarray:
        x1, x2 = P[:, 0], P[:, 1]
        r2 = x1 * x1 + x2 * x2
        inside = r2 < 1.0
        c = np.sqrt(np.clip(1.0 - x2 * x2, 0.0, None))
        strip = (np.abs(x2) < 1.0) & (x1 - c > 0.0) & (x1 - c < delta)
        crescent = inside & ((x1 - delta) ** 2 + x2 * x2 >= 1.0)
        return strip | crescent

    def flip1(P):
        return P * np.array([-1.0, 1.0])

    def swap(P):
        return P[:, ::-1]

    return {
        "L1": l1,
        "R1": lambda P: l1(flip1(P)),
        "L2": lambda P: l1(swap(P)),
        "R2": lambda P: l1(flip1(swap(P))),
        "O": lambda P: np.zeros(P.shape[0], dtype=bool),
    }


def compute_axis_regions(problem: RecourseProblem, mode: str = "exact",
                         bounds: Optional[tuple] = None,
                         cells: int = 400) -> AxisRegions:
    """Per-axis L^i / R^i and O under the Sparse(1) constraint.

    Raster mode scans every grid cell center x and marks membership when some
    step alpha in (0, delta] along the axis reaches utility >= tau.
    """
    if problem.constraint.kind != "sparse" or problem.constraint.k != 1:
        raise ConfigError("axis regions are defined for the Sparse(1) constraint")
    model, delta = problem.model, problem.delta
    d = model.dim

    if mode == "exact":
        if model.meta.get("family") != "circle_sq" or problem.utility.name != "flip":
            raise UnsupportedModel(
                "exact axis regions are registered for circle_sq with the flip utility")
        return AxisRegions(d=2, delta=delta, kind="exact_circle_sq",
                           membership=_circle_sq_memberships(delta))

    if mode != "raster":
        raise ConfigError(f"unknown mode {mode!r}")
    if bounds is None:
        bounds = (-1.0 - delta - 0.5, 1.0 + delta + 0.5)
    lo, hi = float(bounds[0]), float(bounds[1])
    step = (hi - lo) / cells
    axes_1d = [lo + (np.arange(cells) + 0.5) * step for _ in range(d)]
    grids = np.meshgrid(*axes_1d, indexing="ij")
    P = np.stack([g.reshape(-1) for g in grids], axis=1)

    ok = model.domain.contains_batch(P)
    fx = np.full(P.shape[0], np.nan)
    fx[ok] = model.values(P[ok])

    n_alpha = max(64, int(math.ceil(delta / step)))
    alphas = delta * (np.arange(1, n_alpha + 1) / n_alpha)

    masks = {}
    shape = (cells,) * d
    for i in range(d):
        for sign, name in ((-1.0, f"L{i + 1}"), (1.0, f"R{i + 1}")):
            hit = np.zeros(P.shape[0], dtype=bool)
            for a in alphas:
                Y = P.copy()
                Y[:, i] += sign * a
                oky = model.domain.contains_batch(Y)
                fy = np.full(P.shape[0], np.nan)
                fy[oky] = model.values(Y[oky])
                with np.errstate(invalid="ignore", divide="ignore"):
                    vals = problem.utility.value_batch(fx, fy)
                hit |= ok & oky & np.isfinite(vals) & (vals >= problem.tau)
            masks[name] = hit.reshape(shape)
    with np.errstate(invalid="ignore", divide="ignore"):
        self_vals = problem.utility.value_batch(fx, fx)
    masks["O"] = (ok & np.isfinite(self_vals) & (self_vals >= problem.tau)).reshape(shape)

    return AxisRegions(d=d, delta=delta, kind="raster", masks=masks,
                       lo=np.full(d, lo), step=step)


# ---------------------------------------------------------------------------
# Decision
# ---------------------------------------------------------------------------

def decide_axes(regions: AxisRegions) -> AxisCertificate:
    """Check pairwise separatedness of the forced per-axis components."""
    if regions.kind == "exact_circle_sq":
        return _decide_exact_circle_sq(regions)
    return _decide_raster(regions)


def _decide_exact_circle_sq(regions: AxisRegions) -> AxisCertificate:
    delta = regions.delta

    def assert_member(name, pt):
        if not regions.member(name, np.array([pt]))[0]:
            raise AssertionError(f"expected {pt} in {name}")

    def assert_only_in(name, pt):
        for other in regions.names() + ["O"]:
            got = bool(regions.member(other, np.array([pt]))[0])
            if got != (other == name):
                raise AssertionError(f"{pt}: membership of {other} = {got}")

    if delta > 0.5:
        # outer strips overlap on the positive diagonal: 1 < ||w||^2 < min(2, 2 delta)
        s2 = 0.5 * (1.0 + min(2.0, 2.0 * delta))
        w = np.full(2, math.sqrt(s2 / 2.0))
        forced_a = np.array([1.0 + min(delta, 1.0) / 2.0, 0.0])
        forced_b = forced_a[::-1].copy()
    else:
        # inside crescents overlap on the negative diagonal
        r0 = -delta / math.sqrt(2.0) + math.sqrt(1.0 - delta * delta / 2.0)
        r = 0.5 * (r0 + 1.0)
        w = np.full(2, -r / math.sqrt(2.0))
        rf = 0.5 * ((1.0 - delta) + math.sqrt(1.0 - delta * delta))
        forced_a = np.array([-rf, 0.0])
        forced_b = np.array([0.0, -rf])

    assert_member("L1", w)
    assert_member("L2", w)
    assert_only_in("L1", forced_a)
    assert_only_in("L2", forced_b)
    witness = AxisWitness(point=w, set_a="L1", set_b="L2",
                          forced_point_a=forced_a, forced_point_b=forced_b)
    return AxisCertificate(verdict="impossible", mode="exact", d=2, witness=witness)


def _components(mask: np.ndarray):
    struct = np.ones((3,) * mask.ndim, dtype=bool)
    labels, n = ndimage.label(mask, structure=struct)
    return labels, n


def _dilate(mask: np.ndarray, r: int = 1) -> np.ndarray:
    if r <= 0:
        return mask.copy()
    struct = np.ones((3,) * mask.ndim, dtype=bool)
    return ndimage.binary_dilation(mask, structure=struct, iterations=r)


def _decide_raster(regions: AxisRegions) -> AxisCertificate:
    names = regions.names()
    masks = regions.masks
    O = masks["O"]

    forced = {}
    for name in names:
        others = np.zeros_like(masks[name])
        for other in names:
            if other != name:
                others |= masks[other]
        exclusive = masks[name] & ~others & ~O
        labels, n = _components(masks[name])
        keep = np.zeros_like(masks[name])
        if n and exclusive.any():
            forced_ids = np.unique(labels[exclusive])
            keep = np.isin(labels, forced_ids[forced_ids > 0])
        forced[name] = keep

    for ai in range(len(names)):
        for bi in range(ai + 1, len(names)):
            a, b = names[ai], names[bi]
            conflict = _dilate(forced[a], 1) & forced[b]
            if conflict.any():
                idx = _pick_witness_cell(conflict, regions)
                wa = _sample_exclusive_cell(regions, forced, masks, O, a)
                wb = _sample_exclusive_cell(regions, forced, masks, O, b)
                witness = AxisWitness(point=regions.cell_center(idx),
                                      set_a=a, set_b=b,
                                      forced_point_a=wa, forced_point_b=wb)
                return AxisCertificate(verdict="impossible", mode="raster",
                                       d=regions.d, resolution=regions.step,
                                       witness=witness)

    assignment = {k: v.copy() for k, v in forced.items()}
    assigned_any = np.zeros_like(O)
    for v in assignment.values():
        assigned_any |= v
    o_tilde = O & ~_dilate(assigned_any, 1)

    target = O.copy()
    for name in names:
        target |= masks[name]
    for _ in range(2):
        covered = o_tilde.copy() | assigned_any
        uncovered = target & ~covered
        if not uncovered.any():
            break
        for name in names:
            labels, n = _components(masks[name])
            for comp_id in range(1, n + 1):
                comp = labels == comp_id
                if not (comp & uncovered).any() or (comp & assignment[name]).all():
                    continue
                cand = assignment[name] | comp
                good = True
                for other in names:
                    if other != name and (_dilate(cand, 1) & assignment[other]).any():
                        good = False
                        break
                if good and (_dilate(cand, 1) & o_tilde).any():
                    good = False
                if good:
                    assignment[name] = cand
                    assigned_any |= comp
                    uncovered = target & ~(o_tilde | assigned_any)
    uncovered = target & ~(o_tilde | assigned_any)
    if uncovered.any():
        raise NeedsManualDecomposition(
            f"{int(uncovered.sum())} raster cells cannot be covered by separated assignments")
    return AxisCertificate(verdict="possible", mode="raster", d=regions.d,
                           resolution=regions.step, assignment=assignment,
                           o_tilde=o_tilde,
                           meta={"note": f"separatedness certified at resolution {regions.step}"})


def _pick_witness_cell(conflict: np.ndarray, regions: AxisRegions):
    """Deterministic witness cell: most coordinate-symmetric, then row-major."""
    cells = np.argwhere(conflict)
    centers = regions.lo[None, :] + (cells + 0.5) * regions.step
    if regions.d == 2:
        spread = np.abs(centers[:, 0] - centers[:, 1])
        order = np.lexsort((np.arange(cells.shape[0]), np.round(spread / regions.step)))
        return cells[order[0]]
    return cells[0]


def _sample_exclusive_cell(regions: AxisRegions, forced, masks, O, name) -> np.ndarray:
    others = np.zeros_like(O)
    for other in regions.names():
        if other != name:
            others |= masks[other]
    exclusive = forced[name] & ~others & ~O
    cells = np.argwhere(exclusive)
    return regions.cell_center(cells[0])


# ---------------------------------------------------------------------------
# Construction
# ---------------------------------------------------------------------------

class AxisAttribution:
    """Per-axis distance-quotient evaluator from a raster Possible certificate."""

    def __init__(self, regions: AxisRegions, u_masks: dict, v_masks: dict):
        self.regions = regions
        self._fields = {}
        step = regions.step
        for store, masks in (("U", u_masks), ("V", v_masks)):
            for i, m in masks.items():
                dt = ndimage.distance_transform_edt(m) * step
                self._fields[(store, i)] = dt

    def _interp(self, key, pts: np.ndarray) -> np.ndarray:
        field = self._fields[key]
        coords = (pts - self.regions.lo[None, :]) / self.regions.step - 0.5
        return ndimage.map_coordinates(field, coords.T, order=1, mode="constant", cval=0.0)

    def __call__(self, x) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((pts.shape[0], self.regions.d))
        for i in range(self.regions.d):
            dv = self._interp(("V", i), pts)
            du = self._interp(("U", i), pts)
            out[:, i] = dv / (1.0 + dv) - du / (1.0 + du)
        return out[0] if np.asarray(x).ndim == 1 else out


def construct_axes_attribution(cert: AxisCertificate, regions: AxisRegions) -> AxisAttribution:
    """Dilate each assigned set (keeping pairwise clearance) and build phi.

    Component i of the output is positive on the neighborhood of the
    move-right set of axis i, negative on the move-left one, and zero
    elsewhere; supports are pairwise disjoint so at most one component is
    nonzero anywhere.
    """
    if cert.verdict != "possible" or cert.mode != "raster":
        raise ConfigError("construction requires a raster Possible certificate")
    names = regions.names()
    nonempty = [n for n in names if cert.assignment[n].any()]

    gaps = []
    pieces = [cert.assignment[n] for n in nonempty]
    if cert.o_tilde is not None and cert.o_tilde.any():
        pieces = pieces + [cert.o_tilde]
    for a in range(len(pieces)):
        cdt = ndimage.distance_transform_cdt(~pieces[a], metric="chessboard")
        for b in range(len(pieces)):
            if a != b and pieces[b].any():
                gaps.append(int(cdt[pieces[b]].min()))
    if gaps:
        g = min(gaps)
        r = max(0, min(g // 3, (g - 2) // 2))
    else:
        r = 3

    u_masks, v_masks = {}, {}
    for i in range(regions.d):
        u_masks[i] = _dilate(cert.assignment[f"L{i + 1}"], r)
        v_masks[i] = _dilate(cert.assignment[f"R{i + 1}"], r)
    expanded = list(u_masks.values()) + list(v_masks.values())
    for a in range(len(expanded)):
        for b in range(a + 1, len(expanded)):
            if (_dilate(expanded[a], 1) & expanded[b]).any():
                raise ConfigError("dilated neighborhoods lost their clearance")
    return AxisAttribution(regions, u_masks, v_masks)


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def write_pgm(mask: np.ndarray, path) -> None:
    """Binary PGM (P5) export of a boolean mask for visual inspection."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ConfigError("PGM export needs a 2D mask")
    data = np.where(mask, 255, 0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{mask.shape[1]} {mask.shape[0]}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
