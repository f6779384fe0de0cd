"""Compile 2D overhead sketches into 3D race tracks.

A sketch is an ordered loop of 2D control points inside the stadium
footprint.  Compilation fits a closed uniform Catmull-Rom spline through
the points, drops one gate per control point (heading along the spline
tangent), and lines both lane edges with uniformly spaced cones.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .geom import wrap_angle

# Football-stadium footprint: 110 m x 70 m, centered on the origin.
STADIUM_HALF_X = 55.0
STADIUM_HALF_Y = 35.0

TRACK_FORMAT = "uavrace-track"
TRACK_VERSION = 1

# Sub-0.5 m sample spacing keeps gate centers within 1 cm of the polyline.
CENTERLINE_STEP = 0.25
_DENSE_PER_SEGMENT = 512


class TrackError(ValueError):
    """Invalid sketch or track geometry."""


class SketchError(TrackError):
    """Malformed sketch file; carries a 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class SelfIntersectionError(TrackError):
    pass


class DegenerateTangentError(TrackError):
    pass


@dataclass(frozen=True)
class TrackSketch:
    name: str
    points: tuple[tuple[float, float], ...]
    closed: bool = True

    def __post_init__(self):
        if len(self.points) < 3:
            raise SketchError("insufficient control points (need at least 3)")
        for i, (x, y) in enumerate(self.points):
            if not (math.isfinite(x) and math.isfinite(y)):
                raise SketchError(f"non-finite coordinate in point {i}")
            if abs(x) > STADIUM_HALF_X or abs(y) > STADIUM_HALF_Y:
                raise SketchError(
                    f"point {i} ({x}, {y}) outside stadium bounds "
                    f"(|x|<={STADIUM_HALF_X}, |y|<={STADIUM_HALF_Y})"
                )
        n = len(self.points)
        for i in range(n):
            ax, ay = self.points[i]
            bx, by = self.points[(i + 1) % n]
            if math.hypot(bx - ax, by - ay) < 1.0:
                raise SketchError(f"points {i} and {(i + 1) % n} closer than 1 m")


@dataclass(frozen=True)
class Gate:
    center: tuple[float, float, float]
    heading: float  # yaw of the gate normal, race direction, (-pi, pi]
    width: float
    height: float
    index: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise TrackError("gate width/height must be positive")

    @property
    def normal(self) -> tuple[float, float, float]:
        return (math.cos(self.heading), math.sin(self.heading), 0.0)

    @property
    def side(self) -> tuple[float, float, float]:
        # unit vector along the gate opening, to the left of the normal
        return (-math.sin(self.heading), math.cos(self.heading), 0.0)


@dataclass(frozen=True)
class TrackParams:
    lane_half_width: float = 2.5
    cone_spacing: float = 4.0
    gate_width: float = 2.5
    gate_height: float = 2.5
    gate_center_height: float = 1.25

    def __post_init__(self):
        if self.lane_half_width <= 0 or self.cone_spacing <= 0:
            raise TrackError("lane_half_width and cone_spacing must be positive")
        if self.gate_width <= 0 or self.gate_height <= 0:
            raise TrackError("gate dimensions must be positive")


@dataclass(frozen=True)
class TrackSpec:
    name: str
    gates: tuple[Gate, ...]
    cones: tuple[tuple[float, float, float], ...]
    centerline: np.ndarray  # (n, 2) float64, uniform arc steps
    tangents: np.ndarray  # (n, 2) float64, unit
    total_length: float
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    params: TrackParams = field(default_factory=TrackParams)
    sketch_points: tuple[tuple[float, float], ...] = ()

    @property
    def arc_step(self) -> float:
        return self.total_length / len(self.centerline)

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(
            json.dumps(_spec_to_dict(self), sort_keys=True).encode()
        ).hexdigest()


class Crossing(Enum):
    NONE = "none"
    PASSED = "passed"
    WRONG_DIRECTION = "wrong_direction"


# ---------------------------------------------------------------------------
# sketch files


def parse_sketch(text: str, default_name: str = "unnamed") -> TrackSketch:
    """Parse a sketch file: one `name:` line, then one `x y` pair per line."""
    name = default_name
    points: list[tuple[float, float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("name:"):
            name = line[len("name:"):].strip()
            if not name:
                raise SketchError("empty track name", lineno)
            continue
        parts = line.split()
        if len(parts) != 2:
            raise SketchError(f"expected 'x y', got {line!r}", lineno)
        try:
            x, y = float(parts[0]), float(parts[1])
        except ValueError:
            raise SketchError(f"non-numeric coordinate in {line!r}", lineno) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise SketchError("non-finite coordinate", lineno)
        if abs(x) > STADIUM_HALF_X or abs(y) > STADIUM_HALF_Y:
            raise SketchError(f"point ({x}, {y}) outside stadium bounds", lineno)
        points.append((x, y))
    if len(points) < 3:
        raise SketchError(f"insufficient control points ({len(points)} < 3)")
    return TrackSketch(name=name, points=tuple(points))


def load_sketch(path: str | Path) -> TrackSketch:
    p = Path(path)
    return parse_sketch(p.read_text(), default_name=p.stem)


# ---------------------------------------------------------------------------
# closed uniform Catmull-Rom evaluation


def _cr_coeffs(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-segment cubic coefficients c0..c3 so that p(s) = ((c3*s+c2)*s+c1)*s+c0."""
    p1 = pts
    p0 = np.roll(pts, 1, axis=0)
    p2 = np.roll(pts, -1, axis=0)
    p3 = np.roll(pts, -2, axis=0)
    c0 = p1
    c1 = 0.5 * (p2 - p0)
    c2 = 0.5 * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3)
    c3 = 0.5 * (-p0 + 3.0 * p1 - 3.0 * p2 + p3)
    return c0, c1, c2, c3


def _cr_eval(coeffs, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate points and derivatives at global params t in [0, n)."""
    c0, c1, c2, c3 = coeffs
    n = len(c0)
    seg = np.floor(t).astype(np.int64) % n
    s = (t - np.floor(t))[:, None]
    a0, a1, a2, a3 = c0[seg], c1[seg], c2[seg], c3[seg]
    pos = ((a3 * s + a2) * s + a1) * s + a0
    der = (3.0 * a3 * s + 2.0 * a2) * s + a1
    return pos, der


def _segments_properly_intersect(p: np.ndarray, a_idx, b_idx) -> bool:
    """Any proper crossing between segment sets a and b of polyline p."""
    a0 = p[a_idx]
    a1 = p[(a_idx + 1) % len(p)]
    b0 = p[b_idx]
    b1 = p[(b_idx + 1) % len(p)]

    def cross(o, d, q):
        return d[:, 0] * (q[:, 1] - o[:, 1]) - d[:, 1] * (q[:, 0] - o[:, 0])

    da = a1 - a0
    db = b1 - b0
    d1 = cross(a0, da, b0)
    d2 = cross(a0, da, b1)
    d3 = cross(b0, db, a0)
    d4 = cross(b0, db, a1)
    return bool(np.any((d1 * d2 < 0) & (d3 * d4 < 0)))


def _check_self_intersection(samples: np.ndarray) -> None:
    """Reject centerlines that cross themselves or fold back on a line."""
    n = len(samples)
    chords = np.roll(samples, -1, axis=0) - samples
    norms = np.linalg.norm(chords, axis=1)
    ok = norms > 1e-12
    units = np.zeros_like(chords)
    units[ok] = chords[ok] / norms[ok, None]
    # a near-180 degree turn between consecutive chords is a degenerate fold
    dots = np.sum(units * np.roll(units, -1, axis=0), axis=1)
    if np.any(dots < -0.9):
        raise SelfIntersectionError("centerline folds back on itself")

    # pairwise proper-crossing sweep, skipping adjacent segments
    idx = np.arange(n)
    chunk = 256
    for start in range(0, n, chunk):
        a_idx = idx[start : start + chunk]
        for b_start in range(start, n, chunk):
            b_idx = idx[b_start : b_start + chunk]
            ai = np.repeat(a_idx, len(b_idx))
            bi = np.tile(b_idx, len(a_idx))
            sep = (bi - ai) % n
            mask = (sep > 1) & (sep < n - 1) & (ai < bi)
            if not np.any(mask):
                continue
            if _segments_properly_intersect(samples, ai[mask], bi[mask]):
                raise SelfIntersectionError("centerline crosses itself")


def build_track(sketch: TrackSketch, params: TrackParams = TrackParams()) -> TrackSpec:
    """Compile a sketch into gates, cones, and an arc-length centerline."""
    pts = np.asarray(sketch.points, dtype=np.float64)
    n_ctrl = len(pts)
    coeffs = _cr_coeffs(pts)

    # dense parameter sweep -> arc-length table
    dense_t = np.linspace(0.0, n_ctrl, n_ctrl * _DENSE_PER_SEGMENT, endpoint=False)
    dense_pos, dense_der = _cr_eval(coeffs, dense_t)
    der_norm = np.linalg.norm(dense_der, axis=1)
    if np.min(der_norm) < 1e-6:
        # fold-back loops hit zero velocity before the crossing sweep sees them
        if _is_foldback(dense_pos):
            raise SelfIntersectionError("centerline folds back on itself")
        raise DegenerateTangentError("spline tangent vanishes")
    chords = np.diff(dense_pos, axis=0, append=dense_pos[:1])
    seg_len = np.linalg.norm(chords, axis=1)
    cum = np.concatenate(([0.0], np.cumsum(seg_len)))
    total_length = float(cum[-1])

    def param_at_arc(s: np.ndarray) -> np.ndarray:
        s = np.mod(s, total_length)
        return np.interp(s, cum, np.append(dense_t, n_ctrl))

    # uniform arc-step centerline
    n_samples = max(int(math.ceil(total_length / CENTERLINE_STEP)), 4 * n_ctrl)
    arc = np.arange(n_samples) * (total_length / n_samples)
    samples, ders = _cr_eval(coeffs, param_at_arc(arc))
    d_norm = np.linalg.norm(ders, axis=1)
    if np.min(d_norm) < 1e-9:
        raise DegenerateTangentError("spline tangent vanishes at a sample")
    tangents = ders / d_norm[:, None]

    _check_self_intersection(samples)

    # gates sit at the control points (the spline interpolates them)
    gate_t = np.arange(n_ctrl, dtype=np.float64)
    gate_pos, gate_der = _cr_eval(coeffs, gate_t)
    gates = []
    for i in range(n_ctrl):
        dx, dy = gate_der[i]
        if math.hypot(dx, dy) < 1e-9:
            raise DegenerateTangentError(f"zero tangent at gate {i}")
        gates.append(
            Gate(
                center=(float(gate_pos[i, 0]), float(gate_pos[i, 1]), params.gate_center_height),
                heading=wrap_angle(math.atan2(dy, dx)),
                width=params.gate_width,
                height=params.gate_height,
                index=i,
            )
        )

    # cone stations at uniform arc steps; closure remainder spread evenly
    n_stations = max(int(round(total_length / params.cone_spacing)), 1)
    st_arc = np.arange(n_stations) * (total_length / n_stations)
    st_pos, st_der = _cr_eval(coeffs, param_at_arc(st_arc))
    st_norm = np.linalg.norm(st_der, axis=1)
    st_tan = st_der / st_norm[:, None]
    normal = np.stack([-st_tan[:, 1], st_tan[:, 0]], axis=1)  # left of travel
    left = st_pos + params.lane_half_width * normal
    right = st_pos - params.lane_half_width * normal
    cones: list[tuple[float, float, float]] = []
    for i in range(n_stations):
        cones.append((float(left[i, 0]), float(left[i, 1]), 0.0))
        cones.append((float(right[i, 0]), float(right[i, 1]), 0.0))

    all_xy = np.vstack([samples, left, right])
    bounds = (
        float(np.min(all_xy[:, 0])),
        float(np.min(all_xy[:, 1])),
        float(np.max(all_xy[:, 0])),
        float(np.max(all_xy[:, 1])),
    )

    return TrackSpec(
        name=sketch.name,
        gates=tuple(gates),
        cones=tuple(cones),
        centerline=samples,
        tangents=tangents,
        total_length=total_length,
        bounds=bounds,
        params=params,
        sketch_points=sketch.points,
    )


def _is_foldback(dense_pos: np.ndarray) -> bool:
    chords = np.diff(dense_pos, axis=0)
    norms = np.linalg.norm(chords, axis=1)
    ok = norms > 1e-12
    units = chords[ok] / norms[ok, None]
    dots = np.sum(units[:-1] * units[1:], axis=1)
    return bool(np.any(dots < -0.5))


# ---------------------------------------------------------------------------
# gate crossing


def gate_crossing(
    gate: Gate,
    prev: tuple[float, float, float],
    cur: tuple[float, float, float],
) -> Crossing:
    """Classify the segment prev->cur against the gate rectangle.

    PASSED when the segment crosses the gate plane along the gate normal and
    the intersection falls inside the width x height opening; the mirrored
    crossing is WRONG_DIRECTION; anything else is NONE.
    """
    for p in (prev, cur):
        if not all(math.isfinite(c) for c in p):
            raise ValueError("non-finite point in gate_crossing")
    nx, ny, _ = gate.normal
    cx, cy, cz = gate.center
    d0 = (prev[0] - cx) * nx + (prev[1] - cy) * ny
    d1 = (cur[0] - cx) * nx + (cur[1] - cy) * ny
    if d0 <= 0.0 and d1 > 0.0:
        result = Crossing.PASSED
    elif d0 > 0.0 and d1 <= 0.0:
        result = Crossing.WRONG_DIRECTION
    else:
        return Crossing.NONE
    t = d0 / (d0 - d1)
    px = prev[0] + t * (cur[0] - prev[0])
    py = prev[1] + t * (cur[1] - prev[1])
    pz = prev[2] + t * (cur[2] - prev[2])
    sx, sy, _ = gate.side
    lateral = (px - cx) * sx + (py - cy) * sy
    vertical = pz - cz
    if abs(lateral) <= gate.width / 2.0 and abs(vertical) <= gate.height / 2.0:
        return result
    return Crossing.NONE


# ---------------------------------------------------------------------------
# serialization (key/value + arrays; readable by the cockpit UI and the CLI)


def _spec_to_dict(spec: TrackSpec) -> dict:
    return {
        "format": TRACK_FORMAT,
        "version": TRACK_VERSION,
        "name": spec.name,
        "params": {
            "lane_half_width": spec.params.lane_half_width,
            "cone_spacing": spec.params.cone_spacing,
            "gate_width": spec.params.gate_width,
            "gate_height": spec.params.gate_height,
            "gate_center_height": spec.params.gate_center_height,
        },
        "sketch_points": [list(p) for p in spec.sketch_points],
        "gates": [
            {
                "center": list(g.center),
                "heading": g.heading,
                "width": g.width,
                "height": g.height,
                "index": g.index,
            }
            for g in spec.gates
        ],
        "cones": [list(c) for c in spec.cones],
        "centerline": spec.centerline.tolist(),
        "tangents": spec.tangents.tolist(),
        "total_length": spec.total_length,
        "bounds": list(spec.bounds),
    }


def save_track(spec: TrackSpec, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(_spec_to_dict(spec), sort_keys=True, separators=(",", ":")) + "\n"
    )


def load_track(path: str | Path) -> TrackSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise TrackError(f"not a track file: {exc}") from None
    if doc.get("format") != TRACK_FORMAT:
        raise TrackError("not a track file (bad format tag)")
    if doc.get("version") != TRACK_VERSION:
        raise TrackError(f"unsupported track version {doc.get('version')}")
    params = TrackParams(**doc["params"])
    gates = tuple(
        Gate(
            center=tuple(g["center"]),
            heading=g["heading"],
            width=g["width"],
            height=g["height"],
            index=g["index"],
        )
        for g in doc["gates"]
    )
    return TrackSpec(
        name=doc["name"],
        gates=gates,
        cones=tuple(tuple(c) for c in doc["cones"]),
        centerline=np.asarray(doc["centerline"], dtype=np.float64),
        tangents=np.asarray(doc["tangents"], dtype=np.float64),
        total_length=doc["total_length"],
        bounds=tuple(doc["bounds"]),
        params=params,
        sketch_points=tuple(tuple(p) for p in doc["sketch_points"]),
    )


def bundled_sketch_dir() -> Path:
    """Sketches shipped with the repo (seven training, four test loops)."""
    return Path(__file__).resolve().parents[2] / "sketches"


def bundled_sketches() -> list[Path]:
    return sorted(bundled_sketch_dir().glob("*.txt"))
