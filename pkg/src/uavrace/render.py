"""Software rasterizer for the UAV's first-person view.

Flat-shaded and deterministic: a vertical sky gradient, a ground plane
sampled from a per-track lane texture, orange cone billboards, and red gate
frames, drawn back-to-front.  Geometry is exact pinhole projection, so the
same scene at two resolutions differs only by the pixel scale factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import UavState
from .geom import Quat, Vec3, quat_from_yaw, quat_mul, quat_rotate, quat_to_matrix
from .track import TrackSpec

CULL_DISTANCE = 120.0
NEAR_PLANE = 0.05

SKY_HORIZON = np.array([168, 205, 235], dtype=np.float32)
SKY_ZENITH = np.array([58, 102, 189], dtype=np.float32)
FIELD_COLOR = (74, 128, 58)
LANE_COLOR = (92, 88, 84)
LANE_EDGE_COLOR = (214, 212, 206)
CONE_COLOR = (236, 116, 16)
GATE_COLOR = (212, 32, 28)

GATE_BAR = 0.18  # frame bar thickness, m
CONE_HEIGHT = 0.45
CONE_HALF_BASE = 0.18


class RenderError(ValueError):
    pass


@dataclass(frozen=True)
class CameraModel:
    fov_h: float = math.radians(90.0)
    width: int = 64
    height: int = 36
    pitch_tilt: float = math.radians(20.0)  # FPV up-tilt
    mount_offset: Vec3 = (0.1, 0.0, 0.0)

    def __post_init__(self):
        if not (0.0 < self.fov_h < math.pi):
            raise RenderError("horizontal FoV must be in (0, pi)")
        if self.width <= 0 or self.height <= 0:
            raise RenderError("resolution must be positive")

    @property
    def focal_px(self) -> float:
        return (self.width / 2.0) / math.tan(self.fov_h / 2.0)


@dataclass(frozen=True)
class ViewOffset:
    lateral: float = 0.0  # m, + = body right
    yaw: float = 0.0  # rad, + = clockwise seen from above

    def __post_init__(self):
        if abs(self.lateral) > 2.0:
            raise RenderError("lateral offset beyond 2 m sanity bound")
        if abs(self.yaw) > math.pi / 2.0:
            raise RenderError("yaw offset beyond pi/2 sanity bound")


ZERO_OFFSET = ViewOffset(0.0, 0.0)


class Image:
    """Packed 8-bit RGB raster, row-major from the top-left corner."""

    def __init__(self, pixels: np.ndarray):
        if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
            raise RenderError("pixels must be (h, w, 3) uint8")
        self.pixels = pixels

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def tobytes(self) -> bytes:
        return self.pixels.tobytes()

    def to_float(self) -> np.ndarray:
        return self.pixels.astype(np.float32) / 255.0

    def save_ppm(self, path: str | Path) -> None:
        with open(path, "wb") as fh:
            fh.write(b"P6\n%d %d\n255\n" % (self.width, self.height))
            fh.write(self.pixels.tobytes())

    @classmethod
    def load_ppm(cls, path: str | Path) -> "Image":
        data = Path(path).read_bytes()
        if not data.startswith(b"P6"):
            raise RenderError(f"{path}: not a binary PPM")
        fields: list[bytes] = []
        pos = 2
        while len(fields) < 3:
            while pos < len(data) and data[pos : pos + 1].isspace():
                pos += 1
            if data[pos : pos + 1] == b"#":
                while pos < len(data) and data[pos] != 0x0A:
                    pos += 1
                continue
            start = pos
            while pos < len(data) and not data[pos : pos + 1].isspace():
                pos += 1
            fields.append(data[start:pos])
        pos += 1  # single whitespace after maxval
        w, h, maxval = (int(f) for f in fields)
        if maxval != 255:
            raise RenderError(f"{path}: unsupported maxval {maxval}")
        raw = np.frombuffer(data, dtype=np.uint8, count=w * h * 3, offset=pos)
        if raw.size != w * h * 3:
            raise RenderError(f"{path}: truncated pixel data")
        return cls(raw.reshape(h, w, 3).copy())


# ---------------------------------------------------------------------------
# poses and projection


def camera_pose(state: UavState, cam: CameraModel, offset: ViewOffset = ZERO_OFFSET):
    """World pose of the (possibly offset) camera: (position, orientation).

    Body pose, then the rigid mount, then the augmentation offsets: a lateral
    slide along body-right and a yaw about body-up, then the FPV pitch tilt.
    The zero offset reproduces the pilot view exactly.
    """
    q = state.orientation
    pos = state.position
    shift = (
        cam.mount_offset[0],
        cam.mount_offset[1] - offset.lateral,  # body right = -y
        cam.mount_offset[2],
    )
    dx, dy, dz = quat_rotate(q, shift)
    cam_pos = (pos[0] + dx, pos[1] + dy, pos[2] + dz)
    q_cam = quat_mul(q, quat_from_yaw(-offset.yaw))
    if cam.pitch_tilt != 0.0:
        h = 0.5 * (-cam.pitch_tilt)  # tilt up = negative pitch about body y
        q_cam = quat_mul(q_cam, (math.cos(h), 0.0, math.sin(h), 0.0))
    return cam_pos, q_cam


def project(point: Vec3, pose: tuple[Vec3, Quat], cam: CameraModel):
    """Pinhole projection to pixel coordinates; None when behind the camera."""
    pos, q = pose
    r = quat_to_matrix(q)
    vx = point[0] - pos[0]
    vy = point[1] - pos[1]
    vz = point[2] - pos[2]
    # world -> camera: R transpose
    cx = r[0][0] * vx + r[1][0] * vy + r[2][0] * vz
    cy = r[0][1] * vx + r[1][1] * vy + r[2][1] * vz
    cz = r[0][2] * vx + r[1][2] * vy + r[2][2] * vz
    if cx <= 0.0:
        return None
    f = cam.focal_px
    u = cam.width / 2.0 + f * (-cy) / cx
    v = cam.height / 2.0 - f * cz / cx
    return (u, v)


# ---------------------------------------------------------------------------
# ground texture


def bake_ground_texture(track: TrackSpec, resolution: float = 0.25):
    """Overhead RGB texture of the field with the lane strip shaded in.

    Returns (texture (H, W, 3) uint8, x0, y0, resolution); world (x, y) maps
    to texel (floor((x - x0) / res), floor((y - y0) / res)).
    """
    margin = track.params.lane_half_width + 2.0
    x0 = track.bounds[0] - margin
    y0 = track.bounds[1] - margin
    x1 = track.bounds[2] + margin
    y1 = track.bounds[3] + margin
    w = int(math.ceil((x1 - x0) / resolution))
    h = int(math.ceil((y1 - y0) / resolution))
    tex = np.empty((h, w, 3), dtype=np.uint8)
    tex[:] = FIELD_COLOR

    half = track.params.lane_half_width
    edge = 0.35  # bright boundary band width, m
    pts = track.centerline
    nxt = np.roll(pts, -1, axis=0)
    for i in range(len(pts)):
        ax, ay = pts[i]
        bx, by = nxt[i]
        lo_x = int((min(ax, bx) - half - edge - x0) / resolution)
        hi_x = int((max(ax, bx) + half + edge - x0) / resolution) + 1
        lo_y = int((min(ay, by) - half - edge - y0) / resolution)
        hi_y = int((max(ay, by) + half + edge - y0) / resolution) + 1
        lo_x, hi_x = max(lo_x, 0), min(hi_x, w)
        lo_y, hi_y = max(lo_y, 0), min(hi_y, h)
        if lo_x >= hi_x or lo_y >= hi_y:
            continue
        gx = x0 + (np.arange(lo_x, hi_x) + 0.5) * resolution
        gy = y0 + (np.arange(lo_y, hi_y) + 0.5) * resolution
        mx, my = np.meshgrid(gx, gy)
        dx, dy = bx - ax, by - ay
        seg2 = dx * dx + dy * dy
        if seg2 < 1e-12:
            continue
        t = np.clip(((mx - ax) * dx + (my - ay) * dy) / seg2, 0.0, 1.0)
        qx = ax + t * dx
        qy = ay + t * dy
        dist = np.hypot(mx - qx, my - qy)
        patch = tex[lo_y:hi_y, lo_x:hi_x]
        patch[dist <= half + edge] = LANE_EDGE_COLOR
        patch[dist <= half] = LANE_COLOR
    return tex, x0, y0, resolution


# ---------------------------------------------------------------------------
# renderer


class Renderer:
    """Per-track renderer; construction precomputes rays, texture, geometry."""

    def __init__(self, track: TrackSpec, cam: CameraModel):
        self.track = track
        self.cam = cam
        f = cam.focal_px
        us = (np.arange(cam.width) + 0.5) - cam.width / 2.0
        vs = cam.height / 2.0 - (np.arange(cam.height) + 0.5)
        uu, vv = np.meshgrid(us, vs)
        # camera frame: x forward, y left (=-u), z up (=+v)
        rays = np.stack(
            [np.ones_like(uu), -uu / f, vv / f], axis=-1
        ).reshape(-1, 3)
        self._rays = rays / np.linalg.norm(rays, axis=1, keepdims=True)
        self._tex, self._tx0, self._ty0, self._tres = bake_ground_texture(track)

        self._cone_pos = np.asarray(track.cones, dtype=np.float64)
        self._gate_quads = []  # list of (gate_center_xy, [quad (4,3)] * 4)
        for g in track.gates:
            nx, ny, _ = g.normal
            sx, sy, _ = g.side
            cx, cy, cz = g.center
            hw = g.width / 2.0
            hh = g.height / 2.0
            z_lo = cz - hh
            z_hi = cz + hh

            def bar(s_min, s_max, z_min, z_max):
                corners = []
                for s, z in ((s_min, z_min), (s_max, z_min), (s_max, z_max), (s_min, z_max)):
                    corners.append((cx + s * sx, cy + s * sy, z))
                return np.asarray(corners)

            quads = [
                bar(-hw - GATE_BAR, -hw, z_lo, z_hi + GATE_BAR),  # left post
                bar(hw, hw + GATE_BAR, z_lo, z_hi + GATE_BAR),  # right post
                bar(-hw - GATE_BAR, hw + GATE_BAR, z_hi, z_hi + GATE_BAR),  # top
                bar(-hw, hw, z_lo, z_lo + GATE_BAR * 0.7),  # bottom sill
            ]
            self._gate_quads.append(((cx, cy), quads))

    def render(self, pose: tuple[Vec3, Quat]) -> Image:
        cam = self.cam
        pos, q = pose
        r = np.asarray(quat_to_matrix(q))
        dirs = self._rays @ r.T  # world-frame ray directions
        h, w = cam.height, cam.width
        out = np.empty((h * w, 3), dtype=np.uint8)

        dz = dirs[:, 2]
        ground = dz < -1e-9
        sky = ~ground

        # sky gradient by ray elevation
        elev = np.clip(dz[sky], 0.0, None)
        tcol = np.sqrt(np.clip(elev / 0.8, 0.0, 1.0))[:, None]
        out[sky] = (SKY_HORIZON * (1.0 - tcol) + SKY_ZENITH * tcol).astype(np.uint8)

        # ground plane via texture lookup
        t = np.maximum(-pos[2] / dz[ground], 0.0)
        gx = pos[0] + t * dirs[ground, 0]
        gy = pos[1] + t * dirs[ground, 1]
        ix = np.floor((gx - self._tx0) / self._tres).astype(np.int64)
        iy = np.floor((gy - self._ty0) / self._tres).astype(np.int64)
        th, tw = self._tex.shape[:2]
        inside = (ix >= 0) & (ix < tw) & (iy >= 0) & (iy < th)
        gcol = np.empty((int(ground.sum()), 3), dtype=np.uint8)
        gcol[:] = FIELD_COLOR
        gcol[inside] = self._tex[iy[inside], ix[inside]]
        out[ground] = gcol

        frame = out.reshape(h, w, 3)
        self._draw_primitives(frame, pos, r)
        return Image(frame)

    # -- primitives --------------------------------------------------------

    def _draw_primitives(self, frame: np.ndarray, pos, r: np.ndarray):
        drawables = []  # (distance, kind, payload)
        px, py, pz = pos
        cp = self._cone_pos
        if len(cp):
            d2 = (cp[:, 0] - px) ** 2 + (cp[:, 1] - py) ** 2
            for i in np.nonzero(d2 <= CULL_DISTANCE * CULL_DISTANCE)[0]:
                drawables.append((float(d2[i]), "cone", cp[i]))
        for (gx, gy), quads in self._gate_quads:
            d2g = (gx - px) ** 2 + (gy - py) ** 2
            if d2g <= CULL_DISTANCE * CULL_DISTANCE:
                drawables.append((float(d2g), "gate", quads))
        drawables.sort(key=lambda d: -d[0])

        for _, kind, payload in drawables:
            if kind == "cone":
                self._draw_cone(frame, payload, pos, r)
            else:
                for quad in payload:
                    self._draw_polygon(frame, quad, pos, r, GATE_COLOR)

    def _to_camera(self, pts: np.ndarray, pos, r: np.ndarray) -> np.ndarray:
        return (pts - np.asarray(pos)) @ r  # row-vectors times R == R^T @ v

    def _draw_cone(self, frame, cone_xyz, pos, r):
        cx, cy, cz = cone_xyz
        dx, dy = cx - pos[0], cy - pos[1]
        dist = math.hypot(dx, dy)
        if dist < 1e-6:
            return
        # billboard: base edge perpendicular to the viewing direction
        ux, uy = -dy / dist, dx / dist
        verts = np.array(
            [
                (cx - ux * CONE_HALF_BASE, cy - uy * CONE_HALF_BASE, cz),
                (cx + ux * CONE_HALF_BASE, cy + uy * CONE_HALF_BASE, cz),
                (cx, cy, cz + CONE_HEIGHT),
            ]
        )
        pc = self._to_camera(verts, pos, r)
        if np.min(pc[:, 0]) < NEAR_PLANE:
            return
        self._fill_convex(frame, pc, CONE_COLOR)

    def _draw_polygon(self, frame, quad: np.ndarray, pos, r, color):
        pc = self._to_camera(quad, pos, r)
        if np.max(pc[:, 0]) < NEAR_PLANE:
            return
        if np.min(pc[:, 0]) < NEAR_PLANE:
            pc = _clip_near(pc, NEAR_PLANE)
            if len(pc) < 3:
                return
        self._fill_convex(frame, pc, color)

    def _fill_convex(self, frame, pc: np.ndarray, color):
        cam = self.cam
        f = cam.focal_px
        u = cam.width / 2.0 + f * (-pc[:, 1]) / pc[:, 0]
        v = cam.height / 2.0 - f * pc[:, 2] / pc[:, 0]
        lo_u = max(int(math.floor(np.min(u))), 0)
        hi_u = min(int(math.ceil(np.max(u))) + 1, cam.width)
        lo_v = max(int(math.floor(np.min(v))), 0)
        hi_v = min(int(math.ceil(np.max(v))) + 1, cam.height)
        if lo_u >= hi_u or lo_v >= hi_v:
            return
        gu = np.arange(lo_u, hi_u) + 0.5
        gv = (np.arange(lo_v, hi_v) + 0.5)[:, None]
        n = len(u)
        area = 0.0
        for i in range(n):
            j = (i + 1) % n
            area += u[i] * v[j] - u[j] * v[i]
        if abs(area) < 1e-12:
            return
        sign = 1.0 if area > 0 else -1.0
        mask = np.ones((hi_v - lo_v, hi_u - lo_u), dtype=bool)
        for i in range(n):
            j = (i + 1) % n
            du, dv = u[j] - u[i], v[j] - v[i]
            mask &= sign * (du * (gv - v[i]) - dv * (gu - u[i])) >= 0.0
        frame[lo_v:hi_v, lo_u:hi_u][mask] = color


def _clip_near(pc: np.ndarray, near: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a polygon against the x = near plane."""
    out = []
    n = len(pc)
    for i in range(n):
        a = pc[i]
        b = pc[(i + 1) % n]
        a_in = a[0] >= near
        b_in = b[0] >= near
        if a_in:
            out.append(a)
        if a_in != b_in:
            t = (near - a[0]) / (b[0] - a[0])
            out.append(a + t * (b - a))
    return np.asarray(out) if out else np.empty((0, 3))


_RENDERER_CACHE: dict[tuple, Renderer] = {}


def get_renderer(track: TrackSpec, cam: CameraModel) -> Renderer:
    key = (track.content_hash, cam)
    rend = _RENDERER_CACHE.get(key)
    if rend is None:
        if len(_RENDERER_CACHE) > 8:
            _RENDERER_CACHE.clear()
        rend = Renderer(track, cam)
        _RENDERER_CACHE[key] = rend
    return rend


def render_view(track: TrackSpec, pose: tuple[Vec3, Quat], cam: CameraModel) -> Image:
    """Render one first-person view; cached per (track, camera)."""
    return get_renderer(track, cam).render(pose)
