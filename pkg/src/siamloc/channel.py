"""Single-bounce geometric MIMO-OFDM channel simulator and UE placement.

The base station carries a uniform linear array along the x axis, so the
array responds to the direction cosine ``u_x`` of an arriving path (broadside
is the +y direction). Every UE in a scene sees the same scatterer map, which
makes the CSI a deterministic, continuous function of UE position.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import InvalidConfigError, SingularityError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class SceneConfig:
    bs_position: tuple = (0.0, 0.0, 30.0)
    ue_height: float = 2.5
    num_antennas: int = 32
    num_subcarriers: int = 8
    carrier_freq: float = 2.68e9
    bandwidth: float = 20e6
    antenna_spacing: float = 0.5  # in wavelengths
    tx_power_dbm: float = 20.0
    num_scatterers: int = 50
    los: bool = True
    # (x_min, y_min, x_max, y_max), placed in front of the array
    area: tuple = (-100.0, 0.0, 100.0, 200.0)
    snr_db: float | None = None
    scatterer_margin: float = 1.0  # box expansion, as a fraction of the area side
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bs_position", tuple(float(v) for v in self.bs_position))
        object.__setattr__(self, "area", tuple(float(v) for v in self.area))
        if len(self.bs_position) != 3:
            raise InvalidConfigError("bs_position must be a 3-vector")
        if len(self.area) != 4:
            raise InvalidConfigError("area must be (x_min, y_min, x_max, y_max)")
        if self.num_antennas < 1 or self.num_subcarriers < 1:
            raise InvalidConfigError("need at least one antenna and one subcarrier")
        x0, y0, x1, y1 = self.area
        if not (x1 > x0 and y1 > y0):
            raise InvalidConfigError(f"degenerate area {self.area}")
        if not (self.carrier_freq > self.bandwidth > 0):
            raise InvalidConfigError("require carrier_freq > bandwidth > 0")
        if self.num_scatterers < 0:
            raise InvalidConfigError("num_scatterers must be nonnegative")
        if self.scatterer_margin < 0:
            raise InvalidConfigError("scatterer_margin must be nonnegative")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def subcarrier_freqs(self) -> np.ndarray:
        k = np.arange(self.num_subcarriers)
        return self.carrier_freq - self.bandwidth / 2 + k * self.bandwidth / self.num_subcarriers

    @property
    def area_center(self) -> np.ndarray:
        x0, y0, x1, y1 = self.area
        return np.array([(x0 + x1) / 2, (y0 + y1) / 2])

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        return cls(**d)


@dataclass(frozen=True)
class ScattererMap:
    positions: np.ndarray  # (P, 3)
    gains: np.ndarray  # (P,) complex

    def __len__(self):
        return len(self.gains)


@dataclass
class CsiMatrix:
    entries: np.ndarray  # (B, S) complex
    ue_position: np.ndarray | None = None


@dataclass
class Trace:
    times: np.ndarray  # (T,)
    positions: np.ndarray  # (T, 2)
    trace_id: int = 0
    max_speed: float = np.inf

    def __len__(self):
        return len(self.times)

    def is_kinematic(self) -> bool:
        """Timestamps strictly increase and no step exceeds max_speed * dt."""
        if len(self.times) < 2:
            return True
        dt = np.diff(self.times)
        if np.any(dt <= 0):
            return False
        steps = np.linalg.norm(np.diff(self.positions, axis=0), axis=1)
        return bool(np.all(steps <= self.max_speed * dt + 1e-9))


def make_scene(cfg: SceneConfig):
    """Draw the scatterer map for a scene.

    Scatterers are uniform in the area's bounding box expanded by
    ``scatterer_margin`` on every side, at heights in [0, 2 * bs_height].
    Gains are Rayleigh with unit mean magnitude and uniform phase.
    """
    if cfg.num_scatterers == 0 and not cfg.los:
        raise InvalidConfigError("an NLoS scene without scatterers has an all-zero channel")
    rng = np.random.default_rng(cfg.seed)
    x0, y0, x1, y1 = cfg.area
    mx = cfg.scatterer_margin * (x1 - x0)
    my = cfg.scatterer_margin * (y1 - y0)
    p = cfg.num_scatterers
    pos = np.column_stack(
        [
            rng.uniform(x0 - mx, x1 + mx, p),
            rng.uniform(y0 - my, y1 + my, p),
            rng.uniform(0.0, 2 * cfg.bs_position[2], p),
        ]
    )
    mag = rng.rayleigh(np.sqrt(2 / np.pi), p)  # E|g| = 1
    phase = rng.uniform(0, 2 * np.pi, p)
    return cfg, ScattererMap(pos, mag * np.exp(1j * phase))


def _as_points3d(scene: SceneConfig, ue) -> np.ndarray:
    ue = np.atleast_2d(np.asarray(ue, dtype=np.float64))
    if ue.shape[1] == 2:
        ue = np.column_stack([ue, np.full(len(ue), scene.ue_height)])
    elif ue.shape[1] != 3:
        raise InvalidConfigError(f"UE positions must be 2-D or 3-D, got shape {ue.shape}")
    return ue


def synth_csi_batch(scene: SceneConfig, scatterers: ScattererMap, ue, rng=None, chunk: int = 256) -> np.ndarray:
    """CSI for many UEs at once, shape (N, B, S).

    h[b, k] = sum_p g_p * a_b(theta_p) * exp(-2j*pi*f_k*tau_p) with free-space
    amplitude lambda / (4 pi d_p) on the (two-hop) path length d_p.
    """
    pts = _as_points3d(scene, ue)
    bs = np.asarray(scene.bs_position)
    lam = scene.wavelength
    freqs = scene.subcarrier_freqs
    b = np.arange(scene.num_antennas)
    amp_tx = np.sqrt(10 ** ((scene.tx_power_dbm - 30) / 10))

    to_ue = pts - bs
    d_direct = np.linalg.norm(to_ue, axis=1)
    if np.any(d_direct < 1e-9):
        raise SingularityError("UE coincides with the base station")

    # scattered paths: arrival direction fixed by the scatterer, length by both hops
    s_vec = scatterers.positions - bs
    d_bs_s = np.linalg.norm(s_vec, axis=1)
    u_s = s_vec[:, 0] / np.maximum(d_bs_s, 1e-12)

    out = np.empty((len(pts), scene.num_antennas, scene.num_subcarriers), dtype=np.complex128)
    for start in range(0, len(pts), chunk):
        sl = slice(start, start + chunk)
        p = pts[sl]
        gains, dists, cosx = [], [], []
        if scene.los:
            gains.append(np.ones((len(p), 1), dtype=np.complex128))
            dists.append(d_direct[sl, None])
            cosx.append((to_ue[sl, 0] / d_direct[sl])[:, None])
        if len(scatterers):
            d_s_ue = np.linalg.norm(p[:, None, :] - scatterers.positions[None, :, :], axis=2)
            dists.append(d_bs_s[None, :] + d_s_ue)
            gains.append(np.broadcast_to(scatterers.gains, d_s_ue.shape))
            cosx.append(np.broadcast_to(u_s, d_s_ue.shape))
        g = np.concatenate(gains, axis=1)
        d = np.concatenate(dists, axis=1)
        u = np.concatenate(cosx, axis=1)
        coef = amp_tx * g * lam / (4 * np.pi * d)  # (n, P)
        steer = np.exp(-2j * np.pi * scene.antenna_spacing * b[None, None, :] * u[:, :, None])  # (n, P, B)
        delay = np.exp(-2j * np.pi * freqs[None, None, :] * (d / SPEED_OF_LIGHT)[:, :, None])  # (n, P, S)
        out[sl] = np.einsum("np,npb,nps->nbs", coef, steer, delay)

    snr_db = scene.snr_db
    if snr_db is not None:
        if rng is None:
            rng = np.random.default_rng(scene.seed + 1)
        power = np.mean(np.abs(out) ** 2, axis=(1, 2), keepdims=True)
        sigma = np.sqrt(power / 10 ** (snr_db / 10) / 2)
        out = out + sigma * (rng.standard_normal(out.shape) + 1j * rng.standard_normal(out.shape))
    return out


def synth_csi(scene: SceneConfig, scatterers: ScattererMap, ue, rng=None) -> CsiMatrix:
    """CSI matrix (B x S) seen by the BS for a UE at ``ue`` (2-D or 3-D)."""
    pts = _as_points3d(scene, ue)
    if len(pts) != 1:
        raise InvalidConfigError("synth_csi takes a single UE; use synth_csi_batch for many")
    h = synth_csi_batch(scene, scatterers, pts, rng=rng)[0]
    return CsiMatrix(h, np.asarray(ue, dtype=np.float64).ravel()[:2].copy())


def place_uniform(scene: SceneConfig, n: int, seed: int = 0) -> np.ndarray:
    """n i.i.d. uniform 2-D positions inside the scene area."""
    if n < 1:
        raise InvalidConfigError("n must be at least 1")
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = scene.area
    return np.column_stack([rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)])


def place_square_ring(scene: SceneConfig, n: int) -> np.ndarray:
    """n points evenly spaced (by arc length) on a centered square.

    The square's side is half the shorter area side; the walk starts at the
    lower-left corner and runs counter-clockwise.
    """
    if n < 4:
        raise InvalidConfigError("a square ring needs at least 4 points")
    x0, y0, x1, y1 = scene.area
    side = 0.5 * min(x1 - x0, y1 - y0)
    c = scene.area_center
    corners = c + side / 2 * np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=np.float64)
    s = np.arange(n) * (4 * side / n)
    edge = np.minimum((s // side).astype(int), 3)
    frac = (s - edge * side)[:, None] / side
    return corners[edge] + frac * (corners[(edge + 1) % 4] - corners[edge])


# -- T-intersection ----------------------------------------------------------


@dataclass(frozen=True)
class TIntersection:
    """Road layout: an east-west road through the area center and a stem
    running from the center toward y_min."""

    junction: np.ndarray
    arm_ends: dict = field(default_factory=dict)  # name -> end point on the area boundary
    half_width: float = 3.5
    turn_radius: float = 8.0

    @classmethod
    def for_scene(cls, scene: SceneConfig, half_width: float = 3.5, turn_radius: float = 8.0):
        x0, y0, x1, y1 = scene.area
        j = scene.area_center
        ends = {
            "west": np.array([x0, j[1]]),
            "east": np.array([x1, j[1]]),
            "south": np.array([j[0], y0]),
        }
        return cls(j, ends, half_width, turn_radius)

    def centerlines(self) -> list:
        """Segments (start, end) making up the road centerlines."""
        return [
            (self.arm_ends["west"], self.arm_ends["east"]),
            (self.arm_ends["south"], self.junction),
        ]

    def distance_to_centerline(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        best = np.full(len(pts), np.inf)
        for a, b in self.centerlines():
            ab = b - a
            t = np.clip(((pts - a) @ ab) / (ab @ ab), 0.0, 1.0)
            best = np.minimum(best, np.linalg.norm(pts - (a + t[:, None] * ab), axis=1))
        return best

    def contains(self, points) -> np.ndarray:
        return self.distance_to_centerline(points) <= self.half_width + 1e-9

    def route(self, entry: str, exit: str):
        """Arc-length parametrization of the path from one arm end to another.

        Returns ``(length, point_at, normal_at)``, functions of arc length.
        """
        j = self.junction
        start, end = self.arm_ends[entry], self.arm_ends[exit]
        d1 = (j - start) / np.linalg.norm(j - start)
        d2 = (end - j) / np.linalg.norm(end - j)
        l_in = np.linalg.norm(j - start)
        l_out = np.linalg.norm(end - j)
        if abs(float(d1 @ d2) - 1.0) < 1e-12:
            total = l_in + l_out

            def point(s):
                return start + np.asarray(s)[..., None] * d1

            def normal(s):
                return np.broadcast_to(np.array([-d1[1], d1[0]]), np.shape(s) + (2,))

            return total, point, normal

        r = self.turn_radius
        p1 = j - r * d1
        center = p1 + r * d2
        arc = np.pi / 2 * r
        seg1 = l_in - r
        total = seg1 + arc + (l_out - r)
        # angle of p1 around the center; turn direction from the cross product
        turn = np.sign(d1[0] * d2[1] - d1[1] * d2[0])
        phi0 = np.arctan2(*(p1 - center)[::-1])

        def point(s):
            s = np.asarray(s, dtype=np.float64)
            out = np.empty(s.shape + (2,))
            a = s <= seg1
            c = s >= seg1 + arc
            m = ~(a | c)
            out[a] = start + s[a, None] * d1
            phi = phi0 + turn * (s[m] - seg1) / r
            out[m] = center + r * np.column_stack([np.cos(phi), np.sin(phi)])
            out[c] = j + r * d2 + (s[c] - seg1 - arc)[:, None] * d2
            return out

        def normal(s):
            s = np.asarray(s, dtype=np.float64)
            pts = point(s)
            out = np.empty(s.shape + (2,))
            a = s <= seg1
            c = s >= seg1 + arc
            m = ~(a | c)
            out[a] = [-d1[1], d1[0]]
            out[c] = [-d2[1], d2[0]]
            radial = pts[m] - center
            out[m] = radial / np.linalg.norm(radial, axis=1, keepdims=True)
            return out

        return total, point, normal


def gen_t_intersection_traces(
    scene: SceneConfig,
    num_traces: int,
    speed: float = 10.0,
    dt: float = 0.5,
    seed: int = 0,
    jitter: float = 0.5,
    first_id: int = 0,
) -> list:
    """Vehicle traces through a T-intersection.

    Each vehicle enters on a uniformly chosen arm, drives along the centerline
    at constant speed, turns onto one of the two other arms (quarter-circle
    corner), and leaves the area. Samples are ``speed * dt`` apart in arc
    length; a lateral offset bounded by ``jitter`` is added to every sample.
    """
    if num_traces < 1:
        raise InvalidConfigError("num_traces must be at least 1")
    if speed <= 0 or dt <= 0:
        raise InvalidConfigError("speed and dt must be positive")
    road = TIntersection.for_scene(scene)
    rng = np.random.default_rng(seed)
    arms = ["west", "east", "south"]
    step = speed * dt
    traces = []
    for i in range(num_traces):
        entry = arms[rng.integers(3)]
        exits = [a for a in arms if a != entry]
        exit_ = exits[rng.integers(2)]
        total, point, normal = road.route(entry, exit_)
        s = np.arange(0.0, total + 1e-9, step)
        offset = rng.uniform(-jitter, jitter, len(s))
        pos = point(s) + offset[:, None] * normal(s)
        times = np.arange(len(s)) * dt
        traces.append(Trace(times, pos, first_id + i, speed + 2 * jitter / dt))
    return traces
