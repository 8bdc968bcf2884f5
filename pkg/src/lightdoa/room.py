"""Scene sampling and stereo rendering with an image-source shoebox model.

Scenes follow class-conditioned sampling laws: a cuboid room built from a base size
``r`` with uniform perturbations, a two-microphone array near the room
centre, and a source placed at azimuth ``theta`` and distance ``d`` from the
array centre, ``source = [M0 + d sin(theta), M1 + d cos(theta), M2]``.
The microphones sit on the second axis at ``M1 +/- s/2``; channel 1 is the
one at ``M1 + s/2``, so ``theta = 0`` points at channel 1 (endfire).
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp
from scipy.signal import butter, fftconvolve, sosfilt

from .dsp import SAMPLE_RATE, AudioBuffer
from .errors import InvalidArgument, SceneGenerationError

SPEED_OF_SOUND = 343.0
SABINE_CONSTANT = 0.161
OUTPUT_PEAK = 0.9
MAX_ABSORPTION = 0.9999
DIRECTION_STD_DEG = 11.0
MIC_SPACING_RANGE = (0.16, 0.18)
RT60_RANGE = (0.3, 0.6)
FRACTIONAL_DELAY_TAPS = 8
HIGHPASS_HZ = 100.0
MAX_ATTEMPTS = 100


class RoomClass(str, enum.Enum):
    OUTDOORS = "Outdoors"
    LARGE = "Large"
    MODERATE = "Moderate"
    SMALL = "Small"


class DirectionClass(str, enum.Enum):
    LEFT = "Left"
    FRONT_LEFT = "FrontLeft"
    FRONT = "Front"
    FRONT_RIGHT = "FrontRight"
    RIGHT = "Right"


class DistanceClass(str, enum.Enum):
    FAR = "Far"
    MODERATE = "Moderate"
    NEAR = "Near"


# (low, high) of U(low, high); Outdoors is a fixed 100 m
ROOM_SIZE = {
    RoomClass.OUTDOORS: (100.0, 100.0),
    RoomClass.LARGE: (40.0, 90.0),
    RoomClass.MODERATE: (20.0, 40.0),
    RoomClass.SMALL: (5.0, 20.0),
}
DIRECTION_CENTER_DEG = {
    DirectionClass.LEFT: 180.0,
    DirectionClass.FRONT_LEFT: 135.0,
    DirectionClass.FRONT: 90.0,
    DirectionClass.FRONT_RIGHT: 45.0,
    DirectionClass.RIGHT: 0.0,
}
DISTANCE_RATIO = {
    DistanceClass.FAR: (0.6, 0.9),
    DistanceClass.MODERATE: (0.3, 0.6),
    DistanceClass.NEAR: (0.1, 0.3),
}


@dataclass(frozen=True)
class SceneClassConfig:
    room_class: RoomClass
    direction_class: DirectionClass
    distance_class: DistanceClass

    def __post_init__(self):
        object.__setattr__(self, "room_class", RoomClass(self.room_class))
        object.__setattr__(self, "direction_class", DirectionClass(self.direction_class))
        object.__setattr__(self, "distance_class", DistanceClass(self.distance_class))


@dataclass(frozen=True)
class SceneSpec:
    room_dims: tuple[float, float, float]
    mic_center: tuple[float, float, float]
    mic_spacing: float
    source_pos: tuple[float, float, float]
    azimuth: float
    distance: float
    rt60: float
    distance_ratio: float = float("nan")
    base_size: float = float("nan")
    room_perturbation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mic_perturbation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    classes: SceneClassConfig | None = None

    @property
    def mic_positions(self) -> tuple[np.ndarray, np.ndarray]:
        m = np.asarray(self.mic_center)
        half = np.array([0.0, self.mic_spacing / 2.0, 0.0])
        return m + half, m - half

    @property
    def is_free_field(self) -> bool:
        return self.rt60 <= 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classes"] = None if self.classes is None else {k: v.value for k, v in vars(self.classes).items()}
        return d


@dataclass(frozen=True)
class ImpulseResponse:
    taps: np.ndarray
    sample_rate: int = SAMPLE_RATE


def make_scene(
    room_dims,
    mic_center,
    mic_spacing: float,
    azimuth: float,
    distance: float,
    rt60: float = 0.0,
    **extra,
) -> SceneSpec:
    """Place the source at ``distance`` and ``azimuth`` (deg) from the array centre."""
    room = tuple(float(v) for v in room_dims)
    m = tuple(float(v) for v in mic_center)
    th = math.radians(azimuth)
    src = (m[0] + distance * math.sin(th), m[1] + distance * math.cos(th), m[2])
    scene = SceneSpec(
        room_dims=room,
        mic_center=m,
        mic_spacing=float(mic_spacing),
        source_pos=src,
        azimuth=float(azimuth),
        distance=float(distance),
        rt60=float(rt60),
        **extra,
    )
    _check_geometry(scene)
    return scene


def _check_geometry(scene: SceneSpec) -> None:
    room = np.asarray(scene.room_dims)
    if np.any(room <= 0):
        raise InvalidArgument(f"room dimensions must be positive, got {scene.room_dims}")
    points = [np.asarray(scene.source_pos), *scene.mic_positions]
    for p in points:
        if np.any(p <= 0) or np.any(p >= room):
            raise InvalidArgument(f"point {p.tolist()} lies outside room {scene.room_dims}")
    if scene.distance <= scene.mic_spacing:
        raise InvalidArgument(f"source distance {scene.distance} must exceed mic spacing {scene.mic_spacing}")


def sample_scene(rng: np.random.Generator, class_config: SceneClassConfig) -> SceneSpec:
    """Draw one scene for the given room / direction / distance classes."""
    lo, hi = ROOM_SIZE[class_config.room_class]
    for _ in range(MAX_ATTEMPTS):
        r = lo if lo == hi else rng.uniform(lo, hi)
        xi_r = rng.uniform(-0.1 * r, 0.1 * r, size=3)
        xi_m = rng.uniform(-0.1 * r, 0.1 * r, size=3)
        room = r + xi_r
        center = room / 2.0 + xi_m
        spacing = rng.uniform(*MIC_SPACING_RANGE)
        theta = rng.normal(DIRECTION_CENTER_DEG[class_config.direction_class], DIRECTION_STD_DEG)
        ratio = rng.uniform(*DISTANCE_RATIO[class_config.distance_class])
        if class_config.room_class is RoomClass.OUTDOORS:
            rt60 = 0.0
        else:
            rt60 = rng.uniform(*RT60_RANGE)
        d = ratio * min(room[0] - center[0], room[1] - center[1], center[0], center[1])
        try:
            return make_scene(
                room,
                center,
                spacing,
                theta,
                d,
                rt60,
                distance_ratio=float(ratio),
                base_size=float(r),
                room_perturbation=tuple(float(v) for v in xi_r),
                mic_perturbation=tuple(float(v) for v in xi_m),
                classes=class_config,
            )
        except InvalidArgument:
            continue
    raise SceneGenerationError(f"no valid scene for {class_config} after {MAX_ATTEMPTS} attempts")


def _volume_surface(room_dims) -> tuple[float, float]:
    a, b, c = (float(v) for v in room_dims)
    return a * b * c, 2.0 * (a * b + b * c + a * c)


def _fibonacci_sphere(n: int = 4096) -> np.ndarray:
    i = np.arange(n) + 0.5
    polar = np.arccos(1.0 - 2.0 * i / n)
    azim = np.pi * (1.0 + 5.0**0.5) * i
    return np.stack([np.cos(azim) * np.sin(polar), np.sin(azim) * np.sin(polar), np.cos(polar)], axis=1)


_SPHERE = np.abs(_fibonacci_sphere())


def rt60_to_absorption(room_dims, rt60: float, model: str = "sabine") -> float:
    """Uniform wall energy-absorption coefficient giving the requested RT60.

    ``model="sabine"`` inverts Sabine's formula ``0.161 V / (S a)`` and clamps
    to (0, 0.9999]. ``"eyring"`` inverts ``-0.161 V / (S ln(1 - a))``.
    ``"image-source"`` solves for the coefficient whose direction-averaged
    image-source energy decay drops 60 dB in ``rt60``; it accounts for the slow
    axial decay the image model produces and is what :func:`scene_rirs` uses.
    """
    if rt60 <= 0:
        raise InvalidArgument("rt60 must be positive; use free-field rendering for rt60 = 0")
    if any(v <= 0 for v in room_dims):
        raise InvalidArgument(f"room dimensions must be positive, got {room_dims}")
    volume, surface = _volume_surface(room_dims)
    if model == "sabine":
        return float(min(SABINE_CONSTANT * volume / (surface * rt60), MAX_ABSORPTION))
    if model == "eyring":
        return float(-np.expm1(-SABINE_CONSTANT * volume / (surface * rt60)))
    if model == "image-source":
        rate = SPEED_OF_SOUND * (_SPHERE / np.asarray(room_dims, dtype=float)).sum(axis=1)

        def residual(a):
            log_k = np.log(-np.log1p(-a) * rate)
            tail = logsumexp(-np.exp(log_k) * rt60 - log_k) - logsumexp(-log_k)
            return tail / np.log(10.0) * 10.0 + 60.0

        return float(brentq(residual, 1e-12, 1.0 - 1e-12, xtol=1e-14))
    raise InvalidArgument(f"unknown absorption model {model!r}")


def default_max_order(room_dims, rt60: float) -> int:
    """Reflection order that covers the full decay, never below 30 indoors."""
    if rt60 <= 0:
        return 0
    needed = math.ceil(math.sqrt(3.0) * SPEED_OF_SOUND * rt60 / min(room_dims))
    return int(min(max(30, needed), 100))


def _axis_images(length: float, src: float, max_order: int):
    n = np.arange(-(max_order // 2) - 1, max_order // 2 + 2)
    pos = np.concatenate([2 * n * length + src, 2 * n * length - src])
    count = np.concatenate([np.abs(2 * n), np.abs(2 * n - 1)])
    keep = count <= max_order
    return pos[keep], count[keep]


def image_sources(room_dims, source, max_order: int) -> tuple[np.ndarray, np.ndarray]:
    """Image positions (N, 3) and their reflection orders (N,) up to ``max_order``."""
    if max_order < 0:
        raise InvalidArgument("max_order must be >= 0")
    (px, cx), (py, cy), (pz, cz) = (_axis_images(room_dims[i], source[i], max_order) for i in range(3))
    cyz = cy[:, None] + cz[None, :]
    pos, order = [], []
    for x, c in zip(px, cx):
        mask = cyz <= max_order - c
        if not mask.any():
            continue
        iy, iz = np.nonzero(mask)
        pos.append(np.stack([np.full(len(iy), x), py[iy], pz[iz]], axis=1))
        order.append(c + cyz[iy, iz])
    return np.concatenate(pos), np.concatenate(order)


def _fractional_delay_kernel(delay: np.ndarray):
    """8-tap Hann-windowed sinc around each (fractional) delay in samples."""
    half = FRACTIONAL_DELAY_TAPS // 2
    first = np.floor(delay).astype(np.int64) - (half - 1)
    idx = first[:, None] + np.arange(FRACTIONAL_DELAY_TAPS)
    x = idx - delay[:, None]
    w = np.where(np.abs(x) < half, 0.5 * (1.0 + np.cos(np.pi * x / half)), 0.0)
    return idx, np.sinc(x) * w


def image_source_rir(
    room_dims,
    source,
    mic,
    absorption: float,
    max_order: int,
    fs: int = SAMPLE_RATE,
    amplitude_floor: float = 1e-9,
) -> ImpulseResponse:
    """Shoebox RIR from ``source`` to ``mic``.

    Every image of order ``n`` at distance ``r`` contributes
    ``(1 - absorption) ** (n / 2) / (4 pi r)`` at delay ``r / c``. Images whose
    amplitude falls below ``amplitude_floor`` times the strongest one are
    skipped; they only matter in near-anechoic rooms where they would stretch
    the response for no audible content.
    """
    source = np.asarray(source, dtype=float)
    mic = np.asarray(mic, dtype=float)
    if np.linalg.norm(source - mic) < 1e-9:
        raise InvalidArgument("source and microphone coincide")
    if not 0.0 <= absorption <= 1.0:
        raise InvalidArgument(f"absorption must lie in [0, 1], got {absorption}")
    pos, order = image_sources(room_dims, source, max_order)
    dist = np.linalg.norm(pos - mic, axis=1)
    amp = np.sqrt(1.0 - absorption) ** order / (4.0 * np.pi * dist)
    keep = amp >= amplitude_floor * amp.max()
    dist, amp = dist[keep], amp[keep]
    idx, kernel = _fractional_delay_kernel(fs * dist / SPEED_OF_SOUND)
    valid = idx >= 0
    taps = np.zeros(int(idx.max()) + 1)
    np.add.at(taps, idx[valid], (amp[:, None] * kernel)[valid])
    return ImpulseResponse(taps=taps, sample_rate=fs)


def scene_rirs(scene: SceneSpec, max_order: int | None = None, fs: int = SAMPLE_RATE) -> list[ImpulseResponse]:
    """Impulse responses to both microphones of ``scene``.

    Free-field scenes (rt60 = 0) keep the direct path only. Reverberant ones
    use image-source-matched absorption and are high-passed at 100 Hz to
    remove the DC build-up of the all-positive image sum.
    """
    if scene.is_free_field:
        order, absorption = 0, 1.0
    else:
        order = default_max_order(scene.room_dims, scene.rt60) if max_order is None else max_order
        absorption = rt60_to_absorption(scene.room_dims, scene.rt60, model="image-source")
    rirs = []
    for mic in scene.mic_positions:
        h = image_source_rir(scene.room_dims, scene.source_pos, mic, absorption, order, fs)
        if order > 0:
            sos = butter(2, HIGHPASS_HZ, btype="highpass", fs=fs, output="sos")
            h = ImpulseResponse(taps=sosfilt(sos, h.taps), sample_rate=fs)
        rirs.append(h)
    return rirs


def render_stereo(
    source_signal: np.ndarray,
    scene: SceneSpec,
    max_order: int | None = None,
    fs: int = SAMPLE_RATE,
    normalize: bool = True,
) -> AudioBuffer:
    """Convolve a mono source with both scene RIRs.

    The output has the source's length and both channels share one gain that
    brings the joint peak to 0.9, so level differences survive.
    """
    x = np.asarray(source_signal, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidArgument("source signal must be mono")
    out = np.stack([fftconvolve(x, h.taps)[: len(x)] for h in scene_rirs(scene, max_order, fs)])
    peak = np.max(np.abs(out)) if out.size else 0.0
    if normalize and peak > 0:
        out *= OUTPUT_PEAK / peak
    return AudioBuffer(samples=out, sample_rate=fs)


def schroeder_decay_db(taps: np.ndarray, start: int = 0) -> np.ndarray:
    """Backward-integrated energy decay from ``start``, in dB re its first value."""
    e = np.cumsum(np.asarray(taps[start:], dtype=np.float64)[::-1] ** 2)[::-1]
    if e.size == 0 or e[0] <= 0:
        raise InvalidArgument("impulse response has no energy after start")
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(e / e[0])


def decay_time(taps: np.ndarray, fs: int = SAMPLE_RATE, drop_db: float = 60.0, start: int = 0) -> float:
    """Seconds from ``start`` until the Schroeder curve falls ``drop_db`` dB."""
    db = schroeder_decay_db(taps, start)
    below = np.nonzero(db <= -drop_db)[0]
    return float(below[0] / fs) if below.size else float(len(db) / fs)


def reverberant_decay_time(rir: ImpulseResponse, direct_distance: float, drop_db: float = 60.0) -> float:
    """Decay time measured from just after the direct-path kernel."""
    start = int(math.ceil(rir.sample_rate * direct_distance / SPEED_OF_SOUND)) + FRACTIONAL_DELAY_TAPS // 2 + 1
    return decay_time(rir.taps, rir.sample_rate, drop_db, start)
