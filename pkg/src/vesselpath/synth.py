"""Synthetic two-port voyages with five path classes.

All centerlines start at the west port and end at the east port. Class
geometry is a shared axis plus smooth bulges; each voyage walks its
centerline at a constant speed, drifts laterally with a mean-reverting
offset, and carries slowly varying position error. Both are second-order
Gauss-Markov processes, so tracks stay smooth at one-second sampling. Every voyage draws from
its own child of ``SeedSequence(seed)``, so output is reproducible and
independent of generation order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .geo import GeoPoint, Projection, make_projection
from .ingest import LabeledVoyage, Voyage

CLASS_ORDER = ("NE", "NM", "NW", "S", "SW")
DEFAULT_COUNTS = {"NE": 14, "NM": 40, "NW": 16, "S": 52, "SW": 2}
NOMINAL_SPEED = 4.2           # m/s (8.2 kn)
WEST_PORT = GeoPoint(59.3960, 18.2800)
ROUTE_LENGTH = 4000.0         # m, port to port along the axis
START_EPOCH = 1656655200      # 2022-07-01T06:00:00Z
VOYAGE_SPACING = 7200         # s between voyage departures
PORT_TAPER = 250.0            # m over which lateral drift fades at each port


@dataclass(frozen=True)
class Variant:
    """Alternative centerline flown by ``count`` voyages of the owning class."""
    centerline: tuple
    count: int


@dataclass(frozen=True)
class RouteArchetype:
    class_label: str
    centerline: tuple
    nominal_speed: float = NOMINAL_SPEED
    lateral_sigma: float = 10.0
    variants: tuple = ()

    def __post_init__(self):
        if len(self.centerline) < 2:
            raise ValueError(f"{self.class_label}: centerline needs at least 2 points")
        if not self.lateral_sigma >= 0:
            raise ValueError(f"{self.class_label}: lateral_sigma must be >= 0")
        if not self.nominal_speed > 0:
            raise ValueError(f"{self.class_label}: nominal_speed must be > 0")


@dataclass(frozen=True)
class GeneratorConfig:
    archetypes: tuple
    counts: dict
    sample_period: float = 1.0
    gps_noise_sigma: float = 5.0
    seed: int = 0
    lateral_tau: float = 60.0       # s, time constant of the lateral drift
    gps_tau: float = 60.0           # s, time constant of the position error
    fuel_rate: float | None = 45.0  # L/h at nominal speed; None omits the channel
    start_epoch: int = START_EPOCH
    noise_model: str = "gauss-markov"   # or "white"

    def __post_init__(self):
        labels = [a.class_label for a in self.archetypes]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate archetype class labels")
        if set(self.counts) != set(labels):
            raise ValueError("counts must name exactly the archetype classes")
        for lab, n in self.counts.items():
            if int(n) < 1:
                raise ValueError(f"count for {lab} must be >= 1")
        for a in self.archetypes:
            if sum(v.count for v in a.variants) > self.counts[a.class_label]:
                raise ValueError(f"{a.class_label}: variant counts exceed the class count")
        if not self.sample_period >= 1:
            raise ValueError("sample_period must be >= 1 s")
        if not self.gps_noise_sigma >= 0:
            raise ValueError("gps_noise_sigma must be >= 0")
        if self.noise_model not in ("gauss-markov", "white"):
            raise ValueError(f"unknown noise_model {self.noise_model!r}")

    def archetype(self, label) -> RouteArchetype:
        for a in self.archetypes:
            if a.class_label == label:
                return a
        raise KeyError(label)

    def to_dict(self) -> dict:
        def line(c):
            return [[p.lat, p.lon] for p in c]

        return {
            "archetypes": [
                {"class_label": a.class_label, "centerline": line(a.centerline),
                 "nominal_speed": a.nominal_speed, "lateral_sigma": a.lateral_sigma,
                 "variants": [{"centerline": line(v.centerline), "count": v.count} for v in a.variants]}
                for a in self.archetypes
            ],
            "counts": dict(self.counts),
            "sample_period": self.sample_period,
            "gps_noise_sigma": self.gps_noise_sigma,
            "seed": self.seed,
            "lateral_tau": self.lateral_tau,
            "gps_tau": self.gps_tau,
            "fuel_rate": self.fuel_rate,
            "start_epoch": self.start_epoch,
            "noise_model": self.noise_model,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        def line(c):
            return tuple(GeoPoint(float(la), float(lo)) for la, lo in c)

        archs = tuple(
            RouteArchetype(
                a["class_label"], line(a["centerline"]),
                float(a.get("nominal_speed", NOMINAL_SPEED)), float(a.get("lateral_sigma", 10.0)),
                tuple(Variant(line(v["centerline"]), int(v["count"])) for v in a.get("variants", ())),
            )
            for a in data["archetypes"]
        )
        known = {"sample_period", "gps_noise_sigma", "seed", "lateral_tau", "gps_tau",
                 "fuel_rate", "start_epoch", "noise_model"}
        extra = {k: data[k] for k in known if k in data}
        return cls(archs, {k: int(v) for k, v in data["counts"].items()}, **extra)

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _plateau(x, a, b, ramp):
    """1 on [a, b], cosine ramps of width ``ramp`` on either side, 0 elsewhere."""
    x = np.asarray(x, dtype=float)
    up = np.clip((x - (a - ramp)) / ramp, 0.0, 1.0)
    down = np.clip(((b + ramp) - x) / ramp, 0.0, 1.0)
    return (1 - np.cos(np.pi * np.minimum(up, down))) / 2.0


def _local_line(terms, step=10.0):
    x = np.arange(0.0, ROUTE_LENGTH + step / 2, step)
    y = np.zeros_like(x)
    for amp, a, b, ramp in terms:
        y += amp * _plateau(x, a, b, ramp)
    return np.column_stack([x, y])


def _to_geo(xy, proj: Projection) -> tuple:
    lat, lon = proj.inverse(xy)
    return tuple(GeoPoint(float(a), float(b)) for a, b in zip(lat, lon))


# Local-frame corridor profiles: (amplitude m, plateau start, plateau end, ramp).
# North is +y. The NE/NM pair is the deliberately hard one: six NM voyages
# take a variant that sits between the two branches and cuts an inshore
# corner in the west, so by ANND it stays nearest NM while its distance
# profile over the whole fleet looks more like NE.
_NORTH = (300.0, 900.0, 3100.0, 600.0)
_NE_ARM = (260.0, 2500.0, 3000.0, 450.0)
_NM_ARM = (260.0, 1500.0, 2100.0, 450.0)
PROFILES = {
    "NE": [_NORTH, _NE_ARM],
    "NM": [_NORTH, _NM_ARM],
    "NW": [_NORTH, (600.0, 900.0, 1500.0, 450.0)],
    "S": [(-250.0, 1000.0, 3000.0, 600.0)],
    "SW": [(-250.0, 1000.0, 3000.0, 600.0), (-450.0, 900.0, 1700.0, 450.0)],
}
VARIANT_PROFILES = {
    "NM": ([_NORTH, (0.6 * 260.0, 1500.0, 2100.0, 450.0), (0.4 * 260.0, 2500.0, 3000.0, 450.0),
            (-150.0, 900.0, 1300.0, 350.0)], 6),
}
NOVEL_PROFILE = [(-250.0, 1000.0, 3000.0, 600.0), (-400.0, 1900.0, 3100.0, 450.0)]


def default_projection() -> Projection:
    return make_projection(WEST_PORT)


def default_config(seed: int = 0) -> GeneratorConfig:
    proj = default_projection()
    archs = []
    for lab in CLASS_ORDER:
        variants = ()
        if lab in VARIANT_PROFILES:
            terms, n = VARIANT_PROFILES[lab]
            variants = (Variant(_to_geo(_local_line(terms), proj), n),)
        archs.append(RouteArchetype(lab, _to_geo(_local_line(PROFILES[lab]), proj), variants=variants))
    return GeneratorConfig(tuple(archs), dict(DEFAULT_COUNTS), seed=seed)


def _walk(line_xy, speed, dt):
    """Positions, unit normals and arclength at constant speed along a polyline."""
    step = np.diff(line_xy, axis=0)
    keep = np.concatenate([[True], np.hypot(step[:, 0], step[:, 1]) > 0])
    line_xy = line_xy[keep]
    seg = np.diff(line_xy, axis=0)
    seglen = np.hypot(seg[:, 0], seg[:, 1])
    starts = line_xy[:-1]
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    total = cum[-1]
    n = int(math.ceil(total / (speed * dt))) + 1
    s = np.minimum(np.arange(n) * speed * dt, total)
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(seglen) - 1)
    frac = (s - cum[idx]) / seglen[idx]
    pos = starts[idx] + seg[idx] * frac[:, None]
    tang = seg[idx] / seglen[idx, None]
    normal = np.column_stack([-tang[:, 1], tang[:, 0]])
    return pos, normal, s, total


def _smooth_noise(rng, n, sigma, tau, dt, dims=1):
    """Second-order Gauss-Markov noise: two cascaded first-order lags.

    Stationary standard deviation ``sigma``, time constant ``tau``. Unlike a
    first-order process its derivative stays bounded, so short correlation
    times do not inflate the apparent speed of the track.
    """
    if sigma == 0:
        return np.zeros((n, dims))
    phi = math.exp(-dt / tau)
    # AR(2) with a double root at phi: var = q (1 + phi^2) / (1 - phi^2)^3
    q_sd = sigma * math.sqrt((1.0 - phi * phi) ** 3 / (1.0 + phi * phi))
    burn = int(math.ceil(10.0 * tau / dt))
    eps = rng.standard_normal((n + burn, dims)) * q_sd
    out = np.zeros((n + burn, dims))
    a1, a2 = 2.0 * phi, -phi * phi
    for k in range(2, n + burn):
        out[k] = a1 * out[k - 1] + a2 * out[k - 2] + eps[k]
    return out[burn:]


def _voyage(vid, line_xy, arch, cfg, proj, rng, start, reverse):
    dt = cfg.sample_period
    pos, normal, s, total = _walk(line_xy, arch.nominal_speed, dt)
    n = pos.shape[0]
    taper = np.clip(np.minimum(s, total - s) / PORT_TAPER, 0.0, 1.0)
    lateral = _smooth_noise(rng, n, arch.lateral_sigma, cfg.lateral_tau, dt)[:, 0] * taper
    if cfg.noise_model == "white":
        gps = cfg.gps_noise_sigma * rng.standard_normal((n, 2))
    else:
        gps = _smooth_noise(rng, n, cfg.gps_noise_sigma, cfg.gps_tau, dt, dims=2)
    xy = pos + normal * lateral[:, None] + gps
    if reverse:
        xy = xy[::-1]
    lat, lon = proj.inverse(xy)
    t = start + dt * np.arange(n)
    fuel = None
    if cfg.fuel_rate is not None:
        fuel = np.full(n, cfg.fuel_rate * (arch.nominal_speed / NOMINAL_SPEED) ** 3)
    return Voyage(vid, t, lat, lon, fuel_rate=fuel)


def _class_sequence(cfg: GeneratorConfig) -> list:
    seq = [a.class_label for a in cfg.archetypes for _ in range(cfg.counts[a.class_label])]
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(1)[0])
    rng.shuffle(seq)
    return seq


def generate(cfg: GeneratorConfig, with_variant_flags: bool = False):
    """Labelled voyages for ``cfg``; deterministic in ``cfg.seed``.

    With ``with_variant_flags`` a ``{voyage_id: variant_index or None}`` map is
    returned as well.
    """
    proj = make_projection(cfg.archetypes[0].centerline[0])
    seq = _class_sequence(cfg)
    children = np.random.SeedSequence(cfg.seed).spawn(len(seq) + 1)[1:]
    taken = {a.class_label: 0 for a in cfg.archetypes}
    lines = {a.class_label: proj.forward([p.lat for p in a.centerline], [p.lon for p in a.centerline])
             for a in cfg.archetypes}
    out = []
    flags = {}
    for n, lab in enumerate(seq):
        arch = cfg.archetype(lab)
        k = taken[lab]
        taken[lab] += 1
        line, vflag = lines[lab], None
        acc = 0
        for vi, var in enumerate(arch.variants):
            if acc <= k < acc + var.count:
                line = proj.forward([p.lat for p in var.centerline], [p.lon for p in var.centerline])
                vflag = vi
                break
            acc += var.count
        vid = f"V{n + 1:04d}"
        rng = np.random.default_rng(children[n])
        start = cfg.start_epoch + n * VOYAGE_SPACING
        v = _voyage(vid, line, arch, cfg, proj, rng, start, reverse=bool(n % 2))
        out.append(LabeledVoyage(v, lab))
        flags[vid] = vflag
    if with_variant_flags:
        return out, flags
    return out


def novel_centerline(cfg: GeneratorConfig) -> tuple:
    proj = make_projection(cfg.archetypes[0].centerline[0])
    return _to_geo(_local_line(NOVEL_PROFILE), proj)


def generate_novel(cfg: GeneratorConfig, count: int) -> list:
    """Voyages on an extra, unlabelled corridor far from every archetype."""
    if count <= 0:
        return []
    proj = make_projection(cfg.archetypes[0].centerline[0])
    arch = RouteArchetype("NOVEL", novel_centerline(cfg),
                          cfg.archetypes[0].nominal_speed, cfg.archetypes[0].lateral_sigma)
    line = proj.forward([p.lat for p in arch.centerline], [p.lon for p in arch.centerline])
    # a separate stream so novel voyages never reuse labelled-voyage noise
    children = np.random.SeedSequence([cfg.seed, 0x6E6F76]).spawn(count)
    start0 = cfg.start_epoch + (sum(cfg.counts.values()) + 1) * VOYAGE_SPACING
    return [
        _voyage(f"N{n + 1:03d}", line, arch, cfg, proj, np.random.default_rng(children[n]),
                start0 + n * VOYAGE_SPACING, reverse=bool(n % 2))
        for n in range(count)
    ]


def centerline_xy(cfg: GeneratorConfig, label: str, proj: Projection | None = None) -> np.ndarray:
    proj = proj or make_projection(cfg.archetypes[0].centerline[0])
    a = cfg.archetype(label)
    return proj.forward([p.lat for p in a.centerline], [p.lon for p in a.centerline])
