"""Segmented Gaussian-mixture path classification.

The route is cut into equal-width bins along the port-to-port axis and one
mixture is fitted to the training positions in each bin. A voyage's
signature is, per bin, the component with the largest mean responsibility
over its points there. Signatures restricted to the bins where classes
actually differ are mapped to the majority training label.
"""
from __future__ import annotations

import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cluster.gmm import GaussianMixture, gmm_fit
from .geo import Projection

FORMAT = "vesselpath.segment-model/1"
ABSENT = None
MIN_POINTS_PER_COMPONENT = 10
MIN_CONSISTENCY = 0.9


class SegmentError(ValueError):
    pass


class SchemeError(SegmentError):
    pass


class CoverageError(SegmentError):
    def __init__(self, segment: int, n_points: int, needed: int):
        super().__init__(f"segment {segment} has {n_points} training points, needs at least {needed}")
        self.segment = segment


class MappingError(SegmentError):
    pass


class UnclassifiableError(SegmentError):
    pass


@dataclass(frozen=True)
class SegmentScheme:
    """Bins along the axis from ``origin`` (west port) in ``direction``."""

    boundaries: tuple
    origin: tuple = (0.0, 0.0)
    direction: tuple = (1.0, 0.0)

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        if len(b) < 3:
            raise SchemeError("a scheme needs at least 2 segments")
        if any(not np.isfinite(x) for x in b) or any(hi <= lo for lo, hi in zip(b, b[1:])):
            raise SchemeError("boundaries must be finite and strictly increasing")
        d = np.asarray(self.direction, dtype=float)
        n = float(np.hypot(*d))
        if not abs(n - 1.0) < 1e-9:
            raise SchemeError("axis direction must be a unit vector")
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))
        object.__setattr__(self, "direction", tuple(float(x) for x in d))

    @property
    def S(self) -> int:
        return len(self.boundaries) - 1

    def axis_coord(self, xy) -> np.ndarray:
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        return (xy - np.asarray(self.origin)) @ np.asarray(self.direction)

    def locate(self, xy) -> np.ndarray:
        """Segment index per point, or -1 outside the outer boundaries."""
        u = self.axis_coord(xy)
        b = np.asarray(self.boundaries)
        idx = np.searchsorted(b, u, side="right") - 1
        idx[u == b[-1]] = self.S - 1
        idx[(u < b[0]) | (u > b[-1])] = -1
        return idx

    def to_dict(self) -> dict:
        return {"boundaries": list(self.boundaries), "origin": list(self.origin),
                "direction": list(self.direction)}

    @classmethod
    def from_dict(cls, data: dict) -> "SegmentScheme":
        return cls(tuple(data["boundaries"]), tuple(data["origin"]), tuple(data["direction"]))


@dataclass(frozen=True)
class SegmentModels:
    scheme: SegmentScheme
    models: tuple
    components_per_segment: int
    projection: Projection

    def __post_init__(self):
        if len(self.models) != self.scheme.S:
            raise SegmentError(f"{len(self.models)} models for {self.scheme.S} segments")


@dataclass(frozen=True)
class PathSignature:
    voyage_id: str
    assignments: tuple      # component index per segment, or ABSENT
    mean_loglik: tuple      # per segment, or ABSENT
    outside: int = 0        # points beyond the outer boundaries


@dataclass(frozen=True)
class SignatureMap:
    discriminative: tuple
    table: dict = field(repr=False)      # key tuple -> label
    class_order: tuple = ()
    floors: tuple = ()                   # per-segment log-likelihood floor, or ABSENT

    def key(self, sig: PathSignature) -> tuple:
        return tuple(sig.assignments[s] for s in self.discriminative)

    def to_dict(self) -> dict:
        return {
            "discriminative": list(self.discriminative),
            "class_order": list(self.class_order),
            "floors": list(self.floors),
            "table": [{"key": list(k), "label": v} for k, v in sorted(self.table.items(), key=lambda kv: _sort_key(kv[0]))],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SignatureMap":
        table = {tuple(e["key"]): e["label"] for e in data["table"]}
        return cls(tuple(data["discriminative"]), table, tuple(data["class_order"]), tuple(data["floors"]))


@dataclass(frozen=True)
class Classification:
    voyage_id: str
    label: str
    novel: bool              # unseen key or a segment below its likelihood floor
    exact: bool              # key found in the map
    low_segments: tuple      # segments whose mean log-likelihood fell below the floor
    confidence: float        # mean over covered segments of the per-segment mean log-likelihood
    signature: PathSignature = field(repr=False)


def _sort_key(key):
    return tuple((1, 0) if a is None else (0, a) for a in key)


def _two_means(P):
    """Deterministic 2-means for the port endpoints."""
    a = P[np.lexsort((P[:, 1], P[:, 0]))[0]]
    b = P[np.argmax(((P - a) ** 2).sum(1))]
    C = np.vstack([a, b])
    labels = None
    for _ in range(100):
        d = ((P[:, None, :] - C[None]) ** 2).sum(-1)
        new = d.argmin(1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        if np.all(labels == labels[0]):
            break
        C = np.vstack([P[labels == 0].mean(0), P[labels == 1].mean(0)])
    return C


def build_scheme(train, S: int, proj: Projection) -> SegmentScheme:
    if S < 2:
        raise SchemeError(f"need at least 2 segments, got {S}")
    if not train:
        raise SchemeError("empty training set")
    xys = [proj.forward(v.lat, v.lon) for v in train]
    ends = np.vstack([np.vstack([xy[0], xy[-1]]) for xy in xys])
    p, q = _two_means(ends)
    if np.hypot(*(q - p)) < 1.0:
        raise SchemeError("port centroids coincide; the route axis is undefined")
    # the western port is the origin so reversed voyages give the same scheme
    if (q[0], q[1]) < (p[0], p[1]):
        p, q = q, p
    direction = (q - p) / np.hypot(*(q - p))
    scheme0 = SegmentScheme((0.0, 1.0, 2.0), tuple(p), tuple(direction))
    u = np.concatenate([scheme0.axis_coord(xy) for xy in xys])
    lo, hi = float(u.min()), float(u.max())
    if not hi > lo:
        raise SchemeError("training points span no distance along the axis")
    bounds = np.linspace(lo, hi, S + 1)
    bounds[0], bounds[-1] = lo, hi
    return SegmentScheme(tuple(bounds), tuple(p), tuple(direction))


def fit_segment_models(train, scheme: SegmentScheme, components: int = 3, seed: int = 0,
                       proj: Projection | None = None, threads: int = 1) -> SegmentModels:
    if proj is None:
        raise SegmentError("a projection is required")
    xy = np.vstack([proj.forward(v.lat, v.lon) for v in train])
    seg = scheme.locate(xy)
    need = components * MIN_POINTS_PER_COMPONENT
    groups = []
    for s in range(scheme.S):
        pts = xy[seg == s]
        if pts.shape[0] < need:
            raise CoverageError(s, pts.shape[0], need)
        groups.append(pts)

    # each segment has its own seed stream, so thread count cannot change results
    def fit(s):
        return gmm_fit(groups[s], components, seed=[seed, s])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            models = tuple(ex.map(fit, range(scheme.S)))
    else:
        models = tuple(fit(s) for s in range(scheme.S))
    return SegmentModels(scheme, models, components, proj)


def signature(v, models: SegmentModels, proj: Projection | None = None) -> PathSignature:
    proj = proj or models.projection
    xy = proj.forward(v.lat, v.lon)
    seg = models.scheme.locate(xy)
    assign, ll = [], []
    for s, g in enumerate(models.models):
        pts = xy[seg == s]
        if pts.shape[0] == 0:
            assign.append(ABSENT)
            ll.append(ABSENT)
            continue
        lw = g.component_log_density(pts)
        mx = lw.max(axis=1, keepdims=True)
        lse = mx[:, 0] + np.log(np.exp(lw - mx).sum(axis=1))
        resp = np.exp(lw - lse[:, None])
        assign.append(int(resp.mean(axis=0).argmax()))
        ll.append(float(lse.mean()))
    return PathSignature(v.id, tuple(assign), tuple(ll), int((seg < 0).sum()))


def _modal(values):
    counts = Counter(values)
    top = max(counts.values())
    return min((v for v, c in counts.items() if c == top), key=lambda a: _sort_key((a,)))


def learn_signature_map(train_signatures: Sequence[PathSignature], labels: Sequence[str],
                        class_order: Sequence[str] | None = None,
                        min_consistency: float = MIN_CONSISTENCY) -> SignatureMap:
    if len(train_signatures) != len(labels) or not labels:
        raise MappingError("need one label per training signature")
    order = tuple(class_order) if class_order is not None else tuple(sorted(set(labels)))
    S = len(train_signatures[0].assignments)
    by_class = {c: [sig for sig, lab in zip(train_signatures, labels) if lab == c] for c in order}
    by_class = {c: sigs for c, sigs in by_class.items() if sigs}
    # A segment keys the map when class modes differ there and most voyages
    # agree with their class mode. Where lanes overlap (near the ports) the
    # components split along the track and the argmax is a coin toss.
    disc = []
    for s in range(S):
        modes = {c: _modal([sig.assignments[s] for sig in sigs]) for c, sigs in by_class.items()}
        agree = sum(sig.assignments[s] == modes[c] for c, sigs in by_class.items() for sig in sigs)
        if len(set(modes.values())) > 1 and agree >= min_consistency * len(labels):
            disc.append(s)
    if not disc:
        raise MappingError("no segment separates the training classes")
    disc = tuple(disc)

    votes: dict = {}
    for sig, lab in zip(train_signatures, labels):
        votes.setdefault(tuple(sig.assignments[s] for s in disc), Counter())[lab] += 1
    table = {}
    for key, c in votes.items():
        ranked = c.most_common()
        if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
            tied = sorted(lab for lab, n in ranked if n == ranked[0][1])
            raise MappingError(f"signature {list(key)} is split evenly between {tied}")
        table[key] = ranked[0][0]

    floors = []
    for s in range(S):
        vals = np.array([sig.mean_loglik[s] for sig in train_signatures if sig.mean_loglik[s] is not None])
        floors.append(float(vals.min() - 3.0 * vals.std()) if vals.size else ABSENT)
    return SignatureMap(disc, table, order, tuple(floors))


def _hamming(a, b):
    return sum(1 for x, y in zip(a, b) if x is not None and x != y)


def classify_signature(sig: PathSignature, smap: SignatureMap) -> Classification:
    key = smap.key(sig)
    if all(k is None for k in key):
        raise UnclassifiableError(f"voyage {sig.voyage_id} has no points in any discriminative segment")
    exact = key in smap.table
    if exact:
        label = smap.table[key]
    else:
        dist = {k: _hamming(key, k) for k in smap.table}
        best = min(dist.values())
        rank = {c: n for n, c in enumerate(smap.class_order)}
        label = min((smap.table[k] for k, d in dist.items() if d == best),
                    key=lambda c: (rank.get(c, len(rank)), c))
    low = tuple(s for s, (ll, fl) in enumerate(zip(sig.mean_loglik, smap.floors))
                if ll is not None and fl is not None and ll < fl)
    present = [ll for ll in sig.mean_loglik if ll is not None]
    conf = float(np.mean(present)) if present else float("-inf")
    return Classification(sig.voyage_id, label, (not exact) or bool(low), exact, low, conf, sig)


def classify_voyage(v, models: SegmentModels, smap: SignatureMap) -> Classification:
    return classify_signature(signature(v, models), smap)


def stratified_split(labeled, train_fraction: float = 0.7, seed: int = 0):
    """Per-class random split; returns (train, test) lists in input order."""
    if not 0 < train_fraction < 1:
        raise SegmentError("train_fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    by_class: dict = {}
    for n, lv in enumerate(labeled):
        by_class.setdefault(lv.class_label, []).append(n)
    in_train = set()
    for lab in sorted(by_class):
        idx = by_class[lab]
        k = max(1, int(round(train_fraction * len(idx))))
        if len(idx) > 1:
            k = min(k, len(idx) - 1)
        in_train.update(idx[i] for i in sorted(rng.permutation(len(idx))[:k]))
    train = [lv for n, lv in enumerate(labeled) if n in in_train]
    test = [lv for n, lv in enumerate(labeled) if n not in in_train]
    return train, test


@dataclass(frozen=True)
class SegmentModel:
    """Everything needed to classify new voyages."""
    models: SegmentModels
    signature_map: SignatureMap

    def classify(self, v) -> Classification:
        return classify_voyage(v, self.models, self.signature_map)

    def to_dict(self) -> dict:
        m = self.models
        return {
            "format": FORMAT,
            "projection": m.projection.to_dict(),
            "scheme": m.scheme.to_dict(),
            "components_per_segment": m.components_per_segment,
            "models": [g.to_dict() for g in m.models],
            "signature_map": self.signature_map.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SegmentModel":
        if data.get("format") != FORMAT:
            raise SegmentError(f"unsupported model format {data.get('format')!r}")
        models = SegmentModels(
            SegmentScheme.from_dict(data["scheme"]),
            tuple(GaussianMixture.from_dict(g) for g in data["models"]),
            int(data["components_per_segment"]),
            Projection.from_dict(data["projection"]),
        )
        return cls(models, SignatureMap.from_dict(data["signature_map"]))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def train_segment_model(train_labeled, S: int = 8, components: int = 3, seed: int = 0,
                        proj: Projection | None = None, threads: int = 1,
                        class_order: Sequence[str] | None = None) -> SegmentModel:
    voyages = [lv.voyage for lv in train_labeled]
    if proj is None:
        raise SegmentError("a projection is required")
    scheme = build_scheme(voyages, S, proj)
    models = fit_segment_models(voyages, scheme, components, seed, proj, threads)
    sigs = [signature(v, models) for v in voyages]
    smap = learn_signature_map(sigs, [lv.class_label for lv in train_labeled], class_order)
    return SegmentModel(models, smap)
