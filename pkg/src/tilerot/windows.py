"""Finite coordinatized segments of tilings, patch extraction, return points.

A window materializes one supertile (or a legal two-supertile junction) with
exact vertex coordinates available on demand.  Bi-infinite tilings are always
represented by a window plus a safe-interior discipline: any query that needs
data within R of the window edge is a hard error, never a silent truncation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .scalars import Scalar, as_float, exact, scalars_close
from .systems import TilingError, TilingSystem, UnknownLabelError


class WindowBoundaryError(TilingError):
    pass


@dataclass(frozen=True)
class Patch:
    """The pattern of a tiling on [x-R, x+R], in coordinates relative to x.

    Equality is exact in exact mode and tolerance-based in float mode; two
    patches agree iff their labels, their anchor tile, and the in-tile offset
    of the center all agree (tile lengths then force equal vertex offsets).
    """

    radius: Scalar
    labels: tuple[str, ...]
    anchor: int  # index within `labels` of the tile containing the center
    delta: Scalar  # center minus left vertex of the anchor tile
    tol: float = 1e-9

    def offsets(self, lengths) -> list[Scalar]:
        """Vertex positions relative to the center."""
        start = -(self.delta + sum_lengths(lengths, self.labels[: self.anchor]))
        out = [start]
        for lab in self.labels:
            start = start + lengths[lab]
            out.append(start)
        return out

    def matches(self, other: "Patch") -> bool:
        return (
            self.labels == other.labels
            and self.anchor == other.anchor
            and scalars_close(self.radius, other.radius, max(self.tol, other.tol))
            and scalars_close(self.delta, other.delta, max(self.tol, other.tol))
        )

    def __eq__(self, other):
        if not isinstance(other, Patch):
            return NotImplemented
        return self.matches(other)

    def __hash__(self):
        return hash((self.labels, self.anchor))


def sum_lengths(lengths, labels: Sequence[str]):
    total = 0
    for lab in labels:
        total = total + lengths[lab]
    return total


@dataclass(frozen=True)
class TilingWindow:
    system: TilingSystem
    codes: np.ndarray  # int16 label codes, one per tile
    origin_index: int  # vertex index sitting at coordinate 0
    provenance: dict = field(default_factory=dict)
    _caches: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.origin_index <= len(self.codes):
            raise TilingError("origin index outside the window")

    # -- basic geometry ------------------------------------------------------

    def __len__(self):
        return len(self.codes)

    @property
    def tol(self) -> float:
        return self.system.tolerance

    @property
    def labels(self) -> tuple[str, ...]:
        if "labels" not in self._caches:
            alpha = self.system.alphabet
            self._caches["labels"] = tuple(alpha[c] for c in self.codes)
        return self._caches["labels"]

    @property
    def vertices_float(self) -> np.ndarray:
        if "vf" not in self._caches:
            lens = np.array(
                [as_float(self.system.lengths[a]) for a in self.system.alphabet]
            )
            v = np.concatenate([[0.0], np.cumsum(lens[self.codes])])
            self._caches["vf"] = v - v[self.origin_index]
        return self._caches["vf"]

    @property
    def prefix_counts(self) -> np.ndarray:
        """prefix_counts[c, i] = occurrences of letter code c among tiles [0, i)."""
        if "pc" not in self._caches:
            a = len(self.system.alphabet)
            pc = np.zeros((a, len(self.codes) + 1), dtype=np.int64)
            for c in range(a):
                pc[c, 1:] = np.cumsum(self.codes == c)
            self._caches["pc"] = pc
        return self._caches["pc"]

    def vertex(self, i: int) -> Scalar:
        """Exact coordinate of vertex i (exact mode) or its float value."""
        if self.system.mode != "exact":
            return float(self.vertices_float[i])
        if "origin_exact" not in self._caches:
            self._caches["origin_exact"] = self._prefix_sum(self.origin_index)
        return self._prefix_sum(i) - self._caches["origin_exact"]

    def _prefix_sum(self, i: int) -> Scalar:
        pc = self.prefix_counts
        total = 0
        for c, ell in enumerate(self.system.alphabet):
            n = int(pc[c, i])
            if n:
                total = total + self.system.lengths[ell] * n
        return total

    def letter_count_between(self, label: str, i: int, j: int) -> int:
        c = self.system.alphabet.index(label)
        pc = self.prefix_counts
        return int(pc[c, j] - pc[c, i])

    @property
    def start(self) -> Scalar:
        return self.vertex(0)

    @property
    def end(self) -> Scalar:
        return self.vertex(len(self.codes))

    def label_of(self, i: int) -> str:
        return self.system.alphabet[int(self.codes[i])]

    def length_of(self, i: int) -> Scalar:
        return self.system.lengths[self.label_of(i)]

    # -- position lookup -----------------------------------------------------

    def tile_index(self, x: Scalar, left_closed: bool = True) -> int:
        """Tile i with vertex(i) <= x < vertex(i+1); with left_closed=False the
        convention flips to vertex(i) < x <= vertex(i+1)."""
        vf = self.vertices_float
        xf = as_float(x)
        if xf < vf[0] - self.tol or xf > vf[-1] + self.tol:
            raise WindowBoundaryError(f"position {xf} outside window [{vf[0]}, {vf[-1]}]")
        side = "right" if left_closed else "left"
        i = int(np.searchsorted(vf, xf, side=side)) - 1
        i = max(0, min(i, len(self.codes) - 1))
        if exact(x) and self.system.mode == "exact":
            if left_closed:
                while i > 0 and x < self.vertex(i):
                    i -= 1
                while i < len(self.codes) - 1 and x >= self.vertex(i + 1):
                    i += 1
            else:
                while i > 0 and x <= self.vertex(i):
                    i -= 1
                while i < len(self.codes) - 1 and x > self.vertex(i + 1):
                    i += 1
        return i

    def locate(self, x: Scalar) -> tuple[int, Scalar]:
        i = self.tile_index(x)
        return i, x - self.vertex(i)

    # -- patches ----------------------------------------------------------------

    def patch_at(self, x: Scalar, radius: Scalar) -> Patch:
        if as_float(radius) < 0:
            raise ValueError("patch radius must be >= 0")
        lo, hi = x - radius, x + radius
        if self._before_start(lo) or self._after_end(hi):
            raise WindowBoundaryError(
                f"patch [{as_float(lo):.6g}, {as_float(hi):.6g}] touches the window "
                f"boundary; grow the window or shrink the radius"
            )
        i, delta = self.locate(x)
        il = self.tile_index(lo)
        ir = self.tile_index(hi, left_closed=False)
        return Patch(
            radius=radius,
            labels=self.labels[il : ir + 1],
            anchor=i - il,
            delta=delta,
            tol=self.tol,
        )

    def _before_start(self, x: Scalar) -> bool:
        if exact(x) and self.system.mode == "exact":
            return x < self.start
        return as_float(x) < float(self.vertices_float[0]) - self.tol

    def _after_end(self, x: Scalar) -> bool:
        if exact(x) and self.system.mode == "exact":
            return x > self.end
        return as_float(x) > float(self.vertices_float[-1]) + self.tol

    def return_points(self, x0: Scalar, radius: Scalar,
                      limit: int | None = None) -> list[Scalar]:
        """Ascending positions x (x0 included) whose radius-`radius` patch
        matches the one at x0."""
        ref = self.patch_at(x0, radius)
        i0, delta = self.locate(x0)
        il = self.tile_index(x0 - radius)
        ir = self.tile_index(x0 + radius, left_closed=False)
        lo, hi = il - i0, ir - i0
        span = hi - lo + 1
        ref_row = self.codes[i0 + lo : i0 + hi + 1]
        candidates = np.flatnonzero(self.codes == self.codes[i0])
        candidates = candidates[(candidates + lo >= 0) & (candidates + hi < len(self.codes))]
        if span > 1:
            view = np.lib.stride_tricks.sliding_window_view(self.codes, span)
            hits = candidates[(view[candidates + lo] == ref_row).all(axis=1)]
        else:
            hits = candidates
        out: list[Scalar] = []
        for j in hits:
            x = self.vertex(int(j)) + delta
            if self._before_start(x - radius) or self._after_end(x + radius):
                continue
            out.append(x)
            if limit is not None and len(out) >= limit:
                break
        return out

    # -- collared encodings ---------------------------------------------------

    def collared_encoding(self, depth: int) -> np.ndarray:
        """Per-tile encoded (2*depth+1)-gram of label codes, base |alphabet|.

        Edge tiles without full context get -1; evaluating a pattern-sensitive
        quantity there is a boundary error at the caller.
        """
        key = ("enc", depth)
        if key in self._caches:
            return self._caches[key]
        if depth == 0:
            enc = self.codes.astype(np.int64)
        else:
            a = len(self.system.alphabet)
            n = len(self.codes)
            enc = np.full(n, -1, dtype=np.int64)
            if n >= 2 * depth + 1:
                acc = np.zeros(n - 2 * depth, dtype=np.int64)
                for t in range(2 * depth + 1):
                    acc = acc * a + self.codes[t : t + n - 2 * depth]
                enc[depth : n - depth] = acc
            self._caches[key] = enc
            return enc
        self._caches[key] = enc
        return enc

    def first_valid_tile(self, depth: int) -> int:
        return depth

    def last_valid_tile(self, depth: int) -> int:
        return len(self.codes) - 1 - depth


def encode_collared_label(system: TilingSystem, collared, depth: int) -> int:
    """Encode ((l_-k..l_-1), l, (l_1..l_k)) the same way windows do."""
    left, center, right = collared
    if len(left) != depth or len(right) != depth:
        raise ValueError(f"collared label {collared!r} has the wrong depth")
    a = len(system.alphabet)
    acc = 0
    for lab in (*left, center, *right):
        acc = acc * a + system.alphabet.index(lab)
    return acc


def build_window(system: TilingSystem, level: int, seed=None,
                 origin: str | int = "left") -> TilingWindow:
    """Materialize a level-`level` supertile (or a two-sided pair) with the
    origin placed at a vertex.

    `seed` is a supertile name, or a (left, right) pair of names expanded and
    joined at the origin.  `origin` may be "left", "center", "junction"
    (two-sided seeds), or an explicit vertex index.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    seed = seed if seed is not None else system.seed
    if isinstance(seed, str):
        codes = system.expand_array(seed, level) if level > 0 else _single(system, seed)
        junction = None
    else:
        left_name, right_name = seed
        left = system.expand_array(left_name, level) if level > 0 else _single(system, left_name)
        right = system.expand_array(right_name, level) if level > 0 else _single(system, right_name)
        pair = (system.alphabet[left[-1]], system.alphabet[right[0]])
        if pair not in system.legal_factors(2):
            raise TilingError(f"seed junction {pair[0]!r}|{pair[1]!r} is not a legal factor")
        codes = np.concatenate([left, right])
        junction = len(left)
    if isinstance(origin, int):
        origin_index = origin
    elif origin == "left":
        origin_index = 0
    elif origin == "center":
        origin_index = len(codes) // 2
    elif origin == "junction":
        if junction is None:
            raise ValueError("'junction' origin needs a two-sided seed")
        origin_index = junction
    else:
        raise ValueError(f"unknown origin spec {origin!r}")
    if junction is not None and origin == "junction":
        origin_index = junction
    return TilingWindow(
        system=system,
        codes=codes,
        origin_index=origin_index,
        provenance={"system": system.name, "level": level, "seed": seed,
                    "origin": origin},
    )


def _single(system: TilingSystem, name: str) -> np.ndarray:
    if name not in system.alphabet:
        raise UnknownLabelError(f"level-0 window needs a letter, got {name!r}")
    return np.array([system.alphabet.index(name)], dtype=np.int16)


def patch_at(window: TilingWindow, x: Scalar, radius: Scalar) -> Patch:
    return window.patch_at(x, radius)


def match_patches(p1: Patch, p2: Patch) -> bool:
    return p1.matches(p2)


def return_points(window: TilingWindow, x0: Scalar, radius: Scalar,
                  limit: int | None = None) -> list[Scalar]:
    return window.return_points(x0, radius, limit=limit)
