"""Pattern-equivariant 1-forms: integration, cohomology probes, growth.

A form assigns each collared tile a density profile on [0, L]; the value of
the density at a point depends only on the pattern within the form's radius,
which is exactly strong pattern equivariance.  Uniform-density profiles with
exact weights keep every integral in the ground field; sampled profiles are
piecewise linear between equally spaced knots and integrate deterministically
(trapezoid values at knots, exact integral of the interpolant in between).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .scalars import QuadraticNumber, Scalar, as_float, exact
from .systems import CollarError, TilingError, TilingSystem, rle_letters
from .windows import TilingWindow, WindowBoundaryError, encode_collared_label

_token_counter = itertools.count()


class FormError(TilingError):
    pass


@dataclass(frozen=True)
class TileProfile:
    """Density on one collared tile: uniform (samples None) or piecewise
    linear through `samples` at equally spaced knots spanning [0, L]."""

    weight: Scalar
    samples: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.samples is not None:
            s = tuple(float(v) for v in self.samples)
            if len(s) < 2:
                raise FormError("sampled profiles need at least two knots")
            object.__setattr__(self, "samples", s)

    def scaled(self, c: Scalar) -> "TileProfile":
        samples = None
        if self.samples is not None:
            cf = as_float(c)
            samples = tuple(v * cf for v in self.samples)
        return TileProfile(weight=self.weight * c, samples=samples)


def _collared_key(key, depth: int):
    if depth == 0:
        if not isinstance(key, str):
            raise FormError(f"depth-0 profiles are keyed by bare labels, got {key!r}")
        return key
    left, center, right = key
    return (tuple(left), center, tuple(right))


@dataclass(frozen=True)
class SpeForm:
    system: TilingSystem
    depth: int
    profiles: Mapping
    name: str = ""
    _token: int = field(default_factory=lambda: next(_token_counter), compare=False)
    _caches: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        norm = {_collared_key(k, self.depth): v for k, v in dict(self.profiles).items()}
        object.__setattr__(self, "profiles", norm)

    # -- structural helpers ---------------------------------------------------

    @property
    def radius(self) -> Scalar:
        if self.depth == 0:
            return 0
        min_len = min(self.system.lengths.values(), key=as_float)
        return min_len * self.depth

    @property
    def uniform(self) -> bool:
        return all(p.samples is None for p in self.profiles.values())

    @property
    def all_exact(self) -> bool:
        return self.uniform and all(exact(p.weight) for p in self.profiles.values())

    def is_positive(self) -> bool:
        for p in self.profiles.values():
            if p.samples is None:
                if as_float(p.weight) <= 0:
                    return False
            elif min(p.samples) <= 0:
                return False
        return True

    def profile_for(self, key) -> TileProfile:
        k = key if self.depth else key
        try:
            return self.profiles[k]
        except KeyError:
            raise FormError(
                f"form {self.name or self._token} has no profile for context {k!r}"
            ) from None

    def weight_of(self, key) -> Scalar:
        return self.profile_for(key).weight

    # -- algebra ---------------------------------------------------------------

    def at_depth(self, depth: int) -> "SpeForm":
        """Re-express the form on the depth-`depth` collared alphabet."""
        if depth < self.depth:
            raise FormError("cannot reduce collar depth of a form")
        if depth == self.depth:
            return self
        out = {}
        for left, center, right in self.system.collar(depth).labels:
            if self.depth == 0:
                inner = center
            else:
                k = self.depth
                inner = (left[-k:], center, right[:k])
            out[(left, center, right)] = self.profiles[_collared_key(inner, self.depth)]
        return SpeForm(self.system, depth, out, name=self.name)

    def __add__(self, other: "SpeForm") -> "SpeForm":
        if not isinstance(other, SpeForm):
            return NotImplemented
        if other.system is not self.system:
            raise FormError("cannot add forms over different systems")
        depth = max(self.depth, other.depth)
        a, b = self.at_depth(depth), other.at_depth(depth)
        out = {}
        for key, pa in a.profiles.items():
            pb = b.profiles[key]
            out[key] = _add_profiles(pa, pb, self._tile_length(key, depth))
        return SpeForm(self.system, depth, out)

    def __sub__(self, other: "SpeForm") -> "SpeForm":
        return self + (other * -1)

    def __mul__(self, c: Scalar) -> "SpeForm":
        return SpeForm(
            self.system,
            self.depth,
            {k: p.scaled(c) for k, p in self.profiles.items()},
            name=f"{self.name}*{c}" if self.name else "",
        )

    __rmul__ = __mul__

    def _tile_length(self, key, depth: int) -> Scalar:
        label = key if depth == 0 else key[1]
        return self.system.lengths[label]

    # -- window-side lookups ----------------------------------------------------

    def _lookup(self, window: TilingWindow):
        key = ("form-lookup", self._token)
        if key in window._caches:
            return window._caches[key]
        a = len(self.system.alphabet)
        size = a ** (2 * self.depth + 1)
        weights = np.full(size, np.nan)
        exact_weights: dict[int, Scalar] = {}
        samples: dict[int, tuple] = {}
        for k, p in self.profiles.items():
            if self.depth == 0:
                enc = self.system.alphabet.index(k)
            else:
                enc = encode_collared_label(self.system, k, self.depth)
            weights[enc] = as_float(p.weight)
            exact_weights[enc] = p.weight
            if p.samples is not None:
                samples[enc] = p.samples
        out = (weights, exact_weights, samples)
        window._caches[key] = out
        return out

    def cumulative_weights(self, window: TilingWindow) -> tuple[np.ndarray, np.ndarray]:
        """(cw, bad): cw[i] = float integral over tiles [0, i) with missing
        contexts zeroed out; bad[i] counts missing-context tiles in [0, i),
        so a span [i, j) is trustworthy iff bad[j] == bad[i]."""
        key = ("form-cumw", self._token)
        if key in window._caches:
            return window._caches[key]
        weights, _, _ = self._lookup(window)
        enc = window.collared_encoding(self.depth)
        w = np.where(enc >= 0, weights[np.clip(enc, 0, None)], np.nan)
        missing = np.isnan(w)
        cw = np.concatenate([[0.0], np.cumsum(np.where(missing, 0.0, w))])
        bad = np.concatenate([[0], np.cumsum(missing)])
        out = (cw, bad)
        window._caches[key] = out
        return out

    def tile_weight(self, window: TilingWindow, i: int, want_exact: bool):
        enc = window.collared_encoding(self.depth)
        e = int(enc[i])
        if e < 0:
            raise WindowBoundaryError(
                f"tile {i} lacks the depth-{self.depth} context this form needs"
            )
        weights, exact_weights, _ = self._lookup(window)
        if math.isnan(weights[e]):
            raise FormError(f"form has no profile for the context of tile {i}")
        return exact_weights[e] if want_exact else float(weights[e])

    def partial_integral(self, window: TilingWindow, i: int, delta: Scalar,
                         want_exact: bool):
        """Integral over [vertex(i), vertex(i) + delta] within tile i."""
        enc = window.collared_encoding(self.depth)
        e = int(enc[i])
        if e < 0:
            raise WindowBoundaryError(
                f"tile {i} lacks the depth-{self.depth} context this form needs"
            )
        weights, exact_weights, samples = self._lookup(window)
        if math.isnan(weights[e]):
            raise FormError(f"form has no profile for the context of tile {i}")
        length = window.length_of(i)
        if e not in samples:
            w = exact_weights[e] if want_exact else float(weights[e])
            if want_exact and exact(w) and exact(delta) and exact(length):
                return w * delta / length
            return as_float(w) * as_float(delta) / as_float(length)
        return _sampled_cumulative(samples[e], as_float(length), as_float(delta))


def _add_profiles(pa: TileProfile, pb: TileProfile, length: Scalar) -> TileProfile:
    weight = pa.weight + pb.weight
    if pa.samples is None and pb.samples is None:
        return TileProfile(weight=weight)
    m = max(
        len(pa.samples) if pa.samples else 2,
        len(pb.samples) if pb.samples else 2,
    )
    lf = as_float(length)
    grid = np.linspace(0.0, lf, m)
    da = _density_on(pa, grid, lf)
    db = _density_on(pb, grid, lf)
    return TileProfile(weight=weight, samples=tuple(da + db))


def _density_on(p: TileProfile, grid: np.ndarray, length: float) -> np.ndarray:
    if p.samples is None:
        return np.full(len(grid), as_float(p.weight) / length)
    knots = np.linspace(0.0, length, len(p.samples))
    return np.interp(grid, knots, p.samples)


def _sampled_cumulative(samples: tuple, length: float, delta: float) -> float:
    """Exact integral of the piecewise-linear density over [0, delta]."""
    m = len(samples) - 1
    h = length / m
    if delta <= 0:
        return 0.0
    delta = min(delta, length)
    j = min(int(delta / h), m - 1)
    acc = 0.0
    for t in range(j):
        acc += 0.5 * (samples[t] + samples[t + 1]) * h
    u = delta - j * h
    d0, d1 = samples[j], samples[j + 1]
    acc += d0 * u + 0.5 * (d1 - d0) * u * u / h
    return acc


# -- canonical forms -----------------------------------------------------------


def dx_form(system: TilingSystem) -> SpeForm:
    return SpeForm(
        system, 0,
        {ell: TileProfile(weight=system.lengths[ell]) for ell in system.alphabet},
        name="dx",
    )


def indicator_form(system: TilingSystem, label: str) -> SpeForm:
    if label not in system.alphabet:
        raise FormError(f"unknown label {label!r}")
    one = QuadraticNumber(1) if system.mode == "exact" else 1.0
    zero = QuadraticNumber(0) if system.mode == "exact" else 0.0
    return SpeForm(
        system, 0,
        {ell: TileProfile(weight=one if ell == label else zero)
         for ell in system.alphabet},
        name=f"i:{label}",
    )


def form_from_weights(system: TilingSystem, depth: int, weights: Mapping,
                      name: str = "") -> SpeForm:
    return SpeForm(
        system, depth,
        {k: TileProfile(weight=w) for k, w in dict(weights).items()},
        name=name,
    )


def zero_form(system: TilingSystem) -> SpeForm:
    zero = QuadraticNumber(0) if system.mode == "exact" else 0.0
    return form_from_weights(
        system, 0, {ell: zero for ell in system.alphabet}, name="0"
    )


# -- integration ----------------------------------------------------------------


def integrate(form: SpeForm, window: TilingWindow, x1: Scalar, x2: Scalar) -> Scalar:
    """Signed integral of the form over [x1, x2]; exact when everything is."""
    if form.system is not window.system:
        raise FormError("form and window belong to different systems")
    want_exact = (
        form.all_exact
        and window.system.mode == "exact"
        and exact(x1)
        and exact(x2)
    )
    if not want_exact and as_float(x1) == as_float(x2):
        return 0.0
    sign = 1
    if (x1 > x2) if want_exact else (as_float(x1) > as_float(x2)):
        x1, x2, sign = x2, x1, -1
    i1, d1 = window.locate(x1)
    i2, d2 = window.locate(x2)
    if i1 == i2:
        total = form.partial_integral(window, i1, d2, want_exact) - \
            form.partial_integral(window, i1, d1, want_exact)
        return total * sign if want_exact else float(total) * sign
    head = form.tile_weight(window, i1, want_exact) - \
        form.partial_integral(window, i1, d1, want_exact)
    tail = form.partial_integral(window, i2, d2, want_exact)
    if want_exact:
        middle = _exact_span_weight(form, window, i1 + 1, i2)
        return (head + middle + tail) * sign
    cw, bad = form.cumulative_weights(window)
    if bad[i2] != bad[i1 + 1]:
        raise WindowBoundaryError(
            "integral crosses tiles without enough collar context"
        )
    middle = float(cw[i2] - cw[i1 + 1])
    return (as_float(head) + middle + as_float(tail)) * sign


def _exact_span_weight(form: SpeForm, window: TilingWindow, i: int, j: int) -> Scalar:
    """Exact sum of tile weights over tile indices [i, j)."""
    if j <= i:
        return QuadraticNumber(0)
    if form.depth == 0:
        total: Scalar = QuadraticNumber(0)
        for ell in form.system.alphabet:
            n = window.letter_count_between(ell, i, j)
            if n:
                total = total + form.profiles[ell].weight * n
        return total
    enc = window.collared_encoding(form.depth)
    segment = enc[i:j]
    if segment.min(initial=0) < 0:
        raise WindowBoundaryError(
            "integral crosses tiles without enough collar context"
        )
    _, exact_weights, _ = form._lookup(window)
    values, counts = np.unique(segment, return_counts=True)
    total = QuadraticNumber(0)
    for e, n in zip(values, counts):
        total = total + exact_weights[int(e)] * int(n)
    return total


# -- growth classification --------------------------------------------------------


@dataclass(frozen=True)
class GrowthProbe:
    kind: str  # "bounded" | "linear" | "inconclusive"
    sup: float
    slope: float
    r_squared: float
    horizon: float
    trace: tuple = ()  # (x, running sup) pairs, downsampled

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "sup": self.sup,
            "slope": self.slope,
            "r_squared": self.r_squared,
            "horizon": self.horizon,
        }


TAU_GROWTH = 1e-3
R2_MIN = 0.99
STABLE_FRACTION = 0.05


def classify_growth(xs: np.ndarray, sups: np.ndarray,
                    tau_growth: float = TAU_GROWTH,
                    r2_min: float = R2_MIN,
                    stable_fraction: float = STABLE_FRACTION) -> tuple[str, float, float]:
    """Classify a running-sup trace as bounded, linear, or inconclusive.

    Bounded: the sup gains at most `stable_fraction` (relative) over the last
    decade of lengths.  Linear: a least-squares fit over that decade has slope
    above `tau_growth` with R^2 above `r2_min`.
    """
    xs = np.asarray(xs, dtype=float)
    sups = np.asarray(sups, dtype=float)
    if len(xs) < 8 or xs[-1] <= 0:
        return "inconclusive", 0.0, 0.0
    mask = xs >= xs[-1] / 10.0
    if mask.sum() < 8:
        return "inconclusive", 0.0, 0.0
    x, s = xs[mask], sups[mask]
    gain = s[-1] - s[0]
    final = s[-1]
    slope, intercept = np.polyfit(x, s, 1)
    pred = slope * x + intercept
    ss_res = float(((s - pred) ** 2).sum())
    ss_tot = float(((s - s.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    if gain <= max(stable_fraction * final, 1e-12):
        return "bounded", float(slope), float(r2)
    if slope > tau_growth and r2 > r2_min:
        return "linear", float(slope), float(r2)
    return "inconclusive", float(slope), float(r2)


def an_probe(form: SpeForm, window: TilingWindow, horizon: float,
              trace_points: int = 64) -> GrowthProbe:
    """Probe asymptotic negligibility: running sup of |integral over [0, x]|
    for vertices x in (0, horizon], with a growth classification.

    Bounded integrals are the finite-horizon signature of an asymptotically
    negligible class; the verdict is a semi-decision and is labeled as such.
    """
    vf = window.vertices_float
    origin = window.origin_index
    horizon = float(horizon)
    if vf[-1] < horizon:
        raise WindowBoundaryError(
            f"window ends at {vf[-1]:.6g}, before the horizon {horizon:.6g}"
        )
    cw, bad = form.cumulative_weights(window)
    j_end = int(np.searchsorted(vf, horizon, side="right")) - 1
    if bad[j_end] != bad[origin]:
        raise WindowBoundaryError("probe range lacks collar context somewhere")
    prefix = cw[origin : j_end + 1] - cw[origin]
    xs = vf[origin : j_end + 1]
    sups = np.maximum.accumulate(np.abs(prefix))
    kind, slope, r2 = classify_growth(xs[1:], sups[1:])
    stride = max(1, len(xs) // trace_points)
    trace = tuple((float(x), float(s)) for x, s in zip(xs[::stride], sups[::stride]))
    return GrowthProbe(
        kind=kind,
        sup=float(sups[-1]),
        slope=slope,
        r_squared=r2,
        horizon=horizon,
        trace=trace,
    )


# -- supertile integrals -----------------------------------------------------------


@dataclass(frozen=True)
class SupertileIntegralTable:
    form_name: str
    depth: int
    levels: Mapping[int, Mapping[str, tuple]]
    least_equal_level: int | None

    def values_at(self, level: int, name: str) -> tuple:
        return self.levels[level][name]

    def equal_at(self, level: int) -> bool:
        distinct = set()
        for values in self.levels[level].values():
            distinct.update(as_float(v) for v in values)
        if len(distinct) <= 1:
            return True
        lo, hi = min(distinct), max(distinct)
        return math.isclose(lo, hi, rel_tol=1e-12, abs_tol=1e-12)


def _adjacencies(system: TilingSystem, top_level: int) -> dict[int, set]:
    """Legal (left, right) supertile adjacencies per level.

    For fusion systems the structure at the top declared level is assumed
    stationary (the schedule represents an infinite hierarchy); adjacency is
    then closed off downward via word-internal pairs and boundary pairs.
    """
    if system.is_substitution:
        pairs = {(a, b) for a, b in system.legal_factors(2)}
        return {j: set(pairs) for j in range(0, top_level + 1)}
    adj: dict[int, set] = {j: set() for j in range(0, top_level + 1)}
    for j in range(1, top_level + 1):
        for name in system.supertile_names:
            word = [c for c, n in system.components(name, j) for _ in range(min(n, 2))]
            adj[j - 1].update(zip(word, word[1:]))
    adj[top_level] = set(adj[top_level - 1]) if top_level >= 1 else set()
    for _ in range(top_level + 2):
        changed = False
        for j in range(top_level, 0, -1):
            for left, right in list(adj[j]):
                lw = system.components(left, j)
                rw = system.components(right, j)
                pair = (lw[-1][0], rw[0][0])
                if pair not in adj[j - 1]:
                    adj[j - 1].add(pair)
                    changed = True
        if not changed:
            break
    return adj


def supertile_integrals(form: SpeForm, system: TilingSystem,
                        up_to_level: int) -> SupertileIntegralTable:
    """Integrals of the form over each supertile, per occurrence context.

    Context-sensitive near supertile edges (the form may need neighbors), so
    each level reports the set of distinct values over the contexts that
    occur.  Also reports the least level from which all supertile integrals
    coincide across names and contexts, through `up_to_level`.
    """
    if form.system is not system:
        raise FormError("form belongs to a different system")
    k = form.depth
    if up_to_level < 1:
        raise ValueError("up_to_level must be >= 1")
    if not system.is_substitution and up_to_level > system.max_level:
        raise TilingError(
            f"level {up_to_level} exceeds the declared schedule ({system.max_level})"
        )
    memo: dict = {}

    def edge(name: str, level: int, side: str) -> tuple[str, ...]:
        return system.edge_letters(name, level, k, side) if k else ()

    def integral(name: str, level: int, lctx: tuple, rctx: tuple) -> Scalar:
        key = (name, level, lctx, rctx)
        if key in memo:
            return memo[key]
        if level == 0:
            out = form.weight_of(name if k == 0 else (lctx, name, rctx))
        elif level == 1 or k > 0 and _min_letters(system, level - 1) < k:
            letters = _materialized_letters(system, name, level)
            padded = list(lctx) + letters + list(rctx)
            out = QuadraticNumber(0) if form.all_exact else 0.0
            for t in range(len(letters)):
                i = t + len(lctx)
                ctx_key = (
                    letters[t] if k == 0 else
                    (tuple(padded[i - k : i]), padded[i], tuple(padded[i + 1 : i + 1 + k]))
                )
                out = out + form.weight_of(ctx_key)
        else:
            entries = system.components(name, level)
            firsts = [edge(c, level - 1, "first") for c, _ in entries]
            lasts = [edge(c, level - 1, "last") for c, _ in entries]
            out = QuadraticNumber(0) if form.all_exact else 0.0
            for t, (comp, count) in enumerate(entries):
                left_out = lasts[t - 1] if t > 0 else lctx
                right_out = firsts[t + 1] if t + 1 < len(entries) else rctx
                if count == 1:
                    out = out + integral(comp, level - 1, left_out, right_out)
                else:
                    first = integral(comp, level - 1, left_out, firsts[t])
                    last = integral(comp, level - 1, lasts[t], right_out)
                    out = out + first + last
                    if count > 2:
                        inner = integral(comp, level - 1, lasts[t], firsts[t])
                        out = out + inner * (count - 2)
        memo[key] = out
        return out

    top = up_to_level
    adj = _adjacencies(system, top)
    contexts: dict[tuple[str, int], set] = {}
    names = system.supertile_names
    for name in names:
        lefts = {edge(p, top, "last") for p, q in adj[top] if q == name} or {()}
        rights = {edge(s, top, "first") for p, s in adj[top] if p == name} or {()}
        contexts[(name, top)] = {(l, r) for l in lefts for r in rights}
    for level in range(top, 1, -1):
        for name in names:
            entries = system.components(name, level)
            firsts = [edge(c, level - 1, "first") for c, _ in entries]
            lasts = [edge(c, level - 1, "last") for c, _ in entries]
            for lctx, rctx in contexts.get((name, level), set()):
                for t, (comp, count) in enumerate(entries):
                    left_out = lasts[t - 1] if t > 0 else lctx
                    right_out = firsts[t + 1] if t + 1 < len(entries) else rctx
                    sub = contexts.setdefault((comp, level - 1), set())
                    if count == 1:
                        sub.add((left_out, right_out))
                    else:
                        sub.add((left_out, firsts[t]))
                        sub.add((lasts[t], right_out))
                        if count > 2:
                            sub.add((lasts[t], firsts[t]))

    levels: dict[int, dict[str, tuple]] = {}
    for level in range(1, top + 1):
        table: dict[str, tuple] = {}
        for name in names:
            ctxs = contexts.get((name, level), set())
            if not ctxs and k == 0:
                ctxs = {((), ())}
            values = sorted(
                {integral(name, level, l, r) for l, r in ctxs},
                key=as_float,
            )
            table[name] = tuple(values)
        levels[level] = table

    least: int | None = None
    table_obj = SupertileIntegralTable(
        form_name=form.name, depth=k, levels=levels, least_equal_level=None
    )
    for level in range(1, top + 1):
        if all(table_obj.equal_at(j) for j in range(level, top + 1)):
            least = level
            break
    return SupertileIntegralTable(
        form_name=form.name, depth=k, levels=levels, least_equal_level=least
    )


def _min_letters(system: TilingSystem, level: int) -> int:
    counts = [
        sum(system.supertile_letter_counts(n, level).values())
        for n in (system.supertile_names if level else system.alphabet)
    ]
    return min(counts)


def _materialized_letters(system: TilingSystem, name: str, level: int) -> list[str]:
    arr = system.expand_array(name, level)
    return [system.alphabet[c] for c in arr]


# -- functions and coboundaries -------------------------------------------------------


@dataclass(frozen=True)
class SpeFunction:
    """A pattern-equivariant function given by its values at collared vertices.

    The value at the vertex between tiles i-1 and i depends on the `depth`
    labels on each side; within tiles the function interpolates linearly, so
    adjacent tiles automatically agree at shared vertices.
    """

    system: TilingSystem
    depth: int
    vertex_values: Mapping[tuple, Scalar]  # (left tuple, right tuple) -> value

    def __post_init__(self):
        norm = {
            (tuple(l), tuple(r)): v for (l, r), v in dict(self.vertex_values).items()
        }
        object.__setattr__(self, "vertex_values", norm)

    def value_at_vertex(self, window: TilingWindow, i: int) -> Scalar:
        k = self.depth
        if i - k < 0 or i + k > len(window.codes):
            raise WindowBoundaryError(f"vertex {i} lacks depth-{k} context")
        left = window.labels[i - k : i]
        right = window.labels[i : i + k]
        try:
            return self.vertex_values[(tuple(left), tuple(right))]
        except KeyError:
            raise FormError(f"no value for vertex context {(left, right)!r}") from None

    def evaluate(self, window: TilingWindow, x: Scalar) -> float:
        i, delta = window.locate(x)
        v0 = as_float(self.value_at_vertex(window, i))
        v1 = as_float(self.value_at_vertex(window, i + 1))
        u = as_float(delta) / as_float(window.length_of(i))
        return v0 + (v1 - v0) * u

    def max_abs(self) -> float:
        return max(abs(as_float(v)) for v in self.vertex_values.values())

    def derivative(self) -> SpeForm:
        """dg as a form: per-collared-tile weight = right value - left value."""
        k = self.depth
        if k == 0:
            raise FormError("a depth-0 function is constant; dg would be zero")
        weights = {}
        for gram in self.system.legal_factors(2 * k + 1):
            left, center, right = gram[:k], gram[k], gram[k + 1 :]
            lv = self.vertex_values[(left, (center,) + right[: k - 1])]
            rv = self.vertex_values[(left[1:] + (center,), right)]
            weights[(left, center, right)] = rv - lv
        return form_from_weights(self.system, k, weights, name="dg")


def random_spe_function(system: TilingSystem, depth: int, rng,
                        magnitude: float = 1.0) -> SpeFunction:
    """Deterministic pseudo-random function for property tests: one rational
    value per legal vertex context."""
    contexts = set()
    for gram in system.legal_factors(2 * depth):
        contexts.add((gram[:depth], gram[depth:]))
    values = {
        ctx: Fraction(rng.randrange(-64, 65), 64) * Fraction(int(magnitude * 16), 16)
        for ctx in sorted(contexts)
    }
    if system.mode == "exact":
        values = {k: QuadraticNumber(v) for k, v in values.items()}
    else:
        values = {k: float(v) for k, v in values.items()}
    return SpeFunction(system, depth, values)


# -- cohomology coordinates and probes ---------------------------------------------


@dataclass(frozen=True)
class CohomologyCoordinates:
    system: TilingSystem
    depth: int
    weights: Mapping

    def __post_init__(self):
        norm = {_collared_key(key, self.depth): v for key, v in dict(self.weights).items()}
        object.__setattr__(self, "weights", norm)


def cohomology_coordinates(form: SpeForm, depth: int) -> CohomologyCoordinates:
    lifted = form.at_depth(depth)
    return CohomologyCoordinates(
        system=form.system,
        depth=depth,
        weights={k: p.weight for k, p in lifted.profiles.items()},
    )


def coboundary_probe(c1: CohomologyCoordinates, c2: CohomologyCoordinates,
                     window: TilingWindow | None = None,
                     window_level: int = 14,
                     pair_budget: int = 200,
                     supertile_levels: int = 3) -> dict:
    """Semi-decide whether two coordinate vectors can be cohomologous.

    "distinct" comes with a certificate: a matched-patch return pair whose
    integrals differ (the integral of a coboundary over such a pair is 0).
    "cohomologous-consistent" only asserts that every tested necessary
    condition passed.
    """
    if c1.system is not c2.system:
        raise FormError("coordinates over different systems")
    if c1.depth != c2.depth:
        raise FormError(f"mismatched collar depths: {c1.depth} vs {c2.depth}")
    system = c1.system
    diff = {
        key: c1.weights[key] - c2.weights[key] for key in c1.weights
    }
    if set(c1.weights) != set(c2.weights):
        raise FormError("coordinate vectors cover different collared alphabets")
    delta_form = form_from_weights(system, c1.depth, diff, name="difference")
    if window is None:
        window = _default_probe_window(system, window_level)
    depth = c1.depth
    radius = delta_form.radius if depth else min(system.lengths.values(), key=as_float)
    tol = system.tolerance

    tested = 0
    base_positions = _probe_base_points(window, depth)
    for x0 in base_positions:
        try:
            points = window.return_points(x0, radius)
        except WindowBoundaryError:
            continue
        for x in points[1:]:
            value = integrate(delta_form, window, x0, x)
            tested += 1
            bad = (value != 0) if exact(value) else abs(as_float(value)) > 10 * tol
            if bad:
                return {
                    "verdict": "distinct",
                    "certificate": {
                        "x1": as_float(x0),
                        "x2": as_float(x),
                        "integral_difference": as_float(value),
                        "weight_difference": {str(k): as_float(v)
                                              for k, v in diff.items()},
                    },
                    "pairs_tested": tested,
                }
            if tested >= pair_budget:
                break
        if tested >= pair_budget:
            break

    # Supertile integrals of the difference are reported as diagnostics only:
    # a coboundary integrates over a supertile to an edge-value difference,
    # which is generally nonzero, so they cannot decide distinctness.  Only
    # closed cycles (matched-patch return pairs) do.
    max_level = supertile_levels
    if not system.is_substitution:
        max_level = min(max_level, system.max_level)
    table = supertile_integrals(delta_form, system, max_level)
    diagnostics = {
        level: {name: [as_float(v) for v in values]
                for name, values in per_name.items()}
        for level, per_name in table.levels.items()
    }
    if tested < 10:
        return {"verdict": "inconclusive", "pairs_tested": tested,
                "supertile_difference": diagnostics,
                "note": "too few matched return pairs in the window"}
    return {"verdict": "cohomologous-consistent", "pairs_tested": tested,
            "supertile_difference": diagnostics}


def _default_probe_window(system: TilingSystem, level: int) -> TilingWindow:
    from .windows import build_window

    if not system.is_substitution:
        level = min(level, system.max_level)
    return build_window(system, level, origin="center")


def _probe_base_points(window: TilingWindow, depth: int) -> list:
    n = len(window.codes)
    picks = [n // 2, n // 3, 2 * n // 3, n // 4]
    out = []
    for i in picks:
        i = min(max(i, depth + 1), n - depth - 2)
        half = window.length_of(i) * Fraction(1, 2) \
            if window.system.mode == "exact" else as_float(window.length_of(i)) / 2
        out.append(window.vertex(i) + half)
    return out
