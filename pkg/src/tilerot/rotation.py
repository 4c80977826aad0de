"""Rotation-number estimation and rotation-form verification.

Estimates come with convergence diagnostics (Cauchy width over the last
decade of iterations) instead of error bounds: when the underlying space is
not uniquely ergodic the limit may genuinely fail to exist, so no estimator
here ever claims more than what the trace shows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .scalars import QuadraticNumber, Scalar, as_float, exact, floor_scalar
from .systems import TilingError, TilingSystem
from .windows import TilingWindow, WindowBoundaryError
from .forms import SpeForm, GrowthProbe, classify_growth, integrate
from .dynamics import MapError, OrbitTrace, SpeMap, iterate


class VerificationBudgetError(TilingError):
    pass


@dataclass(frozen=True)
class RotationEstimate:
    rho: float
    iterations: int
    cauchy_width: float
    truncated: bool
    note: str = ""
    trace: tuple = ()  # (n, rho_hat_n) checkpoints

    def to_dict(self) -> dict:
        return {
            "rho": self.rho,
            "iterations": self.iterations,
            "cauchy_width": self.cauchy_width,
            "truncated": self.truncated,
            "note": self.note,
        }


def rotation_number_estimate(mapping: SpeMap, window: TilingWindow, x0: Scalar,
                             n: int, direction: int = 1,
                             trace_points: int = 64) -> RotationEstimate:
    """Estimate the average drift (f^n(x) - x)/n along one orbit."""
    if not mapping.fixed_point_free:
        return RotationEstimate(
            rho=0.0, iterations=0, cauchy_width=0.0, truncated=False,
            note="map has fixed points; pattern equivariance makes their "
                 "positions relatively dense, so the average drift is 0",
        )
    trace = mapping.orbit(window, x0, n, direction=direction)
    m = trace.n_completed
    if m == 0:
        raise WindowBoundaryError("orbit left the window before the first step")
    ns = np.arange(1, m + 1)
    hats = (trace.positions[1:] - trace.positions[0]) / (ns * direction)
    decade = hats[ns >= max(1, m // 10)]
    width = float(decade.max() - decade.min()) if len(decade) else float("inf")
    stride = max(1, m // trace_points)
    checkpoints = tuple(
        (int(ns[i]), float(hats[i])) for i in range(0, m, stride)
    )
    return RotationEstimate(
        rho=float(hats[-1]),
        iterations=m,
        cauchy_width=width,
        truncated=trace.truncated,
        note="orbit truncated at the window edge" if trace.truncated else "",
        trace=checkpoints,
    )


def rho_from_form(form: SpeForm, window: TilingWindow, x0: Scalar,
                  radius: Scalar, min_points: int = 4) -> RotationEstimate:
    """Estimate the drift from return points: the ratio of the distance
    travelled to the integral of a positive form over it converges to the
    rotation number."""
    if not form.is_positive():
        raise TilingError("rho_from_form needs a positive form")
    points = window.return_points(x0, radius)
    forward = [x for x in points if as_float(x) > as_float(x0)]
    if len(forward) < min_points:
        raise WindowBoundaryError(
            f"only {len(forward)} return points past the base; grow the window"
        )
    ratios = []
    for x in forward:
        integral = integrate(form, window, x0, x)
        ratios.append((as_float(x) - as_float(x0)) / as_float(integral))
    tail = ratios[max(0, len(ratios) - max(min_points, len(ratios) // 10)) :]
    width = max(tail) - min(tail)
    return RotationEstimate(
        rho=ratios[-1],
        iterations=len(ratios),
        cauchy_width=float(width),
        truncated=False,
        trace=tuple((i + 1, float(r)) for i, r in enumerate(ratios)),
    )


# -- rotation-form verification ------------------------------------------------


@dataclass(frozen=True)
class VerificationReport:
    verdict: str  # "passes" | "fails"
    pairs_tested: int
    boundary_cases: int
    counterexample: dict | None
    radius: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "pairs_tested": self.pairs_tested,
            "boundary_cases": self.boundary_cases,
            "counterexample": self.counterexample,
            "radius": self.radius,
        }


class _OrbitPowers:
    """f^n(x) for growing n with an iteration budget, per base point."""

    def __init__(self, mapping: SpeMap, window: TilingWindow, budget: int):
        self.mapping = mapping
        self.window = window
        self.budget = budget
        self.spent = 0
        self.cache: dict = {}
        self.fast = hasattr(mapping, "closed_form") and mapping.closed_form

    def power(self, x: Scalar, n: int) -> Scalar:
        if n == 0:
            return x
        if self.fast:
            return self.mapping.power(self.window, x, n)
        key = as_float(x)
        orbit = self.cache.setdefault(key, [x])
        while len(orbit) <= n:
            self.spent += 1
            if self.spent > self.budget:
                raise VerificationBudgetError(
                    f"iterate budget {self.budget} exhausted before reaching "
                    f"f^{n}; raise the budget or shrink the window"
                )
            orbit.append(self.mapping.apply(self.window, orbit[-1]))
        return orbit[n]


def _bracketing_integers(value: Scalar, tol: float) -> tuple[int, int, bool]:
    """Integers n- < value < n+ (tight), widened when the value sits on or
    within tol of an integer; returns (n-, n+, boundary_case)."""
    if exact(value):
        if isinstance(value, QuadraticNumber):
            integral = value.is_integer()
        else:
            integral = Fraction(value).denominator == 1
        floor = floor_scalar(value)
        if integral:
            return floor - 1, floor + 1, True
        return floor, floor + 1, False
    v = float(value)
    nearest = round(v)
    if abs(v - nearest) <= tol:
        return nearest - 1, nearest + 1, True
    floor = math.floor(v)
    return floor, floor + 1, False


def _verification_pairs(window: TilingWindow, radius: Scalar,
                        pair_budget: int) -> list[tuple[Scalar, Scalar]]:
    """Matched-patch pairs, nearest-first, from a few spread base points."""
    n = len(window.codes)
    cap = max(64, int(math.isqrt(2 * pair_budget)) + 2)
    bases = []
    for frac in (Fraction(1, 2), Fraction(1, 3), Fraction(2, 3)):
        i = int(n * frac)
        i = min(max(i, 1), n - 2)
        if window.system.mode == "exact":
            off = window.length_of(i) * Fraction(1, 2)
        else:
            off = as_float(window.length_of(i)) / 2
        bases.append(window.vertex(i) + off)
    pairs: list[tuple[float, Scalar, Scalar]] = []
    seen = set()
    for x0 in bases:
        try:
            pts = window.return_points(x0, radius, limit=cap)
        except WindowBoundaryError:
            continue
        for i in range(len(pts)):
            for j in range(i + 1, len(pts)):
                key = (as_float(pts[i]), as_float(pts[j]))
                if key in seen:
                    continue
                seen.add(key)
                pairs.append((key[1] - key[0], pts[i], pts[j]))
    pairs.sort(key=lambda p: p[0])
    return [(a, b) for _, a, b in pairs[:pair_budget]]


def verify_rotation_form(mapping: SpeMap, form: SpeForm, window: TilingWindow,
                         pair_budget: int = 10_000,
                         iterate_budget: int = 2_000_000) -> VerificationReport:
    """Check the bracketing property on matched-patch pairs: whenever integers
    n- < integral(x1, x2) < n+, the point x2 must lie strictly between
    f^{n-}(x1) and f^{n+}(x1).

    Returns the first concrete counterexample if one exists.  Near-integer
    integrals in float mode are tested with the widened bracket and counted
    as boundary cases rather than strict passes.
    """
    radius = max(as_float(form.radius), as_float(mapping.radius))
    scalar_radius = radius if radius > 0 else 0
    pairs = _verification_pairs(window, scalar_radius, pair_budget)
    powers = _OrbitPowers(mapping, window, iterate_budget)
    tol = window.tol
    tested = 0
    boundary = 0
    for x1, x2 in pairs:
        integral = integrate(form, window, x1, x2)
        n_minus, n_plus, is_boundary = _bracketing_integers(integral, tol)
        if n_minus < 0:
            continue  # backward iterates are out of scope
        try:
            y_minus = powers.power(x1, n_minus)
            y_plus = powers.power(x1, n_plus)
        except WindowBoundaryError:
            continue
        tested += 1
        boundary += is_boundary
        lo, hi = (y_minus, y_plus) if as_float(y_minus) <= as_float(y_plus) \
            else (y_plus, y_minus)
        if exact(lo) and exact(hi) and exact(x2):
            ok = lo < x2 < hi
        else:
            ok = as_float(lo) < as_float(x2) < as_float(hi)
        if not ok:
            return VerificationReport(
                verdict="fails",
                pairs_tested=tested,
                boundary_cases=boundary,
                counterexample={
                    "x1": as_float(x1),
                    "x2": as_float(x2),
                    "integral": as_float(integral),
                    "n_minus": n_minus,
                    "n_plus": n_plus,
                    "f_n_minus": as_float(y_minus),
                    "f_n_plus": as_float(y_plus),
                },
                radius=radius,
            )
    return VerificationReport(
        verdict="passes",
        pairs_tested=tested,
        boundary_cases=boundary,
        counterexample=None,
        radius=radius,
    )


# -- rho-boundedness -------------------------------------------------------------


@dataclass(frozen=True)
class BoundednessReport:
    kind: str
    sup: float
    slope: float
    r_squared: float
    rho: float
    samples: int
    iterations: int
    truncated_samples: int

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "sup": self.sup, "slope": self.slope,
            "r_squared": self.r_squared, "rho": self.rho,
            "samples": self.samples, "iterations": self.iterations,
            "truncated_samples": self.truncated_samples,
        }


def rho_bounded_probe(mapping: SpeMap, window: TilingWindow, rho: float,
                      n: int, sample_count: int = 6) -> BoundednessReport:
    """Probe sup_n |f^n(x) - x - n rho| over several start points, classified
    with the same growth rules as the form-integral probe."""
    if not mapping.fixed_point_free:
        raise MapError("rho-boundedness concerns fixed-point-free maps")
    n_tiles = len(window.codes)
    starts = []
    for s in range(sample_count):
        i = n_tiles // 4 + (s * n_tiles) // (3 * sample_count)
        i = min(max(i, 1), n_tiles - 2)
        starts.append(float(window.vertices_float[i]) + 0.25 * as_float(window.length_of(i)))
    longest = None
    truncated = 0
    deviation_max = None
    for x0 in starts:
        trace = mapping.orbit(window, x0, n)
        truncated += trace.truncated
        devs = np.abs(trace.deviations(rho))
        if deviation_max is None:
            deviation_max = devs
        else:
            m = min(len(deviation_max), len(devs))
            deviation_max = np.maximum(deviation_max[:m], devs[:m])
        longest = max(longest or 0, trace.n_completed)
    if deviation_max is None or len(deviation_max) < 16:
        raise WindowBoundaryError("orbits too short for a boundedness probe")
    ns = np.arange(len(deviation_max))
    xs = ns * max(abs(rho), 1e-12)
    sups = np.maximum.accumulate(deviation_max)
    kind, slope, r2 = classify_growth(xs[1:], sups[1:])
    return BoundednessReport(
        kind=kind, sup=float(sups[-1]), slope=slope, r_squared=r2, rho=rho,
        samples=len(starts), iterations=int(len(deviation_max) - 1),
        truncated_samples=truncated,
    )


# -- first-return maps and crossing counts -----------------------------------------


@dataclass(frozen=True)
class ReturnMapData:
    level: int
    rho_a: float
    rho_b: float
    rho_ab: float  # raw, in [0, 2): measured against m_a + m_b + 2 steps
    m_a: int
    m_b: int
    iterations: int

    @property
    def genericity_margin(self) -> float:
        gap = self.rho_ab - self.rho_a - self.rho_b
        return abs(gap - round(gap))

    def to_dict(self) -> dict:
        return {
            "level": self.level, "rho_a": self.rho_a, "rho_b": self.rho_b,
            "rho_ab": self.rho_ab, "m_a": self.m_a, "m_b": self.m_b,
            "genericity_margin": self.genericity_margin,
            "iterations": self.iterations,
        }


def _synthetic_window(system: TilingSystem, labels: Sequence[str]) -> TilingWindow:
    codes = np.array([system.alphabet.index(c) for c in labels], dtype=np.int16)
    return TilingWindow(system=system, codes=codes, origin_index=0,
                        provenance={"synthetic": "".join(labels)})


def _return_steps(mapping: SpeMap, window: TilingWindow, target_tiles: list[int],
                  x0: float) -> tuple[list[int], list[float]]:
    """Iterate until each target tile is entered; return step counts between
    successive targets and the entry offsets within them."""
    vf = window.vertices_float
    steps: list[int] = []
    offsets: list[float] = []
    x = x0
    count = 0
    ti = 0
    guard = 0
    while ti < len(target_tiles):
        x = mapping.apply(window, x)
        count += 1
        guard += 1
        if guard > 10_000_000:
            raise VerificationBudgetError("return-map iteration exploded")
        t = target_tiles[ti]
        if vf[t] <= x < vf[t + 1]:
            steps.append(count)
            offsets.append(x - vf[t])
            count = 0
            ti += 1
        elif x >= vf[t + 1]:
            raise MapError(
                f"orbit skipped over target tile {t}; displacement too large "
                f"for first-return bookkeeping"
            )
    return steps, offsets


def _rho_from_steps(steps: list[int], base: int) -> float:
    """Rotation number of a first-return circle map from its step counts:
    crossings take base+1 steps except when the circle point wraps, which
    saves one step a fraction rho of the time."""
    mean = sum(steps) / len(steps)
    return (base + 1) - mean


def return_map_rotation_numbers(mapping: SpeMap, system: TilingSystem,
                                level: int, iterations: int = 400,
                                entry: float = 0.37) -> ReturnMapData:
    """Rotation numbers of the first-return maps induced on the short
    bracketing tile by crossing single supertiles (and the a-then-b
    composite), estimated by unrolled iteration."""
    if mapping.depth != 0:
        raise MapError("first-return simulation needs a context-free displacement")
    if not mapping.fixed_point_free:
        raise MapError("first-return maps need a fixed-point-free map")
    if "c" not in system.alphabet:
        raise TilingError("expected a system with a short bracketing tile 'c'")

    def run(seed_names: list[str], reps: int) -> tuple[list[int], int]:
        if level == 1:
            labels = ["c"]
            targets = []
            for _ in range(reps):
                for name in seed_names:
                    labels.extend([name, "c"])
                    targets.append(len(labels) - 1)
        else:
            labels = ["c"]
            targets = []
            upper = {"a": "A", "b": "B"}
            for _ in range(reps):
                for name in seed_names:
                    word = [system.alphabet[c]
                            for c in system.expand_array(upper[name], level)]
                    labels.extend(word)
                    targets.append(len(labels) - 1)
        window = _synthetic_window(system, labels)
        x0 = float(window.vertices_float[0]) + entry * as_float(system.lengths["c"])
        steps, _ = _return_steps(mapping, window, targets, x0)
        return steps, min(steps)

    steps_a, m_a = run(["a"], iterations)
    steps_b, m_b = run(["b"], iterations)
    rho_a = _rho_from_steps(steps_a, m_a)
    rho_b = _rho_from_steps(steps_b, m_b)
    composite_steps, _ = run(["a", "b"], iterations)
    paired = [composite_steps[i] + composite_steps[i + 1]
              for i in range(0, len(composite_steps) - 1, 2)]
    mean_ab = sum(paired) / len(paired)
    rho_ab = (m_a + m_b + 2) - mean_ab
    return ReturnMapData(
        level=level, rho_a=rho_a, rho_b=rho_b, rho_ab=rho_ab,
        m_a=m_a, m_b=m_b, iterations=iterations,
    )


@dataclass(frozen=True)
class CrossingReport:
    steps: tuple[int, ...]
    min_steps: int
    max_steps: int
    span: tuple[float, float]

    def to_dict(self) -> dict:
        return {"steps": list(self.steps), "min": self.min_steps,
                "max": self.max_steps, "span": list(self.span)}


def crossing_steps(mapping: SpeMap, window: TilingWindow, start_tile: int,
                   end_tile: int, entry_samples: int = 5,
                   step_budget: int = 5_000_000) -> CrossingReport:
    """Steps needed to cross tiles [start_tile, end_tile] from entry points
    sampled on the preceding tile: first n with f^n(entry) >= right end."""
    if start_tile < 1 or end_tile >= len(window.codes):
        raise WindowBoundaryError("supertile span leaves no room for entry points")
    vf = window.vertices_float
    left = float(vf[start_tile])
    right = float(vf[end_tile + 1])
    prev_len = as_float(window.length_of(start_tile - 1))
    counts = []
    for s in range(entry_samples):
        frac = (s + 0.5) / entry_samples
        x = float(vf[start_tile - 1]) + frac * prev_len
        n = 0
        while x < right:
            x = as_float(mapping.apply(window, x))
            n += 1
            if n > step_budget:
                raise VerificationBudgetError("crossing step budget exhausted")
        counts.append(n)
    return CrossingReport(
        steps=tuple(counts), min_steps=min(counts), max_steps=max(counts),
        span=(left, right),
    )


def supertile_span(window: TilingWindow, name: str, level: int,
                   occurrence: int = 0) -> tuple[int, int]:
    """Tile-index span [first, last] of the given occurrence of a level-
    `level` supertile inside the window, from its build provenance."""
    prov = window.provenance
    seed = prov.get("seed")
    top = prov.get("level")
    if seed is None or top is None:
        raise TilingError("window lacks build provenance; pass explicit tiles")
    system = window.system
    seeds = [seed] if isinstance(seed, str) else list(seed)
    spans: list[tuple[int, int]] = []

    def walk(nm: str, lvl: int, offset: int) -> int:
        size = sum(system.supertile_letter_counts(nm, lvl).values())
        if lvl == level and nm == name:
            spans.append((offset, offset + size - 1))
            return offset + size
        if lvl == 0 or lvl < level:
            return offset + size
        for comp, count in system.components(nm, lvl):
            for _ in range(count):
                offset = walk(comp, lvl - 1, offset)
        return offset

    offset = 0
    for s in seeds:
        offset = walk(s, top, offset)
    if occurrence >= len(spans):
        raise TilingError(
            f"window contains only {len(spans)} occurrences of {name} at "
            f"level {level}"
        )
    return spans[occurrence]
