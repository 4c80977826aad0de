"""Self-maps with pattern-equivariant displacement and flows with
pattern-equivariant velocity.

A map is specified by how far it moves each point, with the displacement
depending only on the collared tile (and in-tile position); a flow is
specified the same way by a positive velocity.  The time-1 sampling of a
flow inverts the travel-time cumulative analytically, so travel times and
the induced form dx/v agree to roundoff by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .scalars import Scalar, as_float, exact
from .systems import TilingError, TilingSystem
from .windows import TilingWindow, WindowBoundaryError
from .forms import SpeForm, TileProfile, _sampled_cumulative


class MapError(TilingError):
    pass


class OrbitExit(Exception):
    """Internal signal: the next step would leave the window's safe range."""


@dataclass
class OrbitTrace:
    start: float
    positions: np.ndarray  # includes the start; length n_completed + 1
    truncated: bool
    requested: int

    @property
    def n_completed(self) -> int:
        return len(self.positions) - 1

    def deviations(self, rho: float) -> np.ndarray:
        n = np.arange(len(self.positions))
        return self.positions - self.positions[0] - n * rho

    def increasing(self) -> bool:
        return bool(np.all(np.diff(self.positions) > 0))


class SpeMap:
    """Base interface: displacement read off the pattern near the point."""

    depth: int = 0
    closed_form: str | None = None

    @property
    def radius(self) -> Scalar:
        raise NotImplementedError

    @property
    def fixed_point_free(self) -> bool:
        raise NotImplementedError

    def displacement(self, window: TilingWindow, x: Scalar) -> Scalar:
        raise NotImplementedError

    def apply(self, window: TilingWindow, x: Scalar) -> Scalar:
        return x + self.displacement(window, x)

    def apply_inverse(self, window: TilingWindow, x: Scalar) -> Scalar:
        """Solve f(y) = x by bisection (maps are strictly monotone)."""
        xf = as_float(x)
        vf = window.vertices_float
        lo, hi = float(vf[0]), xf
        if as_float(self.apply(window, lo)) > xf:
            raise OrbitExit
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if as_float(self.apply(window, mid)) <= xf:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def power(self, window: TilingWindow, x: Scalar, n: int) -> Scalar:
        for _ in range(n):
            x = self.apply(window, x)
        if n < 0:
            raise MapError("negative powers need an invertible fast path")
        return x

    def orbit(self, window: TilingWindow, x0: Scalar, n: int,
              direction: int = 1) -> OrbitTrace:
        positions = [as_float(x0)]
        x = x0
        truncated = False
        lo, hi = self._safe_range(window)
        for _ in range(n):
            try:
                x = (self.apply(window, x) if direction > 0
                     else self.apply_inverse(window, x))
            except (WindowBoundaryError, OrbitExit):
                truncated = True
                break
            xf = as_float(x)
            if not (lo <= xf <= hi):
                truncated = True
                break
            positions.append(xf)
        return OrbitTrace(
            start=as_float(x0),
            positions=np.array(positions),
            truncated=truncated,
            requested=n,
        )

    def _safe_range(self, window: TilingWindow) -> tuple[float, float]:
        vf = window.vertices_float
        k = self.depth
        return float(vf[k]), float(vf[len(window.codes) - k])


class TranslationMap(SpeMap):
    """x -> x + c; the closed form keeps exact arithmetic exact."""

    def __init__(self, c: Scalar):
        if as_float(c) == 0:
            raise MapError("translation by 0 has fixed points everywhere")
        self.c = c
        self.closed_form = f"translation:{c}"

    @property
    def radius(self) -> Scalar:
        return 0

    @property
    def fixed_point_free(self) -> bool:
        return True

    def displacement(self, window, x):
        return self.c

    def apply(self, window, x):
        return x + self.c

    def apply_inverse(self, window, x):
        return x - self.c

    def power(self, window, x, n):
        return x + self.c * n

    def apply_many(self, window, xs: np.ndarray) -> np.ndarray:
        return xs + as_float(self.c)


class ProfileMap(SpeMap):
    """Displacement given per collared tile: a constant or density samples
    interpolated linearly across the tile."""

    def __init__(self, system: TilingSystem, depth: int, profiles: Mapping,
                 name: str = "", skip_checks: bool = False):
        self.system = system
        self.depth = depth
        self.name = name
        norm = {}
        for key, prof in dict(profiles).items():
            if depth and not isinstance(key, tuple):
                raise MapError("collared displacement profiles need collared keys")
            k = (tuple(key[0]), key[1], tuple(key[2])) if depth else key
            if isinstance(prof, (int, float)) or exact(prof):
                norm[k] = float(as_float(prof))
            else:
                norm[k] = tuple(float(v) for v in prof)
        self.profiles = norm
        self._window_tokens = {}
        if not skip_checks:
            self._check_monotone()
            self._check_continuity()

    def _label_of(self, key) -> str:
        return key if self.depth == 0 else key[1]

    def _check_monotone(self):
        for key, prof in self.profiles.items():
            if isinstance(prof, float):
                continue
            L = as_float(self.system.lengths[self._label_of(key)])
            knots = np.linspace(0.0, L, len(prof))
            moved = knots + np.array(prof)
            if not np.all(np.diff(moved) > 0):
                raise MapError(
                    f"displacement profile on {key!r} breaks orientation: "
                    f"x + phi(x) must be strictly increasing within the tile"
                )

    def _phi_at_edge(self, key, side: str) -> float:
        prof = self.profiles[key]
        if isinstance(prof, float):
            return prof
        return prof[0] if side == "left" else prof[-1]

    def _check_continuity(self):
        k = self.depth
        try:
            grams = self.system.legal_factors(2 * k + 2)
        except TilingError:
            return
        tol = self.system.tolerance
        for g in grams:
            left_key = g[0] if k == 0 else (g[0:k], g[k], g[k + 1 : 2 * k + 1])
            right_key = g[1] if k == 0 else (g[1 : k + 1], g[k + 1], g[k + 2 : 2 * k + 2])
            if left_key not in self.profiles or right_key not in self.profiles:
                continue
            a = self._phi_at_edge(left_key, "right")
            b = self._phi_at_edge(right_key, "left")
            if abs(a - b) > 100 * tol:
                raise MapError(
                    f"displacement jumps from {a} to {b} across {g!r}; "
                    f"the map would not be continuous"
                )

    @property
    def radius(self) -> Scalar:
        if self.depth == 0:
            return 0
        return min(self.system.lengths.values(), key=as_float) * self.depth

    @property
    def fixed_point_free(self) -> bool:
        values = []
        for prof in self.profiles.values():
            values.extend([prof] if isinstance(prof, float) else prof)
        return min(values) > 0 or max(values) < 0

    def _profile_table(self, window: TilingWindow):
        key = ("map-profiles", id(self))
        if key in window._caches:
            return window._caches[key]
        a = len(self.system.alphabet)
        size = a ** (2 * self.depth + 1)
        table: list = [None] * size
        from .windows import encode_collared_label

        for k, prof in self.profiles.items():
            enc = (self.system.alphabet.index(k) if self.depth == 0
                   else encode_collared_label(self.system, k, self.depth))
            table[enc] = prof
        window._caches[key] = table
        return table

    def displacement(self, window: TilingWindow, x: Scalar) -> float:
        i, delta = window.locate(x)
        return self._displacement_at(window, i, as_float(delta))

    def _displacement_at(self, window: TilingWindow, i: int, delta: float) -> float:
        enc = window.collared_encoding(self.depth)
        e = int(enc[i])
        if e < 0:
            raise WindowBoundaryError(f"tile {i} lacks depth-{self.depth} context")
        prof = self._profile_table(window)[e]
        if prof is None:
            raise MapError(f"no displacement profile for the context of tile {i}")
        if isinstance(prof, float):
            return prof
        L = as_float(window.length_of(i))
        u = delta / L * (len(prof) - 1)
        s = min(int(u), len(prof) - 2)
        frac = u - s
        return prof[s] * (1 - frac) + prof[s + 1] * frac

    def orbit(self, window, x0, n, direction=1):
        if direction < 0:
            return super().orbit(window, x0, n, direction)
        vf = window.vertices_float
        lo, hi = self._safe_range(window)
        x = as_float(x0)
        i = window.tile_index(x)
        positions = [x]
        truncated = False
        n_tiles = len(window.codes)
        for _ in range(n):
            try:
                x2 = x + self._displacement_at(window, i, x - vf[i])
            except (WindowBoundaryError, MapError):
                truncated = True
                break
            if not (lo <= x2 <= hi):
                truncated = True
                break
            while i + 1 < n_tiles and vf[i + 1] <= x2:
                i += 1
            while i > 0 and vf[i] > x2:
                i -= 1
            positions.append(x2)
            x = x2
        return OrbitTrace(
            start=as_float(x0), positions=np.array(positions),
            truncated=truncated, requested=n,
        )


@dataclass(frozen=True)
class SpeFlow:
    """Unidirectional flow: positive velocity per collared tile (constant or
    samples interpolated linearly).  Travel time across a stretch equals the
    integral of the induced form dx/v over it."""

    system: TilingSystem
    depth: int
    velocities: Mapping
    name: str = ""
    _caches: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        norm = {}
        for key, prof in dict(self.velocities).items():
            k = (tuple(key[0]), key[1], tuple(key[2])) if self.depth else key
            if isinstance(prof, (int, float)) or exact(prof):
                if as_float(prof) <= 0:
                    raise MapError(f"velocity on {k!r} must be positive")
                norm[k] = prof
            else:
                vals = tuple(float(v) for v in prof)
                if min(vals) <= 0:
                    raise MapError(f"velocity on {k!r} must stay positive")
                norm[k] = vals
        object.__setattr__(self, "velocities", norm)

    @property
    def radius(self) -> Scalar:
        if self.depth == 0:
            return 0
        return min(self.system.lengths.values(), key=as_float) * self.depth

    @property
    def max_speed(self) -> float:
        out = 0.0
        for prof in self.velocities.values():
            out = max(out, as_float(prof) if not isinstance(prof, tuple)
                      else max(prof))
        return out

    def _label_of(self, key) -> str:
        return key if self.depth == 0 else key[1]

    def rotation_form(self) -> SpeForm:
        """The induced form with density 1/v (travel time per unit length)."""
        if "form" in self._caches:
            return self._caches["form"]
        profiles = {}
        for key, prof in self.velocities.items():
            L = self.system.lengths[self._label_of(key)]
            if not isinstance(prof, tuple):
                weight = L / prof if exact(prof) and exact(L) else as_float(L) / as_float(prof)
                profiles[key] = TileProfile(weight=weight)
            else:
                density = tuple(1.0 / v for v in prof)
                weight = _sampled_cumulative(density, as_float(L), as_float(L))
                profiles[key] = TileProfile(weight=weight, samples=density)
        form = SpeForm(self.system, self.depth, profiles,
                       name=f"dx/v[{self.name}]" if self.name else "dx/v")
        self._caches["form"] = form
        return form

    # -- trajectory machinery -------------------------------------------------

    def _tables(self, window: TilingWindow):
        form = self.rotation_form()
        cw, bad = form.cumulative_weights(window)
        key = ("flow-tables", id(self))
        if key in window._caches:
            return window._caches[key]
        k = self.depth
        n = len(window.codes)
        i0, i1 = k, n - k  # valid tile range [i0, i1)
        weights, _, samples = form._lookup(window)
        enc = window.collared_encoding(k)
        out = (cw, enc, weights, samples, i0, i1)
        window._caches[key] = out
        return out

    def time_at(self, window: TilingWindow, x: Scalar) -> float:
        """Travel time from the first context-valid vertex to x."""
        cw, enc, weights, samples, i0, i1 = self._tables(window)
        i, delta = window.locate(x)
        if not (i0 <= i < i1):
            raise WindowBoundaryError(f"tile {i} outside the flow's valid range")
        form = self.rotation_form()
        return float(cw[i]) + as_float(
            form.partial_integral(window, i, delta, want_exact=False)
        )

    def position_at_time(self, window: TilingWindow, t: float) -> float:
        cw, enc, weights, samples, i0, i1 = self._tables(window)
        if not (cw[i0] <= t <= cw[i1]):
            raise OrbitExit
        j = int(np.searchsorted(cw, t, side="right")) - 1
        j = min(max(j, i0), i1 - 1)
        rem = t - float(cw[j])
        L = as_float(window.length_of(j))
        e = int(enc[j])
        if e in samples:
            delta = _invert_sampled_cumulative(samples[e], L, rem)
        else:
            delta = rem * L / float(weights[e])
        return float(window.vertices_float[j]) + delta

    def advance(self, window: TilingWindow, x: Scalar, t: float) -> float:
        return self.position_at_time(window, self.time_at(window, x) + t)


def _invert_sampled_cumulative(samples: tuple, length: float, target: float) -> float:
    """Solve integral of the piecewise-linear density over [0, delta] = target."""
    m = len(samples) - 1
    h = length / m
    if target <= 0:
        return 0.0
    acc = 0.0
    for s in range(m):
        step = 0.5 * (samples[s] + samples[s + 1]) * h
        if acc + step >= target or s == m - 1:
            r = target - acc
            d0, d1 = samples[s], samples[s + 1]
            a = (d1 - d0) / (2 * h)
            if abs(a) < 1e-15:
                u = r / d0
            else:
                disc = d0 * d0 + 4 * a * r
                u = (-d0 + math.sqrt(max(disc, 0.0))) / (2 * a)
            return s * h + min(max(u, 0.0), h)
        acc += step
    return length


class FlowTime1Map(SpeMap):
    """Time-t sampling of a flow (t = 1 unless stated).  Positions are found
    by inverting the travel-time cumulative, tile by tile."""

    def __init__(self, flow: SpeFlow, t: float = 1.0):
        if t == 0:
            raise MapError("time-0 sampling is the identity")
        self.flow = flow
        self.t = float(t)
        self.depth = flow.depth
        self.closed_form = "flow_time1"

    @property
    def radius(self) -> float:
        # displacement at x is determined by the pattern out to the flow's
        # radius plus the farthest point reached in time t
        return as_float(self.flow.radius) + abs(self.t) * self.flow.max_speed

    @property
    def fixed_point_free(self) -> bool:
        return True

    def displacement(self, window, x):
        return self.apply(window, x) - as_float(x)

    def apply(self, window, x):
        try:
            return self.flow.advance(window, as_float(x), self.t)
        except OrbitExit:
            raise WindowBoundaryError("flow trajectory leaves the window") from None

    def apply_inverse(self, window, x):
        try:
            return self.flow.advance(window, as_float(x), -self.t)
        except OrbitExit:
            raise WindowBoundaryError("flow trajectory leaves the window") from None

    def power(self, window, x, n):
        try:
            return self.flow.advance(window, as_float(x), self.t * n)
        except OrbitExit:
            raise WindowBoundaryError("flow trajectory leaves the window") from None

    def orbit(self, window, x0, n, direction=1):
        flow = self.flow
        try:
            t0 = flow.time_at(window, as_float(x0))
        except WindowBoundaryError:
            return OrbitTrace(start=as_float(x0), positions=np.array([as_float(x0)]),
                              truncated=True, requested=n)
        cw, enc, weights, samples, i0, i1 = flow._tables(window)
        tmin, tmax = float(cw[i0]), float(cw[i1])
        steps = self.t * direction
        targets = t0 + steps * np.arange(n + 1)
        valid = (targets >= tmin) & (targets <= tmax)
        cut = int(np.argmin(valid)) if not valid.all() else n + 1
        targets = targets[: cut if cut > 0 else 1]
        positions = [flow.position_at_time(window, float(t)) for t in targets]
        return OrbitTrace(
            start=as_float(x0), positions=np.array(positions),
            truncated=len(positions) < n + 1, requested=n,
        )


def time1_sampling(flow: SpeFlow) -> FlowTime1Map:
    return FlowTime1Map(flow, 1.0)


def apply_map(mapping: SpeMap, window: TilingWindow, x: Scalar) -> Scalar:
    return mapping.apply(window, x)


def iterate(mapping: SpeMap, window: TilingWindow, x0: Scalar, n: int,
            direction: int = 1) -> OrbitTrace:
    if n < 0:
        raise ValueError("iterate takes n >= 0; use direction=-1 to go backwards")
    return mapping.orbit(window, x0, n, direction=direction)


def uniform_flow(system: TilingSystem, speeds: Mapping[str, Scalar],
                 name: str = "") -> SpeFlow:
    """Flow with one constant speed per bare tile label."""
    return SpeFlow(system=system, depth=0, velocities=dict(speeds), name=name)


def smoothed_two_speed_flow(system: TilingSystem, base: Mapping[str, float],
                            width: float = 0.1, knots: int = 128,
                            name: str = "smoothed") -> SpeFlow:
    """Velocity that is constant per tile away from vertices and ramps
    smoothly (quintic) across a `width` neighborhood of each vertex, so the
    profile depends only on the labels one tile away: a depth-1 flow."""
    lengths = {k: as_float(v) for k, v in system.lengths.items()}
    if width <= 0 or any(width > L / 2 for L in lengths.values()):
        raise MapError("smoothing width must fit inside half of every tile")

    def smooth(u: float) -> float:
        u = min(max(u, 0.0), 1.0)
        return u * u * u * (10 - 15 * u + 6 * u * u)

    velocities = {}
    for left, center, right in system.collar(1).labels:
        L = lengths[center]
        vown = float(base[center])
        vprev = float(base[left[0]])
        vnext = float(base[right[0]])
        grid = np.linspace(0.0, L, knots + 1)
        vals = np.full(knots + 1, vown)
        ramp_in = grid <= width
        vals[ramp_in] = vprev + (vown - vprev) * np.array(
            [smooth((g / width + 1) / 2) for g in grid[ramp_in]]
        )
        ramp_out = grid >= L - width
        vals[ramp_out] = vown + (vnext - vown) * np.array(
            [smooth(((g - L) / width + 1) / 2) for g in grid[ramp_out]]
        )
        velocities[(left, center, right)] = tuple(vals)
    return SpeFlow(system=system, depth=1, velocities=velocities, name=name)
