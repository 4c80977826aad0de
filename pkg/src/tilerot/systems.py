"""Generation and combinatorics of one-dimensional hierarchical tilings.

A system is either a substitution (one word per letter, applied at every
level) or a fusion rule (explicit per-level concatenation words, possibly
with large repetition counts).  Both expose the same expansion interface:
level-j supertiles decompose into level-(j-1) supertiles.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .scalars import QuadraticNumber, Scalar, as_float, exact

DEFAULT_MAX_LEVEL = 40
MAX_WORD_LETTERS = 8_000_000


class TilingError(Exception):
    pass


class UnknownLabelError(TilingError):
    pass


class LevelError(TilingError):
    pass


class CollarError(TilingError):
    pass


def max_level_cap() -> int:
    env = os.environ.get("TILING_MAX_LEVEL")
    return int(env) if env else DEFAULT_MAX_LEVEL


RLE = tuple[tuple[str, int], ...]


def _as_rle(word) -> RLE:
    """Accept 'abaab', ['a','b'], or [('a', 3), ('b', 1)]."""
    out = []
    for item in word:
        if isinstance(item, str):
            out.append((item, 1))
        else:
            name, count = item
            if count < 1:
                raise ValueError(f"repetition count must be >= 1, got {count}")
            out.append((str(name), int(count)))
    merged: list[tuple[str, int]] = []
    for name, count in out:
        if merged and merged[-1][0] == name:
            merged[-1] = (name, merged[-1][1] + count)
        else:
            merged.append((name, count))
    return tuple(merged)


def rle_letters(word: RLE) -> list[str]:
    out: list[str] = []
    for name, count in word:
        out.extend([name] * count)
    return out


@dataclass(frozen=True)
class SubstitutionRule:
    words: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        object.__setattr__(
            self, "words", {k: tuple(v) for k, v in dict(self.words).items()}
        )


@dataclass(frozen=True)
class FusionRule:
    """levels[0] maps names to level-1 words over the alphabet; levels[j]
    maps names to run-length-encoded words over level-j names."""

    levels: tuple[Mapping[str, RLE], ...]

    def __post_init__(self):
        norm = tuple(
            {name: _as_rle(word) for name, word in dict(lvl).items()}
            for lvl in self.levels
        )
        object.__setattr__(self, "levels", norm)

    @property
    def max_level(self) -> int:
        return len(self.levels)

    def word_at(self, name: str, level: int) -> RLE:
        if not 1 <= level <= self.max_level:
            raise LevelError(
                f"level {level} outside declared fusion schedule (1..{self.max_level})"
            )
        try:
            return self.levels[level - 1][name]
        except KeyError:
            raise UnknownLabelError(f"no supertile {name!r} at level {level}") from None


@dataclass(frozen=True)
class TilingSystem:
    alphabet: tuple[str, ...]
    lengths: Mapping[str, Scalar]
    rule: SubstitutionRule | FusionRule
    seed: str = ""
    mode: str = "exact"
    tolerance: float = 1e-9
    unique_ergodicity: bool = True
    ergodic_branch: str | None = None
    name: str = "system"
    _caches: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        lengths = dict(self.lengths)
        if set(lengths) != set(self.alphabet):
            raise TilingError("lengths must cover exactly the alphabet")
        for ell, L in lengths.items():
            if self.mode == "float":
                lengths[ell] = float(L)
            if as_float(L) <= 0:
                raise TilingError(f"length of {ell!r} must be positive")
        object.__setattr__(self, "lengths", lengths)
        if self.tolerance <= 0:
            raise TilingError("tolerance must be positive")
        if not self.seed:
            default = (
                self.alphabet[0]
                if self.is_substitution
                else sorted(self.rule.levels[0])[0]
            )
            object.__setattr__(self, "seed", default)
        self._validate_rule()

    # -- structure ----------------------------------------------------------

    @property
    def is_substitution(self) -> bool:
        return isinstance(self.rule, SubstitutionRule)

    @property
    def max_level(self) -> int:
        return max_level_cap() if self.is_substitution else self.rule.max_level

    @property
    def supertile_names(self) -> tuple[str, ...]:
        if self.is_substitution:
            return self.alphabet
        return tuple(sorted(self.rule.levels[0]))

    def _validate_rule(self):
        if self.is_substitution:
            words = self.rule.words
            if set(words) != set(self.alphabet):
                raise TilingError("substitution must define one word per letter")
            for ell, w in words.items():
                if not w:
                    raise TilingError(f"substitution word for {ell!r} is empty")
                for c in w:
                    if c not in self.alphabet:
                        raise UnknownLabelError(f"substituted letter {c!r} unknown")
            if not self._primitive_matrix(self.substitution_matrix()):
                raise TilingError(
                    "substitution is not primitive; declare a fusion rule with an "
                    "explicit ergodicity flag instead"
                )
        else:
            prev = set(self.alphabet)
            for j, lvl in enumerate(self.rule.levels, start=1):
                for name, word in lvl.items():
                    for comp, _ in word:
                        if comp not in prev:
                            raise TilingError(
                                f"level-{j} supertile {name!r} uses {comp!r}, which "
                                f"is not a level-{j - 1} supertile"
                            )
                prev = set(lvl)
            if not self.unique_ergodicity and self.ergodic_branch is None:
                raise TilingError(
                    "non-uniquely-ergodic fusion needs a declared generic branch"
                )

    @staticmethod
    def _primitive_matrix(m: np.ndarray) -> bool:
        n = m.shape[0]
        power = np.linalg.matrix_power(m.astype(object), (n - 1) ** 2 + 1)
        return bool((power > 0).all())

    # -- expansion ----------------------------------------------------------

    def components(self, name: str, level: int) -> RLE:
        """The level-(level-1) decomposition word of a level-`level` supertile."""
        if level < 1:
            raise LevelError("components are defined for level >= 1")
        if self.is_substitution:
            if level > max_level_cap():
                raise LevelError(
                    f"level {level} exceeds TILING_MAX_LEVEL={max_level_cap()}"
                )
            if name not in self.rule.words:
                raise UnknownLabelError(f"unknown label {name!r}")
            return _as_rle(self.rule.words[name])
        return self.rule.word_at(name, level)

    def _codes(self) -> dict[str, int]:
        if "codes" not in self._caches:
            self._caches["codes"] = {ell: i for i, ell in enumerate(self.alphabet)}
        return self._caches["codes"]

    def expand_array(self, name: str, level: int, clamp: int | None = None) -> np.ndarray:
        """Letter word of a supertile as an int16 code array.

        With `clamp`, repetition counts are cut to preserve only local factors
        (used by the factor scanner); lengths are then NOT faithful.
        """
        key = ("word", name, level, clamp)
        if key in self._caches:
            return self._caches[key]
        codes = self._codes()
        if level == 0:
            if name not in codes:
                raise UnknownLabelError(f"unknown letter {name!r}")
            arr = np.array([codes[name]], dtype=np.int16)
        else:
            pieces = []
            total = 0
            for comp, count in self.components(name, level):
                sub = self.expand_array(comp, level - 1, clamp)
                c = count if clamp is None else min(count, max(2, clamp))
                total += len(sub) * c
                if total > MAX_WORD_LETTERS:
                    raise LevelError(
                        f"supertile {name!r} at level {level} exceeds the "
                        f"{MAX_WORD_LETTERS}-letter materialization cap"
                    )
                pieces.append(np.tile(sub, c) if c > 1 else sub)
            arr = np.concatenate(pieces)
        self._caches[key] = arr
        return arr

    def supertile_letter_counts(self, name: str, level: int) -> dict[str, int]:
        key = ("counts", name, level)
        if key in self._caches:
            return self._caches[key]
        if level == 0:
            if name not in self.alphabet:
                raise UnknownLabelError(f"unknown letter {name!r}")
            out = {ell: int(ell == name) for ell in self.alphabet}
        else:
            out = {ell: 0 for ell in self.alphabet}
            for comp, count in self.components(name, level):
                sub = self.supertile_letter_counts(comp, level - 1)
                for ell in self.alphabet:
                    out[ell] += count * sub[ell]
        self._caches[key] = out
        return out

    def supertile_length(self, name: str, level: int) -> Scalar:
        counts = self.supertile_letter_counts(name, level)
        total = 0
        for ell, c in counts.items():
            total = total + self.lengths[ell] * c
        return total

    def edge_letters(self, name: str, level: int, k: int, side: str) -> tuple[str, ...]:
        """First or last k letters of a supertile, without materializing it."""
        if k <= 0:
            return ()
        counts = self.supertile_letter_counts(name, level)
        n = sum(counts.values())
        if n <= 4 * k + 4:
            word = self.expand_array(name, level)
            letters = tuple(self.alphabet[c] for c in word)
            return letters[:k] if side == "first" else letters[-k:]
        comps = self.components(name, level)
        if side == "first":
            out: list[str] = []
            for comp, count in comps:
                for _ in range(count):
                    out.extend(self.edge_letters(comp, level - 1, k - len(out), "first"))
                    if len(out) >= k:
                        return tuple(out[:k])
            return tuple(out)
        out_r: list[str] = []
        for comp, count in reversed(comps):
            for _ in range(count):
                piece = self.edge_letters(comp, level - 1, k - len(out_r), "last")
                out_r = list(piece) + out_r
                if len(out_r) >= k:
                    return tuple(out_r[-k:])
        return tuple(out_r)

    # -- matrices and frequencies -------------------------------------------

    def substitution_matrix(self):
        """M[i][j] = occurrences of letter i in the word substituted for letter j.

        For fusion systems, returns the list of level transition matrices
        instead (entry [i][j] counts level-(L-1) supertile i inside the
        level-L word of supertile j).
        """
        if self.is_substitution:
            n = len(self.alphabet)
            codes = self._codes()
            m = np.zeros((n, n), dtype=np.int64)
            for ell, word in self.rule.words.items():
                j = codes[ell]
                for c in word:
                    m[codes[c], j] += 1
            return m
        matrices = []
        for lvl, words in enumerate(self.rule.levels, start=1):
            prev = self.alphabet if lvl == 1 else tuple(sorted(self.rule.levels[lvl - 2]))
            cur = tuple(sorted(words))
            index = {n_: i for i, n_ in enumerate(prev)}
            m = np.zeros((len(prev), len(cur)), dtype=np.int64)
            for j, name in enumerate(cur):
                for comp, count in words[name]:
                    m[index[comp], j] += count
            matrices.append(m)
        return matrices

    def letter_frequencies(self, level: int | None = None, branch: str | None = None):
        """Asymptotic letter frequencies.

        Substitutions use the Perron eigenvector of the substitution matrix.
        Fusions report level-wise counts along the declared generic branch.
        """
        if self.is_substitution:
            analysis = eigen_analysis(self.substitution_matrix())
            return {
                ell: float(analysis.perron_vector[i])
                for i, ell in enumerate(self.alphabet)
            }
        branch = branch or self.ergodic_branch
        if branch is None:
            if not self.unique_ergodicity:
                raise TilingError("declare a generic branch for frequency queries")
            branch = self.supertile_names[0]
        if branch not in self.rule.levels[-1]:
            raise UnknownLabelError(f"unknown branch supertile {branch!r}")
        level = self.max_level if level is None else level
        counts = self.supertile_letter_counts(branch, level)
        total = sum(counts.values())
        return {ell: counts[ell] / total for ell in self.alphabet}

    # -- factor enumeration and collaring -------------------------------------

    def _scan_level_factors(self, span: int, level: int) -> frozenset[tuple[int, ...]]:
        grams: set[tuple[int, ...]] = set()
        for name in self.supertile_names:
            word = self.expand_array(name, level, clamp=span + 2)
            if len(word) < span:
                continue
            windows = np.lib.stride_tricks.sliding_window_view(word, span)
            grams.update(map(tuple, np.unique(windows, axis=0)))
        return frozenset(grams)

    def legal_factors(self, span: int) -> frozenset[tuple[str, ...]]:
        """All length-`span` letter factors of the system's tilings.

        Scans successive supertile levels (with repetition counts clamped,
        which preserves local factors) until the factor set stabilizes.
        """
        key = ("factors", span)
        if key in self._caches:
            return self._caches[key]
        prev: frozenset | None = None
        top = self.max_level if not self.is_substitution else min(self.max_level, 30)
        for level in range(1, top + 1):
            cur = self._scan_level_factors(span, level)
            if prev is not None and cur == prev and cur:
                out = frozenset(
                    tuple(self.alphabet[c] for c in gram) for gram in cur
                )
                self._caches[key] = out
                return out
            prev = cur
        raise CollarError(
            f"length-{span} factors did not stabilize within {top} supertile levels"
        )

    def collar(self, depth: int) -> "CollaredAlphabet":
        if depth < 1:
            raise ValueError("collar depth must be >= 1")
        factors = self.legal_factors(2 * depth + 1)
        labels = tuple(
            sorted((gram[:depth], gram[depth], gram[depth + 1 :]) for gram in factors)
        )
        return CollaredAlphabet(system=self, depth=depth, labels=labels)

    def legal_pair(self, left: str, right: str) -> bool:
        return (left, right) in self.legal_factors(2)


@dataclass(frozen=True)
class CollaredAlphabet:
    """Tiles relabeled by their depth-k neighborhoods: (left k, letter, right k)."""

    system: TilingSystem
    depth: int
    labels: tuple[tuple[tuple[str, ...], str, tuple[str, ...]], ...]

    def __len__(self):
        return len(self.labels)

    def bare(self, collared) -> str:
        return collared[1]

    def bare_alphabet(self) -> tuple[str, ...]:
        return self.system.alphabet

    def index(self) -> dict:
        return {lab: i for i, lab in enumerate(self.labels)}


# -- operations matching the module surface ---------------------------------


def expand_supertile(system: TilingSystem, label: str, level: int) -> list[str]:
    """Exact letter sequence of the level-`level` supertile of `label`."""
    if level < 0:
        raise LevelError("level must be >= 0")
    if level == 0:
        known = set(system.alphabet) | set(system.supertile_names)
        if label not in known:
            raise UnknownLabelError(f"unknown label {label!r}")
        return [label]
    arr = system.expand_array(label, level)
    return [system.alphabet[c] for c in arr]


def collar(system: TilingSystem, depth: int) -> CollaredAlphabet:
    return system.collar(depth)


def substitution_matrix(system: TilingSystem):
    return system.substitution_matrix()


def letter_frequencies(system: TilingSystem, level: int | None = None,
                       branch: str | None = None):
    return system.letter_frequencies(level=level, branch=branch)


@dataclass(frozen=True)
class EigenAnalysis:
    eigenvalues: tuple[complex, ...]
    perron_value: float
    perron_vector: tuple[float, ...]
    pisot: bool
    expansive: bool
    primitive: bool

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [[ev.real, ev.imag] for ev in self.eigenvalues],
            "perron_value": self.perron_value,
            "perron_vector": list(self.perron_vector),
            "pisot": self.pisot,
            "expansive": self.expansive,
            "primitive": self.primitive,
        }


def eigen_analysis(matrix: np.ndarray) -> EigenAnalysis:
    """Spectral data of an integer substitution matrix.

    Pisot means every non-Perron eigenvalue has modulus strictly below 1;
    expansive means some non-Perron eigenvalue has modulus above 1.
    """
    m = np.asarray(matrix, dtype=float)
    values, vectors = np.linalg.eig(m)
    order = np.argsort(-np.abs(values))
    values = values[order]
    vectors = vectors[:, order]
    perron = values[0]
    if abs(perron.imag) > 1e-9:
        raise TilingError("leading eigenvalue is not real; matrix is not primitive")
    vec = np.abs(np.real(vectors[:, 0]))
    vec = vec / vec.sum()
    rest = np.abs(values[1:])
    pisot = bool(len(rest) == 0 or rest.max() < 1 - 1e-12)
    expansive = bool(len(rest) > 0 and rest.max() > 1 + 1e-12)
    primitive = TilingSystem._primitive_matrix(np.asarray(matrix, dtype=np.int64))
    return EigenAnalysis(
        eigenvalues=tuple(complex(v) for v in values),
        perron_value=float(perron.real),
        perron_vector=tuple(float(x) for x in vec),
        pisot=pisot,
        expansive=expansive,
        primitive=primitive,
    )


# -- stock systems -----------------------------------------------------------


def fibonacci_system(length_a: Scalar = 1, length_b: Scalar = 1,
                     mode: str = "exact", name: str = "fibonacci") -> TilingSystem:
    return TilingSystem(
        alphabet=("a", "b"),
        lengths={"a": length_a, "b": length_b},
        rule=SubstitutionRule({"a": ("a", "b"), "b": ("a",)}),
        seed="a",
        mode=mode,
        name=name,
    )


def non_pisot_system(mode: str = "exact") -> TilingSystem:
    return TilingSystem(
        alphabet=("a", "b"),
        lengths={"a": 1, "b": 1},
        rule=SubstitutionRule({"a": ("a", "b"), "b": ("a", "a", "a")}),
        seed="a",
        mode=mode,
        name="non_pisot",
    )


def paired_fusion_system(n_schedule: Sequence[int], length_a: Scalar,
                         length_b: Scalar, length_c: Scalar = 1,
                         mode: str = "float") -> TilingSystem:
    """Three letters a, b, c grouping as A_1 = ac, B_1 = bc, then
    A_j = (A B)^{n_j}, B_j = A^{n_j} B^{n_j}."""
    levels: list[dict] = [{"A": "ac", "B": "bc"}]
    for n in n_schedule:
        levels.append(
            {"A": [("A", 1), ("B", 1)] * n, "B": [("A", n), ("B", n)]}
        )
    return TilingSystem(
        alphabet=("a", "b", "c"),
        lengths={"a": length_a, "b": length_b, "c": length_c},
        rule=FusionRule(tuple(levels)),
        seed="A",
        mode=mode,
        name="paired_fusion",
    )


def two_speed_fusion_system(max_level: int = 6, mode: str = "exact",
                            branch: str = "A") -> TilingSystem:
    """Two unit letters with A_n = A_{n-1}^{10^n} B_{n-1} and the symmetric
    B_n = A_{n-1} B_{n-1}^{10^n}.  Minimal but not uniquely ergodic: report
    frequencies along a declared generic branch."""
    levels: list[dict] = [{"A": [("a", 10), ("b", 1)], "B": [("a", 1), ("b", 10)]}]
    for n in range(2, max_level + 1):
        levels.append(
            {"A": [("A", 10 ** n), ("B", 1)], "B": [("A", 1), ("B", 10 ** n)]}
        )
    return TilingSystem(
        alphabet=("a", "b"),
        lengths={"a": 1, "b": 1},
        rule=FusionRule(tuple(levels)),
        seed="A",
        mode=mode,
        unique_ergodicity=False,
        ergodic_branch=branch,
        name="two_speed_fusion",
    )


def periodic_system(word: str = "ab", mode: str = "exact") -> TilingSystem:
    """Periodic tiling with the given repeating unit (unit tile lengths)."""
    letters = tuple(dict.fromkeys(word))
    rotated = {c: tuple(word) for c in letters}
    return TilingSystem(
        alphabet=letters,
        lengths={c: 1 for c in letters},
        rule=SubstitutionRule(rotated),
        seed=word[0],
        mode=mode,
        name=f"periodic_{word}",
    )
