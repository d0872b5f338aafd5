"""Rational k-point combinatorics for nonlinear Bloch wave ansaetze.

The cubic nonlinearity maps quasimomenta (a, b, c) to a - b + c, so a finite
sum of quasi-periodic components can close on itself only if the chosen
k-points do.  This module computes the closure of a star set under that
operation (exactly, in rational arithmetic), the consistency test, the
reflection pairing j -> j', the index sets that say which cubic combinations
feed each component, and the hypothesis checks (H2)-(H6) against a computed
band structure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product

import numpy as np

#: Growth guard for pathological inputs (denominator q gives at most q^d points).
MAX_CLOSURE_POINTS = 4096


class ModesetError(ValueError):
    pass


class KPoint(tuple):
    """A point of the Brillouin zone B = (-1/2, 1/2]^d with exact rational
    coordinates, reduced so every component lies in (-1/2, 1/2] (and -1/2 is
    represented as +1/2)."""

    def __new__(cls, coords):
        reduced = []
        for c in coords:
            if isinstance(c, float):
                f = Fraction(c).limit_denominator(10**6)
                if f != Fraction(c):
                    raise ModesetError(
                        f"irrational/non-exact coordinate {c!r}; pass Fraction or 'p/q'"
                    )
                c = f
            else:
                c = Fraction(c)
            r = c - math.floor(c + Fraction(1, 2))  # now in [-1/2, 1/2)
            if r == Fraction(-1, 2):
                r = Fraction(1, 2)
            reduced.append(r)
        return super().__new__(cls, reduced)

    @property
    def dim(self) -> int:
        return len(self)

    def negated(self) -> "KPoint":
        return KPoint([-c for c in self])

    def as_floats(self) -> np.ndarray:
        return np.array([float(c) for c in self])

    def text(self) -> str:
        return ",".join(str(c) for c in self)

    def __repr__(self):
        return f"KPoint({self.text()})"


def _combine(a: KPoint, b: KPoint, c: KPoint) -> KPoint:
    return KPoint([ai - bi + ci for ai, bi, ci in zip(a, b, c)])


def closure_S3(stars: list) -> list:
    """Close a star set under k_a - k_b + k_c modulo Z^d.

    Returns the closure with the stars first (input order preserved), then
    the generated points in sorted order.  Terminates because denominators
    never exceed the lcm of the input denominators.
    """
    stars = [KPoint(s) for s in stars]
    if not stars:
        raise ModesetError("closure_S3 requires at least one star")
    current = set(stars)
    frontier = set(stars)
    while frontier:
        fresh = set()
        # only triples touching the frontier can produce new points
        for a, b, c in product(current, repeat=3):
            if a in frontier or b in frontier or c in frontier:
                p = _combine(a, b, c)
                if p not in current:
                    fresh.add(p)
        current |= fresh
        frontier = fresh
        if len(current) > MAX_CLOSURE_POINTS:
            raise ModesetError(
                f"S3 closure exceeded {MAX_CLOSURE_POINTS} points; "
                "denominators too large for a practical ansatz"
            )
    extras = sorted(current - set(stars))
    seen = set()
    ordered = []
    for s in stars:  # dedupe repeated stars ((H3) repetition is index-level)
        if s not in seen:
            ordered.append(s)
            seen.add(s)
    return ordered + extras


def is_consistent(stars: list) -> bool:
    """True iff S3(stars) is contained in stars + Z^d."""
    stars = [KPoint(s) for s in stars]
    star_set = set(stars)
    return all(
        _combine(a, b, c) in star_set for a, b, c in product(star_set, repeat=3)
    )


def reversal_pairing(points: list, bands: list | None = None) -> tuple:
    """For each index j find j' with k^(j') = -k^(j) mod Z^d (and, when band
    indices are given, the same band).  Returns the involution as a tuple.
    Raises ModesetError when a reflection is missing, i.e. (H6) fails."""
    points = [KPoint(p) for p in points]
    n = len(points)
    pairing = [-1] * n
    for j in range(n):
        if pairing[j] >= 0:
            continue
        target = points[j].negated()
        match = -1
        for i in range(n):
            if pairing[i] >= 0 and i != j:
                continue
            if points[i] == target and (bands is None or bands[i] == bands[j]):
                match = i
                break
        if match < 0:
            raise ModesetError(
                f"(H6) violated: reflection of k={points[j].text()} is not in the set"
            )
        pairing[j] = match
        pairing[match] = j
    return tuple(pairing)


def index_sets(points: list, n_stars: int | None = None) -> list:
    """The sets A_j of index triples (a, b, g) with
    k^(a) - k^(b) + k^(g) - k^(j) in Z^d, over the first n_stars points
    (defaults to all).  Indices are 0-based."""
    points = [KPoint(p) for p in points]
    n = len(points) if n_stars is None else n_stars
    out = []
    for j, kj in enumerate(points):
        triples = []
        for a, b, g in product(range(n), repeat=3):
            comb = _combine(points[a], points[b], points[g])
            if comb == kj:
                triples.append((a, b, g))
        out.append(tuple(triples))
    return out


def integer_shift(points: list, a: int, b: int, g: int, j: int) -> tuple:
    """The integer vector k^(a) - k^(b) + k^(g) - k^(j) for a triple in A_j."""
    shift = [
        points[a][i] - points[b][i] + points[g][i] - points[j][i]
        for i in range(len(points[j]))
    ]
    if any(s.denominator != 1 for s in shift):
        raise ModesetError("triple is not in the index set of component j")
    return tuple(int(s) for s in shift)


@dataclass(frozen=True)
class ModeSelection:
    """A validated choice of N star points (with band indices) at a level
    omega_star, together with the S3 closure, the reflection pairing on the
    stars, and the cubic index sets.

    ``closure`` lists M >= N points with the stars first.  ``index_sets_stars``
    are the A_j over star indices only (length N); ``index_sets_closure`` the
    tilde-A_j over all closure indices (length M)."""

    omega_star: float
    stars: tuple  # of KPoint, length N (repeats allowed per (H3))
    bands: tuple  # of int, length N
    closure: tuple  # of KPoint, length M, stars first
    pairing: tuple  # involution on 0..N-1
    index_sets_stars: tuple
    index_sets_closure: tuple

    @property
    def n_stars(self) -> int:
        return len(self.stars)

    @property
    def n_closure(self) -> int:
        return len(self.closure)

    @property
    def consistent(self) -> bool:
        return self.n_closure == len(set(self.stars))

    @classmethod
    def build(cls, omega_star: float, stars: list, bands: list) -> "ModeSelection":
        stars = [KPoint(s) for s in stars]
        if len(stars) != len(bands):
            raise ModesetError("stars and bands must have equal length")
        pairing = reversal_pairing(stars, list(bands))
        distinct = closure_S3(stars)
        # closure positions: repeated stars keep their own slots up front
        closure = list(stars) + [p for p in distinct if p not in set(stars)]
        a_stars = index_sets(closure, n_stars=len(stars))[: len(stars)]
        a_closure = index_sets(closure)
        return cls(
            omega_star=float(omega_star),
            stars=tuple(stars),
            bands=tuple(int(b) for b in bands),
            closure=tuple(closure),
            pairing=pairing,
            index_sets_stars=tuple(a_stars),
            index_sets_closure=tuple(a_closure),
        )

    def closure_pairing(self) -> tuple:
        """Reflection pairing extended to all M closure points (the closure is
        reflection-symmetric whenever the stars are)."""
        return reversal_pairing(list(self.closure))

    def to_text(self) -> str:
        lines = [f"omega_star = {self.omega_star!r}"]
        for s, b in zip(self.stars, self.bands):
            lines.append(f"star = {s.text()} ; band = {b}")
        for p in self.closure[self.n_stars :]:
            lines.append(f"closure = {p.text()}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ModeSelection":
        omega = None
        stars, bands = [], []
        for raw in text.splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, rest = line.partition("=")
            key = key.strip()
            if key == "omega_star":
                omega = float(rest)
            elif key == "star":
                coord, _, band = rest.partition(";")
                stars.append(KPoint(coord.strip().split(",")))
                bands.append(int(band.partition("=")[2]))
            elif key == "closure":
                continue  # recomputed
            else:
                raise ModesetError(f"unknown selection key {key!r}")
        if omega is None or not stars:
            raise ModesetError("selection text must define omega_star and stars")
        return cls.build(omega, stars, bands)


@dataclass(frozen=True)
class AssumptionReport:
    """Pass/fail per hypothesis, with human-readable detail lines."""

    h2: bool
    h3: bool
    h4: bool
    h5: bool
    h6: bool
    details: tuple

    @property
    def all_pass(self) -> bool:
        return self.h2 and self.h3 and self.h4 and self.h5 and self.h6


def check_assumptions(band_structure, selection: ModeSelection, tol: float = 1e-6):
    """Check (H2)-(H6) for a selection against a computed band structure.

    The band structure must contain samples at every closure point.  (H1),
    potential smoothness, has no computable test from samples and is
    recorded as assumed.  Failures are report entries, not errors.
    """
    notes = []

    def bands_at(kpt: KPoint) -> np.ndarray:
        kf = kpt.as_floats()
        for i, ks in enumerate(band_structure.k_samples):
            if np.max(np.abs(np.asarray(ks) - kf)) < 1e-9:
                return band_structure.bands[i]
        raise ModesetError(f"band structure has no sample at k={kpt.text()}")

    omega = selection.omega_star

    h2 = True
    for s, b in zip(selection.stars, selection.bands):
        vals = bands_at(s)
        if b < 1 or b > len(vals):
            h2 = False
            notes.append(f"H2: band index {b} out of range at k={s.text()}")
            continue
        err = abs(vals[b - 1] - omega)
        if err > tol:
            h2 = False
            notes.append(
                f"H2: |omega_{b}(k) - omega*| = {err:.3e} > tol at k={s.text()}"
            )

    h3 = True
    for s in dict.fromkeys(selection.stars):
        vals = bands_at(s)
        cluster_tol = 1e-7 * (1.0 + abs(omega))
        mult = int(np.sum(np.abs(vals - omega) <= max(cluster_tol, tol)))
        reps = sum(1 for t in selection.stars if t == s)
        if mult != reps:
            h3 = False
            notes.append(
                f"H3: multiplicity {mult} at k={s.text()} but {reps} repetitions listed"
            )

    h4 = True  # exact rationals by construction
    notes.append("H4: rational coordinates hold by construction (exact arithmetic)")
    notes.append("H1: potential smoothness assumed, not checked numerically")

    h5 = True
    star_set = set(selection.stars)
    for p in selection.closure:
        if p in star_set:
            continue
        vals = bands_at(p)
        dist = float(np.min(np.abs(vals - omega)))
        if dist <= tol:
            h5 = False
            notes.append(
                f"H5: closure point k={p.text()} lies on the level set "
                f"(min |omega_n - omega*| = {dist:.3e})"
            )

    try:
        reversal_pairing(list(selection.stars), list(selection.bands))
        h6 = True
    except ModesetError as exc:
        h6 = False
        notes.append(str(exc))

    return AssumptionReport(h2=h2, h3=h3, h4=h4, h5=h5, h6=h6, details=tuple(notes))


def enumerate_consistent_pairs_2d() -> list:
    """All two-point sets {k1, k2} in 2D with component denominators <= 4
    that are consistent and reflection-symmetric ((H6)).  There are twelve."""
    values = [Fraction(0), Fraction(1, 4), Fraction(-1, 4), Fraction(1, 2)]
    points = [KPoint((a, b)) for a in values for b in values]
    out = []
    for k1, k2 in combinations(points, 2):
        pair = [k1, k2]
        if not is_consistent(pair):
            continue
        try:
            reversal_pairing(pair)
        except ModesetError:
            continue
        out.append(tuple(sorted(pair)))
    return sorted(out)


def enumerate_consistent_pairs_1d() -> list:
    """1D analog of the pair enumeration: {0, 1/2} and {-1/4, 1/4}."""
    values = [Fraction(0), Fraction(1, 4), Fraction(-1, 4), Fraction(1, 2)]
    points = [KPoint((a,)) for a in values]
    out = []
    for k1, k2 in combinations(points, 2):
        pair = [k1, k2]
        if not is_consistent(pair):
            continue
        try:
            reversal_pairing(pair)
        except ModesetError:
            continue
        out.append(tuple(sorted(pair)))
    return sorted(out)
