"""Domain types: mixing distributions, smoothed models, samples, grids and
interval unions, plus their (de)serialisation."""
import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    DataError,
    EmptyMixture,
    EmptySample,
    NegativeWeight,
    NonFiniteData,
    ParseError,
    SchemaError,
    WeightSumError,
)

DUPLICATE_TOL = 1e-12
RENORMALIZE_TOL = 1e-8


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteMixture:
    """Finitely supported distribution ``sum_j w_j delta_{xi_j}``.

    Build instances with :func:`validate_mixture`; the constructor assumes
    its inputs are already canonical.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "atoms", _frozen(self.atoms))
        object.__setattr__(self, "weights", _frozen(self.weights))

    def __len__(self):
        return self.atoms.shape[0]

    def __eq__(self, other):
        if not isinstance(other, DiscreteMixture):
            return NotImplemented
        return np.array_equal(self.atoms, other.atoms) and np.array_equal(
            self.weights, other.weights
        )

    def __hash__(self):
        return hash((self.atoms.tobytes(), self.weights.tobytes()))

    def __repr__(self):
        return f"DiscreteMixture(n_atoms={len(self)}, mean={self.mean():.4g})"

    def mean(self):
        return float(self.weights @ self.atoms)

    def shift(self, t):
        return DiscreteMixture(self.atoms + t, self.weights)

    def sample(self, size, rng):
        """Draw ``size`` atoms with probabilities ``weights``."""
        idx = rng.choice(len(self), size=size, p=self.weights)
        return self.atoms[idx]


def validate_mixture(atoms, weights):
    """Return the canonical :class:`DiscreteMixture` for ``atoms``/``weights``.

    Atoms are sorted, atoms closer than 1e-12 are merged by adding their
    weights, and weights are renormalised when their sum is within 1e-8
    of one.

    >>> validate_mixture([0, 0], [0.3, 0.7]).weights
    array([1.])
    """
    atoms = np.asarray(atoms, dtype=float).reshape(-1)
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if atoms.size == 0:
        raise EmptyMixture("a mixture needs at least one atom")
    if atoms.shape != weights.shape:
        raise DataError(
            f"atoms and weights differ in length ({atoms.size} vs {weights.size})"
        )
    if not (np.all(np.isfinite(atoms)) and np.all(np.isfinite(weights))):
        raise NonFiniteData("atoms and weights must be finite")
    if np.any(weights < 0):
        raise NegativeWeight(f"negative weight {weights.min():g}")
    total = weights.sum()
    if abs(total - 1.0) > RENORMALIZE_TOL:
        raise WeightSumError(f"weights sum to {total!r}, not 1")

    order = np.argsort(atoms, kind="stable")
    atoms, weights = atoms[order], weights[order]
    keep = np.ones(atoms.size, dtype=bool)
    keep[1:] = np.diff(atoms) > DUPLICATE_TOL
    group = np.cumsum(keep) - 1
    merged_w = np.bincount(group, weights=weights)
    merged_a = atoms[keep]
    total = merged_w.sum()
    # already normalised up to a few ulps: leave the bits alone so that
    # canonicalisation is idempotent
    if abs(total - 1.0) > 8 * np.finfo(float).eps:
        merged_w = merged_w / total
    return DiscreteMixture(merged_a, merged_w)


def point_mass(a=0.0):
    return DiscreteMixture([float(a)], [1.0])


@dataclass(frozen=True)
class SmoothModel:
    """Mixing distribution ``base`` convolved with ``N(0, c^2)``."""

    base: DiscreteMixture
    c: float

    def __post_init__(self):
        c = float(self.c)
        if not math.isfinite(c) or c < 0:
            raise DataError(f"smoothing scale c must be finite and >= 0, got {c}")
        object.__setattr__(self, "c", c)

    @property
    def atoms(self):
        return self.base.atoms

    @property
    def weights(self):
        return self.base.weights

    def sigma_star(self, sigma=1.0):
        """Marginal noise scale ``sqrt(c^2 + sigma^2)`` of ``X | xi``."""
        return np.sqrt(self.c**2 + np.asarray(sigma, dtype=float) ** 2)

    def alpha_star(self, sigma=1.0):
        """Weight ``c^2 / (c^2 + sigma^2)`` the posterior mean puts on ``x``."""
        return self.c**2 / (self.c**2 + np.asarray(sigma, dtype=float) ** 2)

    def sample_theta(self, size, rng):
        xi = self.base.sample(size, rng)
        return xi + self.c * rng.standard_normal(size)


@dataclass(frozen=True, eq=False)
class Sample:
    """Observations ``x`` with known per-observation noise sds ``sigma``."""

    x: np.ndarray
    sigma: np.ndarray = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float).reshape(-1)
        if self.sigma is None:
            sigma = np.ones_like(x)
        else:
            sigma = np.broadcast_to(
                np.asarray(self.sigma, dtype=float), x.shape
            ).copy()
        if x.size == 0:
            raise EmptySample("sample has no observations")
        if not np.all(np.isfinite(x)):
            bad = int(np.nonzero(~np.isfinite(x))[0][0])
            raise NonFiniteData(f"observation {bad} is not finite")
        if not np.all(np.isfinite(sigma)) or np.any(sigma <= 0):
            bad = int(np.nonzero(~(np.isfinite(sigma) & (sigma > 0)))[0][0])
            raise NonFiniteData(f"noise sd of observation {bad} must be finite and > 0")
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "sigma", _frozen(sigma))

    def __len__(self):
        return self.x.shape[0]

    @property
    def homoscedastic(self):
        return bool(np.all(self.sigma == self.sigma[0]))

    def subset(self, idx):
        return Sample(self.x[idx], self.sigma[idx])

    def shift(self, t):
        return Sample(self.x + t, self.sigma)


@dataclass(frozen=True, eq=False)
class Grid:
    """Strictly increasing candidate atom locations."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1)
        if pts.size == 0:
            raise DataError("grid must contain at least one point")
        if np.any(np.diff(pts) <= 0):
            raise DataError("grid points must be strictly increasing")
        object.__setattr__(self, "points", _frozen(pts))

    def __len__(self):
        return self.points.shape[0]

    @property
    def range(self):
        return float(self.points[0]), float(self.points[-1])


@dataclass(frozen=True, eq=False)
class IntervalUnion:
    """Finite union of disjoint closed intervals, sorted left to right.

    ``clipped`` marks sets that touched the edge of the search window, so an
    endpoint there may be the window edge rather than a true boundary.
    """

    intervals: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    clipped: bool = False

    def __post_init__(self):
        iv = np.asarray(self.intervals, dtype=float).reshape(-1, 2)
        if iv.size:
            if np.any(iv[:, 1] < iv[:, 0]):
                raise DataError("interval with right end before left end")
            iv = iv[np.argsort(iv[:, 0], kind="stable")]
            merged = [list(iv[0])]
            for a, b in iv[1:]:
                if a <= merged[-1][1]:
                    merged[-1][1] = max(merged[-1][1], b)
                else:
                    merged.append([a, b])
            iv = np.array(merged)
        object.__setattr__(self, "intervals", _frozen(iv.reshape(-1, 2)))

    def __len__(self):
        return self.intervals.shape[0]

    def __iter__(self):
        return (tuple(row) for row in self.intervals)

    @property
    def empty(self):
        return len(self) == 0

    @property
    def length(self):
        if self.empty:
            return 0.0
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0]))

    def contains(self, t):
        t = np.asarray(t, dtype=float)
        if self.empty:
            return np.zeros(t.shape, dtype=bool)
        a, b = self.intervals[:, 0], self.intervals[:, 1]
        return np.any((t[..., None] >= a) & (t[..., None] <= b), axis=-1)

    def union(self, other):
        return IntervalUnion(
            np.vstack([self.intervals, other.intervals]),
            clipped=self.clipped or other.clipped,
        )

    def issubset(self, other, tol=0.0):
        return all(
            np.any((other.intervals[:, 0] - tol <= a) & (b <= other.intervals[:, 1] + tol))
            for a, b in self
        )

    def __str__(self):
        return self.format(6)

    def format(self, digits=None):
        """``"a..b;c..d"``; full precision when ``digits`` is None."""
        if digits is None:
            return ";".join(f"{float(a)!r}..{float(b)!r}" for a, b in self)
        return ";".join(f"{a:.{digits}g}..{b:.{digits}g}" for a, b in self)


# ---------------------------------------------------------------- serialization


def model_to_json(model):
    payload = {
        "atoms": [float(a) for a in model.atoms],
        "weights": [float(w) for w in model.weights],
        "c": float(model.c),
    }
    return json.dumps(payload)


def model_from_json(text):
    """Parse the ``{"atoms": [...], "weights": [...], "c": ...}`` schema."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(f"invalid JSON: {exc.msg}", offset=offset) from None
    if not isinstance(obj, dict):
        raise SchemaError("model JSON must be an object")
    for key in ("atoms", "weights", "c"):
        if key not in obj:
            raise SchemaError(f"model JSON is missing field {key!r}")
    try:
        atoms = np.asarray(obj["atoms"], dtype=float)
        weights = np.asarray(obj["weights"], dtype=float)
        c = float(obj["c"])
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"model JSON has a non-numeric field: {exc}") from None
    return SmoothModel(validate_mixture(atoms, weights), c)


def read_sample_csv(path_or_buffer):
    """Read a sample CSV with header ``x`` or ``x,sigma``."""
    if hasattr(path_or_buffer, "read"):
        return _parse_sample_csv(path_or_buffer)
    with open(path_or_buffer, newline="") as fh:
        return _parse_sample_csv(fh)


def _parse_sample_csv(fh):
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptySample("CSV file is empty") from None
    if header not in (["x"], ["x", "sigma"]):
        raise SchemaError(f"CSV header must be 'x' or 'x,sigma', got {','.join(header)!r}")
    xs, sigmas = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise DataError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            xs.append(float(row[0]))
            sigmas.append(float(row[1]) if len(header) == 2 else 1.0)
        except ValueError:
            raise DataError(f"row {lineno}: non-numeric value {row!r}") from None
        if not math.isfinite(xs[-1]):
            raise NonFiniteData(f"row {lineno}: x is not finite")
        if not (math.isfinite(sigmas[-1]) and sigmas[-1] > 0):
            raise NonFiniteData(f"row {lineno}: sigma must be finite and > 0")
    if not xs:
        raise EmptySample("CSV file has no data rows")
    return Sample(np.array(xs), np.array(sigmas))


def write_sample_csv(sample, path_or_buffer):
    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "sigma"])
        for x, s in zip(sample.x, sample.sigma):
            w.writerow([repr(float(x)), repr(float(s))])

    if hasattr(path_or_buffer, "write"):
        _write(path_or_buffer)
    else:
        with open(path_or_buffer, "w", newline="") as fh:
            _write(fh)


def sample_to_csv_text(sample):
    buf = io.StringIO()
    write_sample_csv(sample, buf)
    return buf.getvalue()
