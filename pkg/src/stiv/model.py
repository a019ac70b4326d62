"""Data model: observations, column scalings, the normalized design, and rate calibration.

The estimators work on a scaled design where regressor and instrument columns
are divided by a per-column scale (max-abs by default, root-mean-square as an
alternative).  The normalized cross-moment matrix

    Psi = (1/n) D_Z Z' X D_X,   D_X = diag(1/x_scale), D_Z = diag(1/z_scale),

has all entries in [-1, 1] under either scaling and is the only design object
the sensitivity machinery ever sees.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import (
    DegenerateLevelError,
    DegenerateScalingError,
    DimensionError,
    ParseError,
    ValidationError,
)

MAXABS = "maxabs"
RMS = "rms"


@dataclass(frozen=True)
class Dataset:
    """Raw observations with endogenous regressors ordered first.

    Exogenous regressors serve as their own instruments: every exogenous
    column of ``x`` must equal some column of ``z`` bit-exactly.  ``x_names``
    and ``x_order`` remember the caller's original column order so results
    can be reported back in it.
    """

    y: np.ndarray
    x: np.ndarray
    z: np.ndarray
    k_end: int
    zbar: np.ndarray | None = None
    x_names: tuple[str, ...] = ()
    z_names: tuple[str, ...] = ()
    x_order: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def n_regressors(self) -> int:
        return self.x.shape[1]

    @property
    def n_instruments(self) -> int:
        return self.z.shape[1]

    @property
    def endo_indices(self) -> range:
        """Endogenous columns as 0-based prefix indices."""
        return range(self.k_end)

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if y.ndim != 1 or x.ndim != 2 or z.ndim != 2:
            raise DimensionError("y must be a vector; x, z must be matrices")
        n = len(y)
        if n < 1 or x.shape[0] != n or z.shape[0] != n:
            raise DimensionError("y, x, z must share the sample dimension")
        if x.shape[1] < 1:
            raise DimensionError("at least one regressor required")
        if z.shape[1] < x.shape[1]:
            raise DimensionError(
                f"need at least as many instruments as regressors "
                f"(L={z.shape[1]} < K={x.shape[1]})"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise ValidationError("observations must be finite")
        if not 0 <= self.k_end <= x.shape[1]:
            raise ValidationError("endogenous count out of range")
        if self.zbar is not None:
            zb = np.asarray(self.zbar, dtype=float)
            if zb.ndim != 2 or zb.shape[0] != n or not np.all(np.isfinite(zb)):
                raise ValidationError("suspect instrument matrix malformed")
        _check_zero_columns(x, "x")
        _check_zero_columns(z, "z")
        self._validate_exogenous_mapping(x, z)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    def _validate_exogenous_mapping(self, x, z):
        for k in range(self.k_end, x.shape[1]):
            col = x[:, k]
            if not any(np.array_equal(col, z[:, l]) for l in range(z.shape[1])):
                name = self.x_names[k] if self.x_names else f"x{k + 1}"
                raise ValidationError(
                    f"exogenous regressor {name} has no bit-identical instrument column"
                )


def _check_zero_columns(mat: np.ndarray, label: str):
    norms = np.abs(mat).max(axis=0)
    zero = np.where(norms == 0.0)[0]
    if len(zero):
        raise DegenerateScalingError(f"column {zero[0] + 1} of {label} is identically zero")


@dataclass(frozen=True)
class ScaledDesign:
    """Column scales and the normalized cross-moment matrix Psi."""

    x_star: np.ndarray  # per-regressor scale
    z_star: np.ndarray  # per-instrument scale
    psi: np.ndarray  # (L, K), entries in [-1, 1]
    scaling: str  # "maxabs" or "rms"
    zbar_star: float | None = None  # max over suspect columns of RMS
    dataset: Dataset = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return self.dataset.n

    @property
    def k_end(self) -> int:
        return self.dataset.k_end


def column_scales(mat: np.ndarray, scaling: str) -> np.ndarray:
    if scaling == MAXABS:
        return np.abs(mat).max(axis=0)
    if scaling == RMS:
        return np.sqrt((mat**2).mean(axis=0))
    raise ValidationError(f"unknown scaling mode {scaling!r}")


def scale_design(d: Dataset, scaling: str = MAXABS) -> ScaledDesign:
    """Compute column scales and Psi = (1/n) D_Z Z' X D_X.

    Suspect instruments are always scaled by the max over columns of the
    root-mean-square (not per-column, and not max-abs).
    """
    x_star = column_scales(d.x, scaling)
    z_star = column_scales(d.z, scaling)
    if np.any(x_star == 0.0) or np.any(z_star == 0.0):
        raise DegenerateScalingError("zero column scale")
    psi = (d.z / z_star).T @ (d.x / x_star) / d.n
    zbar_star = None
    if d.zbar is not None:
        zbar_star = float(np.sqrt((d.zbar**2).mean(axis=0)).max())
    return ScaledDesign(
        x_star=x_star, z_star=z_star, psi=psi, scaling=scaling,
        zbar_star=zbar_star, dataset=d,
    )


@dataclass(frozen=True)
class RateConfig:
    """Calibration of the concentration rate r.

    practical mode:  r = ndtri(1 - alpha/(2L)) / sqrt(n), needs L >= 2.
    full mode:       r = A sqrt(2 log(L) / n) and alpha is evaluated from the
                     moderate-deviation bound; requires the population
                     constants (A, delta, d_n_delta) and the absolute
                     constant a0 of that bound.
    """

    alpha: float = 0.05
    mode: str = "practical"
    a: float | None = None
    delta: float | None = None
    d_n_delta: float | None = None
    a0: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0, 1)")
        if self.mode not in ("practical", "full"):
            raise ValidationError("mode must be 'practical' or 'full'")
        if self.mode == "full":
            if self.a is None or self.delta is None or self.d_n_delta is None:
                raise ValidationError("full mode requires a, delta and d_n_delta")
            if self.a < 1.0:
                raise ValidationError("deviation constant a must be >= 1")
            if not 0.0 < self.delta <= 1.0:
                raise ValidationError("delta must lie in (0, 1]")
            if self.d_n_delta <= 0.0:
                raise ValidationError("d_n_delta must be positive")


@dataclass(frozen=True)
class RateResult:
    r: float
    alpha: float
    side_condition_ok: bool | None = None  # None in practical mode


def rate_r(n: int, n_instruments: int, cfg: RateConfig | None = None) -> RateResult:
    """Concentration rate driving every finite-sample bound.

    The practical calibration inverts 2L(1 - Phi(r sqrt(n))) = alpha.  The
    normal quantile comes from scipy's ndtri (abs error well below 1e-9,
    which matters because r feeds every downstream bound).
    """
    cfg = cfg or RateConfig()
    if n < 1:
        raise ValidationError("need n >= 1")
    L = n_instruments
    if cfg.mode == "practical":
        if L < 2:
            raise DegenerateLevelError(
                "practical rate calibration needs at least two instruments"
            )
        r = float(ndtri(1.0 - cfg.alpha / (2.0 * L))) / math.sqrt(n)
        return RateResult(r=r, alpha=cfg.alpha)
    a, delta, dnd = cfg.a, cfg.delta, cfg.d_n_delta
    r = a * math.sqrt(2.0 * math.log(L) / n)
    t = a * math.sqrt(2.0 * math.log(L))
    tail = 2.0 * L * (1.0 - float(ndtr(t)))
    correction = 2.0 * cfg.a0 * (1.0 + t) ** (1.0 + delta) / (
        L ** (a**2 - 1.0) * dnd ** (2.0 + delta)
    )
    alpha = tail + correction
    side_ok = L <= math.exp(dnd**2 / (2.0 * a**2))
    return RateResult(r=r, alpha=alpha, side_condition_ok=bool(side_ok))


# ---------------------------------------------------------------------------
# CSV ingestion.  Expected header: y, x1..xK, z1..zL [, zbar1..zbarL1].
# ---------------------------------------------------------------------------


def load_dataset(
    source: str | os.PathLike | io.TextIOBase,
    endo: list[int] | tuple[int, ...],
    instrument_map: dict[int, int] | None = None,
) -> Dataset:
    """Parse a CSV file into a Dataset.

    ``endo`` lists 1-based x-column indices (in file order) that are
    endogenous; they are moved to the front internally and the original
    order is kept on the Dataset for reporting.  ``instrument_map``
    optionally pins exogenous x-columns to z-columns (1-based both sides)
    and is verified bit-exactly; without it a matching column is searched.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, newline="") as fh:
            rows = list(csv.reader(fh))
    else:
        rows = list(csv.reader(source))
    if not rows:
        raise ParseError("empty input")
    header = [c.strip() for c in rows[0]]
    groups: dict[str, list[int]] = {"y": [], "x": [], "z": [], "zbar": []}
    for j, name in enumerate(header):
        key = name.rstrip("0123456789")
        if key not in groups:
            raise ParseError(f"unrecognized column name {name!r}")
        groups[key].append(j)
    if len(groups["y"]) != 1:
        raise ParseError("exactly one y column required")
    for key in ("x", "z", "zbar"):
        expected = [f"{key}{i + 1}" for i in range(len(groups[key]))]
        actual = [header[j] for j in groups[key]]
        if actual != expected:
            raise ParseError(f"{key} columns must be named {key}1..{key}{len(actual)} in order")

    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"row {i}: expected {len(header)} cells, got {len(row)}")
        for j, cell in enumerate(row):
            try:
                val = float(cell)
            except ValueError:
                raise ParseError(f"row {i}, column {header[j]}: cannot parse {cell!r}") from None
            if not np.isfinite(val):
                raise ParseError(f"row {i}, column {header[j]}: non-finite value")
            data[i - 2, j] = val

    y = data[:, groups["y"][0]]
    x_file = data[:, groups["x"]]
    z = data[:, groups["z"]]
    zbar = data[:, groups["zbar"]] if groups["zbar"] else None

    K = x_file.shape[1]
    endo = sorted(set(int(e) for e in endo))
    if any(e < 1 or e > K for e in endo):
        raise ValidationError(f"endogenous indices must lie in 1..{K}")
    exo = [k for k in range(1, K + 1) if k not in endo]
    order = [e - 1 for e in endo] + [k - 1 for k in exo]  # file positions, endo first
    x = x_file[:, order]
    x_names = tuple(f"x{i + 1}" for i in order)
    z_names = tuple(f"z{l + 1}" for l in range(z.shape[1]))

    if instrument_map:
        for xk, zl in instrument_map.items():
            if not np.array_equal(x_file[:, xk - 1], z[:, zl - 1]):
                raise ValidationError(
                    f"declared mapping x{xk} -> z{zl} is not bit-exact"
                )
    return Dataset(
        y=y, x=x, z=z, k_end=len(endo), zbar=zbar,
        x_names=x_names, z_names=z_names, x_order=tuple(order),
    )
