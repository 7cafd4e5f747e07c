"""Trimming functions applied to phaseless measurements.

Every trimmer is a vectorized map ``y -> t`` on ``y >= 0`` together with a
declared range.  The built-ins are parametrized by the sampling ratio
``delta`` because they are naturally written in terms of ``s = delta * y**2``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .errors import UnboundedTrimmer

BUILTIN_IDS = ("mm", "lal", "opt", "opt-eps", "const")


def _mm(y: np.ndarray, *, delta: float) -> np.ndarray:
    s = delta * y * y
    return s / (s + math.sqrt(delta) - 1.0)


def _lal(y: np.ndarray, *, delta: float) -> np.ndarray:
    s = delta * y * y
    return s / (s + 0.1)


def _opt(y: np.ndarray, *, delta: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 1.0 - 1.0 / (delta * y * y)


def _opt_eps(y: np.ndarray, *, delta: float, eps: float) -> np.ndarray:
    return 1.0 - 1.0 / (delta * y * y + eps)


def _opt_eps_unit(y: np.ndarray, *, delta: float, eps: float) -> np.ndarray:
    # Normalized form of _opt_eps written without the cancellation that the
    # affine map suffers near y = 0.
    u = delta * y * y
    return u / (u + eps)


def _const(y: np.ndarray, *, value: float) -> np.ndarray:
    return np.full(np.shape(y), value, dtype=float)


def _table(y: np.ndarray, *, ys: np.ndarray, ts: np.ndarray) -> np.ndarray:
    # np.interp holds the end values outside the table: constant extrapolation.
    return np.interp(y, ys, ts)


@dataclass(frozen=True, eq=False)
class TrimmingFunction:
    """A trimmer ``y -> scale * base(y) + shift`` with metadata.

    ``scale`` and ``shift`` record the affine map applied by
    :func:`normalize_trimmer`; for a raw trimmer they are 1 and 0.
    """

    name: str
    base: Callable[[np.ndarray], np.ndarray]
    declared_range: tuple[float, float]
    params: Mapping[str, float] = field(default_factory=dict)
    bounded: bool = True
    lipschitz: bool = True
    scale: float = 1.0
    shift: float = 0.0
    # Optional exact evaluator of the normalized trimmer, used in place of
    # the affine map when normalizing.
    unit_form: Callable[[np.ndarray], np.ndarray] | None = None
    _direct: Callable[[np.ndarray], np.ndarray] | None = None

    def __call__(self, y: np.ndarray | float) -> np.ndarray:
        if self._direct is not None:
            return self._direct(np.asarray(y, dtype=float))
        t = self.base(np.asarray(y, dtype=float))
        if self.scale != 1.0 or self.shift != 0.0:
            t = self.scale * t + self.shift
        return t

    def eval(self, y: np.ndarray | float) -> np.ndarray:
        return self(y)

    @property
    def is_normalized(self) -> bool:
        return self.declared_range == (0.0, 1.0)

    @property
    def has_unit_range(self) -> bool:
        """True when the declared range lies inside ``[0, 1]``."""
        lo, hi = self.declared_range
        return self.bounded and lo >= 0.0 and hi <= 1.0

    def to_raw(self, value: float) -> float:
        """Map an eigenvalue of the transformed matrix back to the raw trimmer."""
        return (value - self.shift) / self.scale

    def describe(self) -> dict[str, object]:
        return {"name": self.name, **{k: v for k, v in self.params.items()}}


def normalize_trimmer(t: TrimmingFunction) -> TrimmingFunction:
    """Rescale a bounded trimmer to the range ``[0, 1]``.

    Already-normalized trimmers are returned unchanged, so the operation is
    idempotent.  The eigenvector of ``A^H T A`` is unaffected by the map.
    """
    if not t.bounded or not all(math.isfinite(v) for v in t.declared_range):
        raise UnboundedTrimmer(f"trimmer {t.name!r} has unbounded range {t.declared_range}")
    a, b = t.declared_range
    if t.is_normalized:
        return t
    if not b > a:
        raise ValueError(f"trimmer {t.name!r} has a degenerate range [{a}, {b}]")
    s = 1.0 / (b - a)
    sh = -a / (b - a)
    exact = t.unit_form if (t.scale, t.shift) == (1.0, 0.0) else None
    return replace(
        t,
        declared_range=(0.0, 1.0),
        scale=s * t.scale,
        shift=s * t.shift + sh,
        unit_form=None,
        _direct=exact,
    )


def mm_trimmer(delta: float) -> TrimmingFunction:
    return TrimmingFunction(
        name="mm",
        base=partial(_mm, delta=float(delta)),
        declared_range=(0.0, 1.0),
        params={"delta": float(delta)},
    )


def lal_trimmer(delta: float) -> TrimmingFunction:
    return TrimmingFunction(
        name="lal",
        base=partial(_lal, delta=float(delta)),
        declared_range=(0.0, 1.0),
        params={"delta": float(delta)},
    )


def opt_trimmer(delta: float) -> TrimmingFunction:
    return TrimmingFunction(
        name="opt",
        base=partial(_opt, delta=float(delta)),
        declared_range=(-math.inf, 1.0),
        params={"delta": float(delta)},
        bounded=False,
        lipschitz=False,
    )


def opt_eps_trimmer(delta: float, eps: float) -> TrimmingFunction:
    if not eps > 0.0:
        raise ValueError("eps must be positive")
    return TrimmingFunction(
        name="opt-eps",
        base=partial(_opt_eps, delta=float(delta), eps=float(eps)),
        declared_range=(1.0 - 1.0 / eps, 1.0),
        params={"delta": float(delta), "eps": float(eps)},
        unit_form=partial(_opt_eps_unit, delta=float(delta), eps=float(eps)),
    )


def constant_trimmer(value: float) -> TrimmingFunction:
    """Deterministic ``T == value``; a degenerate trimmer for testing."""
    return TrimmingFunction(
        name="const",
        base=partial(_const, value=float(value)),
        declared_range=(float(value), float(value)),
        params={"value": float(value)},
    )


def table_trimmer(ys: np.ndarray, ts: np.ndarray, name: str = "table") -> TrimmingFunction:
    """Piecewise-linear trimmer through the points ``(ys[i], ts[i])``."""
    ys = np.asarray(ys, dtype=float)
    ts = np.asarray(ts, dtype=float)
    if ys.ndim != 1 or ys.shape != ts.shape or ys.size < 2:
        raise ValueError("table needs two equal-length columns with at least two rows")
    if not (np.all(np.isfinite(ys)) and np.all(np.isfinite(ts))):
        raise ValueError("table contains non-finite values")
    if np.any(np.diff(ys) <= 0):
        raise ValueError("table y column must be strictly increasing")
    return TrimmingFunction(
        name=name,
        base=partial(_table, ys=ys, ts=ts),
        declared_range=(float(ts.min()), float(ts.max())),
    )


def load_table_trimmer(path: str | Path) -> TrimmingFunction:
    """Read a two-column ``y,t`` CSV; a non-numeric first row is a header."""
    rows: list[tuple[float, float]] = []
    with open(path, newline="", encoding="utf-8") as fh:
        for i, rec in enumerate(csv.reader(fh)):
            if not rec or rec[0].lstrip().startswith("#"):
                continue
            try:
                rows.append((float(rec[0]), float(rec[1])))
            except (ValueError, IndexError):
                if i == 0:
                    continue
                raise ValueError(f"{path}: bad row {i + 1}: {rec!r}") from None
    data = np.array(rows, dtype=float).reshape(-1, 2)
    return table_trimmer(data[:, 0], data[:, 1], name=f"csv:{path}")


def make_trimmer(
    trimmer_id: str,
    delta: float,
    *,
    eps: float | None = None,
    value: float | None = None,
) -> TrimmingFunction:
    """Build a trimmer from its registry id.

    Ids are ``mm``, ``lal``, ``opt``, ``opt-eps`` (needs ``eps``), ``const``
    (uses ``value``, default 0.5) and ``csv:PATH``.
    """
    if trimmer_id == "mm":
        return mm_trimmer(delta)
    if trimmer_id == "lal":
        return lal_trimmer(delta)
    if trimmer_id == "opt":
        return opt_trimmer(delta)
    if trimmer_id == "opt-eps":
        if eps is None:
            raise ValueError("trimmer 'opt-eps' needs eps")
        return opt_eps_trimmer(delta, eps)
    if trimmer_id == "const":
        return constant_trimmer(0.5 if value is None else value)
    if trimmer_id.startswith("csv:"):
        return load_table_trimmer(trimmer_id[4:])
    raise ValueError(f"unknown trimmer id {trimmer_id!r}")


def trimmer_family(
    trimmer_id: str, *, eps: float | None = None, value: float | None = None
) -> Callable[[float], TrimmingFunction]:
    """Return ``delta -> normalized trimmer`` for use in delta sweeps."""
    if trimmer_id != "const":
        make_trimmer(trimmer_id, 2.0, eps=eps, value=value)  # validate early

    def family(delta: float) -> TrimmingFunction:
        t = make_trimmer(trimmer_id, delta, eps=eps, value=value)
        return t if t.has_unit_range else normalize_trimmer(t)

    return family
