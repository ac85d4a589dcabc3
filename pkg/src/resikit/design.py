"""Design-matrix construction from tabular data.

Supports intercept-first designs with numeric and 0/1-coded binary
covariates, natural cubic spline expansions, and pairwise interactions,
plus contrast matrices selecting the columns of tested terms.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

from .errors import (
    DegenerateDesignError,
    KnotPlacementError,
    SchemaError,
    UnknownTermError,
)

INTERCEPT = "intercept"


@dataclass(frozen=True)
class TermSpec:
    """One model term: numeric, binary, spline(df) or interaction(of=(a, b))."""

    name: str
    kind: str  # numeric | binary | spline | interaction
    df: int | None = None
    of: tuple[str, str] | None = None

    def __post_init__(self):
        if self.kind not in ("numeric", "binary", "spline", "interaction"):
            raise SchemaError(f"unknown term kind {self.kind!r} for {self.name!r}")
        if self.kind == "spline" and (self.df is None or self.df < 1):
            raise SchemaError(f"spline term {self.name!r} needs df >= 1, got {self.df}")
        if self.kind == "interaction" and (self.of is None or len(self.of) != 2):
            raise SchemaError(f"interaction term {self.name!r} needs two parent terms")


@dataclass(frozen=True)
class DesignMatrix:
    """Model matrix with intercept first and one declared term per column block."""

    X: np.ndarray
    column_terms: tuple[str, ...]
    terms: tuple[TermSpec, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "X", np.ascontiguousarray(self.X, dtype=float)
        )
        if len(self.column_terms) != self.X.shape[1]:
            raise SchemaError(
                f"{len(self.column_terms)} column labels for {self.X.shape[1]} columns"
            )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.X.shape[1]

    def columns_for(self, term: str) -> list[int]:
        cols = [j for j, name in enumerate(self.column_terms) if name == term]
        if not cols:
            raise UnknownTermError(f"term {term!r} not in design")
        return cols

    def term_names(self) -> list[str]:
        """Declared term names in column order, intercept excluded."""
        seen: list[str] = []
        for name in self.column_terms:
            if name != INTERCEPT and name not in seen:
                seen.append(name)
        return seen

    def drop_terms(self, names: set[str]) -> "DesignMatrix":
        """Design with every column of the given terms removed."""
        keep = [j for j, t in enumerate(self.column_terms) if t not in names]
        return DesignMatrix(
            X=self.X[:, keep],
            column_terms=tuple(self.column_terms[j] for j in keep),
            terms=tuple(t for t in self.terms if t.name not in names),
        )


@dataclass(frozen=True)
class ContrastMatrix:
    """0/1 selector rows picking the coefficients of the tested terms."""

    L: np.ndarray

    @property
    def m1(self) -> int:
        return self.L.shape[0]


def natural_spline_basis(x, df: int, eval_points=None) -> np.ndarray:
    """Natural cubic spline basis with df columns.

    Boundary knots sit at min(x)/max(x); the df-1 interior knots at equally
    spaced quantiles of x. Basis functions have zero second derivative at
    (and linear extension beyond) the boundary knots. ``eval_points``
    defaults to x itself; points outside the boundary are extended linearly.
    """
    x = np.asarray(x, dtype=float)
    if df < 1:
        raise KnotPlacementError(f"spline df must be >= 1, got {df}")
    distinct = np.unique(x)
    if distinct.size < df + 1:
        raise KnotPlacementError(
            f"need at least {df + 1} distinct values for df={df}, got {distinct.size}"
        )
    lo, hi = float(distinct[0]), float(distinct[-1])
    if df > 1:
        probs = np.arange(1, df) / df
        interior = np.quantile(x, probs)
    else:
        interior = np.empty(0)
    knots = np.concatenate([[lo], interior, [hi]])
    if np.any(np.diff(knots) <= 0):
        raise KnotPlacementError(
            f"tied quantile knots {np.round(knots, 6).tolist()}; "
            "predictor has too many duplicate values"
        )
    z = x if eval_points is None else np.asarray(eval_points, dtype=float)
    return _ns_design(z, interior, lo, hi)


def _ns_design(z, interior, lo, hi):
    """Evaluate the natural spline basis anywhere, linearly beyond [lo, hi]."""
    t = np.concatenate([[lo] * 4, interior, [hi] * 4])
    nbases = len(interior) + 4
    spl = BSpline(t, np.eye(nbases), 3, extrapolate=False)
    # Project out the two boundary second-derivative constraints (after
    # dropping the first B-spline, which carries the intercept direction).
    d2 = spl.derivative(2)(np.array([lo, hi]))[:, 1:]
    q_full, _ = np.linalg.qr(d2.T, mode="complete")
    proj = q_full[:, 2:]

    inside = np.clip(z, lo, hi)
    base = spl(inside)[:, 1:] @ proj
    below = z < lo
    above = z > hi
    if np.any(below) or np.any(above):
        d1 = spl.derivative(1)(np.array([lo, hi]))[:, 1:] @ proj
        val = spl(np.array([lo, hi]))[:, 1:] @ proj
        if np.any(below):
            base[below] = val[0] + np.outer(z[below] - lo, d1[0])
        if np.any(above):
            base[above] = val[1] + np.outer(z[above] - hi, d1[1])
    return base


def build_design(data, terms) -> DesignMatrix:
    """Assemble the model matrix: intercept, then term blocks in declaration order.

    ``data`` maps column names to equal-length numeric arrays (a pandas
    DataFrame works). Binary columns must be coded 0/1; interaction blocks
    are elementwise products of their parents' blocks.
    """
    terms = tuple(terms)
    names = [t.name for t in terms]
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicate term names in {names}")
    if INTERCEPT in names:
        raise SchemaError(f"{INTERCEPT!r} is implicit and cannot be declared")

    blocks: dict[str, np.ndarray] = {}
    n = None
    for term in terms:
        if term.kind == "interaction":
            a, b = term.of
            for parent in (a, b):
                if parent not in blocks:
                    raise UnknownTermError(
                        f"interaction {term.name!r} references undeclared term {parent!r}"
                    )
            left, right = blocks[a], blocks[b]
            cols = [left[:, i] * right[:, j]
                    for i in range(left.shape[1]) for j in range(right.shape[1])]
            block = np.column_stack(cols)
        else:
            col = _pull_column(data, term.name)
            if n is None:
                n = col.shape[0]
            if term.kind == "binary":
                if not np.isin(col, (0.0, 1.0)).all():
                    raise SchemaError(f"binary column {term.name!r} must be coded 0/1")
                block = col[:, None]
            elif term.kind == "numeric":
                block = col[:, None]
            else:  # spline
                block = natural_spline_basis(col, term.df)
        if n is None:
            n = block.shape[0]
        blocks[term.name] = block

    if n is None:
        raise SchemaError("no terms declared")
    X_parts = [np.ones((n, 1))]
    col_terms = [INTERCEPT]
    for term in terms:
        block = blocks[term.name]
        for j in range(block.shape[1]):
            if np.ptp(block[:, j]) == 0.0:
                raise DegenerateDesignError(
                    f"column {j} of term {term.name!r} is constant"
                )
        X_parts.append(block)
        col_terms.extend([term.name] * block.shape[1])
    X = np.hstack(X_parts)
    if X.shape[0] <= X.shape[1]:
        raise DegenerateDesignError(
            f"need n > m, got n={X.shape[0]} rows for m={X.shape[1]} columns"
        )
    return DesignMatrix(X=X, column_terms=tuple(col_terms), terms=terms)


def _pull_column(data, name):
    try:
        col = data[name]
    except (KeyError, IndexError, TypeError):
        raise SchemaError(f"column {name!r} missing from input data")
    col = np.asarray(col, dtype=float)
    if col.ndim != 1:
        raise SchemaError(f"column {name!r} is not one-dimensional")
    if np.isnan(col).any():
        raise SchemaError(f"column {name!r} contains missing values")
    return col


def contrast_for_terms(design: DesignMatrix, tested) -> ContrastMatrix:
    """Selector matrix for the coefficients of the tested terms."""
    tested = set(tested)
    if not tested:
        raise UnknownTermError("empty hypothesis: no terms to test")
    if INTERCEPT in tested:
        raise UnknownTermError("the intercept is a nuisance parameter and cannot be tested")
    cols: list[int] = []
    for term in tested:
        cols.extend(design.columns_for(term))
    cols.sort()
    L = np.zeros((len(cols), design.m))
    for row, col in enumerate(cols):
        L[row, col] = 1.0
    return ContrastMatrix(L=L)
