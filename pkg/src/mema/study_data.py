"""Study-level data model and recovery of nuisance moments.

A contributing study is represented by its published simple-linear-
regression output (:class:`StudySummary`).  When the intercept standard
error and residual variance are also reported, the study's exposure
moments (mean, spread) and residual standard deviation can be recovered
exactly from the summary statistics and are then treated as known
constants (:class:`StudyMoments`).

Individual-participant data, when available, are held per study in an
:class:`IpdDataset`.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DomainError,
    MissingField,
    NegativeRadicand,
    ParseError,
    RaggedData,
    SchemaError,
)

SUMMARY_COLUMNS = [
    "study_id",
    "n",
    "beta_hat",
    "se_beta",
    "alpha_hat",
    "se_alpha",
    "sigma2_hat",
    "known_clean",
]

_BIVARIATE_FIELDS = ("alpha_hat", "se_alpha", "sigma2_hat")


@dataclass(frozen=True)
class StudySummary:
    """One study's published regression output.

    Parameters
    ----------
    study_id : str
        Unique study label.
    n : int
        Number of participants (must be >= 3).
    beta_hat : float
        Estimated slope.
    se_beta : float
        Standard error of the slope (> 0).
    alpha_hat, se_alpha, sigma2_hat : float, optional
        Estimated intercept, its standard error and the residual
        variance.  These three are present together or absent together;
        when present they enable the bivariate model and moment
        recovery.
    known_clean : bool
        True iff the study is known to be free of exposure measurement
        error (a gold-standard study).
    """

    study_id: str
    n: int
    beta_hat: float
    se_beta: float
    alpha_hat: float | None = None
    se_alpha: float | None = None
    sigma2_hat: float | None = None
    known_clean: bool = False

    def __post_init__(self):
        if self.n < 3:
            raise DomainError(f"study {self.study_id!r}: n={self.n} < 3")
        if not self.se_beta > 0:
            raise DomainError(f"study {self.study_id!r}: se_beta must be > 0")
        present = [self.__dict__[f] is not None for f in _BIVARIATE_FIELDS]
        if any(present) and not all(present):
            raise DomainError(
                f"study {self.study_id!r}: alpha_hat, se_alpha and sigma2_hat "
                "must be present together or absent together"
            )
        if self.se_alpha is not None and not self.se_alpha > 0:
            raise DomainError(f"study {self.study_id!r}: se_alpha must be > 0")
        if self.sigma2_hat is not None and not self.sigma2_hat > 0:
            raise DomainError(f"study {self.study_id!r}: sigma2_hat must be > 0")

    @property
    def has_bivariate(self) -> bool:
        return self.alpha_hat is not None

    def with_clean(self, flag: bool) -> "StudySummary":
        return replace(self, known_clean=flag)


@dataclass(frozen=True)
class StudyMoments:
    """Recovered per-study nuisance moments.

    ``sigma`` is the residual standard deviation, ``lambda_`` the
    exposure standard deviation and ``mu`` the exposure mean.
    """

    sigma: float
    lambda_: float
    mu: float

    def __post_init__(self):
        for name in ("sigma", "lambda_", "mu"):
            v = self.__dict__[name]
            if not math.isfinite(v) or v < 0:
                raise DomainError(f"moment {name} must be finite and nonnegative")


class IpdDataset:
    """Individual-participant data grouped by study.

    Holds, per study, the outcome vector ``y`` (length ``n``) and the
    covariate matrix ``x`` (``n`` x ``q``).  All studies share the same
    covariate count ``q``.
    """

    def __init__(self, studies: list[tuple[str, np.ndarray, np.ndarray]]):
        if not studies:
            raise DomainError("IpdDataset requires at least one study")
        self._ids = []
        self._y = {}
        self._x = {}
        q = None
        for study_id, y, x in studies:
            y = np.asarray(y, dtype=float)
            x = np.asarray(x, dtype=float)
            if x.ndim == 1:
                x = x[:, None]
            if y.ndim != 1 or x.ndim != 2 or y.shape[0] != x.shape[0]:
                raise RaggedData(
                    f"study {study_id!r}: outcome length {y.shape} does not "
                    f"match covariate rows {x.shape}"
                )
            if q is None:
                q = x.shape[1]
            elif x.shape[1] != q:
                raise RaggedData(
                    f"study {study_id!r} has {x.shape[1]} covariates, expected {q}"
                )
            if not (np.isfinite(y).all() and np.isfinite(x).all()):
                raise RaggedData(f"study {study_id!r} contains non-finite cells")
            self._ids.append(str(study_id))
            self._y[str(study_id)] = y
            self._x[str(study_id)] = x
        self.q = int(q)

    @property
    def study_ids(self) -> list[str]:
        return list(self._ids)

    @property
    def sizes(self) -> dict[str, int]:
        return {s: len(self._y[s]) for s in self._ids}

    def outcomes(self, study_id: str) -> np.ndarray:
        return self._y[study_id]

    def covariates(self, study_id: str) -> np.ndarray:
        return self._x[study_id]

    def __len__(self) -> int:
        return len(self._ids)

    def __iter__(self):
        for s in self._ids:
            yield s, self._y[s], self._x[s]

    def replace_covariates(self, new_x: dict[str, np.ndarray]) -> "IpdDataset":
        return IpdDataset(
            [(s, self._y[s].copy(), np.asarray(new_x[s], float)) for s in self._ids]
        )


def recover_moments(study: StudySummary) -> StudyMoments:
    """Recover (sigma, lambda, mu) from a bivariate study summary.

    The reported standard errors of a simple linear regression determine
    the residual s.d., the exposure s.d. and the exposure mean exactly:

    * ``sigma = sqrt(sigma2_hat)``
    * ``lambda = sigma / (se_beta * sqrt(n - 1))``
    * ``mu = sqrt((se_alpha / se_beta)**2 - sigma2_hat / (n * se_beta**2))``

    ``mu`` is only determined up to sign; the nonnegative root is
    returned.

    Raises
    ------
    MissingField
        If the bivariate fields are absent.
    NegativeRadicand
        If the argument of the square root for ``mu`` is negative, which
        indicates mutually inconsistent summary statistics.
    """
    if not study.has_bivariate:
        raise MissingField(
            f"study {study.study_id!r}: moment recovery needs alpha_hat, "
            "se_alpha and sigma2_hat"
        )
    sigma = math.sqrt(study.sigma2_hat)
    lam = sigma / (study.se_beta * math.sqrt(study.n - 1))
    radicand = (study.se_alpha / study.se_beta) ** 2 - study.sigma2_hat / (
        study.n * study.se_beta**2
    )
    if radicand < 0:
        raise NegativeRadicand(
            f"study {study.study_id!r}: se_alpha^2 < sigma2_hat / n, "
            f"radicand {radicand:.6g}"
        )
    mu = math.sqrt(radicand)
    return StudyMoments(sigma=sigma, lambda_=lam, mu=mu)


def moments_to_se(moments: StudyMoments, n: int) -> tuple[float, float]:
    """Map (sigma, lambda, mu, n) back to (se_beta, se_alpha).

    Exact inverse of :func:`recover_moments`; used by the round-trip
    invariant tests.
    """
    se_beta = moments.sigma / (moments.lambda_ * math.sqrt(n - 1))
    se_alpha = math.sqrt((se_beta * moments.mu) ** 2 + moments.sigma**2 / n)
    return se_beta, se_alpha


def sampling_covariance(moments: StudyMoments, n: int) -> np.ndarray:
    """Exact covariance of the least-squares pair (alpha_hat, beta_hat).

    Uses the finite-sample least-squares form (exposure spread enters
    with its ``n - 1`` divisor), which is the form inverted by
    :func:`recover_moments`:

    * ``var(beta_hat)  = sigma^2 / (lambda^2 (n-1))``
    * ``cov            = -mu * var(beta_hat)``
    * ``var(alpha_hat) = sigma^2 / n + mu^2 * var(beta_hat)``
    """
    vb = moments.sigma**2 / (moments.lambda_**2 * (n - 1))
    cov = -moments.mu * vb
    va = moments.sigma**2 / n + moments.mu**2 * vb
    return np.array([[va, cov], [cov, vb]])


# ---------------------------------------------------------------------------
# flat-file formats
# ---------------------------------------------------------------------------


def _parse_float(text, row, column, required):
    text = text.strip() if text is not None else ""
    if text == "":
        if required:
            raise ParseError(f"missing value for {column!r}", row=row, column=column)
        return None
    try:
        return float(text)
    except ValueError:
        raise ParseError(
            f"cannot parse {text!r} as a number", row=row, column=column
        ) from None


def load_summaries(path) -> list[StudySummary]:
    """Read study summaries from CSV.

    The file must have exactly the header
    ``study_id,n,beta_hat,se_beta,alpha_hat,se_alpha,sigma2_hat,known_clean``
    (any column order); the optional bivariate columns may be blank.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header required") from None
        header = [h.strip() for h in header]
        missing = [c for c in SUMMARY_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required columns {missing}")
        unknown = [c for c in header if c not in SUMMARY_COLUMNS]
        if unknown:
            raise SchemaError(f"{path}: unknown columns {unknown}")
        idx = {c: header.index(c) for c in SUMMARY_COLUMNS}

        out = []
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} cells, found {len(row)}", row=rownum
                )
            cell = lambda c: row[idx[c]]
            study_id = cell("study_id").strip()
            if not study_id:
                raise ParseError("empty study_id", row=rownum, column="study_id")
            ntext = cell("n").strip()
            try:
                n = int(ntext)
            except ValueError:
                raise ParseError(
                    f"cannot parse {ntext!r} as an integer", row=rownum, column="n"
                ) from None
            clean_text = cell("known_clean").strip().lower()
            if clean_text not in ("true", "false"):
                raise ParseError(
                    f"known_clean must be true or false, got {clean_text!r}",
                    row=rownum,
                    column="known_clean",
                )
            try:
                out.append(
                    StudySummary(
                        study_id=study_id,
                        n=n,
                        beta_hat=_parse_float(cell("beta_hat"), rownum, "beta_hat", True),
                        se_beta=_parse_float(cell("se_beta"), rownum, "se_beta", True),
                        alpha_hat=_parse_float(cell("alpha_hat"), rownum, "alpha_hat", False),
                        se_alpha=_parse_float(cell("se_alpha"), rownum, "se_alpha", False),
                        sigma2_hat=_parse_float(cell("sigma2_hat"), rownum, "sigma2_hat", False),
                        known_clean=clean_text == "true",
                    )
                )
            except DomainError as exc:
                raise ParseError(str(exc), row=rownum) from exc
        return out


def save_summaries(studies: list[StudySummary], path) -> None:
    """Write study summaries to CSV (inverse of :func:`load_summaries`)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for s in studies:
            writer.writerow(
                [
                    s.study_id,
                    s.n,
                    repr(s.beta_hat),
                    repr(s.se_beta),
                    "" if s.alpha_hat is None else repr(s.alpha_hat),
                    "" if s.se_alpha is None else repr(s.se_alpha),
                    "" if s.sigma2_hat is None else repr(s.sigma2_hat),
                    "true" if s.known_clean else "false",
                ]
            )


def load_ipd(path) -> IpdDataset:
    """Read long-format individual-participant data.

    Expected header: ``study_id,y,x1,...,xQ`` with Q inferred from the
    header.  Rows are grouped by ``study_id`` preserving first-seen
    order.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file, header required") from None
        if len(header) < 3 or header[0] != "study_id" or header[1] != "y":
            raise SchemaError(
                f"{path}: header must be study_id,y,x1,...,xQ, got {header}"
            )
        expected_x = [f"x{i}" for i in range(1, len(header) - 1)]
        if header[2:] != expected_x:
            raise SchemaError(
                f"{path}: covariate columns must be {expected_x}, got {header[2:]}"
            )
        q = len(expected_x)

        order: list[str] = []
        ys: dict[str, list[float]] = {}
        xs: dict[str, list[list[float]]] = {}
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise RaggedData(
                    f"{path}: row {rownum} has {len(row)} cells, expected {len(header)}"
                )
            study_id = row[0].strip()
            y = _parse_float(row[1], rownum, "y", True)
            xrow = [
                _parse_float(row[2 + j], rownum, expected_x[j], True) for j in range(q)
            ]
            if study_id not in ys:
                order.append(study_id)
                ys[study_id] = []
                xs[study_id] = []
            ys[study_id].append(y)
            xs[study_id].append(xrow)
        if not order:
            raise SchemaError(f"{path}: no data rows")
        return IpdDataset(
            [(s, np.array(ys[s]), np.array(xs[s])) for s in order]
        )


def save_ipd(data: IpdDataset, path) -> None:
    """Write individual-participant data in the long format."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["study_id", "y"] + [f"x{i}" for i in range(1, data.q + 1)])
        for study_id, y, x in data:
            for j in range(len(y)):
                writer.writerow([study_id, repr(float(y[j]))] + [repr(float(v)) for v in x[j]])
