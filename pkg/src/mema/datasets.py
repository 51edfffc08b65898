"""Bundled example datasets.

Two aggregate datasets from the NELS88 school survey (13 schools,
science score regressed on reading score) ship with the package: the
original summaries and a contaminated variant in which 8 of the 13
schools had known amounts of Gaussian noise added to the exposure before
refitting.  The contamination magnitudes (``phi``) and the implied
attenuation factors (``gamma``) are available as a side table.
"""
from __future__ import annotations

import csv
from importlib import resources

from .study_data import StudySummary, load_summaries


def _path(name: str):
    return resources.files("mema") / "datasets" / name


def dataset_path(name: str) -> str:
    """Filesystem path of a bundled CSV (``nels88``, ``nels88_star``,
    ``nels88_star_error``)."""
    return str(_path(name + ".csv"))


def nels88() -> list[StudySummary]:
    """The 13 uncontaminated school summaries."""
    return load_summaries(dataset_path("nels88"))


def nels88_star() -> list[StudySummary]:
    """The contaminated summaries; schools 1-5 are flagged clean."""
    return load_summaries(dataset_path("nels88_star"))


def nels88_star_error() -> dict[str, tuple[float, float]]:
    """Map study_id -> (phi, gamma) for the contaminated dataset."""
    out = {}
    with open(dataset_path("nels88_star_error"), newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["study_id"]] = (float(row["phi"]), float(row["gamma"]))
    return out
