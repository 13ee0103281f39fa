"""The n x d observation matrix passed between simulation, fitting and diagnostics."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, ParseError


@dataclass
class Dataset:
    values: np.ndarray
    columns: tuple = ("y1", "y2")
    scaling_factors: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)
    # the unscaled observations, kept so that unscaled() is exact rather than values * factors
    raw: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DataError(f"dataset must be a 2-d matrix, got shape {self.values.shape}")
        self.columns = tuple(self.columns)
        if len(self.columns) != self.values.shape[1]:
            raise DataError(f"{len(self.columns)} column labels for {self.values.shape[1]} columns")
        if self.scaling_factors is None:
            self.scaling_factors = np.ones(self.values.shape[1])
        self.scaling_factors = np.asarray(self.scaling_factors, dtype=float)
        if np.any(self.scaling_factors <= 0):
            raise DataError("scaling factors must be positive")

    def __len__(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def d(self):
        return self.values.shape[1]

    def radii(self):
        """L1 norm of each row."""
        return np.abs(self.values).sum(axis=1)

    def angles(self):
        """First component of ``y / ||y||_1``."""
        return self.values[:, 0] / self.radii()

    def unscaled(self):
        if self.raw is not None:
            return self.raw
        return self.values * self.scaling_factors

    def to_csv(self, path):
        path = Path(path)
        with path.open("w", newline="") as fh:
            fh.write(",".join(self.columns) + "\n")
            np.savetxt(fh, self.values, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, provenance=None):
        path = Path(path)
        rows = []
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ParseError(f"{path} is empty", line=1) from None
            header = [h.strip() for h in header]
            for lineno, row in enumerate(reader, start=2):
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(header):
                    raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
                try:
                    rows.append([float(c) for c in row])
                except ValueError as exc:
                    raise ParseError(str(exc), line=lineno) from None
        if not rows:
            raise DataError(f"{path} contains no observations")
        prov = {"source": str(path)}
        prov.update(provenance or {})
        return cls(np.array(rows), columns=header, provenance=prov)

    def manifest(self, **extra):
        out = {
            "n": self.n,
            "columns": list(self.columns),
            "scaling_factors": [float(s) for s in self.scaling_factors],
            "provenance": self.provenance,
        }
        out.update(extra)
        return out

    def write_manifest(self, path, **extra):
        Path(path).write_text(json.dumps(self.manifest(**extra), indent=2, default=_json_default))


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")
