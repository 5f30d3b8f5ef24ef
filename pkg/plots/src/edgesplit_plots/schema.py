"""CSV schemas shared with the solver package, and strict loading.

The renderer never runs the solver; these column lists mirror the producer's
declared interface and any drift is refused with an explicit column diff.
"""

from __future__ import annotations

import csv

RESULT_COLUMNS = [
    "seed", "method", "N", "M", "omega_t", "omega_e", "omega_s",
    "energy_J", "delay_s", "stability_bound", "objective",
    "outer_rounds", "ao_iters", "cccp_iters", "kkt_residual", "runtime_ms",
    "avg_delay_s",
]

TRACE_COLUMNS = [
    "seed", "method", "N", "M", "iteration", "rho",
    "penalized_objective", "assoc_objective", "binarity_gap",
]

_TEXT_COLUMNS = {"method"}


class SchemaError(ValueError):
    """Header mismatch; carries the missing/unexpected column diff."""

    def __init__(self, missing, unexpected):
        self.missing = list(missing)
        self.unexpected = list(unexpected)
        super().__init__(
            f"CSV schema mismatch: missing columns {self.missing}, "
            f"unexpected columns {self.unexpected}")


def load_rows(path: str, columns: list[str]) -> list[dict]:
    """Parse a CSV against an exact expected header; numeric cells become
    floats ('inf' allowed), and an empty table is an error."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(columns, []) from None
        if header != columns:
            raise SchemaError([c for c in columns if c not in header],
                              [c for c in header if c not in columns])
        rows = []
        for line in reader:
            row = {}
            for key, cell in zip(columns, line):
                row[key] = cell if key in _TEXT_COLUMNS else float(cell)
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return rows
