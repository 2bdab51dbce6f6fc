"""Reading the convergence CSV produced by the solver harness.

The schema is one fixed header, comma separated data rows, and
``# fitted_order beta=... order=...`` comment lines appended by the
harness.  Anything else is rejected with the offending line attached.
"""

from dataclasses import dataclass

EXPECTED_HEADER = "beta,dt,rms_error,stderr,realizations,grid_nx,grid_ny,seed"


class SchemaError(ValueError):
    """A CSV file (or line) that does not conform to the harness schema."""

    def __init__(self, path, lineno, reason, content):
        self.path = str(path)
        self.lineno = lineno
        self.reason = reason
        self.content = content
        super().__init__(f"{self.path}, line {lineno}: {reason}: {content!r}")


@dataclass
class Row:
    beta: float
    dt: float                 # refinement parameter (h for spatial studies)
    rms_error: float
    stderr: float
    realizations: int
    grid_nx: int
    grid_ny: int
    seed: int


@dataclass
class Report:
    path: str
    rows: list
    fitted_orders: dict       # beta -> order, from the comment lines

    def betas(self):
        """Distinct beta values in first-appearance order."""
        seen = []
        for row in self.rows:
            if row.beta not in seen:
                seen.append(row.beta)
        return seen

    def series(self, beta):
        """(dts, errors, stderrs) for one beta, sorted by increasing dt."""
        rows = sorted((r for r in self.rows if r.beta == beta),
                      key=lambda r: r.dt)
        return ([r.dt for r in rows], [r.rms_error for r in rows],
                [r.stderr for r in rows])


def _parse_comment(path, lineno, line):
    tokens = line[1:].split()
    if not tokens:
        return None
    if tokens[0] != "fitted_order":
        raise SchemaError(path, lineno, "unrecognized comment", line)
    try:
        kv = dict(tok.split("=", 1) for tok in tokens[1:])
        return float(kv["beta"]), float(kv["order"])
    except (KeyError, ValueError) as exc:
        raise SchemaError(path, lineno, "bad fitted_order comment",
                          line) from exc


def parse_report(path):
    """Parse one harness CSV into a Report.

    Raises SchemaError naming the offending line for anything that does
    not match the schema, including a file with no data rows.
    """
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != EXPECTED_HEADER:
        raise SchemaError(path, 1, "missing or wrong header",
                          lines[0] if lines else "")
    rows = []
    fitted = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            parsed = _parse_comment(path, lineno, line)
            if parsed is not None:
                fitted[parsed[0]] = parsed[1]
            continue
        parts = line.split(",")
        if len(parts) != 8:
            raise SchemaError(path, lineno, "expected 8 fields", line)
        try:
            row = Row(beta=float(parts[0]), dt=float(parts[1]),
                      rms_error=float(parts[2]), stderr=float(parts[3]),
                      realizations=int(parts[4]), grid_nx=int(parts[5]),
                      grid_ny=int(parts[6]), seed=int(parts[7]))
        except ValueError as exc:
            raise SchemaError(path, lineno, "non-numeric field", line) from exc
        if (row.beta <= 0 or row.dt <= 0 or row.rms_error <= 0
                or row.stderr < 0 or row.realizations < 1):
            raise SchemaError(path, lineno, "value out of range", line)
        rows.append(row)
    if not rows:
        raise SchemaError(path, len(lines), "no data rows", lines[-1])
    return Report(path=str(path), rows=rows, fitted_orders=fitted)
