"""
Reading metric CSVs, evaluating directional checks over them, and the
between-group GAP worked scenarios.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from importlib import resources
from os import PathLike
from pathlib import Path

from .errors import DataParseError
from .metrics import GapPair, between_group_gap, delta_gap_revised

METRICS_HEADER = ["iteration", "algorithm", "dataset", "metric", "group", "value"]

SeriesKey = tuple[str, str, str, str]  # dataset, algorithm, metric, group


def read_metrics(paths: list[str | PathLike]) -> dict[SeriesKey, dict[int, float]]:
    "Merge one or more metrics CSVs into ``{(dataset, algorithm, metric, group): {iteration: value}}``."
    out: dict[SeriesKey, dict[int, float]] = {}
    for path in paths:
        path = Path(path)
        if not path.is_file():
            raise DataParseError("file not found", path)
        with open(path, newline="") as f:
            rows = csv.reader(f)
            header = next(rows, None)
            if header is None:
                continue
            if header != METRICS_HEADER:
                raise DataParseError(f"unexpected header {header}", path, 1)
            for lno, row in enumerate(rows, 2):
                if len(row) != 6:
                    raise DataParseError(f"expected 6 fields, got {len(row)}", path, lno)
                try:
                    it, value = int(row[0]), float(row[5])
                except ValueError as e:
                    raise DataParseError(str(e), path, lno) from None
                out.setdefault((row[2], row[1], row[3], row[4]), {})[it] = value
    return out


# ---------------------------------------------------------------------------
# Directional checks

CHECK_KINDS = ("increases", "decreases", "negative-at", "min-at-least")


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def default_criteria_path() -> Path:
    return Path(str(resources.files("popbias") / "data" / "criteria.json"))


def load_criteria(path: str | PathLike) -> list[dict]:
    path = Path(path)
    if not path.is_file():
        raise DataParseError("file not found", path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataParseError(f"invalid JSON ({e})", path) from None
    checks = doc.get("checks") if isinstance(doc, dict) else None
    if not isinstance(checks, list):
        raise DataParseError('expected an object with a "checks" list', path)
    for k, c in enumerate(checks):
        if c.get("kind") not in CHECK_KINDS:
            raise DataParseError(f"check {k}: kind must be one of {CHECK_KINDS}", path)
        for field in ("metric", "algorithms"):
            if field not in c:
                raise DataParseError(f"check {k}: missing {field!r}", path)
    return checks


def _expand(check: dict, data: dict[SeriesKey, dict[int, float]]):
    "Yield (label, series-or-None) for every dataset/algorithm/group the check names."
    metric = check["metric"]
    datasets = check.get("datasets") or sorted({k[0] for k in data}) or ["?"]
    for ds in datasets:
        for alg in check["algorithms"]:
            groups = check.get("groups")
            if groups is None:
                groups = sorted(k[3] for k in data if k[:3] == (ds, alg, metric)) or ["?"]
            for g in groups:
                yield f"{ds}/{alg}/{metric}[{g}]", data.get((ds, alg, metric, g))


def evaluate_checks(checks: list[dict], data: dict[SeriesKey, dict[int, float]]) -> list[CheckResult]:
    """
    Evaluate criteria against loaded series.  A check naming several
    algorithms or groups expands into one result per series; a series that is
    absent from the data fails.
    """
    results = []
    for c in checks:
        kind = c["kind"]
        prefix = c.get("name", kind)
        for label, s in _expand(c, data):
            name = f"{prefix}: {label}"
            if not s:
                results.append(CheckResult(name, False, "series missing"))
                continue
            if kind in ("increases", "decreases"):
                a, b = int(c.get("from", 1)), int(c.get("to", max(s)))
                if a not in s or b not in s:
                    results.append(CheckResult(name, False, f"iterations {a} and {b} not both present"))
                    continue
                ok = s[b] > s[a] if kind == "increases" else s[b] < s[a]
                results.append(CheckResult(name, ok, f"t={a}: {s[a]:.4f}, t={b}: {s[b]:.4f}"))
            elif kind == "negative-at":
                t = int(c.get("iteration", 1))
                if t not in s:
                    results.append(CheckResult(name, False, f"iteration {t} not present"))
                    continue
                results.append(CheckResult(name, s[t] < 0, f"t={t}: {s[t]:.4f}"))
            else:
                lo = float(c["threshold"])
                upto = int(c.get("through", max(s)))
                window = [s[t] for t in sorted(s) if t <= upto]
                low = min(window)
                ok = low >= lo and len(window) >= upto
                results.append(CheckResult(name, ok, f"min over t<={upto}: {low:.4f} (need >= {lo}, {len(window)} points)"))
    return results


# ---------------------------------------------------------------------------
# Worked between-group GAP scenarios

GAP_P = 0.4

#: (popularity change of g, of h) in the six scenarios.
SCENARIOS = [(0.5, 0.5), (0.0, -0.5), (0.0, 0.5), (-0.2, 0.1), (-0.1, 0.2), (-0.5, 0.5)]

#: Published (revised delta GAP g, h, between-group GAP), printed at 2 decimals.
PUBLISHED = [
    (0.67, 0.66, 0.00),
    (1.00, 1.33, 0.28),
    (1.00, 0.67, 0.40),
    (1.13, 0.93, 0.19),
    (0.07, 0.87, 0.21),
    (1.33, 0.67, 0.67),
]

#: Cells (scenario index, column) the formula contradicts; the between-group
#: column of the same rows agrees with the formula, so these are misprints.
KNOWN_TYPOS = {(0, 1), (4, 0)}


@dataclass(frozen=True)
class ScenarioRow:
    scenario: int
    change_g: float
    change_h: float
    revised_g: float
    revised_h: float
    between: float
    published: tuple[float, float, float]

    def cell_flags(self) -> tuple[str, str, str]:
        """
        Per-column marker: ``"typo"`` for the known misprints, ``"trunc"``
        where the published value is the formula value truncated rather than
        rounded, else ``""``.
        """
        flags = []
        for col, (v, pub) in enumerate(zip((self.revised_g, self.revised_h, self.between), self.published)):
            if (self.scenario - 1, col) in KNOWN_TYPOS:
                flags.append("typo")
            elif abs(round(v, 2) - pub) > 0.005 and abs(int(v * 100) / 100 - pub) < 1e-9:
                flags.append("trunc")
            else:
                flags.append("")
        return tuple(flags)


def gap_scenarios() -> list[ScenarioRow]:
    "Recompute the six scenarios at ``GAP_p = 0.4``."
    rows = []
    for k, (cg, ch) in enumerate(SCENARIOS):
        rg = delta_gap_revised(GapPair(GAP_P, GAP_P * (1 + cg)))
        rh = delta_gap_revised(GapPair(GAP_P, GAP_P * (1 + ch)))
        rows.append(ScenarioRow(k + 1, cg, ch, rg, rh, between_group_gap(rg, rh), PUBLISHED[k]))
    return rows


def _pct(x: float) -> str:
    return f"{x:+.0%}" if x else "0%"


def format_gap_scenarios(rows: list[ScenarioRow]) -> str:
    lines = [
        f"{'#':>2}  {'pop(g)':>7} {'pop(h)':>7}  {'rev(g)':>7} {'rev(h)':>7} {'between':>8}   published",
    ]
    for r in rows:
        flags = r.cell_flags()
        pub = "  ".join(
            f"{p:.2f}" + (f" [{f}]" if f else "") for p, f in zip(r.published, flags)
        )
        lines.append(
            f"{r.scenario:>2}  {_pct(r.change_g):>7} {_pct(r.change_h):>7}  "
            f"{r.revised_g:>7.4f} {r.revised_h:>7.4f} {r.between:>8.4f}   {pub}"
        )
    lines.append("[typo] published cell contradicts the formula and its own row; formula value kept")
    lines.append("[trunc] published cell is the formula value truncated to 2 decimals")
    return "\n".join(lines)
