"""Per-image counts, human count ingestion and human-vs-automated comparison.

Arithmetic is exact (:class:`fractions.Fraction`); rounding to one decimal,
half-up, happens only when values are displayed.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from importlib import resources
from typing import Optional

TOTAL_ID = "TOTAL"
COUNTS_HEADER = ["image", "auto_con", "auto_lib", "auto_mean", "error"]
COMPARISON_HEADER = ["image", "auto_con", "auto_lib", "auto_mean", "human_mean"]
HUMAN_HEADER = ["image", "expert", "con", "lib"]

# Agreement bands, in percent.
CONSERVATIVE_BAND = 5.0
LIBERAL_BAND = 10.0
MEAN_BAND = 10.0


class DuplicateImage(ValueError):
    pass


class JoinError(ValueError):
    def __init__(self, missing_auto, missing_human):
        self.missing_auto = sorted(missing_auto, key=natural_key)
        self.missing_human = sorted(missing_human, key=natural_key)
        parts = []
        if self.missing_auto:
            parts.append("no automated count for: " + ", ".join(self.missing_auto))
        if self.missing_human:
            parts.append("no human count for: " + ", ".join(self.missing_human))
        super().__init__("; ".join(parts))


def natural_key(image_id: str):
    return [(0, int(tok), "") if tok.isdigit() else (1, 0, tok) for tok in re.split(r"(\d+)", image_id) if tok]


def round_half_up(value, places: int = 1) -> Decimal:
    q = Fraction(value)
    d = Decimal(q.numerator) / Decimal(q.denominator)
    return d.quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def fmt1(value) -> str:
    return str(round_half_up(value, 1))


@dataclass(frozen=True)
class ImageCount:
    imageId: str
    con: int
    lib: int

    def __post_init__(self):
        if self.con < 0 or self.lib < 0:
            raise ValueError("counts must be non-negative")

    @property
    def mean(self) -> Fraction:
        return Fraction(self.con + self.lib, 2)


@dataclass(frozen=True)
class HumanCounts:
    imageId: str
    experts: tuple  # ((con, lib), ...) in expert order

    def __post_init__(self):
        if not self.experts:
            raise ValueError(f"{self.imageId}: need at least one expert")
        for con, lib in self.experts:
            if con < 0 or lib < con:
                raise ValueError(f"{self.imageId}: expert counts need 0 <= con <= lib, got ({con}, {lib})")

    @property
    def expert_means(self) -> tuple:
        return tuple(Fraction(c + l, 2) for c, l in self.experts)

    @property
    def mean(self) -> Fraction:
        m = self.expert_means
        return sum(m, Fraction(0)) / len(m)

    @property
    def con_mean(self) -> Fraction:
        return Fraction(sum(c for c, _ in self.experts), len(self.experts))

    @property
    def lib_mean(self) -> Fraction:
        return Fraction(sum(l for _, l in self.experts), len(self.experts))


def aggregate(counts) -> ImageCount:
    seen = set()
    con = lib = 0
    for c in counts:
        if c.imageId in seen:
            raise DuplicateImage(c.imageId)
        seen.add(c.imageId)
        con += c.con
        lib += c.lib
    return ImageCount(TOTAL_ID, con, lib)


def human_mean(rows) -> tuple[dict, Fraction]:
    """Per-image average of expert means, and the exact total.

    The total is the sum of unrounded per-image values, so it may differ in
    the last displayed digit from the sum of the rounded column.
    """
    per_image = {h.imageId: h.mean for h in rows}
    return per_image, sum(per_image.values(), Fraction(0))


def _sum_experts(rows) -> HumanCounts:
    rows = list(rows)
    n = len(rows[0].experts)
    if any(len(h.experts) != n for h in rows):
        raise ValueError("every image needs the same number of experts")
    totals = tuple(
        (sum(h.experts[e][0] for h in rows), sum(h.experts[e][1] for h in rows)) for e in range(n)
    )
    return HumanCounts(TOTAL_ID, totals)


def deviation_pct(auto, reference) -> Optional[float]:
    reference = Fraction(reference)
    if reference == 0:
        return None
    return float((Fraction(auto) - reference) / reference * 100)


def _deviations(auto: ImageCount, human: HumanCounts) -> dict:
    return {
        "conservative": deviation_pct(auto.con, human.con_mean),
        "liberal": deviation_pct(auto.lib, human.lib_mean),
        "mean": deviation_pct(auto.mean, human.mean),
    }


def _within(dev, band):
    return dev is not None and abs(dev) <= band


def bands(devs: dict) -> dict:
    return {
        "conservative_within_5pct": _within(devs["conservative"], CONSERVATIVE_BAND),
        "liberal_within_10pct": _within(devs["liberal"], LIBERAL_BAND),
        "mean_within_10pct": _within(devs["mean"], MEAN_BAND),
    }


@dataclass(frozen=True)
class ComparisonRow:
    auto: ImageCount
    human: HumanCounts
    deviations: dict

    @property
    def imageId(self):
        return self.auto.imageId

    @property
    def bands(self):
        return bands(self.deviations)


@dataclass(frozen=True)
class ComparisonReport:
    rows: list
    total: ComparisonRow
    experts: int = field(default=0)

    @property
    def deviations(self):
        return self.total.deviations

    @property
    def bands(self):
        return self.total.bands

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(COMPARISON_HEADER)
        for r in [*self.rows, self.total]:
            w.writerow([r.imageId, r.auto.con, r.auto.lib, fmt1(r.auto.mean), fmt1(r.human.mean)])
        return buf.getvalue()

    def to_json(self) -> dict:
        def row(r):
            return {
                "image": r.imageId,
                "auto": {"con": r.auto.con, "lib": r.auto.lib, "mean": float(r.auto.mean)},
                "human": {
                    "experts": [{"con": c, "lib": l, "mean": float(m)} for (c, l), m in zip(r.human.experts, r.human.expert_means)],
                    "con_mean": float(r.human.con_mean),
                    "lib_mean": float(r.human.lib_mean),
                    "mean": float(r.human.mean),
                    "mean_display": fmt1(r.human.mean),
                },
                "deviation_pct": r.deviations,
                "bands": r.bands,
            }

        return {
            "experts": self.experts,
            "images": [row(r) for r in self.rows],
            "total": row(self.total),
            "bands_pct": {"conservative": CONSERVATIVE_BAND, "liberal": LIBERAL_BAND, "mean": MEAN_BAND},
        }


def compare(auto, humans) -> ComparisonReport:
    """Join automated and human counts by image and measure agreement."""
    auto = list(auto)
    humans = list(humans)
    aggregate(auto)  # rejects duplicates
    by_auto = {a.imageId: a for a in auto}
    by_human = {}
    for h in humans:
        if h.imageId in by_human:
            raise DuplicateImage(h.imageId)
        by_human[h.imageId] = h
    if by_auto.keys() != by_human.keys():
        raise JoinError(by_human.keys() - by_auto.keys(), by_auto.keys() - by_human.keys())
    ids = sorted(by_auto, key=natural_key)
    rows = [ComparisonRow(by_auto[i], by_human[i], _deviations(by_auto[i], by_human[i])) for i in ids]
    if rows:
        tot_h = _sum_experts(by_human[i] for i in ids)
        experts = len(tot_h.experts)
    else:
        tot_h, experts = HumanCounts(TOTAL_ID, ((0, 0),)), 0
    tot_a = aggregate(auto)
    return ComparisonReport(rows, ComparisonRow(tot_a, tot_h, _deviations(tot_a, tot_h)), experts)


# -- file formats ------------------------------------------------------------


@dataclass(frozen=True)
class CountRow:
    """One row of an analyze/batch report: a count or a per-image failure."""

    imageId: str
    count: Optional[ImageCount] = None
    error: str = ""


def counts_csv(rows) -> str:
    rows = sorted(rows, key=lambda r: natural_key(r.imageId))
    good = [r.count for r in rows if r.count is not None]
    total = aggregate(good)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COUNTS_HEADER)
    for r in rows:
        if r.count is None:
            w.writerow([r.imageId, "", "", "", r.error])
        else:
            w.writerow([r.imageId, r.count.con, r.count.lib, fmt1(r.count.mean), ""])
    w.writerow([TOTAL_ID, total.con, total.lib, fmt1(total.mean), ""])
    return buf.getvalue()


def counts_json(rows) -> dict:
    rows = sorted(rows, key=lambda r: natural_key(r.imageId))
    total = aggregate([r.count for r in rows if r.count is not None])
    return {
        "images": [
            {"image": r.imageId, "con": r.count.con, "lib": r.count.lib, "mean": float(r.count.mean)}
            if r.count is not None
            else {"image": r.imageId, "error": r.error}
            for r in rows
        ],
        "total": {"con": total.con, "lib": total.lib, "mean": float(total.mean)},
        "errors": sum(1 for r in rows if r.count is None),
    }


def parse_counts_csv(text: str) -> list:
    """Automated counts from a report CSV; TOTAL and error rows are skipped."""
    reader = csv.DictReader(io.StringIO(text))
    need = {"image", "auto_con", "auto_lib"}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        raise ValueError(f"report CSV needs columns {sorted(need)}")
    out = []
    for row in reader:
        if row["image"] == TOTAL_ID or (row.get("error") or "").strip() or row["auto_con"] == "":
            continue
        out.append(ImageCount(row["image"], int(row["auto_con"]), int(row["auto_lib"])))
    return out


def parse_human_csv(text: str) -> list:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != HUMAN_HEADER:
        raise ValueError(f"human counts CSV header must be {','.join(HUMAN_HEADER)}")
    grouped: dict[str, dict] = {}
    for row in reader:
        experts = grouped.setdefault(row["image"], {})
        if row["expert"] in experts:
            raise DuplicateImage(f"{row['image']} expert {row['expert']}")
        experts[row["expert"]] = (int(row["con"]), int(row["lib"]))
    return [
        HumanCounts(img, tuple(experts[e] for e in sorted(experts, key=natural_key)))
        for img, experts in grouped.items()
    ]


def human_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HUMAN_HEADER)
    for h in sorted(rows, key=lambda h: natural_key(h.imageId)):
        for e, (c, l) in enumerate(h.experts, start=1):
            w.writerow([h.imageId, e, c, l])
    return buf.getvalue()


def read_text(source: str) -> str:
    with open(source, encoding="utf-8", newline="") as fh:
        return fh.read()


# -- bundled transcriptions of the published tables ---------------------------

TABLES = ("table1", "table2")


def table_text(name: str) -> str:
    if name not in TABLES:
        raise KeyError(name)
    return resources.files("follicount").joinpath(f"data/{name}.csv").read_text(encoding="utf-8")


def table_rows(name: str) -> list[dict]:
    """Rows of a bundled table, including its printed Total row if present."""
    return list(csv.DictReader(io.StringIO(table_text(name))))


def load_table(name: str) -> tuple[list, list]:
    """Automated counts and expert counts from a bundled table.

    Table 1 rows are images; Table 2 rows are magnifications (``100x``,
    ``200x``), each summarising a whole image set.
    """
    auto, humans = [], []
    for row in table_rows(name):
        if row.get("image", "") == "Total":
            continue
        image_id = row["image"] if name == "table1" else f"{row['mag']}x"
        auto.append(ImageCount(image_id, int(row["auto_con"]), int(row["auto_lib"])))
        humans.append(
            HumanCounts(image_id, tuple((int(row[f"h{e}_con"]), int(row[f"h{e}_lib"])) for e in (1, 2, 3)))
        )
    return auto, humans


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")
