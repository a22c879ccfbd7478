"""File formats: stratified CSV datasets, JSON truth/estimate documents,
benchmark tables and per-stratum graph exports."""

from __future__ import annotations

import csv
import json
import math
import re
from collections.abc import Sequence
from pathlib import Path

import numpy as np

from .model import (
    DataError,
    StratifiedDataset,
    StratifiedGraphEstimate,
    StratifiedIsingParameters,
    iter_pairs,
    validate_dataset,
)
from .simulation import BenchmarkRecord

STRATUM_COLUMN = "stratum"
BENCH_FIELDS = (
    "design", "structure", "p", "K", "rho", "replicate", "estimator",
    "acc_s", "acc_h", "lambda1", "lambda2", "df", "seconds", "error",
)


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


def read_dataset(path, delimiter: str = ",") -> StratifiedDataset:
    """Parse a header-first delimited file whose first column is ``stratum``."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    with fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        except UnicodeDecodeError as exc:
            raise DataError(f"{path}: not valid UTF-8") from exc
        header = [h.strip() for h in header]
        if not header or header[0] != STRATUM_COLUMN:
            raise DataError(f"{path}, line 1: first column must be {STRATUM_COLUMN!r}")
        try:
            return validate_dataset(reader, header)
        except UnicodeDecodeError as exc:
            raise DataError(f"{path}: not valid UTF-8") from exc
        except DataError as exc:
            raise DataError(f"{path}, {exc}") from None


def write_dataset(path, data: StratifiedDataset, delimiter: str = ",") -> None:
    """Write strata in order, one row per observation."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow([STRATUM_COLUMN, *data.variable_names])
        for name, s in zip(data.stratum_names, data.strata):
            for row in s.values:
                w.writerow([name, *row.tolist()])


# ---------------------------------------------------------------------------
# JSON documents
# ---------------------------------------------------------------------------


def _dump(path, doc: dict) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _clean(x: float) -> float:
    # avoid "-0.0" in output
    return float(x) + 0.0


def interaction_triples(table: np.ndarray, p: int) -> list:
    """``[j, l, [K values]]`` for every pair with a nonzero value."""
    out = []
    for (j, l), row in zip(iter_pairs(p), table):
        if np.any(row != 0):
            out.append([j, l, [_clean(v) for v in row]])
    return out


def truth_document(truth: StratifiedIsingParameters, stratum_names, variable_names, meta=None) -> dict:
    z = truth.heterogeneity(tol=0.0)
    return {
        "kind": "truth",
        "p": truth.p,
        "K": truth.K,
        "stratum_names": list(stratum_names),
        "variable_names": list(variable_names),
        "main_effects": [[_clean(v) for v in t.main_effects] for t in truth.per_stratum],
        "interactions": interaction_triples(truth.interaction_table(), truth.p),
        "heterogeneity": [[j, l] for (j, l), flag in zip(iter_pairs(truth.p), z) if flag],
        "design": meta or {},
    }


def estimate_document(
    estimate: StratifiedGraphEstimate, stratum_names, variable_names, meta: dict
) -> dict:
    return {
        "kind": "estimate",
        "p": estimate.p,
        "K": estimate.K,
        "stratum_names": list(stratum_names),
        "variable_names": list(variable_names),
        "main_effects": [[0.0] * estimate.p for _ in range(estimate.K)],
        "interactions": interaction_triples(estimate.edge_weights, estimate.p),
        "heterogeneity": [
            [j, l] for (j, l), flag in zip(iter_pairs(estimate.p), estimate.heterogeneity) if flag
        ],
        **meta,
    }


def write_document(path, doc: dict) -> None:
    _dump(path, doc)


def read_document(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"{path}: cannot open ({exc.strerror})") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}, line {exc.lineno}: invalid JSON ({exc.msg})") from exc
    for key in ("p", "K", "stratum_names", "interactions"):
        if key not in doc:
            raise DataError(f"{path}: missing field {key!r}")
    return doc


def weights_from_document(doc: dict) -> StratifiedGraphEstimate:
    """Rebuild the edge-weight table of a truth or estimate document."""
    p, K = int(doc["p"]), int(doc["K"])
    index = {pair: i for i, pair in enumerate(iter_pairs(p))}
    W = np.zeros((len(index), K))
    for item in doc["interactions"]:
        try:
            j, l, vals = item
            W[index[(int(j), int(l))]] = vals
        except (KeyError, ValueError, TypeError) as exc:
            raise DataError(f"malformed interaction entry {item!r}") from exc
    return StratifiedGraphEstimate(p, W)


# ---------------------------------------------------------------------------
# odds-ratio filter and exports
# ---------------------------------------------------------------------------


def odds_ratio_filter(W: np.ndarray, min_odds_ratio: float) -> np.ndarray:
    """Zero out pairs whose largest ``exp(|coef|)`` over strata is below the threshold."""
    if min_odds_ratio < 0:
        raise ValueError("min_odds_ratio must be >= 0")
    if min_odds_ratio <= 1:
        return W
    keep = np.exp(np.max(np.abs(W), axis=1)) >= min_odds_ratio
    return np.where(keep[:, None], W, 0.0)


def stratum_graph(doc: dict, k: int, min_odds_ratio: float = 1.0) -> dict:
    """Node list and weighted edge list of stratum ``k``."""
    names = doc.get("variable_names") or [f"V{i + 1}" for i in range(doc["p"])]
    edges = []
    for j, l, vals in doc["interactions"]:
        c = float(vals[k])
        if c == 0 or math.exp(abs(c)) < min_odds_ratio:
            continue
        edges.append({"source": names[j], "target": names[l], "weight": c, "odds_ratio": math.exp(c)})
    return {"stratum": doc["stratum_names"][k], "nodes": list(names), "edges": edges}


def _dot(graph: dict) -> str:
    lines = [f"graph {json.dumps(graph['stratum'])} {{"]
    for n in graph["nodes"]:
        lines.append(f"  {json.dumps(n)};")
    for e in graph["edges"]:
        lines.append(
            f"  {json.dumps(e['source'])} -- {json.dumps(e['target'])} "
            f"[label=\"{e['odds_ratio']:.3g}\", coef={e['weight']!r}];"
        )
    lines.append("}")
    return "\n".join(lines) + "\n"


def _safe(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", name) or "stratum"


def export_graphs(doc: dict, out_dir, fmt: str = "structured", min_odds_ratio: float = 1.0, prefix="graph") -> list[Path]:
    """Write one graph document per stratum; returns the paths written."""
    if fmt not in ("structured", "dot"):
        raise ValueError(f"unknown export format {fmt!r}; choose structured or dot")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(int(doc["K"])):
        g = stratum_graph(doc, k, min_odds_ratio)
        stem = f"{prefix}_{k + 1}_{_safe(g['stratum'])}"
        if fmt == "dot":
            path = out_dir / f"{stem}.dot"
            path.write_text(_dot(g), encoding="utf-8")
        else:
            path = out_dir / f"{stem}.json"
            _dump(path, g)
        paths.append(path)
    return paths


# ---------------------------------------------------------------------------
# benchmark records
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, tuple):
        return ";".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_records(path, records: Sequence[BenchmarkRecord], timing: bool = False) -> None:
    """Delimited table; ``seconds`` is left blank unless ``timing`` is set."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BENCH_FIELDS)
        for r in records:
            row = []
            for f in BENCH_FIELDS:
                v = getattr(r, f)
                if f == "seconds" and not timing:
                    v = ""
                row.append(_fmt(v))
            w.writerow(row)


def _parse_float(s: str) -> float:
    return math.nan if s == "" else float(s)


def read_records(path) -> list[BenchmarkRecord]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != BENCH_FIELDS:
            raise DataError(f"{path}, line 1: unexpected header")
        out = []
        for row in reader:
            lam2 = row["lambda2"]
            out.append(
                BenchmarkRecord(
                    design=row["design"],
                    structure=row["structure"],
                    p=int(row["p"]),
                    K=int(row["K"]),
                    rho=float(row["rho"]),
                    replicate=int(row["replicate"]),
                    estimator=row["estimator"],
                    acc_s=_parse_float(row["acc_s"]),
                    acc_h=_parse_float(row["acc_h"]),
                    lambda1=_parse_float(row["lambda1"]),
                    lambda2=tuple(map(float, lam2.split(";"))) if ";" in lam2 else _parse_float(lam2),
                    df=int(row["df"]),
                    seconds=_parse_float(row["seconds"]),
                    error=row["error"],
                )
            )
    return out
