"""Forecast baselines from historical snapshots.

The localization machinery only consumes (real, forecast) pairs; where the
forecast comes from is out of scope.  This module supplies the simplest
credible baseline, a moving average over recent history, so the tool is usable
on raw data that ships without predictions.
"""

from __future__ import annotations

import csv
import io
from typing import Mapping, Sequence

import numpy as np

from .data import (
    DEFAULT_VALUE_COLUMN,
    MeasureSpec,
    ParseError,
    Snapshot,
    _parse_table,
    snapshot_from_rows,
)

DEFAULT_WINDOW = 10

_Table = tuple[list[str], list[tuple[str, ...]], dict[str, list[float]]]


def parse_history(text: str, measure: MeasureSpec) -> _Table:
    """Parse one historical snapshot; only real values are required."""
    attrs, rows, real, _ = _parse_table(text, measure.operands, need_forecast=False)
    return attrs, rows, real


def moving_average(
    history: Sequence[Mapping[tuple[str, ...], float]],
    keys: Sequence[tuple[str, ...]],
    window: int = DEFAULT_WINDOW,
) -> np.ndarray:
    """Mean of the last ``window`` observations per key, absent readings as 0.

    A leaf that drops out of the data still existed; treating the gap as a
    zero observation keeps the baseline honest about disappearances.
    """
    if window < 1:
        raise ValueError("window must be positive")
    recent = history[-window:]
    if not recent:
        raise ValueError("no history to average")
    out = np.zeros(len(keys))
    for table in recent:
        for i, k in enumerate(keys):
            out[i] += table.get(k, 0.0)
    out /= len(recent)
    return out


def snapshot_with_forecast(
    current_text: str,
    history_texts: Sequence[str],
    measure: MeasureSpec | None = None,
    window: int = DEFAULT_WINDOW,
) -> Snapshot:
    """Assemble a snapshot whose forecast is a moving average of history.

    The leaf set is the union of the current table and the averaged history:
    leaves seen only in history enter with a real value of 0 (they vanished),
    leaves new to the current table get a forecast of 0 (nothing predicted
    them).  All tables must share the same attribute columns.
    """
    measure = measure or MeasureSpec()
    attrs, rows, real, _ = _parse_table(current_text, measure.operands, need_forecast=False)
    hist = [parse_history(t, measure) for t in history_texts]
    if not hist:
        raise ValueError("history is empty")
    for h_attrs, _, _ in hist:
        if h_attrs != attrs:
            raise ParseError(
                f"history attributes {h_attrs} do not match snapshot attributes {attrs}"
            )

    per_col_hist: dict[str, list[dict[tuple[str, ...], float]]] = {
        c: [] for c in measure.operands
    }
    union: set[tuple[str, ...]] = set(rows)
    for _, h_rows, h_real in hist[-window:]:
        union.update(h_rows)
        for c in measure.operands:
            per_col_hist[c].append(dict(zip(h_rows, h_real[c])))

    keys = sorted(union)
    cur: dict[str, dict[tuple[str, ...], float]] = {
        c: dict(zip(rows, real[c])) for c in measure.operands
    }
    real_out = {c: [cur[c].get(k, 0.0) for k in keys] for c in measure.operands}
    fcst_out = {
        c: list(moving_average(per_col_hist[c], keys, window))
        for c in measure.operands
    }
    return snapshot_from_rows(attrs, keys, real_out, fcst_out, measure)


def render_table(snapshot: Snapshot) -> str:
    """Serialize a snapshot back to CSV (attributes, then real/predict columns)."""
    m = snapshot.measure
    plain = m.kind == "fundamental" and m.operands == (DEFAULT_VALUE_COLUMN,)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = list(snapshot.schema.attributes)
    for c in m.operands:
        header += ["real", "predict"] if plain else [f"real_{c}", f"predict_{c}"]
    w.writerow(header)
    for i in range(snapshot.n_leaves):
        rec = [
            snapshot.schema.domains[a][snapshot.codes[i, j]]
            for j, a in enumerate(snapshot.schema.attributes)
        ]
        for c in m.operands:
            rec += [_fmt(snapshot.real[c][i]), _fmt(snapshot.forecast[c][i])]
        w.writerow(rec)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))
