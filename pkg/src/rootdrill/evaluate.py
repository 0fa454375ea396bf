"""Scoring localization output against ground truth, and benchmark plumbing.

Combination-level F1 counts exact binding matches between predicted and true
root-cause combinations, aggregated over the cases of a benchmark setting.
The external-root-cause flag gets its own binary F1.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .data import AttributeCombination, MeasureSpec, Snapshot
from .localize import LocalizeConfig, localize
from .simulate import SimulatedFault, read_fault


@dataclass
class EvalCase:
    predicted: set[AttributeCombination]
    truth: set[AttributeCombination]
    predicted_external: bool
    truth_external: bool
    elapsed: float


@dataclass
class BenchmarkReport:
    per_setting: dict[tuple[int, int], float]
    overall_f1: float | None
    macro_f1: float | None
    exrc_f1: float
    mean_elapsed: float
    n_cases: int
    skipped: int


def f1_score(cases: Sequence[EvalCase]) -> float:
    """Micro-averaged F1 over whole attribute combinations.

    Empty predictions against empty truth are a perfect score: there was
    nothing to find and nothing was claimed.
    """
    tp = fp = fn = 0
    for c in cases:
        tp += len(c.predicted & c.truth)
        fp += len(c.predicted - c.truth)
        fn += len(c.truth - c.predicted)
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


def exrc_f1(cases: Sequence[EvalCase]) -> float:
    """Binary F1 of the external-root-cause flag."""
    tp = sum(1 for c in cases if c.predicted_external and c.truth_external)
    fp = sum(1 for c in cases if c.predicted_external and not c.truth_external)
    fn = sum(1 for c in cases if not c.predicted_external and c.truth_external)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def anomaly_magnitude(snapshot: Snapshot) -> float:
    """Relative size of the overall deviation: |sum(v - f)| / sum(f)."""
    v, f = snapshot.leaf_values()
    total_f = float(f.sum())
    if total_f <= 0.0:
        raise ValueError("total forecast is zero; magnitude undefined")
    return abs(float((v - f).sum())) / total_f


# -- benchmark orchestration -----------------------------------------------


def evaluate_fault(
    fault: SimulatedFault,
    cfg: LocalizeConfig | None = None,
    family_override: str | None = None,
) -> EvalCase:
    """Localize one fault and compare against its ground truth."""
    snap = fault.snapshot
    if family_override is not None and family_override != snap.measure.distribution_family:
        m = snap.measure
        snap = Snapshot(
            snap.schema,
            snap.codes,
            snap.real,
            snap.forecast,
            MeasureSpec(m.kind, m.operands, family_override),
        )
    report = localize(snap, cfg)
    predicted = {c for combos in report.root_causes for c in combos}
    return EvalCase(
        predicted=predicted,
        truth=fault.truth_combinations(),
        predicted_external=report.external_root_cause,
        truth_external=fault.external,
        elapsed=report.elapsed,
    )


def _eval_dir(args: tuple[str, LocalizeConfig, str | None]) -> tuple[str, EvalCase]:
    path, cfg, family = args
    fault = read_fault(path)
    case = evaluate_fault(fault, cfg, family)
    # carry the setting key through the worker boundary
    return f"{fault.params.n_element},{fault.params.cuboid_layer}", case


def find_fault_dirs(dataset_dir: str | Path) -> list[Path]:
    root = Path(dataset_dir)
    return sorted(p.parent for p in root.rglob("truth.json"))


def run_benchmark(
    dataset_dir: str | Path,
    cfg: LocalizeConfig | None = None,
    workers: int = 1,
    family_override: str | None = None,
) -> BenchmarkReport:
    """Evaluate every fault directory under ``dataset_dir``.

    Malformed directories are skipped with a warning and counted.  Results are
    aggregated in directory order, so reports are reproducible regardless of
    worker count.
    """
    cfg = cfg or LocalizeConfig()
    dirs = find_fault_dirs(dataset_dir)
    jobs = [(str(d), cfg, family_override) for d in dirs]
    results: list[tuple[str, EvalCase] | None] = []
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for d, res in zip(dirs, pool.map(_try_eval, jobs, chunksize=4)):
                if res is None:
                    warnings.warn(f"skipping malformed fault directory {d}")
                results.append(res)
    else:
        for job, d in zip(jobs, dirs):
            res = _try_eval(job)
            if res is None:
                warnings.warn(f"skipping malformed fault directory {d}")
            results.append(res)

    cases_by_setting: dict[tuple[int, int], list[EvalCase]] = {}
    all_cases: list[EvalCase] = []
    skipped = 0
    for res in results:
        if res is None:
            skipped += 1
            continue
        key_s, case = res
        n, layer = key_s.split(",")
        cases_by_setting.setdefault((int(n), int(layer)), []).append(case)
        all_cases.append(case)

    per_setting = {k: f1_score(v) for k, v in sorted(cases_by_setting.items())}
    overall = f1_score(all_cases) if all_cases else None
    macro = (
        sum(f1_score([c]) for c in all_cases) / len(all_cases) if all_cases else None
    )
    mean_elapsed = (
        sum(c.elapsed for c in all_cases) / len(all_cases) if all_cases else 0.0
    )
    return BenchmarkReport(
        per_setting=per_setting,
        overall_f1=overall,
        macro_f1=macro,
        exrc_f1=exrc_f1(all_cases),
        mean_elapsed=mean_elapsed,
        n_cases=len(all_cases),
        skipped=skipped,
    )


def _try_eval(args: tuple[str, LocalizeConfig, str | None]):
    try:
        return _eval_dir(args)
    except Exception:
        return None
