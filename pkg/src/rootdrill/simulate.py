"""Fault injection with known ground truth.

Faults are planted onto a base snapshot by scaling the leaves under randomly
chosen attribute combinations so that each combination deviates by a randomly
drawn magnitude, exactly the pattern an upstream root cause produces.  The
pre-perturbation values serve as the forecast, so forecast error is fully
controlled by the injected noise.  Invalid faults (ambiguous ground truth, or
background noise so large the untouched remainder looks anomalous itself) are
detected and discarded.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .cluster import knee_threshold
from .data import (
    AttributeCombination,
    Cuboid,
    MeasureSpec,
    Snapshot,
    cuboids_by_layer,
    drop_attributes,
    snapshot_from_rows,
)
from .forecast import render_table

_MEASURE_KINDS = ("fundamental", "success_rate")

# combinations sharing at least this Jaccard overlap of leaves are
# interchangeable as explanations, making the planted truth ambiguous
JACCARD_CUTOFF = 0.95


@dataclass(frozen=True)
class SimulationParams:
    """Knobs of one fault cell.

    n_element combinations are planted, each in a (possibly repeated) cuboid
    of layer ``cuboid_layer``.  Each gets its own deviation magnitude from
    ``magnitude_range``; magnitudes are kept at least ``min_score_separation``
    apart so distinct causes stay distinguishable on the score axis.
    """

    n_element: int
    cuboid_layer: int
    base_noise_sigma: float = 0.0
    leaf_noise_sigma: float = 0.05
    magnitude_range: tuple[float, float] = (0.2, 1.0)
    min_score_separation: float = 0.05
    seed: int | None = None
    measure_kind: str = "fundamental"

    def __post_init__(self) -> None:
        if self.n_element < 1:
            raise ValueError("n_element must be at least 1")
        if self.cuboid_layer < 1:
            raise ValueError("cuboid_layer must be at least 1")
        if self.base_noise_sigma < 0 or self.leaf_noise_sigma < 0:
            raise ValueError("noise sigmas must be non-negative")
        lo, hi = self.magnitude_range
        if not 0.0 < lo <= hi <= 1.0:
            raise ValueError("magnitude_range must lie inside (0, 1]")
        if self.measure_kind not in _MEASURE_KINDS:
            raise ValueError(f"unknown measure_kind: {self.measure_kind!r}")


@dataclass
class SimulatedFault:
    snapshot: Snapshot
    ground_truth: tuple[tuple[AttributeCombination, ...], ...]
    params: SimulationParams
    magnitudes: dict[AttributeCombination, float] = field(default_factory=dict)
    external: bool = False
    dropped_attributes: tuple[str, ...] = ()

    def truth_combinations(self) -> set[AttributeCombination]:
        return {c for group in self.ground_truth for c in group}


# -- fault construction ----------------------------------------------------


def _draw_magnitudes(params: SimulationParams, rng: np.random.Generator) -> np.ndarray:
    lo, hi = params.magnitude_range
    for _ in range(1000):
        m = rng.uniform(lo, hi, size=params.n_element)
        if params.n_element == 1:
            return m
        gaps = np.diff(np.sort(m))
        if gaps.min() >= params.min_score_separation:
            return m
    raise RuntimeError(
        f"could not draw {params.n_element} magnitudes {params.min_score_separation} "
        f"apart within {params.magnitude_range}"
    )


def _pick_combinations(
    base: Snapshot, params: SimulationParams, rng: np.random.Generator
) -> list[tuple[Cuboid, int, np.ndarray]]:
    layer_cuboids = [
        c for c in cuboids_by_layer(base.schema) if c.layer == params.cuboid_layer
    ]
    if not layer_cuboids:
        raise ValueError(
            f"no layer-{params.cuboid_layer} cuboid on {base.schema.n_attributes} attributes"
        )
    picks: list[tuple[Cuboid, int, np.ndarray]] = []
    taken: set[tuple[tuple[str, ...], int]] = set()
    affected = np.zeros(base.n_leaves, dtype=bool)
    for _ in range(params.n_element):
        for _attempt in range(100):
            cuboid = layer_cuboids[rng.integers(len(layer_cuboids))]
            idx = base.cuboid_index(cuboid)
            g = int(rng.integers(idx.n_groups))
            if (cuboid.attrs, g) in taken:
                continue
            leaves = idx.leaves_of(g)
            if affected[leaves].any():
                continue  # overlapping causes would blur each other's ripple
            taken.add((cuboid.attrs, g))
            affected[leaves] = True
            picks.append((cuboid, g, leaves))
            break
        else:
            raise RuntimeError(
                "could not place non-overlapping root causes after 100 attempts"
            )
    return picks


def simulate_fault(
    base: Snapshot, params: SimulationParams, rng: np.random.Generator
) -> SimulatedFault:
    """Plant one fault onto ``base``; the base's real values act as the truth."""
    if params.measure_kind == "success_rate":
        if base.measure.kind != "quotient":
            raise ValueError("success_rate simulation needs a quotient measure base")
        return _simulate_success_rate(base, params, rng)
    if base.measure.kind != "fundamental":
        raise ValueError(f"cannot simulate {params.measure_kind} on a {base.measure.kind} measure")

    col = base.measure.operands[0]
    truth = base.real[col].astype(float)
    v = truth * (1.0 + params.base_noise_sigma * rng.standard_normal(truth.size))
    np.clip(v, 0.0, None, out=v)

    picks = _pick_combinations(base, params, rng)
    mags = _draw_magnitudes(params, rng)
    for (cuboid, g, leaves), d in zip(picks, mags):
        # the whole slice deviates by exactly d, replacing the base noise
        v[leaves] = truth[leaves] * (1.0 - d) / (1.0 + d)
    affected = np.concatenate([leaves for _, _, leaves in picks])
    if params.leaf_noise_sigma > 0:
        v[affected] *= 1.0 + params.leaf_noise_sigma * rng.standard_normal(affected.size)
        np.clip(v, 0.0, None, out=v)
    if base.measure.distribution_family == "poisson":
        v = np.clip(np.rint(v), 0.0, None)

    snapshot = Snapshot(
        base.schema,
        base.codes,
        {col: v},
        {col: truth.copy()},
        base.measure,
    )
    combos = [base.combination_of_group(c, g) for c, g, _ in picks]
    return SimulatedFault(
        snapshot,
        _group_truth(combos, mags),
        params,
        dict(zip(combos, (float(m) for m in mags))),
    )


def _simulate_success_rate(
    base: Snapshot, params: SimulationParams, rng: np.random.Generator
) -> SimulatedFault:
    succ_col, total_col = base.measure.operands
    succ_t = base.real[succ_col].astype(float)
    total_t = base.real[total_col].astype(float)
    with np.errstate(invalid="ignore", divide="ignore"):
        rate_t = np.where(total_t > 0, succ_t / np.where(total_t > 0, total_t, 1.0), 0.0)

    rate = rate_t * (1.0 + params.base_noise_sigma * rng.standard_normal(rate_t.size))
    np.clip(rate, 0.0, 1.0, out=rate)

    picks = _pick_combinations(base, params, rng)
    mags = _draw_magnitudes(params, rng)
    for (cuboid, g, leaves), d in zip(picks, mags):
        rate[leaves] = rate_t[leaves] * (1.0 - d) / (1.0 + d)
    affected = np.concatenate([leaves for _, _, leaves in picks])
    if params.leaf_noise_sigma > 0:
        rate[affected] *= 1.0 + params.leaf_noise_sigma * rng.standard_normal(affected.size)
        np.clip(rate, 0.0, 1.0, out=rate)

    # counts are re-drawn around the truth so the rates stay the driving signal
    total_v = rng.poisson(total_t).astype(float)
    succ_v = rng.binomial(total_v.astype(np.int64), rate).astype(float)

    snapshot = Snapshot(
        base.schema,
        base.codes,
        {succ_col: succ_v, total_col: total_v},
        {succ_col: succ_t.copy(), total_col: total_t.copy()},
        base.measure,
    )
    combos = [base.combination_of_group(c, g) for c, g, _ in picks]
    return SimulatedFault(
        snapshot,
        _group_truth(combos, mags),
        params,
        dict(zip(combos, (float(m) for m in mags))),
    )


def _group_truth(
    combos: Sequence[AttributeCombination], mags: np.ndarray
) -> tuple[tuple[AttributeCombination, ...], ...]:
    """Group planted combinations sharing an identical magnitude.

    Combinations deviating by exactly the same score are indistinguishable on
    the score axis, so they form one joint root cause.
    """
    groups: dict[float, list[AttributeCombination]] = {}
    for c, m in zip(combos, mags):
        groups.setdefault(float(m), []).append(c)
    return tuple(tuple(sorted(g)) for g in groups.values())


# -- validity --------------------------------------------------------------


def validity_check(fault: SimulatedFault) -> bool:
    """Reject ambiguous or drowned-out faults.

    A fault is invalid when (a) some other observed combination covers nearly
    the same leaves as a planted one, so the ground truth is not the unique
    right answer, or (b) the noise on the untouched leaves adds up to an
    abnormal total, so the fault is not cleanly separable from background.
    """
    snap = fault.snapshot
    truth = fault.truth_combinations()
    truth_masks = {c: snap.leaf_mask(c) for c in truth}

    for c, mask in truth_masks.items():
        t_idx = np.flatnonzero(mask)
        for cuboid in cuboids_by_layer(snap.schema):
            idx = snap.cuboid_index(cuboid)
            sizes = np.diff(idx.starts)
            inter = np.bincount(idx.group_of[t_idx], minlength=idx.n_groups)
            union = sizes + t_idx.size - inter
            jac = inter / union
            if cuboid.attrs == c.attributes:
                own = idx.group_of[t_idx[0]]
                jac[own] = 0.0
            if np.any(jac >= JACCARD_CUTOFF):
                return False

    unaffected = np.ones(snap.n_leaves, dtype=bool)
    for mask in truth_masks.values():
        unaffected &= ~mask
    if not unaffected.any():
        return True
    v, f = snap.leaf_values()
    resid = np.abs(v - f)[unaffected]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        t = knee_threshold(resid)
    total_dev = abs(float((v - f)[unaffected].sum()))
    return total_dev <= t * np.sqrt(unaffected.sum())


# -- dataset generation ----------------------------------------------------


def generate_dataset(
    base: Snapshot, grid: Sequence[SimulationParams], per_cell: int
) -> list[SimulatedFault]:
    """Valid faults for every cell, ``per_cell`` each, deterministic per seed."""
    if per_cell < 1:
        raise ValueError("per_cell must be at least 1")
    out: list[SimulatedFault] = []
    for params in grid:
        ss = np.random.SeedSequence(params.seed)
        accepted = 0
        attempts = 0
        while accepted < per_cell:
            attempts += 1
            if attempts > 200 and accepted / attempts < 0.01:
                raise RuntimeError(
                    f"cell (n_element={params.n_element}, layer={params.cuboid_layer}): "
                    f"{accepted}/{attempts} faults valid, acceptance below 1%"
                )
            rng = np.random.default_rng(ss.spawn(1)[0])
            fault = simulate_fault(base, params, rng)
            if validity_check(fault):
                out.append(fault)
                accepted += 1
    return out


def synthetic_base(
    n_attrs: int = 4,
    n_values: int = 10,
    mean_rate: float = 50.0,
    rate_spread: float = 0.5,
    seed: int | None = None,
    family: str = "poisson",
) -> Snapshot:
    """Dense synthetic base: every value combination observed once.

    Leaf sizes follow a lognormal law (median ``mean_rate``, log-sd
    ``rate_spread``), so slices differ in how much evidence they carry, as
    real traffic does.  Real and forecast both hold the drawn truth.
    """
    if n_attrs < 1 or n_values < 2:
        raise ValueError("need at least 1 attribute with 2 values")
    rng = np.random.default_rng(seed)
    attrs = [chr(ord("A") + i) for i in range(n_attrs)]
    domains = {a: tuple(f"{a.lower()}{j:02d}" for j in range(n_values)) for a in attrs}
    n = n_values**n_attrs
    lam = rng.lognormal(np.log(mean_rate), rate_spread, size=n)
    counts = np.maximum(rng.poisson(lam), 1).astype(float)

    grids = np.meshgrid(*[np.arange(n_values)] * n_attrs, indexing="ij")
    codes = np.stack([g.ravel() for g in grids], axis=1).astype(np.int32)
    rows = [
        tuple(domains[a][codes[i, j]] for j, a in enumerate(attrs))
        for i in range(n)
    ]
    measure = MeasureSpec("fundamental", ("value",), family)
    return snapshot_from_rows(
        attrs, rows, {"value": counts}, {"value": counts.copy()}, measure
    )


def eliminate_attributes(fault: SimulatedFault, attrs: Iterable[str]) -> SimulatedFault:
    """Project a fault onto fewer attributes, as when a dimension is not logged.

    Ground-truth combinations binding a dropped attribute cannot be expressed
    in the projected data any more; losing one marks the fault as externally
    caused.  Surviving combinations stay the localizable truth.
    """
    dropped = tuple(sorted(set(attrs)))
    snapshot = drop_attributes(fault.snapshot, dropped)
    kept_groups = []
    lost = False
    for group in fault.ground_truth:
        kept = tuple(c for c in group if not set(c.attributes) & set(dropped))
        if len(kept) < len(group):
            lost = True
        if kept:
            kept_groups.append(kept)
    return SimulatedFault(
        snapshot,
        tuple(kept_groups),
        fault.params,
        {c: m for c, m in fault.magnitudes.items() if not set(c.attributes) & set(dropped)},
        external=lost,
        dropped_attributes=dropped,
    )


# -- serialization ---------------------------------------------------------


def write_fault(fault: SimulatedFault, directory: str | Path) -> None:
    """Serialize as snapshot.csv + truth.json + params.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "snapshot.csv").write_text(render_table(fault.snapshot))
    truth = [[c.bindings for c in group] for group in fault.ground_truth]
    (d / "truth.json").write_text(json.dumps(truth, sort_keys=True, indent=1) + "\n")
    m = fault.snapshot.measure
    params = {
        "version": "1",
        "n_element": fault.params.n_element,
        "cuboid_layer": fault.params.cuboid_layer,
        "base_noise_sigma": fault.params.base_noise_sigma,
        "leaf_noise_sigma": fault.params.leaf_noise_sigma,
        "magnitude_range": list(fault.params.magnitude_range),
        "min_score_separation": fault.params.min_score_separation,
        "seed": fault.params.seed,
        "measure_kind": fault.params.measure_kind,
        "measure": {"kind": m.kind, "operands": list(m.operands), "family": m.distribution_family},
        "magnitudes": {str(c): m_ for c, m_ in sorted(fault.magnitudes.items())},
        "external": fault.external,
        "dropped_attributes": list(fault.dropped_attributes),
    }
    (d / "params.json").write_text(json.dumps(params, sort_keys=True, indent=1) + "\n")


def read_fault(directory: str | Path) -> SimulatedFault:
    """Load a fault directory written by write_fault."""
    from .data import parse_snapshot

    d = Path(directory)
    params = json.loads((d / "params.json").read_text())
    m = params["measure"]
    measure = MeasureSpec(m["kind"], tuple(m["operands"]), m["family"])
    snapshot = parse_snapshot((d / "snapshot.csv").read_text(), measure)
    truth_raw = json.loads((d / "truth.json").read_text())
    truth = tuple(
        tuple(sorted(AttributeCombination.from_bindings(b) for b in group))
        for group in truth_raw
    )
    sim = SimulationParams(
        n_element=params["n_element"],
        cuboid_layer=params["cuboid_layer"],
        base_noise_sigma=params["base_noise_sigma"],
        leaf_noise_sigma=params["leaf_noise_sigma"],
        magnitude_range=tuple(params["magnitude_range"]),
        min_score_separation=params["min_score_separation"],
        seed=params["seed"],
        measure_kind=params["measure_kind"],
    )
    mags = {
        AttributeCombination(
            tuple(tuple(p.split("=", 1)) for p in key.split("&"))
        ): val
        for key, val in params["magnitudes"].items()
    }
    return SimulatedFault(
        snapshot,
        truth,
        sim,
        mags,
        external=params.get("external", False),
        dropped_attributes=tuple(params.get("dropped_attributes", ())),
    )
