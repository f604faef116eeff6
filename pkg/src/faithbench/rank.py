"""Rankings of explanation candidates and inter-metric agreement."""
from __future__ import annotations

import csv
import itertools
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import IncompleteGridError, SpecError
from .metrics import HIGHER_BETTER, MetricScore

SPEARMAN = "spearman"
KENDALL = "kendall"
WEIGHTED_KENDALL = "weighted_kendall"
CORRELATIONS = (SPEARMAN, WEIGHTED_KENDALL, KENDALL)


@dataclass(frozen=True)
class Ranking:
    metric: str
    candidates: tuple  # rank 0 (most faithful) first
    scores: tuple  # mean score per candidate, same order
    direction: str

    def position(self) -> dict:
        return {c: i for i, c in enumerate(self.candidates)}

    def goodness(self, candidates: Sequence[str]) -> np.ndarray:
        """Direction-adjusted scores (larger = more faithful) in the given candidate order."""
        lookup = dict(zip(self.candidates, self.scores))
        v = np.array([lookup[c] for c in candidates], dtype=np.float64)
        return v if self.direction == HIGHER_BETTER else -v


def rank_candidates(scores: Sequence[MetricScore]) -> Ranking:
    """Mean over repeats, then sort by direction; ties go to the lexicographically smaller name."""
    if not scores:
        raise SpecError("no scores to rank")
    metrics = {s.metric for s in scores}
    if len(metrics) != 1:
        raise SpecError(f"scores mix metrics {sorted(metrics)}")
    by_cand = defaultdict(dict)
    for s in scores:
        if s.repeat in by_cand[s.candidate]:
            raise IncompleteGridError(f"duplicate score for {s.candidate} repeat {s.repeat}")
        by_cand[s.candidate][s.repeat] = s.value
    repeat_sets = {frozenset(v) for v in by_cand.values()}
    if len(repeat_sets) != 1:
        raise IncompleteGridError("candidates were scored on different sets of repeats")
    direction = scores[0].direction
    means = {c: float(np.mean([v[r] for r in sorted(v)])) for c, v in by_cand.items()}
    sign = -1.0 if direction == HIGHER_BETTER else 1.0
    ordered = sorted(means, key=lambda c: (sign * means[c], c))
    return Ranking(scores[0].metric, tuple(ordered), tuple(means[c] for c in ordered), direction)


def _aligned(r1: Ranking, r2: Ranking) -> tuple:
    if set(r1.candidates) != set(r2.candidates):
        raise SpecError("rankings cover different candidate sets")
    if len(r1.candidates) < 2:
        raise SpecError("correlation needs at least two candidates")
    cands = sorted(r1.candidates)
    return r1.goodness(cands), r2.goodness(cands)


def _as_goodness(a, b) -> tuple:
    if isinstance(a, Ranking):
        return _aligned(a, b)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.size < 2:
        raise SpecError("need two equally long vectors with at least two entries")
    return a, b


def spearman(r1, r2) -> float:
    """Pearson correlation of (tie-averaged) rank vectors.

    Accepts two Rankings, or two score vectors where larger means better.
    """
    a, b = _as_goodness(r1, r2)
    ra, rb = stats.rankdata(a), stats.rankdata(b)
    ra, rb = ra - ra.mean(), rb - rb.mean()
    denom = np.sqrt((ra @ ra) * (rb @ rb))
    if denom == 0:
        return float("nan")
    return float(np.clip((ra @ rb) / denom, -1.0, 1.0))


def kendall(r1, r2) -> float:
    """Kendall tau-b."""
    a, b = _as_goodness(r1, r2)
    return float(stats.kendalltau(a, b, variant="b").statistic)


def weighted_kendall(r1, r2) -> float:
    """Top-weighted Kendall tau with additive hyperbolic weights 1/(rank+1), symmetrised."""
    a, b = _as_goodness(r1, r2)
    return float(stats.weightedtau(a, b, rank=True).statistic)


CORRELATION_FNS = {SPEARMAN: spearman, KENDALL: kendall, WEIGHTED_KENDALL: weighted_kendall}


@dataclass(frozen=True)
class AgreementMatrix:
    metrics: tuple
    matrices: dict  # kind -> (m, m) array

    def rows(self) -> list:
        out = []
        for kind, M in self.matrices.items():
            for i, a in enumerate(self.metrics):
                for j, b in enumerate(self.metrics):
                    out.append((kind, a, b, float(M[i, j])))
        return out


def agreement(rankings: Sequence[Ranking], kinds: Sequence[str] = CORRELATIONS) -> AgreementMatrix:
    if len(rankings) < 2:
        raise SpecError("agreement needs at least two rankings")
    base = set(rankings[0].candidates)
    if any(set(r.candidates) != base for r in rankings):
        raise SpecError("rankings cover different candidate sets")
    m = len(rankings)
    mats = {}
    for kind in kinds:
        fn = CORRELATION_FNS[kind]
        M = np.eye(m)
        for i, j in itertools.combinations(range(m), 2):
            M[i, j] = M[j, i] = fn(rankings[i], rankings[j])
        mats[kind] = M
    return AgreementMatrix(tuple(r.metric for r in rankings), mats)


def agreement_per_repeat(scores: Sequence[MetricScore], metrics: Sequence[str],
                         kinds: Sequence[str] = CORRELATIONS) -> AgreementMatrix:
    """Average over repeats of the per-repeat agreement matrices."""
    repeats = sorted({s.repeat for s in scores})
    mats = []
    for r in repeats:
        rs = [rank_candidates([s for s in scores if s.metric == m and s.repeat == r])
              for m in metrics]
        mats.append(agreement(rs, kinds))
    avg = {k: np.mean([a.matrices[k] for a in mats], axis=0) for k in kinds}
    return AgreementMatrix(tuple(metrics), avg)


def _split_candidate(c: str) -> tuple:
    method, _, baseline = c.partition("/")
    return method, baseline


def top3_rows(rankings: Sequence[Ranking], dataset: str, architecture: str, top: int = 3) -> list:
    rows = []
    for r in rankings:
        for i, c in enumerate(r.candidates[:top]):
            method, baseline = _split_candidate(c)
            rows.append({"dataset": dataset, "architecture": architecture, "metric": r.metric,
                         "method": method, "baseline": baseline, "ranking": i})
    return rows


def slope_rows(r1: Ranking, r2: Ranking) -> list:
    p1, p2 = r1.position(), r2.position()
    return [{"candidate": c, f"rank_{r1.metric}": p1[c], f"rank_{r2.metric}": p2[c],
             "delta": p2[c] - p1[c]} for c in r1.candidates]


def _write_csv(path: Path, rows: list, header: Sequence[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(header), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def report_artifacts(out_dir, cells: dict, fingerprint: str = "") -> Path:
    """Write top-3 tables, slope-chart data and heatmap CSVs plus a manifest.

    `cells` maps (dataset, architecture) -> {"rankings": [...], "agreement": {label: AgreementMatrix}}.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    top3 = []
    datasets, metrics, kinds = set(), set(), set()
    for (dataset, arch), cell in sorted(cells.items()):
        rankings = cell["rankings"]
        datasets.add(dataset)
        metrics.update(r.metric for r in rankings)
        top3.extend(top3_rows(rankings, dataset, arch))
        for ra, rb in itertools.combinations(rankings, 2):
            rows = slope_rows(ra, rb)
            _write_csv(out / f"slope__{dataset}__{arch}__{ra.metric}_{rb.metric}.csv", rows,
                       list(rows[0]))
        for label, am in sorted(cell.get("agreement", {}).items()):
            for kind, M in am.matrices.items():
                kinds.add(kind)
                rows = [{"metric": a, **{b: float(M[i, j]) for j, b in enumerate(am.metrics)}}
                        for i, a in enumerate(am.metrics)]
                _write_csv(out / f"heatmap__{dataset}__{arch}__{kind}__{label}.csv", rows,
                           ["metric", *am.metrics])
    _write_csv(out / "top3.csv", top3,
               ["dataset", "architecture", "metric", "method", "baseline", "ranking"])
    manifest = {"datasets": sorted(datasets), "metrics": sorted(metrics),
                "correlation_kinds": sorted(kinds), "config_fingerprint": fingerprint}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    return out
