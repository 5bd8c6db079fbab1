"""Optimal-matching alternatives to greedy scoring.

``optimal_assignment`` finds the exact maximum-similarity one-to-one
matching; ``solve_transport`` computes an exact earth-mover plan by scaling
the marginals to integers and running network simplex; ``wmd_score`` wraps
transport into a unigram/bigram sentence similarity, and
``compare_matching`` correlates greedy F1 against the transport scores on a
judged dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import networkx as nx
import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import (
    EmptyMatrixError,
    InfeasibleMassesError,
    NotNormalizedError,
    TooShortForOrderError,
    ZeroVectorError,
)
from .idf import IdfTable
from .scorer import ScoreConfig, SimilarityMatrix, greedy_score, similarity_matrix
from .tokenizer import surviving_indices

_MASS_TOL = 1e-9
_MASS_QUANT = 10 ** 9
_COST_QUANT = 10 ** 12
_DP_WORK_LIMIT = 4_000_000


@dataclass
class TransportProblem:
    """A cost matrix with matching source/sink mass distributions."""

    cost: np.ndarray
    ref_mass: np.ndarray
    cand_mass: np.ndarray

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=np.float64)
        self.ref_mass = np.asarray(self.ref_mass, dtype=np.float64)
        self.cand_mass = np.asarray(self.cand_mass, dtype=np.float64)
        k, l = self.cost.shape
        if self.ref_mass.shape != (k,) or self.cand_mass.shape != (l,):
            raise InfeasibleMassesError("mass vectors do not match the cost matrix")
        if (self.ref_mass < 0).any() or (self.cand_mass < 0).any():
            raise InfeasibleMassesError("masses must be non-negative")
        for name, mass in (("ref", self.ref_mass), ("cand", self.cand_mass)):
            if abs(float(mass.sum()) - 1.0) > _MASS_TOL:
                raise InfeasibleMassesError(
                    f"{name} masses sum to {mass.sum():.12f}, expected 1"
                )


@dataclass
class TransportPlan:
    flow: np.ndarray
    objective: float


def _dyadic_ints(values: np.ndarray) -> list[list[int]]:
    """Exact integer image of a float matrix over a common power-of-two denominator."""
    ratios = [[float(v).as_integer_ratio() for v in row] for row in values]
    max_exp = 0
    for row in ratios:
        for _, den in row:
            max_exp = max(max_exp, den.bit_length() - 1)
    return [
        [num << (max_exp - (den.bit_length() - 1)) for num, den in row]
        for row in ratios
    ]


def _assignment_dp(values: np.ndarray) -> list[tuple[int, int]]:
    """Lexicographically-smallest maximum matching via subset DP on exact integers."""
    k, l = values.shape
    m = min(k, l)
    ints = _dyadic_ints(values)
    memo: dict[tuple[int, int], int | None] = {}

    def best(i: int, mask: int):
        rem = m - mask.bit_count()
        if i == k:
            return 0 if rem == 0 else None
        if k - i < rem:
            return None
        key = (i, mask)
        if key in memo:
            return memo[key]
        out = None
        for j in range(l):
            bit = 1 << j
            if mask & bit:
                continue
            sub = best(i + 1, mask | bit)
            if sub is not None:
                total = ints[i][j] + sub
                if out is None or total > out:
                    out = total
        if k - i - 1 >= rem:
            sub = best(i + 1, mask)
            if sub is not None and (out is None or sub > out):
                out = sub
        memo[key] = out
        return out

    matching: list[tuple[int, int]] = []
    mask = 0
    for i in range(k):
        target = best(i, mask)
        taken = False
        for j in range(l):
            bit = 1 << j
            if mask & bit:
                continue
            sub = best(i + 1, mask | bit)
            if sub is not None and ints[i][j] + sub == target:
                matching.append((i, j))
                mask |= bit
                taken = True
                break
        if not taken:
            # skipping this row must reproduce the target
            assert best(i + 1, mask) == target
    return matching


def optimal_assignment(sim: SimilarityMatrix) -> tuple[float, list[tuple[int, int]]]:
    """Exact maximum-total one-to-one matching of size min(k, l).

    Ties break to the lexicographically smallest matching (as a sorted pair
    list). Instances whose subset-DP state space would exceed the work limit
    fall back to scipy's assignment solver, where the tie-break is
    best-effort.
    """
    k, l = sim.shape
    if k == 0 or l == 0:
        raise EmptyMatrixError("assignment on an empty matrix")
    m = min(k, l)
    states = sum(math.comb(l, t) for t in range(m + 1))
    if states * (k - m + 1) * max(l, 1) <= _DP_WORK_LIMIT:
        matching = _assignment_dp(sim.values)
    else:
        rows, cols = linear_sum_assignment(sim.values, maximize=True)
        matching = sorted(zip(rows.tolist(), cols.tolist()))
    total = 0.0
    for i, j in matching:
        total += float(sim.values[i, j])
    return total, matching


def _integer_masses(ref_mass: np.ndarray, cand_mass: np.ndarray) -> tuple[list[int], list[int], int]:
    """Scale both marginals to integers over one denominator, exactly.

    Masses are quantized at 1e-9, renormalized side-by-side in rational
    arithmetic, and scaled by the least common multiple of the reduced
    denominators (which divides each side's quantized total).
    """
    quant_r = [Fraction(round(float(v) * _MASS_QUANT), _MASS_QUANT) for v in ref_mass]
    quant_c = [Fraction(round(float(v) * _MASS_QUANT), _MASS_QUANT) for v in cand_mass]
    total_r = sum(quant_r)
    total_c = sum(quant_c)
    if total_r <= 0 or total_c <= 0:
        raise InfeasibleMassesError("a side has zero total mass after quantization")
    quant_r = [f / total_r for f in quant_r]
    quant_c = [f / total_c for f in quant_c]
    denom = 1
    for f in quant_r + quant_c:
        denom = math.lcm(denom, f.denominator)
    return (
        [int(f * denom) for f in quant_r],
        [int(f * denom) for f in quant_c],
        denom,
    )


def solve_transport(problem: TransportProblem) -> TransportPlan:
    """Exact minimum-cost transport via network simplex on integer data.

    The returned flow satisfies both marginals to within the quantization
    (well under 1e-7) and the objective is evaluated against the original
    float costs.
    """
    k, l = problem.cost.shape
    ref_ints, cand_ints, denom = _integer_masses(problem.ref_mass, problem.cand_mass)
    int_cost = [
        [int(round(float(problem.cost[i, j]) * _COST_QUANT)) for j in range(l)]
        for i in range(k)
    ]
    graph = nx.DiGraph()
    for i, mass in enumerate(ref_ints):
        graph.add_node(("r", i), demand=-mass)
    for j, mass in enumerate(cand_ints):
        graph.add_node(("c", j), demand=mass)
    for i in range(k):
        for j in range(l):
            graph.add_edge(("r", i), ("c", j), weight=int_cost[i][j])
    _, flow_dict = nx.network_simplex(graph)
    flow = np.zeros((k, l))
    for i in range(k):
        row = flow_dict.get(("r", i), {})
        for j in range(l):
            units = row.get(("c", j), 0)
            if units:
                flow[i, j] = float(Fraction(units, denom))
    objective = float((flow * problem.cost).sum())
    return TransportPlan(flow=flow, objective=objective)


def _unit_vectors_and_masses(matrix: np.ndarray, weights: np.ndarray,
                             order: int) -> tuple[np.ndarray, np.ndarray]:
    n = matrix.shape[0]
    if n < order:
        raise TooShortForOrderError(f"{n} tokens cannot form {order}-grams")
    if order == 1:
        units, masses = matrix, weights.copy()
    else:
        means = (matrix[:-1] + matrix[1:]) / 2.0
        norms = np.linalg.norm(means, axis=1)
        if norms.size and float(norms.min()) < 1e-12:
            raise ZeroVectorError("a bigram mean vector collapsed to zero")
        units = means / norms[:, None]
        masses = weights[:-1] + weights[1:]
    total = float(masses.sum())
    if total <= 0.0:
        masses = np.ones(len(masses))
        total = float(len(masses))
    return units, masses / total


def wmd_score(ref_tokens, ref_emb, cand_tokens, cand_emb, order: int = 1,
              idf: tuple[IdfTable, IdfTable] | None = None) -> float:
    """Negated earth-mover distance between n-gram unit distributions.

    Units are tokens (order 1) or adjacent token pairs (order 2, embedding =
    renormalized mean of the members, mass = sum of their idf weights);
    cost is 1 - cosine. Higher is more similar; identical sentences score 0
    and fully orthogonal single tokens score -1.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if not (ref_emb.normalized and cand_emb.normalized):
        raise NotNormalizedError("wmd needs row-normalized embeddings")
    ref_table, cand_table = idf if idf is not None else (None, None)
    w_ref = _idf_weights(ref_tokens, ref_table)
    w_cand = _idf_weights(cand_tokens, cand_table)
    ref_units, ref_mass = _unit_vectors_and_masses(ref_emb.values, w_ref, order)
    cand_units, cand_mass = _unit_vectors_and_masses(cand_emb.values, w_cand, order)
    cost = np.clip(1.0 - ref_units @ cand_units.T, 0.0, 2.0)
    plan = solve_transport(TransportProblem(cost, ref_mass, cand_mass))
    return -plan.objective


def _idf_weights(tokens, table: IdfTable | None) -> np.ndarray:
    pieces = list(tokens)
    if table is None:
        return np.ones(len(pieces))
    return np.array([table.weight(p) for p in pieces], dtype=np.float64)


def compare_matching(dataset, provider, cfg: ScoreConfig, vocab=None,
                     orders: Sequence[int] = (1, 2),
                     per_system_cfg=None) -> dict:
    """Pearson correlation of greedy F1 and transport scores against humans.

    One entry per metric under the given configuration (``per_system_cfg``
    may override it per system, e.g. for candidate-built idf tables); a
    metric whose scores have no variance is reported as an error entry
    instead of a correlation.
    """
    from .harness import dataset_sentences  # local import to avoid a cycle
    from .stats import pearson
    from .errors import ZeroVarianceError
    from .embeddings import embed_sentence

    humans: list[float] = []
    columns: dict[str, list[float]] = {"greedy_F": []}
    for order in orders:
        columns[f"WMD{order}"] = []
    for system in sorted(dataset.systems):
        sys_cfg = per_system_cfg.get(system, cfg) if per_system_cfg else cfg
        for sid in dataset.ids:
            humans.append(dataset.human_segment[(system, sid)])
            ref_s, cand_s = dataset_sentences(dataset, system, sid, provider, vocab)
            ref_tokens, ref_emb = embed_sentence(ref_s, provider, sys_cfg.layer_policy)
            cand_tokens, cand_emb = embed_sentence(cand_s, provider, sys_cfg.layer_policy)
            sim = similarity_matrix(ref_emb, cand_emb)
            columns["greedy_F"].append(greedy_score(sim, ref_tokens, cand_tokens, sys_cfg).f1)
            keep_r = surviving_indices(ref_tokens, sys_cfg.filters)
            keep_c = surviving_indices(cand_tokens, sys_cfg.filters)
            ref_kept = [ref_tokens.pieces[i] for i in keep_r]
            cand_kept = [cand_tokens.pieces[j] for j in keep_c]
            ref_kept_emb = type(ref_emb)(ref_emb.values[keep_r], normalized=True)
            cand_kept_emb = type(cand_emb)(cand_emb.values[keep_c], normalized=True)
            for order in orders:
                columns[f"WMD{order}"].append(
                    wmd_score(ref_kept, ref_kept_emb, cand_kept, cand_kept_emb,
                              order=order, idf=sys_cfg.idf)
                )
    report: dict = {}
    for name, scores in columns.items():
        try:
            report[name] = pearson(scores, humans)
        except ZeroVarianceError as exc:
            report[name] = {"error": str(exc)}
    return report
