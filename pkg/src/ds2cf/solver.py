"""Layer-by-layer alternating optimization of the deep coupled factorization."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import constraints as cons
from .data import DataMatrix, SemiSupervisedSplit
from .errors import NumericalError, ShapeError
from .factorization import (
    Hyperparams,
    LayerStack,
    LayerState,
    ObjectiveBreakdown,
    compute_prefix_products,
    evaluate_objective,
    init_factors,
    update_w,
    update_z,
)
from .graphs import DualGraphs, init_data_graph, init_feature_graph, update_data_graph, update_feature_graph
from .predictor import (
    LabelPredictor,
    init_predictor,
    predict_soft_labels,
    update_predictor,
    update_row_sparsity_weights,
)

log = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "layer", "iter", "total_objective", "recon", "structure", "dualgraph",
    "predictor", "dW_fro2", "dV_fro2", "converged",
]

__all__ = [
    "SolverConfig",
    "ConstraintSet",
    "TraceRecord",
    "FitResult",
    "fit",
    "transform",
    "convergence_check",
    "write_trace_csv",
    "TRACE_COLUMNS",
]


@dataclass(frozen=True)
class SolverConfig:
    hyper: Hyperparams = field(default_factory=lambda: Hyperparams(0.1, 1e-4, 1e-3))
    rank_schedule: tuple = (4, 4, 4)
    epsilon: float = 1e-3
    max_iters_per_layer: int = 200
    seed: int = 0
    trace: bool = False
    # keep A and Q at their initial values (baseline-reduction runs)
    freeze_constraints: bool = False

    def __post_init__(self):
        object.__setattr__(self, "rank_schedule", tuple(int(r) for r in self.rank_schedule))
        if not self.rank_schedule or min(self.rank_schedule) < 1:
            raise ValueError("rank_schedule must hold positive integers")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iters_per_layer < 1:
            raise ValueError("max_iters_per_layer must be >= 1")

    @property
    def depth(self) -> int:
        return len(self.rank_schedule)

    @classmethod
    def constant_rank(cls, rank, depth, **kw):
        return cls(rank_schedule=(rank,) * depth, **kw)


@dataclass(frozen=True)
class ConstraintSet:
    label: cons.LabelConstraint
    structure: cons.StructureConstraint
    predictor: LabelPredictor

    @property
    def a(self):
        return self.label.matrix

    @property
    def q(self):
        return self.structure.matrix


@dataclass(frozen=True)
class TraceRecord:
    """One inner iteration.

    ``objective`` is evaluated right after the W, Z, S^U, S^V, P block (A and
    Q still as they were when the iteration began); ``objective_before`` at
    the start of the iteration and ``objective_refreshed`` after A and Q were
    rebuilt.
    """

    layer: int
    iter: int
    objective: ObjectiveBreakdown
    objective_before: float
    objective_refreshed: float
    dW_fro2: float
    dV_fro2: float
    converged: bool
    a_u_row_sum_error: float
    soft_label_fallbacks: int
    factors: tuple | None = None

    def row(self):
        o = self.objective
        return [self.layer, self.iter, o.total, o.recon, o.structure, o.dualgraph,
                o.predictor, self.dW_fro2, self.dV_fro2, int(self.converged)]


@dataclass
class FitResult:
    final_stack: LayerStack
    final_representation: np.ndarray  # working order [X_L, X_U]
    constraints: ConstraintSet
    graphs: DualGraphs
    trace: list
    split: SemiSupervisedSplit
    layer_iterations: list
    layer_converged: list

    def layer_trace(self, m):
        return [t for t in self.trace if t.layer == m]


def convergence_check(w_prev, w_next, v_prev, v_next, epsilon) -> bool:
    """Both squared Frobenius differences are at most ``epsilon``."""
    if np.shape(w_prev) != np.shape(w_next) or np.shape(v_prev) != np.shape(v_next):
        raise ShapeError("convergence check needs matching shapes")
    dw = float(np.sum((np.asarray(w_next) - w_prev) ** 2))
    dv = float(np.sum((np.asarray(v_next) - v_prev) ** 2))
    return dw <= epsilon and dv <= epsilon


def _checked(obj: ObjectiveBreakdown, where):
    if not np.isfinite(obj.total):
        bad = [k for k, v in obj.terms().items() if not np.isfinite(v)]
        raise NumericalError(f"non-finite objective {where}; offending term(s): {', '.join(bad) or 'total'}")
    return obj


def _soft_labels(x_u, p, c):
    scores = predict_soft_labels(x_u, p)
    if scores.shape[0] == 0:
        return np.zeros((0, c)), 0
    return cons.normalize_soft_labels(scores, return_fallbacks=True)


def fit(x: DataMatrix, split: SemiSupervisedSplit, config: SolverConfig) -> FitResult:
    """Optimize all layers in sequence; each layer loops until its stopping rule holds."""
    xw = split.reorder(x).values
    n = xw.shape[1]
    l, c = split.l, split.c
    x_l, x_u = xw[:, :l], xw[:, l:]
    hyper = config.hyper

    a_l = cons.build_label_indicator(split)
    pred = init_predictor(x_l, a_l)
    p = pred.p
    b = update_row_sparsity_weights(p)
    a_u, _ = _soft_labels(x_u, p, c)
    label = cons.assemble_label_constraint(a_l, a_u)
    a = label.matrix
    q_l = cons.build_structure_constraint_labeled(split)
    q_u = cons.clipped_cosine_matrix(x_u.T)
    q = cons.assemble_structure_constraint(q_l, q_u)
    s_u = init_feature_graph(xw)
    s_v = init_data_graph(xw, split)
    kx = xw.T @ xw

    stack = LayerStack(n, 2 * c, config.rank_schedule)
    trace, iters, converged_flags = [], [], []

    def objective(st):
        return evaluate_objective(st, xw, a, q, s_u, s_v, p, x_l, a_l, hyper)

    for m in range(1, config.depth + 1):
        pi_prev, lam_prev = compute_prefix_products(stack, m)
        w0, z0 = init_factors(m, stack.shapes(m), config.seed)
        st = LayerState(pi_prev, lam_prev, w0, z0)
        v_prev = st.representation(a)
        done = False
        t = 0
        for t in range(1, config.max_iters_per_layer + 1):
            before = _checked(objective(st), f"at start of layer {m} iteration {t}").total
            w_prev = st.w
            st.w = update_w(st, xw, a, q, s_u, p, hyper, kx)
            st.z = update_z(st, xw, a, q, s_v, p, hyper, kx)
            v = st.representation(a)
            s_u = update_feature_graph(st.basis(xw), s_u)
            s_v = update_data_graph(v, s_v)
            p = update_predictor(xw, x_l, a_l, st.coefficient(a), b)
            b = update_row_sparsity_weights(p)
            after = _checked(objective(st), f"after layer {m} iteration {t}")

            fallbacks = 0
            if not config.freeze_constraints:
                a_u, fallbacks = _soft_labels(x_u, p, c)
                label = cons.assemble_label_constraint(a_l, a_u)
                a = label.matrix
                q_u = cons.update_structure_constraint_unlabeled(v[l:])
                q = cons.assemble_structure_constraint(q_l, q_u)
            refreshed = objective(st).total

            dw = float(np.sum((st.w - w_prev) ** 2))
            dv = float(np.sum((v - v_prev) ** 2))
            v_prev = v
            done = dw <= config.epsilon and dv <= config.epsilon
            rowerr = float(np.max(np.abs(a_u.sum(axis=1) - 1.0))) if a_u.shape[0] else 0.0
            trace.append(TraceRecord(
                m, t, after, before, refreshed, dw, dv, done, rowerr, fallbacks,
                (st.w.copy(), st.z.copy()) if config.trace else None,
            ))
            if done:
                break
        if not done:
            log.warning("layer %d stopped at the iteration cap (%d) without converging", m, t)
        iters.append(t)
        converged_flags.append(done)
        stack.set_layer(m, st.w, st.z)

    final_v = a @ _chain(stack.z)
    return FitResult(
        final_stack=stack,
        final_representation=final_v,
        constraints=ConstraintSet(label, cons.StructureConstraint(q_l, q_u), LabelPredictor(p, b)),
        graphs=DualGraphs(s_u, s_v),
        trace=trace,
        split=split,
        layer_iterations=iters,
        layer_converged=converged_flags,
    )


def _chain(mats):
    out = mats[0]
    for m in mats[1:]:
        out = out @ m
    return out


def transform(result: FitResult) -> np.ndarray:
    """Final representation ``V_M`` with rows in the original sample order."""
    return result.final_representation[result.split.inverse_order]


def write_trace_csv(trace, path, header_lines=()):
    with open(path, "w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for rec in trace:
            w.writerow([repr(v) if isinstance(v, float) else v for v in rec.row()])
