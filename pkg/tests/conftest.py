import numpy as np
import pytest

from ds2cf import constraints as cons
from ds2cf.data import DataMatrix, GroundTruth, normalize_columns, split_semi_supervised
from ds2cf.factorization import LayerState


def random_instance(seed, d=30, n=60, c=3, proportion=0.4):
    """Uniform nonnegative data, balanced classes, column-normalized."""
    rng = np.random.default_rng(seed)
    x = normalize_columns(DataMatrix(rng.uniform(0.0, 1.0, (d, n))))
    truth = GroundTruth(np.repeat(np.arange(1, c + 1), n // c))
    return x, truth, split_semi_supervised(truth, proportion, seed)


class LayerProblem:
    """Everything one W/Z update needs, in working order."""

    def __init__(self, seed, d=8, n=12, c=2, m=2, r=3, r_prev=4):
        rng = np.random.default_rng(seed)
        x, truth, split = random_instance(seed, d, n, c, 0.5)
        self.split = split
        self.x = split.reorder(x).values
        self.x_l = self.x[:, : split.l]
        self.a_l = cons.build_label_indicator(split)
        a_u = cons.normalize_soft_labels(rng.uniform(0.0, 1.0, (split.u, c)))
        self.a = cons.assemble_label_constraint(self.a_l, a_u).matrix
        q_u = cons.clipped_cosine_matrix(self.x[:, split.l:].T)
        self.q = cons.assemble_structure_constraint(cons.build_structure_constraint_labeled(split), q_u)
        self.s_u = rng.uniform(0.0, 1.0, (d, d))
        self.s_v = rng.uniform(0.0, 0.3, (n, n))
        self.p = rng.normal(0.0, 1.0, (d, c))
        if m == 1:
            self.state = LayerState(None, None, rng.uniform(0.01, 1.01, (n, r)), rng.uniform(0.01, 1.01, (2 * c, r)))
        else:
            self.state = LayerState(
                rng.uniform(0.01, 1.01, (n, r_prev)),
                rng.uniform(0.01, 1.01, (2 * c, r_prev)),
                rng.uniform(0.01, 1.01, (r_prev, r)),
                rng.uniform(0.01, 1.01, (r_prev, r)),
            )


@pytest.fixture
def layer_problem():
    return LayerProblem


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num])
