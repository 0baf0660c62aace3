import numpy as np
import pytest

from hawkesnet.kernels import Exponential, KernelSpec


@pytest.fixture(scope="session")
def exp_spec_1d():
    """Unit exponential spec used throughout: alpha=1, beta=2, mu=0.5."""
    return KernelSpec(
        dimension=1,
        mark_cardinality=1,
        baseline=np.array([0.5]),
        kernels=((Exponential(1.0, 2.0),),),
        mark_factors=(("f0",),),
    )


@pytest.fixture(scope="session")
def exp_spec_2d():
    """The 2-variate exponential benchmark used by the recovery runs."""
    alpha = [[1.0, 0.25], [0.5, 0.75]]
    beta = [[2.0, 1.0], [1.0, 1.5]]
    return KernelSpec(
        dimension=2,
        mark_cardinality=1,
        baseline=np.array([0.05, 0.05]),
        kernels=tuple(tuple(Exponential(alpha[i][j], beta[i][j]) for j in range(2)) for i in range(2)),
        mark_factors=(("f0", "f0"), ("f0", "f0")),
    )


def closed_form_g_exponential(alpha: float, beta: float, t):
    """Conditional excess rate of the 1-dim exponential Hawkes process,
    derived from the Bartlett spectrum: G(t) = C exp(-(beta-alpha) t) with
    C = alpha (2 beta - alpha) / (2 (beta - alpha))."""
    C = alpha * (2 * beta - alpha) / (2 * (beta - alpha))
    return C * np.exp(-(beta - alpha) * np.asarray(t))
