import numpy as np
import pytest

from mssmpc.config import benchmark_config, benchmark_config_dict
from mssmpc.model import LinearSystem, Polytope

# benchmark values printed with the double-integrator example
BENCH_WX = np.array([[10.9264, -3.7386], [-3.7386, 3.8143]])
BENCH_LAMBDA = 0.7503
BENCH_GAMMA = np.array([[0.1, 0.05], [0.05, 0.1]])
BENCH_P = np.array([[3.2664, 3.2016], [3.2016, 9.3569]])
BENCH_K_ABS = np.array([0.2068, 0.6756])


@pytest.fixture(scope="session")
def bench_cfg():
    return benchmark_config()


@pytest.fixture(scope="session")
def bench(bench_cfg):
    return bench_cfg.build_design()


@pytest.fixture
def bench_raw():
    return benchmark_config_dict()


def double_integrator(Gamma=BENCH_GAMMA):
    return LinearSystem([[1.0, 1.0], [0.0, 1.0]], [[0.5], [1.0]], Gamma)


def boxes(x_max=40.0, u_max=10.0):
    return Polytope.box([x_max, x_max]), Polytope.box([u_max])


def ellipsoid_samples(rng, W, r, size, surface=False):
    """Uniform-direction points of E_W(r); on the boundary when ``surface``."""
    d = W.shape[0]
    g = rng.standard_normal((size, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    scale = r if surface else r * rng.uniform(0.0, 1.0, size=(size, 1)) ** (1.0 / d)
    return (g * scale) @ np.linalg.cholesky(W).T


def random_conic_instance(rng, nu=None):
    """Bounded random instance: PSD cost, a ball plus a random cone, optional halfspaces.

    ``y = 0`` is strictly feasible by construction.
    """
    from mssmpc import socp

    nu = nu or int(rng.integers(1, 7))
    rank = int(rng.integers(0, nu + 1))
    F = rng.standard_normal((rank, nu))
    Q = F.T @ F
    c = rng.standard_normal(nu) * 2.0
    centre = rng.standard_normal(nu) * 0.3
    ball = socp.Cone(np.eye(nu), -centre, np.zeros(nu), float(np.linalg.norm(centre) + 1.0 + rng.uniform()))
    p = int(rng.integers(1, nu + 1))
    A = rng.standard_normal((p, nu))
    b = rng.standard_normal(p) * 0.2
    cc = rng.standard_normal(nu) * 0.3
    cone = socp.Cone(A, b, cc, float(np.linalg.norm(b) + rng.uniform(0.2, 1.5)))
    G = g = None
    if rng.uniform() < 0.5:
        G = rng.standard_normal((2, nu))
        g = rng.uniform(0.1, 1.0, size=2)
    return socp.ConicProblem(Q, c, (ball, cone), G, g)


def cvxpy_reference(problem):
    import cvxpy as cp

    y = cp.Variable(problem.nu)
    obj = 0.5 * cp.quad_form(y, cp.psd_wrap(problem.Qhat)) + problem.chat @ y + problem.const
    cons = [cp.norm(cone.A @ y + cone.b) <= cone.c @ y + cone.d for cone in problem.cones]
    if problem.G.shape[0]:
        cons.append(problem.G @ y <= problem.g)
    prob = cp.Problem(cp.Minimize(obj), cons)
    prob.solve(solver=cp.CLARABEL)
    return prob.status, (None if y.value is None else np.asarray(y.value)), prob.value
