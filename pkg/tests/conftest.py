import numpy as np
import pytest

from ddhopf.basis import Params, SpectralField, admissible_masks, VARIABLES

# Canonical test point: oscillatory window of the (1,1) mode, clean
# singular-limit behavior for eps <= 0.1.
PR, D, R2, ALPHA = 7.0, 0.1, 8.0, np.pi / np.sqrt(2.0)

# "Strong" point near the lower window edge: large Landau coefficient, so
# branch curvature, Floquet exponents, and attractor relaxation are all
# resolvable at desk scale.
R2_STRONG = 3.2


def make_params(eps=0.0, R1=20.0, J=6, K=6, **kw):
    base = dict(Pr=PR, d=D, R1=R1, R2=R2, alpha=ALPHA, eps=eps, J=J, K=K)
    base.update(kw)
    return Params(**base)


def strong_params(eps=0.0, R1=20.0, J=4, K=4, **kw):
    kw.setdefault("R2", R2_STRONG)
    return make_params(eps=eps, R1=R1, J=J, K=K, **kw)


@pytest.fixture(scope="session")
def strong_eigendata():
    """(eps=0, eps=0.1) eigendata at the strong point, J=K=4."""
    from ddhopf.spectrum import critical_R1
    _, ed0 = critical_R1(strong_params(eps=0.0))
    _, ed1 = critical_R1(strong_params(eps=0.1))
    return ed0, ed1


@pytest.fixture(scope="session")
def strong_systems(strong_eigendata):
    from ddhopf.hopf import make_system, hopf_first_order
    ed0, ed1 = strong_eigendata
    sys0 = make_system(ed0, M=6)
    sys1 = make_system(ed1, M=6)
    return (sys0, hopf_first_order(sys0)), (sys1, hopf_first_order(sys1))


def random_field(params, rng, dtype=float, vars=VARIABLES):
    f = SpectralField.zeros(params, dtype=dtype)
    masks = admissible_masks(params.J, params.K)
    for v in vars:
        arr = rng.standard_normal((params.J + 1, params.K + 1))
        if dtype is complex:
            arr = arr + 1j * rng.standard_normal(arr.shape)
        setattr(f, v, np.where(masks[v], arr, 0.0))
    return f


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
