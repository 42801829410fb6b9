import math

import numpy as np
import pytest

from hjbmaxplus.problem import ModeData, SwitchedLQInstance, derive_constants

#: smaller root of 0.25 p^2 - 2 p + 0.75, i.e. 4 - sqrt(13)
SCALAR_ROOT = 4.0 - math.sqrt(13.0)


def scalar_instance(D=0.75, sigma=0.5, A=-1.0, gamma=1.0, copies=1):
    mode = ModeData([[A]], [[sigma]], [[D]])
    return SwitchedLQInstance(gamma, (mode,) * copies)


def random_instance(rng, n, modes=3, k=None, rot=0.8):
    """Stable random instance that passes both assumptions."""
    k = k or n
    while True:
        out = []
        for _ in range(modes):
            S = rng.normal(0, 0.2, (n, n))
            W = rng.normal(0, rot, (n, n))
            A = -1.2 * np.eye(n) + (S + S.T) / 2 + (W - W.T) / 2
            Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
            D = (Q * rng.uniform(0.3, 1.4, n)) @ Q.T
            out.append(ModeData(A, rng.normal(0, 0.2, (n, k)), D))
        inst = SwitchedLQInstance(1.0, tuple(out))
        consts = derive_constants(inst)
        if consts.assumptions_ok:
            return inst, consts


@pytest.fixture
def scalar():
    inst = scalar_instance()
    return inst, derive_constants(inst)
