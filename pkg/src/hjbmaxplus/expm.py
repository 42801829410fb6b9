"""Matrix exponential by scaling and squaring with a fixed [13/13] Pade approximant."""
import math

import numpy as np

# numerator coefficients of the degree-13 diagonal Pade approximant to exp
_B13 = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)
# largest 1-norm for which the unscaled [13/13] approximant is accurate to
# double precision (Higham 2005)
THETA_13 = 5.371920351148152


def expm_pade13(A) -> np.ndarray:
    """Return ``exp(A)`` for a square real matrix `A`."""
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    norm1 = np.linalg.norm(A, 1) if n else 0.0
    s = 0
    if norm1 > THETA_13:
        s = max(0, int(math.ceil(math.log2(norm1 / THETA_13))))
        A = A / 2.0 ** s
    b = _B13
    ident = np.eye(n)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s):
        R = R @ R
    return R
