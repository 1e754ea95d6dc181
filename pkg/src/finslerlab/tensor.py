"""Index-symmetrization helpers used by the closed-form transformation laws.

All rank-4 helpers return arrays indexed ``[l, i, j, k]``.
"""

import numpy as np


def outer(*vs):
    out = vs[0]
    for v in vs[1:]:
        out = np.multiply.outer(out, v)
    return out


def cyclic3(a, m):
    """a_ij m_k + a_jk m_i + a_ki m_j."""
    return (
        np.einsum("ij,k->ijk", a, m)
        + np.einsum("jk,i->ijk", a, m)
        + np.einsum("ki,j->ijk", a, m)
    )


def pairs3(a, b=None):
    """a_li b_jk + a_lj b_ik + a_lk b_ij (three pair partitions)."""
    if b is None:
        b = a
    return np.einsum("li,jk->lijk", a, b) + np.einsum("lj,ik->lijk", a, b) + np.einsum("lk,ij->lijk", a, b)


def pairs6(a, b):
    """Sum over the six ordered pair splits: a_li b_jk + a_jk b_li + ... ."""
    return pairs3(a, b) + pairs3(b, a)


def rank3_times_vec(c, v):
    """c_lij v_k + c_ijk v_l + c_jlk v_i + c_lik v_j for a symmetric c."""
    return (
        np.einsum("lij,k->lijk", c, v)
        + np.einsum("ijk,l->lijk", c, v)
        + np.einsum("jlk,i->lijk", c, v)
        + np.einsum("lik,j->lijk", c, v)
    )


def alt_jk(t):
    """X_lijk - X_likj."""
    return t - t.transpose(0, 1, 3, 2)


def frak_f(x, y):
    """X_lk Y_ij + X_ij Y_lk - X_lj Y_ik - X_ik Y_lj."""
    return (
        np.einsum("lk,ij->lijk", x, y)
        + np.einsum("ij,lk->lijk", x, y)
        - np.einsum("lj,ik->lijk", x, y)
        - np.einsum("ik,lj->lijk", x, y)
    )


def rel_err(a, b) -> float:
    """Frobenius ||a - b|| / (1 + ||b||)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / (1.0 + np.linalg.norm(b)))


def symmetry_defect(t) -> float:
    """Largest entry difference over all index transpositions of ``t``."""
    t = np.asarray(t)
    worst = 0.0
    r = t.ndim
    for a in range(r):
        for b in range(a + 1, r):
            perm = list(range(r))
            perm[a], perm[b] = perm[b], perm[a]
            worst = max(worst, float(np.max(np.abs(t - t.transpose(perm)))))
    return worst
