"""Small problem builders shared by the test modules."""

from coaxheat.model import HomogeneousProblem


def homogeneous(E="1", K="0", f_f=0.0, f_g=0.0, source=None, U0=None, **kw):
    """HomogeneousProblem with uniform E and K unless mappings are given."""
    E = E if isinstance(E, dict) else {a: E for a in "fsgp"}
    K = K if isinstance(K, (list, tuple)) else [K] * 6
    source = source or {a: "0" for a in "fsgp"}
    U0 = U0 or {a: "0" for a in "fsgp"}
    return HomogeneousProblem(E=E, f_f=f_f, f_g=f_g, K=K, source=source, U0=U0, **kw)
