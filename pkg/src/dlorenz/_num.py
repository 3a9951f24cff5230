"""Scalar helpers that work for both Python floats and gmpy2 mpfr values."""
import math

import gmpy2


def is_mp(*values):
    return any(isinstance(v, gmpy2.mpfr) for v in values)


def _pick(name):
    fm = getattr(math, name)
    fg = getattr(gmpy2, name)

    def f(*args):
        return fg(*args) if is_mp(*args) else fm(*args)

    f.__name__ = name
    return f


sqrt = _pick("sqrt")
cos = _pick("cos")
sin = _pick("sin")
atanh = _pick("atanh")
atan2 = _pick("atan2")
log = _pick("log")
exp = _pick("exp")


def mp(x):
    """Exact conversion of a float (or decimal string) to mpfr at the current precision."""
    return gmpy2.mpfr(x)


def precision(bits):
    ctx = gmpy2.get_context().copy()
    ctx.precision = int(bits)
    return gmpy2.context(ctx)


def eps_like(x):
    """Relative tolerance matching the working precision of x."""
    if is_mp(x):
        return gmpy2.mpfr(2) ** (8 - gmpy2.get_context().precision)
    return 4e-16
