"""
Small numeric and dict helpers shared across blackout
"""


import numpy as np
from scipy.special import gammaln, xlogy


def prefix_text(text: str, prefix: str, split: str = "\n") -> str:
    return split.join(prefix + part for part in text.split(split))


def dict_deep_update(to_update, new_vals):
    """Deeply update the to_update dict with the new_vals"""
    for key, value in new_vals.items():
        if isinstance(value, dict):
            node = to_update.setdefault(key, {})
            dict_deep_update(node, value)
        else:
            to_update[key] = value


def drop_none(vals):
    """Return a copy of ``vals`` without the keys whose value is None,
    recursing into nested dicts.
    """
    res = {}
    for key, value in vals.items():
        if isinstance(value, dict):
            value = drop_none(value)
            if not value:
                continue
        if value is None:
            continue
        res[key] = value
    return res


def log_binom_pmf(k, n, p, q):
    """Log of the binomial pmf ``C(n, k) p^k q^(n-k)``.

    ``p`` and ``q = 1 - p`` are passed separately so that callers can
    compute both without cancellation. Entries with ``k < 0`` or ``k > n``
    are ``-inf``.

    :param k: number of successes (array-like of ints)
    :param n: number of trials (array-like of ints)
    :param p: success probability
    :param q: failure probability
    """
    k = np.asarray(k)
    n = np.asarray(n)
    k, n = np.broadcast_arrays(k, n)
    valid = (k >= 0) & (k <= n)
    ks = np.where(valid, k, 0)
    ns = np.where(valid, n, 0)
    coef = gammaln(ns + 1.0) - gammaln(ks + 1.0) - gammaln(ns - ks + 1.0)
    res = coef + xlogy(ks, p) + xlogy(ns - ks, q)
    return np.where(valid, res, -np.inf)


def softplus(z):
    return np.logaddexp(0.0, z)


def inverse_softplus(y):
    """Inverse of :func:`softplus` for ``y > 0``"""
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))
