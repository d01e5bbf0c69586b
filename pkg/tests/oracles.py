"""Independent brute-force references shared by the unit and acceptance tests."""

from fractions import Fraction


def brute_otsu(hist):
    """Exhaustive omega0 * omega1 * (mu0 - mu1)^2 over bin centres, exact rationals."""
    n = sum(int(c) for c in hist)
    best_k, best = None, None
    for k in range(1, len(hist)):
        c0 = [int(c) for c in hist[:k]]
        c1 = [int(c) for c in hist[k:]]
        n0, n1 = sum(c0), sum(c1)
        if n0 == 0 or n1 == 0:
            continue
        mu0 = Fraction(sum((2 * i + 1) * c for i, c in enumerate(c0)), 2 * n0)
        mu1 = Fraction(sum((2 * (i + k) + 1) * c for i, c in enumerate(c1)), 2 * n1)
        var = Fraction(n0, n) * Fraction(n1, n) * (mu0 - mu1) ** 2
        if best is None or var > best:
            best_k, best = k, var
    return best_k


def pairwise_auc(pos, neg):
    """Count every (pos, neg) pair directly."""
    wins = 0.0
    for p in pos:
        for n in neg:
            wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(pos) * len(neg))
