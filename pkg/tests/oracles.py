"""Independent brute-force reference implementations used to pin expected values.

These deliberately avoid the package's own code paths: the alpha oracle
enumerates rater pairs item by item instead of accumulating category counts.
"""
from __future__ import annotations


def krippendorff_alpha_bruteforce(rows: list[list]) -> float:
    """Nominal Krippendorff's alpha by explicit ordered-pair enumeration.

    ``rows`` is one list per annotator, one entry per item, ``None`` = missing.
    Every item with at least two ratings contributes 1/(m_u - 1) to the
    coincidence count of each ordered pair of its ratings.
    """
    n_items = len(rows[0])
    assert all(len(r) == n_items for r in rows)
    categories = sorted({v for row in rows for v in row if v is not None})
    index = {c: i for i, c in enumerate(categories)}
    k = len(categories)
    coincidence = [[0.0] * k for _ in range(k)]

    any_pairable = False
    for u in range(n_items):
        ratings = [row[u] for row in rows if row[u] is not None]
        m = len(ratings)
        if m < 2:
            continue
        any_pairable = True
        for i in range(m):
            for j in range(m):
                if i == j:
                    continue
                coincidence[index[ratings[i]]][index[ratings[j]]] += 1.0 / (m - 1)
    if not any_pairable:
        raise ValueError("no item with two or more ratings")

    n_c = [sum(coincidence[c]) for c in range(k)]
    n = sum(n_c)
    d_o = sum(coincidence[c][d] for c in range(k) for d in range(k) if c != d) / n
    d_e = sum(n_c[c] * n_c[d] for c in range(k) for d in range(k) if c != d) / (n * (n - 1))
    if d_e == 0.0:
        return 1.0
    return 1.0 - d_o / d_e


def absolute_agreement_bruteforce(rows: list[list]) -> float:
    """Fraction of items with >=2 ratings whose ratings are all identical."""
    n_items = len(rows[0])
    eligible = 0
    unanimous = 0
    for u in range(n_items):
        ratings = [row[u] for row in rows if row[u] is not None]
        if len(ratings) < 2:
            continue
        eligible += 1
        if len(set(ratings)) == 1:
            unanimous += 1
    if eligible == 0:
        raise ValueError("no item with two or more ratings")
    return unanimous / eligible


def one_disagreement_bruteforce(rows: list[list]) -> float:
    """Fraction of eligible items made unanimous by removing at most one rating."""
    n_items = len(rows[0])
    eligible = 0
    ok = 0
    for u in range(n_items):
        ratings = [row[u] for row in rows if row[u] is not None]
        m = len(ratings)
        if m < 2:
            continue
        eligible += 1
        if len(set(ratings)) == 1:
            ok += 1
            continue
        # try removing each single rating
        for drop in range(m):
            rest = ratings[:drop] + ratings[drop + 1:]
            if len(set(rest)) <= 1:
                ok += 1
                break
    if eligible == 0:
        raise ValueError("no item with two or more ratings")
    return ok / eligible


if __name__ == "__main__":
    # values frozen into the test suite
    a = ["S", "S", "N", "N"]
    b = ["S", "N", "N", "N"]
    print("two-annotator alpha:", krippendorff_alpha_bruteforce([a, b]))
    print("single split item alpha:", krippendorff_alpha_bruteforce([["S"], ["N"]]))
    print("absolute:", absolute_agreement_bruteforce([a, b]))
