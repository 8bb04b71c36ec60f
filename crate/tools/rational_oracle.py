"""Exact rational reference values for the golden tests.

Plain memoized recursions over (sC, fC, sD, fD) with Fraction arithmetic;
shares no code or indexing with the Rust crate.
"""
from fractions import Fraction as F
from functools import lru_cache
import sys

sys.setrecursionlimit(10000)
HALF = F(1, 2)


def bayes_value(T, prior=(1, 1, 1, 1)):
    a0, b0, c0, d0 = map(F, prior)

    @lru_cache(maxsize=None)
    def v(sc, fc, sd, fd):
        if sc + fc + sd + fd == T:
            return F(0)
        qc = (a0 + sc) / (a0 + b0 + sc + fc)
        qd = (c0 + sd) / (c0 + d0 + sd + fd)
        vc = qc * (1 + v(sc + 1, fc, sd, fd)) + (1 - qc) * v(sc, fc + 1, sd, fd)
        vd = qd * (1 + v(sc, fc, sd + 1, fd)) + (1 - qd) * v(sc, fc, sd, fd + 1)
        return max(vc, vd)

    return v(0, 0, 0, 0)


def pick(score_c, score_d):
    if score_c > score_d:
        return F(1)
    if score_d > score_c:
        return F(0)
    return HALF


def bm(sc, fc, sd, fd, t):
    return pick(F(1 + sc, 2 + sc + fc), F(1 + sd, 2 + sd + fd))


def blff(sc, fc, sd, fd, t):
    if fc != fd:
        return pick(-fc, -fd)
    return pick(F(1 + sc, 2 + sc + fc), F(1 + sd, 2 + sd + fd))


def dp_policy(T):
    """Optimal probability of C, mixing exact ties."""
    a0 = b0 = c0 = d0 = F(1)

    @lru_cache(maxsize=None)
    def v(sc, fc, sd, fd):
        if sc + fc + sd + fd == T:
            return F(0)
        vc, vd = branch(sc, fc, sd, fd)
        return max(vc, vd)

    def branch(sc, fc, sd, fd):
        qc = (a0 + sc) / (a0 + b0 + sc + fc)
        qd = (c0 + sd) / (c0 + d0 + sd + fd)
        vc = qc * (1 + v(sc + 1, fc, sd, fd)) + (1 - qc) * v(sc, fc + 1, sd, fd)
        vd = qd * (1 + v(sc, fc, sd + 1, fd)) + (1 - qd) * v(sc, fc, sd, fd + 1)
        return vc, vd

    def rule(sc, fc, sd, fd, t):
        vc, vd = branch(sc, fc, sd, fd)
        return pick(vc, vd)

    return rule


def freq_mean(rule, T, tc, td):
    @lru_cache(maxsize=None)
    def w(sc, fc, sd, fd):
        t = sc + fc + sd + fd
        if t == T:
            return F(0)
        pc = rule(sc, fc, sd, fd, t)
        vc = tc * (1 + w(sc + 1, fc, sd, fd)) + (1 - tc) * w(sc, fc + 1, sd, fd)
        vd = td * (1 + w(sc, fc, sd + 1, fd)) + (1 - td) * w(sc, fc, sd, fd + 1)
        return pc * vc + (1 - pc) * vd

    return w(0, 0, 0, 0)


if __name__ == "__main__":
    for T in [3, 5, 8, 10, 12]:
        v = bayes_value(T)
        print(f"bayes_value T={T}: {v} = {float(v)!r}")
    print(f"bayes_value T=6 prior (1,2,2,1): {float(bayes_value(6, (1, 2, 2, 1)))!r}")
    tc, td = F(7, 10), F(9, 10)
    for name, rule in [("bm", bm), ("blff", blff)]:
        for T in [5, 10]:
            print(f"freq {name} T={T}: {float(freq_mean(rule, T, tc, td))!r}")
    for T in [5, 10]:
        print(f"freq dp T={T}: {float(freq_mean(dp_policy(T), T, tc, td))!r}")
