"""Independent reference computations used by the tests.

Nothing here imports the code under test except plain record types.
"""

from __future__ import annotations

import math
from collections import defaultdict
from fractions import Fraction

import numpy as np

DAY = 86400


def cell_overlaps(start, end, sample_duration=3600):
    """Exact (global sample index, overlap) pairs for [start, end), by direct enumeration."""
    # integer inputs stay integers; anything else goes through Fraction
    s, e, sd = (v if isinstance(v, int) else Fraction(v) for v in (start, end, sample_duration))
    out = []
    for k in range(math.floor(s / sd), math.ceil(e / sd)):
        lo, hi = max(s, k * sd), min(e, (k + 1) * sd)
        if hi > lo:
            out.append((k, hi - lo))
    return out


def social_from_log(contacts, keys_of, nodes, t_end, spd=24):
    """Brute-force TCTI / ATCTI / TECI for every node from a raw contact log.

    ``keys_of(peer)`` gives the keys a contact with ``peer`` credits
    (its interests, or ``{peer}`` for peer-indexed weights). Returns per node
    a dict with exact Fractions: ``daily[key][(day, i)]``, ``atcti[key][i]``
    over the closed days, ``current[key][i]`` for the still-open cells,
    ``teci[key][i]`` the weight at sample i (float) and ``days[i]`` closed days per sample.
    """
    sd = DAY // spd
    t_end = t_end if isinstance(t_end, int) else Fraction(t_end)
    closed_samples = math.floor(t_end / sd)  # global samples fully finished
    daily = {n: defaultdict(lambda: defaultdict(int)) for n in range(nodes)}
    for a, b, s, e in contacts:
        e = min(e, t_end)
        for k, length in cell_overlaps(s, e, sd):
            day, i = k // spd + 1, k % spd
            for x, y in ((a, b), (b, a)):
                for key in keys_of(y):
                    daily[x][key][(day, i)] += length
    # sample i has been closed on every day whose copy of i ended by t_end
    days = [sum(1 for k in range(closed_samples) if k % spd == i) for i in range(spd)]
    out = {}
    for n in range(nodes):
        atcti, current = {}, {}
        for key, cells in daily[n].items():
            total, now = [0] * spd, [0] * spd
            for (d, i), v in cells.items():
                if d <= days[i]:
                    total[i] += v
                elif d == days[i] + 1:
                    now[i] += v
            atcti[key] = [Fraction(total[i]) / days[i] if days[i] else Fraction(0)
                          for i in range(spd)]
            current[key] = [Fraction(v) for v in now]
        teci = {key: teci_floats(row) for key, row in atcti.items()}
        out[n] = {"daily": daily[n], "atcti": atcti, "current": current, "days": days,
                  "teci": teci}
    return out


def teci_sum(atcti_row, i):
    """Weight for sample i, summing the coefficient terms one at a time."""
    t = len(atcti_row)
    total = Fraction(0)
    for k in range(i, i + t):
        v = atcti_row[k % t]
        if v:
            total += Fraction(t, t + k - i) * v
    return total


def teci_floats(atcti_row):
    """Weight at every sample, each term taken from the exact cell and summed with fsum."""
    t = len(atcti_row)
    cells = [(k, float(v)) for k, v in enumerate(atcti_row) if v]
    return [math.fsum(t / (t + (k - i) % t) * v for k, v in cells) for i in range(t)]


def random_log(rng: np.random.Generator, max_nodes=10, max_interests=8, max_days=7,
               max_contacts=40):
    """A random integer-second contact log with non-overlapping contacts per pair."""
    nodes = int(rng.integers(2, max_nodes + 1))
    m = int(rng.integers(1, max_interests + 1))
    days = int(rng.integers(1, max_days + 1))
    extra = int(rng.integers(0, 24)) * 3600 + int(rng.integers(0, 3600))
    t_end = days * DAY + extra if rng.random() < 0.5 else days * DAY
    interests = {n: frozenset(int(x) for x in np.flatnonzero(rng.random(m) < 0.4))
                 for n in range(nodes)}
    by_pair = defaultdict(list)
    for _ in range(int(rng.integers(0, max_contacts + 1))):
        a, b = (int(v) for v in rng.choice(nodes, size=2, replace=False))
        a, b = min(a, b), max(a, b)
        s = int(rng.integers(0, t_end - 1))
        e = min(t_end, s + int(rng.integers(1, 7201)))
        by_pair[(a, b)].append((s, e))
    contacts = []
    for (a, b), spans in by_pair.items():
        spans.sort()
        last = -1
        for s, e in spans:
            if s < last:
                s = last
            if e > s:
                contacts.append((a, b, s, e))
                last = e
    contacts.sort(key=lambda c: (c[2], c[0], c[1]))
    return nodes, m, t_end, interests, contacts


def kclique_communities(edges, k):
    """k-clique percolation by exhaustive clique enumeration (tiny graphs only)."""
    from itertools import combinations
    nodes = sorted({n for e in edges for n in e})
    adj = {n: set() for n in nodes}
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    cliques = [frozenset(c) for c in combinations(nodes, k)
               if all(y in adj[x] for x, y in combinations(c, 2))]
    # union cliques sharing k-1 nodes
    parent = list(range(len(cliques)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p, q in combinations(range(len(cliques)), 2):
        if len(cliques[p] & cliques[q]) >= k - 1:
            parent[find(p)] = find(q)
    groups = defaultdict(set)
    for n, c in enumerate(cliques):
        groups[find(n)] |= c
    return sorted((frozenset(g) for g in groups.values()), key=sorted)
