"""Test-only oracles that share no code with the package."""

import itertools
from fractions import Fraction

import networkx as nx


def timeline_by_longest_path(layers, K, continuous=False):
    """Earliest event times as longest paths in the precedence DAG.

    ``layers`` is a list of ``(alphas_in_order, beta)``. Nodes are event
    boundaries; an edge ``u -> v`` of weight ``w`` means ``t(v) >= t(u) + w``.
    Returns ``{(layer, pos): (load_start, load_end, comp_start, comp_end)}``.
    """
    g = nx.DiGraph()
    g.add_node("origin")
    prev_load_end = None
    prev_comp_end = None
    for l, (alphas, beta) in enumerate(layers):
        for j, a in enumerate(alphas):
            ls, le, cs, ce = (("ls", l, j), ("le", l, j), ("cs", l, j), ("ce", l, j))
            g.add_edge("origin", ls, weight=0)
            g.add_edge(ls, le, weight=beta)
            g.add_edge(le, cs, weight=0)
            g.add_edge(cs, ce, weight=a)
            if prev_load_end is not None:
                g.add_edge(prev_load_end, ls, weight=0)
            if prev_comp_end is not None:
                g.add_edge(prev_comp_end, cs, weight=0)
            if j == 0 and l > 0 and not continuous:
                g.add_edge(prev_comp_end, ls, weight=0)
            if j >= K:
                # the load lands no earlier than the (j-K)-th compute start
                g.add_edge(("cs", l, j - K), le, weight=0)
            prev_load_end, prev_comp_end = le, ce
    # a pinned load end pushes its start to le - beta, reported below
    dist = {"origin": 0}
    for node in nx.topological_sort(g):
        if node == "origin":
            continue
        dist[node] = max(dist[u] + d["weight"] for u, _, d in g.in_edges(node, data=True))
    out = {}
    for l, (alphas, beta) in enumerate(layers):
        for j in range(len(alphas)):
            le = dist[("le", l, j)]
            out[(l, j)] = (le - beta, le, dist[("cs", l, j)], dist[("ce", l, j)])
    return out


def prefix_band_feasible(alphas, beta, K):
    """Exact-rational brute force over permutations."""
    alphas = [Fraction(a) for a in alphas]
    beta = Fraction(beta)
    T = len(alphas)
    for perm in itertools.permutations(range(T)):
        p = Fraction(0)
        for m in range(T):
            if not (m * beta <= p <= (m + K) * beta):
                break
            p += alphas[perm[m]]
        else:
            return perm
    return None
