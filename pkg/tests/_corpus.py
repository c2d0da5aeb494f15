"""Offspring trees shared by several test modules (all depths <= 8)."""

from spectree.graph_core import OffspringSequence, build_offspring_tree, tree_from_offspring_map
from spectree.random_trees import OffspringDistribution, sample_gw_tree

FAMILIES = {
    "path": (OffspringSequence.constant(1), 8),
    "binary": (OffspringSequence.constant(2), 8),
    "alt23": (OffspringSequence.periodic([2, 3]), 7),
    "power1": (OffspringSequence.power(1), 6),
    "power2": (OffspringSequence.power(2), 4),
    "exp2": (OffspringSequence.exponential(2), 5),
}

GW_LAW = OffspringDistribution.from_pmf([0.0, 0.3, 0.4, 0.3])


def offspring_trees():
    return {name: build_offspring_tree(b, d) for name, (b, d) in FAMILIES.items()}


def gw_trees(seeds=(0, 1, 2), depth=6):
    out = {}
    for s in seeds:
        t = sample_gw_tree(GW_LAW, depth, seed=s)
        # keep only the interior offspring so the truncation is a plain tree
        off = {v: t.off(v) for v in t.vertices if len(v) < t.depth}
        out[f"gw{s}"] = tree_from_offspring_map(off, t.depth)
    return out


def corpus():
    return {**offspring_trees(), **gw_trees()}
