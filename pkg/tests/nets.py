"""Small seeded graphs shared by the pruning tests and the acceptance suite."""
import numpy as np

from visafe.nn import GraphBuilder
from visafe.nn.blocks import C3Config, GhostConvConfig, c3, conv_bn_act, ghost_conv
from visafe.nn.graph import initialise
from visafe.pruner import PruningPlan, analyze


def two_conv_net(seed=0):
    b = GraphBuilder()
    x = b.input("x", 3)
    y = b.conv(x, 8, 3, name="c1")
    y = b.act(y, "relu", "r1")
    return initialise(b.build([b.conv(y, 2, 1, name="c2")]), seed)


def toy_net(seed=0):
    """Stem, ghost downsample, residual C3Ghost, standard C3 and a linear head."""
    b = GraphBuilder()
    x = b.input("x", 3)
    y = conv_bn_act(b, x, 16, 3, name="stem")
    y = ghost_conv(b, y, GhostConvConfig(16, 32, 3, 2), "down")
    y = c3(b, y, C3Config(32, 32), "c3a")
    y = c3(b, y, C3Config(32, 32, ghost=False), "c3b")
    y = conv_bn_act(b, y, 24, 1, name="proj")
    y = b.gap(y, "pool")
    return initialise(b.build([b.linear(y, 5, "fc")]), seed)


def zero_out(graph, frac, seed):
    """Zero producer rows and norm affine params of ``frac`` of every prunable group's channels."""
    an = analyze(graph)
    rng = np.random.default_rng(seed)
    drop = set()
    for grp, classes in zip(an.groups, an.group_classes):
        if grp.frozen:
            continue
        k = len(classes) - max(1, int(np.ceil((1 - frac) * len(classes) - 1e-9)))
        drop.update(int(c) for c in rng.choice(classes, size=k, replace=False))
    g = graph.copy()
    for lname, ms in an.members.items():
        for param, axis, layout in ms:
            if axis != 0 or param in ("running_mean", "running_var"):
                continue
            idx = [i for i, a in enumerate(layout) if int(an.atom_class[a]) in drop]
            arr = np.array(g.weights[lname][param])
            arr[idx] = 0.0
            g.weights[lname][param] = arr
    masks = {p: [int(an.atom_class[a]) not in drop for a in an.layouts[p]]
             for grp in an.groups if not grp.frozen for p in grp.producers}
    return g, PruningPlan(frac, masks)
