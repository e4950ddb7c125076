"""Finite-difference verification of every analytic gradient in the package.

Each check builds a small random problem (features 16-d, attributes 8-d,
hidden layers 12 wide, embedding 16-d), computes the analytic gradient and
compares it with central differences entry by entry via ``mlp.fd_check``.
"""

from __future__ import annotations

import numpy as np

from . import mlp, structopt, vpb
from .dataset import synth
from .tensor import Rng

LOSS_NAMES = ("prototype_ce", "semantic_embedding", "simple_ranking", "bidirectional_ranking",
              "structure")

DIMS = dict(d=16, k=8, hidden=12, embed=16)
EPS = 1e-6
TOLERANCE = 1e-4


def _problem(seed):
    ds = synth(seed=seed, p=4, q=2, d=DIMS["d"], k=DIMS["k"], n_per_class=6, noise_sigma=0.3,
               test_seen_frac=0.2)
    rng = Rng(seed).substream(99)
    h, emb = DIMS["hidden"], DIMS["embed"]
    nets = structopt.Nets(mlp.init(rng, ds.d, h, emb), mlp.init(rng, ds.k, h, emb))
    return ds, rng, nets


def _net_checks(nets, grads, loss_only, probe, scale=1.0):
    """fd_check every weight matrix named in ``grads``; returns the worst error.

    ``grads`` maps branch name ("visual"/"semantic") to its GradPair and
    ``loss_only(nets)`` evaluates the loss without gradients. The perturbed
    matrix is swapped into ``nets`` for each evaluation and restored after.
    """
    worst = 0.0
    for branch, g in grads.items():
        net = getattr(nets, branch)
        for which, analytic in (("w1", g.g1), ("w2", g.g2)):
            original = getattr(net, which)

            def at(w, net=net, which=which):
                setattr(net, which, w)
                return nets

            try:
                worst = max(worst, mlp.fd_check(lambda w: loss_only(at(w)), original,
                                                analytic * scale, EPS, probe=lambda w: probe(at(w))))
            finally:
                setattr(net, which, original)
    return worst


def check_prototype_ce(seed, scale=1.0):
    ds, rng, _ = _problem(seed)
    bank = vpb.init_prototypes(ds)
    bank.protos += rng.normals(bank.protos.size).reshape(bank.protos.shape)
    idx = ds.train_indices
    x, y = ds.features[idx], ds.labels[idx]
    _, grad = vpb.proto_loss_grad(bank, x, y)
    return mlp.fd_check(lambda z: vpb.proto_loss_grad(vpb.PrototypeBank(z, bank.classes), x, y)[0],
                        bank.protos, grad * scale, EPS)


def check_semantic_embedding(seed, scale=1.0, lambda_emb=0.01):
    ds, rng, nets = _problem(seed)
    bank = vpb.init_prototypes(ds)
    net = mlp.init(rng, ds.k, DIMS["hidden"], ds.d)

    def loss_only(n):
        return vpb.embed_loss_grad(n.semantic, bank, ds.attributes, lambda_emb)[0]

    def probe(n):
        acts = mlp.forward_cache(n.semantic, ds.attributes[bank.classes])
        return np.concatenate([acts.pre1.ravel(), acts.pre2.ravel()])

    _, g = vpb.embed_loss_grad(net, bank, ds.attributes, lambda_emb)
    # the L2 term's gradient is what sgd_step adds
    g = mlp.GradPair(g.g1 + 2 * lambda_emb * net.w1, g.g2 + 2 * lambda_emb * net.w2)
    return _net_checks(structopt.Nets(nets.visual, net), {"semantic": g}, loss_only, probe, scale)


def _structopt_check(seed, variant, lambda_struct, scale, only_structure=False):
    ds, rng, nets = _problem(seed)
    cfg = structopt.StructOptConfig(variant=variant, batch_classes=3, batch_per_class=3,
                                    lambda_struct=lambda_struct, alpha1=0.2, alpha2=0.3,
                                    alpha3=0.1, beta=0.7, visual_init="xavier")
    batch = structopt.mine_batch(rng, ds, nets, cfg)

    if only_structure:
        _, g = structopt.structure_loss(nets, ds, batch, cfg.alpha3)
        grads = {"visual": g}

        def loss_only(n):
            return structopt.structure_loss(n, ds, batch, cfg.alpha3, with_grad=False)[0]
    else:
        lossfn = structopt.loss_srs if variant == "SRS" else structopt.loss_brs
        _, (gv, gs) = lossfn(nets, ds, batch, cfg)
        grads = {"visual": gv, "semantic": gs}

        def loss_only(n):
            return lossfn(n, ds, batch, cfg, with_grad=False)[0].total

    return _net_checks(nets, grads, loss_only,
                       lambda n: structopt.kink_values(n, ds, batch, cfg), scale)


def check_simple_ranking(seed, scale=1.0):
    return _structopt_check(seed, "SRS", 0.0, scale)


def check_bidirectional_ranking(seed, scale=1.0):
    return _structopt_check(seed, "BRS", 0.0, scale)


def check_structure(seed, scale=1.0):
    return _structopt_check(seed, "SRS", 1.0, scale, only_structure=True)


CHECKS = {
    "prototype_ce": check_prototype_ce,
    "semantic_embedding": check_semantic_embedding,
    "simple_ranking": check_simple_ranking,
    "bidirectional_ranking": check_bidirectional_ranking,
    "structure": check_structure,
}


def run(seeds=range(20), faults=()):
    """Worst relative error per loss over ``seeds``.

    Losses named in ``faults`` get their analytic gradient doubled, which
    must make the check fail.
    """
    return {name: max(fn(seed, 2.0 if name in faults else 1.0) for seed in seeds)
            for name, fn in CHECKS.items()}
