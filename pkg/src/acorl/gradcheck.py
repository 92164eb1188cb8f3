"""Finite-difference audit of every primitive and of random compositions."""

from __future__ import annotations

import time

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .losses import AamParams, aam_softmax, adv_loss, cross_entropy, kl_divergence
from .rng import make_rng, normal, uniform

EPS = 1e-5
TOLERANCE = 1e-6
RELU_MARGIN = 1e-3
# float64 central differences carry ~1e-11*|f| of roundoff at eps=1e-5, so a
# 1e-6 relative check is only meaningful for coordinates well above that
MIN_GRAD_RATIO = 1e-4


def _away_from_zero(rng, shape, margin=0.2):
    x = uniform(rng, shape, margin, 1.5)
    return x * np.where(rng.random(shape) < 0.5, -1.0, 1.0)


def primitive_cases(seed: int = 0) -> dict:
    """name -> (f, x, factor) covering every differentiable primitive and loss."""
    rng = make_rng(seed)
    c = Tensor(normal(rng, (3, 4)))
    w = Tensor(normal(rng, (4, 2)))
    row = Tensor(normal(rng, 4))
    pos = Tensor(uniform(rng, (3, 4), 0.5, 2.0))
    labels = np.array([0, 2, 1])
    v = normal(rng, (3, 4))
    sx = _away_from_zero(rng, (3, 4))
    cases = {
        "add": (lambda x: ad.sum(ad.add(x, c) * c), sx),
        "sub": (lambda x: ad.sum(ad.sub(c, x) * c), sx),
        "mul": (lambda x: ad.sum(ad.mul(x, x) * c), sx),
        "div": (lambda x: ad.sum(ad.div(c, pos + x * x)), sx),
        "neg": (lambda x: ad.sum(ad.neg(x) * c), sx),
        "exp": (lambda x: ad.sum(ad.exp(x) * c), sx),
        "log": (lambda x: ad.sum(ad.log(pos + x * x) * c), sx),
        "relu": (lambda x: ad.sum(ad.relu(x) * c), sx),
        "scale": (lambda x: ad.sum(ad.scale(x, -1.7) * c), sx),
        "broadcast_add_row": (lambda x: ad.sum(ad.exp(ad.broadcast_add_row(x * 0.3, row))), sx),
        "broadcast_add_row.row": (lambda x: ad.sum(ad.exp(ad.broadcast_add_row(c * 0.3, x))), sx[0]),
        "matmul.left": (lambda x: ad.sum(ad.exp(ad.matmul(x, w) * 0.5)), sx),
        "matmul.right": (lambda x: ad.sum(ad.exp(ad.matmul(c, x) * 0.5)), normal(rng, (4, 2))),
        "transpose": (lambda x: ad.sum(ad.transpose(x) * Tensor(c.data.T)), sx),
        "softmax_rows": (lambda x: ad.sum(ad.softmax_rows(x) * c), sx),
        "log_softmax_rows": (lambda x: ad.sum(ad.log_softmax_rows(x) * c), sx),
        "sum": (lambda x: ad.sum(x) * ad.sum(x), sx),
        "mean": (lambda x: ad.mean(x * x), sx),
        "pick": (lambda x: ad.sum(ad.exp(ad.pick(x, labels))), sx),
        "sqrt": (lambda x: ad.sum(ad.sqrt(pos + x * x) * c), sx),
        "clamp": (lambda x: ad.sum(ad.clamp(x, -1.6, 1.6) * c), sx),
        "l2_normalize_rows": (lambda x: ad.sum(ad.l2_normalize_rows(x) * c), sx),
        "cross_entropy": (lambda x: cross_entropy(x, labels), sx),
        "aam_softmax": (lambda x: aam_softmax(x, Tensor(normal(make_rng(1), (3, 4))), labels, AamParams(0.2, 4.0)), sx),
        "kl_divergence": (lambda x: kl_divergence(ad.softmax_rows(Tensor(v)), ad.softmax_rows(x)), sx),
        "adv_loss": (lambda x: adv_loss(x, v, 0.7), sx),
    }
    out = {name: (f, x, 1.0) for name, (f, x) in cases.items()}
    for lam in (0.5, 1.0, 2.0):
        out[f"grad_reverse[{lam}]"] = (lambda x, lam=lam: ad.sum(ad.grad_reverse(ad.exp(x), lam) * c), sx, -lam)
    return out


_UNARY = ("exp", "log1p_sq", "relu", "softmax", "log_softmax", "l2", "sqrt", "scale", "neg", "square", "div")
_BINARY = ("add", "sub", "mul", "matmul", "add_row", "transpose")


def random_chain(rng, depth: int, dim: int = 4):
    """A random matrix-to-matrix function of up to ``depth`` primitives on dim x dim inputs.

    The returned callable records ``relu_margin``, the smallest |input| seen
    by a relu during its last call, so callers can skip draws near the kink.
    """
    ops = []
    for _ in range(depth):
        kind = _UNARY[int(rng.random() * len(_UNARY))] if rng.random() < 0.6 else _BINARY[int(rng.random() * len(_BINARY))]
        const = Tensor(normal(rng, (dim, dim)) * 0.5)
        row = Tensor(normal(rng, dim) * 0.5)
        ops.append((kind, const, row))

    def chain(x):
        chain.relu_margin = np.inf
        h = x
        for kind, const, row in ops:
            if kind == "exp":
                h = ad.exp(ad.scale(h, 0.3))
            elif kind == "log1p_sq":
                h = ad.log(h * h + Tensor(np.ones(h.shape)))
            elif kind == "relu":
                chain.relu_margin = min(chain.relu_margin, float(np.abs(h.data).min()))
                h = ad.relu(h)
            elif kind == "softmax":
                h = ad.softmax_rows(h)
            elif kind == "log_softmax":
                h = ad.log_softmax_rows(h)
            elif kind == "l2":
                h = ad.l2_normalize_rows(h)
            elif kind == "sqrt":
                h = ad.sqrt(h * h + Tensor(np.ones(h.shape)))
            elif kind == "scale":
                h = ad.scale(h, 1.3)
            elif kind == "neg":
                h = ad.neg(h)
            elif kind == "square":
                h = h * h
            elif kind == "div":
                h = ad.div(h, h * h + Tensor(np.full(h.shape, 2.0)))
            elif kind == "add":
                h = h + const
            elif kind == "sub":
                h = const - h
            elif kind == "mul":
                h = h * const
            elif kind == "matmul":
                h = ad.matmul(h, const)
            elif kind == "add_row":
                h = ad.broadcast_add_row(h, row)
            elif kind == "transpose":
                h = ad.transpose(h)
        return h

    chain.kinds = [k for k, _, _ in ops]
    chain.relu_margin = np.inf
    return chain


def random_composition(rng, depth: int, dim: int = 4):
    """Build a random scalar function of a dim x dim input from up to ``depth`` primitives."""
    chain = random_chain(rng, depth, dim)
    weights = Tensor(normal(rng, (dim, dim)))

    def f(x):
        out = ad.sum(chain(x) * weights)
        f.relu_margin = chain.relu_margin
        return out

    return f, chain.kinds


def run_suite(seed: int = 0, compositions: int = 100, max_depth: int = 6) -> dict:
    """Check every primitive and ``compositions`` random graphs; report the worst error."""
    start = time.perf_counter()
    results = {}
    for name, (f, x, factor) in primitive_cases(seed).items():
        results[name] = ad.finite_difference_check(f, x, EPS, factor)
    rng = make_rng(seed + 1)
    comp_errors = []
    rejected = {"relu_kink": 0, "ill_conditioned": 0}
    while len(comp_errors) < compositions:
        depth = 1 + int(rng.random() * max_depth)
        f, _ = random_composition(rng, depth)
        x = _away_from_zero(rng, (4, 4))
        tape = ad.Tape()
        xt = tape.parameter(x)
        out = f(xt)
        if f.relu_margin <= RELU_MARGIN:
            # central differences would straddle a relu kink
            rejected["relu_kink"] += 1
            continue
        g = np.abs(tape.backward(out)[xt])
        nonzero = g[g > 0]
        if nonzero.size and nonzero.min() < MIN_GRAD_RATIO * max(abs(out.item()), 1.0):
            rejected["ill_conditioned"] += 1
            continue
        comp_errors.append(ad.finite_difference_check(f, x, EPS))
    worst_primitive = max(results.values())
    worst_comp = max(comp_errors) if comp_errors else 0.0
    return {
        "primitives": results,
        "max_primitive_error": worst_primitive,
        "max_composition_error": worst_comp,
        "compositions": len(comp_errors),
        "rejected": rejected,
        "max_error": max(worst_primitive, worst_comp),
        "passed": max(worst_primitive, worst_comp) < TOLERANCE,
        "seconds": time.perf_counter() - start,
    }
