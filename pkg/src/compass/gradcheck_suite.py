"""Finite-difference checks over every primitive, model component and loss."""

from __future__ import annotations

import time
from typing import Callable, Iterator

import numpy as np

from . import losses as L
from .modalities import ModalitySet
from .model import CompassModel, ModelConfig
from .numerics import Tensor, check_gradients
from .numerics import tensor as T
from .numerics.gradcheck import GradCheckResult

TOL = 1e-5

Builder = Callable[[np.random.Generator], tuple[Callable[[], Tensor], list[Tensor]]]
CHECKS: dict[str, Builder] = {}


def register(name: str):
    def deco(fn: Builder) -> Builder:
        CHECKS[name] = fn
        return fn

    return deco


def _t(rng, *shape, low=-1.0, high=1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape))


def _weights(rng, *shape) -> np.ndarray:
    # fixed random projection so every output component matters
    return rng.standard_normal(shape)


def _project(out: Tensor, w: np.ndarray) -> Tensor:
    return T.sum_(out * Tensor(w))


# -- primitives ---------------------------------------------------------------
def _elementwise(name: str, op, low=-1.0, high=1.0):
    @register(f"primitive.{name}")
    def build(rng):
        x = _t(rng, 3, 4, low=low, high=high)
        w = _weights(rng, 3, 4)
        return (lambda: _project(op(x), w)), [x]


_elementwise("exp", T.exp)
_elementwise("log", T.log, 0.5, 2.0)
_elementwise("sqrt", T.sqrt, 0.5, 2.0)
_elementwise("square", T.square)
_elementwise("neg", T.neg)
_elementwise("scale", lambda x: T.scale(x, -2.5))
_elementwise("maximum", lambda x: T.maximum(x, 0.1))
_elementwise("gelu", T.gelu, -3.0, 3.0)
_elementwise("softmax", lambda x: T.softmax(x, axis=-1))
_elementwise("log_softmax", lambda x: T.log_softmax(x, axis=0))
_elementwise("transpose", lambda x: T.transpose(x.reshape(3, 2, 2), (2, 0, 1)).reshape(3, 4))
_elementwise("slice", lambda x: T.concat([x[:, 1:3], x[:, 1:3]], axis=1))


@register("primitive.add_broadcast")
def _(rng):
    a, b = _t(rng, 3, 4), _t(rng, 4)
    w = _weights(rng, 3, 4)
    return (lambda: _project(a + b, w)), [a, b]


@register("primitive.mul_div")
def _(rng):
    a, b, c = _t(rng, 3, 4), _t(rng, 3, 1), _t(rng, 4, low=0.5, high=2.0)
    w = _weights(rng, 3, 4)
    return (lambda: _project(a * b / c - b, w)), [a, b, c]


@register("primitive.matmul_batched")
def _(rng):
    a, b = _t(rng, 2, 3, 4), _t(rng, 4, 5)
    w = _weights(rng, 2, 3, 5)
    return (lambda: _project(a @ b, w)), [a, b]


@register("primitive.sum_mean")
def _(rng):
    x = _t(rng, 3, 4, 2)
    w1, w2 = _weights(rng, 3, 2), _weights(rng, 4)
    return (lambda: _project(T.sum_(x, axis=1), w1) + _project(T.mean(x, axis=(0, 2)), w2)), [x]


@register("primitive.concat")
def _(rng):
    a, b = _t(rng, 2, 3), _t(rng, 2, 2)
    w = _weights(rng, 2, 5)
    return (lambda: _project(T.concat([a, b], axis=1), w)), [a, b]


@register("primitive.layer_norm")
def _(rng):
    x, g, b = _t(rng, 3, 5), _t(rng, 5, low=0.5, high=1.5), _t(rng, 5)
    w = _weights(rng, 3, 5)
    return (lambda: _project(T.layer_norm(x, g, b), w)), [x, g, b]


@register("primitive.batch_norm")
def _(rng):
    x, g, b = _t(rng, 4, 3, 5), _t(rng, 5, low=0.5, high=1.5), _t(rng, 5)
    w = _weights(rng, 4, 3, 5)
    return (lambda: _project(T.batch_norm_train(x, g, b)[0], w)), [x, g, b]


@register("primitive.reuse_accumulation")
def _(rng):
    x = _t(rng, 5)
    return (lambda: T.sum_(x * x * x) + T.sum_(T.exp(x) * x)), [x]


# -- model components -----------------------------------------------------------
def tiny_model(fusion_mode: str = "sum", seed: int = 0) -> CompassModel:
    cfg = ModelConfig(
        n_modalities=3, raw_dims=(5, 4, 6), n_classes=3, tokens=3, dim=4, heads=2,
        ffn_dim=6, enc_hidden=5, enc_tokens=(2, 3, 4), enc_dims=(3, 2, 4),
        fusion_mode=fusion_mode, seed=seed,
    )
    return CompassModel(cfg)


def _raw(rng, model: CompassModel, batch: int = 4) -> list[np.ndarray]:
    return [rng.standard_normal((batch, d)) for d in model.config.raw_dims]


def _param_inputs(model: CompassModel, prefix: str) -> list[Tensor]:
    return [model.params[n] for n in model.params.names(prefix)]


@register("model.encode")
def _(rng):
    m = tiny_model()
    x = Tensor(rng.standard_normal((3, 4)))
    w = _weights(rng, 3, 3, 2)
    return (lambda: _project(m.encode(x, 1), w)), [x] + _param_inputs(m, "encoder.1.")


@register("model.project")
def _(rng):
    m = tiny_model()
    h = _t(rng, 4, 4, 4)
    w = _weights(rng, 4, 3, 4)
    return (lambda: _project(m.project(h, 2, train=True), w)), [h] + _param_inputs(m, "proj.2.")


@register("model.global_token")
def _(rng):
    z = _t(rng, 4, 3, 4)
    w = _weights(rng, 4, 4)
    from .model import global_token

    return (lambda: _project(global_token(z), w)), [z]


@register("model.generate_proxy")
def _(rng):
    m = tiny_model()
    z = _t(rng, 2, 3, 4)
    w = _weights(rng, 2, 4)
    return (lambda: _project(m.generate_proxy(z, 0, 2), w)), [z] + _param_inputs(m, "gen.0.2.")


def _fusion_check(mode: str):
    @register(f"model.fuse_{mode}")
    def build(rng):
        from .model import GlobalToken

        m = tiny_model(mode)
        toks = [_t(rng, 2, 4) for _ in range(3)]
        w = _weights(rng, 2, 4)

        def fn():
            return _project(m.fuse([GlobalToken(t) for t in toks]), w)

        return fn, toks + _param_inputs(m, "fusion.")


for _mode in ("sum", "concat_linear", "cross_attention"):
    _fusion_check(_mode)


@register("model.task_head")
def _(rng):
    m = tiny_model()
    f = _t(rng, 3, 4)
    w = _weights(rng, 3, 3)
    return (lambda: _project(m.task_head(f), w)), [f] + _param_inputs(m, "head.")


# -- losses ------------------------------------------------------------------------
@register("loss.task")
def _(rng):
    logits = _t(rng, 4, 3, low=-2, high=2)
    y = rng.integers(0, 3, size=4)
    return (lambda: L.task_loss(logits, y, 0.1)), [logits]


@register("loss.align")
def _(rng):
    pairs = {(0, 1): _t(rng, 3, 4), (2, 1): _t(rng, 3, 4), (0, 3): _t(rng, 3, 4), (2, 3): _t(rng, 3, 4)}
    targets = {1: _t(rng, 3, 4), 3: _t(rng, 3, 4)}
    return (lambda: L.align_loss(pairs, targets)), list(pairs.values()) + list(targets.values())


def _vicreg_inputs(rng):
    # spread-out columns keep every std away from the hinge at 1
    zi = Tensor(rng.standard_normal((5, 3)) * np.array([0.3, 0.6, 2.5]))
    zj = Tensor(rng.standard_normal((5, 3)) * np.array([2.0, 0.4, 0.7]))
    return zi, zj


for _k, _term in enumerate(("total", "inv", "var", "cov")):

    def _make(k=_k, term=_term):
        @register(f"loss.vicreg_{term}")
        def build(rng):
            zi, zj = _vicreg_inputs(rng)
            return (lambda: L.vicreg_pair(zi, zj)[k]), [zi, zj]

    _make()


@register("loss.shared_space")
def _(rng):
    toks = {m: Tensor(rng.standard_normal((5, 3)) * rng.uniform(0.2, 0.6, 3)) for m in range(3)}
    obs = ModalitySet.full(3)
    return (lambda: L.shared_space_loss(toks, obs)), list(toks.values())


@register("loss.per_proxy")
def _(rng):
    m = tiny_model()
    pairs = {(0, 1): _t(rng, 3, 4), (0, 2): _t(rng, 3, 4)}
    y = rng.integers(0, 3, size=3)
    return (lambda: L.per_proxy_loss(pairs, y, m.task_head, 0.1)), list(pairs.values()) + _param_inputs(m, "head.")


@register("loss.total_masked_forward")
def _(rng):
    from .trainer import loss_parts

    m = tiny_model()
    xs = _raw(rng, m, batch=4)
    y = rng.integers(0, 3, size=4)
    obs = ModalitySet.of([0], 3)
    w = L.LossWeights(mu_var=2.0)

    def fn():
        out = m.forward(xs, obs, train=True)
        return L.total_loss(loss_parts(out, y, m, w, detach_targets=False), w, masked=True)

    inputs = [m.params[n] for n in ("gen.0.1.query", "gen.0.2.attn.q.weight", "proj.0.bn.weight", "head.fc.weight", "encoder.1.fc2.bias")]
    return fn, inputs


def run_all(seed: int = 0, tol: float = TOL, names=None) -> Iterator[tuple[GradCheckResult, float]]:
    """Yield ``(result, seconds)`` for every registered check."""
    for name, builder in CHECKS.items():
        if names is not None and name not in names:
            continue
        rng = np.random.default_rng(seed)
        start = time.perf_counter()
        fn, inputs = builder(rng)
        res = check_gradients(fn, inputs, name=name, tol=tol)
        yield res, time.perf_counter() - start
