"""Slot-complete fusion network.

Pipeline per modality: perceptron encoder -> shared-space projection ->
mean-pooled global token. Missing slots are filled by averaging directed
proxy generators run on every observed source; the N slot tokens are fused
(sum by default) and classified by a LayerNorm + Linear head. The same head
scores individual proxies during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .modalities import ModalitySet
from .numerics import ParameterStore, Tensor
from .numerics import tensor as T

FUSION_MODES = ("sum", "concat_linear", "cross_attention")
FILL_MODES = ("proxy", "zero")


@dataclass(frozen=True)
class ModelConfig:
    n_modalities: int = 3
    raw_dims: tuple[int, ...] = (32, 32, 32)
    n_classes: int = 6
    tokens: int = 8  # shared token count L
    dim: int = 64  # shared width d
    heads: int = 4
    ffn_dim: int | None = None  # defaults to 2 * dim
    enc_hidden: int = 64
    enc_tokens: tuple[int, ...] | None = None  # L_m per modality
    enc_dims: tuple[int, ...] | None = None  # d_enc per modality
    fusion_mode: str = "sum"
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        n = self.n_modalities
        object.__setattr__(self, "raw_dims", tuple(int(v) for v in self.raw_dims))
        if self.enc_tokens is None:
            object.__setattr__(self, "enc_tokens", tuple(max(1, self.tokens // 2 + m) for m in range(n)))
        if self.enc_dims is None:
            object.__setattr__(self, "enc_dims", tuple(max(1, self.dim // 2 + 8 * m) for m in range(n)))
        if self.ffn_dim is None:
            object.__setattr__(self, "ffn_dim", 2 * self.dim)
        object.__setattr__(self, "enc_tokens", tuple(int(v) for v in self.enc_tokens))
        object.__setattr__(self, "enc_dims", tuple(int(v) for v in self.enc_dims))
        if n < 2:
            raise ValueError("need at least 2 modalities")
        for name in ("raw_dims", "enc_tokens", "enc_dims"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} needs one entry per modality")
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} is not divisible by heads {self.heads}")
        if self.fusion_mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode '{self.fusion_mode}'")
        if self.n_classes < 2 or self.tokens < 1:
            raise ValueError("invalid class or token count")


@dataclass
class GlobalToken:
    """A d-vector (or a B x d batch of them) filling one role in the pipeline.

    ``provenance`` is ``"real"``, ``"proxy_pair"`` (then ``source`` and
    ``target`` are set), ``"proxy_aggregated"`` or ``"zero"``.
    """

    value: Tensor
    provenance: str = "real"
    source: int | None = None
    target: int | None = None


@dataclass
class ForwardResult:
    logits: Tensor
    fused: Tensor
    slots: list[GlobalToken]
    tokens: dict[int, Tensor] = field(default_factory=dict)
    globals: dict[int, Tensor] = field(default_factory=dict)
    pair_proxies: dict[tuple[int, int], Tensor] = field(default_factory=dict)
    proxies: dict[int, Tensor] = field(default_factory=dict)
    observed: ModalitySet | None = None
    generator_calls: int = 0


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def linear(x: Tensor, params: ParameterStore, prefix: str) -> Tensor:
    return x @ params[f"{prefix}.weight"] + params[f"{prefix}.bias"]


def layer_norm(x: Tensor, params: ParameterStore, prefix: str, eps: float = 1e-5) -> Tensor:
    return T.layer_norm(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"], eps)


def multi_head_attention(
    query: Tensor, context: Tensor, params: ParameterStore, prefix: str, heads: int
) -> Tensor:
    """Scaled dot-product attention of ``query`` rows (B, Lq, d) over ``context`` (B, Lk, d)."""
    b, lq, d = query.shape
    lk = context.shape[1]
    dh = d // heads

    def split(x: Tensor, n: int) -> Tensor:
        return x.reshape(b, n, heads, dh).transpose(0, 2, 1, 3)

    q = split(linear(query, params, f"{prefix}.q"), lq)
    k = split(linear(context, params, f"{prefix}.k"), lk)
    v = split(linear(context, params, f"{prefix}.v"), lk)
    scores = T.scale(q @ k.T, 1.0 / math.sqrt(dh))
    mixed = T.softmax(scores, axis=-1) @ v
    merged = mixed.transpose(0, 2, 1, 3).reshape(b, lq, d)
    return linear(merged, params, f"{prefix}.o")


def global_token(z: Tensor) -> Tensor:
    """Mean over the token axis: (..., L, d) -> (..., d)."""
    return T.mean(z, axis=-2)


def aggregate_proxies(per_source: Sequence[GlobalToken]) -> GlobalToken:
    """Uniform average of the pair proxies aimed at one target slot."""
    if not per_source:
        raise ValueError("cannot aggregate an empty proxy list (observed set is empty)")
    targets = {p.target for p in per_source}
    if len(targets) != 1 or any(p.provenance != "proxy_pair" for p in per_source):
        raise ValueError("aggregate_proxies expects pair proxies for a single target")
    total = per_source[0].value
    for p in per_source[1:]:
        total = total + p.value
    value = total if len(per_source) == 1 else T.scale(total, 1.0 / len(per_source))
    return GlobalToken(value, "proxy_aggregated", target=targets.pop())


def assemble_slots(
    observed: ModalitySet,
    real_tokens: Mapping[int, Tensor],
    proxies: Mapping[int, Tensor],
) -> list[GlobalToken]:
    """One token per slot: the real global token if observed, else the proxy."""
    n = observed.n
    if set(real_tokens) != set(observed.indices):
        raise ValueError(f"real tokens cover {sorted(real_tokens)}, observed set is {observed.indices}")
    if set(proxies) != set(observed.missing):
        raise ValueError(f"proxies cover {sorted(proxies)}, missing set is {observed.missing}")
    slots = []
    for m in range(n):
        if m in observed:
            slots.append(GlobalToken(real_tokens[m], "real", source=m, target=m))
        else:
            p = proxies[m]
            if isinstance(p, GlobalToken):
                slots.append(p)
            else:
                slots.append(GlobalToken(p, "proxy_aggregated", target=m))
    return slots


def fuse_sum(slots: Sequence[GlobalToken]) -> Tensor:
    total = slots[0].value
    for s in slots[1:]:
        total = total + s.value
    return total


class CompassModel:
    """Parameters plus the forward pass. Names follow ``encoder.{m}``,
    ``proj.{m}``, ``gen.{i}.{j}``, ``fusion.*`` and ``head.*``."""

    def __init__(self, config: ModelConfig, params: ParameterStore | None = None):
        self.config = config
        self.generator_calls = 0
        self.params = params if params is not None else self._init_params()

    # -- construction ---------------------------------------------------
    def _init_params(self) -> ParameterStore:
        cfg = self.config
        rng = np.random.default_rng(cfg.seed)
        p = ParameterStore()
        d, L = cfg.dim, cfg.tokens

        def add_linear(prefix: str, fan_in: int, fan_out: int):
            p.add(f"{prefix}.weight", _uniform(rng, fan_in, (fan_in, fan_out)))
            p.add(f"{prefix}.bias", _uniform(rng, fan_in, (fan_out,)))

        def add_norm(prefix: str, width: int):
            p.add(f"{prefix}.weight", np.ones(width))
            p.add(f"{prefix}.bias", np.zeros(width))

        def add_attention(prefix: str):
            for part in ("q", "k", "v", "o"):
                add_linear(f"{prefix}.{part}", d, d)

        for m in range(cfg.n_modalities):
            lm, dm = cfg.enc_tokens[m], cfg.enc_dims[m]
            add_linear(f"encoder.{m}.fc1", cfg.raw_dims[m], cfg.enc_hidden)
            add_linear(f"encoder.{m}.fc2", cfg.enc_hidden, lm * dm)
            add_linear(f"proj.{m}.conv", dm, d)
            add_norm(f"proj.{m}.bn", d)
            p.add_buffer(f"proj.{m}.bn.running_mean", np.zeros(d))
            p.add_buffer(f"proj.{m}.bn.running_var", np.ones(d))
            p.add(f"proj.{m}.resample.weight", _uniform(rng, lm, (L, lm)))

        for i in range(cfg.n_modalities):
            for j in range(cfg.n_modalities):
                if i == j:
                    continue
                g = f"gen.{i}.{j}"
                p.add(f"{g}.query", 0.02 * rng.standard_normal((1, d)))
                add_attention(f"{g}.attn")
                add_norm(f"{g}.norm1", d)
                add_linear(f"{g}.ffn.fc1", d, cfg.ffn_dim)
                add_linear(f"{g}.ffn.fc2", cfg.ffn_dim, d)
                add_norm(f"{g}.norm2", d)

        if cfg.fusion_mode == "concat_linear":
            add_linear("fusion.fc", cfg.n_modalities * d, d)
        elif cfg.fusion_mode == "cross_attention":
            p.add("fusion.query", 0.02 * rng.standard_normal((1, d)))
            add_attention("fusion.attn")

        add_norm("head.norm", d)
        add_linear("head.fc", d, cfg.n_classes)
        return p

    @property
    def n_generators(self) -> int:
        return len({n.rsplit(".query", 1)[0] for n in self.params.names("gen.") if n.endswith(".query")})

    def fusion_param_count(self) -> int:
        return self.params.count("fusion.")

    # -- components ------------------------------------------------------
    def encode(self, x, m: int) -> Tensor:
        """Raw (B, raw_dim) input -> (B, L_m, d_enc) feature sequence."""
        cfg = self.config
        x = T.as_tensor(np.atleast_2d(x) if not isinstance(x, Tensor) else x)
        if x.shape[-1] != cfg.raw_dims[m]:
            raise ValueError(f"modality {m} expects raw dim {cfg.raw_dims[m]}, got {x.shape[-1]}")
        h = T.gelu(linear(x, self.params, f"encoder.{m}.fc1"))
        h = linear(h, self.params, f"encoder.{m}.fc2")
        return h.reshape(x.shape[0], cfg.enc_tokens[m], cfg.enc_dims[m])

    def project(self, h: Tensor, m: int, train: bool = False) -> Tensor:
        """Pointwise map d_enc -> d, batch norm, then L x L_m token resampling."""
        p, cfg = self.params, self.config
        u = linear(h, p, f"proj.{m}.conv")
        w, b = p[f"proj.{m}.bn.weight"], p[f"proj.{m}.bn.bias"]
        if train:
            if u.shape[0] < 2:
                raise ValueError("batch normalisation in training mode needs batch size >= 2")
            u, mu, var = T.batch_norm_train(u, w, b, cfg.bn_eps)
            mom = cfg.bn_momentum
            rm, rv = p.buffers[f"proj.{m}.bn.running_mean"], p.buffers[f"proj.{m}.bn.running_var"]
            rm *= 1.0 - mom
            rm += mom * mu
            rv *= 1.0 - mom
            rv += mom * var
        else:
            u = T.batch_norm_eval(
                u, w, b, p.buffers[f"proj.{m}.bn.running_mean"], p.buffers[f"proj.{m}.bn.running_var"], cfg.bn_eps
            )
        return p[f"proj.{m}.resample.weight"] @ u

    def generate_proxy(self, source: Tensor, i: int, j: int) -> Tensor:
        """Directed generator i -> j: one post-norm encoder layer over
        [query; z_i], read out at the query row. (B, L, d) -> (B, d)."""
        if i == j:
            raise ValueError("generator source and target must differ")
        p, g = self.params, f"gen.{i}.{j}"
        self.generator_calls += 1
        b, _, d = source.shape
        query = T.broadcast_to(p[f"{g}.query"].reshape(1, 1, d), (b, 1, d))
        seq = T.concat([query, source], axis=1)
        # rows are independent after attention, so only the query row is needed
        x = layer_norm(query + multi_head_attention(query, seq, p, f"{g}.attn", self.config.heads), p, f"{g}.norm1")
        ff = linear(T.relu(linear(x, p, f"{g}.ffn.fc1")), p, f"{g}.ffn.fc2")
        x = layer_norm(x + ff, p, f"{g}.norm2")
        return x.reshape(b, d)

    def fuse(self, slots: Sequence[GlobalToken]) -> Tensor:
        cfg = self.config
        if len(slots) != cfg.n_modalities:
            raise ValueError(f"expected {cfg.n_modalities} slots, got {len(slots)}")
        if cfg.fusion_mode == "sum":
            return fuse_sum(slots)
        if cfg.fusion_mode == "concat_linear":
            return linear(T.concat([s.value for s in slots], axis=-1), self.params, "fusion.fc")
        b, d = slots[0].value.shape
        ctx = T.concat([s.value.reshape(b, 1, d) for s in slots], axis=1)
        q = T.broadcast_to(self.params["fusion.query"].reshape(1, 1, d), (b, 1, d))
        return multi_head_attention(q, ctx, self.params, "fusion.attn", cfg.heads).reshape(b, d)

    def task_head(self, feature: Tensor) -> Tensor:
        return linear(layer_norm(feature, self.params, "head.norm"), self.params, "head.fc")

    # -- full pass ---------------------------------------------------------
    def forward(
        self,
        xs: Sequence,
        observed: ModalitySet,
        train: bool = False,
        fill: str = "proxy",
    ) -> ForwardResult:
        """Run the network on a batch. ``xs[m]`` is (B, raw_dim_m).

        In training every modality is encoded (masked ones still supply
        alignment targets); at inference only the observed ones are.
        ``fill="zero"`` puts zero vectors in missing slots instead of proxies.
        """
        cfg = self.config
        if observed.n != cfg.n_modalities:
            raise ValueError("observed set has the wrong slot count")
        if len(observed) == 0:
            raise ValueError("observed set must be non-empty")
        if fill not in FILL_MODES:
            raise ValueError(f"unknown fill mode '{fill}'")
        encoded = range(cfg.n_modalities) if train else observed.indices
        tokens, globals_ = self.encode_all(xs, train=train, modalities=encoded)
        return self.complete(tokens, globals_, observed, fill=fill)

    def encode_all(self, xs: Sequence, train: bool = False, modalities=None):
        """Shared-space sequences and global tokens for the given modalities."""
        modalities = range(self.config.n_modalities) if modalities is None else modalities
        tokens, globals_ = {}, {}
        for m in modalities:
            z = self.project(self.encode(xs[m], m), m, train=train)
            tokens[m] = z
            globals_[m] = global_token(z)
        return tokens, globals_

    def complete(
        self,
        tokens: Mapping[int, Tensor],
        globals_: Mapping[int, Tensor],
        observed: ModalitySet,
        fill: str = "proxy",
    ) -> ForwardResult:
        """Fill missing slots, fuse and classify."""
        if fill not in FILL_MODES:
            raise ValueError(f"unknown fill mode '{fill}'")
        calls_before = self.generator_calls
        pair_proxies: dict[tuple[int, int], Tensor] = {}
        proxies: dict[int, GlobalToken] = {}
        batch = globals_[observed.indices[0]].shape[0]
        for j in observed.missing:
            if fill == "zero":
                zero = Tensor(np.zeros((batch, self.config.dim)), name="zero_fill")
                proxies[j] = GlobalToken(zero, "zero", target=j)
                continue
            pairs = []
            for i in observed.indices:
                t = self.generate_proxy(tokens[i], i, j)
                pair_proxies[(i, j)] = t
                pairs.append(GlobalToken(t, "proxy_pair", source=i, target=j))
            proxies[j] = aggregate_proxies(pairs)

        slots = assemble_slots(observed, {m: globals_[m] for m in observed.indices}, proxies)
        fused = self.fuse(slots)
        logits = self.task_head(fused)
        return ForwardResult(
            logits=logits,
            fused=fused,
            slots=slots,
            tokens=dict(tokens),
            globals=dict(globals_),
            pair_proxies=pair_proxies,
            proxies={j: g.value for j, g in proxies.items()},
            observed=observed,
            generator_calls=self.generator_calls - calls_before,
        )

    def predict(self, xs: Sequence, observed: ModalitySet, fill: str = "proxy") -> np.ndarray:
        with T.no_grad():
            return self.forward(xs, observed, train=False, fill=fill).logits.data

    # -- persistence -----------------------------------------------------------
    def state_dict(self) -> dict[str, np.ndarray]:
        return self.params.state_dict()

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        self.params.load_state_dict(state)
