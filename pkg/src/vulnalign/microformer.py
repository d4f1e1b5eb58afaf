"""A tiny deterministic transformer encoder classifier in float64 numpy.

Forward, backward, and integrated gradients are written out by hand so the
analytic gradients can be validated against finite differences and the
attention tensors exported exactly as computed. The architecture is a
standard encoder stack: embeddings + learned positions, M blocks of
(multi-head self-attention, residual, layer norm, GELU feed-forward,
residual, layer norm), mean pooling over content positions, and a linear
two-class head.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf, roots_legendre

from .relevance import AttentionTensor, TokenRelevanceRecord, attention_token_relevance
from .metric import f1_score

LN_EPS = 1e-5


class ModelError(ValueError):
    pass


@dataclass
class Hyper:
    vocab_size: int
    d: int = 32
    heads: int = 4
    layers: int = 2
    d_ff: int = 64
    j_max: int = 512
    bos_id: int = 256
    eos_id: int = 257
    pad_id: int = 258

    @property
    def d_k(self):
        if self.d % self.heads:
            raise ModelError("model width must be divisible by the head count")
        return self.d // self.heads


def _layer_array_specs(hp):
    specs = [("embed", (hp.vocab_size, hp.d)), ("pos", (hp.j_max, hp.d))]
    for m in range(hp.layers):
        p = f"layer{m}."
        specs += [
            (p + "wq", (hp.heads, hp.d, hp.d_k)),
            (p + "wk", (hp.heads, hp.d, hp.d_k)),
            (p + "wv", (hp.heads, hp.d, hp.d_k)),
            (p + "wo", (hp.d, hp.d)),
            (p + "ln1_g", (hp.d,)),
            (p + "ln1_b", (hp.d,)),
            (p + "w1", (hp.d, hp.d_ff)),
            (p + "b1", (hp.d_ff,)),
            (p + "w2", (hp.d_ff, hp.d)),
            (p + "b2", (hp.d,)),
            (p + "ln2_g", (hp.d,)),
            (p + "ln2_b", (hp.d,)),
        ]
    specs += [("wc", (hp.d, 2)), ("bc", (2,))]
    return specs


@dataclass
class ModelParams:
    hyper: Hyper
    arrays: dict  # name -> float64 ndarray, in _layer_array_specs order
    seed: int = 0
    vocab_hash: str = ""

    def copy(self):
        return ModelParams(
            hyper=self.hyper,
            arrays={k: v.copy() for k, v in self.arrays.items()},
            seed=self.seed,
            vocab_hash=self.vocab_hash,
        )


def init_params(hyper, seed=0, scale=0.02, vocab_hash=""):
    rng = np.random.default_rng(seed)
    arrays = {}
    for name, shape in _layer_array_specs(hyper):
        base = name.rsplit(".", 1)[-1]
        if base in ("ln1_g", "ln2_g"):
            arrays[name] = np.ones(shape)
        elif base in ("ln1_b", "ln2_b", "b1", "b2", "bc"):
            arrays[name] = np.zeros(shape)
        else:
            arrays[name] = rng.normal(0.0, scale, size=shape)
    return ModelParams(hyper=hyper, arrays=arrays, seed=seed, vocab_hash=vocab_hash)


@dataclass
class ForwardTrace:
    logits: np.ndarray
    attentions: list          # per layer, (H, J, J)
    predicted_label: int
    embedded_input: np.ndarray
    content_positions: list
    cache: dict = field(repr=False, default_factory=dict)


def _layer_norm(v, g, b):
    mu = v.mean(axis=-1, keepdims=True)
    var = v.var(axis=-1, keepdims=True)
    sigma = np.sqrt(var + LN_EPS)
    xhat = (v - mu) / sigma
    return g * xhat + b, (xhat, sigma, g)


def _layer_norm_backward(dy, ctx):
    xhat, sigma, g = ctx
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dyg = dy * g
    dv = (dyg - dyg.mean(axis=-1, keepdims=True)
          - xhat * (dyg * xhat).mean(axis=-1, keepdims=True)) / sigma
    return dv, dg, db


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def _gelu_grad(x):
    return 0.5 * (1.0 + erf(x / math.sqrt(2.0))) + x * np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)


def _softmax_rows(s):
    z = s - s.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sequence_ids(params, tokenized):
    """Content token ids wrapped in begin/end markers."""
    hp = params.hyper
    ids = [hp.bos_id] + list(tokenized.token_ids) + [hp.eos_id]
    if len(ids) > hp.j_max:
        raise ModelError(f"sequence of {len(ids)} exceeds the {hp.j_max} position limit")
    return np.asarray(ids, dtype=np.int64)


def embed_ids(params, ids):
    a = params.arrays
    return a["embed"][ids] + a["pos"][: len(ids)]


def forward_embedded(params, x, content_positions):
    """Forward pass from a precomputed (J, d) embedding matrix."""
    hp = params.hyper
    a = params.arrays
    scale = 1.0 / math.sqrt(hp.d_k)
    cache = {"x_in": x, "layer": []}
    attentions = []
    for m in range(hp.layers):
        p = f"layer{m}."
        heads = []
        head_ctx = []
        for h in range(hp.heads):
            q = x @ a[p + "wq"][h]
            k = x @ a[p + "wk"][h]
            v = x @ a[p + "wv"][h]
            att = _softmax_rows(q @ k.T * scale)
            heads.append(att @ v)
            head_ctx.append((q, k, v, att))
        o = np.concatenate(heads, axis=1)
        attn_out = o @ a[p + "wo"]
        u = x + attn_out
        h1, ln1_ctx = _layer_norm(u, a[p + "ln1_g"], a[p + "ln1_b"])
        f1 = h1 @ a[p + "w1"] + a[p + "b1"]
        a1 = _gelu(f1)
        ff = a1 @ a[p + "w2"] + a[p + "b2"]
        x_next, ln2_ctx = _layer_norm(h1 + ff, a[p + "ln2_g"], a[p + "ln2_b"])
        attentions.append(np.stack([c[3] for c in head_ctx]))
        cache["layer"].append(
            {"x": x, "head_ctx": head_ctx, "o": o, "ln1": ln1_ctx,
             "h1": h1, "f1": f1, "a1": a1, "ln2": ln2_ctx}
        )
        x = x_next
    pooled = x[content_positions].mean(axis=0) if content_positions else np.zeros(hp.d)
    logits = pooled @ a["wc"] + a["bc"]
    cache["x_out"] = x
    cache["pooled"] = pooled
    cache["content"] = content_positions
    return ForwardTrace(
        logits=logits,
        attentions=attentions,
        predicted_label=int(np.argmax(logits)),
        embedded_input=cache["x_in"],
        content_positions=content_positions,
        cache=cache,
    )


def forward(params, tokenized):
    ids = sequence_ids(params, tokenized)
    content = list(range(1, len(ids) - 1))
    trace = forward_embedded(params, embed_ids(params, ids), content)
    trace.cache["ids"] = ids
    return trace


def backward(params, trace, dlogits):
    """Gradients of <dlogits, logits> w.r.t. the input embeddings and all params."""
    hp = params.hyper
    a = params.arrays
    cache = trace.cache
    scale = 1.0 / math.sqrt(hp.d_k)
    grads = {name: np.zeros_like(arr) for name, arr in a.items()}

    pooled = cache["pooled"]
    content = cache["content"]
    grads["wc"] += np.outer(pooled, dlogits)
    grads["bc"] += dlogits
    dpooled = a["wc"] @ dlogits
    dx = np.zeros_like(cache["x_out"])
    if content:
        dx[content] = dpooled / len(content)

    for m in range(hp.layers - 1, -1, -1):
        p = f"layer{m}."
        ctx = cache["layer"][m]
        dv, dg2, db2 = _layer_norm_backward(dx, ctx["ln2"])
        grads[p + "ln2_g"] += dg2
        grads[p + "ln2_b"] += db2
        dh1 = dv.copy()
        dff = dv
        grads[p + "w2"] += ctx["a1"].T @ dff
        grads[p + "b2"] += dff.sum(axis=0)
        da1 = dff @ a[p + "w2"].T
        df1 = da1 * _gelu_grad(ctx["f1"])
        grads[p + "w1"] += ctx["h1"].T @ df1
        grads[p + "b1"] += df1.sum(axis=0)
        dh1 += df1 @ a[p + "w1"].T
        du, dg1, db1 = _layer_norm_backward(dh1, ctx["ln1"])
        grads[p + "ln1_g"] += dg1
        grads[p + "ln1_b"] += db1
        dx = du.copy()
        dattn = du
        grads[p + "wo"] += ctx["o"].T @ dattn
        do = dattn @ a[p + "wo"].T
        x_in = ctx["x"]
        for h in range(hp.heads):
            q, k, v, att = ctx["head_ctx"][h]
            doh = do[:, h * hp.d_k : (h + 1) * hp.d_k]
            datt = doh @ v.T
            dvh = att.T @ doh
            ds = att * (datt - (datt * att).sum(axis=-1, keepdims=True))
            dq = ds @ k * scale
            dk = ds.T @ q * scale
            grads[p + "wq"][h] += x_in.T @ dq
            grads[p + "wk"][h] += x_in.T @ dk
            grads[p + "wv"][h] += x_in.T @ dvh
            dx += dq @ a[p + "wq"][h].T + dk @ a[p + "wk"][h].T + dvh @ a[p + "wv"][h].T

    if "ids" in cache:
        ids = cache["ids"]
        np.add.at(grads["embed"], ids, dx)
        grads["pos"][: len(ids)] += dx
    return dx, grads


def grad_embeddings(params, tokenized, target_class):
    """d logits[target] / d input embedding, (J, d)."""
    trace = forward(params, tokenized)
    dlogits = np.zeros(2)
    dlogits[target_class] = 1.0
    dx, _ = backward(params, trace, dlogits)
    return dx


# ---------------------------------------------------------------------------
# Integrated gradients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IGConfig:
    steps: int = 64
    target_class: int = 1

    def quadrature(self):
        """Gauss-Legendre nodes and weights mapped to (0, 1); weights sum to 1."""
        nodes, weights = roots_legendre(self.steps)
        return (nodes + 1.0) / 2.0, weights / 2.0


def integrated_gradients(params, tokenized, cfg=IGConfig()):
    """Path-integral attribution from a padding baseline to the input.

    Per-token score is the embedding-dimension sum of
    (x - x') * sum_k w_k grad F(x' + a_k (x - x')), with F the target-class
    logit. The begin/end markers stay fixed along the path, so only content
    positions pick up attribution.
    """
    hp = params.hyper
    ids = sequence_ids(params, tokenized)
    content = list(range(1, len(ids) - 1))
    baseline_ids = ids.copy()
    baseline_ids[content] = hp.pad_id

    x = embed_ids(params, ids)
    x_base = embed_ids(params, baseline_ids)
    delta = x - x_base

    nodes, weights = cfg.quadrature()
    accum = np.zeros_like(x)
    dlogits = np.zeros(2)
    dlogits[cfg.target_class] = 1.0
    for alpha, w in zip(nodes, weights):
        trace = forward_embedded(params, x_base + alpha * delta, content)
        dx, _ = backward(params, trace, dlogits)
        accum += w * dx

    attribution = (delta * accum).sum(axis=1)
    pred = forward_embedded(params, x, content).predicted_label
    scores = tuple(
        (tokenized.tokens[i].line_index, float(attribution[pos]))
        for i, pos in enumerate(content)
    )
    return TokenRelevanceRecord(
        function_id=tokenized.function_id,
        method="integrated-gradients",
        predicted_label=pred,
        scores=tuple(scores),
    )


def attention_relevance(params, tokenized, layer):
    """Export one layer's attention and aggregate it to token relevance."""
    hp = params.hyper
    if not (0 <= layer < hp.layers):
        raise ModelError(f"layer {layer} outside 0..{hp.layers - 1}")
    trace = forward(params, tokenized)
    att = trace.attentions[layer]
    j = att.shape[-1]
    tensor = AttentionTensor(
        function_id=tokenized.function_id,
        layer_index=layer,
        values=att,
        head_count=hp.heads,
        sequence_length=j,
    )
    token_lines = {
        pos: tokenized.tokens[i].line_index
        for i, pos in enumerate(trace.content_positions)
    }
    method = "attention-first" if layer == 0 else (
        "attention-last" if layer == hp.layers - 1 else f"attention-{layer}"
    )
    return attention_token_relevance(
        tensor,
        token_lines,
        special_positions=[0, j - 1],
        predicted_label=trace.predicted_label,
        method=method,
    )


# ---------------------------------------------------------------------------
# Toy training
# ---------------------------------------------------------------------------

def _softmax_ce_grad(logits, label):
    probs = _softmax_rows(logits[None, :])[0]
    d = probs.copy()
    d[label] -= 1.0
    return -math.log(max(probs[label], 1e-300)), d


def train_toy(params, dataset, epochs=10, learning_rate=0.1, seed=0, val_fraction=0.2):
    """Per-sample gradient descent on cross-entropy, keeping the best-F1 checkpoint.

    dataset is a sequence of (TokenizedFunction, label). The validation
    split is deterministic in the seed.
    """
    dataset = list(dataset)
    if not dataset:
        raise ModelError("dataset is empty")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    n_val = max(1, int(len(dataset) * val_fraction)) if len(dataset) > 1 else 0
    val = [dataset[i] for i in order[:n_val]]
    train = [dataset[i] for i in order[n_val:]] or list(dataset)

    def val_f1(p):
        if not val:
            return 0.0
        preds = [forward(p, tok).predicted_label for tok, _ in val]
        return f1_score(preds, [y for _, y in val])

    params = params.copy()
    best = params.copy()
    best_f1 = val_f1(params)
    for _ in range(epochs):
        idx = rng.permutation(len(train))
        for i in idx:
            tok, label = train[i]
            trace = forward(params, tok)
            _, dlogits = _softmax_ce_grad(trace.logits, label)
            _, grads = backward(params, trace, dlogits)
            for name in params.arrays:
                params.arrays[name] -= learning_rate * grads[name]
        f1 = val_f1(params)
        if f1 > best_f1:
            best_f1 = f1
            best = params.copy()
    return best


# ---------------------------------------------------------------------------
# Checkpoint I/O: JSON header line + flat little-endian float64 arrays in
# _layer_array_specs order.
# ---------------------------------------------------------------------------

def vocab_fingerprint(vocab):
    return hashlib.sha256(vocab.to_json().encode("utf-8")).hexdigest()


def save_checkpoint(params, path):
    hp = params.hyper
    specs = _layer_array_specs(hp)
    header = {
        "format": "vulnalign-microformer-v1",
        "vocab_size": hp.vocab_size,
        "d": hp.d,
        "heads": hp.heads,
        "layers": hp.layers,
        "d_ff": hp.d_ff,
        "j_max": hp.j_max,
        "bos_id": hp.bos_id,
        "eos_id": hp.eos_id,
        "pad_id": hp.pad_id,
        "seed": params.seed,
        "vocab_hash": params.vocab_hash,
        "arrays": [[name, list(shape)] for name, shape in specs],
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header).encode("utf-8") + b"\n")
        for name, shape in specs:
            arr = np.ascontiguousarray(params.arrays[name], dtype="<f8")
            if arr.shape != shape:
                raise ModelError(f"array {name} has shape {arr.shape}, expected {shape}")
            fh.write(arr.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode("utf-8"))
        if header.get("format") != "vulnalign-microformer-v1":
            raise ModelError("unrecognized checkpoint format")
        hp = Hyper(
            vocab_size=header["vocab_size"],
            d=header["d"],
            heads=header["heads"],
            layers=header["layers"],
            d_ff=header["d_ff"],
            j_max=header["j_max"],
            bos_id=header["bos_id"],
            eos_id=header["eos_id"],
            pad_id=header["pad_id"],
        )
        arrays = {}
        for name, shape in header["arrays"]:
            shape = tuple(shape)
            count = int(np.prod(shape))
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ModelError(f"checkpoint truncated while reading {name}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return ModelParams(hyper=hp, arrays=arrays, seed=header["seed"],
                       vocab_hash=header["vocab_hash"])
