"""Char-CNN + transformer encoder + linear emissions, with hand-written
reverse-mode gradients in float64.

The forward pass caches every intermediate needed by `backward`, which
returns parameter gradients for a scalar upstream gradient on the
emission matrix. The CRF head lives in crf.py.
"""

from __future__ import annotations

import numpy as np

from .config import CtaConfig

TAGS = ("B", "I", "O")
TAG_TO_ID = {t: i for i, t in enumerate(TAGS)}

PAD, UNK = 0, 1
NEG_CONSTRAINT = -10000.0
LN_EPS = 1e-5


def _fnv1a32(data: bytes) -> int:
    h = 0x811C9DC5
    for byte in data:
        h ^= byte
        h = (h * 0x01000193) & 0xFFFFFFFF
    return h


def char_index(ch: str, vocab: int) -> int:
    cp = ord(ch)
    if cp > 0xFFFF:  # outside the hashed BMP range
        return UNK
    return 2 + _fnv1a32(cp.to_bytes(4, "little")) % (vocab - 2)


_ENCODE_CACHE: dict = {}


def encode_surface(surface: str, cfg: CtaConfig) -> np.ndarray:
    """Fixed-length char index vector; cached (callers must not mutate)."""
    key = (surface, cfg.char_vocab, cfg.max_chars)
    out = _ENCODE_CACHE.get(key)
    if out is None:
        idx = np.zeros(cfg.max_chars, dtype=np.int64)
        for i, ch in enumerate(surface[: cfg.max_chars]):
            idx[i] = char_index(ch, cfg.char_vocab)
        idx.setflags(write=False)
        if len(_ENCODE_CACHE) >= 1 << 20:
            _ENCODE_CACHE.clear()
        _ENCODE_CACHE[key] = idx
        out = idx
    return out


_PE_CACHE: dict = {}


def sinusoidal_pe(T: int, D: int) -> np.ndarray:
    """Standard sine/cosine positions; cached (callers must not mutate)."""
    pe = _PE_CACHE.get((T, D))
    if pe is None:
        pos = np.arange(T, dtype=np.float64)[:, None]
        i = np.arange(D, dtype=np.float64)[None, :]
        angle = pos / np.power(10000.0, (2.0 * (i // 2)) / D)
        pe = np.where(i % 2 == 0, np.sin(angle), np.cos(angle))
        pe.setflags(write=False)
        if len(_PE_CACHE) >= 4096:
            _PE_CACHE.clear()
        _PE_CACHE[(T, D)] = pe
    return pe


class CtaModel:
    """Parameter container. Parameters are float64 numpy arrays keyed by
    name in a fixed declaration order (also the checkpoint blob order)."""

    def __init__(self, cfg: CtaConfig, seed: int = 0):
        self.cfg = cfg
        self.params = {}
        self.param_order = []
        rng = np.random.default_rng(seed)

        def p(name, shape, scale=None):
            if scale is None:
                fan_in = shape[-1] if len(shape) > 1 else shape[0]
                scale = 1.0 / np.sqrt(fan_in)
            self.params[name] = rng.normal(0.0, scale, size=shape)
            self.param_order.append(name)

        def zeros(name, shape):
            self.params[name] = np.zeros(shape, dtype=np.float64)
            self.param_order.append(name)

        def ones(name, shape):
            self.params[name] = np.ones(shape, dtype=np.float64)
            self.param_order.append(name)

        D, F = cfg.token_dim, cfg.ffn_dim
        p("char_emb", (cfg.char_vocab, cfg.char_dim), scale=0.1)
        for ks, ch in sorted(cfg.channel_split().items()):
            p(f"conv{ks}_W", (ch, ks, cfg.char_dim),
              scale=1.0 / np.sqrt(ks * cfg.char_dim))
            zeros(f"conv{ks}_b", (ch,))
        for l in range(cfg.layers):
            ones(f"l{l}_ln1_g", (D,))
            zeros(f"l{l}_ln1_b", (D,))
            for nm in ("Wq", "Wk", "Wv", "Wo"):
                p(f"l{l}_{nm}", (D, D))
            for nm in ("bq", "bk", "bv", "bo"):
                zeros(f"l{l}_{nm}", (D,))
            ones(f"l{l}_ln2_g", (D,))
            zeros(f"l{l}_ln2_b", (D,))
            p(f"l{l}_W1", (D, F))
            zeros(f"l{l}_b1", (F,))
            p(f"l{l}_W2", (F, D))
            zeros(f"l{l}_b2", (D,))
        ones("lnf_g", (D,))
        zeros("lnf_b", (D,))
        p("emit_W", (3, D))
        zeros("emit_b", (3,))
        zeros("crf_trans", (3, 3))
        zeros("crf_start", (3,))
        zeros("crf_end", (3,))
        self._pin_constraints()

    # hard CRF constraints: O -> I transition and starting at I are banned
    CONSTRAINED = (("crf_trans", (TAG_TO_ID["O"], TAG_TO_ID["I"])),
                   ("crf_start", (TAG_TO_ID["I"],)))

    def _pin_constraints(self):
        for name, idx in self.CONSTRAINED:
            self.params[name][idx] = NEG_CONSTRAINT

    # ------------------------------------------------------------------
    # forward

    def forward(self, surfaces, train=False, rng=None):
        """Emission scores for a token sequence.

        Returns (emissions (T,3), cache) — the cache feeds backward().
        """
        cfg = self.cfg
        T = len(surfaces)
        if T > cfg.max_seq:
            raise ValueError(f"sequence length {T} exceeds max_seq {cfg.max_seq}")
        if T == 0:
            raise ValueError("empty token sequence")
        P = self.params
        cache = {"T": T, "train": train, "drop_masks": []}

        def dropout(x, site):
            if not train or cfg.dropout == 0.0:
                cache["drop_masks"].append(None)
                return x
            keep = 1.0 - cfg.dropout
            mask = (rng.random(x.shape) < keep) / keep
            cache["drop_masks"].append(mask)
            return x * mask

        # char CNN token encoder
        idx = np.stack([encode_surface(s, cfg) for s in surfaces])  # (T, L)
        C = P["char_emb"][idx]  # (T, L, dc)
        cache["idx"], cache["C"] = idx, C
        pieces = []
        cache["conv"] = {}
        for ks, ch in sorted(cfg.channel_split().items()):
            W, b = P[f"conv{ks}_W"], P[f"conv{ks}_b"]
            Pn = cfg.max_chars - ks + 1
            Z = np.zeros((T, Pn, ch))
            for o in range(ks):
                Z += C[:, o:o + Pn, :] @ W[:, o, :].T
            Z += b[None, None, :]
            R = np.maximum(Z, 0.0)
            am = np.argmax(R, axis=1)  # (T, ch), first max
            vec = np.take_along_axis(R, am[:, None, :], axis=1)[:, 0, :]
            cache["conv"][ks] = (Z, am)
            pieces.append(vec)
        x = np.concatenate(pieces, axis=1)  # (T, D)
        cache["tok_vecs"] = x

        # transformer encoder, pre-norm
        x = x + sinusoidal_pe(T, cfg.token_dim)
        H, D = cfg.heads, cfg.token_dim
        dh = D // H
        cache["layers"] = []
        for l in range(cfg.layers):
            lc = {"x_in": x}
            h, lnc1 = _layernorm(x, P[f"l{l}_ln1_g"], P[f"l{l}_ln1_b"])
            lc["ln1"] = lnc1
            Q = h @ P[f"l{l}_Wq"] + P[f"l{l}_bq"]
            K = h @ P[f"l{l}_Wk"] + P[f"l{l}_bk"]
            V = h @ P[f"l{l}_Wv"] + P[f"l{l}_bv"]
            Qh = Q.reshape(T, H, dh).transpose(1, 0, 2)  # (H, T, dh)
            Kh = K.reshape(T, H, dh).transpose(1, 0, 2)
            Vh = V.reshape(T, H, dh).transpose(1, 0, 2)
            S = Qh @ Kh.transpose(0, 2, 1) / np.sqrt(dh)  # (H, T, T)
            S -= S.max(axis=2, keepdims=True)
            A = np.exp(S)
            A /= A.sum(axis=2, keepdims=True)
            ctx = A @ Vh  # (H, T, dh)
            merged = ctx.transpose(1, 0, 2).reshape(T, D)
            attn = merged @ P[f"l{l}_Wo"] + P[f"l{l}_bo"]
            attn_d = dropout(attn, f"l{l}_attn")
            x = x + attn_d
            lc.update(h=h, Q=Q, K=K, V=V, A=A, Vh=Vh, merged=merged,
                      x_mid=x)
            h2, lnc2 = _layernorm(x, P[f"l{l}_ln2_g"], P[f"l{l}_ln2_b"])
            lc["ln2"] = lnc2
            z1 = h2 @ P[f"l{l}_W1"] + P[f"l{l}_b1"]
            r1 = np.maximum(z1, 0.0)
            ffn = r1 @ P[f"l{l}_W2"] + P[f"l{l}_b2"]
            ffn_d = dropout(ffn, f"l{l}_ffn")
            x = x + ffn_d
            lc.update(h2=h2, z1=z1, r1=r1)
            cache["layers"].append(lc)
        out, lnf = _layernorm(x, P["lnf_g"], P["lnf_b"])
        cache["lnf"] = lnf
        cache["H_out"] = out

        em = out @ P["emit_W"].T + P["emit_b"]
        return em, cache

    def contextualize(self, surfaces, train=False, rng=None):
        """Contextualized token representations (T, token_dim)."""
        _, cache = self.forward(surfaces, train=train, rng=rng)
        return cache["H_out"]

    # ------------------------------------------------------------------
    # backward

    def backward(self, cache, d_em, grads):
        """Accumulate parameter gradients for upstream d_em (T,3)."""
        cfg = self.cfg
        P = self.params
        T = cache["T"]
        H, D = cfg.heads, cfg.token_dim
        dh = D // H

        out = cache["H_out"]
        grads["emit_W"] += d_em.T @ out
        grads["emit_b"] += d_em.sum(axis=0)
        dx = d_em @ P["emit_W"]

        dx, dg, db = _layernorm_bwd(dx, cache["lnf"], P["lnf_g"])
        grads["lnf_g"] += dg
        grads["lnf_b"] += db

        masks = cache["drop_masks"]
        mask_i = len(masks)

        def drop_bwd(d):
            nonlocal mask_i
            mask_i -= 1
            m = masks[mask_i]
            return d if m is None else d * m

        for l in reversed(range(cfg.layers)):
            lc = cache["layers"][l]
            # FFN branch
            dffn = drop_bwd(dx)
            grads[f"l{l}_b2"] += dffn.sum(axis=0)
            grads[f"l{l}_W2"] += lc["r1"].T @ dffn
            dr1 = dffn @ P[f"l{l}_W2"].T
            dz1 = dr1 * (lc["z1"] > 0.0)
            grads[f"l{l}_b1"] += dz1.sum(axis=0)
            grads[f"l{l}_W1"] += lc["h2"].T @ dz1
            dh2 = dz1 @ P[f"l{l}_W1"].T
            dmid, dg, db = _layernorm_bwd(dh2, lc["ln2"], P[f"l{l}_ln2_g"])
            grads[f"l{l}_ln2_g"] += dg
            grads[f"l{l}_ln2_b"] += db
            dx = dx + dmid

            # attention branch
            dattn = drop_bwd(dx)
            grads[f"l{l}_bo"] += dattn.sum(axis=0)
            grads[f"l{l}_Wo"] += lc["merged"].T @ dattn
            dmerged = dattn @ P[f"l{l}_Wo"].T
            dctx = dmerged.reshape(T, H, dh).transpose(1, 0, 2)  # (H,T,dh)
            A, Vh = lc["A"], lc["Vh"]
            dA = dctx @ Vh.transpose(0, 2, 1)  # (H,T,T)
            dVh = A.transpose(0, 2, 1) @ dctx
            # softmax backward per row
            dS = A * (dA - (dA * A).sum(axis=2, keepdims=True))
            dS /= np.sqrt(dh)
            Qh = lc["Q"].reshape(T, H, dh).transpose(1, 0, 2)
            Kh = lc["K"].reshape(T, H, dh).transpose(1, 0, 2)
            dQh = dS @ Kh
            dKh = dS.transpose(0, 2, 1) @ Qh
            dQ = dQh.transpose(1, 0, 2).reshape(T, D)
            dK = dKh.transpose(1, 0, 2).reshape(T, D)
            dV = dVh.transpose(1, 0, 2).reshape(T, D)
            h = lc["h"]
            grads[f"l{l}_Wq"] += h.T @ dQ
            grads[f"l{l}_bq"] += dQ.sum(axis=0)
            grads[f"l{l}_Wk"] += h.T @ dK
            grads[f"l{l}_bk"] += dK.sum(axis=0)
            grads[f"l{l}_Wv"] += h.T @ dV
            grads[f"l{l}_bv"] += dV.sum(axis=0)
            dh_pre = dQ @ P[f"l{l}_Wq"].T + dK @ P[f"l{l}_Wk"].T + dV @ P[f"l{l}_Wv"].T
            din, dg, db = _layernorm_bwd(dh_pre, lc["ln1"], P[f"l{l}_ln1_g"])
            grads[f"l{l}_ln1_g"] += dg
            grads[f"l{l}_ln1_b"] += db
            dx = dx + din

        # char CNN backward (positional encoding is constant)
        dtok = dx  # (T, D)
        offset = 0
        dC = np.zeros_like(cache["C"])
        for ks, ch in sorted(cfg.channel_split().items()):
            dvec = dtok[:, offset:offset + ch]
            offset += ch
            Z, am = cache["conv"][ks]
            Pn = Z.shape[1]
            dR = np.zeros_like(Z)
            np.put_along_axis(dR, am[:, None, :], dvec[:, None, :], axis=1)
            dZ = dR * (Z > 0.0)
            grads[f"conv{ks}_b"] += dZ.sum(axis=(0, 1))
            W = P[f"conv{ks}_W"]
            C = cache["C"]
            dZ_flat = dZ.reshape(-1, ch)
            for o in range(ks):
                grads[f"conv{ks}_W"][:, o, :] += (
                    dZ_flat.T @ C[:, o:o + Pn, :].reshape(-1, cfg.char_dim))
                dC[:, o:o + Pn, :] += dZ @ W[:, o, :]
        np.add.at(grads["char_emb"], cache["idx"].reshape(-1),
                  dC.reshape(-1, cfg.char_dim))

    def zero_grads(self):
        return {k: np.zeros_like(v) for k, v in self.params.items()}


def _layernorm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv)


def _layernorm_bwd(dy, cache, g):
    xhat, inv = cache
    D = xhat.shape[-1]
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    dx = inv * (dxhat
                - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db
