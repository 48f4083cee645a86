"""Test-only straight-line oracles, independent of the library code paths."""

import numpy as np

from sparse_rnnt.numerics import layer_norm, sigmoid


def oracle_sparse_attend(z, mh, policy):
    """Direct evaluation: Q/K/V, row-mean thresholds, head fusion, masked
    softmax over explicit index sets, concatenation, post projection."""
    T = z.shape[0]
    H = len(mh.heads)
    per_head_e = []
    globals_per_head = []
    for head in mh.heads:
        q = z @ head.w_q
        k = z @ head.w_k
        e = q @ k.T / np.sqrt(head.w_q.shape[1])
        per_head_e.append(e)
        g_sets = []
        for i in range(T):
            mu = sum(e[i]) / T
            g_sets.append({j for j in range(T) if e[i, j] > mu})
        globals_per_head.append(g_sets)
    head_outs = []
    for h, head in enumerate(mh.heads):
        v = z @ head.w_v
        out = np.zeros((T, head.w_v.shape[1]))
        for i in range(T):
            if policy.variant == "dense":
                s = set(range(T))
            else:
                s = {j for j in range(T) if abs(i - j) <= policy.w}
                if policy.variant == "local_global":
                    if policy.fusion == "sgm2_per_head":
                        g = globals_per_head[h][i]
                    elif policy.fusion == "sgm3_and":
                        g = set.intersection(*[gp[i] for gp in globals_per_head])
                    else:
                        g = set.union(*[gp[i] for gp in globals_per_head])
                    s = s | g
            idx = sorted(s)
            sub = per_head_e[h][i, idx]
            weights = np.exp(sub - max(sub))
            weights = weights / weights.sum()
            out[i] = weights @ v[idx]
        head_outs.append(out)
    return np.concatenate(head_outs, axis=1) @ mh.w_p


def oracle_conformer_block(x, block, policy):
    """Macaron block re-derived step by step with loops where convenient."""

    def swish(v):
        return v * sigmoid(v)

    def ffn(v, w):
        y = layer_norm(v, w.norm_gain, w.norm_bias)
        y = swish(y @ w.w1 + w.b1)
        return y @ w.w2 + w.b2

    x = x + 0.5 * ffn(x, block.ffn1)
    attn_in = layer_norm(x, block.attn_norm_gain, block.attn_norm_bias)
    x = x + oracle_sparse_attend(attn_in, block.mh, policy)
    cw = block.conv
    y = layer_norm(x, cw.norm_gain, cw.norm_bias)
    y = y @ cw.pw1 + cw.pb1
    k = cw.dw.shape[0]
    half = k // 2
    padded = np.pad(y, ((half, half), (0, 0)))
    conv = np.zeros_like(y)
    for t in range(y.shape[0]):
        for tap in range(k):
            conv[t] += padded[t + tap] * cw.dw[tap]
    conv = conv + cw.db
    x = x + swish(conv) @ cw.pw2 + cw.pb2
    x = x + 0.5 * ffn(x, block.ffn2)
    return layer_norm(x, block.final_norm_gain, block.final_norm_bias)
