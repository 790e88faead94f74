"""Regenerates ppo_golden.json with an independent numpy implementation.

Run from this directory: python3 gen_golden.py
"""
import json

import numpy as np


def whiten(x, mask, eps, shift_mean):
    sel = x[mask == 1]
    mean = sel.mean()
    std = sel.std()
    out = (x - mean) / (std + eps)
    if not shift_mean:
        out = out + mean
    return np.where(mask == 1, out, 0.0)


def shaped_rewards(b, h):
    mask = b["mask"]
    r = np.where(mask == 1, -h["beta"] * (b["logp_policy"] - b["logp_ref"]), 0.0)
    for i, row in enumerate(mask):
        last = np.nonzero(row)[0][-1]
        r[i, last] += b["terminal_reward"][i]
    if h["whiten_rewards"]:
        r = whiten(r, mask, h["whiten_eps"], False)
    return r


def gae(rewards, values, mask, gamma, lam):
    adv = np.zeros_like(rewards)
    for i in range(mask.shape[0]):
        idx = np.nonzero(mask[i])[0]
        r, v = rewards[i, idx], values[i, idx]
        v_next = np.append(v[1:], 0.0)
        delta = r + gamma * v_next - v
        n = len(idx)
        # closed form: A_t = sum_k (gamma*lam)^k delta_{t+k}
        k = np.arange(n)
        disc = np.triu((gamma * lam) ** (k[None, :] - k[:, None]))
        adv[i, idx] = disc @ delta
    ret = np.where(mask == 1, adv + values, 0.0)
    return adv, ret


def surrogate(lp, lo, adv, mask, eps):
    m = mask == 1
    n = m.sum()
    ratio = np.exp(lp - lo)
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1 - eps, 1 + eps) * adv
    obj = np.minimum(unclipped, clipped)
    active = clipped < unclipped
    loss = -obj[m].sum() / n
    grad = np.where(m & ~active, -ratio * adv / n, 0.0)
    return loss, ratio[m].mean(), active[m].mean(), grad


def case(name, rng, shape, hyper, gaps):
    rows, cols = shape
    mask = np.zeros(shape)
    for i in range(rows):
        length = rng.integers(2, cols + 1)
        mask[i, :length] = 1.0
        if gaps and length > 3:
            mask[i, rng.integers(1, length - 1)] = 0.0
    lp_old = -rng.uniform(0.05, 3.0, shape)
    lp = lp_old + rng.normal(0.0, 0.3, shape)
    lp_ref = lp_old + rng.normal(0.0, 0.1, shape)
    values = rng.normal(0.0, 0.5, shape)
    terminal = rng.integers(0, 2, rows).astype(float)
    b = dict(logp_policy=lp, logp_old=lp_old, logp_ref=lp_ref, values=values, mask=mask, terminal_reward=terminal)
    r = shaped_rewards(b, hyper)
    adv, ret = gae(r, values, mask, hyper["gamma"], hyper["lam"])
    if hyper["whiten_advantages"]:
        adv = whiten(adv, mask, hyper["whiten_eps"], True)
    loss, ratio_mean, clip_frac, grad = surrogate(lp, lp_old, adv, mask, hyper["eps_clip"])
    m = mask == 1
    vloss = (0.5 * (values - ret) ** 2)[m].mean()
    entropy = (-lp)[m].mean()
    # padding carries noise the kernel must ignore
    for arr in (lp, lp_old, lp_ref, values):
        arr[~m] = rng.normal(0.0, 10.0, (~m).sum())
    tolist = lambda a: a.tolist()
    return dict(
        name=name,
        hyper=hyper,
        batch={k: tolist(v) for k, v in b.items()},
        expected=dict(
            rewards=tolist(r), advantages=tolist(adv), returns=tolist(ret),
            loss=float(loss), ratio_mean=float(ratio_mean), clip_fraction=float(clip_frac),
            grad=tolist(grad), value_loss=float(vloss), entropy=float(entropy),
        ),
    )


def hyper(**kw):
    h = dict(eps_clip=0.2, beta=0.05, gamma=1.0, lam=0.95, whiten_eps=1e-8,
             whiten_rewards=False, whiten_advantages=True)
    h.update(kw)
    return h


def main():
    rng = np.random.default_rng(20240611)
    cases = [
        case("defaults", rng, (4, 8), hyper(), False),
        case("no_kl_no_whitening", rng, (3, 6), hyper(beta=0.0, whiten_advantages=False), False),
        case("discounted_with_gaps", rng, (5, 10), hyper(gamma=0.9, lam=0.8), True),
        case("whitened_rewards", rng, (6, 12), hyper(whiten_rewards=True, eps_clip=0.1, beta=0.2), True),
        case("single_row", rng, (1, 5), hyper(lam=1.0, whiten_advantages=False), False),
    ]
    with open("ppo_golden.json", "w") as f:
        json.dump(cases, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
