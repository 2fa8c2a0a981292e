"""Shared test helpers."""

import numpy as np

from anvil.fingerprint import ApRegistry, FingerprintDatabase

# criterion number -> (passed, detail), filled by test_acceptance.py
ACCEPTANCE = {}


def random_db(rng, n_rp=5, per_rp=2, d_ap=8, zero_frac=0.3, floorplan_id="rand"):
    """Random normalized database with a share of invisible (zero) APs."""
    n = n_rp * per_rp
    X = rng.uniform(0.05, 1.0, size=(n, d_ap))
    X[rng.random((n, d_ap)) < zero_frac] = 0.0
    X = np.round(X, 2)   # whole dBm, so the CSV writer accepts it
    reg = ApRegistry(tuple(f"ap{i}" for i in range(d_ap)))
    coords = np.c_[np.arange(n_rp, dtype=float), np.zeros(n_rp)]
    return FingerprintDatabase(reg, X, np.repeat(np.arange(n_rp), per_rp), ("dev",) * n, coords,
                               floorplan_id)


def loop_multi_head(q, K, V, Wq, Wk, Wv, Wo):
    """Multi-head attention evaluated scalar by scalar with math.fsum.

    head_i = softmax((q Wq_i)(K Wk_i)^T / sqrt(hs)) (V Wv_i); out = concat(heads) Wo.
    """
    import math

    nh, d_ap, hs = Wq.shape
    n, n_v = K.shape[0], V.shape[1]
    out = []
    for row in q:
        concat = []
        for i in range(nh):
            qp = [math.fsum(row[a] * Wq[i, a, t] for a in range(d_ap)) for t in range(hs)]
            scores = []
            for j in range(n):
                kp = [math.fsum(K[j, a] * Wk[i, a, t] for a in range(d_ap)) for t in range(hs)]
                scores.append(math.fsum(qp[t] * kp[t] for t in range(hs)) / math.sqrt(hs))
            top = max(scores)
            e = [math.exp(s - top) for s in scores]
            z = math.fsum(e)
            w = [x / z for x in e]
            for t in range(hs):
                vp = [math.fsum(V[j, r] * Wv[i, r, t] for r in range(n_v)) for j in range(n)]
                concat.append(math.fsum(w[j] * vp[j] for j in range(n)))
        out.append([math.fsum(concat[c] * Wo[c, o] for c in range(len(concat)))
                    for o in range(Wo.shape[1])])
    return np.array(out)


def gradient_check(model, X, y, seed, eps=1e-5):
    """Largest relative gap between analytic and central-difference gradients.

    The augmented batch and dropout masks are drawn once from ``seed`` exactly as
    training draws them, then frozen.  The difference quotient is evaluated in
    long double so its roundoff sits far below the double-precision gradient
    being checked.  Entries whose +-eps step flips a ReLU are at a kink where
    the quotient is not a derivative; they are skipped and counted.  Relative
    error is |a - n| / max(|a|, |n|, 1e-8).  Returns ``(worst, n_skipped)``.
    """
    from anvil import attention as att
    from anvil.nn import log_softmax

    cfg = model.config
    params = {k: v.copy() for k, v in model.params.items()}
    _, grads = att.loss_and_gradients(model, X, y, np.random.default_rng(seed), params=params)
    rng = np.random.default_rng(seed)
    Xa = att.augment_queries(np.atleast_2d(np.asarray(X, dtype=cfg.dtype)), cfg, rng)
    masks = att._draw_masks(rng, Xa.shape[0], params, cfg)
    ld = np.longdouble
    Xa, keys, values = (np.asarray(a, dtype=ld) for a in (Xa, model.keys, model.values))
    masks = [None if mk is None else mk.astype(ld) for mk in masks]
    y = np.asarray(y, dtype=int)
    lp_params = {k: v.astype(ld) for k, v in params.items()}

    def loss(ps):
        logits, (_, (_, pre)) = att._forward(ps, cfg, Xa, keys, values, masks)
        logp = log_softmax(logits)
        return -np.mean(logp[np.arange(len(y)), y]), [z > 0 for z in pre]

    _, base = loss(lp_params)
    worst, skipped = 0.0, 0
    for name, p in lp_params.items():
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + ld(eps)
            lplus, pat_plus = loss(lp_params)
            p[idx] = old - ld(eps)
            lminus, pat_minus = loss(lp_params)
            p[idx] = old
            if any((a != b).any() or (a != c).any() for a, b, c in zip(base, pat_plus, pat_minus)):
                skipped += 1
                continue
            num = float((lplus - lminus) / (2 * ld(eps)))
            a = float(grads[name][idx])
            worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-8))
    return worst, skipped


def small_anvil(rng, d_ap=8, n_rp=5, per_rp=2, nh=2, hs=4, dense=(8,), qk_gain=300.0):
    from anvil.attention import AnvilConfig, build_model

    db = random_db(rng, n_rp=n_rp, per_rp=per_rp, d_ap=d_ap)
    cfg = AnvilConfig(nh=nh, hs=hs, dense=dense, qk_gain=qk_gain)
    return db, build_model(db, cfg, rng)


def separable_six():
    """Noiseless 6-RP set with every AP near the path, so RPs are well apart."""
    from anvil.radio_sim import DeviceProfile, PathLossParams, generate_dataset, make_floorplan

    spec = make_floorplan("sep6", 6, 30, seed=1, rp_spacing_m=8.0, near_fraction=1.0,
                          near_offset_m=4.0)
    return generate_dataset(spec, PathLossParams(shadow_sigma_db=0.0),
                            [DeviceProfile.identity("ref")], 4, 0)["ref"]
