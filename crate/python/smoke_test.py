"""Smoke test for the capmf_py extension.

Build it first, e.g.

    cargo build --release -p capmf-py --features extension-module
    cp target/release/libcapmf_py.so python/capmf_py.so
    python3 python/smoke_test.py

or `maturin develop -m crates/python/Cargo.toml --features extension-module`.
"""

import math
import os
import random
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import capmf_py as cm


def split(rows, users, items, seed=0):
    rng = random.Random(seed)
    uid = {u: i for i, u in enumerate(users)}
    iid = {j: i for i, j in enumerate(items)}
    by_user = {}
    for u, j, _ in rows:
        by_user.setdefault(uid[u], []).append(iid[j])
    train, test = [], []
    for u, js in by_user.items():
        rng.shuffle(js)
        cut = max(1, int(0.8 * len(js)))
        seen = set(js)
        negatives = [j for j in range(len(items)) if j not in seen]
        rng.shuffle(negatives)
        train += [(u, j, 1.0) for j in js[:cut]] + [(u, j, -1.0) for j in negatives[:cut]]
        rest = js[cut:]
        test += [(u, j, 1.0) for j in rest] + [(u, j, -1.0) for j in negatives[cut:cut + len(rest)]]
    return train, test


def main():
    rows = cm.planted(users=40, items=60, rank=3, seed=1)
    users = sorted({r[0] for r in rows})
    items = sorted({r[1] for r in rows})
    train_t, test_t = split(rows, users, items)
    train = cm.Dataset(len(users), len(items), train_t)
    test = cm.Dataset(len(users), len(items), test_t)
    ctx = cm.Context.from_train(train, capacity="actual", propensity="actual")
    assert len(ctx.propensities) == len(users)
    assert len(ctx.capacities) == len(items)

    plain = cm.Model.train(train, ctx, alpha=0.0, rank=3, max_iters=200)
    capped = cm.Model.train(train, ctx, alpha=1.0, rank=3, max_iters=200)
    assert capped.capacity_loss(ctx) < plain.capacity_loss(ctx)
    m = plain.evaluate(test, ctx, tops=[1, 5])
    for key in ["rmse", "pairwise01", "capacity_loss", "overall", "map@1", "wap@5", "wmcv@5"]:
        assert key in m, key
    assert 0.0 <= m["map@5"] <= 1.0

    scores = plain.scores()
    lists = cm.post_process_baseline(scores, ctx, 5)
    counts = [0] * len(items)
    for l in lists:
        for j in l:
            counts[j] += 1
    assert all(c <= math.floor(cap) for c, cap in zip(counts, ctx.capacities))
    assert cm.rank_items(scores)[0][0] == max(range(len(items)), key=lambda j: (scores[0][j], -j))

    with tempfile.TemporaryDirectory() as d:
        path = os.path.join(d, "m.ckpt")
        plain.save(path)
        again = cm.Model.load(path)
        assert again.scores() == scores

    assert cm.latlon_to_tile(0.0, 0.0) == (16384, 16384)
    assert abs(cm.surrogate_loss("logistic", 0.0) - math.log(2)) < 1e-15
    assert cm.surrogate_loss("hinge", 3.0) == 0.0

    geo = cm.Model.train(
        train, ctx, alpha=0.2, rank=2, max_iters=50,
        pois=[(40.7 + 0.001 * (j % 7), -74.0 + 0.001 * (j // 7)) for j in range(len(items))],
    )
    assert geo.is_geo
    print("ok:", plain, "iterations", plain.iterations, plain.stop_reason, "map@5 %.3f" % m["map@5"])


if __name__ == "__main__":
    main()
