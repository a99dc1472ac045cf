"""Regenerate the bundled 500-location synthetic fixture.

Two embeddings share a latent signal; a 3-variable regression task and a
4-class classification task are linear in that signal plus noise.

    python tests/fixtures/make_fixture.py
"""

from pathlib import Path

import numpy as np

from embcomp.dataset import write_locations
from embcomp.sampler import sample_sphere_uniform

HERE = Path(__file__).parent
N = 500


def _write(path, header, ids, values, fmt="{:.6f}"):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for i, row in zip(ids, values):
            fh.write(",".join([i, *(fmt.format(v) for v in row)]) + "\n")


def main(seed=20240601):
    rng = np.random.default_rng(seed)
    locs = sample_sphere_uniform(N, seed=seed)
    write_locations(HERE / "locations.csv", locs)
    z = rng.standard_normal((N, 6))
    a = np.c_[z[:, :4] @ rng.standard_normal((4, 8)), rng.standard_normal((N, 2))]
    b = np.c_[z[:, 2:] @ rng.standard_normal((4, 12)), rng.standard_normal((N, 4))]
    a += 0.3 * rng.standard_normal(a.shape)
    b += 0.3 * rng.standard_normal(b.shape)
    _write(HERE / "emb_a.csv", ["id", *(f"e{j}" for j in range(a.shape[1]))], locs.ids, a)
    _write(HERE / "emb_b.csv", ["id", *(f"e{j}" for j in range(b.shape[1]))], locs.ids, b)
    y = z @ rng.standard_normal((6, 3)) + 0.8 * rng.standard_normal((N, 3))
    _write(HERE / "task_reg.csv", ["id", "t0", "t1", "t2"], locs.ids, y)
    logits = z @ rng.standard_normal((6, 4))
    labels = np.argmax(logits + rng.gumbel(size=logits.shape), axis=1)
    _write(HERE / "task_cls.csv", ["id", "label"], locs.ids, labels[:, None], fmt="{:d}")


if __name__ == "__main__":
    main()
