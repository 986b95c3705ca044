"""Train a small binary RBM with CD-1 on noisy template patterns.

The reconstruction error drops as the hidden units pick up the templates;
the trained model then denoises corrupted inputs.

Run:  python3 demos/03_rbm_patterns.py
"""

import numpy as np

from fingerspell.rbm import RbmTrainConfig, train_rbm


def main():
    rng = np.random.default_rng(1)
    templates = (rng.random((8, 48)) < 0.5).astype(float)
    rows = templates[np.arange(400) % 8]
    noisy = np.abs(rows - (rng.random(rows.shape) < 0.03))

    errors = []
    cfg = RbmTrainConfig(epochs=40, batch_size=50, rng_seed=2)
    rbm = train_rbm(noisy, cfg, n_hidden=24, on_epoch=lambda e, err: errors.append(err))

    print("reconstruction error by epoch:")
    bar_max = max(errors)
    for e, err in enumerate(errors):
        if e % 4 == 0 or e == len(errors) - 1:
            bar = "#" * int(40 * err / bar_max)
            print(f"  epoch {e:3d}  {err:.4f}  {bar}")

    corrupted = templates[0].copy()
    flip = rng.choice(48, size=6, replace=False)
    corrupted[flip] = 1 - corrupted[flip]
    recon = rbm.visible_probabilities(rbm.hidden_probabilities(corrupted))
    restored = (recon > 0.5).astype(float)
    print(f"\ndenoising one template: {int((corrupted != templates[0]).sum())} flipped bits in, "
          f"{int((restored != templates[0]).sum())} wrong bits after one up-down pass")


if __name__ == "__main__":
    main()
