"""Walk one synthetic depth/intensity pair through the preprocessing stages.

Run:  python3 demos/01_preprocessing_walkthrough.py
"""

import numpy as np

from fingerspell.dataset import gen_synthetic
from fingerspell.imaging import (
    apply_mask,
    bounding_box_center,
    make_mask,
    min_nonzero_depth,
    normalize_depth,
    remove_background,
    resize,
)


def ascii_preview(img, width=48):
    """Coarse ASCII rendering (darker glyph = larger value)."""
    glyphs = " .:-=+*#%@"
    small = resize(img.astype(np.float64), width, width // 2, mode="bilinear")
    hi = small.max() or 1.0
    lines = []
    for row in small:
        lines.append("".join(glyphs[int(v / hi * (len(glyphs) - 1))] for v in row))
    return "\n".join(lines)


def main():
    sample = gen_synthetic(n_users=1, per_class=1, rng_seed=7)[4]  # letter E
    depth, intensity = sample.depth, sample.intensity
    print(f"sample: user={sample.user_id} letter={sample.letter} size={depth.shape}")
    print(f"raw depth range: {depth[depth > 0].min()}..{depth.max()} mm "
          f"({(depth == 0).sum()} missing readings)")

    d = min_nonzero_depth(depth)
    print(f"\nclosest surface d = {d} mm; removing everything beyond t + d = {120 + d} mm")
    cleaned = remove_background(depth, t=120, d=d)
    print(f"hand pixels left: {(cleaned > 0).sum()}")

    normalized = normalize_depth(cleaned, d)
    print(f"after renormalization the closest pixel is {min_nonzero_depth(normalized)} "
          f"and the deepest {normalized.max()} mm")

    mask = make_mask(normalized)
    segmented = apply_mask(intensity, mask)
    print(f"masked intensity: {(segmented > 0).sum()} hand pixels "
          f"(background clutter removed: {(intensity > 0).sum() - (segmented > 0).sum()} pixels)")

    depth128 = bounding_box_center(resize(normalized, 128, 128), 128, 128)
    inten128 = bounding_box_center(resize(segmented, 128, 128), 128, 128)
    print(f"\ncentered 128x128 depth (mm, renormalized):\n{ascii_preview(depth128)}")
    print(f"\ncentered 128x128 masked intensity:\n{ascii_preview(inten128)}")


if __name__ == "__main__":
    main()
