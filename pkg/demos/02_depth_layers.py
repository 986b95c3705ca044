"""Show the layered binary decomposition of a hand depth image.

Each layer keeps the hand surface up to (l-1) * 2 cm + 1 mm behind the
closest point: layer 1 is the fingertips, layer 6 most of the palm.

Run:  python3 demos/02_depth_layers.py
"""

from fingerspell.dataset import gen_synthetic
from fingerspell.features import depth_layers, depth_feature_vector, preprocess_pair


def ascii_layer(layer, width=36):
    step_y = max(1, layer.shape[0] // (width // 2))
    step_x = max(1, layer.shape[1] // width)
    rows = []
    for y in range(0, layer.shape[0], step_y):
        rows.append("".join("#" if layer[y, x] else "." for x in range(0, layer.shape[1], step_x)))
    return "\n".join(rows)


def main():
    sample = gen_synthetic(n_users=1, per_class=1, rng_seed=3)[6]  # letter G
    depth, _ = preprocess_pair(sample.depth, sample.intensity)
    stack = depth_layers(depth, n=6, t=120)

    print(f"letter {sample.letter}: layer occupancy "
          f"{[int(layer.sum()) for layer in stack]} pixels (nested by construction)")
    for l, layer in enumerate(stack, start=1):
        cutoff = (l - 1) * 20 + 1
        print(f"\nlayer {l} (depth <= {cutoff} mm):")
        print(ascii_layer(layer))

    vec = depth_feature_vector(stack)
    print(f"\ncentered + 32x32 downsampled feature vector: length {vec.size}, "
          f"{int(vec.sum())} active bits")


if __name__ == "__main__":
    main()
