"""Sample loading, train/valid/test splits and synthetic data generation.

On disk a dataset is a CSV manifest (header
``depth_path,intensity_path,user,letter``, paths relative to the manifest
location) pointing at 16-bit depth PGMs and 8-bit intensity PGMs.

Two split protocols are provided: ``allseen`` stratifies every
(user, letter) group into 1/2 train, 1/4 validation, 1/4 test (remainders
go to train), so every signer appears in all three sets; ``unseen`` holds
one signer out entirely as the test set and reserves a tenth of the
remaining samples (stratified) for validation.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fingerspell.alphabet import STATIC_LETTERS
from fingerspell.errors import (
    FormatError,
    MissingFileError,
    UnknownLetterError,
    UnknownUserError,
)
from fingerspell.pgm import read_pgm, write_pgm

MIN_SIDE = 32
MAX_SIDE = 256

SYNTH_SIZE = 100          # generated images are 100x100
SYNTH_MAX_DEPTH = 120     # hand structure stays within the default t


@dataclass
class Sample:
    user_id: str
    letter: str
    depth: np.ndarray       # int32 mm, 0 = no reading
    intensity: np.ndarray   # uint8


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "allseen"            # "allseen" | "unseen"
    test_user: str | None = None     # unseen mode only
    rng_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("allseen", "unseen"):
            raise ValueError(f"unknown split mode {self.mode!r}")


def _check_dims(img: np.ndarray, what: str, row: str):
    h, w = img.shape
    if not (MIN_SIDE <= w <= MAX_SIDE and MIN_SIDE <= h <= MAX_SIDE):
        raise FormatError(f"{row}: {what} image {w}x{h} outside [{MIN_SIDE},{MAX_SIDE}]")


def load_dataset(manifest_path) -> list:
    """Read every manifest row into a validated :class:`Sample` list.

    Errors carry the offending row: missing files, bad PGMs, letters
    outside the static alphabet, duplicate paths.  Sample order follows
    manifest row order.
    """
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise MissingFileError(f"manifest not found: {manifest_path}")
    base = manifest_path.parent
    samples = []
    seen_paths = set()
    with open(manifest_path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"depth_path", "intensity_path", "user", "letter"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise FormatError(f"{manifest_path}: manifest header must contain {sorted(required)}")
        for lineno, rec in enumerate(reader, start=2):
            row = f"{manifest_path}:{lineno}"
            letter = rec["letter"].strip()
            if letter not in STATIC_LETTERS:
                raise UnknownLetterError(f"{row}: letter {letter!r} is not a static alphabet letter")
            pair = []
            for key in ("depth_path", "intensity_path"):
                rel = rec[key].strip()
                if rel in seen_paths:
                    raise FormatError(f"{row}: duplicate path {rel!r} in manifest")
                seen_paths.add(rel)
                p = base / rel
                if not p.exists():
                    raise MissingFileError(f"{row}: missing file {p}")
                pair.append(read_pgm(p))
            depth, intensity = pair
            if intensity.dtype != np.uint8:
                raise FormatError(f"{row}: intensity image must be an 8-bit PGM")
            _check_dims(depth, "depth", row)
            _check_dims(intensity, "intensity", row)
            samples.append(
                Sample(
                    user_id=rec["user"].strip(),
                    letter=letter,
                    depth=depth.astype(np.int32),
                    intensity=intensity,
                )
            )
    return samples


def dataset_counts(samples) -> dict:
    """Nested {user: {letter: count}} table."""
    counts: dict = {}
    for s in samples:
        counts.setdefault(s.user_id, {}).setdefault(s.letter, 0)
        counts[s.user_id][s.letter] += 1
    return counts


# ---------------------------------------------------------------------------
# splits

def _strata(samples):
    groups: dict = {}
    for i, s in enumerate(samples):
        groups.setdefault((s.user_id, s.letter), []).append(i)
    return groups


def split_allseen(samples, spec: SplitSpec):
    """Stratified 1/2 : 1/4 : 1/4 split; every user in every set.

    Within each (user, letter) stratum the samples are shuffled with the
    seeded generator; test and validation each take a quarter (rounded
    half-up), the rest (remainders included) goes to train.  Every share
    stays within one sample of its exact fraction for any stratum size.
    Deterministic partition.
    """
    if spec.mode != "allseen":
        raise ValueError("split_allseen requires an allseen SplitSpec")
    rng = np.random.default_rng(spec.rng_seed)
    train, valid, test = [], [], []
    groups = _strata(samples)
    for key in sorted(groups):
        idx = np.array(groups[key])
        idx = idx[rng.permutation(len(idx))]
        quarter = int(len(idx) / 4 + 0.5)
        test.extend(int(i) for i in idx[:quarter])
        valid.extend(int(i) for i in idx[quarter : 2 * quarter])
        train.extend(int(i) for i in idx[2 * quarter :])
    return (
        [samples[i] for i in train],
        [samples[i] for i in valid],
        [samples[i] for i in test],
    )


def split_unseen(samples, spec: SplitSpec):
    """Leave-one-signer-out split: the test set is exactly one user.

    The held-out user's samples are shuffled into the test set; a tenth of
    each remaining (user, letter) stratum (rounded half-up) goes to
    validation, the rest to train.
    """
    if spec.mode != "unseen":
        raise ValueError("split_unseen requires an unseen SplitSpec")
    users = {s.user_id for s in samples}
    if spec.test_user not in users:
        raise UnknownUserError(f"test user {spec.test_user!r} not in dataset (users: {sorted(users)})")
    rng = np.random.default_rng(spec.rng_seed)

    test_idx = [i for i, s in enumerate(samples) if s.user_id == spec.test_user]
    test_idx = [test_idx[j] for j in rng.permutation(len(test_idx))]

    rest = [(i, s) for i, s in enumerate(samples) if s.user_id != spec.test_user]
    groups: dict = {}
    for i, s in rest:
        groups.setdefault((s.user_id, s.letter), []).append(i)
    train, valid = [], []
    for key in sorted(groups):
        idx = np.array(groups[key])
        idx = idx[rng.permutation(len(idx))]
        n_valid = int(len(idx) * 0.1 + 0.5)
        valid.extend(int(i) for i in idx[:n_valid])
        train.extend(int(i) for i in idx[n_valid:])
    return (
        [samples[i] for i in train],
        [samples[i] for i in valid],
        [samples[i] for i in test_idx],
    )


def split_dataset(samples, spec: SplitSpec):
    return split_allseen(samples, spec) if spec.mode == "allseen" else split_unseen(samples, spec)


# ---------------------------------------------------------------------------
# synthetic generator
#
# Each letter has a fixed parametric hand template: a palm ellipse, 2-5
# finger capsules at letter-specific angles, and a thumb bar, every part
# sitting at a letter-specific depth slice inside the 120 mm envelope.
# Users differ by a global depth offset (removed by preprocessing - that
# is the point), a consistent scale/rotation and a per-slice depth skew;
# individual samples add small pose jitter, sensor noise and dropouts.

_TEMPLATE_SALT = 611953
_DEPTH_BINS = np.array([4.0, 24.0, 44.0, 64.0, 84.0])   # inside the 20 mm slices


def _letter_template(letter_idx: int) -> dict:
    rng = np.random.default_rng(np.random.SeedSequence([_TEMPLATE_SALT, letter_idx]))
    n_fingers = 2 + letter_idx % 4
    spread = rng.uniform(1.6, 2.2)
    base_angle = -np.pi / 2 + rng.uniform(-0.25, 0.25)
    angles = base_angle + (np.arange(n_fingers) - (n_fingers - 1) / 2) * spread / max(n_fingers - 1, 1)
    bins = rng.permutation(len(_DEPTH_BINS))[:n_fingers]
    return {
        "palm_axes": (rng.uniform(17.0, 22.0), rng.uniform(13.0, 17.0)),
        "palm_depth": rng.uniform(55.0, 95.0),
        "palm_intensity": rng.uniform(90.0, 200.0),
        "finger_angles": angles,
        "finger_len": rng.uniform(16.0, 26.0, n_fingers),
        "finger_width": rng.uniform(3.5, 5.5, n_fingers),
        "finger_depth": _DEPTH_BINS[bins] + rng.uniform(0.0, 10.0, n_fingers),
        "finger_intensity": rng.uniform(70.0, 230.0, n_fingers),
        "thumb_angle": 2 * np.pi * letter_idx / 24 + rng.uniform(-0.2, 0.2),
        "thumb_len": rng.uniform(12.0, 18.0),
        "thumb_depth": float(_DEPTH_BINS[(letter_idx + 2) % len(_DEPTH_BINS)]) + rng.uniform(0.0, 10.0),
        "thumb_intensity": rng.uniform(70.0, 230.0),
    }


_TEMPLATES = [_letter_template(k) for k in range(len(STATIC_LETTERS))]


def _user_params(rng_seed: int, user_idx: int) -> dict:
    # users differ by a consistent pose bias (scale/rotation), a per-slice
    # depth skew and per-finger angle habits; the global depth_base offset
    # is removed by preprocessing by design
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, 1000 + user_idx]))
    return {
        "scale": rng.uniform(0.88, 1.12),
        "rotation": rng.uniform(-0.17, 0.17),
        "depth_base": int(rng.integers(650, 1100)),
        "depth_skew": rng.uniform(-9.0, 9.0, len(_DEPTH_BINS) + 1),
        "angle_skew": rng.uniform(-0.09, 0.09, 6),
        "intensity_gain": rng.uniform(0.85, 1.15),
        "shift": rng.uniform(-3.0, 3.0, 2),
    }


def _capsule_mask(xx, yy, cx, cy, angle, length, width):
    # distance to the segment of given length through (cx, cy) at `angle`
    dx, dy = xx - cx, yy - cy
    ux, uy = np.cos(angle), np.sin(angle)
    along = np.clip(dx * ux + dy * uy, -length / 2, length / 2)
    return (dx - along * ux) ** 2 + (dy - along * uy) ** 2 <= width ** 2


def _render_sample(letter_idx: int, user: dict, rng: np.random.Generator):
    tpl = _TEMPLATES[letter_idx]
    size = SYNTH_SIZE
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)

    scale = user["scale"] * rng.uniform(0.96, 1.04)
    rot = user["rotation"] + rng.uniform(-0.05, 0.05)
    cx = size / 2 + user["shift"][0] + rng.uniform(-4.0, 4.0)
    cy = size / 2 + 4 + user["shift"][1] + rng.uniform(-4.0, 4.0)

    depth_off = np.full((size, size), np.inf)
    intensity = np.zeros((size, size))

    def paint(mask, d, value):
        closer = mask & (d < depth_off)
        depth_off[closer] = d
        intensity[closer] = value

    # palm
    pa, pb = tpl["palm_axes"]
    ca, sa = np.cos(rot), np.sin(rot)
    rx = (xx - cx) * ca + (yy - cy) * sa
    ry = -(xx - cx) * sa + (yy - cy) * ca
    palm = (rx / (pa * scale)) ** 2 + (ry / (pb * scale)) ** 2 <= 1.0
    skew = user["depth_skew"]
    paint(palm, tpl["palm_depth"] + skew[-1] + rng.uniform(-3.0, 3.0), tpl["palm_intensity"])

    # fingers radiate from the palm edge
    for j, angle in enumerate(tpl["finger_angles"]):
        a = angle + rot + user["angle_skew"][j]
        dist = (pb * scale) + tpl["finger_len"][j] * scale / 2 - 2.0
        fx = cx + np.cos(a) * dist
        fy = cy + np.sin(a) * dist
        mask = _capsule_mask(xx, yy, fx, fy, a, tpl["finger_len"][j] * scale, tpl["finger_width"][j] * scale)
        bin_idx = int(np.argmin(np.abs(_DEPTH_BINS - tpl["finger_depth"][j])))
        d = tpl["finger_depth"][j] + skew[bin_idx] + rng.uniform(-3.0, 3.0)
        paint(mask, max(d, 1.0), tpl["finger_intensity"][j])

    # thumb bar
    a = tpl["thumb_angle"] + rot + user["angle_skew"][5]
    dist = (pa * scale) + tpl["thumb_len"] * scale / 2 - 2.0
    mask = _capsule_mask(xx, yy, cx + np.cos(a) * dist, cy + np.sin(a) * dist, a, tpl["thumb_len"] * scale, 4.5 * scale)
    paint(mask, max(tpl["thumb_depth"] + rng.uniform(-3.0, 3.0), 1.0), tpl["thumb_intensity"])

    hand = np.isfinite(depth_off)
    base = user["depth_base"]

    depth = np.full((size, size), base + 260.0)          # background plane beyond t + d
    depth[hand] = base + depth_off[hand]
    depth += rng.normal(0.0, 1.0, depth.shape)
    dropouts = rng.random(depth.shape) < 0.004           # sensor misses
    depth[dropouts] = 0
    depth = np.clip(np.rint(depth), 0, 65535).astype(np.int32)

    # background clutter the mask must remove
    gx = 30 + 22 * np.sin(xx / 17.0 + rng.uniform(0, 6.28)) + 18 * np.cos(yy / 23.0 + rng.uniform(0, 6.28))
    img = gx + rng.normal(0.0, 6.0, intensity.shape)
    img[hand] = intensity[hand] * user["intensity_gain"] + rng.normal(0.0, 7.0, int(hand.sum()))
    img = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    return depth, img


def gen_synthetic(n_users: int, per_class: int, rng_seed: int = 0) -> list:
    """Generate ``n_users x 24 x per_class`` deterministic synthetic samples.

    Every sample passes the :class:`Sample` invariants and flows through
    the full preprocessing pipeline; identical (seed, user, letter, index)
    always reproduces the identical pair.
    """
    if n_users < 1 or per_class < 1:
        raise ValueError("n_users and per_class must be >= 1")
    samples = []
    for u in range(n_users):
        user = _user_params(rng_seed, u)
        uid = f"u{u:02d}"
        for k, letter in enumerate(STATIC_LETTERS):
            for i in range(per_class):
                rng = np.random.default_rng(np.random.SeedSequence([rng_seed, u, k, i]))
                depth, intensity = _render_sample(k, user, rng)
                samples.append(Sample(user_id=uid, letter=letter, depth=depth, intensity=intensity))
    return samples


def write_dataset(manifest_path, samples) -> Path:
    """Write samples as PGM pairs plus a manifest CSV at ``manifest_path``.

    Images land in an ``images/`` directory next to the manifest; the
    manifest references them with relative paths.
    """
    manifest = Path(manifest_path)
    out_dir = manifest.parent
    images = out_dir / "images"
    images.mkdir(parents=True, exist_ok=True)
    counters: dict = {}
    with open(manifest, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["depth_path", "intensity_path", "user", "letter"])
        for s in samples:
            key = (s.user_id, s.letter)
            i = counters.get(key, 0)
            counters[key] = i + 1
            stem = f"{s.user_id}_{s.letter}_{i:03d}"
            dp = f"images/{stem}_depth.pgm"
            ip = f"images/{stem}_intensity.pgm"
            write_pgm(out_dir / dp, s.depth.astype(np.uint16))
            write_pgm(out_dir / ip, s.intensity)
            writer.writerow([dp, ip, s.user_id, s.letter])
    return manifest
