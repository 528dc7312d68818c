"""Synthetic corpora: scenes of flat squares plus seeded noise models.

All randomness comes from numpy's counter-based Philox bit generator. A
corpus is a pure function of its specs: per-pair streams are derived from
``SeedSequence([scene.seed, noise.seed]).spawn(m)``, and each child spawns one
stream for the scene and one for the noise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import TrainingSet

NOISE_KINDS = ("tiny-squares", "gaussian", "salt-pepper", "monotone-map")
MAX_PLACEMENT_TRIES = 1000


def make_rng(seed) -> np.random.Generator:
    """Philox-backed generator from an int or a SeedSequence."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SceneSpec:
    side: int = 64
    n_squares: int = 2
    size_range: tuple | None = None   # defaults to (side // 8, side // 4)
    level_range: tuple = (0.25, 0.9)
    background: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.side < 2 or self.side & (self.side - 1):
            raise ValueError(f"side must be a power of two >= 2, got {self.side}")
        if self.n_squares < 0:
            raise ValueError("square count must be non-negative")
        if self.size_range is None:
            object.__setattr__(self, "size_range", (max(1, self.side // 8), max(1, self.side // 4)))
        lo, hi = self.size_range
        if not 1 <= lo <= hi <= self.side:
            raise ValueError(f"square sizes {self.size_range} do not fit a {self.side}px image")
        a, b = self.level_range
        if not 0 <= a <= b <= 1 or not 0 <= self.background <= 1:
            raise ValueError("levels must lie in [0, 1]")

    def to_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class NoiseSpec:
    """``kind`` plus its parameters.

    tiny-squares: ``count`` (max number), ``level_range``
    gaussian:     ``sigma``
    salt-pepper:  ``rate`` in [0, 1]; hit pixels become 0 or 1
    monotone-map: ``scale`` > 0, ``shift``; pixel ``x -> scale * x + shift``
    """

    kind: str = "gaussian"
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        p = self.params
        if self.kind == "salt-pepper" and not 0 <= p.get("rate", 0.05) <= 1:
            raise ValueError("salt-pepper rate must lie in [0, 1]")
        if self.kind == "gaussian" and p.get("sigma", 0.05) < 0:
            raise ValueError("sigma must be non-negative")
        if self.kind == "monotone-map" and p.get("scale", 1.0) <= 0:
            raise ValueError("monotone map needs a positive scale")
        if self.kind == "tiny-squares" and p.get("count", 20) < 0:
            raise ValueError("tiny-square count must be non-negative")

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params), "seed": self.seed}


def _place(rng, side, sizes, count):
    """Non-overlapping ``(row, col, size)`` boxes, or raise after bounded retries."""
    occupied = np.zeros((side, side), dtype=bool)
    boxes = []
    tries = 0
    while len(boxes) < count:
        tries += 1
        if tries > MAX_PLACEMENT_TRIES:
            raise RuntimeError(f"could not place {count} squares in a {side}px image")
        s = int(rng.integers(sizes[0], sizes[1] + 1))
        r, c = rng.integers(0, side - s + 1, size=2)
        if occupied[r:r + s, c:c + s].any():
            continue
        occupied[r:r + s, c:c + s] = True
        boxes.append((int(r), int(c), s))
    return boxes


def gen_scene(spec: SceneSpec, rng=None) -> np.ndarray:
    rng = rng if rng is not None else make_rng(spec.seed)
    img = np.full((spec.side, spec.side), float(spec.background))
    for r, c, s in _place(rng, spec.side, spec.size_range, spec.n_squares):
        img[r:r + s, c:c + s] = rng.uniform(*spec.level_range)
    return img


def apply_noise(image, spec: NoiseSpec, rng=None) -> np.ndarray:
    rng = rng if rng is not None else make_rng(spec.seed)
    img = np.array(image, dtype=float)
    p = spec.params
    if spec.kind == "gaussian":
        sigma = p.get("sigma", 0.05)
        return img + sigma * rng.standard_normal(img.shape) if sigma > 0 else img
    if spec.kind == "salt-pepper":
        rate = p.get("rate", 0.05)
        hit = rng.random(img.shape) < rate
        img[hit] = rng.integers(0, 2, size=int(hit.sum())).astype(float)
        return img
    if spec.kind == "monotone-map":
        return p.get("scale", 1.0) * img + p.get("shift", 0.0)
    # tiny squares of side 1..2 at random spots with random darkness
    count = int(rng.integers(0, p.get("count", 20) + 1)) if p.get("count", 20) else 0
    lo, hi = p.get("level_range", (0.0, 1.0))
    side_r, side_c = img.shape
    for _ in range(count):
        s = int(rng.integers(1, 3))
        r = int(rng.integers(0, side_r - s + 1))
        c = int(rng.integers(0, side_c - s + 1))
        img[r:r + s, c:c + s] = rng.uniform(lo, hi)
    return img


def _pair_streams(scene: SceneSpec, noise: NoiseSpec, m: int):
    root = np.random.SeedSequence([scene.seed, noise.seed])
    for child in root.spawn(m):
        s_scene, s_noise = child.spawn(2)
        yield make_rng(s_scene), make_rng(s_noise)


def gen_image_pairs(scene: SceneSpec, noise: NoiseSpec, m: int):
    """List of ``(clean, noisy)`` 2-D images."""
    if m < 1:
        raise ValueError("need at least one pair")
    out = []
    for rs, rn in _pair_streams(scene, noise, m):
        clean = gen_scene(scene, rs)
        out.append((clean, apply_noise(clean, noise, rn)))
    return out


def gen_training_set(scene: SceneSpec, noise: NoiseSpec, m: int) -> TrainingSet:
    """``m`` flattened (clean, noisy) image pairs in the sample domain."""
    pairs = gen_image_pairs(scene, noise, m)
    return TrainingSet(np.array([c.ravel() for c, _ in pairs]),
                       np.array([n.ravel() for _, n in pairs]))


def gen_row_set(scene: SceneSpec, noise: NoiseSpec, m: int) -> TrainingSet:
    """``m`` 1-D signals: for each pair, the scene row crossing the most squares.

    Row length is ``scene.side`` (a power of two), as the pyramid transform needs.
    """
    rows_c, rows_n = [], []
    for clean, noisy in gen_image_pairs(scene, noise, m):
        r = int(np.argmax(np.sum(clean != scene.background, axis=1)))
        rows_c.append(clean[r])
        rows_n.append(noisy[r])
    return TrainingSet(np.array(rows_c), np.array(rows_n))
