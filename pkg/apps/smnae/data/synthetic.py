"""Synthetic kin videos.

Every family has a latent vector; members perturb it with noise of scale
kin_noise and drift along a random walk of scale drift from frame to frame.
A fixed random projection maps latent states to grayscale frames. Layout on
disk is out/Fxxx/Sxx/frame_xxxx.pgm plus pairs.csv.
"""
from __future__ import annotations

import itertools
import logging
from pathlib import Path

import numpy as np

from ..config import SyntheticConfig
from ..errors import ValidationError
from .pairs import PairRecord, write_pair_list
from .videos import write_video_dir

logger = logging.getLogger(__name__)

PAIRS_FILE = "pairs.csv"
# mid-grey plus this contrast per unit of projected latent
PIXEL_CONTRAST = 0.15
MAX_RESAMPLES = 1000


def _family_blocks(order: np.ndarray) -> list[list[int]]:
    """Consecutive families form blocks of two; an odd one out joins the last block."""
    blocks = [list(order[k:k + 2]) for k in range(0, len(order) - 1, 2)]
    if len(order) % 2:
        blocks[-1].append(int(order[-1]))
    return [[int(f) for f in b] for b in blocks]


def _enforce_gap(latents: np.ndarray, block: list[int], gap: float, rng: np.random.Generator) -> None:
    for k, fam in enumerate(block[1:], start=1):
        for _ in range(MAX_RESAMPLES):
            dists = [np.linalg.norm(latents[fam] - latents[other]) for other in block[:k]]
            if min(dists) >= gap:
                break
            latents[fam] = rng.standard_normal(latents.shape[1])
        else:
            raise ValidationError(f"could not place family {fam} at latent distance >= {gap}")


def _render(states: np.ndarray, projection: np.ndarray, side: int) -> list[np.ndarray]:
    pixels = np.clip(0.5 + PIXEL_CONTRAST * (projection @ states), 0.0, 1.0)
    quantized = np.rint(pixels * 255.0).astype(np.uint8)
    return [quantized[:, t].reshape(side, side) for t in range(quantized.shape[1])]


def gen_synthetic_kin(cfg: SyntheticConfig, out_dir: str | Path) -> list[PairRecord]:
    """Write the dataset tree and pairs.csv under `out_dir`; a pure function of `cfg`."""
    out = Path(out_dir)
    rng = np.random.default_rng(cfg.seed)
    projection = rng.normal(0.0, 1.0 / np.sqrt(cfg.latent_dim), size=(cfg.frame_dim, cfg.latent_dim))
    latents = rng.standard_normal((cfg.families, cfg.latent_dim))
    blocks = _family_blocks(rng.permutation(cfg.families))
    for block in blocks:
        _enforce_gap(latents, block, cfg.nonkin_gap, rng)

    def subject(f: int, m: int) -> str:
        return f"F{f:03d}/S{m:02d}"

    for f in range(cfg.families):
        for m in range(cfg.members_per_family):
            member = latents[f] + cfg.kin_noise * rng.standard_normal(cfg.latent_dim)
            steps = cfg.drift * rng.standard_normal((cfg.latent_dim, cfg.frames_per_video - 1))
            walk = np.concatenate([np.zeros((cfg.latent_dim, 1)), np.cumsum(steps, axis=1)], axis=1)
            write_video_dir(out / subject(f, m), _render(member[:, None] + walk, projection, cfg.frame_side))

    members = range(cfg.members_per_family)
    pairs: list[PairRecord] = []
    for block in blocks:
        kin = [PairRecord(subject(f, a), subject(f, b), True)
               for f in block for a, b in itertools.combinations(members, 2)]
        cross = [(subject(f, a), subject(g, b))
                 for f, g in itertools.combinations(block, 2) for a in members for b in members]
        pick = np.sort(rng.choice(len(cross), size=min(len(kin), len(cross)), replace=False))
        pairs.extend(kin)
        pairs.extend(PairRecord(*cross[i], False) for i in pick)

    write_pair_list(out / PAIRS_FILE, pairs, with_relation=False)
    n_kin = sum(p.label for p in pairs)
    logger.info(f"Synthetic dataset written: out={out}, families={cfg.families}, "
                f"videos={cfg.families * cfg.members_per_family}, kin_pairs={n_kin}, nonkin_pairs={len(pairs) - n_kin}")
    return pairs
