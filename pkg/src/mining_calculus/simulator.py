"""Monte Carlo mining races.

Miners are synchronized: in round k every miner hashes the k-th nonce of its
own partition, and each keeps going until it finds a proof of work or runs
out of nonces. The race is won in round min(k) over the successful miners.

Two modes: ``REALHASH`` runs double SHA-256 over fresh inputs, and
``GEOMETRIC`` samples each miner's first success directly, which is the same
distribution under the random-oracle idealization and orders of magnitude
faster.
"""
from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .powmodel import MiningDesign

FAILURE = -1
DEFAULT_RACES = 10000
# (s, r, d) grid of the reference campaign
GRID_S = tuple(4 * i for i in range(1, 9))
GRID_R = tuple(2 ** i for i in range(3, 8))
GRID_D = (4, 8, 12, 16, 17, 18, 19, 20)


class Mode(enum.Enum):
    REALHASH = "realhash"
    GEOMETRIC = "geometric"


@dataclass(frozen=True)
class RaceConfig:
    design: MiningDesign
    mode: Mode = Mode.GEOMETRIC
    seed: int = 0

    def __post_init__(self):
        if self.mode is Mode.REALHASH and not self.design.d < 256:
            raise ValueError("real-hash mode needs d < 256")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")


@dataclass(frozen=True)
class RaceOutcome:
    """Per-miner 0-based success rounds, ``FAILURE`` (-1) when exhausted."""

    per_miner: tuple

    @property
    def winner_rounds(self) -> int | None:
        wins = [k for k in self.per_miner if k != FAILURE]
        return min(wins) + 1 if wins else None

    @property
    def failed(self) -> bool:
        return self.winner_rounds is None


def default_race_count(s: int) -> int:
    return max(1, DEFAULT_RACES // s)


def partition_nonces(design: MiningDesign) -> list:
    """Miner j gets range(j * lam, (j + 1) * lam)."""
    lam = design.lam
    return [range(j * lam, (j + 1) * lam) for j in range(design.s)]


def race_data(config: RaceConfig, race_index: int, miner_index: int) -> bytes:
    """Fixed-width prefix unique to (seed, design, race, miner).

    Distinct prefixes make every (prefix || nonce) input of a campaign
    distinct without any bookkeeping.
    """
    d = config.design
    return b"".join((
        config.seed.to_bytes(8, "big"),
        d.s.to_bytes(4, "big"), d.r.to_bytes(4, "big"), d.d.to_bytes(4, "big"),
        race_index.to_bytes(8, "big"),
        miner_index.to_bytes(4, "big"),
    ))


def double_sha256(data: bytes) -> bytes:
    return hashlib.sha256(hashlib.sha256(data).digest()).digest()


def leading_zero_bits(digest: bytes) -> int:
    value = int.from_bytes(digest, "big")
    return len(digest) * 8 - value.bit_length()


def has_pow(digest: bytes, d: int) -> bool:
    return int.from_bytes(digest, "big") >> (len(digest) * 8 - d) == 0


def nonce_bytes(nonce: int, r: int) -> bytes:
    return nonce.to_bytes(max(1, (r + 7) // 8), "big")


def _race_rng(config: RaceConfig, race_index: int) -> np.random.Generator:
    d = config.design
    seq = np.random.SeedSequence(entropy=(config.seed, d.s, d.r, d.d), spawn_key=(race_index,))
    return np.random.Generator(np.random.PCG64(seq))


def _geometric_entries(design: MiningDesign, uniforms: np.ndarray) -> np.ndarray:
    """Inverse-transform sample of the 0-based first-success round.

    Works for any d (numpy's own geometric overflows int64 for tiny p) and
    turns exhausted partitions into ``FAILURE``.
    """
    ln_q = math.log1p(-math.ldexp(1.0, -design.d))
    # 1 - U lies in (0, 1], so the log is finite
    k = np.floor(np.log1p(-uniforms) / ln_q)
    out = np.full(uniforms.shape, FAILURE, dtype=np.int64)
    ok = k < float(design.lam)
    out[ok] = k[ok].astype(np.int64)
    return out


def mine_single(miner_index: int, data: bytes, design: MiningDesign,
                mode: Mode = Mode.REALHASH, rng: np.random.Generator | None = None) -> int:
    """One miner's 0-based success round within its partition, or FAILURE."""
    if mode is Mode.GEOMETRIC:
        if rng is None:
            raise ValueError("geometric mode needs a random generator")
        return int(_geometric_entries(design, rng.random(1))[0])
    part = partition_nonces(design)[miner_index]
    if len(part) == 0:
        raise ValueError("empty nonce partition")
    for k, nonce in enumerate(part):
        if has_pow(double_sha256(data + nonce_bytes(nonce, design.r)), design.d):
            return k
    return FAILURE


def run_race(config: RaceConfig, race_index: int) -> RaceOutcome:
    design = config.design
    if config.mode is Mode.GEOMETRIC:
        rng = _race_rng(config, race_index)
        entries = _geometric_entries(design, rng.random(design.s))
        return RaceOutcome(tuple(int(k) for k in entries))
    return RaceOutcome(tuple(
        mine_single(j, race_data(config, race_index, j), design, Mode.REALHASH)
        for j in range(design.s)
    ))


@dataclass
class CampaignRecord:
    config: RaceConfig
    entries: np.ndarray  # (race_count, s) int64, FAILURE for exhausted miners

    def __post_init__(self):
        if self.entries.ndim != 2 or self.entries.shape[1] != self.config.design.s:
            raise ValueError("entries must have one column per miner")
        if self.entries.shape[0] < 1:
            raise ValueError("a campaign needs at least one race")

    @property
    def race_count(self) -> int:
        return self.entries.shape[0]

    @property
    def races(self) -> list:
        return [RaceOutcome(tuple(int(k) for k in row)) for row in self.entries]

    def winner_rounds(self) -> np.ndarray:
        """k_min + 1 for successful races (failed races omitted)."""
        e = self.entries
        ok = (e != FAILURE).any(axis=1)
        masked = np.where(e == FAILURE, np.iinfo(np.int64).max, e)
        return masked[ok].min(axis=1) + 1

    def success_count(self) -> int:
        return int((self.entries != FAILURE).any(axis=1).sum())


def run_campaign(config: RaceConfig, race_count: int | None = None) -> CampaignRecord:
    """``race_count`` independent races, merged in race-index order."""
    n = default_race_count(config.design.s) if race_count is None else race_count
    if n < 1:
        raise ValueError("race_count must be at least 1")
    rows = [run_race(config, i).per_miner for i in range(n)]
    return CampaignRecord(config, np.array(rows, dtype=np.int64).reshape(n, config.design.s))


def reference_grid(max_d: int | None = None) -> list:
    """Triples of the reference campaign, optionally capped at ``max_d``."""
    return [MiningDesign(s, r, d) for s in GRID_S for r in GRID_R for d in GRID_D
            if max_d is None or d <= max_d]


def run_corpus(designs: Iterable[MiningDesign], mode: Mode = Mode.GEOMETRIC, seed: int = 0,
               race_count: int | None = None) -> list:
    return [run_campaign(RaceConfig(design, mode, seed), race_count) for design in designs]


def parse_grid(spec: str) -> list:
    """Grid spec ``s=4,8;r=8,16;d=4`` or ``full`` / ``full:d<=16``."""
    spec = spec.strip()
    if spec == "full":
        return reference_grid()
    if spec.startswith("full:d<="):
        return reference_grid(int(spec.split("<=", 1)[1]))
    axes = {}
    for part in spec.split(";"):
        name, _, values = part.partition("=")
        name = name.strip()
        if name not in ("s", "r", "d") or not values:
            raise ValueError(f"bad grid component {part!r}")
        axes[name] = [int(v) for v in values.split(",")]
    missing = {"s", "r", "d"} - axes.keys()
    if missing:
        raise ValueError(f"grid is missing axes {sorted(missing)}")
    return [MiningDesign(s, r, d) for s in axes["s"] for r in axes["r"] for d in axes["d"]]


# Campaign files: header "s r d seed mode race_count", then one race per line.

def write_campaign(record: CampaignRecord, path) -> None:
    d = record.config.design
    with open(path, "w") as fh:
        fh.write(f"{d.s} {d.r} {d.d} {record.config.seed} {record.config.mode.value} {record.race_count}\n")
        for row in record.entries:
            fh.write(" ".join(str(int(k)) for k in row) + "\n")


def read_campaign(path) -> CampaignRecord:
    lines = Path(path).read_text().splitlines()
    s, r, d, seed, mode, count = lines[0].split()
    config = RaceConfig(MiningDesign(int(s), int(r), int(d)), Mode(mode), int(seed))
    rows = [[int(x) for x in line.split()] for line in lines[1:1 + int(count)]]
    if len(rows) != int(count) or any(len(row) != int(s) for row in rows):
        raise ValueError(f"{path}: malformed campaign file")
    return CampaignRecord(config, np.array(rows, dtype=np.int64).reshape(int(count), int(s)))


def campaign_filename(design: MiningDesign) -> str:
    return f"campaign_s{design.s}_r{design.r}_d{design.d}.txt"


def check_unique_inputs(config: RaceConfig, races: Sequence[int]) -> bool:
    """Whether every (prefix || nonce) input over the given races is distinct."""
    seen = set()
    design = config.design
    for i in races:
        for j, part in enumerate(partition_nonces(design)):
            prefix = race_data(config, i, j)
            for nonce in part:
                item = prefix + nonce_bytes(nonce, design.r)
                if item in seen:
                    return False
                seen.add(item)
    return True
