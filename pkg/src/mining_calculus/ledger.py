"""A single-process governed blockchain for authenticating transactions.

Clients submit inputs and keep ``(input, digest, location)`` triples; miners
pack pending digests into proof-of-work blocks; an auditor later decides
whether a triple is backed by a sufficiently deep block.
"""
from __future__ import annotations

import enum
import io
import struct
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from .powmodel import MiningDesign
from .simulator import double_sha256, has_pow, nonce_bytes, partition_nonces

ZERO_DIGEST = bytes(32)
MAGIC = b"MCHN"


def digest_of(data: bytes) -> bytes:
    return double_sha256(data)


@dataclass(frozen=True)
class AuthTriple:
    input: bytes
    digest: bytes
    location: int | None = None


def submit(data: bytes) -> AuthTriple:
    """Hash an input and return its unconfirmed triple."""
    if not data:
        raise ValueError("cannot submit an empty input")
    return AuthTriple(bytes(data), digest_of(data))


# Merkle tree: leaves are the transaction digests themselves, inner nodes
# hash the concatenation of their children, odd levels repeat the last node.

def _next_level(level: list) -> list:
    if len(level) % 2:
        level = level + [level[-1]]
    return [double_sha256(level[i] + level[i + 1]) for i in range(0, len(level), 2)]


def merkle_root(digests: Sequence[bytes]) -> bytes:
    if not digests:
        return ZERO_DIGEST
    level = list(digests)
    while len(level) > 1:
        level = _next_level(level)
    return level[0]


def merkle_path(digests: Sequence[bytes], index: int) -> list:
    """Sibling digests from leaf ``index`` up, each tagged with whether it sits on the left."""
    level = list(digests)
    path = []
    while len(level) > 1:
        if len(level) % 2:
            level.append(level[-1])
        sibling = index ^ 1
        path.append((level[sibling], sibling < index))
        level = _next_level(level)
        index //= 2
    return path


def root_from_path(leaf: bytes, path: Iterable) -> bytes:
    node = leaf
    for sibling, on_left in path:
        node = double_sha256(sibling + node if on_left else node + sibling)
    return node


@dataclass(frozen=True)
class Block:
    height: int
    prev_digest: bytes
    merkle_root: bytes
    nonce: int
    difficulty: int
    nonce_bits: int
    tx_digests: tuple = ()

    def header_prefix(self) -> bytes:
        """Header bytes that precede the nonce."""
        return header_prefix(self.height, self.prev_digest, self.merkle_root,
                             self.difficulty, self.nonce_bits)

    def header(self) -> bytes:
        return self.header_prefix() + nonce_bytes(self.nonce, self.nonce_bits)

    @property
    def digest(self) -> bytes:
        return double_sha256(self.header())


def header_prefix(height: int, prev: bytes, root: bytes, d: int, r: int) -> bytes:
    return struct.pack(">Q32s32sII", height, prev, root, d, r)


def genesis_block() -> Block:
    return Block(0, ZERO_DIGEST, ZERO_DIGEST, 0, 0, 1)


@dataclass
class Chain:
    blocks: list = field(default_factory=lambda: [genesis_block()])

    @property
    def current_height(self) -> int:
        """Number of blocks added so far, genesis included."""
        return len(self.blocks)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def append(self, block: Block) -> None:
        if block.height != len(self.blocks) or block.prev_digest != self.tip.digest:
            raise ValueError(f"block {block.height} does not extend the tip")
        if not block_checks(block):
            raise ValueError(f"block {block.height} fails its own checks")
        self.blocks.append(block)


class MiningFailure(Exception):
    """Every miner exhausted its nonce partition."""


def mine_block(pending: Sequence[bytes], chain: Chain, design: MiningDesign) -> Block:
    """Race ``design.s`` miners over the header; the earliest round wins.

    In each round miner j tries the k-th nonce of its partition, lower j
    first on ties. Raises :class:`MiningFailure` when nobody succeeds; the
    caller can retry with different pending data.
    """
    if not pending:
        raise ValueError("nothing to mine")
    txs = tuple(pending)
    height = chain.current_height
    prev = chain.tip.digest
    root = merkle_root(txs)
    prefix = header_prefix(height, prev, root, design.d, design.r)
    parts = partition_nonces(design)
    for k in range(design.lam):
        for part in parts:
            nonce = part[k]
            if has_pow(double_sha256(prefix + nonce_bytes(nonce, design.r)), design.d):
                return Block(height, prev, root, nonce, design.d, design.r, txs)
    raise MiningFailure(f"no proof of work for {design} at height {height}")


def block_checks(block: Block) -> bool:
    """Proof of work and Merkle root of a single block (genesis is exempt from PoW)."""
    if merkle_root(block.tx_digests) != block.merkle_root:
        return False
    if block.height == 0:
        return block.prev_digest == ZERO_DIGEST and not block.tx_digests
    return has_pow(block.digest, block.difficulty)


def invalid_heights(chain: Chain) -> list:
    """Heights that cannot be trusted: the first broken block and everything after it."""
    for i, block in enumerate(chain.blocks):
        linked = block.height == i and (
            i == 0 or block.prev_digest == chain.blocks[i - 1].digest)
        if not (linked and block_checks(block)):
            return list(range(i, len(chain.blocks)))
    return []


def verify_chain(chain: Chain) -> bool:
    return not invalid_heights(chain)


def confirm(chain: Chain, triples: Iterable[AuthTriple]) -> list:
    """Fill in the location of unconfirmed triples found in the chain (lowest height)."""
    first_seen = {}
    for block in chain.blocks:
        for digest in block.tx_digests:
            first_seen.setdefault(digest, block.height)
    out = []
    for t in triples:
        if t.location is None and t.digest in first_seen:
            t = replace(t, location=first_seen[t.digest])
        out.append(t)
    return out


def merkle_membership(digest: bytes, block: Block):
    """(True, path) if ``digest`` is a leaf of ``block`` and the path recomputes its root."""
    try:
        index = block.tx_digests.index(digest)
    except ValueError:
        return False, []
    path = merkle_path(block.tx_digests, index)
    return root_from_path(digest, path) == block.merkle_root, path


class Verdict(enum.Enum):
    VERIFIED = "Verified"
    UNVERIFIED = "Unverified"
    UNTRUSTWORTHY = "Untrustworthy"


def audit(triple: AuthTriple, chain: Chain, k: int) -> Verdict:
    """Auditor's decision for a triple at confirmation depth ``k``."""
    if k < 0:
        raise ValueError("confirmation depth must be non-negative")
    if triple.location is None or triple.digest != digest_of(triple.input):
        return Verdict.UNVERIFIED
    if not 0 <= triple.location < len(chain.blocks):
        return Verdict.UNTRUSTWORTHY
    if triple.location + k > chain.current_height:
        return Verdict.UNVERIFIED
    found, _ = merkle_membership(triple.digest, chain.blocks[triple.location])
    return Verdict.VERIFIED if found else Verdict.UNTRUSTWORTHY


# Binary format: MAGIC, u32 block count, then per block a u32 length and a
# payload of header fields, the nonce as u32 length + bytes, and the digests.

def _encode_block(b: Block) -> bytes:
    nonce = nonce_bytes(b.nonce, b.nonce_bits)
    parts = [header_prefix(b.height, b.prev_digest, b.merkle_root, b.difficulty, b.nonce_bits),
             struct.pack(">I", len(nonce)), nonce, struct.pack(">I", len(b.tx_digests))]
    parts.extend(b.tx_digests)
    return b"".join(parts)


def _decode_block(payload: bytes) -> Block:
    buf = io.BytesIO(payload)

    def take(n):
        chunk = buf.read(n)
        if len(chunk) != n:
            raise ValueError("truncated block record")
        return chunk

    height, prev, root, d, r = struct.unpack(">Q32s32sII", take(80))
    (nlen,) = struct.unpack(">I", take(4))
    nonce = int.from_bytes(take(nlen), "big")
    (count,) = struct.unpack(">I", take(4))
    txs = tuple(take(32) for _ in range(count))
    if buf.read(1):
        raise ValueError("trailing bytes in block record")
    return Block(height, prev, root, nonce, d, r, txs)


def dump_chain(chain: Chain) -> bytes:
    out = [MAGIC, struct.pack(">I", len(chain.blocks))]
    for block in chain.blocks:
        payload = _encode_block(block)
        out += [struct.pack(">I", len(payload)), payload]
    return b"".join(out)


def load_chain(data: bytes) -> Chain:
    if data[:4] != MAGIC:
        raise ValueError("not a chain file")
    (count,) = struct.unpack(">I", data[4:8])
    pos, blocks = 8, []
    for _ in range(count):
        if pos + 4 > len(data):
            raise ValueError("truncated chain file")
        (size,) = struct.unpack(">I", data[pos:pos + 4])
        blocks.append(_decode_block(data[pos + 4:pos + 4 + size]))
        pos += 4 + size
    if pos != len(data):
        raise ValueError("trailing bytes in chain file")
    return Chain(blocks)


def text_dump(chain: Chain) -> str:
    lines = []
    for b in chain.blocks:
        lines.append(f"block {b.height} digest={b.digest.hex()} prev={b.prev_digest.hex()} "
                     f"root={b.merkle_root.hex()} d={b.difficulty} r={b.nonce_bits} nonce={b.nonce}")
        lines.extend(f"  tx {t.hex()}" for t in b.tx_digests)
    return "\n".join(lines) + "\n"
