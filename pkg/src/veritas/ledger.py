"""Append-only hash-chained ledger with replay, Merkle proofs, signatures.

Each block commits to its index, timestamp, operation, formula text,
justification digest, and the previous block's hash; the genesis block
links to 32 zero bytes.  The on-disk format is one line per block: the
hashed serialization, a unit separator, the block hash in hex, and a
newline.  Replaying the ledger through the belief module with the same
configuration reconstructs the live base exactly.
"""

from __future__ import annotations

import enum
import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from .belief import (
    BeliefBase,
    BeliefEntry,
    StatusTag,
    amend_entry,
    contract,
    retract_entry,
    status_for,
    update_belief_state,
)
from .config import EngineConfig
from .guard import MARKING_RULES, assertion_gate
from .justify import JustificationGraph
from .logic import parse

ZERO_HASH = b"\x00" * 32
LEDGER_SUFFIX = ".vlog"

_FIELD_SEP = b"\x1f"


class LedgerCorruptionError(RuntimeError):
    """The chain fails verification; appends are refused."""

    def __init__(self, index: int):
        super().__init__(f"ledger corrupt at block {index}")
        self.index = index


class ReplayError(RuntimeError):
    """A block cannot be re-applied (missing justification node)."""


class Op(enum.Enum):
    INSERT = "insert"
    CONTRACT = "contract"
    REVISE = "revise"
    RECOVERY = "recovery"
    TRACE_SEAL = "trace-seal"
    META = "meta"


@dataclass(frozen=True)
class Block:
    index: int
    timestamp: int
    op: Op
    formula: str
    justification_digest: bytes
    h_prev: bytes
    h: bytes


def block_payload(
    index: int,
    timestamp: int,
    op: Op,
    formula: str,
    justification_digest: bytes,
    h_prev: bytes,
) -> bytes:
    """The exact byte string whose SHA-256 is the block hash."""
    return _FIELD_SEP.join(
        (
            str(index).encode(),
            str(timestamp).encode(),
            op.value.encode(),
            formula.encode(),
            justification_digest.hex().encode(),
            h_prev.hex().encode(),
        )
    )


def block_hash(
    index: int,
    timestamp: int,
    op: Op,
    formula: str,
    justification_digest: bytes,
    h_prev: bytes,
) -> bytes:
    return hashlib.sha256(
        block_payload(index, timestamp, op, formula, justification_digest, h_prev)
    ).digest()


def block_line(block: Block) -> bytes:
    payload = block_payload(
        block.index,
        block.timestamp,
        block.op,
        block.formula,
        block.justification_digest,
        block.h_prev,
    )
    return payload + _FIELD_SEP + block.h.hex().encode() + b"\n"


_HEX_DIGITS = frozenset(b"0123456789abcdef")


def _strict_hex(field: bytes) -> bytes | None:
    """Decode exactly 32 bytes of lowercase hex; int() and fromhex() are
    whitespace-tolerant, which would let some byte flips slip through."""
    if len(field) != 64 or any(c not in _HEX_DIGITS for c in field):
        return None
    return bytes.fromhex(field.decode())


def _parse_line(raw: bytes) -> Block | None:
    fields = raw.split(_FIELD_SEP)
    if len(fields) != 7:
        return None
    if not fields[0].isdigit() or not fields[1].isdigit():
        return None
    digest = _strict_hex(fields[4])
    h_prev = _strict_hex(fields[5])
    h = _strict_hex(fields[6])
    if digest is None or h_prev is None or h is None:
        return None
    try:
        op = Op(fields[2].decode())
        formula = fields[3].decode()
    except (ValueError, UnicodeDecodeError):
        return None
    return Block(int(fields[0]), int(fields[1]), op, formula, digest, h_prev, h)


class Ledger:
    """Blocks in memory, mirrored to a .vlog file when a path is given."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._blocks: list[Block] = []
        self._corrupt_at: int | None = None
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        assert self.path is not None
        data = self.path.read_bytes()
        for position, raw in enumerate(data.split(b"\n")):
            if not raw:
                continue
            block = _parse_line(raw)
            if block is None:
                self._corrupt_at = position
                return
            self._blocks.append(block)

    def __len__(self) -> int:
        return len(self._blocks)

    @property
    def blocks(self) -> tuple[Block, ...]:
        return tuple(self._blocks)

    def last_hash(self) -> bytes:
        return self._blocks[-1].h if self._blocks else ZERO_HASH

    def verify_chain(self) -> int | None:
        """None when the chain is intact, else the first bad index."""
        previous = ZERO_HASH
        for position, block in enumerate(self._blocks):
            if block.index != position or block.h_prev != previous:
                return position
            expected = block_hash(
                block.index,
                block.timestamp,
                block.op,
                block.formula,
                block.justification_digest,
                block.h_prev,
            )
            if block.h != expected:
                return position
            previous = block.h
        if self._corrupt_at is not None:
            return self._corrupt_at
        return None

    def append(
        self,
        op: Op | str,
        formula: str = "",
        justification_digest: bytes = ZERO_HASH,
        timestamp: int = 0,
    ) -> Block:
        """Append one block, refusing to extend a corrupt chain."""
        bad = self.verify_chain()
        if bad is not None:
            raise LedgerCorruptionError(bad)
        op = Op(op) if isinstance(op, str) else op
        if len(justification_digest) != 32:
            raise ValueError("justification digest must be 32 bytes")
        index = len(self._blocks)
        h_prev = self.last_hash()
        h = block_hash(index, timestamp, op, formula, justification_digest, h_prev)
        block = Block(index, timestamp, op, formula, justification_digest, h_prev, h)
        self._blocks.append(block)
        if self.path is not None:
            with open(self.path, "ab") as handle:
                handle.write(block_line(block))
                handle.flush()
                os.fsync(handle.fileno())
        return block

    def contains_digest(self, digest: bytes) -> bool:
        """Whether any block anchors the given justification digest."""
        return any(b.justification_digest == digest for b in self._blocks)


def apply_block(
    base: BeliefBase,
    block: Block,
    config: EngineConfig,
    graph: JustificationGraph,
) -> BeliefBase:
    """Re-apply one block's operation to a belief base.

    insert/revise route through update_belief_state using the linked
    justification node for probability and provenance; contract runs
    partial meet contraction; recovery blocks encode one retraction
    (zero digest) or one amendment (digest of the node to adopt);
    trace-seal and meta blocks carry no belief effect.
    """
    if block.op in (Op.INSERT, Op.REVISE):
        node = graph.get(block.justification_digest.hex())
        if node is None:
            raise ReplayError(
                f"block {block.index} references unknown node "
                f"{block.justification_digest.hex()}"
            )
        probability = node.provenance.confidence
        entry = BeliefEntry(
            formula=parse(block.formula),
            probability=probability,
            provenance=node.provenance,
            status=status_for(node.rule, probability),
            justification=node.node_id,
            assertable=assertion_gate(
                probability, graph.depth(node.node_id), config
            ),
        )
        new_base, _ = update_belief_state(base, entry, theta=config.theta)
        return new_base
    if block.op == Op.CONTRACT:
        return contract(base, parse(block.formula))
    if block.op == Op.RECOVERY:
        if not block.formula:
            return base
        formula = parse(block.formula)
        if block.justification_digest == ZERO_HASH:
            return retract_entry(base, formula, "recovery")
        node = graph.get(block.justification_digest.hex())
        if node is None:
            raise ReplayError(
                f"recovery block {block.index} references unknown node"
            )
        probability = node.provenance.confidence
        if node.rule in MARKING_RULES:
            assertable = False
        else:
            assertable = assertion_gate(
                probability, graph.depth(node.node_id), config
            )
        status = (
            StatusTag.APPROXIMATE
            if node.rule in MARKING_RULES
            else status_for(node.rule, probability)
        )
        return amend_entry(
            base,
            formula,
            probability=probability,
            status=status,
            justification=node.node_id,
            assertable=assertable,
        )
    return base


def replay(
    ledger: Ledger,
    config: EngineConfig,
    graph: JustificationGraph,
    upto: int | None = None,
    initial: BeliefBase | None = None,
) -> BeliefBase:
    """Rebuild the belief base from blocks 0..upto (inclusive)."""
    bad = ledger.verify_chain()
    if bad is not None:
        raise LedgerCorruptionError(bad)
    base = initial if initial is not None else BeliefBase()
    for block in ledger.blocks:
        if upto is not None and block.index > upto:
            break
        base = apply_block(base, block, config, graph)
    return base


@dataclass(frozen=True)
class MerkleProof:
    index: int
    leaf: bytes
    path: tuple[tuple[bytes, str], ...]
    root: bytes


def _merkle_levels(leaves: list[bytes]) -> list[list[bytes]]:
    levels = [list(leaves)]
    while len(levels[-1]) > 1:
        level = levels[-1]
        parents = []
        for i in range(0, len(level), 2):
            left = level[i]
            right = level[i + 1] if i + 1 < len(level) else left
            parents.append(hashlib.sha256(left + right).digest())
        levels.append(parents)
    return levels


def merkle_root(ledger: Ledger) -> bytes:
    """Root over all block hashes; an empty ledger roots to zeros."""
    if not len(ledger):
        return ZERO_HASH
    return _merkle_levels([b.h for b in ledger.blocks])[-1][0]


def inclusion_proof(ledger: Ledger, index: int) -> MerkleProof:
    blocks = ledger.blocks
    if not 0 <= index < len(blocks):
        raise IndexError(f"no block at index {index}")
    levels = _merkle_levels([b.h for b in blocks])
    path: list[tuple[bytes, str]] = []
    position = index
    for level in levels[:-1]:
        if position % 2 == 0:
            sibling = level[position + 1] if position + 1 < len(level) else level[position]
            path.append((sibling, "right"))
        else:
            path.append((level[position - 1], "left"))
        position //= 2
    return MerkleProof(
        index=index,
        leaf=blocks[index].h,
        path=tuple(path),
        root=levels[-1][0],
    )


def verify_inclusion(proof: MerkleProof, root: bytes) -> bool:
    current = proof.leaf
    for sibling, side in proof.path:
        if side == "left":
            current = hashlib.sha256(sibling + current).digest()
        else:
            current = hashlib.sha256(current + sibling).digest()
    return current == root == proof.root


@dataclass(frozen=True)
class TruthRecord:
    formula: str
    timestamp: int
    signature: bytes
    inclusion: MerkleProof


def _record_message(formula: str, timestamp: int) -> bytes:
    return hashlib.sha256(
        formula.encode() + _FIELD_SEP + str(timestamp).encode()
    ).digest()


def sign_truth_record(
    ledger: Ledger,
    formula: str,
    timestamp: int,
    key: Ed25519PrivateKey,
) -> TruthRecord:
    """Sign a held formula and prove its block is in the ledger."""
    position = None
    for block in ledger.blocks:
        if block.formula == formula:
            position = block.index
    if position is None:
        raise ValueError(f"no block carries formula {formula!r}")
    signature = key.sign(_record_message(formula, timestamp))
    return TruthRecord(
        formula=formula,
        timestamp=timestamp,
        signature=signature,
        inclusion=inclusion_proof(ledger, position),
    )


def verify_truth_record(
    record: TruthRecord,
    public_key: Ed25519PublicKey,
    root: bytes,
) -> tuple[bool, str | None]:
    """Check signature then Merkle inclusion; names the failing check."""
    try:
        public_key.verify(
            record.signature, _record_message(record.formula, record.timestamp)
        )
    except InvalidSignature:
        return False, "signature"
    if not verify_inclusion(record.inclusion, root):
        return False, "inclusion"
    return True, None


def generate_key() -> Ed25519PrivateKey:
    return Ed25519PrivateKey.generate()


def private_key_bytes(key: Ed25519PrivateKey) -> bytes:
    from cryptography.hazmat.primitives import serialization

    return key.private_bytes(
        serialization.Encoding.Raw,
        serialization.PrivateFormat.Raw,
        serialization.NoEncryption(),
    )


def load_private_key(raw: bytes) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(raw)
