"""Simulated blockchain aggregator with reputation-elected committees.

Transactions carry serialized model updates; a committee elected by
reputation ranking verifies each block. Under the lightweight scheme a
block is split into K parts, every committee member checks one part and
cross-checks with a single uniformly chosen partner, and the block is
approved when at least the approval threshold of votes (default 51%) is
positive. Verification latency per member is

    part_kb/downlink + part_cycles/compute
        + broadcast_coeff * part_kb * 2 + part_result_kb/uplink

while the heavyweight baseline re-verifies the whole block at every
member with an N-wide broadcast term

    block_kb/downlink + block_cycles/compute
        + broadcast_coeff * block_kb * N + block_result_kb/uplink.

All latencies are analytic on a logical clock; nothing sleeps. Sizes are
kilobits, rates kbps, compute cycles and cycles/s, so every term is in
seconds. Signatures are keyed hashes standing in for wallet keys.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, replace

import numpy as np

RngStream = np.random.Generator

GENESIS_HASH = "0" * 64

KILOBITS_PER_KILOBYTE = 8.0


class ConsensusError(ValueError):
    """Base class for consensus-layer failures."""


class OverPartitionError(ConsensusError):
    """Requested more block parts than there are transactions."""


class CommitteeError(ConsensusError):
    """Committee cannot be formed as requested."""


class TamperError(ConsensusError):
    """Hash walk failed; carries the offending height."""

    def __init__(self, height: int, reason: str):
        super().__init__(f"chain invalid at height {height}: {reason}")
        self.height = height


class UnapprovedBlockError(ConsensusError):
    """Attempt to append a block that did not pass verification."""


def sign_payload(payload: bytes, key: bytes) -> str:
    """Keyed-hash stand-in for a wallet signature."""
    return hashlib.sha256(key + payload).hexdigest()


@dataclass(frozen=True)
class Transaction:
    """One model update in flight: sender, payload, simulated signature."""

    sender: str
    payload: bytes
    round_index: int
    signature: str

    @property
    def payload_kilobits(self) -> float:
        return len(self.payload) * 8.0 / 1000.0

    def digest(self) -> str:
        return hashlib.sha256(self.payload).hexdigest()

    def to_bytes(self) -> bytes:
        sender = self.sender.encode()
        return b"".join(
            [
                struct.pack("<I", len(sender)),
                sender,
                struct.pack("<I", self.round_index),
                bytes.fromhex(self.signature),
                struct.pack("<Q", len(self.payload)),
                self.payload,
            ]
        )


def make_transaction(
    sender: str, payload: bytes, round_index: int, key: bytes
) -> Transaction:
    return Transaction(sender, payload, round_index, sign_payload(payload, key))


def verify_transaction(tx: Transaction, keys: dict[str, bytes]) -> bool:
    key = keys.get(tx.sender)
    return key is not None and sign_payload(tx.payload, key) == tx.signature


def _block_content_bytes(
    height: int,
    prev_hash: str,
    transactions: tuple[Transaction, ...],
    proposer: str,
    partition_count: int,
) -> bytes:
    proposer_b = proposer.encode()
    parts = [
        struct.pack("<Q", height),
        bytes.fromhex(prev_hash),
        struct.pack("<I", len(proposer_b)),
        proposer_b,
        struct.pack("<I", partition_count),
        struct.pack("<I", len(transactions)),
    ]
    parts.extend(tx.to_bytes() for tx in transactions)
    return b"".join(parts)


def block_digest(
    height: int,
    prev_hash: str,
    transactions: tuple[Transaction, ...],
    proposer: str,
    partition_count: int,
) -> str:
    return hashlib.sha256(
        _block_content_bytes(height, prev_hash, transactions, proposer, partition_count)
    ).hexdigest()


@dataclass(frozen=True)
class Block:
    height: int
    prev_hash: str
    transactions: tuple[Transaction, ...]
    proposer: str
    partition_count: int
    hash: str

    def total_payload_kilobits(self) -> float:
        return sum(tx.payload_kilobits for tx in self.transactions)

    def to_bytes(self) -> bytes:
        return _block_content_bytes(
            self.height,
            self.prev_hash,
            self.transactions,
            self.proposer,
            self.partition_count,
        ) + bytes.fromhex(self.hash)

    @staticmethod
    def from_bytes(blob: bytes) -> "Block":
        offset = 0

        def take(n: int) -> bytes:
            nonlocal offset
            if offset + n > len(blob):
                raise ValueError("block blob truncated")
            out = blob[offset : offset + n]
            offset += n
            return out

        height = struct.unpack("<Q", take(8))[0]
        prev_hash = take(32).hex()
        (proposer_len,) = struct.unpack("<I", take(4))
        proposer = take(proposer_len).decode()
        (partition_count,) = struct.unpack("<I", take(4))
        (n_tx,) = struct.unpack("<I", take(4))
        txs = []
        for _ in range(n_tx):
            (sender_len,) = struct.unpack("<I", take(4))
            sender = take(sender_len).decode()
            (round_index,) = struct.unpack("<I", take(4))
            signature = take(32).hex()
            (payload_len,) = struct.unpack("<Q", take(8))
            payload = take(payload_len)
            txs.append(Transaction(sender, payload, round_index, signature))
        block_hash = take(32).hex()
        if offset != len(blob):
            raise ValueError("trailing bytes after block")
        return Block(height, prev_hash, tuple(txs), proposer, partition_count, block_hash)


def make_block(
    height: int,
    prev_hash: str,
    transactions: list[Transaction],
    proposer: str,
    partition_count: int,
) -> Block:
    txs = tuple(transactions)
    return Block(
        height,
        prev_hash,
        txs,
        proposer,
        partition_count,
        block_digest(height, prev_hash, txs, proposer, partition_count),
    )


@dataclass
class MinerProfile:
    """One miner's resources and rolling latency measurement."""

    miner_id: str
    compute: float  # CPU cycles/s
    uplink: float  # kbps
    downlink: float  # kbps
    measured_latency: float  # seconds; feeds the next reputation
    reputation: float = 0.0

    def __post_init__(self) -> None:
        if self.compute <= 0 or self.uplink <= 0 or self.downlink <= 0:
            raise ValueError("compute and link rates must be positive")
        if self.measured_latency < 0:
            raise ValueError("measured latency must be >= 0")


@dataclass(frozen=True)
class ConsensusParams:
    """Latency-model parameter set; sizes kilobits, compute cycles."""

    latency_threshold: float  # tau, seconds
    broadcast_coeff: float  # xi, seconds per kilobit per participating miner
    block_kilobits: float
    block_result_kilobits: float
    part_kilobits: float
    part_result_kilobits: float
    part_cpu_cycles: float
    block_cpu_cycles: float
    partition_count: int
    committee_size: int
    approval_threshold: float = 0.51

    def __post_init__(self) -> None:
        if self.latency_threshold <= 0:
            raise ValueError("latency_threshold must be > 0")
        if self.broadcast_coeff < 0:
            raise ValueError("broadcast_coeff must be >= 0")
        if self.partition_count < 1 or self.committee_size < 1:
            raise ValueError("partition_count and committee_size must be >= 1")
        if not 0.5 < self.approval_threshold <= 1.0:
            raise ValueError("approval_threshold must be in (0.5, 1]")


def vc_preset_params(
    block_kilobytes: float = 500.0,
    *,
    committee_size: int = 10,
    partition_count: int | None = None,
    result_ratio: float = 0.1,
    cycles_per_kilobit: float = 1e3,
) -> ConsensusParams:
    """Edge-network preset: 500 KB blocks, 50 KB results, xi=0.5, tau=1 s.

    Part quantities are the fair K-way shares of the block quantities.
    CPU cost scales with block size at cycles_per_kilobit.
    """
    k = committee_size if partition_count is None else partition_count
    block_kb = block_kilobytes * KILOBITS_PER_KILOBYTE
    result_kb = block_kb * result_ratio
    block_cycles = block_kb * cycles_per_kilobit
    return ConsensusParams(
        latency_threshold=1.0,
        broadcast_coeff=0.5,
        block_kilobits=block_kb,
        block_result_kilobits=result_kb,
        part_kilobits=block_kb / k,
        part_result_kilobits=result_kb / k,
        part_cpu_cycles=block_cycles / k,
        block_cpu_cycles=block_cycles,
        partition_count=k,
        committee_size=committee_size,
    )


def sample_miner_roster(n: int, rng: RngStream) -> list[MinerProfile]:
    """Draw miners from the edge-resource ranges: compute 1e3..1e6
    cycles/s, links 100..250 kbps. Initial measured latency is the
    threshold itself (reputation 0) until a first round is observed.
    """
    miners = []
    for i in range(n):
        miners.append(
            MinerProfile(
                miner_id=f"m{i:03d}",
                compute=float(rng.uniform(1e3, 1e6)),
                uplink=float(rng.uniform(100.0, 250.0)),
                downlink=float(rng.uniform(100.0, 250.0)),
                measured_latency=1.0,
            )
        )
    return miners


def reputation_score(measured_latency: float, latency_threshold: float) -> float:
    """exp(1 - T/tau) - 1: zero at the threshold, strictly decreasing."""
    if latency_threshold <= 0:
        raise ValueError("latency_threshold must be > 0")
    if measured_latency < 0:
        raise ValueError("measured latency must be >= 0")
    return math.exp(1.0 - measured_latency / latency_threshold) - 1.0


def select_miners(
    candidates: list[MinerProfile], committee_size: int, latency_threshold: float
) -> list[MinerProfile]:
    """Top committee_size candidates by recomputed reputation.

    Ties break toward the lower miner_id. The committee is ordered best
    first; the slot's block manager is taken round-robin from it.
    """
    if committee_size > len(candidates):
        raise CommitteeError(
            f"need {committee_size} miners, have {len(candidates)}"
        )
    for miner in candidates:
        miner.reputation = reputation_score(miner.measured_latency, latency_threshold)
    ranked = sorted(candidates, key=lambda m: (-m.reputation, m.miner_id))
    return ranked[:committee_size]


@dataclass(frozen=True)
class BlockPart:
    """Contiguous slice of a block's transactions plus its random tag."""

    index: int
    transactions: tuple[Transaction, ...]
    tag: int


def partition_block(block: Block, parts: int, rng: RngStream) -> list[BlockPart]:
    """Split transactions into `parts` contiguous slices, sizes within 1.

    Each part carries a unique random tag. Raises OverPartitionError when
    parts exceed the transaction count; callers must reduce K.
    """
    if parts < 1:
        raise ValueError("parts must be >= 1")
    n = len(block.transactions)
    if parts > n:
        raise OverPartitionError(f"cannot split {n} transactions into {parts} parts")
    tags = rng.permutation(parts * 1000)[:parts]
    base, extra = divmod(n, parts)
    out, start = [], 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        out.append(
            BlockPart(i, block.transactions[start : start + size], int(tags[i]))
        )
        start += size
    return out


def por_latency(miner: MinerProfile, params: ConsensusParams) -> float:
    """Per-member verification latency of the lightweight scheme.

    The broadcast term covers the pairwise cross-check, hence the
    participant count 2.
    """
    return (
        params.part_kilobits / miner.downlink
        + params.part_cpu_cycles / miner.compute
        + params.broadcast_coeff * params.part_kilobits * 2.0
        + params.part_result_kilobits / miner.uplink
    )


def dpos_latency(
    miner: MinerProfile, params: ConsensusParams, committee_size: int
) -> float:
    """Per-member latency of whole-block repeated verification; all
    committee_size miners join the broadcast."""
    return (
        params.block_kilobits / miner.downlink
        + params.block_cpu_cycles / miner.compute
        + params.broadcast_coeff * params.block_kilobits * float(committee_size)
        + params.block_result_kilobits / miner.uplink
    )


@dataclass(frozen=True)
class VerifyResult:
    approved: bool
    votes: dict[str, bool]
    latency: float


def por_verify(
    block: Block,
    committee: list[MinerProfile],
    params: ConsensusParams,
    rng: RngStream,
    *,
    keys: dict[str, bytes] | None = None,
    honesty: dict[str, str] | None = None,
) -> VerifyResult:
    """Partition, per-member check, single cross-check, threshold vote.

    Each member checks its assigned part (signatures against registered
    keys when provided, plus block digest integrity) and exchanges the
    outcome with one uniformly chosen other member; an honest vote is
    positive only if both outcomes are clean. Vote policies: "honest"
    (default), "negative", "positive". Members verify in parallel, so
    the round latency is the slowest member's.
    """
    if len(committee) < 2:
        raise CommitteeError("cross-checking needs a committee of at least 2")
    honesty = honesty or {}
    parts = partition_block(block, max(block.partition_count, 1), rng)

    digest_ok = block.hash == block_digest(
        block.height, block.prev_hash, block.transactions, block.proposer,
        block.partition_count,
    )
    outcomes = []
    for i in range(len(committee)):
        part = parts[i % len(parts)]
        part_ok = digest_ok
        if keys is not None:
            part_ok = part_ok and all(verify_transaction(tx, keys) for tx in part.transactions)
        outcomes.append(part_ok)

    votes: dict[str, bool] = {}
    for i, miner in enumerate(committee):
        partner = int(rng.integers(0, len(committee) - 1))
        if partner >= i:
            partner += 1
        policy = honesty.get(miner.miner_id, "honest")
        if policy == "negative":
            votes[miner.miner_id] = False
        elif policy == "positive":
            votes[miner.miner_id] = True
        else:
            votes[miner.miner_id] = outcomes[i] and outcomes[partner]

    positive = sum(votes.values())
    approved = positive / len(committee) >= params.approval_threshold
    latency = max(por_latency(m, params) for m in committee)
    return VerifyResult(approved, votes, latency)


class Ledger:
    """Hash-linked block list rooted at a deterministic genesis."""

    def __init__(self) -> None:
        self.blocks: list[Block] = [
            make_block(0, GENESIS_HASH, [], "genesis", 0)
        ]
        self.annotations: dict[int, dict] = {}

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return self.head.height

    def __len__(self) -> int:
        return len(self.blocks)


def append_block(
    ledger: Ledger,
    block: Block,
    verdict: VerifyResult,
    *,
    annotation: dict | None = None,
) -> Ledger:
    """Extend the ledger with an approved block; re-validates the walk."""
    if not verdict.approved:
        raise UnapprovedBlockError("block was not approved by the committee")
    if block.prev_hash != ledger.head.hash:
        raise TamperError(block.height, "prev_hash does not match ledger head")
    if block.height != ledger.head.height + 1:
        raise TamperError(block.height, "height does not extend the head")
    ledger.blocks.append(block)
    if annotation is not None:
        ledger.annotations[block.height] = annotation
    verify_chain(ledger)
    return ledger


def verify_chain(ledger: Ledger) -> None:
    """Walk genesis to head, re-deriving every digest and link."""
    if not ledger.blocks:
        raise TamperError(0, "empty chain")
    for i, block in enumerate(ledger.blocks):
        expected = block_digest(
            block.height,
            block.prev_hash,
            block.transactions,
            block.proposer,
            block.partition_count,
        )
        if block.hash != expected:
            raise TamperError(block.height, "stored hash does not match contents")
        if i == 0:
            if block.prev_hash != GENESIS_HASH:
                raise TamperError(block.height, "bad genesis link")
        else:
            if block.prev_hash != ledger.blocks[i - 1].hash:
                raise TamperError(block.height, "broken link to previous block")
        if block.height != i:
            raise TamperError(block.height, "non-contiguous height")


def chain_is_valid(ledger: Ledger) -> bool:
    try:
        verify_chain(ledger)
        return True
    except TamperError:
        return False


def derive_block_params(params: ConsensusParams, block: Block) -> ConsensusParams:
    """Re-size the latency model to the actual block payload.

    Part quantities are the fair K-way shares of the block's effective
    partition count: part = block/K for size, result size, and CPU alike.
    """
    k = max(block.partition_count, 1)
    block_kb = block.total_payload_kilobits()
    return replace(
        params,
        block_kilobits=block_kb,
        part_kilobits=block_kb / k,
        part_result_kilobits=params.block_result_kilobits / k,
        part_cpu_cycles=params.block_cpu_cycles / k,
    )


@dataclass(frozen=True)
class RoundOutcome:
    block: Block
    approved: bool
    votes: dict[str, bool]
    por_latency_s: float
    dpos_latency_s: float


def run_consensus_round(
    pending: list[Transaction],
    miners: list[MinerProfile],
    params: ConsensusParams,
    rng: RngStream,
    ledger: Ledger,
    *,
    keys: dict[str, bytes] | None = None,
    honesty: dict[str, str] | None = None,
    slot: int = 0,
) -> RoundOutcome:
    """Elect a committee, build and verify one block, append on approval.

    Returns the lightweight round latency and the whole-block
    counterfactual on the same committee. Committee members' measured
    latencies are refreshed from this round, feeding the next election.
    """
    if not pending:
        raise ConsensusError("no pending transactions")
    committee = select_miners(miners, params.committee_size, params.latency_threshold)
    manager = committee[slot % len(committee)]
    block = make_block(
        ledger.head.height + 1,
        ledger.head.hash,
        pending,
        manager.miner_id,
        min(params.partition_count, len(pending)),
    )
    sized = derive_block_params(params, block)
    verdict = por_verify(block, committee, sized, rng, keys=keys, honesty=honesty)
    dpos = max(dpos_latency(m, sized, len(committee)) for m in committee)
    for member in committee:
        member.measured_latency = por_latency(member, sized)
        member.reputation = reputation_score(
            member.measured_latency, params.latency_threshold
        )
    outcome = RoundOutcome(block, verdict.approved, verdict.votes, verdict.latency, dpos)
    if verdict.approved:
        append_block(
            ledger,
            block,
            verdict,
            annotation={
                "votes": {k: bool(v) for k, v in verdict.votes.items()},
                "por_latency_s": verdict.latency,
                "dpos_latency_s": dpos,
            },
        )
    return outcome


def export_chain_jsonl(ledger: Ledger, path) -> None:
    """One JSON object per block: heights, links, tx digests, votes,
    latencies (when annotated)."""
    with open(path, "w") as fh:
        for block in ledger.blocks:
            note = ledger.annotations.get(block.height, {})
            record = {
                "height": block.height,
                "prev_hash": block.prev_hash,
                "hash": block.hash,
                "proposer": block.proposer,
                "partition_count": block.partition_count,
                "tx_digests": [tx.digest() for tx in block.transactions],
                "tx_senders": [tx.sender for tx in block.transactions],
                "votes": note.get("votes"),
                "por_latency_s": note.get("por_latency_s"),
                "dpos_latency_s": note.get("dpos_latency_s"),
            }
            fh.write(json.dumps(record, sort_keys=True) + "\n")
