"""Identifiers, session tags, and the full message vocabulary.

Everything here is an immutable value object: safe to copy, hash, and
embed in trace lines.  Message payload rendering (``describe``) is the
canonical wire text used by traces, so it must stay deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import ClassVar

from .credit import Credit, ZERO, credit_sum, render_credit

NodeId = int
ChannelId = int

# Surrender parcels are identified by (origin node, per-origin sequence);
# AcK/AAcK quote the parcel they acknowledge so a node can keep several
# handshakes in flight at once.
Parcel = tuple[NodeId, int]

STRONG = "strong"
WEAK = "weak"


def render_parcel(p: Parcel) -> str:
    return f"{p[0]}.{p[1]}"


@dataclass(frozen=True, order=True)
class SessionTag:
    """Computation identity: ordered lexicographically by (session, initiator)."""

    session: int
    initiator: NodeId

    def __str__(self) -> str:
        return f"{self.session}:{self.initiator}"


def is_stale(msg_tag: SessionTag, local_tag: SessionTag) -> bool:
    """True iff the message belongs to a session the receiver already left behind.

    Strictly-less comparison: equal tags are live, and a *newer* tag is
    never stale (it supersedes the receiver instead).
    """
    return msg_tag < local_tag


@dataclass(frozen=True)
class Message:
    tag: SessionTag

    kind: ClassVar[str] = "?"

    def describe(self) -> str:
        return self.kind

    def carried_credit(self) -> Credit:
        """Physical credit riding this message (conservation accounting)."""
        return ZERO


@dataclass(frozen=True)
class COM(Message):
    """Computation distribution; also used (flagged) for ledger refunds."""

    credit: Credit = ZERO
    refund: bool = False

    kind: ClassVar[str] = "COM"

    def describe(self) -> str:
        suffix = ",refund" if self.refund else ""
        return f"COM({render_credit(self.credit)}{suffix})"

    def carried_credit(self) -> Credit:
        return self.credit


# child_map rows: (child, credit granted to it)
ChildMap = tuple[tuple[NodeId, Credit], ...]
# ledger rows: (reporter, affected, physical in-part, mirrored out-part)
LedgerRows = tuple[tuple[NodeId, NodeId, Credit, Credit], ...]


@dataclass(frozen=True)
class ImPC(Message):
    """Passive-with-credit surrender: opens a three-way handshake.

    b counts the active tree-children being re-parented to the target and
    child_map carries their exact out-entries (the count alone cannot
    support the receiver's out-merge).  handover marks a chief-executive
    role transfer; only then do the two PU ledgers ride along.
    """

    credit: Credit = ZERO
    b: int = 0
    child_map: ChildMap = ()
    parcel: Parcel = (0, 0)
    handover: bool = False
    ledger: LedgerRows = ()

    kind: ClassVar[str] = "ImPC"

    def describe(self) -> str:
        parts = [render_credit(self.credit), f"b={self.b}"]
        if self.child_map:
            rows = ";".join(f"{n}>{render_credit(c)}" for n, c in self.child_map)
            parts.append(f"children[{rows}]")
        parts.append(f"parcel={render_parcel(self.parcel)}")
        if self.handover:
            parts.append("handover")
        if self.ledger:
            rows = ";".join(
                f"{r}:{a}:{render_credit(i)}:{render_credit(o)}"
                for r, a, i, o in self.ledger
            )
            parts.append(f"ledger[{rows}]")
        return f"ImPC({','.join(parts)})"

    def carried_credit(self) -> Credit:
        # Mirrored out-parts are claims, not credit; only in-parts ride.
        return self.credit + credit_sum(i for _, _, i, _ in self.ledger)


@dataclass(frozen=True)
class ImP(Message):
    """Passive without credit: tells the receiver its new parent is p."""

    p: NodeId = 0

    kind: ClassVar[str] = "ImP"

    def describe(self) -> str:
        return f"ImP({self.p})"


@dataclass(frozen=True)
class AcK(Message):
    parcel: Parcel = (0, 0)

    kind: ClassVar[str] = "AcK"

    def describe(self) -> str:
        return f"AcK({render_parcel(self.parcel)})"


@dataclass(frozen=True)
class AAcK(Message):
    parcel: Parcel = (0, 0)

    kind: ClassVar[str] = "AAcK"

    def describe(self) -> str:
        return f"AAcK({render_parcel(self.parcel)})"


@dataclass(frozen=True)
class TM(Message):
    """Termination announcement, strong or weak."""

    mode: str = STRONG

    kind: ClassVar[str] = "TM"

    def describe(self) -> str:
        return f"TM({self.mode})"


@dataclass(frozen=True)
class PaN(Message):
    """Affected-node report to the chief executive.

    The reporter's in-entry for the affected node rides physically (the
    reporter clears it); the out-entry is a mirror of credit stranded at
    the affected node, a claim rather than cargo.
    """

    affected: NodeId = 0
    in_credit: Credit = ZERO
    out_credit: Credit = ZERO

    kind: ClassVar[str] = "PaN"

    def describe(self) -> str:
        return (
            f"PaN({self.affected},in={render_credit(self.in_credit)},"
            f"out={render_credit(self.out_credit)})"
        )

    def carried_credit(self) -> Credit:
        return self.in_credit


@dataclass(frozen=True)
class NaP(Message):
    """Recovery report: the affected node is back on the air."""

    recovered: NodeId = 0

    kind: ClassVar[str] = "NaP"

    def describe(self) -> str:
        return f"NaP({self.recovered})"


@dataclass(frozen=True)
class SpecialForward(Message):
    """Handshake-reconciliation cargo to the chief executive.

    Sent by a receiver whose AAcK never arrived: the absorbed parcel
    credit is extracted from hold and shipped here, keyed by parcel so
    the chief executive can reconcile duplicates exactly once.
    """

    credit: Credit = ZERO
    origin: NodeId = 0
    parcel: Parcel = (0, 0)

    kind: ClassVar[str] = "SpecialForward"

    def describe(self) -> str:
        return (
            f"SpecialForward({render_credit(self.credit)},from={self.origin},"
            f"parcel={render_parcel(self.parcel)})"
        )

    def carried_credit(self) -> Credit:
        return self.credit


@dataclass(frozen=True)
class SpecialReclaim(Message):
    """Request to get one's ledgered credit back after a node recovered."""

    affected: NodeId = 0

    kind: ClassVar[str] = "SpecialReclaim"

    def describe(self) -> str:
        return f"SpecialReclaim({self.affected})"


# Delivery priority: acknowledgements outrank everything else so the
# handshake behaves near-atomically; all other kinds share one class.
def priority_class(msg: Message) -> int:
    return 0 if isinstance(msg, (AcK, AAcK)) else 1
