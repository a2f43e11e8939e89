"""Omniscient run verification.

The simulator calls into this module after every processed event, so a
protocol bug surfaces at the exact event that introduced it rather than
as a mysteriously wrong final report.  Everything here recomputes from
the full node snapshot; nothing trusts the protocol's own bookkeeping
beyond the raw fields.

Checked continuously:
  * conservation: the credits physically present at nodes (hold, entry
    maps, handshake escrow, executive ledgers, strandings) plus credit
    riding in-flight messages always sum to exactly the session total;
  * state shape: passive nodes hold nothing, computing nodes hold
    something;
  * role uniqueness: at most one chief executive ever, exactly one
    whenever no role handover is in flight.

Checked at announcement time: the claim must be true of the world, not
just of the executive's books.  Message-count ceilings are evaluated
against the run's own structural parameters at the end.
"""

from __future__ import annotations

from .core import NodeId, STRONG, WEAK
from .credit import Credit, ZERO, credit_sum, render_credit
from .errors import BoundsViolation, SafetyViolation
from .protocol import ACTIVE, PASSIVE, NodeState


def global_credit_sum(
    nodes: dict[NodeId, NodeState], inflight: Credit = ZERO
) -> Credit:
    return credit_sum(n.local_credit() for n in nodes.values()) + inflight


def assert_conservation(
    nodes: dict[NodeId, NodeState],
    inflight: Credit,
    total: Credit,
    when: float,
):
    got = global_credit_sum(nodes, inflight)
    if got != total:
        raise SafetyViolation(
            f"t={when:g}: credit sum {render_credit(got)} != "
            f"total {render_credit(total)}"
        )


def assert_state_invariant(nodes: dict[NodeId, NodeState]):
    for n in nodes.values():
        if n.state == PASSIVE and n.hold != ZERO:
            raise SafetyViolation(f"passive node {n.id} holds {render_credit(n.hold)}")
        if (
            n.state == ACTIVE
            and not n.settled
            and n.terminated is None
            and n.hold == ZERO
        ):
            raise SafetyViolation(f"computing node {n.id} holds nothing")


def assert_single_ce(
    nodes: dict[NodeId, NodeState], started: bool, window_open: bool
):
    holders = sorted(n.id for n in nodes.values() if n.is_ce())
    if len(holders) > 1:
        raise SafetyViolation(f"multiple chief executives: {holders}")
    if started and not window_open and not holders:
        raise SafetyViolation("no chief executive and no handover in flight")


def tree_height(nodes: dict[NodeId, NodeState]) -> int:
    """Height of the virtual tree: executive at depth 1.

    Nodes whose parent chain does not reach it count at a flat depth
    of 2.  That covers orphans and affected nodes, and also transient
    pointer cycles: a surrendered node re-activated by its own not yet
    re-parented ex-child closes a loop until the in-flight ImP or role
    parcel rewrites one edge.
    """
    in_tree = [
        n
        for n in nodes.values()
        if n.state == ACTIVE or (n.dark and n.tag is not None)
    ]
    height = 0
    for n in in_tree:
        depth = 1
        seen = {n.id}
        cur = n
        while not cur.is_ce():
            p = nodes.get(cur.parent) if cur.parent is not None else None
            if p is None or p.state != ACTIVE or p.id in seen:
                depth = 2
                break
            seen.add(p.id)
            depth += 1
            cur = p
        height = max(height, depth)
    return height


def assert_announcement(
    nodes: dict[NodeId, NodeState],
    inflight: Credit,
    mode: str,
    total: Credit,
    now: float,
    last_activity: float,
):
    """The announcement must be true of the whole world at its instant."""
    ce = [n for n in nodes.values() if n.is_ce()]
    if len(ce) != 1:
        raise SafetyViolation(f"{mode} announced with {len(ce)} executives")
    boss = ce[0]
    for n in nodes.values():
        if n.dark or n is boss:
            continue
        if n.state == ACTIVE:
            raise SafetyViolation(
                f"{mode} announced while node {n.id} is still active"
            )
    if now < last_activity:
        raise SafetyViolation(
            f"{mode} announced at t={now:g} before the computation's "
            f"last activity at t={last_activity:g}"
        )
    if mode == STRONG:
        if boss.hold != total:
            raise SafetyViolation(
                f"strong announced with {render_credit(boss.hold)} of "
                f"{render_credit(total)} in hand"
            )
        if inflight != ZERO:
            raise SafetyViolation("strong announced with credit in flight")
        for n in nodes.values():
            if n.dark and n.local_credit() != ZERO:
                raise SafetyViolation(
                    f"strong announced while dark node {n.id} holds credit"
                )
    elif mode == WEAK:
        booked = boss.hold + boss.ledger_balance()
        if booked != total:
            raise SafetyViolation(
                f"weak announced with books at {render_credit(booked)} of "
                f"{render_credit(total)}"
            )
    else:
        raise SafetyViolation(f"unknown announcement {mode!r}")


# --- message-count ceilings ---------------------------------------------------

_BOUND_EXPRS = {
    "COM": lambda p: p["N"] * p["degree"],
    "ImPC": lambda p: p["N_neighbor"] * p["N_leave"],
    "ImP": lambda p: max(0, p["N_neighbor"] - 1) * p["N_leave"],
    "AcK": lambda p: p["N_neighbor"] * p["N_leave"],
    "AAcK": lambda p: p["N_neighbor"] * p["N_leave"],
    "PaN": lambda p: p["N_neighbor"] * p["N_affected"],
    "NaP": lambda p: (p["N_neighbor"] + 1) * p["N_affected"],
}


def message_bounds_report(
    counters: dict[str, int], params: dict[str, int]
) -> dict[str, dict[str, int | bool]]:
    """Per-kind counts against their structural ceilings.

    Retries, reconciliation traffic, and the final broadcast are counted
    but not bounded; they are reported under unlimited rows.
    """
    report: dict[str, dict[str, int | bool]] = {}
    for kind, expr in _BOUND_EXPRS.items():
        bound = expr(params)
        count = counters.get(kind, 0)
        report[kind] = {"count": count, "bound": bound, "ok": count <= bound}
    for kind in ("TM", "retry", "special"):
        report[kind] = {"count": counters.get(kind, 0), "bound": -1, "ok": True}
    return report


def assert_bounds(report: dict[str, dict[str, int | bool]]):
    bad = [
        f"{kind}: {row['count']} > {row['bound']}"
        for kind, row in sorted(report.items())
        if not row["ok"]
    ]
    if bad:
        raise BoundsViolation("; ".join(bad))
