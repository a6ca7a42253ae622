"""Leakage verification and location-privacy attack oracles.

``check_leakage`` scans the per-entity view logs of a run and verdicts
each entity against what the protocol permits it to learn:

* a user sees opaque ciphertexts and its own plaintexts, nothing else;
* the fusion center sees opaque ciphertexts and the vote bits;
* the gateway sees opaque ciphertexts, OPE ciphertexts it may order-
  compare, and the vote bits it computed itself;
* nobody's log may contain the detection threshold, another user's RSS
  plaintext, or key material of a pair it does not belong to.

The module also hosts a deliberately naive soft-fusion baseline (users
send their RSS readings to the fusion center, which averages them against
the threshold). The baseline exists as an attack target: the SRLP oracle
shows every reporter's RSS exposed at the fusion center, and the DLP
oracle recovers a joining/leaving user's RSS from the change in the
aggregate, neither of which is possible against the voting protocol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from lp3pss.crypto import aead_decrypt, aead_encrypt, derive_pairwise_keys
from lp3pss.recording import (
    AEAD_DEC,
    AEAD_ENC,
    FC_NAME,
    GW_NAME,
    Recorder,
    ViewEvent,
    ViewLog,
    ViewTag,
    user_name,
)
from lp3pss.scenario import ChannelModel

BASELINE = "baseline"
LP3PSS = "lp3pss"

CONFORMS = "conforms"
VIOLATES = "violates"


@dataclass(frozen=True)
class Violation:
    entity: str
    event: ViewEvent
    reason: str


@dataclass(frozen=True)
class LeakageReport:
    verdicts: dict[str, str]
    violations: tuple[Violation, ...]

    @property
    def conforms(self) -> bool:
        return not self.violations


def _uid_of(entity: str) -> int | None:
    if entity.startswith("U") and entity[1:].isdigit():
        return int(entity[1:])
    return None


def _violation_reason(entity: str, event: ViewEvent) -> str | None:
    """Why this event is not allowed in this entity's view, or None."""
    tag = event.tag
    meta = event.meta
    if tag is ViewTag.OPAQUE_CIPHERTEXT:
        return None
    if tag is ViewTag.KEY_MATERIAL:
        parties = meta.get("parties", [])
        if entity not in parties:
            return "key material of a pair the entity does not belong to"
        return None
    if meta.get("kind") == "tau" and tag is ViewTag.PLAINTEXT_VALUE:
        return "detection threshold in plaintext"
    uid = _uid_of(entity)
    if uid is not None:
        if tag is ViewTag.PLAINTEXT_VALUE:
            if meta.get("kind") == "rss" and meta.get("user") == uid:
                return None
            return "plaintext value that is not the user's own RSS"
        return f"{tag.value} in a user view"
    if entity == FC_NAME:
        if tag is ViewTag.PLAINTEXT_BIT:
            return None
        return f"{tag.value} in the fusion center view"
    if entity == GW_NAME:
        if tag in (ViewTag.OPE_ORDER_PAIR, ViewTag.PLAINTEXT_BIT):
            return None
        return f"{tag.value} in the gateway view"
    return f"unknown entity {entity!r}"


def check_leakage(logs: dict[str, ViewLog]) -> LeakageReport:
    """Verdict every entity's view against the permitted-knowledge rules.

    Requires a complete transcript: logs for the fusion center, the
    gateway and at least one user, covering at least one decided round.
    """
    if FC_NAME not in logs or GW_NAME not in logs:
        raise ValueError("incomplete transcript: missing fusion center or gateway log")
    if not any(_uid_of(entity) is not None for entity in logs):
        raise ValueError("incomplete transcript: no user logs")
    decided = any(
        event.meta.get("op") == AEAD_DEC for event in logs[FC_NAME]
    )
    if not decided:
        raise ValueError("incomplete transcript: no decided round")
    verdicts: dict[str, str] = {}
    violations: list[Violation] = []
    for entity in sorted(logs):
        entity_violations = []
        for event in logs[entity]:
            reason = _violation_reason(entity, event)
            if reason is not None:
                entity_violations.append(Violation(entity, event, reason))
        verdicts[entity] = VIOLATES if entity_violations else CONFORMS
        violations.extend(entity_violations)
    return LeakageReport(verdicts, tuple(violations))


def srlp_exposure(logs: dict[str, ViewLog], scheme: str) -> set[int]:
    """Users whose RSS plaintext appears in some other entity's view.

    The baseline exposes every reporter to the fusion center; the voting
    protocol exposes nobody.
    """
    if scheme not in (BASELINE, LP3PSS):
        raise ValueError(f"unknown scheme {scheme!r}")
    exposed: set[int] = set()
    for entity, log in logs.items():
        own = _uid_of(entity)
        for event in log:
            if event.tag is ViewTag.PLAINTEXT_VALUE and event.meta.get("kind") == "rss":
                uid = event.meta.get("user")
                if uid is not None and uid != own:
                    exposed.add(uid)
    return exposed


# ---------------------------------------------------------------------------
# differential (join/leave) attack oracle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AggView:
    """What an attacker sees of one round: the roster, and the RSS
    aggregate if any entity's view contained one (None otherwise)."""

    roster: frozenset[int]
    rss_sum: int | None


@dataclass(frozen=True)
class DlpResult:
    recovered: int | None  # exact RSS of the target, or None
    aggregate_delta: int | None  # |sum_before - sum_after| when sums exist
    reason: str


def dlp_attack_oracle(before: AggView, after: AggView, target: int) -> DlpResult:
    """Try to recover the RSS of a user joining/leaving between two rounds.

    Succeeds only when the rosters differ by exactly the target and both
    rounds exposed an aggregate; with several simultaneous changes only
    the group sum is determined. The caller must name a user that actually
    changed sides.
    """
    diff = before.roster ^ after.roster
    if target not in diff:
        raise ValueError(f"user {target} did not join or leave between the rounds")
    if before.rss_sum is None or after.rss_sum is None:
        return DlpResult(None, None, "no RSS aggregate in any entity view")
    delta = abs(before.rss_sum - after.rss_sum)
    if diff != {target}:
        return DlpResult(None, delta, f"{len(diff)} users changed; only the group sum is determined")
    return DlpResult(delta, delta, "aggregate difference isolates the target")


def agg_view_from_logs(logs: dict[str, ViewLog], round_: int, roster: set[int]) -> AggView:
    """Attacker's view of one round, derived honestly from the logs.

    Scans every entity view for an RSS aggregate exposed in that round;
    the voting protocol never produces one.
    """
    rss_sum: int | None = None
    for log in logs.values():
        for event in log:
            if (
                event.round == round_
                and event.tag is ViewTag.PLAINTEXT_VALUE
                and event.meta.get("kind") == "rss_sum"
            ):
                rss_sum = event.meta["value"]
    return AggView(frozenset(roster), rss_sum)


# ---------------------------------------------------------------------------
# naive aggregation baseline (attack target and error-rate comparator)
# ---------------------------------------------------------------------------


@dataclass
class BaselineRound:
    round: int
    roster: tuple[int, ...]
    rss_sum: int
    decision: int


@dataclass
class BaselineResult:
    """Transcript of the naive soft-fusion scheme: users send their RSS
    to the fusion center over the authenticated channel; the fusion
    center averages the plaintexts against the threshold."""

    rounds: list[BaselineRound] = field(default_factory=list)
    recorder: Recorder = field(default_factory=Recorder)

    def view_logs(self) -> dict[str, ViewLog]:
        return self.recorder.view_logs

    def round_view(self, round_: int) -> AggView:
        row = next(r for r in self.rounds if r.round == round_)
        return AggView(frozenset(row.roster), row.rss_sum)


def run_baseline(
    tau: int,
    rounds: list[tuple[set[int], dict[int, int]]],
    master_seed: bytes,
) -> BaselineResult:
    """Run the aggregation baseline over explicit per-round reports.

    ``rounds`` lists (roster, reported RSS per user) pairs; the caller
    controls churn by varying the roster. The fusion center decides busy
    when the average reported RSS is at least the threshold.
    """
    all_users = sorted({uid for roster, _ in rounds for uid in roster})
    keys = derive_pairwise_keys(master_seed, ["FC", "GW", *all_users])
    result = BaselineResult()
    rec = result.recorder
    rec.set_phase("sensing")
    for t, (roster, reports) in enumerate(rounds, start=1):
        rec.start_round(t)
        total = 0
        for uid in sorted(roster):
            rss = reports[uid]
            me = user_name(uid)
            rec.observe(me, ViewTag.PLAINTEXT_VALUE, "local", {"kind": "rss", "user": uid, "value": rss})
            body = aead_encrypt(keys.fc_user[uid], rss.to_bytes(4, "big"), b"BASELINE_REPORT")
            rec.crypto_op(me, AEAD_ENC, ViewTag.OPAQUE_CIPHERTEXT, body.wire_size, {"user": uid})
            rec.message_sent(me, FC_NAME, body.wire_size, {"phase": "BASELINE_REPORT", "subject": uid})
            rec.message_delivered(me, FC_NAME, body.wire_size, {"phase": "BASELINE_REPORT", "subject": uid})
            plain = aead_decrypt(keys.fc_user[uid], body, b"BASELINE_REPORT")
            value = int.from_bytes(plain, "big")
            rec.crypto_op(
                FC_NAME,
                AEAD_DEC,
                ViewTag.PLAINTEXT_VALUE,
                body.wire_size,
                {"kind": "rss", "user": uid, "value": value},
            )
            total += value
        decision = 1 if roster and total / len(roster) >= tau else 0
        rec.observe(FC_NAME, ViewTag.PLAINTEXT_VALUE, "computed", {"kind": "rss_sum", "value": total})
        result.rounds.append(BaselineRound(t, tuple(sorted(roster)), total, decision))
    return result


def build_dlp_scenario(
    n: int,
    target: int,
    seed: int,
    model: ChannelModel,
    tau: int,
    leave: bool = True,
) -> tuple[BaselineResult, int]:
    """Frozen two-round churn scenario against the baseline.

    Every non-target RSS is held constant across the membership boundary,
    so the aggregate difference equals the target's reading exactly.
    Returns the baseline transcript and the target's true RSS.
    """
    if not 1 <= target <= n:
        raise ValueError("target must be one of the n users")
    rng = np.random.default_rng(seed)
    rss = {uid: int(rng.integers(0, model.quant.domain_max + 1)) for uid in range(1, n + 1)}
    full = set(range(1, n + 1))
    without = full - {target}
    rosters = [(full, rss), (without, rss)] if leave else [(without, rss), (full, rss)]
    result = run_baseline(tau, rosters, master_seed=seed.to_bytes(32, "big"))
    return result, rss[target]


# ---------------------------------------------------------------------------
# injected-violation mutants for checker sensitivity tests
# ---------------------------------------------------------------------------


def inject_event(
    logs: dict[str, ViewLog],
    entity: str,
    tag: ViewTag,
    meta: dict,
    round_: int = 1,
) -> dict[str, ViewLog]:
    """Copy the logs and append one foreign observation at ``entity``."""
    mutated = {name: ViewLog(name, list(log.events)) for name, log in logs.items()}
    mutated.setdefault(entity, ViewLog(entity)).append(
        ViewEvent(round_, entity, "received", tag, 0, meta)
    )
    return mutated
