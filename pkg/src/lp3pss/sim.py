"""Deterministic round-based simulation driver and conformance checks.

A run executes initialization once, then a fixed number of sensing
periods; membership churn is applied between periods. Everything an
entity does or observes lands in the run's recorder, so the resulting
report carries operation counts, per-link traffic, reputation
trajectories, empirical error rates and the leakage verdict, and is a
pure function of (config, seed): two runs with the same config produce
byte-identical reports and transcripts.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

from lp3pss import costs
from lp3pss.entities import (
    FcState,
    GwState,
    ProtocolMessage,
    RoundResult,
    SuState,
    fc_decide,
    fc_init,
    gw_compare,
    gw_init,
    gw_ingest_init,
    handle_membership,
    make_su_states,
    su_sense_report,
)
from lp3pss.crypto import KeyTable, derive_pairwise_keys
from lp3pss.fusion import DetectionProfile
from lp3pss.observability import LeakageReport, check_leakage
from lp3pss.recording import (
    AEAD_DEC,
    AEAD_ENC,
    FC_NAME,
    GW_NAME,
    OPE_ENC,
    PHASE_INIT,
    PHASE_MEMBERSHIP,
    PHASE_SENSING,
    Recorder,
    user_name,
)
from lp3pss.scenario import (
    AdversaryProfile,
    Behavior,
    ChannelModel,
    ChurnConfig,
    CountRange,
    PU_PRESENT,
    Quantization,
    apply_malice,
    calibrate_channel,
    churn_step,
    generate_rss,
    spawn_rngs,
)


class ConfigError(ValueError):
    """Invalid simulation config; the message names the offending field."""


@dataclass(frozen=True)
class SensingConfig:
    n: int
    rounds: int
    seed: int
    p_f: float = 0.1
    p_m: float = 0.1
    tau: int | None = None  # None: calibrated from the channel model
    busy_prob: float = 0.5
    report_loss_prob: float = 0.0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ConfigError("sensing.n: must be >= 1")
        if self.rounds < 1:
            raise ConfigError("sensing.rounds: must be >= 1")
        if not 0 <= self.seed < 2**63:
            raise ConfigError("sensing.seed: must lie in [0, 2^63)")
        if not 0.0 <= self.busy_prob <= 1.0:
            raise ConfigError("sensing.busy_prob: must lie in [0, 1]")
        if not 0.0 <= self.report_loss_prob < 1.0:
            raise ConfigError("sensing.report_loss_prob: must lie in [0, 1)")

    @property
    def profile(self) -> DetectionProfile:
        try:
            return DetectionProfile(self.p_f, self.p_m)
        except ValueError as exc:
            raise ConfigError(f"sensing.p_f/p_m: {exc}") from exc


@dataclass(frozen=True)
class CryptoParams:
    domain_bits: int = 16
    range_bits: int = 32

    def __post_init__(self) -> None:
        if not 1 <= self.domain_bits <= 32:
            raise ConfigError("crypto.domain_bits: must lie in [1, 32]")
        if self.range_bits < self.domain_bits + 8 or self.range_bits > 63:
            raise ConfigError("crypto.range_bits: must lie in [domain_bits + 8, 63]")


@dataclass(frozen=True)
class ChannelSpec:
    """Raw channel section; sigma/tau may be left for calibration."""

    mu0: float = 2000.0
    mu1: float = 4000.0
    sigma: float | None = None
    min_dbm: float = -110.0
    step_dbm: float = 0.01


@dataclass(frozen=True)
class SimulationConfig:
    sensing: SensingConfig
    channel: ChannelSpec = ChannelSpec()
    churn: ChurnConfig = ChurnConfig()
    adversary: AdversaryProfile = AdversaryProfile()
    crypto: CryptoParams = CryptoParams()

    def resolve_channel(self) -> tuple[ChannelModel, int]:
        """Concrete channel model and threshold, calibrating as needed."""
        quant = Quantization(self.channel.min_dbm, self.channel.step_dbm, self.crypto.domain_bits)
        if self.channel.sigma is None:
            model, tau_cal = calibrate_channel(
                self.sensing.p_f, self.sensing.p_m, self.channel.mu0, self.channel.mu1, quant
            )
        else:
            model = ChannelModel(self.channel.mu0, self.channel.mu1, self.channel.sigma, quant)
            tau_cal = round(model.midpoint)
        tau = self.sensing.tau if self.sensing.tau is not None else tau_cal
        for name, value in (("channel.mu0", self.channel.mu0), ("channel.mu1", self.channel.mu1)):
            if not 0 <= value <= quant.domain_max:
                raise ConfigError(f"{name}: {value} outside the {quant.domain_bits}-bit grid")
        if not 0 <= tau <= quant.domain_max:
            raise ConfigError(f"sensing.tau: {tau} outside the {quant.domain_bits}-bit grid")
        return model, tau


def _require_keys(section: dict, allowed: set[str], path: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}: unknown field")


def config_from_dict(raw: dict) -> SimulationConfig:
    """Parse the JSON config structure, naming the field on any problem.

    Sections: sensing (required), channel, churn, adversary, crypto,
    output (output holds file paths and is consumed by the CLI).
    """
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    _require_keys(raw, {"sensing", "channel", "churn", "adversary", "crypto", "output"}, "config")
    if "sensing" not in raw:
        raise ConfigError("sensing: section is required")

    def build(cls, section: Any, path: str, **extra):
        if not isinstance(section, dict):
            raise ConfigError(f"{path}: expected an object")
        names = set(cls.__dataclass_fields__)
        _require_keys(section, names - set(extra), path)
        try:
            return cls(**{**section, **extra})
        except ConfigError:
            raise
        except TypeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    sensing = build(SensingConfig, raw["sensing"], "sensing")
    channel = build(ChannelSpec, raw.get("channel", {}), "channel")
    crypto_params = build(CryptoParams, raw.get("crypto", {}), "crypto")

    churn_raw = dict(raw.get("churn", {}))
    _require_keys(churn_raw, {"mu", "join", "leave"}, "churn")
    for key in ("join", "leave"):
        if key in churn_raw:
            bounds = churn_raw.pop(key)
            if not (isinstance(bounds, (list, tuple)) and len(bounds) == 2):
                raise ConfigError(f"churn.{key}: expected [lo, hi]")
            churn_raw[f"{key}_count"] = CountRange(*bounds)
    try:
        churn = ChurnConfig(**churn_raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"churn: {exc}") from exc

    adversary_raw = raw.get("adversary", {})
    if not isinstance(adversary_raw, dict):
        raise ConfigError("adversary: expected an object mapping user id to behavior")
    behaviors: dict[int, Behavior] = {}
    for uid_str, spec in adversary_raw.items():
        path = f"adversary.{uid_str}"
        try:
            uid = int(uid_str)
        except ValueError as exc:
            raise ConfigError(f"{path}: user id must be an integer") from exc
        if not isinstance(spec, dict) or "kind" not in spec:
            raise ConfigError(f"{path}: expected an object with a 'kind' field")
        _require_keys(spec, {"kind", "flip_prob", "stuck_bit"}, path)
        try:
            behaviors[uid] = Behavior(**spec)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{path}: {exc}") from exc

    return SimulationConfig(sensing, channel, churn, AdversaryProfile(behaviors), crypto_params)


def master_seed_bytes(seed: int) -> bytes:
    return hashlib.sha256(b"lp3pss-master-key|" + seed.to_bytes(8, "big")).digest()


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoundRecord:
    t: int
    truth: int
    joins: tuple[int, ...]
    leaves: tuple[int, ...]
    roster: tuple[int, ...]
    reported_rss: dict[int, int]  # post-adversary values, keyed by user
    delivered: tuple[int, ...]
    result: RoundResult
    phi: dict[int, float]

    @property
    def beta(self) -> int:
        return len(self.joins)


@dataclass
class SimulationResult:
    config: SimulationConfig
    model: ChannelModel
    tau: int
    rounds: list[RoundRecord]
    fc: FcState
    gw: GwState
    sus: dict[int, SuState]
    keys: KeyTable
    recorder: Recorder
    leakage: LeakageReport

    def report_dict(self) -> dict:
        sensing = self.config.sensing
        rates = estimate_error_rates(self.rounds)
        rounds = [
            {
                "t": r.t,
                "truth": r.truth,
                "decision": r.result.outcome.decision,
                "vote_sum": r.result.outcome.vote_sum,
                "lambda": r.result.outcome.lam,
                "n_live": r.result.n_live,
                "beta": r.beta,
                "joins": list(r.joins),
                "leaves": list(r.leaves),
                "present": list(r.result.present),
                "bits": {str(u): b for u, b in sorted(r.result.bits.items())},
            }
            for r in self.rounds
        ]
        return {
            "config": {
                "sensing": {
                    "n": sensing.n,
                    "rounds": sensing.rounds,
                    "seed": sensing.seed,
                    "p_f": sensing.p_f,
                    "p_m": sensing.p_m,
                    "tau": self.tau,
                    "busy_prob": sensing.busy_prob,
                    "report_loss_prob": sensing.report_loss_prob,
                },
                "channel": {
                    "mu0": self.model.mu0,
                    "mu1": self.model.mu1,
                    "sigma": self.model.sigma,
                    "min_dbm": self.model.quant.min_dbm,
                    "step_dbm": self.model.quant.step_dbm,
                },
                "churn": {
                    "mu": self.config.churn.mu,
                    "join": [self.config.churn.join_count.lo, self.config.churn.join_count.hi],
                    "leave": [self.config.churn.leave_count.lo, self.config.churn.leave_count.hi],
                },
                "adversary": {
                    str(u): {"kind": b.kind, "flip_prob": b.flip_prob, "stuck_bit": b.stuck_bit}
                    for u, b in sorted(self.config.adversary.behaviors.items())
                },
                "crypto": {
                    "domain_bits": self.config.crypto.domain_bits,
                    "range_bits": self.config.crypto.range_bits,
                },
            },
            "rounds": rounds,
            "reputation": {
                "final": {
                    str(u): {"rho": rec.rho, "eta": rec.eta, "phi": rec.phi, "weight": rec.weight}
                    for u, rec in sorted(self.fc.records.items())
                },
                "phi_trajectory": [
                    {str(u): phi for u, phi in sorted(r.phi.items())} for r in self.rounds
                ],
            },
            "error_rates": rates.to_dict(),
            "op_counts": self.recorder.ops.entity_totals(),
            "comm": {
                "links": self.recorder.comm.link_totals(),
                "logical_per_round": {
                    str(t): c for t, c in self.recorder.comm.logical_per_round().items()
                },
            },
            "leakage": {
                "verdict": "conforms" if self.leakage.conforms else "violates",
                "entities": dict(sorted(self.leakage.verdicts.items())),
            },
            "protocol_errors": self.recorder.errors,
        }

    def report_json(self) -> str:
        return json.dumps(self.report_dict(), sort_keys=True, separators=(",", ":")) + "\n"


# ---------------------------------------------------------------------------
# error-rate estimation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateEstimate:
    estimate: float
    ci_low: float
    ci_high: float
    trials: int

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "ci95": [self.ci_low, self.ci_high],
            "trials": self.trials,
        }


@dataclass(frozen=True)
class ErrorRates:
    q_f: RateEstimate | None
    q_m: RateEstimate | None

    def to_dict(self) -> dict:
        return {
            "q_f": self.q_f.to_dict() if self.q_f else None,
            "q_m": self.q_m.to_dict() if self.q_m else None,
        }


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054) -> RateEstimate:
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials)) / denom
    return RateEstimate(p, max(0.0, center - half), min(1.0, center + half), trials)


def estimate_error_rates(rounds: list[RoundRecord]) -> ErrorRates:
    """Empirical conditional error frequencies with Wilson 95% intervals.

    An estimate is unavailable (None) when its conditioning hypothesis
    never occurred.
    """
    busy_truth = [r for r in rounds if r.truth == PU_PRESENT]
    free_truth = [r for r in rounds if r.truth != PU_PRESENT]
    q_f = None
    q_m = None
    if free_truth:
        false_alarms = sum(1 for r in free_truth if r.result.outcome.decision == 1)
        q_f = wilson_interval(false_alarms, len(free_truth))
    if busy_truth:
        misses = sum(1 for r in busy_truth if r.result.outcome.decision == 0)
        q_m = wilson_interval(misses, len(busy_truth))
    return ErrorRates(q_f, q_m)


# ---------------------------------------------------------------------------
# the driver
# ---------------------------------------------------------------------------


def run_simulation(config: SimulationConfig) -> SimulationResult:
    """Execute one full run; see the module docstring for the shape."""
    sensing = config.sensing
    model, tau = config.resolve_channel()
    profile = sensing.profile
    rngs = spawn_rngs(sensing.seed, ["truth", "rss", "churn", "malice", "loss"])

    keys = derive_pairwise_keys(
        master_seed_bytes(sensing.seed),
        [FC_NAME, GW_NAME, *range(1, sensing.n + 1)],
        config.crypto.domain_bits,
        config.crypto.range_bits,
    )
    recorder = Recorder()
    recorder.start_round(0)
    recorder.set_phase(PHASE_INIT)
    fc, init_msgs = fc_init(tau, profile, keys, recorder)
    gw = gw_init(keys)
    gw_ingest_init(gw, init_msgs, recorder)
    sus = make_su_states(keys)
    used_ids = set(keys.user_ids())

    records: list[RoundRecord] = []
    for t in range(1, sensing.rounds + 1):
        recorder.start_round(t)
        joins: list[int] = []
        leaves: list[int] = []
        if t > 1:
            recorder.set_phase(PHASE_MEMBERSHIP)
            joins, leaves = churn_step(config.churn, rngs["churn"], t, set(fc.live), used_ids)
            if joins or leaves:
                new_sus = handle_membership(fc, gw, joins, leaves, keys, recorder)
                for uid in leaves:
                    del sus[uid]
                sus.update(new_sus)
                used_ids.update(joins)

        recorder.set_phase(PHASE_SENSING)
        truth = PU_PRESENT if rngs["truth"].random() < sensing.busy_prob else 0
        roster = sorted(fc.live)
        draws = generate_rss(model, truth, rngs["rss"], len(roster))
        reported: dict[int, int] = {}
        reports: list[ProtocolMessage] = []
        for uid, rss_q in zip(roster, draws):
            value = apply_malice(config.adversary, uid, rss_q, model, rngs["malice"])
            reported[uid] = value
            reports.append(su_sense_report(sus[uid], value, recorder))
        if sensing.report_loss_prob > 0.0:
            delivered = [m for m in reports if rngs["loss"].random() >= sensing.report_loss_prob]
        else:
            delivered = reports
        zeta = gw_compare(gw, delivered, recorder)
        result = fc_decide(fc, zeta, recorder)
        records.append(
            RoundRecord(
                t=t,
                truth=truth,
                joins=tuple(joins),
                leaves=tuple(leaves),
                roster=tuple(roster),
                reported_rss=reported,
                delivered=tuple(sorted(m.subject for m in delivered)),  # type: ignore[arg-type]
                result=result,
                phi={uid: fc.records[uid].phi for uid in sorted(fc.records)},
            )
        )

    leakage = check_leakage(recorder.view_logs)
    return SimulationResult(
        config, model, tau, records, fc, gw, sus, keys, recorder, leakage
    )


# ---------------------------------------------------------------------------
# conformance of measured counts against the analytical model
# ---------------------------------------------------------------------------


@dataclass
class ConformanceVerdict:
    ok: bool
    mismatches: list[str]

    def __bool__(self) -> bool:
        return self.ok


def verify_computation_counts(result: SimulationResult) -> ConformanceVerdict:
    """Exact per-round operation-count check for every entity.

    Per sensing round with b joins and d delivered reports: the fusion
    center performs 1 decryption plus b (encryption + OPE encryption);
    every reporting user 1 OPE encryption + 1 encryption; the gateway d
    decryptions + 1 encryption, with the b cache refreshes charged to the
    membership phase. Initialization is checked separately: n wrapped
    thresholds cost the fusion center n (OPE + encryption) and the
    gateway n decryptions.
    """
    ops = result.recorder.ops
    bad: list[str] = []

    def expect(actual: int, wanted: int, what: str) -> None:
        if actual != wanted:
            bad.append(f"{what}: measured {actual}, expected {wanted}")

    n0 = result.config.sensing.n
    expect(ops.get(0, FC_NAME, PHASE_INIT, OPE_ENC), n0, "init FC ope_enc")
    expect(ops.get(0, FC_NAME, PHASE_INIT, AEAD_ENC), n0, "init FC aead_enc")
    expect(ops.get(0, GW_NAME, PHASE_INIT, AEAD_DEC), n0, "init GW aead_dec")

    for r in result.rounds:
        t, beta, delivered = r.t, r.beta, len(r.delivered)
        expect(ops.get(t, FC_NAME, PHASE_SENSING, AEAD_DEC), 1, f"round {t} FC aead_dec")
        expect(ops.get(t, FC_NAME, PHASE_SENSING, AEAD_ENC), 0, f"round {t} FC sensing aead_enc")
        expect(ops.get(t, FC_NAME, PHASE_SENSING, OPE_ENC), 0, f"round {t} FC sensing ope_enc")
        expect(ops.get(t, FC_NAME, PHASE_MEMBERSHIP, AEAD_ENC), beta, f"round {t} FC membership aead_enc")
        expect(ops.get(t, FC_NAME, PHASE_MEMBERSHIP, OPE_ENC), beta, f"round {t} FC membership ope_enc")
        expect(ops.get(t, GW_NAME, PHASE_SENSING, AEAD_DEC), delivered, f"round {t} GW aead_dec")
        expect(ops.get(t, GW_NAME, PHASE_SENSING, AEAD_ENC), 1, f"round {t} GW aead_enc")
        expect(ops.get(t, GW_NAME, PHASE_MEMBERSHIP, AEAD_DEC), beta, f"round {t} GW membership aead_dec")
        for uid in r.roster:
            su = user_name(uid)
            expect(ops.get(t, su, PHASE_SENSING, OPE_ENC), 1, f"round {t} {su} ope_enc")
            expect(ops.get(t, su, PHASE_SENSING, AEAD_ENC), 1, f"round {t} {su} aead_enc")
    return ConformanceVerdict(not bad, bad)


def verify_communication_counts(result: SimulationResult) -> ConformanceVerdict:
    """Exact per-round traffic check against the wire-framing model.

    Logical ciphertexts per sensing round must equal delivered + 1; the
    sensing-phase bytes must equal the framing model exactly.
    """
    comm = result.recorder.comm
    range_bits = result.config.crypto.range_bits
    bad: list[str] = []
    for r in result.rounds:
        delivered = len(r.delivered)
        logical = comm.logical.get(r.t, 0)
        if logical != delivered + 1:
            bad.append(f"round {r.t}: {logical} logical ciphertexts, expected {delivered + 1}")
        measured = 8 * comm.round_bytes(r.t, PHASE_SENSING)
        expected = delivered * costs.report_wire_bits(range_bits) + costs.decision_vector_wire_bits(
            len(r.roster)
        )
        if measured != expected:
            bad.append(f"round {r.t}: {measured} sensing bits, framing model expects {expected}")
    return ConformanceVerdict(not bad, bad)
