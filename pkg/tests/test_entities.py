"""Protocol state machines: init, sensing, decision, membership."""

import copy

import pytest
from hypothesis import given, strategies as st

from lp3pss.crypto import (
    FC,
    GW,
    OpeCiphertext,
    OpeKey,
    aead_decrypt,
    aead_encrypt,
    derive_pairwise_keys,
    ope_encrypt,
)
from lp3pss.entities import (
    MsgPhase,
    ProtocolError,
    ProtocolMessage,
    RoundAborted,
    fc_decide,
    fc_init,
    gw_compare,
    gw_init,
    gw_ingest_init,
    handle_membership,
    make_su_states,
    message_assoc,
    pack_decision_vector,
    su_sense_report,
    unpack_decision_vector,
)
from lp3pss.fusion import CHANNEL_BUSY, CHANNEL_FREE, DetectionProfile
from lp3pss.recording import (
    AEAD_DEC,
    AEAD_ENC,
    FC_NAME,
    GW_NAME,
    OPE_ENC,
    PHASE_MEMBERSHIP,
    PHASE_SENSING,
    Recorder,
    user_name,
)

PROFILE = DetectionProfile(0.1, 0.1)
TAU = 3000


def setup_network(n: int, master_seed: bytes, tau: int = TAU):
    keys = derive_pairwise_keys(master_seed, [FC, GW, *range(1, n + 1)])
    recorder = Recorder()
    recorder.start_round(0)
    fc, msgs = fc_init(tau, PROFILE, keys, recorder)
    gw = gw_init(keys)
    gw_ingest_init(gw, msgs, recorder)
    sus = make_su_states(keys)
    return keys, fc, gw, sus, recorder, msgs


def run_round(fc, gw, sus, recorder, rss: dict[int, int], t: int = 1, drop: set[int] = frozenset()):
    recorder.start_round(t)
    recorder.set_phase(PHASE_SENSING)
    reports = [
        su_sense_report(sus[uid], rss[uid], recorder)
        for uid in sorted(rss)
        if uid not in drop
    ]
    zeta = gw_compare(gw, reports, recorder)
    return fc_decide(fc, zeta, recorder)


class TestInit:
    def test_one_wrapped_threshold_per_user(self, master_seed):
        _, _, _, _, _, msgs = setup_network(3, master_seed)
        assert len(msgs) == 3
        assert all(m.phase is MsgPhase.INIT_C and m.receiver == GW_NAME for m in msgs)

    def test_gw_cache_matches_recomputed_threshold(self, master_seed):
        # white-box: a harness holding the per-user OPE key re-encrypts tau
        keys, _, gw, _, _, _ = setup_network(3, master_seed)
        for uid in (1, 2, 3):
            assert gw.tau_cache[uid] == ope_encrypt(keys.ope_user[uid], TAU)

    def test_inner_ciphertexts_differ_across_users_for_equal_tau(self, master_seed):
        keys, _, _, _, _, _ = setup_network(2, master_seed)
        assert ope_encrypt(keys.ope_user[1], TAU) != ope_encrypt(keys.ope_user[2], TAU)

    def test_tau_out_of_domain_rejected(self, master_seed):
        keys = derive_pairwise_keys(master_seed, [FC, GW, 1])
        with pytest.raises(ValueError):
            fc_init(1 << 16, PROFILE, keys, Recorder())

    def test_initial_lambda_and_weights(self, master_seed):
        _, fc, _, _, _, _ = setup_network(10, master_seed)
        assert fc.lam == 5  # symmetric profile, majority rule
        assert all(rec.weight == 1.0 for rec in fc.records.values())

    def test_view_discipline_is_structural(self, master_seed):
        # the gateway's state can hold OPE ciphertexts but never OPE keys;
        # the threshold lives only at the fusion center
        _, fc, gw, sus, _, _ = setup_network(3, master_seed)
        assert all(isinstance(v, OpeCiphertext) for v in gw.tau_cache.values())
        assert not any(isinstance(v, OpeKey) for v in vars(gw).values())
        for su in sus.values():
            assert not hasattr(su, "tau") and not hasattr(su, "lam")
        assert hasattr(fc, "tau")


class TestSensing:
    def test_report_costs_one_ope_and_one_aead(self, master_seed):
        _, _, _, sus, recorder, _ = setup_network(2, master_seed)
        recorder.start_round(1)
        recorder.set_phase(PHASE_SENSING)
        su_sense_report(sus[1], 100, recorder)
        name = user_name(1)
        assert recorder.ops.get(1, name, PHASE_SENSING, OPE_ENC) == 1
        assert recorder.ops.get(1, name, PHASE_SENSING, AEAD_ENC) == 1

    def test_same_reading_same_inner_different_outer(self, master_seed):
        keys, _, _, sus, recorder, _ = setup_network(1, master_seed)
        recorder.start_round(1)
        recorder.set_phase(PHASE_SENSING)
        m1 = su_sense_report(sus[1], 1234, recorder)
        recorder.start_round(2)
        m2 = su_sense_report(sus[1], 1234, recorder)
        inner1 = aead_decrypt(keys.gw_user[1], m1.body, m1.assoc)
        inner2 = aead_decrypt(keys.gw_user[1], m2.body, m2.assoc)
        assert inner1 == inner2  # deterministic OPE layer
        assert m1.body != m2.body  # fresh nonce outside

    def test_out_of_domain_reading_rejected(self, master_seed):
        _, _, _, sus, recorder, _ = setup_network(1, master_seed)
        with pytest.raises(ValueError):
            su_sense_report(sus[1], 1 << 16, recorder)

    def test_comparison_bits(self, master_seed):
        # tau=120 on plaintexts (100,130,120,119): equality votes busy
        keys = derive_pairwise_keys(master_seed, [FC, GW, 1, 2, 3, 4])
        recorder = Recorder()
        fc, msgs = fc_init(120, PROFILE, keys, recorder)
        gw = gw_init(keys)
        gw_ingest_init(gw, msgs, recorder)
        sus = make_su_states(keys)
        rss = {1: 100, 2: 130, 3: 120, 4: 119}
        result = run_round(fc, gw, sus, recorder, rss)
        assert [result.bits[u] for u in (1, 2, 3, 4)] == [0, 1, 1, 0]

    def test_all_below_threshold_all_zero(self, master_seed):
        _, fc, gw, sus, recorder, _ = setup_network(4, master_seed)
        result = run_round(fc, gw, sus, recorder, {u: 10 * u for u in (1, 2, 3, 4)})
        assert set(result.bits.values()) == {0}
        assert result.outcome.decision == CHANNEL_FREE

    def test_missing_report_still_decides(self, master_seed):
        _, fc, gw, sus, recorder, _ = setup_network(5, master_seed)
        rss = {u: 4000 for u in range(1, 6)}
        result = run_round(fc, gw, sus, recorder, rss, drop={3})
        assert result.present == (1, 2, 4, 5)
        assert 3 not in result.bits
        assert result.outcome.decision == CHANNEL_BUSY
        assert result.outcome.lam == 2  # recomputed over the 4 present users

    def test_unknown_sender_skipped(self, master_seed):
        keys, fc, gw, sus, recorder, _ = setup_network(2, master_seed)
        stranger_keys = derive_pairwise_keys(bytes(32), [FC, GW, 9])
        stranger = make_su_states(stranger_keys)[9]
        recorder.start_round(1)
        recorder.set_phase(PHASE_SENSING)
        reports = [
            su_sense_report(sus[1], 4000, recorder),
            su_sense_report(sus[2], 4000, recorder),
            su_sense_report(stranger, 4000, recorder),
        ]
        zeta = gw_compare(gw, reports, recorder)
        result = fc_decide(fc, zeta, recorder)
        assert result.present == (1, 2)
        assert any(e["reason"] == "report from unknown user" for e in recorder.errors)

    def test_tampered_report_skipped(self, master_seed):
        _, fc, gw, sus, recorder, _ = setup_network(2, master_seed)
        recorder.start_round(1)
        recorder.set_phase(PHASE_SENSING)
        good = su_sense_report(sus[1], 4000, recorder)
        bad = su_sense_report(sus[2], 4000, recorder)
        forged = ProtocolMessage(
            bad.sender, bad.receiver, bad.phase, bad.subject, round=7, body=bad.body
        )  # replayed under the wrong round context
        result = fc_decide(fc, gw_compare(gw, [good, forged], recorder), recorder)
        assert result.present == (1,)


class TestDecision:
    def test_threshold_three_of_five(self, master_seed):
        _, fc, gw, sus, recorder, _ = setup_network(5, master_seed)
        rss = {1: 4000, 2: 4000, 3: 4000, 4: 100, 5: 100}
        result = run_round(fc, gw, sus, recorder, rss)
        assert result.outcome.lam == 3
        assert result.outcome.vote_sum == 3
        assert result.outcome.decision == CHANNEL_BUSY

    def test_or_rule_single_vote(self, master_seed):
        keys = derive_pairwise_keys(master_seed, [FC, GW, *range(1, 6)])
        recorder = Recorder()
        # p_f << p_m pushes alpha high enough that lambda = 1 (OR rule)
        fc, msgs = fc_init(TAU, DetectionProfile(0.01, 0.55), keys, recorder)
        gw = gw_init(keys)
        gw_ingest_init(gw, msgs, recorder)
        sus = make_su_states(keys)
        assert fc.lam == 1
        result = run_round(fc, gw, sus, recorder, {1: 4000, 2: 100, 3: 100, 4: 100, 5: 100})
        assert result.outcome.decision == CHANNEL_BUSY

    def test_aborted_round_leaves_reputation_unchanged(self, master_seed):
        keys, fc, gw, sus, recorder, _ = setup_network(2, master_seed)
        records_before = dict(fc.records)
        recorder.start_round(1)
        recorder.set_phase(PHASE_SENSING)
        assoc = message_assoc(MsgPhase.DECISION_VEC, None, 1)
        forged_body = aead_encrypt(keys.gw_user[1], b"\x03\x03", assoc)  # wrong key entirely
        forged = ProtocolMessage(GW_NAME, FC_NAME, MsgPhase.DECISION_VEC, None, 1, forged_body)
        with pytest.raises(RoundAborted):
            fc_decide(fc, forged, recorder)
        assert fc.records == records_before

    def test_reputation_updates_after_round(self, master_seed):
        _, fc, gw, sus, recorder, _ = setup_network(3, master_seed)
        result = run_round(fc, gw, sus, recorder, {1: 4000, 2: 4000, 3: 100})
        assert result.outcome.decision == CHANNEL_BUSY
        assert fc.records[1].rho == 1 and fc.records[3].eta == 1
        assert fc.records[1].weight > fc.records[3].weight


class TestMembership:
    def test_joins_charge_fc_and_leave_existing_users_alone(self, master_seed):
        keys, fc, gw, sus, recorder, _ = setup_network(10, master_seed)
        su_snapshot = copy.deepcopy(sus)
        recorder.start_round(1)
        recorder.set_phase(PHASE_MEMBERSHIP)
        new_states = handle_membership(fc, gw, [11, 12], [], keys, recorder)
        assert set(new_states) == {11, 12}
        assert recorder.ops.get(1, FC_NAME, PHASE_MEMBERSHIP, OPE_ENC) == 2
        assert recorder.ops.get(1, FC_NAME, PHASE_MEMBERSHIP, AEAD_ENC) == 2
        assert recorder.ops.get(1, GW_NAME, PHASE_MEMBERSHIP, AEAD_DEC) == 2
        # no traffic to any existing user, and their states are untouched
        for uid, snap in su_snapshot.items():
            assert sus[uid] == snap
        for log in recorder.view_logs.values():
            for event in log:
                if event.direction == "received" and event.round == 1:
                    assert event.entity == GW_NAME

    def test_leave_recomputes_lambda(self, master_seed):
        keys, fc, gw, sus, recorder, _ = setup_network(10, master_seed)
        handle_membership(fc, gw, [], [7], keys, recorder)
        assert fc.lam == 5  # ceil(9/2) with symmetric profile
        assert 7 not in fc.live and 7 not in gw.live
        assert 7 not in gw.tau_cache and 7 not in keys.fc_user

    def test_simultaneous_join_and_leave(self, master_seed):
        keys, fc, gw, sus, recorder, _ = setup_network(5, master_seed)
        new_states = handle_membership(fc, gw, [6, 7], [1], keys, recorder)
        assert fc.live == {2, 3, 4, 5, 6, 7}
        assert gw.live == fc.live
        assert fc.lam == 3  # single recomputation at n=6
        sus.update(new_states)
        del sus[1]
        result = run_round(fc, gw, sus, recorder, {u: 4000 for u in fc.live})
        assert result.outcome.decision == CHANNEL_BUSY

    def test_join_of_existing_id_rejected(self, master_seed):
        keys, fc, gw, _, recorder, _ = setup_network(3, master_seed)
        with pytest.raises(ProtocolError):
            handle_membership(fc, gw, [2], [], keys, recorder)

    def test_leave_of_unknown_id_rejected(self, master_seed):
        keys, fc, gw, _, recorder, _ = setup_network(3, master_seed)
        with pytest.raises(ProtocolError):
            handle_membership(fc, gw, [], [9], keys, recorder)

    def test_join_and_leave_overlap_rejected(self, master_seed):
        keys, fc, gw, _, recorder, _ = setup_network(3, master_seed)
        with pytest.raises(ProtocolError):
            handle_membership(fc, gw, [5], [5], keys, recorder)

    def test_joiner_can_report_next_round(self, master_seed):
        keys, fc, gw, sus, recorder, _ = setup_network(2, master_seed)
        sus.update(handle_membership(fc, gw, [3], [], keys, recorder))
        result = run_round(fc, gw, sus, recorder, {1: 100, 2: 100, 3: 4000})
        assert result.bits[3] == 1


class TestPacking:
    @given(st.integers(1, 64), st.data())
    def test_roundtrip(self, n, data):
        roster = sorted(data.draw(st.sets(st.integers(1, 500), min_size=n, max_size=n)))
        present = data.draw(st.sets(st.sampled_from(roster), max_size=len(roster)))
        bits = {uid: data.draw(st.integers(0, 1), label=f"b{uid}") for uid in sorted(present)}
        payload = pack_decision_vector(roster, bits)
        assert len(payload) == 2 * ((len(roster) + 7) // 8)
        assert unpack_decision_vector(roster, payload) == bits

    def test_wrong_size_rejected(self):
        with pytest.raises(ProtocolError):
            unpack_decision_vector([1, 2, 3], b"\x00")
