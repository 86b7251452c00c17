import json

import pytest

from ntfp.attestation import (FrameBuffer, LoopbackTransport, Message, MsgType, ProverServer, SimProver,
                              SocketTransport, Verdict, Verifier, VerifierDB, decode, default_firmware, encode)
from ntfp.attestation.protocol import challenge_payload, parse_challenge
from ntfp.chipsim import new_chip
from ntfp.core import TransformParams
from ntfp.errors import EnrollmentConflict, ProtocolError, YieldShortfall
from ntfp.keymask import derive_key, read_mask, write_mask

PARAMS = TransformParams.dnorm(32, 16, 10)
FIRMWARE = default_firmware()
ZONE = 48 * 1024


def setup(ber_f=0.0, seed=1, db=None, prover_id="dev-1"):
    prover = SimProver(prover_id, FIRMWARE, ber_f=ber_f, seed=seed)
    verifier = Verifier(db or VerifierDB(), FIRMWARE, prover.app_addr)
    return verifier, prover


def attest(verifier, prover, prover_id=None, leng=1024):
    return verifier.attest(LoopbackTransport(prover), prover_id or prover.prover_id, prover.app_addr, leng)


class TestFraming:
    def test_layout(self):
        frame = encode(MsgType.ID, b"dev")
        assert frame == b"\x04\x00\x00\x00\x02dev"
        assert decode(frame) == Message(MsgType.ID, b"dev")

    def test_empty_payload(self):
        assert encode(MsgType.HELLO) == b"\x01\x00\x00\x00\x01"

    def test_split_stream(self):
        stream = encode(MsgType.HELLO) + encode(MsgType.RESPONSE, bytes(range(16))) + encode(MsgType.READY)
        buf = FrameBuffer()
        got = []
        for i in range(0, len(stream), 3):
            got += buf.feed(stream[i:i + 3])
        assert [m.type for m in got] == [MsgType.HELLO, MsgType.RESPONSE, MsgType.READY]
        assert got[1].payload == bytes(range(16))

    @pytest.mark.parametrize("frame", [b"\x01\x00", b"\x00\x00\x00\x00\x01", b"\x02\x00\x00\x00\x01",
                                       b"\x01\x00\x00\x00\x09"])
    def test_bad_frames(self, frame):
        with pytest.raises(ProtocolError):
            decode(frame)

    def test_challenge_payload(self):
        p = challenge_payload(bytes(16), 0xC000, 1024)
        assert p[16:] == b"\x00\xc0\x00\x00\x00\x04\x00\x00"
        assert parse_challenge(p) == (bytes(16), 0xC000, 1024)
        with pytest.raises(ProtocolError):
            parse_challenge(p[:-1])


class TestEnroll:
    def test_fresh_prover(self):
        v, p = setup()
        rec = v.enroll(p, PARAMS)
        assert rec.fingerprint.k == 128 and p.prover_id in v.db
        assert p.mask is not None and len(p.mask) == 128

    def test_conflict(self):
        v, p = setup()
        v.enroll(p, PARAMS)
        with pytest.raises(EnrollmentConflict):
            v.enroll(p, PARAMS)

    def test_mask_write_once(self):
        v, p = setup()
        v.enroll(p, PARAMS)
        with pytest.raises(ProtocolError):
            p.install_mask(p.mask)

    def test_yield_shortfall(self):
        v, p = setup()
        with pytest.raises(YieldShortfall):
            v.enroll(p, TransformParams.dnorm(32, 16, 20))
        assert p.prover_id not in v.db

    def test_zone_and_app_disjoint(self):
        p = SimProver("x", FIRMWARE)
        assert p.zone_addr + p.zone_bytes <= p.app_addr


class TestAttest:
    def test_accepted_zero_noise(self):
        v, p = setup()
        v.enroll(p, PARAMS)
        s = attest(v, p)
        assert s.verdict is Verdict.ACCEPTED and s.resp == s.expected

    def test_tamper_rejected(self):
        v, p = setup()
        v.enroll(p, PARAMS)
        p.tamper(100, 0x01)
        assert attest(v, p).verdict is Verdict.REJECTED

    def test_tamper_outside_window_not_seen(self):
        v, p = setup()
        v.enroll(p, PARAMS)
        p.tamper(5000)
        assert attest(v, p, leng=1024).verdict is Verdict.ACCEPTED

    def test_unknown_id_aborts_before_challenge(self):
        v, p = setup()
        sent = []

        class Recording(LoopbackTransport):
            def send(self, frame):
                sent.append(decode(frame).type)
                super().send(frame)

        s = v.attest(Recording(p), "ghost", p.app_addr, 64)
        assert s.verdict is Verdict.ABORTED and s.chal is None
        assert MsgType.CHALLENGE not in sent

    def test_id_mismatch_aborts(self):
        v, p = setup()
        v.enroll(p, PARAMS)
        other = SimProver("dev-2", FIRMWARE, seed=2)
        s = v.attest(LoopbackTransport(other), "dev-1", p.app_addr, 64)
        assert s.verdict is Verdict.ABORTED and s.chal is None

    def test_offline_times_out(self):
        v, p = setup()
        v.enroll(p, PARAMS)
        p.online = False
        s = attest(v, p)
        assert s.verdict is Verdict.ABORTED and "timeout" in s.reason

    def test_window_outside_golden_aborts(self):
        v, p = setup()
        v.enroll(p, PARAMS)
        s = v.attest(LoopbackTransport(p), p.prover_id, 0, 64)
        assert s.verdict is Verdict.ABORTED

    def test_fresh_challenges(self):
        v, p = setup()
        v.enroll(p, PARAMS)
        a, b = attest(v, p), attest(v, p)
        assert a.chal != b.chal and a.resp != b.resp

    def test_replayed_response_rejected(self):
        v, p = setup()
        v.enroll(p, PARAMS)
        recorded = attest(v, p).resp

        class Replay(LoopbackTransport):
            def recv(self, timeout=None):
                msg = super().recv(timeout)
                return Message(MsgType.RESPONSE, recorded) if msg.type is MsgType.RESPONSE else msg

        s = v.attest(Replay(p), p.prover_id, p.app_addr, 1024)
        assert s.verdict is Verdict.REJECTED

    def test_replayed_challenge_reproduces(self):
        # with a fixed nonce the prover's answer is a pure function of key and window
        fixed = lambda n: bytes(n)
        v, p = setup()
        v = Verifier(v.db, FIRMWARE, p.app_addr, nonce_source=fixed)
        v.enroll(p, PARAMS)
        assert attest(v, p).resp == attest(v, p).resp

    def test_noisy_prover(self):
        v, p = setup(ber_f=0.02, seed=5)
        v.enroll(p, PARAMS)
        verdicts = [attest(v, p).verdict for _ in range(200)]
        assert verdicts.count(Verdict.ACCEPTED) == 200

    def test_session_record(self):
        v, p = setup()
        v.enroll(p, PARAMS)
        rec = attest(v, p).to_record()
        assert rec["verdict"] == "accepted" and len(bytes.fromhex(rec["chal"])) == 16
        json.dumps(rec)


class TestDatabase:
    def test_restart_same_verdicts(self, tmp_path):
        path = tmp_path / "db.jsonl"
        fixed = lambda n: b"\x5a" * n
        p = SimProver("dev-1", FIRMWARE, seed=4)
        v1 = Verifier(VerifierDB(path), FIRMWARE, p.app_addr, nonce_source=fixed)
        v1.enroll(p, PARAMS)
        first = attest(v1, p)
        v2 = Verifier(VerifierDB(path), FIRMWARE, p.app_addr, nonce_source=fixed)
        second = attest(v2, p)
        assert first.verdict is second.verdict is Verdict.ACCEPTED
        assert first.expected == second.expected
        assert v2.db.get("dev-1").fingerprint == v1.db.get("dev-1").fingerprint

    def test_append_only(self, tmp_path):
        path = tmp_path / "db.jsonl"
        db = VerifierDB(path)
        v = Verifier(db, FIRMWARE, ZONE)
        for i in range(3):
            v.enroll(SimProver(f"d{i}", FIRMWARE, seed=i), PARAMS)
        lines = path.read_text().splitlines()
        assert [json.loads(line)["prover_id"] for line in lines] == ["d0", "d1", "d2"]
        assert len(VerifierDB(path)) == 3

    def test_conflict_survives_restart(self, tmp_path):
        path = tmp_path / "db.jsonl"
        p = SimProver("dev-1", FIRMWARE, seed=4)
        Verifier(VerifierDB(path), FIRMWARE, p.app_addr).enroll(p, PARAMS)
        with pytest.raises(EnrollmentConflict):
            Verifier(VerifierDB(path), FIRMWARE, p.app_addr).enroll(SimProver("dev-1", FIRMWARE), PARAMS)


class TestProvisioned:
    def test_extracted_key_and_mask(self):
        chip = new_chip(ZONE * 8, 0.0, seed=9, chip_id="dev-9")
        key, mask = derive_key(chip.enrollment, PARAMS)
        blob = write_mask(mask, key)
        p = SimProver("dev-9", FIRMWARE, chip=chip)
        v = Verifier(VerifierDB(), FIRMWARE, p.app_addr)
        v.provision(p, key, read_mask(blob, key))
        assert attest(v, p).verdict is Verdict.ACCEPTED


class TestSocket:
    def test_end_to_end(self):
        v, p = setup(seed=3)
        v.enroll(p, PARAMS)
        with ProverServer(p) as server:
            for _ in range(3):
                with SocketTransport(server.address) as t:
                    s = v.attest(t, p.prover_id, p.app_addr, 512)
                assert s.verdict is Verdict.ACCEPTED
            p.tamper(0)
            with SocketTransport(server.address) as t:
                assert v.attest(t, p.prover_id, p.app_addr, 512).verdict is Verdict.REJECTED

    def test_interleaved_provers(self):
        db = VerifierDB()
        provers = [SimProver(f"p{i}", FIRMWARE, seed=10 + i) for i in range(2)]
        v = Verifier(db, FIRMWARE, ZONE)
        for pr in provers:
            v.enroll(pr, PARAMS)
        with ProverServer(provers[0]) as s0, ProverServer(provers[1]) as s1:
            with SocketTransport(s0.address) as t0, SocketTransport(s1.address) as t1:
                assert v.attest(t0, "p0", ZONE, 64).verdict is Verdict.ACCEPTED
                assert v.attest(t1, "p1", ZONE, 64).verdict is Verdict.ACCEPTED
