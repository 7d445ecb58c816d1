"""Wire protocol: frames, server behavior, edge device semantics."""

import socket
import struct

import numpy as np
import pytest

from obfnet import modelio, protocol
from obfnet.data import synth_fixture
from obfnet.data.dataset import split_dataset
from obfnet.errors import DataError, ProtocolError
from obfnet.training import TrainConfig, generate_obfnet_set, train_infnet
from obfnet.zoo import ArchSpec


@pytest.fixture(scope="module")
def blob_world(tmp_path_factory):
    """Trained infnet + 2-member obfuscator set + server on a blob task."""
    ds = synth_fixture("mnist-like", classes=3, per_class=100, seed=3)
    data = split_dataset(ds, seed=2)
    infnet, _ = train_infnet(ArchSpec("mnist-im", num_classes=3), data,
                             TrainConfig(epochs=6, seed=1))
    set_dir = tmp_path_factory.mktemp("obfset")
    generate_obfnet_set(ArchSpec("mnist-om", hidden_width=8, num_classes=3),
                        infnet, data, TrainConfig(epochs=3, seed=40), count=2,
                        out_dir=set_dir, drop_gate=1.0)
    server = protocol.InferenceServer(infnet, bind=("127.0.0.1", 0)).start()
    yield data, infnet, set_dir, server
    server.stop()


class TestFrames:
    def test_request_roundtrip(self):
        sample = np.arange(6, dtype=np.float32).reshape(2, 3)
        rid, decoded = protocol.decode_request(protocol.encode_request(9, sample))
        assert rid == 9
        assert np.array_equal(decoded, sample)

    def test_response_roundtrip(self):
        probs = np.array([0.1, 0.7, 0.2], dtype=np.float32)
        rid, label, decoded = protocol.decode_response(
            protocol.encode_response(4, 1, probs))
        assert (rid, label) == (4, 1)
        assert np.array_equal(decoded, probs)

    def test_error_frame_raises_with_code(self):
        body = protocol.encode_error(2, protocol.ERR_SHAPE_MISMATCH)
        with pytest.raises(ProtocolError) as info:
            protocol.decode_response(body)
        assert info.value.code == protocol.ERR_SHAPE_MISMATCH

    def test_request_carries_no_obfuscation_indicator(self):
        """Byte layout is fully accounted for: header, dims, payload only."""
        sample = np.zeros((2, 2), dtype=np.float32)
        body = protocol.encode_request(1, sample)
        assert len(body) == 4 + 1 + 8 + 1 + 2 * 4 + sample.size * 4
        desc = protocol.describe_frame(body)
        assert set(desc) == {"magic", "length", "kind", "version", "rank",
                             "dims", "header_bytes", "payload_bytes"}

    def test_malformed_payload_rejected(self):
        sample = np.zeros((2, 2), dtype=np.float32)
        body = protocol.encode_request(1, sample)[:-4]
        with pytest.raises(ProtocolError) as info:
            protocol.decode_request(body)
        assert info.value.code == protocol.ERR_MALFORMED

    def test_version_check(self):
        body = bytearray(protocol.encode_request(1, np.zeros(2, dtype=np.float32)))
        body[4] = 99
        with pytest.raises(ProtocolError) as info:
            protocol.decode_request(bytes(body))
        assert info.value.code == protocol.ERR_BAD_VERSION


class TestServer:
    def test_remote_matches_local_bit_for_bit(self, blob_world):
        data, infnet, _, server = blob_world
        with protocol.RemoteClient(server.address) as client:
            for i in range(20):
                x = data.test.samples[i]
                result = client.infer(x)
                local = infnet.forward(x[None], training=False)[0]
                assert np.array_equal(result.probabilities, local)
                assert result.label == int(local.argmax())

    def test_resend_is_idempotent(self, blob_world):
        data, _, _, server = blob_world
        with protocol.RemoteClient(server.address) as client:
            a = client.infer(data.test.samples[0], request_id=123)
            b = client.infer(data.test.samples[0], request_id=123)
            assert a.request_id == b.request_id == 123
            assert np.array_equal(a.probabilities, b.probabilities)

    def test_shape_mismatch_gets_error_and_keeps_connection(self, blob_world):
        _, _, _, server = blob_world
        with protocol.RemoteClient(server.address) as client:
            with pytest.raises(ProtocolError) as info:
                client.infer(np.zeros((3, 3), dtype=np.float32))
            assert info.value.code == protocol.ERR_SHAPE_MISMATCH
            # connection still usable
            result = client.infer(np.zeros((28, 28), dtype=np.float32))
            assert result.label >= 0

    def test_bad_magic_gets_error_and_keeps_connection(self, blob_world):
        _, _, _, server = blob_world
        with socket.create_connection(server.address, timeout=5) as sock:
            protocol.write_frame(sock, b"JUNKJUNKJUNKJUNK")
            body = protocol.read_frame(sock)
            desc = protocol.describe_frame(body)
            assert desc["kind"] == "error" and desc["code"] == protocol.ERR_BAD_MAGIC
            protocol.write_frame(
                sock, protocol.encode_request(7, np.zeros((28, 28), dtype=np.float32)))
            assert protocol.describe_frame(protocol.read_frame(sock))["kind"] == "response"

    def test_oversized_frame_error_then_close(self, blob_world):
        _, _, _, server = blob_world
        with socket.create_connection(server.address, timeout=5) as sock:
            sock.sendall(struct.pack("<I", protocol.DEFAULT_FRAME_CAP + 1))
            body = protocol.read_frame(sock)
            assert protocol.describe_frame(body)["code"] == protocol.ERR_OVERSIZED
            # server closes: either immediate EOF or reset once we write again
            try:
                sock.sendall(b"x" * 8)
                assert sock.recv(1) == b""
            except (ConnectionResetError, BrokenPipeError):
                pass

    def test_interleaved_connections_are_isolated(self, blob_world):
        data, _, _, server = blob_world
        c1 = protocol.RemoteClient(server.address).connect()
        c2 = protocol.RemoteClient(server.address).connect()
        try:
            r1 = c1.infer(data.test.samples[0], request_id=1001)
            r2 = c2.infer(data.test.samples[1], request_id=2002)
            r1b = c1.infer(data.test.samples[2], request_id=1003)
            assert (r1.request_id, r1b.request_id) == (1001, 1003)
            assert r2.request_id == 2002
        finally:
            c1.close()
            c2.close()


class TestSelection:
    def test_single_member_always_zero(self):
        rng = np.random.default_rng(0)
        assert all(protocol.select_obfnet(1, rng) == 0 for _ in range(100))

    def test_uniform_frequencies(self):
        rng = np.random.default_rng(42)
        draws = np.array([protocol.select_obfnet(5, rng) for _ in range(10_000)])
        for index in range(5):
            freq = float((draws == index).mean())
            assert 0.17 <= freq <= 0.23

    def test_seeded_reproducibility(self):
        a = [protocol.select_obfnet(7, np.random.default_rng(3)) for _ in range(20)]
        b = [protocol.select_obfnet(7, np.random.default_rng(3)) for _ in range(20)]
        assert a == b

    def test_empty_set_rejected(self):
        with pytest.raises(DataError):
            protocol.select_obfnet(0, np.random.default_rng(0))


class TestEdgeDevice:
    def test_opt_out_label_matches_backend_raw(self, blob_world):
        data, infnet, _, server = blob_world
        cfg = protocol.EdgeConfig(server=f"{server.address[0]}:{server.address[1]}",
                                  mode="opt-out")
        with protocol.EdgeDevice(cfg) as device:
            for i in range(10):
                result = device.infer(data.test.samples[i])
                local = infnet.forward(data.test.samples[i][None])[0]
                assert result.label == int(local.argmax())

    def test_opt_in_transmits_obfuscated_payload(self, blob_world):
        data, _, set_dir, server = blob_world
        cfg = protocol.EdgeConfig(server=f"{server.address[0]}:{server.address[1]}",
                                  manifest_path=str(set_dir / "manifest.txt"),
                                  mode="opt-in", selection_seed=5)
        device = protocol.EdgeDevice(cfg)
        x = data.test.samples[0]
        payload = device.prepare(x)
        assert payload.shape == x.shape
        assert not np.array_equal(payload, x)
        device.close()

    def test_opt_in_and_opt_out_frames_schema_identical(self, blob_world):
        data, _, set_dir, server = blob_world
        address = f"{server.address[0]}:{server.address[1]}"
        x = data.test.samples[0]
        raw_dev = protocol.EdgeDevice(protocol.EdgeConfig(server=address,
                                                          mode="opt-out"))
        obf_dev = protocol.EdgeDevice(protocol.EdgeConfig(
            server=address, manifest_path=str(set_dir / "manifest.txt"),
            mode="opt-in", selection_seed=1))
        raw_frame = protocol.encode_request(5, raw_dev.prepare(x))
        obf_frame = protocol.encode_request(5, obf_dev.prepare(x))
        assert protocol.describe_frame(raw_frame) == protocol.describe_frame(obf_frame)
        assert raw_frame[:22] == obf_frame[:22]  # identical headers
        assert raw_frame[22:] != obf_frame[22:]  # payload values differ
        raw_dev.close()
        obf_dev.close()

    def test_fresh_draw_per_sample(self, blob_world):
        data, _, set_dir, server = blob_world
        cfg = protocol.EdgeConfig(server=f"{server.address[0]}:{server.address[1]}",
                                  manifest_path=str(set_dir / "manifest.txt"),
                                  mode="opt-in", selection_seed=11)
        device = protocol.EdgeDevice(cfg)
        x = data.test.samples[0]
        payloads = {device.prepare(x).tobytes() for _ in range(12)}
        assert len(payloads) == 2  # both members of the set get used
        device.close()

    def test_opt_in_requires_manifest(self):
        with pytest.raises(DataError):
            protocol.EdgeConfig(server="127.0.0.1:1", mode="opt-in")

    def test_mode_validation(self):
        with pytest.raises(DataError):
            protocol.EdgeConfig(server="127.0.0.1:1", mode="sometimes")


def test_parse_address():
    assert protocol.parse_address("127.0.0.1:7070") == ("127.0.0.1", 7070)
    assert protocol.parse_address(("h", "9")) == ("h", 9)
    with pytest.raises(DataError):
        protocol.parse_address("nope")
